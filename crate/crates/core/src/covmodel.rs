//! Covariance models and centered Gaussian samples.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{Purpose, SeedStream};

/// A strictly positive definite `p × p` covariance matrix `Θ`.
///
/// Only the upper triangle of the input is read; the stored matrix is its
/// exact mirror, so `theta()[(u, v)] == theta()[(v, u)]` bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct CovModel {
    theta: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl CovModel {
    /// Builds a model from an explicit matrix (upper triangle is authoritative).
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        let p = theta.nrows();
        if theta.ncols() != p {
            return Err(Error::InvalidModel(format!(
                "covariance must be square, got {}x{}",
                p,
                theta.ncols()
            )));
        }
        if p < 2 {
            return Err(Error::InvalidModel(format!("dimension must be at least 2, got {p}")));
        }
        let mut sym = DMatrix::zeros(p, p);
        for u in 0..p {
            for v in u..p {
                let x = theta[(u, v)];
                if !x.is_finite() {
                    return Err(Error::InvalidModel(format!("entry ({u},{v}) is not finite")));
                }
                sym[(u, v)] = x;
                sym[(v, u)] = x;
            }
        }
        let chol = match Cholesky::new(sym.clone()) {
            Some(c) => c.unpack(),
            None => {
                return Err(Error::NotPositiveDefinite {
                    index: first_bad_pivot(&sym),
                    pivot: 0.0,
                })
            }
        };
        for i in 0..p {
            let pivot = chol[(i, i)] * chol[(i, i)];
            if !(pivot > 0.0) {
                return Err(Error::NotPositiveDefinite { index: i, pivot });
            }
        }
        Ok(CovModel { theta: sym, chol })
    }

    /// One-factor covariance `Θ = Ψ + L Lᵀ` with `Ψ = diag(uniqueness)`.
    pub fn one_factor(loadings: &[f64], uniqueness: &[f64]) -> Result<Self> {
        let p = loadings.len();
        if uniqueness.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: uniqueness.len() });
        }
        if let Some((i, psi)) = uniqueness.iter().enumerate().find(|(_, &psi)| !(psi > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "uniqueness entry {i} must be positive, got {psi}"
            )));
        }
        let theta = DMatrix::from_fn(p, p, |u, v| {
            let psi = if u == v { uniqueness[u] } else { 0.0 };
            psi + loadings[u] * loadings[v]
        });
        Self::new(theta)
    }

    /// One-factor covariance with the uniqueness chosen so that every
    /// diagonal entry equals one (requires `|loading| < 1`).
    pub fn one_factor_unit_diagonal(loadings: &[f64]) -> Result<Self> {
        let psi: Vec<f64> = loadings.iter().map(|l| 1.0 - l * l).collect();
        Self::one_factor(loadings, &psi)
    }

    /// Unit diagonal, every off-diagonal entry equal to `rho ∈ [0, 1)`.
    pub fn equicorrelation(p: usize, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Domain(format!("equicorrelation rho must lie in [0, 1), got {rho}")));
        }
        if p < 2 {
            return Err(Error::InvalidModel(format!("dimension must be at least 2, got {p}")));
        }
        Self::new(DMatrix::from_fn(p, p, |u, v| if u == v { 1.0 } else { rho }))
    }

    pub fn identity(p: usize) -> Result<Self> {
        Self::equicorrelation(p, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    #[inline]
    pub fn entry(&self, u: usize, v: usize) -> f64 {
        self.theta[(u, v)]
    }

    /// Lower-triangular Cholesky factor.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Smallest Cholesky pivot `L_ii²`; strictly positive for every model.
    pub fn min_cholesky_pivot(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.chol[(i, i)] * self.chol[(i, i)])
            .fold(f64::INFINITY, f64::min)
    }

    /// Draws `n` i.i.d. rows from `N_p(0, Θ)` as `L z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SampleMatrix {
        let p = self.dim();
        let mut data = Vec::with_capacity(n * p);
        let mut z = vec![0.0; p];
        for _ in 0..n {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for u in 0..p {
                let mut acc = 0.0;
                for k in 0..=u {
                    acc += self.chol[(u, k)] * z[k];
                }
                data.push(acc);
            }
        }
        SampleMatrix { n, p, data }
    }
}

fn first_bad_pivot(sym: &DMatrix<f64>) -> usize {
    // Leading principal minors: the first non-PD one locates the failing pivot.
    let p = sym.nrows();
    for k in 1..=p {
        let sub = sym.view((0, 0), (k, k)).clone_owned();
        if Cholesky::new(sub).is_none() {
            return k - 1;
        }
    }
    p - 1
}

/// Draws `n` rows from the model on the `Data` stream `index` of `seed`.
pub fn sample_gaussian(model: &CovModel, n: usize, seed: SeedStream, index: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::InsufficientSample { n, required: 1 });
    }
    let mut rng = seed.rng(Purpose::Data, index);
    Ok(model.sample(n, &mut rng))
}

/// `n × p` matrix of observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InsufficientSample { n: 0, required: 1 });
        }
        let p = rows[0].len();
        let mut data = Vec::with_capacity(n * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: row.len() });
            }
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("row {i}, column {j} is not finite")));
            }
            data.extend_from_slice(row);
        }
        Ok(SampleMatrix { n, p, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    /// `Θ̂ = n⁻¹ Σ_i X_i X_iᵀ`, without mean-centering.
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut s = DMatrix::zeros(p, p);
        for row in self.rows() {
            for u in 0..p {
                for v in u..p {
                    s[(u, v)] += row[u] * row[v];
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        for u in 0..p {
            for v in u..p {
                let x = s[(u, v)] * inv_n;
                s[(u, v)] = x;
                s[(v, u)] = x;
            }
        }
        s
    }
}
