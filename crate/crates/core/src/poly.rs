//! Polynomial constraints `f(Θ)` in the upper-diagonal entries of a
//! covariance matrix.
//!
//! A constraint is a constant `a0` plus monomials, each a coefficient times a
//! multiset of index pairs `(u, v)` with `u ≤ v`. Repeated pairs encode powers.
//!
//! # Text format
//!
//! ```text
//! constraint := a0 ( ';' term )*
//! term       := coeff [ '*' ] pair pair*
//! pair       := '(' u ',' v ')'
//! ```
//!
//! Indices in the text format are 1-based; `(v,u)` is accepted and
//! canonicalized to `(u,v)`. Whitespace is ignored. The tetrad
//! `θ14 θ23 − θ13 θ24` is written `0 ; 1*(1,4)(2,3) ; -1*(1,3)(2,4)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An unordered coordinate pair, stored with `u ≤ v` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairIndex {
    u: usize,
    v: usize,
}

impl PairIndex {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            PairIndex { u: a, v: b }
        } else {
            PairIndex { u: b, v: a }
        }
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn v(&self) -> usize {
        self.v
    }

    /// Position in the row-major enumeration of upper-diagonal pairs of a
    /// `p × p` matrix.
    pub fn position(&self, p: usize) -> usize {
        self.u * (2 * p - self.u + 1) / 2 + (self.v - self.u)
    }
}

impl fmt::Display for PairIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.u + 1, self.v + 1)
    }
}

/// Number of upper-diagonal coordinates, `p(p+1)/2`.
pub fn pair_count(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Upper-diagonal pairs in row-major order, matching [`PairIndex::position`].
pub fn upper_pairs(p: usize) -> Vec<PairIndex> {
    let mut out = Vec::with_capacity(pair_count(p));
    for u in 0..p {
        for v in u..p {
            out.push(PairIndex { u, v });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    /// Sorted multiset of pairs.
    pub pairs: Vec<PairIndex>,
}

impl Monomial {
    pub fn degree(&self) -> usize {
        self.pairs.len()
    }

    fn value(&self, theta: &DMatrix<f64>) -> f64 {
        self.pairs
            .iter()
            .fold(self.coeff, |acc, pr| acc * theta[(pr.u, pr.v)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyConstraint {
    p: usize,
    a0: f64,
    monomials: Vec<Monomial>,
}

impl PolyConstraint {
    /// Builds a constraint, canonicalizing each multiset and merging
    /// duplicates. Monomials whose merged coefficient is zero are dropped.
    pub fn new<I>(p: usize, a0: f64, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Vec<PairIndex>)>,
    {
        if !a0.is_finite() {
            return Err(Error::Domain("constant term is not finite".into()));
        }
        let mut merged: BTreeMap<Vec<PairIndex>, f64> = BTreeMap::new();
        for (coeff, mut pairs) in terms {
            if pairs.is_empty() {
                return Err(Error::Domain("monomial with no factors; use a0 for constants".into()));
            }
            if !coeff.is_finite() {
                return Err(Error::Domain("coefficient is not finite".into()));
            }
            if let Some(bad) = pairs.iter().find(|pr| pr.v >= p) {
                return Err(Error::Domain(format!("pair {bad} outside dimension {p}")));
            }
            pairs.sort();
            *merged.entry(pairs).or_insert(0.0) += coeff;
        }
        let monomials: Vec<Monomial> = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(pairs, coeff)| Monomial { coeff, pairs })
            .collect();
        if monomials.is_empty() {
            return Err(Error::Domain("constraint must be a non-constant polynomial".into()));
        }
        Ok(PolyConstraint { p, a0, monomials })
    }

    /// The tetrad `θ_uz θ_vw − θ_uw θ_vz` for distinct 0-based indices.
    pub fn tetrad(p: usize, u: usize, v: usize, w: usize, z: usize) -> Result<Self> {
        let idx = [u, v, w, z];
        for i in 0..4 {
            if idx[i] >= p {
                return Err(Error::Domain(format!("tetrad index {} outside dimension {p}", idx[i])));
            }
            for j in 0..i {
                if idx[i] == idx[j] {
                    return Err(Error::Domain(format!("tetrad indices must be distinct, got {idx:?}")));
                }
            }
        }
        Self::new(
            p,
            0.0,
            [
                (1.0, vec![PairIndex::new(u, z), PairIndex::new(v, w)]),
                (-1.0, vec![PairIndex::new(u, w), PairIndex::new(v, z)]),
            ],
        )
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn constant(&self) -> f64 {
        self.a0
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    /// Degree `m`: the largest multiset size.
    pub fn degree(&self) -> usize {
        self.monomials.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    fn check_dim(&self, theta: &DMatrix<f64>) -> Result<()> {
        if theta.nrows() != self.p || theta.ncols() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: theta.nrows().max(theta.ncols()),
            });
        }
        Ok(())
    }

    /// `f(Θ)`; reads the upper triangle only. PD is not required.
    pub fn evaluate(&self, theta: &DMatrix<f64>) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.monomials.iter().map(|m| m.value(theta)).sum::<f64>() + self.a0)
    }

    /// `∇f(Θ)` over upper-diagonal coordinates by the multiplicity rule: a
    /// pair appearing `e` times contributes `e · a · θ^{e-1} · (other factors)`.
    pub fn gradient(&self, theta: &DMatrix<f64>) -> Result<GradientVector> {
        self.check_dim(theta)?;
        let mut entries = vec![0.0; pair_count(self.p)];
        for mono in &self.monomials {
            let pairs = &mono.pairs;
            let mut i = 0;
            while i < pairs.len() {
                let target = pairs[i];
                let mult = pairs[i..].iter().take_while(|&&q| q == target).count();
                let mut d = mono.coeff * mult as f64;
                for _ in 1..mult {
                    d *= theta[(target.u, target.v)];
                }
                for q in pairs.iter().filter(|&&q| q != target) {
                    d *= theta[(q.u, q.v)];
                }
                entries[target.position(self.p)] += d;
                i += mult;
            }
        }
        Ok(GradientVector { p: self.p, entries })
    }

    /// `alpha · self + beta · other`.
    pub fn combine(&self, alpha: f64, other: &PolyConstraint, beta: f64) -> Result<Self> {
        if other.p != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: other.p });
        }
        let terms = self
            .monomials
            .iter()
            .map(|m| (alpha * m.coeff, m.pairs.clone()))
            .chain(other.monomials.iter().map(|m| (beta * m.coeff, m.pairs.clone())));
        Self::new(self.p, alpha * self.a0 + beta * other.a0, terms)
    }

    /// Parses the plain-text format (1-based indices) for dimension `p`.
    pub fn parse(src: &str, p: usize) -> Result<Self> {
        Parser { src: src.as_bytes(), pos: 0 }.constraint(p)
    }
}

impl fmt::Display for PolyConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.a0)?;
        for m in &self.monomials {
            write!(f, " ; {} * ", m.coeff)?;
            for pr in &m.pairs {
                write!(f, "{pr}")?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exp_sign = (c == b'-' || c == b'+')
                && self.pos > start
                && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign
                || ((c == b'-' || c == b'+') && self.pos == start)
            {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => {
                self.pos = start;
                self.err(format!("expected a number, found {text:?}"))
            }
        }
    }

    fn index(&mut self, p: usize) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<usize>() {
            Ok(i) if (1..=p).contains(&i) => Ok(i - 1),
            Ok(i) => {
                self.pos = start;
                self.err(format!("index {i} outside 1..={p}"))
            }
            Err(_) => {
                self.pos = start;
                self.err("expected a 1-based index")
            }
        }
    }

    fn pair(&mut self, p: usize) -> Result<PairIndex> {
        self.expect(b'(')?;
        let a = self.index(p)?;
        self.expect(b',')?;
        let b = self.index(p)?;
        self.expect(b')')?;
        Ok(PairIndex::new(a, b))
    }

    fn constraint(mut self, p: usize) -> Result<PolyConstraint> {
        let a0 = self.number()?;
        let mut terms = Vec::new();
        loop {
            match self.peek() {
                None => break,
                Some(b';') => self.pos += 1,
                Some(_) => return self.err("expected ';' or end of input"),
            }
            let coeff = self.number()?;
            if self.peek() == Some(b'*') {
                self.pos += 1;
            }
            let mut pairs = vec![self.pair(p)?];
            while self.peek() == Some(b'(') {
                pairs.push(self.pair(p)?);
            }
            terms.push((coeff, pairs));
        }
        PolyConstraint::new(p, a0, terms)
    }
}

/// `∇f(Θ)` indexed by upper-diagonal pairs (length `p(p+1)/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    p: usize,
    entries: Vec<f64>,
}

impl GradientVector {
    pub fn get(&self, pair: PairIndex) -> f64 {
        self.entries[pair.position(self.p)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0.0)
    }
}
