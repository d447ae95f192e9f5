//! Symmetric moment/cumulant tensors and sparse multivariate polynomials.
//!
//! Tensors are stored once per sorted index multiset and symmetrized on read.
//! Moment/cumulant conversions enumerate set partitions explicitly; Bell
//! numbers stay tiny for the orders supported here (at most 8).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Exponent vector of one monomial; length equals the variable count.
pub type ExponentVector = Vec<u32>;

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// Sparse multivariate polynomial with exact coefficient arithmetic.
///
/// Zero coefficients are never stored; the empty polynomial is the zero
/// polynomial and has degree 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPolynomial {
    nvars: usize,
    terms: BTreeMap<ExponentVector, f64>,
}

impl MultiPolynomial {
    pub fn zero(nvars: usize) -> Self {
        MultiPolynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The monomial `c * x^alpha`.
    pub fn monomial(nvars: usize, alpha: ExponentVector, c: f64) -> Self {
        assert_eq!(alpha.len(), nvars);
        let mut p = Self::zero(nvars);
        p.add_term(alpha, c);
        p
    }

    /// The linear form `coeffs . x`.
    pub fn linear(coeffs: &[f64]) -> Self {
        let nvars = coeffs.len();
        let mut p = Self::zero(nvars);
        for (i, &c) in coeffs.iter().enumerate() {
            let mut alpha = vec![0; nvars];
            alpha[i] = 1;
            p.add_term(alpha, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Max total degree over stored terms; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| a.iter().sum()).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ExponentVector, f64)> {
        self.terms.iter().map(|(a, &c)| (a, c))
    }

    pub fn coefficient(&self, alpha: &[u32]) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Accumulate a term, pruning exact zeros.
    pub fn add_term(&mut self, alpha: ExponentVector, c: f64) {
        assert_eq!(alpha.len(), self.nvars);
        let entry = self.terms.entry(alpha.clone()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&alpha);
        }
    }

    pub fn add(&self, other: &MultiPolynomial) -> Result<MultiPolynomial> {
        if self.nvars != other.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: other.nvars });
        }
        let mut out = self.clone();
        for (a, c) in other.terms() {
            out.add_term(a.clone(), c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> MultiPolynomial {
        let mut out = Self::zero(self.nvars);
        for (a, c) in self.terms() {
            out.add_term(a.clone(), c * s);
        }
        out
    }

    pub fn multiply(&self, other: &MultiPolynomial) -> Result<MultiPolynomial> {
        if self.nvars != other.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: other.nvars });
        }
        let mut out = Self::zero(self.nvars);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                let sum: ExponentVector = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(sum, ca * cb);
            }
        }
        Ok(out)
    }

    /// Partial derivative with respect to variable `i`.
    pub fn partial(&self, i: usize) -> MultiPolynomial {
        let mut out = Self::zero(self.nvars);
        for (a, c) in self.terms() {
            if a[i] == 0 {
                continue;
            }
            let mut b = a.clone();
            b[i] -= 1;
            out.add_term(b, c * a[i] as f64);
        }
        out
    }

    /// Substitute `x -> M x + c` (variable count preserved).
    pub fn compose_affine(&self, m: &Matrix, c: &[f64]) -> Result<MultiPolynomial> {
        if m.rows() != self.nvars || m.cols() != self.nvars || c.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: m.rows() });
        }
        let subs: Vec<MultiPolynomial> = (0..self.nvars)
            .map(|i| {
                let mut lin = MultiPolynomial::linear(m.row(i));
                lin.add_term(vec![0; self.nvars], c[i]);
                lin
            })
            .collect();
        let mut out = Self::zero(self.nvars);
        for (alpha, coeff) in self.terms() {
            let mut prod = MultiPolynomial::constant(self.nvars, coeff);
            for (i, &e) in alpha.iter().enumerate() {
                for _ in 0..e {
                    prod = prod.multiply(&subs[i])?;
                }
            }
            out = out.add(&prod)?;
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: x.len() });
        }
        let mut total = 0.0;
        for (a, c) in self.terms() {
            let mut v = c;
            for (i, &e) in a.iter().enumerate() {
                v *= x[i].powi(e as i32);
            }
            total += v;
        }
        Ok(total)
    }
}

/// All set partitions of `{0, .., n-1}` as lists of blocks.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut current: Vec<Vec<usize>> = Vec::new();
    fn rec(k: usize, n: usize, current: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if k == n {
            out.push(current.clone());
            return;
        }
        for b in 0..current.len() {
            current[b].push(k);
            rec(k + 1, n, current, out);
            current[b].pop();
        }
        current.push(vec![k]);
        rec(k + 1, n, current, out);
        current.pop();
    }
    rec(0, n, &mut current, &mut out);
    out
}

/// Sorted index multisets of length `r` over `0..d`.
pub fn index_multisets(d: usize, r: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, left: usize, d: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i as u8);
            rec(i, left - 1, d, cur, out);
            cur.pop();
        }
    }
    rec(0, r, d, &mut cur, &mut out);
    out
}

/// Symmetric moment or cumulant tensors of a d-variate law, orders 1..=max_order.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSet {
    d: usize,
    max_order: usize,
    tensors: BTreeMap<Vec<u8>, f64>,
}

impl CumulantSet {
    pub fn new(d: usize, max_order: usize) -> Self {
        CumulantSet { d, max_order, tensors: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Entry for an index tuple in any order (symmetrized on read).
    pub fn get(&self, indices: &[usize]) -> f64 {
        let key = Self::key(indices);
        self.tensors.get(&key).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, indices: &[usize], value: f64) {
        assert!(!indices.is_empty() && indices.len() <= self.max_order);
        assert!(indices.iter().all(|&i| i < self.d));
        let key = Self::key(indices);
        if value == 0.0 {
            self.tensors.remove(&key);
        } else {
            self.tensors.insert(key, value);
        }
    }

    fn key(indices: &[usize]) -> Vec<u8> {
        let mut key: Vec<u8> = indices.iter().map(|&i| i as u8).collect();
        key.sort_unstable();
        key
    }

    /// The order-2 tensor as a matrix.
    pub fn order2_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.d, self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                m[(i, j)] = self.get(&[i, j]);
            }
        }
        m
    }

    /// Raw moments of a sample about `center` (origin when `None`), exact
    /// arithmetic over the atoms.
    pub fn empirical_moments(
        sample: &[Vec<f64>],
        max_order: usize,
        center: Option<&[f64]>,
    ) -> Result<CumulantSet> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if max_order < 1 {
            return Err(Error::InvalidOrder("max_order must be >= 1".into()));
        }
        let d = sample[0].len();
        if let Some(c) = center {
            if c.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.len() });
            }
        }
        let n = sample.len() as f64;
        let mut out = CumulantSet::new(d, max_order);
        for r in 1..=max_order {
            for ms in index_multisets(d, r) {
                let mut acc = 0.0;
                for x in sample {
                    let mut prod = 1.0;
                    for &i in &ms {
                        let v = x[i as usize] - center.map_or(0.0, |c| c[i as usize]);
                        prod *= v;
                    }
                    acc += prod;
                }
                let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                out.set(&idx, acc / n);
            }
        }
        Ok(out)
    }

    /// Moments -> cumulants by the set-partition Mobius formula.
    pub fn moments_to_cumulants(&self) -> Result<CumulantSet> {
        if self.max_order < 2 {
            return Err(Error::InvalidOrder("need moments to order >= 2".into()));
        }
        self.convert(|nblocks| {
            let sign = if (nblocks - 1) % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(nblocks as u32 - 1)
        })
    }

    /// Cumulants -> moments (partition sums of products of cumulants).
    pub fn cumulants_to_moments(&self) -> Result<CumulantSet> {
        if self.max_order < 2 {
            return Err(Error::InvalidOrder("need cumulants to order >= 2".into()));
        }
        self.convert(|_| 1.0)
    }

    fn convert(&self, block_weight: impl Fn(usize) -> f64) -> Result<CumulantSet> {
        let mut out = CumulantSet::new(self.d, self.max_order);
        for r in 1..=self.max_order {
            let partitions = set_partitions(r);
            for ms in index_multisets(self.d, r) {
                let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                let mut total = 0.0;
                for pi in &partitions {
                    let mut prod = block_weight(pi.len());
                    for block in pi {
                        let block_idx: Vec<usize> = block.iter().map(|&p| idx[p]).collect();
                        prod *= self.get(&block_idx);
                    }
                    total += prod;
                }
                out.set(&idx, total);
            }
        }
        Ok(out)
    }

    /// Cumulants of `S X` given cumulants of `X` (multilinearity order by
    /// order); `s` is `q x d`.
    pub fn linear_transform(&self, s: &Matrix) -> Result<CumulantSet> {
        if s.cols() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: s.cols() });
        }
        let q = s.rows();
        let mut out = CumulantSet::new(q, self.max_order);
        for r in 1..=self.max_order {
            for ms in index_multisets(q, r) {
                let a: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                let mut total = 0.0;
                // Sum over ordered source tuples.
                let mut b = vec![0usize; r];
                loop {
                    let mut prod = 1.0;
                    for p in 0..r {
                        prod *= s[(a[p], b[p])];
                    }
                    if prod != 0.0 {
                        total += prod * self.get(&b);
                    }
                    let mut p = 0;
                    loop {
                        if p == r {
                            break;
                        }
                        b[p] += 1;
                        if b[p] < self.d {
                            break;
                        }
                        b[p] = 0;
                        p += 1;
                    }
                    if p == r {
                        break;
                    }
                }
                out.set(&a, total);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_sample_moments() {
        let sample = vec![vec![0.0], vec![1.0]];
        let m = CumulantSet::empirical_moments(&sample, 2, None).unwrap();
        assert_eq!(m.get(&[0]), 0.5);
        assert_eq!(m.get(&[0, 0]), 0.5);
    }

    #[test]
    fn single_point_moments_are_outer_powers() {
        let sample = vec![vec![2.0, -1.0]];
        let m = CumulantSet::empirical_moments(&sample, 3, Some(&[1.0, 1.0])).unwrap();
        assert_eq!(m.get(&[0]), 1.0);
        assert_eq!(m.get(&[1]), -2.0);
        assert_eq!(m.get(&[0, 1]), -2.0);
        assert_eq!(m.get(&[0, 0, 1]), -2.0);
        assert_eq!(m.get(&[1, 1, 1]), -8.0);
    }

    #[test]
    fn standard_gaussian_moments_to_cumulants() {
        // m = (0, 1, 0, 3) -> kappa = (0, 1, 0, 0)
        let mut m = CumulantSet::new(1, 4);
        m.set(&[0, 0], 1.0);
        m.set(&[0, 0, 0, 0], 3.0);
        let k = m.moments_to_cumulants().unwrap();
        assert_eq!(k.get(&[0]), 0.0);
        assert_eq!(k.get(&[0, 0]), 1.0);
        assert_eq!(k.get(&[0, 0, 0]), 0.0);
        assert!(k.get(&[0, 0, 0, 0]).abs() < 1e-12);
    }

    #[test]
    fn exp1_moment_cumulant_hand_values() {
        // Hand evaluation of the partition formula for Exp(1):
        // m = (1, 2, 6, 24) <-> kappa = (1, 1, 2, 6).
        let mut m = CumulantSet::new(1, 4);
        m.set(&[0], 1.0);
        m.set(&[0, 0], 2.0);
        m.set(&[0, 0, 0], 6.0);
        m.set(&[0, 0, 0, 0], 24.0);
        let k = m.moments_to_cumulants().unwrap();
        assert!((k.get(&[0]) - 1.0).abs() < 1e-12);
        assert!((k.get(&[0, 0]) - 1.0).abs() < 1e-12);
        assert!((k.get(&[0, 0, 0]) - 2.0).abs() < 1e-12);
        assert!((k.get(&[0, 0, 0, 0]) - 6.0).abs() < 1e-12);
        let back = k.cumulants_to_moments().unwrap();
        for r in 1..=4usize {
            let idx = vec![0usize; r];
            assert!((back.get(&idx) - m.get(&idx)).abs() < 1e-12);
        }
    }

    #[test]
    fn independence_kills_mixed_cumulants() {
        // Product of independent coordinates: moments factorize, so every
        // mixed cumulant must vanish.
        let m1 = [0.5, 1.0, 0.75, 2.0]; // arbitrary univariate moments
        let m2 = [-0.25, 2.0, 0.5, 9.0];
        let mut m = CumulantSet::new(2, 4);
        for r in 1..=4usize {
            for ms in index_multisets(2, r) {
                let c0 = ms.iter().filter(|&&i| i == 0).count();
                let c1 = r - c0;
                let f0 = if c0 == 0 { 1.0 } else { m1[c0 - 1] };
                let f1 = if c1 == 0 { 1.0 } else { m2[c1 - 1] };
                let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                m.set(&idx, f0 * f1);
            }
        }
        let k = m.moments_to_cumulants().unwrap();
        for r in 2..=4usize {
            for ms in index_multisets(2, r) {
                let c0 = ms.iter().filter(|&&i| i == 0).count();
                if c0 > 0 && c0 < r {
                    let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                    assert!(k.get(&idx).abs() < 1e-12, "mixed cumulant {idx:?} nonzero");
                }
            }
        }
    }

    #[test]
    fn poly_basic_arithmetic() {
        let x1 = MultiPolynomial::monomial(2, vec![1, 0], 1.0);
        let sq = x1.multiply(&x1).unwrap();
        assert_eq!(sq.coefficient(&[2, 0]), 1.0);
        assert_eq!(sq.degree(), 2);
        let z = sq.scale(0.0);
        assert!(z.is_zero());
        assert_eq!(z.degree(), 0);
    }

    #[test]
    fn poly_compose_affine() {
        // p(x) = x1 composed with M = 2I, c = (1,): gives 2 x1 + 1.
        let p = MultiPolynomial::monomial(1, vec![1], 1.0);
        let m = Matrix::from_rows(&[vec![2.0]]);
        let q = p.compose_affine(&m, &[1.0]).unwrap();
        assert_eq!(q.coefficient(&[1]), 2.0);
        assert_eq!(q.coefficient(&[0]), 1.0);
    }

    #[test]
    fn poly_eval_examples() {
        let mut p = MultiPolynomial::monomial(1, vec![2], 1.0);
        p.add_term(vec![0], -1.0);
        assert_eq!(p.eval(&[2.0]).unwrap(), 3.0);
        assert_eq!(MultiPolynomial::zero(3).eval(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(p.eval(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn nvars_mismatch_is_an_error() {
        let p = MultiPolynomial::zero(2);
        let q = MultiPolynomial::zero(3);
        assert!(p.add(&q).is_err());
        assert!(p.multiply(&q).is_err());
    }

    #[test]
    fn partition_counts_are_bell_numbers() {
        assert_eq!(set_partitions(1).len(), 1);
        assert_eq!(set_partitions(4).len(), 15);
        assert_eq!(set_partitions(6).len(), 203);
    }
}
