//! Smooth functions of k sample means: the statistic catalog, the graded
//! polynomial (Taylor) approximation around the sample means, approximate
//! cumulants of that polynomial under resampling, and the region preimages
//! used to move between the statistic scale and the mean scale.
//!
//! Variables are flattened as `j * d + i` for coordinate `i` of sample `j`,
//! and the resampling variable attached to slot `(j, i)` is
//! `n^{1/2} (mean_{ji}^* - mean_{ji})`, with `n` the pooled size.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::stream_rng;
use crate::tensors::{factorial, index_multisets, set_partitions, CumulantSet, MultiPolynomial};

/// A centered smooth statistic `g(x_1, .., x_k; anchors)` with an analytic
/// derivative oracle at the anchor point.
///
/// `derivative` takes a multiset of flattened variable indices and must be
/// symmetric in them; `value` must vanish when evaluated at the anchors.
pub trait SmoothStatistic: Sync + Send {
    fn name(&self) -> String;
    /// Number of samples.
    fn k(&self) -> usize;
    /// Per-sample dimension.
    fn d(&self) -> usize;
    /// Output dimension.
    fn q(&self) -> usize;

    fn value(&self, xs: &[Vec<f64>], anchors: &[Vec<f64>]) -> Result<Vec<f64>>;

    /// Partial derivative of component `component` with respect to the
    /// flattened variables in `vars` (a multiset), at the anchor point.
    fn derivative(&self, component: usize, vars: &[usize], anchors: &[Vec<f64>]) -> Result<f64>;
}

pub fn flatten(xs: &[Vec<f64>]) -> Vec<f64> {
    xs.iter().flat_map(|v| v.iter().copied()).collect()
}

pub fn split(flat: &[f64], k: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if flat.len() != k * d {
        return Err(Error::DimensionMismatch { expected: k * d, got: flat.len() });
    }
    Ok((0..k).map(|j| flat[j * d..(j + 1) * d].to_vec()).collect())
}

fn check_shapes(stat: &dyn SmoothStatistic, anchors: &[Vec<f64>]) -> Result<()> {
    if anchors.len() != stat.k() {
        return Err(Error::DimensionMismatch { expected: stat.k(), got: anchors.len() });
    }
    for a in anchors {
        if a.len() != stat.d() {
            return Err(Error::DimensionMismatch { expected: stat.d(), got: a.len() });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Statistic catalog
// ---------------------------------------------------------------------------

/// `(x - anchor) / sigma`, k = d = q = 1. Linear, so its polynomial
/// approximation is exact.
pub struct StandardizedMean {
    pub sigma: f64,
}

impl SmoothStatistic for StandardizedMean {
    fn name(&self) -> String {
        "standardized-mean".into()
    }

    fn k(&self) -> usize {
        1
    }

    fn d(&self) -> usize {
        1
    }

    fn q(&self) -> usize {
        1
    }

    fn value(&self, xs: &[Vec<f64>], anchors: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(vec![(xs[0][0] - anchors[0][0]) / self.sigma])
    }

    fn derivative(&self, _component: usize, vars: &[usize], _anchors: &[Vec<f64>]) -> Result<f64> {
        Ok(if vars == [0] { 1.0 / self.sigma } else { 0.0 })
    }
}

/// `(x_1 - anchor_1) - (x_2 - anchor_2)`, k = 2, d = q = 1.
pub struct MeanDifference;

impl SmoothStatistic for MeanDifference {
    fn name(&self) -> String {
        "mean-difference".into()
    }

    fn k(&self) -> usize {
        2
    }

    fn d(&self) -> usize {
        1
    }

    fn q(&self) -> usize {
        1
    }

    fn value(&self, xs: &[Vec<f64>], anchors: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(vec![(xs[0][0] - anchors[0][0]) - (xs[1][0] - anchors[1][0])])
    }

    fn derivative(&self, _component: usize, vars: &[usize], _anchors: &[Vec<f64>]) -> Result<f64> {
        Ok(match vars {
            [0] => 1.0,
            [1] => -1.0,
            _ => 0.0,
        })
    }
}

/// `root_inv * (x - anchor)`, k = 1, q = d: the studentized mean vector with
/// a fixed (sample-estimated) inverse square-root covariance.
pub struct StudentizedMeanVector {
    pub root_inv: Matrix,
}

impl SmoothStatistic for StudentizedMeanVector {
    fn name(&self) -> String {
        "studentized-mean-vector".into()
    }

    fn k(&self) -> usize {
        1
    }

    fn d(&self) -> usize {
        self.root_inv.cols()
    }

    fn q(&self) -> usize {
        self.root_inv.rows()
    }

    fn value(&self, xs: &[Vec<f64>], anchors: &[Vec<f64>]) -> Result<Vec<f64>> {
        let diff: Vec<f64> = xs[0].iter().zip(&anchors[0]).map(|(x, a)| x - a).collect();
        Ok(self.root_inv.matvec(&diff))
    }

    fn derivative(&self, component: usize, vars: &[usize], _anchors: &[Vec<f64>]) -> Result<f64> {
        Ok(if vars.len() == 1 { self.root_inv[(component, vars[0])] } else { 0.0 })
    }
}

/// Variance-type statistic on paired observations `(X, X^2)`:
/// `(x_2 - x_1^2) - (a_2 - a_1^2)` with k = 1, d = 2, q = 1. Genuinely
/// quadratic in the means.
pub struct VarianceStatistic;

impl SmoothStatistic for VarianceStatistic {
    fn name(&self) -> String {
        "variance".into()
    }

    fn k(&self) -> usize {
        1
    }

    fn d(&self) -> usize {
        2
    }

    fn q(&self) -> usize {
        1
    }

    fn value(&self, xs: &[Vec<f64>], anchors: &[Vec<f64>]) -> Result<Vec<f64>> {
        let v = xs[0][1] - xs[0][0] * xs[0][0];
        let va = anchors[0][1] - anchors[0][0] * anchors[0][0];
        Ok(vec![v - va])
    }

    fn derivative(&self, _component: usize, vars: &[usize], anchors: &[Vec<f64>]) -> Result<f64> {
        Ok(match vars {
            [0] => -2.0 * anchors[0][0],
            [1] => 1.0,
            [0, 0] => -2.0,
            _ => 0.0,
        })
    }
}

/// Replaces the analytic derivative oracle of `inner` with nested central
/// differences (step `1e-5 * (1 + ||anchor||)`, one Richardson step).
///
/// Accuracy disclaimer: the fixed step makes orders 1-2 accurate to roughly
/// 1e-6 relative, but the nested quotient loses about five digits per extra
/// order; orders >= 3 are indicative only. Intended for experimentation, not
/// for production expansions.
pub struct FiniteDifference<S: SmoothStatistic> {
    pub inner: S,
}

impl<S: SmoothStatistic> FiniteDifference<S> {
    fn nested_fd(
        &self,
        component: usize,
        vars: &[usize],
        point: &mut Vec<f64>,
        anchors: &[Vec<f64>],
        h: f64,
    ) -> Result<f64> {
        match vars.split_last() {
            None => {
                let xs = split(point, self.inner.k(), self.inner.d())?;
                Ok(self.inner.value(&xs, anchors)?[component])
            }
            Some((&v, rest)) => {
                point[v] += h;
                let up = self.nested_fd(component, rest, point, anchors, h)?;
                point[v] -= 2.0 * h;
                let down = self.nested_fd(component, rest, point, anchors, h)?;
                point[v] += h;
                Ok((up - down) / (2.0 * h))
            }
        }
    }
}

impl<S: SmoothStatistic> SmoothStatistic for FiniteDifference<S> {
    fn name(&self) -> String {
        format!("fd({})", self.inner.name())
    }

    fn k(&self) -> usize {
        self.inner.k()
    }

    fn d(&self) -> usize {
        self.inner.d()
    }

    fn q(&self) -> usize {
        self.inner.q()
    }

    fn value(&self, xs: &[Vec<f64>], anchors: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.inner.value(xs, anchors)
    }

    fn derivative(&self, component: usize, vars: &[usize], anchors: &[Vec<f64>]) -> Result<f64> {
        let flat = flatten(anchors);
        let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = 1e-5 * (1.0 + norm);
        let coarse = self.nested_fd(component, vars, &mut flat.clone(), anchors, h)?;
        let fine = self.nested_fd(component, vars, &mut flat.clone(), anchors, h / 2.0)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }
}

// ---------------------------------------------------------------------------
// Taylor expansion
// ---------------------------------------------------------------------------

/// Recorded envelope for the truncation error of the polynomial
/// approximation: `constant * n^{-exponent} (log n)^{log_power}` on the ball
/// of radius `log n`.
#[derive(Debug, Clone, Copy)]
pub struct RemainderBound {
    pub constant: f64,
    pub exponent: f64,
    pub log_power: u32,
}

/// The graded polynomial approximation of `n^{1/2} g(anchor + n^{-1/2} x)`:
/// grade-s parts carry an implicit `n^{-s/2}` factor and have total degree
/// `s + 1`.
#[derive(Debug, Clone)]
pub struct StatisticExpansion {
    q: usize,
    nvars: usize,
    nu: usize,
    /// `graded[component][grade]`, grades `0..=nu+1`.
    graded: Vec<Vec<MultiPolynomial>>,
    pub remainder: RemainderBound,
}

impl StatisticExpansion {
    pub fn out_dim(&self) -> usize {
        self.q
    }

    pub fn in_dim(&self) -> usize {
        self.nvars
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn grade(&self, component: usize, grade: usize) -> &MultiPolynomial {
        &self.graded[component][grade]
    }

    pub fn grades(&self) -> &[Vec<MultiPolynomial>] {
        &self.graded
    }

    /// Collapse the grading numerically at a given sample size.
    pub fn collapsed(&self, n: u64) -> Result<Vec<MultiPolynomial>> {
        let nf = n as f64;
        let mut out = Vec::with_capacity(self.q);
        for comp in &self.graded {
            let mut acc = MultiPolynomial::zero(self.nvars);
            for (g, part) in comp.iter().enumerate() {
                acc = acc.add(&part.scale(nf.powf(-(g as f64) / 2.0)))?;
            }
            out.push(acc);
        }
        Ok(out)
    }

    pub fn eval(&self, n: u64, x: &[f64]) -> Result<Vec<f64>> {
        let nf = n as f64;
        let mut out = Vec::with_capacity(self.q);
        for comp in &self.graded {
            let mut acc = 0.0;
            for (g, part) in comp.iter().enumerate() {
                acc += nf.powf(-(g as f64) / 2.0) * part.eval(x)?;
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Expand `n^{1/2} g(anchor + n^{-1/2} x)` to grades `0..=nu+1` (derivative
/// orders `1..=nu+2`) and record an empirical envelope constant for the
/// truncation error, estimated by a deterministic sup over the ball of
/// radius `log n`.
pub fn taylor_expand(
    stat: &dyn SmoothStatistic,
    anchors: &[Vec<f64>],
    n: u64,
    nu: usize,
) -> Result<StatisticExpansion> {
    check_shapes(stat, anchors)?;
    if n < 1 {
        return Err(Error::Precondition("n must be >= 1".into()));
    }
    let q = stat.q();
    let nvars = stat.k() * stat.d();
    let at_anchor = stat.value(anchors, anchors)?;
    if at_anchor.iter().any(|v| v.abs() > 1e-10) {
        return Err(Error::Precondition(
            "statistic must vanish at the anchors (centered form)".into(),
        ));
    }

    let mut graded: Vec<Vec<MultiPolynomial>> = Vec::with_capacity(q);
    for comp in 0..q {
        let mut comp_grades = Vec::with_capacity(nu + 2);
        for s in 1..=(nu + 2) {
            let mut part = MultiPolynomial::zero(nvars);
            for ms in index_multisets(nvars, s) {
                let vars: Vec<usize> = ms.iter().map(|&v| v as usize).collect();
                let deriv = stat.derivative(comp, &vars, anchors)?;
                if deriv == 0.0 {
                    continue;
                }
                let mut alpha = vec![0u32; nvars];
                for &v in &vars {
                    alpha[v] += 1;
                }
                let denom: f64 = alpha.iter().map(|&e| factorial(e)).product();
                part.add_term(alpha, deriv / denom);
            }
            comp_grades.push(part);
        }
        graded.push(comp_grades);
    }

    let expansion = StatisticExpansion {
        q,
        nvars,
        nu,
        graded,
        remainder: RemainderBound { constant: 0.0, exponent: (nu as f64 + 2.0) / 2.0, log_power: nu as u32 + 3 },
    };
    let constant = remainder_constant(stat, anchors, n, &expansion)?;
    Ok(StatisticExpansion { remainder: RemainderBound { constant, ..expansion.remainder }, ..expansion })
}

/// Sup of `|n^{1/2} g(anchor + n^{-1/2} x) - A1(x)|` over a fixed point set
/// in the ball of radius `log n`, normalized by the claimed envelope.
fn remainder_constant(
    stat: &dyn SmoothStatistic,
    anchors: &[Vec<f64>],
    n: u64,
    expansion: &StatisticExpansion,
) -> Result<f64> {
    let nf = n as f64;
    let radius = nf.ln().max(1.0);
    let nvars = expansion.nvars;
    let mut rng = stream_rng(0xfeed_beef, 0);
    let mut points: Vec<Vec<f64>> = vec![vec![0.0; nvars]];
    for axis in 0..nvars {
        let mut p = vec![0.0; nvars];
        p[axis] = radius;
        points.push(p.clone());
        p[axis] = -radius;
        points.push(p);
    }
    for _ in 0..256 {
        let dir: Vec<f64> = (0..nvars).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        let r = radius * rng.gen::<f64>().powf(1.0 / nvars as f64);
        points.push(dir.iter().map(|v| v / norm * r).collect());
    }
    let envelope = nf.powf(-expansion.remainder.exponent) * nf.ln().powi(expansion.remainder.log_power as i32);
    let mut worst: f64 = 0.0;
    for x in &points {
        let shifted: Vec<Vec<f64>> = anchors
            .iter()
            .enumerate()
            .map(|(j, a)| {
                a.iter()
                    .enumerate()
                    .map(|(i, &av)| av + x[j * stat.d() + i] / nf.sqrt())
                    .collect()
            })
            .collect();
        let exact: Vec<f64> = stat.value(&shifted, anchors)?.iter().map(|v| v * nf.sqrt()).collect();
        let approx = expansion.eval(n, x)?;
        let gap = exact
            .iter()
            .zip(&approx)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap / envelope);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Approximate cumulants
// ---------------------------------------------------------------------------

/// Cumulants of the polynomial approximation under resampling, standardized
/// so the leading covariance is the identity.
///
/// `etas` holds the reduced sequence: the order-r entry is
/// `n^{(r-2)/2} kappa_r` for `r >= 3` (`n^{1/2} kappa_1` for r = 1), so each
/// entry is O(1) and the expansion machinery applies the explicit `n^{-j/2}`
/// powers itself. `raw` holds the unscaled cumulants of the standardized
/// statistic.
#[derive(Debug, Clone)]
pub struct ApproxCumulants {
    pub etas: CumulantSet,
    pub raw: CumulantSet,
    /// Leading covariance of the linear part, before standardization.
    pub w: Matrix,
    /// `w^{-1/2}`, the applied standardization.
    pub whitener: Matrix,
    pub n: u64,
}

/// Joint cumulants of the resampling variables: zero across samples, zero at
/// order one, `n^{p/2} n_j^{1-p} kappa-hat_p` within sample `j` at order
/// `2 <= p <= cap`, and zero above the cap (relative order below n^{-nu/2}).
struct XCumulants<'a> {
    d: usize,
    n: f64,
    n_js: &'a [usize],
    sample_cumulants: &'a [CumulantSet],
    cap: usize,
}

impl XCumulants<'_> {
    /// `counts` is an exponent vector over the flattened variables.
    fn get(&self, counts: &[u32]) -> f64 {
        let p: u32 = counts.iter().sum();
        if p < 2 || p as usize > self.cap {
            return 0.0;
        }
        let mut sample = None;
        let mut coords: Vec<usize> = Vec::with_capacity(p as usize);
        for (v, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let j = v / self.d;
            match sample {
                None => sample = Some(j),
                Some(s) if s != j => return 0.0,
                _ => {}
            }
            for _ in 0..c {
                coords.push(v % self.d);
            }
        }
        let j = sample.expect("p >= 2");
        let nj = self.n_js[j] as f64;
        self.n.powf(p as f64 / 2.0) * nj.powf(1.0 - p as f64)
            * self.sample_cumulants[j].get(&coords)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Joint raw moments of monomials in the resampling variables, from the
/// cumulant recursion over sub-multisets containing a fixed slot. Memoized
/// on the exponent vector.
struct MomentTable<'a> {
    x: XCumulants<'a>,
    memo: HashMap<Vec<u32>, f64>,
}

impl MomentTable<'_> {
    fn moment(&mut self, beta: &[u32]) -> f64 {
        if beta.iter().all(|&c| c == 0) {
            return 1.0;
        }
        if let Some(&m) = self.memo.get(beta) {
            return m;
        }
        let v0 = beta.iter().position(|&c| c > 0).unwrap();
        // Sum over sub-multisets S containing one copy from slot v0:
        // m_beta = sum_S mult(S) kappa_S m_{beta \ S}.
        let nvars = beta.len();
        let mut total = 0.0;
        let mut s = vec![0u32; nvars];
        s[v0] = 1;
        loop {
            // multiplicity: choose which copies join S (one copy of v0 fixed)
            let mut mult = binomial(beta[v0] - 1, s[v0] - 1);
            for v in 0..nvars {
                if v != v0 {
                    mult *= binomial(beta[v], s[v]);
                }
            }
            if mult != 0.0 {
                let kappa = self.x.get(&s);
                if kappa != 0.0 {
                    let rest: Vec<u32> = beta.iter().zip(&s).map(|(b, c)| b - c).collect();
                    total += mult * kappa * self.moment(&rest);
                }
            }
            // odometer over s with s[v] <= beta[v], s[v0] >= 1
            let mut v = 0;
            loop {
                if v == nvars {
                    break;
                }
                s[v] += 1;
                if s[v] <= beta[v] {
                    break;
                }
                s[v] = if v == v0 { 1 } else { 0 };
                v += 1;
            }
            if v == nvars {
                break;
            }
        }
        self.memo.insert(beta.to_vec(), total);
        total
    }

    fn poly_expectation(&mut self, p: &MultiPolynomial) -> f64 {
        let mut acc = 0.0;
        for (alpha, coeff) in p.terms() {
            acc += coeff * self.moment(alpha);
        }
        acc
    }
}

/// Compute the approximate cumulant sequence of the statistic's polynomial
/// approximation under resampling, to order `nu + 2`, standardized to
/// identity leading covariance.
///
/// `sample_cumulants[j]` are the central cumulants of the atoms of sample j
/// (order `nu + 2` or more); `anchors` are the sample means.
pub fn approximate_cumulants(
    stat: &dyn SmoothStatistic,
    anchors: &[Vec<f64>],
    sample_cumulants: &[CumulantSet],
    n_js: &[usize],
    nu: usize,
) -> Result<ApproxCumulants> {
    check_shapes(stat, anchors)?;
    let k = stat.k();
    let d = stat.d();
    let q = stat.q();
    if sample_cumulants.len() != k || n_js.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: sample_cumulants.len().min(n_js.len()) });
    }
    for c in sample_cumulants {
        if c.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: c.dim() });
        }
        if c.max_order() < nu + 2 {
            return Err(Error::InvalidOrder(format!(
                "need sample cumulants to order {}, have {}",
                nu + 2,
                c.max_order()
            )));
        }
    }
    if n_js.iter().any(|&nj| nj < 2) {
        return Err(Error::Precondition("every n_j must be >= 2".into()));
    }
    let n_max = *n_js.iter().max().unwrap();
    let n_min = *n_js.iter().min().unwrap();
    if n_max > 100 * n_min {
        return Err(Error::Precondition(format!(
            "sample sizes too unbalanced: max/min = {}/{}",
            n_max, n_min
        )));
    }
    let n: usize = n_js.iter().sum();
    let nf = n as f64;

    let expansion = taylor_expand(stat, anchors, n as u64, nu)?;
    let components = expansion.collapsed(n as u64)?;

    let x = XCumulants { d, n: nf, n_js, sample_cumulants, cap: nu + 2 };

    // Leading covariance from the linear (grade-0) parts only.
    let nvars = k * d;
    let mut lin = Matrix::zeros(q, nvars);
    for a in 0..q {
        for v in 0..nvars {
            let mut e = vec![0u32; nvars];
            e[v] = 1;
            lin[(a, v)] = expansion.grade(a, 0).coefficient(&e);
        }
    }
    let mut k2 = Matrix::zeros(nvars, nvars);
    for v in 0..nvars {
        for u in 0..nvars {
            let mut e = vec![0u32; nvars];
            e[v] += 1;
            e[u] += 1;
            k2[(v, u)] = x.get(&e);
        }
    }
    let w = lin.matmul(&k2).matmul(&lin.transpose());
    let w_min = linalg::min_eigenvalue(&w)?;
    if w_min <= 1e-10 {
        return Err(Error::DegenerateStatistic(w_min));
    }
    let whitener = linalg::sym_inv_sqrt(&w)?;

    // Joint cumulants of the statistic components via the partition Mobius
    // formula over raw moments of products.
    let mut table = MomentTable { x, memo: HashMap::new() };
    let max_order = nu + 2;
    let mut stat_cumulants = CumulantSet::new(q, max_order);
    for r in 1..=max_order {
        let partitions = set_partitions(r);
        for ms in index_multisets(q, r) {
            let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
            let mut total = 0.0;
            for pi in &partitions {
                let sign = if (pi.len() - 1) % 2 == 0 { 1.0 } else { -1.0 };
                let mut prod = sign * factorial(pi.len() as u32 - 1);
                for block in pi {
                    let mut block_poly = MultiPolynomial::constant(nvars, 1.0);
                    for &pos in block {
                        block_poly = block_poly.multiply(&components[idx[pos]])?;
                    }
                    prod *= table.poly_expectation(&block_poly);
                    if prod == 0.0 {
                        break;
                    }
                }
                total += prod;
            }
            stat_cumulants.set(&idx, total);
        }
    }

    let raw = stat_cumulants.linear_transform(&whitener)?;
    let mut etas = CumulantSet::new(q, max_order);
    for r in 1..=max_order {
        let scale = match r {
            1 => nf.sqrt(),
            2 => 1.0,
            _ => nf.powf((r as f64 - 2.0) / 2.0),
        };
        for ms in index_multisets(q, r) {
            let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
            let v = raw.get(&idx);
            if v != 0.0 {
                etas.set(&idx, scale * v);
            }
        }
    }

    Ok(ApproxCumulants { etas, raw, w, whitener, n: n as u64 })
}

// ---------------------------------------------------------------------------
// Region preimages
// ---------------------------------------------------------------------------

/// Whether `n^{1/2} g(anchor + n^{-1/2} x) in B` — the exact preimage
/// predicate on the mean-increment scale (`x` flattened, length k*d).
pub fn region_membership(
    stat: &dyn SmoothStatistic,
    anchors: &[Vec<f64>],
    b: &crate::regions::Ball,
    n: u64,
    x: &[f64],
) -> Result<bool> {
    check_shapes(stat, anchors)?;
    if b.dim() != stat.q() {
        return Err(Error::DimensionMismatch { expected: stat.q(), got: b.dim() });
    }
    let nf = n as f64;
    let xs = split(x, stat.k(), stat.d())?;
    let shifted: Vec<Vec<f64>> = anchors
        .iter()
        .zip(&xs)
        .map(|(a, xj)| a.iter().zip(xj).map(|(av, xv)| av + xv / nf.sqrt()).collect())
        .collect();
    let val: Vec<f64> = stat.value(&shifted, anchors)?.iter().map(|v| v * nf.sqrt()).collect();
    b.contains(&val)
}

/// Preimage predicate on the truncated/standardized scale: `x` belongs to
/// the transformed region iff `z` with per-sample blocks
/// `z_j = vhat_j^{-1/2} x_j - n^{1/2} ymeans_j` satisfies the plain
/// predicate.
pub fn region_dagger_membership(
    stat: &dyn SmoothStatistic,
    anchors: &[Vec<f64>],
    b: &crate::regions::Ball,
    n: u64,
    x: &[f64],
    vhat_blocks: &[Matrix],
    ymeans: &[Vec<f64>],
) -> Result<bool> {
    let k = stat.k();
    let d = stat.d();
    if vhat_blocks.len() != k || ymeans.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: vhat_blocks.len().min(ymeans.len()) });
    }
    let xs = split(x, k, d)?;
    let nf = n as f64;
    let mut z = Vec::with_capacity(k * d);
    for j in 0..k {
        let inv_root = linalg::sym_inv_sqrt(&vhat_blocks[j])?;
        let t = inv_root.matvec(&xs[j]);
        for (i, ti) in t.iter().enumerate() {
            z.push(ti - nf.sqrt() * ymeans[j][i]);
        }
    }
    region_membership(stat, anchors, b, n, &z)
}
