//! Construction and evaluation of the Edgeworth correction polynomials.
//!
//! The polynomials are built once, symbolically: the formal log-CF correction
//! terms (one per cumulant order above two) are exponentiated as a truncated
//! power series in the expansion parameter, and each resulting monomial in
//! the frequency variable is replaced by the matching Hermite tensor, i.e.
//! the polynomial `H_alpha` with `(-d/dx)^alpha phi = H_alpha phi`.
//!
//! Sign/normalization convention: with `chi_r` the order-(r+2) cumulant form
//! divided by (r+2)!, the density is `phi_V(x) (1 + sum_j n^{-j/2} Pj(x))`.
//! This is pinned by the characteristic-function inversion oracle in the test
//! suite (first-order univariate term `kappa3 (x^3 - 3x) / 6`), so no
//! residual sign ambiguity remains at the orders supported here.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mc::{block_mean_se, std_normal_vec, McConfig};
use crate::regions::Ball;
use crate::rng::mix;
use crate::tensors::{factorial, index_multisets, CumulantSet, ExponentVector, MultiPolynomial};

/// Table of Hermite tensor polynomials for a fixed covariance.
#[derive(Debug, Clone)]
pub struct HermiteTensorTable {
    q: usize,
    v_inv: Matrix,
    table: BTreeMap<ExponentVector, MultiPolynomial>,
}

impl HermiteTensorTable {
    /// Build all `H_alpha` with `|alpha| <= max_degree`.
    pub fn build(v: &Matrix, max_degree: u32) -> Result<HermiteTensorTable> {
        let v_inv = linalg::sym_inverse(v).map_err(|_| {
            Error::NotSpd(linalg::min_eigenvalue(v).unwrap_or(f64::NAN))
        })?;
        let q = v.rows();
        let mut table: BTreeMap<ExponentVector, MultiPolynomial> = BTreeMap::new();
        table.insert(vec![0; q], MultiPolynomial::constant(q, 1.0));
        for deg in 1..=max_degree {
            for alpha_u8 in index_multisets(q, deg as usize) {
                let mut alpha = vec![0u32; q];
                for &i in &alpha_u8 {
                    alpha[i as usize] += 1;
                }
                let i = alpha.iter().position(|&e| e > 0).unwrap();
                let mut prev = alpha.clone();
                prev[i] -= 1;
                let h_prev = table.get(&prev).expect("built by degree").clone();
                let lin = MultiPolynomial::linear(v_inv.row(i));
                let h = lin.multiply(&h_prev)?.add(&h_prev.partial(i).scale(-1.0))?;
                table.insert(alpha, h);
            }
        }
        Ok(HermiteTensorTable { q, v_inv, table })
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn v_inverse(&self) -> &Matrix {
        &self.v_inv
    }

    pub fn get(&self, alpha: &[u32]) -> Option<&MultiPolynomial> {
        self.table.get(alpha)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ExponentVector, &MultiPolynomial)> {
        self.table.iter()
    }
}

/// Single Hermite tensor `H_alpha` for covariance `v`.
pub fn hermite_tensor(alpha: &[u32], v: &Matrix) -> Result<MultiPolynomial> {
    let deg: u32 = alpha.iter().sum();
    let table = HermiteTensorTable::build(v, deg)?;
    Ok(table.get(alpha).expect("within built degree").clone())
}

/// Covariance plus the ordered correction polynomials of a ν-term expansion.
#[derive(Debug, Clone)]
pub struct EdgeworthExpansion {
    q: usize,
    v: Matrix,
    v_inv: Matrix,
    v_sqrt: Matrix,
    norm_const: f64,
    terms: Vec<MultiPolynomial>,
    nu: usize,
}

/// Build the expansion polynomials from a cumulant sequence on the
/// standardized-statistic scale. Only cumulants of order `j+2` and below
/// enter the j-th polynomial.
pub fn build_expansion(
    cumulants: &CumulantSet,
    v: &Matrix,
    nu: usize,
) -> Result<EdgeworthExpansion> {
    let q = v.rows();
    if cumulants.dim() != q {
        return Err(Error::DimensionMismatch { expected: q, got: cumulants.dim() });
    }
    if cumulants.max_order() < nu + 2 {
        return Err(Error::InvalidOrder(format!(
            "need cumulants to order {} for nu = {nu}, have {}",
            nu + 2,
            cumulants.max_order()
        )));
    }
    let min_eig = linalg::min_eigenvalue(v)?;
    if min_eig <= 1e-10 {
        return Err(Error::NotSpd(min_eig));
    }

    // chi_r: the order-(r+2) cumulant form in the frequency variable,
    // divided by (r+2)!. Coefficient of t^alpha is kappa_alpha / prod(alpha!).
    let mut chi: Vec<MultiPolynomial> = Vec::with_capacity(nu + 1);
    chi.push(MultiPolynomial::zero(q)); // unused r = 0 slot
    for r in 1..=nu {
        let order = r + 2;
        let mut p = MultiPolynomial::zero(q);
        for ms in index_multisets(q, order) {
            let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
            let kappa = cumulants.get(&idx);
            if kappa == 0.0 {
                continue;
            }
            let mut alpha = vec![0u32; q];
            for &i in &idx {
                alpha[i] += 1;
            }
            let denom: f64 = alpha.iter().map(|&e| factorial(e)).product();
            p.add_term(alpha, kappa / denom);
        }
        chi.push(p);
    }

    // exp(sum_r u^r chi_r) truncated at u^nu, as a u-graded polynomial list.
    let mut series: Vec<MultiPolynomial> =
        (0..=nu).map(|j| if j == 0 { MultiPolynomial::constant(q, 1.0) } else { MultiPolynomial::zero(q) }).collect();
    let base: Vec<MultiPolynomial> = (0..=nu)
        .map(|j| if j == 0 { MultiPolynomial::zero(q) } else { chi[j].clone() })
        .collect();
    let mut power = base.clone();
    for p in 1..=nu {
        for j in p..=nu {
            series[j] = series[j].add(&power[j].scale(1.0 / factorial(p as u32)))?;
        }
        if p < nu {
            // power <- power * base, truncated in the u grade.
            let mut next: Vec<MultiPolynomial> = (0..=nu).map(|_| MultiPolynomial::zero(q)).collect();
            for a in 1..=nu {
                if power[a].is_zero() {
                    continue;
                }
                for b in 1..=(nu - a) {
                    if base[b].is_zero() {
                        continue;
                    }
                    next[a + b] = next[a + b].add(&power[a].multiply(&base[b])?)?;
                }
            }
            power = next;
        }
    }

    // Replace each frequency monomial with the matching Hermite tensor.
    let max_deg = series.iter().map(|p| p.degree()).max().unwrap_or(0);
    let table = HermiteTensorTable::build(v, max_deg)?;
    let mut terms = Vec::with_capacity(nu + 1);
    terms.push(MultiPolynomial::constant(q, 1.0));
    for pi in series.iter().take(nu + 1).skip(1) {
        let mut pj = MultiPolynomial::zero(q);
        for (alpha, coeff) in pi.terms() {
            let h = table.get(alpha).expect("within built degree");
            pj = pj.add(&h.scale(coeff))?;
        }
        terms.push(pj);
    }

    let v_inv = linalg::sym_inverse(v)?;
    let v_sqrt = linalg::sym_sqrt(v)?;
    let det = linalg::sym_det(v)?;
    let norm_const = (2.0 * std::f64::consts::PI).powf(-(q as f64) / 2.0) / det.sqrt();
    Ok(EdgeworthExpansion { q, v: v.clone(), v_inv, v_sqrt, norm_const, terms, nu })
}

impl EdgeworthExpansion {
    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn covariance(&self) -> &Matrix {
        &self.v
    }

    pub fn term(&self, j: usize) -> Result<&MultiPolynomial> {
        self.terms.get(j).ok_or_else(|| Error::OutOfRange(format!("term {j} of nu={}", self.nu)))
    }

    pub fn terms(&self) -> &[MultiPolynomial] {
        &self.terms
    }

    /// Gaussian density `phi_{0,V}(x)`.
    pub fn gaussian_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, got: x.len() });
        }
        let vx = self.v_inv.matvec(x);
        let quad: f64 = x.iter().zip(&vx).map(|(a, b)| a * b).sum();
        Ok(self.norm_const * (-0.5 * quad).exp())
    }

    /// The j-th density term `Pj(x) phi_{0,V}(x)`.
    pub fn density_term(&self, j: usize, x: &[f64]) -> Result<f64> {
        let pj = self.term(j)?;
        Ok(pj.eval(x)? * self.gaussian_density(x)?)
    }

    /// Monte Carlo estimate of the signed measure `int_B Pj phi`, with
    /// standard error; deterministic given the seed.
    pub fn signed_measure(&self, j: usize, region: &Ball, mc: &McConfig) -> Result<(f64, f64)> {
        let pj = self.term(j)?.clone();
        if region.dim() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, got: region.dim() });
        }
        mc.validate()?;
        let root = self.v_sqrt.clone();
        let q = self.q;
        block_mean_se(mc, move |rng| {
            let z = std_normal_vec(rng, q);
            let x = root.matvec(&z);
            if region.contains(&x).unwrap_or(false) {
                pj.eval(&x).unwrap_or(0.0)
            } else {
                0.0
            }
        })
    }

    /// Deterministic quadrature for the signed measure, available for q <= 2.
    /// Half-lines and intervals (q=1) use composite Gauss-Legendre; disks
    /// (q=2) use a polar product rule.
    pub fn signed_measure_quadrature(&self, j: usize, region: &Ball) -> Result<f64> {
        let pj = self.term(j)?.clone();
        if region.dim() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, got: region.dim() });
        }
        if region.is_all_space() {
            // Hermite tensors of positive degree integrate to zero.
            return Ok(if j == 0 { 1.0 } else { 0.0 });
        }
        match self.q {
            1 => {
                let sigma = self.v[(0, 0)].sqrt();
                let f = |x: f64| {
                    pj.eval(&[x]).unwrap() * self.gaussian_density(&[x]).unwrap()
                };
                if let Some(t) = region.half_line_threshold() {
                    let lo = (-14.0 * sigma).min(t - 1.0);
                    Ok(integrate_1d(&f, lo, t))
                } else {
                    let (c, r) = region.center_radius().expect("ball in q=1");
                    let lo = (c[0] - r).max(-14.0 * sigma);
                    let hi = (c[0] + r).min(14.0 * sigma);
                    if lo >= hi {
                        return Ok(0.0);
                    }
                    Ok(integrate_1d(&f, lo, hi))
                }
            }
            2 => {
                let (c, r) = region
                    .center_radius()
                    .ok_or_else(|| Error::Precondition("q=2 quadrature needs a ball".into()))?;
                let (nodes, weights) = gauss_legendre(64);
                let ntheta = 256usize;
                let mut total = 0.0;
                for k in 0..ntheta {
                    let theta = 2.0 * std::f64::consts::PI * (k as f64) / ntheta as f64;
                    let (ct, st) = (theta.cos(), theta.sin());
                    let mut radial = 0.0;
                    for (&s, &w) in nodes.iter().zip(&weights) {
                        // map [-1,1] -> [0,r]
                        let rho = 0.5 * r * (s + 1.0);
                        let x = [c[0] + rho * ct, c[1] + rho * st];
                        radial += w
                            * 0.5
                            * r
                            * rho
                            * pj.eval(&x).unwrap()
                            * self.gaussian_density(&x).unwrap();
                    }
                    total += radial * (2.0 * std::f64::consts::PI / ntheta as f64);
                }
                Ok(total)
            }
            q => Err(Error::Precondition(format!("quadrature oracle limited to q <= 2, got {q}"))),
        }
    }

    /// `sum_{j<=max_order} n^{-j/2} Pj(-Phi)(B)` by Monte Carlo, with a
    /// combined standard error. Per-term seeds are derived from `mc.seed`.
    pub fn probability(
        &self,
        region: &Ball,
        n: u64,
        max_order: usize,
        mc: &McConfig,
    ) -> Result<(f64, f64)> {
        if n < 1 {
            return Err(Error::Precondition("n must be >= 1".into()));
        }
        if max_order > self.nu {
            return Err(Error::OutOfRange(format!("order {max_order} > nu {}", self.nu)));
        }
        let mut total = 0.0;
        let mut var = 0.0;
        for j in 0..=max_order {
            let term_mc = McConfig { seed: mix(mc.seed, j as u64), ..*mc };
            let (est, se) = self.signed_measure(j, region, &term_mc)?;
            let scale = (n as f64).powf(-(j as f64) / 2.0);
            total += scale * est;
            var += scale * scale * se * se;
        }
        Ok((total, var.sqrt()))
    }

    /// Quadrature version of [`EdgeworthExpansion::probability`] (q <= 2).
    pub fn probability_quadrature(&self, region: &Ball, n: u64, max_order: usize) -> Result<f64> {
        if max_order > self.nu {
            return Err(Error::OutOfRange(format!("order {max_order} > nu {}", self.nu)));
        }
        let mut total = 0.0;
        for j in 0..=max_order {
            total +=
                (n as f64).powf(-(j as f64) / 2.0) * self.signed_measure_quadrature(j, region)?;
        }
        Ok(total)
    }

    /// Largest coefficient, in absolute value, over the polynomials
    /// `P1, ..., P_nu`.
    pub fn xi_nu(&self) -> Result<f64> {
        if self.nu < 1 {
            return Err(Error::InvalidOrder("xi_nu needs nu >= 1".into()));
        }
        Ok(self
            .terms
            .iter()
            .skip(1)
            .map(|p| p.max_abs_coefficient())
            .fold(0.0, f64::max))
    }
}

/// Composite 16-point Gauss-Legendre over 256 panels.
fn integrate_1d(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(16);
    let panels = 256;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for (&x, &w) in nodes.iter().zip(&weights) {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
