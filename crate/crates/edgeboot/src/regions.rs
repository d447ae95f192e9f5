//! The concrete region class: balls in R^q plus half-lines in the q=1 case,
//! boundary epsilon-neighborhoods, the Gaussian boundary-mass estimate, the
//! eigenvalue selection lemma, and the boundary-shell probability experiment
//! for graded polynomial maps of a Gaussian vector.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mc::{std_normal_vec, McConfig};
use crate::rng::stream_rng;
use crate::tensors::MultiPolynomial;

/// A closed ball in R^q, the whole space (infinite radius sentinel), or a
/// half-line `(-inf, t]` when q = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    q: usize,
    kind: RegionKind,
}

#[derive(Debug, Clone, PartialEq)]
enum RegionKind {
    Ball { center: Vec<f64>, radius: f64 },
    HalfLine { threshold: f64 },
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Ball> {
        if !(radius > 0.0) {
            return Err(Error::Precondition("ball radius must be positive".into()));
        }
        Ok(Ball { q: center.len(), kind: RegionKind::Ball { center, radius } })
    }

    /// The whole of R^q (radius = +inf sentinel).
    pub fn all_space(q: usize) -> Ball {
        Ball { q, kind: RegionKind::Ball { center: vec![0.0; q], radius: f64::INFINITY } }
    }

    /// The half-line `(-inf, t]` in R^1.
    pub fn half_line(threshold: f64) -> Ball {
        Ball { q: 1, kind: RegionKind::HalfLine { threshold } }
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn is_all_space(&self) -> bool {
        matches!(self.kind, RegionKind::Ball { radius, .. } if radius.is_infinite())
    }

    pub fn is_half_line(&self) -> bool {
        matches!(self.kind, RegionKind::HalfLine { .. })
    }

    pub fn half_line_threshold(&self) -> Option<f64> {
        match self.kind {
            RegionKind::HalfLine { threshold } => Some(threshold),
            _ => None,
        }
    }

    pub fn center_radius(&self) -> Option<(&[f64], f64)> {
        match &self.kind {
            RegionKind::Ball { center, radius } => Some((center, *radius)),
            _ => None,
        }
    }

    /// The translate `y + B`.
    pub fn translate(&self, y: &[f64]) -> Result<Ball> {
        if y.len() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, got: y.len() });
        }
        Ok(match &self.kind {
            RegionKind::Ball { center, radius } => Ball {
                q: self.q,
                kind: RegionKind::Ball {
                    center: center.iter().zip(y).map(|(c, v)| c + v).collect(),
                    radius: *radius,
                },
            },
            RegionKind::HalfLine { threshold } => Ball::half_line(threshold + y[0]),
        })
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, got: x.len() });
        }
        Ok(match &self.kind {
            RegionKind::Ball { center, radius } => {
                if radius.is_infinite() {
                    true
                } else {
                    let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                    d2.sqrt() <= *radius
                }
            }
            RegionKind::HalfLine { threshold } => x[0] <= *threshold,
        })
    }

    /// Whether `x` lies within `eps` of the boundary.
    pub fn in_boundary_neighborhood(&self, x: &[f64], eps: f64) -> Result<bool> {
        if x.len() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, got: x.len() });
        }
        if eps < 0.0 {
            return Err(Error::Precondition("eps must be non-negative".into()));
        }
        match &self.kind {
            RegionKind::Ball { center, radius } => {
                if radius.is_infinite() {
                    return Err(Error::NoBoundary);
                }
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok((d2.sqrt() - radius).abs() < eps)
            }
            RegionKind::HalfLine { threshold } => Ok((x[0] - threshold).abs() < eps),
        }
    }
}

/// Monte Carlo mass of the boundary eps-neighborhood of `b` under N(0, V).
pub fn gaussian_boundary_mass(
    b: &Ball,
    v: &Matrix,
    eps: f64,
    mc: &McConfig,
) -> Result<(f64, f64)> {
    mc.validate()?;
    if eps == 0.0 {
        return Ok((0.0, 0.0));
    }
    let root = linalg::sym_sqrt(v)?;
    let q = b.dim();
    if root.rows() != q {
        return Err(Error::DimensionMismatch { expected: q, got: root.rows() });
    }
    indicator_probability(mc, |rng| {
        let z = std_normal_vec(rng, q);
        let x = root.matvec(&z);
        b.in_boundary_neighborhood(&x, eps).unwrap_or(false)
    })
}

/// Block-parallel indicator probability with binomial standard error; counts
/// are integers, so the result is independent of the worker count.
pub(crate) fn indicator_probability<F>(mc: &McConfig, event: F) -> Result<(f64, f64)>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> bool + Sync,
{
    mc.validate()?;
    let nblocks = mc.samples.div_ceil(mc.block_size);
    let hits: u64 = (0..nblocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = stream_rng(mc.seed, blk);
            let count = mc.block_size.min(mc.samples - blk * mc.block_size);
            let mut h = 0u64;
            for _ in 0..count {
                if event(&mut rng) {
                    h += 1;
                }
            }
            h
        })
        .sum();
    let n = mc.samples as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    Ok((p, se))
}

/// Pick, among the rank-one downdates `W_j = W_0 - v_j v_j^T` of
/// `W_0 = sum v_i v_i^T`, the one with the largest minimum eigenvalue.
/// Requires `d > q` and SPD `W_0`; the returned eigenvalue is then positive.
pub fn lemma1_select(vs: &[Vec<f64>]) -> Result<(usize, f64)> {
    let d = vs.len();
    if d == 0 {
        return Err(Error::EmptySample);
    }
    let q = vs[0].len();
    if d <= q {
        return Err(Error::Precondition(format!("need d > q, got d={d}, q={q}")));
    }
    let mut w0 = Matrix::zeros(q, q);
    for v in vs {
        if v.len() != q {
            return Err(Error::DimensionMismatch { expected: q, got: v.len() });
        }
        for i in 0..q {
            for j in 0..q {
                w0[(i, j)] += v[i] * v[j];
            }
        }
    }
    if linalg::min_eigenvalue(&w0)? <= 1e-12 {
        return Err(Error::NotSpd(linalg::min_eigenvalue(&w0)?));
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (j, v) in vs.iter().enumerate() {
        let mut wj = w0.clone();
        for a in 0..q {
            for b in 0..q {
                wj[(a, b)] -= v[a] * v[b];
            }
        }
        let lam = linalg::min_eigenvalue(&wj)?;
        if lam > best.1 {
            best = (j, lam);
        }
    }
    Ok(best)
}

/// A q-vector of graded polynomials in d variables: grade-g parts are scaled
/// by n^{-g/2} at evaluation, the grade-0 part is linear, and the Gram matrix
/// of the linear coefficients must be well conditioned.
#[derive(Debug, Clone)]
pub struct PolynomialMap {
    d: usize,
    /// `graded[alpha][g]` is the grade-g part of component alpha.
    graded: Vec<Vec<MultiPolynomial>>,
    b1: f64,
    b2: f64,
    w: Matrix,
}

impl PolynomialMap {
    /// `graded[alpha][g]`: grade-g part of component alpha, in d variables.
    /// `b1` bounds every coefficient in absolute value; `b2` bounds the
    /// spectrum of the linear-part Gram matrix from both sides.
    pub fn new(graded: Vec<Vec<MultiPolynomial>>, b1: f64, b2: f64) -> Result<PolynomialMap> {
        let q = graded.len();
        if q == 0 {
            return Err(Error::EmptySample);
        }
        let d = graded[0].first().map(|p| p.nvars()).unwrap_or(0);
        let mut coeff_max: f64 = 0.0;
        for comp in &graded {
            for part in comp {
                if part.nvars() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: part.nvars() });
                }
                coeff_max = coeff_max.max(part.max_abs_coefficient());
            }
            let lead = &comp[0];
            if lead.degree() > 1 || lead.coefficient(&vec![0; d]) != 0.0 {
                return Err(Error::Precondition(
                    "grade-0 part must be linear with no constant term".into(),
                ));
            }
        }
        if coeff_max > b1 {
            return Err(Error::Precondition(format!(
                "coefficient bound violated: {coeff_max} > b1 = {b1}"
            )));
        }
        // W = sum_i c_{alpha i} c_{beta i} over the linear coefficients.
        let mut w = Matrix::zeros(q, q);
        let lin: Vec<Vec<f64>> = graded
            .iter()
            .map(|comp| {
                (0..d)
                    .map(|i| {
                        let mut e = vec![0u32; d];
                        e[i] = 1;
                        comp[0].coefficient(&e)
                    })
                    .collect()
            })
            .collect();
        for a in 0..q {
            for b in 0..q {
                w[(a, b)] = (0..d).map(|i| lin[a][i] * lin[b][i]).sum();
            }
        }
        let lam_min = linalg::min_eigenvalue(&w)?;
        let lam_max = linalg::max_eigenvalue(&w)?;
        if lam_min < 1.0 / b2 - 1e-12 || lam_max > b2 + 1e-12 {
            return Err(Error::Precondition(format!(
                "Gram spectrum [{lam_min}, {lam_max}] outside [1/{b2}, {b2}]"
            )));
        }
        Ok(PolynomialMap { d, graded, b1, b2, w })
    }

    pub fn out_dim(&self) -> usize {
        self.graded.len()
    }

    pub fn in_dim(&self) -> usize {
        self.d
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn gram(&self) -> &Matrix {
        &self.w
    }

    /// Evaluate at `z` for sample size `n` (grades collapse as n^{-g/2}).
    pub fn eval(&self, n: f64, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.graded.len());
        for comp in &self.graded {
            let mut acc = 0.0;
            for (g, part) in comp.iter().enumerate() {
                acc += n.powf(-(g as f64) / 2.0) * part.eval(z)?;
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Per-region estimates of the boundary-shell event probability
/// `P{ ||Z|| <= b log n, pmap(Z) in (boundary B)^(n^-beta) }` and their sup.
#[derive(Debug, Clone)]
pub struct ShellProbabilities {
    pub per_region: Vec<(f64, f64)>,
    pub sup: f64,
    pub sup_se: f64,
}

pub fn prop1_probability(
    pmap: &PolynomialMap,
    regions: &[Ball],
    beta: f64,
    b: f64,
    n: u64,
    mc: &McConfig,
) -> Result<ShellProbabilities> {
    mc.validate()?;
    if !(beta > 0.0) {
        return Err(Error::Precondition("beta must be positive".into()));
    }
    if pmap.out_dim() > pmap.in_dim() {
        return Err(Error::Precondition("need q <= d".into()));
    }
    for r in regions {
        if r.dim() != pmap.out_dim() {
            return Err(Error::DimensionMismatch { expected: pmap.out_dim(), got: r.dim() });
        }
    }
    let nf = n as f64;
    let eps = nf.powf(-beta);
    let norm_cap = b * nf.ln();
    let d = pmap.in_dim();
    let nblocks = mc.samples.div_ceil(mc.block_size);
    let hits: Vec<u64> = (0..nblocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = stream_rng(mc.seed, blk);
            let count = mc.block_size.min(mc.samples - blk * mc.block_size);
            let mut h = vec![0u64; regions.len()];
            for _ in 0..count {
                let z = std_normal_vec(&mut rng, d);
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > norm_cap {
                    continue;
                }
                let p = pmap.eval(nf, &z).expect("dims checked");
                for (k, region) in regions.iter().enumerate() {
                    if region.in_boundary_neighborhood(&p, eps).unwrap_or(false) {
                        h[k] += 1;
                    }
                }
            }
            h
        })
        .reduce(
            || vec![0u64; regions.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let total = mc.samples as f64;
    let per_region: Vec<(f64, f64)> = hits
        .iter()
        .map(|&h| {
            let p = h as f64 / total;
            (p, (p * (1.0 - p) / total).sqrt())
        })
        .collect();
    let (sup, sup_se) = per_region
        .iter()
        .copied()
        .fold((0.0f64, 0.0f64), |acc, (p, se)| if p > acc.0 { (p, se) } else { acc });
    Ok(ShellProbabilities { per_region, sup, sup_se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn contains_basics() {
        let b = Ball::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!(b.contains(&[0.0, 0.0]).unwrap());
        assert!(b.contains(&[1.0, 0.0]).unwrap()); // closed ball
        assert!(!b.contains(&[1.0 + 1e-12, 0.0]).unwrap());
        assert!(b.contains(&[0.5]).is_err());
    }

    #[test]
    fn translation_identity() {
        let b = Ball::new(vec![0.3, -0.7], 1.4).unwrap();
        let mut rng = stream_rng(11, 0);
        for _ in 0..200 {
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let shifted = b.translate(&y).unwrap();
            let xm: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            assert_eq!(shifted.contains(&x).unwrap(), b.contains(&xm).unwrap());
        }
    }

    #[test]
    fn boundary_neighborhood_examples() {
        let b = Ball::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!(b.in_boundary_neighborhood(&[1.05, 0.0], 0.1).unwrap());
        assert!(!b.in_boundary_neighborhood(&[0.5, 0.0], 0.1).unwrap());
        let all = Ball::all_space(2);
        assert!(matches!(
            all.in_boundary_neighborhood(&[0.0, 0.0], 0.1),
            Err(Error::NoBoundary)
        ));
    }

    #[test]
    fn neighborhood_monotone_in_eps() {
        let b = Ball::new(vec![0.1], 0.9).unwrap();
        let mut rng = stream_rng(5, 1);
        for _ in 0..500 {
            let x = [rng.gen_range(-3.0..3.0)];
            let e1 = rng.gen_range(0.001..0.5);
            let e2 = e1 + rng.gen_range(0.0..0.5);
            if b.in_boundary_neighborhood(&x, e1).unwrap() {
                assert!(b.in_boundary_neighborhood(&x, e2).unwrap());
            }
        }
    }

    #[test]
    fn half_line_mass_matches_density() {
        // q=1, B=(-inf,0], V=1, eps=0.01: mass ~ 2 eps phi(0).
        let b = Ball::half_line(0.0);
        let v = Matrix::identity(1);
        let mc = McConfig::new(400_000, 77);
        let (p, se) = gaussian_boundary_mass(&b, &v, 0.01, &mc).unwrap();
        let expect = 2.0 * 0.01 * (1.0 / (2.0 * std::f64::consts::PI).sqrt());
        assert!((p - expect).abs() < 3.0 * se + 1e-4, "p={p} expect={expect}");
        let (z, _) = gaussian_boundary_mass(&b, &v, 0.0, &mc).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn lemma1_examples() {
        // q=1, d=2, v = (1), (1): each W_j = 1.
        let (_, lam) = lemma1_select(&[vec![1.0], vec![1.0]]).unwrap();
        assert!((lam - 1.0).abs() < 1e-12);
        // q=2, d=3, e1, e2, e1+e2: dropping the third leaves W = I.
        let (j, lam) =
            lemma1_select(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(j, 2);
        assert!((lam - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lemma1_random_families_positive() {
        let mut rng = stream_rng(3, 9);
        for _ in 0..300 {
            let q = rng.gen_range(1..=3usize);
            let d = q + rng.gen_range(1..=3usize);
            let vs: Vec<Vec<f64>> =
                (0..d).map(|_| (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            match lemma1_select(&vs) {
                Ok((_, lam)) => assert!(lam > 0.0),
                Err(Error::NotSpd(_)) => {} // W0 degenerate draw; precondition fails
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn linear_shell_probability_closed_form() {
        // p(z) = z, B = (-inf, 0]: P(|Z| < n^-beta) ~ 2 phi(0) n^-beta.
        let p = MultiPolynomial::linear(&[1.0]);
        let pmap = PolynomialMap::new(vec![vec![p]], 1.0, 1.0).unwrap();
        let mc = McConfig::new(400_000, 123);
        let n = 100u64;
        let beta = 0.5;
        let res =
            prop1_probability(&pmap, &[Ball::half_line(0.0)], beta, 2.0, n, &mc).unwrap();
        let expect = 2.0 * (1.0 / (2.0 * std::f64::consts::PI).sqrt()) * (n as f64).powf(-beta);
        let (est, se) = res.per_region[0];
        assert!((est - expect).abs() < 3.0 * se + 3e-4, "est={est} expect={expect}");
    }

    #[test]
    fn shell_event_empty_when_boundary_far() {
        let p = MultiPolynomial::linear(&[1.0]);
        let pmap = PolynomialMap::new(vec![vec![p]], 1.0, 1.0).unwrap();
        let mc = McConfig::new(50_000, 4);
        let res =
            prop1_probability(&pmap, &[Ball::half_line(1e6)], 0.5, 2.0, 100, &mc).unwrap();
        assert_eq!(res.per_region[0].0, 0.0);
    }
}
