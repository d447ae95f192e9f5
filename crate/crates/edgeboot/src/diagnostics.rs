//! Sample-event indicators driving the error analysis: coefficient/mean
//! bounds, conditional moment bounds, covariance eigenvalue bounds, the
//! weighted characteristic-function integral, and log-log rate fitting for
//! the decay of the event failure probabilities.

use num_complex::Complex64;
use statrs::function::gamma::{gamma, gamma_lr};

use crate::bootstrap::{truncate_and_center, SampleSet, TruncationConvention};
use crate::edgeworth::build_expansion;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mc::{block_mean_se, std_normal, McConfig};
use crate::smooth_model::{approximate_cumulants, SmoothStatistic};

/// Constants for the sample events.
#[derive(Debug, Clone, Copy)]
pub struct EventConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Frequency inflation exponent in the CF integral argument
    /// `n^{-1/2+u} t`.
    pub u: f64,
    /// Weight constant in `exp(-C ||t||^{1/2})`.
    pub weight_c: f64,
    /// Power on the CF difference.
    pub m: u32,
    pub nu: usize,
    pub lambda: usize,
    pub d: usize,
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c1 <= 0.0 || self.c2 <= 0.0 || self.c3 <= 0.0 {
            return Err(Error::Config("event constants must be positive".into()));
        }
        if self.c3 <= 1.0 {
            return Err(Error::Config(format!("C3 must exceed 1, got {}", self.c3)));
        }
        if self.u <= 0.0 || self.weight_c <= 0.0 {
            return Err(Error::Config("u and C must be positive".into()));
        }
        let floor = self.m_floor();
        if (self.m as f64) <= floor {
            return Err(Error::Config(format!(
                "m = {} too small: need m > 2d(u+1)+nu+3+lambda = {floor}",
                self.m
            )));
        }
        Ok(())
    }

    fn m_floor(&self) -> f64 {
        2.0 * self.d as f64 * (self.u + 1.0) + self.nu as f64 + 3.0 + self.lambda as f64
    }

    /// Smallest integer m satisfying the validity constraint.
    pub fn minimal_legal_m(d: usize, u: f64, nu: usize, lambda: usize) -> u32 {
        let floor = 2.0 * d as f64 * (u + 1.0) + nu as f64 + 3.0 + lambda as f64;
        (floor.floor() as u32) + 1
    }
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            c1: 10.0,
            c2: 10.0,
            c3: 4.0,
            u: 0.1,
            weight_c: 1.0,
            m: EventConfig::minimal_legal_m(1, 0.1, 1, 1),
            nu: 1,
            lambda: 1,
            d: 1,
        }
    }
}

fn require_single_sample(sset: &SampleSet) -> Result<()> {
    if sset.k() != 1 {
        return Err(Error::Precondition("event indicators are single-sample".into()));
    }
    Ok(())
}

/// First sample event: the expansion coefficient bound `xi_nu <= C1`
/// together with the mean proximity `||mean - mu|| <= 1/C1`.
pub fn e1_indicator(
    sset: &SampleSet,
    stat: &dyn SmoothStatistic,
    mu: &[f64],
    cfg: &EventConfig,
) -> Result<bool> {
    cfg.validate()?;
    require_single_sample(sset)?;
    if mu.len() != sset.d() {
        return Err(Error::DimensionMismatch { expected: sset.d(), got: mu.len() });
    }
    let means = sset.means();
    let dist = means[0]
        .iter()
        .zip(mu)
        .map(|(m, u)| (m - u) * (m - u))
        .sum::<f64>()
        .sqrt();
    if dist > 1.0 / cfg.c1 {
        return Ok(false);
    }
    let xi = if cfg.nu == 0 {
        0.0
    } else {
        let cums = sset.central_cumulants(cfg.nu + 2)?;
        let approx = approximate_cumulants(stat, &means, &cums, &sset.n_js(), cfg.nu)?;
        let v = approx.etas.order2_matrix();
        build_expansion(&approx.etas, &v, cfg.nu)?.xi_nu()?
    };
    Ok(xi <= cfg.c1)
}

/// Which exponent drives the conditional-moment event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum E2Exponent {
    /// `max(2 nu + 3, d + 1)` (the event's own definition; default).
    EventForm,
    /// `max(2 nu + 1, d + 1)` (the rate lemma's variant).
    LemmaForm,
}

pub fn e2_exponent(kind: E2Exponent, nu: usize, d: usize) -> u32 {
    match kind {
        E2Exponent::EventForm => (2 * nu + 3).max(d + 1) as u32,
        E2Exponent::LemmaForm => (2 * nu + 1).max(d + 1) as u32,
    }
}

/// Exact conditional moment `E(||X* - mean||^r | sample)` — the average of
/// `||atom - mean||^r` over the atoms.
pub fn e2_conditional_moment(sset: &SampleSet, r: u32) -> Result<f64> {
    require_single_sample(sset)?;
    let mean = &sset.means()[0];
    let atoms = sset.sample(0);
    let mut acc = 0.0;
    for x in atoms {
        let norm =
            x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        acc += norm.powi(r as i32);
    }
    Ok(acc / atoms.len() as f64)
}

/// Second sample event: the conditional resampling moment of order
/// `r(kind)` stays below `C2`.
pub fn e2_indicator(sset: &SampleSet, cfg: &EventConfig, kind: E2Exponent) -> Result<bool> {
    cfg.validate()?;
    let r = e2_exponent(kind, cfg.nu, sset.d());
    Ok(e2_conditional_moment(sset, r)? <= cfg.c2)
}

/// Third and fourth sample events: largest eigenvalue of the sample
/// covariance below `C3`, and of the truncated/recentred covariance below 2.
pub fn e3_e4_indicator(sset: &SampleSet, cfg: &EventConfig) -> Result<(bool, bool)> {
    cfg.validate()?;
    require_single_sample(sset)?;
    if sset.n_total() < sset.d() + 1 {
        return Err(Error::Precondition("need n >= d + 1".into()));
    }
    let report = truncate_and_center(sset, TruncationConvention::KeepSmall)?;
    let e3 = linalg::max_eigenvalue(&report.vhat_blocks[0])? <= cfg.c3;
    let e4 = linalg::max_eigenvalue(&report.vdagger_blocks[0])? <= 2.0;
    Ok((e3, e4))
}

/// Empirical characteristic function of the centered atoms:
/// `(1/n) sum_i exp(i t . (X_i - mean))`. Satisfies `chi*(0) = 1` and
/// `|chi*| <= 1` exactly.
pub fn empirical_cf(sset: &SampleSet, t: &[f64]) -> Result<Complex64> {
    require_single_sample(sset)?;
    if t.len() != sset.d() {
        return Err(Error::DimensionMismatch { expected: sset.d(), got: t.len() });
    }
    let mean = &sset.means()[0];
    let atoms = sset.sample(0);
    let mut acc = Complex64::new(0.0, 0.0);
    for x in atoms {
        let phase: f64 = t.iter().zip(x.iter().zip(mean)).map(|(ti, (xi, mi))| ti * (xi - mi)).sum();
        acc += Complex64::new(0.0, phase).exp();
    }
    Ok(acc / atoms.len() as f64)
}

/// Importance sampler for the weight `exp(-C ||t||^{1/2})` on R^d: radial
/// part via an inverse-CDF lookup table (the radius satisfies
/// `sqrt(r) ~ Gamma(2d, C)`), direction uniform on the sphere. Build once,
/// reuse across replicates.
pub struct E5Sampler {
    d: usize,
    /// Total mass of the weight, `int exp(-C ||t||^{1/2}) dt`.
    pub total_weight: f64,
    table: Vec<f64>,
}

const E5_TABLE_NODES: usize = 10_000;

impl E5Sampler {
    pub fn new(d: usize, weight_c: f64) -> Result<E5Sampler> {
        if d == 0 || weight_c <= 0.0 {
            return Err(Error::Config("need d >= 1 and C > 0".into()));
        }
        let shape = 2.0 * d as f64;
        // closed form: S_{d-1} * 2 (2d-1)! / C^{2d}
        let sphere = 2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0);
        let total_weight = sphere * 2.0 * gamma(shape) / weight_c.powf(shape);
        let cdf = |s: f64| gamma_lr(shape, weight_c * s);
        let mut table = Vec::with_capacity(E5_TABLE_NODES + 1);
        for i in 0..=E5_TABLE_NODES {
            let u = (i as f64 / E5_TABLE_NODES as f64).min(1.0 - 1e-12);
            let mut lo = 0.0f64;
            let mut hi = (shape + 50.0) / weight_c;
            while cdf(hi) < u {
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            table.push(0.5 * (lo + hi));
        }
        Ok(E5Sampler { d, total_weight, table })
    }

    /// Draw `t` with density proportional to the weight. Fixed uniform
    /// consumption per draw (1 + 2d).
    pub fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        use rand::Rng;
        let u: f64 = rng.gen();
        let pos = u * E5_TABLE_NODES as f64;
        let i = (pos as usize).min(E5_TABLE_NODES - 1);
        let frac = pos - i as f64;
        let s = self.table[i] * (1.0 - frac) + self.table[i + 1] * frac;
        let radius = s * s;
        let mut dir: Vec<f64> = (0..self.d).map(|_| std_normal(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        for v in &mut dir {
            *v *= radius / norm;
        }
        dir
    }
}

/// The weighted CF-distance integral
/// `int |chi*(n^{-1/2+u} t) - chi(n^{-1/2+u} t)|^m exp(-C||t||^{1/2}) dt`
/// by importance sampling, and the comparison against the threshold
/// `n^{-d(u+1)-(nu+3)/2}`. Returns `(value, se, value <= threshold)`.
pub fn e5_integral_with(
    sampler: &E5Sampler,
    sset: &SampleSet,
    population_cf: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    cfg: &EventConfig,
    mc: &McConfig,
) -> Result<(f64, f64, bool)> {
    cfg.validate()?;
    require_single_sample(sset)?;
    let d = sset.d();
    if sampler.d != d {
        return Err(Error::DimensionMismatch { expected: d, got: sampler.d });
    }
    let n = sset.n_total() as f64;
    let scale = n.powf(-0.5 + cfg.u);
    let m = cfg.m as f64;
    let mean = sset.means().remove(0);
    let atoms: Vec<Vec<f64>> = sset
        .sample(0)
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let (avg, se) = block_mean_se(mc, |rng| {
        let t = sampler.draw(rng);
        let arg: Vec<f64> = t.iter().map(|v| v * scale).collect();
        let mut emp = Complex64::new(0.0, 0.0);
        for x in &atoms {
            let phase: f64 = arg.iter().zip(x).map(|(a, b)| a * b).sum();
            emp += Complex64::new(0.0, phase).exp();
        }
        emp /= atoms.len() as f64;
        let diff = (emp - population_cf(&arg)).norm();
        diff.powf(m)
    })?;
    let value = sampler.total_weight * avg;
    let value_se = sampler.total_weight * se;
    let threshold = n.powf(-(d as f64) * (cfg.u + 1.0) - (cfg.nu as f64 + 3.0) / 2.0);
    Ok((value, value_se, value <= threshold))
}

/// [`e5_integral_with`] with a freshly built sampler.
pub fn e5_integral(
    sset: &SampleSet,
    population_cf: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    cfg: &EventConfig,
    mc: &McConfig,
) -> Result<(f64, f64, bool)> {
    let sampler = E5Sampler::new(sset.d(), cfg.weight_c)?;
    e5_integral_with(&sampler, sset, population_cf, cfg, mc)
}

/// Deterministic cross-check of the CF integral for d <= 2 (composite
/// Gauss-Legendre in 1-d; polar product rule in 2-d).
pub fn e5_integral_quadrature(
    sset: &SampleSet,
    population_cf: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    cfg: &EventConfig,
) -> Result<f64> {
    cfg.validate()?;
    require_single_sample(sset)?;
    let d = sset.d();
    let n = sset.n_total() as f64;
    let scale = n.powf(-0.5 + cfg.u);
    let m = cfg.m as f64;
    let c = cfg.weight_c;
    let integrand = |t: &[f64]| -> Result<f64> {
        let arg: Vec<f64> = t.iter().map(|v| v * scale).collect();
        let emp = empirical_cf(sset, &arg)?;
        let diff = (emp - population_cf(&arg)).norm();
        let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(diff.powf(m) * (-c * norm.sqrt()).exp())
    };
    // cutoff where 2^m exp(-C sqrt(r)) < 1e-15
    let sroot = (m * 2.0f64.ln() + 35.0) / c;
    let rmax = sroot * sroot;
    let (nodes, weights) = crate::edgeworth::gauss_legendre(16);
    match d {
        1 => {
            let panels = 4000;
            let h = rmax / panels as f64;
            let mut total = 0.0;
            for p in 0..panels {
                let mid = (p as f64 + 0.5) * h;
                for (&x, &w) in nodes.iter().zip(&weights) {
                    let r = mid + 0.5 * h * x;
                    total += w * 0.5 * h * (integrand(&[r])? + integrand(&[-r])?);
                }
            }
            Ok(total)
        }
        2 => {
            let panels = 1200;
            let h = rmax / panels as f64;
            let ntheta = 96usize;
            let mut total = 0.0;
            for p in 0..panels {
                let mid = (p as f64 + 0.5) * h;
                for (&x, &w) in nodes.iter().zip(&weights) {
                    let r = mid + 0.5 * h * x;
                    let mut ang = 0.0;
                    for kth in 0..ntheta {
                        let theta = 2.0 * std::f64::consts::PI * kth as f64 / ntheta as f64;
                        ang += integrand(&[r * theta.cos(), r * theta.sin()])?;
                    }
                    total += w * 0.5 * h * r * ang * 2.0 * std::f64::consts::PI
                        / ntheta as f64;
                }
            }
            Ok(total)
        }
        _ => Err(Error::Precondition("quadrature cross-check limited to d <= 2".into())),
    }
}

/// One grid point of a decay-rate experiment.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub n_grid: Vec<u64>,
    /// `(estimate, se)` per grid point.
    pub estimates: Vec<(f64, f64)>,
    pub fit: Option<SlopeFit>,
    /// Set when the fit is unavailable (e.g. "decay below MC resolution").
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Weighted least squares of `log(estimate)` against `log(n)`; zero
/// estimates are excluded (they sit below the Monte Carlo resolution).
pub fn rate_fit(
    estimator: &dyn Fn(u64) -> Result<(f64, f64)>,
    n_grid: &[u64],
) -> Result<RateFit> {
    if n_grid.len() < 3 {
        return Err(Error::Precondition("rate grid needs at least 3 points".into()));
    }
    if !n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Precondition("rate grid must be strictly increasing".into()));
    }
    let mut estimates = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        estimates.push(estimator(n)?);
    }
    let points: Vec<(f64, f64, f64)> = n_grid
        .iter()
        .zip(&estimates)
        .filter(|(_, (p, _))| *p > 0.0)
        .map(|(&n, &(p, se))| {
            // delta method for log(p); exact values get a tiny floor
            let sigma = (se / p).max(1e-6);
            ((n as f64).ln(), p.ln(), 1.0 / (sigma * sigma))
        })
        .collect();
    if points.len() < 2 {
        return Ok(RateFit {
            n_grid: n_grid.to_vec(),
            estimates,
            fit: None,
            note: Some("decay below MC resolution".into()),
        });
    }
    let wsum: f64 = points.iter().map(|p| p.2).sum();
    let xbar: f64 = points.iter().map(|p| p.0 * p.2).sum::<f64>() / wsum;
    let ybar: f64 = points.iter().map(|p| p.1 * p.2).sum::<f64>() / wsum;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::Precondition("degenerate rate grid".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_se = (1.0 / sxx).sqrt();
    let fit = SlopeFit {
        slope,
        intercept,
        slope_se,
        ci_low: slope - 1.96 * slope_se,
        ci_high: slope + 1.96 * slope_se,
    };
    Ok(RateFit { n_grid: n_grid.to_vec(), estimates, fit: Some(fit), note: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::Provenance;
    use crate::populations::{Population, StdNormal};
    use crate::rng::stream_rng;
    use crate::smooth_model::StandardizedMean;

    fn normal_sset(n: usize, seed: u64) -> SampleSet {
        let pop = StdNormal { d: 1 };
        let mut rng = stream_rng(seed, 0);
        SampleSet::new(vec![pop.sample(&mut rng, n)], Provenance::External).unwrap()
    }

    fn cfg1() -> EventConfig {
        EventConfig::default()
    }

    #[test]
    fn event_config_validation() {
        let mut c = cfg1();
        assert!(c.validate().is_ok());
        c.c3 = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg1();
        c.m = 5;
        assert!(c.validate().is_err());
        assert_eq!(EventConfig::minimal_legal_m(1, 0.1, 1, 1), 8);
        assert_eq!(EventConfig::minimal_legal_m(2, 0.1, 1, 1), 10);
    }

    fn sample_sd(s: &SampleSet) -> f64 {
        s.central_cumulants(2).unwrap()[0].get(&[0, 0]).sqrt()
    }

    #[test]
    fn e1_monotone_for_centered_sample() {
        // mean exactly zero: the proximity condition is void, so the
        // indicator is monotone non-decreasing in C1
        let s = SampleSet::new(
            vec![vec![vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]]],
            Provenance::External,
        )
        .unwrap();
        let stat = StandardizedMean { sigma: sample_sd(&s) };
        let mut prev = false;
        for c1 in [1e-6, 0.01, 0.1, 1.0, 10.0, 1e6] {
            let mut cfg = cfg1();
            cfg.c1 = c1;
            let ind = e1_indicator(&s, &stat, &[0.0], &cfg).unwrap();
            assert!(ind >= prev, "indicator dropped at C1 = {c1}");
            prev = ind;
        }
        assert!(prev, "never true even for huge C1");
    }

    #[test]
    fn e1_true_exactly_on_constant_interval() {
        // event holds iff xi_nu <= C1 and ||mean - mu|| <= 1/C1, i.e. C1
        // ranges over an interval
        use rand::Rng;
        let mut rng = stream_rng(11, 0);
        for trial in 0..10 {
            let s = normal_sset(50, 100 + trial);
            let stat = StandardizedMean { sigma: sample_sd(&s) };
            let dist = s.means()[0][0].abs();
            let cums = s.central_cumulants(3).unwrap();
            let approx =
                approximate_cumulants(&stat, &s.means(), &cums, &s.n_js(), 1).unwrap();
            let v = approx.etas.order2_matrix();
            let xi = build_expansion(&approx.etas, &v, 1).unwrap().xi_nu().unwrap();
            for _ in 0..8 {
                let c1 = rng.gen_range(0.05..40.0);
                let mut cfg = cfg1();
                cfg.c1 = c1;
                let ind = e1_indicator(&s, &stat, &[0.0], &cfg).unwrap();
                assert_eq!(ind, xi <= c1 && dist <= 1.0 / c1, "c1 = {c1}");
            }
        }
    }

    #[test]
    fn e2_hand_value_and_monotonicity() {
        // atoms {0, 0, 3}: mean 1, |X - mean| = (1, 1, 2):
        // conditional r-th moment = (1 + 1 + 2^r) / 3.
        let s = SampleSet::new(
            vec![vec![vec![0.0], vec![0.0], vec![3.0]]],
            Provenance::External,
        )
        .unwrap();
        for r in 1..=5u32 {
            let expect = (2.0 + 2.0f64.powi(r as i32)) / 3.0;
            assert!((e2_conditional_moment(&s, r).unwrap() - expect).abs() < 1e-12);
        }
        assert_eq!(e2_exponent(E2Exponent::EventForm, 1, 1), 5);
        assert_eq!(e2_exponent(E2Exponent::LemmaForm, 1, 1), 3);
        assert_eq!(e2_exponent(E2Exponent::LemmaForm, 0, 3), 4);
        let mut small = cfg1();
        small.c2 = 0.1;
        let mut big = cfg1();
        big.c2 = 100.0;
        assert!(!e2_indicator(&s, &small, E2Exponent::EventForm).unwrap());
        assert!(e2_indicator(&s, &big, E2Exponent::EventForm).unwrap());
    }

    #[test]
    fn e2_moment_matches_resampling_mc() {
        let s = normal_sset(40, 9);
        let exact = e2_conditional_moment(&s, 5).unwrap();
        // MC: resample atoms uniformly and average the norm power
        use rand::Rng;
        let mut rng = stream_rng(2, 2);
        let mean = s.means().remove(0);
        let atoms = s.sample(0);
        let reps = 400_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..reps {
            let x = &atoms[rng.gen_range(0..atoms.len())];
            let v = (x[0] - mean[0]).abs().powi(5);
            acc += v;
            acc2 += v * v;
        }
        let est = acc / reps as f64;
        let se = ((acc2 / reps as f64 - est * est) / reps as f64).sqrt();
        assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact}");
    }

    #[test]
    fn e3_e4_eigenvalue_examples() {
        // Four atoms giving sample covariance diag(0.8, 1.2).
        let c = (1.6f64).sqrt();
        let e = (2.4f64).sqrt();
        let s = SampleSet::new(
            vec![vec![
                vec![c, 0.0],
                vec![-c, 0.0],
                vec![0.0, e],
                vec![0.0, -e],
            ]],
            Provenance::External,
        )
        .unwrap();
        let mut cfg = cfg1();
        cfg.d = 2;
        cfg.m = EventConfig::minimal_legal_m(2, cfg.u, cfg.nu, cfg.lambda);
        cfg.c3 = 2.0;
        let (e3, e4) = e3_e4_indicator(&s, &cfg).unwrap();
        assert!(e3);
        assert!(e4); // standardized atoms: vdagger = I exactly
        cfg.c3 = 1.1;
        let (e3b, _) = e3_e4_indicator(&s, &cfg).unwrap();
        assert!(!e3b);
    }

    #[test]
    fn empirical_cf_basics() {
        let s = normal_sset(30, 13);
        let at0 = empirical_cf(&s, &[0.0]).unwrap();
        assert!((at0 - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        use rand::Rng;
        let mut rng = stream_rng(3, 3);
        for _ in 0..50 {
            let t = [rng.gen_range(-20.0..20.0)];
            assert!(empirical_cf(&s, &t).unwrap().norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn e5_zero_when_cf_matches_exactly() {
        let s = normal_sset(20, 7);
        // stub population CF = the empirical CF itself
        let s2 = s.clone();
        let cf = move |t: &[f64]| empirical_cf(&s2, t).unwrap();
        let (value, _, ok) =
            e5_integral(&s, &cf, &cfg1(), &McConfig::new(20_000, 3)).unwrap();
        assert_eq!(value, 0.0);
        assert!(ok);
    }

    #[test]
    fn e5_monotone_in_m() {
        let s = normal_sset(50, 21);
        let pop = StdNormal { d: 1 };
        let cf = move |t: &[f64]| pop.cf(t).unwrap();
        let sampler = E5Sampler::new(1, 1.0).unwrap();
        let mc = McConfig::new(40_000, 9);
        let mut prev = f64::INFINITY;
        for m in [8u32, 10, 12] {
            let mut cfg = cfg1();
            cfg.m = m;
            let (v, _, _) = e5_integral_with(&sampler, &s, &cf, &cfg, &mc).unwrap();
            assert!(v < prev, "m={m}: {v} vs {prev}");
            prev = v;
        }
    }

    #[test]
    fn e5_importance_sampling_matches_quadrature() {
        let s = normal_sset(25, 33);
        let pop = StdNormal { d: 1 };
        let cf = move |t: &[f64]| pop.cf(t).unwrap();
        let cfg = cfg1();
        let quad = e5_integral_quadrature(&s, &cf, &cfg).unwrap();
        let (mc_val, se, _) =
            e5_integral(&s, &cf, &cfg, &McConfig::new(200_000, 17)).unwrap();
        assert!(
            (mc_val - quad).abs() < 3.0 * se + 1e-9 + 0.02 * quad.abs(),
            "mc {mc_val} vs quad {quad} (se {se})"
        );
    }

    #[test]
    fn e5_total_weight_closed_form() {
        // d=1, C=1: int exp(-sqrt(|t|)) dt = 2 * 2 * Gamma(2) = 4.
        let s1 = E5Sampler::new(1, 1.0).unwrap();
        assert!((s1.total_weight - 4.0).abs() < 1e-10);
        // d=2, C=1: 2 pi * 2 * Gamma(4) = 24 pi.
        let s2 = E5Sampler::new(2, 1.0).unwrap();
        assert!((s2.total_weight - 24.0 * std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn e5_holds_for_gaussian_replicates() {
        let pop = StdNormal { d: 1 };
        let cf = move |t: &[f64]| StdNormal { d: 1 }.cf(t).unwrap();
        let sampler = E5Sampler::new(1, 1.0).unwrap();
        let cfg = cfg1();
        let mut hold = 0;
        let total = 30;
        for rep in 0..total {
            let mut rng = stream_rng(5000 + rep, 0);
            let s = SampleSet::new(vec![pop.sample(&mut rng, 200)], Provenance::External)
                .unwrap();
            let (_, _, ok) =
                e5_integral_with(&sampler, &s, &cf, &cfg, &McConfig::new(20_000, rep))
                    .unwrap();
            if ok {
                hold += 1;
            }
        }
        assert!(hold >= 27, "event held in only {hold}/{total} replicates");
    }

    #[test]
    fn rate_fit_exact_slopes() {
        let grid = [10u64, 20, 40, 80];
        let f1 = |n: u64| Ok((3.0 / n as f64, 0.0));
        let fit = rate_fit(&f1, &grid).unwrap().fit.unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-9, "slope {}", fit.slope);
        let f0 = |_n: u64| Ok((0.42, 0.0));
        let fit0 = rate_fit(&f0, &grid).unwrap().fit.unwrap();
        assert!(fit0.slope.abs() < 1e-9);
    }

    #[test]
    fn rate_fit_degenerate_cases() {
        let grid_short = [10u64, 20];
        assert!(rate_fit(&|_| Ok((1.0, 0.0)), &grid_short).is_err());
        let unsorted = [10u64, 10, 20];
        assert!(rate_fit(&|_| Ok((1.0, 0.0)), &unsorted).is_err());
        let zeros = rate_fit(&|_| Ok((0.0, 0.0)), &[10, 20, 40]).unwrap();
        assert!(zeros.fit.is_none());
        assert_eq!(zeros.note.as_deref(), Some("decay below MC resolution"));
    }
}
