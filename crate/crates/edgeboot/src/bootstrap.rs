//! k-sample resampling engine: Monte Carlo bootstrap distributions of the
//! rescaled statistic, an exact small-n enumeration oracle, the truncated and
//! recentred resampling variables with their covariances, and the per-sample
//! product measures.
//!
//! Determinism contract: every replicate draws from its own RNG stream
//! derived from `(seed, replicate index)`, and aggregation order is fixed by
//! the index, so results are bit-identical regardless of worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mc::McConfig;
use crate::regions::Ball;
use crate::rng::stream_rng;
use crate::smooth_model::SmoothStatistic;
use crate::tensors::CumulantSet;

use rand::Rng;

/// Largest per-sample size admitted by the exact enumeration oracle
/// (compositions of n into n parts: C(15, 7) = 6435 at the cap).
pub const EXACT_ENUMERATION_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Simulated { population: String, seed: u64 },
    External,
}

/// k samples of equal per-observation dimension.
#[derive(Debug, Clone)]
pub struct SampleSet {
    samples: Vec<Vec<Vec<f64>>>,
    provenance: Provenance,
}

impl SampleSet {
    pub fn new(samples: Vec<Vec<Vec<f64>>>, provenance: Provenance) -> Result<SampleSet> {
        if samples.is_empty() {
            return Err(Error::InvalidSampleSet("need at least one sample".into()));
        }
        let d = samples[0].first().map(|x| x.len()).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidSampleSet("zero-dimensional observations".into()));
        }
        for (j, s) in samples.iter().enumerate() {
            if s.len() < 2 {
                return Err(Error::InvalidSampleSet(format!(
                    "sample {j} has {} observations, need >= 2",
                    s.len()
                )));
            }
            for x in s {
                if x.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: x.len() });
                }
            }
        }
        Ok(SampleSet { samples, provenance })
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn d(&self) -> usize {
        self.samples[0][0].len()
    }

    pub fn n_js(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.len()).collect()
    }

    pub fn n_total(&self) -> usize {
        self.samples.iter().map(|s| s.len()).sum()
    }

    /// max(n_j) / min(n_j), the recorded balance ratio.
    pub fn balance_ratio(&self) -> f64 {
        let ns = self.n_js();
        *ns.iter().max().unwrap() as f64 / *ns.iter().min().unwrap() as f64
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn sample(&self, j: usize) -> &[Vec<f64>] {
        &self.samples[j]
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| {
                let n = s.len() as f64;
                let mut m = vec![0.0; self.d()];
                for x in s {
                    for (mi, xi) in m.iter_mut().zip(x) {
                        *mi += xi / n;
                    }
                }
                m
            })
            .collect()
    }

    /// Central cumulants of each sample's atoms, to `max_order`.
    pub fn central_cumulants(&self, max_order: usize) -> Result<Vec<CumulantSet>> {
        let means = self.means();
        self.samples
            .iter()
            .zip(&means)
            .map(|(s, m)| {
                CumulantSet::empirical_moments(s, max_order, Some(m))?.moments_to_cumulants()
            })
            .collect()
    }

    /// CSV export: header `sample_id,x1,..,xd`, one row per observation.
    pub fn to_csv(&self) -> String {
        let d = self.d();
        let mut out = String::from("sample_id");
        for i in 1..=d {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (j, s) in self.samples.iter().enumerate() {
            for x in s {
                out.push_str(&format!("{}", j + 1));
                for v in x {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// CSV import (inverse of [`SampleSet::to_csv`]); samples are grouped by
    /// `sample_id` in order of first appearance.
    pub fn from_csv(text: &str) -> Result<SampleSet> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(Error::InvalidSampleSet("empty file".into()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"sample_id") || cols.len() < 2 {
            return Err(Error::InvalidSampleSet(format!(
                "bad header {header:?}: expected sample_id,x1,..,xd"
            )));
        }
        for (i, c) in cols.iter().enumerate().skip(1) {
            if *c != format!("x{i}") {
                return Err(Error::InvalidSampleSet(format!("bad header column {c:?}")));
            }
        }
        let d = cols.len() - 1;
        let mut ids: Vec<String> = Vec::new();
        let mut samples: Vec<Vec<Vec<f64>>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != d + 1 {
                return Err(Error::InvalidSampleSet(format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 2,
                    d + 1,
                    fields.len()
                )));
            }
            let id = fields[0].to_string();
            let row: Vec<f64> = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::InvalidSampleSet(format!("row {}: bad number {f:?}", lineno + 2))
                    })
                })
                .collect::<Result<_>>()?;
            match ids.iter().position(|i| *i == id) {
                Some(j) => samples[j].push(row),
                None => {
                    ids.push(id);
                    samples.push(vec![row]);
                }
            }
        }
        SampleSet::new(samples, Provenance::External)
    }
}

/// One resample: each sample redrawn with replacement from its own atoms.
pub fn resample(sset: &SampleSet, seed: u64) -> SampleSet {
    let samples = sset
        .samples
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut rng = stream_rng(seed, j as u64);
            (0..s.len()).map(|_| s[rng.gen_range(0..s.len())].clone()).collect()
        })
        .collect();
    SampleSet { samples, provenance: sset.provenance.clone() }
}

/// Monte Carlo bootstrap distribution of `n^{1/2} g(resampled means; means)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDistribution {
    pub reps: usize,
    pub q: usize,
    /// Row-major `reps x q`.
    pub values: Vec<f64>,
    pub seed: u64,
}

impl BootstrapDistribution {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.q..(r + 1) * self.q]
    }

    /// Empirical probability of a region, with binomial standard error.
    pub fn prob_region(&self, b: &Ball) -> Result<(f64, f64)> {
        let mut hits = 0u64;
        for r in 0..self.reps {
            if b.contains(self.row(r))? {
                hits += 1;
            }
        }
        let n = self.reps as f64;
        let p = hits as f64 / n;
        Ok((p, (p * (1.0 - p) / n).sqrt()))
    }
}

pub fn bootstrap_distribution(
    stat: &dyn SmoothStatistic,
    sset: &SampleSet,
    reps: usize,
    seed: u64,
) -> Result<BootstrapDistribution> {
    if reps < 1 {
        return Err(Error::ZeroBudget);
    }
    if stat.k() != sset.k() || stat.d() != sset.d() {
        return Err(Error::DimensionMismatch { expected: stat.k() * stat.d(), got: sset.k() * sset.d() });
    }
    let anchors = sset.means();
    let d = sset.d();
    let root_n = (sset.n_total() as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep as u64);
            let means: Vec<Vec<f64>> = sset
                .samples
                .iter()
                .map(|s| {
                    let nj = s.len();
                    let mut m = vec![0.0; d];
                    for _ in 0..nj {
                        let x = &s[rng.gen_range(0..nj)];
                        for (mi, xi) in m.iter_mut().zip(x) {
                            *mi += xi;
                        }
                    }
                    for mi in &mut m {
                        *mi /= nj as f64;
                    }
                    m
                })
                .collect();
            let v = stat.value(&means, &anchors).expect("statistic evaluation");
            v.iter().map(|t| t * root_n).collect()
        })
        .collect();
    let q = stat.q();
    let mut values = Vec::with_capacity(reps * q);
    for row in rows {
        values.extend(row);
    }
    Ok(BootstrapDistribution { reps, q, values, seed })
}

/// All multiset resample counts of `n` atoms: `(counts, weight)` with
/// `weight = n! / prod(counts!) * n^{-n}`; weights sum to one.
pub fn enumerate_resamples(n: usize) -> Result<Vec<(Vec<u32>, f64)>> {
    if n > EXACT_ENUMERATION_CAP {
        return Err(Error::SizeCap { n, cap: EXACT_ENUMERATION_CAP });
    }
    fn factorial(n: u32) -> f64 {
        (1..=n as u64).map(|k| k as f64).product()
    }
    let mut out = Vec::new();
    let mut counts = vec![0u32; n];
    fn rec(i: usize, left: u32, counts: &mut Vec<u32>, out: &mut Vec<(Vec<u32>, f64)>) {
        if i == counts.len() - 1 {
            counts[i] = left;
            out.push((counts.clone(), 0.0));
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            rec(i + 1, left - c, counts, out);
        }
    }
    rec(0, n as u32, &mut counts, &mut out);
    let base = factorial(n as u32) * (n as f64).powi(-(n as i32));
    for (c, w) in &mut out {
        *w = base / c.iter().map(|&m| factorial(m)).product::<f64>();
    }
    Ok(out)
}

/// Exact conditional probabilities `P(n^{1/2} g(mean*; mean) in B | sample)`
/// for k = 1, by enumerating all resample compositions.
pub fn exact_bootstrap_cdf(
    stat: &dyn SmoothStatistic,
    sset: &SampleSet,
    regions: &[Ball],
) -> Result<Vec<f64>> {
    if sset.k() != 1 || stat.k() != 1 {
        return Err(Error::Precondition("exact enumeration is single-sample only".into()));
    }
    let atoms = sset.sample(0);
    let n = atoms.len();
    let d = sset.d();
    let anchors = sset.means();
    let root_n = (n as f64).sqrt();
    let mut probs = vec![0.0; regions.len()];
    for (counts, weight) in enumerate_resamples(n)? {
        let mut mean = vec![0.0; d];
        for (atom, &c) in atoms.iter().zip(&counts) {
            for (mi, xi) in mean.iter_mut().zip(atom) {
                *mi += c as f64 * xi / n as f64;
            }
        }
        let v: Vec<f64> =
            stat.value(&[mean], &anchors)?.iter().map(|t| t * root_n).collect();
        for (p, b) in probs.iter_mut().zip(regions) {
            if b.contains(&v)? {
                *p += weight;
            }
        }
    }
    Ok(probs)
}

/// Which side of the truncation threshold is kept.
///
/// `KeepSmall` zeroes standardized atoms with norm above `n^{1/2}` (the
/// convention under which the conditional mean of the kept values is small);
/// `KeepLarge` is the opposite reading, available for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncationConvention {
    #[default]
    KeepSmall,
    KeepLarge,
}

/// Truncated/recentred resampling variables and their covariances.
#[derive(Debug, Clone)]
pub struct TruncationReport {
    /// Per-sample covariance of the raw atoms.
    pub vhat_blocks: Vec<Matrix>,
    /// Per-sample covariance of the truncated, recentred atoms.
    pub vdagger_blocks: Vec<Matrix>,
    /// Exact conditional means of the truncated standardized atoms.
    pub ymeans: Vec<Vec<f64>>,
    /// `-n^{1/2} vhat^{1/2} (ymeans stacked)`.
    pub a: Vec<f64>,
    /// Per-sample share of zeroed atoms.
    pub truncation_fraction: Vec<f64>,
    /// Standardized, truncated atom values per sample.
    pub y_atoms: Vec<Vec<Vec<f64>>>,
    /// Recentred atom values per sample (`y - E(y | sample)`).
    pub dagger_atoms: Vec<Vec<Vec<f64>>>,
}

/// [`truncate_and_center_with_threshold`] at the standard threshold
/// `n^{1/2}` (pooled n).
///
/// Note: an atom standardized by its own sample's covariance has norm at
/// most `(n_j - 1)^{1/2}`, which is strictly below the threshold, so under
/// `KeepSmall` the truncation is provably inactive, the conditional means
/// vanish exactly, and `a = 0`. The mechanics stay exercisable through the
/// explicit-threshold variant.
pub fn truncate_and_center(
    sset: &SampleSet,
    convention: TruncationConvention,
) -> Result<TruncationReport> {
    truncate_and_center_with_threshold(sset, convention, (sset.n_total() as f64).sqrt())
}

pub fn truncate_and_center_with_threshold(
    sset: &SampleSet,
    convention: TruncationConvention,
    threshold: f64,
) -> Result<TruncationReport> {
    let d = sset.d();
    let n = sset.n_total() as f64;
    let means = sset.means();
    let mut vhat_blocks = Vec::with_capacity(sset.k());
    let mut vdagger_blocks = Vec::with_capacity(sset.k());
    let mut ymeans = Vec::with_capacity(sset.k());
    let mut truncation_fraction = Vec::with_capacity(sset.k());
    let mut y_atoms = Vec::with_capacity(sset.k());
    let mut dagger_atoms = Vec::with_capacity(sset.k());
    for (j, s) in sset.samples.iter().enumerate() {
        let nj = s.len() as f64;
        let mut vhat = Matrix::zeros(d, d);
        for x in s {
            for a in 0..d {
                for b in 0..d {
                    vhat[(a, b)] += (x[a] - means[j][a]) * (x[b] - means[j][b]) / nj;
                }
            }
        }
        let inv_root = linalg::sym_inv_sqrt(&vhat)?;
        let mut zeroed = 0usize;
        let ys: Vec<Vec<f64>> = s
            .iter()
            .map(|x| {
                let centered: Vec<f64> =
                    x.iter().zip(&means[j]).map(|(xi, mi)| xi - mi).collect();
                let y = inv_root.matvec(&centered);
                let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                let keep = match convention {
                    TruncationConvention::KeepSmall => norm <= threshold,
                    TruncationConvention::KeepLarge => norm > threshold,
                };
                if keep {
                    y
                } else {
                    zeroed += 1;
                    vec![0.0; d]
                }
            })
            .collect();
        let mut ym = vec![0.0; d];
        for y in &ys {
            for (mi, yi) in ym.iter_mut().zip(y) {
                *mi += yi / nj;
            }
        }
        let dag: Vec<Vec<f64>> =
            ys.iter().map(|y| y.iter().zip(&ym).map(|(yi, mi)| yi - mi).collect()).collect();
        let mut vd = Matrix::zeros(d, d);
        for x in &dag {
            for a in 0..d {
                for b in 0..d {
                    vd[(a, b)] += x[a] * x[b] / nj;
                }
            }
        }
        vhat_blocks.push(vhat);
        vdagger_blocks.push(vd);
        ymeans.push(ym);
        truncation_fraction.push(zeroed as f64 / nj);
        y_atoms.push(ys);
        dagger_atoms.push(dag);
    }
    // a = -n^{1/2} vhat^{1/2} E(Y | samples), stacked over samples.
    let mut a = Vec::with_capacity(sset.k() * d);
    for (vhat, ym) in vhat_blocks.iter().zip(&ymeans) {
        let root = linalg::sym_sqrt(vhat)?;
        for v in root.matvec(ym) {
            a.push(-n.sqrt() * v);
        }
    }
    Ok(TruncationReport {
        vhat_blocks,
        vdagger_blocks,
        ymeans,
        a,
        truncation_fraction,
        y_atoms,
        dagger_atoms,
    })
}

/// Which atom set drives the product measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// Resampled centered raw atoms `x - mean`.
    Plain,
    /// Resampled truncated/recentred atoms.
    Dagger,
}

/// Probability of the cylinder `S_1 x .. x S_k` under the product of the
/// per-sample laws of `n_j^{-1/2} sum_i atoms*_i`.
///
/// Exact mode enumerates compositions (requires every `n_j <=`
/// [`EXACT_ENUMERATION_CAP`], SE = 0); Monte Carlo mode uses `mc.samples`
/// replicates per factor with a derived stream per sample.
pub fn product_measure_eval(
    kind: MeasureKind,
    cylinder: &[Ball],
    sset: &SampleSet,
    exact: bool,
    mc: &McConfig,
) -> Result<(f64, f64)> {
    if cylinder.len() != sset.k() {
        return Err(Error::DimensionMismatch { expected: sset.k(), got: cylinder.len() });
    }
    let d = sset.d();
    for b in cylinder {
        if b.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.dim() });
        }
    }
    let means = sset.means();
    let atom_sets: Vec<Vec<Vec<f64>>> = match kind {
        MeasureKind::Plain => sset
            .samples
            .iter()
            .zip(&means)
            .map(|(s, m)| {
                s.iter()
                    .map(|x| x.iter().zip(m).map(|(xi, mi)| xi - mi).collect())
                    .collect()
            })
            .collect(),
        MeasureKind::Dagger => {
            truncate_and_center(sset, TruncationConvention::KeepSmall)?.dagger_atoms
        }
    };
    let mut prob = 1.0;
    let mut rel_var = 0.0;
    for (j, (atoms, region)) in atom_sets.iter().zip(cylinder).enumerate() {
        let nj = atoms.len();
        let scale = 1.0 / (nj as f64).sqrt();
        let (pj, sej) = if exact {
            let mut p = 0.0;
            for (counts, weight) in enumerate_resamples(nj)? {
                let mut sum = vec![0.0; d];
                for (atom, &c) in atoms.iter().zip(&counts) {
                    for (si, ai) in sum.iter_mut().zip(atom) {
                        *si += c as f64 * ai * scale;
                    }
                }
                if region.contains(&sum)? {
                    p += weight;
                }
            }
            (p, 0.0)
        } else {
            let cfg = McConfig { seed: crate::rng::mix(mc.seed, j as u64), ..*mc };
            crate::regions::indicator_probability(&cfg, |rng| {
                let mut sum = vec![0.0; d];
                for _ in 0..nj {
                    let atom = &atoms[rng.gen_range(0..nj)];
                    for (si, ai) in sum.iter_mut().zip(atom) {
                        *si += ai * scale;
                    }
                }
                region.contains(&sum).unwrap_or(false)
            })?
        };
        if pj == 0.0 {
            return Ok((0.0, 0.0));
        }
        prob *= pj;
        rel_var += (sej / pj) * (sej / pj);
    }
    Ok((prob, prob * rel_var.sqrt()))
}
