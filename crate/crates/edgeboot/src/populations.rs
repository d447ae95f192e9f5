//! Simulation population catalog: standard Gaussian, centered exponential,
//! standardized chi-square, and a two-point lattice law that deliberately
//! violates the smoothness condition on the characteristic function (a
//! negative control for the CF-based diagnostics).
//!
//! Draws consume a fixed number of uniforms per observation so that derived
//! RNG streams stay aligned across code paths.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mc::std_normal;
use crate::rng::stream_rng;

pub trait Population: Sync + Send {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn mean(&self) -> Vec<f64>;
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Characteristic function, when available in closed form.
    fn cf(&self, t: &[f64]) -> Option<Complex64>;

    /// Whether the law is supported on a lattice (CF does not vanish at
    /// infinity; flagged in experiment metadata).
    fn is_lattice(&self) -> bool {
        false
    }

    /// `E ||X||^r`, by a deterministic internal Monte Carlo average unless a
    /// closed form is supplied by the implementor.
    fn abs_moment(&self, r: f64) -> f64 {
        let mut rng = stream_rng(0x5eed_ab5_0, 0);
        let reps = 200_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let x = self.draw(&mut rng);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            acc += norm.powf(r);
        }
        acc / reps as f64
    }

    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// N(0, I_d).
pub struct StdNormal {
    pub d: usize,
}

impl Population for StdNormal {
    fn name(&self) -> String {
        format!("normal(d={})", self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn mean(&self) -> Vec<f64> {
        vec![0.0; self.d]
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.d).map(|_| std_normal(rng)).collect()
    }

    fn cf(&self, t: &[f64]) -> Option<Complex64> {
        let n2: f64 = t.iter().map(|v| v * v).sum();
        Some(Complex64::new((-0.5 * n2).exp(), 0.0))
    }

    fn abs_moment(&self, r: f64) -> f64 {
        if self.d == 1 {
            // E|Z|^r = 2^{r/2} Gamma((r+1)/2) / sqrt(pi)
            let g = statrs::function::gamma::gamma((r + 1.0) / 2.0);
            return 2.0f64.powf(r / 2.0) * g / std::f64::consts::PI.sqrt();
        }
        // ||X||^2 ~ chi^2_d: E ||X||^r = 2^{r/2} Gamma((d+r)/2) / Gamma(d/2)
        let num = statrs::function::gamma::gamma((self.d as f64 + r) / 2.0);
        let den = statrs::function::gamma::gamma(self.d as f64 / 2.0);
        2.0f64.powf(r / 2.0) * num / den
    }
}

/// Exp(1) - 1: mean zero, variance 1, skewness 2.
pub struct CenteredExp;

impl Population for CenteredExp {
    fn name(&self) -> String {
        "centered-exp".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn mean(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        vec![-u.ln() - 1.0]
    }

    fn cf(&self, t: &[f64]) -> Option<Complex64> {
        // E exp(it(E-1)) = exp(-it) / (1 - it)
        let it = Complex64::new(0.0, t[0]);
        Some((-it).exp() / (Complex64::new(1.0, 0.0) - it))
    }

    fn abs_moment(&self, r: f64) -> f64 {
        // E|E - 1|^r: split at 1; analytic for integer r is messy, use
        // quadrature on the exponential density.
        let nodes = 4000;
        let hi = 40.0;
        let h = hi / nodes as f64;
        let mut acc = 0.0;
        for i in 0..nodes {
            let x = (i as f64 + 0.5) * h;
            acc += (x - 1.0).abs().powf(r) * (-x).exp() * h;
        }
        acc
    }
}

/// (W - df) / sqrt(2 df) with W ~ chi^2_df: mean zero, variance 1, skewed.
pub struct ScaledChiSq {
    pub df: usize,
}

impl Population for ScaledChiSq {
    fn name(&self) -> String {
        format!("scaled-chisq(df={})", self.df)
    }

    fn dim(&self) -> usize {
        1
    }

    fn mean(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut w = 0.0;
        for _ in 0..self.df {
            let z = std_normal(rng);
            w += z * z;
        }
        vec![(w - self.df as f64) / (2.0 * self.df as f64).sqrt()]
    }

    fn cf(&self, t: &[f64]) -> Option<Complex64> {
        // standardized chi^2: exp(-it sqrt(df/2)) (1 - 2it/sqrt(2 df))^{-df/2}
        let df = self.df as f64;
        let s = t[0] / (2.0 * df).sqrt();
        let shift = Complex64::new(0.0, -t[0] * (df / 2.0).sqrt()).exp();
        let base = Complex64::new(1.0, -2.0 * s);
        Some(shift * (-df / 2.0 * base.ln()).exp())
    }
}

/// P(X = -1) = P(X = 1) = 1/2. Lattice support, so |CF| = |cos t| returns to
/// 1 along the integer multiples of pi.
pub struct TwoPointLattice;

impl Population for TwoPointLattice {
    fn name(&self) -> String {
        "two-point-lattice".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn mean(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u: f64 = rng.gen();
        vec![if u < 0.5 { -1.0 } else { 1.0 }]
    }

    fn cf(&self, t: &[f64]) -> Option<Complex64> {
        Some(Complex64::new(t[0].cos(), 0.0))
    }

    fn is_lattice(&self) -> bool {
        true
    }

    fn abs_moment(&self, _r: f64) -> f64 {
        1.0
    }
}

/// Catalog lookup. Names: `normal`, `centered-exp`, `scaled-chisq`,
/// `two-point-lattice`. `d` applies to `normal` only (others are univariate),
/// `param` is the chi-square degrees of freedom (default 4).
pub fn population_from_name(
    name: &str,
    d: usize,
    param: Option<f64>,
) -> Result<Box<dyn Population>> {
    match name {
        "normal" => Ok(Box::new(StdNormal { d })),
        "centered-exp" => {
            require_univariate(name, d)?;
            Ok(Box::new(CenteredExp))
        }
        "scaled-chisq" => {
            require_univariate(name, d)?;
            let df = param.unwrap_or(4.0);
            if df < 1.0 || df.fract() != 0.0 {
                return Err(Error::Config(format!("scaled-chisq df must be a positive integer, got {df}")));
            }
            Ok(Box::new(ScaledChiSq { df: df as usize }))
        }
        "two-point-lattice" => {
            require_univariate(name, d)?;
            Ok(Box::new(TwoPointLattice))
        }
        _ => Err(Error::UnknownPopulation(name.into())),
    }
}

fn require_univariate(name: &str, d: usize) -> Result<()> {
    if d != 1 {
        return Err(Error::Config(format!("population {name} is univariate, got d = {d}")));
    }
    Ok(())
}
