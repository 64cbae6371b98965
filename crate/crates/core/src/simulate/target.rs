//! Target densities `f_X` with samplers and CDFs.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::mellin::open_unit;
use crate::quad::{integrate, integrate_breaks, Tolerance};

pub type TargetFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type TargetSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TargetKind {
    /// `λ e^{-λx}` on `x > 0`.
    Exponential { rate: f64 },
    /// `1 / (π x (1 + ln²(x/x₀)))` on `x > 0`.
    LogCauchy { x0: f64 },
    Custom {
        name: String,
        density: TargetFn,
        sampler: TargetSampler,
    },
}

impl std::fmt::Debug for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetKind::Exponential { rate } => write!(f, "Exponential({rate})"),
            TargetKind::LogCauchy { x0 } => write!(f, "LogCauchy({x0})"),
            TargetKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A density of the unobserved `X`.
#[derive(Debug, Clone)]
pub struct TargetDensity {
    kind: TargetKind,
}

impl TargetDensity {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("exponential rate must be positive, got {rate}")));
        }
        Ok(Self {
            kind: TargetKind::Exponential { rate },
        })
    }

    pub fn log_cauchy(x0: f64) -> Result<Self> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(Error::InvalidParameter(format!("log-Cauchy location must be positive, got {x0}")));
        }
        Ok(Self {
            kind: TargetKind::LogCauchy { x0 },
        })
    }

    /// A user density on `(0, ∞)`; rejected unless it integrates to one
    /// within `1e-6`.
    pub fn custom(name: impl Into<String>, density: TargetFn, sampler: TargetSampler) -> Result<Self> {
        let t = Self {
            kind: TargetKind::Custom {
                name: name.into(),
                density,
                sampler,
            },
        };
        let mass = t.total_mass()?;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("custom target integrates to {mass}, not 1")));
        }
        Ok(t)
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.kind {
            TargetKind::Exponential { rate } => rate * (-rate * x).exp(),
            TargetKind::LogCauchy { x0 } => {
                if x == 0.0 {
                    return 0.0;
                }
                let l = (x / x0).ln();
                1.0 / (PI * x * (1.0 + l * l))
            }
            TargetKind::Custom { density, .. } => density(x),
        }
    }

    /// `P(X ≤ x)`; numerical for custom targets.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            TargetKind::Exponential { rate } => Ok(-(-rate * x).exp_m1()),
            TargetKind::LogCauchy { x0 } => Ok(0.5 + (x / x0).ln().atan() / PI),
            TargetKind::Custom { density, .. } => {
                let f = density.clone();
                // x = e^u resolves mass near 0 and over many decades.
                integrate_breaks(
                    move |u: f64| u.exp() * f(u.exp()),
                    &[x.ln() - 60.0, x.ln() - 10.0, x.ln()],
                    Tolerance::new(1e-13, 1e-11),
                )
            }
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match &self.kind {
            TargetKind::Exponential { rate } => -open_unit(rng).ln() / rate,
            TargetKind::LogCauchy { x0 } => x0 * (PI * (open_unit(rng) - 0.5)).tan().exp(),
            TargetKind::Custom { sampler, .. } => sampler(rng),
        }
    }

    /// `∫₀^∞ f`, integrated in `u = ln x`.
    pub fn total_mass(&self) -> Result<f64> {
        if let TargetKind::LogCauchy { .. } = self.kind {
            // u = ln(x/x₀) turns the density into a standard Cauchy in u.
            let body: f64 = integrate(|u: f64| 1.0 / (PI * (1.0 + u * u)), -1e3, 1e3, Tolerance::new(1e-15, 1e-14))?;
            let tails = 2.0 * (1e3f64).recip().atan() / PI;
            return Ok(body + tails);
        }
        let tol = Tolerance::new(1e-14, 1e-12).with_max_panels(10_000);
        let breaks: Vec<f64> = (0..=40).map(|i| -60.0 + 3.0 * i as f64).collect();
        integrate_breaks(|u: f64| u.exp() * self.density(u.exp()), &breaks, tol)
    }

    pub fn label(&self) -> String {
        match &self.kind {
            TargetKind::Exponential { rate } => format!("exponential:{rate}"),
            TargetKind::LogCauchy { x0 } => format!("logcauchy:{x0}"),
            TargetKind::Custom { name, .. } => format!("custom:{name}"),
        }
    }
}

/// Outcome of [`ks_self_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// One-sample Kolmogorov–Smirnov test of the sampler against the CDF,
/// accepting when `D < 1.95/√n` (about the 0.001 level).
pub fn ks_self_test(target: &TargetDensity, n: usize, seed: u64) -> Result<KsOutcome> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut xs: Vec<f64> = (0..n as u64).map(|i| super::draw(seed, &[0x6b73, i], |rng| target.sample(rng))).collect();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = target.cdf(x)?;
        d = d.max((c - i as f64 / nf).abs()).max(((i + 1) as f64 / nf - c).abs());
    }
    let threshold = 1.95 / nf.sqrt();
    Ok(KsOutcome {
        statistic: d,
        threshold,
        pass: d < threshold,
    })
}
