//! Kernel estimators of `f_X(x₀)` and `f_X(0)`, bandwidth rules and the
//! quadrature bias oracle.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{KernelK, Support};
use crate::lkernel::{lkernel_for_point, lkernel_for_zero, LKernel};
use crate::mellin::ErrorModel;
use crate::quad::{decay_extent, integrate_breaks, Tolerance};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_C1: f64 = 1.0;
pub const DEFAULT_C5: f64 = 1.0;

/// Block length of [`stable_sum`]; fixed so results do not depend on the
/// number of worker threads.
const SUM_BLOCK: usize = 256;
const PARALLEL_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    AtPoint(f64),
    AtZero,
}

/// How `(s, h)` were chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Manual,
    SmoothRule {
        a: f64,
        beta: f64,
        gamma: f64,
    },
    MomentRule {
        a: f64,
        beta: f64,
        gamma: f64,
        alpha: f64,
        m: f64,
        b: f64,
        epsilon: f64,
    },
    SuperSmoothRule {
        a: f64,
        beta: f64,
        gamma: f64,
        lambda: f64,
    },
    ZeroRule {
        a: f64,
        beta: f64,
        m: f64,
        p: f64,
        q: f64,
    },
}

/// Non-fatal conditions reported alongside an estimate or bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The theorem's side condition `h < limit` fails.
    BandwidthTooLarge { h: f64, limit: f64 },
    /// Observations below zero under a model with nonnegative support;
    /// they contribute zero.
    NegativeObservations { count: usize },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::BandwidthTooLarge { h, limit } => write!(f, "BandwidthTooLarge: h = {h} is not below {limit}"),
            Warning::NegativeObservations { count } => {
                write!(f, "NegativeObservations: {count} observation(s) below zero contribute 0")
            }
        }
    }
}

/// Local Hölder class parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderClassSpec {
    pub a: f64,
    pub beta: f64,
    pub r: f64,
    pub m: f64,
}

impl HolderClassSpec {
    pub fn new(a: f64, beta: f64, r: f64, m: f64) -> Result<Self> {
        if !(a > 0.0 && beta > 0.0 && r > 1.0 && m >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "class needs A > 0, beta > 0, r > 1, M >= 0 (A={a}, beta={beta}, r={r}, M={m})"
            )));
        }
        Ok(Self { a, beta, r, m })
    }
}

/// A fully specified estimator.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub target: Target,
    pub lkernel: Arc<LKernel>,
    /// The deconvolution-side kernel, needed only by [`expected_estimate`].
    pub kernel: Option<Arc<KernelK>>,
    pub provenance: Provenance,
}

impl EstimatorConfig {
    /// Wraps a prebuilt `L`, checking it matches the target.
    pub fn new(target: Target, lkernel: Arc<LKernel>) -> Result<Self> {
        match target {
            Target::AtPoint(x0) if !(x0 > 0.0 && x0.is_finite()) => return Err(Error::InvalidParameter(format!("x0 must be positive, got {x0}"))),
            Target::AtPoint(_) if lkernel.is_zero_kernel() => {
                return Err(Error::InvalidParameter("point target with a kernel built for the origin".into()))
            }
            Target::AtZero if !lkernel.is_zero_kernel() => {
                return Err(Error::InvalidParameter("zero target with a kernel built for a point x > 0".into()))
            }
            _ => {}
        }
        Ok(Self {
            target,
            lkernel,
            kernel: None,
            provenance: Provenance::Manual,
        })
    }

    /// Builds `L_{s,h}` for `model` and `kernel` (closed form when available).
    pub fn build(target: Target, model: &ErrorModel, kernel: Arc<KernelK>, s: f64, h: f64) -> Result<Self> {
        let l = match target {
            Target::AtPoint(_) => lkernel_for_point(model, &kernel, s, h)?,
            Target::AtZero => lkernel_for_zero(model, &kernel, s, h)?,
        };
        let mut cfg = Self::new(target, Arc::new(l))?;
        cfg.kernel = Some(kernel);
        Ok(cfg)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn s(&self) -> f64 {
        self.lkernel.s()
    }

    pub fn h(&self) -> f64 {
        self.lkernel.h()
    }
}

/// Point estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub n: usize,
    pub warnings: Vec<Warning>,
}

/// Sum in fixed blocks combined pairwise; the result depends only on the
/// order of `values`.
pub fn stable_sum(values: &[f64]) -> f64 {
    fn pairwise(v: &[f64]) -> f64 {
        if v.len() <= SUM_BLOCK {
            v.iter().sum()
        } else {
            let blocks = v.len().div_ceil(SUM_BLOCK);
            let mid = (blocks / 2) * SUM_BLOCK;
            pairwise(&v[..mid]) + pairwise(&v[mid..])
        }
    }
    pairwise(values)
}

fn mean_of<F: Fn(f64) -> f64 + Sync>(sample: &[f64], f: F) -> Result<Estimate> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(bad) = sample.iter().find(|y| !y.is_finite()) {
        return Err(Error::DomainError(format!("non-finite observation {bad}")));
    }
    let values: Vec<f64> = if sample.len() >= PARALLEL_THRESHOLD {
        sample.par_iter().map(|&y| f(y)).collect()
    } else {
        sample.iter().map(|&y| f(y)).collect()
    };
    let negative = sample.iter().filter(|&&y| y < 0.0).count();
    let warnings = if negative > 0 {
        vec![Warning::NegativeObservations { count: negative }]
    } else {
        Vec::new()
    };
    Ok(Estimate {
        value: stable_sum(&values) / sample.len() as f64,
        n: sample.len(),
        warnings,
    })
}

/// `f̂(x₀) = n^{-1} Σ L_{s,h}(x₀, Y_j)`.
pub fn estimate_at_point(sample: &[f64], config: &EstimatorConfig) -> Result<Estimate> {
    let Target::AtPoint(x0) = config.target else {
        return Err(Error::InvalidParameter("configuration targets the origin".into()));
    };
    let l = &config.lkernel;
    l.evaluate(x0, 1.0)?;
    mean_of(sample, |y| l.evaluate_unchecked(x0, y))
}

/// `f̂(0) = n^{-1} Σ L_{s,h}(Y_j)`.
pub fn estimate_at_zero(sample: &[f64], config: &EstimatorConfig) -> Result<Estimate> {
    if config.target != Target::AtZero {
        return Err(Error::InvalidParameter("configuration targets a point x0 > 0".into()));
    }
    let l = &config.lkernel;
    l.evaluate0(1.0)?;
    mean_of(sample, |y| l.evaluate0_unchecked(y))
}

/// Dispatches on the configured target.
pub fn estimate(sample: &[f64], config: &EstimatorConfig) -> Result<Estimate> {
    match config.target {
        Target::AtPoint(_) => estimate_at_point(sample, config),
        Target::AtZero => estimate_at_zero(sample, config),
    }
}

fn require_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

/// `h* = [A² x₀² (x₀^β + 1)² n]^{-1/(2β+2γ+1)}` for smooth errors.
pub fn bandwidth_smooth(a: f64, beta: f64, gamma: f64, x0: f64, n: f64) -> Result<f64> {
    require_positive(&[("A", a), ("beta", beta), ("x0", x0), ("n", n)])?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {gamma}")));
    }
    let base = a * a * x0 * x0 * (x0.powf(beta) + 1.0).powi(2) * n;
    Ok(base.powf(-1.0 / (2.0 * beta + 2.0 * gamma + 1.0)))
}

/// Side condition `h < min{ln r, 1}` of the smooth-error rate.
pub fn smooth_side_condition(h: f64, r: f64) -> Option<Warning> {
    let limit = r.ln().min(1.0);
    (h >= limit).then_some(Warning::BandwidthTooLarge { h, limit })
}

/// `s* = max{-α, (1-b)/2 + ε}` for densities with a finite moment of order `2α`.
pub fn s_star_moment(alpha: f64, b: f64, epsilon: f64) -> Result<f64> {
    require_positive(&[("alpha", alpha), ("epsilon", epsilon)])?;
    let second = if b == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        0.5 * (1.0 - b) + epsilon
    };
    Ok((-alpha).max(second))
}

/// Companion bandwidth of [`s_star_moment`]:
/// `h* = C₅ [M^{-1} A² x₀^{2-2s} (x₀^β + 1)² n]^{-1/(2β+2γ+1)}`.
#[allow(clippy::too_many_arguments)]
pub fn bandwidth_moment(a: f64, beta: f64, gamma: f64, m: f64, x0: f64, s: f64, n: f64, c5: f64) -> Result<f64> {
    require_positive(&[("A", a), ("beta", beta), ("M", m), ("x0", x0), ("n", n), ("C5", c5)])?;
    let base = a * a / m * x0.powf(2.0 - 2.0 * s) * (x0.powf(beta) + 1.0).powi(2) * n;
    Ok(c5 * base.powf(-1.0 / (2.0 * beta + 2.0 * gamma + 1.0)))
}

/// `h* = C₁ γ [ln(A² x₀^{2β+2} n)]^{-1 + 1/(2λ)}` for super-smooth errors.
pub fn bandwidth_supersmooth(a: f64, beta: f64, gamma: f64, lambda: f64, x0: f64, n: f64, c1: f64) -> Result<f64> {
    require_positive(&[
        ("A", a),
        ("beta", beta),
        ("gamma", gamma),
        ("lambda", lambda),
        ("x0", x0),
        ("n", n),
        ("C1", c1),
    ])?;
    let arg = a * a * x0.powf(2.0 * beta + 2.0) * n;
    if arg <= std::f64::consts::E {
        return Err(Error::DomainError(format!("A² x0^(2β+2) n = {arg} must exceed e")));
    }
    Ok(c1 * gamma * arg.ln().powf(-1.0 + 0.5 / lambda))
}

/// Tuning at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroTuning {
    pub s: f64,
    pub h: f64,
    pub kappa: u32,
}

/// `s* = (1-p)/2`, `κ = 1{p = 0}`, `h* = [M A^{-2} (ln n)^{q+κ} / n]^{1/(2β+1+p)}`.
pub fn bandwidth_zero(a: f64, beta: f64, m: f64, p: f64, q: f64, n: f64) -> Result<ZeroTuning> {
    require_positive(&[("A", a), ("beta", beta), ("M", m)])?;
    if !(0.0..1.0).contains(&p) || !(q >= 0.0) || !(n >= 3.0) {
        return Err(Error::InvalidParameter(format!("needs 0 <= p < 1, q >= 0, n >= 3 (p={p}, q={q}, n={n})")));
    }
    let kappa = u32::from(p == 0.0);
    let base = m / (a * a) * n.ln().powf(q + kappa as f64) / n;
    Ok(ZeroTuning {
        s: 0.5 * (1.0 - p),
        h: base.powf(1.0 / (2.0 * beta + 1.0 + p)),
        kappa,
    })
}

/// `E f̂ = ∫ K_h(x₀, t) f_X(t) dt` (or `∫ K_{s,h}(t) f_X(t) dt` at the origin)
/// by adaptive quadrature.
pub fn expected_estimate<F: Fn(f64) -> f64>(config: &EstimatorConfig, f_x: F) -> Result<f64> {
    let kernel = config
        .kernel
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("configuration carries no deconvolution kernel".into()))?;
    kernel_smoothed_density(kernel, config.target, config.h(), f_x)
}

/// The kernel-smoothed density the estimator targets, for any kernel.
pub fn kernel_smoothed_density<F: Fn(f64) -> f64>(kernel: &KernelK, target: Target, h: f64, f_x: F) -> Result<f64> {
    let tol = Tolerance::new(1e-14, 1e-12).with_max_panels(20_000);
    let nonconv = || Error::NonConvergence {
        estimate: f64::INFINITY,
        tolerance: 1e-18,
    };
    match (target, kernel.support()) {
        (Target::AtPoint(x0), Support::Compact | Support::Line) => {
            // t = x₀ e^{hu}: K_h(x₀, t) dt = K(u) e^{hu} du.
            let g = |u: f64| {
                let e = (h * u).exp();
                kernel.evaluate(u) * e * f_x(x0 * e)
            };
            let reach = match kernel.support() {
                Support::Compact => 1.0,
                _ => decay_extent(|u| kernel.evaluate(u), 0.0, 0.5, 1e-18, 8, 4000).ok_or_else(nonconv)?,
            };
            let pieces = (4.0 * reach).ceil().max(8.0) as usize;
            let breaks: Vec<f64> = (0..=pieces).map(|i| -reach + 2.0 * reach * i as f64 / pieces as f64).collect();
            integrate_breaks(g, &breaks, tol)
        }
        (Target::AtZero, Support::HalfLine) => {
            // t = h e^w: K_{s,h}(t) dt = K(e^w) e^w dw.
            let g = |w: f64| {
                let e = w.exp();
                kernel.evaluate(e) * e * f_x(h * e)
            };
            let mag = |w: f64| {
                let e = w.exp();
                (kernel.evaluate(e) * e).abs()
            };
            let lo = decay_extent(mag, 0.0, -0.5, 1e-18, 8, 4000).ok_or_else(nonconv)?;
            let hi = decay_extent(mag, 0.0, 0.5, 1e-18, 8, 4000).ok_or_else(nonconv)?;
            let pieces = (2.0 * (hi - lo)).ceil() as usize;
            let breaks: Vec<f64> = (0..=pieces).map(|i| lo + (hi - lo) * i as f64 / pieces as f64).collect();
            integrate_breaks(g, &breaks, tol)
        }
        _ => Err(Error::InvalidParameter("kernel support does not match the estimation target".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_exponential_kernel, build_flat_kernel, build_gaussian_jackknife_kernel};
    use crate::lkernel::{lkernel_closed_beta, lkernel_closed_beta_zero};
    use approx::assert_relative_eq;

    #[test]
    fn single_point_means() {
        let cfg = EstimatorConfig::new(Target::AtPoint(1.0), Arc::new(lkernel_closed_beta(1.0, 1, 0.5).unwrap())).unwrap();
        let e = estimate_at_point(&[1.0], &cfg).unwrap();
        assert_relative_eq!(e.value, 3.0 / (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-14);
        let dup = estimate_at_point(&[1.0; 7], &cfg).unwrap();
        assert_eq!(dup.value, e.value);
        let zcfg = EstimatorConfig::new(Target::AtZero, Arc::new(lkernel_closed_beta_zero(1.0, 1, 0.5, 1.0).unwrap())).unwrap();
        assert_eq!(estimate_at_zero(&[0.0], &zcfg).unwrap().value, 1.5);
        assert_eq!(estimate_at_zero(&[], &zcfg), Err(Error::EmptySample));
        assert!(estimate_at_point(&[1.0], &zcfg).is_err());
    }

    #[test]
    fn negative_observations_warn() {
        let cfg = EstimatorConfig::new(Target::AtPoint(1.0), Arc::new(lkernel_closed_beta(1.0, 1, 0.5).unwrap())).unwrap();
        let e = estimate_at_point(&[1.0, -1.0], &cfg).unwrap();
        assert_eq!(e.warnings, vec![Warning::NegativeObservations { count: 1 }]);
        assert_relative_eq!(e.value, 1.5 / (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn stable_sum_independent_of_threads() {
        let v: Vec<f64> = (0..100_000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e-9 * i as f64).collect();
        let a = stable_sum(&v);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| stable_sum(&v));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn bandwidth_examples() {
        assert_relative_eq!(
            bandwidth_smooth(1.0, 1.0, 1.0, 1.0, 1000.0).unwrap(),
            4000f64.powf(-0.2),
            max_relative = 1e-14
        );
        assert_relative_eq!(bandwidth_smooth(1.0, 1.0, 1.0, 1.0, 1000.0).unwrap(), 0.190_365_394, max_relative = 1e-8);
        let h = bandwidth_supersmooth(1.0, 1.0, std::f64::consts::FRAC_PI_2, 2.0, 1.0, 1e4, 1.0).unwrap();
        assert_relative_eq!(h, std::f64::consts::FRAC_PI_2 * (1e4f64).ln().powf(-0.75), max_relative = 1e-14);
        assert!(matches!(
            bandwidth_supersmooth(1.0, 1.0, 1.0, 2.0, 1.0, 2.0, 1.0),
            Err(Error::DomainError(_))
        ));
        let z = bandwidth_zero(1.0, 1.0, 1.0, 0.0, 0.0, 1000.0).unwrap();
        assert_eq!((z.s, z.kappa), (0.5, 1));
        assert_relative_eq!(z.h, ((1000f64).ln() * 1e-3).powf(1.0 / 3.0), max_relative = 1e-14);
        let z = bandwidth_zero(1.0, 1.0, 1.0, 0.5, 0.0, 1000.0).unwrap();
        assert_eq!((z.s, z.kappa), (0.25, 0));
    }

    #[test]
    fn s_star_examples() {
        assert_eq!(s_star_moment(1.0, f64::INFINITY, 0.01).unwrap(), -1.0);
        assert_relative_eq!(s_star_moment(0.2, 2.0, 0.1).unwrap(), -0.2);
        assert_eq!(s_star_moment(1.0, 1.0, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn side_condition() {
        assert!(smooth_side_condition(0.19, 2.0).is_none());
        assert!(matches!(smooth_side_condition(0.8, 2.0), Some(Warning::BandwidthTooLarge { .. })));
    }

    #[test]
    fn bias_oracle_approaches_density() {
        let k = Arc::new(build_gaussian_jackknife_kernel(1).unwrap());
        let model = ErrorModel::uniform(1.0).unwrap();
        let f = |t: f64| if t >= 0.0 { (-t).exp() } else { 0.0 };
        let target = (-1.0f64).exp();
        let mut last = f64::INFINITY;
        for h in [0.4, 0.2, 0.1] {
            let cfg = EstimatorConfig::build(Target::AtPoint(1.0), &model, k.clone(), 0.0, h).unwrap();
            let err = (expected_estimate(&cfg, f).unwrap() - target).abs();
            assert!(err < last, "h={h}: {err}");
            last = err;
        }
    }

    #[test]
    fn bias_vanishes_for_log_polynomials() {
        // e^t f(x₀ e^t) = 1 + t/2 - t²/5 is reproduced exactly by an order-2 kernel.
        let k = build_flat_kernel(2, 2).unwrap();
        let x0 = 1.5;
        let f = |y: f64| {
            let t = (y / x0).ln();
            (x0 / y) * (1.0 + 0.5 * t - 0.2 * t * t) / x0
        };
        let v = kernel_smoothed_density(&k, Target::AtPoint(x0), 0.3, f).unwrap();
        assert!((v - f(x0)).abs() < 1e-8, "{v} vs {}", f(x0));
    }

    #[test]
    fn constant_density_returns_kernel_mass() {
        let k = build_gaussian_jackknife_kernel(2).unwrap();
        let h = 0.05;
        let v = kernel_smoothed_density(&k, Target::AtPoint(1.0), h, |t| if t > 0.0 && t < 100.0 { 0.01 } else { 0.0 }).unwrap();
        // The mass of K_h(x₀, ·) in t is ∫K(u) e^{hu} du = Ǩ(-h).
        let mass = k.transform(num_complex::Complex64::new(-h, 0.0)).unwrap().re;
        assert_relative_eq!(v, 0.01 * mass, max_relative = 1e-10);
        assert!((mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_bias_oracle_closed_form() {
        // f = 2e^{-2t}: ∫ K_h(t) f(t) dt = Σ c_j 2/(1 + 2jh) for the exponential kernel.
        let k = build_exponential_kernel(2).unwrap();
        let h = 0.1;
        let v = kernel_smoothed_density(&k, Target::AtZero, h, |t| 2.0 * (-2.0 * t).exp()).unwrap();
        let w = crate::special::jackknife_weights(2);
        let exact: f64 = w.iter().enumerate().map(|(i, c)| c * 2.0 / (1.0 + 2.0 * (i + 1) as f64 * h)).sum();
        assert_relative_eq!(v, exact, max_relative = 1e-10);
    }
}
