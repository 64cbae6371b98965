//! Observation-side kernels `L_{s,h}`.
//!
//! For a point `x > 0` away from zero,
//! `L_{s,h}(x, y) = x^{s-1} y^{-s} ρ(ln(y/x))` with
//! `ρ(t) = (1/2π) ∫ e^{-iωt} Ǩ((s+iω)h) / g̃(1-s-iω) dω`.
//! For the origin, `L_{s,h}(y) = h^{s-1} y^{-s} ρ_s(ln(y/h))` with
//! `ρ_s(u) = (1/2π) ∫ e^{-iωu} K̃(s+iω) / g̃(1-s-iω) dω`.
//!
//! The line kernels used here are even, so `Ǩ(zh) = Ǩ(-zh)` and the sign
//! convention of the Laplace argument does not matter.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelK, TransformKind};
use crate::mellin::{identifiability_check, mellin_analytic, ErrorKind, ErrorModel, IDENTIFIABILITY_FLOOR};
use crate::quad::decay_extent;
use crate::special::jackknife_weights;

/// A Mellin transform evaluator on the complex plane.
pub type MellinEval = Arc<dyn Fn(Complex64) -> Result<Complex64> + Send + Sync>;

const FREQ_FLOOR: f64 = 1e-12;
const TAIL_FLOOR: f64 = 1e-10;
const SCAN_STEPS: usize = 400_000;
const MAX_HALF_WIDTH: f64 = 4096.0;
const COARSE_SAMPLES: usize = 2048;

/// Which construction produced an [`LKernel`].
#[derive(Debug, Clone, PartialEq)]
pub enum LKernelKind {
    /// Gaussian jackknife kernel with power-law errors `ν x^{ν-1}` on `[0, 1]`.
    ClosedBeta {
        nu: f64,
        m: u32,
        h: f64,
    },
    /// Exponential-base kernel at the origin with errors `ν x^{ν-1}`.
    ClosedBetaZero {
        nu: f64,
        m: u32,
        s: f64,
        h: f64,
    },
    NumericTable {
        model: String,
        kernel: KernelFamily,
        s: f64,
        h: f64,
    },
    ZeroNumericTable {
        model: String,
        kernel: KernelFamily,
        s: f64,
        h: f64,
    },
    TwoSided {
        kernel: KernelFamily,
        s: f64,
        h: f64,
    },
}

/// `ρ` tabulated on `[-T, T]` with exact derivatives for Hermite interpolation.
#[derive(Debug, Clone)]
pub struct RhoTable {
    half_width: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl RhoTable {
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (-self.half_width + i as f64 * self.step, *v))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Cubic Hermite interpolation; zero outside `[-T, T]`.
    pub fn eval(&self, t: f64) -> f64 {
        if !(t >= -self.half_width && t <= self.half_width) {
            return 0.0;
        }
        let pos = (t + self.half_width) / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let u = pos - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * d0 + (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * d1
    }
}

/// Trapezoid samples `F(k Δω)`, `k = 0..=K`, of a Hermitian line integrand.
struct Spectrum {
    d_omega: f64,
    samples: Vec<Complex64>,
}

impl Spectrum {
    fn new<F: Fn(f64) -> Result<Complex64>>(f: &F, d_omega: f64, cutoff: f64) -> Result<Self> {
        let count = (cutoff / d_omega).ceil() as usize;
        let samples = (0..=count).map(|k| f(k as f64 * d_omega)).collect::<Result<Vec<_>>>()?;
        Ok(Self { d_omega, samples })
    }

    /// `ρ(t)` and `ρ'(t)` from `(1/π) Re ∫₀^∞ e^{-iωt} F(ω) dω`.
    fn rho(&self, t: f64) -> (f64, f64) {
        let rot = Complex64::from_polar(1.0, -self.d_omega * t);
        let mut phase = Complex64::new(1.0, 0.0);
        let (mut v, mut d) = (0.5 * self.samples[0].re, 0.0);
        for (k, f) in self.samples.iter().enumerate().skip(1) {
            phase *= rot;
            if k % 64 == 0 {
                // Renormalise the recurrence against drift.
                phase = Complex64::from_polar(1.0, -self.d_omega * t * k as f64);
            }
            let term = phase * f;
            v += term.re;
            // d/dt e^{-iωt} = -iω e^{-iωt}; Re(-i w) = Im(w).
            d += k as f64 * self.d_omega * term.im;
        }
        (v * self.d_omega / PI, d * self.d_omega / PI)
    }
}

fn frequency_cutoff<F: Fn(f64) -> Result<Complex64>>(f: &F, scale: f64) -> Result<f64> {
    let step = 0.05 * scale.max(1.0);
    let mut failure = None;
    let cutoff = decay_extent(
        |w| match f(w) {
            Ok(v) => v.norm(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        step,
        FREQ_FLOOR,
        40,
        SCAN_STEPS,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    cutoff.ok_or_else(|| {
        Error::DivergentIntegrand(format!(
            "|Ǩ/g̃| did not fall below {FREQ_FLOOR:e} of its peak for |ω| ≤ {:.3e}",
            step * SCAN_STEPS as f64
        ))
    })
}

/// Tabulates `ρ(t) = (1/2π) ∫ e^{-iωt} F(ω) dω` for a Hermitian `F`.
///
/// `scale` is the frequency scale of `F` (`1/h` for point kernels). The
/// half-width grows by doubling until `|ρ(±T)| < 1e-10 max|ρ|`.
pub fn build_rho_table<F: Fn(f64) -> Result<Complex64>>(f: F, scale: f64) -> Result<RhoTable> {
    let cutoff = frequency_cutoff(&f, scale)?;
    let mut guess = (16.0 * PI / cutoff).max(0.5);
    while guess <= MAX_HALF_WIDTH {
        // Period 4T of the trapezoid images keeps aliasing off [-T, T].
        let spectrum = Spectrum::new(&f, PI / (2.0 * guess), cutoff)?;
        let coarse_step = 2.0 * guess / COARSE_SAMPLES as f64;
        let coarse: Vec<f64> = (0..=COARSE_SAMPLES).map(|i| spectrum.rho(-guess + i as f64 * coarse_step).0).collect();
        let peak = coarse.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::DivergentIntegrand("line integral vanishes or overflows".into()));
        }
        let small = |v: &f64| v.abs() < TAIL_FLOOR * peak;
        if !small(&coarse[0]) || !small(&coarse[COARSE_SAMPLES]) {
            guess *= 2.0;
            continue;
        }
        let first_big = coarse.iter().position(|v| !small(v)).unwrap_or(0);
        let last_big = coarse.iter().rposition(|v| !small(v)).unwrap_or(COARSE_SAMPLES);
        let reach_lo = guess - (first_big.saturating_sub(1)) as f64 * coarse_step;
        let reach_hi = -guess + ((last_big + 1).min(COARSE_SAMPLES)) as f64 * coarse_step;
        let half_width = reach_lo.max(reach_hi).max(4.0 * coarse_step);
        let step = (PI / (16.0 * cutoff)).min(half_width / 32.0);
        let n = (2.0 * half_width / step).ceil() as usize;
        let step = 2.0 * half_width / n as f64;
        let (values, slopes): (Vec<f64>, Vec<f64>) = (0..=n).map(|i| spectrum.rho(-half_width + i as f64 * step)).unzip();
        let table = RhoTable {
            half_width,
            step,
            values,
            slopes,
        };
        let max = table.max_abs();
        if table.values[0].abs() < TAIL_FLOOR * max && table.values[n].abs() < TAIL_FLOOR * max {
            return Ok(table);
        }
        guess *= 2.0;
    }
    Err(Error::DivergentIntegrand(format!(
        "ρ does not decay to {TAIL_FLOOR:e} of its peak within |t| ≤ {MAX_HALF_WIDTH}"
    )))
}

#[derive(Debug, Clone)]
enum Repr {
    ClosedBeta { weights: Vec<f64> },
    ClosedBetaZero { weights: Vec<f64> },
    Point { rho: RhoTable },
    Zero { rho: RhoTable, flat_from: f64, left_limit: f64 },
    TwoSided { plus: RhoTable, minus: RhoTable },
}

/// The observation-side kernel. Immutable once built.
#[derive(Debug, Clone)]
pub struct LKernel {
    kind: LKernelKind,
    s: f64,
    h: f64,
    repr: Repr,
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")))
    }
}

/// Closed form for the Gaussian jackknife kernel of order `m` under errors
/// with density `ν x^{ν-1}` on `[0, 1]`:
/// `L(x, y) = x^{-1} Σ c_j φ(t/a_j)/a_j · (1 - t/(ν a_j²))`, `t = ln(y/x)`, `a_j = jh`.
pub fn lkernel_closed_beta(nu: f64, m: u32, h: f64) -> Result<LKernel> {
    check_bandwidth(h)?;
    if !(nu > 0.0 && nu.is_finite()) || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "closed beta kernel needs nu > 0 and m >= 1 (nu={nu}, m={m})"
        )));
    }
    Ok(LKernel {
        kind: LKernelKind::ClosedBeta { nu, m, h },
        s: 0.0,
        h,
        repr: Repr::ClosedBeta {
            weights: jackknife_weights(m),
        },
    })
}

/// Closed form at the origin for the exponential-base kernel of order `m`
/// under errors `ν x^{ν-1}`:
/// `L(y) = Σ c_j (jh)^{-1} e^{-y/(jh)} (1 - y/(jhν))`.
///
/// The value does not depend on `s`; it equals the line integral for any
/// `s ∈ (0, ν)`.
pub fn lkernel_closed_beta_zero(nu: f64, m: u32, s: f64, h: f64) -> Result<LKernel> {
    check_bandwidth(h)?;
    if !(nu > 0.0 && nu.is_finite()) || m == 0 || !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "closed beta zero kernel needs nu > 0, m >= 1, s > 0 (nu={nu}, m={m}, s={s})"
        )));
    }
    Ok(LKernel {
        kind: LKernelKind::ClosedBetaZero { nu, m, s, h },
        s,
        h,
        repr: Repr::ClosedBetaZero {
            weights: jackknife_weights(m),
        },
    })
}

fn line_in_strip(model: &ErrorModel, s: f64) -> Result<()> {
    model.strip.check(Complex64::new(1.0 - s, 0.0))
}

/// Numerical `L_{s,h}(x, y)` for a one-sided error model and a line kernel.
pub fn lkernel_numeric(model: &ErrorModel, kernel: &KernelK, s: f64, h: f64) -> Result<LKernel> {
    check_bandwidth(h)?;
    if kernel.transform_kind() != TransformKind::Laplace {
        return Err(Error::InvalidParameter(
            "point kernels need a line kernel with a Laplace transform".into(),
        ));
    }
    line_in_strip(model, s)?;
    let f = |w: f64| -> Result<Complex64> {
        let z = Complex64::new(s, w);
        Ok(kernel.transform(z * h)? / mellin_analytic(model, 1.0 - z)?)
    };
    let rho = build_rho_table(f, 1.0 / h)?;
    Ok(LKernel {
        kind: LKernelKind::NumericTable {
            model: model.label(),
            kernel: kernel.family(),
            s,
            h,
        },
        s,
        h,
        repr: Repr::Point { rho },
    })
}

/// Numerical `L_{s,h}(y)` at the origin for a kernel on `[0, ∞)`.
pub fn lkernel_zero_numeric(model: &ErrorModel, kernel: &KernelK, s: f64, h: f64) -> Result<LKernel> {
    check_bandwidth(h)?;
    if kernel.transform_kind() != TransformKind::Mellin {
        return Err(Error::InvalidParameter(
            "the zero estimator needs a kernel on [0, ∞) with a Mellin transform".into(),
        ));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!("the zero estimator needs 0 < s < 1, got {s}")));
    }
    line_in_strip(model, s)?;
    let f = |w: f64| -> Result<Complex64> {
        let z = Complex64::new(s, w);
        Ok(kernel.transform(z)? / mellin_analytic(model, 1.0 - z)?)
    };
    let rho = build_rho_table(f, 1.0)?;
    // Near y = 0 the factor y^{-s} amplifies table round-off by e^{-su};
    // below u = ln(1e-4)/s, L has settled to its limit at the origin.
    let flat_from = (-rho.half_width()).max(-(1e4f64).ln() / s);
    let left_limit = (-s * flat_from).exp() * rho.eval(flat_from) / h;
    Ok(LKernel {
        kind: LKernelKind::ZeroNumericTable {
            model: model.label(),
            kernel: kernel.family(),
            s,
            h,
        },
        s,
        h,
        repr: Repr::Zero { rho, flat_from, left_limit },
    })
}

/// Both branches of `L_{s,h}` for an error density on the whole line with
/// one-sided Mellin transforms `g̃⁺` and `g̃⁻`.
pub fn lkernel_two_sided(g_plus: MellinEval, g_minus: MellinEval, kernel: &KernelK, s: f64, h: f64) -> Result<LKernel> {
    check_bandwidth(h)?;
    if kernel.transform_kind() != TransformKind::Laplace {
        return Err(Error::InvalidParameter(
            "two-sided kernels need a line kernel with a Laplace transform".into(),
        ));
    }
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let omegas: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.05).collect();
    let check = identifiability_check(
        |z| g_plus(z).unwrap_or(nan),
        |z| g_minus(z).unwrap_or(nan),
        1.0 - s,
        &omegas,
        IDENTIFIABILITY_FLOOR,
    );
    if !check.identifiable {
        return Err(Error::NotIdentifiable(check.margin));
    }
    let minus_vanishes = omegas
        .iter()
        .all(|&w| g_minus(Complex64::new(1.0 - s, w)).map(|v| v.norm() == 0.0).unwrap_or(false));
    let branch = |numerator: &MellinEval, sign: f64| {
        let (gp_eval, gm_eval, num) = (g_plus.clone(), g_minus.clone(), numerator.clone());
        move |w: f64| -> Result<Complex64> {
            let z = Complex64::new(s, w);
            if minus_vanishes {
                // g̃⁻ ≡ 0: the quotient reduces to Ǩ / g̃⁺.
                return Ok(kernel.transform(z * h)? / gp_eval(1.0 - z)?);
            }
            let (gp, gm) = (gp_eval(1.0 - z)?, gm_eval(1.0 - z)?);
            Ok(kernel.transform(z * h)? * num(1.0 - z)? * sign / (gp * gp - gm * gm))
        }
    };
    let plus = build_rho_table(branch(&g_plus, 1.0), 1.0 / h)?;
    let minus = if minus_vanishes {
        let n = plus.values.len();
        RhoTable {
            half_width: plus.half_width,
            step: plus.step,
            values: vec![0.0; n],
            slopes: vec![0.0; n],
        }
    } else {
        build_rho_table(branch(&g_minus, -1.0), 1.0 / h)?
    };
    Ok(LKernel {
        kind: LKernelKind::TwoSided {
            kernel: kernel.family(),
            s,
            h,
        },
        s,
        h,
        repr: Repr::TwoSided { plus, minus },
    })
}

/// Builds `L` for a point away from zero, preferring the closed form when
/// the model has power-law errors on `[0, 1]` and the kernel is the Gaussian
/// jackknife.
pub fn lkernel_for_point(model: &ErrorModel, kernel: &KernelK, s: f64, h: f64) -> Result<LKernel> {
    if let (ErrorKind::Beta { nu, theta }, KernelFamily::GaussianJackknife { m }) = (&model.kind, kernel.family()) {
        if *theta == 1.0 {
            line_in_strip(model, s)?;
            return lkernel_closed_beta(nu + 1.0, m, h);
        }
    }
    lkernel_numeric(model, kernel, s, h)
}

/// Builds `L` at the origin, preferring the closed form for power-law errors
/// with the exponential-base kernel and `s` inside the admissible line range.
pub fn lkernel_for_zero(model: &ErrorModel, kernel: &KernelK, s: f64, h: f64) -> Result<LKernel> {
    if let (ErrorKind::Beta { nu, theta }, KernelFamily::ExponentialJackknife { m }) = (&model.kind, kernel.family()) {
        if *theta == 1.0 && s > 0.0 && s < nu + 1.0 {
            return lkernel_closed_beta_zero(nu + 1.0, m, s, h);
        }
    }
    lkernel_zero_numeric(model, kernel, s, h)
}

fn std_normal(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl LKernel {
    pub fn kind(&self) -> &LKernelKind {
        &self.kind
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// True for kernels of the estimator at the origin.
    pub fn is_zero_kernel(&self) -> bool {
        matches!(self.repr, Repr::ClosedBetaZero { .. } | Repr::Zero { .. })
    }

    /// Tabulated profile, if any (the `y/x > 0` branch for two-sided kernels).
    pub fn rho_table(&self) -> Option<&RhoTable> {
        match &self.repr {
            Repr::Point { rho } | Repr::Zero { rho, .. } => Some(rho),
            Repr::TwoSided { plus, .. } => Some(plus),
            _ => None,
        }
    }

    /// The log-scale profile: `ρ(t) = x^{1-s} y^{s} L(x, y)` at `t = ln(y/x)`
    /// for point kernels, `ρ_s(u) = h^{1-s} y^{s} L(y)` at `u = ln(y/h)` at zero.
    pub fn rho(&self, t: f64) -> f64 {
        match &self.repr {
            Repr::ClosedBeta { .. } => self.closed_beta(1.0, t.exp()),
            Repr::ClosedBetaZero { .. } => {
                let y = self.h * t.exp();
                (self.s * t).exp() * self.h * self.closed_beta_zero(y)
            }
            Repr::Point { rho } | Repr::Zero { rho, .. } => rho.eval(t),
            Repr::TwoSided { plus, .. } => plus.eval(t),
        }
    }

    fn closed_beta(&self, x: f64, y: f64) -> f64 {
        let (Repr::ClosedBeta { weights }, LKernelKind::ClosedBeta { nu, h, .. }) = (&self.repr, &self.kind) else {
            unreachable!()
        };
        let t = (y / x).ln();
        let sum: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let a = (i + 1) as f64 * h;
                c * std_normal(t / a) / a * (1.0 - t / (nu * a * a))
            })
            .sum();
        sum / x
    }

    fn closed_beta_zero(&self, y: f64) -> f64 {
        let (Repr::ClosedBetaZero { weights }, LKernelKind::ClosedBetaZero { nu, h, .. }) = (&self.repr, &self.kind) else {
            unreachable!()
        };
        weights
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let a = (i + 1) as f64 * h;
                c / a * (-y / a).exp() * (1.0 - y / (a * nu))
            })
            .sum()
    }

    /// `L_{s,h}(x, y)` for `x > 0`; zero whenever `y/x ≤ 0` for one-sided kernels.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        if self.is_zero_kernel() {
            return Err(Error::InvalidParameter("kernel is built for the origin; use evaluate0".into()));
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::DomainError(format!("evaluation point x must be positive, got {x}")));
        }
        if y.is_nan() {
            return Err(Error::DomainError("observation is NaN".into()));
        }
        Ok(self.evaluate_unchecked(x, y))
    }

    /// [`evaluate`](Self::evaluate) without argument validation.
    pub(crate) fn evaluate_unchecked(&self, x: f64, y: f64) -> f64 {
        let ratio = y / x;
        match &self.repr {
            Repr::ClosedBeta { .. } => {
                if ratio > 0.0 {
                    self.closed_beta(x, y)
                } else {
                    0.0
                }
            }
            Repr::Point { rho } => {
                if ratio > 0.0 {
                    let t = ratio.ln();
                    (-self.s * t).exp() * rho.eval(t) / x
                } else {
                    0.0
                }
            }
            Repr::TwoSided { plus, minus } => {
                if ratio == 0.0 {
                    return 0.0;
                }
                let t = ratio.abs().ln();
                let table = if ratio > 0.0 { plus } else { minus };
                (-self.s * t).exp() * table.eval(t) / x
            }
            Repr::ClosedBetaZero { .. } | Repr::Zero { .. } => f64::NAN,
        }
    }

    /// `L_{s,h}(y)` of the estimator at the origin, `y ≥ 0`.
    pub fn evaluate0(&self, y: f64) -> Result<f64> {
        if !self.is_zero_kernel() {
            return Err(Error::InvalidParameter("kernel is built for a point x > 0; use evaluate".into()));
        }
        if y.is_nan() {
            return Err(Error::DomainError("observation is NaN".into()));
        }
        Ok(self.evaluate0_unchecked(y))
    }

    pub(crate) fn evaluate0_unchecked(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        match &self.repr {
            Repr::ClosedBetaZero { .. } => self.closed_beta_zero(y),
            Repr::Zero { rho, flat_from, left_limit } => {
                let u = (y / self.h).ln();
                if u < *flat_from {
                    *left_limit
                } else {
                    (-self.s * u).exp() * rho.eval(u) / self.h
                }
            }
            _ => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_exponential_kernel, build_flat_kernel, build_gaussian_jackknife_kernel, build_zero_kernel};

    #[test]
    fn closed_beta_reference_value() {
        let l = lkernel_closed_beta(1.0, 1, 0.5).unwrap();
        let v = l.evaluate(1.0, 1.0).unwrap();
        assert!((v - 3.0 / (2.0 * PI).sqrt()).abs() < 1e-14, "{v}");
        assert_eq!(l.evaluate(1.0, -2.0).unwrap(), 0.0);
        assert_eq!(l.evaluate(1.0, 0.0).unwrap(), 0.0);
        assert!(matches!(l.evaluate(0.0, 1.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn closed_beta_zero_reference_value() {
        let l = lkernel_closed_beta_zero(1.0, 1, 0.5, 1.0).unwrap();
        assert!((l.evaluate0(0.0).unwrap() - 1.5).abs() < 1e-15);
        assert!(l.evaluate0(200.0).unwrap().abs() < 1e-40);
        assert!(l.evaluate(1.0, 1.0).is_err());
    }

    #[test]
    fn numeric_matches_closed_beta() {
        for &(nu, m, h) in &[(1.0, 1, 0.5), (0.5, 2, 0.2)] {
            let model = ErrorModel::power(nu).unwrap();
            let k = build_gaussian_jackknife_kernel(m).unwrap();
            let num = lkernel_numeric(&model, &k, 0.0, h).unwrap();
            let closed = lkernel_closed_beta(nu, m, h).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..20 {
                for j in 0..10 {
                    let x = 0.2 * 1.25f64.powi(i);
                    let y = x * (0.5 + 0.1 * j as f64);
                    worst = worst.max((num.evaluate(x, y).unwrap() - closed.evaluate(x, y).unwrap()).abs());
                }
            }
            assert!(worst < 1e-6, "nu={nu} m={m} h={h}: {worst:e}");
        }
    }

    #[test]
    fn no_noise_gives_scaled_kernel() {
        let model = ErrorModel::point_mass();
        let k = build_flat_kernel(2, 2).unwrap();
        let h = 0.4;
        let l = lkernel_numeric(&model, &k, 0.0, h).unwrap();
        for i in 0..40 {
            let y = 0.6 + 0.02 * i as f64;
            let expect = k.evaluate(y.ln() / h) / h;
            assert!((l.evaluate(1.0, y).unwrap() - expect).abs() < 1e-7, "y={y}");
        }
    }

    #[test]
    fn numeric_s_independence() {
        let model = ErrorModel::power(0.5).unwrap();
        let k = build_gaussian_jackknife_kernel(2).unwrap();
        let a = lkernel_numeric(&model, &k, 0.0, 0.3).unwrap();
        let b = lkernel_numeric(&model, &k, -0.5, 0.3).unwrap();
        for i in 0..50 {
            let y = 0.3 + 0.03 * i as f64;
            let (va, vb) = (a.evaluate(1.1, y).unwrap(), b.evaluate(1.1, y).unwrap());
            assert!((va - vb).abs() < 2e-6, "y={y}: {va} vs {vb}");
        }
    }

    #[test]
    fn strip_violation() {
        let model = ErrorModel::power(0.5).unwrap();
        let k = build_gaussian_jackknife_kernel(1).unwrap();
        assert!(matches!(lkernel_numeric(&model, &k, 0.7, 0.3), Err(Error::StripViolation { .. })));
    }

    #[test]
    fn divergent_pairing() {
        // Compactly supported kernel against super-smooth errors.
        let model = ErrorModel::gamma(2.0, 1.0).unwrap();
        let k = build_flat_kernel(1, 1).unwrap();
        assert!(matches!(lkernel_numeric(&model, &k, 0.0, 0.5), Err(Error::DivergentIntegrand(_))));
    }

    #[test]
    fn table_decay_invariant() {
        let model = ErrorModel::uniform(1.0).unwrap();
        let k = build_gaussian_jackknife_kernel(2).unwrap();
        let l = lkernel_numeric(&model, &k, 0.0, 0.25).unwrap();
        let rho = l.rho_table().unwrap();
        let t = rho.half_width();
        assert!(rho.eval(t).abs() < 1e-10 * rho.max_abs());
        assert!(rho.eval(-t).abs() < 1e-10 * rho.max_abs());
        assert_eq!(rho.eval(t + 1.0), 0.0);
    }

    #[test]
    fn zero_numeric_matches_closed_form() {
        let nu = 1.0;
        let model = ErrorModel::power(nu).unwrap();
        let k = build_exponential_kernel(1).unwrap();
        let h = 0.5;
        let num = lkernel_zero_numeric(&model, &k, 0.5 * nu, h).unwrap();
        let closed = lkernel_closed_beta_zero(nu, 1, 0.5 * nu, h).unwrap();
        for i in 0..60 {
            let y = 0.05 * i as f64;
            let (a, b) = (num.evaluate0(y).unwrap(), closed.evaluate0(y).unwrap());
            assert!((a - b).abs() < 1e-6, "y={y}: {a} vs {b}");
        }
    }

    #[test]
    fn zero_no_noise_gives_scaled_kernel() {
        let k = build_zero_kernel(1, 0.5).unwrap();
        let h = 0.7;
        let l = lkernel_zero_numeric(&ErrorModel::point_mass(), &k, 0.5, h).unwrap();
        for i in 1..40 {
            let y = 0.1 * i as f64;
            assert!((l.evaluate0(y).unwrap() - k.evaluate(y / h) / h).abs() < 1e-7, "y={y}");
        }
        let rho0 = l.rho(0.0);
        assert!((l.evaluate0(h).unwrap() - rho0 / h).abs() < 1e-12);
    }

    fn mellin_fn(f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> MellinEval {
        Arc::new(move |z| Ok(f(z)))
    }

    #[test]
    fn two_sided_reduces_to_one_sided() {
        let k = build_gaussian_jackknife_kernel(1).unwrap();
        let model = ErrorModel::uniform(1.0).unwrap();
        let one = lkernel_numeric(&model, &k, 0.0, 0.3).unwrap();
        let two = lkernel_two_sided(mellin_fn(|z| 1.0 / z), mellin_fn(|_| Complex64::new(0.0, 0.0)), &k, 0.0, 0.3).unwrap();
        for i in 0..30 {
            let y = 0.5 + 0.05 * i as f64;
            assert_eq!(one.evaluate(1.0, y).unwrap(), two.evaluate(1.0, y).unwrap());
        }
        assert_eq!(two.evaluate(1.0, -1.0).unwrap(), 0.0);
    }

    #[test]
    fn two_sided_symmetric_not_identifiable() {
        let k = build_gaussian_jackknife_kernel(1).unwrap();
        let r = lkernel_two_sided(mellin_fn(|z| 0.5 / z), mellin_fn(|z| 0.5 / z), &k, 0.0, 0.3);
        assert!(matches!(r, Err(Error::NotIdentifiable(_))));
    }

    #[test]
    fn two_sided_continuous_in_epsilon() {
        let k = build_gaussian_jackknife_kernel(1).unwrap();
        let build = |eps: f64| lkernel_two_sided(mellin_fn(|z| 1.0 / z), mellin_fn(move |z| eps / z), &k, 0.0, 0.3).unwrap();
        let base = build(0.0);
        let near = build(1e-4);
        for i in 0..30 {
            let y = 0.5 + 0.05 * i as f64;
            let (a, b) = (base.evaluate(1.0, y).unwrap(), near.evaluate(1.0, y).unwrap());
            assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
            assert!(near.evaluate(1.0, -y).unwrap().is_finite());
        }
    }

    #[test]
    fn fast_path_dispatch() {
        let k = build_gaussian_jackknife_kernel(1).unwrap();
        let l = lkernel_for_point(&ErrorModel::power(2.0).unwrap(), &k, 0.0, 0.3).unwrap();
        assert!(matches!(l.kind(), LKernelKind::ClosedBeta { .. }));
        let l = lkernel_for_point(&ErrorModel::uniform(2.0).unwrap(), &k, 0.0, 0.3).unwrap();
        assert!(matches!(l.kind(), LKernelKind::NumericTable { .. }));
    }
}
