//! Adaptive Gauss–Kronrod quadrature for real and complex integrands.
//!
//! Global subdivision on a 7/15-point Gauss–Kronrod pair: the panel with the
//! largest error estimate is bisected until the accumulated estimate falls
//! under the requested tolerance. The error of a panel is `|K15 - G7|`, which
//! overestimates the true K15 error on smooth integrands.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated: closed under addition and real scaling.
pub trait Integrand: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerance and budget of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-12,
            max_panels: 4000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, ..Self::default() }
    }

    pub fn with_max_panels(mut self, max_panels: usize) -> Self {
        self.max_panels = max_panels;
        self
    }
}

/// Result of a single Kronrod panel.
#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
    abs_value: f64,
}

fn kronrod<T: Integrand, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> Panel<T> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_value = fc.magnitude() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let pair = f1 + f2;
        kron = kron + pair * WGK[j];
        abs_value += (f1.magnitude() + f2.magnitude()) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + pair * WG[j / 2];
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).magnitude();
    Panel {
        a,
        b,
        value,
        error,
        abs_value: abs_value * half.abs(),
    }
}

/// Integrates `f` over `[a, b]` to the given tolerance.
pub fn integrate<T, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<T>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    integrate_panels(&mut f, &[a, b], tol)
}

/// Integrates over consecutive intervals `[p0, p1], [p1, p2], ...`, placing a
/// panel boundary at every breakpoint.
pub fn integrate_breaks<T, F>(mut f: F, points: &[f64], tol: Tolerance) -> Result<T>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    integrate_panels(&mut f, points, tol)
}

fn integrate_panels<T, F>(f: &mut F, points: &[f64], tol: Tolerance) -> Result<T>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    if points.len() < 2 {
        return Ok(T::zero());
    }
    let mut panels: Vec<Panel<T>> = points.windows(2).filter(|w| w[1] != w[0]).map(|w| kronrod(f, w[0], w[1])).collect();
    loop {
        let total = panels.iter().fold(T::zero(), |acc, p| acc + p.value);
        let err: f64 = panels.iter().map(|p| p.error).sum();
        let abs_total: f64 = panels.iter().map(|p| p.abs_value).sum();
        // Rounding floor: cancellation limits what any rule can resolve.
        let floor = 50.0 * f64::EPSILON * abs_total;
        let target = tol.abs.max(tol.rel * total.magnitude()).max(floor);
        if err <= target {
            return Ok(total);
        }
        if panels.len() >= tol.max_panels {
            return Err(Error::NonConvergence {
                estimate: err,
                tolerance: target,
            });
        }
        let (worst, _) = panels.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, be), (i, p)| if p.error > be { (i, p.error) } else { (bi, be) },
        );
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a.min(p.b) || mid >= p.a.max(p.b) {
            return Err(Error::NonConvergence {
                estimate: err,
                tolerance: target,
            });
        }
        panels.push(kronrod(f, p.a, mid));
        panels.push(kronrod(f, mid, p.b));
    }
}

/// Finds how far the integrand must be followed from `start` in direction
/// `step` (signed) before its magnitude stays below `rel_floor * peak`.
///
/// Walks in increments of `step` and requires `quiet` consecutive small
/// samples; gives up after `max_steps` and returns `None`.
pub fn decay_extent<F>(mut magnitude: F, start: f64, step: f64, rel_floor: f64, quiet: usize, max_steps: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut peak = magnitude(start).abs();
    let mut small_run = 0;
    let mut last_big = start;
    for k in 1..=max_steps {
        let t = start + step * k as f64;
        let m = magnitude(t).abs();
        if !m.is_finite() {
            return None;
        }
        if m > peak {
            peak = m;
        }
        if m <= rel_floor * peak {
            small_run += 1;
            if small_run >= quiet {
                return Some(last_big + step);
            }
        } else {
            small_run = 0;
            last_big = t;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let v: f64 = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert_relative_eq!(v, exact, max_relative = 1e-14);
    }

    #[test]
    fn oscillatory_complex() {
        let w = 40.0;
        let v: Complex64 = integrate(|t| Complex64::new(0.0, w * t).exp(), 0.0, 1.0, Tolerance::new(1e-14, 1e-13)).unwrap();
        let exact = (Complex64::new(0.0, w).exp() - 1.0) / Complex64::new(0.0, w);
        assert!((v - exact).norm() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        // ln(1/x) on (0, 1] integrates to 1.
        let v: f64 = integrate(|x: f64| -x.ln(), 0.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-11);
    }

    #[test]
    fn budget_exhaustion_reports_nonconvergence() {
        let r: Result<f64> = integrate(|x: f64| (1.0 / x).sin(), 1e-9, 1.0, Tolerance::new(1e-15, 1e-15).with_max_panels(20));
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn decay_extent_of_gaussian() {
        let ext = decay_extent(|t: f64| (-t * t / 2.0).exp(), 0.0, 0.5, 1e-14, 3, 1000).unwrap();
        assert!(ext > 7.5 && ext < 9.0, "{ext}");
    }
}
