//! Mellin transforms of error densities on the positive half-line.
//!
//! `ũ(z) = ∫₀^∞ x^{z-1} u(x) dx`. Every catalog model carries its closed-form
//! transform together with the vertical strip where that transform
//! converges; [`mellin_numeric`] evaluates the defining integral directly and
//! is the independent check on the closed forms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};

use crate::error::{Error, Result};
use crate::quad::{decay_extent, integrate, integrate_breaks, Tolerance};
use crate::special::complex_gamma;

/// Open vertical strip `a < Re(z) < b`, or the single line `Re(z) = a` when
/// `a == b`. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexStrip {
    pub a: f64,
    pub b: f64,
}

impl ComplexStrip {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::InvalidParameter(format!("strip ({a}, {b}) is empty")));
        }
        Ok(Self { a, b })
    }

    /// The degenerate strip consisting of the line `Re(z) = c`.
    pub fn line(c: f64) -> Self {
        Self { a: c, b: c }
    }

    pub fn is_line(&self) -> bool {
        self.a == self.b
    }

    /// Whether `Re(z) = re` lies inside the strip.
    pub fn contains(&self, re: f64) -> bool {
        if self.is_line() {
            re == self.a
        } else {
            self.a < re && re < self.b
        }
    }

    pub fn check(&self, z: Complex64) -> Result<()> {
        if self.contains(z.re) {
            Ok(())
        } else {
            Err(Error::StripViolation {
                re: z.re,
                im: z.im,
                strip: *self,
            })
        }
    }
}

impl fmt::Display for ComplexStrip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_line() {
            write!(f, "{{Re(z) = {}}}", self.a)
        } else {
            write!(f, "{{{} < Re(z) < {}}}", self.a, self.b)
        }
    }
}

/// Decay of `|g̃(σ + iω)|` as `|ω| → ∞` on a fixed line `Re(z) = σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `B₁|ω|^{-γ} ≤ |g̃| ≤ B₂|ω|^{-γ}` for `|ω| ≥ ω₀`, `|g̃| ≥ c₀` below.
    Smooth { gamma: f64, omega0: f64, c0: f64, b1: f64, b2: f64 },
    /// `B₁|ω|^ν e^{-γ|ω|} ≤ |g̃| ≤ B₂|ω|^ν e^{-γ|ω|}` for `|ω| ≥ ω₀`.
    SuperSmooth {
        gamma: f64,
        nu: f64,
        omega0: f64,
        c0: f64,
        b1: f64,
        b2: f64,
    },
}

impl Decay {
    pub fn gamma(&self) -> f64 {
        match *self {
            Decay::Smooth { gamma, .. } | Decay::SuperSmooth { gamma, .. } => gamma,
        }
    }
}

/// Behaviour of the density near the origin:
/// `c₀ x^{-p} ln^q(1/x) ≤ g(x) ≤ C₀ x^{-p} ln^q(1/x)` on `(0, δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroBehavior {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub c0: f64,
    pub big_c0: f64,
}

impl ZeroBehavior {
    pub fn new(p: f64, q: f64, delta: f64, c0: f64, big_c0: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) || q < 0.0 || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "zero behaviour needs 0 <= p < 1, q >= 0, 0 < delta < 1 (got p={p}, q={q}, delta={delta})"
            )));
        }
        Ok(Self { p, q, delta, c0, big_c0 })
    }
}

/// Regularity metadata of an error density, on the line `Re(z) = sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub sigma: f64,
    pub decay: Decay,
    pub near_zero: Option<ZeroBehavior>,
}

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;
pub type MellinFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// A user-supplied error density.
#[derive(Clone)]
pub struct CustomModel {
    pub name: String,
    pub density: DensityFn,
    pub sampler: SamplerFn,
    /// Closed-form transform; `None` falls back to [`mellin_numeric`].
    pub mellin: Option<MellinFn>,
    pub quad: QuadSpec,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel").field("name", &self.name).finish_non_exhaustive()
    }
}

/// The distribution family of a multiplicative error.
#[derive(Debug, Clone)]
pub enum ErrorKind {
    /// Uniform on `[0, θ]`.
    Uniform {
        theta: f64,
    },
    /// `(ν+1) x^ν / θ^{ν+1}` on `(0, θ)`, `ν > -1`.
    Beta {
        nu: f64,
        theta: f64,
    },
    /// `(ν-1) θ^{ν-1} / x^ν` on `(θ, ∞)`, `ν > 1`.
    Pareto {
        nu: f64,
        theta: f64,
    },
    /// `μ^α x^{α-1} e^{-μx} / Γ(α)`.
    Gamma {
        alpha: f64,
        mu: f64,
    },
    /// `√(2/π) υ^{-1} exp(-x²/2υ²)`.
    HalfNormal {
        upsilon: f64,
    },
    /// Product of two independent Uniform[0,1]: `ln(1/x)` on `(0, 1]`.
    LogProductUniform,
    /// Degenerate `η ≡ 1` (no measurement error).
    PointMass,
    Custom(Arc<CustomModel>),
}

/// A known error density `g` with its Mellin strip and regularity metadata.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    pub strip: ComplexStrip,
    pub regularity: Regularity,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn smooth_beta_constants(nu: f64, theta: f64, sigma: f64) -> Decay {
    let scale = theta.powf(sigma - 1.0) * (nu + 1.0);
    Decay::Smooth {
        gamma: 1.0,
        omega0: 2.0 * (sigma + nu),
        c0: (0.2f64).sqrt() * scale / (nu + sigma),
        b1: (0.8f64).sqrt() * scale,
        b2: scale,
    }
}

impl ErrorModel {
    pub fn uniform(theta: f64) -> Result<Self> {
        positive("theta", theta)?;
        Ok(Self {
            kind: ErrorKind::Uniform { theta },
            strip: ComplexStrip { a: 0.0, b: f64::INFINITY },
            regularity: Regularity {
                sigma: 1.0,
                decay: smooth_beta_constants(0.0, theta, 1.0),
                near_zero: Some(ZeroBehavior {
                    p: 0.0,
                    q: 0.0,
                    delta: 0.5,
                    c0: 1.0 / theta,
                    big_c0: 1.0 / theta,
                }),
            },
        })
    }

    /// Beta-type density `(ν+1) x^ν / θ^{ν+1}` on `(0, θ)`.
    pub fn beta(nu: f64, theta: f64) -> Result<Self> {
        positive("theta", theta)?;
        if !(nu > -1.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta exponent must exceed -1, got {nu}")));
        }
        let near_zero = if nu <= 0.0 {
            let c = (nu + 1.0) / theta.powf(nu + 1.0);
            Some(ZeroBehavior {
                p: -nu,
                q: 0.0,
                delta: 0.5_f64.min(theta * 0.5),
                c0: c,
                big_c0: c,
            })
        } else {
            None
        };
        Ok(Self {
            kind: ErrorKind::Beta { nu, theta },
            strip: ComplexStrip { a: -nu, b: f64::INFINITY },
            regularity: Regularity {
                sigma: 1.0,
                decay: smooth_beta_constants(nu, theta, 1.0),
                near_zero,
            },
        })
    }

    /// Power-law density `k x^{k-1}` on `[0, 1]`, i.e. `beta(k - 1, 1)`.
    pub fn power(k: f64) -> Result<Self> {
        positive("power exponent", k)?;
        Self::beta(k - 1.0, 1.0)
    }

    pub fn pareto(nu: f64, theta: f64) -> Result<Self> {
        positive("theta", theta)?;
        if !(nu > 1.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("pareto exponent must exceed 1, got {nu}")));
        }
        let sigma = 1.0;
        let scale = (nu - 1.0) * theta.powf(sigma - 1.0);
        Ok(Self {
            kind: ErrorKind::Pareto { nu, theta },
            strip: ComplexStrip { a: f64::NEG_INFINITY, b: nu },
            regularity: Regularity {
                sigma,
                decay: Decay::Smooth {
                    gamma: 1.0,
                    omega0: 2.0 * (nu - sigma),
                    c0: (0.2f64).sqrt() * scale / (nu - sigma),
                    b1: (0.8f64).sqrt() * scale,
                    b2: scale,
                },
                near_zero: None,
            },
        })
    }

    pub fn gamma(alpha: f64, mu: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("mu", mu)?;
        let near_zero = (alpha <= 1.0).then(|| {
            let c = mu.powf(alpha) / complex_gamma(Complex64::new(alpha, 0.0)).map(|g| g.re).unwrap_or(f64::NAN);
            ZeroBehavior {
                p: 1.0 - alpha,
                q: 0.0,
                delta: 0.5,
                c0: c * (-0.5 * mu).exp(),
                big_c0: c,
            }
        });
        let mut model = Self {
            kind: ErrorKind::Gamma { alpha, mu },
            strip: ComplexStrip {
                a: 1.0 - alpha,
                b: f64::INFINITY,
            },
            regularity: Regularity {
                sigma: 1.0,
                decay: Decay::SuperSmooth {
                    gamma: PI / 2.0,
                    nu: alpha - 0.5,
                    omega0: 2.0,
                    c0: 0.0,
                    b1: 0.0,
                    b2: 0.0,
                },
                near_zero,
            },
        };
        model.calibrate_super_smooth_constants();
        Ok(model)
    }

    pub fn half_normal(upsilon: f64) -> Result<Self> {
        positive("upsilon", upsilon)?;
        let g0 = (2.0 / PI).sqrt() / upsilon;
        let mut model = Self {
            kind: ErrorKind::HalfNormal { upsilon },
            strip: ComplexStrip { a: 0.0, b: f64::INFINITY },
            regularity: Regularity {
                sigma: 1.0,
                decay: Decay::SuperSmooth {
                    gamma: PI / 4.0,
                    nu: 0.0,
                    omega0: 2.0,
                    c0: 0.0,
                    b1: 0.0,
                    b2: 0.0,
                },
                near_zero: Some(ZeroBehavior {
                    p: 0.0,
                    q: 0.0,
                    delta: 0.5,
                    c0: g0 * (-0.125 / (upsilon * upsilon)).exp(),
                    big_c0: g0,
                }),
            },
        };
        model.calibrate_super_smooth_constants();
        Ok(model)
    }

    pub fn log_product_uniform() -> Self {
        Self {
            kind: ErrorKind::LogProductUniform,
            strip: ComplexStrip { a: 0.0, b: f64::INFINITY },
            regularity: Regularity {
                sigma: 1.0,
                // |g̃(1+iω)| = 1/(1+ω²): within [ω⁻²/2, ω⁻²] for |ω| ≥ 1.
                decay: Decay::Smooth {
                    gamma: 2.0,
                    omega0: 1.0,
                    c0: 0.5,
                    b1: 0.5,
                    b2: 1.0,
                },
                near_zero: Some(ZeroBehavior {
                    p: 0.0,
                    q: 1.0,
                    delta: 0.5,
                    c0: 1.0,
                    big_c0: 1.0,
                }),
            },
        }
    }

    /// `η ≡ 1`; its transform is identically one on the whole plane.
    pub fn point_mass() -> Self {
        Self {
            kind: ErrorKind::PointMass,
            strip: ComplexStrip {
                a: f64::NEG_INFINITY,
                b: f64::INFINITY,
            },
            regularity: Regularity {
                sigma: 1.0,
                decay: Decay::Smooth {
                    gamma: 0.0,
                    omega0: 1.0,
                    c0: 1.0,
                    b1: 1.0,
                    b2: 1.0,
                },
                near_zero: None,
            },
        }
    }

    pub fn custom(model: CustomModel, strip: ComplexStrip, regularity: Regularity) -> Self {
        Self {
            kind: ErrorKind::Custom(Arc::new(model)),
            strip,
            regularity,
        }
    }

    /// Replaces the regularity metadata (user-declared constants).
    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    /// Fills `c₀, B₁, B₂` of a super-smooth decay from the closed-form
    /// transform on `|ω| ≤ 60`.
    fn calibrate_super_smooth_constants(&mut self) {
        let sigma = self.regularity.sigma;
        if let Decay::SuperSmooth { gamma, nu, omega0, .. } = self.regularity.decay {
            let abs_at = |w: f64| mellin_analytic(self, Complex64::new(sigma, w)).map(|v| v.norm()).unwrap_or(0.0);
            let c0 = (0..=200).map(|i| abs_at(omega0 * i as f64 / 200.0)).fold(f64::INFINITY, f64::min);
            let ratios: Vec<f64> = (0..=400)
                .map(|i| {
                    let w = omega0 + (60.0 - omega0) * i as f64 / 400.0;
                    abs_at(w) / (w.powf(nu) * (-gamma * w).exp())
                })
                .collect();
            let b1 = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let b2 = ratios.iter().copied().fold(0.0, f64::max);
            self.regularity.decay = Decay::SuperSmooth {
                gamma,
                nu,
                omega0,
                c0,
                b1,
                b2,
            };
        }
    }

    /// Short machine-readable name, as accepted by the command line.
    pub fn label(&self) -> String {
        match &self.kind {
            ErrorKind::Uniform { theta } => format!("uniform:{theta}"),
            ErrorKind::Beta { nu, theta } => format!("beta:{nu},{theta}"),
            ErrorKind::Pareto { nu, theta } => format!("pareto:{nu},{theta}"),
            ErrorKind::Gamma { alpha, mu } => format!("gamma:{alpha},{mu}"),
            ErrorKind::HalfNormal { upsilon } => format!("halfnormal:{upsilon}"),
            ErrorKind::LogProductUniform => "logproduct".to_string(),
            ErrorKind::PointMass => "pointmass".to_string(),
            ErrorKind::Custom(c) => format!("custom:{}", c.name),
        }
    }

    /// Density `g(x)`; zero off the support. `None` for the point mass.
    pub fn density(&self, x: f64) -> Option<f64> {
        let v = match &self.kind {
            ErrorKind::Uniform { theta } => {
                if (0.0..=*theta).contains(&x) {
                    1.0 / theta
                } else {
                    0.0
                }
            }
            ErrorKind::Beta { nu, theta } => {
                if x > 0.0 && x < *theta {
                    (nu + 1.0) * x.powf(*nu) / theta.powf(nu + 1.0)
                } else {
                    0.0
                }
            }
            ErrorKind::Pareto { nu, theta } => {
                if x > *theta {
                    (nu - 1.0) * theta.powf(nu - 1.0) / x.powf(*nu)
                } else {
                    0.0
                }
            }
            ErrorKind::Gamma { alpha, mu } => {
                if x > 0.0 {
                    let ln_g = complex_gamma(Complex64::new(*alpha, 0.0)).ok()?.re.ln();
                    (alpha * mu.ln() + (alpha - 1.0) * x.ln() - mu * x - ln_g).exp()
                } else {
                    0.0
                }
            }
            ErrorKind::HalfNormal { upsilon } => {
                if x >= 0.0 {
                    (2.0 / PI).sqrt() / upsilon * (-x * x / (2.0 * upsilon * upsilon)).exp()
                } else {
                    0.0
                }
            }
            ErrorKind::LogProductUniform => {
                if x > 0.0 && x <= 1.0 {
                    -x.ln()
                } else {
                    0.0
                }
            }
            ErrorKind::PointMass => return None,
            ErrorKind::Custom(c) => (c.density)(x),
        };
        Some(v)
    }

    /// Support and breakpoints used by [`mellin_numeric`] for this density.
    pub fn quad_spec(&self) -> QuadSpec {
        let base = QuadSpec::default();
        match &self.kind {
            ErrorKind::Uniform { theta } | ErrorKind::Beta { theta, .. } => base.with_support(0.0, *theta),
            ErrorKind::Pareto { theta, .. } => base.with_support(*theta, f64::INFINITY),
            ErrorKind::LogProductUniform => base.with_support(0.0, 1.0),
            ErrorKind::Gamma { alpha, mu } => base.with_breakpoints(vec![(alpha / mu).max(1e-3)]),
            ErrorKind::HalfNormal { upsilon } => base.with_breakpoints(vec![*upsilon]),
            ErrorKind::PointMass => base,
            ErrorKind::Custom(c) => c.quad.clone(),
        }
    }

    /// Draws one error value `η`.
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match &self.kind {
            ErrorKind::Uniform { theta } => theta * open_unit(rng),
            ErrorKind::Beta { nu, theta } => theta * open_unit(rng).powf(1.0 / (nu + 1.0)),
            ErrorKind::Pareto { nu, theta } => theta * open_unit(rng).powf(-1.0 / (nu - 1.0)),
            ErrorKind::Gamma { alpha, mu } => {
                let d = GammaDist::new(*alpha, 1.0 / mu).expect("validated gamma parameters");
                d.sample(rng)
            }
            ErrorKind::HalfNormal { upsilon } => {
                let z: f64 = StandardNormal.sample(rng);
                upsilon * z.abs()
            }
            ErrorKind::LogProductUniform => open_unit(rng) * open_unit(rng),
            ErrorKind::PointMass => 1.0,
            ErrorKind::Custom(c) => (c.sampler)(rng),
        }
    }
}

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open_unit(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Closed-form Mellin transform `g̃(z)` of a catalog error density.
pub fn mellin_analytic(model: &ErrorModel, z: Complex64) -> Result<Complex64> {
    model.strip.check(z)?;
    let one = Complex64::new(1.0, 0.0);
    let zm1 = z - 1.0;
    let v = match &model.kind {
        ErrorKind::Uniform { theta } => (zm1 * theta.ln()).exp() / z,
        ErrorKind::Beta { nu, theta } => (zm1 * theta.ln()).exp() * (nu + 1.0) / (z + nu),
        ErrorKind::Pareto { nu, theta } => (zm1 * theta.ln()).exp() * (nu - 1.0) / (nu - z),
        ErrorKind::Gamma { alpha, mu } => {
            let num = complex_gamma(zm1 + alpha)?;
            let den = complex_gamma(Complex64::new(*alpha, 0.0))?;
            (-zm1 * mu.ln()).exp() * num / den
        }
        ErrorKind::HalfNormal { upsilon } => {
            let num = complex_gamma(z * 0.5)?;
            let den = complex_gamma(Complex64::new(0.5, 0.0))?;
            (zm1 * (2.0f64.sqrt() * upsilon).ln()).exp() * num / den
        }
        ErrorKind::LogProductUniform => one / (z * z),
        ErrorKind::PointMass => one,
        ErrorKind::Custom(c) => match &c.mellin {
            Some(f) => f(z),
            None => {
                let density = c.density.clone();
                mellin_numeric(&move |x| density(x), z, &c.quad)?
            }
        },
    };
    Ok(v)
}

/// Integration setup for [`mellin_numeric`] and [`parseval_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadSpec {
    /// Support `[lo, hi]` of the integrand in `x`; `hi` may be infinite.
    pub support: (f64, f64),
    /// Interior points where the integrand is not smooth.
    pub breakpoints: Vec<f64>,
    pub tol: Tolerance,
    /// Tails are cut where the integrand falls below this fraction of its peak.
    pub truncation: f64,
    /// Step (in `t = ln x`) of the tail search.
    pub tail_step: f64,
    pub max_tail_steps: usize,
    /// Frequency cutoff for the right-hand side of [`parseval_check`].
    pub omega_max: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            support: (0.0, f64::INFINITY),
            breakpoints: Vec::new(),
            tol: Tolerance::new(1e-14, 1e-12).with_max_panels(20_000),
            truncation: 1e-14,
            tail_step: 0.5,
            max_tail_steps: 4000,
            omega_max: 400.0,
        }
    }
}

impl QuadSpec {
    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = (lo, hi);
        self
    }

    pub fn with_breakpoints(mut self, points: Vec<f64>) -> Self {
        self.breakpoints = points;
        self
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_omega_max(mut self, omega_max: f64) -> Self {
        self.omega_max = omega_max;
        self
    }

    /// Integration nodes in `t = ln x`: finite ends, `t = 0` and the
    /// breakpoints, with infinite ends replaced by a truncation point found
    /// from the decay of `magnitude(t)`.
    fn log_nodes<M: FnMut(f64) -> f64>(&self, mut magnitude: M) -> Result<Vec<f64>> {
        let (lo, hi) = self.support;
        let t_lo = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
        let t_hi = if hi.is_finite() { hi.ln() } else { f64::INFINITY };
        let mut interior: Vec<f64> = std::iter::once(0.0)
            .chain(self.breakpoints.iter().filter(|&&x| x > 0.0).map(|x| x.ln()))
            .filter(|&t| t > t_lo && t < t_hi)
            .collect();
        interior.sort_by(|a, b| a.total_cmp(b));
        interior.dedup();
        let anchor_lo = interior.first().copied().unwrap_or(if t_hi.is_finite() { t_hi } else { t_lo.max(0.0) });
        let anchor_hi = interior.last().copied().unwrap_or(if t_lo.is_finite() { t_lo } else { t_hi.min(0.0) });
        let left = if t_lo.is_finite() {
            t_lo
        } else {
            decay_extent(&mut magnitude, anchor_lo, -self.tail_step, self.truncation, 4, self.max_tail_steps).ok_or(Error::NonConvergence {
                estimate: f64::INFINITY,
                tolerance: self.truncation,
            })?
        };
        let right = if t_hi.is_finite() {
            t_hi
        } else {
            decay_extent(&mut magnitude, anchor_hi, self.tail_step, self.truncation, 4, self.max_tail_steps).ok_or(Error::NonConvergence {
                estimate: f64::INFINITY,
                tolerance: self.truncation,
            })?
        };
        let mut nodes = vec![left];
        nodes.extend(interior.into_iter().filter(|&t| t > left && t < right));
        nodes.push(right);
        Ok(nodes)
    }
}

/// Numerical Mellin transform `∫₀^∞ x^{z-1} u(x) dx`, integrated in
/// `t = ln x` with adaptive Gauss–Kronrod panels split at `x = 1`.
pub fn mellin_numeric<F>(density: &F, z: Complex64, quad: &QuadSpec) -> Result<Complex64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    let nodes = quad.log_nodes(|t| (z.re * t).exp() * density(t.exp()).abs())?;
    integrate_breaks(|t: f64| (z * t).exp() * density(t.exp()), &nodes, quad.tol)
}

/// [`mellin_numeric`] along the ray `x = r e^{iφ}` instead of the positive
/// axis, for densities holomorphic and decaying in the sector between them.
/// Rotating toward `sign(Im z)` moves the factor `e^{-φ Im z}` out of the
/// integral, so transforms far below the size of the integrand keep their
/// relative accuracy.
pub fn mellin_numeric_rotated<F>(density: &F, z: Complex64, phi: f64, quad: &QuadSpec) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64 + ?Sized,
{
    let turn = Complex64::from_polar(1.0, phi);
    let zm1 = z - 1.0;
    let body = |t: f64| (zm1 * t).exp() * t.exp() * density(turn * t.exp());
    let nodes = quad.log_nodes(|t| body(t).norm())?;
    let inner: Complex64 = integrate_breaks(body, &nodes, quad.tol)?;
    // (r e^{iφ})^{z-1} e^{iφ} dr = e^{iφz} r^{z-1} dr
    Ok((Complex64::i() * phi * z).exp() * inner)
}

/// Direct quadrature of the defining integral for a catalog model. Gamma and
/// half-normal densities are integrated along a rotated ray.
pub fn mellin_numeric_model(model: &ErrorModel, z: Complex64) -> Result<Complex64> {
    model.strip.check(z)?;
    let quad = model.quad_spec();
    let side = if z.im >= 0.0 { 1.0 } else { -1.0 };
    match model.kind {
        ErrorKind::Gamma { alpha, mu } => {
            let ln_norm = alpha * mu.ln() - complex_gamma(Complex64::new(alpha, 0.0))?.re.ln();
            let g = move |x: Complex64| ((alpha - 1.0) * x.ln() - mu * x + ln_norm).exp();
            mellin_numeric_rotated(&g, z, side * 0.45 * PI, &quad)
        }
        ErrorKind::HalfNormal { upsilon } => {
            let c = (2.0 / PI).sqrt() / upsilon;
            let g = move |x: Complex64| c * (-x * x / (2.0 * upsilon * upsilon)).exp();
            mellin_numeric_rotated(&g, z, side * 0.225 * PI, &quad)
        }
        ErrorKind::PointMass => Ok(Complex64::new(1.0, 0.0)),
        _ => mellin_numeric(&|x| model.density(x).unwrap_or(0.0), z, &quad),
    }
}

/// Both sides of the Mellin–Parseval identity
/// `∫₀^∞ u²(x) x^{2s-1} dx = (1/2π) ∫ |ũ(s+iω)|² dω` for a real `u`.
///
/// The left side is a direct integral; the right side integrates numerically
/// computed transforms over `|ω| ≤ quad.omega_max`. When `|ũ|²` has not
/// decayed at the cutoff the remaining tail is closed with a `C/ω²` fit on
/// the upper half of the frequency range.
pub fn parseval_check<F>(u: &F, s: f64, quad: &QuadSpec) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    let nodes = quad.log_nodes(|t| (2.0 * s * t).exp() * u(t.exp()).powi(2))?;
    let lhs: f64 = integrate_breaks(|t: f64| (2.0 * s * t).exp() * u(t.exp()).powi(2), &nodes, quad.tol)?;

    let mut failure: Option<Error> = None;
    let mut power = |w: f64| -> f64 {
        match mellin_numeric(u, Complex64::new(s, w), quad) {
            Ok(v) => v.norm_sqr(),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let peak = power(0.0);
    // Cut where |ũ|² is negligible, or at the configured maximum.
    let mut cutoff = quad.omega_max;
    let mut w = 1.0;
    while w < quad.omega_max {
        if power(w) < quad.truncation * peak && power(1.5 * w) < quad.truncation * peak {
            cutoff = 1.5 * w;
            break;
        }
        w *= 1.5;
    }
    let freq_tol = Tolerance::new(quad.tol.abs, quad.tol.rel).with_max_panels(quad.tol.max_panels);
    let mut breaks: Vec<f64> = vec![0.0];
    let pieces = (cutoff / 8.0).ceil().max(1.0) as usize;
    breaks.extend((1..=pieces).map(|k| cutoff * k as f64 / pieces as f64));
    let body: f64 = integrate_breaks(&mut power, &breaks, freq_tol)?;
    let mut tail = 0.0;
    if power(cutoff) >= quad.truncation * peak {
        let upper: f64 = integrate(&mut power, 0.5 * cutoff, cutoff, freq_tol)?;
        // ∫_{Ω/2}^{Ω} C/ω² dω = C/Ω
        let c = upper * cutoff;
        tail = c / cutoff;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((lhs, (body + tail) / PI))
}

/// Outcome of [`identifiability_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Identifiability {
    pub identifiable: bool,
    pub margin: f64,
}

pub const IDENTIFIABILITY_FLOOR: f64 = 1e-12;

/// Checks `|g̃⁺(z)² − g̃⁻(z)²| > floor` on the line `Re(z) = line` at the
/// given frequencies; the minimum over the grid is reported as the margin.
pub fn identifiability_check<P, M>(g_plus: P, g_minus: M, line: f64, omegas: &[f64], floor: f64) -> Identifiability
where
    P: Fn(Complex64) -> Complex64,
    M: Fn(Complex64) -> Complex64,
{
    let margin = omegas
        .iter()
        .map(|&w| {
            let z = Complex64::new(line, w);
            let gp = g_plus(z);
            let gm = g_minus(z);
            (gp * gp - gm * gm).norm()
        })
        .fold(f64::INFINITY, f64::min);
    Identifiability {
        identifiable: margin > floor,
        margin,
    }
}

/// Least-squares fit of the decay exponent of `|g̃(σ + iω)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub gamma: f64,
    /// Root-mean-square residual of the fit in `ln|g̃|`.
    pub residual: f64,
}

/// Recovers the decay exponent `γ` of `|g̃(σ + iω)|` on `ω ∈ [lo, hi]`.
///
/// Smooth models regress `ln|g̃|` on `ln ω`; super-smooth models regress on
/// `(1, ln ω, ω)` and report the negated coefficient of `ω`.
pub fn fit_decay_exponent(model: &ErrorModel, sigma: f64, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("frequency window [{lo}, {hi}] is not increasing")));
    }
    let count = 200;
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let w = lo * (hi / lo).powf(i as f64 / (count - 1) as f64);
        let v = mellin_analytic(model, Complex64::new(sigma, w))?.norm();
        rows.push((w, v.ln()));
    }
    let super_smooth = matches!(model.regularity.decay, Decay::SuperSmooth { .. });
    let design: Vec<Vec<f64>> = rows
        .iter()
        .map(|&(w, _)| if super_smooth { vec![1.0, w.ln(), w] } else { vec![1.0, w.ln()] })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (coef, residual) = least_squares(&design, &y)?;
    let gamma = -coef[coef.len() - 1];
    Ok(DecayFit { gamma, residual })
}

/// Ordinary least squares via the normal equations (tiny designs only).
pub(crate) fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let p = design.first().map_or(0, Vec::len);
    let x = nalgebra::DMatrix::from_fn(design.len(), p, |i, j| design[i][j]);
    let yv = nalgebra::DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let coef = svd
        .solve(&yv, 1e-14)
        .map_err(|e| Error::InvalidParameter(format!("least squares failed: {e}")))?;
    let resid = &yv - &x * &coef;
    let rms = (resid.norm_squared() / y.len() as f64).sqrt();
    Ok((coef.iter().copied().collect(), rms))
}

fn parse_params(name: &str, text: &str, min: usize, max: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = if text.is_empty() {
        Vec::new()
    } else {
        text.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("model `{name}`: cannot parse `{v}` as a number")))
            })
            .collect::<Result<_>>()?
    };
    if values.len() < min || values.len() > max {
        return Err(Error::InvalidParameter(format!(
            "model `{name}` takes {min}..={max} parameters, got {}",
            values.len()
        )));
    }
    Ok(values)
}

impl std::str::FromStr for ErrorModel {
    type Err = Error;

    /// Parses `uniform:θ`, `beta:ν[,θ]`, `power:k`, `pareto:ν,θ`,
    /// `gamma:α,μ`, `halfnormal:υ`, `logproduct` or `pointmass`.
    fn from_str(text: &str) -> Result<Self> {
        let (name, rest) = text.trim().split_once(':').unwrap_or((text.trim(), ""));
        let name = name.to_ascii_lowercase();
        match name.as_str() {
            "uniform" => {
                let p = parse_params(&name, rest, 0, 1)?;
                Self::uniform(p.first().copied().unwrap_or(1.0))
            }
            "beta" => {
                let p = parse_params(&name, rest, 1, 2)?;
                Self::beta(p[0], p.get(1).copied().unwrap_or(1.0))
            }
            "power" => Self::power(parse_params(&name, rest, 1, 1)?[0]),
            "pareto" => {
                let p = parse_params(&name, rest, 2, 2)?;
                Self::pareto(p[0], p[1])
            }
            "gamma" => {
                let p = parse_params(&name, rest, 2, 2)?;
                Self::gamma(p[0], p[1])
            }
            "halfnormal" => Self::half_normal(parse_params(&name, rest, 1, 1)?[0]),
            "logproduct" => parse_params(&name, rest, 0, 0).map(|_| Self::log_product_uniform()),
            "pointmass" => parse_params(&name, rest, 0, 0).map(|_| Self::point_mass()),
            _ => Err(Error::InvalidParameter(format!("unknown error model `{name}`"))),
        }
    }
}
