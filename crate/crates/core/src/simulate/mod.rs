//! Monte-Carlo risk harness: sample generation, oracle bandwidths, error
//! quantiles and rate regression.

mod report;
mod spec_file;
mod target;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate, stable_sum, EstimatorConfig, Target};
use crate::kernels::{build_kernel, KernelFamily, KernelK};
use crate::lkernel::{lkernel_for_point, lkernel_for_zero};
use crate::mellin::{least_squares, ErrorModel};

pub use report::{render_svg, write_csv, CSV_HEADER};
pub use target::{ks_self_test, KsOutcome, TargetDensity, TargetFn, TargetKind, TargetSampler};

/// Words of the generator reserved for each observation; rejection
/// samplers may consume several.
const WORDS_PER_DRAW: u32 = 16;

const PURPOSE_ORACLE: u64 = 1;
const PURPOSE_RISK: u64 = 2;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator keyed by `seed` and a path of stream tags.
fn keyed_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let state = tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)));
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix(state.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub(crate) fn draw<T>(seed: u64, tags: &[u64], f: impl FnOnce(&mut ChaCha8Rng) -> T) -> T {
    f(&mut keyed_rng(seed, tags))
}

/// `Y_i = X_i η_i` for `i < n`, reproducible per `(seed, stream, i)`.
pub fn generate_sample_stream(target: &TargetDensity, model: &ErrorModel, n: usize, seed: u64, stream: &[u64]) -> Vec<f64> {
    let mut rng = keyed_rng(seed, stream);
    (0..n)
        .map(|i| {
            rng.set_word_pos((i as u128) << WORDS_PER_DRAW);
            let x = target.sample(&mut rng);
            x * model.sample(&mut rng)
        })
        .collect()
}

/// `n` observations of `Y = X η` for the given seed.
pub fn generate_sample(target: &TargetDensity, model: &ErrorModel, n: usize, seed: u64) -> Vec<f64> {
    generate_sample_stream(target, model, n, seed, &[])
}

/// `count` log-spaced bandwidths on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

pub fn default_h_grid() -> Vec<f64> {
    log_grid(0.02, 1.0, 20)
}

/// Where the density is estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    Points(Vec<f64>),
    AtZero,
}

/// A simulation campaign.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub target: TargetDensity,
    pub model: ErrorModel,
    pub kernel: KernelFamily,
    pub s: f64,
    pub n_grid: Vec<usize>,
    pub evaluation: Evaluation,
    pub runs: usize,
    pub oracle_runs: usize,
    pub h_grid: Vec<f64>,
    pub seed: u64,
}

impl SimulationSpec {
    /// Defaults: Gaussian jackknife kernel of order 1 at points, exponential
    /// kernel of order 2 at zero, `s = 0` at points and `s = (1-p)/2` at zero.
    pub fn new(target: TargetDensity, model: ErrorModel, evaluation: Evaluation, n_grid: Vec<usize>, seed: u64) -> Self {
        let (kernel, s) = match evaluation {
            Evaluation::Points(_) => (KernelFamily::GaussianJackknife { m: 1 }, 0.0),
            Evaluation::AtZero => {
                let p = model.regularity.near_zero.map(|z| z.p).unwrap_or(0.5);
                (KernelFamily::ExponentialJackknife { m: 2 }, 0.5 * (1.0 - p))
            }
        };
        Self {
            target,
            model,
            kernel,
            s,
            n_grid,
            evaluation,
            runs: 200,
            oracle_runs: 300,
            h_grid: default_h_grid(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if self.runs < 1 {
            return fail("runs must be at least 1".into());
        }
        if self.oracle_runs < 30 {
            return fail(format!("oracle runs must be at least 30, got {}", self.oracle_runs));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return fail("n grid must be nonempty with positive sizes".into());
        }
        if self.h_grid.is_empty() || self.h_grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return fail("h grid must be nonempty with positive bandwidths".into());
        }
        if self.h_grid.windows(2).any(|w| w[0] >= w[1]) {
            return fail("h grid must be strictly increasing".into());
        }
        if let Evaluation::Points(p) = &self.evaluation {
            if p.is_empty() || p.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return fail("evaluation points must be nonempty and positive".into());
            }
        }
        Ok(())
    }

    fn targets(&self) -> Vec<Target> {
        match &self.evaluation {
            Evaluation::Points(p) => p.iter().map(|&x| Target::AtPoint(x)).collect(),
            Evaluation::AtZero => vec![Target::AtZero],
        }
    }

    fn truth(&self, target: Target) -> f64 {
        match target {
            Target::AtPoint(x) => self.target.density(x),
            Target::AtZero => self.target.density(0.0),
        }
    }
}

/// Estimators for every bandwidth of the grid, sharing one kernel.
struct BandwidthBank {
    configs: Vec<(Target, Vec<EstimatorConfig>)>,
}

impl BandwidthBank {
    fn new(spec: &SimulationSpec) -> Result<Self> {
        let kernel: Arc<KernelK> = Arc::new(build_kernel(spec.kernel)?);
        let zero = spec.evaluation == Evaluation::AtZero;
        let lkernels = spec
            .h_grid
            .par_iter()
            .map(|&h| {
                let l = if zero {
                    lkernel_for_zero(&spec.model, &kernel, spec.s, h)?
                } else {
                    lkernel_for_point(&spec.model, &kernel, spec.s, h)?
                };
                Ok(Arc::new(l))
            })
            .collect::<Result<Vec<_>>>()?;
        let configs = spec
            .targets()
            .into_iter()
            .map(|t| {
                let cfgs = lkernels
                    .iter()
                    .map(|l| {
                        let mut c = EstimatorConfig::new(t, l.clone())?;
                        c.kernel = Some(kernel.clone());
                        Ok(c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((t, cfgs))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { configs })
    }
}

/// Empirical MSE curve and its grid minimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChoice {
    pub h_star: f64,
    pub curve: Vec<(f64, f64)>,
}

fn oracle_from_bank(spec: &SimulationSpec, configs: &[EstimatorConfig], target: Target, point_index: usize, n: usize) -> Result<OracleChoice> {
    let truth = spec.truth(target);
    let per_run: Vec<Vec<f64>> = (0..spec.oracle_runs)
        .into_par_iter()
        .map(|run| {
            let stream = [PURPOSE_ORACLE, n as u64, point_index as u64, run as u64];
            let sample = generate_sample_stream(&spec.target, &spec.model, n, spec.seed, &stream);
            configs
                .iter()
                .map(|c| Ok((estimate(&sample, c)?.value - truth).powi(2)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut curve = Vec::with_capacity(configs.len());
    let mut best = (f64::INFINITY, spec.h_grid[0]);
    for (k, &h) in spec.h_grid.iter().enumerate() {
        let column: Vec<f64> = per_run.iter().map(|r| r[k]).collect();
        let mse = stable_sum(&column) / column.len() as f64;
        curve.push((h, mse));
        // Strict comparison keeps the smaller h on ties.
        if mse < best.0 {
            best = (mse, h);
        }
    }
    Ok(OracleChoice { h_star: best.1, curve })
}

/// Grid minimiser of the empirical MSE over `spec.oracle_runs` runs.
pub fn oracle_bandwidth(spec: &SimulationSpec, n: usize, target: Target) -> Result<OracleChoice> {
    spec.validate()?;
    let mut one = spec.clone();
    one.evaluation = match target {
        Target::AtPoint(x) => Evaluation::Points(vec![x]),
        Target::AtZero => Evaluation::AtZero,
    };
    let index = match (&spec.evaluation, target) {
        (Evaluation::Points(p), Target::AtPoint(x)) => p.iter().position(|&v| v == x).unwrap_or(0),
        _ => 0,
    };
    let bank = BandwidthBank::new(&one)?;
    oracle_from_bank(&one, &bank.configs[0].1, target, index, n)
}

/// One `(n, x₀)` cell of a [`RiskReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub n: usize,
    /// `None` for the estimator at the origin.
    pub x0: Option<f64>,
    pub h_star: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub mse: f64,
    pub runs: usize,
    pub seed: u64,
    pub mse_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs every `(n, x₀)` cell: oracle search, then `runs` fresh replications
/// at `h⋆` recording `|f̂ - f_X(x₀)|`.
pub fn monte_carlo_risk(spec: &SimulationSpec) -> Result<RiskReport> {
    spec.validate()?;
    let bank = BandwidthBank::new(spec)?;
    let mut rows = Vec::new();
    for &n in &spec.n_grid {
        for (point_index, (target, configs)) in bank.configs.iter().enumerate() {
            let oracle = oracle_from_bank(spec, configs, *target, point_index, n)?;
            let k = spec.h_grid.iter().position(|&h| h == oracle.h_star).expect("h⋆ is a grid point");
            let truth = spec.truth(*target);
            let errors: Vec<f64> = (0..spec.runs)
                .into_par_iter()
                .map(|run| {
                    let stream = [PURPOSE_RISK, n as u64, point_index as u64, run as u64];
                    let sample = generate_sample_stream(&spec.target, &spec.model, n, spec.seed, &stream);
                    Ok((estimate(&sample, &configs[k])?.value - truth).abs())
                })
                .collect::<Result<_>>()?;
            let squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
            let mse = stable_sum(&squares) / errors.len() as f64;
            let mut sorted = errors;
            sorted.sort_by(f64::total_cmp);
            rows.push(RiskRow {
                n,
                x0: match target {
                    Target::AtPoint(x) => Some(*x),
                    Target::AtZero => None,
                },
                h_star: oracle.h_star,
                q05: quantile_sorted(&sorted, 0.05),
                q25: quantile_sorted(&sorted, 0.25),
                median: quantile_sorted(&sorted, 0.5),
                q75: quantile_sorted(&sorted, 0.75),
                q95: quantile_sorted(&sorted, 0.95),
                mse,
                runs: spec.runs,
                seed: spec.seed,
                mse_curve: oracle.curve,
            });
        }
    }
    Ok(RiskReport { rows })
}

/// Least-squares line through `(regressor, ln median)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Regressor of the log-log rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAxis {
    /// `ln n`.
    LogN,
    /// `ln(n / ln n)`; the slope is minus the exponent of `(ln n / n)`.
    LogNOverLogLogN,
}

/// Regresses `ln(median error)` on the chosen transform of `n`.
pub fn rate_regression(points: &[(usize, f64)], axis: RateAxis) -> Result<RateFit> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateDesign(distinct.len()));
    }
    if points.iter().any(|p| !(p.1 > 0.0) || (axis == RateAxis::LogNOverLogLogN && p.0 < 3)) {
        return Err(Error::DomainError(
            "rate regression needs positive errors (and n >= 3 on the ln n/n axis)".into(),
        ));
    }
    let x: Vec<f64> = points
        .iter()
        .map(|&(n, _)| {
            let n = n as f64;
            match axis {
                RateAxis::LogN => n.ln(),
                RateAxis::LogNOverLogLogN => (n / n.ln()).ln(),
            }
        })
        .collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let design: Vec<Vec<f64>> = x.iter().map(|&xi| vec![1.0, xi]).collect();
    let (coef, residual) = least_squares(&design, &y)?;
    Ok(RateFit {
        slope: coef[1],
        intercept: coef[0],
        residual,
    })
}

/// `(n, median)` pairs of the rows at one evaluation point.
pub fn medians_at(report: &RiskReport, x0: Option<f64>) -> Vec<(usize, f64)> {
    report.rows.iter().filter(|r| r.x0 == x0).map(|r| (r.n, r.median)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SimulationSpec {
        let mut spec = SimulationSpec::new(
            TargetDensity::exponential(1.0).unwrap(),
            ErrorModel::uniform(1.0).unwrap(),
            Evaluation::Points(vec![1.0]),
            vec![200],
            11,
        );
        spec.runs = 20;
        spec.oracle_runs = 30;
        spec.h_grid = log_grid(0.05, 1.0, 6);
        spec
    }

    #[test]
    fn samples_are_reproducible_and_random_access() {
        let t = TargetDensity::exponential(1.0).unwrap();
        let m = ErrorModel::gamma(2.0, 1.0).unwrap();
        let a = generate_sample(&t, &m, 50, 3);
        assert_eq!(a, generate_sample(&t, &m, 50, 3));
        assert_eq!(&a[..20], &generate_sample(&t, &m, 20, 3)[..]);
        assert_ne!(a, generate_sample(&t, &m, 50, 4));
    }

    #[test]
    fn point_mass_errors_leave_x() {
        let t = TargetDensity::exponential(1.0).unwrap();
        let y = generate_sample(&t, &ErrorModel::point_mass(), 100, 5);
        let x: Vec<f64> = (0..100u64)
            .map(|i| {
                let mut rng = keyed_rng(5, &[]);
                rng.set_word_pos((i as u128) << WORDS_PER_DRAW);
                t.sample(&mut rng)
            })
            .collect();
        assert_eq!(y, x);
    }

    #[test]
    fn power_error_mean() {
        let nu = 0.5;
        let point = TargetDensity::custom(
            "unit",
            Arc::new(|x: f64| if (0.5..1.5).contains(&x) { 1.0 } else { 0.0 }),
            Arc::new(|_rng: &mut dyn rand::RngCore| 1.0),
        )
        .unwrap();
        let y = generate_sample(&point, &ErrorModel::power(nu).unwrap(), 100_000, 9);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = nu / ((nu + 2.0) * (nu + 1.0).powi(2));
        assert!((mean - nu / (nu + 1.0)).abs() < 4.0 * (var / 1e5).sqrt(), "{mean}");
    }

    #[test]
    fn quantiles_monotone() {
        let r = monte_carlo_risk(&small_spec()).unwrap();
        let row = &r.rows[0];
        assert!(0.0 <= row.q05 && row.q05 <= row.q25 && row.q25 <= row.median && row.median <= row.q75 && row.q75 <= row.q95);
        assert_eq!(row.mse_curve.len(), 6);
    }

    #[test]
    fn report_is_deterministic_across_pools() {
        let spec = small_spec();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| monte_carlo_risk(&spec))
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| monte_carlo_risk(&spec))
            .unwrap();
        assert_eq!(one, many);
        let again = oracle_bandwidth(&spec, 200, Target::AtPoint(1.0)).unwrap();
        assert_eq!(again.h_star, one.rows[0].h_star);
    }

    #[test]
    fn exact_power_law_slope() {
        let pts: Vec<(usize, f64)> = [100, 300, 1000, 5000].iter().map(|&n| (n, 3.0 * (n as f64).powf(-0.2))).collect();
        let fit = rate_regression(&pts, RateAxis::LogN).unwrap();
        assert!((fit.slope + 0.2).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(rate_regression(&pts[..2], RateAxis::LogN), Err(Error::DegenerateDesign(2)));
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec();
        s.oracle_runs = 10;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.h_grid = vec![0.5, 0.1];
        assert!(s.validate().is_err());
    }
}
