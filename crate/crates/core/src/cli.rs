//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, missing or
//! unwritable paths), 1 on computational errors, which print the error name.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::Error;
use crate::estimators::{
    bandwidth_moment, bandwidth_smooth, bandwidth_supersmooth, bandwidth_zero, estimate, s_star_moment, smooth_side_condition, EstimatorConfig,
    Provenance, Target, DEFAULT_C1, DEFAULT_C5, DEFAULT_EPSILON,
};
use crate::format::{fmt12, fmt_complex, parse_complex};
use crate::kernels::{build_kernel, KernelFamily, Support};
use crate::lkernel::{lkernel_closed_beta, lkernel_closed_beta_zero, lkernel_for_point, lkernel_for_zero, lkernel_numeric, lkernel_zero_numeric};
use crate::mellin::{mellin_analytic, mellin_numeric_model, ErrorModel};
use crate::simulate::{monte_carlo_risk, rate_regression, render_svg, write_csv, RateAxis, SimulationSpec, CSV_HEADER};

const MODEL_HELP: &str = "Error density: uniform[:θ], beta:ν[,θ] (density (ν+1)x^ν/θ^(ν+1)), power:k (density k x^(k-1) on [0,1]), \
pareto:ν,θ, gamma:α,μ, halfnormal:υ, logproduct (ln(1/x) on [0,1]), pointmass (no error)";

const KERNEL_HELP: &str = "Kernel: gaussian:m, flat:m,q, supersmooth:m,λ, exponential:m (origin), zero:m,s (origin)";

#[derive(Debug, Parser)]
#[command(
    name = "mellin-deconv",
    version,
    about = "Recover the density of X from samples of Y = X·η with known error law"
)]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "MELLIN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate f_X at a point x0 > 0.
    Estimate(EstimateArgs),
    /// Estimate f_X at the origin.
    EstimateZero(EstimateZeroArgs),
    /// Run a simulation campaign described by a TOML file.
    Simulate(SimulateArgs),
    /// Fit the log-log error rate of a simulation report.
    RateCheck(RateCheckArgs),
    /// Write kernel values and transform samples to CSV.
    KernelDump(KernelDumpArgs),
    /// Write the ρ profile and sampled L values to CSV.
    LkernelDump(LkernelDumpArgs),
    /// Print the Mellin transform of an error density at z.
    MellinEval(MellinEvalArgs),
    /// Compare closed forms against direct quadrature.
    SelfTest,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// One-column CSV of observations, optional header.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, help = MODEL_HELP)]
    model: String,
    #[arg(long)]
    point: f64,
    /// Bandwidth; required unless --rule is given.
    #[arg(long, required_unless_present = "rule")]
    h: Option<f64>,
    /// Line Re(z) = 1 - s of the inversion.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, default_value = "gaussian:2", help = KERNEL_HELP)]
    kernel: String,
    /// Bandwidth rule: smooth:A=..,beta=..[,gamma=..,r=..], moment:A=..,beta=..,M=..,alpha=..[,b=..,eps=..,gamma=..,c5=..],
    /// supersmooth:A=..,beta=..[,gamma=..,c1=..].
    #[arg(long, conflicts_with = "h")]
    rule: Option<String>,
}

#[derive(Debug, Args)]
struct EstimateZeroArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, help = MODEL_HELP)]
    model: String,
    #[arg(long, required_unless_present = "rule")]
    h: Option<f64>,
    /// Defaults to (1-p)/2 from the model's behaviour at the origin.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, default_value = "exponential:2", help = KERNEL_HELP)]
    kernel: String,
    /// Bandwidth rule: zero:A=..,beta=..,M=..[,p=..,q=..]; also sets s.
    #[arg(long, conflicts_with = "h")]
    rule: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Report CSV: n,x0,h_star,q05,q25,median,q75,q95,mse,runs,seed.
    #[arg(long)]
    out: PathBuf,
    /// Box plot of the absolute errors (whiskers at 5% and 95%).
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RateCheckArgs {
    /// Report written by `simulate`.
    #[arg(long)]
    report: PathBuf,
    /// Evaluation point to fit; 0 selects the origin.
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    /// Regress on ln n (`n`) or on ln(n / ln n) (`n-over-log-n`).
    #[arg(long, default_value = "n")]
    axis: String,
    /// Fail unless the slope lies in lo,hi.
    #[arg(long)]
    window: Option<String>,
}

#[derive(Debug, Args)]
struct KernelDumpArgs {
    #[arg(long, help = KERNEL_HELP)]
    kernel: String,
    #[arg(long)]
    out: PathBuf,
    /// Half-width of the sampled t range (and of the frequency range).
    #[arg(long, default_value_t = 6.0)]
    range: f64,
    #[arg(long, default_value_t = 401)]
    points: usize,
}

#[derive(Debug, Args)]
struct LkernelDumpArgs {
    #[arg(long, help = MODEL_HELP)]
    model: String,
    #[arg(long, default_value = "gaussian:2", help = KERNEL_HELP)]
    kernel: String,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    h: f64,
    /// Kernel at the origin instead of at x = 1.
    #[arg(long)]
    zero: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MellinEvalArgs {
    #[arg(long, help = MODEL_HELP)]
    model: String,
    /// Complex argument written a+bi.
    #[arg(long, allow_hyphen_values = true)]
    z: String,
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("ParseError: {path}: line {line}: cannot parse `{text}` as a number")]
    Parse { path: PathBuf, line: usize, text: String },
    #[error("EmptyFile: {0} holds no observations")]
    EmptyFile(PathBuf),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("{name}: {0}", name = .0.name())]
    Compute(#[from] Error),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Reads one numeric column. A non-numeric first line is taken as a header;
/// blank lines are skipped; only the first comma-separated field is read.
pub fn load_sample(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if i == 0 => {}
            _ => {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    text: field.to_string(),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(CliError::EmptyFile(path.to_path_buf()));
    }
    Ok(values)
}

fn need_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file: {}", path.display())))
    }
}

fn need_writable(path: &Path) -> CliResult<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("output directory does not exist: {}", parent.display())))
    }
}

/// Writes through a temporary file in the target directory and renames it.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

fn usage<T: std::str::FromStr<Err = Error>>(flag: &str, text: &str) -> CliResult<T> {
    text.parse::<T>().map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

/// `name:key=value,...` with every key in `allowed`.
fn parse_rule(text: &str, allowed: &[&str]) -> CliResult<(String, Vec<(String, f64)>)> {
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut params = Vec::new();
    for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--rule: expected key=value, got `{item}`")))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(CliError::Usage(format!("--rule: unknown parameter `{k}` for rule `{name}`")));
        }
        let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("--rule: `{v}` is not a number")))?;
        params.push((k.to_string(), v));
    }
    Ok((name.trim().to_string(), params))
}

fn param(params: &[(String, f64)], key: &str) -> Option<f64> {
    params.iter().find(|(k, _)| k == key).map(|p| p.1)
}

fn required(params: &[(String, f64)], key: &str) -> CliResult<f64> {
    param(params, key).ok_or_else(|| CliError::Usage(format!("--rule: missing parameter `{key}`")))
}

/// JSON number holding the 12-significant-digit rounding of `x`.
fn num(x: f64) -> Value {
    fmt12(x)
        .parse::<f64>()
        .ok()
        .and_then(serde_json::Number::from_f64)
        .map_or(Value::Null, Value::Number)
}

fn point_bandwidth(args: &EstimateArgs, model: &ErrorModel, n: usize) -> CliResult<(f64, f64, Provenance, Vec<String>)> {
    let s = args.s.unwrap_or(0.0);
    if let Some(h) = args.h {
        return Ok((h, s, Provenance::Manual, vec![]));
    }
    let rule = args.rule.as_deref().unwrap_or_default();
    let (name, p) = parse_rule(rule, &["A", "beta", "gamma", "r", "M", "alpha", "b", "eps", "c1", "c5"])?;
    let gamma = param(&p, "gamma").unwrap_or(model.regularity.decay.gamma());
    let (a, beta, x0, nf) = (required(&p, "A")?, required(&p, "beta")?, args.point, n as f64);
    let mut notes = Vec::new();
    let chosen = match name.as_str() {
        "smooth" => {
            let h = bandwidth_smooth(a, beta, gamma, x0, nf)?;
            if let Some(w) = param(&p, "r").and_then(|r| smooth_side_condition(h, r)) {
                notes.push(w.to_string());
            }
            (h, s, Provenance::SmoothRule { a, beta, gamma })
        }
        "moment" => {
            let (m, alpha) = (required(&p, "M")?, required(&p, "alpha")?);
            let b = param(&p, "b").unwrap_or(f64::INFINITY);
            let epsilon = param(&p, "eps").unwrap_or(DEFAULT_EPSILON);
            let s = match args.s {
                Some(s) => s,
                None => s_star_moment(alpha, b, epsilon)?,
            };
            let h = bandwidth_moment(a, beta, gamma, m, x0, s, nf, param(&p, "c5").unwrap_or(DEFAULT_C5))?;
            (
                h,
                s,
                Provenance::MomentRule {
                    a,
                    beta,
                    gamma,
                    alpha,
                    m,
                    b,
                    epsilon,
                },
            )
        }
        "supersmooth" => {
            let lambda = match build_kernel_family(&args.kernel)? {
                KernelFamily::SuperSmooth { lambda, .. } => lambda as f64,
                _ => return Err(CliError::Usage("--rule supersmooth needs a supersmooth kernel".into())),
            };
            let h = bandwidth_supersmooth(a, beta, gamma, lambda, x0, nf, param(&p, "c1").unwrap_or(DEFAULT_C1))?;
            (h, s, Provenance::SuperSmoothRule { a, beta, gamma, lambda })
        }
        other => return Err(CliError::Usage(format!("--rule: unknown rule `{other}` (smooth, moment, supersmooth)"))),
    };
    Ok((chosen.0, chosen.1, chosen.2, notes))
}

fn build_kernel_family(text: &str) -> CliResult<KernelFamily> {
    usage("kernel", text)
}

fn estimate_json(value: f64, h: f64, s: f64, n: usize, warnings: Vec<String>) -> String {
    let v = json!({ "estimate": num(value), "h": num(h), "s": num(s), "n": n, "warnings": warnings });
    format!("{v}\n")
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<String> {
    need_file(&args.input)?;
    let model: ErrorModel = usage("model", &args.model)?;
    let family = build_kernel_family(&args.kernel)?;
    if !(args.point > 0.0 && args.point.is_finite()) {
        return Err(CliError::Usage(format!("--point must be positive, got {}", args.point)));
    }
    let sample = load_sample(&args.input)?;
    let (h, s, provenance, mut warnings) = point_bandwidth(args, &model, sample.len())?;
    let kernel = Arc::new(build_kernel(family)?);
    let config = EstimatorConfig::build(Target::AtPoint(args.point), &model, kernel, s, h)?.with_provenance(provenance);
    let est = estimate(&sample, &config)?;
    warnings.extend(est.warnings.iter().map(|w| w.to_string()));
    Ok(estimate_json(est.value, h, s, est.n, warnings))
}

fn cmd_estimate_zero(args: &EstimateZeroArgs) -> CliResult<String> {
    need_file(&args.input)?;
    let model: ErrorModel = usage("model", &args.model)?;
    let family = build_kernel_family(&args.kernel)?;
    let sample = load_sample(&args.input)?;
    let near = model.regularity.near_zero;
    let default_s = 0.5 * (1.0 - near.map_or(0.5, |z| z.p));
    let (h, s, provenance) = match (&args.rule, args.h) {
        (_, Some(h)) => (h, args.s.unwrap_or(default_s), Provenance::Manual),
        (Some(rule), None) => {
            let (name, p) = parse_rule(rule, &["A", "beta", "M", "p", "q"])?;
            if name != "zero" {
                return Err(CliError::Usage(format!("--rule: unknown rule `{name}` (zero)")));
            }
            let pp = param(&p, "p")
                .or(near.map(|z| z.p))
                .ok_or_else(|| CliError::Usage("--rule zero: model has no behaviour at 0; give p=".into()))?;
            let qq = param(&p, "q").or(near.map(|z| z.q)).unwrap_or(0.0);
            let (a, beta, m) = (required(&p, "A")?, required(&p, "beta")?, required(&p, "M")?);
            let t = bandwidth_zero(a, beta, m, pp, qq, sample.len() as f64)?;
            (t.h, args.s.unwrap_or(t.s), Provenance::ZeroRule { a, beta, m, p: pp, q: qq })
        }
        (None, None) => unreachable!("clap requires --h or --rule"),
    };
    let kernel = Arc::new(build_kernel(family)?);
    let config = EstimatorConfig::build(Target::AtZero, &model, kernel, s, h)?.with_provenance(provenance);
    let est = estimate(&sample, &config)?;
    Ok(estimate_json(
        est.value,
        h,
        s,
        est.n,
        est.warnings.iter().map(|w| w.to_string()).collect(),
    ))
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<String> {
    need_file(&args.spec)?;
    need_writable(&args.out)?;
    if let Some(svg) = &args.svg {
        need_writable(svg)?;
    }
    let text = fs::read_to_string(&args.spec).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.spec.display())))?;
    let spec = SimulationSpec::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    let report = monte_carlo_risk(&spec)?;
    write_atomic(&args.out, &write_csv(&report))?;
    if let Some(svg) = &args.svg {
        let title = format!("{} errors, {} target", spec.model.label(), spec.target.label());
        write_atomic(svg, &render_svg(&report, &title))?;
    }
    Ok(format!("wrote {} rows to {}\n", report.rows.len(), args.out.display()))
}

fn read_report(path: &Path, x0: f64) -> CliResult<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::Usage(format!("{} is not a simulation report", path.display())));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            text: line.to_string(),
        };
        if f.len() != 11 {
            return Err(bad());
        }
        let n: usize = f[0].parse().map_err(|_| bad())?;
        let x: f64 = f[1].parse().map_err(|_| bad())?;
        let median: f64 = f[5].parse().map_err(|_| bad())?;
        if x == x0 {
            out.push((n, median));
        }
    }
    Ok(out)
}

fn cmd_rate_check(args: &RateCheckArgs) -> CliResult<String> {
    need_file(&args.report)?;
    let axis = match args.axis.as_str() {
        "n" => RateAxis::LogN,
        "n-over-log-n" => RateAxis::LogNOverLogLogN,
        other => return Err(CliError::Usage(format!("--axis: expected `n` or `n-over-log-n`, got `{other}`"))),
    };
    let window = match &args.window {
        None => None,
        Some(w) => {
            let parts: Vec<f64> = w
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("--window: cannot parse `{w}`")))?;
            match parts[..] {
                [lo, hi] if lo <= hi => Some((lo, hi)),
                _ => return Err(CliError::Usage("--window: expected lo,hi".into())),
            }
        }
    };
    let points = read_report(&args.report, args.x0)?;
    let fit = rate_regression(&points, axis)?;
    let mut out = format!(
        "{}\n",
        json!({ "slope": num(fit.slope), "intercept": num(fit.intercept), "residual": num(fit.residual), "points": points.len() })
    );
    if let Some((lo, hi)) = window {
        if !(lo..=hi).contains(&fit.slope) {
            return Err(CliError::Check(format!(
                "RateWindow: slope {} outside [{}, {}]",
                fmt12(fit.slope),
                fmt12(lo),
                fmt12(hi)
            )));
        }
        out.push_str("slope within window\n");
    }
    Ok(out)
}

fn cmd_kernel_dump(args: &KernelDumpArgs) -> CliResult<String> {
    need_writable(&args.out)?;
    let family = build_kernel_family(&args.kernel)?;
    if !(args.range > 0.0) || args.points < 2 {
        return Err(CliError::Usage("--range must be positive and --points at least 2".into()));
    }
    let kernel = build_kernel(family)?;
    let lo = if kernel.support() == Support::HalfLine { 0.0 } else { -args.range };
    let step = (args.range - lo) / (args.points - 1) as f64;
    let mut csv = String::from("section,x,re,im\n");
    for i in 0..args.points {
        let t = lo + step * i as f64;
        let _ = writeln!(csv, "kernel,{},{},0", fmt12(t), fmt12(kernel.evaluate(t)));
    }
    let wstep = 2.0 * args.range / (args.points - 1) as f64;
    for i in 0..args.points {
        let w = -args.range + wstep * i as f64;
        let v = kernel.fourier(w)?;
        let _ = writeln!(csv, "transform,{},{},{}", fmt12(w), fmt12(v.re), fmt12(v.im));
    }
    write_atomic(&args.out, &csv)?;
    Ok(format!("wrote {} rows to {}\n", 2 * args.points, args.out.display()))
}

fn cmd_lkernel_dump(args: &LkernelDumpArgs) -> CliResult<String> {
    need_writable(&args.out)?;
    let model: ErrorModel = usage("model", &args.model)?;
    let kernel = build_kernel(build_kernel_family(&args.kernel)?)?;
    let l = if args.zero {
        let s = args.s.unwrap_or(0.5 * (1.0 - model.regularity.near_zero.map_or(0.5, |z| z.p)));
        lkernel_for_zero(&model, &kernel, s, args.h)?
    } else {
        lkernel_for_point(&model, &kernel, args.s.unwrap_or(0.0), args.h)?
    };
    let mut csv = String::from("section,x,value\n");
    let mut rows = 0;
    match l.rho_table() {
        Some(table) => {
            let nodes: Vec<(f64, f64)> = table.nodes().collect();
            let stride = nodes.len().div_ceil(2001).max(1);
            for (t, r) in nodes.iter().step_by(stride) {
                let _ = writeln!(csv, "rho,{},{}", fmt12(*t), fmt12(*r));
                rows += 1;
            }
        }
        None => {
            for i in 0..=400 {
                let t = -8.0 * args.h * (1.0 + args.h) + 16.0 * args.h * (1.0 + args.h) * i as f64 / 400.0;
                let _ = writeln!(csv, "rho,{},{}", fmt12(t), fmt12(l.rho(t)));
                rows += 1;
            }
        }
    }
    for i in 0..=400 {
        let y = (-5.0 + 10.0 * i as f64 / 400.0f64).exp();
        let v = if args.zero { l.evaluate0(y)? } else { l.evaluate(1.0, y)? };
        let _ = writeln!(csv, "L,{},{}", fmt12(y), fmt12(v));
        rows += 1;
    }
    write_atomic(&args.out, &csv)?;
    Ok(format!("wrote {rows} rows to {}\n", args.out.display()))
}

fn cmd_mellin_eval(args: &MellinEvalArgs) -> CliResult<String> {
    let model: ErrorModel = usage("model", &args.model)?;
    let z: Complex64 = parse_complex(&args.z).ok_or_else(|| CliError::Usage(format!("--z: cannot parse `{}` as a+bi", args.z)))?;
    Ok(format!("{}\n", fmt_complex(mellin_analytic(&model, z)?)))
}

fn self_test_models() -> Vec<ErrorModel> {
    vec![
        ErrorModel::uniform(1.0).unwrap(),
        ErrorModel::beta(1.0, 1.5).unwrap(),
        ErrorModel::pareto(3.0, 1.0).unwrap(),
        ErrorModel::log_product_uniform(),
        ErrorModel::gamma(2.0, 1.5).unwrap(),
        ErrorModel::half_normal(1.0).unwrap(),
    ]
}

fn cmd_self_test() -> CliResult<String> {
    let mut out = String::new();
    let mut failed = 0;
    let mut report = |out: &mut String, name: String, gap: f64, tol: f64| {
        let ok = gap < tol;
        failed += usize::from(!ok);
        let _ = writeln!(
            out,
            "{} {name}: gap {} (tolerance {})",
            if ok { "PASS" } else { "FAIL" },
            fmt_sig3(gap),
            fmt_sig3(tol)
        );
    };
    for model in self_test_models() {
        let mut worst: f64 = 0.0;
        for k in 0..40 {
            let z = Complex64::new(1.0, -20.0 + 40.0 * k as f64 / 39.0);
            let a = mellin_analytic(&model, z)?;
            let n = mellin_numeric_model(&model, z)?;
            worst = worst.max((a - n).norm() / a.norm());
        }
        report(&mut out, format!("mellin {}", model.label()), worst, 1e-8);
    }
    for &(nu, m, h) in &[(1.0, 1, 0.2), (1.0, 2, 0.5), (0.5, 1, 0.5), (0.5, 2, 0.2)] {
        let model = ErrorModel::power(nu)?;
        let closed = lkernel_closed_beta(nu, m, h)?;
        let numeric = lkernel_numeric(&model, &build_kernel(KernelFamily::GaussianJackknife { m })?, 0.0, h)?;
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let y = (-3.0 + 6.0 * i as f64 / 199.0).exp();
            worst = worst.max((closed.evaluate(1.0, y)? - numeric.evaluate(1.0, y)?).abs());
        }
        report(&mut out, format!("lkernel power:{nu} m={m} h={h}"), worst, 1e-6);
        let s = 0.5 * nu;
        let closed = lkernel_closed_beta_zero(nu, m, s, h)?;
        let numeric = lkernel_zero_numeric(&model, &build_kernel(KernelFamily::ExponentialJackknife { m })?, s, h)?;
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let y = (-5.0 + 7.0 * i as f64 / 199.0).exp();
            worst = worst.max((closed.evaluate0(y)? - numeric.evaluate0(y)?).abs());
        }
        report(&mut out, format!("lkernel-zero power:{nu} m={m} h={h}"), worst, 1e-6);
    }
    if failed > 0 {
        return Err(CliError::Check(format!("{out}SelfTestFailure: {failed} check(s) out of tolerance")));
    }
    Ok(out)
}

fn fmt_sig3(x: f64) -> String {
    crate::format::fmt_sig(x, 3)
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A pool may already exist when run() is called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<String> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::EstimateZero(a) => cmd_estimate_zero(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::RateCheck(a) => cmd_rate_check(a),
        Command::KernelDump(a) => cmd_kernel_dump(a),
        Command::LkernelDump(a) => cmd_lkernel_dump(a),
        Command::MellinEval(a) => cmd_mellin_eval(a),
        Command::SelfTest => cmd_self_test(),
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code, writing results to `out` and diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
