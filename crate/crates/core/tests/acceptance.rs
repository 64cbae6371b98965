//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances and runtime budgets are fixed below.

use std::process::Command;
use std::time::{Duration, Instant};

use mellin_deconv::estimators::{bandwidth_smooth, bandwidth_zero, kernel_smoothed_density, Target};
use mellin_deconv::kernels::{build_kernel, kernel_moments, KernelFamily};
use mellin_deconv::lkernel::{lkernel_closed_beta, lkernel_closed_beta_zero, lkernel_numeric, lkernel_zero_numeric};
use mellin_deconv::mellin::{fit_decay_exponent, mellin_analytic, mellin_numeric_model, ErrorModel};
use mellin_deconv::quad::{integrate_breaks, Tolerance};
use mellin_deconv::simulate::{medians_at, monte_carlo_risk, rate_regression, Evaluation, RateAxis, RiskReport, SimulationSpec, TargetDensity};
use num_complex::Complex64;

const SEED: u64 = 42;
const N_GRID: [usize; 5] = [100, 300, 500, 1000, 5000];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn catalog() -> Vec<ErrorModel> {
    vec![
        ErrorModel::uniform(1.0).unwrap(),
        ErrorModel::beta(1.0, 1.0).unwrap(),
        ErrorModel::pareto(3.0, 1.0).unwrap(),
        ErrorModel::log_product_uniform(),
        ErrorModel::gamma(2.0, 1.0).unwrap(),
        ErrorModel::half_normal(1.0).unwrap(),
    ]
}

fn mellin_oracle() -> Outcome {
    let mut worst: (f64, String) = (0.0, String::new());
    for model in catalog() {
        for k in 0..40 {
            let z = Complex64::new(1.0, -20.0 + 40.0 * k as f64 / 39.0);
            let a = mellin_analytic(&model, z).unwrap();
            let n = mellin_numeric_model(&model, z).unwrap();
            let rel = (a - n).norm() / a.norm();
            if rel > worst.0 {
                worst = (rel, format!("{} at {z}", model.label()));
            }
        }
    }
    outcome(
        worst.0 < 1e-8,
        format!("worst relative gap {:.2e} ({}), tolerance 1e-8", worst.0, worst.1),
    )
}

fn decay_recovery() -> Outcome {
    let cases = [
        (ErrorModel::uniform(1.0).unwrap(), 1.0),
        (ErrorModel::log_product_uniform(), 2.0),
        (ErrorModel::pareto(3.0, 1.0).unwrap(), 1.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (model, declared) in cases {
        let fit = fit_decay_exponent(&model, 1.0, (10.0, 1000.0)).unwrap();
        pass &= (fit.gamma - declared).abs() <= 0.05;
        parts.push(format!("{} γ={:.4} (declared {declared})", model.label(), fit.gamma));
    }
    outcome(pass, parts.join("; "))
}

fn closed_form_equivalence() -> Outcome {
    let mut worst_point: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    for nu in [1.0, 0.5] {
        let model = ErrorModel::power(nu).unwrap();
        for m in [1, 2] {
            let gauss = build_kernel(KernelFamily::GaussianJackknife { m }).unwrap();
            let expo = build_kernel(KernelFamily::ExponentialJackknife { m }).unwrap();
            for h in [0.2, 0.5] {
                let closed = lkernel_closed_beta(nu, m, h).unwrap();
                let table = lkernel_numeric(&model, &gauss, 0.0, h).unwrap();
                let s = 0.5 * nu;
                let closed0 = lkernel_closed_beta_zero(nu, m, s, h).unwrap();
                let table0 = lkernel_zero_numeric(&model, &expo, s, h).unwrap();
                for i in 0..200 {
                    let y = (-4.0 + 8.0 * i as f64 / 199.0).exp();
                    worst_point = worst_point.max((closed.evaluate(1.0, y).unwrap() - table.evaluate(1.0, y).unwrap()).abs());
                    let y0 = (-6.0 + 8.0 * i as f64 / 199.0).exp();
                    worst_zero = worst_zero.max((closed0.evaluate0(y0).unwrap() - table0.evaluate0(y0).unwrap()).abs());
                }
            }
        }
    }
    outcome(
        worst_point < 1e-6 && worst_zero < 1e-6,
        format!("sup gap {worst_point:.2e} away from zero, {worst_zero:.2e} at zero, tolerance 1e-6"),
    )
}

fn lemma_identity() -> Outcome {
    let h = 0.3;
    let model = ErrorModel::uniform(1.0).unwrap();
    let kernel = build_kernel(KernelFamily::GaussianJackknife { m: 2 }).unwrap();
    let l = lkernel_numeric(&model, &kernel, 0.0, h).unwrap();
    let tol = Tolerance::new(1e-15, 1e-13).with_max_panels(20_000);
    // f_Y(y) = ∫_y^∞ e^{-x}/x dx for X ~ Exp(1) and η ~ U(0,1), in v = ln x.
    let f_y = |y: f64| {
        let a = y.ln();
        let breaks: Vec<f64> = (0..=24).map(|i| a + 0.25 * i as f64 * (4.0f64 - a).max(1.0)).collect();
        integrate_breaks(|v: f64| (-v.exp()).exp(), &breaks, tol).unwrap()
    };
    // Outer integral in u = ln y; f_Y is negligible beyond y = e^4.
    let breaks: Vec<f64> = (0..=96).map(|i| -8.0 + 12.0 * i as f64 / 96.0).collect();
    let lhs: f64 = integrate_breaks(
        |u: f64| u.exp() * l.evaluate(1.0, u.exp()).unwrap() * f_y(u.exp()),
        &breaks,
        Tolerance::new(1e-14, 1e-11),
    )
    .unwrap();
    let rhs = kernel_smoothed_density(&kernel, Target::AtPoint(1.0), h, |t| (-t).exp()).unwrap();
    let rel = (lhs - rhs).abs() / rhs.abs();
    outcome(
        rel < 1e-6,
        format!("∫L f_Y = {lhs:.12}, ∫K f_X = {rhs:.12}, relative gap {rel:.2e}, tolerance 1e-6"),
    )
}

fn kernel_moment_suite() -> Outcome {
    let mut worst_mass: f64 = 0.0;
    let mut worst_moment: f64 = 0.0;
    for m in 1..=3 {
        let families = [
            KernelFamily::FlatCompact { m, q: 2 },
            KernelFamily::GaussianJackknife { m },
            KernelFamily::SuperSmooth { m, lambda: 2 },
            KernelFamily::ZeroPoint { m, s: 0.5 },
        ];
        for family in families {
            let k = build_kernel(family).unwrap();
            worst_mass = worst_mass.max((kernel_moments(&k, 0).unwrap() - 1.0).abs());
            for j in 1..=m {
                worst_moment = worst_moment.max(kernel_moments(&k, j).unwrap().abs());
            }
        }
    }
    outcome(
        worst_mass < 1e-10 && worst_moment < 1e-8,
        format!("max |∫K-1| {worst_mass:.2e} (tol 1e-10), max |∫t^kK| {worst_moment:.2e} (tol 1e-8)"),
    )
}

fn point_spec(points: Vec<f64>, n: Vec<usize>) -> SimulationSpec {
    SimulationSpec::new(
        TargetDensity::exponential(1.0).unwrap(),
        ErrorModel::uniform(1.0).unwrap(),
        Evaluation::Points(points),
        n,
        SEED,
    )
}

fn zero_spec(nu: f64) -> SimulationSpec {
    SimulationSpec::new(
        TargetDensity::exponential(2.0).unwrap(),
        ErrorModel::power(nu).unwrap(),
        Evaluation::AtZero,
        N_GRID.to_vec(),
        SEED,
    )
}

fn convergence_at_one() -> Outcome {
    let report = monte_carlo_risk(&point_spec(vec![1.0], N_GRID.to_vec())).unwrap();
    let pts = medians_at(&report, Some(1.0));
    let medians: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = rate_regression(&pts, RateAxis::LogN).unwrap();
    let pass = strictly_decreasing(&medians) && (-0.5..=-0.05).contains(&fit.slope);
    outcome(
        pass,
        format!("medians [{}], slope {:.4} (window [-0.5, -0.05])", fmt_list(&medians), fit.slope),
    )
}

fn error_across_points() -> Outcome {
    let points = vec![0.3, 0.5, 0.8, 1.0, 1.2, 1.5, 1.7];
    let report = monte_carlo_risk(&point_spec(points.clone(), vec![500])).unwrap();
    let medians: Vec<f64> = points.iter().map(|&x| medians_at(&report, Some(x))[0].1).collect();
    outcome(
        medians[6] < medians[0],
        format!("medians at x0 = 0.3..1.7: [{}]; need x0=1.7 below x0=0.3", fmt_list(&medians)),
    )
}

fn zero_reports() -> (RiskReport, RiskReport) {
    (monte_carlo_risk(&zero_spec(1.0)).unwrap(), monte_carlo_risk(&zero_spec(0.5)).unwrap())
}

fn zero_comparison(one: &RiskReport, half: &RiskReport) -> Outcome {
    let m1: Vec<f64> = medians_at(one, None).iter().map(|p| p.1).collect();
    let mh: Vec<f64> = medians_at(half, None).iter().map(|p| p.1).collect();
    let at = N_GRID.iter().position(|&n| n == 1000).unwrap();
    let pass = strictly_decreasing(&m1) && strictly_decreasing(&mh) && m1[at] < mh[at];
    outcome(pass, format!("ν=1 medians [{}]; ν=1/2 medians [{}]", fmt_list(&m1), fmt_list(&mh)))
}

fn zero_rate(one: &RiskReport) -> Outcome {
    let fit = rate_regression(&medians_at(one, None), RateAxis::LogNOverLogLogN).unwrap();
    outcome(
        (-0.5..=-0.1).contains(&fit.slope),
        format!("slope on ln(n/ln n) {:.4} (window [-0.5, -0.1])", fit.slope),
    )
}

fn bandwidth_values() -> Outcome {
    let smooth = bandwidth_smooth(1.0, 1.0, 1.0, 1.0, 1000.0).unwrap();
    let zero = bandwidth_zero(1.0, 1.0, 1.0, 0.0, 0.0, 1000.0).unwrap().h;
    let direct_smooth = 4000f64.powf(-0.2);
    let direct_zero = (1000f64.ln() / 1000.0).powf(1.0 / 3.0);
    let gaps = ((smooth - direct_smooth).abs(), (zero - direct_zero).abs());
    let pass = gaps.0 < 1e-10 && gaps.1 < 1e-10 && (smooth - 0.19037).abs() < 5e-6 && (zero - 0.19045).abs() < 5e-6;
    outcome(
        pass,
        format!("smooth h = {smooth:.10} (gap {:.1e}), zero h = {zero:.10} (gap {:.1e})", gaps.0, gaps.1),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        "seed = 42\nruns = 60\noracle_runs = 40\nn = [200, 800]\npoints = [0.5, 1.0]\nmodel = \"uniform:1\"\n[target]\nkind = \"exponential\"\nrate = 1.0\n",
    )
    .unwrap();
    let max_threads = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", 1), ("b", max_threads), ("c", 1)] {
        let out = dir.path().join(format!("{tag}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_mellin-deconv"))
            .env("MELLIN_THREADS", threads.to_string())
            .args(["simulate", "--spec"])
            .arg(&spec)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("simulate failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(std::fs::read(&out).unwrap());
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(same, format!("CSV bytes identical across 1, {max_threads}, 1 workers: {same}"))
}

fn main() {
    let budgets = [10, 5, 60, 10, 10, 300, 180, 300, 300, 1, 300];
    let mut failed = 0;
    let mut report = |id: usize, name: &str, elapsed: Duration, o: Outcome| {
        let within = elapsed.as_secs_f64() < budgets[id - 1] as f64;
        let pass = o.pass && within;
        failed += usize::from(!pass);
        println!(
            "{} criterion {id:>2} {name}: {} [{:.2}s, budget {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budgets[id - 1],
            if within { "" } else { ", over budget" }
        );
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed())
    };
    let (o, t) = timed(&mellin_oracle);
    report(1, "mellin oracle", t, o);
    let (o, t) = timed(&decay_recovery);
    report(2, "decay exponent recovery", t, o);
    let (o, t) = timed(&closed_form_equivalence);
    report(3, "closed-form L-kernels", t, o);
    let (o, t) = timed(&lemma_identity);
    report(4, "unbiasedness identity", t, o);
    let (o, t) = timed(&kernel_moment_suite);
    report(5, "kernel moments", t, o);
    let (o, t) = timed(&convergence_at_one);
    report(6, "convergence at x0=1", t, o);
    let (o, t) = timed(&error_across_points);
    report(7, "error across x0", t, o);
    let start = Instant::now();
    let (one, half) = zero_reports();
    let zero_time = start.elapsed();
    let (o, t) = timed(&|| zero_comparison(&one, &half));
    report(8, "estimation at zero", zero_time + t, o);
    let (o, t) = timed(&|| zero_rate(&one));
    report(9, "zero-case rate", t, o);
    let (o, t) = timed(&bandwidth_values);
    report(10, "bandwidth rule values", t, o);
    let (o, t) = timed(&determinism);
    report(11, "determinism", t, o);
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
