//! TOML description of a simulation campaign.
//!
//! ```toml
//! seed = 42
//! runs = 200
//! oracle_runs = 300
//! n = [100, 500, 1000]
//! points = [1.0]          # or: at_zero = true
//! model = "uniform:1"
//! kernel = "gaussian:1"   # optional
//! s = 0.0                 # optional
//! h_grid = [0.05, 0.1]    # optional
//!
//! [target]
//! kind = "exponential"
//! rate = 1.0
//! ```

use serde::Deserialize;

use super::{default_h_grid, Evaluation, SimulationSpec, TargetDensity};
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::mellin::ErrorModel;

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum TargetFile {
    Exponential { rate: f64 },
    Logcauchy { x0: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    seed: u64,
    runs: Option<usize>,
    oracle_runs: Option<usize>,
    n: Vec<usize>,
    points: Option<Vec<f64>>,
    #[serde(default)]
    at_zero: bool,
    model: String,
    kernel: Option<String>,
    s: Option<f64>,
    h_grid: Option<Vec<f64>>,
    target: TargetFile,
}

impl SimulationSpec {
    /// Parses and validates a TOML campaign description.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("spec file: {}", e.message())))?;
        let target = match file.target {
            TargetFile::Exponential { rate } => TargetDensity::exponential(rate)?,
            TargetFile::Logcauchy { x0 } => TargetDensity::log_cauchy(x0)?,
        };
        let model: ErrorModel = file.model.parse()?;
        let evaluation = match (file.points, file.at_zero) {
            (Some(p), false) => Evaluation::Points(p),
            (None, true) => Evaluation::AtZero,
            _ => {
                return Err(Error::InvalidParameter(
                    "spec file needs exactly one of `points` or `at_zero = true`".into(),
                ))
            }
        };
        let mut spec = SimulationSpec::new(target, model, evaluation, file.n, file.seed);
        if let Some(k) = file.kernel {
            spec.kernel = k.parse::<KernelFamily>()?;
        }
        if let Some(s) = file.s {
            spec.s = s;
        }
        spec.runs = file.runs.unwrap_or(spec.runs);
        spec.oracle_runs = file.oracle_runs.unwrap_or(spec.oracle_runs);
        spec.h_grid = file.h_grid.unwrap_or_else(default_h_grid);
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_point_campaign() {
        let spec = SimulationSpec::from_toml(
            "seed = 7\nn = [100, 200]\npoints = [0.5, 1.0]\nmodel = \"uniform:1\"\n[target]\nkind = \"exponential\"\nrate = 2.0\n",
        )
        .unwrap();
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.n_grid, vec![100, 200]);
        assert_eq!(spec.evaluation, Evaluation::Points(vec![0.5, 1.0]));
        assert_eq!(spec.kernel, KernelFamily::GaussianJackknife { m: 1 });
        assert_eq!(spec.h_grid.len(), 20);
    }

    #[test]
    fn rejects_ambiguous_evaluation() {
        let text = "seed = 1\nn = [10]\npoints = [1.0]\nat_zero = true\nmodel = \"uniform\"\n[target]\nkind = \"logcauchy\"\nx0 = 1.0\n";
        assert!(SimulationSpec::from_toml(text).is_err());
        assert!(SimulationSpec::from_toml("seed = 1\n").is_err());
    }
}
