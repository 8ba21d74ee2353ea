//! Seeded sweeps, CSV output and the verification suite.
//!
//! A sweep is described by one JSON [`ExperimentConfig`]. Every
//! `(N, trial)` cell gets its own seed from [`derive_seed`], so the output
//! depends only on the config, never on the number of workers or the order in
//! which cells finish.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{attack_instance, lambda_min_over_scale};
use crate::data::{generate_synthetic, MaskStrategy, Readout, TeacherVector};
use crate::featuremaps::{check_activation, sample_map, ModelKind};
use crate::hermite::ActivationSpec;
use crate::trainer::InitPolicy;
use crate::{Error, Result};

mod seeds;
pub mod verify;

pub use seeds::derive_seed;
pub use verify::{run_verify, CheckResult, VerifyLevel, VerifyOptions, VerifyReport};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "GLMALIGN_WORKERS";

pub const DEFAULT_TEST_SIZE: usize = 1000;

/// Mask strategy as written in a config; resample seeds are derived per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Zero,
    Resample,
}

impl MaskKind {
    pub fn strategy(self, seed: u64) -> MaskStrategy {
        match self {
            MaskKind::Zero => MaskStrategy::Zero,
            MaskKind::Resample => MaskStrategy::Resample { seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub k: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub activation: String,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub mask: MaskKind,
    pub readout: Readout,
    pub seed: u64,
    /// Defaults to `zero` for RF and `network` for NTK.
    #[serde(default)]
    pub theta0: Option<InitPolicy>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Fill the `runtime_ms` column. Off by default so that output bytes are
    /// reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn default_test_size() -> usize {
    DEFAULT_TEST_SIZE
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn alpha(&self) -> f64 {
        self.d_y as f64 / (self.d_x + self.d_y) as f64
    }

    pub fn policy(&self) -> InitPolicy {
        self.theta0.unwrap_or_else(|| InitPolicy::default_for(self.model))
    }

    pub fn activation_spec(&self) -> Result<ActivationSpec> {
        Ok(ActivationSpec::named(&self.activation)?)
    }

    /// Checks the config and returns warnings for soft violations.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("k", self.k),
            ("d_x", self.d_x),
            ("d_y", self.d_y),
            ("trials", self.trials),
            ("test_size", self.test_size),
        ] {
            if v == 0 {
                return Err(Error::config(format!("`{name}` must be >= 1")));
            }
        }
        if self.n_grid.contains(&0) {
            return Err(Error::config("`n_grid` entries must be >= 1"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("`n_grid` must be strictly increasing"));
        }
        if self.model == ModelKind::Rf && self.policy() == InitPolicy::Network {
            return Err(Error::config("`theta0 = network` requires model = ntk"));
        }
        check_activation(self.model, &self.activation_spec()?)?;

        let mut warnings = Vec::new();
        let n_max = self.n_grid.last().copied().unwrap_or(0);
        let capacity = match self.model {
            ModelKind::Rf => self.k,
            ModelKind::Ntk => self.k * (self.d_x + self.d_y),
        };
        if n_max > capacity {
            warnings.push(format!(
                "largest N = {n_max} exceeds the feature dimension {capacity}; kernels will be singular"
            ));
        }
        Ok(warnings)
    }
}

/// One CSV row per `(N, trial)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model_kind: ModelKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub activation: String,
    pub trial: usize,
    pub seed: u64,
    pub test_acc: Option<f64>,
    pub attack_acc: Option<f64>,
    pub gamma_mean: Option<f64>,
    pub gamma_std: Option<f64>,
    pub lambda_min_over_scale: Option<f64>,
    pub runtime_ms: Option<u64>,
    pub error: Option<String>,
}

/// Seed roles inside a cell.
mod role {
    pub const MAP: u64 = 0;
    pub const TEACHER: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const TEST: u64 = 3;
    pub const MASK: u64 = 4;
}

fn run_cell(config: &ExperimentConfig, activation: &ActivationSpec, n_index: usize, trial: usize) -> ResultRow {
    let n = config.n_grid[n_index];
    let seed = derive_seed(config.seed, &[n_index as u64, trial as u64]);
    let mut row = ResultRow {
        model_kind: config.model,
        n,
        alpha: config.alpha(),
        activation: config.activation.clone(),
        trial,
        seed,
        test_acc: None,
        attack_acc: None,
        gamma_mean: None,
        gamma_std: None,
        lambda_min_over_scale: None,
        runtime_ms: None,
        error: None,
    };
    let start = Instant::now();
    let outcome = (|| -> Result<()> {
        let d = config.d_x + config.d_y;
        let map = sample_map(config.model, config.k, d, activation, derive_seed(seed, &[role::MAP]))?;
        let teacher = TeacherVector::sample(config.d_x, derive_seed(seed, &[role::TEACHER]));
        let train = generate_synthetic(n, config.d_x, config.d_y, &teacher, derive_seed(seed, &[role::TRAIN]))?;
        let test = generate_synthetic(
            config.test_size,
            config.d_x,
            config.d_y,
            &teacher,
            derive_seed(seed, &[role::TEST]),
        )?;
        let strategy = config.mask.strategy(derive_seed(seed, &[role::MASK]));
        let (model, report) = attack_instance(&map, &train, &test, strategy, config.readout, config.policy())?;
        row.test_acc = report.test_accuracy;
        row.attack_acc = Some(report.attack_accuracy);
        row.gamma_mean = Some(report.diagnostic.gamma_mean);
        row.gamma_std = Some(report.diagnostic.gamma_std);
        row.lambda_min_over_scale = Some(lambda_min_over_scale(&model));
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    if config.timing {
        row.runtime_ms = Some(start.elapsed().as_millis() as u64);
    }
    row
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|w: &usize| *w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every `(N, trial)` cell on `workers` threads. Rows come back in
/// `(N, trial)` order; failing cells carry their error instead of aborting.
pub fn run_sweep(config: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let activation = config.activation_spec()?;
    let cells: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|i| (0..config.trials).map(move |t| (i, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|(i, t)| run_cell(config, &activation, *i, *t))
            .collect()
    }))
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "model_kind",
        "N",
        "alpha",
        "activation",
        "trial",
        "seed",
        "test_acc",
        "attack_acc",
        "gamma_mean",
        "gamma_std",
        "lambda_min_over_scale",
        "runtime_ms",
        "error",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn read_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

/// Per-N means of a column over trials that produced a value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub n: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
}

pub fn summarize(rows: &[ResultRow], column: impl Fn(&ResultRow) -> Option<f64>) -> Vec<PointSummary> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let values: Vec<f64> = rows.iter().filter(|r| r.n == n).filter_map(&column).collect();
            PointSummary {
                n,
                mean: crate::stats::mean(&values),
                std_error: crate::stats::std_error(&values),
                values,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "model": "rf", "k": 200, "d_x": 10, "d_y": 10, "activation": "phi2",
                "n_grid": [10, 20], "trials": 3, "mask": "resample", "readout": "sign",
                "seed": 5, "test_size": 50
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn derive_seed_examples() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[]), derive_seed(1, &[0]));
        let mut seen = std::collections::HashSet::new();
        for t in 0..1_000_000u64 {
            assert!(seen.insert(derive_seed(42, &[t % 1000, t / 1000])));
        }
    }

    #[test]
    fn config_parsing_and_validation() {
        let c = small_config();
        assert_eq!(c.policy(), InitPolicy::Zero);
        assert_eq!(c.test_size, 50);
        assert!(c.validate().unwrap().is_empty());

        let unknown = r#"{"model":"rf","k":1,"d_x":1,"d_y":1,"activation":"phi2","n_grid":[],"trials":1,
            "mask":"zero","readout":"sign","seed":0,"ridge":0.1}"#;
        assert!(matches!(ExperimentConfig::from_json(unknown), Err(Error::Config(_))));

        let mut bad = c.clone();
        bad.n_grid = vec![20, 10];
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.activation = "h0+h1".into();
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.theta0 = Some(InitPolicy::Network);
        assert!(bad.validate().is_err());
        let mut warn = c.clone();
        warn.n_grid = vec![300];
        assert_eq!(warn.validate().unwrap().len(), 1);
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let mut c = small_config();
        c.n_grid.clear();
        let rows = run_sweep(&c, 2).unwrap();
        assert!(rows.is_empty());
        let csv = csv_string(&rows).unwrap();
        assert_eq!(
            csv,
            "model_kind,N,alpha,activation,trial,seed,test_acc,attack_acc,gamma_mean,gamma_std,lambda_min_over_scale,runtime_ms,error\n"
        );
    }

    #[test]
    fn sweep_is_schedule_independent() {
        let c = small_config();
        let one = csv_string(&run_sweep(&c, 1).unwrap()).unwrap();
        let many = csv_string(&run_sweep(&c, 4).unwrap()).unwrap();
        assert_eq!(one, many);
        let rows = read_csv(&one).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].n, rows[0].trial), (10, 0));
        assert_eq!((rows[5].n, rows[5].trial), (20, 2));
        for r in &rows {
            assert!(r.error.is_none(), "{:?}", r.error);
            let g = r.gamma_mean.unwrap();
            assert!((-0.1..=1.1).contains(&g));
            assert!(r.runtime_ms.is_none());
        }
    }

    #[test]
    fn failing_cells_do_not_abort() {
        let mut c = small_config();
        c.k = 12;
        c.n_grid = vec![5, 40];
        let rows = run_sweep(&c, 2).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows[..3].iter().all(|r| r.error.is_none()));
        assert!(rows[3..].iter().all(|r| r.error.as_deref().unwrap().contains("singular")));
        assert!(csv_string(&rows).unwrap().lines().count() == 7);
    }
}
