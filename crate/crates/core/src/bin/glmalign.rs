use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use glmalign::alignment::{compare_gamma_theory, GammaExperiment};
use glmalign::attack::{attack_instance, lambda_min_over_scale};
use glmalign::data::{generate_synthetic, load_dataset, save_dataset, DatasetMetadata, LabeledDataset, Readout, TeacherVector};
use glmalign::featuremaps::{check_activation, kernel_gram, sample_map, FeatureMapHandle, ModelKind};
use glmalign::harness::{self, derive_seed, run_verify, ExperimentConfig, MaskKind, VerifyLevel, VerifyOptions};
use glmalign::hermite::{gamma_ntk_closed_form, gamma_rf_lower_bound, hermite_coefficients, ActivationSpec, HermiteError};
use glmalign::linops;
use glmalign::trainer::{fit_min_norm, generalization_error, InitPolicy};
use glmalign::{Error, Result};

#[derive(Parser)]
#[command(name = "glmalign", version, about = "Feature alignment and masked-query attacks on min-norm RF/NTK regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a min-norm interpolator and report residual, spectrum and test error.
    Fit(FitArgs),
    /// Attack a fitted model with masked queries.
    Attack(AttackArgs),
    /// Estimate the alignment between masked and original samples.
    Gamma(GammaArgs),
    /// Print the Hermite coefficients of an activation.
    Hermite(HermiteArgs),
    /// Run a seeded sweep from a JSON config and write CSV.
    Sweep(SweepArgs),
    /// Run the verification suites.
    Verify(VerifyArgs),
    /// Generate a synthetic dataset in the matrix file format.
    GenData(GenDataArgs),
    /// Extreme eigenvalues of the training kernel.
    Eigs(InstanceArgs),
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// rf or ntk.
    #[arg(long, default_value = "rf")]
    model: String,
    #[arg(long, default_value_t = 2000)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    d_x: usize,
    #[arg(long, default_value_t = 100)]
    d_y: usize,
    #[arg(long, default_value = "relu")]
    activation: String,
    /// Training set size; ignored with --data.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// zero or network; defaults per model.
    #[arg(long)]
    theta0: Option<String>,
    /// Dataset stem written by gen-data, used instead of a fresh draw.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = harness::DEFAULT_TEST_SIZE)]
    test_size: usize,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// zero or resample.
    #[arg(long, default_value = "resample")]
    mask: String,
    /// sign or argmax.
    #[arg(long, default_value = "sign")]
    readout: String,
    #[arg(long, default_value_t = harness::DEFAULT_TEST_SIZE)]
    test_size: usize,
}

#[derive(Args)]
struct GammaArgs {
    #[arg(long, default_value = "ntk")]
    model: String,
    #[arg(long, default_value = "ntk-phi2")]
    activation: String,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 128)]
    d_x: usize,
    #[arg(long, default_value_t = 128)]
    d_y: usize,
    /// Training set size, including z₁.
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Absolute tolerance added to the 3-standard-error slack.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Args)]
struct HermiteArgs {
    activation: String,
    #[arg(long, default_value_t = 10)]
    order: usize,
    /// Also print the γ references at this α.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "quick")]
    level: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d_x: usize,
    #[arg(long)]
    d_y: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem; writes <stem>.z.glma, <stem>.g.glma and <stem>.meta.
    #[arg(long)]
    out: PathBuf,
}

/// Parses a lowercase enum name through its serde representation.
fn parse_name<T: DeserializeOwned>(what: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::config(format!("invalid {what} `{value}`")))
}

struct Instance {
    map: FeatureMapHandle,
    train: LabeledDataset,
    teacher: Option<TeacherVector>,
    policy: InitPolicy,
    seed: u64,
}

impl InstanceArgs {
    fn build(&self) -> Result<Instance> {
        let kind: ModelKind = self.model.parse()?;
        let activation = ActivationSpec::named(&self.activation)?;
        check_activation(kind, &activation)?;
        let policy = match &self.theta0 {
            Some(p) => parse_name("theta0", p)?,
            None => InitPolicy::default_for(kind),
        };
        let (train, teacher) = match &self.data {
            Some(stem) => (load_dataset(stem)?.0, None),
            None => {
                let teacher = TeacherVector::sample(self.d_x, derive_seed(self.seed, &[1]));
                let train = generate_synthetic(self.n, self.d_x, self.d_y, &teacher, derive_seed(self.seed, &[2]))?;
                (train, Some(teacher))
            }
        };
        let map = sample_map(kind, self.k, train.d(), &activation, derive_seed(self.seed, &[0]))?;
        Ok(Instance { map, train, teacher, policy, seed: self.seed })
    }
}

impl Instance {
    fn test_set(&self, size: usize) -> Result<Option<LabeledDataset>> {
        self.teacher
            .as_ref()
            .map(|t| generate_synthetic(size, self.train.d_x(), self.train.d_y(), t, derive_seed(self.seed, &[3])))
            .transpose()
            .map_err(Into::into)
    }
}

fn fit(args: &FitArgs) -> Result<()> {
    let inst = args.instance.build()?;
    let model = fit_min_norm(&inst.map, &inst.train, inst.policy)?;
    let r = model.report();
    println!("model={} n={} feature_dim={} theta0={}", inst.map.kind(), inst.train.len(), inst.map.feature_dim(), inst.policy);
    println!("max_residual={:e}", r.max_residual);
    println!("lambda_min={:e} lambda_max={:e} condition={:e}", r.lambda_min, r.lambda_max, r.condition);
    println!("lambda_min_over_scale={:.6}", lambda_min_over_scale(&model));
    if let Some(test) = inst.test_set(args.test_size)? {
        let e = generalization_error(&model, &test)?;
        println!("test_error={:.6} std_error={:.6} test_acc={:.4} samples={}", e.error, e.std_error, e.accuracy, e.samples);
    }
    Ok(())
}

fn attack(args: &AttackArgs) -> Result<()> {
    let inst = args.instance.build()?;
    let mask: MaskKind = parse_name("mask", &args.mask)?;
    let readout: Readout = parse_name("readout", &args.readout)?;
    let test = match inst.test_set(args.test_size)? {
        Some(t) => t,
        None => return Err(Error::config("attack needs a synthetic instance for the test draw; drop --data")),
    };
    let strategy = mask.strategy(derive_seed(inst.seed, &[4]));
    let (_, report) = attack_instance(&inst.map, &inst.train, &test, strategy, readout, inst.policy)?;
    println!("n,alpha,activation,readout,test_acc,attack_acc");
    println!(
        "{},{},{},{},{},{}",
        inst.train.len(),
        inst.train.alpha(),
        inst.map.activation_name(),
        readout,
        report.test_accuracy.map_or(String::new(), |a| a.to_string()),
        report.attack_accuracy
    );
    Ok(())
}

fn gamma(args: &GammaArgs) -> Result<()> {
    if args.n < 2 {
        return Err(Error::config("--n must be at least 2"));
    }
    let exp = GammaExperiment {
        kind: args.model.parse()?,
        activation: ActivationSpec::named(&args.activation)?,
        k: args.k,
        d_x: args.d_x,
        d_y: args.d_y,
        n_rest: args.n - 1,
        trials: args.trials,
        seed: args.seed,
    };
    let est = exp.run()?;
    let verdict = compare_gamma_theory(&est, args.tolerance);
    println!("kind,alpha,activation,trials,mean,std,reference,verdict");
    println!(
        "{},{},{},{},{:.6},{:.6},\"{}\",{}",
        est.kind,
        est.alpha,
        args.activation,
        est.trials,
        est.mean,
        est.std,
        est.reference,
        if verdict.pass() { "pass" } else { "fail" }
    );
    Ok(())
}

fn hermite(args: &HermiteArgs) -> Result<()> {
    let act = ActivationSpec::named(&args.activation)?;
    let spec = hermite_coefficients(&act, args.order.max(1))?;
    println!("l,mu_l");
    for (l, mu) in spec.coefficients().iter().enumerate() {
        println!("{l},{mu:.12}");
    }
    if let Some(alpha) = args.alpha {
        let full = hermite_coefficients(&act, glmalign::hermite::DEFAULT_ORDER)?;
        match gamma_rf_lower_bound(&full, alpha) {
            Ok(g) => println!("# rf lower bound at alpha={alpha}: {g:.6}"),
            Err(e) => println!("# rf lower bound: {e}"),
        }
        if let Some(d) = act.derivative() {
            let dspec = hermite_coefficients(&d, glmalign::hermite::DEFAULT_ORDER)?;
            match gamma_ntk_closed_form(&dspec, alpha) {
                Ok(g) => println!("# ntk closed form at alpha={alpha}: {g:.6}"),
                Err(e) => println!("# ntk closed form: {e}"),
            }
        }
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    for w in config.validate()? {
        eprintln!("warning: {w}");
    }
    let workers = args.workers.unwrap_or_else(harness::default_workers);
    let rows = harness::run_sweep(&config, workers)?;
    let out = args.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from));
    match out {
        Some(path) => harness::write_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => harness::write_csv(&rows, io::stdout().lock())?,
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see the error column", rows.len());
    }
    Ok(())
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let teacher = TeacherVector::sample(args.d_x, derive_seed(args.seed, &[1]));
    let data = generate_synthetic(args.n, args.d_x, args.d_y, &teacher, derive_seed(args.seed, &[2]))?;
    let meta = DatasetMetadata {
        n: args.n,
        d_x: args.d_x,
        d_y: args.d_y,
        seed: args.seed,
        label_mode: data.labels().mode_name().to_string(),
        frame_width: None,
        extra: Default::default(),
    };
    save_dataset(&args.out, &data, &meta)?;
    println!("wrote {} samples to {}.*", args.n, args.out.display());
    Ok(())
}

fn eigs(args: &InstanceArgs) -> Result<()> {
    let inst = args.build()?;
    let kernel = kernel_gram(&inst.map.embed(inst.train.z())?);
    let (lo, hi) = linops::eigen_extremes(&kernel)?;
    println!("model,n,scale,lambda_min,lambda_max,lambda_min_over_scale");
    println!(
        "{},{},{},{lo:e},{hi:e},{:.6}",
        inst.map.kind(),
        inst.train.len(),
        inst.map.kernel_scale(),
        lo / inst.map.kernel_scale()
    );
    Ok(())
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Hermite(HermiteError::UnknownActivation(_))
            | Error::Hermite(HermiteError::InvalidActivation(_))
            | Error::Hermite(HermiteError::AlphaOutOfRange(_))
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Attack(a) => attack(a),
        Command::Gamma(a) => gamma(a),
        Command::Hermite(a) => hermite(a),
        Command::Sweep(a) => sweep(a),
        Command::GenData(a) => gen_data(a),
        Command::Eigs(a) => eigs(a),
        Command::Verify(a) => {
            let level = match a.level.parse::<VerifyLevel>() {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let mut options = VerifyOptions::new(level);
            if let Some(s) = a.seed {
                options.seed = s;
            }
            if let Some(w) = a.workers {
                options.workers = w;
            }
            let report = run_verify(&options);
            println!("{report}");
            let _ = io::stdout().flush();
            return if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
