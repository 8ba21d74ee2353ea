//! Executable checks behind `verify` and the acceptance target.
//!
//! Every check is deterministic in its seed and returns a [`CheckResult`]
//! rather than panicking, so a report always lists every suite.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::{csv_string, derive_seed, run_sweep, summarize, ExperimentConfig, MaskKind};
use crate::alignment::{verify_stability_identity, AlignmentContext, GammaExperiment};
use crate::data::{generate_synthetic, mask_sample, MaskStrategy, Readout, TeacherVector};
use crate::featuremaps::{sample_map, ModelKind};
use crate::hermite::{
    gamma_ntk_closed_form, gamma_rf_lower_bound, hermite_coefficients, hermite_values, ActivationSpec,
    QuadratureRule, DEFAULT_ORDER,
};
use crate::linops::{self, gram, leave_one_out_project, remove_row, DenseMatrix, LinalgError};
use crate::stats;
use crate::trainer::{fit_min_norm, InitPolicy};
use crate::Result;

/// Row-space projector `P_A v`, injectable so the suites can be mutation tested.
pub type Projector = fn(&DenseMatrix, &DVector<f64>) -> std::result::Result<DVector<f64>, LinalgError>;

/// A deliberately wrong projector that ignores the first row of `A`.
pub fn dropped_row_projector(a: &DenseMatrix, v: &DVector<f64>) -> std::result::Result<DVector<f64>, LinalgError> {
    if a.nrows() <= 1 {
        return Ok(DVector::zeros(v.len()));
    }
    linops::project_rowspace(&remove_row(a, 0), v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CheckResult {
    /// Fails the check if it took longer than `limit`.
    pub fn within(mut self, limit: Duration) -> Self {
        if self.elapsed > limit {
            self.passed = false;
            self.detail = format!("{}; runtime {:.1?} exceeds {:.0?}", self.detail, self.elapsed, limit);
        }
        self
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} ({:.2}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn timed(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector(len: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Instance geometry shared by the fitting suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub kind: ModelKind,
    pub n: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub k: usize,
}

impl Geometry {
    pub const RF_SMALL: Geometry = Geometry { kind: ModelKind::Rf, n: 30, d_x: 20, d_y: 20, k: 300 };
    pub const NTK_SMALL: Geometry = Geometry { kind: ModelKind::Ntk, n: 30, d_x: 20, d_y: 20, k: 8 };

    /// ReLU for RF, tanh for NTK. A step derivative on eight neurons leaves
    /// too many all-zero feature rows.
    pub fn activation(&self) -> ActivationSpec {
        match self.kind {
            ModelKind::Rf => ActivationSpec::relu(),
            ModelKind::Ntk => ActivationSpec::tanh(),
        }
    }
}

/// `S(z) = F(z, z₁) S(z₁)` on `instances` random RF and NTK instances each,
/// with `z` a resampled mask of `z₁`.
pub fn stability_identity(instances: usize, seed: u64) -> CheckResult {
    timed("stability identity", || {
        let mut worst: f64 = 0.0;
        for (g_idx, geom) in [Geometry::RF_SMALL, Geometry::NTK_SMALL].into_iter().enumerate() {
            for t in 0..instances {
                let s = derive_seed(seed, &[g_idx as u64, t as u64]);
                let d = geom.d_x + geom.d_y;
                let map = sample_map(geom.kind, geom.k, d, &geom.activation(), derive_seed(s, &[0]))?;
                let teacher = TeacherVector::sample(geom.d_x, derive_seed(s, &[1]));
                let data = generate_synthetic(geom.n, geom.d_x, geom.d_y, &teacher, derive_seed(s, &[2]))?;
                let z = mask_sample(&data.row(0), geom.d_x, MaskStrategy::Resample { seed: derive_seed(s, &[3]) });
                let (lhs, rhs) = verify_stability_identity(&map, &data, &z, InitPolicy::default_for(geom.kind))?;
                let gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
                worst = worst.max(gap);
            }
        }
        Ok((worst <= 1e-6, format!("max relative gap {worst:.2e} over 2x{instances} instances (tol 1e-6)")))
    })
}

/// The projector identities on `instances` random instances each.
/// `projector` is used for the projector-form and Gram–Schmidt suites.
pub fn projector_identities(instances: usize, seed: u64, projector: Projector) -> Vec<CheckResult> {
    let sizes = |rng: &mut ChaCha20Rng| {
        let n = rng.random_range(2..=20usize);
        let p = n + rng.random_range(1..=30usize);
        (n, p)
    };

    let projform = timed("projector form", || {
        let mut worst: f64 = 0.0;
        for t in 0..instances {
            let s = derive_seed(seed, &[0, t as u64]);
            let mut rng = ChaCha20Rng::seed_from_u64(s);
            let n = rng.random_range(2..=20usize);
            let (d_x, d_y) = (10, 10);
            let k = n + rng.random_range(10..=40usize);
            let map = sample_map(ModelKind::Rf, k, d_x + d_y, &ActivationSpec::relu(), derive_seed(s, &[0]))?;
            let teacher = TeacherVector::sample(d_x, derive_seed(s, &[1]));
            let data = generate_synthetic(n, d_x, d_y, &teacher, derive_seed(s, &[2]))?;
            let z1 = data.row(0);
            let z = mask_sample(&z1, d_x, MaskStrategy::Resample { seed: derive_seed(s, &[3]) });
            let rest = data.without(0);
            let kernel_form = AlignmentContext::new(&map, rest.z())?.alignment(&z, &z1)?;

            let phi_rest = map.embed(rest.z())?.materialize();
            let f1 = map.features(&z1)?.materialize();
            let fz = map.features(&z)?.materialize();
            let u = &f1 - projector(&phi_rest, &f1)?;
            let w = &fz - projector(&phi_rest, &fz)?;
            let explicit = w.dot(&u) / u.norm_squared();
            worst = worst.max((kernel_form - explicit).abs() / (1.0 + explicit.abs()));
        }
        Ok((worst <= 1e-9, format!("max gap {worst:.2e} (tol 1e-9 scaled)")))
    });

    let gram_schmidt = timed("Gram-Schmidt update", || {
        let mut worst: f64 = 0.0;
        for t in 0..instances {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[1, t as u64]));
            let (n, p) = sizes(&mut rng);
            let phi = gaussian_matrix(n, p, &mut rng);
            let v = gaussian_vector(p, &mut rng);
            let rest = remove_row(&phi, 0);
            let first: DVector<f64> = phi.row(0).transpose();
            let u = &first - projector(&rest, &first)?;
            let lhs = projector(&phi, &v)?;
            let rhs = projector(&rest, &v)? + &u * (u.dot(&v) / u.norm_squared());
            worst = worst.max((lhs - rhs).norm() / v.norm());
        }
        Ok((worst <= 1e-9, format!("max ‖lhs − rhs‖/‖v‖ {worst:.2e} (tol 1e-9)")))
    });

    let loo = timed("leave-one-out trick", || {
        let mut worst: f64 = 0.0;
        for t in 0..instances {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[2, t as u64]));
            let (n, p) = sizes(&mut rng);
            let a = gaussian_matrix(n, p, &mut rng);
            let v = gaussian_vector(n, &mut rng);
            let (lhs, rhs) = leave_one_out_project(&a, &v)?;
            let scale = (a.transpose() * linops::KernelSolveCache::new(&gram(&a), p)?.solve(&v)).norm();
            worst = worst.max((lhs - rhs).norm() / scale.max(f64::MIN_POSITIVE));
        }
        Ok((worst <= 1e-9, format!("max relative gap {worst:.2e} (tol 1e-9)")))
    });

    let lower_bound = timed("denominator lower bound", || {
        let mut worst: f64 = f64::INFINITY;
        for t in 0..instances {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[3, t as u64]));
            let (n, p) = sizes(&mut rng);
            let phi = gaussian_matrix(n, p, &mut rng);
            let k = gram(&phi);
            let (lmin, lmax) = linops::eigen_extremes(&k)?;
            let first: DVector<f64> = phi.row(0).transpose();
            let residual = linops::residual_projection(&remove_row(&phi, 0), &first)?.norm_squared();
            worst = worst.min((residual - lmin + 1e-8 * lmax) / lmax);
        }
        Ok((worst >= 0.0, format!("min (‖P⊥φ₁‖² − λ_min + 1e-8‖K‖)/‖K‖ = {worst:.2e} (must be ≥ 0)")))
    });

    vec![projform, gram_schmidt, loo, lower_bound]
}

/// Interpolation and row-span residuals of fits on the stability-identity
/// geometries.
pub fn interpolation(instances: usize, seed: u64) -> CheckResult {
    timed("interpolation", || {
        let mut worst_fit: f64 = 0.0;
        let mut worst_span: f64 = 0.0;
        for (g_idx, geom) in [Geometry::RF_SMALL, Geometry::NTK_SMALL].into_iter().enumerate() {
            for t in 0..instances {
                let s = derive_seed(seed, &[g_idx as u64, t as u64]);
                let d = geom.d_x + geom.d_y;
                let map = sample_map(geom.kind, geom.k, d, &geom.activation(), derive_seed(s, &[0]))?;
                let teacher = TeacherVector::sample(geom.d_x, derive_seed(s, &[1]));
                let data = generate_synthetic(geom.n, geom.d_x, geom.d_y, &teacher, derive_seed(s, &[2]))?;
                for fit_data in [data.clone(), data.without(0)] {
                    let model = fit_min_norm(&map, &fit_data, InitPolicy::default_for(geom.kind))?;
                    let g_inf = fit_data.targets().amax();
                    worst_fit = worst_fit.max(model.report().max_residual / (1.0 + g_inf));

                    let delta = model.parameters().column(0) - model.initial_parameters();
                    let phi = model.training_embedding().materialize();
                    let off = linops::residual_projection(&phi, &delta)?;
                    worst_span = worst_span.max(off.norm() / delta.norm().max(f64::MIN_POSITIVE));
                }
            }
        }
        Ok((
            worst_fit <= 1e-8 && worst_span <= 1e-9,
            format!("max residual/(1+‖G‖∞) {worst_fit:.2e} (tol 1e-8), row-span residual {worst_span:.2e} (tol 1e-9)"),
        ))
    })
}

/// ReLU coefficients against closed forms and orthonormality of `h_0..h_8`.
pub fn hermite_engine() -> CheckResult {
    timed("Hermite engine", || {
        let spec = hermite_coefficients(&ActivationSpec::relu(), DEFAULT_ORDER)?;
        let mu0_err = (spec.coefficient(0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs();
        let mu1_err = (spec.coefficient(1) - 0.5).abs();

        let rule = QuadratureRule::gauss_hermite(20);
        let mut gram_err: f64 = 0.0;
        for l in 0..=8 {
            for m in 0..=8 {
                let e = rule.expectation(|x| {
                    let h = hermite_values(8, x);
                    h[l] * h[m]
                });
                let target = if l == m { 1.0 } else { 0.0 };
                gram_err = gram_err.max((e - target).abs());
            }
        }
        Ok((
            mu0_err <= 1e-6 && mu1_err <= 1e-6 && gram_err <= 1e-10,
            format!("|Δμ0| {mu0_err:.1e}, |Δμ1| {mu1_err:.1e} (tol 1e-6); orthonormality {gram_err:.1e} (tol 1e-10)"),
        ))
    })
}

/// Mean alignment against a fixed reference value: passes when
/// `|mean − reference| ≤ tolerance + 3·std/√trials`.
#[derive(Debug, Clone)]
pub struct GammaCheck {
    pub experiment: GammaExperiment,
    pub reference: f64,
    pub tolerance: f64,
}

impl GammaCheck {
    /// NTK with `φ' = h0 + h1`, `d = 256`, `k = 64`, `N = 300`, 50 trials.
    pub fn ntk(d_y: usize, reference: f64, seed: u64) -> Self {
        Self {
            experiment: GammaExperiment {
                kind: ModelKind::Ntk,
                activation: ActivationSpec::named("ntk-phi2").expect("named activation"),
                k: 64,
                d_x: 256 - d_y,
                d_y,
                n_rest: 299,
                trials: 50,
                seed,
            },
            reference,
            tolerance: 0.05,
        }
    }

    pub fn run(&self) -> CheckResult {
        let e = &self.experiment;
        let alpha = e.d_y as f64 / (e.d_x + e.d_y) as f64;
        timed(&format!("NTK closed form α={alpha}"), || {
            let est = e.run()?;
            let closed = gamma_ntk_closed_form(
                &hermite_coefficients(&e.activation.derivative().expect("NTK derivative"), DEFAULT_ORDER)?,
                alpha,
            )?;
            let slack = self.tolerance + 3.0 * est.std / (est.trials as f64).sqrt();
            let gap = (est.mean - self.reference).abs();
            Ok((
                gap <= slack,
                format!(
                    "mean F {:.4} ± {:.4} (std), reference {} (closed form {closed:.5}), |gap| {gap:.4} ≤ {slack:.4}",
                    est.mean, est.std, self.reference
                ),
            ))
        })
    }
}

/// RF with `φ = h1 + h2`, `d = 256`, `k = 2000`, `N = 300`, 50 trials:
/// mean `F` inside `[lower − 0.02 − 3·std/√50, 1.02]`.
pub fn gamma_rf(seed: u64) -> CheckResult {
    timed("RF bounds α=0.5", || {
        let act = ActivationSpec::named("phi2")?;
        let exp = GammaExperiment {
            kind: ModelKind::Rf,
            activation: act.clone(),
            k: 2000,
            d_x: 128,
            d_y: 128,
            n_rest: 299,
            trials: 50,
            seed,
        };
        let est = exp.run()?;
        let lower = gamma_rf_lower_bound(&hermite_coefficients(&act, DEFAULT_ORDER)?, 0.5)?;
        let lo = lower - 0.02 - 3.0 * est.std / (est.trials as f64).sqrt();
        let hi = 1.0 + 0.02;
        Ok((
            est.mean >= lo && est.mean <= hi,
            format!("mean F {:.4} ± {:.4} (std), lower bound {lower:.4}, window [{lo:.4}, {hi:.2}]", est.mean, est.std),
        ))
    })
}

/// Geometry of one point of the concentration check.
pub fn concentration_experiment(d: usize, seed: u64) -> GammaExperiment {
    GammaExperiment {
        kind: ModelKind::Ntk,
        activation: ActivationSpec::named("ntk-phi2").expect("named activation"),
        k: d / 4,
        d_x: d / 2,
        d_y: d / 2,
        n_rest: d,
        trials: 50,
        seed,
    }
}

/// The spread of `F` over 50 trials shrinks along `d ∈ {64, 128, 256}` with
/// `k = d/4` and `N = d`, for at least 8 of 10 master seeds.
pub fn concentration(seed: u64) -> CheckResult {
    timed("concentration", || {
        let dims = [64usize, 128, 256];
        let mut monotone = 0;
        let mut lines = Vec::new();
        for s in 0..10u64 {
            let master = derive_seed(seed, &[s]);
            let stds = dims
                .iter()
                .map(|&d| concentration_experiment(d, derive_seed(master, &[d as u64])).run().map(|e| e.std))
                .collect::<Result<Vec<f64>>>()?;
            if stds.windows(2).all(|w| w[1] < w[0]) {
                monotone += 1;
            }
            lines.push(format!("[{}]", stds.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(",")));
        }
        Ok((monotone >= 8, format!("{monotone}/10 seeds monotone; std per seed {}", lines.join(" "))))
    })
}

/// `λ_min(K)/scale` at `N = 100`, `d = 200` for RF (`k = 2000`) and NTK
/// (`k = 32`) over 10 seeds: strictly positive and within a factor of 2.
pub fn eigenvalue_sanity(seed: u64) -> CheckResult {
    timed("eigenvalue scale", || {
        let act = ActivationSpec::relu();
        let mut parts = Vec::new();
        let mut ok = true;
        for (kind, k) in [(ModelKind::Rf, 2000usize), (ModelKind::Ntk, 32)] {
            let mut values = Vec::new();
            for s in 0..10u64 {
                let ss = derive_seed(seed, &[kind as u64, s]);
                let map = sample_map(kind, k, 200, &act, derive_seed(ss, &[0]))?;
                let teacher = TeacherVector::sample(100, derive_seed(ss, &[1]));
                let data = generate_synthetic(100, 100, 100, &teacher, derive_seed(ss, &[2]))?;
                let emb = map.embed(data.z())?;
                let lmin = linops::min_eigenvalue(&crate::featuremaps::kernel_gram(&emb))?;
                values.push(lmin / map.kernel_scale());
            }
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ok &= lo > 0.0 && hi < 2.0 * lo;
            parts.push(format!("{kind}: [{lo:.4}, {hi:.4}] ratio {:.3}", hi / lo));
        }
        Ok((ok, parts.join("; ")))
    })
}

/// Desk-scale sweep behind the trend check.
pub fn trend_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelKind::Rf,
        k: 2000,
        d_x: 100,
        d_y: 100,
        activation: "relu".into(),
        n_grid: vec![50, 100, 200, 400, 800],
        trials: 10,
        mask: MaskKind::Resample,
        readout: Readout::Sign,
        seed,
        theta0: None,
        output: None,
        test_size: super::DEFAULT_TEST_SIZE,
        timing: false,
    }
}

/// Spearman(N, test acc) ≥ 0.8, Spearman(N, attack acc) ≤ −0.8 and attack
/// accuracy at the largest N within 0.10 of chance.
pub fn sweep_trends(config: &ExperimentConfig, workers: usize) -> CheckResult {
    timed("accuracy trends", || {
        let rows = run_sweep(config, workers)?;
        if let Some(r) = rows.iter().find(|r| r.error.is_some()) {
            return Ok((false, format!("cell N={} trial={} failed: {}", r.n, r.trial, r.error.as_ref().unwrap())));
        }
        let test = summarize(&rows, |r| r.test_acc);
        let attack = summarize(&rows, |r| r.attack_acc);
        let ns: Vec<f64> = test.iter().map(|p| p.n as f64).collect();
        let rho_test = stats::spearman(&ns, &test.iter().map(|p| p.mean).collect::<Vec<_>>());
        let rho_attack = stats::spearman(&ns, &attack.iter().map(|p| p.mean).collect::<Vec<_>>());
        let last = attack.last().map_or(f64::NAN, |p| p.mean);
        let fmt_means = |v: &[super::PointSummary]| v.iter().map(|p| format!("{:.3}", p.mean)).collect::<Vec<_>>().join(",");
        Ok((
            rho_test >= 0.8 && rho_attack <= -0.8 && (last - 0.5).abs() <= 0.10,
            format!(
                "ρ(N,test) {rho_test:.2}, ρ(N,attack) {rho_attack:.2}, attack@N={} {last:.3}; test [{}] attack [{}]",
                config.n_grid.last().copied().unwrap_or(0),
                fmt_means(&test),
                fmt_means(&attack)
            ),
        ))
    })
}

/// Attack accuracy at `N = 200`, `d = 200`: `α = 0.5` beats `α = 0.25` by at
/// least two combined standard errors over 10 trials.
pub fn alpha_monotonicity(seed: u64, workers: usize) -> CheckResult {
    timed("attack grows with α", || {
        let mut means = Vec::new();
        for d_y in [50usize, 100] {
            let mut c = trend_config(seed);
            c.d_y = d_y;
            c.d_x = 200 - d_y;
            c.n_grid = vec![200];
            let rows = run_sweep(&c, workers)?;
            let p = summarize(&rows, |r| r.attack_acc).remove(0);
            if p.values.len() != c.trials {
                return Ok((false, format!("only {} of {} trials succeeded at d_y = {d_y}", p.values.len(), c.trials)));
            }
            means.push((p.mean, p.std_error));
        }
        let (lo, hi) = (means[0], means[1]);
        let se = (lo.1 * lo.1 + hi.1 * hi.1).sqrt();
        let diff = hi.0 - lo.0;
        Ok((
            diff >= 2.0 * se,
            format!("attack α=0.25 {:.3}±{:.3}, α=0.5 {:.3}±{:.3}; diff {diff:.3} vs 2·SE {:.3}", lo.0, lo.1, hi.0, hi.1, 2.0 * se),
        ))
    })
}

/// Two runs of `config`, one on a single worker and one on `workers`,
/// must give byte-identical CSV.
pub fn determinism(config: &ExperimentConfig, workers: usize) -> CheckResult {
    timed("determinism", || {
        let a = csv_string(&run_sweep(config, 1)?)?;
        let b = csv_string(&run_sweep(config, workers.max(2))?)?;
        Ok((a == b, format!("{} bytes, identical: {}", a.len(), a == b)))
    })
}

/// A small sweep that runs in a few seconds.
pub fn smoke_config(seed: u64) -> ExperimentConfig {
    let mut c = trend_config(seed);
    c.k = 300;
    c.d_x = 20;
    c.d_y = 20;
    c.n_grid = vec![20, 40, 80];
    c.trials = 3;
    c.test_size = 200;
    c
}

/// The Gram–Schmidt suite must reject a corrupted projector.
pub fn mutation_detected(seed: u64) -> CheckResult {
    let start = Instant::now();
    let suites = projector_identities(10, seed, dropped_row_projector);
    let gs = suites.iter().find(|c| c.name == "Gram-Schmidt update").expect("suite present");
    CheckResult {
        name: "mutation fixture".into(),
        passed: !gs.passed,
        detail: format!("corrupted projector -> {}", gs.detail),
        elapsed: start.elapsed(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    Quick,
    Full,
}

impl std::str::FromStr for VerifyLevel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(VerifyLevel::Quick),
            "full" => Ok(VerifyLevel::Full),
            other => Err(crate::Error::config(format!("unknown verify level `{other}` (quick|full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub level: VerifyLevel,
    pub seed: u64,
    pub workers: usize,
    pub projector: Projector,
}

impl VerifyOptions {
    pub fn new(level: VerifyLevel) -> Self {
        Self {
            level,
            seed: 20240917,
            workers: super::default_workers(),
            projector: linops::project_rowspace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

/// Runs the identity suites; `Full` adds the γ comparisons.
pub fn run_verify(options: &VerifyOptions) -> VerifyReport {
    let seed = options.seed;
    let mut checks = vec![stability_identity(20, derive_seed(seed, &[1]))];
    checks.extend(projector_identities(100, derive_seed(seed, &[2]), options.projector));
    checks.push(interpolation(20, derive_seed(seed, &[3])));
    checks.push(hermite_engine());
    checks.push(eigenvalue_sanity(derive_seed(seed, &[10])));
    checks.push(determinism(&smoke_config(derive_seed(seed, &[11])), options.workers));
    checks.push(mutation_detected(derive_seed(seed, &[12])));
    if options.level == VerifyLevel::Full {
        checks.push(GammaCheck::ntk(128, 0.25, derive_seed(seed, &[4])).run());
        checks.push(GammaCheck::ntk(64, 0.03125, derive_seed(seed, &[4, 1])).run());
        checks.push(gamma_rf(derive_seed(seed, &[5])));
        checks.push(concentration(derive_seed(seed, &[9])));
    }
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_identities_pass_with_correct_projector() {
        for c in projector_identities(15, 3, linops::project_rowspace) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn corrupted_projector_breaks_gram_schmidt() {
        let r = mutation_detected(4);
        assert!(r.passed, "{r}");
    }

    #[test]
    fn identity_and_interpolation_suites_pass() {
        assert!(stability_identity(2, 7).passed);
        let r = interpolation(2, 7);
        assert!(r.passed, "{r}");
        assert!(hermite_engine().passed);
    }

    #[test]
    fn level_parsing() {
        assert_eq!("quick".parse::<VerifyLevel>().unwrap(), VerifyLevel::Quick);
        assert!("slow".parse::<VerifyLevel>().is_err());
    }
}
