//! Masked-query label reconstruction.
//!
//! The attacker queries the trained model at `z_iᵐ = [x, y_i]`, where `y_i` is
//! the noise block of training sample `i` and `x` is either zero or a fresh
//! draw, and reads out a label. Accuracy above chance means the model
//! memorized the link between `y_i` and `g_i`.

use rayon::prelude::*;

use crate::alignment::{alignments_to_training, draw_pair, AlignmentContext, GammaReference};
use crate::data::{mask_sample, LabeledDataset, Labels, MaskStrategy, Readout, TeacherVector};
use crate::featuremaps::FeatureMapHandle;
use crate::harness::derive_seed;
use crate::linops::DenseMatrix;
use crate::trainer::{fit_embedding, fit_min_norm, InitPolicy, TrainedModel};
use crate::{stats, Error, Result};

/// Masked copies of the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    pub rows: DenseMatrix,
    pub strategy: MaskStrategy,
    pub d_x: usize,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

/// One masked query per training sample. Resampled rows use the stream
/// `derive_seed(seed, [i])`.
pub fn build_query_batch(data: &LabeledDataset, strategy: MaskStrategy) -> QueryBatch {
    let mut rows = data.z().clone();
    for i in 0..data.len() {
        let s = match strategy {
            MaskStrategy::Zero => MaskStrategy::Zero,
            MaskStrategy::Resample { seed } => MaskStrategy::Resample {
                seed: derive_seed(seed, &[i as u64]),
            },
        };
        let masked = mask_sample(&data.row(i), data.d_x(), s);
        rows.set_row(i, &masked.transpose());
    }
    QueryBatch {
        rows,
        strategy,
        d_x: data.d_x(),
    }
}

/// Statistics across the training samples of one attacked model, using the
/// leave-one-out shortcuts `S_i = c_i / (K⁻¹)_ii` and
/// `F(z_iᵐ, z_i) = (K⁻¹ k_{z_iᵐ})_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchDiagnostic {
    pub cov_query_label: f64,
    pub gamma_mean: f64,
    pub gamma_std: f64,
    pub var_stability: f64,
    pub var_label: f64,
    /// `γ · Var(S) · Var(g)`.
    pub bound_as_written: f64,
    /// `γ · √(Var(S) · Var(g))`.
    pub bound_sqrt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub attack_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Model outputs at the masked queries, `N × outputs`.
    pub outputs: DenseMatrix,
    pub readout: Readout,
    /// `F(z_iᵐ, z_i)` per sample.
    pub alignments: Vec<f64>,
    pub diagnostic: BatchDiagnostic,
}

fn flatten(m: &DenseMatrix) -> Vec<f64> {
    m.iter().copied().collect()
}

/// Queries `model` with `batch` and reads out labels.
pub fn run_attack(
    model: &TrainedModel,
    batch: &QueryBatch,
    labels: &Labels,
    readout: Readout,
    test: Option<&LabeledDataset>,
) -> Result<AttackReport> {
    if batch.len() != model.train_len() || labels.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: model.train_len(),
            got: batch.len(),
        });
    }
    let queries = model.map().embed(&batch.rows)?;
    let outputs = model.predict_embedding(&queries);
    let correct = (0..batch.len())
        .filter(|i| {
            let out: Vec<f64> = outputs.row(*i).iter().copied().collect();
            labels.is_correct(*i, &out, readout)
        })
        .count();
    let attack_accuracy = correct as f64 / batch.len().max(1) as f64;

    let f = alignments_to_training(model, &queries);
    let alignments: Vec<f64> = (0..batch.len()).map(|i| f[(i, i)]).collect();
    let s = model.leave_one_out_residuals();
    let g = labels.matrix();
    let (cov, _) = stats::covariance(&flatten(&outputs), &flatten(&g));
    let var_s = stats::variance(&flatten(&s));
    let var_g = stats::variance(&flatten(&g));
    let gamma_mean = stats::mean(&alignments);
    let diagnostic = BatchDiagnostic {
        cov_query_label: cov,
        gamma_mean,
        gamma_std: stats::std_dev(&alignments),
        var_stability: var_s,
        var_label: var_g,
        bound_as_written: gamma_mean * var_s * var_g,
        bound_sqrt: gamma_mean * (var_s * var_g).sqrt(),
    };

    let test_accuracy = match test {
        Some(t) => Some(crate::trainer::generalization_error(model, t)?.accuracy),
        None => None,
    };
    Ok(AttackReport {
        attack_accuracy,
        test_accuracy,
        outputs,
        readout,
        alignments,
        diagnostic,
    })
}

/// Setup for the covariance diagnostic: a map, a fixed `Z₋₁` with labels,
/// and the label rule for the fresh `z₁`.
#[derive(Debug, Clone)]
pub struct CovarianceSetup {
    pub map: FeatureMapHandle,
    pub rest: LabeledDataset,
    /// Labels `g₁ = sign(uᵀx₁)`; `None` makes every `g₁ = +1`.
    pub teacher: Option<TeacherVector>,
    pub policy: InitPolicy,
    pub trials: usize,
    pub seed: u64,
}

/// Covariances across trials that redraw `(z₁, z₁ᵐ)` with `Z₋₁` fixed and
/// refit the model every time.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceDiagnostic {
    pub trials: usize,
    /// `Cov(f(z₁ᵐ, θ*), g₁)` and its standard error.
    pub cov_query_label: (f64, f64),
    /// `γ̂ · Cov(S(z₁), g₁)` and its standard error, `γ̂` the mean alignment.
    pub gamma_cov_stability_label: (f64, f64),
    pub gamma_hat: f64,
    pub gamma_reference: GammaReference,
    pub var_stability: f64,
    pub var_label: f64,
    /// `γ̂ · Var(S) · Var(g)`.
    pub bound_as_written: f64,
    /// `γ̂ · √(Var(S) · Var(g))`.
    pub bound_sqrt: f64,
}

impl CovarianceDiagnostic {
    /// `|Cov(f(z₁ᵐ), g₁) − γ̂ Cov(S, g₁)|` over its combined standard error.
    pub fn first_equality_z(&self) -> f64 {
        let diff = self.cov_query_label.0 - self.gamma_cov_stability_label.0;
        let se = self.cov_query_label.1.hypot(self.gamma_cov_stability_label.1);
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff.abs() / se
        }
    }
}

pub fn covariance_diagnostic(setup: &CovarianceSetup) -> Result<CovarianceDiagnostic> {
    if setup.trials < 10 {
        return Err(Error::config("covariance diagnostic needs at least 10 trials"));
    }
    let map = &setup.map;
    let rest = &setup.rest;
    let (d_x, d_y) = (rest.d_x(), rest.d_y());
    let loo = fit_min_norm(map, rest, setup.policy)?;
    let rest_emb = loo.training_embedding().clone();
    let context = AlignmentContext::from_embedding(map, rest_emb.clone())?;
    let rest_targets = rest.targets();
    if rest_targets.ncols() != 1 {
        return Err(Error::config("covariance diagnostic needs binary labels"));
    }

    let per_trial: Vec<Result<[f64; 4]>> = (0..setup.trials)
        .into_par_iter()
        .map(|t| {
            let (z1, zm) = draw_pair(d_x, d_y, derive_seed(setup.seed, &[t as u64]));
            let x1 = z1.rows(0, d_x).into_owned();
            let g1 = setup.teacher.as_ref().map_or(1.0, |u| u.label(&x1));
            let e1 = map.embed_one(&z1)?;
            let em = map.embed_one(&zm)?;
            let full_emb = e1.stack(&rest_emb);
            let mut targets = DenseMatrix::zeros(rest_targets.nrows() + 1, 1);
            targets[(0, 0)] = g1;
            targets.view_mut((1, 0), (rest_targets.nrows(), 1)).copy_from(&rest_targets);
            let full = fit_embedding(map, full_emb, targets, setup.policy)?;
            let fm = full.predict_embedding(&em)[(0, 0)];
            let s1 = g1 - loo.predict_embedding(&e1)[(0, 0)];
            let f = context.alignment_embedded(&em, &e1).map_err(|e| match e {
                Error::DegenerateDenominator { value, threshold, .. } => Error::DegenerateDenominator {
                    value,
                    threshold,
                    trial: Some(t),
                },
                other => other,
            })?;
            Ok([fm, s1, g1, f])
        })
        .collect();
    let mut fm = Vec::with_capacity(setup.trials);
    let mut s = Vec::with_capacity(setup.trials);
    let mut g = Vec::with_capacity(setup.trials);
    let mut f = Vec::with_capacity(setup.trials);
    for r in per_trial {
        let [a, b, c, d] = r?;
        fm.push(a);
        s.push(b);
        g.push(c);
        f.push(d);
    }
    let gamma_hat = stats::mean(&f);
    let cov_fm = stats::covariance(&fm, &g);
    let cov_s = stats::covariance(&s, &g);
    let var_s = stats::variance(&s);
    let var_g = stats::variance(&g);
    let alpha = d_y as f64 / (d_x + d_y) as f64;
    Ok(CovarianceDiagnostic {
        trials: setup.trials,
        cov_query_label: cov_fm,
        gamma_cov_stability_label: (gamma_hat * cov_s.0, gamma_hat.abs() * cov_s.1),
        gamma_hat,
        gamma_reference: GammaReference::for_map(map, alpha)?,
        var_stability: var_s,
        var_label: var_g,
        bound_as_written: gamma_hat * var_s * var_g,
        bound_sqrt: gamma_hat * (var_s * var_g).sqrt(),
    })
}

/// Chance level of the attack for the given labels.
pub fn chance_level(labels: &Labels) -> f64 {
    match labels {
        Labels::Binary(_) => 0.5,
        Labels::OneHot(g) => 1.0 / g.ncols() as f64,
    }
}

/// Convenience used by the sweep: fit, attack and evaluate one instance.
pub fn attack_instance(
    map: &FeatureMapHandle,
    train: &LabeledDataset,
    test: &LabeledDataset,
    strategy: MaskStrategy,
    readout: Readout,
    policy: InitPolicy,
) -> Result<(TrainedModel, AttackReport)> {
    let model = fit_min_norm(map, train, policy)?;
    let batch = build_query_batch(train, strategy);
    let report = run_attack(&model, &batch, train.labels(), readout, Some(test))?;
    Ok((model, report))
}

/// `λ_min(K)` divided by `k` (RF) or `k·d` (NTK).
pub fn lambda_min_over_scale(model: &TrainedModel) -> f64 {
    model.report().lambda_min / model.map().kernel_scale()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use crate::data::generate_synthetic;
    use crate::featuremaps::{sample_rf_map, FeatureMap, RfMap};
    use crate::hermite::ActivationSpec;

    fn rf(k: usize, d: usize, act: &str, seed: u64) -> FeatureMapHandle {
        FeatureMap::Rf(sample_rf_map(k, d, ActivationSpec::named(act).unwrap(), seed).unwrap()).into_handle()
    }

    fn synthetic(n: usize, d_x: usize, d_y: usize, seed: u64) -> LabeledDataset {
        generate_synthetic(n, d_x, d_y, &TeacherVector::sample(d_x, 3), seed).unwrap()
    }

    #[test]
    fn query_batch_examples() {
        let data = synthetic(8, 4, 3, 1);
        let zero = build_query_batch(&data, MaskStrategy::Zero);
        for i in 0..8 {
            assert!(zero.rows.row(i).columns(0, 4).iter().all(|v| *v == 0.0));
            assert_eq!(zero.rows.row(i).columns(4, 3), data.z().row(i).columns(4, 3));
        }
        let a = build_query_batch(&data, MaskStrategy::Resample { seed: 9 });
        let b = build_query_batch(&data, MaskStrategy::Resample { seed: 9 });
        assert_eq!(a, b);
        assert_ne!(a.rows.row(0).columns(0, 4), a.rows.row(1).columns(0, 4));
        for i in 0..8 {
            assert_eq!(a.rows.row(i).columns(4, 3), data.z().row(i).columns(4, 3));
        }
    }

    #[test]
    fn unmasked_queries_recover_every_label() {
        let map = rf(300, 20, "phi2", 2);
        let data = synthetic(40, 10, 10, 3);
        let model = fit_min_norm(&map, &data, InitPolicy::Zero).unwrap();
        let batch = QueryBatch {
            rows: data.z().clone(),
            strategy: MaskStrategy::Zero,
            d_x: 10,
        };
        let report = run_attack(&model, &batch, data.labels(), Readout::Sign, None).unwrap();
        assert_eq!(report.attack_accuracy, 1.0);
        assert!(report.alignments.iter().all(|f| (f - 1.0).abs() < 1e-8));
    }

    #[test]
    fn zero_model_reads_out_the_positive_fraction() {
        let map = rf(100, 10, "phi2", 4);
        let data = synthetic(30, 5, 5, 5);
        let zeros = data.with_labels(Labels::Binary(DVector::zeros(30))).unwrap();
        let model = fit_min_norm(&map, &zeros, InitPolicy::Zero).unwrap();
        let batch = build_query_batch(&data, MaskStrategy::Zero);
        let report = run_attack(&model, &batch, data.labels(), Readout::Sign, None).unwrap();
        assert_eq!(report.attack_accuracy, data.labels().majority_fraction());
    }

    #[test]
    fn single_sample_attack_follows_the_alignment() {
        let map = rf(200, 20, "phi2", 6);
        for s in 0..10 {
            let data = synthetic(1, 10, 10, 10 + s);
            let model = fit_min_norm(&map, &data, InitPolicy::Zero).unwrap();
            let batch = build_query_batch(&data, MaskStrategy::Resample { seed: s });
            let report = run_attack(&model, &batch, data.labels(), Readout::Sign, None).unwrap();
            // θ*₋₁ = 0, so f(z₁ᵐ) = F · g₁.
            let g1 = data.targets()[(0, 0)];
            assert!((report.outputs[(0, 0)] - report.alignments[0] * g1).abs() < 1e-10);
            if report.alignments[0] > 0.0 {
                assert_eq!(report.attack_accuracy, 1.0);
            }
        }
    }

    #[test]
    fn independent_labels_are_at_chance() {
        let map = rf(1000, 40, "phi2", 7);
        let data = synthetic(400, 20, 20, 8);
        let model = fit_min_norm(&map, &data, InitPolicy::Zero).unwrap();
        let batch = build_query_batch(&data, MaskStrategy::Resample { seed: 1 });
        let coins: Vec<f64> = (0..400)
            .map(|i| if derive_seed(77, &[i]).is_multiple_of(2) { 1.0 } else { -1.0 })
            .collect();
        let coins = Labels::Binary(DVector::from_vec(coins));
        let report = run_attack(&model, &batch, &coins, Readout::Sign, None).unwrap();
        assert!((report.attack_accuracy - 0.5).abs() < 4.0 / 20.0);
    }

    #[test]
    fn reports_are_deterministic() {
        let map = rf(200, 20, "phi2", 10);
        let data = synthetic(30, 10, 10, 11);
        let test = synthetic(100, 10, 10, 12);
        let a = attack_instance(&map, &data, &test, MaskStrategy::Resample { seed: 1 }, Readout::Sign, InitPolicy::Zero)
            .unwrap()
            .1;
        let b = attack_instance(&map, &data, &test, MaskStrategy::Resample { seed: 1 }, Readout::Sign, InitPolicy::Zero)
            .unwrap()
            .1;
        assert_eq!(a, b);
        assert!(a.test_accuracy.is_some());
    }

    #[test]
    fn constant_labels_have_zero_covariance() {
        let map = rf(300, 20, "phi2", 13);
        let rest = synthetic(20, 10, 10, 14);
        let rest = rest.with_labels(Labels::Binary(DVector::from_element(20, 1.0))).unwrap();
        let diag = covariance_diagnostic(&CovarianceSetup {
            map,
            rest,
            teacher: None,
            policy: InitPolicy::Zero,
            trials: 20,
            seed: 15,
        })
        .unwrap();
        assert_eq!(diag.cov_query_label.0, 0.0);
        assert_eq!(diag.gamma_cov_stability_label.0, 0.0);
        assert_eq!(diag.var_label, 0.0);
        assert_eq!(diag.bound_as_written, 0.0);
    }

    #[test]
    fn first_equality_holds_statistically() {
        let map = rf(1000, 40, "phi2", 16);
        let teacher = TeacherVector::sample(20, 3);
        let rest = generate_synthetic(40, 20, 20, &teacher, 17).unwrap();
        let diag = covariance_diagnostic(&CovarianceSetup {
            map,
            rest,
            teacher: Some(teacher),
            policy: InitPolicy::Zero,
            trials: 300,
            seed: 18,
        })
        .unwrap();
        assert!(diag.first_equality_z() <= 3.0, "{diag:?}");
        assert!(diag.cov_query_label.0 > 0.0);
    }

    #[test]
    fn orthogonal_construction_has_no_covariance() {
        // V ignores the noise block and σ is odd, so E_x[φ(z₁ᵐ)] = 0.
        let (k, d_x, d_y) = (400, 10, 10);
        let mut v = crate::featuremaps::sample_gaussian_weights(k, d_x + d_y, 19);
        v.columns_mut(d_x, d_y).fill(0.0);
        let map = FeatureMap::Rf(RfMap::from_weights(v, ActivationSpec::named("h1+h3").unwrap()).unwrap()).into_handle();
        let teacher = TeacherVector::sample(d_x, 3);
        let rest = generate_synthetic(20, d_x, d_y, &teacher, 20).unwrap();
        let diag = covariance_diagnostic(&CovarianceSetup {
            map,
            rest,
            teacher: Some(teacher),
            policy: InitPolicy::Zero,
            trials: 300,
            seed: 21,
        })
        .unwrap();
        let (cov, se) = diag.cov_query_label;
        assert!(cov.abs() <= 3.0 * se, "{cov} ± {se}");
    }
}
