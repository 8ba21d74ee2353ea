//! Min-norm interpolation in kernel space.
//!
//! A model is `f(z, θ) = φ(z)ᵀθ` and the fit is
//! `θ* = θ₀ + Φᵀ K⁻¹ (G − f(Z, θ₀))`. Only the dual coefficients
//! `c = K⁻¹ (G − f(Z, θ₀))` are stored; predictions are
//! `f(z, θ*) = f(z, θ₀) + k_zᵀ c`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::data::LabeledDataset;
use crate::featuremaps::{cross_kernel, kernel_gram, Embedding, FeatureMap, FeatureMapHandle, ModelKind};
use crate::linops::{DenseMatrix, KernelSolveCache, LinalgError};
use crate::{Error, Result};

/// Choice of the initialization `θ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    /// `θ₀ = 0`.
    Zero,
    /// `θ₀ = vec(W₀)`; NTK only.
    Network,
}

impl InitPolicy {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Rf => InitPolicy::Zero,
            ModelKind::Ntk => InitPolicy::Network,
        }
    }
}

impl std::fmt::Display for InitPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitPolicy::Zero => "zero",
            InitPolicy::Network => "network",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    /// `max_i ‖f(z_i, θ*) − g_i‖_∞`.
    pub max_residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    map: FeatureMapHandle,
    policy: InitPolicy,
    train: Embedding,
    cache: KernelSolveCache,
    targets: DenseMatrix,
    dual: DenseMatrix,
    report: FitReport,
}

pub(crate) fn factorize(kernel: &DenseMatrix, inner_dim: usize) -> Result<KernelSolveCache> {
    KernelSolveCache::new(kernel, inner_dim).map_err(|e| match e {
        LinalgError::SingularGram {
            min_eigenvalue,
            tolerance,
        } => Error::SingularKernel {
            min_eigenvalue,
            tolerance,
        },
        other => Error::Linalg(other),
    })
}

fn init_outputs(policy: InitPolicy, emb: &Embedding) -> DVector<f64> {
    match (policy, emb.network_init()) {
        (InitPolicy::Network, Some(init)) => init.clone(),
        _ => DVector::zeros(emb.len()),
    }
}

fn check_policy(map: &FeatureMap, policy: InitPolicy) -> Result<()> {
    if policy == InitPolicy::Network && map.kind() == ModelKind::Rf {
        return Err(Error::config("network initialization is only defined for NTK maps"));
    }
    Ok(())
}

/// Fits the min-norm interpolator `θ*` of `data` around `θ₀`.
pub fn fit_min_norm(map: &FeatureMapHandle, data: &LabeledDataset, policy: InitPolicy) -> Result<TrainedModel> {
    check_policy(map, policy)?;
    if data.d() != map.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.input_dim(),
            got: data.d(),
        });
    }
    let train = map.embed(data.z())?;
    fit_embedding(map, train, data.targets(), policy)
}

/// Fits from a precomputed training embedding and `N × c` targets.
pub fn fit_embedding(
    map: &FeatureMapHandle,
    train: Embedding,
    targets: DenseMatrix,
    policy: InitPolicy,
) -> Result<TrainedModel> {
    check_policy(map, policy)?;
    let kernel = kernel_gram(&train);
    let cache = factorize(&kernel, map.feature_dim())?;
    let f0 = init_outputs(policy, &train);
    let mut rhs = targets.clone();
    for mut col in rhs.column_iter_mut() {
        col -= &f0;
    }
    let dual = cache.solve_matrix(&rhs);
    let fitted = cache.kernel() * &dual;
    let max_residual = if rhs.is_empty() { 0.0 } else { (&fitted - &rhs).amax() };
    let report = FitReport {
        max_residual,
        lambda_min: cache.min_eigenvalue(),
        lambda_max: cache.max_eigenvalue(),
        condition: cache.condition_estimate(),
        tolerance: cache.tolerance(),
    };
    Ok(TrainedModel {
        map: Arc::clone(map),
        policy,
        train,
        cache,
        targets,
        dual,
        report,
    })
}

/// Min-norm fit on `data` with row `i` removed.
pub fn fit_leave_one_out(
    map: &FeatureMapHandle,
    data: &LabeledDataset,
    i: usize,
    policy: InitPolicy,
) -> Result<TrainedModel> {
    if i >= data.len() {
        return Err(Error::config(format!("row {i} out of range for {} samples", data.len())));
    }
    fit_min_norm(map, &data.without(i), policy)
}

impl TrainedModel {
    pub fn map(&self) -> &FeatureMapHandle {
        &self.map
    }

    pub fn policy(&self) -> InitPolicy {
        self.policy
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    /// Dual coefficients `c`, `N × outputs`.
    pub fn dual(&self) -> &DenseMatrix {
        &self.dual
    }

    pub fn targets(&self) -> &DenseMatrix {
        &self.targets
    }

    pub fn training_embedding(&self) -> &Embedding {
        &self.train
    }

    pub fn cache(&self) -> &KernelSolveCache {
        &self.cache
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    pub fn outputs(&self) -> usize {
        self.dual.ncols()
    }

    pub fn same_map(&self, other: &TrainedModel) -> bool {
        Arc::ptr_eq(&self.map, &other.map) || *self.map == *other.map
    }

    /// Predictions for an embedded batch, `n × outputs`.
    pub fn predict_embedding(&self, queries: &Embedding) -> DenseMatrix {
        let mut out = if self.train.is_empty() {
            DenseMatrix::zeros(queries.len(), self.outputs())
        } else {
            cross_kernel(queries, &self.train) * &self.dual
        };
        let f0 = init_outputs(self.policy, queries);
        for mut col in out.column_iter_mut() {
            col += &f0;
        }
        out
    }

    /// Predictions for the rows of `z`.
    pub fn predict(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.predict_embedding(&self.map.embed(z)?))
    }

    /// All outputs at a single query.
    pub fn predict_one(&self, z: &DVector<f64>) -> Result<Vec<f64>> {
        let out = self.predict_embedding(&self.map.embed_one(z)?);
        Ok(out.row(0).iter().copied().collect())
    }

    /// First output at a single query.
    pub fn predict_scalar(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.predict_one(z)?[0])
    }

    /// `θ₀` materialized, length `p`.
    pub fn initial_parameters(&self) -> DVector<f64> {
        match (self.policy, self.map.network_parameters()) {
            (InitPolicy::Network, Some(theta)) => theta,
            _ => DVector::zeros(self.map.feature_dim()),
        }
    }

    /// `θ*` materialized, `p × outputs`. Costs `O(N p)` memory.
    pub fn parameters(&self) -> DenseMatrix {
        let phi = self.train.materialize();
        let mut theta = phi.transpose() * &self.dual;
        let theta0 = self.initial_parameters();
        for mut col in theta.column_iter_mut() {
            col += &theta0;
        }
        theta
    }

    /// Leave-one-out residuals `g_i − f₋ᵢ(z_i) = c_i / (K⁻¹)_ii`, `N × outputs`.
    pub fn leave_one_out_residuals(&self) -> DenseMatrix {
        let diag = self.cache.inverse_diagonal();
        DenseMatrix::from_fn(self.dual.nrows(), self.dual.ncols(), |i, j| self.dual[(i, j)] / diag[i])
    }
}

/// `S(z) = f(z, θ*) − f(z, θ*₋₁)` for every output.
pub fn stability_eval_outputs(full: &TrainedModel, loo: &TrainedModel, z: &DVector<f64>) -> Result<Vec<f64>> {
    if !full.same_map(loo) {
        return Err(Error::MapMismatch);
    }
    let emb = full.map.embed_one(z)?;
    let a = full.predict_embedding(&emb);
    let b = loo.predict_embedding(&emb);
    Ok((0..a.ncols()).map(|j| a[(0, j)] - b[(0, j)]).collect())
}

/// `S(z) = f(z, θ*) − f(z, θ*₋₁)` for the first output.
pub fn stability_eval(full: &TrainedModel, loo: &TrainedModel, z: &DVector<f64>) -> Result<f64> {
    Ok(stability_eval_outputs(full, loo, z)?[0])
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// `S_{z₁}(z₁)`.
    pub s_at_self: f64,
    /// `S_{z₁}(z)`.
    pub s_at_query: f64,
    pub full: TrainedModel,
    pub loo: TrainedModel,
}

/// Fits on `data` and on `data` without its first row and evaluates the
/// stability at `z₁` and at `z`.
pub fn stability_report(
    map: &FeatureMapHandle,
    data: &LabeledDataset,
    z: &DVector<f64>,
    policy: InitPolicy,
) -> Result<StabilityReport> {
    let full = fit_min_norm(map, data, policy)?;
    let loo = fit_leave_one_out(map, data, 0, policy)?;
    let s_at_self = stability_eval(&full, &loo, &data.row(0))?;
    let s_at_query = stability_eval(&full, &loo, z)?;
    Ok(StabilityReport {
        s_at_self,
        s_at_query,
        full,
        loo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Mean of `‖f(z) − g_z‖²` over the test draw.
    pub error: f64,
    pub std_error: f64,
    pub accuracy: f64,
    pub samples: usize,
}

/// Monte-Carlo generalization error and test accuracy.
pub fn generalization_error(model: &TrainedModel, test: &LabeledDataset) -> Result<EvalReport> {
    let pred = model.predict(test.z())?;
    let targets = test.targets();
    if targets.ncols() != pred.ncols() {
        return Err(Error::DimensionMismatch {
            expected: pred.ncols(),
            got: targets.ncols(),
        });
    }
    let readout = test.labels().readout();
    let mut sq = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    for i in 0..test.len() {
        let out: Vec<f64> = pred.row(i).iter().copied().collect();
        sq.push((pred.row(i) - targets.row(i)).norm_squared());
        if test.labels().is_correct(i, &out, readout) {
            correct += 1;
        }
    }
    Ok(EvalReport {
        error: crate::stats::mean(&sq),
        std_error: crate::stats::std_error(&sq),
        accuracy: correct as f64 / test.len().max(1) as f64,
        samples: test.len(),
    })
}
