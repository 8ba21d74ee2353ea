//! Feature alignment between a query and a training sample.
//!
//! With `P⊥` the projector onto the orthogonal complement of the rows of
//! `Φ₋₁`,
//!
//! ```text
//! F(z, z₁) = φ(z)ᵀ P⊥ φ(z₁) / ‖P⊥ φ(z₁)‖²
//! ```
//!
//! and the stability of a min-norm fit factors as `S(z) = F(z, z₁) S(z₁)`.
//! Everything is evaluated in kernel space:
//! `aᵀ P⊥ b = k(a, b) − k_aᵀ K₋₁⁻¹ k_b`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::data::{mask_sample, sample_sphere, LabeledDataset, MaskStrategy};
use crate::featuremaps::{cross_kernel, kernel_gram, Embedding, FeatureMap, FeatureMapHandle, ModelKind};
use crate::harness::derive_seed;
use crate::hermite::{gamma_ntk_closed_form, gamma_rf_lower_bound, series_tail_bound};
use crate::linops::{DenseMatrix, KernelSolveCache};
use crate::trainer::{factorize, fit_leave_one_out, fit_min_norm, stability_eval, InitPolicy, TrainedModel};
use crate::{stats, Error, Result};

/// Relative guard on `‖P⊥ φ(z₁)‖²`.
pub const DENOMINATOR_GUARD: f64 = 1e-10;

/// `Φ₋₁` and the factorization of `K₋₁`.
#[derive(Debug, Clone)]
pub struct AlignmentContext {
    map: FeatureMapHandle,
    rest: Embedding,
    cache: KernelSolveCache,
}

impl AlignmentContext {
    /// Context for the training rows `z_rest` (the set without `z₁`).
    pub fn new(map: &FeatureMapHandle, z_rest: &DenseMatrix) -> Result<Self> {
        let rest = map.embed(z_rest)?;
        Self::from_embedding(map, rest)
    }

    pub fn from_embedding(map: &FeatureMapHandle, rest: Embedding) -> Result<Self> {
        let cache = factorize(&kernel_gram(&rest), map.feature_dim())?;
        Ok(Self {
            map: map.clone(),
            rest,
            cache,
        })
    }

    pub fn map(&self) -> &FeatureMapHandle {
        &self.map
    }

    pub fn rest(&self) -> &Embedding {
        &self.rest
    }

    /// `aᵀ P⊥ b` for single-row embeddings.
    pub fn residual_inner(&self, a: &Embedding, b: &Embedding) -> f64 {
        a_dot_b(a, b) - self.projected_inner(a, b)
    }

    /// `aᵀ P b` for single-row embeddings.
    pub fn projected_inner(&self, a: &Embedding, b: &Embedding) -> f64 {
        if self.rest.is_empty() {
            return 0.0;
        }
        let ka = cross_kernel(&self.rest, a).column(0).into_owned();
        let kb = cross_kernel(&self.rest, b).column(0).into_owned();
        ka.dot(&self.cache.solve(&kb))
    }

    /// Numerator and denominator of `F(z, z₁)` for embedded queries.
    pub fn alignment_parts(&self, z: &Embedding, z1: &Embedding) -> (f64, f64) {
        (self.residual_inner(z, z1), self.residual_inner(z1, z1))
    }

    /// `F` for embedded queries, with the denominator guard.
    pub fn alignment_embedded(&self, z: &Embedding, z1: &Embedding) -> Result<f64> {
        let (num, den) = self.alignment_parts(z, z1);
        guard(num, den, a_dot_b(z1, z1), None)
    }

    pub fn alignment(&self, z: &DVector<f64>, z1: &DVector<f64>) -> Result<f64> {
        let a = self.map.embed_one(z)?;
        let b = self.map.embed_one(z1)?;
        self.alignment_embedded(&a, &b)
    }
}

fn a_dot_b(a: &Embedding, b: &Embedding) -> f64 {
    cross_kernel(a, b)[(0, 0)]
}

fn guard(num: f64, den: f64, self_kernel: f64, trial: Option<usize>) -> Result<f64> {
    let threshold = DENOMINATOR_GUARD * self_kernel;
    if !(den > threshold) {
        return Err(Error::DegenerateDenominator {
            value: den,
            threshold,
            trial,
        });
    }
    Ok(num / den)
}

/// `F(z, z₁)` with `z_rest` the training rows other than `z₁`.
pub fn feature_alignment(
    map: &FeatureMapHandle,
    z_rest: &DenseMatrix,
    z: &DVector<f64>,
    z1: &DVector<f64>,
) -> Result<f64> {
    AlignmentContext::new(map, z_rest)?.alignment(z, z1)
}

/// `F(z_q, z_i)` for every query row `q` and training row `i` of a fitted
/// model, as the matrix `(K⁻¹ k_{z_q})_i`, `n_queries × N`.
pub fn alignments_to_training(model: &TrainedModel, queries: &Embedding) -> DenseMatrix {
    let k = cross_kernel(model.training_embedding(), queries);
    model.cache().solve_matrix(&k).transpose()
}

/// Both sides of `S(z) = F(z, z₁) S(z₁)` for `z₁` the first row of `data`.
/// The left side comes from two fits, the right side from the projector
/// form of `F` and the fitted `S(z₁)`.
pub fn verify_stability_identity(
    map: &FeatureMapHandle,
    data: &LabeledDataset,
    z: &DVector<f64>,
    policy: InitPolicy,
) -> Result<(f64, f64)> {
    let full = fit_min_norm(map, data, policy)?;
    let loo = fit_leave_one_out(map, data, 0, policy)?;
    let z1 = data.row(0);
    let lhs = stability_eval(&full, &loo, z)?;
    let s1 = stability_eval(&full, &loo, &z1)?;
    let f = feature_alignment(map, &data.without(0).z().clone(), z, &z1)?;
    Ok((lhs, f * s1))
}

/// Theory value the alignment is compared with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaReference {
    /// NTK closed form.
    Closed(f64),
    /// RF: `γ ∈ [lower, upper]`.
    Bounds { lower: f64, upper: f64 },
}

impl GammaReference {
    pub fn for_map(map: &FeatureMap, alpha: f64) -> Result<Self> {
        Ok(match map.kind() {
            ModelKind::Rf => GammaReference::Bounds {
                lower: gamma_rf_lower_bound(map.spectrum(), alpha)?,
                upper: 1.0,
            },
            ModelKind::Ntk => GammaReference::Closed(gamma_ntk_closed_form(map.spectrum(), alpha)?),
        })
    }

    /// The point value (NTK) or the lower bound (RF).
    pub fn value(&self) -> f64 {
        match self {
            GammaReference::Closed(g) => *g,
            GammaReference::Bounds { lower, .. } => *lower,
        }
    }
}

impl std::fmt::Display for GammaReference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaReference::Closed(g) => write!(f, "{g:.6}"),
            GammaReference::Bounds { lower, upper } => write!(f, "[{lower:.6}, {upper:.6}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentEstimate {
    /// Mean of the per-trial ratios.
    pub mean: f64,
    pub std: f64,
    /// Mean numerator over mean denominator.
    pub ratio_of_means: f64,
    pub trials: usize,
    pub kind: ModelKind,
    pub alpha: f64,
    pub reference: GammaReference,
    /// Tail bound of the truncated Hermite series behind `reference`.
    pub truncation_tail: f64,
    pub values: Vec<f64>,
    pub numerators: Vec<f64>,
    pub denominators: Vec<f64>,
}

/// One Monte-Carlo draw of `(z₁, z₁ᵐ)`: fresh `z₁ = [x₁, y₁]` on the block
/// spheres and `z₁ᵐ = [x, y₁]` with `x` resampled.
pub fn draw_pair(d_x: usize, d_y: usize, seed: u64) -> (DVector<f64>, DVector<f64>) {
    let mut xr = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[0]));
    let mut yr = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[1]));
    let x = sample_sphere(&mut xr, d_x, (d_x as f64).sqrt());
    let y = sample_sphere(&mut yr, d_y, (d_y as f64).sqrt());
    let mut z1 = DVector::zeros(d_x + d_y);
    z1.rows_mut(0, d_x).copy_from(&x);
    z1.rows_mut(d_x, d_y).copy_from(&y);
    let zm = mask_sample(&z1, d_x, MaskStrategy::Resample { seed: derive_seed(seed, &[2]) });
    (z1, zm)
}

/// Monte-Carlo estimate of `F(z₁ᵐ, z₁)` with the map and `Z₋₁` fixed and
/// `(z₁, x)` redrawn in every trial. Trials run in parallel; the result
/// depends only on the inputs.
pub fn estimate_gamma(context: &AlignmentContext, d_x: usize, trials: usize, seed: u64) -> Result<AlignmentEstimate> {
    let map = context.map();
    let d = map.input_dim();
    if d_x >= d {
        return Err(Error::config(format!("d_x = {d_x} leaves no noise block in d = {d}")));
    }
    if trials < 2 {
        return Err(Error::config("estimate_gamma needs at least two trials"));
    }
    let d_y = d - d_x;
    let alpha = d_y as f64 / d as f64;
    let reference = GammaReference::for_map(map, alpha)?;

    let parts: Vec<Result<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (z1, zm) = draw_pair(d_x, d_y, derive_seed(seed, &[t as u64]));
            let e1 = map.embed_one(&z1)?;
            let em = map.embed_one(&zm)?;
            let (num, den) = context.alignment_parts(&em, &e1);
            guard(num, den, a_dot_b(&e1, &e1), Some(t))?;
            Ok((num, den))
        })
        .collect();
    let mut numerators = Vec::with_capacity(trials);
    let mut denominators = Vec::with_capacity(trials);
    for p in parts {
        let (n, d) = p?;
        numerators.push(n);
        denominators.push(d);
    }
    let values: Vec<f64> = numerators.iter().zip(&denominators).map(|(n, d)| n / d).collect();
    Ok(AlignmentEstimate {
        mean: stats::mean(&values),
        std: stats::std_dev(&values),
        ratio_of_means: stats::mean(&numerators) / stats::mean(&denominators),
        trials,
        kind: map.kind(),
        alpha,
        reference,
        truncation_tail: series_tail_bound(map.spectrum(), alpha),
        values,
        numerators,
        denominators,
    })
}

/// A self-contained γ experiment: samples the map and `Z₋₁`, then estimates.
#[derive(Debug, Clone)]
pub struct GammaExperiment {
    pub kind: ModelKind,
    /// `σ`; NTK maps use its derivative.
    pub activation: crate::hermite::ActivationSpec,
    pub k: usize,
    pub d_x: usize,
    pub d_y: usize,
    /// Size of `Z₋₁`.
    pub n_rest: usize,
    pub trials: usize,
    pub seed: u64,
}

impl GammaExperiment {
    pub fn build_context(&self) -> Result<AlignmentContext> {
        crate::featuremaps::check_activation(self.kind, &self.activation)?;
        let d = self.d_x + self.d_y;
        let map = crate::featuremaps::sample_map(self.kind, self.k, d, &self.activation, derive_seed(self.seed, &[0]))?;
        let teacher = crate::data::TeacherVector::sample(self.d_x, derive_seed(self.seed, &[1]));
        let rest = crate::data::generate_synthetic(self.n_rest, self.d_x, self.d_y, &teacher, derive_seed(self.seed, &[2]))?;
        AlignmentContext::new(&map, rest.z())
    }

    pub fn run(&self) -> Result<AlignmentEstimate> {
        let ctx = self.build_context()?;
        estimate_gamma(&ctx, self.d_x, self.trials, derive_seed(self.seed, &[3]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaVerdict {
    pub reference: GammaReference,
    pub slack: f64,
    pub pass_lower: bool,
    pub pass_upper: bool,
}

impl GammaVerdict {
    pub fn pass(&self) -> bool {
        self.pass_lower && self.pass_upper
    }
}

/// Compares an estimate with its reference using
/// `slack = 3·std/√trials + tolerance`.
pub fn compare_gamma_theory(est: &AlignmentEstimate, tolerance: f64) -> GammaVerdict {
    let slack = 3.0 * est.std / (est.trials as f64).sqrt() + tolerance;
    let (pass_lower, pass_upper) = match est.reference {
        GammaReference::Closed(g) => (est.mean >= g - slack, est.mean <= g + slack),
        GammaReference::Bounds { lower, upper } => (est.mean >= lower - slack, est.mean <= upper + slack),
    };
    GammaVerdict {
        reference: est.reference,
        slack,
        pass_lower,
        pass_upper,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentDecomposition {
    /// `F(z₁ᵐ, z₁)`.
    pub raw: f64,
    /// `F` with centered features and the uncentered projector.
    pub centered: f64,
    /// `raw − centered`.
    pub centering_correction: f64,
    /// RF: `(φ̃ᵐᵀφ̃₁ − μ₁² (Vz₁ᵐ)ᵀ P (Vz₁)) / ‖P⊥φ̃₁‖²`; `None` for NTK.
    pub linearized: Option<f64>,
    /// `φ̃ᵐᵀ P φ̃₁ / ‖φ̃₁‖²`.
    pub projected_cross: f64,
    /// `‖P φ̃₁‖² / ‖φ̃₁‖²`.
    pub residual_noise_ratio: f64,
    /// `φ̃ᵐᵀ φ̃₁ / ‖φ̃₁‖²`.
    pub unprojected: f64,
}

/// Splits `F(z₁ᵐ, z₁)` into its centering, linearization and projection parts.
pub fn alignment_decomposition(
    context: &AlignmentContext,
    z1: &DVector<f64>,
    z1m: &DVector<f64>,
) -> Result<AlignmentDecomposition> {
    let map = context.map();
    let e1 = map.embed_one(z1)?;
    let em = map.embed_one(z1m)?;
    let raw = context.alignment_embedded(&em, &e1)?;

    let one = |z: &DVector<f64>| DenseMatrix::from_row_slice(1, z.len(), z.as_slice());
    let c1 = map.embed_centered(&one(z1))?;
    let cm = map.embed_centered(&one(z1m))?;
    let centered = context.alignment_embedded(&cm, &c1)?;

    let norm1 = a_dot_b(&c1, &c1);
    let cross = a_dot_b(&cm, &c1);
    let projected_cross = context.projected_inner(&cm, &c1);
    let projected_self = context.projected_inner(&c1, &c1);
    let residual_den = norm1 - projected_self;

    let linearized = match map.as_ref() {
        FeatureMap::Rf(rf) => {
            let mu1 = map.spectrum().coefficient(1);
            let v = rf.weights();
            let lin = |z: &DVector<f64>| Embedding::Rf {
                features: DenseMatrix::from_row_slice(1, v.nrows(), (v * z).as_slice()),
            };
            let p_lin = context.projected_inner(&lin(z1m), &lin(z1));
            Some((cross - mu1 * mu1 * p_lin) / residual_den)
        }
        FeatureMap::Ntk(_) => None,
    };

    Ok(AlignmentDecomposition {
        raw,
        centered,
        centering_correction: raw - centered,
        linearized,
        projected_cross: projected_cross / norm1,
        residual_noise_ratio: projected_self / norm1,
        unprojected: cross / norm1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, TeacherVector};
    use crate::featuremaps::{sample_ntk_map, sample_rf_map};
    use crate::hermite::ActivationSpec;
    use crate::linops::residual_projection;

    fn rf(k: usize, d: usize, act: &str, seed: u64) -> FeatureMapHandle {
        FeatureMap::Rf(sample_rf_map(k, d, ActivationSpec::named(act).unwrap(), seed).unwrap()).into_handle()
    }

    fn ntk(k: usize, d: usize, deriv: &str, seed: u64) -> FeatureMapHandle {
        FeatureMap::Ntk(sample_ntk_map(k, d, ActivationSpec::named(deriv).unwrap(), seed).unwrap()).into_handle()
    }

    fn synthetic(n: usize, d_x: usize, d_y: usize, seed: u64) -> LabeledDataset {
        generate_synthetic(n, d_x, d_y, &TeacherVector::sample(d_x, 7), seed).unwrap()
    }

    #[test]
    fn self_alignment_is_one() {
        let map = rf(200, 30, "phi2", 1);
        let data = synthetic(20, 15, 15, 2);
        let ctx = AlignmentContext::new(&map, data.without(0).z()).unwrap();
        let f = ctx.alignment(&data.row(0), &data.row(0)).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_query_has_zero_alignment() {
        let map = ntk(3, 6, "h0+h1", 3);
        let rest = DenseMatrix::from_row_slice(2, 6, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let z1 = DVector::from_row_slice(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let z = DVector::from_row_slice(&[0.0, 0.0, 0.0, 0.0, 2.0, 1.0]);
        assert_eq!(feature_alignment(&map, &rest, &z, &z1).unwrap(), 0.0);
    }

    #[test]
    fn matches_materialized_projector() {
        let map = rf(200, 30, "phi2", 4);
        let data = synthetic(20, 15, 15, 5);
        let rest = data.without(0);
        let z1 = data.row(0);
        let z = synthetic(1, 15, 15, 6).row(0);
        let f = feature_alignment(&map, rest.z(), &z, &z1).unwrap();

        let phi_rest = map.embed(rest.z()).unwrap().materialize();
        let p1 = map.features(&z1).unwrap().materialize();
        let pz = map.features(&z).unwrap().materialize();
        // Orthonormal basis of the row span from the SVD.
        let svd = phi_rest.transpose().svd(true, false);
        let u = svd.u.unwrap();
        let perp = |v: &DVector<f64>| v - &u * (u.transpose() * v);
        let oracle = pz.dot(&perp(&p1)) / perp(&p1).norm_squared();
        assert!((f - oracle).abs() < 1e-8, "{f} vs {oracle}");
        let r = residual_projection(&phi_rest, &p1).unwrap();
        assert!((r - perp(&p1)).amax() < 1e-8 * p1.amax());
    }

    #[test]
    fn training_shortcut_matches_leave_one_out_context() {
        for map in [rf(300, 20, "phi4", 8), ntk(6, 20, "h0+h3", 9)] {
            let data = synthetic(25, 10, 10, 10);
            let model = fit_min_norm(&map, &data, InitPolicy::default_for(map.kind())).unwrap();
            let query = synthetic(1, 10, 10, 11).row(0);
            let short = alignments_to_training(&model, &map.embed_one(&query).unwrap());
            for i in [0, 12, 24] {
                let ctx = AlignmentContext::new(&map, data.without(i).z()).unwrap();
                let direct = ctx.alignment(&query, &data.row(i)).unwrap();
                assert!((short[(0, i)] - direct).abs() < 1e-8 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn scale_invariance_in_query() {
        let map = rf(100, 10, "phi2", 12);
        let data = synthetic(10, 5, 5, 13);
        let ctx = AlignmentContext::new(&map, data.without(0).z()).unwrap();
        let e1 = map.embed_one(&data.row(0)).unwrap();
        let q = map.embed_one(&synthetic(1, 5, 5, 14).row(0)).unwrap();
        let Embedding::Rf { features } = &q else { unreachable!() };
        let scaled = Embedding::Rf { features: features * 2.5 };
        let a = ctx.alignment_embedded(&q, &e1).unwrap();
        let b = ctx.alignment_embedded(&scaled, &e1).unwrap();
        assert!((b - 2.5 * a).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        let map = rf(50, 4, "phi2", 15);
        let data = synthetic(5, 2, 2, 16);
        let ctx = AlignmentContext::new(&map, data.without(0).z()).unwrap();
        // z₁ already in Z₋₁: its residual vanishes.
        let err = ctx.alignment(&data.row(0), &data.row(1)).unwrap_err();
        assert!(matches!(err, Error::DegenerateDenominator { trial: None, .. }));
    }

    #[test]
    fn stability_identity_examples() {
        for (map, policy) in [(rf(300, 40, "phi2", 17), InitPolicy::Zero), (ntk(8, 40, "h0+h1", 18), InitPolicy::Network)] {
            let data = synthetic(30, 20, 20, 19);
            let (l, r) = verify_stability_identity(&map, &data, &data.row(0), policy).unwrap();
            assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()));
            for s in 0..5 {
                let z = synthetic(1, 20, 20, 100 + s).row(0);
                let (l, r) = verify_stability_identity(&map, &data, &z, policy).unwrap();
                assert!((l - r).abs() <= 1e-6 * (1.0 + l.abs()), "{l} vs {r}");
            }
        }
    }

    #[test]
    fn zero_correction_gives_zero_stability() {
        let map = ntk(6, 10, "h0+h1", 20);
        let data = synthetic(12, 5, 5, 21);
        let init = map.embed(data.z()).unwrap().network_init().unwrap().clone();
        let data = data.with_labels(crate::data::Labels::Binary(init)).unwrap();
        let z = synthetic(1, 5, 5, 22).row(0);
        let (l, r) = verify_stability_identity(&map, &data, &z, InitPolicy::Network).unwrap();
        assert!(l.abs() < 1e-10 && r.abs() < 1e-10);
    }

    #[test]
    fn estimate_is_deterministic_and_compared() {
        let exp = GammaExperiment {
            kind: ModelKind::Ntk,
            activation: ActivationSpec::named("ntk-phi2").unwrap(),
            k: 16,
            d_x: 32,
            d_y: 32,
            n_rest: 50,
            trials: 20,
            seed: 23,
        };
        let a = exp.run().unwrap();
        let b = exp.run().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reference, GammaReference::Closed(0.25));
        assert!(a.std >= 0.0 && a.values.len() == 20);

        let mut exact = a.clone();
        exact.mean = 0.25;
        let v = compare_gamma_theory(&exact, 0.0);
        assert!(v.pass());
    }

    #[test]
    fn rf_reference_is_a_bound() {
        let mut est = AlignmentEstimate {
            mean: 0.3,
            std: 0.0,
            ratio_of_means: 0.3,
            trials: 10,
            kind: ModelKind::Rf,
            alpha: 0.5,
            reference: GammaReference::Bounds { lower: 0.125, upper: 1.0 },
            truncation_tail: 0.0,
            values: vec![],
            numerators: vec![],
            denominators: vec![],
        };
        assert!(compare_gamma_theory(&est, 0.02).pass());
        est.mean = 0.1;
        assert!(!compare_gamma_theory(&est, 0.02).pass_lower);
        est.mean = 1.03;
        assert!(!compare_gamma_theory(&est, 0.02).pass_upper);
    }

    #[test]
    fn linear_activation_is_rejected_for_rf() {
        let exp = GammaExperiment {
            kind: ModelKind::Rf,
            activation: ActivationSpec::named("h0+h1").unwrap(),
            k: 16,
            d_x: 8,
            d_y: 8,
            n_rest: 5,
            trials: 5,
            seed: 1,
        };
        assert!(matches!(exp.run(), Err(Error::Config(_))));
    }

    #[test]
    fn decomposition_examples() {
        // μ₀ = 0: centering changes nothing.
        let map = rf(300, 20, "phi2", 24);
        let data = synthetic(20, 10, 10, 25);
        let ctx = AlignmentContext::new(&map, data.without(0).z()).unwrap();
        let (z1, zm) = draw_pair(10, 10, 26);
        let dec = alignment_decomposition(&ctx, &z1, &zm).unwrap();
        assert_eq!(dec.raw, dec.centered);
        assert_eq!(dec.centering_correction, 0.0);

        // Linear φ = h₁: the linearized form is exact.
        let lin = rf(300, 20, "h1", 27);
        let ctx = AlignmentContext::new(&lin, data.without(0).z()).unwrap();
        let dec = alignment_decomposition(&ctx, &z1, &zm).unwrap();
        assert!((dec.centered - dec.linearized.unwrap()).abs() < 1e-8);

        // Shifted activation: centering changes F and the parts recombine.
        let shifted = rf(300, 20, "h0+h1+h2", 28);
        let ctx = AlignmentContext::new(&shifted, data.without(0).z()).unwrap();
        let dec = alignment_decomposition(&ctx, &z1, &zm).unwrap();
        let denom_ratio = 1.0 - dec.residual_noise_ratio;
        assert!((dec.centered - (dec.unprojected - dec.projected_cross) / denom_ratio).abs() < 1e-9);
        assert!((dec.raw - dec.centered - dec.centering_correction).abs() < 1e-15);
    }
}
