//! Random-feature and neural-tangent feature maps.
//!
//! * RF: `φ(z) = σ(V z)` with `V ∈ ℝ^{k×d}`, `V_ij ∼ N(0, 1/d)`.
//! * NTK: `φ(z) = z ⊗ σ'(W₀ z)`, the gradient of `Σ_i σ(W_i· z)` with respect to
//!   `vec(W)` at `W₀`, `(W₀)_ij ∼ N(0, 1/d)`. Second-layer weights are fixed to 1.
//!
//! NTK features live in `ℝ^{k·d}` and are kept in factored form: an
//! [`Embedding`] stores the inputs and `σ'(W₀ z)` separately and kernels are
//! evaluated as `(z·z')(σ'(W₀z)·σ'(W₀z'))`.
//!
//! Weights are drawn from a `ChaCha20Rng` seeded with the map seed via
//! `seed_from_u64`, filled row-major with `StandardNormal / √d`, so a seed
//! reproduces the same matrix bit for bit on every platform.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::hermite::{hermite_coefficients, ActivationSpec, HermiteSpectrum, DEFAULT_ORDER};
use crate::linops::{symmetrize, DenseMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Ntk,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Rf => "rf",
            ModelKind::Ntk => "ntk",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rf" => Ok(ModelKind::Rf),
            "ntk" => Ok(ModelKind::Ntk),
            other => Err(Error::config(format!("unknown model kind `{other}` (expected rf or ntk)"))),
        }
    }
}

/// `k × d` matrix with i.i.d. `N(0, 1/d)` entries drawn from `seed`.
pub fn sample_gaussian_weights(k: usize, d: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let mut data = Vec::with_capacity(k * d);
    for _ in 0..k * d {
        let g: f64 = StandardNormal.sample(&mut rng);
        data.push(g * scale);
    }
    DenseMatrix::from_row_slice(k, d, &data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfMap {
    weights: DenseMatrix,
    activation: ActivationSpec,
    spectrum: HermiteSpectrum,
    seed: Option<u64>,
}

impl RfMap {
    /// Wraps an explicit weight matrix `V` (`k × d`).
    pub fn from_weights(weights: DenseMatrix, activation: ActivationSpec) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::config("RF weights must be non-empty"));
        }
        let spectrum = hermite_coefficients(&activation, DEFAULT_ORDER)?;
        Ok(Self {
            weights,
            activation,
            spectrum,
            seed: None,
        })
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn activation(&self) -> &ActivationSpec {
        &self.activation
    }

    /// Hermite spectrum of the activation.
    pub fn spectrum(&self) -> &HermiteSpectrum {
        &self.spectrum
    }
}

/// Samples an RF map with `V_ij ∼ N(0, 1/d)`.
pub fn sample_rf_map(k: usize, d: usize, activation: ActivationSpec, seed: u64) -> Result<RfMap> {
    if k == 0 || d == 0 {
        return Err(Error::config("RF map needs k, d >= 1"));
    }
    let mut map = RfMap::from_weights(sample_gaussian_weights(k, d, seed), activation)?;
    map.seed = Some(seed);
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtkMap {
    weights: DenseMatrix,
    derivative: ActivationSpec,
    spectrum: HermiteSpectrum,
    seed: Option<u64>,
}

impl NtkMap {
    /// Wraps an explicit first-layer initialization `W₀` (`k × d`) and the
    /// activation derivative `σ'`.
    pub fn from_weights(weights: DenseMatrix, derivative: ActivationSpec) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::config("NTK weights must be non-empty"));
        }
        let spectrum = hermite_coefficients(&derivative, DEFAULT_ORDER)?;
        Ok(Self {
            weights,
            derivative,
            spectrum,
            seed: None,
        })
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn derivative(&self) -> &ActivationSpec {
        &self.derivative
    }

    /// Hermite spectrum of `σ'`.
    pub fn spectrum(&self) -> &HermiteSpectrum {
        &self.spectrum
    }

    /// `θ₀ = vec(W₀)`, column-major, matching the `z ⊗ σ'(W₀z)` layout.
    pub fn initial_parameters(&self) -> DVector<f64> {
        let (k, d) = self.weights.shape();
        DVector::from_fn(k * d, |idx, _| self.weights[(idx % k, idx / k)])
    }
}

/// Samples an NTK map from the activation derivative `σ'`.
pub fn sample_ntk_map(k: usize, d: usize, derivative: ActivationSpec, seed: u64) -> Result<NtkMap> {
    if k == 0 || d == 0 {
        return Err(Error::config("NTK map needs k, d >= 1"));
    }
    let mut map = NtkMap::from_weights(sample_gaussian_weights(k, d, seed), derivative)?;
    map.seed = Some(seed);
    Ok(map)
}

/// Samples an NTK map for activation `σ`, using its derivative.
pub fn sample_ntk_map_for(k: usize, d: usize, activation: &ActivationSpec, seed: u64) -> Result<NtkMap> {
    let derivative = activation.derivative().ok_or_else(|| {
        Error::config(format!("activation `{}` has no declared derivative", activation.name()))
    })?;
    sample_ntk_map(k, d, derivative, seed)
}

/// Samples a map of the given kind for activation `σ`; NTK maps use `σ'`.
pub fn sample_map(kind: ModelKind, k: usize, d: usize, activation: &ActivationSpec, seed: u64) -> Result<FeatureMapHandle> {
    Ok(match kind {
        ModelKind::Rf => FeatureMap::Rf(sample_rf_map(k, d, activation.clone(), seed)?),
        ModelKind::Ntk => FeatureMap::Ntk(sample_ntk_map_for(k, d, activation, seed)?),
    }
    .into_handle())
}

/// Rejects activations that make the alignment constant degenerate: RF needs
/// some `μ_l ≠ 0` with `l ≥ 2`, NTK needs some `μ'_l ≠ 0` with `l ≥ 1`.
pub fn check_activation(kind: ModelKind, activation: &ActivationSpec) -> Result<()> {
    match kind {
        ModelKind::Rf => {
            let spec = hermite_coefficients(activation, DEFAULT_ORDER)?;
            if !spec.is_nonlinear() {
                return Err(Error::config(format!(
                    "RF activation `{}` is linear in the Hermite basis",
                    activation.name()
                )));
            }
        }
        ModelKind::Ntk => {
            let derivative = activation.derivative().ok_or_else(|| {
                Error::config(format!("activation `{}` has no declared derivative", activation.name()))
            })?;
            let spec = hermite_coefficients(&derivative, DEFAULT_ORDER)?;
            if !spec.has_nonconstant_part() {
                return Err(Error::config(format!(
                    "NTK activation `{}` has a constant derivative",
                    activation.name()
                )));
            }
        }
    }
    Ok(())
}

/// A feature vector; NTK features may stay in factored Kronecker form.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVector {
    Dense(DVector<f64>),
    /// `input ⊗ deriv`, entry `j·k + i` equal to `input[j] · deriv[i]`.
    Kronecker { input: DVector<f64>, deriv: DVector<f64> },
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        match self {
            FeatureVector::Dense(v) => v.len(),
            FeatureVector::Kronecker { input, deriv } => input.len() * deriv.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn materialize(&self) -> DVector<f64> {
        match self {
            FeatureVector::Dense(v) => v.clone(),
            FeatureVector::Kronecker { input, deriv } => {
                let k = deriv.len();
                DVector::from_fn(input.len() * k, |idx, _| input[idx / k] * deriv[idx % k])
            }
        }
    }

    pub fn norm_squared(&self) -> f64 {
        match self {
            FeatureVector::Dense(v) => v.norm_squared(),
            FeatureVector::Kronecker { input, deriv } => input.norm_squared() * deriv.norm_squared(),
        }
    }
}

/// Kernel-space representation of a batch of samples under a feature map.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    /// Rows are the feature vectors.
    Rf { features: DenseMatrix },
    /// Rows of `inputs` are the samples, rows of `derivs` are `σ'(W₀ z)`;
    /// `init` holds `f(z, vec(W₀)) = σ'(W₀z)·(W₀z)`.
    Ntk {
        inputs: DenseMatrix,
        derivs: DenseMatrix,
        init: DVector<f64>,
    },
}

impl Embedding {
    pub fn len(&self) -> usize {
        match self {
            Embedding::Rf { features } => features.nrows(),
            Embedding::Ntk { inputs, .. } => inputs.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn without_row(&self, i: usize) -> Embedding {
        match self {
            Embedding::Rf { features } => Embedding::Rf {
                features: features.clone().remove_row(i),
            },
            Embedding::Ntk { inputs, derivs, init } => Embedding::Ntk {
                inputs: inputs.clone().remove_row(i),
                derivs: derivs.clone().remove_row(i),
                init: init.clone().remove_row(i),
            },
        }
    }

    pub fn row(&self, i: usize) -> Embedding {
        self.select(&[i])
    }

    pub fn select(&self, rows: &[usize]) -> Embedding {
        match self {
            Embedding::Rf { features } => Embedding::Rf {
                features: features.select_rows(rows),
            },
            Embedding::Ntk { inputs, derivs, init } => Embedding::Ntk {
                inputs: inputs.select_rows(rows),
                derivs: derivs.select_rows(rows),
                init: init.select_rows(rows),
            },
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &Embedding) -> Embedding {
        fn vstack(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
            let mut out = DenseMatrix::zeros(a.nrows() + b.nrows(), a.ncols().max(b.ncols()));
            out.view_mut((0, 0), a.shape()).copy_from(a);
            out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
            out
        }
        match (self, other) {
            (Embedding::Rf { features: a }, Embedding::Rf { features: b }) => Embedding::Rf { features: vstack(a, b) },
            (
                Embedding::Ntk { inputs: za, derivs: da, init: ia },
                Embedding::Ntk { inputs: zb, derivs: db, init: ib },
            ) => {
                let mut init = DVector::zeros(ia.len() + ib.len());
                init.rows_mut(0, ia.len()).copy_from(ia);
                init.rows_mut(ia.len(), ib.len()).copy_from(ib);
                Embedding::Ntk {
                    inputs: vstack(za, zb),
                    derivs: vstack(da, db),
                    init,
                }
            }
            _ => panic!("cannot stack RF and NTK embeddings"),
        }
    }

    pub fn feature_vector(&self, i: usize) -> FeatureVector {
        match self {
            Embedding::Rf { features } => FeatureVector::Dense(features.row(i).transpose()),
            Embedding::Ntk { inputs, derivs, .. } => FeatureVector::Kronecker {
                input: inputs.row(i).transpose(),
                deriv: derivs.row(i).transpose(),
            },
        }
    }

    /// Feature matrix `Φ` with one materialized feature vector per row.
    pub fn materialize(&self) -> DenseMatrix {
        match self {
            Embedding::Rf { features } => features.clone(),
            Embedding::Ntk { inputs, derivs, .. } => {
                let (n, d) = inputs.shape();
                let k = derivs.ncols();
                DenseMatrix::from_fn(n, d * k, |r, idx| inputs[(r, idx / k)] * derivs[(r, idx % k)])
            }
        }
    }

    /// Network output at initialization, `f(z, vec(W₀))`; `None` for RF.
    pub fn network_init(&self) -> Option<&DVector<f64>> {
        match self {
            Embedding::Rf { .. } => None,
            Embedding::Ntk { init, .. } => Some(init),
        }
    }

    /// Squared feature norms `‖φ(z_i)‖²`.
    pub fn self_kernel(&self) -> DVector<f64> {
        match self {
            Embedding::Rf { features } => {
                DVector::from_fn(features.nrows(), |i, _| features.row(i).norm_squared())
            }
            Embedding::Ntk { inputs, derivs, .. } => DVector::from_fn(inputs.nrows(), |i, _| {
                inputs.row(i).norm_squared() * derivs.row(i).norm_squared()
            }),
        }
    }
}

/// Cross kernel `K[i, j] = φ(a_i)·φ(b_j)`.
pub fn cross_kernel(a: &Embedding, b: &Embedding) -> DenseMatrix {
    match (a, b) {
        (Embedding::Rf { features: fa }, Embedding::Rf { features: fb }) => fa * fb.transpose(),
        (
            Embedding::Ntk {
                inputs: za,
                derivs: da,
                ..
            },
            Embedding::Ntk {
                inputs: zb,
                derivs: db,
                ..
            },
        ) => {
            let zz = za * zb.transpose();
            let dd = da * db.transpose();
            zz.component_mul(&dd)
        }
        _ => panic!("cross_kernel between RF and NTK embeddings"),
    }
}

/// Symmetric kernel `K = Φ Φᵀ` of one embedding.
pub fn kernel_gram(a: &Embedding) -> DenseMatrix {
    let mut k = cross_kernel(a, a);
    symmetrize(&mut k);
    k
}

/// A sampled RF or NTK feature map.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Rf(RfMap),
    Ntk(NtkMap),
}

/// Shared, immutable feature map.
pub type FeatureMapHandle = Arc<FeatureMap>;

impl From<RfMap> for FeatureMap {
    fn from(m: RfMap) -> Self {
        FeatureMap::Rf(m)
    }
}

impl From<NtkMap> for FeatureMap {
    fn from(m: NtkMap) -> Self {
        FeatureMap::Ntk(m)
    }
}

impl FeatureMap {
    pub fn into_handle(self) -> FeatureMapHandle {
        Arc::new(self)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            FeatureMap::Rf(_) => ModelKind::Rf,
            FeatureMap::Ntk(_) => ModelKind::Ntk,
        }
    }

    fn weights(&self) -> &DenseMatrix {
        match self {
            FeatureMap::Rf(m) => &m.weights,
            FeatureMap::Ntk(m) => &m.weights,
        }
    }

    /// Input dimension `d`.
    pub fn input_dim(&self) -> usize {
        self.weights().ncols()
    }

    /// Number of hidden units `k`.
    pub fn width(&self) -> usize {
        self.weights().nrows()
    }

    /// Feature dimension `p`: `k` for RF, `k·d` for NTK.
    pub fn feature_dim(&self) -> usize {
        match self {
            FeatureMap::Rf(_) => self.width(),
            FeatureMap::Ntk(_) => self.width() * self.input_dim(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            FeatureMap::Rf(m) => m.seed,
            FeatureMap::Ntk(m) => m.seed,
        }
    }

    /// The spectrum relevant to the map: `σ` for RF, `σ'` for NTK.
    pub fn spectrum(&self) -> &HermiteSpectrum {
        match self {
            FeatureMap::Rf(m) => &m.spectrum,
            FeatureMap::Ntk(m) => &m.spectrum,
        }
    }

    /// Name of the scalar function applied elementwise (`σ` or `σ'`).
    pub fn activation_name(&self) -> &str {
        match self {
            FeatureMap::Rf(m) => m.activation.name(),
            FeatureMap::Ntk(m) => m.derivative.name(),
        }
    }

    /// Scale of `λ_min(K)`: `k` for RF, `k·d` for NTK.
    pub fn kernel_scale(&self) -> f64 {
        self.feature_dim() as f64
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Embeds the rows of `z` (`n × d`).
    pub fn embed(&self, z: &DenseMatrix) -> Result<Embedding> {
        self.check_dim(z.ncols())?;
        let pre = z * self.weights().transpose();
        Ok(match self {
            FeatureMap::Rf(m) => Embedding::Rf {
                features: pre.map(|x| m.activation.eval(x)),
            },
            FeatureMap::Ntk(m) => {
                let derivs = pre.map(|x| m.derivative.eval(x));
                let init = DVector::from_fn(z.nrows(), |i, _| pre.row(i).dot(&derivs.row(i)));
                Embedding::Ntk {
                    inputs: z.clone(),
                    derivs,
                    init,
                }
            }
        })
    }

    /// Embeds the rows of `z` with centered features: `σ(Vz) − μ₀` for RF,
    /// `z ⊗ (σ'(W₀z) − μ'₀)` for NTK.
    pub fn embed_centered(&self, z: &DenseMatrix) -> Result<Embedding> {
        let mu0 = self.spectrum().coefficient(0);
        Ok(match self.embed(z)? {
            Embedding::Rf { features } => Embedding::Rf {
                features: features.add_scalar(-mu0),
            },
            Embedding::Ntk { inputs, derivs, init } => Embedding::Ntk {
                inputs,
                derivs: derivs.add_scalar(-mu0),
                init,
            },
        })
    }

    pub fn embed_one(&self, z: &DVector<f64>) -> Result<Embedding> {
        self.embed(&DenseMatrix::from_row_slice(1, z.len(), z.as_slice()))
    }

    /// `φ(z)`; NTK features are returned in factored form.
    pub fn features(&self, z: &DVector<f64>) -> Result<FeatureVector> {
        Ok(self.embed_one(z)?.feature_vector(0))
    }

    /// `φ̃(z) = φ(z) − E_W[φ(z)]`.
    pub fn centered_features(&self, z: &DVector<f64>) -> Result<FeatureVector> {
        let one = DenseMatrix::from_row_slice(1, z.len(), z.as_slice());
        Ok(self.embed_centered(&one)?.feature_vector(0))
    }

    /// `φ(z)·φ(z')` without materializing NTK features.
    pub fn kernel_eval(&self, z: &DVector<f64>, z2: &DVector<f64>) -> Result<f64> {
        let a = self.embed_one(z)?;
        let b = self.embed_one(z2)?;
        Ok(cross_kernel(&a, &b)[(0, 0)])
    }

    /// `θ₀ = vec(W₀)` for NTK maps.
    pub fn network_parameters(&self) -> Option<DVector<f64>> {
        match self {
            FeatureMap::Rf(_) => None,
            FeatureMap::Ntk(m) => Some(m.initial_parameters()),
        }
    }
}

/// Convenience: `φ_RF(z)` materialized.
pub fn rf_features(map: &RfMap, z: &DVector<f64>) -> Result<DVector<f64>> {
    FeatureMap::Rf(map.clone()).features(z).map(|f| f.materialize())
}

/// Convenience: `φ_NTK(z) = z ⊗ σ'(W₀ z)` in factored form.
pub fn ntk_features(map: &NtkMap, z: &DVector<f64>) -> Result<FeatureVector> {
    FeatureMap::Ntk(map.clone()).features(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vector(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn phi2() -> ActivationSpec {
        ActivationSpec::named("phi2").unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_rf_map(7, 5, phi2(), 42).unwrap();
        let b = sample_rf_map(7, 5, phi2(), 42).unwrap();
        assert_eq!(a.weights(), b.weights());
        let c = sample_rf_map(7, 5, phi2(), 43).unwrap();
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn sampled_entries_have_the_right_moments() {
        let (k, d) = (100, 100);
        let v = sample_gaussian_weights(k, d, 3);
        let n = (k * d) as f64;
        let mean = v.sum() / n;
        // std of the mean is 1/√(k d d).
        assert!(mean.abs() < 4.0 / (n * d as f64).sqrt());
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!((var * d as f64 - 1.0).abs() < 0.2);

        let draws: Vec<f64> = (0..10_000).map(|s| sample_gaussian_weights(1, 1, s)[(0, 0)]).collect();
        let var = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn rf_feature_examples() {
        let id = sample_rf_map(6, 4, ActivationSpec::identity(), 1).unwrap();
        let z = random_vector(4, 2);
        let f = rf_features(&id, &z).unwrap();
        assert!((f - id.weights() * &z).amax() < 1e-15);

        let relu = sample_rf_map(6, 4, ActivationSpec::relu(), 1).unwrap();
        assert_eq!(rf_features(&relu, &DVector::zeros(4)).unwrap(), DVector::zeros(6));

        let m = sample_rf_map(9, 5, phi2(), 3).unwrap();
        let f = rf_features(&m, &z.clone().resize_vertically(5, 0.3)).unwrap();
        let zz = z.resize_vertically(5, 0.3);
        for i in 0..9 {
            let mut pre = 0.0;
            for j in 0..5 {
                pre += m.weights()[(i, j)] * zz[j];
            }
            let expected = pre + (pre * pre - 1.0) / 2f64.sqrt();
            assert_eq!(f[i], phi2().eval(pre));
            assert!((f[i] - expected).abs() < 1e-14);
        }
        assert!(matches!(
            rf_features(&m, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ntk_feature_examples() {
        let m = sample_ntk_map(2, 3, ActivationSpec::named("h0+h1").unwrap(), 5).unwrap();
        let z = random_vector(3, 6);
        let fv = ntk_features(&m, &z).unwrap();
        let flat = fv.materialize();
        let a = m.weights() * &z;
        let a = a.map(|x| 1.0 + x);
        // Brute-force Kronecker product.
        let mut oracle = Vec::new();
        for j in 0..3 {
            for i in 0..2 {
                oracle.push(z[j] * a[i]);
            }
        }
        assert_eq!(flat.as_slice(), oracle.as_slice());
        assert!((fv.norm_squared() - z.norm_squared() * a.norm_squared()).abs() < 1e-10 * fv.norm_squared());

        let m1 = sample_ntk_map(1, 4, ActivationSpec::named("h0+h1").unwrap(), 9).unwrap();
        let mut e1 = DVector::zeros(4);
        e1[0] = 1.0;
        let flat = ntk_features(&m1, &e1).unwrap().materialize();
        assert_eq!(flat[0], 1.0 + m1.weights()[(0, 0)]);
        assert!(flat.iter().skip(1).all(|x| *x == 0.0));
    }

    #[test]
    fn kernel_matches_materialized_features() {
        let maps: Vec<FeatureMap> = vec![
            sample_rf_map(3, 4, phi2(), 10).unwrap().into(),
            sample_ntk_map(3, 4, ActivationSpec::named("h0+h1+h3").unwrap(), 11).unwrap().into(),
            sample_ntk_map(5, 4, ActivationSpec::step(), 12).unwrap().into(),
        ];
        for map in &maps {
            for t in 0..50 {
                let z = random_vector(4, 100 + t);
                let z2 = random_vector(4, 200 + t);
                let k = map.kernel_eval(&z, &z2).unwrap();
                let explicit = map.features(&z).unwrap().materialize().dot(&map.features(&z2).unwrap().materialize());
                assert!((k - explicit).abs() <= 1e-12 * (1.0 + explicit.abs()));
                let kzz = map.kernel_eval(&z, &z).unwrap();
                assert!((kzz - map.features(&z).unwrap().norm_squared()).abs() <= 1e-12 * kzz);
            }
        }
        let ntk = &maps[1];
        let z = DVector::from_row_slice(&[1.0, 0.0, 0.0, 0.0]);
        let z2 = DVector::from_row_slice(&[0.0, 2.0, -1.0, 0.0]);
        assert_eq!(ntk.kernel_eval(&z, &z2).unwrap(), 0.0);
    }

    #[test]
    fn gram_assembly_matches_materialized() {
        let maps: Vec<FeatureMap> = vec![
            sample_rf_map(300, 20, phi2(), 20).unwrap().into(),
            sample_ntk_map(50, 20, ActivationSpec::named("h0+h1").unwrap(), 21).unwrap().into(),
        ];
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let z = DenseMatrix::from_fn(15, 20, |_, _| StandardNormal.sample(&mut rng));
        for map in &maps {
            let emb = map.embed(&z).unwrap();
            let k = kernel_gram(&emb);
            let phi = emb.materialize();
            assert_eq!(phi.ncols(), map.feature_dim());
            let explicit = &phi * phi.transpose();
            assert!((&k - &explicit).norm() <= 1e-9 * explicit.norm());
        }
    }

    #[test]
    fn centered_feature_examples() {
        let tanh = sample_rf_map(8, 5, ActivationSpec::tanh(), 30).unwrap();
        let map = FeatureMap::Rf(tanh);
        let z = random_vector(5, 31);
        let raw = map.features(&z).unwrap().materialize();
        let cen = map.centered_features(&z).unwrap().materialize();
        assert!((raw - cen).amax() < 1e-12);

        let constant = FeatureMap::Rf(sample_rf_map(8, 5, ActivationSpec::named("3*h0").unwrap(), 32).unwrap());
        assert_eq!(constant.centered_features(&z).unwrap().materialize(), DVector::zeros(8));

        let h01 = sample_rf_map(8, 5, ActivationSpec::named("h0+h1").unwrap(), 33).unwrap();
        let vz = h01.weights() * &z;
        let cen = FeatureMap::Rf(h01).centered_features(&z).unwrap().materialize();
        assert!((cen - vz).amax() < 1e-14);

        let ntk = FeatureMap::Ntk(sample_ntk_map(4, 5, ActivationSpec::named("h0+h1").unwrap(), 34).unwrap());
        if let FeatureVector::Kronecker { deriv, .. } = ntk.centered_features(&z).unwrap() {
            let FeatureMap::Ntk(m) = &ntk else { unreachable!() };
            assert!((deriv - m.weights() * &z).amax() < 1e-14);
        } else {
            panic!("NTK features must stay factored");
        }
    }

    #[test]
    fn ntk_init_output_matches_parameter_inner_product() {
        let m = sample_ntk_map(4, 6, ActivationSpec::named("h0+h1+h2").unwrap(), 40).unwrap();
        let map = FeatureMap::Ntk(m.clone());
        let z = random_vector(6, 41);
        let emb = map.embed_one(&z).unwrap();
        let theta0 = m.initial_parameters();
        let direct = emb.feature_vector(0).materialize().dot(&theta0);
        assert!((emb.network_init().unwrap()[0] - direct).abs() < 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn normalized_ntk_kernel_expectation() {
        // E_W[K(z, z')] = (z·z') · k · (1 + z·z'/d) for σ' = h0 + h1, ‖z‖ = ‖z'‖ = √d.
        let (k, d) = (8, 16);
        let mut z = random_vector(d, 50);
        z *= (d as f64).sqrt() / z.norm();
        let mut z2 = &z * 0.6 + random_vector(d, 51) * 0.8;
        z2 *= (d as f64).sqrt() / z2.norm();
        let zz = z.dot(&z2);
        let expected = zz * k as f64 * (1.0 + zz / d as f64);
        let vals: Vec<f64> = (0..200)
            .map(|s| {
                let m = FeatureMap::Ntk(sample_ntk_map(k, d, ActivationSpec::named("h0+h1").unwrap(), 1000 + s).unwrap());
                m.kernel_eval(&z, &z2).unwrap()
            })
            .collect();
        let mean = crate::stats::mean(&vals);
        let se = crate::stats::std_error(&vals);
        assert!((mean - expected).abs() < 5.0 * se, "{mean} vs {expected} (se {se})");
    }
}
