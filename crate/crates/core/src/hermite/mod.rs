//! Hermite expansions of activation functions.
//!
//! Polynomials use the normalized probabilists' convention, `h_0 = 1`,
//! `h_1(ρ) = ρ`, `h_2(ρ) = (ρ² − 1)/√2`, …, which is an orthonormal basis of
//! `L²(ℝ, N(0, 1))`. The Hermite coefficient of `φ` is
//! `μ_l = E_{ρ∼N(0,1)}[φ(ρ) h_l(ρ)]`.
//!
//! Infinite series over `μ_l` are truncated at [`DEFAULT_ORDER`]; every
//! [`HermiteSpectrum`] carries the discarded mass so callers can bound the
//! truncation error with [`series_tail_bound`].

pub mod quadrature;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use quadrature::QuadratureRule;

/// Default truncation order of a [`HermiteSpectrum`].
pub const DEFAULT_ORDER: usize = 40;

/// Coefficients below this magnitude count as zero in the non-linearity checks.
const NEGLIGIBLE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HermiteError {
    #[error("quadrature did not converge: coefficients still moved by {movement:e} at {nodes} nodes")]
    QuadratureNonconvergent { movement: f64, nodes: usize },

    #[error("degenerate spectrum: all coefficients of order >= 1 vanish")]
    DegenerateSpectrum,

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("invalid activation: {0}")]
    InvalidActivation(String),

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An activation function, either as a finite Hermite combination or as a
/// scalar closure.
#[derive(Clone)]
pub struct ActivationSpec {
    name: String,
    kind: ActivationKind,
}

#[derive(Clone)]
enum ActivationKind {
    Hermite(Vec<f64>),
    Callable {
        func: ScalarFn,
        derivative: Option<Box<ActivationSpec>>,
        lipschitz: f64,
        /// Non-smooth at the origin; integrated with the split rule.
        kink_at_zero: bool,
    },
}

impl fmt::Debug for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ActivationKind::Hermite(c) => f
                .debug_struct("ActivationSpec")
                .field("name", &self.name)
                .field("hermite", c)
                .finish(),
            ActivationKind::Callable {
                lipschitz,
                kink_at_zero,
                derivative,
                ..
            } => f
                .debug_struct("ActivationSpec")
                .field("name", &self.name)
                .field("lipschitz", lipschitz)
                .field("kink_at_zero", kink_at_zero)
                .field("has_derivative", &derivative.is_some())
                .finish(),
        }
    }
}

impl PartialEq for ActivationSpec {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (ActivationKind::Hermite(a), ActivationKind::Hermite(b)) => a == b,
            (ActivationKind::Callable { .. }, ActivationKind::Callable { .. }) => self.name == other.name,
            _ => false,
        }
    }
}

impl ActivationSpec {
    /// `Σ_l coefficients[l] · h_l`.
    pub fn hermite(name: impl Into<String>, coefficients: Vec<f64>) -> Result<Self, HermiteError> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(HermiteError::InvalidActivation(
                "Hermite coefficients must be a non-empty list of finite numbers".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            kind: ActivationKind::Hermite(coefficients),
        })
    }

    pub fn callable<F>(name: impl Into<String>, func: F, lipschitz: f64) -> Result<Self, HermiteError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz > 0.0) {
            return Err(HermiteError::InvalidActivation(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        Ok(Self {
            name: name.into(),
            kind: ActivationKind::Callable {
                func: Arc::new(func),
                derivative: None,
                lipschitz,
                kink_at_zero: false,
            },
        })
    }

    /// Declares a derivative for a callable activation (ignored for Hermite
    /// combinations, whose derivative is exact).
    pub fn with_derivative(mut self, derivative: ActivationSpec) -> Self {
        if let ActivationKind::Callable { derivative: d, .. } = &mut self.kind {
            *d = Some(Box::new(derivative));
        }
        self
    }

    /// Marks a callable as non-smooth at the origin.
    pub fn with_kink_at_zero(mut self) -> Self {
        if let ActivationKind::Callable { kink_at_zero, .. } = &mut self.kind {
            *kink_at_zero = true;
        }
        self
    }

    pub fn relu() -> Self {
        Self::callable("relu", |x: f64| x.max(0.0), 1.0)
            .unwrap()
            .with_kink_at_zero()
            .with_derivative(Self::step())
    }

    /// Heaviside step, `1` for `x > 0`.
    pub fn step() -> Self {
        Self::callable("step", |x: f64| if x > 0.0 { 1.0 } else { 0.0 }, 1.0)
            .unwrap()
            .with_kink_at_zero()
    }

    pub fn tanh() -> Self {
        Self::callable("tanh", f64::tanh, 1.0).unwrap().with_derivative(Self::sech2())
    }

    /// `sech²`, the derivative of `tanh`.
    pub fn sech2() -> Self {
        Self::callable(
            "sech2",
            |x: f64| {
                let c = x.cosh();
                1.0 / (c * c)
            },
            // max |d/dx sech²| = 4/(3√3)
            0.77,
        )
        .unwrap()
    }

    pub fn identity() -> Self {
        Self::hermite("identity", vec![0.0, 1.0]).unwrap()
    }

    /// Resolves a named activation.
    ///
    /// Besides `relu`, `step`, `tanh`, `sech2` and `identity`, the Hermite
    /// test activations are available: `phi2 = h1 + h2`, `phi4 = h1 + h4`,
    /// `ntk-phi2 = h1 + h2/√2` (derivative `h0 + h1`) and
    /// `ntk-phi4 = h1 + h4/2` (derivative `h0 + h3`). Any expression such as
    /// `h1+h2` or `0.5*h0+h3` is parsed as a Hermite combination.
    pub fn named(name: &str) -> Result<Self, HermiteError> {
        let trimmed = name.trim();
        let spec = match trimmed {
            "relu" => Self::relu(),
            "step" => Self::step(),
            "tanh" => Self::tanh(),
            "sech2" => Self::sech2(),
            "identity" => Self::identity(),
            "phi2" => Self::hermite("phi2", vec![0.0, 1.0, 1.0])?,
            "phi4" => Self::hermite("phi4", vec![0.0, 1.0, 0.0, 0.0, 1.0])?,
            "ntk-phi2" => Self::hermite("ntk-phi2", vec![0.0, 1.0, std::f64::consts::FRAC_1_SQRT_2])?,
            "ntk-phi4" => Self::hermite("ntk-phi4", vec![0.0, 1.0, 0.0, 0.0, 0.5])?,
            other => Self::hermite(other, parse_hermite_expression(other)?)?,
        };
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Finite Hermite coefficients, if the activation is a Hermite combination.
    pub fn hermite_coefficients(&self) -> Option<&[f64]> {
        match &self.kind {
            ActivationKind::Hermite(c) => Some(c),
            ActivationKind::Callable { .. } => None,
        }
    }

    pub fn lipschitz(&self) -> Option<f64> {
        match &self.kind {
            ActivationKind::Hermite(_) => None,
            ActivationKind::Callable { lipschitz, .. } => Some(*lipschitz),
        }
    }

    pub fn has_derivative(&self) -> bool {
        match &self.kind {
            ActivationKind::Hermite(_) => true,
            ActivationKind::Callable { derivative, .. } => derivative.is_some(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Hermite(c) => hermite_series(c, x),
            ActivationKind::Callable { func, .. } => func(x),
        }
    }

    /// The derivative as an activation. Exact for Hermite combinations
    /// (`h_l' = √l h_{l-1}`); declared for callables.
    pub fn derivative(&self) -> Option<ActivationSpec> {
        match &self.kind {
            ActivationKind::Hermite(c) => {
                let mut d: Vec<f64> = c
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(l, mu)| (l as f64).sqrt() * mu)
                    .collect();
                if d.is_empty() {
                    d.push(0.0);
                }
                Some(ActivationSpec {
                    name: format!("d({})", self.name),
                    kind: ActivationKind::Hermite(d),
                })
            }
            ActivationKind::Callable { derivative, .. } => derivative.as_deref().cloned(),
        }
    }
}

fn parse_hermite_expression(expr: &str) -> Result<Vec<f64>, HermiteError> {
    let unknown = || HermiteError::UnknownActivation(expr.to_string());
    let mut coeffs: Vec<f64> = Vec::new();
    let normalized = expr.replace(' ', "").replace('-', "+-");
    for term in normalized.split('+').filter(|t| !t.is_empty()) {
        let (scale, basis) = match term.split_once('*') {
            Some((c, b)) => (c.parse::<f64>().map_err(|_| unknown())?, b),
            None => match term.strip_prefix('-') {
                Some(b) => (-1.0, b),
                None => (1.0, term),
            },
        };
        let index: usize = basis
            .strip_prefix('h')
            .and_then(|i| i.parse().ok())
            .ok_or_else(unknown)?;
        if coeffs.len() <= index {
            coeffs.resize(index + 1, 0.0);
        }
        coeffs[index] += scale;
    }
    if coeffs.is_empty() {
        return Err(unknown());
    }
    Ok(coeffs)
}

/// Normalized probabilists' Hermite polynomial `h_l(ρ)` via the three-term
/// recurrence `h_{l+1} = (ρ h_l − √l h_{l−1}) / √(l+1)`.
pub fn hermite_polynomial(l: usize, rho: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for j in 0..l {
        let next = (rho * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `h_0(ρ), …, h_order(ρ)`.
pub fn hermite_values(order: usize, rho: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    let mut prev = 0.0;
    let mut cur = 1.0;
    out.push(cur);
    for j in 0..order {
        let next = (rho * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        out.push(cur);
    }
    out
}

fn hermite_series(coeffs: &[f64], rho: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut acc = coeffs[0];
    for (j, c) in coeffs.iter().enumerate().skip(1) {
        let next = (rho * cur - ((j - 1) as f64).sqrt() * prev) / (j as f64).sqrt();
        prev = cur;
        cur = next;
        acc += c * cur;
    }
    acc
}

/// Truncated Hermite coefficients `μ_0..μ_L` of an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteSpectrum {
    coefficients: Vec<f64>,
    second_moment: f64,
    residual_mass: f64,
}

impl HermiteSpectrum {
    /// Builds a spectrum from explicit coefficients, truncated at `order`.
    pub fn from_coefficients(coefficients: &[f64], order: usize) -> Self {
        let second_moment: f64 = coefficients.iter().map(|c| c * c).sum();
        let mut kept = vec![0.0; order + 1];
        for (slot, c) in kept.iter_mut().zip(coefficients) {
            *slot = *c;
        }
        let residual_mass = coefficients.iter().skip(order + 1).map(|c| c * c).sum();
        Self {
            coefficients: kept,
            second_moment,
            residual_mass,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, l: usize) -> f64 {
        self.coefficients.get(l).copied().unwrap_or(0.0)
    }

    /// Truncation order `L`.
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `E[φ(ρ)²] = Σ_{l≥0} μ_l²`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// `Σ_{l>L} μ_l²`, the Parseval mass not captured by the truncation.
    pub fn residual_mass(&self) -> f64 {
        self.residual_mass
    }

    /// Some `μ_l` with `l ≥ 2` is nonzero.
    pub fn is_nonlinear(&self) -> bool {
        self.coefficients.iter().skip(2).any(|c| c.abs() > NEGLIGIBLE) || self.residual_mass > NEGLIGIBLE
    }

    /// Some `μ_l` with `l ≥ 1` is nonzero.
    pub fn has_nonconstant_part(&self) -> bool {
        self.coefficients.iter().skip(1).any(|c| c.abs() > NEGLIGIBLE) || self.residual_mass > NEGLIGIBLE
    }
}

/// Node schedule for callable activations: start at `initial_nodes`, double
/// until the coefficients move by less than `tolerance`, give up past
/// `max_nodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub initial_nodes: usize,
    pub max_nodes: usize,
    pub tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            initial_nodes: 80,
            max_nodes: 640,
            tolerance: 1e-8,
        }
    }
}

/// Hermite coefficients `μ_0..μ_order` with the default quadrature schedule.
pub fn hermite_coefficients(act: &ActivationSpec, order: usize) -> Result<HermiteSpectrum, HermiteError> {
    hermite_coefficients_with(act, order, &QuadratureOptions::default())
}

pub fn hermite_coefficients_with(
    act: &ActivationSpec,
    order: usize,
    options: &QuadratureOptions,
) -> Result<HermiteSpectrum, HermiteError> {
    let (func, kink) = match &act.kind {
        ActivationKind::Hermite(c) => return Ok(HermiteSpectrum::from_coefficients(c, order)),
        ActivationKind::Callable {
            func, kink_at_zero, ..
        } => (func, *kink_at_zero),
    };
    let integrate = |nodes: usize| -> (Vec<f64>, f64) {
        let rule = if kink {
            QuadratureRule::gaussian_split_at_zero(nodes)
        } else {
            QuadratureRule::gauss_hermite(nodes)
        };
        let mut mu = vec![0.0; order + 1];
        let mut second = 0.0;
        for (x, w) in rule.nodes().iter().zip(rule.weights()) {
            let fx = func(*x);
            second += w * fx * fx;
            for (m, h) in mu.iter_mut().zip(hermite_values(order, *x)) {
                *m += w * fx * h;
            }
        }
        (mu, second)
    };

    let mut nodes = options.initial_nodes.max(1);
    let (mut mu, mut second) = integrate(nodes);
    let mut movement = f64::INFINITY;
    while nodes * 2 <= options.max_nodes {
        nodes *= 2;
        let (next_mu, next_second) = integrate(nodes);
        movement = mu
            .iter()
            .zip(&next_mu)
            .map(|(a, b)| (a - b).abs())
            .fold((second - next_second).abs(), f64::max);
        mu = next_mu;
        second = next_second;
        if movement < options.tolerance {
            let captured: f64 = mu.iter().map(|c| c * c).sum();
            return Ok(HermiteSpectrum {
                coefficients: mu,
                second_moment: second,
                residual_mass: (second - captured).max(0.0),
            });
        }
    }
    Err(HermiteError::QuadratureNonconvergent { movement, nodes })
}

fn check_alpha(alpha: f64) -> Result<(), HermiteError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HermiteError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Lower bound on the RF alignment constant,
/// `Σ_{l≥2} μ_l² α^l / Σ_{l≥1} μ_l²`.
pub fn gamma_rf_lower_bound(spec: &HermiteSpectrum, alpha: f64) -> Result<f64, HermiteError> {
    check_alpha(alpha)?;
    let denom: f64 = spec.coefficients.iter().skip(1).map(|c| c * c).sum();
    if !(denom > 0.0) {
        return Err(HermiteError::DegenerateSpectrum);
    }
    let numer: f64 = spec
        .coefficients
        .iter()
        .enumerate()
        .skip(2)
        .map(|(l, c)| c * c * alpha.powi(l as i32))
        .sum();
    Ok(numer / denom)
}

/// NTK alignment constant from the spectrum of `φ'`,
/// `α · Σ_{l≥1} μ'_l² α^l / Σ_{l≥1} μ'_l²`.
pub fn gamma_ntk_closed_form(derivative_spec: &HermiteSpectrum, alpha: f64) -> Result<f64, HermiteError> {
    check_alpha(alpha)?;
    let denom: f64 = derivative_spec.coefficients.iter().skip(1).map(|c| c * c).sum();
    if !(denom > 0.0) {
        return Err(HermiteError::DegenerateSpectrum);
    }
    let numer: f64 = derivative_spec
        .coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(l, c)| c * c * alpha.powi(l as i32))
        .sum();
    Ok(alpha * numer / denom)
}

/// Upper bound on the discarded tail `Σ_{l>L} μ_l² α^l`, namely
/// `α^{L+1} · Σ_{l>L} μ_l²`.
pub fn series_tail_bound(spec: &HermiteSpectrum, alpha: f64) -> f64 {
    if alpha <= 0.0 || spec.residual_mass == 0.0 {
        return 0.0;
    }
    alpha.powi(spec.order() as i32 + 1) * spec.residual_mass
}
