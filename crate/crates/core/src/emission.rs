//! Emission models: scalar and full-covariance Gaussians and their mixtures.
//!
//! Everything is evaluated in the log domain. The per-component energy is the
//! unitary potential `(z-mu)^2 / (2 sigma^2) + ln sigma` (scalar) or
//! `0.5 (z-mu)^T Sigma^-1 (z-mu) + 0.5 ln |Sigma|` (vector), i.e. the negative
//! log density without the `(d/2) ln 2pi` constant.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// `0.5 * ln(2 pi)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Numerically stable `ln(sum(exp(x)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for x in values {
        if x == f64::NEG_INFINITY {
            continue;
        }
        if x > max {
            sum = sum * (max - x).exp() + 1.0;
            max = x;
        } else {
            sum += (x - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        max + sum.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1D {
    mu: f64,
    sigma: f64,
}

impl Gaussian1D {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "gaussian needs finite mean and positive sigma, got mu={mu} sigma={sigma}"
            )));
        }
        Ok(Gaussian1D { mu, sigma })
    }

    pub fn from_variance(mu: f64, variance: f64) -> Result<Self> {
        Self::new(mu, variance.sqrt())
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn pdf(&self, z: f64) -> f64 {
        let r = z - self.mu;
        (-(r * r) / (2.0 * self.variance())).exp() / (2.0 * PI * self.variance()).sqrt()
    }

    #[inline]
    pub fn energy(&self, z: f64) -> f64 {
        let r = (z - self.mu) / self.sigma;
        0.5 * r * r + self.sigma.ln()
    }
}

/// Density of `z` under a scalar Gaussian.
pub fn gaussian_pdf(z: f64, p: &Gaussian1D) -> f64 {
    p.pdf(z)
}

/// Full-covariance Gaussian with a cached Cholesky factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct MvGaussian {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    // row-major inverse of the lower Cholesky factor
    chol_inv: Vec<f64>,
    half_log_det: f64,
}

impl MvGaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite gaussian parameters".into()));
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for r in 0..d {
            for c in 0..r {
                if (cov[(r, c)] - cov[(c, r)]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidModel("covariance is not symmetric".into()));
                }
            }
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::SingularCovariance { label: None })?;
        let l = chol.l();
        let half_log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
        let inv = l
            .try_inverse()
            .ok_or(Error::SingularCovariance { label: None })?;
        let mut chol_inv = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..=r {
                chol_inv[r * d + c] = inv[(r, c)];
            }
        }
        if !half_log_det.is_finite() || chol_inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularCovariance { label: None });
        }
        Ok(MvGaussian {
            mean,
            cov,
            chol_inv,
            half_log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `(z - mu)^T Sigma^-1 (z - mu)`.
    #[inline]
    pub fn mahalanobis_sq(&self, z: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut q = 0.0;
        for r in 0..d {
            let row = &self.chol_inv[r * d..r * d + r + 1];
            let u: f64 = row
                .iter()
                .zip(z.iter().zip(&self.mean))
                .map(|(l, (zi, mi))| l * (zi - mi))
                .sum();
            q += u * u;
        }
        q
    }

    #[inline]
    pub fn energy(&self, z: &[f64]) -> f64 {
        0.5 * self.mahalanobis_sq(z) + self.half_log_det
    }

    pub fn pdf(&self, z: &[f64]) -> f64 {
        (-self.energy(z) - self.dim() as f64 * HALF_LN_2PI).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Scalar(Gaussian1D),
    Multi(MvGaussian),
}

impl Component {
    pub fn dim(&self) -> usize {
        match self {
            Component::Scalar(_) => 1,
            Component::Multi(g) => g.dim(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Component::Scalar(g) => vec![g.mu()],
            Component::Multi(g) => g.mean().to_vec(),
        }
    }

    /// Covariance as a `d x d` matrix (`1 x 1` for scalars).
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Component::Scalar(g) => DMatrix::from_element(1, 1, g.variance()),
            Component::Multi(g) => g.cov().clone(),
        }
    }

    /// Unitary energy; caller guarantees `z.len() == self.dim()`.
    #[inline]
    pub fn energy(&self, z: &[f64]) -> f64 {
        match self {
            Component::Scalar(g) => g.energy(z[0]),
            Component::Multi(g) => g.energy(z),
        }
    }

    #[inline]
    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        -self.energy(z) - self.dim() as f64 * HALF_LN_2PI
    }

    /// Builds a scalar component for `d == 1` and a full-covariance one otherwise.
    pub fn from_moments(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        if mean.len() == 1 {
            let var = cov[(0, 0)];
            if var <= 0.0 || !var.is_finite() {
                return Err(Error::SingularCovariance { label: None });
            }
            Ok(Component::Scalar(Gaussian1D::from_variance(mean[0], var)?))
        } else {
            Ok(Component::Multi(MvGaussian::new(mean.to_vec(), cov.clone())?))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedComponent {
    pub weight: f64,
    pub component: Component,
}

/// Mixture parameters of one label: `g` weighted Gaussians of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelModel {
    components: Vec<WeightedComponent>,
}

impl LabelModel {
    pub fn new(components: Vec<WeightedComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidModel("mixture needs at least one component".into()))?;
        let d = first.component.dim();
        let mut total = 0.0;
        for wc in &components {
            if wc.component.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: wc.component.dim(),
                });
            }
            if !(0.0..=1.0).contains(&wc.weight) {
                return Err(Error::InvalidModel(format!(
                    "mixture weight {} outside [0, 1]",
                    wc.weight
                )));
            }
            total += wc.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("mixture weights sum to {total}")));
        }
        Ok(LabelModel { components })
    }

    pub fn single(component: Component) -> Self {
        LabelModel {
            components: vec![WeightedComponent {
                weight: 1.0,
                component,
            }],
        }
    }

    pub fn components(&self) -> &[WeightedComponent] {
        &self.components
    }

    pub fn g(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].component.dim()
    }

    /// Weighted mean of the component means.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for wc in &self.components {
            for (o, m) in out.iter_mut().zip(wc.component.mean()) {
                *o += wc.weight * m;
            }
        }
        out
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        Ok(())
    }

    pub fn log_pdf(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.log_pdf_unchecked(z))
    }

    pub(crate) fn log_pdf_unchecked(&self, z: &[f64]) -> f64 {
        log_sum_exp(
            self.components
                .iter()
                .map(|wc| wc.weight.ln() + wc.component.log_pdf(z)),
        )
    }

    pub fn pdf(&self, z: &[f64]) -> Result<f64> {
        Ok(self.log_pdf(z)?.exp())
    }

    pub fn likelihood_energy(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.energy_unchecked(z))
    }

    /// Unitary energy of `z`: the closed-form single-Gaussian energy when `g == 1`,
    /// `-ln G_mix(z)` otherwise.
    #[inline]
    pub(crate) fn energy_unchecked(&self, z: &[f64]) -> f64 {
        if let [only] = self.components.as_slice() {
            only.component.energy(z)
        } else {
            -self.log_pdf_unchecked(z)
        }
    }
}

/// Mixture density at `z`.
pub fn gmm_pdf(z: &[f64], m: &LabelModel) -> Result<f64> {
    m.pdf(z)
}

pub fn likelihood_energy(z: &[f64], m: &LabelModel) -> Result<f64> {
    m.likelihood_energy(z)
}

/// Parameters for all labels, indexed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    models: Vec<LabelModel>,
}

impl ModelSet {
    pub fn new(models: Vec<LabelModel>) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least two labels, got {}",
                models.len()
            )));
        }
        let (d, g) = (models[0].dim(), models[0].g());
        for m in &models {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.dim(),
                });
            }
            if m.g() != g {
                return Err(Error::InvalidModel(format!(
                    "labels disagree on component count ({} vs {g})",
                    m.g()
                )));
            }
        }
        Ok(ModelSet { models })
    }

    pub fn num_labels(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn g(&self) -> usize {
        self.models[0].g()
    }

    pub fn label(&self, l: usize) -> &LabelModel {
        &self.models[l]
    }

    pub fn models(&self) -> &[LabelModel] {
        &self.models
    }

    pub(crate) fn permuted(&self, order: &[usize]) -> ModelSet {
        ModelSet {
            models: order.iter().map(|&l| self.models[l].clone()).collect(),
        }
    }
}

/// Returns `cov + epsilon * I` when the smallest eigenvalue of `cov` is below
/// `epsilon`, the input unchanged otherwise. A numerically negative smallest
/// eigenvalue is lifted to exactly `epsilon`.
pub fn regularize_covariance(cov: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let min_eig = SymmetricEigen::new(cov.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    if min_eig >= epsilon {
        return cov.clone();
    }
    let shift = if min_eig >= 0.0 { epsilon } else { epsilon - min_eig };
    cov + DMatrix::identity(cov.nrows(), cov.ncols()) * shift
}

/// Scalar analog of [`regularize_covariance`].
pub fn regularize_variance(var: f64, epsilon: f64) -> f64 {
    if var >= epsilon {
        var
    } else {
        var.max(0.0) + epsilon
    }
}
