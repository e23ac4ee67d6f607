//! Weighted Gaussian-mixture fitting.
//!
//! Each site carries a non-negative weight (the outer EM passes its label
//! posteriors) and the fit maximizes `sum_i w_i ln G_mix(y_i)`. With a single
//! component this is the closed-form weighted mean and population covariance;
//! with more it is an inner EM with soft responsibilities.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::emission::{
    log_sum_exp, regularize_covariance, regularize_variance, Component, LabelModel,
    WeightedComponent,
};
use crate::error::{Error, Result};
use crate::observation::ObservationField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Mixture components per label (`g`).
    pub components: usize,
    pub max_inner_iters: usize,
    /// Relative change in weighted log-likelihood that ends the inner EM.
    pub tol: f64,
    /// Floor on variances, and on the smallest covariance eigenvalue.
    pub cov_epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            components: 1,
            max_inner_iters: 20,
            tol: 1e-6,
            cov_epsilon: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidConfig("component count must be at least 1".into()));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("max_inner_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.cov_epsilon > 0.0) {
            return Err(Error::InvalidConfig("cov_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Per-site component responsibilities, row-major `sites x components`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    components: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.components
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.components..(i + 1) * self.components]
    }
}

fn row_responsibilities(model: &LabelModel, z: &[f64], out: &mut [f64]) -> f64 {
    for (o, wc) in out.iter_mut().zip(model.components()) {
        *o = wc.weight.ln() + wc.component.log_pdf(z);
    }
    let lse = log_sum_exp(out.iter().copied());
    for o in out.iter_mut() {
        *o = (*o - lse).exp();
    }
    lse
}

pub fn responsibilities(y: &ObservationField, model: &LabelModel) -> Result<Responsibilities> {
    if y.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: y.dim(),
        });
    }
    let g = model.g();
    let mut values = vec![0.0; y.len() * g];
    values
        .par_chunks_mut(g)
        .enumerate()
        .for_each(|(i, row)| {
            row_responsibilities(model, y.site(i), row);
        });
    Ok(Responsibilities { components: g, values })
}

/// `sum_i w_i ln G_mix(y_i)` over sites with positive weight.
pub fn weighted_log_likelihood(y: &ObservationField, weights: &[f64], model: &LabelModel) -> f64 {
    let terms: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            if weights[i] > 0.0 {
                weights[i] * model.log_pdf_unchecked(y.site(i))
            } else {
                0.0
            }
        })
        .collect();
    terms.iter().sum()
}

struct Moments {
    mass: f64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
}

/// Weighted mean and population covariance, two passes in site order.
fn weighted_moments(y: &ObservationField, weight: impl Fn(usize) -> f64) -> Moments {
    let d = y.dim();
    let mut mass = 0.0;
    let mut mean = vec![0.0; d];
    for (i, row) in y.iter().enumerate() {
        let w = weight(i);
        if w > 0.0 {
            mass += w;
            for (m, v) in mean.iter_mut().zip(row) {
                *m += w * v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= mass);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (i, row) in y.iter().enumerate() {
        let w = weight(i);
        if w > 0.0 {
            for ((df, v), m) in diff.iter_mut().zip(row).zip(&mean) {
                *df = v - m;
            }
            for r in 0..d {
                for c in 0..=r {
                    cov[(r, c)] += w * diff[r] * diff[c];
                }
            }
        }
    }
    for r in 0..d {
        for c in 0..=r {
            let v = cov[(r, c)] / mass;
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    Moments { mass, mean, cov }
}

fn floored_component(mean: &[f64], cov: &DMatrix<f64>, eps: f64) -> Result<Component> {
    let cov = if cov.nrows() == 1 {
        DMatrix::from_element(1, 1, regularize_variance(cov[(0, 0)], eps))
    } else {
        regularize_covariance(cov, eps)
    };
    Component::from_moments(mean, &cov)
}

fn check_weights(y: &ObservationField, weights: &[f64], g: usize) -> Result<()> {
    if weights.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: weights.len(),
        });
    }
    if let Some(bad) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidWeights(format!("weight {bad} is not a finite non-negative number")));
    }
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(Error::InvalidWeights("all weights are zero".into()));
    }
    let effective = weights.iter().filter(|&&w| w > 0.0).count();
    if effective < g {
        return Err(Error::InsufficientSamples {
            effective,
            components: g,
        });
    }
    Ok(())
}

/// Starting mixture: the weighted mean shifted by up to one standard deviation
/// both ways along the principal axis, equal weights, shared covariance.
fn split_init(moments: &Moments, g: usize, eps: f64) -> Result<LabelModel> {
    let d = moments.mean.len();
    let eig = SymmetricEigen::new(moments.cov.clone());
    let top = (0..d)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap_or(0);
    let spread = eig.eigenvalues[top].max(0.0).sqrt();
    let axis = eig.eigenvectors.column(top);
    let mut components = Vec::with_capacity(g);
    for c in 0..g {
        let t = if g == 1 { 0.0 } else { -1.0 + 2.0 * c as f64 / (g - 1) as f64 };
        let mean: Vec<f64> = (0..d).map(|r| moments.mean[r] + t * spread * axis[r]).collect();
        components.push(WeightedComponent {
            weight: 1.0 / g as f64,
            component: floored_component(&mean, &moments.cov, eps)?,
        });
    }
    LabelModel::new(components)
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: LabelModel,
    /// Weighted log-likelihood at the start and after every inner iteration.
    pub log_likelihood: Vec<f64>,
}

pub fn fit_gmm(
    y: &ObservationField,
    weights: &[f64],
    config: &FitConfig,
    init: Option<&LabelModel>,
) -> Result<LabelModel> {
    fit_gmm_traced(y, weights, config, init).map(|f| f.model)
}

pub fn fit_gmm_traced(
    y: &ObservationField,
    weights: &[f64],
    config: &FitConfig,
    init: Option<&LabelModel>,
) -> Result<GmmFit> {
    config.validate()?;
    let g = config.components;
    check_weights(y, weights, g)?;
    let eps = config.cov_epsilon;

    if g == 1 {
        let m = weighted_moments(y, |i| weights[i]);
        let model = LabelModel::single(floored_component(&m.mean, &m.cov, eps)?);
        let ll = weighted_log_likelihood(y, weights, &model);
        return Ok(GmmFit {
            model,
            log_likelihood: vec![ll],
        });
    }

    let mut model = match init {
        Some(m) if m.g() == g && m.dim() == y.dim() => m.clone(),
        _ => split_init(&weighted_moments(y, |i| weights[i]), g, eps)?,
    };
    let mut ll = weighted_log_likelihood(y, weights, &model);
    let mut history = vec![ll];
    let total: f64 = weights.iter().sum();
    let mut resp = vec![0.0; y.len() * g];

    for _ in 0..config.max_inner_iters {
        resp.par_chunks_mut(g).enumerate().for_each(|(i, row)| {
            if weights[i] > 0.0 {
                row_responsibilities(&model, y.site(i), row);
                row.iter_mut().for_each(|r| *r *= weights[i]);
            } else {
                row.iter_mut().for_each(|r| *r = 0.0);
            }
        });
        let mut components = Vec::with_capacity(g);
        for c in 0..g {
            let m = weighted_moments(y, |i| resp[i * g + c]);
            let previous = &model.components()[c];
            let component = if m.mass > 1e-12 * total {
                floored_component(&m.mean, &m.cov, eps)?
            } else {
                // starved component keeps its shape
                previous.component.clone()
            };
            components.push((m.mass.max(0.0), component));
        }
        let mass: f64 = components.iter().map(|c| c.0).sum();
        model = LabelModel::new(
            components
                .into_iter()
                .map(|(m, component)| WeightedComponent {
                    weight: m / mass,
                    component,
                })
                .collect(),
        )?;
        let next = weighted_log_likelihood(y, weights, &model);
        history.push(next);
        let done = (next - ll).abs() < config.tol * next.abs();
        ll = next;
        if done {
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: history,
    })
}
