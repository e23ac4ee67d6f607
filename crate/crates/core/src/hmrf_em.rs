//! The HMRF-EM loop.
//!
//! Per iteration: MAP labels under the current parameters, per-site posteriors
//! `P(l | y_i) ∝ G_mix(y_i; θ_l) · P(l | x_{N_i})` with the neighborhood prior
//! normalized over labels at each site, then a weighted GMM refit per label.
//! The initial labels come from k-means and the initial parameters from a hard
//! refit on them.

use rayon::prelude::*;

use crate::emission::{log_sum_exp, ModelSet};
use crate::error::{Error, Result};
use crate::gmm_fit::{fit_gmm, FitConfig};
use crate::kmeans::kmeans;
use crate::lattice::{Lattice, SiteIndex};
use crate::map_icm::{
    clique_potential, map_estimate_with_table, EnergyTrace, LabelField, MapConfig, UnaryTable,
};
use crate::observation::ObservationField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub em_iters: usize,
    pub num_labels: usize,
    pub map: MapConfig,
    pub fit: FitConfig,
    pub kmeans_max_iters: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            em_iters: 10,
            num_labels: 2,
            map: MapConfig::default(),
            fit: FitConfig::default(),
            kmeans_max_iters: 100,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.em_iters == 0 {
            return Err(Error::InvalidConfig("em_iters must be at least 1".into()));
        }
        if self.num_labels < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 labels, got {}",
                self.num_labels
            )));
        }
        self.map.validate()?;
        self.fit.validate()
    }
}

/// `P(l | y_i)` for every site, row-major `sites x labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorField {
    num_labels: usize,
    values: Vec<f64>,
}

impl PosteriorField {
    pub fn new(num_labels: usize, values: Vec<f64>) -> Result<Self> {
        if num_labels == 0 || !values.len().is_multiple_of(num_labels) {
            return Err(Error::DimensionMismatch {
                expected: num_labels,
                found: values.len(),
            });
        }
        Ok(PosteriorField { num_labels, values })
    }

    /// One-hot posteriors from a hard labeling.
    pub fn hard(x: &LabelField) -> Self {
        let k = x.num_labels();
        let mut values = vec![0.0; x.len() * k];
        for (i, &l) in x.as_slice().iter().enumerate() {
            values[i * k + l] = 1.0;
        }
        PosteriorField { num_labels: k, values }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.num_labels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        self.values.iter().skip(l).step_by(self.num_labels).copied().collect()
    }

    fn permuted(&self, order: &[usize]) -> Self {
        let k = self.num_labels;
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.values.chunks_exact(k) {
            values.extend(order.iter().map(|&l| row[l]));
        }
        PosteriorField { num_labels: k, values }
    }
}

fn disagreement(x: &[usize], neighbors: &[SiteIndex], l: usize, beta: f64) -> f64 {
    neighbors.iter().map(|&j| clique_potential(l, x[j], beta)).sum()
}

/// `P(l | x_{N_i})`, the Gibbs prior of site `i` given its neighbors, normalized
/// over the labels.
pub fn neighborhood_label_prior(
    x: &LabelField,
    lattice: &Lattice,
    i: SiteIndex,
    beta: f64,
) -> Result<Vec<f64>> {
    if x.len() != lattice.site_count() {
        return Err(Error::DimensionMismatch {
            expected: lattice.site_count(),
            found: x.len(),
        });
    }
    let neighbors = lattice.neighbors(i)?;
    let logits: Vec<f64> = (0..x.num_labels())
        .map(|l| -disagreement(x.as_slice(), neighbors, l, beta))
        .collect();
    let lse = log_sum_exp(logits.iter().copied());
    Ok(logits.iter().map(|v| (v - lse).exp()).collect())
}

fn posterior_from_table(
    table: &UnaryTable,
    x: &LabelField,
    lattice: &Lattice,
    beta: f64,
) -> Result<PosteriorField> {
    let k = x.num_labels();
    let labels = x.as_slice();
    let mut values = vec![0.0; labels.len() * k];
    let failed: Option<usize> = values
        .par_chunks_mut(k)
        .enumerate()
        .filter_map(|(i, row)| {
            let neighbors = lattice.adjacent(i);
            // the unitary energy is -ln G_mix up to a label-independent constant
            for (l, (r, u)) in row.iter_mut().zip(table.site(i)).enumerate() {
                *r = -u - disagreement(labels, neighbors, l, beta);
            }
            let lse = log_sum_exp(row.iter().copied());
            if !lse.is_finite() {
                return Some(i);
            }
            row.iter_mut().for_each(|r| *r = (*r - lse).exp());
            None
        })
        .min();
    match failed {
        Some(site) => Err(Error::ZeroEvidence { site }),
        None => Ok(PosteriorField { num_labels: k, values }),
    }
}

/// Per-site label posteriors given the current labeling and parameters.
pub fn posterior_step(
    y: &ObservationField,
    x: &LabelField,
    theta: &ModelSet,
    lattice: &Lattice,
    beta: f64,
) -> Result<PosteriorField> {
    if x.len() != lattice.site_count() || y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: lattice.site_count(),
            found: if x.len() != lattice.site_count() { x.len() } else { y.len() },
        });
    }
    if x.num_labels() != theta.num_labels() {
        return Err(Error::DimensionMismatch {
            expected: theta.num_labels(),
            found: x.num_labels(),
        });
    }
    let table = UnaryTable::new(y, theta)?;
    posterior_from_table(&table, x, lattice, beta)
}

/// Refits every label's mixture with its posterior column as site weights.
pub fn m_step(
    y: &ObservationField,
    posteriors: &PosteriorField,
    fit: &FitConfig,
    warm: Option<&ModelSet>,
) -> Result<ModelSet> {
    if posteriors.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: posteriors.len(),
        });
    }
    let n = y.len() as f64;
    let mut models = Vec::with_capacity(posteriors.num_labels());
    for l in 0..posteriors.num_labels() {
        let weights = posteriors.column(l);
        let mass: f64 = weights.iter().sum();
        if !(mass >= 1e-6 * n) {
            return Err(Error::LabelCollapse { label: l, mass });
        }
        let init = warm.filter(|t| t.num_labels() == posteriors.num_labels()).map(|t| t.label(l));
        let model = fit_gmm(y, &weights, fit, init).map_err(|e| match e {
            Error::SingularCovariance { .. } => Error::SingularCovariance { label: Some(l) },
            Error::InsufficientSamples { .. } | Error::InvalidWeights(_) => {
                Error::LabelCollapse { label: l, mass }
            }
            other => other,
        })?;
        models.push(model);
    }
    ModelSet::new(models)
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub labels: LabelField,
    pub theta: ModelSet,
    /// One record per EM iteration: energy of the MAP labeling under the
    /// parameters that MAP step used.
    pub em_trace: EnergyTrace,
    pub posteriors: PosteriorField,
    /// The labeling the EM loop started from (k-means output for [`run_hmrf_em`]).
    pub initial_labels: LabelField,
    /// Per-iteration ICM sweep traces.
    pub map_traces: Vec<EnergyTrace>,
    /// Parameters used by each iteration's MAP step; entry 0 is the k-means refit.
    pub theta_trace: Vec<ModelSet>,
}

/// Runs the EM loop from a given initial labeling. Labels keep the names of
/// `x0`; no reordering is applied.
pub fn run_hmrf_em_from_labels(
    y: &ObservationField,
    lattice: &Lattice,
    config: &EmConfig,
    x0: &LabelField,
) -> Result<SegmentationResult> {
    config.validate()?;
    if y.is_empty() {
        return Err(Error::InvalidShape("no observations".into()));
    }
    if y.len() != lattice.site_count() || x0.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: lattice.site_count(),
            found: if y.len() != lattice.site_count() { y.len() } else { x0.len() },
        });
    }
    if x0.num_labels() != config.num_labels {
        return Err(Error::DimensionMismatch {
            expected: config.num_labels,
            found: x0.num_labels(),
        });
    }

    let beta = config.map.beta;
    let mut theta = m_step(y, &PosteriorField::hard(x0), &config.fit, None)
        .map_err(|e| e.at_iteration(0))?;
    let mut x = x0.clone();
    let mut em_trace = EnergyTrace::default();
    let mut map_traces = Vec::with_capacity(config.em_iters);
    let mut theta_trace = Vec::with_capacity(config.em_iters);
    let mut posteriors = PosteriorField::hard(x0);

    for t in 1..=config.em_iters {
        let table = UnaryTable::new(y, &theta).map_err(|e| e.at_iteration(t))?;
        let outcome = map_estimate_with_table(&x, &table, lattice, &config.map);
        em_trace.push(t, outcome.energy);
        map_traces.push(outcome.trace);
        x = outcome.labels;
        posteriors = posterior_from_table(&table, &x, lattice, beta).map_err(|e| e.at_iteration(t))?;
        let next = m_step(y, &posteriors, &config.fit, Some(&theta)).map_err(|e| e.at_iteration(t))?;
        theta_trace.push(std::mem::replace(&mut theta, next));
    }

    Ok(SegmentationResult {
        labels: x,
        theta,
        em_trace,
        posteriors,
        initial_labels: x0.clone(),
        map_traces,
        theta_trace,
    })
}

/// Reorders labels by ascending norm of their mixture mean.
pub fn canonicalize(result: SegmentationResult) -> Result<SegmentationResult> {
    let k = result.theta.num_labels();
    let norms: Vec<f64> = result
        .theta
        .models()
        .iter()
        .map(|m| m.mean().iter().map(|v| v * v).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    Ok(SegmentationResult {
        labels: result.labels.relabeled(&rank)?,
        theta: result.theta.permuted(&order),
        em_trace: result.em_trace,
        posteriors: result.posteriors.permuted(&order),
        initial_labels: result.initial_labels,
        map_traces: result.map_traces,
        theta_trace: result.theta_trace.iter().map(|t| t.permuted(&order)).collect(),
    })
}

/// k-means initialization followed by the EM loop, with canonical label order.
pub fn run_hmrf_em(
    y: &ObservationField,
    lattice: &Lattice,
    config: &EmConfig,
    seed: u64,
) -> Result<SegmentationResult> {
    config.validate()?;
    if y.is_empty() {
        return Err(Error::InvalidShape("no observations".into()));
    }
    let init = kmeans(y, config.num_labels, seed, config.kmeans_max_iters)?;
    canonicalize(run_hmrf_em_from_labels(y, lattice, config, &init.labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::{Component, Gaussian1D, LabelModel};
    use crate::lattice::NeighborhoodKind;

    fn gaussians(params: &[(f64, f64)]) -> ModelSet {
        ModelSet::new(
            params
                .iter()
                .map(|&(mu, s)| LabelModel::single(Component::Scalar(Gaussian1D::new(mu, s).unwrap())))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prior_examples() {
        let l = Lattice::grid_2d(1, 1, NeighborhoodKind::N4).unwrap();
        let x = LabelField::new(vec![2], 3).unwrap();
        let p = neighborhood_label_prior(&x, &l, 0, 0.5).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let l = Lattice::grid_2d(3, 3, NeighborhoodKind::N4).unwrap();
        let mut labels = vec![0; 9];
        labels[4] = 1;
        let x = LabelField::new(labels, 2).unwrap();
        let p = neighborhood_label_prior(&x, &l, 4, 0.5).unwrap();
        // 1 / (1 + e^-2), arbitrary-precision evaluation
        assert!((p[0] - 0.880_797_077_977_882_4).abs() < 1e-15);

        let x = LabelField::new(vec![0, 1, 0, 1, 0, 0, 1, 1, 0], 2).unwrap();
        // center of a 3x3 N4 grid: neighbors 1, 3, 5, 7 carry labels 1, 1, 0, 1
        let x2 = LabelField::new(vec![0, 1, 0, 0, 1, 1, 0, 0, 0], 2).unwrap();
        let even = neighborhood_label_prior(&x2, &l, 4, 0.5).unwrap();
        assert!((even[0] - 0.5).abs() < 1e-15);
        assert!(neighborhood_label_prior(&x, &l, 9, 0.5).is_err());
    }

    #[test]
    fn posterior_examples() {
        let l = Lattice::grid_2d(1, 1, NeighborhoodKind::N4).unwrap();
        let y = ObservationField::scalar(vec![2.0]).unwrap();
        let theta = gaussians(&[(0.0, 1.0), (4.0, 1.0)]);
        let x = LabelField::new(vec![0], 2).unwrap();
        let p = posterior_step(&y, &x, &theta, &l, 0.5).unwrap();
        assert!((p.row(0)[0] - 0.5).abs() < 1e-15);

        let l = Lattice::grid_2d(2, 3, NeighborhoodKind::N8).unwrap();
        let y = ObservationField::scalar(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let same = gaussians(&[(3.0, 2.0), (3.0, 2.0)]);
        let x = LabelField::new(vec![0, 1, 1, 0, 0, 1], 2).unwrap();
        let p = posterior_step(&y, &x, &same, &l, 0.5).unwrap();
        for i in 0..6 {
            let prior = neighborhood_label_prior(&x, &l, i, 0.5).unwrap();
            for (a, b) in p.row(i).iter().zip(&prior) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn isolated_site_posterior_is_bayes() {
        let l = Lattice::grid_2d(1, 1, NeighborhoodKind::N4).unwrap();
        let y = ObservationField::scalar(vec![1.3]).unwrap();
        let theta = gaussians(&[(0.0, 1.0), (4.0, 2.0), (2.0, 0.5)]);
        let x = LabelField::new(vec![1], 3).unwrap();
        let p = posterior_step(&y, &x, &theta, &l, 0.5).unwrap();
        let dens: Vec<f64> = theta.models().iter().map(|m| m.pdf(&[1.3]).unwrap()).collect();
        let s: f64 = dens.iter().sum();
        for (a, d) in p.row(0).iter().zip(&dens) {
            assert!((a - d / s).abs() < 1e-14);
        }
    }

    #[test]
    fn m_step_soft_oracle() {
        // 4-pixel image with hand-picked soft posteriors
        let y = ObservationField::scalar(vec![1.0, 2.0, 8.0, 9.0]).unwrap();
        let post = PosteriorField::new(2, vec![0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.25, 0.75]).unwrap();
        let theta = m_step(&y, &post, &FitConfig::default(), None).unwrap();
        // (0.9*1 + 0.8*2 + 0.3*8 + 0.25*9) / 2.25 = 7.15 / 2.25
        let mu0 = theta.label(0).mean()[0];
        assert!((mu0 - 7.15 / 2.25).abs() < 1e-12);
        // (0.1*1 + 0.2*2 + 0.7*8 + 0.75*9) / 1.75 = 12.85 / 1.75
        let mu1 = theta.label(1).mean()[0];
        assert!((mu1 - 12.85 / 1.75).abs() < 1e-12);
    }

    #[test]
    fn m_step_uniform_posteriors_share_global_stats() {
        let y = ObservationField::scalar(vec![1.0, 2.0, 3.0, 10.0]).unwrap();
        let post = PosteriorField::new(2, vec![0.5; 8]).unwrap();
        let theta = m_step(&y, &post, &FitConfig::default(), None).unwrap();
        assert_eq!(theta.label(0), theta.label(1));
        assert!((theta.label(0).mean()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn collapse_is_reported() {
        let y = ObservationField::scalar(vec![1.0, 2.0, 3.0]).unwrap();
        let post = PosteriorField::new(2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            m_step(&y, &post, &FitConfig::default(), None),
            Err(Error::LabelCollapse { label: 1, .. })
        ));
    }

    #[test]
    fn config_rejects_single_label() {
        let cfg = EmConfig { num_labels: 1, ..EmConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = EmConfig { em_iters: 0, ..EmConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn two_level_image_is_thresholded() {
        let l = Lattice::grid_2d(8, 8, NeighborhoodKind::N4).unwrap();
        let v: Vec<f64> = (0..64).map(|i| if (i % 8) < 3 || i / 8 > 5 { 100.0 } else { 0.0 }).collect();
        let y = ObservationField::scalar(v.clone()).unwrap();
        let r = run_hmrf_em(&y, &l, &EmConfig::default(), 1).unwrap();
        for (val, &lab) in v.iter().zip(r.labels.as_slice()) {
            assert_eq!(lab, usize::from(*val > 50.0));
        }
        assert!((r.theta.label(0).mean()[0] - 0.0).abs() < 1e-6);
        assert!((r.theta.label(1).mean()[0] - 100.0).abs() < 1e-6);
    }
}
