//! Lloyd k-means used for the initial labeling.
//!
//! Seeding is farthest-point: the first center is the observation nearest the
//! global mean and each further center is the observation farthest from the
//! centers chosen so far. The seed only breaks exact ties. Output labels are
//! ordered by ascending center norm.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map_icm::LabelField;
use crate::observation::ObservationField;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub labels: LabelField,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the seeded centers.
    pub inertia_history: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn count_distinct(y: &ObservationField, limit: usize) -> usize {
    let mut seen = HashSet::new();
    for row in y.iter() {
        // +0.0 and -0.0 are the same point
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        seen.insert(key);
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

/// Index maximizing `score`, with exact ties broken by `rng`.
fn pick_best(scores: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == best)
        .map(|(i, _)| i)
        .collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

fn seed_centers(y: &ObservationField, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mean = column_mean(y, y.iter());
    let closeness: Vec<f64> = y.iter().map(|row| -sq_dist(row, &mean)).collect();
    let first = pick_best(&closeness, rng);
    let mut centers = vec![y.site(first).to_vec()];
    let mut nearest: Vec<f64> = y.iter().map(|row| sq_dist(row, &centers[0])).collect();
    while centers.len() < k {
        let next = pick_best(&nearest, rng);
        let c = y.site(next).to_vec();
        for (d, row) in nearest.iter_mut().zip(y.iter()) {
            *d = d.min(sq_dist(row, &c));
        }
        centers.push(c);
    }
    centers
}

fn column_mean<'a>(y: &ObservationField, rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum = vec![0.0; y.dim()];
    let mut n = 0usize;
    for row in rows {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        n += 1;
    }
    sum.iter_mut().for_each(|s| *s /= n.max(1) as f64);
    sum
}

fn assign(y: &ObservationField, centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let row = y.site(i);
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(row, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect();
    let inertia = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), inertia)
}

fn inertia_of(y: &ObservationField, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    y.iter()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, &centers[l]))
        .sum()
}

fn cluster_means(y: &ObservationField, labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; y.dim()]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in y.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// Recomputes centers from `labels`, moving the point farthest from its center
/// into each empty cluster.
fn update_centers(y: &ObservationField, labels: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let (mut centers, mut counts) = cluster_means(y, labels, k);
    while let Some(empty) = counts.iter().position(|&n| n == 0) {
        let mut far = None;
        let mut far_d = -1.0;
        for (i, (row, &l)) in y.iter().zip(labels.iter()).enumerate() {
            if counts[l] > 1 {
                let d = sq_dist(row, &centers[l]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let Some(i) = far else { break };
        let donor = labels[i];
        labels[i] = empty;
        counts[donor] -= 1;
        counts[empty] = 1;
        let (recomputed, _) = cluster_means(y, labels, k);
        centers[donor] = recomputed[donor].clone();
        centers[empty] = y.site(i).to_vec();
    }
    centers
}

pub fn kmeans(y: &ObservationField, k: usize, seed: u64, max_iters: usize) -> Result<KmeansResult> {
    if k == 0 {
        return Err(Error::InvalidConfig("k-means needs K >= 1".into()));
    }
    let distinct = count_distinct(y, k);
    if distinct < k {
        return Err(Error::TooFewDistinct { distinct, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(y, k, &mut rng);
    let (mut labels, inertia) = assign(y, &centers);
    let mut history = vec![inertia];
    let mut converged = false;
    for _ in 0..max_iters {
        centers = update_centers(y, &mut labels, k);
        let (next, inertia) = assign(y, &centers);
        history.push(inertia);
        let same = next == labels;
        labels = next;
        if same {
            converged = true;
            break;
        }
    }
    if !converged {
        centers = update_centers(y, &mut labels, k);
        history.push(inertia_of(y, &labels, &centers));
    }

    // canonical order: ascending center norm, ties by prior index
    let mut order: Vec<usize> = (0..k).collect();
    let norms: Vec<f64> = centers.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let labels: Vec<usize> = labels.iter().map(|&l| rank[l]).collect();
    let centers: Vec<Vec<f64>> = order.iter().map(|&old| centers[old].clone()).collect();
    let inertia = *history.last().expect("history is never empty");
    Ok(KmeansResult {
        labels: LabelField::new(labels, k)?,
        centers,
        inertia,
        inertia_history: history,
    })
}
