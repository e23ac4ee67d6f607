//! MAP labeling by iterated conditional modes over a Potts prior.
//!
//! Sweeps are synchronous: every site reads its neighbors from the previous
//! field, so a sweep is a pure function of its input and can run site-parallel.
//! Synchronous ICM can oscillate, so [`map_estimate`] keeps the lowest-energy
//! field it has seen (including the input) and returns that.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;

use crate::emission::ModelSet;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::observation::ObservationField;

/// One label per site, every label in `0..num_labels`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelField {
    labels: Vec<usize>,
    num_labels: usize,
}

impl LabelField {
    pub fn new(labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::InvalidConfig("label count must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_labels) {
            return Err(Error::InvalidModel(format!(
                "label {bad} outside 0..{num_labels}"
            )));
        }
        Ok(LabelField { labels, num_labels })
    }

    pub fn constant(len: usize, label: usize, num_labels: usize) -> Result<Self> {
        Self::new(vec![label; len], num_labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.labels
    }

    /// Site count per label.
    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Renames every label `l` to `mapping[l]`.
    pub fn relabeled(&self, mapping: &[usize]) -> Result<Self> {
        if mapping.len() != self.num_labels {
            return Err(Error::DimensionMismatch {
                expected: self.num_labels,
                found: mapping.len(),
            });
        }
        LabelField::new(self.labels.iter().map(|&l| mapping[l]).collect(), self.num_labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapConfig {
    pub max_map_iters: usize,
    /// Relative change in total energy below which sweeping stops.
    pub energy_tol: f64,
    pub beta: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            max_map_iters: 10,
            energy_tol: 1e-6,
            beta: 0.5,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_map_iters == 0 {
            return Err(Error::InvalidConfig("max_map_iters must be at least 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.energy_tol >= 0.0) {
            return Err(Error::InvalidConfig("energy_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub likelihood: f64,
    pub prior: f64,
    pub total: f64,
}

impl EnergyTerms {
    fn new(likelihood: f64, prior: f64) -> Self {
        EnergyTerms {
            likelihood,
            prior,
            total: likelihood + prior,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub iter: usize,
    pub likelihood: f64,
    pub prior: f64,
    pub total: f64,
}

pub const TRACE_HEADER: &str = "iter,likelihood_energy,prior_energy,total_energy";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub records: Vec<EnergyRecord>,
}

impl EnergyTrace {
    pub fn push(&mut self, iter: usize, terms: EnergyTerms) {
        self.records.push(EnergyRecord {
            iter,
            likelihood: terms.likelihood,
            prior: terms.prior,
            total: terms.total,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }

    /// CSV with [`TRACE_HEADER`]; values carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                r.iter, r.likelihood, r.prior, r.total
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut offset = 0;
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => offset += h.len() + 1,
            _ => {
                return Err(Error::Format {
                    offset: 0,
                    message: "missing energy trace header".into(),
                })
            }
        }
        let mut records = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                offset += line.len() + 1;
                continue;
            }
            let bad = |message: &str| Error::Format {
                offset,
                message: message.to_string(),
            };
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            records.push(EnergyRecord {
                iter: fields[0].parse().map_err(|_| bad("bad iteration index"))?,
                likelihood: num(fields[1])?,
                prior: num(fields[2])?,
                total: num(fields[3])?,
            });
            offset += line.len() + 1;
        }
        Ok(EnergyTrace { records })
    }
}

/// Potts clique potential `beta * (1 - [a == b])`.
#[inline]
pub fn clique_potential(a: usize, b: usize, beta: f64) -> f64 {
    if a == b {
        0.0
    } else {
        beta
    }
}

fn check_field(x: &LabelField, lattice: &Lattice) -> Result<()> {
    if x.len() != lattice.site_count() {
        return Err(Error::DimensionMismatch {
            expected: lattice.site_count(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Sum of clique potentials over every unordered neighbor pair.
pub fn prior_energy(x: &LabelField, lattice: &Lattice, beta: f64) -> Result<f64> {
    check_field(x, lattice)?;
    Ok(prior_energy_unchecked(x.as_slice(), lattice, beta))
}

fn prior_energy_unchecked(x: &[usize], lattice: &Lattice, beta: f64) -> f64 {
    let disagreeing: usize = (0..x.len())
        .map(|i| {
            lattice
                .adjacent(i)
                .iter()
                .filter(|&&j| j > i && x[j] != x[i])
                .count()
        })
        .sum();
    beta * disagreeing as f64
}

/// Per-site, per-label unitary energies for a fixed parameter set.
#[derive(Debug, Clone)]
pub struct UnaryTable {
    num_labels: usize,
    energies: Vec<f64>,
}

impl UnaryTable {
    pub fn new(y: &ObservationField, theta: &ModelSet) -> Result<Self> {
        if y.dim() != theta.dim() {
            return Err(Error::DimensionMismatch {
                expected: theta.dim(),
                found: y.dim(),
            });
        }
        let k = theta.num_labels();
        let energies: Vec<f64> = (0..y.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let z = y.site(i);
                theta.models().iter().map(move |m| m.energy_unchecked(z))
            })
            .collect();
        debug_assert_eq!(energies.len(), y.len() * k);
        Ok(UnaryTable {
            num_labels: k,
            energies,
        })
    }

    #[inline]
    pub fn site(&self, i: usize) -> &[f64] {
        &self.energies[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn len(&self) -> usize {
        self.energies.len() / self.num_labels
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    fn energy_of(&self, x: &[usize], lattice: &Lattice, beta: f64) -> EnergyTerms {
        let likelihood: f64 = x.iter().enumerate().map(|(i, &l)| self.site(i)[l]).sum();
        EnergyTerms::new(likelihood, prior_energy_unchecked(x, lattice, beta))
    }
}

fn check_inputs(x: &LabelField, y: &ObservationField, theta: &ModelSet, lattice: &Lattice) -> Result<()> {
    check_field(x, lattice)?;
    if y.len() != lattice.site_count() {
        return Err(Error::DimensionMismatch {
            expected: lattice.site_count(),
            found: y.len(),
        });
    }
    if x.num_labels() != theta.num_labels() {
        return Err(Error::DimensionMismatch {
            expected: theta.num_labels(),
            found: x.num_labels(),
        });
    }
    Ok(())
}

pub fn total_posterior_energy(
    x: &LabelField,
    y: &ObservationField,
    theta: &ModelSet,
    lattice: &Lattice,
    beta: f64,
) -> Result<EnergyTerms> {
    check_inputs(x, y, theta, lattice)?;
    let table = UnaryTable::new(y, theta)?;
    Ok(table.energy_of(x.as_slice(), lattice, beta))
}

fn sweep(table: &UnaryTable, x: &[usize], lattice: &Lattice, beta: f64) -> Vec<usize> {
    let k = table.num_labels();
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let neighbors = lattice.adjacent(i);
            let unary = table.site(i);
            let mut best = (0, f64::INFINITY);
            for (l, &u) in unary.iter().enumerate().take(k) {
                let disagree = neighbors.iter().filter(|&&j| x[j] != l).count();
                let e = u + beta * disagree as f64;
                if e < best.1 {
                    best = (l, e);
                }
            }
            best.0
        })
        .collect()
}

/// One synchronous update of every site against the input field.
pub fn icm_sweep(
    x: &LabelField,
    y: &ObservationField,
    theta: &ModelSet,
    lattice: &Lattice,
    beta: f64,
) -> Result<LabelField> {
    check_inputs(x, y, theta, lattice)?;
    let table = UnaryTable::new(y, theta)?;
    LabelField::new(sweep(&table, x.as_slice(), lattice, beta), x.num_labels())
}

#[derive(Debug, Clone)]
pub struct MapOutcome {
    /// Lowest-energy field seen, possibly the input.
    pub labels: LabelField,
    pub energy: EnergyTerms,
    /// One record per sweep, energy of the field that sweep produced.
    pub trace: EnergyTrace,
}

fn state_hash(x: &[usize]) -> u64 {
    let mut h = DefaultHasher::new();
    x.hash(&mut h);
    h.finish()
}

pub fn map_estimate(
    x0: &LabelField,
    y: &ObservationField,
    theta: &ModelSet,
    lattice: &Lattice,
    config: &MapConfig,
) -> Result<MapOutcome> {
    config.validate()?;
    check_inputs(x0, y, theta, lattice)?;
    let table = UnaryTable::new(y, theta)?;
    Ok(map_estimate_with_table(x0, &table, lattice, config))
}

pub(crate) fn map_estimate_with_table(
    x0: &LabelField,
    table: &UnaryTable,
    lattice: &Lattice,
    config: &MapConfig,
) -> MapOutcome {
    let k = x0.num_labels();
    let mut current = x0.as_slice().to_vec();
    let mut previous_energy = table.energy_of(&current, lattice, config.beta);
    let mut best = (current.clone(), previous_energy);
    let mut seen = HashSet::from([state_hash(&current)]);
    let mut trace = EnergyTrace::default();

    for iter in 1..=config.max_map_iters {
        current = sweep(table, &current, lattice, config.beta);
        let energy = table.energy_of(&current, lattice, config.beta);
        trace.push(iter, energy);
        if energy.total < best.1.total {
            best = (current.clone(), energy);
        }
        let settled =
            (energy.total - previous_energy.total).abs() < config.energy_tol * energy.total.abs();
        let repeated = !seen.insert(state_hash(&current));
        if settled || repeated {
            break;
        }
        previous_energy = energy;
    }
    MapOutcome {
        labels: LabelField { labels: best.0, num_labels: k },
        energy: best.1,
        trace,
    }
}
