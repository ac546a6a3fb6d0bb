//! Marginal maximum likelihood estimation of item difficulties via EM.
//!
//! Abilities are integrated out over a fixed standard-normal prior on an
//! evenly spaced quadrature grid; that fixed prior is also the scale
//! identification. The E-step computes per-person posterior weights over the
//! grid, the M-step solves each item's one-dimensional concave likelihood by
//! Newton steps clamped to one logit. Reductions always run in person/item
//! index order, so results are bit-identical under any parallel schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::QuadratureGrid;
use super::{sigmoid, IrtError};
use crate::response::{Cell, ResponseMatrix};

/// Identification tag: the latent ability distribution is pinned to N(0, 1).
pub const IDENTIFICATION: &str = "ability_prior=normal(0,1)";

const MAX_NEWTON_STEP: f64 = 1.0;
const NEWTON_TOLERANCE: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeItemPolicy {
    /// Drop all-correct / all-incorrect items and report them.
    Drop,
    /// Fail the fit if any item lacks response variability.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default = "default_tolerance")]
    pub convergence_tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_policy")]
    pub extreme_item_policy: ExtremeItemPolicy,
}

fn default_nodes() -> usize {
    61
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_max_iterations() -> usize {
    500
}
fn default_policy() -> ExtremeItemPolicy {
    ExtremeItemPolicy::Drop
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            quadrature_nodes: default_nodes(),
            convergence_tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            extreme_item_policy: default_policy(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), IrtError> {
        if self.quadrature_nodes < 11 {
            return Err(IrtError::InvalidConfig(format!(
                "quadrature_nodes must be >= 11, got {}",
                self.quadrature_nodes
            )));
        }
        if !(self.convergence_tolerance > 0.0) || !self.convergence_tolerance.is_finite() {
            return Err(IrtError::InvalidConfig(format!(
                "convergence_tolerance must be a positive finite number, got {}",
                self.convergence_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(IrtError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDifficulty {
    #[serde(rename = "id")]
    pub item_id: String,
    pub difficulty: f64,
    #[serde(rename = "se")]
    pub standard_error: Option<f64>,
}

/// Fitted difficulties plus the identification convention they were
/// estimated under.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemParameters {
    pub entries: Vec<ItemDifficulty>,
    pub identification: String,
}

impl ItemParameters {
    pub fn from_difficulties<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, f64)>,
    ) -> Self {
        ItemParameters {
            entries: pairs
                .into_iter()
                .map(|(id, difficulty)| ItemDifficulty {
                    item_id: id.into(),
                    difficulty,
                    standard_error: None,
                })
                .collect(),
            identification: IDENTIFICATION.to_string(),
        }
    }

    pub fn difficulty_of(&self, item_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.item_id == item_id)
            .map(|e| e.difficulty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonAbility {
    #[serde(rename = "id")]
    pub person_id: String,
    pub ability: f64,
    pub posterior_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AbilityEstimates {
    pub entries: Vec<PersonAbility>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// All observed responses were correct or all incorrect.
    Extreme,
    /// The item had no observed responses at all.
    Unobserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedItem {
    #[serde(rename = "id")]
    pub item_id: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(with = "parameters_serde")]
    pub parameters: ItemParameters,
    pub abilities: AbilityEstimates,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub dropped_items: Vec<DroppedItem>,
    /// Marginal log-likelihood after each EM cycle (nondecreasing).
    #[serde(skip)]
    pub log_likelihood_trace: Vec<f64>,
}

/// FitReport JSON carries the difficulty entries as a bare array; the
/// identification tag is a crate-wide constant restored on read.
mod parameters_serde {
    use super::{ItemDifficulty, ItemParameters, IDENTIFICATION};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &ItemParameters, s: S) -> Result<S::Ok, S::Error> {
        p.entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ItemParameters, D::Error> {
        let entries = Vec::<ItemDifficulty>::deserialize(d)?;
        Ok(ItemParameters {
            entries,
            identification: IDENTIFICATION.to_string(),
        })
    }
}

/// Per-person observed responses on the kept items, as (kept index, correct).
struct Prepared {
    kept_items: Vec<usize>,
    person_obs: Vec<Vec<(u32, bool)>>,
    item_obs: Vec<Vec<(u32, bool)>>,
}

fn prepare(
    matrix: &ResponseMatrix,
    policy: ExtremeItemPolicy,
) -> Result<(Prepared, Vec<DroppedItem>), IrtError> {
    let n = matrix.n_persons();
    let m = matrix.n_items();

    let mut kept_items = Vec::with_capacity(m);
    let mut dropped = Vec::new();
    for j in 0..m {
        let mut observed = 0usize;
        let mut correct = 0usize;
        for i in 0..n {
            match matrix.cell(i, j) {
                Cell::Correct => {
                    observed += 1;
                    correct += 1;
                }
                Cell::Incorrect => observed += 1,
                Cell::Missing => {}
            }
        }
        if observed == 0 {
            dropped.push(DroppedItem {
                item_id: matrix.item_ids()[j].clone(),
                reason: DropReason::Unobserved,
            });
        } else if correct == 0 || correct == observed {
            if matches!(policy, ExtremeItemPolicy::Error) {
                let kind = if correct == 0 { "incorrect" } else { "correct" };
                return Err(IrtError::ExtremeItem(matrix.item_ids()[j].clone(), kind));
            }
            dropped.push(DroppedItem {
                item_id: matrix.item_ids()[j].clone(),
                reason: DropReason::Extreme,
            });
        } else {
            kept_items.push(j);
        }
    }
    if kept_items.len() < 2 {
        return Err(IrtError::NoVariability {
            mixed: kept_items.len(),
        });
    }

    let mut person_obs: Vec<Vec<(u32, bool)>> = vec![Vec::new(); n];
    let mut item_obs: Vec<Vec<(u32, bool)>> = vec![Vec::new(); kept_items.len()];
    for i in 0..n {
        for (k, &j) in kept_items.iter().enumerate() {
            let correct = match matrix.cell(i, j) {
                Cell::Correct => true,
                Cell::Incorrect => false,
                Cell::Missing => continue,
            };
            person_obs[i].push((k as u32, correct));
            item_obs[k].push((i as u32, correct));
        }
    }
    if let Some(i) = person_obs.iter().position(Vec::is_empty) {
        return Err(IrtError::UncoveredPerson(matrix.person_ids()[i].clone()));
    }

    Ok((
        Prepared {
            kept_items,
            person_obs,
            item_obs,
        },
        dropped,
    ))
}

/// Log-probability tables for the current difficulties: `ln p` and
/// `ln (1 - p)` for every (kept item, node) pair.
fn prob_tables(difficulties: &[f64], grid: &QuadratureGrid) -> (Vec<f64>, Vec<f64>) {
    let nq = grid.len();
    let mut lnp = vec![0.0; difficulties.len() * nq];
    let mut ln1mp = vec![0.0; difficulties.len() * nq];
    for (k, &b) in difficulties.iter().enumerate() {
        for (q, &t) in grid.nodes.iter().enumerate() {
            lnp[k * nq + q] = sigmoid(t - b).ln();
            ln1mp[k * nq + q] = sigmoid(b - t).ln();
        }
    }
    (lnp, ln1mp)
}

struct EStep {
    /// Posterior weights over nodes, row per person.
    weights: Vec<Vec<f64>>,
    marginal_ll: f64,
}

fn e_step(prepared: &Prepared, lnp: &[f64], ln1mp: &[f64], grid: &QuadratureGrid) -> EStep {
    let nq = grid.len();
    let per_person: Vec<(Vec<f64>, f64)> = prepared
        .person_obs
        .par_iter()
        .map(|obs| {
            let mut lw = grid.log_weights.clone();
            for &(k, correct) in obs {
                let base = k as usize * nq;
                let table = if correct { lnp } else { ln1mp };
                for (q, w) in lw.iter_mut().enumerate() {
                    *w += table[base + q];
                }
            }
            let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for w in lw.iter_mut() {
                *w = (*w - max).exp();
                total += *w;
            }
            for w in lw.iter_mut() {
                *w /= total;
            }
            (lw, max + total.ln())
        })
        .collect();

    // Sequential reduction in person order keeps the sum schedule-independent.
    let mut weights = Vec::with_capacity(per_person.len());
    let mut marginal_ll = 0.0;
    for (w, li) in per_person {
        weights.push(w);
        marginal_ll += li;
    }
    EStep {
        weights,
        marginal_ll,
    }
}

/// Expected correct / expected observed counts per node for one item.
fn expected_counts(
    observations: &[(u32, bool)],
    weights: &[Vec<f64>],
    nq: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![0.0; nq];
    let mut n = vec![0.0; nq];
    for &(i, correct) in observations {
        let w = &weights[i as usize];
        if correct {
            for q in 0..nq {
                r[q] += w[q];
                n[q] += w[q];
            }
        } else {
            for q in 0..nq {
                n[q] += w[q];
            }
        }
    }
    (r, n)
}

/// Maximize one item's expected complete-data log-likelihood in its
/// difficulty. The objective is strictly concave, so clamped Newton steps
/// converge monotonically.
fn newton_difficulty(mut b: f64, r: &[f64], n: &[f64], nodes: &[f64]) -> (f64, f64) {
    let mut info = 0.0;
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let mut gradient = 0.0;
        info = 0.0;
        for (q, &t) in nodes.iter().enumerate() {
            let p = sigmoid(t - b);
            gradient += n[q] * p - r[q];
            info += n[q] * p * (1.0 - p);
        }
        if info <= 0.0 {
            break;
        }
        let step = (gradient / info).clamp(-MAX_NEWTON_STEP, MAX_NEWTON_STEP);
        b += step;
        if step.abs() < NEWTON_TOLERANCE {
            break;
        }
    }
    (b, info)
}

/// Fit item difficulties by MML-EM under a fixed N(0, 1) ability prior.
/// Deterministic: no randomness enters the fit, and reductions are ordered.
pub fn fit_1pl(matrix: &ResponseMatrix, config: &FitConfig) -> Result<FitReport, IrtError> {
    config.validate()?;
    if matrix.n_persons() < 2 {
        return Err(IrtError::TooFewPersons(matrix.n_persons()));
    }
    let (prepared, dropped) = prepare(matrix, config.extreme_item_policy)?;
    let grid = QuadratureGrid::standard_normal(config.quadrature_nodes);
    let nq = grid.len();

    // Initialize from each item's marginal log-odds of an incorrect response.
    let mut difficulties: Vec<f64> = prepared
        .item_obs
        .iter()
        .map(|obs| {
            let correct = obs.iter().filter(|&&(_, c)| c).count() as f64;
            let observed = obs.len() as f64;
            ((observed - correct) / correct).ln().clamp(-4.0, 4.0)
        })
        .collect();

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (lnp, ln1mp) = prob_tables(&difficulties, &grid);
        let estep = e_step(&prepared, &lnp, &ln1mp, &grid);
        trace.push(estep.marginal_ll);

        let updated: Vec<f64> = prepared
            .item_obs
            .par_iter()
            .zip(difficulties.par_iter())
            .map(|(obs, &b)| {
                let (r, n) = expected_counts(obs, &estep.weights, nq);
                newton_difficulty(b, &r, &n, &grid.nodes).0
            })
            .collect();

        let delta = updated
            .iter()
            .zip(&difficulties)
            .map(|(new, old)| (new - old).abs())
            .fold(0.0f64, f64::max);
        difficulties = updated;
        if delta < config.convergence_tolerance {
            converged = true;
            break;
        }
    }

    // Final pass at the converged difficulties: log-likelihood, posterior
    // weights for EAP abilities, and information-based standard errors.
    let (lnp, ln1mp) = prob_tables(&difficulties, &grid);
    let estep = e_step(&prepared, &lnp, &ln1mp, &grid);
    trace.push(estep.marginal_ll);

    let standard_errors: Vec<Option<f64>> = prepared
        .item_obs
        .par_iter()
        .zip(difficulties.par_iter())
        .map(|(obs, &b)| {
            let (r, n) = expected_counts(obs, &estep.weights, nq);
            let mut info = 0.0;
            for (q, &t) in grid.nodes.iter().enumerate() {
                let p = sigmoid(t - b);
                info += n[q] * p * (1.0 - p);
            }
            let _ = r;
            (info > 0.0).then(|| 1.0 / info.sqrt())
        })
        .collect();

    let entries: Vec<ItemDifficulty> = prepared
        .kept_items
        .iter()
        .enumerate()
        .map(|(k, &j)| ItemDifficulty {
            item_id: matrix.item_ids()[j].clone(),
            difficulty: difficulties[k],
            standard_error: standard_errors[k],
        })
        .collect();

    let abilities = AbilityEstimates {
        entries: matrix
            .person_ids()
            .iter()
            .zip(&estep.weights)
            .map(|(id, w)| {
                let (mean, sd) = posterior_moments(w, &grid.nodes);
                PersonAbility {
                    person_id: id.clone(),
                    ability: mean,
                    posterior_sd: Some(sd),
                }
            })
            .collect(),
    };

    Ok(FitReport {
        parameters: ItemParameters {
            entries,
            identification: IDENTIFICATION.to_string(),
        },
        abilities,
        converged,
        iterations,
        log_likelihood: estep.marginal_ll,
        dropped_items: dropped,
        log_likelihood_trace: trace,
    })
}

fn posterior_moments(weights: &[f64], nodes: &[f64]) -> (f64, f64) {
    let mean: f64 = weights.iter().zip(nodes).map(|(w, t)| w * t).sum();
    let var: f64 = weights
        .iter()
        .zip(nodes)
        .map(|(w, t)| w * (t - mean) * (t - mean))
        .sum();
    (mean, var.max(0.0).sqrt())
}

/// Expected-a-posteriori abilities for each person given fixed item
/// parameters, on the same quadrature grid the fitter uses.
pub fn eap_abilities(
    matrix: &ResponseMatrix,
    parameters: &ItemParameters,
    config: &FitConfig,
) -> Result<AbilityEstimates, IrtError> {
    config.validate()?;
    let grid = QuadratureGrid::standard_normal(config.quadrature_nodes);
    let nq = grid.len();

    // Items covered by both the parameters and the matrix, in matrix order.
    let covered: Vec<(usize, f64)> = matrix
        .item_ids()
        .iter()
        .enumerate()
        .filter_map(|(j, id)| parameters.difficulty_of(id).map(|b| (j, b)))
        .collect();
    if covered.is_empty() {
        return Err(IrtError::NoCoveredItems);
    }
    if covered.iter().any(|&(_, b)| !b.is_finite()) {
        return Err(IrtError::NonFinite("difficulty"));
    }

    let (lnp, ln1mp) = prob_tables(
        &covered.iter().map(|&(_, b)| b).collect::<Vec<f64>>(),
        &grid,
    );

    let mut entries = Vec::with_capacity(matrix.n_persons());
    for (i, person_id) in matrix.person_ids().iter().enumerate() {
        let mut lw = grid.log_weights.clone();
        let mut any = false;
        for (k, &(j, _)) in covered.iter().enumerate() {
            let table = match matrix.cell(i, j) {
                Cell::Correct => &lnp,
                Cell::Incorrect => &ln1mp,
                Cell::Missing => continue,
            };
            any = true;
            let base = k * nq;
            for (q, w) in lw.iter_mut().enumerate() {
                *w += table[base + q];
            }
        }
        if !any {
            return Err(IrtError::UncoveredPerson(person_id.clone()));
        }
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in lw.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        for w in lw.iter_mut() {
            *w /= total;
        }
        let (mean, sd) = posterior_moments(&lw, &grid.nodes);
        entries.push(PersonAbility {
            person_id: person_id.clone(),
            ability: mean,
            posterior_sd: Some(sd),
        });
    }
    Ok(AbilityEstimates { entries })
}
