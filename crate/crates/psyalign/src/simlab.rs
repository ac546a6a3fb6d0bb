//! Seeded simulation studies: sample two groups from known ability
//! distributions, simulate their responses to a shared item set, optionally
//! inject differential item functioning into group 2, fit both groups, and
//! correlate the fitted difficulties - repeated over many replicates.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{mean_and_sample_std, psychometric_alignment};
use crate::irt::{fit_1pl, simulate_responses, FitConfig};
use crate::rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
    #[error("dif count {k} exceeds the {n} available items")]
    DifCountTooLarge { k: usize, n: usize },
    #[error("all {0} replicates failed")]
    AllReplicatesFailed(usize),
}

/// A sampling distribution for abilities or difficulties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbilityDistribution {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

impl AbilityDistribution {
    pub fn normal(mean: f64, sd: f64) -> Self {
        AbilityDistribution::Normal { mean, sd }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        AbilityDistribution::Uniform { low, high }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            AbilityDistribution::Normal { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || sd <= 0.0 {
                    return Err(SimError::InvalidDistribution(format!(
                        "normal(mean={mean}, sd={sd}) requires finite mean and sd > 0"
                    )));
                }
            }
            AbilityDistribution::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || low >= high {
                    return Err(SimError::InvalidDistribution(format!(
                        "uniform(low={low}, high={high}) requires finite low < high"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample_with(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        match *self {
            AbilityDistribution::Normal { mean, sd } => {
                let dist = Normal::new(mean, sd).expect("validated above");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            AbilityDistribution::Uniform { low, high } => {
                (0..n).map(|_| rng.random_range(low..high)).collect()
            }
        }
    }
}

impl fmt::Display for AbilityDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AbilityDistribution::Normal { mean, sd } => write!(f, "N({mean}, {sd})"),
            AbilityDistribution::Uniform { low, high } => write!(f, "Unif({low}, {high})"),
        }
    }
}

/// Draw `n` i.i.d. values; deterministic under `seed`.
pub fn sample_abilities(
    dist: &AbilityDistribution,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    dist.validate()?;
    let mut rng = rng::stream(seed, "sample_abilities", 0);
    Ok(dist.sample_with(n, &mut rng))
}

/// How group 2's difficulties are derived from group 1's for the items
/// selected to function differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DifScheme {
    /// Select k distinct items; permute their values so that every selected
    /// item's difficulty actually changes (a uniform random derangement).
    #[default]
    Derangement,
    /// Select k distinct items, pair them up, and swap within pairs. An odd
    /// selection leaves one item unswapped.
    PairwiseSwap,
    /// Draw k item indices with replacement (duplicates collapse), then apply
    /// a uniform random permutation to the selected values; fixed points are
    /// allowed, so some selected items may keep their difficulty.
    ReplacementPermutation,
}

/// Group 2's difficulty vector after DIF injection, plus which items were
/// selected. `no_op` flags the k = 1 degenerate case (one item has nothing
/// to swap with).
#[derive(Debug, Clone, PartialEq)]
pub struct DifInjection {
    pub group2_difficulties: Vec<f64>,
    pub dif_item_indices: Vec<usize>,
    pub no_op: bool,
}

/// Inject DIF under the default derangement scheme.
pub fn inject_dif(difficulties: &[f64], k: usize, seed: u64) -> Result<DifInjection, SimError> {
    inject_dif_with_scheme(difficulties, k, DifScheme::Derangement, seed)
}

pub fn inject_dif_with_scheme(
    difficulties: &[f64],
    k: usize,
    scheme: DifScheme,
    seed: u64,
) -> Result<DifInjection, SimError> {
    let m = difficulties.len();
    if k > m {
        return Err(SimError::DifCountTooLarge { k, n: m });
    }
    if k <= 1 {
        return Ok(DifInjection {
            group2_difficulties: difficulties.to_vec(),
            dif_item_indices: Vec::new(),
            no_op: k == 1,
        });
    }
    let mut rng = rng::stream(seed, "inject_dif", 0);
    let mut group2 = difficulties.to_vec();

    let indices: Vec<usize> = match scheme {
        DifScheme::Derangement | DifScheme::PairwiseSwap => {
            let mut idx = rand::seq::index::sample(&mut rng, m, k).into_vec();
            idx.sort_unstable();
            idx
        }
        DifScheme::ReplacementPermutation => {
            let mut idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..m)).collect();
            idx.sort_unstable();
            idx.dedup();
            idx
        }
    };

    match scheme {
        DifScheme::Derangement => {
            let original: Vec<f64> = indices.iter().map(|&j| difficulties[j]).collect();
            let mut values = original.clone();
            // Rejection sampling gives a uniform derangement; distinct values
            // make success certain, ties get a deterministic rotation fallback.
            let mut deranged = false;
            for _ in 0..10_000 {
                values.shuffle(&mut rng);
                if values.iter().zip(&original).all(|(v, o)| v != o) {
                    deranged = true;
                    break;
                }
            }
            if !deranged {
                values.rotate_right(1);
            }
            for (&j, &v) in indices.iter().zip(&values) {
                group2[j] = v;
            }
        }
        DifScheme::PairwiseSwap => {
            let mut order = indices.clone();
            order.shuffle(&mut rng);
            for pair in order.chunks_exact(2) {
                group2.swap(pair[0], pair[1]);
            }
        }
        DifScheme::ReplacementPermutation => {
            let mut values: Vec<f64> = indices.iter().map(|&j| difficulties[j]).collect();
            values.shuffle(&mut rng);
            for (&j, &v) in indices.iter().zip(&values) {
                group2[j] = v;
            }
        }
    }

    Ok(DifInjection {
        group2_difficulties: group2,
        dif_item_indices: indices,
        no_op: false,
    })
}

fn default_n_items() -> usize {
    50
}
fn default_difficulty_dist() -> AbilityDistribution {
    AbilityDistribution::normal(0.0, 1.0)
}
fn default_replicates() -> usize {
    20
}

/// Everything one simulated comparison needs: the two groups' ability
/// distributions and sizes, the item set, how much DIF to inject, and the
/// replicate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationCondition {
    pub group1: AbilityDistribution,
    pub group2: AbilityDistribution,
    pub n1: usize,
    pub n2: usize,
    #[serde(default = "default_n_items")]
    pub n_items: usize,
    #[serde(default = "default_difficulty_dist")]
    pub difficulty_dist: AbilityDistribution,
    #[serde(default)]
    pub dif_count: usize,
    #[serde(default)]
    pub dif_scheme: DifScheme,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub fit: FitConfig,
}

impl SimulationCondition {
    pub fn validate(&self) -> Result<(), SimError> {
        self.group1.validate()?;
        self.group2.validate()?;
        self.difficulty_dist.validate()?;
        if self.n1 < 2 || self.n2 < 2 {
            return Err(SimError::InvalidCondition(format!(
                "group sizes must be >= 2, got n1={}, n2={}",
                self.n1, self.n2
            )));
        }
        if self.n_items < 3 {
            return Err(SimError::InvalidCondition(format!(
                "need at least 3 items, got {}",
                self.n_items
            )));
        }
        if self.dif_count > self.n_items {
            return Err(SimError::DifCountTooLarge {
                k: self.dif_count,
                n: self.n_items,
            });
        }
        if self.n_replicates == 0 {
            return Err(SimError::InvalidCondition(
                "n_replicates must be at least 1".into(),
            ));
        }
        self.fit
            .validate()
            .map_err(|e| SimError::InvalidCondition(e.to_string()))?;
        Ok(())
    }
}

/// Replicate statistics for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub condition: SimulationCondition,
    pub per_replicate_correlations: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dif_no_op: bool,
}

fn run_replicate(condition: &SimulationCondition, replicate: u64) -> Result<f64, String> {
    let seed = condition.master_seed;
    let difficulties = condition.difficulty_dist.sample_with(
        condition.n_items,
        &mut rng::stream(seed, "simlab/difficulties", replicate),
    );
    let injection = inject_dif_with_scheme(
        &difficulties,
        condition.dif_count,
        condition.dif_scheme,
        rng::child_seed(seed, "simlab/dif", replicate),
    )
    .map_err(|e| e.to_string())?;

    let theta1 = condition
        .group1
        .sample_with(condition.n1, &mut rng::stream(seed, "simlab/abilities_g1", replicate));
    let theta2 = condition
        .group2
        .sample_with(condition.n2, &mut rng::stream(seed, "simlab/abilities_g2", replicate));

    let responses1 = simulate_responses(
        &theta1,
        &difficulties,
        rng::child_seed(seed, "simlab/responses_g1", replicate),
    )
    .map_err(|e| e.to_string())?;
    let responses2 = simulate_responses(
        &theta2,
        &injection.group2_difficulties,
        rng::child_seed(seed, "simlab/responses_g2", replicate),
    )
    .map_err(|e| e.to_string())?;

    let fit1 = fit_1pl(&responses1, &condition.fit).map_err(|e| e.to_string())?;
    let fit2 = fit_1pl(&responses2, &condition.fit).map_err(|e| e.to_string())?;
    psychometric_alignment(&fit1.parameters, &fit2.parameters)
        .map(|a| a.correlation)
        .map_err(|e| e.to_string())
}

/// Run every replicate of a condition and aggregate. Replicates execute
/// concurrently with per-replicate derived seeds and are aggregated in
/// replicate order, so the report is identical under any thread count.
pub fn run_condition(condition: &SimulationCondition) -> Result<SimulationReport, SimError> {
    condition.validate()?;
    let outcomes: Vec<Result<f64, String>> = (0..condition.n_replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(condition, r))
        .collect();

    let correlations: Vec<f64> = outcomes.iter().filter_map(|o| o.as_ref().ok()).copied().collect();
    let failures = outcomes.len() - correlations.len();
    if correlations.is_empty() {
        return Err(SimError::AllReplicatesFailed(outcomes.len()));
    }
    let (mean, std) = mean_and_sample_std(&correlations);
    Ok(SimulationReport {
        condition: condition.clone(),
        per_replicate_correlations: correlations,
        mean,
        std,
        failures,
        dif_no_op: condition.dif_count == 1,
    })
}

/// Spread of the true difficulty distribution used by the standard suite.
pub const SUITE_DIFFICULTY_SD: f64 = 1.0;

/// DIF scheme used by the standard suite.
pub const SUITE_DIF_SCHEME: DifScheme = DifScheme::ReplacementPermutation;

const SUITE_ROWS: [(u8, &[(usize, usize)]); 6] = [
    (1, &[(200, 200), (200, 100), (150, 150)]),
    (2, &[(200, 200), (200, 100), (150, 150)]),
    (3, &[(200, 200), (150, 150)]),
    (4, &[(200, 200), (150, 150)]),
    (5, &[(200, 200), (150, 150)]),
    (6, &[(200, 200), (150, 150)]),
];

fn suite_groups(condition_number: u8) -> (AbilityDistribution, AbilityDistribution, usize) {
    let n01 = AbilityDistribution::normal(0.0, 1.0);
    match condition_number {
        1 => (n01, AbilityDistribution::normal(-1.0, 0.5), 0),
        2 => (n01, AbilityDistribution::uniform(-2.0, 2.0), 0),
        3 => (n01, n01, 0),
        4 => (n01, n01, 5),
        5 => (n01, n01, 10),
        6 => (n01, n01, 50),
        _ => unreachable!("suite has conditions 1..=6"),
    }
}

/// The standard six-condition sensitivity suite, 14 condition-size cells in
/// row-major order. Each cell gets its own derived master seed.
pub fn standard_suite_conditions(
    master_seed: u64,
    fit: &FitConfig,
) -> Vec<(u8, SimulationCondition)> {
    let mut cells = Vec::new();
    let mut index = 0u64;
    for (number, sizes) in SUITE_ROWS {
        let (group1, group2, dif_count) = suite_groups(number);
        for &(n1, n2) in sizes {
            cells.push((
                number,
                SimulationCondition {
                    group1,
                    group2,
                    n1,
                    n2,
                    n_items: 50,
                    difficulty_dist: AbilityDistribution::normal(0.0, SUITE_DIFFICULTY_SD),
                    dif_count,
                    dif_scheme: SUITE_DIF_SCHEME,
                    n_replicates: default_replicates(),
                    master_seed: rng::child_seed(master_seed, "suite/cell", index),
                    fit: fit.clone(),
                },
            ));
            index += 1;
        }
    }
    cells
}

/// Run the whole standard suite; reports come back in table order.
pub fn run_standard_suite(
    master_seed: u64,
    fit: &FitConfig,
) -> Result<Vec<SimulationReport>, SimError> {
    standard_suite_conditions(master_seed, fit)
        .iter()
        .map(|(_, condition)| run_condition(condition))
        .collect()
}
