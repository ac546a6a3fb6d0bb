//! One-parameter logistic (Rasch) model: response probabilities, likelihoods,
//! response simulation, and marginal-maximum-likelihood difficulty
//! estimation.

mod fit;
mod quadrature;
mod simulate;

pub use fit::{
    eap_abilities, fit_1pl, AbilityEstimates, DropReason, DroppedItem, ExtremeItemPolicy,
    FitConfig, FitReport, ItemDifficulty, ItemParameters, PersonAbility, IDENTIFICATION,
};
pub use quadrature::QuadratureGrid;
pub use simulate::simulate_responses;

use thiserror::Error;

use crate::response::{Cell, ResponseMatrix};

#[derive(Debug, Error)]
pub enum IrtError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{vector} has length {got}, expected {expected}")]
    LengthMismatch {
        vector: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error("need at least 2 persons to fit, got {0}")]
    TooFewPersons(usize),
    #[error(
        "cannot fit due to lack of variability: {mixed} item(s) have both correct and \
         incorrect responses, need at least 2"
    )]
    NoVariability { mixed: usize },
    #[error("item `{0}` has no response variability (all observed responses {1})")]
    ExtremeItem(String, &'static str),
    #[error("person `{0}` has no observed responses on the fitted items")]
    UncoveredPerson(String),
    #[error("no items in common between the parameters and the matrix")]
    NoCoveredItems,
}

/// Probability of a correct response for a person of the given ability on an
/// item of the given difficulty: `1 / (1 + exp(-(ability - difficulty)))`.
/// Strictly increasing in ability, strictly decreasing in difficulty.
pub fn prob_correct(ability: f64, difficulty: f64) -> Result<f64, IrtError> {
    if !ability.is_finite() {
        return Err(IrtError::NonFinite("ability"));
    }
    if !difficulty.is_finite() {
        return Err(IrtError::NonFinite("difficulty"));
    }
    Ok(sigmoid(ability - difficulty))
}

/// Numerically stable logistic function.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dims(
    matrix: &ResponseMatrix,
    abilities: &[f64],
    difficulties: &[f64],
) -> Result<(), IrtError> {
    if abilities.len() != matrix.n_persons() {
        return Err(IrtError::LengthMismatch {
            vector: "abilities",
            got: abilities.len(),
            expected: matrix.n_persons(),
        });
    }
    if difficulties.len() != matrix.n_items() {
        return Err(IrtError::LengthMismatch {
            vector: "difficulties",
            got: difficulties.len(),
            expected: matrix.n_items(),
        });
    }
    if abilities.iter().any(|v| !v.is_finite()) {
        return Err(IrtError::NonFinite("ability"));
    }
    if difficulties.iter().any(|v| !v.is_finite()) {
        return Err(IrtError::NonFinite("difficulty"));
    }
    Ok(())
}

/// Joint Bernoulli log-likelihood of the observed cells given fixed person
/// abilities and item difficulties. Missing cells contribute nothing.
pub fn joint_log_likelihood(
    matrix: &ResponseMatrix,
    abilities: &[f64],
    difficulties: &[f64],
) -> Result<f64, IrtError> {
    check_dims(matrix, abilities, difficulties)?;
    let mut ll = 0.0;
    for i in 0..matrix.n_persons() {
        for j in 0..matrix.n_items() {
            match matrix.cell(i, j) {
                Cell::Correct => ll += sigmoid(abilities[i] - difficulties[j]).ln(),
                Cell::Incorrect => ll += sigmoid(difficulties[j] - abilities[i]).ln(),
                Cell::Missing => {}
            }
        }
    }
    Ok(ll)
}

/// Gradient of [`joint_log_likelihood`] with respect to each difficulty:
/// `d ll / d b_j = sum_i (p_ij - x_ij)` over observed cells.
pub fn joint_log_likelihood_grad(
    matrix: &ResponseMatrix,
    abilities: &[f64],
    difficulties: &[f64],
) -> Result<Vec<f64>, IrtError> {
    check_dims(matrix, abilities, difficulties)?;
    let mut grad = vec![0.0; matrix.n_items()];
    for i in 0..matrix.n_persons() {
        for (j, g) in grad.iter_mut().enumerate() {
            let x = match matrix.cell(i, j) {
                Cell::Correct => 1.0,
                Cell::Incorrect => 0.0,
                Cell::Missing => continue,
            };
            *g += sigmoid(abilities[i] - difficulties[j]) - x;
        }
    }
    Ok(grad)
}
