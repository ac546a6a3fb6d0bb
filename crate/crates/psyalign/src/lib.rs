//! Measure how similarly two populations of test takers perceive item
//! difficulty.
//!
//! The core workflow: collect binary (correct/incorrect) responses from two
//! populations on a shared set of items, fit a one-parameter logistic (Rasch)
//! model to each response matrix by marginal maximum likelihood, and take the
//! Pearson correlation between the two fitted difficulty vectors. A high
//! correlation means the items function the same way in both groups; a low
//! one flags population-level differences that raw accuracy comparisons miss.
//!
//! Modules:
//! - [`response`]: response-matrix data model, CSV/JSONL ingestion, summary
//!   statistics, and population transforms (shuffle, subsample, aggregate,
//!   random baselines).
//! - [`irt`]: the 1PL model itself - response probabilities, likelihoods,
//!   response simulation, and the MML-EM difficulty estimator.
//! - [`alignment`]: the difficulty-correlation metric plus positive (human
//!   resample) and negative (random guesser) control procedures.
//! - [`simlab`]: seeded simulation studies that stress the metric under known
//!   ability distributions and injected differential item functioning.
//! - [`collector`]: persona-prompt construction, answer parsing, and
//!   assembly of language-model responses into a response matrix.
//! - [`rng`]: derivation of independent, labelled random streams from a
//!   single 64-bit master seed.
//!
//! Every seeded operation is a pure function of its inputs and the seed;
//! parallel execution never changes results.

pub mod alignment;
pub mod collector;
pub mod irt;
pub mod response;
pub mod rng;
pub mod simlab;
