//! The alignment metric - Pearson correlation between two groups' fitted
//! item difficulties - plus the positive (human resample) and negative
//! (random guesser) control procedures that bound its attainable range.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::irt::{fit_1pl, FitConfig, ItemParameters};
use crate::response::{random_control, ResponseMatrix};
use crate::rng;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 paired values, got {0}")]
    TooFewValues(usize),
    #[error("{0} vector has zero variance")]
    ZeroVariance(&'static str),
    #[error("non-finite value in {0} vector")]
    NonFinite(&'static str),
    #[error("only {0} item(s) shared between the two parameter sets, need at least 3")]
    TooFewSharedItems(usize),
    #[error("pool is missing reference item `{0}`")]
    MissingReferenceItem(String),
    #[error("all {0} replicates failed to produce an alignment")]
    AllReplicatesFailed(usize),
    #[error(transparent)]
    Response(#[from] crate::response::ResponseError),
}

/// Product-moment correlation of two equal-length vectors.
///
/// Symmetric in its arguments down to the last bit: the accumulation order is
/// the index order either way, and IEEE multiplication commutes.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AlignmentError> {
    if x.len() != y.len() {
        return Err(AlignmentError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AlignmentError::TooFewValues(x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AlignmentError::NonFinite("first"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(AlignmentError::NonFinite("second"));
    }
    let n = x.len() as f64;
    let mean_x: f64 = x.iter().sum::<f64>() / n;
    let mean_y: f64 = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AlignmentError::ZeroVariance("first"));
    }
    if syy == 0.0 {
        return Err(AlignmentError::ZeroVariance("second"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value for a correlation via the t statistic with n-2 degrees
/// of freedom.
fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1 by construction");
    (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedItem {
    pub id: String,
    pub reason: String,
}

/// The alignment between two fitted difficulty vectors, with bookkeeping for
/// which items were compared and which fell outside the intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub correlation: f64,
    pub n_items: usize,
    pub compared_item_ids: Vec<String>,
    pub excluded_item_ids: Vec<ExcludedItem>,
    pub p_value: Option<f64>,
}

/// Correlate two difficulty vectors over their item-id intersection.
///
/// The intersection is taken in lexicographic id order, which makes the
/// result exactly symmetric in its two arguments. Items present on only one
/// side are listed as excluded; together with the compared ids they cover
/// the union of both inputs.
pub fn psychometric_alignment(
    a: &ItemParameters,
    b: &ItemParameters,
) -> Result<AlignmentResult, AlignmentError> {
    let mut shared: Vec<(&str, f64, f64)> = a
        .entries
        .iter()
        .filter_map(|ea| {
            b.difficulty_of(&ea.item_id)
                .map(|bb| (ea.item_id.as_str(), ea.difficulty, bb))
        })
        .collect();
    shared.sort_by(|l, r| l.0.cmp(r.0));
    if shared.len() < 3 {
        return Err(AlignmentError::TooFewSharedItems(shared.len()));
    }

    let mut excluded: Vec<ExcludedItem> = Vec::new();
    for ea in &a.entries {
        if b.difficulty_of(&ea.item_id).is_none() {
            excluded.push(ExcludedItem {
                id: ea.item_id.clone(),
                reason: "absent_from_second".into(),
            });
        }
    }
    for eb in &b.entries {
        if a.difficulty_of(&eb.item_id).is_none() {
            excluded.push(ExcludedItem {
                id: eb.item_id.clone(),
                reason: "absent_from_first".into(),
            });
        }
    }
    excluded.sort_by(|l, r| l.id.cmp(&r.id));

    let xs: Vec<f64> = shared.iter().map(|&(_, x, _)| x).collect();
    let ys: Vec<f64> = shared.iter().map(|&(_, _, y)| y).collect();
    let correlation = pearson(&xs, &ys)?;
    Ok(AlignmentResult {
        correlation,
        n_items: shared.len(),
        compared_item_ids: shared.iter().map(|&(id, _, _)| id.to_string()).collect(),
        excluded_item_ids: excluded,
        p_value: Some(correlation_p_value(correlation, shared.len())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLabel {
    HumanPositive,
    RandomNegative,
    Custom,
}

/// One replicate of a control run: either an alignment or the error that
/// prevented one. Failed replicates are excluded from the mean/std but never
/// hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReplicate {
    pub replicate: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub label: ControlLabel,
    pub per_replicate: Vec<ControlReplicate>,
    pub mean: f64,
    /// Sample (n-1) standard deviation of the successful replicates.
    pub std: f64,
    pub failures: usize,
}

impl ControlReport {
    fn from_outcomes(
        label: ControlLabel,
        outcomes: Vec<Result<AlignmentResult, String>>,
    ) -> Result<Self, AlignmentError> {
        let total = outcomes.len();
        let mut per_replicate = Vec::with_capacity(total);
        let mut correlations = Vec::new();
        for (replicate, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(alignment) => {
                    correlations.push(alignment.correlation);
                    per_replicate.push(ControlReplicate {
                        replicate,
                        alignment: Some(alignment),
                        error: None,
                    });
                }
                Err(error) => per_replicate.push(ControlReplicate {
                    replicate,
                    alignment: None,
                    error: Some(error),
                }),
            }
        }
        if correlations.is_empty() {
            return Err(AlignmentError::AllReplicatesFailed(total));
        }
        let (mean, std) = mean_and_sample_std(&correlations);
        Ok(ControlReport {
            label,
            per_replicate,
            mean,
            std,
            failures: total - correlations.len(),
        })
    }

    pub fn successful_correlations(&self) -> Vec<f64> {
        self.per_replicate
            .iter()
            .filter_map(|r| r.alignment.as_ref().map(|a| a.correlation))
            .collect()
    }

    /// CSV summary: `replicate,correlation,p_value,n_items`. Failed
    /// replicates emit empty value fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,correlation,p_value,n_items\n");
        for rep in &self.per_replicate {
            match &rep.alignment {
                Some(a) => {
                    let p = a
                        .p_value
                        .map(|p| format!("{p}"))
                        .unwrap_or_default();
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        rep.replicate, a.correlation, p, a.n_items
                    ));
                }
                None => out.push_str(&format!("{},,,\n", rep.replicate)),
            }
        }
        out
    }
}

pub(crate) fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Ceiling estimate: repeatedly subsample `subset_size` persons from a pool
/// drawn from the same population as the reference, fit each subsample, and
/// align against the reference parameters. Replicates run concurrently with
/// seeds derived per index, so the report is schedule-independent.
pub fn human_positive_control(
    pool: &ResponseMatrix,
    reference: &ItemParameters,
    n_subsets: usize,
    subset_size: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<ControlReport, AlignmentError> {
    let reference_items: Vec<String> = reference
        .entries
        .iter()
        .map(|e| e.item_id.clone())
        .collect();
    for id in &reference_items {
        if pool.item_position(id).is_none() {
            return Err(AlignmentError::MissingReferenceItem(id.clone()));
        }
    }
    let restricted = pool.restrict_items(&reference_items)?;

    let outcomes: Vec<Result<AlignmentResult, String>> = (0..n_subsets)
        .into_par_iter()
        .map(|r| {
            let subset_seed = rng::child_seed(seed, "human_control/subset", r as u64);
            let subset = restricted
                .sample_subpopulation(subset_size, subset_seed)
                .map_err(|e| e.to_string())?;
            let fit = fit_1pl(&subset, config).map_err(|e| e.to_string())?;
            psychometric_alignment(reference, &fit.parameters).map_err(|e| e.to_string())
        })
        .collect();
    ControlReport::from_outcomes(ControlLabel::HumanPositive, outcomes)
}

/// Floor estimate: fit matrices of pure chance responders and align them
/// against the reference parameters.
#[allow(clippy::too_many_arguments)]
pub fn random_negative_control(
    reference: &ItemParameters,
    item_ids: &[String],
    n_persons: usize,
    p_correct: f64,
    n_replicates: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<ControlReport, AlignmentError> {
    let outcomes: Vec<Result<AlignmentResult, String>> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let matrix_seed = rng::child_seed(seed, "random_control/matrix", r as u64);
            let matrix =
                random_control(n_persons, item_ids, p_correct, matrix_seed).map_err(|e| e.to_string())?;
            let fit = fit_1pl(&matrix, config).map_err(|e| e.to_string())?;
            psychometric_alignment(reference, &fit.parameters).map_err(|e| e.to_string())
        })
        .collect();
    ControlReport::from_outcomes(ControlLabel::RandomNegative, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_correlate_perfectly() {
        let x = [0.0, 1.5, -2.0, 0.3];
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn negated_vector_flips_the_sign() {
        let x = [0.0, 1.5, -2.0, 0.3];
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &y).unwrap(), -1.0);
    }

    #[test]
    fn hand_computed_example() {
        // x=(0,1,2), y=(0,0,2): r = sqrt(3)/2.
        let r = pearson(&[0.0, 1.0, 2.0], &[0.0, 0.0, 2.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]),
            Err(AlignmentError::ZeroVariance("first"))
        ));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn alignment_of_identical_parameters_is_one() {
        let p = ItemParameters::from_difficulties([("a", 0.1), ("b", -0.7), ("c", 1.3)]);
        let result = psychometric_alignment(&p, &p).unwrap();
        assert_eq!(result.correlation, 1.0);
        assert!(result.excluded_item_ids.is_empty());
        assert_eq!(result.n_items, 3);
        assert_eq!(result.p_value, Some(0.0));
    }

    #[test]
    fn alignment_is_exactly_symmetric() {
        let a = ItemParameters::from_difficulties([
            ("q3", 0.11),
            ("q1", -0.73),
            ("q2", 1.31),
            ("q4", 0.42),
        ]);
        let b = ItemParameters::from_difficulties([
            ("q1", -0.55),
            ("q2", 1.02),
            ("q4", 0.40),
            ("q3", 0.3),
        ]);
        let ab = psychometric_alignment(&a, &b).unwrap();
        let ba = psychometric_alignment(&b, &a).unwrap();
        assert_eq!(ab.correlation, ba.correlation);
        assert_eq!(ab.compared_item_ids, ba.compared_item_ids);
    }

    #[test]
    fn excluded_and_compared_partition_the_union() {
        let a = ItemParameters::from_difficulties([
            ("q1", 0.0),
            ("q2", 1.0),
            ("q3", -1.0),
            ("only_a", 2.0),
        ]);
        let b = ItemParameters::from_difficulties([
            ("q1", 0.1),
            ("q2", 0.9),
            ("q3", -1.2),
            ("only_b", -2.0),
        ]);
        let result = psychometric_alignment(&a, &b).unwrap();
        assert_eq!(result.compared_item_ids, ["q1", "q2", "q3"]);
        let excluded: Vec<&str> = result
            .excluded_item_ids
            .iter()
            .map(|e| e.id.as_str())
            .collect();
        assert_eq!(excluded, ["only_a", "only_b"]);
        assert_eq!(
            result.compared_item_ids.len() + result.excluded_item_ids.len(),
            5
        );
    }

    #[test]
    fn small_intersection_is_an_error() {
        let a = ItemParameters::from_difficulties([("q1", 0.0), ("q2", 1.0)]);
        let b = ItemParameters::from_difficulties([("q1", 0.1), ("q2", 0.9)]);
        assert!(matches!(
            psychometric_alignment(&a, &b),
            Err(AlignmentError::TooFewSharedItems(2))
        ));
    }

    #[test]
    fn p_value_matches_t_distribution_tail() {
        // r = 0 should give p = 1, strong r should give small p.
        assert!((correlation_p_value(0.0, 50) - 1.0).abs() < 1e-12);
        assert!(correlation_p_value(0.9, 50) < 1e-10);
        // Known value: r = 0.5, n = 10 -> t = 1.633, p ~ 0.1404.
        let p = correlation_p_value(0.5, 10);
        assert!((p - 0.1405).abs() < 5e-3, "p {p}");
    }

    #[test]
    fn control_report_statistics_match_replicates() {
        let outcomes = vec![
            Ok(AlignmentResult {
                correlation: 0.8,
                n_items: 5,
                compared_item_ids: vec![],
                excluded_item_ids: vec![],
                p_value: Some(0.01),
            }),
            Err("fit failed".to_string()),
            Ok(AlignmentResult {
                correlation: 0.6,
                n_items: 5,
                compared_item_ids: vec![],
                excluded_item_ids: vec![],
                p_value: Some(0.05),
            }),
        ];
        let report = ControlReport::from_outcomes(ControlLabel::Custom, outcomes).unwrap();
        assert_eq!(report.failures, 1);
        assert!((report.mean - 0.7).abs() < 1e-12);
        let expected_std = (0.02f64 / 1.0).sqrt();
        assert!((report.std - expected_std).abs() < 1e-12);
        let csv = report.to_csv();
        assert!(csv.starts_with("replicate,correlation,p_value,n_items\n"));
        assert!(csv.contains("1,,,\n"));
    }

    #[test]
    fn all_failures_is_an_error() {
        let outcomes: Vec<Result<AlignmentResult, String>> =
            vec![Err("a".into()), Err("b".into())];
        assert!(matches!(
            ControlReport::from_outcomes(ControlLabel::Custom, outcomes),
            Err(AlignmentError::AllReplicatesFailed(2))
        ));
    }
}
