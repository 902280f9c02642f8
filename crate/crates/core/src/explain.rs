//! Shapley-value attribution for the trained classifier, per-district
//! feature rankings, cross-district inverse-coded scores, and the
//! per-building composite the forecaster consumes.
//!
//! Attribution works in encoded-index space: a feature's value is switched
//! from the baseline record's index to the building's index and the change
//! in model output is averaged over feature orderings. With eight or fewer
//! features the estimator enumerates all subsets exactly; otherwise it
//! samples permutations. Either way the per-building sum of attributions
//! telescopes to `f(x) − f(baseline)` (efficiency) by construction.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mhhcnn::TrainedModel;
use crate::schema::{FeatureKind, FeatureSchema};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("n_permutations must be at least 1")]
    NoPermutations,
    #[error("scorer reports {scorer} features, inputs have {inputs}")]
    FeatureMismatch { scorer: usize, inputs: usize },
    #[error("baseline has {got} features, expected {expected}")]
    BaselineWidth { got: usize, expected: usize },
    #[error("unknown building `{0}`")]
    UnknownBuilding(String),
    #[error("district `{0}` has no buildings in the estimate")]
    EmptyDistrict(String),
    #[error("{got} district labels for {expected} buildings")]
    DistrictsMismatch { got: usize, expected: usize },
    #[error("scorer failed: {0}")]
    Scorer(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, ExplainError>;

/// Anything that maps an encoded record to a scalar score.
pub trait Scorer {
    fn n_features(&self) -> usize;
    fn score(&self, indices: &[usize]) -> Result<f64>;
}

impl Scorer for TrainedModel {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn score(&self, indices: &[usize]) -> Result<f64> {
        self.model
            .predict_encoded(indices)
            .map_err(|e| ExplainError::Scorer(e.to_string()))
    }
}

/// Scorer from a plain function, for surrogate models in tests and oracles.
pub struct FnScorer<F: Fn(&[usize]) -> f64> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[usize]) -> f64> FnScorer<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F: Fn(&[usize]) -> f64> Scorer for FnScorer<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score(&self, indices: &[usize]) -> Result<f64> {
        Ok((self.f)(indices))
    }
}

/// Estimator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub n_permutations: usize,
    /// Feature counts up to this use exact subset enumeration.
    pub exact_max_features: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            n_permutations: 500,
            exact_max_features: 8,
            seed: 0,
        }
    }
}

/// Per-(building, feature) attributions with their baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub building_ids: Vec<String>,
    pub feature_ids: Vec<String>,
    /// `phi[b][f]` is building b's attribution for feature f.
    pub phi: Vec<Vec<f64>>,
    pub baseline: Vec<usize>,
    pub baseline_output: f64,
    /// Model output per building.
    pub outputs: Vec<f64>,
    pub n_permutations: usize,
    pub exact: bool,
    pub seed: u64,
}

impl ShapleyEstimate {
    /// |Σ_f φ(b, f) − (f(x_b) − f(baseline))| for one building.
    pub fn efficiency_gap(&self, b: usize) -> f64 {
        let sum: f64 = self.phi[b].iter().sum();
        (sum - (self.outputs[b] - self.baseline_output)).abs()
    }

    fn building_index(&self, building_id: &str) -> Result<usize> {
        self.building_ids
            .iter()
            .position(|b| b == building_id)
            .ok_or_else(|| ExplainError::UnknownBuilding(building_id.to_string()))
    }
}

/// The default Shapley background: per-feature modal index for categorical
/// features, median assigned bin for continuous ones, over the training
/// inputs.
pub fn default_baseline(schema: &FeatureSchema, inputs: &[Vec<usize>]) -> Vec<usize> {
    let n_features = schema.len();
    let mut baseline = Vec::with_capacity(n_features);
    for (pos, spec) in schema.features().iter().enumerate() {
        let column: Vec<usize> = inputs.iter().map(|row| row[pos]).collect();
        let index = match spec.kind {
            FeatureKind::Categorical { .. } => {
                let mut counts: HashMap<usize, usize> = HashMap::new();
                for &v in &column {
                    *counts.entry(v).or_insert(0) += 1;
                }
                counts
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(v, _)| v)
                    .unwrap_or(0)
            }
            FeatureKind::Continuous { .. } => {
                let mut sorted = column.clone();
                sorted.sort_unstable();
                if sorted.is_empty() {
                    0
                } else {
                    sorted[(sorted.len() - 1) / 2]
                }
            }
        };
        baseline.push(index);
    }
    baseline
}

/// Estimates per-feature attributions for every building.
///
/// Switches features from the baseline value to the building's value along
/// feature orderings; φ is the mean marginal output change. Deterministic
/// for a given seed, with per-building derived seed streams.
pub fn estimate_shapley<S: Scorer>(
    scorer: &S,
    inputs: &[Vec<usize>],
    building_ids: &[String],
    feature_ids: &[String],
    baseline: Vec<usize>,
    config: &ShapleyConfig,
) -> Result<ShapleyEstimate> {
    if config.n_permutations == 0 {
        return Err(ExplainError::NoPermutations);
    }
    let d = scorer.n_features();
    if feature_ids.len() != d {
        return Err(ExplainError::FeatureMismatch {
            scorer: d,
            inputs: feature_ids.len(),
        });
    }
    if baseline.len() != d {
        return Err(ExplainError::BaselineWidth {
            got: baseline.len(),
            expected: d,
        });
    }
    for row in inputs {
        if row.len() != d {
            return Err(ExplainError::FeatureMismatch {
                scorer: d,
                inputs: row.len(),
            });
        }
    }
    let baseline_output = scorer.score(&baseline)?;
    let exact = d <= config.exact_max_features;

    let mut phi = Vec::with_capacity(inputs.len());
    let mut outputs = Vec::with_capacity(inputs.len());
    for (b, x) in inputs.iter().enumerate() {
        let attributions = if exact {
            exact_attributions(scorer, x, &baseline)?
        } else {
            sampled_attributions(scorer, x, &baseline, baseline_output, b, config)?
        };
        outputs.push(scorer.score(x)?);
        phi.push(attributions);
    }
    Ok(ShapleyEstimate {
        building_ids: building_ids.to_vec(),
        feature_ids: feature_ids.to_vec(),
        phi,
        baseline,
        baseline_output,
        outputs,
        n_permutations: if exact { 0 } else { config.n_permutations },
        exact,
        seed: config.seed,
    })
}

/// Exact Shapley values by subset enumeration (2^d scorer calls).
fn exact_attributions<S: Scorer>(
    scorer: &S,
    x: &[usize],
    baseline: &[usize],
) -> Result<Vec<f64>> {
    let d = x.len();
    let n_masks = 1usize << d;
    let mut value = vec![0.0; n_masks];
    let mut z = baseline.to_vec();
    for mask in 0..n_masks {
        for (j, slot) in z.iter_mut().enumerate() {
            *slot = if mask & (1 << j) != 0 { x[j] } else { baseline[j] };
        }
        value[mask] = scorer.score(&z)?;
    }
    // weight for |S| = s: s!(d-1-s)!/d!
    let mut factorial = vec![1.0; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; d];
    for (j, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in 0..n_masks {
            if mask & bit != 0 {
                continue;
            }
            let s = (mask as u32).count_ones() as usize;
            let w = factorial[s] * factorial[d - 1 - s] / factorial[d];
            *slot += w * (value[mask | bit] - value[mask]);
        }
    }
    Ok(phi)
}

/// Permutation-sampling estimate; marginals along each sampled order
/// telescope, so efficiency holds exactly for any permutation count.
fn sampled_attributions<S: Scorer>(
    scorer: &S,
    x: &[usize],
    baseline: &[usize],
    baseline_output: f64,
    building_index: usize,
    config: &ShapleyConfig,
) -> Result<Vec<f64>> {
    let d = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(
        config
            .seed
            .wrapping_add((building_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    let mut phi = vec![0.0; d];
    let mut order: Vec<usize> = (0..d).collect();
    let mut z = baseline.to_vec();
    for _ in 0..config.n_permutations {
        order.shuffle(&mut rng);
        let mut prev = baseline_output;
        for &j in &order {
            if x[j] == baseline[j] {
                // switching changes nothing; marginal is exactly zero
                continue;
            }
            z[j] = x[j];
            let cur = scorer.score(&z)?;
            phi[j] += cur - prev;
            prev = cur;
        }
        z.copy_from_slice(baseline);
    }
    for slot in &mut phi {
        *slot /= config.n_permutations as f64;
    }
    Ok(phi)
}

/// Features of one district ordered by importance (mean |φ| over the
/// district's buildings, descending; rank 1 first). Ties break toward the
/// lexicographically smaller feature id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub district_id: String,
    pub ordered_features: Vec<String>,
    pub mean_abs_phi: Vec<f64>,
}

impl FeatureRanking {
    /// 1-based rank of a feature, if present.
    pub fn rank_of(&self, feature_id: &str) -> Option<usize> {
        self.ordered_features
            .iter()
            .position(|f| f == feature_id)
            .map(|p| p + 1)
    }
}

/// Ranks features for one district. `districts` pairs with
/// `estimate.building_ids`.
pub fn rank_features(
    estimate: &ShapleyEstimate,
    districts: &[String],
    district: &str,
) -> Result<FeatureRanking> {
    if districts.len() != estimate.building_ids.len() {
        return Err(ExplainError::DistrictsMismatch {
            got: districts.len(),
            expected: estimate.building_ids.len(),
        });
    }
    let members: Vec<usize> = districts
        .iter()
        .enumerate()
        .filter(|(_, d)| d.as_str() == district)
        .map(|(i, _)| i)
        .collect();
    if members.is_empty() {
        return Err(ExplainError::EmptyDistrict(district.to_string()));
    }
    let d = estimate.feature_ids.len();
    let mut importance: Vec<(usize, f64)> = (0..d)
        .map(|f| {
            let mean = members
                .iter()
                .map(|&b| estimate.phi[b][f].abs())
                .sum::<f64>()
                / members.len() as f64;
            (f, mean)
        })
        .collect();
    importance.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite attributions")
            .then_with(|| estimate.feature_ids[a.0].cmp(&estimate.feature_ids[b.0]))
    });
    Ok(FeatureRanking {
        district_id: district.to_string(),
        ordered_features: importance
            .iter()
            .map(|(f, _)| estimate.feature_ids[*f].clone())
            .collect(),
        mean_abs_phi: importance.iter().map(|(_, m)| *m).collect(),
    })
}

/// Inverse-coded score of one feature's per-district ranks:
/// `Σ_d max(0, (top_k + 1) − rank_d)`, with absent ranks contributing 0.
pub fn inverse_coded_score(ranks: &[Option<usize>], top_k: usize) -> u32 {
    ranks
        .iter()
        .map(|r| match r {
            Some(rank) if *rank <= top_k => (top_k + 1 - rank) as u32,
            _ => 0,
        })
        .sum()
}

/// One feature's row in the cross-district table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeScoreRow {
    pub feature_id: String,
    /// Rank per district (same order as the table's `district_ids`); `None`
    /// when the feature is outside that district's top k.
    pub ranks: Vec<Option<usize>>,
    pub total: u32,
}

/// Cross-district inverse-coded rank totals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeScoreTable {
    pub district_ids: Vec<String>,
    pub rows: Vec<CompositeScoreRow>,
    pub top_k: usize,
}

/// Default rank depth counted by the inverse coding.
pub const DEFAULT_TOP_K: usize = 20;

/// Aggregates per-district rankings into inverse-coded totals, sorted by
/// total descending (ties toward the smaller feature id).
pub fn inverse_rank_scores(rankings: &[FeatureRanking], top_k: usize) -> CompositeScoreTable {
    let district_ids: Vec<String> = rankings.iter().map(|r| r.district_id.clone()).collect();
    let mut features: Vec<String> = rankings
        .iter()
        .flat_map(|r| r.ordered_features.iter().cloned())
        .collect();
    features.sort();
    features.dedup();

    let mut rows: Vec<CompositeScoreRow> = features
        .into_iter()
        .map(|feature_id| {
            let ranks: Vec<Option<usize>> = rankings
                .iter()
                .map(|r| r.rank_of(&feature_id).filter(|&rank| rank <= top_k))
                .collect();
            let total = inverse_coded_score(&ranks, top_k);
            CompositeScoreRow {
                feature_id,
                ranks,
                total,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.feature_id.cmp(&b.feature_id)));
    CompositeScoreTable {
        district_ids,
        rows,
        top_k,
    }
}

/// A building's composite attribution: the sum of its per-feature values,
/// which by efficiency equals `f(x) − f(baseline)` up to estimator error.
pub fn building_composite(estimate: &ShapleyEstimate, building_id: &str) -> Result<f64> {
    let b = estimate.building_index(building_id)?;
    Ok(estimate.phi[b].iter().sum())
}

/// All buildings' composites, in estimate order.
pub fn all_composites(estimate: &ShapleyEstimate) -> Vec<(String, f64)> {
    estimate
        .building_ids
        .iter()
        .enumerate()
        .map(|(b, id)| (id.clone(), estimate.phi[b].iter().sum()))
        .collect()
}

/// Writes `building_id,feature_id,phi` rows.
pub fn write_shapley_csv(estimate: &ShapleyEstimate, path: &Path) -> Result<()> {
    let path_str = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|source| ExplainError::Csv {
        path: path_str.clone(),
        source,
    })?;
    let csv_err = |source| ExplainError::Csv {
        path: path_str.clone(),
        source,
    };
    w.write_record(["building_id", "feature_id", "phi"])
        .map_err(csv_err)?;
    for (b, building) in estimate.building_ids.iter().enumerate() {
        for (f, feature) in estimate.feature_ids.iter().enumerate() {
            w.write_record([building, feature, &format!("{}", estimate.phi[b][f])])
                .map_err(|source| ExplainError::Csv {
                    path: path_str.clone(),
                    source,
                })?;
        }
    }
    w.flush().map_err(|source| ExplainError::Io {
        path: path_str,
        source,
    })
}

/// Reads per-building composites back from a `shapley.csv`.
pub fn read_composites_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let path_str = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| ExplainError::Csv {
        path: path_str.clone(),
        source,
    })?;
    let mut totals: Vec<(String, f64)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|source| ExplainError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let building = row.get(0).unwrap_or_default().to_string();
        let phi: f64 = row.get(2).unwrap_or_default().parse().unwrap_or(0.0);
        match index.get(&building) {
            Some(&i) => totals[i].1 += phi,
            None => {
                index.insert(building.clone(), totals.len());
                totals.push((building, phi));
            }
        }
    }
    Ok(totals)
}

/// Writes `rank,feature_id,mean_abs_phi` rows for one district.
pub fn write_ranking_csv(ranking: &FeatureRanking, path: &Path) -> Result<()> {
    let path_str = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|source| ExplainError::Csv {
        path: path_str.clone(),
        source,
    })?;
    w.write_record(["rank", "feature_id", "mean_abs_phi"])
        .map_err(|source| ExplainError::Csv {
            path: path_str.clone(),
            source,
        })?;
    for (i, (feature, mean)) in ranking
        .ordered_features
        .iter()
        .zip(&ranking.mean_abs_phi)
        .enumerate()
    {
        w.write_record([&(i + 1).to_string(), feature, &format!("{mean}")])
            .map_err(|source| ExplainError::Csv {
                path: path_str.clone(),
                source,
            })?;
    }
    w.flush().map_err(|source| ExplainError::Io {
        path: path_str,
        source,
    })
}

/// Writes `feature_id,rank_<district>...,total` rows.
pub fn write_composite_scores_csv(table: &CompositeScoreTable, path: &Path) -> Result<()> {
    let path_str = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|source| ExplainError::Csv {
        path: path_str.clone(),
        source,
    })?;
    let mut header = vec!["feature_id".to_string()];
    header.extend(table.district_ids.iter().map(|d| format!("rank_{d}")));
    header.push("total".into());
    w.write_record(&header).map_err(|source| ExplainError::Csv {
        path: path_str.clone(),
        source,
    })?;
    for row in &table.rows {
        let mut record = vec![row.feature_id.clone()];
        record.extend(
            row.ranks
                .iter()
                .map(|r| r.map_or(String::new(), |v| v.to_string())),
        );
        record.push(row.total.to_string());
        w.write_record(&record).map_err(|source| ExplainError::Csv {
            path: path_str.clone(),
            source,
        })?;
    }
    w.flush().map_err(|source| ExplainError::Io {
        path: path_str,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_scorer() -> FnScorer<impl Fn(&[usize]) -> f64> {
        FnScorer::new(2, |x: &[usize]| 2.0 * x[0] as f64 + 3.0 * x[1] as f64)
    }

    fn names(n: usize) -> (Vec<String>, Vec<String>) {
        (
            (0..n).map(|i| format!("b{i}")).collect(),
            (0..n).map(|i| format!("f{i}")).collect(),
        )
    }

    #[test]
    fn constant_model_gets_zero_attributions() {
        let scorer = FnScorer::new(3, |_: &[usize]| 0.42);
        let inputs = vec![vec![1, 2, 0], vec![0, 0, 1]];
        let (buildings, features) = (
            vec!["a".to_string(), "b".to_string()],
            vec!["f0".into(), "f1".into(), "f2".into()],
        );
        let est = estimate_shapley(
            &scorer,
            &inputs,
            &buildings,
            &features,
            vec![0, 0, 0],
            &ShapleyConfig::default(),
        )
        .unwrap();
        for row in &est.phi {
            assert!(row.iter().all(|&p| p == 0.0));
        }
        assert_eq!(building_composite(&est, "a").unwrap(), 0.0);
    }

    #[test]
    fn linear_surrogate_matches_closed_form_exactly() {
        let (buildings, features) = names(2);
        let for_mode = |exact_max: usize| {
            estimate_shapley(
                &linear_scorer(),
                &[vec![1, 1]],
                &buildings[..1].to_vec(),
                &features,
                vec![0, 0],
                &ShapleyConfig {
                    exact_max_features: exact_max,
                    n_permutations: 50,
                    seed: 7,
                },
            )
            .unwrap()
        };
        // exact enumeration
        let exact = for_mode(8);
        assert!(exact.exact);
        assert_eq!(exact.phi[0], vec![2.0, 3.0]);
        // sampling: linear marginals are order-independent, so it is exact too
        let sampled = for_mode(0);
        assert!(!sampled.exact);
        assert_eq!(sampled.phi[0], vec![2.0, 3.0]);
        assert_eq!(building_composite(&exact, "b0").unwrap(), 5.0);
    }

    #[test]
    fn severed_feature_gets_zero() {
        // feature 1 never reaches the output
        let scorer = FnScorer::new(3, |x: &[usize]| (x[0] + 2 * x[2]) as f64);
        let (buildings, features) = names(3);
        let inputs = vec![vec![1, 1, 1], vec![2, 3, 0]];
        for exact_max in [8, 0] {
            let est = estimate_shapley(
                &scorer,
                &inputs,
                &buildings[..2].to_vec(),
                &features,
                vec![0, 0, 0],
                &ShapleyConfig {
                    exact_max_features: exact_max,
                    n_permutations: 40,
                    seed: 3,
                },
            )
            .unwrap();
            for row in &est.phi {
                assert_eq!(row[1], 0.0);
            }
        }
    }

    #[test]
    fn efficiency_holds_exactly_in_both_modes() {
        // nonlinear scorer with interactions
        let scorer = FnScorer::new(4, |x: &[usize]| {
            let v: Vec<f64> = x.iter().map(|&i| i as f64).collect();
            (v[0] * v[1] - 0.5 * v[2]).tanh() + 0.3 * v[3] * v[0]
        });
        let (buildings, features) = names(4);
        let inputs = vec![vec![1, 2, 1, 0], vec![2, 0, 3, 1]];
        for (exact_max, n_perm) in [(8, 1), (0, 200)] {
            let est = estimate_shapley(
                &scorer,
                &inputs,
                &buildings[..2].to_vec(),
                &features,
                vec![0, 1, 0, 0],
                &ShapleyConfig {
                    exact_max_features: exact_max,
                    n_permutations: n_perm,
                    seed: 11,
                },
            )
            .unwrap();
            for b in 0..2 {
                assert!(est.efficiency_gap(b) < 1e-12, "{}", est.efficiency_gap(b));
            }
        }
    }

    #[test]
    fn sampling_converges_to_enumeration() {
        let scorer = FnScorer::new(4, |x: &[usize]| {
            let v: Vec<f64> = x.iter().map(|&i| i as f64).collect();
            (v[0] + 2.0 * v[1]).tanh() * (1.0 + v[2]) - v[3] * v[1]
        });
        let (buildings, features) = names(4);
        let inputs = vec![vec![2, 1, 1, 2]];
        let exact = estimate_shapley(
            &scorer,
            &inputs,
            &buildings[..1].to_vec(),
            &features,
            vec![0, 0, 0, 0],
            &ShapleyConfig {
                exact_max_features: 8,
                n_permutations: 1,
                seed: 5,
            },
        )
        .unwrap();
        let sampled = estimate_shapley(
            &scorer,
            &inputs,
            &buildings[..1].to_vec(),
            &features,
            vec![0, 0, 0, 0],
            &ShapleyConfig {
                exact_max_features: 0,
                n_permutations: 4000,
                seed: 5,
            },
        )
        .unwrap();
        for f in 0..4 {
            assert!(
                (exact.phi[0][f] - sampled.phi[0][f]).abs() < 0.05,
                "feature {f}: {} vs {}",
                exact.phi[0][f],
                sampled.phi[0][f]
            );
        }
    }

    #[test]
    fn symmetric_features_get_equal_attribution() {
        // two features enter through the same function of their values
        let scorer = FnScorer::new(3, |x: &[usize]| {
            ((x[0] + x[1]) as f64 * 0.4).tanh() + x[2] as f64
        });
        let (buildings, features) = names(3);
        let est = estimate_shapley(
            &scorer,
            &[vec![2, 2, 1]],
            &buildings[..1].to_vec(),
            &features,
            vec![0, 0, 0],
            &ShapleyConfig::default(),
        )
        .unwrap();
        assert!((est.phi[0][0] - est.phi[0][1]).abs() < 1e-12);
    }

    #[test]
    fn ranking_orders_by_mean_abs_phi_with_lexicographic_ties() {
        let est = ShapleyEstimate {
            building_ids: vec!["x".into(), "y".into()],
            feature_ids: vec!["beta".into(), "alpha".into(), "gamma".into()],
            phi: vec![vec![0.3, -0.1, 0.1], vec![0.3, 0.1, -0.1]],
            baseline: vec![0, 0, 0],
            baseline_output: 0.0,
            outputs: vec![0.0, 0.0],
            n_permutations: 0,
            exact: true,
            seed: 0,
        };
        let districts = vec!["A".to_string(), "A".to_string()];
        let ranking = rank_features(&est, &districts, "A").unwrap();
        // beta: 0.3; alpha and gamma tie at 0.1 → alphabetical
        assert_eq!(
            ranking.ordered_features,
            vec!["beta", "alpha", "gamma"]
        );
        assert_eq!(ranking.rank_of("beta"), Some(1));
        assert!(rank_features(&est, &districts, "no-such").is_err());
    }

    #[test]
    fn inverse_coded_scores_match_published_totals() {
        // triple rank 1 → 60
        assert_eq!(
            inverse_coded_score(&[Some(1), Some(1), Some(1)], 20),
            60
        );
        // ranks 2, 1, absent → 39
        assert_eq!(inverse_coded_score(&[Some(2), Some(1), None], 20), 39);
        // ranks 7, 3, 3 → 50
        assert_eq!(
            inverse_coded_score(&[Some(7), Some(3), Some(3)], 20),
            50
        );
        // all absent → 0
        assert_eq!(inverse_coded_score(&[None, None, None], 20), 0);
        // rank beyond top_k contributes nothing
        assert_eq!(inverse_coded_score(&[Some(21), Some(1), None], 20), 20);
    }

    #[test]
    fn score_table_aggregates_rankings() {
        let mk = |district: &str, features: Vec<&str>| FeatureRanking {
            district_id: district.into(),
            mean_abs_phi: (0..features.len()).map(|i| 1.0 / (i + 1) as f64).collect(),
            ordered_features: features.into_iter().map(String::from).collect(),
        };
        let rankings = vec![
            mk("A", vec!["flats", "floors", "lifts"]),
            mk("B", vec!["flats", "lifts", "floors"]),
            mk("C", vec!["lifts", "flats", "floors"]),
        ];
        let table = inverse_rank_scores(&rankings, 2); // top_k = 2
        let flats = table.rows.iter().find(|r| r.feature_id == "flats").unwrap();
        // ranks 1,1,2 at top_k 2 → (3-1)+(3-1)+(3-2) = 5
        assert_eq!(flats.total, 5);
        let floors = table.rows.iter().find(|r| r.feature_id == "floors").unwrap();
        assert_eq!(floors.ranks, vec![Some(2), None, None]);
        assert_eq!(floors.total, 1);
        // sorted by total descending
        assert!(table.rows.windows(2).all(|w| w[0].total >= w[1].total));
    }

    #[test]
    fn composites_follow_model_output_order() {
        let scorer = FnScorer::new(2, |x: &[usize]| (x[0] as f64 - x[1] as f64).tanh());
        let (_, features) = names(2);
        let buildings: Vec<String> = (0..4).map(|i| format!("b{i}")).collect();
        let inputs = vec![vec![0, 1], vec![1, 1], vec![2, 1], vec![3, 1]];
        let est = estimate_shapley(
            &scorer,
            &inputs,
            &buildings,
            &features,
            vec![0, 0],
            &ShapleyConfig::default(),
        )
        .unwrap();
        let composites = all_composites(&est);
        for w in composites.windows(2) {
            assert!(w[0].1 <= w[1].1, "{composites:?}");
        }
        assert!(building_composite(&est, "nope").is_err());
    }

    #[test]
    fn shapley_csv_round_trips_composites() {
        let (buildings, features) = names(2);
        let est = estimate_shapley(
            &linear_scorer(),
            &[vec![1, 1], vec![1, 0]],
            &buildings,
            &features,
            vec![0, 0],
            &ShapleyConfig::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shapley.csv");
        write_shapley_csv(&est, &path).unwrap();
        let composites = read_composites_csv(&path).unwrap();
        assert_eq!(composites.len(), 2);
        assert_eq!(composites[0], ("b0".to_string(), 5.0));
        assert_eq!(composites[1], ("b1".to_string(), 2.0));
    }
}
