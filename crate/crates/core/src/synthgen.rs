//! Synthetic district/estate/building generator with planted feature
//! effects and a ground-truth manifest.
//!
//! The generator plants the dissociation the artifact must be able to
//! detect: sociodemographic (estate/TPU-level) features drive the early-era
//! outcome, built-environment (building-level) features drive the
//! resurgence era. Every quantity needed to re-derive a building's expected
//! counts is written to the manifest.
//!
//! Count model, per building `b` and day `t` of the resurgence window:
//!
//! ```text
//! rate(b, t) = rate_mult(b) · wave(t) + boost(b) · late_bump(t)
//! ```
//!
//! where `wave` is a Gaussian bump peaking mid-era and `late_bump` a second
//! bump after the modeling window. `rate_mult` is bimodal in resurgence
//! risk — the two clusters are calibrated so that accumulated modeling-era
//! counts separate cleanly at the planted cutoff (105) while every smaller
//! grid candidate is either degenerate (all labels equal) or label-noisy.
//! `boost` grows continuously with risk, so a composite attribution that
//! tracks risk carries genuine information about post-modeling intensity.
//!
//! With `noise_scale == 0` all sampling is replaced by deterministic
//! rounding/apportionment, making accumulated counts a monotone function of
//! planted risk (exercised by the ordering tests).

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::schema::{
    windows, BuildingRecord, CaseSeries, Dataset, FeatureKind, FeatureSchema, FeatureSpec,
    FeatureValue, SchemaError, SesLevel, StudyWindow,
};

pub type Result<T> = std::result::Result<T, SchemaError>;

/// How many features to generate at each level.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeatureCounts {
    pub building: usize,
    pub estate: usize,
    pub tpu: usize,
}

impl Default for FeatureCounts {
    fn default() -> Self {
        Self {
            building: 8,
            estate: 5,
            tpu: 5,
        }
    }
}

/// Generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Buildings per district; defaults to the study's 189/117/39.
    pub district_sizes: Vec<usize>,
    pub estates_per_district: usize,
    pub tpus_per_district: usize,
    pub features: FeatureCounts,
    /// Scale of the per-building risk noise; 0 switches every sampling step
    /// to deterministic rounding.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            district_sizes: vec![189, 117, 39],
            estates_per_district: 12,
            tpus_per_district: 4,
            features: FeatureCounts::default(),
            noise_scale: 0.5,
            seed: 42,
        }
    }
}

/// Intensity-curve and cluster-calibration constants.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurveParams {
    pub wave_peak: NaiveDate,
    pub wave_sigma_days: f64,
    pub boost_peak: NaiveDate,
    pub boost_sigma_days: f64,
    /// Expected modeling-window accumulation for the low-risk cluster.
    pub low_target: f64,
    /// Expected modeling-window accumulation for the high-risk cluster.
    pub high_target: f64,
    /// Peak extra daily rate of the late bump at risk 1.
    pub boost_base: f64,
    /// Expected early-era cases at risk 1.
    pub early_mean_cases: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            wave_peak: NaiveDate::from_ymd_opt(2022, 3, 5).expect("valid literal date"),
            wave_sigma_days: 24.0,
            boost_peak: NaiveDate::from_ymd_opt(2022, 6, 20).expect("valid literal date"),
            boost_sigma_days: 16.0,
            low_target: 78.0,
            high_target: 245.0,
            boost_base: 4.0,
            early_mean_cases: 2.5,
        }
    }
}

/// The cutoff the generated resurgence counts separate at.
pub const PLANTED_CUTOFF: u32 = 105;

/// Ground truth the generator plants: per-feature effect sizes for the two
/// eras, the risk noise scale, and the era windows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlantedTruth {
    pub early_effects: BTreeMap<String, f64>,
    pub resurgence_effects: BTreeMap<String, f64>,
    pub noise_scale: f64,
    pub early_window: StudyWindow,
    pub resurgence_window: StudyWindow,
    pub curve: CurveParams,
}

impl PlantedTruth {
    /// The default dissociation: five sociodemographic effects in the early
    /// era, five built-environment effects in the resurgence era.
    pub fn default_for(config: &SynthConfig) -> Self {
        let early_effects: BTreeMap<String, f64> = [
            ("est_nonworking_share", 2.2),
            ("est_work_hours", 1.8),
            ("est_median_income", 1.5),
            ("tpu_under15_share", 1.2),
            ("tpu_low_income_share", 1.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let resurgence_effects: BTreeMap<String, f64> = [
            ("flat_count", 2.2),
            ("floor_count", 1.8),
            ("corridor_count", 1.5),
            ("lift_count", 1.2),
            ("flat_per_floor", 1.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            early_effects,
            resurgence_effects,
            noise_scale: config.noise_scale,
            early_window: windows::early_waves(),
            resurgence_window: windows::resurgence(),
            curve: CurveParams::default(),
        }
    }

    /// Number of nonzero effects per era.
    pub fn planted_counts(&self) -> (usize, usize) {
        (
            self.early_effects.values().filter(|v| **v != 0.0).count(),
            self.resurgence_effects
                .values()
                .filter(|v| **v != 0.0)
                .count(),
        )
    }
}

/// Per-building ground truth recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BuildingTruth {
    pub building_id: String,
    pub district_id: String,
    pub risk_early: f64,
    pub risk_resurgence: f64,
    pub rate_multiplier: f64,
    pub boost: f64,
    pub expected_early_total: f64,
    pub expected_modeling_total: f64,
    pub expected_resurgence_total: f64,
}

/// Everything an independent script needs to recompute expected counts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub noise_scale: f64,
    pub planted_cutoff: u32,
    pub early_window: StudyWindow,
    pub resurgence_window: StudyWindow,
    pub modeling_window: StudyWindow,
    pub early_effects: BTreeMap<String, f64>,
    pub resurgence_effects: BTreeMap<String, f64>,
    pub curve: CurveParams,
    pub buildings: Vec<BuildingTruth>,
}

impl Manifest {
    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| SchemaError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

/// A generated dataset with its case series and ground-truth manifest.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub series: Vec<CaseSeries>,
    pub manifest: Manifest,
}

impl SynthOutput {
    /// Writes `schema.json`, `features.csv`, `cases.csv`, and
    /// `manifest.json` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        self.dataset.schema.to_json_file(&dir.join("schema.json"))?;
        self.dataset.to_csv_file(&dir.join("features.csv"))?;
        crate::schema::write_cases_csv(&dir.join("cases.csv"), &self.series)?;
        self.manifest.to_json_file(&dir.join("manifest.json"))
    }
}

/// The generator's feature schema for the requested per-level counts.
///
/// The named template features mirror the domain (architectural counts at
/// building level, census-style shares at estate/TPU level); extra slots
/// beyond the template get generic continuous features.
pub fn default_schema(counts: &FeatureCounts) -> Result<FeatureSchema> {
    let building_template: Vec<FeatureSpec> = vec![
        FeatureSpec::continuous("flat_count", "Number of flats", SesLevel::Building),
        FeatureSpec::continuous("floor_count", "Number of floors", SesLevel::Building),
        FeatureSpec::continuous("corridor_count", "Number of corridors", SesLevel::Building),
        FeatureSpec::continuous("lift_count", "Number of lifts", SesLevel::Building),
        FeatureSpec::continuous("flat_per_floor", "Flats per floor", SesLevel::Building),
        FeatureSpec::categorical("orientation", "Cardinal orientation", SesLevel::Building, 8),
        FeatureSpec::categorical("terrace", "Terrace present", SesLevel::Building, 2),
        FeatureSpec::continuous("building_age", "Building age", SesLevel::Building),
    ];
    let estate_template: Vec<FeatureSpec> = vec![
        FeatureSpec::continuous(
            "est_nonworking_share",
            "Non-working population share",
            SesLevel::Estate,
        ),
        FeatureSpec::continuous("est_work_hours", "Weekly work hours", SesLevel::Estate),
        FeatureSpec::continuous(
            "est_median_income",
            "Median monthly income",
            SesLevel::Estate,
        ),
        FeatureSpec::continuous(
            "est_household_size",
            "Median household size",
            SesLevel::Estate,
        ),
        FeatureSpec::continuous(
            "est_working_share",
            "Working population share",
            SesLevel::Estate,
        ),
    ];
    let tpu_template: Vec<FeatureSpec> = vec![
        FeatureSpec::continuous("tpu_under15_share", "Population share under 15", SesLevel::Tpu),
        FeatureSpec::continuous(
            "tpu_low_income_share",
            "Low-income household share",
            SesLevel::Tpu,
        ),
        FeatureSpec::continuous("tpu_pop_density", "Population density", SesLevel::Tpu),
        FeatureSpec::continuous(
            "tpu_labour_participation",
            "Labour force participation",
            SesLevel::Tpu,
        ),
        FeatureSpec::continuous(
            "tpu_same_district_work",
            "Working in same district share",
            SesLevel::Tpu,
        ),
    ];
    let mut features = Vec::new();
    for (template, want, level, prefix) in [
        (building_template, counts.building, SesLevel::Building, "bld"),
        (estate_template, counts.estate, SesLevel::Estate, "est"),
        (tpu_template, counts.tpu, SesLevel::Tpu, "tpu"),
    ] {
        let have = template.len();
        features.extend(template.into_iter().take(want));
        for extra in have..want {
            features.push(FeatureSpec::continuous(
                &format!("{prefix}_extra_{extra}"),
                &format!("Extra {prefix} feature {extra}"),
                level,
            ));
        }
    }
    FeatureSchema::new(features)
}

fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    base.wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn district_name(index: usize) -> String {
    if index < 26 {
        char::from(b'A' + index as u8).to_string()
    } else {
        format!("D{index}")
    }
}

/// Standardized value used in the risk score; missing contributes 0.
fn standardized(spec: &FeatureSpec, value: &FeatureValue) -> f64 {
    match (spec.kind, value) {
        (FeatureKind::Continuous { .. }, FeatureValue::Real(v)) => *v,
        (FeatureKind::Categorical { n_levels }, FeatureValue::Category(i)) => {
            let half = ((n_levels - 1) as f64 / 2.0).max(0.5);
            (*i as f64 - (n_levels - 1) as f64 / 2.0) / half
        }
        _ => 0.0,
    }
}

fn logistic(z: f64) -> f64 {
    crate::nn::sigmoid_scalar(z)
}

fn gaussian_bump(date: NaiveDate, peak: NaiveDate, sigma: f64) -> f64 {
    let d = (date - peak).num_days() as f64;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Splits `total` across days proportionally to `weights`, deterministically,
/// by largest remainder (ties to the earlier day).
fn apportion(total: u64, weights: &[f64]) -> Vec<u32> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || total == 0 {
        let mut out = vec![0u32; weights.len()];
        if total > 0 && !weights.is_empty() {
            out[0] = total as u32;
        }
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let assigned: u64 = out.iter().map(|&c| c as u64).sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).expect("finite quotas").then(a.cmp(&b))
    });
    for &day in order.iter().take((total - assigned) as usize) {
        out[day] += 1;
    }
    out
}

/// Samples a Poisson total and splits it across days with the weights as
/// probabilities (the two steps together are equivalent to independent
/// per-day Poisson draws).
fn sample_daily_counts(rng: &mut ChaCha8Rng, weights: &[f64]) -> Vec<u32> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let total = rand_distr::Poisson::new(sum)
        .expect("positive rate")
        .sample(rng) as u64;
    let mut out = vec![0u32; weights.len()];
    let mut remaining = total;
    let mut weight_left = sum;
    for (i, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == weights.len() {
            out[i] = remaining as u32;
            break;
        }
        let p = (w / weight_left).clamp(0.0, 1.0);
        let draw = rand_distr::Binomial::new(remaining, p)
            .expect("valid binomial")
            .sample(rng);
        out[i] = draw as u32;
        remaining -= draw;
        weight_left -= w;
    }
    out
}

/// Generates a dataset, its daily case series, and the ground-truth
/// manifest. Pure function of `(config, truth)`.
pub fn generate(config: &SynthConfig, truth: &PlantedTruth) -> Result<SynthOutput> {
    let schema = default_schema(&config.features)?;
    let modeling = windows::resurgence_modeling();
    let curve = &truth.curve;

    // calibration: expected modeling-window accumulation of each bump, so
    // the wave multiplier can be solved to hit the cluster target exactly
    // whatever the late bump contributes inside the modeling window
    let wave_weight_modeling: f64 = modeling
        .dates()
        .map(|d| gaussian_bump(d, curve.wave_peak, curve.wave_sigma_days))
        .sum();
    let boost_weight_modeling: f64 = modeling
        .dates()
        .map(|d| gaussian_bump(d, curve.boost_peak, curve.boost_sigma_days))
        .sum();

    let mut records = Vec::new();
    let mut series = Vec::new();
    let mut buildings = Vec::new();

    for (d_idx, &size) in config.district_sizes.iter().enumerate() {
        let district = district_name(d_idx);
        let n_estates = config.estates_per_district.min(size).max(1);
        let n_tpus = config.tpus_per_district.min(n_estates).max(1);
        let mut feat_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, d_idx as u64, 1));
        let mut count_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, d_idx as u64, 2));

        // group-level values generated once per estate/TPU, then broadcast
        let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
        let mut group_values: BTreeMap<(SesLevel, usize, usize), FeatureValue> = BTreeMap::new();
        for (f_idx, spec) in schema.features().iter().enumerate() {
            let groups = match spec.level {
                SesLevel::Building => continue,
                SesLevel::Estate => n_estates,
                SesLevel::Tpu => n_tpus,
            };
            for g in 0..groups {
                let value = match spec.kind {
                    FeatureKind::Continuous { .. } => {
                        FeatureValue::Real(normal.sample(&mut feat_rng))
                    }
                    FeatureKind::Categorical { n_levels } => {
                        FeatureValue::Category(feat_rng.gen_range(0..n_levels))
                    }
                };
                group_values.insert((spec.level, f_idx, g), value);
            }
        }

        for b in 0..size {
            let estate = b % n_estates;
            let tpu = estate % n_tpus;
            let building_id = format!("{district}-B{:03}", b + 1);
            let mut values = Vec::with_capacity(schema.len());
            for (f_idx, spec) in schema.features().iter().enumerate() {
                // the third district reports no cardinal orientation,
                // exercising the explicit missing-value path
                if spec.id == "orientation" && d_idx == 2 {
                    values.push(FeatureValue::Missing);
                    continue;
                }
                let value = match spec.level {
                    SesLevel::Building => match spec.kind {
                        FeatureKind::Continuous { .. } => {
                            FeatureValue::Real(normal.sample(&mut feat_rng))
                        }
                        FeatureKind::Categorical { n_levels } => {
                            FeatureValue::Category(feat_rng.gen_range(0..n_levels))
                        }
                    },
                    SesLevel::Estate => group_values[&(SesLevel::Estate, f_idx, estate)],
                    SesLevel::Tpu => group_values[&(SesLevel::Tpu, f_idx, tpu)],
                };
                values.push(value);
            }

            let score = |effects: &BTreeMap<String, f64>| -> f64 {
                schema
                    .features()
                    .iter()
                    .zip(&values)
                    .map(|(spec, v)| {
                        effects.get(&spec.id).copied().unwrap_or(0.0) * standardized(spec, v)
                    })
                    .sum()
            };
            let noise = |rng: &mut ChaCha8Rng| -> f64 {
                if truth.noise_scale == 0.0 {
                    // keep the rng stream aligned between noise settings
                    let _ = normal.sample(rng);
                    0.0
                } else {
                    truth.noise_scale * normal.sample(rng)
                }
            };
            let risk_early = logistic(score(&truth.early_effects) + noise(&mut count_rng));
            let risk_res = logistic(score(&truth.resurgence_effects) + noise(&mut count_rng));

            let target = if risk_res >= 0.5 {
                curve.high_target
            } else {
                curve.low_target
            };
            let boost = curve.boost_base * risk_res;
            let rate_mult =
                ((target - boost * boost_weight_modeling) / wave_weight_modeling).max(0.0);

            let day_rates: Vec<f64> = truth
                .resurgence_window
                .dates()
                .map(|d| {
                    rate_mult * gaussian_bump(d, curve.wave_peak, curve.wave_sigma_days)
                        + boost * gaussian_bump(d, curve.boost_peak, curve.boost_sigma_days)
                })
                .collect();
            let expected_resurgence_total: f64 = day_rates.iter().sum();
            let expected_modeling_total: f64 = truth
                .resurgence_window
                .dates()
                .zip(&day_rates)
                .filter(|(d, _)| modeling.contains(*d))
                .map(|(_, r)| r)
                .sum();

            let res_counts = if truth.noise_scale == 0.0 {
                apportion(expected_resurgence_total.round() as u64, &day_rates)
            } else {
                sample_daily_counts(&mut count_rng, &day_rates)
            };

            let expected_early_total = risk_early * curve.early_mean_cases;
            let early_total = if truth.noise_scale == 0.0 {
                expected_early_total.round() as u64
            } else if count_rng.gen_bool(risk_early) {
                1 + rand_distr::Poisson::new(curve.early_mean_cases - 1.0)
                    .expect("positive rate")
                    .sample(&mut count_rng) as u64
            } else {
                0
            };
            let early_days = truth.early_window.n_days();
            let early_counts = apportion(early_total, &vec![1.0; early_days]);

            // one contiguous series spanning both eras
            let total_days =
                (truth.resurgence_window.end_date - truth.early_window.start_date).num_days()
                    as usize
                    + 1;
            let mut counts = vec![0u32; total_days];
            counts[..early_days].copy_from_slice(&early_counts);
            let res_offset = (truth.resurgence_window.start_date
                - truth.early_window.start_date)
                .num_days() as usize;
            counts[res_offset..res_offset + res_counts.len()].copy_from_slice(&res_counts);

            series.push(CaseSeries {
                building_id: building_id.clone(),
                start_date: truth.early_window.start_date,
                counts,
            });
            buildings.push(BuildingTruth {
                building_id: building_id.clone(),
                district_id: district.clone(),
                risk_early,
                risk_resurgence: risk_res,
                rate_multiplier: rate_mult,
                boost,
                expected_early_total,
                expected_modeling_total,
                expected_resurgence_total,
            });
            records.push(BuildingRecord {
                building_id,
                estate_id: format!("{district}-E{:02}", estate + 1),
                tpu_id: format!("{district}-T{}", tpu + 1),
                district_id: district.clone(),
                values,
            });
        }
    }

    let dataset = Dataset::new(schema, records)?;
    let manifest = Manifest {
        seed: config.seed,
        noise_scale: truth.noise_scale,
        planted_cutoff: PLANTED_CUTOFF,
        early_window: truth.early_window.clone(),
        resurgence_window: truth.resurgence_window.clone(),
        modeling_window: modeling,
        early_effects: truth.early_effects.clone(),
        resurgence_effects: truth.resurgence_effects.clone(),
        curve: truth.curve.clone(),
        buildings,
    };
    Ok(SynthOutput {
        dataset,
        series,
        manifest,
    })
}
