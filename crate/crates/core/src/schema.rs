//! The socioecological data model: feature definitions at building, estate,
//! and TPU level, per-building records, daily case series, and study-window
//! arithmetic.
//!
//! Census statistics enter at the level they are reported at; a building
//! inherits its estate's and TPU's values, and dataset validation rejects
//! any record set where buildings of one estate (or TPU) disagree on a
//! shared-level feature. Missing values are an explicit extra category — the
//! loader never imputes.
//!
//! File formats:
//! - schema JSON: array of `{id, name, level, kind}` with
//!   `kind = {"categorical": n} | {"continuous": bins}`
//! - features CSV: header `building_id,estate_id,tpu_id,district_id,<feature ids...>`,
//!   one row per building, `NA` for missing
//! - cases CSV: header `building_id,date,count`, sparse by day

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
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
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("schema has no {0:?}-level feature; every level must be populated")]
    EmptyLevel(SesLevel),
    #[error("duplicate feature id `{0}` in schema")]
    DuplicateFeature(String),
    #[error("feature `{id}`: {problem}")]
    BadFeature { id: String, problem: String },
    #[error("features file header column {index} is `{got}`, expected `{expected}`")]
    HeaderMismatch {
        index: usize,
        got: String,
        expected: String,
    },
    #[error("unknown feature id `{0}` in features file header")]
    UnknownFeature(String),
    #[error("duplicate building id `{0}`")]
    DuplicateBuilding(String),
    #[error("building `{building}`, feature `{feature}`: {problem}")]
    BadValue {
        building: String,
        feature: String,
        problem: String,
    },
    #[error(
        "building `{building}` disagrees with its {level:?} group `{group}` on feature `{feature}`"
    )]
    HierarchyViolation {
        building: String,
        level: SesLevel,
        group: String,
        feature: String,
    },
    #[error("record for building `{building}` has {got} values, schema has {expected} features")]
    RecordLength {
        building: String,
        got: usize,
        expected: usize,
    },
    #[error("bad date `{0}`: expected ISO-8601 (YYYY-MM-DD)")]
    BadDate(String),
    #[error("case row for unknown building `{0}`")]
    CaseForUnknownBuilding(String),
    #[error("study window `{name}` has start {start} after end {end}")]
    BadWindow {
        name: String,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("discretize needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("discretize on an empty value list")]
    EmptyValues,
}

pub type Result<T> = std::result::Result<T, SchemaError>;

/// The three socioecological levels a feature can be reported at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SesLevel {
    Building,
    Estate,
    Tpu,
}

impl SesLevel {
    pub const ALL: [SesLevel; 3] = [SesLevel::Building, SesLevel::Estate, SesLevel::Tpu];
}

/// How a feature's raw values are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Category index in `[0, n_levels)`.
    Categorical { n_levels: usize },
    /// Real value, quantile-discretized into `bins` bins before embedding.
    Continuous { bins: usize },
}

/// Default bin count for continuous features (quartile-style).
pub const DEFAULT_BINS: usize = 4;

/// One predictive feature and the level it is reported at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub name: String,
    pub level: SesLevel,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn categorical(id: &str, name: &str, level: SesLevel, n_levels: usize) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            level,
            kind: FeatureKind::Categorical { n_levels },
        }
    }

    pub fn continuous(id: &str, name: &str, level: SesLevel) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            level,
            kind: FeatureKind::Continuous { bins: DEFAULT_BINS },
        }
    }

    /// Number of distinct encoded indices, including the dedicated
    /// missing-value slot.
    pub fn index_cardinality(&self) -> usize {
        match self.kind {
            FeatureKind::Categorical { n_levels } => n_levels + 1,
            FeatureKind::Continuous { bins } => bins + 1,
        }
    }

    /// The encoded index reserved for a missing value.
    pub fn missing_index(&self) -> usize {
        match self.kind {
            FeatureKind::Categorical { n_levels } => n_levels,
            FeatureKind::Continuous { bins } => bins,
        }
    }
}

/// Ordered feature list; at least one feature per level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let mut ids = HashSet::new();
        for f in &features {
            if !ids.insert(f.id.clone()) {
                return Err(SchemaError::DuplicateFeature(f.id.clone()));
            }
            match f.kind {
                FeatureKind::Categorical { n_levels } if n_levels < 2 => {
                    return Err(SchemaError::BadFeature {
                        id: f.id.clone(),
                        problem: format!("categorical needs n_levels >= 2, got {n_levels}"),
                    });
                }
                FeatureKind::Continuous { bins } if bins < 2 => {
                    return Err(SchemaError::BadFeature {
                        id: f.id.clone(),
                        problem: format!("continuous needs bins >= 2, got {bins}"),
                    });
                }
                _ => {}
            }
        }
        for level in SesLevel::ALL {
            if !features.iter().any(|f| f.level == level) {
                return Err(SchemaError::EmptyLevel(level));
            }
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.features.iter().position(|f| f.id == id)
    }

    /// Feature positions belonging to one level, in schema order.
    pub fn level_positions(&self, level: SesLevel) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.level == level)
            .map(|(i, _)| i)
            .collect()
    }

    /// SHA-256 of the canonical JSON serialization; used to pair model
    /// checkpoints with the schema they were trained on.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("schema serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("schema serializes");
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
        let features: Vec<FeatureSpec> =
            serde_json::from_str(&text).map_err(|source| SchemaError::Json {
                path: path.display().to_string(),
                source,
            })?;
        Self::new(features)
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A raw feature value as stored in records and the features file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Category(usize),
    Real(f64),
    Missing,
}

impl FeatureValue {
    fn to_field(self) -> String {
        match self {
            FeatureValue::Category(i) => i.to_string(),
            FeatureValue::Real(v) => format!("{v}"),
            FeatureValue::Missing => "NA".into(),
        }
    }
}

/// One building's identifiers and feature values (one value per schema
/// feature, in schema order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub building_id: String,
    pub estate_id: String,
    pub tpu_id: String,
    pub district_id: String,
    pub values: Vec<FeatureValue>,
}

/// A validated set of building records under one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub records: Vec<BuildingRecord>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<BuildingRecord>) -> Result<Self> {
        let ds = Self { schema, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_buildings(&self) -> usize {
        self.records.len()
    }

    /// District ids present, sorted.
    pub fn district_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .iter()
            .map(|r| r.district_id.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    pub fn record(&self, building_id: &str) -> Option<&BuildingRecord> {
        self.records.iter().find(|r| r.building_id == building_id)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for rec in &self.records {
            if !seen.insert(rec.building_id.clone()) {
                return Err(SchemaError::DuplicateBuilding(rec.building_id.clone()));
            }
            if rec.values.len() != self.schema.len() {
                return Err(SchemaError::RecordLength {
                    building: rec.building_id.clone(),
                    got: rec.values.len(),
                    expected: self.schema.len(),
                });
            }
            for (spec, value) in self.schema.features().iter().zip(&rec.values) {
                match (spec.kind, value) {
                    (FeatureKind::Categorical { n_levels }, FeatureValue::Category(i)) => {
                        if *i >= n_levels {
                            return Err(SchemaError::BadValue {
                                building: rec.building_id.clone(),
                                feature: spec.id.clone(),
                                problem: format!("category {i} out of range [0, {n_levels})"),
                            });
                        }
                    }
                    (FeatureKind::Categorical { .. }, FeatureValue::Real(v)) => {
                        return Err(SchemaError::BadValue {
                            building: rec.building_id.clone(),
                            feature: spec.id.clone(),
                            problem: format!("real value {v} for a categorical feature"),
                        });
                    }
                    (FeatureKind::Continuous { .. }, FeatureValue::Category(i)) => {
                        return Err(SchemaError::BadValue {
                            building: rec.building_id.clone(),
                            feature: spec.id.clone(),
                            problem: format!("category index {i} for a continuous feature"),
                        });
                    }
                    (FeatureKind::Continuous { .. }, FeatureValue::Real(v)) => {
                        if !v.is_finite() {
                            return Err(SchemaError::BadValue {
                                building: rec.building_id.clone(),
                                feature: spec.id.clone(),
                                problem: format!("non-finite value {v}"),
                            });
                        }
                    }
                    (_, FeatureValue::Missing) => {}
                }
            }
        }
        self.check_group_agreement(SesLevel::Estate)?;
        self.check_group_agreement(SesLevel::Tpu)?;
        Ok(())
    }

    fn check_group_agreement(&self, level: SesLevel) -> Result<()> {
        let positions = self.schema.level_positions(level);
        let mut reference: HashMap<&str, (&str, Vec<FeatureValue>)> = HashMap::new();
        for rec in &self.records {
            let key = match level {
                SesLevel::Estate => rec.estate_id.as_str(),
                SesLevel::Tpu => rec.tpu_id.as_str(),
                SesLevel::Building => unreachable!("buildings are not grouped"),
            };
            let sub: Vec<FeatureValue> = positions.iter().map(|&p| rec.values[p]).collect();
            match reference.entry(key) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert((rec.building_id.as_str(), sub));
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    let (_, expect) = e.get();
                    if let Some(pos) = sub.iter().zip(expect).position(|(a, b)| a != b) {
                        return Err(SchemaError::HierarchyViolation {
                            building: rec.building_id.clone(),
                            level,
                            group: key.to_string(),
                            feature: self.schema.features()[positions[pos]].id.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_file(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|source| SchemaError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let mut header = vec![
            "building_id".to_string(),
            "estate_id".to_string(),
            "tpu_id".to_string(),
            "district_id".to_string(),
        ];
        header.extend(self.schema.features().iter().map(|f| f.id.clone()));
        let path_str = path.display().to_string();
        w.write_record(&header).map_err(|source| SchemaError::Csv {
            path: path_str.clone(),
            source,
        })?;
        for rec in &self.records {
            let mut row = vec![
                rec.building_id.clone(),
                rec.estate_id.clone(),
                rec.tpu_id.clone(),
                rec.district_id.clone(),
            ];
            row.extend(rec.values.iter().map(|v| v.to_field()));
            w.write_record(&row).map_err(|source| SchemaError::Csv {
                path: path_str.clone(),
                source,
            })?;
        }
        w.flush().map_err(|source| SchemaError::Io {
            path: path_str,
            source,
        })
    }
}

/// Daily case counts for one building; `counts[i]` is the count on
/// `start_date + i` days, so the covered dates are contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSeries {
    pub building_id: String,
    pub start_date: NaiveDate,
    pub counts: Vec<u32>,
}

impl CaseSeries {
    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Days::new(self.counts.len().saturating_sub(1) as u64)
    }

    /// Count on a specific date; 0 outside the covered range.
    pub fn count_on(&self, date: NaiveDate) -> u32 {
        if date < self.start_date {
            return 0;
        }
        let offset = (date - self.start_date).num_days() as usize;
        self.counts.get(offset).copied().unwrap_or(0)
    }
}

/// A named inclusive date range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub name: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

impl StudyWindow {
    pub fn new(name: &str, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(SchemaError::BadWindow {
                name: name.into(),
                start,
                end,
            });
        }
        Ok(Self {
            name: name.into(),
            start_date: start,
            end_date: end,
        })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start_date <= date && date <= self.end_date
    }

    /// Number of days covered, inclusive of both ends.
    pub fn n_days(&self) -> usize {
        (self.end_date - self.start_date).num_days() as usize + 1
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start_date
            .iter_days()
            .take_while(move |d| *d <= self.end_date)
    }
}

/// Sum of the series' daily counts inside the window (inclusive both ends);
/// 0 when the window and series do not overlap.
pub fn accumulate_cases(series: &CaseSeries, window: &StudyWindow) -> u32 {
    let from = window.start_date.max(series.start_date);
    let to = window.end_date.min(series.end_date());
    if from > to {
        return 0;
    }
    let lo = (from - series.start_date).num_days() as usize;
    let hi = (to - series.start_date).num_days() as usize;
    series.counts[lo..=hi].iter().sum()
}

/// Quantile-based discretizer fitted on training values only.
///
/// Edges are training data points themselves, so assignment depends only on
/// order — it is invariant under any strictly increasing transform applied
/// consistently to values and fitting data. Assignment is monotone, and when
/// the fitted values are all distinct the bin populations over them differ
/// by at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBins {
    edges: Vec<f64>,
    bins: usize,
}

impl QuantileBins {
    pub fn fit(values: &[f64], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(SchemaError::TooFewBins(bins));
        }
        if values.is_empty() {
            return Err(SchemaError::EmptyValues);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
        let n = sorted.len();
        let mut edges = Vec::new();
        for k in 1..bins {
            let boundary = n * k / bins; // first rank assigned to bin k
            if boundary == 0 {
                continue;
            }
            edges.push(sorted[boundary - 1]);
        }
        Ok(Self { edges, bins })
    }

    /// Bin index in `[0, bins)`: the number of edges strictly below `x`.
    pub fn assign(&self, x: f64) -> usize {
        self.edges.iter().filter(|&&e| x > e).count()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
}

/// Fits quantile bins on `values` and assigns each of them a bin index.
pub fn discretize(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    let q = QuantileBins::fit(values, bins)?;
    Ok(values.iter().map(|&v| q.assign(v)).collect())
}

/// Loads and validates a dataset plus per-building case series.
///
/// Sparse case rows are densified per building from its first to its last
/// reported day; buildings with no case rows get no series (callers treat
/// them as all-zero).
pub fn load_dataset(
    features_path: &Path,
    cases_path: &Path,
    schema: &FeatureSchema,
) -> Result<(Dataset, Vec<CaseSeries>)> {
    let dataset = load_features(features_path, schema)?;
    let known: HashSet<&str> = dataset
        .records
        .iter()
        .map(|r| r.building_id.as_str())
        .collect();
    let series = load_cases(cases_path, &known)?;
    Ok((dataset, series))
}

fn load_features(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let path_str = path.display().to_string();
    let csv_err = |source| SchemaError::Csv {
        path: path_str.clone(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|source| SchemaError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let fixed = ["building_id", "estate_id", "tpu_id", "district_id"];
    for (i, expected) in fixed.iter().enumerate() {
        match headers.get(i) {
            Some(got) if got == *expected => {}
            got => {
                return Err(SchemaError::HeaderMismatch {
                    index: i,
                    got: got.unwrap_or("<missing>").to_string(),
                    expected: (*expected).to_string(),
                })
            }
        }
    }
    let feature_cols: Vec<&str> = headers.iter().skip(fixed.len()).collect();
    let mut positions = Vec::with_capacity(feature_cols.len());
    for col in &feature_cols {
        match schema.position(col) {
            Some(p) => positions.push(p),
            None => return Err(SchemaError::UnknownFeature((*col).to_string())),
        }
    }
    if positions.len() != schema.len() {
        let present: HashSet<usize> = positions.iter().copied().collect();
        let missing = schema
            .features()
            .iter()
            .enumerate()
            .find(|(i, _)| !present.contains(i))
            .map(|(_, f)| f.id.clone())
            .unwrap_or_default();
        return Err(SchemaError::BadFeature {
            id: missing,
            problem: "feature missing from features file header".into(),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|source| SchemaError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let building_id = row.get(0).unwrap_or_default().to_string();
        let mut values = vec![FeatureValue::Missing; schema.len()];
        for (col_idx, &feat_pos) in positions.iter().enumerate() {
            let raw = row.get(fixed.len() + col_idx).unwrap_or_default().trim();
            let spec = &schema.features()[feat_pos];
            values[feat_pos] = parse_value(raw, spec, &building_id)?;
        }
        records.push(BuildingRecord {
            building_id,
            estate_id: row.get(1).unwrap_or_default().to_string(),
            tpu_id: row.get(2).unwrap_or_default().to_string(),
            district_id: row.get(3).unwrap_or_default().to_string(),
            values,
        });
    }
    Dataset::new(schema.clone(), records)
}

fn parse_value(raw: &str, spec: &FeatureSpec, building: &str) -> Result<FeatureValue> {
    if raw == "NA" || raw.is_empty() {
        return Ok(FeatureValue::Missing);
    }
    match spec.kind {
        FeatureKind::Categorical { .. } => {
            raw.parse::<usize>()
                .map(FeatureValue::Category)
                .map_err(|_| SchemaError::BadValue {
                    building: building.into(),
                    feature: spec.id.clone(),
                    problem: format!("`{raw}` is not a category index"),
                })
        }
        FeatureKind::Continuous { .. } => {
            raw.parse::<f64>()
                .map(FeatureValue::Real)
                .map_err(|_| SchemaError::BadValue {
                    building: building.into(),
                    feature: spec.id.clone(),
                    problem: format!("`{raw}` is not a real number"),
                })
        }
    }
}

fn load_cases(path: &Path, known_buildings: &HashSet<&str>) -> Result<Vec<CaseSeries>> {
    let path_str = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| SchemaError::Csv {
        path: path_str.clone(),
        source,
    })?;
    let mut per_building: BTreeMap<String, BTreeMap<NaiveDate, u32>> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|source| SchemaError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let building = row.get(0).unwrap_or_default().to_string();
        if !known_buildings.contains(building.as_str()) {
            return Err(SchemaError::CaseForUnknownBuilding(building));
        }
        let date_str = row.get(1).unwrap_or_default();
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d")
            .map_err(|_| SchemaError::BadDate(date_str.to_string()))?;
        let count: u32 =
            row.get(2)
                .unwrap_or_default()
                .parse()
                .map_err(|_| SchemaError::BadValue {
                    building: building.clone(),
                    feature: "count".into(),
                    problem: format!(
                        "`{}` is not a non-negative count",
                        row.get(2).unwrap_or("")
                    ),
                })?;
        *per_building
            .entry(building)
            .or_default()
            .entry(date)
            .or_insert(0) += count;
    }
    let mut series = Vec::new();
    for (building_id, days) in per_building {
        let (&first, _) = days.first_key_value().expect("nonempty by construction");
        let (&last, _) = days.last_key_value().expect("nonempty by construction");
        let len = (last - first).num_days() as usize + 1;
        let mut counts = vec![0u32; len];
        for (date, count) in days {
            counts[(date - first).num_days() as usize] = count;
        }
        series.push(CaseSeries {
            building_id,
            start_date: first,
            counts,
        });
    }
    Ok(series)
}

/// Writes case series in the sparse `building_id,date,count` format,
/// emitting only nonzero days.
pub fn write_cases_csv(path: &Path, series: &[CaseSeries]) -> Result<()> {
    let path_str = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|source| SchemaError::Csv {
        path: path_str.clone(),
        source,
    })?;
    w.write_record(["building_id", "date", "count"])
        .map_err(|source| SchemaError::Csv {
            path: path_str.clone(),
            source,
        })?;
    for s in series {
        for (i, &count) in s.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let date = s.start_date + chrono::Days::new(i as u64);
            w.write_record([
                s.building_id.as_str(),
                &date.format("%Y-%m-%d").to_string(),
                &count.to_string(),
            ])
            .map_err(|source| SchemaError::Csv {
                path: path_str.clone(),
                source,
            })?;
        }
    }
    w.flush().map_err(|source| SchemaError::Io {
        path: path_str,
        source,
    })
}

/// The study's wave windows, used as defaults throughout.
pub mod windows {
    use super::StudyWindow;
    use chrono::NaiveDate;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
    }

    /// Early waves: 2020-01-23 through 2021-05-21.
    pub fn early_waves() -> StudyWindow {
        StudyWindow::new("waves-1-4", date(2020, 1, 23), date(2021, 5, 21))
            .expect("literal window is ordered")
    }

    /// Full resurgence wave: 2021-12-24 through 2022-07-23.
    pub fn resurgence() -> StudyWindow {
        StudyWindow::new("wave-5", date(2021, 12, 24), date(2022, 7, 23))
            .expect("literal window is ordered")
    }

    /// Resurgence modeling period: 2021-12-24 through 2022-05-21.
    pub fn resurgence_modeling() -> StudyWindow {
        StudyWindow::new("wave-5-modeling", date(2021, 12, 24), date(2022, 5, 21))
            .expect("literal window is ordered")
    }
}
