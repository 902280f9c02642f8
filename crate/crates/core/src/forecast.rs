//! Daily case-count forecasting with forward-chaining validation.
//!
//! Three chains each train on everything from the resurgence start to the
//! day before their 14-day test window; test windows advance through the
//! final two months. For every chain and horizon two LSTM variants train
//! under identical seeds and batch order: the base model sees only the
//! normalized count history, the augmented model adds one constant channel
//! carrying the building's composite attribution. The per-epoch validation
//! metric is the negated mean absolute error (RMSE optional) over
//! (building, day) pairs of the horizon, so higher is better and "peak"
//! semantics apply.

use std::collections::HashMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{mae, rmse};
use crate::ndcore::{adam_step, AdamHyper, AdamState, NdError, Tape, Tensor, Var};
use crate::nn::{dense, lstm_step, BoundDense, BoundLstm, DenseParams, LstmCellParams};
use crate::schema::{CaseSeries, StudyWindow};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("window `{name}` is too short: {problem}")]
    WindowTooShort { name: String, problem: String },
    #[error("horizon must be 3, 7, or 14 days, got {0}")]
    BadHorizon(usize),
    #[error("input window ({window}) must cover the horizon ({horizon})")]
    WindowUnderHorizon { window: usize, horizon: usize },
    #[error("config field `{0}` must be positive")]
    BadConfig(&'static str),
    #[error("test window ends {test_end} but the series reach only {coverage_end}")]
    TestOutsideCoverage {
        test_end: NaiveDate,
        coverage_end: NaiveDate,
    },
    #[error("no composite available for building `{0}`")]
    MissingComposite(String),
    #[error("chain {chain} train window admits no origin: train {train_days} days, window {window} + horizon {horizon}")]
    NoTrainingOrigins {
        chain: usize,
        train_days: usize,
        window: usize,
        horizon: usize,
    },
    #[error("no case series supplied")]
    NoSeries,
    #[error("non-finite loss at epoch {epoch}: {source}")]
    NonFinite {
        epoch: usize,
        #[source]
        source: NdError,
    },
    #[error(transparent)]
    Engine(#[from] NdError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Schema(#[from] crate::schema::SchemaError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ForecastError>;

/// One chain: a training window and the 14-day test window that follows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    /// 1-based chain number.
    pub index: usize,
    pub train: StudyWindow,
    pub test: StudyWindow,
}

/// Length of the evaluation region the chains' test windows live in: the
/// final two months of the resurgence window (63 days).
pub const DEFAULT_EVAL_LEN: usize = 63;

/// Builds the forward-chaining schedule over `window`.
///
/// The last `eval_len` days form the evaluation region. Chains 1..n-1 take
/// consecutive `test_len`-day test blocks from its start; chain n's test
/// block is anchored at the window end (leaving a covered-but-untested gap
/// before it when `eval_len > n·test_len`). Every chain trains on the full
/// span from the window start to the day before its own test block.
pub fn make_chains(
    window: &StudyWindow,
    n: usize,
    test_len: usize,
    eval_len: usize,
) -> Result<Vec<ChainSpec>> {
    if n == 0 || test_len == 0 {
        return Err(ForecastError::BadConfig("chain/test length"));
    }
    if n * test_len > eval_len {
        return Err(ForecastError::WindowTooShort {
            name: window.name.clone(),
            problem: format!("{n} disjoint {test_len}-day tests need {eval_len} evaluation days"),
        });
    }
    if window.n_days() <= eval_len {
        return Err(ForecastError::WindowTooShort {
            name: window.name.clone(),
            problem: format!(
                "{} days total cannot hold a {eval_len}-day evaluation region plus training data",
                window.n_days()
            ),
        });
    }
    let eval_start = window.end_date - chrono::Days::new(eval_len as u64 - 1);
    let mut chains = Vec::with_capacity(n);
    for k in 0..n {
        let test_start = if k + 1 == n {
            window.end_date - chrono::Days::new(test_len as u64 - 1)
        } else {
            eval_start + chrono::Days::new((k * test_len) as u64)
        };
        let test_end = test_start + chrono::Days::new(test_len as u64 - 1);
        let train_end = test_start - chrono::Days::new(1);
        chains.push(ChainSpec {
            index: k + 1,
            train: StudyWindow::new(&format!("chain-{}-train", k + 1), window.start_date, train_end)?,
            test: StudyWindow::new(&format!("chain-{}-test", k + 1), test_start, test_end)?,
        });
    }
    Ok(chains)
}

/// The study's default schedule: three chains with 14-day tests over the
/// last 63 days of the resurgence window.
pub fn default_chains() -> Vec<ChainSpec> {
    make_chains(
        &crate::schema::windows::resurgence(),
        3,
        14,
        DEFAULT_EVAL_LEN,
    )
    .expect("default windows fit the default schedule")
}

/// Which error statistic the (negated) validation metric uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Mae,
    Rmse,
}

/// Forecaster settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Days of history fed to the LSTM.
    pub window_len: usize,
    pub lstm_hidden: usize,
    /// Forecast horizon in days: 3, 7, or 14.
    pub horizon: usize,
    pub use_composite: bool,
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Training origins drawn per building per epoch.
    pub origins_per_building: usize,
    pub metric: ErrorMetric,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window_len: 21,
            lstm_hidden: 16,
            horizon: 7,
            use_composite: false,
            lr: 0.005,
            max_epochs: 300,
            patience: 20,
            batch_size: 64,
            origins_per_building: 3,
            metric: ErrorMetric::Mae,
            seed: 0,
        }
    }
}

impl ForecastConfig {
    fn validate(&self) -> Result<()> {
        if !matches!(self.horizon, 3 | 7 | 14) {
            return Err(ForecastError::BadHorizon(self.horizon));
        }
        if self.window_len < self.horizon {
            return Err(ForecastError::WindowUnderHorizon {
                window: self.window_len,
                horizon: self.horizon,
            });
        }
        for (v, name) in [
            (self.lstm_hidden, "lstm_hidden"),
            (self.max_epochs, "max_epochs"),
            (self.patience, "patience"),
            (self.batch_size, "batch_size"),
            (self.origins_per_building, "origins_per_building"),
        ] {
            if v == 0 {
                return Err(ForecastError::BadConfig(name));
            }
        }
        if self.lr <= 0.0 {
            return Err(ForecastError::BadConfig("lr"));
        }
        Ok(())
    }
}

/// LSTM-over-history forecaster emitting a direct h-day-ahead count vector.
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub lstm: LstmCellParams,
    pub head: DenseParams,
    use_composite: bool,
    window_len: usize,
}

/// Builds the forecaster. Input per day is the normalized count plus, for
/// the augmented variant, a constant channel with the building's composite;
/// `n_buildings` only sizes the reporting (the network itself is shared
/// across buildings).
pub fn build_forecaster(config: &ForecastConfig, n_buildings: usize) -> Result<Forecaster> {
    config.validate()?;
    let _ = n_buildings;
    let input_dim = if config.use_composite { 2 } else { 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(Forecaster {
        lstm: LstmCellParams::init(input_dim, config.lstm_hidden, &mut rng),
        head: DenseParams::init(config.lstm_hidden, config.horizon, &mut rng),
        use_composite: config.use_composite,
        window_len: config.window_len,
    })
}

impl Forecaster {
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.lstm.params();
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.lstm.params_mut();
        out.extend(self.head.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn bind(&self, tape: &Tape) -> Vec<Var> {
        self.params().into_iter().map(|t| tape.leaf(t)).collect()
    }

    fn step_input(&self, x: f64, composite: f64) -> Vec<f64> {
        if self.use_composite {
            vec![x, composite]
        } else {
            vec![x]
        }
    }

    /// Tape forward over one history window; returns the h-day vector.
    pub fn forward(
        &self,
        tape: &Tape,
        vars: &[Var],
        window: &[f64],
        composite: f64,
    ) -> Result<Var> {
        debug_assert_eq!(window.len(), self.window_len);
        let hidden = self.lstm.hidden_dim();
        let bound = BoundLstm {
            w: vars[0..4].to_vec(),
            u: vars[4..8].to_vec(),
            b: vars[8..12].to_vec(),
        };
        let head = BoundDense {
            weights: vars[12].clone(),
            bias: vars[13].clone(),
        };
        let mut h = tape.constant(vec![hidden], vec![0.0; hidden])?;
        let mut c = tape.constant(vec![hidden], vec![0.0; hidden])?;
        for &x in window {
            let input = self.step_input(x, composite);
            let xv = tape.constant(vec![input.len()], input)?;
            let (h1, c1) = lstm_step(&bound, &xv, &h, &c)?;
            h = h1;
            c = c1;
        }
        Ok(dense(&head, &h)?)
    }

    /// Tape-free forward, mirroring [`Forecaster::forward`].
    pub fn predict(&self, window: &[f64], composite: f64) -> Vec<f64> {
        let hidden = self.lstm.hidden_dim();
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        for &x in window {
            let input = self.step_input(x, composite);
            let (h1, c1) = self.lstm.step_fast(&input, &h, &c);
            h = h1;
            c = c1;
        }
        self.head.forward_fast(&h)
    }
}

/// Which model variant a run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Augmented,
}

/// Metric trajectory of one (chain, horizon, variant) training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub chain: usize,
    pub horizon: usize,
    pub variant: Variant,
    /// Per-epoch validation metric (negated error; higher is better).
    pub metric_curve: Vec<f64>,
    pub peak: f64,
    /// 1-based epoch of the first maximum.
    pub epoch_at_peak: usize,
    pub epochs_run: usize,
}

/// All runs, in (chain, horizon, variant) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub runs: Vec<ForecastRun>,
    pub seed: u64,
}

/// First maximum of a metric curve, as (1-based epoch, value).
///
/// Under early stopping with the given patience a curve never extends more
/// than `patience` epochs past its peak; detection itself is a plain
/// first-argmax.
pub fn detect_peak(metric_curve: &[f64], patience: usize) -> Option<(usize, f64)> {
    let _ = patience;
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in metric_curve.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i + 1, v)),
        }
    }
    best
}

/// Per-building chain data: normalized training counts, raw test targets,
/// normalization statistics, and the 0-1 scaled composite channel.
struct ChainData {
    /// Normalized counts over the training window, one row per building.
    train: Vec<Vec<f64>>,
    /// Raw counts over the first `horizon` days of the test window.
    test_actual: Vec<Vec<f64>>,
    /// (offset, scale) per building; prediction de-normalizes as
    /// `pred * scale + offset`.
    norm: Vec<(f64, f64)>,
    composite01: Vec<f64>,
}

/// Builds training/evaluation arrays for one chain. Training inputs and
/// targets come exclusively from the train window; the test window
/// contributes evaluation targets only.
fn prepare_chain_data(
    chain: &ChainSpec,
    horizon: usize,
    series: &[CaseSeries],
    composites: &HashMap<String, f64>,
    need_composites: bool,
) -> Result<ChainData> {
    if series.is_empty() {
        return Err(ForecastError::NoSeries);
    }
    let coverage_end = series
        .iter()
        .map(CaseSeries::end_date)
        .max()
        .expect("nonempty series list");
    if chain.test.end_date > coverage_end {
        return Err(ForecastError::TestOutsideCoverage {
            test_end: chain.test.end_date,
            coverage_end,
        });
    }

    let mut train = Vec::with_capacity(series.len());
    let mut test_actual = Vec::with_capacity(series.len());
    let mut norm = Vec::with_capacity(series.len());
    let mut composite01 = Vec::with_capacity(series.len());

    let mut raw_composites = Vec::with_capacity(series.len());
    for s in series {
        match composites.get(&s.building_id) {
            Some(&c) => raw_composites.push(c),
            None if need_composites => {
                return Err(ForecastError::MissingComposite(s.building_id.clone()))
            }
            None => raw_composites.push(0.0),
        }
    }
    let c_min = raw_composites.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_max = raw_composites
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let c_scale = if c_max > c_min { c_max - c_min } else { 1.0 };

    for (s, &raw_c) in series.iter().zip(&raw_composites) {
        let train_counts: Vec<f64> = chain
            .train
            .dates()
            .map(|d| s.count_on(d) as f64)
            .collect();
        let lo = train_counts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = train_counts
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let scale = if hi > lo { hi - lo } else { 1.0 };
        train.push(train_counts.iter().map(|&x| (x - lo) / scale).collect());
        test_actual.push(
            chain
                .test
                .dates()
                .take(horizon)
                .map(|d| s.count_on(d) as f64)
                .collect(),
        );
        norm.push((lo, scale));
        composite01.push((raw_c - c_min) / c_scale);
    }
    Ok(ChainData {
        train,
        test_actual,
        norm,
        composite01,
    })
}

fn negated_error(metric: ErrorMetric, pred: &[f64], actual: &[f64]) -> Result<f64> {
    Ok(match metric {
        ErrorMetric::Mae => -mae(pred, actual)?,
        ErrorMetric::Rmse => -rmse(pred, actual)?,
    })
}

/// Trains one variant on one chain and records its validation trajectory.
fn run_variant(
    chain: &ChainSpec,
    horizon: usize,
    data: &ChainData,
    variant: Variant,
    config: &ForecastConfig,
) -> Result<ForecastRun> {
    let run_config = ForecastConfig {
        horizon,
        use_composite: variant == Variant::Augmented,
        ..config.clone()
    };
    let n_buildings = data.train.len();
    let mut model = build_forecaster(&run_config, n_buildings)?;
    let hyper = AdamHyper::with_lr(run_config.lr);
    let mut state = AdamState::new(&model.params());

    let train_days = data.train[0].len();
    let window = run_config.window_len;
    if train_days < window + horizon {
        return Err(ForecastError::NoTrainingOrigins {
            chain: chain.index,
            train_days,
            window,
            horizon,
        });
    }
    // valid first-target offsets: inputs [t0-window, t0), targets [t0, t0+h)
    let origin_lo = window;
    let origin_hi = train_days - horizon; // inclusive

    // batch order depends only on the seed, so base and augmented variants
    // see identical sample schedules
    let mut rng = ChaCha8Rng::seed_from_u64(run_config.seed);
    let mut metric_curve = Vec::new();
    let mut best_epoch = 0usize;

    for epoch in 0..run_config.max_epochs {
        let mut samples: Vec<(usize, usize)> = Vec::with_capacity(
            n_buildings * run_config.origins_per_building,
        );
        for b in 0..n_buildings {
            for _ in 0..run_config.origins_per_building {
                samples.push((b, rng.gen_range(origin_lo..=origin_hi)));
            }
        }
        samples.shuffle(&mut rng);

        for batch in samples.chunks(run_config.batch_size) {
            let step = (|| -> std::result::Result<(), NdError> {
                let tape = Tape::new();
                let vars = model.bind(&tape);
                let mut diffs = Vec::with_capacity(batch.len());
                for &(b, t0) in batch {
                    let input = &data.train[b][t0 - window..t0];
                    let target = &data.train[b][t0..t0 + horizon];
                    let pred = model
                        .forward(&tape, &vars, input, data.composite01[b])
                        .map_err(|e| NdError::Invalid(e.to_string()))?;
                    let target_var = tape.constant(vec![horizon], target.to_vec())?;
                    let diff = pred.sub(&target_var)?;
                    diffs.push(diff.mul(&diff)?);
                }
                let loss = tape.concat(&diffs)?.mean()?;
                let mut grads = tape.backward(&loss)?;
                let collected: Vec<Vec<f64>> = vars
                    .iter()
                    .map(|v| grads.take(v).expect("bound parameters are trainable"))
                    .collect();
                let mut params = model.params_mut();
                adam_step(&mut params, &collected, &mut state, &hyper)?;
                Ok(())
            })();
            if let Err(source) = step {
                return Err(ForecastError::NonFinite { epoch, source });
            }
        }

        // validate: forecast the first `horizon` test days from the final
        // training window, de-normalized back to counts
        let mut pred_flat = Vec::with_capacity(n_buildings * horizon);
        let mut actual_flat = Vec::with_capacity(n_buildings * horizon);
        for b in 0..n_buildings {
            let input = &data.train[b][train_days - window..];
            let pred = model.predict(input, data.composite01[b]);
            let (lo, scale) = data.norm[b];
            pred_flat.extend(pred.iter().map(|p| p * scale + lo));
            actual_flat.extend_from_slice(&data.test_actual[b]);
        }
        let metric = negated_error(run_config.metric, &pred_flat, &actual_flat)?;
        metric_curve.push(metric);

        if metric > metric_curve[best_epoch] {
            best_epoch = epoch;
        } else if epoch - best_epoch >= run_config.patience {
            break;
        }
    }

    let (epoch_at_peak, peak) =
        detect_peak(&metric_curve, run_config.patience).expect("at least one epoch ran");
    Ok(ForecastRun {
        chain: chain.index,
        horizon,
        variant,
        epochs_run: metric_curve.len(),
        metric_curve,
        peak,
        epoch_at_peak,
    })
}

/// Trains the base and augmented variants on one chain with identical seeds
/// and data, returning `[base, augmented]`.
pub fn run_chain(
    chain: &ChainSpec,
    horizon: usize,
    series: &[CaseSeries],
    composites: &HashMap<String, f64>,
    config: &ForecastConfig,
) -> Result<Vec<ForecastRun>> {
    let check_config = ForecastConfig {
        horizon,
        ..config.clone()
    };
    check_config.validate()?;
    let data = prepare_chain_data(chain, horizon, series, composites, true)?;
    Ok(vec![
        run_variant(chain, horizon, &data, Variant::Base, config)?,
        run_variant(chain, horizon, &data, Variant::Augmented, config)?,
    ])
}

/// Runs every (chain, horizon) job and assembles the report in
/// (chain, horizon, variant) order.
pub fn run_chains(
    chains: &[ChainSpec],
    horizons: &[usize],
    series: &[CaseSeries],
    composites: &HashMap<String, f64>,
    config: &ForecastConfig,
) -> Result<ForecastReport> {
    let mut runs = Vec::new();
    for chain in chains {
        for &horizon in horizons {
            runs.extend(run_chain(chain, horizon, series, composites, config)?);
        }
    }
    Ok(ForecastReport {
        runs,
        seed: config.seed,
    })
}

/// Writes the full curves as JSON.
pub fn write_report_json(report: &ForecastReport, path: &std::path::Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json).map_err(|source| ForecastError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `chain,horizon,variant,peak,epoch_at_peak,epochs_run` rows.
pub fn write_summary_csv(report: &ForecastReport, path: &std::path::Path) -> Result<()> {
    let mut out = String::from("chain,horizon,variant,peak,epoch_at_peak,epochs_run\n");
    for run in &report.runs {
        let variant = match run.variant {
            Variant::Base => "base",
            Variant::Augmented => "augmented",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            run.chain, run.horizon, variant, run.peak, run.epoch_at_peak, run.epochs_run
        ));
    }
    std::fs::write(path, out).map_err(|source| ForecastError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::windows;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn default_chain_dates_match_the_study_schedule() {
        let chains = default_chains();
        assert_eq!(chains.len(), 3);
        assert_eq!(chains[0].test.start_date, date(2022, 5, 22));
        assert_eq!(chains[0].test.end_date, date(2022, 6, 4));
        assert_eq!(chains[1].test.start_date, date(2022, 6, 5));
        assert_eq!(chains[1].test.end_date, date(2022, 6, 18));
        assert_eq!(chains[2].test.start_date, date(2022, 7, 10));
        assert_eq!(chains[2].test.end_date, date(2022, 7, 23));
        for chain in &chains {
            assert_eq!(chain.train.start_date, date(2021, 12, 24));
            assert_eq!(chain.test.n_days(), 14);
            assert_eq!(
                chain.train.end_date + chrono::Days::new(1),
                chain.test.start_date
            );
        }
        assert_eq!(chains[0].train.end_date, date(2022, 5, 21));
    }

    #[test]
    fn chains_nest_and_tests_stay_disjoint() {
        let chains = default_chains();
        for pair in chains.windows(2) {
            // train(k) contains train(k-1) and test(k-1)
            assert!(pair[1].train.start_date <= pair[0].train.start_date);
            assert!(pair[1].train.end_date >= pair[0].test.end_date);
            // tests advance without overlap
            assert!(pair[0].test.end_date < pair[1].test.start_date);
        }
        // no test date ever falls inside its own chain's training window
        for chain in &chains {
            for d in chain.test.dates() {
                assert!(!chain.train.contains(d));
            }
        }
    }

    #[test]
    fn too_short_window_is_rejected() {
        let tight = StudyWindow::new("w", date(2022, 1, 1), date(2022, 2, 15)).unwrap();
        assert!(matches!(
            make_chains(&tight, 3, 14, 63),
            Err(ForecastError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn variants_differ_by_one_input_channel() {
        let base = build_forecaster(
            &ForecastConfig {
                use_composite: false,
                ..ForecastConfig::default()
            },
            10,
        )
        .unwrap();
        let augmented = build_forecaster(
            &ForecastConfig {
                use_composite: true,
                ..ForecastConfig::default()
            },
            10,
        )
        .unwrap();
        // one extra input column in each of the four gate matrices
        assert_eq!(
            augmented.param_count() - base.param_count(),
            4 * ForecastConfig::default().lstm_hidden
        );
    }

    #[test]
    fn zero_weights_forecast_zero() {
        let mut model = build_forecaster(&ForecastConfig::default(), 3).unwrap();
        for t in model.params_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let window = vec![0.0; 21];
        let pred = model.predict(&window, 0.0);
        assert_eq!(pred, vec![0.0; 7]);
    }

    #[test]
    fn forecast_length_equals_horizon() {
        for horizon in [3usize, 7, 14] {
            let model = build_forecaster(
                &ForecastConfig {
                    horizon,
                    ..ForecastConfig::default()
                },
                2,
            )
            .unwrap();
            let window = vec![0.3; 21];
            assert_eq!(model.predict(&window, 0.5).len(), horizon);
        }
    }

    #[test]
    fn bad_horizons_rejected() {
        let config = ForecastConfig {
            horizon: 5,
            ..ForecastConfig::default()
        };
        assert!(matches!(
            build_forecaster(&config, 1),
            Err(ForecastError::BadHorizon(5))
        ));
        let config = ForecastConfig {
            horizon: 14,
            window_len: 10,
            ..ForecastConfig::default()
        };
        assert!(matches!(
            build_forecaster(&config, 1),
            Err(ForecastError::WindowUnderHorizon { .. })
        ));
    }

    #[test]
    fn detect_peak_rules() {
        // monotone improving → last epoch
        assert_eq!(detect_peak(&[1.0, 2.0, 3.0], 5), Some((3, 3.0)));
        // tie → first occurrence
        assert_eq!(detect_peak(&[1.0, 3.0, 2.0, 3.0], 5), Some((2, 3.0)));
        // flat → first epoch
        assert_eq!(detect_peak(&[2.0, 2.0, 2.0], 5), Some((1, 2.0)));
        assert_eq!(detect_peak(&[], 5), None);
    }

    fn flat_series(n: usize, level: u32, start: NaiveDate, days: usize) -> Vec<CaseSeries> {
        (0..n)
            .map(|i| CaseSeries {
                building_id: format!("b{i}"),
                start_date: start,
                counts: vec![level; days],
            })
            .collect()
    }

    fn quick_config() -> ForecastConfig {
        ForecastConfig {
            window_len: 14,
            lstm_hidden: 4,
            max_epochs: 30,
            patience: 6,
            origins_per_building: 2,
            batch_size: 16,
            lr: 0.02,
            seed: 1,
            ..ForecastConfig::default()
        }
    }

    #[test]
    fn constant_series_reach_near_zero_error_for_both_variants() {
        let window = windows::resurgence();
        let chains = default_chains();
        let series = flat_series(6, 5, window.start_date, window.n_days());
        let composites: HashMap<String, f64> =
            (0..6).map(|i| (format!("b{i}"), i as f64)).collect();
        let runs = run_chain(&chains[0], 7, &series, &composites, &quick_config()).unwrap();
        assert_eq!(runs.len(), 2);
        for run in &runs {
            // counts are constant at 5; peak metric is negated MAE
            assert!(run.peak > -0.35, "variant {:?}: {}", run.variant, run.peak);
        }
        let base = &runs[0];
        let augmented = &runs[1];
        assert!(augmented.peak >= base.peak - 0.25);
    }

    #[test]
    fn same_seed_reproduces_the_report() {
        let window = windows::resurgence();
        let chains = default_chains();
        let series = flat_series(4, 3, window.start_date, window.n_days());
        let composites: HashMap<String, f64> =
            (0..4).map(|i| (format!("b{i}"), 0.1 * i as f64)).collect();
        let a = run_chain(&chains[1], 3, &series, &composites, &quick_config()).unwrap();
        let b = run_chain(&chains[1], 3, &series, &composites, &quick_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_data_never_touches_the_test_window() {
        let window = windows::resurgence();
        let chains = default_chains();
        let days = window.n_days();
        let mut series = flat_series(3, 2, window.start_date, days);
        // poison every test-window day; training arrays must not change
        let clean = prepare_chain_data(&chains[0], 14, &series, &HashMap::new(), false).unwrap();
        for s in &mut series {
            for d in chains[0].test.dates() {
                let offset = (d - s.start_date).num_days() as usize;
                s.counts[offset] = 1_000_000;
            }
        }
        let poisoned = prepare_chain_data(&chains[0], 14, &series, &HashMap::new(), false).unwrap();
        assert_eq!(clean.train, poisoned.train);
        assert_eq!(clean.norm, poisoned.norm);
        // while the evaluation targets do see the poisoned counts
        assert_ne!(clean.test_actual, poisoned.test_actual);
    }

    #[test]
    fn missing_composite_is_an_error() {
        let window = windows::resurgence();
        let chains = default_chains();
        let series = flat_series(2, 1, window.start_date, window.n_days());
        let composites: HashMap<String, f64> =
            [("b0".to_string(), 0.5)].into_iter().collect();
        assert!(matches!(
            run_chain(&chains[0], 3, &series, &composites, &quick_config()),
            Err(ForecastError::MissingComposite(b)) if b == "b1"
        ));
    }

    #[test]
    fn test_window_outside_coverage_is_an_error() {
        let window = windows::resurgence();
        let chains = default_chains();
        // series end long before the first test window
        let series = flat_series(2, 1, window.start_date, 60);
        let composites: HashMap<String, f64> = (0..2)
            .map(|i| (format!("b{i}"), 0.0))
            .collect();
        assert!(matches!(
            run_chain(&chains[0], 3, &series, &composites, &quick_config()),
            Err(ForecastError::TestOutsideCoverage { .. })
        ));
    }
}
