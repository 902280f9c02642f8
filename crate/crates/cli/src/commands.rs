use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sesnet::explain::{
    default_baseline, estimate_shapley, inverse_rank_scores, rank_features,
    read_composites_csv, write_composite_scores_csv, write_ranking_csv, write_shapley_csv,
    ShapleyConfig,
};
use sesnet::forecast::{default_chains, run_chains, write_report_json, write_summary_csv};
use sesnet::mhhcnn::{
    binarize, cross_validate, fit, load_checkpoint, save_checkpoint, select_cutoff,
    DEFAULT_CUTOFF_GRID,
};
use sesnet::schema::{accumulate_cases, load_dataset, windows, CaseSeries, Dataset, StudyWindow};
use sesnet::synthgen::{generate, PlantedTruth};

use crate::config::RunConfig;

/// Which era's accumulated counts supervise the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Wave {
    /// Early waves, default cutoff 1.
    Early,
    /// Resurgence modeling period, default cutoff 105.
    Resurgence,
}

impl Wave {
    pub fn window(self) -> StudyWindow {
        match self {
            Wave::Early => windows::early_waves(),
            Wave::Resurgence => windows::resurgence_modeling(),
        }
    }

    pub fn default_cutoff(self) -> u32 {
        match self {
            Wave::Early => 1,
            Wave::Resurgence => 105,
        }
    }
}

#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn write_report<T: Serialize>(config: &RunConfig, path: &Path, body: T) -> anyhow::Result<()> {
    let wrapped = Provenance {
        config_hash: &config.content_hash(),
        seed: config.seed,
        body,
    };
    let json = serde_json::to_string_pretty(&wrapped)?;
    std::fs::write(path, json)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

fn load_inputs(config: &RunConfig) -> anyhow::Result<(Dataset, Vec<CaseSeries>)> {
    let schema = sesnet::schema::FeatureSchema::from_json_file(&config.schema_path)?;
    let (dataset, series) = load_dataset(&config.features_path, &config.cases_path, &schema)?;
    Ok((dataset, series))
}

/// Accumulated counts per building over the wave's label window, in dataset
/// record order (buildings without a series count as zero).
fn accumulated_counts(dataset: &Dataset, series: &[CaseSeries], window: &StudyWindow) -> Vec<u32> {
    let by_building: HashMap<&str, &CaseSeries> = series
        .iter()
        .map(|s| (s.building_id.as_str(), s))
        .collect();
    dataset
        .records
        .iter()
        .map(|r| {
            by_building
                .get(r.building_id.as_str())
                .map_or(0, |s| accumulate_cases(s, window))
        })
        .collect()
}

pub fn cmd_synth(config: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&config.out)?;
    let truth = PlantedTruth::default_for(&config.synth);
    let output = generate(&config.synth, &truth)?;
    output.write_all(&config.out)?;

    let districts = output.dataset.district_ids();
    println!(
        "generated {} buildings across {} districts ({})",
        output.dataset.n_buildings(),
        districts.len(),
        districts.join(", ")
    );
    for district in &districts {
        let n = output
            .dataset
            .records
            .iter()
            .filter(|r| &r.district_id == district)
            .count();
        println!("  district {district}: {n} buildings");
    }
    println!(
        "planted effects: {} early-era, {} resurgence-era features",
        truth.early_effects.len(),
        truth.resurgence_effects.len()
    );
    println!("wrote schema.json, features.csv, cases.csv, manifest.json under {}", config.out.display());
    Ok(())
}

pub fn cmd_train(
    config: &RunConfig,
    wave: Wave,
    cutoff: Option<u32>,
    model_out: Option<PathBuf>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(&config.out)?;
    let (dataset, series) = load_inputs(config)?;
    let window = wave.window();
    let cutoff = cutoff.unwrap_or_else(|| wave.default_cutoff());
    let counts = accumulated_counts(&dataset, &series, &window);
    let labels = binarize(&counts, cutoff)?;

    let (trained, report) = fit(&dataset, &labels, &config.mhhcnn)?;
    let model_path = model_out.unwrap_or_else(|| config.out.join("model.ckpt"));
    save_checkpoint(&trained, &model_path)?;
    write_report(config, &config.out.join("train_report.json"), &report)?;

    println!(
        "trained on {} buildings, window {} .. {}, cutoff {cutoff}",
        dataset.n_buildings(),
        window.start_date,
        window.end_date
    );
    println!(
        "final training AUC {:.4} after {} epochs (loss {:.4})",
        report.final_auc,
        report.epochs_run,
        report.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    println!("checkpoint: {}", model_path.display());
    Ok(())
}

pub fn cmd_cv(
    config: &RunConfig,
    wave: Wave,
    cutoff: Option<u32>,
    folds: usize,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(&config.out)?;
    let (dataset, series) = load_inputs(config)?;
    let window = wave.window();
    let cutoff = cutoff.unwrap_or_else(|| wave.default_cutoff());
    let counts = accumulated_counts(&dataset, &series, &window);
    let labels = binarize(&counts, cutoff)?;

    let report = cross_validate(&dataset, &labels, &config.mhhcnn, folds)?;
    write_report(config, &config.out.join("cv_report.json"), &report)?;

    println!(
        "{folds}-fold cross-validation at cutoff {cutoff} ({})",
        if report.stratified {
            "stratified"
        } else {
            "unstratified"
        }
    );
    for (i, auc) in report.fold_aucs.iter().enumerate() {
        match auc {
            Some(v) => println!("  fold {:2}: AUC {v:.4}", i + 1),
            None => println!("  fold {:2}: single-class fold (pooled only)", i + 1),
        }
    }
    println!("mean AUC {:.4}  pooled AUC {:.4}", report.mean_auc, report.pooled_auc);
    Ok(())
}

pub fn cmd_cutoff(
    config: &RunConfig,
    wave: Wave,
    grid: Option<Vec<u32>>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(&config.out)?;
    let (dataset, series) = load_inputs(config)?;
    let window = wave.window();
    let counts = accumulated_counts(&dataset, &series, &window);
    let grid = grid.unwrap_or_else(|| DEFAULT_CUTOFF_GRID.to_vec());

    let report = select_cutoff(&dataset, &counts, &grid, &config.mhhcnn)?;
    write_report(config, &config.out.join("cutoff_report.json"), &report)?;

    println!("cutoff search over {:?}", grid);
    for outcome in &report.outcomes {
        match (&outcome.training_auc, &outcome.skipped) {
            (Some(auc), _) => println!("  cutoff {:>4}: training AUC {auc:.4}", outcome.cutoff),
            (None, Some(reason)) => {
                println!("  cutoff {:>4}: skipped ({reason})", outcome.cutoff)
            }
            _ => {}
        }
    }
    println!("selected cutoff: {}", report.best);
    Ok(())
}

pub fn cmd_explain(
    config: &RunConfig,
    model_path: Option<PathBuf>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(&config.out)?;
    let (dataset, _) = load_inputs(config)?;
    let model_path = model_path.unwrap_or_else(|| config.out.join("model.ckpt"));
    let trained = load_checkpoint(&model_path, &dataset.schema)?;

    let inputs = trained.encoder.encode_all(&dataset)?;
    let baseline = default_baseline(&dataset.schema, &inputs);
    let building_ids: Vec<String> = dataset
        .records
        .iter()
        .map(|r| r.building_id.clone())
        .collect();
    let feature_ids: Vec<String> = dataset
        .schema
        .features()
        .iter()
        .map(|f| f.id.clone())
        .collect();
    let shap_config = ShapleyConfig {
        n_permutations: config.shapley.n_permutations,
        exact_max_features: config.shapley.exact_max_features,
        seed: config.seed,
    };
    let estimate = estimate_shapley(
        &trained,
        &inputs,
        &building_ids,
        &feature_ids,
        baseline,
        &shap_config,
    )?;
    write_shapley_csv(&estimate, &config.out.join("shapley.csv"))?;

    let districts: Vec<String> = dataset
        .records
        .iter()
        .map(|r| r.district_id.clone())
        .collect();
    let mut rankings = Vec::new();
    for district in dataset.district_ids() {
        let ranking = rank_features(&estimate, &districts, &district)?;
        write_ranking_csv(&ranking, &config.out.join(format!("ranking_{district}.csv")))?;
        println!("district {district} top features:");
        for (i, f) in ranking.ordered_features.iter().take(5).enumerate() {
            println!("  {:>2}. {f} (mean |phi| {:.5})", i + 1, ranking.mean_abs_phi[i]);
        }
        rankings.push(ranking);
    }
    let table = inverse_rank_scores(&rankings, config.shapley.top_k);
    write_composite_scores_csv(&table, &config.out.join("composite_scores.csv"))?;

    println!("cross-district totals (top 10):");
    for row in table.rows.iter().take(10) {
        println!("  {:>3}  {}", row.total, row.feature_id);
    }
    println!(
        "wrote shapley.csv, ranking_<district>.csv, composite_scores.csv under {}",
        config.out.display()
    );
    Ok(())
}

pub fn cmd_chain(
    config: &RunConfig,
    horizons: Option<Vec<usize>>,
    shapley_path: Option<PathBuf>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(&config.out)?;
    let (dataset, series) = load_inputs(config)?;
    let shapley_path = shapley_path.unwrap_or_else(|| config.out.join("shapley.csv"));
    let composites: HashMap<String, f64> =
        read_composites_csv(&shapley_path)?.into_iter().collect();

    // roster: every building, including any with an all-zero (absent)
    // series; sparse files mean "no case that day", so observation coverage
    // runs to the resurgence window end regardless of the last nonzero row
    let by_building: HashMap<&str, &CaseSeries> = series
        .iter()
        .map(|s| (s.building_id.as_str(), s))
        .collect();
    let resurgence = windows::resurgence();
    let full_series: Vec<CaseSeries> = dataset
        .records
        .iter()
        .map(|r| {
            let mut s = by_building
                .get(r.building_id.as_str())
                .map(|s| (*s).clone())
                .unwrap_or_else(|| CaseSeries {
                    building_id: r.building_id.clone(),
                    start_date: resurgence.start_date,
                    counts: Vec::new(),
                });
            let covered = (resurgence.end_date - s.start_date).num_days();
            if covered >= 0 {
                let need = covered as usize + 1;
                if s.counts.len() < need {
                    s.counts.resize(need, 0);
                }
            }
            s
        })
        .collect();

    let chains = default_chains();
    let horizons = horizons.unwrap_or_else(|| vec![3, 7, 14]);
    let report = run_chains(&chains, &horizons, &full_series, &composites, &config.forecast)?;
    write_report_json(&report, &config.out.join("forecast_report.json"))?;
    write_summary_csv(&report, &config.out.join("forecast_summary.csv"))?;

    println!("forward-chaining validation over horizons {horizons:?}");
    println!("chain  horizon  variant    peak        epoch");
    for run in &report.runs {
        println!(
            "{:>5}  {:>7}  {:<9}  {:>10.4}  {:>5}",
            run.chain,
            run.horizon,
            match run.variant {
                sesnet::forecast::Variant::Base => "base",
                sesnet::forecast::Variant::Augmented => "augmented",
            },
            run.peak,
            run.epoch_at_peak
        );
    }
    println!(
        "wrote forecast_report.json, forecast_summary.csv under {}",
        config.out.display()
    );
    Ok(())
}

