use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{build_model, MhhcnnConfig, MhhcnnModel};
use super::{Encoder, MhhcnnError, Result};
use crate::metrics::{kfold_split, roc_auc};
use crate::ndcore::{adam_step, AdamHyper, AdamState, NdError, Tape};
use crate::schema::Dataset;

/// The cutoff grid searched when the caller does not supply one.
pub const DEFAULT_CUTOFF_GRID: [u32; 8] = [1, 5, 10, 25, 50, 75, 105, 150];

/// Per-epoch training trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub epoch_auc: Vec<f64>,
    /// AUC of a full forward pass after the last update.
    pub final_auc: f64,
    pub epochs_run: usize,
    pub seed: u64,
}

/// A model paired with the encoder its inputs went through.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: MhhcnnModel,
    pub encoder: Encoder,
    pub schema_hash: String,
}

impl TrainedModel {
    /// Risk score for a raw record's values.
    pub fn predict_values(&self, values: &[crate::schema::FeatureValue]) -> Result<f64> {
        let indices = self.encoder.encode(values)?;
        self.model.predict_encoded(&indices)
    }
}

/// Labels buildings 1 iff their accumulated count reaches the cutoff.
pub fn binarize(counts: &[u32], cutoff: u32) -> Result<Vec<bool>> {
    if cutoff == 0 {
        return Err(MhhcnnError::ZeroCutoff);
    }
    Ok(counts.iter().map(|&c| c >= cutoff).collect())
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Minimizes BCE with Adam over encoded inputs. Deterministic for a given
/// `(config.seed, inputs, labels)`.
///
/// Per-epoch AUC is computed from the scores each record had when its batch
/// was visited; `final_auc` re-scores everything after the last update.
pub fn train(
    model: &mut MhhcnnModel,
    inputs: &[Vec<usize>],
    labels: &[bool],
    config: &MhhcnnConfig,
) -> Result<TrainReport> {
    if inputs.len() != labels.len() {
        return Err(MhhcnnError::InputMismatch {
            got: inputs.len(),
            expected: labels.len(),
        });
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(MhhcnnError::SingleClass {
            positives: pos,
            total: labels.len(),
        });
    }

    let hyper = AdamHyper::with_lr(config.lr);
    let mut state = AdamState::new(&model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut epoch_auc = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut scores = vec![0.0; inputs.len()];
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let step = (|| -> std::result::Result<f64, NdError> {
                let tape = Tape::new();
                let vars = model.bind(&tape);
                let mut preds = Vec::with_capacity(batch.len());
                for &i in batch {
                    let p = model
                        .forward(&tape, &vars, &inputs[i])
                        .map_err(flatten_engine)?;
                    preds.push(p);
                }
                for (slot, p) in batch.iter().zip(&preds) {
                    scores[*slot] = p.item()?;
                }
                let stacked = tape.concat(&preds)?;
                let targets: Vec<f64> = batch.iter().map(|&i| f64::from(labels[i])).collect();
                let loss = tape.bce(&stacked, &targets)?;
                let loss_value = loss.item()?;
                let mut grads = tape.backward(&loss)?;
                let collected: Vec<Vec<f64>> = vars
                    .iter()
                    .map(|v| {
                        grads
                            .take(v)
                            .expect("bound parameters are trainable leaves")
                    })
                    .collect();
                let mut params = model.params_mut();
                adam_step(&mut params, &collected, &mut state, &hyper)?;
                Ok(loss_value)
            })();
            match step {
                Ok(loss_value) => loss_sum += loss_value * batch.len() as f64,
                Err(source) => {
                    return Err(MhhcnnError::NonFinite {
                        epoch,
                        batch: batch_no,
                        source,
                    })
                }
            }
        }
        epoch_loss.push(loss_sum / inputs.len() as f64);
        epoch_auc.push(roc_auc(&scores, labels)?);
    }

    let final_scores: Vec<f64> = inputs
        .iter()
        .map(|idx| model.predict_encoded(idx))
        .collect::<Result<_>>()?;
    let final_auc = roc_auc(&final_scores, labels)?;
    Ok(TrainReport {
        epoch_loss,
        epoch_auc,
        final_auc,
        epochs_run: config.epochs,
        seed: config.seed,
    })
}

/// An `MhhcnnError::Engine` raised inside a batch step, unwrapped back to
/// the engine error so the batch wrapper can attach epoch/batch context.
fn flatten_engine(err: MhhcnnError) -> NdError {
    match err {
        MhhcnnError::Engine(e) => e,
        other => NdError::Invalid(other.to_string()),
    }
}

/// Encoder fit + model build + training on the full dataset.
pub fn fit(
    dataset: &Dataset,
    labels: &[bool],
    config: &MhhcnnConfig,
) -> Result<(TrainedModel, TrainReport)> {
    let encoder = Encoder::fit_all(dataset)?;
    let inputs = encoder.encode_all(dataset)?;
    let mut model = build_model(&dataset.schema, config)?;
    let report = train(&mut model, &inputs, labels, config)?;
    Ok((
        TrainedModel {
            model,
            encoder,
            schema_hash: dataset.schema.content_hash(),
        },
        report,
    ))
}

/// One candidate's outcome in a cutoff search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffOutcome {
    pub cutoff: u32,
    pub training_auc: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffReport {
    pub best: u32,
    pub outcomes: Vec<CutoffOutcome>,
    pub seed: u64,
}

/// Trains one model per feasible candidate (same seed throughout) and picks
/// the cutoff with the highest training AUC, ties going to the smaller
/// cutoff. Candidates that leave a single class are skipped with a note.
pub fn select_cutoff(
    dataset: &Dataset,
    counts: &[u32],
    candidates: &[u32],
    config: &MhhcnnConfig,
) -> Result<CutoffReport> {
    let encoder = Encoder::fit_all(dataset)?;
    let inputs = encoder.encode_all(dataset)?;
    let mut outcomes = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, u32)> = None;
    for &cutoff in candidates {
        let labels = binarize(counts, cutoff)?;
        let (pos, neg) = class_counts(&labels);
        if pos == 0 || neg == 0 {
            outcomes.push(CutoffOutcome {
                cutoff,
                training_auc: None,
                skipped: Some(format!(
                    "degenerate labels: {pos} positive / {neg} negative"
                )),
            });
            continue;
        }
        let mut model = build_model(&dataset.schema, config)?;
        let report = train(&mut model, &inputs, &labels, config)?;
        let auc = report.final_auc;
        outcomes.push(CutoffOutcome {
            cutoff,
            training_auc: Some(auc),
            skipped: None,
        });
        best = match best {
            None => Some((auc, cutoff)),
            Some((b_auc, b_cut)) => {
                if auc > b_auc || (auc == b_auc && cutoff < b_cut) {
                    Some((auc, cutoff))
                } else {
                    Some((b_auc, b_cut))
                }
            }
        };
    }
    let (_, best) = best.ok_or(MhhcnnError::NoFeasibleCutoff)?;
    Ok(CutoffReport {
        best,
        outcomes,
        seed: config.seed,
    })
}

/// Stratified k-fold cross-validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    /// Held-out AUC per fold; `None` when the fold itself had one class
    /// (e.g. leave-one-out), in which case only the pooled AUC is
    /// informative.
    pub fold_aucs: Vec<Option<f64>>,
    /// Mean over the per-fold AUCs that exist, else the pooled AUC.
    pub mean_auc: f64,
    /// AUC over all held-out predictions pooled together.
    pub pooled_auc: f64,
    pub stratified: bool,
    pub seed: u64,
}

/// K-fold validation: encoder and model are rebuilt per fold from the
/// training split only, with per-fold derived seeds.
pub fn cross_validate(
    dataset: &Dataset,
    labels: &[bool],
    config: &MhhcnnConfig,
    k: usize,
) -> Result<CvReport> {
    let n = dataset.records.len();
    if labels.len() != n {
        return Err(MhhcnnError::InputMismatch {
            got: labels.len(),
            expected: n,
        });
    }
    let split = kfold_split(n, labels, k, config.seed)?;
    let mut fold_aucs = Vec::with_capacity(k);
    let mut pooled_scores = vec![0.0; n];

    for (fold_no, fold) in split.folds.iter().enumerate() {
        let in_fold: Vec<bool> = {
            let mut mask = vec![false; n];
            for &i in fold {
                mask[i] = true;
            }
            mask
        };
        let train_idx: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let train_labels: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
        let (pos, neg) = class_counts(&train_labels);
        if pos == 0 || neg == 0 {
            return Err(MhhcnnError::FoldSingleClass { fold: fold_no });
        }

        let encoder = Encoder::fit(dataset, &train_idx)?;
        let train_inputs = encoder.encode_records(dataset, &train_idx)?;
        let fold_config = MhhcnnConfig {
            seed: config.seed ^ (fold_no as u64 + 1),
            ..config.clone()
        };
        let mut model = build_model(&dataset.schema, &fold_config)?;
        train(&mut model, &train_inputs, &train_labels, &fold_config)?;

        let fold_inputs = encoder.encode_records(dataset, fold)?;
        let fold_scores: Vec<f64> = fold_inputs
            .iter()
            .map(|idx| model.predict_encoded(idx))
            .collect::<Result<_>>()?;
        for (&i, &s) in fold.iter().zip(&fold_scores) {
            pooled_scores[i] = s;
        }
        let fold_labels: Vec<bool> = fold.iter().map(|&i| labels[i]).collect();
        let (fp, fneg) = class_counts(&fold_labels);
        fold_aucs.push(if fp > 0 && fneg > 0 {
            Some(roc_auc(&fold_scores, &fold_labels)?)
        } else {
            None
        });
    }

    let pooled_auc = roc_auc(&pooled_scores, labels)?;
    let known: Vec<f64> = fold_aucs.iter().flatten().copied().collect();
    let mean_auc = if known.is_empty() {
        pooled_auc
    } else {
        known.iter().sum::<f64>() / known.len() as f64
    };
    Ok(CvReport {
        fold_aucs,
        mean_auc,
        pooled_auc,
        stratified: split.stratified,
        seed: config.seed,
    })
}
