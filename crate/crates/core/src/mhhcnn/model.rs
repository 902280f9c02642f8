use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MhhcnnError, Result};
use crate::ndcore::{Tape, Tensor, Var};
use crate::nn::{
    conv1d, dense, lstm_step, sigmoid_scalar, BoundConv1d, BoundDense, BoundLstm, Conv1dParams,
    DenseParams, EmbeddingTable, LstmCellParams,
};
use crate::schema::{FeatureSchema, SesLevel};

/// Hyperparameters of the classifier. All widths are overridable; the
/// defaults are sized for few-hundred-building datasets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MhhcnnConfig {
    pub embed_dim: usize,
    pub lstm_hidden: usize,
    pub conv_out_channels: usize,
    pub conv_kernel_size: usize,
    pub dense_widths: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MhhcnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 8,
            lstm_hidden: 8,
            conv_out_channels: 4,
            conv_kernel_size: 3,
            dense_widths: vec![32],
            lr: 0.01,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MhhcnnConfig {
    fn validate(&self) -> Result<()> {
        for (value, field) in [
            (self.embed_dim, "embed_dim"),
            (self.lstm_hidden, "lstm_hidden"),
            (self.conv_out_channels, "conv_out_channels"),
            (self.conv_kernel_size, "conv_kernel_size"),
            (self.epochs, "epochs"),
            (self.batch_size, "batch_size"),
        ] {
            if value == 0 {
                return Err(MhhcnnError::BadConfig { field });
            }
        }
        if self.lr <= 0.0 {
            return Err(MhhcnnError::BadConfig { field: "lr" });
        }
        if self.dense_widths.iter().any(|&w| w == 0) {
            return Err(MhhcnnError::BadConfig {
                field: "dense_widths",
            });
        }
        Ok(())
    }
}

/// One per-feature input head: category index → embedding → LSTM transform.
#[derive(Debug, Clone)]
pub struct Head {
    pub embedding: EmbeddingTable,
    pub lstm: LstmCellParams,
}

/// The assembled classifier.
///
/// Heads are stored in schema order; `level_positions` groups them by
/// socioecological level for the per-level convolutions.
#[derive(Debug, Clone)]
pub struct MhhcnnModel {
    config: MhhcnnConfig,
    feature_ids: Vec<String>,
    cardinalities: Vec<usize>,
    level_positions: Vec<(SesLevel, Vec<usize>)>,
    pub heads: Vec<Head>,
    pub convs: Vec<Conv1dParams>,
    pub hidden: Vec<DenseParams>,
    pub output: DenseParams,
}

/// Builds the model for a schema: one head per feature, one convolution per
/// populated level, then the merge dense stack ending in a sigmoid scalar.
pub fn build_model(schema: &FeatureSchema, config: &MhhcnnConfig) -> Result<MhhcnnModel> {
    config.validate()?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed);

    let mut level_positions = Vec::new();
    for level in SesLevel::ALL {
        let positions = schema.level_positions(level);
        if positions.is_empty() {
            continue;
        }
        let length = positions.len() * config.lstm_hidden;
        if config.conv_kernel_size > length {
            return Err(MhhcnnError::KernelTooWide {
                level,
                length,
                kernel: config.conv_kernel_size,
            });
        }
        level_positions.push((level, positions));
    }

    let heads: Vec<Head> = schema
        .features()
        .iter()
        .map(|spec| Head {
            embedding: EmbeddingTable::init(spec.index_cardinality(), config.embed_dim, &mut rng),
            lstm: LstmCellParams::init(config.embed_dim, config.lstm_hidden, &mut rng),
        })
        .collect();

    let mut convs = Vec::new();
    let mut merged_dim = 0;
    for (_, positions) in &level_positions {
        let length = positions.len() * config.lstm_hidden;
        convs.push(Conv1dParams::init(
            1,
            config.conv_out_channels,
            config.conv_kernel_size,
            &mut rng,
        ));
        merged_dim += config.conv_out_channels * (length - config.conv_kernel_size + 1);
    }

    let mut hidden = Vec::new();
    let mut in_dim = merged_dim;
    for &width in &config.dense_widths {
        hidden.push(DenseParams::init(in_dim, width, &mut rng));
        in_dim = width;
    }
    let output = DenseParams::init(in_dim, 1, &mut rng);

    Ok(MhhcnnModel {
        config: config.clone(),
        feature_ids: schema.features().iter().map(|f| f.id.clone()).collect(),
        cardinalities: schema
            .features()
            .iter()
            .map(|f| f.index_cardinality())
            .collect(),
        level_positions,
        heads,
        convs,
        hidden,
        output,
    })
}

impl MhhcnnModel {
    pub fn config(&self) -> &MhhcnnConfig {
        &self.config
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn n_features(&self) -> usize {
        self.heads.len()
    }

    pub fn levels(&self) -> &[(SesLevel, Vec<usize>)] {
        &self.level_positions
    }

    #[cfg(test)]
    pub(crate) fn levels_mut(&mut self) -> &mut Vec<(SesLevel, Vec<usize>)> {
        &mut self.level_positions
    }

    /// Parameter tensors in a fixed visit order (heads in schema order, then
    /// convolutions, then the dense stack). Checkpoints, Adam state, and
    /// gradient collection all rely on this order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for head in &self.heads {
            out.extend(head.embedding.params());
            out.extend(head.lstm.params());
        }
        for conv in &self.convs {
            out.extend(conv.params());
        }
        for layer in &self.hidden {
            out.extend(layer.params());
        }
        out.extend(self.output.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for head in &mut self.heads {
            out.extend(head.embedding.params_mut());
            out.extend(head.lstm.params_mut());
        }
        for conv in &mut self.convs {
            out.extend(conv.params_mut());
        }
        for layer in &mut self.hidden {
            out.extend(layer.params_mut());
        }
        out.extend(self.output.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Binds every parameter onto the tape, in visit order.
    pub fn bind(&self, tape: &Tape) -> Vec<Var> {
        self.params().into_iter().map(|t| tape.leaf(t)).collect()
    }

    fn check_indices(&self, indices: &[usize]) -> Result<()> {
        if indices.len() != self.heads.len() {
            return Err(MhhcnnError::RecordWidth {
                got: indices.len(),
                expected: self.heads.len(),
            });
        }
        for (pos, (&idx, &card)) in indices.iter().zip(&self.cardinalities).enumerate() {
            if idx >= card {
                return Err(MhhcnnError::IndexRange {
                    feature: self.feature_ids[pos].clone(),
                    index: idx,
                    cardinality: card,
                });
            }
        }
        Ok(())
    }

    /// Tape forward pass for one encoded record, using parameter vars from
    /// [`MhhcnnModel::bind`] (or any same-ordered var list, as the gradient
    /// checker supplies).
    pub fn forward(&self, tape: &Tape, vars: &[Var], indices: &[usize]) -> Result<Var> {
        self.check_indices(indices)?;
        let hd = self.config.lstm_hidden;
        let zeros = tape.constant(vec![hd], vec![0.0; hd])?;

        // vars layout: 13 per head, 2 per conv, 2 per dense layer
        let head_vars = |pos: usize| -> (&Var, BoundLstm) {
            let base = pos * 13;
            (
                &vars[base],
                BoundLstm {
                    w: vars[base + 1..base + 5].to_vec(),
                    u: vars[base + 5..base + 9].to_vec(),
                    b: vars[base + 9..base + 13].to_vec(),
                },
            )
        };
        let conv_base = self.heads.len() * 13;
        let dense_base = conv_base + self.convs.len() * 2;

        let mut head_out: Vec<Option<Var>> = vec![None; self.heads.len()];
        for pos in 0..self.heads.len() {
            let (table, lstm) = head_vars(pos);
            let x = tape.lookup(table, indices[pos])?;
            let (h, _) = lstm_step(&lstm, &x, &zeros, &zeros)?;
            head_out[pos] = Some(h);
        }

        let mut level_out = Vec::new();
        for (lvl, (_, positions)) in self.level_positions.iter().enumerate() {
            let parts: Vec<Var> = positions
                .iter()
                .map(|&p| head_out[p].clone().expect("head computed above"))
                .collect();
            let signal = tape.concat(&parts)?;
            let length = positions.len() * hd;
            let as_channel = signal.reshape(vec![1, length])?;
            let conv = BoundConv1d {
                kernels: vars[conv_base + lvl * 2].clone(),
                bias: vars[conv_base + lvl * 2 + 1].clone(),
            };
            let convolved = conv1d(tape, &conv, &as_channel)?.tanh()?;
            let flat_len = self.config.conv_out_channels
                * (length - self.config.conv_kernel_size + 1);
            level_out.push(convolved.reshape(vec![flat_len])?);
        }

        let mut merged = tape.concat(&level_out)?;
        for (i, _) in self.hidden.iter().enumerate() {
            let layer = BoundDense {
                weights: vars[dense_base + i * 2].clone(),
                bias: vars[dense_base + i * 2 + 1].clone(),
            };
            merged = dense(&layer, &merged)?.tanh()?;
        }
        let out_layer = BoundDense {
            weights: vars[dense_base + self.hidden.len() * 2].clone(),
            bias: vars[dense_base + self.hidden.len() * 2 + 1].clone(),
        };
        Ok(dense(&out_layer, &merged)?.sigmoid()?)
    }

    /// Tape-free forward pass; computes the same arithmetic as
    /// [`MhhcnnModel::forward`] without recording.
    pub fn predict_encoded(&self, indices: &[usize]) -> Result<f64> {
        self.check_indices(indices)?;
        let hd = self.config.lstm_hidden;
        let zeros = vec![0.0; hd];

        let mut head_out: Vec<Vec<f64>> = Vec::with_capacity(self.heads.len());
        for (pos, head) in self.heads.iter().enumerate() {
            let x = head.embedding.row(indices[pos])?;
            let (h, _) = head.lstm.step_fast(x, &zeros, &zeros);
            head_out.push(h);
        }

        let mut merged = Vec::new();
        for (lvl, (_, positions)) in self.level_positions.iter().enumerate() {
            let mut signal = Vec::with_capacity(positions.len() * hd);
            for &p in positions {
                signal.extend_from_slice(&head_out[p]);
            }
            let convolved = self.convs[lvl].forward_fast(&signal, signal.len());
            merged.extend(convolved.into_iter().map(f64::tanh));
        }

        let mut x = merged;
        for layer in &self.hidden {
            x = layer.forward_fast(&x).into_iter().map(f64::tanh).collect();
        }
        let z = self.output.forward_fast(&x);
        Ok(sigmoid_scalar(z[0]))
    }
}
