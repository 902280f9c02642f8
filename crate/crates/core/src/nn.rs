//! Neural network layers: embedding tables, an LSTM cell, valid 1-D
//! convolution, dense layers, and the sigmoid/BCE output pairing.
//!
//! Each parameter struct owns plain [`Tensor`]s. To run under autodiff, a
//! layer is bound onto a tape once per forward/backward cycle (`bind`),
//! producing `Var` handles that every record in the batch shares — so
//! gradients accumulate into a single leaf per parameter. Each layer also
//! has a tape-free `*_fast` path used where only values are needed (Shapley
//! estimation, per-epoch evaluation); the two paths compute identical
//! arithmetic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ndcore::{NdError, Result, Tape, Tensor, Var};

/// Glorot-uniform sample bound for a layer with the given fan-in/out.
fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = glorot_bound(fan_in, fan_out);
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, values)
        .expect("init shapes are valid")
        .with_grad()
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, sd: f64) -> Tensor {
    use rand_distr::Distribution;
    let dist = rand_distr::Normal::new(0.0, sd).expect("valid sd");
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape, values)
        .expect("init shapes are valid")
        .with_grad()
}

/// Lookup table mapping a category index to a learned vector.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    n_levels: usize,
    dim: usize,
    pub weights: Tensor,
}

impl EmbeddingTable {
    /// New table with N(0, 0.05) entries.
    pub fn init(n_levels: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            n_levels,
            dim,
            weights: normal_tensor(rng, vec![n_levels, dim], 0.05),
        }
    }

    /// Table with explicit weights, row-major `[n_levels, dim]`.
    pub fn from_weights(n_levels: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        Ok(Self {
            n_levels,
            dim,
            weights: Tensor::new(vec![n_levels, dim], weights)?.with_grad(),
        })
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bind(&self, tape: &Tape) -> Var {
        tape.leaf(&self.weights)
    }

    /// Row `index` of a bound table.
    pub fn lookup(tape: &Tape, table: &Var, index: usize) -> Result<Var> {
        tape.lookup(table, index)
    }

    /// Tape-free row access.
    pub fn row(&self, index: usize) -> Result<&[f64]> {
        if index >= self.n_levels {
            return Err(NdError::IndexOutOfRange {
                what: "embedding table rows",
                index,
                size: self.n_levels,
            });
        }
        Ok(&self.weights.values()[index * self.dim..(index + 1) * self.dim])
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weights]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights]
    }
}

/// Gate parameters of one LSTM cell: input, forget, output, and cell
/// candidate, each with input-to-gate and hidden-to-gate weights plus bias.
#[derive(Debug, Clone)]
pub struct LstmCellParams {
    input_dim: usize,
    hidden_dim: usize,
    /// `[W_i, W_f, W_o, W_g]`, each `[hidden, input]`.
    pub w: Vec<Tensor>,
    /// `[U_i, U_f, U_o, U_g]`, each `[hidden, hidden]`.
    pub u: Vec<Tensor>,
    /// `[b_i, b_f, b_o, b_g]`, each `[hidden]`.
    pub b: Vec<Tensor>,
}

pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_O: usize = 2;
pub const GATE_G: usize = 3;

impl LstmCellParams {
    /// Glorot-uniform gate weights; biases zero except the forget-gate bias,
    /// which starts at 1.0 so early training favors carrying cell state.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = (0..4)
            .map(|_| glorot_tensor(rng, vec![hidden_dim, input_dim], input_dim, hidden_dim))
            .collect();
        let u = (0..4)
            .map(|_| glorot_tensor(rng, vec![hidden_dim, hidden_dim], hidden_dim, hidden_dim))
            .collect();
        let b = (0..4)
            .map(|gate| {
                let fill = if gate == GATE_F { 1.0 } else { 0.0 };
                Tensor::new(vec![hidden_dim], vec![fill; hidden_dim])
                    .expect("bias shape valid")
                    .with_grad()
            })
            .collect();
        Self {
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn bind(&self, tape: &Tape) -> BoundLstm {
        BoundLstm {
            w: self.w.iter().map(|t| tape.leaf(t)).collect(),
            u: self.u.iter().map(|t| tape.leaf(t)).collect(),
            b: self.b.iter().map(|t| tape.leaf(t)).collect(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.w.iter().chain(&self.u).chain(&self.b).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.w
            .iter_mut()
            .chain(self.u.iter_mut())
            .chain(self.b.iter_mut())
            .collect()
    }

    /// Tape-free cell step; mirrors [`lstm_step`] exactly.
    pub fn step_fast(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden_dim;
        let gate = |idx: usize| -> Vec<f64> {
            let w = self.w[idx].values();
            let u = self.u[idx].values();
            let b = self.b[idx].values();
            (0..hd)
                .map(|r| {
                    let wx: f64 = w[r * self.input_dim..(r + 1) * self.input_dim]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum();
                    let uh: f64 = u[r * hd..(r + 1) * hd]
                        .iter()
                        .zip(h)
                        .map(|(a, b)| a * b)
                        .sum();
                    wx + uh + b[r]
                })
                .collect()
        };
        let sig = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(sigmoid_scalar).collect() };
        let i = sig(gate(GATE_I));
        let f = sig(gate(GATE_F));
        let o = sig(gate(GATE_O));
        let g: Vec<f64> = gate(GATE_G).into_iter().map(f64::tanh).collect();
        let c_next: Vec<f64> = (0..hd).map(|r| f[r] * c[r] + i[r] * g[r]).collect();
        let h_next: Vec<f64> = (0..hd).map(|r| o[r] * c_next[r].tanh()).collect();
        (h_next, c_next)
    }
}

/// Tape handles for one LSTM cell's parameters.
pub struct BoundLstm {
    pub w: Vec<Var>,
    pub u: Vec<Var>,
    pub b: Vec<Var>,
}

/// One LSTM cell step on the tape:
/// `i = σ(W_i x + U_i h + b_i)`, `f`/`o` likewise, `g = tanh(W_g x + U_g h + b_g)`,
/// `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
pub fn lstm_step(p: &BoundLstm, x: &Var, h: &Var, c: &Var) -> Result<(Var, Var)> {
    let gate = |idx: usize| -> Result<Var> {
        p.w[idx]
            .matvec(x)?
            .add(&p.u[idx].matvec(h)?)?
            .add(&p.b[idx])
    };
    let i = gate(GATE_I)?.sigmoid()?;
    let f = gate(GATE_F)?.sigmoid()?;
    let o = gate(GATE_O)?.sigmoid()?;
    let g = gate(GATE_G)?.tanh()?;
    let c_next = f.mul(c)?.add(&i.mul(&g)?)?;
    let h_next = o.mul(&c_next.tanh()?)?;
    Ok((h_next, c_next))
}

/// Valid cross-correlation parameters.
#[derive(Debug, Clone)]
pub struct Conv1dParams {
    in_channels: usize,
    out_channels: usize,
    kernel_size: usize,
    /// `[out_channels, in_channels, kernel_size]`.
    pub kernels: Tensor,
    /// `[out_channels]`.
    pub bias: Tensor,
}

impl Conv1dParams {
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel_size;
        let fan_out = out_channels * kernel_size;
        Self {
            in_channels,
            out_channels,
            kernel_size,
            kernels: glorot_tensor(
                rng,
                vec![out_channels, in_channels, kernel_size],
                fan_in,
                fan_out,
            ),
            bias: Tensor::new(vec![out_channels], vec![0.0; out_channels])
                .expect("bias shape valid")
                .with_grad(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn bind(&self, tape: &Tape) -> BoundConv1d {
        BoundConv1d {
            kernels: tape.leaf(&self.kernels),
            bias: tape.leaf(&self.bias),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.kernels, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernels, &mut self.bias]
    }

    /// Tape-free convolution of a `[in_channels, len]` input.
    pub fn forward_fast(&self, input: &[f64], len: usize) -> Vec<f64> {
        let k = self.kernel_size;
        let out_len = len - k + 1;
        let kv = self.kernels.values();
        let bv = self.bias.values();
        let mut out = vec![0.0; self.out_channels * out_len];
        for o in 0..self.out_channels {
            for j in 0..out_len {
                let mut acc = bv[o];
                for c in 0..self.in_channels {
                    for t in 0..k {
                        acc += input[c * len + j + t] * kv[(o * self.in_channels + c) * k + t];
                    }
                }
                out[o * out_len + j] = acc;
            }
        }
        out
    }
}

/// Tape handles for convolution parameters.
pub struct BoundConv1d {
    pub kernels: Var,
    pub bias: Var,
}

/// Valid cross-correlation of a `[channels, len]` input on the tape.
pub fn conv1d(tape: &Tape, p: &BoundConv1d, input: &Var) -> Result<Var> {
    tape.conv1d(input, &p.kernels, &p.bias)
}

/// Fully connected layer parameters.
#[derive(Debug, Clone)]
pub struct DenseParams {
    in_dim: usize,
    out_dim: usize,
    /// `[out_dim, in_dim]`.
    pub weights: Tensor,
    /// `[out_dim]`.
    pub bias: Tensor,
}

impl DenseParams {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: glorot_tensor(rng, vec![out_dim, in_dim], in_dim, out_dim),
            bias: Tensor::new(vec![out_dim], vec![0.0; out_dim])
                .expect("bias shape valid")
                .with_grad(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn bind(&self, tape: &Tape) -> BoundDense {
        BoundDense {
            weights: tape.leaf(&self.weights),
            bias: tape.leaf(&self.bias),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }

    /// Tape-free `Wx + b`.
    pub fn forward_fast(&self, x: &[f64]) -> Vec<f64> {
        let w = self.weights.values();
        let b = self.bias.values();
        (0..self.out_dim)
            .map(|r| {
                b[r] + w[r * self.in_dim..(r + 1) * self.in_dim]
                    .iter()
                    .zip(x)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// Tape handles for dense-layer parameters.
pub struct BoundDense {
    pub weights: Var,
    pub bias: Var,
}

/// `Wx + b` on the tape.
pub fn dense(p: &BoundDense, x: &Var) -> Result<Var> {
    p.weights.matvec(x)?.add(&p.bias)
}

/// Mean binary cross-entropy of probabilities against 0/1 targets, with the
/// engine's 1e-7 probability clamp.
pub fn bce_loss(tape: &Tape, p: &Var, targets: &[f64]) -> Result<Var> {
    tape.bce(p, targets)
}

/// Scalar stable sigmoid, for tape-free paths.
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
