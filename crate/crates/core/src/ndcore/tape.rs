use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::tensor::Tensor;
use super::{NdError, Result};

/// Probability clamp used by binary cross-entropy to keep logs finite.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar,
    Matmul,
    Matvec,
    Sigmoid,
    Tanh,
    Sum,
    Mean,
    Concat,
    Reshape,
    Conv1d { in_c: usize, len: usize, out_c: usize, k: usize },
    Lookup { row: usize },
    Bce { targets: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::Matmul => "matmul",
            Op::Matvec => "matvec",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Concat => "concat",
            Op::Reshape => "reshape",
            Op::Conv1d { .. } => "conv1d",
            Op::Lookup { .. } => "lookup",
            Op::Bce { .. } => "bce",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    shape: Vec<usize>,
    values: Vec<f64>,
    needs_grad: bool,
}

struct TapeInner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// A recording of primitive operations, in topological order.
///
/// Cloning a `Tape` clones the handle, not the recording; all clones share
/// one node list. A tape is single-use for differentiation: after
/// [`Tape::backward`] it is consumed and a second backward is an error.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one tensor-valued node on a tape.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].shape.clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.tape.inner.borrow().nodes[self.id].values.clone()
    }

    /// Value of a scalar node.
    pub fn item(&self) -> Result<f64> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        if node.values.len() != 1 {
            return Err(NdError::Invalid(format!(
                "item() on non-scalar node of shape {:?}",
                node.shape
            )));
        }
        Ok(node.values[0])
    }

    pub fn add(&self, rhs: &Var) -> Result<Var> {
        self.tape.elementwise(Op::Add, self, rhs)
    }

    pub fn sub(&self, rhs: &Var) -> Result<Var> {
        self.tape.elementwise(Op::Sub, self, rhs)
    }

    /// Hadamard (elementwise) product.
    pub fn mul(&self, rhs: &Var) -> Result<Var> {
        self.tape.elementwise(Op::Mul, self, rhs)
    }

    pub fn scale(&self, c: f64) -> Result<Var> {
        let (shape, values) = self.tape.with_node(self.id, |n| {
            (n.shape.clone(), n.values.iter().map(|v| v * c).collect())
        });
        self.tape.push(Op::Scale(c), vec![self.id], shape, values)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var> {
        let (shape, values) = self.tape.with_node(self.id, |n| {
            (n.shape.clone(), n.values.iter().map(|v| v + c).collect())
        });
        self.tape
            .push(Op::AddScalar, vec![self.id], shape, values)
    }

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Var) -> Result<Var> {
        self.tape.matmul(self, rhs)
    }

    /// Matrix-vector product `[m,n] x [n] -> [m]`.
    pub fn matvec(&self, rhs: &Var) -> Result<Var> {
        self.tape.matvec(self, rhs)
    }

    pub fn sigmoid(&self) -> Result<Var> {
        let (shape, values) = self.tape.with_node(self.id, |n| {
            (
                n.shape.clone(),
                n.values.iter().map(|&z| stable_sigmoid(z)).collect(),
            )
        });
        self.tape.push(Op::Sigmoid, vec![self.id], shape, values)
    }

    pub fn tanh(&self) -> Result<Var> {
        let (shape, values) = self.tape.with_node(self.id, |n| {
            (n.shape.clone(), n.values.iter().map(|v| v.tanh()).collect())
        });
        self.tape.push(Op::Tanh, vec![self.id], shape, values)
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&self) -> Result<Var> {
        let total: f64 = self.tape.with_node(self.id, |n| n.values.iter().sum());
        self.tape.push(Op::Sum, vec![self.id], vec![1], vec![total])
    }

    /// Mean of all elements, as a scalar node.
    pub fn mean(&self) -> Result<Var> {
        let (total, n): (f64, usize) = self
            .tape
            .with_node(self.id, |n| (n.values.iter().sum(), n.values.len()));
        self.tape
            .push(Op::Mean, vec![self.id], vec![1], vec![total / n as f64])
    }

    /// Reinterprets the value buffer under a new shape of equal size.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var> {
        let values: Vec<f64> = self.tape.with_node(self.id, |n| n.values.clone());
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NdError::ShapeMismatch {
                op: "reshape",
                details: format!("{} elements into shape {shape:?}", values.len()),
            });
        }
        self.tape.push(Op::Reshape, vec![self.id], shape, values)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    /// Records a leaf carrying the tensor's values; the leaf participates in
    /// the gradient map iff the tensor requires grad.
    pub fn leaf(&self, t: &Tensor) -> Var {
        self.push(
            Op::Leaf {
                trainable: t.requires_grad(),
            },
            vec![],
            t.shape().to_vec(),
            t.values().to_vec(),
        )
        .expect("leaf values are pre-validated")
    }

    /// A non-trainable leaf from raw values.
    pub fn constant(&self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NdError::ShapeMismatch {
                op: "leaf",
                details: format!("{} values into shape {shape:?}", values.len()),
            });
        }
        self.push(Op::Leaf { trainable: false }, vec![], shape, values)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.constant(vec![1], vec![v])
            .expect("scalar shape is always valid")
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// The op names in recording order; used to assert replay determinism.
    pub fn op_sequence(&self) -> Vec<&'static str> {
        self.inner.borrow().nodes.iter().map(|n| n.op.name()).collect()
    }

    fn with_node<R>(&self, id: usize, f: impl FnOnce(&Node) -> R) -> R {
        f(&self.inner.borrow().nodes[id])
    }

    fn same_tape(&self, v: &Var) -> Result<()> {
        if Rc::ptr_eq(&self.inner, &v.tape.inner) {
            Ok(())
        } else {
            Err(NdError::Invalid(
                "operands recorded on different tapes".into(),
            ))
        }
    }

    fn push(&self, op: Op, inputs: Vec<usize>, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        if !values.iter().all(|v| v.is_finite()) {
            return Err(NdError::NonFinite {
                op: op.name(),
                node: id,
            });
        }
        let needs_grad = match op {
            Op::Leaf { trainable } => trainable,
            _ => inputs.iter().any(|&i| inner.nodes[i].needs_grad),
        };
        inner.nodes.push(Node {
            op,
            inputs,
            shape,
            values,
            needs_grad,
        });
        Ok(Var {
            tape: self.clone(),
            id,
        })
    }

    fn elementwise(&self, op: Op, a: &Var, b: &Var) -> Result<Var> {
        self.same_tape(a)?;
        self.same_tape(b)?;
        let (shape, values) = {
            let inner = self.inner.borrow();
            let na = &inner.nodes[a.id];
            let nb = &inner.nodes[b.id];
            if na.shape != nb.shape {
                return Err(NdError::ShapeMismatch {
                    op: op.name(),
                    details: format!("{:?} vs {:?}", na.shape, nb.shape),
                });
            }
            let values = na
                .values
                .iter()
                .zip(&nb.values)
                .map(|(x, y)| match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                    Op::Mul => x * y,
                    _ => unreachable!("elementwise dispatch"),
                })
                .collect();
            (na.shape.clone(), values)
        };
        self.push(op, vec![a.id, b.id], shape, values)
    }

    fn matmul(&self, a: &Var, b: &Var) -> Result<Var> {
        self.same_tape(a)?;
        self.same_tape(b)?;
        let (m, k, n, values) = {
            let inner = self.inner.borrow();
            let na = &inner.nodes[a.id];
            let nb = &inner.nodes[b.id];
            if na.shape.len() != 2 || nb.shape.len() != 2 || na.shape[1] != nb.shape[0] {
                return Err(NdError::ShapeMismatch {
                    op: "matmul",
                    details: format!("{:?} x {:?}", na.shape, nb.shape),
                });
            }
            let (m, k) = (na.shape[0], na.shape[1]);
            let n = nb.shape[1];
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for p in 0..k {
                    let av = na.values[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        out[i * n + j] += av * nb.values[p * n + j];
                    }
                }
            }
            (m, k, n, out)
        };
        let _ = k;
        self.push(Op::Matmul, vec![a.id, b.id], vec![m, n], values)
    }

    fn matvec(&self, a: &Var, x: &Var) -> Result<Var> {
        self.same_tape(a)?;
        self.same_tape(x)?;
        let (m, values) = {
            let inner = self.inner.borrow();
            let na = &inner.nodes[a.id];
            let nx = &inner.nodes[x.id];
            if na.shape.len() != 2 || nx.shape.len() != 1 || na.shape[1] != nx.shape[0] {
                return Err(NdError::ShapeMismatch {
                    op: "matvec",
                    details: format!("{:?} x {:?}", na.shape, nx.shape),
                });
            }
            let (m, n) = (na.shape[0], na.shape[1]);
            let mut out = vec![0.0; m];
            for i in 0..m {
                let row = &na.values[i * n..(i + 1) * n];
                out[i] = row.iter().zip(&nx.values).map(|(w, v)| w * v).sum();
            }
            (m, out)
        };
        self.push(Op::Matvec, vec![a.id, x.id], vec![m], values)
    }

    /// Concatenates 1-D nodes in order.
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NdError::Invalid("concat of zero parts".into()));
        }
        for p in parts {
            self.same_tape(p)?;
        }
        let mut values = Vec::new();
        {
            let inner = self.inner.borrow();
            for p in parts {
                let node = &inner.nodes[p.id];
                if node.shape.len() != 1 {
                    return Err(NdError::ShapeMismatch {
                        op: "concat",
                        details: format!("expected 1-D parts, got {:?}", node.shape),
                    });
                }
                values.extend_from_slice(&node.values);
            }
        }
        let total = values.len();
        self.push(
            Op::Concat,
            parts.iter().map(|p| p.id).collect(),
            vec![total],
            values,
        )
    }

    /// Valid (no-padding, stride-1) cross-correlation.
    ///
    /// `input` is `[in_c, len]`, `kernels` is `[out_c, in_c, k]`, `bias` is
    /// `[out_c]`; the result is `[out_c, len - k + 1]`.
    pub fn conv1d(&self, input: &Var, kernels: &Var, bias: &Var) -> Result<Var> {
        self.same_tape(input)?;
        self.same_tape(kernels)?;
        self.same_tape(bias)?;
        let (in_c, len, out_c, k, values) = {
            let inner = self.inner.borrow();
            let ni = &inner.nodes[input.id];
            let nk = &inner.nodes[kernels.id];
            let nb = &inner.nodes[bias.id];
            if ni.shape.len() != 2 || nk.shape.len() != 3 || nb.shape.len() != 1 {
                return Err(NdError::ShapeMismatch {
                    op: "conv1d",
                    details: format!(
                        "input {:?}, kernels {:?}, bias {:?}",
                        ni.shape, nk.shape, nb.shape
                    ),
                });
            }
            let (in_c, len) = (ni.shape[0], ni.shape[1]);
            let (out_c, kc, k) = (nk.shape[0], nk.shape[1], nk.shape[2]);
            if kc != in_c || nb.shape[0] != out_c {
                return Err(NdError::ShapeMismatch {
                    op: "conv1d",
                    details: format!(
                        "input {:?}, kernels {:?}, bias {:?}",
                        ni.shape, nk.shape, nb.shape
                    ),
                });
            }
            if len < k {
                return Err(NdError::ShapeMismatch {
                    op: "conv1d",
                    details: format!("kernel size {k} exceeds input length {len}"),
                });
            }
            let out_len = len - k + 1;
            let mut out = vec![0.0; out_c * out_len];
            for o in 0..out_c {
                for j in 0..out_len {
                    let mut acc = nb.values[o];
                    for c in 0..in_c {
                        for t in 0..k {
                            acc += ni.values[c * len + j + t] * nk.values[(o * in_c + c) * k + t];
                        }
                    }
                    out[o * out_len + j] = acc;
                }
            }
            (in_c, len, out_c, k, out)
        };
        let out_len = len - k + 1;
        self.push(
            Op::Conv1d { in_c, len, out_c, k },
            vec![input.id, kernels.id, bias.id],
            vec![out_c, out_len],
            values,
        )
    }

    /// Selects row `row` of a 2-D table node; the backward pass accumulates
    /// gradient into that row only.
    pub fn lookup(&self, table: &Var, row: usize) -> Result<Var> {
        self.same_tape(table)?;
        let (dim, values) = {
            let inner = self.inner.borrow();
            let nt = &inner.nodes[table.id];
            if nt.shape.len() != 2 {
                return Err(NdError::ShapeMismatch {
                    op: "lookup",
                    details: format!("expected 2-D table, got {:?}", nt.shape),
                });
            }
            let (rows, dim) = (nt.shape[0], nt.shape[1]);
            if row >= rows {
                return Err(NdError::IndexOutOfRange {
                    what: "embedding table rows",
                    index: row,
                    size: rows,
                });
            }
            (dim, nt.values[row * dim..(row + 1) * dim].to_vec())
        };
        self.push(Op::Lookup { row }, vec![table.id], vec![dim], values)
    }

    /// Mean binary cross-entropy of predictions `p` against 0/1 `targets`.
    ///
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]` before the logs so the
    /// loss stays finite at saturation.
    pub fn bce(&self, p: &Var, targets: &[f64]) -> Result<Var> {
        self.same_tape(p)?;
        if let Some(bad) = targets.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(NdError::Invalid(format!(
                "bce target {bad} outside {{0,1}}"
            )));
        }
        let loss = {
            let inner = self.inner.borrow();
            let np = &inner.nodes[p.id];
            if np.shape.len() != 1 || np.values.len() != targets.len() {
                return Err(NdError::ShapeMismatch {
                    op: "bce",
                    details: format!(
                        "predictions {:?} vs {} targets",
                        np.shape,
                        targets.len()
                    ),
                });
            }
            let n = targets.len() as f64;
            np.values
                .iter()
                .zip(targets)
                .map(|(&p, &y)| {
                    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        };
        self.push(
            Op::Bce {
                targets: targets.to_vec(),
            },
            vec![p.id],
            vec![1],
            vec![loss],
        )
    }

    /// Reverse pass from a scalar loss node.
    ///
    /// Returns the gradient of the loss with respect to every trainable
    /// leaf. Consumes the tape: a second backward is an error.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        self.same_tape(loss)?;
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(NdError::TapeConsumed);
        }
        if inner.nodes.is_empty() {
            return Err(NdError::EmptyTape);
        }
        {
            let node = &inner.nodes[loss.id];
            if node.values.len() != 1 {
                return Err(NdError::NonScalarLoss {
                    shape: node.shape.clone(),
                });
            }
        }
        inner.consumed = true;

        let n_nodes = inner.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            if !inner.nodes[id].needs_grad || grads[id].is_none() {
                continue;
            }
            if matches!(inner.nodes[id].op, Op::Leaf { .. }) {
                continue;
            }
            let go = grads[id].take().expect("checked above");
            backprop_node(&inner.nodes, id, &go, &mut grads);
        }

        let mut map = HashMap::new();
        for (id, node) in inner.nodes.iter().enumerate() {
            if let Op::Leaf { trainable: true } = node.op {
                let g = grads[id]
                    .take()
                    .unwrap_or_else(|| vec![0.0; node.values.len()]);
                map.insert(id, g);
            }
        }
        Ok(Gradients { map })
    }
}

/// Distributes the output gradient `go` of node `id` into its inputs.
fn backprop_node(nodes: &[Node], id: usize, go: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let mut add_to = |input: usize, contrib: &dyn Fn(&mut Vec<f64>)| {
        if !nodes[input].needs_grad {
            return;
        }
        let slot =
            grads[input].get_or_insert_with(|| vec![0.0; nodes[input].values.len()]);
        contrib(slot);
    };
    match &node.op {
        Op::Leaf { .. } => {}
        Op::Add => {
            add_to(node.inputs[0], &|g| {
                g.iter_mut().zip(go).for_each(|(a, b)| *a += b)
            });
            add_to(node.inputs[1], &|g| {
                g.iter_mut().zip(go).for_each(|(a, b)| *a += b)
            });
        }
        Op::Sub => {
            add_to(node.inputs[0], &|g| {
                g.iter_mut().zip(go).for_each(|(a, b)| *a += b)
            });
            add_to(node.inputs[1], &|g| {
                g.iter_mut().zip(go).for_each(|(a, b)| *a -= b)
            });
        }
        Op::Mul => {
            let (a, b) = (node.inputs[0], node.inputs[1]);
            add_to(a, &|g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += go[i] * nodes[b].values[i];
                }
            });
            add_to(b, &|g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += go[i] * nodes[a].values[i];
                }
            });
        }
        Op::Scale(c) => {
            let c = *c;
            add_to(node.inputs[0], &|g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += go[i] * c;
                }
            });
        }
        Op::AddScalar => {
            add_to(node.inputs[0], &|g| {
                g.iter_mut().zip(go).for_each(|(a, b)| *a += b)
            });
        }
        Op::Matmul => {
            let (a, b) = (node.inputs[0], node.inputs[1]);
            let (m, k) = (nodes[a].shape[0], nodes[a].shape[1]);
            let n = nodes[b].shape[1];
            // dA = G . B^T ; dB = A^T . G
            add_to(a, &|g| {
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += go[i * n + j] * nodes[b].values[p * n + j];
                        }
                        g[i * k + p] += acc;
                    }
                }
            });
            add_to(b, &|g| {
                for p in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += nodes[a].values[i * k + p] * go[i * n + j];
                        }
                        g[p * n + j] += acc;
                    }
                }
            });
        }
        Op::Matvec => {
            let (a, x) = (node.inputs[0], node.inputs[1]);
            let (m, n) = (nodes[a].shape[0], nodes[a].shape[1]);
            add_to(a, &|g| {
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] += go[i] * nodes[x].values[j];
                    }
                }
            });
            add_to(x, &|g| {
                for j in 0..n {
                    let mut acc = 0.0;
                    for i in 0..m {
                        acc += nodes[a].values[i * n + j] * go[i];
                    }
                    g[j] += acc;
                }
            });
        }
        Op::Sigmoid => {
            add_to(node.inputs[0], &|g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    let s = node.values[i];
                    *gi += go[i] * s * (1.0 - s);
                }
            });
        }
        Op::Tanh => {
            add_to(node.inputs[0], &|g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    let t = node.values[i];
                    *gi += go[i] * (1.0 - t * t);
                }
            });
        }
        Op::Sum => {
            add_to(node.inputs[0], &|g| {
                for gi in g.iter_mut() {
                    *gi += go[0];
                }
            });
        }
        Op::Mean => {
            let n = nodes[node.inputs[0]].values.len() as f64;
            add_to(node.inputs[0], &|g| {
                for gi in g.iter_mut() {
                    *gi += go[0] / n;
                }
            });
        }
        Op::Concat => {
            let mut offset = 0;
            for &input in &node.inputs {
                let len = nodes[input].values.len();
                let slice = &go[offset..offset + len];
                add_to(input, &|g| {
                    g.iter_mut().zip(slice).for_each(|(a, b)| *a += b)
                });
                offset += len;
            }
        }
        Op::Reshape => {
            add_to(node.inputs[0], &|g| {
                g.iter_mut().zip(go).for_each(|(a, b)| *a += b)
            });
        }
        Op::Conv1d { in_c, len, out_c, k } => {
            let (in_c, len, out_c, k) = (*in_c, *len, *out_c, *k);
            let out_len = len - k + 1;
            let (input, kernels, bias) = (node.inputs[0], node.inputs[1], node.inputs[2]);
            add_to(input, &|g| {
                for o in 0..out_c {
                    for j in 0..out_len {
                        let go_v = go[o * out_len + j];
                        for c in 0..in_c {
                            for t in 0..k {
                                g[c * len + j + t] +=
                                    go_v * nodes[kernels].values[(o * in_c + c) * k + t];
                            }
                        }
                    }
                }
            });
            add_to(kernels, &|g| {
                for o in 0..out_c {
                    for j in 0..out_len {
                        let go_v = go[o * out_len + j];
                        for c in 0..in_c {
                            for t in 0..k {
                                g[(o * in_c + c) * k + t] +=
                                    go_v * nodes[input].values[c * len + j + t];
                            }
                        }
                    }
                }
            });
            add_to(bias, &|g| {
                for o in 0..out_c {
                    for j in 0..out_len {
                        g[o] += go[o * out_len + j];
                    }
                }
            });
        }
        Op::Lookup { row } => {
            let dim = node.values.len();
            let start = row * dim;
            add_to(node.inputs[0], &|g| {
                for (t, &v) in go.iter().enumerate() {
                    g[start + t] += v;
                }
            });
        }
        Op::Bce { targets } => {
            let p_node = node.inputs[0];
            let n = targets.len() as f64;
            add_to(p_node, &|g| {
                for (i, &y) in targets.iter().enumerate() {
                    let p = nodes[p_node].values[i];
                    // zero gradient where the clamp binds: the clamped value
                    // is locally constant in p there
                    if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                        continue;
                    }
                    g[i] += go[0] * (-y / p + (1.0 - y) / (1.0 - p)) / n;
                }
            });
        }
    }
}

fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradient of a scalar loss with respect to every trainable leaf.
pub struct Gradients {
    map: HashMap<usize, Vec<f64>>,
}

impl Gradients {
    /// Gradient for a leaf `Var`; `None` for non-trainable leaves and
    /// interior nodes.
    pub fn get(&self, var: &Var) -> Option<&[f64]> {
        self.map.get(&var.id).map(|v| v.as_slice())
    }

    pub fn take(&mut self, var: &Var) -> Option<Vec<f64>> {
        self.map.remove(&var.id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Tensor;

    fn leaf(tape: &Tape, shape: Vec<usize>, values: Vec<f64>) -> Var {
        tape.leaf(&Tensor::new(shape, values).unwrap().with_grad())
    }

    #[test]
    fn matmul_identity() {
        let tape = Tape::new();
        let eye = tape
            .constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])
            .unwrap();
        let a = tape
            .constant(vec![2, 2], vec![3.0, -1.0, 2.5, 7.0])
            .unwrap();
        let out = eye.matmul(&a).unwrap();
        assert_eq!(out.values(), vec![3.0, -1.0, 2.5, 7.0]);
    }

    #[test]
    fn add_zero_is_identity() {
        let tape = Tape::new();
        let x = tape.constant(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let z = tape.constant(vec![3], vec![0.0; 3]).unwrap();
        assert_eq!(x.add(&z).unwrap().values(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn matmul_hand_example() {
        // [[1,2],[3,4]] x [[5],[6]] = [[17],[39]]
        let tape = Tape::new();
        let a = tape
            .constant(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let b = tape.constant(vec![2, 1], vec![5.0, 6.0]).unwrap();
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.shape(), vec![2, 1]);
        assert_eq!(out.values(), vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_op() {
        let tape = Tape::new();
        let a = tape.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = tape.constant(vec![2, 2], vec![0.0; 4]).unwrap();
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul"), "{msg}");
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let tape = Tape::new();
        let x = leaf(&tape, vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let loss = x.sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_of_square_sum() {
        // loss = sum(x ⊙ x), x = [3] → grad = [6]
        let tape = Tape::new();
        let x = leaf(&tape, vec![1], vec![3.0]);
        let loss = x.mul(&x).unwrap().sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[6.0]);
    }

    #[test]
    fn double_backward_is_error() {
        let tape = Tape::new();
        let x = leaf(&tape, vec![2], vec![1.0, 2.0]);
        let loss = x.sum().unwrap();
        tape.backward(&loss).unwrap();
        assert!(matches!(
            tape.backward(&loss),
            Err(NdError::TapeConsumed)
        ));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = leaf(&tape, vec![2], vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(&x),
            Err(NdError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn frozen_leaf_absent_from_gradients() {
        let tape = Tape::new();
        let x = leaf(&tape, vec![2], vec![1.0, 2.0]);
        let frozen = tape.constant(vec![2], vec![3.0, 4.0]).unwrap();
        let loss = x.mul(&frozen).unwrap().sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[3.0, 4.0]);
        assert!(grads.get(&frozen).is_none());
    }

    #[test]
    fn non_finite_result_aborts_naming_node() {
        let tape = Tape::new();
        let x = tape.constant(vec![1], vec![1e200]).unwrap();
        let err = x.mul(&x).unwrap_err();
        match err {
            NdError::NonFinite { op, node } => {
                assert_eq!(op, "mul");
                assert_eq!(node, 1);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn bce_matches_hand_values() {
        let tape = Tape::new();
        let p = tape.constant(vec![1], vec![0.5]).unwrap();
        let loss = tape.bce(&p, &[1.0]).unwrap();
        assert!((loss.item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        // clamped saturation stays finite and tiny
        let p = tape.constant(vec![1], vec![1.0 - 1e-7]).unwrap();
        let loss = tape.bce(&p, &[1.0]).unwrap();
        let v = loss.item().unwrap();
        assert!(v > 0.0 && v < 2e-7, "{v}");
    }

    #[test]
    fn bce_rejects_non_binary_targets() {
        let tape = Tape::new();
        let p = tape.constant(vec![1], vec![0.5]).unwrap();
        assert!(tape.bce(&p, &[0.3]).is_err());
    }

    #[test]
    fn conv1d_hand_example() {
        // kernel [1,-1] over [3,5,2] → [-2, 3]
        let tape = Tape::new();
        let input = tape.constant(vec![1, 3], vec![3.0, 5.0, 2.0]).unwrap();
        let kernel = tape.constant(vec![1, 1, 2], vec![1.0, -1.0]).unwrap();
        let bias = tape.constant(vec![1], vec![0.0]).unwrap();
        let out = tape.conv1d(&input, &kernel, &bias).unwrap();
        assert_eq!(out.values(), vec![-2.0, 3.0]);
    }

    #[test]
    fn conv1d_rejects_short_input() {
        let tape = Tape::new();
        let input = tape.constant(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let kernel = tape.constant(vec![1, 1, 3], vec![1.0; 3]).unwrap();
        let bias = tape.constant(vec![1], vec![0.0]).unwrap();
        assert!(tape.conv1d(&input, &kernel, &bias).is_err());
    }

    #[test]
    fn lookup_out_of_range() {
        let tape = Tape::new();
        let table = tape.constant(vec![3, 2], vec![0.0; 6]).unwrap();
        assert!(tape.lookup(&table, 3).is_err());
    }

    #[test]
    fn forward_is_deterministic_and_replayable() {
        let run = || {
            let tape = Tape::new();
            let x = leaf(&tape, vec![4], vec![0.3, -0.7, 1.1, 0.0]);
            let y = x.tanh().unwrap().mul(&x).unwrap().mean().unwrap();
            (y.item().unwrap(), tape.node_count(), tape.op_sequence())
        };
        let (v1, n1, seq1) = run();
        let (v2, n2, seq2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(n1, n2);
        assert_eq!(seq1, seq2);
    }
}
