use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::{NdError, Result};

/// Outcome of a finite-difference check: per-input and overall maxima of
/// the relative error `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_input: Vec<f64>,
    pub max_rel_error: f64,
}

/// Compares analytic gradients of a scalar-valued tensor function against
/// central finite differences at step `eps`.
///
/// Inputs with `requires_grad == false` are held fixed and excluded from the
/// report (their slot is absent, mirrored as NaN-free zero-length handling:
/// `per_input` has one entry per *tracked* input, in input order).
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(NdError::Invalid(format!("eps must be positive, got {eps}")));
    }
    let eval = |points: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = points.iter().map(|t| tape.leaf(t)).collect();
        let out = f(&tape, &vars)?;
        let v = out.values();
        if v.len() != 1 {
            return Err(NdError::NonScalarLoss { shape: out.shape() });
        }
        Ok(v[0])
    };

    // analytic pass
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&tape, &vars)?;
    if out.values().len() != 1 {
        return Err(NdError::NonScalarLoss { shape: out.shape() });
    }
    let grads = tape.backward(&out)?;

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut per_input = Vec::new();
    let mut max_rel = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        if !input.requires_grad() {
            continue;
        }
        let analytic = grads
            .get(&vars[i])
            .expect("tracked leaf always has a gradient entry")
            .to_vec();
        let mut worst = 0.0f64;
        for j in 0..input.len() {
            let orig = work[i].values()[j];
            work[i].values_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[i].values_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[i].values_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = (analytic[j].abs() + numeric.abs()).max(1e-8);
            worst = worst.max((analytic[j] - numeric).abs() / denom);
        }
        max_rel = max_rel.max(worst);
        per_input.push(worst);
    }
    Ok(GradCheckReport {
        per_input,
        max_rel_error: max_rel,
    })
}
