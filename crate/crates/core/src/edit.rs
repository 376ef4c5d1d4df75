//! Applying trained transformers: single edits, scaling sweeps and sequential
//! multi-attribute edits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::{displace, TransformerModel};
use crate::world::LatentCode;

#[derive(Debug, Clone, Copy)]
pub struct EditStep<'a> {
    pub model: &'a TransformerModel,
    pub alpha: f64,
}

/// How `f` is evaluated during a sequential edit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    /// `f` is evaluated at the latest intermediate code.
    #[default]
    Recompute,
    /// `f` is evaluated at the source code, so opposite steps cancel exactly.
    FixedAtSource,
}

pub fn edit(code: &LatentCode, model: &TransformerModel, alpha: f64) -> Result<LatentCode> {
    model.apply(code, alpha)
}

/// Left fold of edits. Returns the final code and every intermediate,
/// starting with `code` itself.
pub fn sequential_edit(code: &LatentCode, steps: &[EditStep<'_>], mode: SequenceMode) -> Result<(LatentCode, Vec<LatentCode>)> {
    let mut intermediates = Vec::with_capacity(steps.len() + 1);
    intermediates.push(code.clone());
    let mut current = code.clone();
    for (i, step) in steps.iter().enumerate() {
        let with_step = |e: Error| Error::InvalidArgument(format!("edit step {i}: {e}"));
        current = match mode {
            SequenceMode::Recompute => step.model.apply(&current, step.alpha).map_err(with_step)?,
            SequenceMode::FixedAtSource => {
                if !step.alpha.is_finite() {
                    return Err(with_step(Error::InvalidArgument(format!("non-finite scale {}", step.alpha))));
                }
                let f = step.model.edit_direction(code).map_err(with_step)?;
                if step.alpha == 0.0 {
                    current
                } else {
                    displace(&current, &f, step.alpha).map_err(with_step)?
                }
            }
        };
        intermediates.push(current.clone());
    }
    Ok((current, intermediates))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub factors: Vec<f64>,
    pub codes: Vec<LatentCode>,
}

/// Factors `(j / count) * 2d` for `j = 1..=count`.
pub fn sweep_factors(d: f64, count: usize) -> Result<Vec<f64>> {
    if d == 0.0 || !d.is_finite() {
        return Err(Error::InvalidArgument(format!("sweep magnitude must be finite and non-zero, got {d}")));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("sweep count must be positive".into()));
    }
    Ok((1..=count).map(|j| j as f64 / count as f64 * 2.0 * d).collect())
}

/// Edits the same source code at every sweep factor. With negative `d` the
/// factors decrease; they are kept in generation order.
pub fn sweep(code: &LatentCode, model: &TransformerModel, d: f64, count: usize) -> Result<SweepResult> {
    let factors = sweep_factors(d, count)?;
    let codes = factors.iter().map(|&a| edit(code, model, a)).collect::<Result<_>>()?;
    Ok(SweepResult { factors, codes })
}
