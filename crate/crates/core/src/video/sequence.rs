use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::l2_norm;
use crate::transformer::TransformerModel;
use crate::world::LatentCode;

/// Per-frame latent codes of uniform shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    frames: Vec<LatentCode>,
}

impl LatentSequence {
    pub fn new(frames: Vec<LatentCode>) -> Result<Self> {
        if let Some(first) = frames.first() {
            for (t, f) in frames.iter().enumerate() {
                if f.shape() != first.shape() {
                    return Err(Error::InvalidArgument(format!("sequence frame {t} has shape {:?}, expected {:?}", f.shape(), first.shape())));
                }
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[LatentCode] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn into_frames(self) -> Vec<LatentCode> {
        self.frames
    }
}

/// Mean `||w_{t+1} - w_t|| / sqrt(L * D)` over consecutive frames.
pub fn temporal_consistency(seq: &LatentSequence) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::InvalidArgument("temporal consistency needs at least two frames".into()));
    }
    let scale = (seq.frames[0].flat().len() as f64).sqrt();
    let total: f64 = seq
        .frames
        .windows(2)
        .map(|p| {
            let diff: Vec<f64> = p[1].flat().iter().zip(p[0].flat()).map(|(a, b)| a - b).collect();
            l2_norm(&diff) / scale
        })
        .sum();
    Ok(total / (seq.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSchedule {
    Constant { alpha: f64 },
    /// Linear from `start` at the first frame to `end` at the last.
    Ramp { start: f64, end: f64 },
}

impl AlphaSchedule {
    pub fn alpha_at(&self, frame: usize, frames: usize) -> f64 {
        match *self {
            Self::Constant { alpha } => alpha,
            Self::Ramp { start, end } if frames > 1 => start + (end - start) * frame as f64 / (frames - 1) as f64,
            Self::Ramp { start, .. } => start,
        }
    }
}

/// Edits every frame with the scale given by `schedule`.
pub fn edit_sequence(seq: &LatentSequence, model: &TransformerModel, schedule: AlphaSchedule) -> Result<LatentSequence> {
    let n = seq.len();
    let frames = seq
        .frames
        .iter()
        .enumerate()
        .map(|(t, code)| {
            model
                .apply(code, schedule.alpha_at(t, n))
                .map_err(|e| Error::InvalidArgument(format!("frame {t}: {e}")))
        })
        .collect::<Result<_>>()?;
    LatentSequence::new(frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub original: f64,
    pub edited: f64,
    /// Largest `||f(w_{t+1}) - f(w_t)|| / ||w_{t+1} - w_t||` over the sequence.
    pub lipschitz: f64,
    /// `original * (1 + |alpha| * lipschitz)`.
    pub bound: f64,
}

/// Measures how a fixed-scale edit changes frame-to-frame consistency.
pub fn stability_report(seq: &LatentSequence, model: &TransformerModel, alpha: f64) -> Result<StabilityReport> {
    let edited = edit_sequence(seq, model, AlphaSchedule::Constant { alpha })?;
    let original = temporal_consistency(seq)?;
    let directions: Vec<Vec<f64>> = seq.frames.iter().map(|c| model.edit_direction(c)).collect::<Result<_>>()?;
    let mut lipschitz: f64 = 0.0;
    for t in 0..seq.len() - 1 {
        let dw: Vec<f64> = seq.frames[t + 1].flat().iter().zip(seq.frames[t].flat()).map(|(a, b)| a - b).collect();
        check_len("edit direction", dw.len(), directions[t].len())?;
        let df: Vec<f64> = directions[t + 1].iter().zip(&directions[t]).map(|(a, b)| a - b).collect();
        let nw = l2_norm(&dw);
        if nw > 0.0 {
            lipschitz = lipschitz.max(l2_norm(&df) / nw);
        }
    }
    Ok(StabilityReport {
        original,
        edited: temporal_consistency(&edited)?,
        lipschitz,
        bound: original * (1.0 + alpha.abs() * lipschitz),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;
    use crate::world::LatentShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape() -> LatentShape {
        LatentShape::new(4, 32).unwrap()
    }

    fn frame(f: impl Fn(usize) -> f64) -> LatentCode {
        LatentCode::from_flat(shape(), (0..128).map(f).collect()).unwrap()
    }

    #[test]
    fn consistency_examples() {
        let constant = LatentSequence::new(vec![frame(|i| i as f64); 3]).unwrap();
        assert_eq!(temporal_consistency(&constant).unwrap(), 0.0);
        let unit = LatentSequence::new(vec![frame(|_| 0.0), frame(|i| if i == 7 { 1.0 } else { 0.0 })]).unwrap();
        assert!((temporal_consistency(&unit).unwrap() - 1.0 / 128f64.sqrt()).abs() < 1e-15);
        assert!(temporal_consistency(&LatentSequence::new(vec![frame(|_| 0.0)]).unwrap()).is_err());
    }

    #[test]
    fn mixed_shapes_are_rejected() {
        let other = LatentCode::zeros(LatentShape::new(2, 4).unwrap());
        assert!(LatentSequence::new(vec![frame(|_| 0.0), other]).is_err());
    }

    #[test]
    fn ramp_scales_each_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = TransformerModel::linear(0, DenseLayer::kaiming(128, 128, &mut rng)).unwrap();
        let seq = LatentSequence::new((0..5).map(|t| frame(move |i| ((i + t) as f64).sin())).collect()).unwrap();
        let out = edit_sequence(&seq, &model, AlphaSchedule::Ramp { start: 0.0, end: 1.0 }).unwrap();
        assert_eq!(out.frames()[0], seq.frames()[0]);
        for t in 0..5 {
            let f = model.edit_direction(&seq.frames()[t]).unwrap();
            let a = t as f64 / 4.0;
            for ((o, s), d) in out.frames()[t].flat().iter().zip(seq.frames()[t].flat()).zip(&f) {
                assert!((o - s - a * d).abs() < 1e-12);
            }
        }
        let same = edit_sequence(&seq, &model, AlphaSchedule::Constant { alpha: 0.0 }).unwrap();
        assert_eq!(same, seq);
    }

    #[test]
    fn stability_bound_holds_for_linear_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = TransformerModel::linear(0, DenseLayer::kaiming(128, 128, &mut rng)).unwrap();
        let seq = LatentSequence::new((0..6).map(|t| frame(move |i| (i as f64 * 0.1 + t as f64 * 0.05).cos())).collect()).unwrap();
        let r = stability_report(&seq, &model, 0.7).unwrap();
        assert!(r.lipschitz > 0.0);
        assert!(r.edited <= r.bound + 1e-12);
    }
}
