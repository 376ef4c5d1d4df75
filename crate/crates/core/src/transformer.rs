//! Per-attribute latent transformer `T_k(w, a) = w + a * f(w)` and its
//! training under the combined classification, attribute-preservation and
//! reconstruction loss.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::error::{check_len, Error, Result};
use crate::nn::{adam_update, bce_grad, bce_loss, relu, relu_backward, AdamConfig, AdamState, DenseLayer, Gradient, Parameterized, Penalty};
use crate::world::{LatentCode, LatentDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformerVariant {
    Linear,
    TwoLayer,
    BiasOnly,
}

impl TransformerVariant {
    pub const ALL: [TransformerVariant; 3] = [Self::Linear, Self::TwoLayer, Self::BiasOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::TwoLayer => "two_layer",
            Self::BiasOnly => "bias_only",
        }
    }
}

impl fmt::Display for TransformerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown transformer variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
enum Direction {
    Linear { layer: DenseLayer },
    TwoLayer { hidden: DenseLayer, output: DenseLayer },
    BiasOnly { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerModel {
    target_attribute: usize,
    input_dim: usize,
    #[serde(flatten)]
    f: Direction,
}

/// Values kept from evaluating `f` for the backward pass.
struct DirectionTrace {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl TransformerModel {
    /// Builds a transformer whose displacement starts at zero, so `T` is the
    /// identity. The two-layer variant draws its hidden layer from `seed`.
    pub fn new(variant: TransformerVariant, target_attribute: usize, input_dim: usize, hidden_width: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("transformer input dimension must be positive".into()));
        }
        let f = match variant {
            TransformerVariant::Linear => Direction::Linear {
                layer: DenseLayer::zeros(input_dim, input_dim),
            },
            TransformerVariant::TwoLayer => {
                if hidden_width == 0 {
                    return Err(Error::InvalidArgument("two_layer hidden width must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Direction::TwoLayer {
                    hidden: DenseLayer::kaiming(input_dim, hidden_width, &mut rng),
                    output: DenseLayer::zeros(hidden_width, input_dim),
                }
            }
            TransformerVariant::BiasOnly => Direction::BiasOnly {
                direction: vec![0.0; input_dim],
            },
        };
        Ok(Self {
            target_attribute,
            input_dim,
            f,
        })
    }

    pub fn linear(target_attribute: usize, layer: DenseLayer) -> Result<Self> {
        check_len("linear transformer output", layer.in_dim(), layer.out_dim())?;
        Ok(Self {
            target_attribute,
            input_dim: layer.in_dim(),
            f: Direction::Linear { layer },
        })
    }

    pub fn two_layer(target_attribute: usize, hidden: DenseLayer, output: DenseLayer) -> Result<Self> {
        check_len("two_layer hidden width", hidden.out_dim(), output.in_dim())?;
        check_len("two_layer output", hidden.in_dim(), output.out_dim())?;
        Ok(Self {
            target_attribute,
            input_dim: hidden.in_dim(),
            f: Direction::TwoLayer { hidden, output },
        })
    }

    pub fn bias_only(target_attribute: usize, direction: Vec<f64>) -> Result<Self> {
        if direction.is_empty() || direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("bias_only direction must be non-empty and finite".into()));
        }
        Ok(Self {
            target_attribute,
            input_dim: direction.len(),
            f: Direction::BiasOnly { direction },
        })
    }

    pub fn variant(&self) -> TransformerVariant {
        match self.f {
            Direction::Linear { .. } => TransformerVariant::Linear,
            Direction::TwoLayer { .. } => TransformerVariant::TwoLayer,
            Direction::BiasOnly { .. } => TransformerVariant::BiasOnly,
        }
    }

    pub fn target_attribute(&self) -> usize {
        self.target_attribute
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Checks dimensions and finiteness, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match &self.f {
            Direction::Linear { layer } => {
                check_len("linear transformer input", self.input_dim, layer.in_dim())?;
                check_len("linear transformer output", self.input_dim, layer.out_dim())?;
            }
            Direction::TwoLayer { hidden, output } => {
                check_len("two_layer input", self.input_dim, hidden.in_dim())?;
                check_len("two_layer hidden width", hidden.out_dim(), output.in_dim())?;
                check_len("two_layer output", self.input_dim, output.out_dim())?;
            }
            Direction::BiasOnly { direction } => check_len("bias_only direction", self.input_dim, direction.len())?,
        }
        for (name, values) in self.param_groups() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("transformer parameter {name}")));
            }
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> DirectionTrace {
        match &self.f {
            Direction::Linear { layer } => DirectionTrace {
                hidden_pre: Vec::new(),
                hidden: Vec::new(),
                out: layer.forward_unchecked(x),
            },
            Direction::TwoLayer { hidden, output } => {
                let hidden_pre = hidden.forward_unchecked(x);
                let h = relu(&hidden_pre);
                let out = output.forward_unchecked(&h);
                DirectionTrace { hidden_pre, hidden: h, out }
            }
            Direction::BiasOnly { direction } => DirectionTrace {
                hidden_pre: Vec::new(),
                hidden: Vec::new(),
                out: direction.clone(),
            },
        }
    }

    /// Accumulates parameter gradients given `dL/df` at input `x`.
    fn backward(&self, x: &[f64], trace: &DirectionTrace, grad_out: &[f64], grads: &mut Gradient) {
        match &self.f {
            Direction::Linear { layer } => {
                layer.backward(x, grad_out, Some(grads.pair_mut(0, 1)));
            }
            Direction::TwoLayer { hidden, output } => {
                let mut g = output.backward(&trace.hidden, grad_out, Some(grads.pair_mut(2, 3)));
                relu_backward(&trace.hidden_pre, &mut g);
                hidden.backward(x, &g, Some(grads.pair_mut(0, 1)));
            }
            Direction::BiasOnly { .. } => {
                for (a, g) in grads.group_mut(0).iter_mut().zip(grad_out) {
                    *a += g;
                }
            }
        }
    }

    /// The displacement `f(w)` on the flattened code.
    pub fn edit_direction(&self, code: &LatentCode) -> Result<Vec<f64>> {
        self.direction_flat(code.flat())
    }

    pub fn direction_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("transformer input", self.input_dim, x.len())?;
        Ok(self.trace(x).out)
    }

    /// `w + alpha * f(w)`; `alpha == 0` returns the input unchanged.
    pub fn apply(&self, code: &LatentCode, alpha: f64) -> Result<LatentCode> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("edit scale must be finite, got {alpha}")));
        }
        check_len("transformer input", self.input_dim, code.flat().len())?;
        if alpha == 0.0 {
            return Ok(code.clone());
        }
        let f = self.trace(code.flat()).out;
        displace(code, &f, alpha)
    }
}

/// `code + alpha * direction`, reshaped like `code`.
pub fn displace(code: &LatentCode, direction: &[f64], alpha: f64) -> Result<LatentCode> {
    check_len("edit direction", code.flat().len(), direction.len())?;
    let values = code.flat().iter().zip(direction).map(|(w, d)| w + alpha * d).collect();
    LatentCode::from_flat(code.shape(), values)
}

impl Parameterized for TransformerModel {
    fn param_groups(&self) -> Vec<(String, &[f64])> {
        match &self.f {
            Direction::Linear { layer } => vec![("f.weights".into(), layer.weights()), ("f.bias".into(), layer.bias())],
            Direction::TwoLayer { hidden, output } => vec![
                ("hidden.weights".into(), hidden.weights()),
                ("hidden.bias".into(), hidden.bias()),
                ("output.weights".into(), output.weights()),
                ("output.bias".into(), output.bias()),
            ],
            Direction::BiasOnly { direction } => vec![("direction".into(), direction.as_slice())],
        }
    }

    fn param_groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        match &mut self.f {
            Direction::Linear { layer } => {
                let (w, b) = layer.params_mut();
                vec![("f.weights".into(), w), ("f.bias".into(), b)]
            }
            Direction::TwoLayer { hidden, output } => {
                let (hw, hb) = hidden.params_mut();
                let (ow, ob) = output.params_mut();
                vec![
                    ("hidden.weights".into(), hw),
                    ("hidden.bias".into(), hb),
                    ("output.weights".into(), ow),
                    ("output.bias".into(), ob),
                ]
            }
            Direction::BiasOnly { direction } => vec![("direction".into(), direction.as_mut_slice())],
        }
    }
}

/// Training-time edit scale from the classifier's probability of the target
/// attribute: push absent attributes up by `1 - p`, present ones down by `p`.
/// A tie at exactly 0.5 is treated as absent.
pub fn training_alpha(p: f64) -> f64 {
    if p > 0.5 {
        -p
    } else {
        1.0 - p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_attr: f64,
    pub lambda_rec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_attr: 1.0,
            lambda_rec: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_attr >= 0.0 && self.lambda_rec >= 0.0 && self.lambda_attr.is_finite() && self.lambda_rec.is_finite()) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and non-negative, got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformLossConfig {
    pub weights: LossWeights,
    /// Penalty on each non-target probability drift.
    pub attr_penalty: Penalty,
    /// Penalty on the displacement `T(w) - w`.
    pub rec_penalty: Penalty,
}

impl Default for TransformLossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            attr_penalty: Penalty::Euclidean,
            rec_penalty: Penalty::MeanSquared,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformLossReport {
    pub l_cls: f64,
    pub l_attr: f64,
    pub l_rec: f64,
    pub total: f64,
}

impl TransformLossReport {
    pub fn compose(l_cls: f64, l_attr: f64, l_rec: f64, weights: &LossWeights) -> Self {
        Self {
            l_cls,
            l_attr,
            l_rec,
            total: l_cls + weights.lambda_attr * l_attr + weights.lambda_rec * l_rec,
        }
    }

    fn is_finite(&self) -> bool {
        self.l_cls.is_finite() && self.l_attr.is_finite() && self.l_rec.is_finite() && self.total.is_finite()
    }
}

/// Batch-averaged loss of `model` against a frozen classifier, with the
/// gradient with respect to the transformer parameters only.
///
/// `gamma_row` holds the correlations of the target attribute with every
/// attribute; its entry at the target index is ignored.
pub fn transform_loss(
    model: &TransformerModel,
    classifier: &ClassifierModel,
    batch: &[&LatentCode],
    gamma_row: &[f64],
    config: &TransformLossConfig,
) -> Result<(TransformLossReport, Gradient)> {
    if !classifier.is_frozen() {
        return Err(Error::InvalidArgument("the loss classifier must be frozen".into()));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let k = model.target_attribute;
    let n = classifier.num_attributes();
    if k >= n {
        return Err(Error::InvalidArgument(format!("target attribute {k} out of range for {n} attributes")));
    }
    check_len("transformer vs classifier input", classifier.input_dim(), model.input_dim)?;
    check_len("correlation row", n, gamma_row.len())?;
    let weights = config.weights;
    weights.validate()?;

    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradient::zeros_like(model);
    let (mut l_cls, mut l_attr, mut l_rec) = (0.0, 0.0, 0.0);
    let mut grad_probs = vec![0.0; n];
    let mut grad_rec = vec![0.0; model.input_dim];
    for code in batch {
        let w = code.flat();
        check_len("transformer input", model.input_dim, w.len())?;
        let p0 = classifier.trace(w).probs;
        let alpha = training_alpha(p0[k]);
        let y = if alpha > 0.0 { 1.0 } else { 0.0 };

        let f_trace = model.trace(w);
        let displacement: Vec<f64> = f_trace.out.iter().map(|d| alpha * d).collect();
        let edited: Vec<f64> = w.iter().zip(&displacement).map(|(a, b)| a + b).collect();
        let c_trace = classifier.trace(&edited);
        let p = &c_trace.probs;

        l_cls += bce_loss(p[k], y) * scale;
        grad_probs[k] = bce_grad(p[k], y) * scale;
        for i in (0..n).filter(|&i| i != k) {
            let weight = 1.0 - gamma_row[i];
            let drift = p[i] - p0[i];
            l_attr += weight * config.attr_penalty.scalar(drift) * scale;
            grad_probs[i] = weights.lambda_attr * weight * config.attr_penalty.scalar_grad(drift) * scale;
        }
        l_rec += config.rec_penalty.value(&displacement) * scale;

        // dL/df = alpha * (dL/dw' + lambda_rec * dPenalty/d(displacement))
        let grad_edited = classifier.backward(&c_trace, &grad_probs, None);
        config.rec_penalty.grad_into(&displacement, weights.lambda_rec * scale, &mut grad_rec);
        let grad_f: Vec<f64> = grad_edited.iter().zip(&grad_rec).map(|(a, b)| alpha * (a + b)).collect();
        if grad_f.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("transformer loss gradient".into()));
        }
        model.backward(w, &f_trace, &grad_f, &mut grads);
    }
    let report = TransformLossReport::compose(l_cls, l_attr, l_rec, &weights);
    if !report.is_finite() {
        return Err(Error::NonFinite(format!("transformer loss {report:?}")));
    }
    Ok((report, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerTrainConfig {
    pub variant: TransformerVariant,
    pub hidden_width: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: TransformLossConfig,
    /// Seeds both initialization and mini-batch order.
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TransformerTrainConfig {
    fn default() -> Self {
        Self {
            variant: TransformerVariant::Linear,
            hidden_width: 64,
            iterations: 5000,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: TransformLossConfig::default(),
            seed: 0,
            log_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformLossRecord {
    pub iteration: usize,
    pub l_cls: f64,
    pub l_attr: f64,
    pub l_rec: f64,
    pub total: f64,
}

/// Trains `T_k` with Adam on seeded mini-batches from the train split. The
/// classifier is only read.
pub fn train_transformer(
    dataset: &LatentDataset,
    classifier: &ClassifierModel,
    target_attribute: usize,
    gamma_row: &[f64],
    config: &TransformerTrainConfig,
) -> Result<(TransformerModel, Vec<TransformLossRecord>)> {
    if !classifier.is_frozen() {
        return Err(Error::InvalidArgument("the loss classifier must be frozen".into()));
    }
    if dataset.train.is_empty() {
        return Err(Error::InvalidArgument("train split is empty".into()));
    }
    if config.batch_size == 0 || config.log_every == 0 {
        return Err(Error::InvalidArgument("batch size and log interval must be positive".into()));
    }
    config.adam.validate()?;
    config.loss.weights.validate()?;

    let input_dim = dataset.shape.flat_len();
    let mut model = TransformerModel::new(config.variant, target_attribute, input_dim, config.hidden_width, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(config.adam);
    let mut history = Vec::new();
    let mut last_finite: Option<TransformLossReport> = None;
    for it in 0..config.iterations {
        let batch: Vec<&LatentCode> = (0..config.batch_size)
            .map(|_| &dataset.samples[dataset.train[rng.random_range(0..dataset.train.len())]].code)
            .collect();
        let (report, grads) = match transform_loss(&model, classifier, &batch, gamma_row, &config.loss) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged {
                    iteration: it,
                    last_finite: format!("{last_finite:?}"),
                })
            }
            Err(e) => return Err(e),
        };
        adam_update(&mut model, &grads, &mut state)?;
        last_finite = Some(report);
        if (it + 1) % config.log_every == 0 {
            history.push(TransformLossRecord {
                iteration: it + 1,
                l_cls: report.l_cls,
                l_attr: report.l_attr,
                l_rec: report.l_rec,
                total: report.total,
            });
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::build_classifier;
    use crate::nn::grad_check;
    use crate::world::LatentShape;

    fn code(values: Vec<f64>) -> LatentCode {
        LatentCode::from_flat(LatentShape::new(2, values.len() / 2).unwrap(), values).unwrap()
    }

    fn frozen_classifier(depth: usize, n: usize, seed: u64) -> ClassifierModel {
        let mut c = build_classifier(depth, 8, 4, n, seed).unwrap();
        c.freeze();
        c
    }

    #[test]
    fn training_alpha_schedule() {
        assert_eq!(training_alpha(0.2), 0.8);
        assert_eq!(training_alpha(0.9), -0.9);
        assert_eq!(training_alpha(0.5), 0.5);
        assert_eq!(training_alpha(0.0), 1.0);
        assert_eq!(training_alpha(1.0), -1.0);
    }

    #[test]
    fn bias_only_apply_adds_scaled_direction() {
        let m = TransformerModel::bias_only(0, vec![1.0, -1.0, 0.5, 0.0]).unwrap();
        let w = code(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.apply(&w, 2.0).unwrap().flat(), &[3.0, 0.0, 4.0, 4.0]);
        assert_eq!(m.edit_direction(&w).unwrap(), m.edit_direction(&code(vec![9.0; 4])).unwrap());
    }

    #[test]
    fn zero_initialized_models_are_identity() {
        for variant in TransformerVariant::ALL {
            let m = TransformerModel::new(variant, 0, 4, 5, 1).unwrap();
            let w = code(vec![0.3, -1.0, 2.0, 0.1]);
            assert_eq!(m.edit_direction(&w).unwrap(), vec![0.0; 4]);
            assert_eq!(m.apply(&w, 1.7).unwrap(), w);
        }
    }

    #[test]
    fn apply_rejects_shape_mismatch_and_nan_alpha() {
        let m = TransformerModel::new(TransformerVariant::Linear, 0, 6, 0, 0).unwrap();
        assert!(m.apply(&code(vec![0.0; 4]), 1.0).is_err());
        let m = TransformerModel::new(TransformerVariant::Linear, 0, 4, 0, 0).unwrap();
        assert!(m.apply(&code(vec![0.0; 4]), f64::NAN).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in TransformerVariant::ALL {
            assert_eq!(v.to_string().parse::<TransformerVariant>().unwrap(), v);
        }
        assert!("three_layer".parse::<TransformerVariant>().is_err());
    }

    #[test]
    fn json_round_trip_keeps_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = TransformerModel::two_layer(2, DenseLayer::kaiming(4, 3, &mut rng), DenseLayer::kaiming(3, 4, &mut rng)).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"variant\":\"two_layer\""));
        let back: TransformerModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
    }

    #[test]
    fn identity_model_has_zero_attr_and_rec_loss() {
        let c = frozen_classifier(2, 3, 1);
        let m = TransformerModel::new(TransformerVariant::Linear, 1, 4, 0, 0).unwrap();
        let batch = [code(vec![0.5, -0.2, 1.0, 0.3]), code(vec![-1.0, 0.2, 0.0, 2.0])];
        let refs: Vec<&LatentCode> = batch.iter().collect();
        let (report, _) = transform_loss(&m, &c, &refs, &[0.1, 1.0, 0.4], &TransformLossConfig::default()).unwrap();
        assert_eq!(report.l_attr, 0.0);
        assert_eq!(report.l_rec, 0.0);
        assert!(report.l_cls > 0.0);
    }

    #[test]
    fn eq4_recomposition() {
        let r = TransformLossReport::compose(0.3, 0.1, 0.02, &LossWeights::default());
        assert!((r.total - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unfrozen_classifier_is_rejected() {
        let c = build_classifier(1, 8, 4, 2, 0).unwrap();
        let m = TransformerModel::new(TransformerVariant::Linear, 0, 4, 0, 0).unwrap();
        let w = code(vec![0.0; 4]);
        assert!(transform_loss(&m, &c, &[&w], &[1.0, 0.0], &TransformLossConfig::default()).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let batch = [code(vec![0.5, -0.2, 1.0, 0.3]), code(vec![-1.0, 0.2, 0.0, 2.0]), code(vec![0.1, 0.9, -0.7, -0.4])];
        let refs: Vec<&LatentCode> = batch.iter().collect();
        let gamma = [0.2, 1.0, 0.6];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scaled = |l: DenseLayer| {
            let w = l.weights().iter().map(|v| 0.3 * v).collect();
            DenseLayer::from_parts(l.in_dim(), l.out_dim(), w, vec![0.05; l.out_dim()]).unwrap()
        };
        let models = [
            TransformerModel::linear(1, scaled(DenseLayer::kaiming(4, 4, &mut rng))).unwrap(),
            TransformerModel::two_layer(1, DenseLayer::kaiming(4, 5, &mut rng), scaled(DenseLayer::kaiming(5, 4, &mut rng))).unwrap(),
            TransformerModel::bias_only(1, vec![0.2, -0.1, 0.3, 0.05]).unwrap(),
        ];
        for penalty in [Penalty::Euclidean, Penalty::Squared, Penalty::MeanSquared] {
            let config = TransformLossConfig {
                weights: LossWeights::default(),
                attr_penalty: penalty,
                rec_penalty: penalty,
            };
            for depth in 1..=3 {
                let c = frozen_classifier(depth, 3, depth as u64);
                for m in &models {
                    let mut m = m.clone();
                    let report = grad_check(&mut m, |m| transform_loss(m, &c, &refs, &gamma, &config).map(|(r, g)| (r.total, g)), 1e-6).unwrap();
                    assert!(report.max_relative_error < 1e-4, "{:?} depth {depth} {penalty:?}: {report:?}", m.variant());
                }
            }
        }
    }
}
