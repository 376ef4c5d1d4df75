//! Latent attribute classifier: an MLP mapping a flattened latent code to N
//! attribute probabilities, ReLU between layers and sigmoid on the outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{adam_update, bce_grad, bce_loss, relu, relu_backward, sigmoid, AdamConfig, AdamState, DenseLayer, Gradient, Parameterized};
use crate::world::{LatentCode, LatentDataset, LatentSample};

pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassifierDocument", into = "ClassifierDocument")]
pub struct ClassifierModel {
    input_dim: usize,
    num_attributes: usize,
    hidden_width: usize,
    layers: Vec<DenseLayer>,
    frozen: bool,
}

/// Persisted form; checked against the layers when loaded.
#[derive(Serialize, Deserialize)]
struct ClassifierDocument {
    depth: usize,
    hidden_width: usize,
    input_dim: usize,
    num_attributes: usize,
    frozen: bool,
    layers: Vec<DenseLayer>,
}

impl From<ClassifierModel> for ClassifierDocument {
    fn from(m: ClassifierModel) -> Self {
        Self {
            depth: m.layers.len(),
            hidden_width: m.hidden_width,
            input_dim: m.input_dim,
            num_attributes: m.num_attributes,
            frozen: m.frozen,
            layers: m.layers,
        }
    }
}

impl TryFrom<ClassifierDocument> for ClassifierModel {
    type Error = Error;

    fn try_from(doc: ClassifierDocument) -> Result<Self> {
        for layer in &doc.layers {
            DenseLayer::from_parts(layer.in_dim(), layer.out_dim(), layer.weights().to_vec(), layer.bias().to_vec())?;
        }
        let model = Self::from_layers(doc.layers, doc.hidden_width, doc.frozen)?;
        check_len("classifier depth", doc.depth, model.depth())?;
        check_len("classifier input", doc.input_dim, model.input_dim)?;
        check_len("classifier outputs", doc.num_attributes, model.num_attributes)?;
        Ok(model)
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    layer_inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

pub fn build_classifier(depth: usize, hidden_width: usize, input_dim: usize, num_attributes: usize, seed: u64) -> Result<ClassifierModel> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::InvalidArgument(format!("classifier depth must be in 1..={MAX_DEPTH}, got {depth}")));
    }
    if hidden_width == 0 || input_dim == 0 || num_attributes == 0 {
        return Err(Error::InvalidArgument("classifier dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![input_dim];
    dims.extend(std::iter::repeat_n(hidden_width, depth - 1));
    dims.push(num_attributes);
    let layers = dims.windows(2).map(|w| DenseLayer::kaiming(w[0], w[1], &mut rng)).collect();
    Ok(ClassifierModel {
        input_dim,
        num_attributes,
        hidden_width,
        layers,
        frozen: false,
    })
}

impl ClassifierModel {
    pub fn from_layers(layers: Vec<DenseLayer>, hidden_width: usize, frozen: bool) -> Result<Self> {
        if layers.is_empty() || layers.len() > MAX_DEPTH {
            return Err(Error::InvalidArgument(format!("classifier needs 1..={MAX_DEPTH} layers")));
        }
        for pair in layers.windows(2) {
            check_len("classifier layer chain", pair[0].out_dim(), pair[1].in_dim())?;
        }
        Ok(Self {
            input_dim: layers[0].in_dim(),
            num_attributes: layers[layers.len() - 1].out_dim(),
            hidden_width,
            layers,
            frozen,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn predict(&self, code: &LatentCode) -> Result<Vec<f64>> {
        self.predict_flat(code.flat())
    }

    pub fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("classifier input", self.input_dim, x.len())?;
        Ok(self.trace(x).probs)
    }

    /// Forward pass without a shape check; callers validate `x`.
    pub(crate) fn trace(&self, x: &[f64]) -> ForwardTrace {
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward_unchecked(&h);
            let next = if i == last { z.iter().map(|&v| sigmoid(v)).collect() } else { relu(&z) };
            layer_inputs.push(std::mem::replace(&mut h, next));
            pre_activations.push(z);
        }
        ForwardTrace {
            layer_inputs,
            pre_activations,
            probs: h,
        }
    }

    /// Backpropagates `dL/dprobs` through the network. Parameter gradients are
    /// accumulated into `grads` when given; returns `dL/dx`.
    pub(crate) fn backward(&self, trace: &ForwardTrace, grad_probs: &[f64], mut grads: Option<&mut Gradient>) -> Vec<f64> {
        let mut g: Vec<f64> = grad_probs
            .iter()
            .zip(&trace.probs)
            .map(|(gp, p)| gp * p * (1.0 - p))
            .collect();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                relu_backward(&trace.pre_activations[i], &mut g);
            }
            let pg = grads.as_deref_mut().map(|gr| gr.pair_mut(2 * i, 2 * i + 1));
            g = self.layers[i].backward(&trace.layer_inputs[i], &g, pg);
        }
        g
    }
}

impl Parameterized for ClassifierModel {
    fn param_groups(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| [(format!("layer{i}.weights"), l.weights()), (format!("layer{i}.bias"), l.bias())])
            .collect()
    }

    fn param_groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter_mut().enumerate() {
            let (w, b) = l.params_mut();
            out.push((format!("layer{i}.weights"), w));
            out.push((format!("layer{i}.bias"), b));
        }
        out
    }
}

/// Mean BCE over a batch and all N attributes, with its parameter gradient.
pub fn batch_loss(model: &ClassifierModel, batch: &[&LatentSample]) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = model.num_attributes;
    let scale = 1.0 / (batch.len() * n) as f64;
    let mut grads = Gradient::zeros_like(model);
    let mut loss = 0.0;
    for sample in batch {
        check_len("classifier input", model.input_dim, sample.code.flat().len())?;
        check_len("label vector", n, sample.labels.len())?;
        let trace = model.trace(sample.code.flat());
        let mut grad_probs = vec![0.0; n];
        for (i, (&p, &y)) in trace.probs.iter().zip(&sample.labels).enumerate() {
            let y = f64::from(y);
            loss += bce_loss(p, y) * scale;
            grad_probs[i] = bce_grad(p, y) * scale;
        }
        model.backward(&trace, &grad_probs, Some(&mut grads));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            log_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
}

/// Trains with Adam on seeded mini-batches drawn from the train split and
/// returns the frozen model with its sampled loss history.
pub fn train_classifier(
    mut model: ClassifierModel,
    dataset: &LatentDataset,
    config: &ClassifierTrainConfig,
) -> Result<(ClassifierModel, Vec<LossRecord>)> {
    if model.frozen {
        return Err(Error::InvalidArgument("classifier is frozen".into()));
    }
    if dataset.train.is_empty() {
        return Err(Error::InvalidArgument("train split is empty".into()));
    }
    if config.batch_size == 0 || config.log_every == 0 {
        return Err(Error::InvalidArgument("batch size and log interval must be positive".into()));
    }
    config.adam.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(config.adam);
    let mut history = Vec::new();
    for it in 0..config.iterations {
        let batch: Vec<&LatentSample> = (0..config.batch_size)
            .map(|_| &dataset.samples[dataset.train[rng.random_range(0..dataset.train.len())]])
            .collect();
        let (loss, grads) = batch_loss(&model, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("classifier loss at iteration {it}")));
        }
        adam_update(&mut model, &grads, &mut state)?;
        if (it + 1) % config.log_every == 0 {
            history.push(LossRecord { iteration: it + 1, loss });
        }
    }
    model.freeze();
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> AttributeMetrics {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        AttributeMetrics {
            recall,
            specificity: ratio(self.tn, self.tn + self.fp),
            precision,
            accuracy: ratio(self.tp + self.tn, self.total()),
            f1,
        }
    }
}

/// Ratios that are `None` had a zero denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetrics {
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub counts: Vec<ConfusionCounts>,
    pub per_attribute: Vec<AttributeMetrics>,
    /// Mean of the defined per-attribute values; undefined entries are skipped.
    pub macro_avg: AttributeMetrics,
}

fn macro_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

impl ClassifierMetrics {
    pub fn from_counts(counts: Vec<ConfusionCounts>) -> Self {
        let per_attribute: Vec<AttributeMetrics> = counts.iter().map(ConfusionCounts::metrics).collect();
        let macro_avg = AttributeMetrics {
            recall: macro_mean(per_attribute.iter().map(|m| m.recall)),
            specificity: macro_mean(per_attribute.iter().map(|m| m.specificity)),
            precision: macro_mean(per_attribute.iter().map(|m| m.precision)),
            accuracy: macro_mean(per_attribute.iter().map(|m| m.accuracy)),
            f1: macro_mean(per_attribute.iter().map(|m| m.f1)),
        };
        Self {
            counts,
            per_attribute,
            macro_avg,
        }
    }
}

/// Confusion-matrix metrics on `samples` with hard labels `p > threshold`.
pub fn evaluate_classifier<'a>(
    model: &ClassifierModel,
    samples: impl IntoIterator<Item = &'a LatentSample>,
    threshold: f64,
) -> Result<ClassifierMetrics> {
    let mut counts = vec![ConfusionCounts::default(); model.num_attributes];
    let mut seen = 0;
    for sample in samples {
        let probs = model.predict(&sample.code)?;
        check_len("label vector", model.num_attributes, sample.labels.len())?;
        for ((c, p), &y) in counts.iter_mut().zip(probs).zip(&sample.labels) {
            match (p > threshold, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::InvalidArgument("evaluation split is empty".into()));
    }
    Ok(ClassifierMetrics::from_counts(counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthAblationRow {
    pub depth: usize,
    pub metrics: ClassifierMetrics,
}

/// Trains one classifier per depth with identical data order and reports
/// held-out metrics for each.
pub fn depth_ablation(
    dataset: &LatentDataset,
    depths: &[usize],
    hidden_width: usize,
    init_seed: u64,
    config: &ClassifierTrainConfig,
) -> Result<Vec<DepthAblationRow>> {
    depths
        .iter()
        .map(|&depth| {
            let model = build_classifier(depth, hidden_width, dataset.shape.flat_len(), dataset.num_attributes(), init_seed)?;
            let (trained, _) = train_classifier(model, dataset, config)?;
            let metrics = evaluate_classifier(&trained, dataset.test_samples(), 0.5)?;
            Ok(DepthAblationRow { depth, metrics })
        })
        .collect()
}
