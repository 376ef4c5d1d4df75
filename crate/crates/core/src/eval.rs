//! Edit evaluation: target change rate, preservation of the other attributes
//! and identity similarity, per scaling factor, plus loss-ablation runs.
//!
//! Rates are graded by an independent judge classifier. Identity uses the
//! oracle world's projection as a stand-in for a face-recognition embedding.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::error::{check_len, Error, Result};
use crate::transformer::{train_transformer, LossWeights, TransformerModel, TransformerTrainConfig};
use crate::world::{cosine_similarity, identity_embed, LatentCode, LatentDataset, OracleWorld};

/// Strict `p > 0.5` hard labels from the judge.
pub fn hard_labels(judge: &ClassifierModel, code: &LatentCode) -> Result<Vec<bool>> {
    Ok(judge.predict(code)?.into_iter().map(|p| p > 0.5).collect())
}

fn check_pairs(originals: &[LatentCode], edited: &[LatentCode]) -> Result<()> {
    if originals.is_empty() {
        return Err(Error::InvalidArgument("metric over an empty sample list".into()));
    }
    check_len("edited sample count", originals.len(), edited.len())
}

fn label_pairs(judge: &ClassifierModel, originals: &[LatentCode], edited: &[LatentCode]) -> Result<Vec<(Vec<bool>, Vec<bool>)>> {
    check_pairs(originals, edited)?;
    originals
        .iter()
        .zip(edited)
        .map(|(o, e)| Ok((hard_labels(judge, o)?, hard_labels(judge, e)?)))
        .collect()
}

fn change_from_labels(pairs: &[(Vec<bool>, Vec<bool>)], k: usize) -> f64 {
    pairs.iter().filter(|(o, e)| o[k] != e[k]).count() as f64 / pairs.len() as f64
}

fn preservation_from_labels(pairs: &[(Vec<bool>, Vec<bool>)], k: usize, n: usize) -> f64 {
    let per_attribute: Vec<f64> = (0..n)
        .filter(|&i| i != k)
        .map(|i| pairs.iter().filter(|(o, e)| o[i] == e[i]).count() as f64 / pairs.len() as f64)
        .collect();
    per_attribute.iter().sum::<f64>() / per_attribute.len() as f64
}

fn check_target(judge: &ClassifierModel, k: usize) -> Result<()> {
    if k >= judge.num_attributes() {
        return Err(Error::InvalidArgument(format!("target attribute {k} out of range for {} attributes", judge.num_attributes())));
    }
    Ok(())
}

/// Fraction of samples whose judged label of attribute `k` flips.
pub fn change_rate(judge: &ClassifierModel, originals: &[LatentCode], edited: &[LatentCode], k: usize) -> Result<f64> {
    check_target(judge, k)?;
    Ok(change_from_labels(&label_pairs(judge, originals, edited)?, k))
}

/// Fraction of unchanged judged labels over the non-target attributes,
/// computed per attribute and then averaged (macro).
pub fn preservation_rate(judge: &ClassifierModel, originals: &[LatentCode], edited: &[LatentCode], k: usize) -> Result<f64> {
    check_target(judge, k)?;
    let n = judge.num_attributes();
    if n < 2 {
        return Err(Error::InvalidArgument("preservation needs at least two attributes".into()));
    }
    Ok(preservation_from_labels(&label_pairs(judge, originals, edited)?, k, n))
}

/// Mean cosine similarity of oracle identity embeddings. A zero embedding
/// counts as similarity 0.
pub fn identity_score(world: &OracleWorld, originals: &[LatentCode], edited: &[LatentCode]) -> Result<f64> {
    check_pairs(originals, edited)?;
    let mut total = 0.0;
    for (i, (o, e)) in originals.iter().zip(edited).enumerate() {
        match cosine_similarity(&identity_embed(world, o)?, &identity_embed(world, e)?) {
            Some(c) => total += c,
            None => warn!("sample {i}: zero identity embedding, counted as similarity 0"),
        }
    }
    Ok(total / originals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsPoint {
    pub factor: f64,
    pub change_rate: f64,
    pub preservation_rate: f64,
    pub identity_score: f64,
}

impl MetricsPoint {
    pub fn within_bounds(&self) -> bool {
        (0.0..=1.0).contains(&self.change_rate)
            && (0.0..=1.0).contains(&self.preservation_rate)
            && (-1.0..=1.0).contains(&self.identity_score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeCurve {
    pub attribute: usize,
    pub name: String,
    /// Starts with the unedited factor-0 row.
    pub points: Vec<MetricsPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub d: f64,
    pub count: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { d: 1.0, count: 10 }
    }
}

/// Edit sign per code: toward presence when the loss classifier judges the
/// target absent (`p <= 0.5`), toward absence otherwise.
pub fn edit_signs(classifier: &ClassifierModel, codes: &[LatentCode], k: usize) -> Result<Vec<f64>> {
    codes
        .iter()
        .map(|c| Ok(if classifier.predict(c)?[k] > 0.5 { -1.0 } else { 1.0 }))
        .collect()
}

/// Sweeps one transformer over `codes` and grades every factor.
pub fn eval_curve(
    model: &TransformerModel,
    codes: &[LatentCode],
    signs: &[f64],
    judge: &ClassifierModel,
    world: &OracleWorld,
    config: &EvalConfig,
) -> Result<Vec<MetricsPoint>> {
    let k = model.target_attribute();
    check_target(judge, k)?;
    check_len("edit sign count", codes.len(), signs.len())?;
    if judge.num_attributes() < 2 {
        return Err(Error::InvalidArgument("evaluation needs at least two attributes".into()));
    }
    if codes.is_empty() {
        return Err(Error::InvalidArgument("evaluation over an empty split".into()));
    }
    let n = judge.num_attributes();
    let original_labels: Vec<Vec<bool>> = codes.iter().map(|c| hard_labels(judge, c)).collect::<Result<_>>()?;
    let directions: Vec<Vec<f64>> = codes.iter().map(|c| model.edit_direction(c)).collect::<Result<_>>()?;

    let mut factors = vec![0.0];
    factors.extend(crate::edit::sweep_factors(config.d, config.count)?);
    factors
        .into_iter()
        .map(|factor| {
            let edited: Vec<LatentCode> = codes
                .iter()
                .zip(&directions)
                .zip(signs)
                .map(|((c, f), s)| {
                    if factor == 0.0 {
                        Ok(c.clone())
                    } else {
                        crate::transformer::displace(c, f, s * factor)
                    }
                })
                .collect::<Result<_>>()?;
            let pairs: Vec<(Vec<bool>, Vec<bool>)> = original_labels
                .iter()
                .zip(&edited)
                .map(|(o, e)| Ok((o.clone(), hard_labels(judge, e)?)))
                .collect::<Result<_>>()?;
            Ok(MetricsPoint {
                factor,
                change_rate: change_from_labels(&pairs, k),
                preservation_rate: preservation_from_labels(&pairs, k, n),
                identity_score: identity_score(world, codes, &edited)?,
            })
        })
        .collect()
}

/// Evaluates each transformer on `codes`; one curve of `count + 1` points per
/// model.
pub fn run_eval(
    models: &[TransformerModel],
    codes: &[LatentCode],
    classifier: &ClassifierModel,
    judge: &ClassifierModel,
    world: &OracleWorld,
    config: &EvalConfig,
) -> Result<Vec<AttributeCurve>> {
    models
        .iter()
        .map(|m| {
            let k = m.target_attribute();
            check_target(classifier, k)?;
            let signs = edit_signs(classifier, codes, k)?;
            Ok(AttributeCurve {
                attribute: k,
                name: world.attribute_names.get(k).cloned().unwrap_or_else(|| format!("attr_{k}")),
                points: eval_curve(m, codes, &signs, judge, world, config)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationScenario {
    Full,
    NoAttr,
    NoRec,
}

impl AblationScenario {
    pub const ALL: [AblationScenario; 3] = [Self::Full, Self::NoAttr, Self::NoRec];

    /// Loss weights derived from the full-model weights `base`.
    pub fn weights(self, base: LossWeights) -> LossWeights {
        match self {
            Self::Full => base,
            Self::NoAttr => LossWeights { lambda_attr: 0.0, ..base },
            Self::NoRec => LossWeights { lambda_rec: 0.0, ..base },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoAttr => "no_attr",
            Self::NoRec => "no_rec",
        }
    }
}

impl fmt::Display for AblationScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: AblationScenario,
    pub weights: LossWeights,
    pub model: TransformerModel,
    pub points: Vec<MetricsPoint>,
}

/// Trains one transformer per scenario from the same seed and batch order and
/// evaluates each on `codes`.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    dataset: &LatentDataset,
    codes: &[LatentCode],
    classifier: &ClassifierModel,
    judge: &ClassifierModel,
    world: &OracleWorld,
    k: usize,
    scenarios: &[AblationScenario],
    train: &TransformerTrainConfig,
    eval: &EvalConfig,
) -> Result<Vec<ScenarioResult>> {
    check_target(classifier, k)?;
    let signs = edit_signs(classifier, codes, k)?;
    scenarios
        .iter()
        .map(|&scenario| {
            let mut config = *train;
            config.loss.weights = scenario.weights(train.loss.weights);
            let (model, _) = train_transformer(dataset, classifier, k, dataset.gamma_row(k), &config)?;
            let points = eval_curve(&model, codes, &signs, judge, world, eval)?;
            Ok(ScenarioResult {
                scenario,
                weights: config.loss.weights,
                model,
                points,
            })
        })
        .collect()
}

/// Linearly interpolates the curve at the first crossing where the change
/// rate exceeds `target`. `None` if it never does.
pub fn matched_point(points: &[MetricsPoint], target: f64) -> Option<MetricsPoint> {
    let j = points.iter().position(|p| p.change_rate > target)?;
    if j == 0 {
        return Some(points[0]);
    }
    let (a, b) = (points[j - 1], points[j]);
    let t = (target - a.change_rate) / (b.change_rate - a.change_rate);
    let lerp = |x: f64, y: f64| x + t * (y - x);
    Some(MetricsPoint {
        factor: lerp(a.factor, b.factor),
        change_rate: target,
        preservation_rate: lerp(a.preservation_rate, b.preservation_rate),
        identity_score: lerp(a.identity_score, b.identity_score),
    })
}
