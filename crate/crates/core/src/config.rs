//! Run configuration: one JSON document holding every constant of a
//! pipeline run, with per-stage seeds derived from the root seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::ClassifierTrainConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::nn::{AdamConfig, Penalty};
use crate::transformer::{LossWeights, TransformLossConfig, TransformerTrainConfig, TransformerVariant};
use crate::world::WorldParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub samples: usize,
    pub train_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            samples: 4000,
            train_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub log_every: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 32,
            log_every: 10,
        }
    }
}

impl OptimizerSection {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub depth: usize,
    pub hidden_width: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    pub depth: usize,
    pub hidden_width: usize,
    pub iterations: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            depth: 3,
            hidden_width: 64,
            iterations: 2000,
        }
    }
}

impl Default for JudgeSection {
    fn default() -> Self {
        Self {
            depth: 2,
            hidden_width: 32,
            iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerSection {
    pub variant: TransformerVariant,
    pub hidden_width: usize,
    pub iterations: usize,
    pub lambda_attr: f64,
    pub lambda_rec: f64,
    pub attr_penalty: Penalty,
    pub rec_penalty: Penalty,
}

impl Default for TransformerSection {
    fn default() -> Self {
        let loss = TransformLossConfig::default();
        Self {
            variant: TransformerVariant::Linear,
            hidden_width: 64,
            iterations: 5000,
            lambda_attr: loss.weights.lambda_attr,
            lambda_rec: loss.weights.lambda_rec,
            attr_penalty: loss.attr_penalty,
            rec_penalty: loss.rec_penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub d: f64,
    pub count: usize,
    /// Number of test codes to evaluate on; all of them when absent.
    pub samples: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            d: 1.0,
            count: 10,
            samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldParams,
    pub dataset: DatasetSection,
    pub optimizer: OptimizerSection,
    pub classifier: ClassifierSection,
    pub judge: JudgeSection,
    pub transformer: TransformerSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            world: WorldParams::default(),
            dataset: DatasetSection::default(),
            optimizer: OptimizerSection::default(),
            classifier: ClassifierSection::default(),
            judge: JudgeSection::default(),
            transformer: TransformerSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Pipeline stages that own a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    World,
    Dataset,
    ClassifierInit,
    ClassifierBatches,
    JudgeInit,
    JudgeBatches,
    Transformer(usize),
    Ablation(usize),
}

impl Stage {
    fn label(self) -> String {
        match self {
            Self::World => "world".into(),
            Self::Dataset => "dataset".into(),
            Self::ClassifierInit => "classifier-init".into(),
            Self::ClassifierBatches => "classifier-batches".into(),
            Self::JudgeInit => "judge-init".into(),
            Self::JudgeBatches => "judge-batches".into(),
            Self::Transformer(k) => format!("transformer-{k}"),
            Self::Ablation(k) => format!("ablation-{k}"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = crate::formats::read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return bad(format!("train_fraction {} must lie in (0, 1)", self.dataset.train_fraction));
        }
        if self.dataset.samples < 10 {
            return bad("dataset needs at least 10 samples".into());
        }
        self.optimizer.adam().validate()?;
        self.loss().weights.validate()?;
        if self.optimizer.batch_size == 0 || self.optimizer.log_every == 0 {
            return bad("batch_size and log_every must be positive".into());
        }
        if self.eval.count == 0 || self.eval.d == 0.0 || !self.eval.d.is_finite() {
            return bad("eval needs a positive count and a finite non-zero d".into());
        }
        Ok(())
    }

    /// Independent seed per stage: the first 8 bytes of
    /// `sha256("<root seed>:<stage>")`, little-endian.
    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let digest = Sha256::digest(format!("{}:{}", self.seed, stage.label()).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn loss(&self) -> TransformLossConfig {
        TransformLossConfig {
            weights: LossWeights {
                lambda_attr: self.transformer.lambda_attr,
                lambda_rec: self.transformer.lambda_rec,
            },
            attr_penalty: self.transformer.attr_penalty,
            rec_penalty: self.transformer.rec_penalty,
        }
    }

    pub fn classifier_training(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            iterations: self.classifier.iterations,
            batch_size: self.optimizer.batch_size,
            adam: self.optimizer.adam(),
            seed: self.stage_seed(Stage::ClassifierBatches),
            log_every: self.optimizer.log_every,
        }
    }

    pub fn judge_training(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            iterations: self.judge.iterations,
            seed: self.stage_seed(Stage::JudgeBatches),
            ..self.classifier_training()
        }
    }

    pub fn transformer_training(&self, stage: Stage) -> TransformerTrainConfig {
        TransformerTrainConfig {
            variant: self.transformer.variant,
            hidden_width: self.transformer.hidden_width,
            iterations: self.transformer.iterations,
            batch_size: self.optimizer.batch_size,
            adam: self.optimizer.adam(),
            loss: self.loss(),
            seed: self.stage_seed(stage),
            log_every: self.optimizer.log_every,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            d: self.eval.d,
            count: self.eval.count,
        }
    }
}
