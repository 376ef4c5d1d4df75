//! End-to-end commands over a run directory: generate the world, train the
//! classifiers and transformers, edit, evaluate and ablate. Every artifact is
//! recorded in the directory's manifest and verified when read back.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classifier::{build_classifier, depth_ablation, evaluate_classifier, train_classifier, ClassifierMetrics, ClassifierModel, DepthAblationRow};
use crate::config::{RunConfig, Stage};
use crate::edit::{sequential_edit, sweep, EditStep, SequenceMode};
use crate::error::{Error, Result};
use crate::eval::{matched_point, run_ablation, run_eval, AblationScenario, AttributeCurve, MetricsPoint, ScenarioResult};
use crate::formats::{self, DatasetSplit, LatentTable, ReportRow};
use crate::manifest::ArtifactManifest;
use crate::transformer::{train_transformer, TransformerModel};
use crate::video::{gaussian_smooth_track, mask_from_landmarks, poisson_blend_with_stats, BlendStats};
use crate::world::{make_world, sample_dataset_with_split, LatentCode, LatentDataset, OracleWorld};

pub const CONFIG: &str = "config.json";
pub const WORLD: &str = "world.json";
pub const DATASET: &str = "dataset.csv";
pub const SPLIT: &str = "split.json";
pub const CORRELATION: &str = "correlation.csv";
/// Test-split codes in the latent table layout, ready for `edit`/`sweep`.
pub const TEST_LATENTS: &str = "test_latents.csv";
pub const CLASSIFIER: &str = "classifier.json";
pub const JUDGE: &str = "judge.json";
pub const DEPTH_TABLE: &str = "classifier_depths.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_JSON: &str = "ablation.json";

/// Change rate at which ablation scenarios are compared.
pub const MATCHED_CHANGE_RATE: f64 = 0.8;

pub fn transformer_file(k: usize) -> String {
    format!("transformer_{k}.json")
}

pub fn transformer_log_file(k: usize) -> String {
    format!("transformer_{k}_loss.csv")
}

fn refuse_existing(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    Ok(())
}

/// `attribute:alpha`, where the attribute is a name or an index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditToken {
    pub attribute: String,
    pub alpha: f64,
}

impl FromStr for EditToken {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (attribute, alpha) = s
            .rsplit_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("edit {s:?} is not of the form attribute:alpha")))?;
        let alpha: f64 = alpha
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("edit {s:?}: cannot parse scale {alpha:?}")))?;
        if !alpha.is_finite() || attribute.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("edit {s:?} needs an attribute and a finite scale")));
        }
        Ok(Self {
            attribute: attribute.trim().to_string(),
            alpha,
        })
    }
}

impl fmt::Display for EditToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.attribute, self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenWorldSummary {
    pub samples: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub positive_rates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub artifact: String,
    pub final_loss: Option<f64>,
    pub log_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub attribute: usize,
    pub name: String,
    pub matched_change_rate: f64,
    /// Interpolated metrics per scenario; absent if the curve never reaches
    /// the matched change rate.
    pub matched: Vec<(AblationScenario, Option<MetricsPoint>)>,
    pub preservation_gap: Option<f64>,
    pub identity_gap: Option<f64>,
}

/// A run directory plus the configuration driving it.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    config: RunConfig,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>, config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { root: root.into(), config })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn manifest(&self) -> Result<ArtifactManifest> {
        ArtifactManifest::load(&self.root)
    }

    fn guard(&self, names: &[&str], force: bool) -> Result<()> {
        names.iter().try_for_each(|n| refuse_existing(&self.root.join(n), force))
    }

    fn require(&self, manifest: &ArtifactManifest, name: &str, hint: &str) -> Result<Vec<u8>> {
        if !manifest.contains(name) {
            return Err(Error::MissingPrerequisite(format!("{} (run `{hint}` first)", self.root.join(name).display())));
        }
        manifest.read_verified(&self.root, name)
    }

    fn write(&self, manifest: &mut ArtifactManifest, name: &str, bytes: &[u8], command: &str) -> Result<()> {
        manifest.write(&self.root, name, bytes, command, &self.config.fingerprint())
    }

    pub fn gen_world(&self, force: bool) -> Result<GenWorldSummary> {
        self.guard(&[CONFIG, WORLD, DATASET, SPLIT, CORRELATION, TEST_LATENTS], force)?;
        let c = &self.config;
        let world = make_world(c.stage_seed(Stage::World), &c.world)?;
        let dataset = sample_dataset_with_split(&world, c.dataset.samples, c.stage_seed(Stage::Dataset), c.dataset.train_fraction)?;

        let mut manifest = self.manifest()?;
        self.write(&mut manifest, CONFIG, &formats::to_json_bytes(c)?, "gen-world")?;
        self.write(&mut manifest, WORLD, &formats::to_json_bytes(&world)?, "gen-world")?;
        self.write(&mut manifest, DATASET, &formats::encode_dataset(&dataset)?, "gen-world")?;
        self.write(&mut manifest, SPLIT, &formats::to_json_bytes(&DatasetSplit::of(&dataset))?, "gen-world")?;
        self.write(&mut manifest, CORRELATION, &formats::encode_correlation(&dataset.attribute_names, &dataset.correlation)?, "gen-world")?;
        let test_codes = LatentTable::indexed("index", dataset.test_codes());
        self.write(&mut manifest, TEST_LATENTS, &formats::encode_latents(&test_codes)?, "gen-world")?;
        manifest.set_detail(DATASET, "samples", json!(dataset.samples.len()));
        manifest.set_detail(DATASET, "train_rows", json!(dataset.train.len()));
        manifest.set_detail(DATASET, "test_rows", json!(dataset.test.len()));
        manifest.save(&self.root)?;

        let n = dataset.samples.len() as f64;
        let positive_rates = dataset
            .attribute_names
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), dataset.samples.iter().filter(|s| s.labels[i] == 1).count() as f64 / n))
            .collect();
        Ok(GenWorldSummary {
            samples: dataset.samples.len(),
            train_rows: dataset.train.len(),
            test_rows: dataset.test.len(),
            positive_rates,
        })
    }

    pub fn load_world(&self) -> Result<OracleWorld> {
        let manifest = self.manifest()?;
        Ok(serde_json::from_slice(&self.require(&manifest, WORLD, "gen-world")?)?)
    }

    pub fn load_dataset(&self) -> Result<(OracleWorld, LatentDataset)> {
        let manifest = self.manifest()?;
        let world: OracleWorld = serde_json::from_slice(&self.require(&manifest, WORLD, "gen-world")?)?;
        let split: DatasetSplit = serde_json::from_slice(&self.require(&manifest, SPLIT, "gen-world")?)?;
        let bytes = self.require(&manifest, DATASET, "gen-world")?;
        let dataset = formats::decode_dataset(&bytes, world.shape, world.attribute_names.clone(), split)?;
        Ok((world, dataset))
    }

    fn train_classifier_stage(&self, judge: bool, force: bool) -> Result<(TrainSummary, ClassifierMetrics)> {
        let (name, command) = if judge { (JUDGE, "train-judge") } else { (CLASSIFIER, "train-classifier") };
        let stem = name.trim_end_matches(".json");
        let log_name = format!("{stem}_loss.csv");
        let metrics_name = format!("{stem}_metrics.csv");
        self.guard(&[name, &log_name, &metrics_name], force)?;
        let (_, dataset) = self.load_dataset()?;
        let c = &self.config;
        let (depth, width, init, training) = if judge {
            (c.judge.depth, c.judge.hidden_width, Stage::JudgeInit, c.judge_training())
        } else {
            (c.classifier.depth, c.classifier.hidden_width, Stage::ClassifierInit, c.classifier_training())
        };
        let model = build_classifier(depth, width, dataset.shape.flat_len(), dataset.num_attributes(), c.stage_seed(init))?;
        let (model, log) = train_classifier(model, &dataset, &training)?;
        let metrics = evaluate_classifier(&model, dataset.test_samples(), 0.5)?;
        info!("{command}: held-out macro accuracy {:?}", metrics.macro_avg.accuracy);

        let mut manifest = self.manifest()?;
        self.write(&mut manifest, name, &formats::to_json_bytes(&model)?, command)?;
        self.write(&mut manifest, &log_name, &formats::encode_classifier_log(&log)?, command)?;
        self.write(&mut manifest, &metrics_name, &formats::encode_classifier_metrics(&dataset.attribute_names, &metrics)?, command)?;
        manifest.save(&self.root)?;
        Ok((
            TrainSummary {
                artifact: name.to_string(),
                final_loss: log.last().map(|r| r.loss),
                log_rows: log.len(),
            },
            metrics,
        ))
    }

    /// Trains the frozen loss classifier.
    pub fn train_classifier(&self, force: bool) -> Result<(TrainSummary, ClassifierMetrics)> {
        self.train_classifier_stage(false, force)
    }

    /// Trains the independent evaluation judge.
    pub fn train_judge(&self, force: bool) -> Result<(TrainSummary, ClassifierMetrics)> {
        self.train_classifier_stage(true, force)
    }

    /// Trains one classifier per depth and writes the held-out metrics table.
    pub fn depth_table(&self, depths: &[usize], force: bool) -> Result<Vec<DepthAblationRow>> {
        self.guard(&[DEPTH_TABLE], force)?;
        let (_, dataset) = self.load_dataset()?;
        let c = &self.config;
        let rows = depth_ablation(&dataset, depths, c.classifier.hidden_width, c.stage_seed(Stage::ClassifierInit), &c.classifier_training())?;
        let mut manifest = self.manifest()?;
        self.write(&mut manifest, DEPTH_TABLE, &formats::encode_depth_table(&rows)?, "train-classifier")?;
        manifest.save(&self.root)?;
        Ok(rows)
    }

    fn load_classifier_file(&self, manifest: &ArtifactManifest, name: &str, hint: &str) -> Result<ClassifierModel> {
        let model: ClassifierModel = serde_json::from_slice(&self.require(manifest, name, hint)?)?;
        if !model.is_frozen() {
            return Err(Error::InvalidArgument(format!("{name} holds an unfrozen classifier")));
        }
        Ok(model)
    }

    pub fn load_classifier(&self) -> Result<ClassifierModel> {
        self.load_classifier_file(&self.manifest()?, CLASSIFIER, "train-classifier")
    }

    pub fn load_judge(&self) -> Result<ClassifierModel> {
        self.load_classifier_file(&self.manifest()?, JUDGE, "train-judge")
    }

    /// Resolves an attribute given by name or index.
    pub fn resolve_attribute(world: &OracleWorld, attribute: &str) -> Result<usize> {
        match attribute.parse::<usize>() {
            Ok(k) if k < world.num_attributes() => Ok(k),
            _ => world.attribute_index(attribute),
        }
    }

    /// Trains the transformers for `attributes`, up to `jobs` at a time.
    pub fn train_transformers(&self, attributes: &[usize], jobs: usize, force: bool) -> Result<Vec<TrainSummary>> {
        for &k in attributes {
            self.guard(&[&transformer_file(k), &transformer_log_file(k)], force)?;
        }
        let (world, dataset) = self.load_dataset()?;
        if let Some(&k) = attributes.iter().find(|&&k| k >= world.num_attributes()) {
            return Err(Error::InvalidArgument(format!("attribute index {k} out of range")));
        }
        let classifier = self.load_classifier()?;
        let train_one = |k: usize| {
            let config = self.config.transformer_training(Stage::Transformer(k));
            train_transformer(&dataset, &classifier, k, dataset.gamma_row(k), &config)
        };
        let mut results = Vec::with_capacity(attributes.len());
        for chunk in attributes.chunks(jobs.max(1)) {
            let chunk_results: Vec<_> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk.iter().map(|&k| scope.spawn(move || train_one(k))).collect();
                handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
            });
            results.extend(chunk_results);
        }

        let mut manifest = self.manifest()?;
        let mut summaries = Vec::new();
        for (&k, result) in attributes.iter().zip(results) {
            let (model, log) = result?;
            let name = transformer_file(k);
            self.write(&mut manifest, &name, &formats::to_json_bytes(&model)?, "train-transformer")?;
            self.write(&mut manifest, &transformer_log_file(k), &formats::encode_transformer_log(&log)?, "train-transformer")?;
            manifest.set_detail(&name, "attribute", json!(world.attribute_names[k]));
            summaries.push(TrainSummary {
                artifact: name,
                final_loss: log.last().map(|r| r.total),
                log_rows: log.len(),
            });
        }
        manifest.save(&self.root)?;
        Ok(summaries)
    }

    pub fn load_transformer(&self, manifest: &ArtifactManifest, k: usize) -> Result<TransformerModel> {
        let model: TransformerModel = serde_json::from_slice(&self.require(manifest, &transformer_file(k), "train-transformer")?)?;
        model.validate()?;
        if model.target_attribute() != k {
            return Err(Error::InvalidArgument(format!("{} targets attribute {}", transformer_file(k), model.target_attribute())));
        }
        Ok(model)
    }

    fn read_codes(&self, world: &OracleWorld, input: &Path) -> Result<Vec<LatentCode>> {
        Ok(formats::decode_latents(&formats::read_bytes(input)?, world.shape)?.codes())
    }

    /// Applies `script` in order to every code in `input` and writes the
    /// results (and optionally every intermediate) to `output`.
    pub fn edit(&self, input: &Path, script: &[EditToken], mode: SequenceMode, intermediates: bool, output: &Path, force: bool) -> Result<()> {
        refuse_existing(output, force)?;
        let world = self.load_world()?;
        let manifest = self.manifest()?;
        let mut models = Vec::with_capacity(script.len());
        for token in script {
            let k = Self::resolve_attribute(&world, &token.attribute)?;
            models.push(self.load_transformer(&manifest, k)?);
        }
        let steps: Vec<EditStep<'_>> = models.iter().zip(script).map(|(model, t)| EditStep { model, alpha: t.alpha }).collect();
        let codes = self.read_codes(&world, input)?;

        let mut table = LatentTable {
            key_names: if intermediates { vec!["index".into(), "step".into()] } else { vec!["index".into()] },
            rows: Vec::new(),
            comments: vec![
                format!("script: {}", script.iter().map(EditToken::to_string).collect::<Vec<_>>().join(" ")),
                format!("mode: {}", serde_json::to_value(mode)?.as_str().unwrap_or_default()),
            ],
        };
        for (i, code) in codes.iter().enumerate() {
            let (last, all) = sequential_edit(code, &steps, mode)?;
            if intermediates {
                table.rows.extend(all.into_iter().enumerate().map(|(s, c)| (vec![i as u64, s as u64], c)));
            } else {
                table.rows.push((vec![i as u64], last));
            }
        }
        formats::write_bytes(output, &formats::encode_latents(&table)?)
    }

    /// Writes the `count` sweep edits of every input code.
    pub fn sweep(&self, input: &Path, attribute: &str, output: &Path, force: bool) -> Result<Vec<f64>> {
        refuse_existing(output, force)?;
        let world = self.load_world()?;
        let k = Self::resolve_attribute(&world, attribute)?;
        let model = self.load_transformer(&self.manifest()?, k)?;
        let codes = self.read_codes(&world, input)?;
        let mut table = LatentTable {
            key_names: vec!["index".into(), "step".into()],
            rows: Vec::new(),
            comments: Vec::new(),
        };
        let mut factors = Vec::new();
        for (i, code) in codes.iter().enumerate() {
            let result = sweep(code, &model, self.config.eval.d, self.config.eval.count)?;
            factors = result.factors;
            table.rows.extend(result.codes.into_iter().enumerate().map(|(j, c)| (vec![i as u64, j as u64 + 1], c)));
        }
        let listed: Vec<String> = factors.iter().map(f64::to_string).collect();
        table.comments = vec![format!("attribute: {}", world.attribute_names[k]), format!("factors: {}", listed.join(" "))];
        formats::write_bytes(output, &formats::encode_latents(&table)?)?;
        Ok(factors)
    }

    fn eval_codes(&self, dataset: &LatentDataset) -> Vec<LatentCode> {
        let limit = self.config.eval.samples.unwrap_or(usize::MAX);
        dataset.test_samples().take(limit).map(|s| s.code.clone()).collect()
    }

    /// Evaluates the trained transformers for `attributes` on the test split.
    /// Reports are written before any out-of-range metric is flagged.
    pub fn eval(&self, attributes: &[usize], force: bool) -> Result<Vec<AttributeCurve>> {
        self.guard(&[EVAL_CSV, EVAL_JSON], force)?;
        let (world, dataset) = self.load_dataset()?;
        let manifest = self.manifest()?;
        let classifier = self.load_classifier()?;
        let judge = self.load_judge()?;
        let models = attributes.iter().map(|&k| self.load_transformer(&manifest, k)).collect::<Result<Vec<_>>>()?;
        let codes = self.eval_codes(&dataset);
        let curves = run_eval(&models, &codes, &classifier, &judge, &world, &self.config.eval_config())?;

        let rows: Vec<ReportRow> = curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| ReportRow::new(&c.name, "configured", p)))
            .collect();
        let summary = json!({ "notes": formats::REPORT_NOTES, "samples": codes.len(), "curves": curves_json(&curves) });
        let mut manifest = manifest;
        self.write(&mut manifest, EVAL_CSV, &formats::encode_report(&rows)?, "eval")?;
        self.write(&mut manifest, EVAL_JSON, &formats::to_json_bytes(&summary)?, "eval")?;
        manifest.save(&self.root)?;
        check_bounds(curves.iter().flat_map(|c| &c.points))?;
        Ok(curves)
    }

    /// Trains and evaluates the full, no-attribute-loss and
    /// no-reconstruction-loss transformers for attribute `k`.
    pub fn ablate(&self, k: usize, force: bool) -> Result<(Vec<ScenarioResult>, AblationSummary)> {
        self.guard(&[ABLATION_CSV, ABLATION_JSON], force)?;
        let (world, dataset) = self.load_dataset()?;
        if k >= world.num_attributes() {
            return Err(Error::InvalidArgument(format!("attribute index {k} out of range")));
        }
        let classifier = self.load_classifier()?;
        let judge = self.load_judge()?;
        let codes = self.eval_codes(&dataset);
        let training = self.config.transformer_training(Stage::Ablation(k));
        let results = run_ablation(&dataset, &codes, &classifier, &judge, &world, k, &AblationScenario::ALL, &training, &self.config.eval_config())?;

        let name = world.attribute_names[k].clone();
        let matched: Vec<(AblationScenario, Option<MetricsPoint>)> = results.iter().map(|r| (r.scenario, matched_point(&r.points, MATCHED_CHANGE_RATE))).collect();
        let find = |s: AblationScenario| matched.iter().find(|(x, _)| *x == s).and_then(|(_, p)| *p);
        let (full, no_attr, no_rec) = (find(AblationScenario::Full), find(AblationScenario::NoAttr), find(AblationScenario::NoRec));
        let summary = AblationSummary {
            attribute: k,
            name: name.clone(),
            matched_change_rate: MATCHED_CHANGE_RATE,
            preservation_gap: full.zip(no_attr).map(|(f, a)| f.preservation_rate - a.preservation_rate),
            identity_gap: full.zip(no_rec).map(|(f, r)| f.identity_score - r.identity_score),
            matched,
        };

        let rows: Vec<ReportRow> = results
            .iter()
            .flat_map(|r| r.points.iter().map(|p| ReportRow::new(&name, r.scenario.as_str(), p)))
            .collect();
        let curves: Vec<_> = results
            .iter()
            .map(|r| json!({ "scenario": r.scenario, "weights": r.weights, "points": r.points }))
            .collect();
        let document = json!({ "notes": formats::REPORT_NOTES, "summary": summary, "curves": curves });
        let mut manifest = self.manifest()?;
        self.write(&mut manifest, ABLATION_CSV, &formats::encode_report(&rows)?, "ablate")?;
        self.write(&mut manifest, ABLATION_JSON, &formats::to_json_bytes(&document)?, "ablate")?;
        for r in &results {
            self.write(&mut manifest, &format!("ablation_{k}_{}.json", r.scenario), &formats::to_json_bytes(&r.model)?, "ablate")?;
        }
        manifest.save(&self.root)?;
        check_bounds(results.iter().flat_map(|r| &r.points))?;
        Ok((results, summary))
    }
}

fn curves_json(curves: &[AttributeCurve]) -> serde_json::Value {
    curves
        .iter()
        .map(|c| {
            let column = |f: fn(&MetricsPoint) -> f64| c.points.iter().map(f).collect::<Vec<_>>();
            json!({
                "attribute": c.name,
                "index": c.attribute,
                "factor": column(|p| p.factor),
                "change_rate": column(|p| p.change_rate),
                "preservation_rate": column(|p| p.preservation_rate),
                "identity_score": column(|p| p.identity_score),
            })
        })
        .collect()
}

fn check_bounds<'a>(points: impl IntoIterator<Item = &'a MetricsPoint>) -> Result<()> {
    match points.into_iter().find(|p| !p.within_bounds()) {
        Some(p) => Err(Error::BoundViolation(format!("metric out of range at factor {}: {p:?}", p.factor))),
        None => Ok(()),
    }
}

/// Smooths a landmark track CSV along time.
pub fn smooth_file(track: &Path, sigma: f64, output: &Path, force: bool) -> Result<()> {
    refuse_existing(output, force)?;
    let smoothed = gaussian_smooth_track(&formats::decode_landmarks(&formats::read_bytes(track)?)?, sigma)?;
    formats::write_bytes(output, &formats::encode_landmarks(&smoothed)?)
}

/// Seamlessly clones `source` into `target` over the mask image.
pub fn blend_files(source: &Path, target: &Path, mask: &Path, output: &Path, force: bool) -> Result<BlendStats> {
    refuse_existing(output, force)?;
    let (img, stats) = poisson_blend_with_stats(&formats::read_image(source)?, &formats::read_image(target)?, &formats::read_mask(mask)?)?;
    formats::write_image(output, &img)?;
    Ok(stats)
}

/// Rasterizes one frame of a landmark track into a PGM mask.
pub fn mask_file(track: &Path, frame: usize, height: usize, width: usize, margin: f64, output: &Path, force: bool) -> Result<()> {
    refuse_existing(output, force)?;
    let track = formats::decode_landmarks(&formats::read_bytes(track)?)?;
    if frame >= track.frames() {
        return Err(Error::InvalidArgument(format!("frame {frame} out of range for {} frames", track.frames())));
    }
    formats::write_mask(output, &mask_from_landmarks(track.frame(frame), height, width, margin)?)
}
