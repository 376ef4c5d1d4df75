use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use latent_edit::config::RunConfig;
use latent_edit::edit::SequenceMode;
use latent_edit::pipeline::{self, EditToken, Workspace};
use latent_edit::transformer::TransformerVariant;

/// Latent-space attribute editing on a synthetic oracle world.
#[derive(Parser)]
#[command(name = "latent-edit", version)]
struct Cli {
    /// Run directory holding artifacts and their manifest.
    #[arg(long, env = "LATENT_EDIT_ROOT", default_value = "artifacts", global = true)]
    root: PathBuf,

    /// JSON run configuration. Defaults to `<root>/config.json` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that take precedence over the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    classifier_depth: Option<usize>,
    #[arg(long, global = true)]
    classifier_iterations: Option<usize>,
    #[arg(long, global = true)]
    judge_iterations: Option<usize>,
    #[arg(long, global = true)]
    variant: Option<TransformerVariant>,
    #[arg(long, global = true)]
    transformer_iterations: Option<usize>,
    #[arg(long, global = true)]
    lambda_attr: Option<f64>,
    #[arg(long, global = true)]
    lambda_rec: Option<f64>,
    #[arg(long, global = true)]
    d: Option<f64>,
    #[arg(long, global = true)]
    count: Option<usize>,
    #[arg(long, global = true)]
    eval_samples: Option<usize>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        set(&mut c.seed, &self.seed);
        set(&mut c.dataset.samples, &self.samples);
        set(&mut c.dataset.train_fraction, &self.train_fraction);
        set(&mut c.optimizer.batch_size, &self.batch_size);
        set(&mut c.optimizer.lr, &self.lr);
        set(&mut c.classifier.depth, &self.classifier_depth);
        set(&mut c.classifier.iterations, &self.classifier_iterations);
        set(&mut c.judge.iterations, &self.judge_iterations);
        set(&mut c.transformer.variant, &self.variant);
        set(&mut c.transformer.iterations, &self.transformer_iterations);
        set(&mut c.transformer.lambda_attr, &self.lambda_attr);
        set(&mut c.transformer.lambda_rec, &self.lambda_rec);
        set(&mut c.eval.d, &self.d);
        set(&mut c.eval.count, &self.count);
        if self.eval_samples.is_some() {
            c.eval.samples = self.eval_samples;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the oracle world, labeled dataset and correlation matrix.
    GenWorld,
    /// Train the frozen loss classifier.
    TrainClassifier {
        /// Also train every listed depth and write the depth table.
        #[arg(long, value_delimiter = ',')]
        depth_table: Vec<usize>,
    },
    /// Train the independent evaluation judge.
    TrainJudge,
    /// Train per-attribute transformers.
    TrainTransformer {
        /// Attribute names or indices; all attributes when omitted.
        #[arg(long = "attribute", value_delimiter = ',')]
        attributes: Vec<String>,
        /// Number of transformers trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Apply a sequence of `attribute:alpha` edits to latent codes.
    Edit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Edits in application order, e.g. `smile:1.0 beard:-0.5`.
        edits: Vec<EditToken>,
        /// Evaluate every displacement at the source code.
        #[arg(long)]
        fixed_displacement: bool,
        /// Write every intermediate code.
        #[arg(long)]
        intermediates: bool,
    },
    /// Edit codes at each sweep factor.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        attribute: String,
    },
    /// Evaluate trained transformers on the test split.
    Eval {
        /// Attribute names or indices; all attributes when omitted.
        #[arg(long = "attribute", value_delimiter = ',')]
        attributes: Vec<String>,
    },
    /// Compare full, no-attribute-loss and no-reconstruction-loss training.
    Ablate {
        #[arg(long, default_value = "0")]
        attribute: String,
    },
    /// Gaussian-smooth a `frame,point,x,y` landmark track along time.
    Smooth {
        track: PathBuf,
        output: PathBuf,
        #[arg(long)]
        sigma: f64,
    },
    /// Rasterize one frame of a landmark track into a PGM mask.
    Mask {
        track: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 2.0)]
        margin: f64,
    },
    /// Poisson-blend a source image into a target over a mask.
    Blend {
        source: PathBuf,
        target: PathBuf,
        mask: PathBuf,
        output: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let fallback = cli.root.join(pipeline::CONFIG);
    let path = cli.config.clone().or_else(|| fallback.exists().then_some(fallback));
    let mut config = match &path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn resolve_all(ws: &Workspace, names: &[String]) -> Result<Vec<usize>> {
    let world = ws.load_world()?;
    if names.is_empty() {
        return Ok((0..world.num_attributes()).collect());
    }
    Ok(names.iter().map(|n| Workspace::resolve_attribute(&world, n)).collect::<latent_edit::Result<_>>()?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn run(cli: &Cli) -> Result<()> {
    let force = cli.force;
    let workspace = || -> Result<Workspace> { Ok(Workspace::new(&cli.root, load_config(cli)?)?) };
    match &cli.command {
        Command::GenWorld => {
            let s = workspace()?.gen_world(force)?;
            println!("samples {} (train {}, test {})", s.samples, s.train_rows, s.test_rows);
            for (name, rate) in s.positive_rates {
                println!("  {name:<12} positive rate {rate:.3}");
            }
        }
        Command::TrainClassifier { depth_table } => {
            let ws = workspace()?;
            let (s, m) = ws.train_classifier(force)?;
            println!("{}: {} log rows, held-out accuracy {}", s.artifact, s.log_rows, fmt_opt(m.macro_avg.accuracy));
            if !depth_table.is_empty() {
                for row in ws.depth_table(depth_table, force)? {
                    let m = row.metrics.macro_avg;
                    println!(
                        "  depth {}: recall {} specificity {} precision {} accuracy {} f1 {}",
                        row.depth,
                        fmt_opt(m.recall),
                        fmt_opt(m.specificity),
                        fmt_opt(m.precision),
                        fmt_opt(m.accuracy),
                        fmt_opt(m.f1)
                    );
                }
            }
        }
        Command::TrainJudge => {
            let (s, m) = workspace()?.train_judge(force)?;
            println!("{}: {} log rows, held-out accuracy {}", s.artifact, s.log_rows, fmt_opt(m.macro_avg.accuracy));
        }
        Command::TrainTransformer { attributes, jobs } => {
            let ws = workspace()?;
            let ks = resolve_all(&ws, attributes)?;
            for s in ws.train_transformers(&ks, *jobs, force)? {
                println!("{}: {} log rows, final loss {}", s.artifact, s.log_rows, fmt_opt(s.final_loss));
            }
        }
        Command::Edit {
            input,
            output,
            edits,
            fixed_displacement,
            intermediates,
        } => {
            let mode = if *fixed_displacement { SequenceMode::FixedAtSource } else { SequenceMode::Recompute };
            guard_input(input, output)?;
            workspace()?.edit(input, edits, mode, *intermediates, output, force)?;
            println!("wrote {}", output.display());
        }
        Command::Sweep { input, output, attribute } => {
            guard_input(input, output)?;
            let factors = workspace()?.sweep(input, attribute, output, force)?;
            println!("wrote {} ({} factors)", output.display(), factors.len());
        }
        Command::Eval { attributes } => {
            let ws = workspace()?;
            let ks = resolve_all(&ws, attributes)?;
            for curve in ws.eval(&ks, force)? {
                let last = curve.points.last().expect("curves are non-empty");
                println!(
                    "{:<12} factor {:.1}: change {:.3} preservation {:.3} identity {:.3}",
                    curve.name, last.factor, last.change_rate, last.preservation_rate, last.identity_score
                );
            }
        }
        Command::Ablate { attribute } => {
            let ws = workspace()?;
            let k = Workspace::resolve_attribute(&ws.load_world()?, attribute)?;
            let (_, summary) = ws.ablate(k, force)?;
            for (scenario, point) in &summary.matched {
                match point {
                    Some(p) => println!(
                        "{scenario:<8} at change {:.2}: factor {:.3} preservation {:.4} identity {:.4}",
                        summary.matched_change_rate, p.factor, p.preservation_rate, p.identity_score
                    ),
                    None => println!("{scenario:<8} never reaches change rate {:.2}", summary.matched_change_rate),
                }
            }
            println!("preservation gap {} identity gap {}", fmt_opt(summary.preservation_gap), fmt_opt(summary.identity_gap));
        }
        Command::Smooth { track, output, sigma } => {
            guard_input(track, output)?;
            pipeline::smooth_file(track, *sigma, output, force)?;
            println!("wrote {}", output.display());
        }
        Command::Mask {
            track,
            output,
            frame,
            height,
            width,
            margin,
        } => {
            guard_input(track, output)?;
            pipeline::mask_file(track, *frame, *height, *width, *margin, output, force)?;
            println!("wrote {}", output.display());
        }
        Command::Blend { source, target, mask, output } => {
            for input in [source, target, mask] {
                guard_input(input, output)?;
            }
            let stats = pipeline::blend_files(source, target, mask, output, force)?;
            println!("wrote {} ({} unknowns, residuals {:?})", output.display(), stats.unknowns, stats.residuals);
        }
    }
    Ok(())
}

/// Inputs are never overwritten, even with `--force`.
fn guard_input(input: &Path, output: &Path) -> Result<()> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == output,
    };
    if same {
        bail!("output {} would overwrite an input", output.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    run(&cli)
}
