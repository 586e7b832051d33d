//! `lgsim`: simulate scenes, sample point clouds, evaluate detections, train
//! the toy adaptation model and check gradients.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 runtime failure. Errors
//! are printed to stderr as one `error[<kind>]: <message>` line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use lgsim::da::{self, DaError, GradcheckOptions, GrlConfig, TrainConfig};
use lgsim::dataset_io::{self, DatasetManifest, GenerationMode};
use lgsim::eval::{self, ApPoints, EvalConfig};
use lgsim::plot;
use lgsim::sampling::{DMinPolicy, SamplerConfig};
use lgsim::scene_sim::SceneConfig;

#[derive(Parser)]
#[command(name = "lgsim", version, about = "Virtual LiDAR data synthesis and adaptation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ray-cast and render scene files into a dataset directory.
    Simulate {
        /// Scene `.toml` files, or directories searched for them.
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate one mode's point clouds for every frame of a dataset.
    Sample {
        /// Dataset directory holding `manifest.json`.
        dataset: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: GenerationMode,
        #[arg(long, default_value = "per-point", value_parser = parse_dmin)]
        dmin: DMinPolicy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score detections against a dataset's labels.
    Eval {
        dataset: PathBuf,
        /// Directory of `<frame id>.txt` files in label format with a score column.
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value = "11", value_parser = parse_ap_points)]
        ap_points: ApPoints,
        #[arg(long, default_value_t = 0.7)]
        iou: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adversarial training on the two-domain toy problem.
    TrainToy {
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        grl_r: f64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every graph operation and of random models.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        configurations: usize,
        #[arg(long, hide = true)]
        inject_sign_bug: bool,
    },
}

fn parse_mode(s: &str) -> Result<GenerationMode, String> {
    s.parse()
}

fn parse_dmin(s: &str) -> Result<DMinPolicy, String> {
    s.parse().map_err(|e: lgsim::sampling::SamplingError| e.to_string())
}

fn parse_ap_points(s: &str) -> Result<ApPoints, String> {
    s.parse()
}

/// Failure classes, mapped to exit codes.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn report(&self) -> ExitCode {
        let (kind, code, err) = match self {
            Failure::Input(e) => ("input", 2, e),
            Failure::Runtime(e) => ("runtime", 3, e),
        };
        let message = format!("{err:#}").replace('\n', " | ");
        eprintln!("error[{kind}]: {message}");
        ExitCode::from(code)
    }
}

trait OrFail<T> {
    fn input(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .runtime()?;
    }
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

/// Scene files named directly, plus every `*.toml` inside named directories,
/// each directory's files in name order.
fn scene_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("reading {}", input.display()))
                .input()?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "toml"))
                .collect();
            found.sort();
            out.extend(found);
        } else if input.is_file() {
            out.push(input.clone());
        } else {
            return Err(Failure::Input(anyhow!("{}: no such file or directory", input.display())));
        }
    }
    Ok(out)
}

fn simulate(scenes: &[PathBuf], seed: u64, out: &Path) -> Result<(), Failure> {
    let configs = scene_paths(scenes)?
        .iter()
        .map(|p| SceneConfig::load(p))
        .collect::<Result<Vec<_>, _>>()
        .input()?;
    let manifest = dataset_io::simulate_dataset(&configs, seed, out).runtime()?;
    println!("simulated {} frames into {}", manifest.frames.len(), out.display());
    Ok(())
}

fn sample(dataset: &Path, mode: GenerationMode, dmin: DMinPolicy, seed: u64) -> Result<(), Failure> {
    let mut manifest = DatasetManifest::load(dataset).input()?;
    if mode != GenerationMode::CarlaOrigin {
        if let Some(f) = manifest.frames.iter().find(|f| f.depth.is_none()) {
            return Err(Failure::Input(anyhow!(
                "missing input: frame {} has no depth map, required by {mode}",
                f.id
            )));
        }
    }
    let sampler = SamplerConfig {
        d_min: dmin,
        seed,
        ..SamplerConfig::default()
    };
    dataset_io::sample_dataset(&mut manifest, dataset, mode, &sampler).runtime()?;
    let points: usize = manifest
        .frames
        .iter()
        .filter_map(|f| f.cloud(mode))
        .map(|c| c.points)
        .sum();
    println!("{mode}: {} frames, {points} points", manifest.frames.len());
    Ok(())
}

fn evaluate(dataset: &Path, detections: &Path, cfg: EvalConfig, out: &Path) -> Result<(), Failure> {
    if !(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0) {
        return Err(Failure::Input(anyhow!("--iou must be in (0, 1], got {}", cfg.iou_threshold)));
    }
    let manifest = DatasetManifest::load(dataset).input()?;
    if !detections.is_dir() {
        return Err(Failure::Input(anyhow!("{}: not a directory", detections.display())));
    }
    let table = eval::evaluate_dataset(&manifest, dataset, detections, &cfg).input()?;
    write(&out.join("ap.csv"), &table.to_csv())?;
    write(&out.join("ap.json"), &table.to_json())?;
    write(&out.join("pr.svg"), &plot::pr_chart(&table).to_svg())?;
    print!("{table}");
    Ok(())
}

fn train_toy(cfg: &TrainConfig, out: &Path) -> Result<(), Failure> {
    let (report, failure) = match da::toy_adversarial_train(cfg) {
        Ok(r) => (r, None),
        Err(DaError::DivergedTraining { epoch, report }) => {
            (*report, Some(anyhow!("training diverged at epoch {epoch}")))
        }
        Err(e) => return Err(Failure::Input(e.into())),
    };
    write(&out.join("report.json"), &report.to_json())?;
    write(&out.join("loss.svg"), &plot::loss_chart(&report).to_svg())?;
    if let Some(e) = failure {
        return Err(Failure::Runtime(e));
    }
    println!(
        "lambda {}: source accuracy {:.4}, target accuracy {:.4}, domain accuracy {:.4}",
        cfg.loss.lambda, report.source_task_accuracy, report.target_task_accuracy, report.domain_accuracy
    );
    Ok(())
}

fn gradcheck(opts: &GradcheckOptions) -> Result<(), Failure> {
    let ops = da::check_ops(opts).runtime()?;
    let model = da::gradcheck(opts).runtime()?;
    let verdict = |e: f64| if e < opts.tolerance { "pass" } else { "FAIL" };
    println!("{:<28}{:>16}  result", "check", "max rel error");
    for c in &ops {
        println!("{:<28}{:>16.3e}  {}", c.op, c.max_relative_error, verdict(c.max_relative_error));
    }
    let label = format!("model ({} configurations)", model.configurations);
    println!("{label:<28}{:>16.3e}  {}", model.max_relative_error, verdict(model.max_relative_error));
    let failed = ops.iter().filter(|c| c.max_relative_error >= opts.tolerance).count() + usize::from(!model.passed);
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!(
            "{failed} gradient checks above tolerance {:e}; worst model entry: {}",
            opts.tolerance,
            model.worst
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { scenes, seed, out } => simulate(&scenes, seed, &out),
        Command::Sample { dataset, mode, dmin, seed } => sample(&dataset, mode, dmin, seed),
        Command::Eval {
            dataset,
            detections,
            ap_points,
            iou,
            out,
        } => {
            let cfg = EvalConfig {
                iou_threshold: iou,
                ap_points,
                ..EvalConfig::default()
            };
            evaluate(&dataset, &detections, cfg, &out)
        }
        Command::TrainToy {
            lambda,
            grl_r,
            epochs,
            learning_rate,
            seed,
            out,
        } => {
            let mut cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Failure::Input(anyhow!("--lambda must be >= 0, got {lambda}")));
            }
            cfg.loss.lambda = lambda;
            cfg.loss.grl = GrlConfig::new(grl_r).input()?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.learning_rate = lr;
            }
            train_toy(&cfg, &out)
        }
        Command::Gradcheck {
            seed,
            configurations,
            inject_sign_bug,
        } => gradcheck(&GradcheckOptions {
            seed,
            configurations,
            inject_sign_bug,
            ..GradcheckOptions::default()
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
