use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use vmflow::audit::{audit_loss, LossKind};
use vmflow::data::io::{load_flow, load_image};
use vmflow::data::Semantics;
use vmflow::gradcheck::TOLERANCE;
use vmflow::pipeline::{
    generate_synthetic, load_scene, metric_acc, metric_epe, run_pipeline, save_outputs, save_scene, Ablation,
    PipelineConfig, PipelineInputs, Report, ACC_THRESHOLD_2D,
};

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_GRADCHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vmflow",
    version,
    about = "RGB, event and LiDAR fusion for optical and scene flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set motion.tau=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        Ok(base.with_overrides(&overrides)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Arm {
    Full,
    MotionOnly,
    NoFusion,
}

impl From<Arm> for Ablation {
    fn from(a: Arm) -> Self {
        match a {
            Arm::Full => Ablation::Full,
            Arm::MotionOnly => Ablation::MotionOnly,
            Arm::NoFusion => Ablation::NoFusion,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Scene directory written by `generate`; without it a scene is
    /// synthesized from the configuration.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Preset stage toggles; overrides the `enabled` keys of the config.
    #[arg(long, value_enum)]
    ablation: Option<Arm>,
}

impl RunArgs {
    fn execute(&self) -> anyhow::Result<(PipelineConfig, vmflow::pipeline::PipelineOutput)> {
        let mut cfg = self.config.load()?;
        if let Some(arm) = self.ablation {
            cfg = cfg.ablated(arm.into());
        }
        let inputs = match &self.scene {
            Some(dir) => load_scene(dir).with_context(|| format!("loading scene {}", dir.display()))?,
            None => PipelineInputs::from(&generate_synthetic(&cfg.scene, cfg.seed, cfg.threshold)?),
        };
        info!(
            "running pipeline on {}x{} frames",
            inputs.camera.width, inputs.camera.height
        );
        let out = run_pipeline(&inputs, &cfg)?;
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene with ground truth into a directory.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline and print the report.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Directory for the report, flow files and stage products.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of `key: value` lines.
        #[arg(long)]
        json: bool,
        /// Add per-stage wall-clock times to the report.
        #[arg(long)]
        timing: bool,
        /// Also dump the forward correlation profiles (needs `--out`).
        #[arg(long)]
        dump_correlation: bool,
    },
    /// Run the pipeline and print one loss term.
    Loss {
        #[command(flatten)]
        run: RunArgs,
        /// total, photometric, adversarial, consistency, pseudo_label or alignment.
        #[arg(long, default_value = "total")]
        name: String,
    },
    /// Finite-difference audit of the analytic loss gradients.
    Gradcheck {
        /// Loss to audit; repeat for several. Defaults to all of them.
        #[arg(long = "loss")]
        losses: Vec<String>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
    },
    /// End-point error and accuracy of a flow file against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// PGM whose nonzero pixels restrict the evaluation.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = ACC_THRESHOLD_2D)]
        threshold: f64,
    },
}

fn check_report(report: &Report) -> anyhow::Result<()> {
    report.check_finite()?;
    Ok(())
}

fn metrics(pred: &Path, gt: &Path, mask: Option<&Path>, threshold: f64) -> anyhow::Result<()> {
    let p = load_flow(pred).with_context(|| format!("reading {}", pred.display()))?;
    let g = load_flow(gt).with_context(|| format!("reading {}", gt.display()))?;
    if (p.width, p.height) != (g.width, g.height) {
        bail!(vmflow::Error::Shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            p.width, p.height, g.width, g.height
        )));
    }
    let mut m: Vec<u8> = p.valid.iter().zip(&g.valid).map(|(a, b)| a & b).collect();
    if let Some(path) = mask {
        let img = load_image(path, Semantics::Luma).with_context(|| format!("reading {}", path.display()))?;
        if (img.width, img.height, img.channels) != (p.width, p.height, 1) {
            bail!(vmflow::Error::Shape("mask does not match the flow".into()));
        }
        for (v, x) in m.iter_mut().zip(&img.data) {
            *v &= u8::from(*x > 0.0);
        }
    }
    let epe = metric_epe(&p.data, &g.data, 2, &m)?;
    let acc = metric_acc(&p.data, &g.data, 2, &m, threshold)?;
    if !epe.is_finite() || !acc.is_finite() {
        bail!(vmflow::Error::NonFinite(format!("epe {epe}, acc {acc}")));
    }
    println!("epe: {epe}");
    println!("acc: {acc}");
    println!("pixels: {}", m.iter().filter(|&&v| v == 1).count());
    Ok(())
}

fn gradcheck(losses: &[String], seeds: u64, first: u64) -> anyhow::Result<bool> {
    let kinds: Vec<LossKind> = if losses.is_empty() {
        LossKind::ALL.to_vec()
    } else {
        losses.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let mut ok = true;
    for kind in kinds {
        let r = audit_loss(kind, first..first + seeds)?;
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {kind}: seeds={} checked={} skipped={} max_rel_err={:.3e} tol={TOLERANCE:e} failed_seeds={:?}",
            r.seeds, r.check.checked, r.check.skipped, r.check.max_rel_err, r.failed_seeds
        );
        ok &= r.passed();
    }
    Ok(ok)
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = config.load()?;
            let scene = generate_synthetic(&cfg.scene, cfg.seed, cfg.threshold)?;
            save_scene(&out, &scene).with_context(|| format!("writing {}", out.display()))?;
            println!("events: {}", scene.events.len());
            println!("lidar_points: {}", scene.cloud_t.len());
            println!("out: {}", out.display());
        }
        Command::Run {
            run,
            out,
            json,
            timing,
            dump_correlation,
        } => {
            if dump_correlation && out.is_none() {
                bail!(vmflow::Error::Config("--dump-correlation needs --out".into()));
            }
            let (_, result) = run.execute()?;
            let mut report = result.report.clone();
            if timing {
                report.timing = Some(result.timing.clone());
            }
            check_report(&report)?;
            if let Some(dir) = &out {
                save_outputs(dir, &result, &report, dump_correlation)
                    .with_context(|| format!("writing {}", dir.display()))?;
            }
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Loss { run, name } => {
            let (_, result) = run.execute()?;
            let l = &result.report.losses;
            let value = match name.as_str() {
                "total" => Some(l.total),
                "photometric" => Some(l.photometric),
                "consistency" => Some(l.consistency),
                "pseudo_label" => Some(l.pseudo_label),
                "alignment" => Some(l.alignment),
                "adversarial" => l.adversarial,
                other => bail!(vmflow::Error::Config(format!("unknown loss '{other}'"))),
            };
            let Some(v) = value else {
                bail!(vmflow::Error::Config(
                    "the adversarial term needs discriminator scores in the scene manifest".into()
                ));
            };
            if !v.is_finite() {
                bail!(vmflow::Error::NonFinite(format!("{name} = {v}")));
            }
            println!("{name}: {v}");
        }
        Command::Gradcheck {
            losses,
            seeds,
            first_seed,
        } => {
            if !gradcheck(&losses, seeds, first_seed)? {
                return Ok(EXIT_GRADCHECK);
            }
        }
        Command::Metrics {
            pred,
            gt,
            mask,
            threshold,
        } => {
            if !(threshold > 0.0 && threshold.is_finite()) {
                bail!(vmflow::Error::Config(format!("threshold must be > 0, got {threshold}")));
            }
            metrics(&pred, &gt, mask.as_deref(), threshold)?;
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<vmflow::Error>())
        .any(vmflow::Error::is_numerical);
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
