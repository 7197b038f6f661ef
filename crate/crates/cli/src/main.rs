//! `vipguard`: train, evaluate and render bodyguard escort policies.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or runtime
//! failures, 2 for usage errors.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vipguard_core::harness::{
    evaluate, evaluation_episode, load_checkpoint, read_trajectory, render_trajectory, save_checkpoint, write_trajectory,
    Baseline, EvalReport, PolicyController, RenderStyle, RunConfig,
};
use vipguard_core::marl::{train_with, LearnerBundle};

#[derive(Parser)]
#[command(name = "vipguard", version, about = "Multi-agent bodyguard escort training harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train bodyguard policies; writes train_log.jsonl and checkpoint.bin.
    Train {
        config: PathBuf,
        /// Overrides `run.output_dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides `train.episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint and/or baselines without exploration noise.
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Baseline controller(s) to evaluate alongside the checkpoint.
        #[arg(long, value_parser = ["random", "stationary", "scripted-ring"])]
        baseline: Vec<String>,
        /// Where to write the JSON report (default: <output_dir>/eval_report.json).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the first evaluation episode of the first controller.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Overrides `run.eval_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        /// Overrides `run.eval_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a trajectory file to one SVG frame per selected step.
    Render {
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Canvas edge length in pixels.
        #[arg(long, default_value_t = 600)]
        canvas: u32,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Check a configuration file and report the first invalid field.
    Validate { path: PathBuf },
    /// Print the fully resolved configuration (defaults filled in).
    Show { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out_dir,
            episodes,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(dir) = out_dir {
                cfg.run.output_dir = dir;
            }
            if let Some(n) = episodes {
                cfg.train.episodes = n;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cmd_train(&cfg)
        }
        Command::Eval {
            config,
            checkpoint,
            baseline,
            report,
            trajectory,
            episodes,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(n) = episodes {
                cfg.run.eval_episodes = n;
            }
            if let Some(s) = seed {
                cfg.run.eval_seed = s;
            }
            cfg.validate()?;
            let baselines = baseline
                .iter()
                .map(|b| b.parse::<Baseline>())
                .collect::<Result<Vec<_>, _>>()?;
            if checkpoint.is_none() && baselines.is_empty() {
                bail!("nothing to evaluate: pass --checkpoint and/or --baseline");
            }
            let report = report.unwrap_or_else(|| cfg.run.output_dir.join("eval_report.json"));
            cmd_eval(&cfg, checkpoint.as_deref(), &baselines, &report, trajectory.as_deref())
        }
        Command::Render {
            trajectory,
            out,
            stride,
            canvas,
        } => cmd_render(&trajectory, &out, stride, canvas),
        Command::Config { action } => match action {
            ConfigAction::Validate { path } => {
                load_config(&path)?;
                println!("{}: ok", path.display());
                Ok(())
            }
            ConfigAction::Show { path } => {
                print!("{}", load_config(&path)?.to_toml_string());
                Ok(())
            }
        },
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("invalid config {}", path.display()))
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let dir = &cfg.run.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string())?;

    let log_path = dir.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let every = (cfg.train.episodes / 20).max(1);
    let bundle = train_with(&cfg.scenario, &cfg.train, |rec, _| {
        let line = serde_json::to_string(rec).expect("log record serializes");
        writeln!(log, "{line}").map_err(|e| vipguard_core::Error::Io {
            path: log_path.clone(),
            source: e,
        })?;
        if (rec.episode + 1) % every == 0 {
            eprintln!(
                "episode {:>6}  return {:>9.3}  threat {:>7.3}  noise {:.3}",
                rec.episode + 1,
                rec.mean_return,
                rec.cumulative_threat,
                rec.noise_scale
            );
        }
        Ok(())
    })?;
    log.flush()?;
    let ckpt = dir.join("checkpoint.bin");
    save_checkpoint(&bundle, &cfg.scenario.digest(), &ckpt)?;
    println!("wrote {} and {}", log_path.display(), ckpt.display());
    Ok(())
}

fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    baselines: &[Baseline],
    report_path: &Path,
    trajectory: Option<&Path>,
) -> Result<()> {
    let scn = &cfg.scenario;
    let (episodes, seed) = (cfg.run.eval_episodes, cfg.run.eval_seed);
    let bundle: Option<LearnerBundle> = checkpoint
        .map(|p| load_checkpoint(p, &scn.digest()).with_context(|| format!("loading {}", p.display())))
        .transpose()?;

    let mut reports: Vec<EvalReport> = Vec::new();
    if let Some(b) = &bundle {
        reports.push(evaluate(scn, "policy", |_| Box::new(PolicyController::new(b)), episodes, seed)?);
    }
    for &base in baselines {
        reports.push(evaluate(scn, base.label(), |s| base.controller(s), episodes, seed)?);
    }
    for r in &reports {
        println!(
            "{:<14} threat mean {:>8.4} median {:>8.4}  reward mean {:>9.3}  in-band {:>6.2}%",
            r.controller,
            r.threat_summary.mean,
            r.threat_summary.median,
            r.reward_summary.mean,
            100.0 * r.pooled_band_fraction()
        );
    }

    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(report_path, serde_json::to_string_pretty(&reports)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;

    if let Some(path) = trajectory {
        let trace = match &bundle {
            Some(b) => evaluation_episode(scn, &mut |_| Box::new(PolicyController::new(b)), seed, 0)?,
            None => evaluation_episode(scn, &mut |s| baselines[0].controller(s), seed, 0)?,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        write_trajectory(&trace, path)?;
    }
    println!("wrote {}", report_path.display());
    Ok(())
}

fn cmd_render(trajectory: &Path, out: &Path, stride: usize, canvas: u32) -> Result<()> {
    if stride == 0 {
        bail!("--stride must be >= 1");
    }
    if canvas == 0 {
        bail!("--canvas must be >= 1");
    }
    let trace = read_trajectory(trajectory).with_context(|| format!("reading {}", trajectory.display()))?;
    let style = RenderStyle {
        canvas_size: canvas,
        world_half_extent: trace.world_half_extent,
        ..RenderStyle::default()
    };
    let files = render_trajectory(&trace, &style, stride, out)?;
    println!("wrote {} frames to {}", files.len(), out.display());
    Ok(())
}
