//! Command-line driver: scene generation, solving, sweeps and evaluation.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::grid::io::{read_pfm, write_pfm, write_pgm, write_text};
use crate::grid::{DepthMap, Mask, ScalarGrid};
use crate::metrics::{evaluate, MetricReport, Unit, CSV_HEADER};
use crate::scenegen::{generate, SceneInstance, MANIFEST_FILE};
use crate::solver::{solve_observed, Solution, SolveTrace};

/// Parameters accepted by `sweep`.
pub const SWEEP_PARAMS: &[&str] = &[
    "c_i",
    "c_z",
    "a0",
    "b0",
    "w_ph",
    "w_z",
    "w_sm",
    "step_size",
    "density",
];

pub const DEPTH_FILE: &str = "depth.pfm";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Parser)]
#[command(
    name = "adadepth",
    version,
    about = "Adaptive weighting for depth completion on synthetic scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for scene generation and the solver, overriding the config.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene and write it to a directory.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Optimize depth for a scene directory.
    Solve {
        /// Directory written by `generate`.
        scene: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write alpha and gamma snapshots every N steps.
        #[arg(long, value_name = "N")]
        snapshot_interval: Option<usize>,
        /// Units for reported metrics.
        #[arg(long, value_name = "m|mm")]
        unit: Option<Unit>,
    },
    /// Generate and solve once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of: c_i, c_z, a0, b0, w_ph, w_z, w_sm, step_size, density.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_name = "N")]
        snapshot_interval: Option<usize>,
        #[arg(long, value_name = "m|mm")]
        unit: Option<Unit>,
    },
    /// Compare two depth maps stored as PFM files.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, value_name = "m|mm", default_value = "m")]
        unit: Unit,
        /// Also write the report to this file.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.output_dir.clone().ok_or_else(|| {
        Error::InvalidArgument("no output directory: pass --out or set output_dir".into())
    })
}

/// Parses `args` (including the program name) and runs the command.
/// Progress messages go to `log`.
pub fn run<I, T>(args: I, log: &mut dyn std::io::Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    execute(cli.command, log)
}

pub fn execute(command: Command, log: &mut dyn std::io::Write) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let cfg = load_config(&common)?;
            let dir = output_dir(&cfg)?;
            let scene = generate(&cfg.scene)?;
            scene.save(&dir)?;
            say(log, &dir.join(MANIFEST_FILE).display().to_string());
            Ok(())
        }
        Command::Solve {
            scene,
            common,
            snapshot_interval,
            unit,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = snapshot_interval {
                cfg.snapshot_interval = n;
            }
            if let Some(u) = unit {
                cfg.unit = u;
            }
            let dir = output_dir(&cfg)?;
            let instance = SceneInstance::load(&scene)?;
            let report = solve_scene(&instance, &cfg, &dir)?;
            say(log, &format!("{}", dir.join(METRICS_FILE).display()));
            say(log, report.to_csv(cfg.unit).trim_end());
            Ok(())
        }
        Command::Sweep {
            common,
            param,
            values,
            snapshot_interval,
            unit,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = snapshot_interval {
                cfg.snapshot_interval = n;
            }
            if let Some(u) = unit {
                cfg.unit = u;
            }
            let dir = output_dir(&cfg)?;
            sweep(&cfg, &param, &values, &dir, log)
        }
        Command::Eval {
            pred,
            gt,
            unit,
            out,
        } => {
            let report = eval_files(&pred, &gt)?;
            let csv = report.to_csv(unit);
            if let Some(out) = out {
                write_text(&out, &csv)?;
            }
            say(log, csv.trim_end());
            Ok(())
        }
    }
}

fn say(log: &mut dyn std::io::Write, line: &str) {
    // progress output is best effort
    let _ = writeln!(log, "{line}");
}

/// Solves `scene` with `cfg` and writes depth, trace, metrics, the resolved
/// config and optional snapshots into `dir`. The trace is written even when
/// the solver diverges.
pub fn solve_scene(
    scene: &SceneInstance,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<MetricReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    let problem = scene.problem()?;
    let interval = cfg.snapshot_interval;
    let snap_dir = dir.join(SNAPSHOT_DIR);
    let mut snapshot_error = None;
    let result = solve_observed(&problem, &cfg.solver, Some(&scene.true_depth), |view| {
        if interval == 0 || (view.step + 1) % interval != 0 || snapshot_error.is_some() {
            return;
        }
        if let Err(e) = write_snapshots(
            &snap_dir,
            view.step + 1,
            &view.weights.alphas,
            &view.weights.gamma,
        ) {
            snapshot_error = Some(e);
        }
    });
    if let Some(e) = snapshot_error {
        return Err(e);
    }
    let Solution { depth, trace, .. } = match result {
        Ok(s) => s,
        Err(Error::Diverged { step, loss, trace }) => {
            write_trace(dir, &trace, cfg.unit)?;
            return Err(Error::Diverged { step, loss, trace });
        }
        Err(e) => return Err(e),
    };
    write_trace(dir, &trace, cfg.unit)?;
    write_pfm(dir.join(DEPTH_FILE), depth.grid())?;
    let (w, h) = depth.dims();
    let report = evaluate(&depth, &scene.true_depth, &Mask::full(w, h))?;
    write_text(&dir.join(METRICS_FILE), &report.to_csv(cfg.unit))?;
    Ok(report)
}

fn write_trace(dir: &Path, trace: &SolveTrace, unit: Unit) -> Result<()> {
    write_text(&dir.join(TRACE_FILE), &trace.to_csv(unit))
}

fn write_snapshots(
    dir: &Path,
    step: usize,
    alphas: &[ScalarGrid],
    gamma: &ScalarGrid,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = ["prev", "next"];
    for (k, alpha) in alphas.iter().enumerate() {
        let name = names
            .get(k)
            .map(|s| s.to_string())
            .unwrap_or_else(|| k.to_string());
        write_pgm(dir.join(format!("alpha_{name}_{step:06}.pgm")), alpha)?;
    }
    write_pgm(dir.join(format!("gamma_{step:06}.pgm")), gamma)
}

fn apply_sweep_value(cfg: &mut ExperimentConfig, param: &str, value: &str) -> Result<()> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(Error::InvalidArgument(format!(
            "unsupported sweep parameter {param:?} (supported: {})",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let key = if param == "density" {
        "sparse_density"
    } else {
        param
    };
    cfg.set(key, value)?;
    cfg.validate()
}

/// One generate-and-solve per value, each in its own `run_NNN` directory,
/// with a summary of final metrics. Every value is attempted; the call
/// fails if any run failed.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
    dir: &Path,
    log: &mut dyn std::io::Write,
) -> Result<()> {
    // reject bad names and values before doing any work
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.clone();
        apply_sweep_value(&mut c, param, v.trim())?;
        configs.push(c);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut summary = format!("param,value,status,{CSV_HEADER}\n");
    let mut failures = Vec::new();
    for (i, (v, c)) in values.iter().zip(&configs).enumerate() {
        let run_dir = dir.join(format!("run_{i:03}"));
        let scene_dir = run_dir.join("scene");
        let outcome = generate(&c.scene)
            .and_then(|s| s.save(&scene_dir))
            .and_then(|_| SceneInstance::load(&scene_dir))
            .and_then(|s| solve_scene(&s, c, &run_dir));
        match outcome {
            Ok(report) => {
                summary.push_str(&format!(
                    "{param},{},ok,{},{}\n",
                    v.trim(),
                    report.csv_fields(c.unit),
                    report.evaluated_pixels
                ));
            }
            Err(e) => {
                let status = if matches!(e, Error::Diverged { .. }) {
                    "diverged"
                } else {
                    "failed"
                };
                summary.push_str(&format!("{param},{},{status},,,,,\n", v.trim()));
                say(log, &format!("run {i} ({param} = {}): {e}", v.trim()));
                failures.push(e);
            }
        }
    }
    let path = dir.join(SUMMARY_FILE);
    write_text(&path, &summary)?;
    say(log, &path.display().to_string());
    match failures.len() {
        0 => Ok(()),
        1 => Err(failures.remove(0)),
        n => Err(Error::InvalidArgument(format!(
            "{n} of {} sweep runs failed",
            values.len()
        ))),
    }
}

/// Metrics of `pred` against `gt` over the pixels where `gt` is positive.
pub fn eval_files(pred: &Path, gt: &Path) -> Result<MetricReport> {
    let p = read_pfm(pred)?;
    let g = read_pfm(gt)?;
    crate::grid::ensure_same_dims(g.dims(), p.dims())?;
    let (w, h) = g.dims();
    let mask = Mask::new(w, h, g.values().iter().map(|&z| z > 0.0).collect())?;
    let fill = |grid: &ScalarGrid| {
        ScalarGrid::new(
            w,
            h,
            grid.values()
                .iter()
                .zip(mask.bits())
                .map(|(&z, &m)| if m { z } else { 1.0 })
                .collect(),
        )
    };
    let pd = DepthMap::new(fill(&p)?).map_err(|e| Error::format(pred, e.to_string()))?;
    let gd = DepthMap::new(fill(&g)?).map_err(|e| Error::format(gt, e.to_string()))?;
    evaluate(&pd, &gd, &mask)
}
