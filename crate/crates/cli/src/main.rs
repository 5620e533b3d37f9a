mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand};
use phaselat_core::parallel;

use commands::{run_task, Check, Session};
use config::{ConfigError, ExperimentConfig, Overrides};
use output::{fmt_f64, Manifest, TaskDir, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(name = "phaselat", version, about = "Phase-lattice analysis of periodic reaction-diffusion patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; the Brusselator defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for σ-sweeps and per-cell work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Number of cells on the large domain.
    #[arg(long = "J", global = true)]
    j: Option<usize>,
    /// Bloch truncation order.
    #[arg(long = "M", global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final integration time.
    #[arg(long = "T", global = true)]
    t_end: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Turing onset and the periodic pattern at the target parameter.
    FindPattern,
    /// Leading Bloch eigenvalues on the σ-grid.
    BlochSpectrum,
    /// Spectral stability hypotheses.
    CheckStability,
    /// Diffusion coefficient from the branch fit and from the corrector formula.
    FitD,
    /// Round trips through the phase-lattice coordinates.
    NfRoundtrip,
    /// Block norms of the Fourier-Bloch propagator and their decay rates.
    SemigroupEnvelopes,
    /// Evolve a localized perturbation on the large domain.
    Simulate,
    /// Decay exponents, lattice diffusion and phase conservation of a simulation.
    DecayReport,
    /// All tasks listed in the configuration, with cached pattern and branch.
    FullPipeline,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::FindPattern => "find-pattern",
            Command::BlochSpectrum => "bloch-spectrum",
            Command::CheckStability => "check-stability",
            Command::FitD => "fit-d",
            Command::NfRoundtrip => "nf-roundtrip",
            Command::SemigroupEnvelopes => "semigroup-envelopes",
            Command::Simulate => "simulate",
            Command::DecayReport => "decay-report",
            Command::FullPipeline => "full-pipeline",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides { out: cli.out.clone(), seed: cli.seed, j: cli.j, m: cli.m, dt: cli.dt, t_end: cli.t_end });
    cfg.validate()?;
    Ok(cfg)
}

fn summary_lines(task: &str, checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{tag} {task}: {} = {} (limit {})\n", c.name, fmt_f64(c.value), fmt_f64(c.limit)));
    }
    s
}

fn finish(dir: &mut TaskDir, task: &str, sess: &Session, hash: &str, start: Instant, passed: bool, summary: &str) -> Result<()> {
    dir.text("summary.txt", summary)?;
    let outputs = dir.files.clone();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "phaselat",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: task,
        config_hash: hash,
        seed: sess.cfg.numerics.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        assertions_passed: passed,
        outputs: &outputs,
    };
    dir.json("manifest.json", &manifest)
}

/// Runs one task into `<out>/<task>/`; returns whether all checks passed.
fn run_one(sess: &mut Session, task: &str, hash: &str) -> Result<(bool, String)> {
    let start = Instant::now();
    let mut dir = TaskDir::create(&sess.cfg.output_dir.clone(), task)?;
    let checks = run_task(sess, task, &mut dir)?;
    let passed = checks.iter().all(|c| c.passed);
    let summary = summary_lines(task, &checks);
    finish(&mut dir, task, sess, hash, start, passed, &summary)?;
    Ok((passed, summary))
}

fn execute(cmd: Command, cfg: ExperimentConfig) -> Result<bool> {
    let hash = cfg.hash();
    if let Command::FullPipeline = cmd {
        let start = Instant::now();
        let tasks = cfg.tasks.clone();
        let mut sess = Session::new(cfg, true);
        let mut all = true;
        let mut summary = String::new();
        for t in &tasks {
            let (ok, s) = run_one(&mut sess, t, &hash)?;
            print!("{s}");
            summary.push_str(&s);
            all &= ok;
        }
        let mut dir = TaskDir::create(&sess.cfg.output_dir.clone(), "full-pipeline")?;
        finish(&mut dir, "full-pipeline", &sess, &hash, start, all, &summary)?;
        return Ok(all);
    }
    let mut sess = Session::new(cfg, false);
    let (ok, s) = run_one(&mut sess, cmd.name(), &hash)?;
    print!("{s}");
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(j) = cli.jobs {
        parallel::set_jobs(j.max(1));
    }
    match execute(cli.command, cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
