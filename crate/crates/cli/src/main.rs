mod bounds;
mod fewshot;
mod metrics;
mod report;
mod synth;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ncbound_core::data_io::RunConfig;
use ncbound_core::Error;

use report::{Output, Report};

/// Neural-collapse metrics, few-shot NCC evaluation and transfer-error bounds.
#[derive(Parser, Debug)]
#[command(name = "ncbound", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Values given here override `--config`.
#[derive(Args, Debug, Clone)]
pub struct Global {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report per-item failures as status fields and exit 0.
    #[arg(long, global = true)]
    keep_going: bool,
    /// Sweep one parameter: `param=lo:hi:steps`.
    #[arg(long, global = true)]
    sweep: Option<String>,

    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Confidence parameter of the bounds.
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    phi: Option<f64>,
    /// Ridge regularisation scale: λ = α√(kn).
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Soft margin Δ.
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    n_test: Option<usize>,
    /// Input-norm bound B.
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Network depth, when no weights file is given.
    #[arg(long, global = true)]
    q: Option<usize>,
    /// Network complexity C(f), when no weights file is given.
    #[arg(long, global = true)]
    cf: Option<f64>,
    /// `1` or `p`.
    #[arg(long, global = true)]
    symmetry: Option<String>,
    /// Use Δ = Λ/√n in the spherical-symmetry bound instead of 4Δ = Λ/√n.
    #[arg(long, global = true)]
    theorem3_literal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collapse metrics of one or more embedding snapshots.
    Metrics(metrics::MetricsArgs),
    /// Episodic k-way n-shot transfer error.
    Fewshot(fewshot::FewshotArgs),
    /// Transfer-error bounds with per-term breakdowns.
    Bounds(bounds::BoundsArgs),
    /// Synthetic Gaussian worlds and analytic oracles.
    #[command(subcommand)]
    Synth(synth::SynthCommand),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Metrics(_) => "metrics",
            Command::Fewshot(_) => "fewshot",
            Command::Bounds(_) => "bounds",
            Command::Synth(s) => s.name(),
        }
    }
}

impl Global {
    fn run_config(&self) -> ncbound_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v.into(); }
            )*};
        }
        set!(seed, episodes, trials, delta, phi, alpha, k, n, n_test);
        if self.margin.is_some() {
            cfg.margin = self.margin;
        }
        if self.b.is_some() {
            cfg.b = self.b;
        }
        if self.q.is_some() {
            cfg.q = self.q;
        }
        if self.cf.is_some() {
            cfg.cf = self.cf;
        }
        if let Some(s) = &self.symmetry {
            cfg.symmetry = s.parse()?;
        }
        if self.theorem3_literal {
            cfg.theorem3_literal = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parsed `--sweep param=lo:hi:steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
}

pub fn parse_sweep(text: &str) -> ncbound_core::Result<Sweep> {
    let bad = || {
        Error::InvalidArgument(format!(
            "sweep must look like param=lo:hi:steps, got {text:?}"
        ))
    };
    let (param, range) = text.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if steps == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    Ok(Sweep {
        param: param.trim().to_string(),
        values: ncbound_core::bounds::linspace(lo, hi, steps),
    })
}

fn run(cli: &Cli) -> Result<Output> {
    let cfg = cli.global.run_config()?;
    let sweep = cli.global.sweep.as_deref().map(parse_sweep).transpose()?;
    let out = match &cli.command {
        Command::Metrics(a) => metrics::run(a, &cfg)?,
        Command::Fewshot(a) => fewshot::run(a, &cfg, sweep.as_ref())?,
        Command::Bounds(a) => bounds::run(a, &cfg, sweep.as_ref())?,
        Command::Synth(s) => synth::run(s, &cfg)?,
    };
    Ok(out)
}

fn emit(cli: &Cli, report: &Report, tables: &[report::Table]) -> Result<()> {
    let text = match cli.global.format {
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
        Format::Csv => tables
            .iter()
            .map(|t| t.to_csv())
            .collect::<Vec<_>>()
            .join("\n"),
    };
    match &cli.global.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let out = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let seed = cli.global.run_config().map(|c| c.seed).unwrap_or_default();
    let report = Report {
        command: cli.command.name().into(),
        inputs: out.inputs,
        seed,
        outputs: out.outputs,
        status: if out.errors.is_empty() {
            "ok"
        } else {
            "failed"
        }
        .into(),
        errors: out.errors,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = emit(&cli, &report, &out.tables) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    for f in &report.errors {
        eprintln!("{}: {}", f.scope, f.message);
    }
    if report.errors.is_empty() || cli.global.keep_going {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
