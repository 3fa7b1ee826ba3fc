//! `hlab`: run one harmonic-lab experiment per invocation.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use harmonic_lab::experiment::{self, ExperimentConfig, Task};
use harmonic_lab::LabError;

#[derive(Parser)]
#[command(name = "hlab", version, about = "Harmonic functions on finitely generated groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ball volumes and doubling ratios.
    Growth(Flags),
    /// Courteousness report for a step measure.
    Courteous(Flags),
    /// Hitting measure on a subgroup.
    Hitting(Flags),
    /// Poincaré inequalities on seeded random functions.
    Poincare(Flags),
    /// Reverse Poincaré inequality on a harmonic basis.
    ReversePoincare(Flags),
    /// Separated cover and its cardinality bounds.
    Cover(Flags),
    /// Dimension of the harmonic space of growth degree k.
    Dim(Flags),
    /// Degree test on harmonic and monomial bases.
    Polytest(Flags),
    /// Group action on the harmonic space.
    Weights(Flags),
    /// Run the task named in a config file.
    Run(Flags),
    /// Consolidate JSON reports into one CSV table.
    Summary {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Flags {
    /// TOML config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    power: Option<u32>,
    #[arg(long)]
    k: Option<u32>,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<u32>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    rank_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subgroup: Option<String>,
    /// exact or monte-carlo.
    #[arg(long)]
    hitting_mode: Option<String>,
    #[arg(long)]
    trunc_radius: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    functions: Option<usize>,
    /// inf, courteous or both.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    word_cap: Option<u32>,
    #[arg(long)]
    radius_cap: Option<u32>,
    #[arg(long)]
    point_budget: Option<usize>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra CSV table destination.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads; rayon's default when absent.
    #[arg(long)]
    threads: Option<usize>,
}

fn build_config(task: Option<Task>, fl: &Flags) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match (&fl.config, task) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(t)) => {
            let group = fl
                .group
                .as_deref()
                .ok_or_else(|| LabError::Config("--group is required without --config".into()))?;
            ExperimentConfig::new(t, group)
        }
        (None, None) => return Err(LabError::Config("run needs --config".into())),
    };
    if let Some(t) = task {
        cfg.task = t;
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = &fl.$f { cfg.$f = v.clone(); } )* };
    }
    macro_rules! set_opt {
        ($($f:ident),*) => { $( if let Some(v) = &fl.$f { cfg.$f = Some(v.clone()); } )* };
    }
    set!(group, measure, power, k, radii, rank_tol, hitting_mode, trunc_radius, samples, functions, variant, word_cap);
    set_opt!(eps, seed, subgroup, radius_cap, point_budget, out, csv);
    Ok(cfg)
}

fn run(task: Option<Task>, fl: &Flags) -> Result<i32, LabError> {
    let cfg = build_config(task, fl)?;
    if let Some(n) = fl.threads {
        if n == 0 {
            return Err(LabError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Config(e.to_string()))?;
    }
    let outcome = experiment::run_experiment(&cfg)?;
    let body = match fl.format {
        Format::Json => outcome.report.to_json()?,
        Format::Csv => outcome.table.to_csv(),
    };
    match &cfg.out {
        Some(p) => std::fs::write(p, &body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    if let Some(p) = &cfg.csv {
        std::fs::write(p, outcome.table.to_csv())?;
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Growth(f) => run(Some(Task::Growth), f),
        Command::Courteous(f) => run(Some(Task::Courteous), f),
        Command::Hitting(f) => run(Some(Task::Hitting), f),
        Command::Poincare(f) => run(Some(Task::Poincare), f),
        Command::ReversePoincare(f) => run(Some(Task::ReversePoincare), f),
        Command::Cover(f) => run(Some(Task::Cover), f),
        Command::Dim(f) => run(Some(Task::Dim), f),
        Command::Polytest(f) => run(Some(Task::Polytest), f),
        Command::Weights(f) => run(Some(Task::Weights), f),
        Command::Run(f) => run(None, f),
        Command::Summary { reports, out } => experiment::emit_summary(reports).and_then(|table| {
            match out {
                Some(p) => std::fs::write(p, table)?,
                None => print!("{table}"),
            }
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} exit={}: {msg}", e.kind(), e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
