use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use partcon::checker::{check_nw, check_pc, check_pob, format_verdict};
use partcon::litmus::{self, CheckLevel, RunOptions};
use partcon::partition::{model_partition, ModelName};
use partcon::pob::Backend;
use partcon::text::parse_computation;
use partcon::transform::{Stack, TransformVariant};

#[derive(Parser)]
#[command(name = "partcon", version, about = "Litmus runs and consistency checks for partition consistency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Sc,
    Pram,
    Pcg,
    Weaksc,
    Weakpcg,
}

impl From<Model> for ModelName {
    fn from(m: Model) -> Self {
        match m {
            Model::Sc => ModelName::Sc,
            Model::Pram => ModelName::Pram,
            Model::Pcg => ModelName::PcG,
            Model::Weaksc => ModelName::WeakSc,
            Model::Weakpcg => ModelName::WeakPcG,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Transform {
    Swfr,
    Fwsr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pob {
    Token,
    Timestamp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Pc,
    Pob,
    Nw,
}

impl From<Level> for CheckLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::Pc => CheckLevel::Pc,
            Level::Pob => CheckLevel::Pob,
            Level::Nw => CheckLevel::Nw,
        }
    }
}

#[derive(clap::Args)]
struct StackArgs {
    /// Transform variant; both when omitted.
    #[arg(long)]
    transform: Option<Transform>,
    /// Broadcast backend; both when omitted.
    #[arg(long)]
    pob: Option<Pob>,
}

impl StackArgs {
    fn stacks(&self) -> Vec<Stack> {
        Stack::ALL
            .into_iter()
            .filter(|s| match self.transform {
                None => true,
                Some(Transform::Swfr) => s.transform == TransformVariant::Swfr,
                Some(Transform::Fwsr) => s.transform == TransformVariant::Fwsr,
            })
            .filter(|s| match self.pob {
                None => true,
                Some(Pob::Token) => s.backend == Backend::Token,
                Some(Pob::Timestamp) => s.backend == Backend::Timestamp,
            })
            .collect()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a litmus case over a seed range on one or more stacks.
    Run {
        #[arg(long)]
        case: PathBuf,
        /// Overrides the case's model.
        #[arg(long)]
        model: Option<Model>,
        #[command(flatten)]
        stack: StackArgs,
        /// `A..B`, `A..=B`, or a single seed.
        #[arg(long, default_value = "0..100")]
        seeds: String,
        /// Check each quiescent run at this level (repeatable).
        #[arg(long)]
        check: Vec<Level>,
        /// Persist every trace here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Also write the structured report here.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Decide a predicate on a computation file.
    Check {
        #[arg(long)]
        computation: PathBuf,
        #[arg(long, default_value = "sc")]
        model: Model,
        #[arg(long, default_value = "pc")]
        predicate: Level,
    },
    /// Find the least seed whose run exhibits an outcome.
    Search {
        #[arg(long)]
        case: PathBuf,
        /// Read conditions `p:k=v`, space separated.
        #[arg(long)]
        outcome: String,
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
        #[arg(long)]
        model: Option<Model>,
        #[command(flatten)]
        stack: StackArgs,
    },
}

fn load_case(path: &PathBuf, model: Option<Model>) -> Result<litmus::LitmusCase> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut case = litmus::parse_litmus(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(m) = model {
        case.model = m.into();
    }
    Ok(case)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            case,
            model,
            stack,
            seeds,
            check,
            trace_dir,
            json,
            max_steps,
        } => {
            let case = load_case(&case, model)?;
            let seeds = litmus::parse_seed_range(&seeds)?;
            let mut opts = RunOptions {
                checks: check.into_iter().map(CheckLevel::from).collect(),
                trace_dir,
                ..RunOptions::default()
            };
            if let Some(n) = max_steps {
                opts.max_steps = n;
            }
            let reports: Vec<_> = stack
                .stacks()
                .into_iter()
                .map(|s| litmus::run_case(&case, s, &seeds, &opts))
                .collect();
            print!("{}", litmus::report(&reports));
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&litmus::report_json(&reports))?;
                fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(reports.iter().all(|r| r.passed()))
        }
        Command::Check {
            computation,
            model,
            predicate,
        } => {
            let text = fs::read_to_string(&computation)
                .with_context(|| format!("reading {}", computation.display()))?;
            let c = parse_computation(&text)?;
            let k = model_partition(&model.into(), &c.variables(), c.write_sites());
            let v = match predicate {
                Level::Pc => check_pc(&c, &k)?,
                Level::Pob => check_pob(&c, &k.labels())?,
                Level::Nw => check_nw(&c)?,
            };
            print!("{}", format_verdict(&c, &v));
            Ok(true)
        }
        Command::Search {
            case,
            outcome,
            budget,
            model,
            stack,
        } => {
            let case = load_case(&case, model)?;
            let expr = case.parse_outcome(&outcome)?;
            if expr.0.is_empty() {
                bail!("empty outcome expression");
            }
            let opts = RunOptions::default();
            for s in stack.stacks() {
                match litmus::seed_search(&case, s, &expr, budget, &opts) {
                    Some(seed) => println!("{s} seed {seed}"),
                    None => println!("{s} absent within {budget}"),
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
