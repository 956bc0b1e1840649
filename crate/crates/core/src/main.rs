use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use embedtube::config::{Bandwidth, BoundSource, ExperimentConfig};
use embedtube::experiment;
use embedtube::{Error, Result};

/// Learned embedded Perron-Frobenius operators and MMD ambiguity tubes.
#[derive(Parser)]
#[command(name = "embedtube", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a paired dataset.
    Simulate(Common),
    /// Bootstrap the operator deviation quantile.
    Bootstrap(Common),
    /// Bootstrap quantile over a sweep of training sizes and its log-log slope.
    Rate {
        #[command(flatten)]
        common: Common,
        /// Refit an existing `m,delta` table instead of running the sweep.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Compare bootstrap quantiles with a large-sample oracle deviation.
    OracleCompare(Common),
    /// Propagate an ambiguity tube.
    Tube(Common),
    /// Tube, rate and oracle comparison for the OU model.
    ReproduceOu(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    bound: Option<BoundSource>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    m_b: Option<usize>,
    /// Fixed length-scale or `median`.
    #[arg(long)]
    bandwidth: Option<Bandwidth>,
    /// Use this dataset CSV instead of simulating.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Force the model-error term of the tube to zero.
    #[arg(long)]
    zero_model_error: bool,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.bound {
            cfg.bound = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.m_b {
            cfg.m_b = v;
        }
        if let Some(v) = self.bandwidth {
            cfg.bandwidth = v;
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        cfg.zero_model_error |= self.zero_model_error;
        cfg.svg |= self.svg;
        Ok(cfg)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("TOOL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument {
            name: "TOOL_THREADS",
            reason: format!("expected a positive integer, got {raw:?}"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument { name: "TOOL_THREADS", reason: e.to_string() })
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(c) => {
            let path = experiment::cmd_simulate(&c.load()?)?;
            print_json(&serde_json::json!({ "dataset": path }))
        }
        Command::Bootstrap(c) => print_json(&experiment::cmd_bootstrap(&c.load()?)?),
        Command::Rate { common, table } => {
            let cfg = common.load()?;
            let (rows, fit) = match table {
                Some(path) => experiment::cmd_rate_from_table(&cfg, &path)?,
                None => experiment::cmd_rate(&cfg)?,
            };
            print_json(&serde_json::json!({ "rows": rows, "fit": fit }))
        }
        Command::OracleCompare(c) => {
            let rows = experiment::cmd_oracle_compare(&c.load()?)?;
            let rows: Vec<_> = rows
                .iter()
                .map(|&(m, delta, oracle)| serde_json::json!({ "m": m, "delta": delta, "oracle_mmd": oracle }))
                .collect();
            print_json(&rows)
        }
        Command::Tube(c) => print_json(&experiment::cmd_tube(&c.load()?)?.1),
        Command::ReproduceOu(c) => {
            let r = experiment::cmd_reproduce_ou(&c.load()?)?;
            print_json(&serde_json::json!({ "tube": r.tube, "rate": r.rate, "oracle": r.oracle }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
