use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landmarks::harness::{self, ExperimentConfig, ScoreTable, WORKERS_ENV};
use landmarks::{Error, Result};

#[derive(Parser)]
#[command(name = "landmarks", version, about = "Nyström landmark selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run samplers over γ, k and seeds and write error curves.
    Sweep {
        #[command(flatten)]
        opts: ConfigArgs,
        /// Worker threads (defaults to the number of cores).
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Dump per-point scores or per-iteration greedy residuals as CSV.
    Scores {
        #[command(flatten)]
        opts: ConfigArgs,
        /// `index` or `das`.
        #[arg(long, default_value = "index")]
        table: String,
    },
    /// Check the sampling guarantees and identities and write a JSON report.
    Check {
        #[command(flatten)]
        opts: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Key/value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path or `synthetic:<blobs|ring|moons>:<n>`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    data_seed: Option<String>,
    /// Column to drop from the CSV, by 0-based index or header name.
    #[arg(long)]
    drop_column: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    /// Comma-separated regularization values.
    #[arg(long, allow_hyphen_values = true)]
    gammas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Comma-separated: das, ras, uniform, rls, approx-ras.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated landmark counts or `from-ras`.
    #[arg(long, allow_hyphen_values = true)]
    k: Option<String>,
    /// `a..b` or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated: opnorm, maxnorm, frob-subsets.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    subset_size: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    num_subsets: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    n_features: Option<String>,
    #[arg(long, short)]
    output: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    max_exact_n: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut map = match &self.config {
            Some(path) => harness::parse_config_text(&std::fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("data_seed", &self.data_seed),
            ("drop_column", &self.drop_column),
            ("kernel", &self.kernel),
            ("sigma", &self.sigma),
            ("gammas", &self.gammas),
            ("epsilon", &self.epsilon),
            ("c", &self.c),
            ("t", &self.t),
            ("delta", &self.delta),
            ("mu", &self.mu),
            ("methods", &self.methods),
            ("k", &self.k),
            ("seeds", &self.seeds),
            ("metrics", &self.metrics),
            ("subset_size", &self.subset_size),
            ("num_subsets", &self.num_subsets),
            ("n_features", &self.n_features),
            ("output", &self.output),
            ("max_exact_n", &self.max_exact_n),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        ExperimentConfig::from_map(&map)
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { opts, workers } => {
            let config = opts.resolve()?;
            let dir = config.output.clone().unwrap_or_else(|| PathBuf::from("sweep-out"));
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(w) = workers {
                if w == 0 {
                    return Err(Error::Config {
                        field: "workers".into(),
                        message: "must be >= 1".into(),
                    });
                }
                builder = builder.num_threads(w);
            }
            let pool = builder
                .build()
                .map_err(|e| Error::Capacity(format!("thread pool: {e}")))?;
            let result = pool.install(|| harness::run_sweep(&config))?;
            harness::write_sweep(&result, &dir)?;
            log::info!("wrote {} rows to {}", result.rows.len(), dir.display());
        }
        Command::Scores { opts, table } => {
            let config = opts.resolve()?;
            let table: ScoreTable = table.parse()?;
            let csv = harness::dump_scores(&config, table)?;
            emit(&csv, config.output.as_deref())?;
        }
        Command::Check { opts } => {
            let config = opts.resolve()?;
            let report = harness::check_bounds(&config)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Parse(format!("report serialization: {e}")))?;
            emit(&(json + "\n"), config.output.as_deref())?;
            if !report.all_passed {
                log::warn!("some checks failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
