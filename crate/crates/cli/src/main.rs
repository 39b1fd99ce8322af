use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arbeval::gateway::{DiskCache, Gateway, GatewayError, HttpTransport, ModelConfig};
use arbeval::protocol::Task;
use arbeval::retrieval::{Method, SelectionSpec};
use arbeval::runner::{self, RunError, Session};
use arbeval::treebank::Split;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arbeval", version, about = "Prompted tagging and parsing evaluation over Arabic treebanks")]
struct Cli {
    /// Project configuration file.
    #[arg(long, global = true, default_value = "arbeval.toml")]
    config: PathBuf,
    /// Response cache directory.
    #[arg(long, global = true, default_value = ".arbeval-cache")]
    cache_dir: PathBuf,
    /// Disable the response cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Selection seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent requests.
    #[arg(long, global = true, default_value_t = 4)]
    parallelism: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the configured treebank files.
    Ingest {
        #[arg(long)]
        json: bool,
    },
    /// Build the retrieval pool; optionally rank it for a query.
    Index {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value = "chrf_high")]
        method: Method,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Evaluate the shot-count by selection-method grid on dev.
    Sweep {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated shot counts.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Comma-separated selection methods.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Prompt the model over a split, or import another system's output.
    Run {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value = "dev")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        method: Option<Method>,
        /// Treebank file holding a baseline system's predictions.
        #[arg(long, conflicts_with_all = ["k", "method"])]
        predictions: Option<PathBuf>,
    },
    /// Score a run directory against its gold split.
    Score {
        run: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Genre breakdown, hybrid selection and tokenization errors.
    Analyze {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write tokenization errors as a review TSV.
        #[arg(long)]
        review: Option<PathBuf>,
    },
    /// Render saved JSON reports as text.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn gateway(cli: &Cli, model: &ModelConfig) -> Result<Gateway<HttpTransport>, RunError> {
    let transport = HttpTransport::new().map_err(|e| RunError::Endpoint(e.to_string()))?;
    let cache = if cli.no_cache {
        None
    } else {
        Some(DiskCache::open(&cli.cache_dir).map_err(|e| RunError::Io(e.to_string()))?)
    };
    Gateway::new(model.clone(), transport, cache).map_err(|e| match e {
        GatewayError::Config(_) | GatewayError::MissingCredential(_) => RunError::Usage(e.to_string()),
        other => RunError::Endpoint(other.to_string()),
    })
}

fn model(session: &Session) -> Result<&ModelConfig, RunError> {
    session
        .cfg
        .model
        .as_ref()
        .ok_or_else(|| RunError::Usage("no [model] section in the configuration".into()))
}

fn write_json(path: &Path, value: &runner::AnalysisReport) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

fn endpoint_check(failed: usize, total: usize) -> Result<(), RunError> {
    if failed > 0 {
        return Err(RunError::Endpoint(format!("{failed} of {total} requests failed")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), RunError> {
    if cli.parallelism == 0 {
        return Err(RunError::Usage("--parallelism must be at least 1".into()));
    }
    if let Command::Report { reports } = &cli.command {
        for r in reports {
            print!("{}", runner::cmd_report(r)?);
        }
        return Ok(());
    }
    let session = Session::load(&cli.config)?;
    let configured = session.cfg.selection.unwrap_or_else(SelectionSpec::zero_shot);
    let seed = cli.seed.unwrap_or(configured.seed);
    match &cli.command {
        Command::Ingest { json } => {
            let report = runner::cmd_ingest(&session)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            } else {
                print!("{}", report.render());
            }
        }
        Command::Index { task, query, method, k } => {
            let report = runner::cmd_index(&session, *task, query.as_deref().map(|q| (q, *method, *k)))?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        Command::Sweep { task, out, ks, methods } => {
            let model = model(&session)?;
            let gw = gateway(cli, model)?;
            let ks = ks.clone().unwrap_or_else(|| session.cfg.sweep.ks.clone());
            let methods = methods.clone().unwrap_or_else(|| session.cfg.sweep.methods.clone());
            let report = runner::cmd_sweep(&session, *task, &ks, &methods, seed, &gw, model, cli.parallelism, out)?;
            print!("{}", report.render());
        }
        Command::Run { task, split, out, k, method, predictions } => {
            let summary = match predictions {
                Some(p) => runner::cmd_import(&session, *task, *split, p, out)?,
                None => {
                    let model = model(&session)?;
                    let gw = gateway(cli, model)?;
                    let selection = SelectionSpec {
                        k: k.unwrap_or(configured.k),
                        method: method.unwrap_or(configured.method),
                        seed,
                    };
                    runner::cmd_run(&session, *task, *split, selection, &gw, model, cli.parallelism, out)?
                }
            };
            let l = &summary.ledger;
            println!(
                "{} instances; manifest {}; {} prompt + {} completion tokens; {} cache hits; {} retries; cost {:.4}",
                summary.instances,
                summary.manifest_sha256,
                l.prompt_tokens,
                l.completion_tokens,
                l.cache_hits,
                l.retries,
                l.cost
            );
            endpoint_check(summary.failed_requests, summary.instances)?;
        }
        Command::Score { run, json } => {
            let report = runner::cmd_score(&session, run)?;
            if *json {
                print!("{}", report.to_json());
            } else {
                print!("{}", report.render());
            }
        }
        Command::Analyze { runs, out, review } => {
            let report = runner::cmd_analyze(&session, runs, review.as_deref())?;
            if let Some(out) = out {
                write_json(out, &report)?;
            }
            print!("{}", report.render());
        }
        Command::Report { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
