use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use cai_core::catalog::Catalog;
use cai_core::config::parse_config_uri;
use cai_core::detector::DetectOptions;
use cai_core::merge::MergeOptions;
use cai_core::rules;
use cai_core::session::Decision;
use cai_service::cache::RuleCache;
use cai_service::http::{router, AppState};
use cai_service::install::{DecisionRequest, InstallRequest, InstallSession};
use cai_service::pipeline::Analyzer;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cai", version, about = "Cross-app interference analysis for home automation apps")]
struct Cli {
    /// Capability catalog (JSON or TOML); the built-in one by default.
    #[arg(long, global = true, env = "HG_CATALOG")]
    catalog: Option<PathBuf>,
    /// Longest chain reported, in rules.
    #[arg(long, global = true, default_value_t = 4)]
    max_chain_len: usize,
    /// Keep environment features of different rules apart.
    #[arg(long, global = true)]
    no_env_unification: bool,
    /// Directory for cached rule extraction results.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the rules of an app and print them as a rule file.
    Extract {
        app: PathBuf,
        /// Bind the rules with this configuration (URI or file).
        #[arg(long)]
        config: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check an app against a home and hold it pending a decision.
    Analyze {
        app: PathBuf,
        /// Configuration URI, or a file holding a URI or configuration JSON.
        #[arg(long)]
        config: String,
        #[arg(long)]
        home: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Keep or reject the pending app.
    Decide {
        id: String,
        choice: Choice,
        #[arg(long)]
        home: PathBuf,
        #[arg(long)]
        by: Option<String>,
    },
    /// Session commands.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Serve the HTTP API for one home.
    Serve {
        #[arg(long)]
        home: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8040")]
        listen: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Choice {
    Keep,
    Reject,
}

fn analyzer(cli: &Cli) -> Result<Analyzer> {
    let catalog = match &cli.catalog {
        Some(p) => Catalog::load(p).with_context(|| format!("loading catalog {}", p.display()))?,
        None => Catalog::default_catalog(),
    };
    let options = DetectOptions {
        merge: MergeOptions { env_unification: !cli.no_env_unification },
        max_chain_len: cli.max_chain_len,
    };
    Ok(Analyzer::new(catalog, options, cli.cache_dir.as_ref().map(RuleCache::new)))
}

fn install_request(source: String, config: &str) -> Result<InstallRequest> {
    let path = Path::new(config);
    let text = if !config.contains("://") && path.is_file() {
        std::fs::read_to_string(path).with_context(|| format!("reading {config}"))?
    } else {
        config.to_string()
    };
    let text = text.trim();
    Ok(if text.starts_with('{') {
        InstallRequest { app_source: source, config_uri: None, config: Some(serde_json::from_str(text)?) }
    } else {
        InstallRequest { app_source: source, config_uri: Some(text.to_string()), config: None }
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let analyzer = analyzer(&cli)?;
    match cli.command {
        Command::Extract { app, config, output } => {
            let source = std::fs::read_to_string(&app).with_context(|| format!("reading {}", app.display()))?;
            let set = match analyzer.extract(&source) {
                Ok(s) => s,
                Err(errors) => {
                    for e in errors {
                        eprintln!("{}: {} {}: {}", app.display(), e.stage, e.code, e.message);
                    }
                    return Ok(ExitCode::from(1));
                }
            };
            let set = match config {
                Some(c) => {
                    let req = install_request(source, &c)?;
                    let cfg = match (req.config, req.config_uri) {
                        (Some(c), _) => c,
                        (None, Some(u)) => parse_config_uri(&u)?,
                        _ => unreachable!(),
                    };
                    rules::bind_configuration(&set, &cfg)?.to_rule_set(&set)
                }
                None => set,
            };
            emit(output.as_deref(), &rules::serialize(&set))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { app, config, home, report } => {
            let source = std::fs::read_to_string(&app).with_context(|| format!("reading {}", app.display()))?;
            let req = install_request(source, &config)?;
            let mut session = InstallSession::open(&home)?;
            let r = session.install(&analyzer, &req)?;
            emit(report.as_deref(), &r.to_json())?;
            if let Some(id) = r.pending_decision_ids.first() {
                eprintln!("pending decision: {id}");
            }
            Ok(if r.is_failed() {
                ExitCode::from(1)
            } else if r.has_findings() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Decide { id, choice, home, by } => {
            let mut session = InstallSession::open(&home)?;
            let choice = match choice {
                Choice::Keep => Decision::Keep,
                Choice::Reject => Decision::Reject,
            };
            let ack = session.decide(&DecisionRequest { decision_id: id, choice, decided_by: by })?;
            println!("{}", serde_json::to_string_pretty(&ack)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Session { command: SessionCommand::Serve { home, listen } } => {
            let session = InstallSession::open(&home)?;
            let state = Arc::new(AppState { analyzer, session: tokio::sync::Mutex::new(session) });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&listen).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state)).await?;
                anyhow::Ok(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
