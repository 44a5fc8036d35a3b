use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nl2sql::pipeline::{Catalog, Gateways};
use nl2sql::{Database, Pipeline};
use nl2sql_cli::commands::{self, EvalArgs};
use nl2sql_cli::config::{AppConfig, GatewayConfig};
use nl2sql_cli::{gateways, repl, server};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "nl2sql", version, about = "Text-to-SQL over SQLite databases")]
struct Cli {
    /// TOML configuration file. `NL2SQL_*` variables override it.
    #[arg(long, global = true, env = "NL2SQL_CONFIG")]
    config: Option<PathBuf>,

    /// Model gateway: `gold-echo`, a `.json` rule file, or a TOML gateway file.
    #[arg(long, global = true)]
    gateway: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the mined schema card of a database.
    Mine {
        db: PathBuf,
        /// Write the card here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run schema linking for one question.
    Link {
        #[arg(long)]
        db: PathBuf,
        question: String,
    },
    /// Generate and repair SQL candidates for one question.
    Gen {
        #[arg(long)]
        db: PathBuf,
        /// Put the whole schema in the prompt instead of linking first.
        #[arg(long)]
        no_link: bool,
        question: String,
    },
    /// Ask the critic to choose among SQL candidates.
    Critic {
        #[arg(long)]
        db: PathBuf,
        #[arg(long = "sql", required = true)]
        sqls: Vec<String>,
        question: String,
    },
    /// Manage the critic knowledge base.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
    /// Execution-accuracy evaluation on a Spider-layout dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        scenario: Option<String>,
        #[arg(long)]
        matrix: bool,
        /// Gateway for the row that swaps in another critic model.
        #[arg(long)]
        critic_gateway: Option<String>,
        /// Directory for `reports.json` and `summary.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        databases: Option<PathBuf>,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Interactive question session on one database.
    Repl {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KbAction {
    /// Validate and append records (JSON array or JSON lines).
    Ingest {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        records: PathBuf,
        /// Ask the critic model for bad answers instead of perturbing.
        #[arg(long)]
        model_bad_answers: bool,
    },
    List {
        #[arg(long)]
        kb: PathBuf,
    },
    /// Show the nearest entries for a question.
    Retrieve {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
        question: String,
    },
}

fn open_db(path: &Path) -> Result<Database> {
    Database::open(path).with_context(|| format!("opening {}", path.display()))
}

fn pipeline(cfg: &AppConfig, gateway: &GatewayConfig) -> Result<Pipeline> {
    let gw = gateways::build(gateway)?;
    Ok(Pipeline::new(cfg.pipeline.clone(), Gateways::single(gw)))
}

fn print(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("NL2SQL_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    if let Some(arg) = &cli.gateway {
        cfg.gateway = GatewayConfig::from_arg(arg)?;
    }

    match cli.command {
        Command::Mine { db, out } => {
            let p = Pipeline::new(cfg.pipeline.clone(), Gateways::single(gateways::build(&Default::default())?));
            let card = commands::mine(&open_db(&db)?, &p)?;
            match out {
                Some(path) => std::fs::write(&path, card + "\n").with_context(|| format!("writing {}", path.display())),
                None => print(&card),
            }
        }
        Command::Link { db, question } => {
            commands::require_non_echo(&cfg.gateway, "link")?;
            print(&commands::link(&question, &open_db(&db)?, &pipeline(&cfg, &cfg.gateway)?)?)
        }
        Command::Gen { db, no_link, question } => {
            commands::require_non_echo(&cfg.gateway, "gen")?;
            let p = pipeline(&cfg, &cfg.gateway)?;
            print(&commands::generate(&question, &open_db(&db)?, &p, !no_link)?)
        }
        Command::Critic { db, sqls, question } => {
            commands::require_non_echo(&cfg.gateway, "critic")?;
            let p = pipeline(&cfg, &cfg.gateway)?;
            print(&commands::criticize(&question, &sqls, &open_db(&db)?, &p)?)
        }
        Command::Kb { action } => match action {
            KbAction::Ingest {
                kb,
                db,
                records,
                model_bad_answers,
            } => {
                let p = pipeline(&cfg, &cfg.gateway)?;
                let recs = commands::read_records(&records)?;
                print(&commands::kb_ingest(&kb, &recs, &open_db(&db)?, &p, model_bad_answers)?)
            }
            KbAction::List { kb } => print(&commands::kb_list(&kb)?),
            KbAction::Retrieve { kb, db, k, question } => {
                let p = pipeline(&cfg, &Default::default())?;
                print(&commands::kb_retrieve(&kb, &question, &open_db(&db)?, &p, k)?)
            }
        },
        Command::Eval {
            dataset,
            scenario,
            matrix,
            critic_gateway,
            out,
        } => {
            let critic = critic_gateway.as_deref().map(GatewayConfig::from_arg).transpose()?;
            let args = EvalArgs {
                dataset: &dataset,
                scenario: if matrix { None } else { scenario.as_deref() },
                gateway: &cfg.gateway,
                critic_gateway: critic.as_ref(),
            };
            let reports = commands::evaluate(&args, cfg.pipeline.clone())?;
            if let Some(dir) = out {
                commands::write_reports(&dir, &reports)?;
            }
            print(nl2sql::eval::reports_to_csv(&reports)?.trim_end())
        }
        Command::Serve { bind, databases, kb } => {
            let bind = bind.unwrap_or(cfg.server.bind.clone());
            let dir = databases
                .or(cfg.server.database_dir.clone())
                .context("no database directory: pass --databases or set server.database_dir")?;
            let kb_path = kb.or(cfg.server.kb_path.clone());
            let catalog = Catalog::scan(&dir)?;
            let mut p = pipeline(&cfg, &cfg.gateway)?;
            if let Some(path) = &kb_path {
                p = p.with_knowledge_base(commands::load_kb(path)?);
            }
            tracing::info!(databases = catalog.ids().len(), %bind, "starting server");
            let state = server::AppState::new(p, catalog, kb_path);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                axum::serve(listener, server::router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })
        }
        Command::Repl { db, kb } => {
            let db = open_db(&db)?;
            let mut p = pipeline(&cfg, &cfg.gateway)?;
            if let Some(path) = &kb {
                p = p.with_knowledge_base(commands::load_kb(path)?);
            }
            let mut session = repl::Session::new(&p, &db);
            let stdin = io::stdin();
            let mut stdout = io::stdout();
            session.run(stdin.lock(), &mut stdout)?;
            Ok(())
        }
    }
}
