use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use medrag_cli::commands::{self, EvalArgs};
use medrag_cli::config::AppConfig;
use medrag_cli::error::{ApiError, ErrorCode};
use medrag_cli::server::{self, AppState, QueryResponse};
use medrag_core::orchestrator::{QueryMode, DEFAULT_TOP_K};

#[derive(Parser)]
#[command(name = "medrag", version, about = "Multimodal retrieval over biomedical literature")]
struct Cli {
    /// TOML config file; `APP__SECTION__KEY` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search and fetch articles, then write the chunked corpus.
    Ingest,
    /// Embed, fuse and index the corpus for every configured mode.
    Index,
    /// Answer one question against the saved index.
    Query {
        question: String,
        #[arg(long, default_value = "full")]
        mode: QueryMode,
        #[arg(short, long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        /// Print the API response body instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run the ablation matrix against the gold set and write reports.
    Eval {
        /// Index this corpus in memory instead of loading the saved index.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Comma-separated, e.g. `full,text_only`.
        #[arg(long)]
        modes: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Serve the JSON API and the UI.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Write the fine-tuning job presets.
    Finetune {
        #[arg(long, default_value = "finetune")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), ApiError> {
    let mut config = AppConfig::from_env(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest => {
            let s = commands::cmd_ingest(&config)?;
            for w in &s.warnings {
                log::warn!("{w}");
            }
            for e in &s.errors {
                eprintln!("error: pmid {}: {}", e.pmid, e.message);
            }
            println!(
                "ingested {} articles: {} chunks, {} images, {} errors -> {}",
                s.articles,
                s.chunks,
                s.images,
                s.errors.len(),
                config.paths.corpus_dir.display()
            );
        }
        Command::Index => {
            let s = commands::cmd_index(&config)?;
            let modes: Vec<&str> = s.modes.iter().map(|m| m.as_str()).collect();
            println!(
                "indexed {} chunks and {} images for {} -> {}",
                s.chunks,
                s.images,
                modes.join(", "),
                s.dir.display()
            );
        }
        Command::Query { question, mode, k, json } => {
            let answer = commands::cmd_query(&config, &question, mode, k)?;
            if json {
                let body = serde_json::to_string_pretty(&QueryResponse::from(answer))
                    .map_err(|e| ApiError::internal(e.to_string()))?;
                println!("{body}");
            } else {
                print!("{}", commands::render_answer(&answer));
            }
        }
        Command::Eval { corpus, gold, modes, k } => {
            if k == Some(0) {
                return Err(ApiError::new(ErrorCode::BadRequest, "--k must be at least 1"));
            }
            let args = EvalArgs {
                corpus,
                gold,
                modes: modes.as_deref().map(QueryMode::parse_list).transpose()?,
                k,
                timestamp: None,
            };
            for (r, path) in commands::cmd_eval(&config, &args)? {
                let m = &r.metrics;
                let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{:<17} P@{} {:.4}  recall {:.4}  MAP {:.4}  acc {}  EM {}  F1 {}  {}",
                    r.mode.as_str(),
                    r.k,
                    m.precision_at_k,
                    m.recall,
                    m.map,
                    opt(m.accuracy),
                    opt(m.exact_match),
                    opt(m.f1),
                    path.display()
                );
            }
        }
        Command::Serve { host, port } => {
            if let Some(h) = host {
                config.server.host = h;
            }
            if let Some(p) = port {
                config.server.port = p;
            }
            config.validate()?;
            let state = AppState::load(config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(state))?;
        }
        Command::Finetune { out } => {
            for path in commands::cmd_finetune(&out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(ErrorCode::BadRequest.exit_code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code.exit_code())
        }
    }
}
