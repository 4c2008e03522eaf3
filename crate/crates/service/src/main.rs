use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rewardsmith::report::{render_table, report_document};
use rewardsmith::{api, make_generator};
use rewardsmith_core::evolution::{build_evaluator, resume_search, run_search, Mode, RunConfig, RunRecord, SearchError};
use rewardsmith_core::store::{RunStore, StoreError};

#[derive(Parser)]
#[command(name = "rewardsmith", about = "Evolutionary search over reward programs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run from a config file and drive it to completion.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Continue an interrupted run.
    Resume {
        run_id: String,
        #[arg(long, default_value = "runs")]
        root: PathBuf,
    },
    /// Print metrics for one run, optionally compared with others.
    Report {
        run_id: String,
        #[arg(long, num_args = 1..)]
        compare: Vec<String>,
        #[arg(long, default_value = "runs")]
        root: PathBuf,
        /// Also train the bundled human and sparse rewards for normalized scores.
        #[arg(long)]
        baselines: bool,
        /// Print only the JSON document.
        #[arg(long)]
        json: bool,
    },
    /// Create a human-feedback run; it waits for feedback through the API.
    Hf {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the HTTP API for a store directory.
    Serve {
        #[arg(long, default_value = "runs")]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = if matches!(e, StoreError::Config(_)) { 2 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: String) -> Failure {
    Failure { code: 2, message }
}

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text).map_err(config_error)?;
    // relative fixture paths are resolved against the config file
    if let (Some(fixture), Some(dir)) = (cfg.generator.fixture.as_mut(), path.parent()) {
        if fixture.is_relative() {
            *fixture = dir.join(&*fixture);
        }
    }
    Ok(cfg)
}

fn store_for(cfg: &RunConfig) -> Result<RunStore, Failure> {
    Ok(RunStore::open(cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs")))?)
}

fn print_outcome(record: &RunRecord) {
    let best = record
        .eureka_best
        .as_ref()
        .map_or_else(|| "none".to_string(), |b| format!("{:.4}", b.score));
    let final_score = record
        .final_evaluation
        .as_ref()
        .map_or_else(|| "-".to_string(), |f| format!("{:.4}", f.mean_of_max));
    println!(
        "{} {:?}: {} candidates, best intermediate score {best}, final score {final_score}",
        record.run_id,
        record.status,
        record.candidate_count()
    );
}

fn start(config: &Path, require_hf: bool) -> Result<(), Failure> {
    let cfg = read_config(config)?;
    if require_hf && cfg.evolution.mode != Mode::HumanFeedback {
        return Err(config_error("hf needs a config with mode human_feedback".into()));
    }
    let store = store_for(&cfg)?;
    let mut writer = store.create(&cfg)?;
    let mut generator = make_generator(&cfg)?;
    let evaluator = build_evaluator(&cfg)?;
    let record = run_search(&cfg, generator.as_mut(), evaluator.as_ref(), &mut writer)?;
    print_outcome(&record);
    Ok(())
}

fn resume(run_id: &str, root: &Path) -> Result<(), Failure> {
    let store = RunStore::open(root)?;
    let (loaded, mut writer) = store.open_writer(run_id)?;
    let cfg = loaded.record.config.clone();
    let mut generator = make_generator(&cfg)?;
    let evaluator = build_evaluator(&cfg)?;
    let record = resume_search(loaded.record, generator.as_mut(), evaluator.as_ref(), &mut writer)?;
    print_outcome(&record);
    Ok(())
}

fn report(run_id: &str, compare: &[String], root: &Path, baselines: bool, json_only: bool) -> Result<(), Failure> {
    let store = RunStore::open(root)?;
    let runs = std::iter::once(run_id)
        .chain(compare.iter().map(String::as_str))
        .map(|id| store.load(id))
        .collect::<Result<Vec<_>, _>>()?;
    let doc = report_document(&runs, baselines);
    let json = serde_json::to_string_pretty(&doc).expect("report serializes");
    if json_only {
        println!("{json}");
    } else {
        print!("{}", render_table(&doc));
        println!("{json}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => start(&config, false),
        Command::Hf { config } => start(&config, true),
        Command::Resume { run_id, root } => resume(&run_id, &root),
        Command::Report {
            run_id,
            compare,
            root,
            baselines,
            json,
        } => report(&run_id, &compare, &root, baselines, json),
        Command::Serve { root, bind } => tokio::runtime::Runtime::new()
            .map_err(|e| Failure {
                code: 1,
                message: e.to_string(),
            })
            .and_then(|rt| {
                rt.block_on(api::serve(root, bind)).map_err(|e| Failure {
                    code: 1,
                    message: e.to_string(),
                })
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
