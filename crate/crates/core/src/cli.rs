//! `mosaic` command line: ingest, recommend, eval, serve.
//!
//! JSON results go to stdout, logs to stderr. Exit code 2 means bad input
//! or usage, 3 means the environment got in the way (port taken, disk).

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dataset::{load_manifest, Collection};
use crate::engines::{Backbone, EngineId, EngineOptions, EngineSpec, Recommender, DEFAULT_R};
use crate::scoring::{AggregationMode, UserProfile};
use crate::selector::SolverOptions;
use crate::service::{self, AppState, ServiceConfig};
use crate::simharness::{apply_eval_key, parse_kv, run_offline_eval, EvalConfig, EvalProfile};
use crate::similarity::{cosine_similarity_matrix, load_embeddings, load_similarity_matrix, save_similarity_matrix};

#[derive(Debug, Parser)]
#[command(name = "mosaic", version, about = "Multistakeholder visual art recommender")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest and write a similarity matrix for it.
    Ingest(IngestArgs),
    /// Run one engine for one profile.
    Recommend(RecommendArgs),
    /// Run the offline evaluation grid and write pairwise tables.
    Eval(EvalArgs),
    /// Start the study service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Embedding file to build a cosine matrix from.
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    pub embeddings: Option<PathBuf>,
    /// Existing matrix to validate and re-emit in collection order.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub matrix_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Matrix for the engine's backbone.
    #[arg(long)]
    pub matrix: PathBuf,
    /// JSON `{ratings: {id: 1..5}, beta?, xi?}`.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long)]
    pub engine: String,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub r: Option<usize>,
    /// Add popularity to unnormalised personal scores.
    #[arg(long)]
    pub raw_aggregation: bool,
    #[arg(long)]
    pub node_budget: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub matrix_a: PathBuf,
    #[arg(long)]
    pub matrix_b: Option<PathBuf>,
    /// JSON list of `{ratings, beta?, xi?}`.
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub raw_aggregation: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub matrix_a: PathBuf,
    #[arg(long)]
    pub matrix_b: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub image_dir: Option<PathBuf>,
    /// Comma-separated engine ids shown to each participant.
    #[arg(long, value_delimiter = ',')]
    pub engines: Option<Vec<String>>,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Env(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Env(_) => 3,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

/// Settings shared between the config file and flags.
#[derive(Debug, Default)]
struct Settings {
    eval: EvalConfig,
    aggregation: Option<AggregationMode>,
    node_budget: Option<u64>,
    engines: Option<Vec<String>>,
    r: Option<usize>,
}

fn load_settings(common: &Common) -> Result<Settings, CliError> {
    let mut settings = Settings::default();
    let Some(path) = &common.config else {
        settings.eval.seed = common.seed.unwrap_or(0);
        return Ok(settings);
    };
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let pairs = parse_kv(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    for (key, value) in pairs {
        if key == "r" {
            settings.r = Some(value.parse().map_err(|_| input(format!("r: cannot parse {value:?}")))?);
        }
        if apply_eval_key(&mut settings.eval, &key, &value).map_err(input)? {
            continue;
        }
        match key.as_str() {
            "aggregation" => {
                settings.aggregation = Some(match value.as_str() {
                    "normalized" => AggregationMode::Normalized,
                    "raw" => AggregationMode::Raw,
                    _ => return Err(input(format!("aggregation: expected normalized or raw, got {value:?}"))),
                })
            }
            "node_budget" => {
                settings.node_budget =
                    Some(value.parse().map_err(|_| input(format!("node_budget: cannot parse {value:?}")))?)
            }
            "engines" => settings.engines = Some(value.split(',').map(|s| s.trim().to_owned()).collect()),
            _ => return Err(input(format!("{}: unknown key {key:?}", path.display()))),
        }
    }
    if let Some(seed) = common.seed {
        settings.eval.seed = seed;
    }
    Ok(settings)
}

fn engine_options(settings: &Settings, raw_flag: bool, budget_flag: Option<u64>) -> EngineOptions {
    let mut solver = SolverOptions::default();
    if let Some(b) = budget_flag.or(settings.node_budget) {
        solver.node_budget = b;
    }
    EngineOptions {
        aggregation: if raw_flag {
            AggregationMode::Raw
        } else {
            settings.aggregation.unwrap_or_default()
        },
        solver,
    }
}

fn open_collection(path: &Path) -> Result<Arc<Collection>, CliError> {
    load_manifest(path)
        .map(Arc::new)
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

fn register(rec: &mut Recommender, backbone: Backbone, path: &Path) -> Result<(), CliError> {
    let matrix = load_similarity_matrix(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    rec.register(backbone, &matrix)
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Env(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Env(e.to_string()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let collection = open_collection(&args.manifest)?;
    let start = Instant::now();
    let matrix = match (&args.embeddings, &args.matrix) {
        (Some(path), _) => {
            let table = load_embeddings(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            table
                .check_against(&collection)
                .map_err(|e| input(format!("{}: {e}", path.display())))?;
            cosine_similarity_matrix(&table).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        (None, Some(path)) => load_similarity_matrix(path).map_err(|e| input(format!("{}: {e}", path.display())))?,
        (None, None) => return Err(input("pass --embeddings or --matrix")),
    };
    let matrix = matrix.align_to(&collection).map_err(input)?;
    let elapsed = start.elapsed();
    save_similarity_matrix(&matrix, &args.matrix_out)
        .map_err(|e| CliError::Env(format!("{}: {e}", args.matrix_out.display())))?;
    tracing::info!(size = matrix.len(), elapsed_ms = elapsed.as_millis() as u64, "matrix built");
    print_json(&json!({
        "paintings": collection.len(),
        "groups": collection.groups().len(),
        "kind": matrix.kind().as_str(),
        "size": matrix.len(),
        "matrix_out": args.matrix_out,
        "elapsed_ms": elapsed.as_secs_f64() * 1e3,
    }))
}

fn cmd_recommend(args: &RecommendArgs, settings: &Settings) -> Result<(), CliError> {
    let engine: EngineId = args.engine.parse().map_err(input)?;
    let collection = open_collection(&args.manifest)?;
    let mut rec = Recommender::new(collection).with_options(engine_options(settings, args.raw_aggregation, args.node_budget));
    register(&mut rec, engine.backbone, &args.matrix)?;
    let stored: EvalProfile = read_json(&args.profile)?;
    let profile = UserProfile {
        ratings: stored.ratings,
        beta: args.beta.or(stored.beta).unwrap_or(0.0),
        xi: args.xi.or(stored.xi).unwrap_or(0.0),
    };
    let r = args.r.or(settings.r).unwrap_or(DEFAULT_R);
    let out = rec.recommend(EngineSpec::new(engine).with_r(r), &profile).map_err(input)?;
    if !out.optimal {
        tracing::warn!("solver node budget reached; returning the best set found");
    }
    print_json(&out)
}

fn cmd_eval(args: &EvalArgs, settings: &Settings) -> Result<(), CliError> {
    let collection = open_collection(&args.manifest)?;
    let mut rec = Recommender::new(collection).with_options(engine_options(settings, args.raw_aggregation, None));
    register(&mut rec, Backbone::A, &args.matrix_a)?;
    if let Some(b) = &args.matrix_b {
        register(&mut rec, Backbone::B, b)?;
    }
    let profiles: Vec<EvalProfile> = read_json(&args.profiles)?;
    let mut config = settings.eval.clone();
    if let Some(r) = settings.r {
        config.r = r;
    }
    let start = Instant::now();
    let run = run_offline_eval(&rec, &profiles, &config).map_err(input)?;
    let table = run.table().map_err(input)?;
    let env = |e: io::Error| CliError::Env(format!("{}: {e}", args.out_dir.display()));
    fs::create_dir_all(&args.out_dir).map_err(env)?;
    let csv_path = args.out_dir.join("pairwise.csv");
    let txt_path = args.out_dir.join("pairwise.txt");
    fs::write(&csv_path, table.to_csv().map_err(|e| CliError::Env(e.to_string()))?).map_err(env)?;
    fs::write(&txt_path, table.render_text()).map_err(env)?;
    tracing::info!(
        profiles = run.n_profiles(),
        cells = run.cells.len(),
        elapsed_ms = start.elapsed().as_millis() as u64,
        "evaluation finished"
    );
    print_json(&json!({
        "profiles": run.n_profiles(),
        "cells": run.labels,
        "pairs": table.rows.len() / 2,
        "csv": csv_path,
        "table": txt_path,
        "non_optimal": run.non_optimal,
    }))
}

fn cmd_serve(args: &ServeArgs, common: &Common, settings: &Settings) -> Result<(), CliError> {
    let collection = open_collection(&args.manifest)?;
    let mut rec = Recommender::new(collection).with_options(engine_options(settings, false, None));
    register(&mut rec, Backbone::A, &args.matrix_a)?;
    if let Some(b) = &args.matrix_b {
        register(&mut rec, Backbone::B, b)?;
    }
    let mut config = ServiceConfig {
        seed: common.seed,
        image_dir: args.image_dir.clone(),
        r: settings.r.unwrap_or(DEFAULT_R),
        ..ServiceConfig::default()
    };
    if let Some(list) = args.engines.clone().or_else(|| settings.engines.clone()) {
        config.engines = list
            .iter()
            .map(|s| s.trim().parse::<EngineId>())
            .collect::<Result<_, _>>()
            .map_err(input)?;
    }
    let state = AppState::open(Arc::new(rec), config, &args.data_dir).map_err(|e| match e {
        service::ServiceError::NoEngines | service::ServiceError::MissingBackbone(_) => input(e),
        _ => CliError::Env(e.to_string()),
    })?;

    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| input(format!("--host/--port: {e}")))?;
    let listener = std::net::TcpListener::bind(addr).map_err(|e| CliError::Env(format!("bind {addr}: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| CliError::Env(e.to_string()))?;
    let local = listener.local_addr().map_err(|e| CliError::Env(e.to_string()))?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Env(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(|e| CliError::Env(e.to_string()))?;
        tracing::info!(%local, "listening");
        // one compact line so wrappers can read the bound address
        println!("{}", json!({ "listening": local.to_string() }));
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Env(e.to_string()))
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let settings = load_settings(&cli.common)?;
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Recommend(args) => cmd_recommend(args, &settings),
        Command::Eval(args) => cmd_eval(args, &settings),
        Command::Serve(args) => cmd_serve(args, &cli.common, &settings),
    }
}

/// Parses arguments, sets up logging, runs, and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let _ = tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Input(msg) | CliError::Env(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
