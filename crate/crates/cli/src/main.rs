//! `ringview` command-line tool.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ringview::image::{ImageKind, ViewImage};
use ringview::pipeline::{synth_dataset, Pipeline, PipelineConfig, Strategy, SynthSpec};
use ringview_cli::server::{router, AppState, DEFAULT_TOP_K};
use ringview_cli::{exit_code, EXIT_OK, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "ringview", version, about = "Sketch-based 3D model retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Pipeline config (TOML, or JSON with a .json extension).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `retrieval.alpha`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Overrides `retrieval.tta_flip`.
    #[arg(long)]
    tta_flip: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, reorient and normalize the meshes; write manifest.json.
    Ingest(Common),
    /// Render the gallery views of every ingested object.
    Render(Common),
    /// Generate augmented training sketches from the renders.
    Sketchify(Common),
    /// Extract descriptors and write the gallery index.
    Index(Common),
    /// k-fold training of the embedding model.
    Train(Common),
    /// Rank every query sketch against the gallery.
    Retrieve(Common),
    /// Score the rankings against the ground truth.
    Evaluate(Common),
    /// Run every stage in order.
    Run(Common),
    /// Rank a single sketch and print the JSON response.
    Query {
        #[command(flatten)]
        common: Common,
        /// PNG sketch, dark strokes on a light background.
        #[arg(long)]
        sketch: PathBuf,
        /// min_l2, top6_sum_max, embedding or fused.
        #[arg(long)]
        scorer: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
    },
    /// Serve the HTTP query API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        address: SocketAddr,
    },
    /// Write a synthetic dataset (meshes, queries, ground truth, config).
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        objects: usize,
        #[arg(long, default_value_t = 1)]
        queries_per_object: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn pipeline(c: &Common) -> Result<Pipeline> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(dir) = &c.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(a) = c.alpha {
        cfg.retrieval.alpha = a;
    }
    if let Some(t) = c.tta_flip {
        cfg.retrieval.tta_flip = t;
    }
    cfg.validate()?;
    Ok(Pipeline::new(cfg))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn query(c: &Common, sketch: &Path, scorer: Option<&str>, top_k: usize) -> Result<()> {
    let p = pipeline(c)?;
    if let Some(s) = scorer {
        s.parse::<Strategy>()?;
    }
    let state = AppState::load(&p)?;
    let img = ViewImage::load(sketch, ImageKind::Sketch)?;
    let response = state
        .query(&img, scorer, top_k)
        .map_err(|e| anyhow::anyhow!(ringview::Error::InvalidArgument(e.message().to_string())))?;
    print_json(&response)
}

async fn serve(c: &Common, address: SocketAddr) -> Result<()> {
    let p = pipeline(c)?;
    let state = Arc::new(AppState::load(&p)?);
    tracing::info!(%address, scorers = ?state.scorers(), "serving");
    let listener = tokio::net::TcpListener::bind(address)
        .await
        .with_context(|| format!("binding {address}"))?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(c) => {
            let m = pipeline(&c)?.ingest()?;
            tracing::info!(
                objects = m.objects.len(),
                errors = m.errors.len(),
                "ingested"
            );
        }
        Command::Render(c) => {
            let n = pipeline(&c)?.render()?;
            tracing::info!(views = n, "rendered");
        }
        Command::Sketchify(c) => {
            let n = pipeline(&c)?.sketchify()?.len();
            tracing::info!(sketches = n, "sketchified");
        }
        Command::Index(c) => {
            let index = pipeline(&c)?.index()?;
            tracing::info!(objects = index.len(), dim = index.dim(), "indexed");
        }
        Command::Train(c) => {
            let result = pipeline(&c)?.train()?;
            for r in &result.reports {
                tracing::info!(fold = r.fold, validation = r.validation.len(), "trained");
            }
        }
        Command::Retrieve(c) => {
            let n = pipeline(&c)?.retrieve()?.len();
            tracing::info!(queries = n, "retrieved");
        }
        Command::Evaluate(c) => print_json(&pipeline(&c)?.evaluate()?.values())?,
        Command::Run(c) => print_json(&pipeline(&c)?.run_all()?.values())?,
        Command::Query {
            common,
            sketch,
            scorer,
            top_k,
        } => query(&common, &sketch, scorer.as_deref(), top_k)?,
        Command::Serve { common, address } => {
            tokio::runtime::Runtime::new()?.block_on(serve(&common, address))?
        }
        Command::Synth {
            dir,
            objects,
            queries_per_object,
            seed,
        } => {
            let spec = SynthSpec {
                objects,
                queries_per_object,
                seed,
                ..Default::default()
            };
            synth_dataset(&dir, &spec)?;
            tracing::info!(dir = %dir.display(), "wrote synthetic dataset");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
