use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::Context;
use assistant_api::cli;
use assistant_api::http::router;
use assistant_api::service::{Assistant, AssistantConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "assistant",
    version,
    about = "Demand forecasting and transport decision assistant"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate demand and transport CSV files and copy them into a store.
    Ingest {
        #[arg(long)]
        demand: PathBuf,
        #[arg(long)]
        transports: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic store.
    SeedDemo {
        #[arg(long, default_value_t = 279)]
        materials: usize,
        #[arg(long, default_value_t = 149)]
        clients: usize,
        #[arg(long, default_value_t = 516)]
        series: usize,
        #[arg(long, default_value_t = 1095)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one forecaster per series.
    Train {
        #[arg(long)]
        store: PathBuf,
        /// Comma-separated lags in days.
        #[arg(long)]
        lags: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        reg: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expanding-window backtest of every series, as CSV on stdout.
    Backtest {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 3)]
        folds: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        lags: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        reg: f64,
    },
    /// Write the store's knowledge graph as N-Triples.
    ExportKg {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the most informative questions to ask, as CSV on stdout.
    AlSuggest {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        committee: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut log = std::io::stderr();
    match args.command {
        Command::Ingest {
            demand,
            transports,
            out,
        } => cli::ingest(&demand, &transports, &out, &mut log),
        Command::SeedDemo {
            materials,
            clients,
            series,
            days,
            seed,
            out,
        } => cli::seed_demo(materials, clients, series, days, seed, &out, &mut log),
        Command::Train {
            store,
            lags,
            reg,
            seed,
            out,
        } => {
            let spec = cli::model_spec(lags.as_deref(), reg)?;
            cli::train(&store, &spec, seed, &out, &mut log).map(|_| ())
        }
        Command::Backtest {
            store,
            folds,
            seed,
            lags,
            reg,
        } => {
            let spec = cli::model_spec(lags.as_deref(), reg)?;
            cli::backtest_report(&store, &spec, folds, seed, std::io::stdout().lock(), &mut log)
        }
        Command::ExportKg { store, out } => cli::export_kg(&store, &out, &mut log),
        Command::AlSuggest {
            store,
            models,
            k,
            committee,
            seed,
        } => cli::al_suggest(&store, &models, k, committee, seed, std::io::stdout().lock()),
        Command::Serve {
            store,
            models,
            port,
            host,
        } => serve(store, models, &host, port),
    }
}

fn serve(store: PathBuf, models: PathBuf, host: &str, port: u16) -> anyhow::Result<()> {
    let assistant = Assistant::open(&store, &models, AssistantConfig::default())?;
    eprintln!(
        "loaded {} series and {} models from {}",
        assistant.store().len(),
        assistant.model_count(),
        store.display()
    );
    let app = router(Arc::new(Mutex::new(assistant)));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, app).await?;
        Ok(())
    })
}
