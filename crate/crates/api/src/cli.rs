//! Command implementations behind the `assistant` binary.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use assistant_core::active_learning::CommitteeConfig;
use assistant_core::forecasting::{backtest, save_models, train_all, ModelSpec, DEFAULT_LAGS};
use assistant_core::ingestion::{generate_synthetic, load_demand_history, load_transports, open_store, save_store};
use assistant_core::knowledge_graph::KnowledgeGraph;
use rayon::prelude::*;

use crate::service::{graph_path, Assistant, AssistantConfig};

pub fn parse_lags(raw: &str) -> anyhow::Result<Vec<u32>> {
    raw.split(',')
        .map(|p| p.trim().parse::<u32>().with_context(|| format!("invalid lag `{p}`")))
        .collect()
}

/// Lags plus weekday and month indicators at the given regularization.
pub fn model_spec(lags: Option<&str>, regularization: f64) -> anyhow::Result<ModelSpec> {
    let defaults = ModelSpec::default();
    let lags = match lags {
        Some(raw) => parse_lags(raw)?,
        None => DEFAULT_LAGS.to_vec(),
    };
    Ok(ModelSpec::new(lags, defaults.calendar_features, regularization)?)
}

pub fn ingest(demand: &Path, transports: &Path, out: &Path, log: &mut impl Write) -> anyhow::Result<()> {
    let store = load_demand_history(demand).with_context(|| format!("reading {}", demand.display()))?;
    let fleet = load_transports(transports).with_context(|| format!("reading {}", transports.display()))?;
    save_store(out, &store, &fleet)?;
    writeln!(
        log,
        "ingested {} observations in {} series and {} transports into {}",
        store.observation_count(),
        store.len(),
        fleet.len(),
        out.display()
    )?;
    Ok(())
}

pub fn seed_demo(
    materials: usize,
    clients: usize,
    series: usize,
    days: usize,
    seed: u64,
    out: &Path,
    log: &mut impl Write,
) -> anyhow::Result<()> {
    let (store, fleet) = generate_synthetic(materials, clients, series, days, seed)?;
    save_store(out, &store, &fleet)?;
    writeln!(
        log,
        "generated {} series ({} materials, {} clients) over {days} days and {} transports into {}",
        store.len(),
        store.materials().len(),
        store.clients().len(),
        fleet.len(),
        out.display()
    )?;
    Ok(())
}

/// Trains one model per series. Series that cannot be trained are reported
/// and skipped; it is an error only when none can.
pub fn train(store_dir: &Path, spec: &ModelSpec, seed: u64, out: &Path, log: &mut impl Write) -> anyhow::Result<usize> {
    let (store, _) = open_store(store_dir)?;
    let mut trained = Vec::new();
    for (key, result) in train_all(&store, spec, seed) {
        match result {
            Ok(m) => trained.push(m),
            Err(e) => writeln!(log, "skipping series {key}: {e}")?,
        }
    }
    if trained.is_empty() && !store.is_empty() {
        bail!("no series could be trained");
    }
    save_models(out, &trained)?;
    writeln!(
        log,
        "trained {} of {} series into {}",
        trained.len(),
        store.len(),
        out.display()
    )?;
    Ok(trained.len())
}

/// CSV report with one row per series.
pub fn backtest_report(
    store_dir: &Path,
    spec: &ModelSpec,
    folds: u32,
    seed: u64,
    out: impl Write,
    log: &mut impl Write,
) -> anyhow::Result<()> {
    let (store, _) = open_store(store_dir)?;
    let keys: Vec<_> = store.keys().cloned().collect();
    let reports: Vec<_> = keys
        .par_iter()
        .map(|k| (k, backtest(&store, k, spec, folds, seed)))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "material_id", "client_id", "mae", "baseline_mae"])?;
    for (key, report) in reports {
        match report {
            Ok(r) => w.write_record([
                key.to_string(),
                key.material_id.clone(),
                key.client_id.clone(),
                format!("{:.6}", r.mae),
                format!("{:.6}", r.baseline_mae),
            ])?,
            Err(e) => writeln!(log, "skipping series {key}: {e}")?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_kg(store_dir: &Path, out: &Path, log: &mut impl Write) -> anyhow::Result<()> {
    let graph = KnowledgeGraph::open(graph_path(store_dir))?;
    graph.export_ntriples(out)?;
    writeln!(
        log,
        "exported {} entities and {} triples to {}",
        graph.entity_count(),
        graph.triple_count(),
        out.display()
    )?;
    Ok(())
}

pub fn al_suggest(
    store_dir: &Path,
    models_dir: &Path,
    k: usize,
    committee: usize,
    seed: u64,
    out: impl Write,
) -> anyhow::Result<()> {
    let config = AssistantConfig {
        committee: CommitteeConfig::new(committee, seed),
        ..AssistantConfig::default()
    };
    let mut assistant = Assistant::open(store_dir, models_dir, config)?;
    let ranked = assistant.al_suggestions_next_day(k)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "target_kind", "target_id", "informativeness", "rationale"])?;
    for (i, q) in ranked.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            q.target_kind.name().to_string(),
            q.target_id.clone(),
            format!("{:.6}", q.informativeness),
            q.rationale.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
