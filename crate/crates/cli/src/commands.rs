use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use zsc_core::encoding::{encode, CardMode};
use zsc_core::eval::{evaluate, predictions, qerror, run_experiment, run_index_experiment, ExperimentSpec};
use zsc_core::executor::{
    annotate_actuals, execute, execute_with, read_samples, write_samples, CostWeights, SampleFileHeader, SampleRecord,
    SAMPLE_FORMAT,
};
use zsc_core::model::{finetune, train, CostModel, ModelConfig, Sample};
use zsc_core::planner::{hypothetical_plan, plan};
use zsc_core::relcore::{
    compute_statistics, generate_database, load_catalog, load_database, save_catalog, save_database, Catalog, Database,
    IndexDef, DEFAULT_BUCKETS,
};
use zsc_core::workload::{generate_workload, read_workload, write_workload, WorkloadConfig};

use crate::config::{read_versioned, DataConfig, IndexFile};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::Command;

const CATALOG_FILE: &str = "catalog.json";

/// Manifest location for a command whose output is a single file.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn parent_of(out: &Path) -> PathBuf {
    out.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn create_parent(out: &Path) -> Result<()> {
    std::fs::create_dir_all(parent_of(out)).with_context(|| format!("creating directory for {}", out.display()))
}

fn load_db(dir: &Path) -> Result<(Database, Catalog)> {
    let db = load_database(dir).with_context(|| format!("loading database {}", dir.display()))?;
    let path = dir.join(CATALOG_FILE);
    let catalog = if path.exists() { load_catalog(&path)? } else { compute_statistics(&db, DEFAULT_BUCKETS) };
    Ok((db, catalog))
}

fn load_weights(path: Option<&Path>, manifest: &mut RunManifest) -> Result<CostWeights> {
    let weights = match path {
        Some(p) => {
            manifest.input(p)?;
            let w: CostWeights = read_versioned(p)?;
            w.validate()?;
            w
        }
        None => CostWeights::default(),
    };
    manifest.weights = Some(weights.clone());
    Ok(weights)
}

fn parse_query_id(record: &SampleRecord) -> Result<u64> {
    record.query_id.parse().with_context(|| format!("query id `{}` is not an integer", record.query_id))
}

/// Encodes every record of a sample file.
fn load_sample_file(path: &Path, mode: CardMode) -> Result<(SampleFileHeader, Vec<Sample>, Vec<SampleRecord>)> {
    let (header, records) = read_samples(path).with_context(|| format!("reading samples {}", path.display()))?;
    let samples = records
        .par_iter()
        .map(|r| {
            let g = encode(&r.plan, &header.catalog, mode)?;
            Ok(Sample::new(&g, r.cost_units, &r.database, parse_query_id(r)?)?)
        })
        .collect::<Result<Vec<_>>>()
        .with_context(|| format!("encoding samples of {}", path.display()))?;
    Ok((header, samples, records))
}

pub fn run(command: Command, args: Vec<String>) -> Result<()> {
    match command {
        Command::GenData { config, out, seed } => gen_data(&config, &out, seed, args),
        Command::GenWorkload { db, config, out, seed } => gen_workload(&db, &config, &out, seed, args),
        Command::RunWorkload { db, workload, out, indexes, weights, wall_clock } => {
            run_workload(&db, &workload, &out, indexes.as_deref(), weights.as_deref(), wall_clock, args)
        }
        Command::Train { samples, holdout, validation, model_config, out, card_mode } => {
            train_cmd(&samples, &holdout, validation.as_deref(), &model_config, &out, card_mode, args)
        }
        Command::Finetune { checkpoint, samples, out, epochs, card_mode } => {
            finetune_cmd(&checkpoint, &samples, &out, epochs, card_mode, args)
        }
        Command::Predict { checkpoint, db, query, hypothetical_index, card_mode, weights } => {
            predict_cmd(&checkpoint, &db, &query, hypothetical_index.as_deref(), card_mode, weights.as_deref())
        }
        Command::Evaluate { checkpoint, samples, out, card_mode } => evaluate_cmd(&checkpoint, &samples, &out, card_mode, args),
        Command::Experiment { spec, out, index_mode } => experiment_cmd(&spec, &out, index_mode, args),
    }
}

fn gen_data(config: &Path, out: &Path, seed: u64, args: Vec<String>) -> Result<()> {
    let cfg: DataConfig = read_versioned(config)?;
    cfg.generator.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = RunManifest::new("gen-data", args);
    manifest.seeds.insert("seed".into(), seed);
    manifest.input(config)?;
    manifest.write(&out.join(MANIFEST_FILE))?;

    let db = generate_database(&cfg.name, &cfg.generator, seed).context("stage generate")?;
    let catalog = compute_statistics(&db, cfg.histogram_buckets);
    save_database(&db, out)?;
    save_catalog(&catalog, &out.join(CATALOG_FILE))?;
    let rows: usize = db.tables.iter().map(|t| t.row_count).sum();
    println!("{}: {} tables, {rows} rows", db.name, db.tables.len());
    manifest.finish(out, &[out.to_path_buf()])?;
    manifest.write(&out.join(MANIFEST_FILE))
}

fn gen_workload(db_dir: &Path, config: &Path, out: &Path, seed: u64, args: Vec<String>) -> Result<()> {
    let mut cfg: WorkloadConfig = read_versioned(config)?;
    cfg.seed = seed;
    let (db, catalog) = load_db(db_dir)?;
    create_parent(out)?;
    let mut manifest = RunManifest::new("gen-workload", args);
    manifest.seeds.insert("seed".into(), seed);
    manifest.input(config)?;
    manifest.write(&sidecar(out))?;

    let workload = generate_workload(&db, &catalog, &cfg).context("stage workload")?;
    for w in &workload.warnings {
        log::warn!("{w}");
    }
    write_workload(out, &workload.queries)?;
    println!("{} queries for {}", workload.queries.len(), db.name);
    manifest.finish(&parent_of(out), &[out.to_path_buf()])?;
    manifest.write(&sidecar(out))
}

fn run_workload(
    db_dir: &Path,
    workload: &Path,
    out: &Path,
    indexes: Option<&Path>,
    weights: Option<&Path>,
    wall_clock: bool,
    args: Vec<String>,
) -> Result<()> {
    let (mut db, catalog) = load_db(db_dir)?;
    create_parent(out)?;
    let mut manifest = RunManifest::new("run-workload", args);
    manifest.input(workload)?;
    let weights = load_weights(weights, &mut manifest)?;
    if let Some(path) = indexes {
        manifest.input(path)?;
        let file: IndexFile = read_versioned(path)?;
        for def in &file.indexes {
            db.build_index(def).with_context(|| format!("building index {}.{}", def.table, def.column))?;
        }
    }
    manifest.write(&sidecar(out))?;

    let queries = read_workload(workload)?;
    let defs = db.index_defs();
    let records = queries
        .par_iter()
        .map(|q| {
            let mut p = plan(q, &catalog, &defs)?;
            let r = execute_with(&p, &db, &weights, wall_clock)?;
            annotate_actuals(&mut p, &r)?;
            Ok(SampleRecord {
                query_id: q.id.to_string(),
                database: db.name.clone(),
                plan: p,
                cost_units: r.cost_units,
                values: r.values,
                wall_time_ms: r.wall_time_ms,
            })
        })
        .collect::<zsc_core::Result<Vec<_>>>()
        .context("stage execute")?;
    let header = SampleFileHeader { format: SAMPLE_FORMAT.into(), database: db.name.clone(), weights, catalog };
    write_samples(out, &header, &records)?;
    println!("{} queries executed on {}", records.len(), db.name);
    manifest.finish(&parent_of(out), &[out.to_path_buf()])?;
    manifest.write(&sidecar(out))
}

fn train_cmd(
    files: &[PathBuf],
    holdout: &str,
    validation: Option<&str>,
    model_config: &Path,
    out: &Path,
    mode: CardMode,
    args: Vec<String>,
) -> Result<()> {
    let cfg: ModelConfig = read_versioned(model_config)?;
    cfg.validate()?;
    create_parent(out)?;
    let mut manifest = RunManifest::new("train", args);
    manifest.seeds.insert("model".into(), cfg.seed);
    manifest.input(model_config)?;
    for f in files {
        manifest.input(f)?;
    }
    manifest.write(&sidecar(out))?;

    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    for f in files {
        let (header, samples, _) = load_sample_file(f, mode)?;
        if header.database == holdout || samples.iter().any(|s| s.database == holdout) {
            bail!("leak guard: {} holds samples of the held-out database `{holdout}`", f.display());
        }
        if Some(header.database.as_str()) == validation {
            val_set.extend(samples);
        } else {
            train_set.extend(samples);
        }
    }
    let (model, history) = train(&train_set, &val_set, &cfg).context("stage train")?;
    model.save(out)?;
    println!(
        "trained on {} samples for {} epochs (best epoch {:?})",
        train_set.len(),
        history.epochs.len(),
        history.best_epoch
    );
    manifest.finish(&parent_of(out), &[out.to_path_buf()])?;
    manifest.write(&sidecar(out))
}

fn finetune_cmd(checkpoint: &Path, samples: &Path, out: &Path, epochs: usize, mode: CardMode, args: Vec<String>) -> Result<()> {
    let model = CostModel::load(checkpoint)?;
    create_parent(out)?;
    let mut manifest = RunManifest::new("finetune", args);
    manifest.seeds.insert("model".into(), model.config.seed);
    manifest.input(checkpoint)?;
    manifest.input(samples)?;
    manifest.write(&sidecar(out))?;

    let (_, set, _) = load_sample_file(samples, mode)?;
    let (tuned, history) = finetune(&model, &set, epochs).context("stage finetune")?;
    tuned.save(out)?;
    println!("fine-tuned on {} samples for {} epochs", set.len(), history.epochs.len());
    manifest.finish(&parent_of(out), &[out.to_path_buf()])?;
    manifest.write(&sidecar(out))
}

#[derive(Serialize)]
struct Prediction {
    query_id: u64,
    predicted_cost: f64,
    actual_cost: f64,
    qerror: f64,
    uses_index: bool,
}

fn parse_index(text: &str) -> Result<IndexDef> {
    match text.split_once('.') {
        Some((t, c)) if !t.is_empty() && !c.is_empty() => Ok(IndexDef::new(t, c)),
        _ => bail!("hypothetical index must look like table.column, got `{text}`"),
    }
}

fn predict_cmd(
    checkpoint: &Path,
    db_dir: &Path,
    query: &Path,
    hypothetical: Option<&str>,
    mode: CardMode,
    weights: Option<&Path>,
) -> Result<()> {
    let model = CostModel::load(checkpoint)?;
    let (db, catalog) = load_db(db_dir)?;
    let weights = load_weights(weights, &mut RunManifest::new("predict", Vec::new()))?;
    let queries = read_workload(query)?;
    let existing = db.index_defs();
    let hypothetical = hypothetical.map(parse_index).transpose()?;
    // ground truth runs against a copy that has the index built
    let mut truth_db = db.clone();
    let mut truth_defs = existing.clone();
    if let Some(def) = &hypothetical {
        catalog.column(&def.table, &def.column)?;
        truth_db.build_index(def)?;
        truth_defs.push(def.clone());
    }
    for q in &queries {
        let mut p = match &hypothetical {
            Some(def) => hypothetical_plan(q, &catalog, &existing, std::slice::from_ref(def))?,
            None => plan(q, &catalog, &existing)?,
        };
        let real = plan(q, &catalog, &truth_defs)?;
        let truth = execute(&real, &truth_db, &weights)?;
        annotate_actuals(&mut p, &truth)?;
        let g = encode(&p, &catalog, mode)?;
        let sample = Sample::new(&g, truth.cost_units, &db.name, q.id)?;
        let predicted = predictions(&model, std::slice::from_ref(&sample))?[0];
        let row = Prediction {
            query_id: q.id,
            predicted_cost: predicted - 1.0,
            actual_cost: truth.cost_units,
            qerror: qerror(predicted, truth.cost_units + 1.0)?,
            uses_index: !p.used_indexes().is_empty(),
        };
        println!("{}", serde_json::to_string(&row)?);
    }
    Ok(())
}

fn evaluate_cmd(checkpoint: &Path, samples: &Path, out: &Path, mode: CardMode, args: Vec<String>) -> Result<()> {
    let model = CostModel::load(checkpoint)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = RunManifest::new("evaluate", args);
    manifest.input(checkpoint)?;
    manifest.input(samples)?;
    manifest.write(&out.join(MANIFEST_FILE))?;

    let (_, set, records) = load_sample_file(samples, mode)?;
    let metrics = evaluate(&model, &set).context("stage evaluate")?;
    let predicted = predictions(&model, &set)?;
    let mut csv = String::from("query_id,actual_cost,predicted_cost,qerror\n");
    for ((r, s), p) in records.iter().zip(&set).zip(&predicted) {
        csv.push_str(&format!("{},{},{},{}\n", r.query_id, s.cost, p - 1.0, qerror(*p, s.cost + 1.0)?));
    }
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    std::fs::write(out.join("predictions.csv"), csv)?;
    println!("{}", metrics.table_row(&mode.to_string()));
    manifest.finish(out, &[out.to_path_buf()])?;
    manifest.write(&out.join(MANIFEST_FILE))
}

fn experiment_cmd(spec_path: &Path, out: &Path, index_mode: bool, args: Vec<String>) -> Result<()> {
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = ExperimentSpec::from_json(&text)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = RunManifest::new("experiment", args);
    manifest.seeds.insert("spec".into(), spec.seed);
    manifest.seeds.insert("model".into(), spec.model.seed);
    for d in &spec.databases {
        manifest.seeds.insert(format!("database/{}", d.name), d.seed);
    }
    manifest.weights = Some(spec.weights.clone());
    manifest.input(spec_path)?;
    manifest.write(&out.join(MANIFEST_FILE))?;

    let report = if index_mode || spec.index_mode {
        run_index_experiment(&spec, Some(out))?
    } else {
        run_experiment(&spec, Some(out))?
    };
    for r in &report.zero_shot {
        println!("{}", r.metrics.table_row(&format!("{} {}", report.holdout, r.mode)));
    }
    if let Some(ix) = &report.index {
        for r in &ix.modes {
            println!("{}", r.metrics.table_row(&format!("index {}", r.mode)));
        }
    }
    manifest.finish(out, &[out.to_path_buf()])?;
    manifest.write(&out.join(MANIFEST_FILE))
}
