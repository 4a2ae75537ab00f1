//! Run-directory commands. Each reads its inputs from and writes its outputs
//! to one directory; every output except the `wall_ms` field is a pure
//! function of the configuration.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::{
    collect_dataset, evaluate_predictions, false_negative_study, make_heuristic, object_count, run_experiment, summarize,
    ExperimentConfig, ExperimentRow, FnRow, PredictionReport, RowPredictor, SummaryRow,
};
use crate::learn::{train, Dataset, Head, HeuristicParams};
use crate::oracle::{IlRow, PfRow};
use crate::problem::{read_problems, write_problems, Problem};
use crate::search::HeuristicSpec;

pub const PROBLEMS: &str = "problems.jsonl";
pub const TRAIN_PROBLEMS: &str = "train_problems.jsonl";
pub const IL: &str = "il.jsonl";
pub const PF: &str = "pf.jsonl";
pub const RESULTS: &str = "results.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const MANIFEST: &str = "manifest.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const FNSTUDY: &str = "fnstudy.csv";

/// Overlays the keys of a TOML file on `base`; nested tables merge key by key.
pub fn apply_config_file(base: &ExperimentConfig, path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let file: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let toml::Value::Table(mut merged) =
        toml::Value::try_from(base).map_err(|e| Error::Config(format!("config does not serialize: {e}")))?
    else {
        unreachable!("a struct serializes to a table")
    };
    merge(&mut merged, file);
    toml::Value::Table(merged).try_into().map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Input(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Records one command's inputs and counts under `key` in `manifest.json`.
fn update_manifest(dir: &Path, key: &str, cfg: &ExperimentConfig, extra: Value) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut manifest: BTreeMap<String, Value> =
        if path.exists() { serde_json::from_str(&fs::read_to_string(&path)?)? } else { BTreeMap::new() };
    manifest.insert(
        key.into(),
        json!({
            "config": cfg,
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "outputs": extra,
        }),
    );
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Test problems of the configured domain and size, from `problems.jsonl`
/// if present there, generated (and added to the file) otherwise.
pub fn test_problems(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Problem>> {
    let path = dir.join(PROBLEMS);
    let existing = if path.exists() { read_problems(BufReader::new(File::open(&path)?))? } else { Vec::new() };
    let matching: Vec<Problem> = existing
        .iter()
        .filter(|p| p.domain == cfg.domain && object_count(p) == cfg.n_objects && (p.id as usize) < cfg.n_problems_test)
        .cloned()
        .collect();
    if matching.len() == cfg.n_problems_test {
        return Ok(matching);
    }
    let fresh = cfg.problems(false)?;
    let mut all: Vec<Problem> =
        existing.into_iter().filter(|p| !(p.domain == cfg.domain && object_count(p) == cfg.n_objects)).collect();
    all.extend(fresh.iter().cloned());
    all.sort_by_key(|p| (p.domain.to_string(), object_count(p), p.id));
    write_problems(BufWriter::new(File::create(&path)?), &all)?;
    Ok(fresh)
}

/// `gen`: writes the test problem set.
pub fn cmd_gen(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Problem>> {
    ensure_dir(dir)?;
    let problems = test_problems(cfg, dir)?;
    update_manifest(dir, &format!("gen:{}:{}", cfg.domain, cfg.n_objects), cfg, json!({ "problems": problems.len() }))?;
    Ok(problems)
}

/// `collect`: generates training problems and writes both label sets.
pub fn cmd_collect(cfg: &ExperimentConfig, dir: &Path) -> Result<(usize, usize)> {
    cfg.validate()?;
    ensure_dir(dir)?;
    let problems = cfg.problems(true)?;
    write_problems(BufWriter::new(File::create(dir.join(TRAIN_PROBLEMS))?), &problems)?;
    let c = collect_dataset(cfg, &problems)?;
    write_jsonl(&dir.join(IL), &c.il)?;
    write_jsonl(&dir.join(PF), &c.pf)?;
    update_manifest(
        dir,
        "collect",
        cfg,
        json!({
            "problems": problems.len(),
            "solved": c.solved,
            "dead_ends": c.dead_ends,
            "il_labels": c.il.len(),
            "pf_labels": c.pf.len(),
        }),
    )?;
    Ok((c.il.len(), c.pf.len()))
}

pub fn model_path(cfg: &ExperimentConfig, dir: &Path, head: Head) -> PathBuf {
    match (&cfg.model_path, head) {
        (Some(p), _) => p.clone(),
        (None, Head::Il) => dir.join("model_il.json"),
        (None, Head::Pf) => dir.join("model_pf.json"),
    }
}

/// `train`: fits one head on the collected labels.
pub fn cmd_train(cfg: &ExperimentConfig, dir: &Path, head: Head) -> Result<HeuristicParams> {
    cfg.validate()?;
    let data = match head {
        Head::Il => Dataset::from_il_rows(&read_jsonl::<IlRow>(&dir.join(IL))?)?,
        Head::Pf => Dataset::from_pf_rows(&read_jsonl::<PfRow>(&dir.join(PF))?)?,
    };
    let (params, report) = train(&data, &cfg.model.config(head), &cfg.train)?;
    let path = model_path(cfg, dir, head);
    fs::write(&path, params.to_json()?)?;
    let key = if head == Head::Il { "train:il" } else { "train:pf" };
    update_manifest(
        dir,
        key,
        cfg,
        json!({ "examples": data.len(), "epoch_losses": report.epoch_losses, "model": path.file_name().map(|f| f.to_string_lossy().into_owned()) }),
    )?;
    Ok(params)
}

pub fn load_model(cfg: &ExperimentConfig, dir: &Path, head: Head) -> Result<HeuristicParams> {
    let path = model_path(cfg, dir, head);
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
    HeuristicParams::from_json_expecting(&text, &cfg.model.config(head))
}

/// `solve`: runs the configured solver on the test set, merges the rows into
/// `results.jsonl`, and rewrites `summary.csv`.
pub fn cmd_solve(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    ensure_dir(dir)?;
    let model = match cfg.heuristic {
        HeuristicSpec::Il => Some(load_model(cfg, dir, Head::Il)?),
        HeuristicSpec::Pf => Some(load_model(cfg, dir, Head::Pf)?),
        _ => None,
    };
    let heuristic = make_heuristic(cfg.heuristic, model)?;
    let problems = test_problems(cfg, dir)?;
    let rows = run_experiment(cfg, &problems, heuristic.as_ref())?;

    let path = dir.join(RESULTS);
    let mut all: Vec<ExperimentRow> = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
    let same_group = |a: &ExperimentRow, b: &ExperimentRow| {
        (a.domain, a.n_objects, a.algorithm, &a.heuristic) == (b.domain, b.n_objects, b.algorithm, &b.heuristic)
    };
    all.retain(|r| !rows.iter().any(|n| same_group(r, n)));
    all.extend(rows.iter().cloned());
    all.sort_by(|a, b| {
        (a.domain.to_string(), a.n_objects, a.algorithm.to_string(), &a.heuristic, a.problem_id)
            .cmp(&(b.domain.to_string(), b.n_objects, b.algorithm.to_string(), &b.heuristic, b.problem_id))
    });
    write_jsonl(&path, &all)?;
    write_csv(&dir.join(SUMMARY), &summarize(&all))?;
    let solved = rows.iter().filter(|r| r.outcome == "solved").count();
    update_manifest(
        dir,
        &format!("solve:{}:{}:{}:{}", cfg.domain, cfg.n_objects, cfg.algorithm, heuristic.name()),
        cfg,
        json!({ "problems": rows.len(), "solved": solved }),
    )?;
    Ok(rows)
}

/// `eval`: prediction metrics of every available predictor on labeled dead ends.
pub fn cmd_eval(cfg: &ExperimentConfig, dir: &Path, labels: Option<&Path>) -> Result<Vec<PredictionReport>> {
    let label_path = labels.map_or_else(|| dir.join(IL), Path::to_path_buf);
    let rows: Vec<IlRow> = read_jsonl(&label_path)?;
    let il = load_model(cfg, dir, Head::Il).ok();
    let pf = load_model(cfg, dir, Head::Pf).ok();
    let mut predictors = vec![RowPredictor::Oracle, RowPredictor::Fixed(1)];
    if let Some(p) = &il {
        predictors.push(RowPredictor::Il(p));
    }
    if let Some(p) = &pf {
        predictors.push(RowPredictor::Pf(p));
    }
    let reports = predictors.iter().map(|p| evaluate_predictions(p, &rows)).collect::<Result<Vec<_>>>()?;
    write_csv(&dir.join(PREDICTIONS), &reports)?;
    update_manifest(dir, "eval", cfg, json!({ "labels": rows.len(), "predictors": reports.len() }))?;
    Ok(reports)
}

/// `fnstudy`: false-negative ratio per sample size.
pub fn cmd_fnstudy(cfg: &ExperimentConfig, dir: &Path, sizes: &[usize], trials: usize) -> Result<Vec<FnRow>> {
    ensure_dir(dir)?;
    let rows = false_negative_study(cfg, sizes, trials)?;
    write_csv(&dir.join(FNSTUDY), &rows)?;
    update_manifest(dir, "fnstudy", cfg, json!({ "sizes": sizes, "trials": trials }))?;
    Ok(rows)
}

/// `report`: recomputes `summary.csv` from `results.jsonl`.
pub fn cmd_report(dir: &Path) -> Result<Vec<SummaryRow>> {
    let rows: Vec<ExperimentRow> = read_jsonl(&dir.join(RESULTS))?;
    let summary = summarize(&rows);
    write_csv(&dir.join(SUMMARY), &summary)?;
    Ok(summary)
}

/// Plain-text table of a summary, best-or-tied rows marked with `*`.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<8} {:>3} {:<10} {:<8} {:>6} {:>12} {:>10}\n",
        "domain", "n", "algorithm", "jump", "solved", "mean nodes", "95% ci"
    );
    for r in rows {
        s += &format!(
            "{:<8} {:>3} {:<10} {:<8} {:>6} {:>11.1}{} {:>10.1}\n",
            r.domain.to_string(),
            r.n_objects,
            r.algorithm.to_string(),
            r.heuristic,
            format!("{}/{}", r.solved, r.n_problems),
            r.mean_nodes,
            if r.best_or_tied { "*" } else { " " },
            r.ci_half_width
        );
    }
    s
}
