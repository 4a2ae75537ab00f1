//! Experiment plumbing: configuration, problem sets, solver sweeps, summary
//! statistics, dataset collection, prediction metrics, and the run-directory
//! commands behind the CLI.

mod collect;
mod eval;
pub mod run;
mod stats;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domains::{gen_problem_with, GenConfig};
use crate::error::{Error, Result};
use crate::learn::{Aggregator, Head, HeuristicParams, IlHeuristic, ModelConfig, PfHeuristic, TrainConfig};
use crate::oracle::OracleHeuristic;
use crate::problem::{ground_skeleton, DomainKind, ObjectKind, Problem};
use crate::sampling::mix;
use crate::search::{
    backjump_batch, backjump_forget, backtrack_solve, fixed_step_heuristic, root_heuristic, BackjumpHeuristic,
    HeuristicSpec, SearchBudget, SearchResult, TraceOptions,
};

pub use collect::{collect_dataset, CollectConfig, Collected};
pub use eval::{
    evaluate_predictions, false_negative_study, FnRow, OutcomeClass, PredictionOutcome, PredictionReport, RowPredictor,
};
pub use stats::{mean, t_interval};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Chronological backtracking over fixed batches.
    Backtrack,
    /// Backjumping with batches fixed per epoch.
    Batch,
    /// Backjumping that redraws a level's values whenever it is re-entered.
    Forget,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Backtrack => "backtrack",
            Algorithm::Batch => "batch",
            Algorithm::Forget => "forget",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backtrack" => Ok(Algorithm::Backtrack),
            "batch" => Ok(Algorithm::Batch),
            "forget" => Ok(Algorithm::Forget),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

/// Shape of the learned models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub preset: Preset,
    pub aggregator: Aggregator,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { preset: Preset::Desk, aggregator: Aggregator::Rnn }
    }
}

impl ModelSpec {
    pub fn config(&self, head: Head) -> ModelConfig {
        let mut c = match self.preset {
            Preset::Desk => ModelConfig::desk(head),
            Preset::Paper => ModelConfig::paper(head),
        };
        c.aggregator = self.aggregator;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domain: DomainKind,
    pub n_objects: usize,
    pub n_problems_train: usize,
    pub n_problems_test: usize,
    /// Samples per level.
    pub n_per_level: usize,
    pub algorithm: Algorithm,
    pub heuristic: HeuristicSpec,
    pub seed: u64,
    pub max_nodes: Option<u64>,
    pub time_limit_ms: Option<u64>,
    pub max_epochs: Option<u64>,
    /// Learned model; defaults to `model_<head>.json` in the run directory.
    pub model_path: Option<PathBuf>,
    pub generator: GenConfig,
    pub collect: CollectConfig,
    pub train: TrainConfig,
    pub model: ModelSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainKind::Packing,
            n_objects: 6,
            n_problems_train: 500,
            n_problems_test: 100,
            n_per_level: 30,
            algorithm: Algorithm::Forget,
            heuristic: HeuristicSpec::Fixed(1),
            seed: 0,
            max_nodes: Some(100_000),
            time_limit_ms: None,
            max_epochs: None,
            model_path: None,
            generator: GenConfig::default(),
            collect: CollectConfig::default(),
            train: TrainConfig::default(),
            model: ModelSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 {
            return Err(Error::Config("n_objects must be positive".into()));
        }
        if self.algorithm == Algorithm::Backtrack && self.heuristic != HeuristicSpec::Fixed(1) {
            return Err(Error::Config("backtracking takes no heuristic; use fixed1".into()));
        }
        self.budget().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()
    }

    pub fn budget(&self) -> SearchBudget {
        SearchBudget {
            max_nodes: self.max_nodes,
            time_limit_ms: self.time_limit_ms,
            n_per_level: self.n_per_level,
            max_epochs: self.max_epochs,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Training (`train = true`) or test problem set for this configuration.
    pub fn problems(&self, train: bool) -> Result<Vec<Problem>> {
        let (tag, count) = if train { (0x7a, self.n_problems_train) } else { (0x7e, self.n_problems_test) };
        (0..count)
            .map(|i| {
                let seed = mix(&[self.seed, tag, self.n_objects as u64, i as u64]);
                gen_problem_with(&self.generator, self.domain, self.n_objects, seed, i as u64)
            })
            .collect()
    }

    /// Search seed for one problem.
    pub fn search_seed(&self, problem: &Problem) -> u64 {
        mix(&[self.seed, problem.id, problem.seed])
    }
}

/// Object count a problem was generated with: every movable object in
/// packing, the blockers in NAMO.
pub fn object_count(p: &Problem) -> usize {
    p.movable().iter().filter(|o| o.kind == ObjectKind::Movable).count()
}

/// One solver run, with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub problem_id: u64,
    pub domain: DomainKind,
    pub n_objects: usize,
    pub algorithm: Algorithm,
    pub heuristic: String,
    /// Experiment seed the search seed was derived from.
    pub config_seed: u64,
    /// Search seed of this run.
    pub seed: u64,
    pub config_hash: String,
    pub outcome: String,
    pub nodes_visited: u64,
    pub restarts: u64,
    pub dead_end_count: usize,
    pub wall_ms: u64,
}

/// Builds the heuristic named by `spec`; learned heuristics need `model`.
pub fn make_heuristic(spec: HeuristicSpec, model: Option<HeuristicParams>) -> Result<Box<dyn BackjumpHeuristic>> {
    Ok(match spec {
        HeuristicSpec::Fixed(j) => Box::new(fixed_step_heuristic(j).map_err(|e| Error::Config(e.to_string()))?),
        HeuristicSpec::Root => Box::new(root_heuristic()),
        HeuristicSpec::Oracle => Box::new(OracleHeuristic::default()),
        HeuristicSpec::Il | HeuristicSpec::Pf => {
            let params = model.ok_or_else(|| Error::Config(format!("heuristic `{spec}` needs a trained model")))?;
            if spec == HeuristicSpec::Il {
                Box::new(IlHeuristic::new(params)?)
            } else {
                Box::new(PfHeuristic::new(params)?)
            }
        }
    })
}

pub fn solve(
    problem: &Problem,
    algorithm: Algorithm,
    heuristic: &dyn BackjumpHeuristic,
    budget: &SearchBudget,
    seed: u64,
) -> Result<SearchResult> {
    let skeleton = ground_skeleton(problem);
    match algorithm {
        Algorithm::Backtrack => backtrack_solve(problem, &skeleton, budget, seed, TraceOptions::NONE),
        Algorithm::Batch => backjump_batch(problem, &skeleton, budget, heuristic, seed, TraceOptions::NONE),
        Algorithm::Forget => backjump_forget(problem, &skeleton, budget, heuristic, seed, TraceOptions::NONE),
    }
}

/// Solves every problem with the configured algorithm; rows sorted by problem id.
pub fn run_experiment(cfg: &ExperimentConfig, problems: &[Problem], heuristic: &dyn BackjumpHeuristic) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let budget = cfg.budget();
    let hash = cfg.hash();
    let name = if cfg.algorithm == Algorithm::Backtrack { "backtrack".to_string() } else { heuristic.name() };
    let mut rows = Vec::with_capacity(problems.len());
    for p in problems {
        let seed = cfg.search_seed(p);
        let start = Instant::now();
        let r = solve(p, cfg.algorithm, heuristic, &budget, seed)?;
        let wall_ms = start.elapsed().as_millis() as u64;
        log::debug!("problem {}: {} after {} nodes", p.id, r.outcome.label(), r.nodes_visited);
        rows.push(ExperimentRow {
            problem_id: p.id,
            domain: p.domain,
            n_objects: object_count(p),
            algorithm: cfg.algorithm,
            heuristic: name.clone(),
            config_seed: cfg.seed,
            seed,
            config_hash: hash.clone(),
            outcome: r.outcome.label().into(),
            nodes_visited: r.nodes_visited,
            restarts: r.restarts,
            dead_end_count: r.dead_ends.len(),
            wall_ms,
        });
    }
    rows.sort_by_key(|r| r.problem_id);
    Ok(rows)
}

/// Aggregate of one (domain, object count, algorithm, heuristic) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub domain: DomainKind,
    pub n_objects: usize,
    pub algorithm: Algorithm,
    pub heuristic: String,
    pub n_problems: usize,
    pub solved: usize,
    pub mean_nodes: f64,
    pub ci_half_width: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_restarts: f64,
    pub seed: u64,
    pub config_hash: String,
    /// Lowest mean in its (domain, object count) group, or a confidence
    /// interval overlapping the lowest one.
    pub best_or_tied: bool,
}

/// Mean nodes with a 95% Student-t interval per group, ordered by group key.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize, String, String), Vec<&ExperimentRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.domain.to_string(), r.n_objects, r.algorithm.to_string(), r.heuristic.clone()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|g| {
            let nodes: Vec<f64> = g.iter().map(|r| r.nodes_visited as f64).collect();
            let (m, half) = t_interval(&nodes);
            let first = g[0];
            SummaryRow {
                domain: first.domain,
                n_objects: first.n_objects,
                algorithm: first.algorithm,
                heuristic: first.heuristic.clone(),
                n_problems: g.len(),
                solved: g.iter().filter(|r| r.outcome == "solved").count(),
                mean_nodes: m,
                ci_half_width: half,
                ci_low: m - half,
                ci_high: m + half,
                mean_restarts: mean(&g.iter().map(|r| r.restarts as f64).collect::<Vec<_>>()),
                seed: first.config_seed,
                config_hash: first.config_hash.clone(),
                best_or_tied: false,
            }
        })
        .collect();
    let keys: Vec<(DomainKind, usize)> = out.iter().map(|s| (s.domain, s.n_objects)).collect();
    for key in keys {
        let best_high = out
            .iter()
            .filter(|s| (s.domain, s.n_objects) == key)
            .min_by(|a, b| a.mean_nodes.total_cmp(&b.mean_nodes))
            .map(|s| s.ci_high)
            .unwrap_or(f64::INFINITY);
        for s in out.iter_mut().filter(|s| (s.domain, s.n_objects) == key) {
            s.best_or_tied = s.ci_low <= best_high;
        }
    }
    out
}
