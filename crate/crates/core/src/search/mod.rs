//! Depth-first refinement of a plan skeleton over sampled values.
//!
//! [`backtrack_solve`] is plain chronological backtracking over fixed per-level
//! batches. [`backjump_batch`] and [`backjump_forget`] share one iterative
//! engine that asks a [`BackjumpHeuristic`] where to resume after every dead
//! end; they differ in whether a level keeps its batch for the whole epoch or
//! redraws on every arrival.
//!
//! `nodes_visited` counts feasibility checks made by the search itself. The
//! budget is checked immediately before each check, node limit first, so runs
//! with only a node limit are fully deterministic.

mod backtrack;
mod engine;
mod heuristic;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::problem::{ContinuousValue, ObjectSpec, PartialPlan, PlanSkeleton, Pose2, Problem, ValueTag};

pub use backtrack::backtrack_solve;
pub use engine::{backjump_batch, backjump_forget};
pub use heuristic::{fixed_step_heuristic, root_heuristic, BackjumpHeuristic, DeadEnd, FixedStep, HeuristicSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_nodes: Option<u64>,
    pub time_limit_ms: Option<u64>,
    /// Values drawn per level (`N`).
    pub n_per_level: usize,
    /// Stop with [`Outcome::Exhausted`] once this many epochs have been used up.
    #[serde(default)]
    pub max_epochs: Option<u64>,
}

impl SearchBudget {
    pub fn nodes(max_nodes: u64, n_per_level: usize) -> Self {
        Self { max_nodes: Some(max_nodes), time_limit_ms: None, n_per_level, max_epochs: None }
    }

    pub fn with_max_epochs(mut self, epochs: u64) -> Self {
        self.max_epochs = Some(epochs);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_level == 0 {
            return input("n_per_level must be at least 1");
        }
        if self.max_nodes.is_none() && self.time_limit_ms.is_none() {
            return input("budget needs a node limit or a time limit");
        }
        Ok(())
    }

    pub fn time_limit(&self) -> Option<Duration> {
        self.time_limit_ms.map(Duration::from_millis)
    }
}

/// Which sampling regime produced a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// One batch per level for a whole epoch.
    Batch,
    /// A fresh batch on every arrival at a level.
    Forget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "plan", rename_all = "snake_case")]
pub enum Outcome {
    Solved(Vec<ContinuousValue>),
    Exhausted,
    BudgetExceeded,
}

impl Outcome {
    pub fn is_solved(&self) -> bool {
        matches!(self, Outcome::Solved(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Solved(_) => "solved",
            Outcome::Exhausted => "exhausted",
            Outcome::BudgetExceeded => "budget_exceeded",
        }
    }
}

/// A level at which every value of a freshly entered batch was inconsistent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeadEndRecord {
    pub dead_end_level: usize,
    /// Object poses `s̄_1 .. s̄_{k_d}` along the current prefix.
    pub state_trajectory: Vec<Vec<Pose2>>,
    /// Tags of `c_0 .. c_{k_d - 1}`.
    pub value_tags: Vec<ValueTag>,
    /// The object whose placement failed at the dead end.
    pub dead_end_object: ObjectSpec,
    /// Epoch of the dead-end level's batch.
    pub batch_epoch: u64,
    /// Prefix tags at the first consistent value found at the dead-end level
    /// afterwards; `None` if the epoch ended or the search stopped first.
    pub recovery: Option<Vec<ValueTag>>,
    /// The level the search resumed at, for solvers that jump.
    pub jump: Option<usize>,
    /// Feasibility checks made before the dead end was detected.
    pub nodes_before: u64,
}

/// One feasibility check, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub level: usize,
    pub tag: ValueTag,
    pub feasible: bool,
}

/// A state reached by the search. Depth-0 nodes are epoch roots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub depth: usize,
    pub parent: Option<usize>,
    pub epoch: u64,
    pub poses: Vec<Pose2>,
    /// Every child value was tried and every child subtree finished.
    pub complete: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub visits: Vec<Visit>,
    pub tree: Vec<TreeNode>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceOptions {
    pub visits: bool,
    pub tree: bool,
}

impl TraceOptions {
    pub const NONE: Self = Self { visits: false, tree: false };
    pub const ALL: Self = Self { visits: true, tree: true };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub outcome: Outcome,
    pub nodes_visited: u64,
    pub dead_ends: Vec<DeadEndRecord>,
    pub restarts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<SearchTrace>,
}

/// Serialized summary of one solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem_id: u64,
    pub algorithm: String,
    pub heuristic: String,
    pub seed: u64,
    pub outcome: String,
    pub nodes_visited: u64,
    pub restarts: u64,
    pub dead_end_count: usize,
    pub wall_ms: u64,
}

impl SearchResult {
    pub fn row(&self, problem_id: u64, algorithm: &str, heuristic: &str, seed: u64, wall_ms: u64) -> ResultRow {
        ResultRow {
            problem_id,
            algorithm: algorithm.into(),
            heuristic: heuristic.into(),
            seed,
            outcome: self.outcome.label().into(),
            nodes_visited: self.nodes_visited,
            restarts: self.restarts,
            dead_end_count: self.dead_ends.len(),
            wall_ms,
        }
    }
}

pub(crate) enum Stop {
    Budget,
}

/// Node and time accounting shared by the solvers.
pub(crate) struct Meter {
    max_nodes: Option<u64>,
    deadline: Option<Instant>,
    pub nodes: u64,
}

impl Meter {
    pub fn new(budget: &SearchBudget) -> Self {
        Self { max_nodes: budget.max_nodes, deadline: budget.time_limit().map(|d| Instant::now() + d), nodes: 0 }
    }

    /// Call immediately before a feasibility check.
    pub fn charge(&mut self) -> std::result::Result<(), Stop> {
        if self.max_nodes.is_some_and(|m| self.nodes >= m) {
            return Err(Stop::Budget);
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Stop::Budget);
        }
        self.nodes += 1;
        Ok(())
    }
}

/// Dead ends awaiting their first recovery.
#[derive(Default)]
pub(crate) struct DeadEndBook {
    pub records: Vec<DeadEndRecord>,
    pending: Vec<usize>,
}

impl DeadEndBook {
    pub fn record(&mut self, plan: &PartialPlan, skeleton: &PlanSkeleton, problem: &Problem, epoch: u64, nodes: u64) -> usize {
        let k_d = plan.depth();
        let rec = DeadEndRecord {
            dead_end_level: k_d,
            state_trajectory: plan.states()[1..].iter().map(|s| s.object_poses.clone()).collect(),
            value_tags: plan.tags(),
            dead_end_object: *problem.object(skeleton.object_at(k_d)),
            batch_epoch: epoch,
            recovery: None,
            jump: None,
            nodes_before: nodes,
        };
        self.records.push(rec);
        self.pending.push(self.records.len() - 1);
        self.records.len() - 1
    }

    /// A consistent value was just found at `level` under `plan`'s prefix.
    pub fn consistent_at(&mut self, level: usize, plan: &PartialPlan) {
        if self.pending.is_empty() {
            return;
        }
        let records = &mut self.records;
        self.pending.retain(|&i| {
            if records[i].dead_end_level == level {
                records[i].recovery = Some(plan.tags());
                false
            } else {
                true
            }
        });
    }

    pub fn end_epoch(&mut self) {
        self.pending.clear();
    }
}
