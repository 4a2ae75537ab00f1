use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::problem::{ContinuousValue, PartialPlan, PlanSkeleton, Problem};
use crate::search::{DeadEndRecord, Regime};

/// Everything a heuristic may look at when a dead end is hit.
pub struct DeadEnd<'a> {
    pub record: &'a DeadEndRecord,
    /// The prefix `c_0 .. c_{k_d - 1}` in force at the dead end.
    pub plan: &'a PartialPlan,
    pub problem: &'a Problem,
    pub skeleton: &'a PlanSkeleton,
    pub regime: Regime,
    /// The current epoch's per-level batches (batch regime only).
    pub batches: Option<&'a [Vec<ContinuousValue>]>,
    pub seed: u64,
    pub n_per_level: usize,
}

/// Picks the level to resume at after a dead end at level `k_d`.
///
/// Implementations must return a level in `0..k_d`; the solvers reject
/// anything else with a contract error.
pub trait BackjumpHeuristic {
    fn name(&self) -> String;
    fn predict(&self, dead_end: &DeadEnd<'_>) -> Result<usize>;
}

/// Jump back a fixed number of levels, clamped at the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedStep {
    pub steps: usize,
}

pub fn fixed_step_heuristic(steps: usize) -> Result<FixedStep> {
    if steps == 0 {
        return input("fixed-step heuristic needs at least one step");
    }
    Ok(FixedStep { steps })
}

/// Always resume at level 0.
pub fn root_heuristic() -> FixedStep {
    FixedStep { steps: usize::MAX }
}

impl FixedStep {
    pub fn jump(&self, k_d: usize) -> usize {
        k_d.saturating_sub(self.steps)
    }
}

impl BackjumpHeuristic for FixedStep {
    fn name(&self) -> String {
        if self.steps == usize::MAX {
            "root".into()
        } else {
            format!("fixed{}", self.steps)
        }
    }

    fn predict(&self, d: &DeadEnd<'_>) -> Result<usize> {
        Ok(self.jump(d.record.dead_end_level))
    }
}

/// Textual heuristic selector used by configs and the CLI:
/// `fixed<j>`, `root`, `oracle`, `il`, `pf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum HeuristicSpec {
    Fixed(usize),
    Root,
    Oracle,
    Il,
    Pf,
}

impl fmt::Display for HeuristicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeuristicSpec::Fixed(j) => write!(f, "fixed{j}"),
            HeuristicSpec::Root => f.write_str("root"),
            HeuristicSpec::Oracle => f.write_str("oracle"),
            HeuristicSpec::Il => f.write_str("il"),
            HeuristicSpec::Pf => f.write_str("pf"),
        }
    }
}

impl FromStr for HeuristicSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "root" | "inf" => HeuristicSpec::Root,
            "oracle" => HeuristicSpec::Oracle,
            "il" => HeuristicSpec::Il,
            "pf" => HeuristicSpec::Pf,
            "backtrack" => HeuristicSpec::Fixed(1),
            _ => {
                let j = s
                    .strip_prefix("fixed")
                    .and_then(|j| j.trim_start_matches(['(', ':']).trim_end_matches(')').parse::<usize>().ok())
                    .ok_or_else(|| Error::Input(format!("unknown heuristic `{s}`")))?;
                fixed_step_heuristic(j)?;
                HeuristicSpec::Fixed(j)
            }
        })
    }
}

impl TryFrom<String> for HeuristicSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<HeuristicSpec> for String {
    fn from(h: HeuristicSpec) -> String {
        h.to_string()
    }
}
