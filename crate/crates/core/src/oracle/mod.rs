//! Ground truth for backjumping: safe-jump sets by exhaustive enumeration,
//! imitation labels from trajectory divergence, and plan-feasibility labels
//! from how far each subtree of a backtracking run reached.
//!
//! Within an epoch backtracking visits prefixes in a fixed order, so once a
//! dead end is hit at level `k_d`, the part of the tree still ahead of the
//! search is known exactly: for each level `i < k_d`, the untried siblings of
//! the current `c_i` and everything below them. A jump to level `k` skips the
//! untried part of the subtree under `c_0 .. c_k`; it is safe iff nothing in
//! that part reaches a consistent value at level `k_d`.

mod labels;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::problem::{apply_transition, check_feasible, ContinuousValue, PartialPlan, PlanSkeleton, Problem, WorldState};
use crate::sampling::{mix, sample_values, StreamKey};
use crate::search::{BackjumpHeuristic, DeadEnd};

pub use labels::{il_label_from_trace, pf_labels_from_tree, ILLabel, IlRow, PFLabel, PfRow};

/// Levels a dead end at `dead_end_level` can safely jump to, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeJumpSet {
    pub dead_end_level: usize,
    pub members: Vec<usize>,
}

impl SafeJumpSet {
    /// The maximum jump `k* = min K`.
    pub fn k_star(&self) -> usize {
        self.members[0]
    }

    pub fn contains(&self, k: usize) -> bool {
        self.members.binary_search(&k).is_ok()
    }

    /// `k_d - 1` is a member and membership is closed upwards.
    pub fn is_well_formed(&self) -> bool {
        let k_d = self.dead_end_level;
        k_d >= 1
            && !self.members.is_empty()
            && self.members.iter().copied().eq(self.members[0]..k_d)
    }
}

/// Can some path below `state` at `level` reach a consistent value at `k_d`?
fn reaches(problem: &Problem, skeleton: &PlanSkeleton, batches: &[Vec<ContinuousValue>], state: &WorldState, level: usize, k_d: usize) -> Result<bool> {
    let op = &skeleton.steps[level];
    for v in &batches[level] {
        if !check_feasible(state, op, v, problem)? {
            continue;
        }
        if level == k_d {
            return Ok(true);
        }
        let next = apply_transition(state, op, v, problem);
        if reaches(problem, skeleton, batches, &next, level + 1, k_d)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Does an untried sibling of `c_i` lead to a consistent value at `k_d`?
fn later_sibling_reaches(
    problem: &Problem,
    skeleton: &PlanSkeleton,
    batches: &[Vec<ContinuousValue>],
    plan: &PartialPlan,
    i: usize,
    k_d: usize,
) -> Result<bool> {
    let current = plan.assigned()[i].sample_id;
    let state = plan.state_at(i);
    let op = &skeleton.steps[i];
    for v in batches[i].iter().filter(|v| v.sample_id > current) {
        if !check_feasible(state, op, v, problem)? {
            continue;
        }
        let next = apply_transition(state, op, v, problem);
        if reaches(problem, skeleton, batches, &next, i + 1, k_d)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Exhaustive safe-jump set for a certified dead end in the batch regime.
///
/// `plan` holds `c_0 .. c_{k_d - 1}` and every value in `batches[k_d]` must be
/// inconsistent with it. Cost grows as `N^(k_d - k + 1)` per level examined.
pub fn safe_jump_set(
    problem: &Problem,
    skeleton: &PlanSkeleton,
    batches: &[Vec<ContinuousValue>],
    plan: &PartialPlan,
    k_d: usize,
) -> Result<SafeJumpSet> {
    if k_d == 0 || plan.depth() != k_d || k_d >= skeleton.len() || batches.len() < skeleton.len() {
        return input(format!("not a dead end: level {k_d} with a plan of depth {}", plan.depth()));
    }
    let op = &skeleton.steps[k_d];
    for v in &batches[k_d] {
        if check_feasible(plan.state(), op, v, problem)? {
            return input(format!("level {k_d} has a consistent value {}; not a dead end", v.sample_id));
        }
    }
    let mut lowest = 0;
    for i in (0..k_d).rev() {
        if later_sibling_reaches(problem, skeleton, batches, plan, i, k_d)? {
            lowest = i;
            break;
        }
    }
    Ok(SafeJumpSet { dead_end_level: k_d, members: (lowest..k_d).collect() })
}

/// Jumps to `min K`.
///
/// In the batch regime this is exact. Under forgetting there is no fixed
/// remainder to enumerate; the oracle then probes each prefix with its own
/// batches of `probe_n` values per level (at most `probe_cap` checks per
/// prefix) and keeps `c_j` fixed as long as no extension to `k_d` is found.
/// Probe checks are not charged to the search.
#[derive(Clone, Copy, Debug)]
pub struct OracleHeuristic {
    pub probe_n: usize,
    pub probe_cap: u64,
}

impl Default for OracleHeuristic {
    fn default() -> Self {
        Self { probe_n: 8, probe_cap: 4000 }
    }
}

struct Probe<'a> {
    problem: &'a Problem,
    skeleton: &'a PlanSkeleton,
    batches: Vec<Vec<ContinuousValue>>,
    left: u64,
}

impl Probe<'_> {
    fn reaches(&mut self, state: &WorldState, level: usize, k_d: usize) -> Result<bool> {
        let op = self.skeleton.steps[level];
        for i in 0..self.batches[level].len() {
            if self.left == 0 {
                return Ok(false);
            }
            self.left -= 1;
            let v = self.batches[level][i];
            if !check_feasible(state, &op, &v, self.problem)? {
                continue;
            }
            if level == k_d {
                return Ok(true);
            }
            let next = apply_transition(state, &op, &v, self.problem);
            if self.reaches(&next, level + 1, k_d)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl OracleHeuristic {
    fn probe(&self, d: &DeadEnd<'_>) -> Result<usize> {
        let k_d = d.record.dead_end_level;
        let key = StreamKey::new(mix(&[d.seed, 0x0bac_1e, d.record.nodes_before]), 0);
        let batches: Vec<_> = (0..=k_d)
            .map(|level| sample_values(d.problem, d.skeleton, level, self.probe_n, key))
            .collect();
        let mut probe = Probe { problem: d.problem, skeleton: d.skeleton, batches, left: 0 };
        // Holding c_0..c_j, is there still a way to k_d?
        for j in (0..k_d - 1).rev() {
            probe.left = self.probe_cap;
            if probe.reaches(d.plan.state_at(j + 1), j + 1, k_d)? {
                return Ok(j + 1);
            }
        }
        Ok(0)
    }
}

impl BackjumpHeuristic for OracleHeuristic {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, d: &DeadEnd<'_>) -> Result<usize> {
        match d.batches {
            Some(batches) => Ok(safe_jump_set(d.problem, d.skeleton, batches, d.plan, d.record.dead_end_level)?.k_star()),
            None => self.probe(d),
        }
    }
}
