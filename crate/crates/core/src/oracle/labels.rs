use serde::{Deserialize, Serialize};

use crate::error::{contract, input, Result};
use crate::problem::{ObjectSpec, PlanSkeleton, Pose2, Problem, ValueTag};
use crate::search::{DeadEndRecord, SearchTrace};

/// A dead end with its imitation target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ILLabel {
    pub record: DeadEndRecord,
    pub k_star: usize,
}

/// `k*` is the first level at which the recovering prefix differs from the
/// prefix in force at the dead end.
pub fn il_label_from_trace(dead_end: &DeadEndRecord, recovery: &[ValueTag]) -> Result<ILLabel> {
    let k_d = dead_end.dead_end_level;
    if recovery.len() != k_d || dead_end.value_tags.len() != k_d {
        return input(format!("recovery prefix has {} levels, dead end is at level {k_d}", recovery.len()));
    }
    match dead_end.value_tags.iter().zip(recovery).position(|(a, b)| a != b) {
        Some(k_star) => Ok(ILLabel { record: dead_end.clone(), k_star }),
        None => contract("recovery prefix is identical to the dead-end prefix"),
    }
}

/// One plan-feasibility example: from state `s_{k'}`, can the levels
/// `k' .. k'+len(future_objects)-1` all be refined consistently?
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PFLabel {
    pub epoch: u64,
    pub k_prime: usize,
    pub state: Vec<Pose2>,
    pub future_object_ids: Vec<usize>,
    pub feasible: bool,
}

/// Feasibility labels from a batch-regime backtracking tree.
///
/// For every node at depth `k'` in `1..K` and every horizon `k >= k'` the
/// label is 1 if the node's subtree reached depth `k + 1`, and 0 if the
/// subtree was searched to completion without doing so. Subtrees cut off by
/// the budget or by the solution contribute positives only.
pub fn pf_labels_from_tree(trace: &SearchTrace, skeleton: &PlanSkeleton) -> Vec<PFLabel> {
    let tree = &trace.tree;
    let mut reach: Vec<usize> = tree.iter().map(|n| n.depth).collect();
    for i in (0..tree.len()).rev() {
        if let Some(p) = tree[i].parent {
            reach[p] = reach[p].max(reach[i]);
        }
    }
    let k_max = skeleton.len();
    let mut out = Vec::new();
    for (node, &r) in tree.iter().zip(&reach) {
        let d = node.depth;
        if d == 0 || d >= k_max {
            continue;
        }
        for k in d..k_max {
            let feasible = r > k;
            if !feasible && !node.complete {
                break;
            }
            out.push(PFLabel {
                epoch: node.epoch,
                k_prime: d,
                state: node.poses.clone(),
                future_object_ids: (d..=k).map(|l| skeleton.object_at(l)).collect(),
                feasible,
            });
        }
    }
    out
}

/// Serialized imitation example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlRow {
    pub problem_id: u64,
    pub epoch: u64,
    pub k_d: usize,
    /// Object poses `s̄_1 .. s̄_{k_d}`.
    pub trajectory: Vec<Vec<Pose2>>,
    pub objects: Vec<ObjectSpec>,
    pub dead_end_object: ObjectSpec,
    /// Object moved at each level `0 ..= k_d`.
    pub level_objects: Vec<usize>,
    pub k_star: usize,
}

impl IlRow {
    pub fn new(problem: &Problem, skeleton: &PlanSkeleton, label: &ILLabel) -> Self {
        Self {
            problem_id: problem.id,
            epoch: label.record.batch_epoch,
            k_d: label.record.dead_end_level,
            trajectory: label.record.state_trajectory.clone(),
            objects: problem.movable().to_vec(),
            dead_end_object: label.record.dead_end_object,
            level_objects: (0..=label.record.dead_end_level).map(|l| skeleton.object_at(l)).collect(),
            k_star: label.k_star,
        }
    }
}

/// Serialized plan-feasibility example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfRow {
    pub problem_id: u64,
    pub epoch: u64,
    pub k_prime: usize,
    pub state: Vec<Pose2>,
    pub objects: Vec<ObjectSpec>,
    pub future_object_ids: Vec<usize>,
    pub feasible: bool,
}

impl PfRow {
    pub fn new(problem: &Problem, label: &PFLabel) -> Self {
        Self {
            problem_id: problem.id,
            epoch: label.epoch,
            k_prime: label.k_prime,
            state: label.state.clone(),
            objects: problem.movable().to_vec(),
            future_object_ids: label.future_object_ids.clone(),
            feasible: label.feasible,
        }
    }
}
