//! Independent brute-force references shared by the integration tests.
#![allow(dead_code)]

use backjump::problem::{
    apply_transition, check_feasible, ContinuousValue, PartialPlan, PlanSkeleton, Problem, ValueTag, WorldState,
};
use backjump::sampling::{sample_values, StreamKey};
use backjump::search::DeadEndRecord;

/// The batches an epoch of the batch regime draws for every level.
pub fn epoch_batches(p: &Problem, sk: &PlanSkeleton, n: usize, seed: u64, epoch: u64) -> Vec<Vec<ContinuousValue>> {
    (0..sk.len()).map(|level| sample_values(p, sk, level, n, StreamKey::new(seed, epoch))).collect()
}

/// Rebuilds the dead-end prefix from its tags.
pub fn plan_from_tags(p: &Problem, sk: &PlanSkeleton, batches: &[Vec<ContinuousValue>], tags: &[ValueTag]) -> PartialPlan {
    let values: Vec<ContinuousValue> = tags.iter().map(|t| batches[t.level][t.sample_id]).collect();
    PartialPlan::replay(p, sk, &values).expect("recorded prefix replays")
}

/// Every index tuple `(i_0 .. i_{k_d})` whose values chain consistently from
/// the initial state, in lexicographic order.
pub fn consistent_tuples(p: &Problem, sk: &PlanSkeleton, batches: &[Vec<ContinuousValue>], k_d: usize) -> Vec<Vec<usize>> {
    fn walk(
        p: &Problem,
        sk: &PlanSkeleton,
        batches: &[Vec<ContinuousValue>],
        state: &WorldState,
        prefix: &mut Vec<usize>,
        k_d: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        let level = prefix.len();
        for (i, v) in batches[level].iter().enumerate() {
            if !check_feasible(state, &sk.steps[level], v, p).unwrap() {
                continue;
            }
            prefix.push(i);
            if level == k_d {
                out.push(prefix.clone());
            } else {
                let next = apply_transition(state, &sk.steps[level], v, p);
                walk(p, sk, batches, &next, prefix, k_d, out);
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    walk(p, sk, batches, &p.initial_state(), &mut Vec::new(), k_d, &mut out);
    out
}

/// Safe-jump set by enumeration: `k` is safe iff no consistent tuple to `k_d`
/// that backtracking has not yet passed shares `c_0 .. c_k` with the current
/// prefix.
pub fn brute_force_safe_set(tuples: &[Vec<usize>], current: &[usize]) -> Vec<usize> {
    let k_d = current.len();
    let ahead: Vec<&Vec<usize>> = tuples.iter().filter(|t| t[..k_d] > *current).collect();
    (0..k_d).filter(|&k| !ahead.iter().any(|t| t[..=k] == current[..=k])).collect()
}

/// A dead end's prefix as indices into its epoch's batches.
pub fn indices(rec: &DeadEndRecord) -> Vec<usize> {
    rec.value_tags.iter().map(|t| t.sample_id).collect()
}

/// Can levels `from ..= to` be refined consistently from `state`?
pub fn extends(p: &Problem, sk: &PlanSkeleton, batches: &[Vec<ContinuousValue>], state: &WorldState, from: usize, to: usize) -> bool {
    batches[from].iter().any(|v| {
        check_feasible(state, &sk.steps[from], v, p).unwrap()
            && (from == to || extends(p, sk, batches, &apply_transition(state, &sk.steps[from], v, p), from + 1, to))
    })
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
