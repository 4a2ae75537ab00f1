mod common;

use backjump::domains::gen_problem;
use backjump::oracle::{pf_labels_from_tree, safe_jump_set, OracleHeuristic};
use backjump::problem::{
    apply_transition, check_feasible, feasibility_calls, goal_satisfied, ground_skeleton, ContinuousValue, DomainKind,
    PlanSkeleton, Problem, WorldState,
};
use backjump::sampling::{sample_values, StreamKey};
use backjump::search::{
    backjump_batch, backjump_forget, backtrack_solve, fixed_step_heuristic, BackjumpHeuristic, DeadEnd, Outcome,
    SearchBudget, TraceOptions,
};
use backjump::Error;
use common::*;

fn small(domain: DomainKind, seed: u64) -> Problem {
    let n = match domain {
        DomainKind::Packing => 4,
        DomainKind::Namo => 2,
    };
    gen_problem(domain, n, seed).unwrap()
}

fn assert_valid_plan(p: &Problem, sk: &PlanSkeleton, values: &[ContinuousValue]) {
    assert_eq!(values.len(), sk.len());
    let mut s = p.initial_state();
    for (k, v) in values.iter().enumerate() {
        assert!(check_feasible(&s, &sk.steps[k], v, p).unwrap(), "level {k} infeasible in returned plan");
        s = apply_transition(&s, &sk.steps[k], v, p);
    }
    assert!(goal_satisfied(&s, p));
}

/// Plain recursive DFS over one epoch; returns (solved, checks).
fn reference_dfs(p: &Problem, sk: &PlanSkeleton, batches: &[Vec<ContinuousValue>], state: &WorldState, level: usize, checks: &mut u64) -> bool {
    if level == sk.len() {
        return true;
    }
    for v in &batches[level] {
        *checks += 1;
        if check_feasible(state, &sk.steps[level], v, p).unwrap()
            && reference_dfs(p, sk, batches, &apply_transition(state, &sk.steps[level], v, p), level + 1, checks)
        {
            return true;
        }
    }
    false
}

#[test]
fn backtracking_counts_match_reference_dfs() {
    for domain in [DomainKind::Packing, DomainKind::Namo] {
        for seed in 0..30 {
            let p = small(domain, seed);
            let sk = ground_skeleton(&p);
            let n = 3;
            let budget = SearchBudget::nodes(1_000_000, n).with_max_epochs(3);
            let r = backtrack_solve(&p, &sk, &budget, seed, TraceOptions::NONE).unwrap();
            let mut checks = 0;
            let mut solved = false;
            for epoch in 0..3 {
                let batches = epoch_batches(&p, &sk, n, seed, epoch);
                if reference_dfs(&p, &sk, &batches, &p.initial_state(), 0, &mut checks) {
                    solved = true;
                    break;
                }
            }
            assert_eq!(r.outcome.is_solved(), solved, "{domain} seed {seed}");
            assert_eq!(r.nodes_visited, checks, "{domain} seed {seed}");
        }
    }
}

#[test]
fn nodes_visited_equals_feasibility_calls() {
    let f1 = fixed_step_heuristic(1).unwrap();
    for seed in 0..10 {
        let p = gen_problem(DomainKind::Packing, 5, seed).unwrap();
        let sk = ground_skeleton(&p);
        let budget = SearchBudget::nodes(20_000, 10);
        let before = feasibility_calls();
        let a = backtrack_solve(&p, &sk, &budget, seed, TraceOptions::NONE).unwrap();
        let mid = feasibility_calls();
        let b = backjump_forget(&p, &sk, &budget, &f1, seed, TraceOptions::NONE).unwrap();
        let after = feasibility_calls();
        assert_eq!(a.nodes_visited, mid - before);
        assert_eq!(b.nodes_visited, after - mid);
    }
}

#[test]
fn solvers_respect_node_budget_and_return_valid_plans() {
    let f2 = fixed_step_heuristic(2).unwrap();
    for seed in 0..20 {
        let p = gen_problem(DomainKind::Packing, 6, seed).unwrap();
        let sk = ground_skeleton(&p);
        for max in [1, 17, 500, 5_000] {
            let budget = SearchBudget::nodes(max, 8);
            let runs = [
                backtrack_solve(&p, &sk, &budget, seed, TraceOptions::NONE).unwrap(),
                backjump_batch(&p, &sk, &budget, &f2, seed, TraceOptions::NONE).unwrap(),
                backjump_forget(&p, &sk, &budget, &f2, seed, TraceOptions::NONE).unwrap(),
            ];
            for r in runs {
                assert!(r.nodes_visited <= max);
                match &r.outcome {
                    Outcome::Solved(v) => assert_valid_plan(&p, &sk, v),
                    Outcome::BudgetExceeded => assert_eq!(r.nodes_visited, max),
                    Outcome::Exhausted => panic!("no epoch limit was set"),
                }
            }
        }
    }
}

#[test]
fn forgetting_is_deterministic_per_seed() {
    let f1 = fixed_step_heuristic(1).unwrap();
    let p = gen_problem(DomainKind::Packing, 6, 3).unwrap();
    let sk = ground_skeleton(&p);
    let budget = SearchBudget::nodes(20_000, 10);
    let opts = TraceOptions { visits: true, tree: false };
    let a = backjump_forget(&p, &sk, &budget, &f1, 42, opts).unwrap();
    let b = backjump_forget(&p, &sk, &budget, &f1, 42, opts).unwrap();
    let c = backjump_forget(&p, &sk, &budget, &f1, 43, opts).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.nodes_visited, b.nodes_visited);
    assert_ne!(a.trace, c.trace);
}

struct Stay;

impl BackjumpHeuristic for Stay {
    fn name(&self) -> String {
        "stay".into()
    }

    fn predict(&self, d: &DeadEnd<'_>) -> backjump::Result<usize> {
        Ok(d.record.dead_end_level)
    }
}

#[test]
fn out_of_range_jump_is_a_contract_error() {
    let budget = SearchBudget::nodes(100_000, 5);
    let hit = (0..20).find_map(|seed| {
        let p = gen_problem(DomainKind::Packing, 6, seed).unwrap();
        let sk = ground_skeleton(&p);
        match backjump_forget(&p, &sk, &budget, &Stay, seed, TraceOptions::NONE) {
            Err(Error::Contract(_)) => Some(()),
            Ok(r) if r.dead_ends.is_empty() => None,
            other => panic!("expected a contract error, got {other:?}"),
        }
    });
    assert!(hit.is_some(), "no instance produced a dead end");
}

#[test]
fn zero_samples_is_rejected() {
    let p = small(DomainKind::Packing, 0);
    let sk = ground_skeleton(&p);
    let budget = SearchBudget::nodes(10, 0);
    assert!(backtrack_solve(&p, &sk, &budget, 0, TraceOptions::NONE).is_err());
}

#[test]
fn safe_jump_sets_match_brute_force_enumeration() {
    let mut certified = 0;
    for domain in [DomainKind::Packing, DomainKind::Namo] {
        for seed in 0..60 {
            let p = small(domain, seed);
            let sk = ground_skeleton(&p);
            let n = 3;
            let budget = SearchBudget::nodes(200_000, n).with_max_epochs(2);
            let r = backtrack_solve(&p, &sk, &budget, seed, TraceOptions::NONE).unwrap();
            for rec in &r.dead_ends {
                let batches = epoch_batches(&p, &sk, n, seed, rec.batch_epoch);
                let plan = plan_from_tags(&p, &sk, &batches, &rec.value_tags);
                let k_d = rec.dead_end_level;
                let set = safe_jump_set(&p, &sk, &batches, &plan, k_d).unwrap();
                let tuples = consistent_tuples(&p, &sk, &batches, k_d);
                assert_eq!(set.members, brute_force_safe_set(&tuples, &indices(rec)), "{domain} seed {seed} k_d {k_d}");
                assert!(set.is_well_formed());
                certified += 1;
            }
        }
    }
    assert!(certified >= 100, "only {certified} dead ends");
}

#[test]
fn oracle_jumps_keep_batch_search_complete() {
    // Never skipping a reachable dead-end level means the oracle solves
    // whenever backtracking does within the same epochs.
    let oracle = OracleHeuristic::default();
    for seed in 0..40 {
        let p = small(DomainKind::Packing, seed);
        let sk = ground_skeleton(&p);
        let budget = SearchBudget::nodes(200_000, 3).with_max_epochs(1);
        let bt = backtrack_solve(&p, &sk, &budget, seed, TraceOptions::NONE).unwrap();
        let bj = backjump_batch(&p, &sk, &budget, &oracle, seed, TraceOptions::NONE).unwrap();
        assert_eq!(bt.outcome.is_solved(), bj.outcome.is_solved(), "seed {seed}");
        assert!(bj.nodes_visited <= bt.nodes_visited);
    }
}

#[test]
fn feasibility_labels_agree_with_exhaustive_extension() {
    let mut checked = (0, 0);
    for seed in 0..40 {
        let p = small(DomainKind::Packing, seed);
        let sk = ground_skeleton(&p);
        let n = 3;
        let budget = SearchBudget::nodes(200_000, n).with_max_epochs(2);
        let r = backtrack_solve(&p, &sk, &budget, seed, TraceOptions { visits: false, tree: true }).unwrap();
        for l in pf_labels_from_tree(r.trace.as_ref().unwrap(), &sk) {
            let batches = epoch_batches(&p, &sk, n, seed, l.epoch);
            let state = WorldState { robot_base: p.robot, object_poses: l.state.clone() };
            let to = l.k_prime + l.future_object_ids.len() - 1;
            assert_eq!(extends(&p, &sk, &batches, &state, l.k_prime, to), l.feasible, "seed {seed} k' {}", l.k_prime);
            let ids: Vec<usize> = (l.k_prime..=to).map(|k| sk.object_at(k)).collect();
            assert_eq!(ids, l.future_object_ids);
            if l.feasible {
                checked.0 += 1;
            } else {
                checked.1 += 1;
            }
        }
    }
    assert!(checked.0 >= 50 && checked.1 >= 50, "labels checked (pos, neg): {checked:?}");
}

#[test]
fn batches_are_reproducible_from_tags() {
    let p = gen_problem(DomainKind::Namo, 3, 5).unwrap();
    let sk = ground_skeleton(&p);
    let a = sample_values(&p, &sk, 1, 20, StreamKey::new(9, 4));
    let b = sample_values(&p, &sk, 1, 20, StreamKey::new(9, 4));
    assert_eq!(a, b);
    assert!(a.iter().enumerate().all(|(i, v)| v.sample_id == i && v.epoch == 4 && v.level == 1));
    assert_ne!(a, sample_values(&p, &sk, 1, 20, StreamKey::new(9, 5)));
}
