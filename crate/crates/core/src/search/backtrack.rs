//! Recursive chronological backtracking over fixed per-level batches.

use crate::error::Result;
use crate::problem::{apply_transition, check_feasible, ContinuousValue, PartialPlan, PlanSkeleton, Problem};
use crate::sampling::{sample_values, StreamKey};
use crate::search::{
    DeadEndBook, Meter, Outcome, SearchBudget, SearchResult, SearchTrace, Stop, TraceOptions, TreeNode, Visit,
};

enum Flow {
    Solved,
    Exhausted,
    Stopped,
}

struct Dfs<'a> {
    problem: &'a Problem,
    skeleton: &'a PlanSkeleton,
    batches: Vec<Vec<ContinuousValue>>,
    epoch: u64,
    meter: Meter,
    book: DeadEndBook,
    plan: PartialPlan,
    trace: Option<SearchTrace>,
    opts: TraceOptions,
}

impl Dfs<'_> {
    fn node(&mut self, parent: Option<usize>) -> Option<usize> {
        let trace = self.trace.as_mut().filter(|_| self.opts.tree)?;
        trace.tree.push(TreeNode {
            depth: self.plan.depth(),
            parent,
            epoch: self.epoch,
            poses: self.plan.state().object_poses.clone(),
            complete: false,
        });
        Some(trace.tree.len() - 1)
    }

    fn run(&mut self, node: Option<usize>) -> Result<Flow> {
        let k = self.plan.depth();
        if k == self.skeleton.len() {
            return Ok(Flow::Solved);
        }
        let op = self.skeleton.steps[k];
        let mut any = false;
        for i in 0..self.batches[k].len() {
            let value = self.batches[k][i];
            if let Err(Stop::Budget) = self.meter.charge() {
                return Ok(Flow::Stopped);
            }
            let ok = check_feasible(self.plan.state(), &op, &value, self.problem)?;
            if let Some(t) = self.trace.as_mut().filter(|_| self.opts.visits) {
                t.visits.push(Visit { level: k, tag: value.tag(), feasible: ok });
            }
            if !ok {
                continue;
            }
            any = true;
            self.book.consistent_at(k, &self.plan);
            let next = apply_transition(self.plan.state(), &op, &value, self.problem);
            self.plan.push(value, next);
            let child = self.node(node);
            match self.run(child)? {
                Flow::Exhausted => {
                    if let Some(c) = child {
                        self.trace.as_mut().expect("node implies trace").tree[c].complete = true;
                    }
                    self.plan.truncate(k);
                }
                flow => return Ok(flow),
            }
        }
        if !any && k > 0 {
            self.book.record(&self.plan, self.skeleton, self.problem, self.epoch, self.meter.nodes);
        }
        Ok(Flow::Exhausted)
    }
}

/// Exhaustive depth-first search over one batch of `N` values per level,
/// tried in `sample_id` order. An exhausted root starts a new epoch with
/// fresh batches.
pub fn backtrack_solve(
    problem: &Problem,
    skeleton: &PlanSkeleton,
    budget: &SearchBudget,
    seed: u64,
    opts: TraceOptions,
) -> Result<SearchResult> {
    budget.validate()?;
    let mut dfs = Dfs {
        problem,
        skeleton,
        batches: Vec::new(),
        epoch: 0,
        meter: Meter::new(budget),
        book: DeadEndBook::default(),
        plan: PartialPlan::new(problem.initial_state()),
        trace: (opts.visits || opts.tree).then(SearchTrace::default),
        opts,
    };
    let mut restarts = 0;
    let outcome = loop {
        if budget.max_epochs.is_some_and(|m| dfs.epoch >= m) {
            break Outcome::Exhausted;
        }
        let key = StreamKey::new(seed, dfs.epoch);
        dfs.batches = (0..skeleton.len())
            .map(|level| sample_values(problem, skeleton, level, budget.n_per_level, key))
            .collect();
        dfs.plan.truncate(0);
        let root = dfs.node(None);
        match dfs.run(root)? {
            Flow::Solved => break Outcome::Solved(dfs.plan.assigned().to_vec()),
            Flow::Stopped => break Outcome::BudgetExceeded,
            Flow::Exhausted => {
                if let Some(r) = root {
                    dfs.trace.as_mut().expect("node implies trace").tree[r].complete = true;
                }
                dfs.book.end_epoch();
                dfs.epoch += 1;
                restarts += 1;
                if skeleton.is_empty() {
                    break Outcome::Exhausted;
                }
            }
        }
    };
    Ok(SearchResult { outcome, nodes_visited: dfs.meter.nodes, dead_ends: dfs.book.records, restarts, trace: dfs.trace })
}
