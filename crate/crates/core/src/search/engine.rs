//! Iterative backjumping engine for both sampling regimes.
//!
//! Per level the engine keeps the current batch, a cursor to the next untried
//! value, and whether any value of the batch has been consistent under the
//! current prefix. A level whose batch runs out without a single consistent
//! value is a dead end: the heuristic picks the resume level. In the batch
//! regime a level can also run out after some of its values were consistent
//! (their subtrees were searched and abandoned); that is not a dead end, and
//! the engine steps back one level, exactly as backtracking does. Without that
//! step a jump onto a level with no untried values would loop forever.

use crate::error::{contract, Result};
use crate::problem::{apply_transition, check_feasible, ContinuousValue, PartialPlan, PlanSkeleton, Problem};
use crate::sampling::{sample_values, StreamKey};
use crate::search::{
    BackjumpHeuristic, DeadEnd, DeadEndBook, Meter, Outcome, Regime, SearchBudget, SearchResult, SearchTrace, Stop,
    TraceOptions, Visit,
};

struct Level {
    batch: Vec<ContinuousValue>,
    cursor: usize,
    any_consistent: bool,
}

struct Engine<'a> {
    problem: &'a Problem,
    skeleton: &'a PlanSkeleton,
    budget: &'a SearchBudget,
    seed: u64,
    regime: Regime,
    levels: Vec<Level>,
    /// Batch regime: current epoch. Forgetting: number of batches drawn so far.
    epoch: u64,
    draws: u64,
}

impl Engine<'_> {
    fn draw(&mut self, level: usize) {
        let key = match self.regime {
            Regime::Batch => StreamKey::new(self.seed, self.epoch),
            Regime::Forget => {
                self.draws += 1;
                StreamKey::new(self.seed, self.draws - 1)
            }
        };
        self.levels[level].batch = sample_values(self.problem, self.skeleton, level, self.budget.n_per_level, key);
    }

    fn arrive(&mut self, level: usize) {
        if self.regime == Regime::Forget {
            self.draw(level);
        }
        let l = &mut self.levels[level];
        l.cursor = 0;
        l.any_consistent = false;
    }

    fn new_epoch(&mut self) {
        if self.regime == Regime::Batch {
            for level in 0..self.skeleton.len() {
                self.draw(level);
            }
        }
        self.arrive(0);
    }

    fn batches(&self) -> Vec<Vec<ContinuousValue>> {
        self.levels.iter().map(|l| l.batch.clone()).collect()
    }
}

fn run(
    problem: &Problem,
    skeleton: &PlanSkeleton,
    budget: &SearchBudget,
    heuristic: &dyn BackjumpHeuristic,
    seed: u64,
    regime: Regime,
    opts: TraceOptions,
) -> Result<SearchResult> {
    budget.validate()?;
    let k_max = skeleton.len();
    let mut e = Engine {
        problem,
        skeleton,
        budget,
        seed,
        regime,
        levels: (0..k_max).map(|_| Level { batch: Vec::new(), cursor: 0, any_consistent: false }).collect(),
        epoch: 0,
        draws: 0,
    };
    let mut meter = Meter::new(budget);
    let mut book = DeadEndBook::default();
    let mut trace = opts.visits.then(SearchTrace::default);
    let mut plan = PartialPlan::new(problem.initial_state());
    let mut restarts = 0u64;

    if k_max == 0 {
        return Ok(SearchResult { outcome: Outcome::Solved(Vec::new()), nodes_visited: 0, dead_ends: Vec::new(), restarts, trace });
    }
    if budget.max_epochs == Some(0) {
        return Ok(SearchResult { outcome: Outcome::Exhausted, nodes_visited: 0, dead_ends: Vec::new(), restarts, trace });
    }
    e.new_epoch();

    let outcome = loop {
        let k = plan.depth();
        if k == k_max {
            break Outcome::Solved(plan.assigned().to_vec());
        }
        let level = &mut e.levels[k];
        if level.cursor < level.batch.len() {
            let value = level.batch[level.cursor];
            level.cursor += 1;
            if let Err(Stop::Budget) = meter.charge() {
                break Outcome::BudgetExceeded;
            }
            let op = skeleton.steps[k];
            let ok = check_feasible(plan.state(), &op, &value, problem)?;
            if let Some(t) = trace.as_mut() {
                t.visits.push(Visit { level: k, tag: value.tag(), feasible: ok });
            }
            if ok {
                e.levels[k].any_consistent = true;
                book.consistent_at(k, &plan);
                let next = apply_transition(plan.state(), &op, &value, problem);
                plan.push(value, next);
                if k + 1 < k_max {
                    e.arrive(k + 1);
                }
            }
            continue;
        }

        // The level's batch is used up.
        let dead_end = regime == Regime::Forget || !e.levels[k].any_consistent;
        if k == 0 {
            if dead_end && regime == Regime::Forget {
                book.end_epoch();
                restarts += 1;
                if budget.max_epochs.is_some_and(|m| restarts >= m) {
                    break Outcome::Exhausted;
                }
                e.arrive(0);
                continue;
            }
            book.end_epoch();
            restarts += 1;
            e.epoch += 1;
            if budget.max_epochs.is_some_and(|m| e.epoch >= m) {
                break Outcome::Exhausted;
            }
            e.new_epoch();
            continue;
        }
        if !dead_end {
            plan.truncate(k - 1);
            continue;
        }

        let batch_epoch = e.levels[k].batch.first().map_or(e.epoch, |v| v.epoch);
        let idx = book.record(&plan, skeleton, problem, batch_epoch, meter.nodes);
        let batches = (regime == Regime::Batch).then(|| e.batches());
        let ctx = DeadEnd {
            record: &book.records[idx],
            plan: &plan,
            problem,
            skeleton,
            regime,
            batches: batches.as_deref(),
            seed,
            n_per_level: budget.n_per_level,
        };
        let target = heuristic.predict(&ctx)?;
        if target >= k {
            return contract(format!("heuristic {} jumped to level {target} from a dead end at level {k}", heuristic.name()));
        }
        book.records[idx].jump = Some(target);
        plan.truncate(target);
        if regime == Regime::Forget {
            e.arrive(target);
        }
    };

    Ok(SearchResult { outcome, nodes_visited: meter.nodes, dead_ends: book.records, restarts, trace })
}

/// Backjumping with one fixed batch per level for each epoch.
///
/// After a jump the resume level continues with its untried values; deeper
/// levels start over on their next arrival. When level 0 runs out, every
/// batch is redrawn.
pub fn backjump_batch(
    problem: &Problem,
    skeleton: &PlanSkeleton,
    budget: &SearchBudget,
    heuristic: &dyn BackjumpHeuristic,
    seed: u64,
    opts: TraceOptions,
) -> Result<SearchResult> {
    run(problem, skeleton, budget, heuristic, seed, Regime::Batch, opts)
}

/// Backjumping that redraws a level's batch every time the search arrives
/// there, including the resume level after a jump. A dead end at level 0
/// counts as a restart and simply redraws level 0.
pub fn backjump_forget(
    problem: &Problem,
    skeleton: &PlanSkeleton,
    budget: &SearchBudget,
    heuristic: &dyn BackjumpHeuristic,
    seed: u64,
    opts: TraceOptions,
) -> Result<SearchResult> {
    run(problem, skeleton, budget, heuristic, seed, Regime::Forget, opts)
}
