use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::harness::ExperimentConfig;
use crate::learn::model::argmax;
use crate::learn::{il_predict, pf_predict, select_kstar_pf, HeuristicParams};
use crate::oracle::IlRow;
use crate::problem::{ground_skeleton, PartialPlan, Problem};
use crate::sampling::{mix, sample_values, StreamKey};
use crate::search::backtrack_solve;
use crate::search::TraceOptions;
use crate::problem::check_feasible;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeClass {
    Correct,
    /// Predicted level below `k*`: jumped too far.
    Lt,
    /// Predicted level above `k*`: jumped too little.
    Gt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub k_hat: usize,
    pub k_star: usize,
    pub class: OutcomeClass,
    pub distance: usize,
}

impl PredictionOutcome {
    pub fn new(k_hat: usize, k_star: usize) -> Self {
        let class = match k_hat.cmp(&k_star) {
            std::cmp::Ordering::Equal => OutcomeClass::Correct,
            std::cmp::Ordering::Less => OutcomeClass::Lt,
            std::cmp::Ordering::Greater => OutcomeClass::Gt,
        };
        Self { k_hat, k_star, class, distance: k_hat.abs_diff(k_star) }
    }
}

/// Predicts `k*` from a stored dead end.
pub enum RowPredictor<'a> {
    /// The label itself.
    Oracle,
    Fixed(usize),
    Il(&'a HeuristicParams),
    Pf(&'a HeuristicParams),
}

impl RowPredictor<'_> {
    pub fn name(&self) -> String {
        match self {
            RowPredictor::Oracle => "oracle".into(),
            RowPredictor::Fixed(j) => format!("fixed{j}"),
            RowPredictor::Il(_) => "il".into(),
            RowPredictor::Pf(_) => "pf".into(),
        }
    }

    pub fn predict(&self, row: &IlRow) -> Result<usize> {
        let k_d = row.k_d;
        match self {
            RowPredictor::Oracle => Ok(row.k_star),
            RowPredictor::Fixed(j) => Ok(k_d.saturating_sub(*j)),
            RowPredictor::Il(params) => Ok(argmax(&il_predict(&row.trajectory, &row.objects, &row.dead_end_object, params)?)),
            RowPredictor::Pf(params) => {
                if row.level_objects.len() != k_d + 1 {
                    return input(format!("row lists {} level objects for k_d = {k_d}", row.level_objects.len()));
                }
                let p = (0..k_d)
                    .map(|k| {
                        let future: Vec<_> = row.level_objects[k + 1..=k_d]
                            .iter()
                            .map(|&id| row.objects.get(id).copied().ok_or_else(|| Error::Input(format!("unknown object {id}"))))
                            .collect::<Result<_>>()?;
                        pf_predict(&row.trajectory[k], &row.objects, &future, params)
                    })
                    .collect::<Result<Vec<_>>>()?;
                select_kstar_pf(&p)
            }
        }
    }
}

/// Prediction metrics over labeled dead ends. Percentages are in `0..=100`;
/// distances are means, zero when their class is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub predictor: String,
    pub n: usize,
    pub correct_pct: f64,
    pub lt_pct: f64,
    pub gt_pct: f64,
    /// Mean `|k̂* - k*|` over LT predictions.
    pub lt_distance: f64,
    /// Mean `|k̂* - k*|` over GT predictions.
    pub gt_distance: f64,
    /// Mean `k_d - k̂*`.
    pub predicted_jump: f64,
    /// Mean `k_d - k*`.
    pub true_jump: f64,
}

pub fn evaluate_predictions(predictor: &RowPredictor<'_>, rows: &[IlRow]) -> Result<PredictionReport> {
    if rows.is_empty() {
        return input("no labeled dead ends to evaluate");
    }
    let mut outcomes = Vec::with_capacity(rows.len());
    for r in rows {
        let k_hat = predictor.predict(r)?;
        if k_hat >= r.k_d {
            return input(format!("prediction {k_hat} is not below k_d = {}", r.k_d));
        }
        outcomes.push(PredictionOutcome::new(k_hat, r.k_star));
    }
    let n = rows.len() as f64;
    let pct = |c: OutcomeClass| 100.0 * outcomes.iter().filter(|o| o.class == c).count() as f64 / n;
    let dist = |c: OutcomeClass| {
        let d: Vec<f64> = outcomes.iter().filter(|o| o.class == c).map(|o| o.distance as f64).collect();
        if d.is_empty() {
            0.0
        } else {
            d.iter().sum::<f64>() / d.len() as f64
        }
    };
    Ok(PredictionReport {
        predictor: predictor.name(),
        n: rows.len(),
        correct_pct: pct(OutcomeClass::Correct),
        lt_pct: pct(OutcomeClass::Lt),
        gt_pct: pct(OutcomeClass::Gt),
        lt_distance: dist(OutcomeClass::Lt),
        gt_distance: dist(OutcomeClass::Gt),
        predicted_jump: rows.iter().zip(&outcomes).map(|(r, o)| (r.k_d - o.k_hat) as f64).sum::<f64>() / n,
        true_jump: rows.iter().map(|r| (r.k_d - r.k_star) as f64).sum::<f64>() / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnRow {
    pub n_samples: usize,
    pub trials: usize,
    pub false_negatives: usize,
    pub ratio: f64,
}

/// False-negative ratio of sampling at the last level of solved instances.
///
/// Each trial takes a solved problem, keeps every placement but the last (a
/// nearly full state whose witness is the dropped placement), and draws fresh
/// values for the last level. A trial is a false negative at `N` if its first
/// `N` draws are all infeasible; every `N` sees a prefix of the same draws.
pub fn false_negative_study(cfg: &ExperimentConfig, sample_sizes: &[usize], trials: usize) -> Result<Vec<FnRow>> {
    if sample_sizes.is_empty() {
        return input("false-negative study needs at least one sample size");
    }
    let mut sizes = sample_sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let n_max = *sizes.last().expect("non-empty");
    let mut gen = cfg.clone();
    gen.n_problems_train = trials.clamp(1, 50);
    let problems: Vec<Problem> = gen.problems(true)?;
    let mut states = Vec::with_capacity(problems.len());
    for p in &problems {
        let skeleton = ground_skeleton(p);
        let r = backtrack_solve(p, &skeleton, &cfg.budget(), cfg.search_seed(p), TraceOptions::NONE)?;
        let crate::search::Outcome::Solved(values) = r.outcome else { continue };
        let k = skeleton.len() - 1;
        let plan = PartialPlan::replay(p, &skeleton, &values[..k])?;
        states.push((p, skeleton, plan));
    }
    if states.is_empty() {
        return input("no instance was solved within the budget");
    }
    let mut misses = vec![0usize; sizes.len()];
    for t in 0..trials {
        let (p, skeleton, plan) = &states[t % states.len()];
        let level = skeleton.len() - 1;
        let key = StreamKey::new(mix(&[cfg.seed, 0xf4, t as u64]), 0);
        let draws = sample_values(p, skeleton, level, n_max, key);
        let mut first_hit = None;
        for (i, v) in draws.iter().enumerate() {
            if check_feasible(plan.state(), &skeleton.steps[level], v, p)? {
                first_hit = Some(i);
                break;
            }
        }
        for (m, &n) in misses.iter_mut().zip(&sizes) {
            if first_hit.map_or(true, |i| i >= n) {
                *m += 1;
            }
        }
    }
    Ok(sizes
        .iter()
        .zip(misses)
        .map(|(&n, m)| FnRow { n_samples: n, trials, false_negatives: m, ratio: m as f64 / trials.max(1) as f64 })
        .collect())
}
