use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;
use crate::oracle::{il_label_from_trace, pf_labels_from_tree, IlRow, PfRow};
use crate::problem::{ground_skeleton, Problem};
use crate::sampling::{mix, StreamKey};
use crate::search::{backtrack_solve, SearchBudget, TraceOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub max_nodes: u64,
    pub max_epochs: u64,
    /// Samples per level while collecting; the experiment's value if unset.
    pub n_per_level: Option<usize>,
    /// Keep at most this many feasibility labels per problem, chosen at random.
    pub pf_per_problem: Option<usize>,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { max_nodes: 100_000, max_epochs: 4, n_per_level: None, pf_per_problem: Some(200) }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Collected {
    pub il: Vec<IlRow>,
    pub pf: Vec<PfRow>,
    pub dead_ends: usize,
    pub solved: usize,
}

/// Runs batch-regime backtracking on each problem and labels what it saw.
///
/// Imitation labels come from every dead end that was later recovered from;
/// feasibility labels from the search tree, subsampled per problem.
pub fn collect_dataset(cfg: &ExperimentConfig, problems: &[Problem]) -> Result<Collected> {
    let c = &cfg.collect;
    let budget = SearchBudget {
        max_nodes: Some(c.max_nodes),
        time_limit_ms: None,
        n_per_level: c.n_per_level.unwrap_or(cfg.n_per_level),
        max_epochs: Some(c.max_epochs),
    };
    budget.validate().map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Collected::default();
    for p in problems {
        let skeleton = ground_skeleton(p);
        let seed = cfg.search_seed(p);
        let result = backtrack_solve(p, &skeleton, &budget, seed, TraceOptions { visits: false, tree: true })?;
        out.dead_ends += result.dead_ends.len();
        out.solved += usize::from(result.outcome.is_solved());
        for d in &result.dead_ends {
            if let Some(rec) = &d.recovery {
                out.il.push(IlRow::new(p, &skeleton, &il_label_from_trace(d, rec)?));
            }
        }
        let trace = result.trace.unwrap_or_default();
        let labels = pf_labels_from_tree(&trace, &skeleton);
        let keep: Vec<usize> = match c.pf_per_problem {
            Some(cap) if labels.len() > cap => {
                let mut rng = StreamKey::new(mix(&[seed, 0x9f]), 0).rng(0);
                let mut idx = sample(&mut rng, labels.len(), cap).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..labels.len()).collect(),
        };
        out.pf.extend(keep.into_iter().map(|i| PfRow::new(p, &labels[i])));
    }
    if out.il.is_empty() {
        log::warn!("no recovered dead ends harvested from {} problems", problems.len());
        return Err(Error::EmptyDataset("collection produced no dead-end labels".into()));
    }
    Ok(out)
}
