//! Learned backjumping heuristics.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::Result;
use crate::learn::model::{
    argmax, encode_state, il_logits_from_features, pf_prob_from_feature, select_kstar_pf, Head, HeuristicParams, StateGraph,
};
use crate::learn::tape::softmax;
use crate::problem::{ObjectSpec, ValueTag};
use crate::search::{BackjumpHeuristic, DeadEnd};

const CACHE_LIMIT: usize = 200_000;

type Key = (u64, u64, u64, Vec<ValueTag>);

/// State features keyed by the value prefix that produced the state.
#[derive(Default)]
struct EncodingCache {
    map: Mutex<HashMap<Key, Vec<f64>>>,
}

impl EncodingCache {
    /// Features of `s̄_{k+1}` for each `k` in `levels`.
    fn features(&self, params: &HeuristicParams, d: &DeadEnd<'_>, levels: std::ops::Range<usize>) -> Result<Vec<Vec<f64>>> {
        let objects = d.problem.movable();
        let mut map = self.map.lock().expect("cache lock");
        if map.len() > CACHE_LIMIT {
            map.clear();
        }
        let mut out = Vec::with_capacity(levels.len());
        for k in levels {
            let key = (d.problem.id, d.problem.seed, d.seed, d.record.value_tags[..=k].to_vec());
            if let Some(f) = map.get(&key) {
                out.push(f.clone());
                continue;
            }
            let graph = StateGraph::new(&d.record.state_trajectory[k], objects)?;
            let f = encode_state(&graph, params)?;
            map.insert(key, f.clone());
            out.push(f);
        }
        Ok(out)
    }
}

/// Jumps to the most probable `k*` under the imitation model.
pub struct IlHeuristic {
    pub params: HeuristicParams,
    cache: EncodingCache,
}

impl IlHeuristic {
    pub fn new(params: HeuristicParams) -> Result<Self> {
        if params.config.head != Head::Il {
            return Err(crate::Error::Config("imitation heuristic needs an imitation model".into()));
        }
        Ok(Self { params, cache: EncodingCache::default() })
    }

    /// Level distribution for a dead end.
    pub fn distribution(&self, d: &DeadEnd<'_>) -> Result<Vec<f64>> {
        let k_d = d.record.dead_end_level;
        let feats = self.cache.features(&self.params, d, 0..k_d)?;
        Ok(softmax(&il_logits_from_features(&self.params, &feats, &d.record.dead_end_object)))
    }
}

impl BackjumpHeuristic for IlHeuristic {
    fn name(&self) -> String {
        "il".into()
    }

    fn predict(&self, d: &DeadEnd<'_>) -> Result<usize> {
        Ok(argmax(&self.distribution(d)?))
    }
}

/// Jumps by thresholding feasibility predictions along the trajectory.
pub struct PfHeuristic {
    pub params: HeuristicParams,
    cache: EncodingCache,
}

impl PfHeuristic {
    pub fn new(params: HeuristicParams) -> Result<Self> {
        if params.config.head != Head::Pf {
            return Err(crate::Error::Config("feasibility heuristic needs a feasibility model".into()));
        }
        Ok(Self { params, cache: EncodingCache::default() })
    }

    /// `p_k` for `k` in `0..k_d`: probability that levels `k+1 ..= k_d` can be
    /// refined from `s̄_{k+1}`.
    pub fn probabilities(&self, d: &DeadEnd<'_>) -> Result<Vec<f64>> {
        let k_d = d.record.dead_end_level;
        let feats = self.cache.features(&self.params, d, 0..k_d)?;
        Ok((0..k_d)
            .map(|k| {
                let future: Vec<ObjectSpec> =
                    (k + 1..=k_d).map(|l| *d.problem.object(d.skeleton.object_at(l))).collect();
                pf_prob_from_feature(&self.params, &feats[k], &future)
            })
            .collect())
    }
}

impl BackjumpHeuristic for PfHeuristic {
    fn name(&self) -> String {
        "pf".into()
    }

    fn predict(&self, d: &DeadEnd<'_>) -> Result<usize> {
        select_kstar_pf(&self.probabilities(d)?)
    }
}
