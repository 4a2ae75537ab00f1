//! Datasets, mini-batch training, and gradient checking.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::learn::model::{forward, Head, HeuristicParams, ModelConfig, Query, StateGraph};
use crate::learn::tape::{log_sum_exp, Tape, Var};
use crate::oracle::{IlRow, PfRow};
use crate::problem::ObjectSpec;
use crate::sampling::{mix, StreamKey};

/// A dead-end trajectory with its target level.
#[derive(Clone, Debug)]
pub struct IlExample {
    pub graphs: Vec<StateGraph>,
    pub object: ObjectSpec,
    pub k_star: usize,
}

/// A (state, future objects) pair with its feasibility label.
#[derive(Clone, Debug)]
pub struct PfExample {
    pub graph: StateGraph,
    pub future: Vec<ObjectSpec>,
    pub feasible: bool,
}

#[derive(Clone, Debug)]
pub enum Dataset {
    Il(Vec<IlExample>),
    Pf(Vec<PfExample>),
}

impl IlExample {
    pub fn from_row(row: &IlRow) -> Result<Self> {
        if row.trajectory.len() != row.k_d || row.k_d == 0 {
            return input(format!("trajectory of {} states for k_d = {}", row.trajectory.len(), row.k_d));
        }
        if row.k_star >= row.k_d {
            return input(format!("k* = {} is not below k_d = {}", row.k_star, row.k_d));
        }
        let graphs = row.trajectory.iter().map(|s| StateGraph::new(s, &row.objects)).collect::<Result<_>>()?;
        Ok(Self { graphs, object: row.dead_end_object, k_star: row.k_star })
    }
}

impl PfExample {
    pub fn from_row(row: &PfRow) -> Result<Self> {
        if row.future_object_ids.is_empty() {
            return input("feasibility example without future objects");
        }
        let future = row
            .future_object_ids
            .iter()
            .map(|&id| row.objects.get(id).copied().ok_or_else(|| Error::Input(format!("unknown object {id}"))))
            .collect::<Result<_>>()?;
        Ok(Self { graph: StateGraph::new(&row.state, &row.objects)?, future, feasible: row.feasible })
    }
}

impl Dataset {
    pub fn from_il_rows(rows: &[IlRow]) -> Result<Self> {
        Ok(Self::Il(rows.iter().map(IlExample::from_row).collect::<Result<_>>()?))
    }

    pub fn from_pf_rows(rows: &[PfRow]) -> Result<Self> {
        Ok(Self::Pf(rows.iter().map(PfExample::from_row).collect::<Result<_>>()?))
    }

    pub fn head(&self) -> Head {
        match self {
            Self::Il(_) => Head::Il,
            Self::Pf(_) => Head::Pf,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Il(v) => v.len(),
            Self::Pf(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Examples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        match self {
            Self::Il(v) => Self::Il(idx.iter().map(|&i| v[i].clone()).collect()),
            Self::Pf(v) => Self::Pf(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    fn query(&self, i: usize) -> (Query<'_>, Target) {
        match self {
            Self::Il(v) => (Query::Il { graphs: &v[i].graphs, object: &v[i].object }, Target::Level(v[i].k_star)),
            Self::Pf(v) => (Query::Pf { graph: &v[i].graph, future: &v[i].future }, Target::Binary(v[i].feasible)),
        }
    }
}

#[derive(Clone, Copy)]
enum Target {
    Level(usize),
    Binary(bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    /// Seeds initialization and shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, batch_size: 32, epochs: 20, optimizer: Optimizer::Adam, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be positive".into()));
        }
        Ok(())
    }
}

/// Mean loss per epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

fn loss_on<'p>(t: &mut Tape<'p, HeuristicParams>, params: &HeuristicParams, q: &Query<'_>, target: Target) -> Var {
    let z = forward(t, params, q);
    match target {
        Target::Level(k) => t.softmax_ce(z, k),
        Target::Binary(y) => t.bce_logits(z, if y { 1.0 } else { 0.0 }),
    }
}

/// Loss of example `i`; gradients scaled by `scale` are added into `grads`.
pub fn example_loss_grad(params: &HeuristicParams, data: &Dataset, i: usize, scale: f64, grads: &mut [Vec<f64>]) -> f64 {
    let (q, target) = data.query(i);
    let mut t = Tape::new(params);
    let l = loss_on(&mut t, params, &q, target);
    t.backward(l, scale, grads);
    t.value(l).data[0]
}

pub fn example_loss(params: &HeuristicParams, data: &Dataset, i: usize) -> f64 {
    let (q, target) = data.query(i);
    let mut t = Tape::new(params);
    let l = loss_on(&mut t, params, &q, target);
    t.value(l).data[0]
}

/// Mean loss over the dataset.
pub fn dataset_loss(params: &HeuristicParams, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    (0..data.len()).map(|i| example_loss(params, data, i)).sum::<f64>() / data.len() as f64
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut HeuristicParams, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (ti, tensor) in params.tensors.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[ti], &mut self.v[ti], &grads[ti]);
            for j in 0..tensor.data.len() {
                m[j] = Self::B1 * m[j] + (1.0 - Self::B1) * g[j];
                v[j] = Self::B2 * v[j] + (1.0 - Self::B2) * g[j] * g[j];
                tensor.data[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains a fresh model of shape `model` on `data`.
pub fn train(data: &Dataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<(HeuristicParams, TrainReport)> {
    let params = HeuristicParams::init(model, cfg.seed)?;
    train_from(params, data, cfg)
}

/// Continues training `params` on `data`.
pub fn train_from(mut params: HeuristicParams, data: &Dataset, cfg: &TrainConfig) -> Result<(HeuristicParams, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training examples".into()));
    }
    if data.head() != params.config.head {
        return Err(Error::Config(format!("{:?} dataset for a {:?} model", data.head(), params.config.head)));
    }
    let mut adam = Adam { m: params.zero_grads(), v: params.zero_grads(), t: 0 };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    let mut batch_index = 0usize;
    for epoch in 0..cfg.epochs {
        let mut rng = StreamKey::new(mix(&[cfg.seed, 0x5eed]), epoch as u64).rng(0);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = params.zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += example_loss_grad(&params, data, i, scale, &mut grads);
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Training { batch: batch_index, reason: "non-finite loss or gradient".into() });
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut params, &grads, cfg.learning_rate),
                Optimizer::Sgd => {
                    for (tensor, g) in params.tensors.iter_mut().zip(&grads) {
                        for (w, gj) in tensor.data.iter_mut().zip(g) {
                            *w -= cfg.learning_rate * gj;
                        }
                    }
                }
            }
            total += batch_loss;
            batch_index += 1;
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    params.train_loss = report.epoch_losses.last().copied();
    Ok((params, report))
}

/// Largest relative error between the analytic gradient of example `i` and
/// central differences (step `1e-5`) over a random 1% of parameters, at
/// least 16.
///
/// The denominator is floored at `1e-6`: with an O(1) loss the difference
/// quotient carries about `1e-11` of rounding error, so smaller gradients
/// cannot be resolved to a relative accuracy of `1e-4`. The check is only
/// meaningful where the loss is differentiable; at freshly initialized
/// parameters (zero biases) ReLU inputs can sit exactly on the kink.
pub fn grad_check(params: &HeuristicParams, data: &Dataset, i: usize, seed: u64) -> Result<f64> {
    if i >= data.len() {
        return input(format!("example {i} out of range"));
    }
    let mut grads = params.zero_grads();
    example_loss_grad(params, data, i, 1.0, &mut grads);
    let flat: Vec<(usize, usize)> =
        params.tensors.iter().enumerate().flat_map(|(t, x)| (0..x.data.len()).map(move |j| (t, j))).collect();
    let count = (flat.len() / 100).max(16).min(flat.len());
    let mut rng = StreamKey::new(seed, 0x9c).rng(0);
    let picks: Vec<(usize, usize)> = (0..count).map(|_| flat[rng.gen_range(0..flat.len())]).collect();
    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (t, j) in picks {
        let w = params.tensors[t].data[j];
        probe.tensors[t].data[j] = w + h;
        let up = example_loss(&probe, data, i);
        probe.tensors[t].data[j] = w - h;
        let down = example_loss(&probe, data, i);
        probe.tensors[t].data[j] = w;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[t][j];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Fraction of imitation examples whose argmax level equals `k*`.
pub fn il_accuracy(params: &HeuristicParams, data: &[IlExample]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let ds = Dataset::Il(data.to_vec());
    let hits = (0..data.len())
        .filter(|&i| {
            let (q, _) = ds.query(i);
            let mut t = Tape::new(params);
            let z = forward(&mut t, params, &q);
            crate::learn::model::argmax(&t.value(z).data) == data[i].k_star
        })
        .count();
    hits as f64 / data.len() as f64
}

/// Fraction of feasibility examples classified correctly at threshold 0.5.
pub fn pf_accuracy(params: &HeuristicParams, data: &[PfExample]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let ds = Dataset::Pf(data.to_vec());
    let hits = (0..data.len())
        .filter(|&i| {
            let (q, _) = ds.query(i);
            let mut t = Tape::new(params);
            let z = forward(&mut t, params, &q);
            (t.value(z).data[0] > 0.0) == data[i].feasible
        })
        .count();
    hits as f64 / data.len() as f64
}

/// Softmax cross-entropy of logits `z` at `target`, for tests.
pub fn cross_entropy(z: &[f64], target: usize) -> f64 {
    log_sum_exp(z) - z[target]
}
