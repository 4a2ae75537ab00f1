//! Graph state encoder and the two prediction heads.
//!
//! A state is a fully connected graph over the movable objects. Node inputs
//! are `[x, y, sin θ, cos θ, w, h]`; edge inputs are the pose of the source
//! relative to the destination, `[Δx, Δy, sin Δθ, cos Δθ]`. Each round updates
//! every edge from its own feature and both endpoint features, then every node
//! from its feature and the mean of its incoming edges. The state feature is a
//! global network applied to the mean node feature.
//!
//! The imitation head scores every level of a dead-end trajectory; the
//! feasibility head scores one (state, future objects) pair.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input, Error, Result};
use crate::learn::tape::{sigmoid, softmax, Mat, ParamStore, Tape, Var};
use crate::problem::{ObjectKind, ObjectSpec, Pose2};
use crate::sampling::StreamKey;

pub const NODE_FEATURES: usize = 6;
pub const EDGE_FEATURES: usize = 4;
pub const OBJECT_FEATURES: usize = 3;
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Il,
    Pf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Elman cells; bidirectional for the imitation head.
    Rnn,
    /// Each step sees its own feature, the sequence mean, and its position.
    MeanPool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub head: Head,
    /// Node, edge, and global feature size.
    pub width: usize,
    /// Message-passing rounds.
    pub rounds: usize,
    /// Hidden layers of the node, edge, and global networks.
    pub net_hidden: Vec<usize>,
    pub aggregator: Aggregator,
    pub rnn_hidden: usize,
    pub object_width: usize,
    pub mlp1: Vec<usize>,
    pub mlp2: Vec<usize>,
}

impl ModelConfig {
    /// Small enough to train in minutes on one core.
    pub fn desk(head: Head) -> Self {
        Self {
            head,
            width: 32,
            rounds: 2,
            net_hidden: vec![32],
            aggregator: Aggregator::Rnn,
            rnn_hidden: 32,
            object_width: 32,
            mlp1: vec![32],
            mlp2: vec![32, 32],
        }
    }

    /// Layer sizes of the published architecture table.
    pub fn paper(head: Head) -> Self {
        Self {
            head,
            width: 128,
            rounds: 2,
            net_hidden: vec![128, 128],
            aggregator: Aggregator::Rnn,
            rnn_hidden: 256,
            object_width: 256,
            mlp1: vec![128],
            mlp2: vec![128, 128],
        }
    }

    /// Uniform width `w` everywhere; used for small test models.
    pub fn tiny(head: Head, w: usize) -> Self {
        Self {
            head,
            width: w,
            rounds: 2,
            net_hidden: vec![w],
            aggregator: Aggregator::Rnn,
            rnn_hidden: w,
            object_width: w,
            mlp1: vec![w],
            mlp2: vec![w, w],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.width, self.rnn_hidden, self.object_width];
        if sizes.contains(&0) || self.net_hidden.contains(&0) || self.mlp1.contains(&0) || self.mlp2.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// One named weight tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: usize,
    b: usize,
}

#[derive(Clone, Debug)]
struct Mlp {
    layers: Vec<Dense>,
}

#[derive(Clone, Debug)]
struct EdgeNet {
    w_edge: usize,
    w_src: usize,
    w_dst: usize,
    b: usize,
    rest: Mlp,
}

#[derive(Clone, Debug)]
struct Round {
    edge: EdgeNet,
    node: Mlp,
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    wx: usize,
    wh: usize,
    b: usize,
}

#[derive(Clone, Debug)]
enum HeadLayout {
    IlRnn { fwd: Cell, bwd: Cell, mlp2: Mlp },
    IlMean { mlp2: Mlp },
    PfRnn { start: Dense, cell: Cell, mlp2: Mlp },
    PfMean { mlp2: Mlp },
}

#[derive(Clone, Debug)]
struct Layout {
    node_in: Mlp,
    edge_in: Mlp,
    rounds: Vec<Round>,
    global: Mlp,
    mlp1: Mlp,
    head: HeadLayout,
}

struct Builder {
    tensors: Vec<Tensor>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.tensors.push(Tensor { name, rows, cols, data: vec![0.0; rows * cols] });
        self.tensors.len() - 1
    }

    fn dense(&mut self, name: &str, i: usize, o: usize) -> Dense {
        Dense { w: self.add(format!("{name}.w"), i, o), b: self.add(format!("{name}.b"), 1, o) }
    }

    fn mlp(&mut self, name: &str, input: usize, hidden: &[usize], out: usize) -> Mlp {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(out);
        let layers = dims.windows(2).enumerate().map(|(i, d)| self.dense(&format!("{name}.{i}"), d[0], d[1])).collect();
        Mlp { layers }
    }

    fn cell(&mut self, name: &str, input: usize, hidden: usize) -> Cell {
        Cell {
            wx: self.add(format!("{name}.wx"), input, hidden),
            wh: self.add(format!("{name}.wh"), hidden, hidden),
            b: self.add(format!("{name}.b"), 1, hidden),
        }
    }
}

fn build(cfg: &ModelConfig) -> (Layout, Vec<Tensor>) {
    let d = cfg.width;
    let mut b = Builder { tensors: Vec::new() };
    let node_in = b.mlp("node_in", NODE_FEATURES, &cfg.net_hidden, d);
    let edge_in = b.mlp("edge_in", EDGE_FEATURES, &cfg.net_hidden, d);
    let rounds = (0..cfg.rounds)
        .map(|g| {
            let first = cfg.net_hidden.first().copied().unwrap_or(d);
            let edge = EdgeNet {
                w_edge: b.add(format!("round{g}.edge.0.w_edge"), d, first),
                w_src: b.add(format!("round{g}.edge.0.w_src"), d, first),
                w_dst: b.add(format!("round{g}.edge.0.w_dst"), d, first),
                b: b.add(format!("round{g}.edge.0.b"), 1, first),
                rest: if cfg.net_hidden.is_empty() {
                    Mlp { layers: Vec::new() }
                } else {
                    b.mlp(&format!("round{g}.edge.rest"), first, &cfg.net_hidden[1..], d)
                },
            };
            let node = b.mlp(&format!("round{g}.node"), 2 * d, &cfg.net_hidden, d);
            Round { edge, node }
        })
        .collect();
    let global = b.mlp("global", d, &cfg.net_hidden, d);
    let o = cfg.object_width;
    let mlp1 = b.mlp("mlp1", OBJECT_FEATURES, &cfg.mlp1, o);
    let r = cfg.rnn_hidden;
    let head = match (cfg.head, cfg.aggregator) {
        (Head::Il, Aggregator::Rnn) => HeadLayout::IlRnn {
            fwd: b.cell("il.fwd", d, r),
            bwd: b.cell("il.bwd", d, r),
            mlp2: b.mlp("mlp2", 2 * r + o, &cfg.mlp2, 1),
        },
        (Head::Il, Aggregator::MeanPool) => HeadLayout::IlMean { mlp2: b.mlp("mlp2", 2 * d + 2 + o, &cfg.mlp2, 1) },
        (Head::Pf, Aggregator::Rnn) => HeadLayout::PfRnn {
            start: b.dense("pf.start", d, r),
            cell: b.cell("pf.cell", o, r),
            mlp2: b.mlp("mlp2", r, &cfg.mlp2, 1),
        },
        (Head::Pf, Aggregator::MeanPool) => HeadLayout::PfMean { mlp2: b.mlp("mlp2", d + o + 1, &cfg.mlp2, 1) },
    };
    (Layout { node_in, edge_in, rounds, global, mlp1, head }, b.tensors)
}

/// All trainable weights of one heuristic, with the configuration they belong to.
#[derive(Clone, Debug)]
pub struct HeuristicParams {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
    /// Mean training loss of the last epoch, if trained.
    pub train_loss: Option<f64>,
    layout: Layout,
}

impl ParamStore for HeuristicParams {
    fn shape(&self, idx: usize) -> (usize, usize) {
        (self.tensors[idx].rows, self.tensors[idx].cols)
    }

    fn data(&self, idx: usize) -> &[f64] {
        &self.tensors[idx].data
    }
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    format_version: u32,
    fingerprint: String,
    config: ModelConfig,
    train_loss: Option<f64>,
    tensors: Vec<Tensor>,
}

/// Hash of the configuration and the tensor layout it implies.
pub fn config_fingerprint(cfg: &ModelConfig) -> String {
    let (_, tensors) = build(cfg);
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    for t in &tensors {
        h.update(format!("{}:{}x{};", t.name, t.rows, t.cols).as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl HeuristicParams {
    /// Uniform initialization in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`;
    /// biases start at zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, mut tensors) = build(config);
        let mut rng = StreamKey::new(seed, 0x1417).rng(0);
        for t in &mut tensors {
            if t.rows == 1 && t.name.ends_with(".b") {
                continue;
            }
            let a = (6.0 / (t.rows + t.cols) as f64).sqrt();
            for v in &mut t.data {
                *v = rng.gen_range(-a..a);
            }
        }
        Ok(Self { config: config.clone(), tensors, train_loss: None, layout })
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ParamFile {
            format_version: FORMAT_VERSION,
            fingerprint: config_fingerprint(&self.config),
            config: self.config.clone(),
            train_loss: self.train_loss,
            tensors: self.tensors.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a parameter file, rejecting unknown versions, fingerprints that
    /// do not match the stored configuration, and malformed tensors.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: ParamFile = serde_json::from_str(s)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported parameter format {}", file.format_version)));
        }
        file.config.validate()?;
        if file.fingerprint != config_fingerprint(&file.config) {
            return Err(Error::Config("parameter fingerprint does not match its configuration".into()));
        }
        let (layout, expected) = build(&file.config);
        if expected.len() != file.tensors.len() {
            return Err(Error::Config("parameter file has the wrong number of tensors".into()));
        }
        for (e, t) in expected.iter().zip(&file.tensors) {
            if e.name != t.name || e.rows != t.rows || e.cols != t.cols || t.data.len() != t.rows * t.cols {
                return Err(Error::Config(format!("tensor `{}` does not match the layout", t.name)));
            }
        }
        Ok(Self { config: file.config, tensors: file.tensors, train_loss: file.train_loss, layout })
    }

    /// Like [`from_json`](Self::from_json), also requiring a specific configuration.
    pub fn from_json_expecting(s: &str, expected: &ModelConfig) -> Result<Self> {
        let p = Self::from_json(s)?;
        if config_fingerprint(&p.config) != config_fingerprint(expected) {
            return Err(Error::Config("parameter file was trained with a different configuration".into()));
        }
        Ok(p)
    }

    fn expect_head(&self, head: Head) -> Result<()> {
        if self.config.head != head {
            return Err(Error::Config(format!("expected a {head:?} model, found {:?}", self.config.head)));
        }
        Ok(())
    }
}

/// Fully connected graph over the movable objects of one state.
#[derive(Clone, Debug)]
pub struct StateGraph {
    pub nodes: Mat,
    pub edges: Mat,
    src: Rc<Vec<usize>>,
    dst: Rc<Vec<usize>>,
    incoming: Rc<Vec<Vec<usize>>>,
}

impl StateGraph {
    pub fn new(poses: &[Pose2], objects: &[ObjectSpec]) -> Result<Self> {
        let n = poses.len();
        if n == 0 {
            return input("state graph needs at least one object");
        }
        if objects.len() != n {
            return input(format!("{} poses for {} objects", n, objects.len()));
        }
        let mut nodes = Vec::with_capacity(n * NODE_FEATURES);
        for (p, o) in poses.iter().zip(objects) {
            nodes.extend_from_slice(&[p.x, p.y, p.theta.sin(), p.theta.cos(), o.w, o.h]);
        }
        let mut edges = Vec::with_capacity(n * (n - 1) * EDGE_FEATURES);
        let mut src = Vec::with_capacity(n * (n - 1));
        let mut dst = Vec::with_capacity(n * (n - 1));
        let mut incoming = vec![Vec::with_capacity(n.saturating_sub(1)); n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (a, b) = (poses[j], poses[i]);
                let dt = a.theta - b.theta;
                edges.extend_from_slice(&[a.x - b.x, a.y - b.y, dt.sin(), dt.cos()]);
                incoming[i].push(src.len());
                src.push(j);
                dst.push(i);
            }
        }
        let e = src.len();
        Ok(Self {
            nodes: Mat::from_vec(n, NODE_FEATURES, nodes),
            edges: Mat::from_vec(e, EDGE_FEATURES, edges),
            src: Rc::new(src),
            dst: Rc::new(dst),
            incoming: Rc::new(incoming),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.rows
    }

    pub fn n_edges(&self) -> usize {
        self.edges.rows
    }
}

pub fn object_features(o: &ObjectSpec) -> Mat {
    let target = if o.kind == ObjectKind::Target { 1.0 } else { 0.0 };
    Mat::from_vec(1, OBJECT_FEATURES, vec![o.w, o.h, target])
}

fn apply_mlp<P: ParamStore>(t: &mut Tape<'_, P>, mlp: &Mlp, mut x: Var) -> Var {
    for (i, l) in mlp.layers.iter().enumerate() {
        if i > 0 {
            x = t.relu(x);
        }
        x = t.linear(x, l.w, Some(l.b));
    }
    x
}

fn cell_step<P: ParamStore>(t: &mut Tape<'_, P>, c: &Cell, x: Var, h: Option<Var>) -> Var {
    let mut z = t.linear(x, c.wx, Some(c.b));
    if let Some(h) = h {
        let r = t.linear(h, c.wh, None);
        z = t.add(z, r);
    }
    t.tanh(z)
}

fn encode_on<P: ParamStore>(t: &mut Tape<'_, P>, l: &Layout, g: &StateGraph) -> Var {
    let x = t.input(g.nodes.clone());
    let mut h = apply_mlp(t, &l.node_in, x);
    let ex = t.input(g.edges.clone());
    let mut e = apply_mlp(t, &l.edge_in, ex);
    for r in &l.rounds {
        let hs = t.linear(h, r.edge.w_src, None);
        let hd = t.linear(h, r.edge.w_dst, None);
        let from = t.gather(hs, g.src.clone());
        let to = t.gather(hd, g.dst.clone());
        let own = t.linear(e, r.edge.w_edge, Some(r.edge.b));
        let z = t.add(own, from);
        let mut z = t.add(z, to);
        if !r.edge.rest.layers.is_empty() {
            z = t.relu(z);
            z = apply_mlp(t, &r.edge.rest, z);
        }
        e = z;
        let agg = t.segment_mean(e, g.incoming.clone());
        let hin = t.concat(&[h, agg]);
        h = apply_mlp(t, &r.node, hin);
    }
    let pooled = t.mean_rows(h);
    apply_mlp(t, &l.global, pooled)
}

/// Level logits `1 × k_d` from per-state features.
fn il_logits_on<P: ParamStore>(t: &mut Tape<'_, P>, l: &Layout, feats: &[Var], object: &ObjectSpec) -> Var {
    let ox = t.input(object_features(object));
    let obj = apply_mlp(t, &l.mlp1, ox);
    let k_d = feats.len();
    let temporal: Vec<Var> = match &l.head {
        HeadLayout::IlRnn { fwd, bwd, .. } => {
            let mut f = Vec::with_capacity(k_d);
            let mut h = None;
            for &x in feats {
                let n = cell_step(t, fwd, x, h);
                f.push(n);
                h = Some(n);
            }
            let mut b = vec![f[0]; k_d];
            let mut h = None;
            for i in (0..k_d).rev() {
                let n = cell_step(t, bwd, feats[i], h);
                b[i] = n;
                h = Some(n);
            }
            (0..k_d).map(|i| t.concat(&[f[i], b[i]])).collect()
        }
        HeadLayout::IlMean { .. } => {
            let all = t.stack_rows(feats);
            let mean = t.mean_rows(all);
            (0..k_d)
                .map(|i| {
                    let pos = t.input(Mat::from_vec(1, 2, vec![(i + 1) as f64 / k_d as f64, 1.0 / k_d as f64]));
                    t.concat(&[feats[i], mean, pos])
                })
                .collect()
        }
        _ => unreachable!("imitation logits requested from a feasibility model"),
    };
    let mlp2 = match &l.head {
        HeadLayout::IlRnn { mlp2, .. } | HeadLayout::IlMean { mlp2 } => mlp2,
        _ => unreachable!(),
    };
    let scores: Vec<Var> = temporal
        .into_iter()
        .map(|tk| {
            let z = t.concat(&[tk, obj]);
            apply_mlp(t, mlp2, z)
        })
        .collect();
    let col = t.stack_rows(&scores);
    // k_d × 1 -> 1 × k_d: concatenate the rows as columns.
    let cols: Vec<Var> = (0..k_d).map(|i| t.row(col, i)).collect();
    t.concat(&cols)
}

fn pf_logit_on<P: ParamStore>(t: &mut Tape<'_, P>, l: &Layout, state: Var, future: &[ObjectSpec]) -> Var {
    let objs: Vec<Var> = future
        .iter()
        .map(|o| {
            let x = t.input(object_features(o));
            apply_mlp(t, &l.mlp1, x)
        })
        .collect();
    match &l.head {
        HeadLayout::PfRnn { start, cell, mlp2 } => {
            let s = t.linear(state, start.w, Some(start.b));
            let mut h = t.tanh(s);
            for &o in &objs {
                h = cell_step(t, cell, o, Some(h));
            }
            apply_mlp(t, mlp2, h)
        }
        HeadLayout::PfMean { mlp2 } => {
            let all = t.stack_rows(&objs);
            let mean = t.mean_rows(all);
            let len = t.input(Mat::from_vec(1, 1, vec![1.0 / future.len() as f64]));
            let z = t.concat(&[state, mean, len]);
            apply_mlp(t, mlp2, z)
        }
        _ => unreachable!("feasibility logit requested from an imitation model"),
    }
}

/// State feature vector.
pub fn encode_state(graph: &StateGraph, params: &HeuristicParams) -> Result<Vec<f64>> {
    let mut t = Tape::new(params);
    let v = encode_on(&mut t, &params.layout, graph);
    Ok(t.value(v).data.clone())
}

/// Which head a sample is for, with its inputs.
pub(crate) enum Query<'a> {
    Il { graphs: &'a [StateGraph], object: &'a ObjectSpec },
    Pf { graph: &'a StateGraph, future: &'a [ObjectSpec] },
}

/// Builds the head output for `q` on tape `t`: IL logits `1 × k_d` or the PF logit `1 × 1`.
pub(crate) fn forward<'p>(t: &mut Tape<'p, HeuristicParams>, params: &HeuristicParams, q: &Query<'_>) -> Var {
    let l = &params.layout;
    match q {
        Query::Il { graphs, object } => {
            let feats: Vec<Var> = graphs.iter().map(|g| encode_on(t, l, g)).collect();
            il_logits_on(t, l, &feats, object)
        }
        Query::Pf { graph, future } => {
            let s = encode_on(t, l, graph);
            pf_logit_on(t, l, s, future)
        }
    }
}

/// IL logits from precomputed state features.
pub(crate) fn il_logits_from_features(params: &HeuristicParams, feats: &[Vec<f64>], object: &ObjectSpec) -> Vec<f64> {
    let mut t = Tape::new(params);
    let vars: Vec<Var> = feats.iter().map(|f| t.input(Mat::from_vec(1, f.len(), f.clone()))).collect();
    let z = il_logits_on(&mut t, &params.layout, &vars, object);
    t.value(z).data.clone()
}

/// PF probability from a precomputed state feature.
pub(crate) fn pf_prob_from_feature(params: &HeuristicParams, feat: &[f64], future: &[ObjectSpec]) -> f64 {
    let mut t = Tape::new(params);
    let s = t.input(Mat::from_vec(1, feat.len(), feat.to_vec()));
    let z = pf_logit_on(&mut t, &params.layout, s, future);
    sigmoid(t.value(z).data[0])
}

/// Distribution over levels `0..k_d` of being `k*`, from `s̄_1 .. s̄_{k_d}`.
pub fn il_predict(
    trajectory: &[Vec<Pose2>],
    objects: &[ObjectSpec],
    dead_end_object: &ObjectSpec,
    params: &HeuristicParams,
) -> Result<Vec<f64>> {
    params.expect_head(Head::Il)?;
    if trajectory.is_empty() {
        return input("imitation prediction needs a non-empty trajectory");
    }
    let graphs = trajectory.iter().map(|s| StateGraph::new(s, objects)).collect::<Result<Vec<_>>>()?;
    let mut t = Tape::new(params);
    let z = forward(&mut t, params, &Query::Il { graphs: &graphs, object: dead_end_object });
    Ok(softmax(&t.value(z).data))
}

/// Probability that the levels of `future` can all be refined from `state`.
pub fn pf_predict(state: &[Pose2], objects: &[ObjectSpec], future: &[ObjectSpec], params: &HeuristicParams) -> Result<f64> {
    params.expect_head(Head::Pf)?;
    if future.is_empty() {
        return input("feasibility prediction needs at least one future object");
    }
    let graph = StateGraph::new(state, objects)?;
    let mut t = Tape::new(params);
    let z = forward(&mut t, params, &Query::Pf { graph: &graph, future });
    Ok(sigmoid(t.value(z).data[0]))
}

/// Adaptive threshold: `ε = (max p + min p) / 2`, then the first level with
/// `p_k < ε`; the last level if none qualifies.
pub fn select_kstar_pf(p: &[f64]) -> Result<usize> {
    if p.is_empty() {
        return input("threshold selection needs at least one probability");
    }
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let eps = 0.5 * (max + min);
    Ok(p.iter().position(|&v| v < eps).unwrap_or(p.len() - 1))
}

/// Index of the largest probability; the first one on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}
