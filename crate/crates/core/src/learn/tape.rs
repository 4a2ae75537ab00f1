//! A small reverse-mode tape over dense row-major matrices.
//!
//! Every forward op appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates gradients. Parameters enter the
//! tape by index so their gradients can be read back in one flat buffer.

use std::rc::Rc;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match its shape");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `out[r×o] = x[r×i] · w[i×o]`, accumulated into `out`.
fn matmul_acc(x: &Mat, w: &[f64], o: usize, out: &mut Mat) {
    for r in 0..x.rows {
        let xr = x.row(r);
        let dst = out.row_mut(r);
        for (i, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wr = &w[i * o..(i + 1) * o];
            for (d, &wv) in dst.iter_mut().zip(wr) {
                *d += xv * wv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(usize),
    /// `x · W (+ b)`, with `W` and `b` parameters.
    Linear { x: Var, w: usize, b: Option<usize> },
    Add(Var, Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Gather(Var, Rc<Vec<usize>>),
    /// Row `i` of the output is the mean of the rows listed in `groups[i]`.
    SegmentMean(Var, Rc<Vec<Vec<usize>>>),
    MeanRows(Var),
    Relu(Var),
    Tanh(Var),
    /// Cross-entropy of a `1×k` logit row against a class index.
    SoftmaxCe(Var, usize),
    /// Logistic loss of a `1×1` logit against a 0/1 target.
    BceLogits(Var, f64),
}

struct Node {
    op: Op,
    value: Mat,
}

/// Parameter tensors addressed by index, each `rows × cols`.
pub trait ParamStore {
    fn shape(&self, idx: usize) -> (usize, usize);
    fn data(&self, idx: usize) -> &[f64];
}

pub struct Tape<'p, P: ParamStore> {
    params: &'p P,
    nodes: Vec<Node>,
}

impl<'p, P: ParamStore> Tape<'p, P> {
    pub fn new(params: &'p P) -> Self {
        Self { params, nodes: Vec::with_capacity(256) }
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(Op::Input, m)
    }

    pub fn param(&mut self, idx: usize) -> Var {
        let (r, c) = self.params.shape(idx);
        let m = Mat::from_vec(r, c, self.params.data(idx).to_vec());
        self.push(Op::Param(idx), m)
    }

    pub fn linear(&mut self, x: Var, w: usize, b: Option<usize>) -> Var {
        let (i, o) = self.params.shape(w);
        let xm = &self.nodes[x.0].value;
        assert_eq!(xm.cols, i, "linear input width {} does not match weight rows {i}", xm.cols);
        let mut out = Mat::zeros(xm.rows, o);
        if let Some(b) = b {
            let bias = self.params.data(b);
            for r in 0..xm.rows {
                out.row_mut(r).copy_from_slice(bias);
            }
        }
        matmul_acc(xm, self.params.data(w), o, &mut out);
        self.push(Op::Linear { x, w, b }, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        assert_eq!((out.rows, out.cols), (self.nodes[b.0].value.rows, self.nodes[b.0].value.cols));
        out.add_assign(&self.nodes[b.0].value);
        self.push(Op::Add(a, b), out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0].0].value.rows;
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = &self.nodes[p.0].value;
            assert_eq!(m.rows, rows, "concat parts disagree on row count");
            for r in 0..rows {
                out.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(Op::Concat(parts.to_vec()), out)
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.nodes[parts[0].0].value.cols;
        let mut data = Vec::new();
        for p in parts {
            let m = &self.nodes[p.0].value;
            assert_eq!(m.cols, cols, "stacked rows disagree on width");
            data.extend_from_slice(&m.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Op::StackRows(parts.to_vec()), Mat::from_vec(rows, cols, data))
    }

    pub fn row(&mut self, x: Var, r: usize) -> Var {
        let m = &self.nodes[x.0].value;
        let out = Mat::from_vec(1, m.cols, m.row(r).to_vec());
        self.push(Op::Row(x, r), out)
    }

    pub fn gather(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Var {
        let m = &self.nodes[x.0].value;
        let mut out = Mat::zeros(idx.len(), m.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(m.row(i));
        }
        self.push(Op::Gather(x, idx), out)
    }

    pub fn segment_mean(&mut self, x: Var, groups: Rc<Vec<Vec<usize>>>) -> Var {
        let m = &self.nodes[x.0].value;
        let mut out = Mat::zeros(groups.len(), m.cols);
        for (o, g) in groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let s = 1.0 / g.len() as f64;
            let dst = out.row_mut(o);
            for &i in g {
                for (d, v) in dst.iter_mut().zip(m.row(i)) {
                    *d += s * v;
                }
            }
        }
        self.push(Op::SegmentMean(x, groups), out)
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let m = &self.nodes[x.0].value;
        let mut out = Mat::zeros(1, m.cols);
        if m.rows > 0 {
            let s = 1.0 / m.rows as f64;
            for r in 0..m.rows {
                for (d, v) in out.data.iter_mut().zip(m.row(r)) {
                    *d += s * v;
                }
            }
        }
        self.push(Op::MeanRows(x), out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.nodes[x.0].value.clone();
        for v in &mut out.data {
            *v = v.max(0.0);
        }
        self.push(Op::Relu(x), out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.nodes[x.0].value.clone();
        for v in &mut out.data {
            *v = v.tanh();
        }
        self.push(Op::Tanh(x), out)
    }

    pub fn softmax_ce(&mut self, logits: Var, target: usize) -> Var {
        let z = &self.nodes[logits.0].value.data;
        let loss = log_sum_exp(z) - z[target];
        self.push(Op::SoftmaxCe(logits, target), Mat::from_vec(1, 1, vec![loss]))
    }

    pub fn bce_logits(&mut self, logit: Var, target: f64) -> Var {
        let z = self.nodes[logit.0].value.data[0];
        // log(1 + e^z) - t z, written to stay finite for large |z|.
        let loss = z.max(0.0) - target * z + (-z.abs()).exp().ln_1p();
        self.push(Op::BceLogits(logit, target), Mat::from_vec(1, 1, vec![loss]))
    }

    /// Backpropagates from the scalar `root`, adding `scale · ∂root/∂θ` into
    /// `grads` (one buffer per parameter tensor).
    pub fn backward(&self, root: Var, scale: f64, grads: &mut [Vec<f64>]) {
        let mut g: Vec<Option<Mat>> = vec![None; root.0 + 1];
        g[root.0] = Some(Mat::from_vec(1, 1, vec![scale]));
        for i in (0..=root.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (d, v) in grads[*p].iter_mut().zip(&gi.data) {
                        *d += v;
                    }
                }
                Op::Linear { x, w, b } => {
                    let xm = &self.nodes[x.0].value;
                    let (ni, no) = self.params.shape(*w);
                    let gw = &mut grads[*w];
                    for r in 0..xm.rows {
                        let gr = gi.row(r);
                        for (ii, &xv) in xm.row(r).iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            for (d, &gv) in gw[ii * no..(ii + 1) * no].iter_mut().zip(gr) {
                                *d += xv * gv;
                            }
                        }
                    }
                    if let Some(b) = b {
                        let gb = &mut grads[*b];
                        for r in 0..gi.rows {
                            for (d, v) in gb.iter_mut().zip(gi.row(r)) {
                                *d += v;
                            }
                        }
                    }
                    let wd = self.params.data(*w);
                    let mut gx = Mat::zeros(xm.rows, ni);
                    for r in 0..xm.rows {
                        let gr = gi.row(r);
                        let dst = gx.row_mut(r);
                        for (ii, d) in dst.iter_mut().enumerate() {
                            let wr = &wd[ii * no..(ii + 1) * no];
                            *d = wr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        }
                    }
                    accumulate(&mut g, *x, gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut g, *a, gi.clone());
                    accumulate(&mut g, *b, gi);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.nodes[p.0].value.cols;
                        let mut gp = Mat::zeros(gi.rows, cols);
                        for r in 0..gi.rows {
                            gp.row_mut(r).copy_from_slice(&gi.row(r)[off..off + cols]);
                        }
                        off += cols;
                        accumulate(&mut g, *p, gp);
                    }
                }
                Op::StackRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let m = &self.nodes[p.0].value;
                        let n = m.rows * m.cols;
                        accumulate(&mut g, *p, Mat::from_vec(m.rows, m.cols, gi.data[off..off + n].to_vec()));
                        off += n;
                    }
                }
                Op::Row(x, r) => {
                    let m = &self.nodes[x.0].value;
                    let mut gx = Mat::zeros(m.rows, m.cols);
                    gx.row_mut(*r).copy_from_slice(&gi.data);
                    accumulate(&mut g, *x, gx);
                }
                Op::Gather(x, idx) => {
                    let m = &self.nodes[x.0].value;
                    let mut gx = Mat::zeros(m.rows, m.cols);
                    for (o, &src) in idx.iter().enumerate() {
                        for (d, v) in gx.row_mut(src).iter_mut().zip(gi.row(o)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut g, *x, gx);
                }
                Op::SegmentMean(x, groups) => {
                    let m = &self.nodes[x.0].value;
                    let mut gx = Mat::zeros(m.rows, m.cols);
                    for (o, grp) in groups.iter().enumerate() {
                        if grp.is_empty() {
                            continue;
                        }
                        let s = 1.0 / grp.len() as f64;
                        for &src in grp {
                            for (d, v) in gx.row_mut(src).iter_mut().zip(gi.row(o)) {
                                *d += s * v;
                            }
                        }
                    }
                    accumulate(&mut g, *x, gx);
                }
                Op::MeanRows(x) => {
                    let m = &self.nodes[x.0].value;
                    let mut gx = Mat::zeros(m.rows, m.cols);
                    if m.rows > 0 {
                        let s = 1.0 / m.rows as f64;
                        for r in 0..m.rows {
                            for (d, v) in gx.row_mut(r).iter_mut().zip(&gi.data) {
                                *d = s * v;
                            }
                        }
                    }
                    accumulate(&mut g, *x, gx);
                }
                Op::Relu(x) => {
                    let xm = &self.nodes[x.0].value;
                    let mut gx = gi;
                    for (d, &v) in gx.data.iter_mut().zip(&xm.data) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut g, *x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = gi;
                    for (d, &y) in gx.data.iter_mut().zip(&node.value.data) {
                        *d *= 1.0 - y * y;
                    }
                    accumulate(&mut g, *x, gx);
                }
                Op::SoftmaxCe(logits, target) => {
                    let z = &self.nodes[logits.0].value;
                    let mut p = softmax(&z.data);
                    p[*target] -= 1.0;
                    let s = gi.data[0];
                    accumulate(&mut g, *logits, Mat::from_vec(1, z.cols, p.into_iter().map(|v| s * v).collect()));
                }
                Op::BceLogits(logit, target) => {
                    let z = self.nodes[logit.0].value.data[0];
                    accumulate(&mut g, *logit, Mat::from_vec(1, 1, vec![gi.data[0] * (sigmoid(z) - target)]));
                }
            }
        }
    }
}

fn accumulate(g: &mut [Option<Mat>], v: Var, m: Mat) {
    match &mut g[v.0] {
        Some(acc) => acc.add_assign(&m),
        slot @ None => *slot = Some(m),
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<(usize, usize, Vec<f64>)>);

    impl ParamStore for Flat {
        fn shape(&self, i: usize) -> (usize, usize) {
            (self.0[i].0, self.0[i].1)
        }
        fn data(&self, i: usize) -> &[f64] {
            &self.0[i].2
        }
    }

    #[test]
    fn linear_and_bce_gradients_by_hand() {
        // z = 2*x0 - x1 + 0.5, loss = bce(z, 1)
        let p = Flat(vec![(2, 1, vec![2.0, -1.0]), (1, 1, vec![0.5])]);
        let mut t = Tape::new(&p);
        let x = t.input(Mat::from_vec(1, 2, vec![0.3, 0.4]));
        let z = t.linear(x, 0, Some(1));
        let l = t.bce_logits(z, 1.0);
        let mut g = vec![vec![0.0; 2], vec![0.0; 1]];
        t.backward(l, 1.0, &mut g);
        let zv = 0.6 - 0.4 + 0.5;
        let d = sigmoid(zv) - 1.0;
        assert!((g[0][0] - d * 0.3).abs() < 1e-15);
        assert!((g[0][1] - d * 0.4).abs() < 1e-15);
        assert!((g[1][0] - d).abs() < 1e-15);
        assert!((t.value(l).data[0] - (1.0 + (-zv).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 0.0, -3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.999);
    }
}
