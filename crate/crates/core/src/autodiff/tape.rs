use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise single-input operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Relu,
    LeakyRelu(f32),
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Scale(f32),
    Clamp(f32, f32),
}

/// Pointwise two-input operations. The smaller operand broadcasts when it is
/// a scalar or its shape is a suffix of the larger operand's shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    MatMul(Var, Var),
    Reduce(Reduce, Var, Option<usize>),
    Concat(Var, Var, usize),
    Bce(Var, Var),
    Mse(Var, Var),
    CrossEntropy(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Clamp applied to probabilities before taking logarithms in [`Tape::bce`].
pub const BCE_EPS: f32 = 1e-7;

/// Linear record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Per-node gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f32]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn is_tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        tracked: bool,
    ) -> Result<Var, AutodiffError> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        Ok(self.push_raw(value, op, tracked))
    }

    // ── pointwise ──────────────────────────────────────────────────────

    pub fn unary(&mut self, op: Unary, x: Var) -> Result<Var, AutodiffError> {
        let input = self.value(x);
        let name = unary_name(op);
        if op == Unary::Log && input.data().iter().any(|&v| v <= 0.0) {
            return Err(AutodiffError::DomainError { op: name });
        }
        let data: Vec<f32> = input.data().iter().map(|&v| unary_forward(op, v)).collect();
        let value = Tensor::new(input.shape().to_vec(), data)?;
        let tracked = self.is_tracked(x);
        self.push(name, value, Op::Unary(op, x), tracked)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary(Unary::Relu, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Result<Var, AutodiffError> {
        self.unary(Unary::LeakyRelu(slope), x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary(Unary::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary(Unary::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary(Unary::Log, x)
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Result<Var, AutodiffError> {
        self.unary(Unary::Scale(factor), x)
    }

    pub fn clamp(&mut self, x: Var, lo: f32, hi: f32) -> Result<Var, AutodiffError> {
        self.unary(Unary::Clamp(lo, hi), x)
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let name = match op {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let (va, vb) = (self.value(a), self.value(b));
        let out_shape = broadcast_shape(name, va.shape(), vb.shape())?;
        let len: usize = out_shape.iter().product();
        let (da, db) = (va.data(), vb.data());
        let (la, lb) = (da.len(), db.len());
        let data: Vec<f32> = (0..len)
            .map(|i| {
                let (x, y) = (da[i % la], db[i % lb]);
                match op {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let value = Tensor::new(out_shape, data)?;
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        self.push(name, value, Op::Binary(op, a, b), tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Binary::Mul, a, b)
    }

    // ── linear algebra and structure ───────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        let mismatch = || AutodiffError::ShapeMismatch {
            op: "matmul",
            left: va.shape().to_vec(),
            right: vb.shape().to_vec(),
        };
        if va.rank() != 2 || vb.rank() != 2 {
            return Err(mismatch());
        }
        let (m, k) = va.dims2()?;
        let (k2, n) = vb.dims2()?;
        if k != k2 {
            return Err(mismatch());
        }
        let mut out = vec![0.0f32; m * n];
        gemm(m, k, n, va.data(), (k, 1), vb.data(), (n, 1), &mut out, 0.0);
        let value = Tensor::new(vec![m, n], out)?;
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        self.push("matmul", value, Op::MatMul(a, b), tracked)
    }

    pub fn reduce(
        &mut self,
        op: Reduce,
        x: Var,
        axis: Option<usize>,
    ) -> Result<Var, AutodiffError> {
        let input = self.value(x);
        let shape = input.shape();
        let value = match axis {
            None => {
                let total: f64 = input.data().iter().map(|&v| f64::from(v)).sum();
                let v = match op {
                    Reduce::Sum => total,
                    Reduce::Mean => total / input.len() as f64,
                };
                Tensor::scalar(v as f32)
            }
            Some(ax) => {
                if ax >= shape.len() {
                    return Err(AutodiffError::AxisOutOfRange {
                        axis: ax,
                        rank: shape.len(),
                    });
                }
                let (outer, n, inner) = axis_split(shape, ax);
                let mut acc = vec![0.0f64; outer * inner];
                let data = input.data();
                for o in 0..outer {
                    for j in 0..n {
                        let base = (o * n + j) * inner;
                        for i in 0..inner {
                            acc[o * inner + i] += f64::from(data[base + i]);
                        }
                    }
                }
                let div = if op == Reduce::Mean { n as f64 } else { 1.0 };
                let mut out_shape: Vec<usize> = shape.to_vec();
                out_shape.remove(ax);
                if out_shape.is_empty() {
                    out_shape.push(1);
                }
                Tensor::new(out_shape, acc.iter().map(|&v| (v / div) as f32).collect())?
            }
        };
        let name = if op == Reduce::Sum { "sum" } else { "mean" };
        let tracked = self.is_tracked(x);
        self.push(name, value, Op::Reduce(op, x, axis), tracked)
    }

    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var, AutodiffError> {
        self.reduce(Reduce::Sum, x, axis)
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var, AutodiffError> {
        self.reduce(Reduce::Mean, x, axis)
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        let mismatch = || AutodiffError::ShapeMismatch {
            op: "concat",
            left: sa.to_vec(),
            right: sb.to_vec(),
        };
        if sa.len() != sb.len() {
            return Err(mismatch());
        }
        if axis >= sa.len() {
            return Err(AutodiffError::AxisOutOfRange {
                axis,
                rank: sa.len(),
            });
        }
        if sa
            .iter()
            .zip(sb)
            .enumerate()
            .any(|(i, (x, y))| i != axis && x != y)
        {
            return Err(mismatch());
        }
        let outer: usize = sa[..axis].iter().product();
        let (ia, ib) = (va.len() / outer, vb.len() / outer);
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for o in 0..outer {
            data.extend_from_slice(&va.data()[o * ia..(o + 1) * ia]);
            data.extend_from_slice(&vb.data()[o * ib..(o + 1) * ib]);
        }
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let value = Tensor::new(shape, data)?;
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        self.push("concat", value, Op::Concat(a, b, axis), tracked)
    }

    // ── losses ─────────────────────────────────────────────────────────

    /// Bernoulli negative log-likelihood, summed over features and averaged
    /// over the leading (batch) axis.
    pub fn bce(&mut self, prediction: Var, target: Var) -> Result<Var, AutodiffError> {
        let (vp, vt) = (self.value(prediction), self.value(target));
        same_shape("bce", vp, vt)?;
        let batch = batch_len(vp);
        let total: f64 = vp
            .data()
            .iter()
            .zip(vt.data())
            .map(|(&p, &t)| {
                let p = f64::from(p.clamp(BCE_EPS, 1.0 - BCE_EPS));
                let t = f64::from(t);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum();
        let value = Tensor::scalar((total / batch as f64) as f32);
        let tracked = self.is_tracked(prediction) || self.is_tracked(target);
        self.push("bce", value, Op::Bce(prediction, target), tracked)
    }

    /// Squared error, summed over features and averaged over the batch axis.
    pub fn mse(&mut self, prediction: Var, target: Var) -> Result<Var, AutodiffError> {
        let (vp, vt) = (self.value(prediction), self.value(target));
        same_shape("mse", vp, vt)?;
        let batch = batch_len(vp);
        let total: f64 = vp
            .data()
            .iter()
            .zip(vt.data())
            .map(|(&p, &t)| {
                let d = f64::from(p) - f64::from(t);
                d * d
            })
            .sum();
        let value = Tensor::scalar((total / batch as f64) as f32);
        let tracked = self.is_tracked(prediction) || self.is_tracked(target);
        self.push("mse", value, Op::Mse(prediction, target), tracked)
    }

    /// Softmax cross-entropy of `[batch, classes]` logits against class ids,
    /// averaged over the batch.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, AutodiffError> {
        let v = self.value(logits);
        let (b, c) = v.dims2()?;
        if labels.len() != b {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy",
                left: v.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let mut total = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(AutodiffError::LabelOutOfRange { label, classes: c });
            }
            let row = v.row(r);
            total += log_sum_exp(row) - f64::from(row[label]);
        }
        let value = Tensor::scalar((total / b as f64) as f32);
        let tracked = self.is_tracked(logits);
        self.push(
            "cross_entropy",
            value,
            Op::CrossEntropy(logits, labels.to_vec()),
            tracked,
        )
    }

    // ── reverse pass ───────────────────────────────────────────────────

    /// Propagates d(loss)/d(node) to every tracked node. A tape supports a
    /// single backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::StaleTape);
        }
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        if !self.is_tracked(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Unary(op, x) => {
                    if self.is_tracked(*x) {
                        let xin = self.value(*x).data();
                        let y = node.value.data();
                        let dx = accum(&mut grads, *x, xin.len());
                        for i in 0..xin.len() {
                            dx[i] += g[i] * unary_derivative(*op, xin[i], y[i]);
                        }
                    }
                }
                Op::Binary(op, a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let (la, lb) = (va.len(), vb.len());
                    if self.is_tracked(*a) {
                        let da = accum(&mut grads, *a, la);
                        for (i, &gi) in g.iter().enumerate() {
                            da[i % la] += match op {
                                Binary::Add | Binary::Sub => gi,
                                Binary::Mul => gi * vb[i % lb],
                            };
                        }
                    }
                    if self.is_tracked(*b) {
                        let db = accum(&mut grads, *b, lb);
                        for (i, &gi) in g.iter().enumerate() {
                            db[i % lb] += match op {
                                Binary::Add => gi,
                                Binary::Sub => -gi,
                                Binary::Mul => gi * va[i % la],
                            };
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k) = va.dims2()?;
                    let n = vb.shape()[1];
                    if self.is_tracked(*a) {
                        // dA = G · Bᵀ
                        let da = accum(&mut grads, *a, m * k);
                        gemm(m, n, k, &g, (n, 1), vb.data(), (1, n), da, 1.0);
                    }
                    if self.is_tracked(*b) {
                        // dB = Aᵀ · G
                        let db = accum(&mut grads, *b, k * n);
                        gemm(k, m, n, va.data(), (1, k), &g, (n, 1), db, 1.0);
                    }
                }
                Op::Reduce(op, x, axis) => {
                    if self.is_tracked(*x) {
                        let input = self.value(*x);
                        let len = input.len();
                        match axis {
                            None => {
                                let s = if *op == Reduce::Mean {
                                    g[0] / len as f32
                                } else {
                                    g[0]
                                };
                                let dx = accum(&mut grads, *x, len);
                                dx.iter_mut().for_each(|d| *d += s);
                            }
                            Some(ax) => {
                                let (outer, n, inner) = axis_split(input.shape(), *ax);
                                let div = if *op == Reduce::Mean { n as f32 } else { 1.0 };
                                let dx = accum(&mut grads, *x, len);
                                for o in 0..outer {
                                    for j in 0..n {
                                        let base = (o * n + j) * inner;
                                        for i in 0..inner {
                                            dx[base + i] += g[o * inner + i] / div;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Concat(a, b, axis) => {
                    let sa = self.value(*a).shape();
                    let outer: usize = sa[..*axis].iter().product();
                    let (la, lb) = (self.value(*a).len(), self.value(*b).len());
                    let (ia, ib) = (la / outer, lb / outer);
                    if self.is_tracked(*a) {
                        let da = accum(&mut grads, *a, la);
                        for o in 0..outer {
                            let src = &g[o * (ia + ib)..o * (ia + ib) + ia];
                            for (d, s) in da[o * ia..(o + 1) * ia].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    if self.is_tracked(*b) {
                        let db = accum(&mut grads, *b, lb);
                        for o in 0..outer {
                            let start = o * (ia + ib) + ia;
                            let src = &g[start..start + ib];
                            for (d, s) in db[o * ib..(o + 1) * ib].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                }
                Op::Bce(p, t) => {
                    let (vp, vt) = (self.value(*p), self.value(*t));
                    let scale = g[0] / batch_len(vp) as f32;
                    let (pd, td) = (vp.data(), vt.data());
                    if self.is_tracked(*p) {
                        let dp = accum(&mut grads, *p, pd.len());
                        for i in 0..pd.len() {
                            let pc = pd[i].clamp(BCE_EPS, 1.0 - BCE_EPS);
                            dp[i] += scale * (pc - td[i]) / (pc * (1.0 - pc));
                        }
                    }
                    if self.is_tracked(*t) {
                        let dt = accum(&mut grads, *t, td.len());
                        for i in 0..td.len() {
                            let pc = pd[i].clamp(BCE_EPS, 1.0 - BCE_EPS);
                            dt[i] += scale * ((1.0 - pc).ln() - pc.ln());
                        }
                    }
                }
                Op::Mse(p, t) => {
                    let (vp, vt) = (self.value(*p), self.value(*t));
                    let scale = 2.0 * g[0] / batch_len(vp) as f32;
                    let (pd, td) = (vp.data(), vt.data());
                    if self.is_tracked(*p) {
                        let dp = accum(&mut grads, *p, pd.len());
                        for i in 0..pd.len() {
                            dp[i] += scale * (pd[i] - td[i]);
                        }
                    }
                    if self.is_tracked(*t) {
                        let dt = accum(&mut grads, *t, td.len());
                        for i in 0..td.len() {
                            dt[i] -= scale * (pd[i] - td[i]);
                        }
                    }
                }
                Op::CrossEntropy(x, labels) => {
                    if self.is_tracked(*x) {
                        let v = self.value(*x);
                        let (b, c) = v.dims2()?;
                        let scale = g[0] / b as f32;
                        let rows: Vec<Vec<f32>> = (0..b).map(|r| softmax(v.row(r))).collect();
                        let dx = accum(&mut grads, *x, b * c);
                        for (r, probs) in rows.iter().enumerate() {
                            for (j, &p) in probs.iter().enumerate() {
                                let onehot = if j == labels[r] { 1.0 } else { 0.0 };
                                dx[r * c + j] += scale * (p - onehot);
                            }
                        }
                    }
                }
            }
            // Interior gradients are dropped once propagated; only leaves keep theirs.
        }
        Ok(Gradients { grads })
    }
}

fn accum(grads: &mut [Option<Vec<f32>>], var: Var, len: usize) -> &mut Vec<f32> {
    grads[var.0].get_or_insert_with(|| vec![0.0; len])
}

fn unary_name(op: Unary) -> &'static str {
    match op {
        Unary::Relu => "relu",
        Unary::LeakyRelu(_) => "leaky_relu",
        Unary::Sigmoid => "sigmoid",
        Unary::Tanh => "tanh",
        Unary::Exp => "exp",
        Unary::Log => "log",
        Unary::Scale(_) => "scale",
        Unary::Clamp(..) => "clamp",
    }
}

fn unary_forward(op: Unary, x: f32) -> f32 {
    match op {
        Unary::Relu => x.max(0.0),
        Unary::LeakyRelu(s) => {
            if x > 0.0 {
                x
            } else {
                s * x
            }
        }
        Unary::Sigmoid => sigmoid(x),
        Unary::Tanh => x.tanh(),
        Unary::Exp => x.exp(),
        Unary::Log => x.ln(),
        Unary::Scale(c) => c * x,
        Unary::Clamp(lo, hi) => x.clamp(lo, hi),
    }
}

fn unary_derivative(op: Unary, x: f32, y: f32) -> f32 {
    match op {
        Unary::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Unary::LeakyRelu(s) => {
            if x > 0.0 {
                1.0
            } else {
                s
            }
        }
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Tanh => 1.0 - y * y,
        Unary::Exp => y,
        Unary::Log => 1.0 / x,
        Unary::Scale(c) => c,
        Unary::Clamp(lo, hi) => {
            if (lo..=hi).contains(&x) {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f32]) -> f64 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let s: f64 = row.iter().map(|&v| f64::from(v - max).exp()).sum();
    f64::from(max) + s.ln()
}

fn softmax(row: &[f32]) -> Vec<f32> {
    let lse = log_sum_exp(row);
    row.iter()
        .map(|&v| (f64::from(v) - lse).exp() as f32)
        .collect()
}

fn broadcast_shape(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<usize>, AutodiffError> {
    let (la, lb): (usize, usize) = (a.iter().product(), b.iter().product());
    if a == b || lb == 1 || (a.ends_with(b) && la >= lb) {
        Ok(a.to_vec())
    } else if la == 1 || b.ends_with(a) {
        Ok(b.to_vec())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), AutodiffError> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
    }
}

fn batch_len(t: &Tensor) -> usize {
    if t.rank() >= 2 {
        t.shape()[0]
    } else {
        1
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `c = a·b + beta·c` for row-major `c` of shape m×n, with explicit
/// (row, column) strides for `a` (m×k) and `b` (k×n).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (usize, usize),
    b: &[f32],
    b_strides: (usize, usize),
    c: &mut [f32],
    beta: f32,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices cover every index reachable through the given
    // dimensions and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
