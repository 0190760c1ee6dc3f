//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! Nodes are appended after their inputs, so walking the tape backwards is a
//! valid reverse topological order and visits each node once. Gradients of
//! leaves persist across `backward` calls until `zero_grad`.

use std::sync::Arc;


use super::conv::{self, ConvGeom};
use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::{SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Probability floor inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        batch: usize,
    },
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    SparseDense {
        x: Var,
        w: Arc<SparseMatrix>,
        b: Option<Var>,
    },
    Relu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Reshape(Var),
    Dropout {
        x: Var,
        /// Kept positions; survivors are scaled by `keep`.
        mask: Vec<bool>,
        keep: f64,
    },
    SoftmaxT {
        x: Var,
        t: f64,
    },
    CrossEntropy {
        probs: Var,
        labels: Vec<usize>,
    },
    KlDiv {
        p: Var,
        q: Var,
    },
    Concat {
        parts: Vec<Var>,
        /// Elements per sample contributed by each part.
        spans: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let cols = *shape.last().unwrap_or(&1);
    (shape.iter().product::<usize>() / cols.max(1), cols)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a tensor; it is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let g = t.requires_grad();
        self.push(t, Op::Leaf, g)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = super::linalg::matmul_dims(self.shape(a), self.shape(b))?;
        let mut out = vec![0.0; m * n];
        gemm_nn(m, k, n, self.value(a).data(), self.value(b).data(), &mut out, 0.0);
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), g))
    }

    /// Cross-correlation of `[B,C,H,W]` (or `[C,H,W]`) input with
    /// `[O,C,KH,KW]` kernels, stride 1, zero padding `pad = [ph, pw]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        pad: [usize; 2],
    ) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ks = self.shape(kernels).to_vec();
        let (batch, chw) = match xs.len() {
            3 => (1, &xs[..]),
            4 => (xs[0], &xs[1..]),
            _ => return Err(Error::dim(format!("conv2d input must be rank 3 or 4, got {xs:?}"))),
        };
        if ks.len() != 4 || ks[1] != chw[0] {
            return Err(Error::dim(format!(
                "conv2d kernels {ks:?} do not match input {xs:?}"
            )));
        }
        if ks[2] > chw[1] + 2 * pad[0] || ks[3] > chw[2] + 2 * pad[1] {
            return Err(Error::dim(format!(
                "conv2d kernel {ks:?} larger than padded input {xs:?} (pad {pad:?})"
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ks[0]] {
                return Err(Error::dim(format!(
                    "conv2d bias {:?} for {} output channels",
                    self.shape(b),
                    ks[0]
                )));
            }
        }
        let geom = ConvGeom {
            c: chw[0],
            h: chw[1],
            w: chw[2],
            o: ks[0],
            kh: ks[2],
            kw: ks[3],
            ph: pad[0],
            pw: pad[1],
        };
        let out = conv::forward(
            self.value(input).data(),
            self.value(kernels).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
            batch,
        );
        let mut shape = vec![geom.o, geom.oh(), geom.ow()];
        if xs.len() == 4 {
            shape.insert(0, batch);
        }
        let g = self.needs(input) || self.needs(kernels) || bias.is_some_and(|b| self.needs(b));
        let op = Op::Conv2d {
            input,
            kernels,
            bias,
            geom,
            batch,
        };
        Ok(self.push(Tensor::new(shape, out)?, op, g))
    }

    /// `y = Wᵀx + b` per row of `x` (`[B,in]` or `[in]`), with `W` stored `[in,out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        if ws.len() != 2 || xs.last() != Some(&ws[0]) || xs.len() > 2 {
            return Err(Error::dim(format!("dense input {xs:?} with weight {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return Err(Error::dim(format!(
                    "dense bias {:?} for weight {ws:?}",
                    self.shape(b)
                )));
            }
        }
        let (batch, _) = rows_cols(&xs);
        let mut out = vec![0.0; batch * ws[1]];
        gemm_nn(batch, ws[0], ws[1], self.value(x).data(), self.value(w).data(), &mut out, 0.0);
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(ws[1]) {
                row.iter_mut().zip(bv).for_each(|(o, v)| *o += v);
            }
        }
        let shape = if xs.len() == 2 { vec![batch, ws[1]] } else { vec![ws[1]] };
        let g = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::new(shape, out)?, Op::Dense { x, w, b }, g))
    }

    /// Dense layer with a constant CSR weight `[in,out]`.
    pub fn sparse_dense(&mut self, x: Var, w: Arc<SparseMatrix>, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.last() != Some(&w.rows()) || xs.len() > 2 {
            return Err(Error::dim(format!(
                "sparse dense input {xs:?} with weight {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        let (batch, _) = rows_cols(&xs);
        let mut out = w.left_mul(self.value(x).data(), batch);
        if let Some(b) = b {
            if self.shape(b) != [w.cols()] {
                return Err(Error::dim("sparse dense bias length"));
            }
            let bv = self.value(b).data();
            for row in out.chunks_mut(w.cols()) {
                row.iter_mut().zip(bv).for_each(|(o, v)| *o += v);
            }
        }
        let shape = if xs.len() == 2 { vec![batch, w.cols()] } else { vec![w.cols()] };
        let g = self.needs(x) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::new(shape, out)?, Op::SparseDense { x, w, b }, g))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| if a > 0.0 { a } else { 0.0 }).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let g = self.needs(x);
        self.push(t, Op::Relu(x), g)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what} of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), g))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), g))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|a| a * c).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let g = self.needs(x);
        self.push(t, Op::Scale(x, c), g)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let g = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), g)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        let g = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), g))
    }

    /// Collapses everything after the leading batch axis.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let batch = s[0];
        self.reshape(x, &[batch, s[1..].iter().product()])
    }

    /// Inverted dropout: kept units are scaled by `1/(1-rate)`.
    pub fn dropout<R: rand::Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param(format!("dropout rate {rate} outside [0,1)")));
        }
        let keep = 1.0 / (1.0 - rate);
        let v = self.value(x);
        // Drop when a uniform 32-bit draw falls below rate·2³².
        let cut = (rate * 4_294_967_296.0) as u64;
        let mask: Vec<bool> = (0..v.numel()).map(|_| u64::from(rng.next_u32()) >= cut).collect();
        let data = v
            .data()
            .iter()
            .zip(&mask)
            .map(|(&a, &m)| if m { a * keep } else { 0.0 })
            .collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        let g = self.needs(x);
        Ok(self.push(t, Op::Dropout { x, mask, keep }, g))
    }

    /// Row-wise `softmax(x / t)` over the last axis.
    pub fn softmax_t(&mut self, x: Var, t: f64) -> Result<Var> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param(format!("softmax temperature must be positive, got {t}")));
        }
        let v = self.value(x);
        let (_, cols) = rows_cols(v.shape());
        let mut data = v.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_row(row, t);
        }
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let g = self.needs(x);
        Ok(self.push(out, Op::SoftmaxT { x, t }, g))
    }

    /// `-(1/B) Σ_b log(p[b, label_b] + δ)`.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let v = self.value(probs);
        let (rows, cols) = rows_cols(v.shape());
        if labels.len() != rows {
            return Err(Error::dim(format!(
                "{} labels for {rows} probability rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::Index(format!("label {bad} with {cols} classes")));
        }
        let loss = -v
            .data()
            .chunks(cols)
            .zip(labels)
            .map(|(row, &l)| (row[l] + LOG_FLOOR).ln())
            .sum::<f64>()
            / rows as f64;
        let g = self.needs(probs);
        let op = Op::CrossEntropy {
            probs,
            labels: labels.to_vec(),
        };
        Ok(self.push(Tensor::scalar(loss), op, g))
    }

    /// `(1/B) Σ_b Σ_i p log((p+δ)/(q+δ))`. The target `p` is treated as a
    /// constant; gradient flows to `q` only.
    pub fn kl_divergence(&mut self, p: Var, q: Var) -> Result<Var> {
        self.same_shape(p, q, "kl_divergence")?;
        let (vp, vq) = (self.value(p), self.value(q));
        let (rows, _) = rows_cols(vp.shape());
        let total: f64 = vp
            .data()
            .iter()
            .zip(vq.data())
            .map(|(&a, &b)| kl_term(a, b))
            .sum();
        let g = self.needs(q);
        Ok(self.push(Tensor::scalar(total / rows as f64), Op::KlDiv { p, q }, g))
    }

    /// Concatenates along the channel axis (axis 1 of `[B,C,...]`).
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::dim("concat of nothing"))?)
            .to_vec();
        if first.len() < 2 {
            return Err(Error::dim("concat needs a batch and channel axis"));
        }
        let batch = first[0];
        let mut channels = 0;
        let mut spans = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || s[0] != batch || s[2..] != first[2..] {
                return Err(Error::dim(format!("concat of {s:?} with {first:?}")));
            }
            channels += s[1];
            spans.push(s[1..].iter().product::<usize>());
        }
        let per: usize = spans.iter().sum();
        let mut data = Vec::with_capacity(batch * per);
        for b in 0..batch {
            for (&p, &span) in parts.iter().zip(&spans) {
                data.extend_from_slice(&self.value(p).data()[b * span..(b + 1) * span]);
            }
        }
        let mut shape = first.clone();
        shape[1] = channels;
        let g = parts.iter().any(|&p| self.needs(p));
        let op = Op::Concat {
            parts: parts.to_vec(),
            spans,
        };
        Ok(self.push(Tensor::new(shape, data)?, op, g))
    }

    /// Propagates d(loss)/d(node) to every leaf that requires a gradient,
    /// adding into existing leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[loss.0] = Some(vec![1.0]);
        let mut leaf_grads = Vec::new();

        for i in (0..n).rev() {
            let Some(mut g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let nodes = &self.nodes;
            // Unary element-wise ops rewrite the incoming adjoint in place
            // and hand the buffer down instead of allocating a new one.
            match &node.op {
                Op::Relu(x) => {
                    for (gv, &o) in g.iter_mut().zip(node.value.data()) {
                        if o <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    pass_down(&mut adj, nodes, *x, g);
                    continue;
                }
                Op::Dropout { x, mask, keep } => {
                    for (gv, &m) in g.iter_mut().zip(mask) {
                        *gv = if m { *gv * keep } else { 0.0 };
                    }
                    pass_down(&mut adj, nodes, *x, g);
                    continue;
                }
                Op::Reshape(x) => {
                    pass_down(&mut adj, nodes, *x, g);
                    continue;
                }
                Op::Conv2d {
                    input,
                    kernels,
                    geom,
                    batch,
                    ..
                } if nodes[input.0].needs_grad => {
                    let dx = conv::input_grad(nodes[kernels.0].value.data(), &g, geom, *batch);
                    pass_down(&mut adj, nodes, *input, dx);
                }
                _ => {}
            }
            let g = g;
            let mut send = |v: Var, f: &dyn Fn(&mut [f64])| {
                if nodes[v.0].needs_grad {
                    let buf = adj[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
                    f(buf);
                }
            };
            let val = |v: Var| nodes[v.0].value.data();
            match &node.op {
                Op::Leaf => leaf_grads.push((i, g)),
                Op::MatMul(a, b) => {
                    let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                    let nn = nodes[b.0].value.shape()[1];
                    send(*a, &|buf| gemm_nt(m, nn, k, &g, val(*b), buf, 1.0));
                    send(*b, &|buf| gemm_tn(k, m, nn, val(*a), &g, buf, 1.0));
                }
                Op::Conv2d {
                    input,
                    kernels,
                    bias,
                    geom,
                    batch,
                } => {
                    if let Some(b) = bias {
                        send(*b, &|buf| add_into(buf, &conv::bias_grad(&g, geom, *batch)));
                    }
                    send(*kernels, &|buf| {
                        add_into(buf, &conv::kernel_grad(val(*input), &g, geom, *batch))
                    });
                }
                Op::Dense { x, w, b } => {
                    let ws = nodes[w.0].value.shape();
                    let (fan_in, fan_out) = (ws[0], ws[1]);
                    let batch = g.len() / fan_out;
                    if let Some(b) = b {
                        send(*b, &|buf| {
                            for row in g.chunks(fan_out) {
                                add_into(buf, row);
                            }
                        });
                    }
                    send(*w, &|buf| gemm_tn(fan_in, batch, fan_out, val(*x), &g, buf, 1.0));
                    send(*x, &|buf| gemm_nt(batch, fan_out, fan_in, &g, val(*w), buf, 1.0));
                }
                Op::SparseDense { x, w, b } => {
                    let batch = g.len() / w.cols();
                    if let Some(b) = b {
                        send(*b, &|buf| {
                            for row in g.chunks(w.cols()) {
                                add_into(buf, row);
                            }
                        });
                    }
                    send(*x, &|buf| add_into(buf, &w.left_mul_transposed(&g, batch)));
                }
                Op::Relu(_) | Op::Dropout { .. } | Op::Reshape(_) => unreachable!(),
                Op::Add(a, b) => {
                    send(*a, &|buf| add_into(buf, &g));
                    send(*b, &|buf| add_into(buf, &g));
                }
                Op::Mul(a, b) => {
                    send(*a, &|buf| {
                        for ((d, &gv), &o) in buf.iter_mut().zip(&g).zip(val(*b)) {
                            *d += gv * o;
                        }
                    });
                    send(*b, &|buf| {
                        for ((d, &gv), &o) in buf.iter_mut().zip(&g).zip(val(*a)) {
                            *d += gv * o;
                        }
                    });
                }
                Op::Scale(x, c) => {
                    send(*x, &|buf| buf.iter_mut().zip(&g).for_each(|(d, gv)| *d += c * gv));
                }
                Op::Sum(x) => {
                    let s = g[0];
                    send(*x, &|buf| buf.iter_mut().for_each(|d| *d += s));
                }
                Op::SoftmaxT { x, t } => {
                    let y = node.value.data();
                    let (_, cols) = rows_cols(node.value.shape());
                    send(*x, &|buf| {
                        for ((d, gr), yr) in buf.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for ((di, &gi), &yi) in d.iter_mut().zip(gr).zip(yr) {
                                *di += yi * (gi - dot) / t;
                            }
                        }
                    });
                }
                Op::CrossEntropy { probs, labels } => {
                    let p = &nodes[probs.0].value;
                    let (rows, cols) = rows_cols(p.shape());
                    let scale = g[0] / rows as f64;
                    send(*probs, &|buf| {
                        for (b, &l) in labels.iter().enumerate() {
                            buf[b * cols + l] -= scale / (p.data()[b * cols + l] + LOG_FLOOR);
                        }
                    });
                }
                Op::KlDiv { p, q } => {
                    let (rows, _) = rows_cols(nodes[p.0].value.shape());
                    let scale = g[0] / rows as f64;
                    send(*q, &|buf| {
                        for ((d, &pv), &qv) in buf.iter_mut().zip(val(*p)).zip(val(*q)) {
                            *d -= scale * pv / (qv + LOG_FLOOR);
                        }
                    });
                }
                Op::Concat { parts, spans } => {
                    let per: usize = spans.iter().sum();
                    let batch = g.len() / per;
                    let mut offset = 0;
                    for (&p, &span) in parts.iter().zip(spans) {
                        send(p, &|buf| {
                            for b in 0..batch {
                                let src = &g[b * per + offset..b * per + offset + span];
                                add_into(&mut buf[b * span..(b + 1) * span], src);
                            }
                        });
                        offset += span;
                    }
                }
            }
        }
        for (i, g) in leaf_grads {
            add_into(self.nodes[i].value.grad_mut_or_zero(), &g);
        }
        Ok(())
    }
}

fn pass_down(adj: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, g: Vec<f64>) {
    if !nodes[v.0].needs_grad {
        return;
    }
    match &mut adj[v.0] {
        Some(buf) => add_into(buf, &g),
        slot @ None => *slot = Some(g),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// In-place `softmax(row / t)` with max subtraction.
pub fn softmax_row(row: &mut [f64], t: f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) / t).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

pub(crate) fn kl_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * ((p + LOG_FLOOR) / (q + LOG_FLOOR)).ln()
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_values_and_zero_subgradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]).with_requires_grad(true));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[0.0, 0.0]));
        let sa = tape.softmax_t(a, 3.7).unwrap();
        assert_eq!(tape.value(sa).data(), &[0.5, 0.5]);
        let b = tape.constant(t(&[2], &[2.0, 0.0]));
        let sb = tape.softmax_t(b, 2.0).unwrap();
        let e = std::f64::consts::E;
        assert!((tape.value(sb).data()[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((tape.value(sb).data()[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        let c = tape.constant(t(&[2], &[1000.0, 0.0]));
        let sc = tape.softmax_t(c, 1.0).unwrap();
        assert_eq!(tape.value(sc).data()[0], 1.0);
        assert!(tape.value(sc).is_finite());
        assert!(tape.softmax_t(c, 0.0).is_err());
        assert!(tape.softmax_t(c, -1.0).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(t(&[1, 2], &[1.0, 0.0]));
        let l = tape.cross_entropy(p, &[0]).unwrap();
        assert!(tape.value(l).data()[0].abs() < 1e-11);
        let q = tape.constant(t(&[1, 2], &[0.5, 0.5]));
        let l = tape.cross_entropy(q, &[1]).unwrap();
        assert!((tape.value(l).data()[0] - 2f64.ln()).abs() < 1e-11);
        assert!(matches!(tape.cross_entropy(q, &[2]), Err(Error::Index(_))));
    }

    #[test]
    fn kl_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(t(&[1, 2], &[1.0, 0.0]));
        let q = tape.constant(t(&[1, 2], &[0.5, 0.5]));
        let l = tape.kl_divergence(p, q).unwrap();
        assert!((tape.value(l).data()[0] - 2f64.ln()).abs() < 1e-11);
        let same = tape.kl_divergence(q, q).unwrap();
        assert_eq!(tape.value(same).data()[0], 0.0);
        let r = tape.constant(t(&[1, 3], &[0.2, 0.3, 0.5]));
        assert!(tape.kl_divergence(p, r).is_err());
    }

    #[test]
    fn backward_rules() {
        let mut tape = Tape::new();
        let w = tape.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]).with_requires_grad(true));
        let s = tape.sum(w);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[1.0; 4]);

        tape.zero_grad();
        let sq = tape.mul(w, w).unwrap();
        let ssq = tape.sum(sq);
        let half = tape.scale(ssq, 0.5);
        tape.backward(half).unwrap();
        assert_eq!(tape.grad(w).unwrap(), tape.value(w).data());

        // without zero_grad the second call accumulates
        tape.backward(half).unwrap();
        let twice: Vec<f64> = tape.value(w).data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(tape.grad(w).unwrap(), &twice[..]);

        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn conv_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 3], &[1.0, 2.0, 3.0]));
        let k = tape.constant(t(&[1, 1, 1, 1], &[2.0]));
        let y = tape.conv2d(x, k, None, [0, 0]).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 4.0, 6.0]);
        let k2 = tape.constant(t(&[1, 1, 1, 2], &[1.0, 1.0]));
        let y2 = tape.conv2d(x, k2, None, [0, 0]).unwrap();
        assert_eq!(tape.value(y2).data(), &[3.0, 5.0]);
        let big = tape.constant(t(&[1, 1, 1, 4], &[1.0; 4]));
        assert!(matches!(tape.conv2d(x, big, None, [0, 0]), Err(Error::Dimension(_))));
        assert!(tape.conv2d(x, big, None, [0, 1]).is_ok());
    }

    #[test]
    fn concat_channels_shape() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3, 1, 4]));
        let b = tape.constant(Tensor::zeros(&[2, 5, 1, 4]));
        let c = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.shape(c), &[2, 8, 1, 4]);
    }
}
