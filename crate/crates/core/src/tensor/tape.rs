use super::{gemm, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, k: Var, b: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Gate { x: Var, s: Var, axis: usize },
    Resize { x: Var, rows: Vec<usize>, cols: Vec<usize> },
    Permute { x: Var, perm: Vec<usize> },
    Reshape { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, mean: Vec<f64>, rstd: Vec<f64> },
    Scale { x: Var, k: f64 },
    Sum { x: Var },
    Mse { pred: Var, target: Tensor<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Node inputs always precede the node, so reverse insertion order is a valid
/// reverse topological order.
#[derive(Debug, Default)]
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a leaf, `None` when the leaf does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a leaf, zeros when it does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn finite<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn permuted_offsets(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    // offsets[o] is the input offset read by output element o
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n: usize = shape.iter().product();
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    offsets
}

struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let (h, w, k) = (self.h as isize, self.w as isize, self.k);
        let pad = (k / 2) as isize;
        let hw = self.h * self.w;
        for ci in 0..self.c_in {
            let plane = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * hw..(row + 1) * hw];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y + dy;
                        let out = &mut dst[(y * w) as usize..((y + 1) * w) as usize];
                        if sy < 0 || sy >= h {
                            out.fill(T::zero());
                            continue;
                        }
                        let src = &plane[(sy * w) as usize..((sy + 1) * w) as usize];
                        for (xx, o) in out.iter_mut().enumerate() {
                            let sx = xx as isize + dx;
                            *o = if sx < 0 || sx >= w {
                                T::zero()
                            } else {
                                src[sx as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let (h, w, k) = (self.h as isize, self.w as isize, self.k);
        let pad = (k / 2) as isize;
        let hw = self.h * self.w;
        for ci in 0..self.c_in {
            let plane = &mut dx[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * hw..(row + 1) * hw];
                    let dy = ky as isize - pad;
                    let ddx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y + dy;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        for xx in 0..w {
                            let sx = xx + ddx;
                            if sx < 0 || sx >= w {
                                continue;
                            }
                            let g = src[(y * w + xx) as usize];
                            let p = &mut plane[(sy * w + sx) as usize];
                            *p = *p + g;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// `y = x W + b` applied over the last axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let bs = self.shape(b);
        let n_in = *xs.last().unwrap_or(&0);
        if ws.len() != 2 || ws[0] != n_in || bs != [ws[1]] {
            return Err(Error::dim(
                "linear",
                format!("x {xs:?}, W {ws:?}, b {bs:?}"),
            ));
        }
        let n_out = ws[1];
        let rows = self.value(x).len() / n_in.max(1);
        let mut out_shape = xs.to_vec();
        *out_shape.last_mut().unwrap() = n_out;
        let mut out = vec![T::zero(); rows * n_out];
        let bias = self.value(b).data();
        for r in 0..rows {
            out[r * n_out..(r + 1) * n_out].copy_from_slice(bias);
        }
        gemm(
            false,
            false,
            rows,
            n_out,
            n_in,
            T::one(),
            self.value(x).data(),
            self.value(w).data(),
            T::one(),
            &mut out,
        );
        let out = Tensor::new(out_shape, out)?;
        finite("linear", &out)?;
        Ok(self.push(out, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Same-padded 2-D cross-correlation on `[batch, c_in, h, w]` input.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        let bs = self.shape(b).to_vec();
        if ks.len() != 4 || ks[2] != ks[3] {
            return Err(Error::dim("conv2d", format!("kernel {ks:?}")));
        }
        if ks[2] % 2 == 0 {
            return Err(Error::config(
                "kernel_size",
                format!("same padding needs an odd kernel, got {}", ks[2]),
            ));
        }
        if xs.len() != 4 || xs[1] != ks[1] || bs != [ks[0]] {
            return Err(Error::dim(
                "conv2d",
                format!("x {xs:?}, K {ks:?}, b {bs:?}"),
            ));
        }
        let g = ConvGeom {
            batch: xs[0],
            c_in: xs[1],
            c_out: ks[0],
            h: xs[2],
            w: xs[3],
            k: ks[2],
        };
        let hw = g.h * g.w;
        let mut out = vec![T::zero(); g.batch * g.c_out * hw];
        let mut cols = vec![T::zero(); g.patch() * hw];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        let bv = self.value(b).data();
        for n in 0..g.batch {
            let dst = &mut out[n * g.c_out * hw..(n + 1) * g.c_out * hw];
            for (co, plane) in dst.chunks_mut(hw).enumerate() {
                plane.fill(bv[co]);
            }
            let src = &xv[n * g.c_in * hw..(n + 1) * g.c_in * hw];
            if g.k == 1 {
                gemm(false, false, g.c_out, hw, g.c_in, T::one(), kv, src, T::one(), dst);
            } else {
                g.im2col(src, &mut cols);
                gemm(false, false, g.c_out, hw, g.patch(), T::one(), kv, &cols, T::one(), dst);
            }
        }
        let out = Tensor::new(vec![g.batch, g.c_out, g.h, g.w], out)?;
        finite("conv2d", &out)?;
        Ok(self.push(out, Op::Conv2d { x, k, b }, &[x, k, b]))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let out = Tensor::new(
            xv.shape().to_vec(),
            xv.data()
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect(),
        )?;
        finite("relu", &out)?;
        Ok(self.push(out, Op::Relu { x }, &[x]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let out = Tensor::new(
            xv.shape().to_vec(),
            xv.data().iter().map(|&v| sigmoid(v)).collect(),
        )?;
        finite("sigmoid", &out)?;
        Ok(self.push(out, Op::Sigmoid { x }, &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let out = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().zip(bv.data()).map(|(&p, &q)| p + q).collect(),
        )?;
        finite("add", &out)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "mul",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let out = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().zip(bv.data()).map(|(&p, &q)| p * q).collect(),
        )?;
        finite("mul", &out)?;
        Ok(self.push(out, Op::Mul { a, b }, &[a, b]))
    }

    /// Channel-wise gating: `y[n, .., c, ..] = x[n, .., c, ..] * s[n, c]` where
    /// `c` runs along `axis` of `x`.
    pub fn gate(&mut self, x: Var, s: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x);
        let ss = self.shape(s);
        if axis == 0 || axis >= xs.len() || ss.len() != 2 || ss[0] != xs[0] || ss[1] != xs[axis]
        {
            return Err(Error::dim(
                "gate",
                format!("features {xs:?}, gate {ss:?}, axis {axis}"),
            ));
        }
        let (batch, ch) = (xs[0], xs[axis]);
        let pre: usize = xs[1..axis].iter().product();
        let post: usize = xs[axis + 1..].iter().product();
        let xv = self.value(x).data();
        let sv = self.value(s).data();
        let mut out = vec![T::zero(); xv.len()];
        for n in 0..batch {
            for p in 0..pre {
                for c in 0..ch {
                    let g = sv[n * ch + c];
                    let base = ((n * pre + p) * ch + c) * post;
                    for q in base..base + post {
                        out[q] = xv[q] * g;
                    }
                }
            }
        }
        let out = Tensor::new(xs.to_vec(), out)?;
        finite("gate", &out)?;
        Ok(self.push(out, Op::Gate { x, s, axis }, &[x, s]))
    }

    /// Nearest-neighbour style gather over the last two axes: output row `i`
    /// reads input row `rows[i]`, output column `j` reads column `cols[j]`.
    pub fn resize(&mut self, x: Var, rows: &[usize], cols: &[usize]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::dim("resize", format!("input {xs:?}")));
        }
        let (h, w) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        if rows.iter().any(|&r| r >= h) || cols.iter().any(|&c| c >= w) {
            return Err(Error::dim("resize", "index map out of range"));
        }
        let outer: usize = xs[..xs.len() - 2].iter().product();
        let (oh, ow) = (rows.len(), cols.len());
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * oh * ow);
        for o in 0..outer {
            let plane = &xv[o * h * w..(o + 1) * h * w];
            for &r in rows {
                out.extend(cols.iter().map(|&c| plane[r * w + c]));
            }
        }
        let mut shape = xs;
        let rank = shape.len();
        shape[rank - 2] = oh;
        shape[rank - 1] = ow;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Resize {
                x,
                rows: rows.to_vec(),
                cols: cols.to_vec(),
            },
            &[x],
        ))
    }

    /// Axis permutation; output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let mut seen = vec![false; xs.len()];
        if perm.len() != xs.len() || perm.iter().any(|&p| p >= xs.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim("permute", format!("{perm:?} on {xs:?}")));
        }
        let offsets = permuted_offsets(&xs, perm);
        let xv = self.value(x).data();
        let out: Vec<T> = offsets.iter().map(|&o| xv[o]).collect();
        let out = Tensor::new(perm.iter().map(|&p| xs[p]).collect(), out)?;
        Ok(self.push(
            out,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape { x }, &[x]))
    }

    /// Normalisation over the last axis followed by a learned affine map.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().unwrap_or(&0);
        if d == 0 || self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::dim(
                "layer_norm",
                format!("x {xs:?}, gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let rows = xv.len() / d;
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mu = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
            let var = row
                .iter()
                .map(|v| (v.as_f64() - mu).powi(2))
                .sum::<f64>()
                / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            for (j, v) in row.iter().enumerate() {
                let xhat = (v.as_f64() - mu) * rs;
                out.push(T::of(xhat * gv[j].as_f64() + bv[j].as_f64()));
            }
            mean.push(mu);
            rstd.push(rs);
        }
        let out = Tensor::new(xs, out)?;
        finite("layer_norm", &out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    /// Multiplication by a fixed scalar.
    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let xv = self.value(x);
        let kt = T::of(k);
        let out = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| v * kt).collect())?;
        finite("scale", &out)?;
        Ok(self.push(out, Op::Scale { x, k }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum_f64();
        let out = Tensor::scalar(T::of(s));
        finite("sum", &out)?;
        Ok(self.push(out, Op::Sum { x }, &[x]))
    }

    /// Mean squared error against a fixed target.
    pub fn mse(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::dim(
                "mse",
                format!("prediction {:?} vs target {:?}", pv.shape(), target.shape()),
            ));
        }
        let n = pv.len().max(1) as f64;
        let s: f64 = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p.as_f64() - t.as_f64()).powi(2))
            .sum();
        let out = Tensor::scalar(T::of(s / n));
        finite("mse", &out)?;
        Ok(self.push(
            out,
            Op::Mse {
                pred,
                target: target.clone(),
            },
            &[pred],
        ))
    }

    /// Smallest |pre-activation| over every ReLU on the tape.
    pub fn min_relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu { x } => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|v| v.as_f64().abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Reverse pass from a scalar node. The tape is left intact, so repeated
    /// calls return identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(node, &dy, &mut grads);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.wants(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node<T>, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let dyv = dy.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n_in, n_out) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.len() / n_in.max(1);
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); xv.len()];
                    gemm(false, true, rows, n_in, n_out, T::one(), dyv, wv.data(), T::zero(), &mut dx);
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); n_in * n_out];
                    gemm(true, false, n_in, n_out, rows, T::one(), xv.data(), dyv, T::zero(), &mut dw);
                    self.accumulate(grads, *w, Tensor::new(vec![n_in, n_out], dw).unwrap());
                }
                if self.wants(*b) {
                    let mut db = vec![0f64; n_out];
                    for r in 0..rows {
                        for (j, acc) in db.iter_mut().enumerate() {
                            *acc += dyv[r * n_out + j].as_f64();
                        }
                    }
                    let db = db.into_iter().map(T::of).collect();
                    self.accumulate(grads, *b, Tensor::new(vec![n_out], db).unwrap());
                }
            }
            Op::Conv2d { x, k, b } => {
                let xv = self.value(*x);
                let kv = self.value(*k);
                let xs = xv.shape();
                let ks = kv.shape();
                let g = ConvGeom {
                    batch: xs[0],
                    c_in: xs[1],
                    c_out: ks[0],
                    h: xs[2],
                    w: xs[3],
                    k: ks[2],
                };
                let hw = g.h * g.w;
                let (want_x, want_k) = (self.wants(*x), self.wants(*k));
                let mut dk = vec![T::zero(); kv.len()];
                let mut dx = if want_x { vec![T::zero(); xv.len()] } else { Vec::new() };
                let mut cols = vec![T::zero(); g.patch() * hw];
                let mut dcols = vec![T::zero(); g.patch() * hw];
                for n in 0..g.batch {
                    let dy_n = &dyv[n * g.c_out * hw..(n + 1) * g.c_out * hw];
                    let x_n = &xv.data()[n * g.c_in * hw..(n + 1) * g.c_in * hw];
                    if want_k {
                        if g.k == 1 {
                            gemm(false, true, g.c_out, g.c_in, hw, T::one(), dy_n, x_n, T::one(), &mut dk);
                        } else {
                            g.im2col(x_n, &mut cols);
                            gemm(false, true, g.c_out, g.patch(), hw, T::one(), dy_n, &cols, T::one(), &mut dk);
                        }
                    }
                    if want_x {
                        let dx_n = &mut dx[n * g.c_in * hw..(n + 1) * g.c_in * hw];
                        if g.k == 1 {
                            gemm(true, false, g.c_in, hw, g.c_out, T::one(), kv.data(), dy_n, T::one(), dx_n);
                        } else {
                            gemm(true, false, g.patch(), hw, g.c_out, T::one(), kv.data(), dy_n, T::zero(), &mut dcols);
                            g.col2im_add(&dcols, dx_n);
                        }
                    }
                }
                if want_x {
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx).unwrap());
                }
                if want_k {
                    self.accumulate(grads, *k, Tensor::new(ks.to_vec(), dk).unwrap());
                }
                if self.wants(*b) {
                    let mut db = vec![0f64; g.c_out];
                    for n in 0..g.batch {
                        for (co, acc) in db.iter_mut().enumerate() {
                            let base = (n * g.c_out + co) * hw;
                            *acc += dyv[base..base + hw].iter().map(|v| v.as_f64()).sum::<f64>();
                        }
                    }
                    let db = db.into_iter().map(T::of).collect();
                    self.accumulate(grads, *b, Tensor::new(vec![g.c_out], db).unwrap());
                }
            }
            Op::Relu { x } => {
                let yv = node.value.data();
                let dx = dyv
                    .iter()
                    .zip(yv)
                    .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(dy.shape().to_vec(), dx).unwrap());
            }
            Op::Sigmoid { x } => {
                let yv = node.value.data();
                let dx = dyv
                    .iter()
                    .zip(yv)
                    .map(|(&g, &y)| g * y * (T::one() - y))
                    .collect();
                self.accumulate(grads, *x, Tensor::new(dy.shape().to_vec(), dx).unwrap());
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, dy.clone());
                self.accumulate(grads, *b, dy.clone());
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.wants(*a) {
                    let da = dyv.iter().zip(bv).map(|(&g, &q)| g * q).collect();
                    self.accumulate(grads, *a, Tensor::new(dy.shape().to_vec(), da).unwrap());
                }
                if self.wants(*b) {
                    let db = dyv.iter().zip(av).map(|(&g, &p)| g * p).collect();
                    self.accumulate(grads, *b, Tensor::new(dy.shape().to_vec(), db).unwrap());
                }
            }
            Op::Gate { x, s, axis } => {
                let xv = self.value(*x);
                let sv = self.value(*s);
                let xs = xv.shape();
                let (batch, ch) = (xs[0], xs[*axis]);
                let pre: usize = xs[1..*axis].iter().product();
                let post: usize = xs[*axis + 1..].iter().product();
                let mut dx = if self.wants(*x) { vec![T::zero(); xv.len()] } else { Vec::new() };
                let mut ds = vec![0f64; batch * ch];
                for n in 0..batch {
                    for p in 0..pre {
                        for c in 0..ch {
                            let gate = sv.data()[n * ch + c];
                            let base = ((n * pre + p) * ch + c) * post;
                            let mut acc = 0f64;
                            for q in base..base + post {
                                acc += (dyv[q] * xv.data()[q]).as_f64();
                                if !dx.is_empty() {
                                    dx[q] = dyv[q] * gate;
                                }
                            }
                            ds[n * ch + c] += acc;
                        }
                    }
                }
                if !dx.is_empty() {
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx).unwrap());
                }
                let ds = ds.into_iter().map(T::of).collect();
                self.accumulate(grads, *s, Tensor::new(vec![batch, ch], ds).unwrap());
            }
            Op::Resize { x, rows, cols } => {
                let xs = self.shape(*x);
                let (h, w) = (xs[xs.len() - 2], xs[xs.len() - 1]);
                let outer: usize = xs[..xs.len() - 2].iter().product();
                let (oh, ow) = (rows.len(), cols.len());
                let mut dx = vec![T::zero(); outer * h * w];
                for o in 0..outer {
                    for (i, &r) in rows.iter().enumerate() {
                        for (j, &c) in cols.iter().enumerate() {
                            let d = &mut dx[o * h * w + r * w + c];
                            *d = *d + dyv[(o * oh + i) * ow + j];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx).unwrap());
            }
            Op::Permute { x, perm } => {
                let xs = self.shape(*x);
                let offsets = permuted_offsets(xs, perm);
                let mut dx = vec![T::zero(); dyv.len()];
                for (o, &src) in offsets.iter().enumerate() {
                    dx[src] = dyv[o];
                }
                self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx).unwrap());
            }
            Op::Reshape { x } => {
                let g = dy.clone().reshape(self.shape(*x)).unwrap();
                self.accumulate(grads, *x, g);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let xv = self.value(*x);
                let gv = self.value(*gamma).data();
                let d = gv.len();
                let rows = xv.len() / d;
                let mut dx = vec![T::zero(); xv.len()];
                let mut dgamma = vec![0f64; d];
                let mut dbeta = vec![0f64; d];
                let mut dxhat = vec![0f64; d];
                let mut xhat = vec![0f64; d];
                for r in 0..rows {
                    let row = &xv.data()[r * d..(r + 1) * d];
                    let g_row = &dyv[r * d..(r + 1) * d];
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for j in 0..d {
                        xhat[j] = (row[j].as_f64() - mean[r]) * rstd[r];
                        let g = g_row[j].as_f64();
                        dgamma[j] += g * xhat[j];
                        dbeta[j] += g;
                        dxhat[j] = g * gv[j].as_f64();
                        mean_dxhat += dxhat[j];
                        mean_dxhat_xhat += dxhat[j] * xhat[j];
                    }
                    mean_dxhat /= d as f64;
                    mean_dxhat_xhat /= d as f64;
                    for j in 0..d {
                        dx[r * d + j] = T::of(
                            rstd[r] * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat),
                        );
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                let dgamma = dgamma.into_iter().map(T::of).collect();
                self.accumulate(grads, *gamma, Tensor::new(vec![d], dgamma).unwrap());
                let dbeta = dbeta.into_iter().map(T::of).collect();
                self.accumulate(grads, *beta, Tensor::new(vec![d], dbeta).unwrap());
            }
            Op::Scale { x, k } => {
                let kt = T::of(*k);
                let dx = dyv.iter().map(|&g| g * kt).collect();
                self.accumulate(grads, *x, Tensor::new(dy.shape().to_vec(), dx).unwrap());
            }
            Op::Sum { x } => {
                let xs = self.shape(*x);
                self.accumulate(grads, *x, Tensor::full(xs, dyv[0]));
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred);
                let scale = dyv[0].as_f64() * 2.0 / pv.len().max(1) as f64;
                let dp = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| T::of(scale * (p.as_f64() - t.as_f64())))
                    .collect();
                self.accumulate(grads, *pred, Tensor::new(pv.shape().to_vec(), dp).unwrap());
            }
        }
    }
}
