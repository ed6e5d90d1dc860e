//! Reverse-mode automatic differentiation on a define-by-run tape.
//!
//! A [`Tape`] records one forward pass; [`Tape::backward`] runs a reverse
//! topological sweep and accumulates gradients additively across fan-out.
//! Tapes are single-threaded; independent tapes may run concurrently.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};
use std::cell::RefCell;
use std::rc::Rc;

type BackFn = Box<dyn Fn(&Tensor) -> Vec<(usize, Tensor)>>;

struct Node {
    backward: Option<BackFn>,
}

/// Records op nodes in topological order as forward ops execute.
#[derive(Clone)]
pub struct Tape {
    nodes: Rc<RefCell<Vec<Node>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Rc::new(RefCell::new(Vec::new())),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, backward: Option<BackFn>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { backward });
        nodes.len() - 1
    }

    /// Registers an input tensor as a differentiable leaf.
    pub fn leaf(&self, value: Tensor) -> Var {
        let id = self.push(None);
        Var {
            value,
            id,
            tape: self.clone(),
        }
    }

    /// Registers a tensor that participates in the graph but whose gradient
    /// the caller will ignore (targets, fixed masks).
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value)
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate additively
    /// where a value fans out into several consumers.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        if loss.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.value.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].clone() else { continue };
            if let Some(back) = &nodes[id].backward {
                for (input_id, gin) in back(&g) {
                    grads[input_id] = Some(match grads[input_id].take() {
                        Some(acc) => acc.accumulate(&gin),
                        None => gin,
                    });
                }
                // Interior gradients are no longer needed once propagated.
                grads[id] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients keyed by tape node id, produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: &Var) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zeros if the loss did not depend on it.
    pub fn of(&self, v: &Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(v.value.shape().to_vec()),
        }
    }
}

/// A tensor value bound to a node on a tape.
#[derive(Clone)]
pub struct Var {
    value: Tensor,
    id: usize,
    tape: Tape,
}

fn same_tape(a: &Var, b: &Var) {
    assert!(
        Rc::ptr_eq(&a.tape.nodes, &b.tape.nodes),
        "operands belong to different tapes"
    );
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    fn unary(&self, value: Tensor, back: impl Fn(&Tensor) -> Tensor + 'static) -> Var {
        let id = self.id;
        let node = self
            .tape
            .push(Some(Box::new(move |g| vec![(id, back(g))])));
        Var {
            value,
            id: node,
            tape: self.tape.clone(),
        }
    }

    fn binary(
        &self,
        other: &Var,
        value: Tensor,
        back: impl Fn(&Tensor) -> (Tensor, Tensor) + 'static,
    ) -> Var {
        same_tape(self, other);
        let (ida, idb) = (self.id, other.id);
        let node = self.tape.push(Some(Box::new(move |g| {
            let (ga, gb) = back(g);
            vec![(ida, ga), (idb, gb)]
        })));
        Var {
            value,
            id: node,
            tape: self.tape.clone(),
        }
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        if self.shape() != other.shape() {
            return Err(Error::Dim(format!(
                "add: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let value = self.value.add(&other.value);
        Ok(self.binary(other, value, |g| (g.clone(), g.clone())))
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.add(&other.scale(-1.0))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var) -> Result<Var> {
        if self.shape() != other.shape() {
            return Err(Error::Dim(format!(
                "mul: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.value.clone();
        let b = other.value.clone();
        let data = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(a.shape().to_vec(), data);
        value.check_finite("mul")?;
        Ok(self.binary(other, value, move |g| {
            let ga = Tensor::new(
                g.shape().to_vec(),
                g.data().iter().zip(b.data().iter()).map(|(g, y)| g * y).collect(),
            );
            let gb = Tensor::new(
                g.shape().to_vec(),
                g.data().iter().zip(a.data().iter()).map(|(g, x)| g * x).collect(),
            );
            (ga, gb)
        }))
    }

    pub fn scale(&self, c: f64) -> Var {
        let value = self.value.map(|x| x * c);
        self.unary(value, move |g| g.map(|x| x * c))
    }

    /// Adds a length-C vector to every trailing slice of `[..., C]`.
    pub fn add_bias(&self, bias: &Var) -> Result<Var> {
        let c = *self.shape().last().ok_or_else(|| Error::Dim("add_bias on 0-d".into()))?;
        if bias.shape() != [c] {
            return Err(Error::Dim(format!(
                "add_bias: bias {:?} vs trailing extent {}",
                bias.shape(),
                c
            )));
        }
        let b = bias.value.clone();
        let data = self
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + b.data()[i % c])
            .collect();
        let value = Tensor::new(self.shape().to_vec(), data);
        Ok(self.binary(bias, value, move |g| {
            let mut gb = vec![0.0; c];
            for (i, &gi) in g.data().iter().enumerate() {
                gb[i % c] += gi;
            }
            (g.clone(), Tensor::new(vec![c], gb))
        }))
    }

    /// Standard matrix product `[m x k] . [k x n]`.
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dim(format!("matmul: {:?} . {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let a = self.value.clone();
        let b = other.value.clone();
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, a.data(), false, b.data(), false, 0.0, &mut out);
        let value = Tensor::new(vec![m, n], out);
        value.check_finite("matmul")?;
        Ok(self.binary(other, value, move |g| {
            // dA = g . B^T, dB = A^T . g
            let mut ga = vec![0.0; m * k];
            gemm(m, n, k, 1.0, g.data(), false, b.data(), true, 0.0, &mut ga);
            let mut gb = vec![0.0; k * n];
            gemm(k, m, n, 1.0, a.data(), true, g.data(), false, 0.0, &mut gb);
            (Tensor::new(vec![m, k], ga), Tensor::new(vec![k, n], gb))
        }))
    }

    pub fn transpose(&self) -> Result<Var> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Dim(format!("transpose: {:?}", s)));
        }
        let (m, n) = (s[0], s[1]);
        let value = transpose2d(&self.value, m, n);
        Ok(self.unary(value, move |g| transpose2d(g, n, m)))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value.len() {
            return Err(Error::Dim(format!(
                "reshape {:?} -> {:?}",
                self.shape(),
                shape
            )));
        }
        let orig = self.shape().to_vec();
        let value = self.value.reshaped(shape);
        Ok(self.unary(value, move |g| g.reshaped(orig.clone())))
    }

    pub fn relu(&self) -> Var {
        let x = self.value.clone();
        let value = x.map(|v| v.max(0.0));
        self.unary(value, move |g| {
            Tensor::new(
                g.shape().to_vec(),
                g.data()
                    .iter()
                    .zip(x.data().iter())
                    .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                    .collect(),
            )
        })
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_lastdim(&self) -> Result<Var> {
        let n = *self
            .shape()
            .last()
            .ok_or_else(|| Error::Dim("softmax on 0-d".into()))?;
        if n < 1 {
            return Err(Error::Dim("softmax: empty last axis".into()));
        }
        let mut out = self.value.to_vec();
        for slice in out.chunks_mut(n) {
            let max = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in slice.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in slice.iter_mut() {
                *x /= sum;
            }
        }
        let value = Tensor::new(self.shape().to_vec(), out);
        let s = value.clone();
        Ok(self.unary(value, move |g| {
            let mut dx = g.to_vec();
            for (dslice, sslice) in dx.chunks_mut(n).zip(s.data().chunks(n)) {
                let dot: f64 = dslice.iter().zip(sslice.iter()).map(|(d, s)| d * s).sum();
                for (d, &s) in dslice.iter_mut().zip(sslice.iter()) {
                    *d = s * (*d - dot);
                }
            }
            Tensor::new(g.shape().to_vec(), dx)
        }))
    }

    /// ln(max(x, floor)); the clamp keeps losses finite on saturated softmax.
    pub fn log_clamped(&self, floor: f64) -> Var {
        let x = self.value.clone();
        let value = x.map(|v| v.max(floor).ln());
        self.unary(value, move |g| {
            Tensor::new(
                g.shape().to_vec(),
                g.data()
                    .iter()
                    .zip(x.data().iter())
                    .map(|(&g, &x)| if x > floor { g / x } else { 0.0 })
                    .collect(),
            )
        })
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Var {
        let shape = self.shape().to_vec();
        let value = Tensor::scalar(self.value.data().iter().sum());
        self.unary(value, move |g| Tensor::full(shape.clone(), g.item()))
    }

    /// Row mean of an `[n x C]` matrix.
    pub fn mean_rows(&self) -> Result<Var> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Dim(format!("mean_rows: {:?}", s)));
        }
        let (n, c) = (s[0], s[1]);
        let mut out = vec![0.0; c];
        for row in self.value.data().chunks(c) {
            for (o, &x) in out.iter_mut().zip(row.iter()) {
                *o += x;
            }
        }
        for o in out.iter_mut() {
            *o /= n as f64;
        }
        Ok(self.unary(Tensor::new(vec![c], out), move |g| {
            let mut dx = vec![0.0; n * c];
            for row in dx.chunks_mut(c) {
                for (d, &gi) in row.iter_mut().zip(g.data().iter()) {
                    *d = gi / n as f64;
                }
            }
            Tensor::new(vec![n, c], dx)
        }))
    }

    /// Rows `[start, end)` of an `[n x C]` matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Var> {
        let s = self.shape();
        if s.len() != 2 || end > s[0] || start > end {
            return Err(Error::Dim(format!("slice_rows {}..{} of {:?}", start, end, s)));
        }
        let (n, c) = (s[0], s[1]);
        let value = Tensor::new(
            vec![end - start, c],
            self.value.data()[start * c..end * c].to_vec(),
        );
        Ok(self.unary(value, move |g| {
            let mut dx = vec![0.0; n * c];
            dx[start * c..end * c].copy_from_slice(g.data());
            Tensor::new(vec![n, c], dx)
        }))
    }

    /// Columns `[start, end)` of an `[n x C]` matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var> {
        let s = self.shape();
        if s.len() != 2 || end > s[1] || start > end {
            return Err(Error::Dim(format!("slice_cols {}..{} of {:?}", start, end, s)));
        }
        let (n, c) = (s[0], s[1]);
        let w = end - start;
        let mut out = vec![0.0; n * w];
        for i in 0..n {
            out[i * w..(i + 1) * w].copy_from_slice(&self.value.data()[i * c + start..i * c + end]);
        }
        Ok(self.unary(Tensor::new(vec![n, w], out), move |g| {
            let mut dx = vec![0.0; n * c];
            for i in 0..n {
                dx[i * c + start..i * c + end].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
            }
            Tensor::new(vec![n, c], dx)
        }))
    }

    /// Per-slice normalization over the last axis, then affine gain/bias.
    pub fn layer_norm(&self, gain: &Var, bias: &Var, eps: f64) -> Result<Var> {
        let c = *self
            .shape()
            .last()
            .ok_or_else(|| Error::Dim("layer_norm on 0-d".into()))?;
        if gain.shape() != [c] || bias.shape() != [c] {
            return Err(Error::Dim(format!(
                "layer_norm: gain {:?} bias {:?} vs C={}",
                gain.shape(),
                bias.shape(),
                c
            )));
        }
        same_tape(self, gain);
        same_tape(self, bias);
        let x = &self.value;
        let slices = x.len() / c;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; slices];
        let mut out = vec![0.0; x.len()];
        let gv = gain.value.data();
        let bv = bias.value.data();
        for (si, slice) in x.data().chunks(c).enumerate() {
            let mean = slice.iter().sum::<f64>() / c as f64;
            let var = slice.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[si] = istd;
            for (j, &v) in slice.iter().enumerate() {
                let h = (v - mean) * istd;
                xhat[si * c + j] = h;
                out[si * c + j] = gv[j] * h + bv[j];
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out);
        let xhat = Tensor::new(x.shape().to_vec(), xhat);
        let gv = gain.value.clone();
        let (idx, idg, idb) = (self.id, gain.id, bias.id);
        let node = self.tape.push(Some(Box::new(move |g| {
            let mut dx = vec![0.0; g.len()];
            let mut dgain = vec![0.0; c];
            let mut dbias = vec![0.0; c];
            for si in 0..g.len() / c {
                let gs = &g.data()[si * c..(si + 1) * c];
                let hs = &xhat.data()[si * c..(si + 1) * c];
                let mut mean_dh = 0.0;
                let mut mean_dh_h = 0.0;
                for j in 0..c {
                    let dh = gs[j] * gv.data()[j];
                    mean_dh += dh;
                    mean_dh_h += dh * hs[j];
                    dgain[j] += gs[j] * hs[j];
                    dbias[j] += gs[j];
                }
                mean_dh /= c as f64;
                mean_dh_h /= c as f64;
                for j in 0..c {
                    let dh = gs[j] * gv.data()[j];
                    dx[si * c + j] = inv_std[si] * (dh - mean_dh - hs[j] * mean_dh_h);
                }
            }
            vec![
                (idx, Tensor::new(g.shape().to_vec(), dx)),
                (idg, Tensor::new(vec![c], dgain)),
                (idb, Tensor::new(vec![c], dbias)),
            ]
        })));
        Ok(Var {
            value,
            id: node,
            tape: self.tape.clone(),
        })
    }

    /// Per-channel spatial mean of `[H x W x C]`.
    pub fn global_avg_pool(&self) -> Result<Var> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::Dim(format!("global_avg_pool: {:?}", s)));
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let hw = (h * w) as f64;
        let mut out = vec![0.0; c];
        for px in self.value.data().chunks(c) {
            for (o, &x) in out.iter_mut().zip(px.iter()) {
                *o += x;
            }
        }
        for o in out.iter_mut() {
            *o /= hw;
        }
        Ok(self.unary(Tensor::new(vec![c], out), move |g| {
            let mut dx = vec![0.0; h * w * c];
            for px in dx.chunks_mut(c) {
                for (d, &gi) in px.iter_mut().zip(g.data().iter()) {
                    *d = gi / hw;
                }
            }
            Tensor::new(vec![h, w, c], dx)
        }))
    }

    /// 2x2 average pooling with stride 2 over `[H x W x C]`; H and W must
    /// be even.
    pub fn avg_pool2(&self) -> Result<Var> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::Dim(format!("avg_pool2: {:?}", s)));
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("avg_pool2: odd extent {}x{}", h, w)));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value.data();
        let mut out = vec![0.0; oh * ow * c];
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            acc += src[((2 * oy + dy) * w + 2 * ox + dx) * c + ch];
                        }
                    }
                    out[(oy * ow + ox) * c + ch] = acc * 0.25;
                }
            }
        }
        Ok(self.unary(Tensor::new(vec![oh, ow, c], out), move |g| {
            let gd = g.data();
            let mut dx = vec![0.0; h * w * c];
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let gi = gd[(oy * ow + ox) * c + ch] * 0.25;
                        for dy in 0..2 {
                            for dx2 in 0..2 {
                                dx[((2 * oy + dy) * w + 2 * ox + dx2) * c + ch] = gi;
                            }
                        }
                    }
                }
            }
            Tensor::new(vec![h, w, c], dx)
        }))
    }

    /// 2-D cross-correlation (no kernel flip) of `[H x W x Cin]` with
    /// `[kh x kw x Cin x Cout]`, zero padding.
    pub fn conv2d(&self, kernel: &Var, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape().to_vec();
        let ks = kernel.shape().to_vec();
        if xs.len() != 3 || ks.len() != 4 || xs[2] != ks[2] {
            return Err(Error::Dim(format!("conv2d: x {:?} kernel {:?}", xs, ks)));
        }
        let (h, w, cin) = (xs[0], xs[1], xs[2]);
        let (kh, kw, cout) = (ks[0], ks[1], ks[3]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Config(format!("conv2d: even kernel {}x{}", kh, kw)));
        }
        if stride == 0
            || (h + 2 * padding) < kh
            || (w + 2 * padding) < kw
            || (h + 2 * padding - kh) % stride != 0
            || (w + 2 * padding - kw) % stride != 0
        {
            return Err(Error::Config(format!(
                "conv2d: non-integer output extent for input {}x{}, kernel {}x{}, stride {}, pad {}",
                h, w, kh, kw, stride, padding
            )));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let kc = kh * kw * cin;
        let p = oh * ow;
        let cols = im2col(self.value.data(), h, w, cin, kh, kw, stride, padding, oh, ow);
        let mut out = vec![0.0; p * cout];
        gemm(p, kc, cout, 1.0, &cols, false, kernel.value.data(), false, 0.0, &mut out);
        let value = Tensor::new(vec![oh, ow, cout], out);
        value.check_finite("conv2d")?;
        let kval = kernel.value.clone();
        Ok(self.binary(kernel, value, move |g| {
            let mut dk = vec![0.0; kc * cout];
            gemm(kc, p, cout, 1.0, &cols, true, g.data(), false, 0.0, &mut dk);
            let mut dcols = vec![0.0; p * kc];
            gemm(p, cout, kc, 1.0, g.data(), false, kval.data(), true, 0.0, &mut dcols);
            let dx = col2im(&dcols, h, w, cin, kh, kw, stride, padding, oh, ow);
            (
                Tensor::new(vec![h, w, cin], dx),
                Tensor::new(vec![kh, kw, cin, cout], dk),
            )
        }))
    }
}

fn transpose2d(t: &Tensor, m: usize, n: usize) -> Tensor {
    let src = t.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = src[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Stacks `[n_i x C]` operands along rows, preserving operand order.
pub fn concat_rows(vars: &[&Var]) -> Result<Var> {
    let first = vars
        .first()
        .ok_or_else(|| Error::Usage("concat_rows: no operands".into()))?;
    let c = match first.shape() {
        [_, c] => *c,
        s => return Err(Error::Dim(format!("concat_rows: {:?}", s))),
    };
    let mut total = 0;
    let mut splits = Vec::with_capacity(vars.len());
    for v in vars {
        same_tape(first, v);
        match v.shape() {
            [n, cc] if *cc == c => {
                splits.push((v.id, *n));
                total += n;
            }
            s => {
                return Err(Error::Dim(format!(
                    "concat_rows: trailing extent mismatch, {:?} vs C={}",
                    s, c
                )))
            }
        }
    }
    let mut data = Vec::with_capacity(total * c);
    for v in vars {
        data.extend_from_slice(v.value.data());
    }
    let value = Tensor::new(vec![total, c], data);
    let tape = first.tape.clone();
    let node = tape.push(Some(Box::new(move |g| {
        let mut out = Vec::with_capacity(splits.len());
        let mut offset = 0;
        for &(id, n) in &splits {
            out.push((
                id,
                Tensor::new(vec![n, c], g.data()[offset..offset + n * c].to_vec()),
            ));
            offset += n * c;
        }
        out
    })));
    Ok(Var {
        value,
        id: node,
        tape,
    })
}

/// Stacks `[n x c_i]` operands along columns, preserving operand order.
pub fn concat_cols(vars: &[&Var]) -> Result<Var> {
    let first = vars
        .first()
        .ok_or_else(|| Error::Usage("concat_cols: no operands".into()))?;
    let n = match first.shape() {
        [n, _] => *n,
        s => return Err(Error::Dim(format!("concat_cols: {:?}", s))),
    };
    let mut widths = Vec::with_capacity(vars.len());
    let mut total = 0;
    for v in vars {
        same_tape(first, v);
        match v.shape() {
            [nn, c] if *nn == n => {
                widths.push((v.id, *c));
                total += c;
            }
            s => return Err(Error::Dim(format!("concat_cols: row mismatch {:?}", s))),
        }
    }
    let mut data = vec![0.0; n * total];
    let mut offset = 0;
    for v in vars {
        let c = v.shape()[1];
        for i in 0..n {
            data[i * total + offset..i * total + offset + c]
                .copy_from_slice(&v.value.data()[i * c..(i + 1) * c]);
        }
        offset += c;
    }
    let value = Tensor::new(vec![n, total], data);
    let tape = first.tape.clone();
    let node = tape.push(Some(Box::new(move |g| {
        let mut out = Vec::with_capacity(widths.len());
        let mut offset = 0;
        for &(id, c) in &widths {
            let mut dv = vec![0.0; n * c];
            for i in 0..n {
                dv[i * c..(i + 1) * c]
                    .copy_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
            }
            out.push((id, Tensor::new(vec![n, c], dv)));
            offset += c;
        }
        out
    })));
    Ok(Var {
        value,
        id: node,
        tape,
    })
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let kc = kh * kw * cin;
    let mut cols = vec![0.0; oh * ow * kc];
    for orow in 0..oh {
        for ocol in 0..ow {
            let dst = &mut cols[(orow * ow + ocol) * kc..(orow * ow + ocol + 1) * kc];
            for ki in 0..kh {
                let ih = (orow * stride + ki) as isize - padding as isize;
                if ih < 0 || ih >= h as isize {
                    continue;
                }
                for kj in 0..kw {
                    let iw = (ocol * stride + kj) as isize - padding as isize;
                    if iw < 0 || iw >= w as isize {
                        continue;
                    }
                    let src = (ih as usize * w + iw as usize) * cin;
                    let d = (ki * kw + kj) * cin;
                    dst[d..d + cin].copy_from_slice(&x[src..src + cin]);
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    dcols: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let kc = kh * kw * cin;
    let mut dx = vec![0.0; h * w * cin];
    for orow in 0..oh {
        for ocol in 0..ow {
            let src = &dcols[(orow * ow + ocol) * kc..(orow * ow + ocol + 1) * kc];
            for ki in 0..kh {
                let ih = (orow * stride + ki) as isize - padding as isize;
                if ih < 0 || ih >= h as isize {
                    continue;
                }
                for kj in 0..kw {
                    let iw = (ocol * stride + kj) as isize - padding as isize;
                    if iw < 0 || iw >= w as isize {
                        continue;
                    }
                    let d = (ih as usize * w + iw as usize) * cin;
                    let s = (ki * kw + kj) * cin;
                    for c in 0..cin {
                        dx[d + c] += src[s + c];
                    }
                }
            }
        }
    }
    dx
}
