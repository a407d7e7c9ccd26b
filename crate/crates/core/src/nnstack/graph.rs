//! Minimal reverse-mode autodiff over dense NCHW tensors.
//!
//! A graph is an append-only tape of nodes; forward values are computed
//! eagerly when an op is recorded and `backward` walks the tape in reverse,
//! accumulating gradients in a fixed order so training is bit-deterministic.
//! Every backward is the exact adjoint of its forward.

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::{NnError, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    Relu { x: NodeId },
    Softplus { x: NodeId },
    Upsample2 { x: NodeId },
    Concat { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    SimplexHead { x: NodeId, eps: f64 },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    /// Gradient accumulated at `id` by the last `backward` call.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id].grad.as_ref()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, grad: None, op, requires_grad });
        self.nodes.len() - 1
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// 2-d convolution with a square kernel. Weight shape (Cout, Cin, k, k),
    /// bias shape (1, Cout, 1, 1).
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let [n, cin, h, wd] = self.nodes[x].value.shape();
        let [cout, cin_w, kh, kw] = self.nodes[w].value.shape();
        let bshape = self.nodes[b].value.shape();
        if cin != cin_w || kh != kw {
            return Err(NnError::ShapeMismatch(format!(
                "conv input {:?} vs weight {:?}",
                self.nodes[x].value.shape(),
                self.nodes[w].value.shape()
            )));
        }
        if bshape != [1, cout, 1, 1] {
            return Err(NnError::ShapeMismatch(format!("bias {bshape:?}, expected [1,{cout},1,1]")));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(NnError::ShapeMismatch(format!("conv kernel {kh} too large for {h}x{wd} input")));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        conv_forward(
            &self.nodes[x].value,
            &self.nodes[w].value,
            &self.nodes[b].value,
            stride,
            pad,
            &mut out,
        );
        let req = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(out, Op::Conv { x, w, b, stride, pad }, req))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.map(|v| v.maximum(T::ZERO));
        let req = self.requires(x);
        self.push(out, Op::Relu { x }, req)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.map(|v| v.maximum(T::ZERO) + (-v.abs()).exp().ln_1p());
        let req = self.requires(x);
        self.push(out, Op::Softplus { x }, req)
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let [n, c, h, w] = self.nodes[x].value.shape();
        let mut out = Tensor::zeros([n, c, h * 2, w * 2]);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h * 2 {
                    for xx in 0..w * 2 {
                        let v = self.nodes[x].value.at(ni, ci, y / 2, xx / 2);
                        out.set(ni, ci, y, xx, v);
                    }
                }
            }
        }
        let req = self.requires(x);
        self.push(out, Op::Upsample2 { x }, req)
    }

    /// Channel concatenation.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let [na, ca, ha, wa] = self.nodes[a].value.shape();
        let [nb, cb, hb, wb] = self.nodes[b].value.shape();
        if na != nb || ha != hb || wa != wb {
            return Err(NnError::ShapeMismatch(format!(
                "concat {:?} vs {:?}",
                self.nodes[a].value.shape(),
                self.nodes[b].value.shape()
            )));
        }
        let mut out = Tensor::zeros([na, ca + cb, ha, wa]);
        for n in 0..na {
            for c in 0..ca + cb {
                for y in 0..ha {
                    for x in 0..wa {
                        let v = if c < ca {
                            self.nodes[a].value.at(n, c, y, x)
                        } else {
                            self.nodes[b].value.at(n, c - ca, y, x)
                        };
                        out.set(n, c, y, x, v);
                    }
                }
            }
        }
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(out, Op::Concat { a, b }, req))
    }

    /// Elementwise addition (skip connections).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.nodes[a].value.shape() != self.nodes[b].value.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "add {:?} vs {:?}",
                self.nodes[a].value.shape(),
                self.nodes[b].value.shape()
            )));
        }
        let mut out = self.nodes[a].value.clone();
        out.add_in_place(&self.nodes[b].value)?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(out, Op::Add { a, b }, req))
    }

    /// Project onto the per-pixel channel simplex: `(|x_c| + eps)` normalized
    /// to unit channel sum. With an all-zero input the output is uniform.
    pub fn simplex_head(&mut self, x: NodeId, eps: f64) -> NodeId {
        let [n, c, h, w] = self.nodes[x].value.shape();
        let e = T::from_f64(eps);
        let mut out = Tensor::zeros([n, c, h, w]);
        for ni in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let mut sum = T::ZERO;
                    for ci in 0..c {
                        sum += self.nodes[x].value.at(ni, ci, y, xx).abs() + e;
                    }
                    for ci in 0..c {
                        let u = self.nodes[x].value.at(ni, ci, y, xx).abs() + e;
                        out.set(ni, ci, y, xx, u / sum);
                    }
                }
            }
        }
        let req = self.requires(x);
        self.push(out, Op::SimplexHead { x, eps }, req)
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor<T>) {
        match &mut self.nodes[id].grad {
            Some(g) => g.add_in_place(&delta).expect("gradient shapes match"),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse pass from the given seed gradients. Multiple seeds may target
    /// different nodes (intermediate supervision); they are accumulated
    /// before propagation.
    pub fn backward(&mut self, seeds: Vec<(NodeId, Tensor<T>)>) -> Result<()> {
        for node in &mut self.nodes {
            node.grad = None;
        }
        for (id, seed) in seeds {
            if seed.shape() != self.nodes[id].value.shape() {
                return Err(NnError::ShapeMismatch(format!(
                    "seed {:?} for node of shape {:?}",
                    seed.shape(),
                    self.nodes[id].value.shape()
                )));
            }
            self.accumulate(id, seed);
        }

        for id in (0..self.nodes.len()).rev() {
            if self.nodes[id].grad.is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Conv { x, w, b, stride, pad } => {
                    let gout = self.nodes[id].grad.clone().expect("checked");
                    if self.requires(x) {
                        let mut gx = Tensor::zeros(self.nodes[x].value.shape());
                        conv_backward_input(&self.nodes[w].value, &gout, stride, pad, &mut gx);
                        self.accumulate(x, gx);
                    }
                    if self.requires(w) {
                        let mut gw = Tensor::zeros(self.nodes[w].value.shape());
                        conv_backward_weight(&self.nodes[x].value, &gout, stride, pad, &mut gw);
                        self.accumulate(w, gw);
                    }
                    if self.requires(b) {
                        let [n, cout, oh, ow] = gout.shape();
                        let mut gb = Tensor::zeros([1, cout, 1, 1]);
                        for ni in 0..n {
                            for c in 0..cout {
                                let mut s = T::ZERO;
                                for y in 0..oh {
                                    for xx in 0..ow {
                                        s += gout.at(ni, c, y, xx);
                                    }
                                }
                                let i = gb.idx(0, c, 0, 0);
                                gb.data_mut()[i] += s;
                            }
                        }
                        self.accumulate(b, gb);
                    }
                }
                Op::Relu { x } => {
                    let gout = self.nodes[id].grad.as_ref().expect("checked");
                    let xin = &self.nodes[x].value;
                    let mut gx = Tensor::zeros(xin.shape());
                    for i in 0..gx.numel() {
                        // subgradient 0 at exactly zero
                        if xin.data()[i] > T::ZERO {
                            gx.data_mut()[i] = gout.data()[i];
                        }
                    }
                    self.accumulate(x, gx);
                }
                Op::Softplus { x } => {
                    let gout = self.nodes[id].grad.as_ref().expect("checked");
                    let xin = &self.nodes[x].value;
                    let mut gx = Tensor::zeros(xin.shape());
                    for i in 0..gx.numel() {
                        let v = xin.data()[i];
                        // stable sigmoid
                        let sig = if v >= T::ZERO {
                            T::ONE / (T::ONE + (-v).exp())
                        } else {
                            let e = v.exp();
                            e / (T::ONE + e)
                        };
                        gx.data_mut()[i] = gout.data()[i] * sig;
                    }
                    self.accumulate(x, gx);
                }
                Op::Upsample2 { x } => {
                    let gout = self.nodes[id].grad.as_ref().expect("checked");
                    let [n, c, h, w] = self.nodes[x].value.shape();
                    let mut gx = Tensor::zeros([n, c, h, w]);
                    for ni in 0..n {
                        for ci in 0..c {
                            for y in 0..h * 2 {
                                for xx in 0..w * 2 {
                                    let i = gx.idx(ni, ci, y / 2, xx / 2);
                                    gx.data_mut()[i] += gout.at(ni, ci, y, xx);
                                }
                            }
                        }
                    }
                    self.accumulate(x, gx);
                }
                Op::Concat { a, b } => {
                    let gout = self.nodes[id].grad.clone().expect("checked");
                    let [n, ca, h, w] = self.nodes[a].value.shape();
                    let cb = self.nodes[b].value.shape()[1];
                    if self.requires(a) {
                        let mut ga = Tensor::zeros([n, ca, h, w]);
                        for ni in 0..n {
                            for c in 0..ca {
                                for y in 0..h {
                                    for x in 0..w {
                                        ga.set(ni, c, y, x, gout.at(ni, c, y, x));
                                    }
                                }
                            }
                        }
                        self.accumulate(a, ga);
                    }
                    if self.requires(b) {
                        let mut gb = Tensor::zeros([n, cb, h, w]);
                        for ni in 0..n {
                            for c in 0..cb {
                                for y in 0..h {
                                    for x in 0..w {
                                        gb.set(ni, c, y, x, gout.at(ni, c + ca, y, x));
                                    }
                                }
                            }
                        }
                        self.accumulate(b, gb);
                    }
                }
                Op::Add { a, b } => {
                    let gout = self.nodes[id].grad.clone().expect("checked");
                    if self.requires(a) {
                        self.accumulate(a, gout.clone());
                    }
                    if self.requires(b) {
                        self.accumulate(b, gout);
                    }
                }
                Op::SimplexHead { x, eps } => {
                    let gout = self.nodes[id].grad.as_ref().expect("checked");
                    let xin = &self.nodes[x].value;
                    let [n, c, h, w] = xin.shape();
                    let e = T::from_f64(eps);
                    let mut gx = Tensor::zeros([n, c, h, w]);
                    for ni in 0..n {
                        for y in 0..h {
                            for xx in 0..w {
                                let mut sum = T::ZERO;
                                for ci in 0..c {
                                    sum += xin.at(ni, ci, y, xx).abs() + e;
                                }
                                // dot of upstream gradient with the output
                                let mut dot = T::ZERO;
                                for ci in 0..c {
                                    let u = xin.at(ni, ci, y, xx).abs() + e;
                                    dot += gout.at(ni, ci, y, xx) * (u / sum);
                                }
                                for ci in 0..c {
                                    let v = xin.at(ni, ci, y, xx);
                                    let s = if v > T::ZERO {
                                        T::ONE
                                    } else if v < T::ZERO {
                                        -T::ONE
                                    } else {
                                        T::ZERO
                                    };
                                    let g = s * (gout.at(ni, ci, y, xx) - dot) / sum;
                                    gx.set(ni, ci, y, xx, g);
                                }
                            }
                        }
                    }
                    self.accumulate(x, gx);
                }
            }
        }
        Ok(())
    }
}

/// Output positions whose kernel tap (offset `koff`, padding `pad`) reads a
/// valid input coordinate: `lo..hi` such that `o*stride + koff - pad` lies
/// in `[0, in_dim)`.
#[inline]
fn tap_range(out_dim: usize, in_dim: usize, stride: usize, koff: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > koff { (pad - koff).div_ceil(stride) } else { 0 };
    let hi = if in_dim + pad > koff {
        ((in_dim - 1 + pad - koff) / stride + 1).min(out_dim)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
    out: &mut Tensor<T>,
) {
    let [n, cin, h, wd] = x.shape();
    let [cout, _, k, _] = w.shape();
    let [_, _, oh, ow] = out.shape();
    for ni in 0..n {
        for co in 0..cout {
            let bias = b.at(0, co, 0, 0);
            let base = out.idx(ni, co, 0, 0);
            for v in &mut out.data_mut()[base..base + oh * ow] {
                *v = bias;
            }
            for ci in 0..cin {
                for ky in 0..k {
                    let (oy_lo, oy_hi) = tap_range(oh, h, stride, ky, pad);
                    for kx in 0..k {
                        let wv = w.at(co, ci, ky, kx);
                        let (ox_lo, ox_hi) = tap_range(ow, wd, stride, kx, pad);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let in_row = x.idx(ni, ci, iy, 0);
                            let out_row = out.idx(ni, co, oy, 0);
                            if stride == 1 {
                                let src_start = in_row + ox_lo + kx - pad;
                                let len = ox_hi - ox_lo;
                                let src = &x.data()[src_start..src_start + len];
                                let dst = &mut out.data_mut()[out_row + ox_lo..out_row + ox_lo + len];
                                for (d, &s) in dst.iter_mut().zip(src) {
                                    *d += wv * s;
                                }
                            } else {
                                let out_data = out.data_mut();
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * stride + kx - pad;
                                    out_data[out_row + ox] += wv * x.data()[in_row + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_backward_input<T: Scalar>(
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
    gx: &mut Tensor<T>,
) {
    let [n, _, h, wd] = gx.shape();
    let [cout, cin, k, _] = w.shape();
    let [_, _, oh, ow] = gout.shape();
    for ni in 0..n {
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..k {
                    let (oy_lo, oy_hi) = tap_range(oh, h, stride, ky, pad);
                    for kx in 0..k {
                        let wv = w.at(co, ci, ky, kx);
                        let (ox_lo, ox_hi) = tap_range(ow, wd, stride, kx, pad);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let gx_row = gx.idx(ni, ci, iy, 0);
                            let go_row = gout.idx(ni, co, oy, 0);
                            if stride == 1 {
                                let dst_start = gx_row + ox_lo + kx - pad;
                                let len = ox_hi - ox_lo;
                                let src = &gout.data()[go_row + ox_lo..go_row + ox_lo + len];
                                let dst = &mut gx.data_mut()[dst_start..dst_start + len];
                                for (d, &s) in dst.iter_mut().zip(src) {
                                    *d += wv * s;
                                }
                            } else {
                                let gx_data = gx.data_mut();
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * stride + kx - pad;
                                    gx_data[gx_row + ix] += wv * gout.data()[go_row + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_backward_weight<T: Scalar>(
    x: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
    gw: &mut Tensor<T>,
) {
    let [n, cin, h, wd] = x.shape();
    let [cout, _, k, _] = gw.shape();
    let [_, _, oh, ow] = gout.shape();
    for ni in 0..n {
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..k {
                    let (oy_lo, oy_hi) = tap_range(oh, h, stride, ky, pad);
                    for kx in 0..k {
                        let (ox_lo, ox_hi) = tap_range(ow, wd, stride, kx, pad);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let mut acc = T::ZERO;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let in_row = x.idx(ni, ci, iy, 0);
                            let go_row = gout.idx(ni, co, oy, 0);
                            if stride == 1 {
                                let src_start = in_row + ox_lo + kx - pad;
                                let len = ox_hi - ox_lo;
                                let xs = &x.data()[src_start..src_start + len];
                                let gs = &gout.data()[go_row + ox_lo..go_row + ox_lo + len];
                                for (&a, &g) in xs.iter().zip(gs) {
                                    acc += a * g;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * stride + kx - pad;
                                    acc += x.data()[in_row + ix] * gout.data()[go_row + ox];
                                }
                            }
                        }
                        let i = gw.idx(co, ci, ky, kx);
                        gw.data_mut()[i] += acc;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_tensor(rng: &mut Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.range(lo, hi)).collect()).unwrap()
    }

    #[test]
    fn conv_identity_kernel_passes_through() {
        let mut g = Graph::<f64>::new();
        let mut rng = Rng::new(1);
        let x = random_tensor(&mut rng, [1, 2, 5, 5], -1.0, 1.0);
        // 3x3 identity kernel per channel: center tap one, cross-channel zero
        let mut w = Tensor::zeros([2, 2, 3, 3]);
        w.set(0, 0, 1, 1, 1.0);
        w.set(1, 1, 1, 1, 1.0);
        let b = Tensor::zeros([1, 2, 1, 1]);
        let xid = g.leaf(x.clone(), false);
        let wid = g.leaf(w, false);
        let bid = g.leaf(b, false);
        let out = g.conv2d(xid, wid, bid, 1, 1).unwrap();
        assert_eq!(g.value(out).data(), x.data());
    }

    #[test]
    fn conv_shapes() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros([1, 6, 64, 64]), false);
        let w = g.leaf(Tensor::zeros([16, 6, 3, 3]), false);
        let b = g.leaf(Tensor::zeros([1, 16, 1, 1]), false);
        let out = g.conv2d(x, w, b, 2, 1).unwrap();
        assert_eq!(g.value(out).shape(), [1, 16, 32, 32]);
        let out2 = g.conv2d(x, w, b, 1, 1).unwrap();
        assert_eq!(g.value(out2).shape(), [1, 16, 64, 64]);
    }

    #[test]
    fn relu_gradient_gates_on_sign() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec([1, 1, 1, 2], vec![-1.0, 2.0]).unwrap(), true);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
        g.backward(vec![(y, Tensor::from_vec([1, 1, 1, 2], vec![1.0, 1.0]).unwrap())]).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn softplus_is_positive_and_smooth() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec([1, 1, 1, 3], vec![-50.0, 0.0, 50.0]).unwrap(), false);
        let y = g.softplus(x);
        let v = g.value(y).data();
        assert!(v[0] > 0.0 && v[0] < 1e-20);
        assert!((v[1] - 2f64.ln()).abs() < 1e-12);
        assert!((v[2] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn upsample_then_sum_backward() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec([1, 1, 1, 1], vec![3.0]).unwrap(), true);
        let y = g.upsample2(x);
        assert_eq!(g.value(y).shape(), [1, 1, 2, 2]);
        assert_eq!(g.value(y).data(), &[3.0; 4]);
        g.backward(vec![(y, Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())]).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[10.0]);
    }

    #[test]
    fn concat_routes_gradients() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::from_vec([1, 1, 1, 1], vec![1.0]).unwrap(), true);
        let b = g.leaf(Tensor::from_vec([1, 2, 1, 1], vec![2.0, 3.0]).unwrap(), true);
        let y = g.concat(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0]);
        g.backward(vec![(y, Tensor::from_vec([1, 3, 1, 1], vec![10.0, 20.0, 30.0]).unwrap())]).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[10.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[20.0, 30.0]);
    }

    #[test]
    fn simplex_head_outputs_sum_to_one() {
        let mut g = Graph::<f64>::new();
        let mut rng = Rng::new(9);
        let x = random_tensor(&mut rng, [2, 3, 4, 4], -2.0, 2.0);
        let xid = g.leaf(x, false);
        let y = g.simplex_head(xid, 1e-3);
        let t = g.value(y);
        let [n, c, h, w] = t.shape();
        for ni in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let sum: f64 = (0..c).map(|ci| t.at(ni, ci, yy, xx)).sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                    for ci in 0..c {
                        assert!(t.at(ni, ci, yy, xx) >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn simplex_head_of_zeros_is_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros([1, 3, 2, 2]), false);
        let y = g.simplex_head(x, 1e-3);
        for &v in g.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_seed_backward_accumulates() {
        // y1 = relu(x), y2 = relu(x): seeds on both add up on x
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec([1, 1, 1, 1], vec![2.0]).unwrap(), true);
        let y1 = g.relu(x);
        let y2 = g.relu(x);
        g.backward(vec![
            (y1, Tensor::from_vec([1, 1, 1, 1], vec![1.0]).unwrap()),
            (y2, Tensor::from_vec([1, 1, 1, 1], vec![5.0]).unwrap()),
        ])
        .unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }
}
