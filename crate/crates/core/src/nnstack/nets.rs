//! The four network topologies and their parameter initialization.
//!
//! Fixed toy architectures, all under 200k parameters:
//!
//! - chromnet: image to reflectance chromaticity, residual core at half
//!   resolution, simplex head, final conv zero-initialized so training
//!   starts from the neutral chromaticity.
//! - shadingnet: 6-channel (image + chromaticity) to two RGB shading maps
//!   through a three-level encoder/decoder with skip concats; softplus head.
//! - separatenet: strictly per-pixel 1x1 stack from (shadings + image) to
//!   the two separated images; softplus head.
//! - singlenet: the shadingnet encoder/decoder applied directly to the
//!   3-channel image, predicting the two separated images.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::{NnError, Result};
use crate::rng::Rng;

/// Epsilon of the simplex head (`|x| + eps` normalized).
pub const SIMPLEX_HEAD_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ChromNet,
    ShadingNet,
    SeparateNet,
    SingleNet,
}

impl Role {
    pub fn input_channels(&self) -> usize {
        match self {
            Role::ChromNet => 3,
            Role::ShadingNet => 6,
            Role::SeparateNet => 9,
            Role::SingleNet => 3,
        }
    }

    pub fn output_channels(&self) -> usize {
        match self {
            Role::ChromNet => 3,
            _ => 6,
        }
    }

    /// Input dims must be divisible by this (stride-2 levels + upsampling).
    pub fn dim_multiple(&self) -> usize {
        match self {
            Role::ChromNet => 2,
            Role::ShadingNet | Role::SingleNet => 8,
            Role::SeparateNet => 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::ChromNet => "chromnet",
            Role::ShadingNet => "shadingnet",
            Role::SeparateNet => "separatenet",
            Role::SingleNet => "singlenet",
        }
    }
}

/// Named parameter tensor (f32 master copy).
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor<f32>,
}

/// A network: role plus its named parameters in topology order.
#[derive(Debug, Clone)]
pub struct Network {
    pub role: Role,
    pub params: Vec<Param>,
}

/// (name, cout, cin, k) for every conv of a role, in forward order.
fn conv_table(role: Role) -> Vec<(&'static str, usize, usize, usize)> {
    match role {
        Role::ChromNet => vec![
            ("c1", 16, 3, 3),
            ("d1", 32, 16, 3),
            ("r1", 32, 32, 3),
            ("r2", 32, 32, 3),
            ("u1", 16, 32, 3),
            ("out", 3, 16, 3),
        ],
        Role::ShadingNet | Role::SingleNet => {
            let cin = role.input_channels();
            vec![
                ("e1", 16, cin, 3),
                ("e2", 32, 16, 3),
                ("e3", 64, 32, 3),
                ("d2", 32, 64 + 32, 3),
                ("d1", 16, 32 + 16, 3),
                ("d0", 16, 16 + cin, 3),
                ("out", 6, 16, 3),
            ]
        }
        Role::SeparateNet => vec![("p1", 32, 9, 1), ("p2", 32, 32, 1), ("out", 6, 32, 1)],
    }
}

impl Network {
    /// He fan-in initialization, seed-derived; biases zero. The chromnet
    /// output conv starts with zero weights and a small positive bias: the
    /// untrained net emits exactly the neutral chromaticity, and the
    /// positive pre-activation keeps the simplex head's |x| off its kink so
    /// gradients flow from the first step. (All-zero init is a stationary
    /// point of the head.)
    pub fn init(role: Role, rng: &mut Rng) -> Network {
        let mut params = Vec::new();
        for (name, cout, cin, k) in conv_table(role) {
            let fan_in = cin * k * k;
            let std = (2.0 / fan_in as f64).sqrt();
            let neutral_head = role == Role::ChromNet && name == "out";
            let n = cout * cin * k * k;
            let data: Vec<f32> = (0..n)
                .map(|_| if neutral_head { 0.0 } else { (rng.normal() * std) as f32 })
                .collect();
            params.push(Param {
                name: format!("{name}.w"),
                value: Tensor::from_vec([cout, cin, k, k], data).expect("sized buffer"),
            });
            let bias = if neutral_head { 0.1 } else { 0.0 };
            params.push(Param {
                name: format!("{name}.b"),
                value: Tensor::from_vec([1, cout, 1, 1], vec![bias; cout]).expect("sized buffer"),
            });
        }
        Network { role, params }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Parameters of one network bound into a graph as leaves.
pub struct BoundParams {
    names: Vec<String>,
    ids: Vec<NodeId>,
}

impl BoundParams {
    pub fn bind<T: Scalar>(g: &mut Graph<T>, net: &Network, requires_grad: bool) -> BoundParams {
        let mut names = Vec::with_capacity(net.params.len());
        let mut ids = Vec::with_capacity(net.params.len());
        for p in &net.params {
            names.push(p.name.clone());
            ids.push(g.leaf(p.value.cast::<T>(), requires_grad));
        }
        BoundParams { names, ids }
    }

    /// Bind pre-converted tensors (used by the f64 gradcheck paths).
    pub fn bind_tensors<T: Scalar>(
        g: &mut Graph<T>,
        named: &[(String, Tensor<T>)],
        requires_grad: bool,
    ) -> BoundParams {
        let mut names = Vec::with_capacity(named.len());
        let mut ids = Vec::with_capacity(named.len());
        for (name, t) in named {
            names.push(name.clone());
            ids.push(g.leaf(t.clone(), requires_grad));
        }
        BoundParams { names, ids }
    }

    fn get(&self, name: &str) -> NodeId {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        self.ids[i]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

/// Bind a network's parameters into a graph as leaves.
pub fn bind_params<T: Scalar>(g: &mut Graph<T>, net: &Network, requires_grad: bool) -> BoundParams {
    BoundParams::bind(g, net, requires_grad)
}

/// Bind pre-converted named tensors (gradcheck paths working in f64).
pub fn bind_named_params<T: Scalar>(
    g: &mut Graph<T>,
    named: &[(String, Tensor<T>)],
    requires_grad: bool,
) -> BoundParams {
    BoundParams::bind_tensors(g, named, requires_grad)
}

fn check_input<T: Scalar>(g: &Graph<T>, role: Role, input: NodeId) -> Result<(usize, usize)> {
    let [_, c, h, w] = g.value(input).shape();
    if c != role.input_channels() {
        return Err(NnError::ShapeMismatch(format!(
            "{} expects {} input channels, got {c}",
            role.as_str(),
            role.input_channels()
        )));
    }
    let m = role.dim_multiple();
    if h % m != 0 || w % m != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "{} needs dims divisible by {m}, got {h}x{w}",
            role.as_str()
        )));
    }
    Ok((h, w))
}

fn conv_block<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    name: &str,
    x: NodeId,
    stride: usize,
    pad: usize,
) -> Result<NodeId> {
    g.conv2d(x, p.get(&format!("{name}.w")), p.get(&format!("{name}.b")), stride, pad)
}

/// Build the forward graph of a network from its bound parameters.
pub fn forward_net<T: Scalar>(
    g: &mut Graph<T>,
    role: Role,
    params: &BoundParams,
    input: NodeId,
) -> Result<NodeId> {
    check_input(g, role, input)?;
    match role {
        Role::ChromNet => {
            let c1 = conv_block(g, params, "c1", input, 1, 1)?;
            let c1 = g.relu(c1);
            let d1 = conv_block(g, params, "d1", c1, 2, 1)?;
            let mut x = g.relu(d1);
            for name in ["r1", "r2"] {
                let conv = conv_block(g, params, name, x, 1, 1)?;
                let act = g.relu(conv);
                x = g.add(x, act)?;
            }
            let up = g.upsample2(x);
            let u1 = conv_block(g, params, "u1", up, 1, 1)?;
            let u1 = g.relu(u1);
            let out = conv_block(g, params, "out", u1, 1, 1)?;
            Ok(g.simplex_head(out, SIMPLEX_HEAD_EPS))
        }
        Role::ShadingNet | Role::SingleNet => {
            let e1 = conv_block(g, params, "e1", input, 2, 1)?;
            let e1 = g.relu(e1);
            let e2 = conv_block(g, params, "e2", e1, 2, 1)?;
            let e2 = g.relu(e2);
            let e3 = conv_block(g, params, "e3", e2, 2, 1)?;
            let e3 = g.relu(e3);

            let u2 = g.upsample2(e3);
            let cat2 = g.concat(u2, e2)?;
            let d2 = conv_block(g, params, "d2", cat2, 1, 1)?;
            let d2 = g.relu(d2);

            let u1 = g.upsample2(d2);
            let cat1 = g.concat(u1, e1)?;
            let d1 = conv_block(g, params, "d1", cat1, 1, 1)?;
            let d1 = g.relu(d1);

            let u0 = g.upsample2(d1);
            let cat0 = g.concat(u0, input)?;
            let d0 = conv_block(g, params, "d0", cat0, 1, 1)?;
            let d0 = g.relu(d0);

            let out = conv_block(g, params, "out", d0, 1, 1)?;
            Ok(g.softplus(out))
        }
        Role::SeparateNet => {
            let p1 = conv_block(g, params, "p1", input, 1, 0)?;
            let p1 = g.relu(p1);
            let p2 = conv_block(g, params, "p2", p1, 1, 0)?;
            let p2 = g.relu(p2);
            let out = conv_block(g, params, "out", p2, 1, 0)?;
            Ok(g.softplus(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> Rng {
        Rng::new(42)
    }

    #[test]
    fn parameter_counts_stay_toy_sized() {
        for role in [Role::ChromNet, Role::ShadingNet, Role::SeparateNet, Role::SingleNet] {
            let net = Network::init(role, &mut rng());
            let count = net.param_count();
            assert!(count < 200_000, "{}: {count} params", role.as_str());
            assert!(count > 100, "{}: suspiciously few params", role.as_str());
        }
    }

    #[test]
    fn chromnet_outputs_simplex_everywhere() {
        let net = Network::init(Role::ChromNet, &mut rng());
        let mut g = Graph::<f32>::new();
        let mut r = Rng::new(7);
        let n: usize = 3 * 16 * 16;
        let input = Tensor::from_vec(
            [1, 3, 16, 16],
            (0..n).map(|_| r.range(0.0, 1.0) as f32).collect(),
        )
        .unwrap();
        let x = g.leaf(input, false);
        let bound = BoundParams::bind(&mut g, &net, false);
        let out = forward_net(&mut g, Role::ChromNet, &bound, x).unwrap();
        let t = g.value(out);
        assert_eq!(t.shape(), [1, 3, 16, 16]);
        for y in 0..16 {
            for xx in 0..16 {
                let sum: f32 = (0..3).map(|c| t.at(0, c, y, xx)).sum();
                assert!((sum - 1.0).abs() < 1e-5);
            }
        }
    }

    // Zero-initialized final conv means the untrained chromnet emits exactly
    // the neutral chromaticity.
    #[test]
    fn untrained_chromnet_is_neutral() {
        let net = Network::init(Role::ChromNet, &mut rng());
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec([1, 3, 8, 8], vec![0.5; 192]).unwrap(), false);
        let bound = BoundParams::bind(&mut g, &net, false);
        let out = forward_net(&mut g, Role::ChromNet, &bound, x).unwrap();
        for &v in g.value(out).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shadingnet_outputs_nonnegative_six_channels() {
        let net = Network::init(Role::ShadingNet, &mut rng());
        let mut g = Graph::<f32>::new();
        let mut r = Rng::new(3);
        let input = Tensor::from_vec(
            [1, 6, 16, 16],
            (0..6 * 256).map(|_| r.range(-0.2, 1.0) as f32).collect(),
        )
        .unwrap();
        let x = g.leaf(input, false);
        let bound = BoundParams::bind(&mut g, &net, false);
        let out = forward_net(&mut g, Role::ShadingNet, &bound, x).unwrap();
        assert_eq!(g.value(out).shape(), [1, 6, 16, 16]);
        for &v in g.value(out).data() {
            assert!(v >= 0.0);
        }
    }

    // The bottleneck sits under three stride-2 3x3 convs: receptive field
    // 3 + 2*2 + 4*2 = 15 pixels. Verified numerically: poking the input at
    // distance 7 from a bottleneck cell's center moves it, distance 8+ off
    // the support row does not.
    #[test]
    fn shadingnet_bottleneck_receptive_field() {
        let net = Network::init(Role::ShadingNet, &mut rng());
        let base: Tensor<f64> = Tensor::zeros([1, 6, 64, 64]);

        let bottleneck_value = |input: &Tensor<f64>, cell: (usize, usize)| -> f64 {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(input.clone(), false);
            let bound = BoundParams::bind(&mut g, &net, false);
            // encoder only
            let e1 = conv_block(&mut g, &bound, "e1", x, 2, 1).unwrap();
            let e1 = g.relu(e1);
            let e2 = conv_block(&mut g, &bound, "e2", e1, 2, 1).unwrap();
            let e2 = g.relu(e2);
            let e3 = conv_block(&mut g, &bound, "e3", e2, 2, 1).unwrap();
            // pre-activation sum over channels at the cell
            (0..64).map(|c| g.value(e3).at(0, c, cell.0, cell.1)).sum()
        };

        // bottleneck cell (4,4) maps to input center (32,32); RF 15 spans
        // input rows/cols 25..=39 (stride-2 3x3 three times, pad 1)
        let cell = (4, 4);
        let v0 = bottleneck_value(&base, cell);
        let mut poked = base.clone();
        poked.set(0, 0, 32, 25, 10.0);
        assert!((bottleneck_value(&poked, cell) - v0).abs() > 1e-9, "edge of RF must respond");
        let mut poked = base.clone();
        poked.set(0, 0, 32, 39, 10.0);
        assert!((bottleneck_value(&poked, cell) - v0).abs() > 1e-9, "other edge must respond");
        let mut outside = base.clone();
        outside.set(0, 0, 32, 24, 10.0);
        assert_eq!(bottleneck_value(&outside, cell), v0, "outside the RF");
        let mut outside = base.clone();
        outside.set(0, 0, 32, 40, 10.0);
        assert_eq!(bottleneck_value(&outside, cell), v0, "outside the RF");
    }

    #[test]
    fn separatenet_is_per_pixel() {
        let net = Network::init(Role::SeparateNet, &mut rng());
        let mut r = Rng::new(5);
        let n = 9 * 4 * 4;
        let data: Vec<f64> = (0..n).map(|_| r.range(0.0, 1.0)).collect();
        let input = Tensor::from_vec([1, 9, 4, 4], data.clone()).unwrap();

        let run = |t: &Tensor<f64>| -> Tensor<f64> {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(t.clone(), false);
            let bound = BoundParams::bind(&mut g, &net, false);
            let out = forward_net(&mut g, Role::SeparateNet, &bound, x).unwrap();
            g.value(out).clone()
        };
        let out = run(&input);

        // permute pixel locations: outputs permute identically
        let mut permuted = Tensor::zeros([1, 9, 4, 4]);
        let perm = |y: usize, x: usize| ((y + 2) % 4, (3 - x));
        for c in 0..9 {
            for y in 0..4 {
                for x in 0..4 {
                    let (py, px) = perm(y, x);
                    permuted.set(0, c, py, px, input.at(0, c, y, x));
                }
            }
        }
        let out_p = run(&permuted);
        for c in 0..6 {
            for y in 0..4 {
                for x in 0..4 {
                    let (py, px) = perm(y, x);
                    assert_eq!(out_p.at(0, c, py, px), out.at(0, c, y, x));
                }
            }
        }
        for &v in out.data() {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn wrong_dims_rejected() {
        let net = Network::init(Role::ShadingNet, &mut rng());
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros([1, 6, 20, 20]), false); // not /8
        let bound = BoundParams::bind(&mut g, &net, false);
        assert!(forward_net(&mut g, Role::ShadingNet, &bound, x).is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Network::init(Role::SingleNet, &mut Rng::new(11));
        let b = Network::init(Role::SingleNet, &mut Rng::new(11));
        for (pa, pb) in a.params.iter().zip(&b.params) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value.data(), pb.value.data());
        }
    }
}
