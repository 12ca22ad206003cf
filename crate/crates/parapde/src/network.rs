//! Gated highway network: an initial dense layer, `L` gated layers and a
//! final dense output layer, evaluated on jet inputs via the autodiff tape.
//!
//! # Canonical parameter layout
//!
//! All trainable parameters live in one flat vector `theta`, in this fixed
//! order (matrices row-major):
//!
//! ```text
//! W0 (m x n), b0 (m),
//! for each layer l = 1..L:
//!     U_g (m x n), W_g (m x m), b_g (m),
//!     U_z (m x n), W_z (m x m), b_z (m),
//!     U_r (m x n), W_r (m x m), b_r (m),
//!     U_h (m x n), W_h (m x m), b_h (m),
//! W_out (1 x m), b_out (1)
//! ```
//!
//! This order is part of the model-file contract and must not change.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet2, NodeId, NodeRange, Tape};
use crate::numerics::Rng;

/// Activation applied to the three gates; the hidden layers always use tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GateActivation {
    #[default]
    Tanh,
    Sigmoid,
}

/// Network shape: `depth` gated layers of `width` nodes over `input_dim`
/// inputs (time + log-prices + parameters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub depth: usize,
    pub width: usize,
    pub input_dim: usize,
    #[serde(default)]
    pub gates: GateActivation,
}

impl Architecture {
    pub fn new(depth: usize, width: usize, input_dim: usize) -> Self {
        let arch = Architecture {
            depth,
            width,
            input_dim,
            gates: GateActivation::Tanh,
        };
        arch.validate().expect("invalid architecture");
        arch
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.depth < 1 {
            return Err("architecture depth must be >= 1".into());
        }
        if self.width < 1 {
            return Err("architecture width must be >= 1".into());
        }
        if self.input_dim < 2 {
            return Err("architecture input_dim must be >= 2".into());
        }
        Ok(())
    }

    /// Total number of trainable parameters:
    /// `m n + m + L (4 m n + 4 m^2 + 4 m) + m + 1`.
    pub fn param_count(&self) -> usize {
        let (m, n, l) = (self.width, self.input_dim, self.depth);
        m * n + m + l * (4 * m * n + 4 * m * m + 4 * m) + m + 1
    }

    fn layer_block(&self) -> usize {
        let (m, n) = (self.width, self.input_dim);
        4 * (m * n + m * m + m)
    }

    fn layer_offset(&self, l: usize) -> usize {
        let (m, n) = (self.width, self.input_dim);
        m * n + m + l * self.layer_block()
    }

    /// Offsets of one gate block `(U, W, b)` inside layer `l`; `slot` is the
    /// position in the canonical gate order g, z, r, h.
    fn gate_offsets(&self, l: usize, slot: usize) -> (usize, usize, usize) {
        let (m, n) = (self.width, self.input_dim);
        let gate_block = m * n + m * m + m;
        let base = self.layer_offset(l) + slot * gate_block;
        (base, base + m * n, base + m * n + m * m)
    }

    fn output_offsets(&self) -> (usize, usize) {
        let w = self.layer_offset(self.depth);
        (w, w + self.width)
    }
}

/// All trainable weights and biases, flattened in the canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    theta: Vec<f64>,
}

impl NetworkParams {
    /// Wrap an existing flat parameter vector (must match the layout).
    pub fn from_theta(arch: Architecture, theta: Vec<f64>) -> Self {
        assert_eq!(
            theta.len(),
            arch.param_count(),
            "theta length does not match architecture"
        );
        NetworkParams { arch, theta }
    }

    pub fn zeros(arch: Architecture) -> Self {
        let count = arch.param_count();
        NetworkParams { arch, theta: vec![0.0; count] }
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }
}

/// Glorot-normal initialisation: every weight-matrix entry is drawn from
/// `Normal(0, 2 / (fan_in + fan_out))`; all biases start at zero. Draw
/// order follows the canonical layout, so a seed pins the full vector.
pub fn init_glorot(arch: Architecture, rng: &mut Rng) -> NetworkParams {
    let (m, n, l) = (arch.width, arch.input_dim, arch.depth);
    let mut theta = Vec::with_capacity(arch.param_count());
    let mut matrix = |theta: &mut Vec<f64>, rows: usize, cols: usize, rng: &mut Rng| {
        let std = (2.0 / (rows + cols) as f64).sqrt();
        for _ in 0..rows * cols {
            theta.push(std * rng.normal());
        }
    };
    matrix(&mut theta, m, n, rng);
    theta.extend(std::iter::repeat(0.0).take(m));
    for _ in 0..l {
        for _gate in 0..4 {
            matrix(&mut theta, m, n, rng);
            matrix(&mut theta, m, m, rng);
            theta.extend(std::iter::repeat(0.0).take(m));
        }
    }
    matrix(&mut theta, 1, m, rng);
    theta.push(0.0);
    NetworkParams { arch, theta }
}

fn dense_vec(
    tape: &mut Tape,
    m: usize,
    w1: usize,
    in1: NodeRange,
    w2: Option<(usize, NodeRange)>,
    bias: usize,
) -> NodeRange {
    let first = tape.len() as u32;
    let len1 = in1.len as usize;
    for i in 0..m {
        let second = w2.map(|(w, r)| (w + i * r.len as usize, r));
        tape.dense_row(w1 + i * len1, in1, second, Some(bias + i));
    }
    NodeRange { first, len: m as u32 }
}

fn map_vec(tape: &mut Tape, v: NodeRange, f: fn(&mut Tape, NodeId) -> NodeId) -> NodeRange {
    let first = tape.len() as u32;
    for id in v.iter() {
        f(tape, id);
    }
    NodeRange { first, len: v.len }
}

fn zip_vec(
    tape: &mut Tape,
    a: NodeRange,
    b: NodeRange,
    f: fn(&mut Tape, NodeId, NodeId) -> NodeId,
) -> NodeRange {
    assert_eq!(a.len, b.len);
    let first = tape.len() as u32;
    for (x, y) in a.iter().zip(b.iter()) {
        f(tape, x, y);
    }
    NodeRange { first, len: a.len }
}

/// Evaluate the network on tape. `h0` must hold `input_dim` contiguous
/// nodes; the tape's parameter vector is the flattened `theta`. Returns the
/// scalar output node (the residual value before the localisation is
/// added).
pub fn forward_on_tape(arch: &Architecture, tape: &mut Tape, h0: NodeRange) -> NodeId {
    assert_eq!(h0.len as usize, arch.input_dim, "input dimension mismatch");
    let m = arch.width;
    let gate: fn(&mut Tape, NodeId) -> NodeId = match arch.gates {
        GateActivation::Tanh => |t, id| t.tanh(id),
        GateActivation::Sigmoid => |t, id| t.sigmoid(id),
    };

    let pre0 = dense_vec(tape, m, 0, h0, None, arch.width * arch.input_dim);
    let mut h = map_vec(tape, pre0, |t, id| t.tanh(id));

    for l in 0..arch.depth {
        let (u_g, w_g, b_g) = arch.gate_offsets(l, 0);
        let (u_z, w_z, b_z) = arch.gate_offsets(l, 1);
        let (u_r, w_r, b_r) = arch.gate_offsets(l, 2);
        let (u_h, w_h, b_h) = arch.gate_offsets(l, 3);

        let g_pre = dense_vec(tape, m, u_g, h0, Some((w_g, h)), b_g);
        let g = map_vec(tape, g_pre, gate);
        let z_pre = dense_vec(tape, m, u_z, h0, Some((w_z, h)), b_z);
        let z = map_vec(tape, z_pre, gate);
        let r_pre = dense_vec(tape, m, u_r, h0, Some((w_r, h)), b_r);
        let r = map_vec(tape, r_pre, gate);

        let hr = zip_vec(tape, h, r, |t, a, b| t.mul(a, b));
        let hh_pre = dense_vec(tape, m, u_h, h0, Some((w_h, hr)), b_h);
        let hh = map_vec(tape, hh_pre, |t, id| t.tanh(id));

        // h_next = (1 - g) .* hh + z .* h  ==  hh - g .* hh + z .* h
        let g_hh = zip_vec(tape, g, hh, |t, a, b| t.mul(a, b));
        let keep = zip_vec(tape, hh, g_hh, |t, a, b| t.sub(a, b));
        let carry = zip_vec(tape, z, h, |t, a, b| t.mul(a, b));
        h = zip_vec(tape, keep, carry, |t, a, b| t.add(a, b));
    }

    let (w_out, b_out) = arch.output_offsets();
    tape.dense_row(w_out, h, None, Some(b_out))
}

/// Evaluate the network on jet inputs, without keeping a tape around.
pub fn forward(params: &NetworkParams, h0: &[Jet2]) -> Jet2 {
    assert!(!h0.is_empty());
    let k = h0[0].directions();
    let mut tape = Tape::new(k, params.theta());
    let ins = tape.input_range(h0);
    let out = forward_on_tape(&params.arch, &mut tape, ins);
    tape.jet(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        let arch = Architecture::new(2, 5, 4);
        // m n + m + L (4 m n + 4 m^2 + 4 m) + m + 1
        assert_eq!(arch.param_count(), 20 + 5 + 2 * (80 + 100 + 20) + 5 + 1);
        assert_eq!(arch.param_count(), 431);
        let p = NetworkParams::zeros(arch);
        assert_eq!(p.theta().len(), 431);
    }

    #[test]
    fn glorot_is_deterministic_per_seed() {
        let arch = Architecture::new(2, 6, 5);
        let a = init_glorot(arch, &mut Rng::from_seed(11));
        let b = init_glorot(arch, &mut Rng::from_seed(11));
        assert_eq!(a.theta(), b.theta());
        let c = init_glorot(arch, &mut Rng::from_seed(12));
        assert_ne!(a.theta(), c.theta());
    }

    #[test]
    fn glorot_variance_matches_fan_sums() {
        // W0 has width*input_dim = 10000 entries
        let arch = Architecture::new(1, 100, 100);
        let p = init_glorot(arch, &mut Rng::from_seed(3));
        let w0 = &p.theta()[..100 * 100];
        let mean = w0.iter().sum::<f64>() / w0.len() as f64;
        let var = w0.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (w0.len() - 1) as f64;
        let target = 2.0 / (100.0 + 100.0);
        assert!((var - target).abs() < 0.2 * target, "var {var}, target {target}");
    }

    #[test]
    fn biases_start_at_zero() {
        let arch = Architecture::new(1, 3, 4);
        let p = init_glorot(arch, &mut Rng::from_seed(5));
        let b0 = &p.theta()[12..15];
        assert_eq!(b0, &[0.0, 0.0, 0.0]);
        assert_eq!(p.theta()[arch.param_count() - 1], 0.0);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = Architecture::new(3, 4, 3);
        let params = NetworkParams::zeros(arch);
        let h0: Vec<Jet2> = (0..3).map(|i| Jet2::variable(0.3 * i as f64, 3, i)).collect();
        let out = forward(&params, &h0);
        assert_eq!(out.val(), 0.0);
        assert!(out.d1_slice().iter().all(|&d| d == 0.0));
        assert!(out.d2_slice().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn handcrafted_single_unit_composition() {
        // L=1, m=1, n=2. Wire: h1 = tanh(x0); gates g=z=0 (zero weights,
        // zero bias); r = tanh(b_r) constant; hh = tanh(W_h h1 r);
        // output = w_out * hh. Closed form:
        //   w_out * tanh(c_r * tanh(x0)), c_r = tanh(b_r)
        let arch = Architecture::new(1, 1, 2);
        let mut p = NetworkParams::zeros(arch);
        let b_r = 2.0;
        let w_h = 1.0;
        let w_out = 0.7;
        {
            let t = p.theta_mut();
            t[0] = 1.0; // W0 = [1, 0]
            let (_, _, b_r_off) = arch.gate_offsets(0, 2);
            t[b_r_off] = b_r;
            let (_, w_h_off, _) = arch.gate_offsets(0, 3);
            t[w_h_off] = w_h;
            let (w_out_off, _) = arch.output_offsets();
            t[w_out_off] = w_out;
        }
        let x0 = 0.4;
        let h0 = [Jet2::variable(x0, 1, 0), Jet2::constant(-0.3, 1)];
        let out = forward(&p, &h0);
        let c_r = b_r.tanh();
        let expected = w_out * (w_h * c_r * x0.tanh()).tanh();
        assert!((out.val() - expected).abs() < 1e-15, "{} vs {expected}", out.val());
    }

    #[test]
    fn hessian_symmetric_under_direction_permutation() {
        let arch = Architecture::new(2, 5, 3);
        let p = init_glorot(arch, &mut Rng::from_seed(8));
        let xs = [0.2, -0.5, 0.8];
        let forward_with = |perm: [usize; 3]| {
            let h0: Vec<Jet2> = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| Jet2::variable(x, 3, perm[i]))
                .collect();
            forward(&p, &h0)
        };
        let a = forward_with([0, 1, 2]);
        let b = forward_with([2, 0, 1]);
        // input i is seeded on direction perm[i]; compare matching pairs
        for i in 0..3 {
            for j in 0..3 {
                let pa = a.d2(i, j);
                let pb = b.d2([2, 0, 1][i], [2, 0, 1][j]);
                assert!((pa - pb).abs() <= 1e-12 * pa.abs().max(1.0), "({i},{j})");
            }
        }
    }

    #[test]
    fn single_weight_perturbation_is_smooth() {
        let arch = Architecture::new(2, 4, 3);
        let p = init_glorot(arch, &mut Rng::from_seed(21));
        let h0: Vec<Jet2> = [0.1, -0.9, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &x)| Jet2::variable(x, 3, i))
            .collect();
        let base = forward(&p, &h0);
        let eps = 1e-6;
        for idx in [0usize, 7, 100, arch.param_count() - 1] {
            let mut q = p.clone();
            q.theta_mut()[idx] += eps;
            let out = forward(&q, &h0);
            let delta = (out.val() - base.val()).abs();
            assert!(out.val().is_finite());
            assert!(delta <= 100.0 * eps, "idx {idx}: delta {delta}");
        }
    }
}
