//! Network parameter containers and their forward passes.
//!
//! Three shapes are used throughout:
//!
//! * policy MLP (protagonist and its imitation teacher): input -> 3 hidden
//!   layers of 50 ReLU-6 units -> 1 tanh output in (-1, 1), interpreted as a
//!   pedal command;
//! * adversary actor: 3 ReLU-6 trunk layers of 50 units -> a 16-unit LSTM ->
//!   two heads producing the raw action mean (tanh) and variance
//!   (softplus plus a floor);
//! * adversary critic: 2 ReLU-6 layers of 50 units -> linear scalar value.
//!
//! Every forward exists twice: a pure function over [`Tensor`]s and a taped
//! version over [`Var`]s. Both are built from the same kernels applied in
//! the same order, so a replayed forward is bit-identical to the recorded
//! one — several tests and the training-time replay assertions rely on
//! exact equality, not tolerances.

use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::{self, Tensor};

/// Hidden width of the fully connected layers.
pub const HIDDEN: usize = 50;
/// LSTM cell count in the adversary actor.
pub const LSTM_UNITS: usize = 16;

/// Elementwise nonlinearity, shared by pure and taped forwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu6,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    /// Apply to one scalar.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu6 => x.clamp(0.0, 6.0),
            Activation::Tanh => math::tanh(x),
            Activation::Sigmoid => math::sigmoid(x),
            Activation::Softplus => math::softplus(x),
        }
    }
}

// ===== dense layers and MLPs ===========================================

/// One fully connected layer: `act(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub act: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero biases.
    pub fn init(out_dim: usize, in_dim: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let bound = math::sqrt(6.0 / (in_dim + out_dim) as f64);
        let mut data = Vec::with_capacity(out_dim * in_dim);
        for _ in 0..out_dim * in_dim {
            data.push(rng.random_range(-bound..bound));
        }
        Dense {
            w: Tensor::from_vec(out_dim, in_dim, data),
            b: Tensor::zeros(out_dim, 1),
            act,
        }
    }

    /// Forward for a column batch `x: [in_dim x B]`.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let z = tensor::matmul(&self.w, x);
        tensor::add_col_broadcast(&z, &self.b).map(|v| self.act.apply(v))
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// Build from explicit layer widths and activations;
    /// `dims = [in, h1, ..., out]` needs `acts.len() == dims.len() - 1`.
    pub fn init(dims: &[usize], acts: &[Activation], rng: &mut impl Rng) -> Self {
        assert_eq!(acts.len() + 1, dims.len(), "one activation per layer");
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, &act)| Dense::init(d[1], d[0], act, rng))
            .collect();
        MlpParams { layers }
    }

    /// Pedal policy network: `in_dim` inputs, three ReLU-6 hidden layers,
    /// tanh output in (-1, 1).
    pub fn policy(in_dim: usize, rng: &mut impl Rng) -> Self {
        Self::init(
            &[in_dim, HIDDEN, HIDDEN, HIDDEN, 1],
            &[Activation::Relu6, Activation::Relu6, Activation::Relu6, Activation::Tanh],
            rng,
        )
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("empty MLP").w.rows()
    }

    /// Forward for a column batch `x: [in_dim x B]`.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h);
        }
        h
    }

    /// Forward for a single observation, returning the scalar output.
    pub fn forward_one(&self, obs: &[f64]) -> f64 {
        assert_eq!(obs.len(), self.in_dim(), "observation dimension mismatch");
        self.forward(&Tensor::col_vec(obs)).item()
    }
}

// ===== LSTM =============================================================

/// Gate index order used everywhere (weights, checkpoints): input, forget,
/// cell candidate, output.
pub const GATES: usize = 4;

/// Single-layer LSTM weights; per gate `z_g = W_x[g] x + W_h[g] h + b[g]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_x: [Tensor; GATES],
    pub w_h: [Tensor; GATES],
    pub b: [Tensor; GATES],
}

impl LstmParams {
    pub fn init(units: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        // Draw order is part of the determinism contract: per gate, W_x
        // then W_h; biases start at zero.
        let mut w_x = Vec::with_capacity(GATES);
        let mut w_h = Vec::with_capacity(GATES);
        for _ in 0..GATES {
            w_x.push(Dense::init(units, in_dim, Activation::Linear, rng).w);
            w_h.push(Dense::init(units, units, Activation::Linear, rng).w);
        }
        LstmParams {
            w_x: w_x.try_into().expect("gate count"),
            w_h: w_h.try_into().expect("gate count"),
            b: core::array::from_fn(|_| Tensor::zeros(units, 1)),
        }
    }

    pub fn units(&self) -> usize {
        self.w_x[0].rows()
    }

    /// One recurrent step; returns the next state.
    pub fn step(&self, x: &Tensor, state: &RecurrentState) -> RecurrentState {
        let mut z = [const { None::<Tensor> }; GATES];
        for g in 0..GATES {
            let a = tensor::matmul(&self.w_x[g], x);
            let b = tensor::matmul(&self.w_h[g], &state.h);
            let sum = tensor::zip(&a, &b, |p, q| p + q);
            z[g] = Some(tensor::zip(&sum, &self.b[g], |p, q| p + q));
        }
        let [zi, zf, zg, zo] = z.map(|t| t.expect("gate"));
        let i = zi.map(|v| Activation::Sigmoid.apply(v));
        let f = zf.map(|v| Activation::Sigmoid.apply(v));
        let g = zg.map(|v| Activation::Tanh.apply(v));
        let o = zo.map(|v| Activation::Sigmoid.apply(v));
        let fc = tensor::zip(&f, &state.c, |p, q| p * q);
        let ig = tensor::zip(&i, &g, |p, q| p * q);
        let c = tensor::zip(&fc, &ig, |p, q| p + q);
        let tanh_c = c.map(|v| Activation::Tanh.apply(v));
        let h = tensor::zip(&o, &tanh_c, |p, q| p * q);
        RecurrentState { h, c }
    }
}

/// LSTM hidden and cell state, both column vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub h: Tensor,
    pub c: Tensor,
}

impl RecurrentState {
    pub fn zeros(units: usize) -> Self {
        RecurrentState { h: Tensor::zeros(units, 1), c: Tensor::zeros(units, 1) }
    }
}

// ===== adversary actor and critic =======================================

/// Recurrent stochastic policy over lead-vehicle accelerations.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorParams {
    pub trunk: MlpParams,
    pub lstm: LstmParams,
    pub head_mu: Dense,
    pub head_var: Dense,
}

/// Initial bias on the action-mean head. Braking is the only lever that
/// forces the follower's hand, so the initial action distribution is
/// centered at mid-braking (tanh(-0.55) maps to about -4 m/s² through the
/// action map) instead of the map's midpoint; without the prior, the first
/// provoked near-collisions are too rare for the learning signal to take
/// hold within a normal episode budget.
pub const HEAD_MU_BIAS_INIT: f64 = -0.55;

impl ActorParams {
    pub fn init(obs_dim: usize, rng: &mut impl Rng) -> Self {
        let trunk = MlpParams::init(
            &[obs_dim, HIDDEN, HIDDEN, HIDDEN],
            &[Activation::Relu6, Activation::Relu6, Activation::Relu6],
            rng,
        );
        let lstm = LstmParams::init(LSTM_UNITS, HIDDEN, rng);
        let mut head_mu = Dense::init(1, LSTM_UNITS, Activation::Tanh, rng);
        head_mu.b.set(0, 0, HEAD_MU_BIAS_INIT);
        let head_var = Dense::init(1, LSTM_UNITS, Activation::Softplus, rng);
        ActorParams { trunk, lstm, head_mu, head_var }
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    /// One policy step: trunk, recurrent cell, then both heads.
    /// Returns the raw tanh mean in (-1, 1), the floored variance, and the
    /// next recurrent state.
    pub fn step(
        &self,
        obs: &[f64],
        state: &RecurrentState,
        var_floor: f64,
    ) -> (f64, f64, RecurrentState) {
        assert_eq!(obs.len(), self.obs_dim(), "actor observation dimension mismatch");
        let x = self.trunk.forward(&Tensor::col_vec(obs));
        let next = self.lstm.step(&x, state);
        let mu_raw = self.head_mu.forward(&next.h).item();
        let var = self.head_var.forward(&next.h).item() + var_floor;
        (mu_raw, var, next)
    }
}

/// State-value network for the adversary.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticParams {
    pub mlp: MlpParams,
}

impl CriticParams {
    pub fn init(obs_dim: usize, rng: &mut impl Rng) -> Self {
        CriticParams {
            mlp: MlpParams::init(
                &[obs_dim, HIDDEN, HIDDEN, 1],
                &[Activation::Relu6, Activation::Relu6, Activation::Linear],
                rng,
            ),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.mlp.forward_one(obs)
    }
}

// ===== parameter-set plumbing ===========================================

/// Uniform access to every tensor in a parameter container, in a fixed
/// declaration order. The optimizer, checkpointing, and the finite-difference
/// harness all walk parameters through this trait.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Copy every coefficient into one flat vector, declaration order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`ParamSet::flatten`]; lengths must match.
    fn load_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    /// Zero every tensor in place (gradient accumulators, optimizer caches).
    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.data_mut().fill(0.0);
        }
    }

    /// `self += scale * other` tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let theirs = other.tensors();
        let mut mine = self.tensors_mut();
        assert_eq!(mine.len(), theirs.len(), "parameter set shape mismatch");
        for (m, t) in mine.iter_mut().zip(theirs) {
            m.add_scaled(t, scale);
        }
    }
}

impl ParamSet for MlpParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}

impl ParamSet for ActorParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.trunk.tensors();
        for g in 0..GATES {
            v.push(&self.lstm.w_x[g]);
            v.push(&self.lstm.w_h[g]);
            v.push(&self.lstm.b[g]);
        }
        v.extend([&self.head_mu.w, &self.head_mu.b, &self.head_var.w, &self.head_var.b]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.trunk.tensors_mut();
        // Same per-gate interleaving as `tensors`; the two orders must agree
        // for flatten/load_flat and the optimizer to pair tensors correctly.
        let lstm = &mut self.lstm;
        for ((wx, wh), b) in lstm
            .w_x
            .iter_mut()
            .zip(lstm.w_h.iter_mut())
            .zip(lstm.b.iter_mut())
        {
            v.push(wx);
            v.push(wh);
            v.push(b);
        }
        v.extend([
            &mut self.head_mu.w,
            &mut self.head_mu.b,
            &mut self.head_var.w,
            &mut self.head_var.b,
        ]);
        v
    }
}

impl ParamSet for CriticParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.mlp.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.tensors_mut()
    }
}

// ===== taped forwards ====================================================

/// Tape handles for one dense layer.
#[derive(Clone, Copy)]
pub struct DenseVars {
    pub w: Var,
    pub b: Var,
    pub act: Activation,
}

/// Tape handles for an MLP.
pub struct MlpVars {
    pub layers: Vec<DenseVars>,
}

/// Put every MLP tensor on the tape as a leaf.
pub fn register_mlp(tape: &mut Tape, p: &MlpParams) -> MlpVars {
    MlpVars {
        layers: p
            .layers
            .iter()
            .map(|l| DenseVars {
                w: tape.leaf(l.w.clone()),
                b: tape.leaf(l.b.clone()),
                act: l.act,
            })
            .collect(),
    }
}

/// Taped MLP forward; mirrors [`MlpParams::forward`] op for op.
pub fn mlp_forward_tape(tape: &mut Tape, vars: &MlpVars, x: Var) -> Var {
    let mut h = x;
    for layer in &vars.layers {
        let z = tape.matmul(layer.w, h);
        let zb = tape.add_col_broadcast(z, layer.b);
        h = tape.activation(zb, layer.act);
    }
    h
}

/// Collect MLP gradients back into parameter shape (zeros where the loss
/// never touched a tensor).
pub fn mlp_grad(vars: &MlpVars, grads: &Gradients, like: &MlpParams) -> MlpParams {
    let layers = vars
        .layers
        .iter()
        .zip(&like.layers)
        .map(|(v, l)| Dense {
            w: grads.get_or_zeros(v.w, l.w.rows(), l.w.cols()),
            b: grads.get_or_zeros(v.b, l.b.rows(), l.b.cols()),
            act: l.act,
        })
        .collect();
    MlpParams { layers }
}

/// Tape handles for the LSTM weights.
pub struct LstmVars {
    pub w_x: [Var; GATES],
    pub w_h: [Var; GATES],
    pub b: [Var; GATES],
}

pub fn register_lstm(tape: &mut Tape, p: &LstmParams) -> LstmVars {
    LstmVars {
        w_x: core::array::from_fn(|g| tape.leaf(p.w_x[g].clone())),
        w_h: core::array::from_fn(|g| tape.leaf(p.w_h[g].clone())),
        b: core::array::from_fn(|g| tape.leaf(p.b[g].clone())),
    }
}

/// Taped LSTM step; mirrors [`LstmParams::step`] op for op.
pub fn lstm_step_tape(tape: &mut Tape, vars: &LstmVars, x: Var, h: Var, c: Var) -> (Var, Var) {
    let mut z = [x; GATES]; // placeholder handles, overwritten below
    for g in 0..GATES {
        let a = tape.matmul(vars.w_x[g], x);
        let b = tape.matmul(vars.w_h[g], h);
        let sum = tape.add(a, b);
        z[g] = tape.add(sum, vars.b[g]);
    }
    let i = tape.activation(z[0], Activation::Sigmoid);
    let f = tape.activation(z[1], Activation::Sigmoid);
    let g = tape.activation(z[2], Activation::Tanh);
    let o = tape.activation(z[3], Activation::Sigmoid);
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_next = tape.add(fc, ig);
    let tanh_c = tape.activation(c_next, Activation::Tanh);
    let h_next = tape.mul(o, tanh_c);
    (h_next, c_next)
}

/// Tape handles for the full actor.
pub struct ActorVars {
    pub trunk: MlpVars,
    pub lstm: LstmVars,
    pub head_mu: DenseVars,
    pub head_var: DenseVars,
}

pub fn register_actor(tape: &mut Tape, p: &ActorParams) -> ActorVars {
    ActorVars {
        trunk: register_mlp(tape, &p.trunk),
        lstm: register_lstm(tape, &p.lstm),
        head_mu: DenseVars {
            w: tape.leaf(p.head_mu.w.clone()),
            b: tape.leaf(p.head_mu.b.clone()),
            act: p.head_mu.act,
        },
        head_var: DenseVars {
            w: tape.leaf(p.head_var.w.clone()),
            b: tape.leaf(p.head_var.b.clone()),
            act: p.head_var.act,
        },
    }
}

/// Taped actor step over an observation already on the tape. Returns
/// `(mu_raw, var, h_next, c_next)`; `var` includes the floor.
pub fn actor_step_tape(
    tape: &mut Tape,
    vars: &ActorVars,
    obs: Var,
    h: Var,
    c: Var,
    var_floor: f64,
) -> (Var, Var, Var, Var) {
    let x = mlp_forward_tape(tape, &vars.trunk, obs);
    let (h_next, c_next) = lstm_step_tape(tape, &vars.lstm, x, h, c);
    let mu_z = tape.matmul(vars.head_mu.w, h_next);
    let mu_zb = tape.add_col_broadcast(mu_z, vars.head_mu.b);
    let mu_raw = tape.activation(mu_zb, vars.head_mu.act);
    let var_z = tape.matmul(vars.head_var.w, h_next);
    let var_zb = tape.add_col_broadcast(var_z, vars.head_var.b);
    let var_sp = tape.activation(var_zb, vars.head_var.act);
    let var = tape.add_const(var_sp, var_floor);
    (mu_raw, var, h_next, c_next)
}

/// Collect actor gradients back into parameter shape.
pub fn actor_grad(vars: &ActorVars, grads: &Gradients, like: &ActorParams) -> ActorParams {
    let gz = |v: Var, t: &Tensor| grads.get_or_zeros(v, t.rows(), t.cols());
    ActorParams {
        trunk: mlp_grad(&vars.trunk, grads, &like.trunk),
        lstm: LstmParams {
            w_x: core::array::from_fn(|g| gz(vars.lstm.w_x[g], &like.lstm.w_x[g])),
            w_h: core::array::from_fn(|g| gz(vars.lstm.w_h[g], &like.lstm.w_h[g])),
            b: core::array::from_fn(|g| gz(vars.lstm.b[g], &like.lstm.b[g])),
        },
        head_mu: Dense {
            w: gz(vars.head_mu.w, &like.head_mu.w),
            b: gz(vars.head_mu.b, &like.head_mu.b),
            act: like.head_mu.act,
        },
        head_var: Dense {
            w: gz(vars.head_var.w, &like.head_var.w),
            b: gz(vars.head_var.b, &like.head_var.b),
            act: like.head_var.act,
        },
    }
}
