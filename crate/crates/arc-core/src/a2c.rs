//! Advantage actor-critic training for the lead-vehicle adversary.
//!
//! The adversary emits a Gaussian over lead accelerations each step. Rollouts
//! are cut into fixed-length windows; each window is replayed on the
//! differentiation tape (truncated backprop through the LSTM, detached at the
//! window boundary) to produce policy and value gradients, then both networks
//! take an RMSProp step. Log-probabilities and entropies are computed with a
//! pinned operation order so that the pure collection-time values and the
//! taped replay agree to the last bit.
//!
//! Loss conventions over a window of length L:
//!
//! * policy:  `L_pi = mean_t [ -log pi(a_t) * A_t - beta * H_t ]`
//! * value:   `L_v  = mean_t [ (G_t - V(s_t))^2 ]`
//!
//! with `G_t` the n-step discounted return bootstrapped by the critic at the
//! window end (zero at terminal states) and `A_t = G_t - V(s_t)` treated as
//! a constant in `L_pi`.

use crate::env::{self, EnvConfig};
use crate::math;
use crate::nn::{
    actor_grad, actor_step_tape, mlp_forward_tape, mlp_grad, register_actor, register_mlp,
    ActorParams, CriticParams, MlpParams, ParamSet, RecurrentState, LSTM_UNITS,
};
use crate::optim::{RmsProp, RmsPropState};
use crate::rng::SeedStream;
use crate::tape::Tape;
use crate::tensor::Tensor;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct A2cHyper {
    /// Actor and critic RMSProp learning rates.
    pub eta_actor: f64,
    pub eta_critic: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Entropy bonus weight.
    pub beta: f64,
    /// Window length for truncated backprop and n-step returns.
    pub window: usize,
    /// Additive variance floor under the softplus head.
    pub var_floor: f64,
    /// Training episode budget.
    pub episodes: u32,
}

impl Default for A2cHyper {
    fn default() -> Self {
        A2cHyper {
            eta_actor: 1e-4,
            eta_critic: 1e-2,
            gamma: 0.99,
            beta: 1e-4,
            window: 16,
            var_floor: 1e-4,
            episodes: 300,
        }
    }
}

impl A2cHyper {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.eta_actor > 0.0 && self.eta_actor.is_finite()) {
            return Err("eta_actor");
        }
        if !(self.eta_critic > 0.0 && self.eta_critic.is_finite()) {
            return Err("eta_critic");
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err("gamma");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err("beta");
        }
        if self.window == 0 {
            return Err("adv.window");
        }
        if !(self.var_floor > 0.0) {
            return Err("adv.var_floor");
        }
        Ok(())
    }
}

// ===== Gaussian policy head =============================================

/// Map the raw tanh mean in (-1, 1) onto the lead acceleration range
/// [-6, 2] m/s²: `a = 4 * mu_raw - 2`.
#[inline]
pub fn action_map(mu_raw: f64) -> f64 {
    4.0 * mu_raw + -2.0
}

/// Log-density of `a` under N(mu, var). The operation order mirrors the
/// taped replay exactly; do not refactor the arithmetic.
pub fn gaussian_log_prob(a: f64, mu: f64, var: f64) -> f64 {
    let t1 = -0.5 * (math::ln(var) + math::ln_2pi());
    let d = a - mu;
    let t2 = -((d * d) / (2.0 * var));
    t1 + t2
}

/// Differential entropy of N(·, var); same op-order caveat as
/// [`gaussian_log_prob`].
pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * ((math::ln(var) + math::ln_2pi()) + 1.0)
}

/// A sampled lead acceleration: the raw Gaussian draw (used by the
/// log-density in every loss) and the env-clamped value actually applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledAction {
    pub raw: f64,
    pub applied: f64,
}

/// Draw from N(mu, var) and clamp into the command range.
pub fn sample_action(
    mu: f64,
    var: f64,
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
) -> SampledAction {
    let z: f64 = rng.sample(StandardNormal);
    let raw = mu + math::sqrt(var) * z;
    SampledAction { raw, applied: raw.clamp(lo, hi) }
}

// ===== rollout windows ===================================================

/// One transition inside a window.
#[derive(Clone, Debug)]
pub struct WindowStep {
    /// Adversary observation (4 components in pre-training, 5 in
    /// fine-tuning).
    pub obs: Vec<f64>,
    /// Recurrent state *before* this step.
    pub rec: RecurrentState,
    /// Raw (pre-clamp) sampled action.
    pub action_raw: f64,
    /// Collection-time log-density of `action_raw`.
    pub log_prob: f64,
    /// Collection-time critic value of `obs`.
    pub value: f64,
    /// Adversary step reward, in (0, 100].
    pub reward: f64,
}

/// A rollout slice of at most the configured window length.
#[derive(Clone, Debug)]
pub struct RolloutWindow {
    pub steps: Vec<WindowStep>,
    /// Critic value of the state after the last step; zero at terminals.
    pub bootstrap: f64,
}

/// Discounted n-step returns `G_t = sum_k gamma^(k-t) r_k + gamma^(L-t) b`.
pub fn n_step_returns(window: &RolloutWindow, gamma: f64) -> Vec<f64> {
    let l = window.steps.len();
    let mut out = Vec::with_capacity(l);
    for t in 0..l {
        let mut acc = 0.0;
        let mut p = 1.0;
        for step in &window.steps[t..] {
            acc += p * step.reward;
            p *= gamma;
        }
        acc += p * window.bootstrap;
        out.push(acc);
    }
    out
}

/// Advantages `A_t = G_t - V(s_t)` using the recorded critic values.
pub fn advantages(window: &RolloutWindow, gamma: f64) -> Vec<f64> {
    n_step_returns(window, gamma)
        .iter()
        .zip(&window.steps)
        .map(|(g, s)| g - s.value)
        .collect()
}

// ===== losses and gradients =============================================

/// Everything one window update needs.
#[derive(Clone, Debug)]
pub struct A2cLossReport {
    pub l_pi: f64,
    pub l_v: f64,
    pub mean_entropy: f64,
    pub actor_grads: ActorParams,
    pub critic_grads: CriticParams,
    /// Log-densities recomputed by the taped replay; bit-equal to the
    /// recorded ones when parameters have not moved since collection.
    pub replayed_log_probs: Vec<f64>,
}

/// Replay a window on the tape and compute policy and value losses plus
/// gradients for both networks. The recurrent state is detached at the
/// window start; advantages are constants.
pub fn a2c_losses(
    window: &RolloutWindow,
    actor: &ActorParams,
    critic: &CriticParams,
    hyper: &A2cHyper,
) -> A2cLossReport {
    let l = window.steps.len();
    assert!(l >= 1, "empty rollout window");
    assert!(l <= hyper.window, "window longer than configured length");
    debug_assert!(window.steps.iter().all(|s| s.reward > 0.0 && s.reward <= 100.0));

    let adv = advantages(window, hyper.gamma);
    let returns = n_step_returns(window, hyper.gamma);

    let mut tape = Tape::new();
    let avars = register_actor(&mut tape, actor);
    let cvars = register_mlp(&mut tape, &critic.mlp);

    // --- actor: sequential replay through the window -------------------
    let mut h = tape.leaf(window.steps[0].rec.h.clone());
    let mut c = tape.leaf(window.steps[0].rec.c.clone());
    let mut terms = Vec::with_capacity(l);
    let mut replayed = Vec::with_capacity(l);
    let mut entropy_sum = 0.0;
    for (t, step) in window.steps.iter().enumerate() {
        let obs = tape.leaf(Tensor::col_vec(&step.obs));
        let (mu_raw, var, h2, c2) =
            actor_step_tape(&mut tape, &avars, obs, h, c, hyper.var_floor);
        h = h2;
        c = c2;

        let mu_scaled = tape.scale(mu_raw, 4.0);
        let mu = tape.add_const(mu_scaled, -2.0);
        let ln_var = tape.ln(var);
        let t1_inner = tape.add_const(ln_var, math::ln_2pi());
        let t1 = tape.scale(t1_inner, -0.5);
        let a_const = tape.leaf(Tensor::scalar(step.action_raw));
        let d = tape.sub(a_const, mu);
        let sq = tape.square(d);
        let denom = tape.scale(var, 2.0);
        let frac = tape.div(sq, denom);
        let t2 = tape.neg(frac);
        let log_prob = tape.add(t1, t2);
        replayed.push(tape.value(log_prob).item());

        let ent_inner = tape.add_const(ln_var, math::ln_2pi());
        let ent_plus = tape.add_const(ent_inner, 1.0);
        let entropy = tape.scale(ent_plus, 0.5);
        entropy_sum += tape.value(entropy).item();

        let adv_const = tape.leaf(Tensor::scalar(adv[t]));
        let weighted = tape.mul(log_prob, adv_const);
        let bonus = tape.scale(entropy, hyper.beta);
        let gain = tape.add(weighted, bonus);
        terms.push(tape.neg(gain));
    }
    let mut sum = terms[0];
    for &term in &terms[1..] {
        sum = tape.add(sum, term);
    }
    let l_pi = tape.scale(sum, 1.0 / l as f64);

    // --- critic: one batched replay over the window --------------------
    let dim = window.steps[0].obs.len();
    let mut obs_mat = Tensor::zeros(dim, l);
    let mut g_row = Tensor::zeros(1, l);
    for (t, step) in window.steps.iter().enumerate() {
        for (k, &x) in step.obs.iter().enumerate() {
            obs_mat.set(k, t, x);
        }
        g_row.set(0, t, returns[t]);
    }
    let obs_var = tape.leaf(obs_mat);
    let values = mlp_forward_tape(&mut tape, &cvars, obs_var);
    let g_const = tape.leaf(g_row);
    let residual = tape.sub(g_const, values);
    let sq_res = tape.square(residual);
    let l_v = tape.mean_all(sq_res);

    let l_pi_val = tape.value(l_pi).item();
    let l_v_val = tape.value(l_v).item();
    let pi_grads = tape.backward(l_pi).expect("scalar policy loss");
    let v_grads = tape.backward(l_v).expect("scalar value loss");

    A2cLossReport {
        l_pi: l_pi_val,
        l_v: l_v_val,
        mean_entropy: entropy_sum / l as f64,
        actor_grads: actor_grad(&avars, &pi_grads, actor),
        critic_grads: CriticParams { mlp: mlp_grad(&cvars, &v_grads, &critic.mlp) },
        replayed_log_probs: replayed,
    }
}

// ===== training loop =====================================================

/// One row of the per-episode training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvEpisodeLog {
    pub episode: u32,
    pub mean_step_reward: f64,
    pub min_t_h: f64,
    pub collided: bool,
}

#[derive(Clone, Debug)]
pub struct AdvTrainResult {
    pub actor: ActorParams,
    pub critic: CriticParams,
    pub log: Vec<AdvEpisodeLog>,
    /// Window updates skipped because a gradient went non-finite.
    pub incidents: u32,
}

/// Train a four-input adversary against a frozen following policy.
///
/// Substreams of `stream`: `"init"` for network initialization, then
/// `"ep" -> k` per episode covering (in order) the friction draw, the
/// reset, and every action sample.
pub fn train_adversary(
    cfg: &EnvConfig,
    protagonist: &MlpParams,
    hyper: &A2cHyper,
    stream: &SeedStream,
) -> AdvTrainResult {
    let mut init_rng = stream.child("init").rng();
    let mut actor = ActorParams::init(4, &mut init_rng);
    let mut critic = CriticParams::init(4, &mut init_rng);
    let actor_opt = RmsProp::new(hyper.eta_actor);
    let critic_opt = RmsProp::new(hyper.eta_critic);
    let mut actor_state = RmsPropState::new(&actor);
    let mut critic_state = RmsPropState::new(&critic);

    let ep_base = stream.child("ep");
    let mut log = Vec::with_capacity(hyper.episodes as usize);
    let mut incidents = 0u32;

    for ep in 0..hyper.episodes {
        let mut rng = ep_base.child_idx(ep as u64).rng();
        let ep_cfg = cfg.with_mu(cfg.sample_mu(&mut rng));
        let mut state = env::reset(&ep_cfg, &mut rng);
        let mut rec = RecurrentState::zeros(LSTM_UNITS);
        let mut window: Vec<WindowStep> = Vec::with_capacity(hyper.window);

        let mut reward_sum = 0.0;
        let mut min_t_h = f64::INFINITY;
        let mut steps = 0u32;

        loop {
            let obs = env::observe_adversary(&state, &ep_cfg);
            let (mu_raw, var, rec_next) = actor.step(&obs, &rec, hyper.var_floor);
            let mu = action_map(mu_raw);
            let action =
                sample_action(mu, var, ep_cfg.lead_a_min, ep_cfg.lead_a_max, &mut rng);
            let log_prob = gaussian_log_prob(action.raw, mu, var);
            let value = critic.value(&obs);
            let pedal = protagonist.forward_one(&env::observe_protagonist(&state, &ep_cfg));
            let info = env::step(&mut state, &ep_cfg, pedal, action.applied);

            window.push(WindowStep {
                obs: obs.to_vec(),
                rec: rec.clone(),
                action_raw: action.raw,
                log_prob,
                value,
                reward: info.reward,
            });
            rec = rec_next;
            reward_sum += info.reward;
            min_t_h = min_t_h.min(info.t_h);
            steps += 1;

            if window.len() == hyper.window || info.done {
                let bootstrap = if info.done {
                    0.0
                } else {
                    critic.value(&env::observe_adversary(&state, &ep_cfg))
                };
                let full = RolloutWindow { steps: core::mem::take(&mut window), bootstrap };
                let report = a2c_losses(&full, &actor, &critic, hyper);
                if report.actor_grads.all_finite() && report.critic_grads.all_finite() {
                    actor_state.step(&actor_opt, &mut actor, &report.actor_grads);
                    critic_state.step(&critic_opt, &mut critic, &report.critic_grads);
                } else {
                    incidents += 1;
                }
            }
            if info.done {
                break;
            }
        }

        log.push(AdvEpisodeLog {
            episode: ep,
            mean_step_reward: reward_sum / steps as f64,
            min_t_h,
            collided: state.collided,
        });
    }

    AdvTrainResult { actor, critic, log, incidents }
}
