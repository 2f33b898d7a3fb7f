//! Minimax fine-tuning of the following policy against an adversary
//! ensemble.
//!
//! Each worker owns one environment and one adversary (widened from a
//! pre-trained four-input adversary by appending a zero-weight input column
//! for the protagonist's pedal). Per episode a worker snapshots the global
//! protagonist, rolls out with both policies acting simultaneously, and per
//! window:
//!
//! 1. computes adversary actor/critic gradients (standard A2C replay);
//! 2. computes protagonist gradients of `L_P = -L_piA + lambda * L_D`
//!    against the *pre-update* adversary — simultaneous gradient play —
//!    where `L_D` is the mean absolute gap to the frozen imitation policy
//!    and the policy-loss term flows through the pedal slot of the
//!    adversary's observation;
//! 3. applies the adversary updates locally;
//! 4. submits the protagonist gradients to the global store.
//!
//! The store serializes submissions (RMSProp with its own learning rate)
//! and counts versions, so a single-worker run is bit-deterministic while
//! multi-worker runs see bounded staleness.

use crate::a2c::{
    a2c_losses, action_map, advantages, gaussian_log_prob, sample_action, A2cHyper,
    RolloutWindow, WindowStep,
};
use crate::env::{self, EnvConfig};
use crate::math;
use crate::nn::{
    actor_step_tape, mlp_forward_tape, mlp_grad, register_actor, register_mlp, ActorParams,
    CriticParams, Dense, MlpParams, ParamSet, RecurrentState, LSTM_UNITS,
};
use crate::optim::{RmsProp, RmsPropState, UpdateOutcome};
use crate::rng::SeedStream;
use crate::tape::Tape;
use crate::tensor::Tensor;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcHyper {
    /// Protagonist (global store) RMSProp learning rate.
    pub eta_p: f64,
    /// Distillation weight in `L_P = -L_piA + lambda * L_D`.
    pub lambda: f64,
    /// Ensemble size: parallel environments / adversaries.
    pub n_envs: usize,
    /// Global episode budget, split across workers.
    pub episodes: u32,
    /// Freeze the adversaries (ablation); protagonist updates continue.
    pub fixed_adversary: bool,
    pub a2c: A2cHyper,
}

impl Default for ArcHyper {
    fn default() -> Self {
        ArcHyper {
            eta_p: 1e-5,
            lambda: 5e4,
            n_envs: 5,
            episodes: 500,
            fixed_adversary: false,
            a2c: A2cHyper::default(),
        }
    }
}

impl ArcHyper {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.eta_p > 0.0 && self.eta_p.is_finite()) {
            return Err("eta_p");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err("lambda");
        }
        if self.n_envs == 0 {
            return Err("arc.n");
        }
        self.a2c.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcError {
    /// An adversary had the wrong input width for the requested operation.
    AdversaryShape { expected: usize, got: usize },
    /// No pre-trained adversaries were supplied.
    EmptyEnsemble,
}

impl fmt::Display for ArcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArcError::AdversaryShape { expected, got } => write!(
                f,
                "adversary expects {expected} observation components, got {got}"
            ),
            ArcError::EmptyEnsemble => {
                write!(f, "fine-tuning needs at least one pre-trained adversary")
            }
        }
    }
}

impl core::error::Error for ArcError {}

// ===== scalar losses =====================================================

/// Distillation penalty: absolute pedal gap to the imitation policy.
#[inline]
pub fn distillation_loss(a_p: f64, a_il: f64) -> f64 {
    (a_p - a_il).abs()
}

/// Protagonist objective `L_P = -L_piA + lambda * L_D`.
#[inline]
pub fn protagonist_loss(l_pi_a: f64, l_d: f64, lambda: f64) -> f64 {
    -l_pi_a + lambda * l_d
}

// ===== adversary widening ================================================

/// Append a zero input column to a dense layer's weights.
fn widen_first_layer(layer: &Dense) -> Dense {
    let (rows, cols) = layer.w.shape();
    let mut data = Vec::with_capacity(rows * (cols + 1));
    for r in 0..rows {
        data.extend_from_slice(layer.w.row(r));
        data.push(0.0);
    }
    Dense {
        w: Tensor::from_vec(rows, cols + 1, data),
        b: layer.b.clone(),
        act: layer.act,
    }
}

/// Convert a pre-trained four-input adversary into the five-input
/// fine-tuning variant: the new pedal slot starts with zero weights, so the
/// widened networks compute exactly what the originals did until training
/// moves them.
pub fn init_arc_adversary(
    actor: &ActorParams,
    critic: &CriticParams,
) -> Result<(ActorParams, CriticParams), ArcError> {
    if actor.obs_dim() != 4 {
        return Err(ArcError::AdversaryShape { expected: 4, got: actor.obs_dim() });
    }
    if critic.obs_dim() != 4 {
        return Err(ArcError::AdversaryShape { expected: 4, got: critic.obs_dim() });
    }
    let mut actor5 = actor.clone();
    actor5.trunk.layers[0] = widen_first_layer(&actor.trunk.layers[0]);
    let mut critic5 = critic.clone();
    critic5.mlp.layers[0] = widen_first_layer(&critic.mlp.layers[0]);
    Ok((actor5, critic5))
}

// ===== fine-tuning windows ==============================================

/// One transition with the protagonist-side extras needed for `L_P`.
#[derive(Clone, Debug)]
pub struct ArcStep {
    pub obs_p: [f64; 3],
    /// State-derived part of the adversary observation (pedal excluded).
    pub obs_adv: [f64; 4],
    /// Protagonist pedal actually applied (output of the local snapshot).
    pub a_p: f64,
    pub rec: RecurrentState,
    pub action_raw: f64,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct ArcWindow {
    pub steps: Vec<ArcStep>,
    pub bootstrap: f64,
}

impl ArcWindow {
    /// View as a plain rollout window with the five-component observation
    /// reassembled, for the adversary's A2C update.
    pub fn to_rollout(&self) -> RolloutWindow {
        RolloutWindow {
            steps: self
                .steps
                .iter()
                .map(|s| {
                    let mut obs = Vec::with_capacity(5);
                    obs.extend_from_slice(&s.obs_adv);
                    obs.push(s.a_p);
                    WindowStep {
                        obs,
                        rec: s.rec.clone(),
                        action_raw: s.action_raw,
                        log_prob: s.log_prob,
                        value: s.value,
                        reward: s.reward,
                    }
                })
                .collect(),
            bootstrap: self.bootstrap,
        }
    }
}

// ===== protagonist gradients ============================================

#[derive(Clone, Debug)]
pub struct ProtagonistReport {
    pub grads: MlpParams,
    pub l_p: f64,
    pub l_pi: f64,
    pub l_d: f64,
}

/// Replay a window with the protagonist on the tape and differentiate
/// `L_P = -L_piA + lambda * L_D` with respect to the protagonist only.
///
/// The pedal is recomputed from `p` at every step and fed into the fifth
/// observation slot of the adversary replay, so the minimax term's gradient
/// path through the adversary's reaction is intact. The adversary and the
/// imitation reference contribute values, not gradients.
pub fn protagonist_grads(
    window: &ArcWindow,
    p: &MlpParams,
    actor: &ActorParams,
    il: &MlpParams,
    hyper: &ArcHyper,
) -> Result<ProtagonistReport, ArcError> {
    if actor.obs_dim() != 5 {
        return Err(ArcError::AdversaryShape { expected: 5, got: actor.obs_dim() });
    }
    let l = window.steps.len();
    assert!(l >= 1, "empty fine-tuning window");

    let adv = advantages(&window.to_rollout(), hyper.a2c.gamma);

    let mut tape = Tape::new();
    let pvars = register_mlp(&mut tape, p);
    let avars = register_actor(&mut tape, actor);
    let mut h = tape.leaf(window.steps[0].rec.h.clone());
    let mut c = tape.leaf(window.steps[0].rec.c.clone());

    let mut pi_terms = Vec::with_capacity(l);
    let mut d_terms = Vec::with_capacity(l);
    for (t, step) in window.steps.iter().enumerate() {
        let obs_p = tape.leaf(Tensor::col_vec(&step.obs_p));
        let a_p = mlp_forward_tape(&mut tape, &pvars, obs_p);
        let obs_adv = tape.leaf(Tensor::col_vec(&step.obs_adv));
        let obs5 = tape.concat_rows(&[obs_adv, a_p]);
        let (mu_raw, var, h2, c2) =
            actor_step_tape(&mut tape, &avars, obs5, h, c, hyper.a2c.var_floor);
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

        let ent_inner = tape.add_const(ln_var, math::ln_2pi());
        let ent_plus = tape.add_const(ent_inner, 1.0);
        let entropy = tape.scale(ent_plus, 0.5);

        let adv_const = tape.leaf(Tensor::scalar(adv[t]));
        let weighted = tape.mul(log_prob, adv_const);
        let bonus = tape.scale(entropy, hyper.a2c.beta);
        let gain = tape.add(weighted, bonus);
        pi_terms.push(tape.neg(gain));

        let a_il = tape.leaf(Tensor::scalar(il.forward_one(&step.obs_p)));
        let gap = tape.sub(a_p, a_il);
        d_terms.push(tape.abs(gap));
    }

    let mut pi_sum = pi_terms[0];
    for &term in &pi_terms[1..] {
        pi_sum = tape.add(pi_sum, term);
    }
    let l_pi = tape.scale(pi_sum, 1.0 / l as f64);

    let mut d_sum = d_terms[0];
    for &term in &d_terms[1..] {
        d_sum = tape.add(d_sum, term);
    }
    let l_d = tape.scale(d_sum, 1.0 / l as f64);

    let neg_pi = tape.neg(l_pi);
    let weighted_d = tape.scale(l_d, hyper.lambda);
    let l_p = tape.add(neg_pi, weighted_d);

    let l_p_val = tape.value(l_p).item();
    let l_pi_val = tape.value(l_pi).item();
    let l_d_val = tape.value(l_d).item();
    let grads = tape.backward(l_p).expect("scalar protagonist loss");

    Ok(ProtagonistReport {
        grads: mlp_grad(&pvars, &grads, p),
        l_p: l_p_val,
        l_pi: l_pi_val,
        l_d: l_d_val,
    })
}

// ===== global parameter store ===========================================

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubmitOutcome {
    pub applied: bool,
    /// Version counter after this submission.
    pub version: u64,
}

/// Shared protagonist parameters with serialized gradient application.
pub trait GlobalStore {
    /// Copy of the current parameters and their version.
    fn snapshot(&self) -> (MlpParams, u64);
    /// Apply one gradient submission (RMSProp inside the store). Non-finite
    /// gradients are rejected and do not bump the version.
    fn submit(&self, grads: &MlpParams) -> SubmitOutcome;
    fn version(&self) -> u64;
}

struct StoreInner {
    params: MlpParams,
    opt: RmsProp,
    opt_state: RmsPropState<MlpParams>,
    version: u64,
    rejected: u64,
}

/// Single-threaded store for sequential multiplexed runs; the bit-exact
/// reference implementation of the store contract.
pub struct LocalStore {
    inner: RefCell<StoreInner>,
}

impl LocalStore {
    pub fn new(params: MlpParams, eta_p: f64) -> Self {
        let opt_state = RmsPropState::new(&params);
        LocalStore {
            inner: RefCell::new(StoreInner {
                params,
                opt: RmsProp::new(eta_p),
                opt_state,
                version: 0,
                rejected: 0,
            }),
        }
    }

    /// Final parameters, applied-update count, and rejected-update count.
    pub fn into_parts(self) -> (MlpParams, u64, u64) {
        let inner = self.inner.into_inner();
        (inner.params, inner.version, inner.rejected)
    }
}

impl GlobalStore for LocalStore {
    fn snapshot(&self) -> (MlpParams, u64) {
        let inner = self.inner.borrow();
        (inner.params.clone(), inner.version)
    }

    fn submit(&self, grads: &MlpParams) -> SubmitOutcome {
        let mut inner = self.inner.borrow_mut();
        let inner = &mut *inner;
        match inner.opt_state.step(&inner.opt, &mut inner.params, grads) {
            UpdateOutcome::Applied => {
                inner.version += 1;
                assert!(
                    inner.params.all_finite(),
                    "committed parameters must stay finite"
                );
                SubmitOutcome { applied: true, version: inner.version }
            }
            UpdateOutcome::RejectedNonFinite => {
                inner.rejected += 1;
                SubmitOutcome { applied: false, version: inner.version }
            }
        }
    }

    fn version(&self) -> u64 {
        self.inner.borrow().version
    }
}

// ===== worker ============================================================

/// Everything one worker owns across its episodes.
pub struct WorkerContext {
    pub worker_id: usize,
    pub env: EnvConfig,
    pub actor: ActorParams,
    pub critic: CriticParams,
    actor_opt: RmsProp,
    critic_opt: RmsProp,
    actor_state: RmsPropState<ActorParams>,
    critic_state: RmsPropState<CriticParams>,
    /// Frozen imitation reference for the distillation term.
    pub il: MlpParams,
    /// Base stream; episode k draws from `ep_stream -> k`.
    ep_stream: SeedStream,
    pub episodes_done: u32,
    /// Window updates skipped or rejected for non-finite gradients.
    pub incidents: u32,
}

impl WorkerContext {
    pub fn new(
        worker_id: usize,
        env: EnvConfig,
        actor: ActorParams,
        critic: CriticParams,
        il: MlpParams,
        hyper: &ArcHyper,
        ep_stream: SeedStream,
    ) -> Self {
        let actor_state = RmsPropState::new(&actor);
        let critic_state = RmsPropState::new(&critic);
        WorkerContext {
            worker_id,
            env,
            actor,
            critic,
            actor_opt: RmsProp::new(hyper.a2c.eta_actor),
            critic_opt: RmsProp::new(hyper.a2c.eta_critic),
            actor_state,
            critic_state,
            il,
            ep_stream,
            episodes_done: 0,
            incidents: 0,
        }
    }
}

/// Per-episode log row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcEpisodeStats {
    pub worker_id: usize,
    /// Episode index within this worker.
    pub episode: u32,
    pub mean_step_reward: f64,
    pub min_t_h: f64,
    pub collided: bool,
    /// Mean absolute pedal gap to the imitation reference over the episode.
    pub mean_l_d: f64,
    /// Foreign store updates applied between this episode's snapshot and
    /// its first submission; always zero with a single worker.
    pub staleness: u64,
}

/// Run one episode: snapshot the global protagonist, roll out, update the
/// local adversary per window, and submit protagonist gradients per window.
pub fn arc_worker_episode(
    ctx: &mut WorkerContext,
    store: &dyn GlobalStore,
    hyper: &ArcHyper,
) -> ArcEpisodeStats {
    let (p_local, snap_version) = store.snapshot();
    let mut rng = ctx.ep_stream.child_idx(ctx.episodes_done as u64).rng();
    let ep_cfg = ctx.env.with_mu(ctx.env.sample_mu(&mut rng));
    let mut state = env::reset(&ep_cfg, &mut rng);
    let mut rec = RecurrentState::zeros(LSTM_UNITS);
    let mut window: Vec<ArcStep> = Vec::with_capacity(hyper.a2c.window);

    let mut reward_sum = 0.0;
    let mut min_t_h = f64::INFINITY;
    let mut l_d_sum = 0.0;
    let mut steps = 0u32;
    let mut staleness: Option<u64> = None;

    loop {
        let obs_p = env::observe_protagonist(&state, &ep_cfg);
        let a_p = p_local.forward_one(&obs_p);
        let (obs5, _) = env::observe_adversary_arc(&state, &ep_cfg, a_p);
        let obs_adv: [f64; 4] = obs5[..4].try_into().expect("state slice");
        let (mu_raw, var, rec_next) = ctx.actor.step(&obs5, &rec, hyper.a2c.var_floor);
        let mu = action_map(mu_raw);
        let action = sample_action(mu, var, ep_cfg.lead_a_min, ep_cfg.lead_a_max, &mut rng);
        let log_prob = gaussian_log_prob(action.raw, mu, var);
        let value = ctx.critic.value(&obs5);
        let a_il = ctx.il.forward_one(&obs_p);
        let info = env::step(&mut state, &ep_cfg, a_p, action.applied);

        window.push(ArcStep {
            obs_p,
            obs_adv,
            a_p,
            rec: rec.clone(),
            action_raw: action.raw,
            log_prob,
            value,
            reward: info.reward,
        });
        rec = rec_next;
        reward_sum += info.reward;
        min_t_h = min_t_h.min(info.t_h);
        l_d_sum += distillation_loss(a_p, a_il);
        steps += 1;

        if window.len() == hyper.a2c.window || info.done {
            let bootstrap = if info.done {
                0.0
            } else {
                let next_obs_p = env::observe_protagonist(&state, &ep_cfg);
                let next_a_p = p_local.forward_one(&next_obs_p);
                let (next_obs5, _) = env::observe_adversary_arc(&state, &ep_cfg, next_a_p);
                ctx.critic.value(&next_obs5)
            };
            let full = ArcWindow { steps: core::mem::take(&mut window), bootstrap };

            // Simultaneous gradient play: both gradient sets come from the
            // pre-update adversary; only then does the adversary move.
            let adv_report = (!hyper.fixed_adversary)
                .then(|| a2c_losses(&full.to_rollout(), &ctx.actor, &ctx.critic, &hyper.a2c));
            let p_report = protagonist_grads(&full, &p_local, &ctx.actor, &ctx.il, hyper)
                .expect("worker adversaries are five-input by construction");

            if let Some(report) = adv_report {
                if report.actor_grads.all_finite() && report.critic_grads.all_finite() {
                    ctx.actor_state.step(&ctx.actor_opt, &mut ctx.actor, &report.actor_grads);
                    ctx.critic_state.step(
                        &ctx.critic_opt,
                        &mut ctx.critic,
                        &report.critic_grads,
                    );
                } else {
                    ctx.incidents += 1;
                }
            }

            let outcome = store.submit(&p_report.grads);
            if !outcome.applied {
                ctx.incidents += 1;
            }
            if staleness.is_none() {
                let version_before_own = outcome.version - u64::from(outcome.applied);
                staleness = Some(version_before_own - snap_version);
            }
        }
        if info.done {
            break;
        }
    }

    let stats = ArcEpisodeStats {
        worker_id: ctx.worker_id,
        episode: ctx.episodes_done,
        mean_step_reward: reward_sum / steps as f64,
        min_t_h,
        collided: state.collided,
        mean_l_d: l_d_sum / steps as f64,
        staleness: staleness.unwrap_or(0),
    };
    ctx.episodes_done += 1;
    stats
}

// ===== sequential driver =================================================

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcLogRow {
    pub global_episode: u32,
    pub stats: ArcEpisodeStats,
}

#[derive(Clone, Debug)]
pub struct ArcOutcome {
    pub protagonist: MlpParams,
    pub adversaries: Vec<(ActorParams, CriticParams)>,
    pub log: Vec<ArcLogRow>,
    /// Applied protagonist updates.
    pub final_version: u64,
    /// Submissions rejected for non-finite gradients.
    pub rejected_submissions: u64,
}

/// Episode quota per worker: the budget split as evenly as possible, the
/// remainder going to the lowest worker ids.
pub fn worker_quotas(episodes: u32, n: usize) -> Vec<u32> {
    let base = episodes / n as u32;
    let extra = episodes % n as u32;
    (0..n as u32).map(|i| base + u32::from(i < extra)).collect()
}

/// Fine-tune `il` against an ensemble widened from `pretrained` (cloned
/// cyclically when fewer than `n_envs` are supplied). Sequential
/// round-robin multiplexing of the workers; with `n_envs = 1` the whole run
/// is bit-deterministic. A zero episode budget is a no-op that returns the
/// imitation parameters unchanged.
pub fn run_arc(
    il: &MlpParams,
    pretrained: &[(ActorParams, CriticParams)],
    hyper: &ArcHyper,
    env: &EnvConfig,
    stream: &SeedStream,
) -> Result<ArcOutcome, ArcError> {
    if pretrained.is_empty() {
        return Err(ArcError::EmptyEnsemble);
    }
    let n = hyper.n_envs;
    let mut contexts = Vec::with_capacity(n);
    for i in 0..n {
        let (a4, c4) = &pretrained[i % pretrained.len()];
        let (actor, critic) = init_arc_adversary(a4, c4)?;
        contexts.push(WorkerContext::new(
            i,
            env.clone(),
            actor,
            critic,
            il.clone(),
            hyper,
            stream.child_idx(i as u64).child("ep"),
        ));
    }

    let store = LocalStore::new(il.clone(), hyper.eta_p);
    let quotas = worker_quotas(hyper.episodes, n);
    let rounds = quotas.first().copied().unwrap_or(0);
    let mut log = Vec::with_capacity(hyper.episodes as usize);
    for round in 0..rounds {
        for (i, ctx) in contexts.iter_mut().enumerate() {
            if round < quotas[i] {
                let stats = arc_worker_episode(ctx, &store, hyper);
                log.push(ArcLogRow { global_episode: log.len() as u32, stats });
            }
        }
    }

    let (protagonist, final_version, rejected_submissions) = store.into_parts();
    Ok(ArcOutcome {
        protagonist,
        adversaries: contexts.into_iter().map(|c| (c.actor, c.critic)).collect(),
        log,
        final_version,
        rejected_submissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::max_rel_err;

    fn stream(label: &str) -> SeedStream {
        SeedStream::root(13).child("arc-tests").child(label)
    }

    #[test]
    fn scalar_loss_closed_forms() {
        assert_eq!(protagonist_loss(2.0, 0.001, 5e4), 48.0);
        assert_eq!(protagonist_loss(0.0, 0.0, 5e4), 0.0);
        assert_eq!(distillation_loss(0.75, 0.25), 0.5);
        assert_eq!(distillation_loss(0.25, 0.75), 0.5);
    }

    #[test]
    fn widened_adversary_reproduces_the_original_bitwise() {
        let mut rng = stream("widen").rng();
        let actor4 = ActorParams::init(4, &mut rng);
        let critic4 = CriticParams::init(4, &mut rng);
        let (actor5, critic5) = init_arc_adversary(&actor4, &critic4).expect("widen");

        let obs4 = [0.5, -0.2, 0.1, 0.19];
        let obs5 = [0.5, -0.2, 0.1, 0.19, 0.77];
        let state = RecurrentState::zeros(LSTM_UNITS);
        let (mu4, var4, next4) = actor4.step(&obs4, &state, 1e-4);
        let (mu5, var5, next5) = actor5.step(&obs5, &state, 1e-4);
        assert_eq!(mu4, mu5);
        assert_eq!(var4, var5);
        assert_eq!(next4.h, next5.h);
        assert_eq!(critic4.value(&obs4), critic5.value(&obs5));
    }

    #[test]
    fn widening_rejects_wrong_shapes() {
        let mut rng = stream("widen-bad").rng();
        let actor5 = ActorParams::init(5, &mut rng);
        let critic4 = CriticParams::init(4, &mut rng);
        assert_eq!(
            init_arc_adversary(&actor5, &critic4),
            Err(ArcError::AdversaryShape { expected: 4, got: 5 })
        );
    }

    /// Roll a short window with the real collection path.
    fn collect_window(
        p: &MlpParams,
        actor: &ActorParams,
        critic: &CriticParams,
        hyper: &ArcHyper,
        len: usize,
        label: &str,
    ) -> ArcWindow {
        let cfg = EnvConfig::default();
        let mut rng = stream(label).rng();
        let ep_cfg = cfg.with_mu(cfg.sample_mu(&mut rng));
        let mut state = env::reset(&ep_cfg, &mut rng);
        let mut rec = RecurrentState::zeros(LSTM_UNITS);
        let mut steps = Vec::new();
        for _ in 0..len {
            let obs_p = env::observe_protagonist(&state, &ep_cfg);
            let a_p = p.forward_one(&obs_p);
            let (obs5, _) = env::observe_adversary_arc(&state, &ep_cfg, a_p);
            let obs_adv: [f64; 4] = obs5[..4].try_into().unwrap();
            let (mu_raw, var, rec_next) = actor.step(&obs5, &rec, hyper.a2c.var_floor);
            let mu = action_map(mu_raw);
            let action =
                sample_action(mu, var, ep_cfg.lead_a_min, ep_cfg.lead_a_max, &mut rng);
            let log_prob = gaussian_log_prob(action.raw, mu, var);
            let value = critic.value(&obs5);
            let info = env::step(&mut state, &ep_cfg, a_p, action.applied);
            steps.push(ArcStep {
                obs_p,
                obs_adv,
                a_p,
                rec: rec.clone(),
                action_raw: action.raw,
                log_prob,
                value,
                reward: info.reward,
            });
            rec = rec_next;
            assert!(!info.done);
        }
        let next_obs_p = env::observe_protagonist(&state, &ep_cfg);
        let next_a_p = p.forward_one(&next_obs_p);
        let (next_obs5, _) = env::observe_adversary_arc(&state, &ep_cfg, next_a_p);
        ArcWindow { steps, bootstrap: critic.value(&next_obs5) }
    }

    #[test]
    fn protagonist_gradients_match_finite_differences() {
        let mut rng = stream("fd-init").rng();
        let p = MlpParams::policy(3, &mut rng);
        let il = MlpParams::policy(3, &mut rng);
        let actor4 = ActorParams::init(4, &mut rng);
        let critic4 = CriticParams::init(4, &mut rng);
        let (actor, critic) = init_arc_adversary(&actor4, &critic4).unwrap();
        let hyper = ArcHyper::default();
        let window = collect_window(&p, &actor, &critic, &hyper, 3, "fd-window");

        let report = protagonist_grads(&window, &p, &actor, &il, &hyper).expect("5-input");
        assert_eq!(
            report.l_p,
            protagonist_loss(report.l_pi, report.l_d, hyper.lambda)
        );

        let template = p.clone();
        let err = max_rel_err(
            |theta: &[f64]| {
                let mut q = template.clone();
                q.load_flat(theta);
                protagonist_grads(&window, &q, &actor, &il, &hyper).unwrap().l_p
            },
            &p.flatten(),
            &report.grads.flatten(),
            1e-6,
        );
        assert!(err < 1e-4, "protagonist gradient max rel err {err}");
    }

    #[test]
    fn protagonist_grads_rejects_a_four_input_adversary() {
        let mut rng = stream("reject").rng();
        let p = MlpParams::policy(3, &mut rng);
        let il = MlpParams::policy(3, &mut rng);
        let actor4 = ActorParams::init(4, &mut rng);
        let critic4 = CriticParams::init(4, &mut rng);
        let (actor5, critic5) = init_arc_adversary(&actor4, &critic4).unwrap();
        let hyper = ArcHyper::default();
        let window = collect_window(&p, &actor5, &critic5, &hyper, 2, "reject-win");
        assert_eq!(
            protagonist_grads(&window, &p, &actor4, &il, &hyper).err(),
            Some(ArcError::AdversaryShape { expected: 5, got: 4 })
        );
    }

    #[test]
    fn local_store_versions_and_rejects() {
        let mut rng = stream("store").rng();
        let params = MlpParams::policy(3, &mut rng);
        let store = LocalStore::new(params.clone(), 1e-5);
        let (snap0, v0) = store.snapshot();
        assert_eq!(v0, 0);
        assert_eq!(snap0.flatten(), params.flatten());

        let mut grads = MlpParams::policy(3, &mut rng);
        let outcome = store.submit(&grads);
        assert!(outcome.applied);
        assert_eq!(outcome.version, 1);
        let (snap1, v1) = store.snapshot();
        assert_eq!(v1, 1);
        assert_ne!(snap1.flatten(), params.flatten());

        grads.layers[0].w.data_mut()[0] = f64::NAN;
        let outcome = store.submit(&grads);
        assert!(!outcome.applied);
        assert_eq!(outcome.version, 1);
        let (snap2, v2) = store.snapshot();
        assert_eq!(v2, 1);
        assert_eq!(snap2.flatten(), snap1.flatten(), "rejected update must not move params");

        let (_, applied, rejected) = store.into_parts();
        assert_eq!(applied, 1);
        assert_eq!(rejected, 1);
    }

    #[test]
    fn quotas_split_the_budget() {
        assert_eq!(worker_quotas(500, 5), alloc::vec![100; 5]);
        assert_eq!(worker_quotas(5, 2), alloc::vec![3, 2]);
        assert_eq!(worker_quotas(2, 5), alloc::vec![1, 1, 0, 0, 0]);
        assert_eq!(worker_quotas(0, 3), alloc::vec![0, 0, 0]);
    }

    fn tiny_setup(label: &str) -> (MlpParams, Vec<(ActorParams, CriticParams)>, EnvConfig) {
        let mut rng = stream(label).rng();
        let il = MlpParams::policy(3, &mut rng);
        let advs = (0..2)
            .map(|_| (ActorParams::init(4, &mut rng), CriticParams::init(4, &mut rng)))
            .collect();
        let mut env = EnvConfig::default();
        env.episode_cap = 40;
        (il, advs, env)
    }

    #[test]
    fn run_arc_is_deterministic_and_covers_the_budget() {
        let (il, advs, env) = tiny_setup("run");
        let hyper = ArcHyper {
            episodes: 5,
            n_envs: 2,
            a2c: A2cHyper { window: 8, ..A2cHyper::default() },
            ..ArcHyper::default()
        };
        let s = stream("run-seed");
        let a = run_arc(&il, &advs, &hyper, &env, &s).expect("runs");
        let b = run_arc(&il, &advs, &hyper, &env, &s).expect("runs");
        assert_eq!(a.log, b.log);
        assert_eq!(a.protagonist.flatten(), b.protagonist.flatten());
        assert_eq!(a.log.len(), 5);
        let worker0 = a.log.iter().filter(|r| r.stats.worker_id == 0).count();
        assert_eq!(worker0, 3, "remainder episode goes to worker 0");
        assert!(a.final_version > 0, "updates were applied");
        assert_eq!(a.rejected_submissions, 0);
        assert_eq!(a.adversaries.len(), 2);
        for row in &a.log {
            assert!(row.stats.mean_l_d >= 0.0 && row.stats.mean_l_d.is_finite());
        }
        assert_ne!(
            a.protagonist.flatten(),
            il.flatten(),
            "fine-tuning should move the protagonist"
        );
    }

    #[test]
    fn single_worker_runs_report_zero_staleness() {
        let (il, advs, env) = tiny_setup("stale");
        let hyper = ArcHyper {
            episodes: 3,
            n_envs: 1,
            a2c: A2cHyper { window: 8, ..A2cHyper::default() },
            ..ArcHyper::default()
        };
        let out = run_arc(&il, &advs, &hyper, &env, &stream("stale-seed")).expect("runs");
        assert!(out.log.iter().all(|r| r.stats.staleness == 0));
    }

    #[test]
    fn zero_budget_is_a_no_op() {
        let (il, advs, env) = tiny_setup("zero");
        let hyper = ArcHyper { episodes: 0, n_envs: 2, ..ArcHyper::default() };
        let out = run_arc(&il, &advs, &hyper, &env, &stream("zero-seed")).expect("runs");
        assert!(out.log.is_empty());
        assert_eq!(out.protagonist.flatten(), il.flatten());
        assert_eq!(out.final_version, 0);
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let (il, _, env) = tiny_setup("empty");
        let hyper = ArcHyper::default();
        assert_eq!(
            run_arc(&il, &[], &hyper, &env, &stream("empty-seed")).err(),
            Some(ArcError::EmptyEnsemble)
        );
    }
}
