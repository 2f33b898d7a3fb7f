//! Thread-backed execution: a mutex-guarded global parameter store with
//! the same submit semantics as the single-threaded reference, plus
//! drivers that shard fine-tuning workers and adversarial-testing runs
//! across OS threads. With one worker both drivers defer to the
//! sequential implementations, which are bit-deterministic.

use std::sync::Mutex;

use arc_core::a2c::{train_adversary, A2cHyper, AdvTrainResult};
use arc_core::arc::{
    arc_worker_episode, init_arc_adversary, run_arc, worker_quotas, ArcError, ArcHyper,
    ArcLogRow, ArcOutcome, GlobalStore, SubmitOutcome, WorkerContext,
};
use arc_core::env::EnvConfig;
use arc_core::eval::{first_collision_episode, AdvTestOutcome};
use arc_core::nn::{ActorParams, CriticParams, MlpParams, ParamSet};
use arc_core::optim::{RmsProp, RmsPropState, UpdateOutcome};
use arc_core::rng::SeedStream;

// ===== shared store ======================================================

struct Inner {
    params: MlpParams,
    opt: RmsProp,
    opt_state: RmsPropState<MlpParams>,
    version: u64,
    rejected: u64,
}

/// Mutex-guarded store: submissions are serialized, snapshots are cheap
/// copies, and non-finite gradients are rejected without bumping the
/// version — identical semantics to the sequential store.
pub struct SharedStore {
    inner: Mutex<Inner>,
}

impl SharedStore {
    pub fn new(params: MlpParams, eta_p: f64) -> Self {
        let opt_state = RmsPropState::new(&params);
        SharedStore {
            inner: Mutex::new(Inner {
                params,
                opt: RmsProp::new(eta_p),
                opt_state,
                version: 0,
                rejected: 0,
            }),
        }
    }

    pub fn into_parts(self) -> (MlpParams, u64, u64) {
        let inner = self.inner.into_inner().expect("store mutex poisoned");
        (inner.params, inner.version, inner.rejected)
    }
}

impl GlobalStore for SharedStore {
    fn snapshot(&self) -> (MlpParams, u64) {
        let inner = self.inner.lock().expect("store mutex poisoned");
        (inner.params.clone(), inner.version)
    }

    fn submit(&self, grads: &MlpParams) -> SubmitOutcome {
        let mut inner = self.inner.lock().expect("store mutex poisoned");
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
        self.inner.lock().expect("store mutex poisoned").version
    }
}

// ===== threaded fine-tuning ==============================================

/// Fine-tune with up to `threads` OS threads driving the `hyper.n_envs`
/// workers. One thread delegates to the sequential reference; more run
/// the workers concurrently against a shared store, in which case the
/// log order and the exact update interleaving are scheduler-dependent
/// (per-worker episode seeds stay fixed either way).
pub fn run_arc_threaded(
    il: &MlpParams,
    pretrained: &[(ActorParams, CriticParams)],
    hyper: &ArcHyper,
    env: &EnvConfig,
    stream: &SeedStream,
    threads: usize,
) -> Result<ArcOutcome, ArcError> {
    if threads <= 1 || hyper.n_envs <= 1 {
        return run_arc(il, pretrained, hyper, env, stream);
    }
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
    let quotas = worker_quotas(hyper.episodes, n);

    let store = SharedStore::new(il.clone(), hyper.eta_p);
    let log = Mutex::new(Vec::with_capacity(hyper.episodes as usize));
    let done: Mutex<Vec<Option<WorkerContext>>> =
        Mutex::new((0..n).map(|_| None).collect());

    let lanes = threads.min(n);
    std::thread::scope(|scope| {
        let mut lane_work: Vec<Vec<WorkerContext>> = (0..lanes).map(|_| Vec::new()).collect();
        for (i, ctx) in contexts.into_iter().enumerate() {
            lane_work[i % lanes].push(ctx);
        }
        let (store, log, done, quotas) = (&store, &log, &done, &quotas);
        for mut lane in lane_work {
            scope.spawn(move || {
                // Round-robin over this lane's workers so long-running
                // workers do not starve the rest of their lane.
                let mut remaining: Vec<u32> =
                    lane.iter().map(|c| quotas[c.worker_id]).collect();
                while remaining.iter().any(|&r| r > 0) {
                    for (k, ctx) in lane.iter_mut().enumerate() {
                        if remaining[k] > 0 {
                            let stats = arc_worker_episode(ctx, store, hyper);
                            remaining[k] -= 1;
                            let mut log = log.lock().expect("log mutex poisoned");
                            let global_episode = log.len() as u32;
                            log.push(ArcLogRow { global_episode, stats });
                        }
                    }
                }
                let mut done = done.lock().expect("done mutex poisoned");
                for ctx in lane.drain(..) {
                    let slot = ctx.worker_id;
                    done[slot] = Some(ctx);
                }
            });
        }
    });

    let log = log.into_inner().expect("log mutex poisoned");
    let contexts = done.into_inner().expect("done mutex poisoned");
    let (protagonist, final_version, rejected_submissions) = store.into_parts();
    Ok(ArcOutcome {
        protagonist,
        adversaries: contexts
            .into_iter()
            .map(|c| {
                let c = c.expect("every worker rejoins");
                (c.actor, c.critic)
            })
            .collect(),
        log,
        final_version,
        rejected_submissions,
    })
}

// ===== threaded adversary batches ========================================

/// Train `count` independent adversaries against a frozen policy, run
/// `j` seeded from `stream -> j`. Results are identical for any thread
/// count because each run is a pure function of its own stream.
pub fn train_adversaries_threaded(
    cfg: &EnvConfig,
    policy: &MlpParams,
    hyper: &A2cHyper,
    stream: &SeedStream,
    count: u32,
    threads: usize,
) -> Vec<AdvTrainResult> {
    let mut slots: Vec<Option<AdvTrainResult>> = (0..count).map(|_| None).collect();
    if threads <= 1 || count <= 1 {
        for (j, slot) in slots.iter_mut().enumerate() {
            *slot = Some(train_adversary(cfg, policy, hyper, &stream.child_idx(j as u64)));
        }
    } else {
        let next = std::sync::atomic::AtomicU32::new(0);
        let slots_mx = Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for _ in 0..threads.min(count as usize) {
                scope.spawn(|| loop {
                    let j = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if j >= count {
                        break;
                    }
                    let run =
                        train_adversary(cfg, policy, hyper, &stream.child_idx(j as u64));
                    slots_mx.lock().expect("slot mutex poisoned")[j as usize] = Some(run);
                });
            }
        });
    }
    slots.into_iter().map(|s| s.expect("every run completes")).collect()
}

/// Adversarial testing sharded over threads; aggregation in run order, so
/// the outcome matches the sequential evaluator bit for bit.
pub fn run_adversarial_threaded(
    policy: &MlpParams,
    base: &EnvConfig,
    adversaries: u32,
    hyper: &A2cHyper,
    stream: &SeedStream,
    threads: usize,
) -> AdvTestOutcome {
    let runs = train_adversaries_threaded(base, policy, hyper, stream, adversaries, threads);
    let total_collisions =
        runs.iter().map(|r| r.log.iter().filter(|e| e.collided).count() as u32).sum();
    let first_collisions: Vec<Option<u32>> =
        runs.iter().map(|r| first_collision_episode(&r.log)).collect();
    let hits: Vec<f64> =
        first_collisions.iter().flatten().map(|&e| f64::from(e)).collect();
    let mean_first_collision = if hits.is_empty() {
        None
    } else {
        Some(hits.iter().sum::<f64>() / hits.len() as f64)
    };
    AdvTestOutcome { runs, total_collisions, first_collisions, mean_first_collision }
}

// ===== tests =============================================================
