//! Acceptance gate for the whole pipeline: nine numbered criteria, each
//! printing one `[PASS]`/`[FAIL]` line with the measured values (visible
//! with `--nocapture`, or automatically for failing criteria).
//!
//! Criteria 1-3 and 9 are in-process property checks. Criteria 4-7 share
//! one full pipeline run at the default budgets, built once by spawning
//! the `arc` binary stage by stage into a temp directory. Criterion 8
//! runs two identically-seeded miniature pipelines and byte-compares
//! every artifact.
//!
//! Every tolerance is pinned here, in code, next to its check.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use arc_core::a2c::{
    a2c_losses, action_map, advantages, gaussian_entropy, gaussian_log_prob, sample_action,
    A2cHyper, RolloutWindow, WindowStep,
};
use arc_core::arc::{init_arc_adversary, protagonist_grads, ArcHyper, ArcStep, ArcWindow};
use arc_core::env::{self, EnvConfig};
use arc_core::eval::collision_reduction;
use arc_core::gradcheck::{central_diff, max_rel_err, rel_err};
use arc_core::il::il_loss;
use arc_core::nn::{ActorParams, CriticParams, MlpParams, ParamSet, RecurrentState, LSTM_UNITS};
use arc_core::rng::SeedStream;
use arc_core::tensor::Tensor;

// ===== shared full-budget pipeline run ===================================

/// Root seed for the shared pipeline run and both determinism runs.
const SEED: u64 = 2;

struct Fixture {
    /// Main run directory: dataset, IL policy, adversaries, fine-tuned
    /// policy, batteries for both, adversarial testing for both.
    dir: PathBuf,
    /// Single-worker fine-tuning directory (directional ensemble check).
    dir_n1: PathBuf,
    /// `lambda = 0`, frozen-adversary ablation directory.
    dir_ablate: PathBuf,
    /// Wall time of dataset collection + imitation training.
    il_wall: Duration,
    /// Wall time of adversary pre-training.
    adv_wall: Duration,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Result<Fixture, String>> = OnceLock::new();
    match FIXTURE.get_or_init(build_fixture) {
        Ok(f) => f,
        Err(e) => panic!("pipeline fixture failed: {e}"),
    }
}

fn build_fixture() -> Result<Fixture, String> {
    let base = std::env::temp_dir().join("arc-acceptance");
    let dir = base.join("main");
    let dir_n1 = base.join("n1");
    let dir_ablate = base.join("ablate");
    let _ = std::fs::remove_dir_all(&base);
    for d in [&dir, &dir_n1, &dir_ablate] {
        std::fs::create_dir_all(d).map_err(|e| format!("mkdir {}: {e}", d.display()))?;
    }

    // Main chain at the default budgets.
    let t0 = Instant::now();
    run_stage(&dir, &["collect-dataset"])?;
    run_stage(&dir, &["train-il"])?;
    let il_wall = t0.elapsed();
    let t1 = Instant::now();
    run_stage(&dir, &["train-adv"])?;
    let adv_wall = t1.elapsed();
    run_stage(&dir, &["train-arc"])?;
    let il_ckpt = dir.join("il_policy.ckpt");
    let arc_ckpt = dir.join("arc_policy.ckpt");
    run_stage(
        &dir,
        &["eval-nat", "--policy", path_str(&il_ckpt), "--label", "il_policy"],
    )?;
    run_stage(
        &dir,
        &["eval-nat", "--policy", path_str(&arc_ckpt), "--label", "arc_policy"],
    )?;
    run_stage(
        &dir,
        &["eval-adv", "--policy", path_str(&il_ckpt), "--label", "il_policy"],
    )?;
    run_stage(
        &dir,
        &["eval-adv", "--policy", path_str(&arc_ckpt), "--label", "arc_policy"],
    )?;

    // Single-worker fine-tuning from the same pre-trained parts.
    copy_pretrained(&dir, &dir_n1)?;
    run_stage(&dir_n1, &["train-arc", "--arc.n", "1"])?;
    let n1_ckpt = dir_n1.join("arc_policy.ckpt");
    run_stage(
        &dir_n1,
        &["eval-adv", "--policy", path_str(&n1_ckpt), "--label", "arc_n1"],
    )?;

    // Ablation: no distillation anchor, adversaries frozen.
    copy_pretrained(&dir, &dir_ablate)?;
    run_stage(
        &dir_ablate,
        &["train-arc", "--lambda", "0", "--arc.fixed_adversary", "true"],
    )?;
    let ab_ckpt = dir_ablate.join("arc_policy.ckpt");
    run_stage(
        &dir_ablate,
        &["eval-nat", "--policy", path_str(&ab_ckpt), "--label", "ablation"],
    )?;

    Ok(Fixture { dir, dir_n1, dir_ablate, il_wall, adv_wall })
}

fn copy_pretrained(from: &Path, to: &Path) -> Result<(), String> {
    let mut names = vec!["il_policy.ckpt".to_string()];
    for i in 0..5 {
        names.push(format!("adv_actor_{i}.ckpt"));
        names.push(format!("adv_critic_{i}.ckpt"));
    }
    for name in names {
        std::fs::copy(from.join(&name), to.join(&name))
            .map_err(|e| format!("copy {name}: {e}"))?;
    }
    Ok(())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Spawn one `arc` subcommand with `--out dir --seed SEED`, wait, and fail
/// loudly with its output if it exits nonzero.
fn run_stage(dir: &Path, args: &[&str]) -> Result<Duration, String> {
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_arc"))
        .arg("--out")
        .arg(dir)
        .arg("--seed")
        .arg(SEED.to_string())
        .args(args)
        .output()
        .map_err(|e| format!("spawn {args:?}: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "stage {args:?} exited with {}\nstdout:\n{}\nstderr:\n{}",
            out.status,
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(t0.elapsed())
}

// ===== tiny CSV access ====================================================

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Csv {
        let text = std::fs::read_to_string(path)
            .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
        let mut lines = text.lines();
        let header: Vec<String> =
            lines.next().expect("csv header").split(',').map(str::to_string).collect();
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        Csv { header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("column {name} in {:?}", self.header))
    }

    fn f64(&self, row: &[String], name: &str) -> f64 {
        row[self.col(name)].parse().expect("numeric cell")
    }
}

/// Naturalistic battery row for one policy label.
fn nat_row(dir: &Path, label: &str) -> (f64, u32) {
    let csv = Csv::read(&dir.join("nat_metrics.csv"));
    let li = csv.col("label");
    let row = csv
        .rows
        .iter()
        .find(|r| r[li] == label)
        .unwrap_or_else(|| panic!("battery row for {label}"));
    (csv.f64(row, "mean_t_h"), csv.f64(row, "collisions") as u32)
}

/// Adversarial-testing totals for one label: (total collisions over the
/// runs, mean 1-based first-collision episode over runs that collided).
fn adv_totals(dir: &Path, label: &str) -> (u32, Option<f64>) {
    let csv = Csv::read(&dir.join("adv_metrics.csv"));
    let li = csv.col("label");
    let ci = csv.col("collisions");
    let fi = csv.col("first_collision");
    let mut total = 0u32;
    let mut firsts = Vec::new();
    for row in csv.rows.iter().filter(|r| r[li] == label) {
        total += row[ci].parse::<u32>().expect("collision count");
        if !row[fi].is_empty() {
            firsts.push(row[fi].parse::<f64>().expect("first-collision episode"));
        }
    }
    let first = if firsts.is_empty() {
        None
    } else {
        Some(firsts.iter().sum::<f64>() / firsts.len() as f64)
    };
    (total, first)
}

// ===== criterion 1: analytic gradients vs central differences ============

/// Roll a pre-training window: frozen random host, learning lead driver.
fn roll_a2c_window(
    host: &MlpParams,
    actor: &ActorParams,
    critic: &CriticParams,
    hyper: &A2cHyper,
    len: usize,
    stream: &SeedStream,
) -> RolloutWindow {
    let cfg = EnvConfig::default();
    let mut rng = stream.rng();
    let ep = cfg.with_mu(cfg.sample_mu(&mut rng));
    let mut state = env::reset(&ep, &mut rng);
    let mut rec = RecurrentState::zeros(LSTM_UNITS);
    let mut steps = Vec::new();
    for _ in 0..len {
        let obs = env::observe_adversary(&state, &ep).to_vec();
        let a_p = host.forward_one(&env::observe_protagonist(&state, &ep));
        let (mu_raw, var, rec_next) = actor.step(&obs, &rec, hyper.var_floor);
        let mu = action_map(mu_raw);
        let action = sample_action(mu, var, ep.lead_a_min, ep.lead_a_max, &mut rng);
        let log_prob = gaussian_log_prob(action.raw, mu, var);
        let value = critic.value(&obs);
        let info = env::step(&mut state, &ep, a_p, action.applied);
        steps.push(WindowStep { obs, rec: rec.clone(), action_raw: action.raw, log_prob, value, reward: info.reward });
        rec = rec_next;
        if info.done {
            break;
        }
    }
    let bootstrap = critic.value(&env::observe_adversary(&state, &ep));
    RolloutWindow { steps, bootstrap }
}

/// Roll a fine-tuning window: learning host, five-input lead driver.
fn roll_arc_window(
    host: &MlpParams,
    actor: &ActorParams,
    critic: &CriticParams,
    hyper: &ArcHyper,
    len: usize,
    stream: &SeedStream,
) -> ArcWindow {
    let cfg = EnvConfig::default();
    let mut rng = stream.rng();
    let ep = cfg.with_mu(cfg.sample_mu(&mut rng));
    let mut state = env::reset(&ep, &mut rng);
    let mut rec = RecurrentState::zeros(LSTM_UNITS);
    let mut steps = Vec::new();
    for _ in 0..len {
        let obs_p = env::observe_protagonist(&state, &ep);
        let a_p = host.forward_one(&obs_p);
        let (obs5, _) = env::observe_adversary_arc(&state, &ep, a_p);
        let obs_adv: [f64; 4] = obs5[..4].try_into().unwrap();
        let (mu_raw, var, rec_next) = actor.step(&obs5, &rec, hyper.a2c.var_floor);
        let mu = action_map(mu_raw);
        let action = sample_action(mu, var, ep.lead_a_min, ep.lead_a_max, &mut rng);
        let log_prob = gaussian_log_prob(action.raw, mu, var);
        let value = critic.value(&obs5);
        let info = env::step(&mut state, &ep, a_p, action.applied);
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
        if info.done {
            break;
        }
    }
    let next_obs_p = env::observe_protagonist(&state, &ep);
    let next_a_p = host.forward_one(&next_obs_p);
    let (next_obs5, _) = env::observe_adversary_arc(&state, &ep, next_a_p);
    ArcWindow { steps, bootstrap: critic.value(&next_obs5) }
}

/// Forward-only batch MSE, identical math to the taped imitation loss.
fn mse_forward(p: &MlpParams, x: &Tensor, y: &Tensor) -> f64 {
    let out = p.forward(x);
    let n = y.cols();
    let mut s = 0.0;
    for j in 0..n {
        let d = out.get(0, j) - y.get(0, j);
        s += d * d;
    }
    s / n as f64
}

/// Forward-only policy loss on a recorded window: mean of
/// `-(log pi * A + beta * H)` with the advantages held fixed.
fn l_pi_forward(window: &RolloutWindow, actor: &ActorParams, hyper: &A2cHyper, adv: &[f64]) -> f64 {
    let mut rec = window.steps[0].rec.clone();
    let mut acc = 0.0;
    for (t, s) in window.steps.iter().enumerate() {
        let (mu_raw, var, next) = actor.step(&s.obs, &rec, hyper.var_floor);
        rec = next;
        let mu = action_map(mu_raw);
        acc -= gaussian_log_prob(s.action_raw, mu, var) * adv[t] + hyper.beta * gaussian_entropy(var);
    }
    acc / window.steps.len() as f64
}

/// Forward-only value loss: mean squared n-step return residual.
fn l_v_forward(window: &RolloutWindow, critic: &CriticParams, adv: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (t, s) in window.steps.iter().enumerate() {
        let g = adv[t] + s.value;
        let r = g - critic.value(&s.obs);
        acc += r * r;
    }
    acc / window.steps.len() as f64
}

/// Forward-only host fine-tuning loss: replay the lead driver on the
/// five-input observation rebuilt from the host's current action, with
/// the advantages held fixed.
fn l_p_forward(
    window: &ArcWindow,
    p: &MlpParams,
    actor: &ActorParams,
    il: &MlpParams,
    hyper: &ArcHyper,
    adv: &[f64],
) -> f64 {
    let mut rec = window.steps[0].rec.clone();
    let mut pi = 0.0;
    let mut d = 0.0;
    for (t, s) in window.steps.iter().enumerate() {
        let a_p = p.forward_one(&s.obs_p);
        let obs5 = [s.obs_adv[0], s.obs_adv[1], s.obs_adv[2], s.obs_adv[3], a_p];
        let (mu_raw, var, next) = actor.step(&obs5, &rec, hyper.a2c.var_floor);
        rec = next;
        let mu = action_map(mu_raw);
        pi -= gaussian_log_prob(s.action_raw, mu, var) * adv[t]
            + hyper.a2c.beta * gaussian_entropy(var);
        d += (a_p - il.forward_one(&s.obs_p)).abs();
    }
    let l = window.steps.len() as f64;
    -(pi / l) + hyper.lambda * (d / l)
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    const SEEDS: u64 = 20;
    const TOL: f64 = 1e-4;
    const EPS: f64 = 1e-6;
    let t0 = Instant::now();
    let mut worst = 0.0f64;

    for k in 0..SEEDS {
        let stream = SeedStream::root(900 + k);
        let mut rng = stream.child("init").rng();

        // Imitation loss: batch MSE of the host network.
        let policy = MlpParams::policy(3, &mut rng);
        let rows = 8;
        let mut x = Tensor::zeros(3, rows);
        let mut y = Tensor::zeros(1, rows);
        for j in 0..rows {
            for i in 0..3 {
                x.set(i, j, rng.random_range(-1.0..1.5));
            }
            y.set(0, j, rng.random_range(-1.0..1.0));
        }
        let (il_value, il_grads) = il_loss(&policy, &x, &y);
        assert!((mse_forward(&policy, &x, &y) - il_value).abs() < 1e-9);
        let template = policy.clone();
        let err_il = max_rel_err(
            |theta: &[f64]| {
                let mut p = template.clone();
                p.load_flat(theta);
                mse_forward(&p, &x, &y)
            },
            &policy.flatten(),
            &il_grads.flatten(),
            EPS,
        );

        // Lead-driver policy and value losses over one rolled window.
        let hyper = A2cHyper::default();
        let host = MlpParams::policy(3, &mut rng);
        let actor4 = ActorParams::init(4, &mut rng);
        let critic4 = CriticParams::init(4, &mut rng);
        let window = roll_a2c_window(&host, &actor4, &critic4, &hyper, 5, &stream.child("w4"));
        let adv = advantages(&window, hyper.gamma);
        let report = a2c_losses(&window, &actor4, &critic4, &hyper);
        assert!((l_pi_forward(&window, &actor4, &hyper, &adv) - report.l_pi).abs() < 1e-9);
        assert!((l_v_forward(&window, &critic4, &adv) - report.l_v).abs() < 1e-9);
        // The recurrent actor has ~10k parameters and the costliest replay;
        // full-coordinate differencing lives in the unit tests, while this
        // sweep probes a fresh 600-coordinate random subset per seed.
        let a_template = actor4.clone();
        let theta_a = actor4.flatten();
        let grad_a = report.actor_grads.flatten();
        let mut eval_a = |theta: &[f64]| {
            let mut a = a_template.clone();
            a.load_flat(theta);
            l_pi_forward(&window, &a, &hyper, &adv)
        };
        let mut err_actor = 0.0f64;
        for _ in 0..600 {
            let i = rng.random_range(0..theta_a.len());
            let fd = central_diff(&mut eval_a, &theta_a, i, EPS);
            err_actor = err_actor.max(rel_err(fd, grad_a[i]));
        }
        let c_template = critic4.clone();
        let err_critic = max_rel_err(
            |theta: &[f64]| {
                let mut c = c_template.clone();
                c.load_flat(theta);
                l_v_forward(&window, &c, &adv)
            },
            &critic4.flatten(),
            &report.critic_grads.flatten(),
            EPS,
        );

        // Host fine-tuning loss, including the path through the lead
        // driver's pedal input slot: the widened column starts at zero,
        // so it is randomized here to carry real derivative.
        let arc_hyper = ArcHyper::default();
        let (mut actor5, critic5) = init_arc_adversary(&actor4, &critic4).expect("widen");
        let slot = actor5.trunk.layers[0].w.cols() - 1;
        for r in 0..actor5.trunk.layers[0].w.rows() {
            actor5.trunk.layers[0].w.set(r, slot, rng.random_range(-0.5..0.5));
        }
        let il_ref = MlpParams::policy(3, &mut rng);
        let window5 =
            roll_arc_window(&policy, &actor5, &critic5, &arc_hyper, 3, &stream.child("w5"));
        let rollout5 = RolloutWindow {
            steps: window5
                .steps
                .iter()
                .map(|s| WindowStep {
                    obs: vec![0.0],
                    rec: RecurrentState::zeros(1),
                    action_raw: s.action_raw,
                    log_prob: s.log_prob,
                    value: s.value,
                    reward: s.reward,
                })
                .collect(),
            bootstrap: window5.bootstrap,
        };
        let adv5 = advantages(&rollout5, arc_hyper.a2c.gamma);
        let p_report =
            protagonist_grads(&window5, &policy, &actor5, &il_ref, &arc_hyper).expect("grads");
        assert!(
            (l_p_forward(&window5, &policy, &actor5, &il_ref, &arc_hyper, &adv5) - p_report.l_p)
                .abs()
                < 1e-9 * p_report.l_p.abs().max(1.0)
        );
        let p_template = policy.clone();
        let err_p = max_rel_err(
            |theta: &[f64]| {
                let mut q = p_template.clone();
                q.load_flat(theta);
                l_p_forward(&window5, &q, &actor5, &il_ref, &arc_hyper, &adv5)
            },
            &policy.flatten(),
            &p_report.grads.flatten(),
            EPS,
        );

        for e in [err_il, err_actor, err_critic, err_p] {
            worst = worst.max(e);
        }
    }

    let wall = t0.elapsed();
    let ok = worst < TOL && wall < Duration::from_secs(60);
    println!(
        "[{}] criterion 1: gradient correctness — max rel err {worst:.2e} over {SEEDS} seeds x 4 losses (tol {TOL:.0e}), {:.1} s (limit 60 s)",
        if ok { "PASS" } else { "FAIL" },
        wall.as_secs_f64()
    );
    assert!(worst < TOL, "worst gradient relative error {worst}");
    assert!(wall < Duration::from_secs(60), "gradient check took {wall:?}");
}

// ===== criterion 2: n-step advantages vs brute-force summation ===========

#[test]
fn criterion_2_advantages_equal_brute_force() {
    const WINDOWS: usize = 1000;
    const TOL: f64 = 1e-12;
    let stream = SeedStream::root(901);
    let mut rng = stream.child("adv-oracle").rng();
    let mut worst = 0.0f64;

    for _ in 0..WINDOWS {
        let len = rng.random_range(1..=16usize);
        let gamma = rng.random_range(0.05..1.0);
        let bootstrap = rng.random_range(-5.0..5.0);
        let mut steps = Vec::with_capacity(len);
        for _ in 0..len {
            steps.push(WindowStep {
                obs: vec![0.0],
                rec: RecurrentState::zeros(1),
                action_raw: 0.0,
                log_prob: 0.0,
                value: rng.random_range(-5.0..5.0),
                reward: rng.random_range(-2.0..100.0),
            });
        }
        let window = RolloutWindow { steps, bootstrap };
        let fast = advantages(&window, gamma);

        // Independent oracle: direct double-loop discounted summation.
        for t in 0..len {
            let mut g = 0.0;
            for k in t..len {
                g += gamma.powi((k - t) as i32) * window.steps[k].reward;
            }
            g += gamma.powi((len - t) as i32) * bootstrap;
            let expect = g - window.steps[t].value;
            worst = worst.max((fast[t] - expect).abs());
        }
    }

    let ok = worst <= TOL;
    println!(
        "[{}] criterion 2: advantage oracle — max |diff| {worst:.2e} over {WINDOWS} random windows (tol {TOL:.0e})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "advantage mismatch {worst}");
}

// ===== criterion 3: closed-form constants =================================

#[test]
fn criterion_3_closed_form_constants() {
    let r2 = env::adversary_reward(2.0);
    let r_cap = env::adversary_reward(0.005);
    let r_zero = env::adversary_reward(0.0);
    let h = gaussian_entropy(1.0);
    let red = collision_reduction(800, 78);

    let ok = r2 == 0.5
        && r_cap == 100.0
        && r_zero == 100.0
        && (h - 1.418939).abs() <= 1e-6
        && red == Some(90.25);
    println!(
        "[{}] criterion 3: closed forms — reward(2)={r2}, cap={r_cap}/{r_zero}, entropy(1)={h:.6} (±1e-6 of 1.418939), reduction(800,78)={red:?}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert_eq!(r2, 0.5);
    assert_eq!(r_cap, 100.0);
    assert_eq!(r_zero, 100.0);
    assert!((h - 1.418939).abs() <= 1e-6, "entropy {h}");
    assert_eq!(red, Some(90.25));
}

// ===== criterion 4: imitation competence ==================================

#[test]
fn criterion_4_imitation_competence() {
    let f = fixture();
    let (mean_t_h, collisions) = nat_row(&f.dir, "il_policy");
    let in_band = (1.8..=2.2).contains(&mean_t_h);
    let fast_enough = f.il_wall < Duration::from_secs(15 * 60);
    let ok = in_band && collisions == 0 && fast_enough;
    println!(
        "[{}] criterion 4: imitation competence — battery mean t_h {mean_t_h:.3} s (need [1.8, 2.2]), {collisions} collisions (need 0), dataset+training {:.0} s (limit 900 s)",
        if ok { "PASS" } else { "FAIL" },
        f.il_wall.as_secs_f64()
    );
    assert!(in_band, "mean t_h {mean_t_h}");
    assert_eq!(collisions, 0);
    assert!(fast_enough, "imitation stage took {:?}", f.il_wall);
}

// ===== criterion 5: adversary efficacy ====================================

#[test]
fn criterion_5_adversary_efficacy() {
    let f = fixture();
    // The single-run training curve: ensemble member 0 is the one
    // canonical `train_adversary` invocation (its seed stream is the same
    // whether the ensemble has one member or five).
    let csv = Csv::read(&f.dir.join("adv_train_log_0.csv"));
    let rewards: Vec<f64> = csv.rows.iter().map(|r| csv.f64(r, "mean_step_reward")).collect();
    let collided: u32 = csv.rows.iter().map(|r| csv.f64(r, "collided") as u32).sum();
    let d = rewards.len() / 10;
    let first: f64 = rewards[..d].iter().sum::<f64>() / d as f64;
    let last: f64 = rewards[rewards.len() - d..].iter().sum::<f64>() / d as f64;
    let fast_enough = f.adv_wall < Duration::from_secs(20 * 60);

    let ok = last > first && collided >= 1 && fast_enough;
    println!(
        "[{}] criterion 5: adversary efficacy — {} episodes, mean step reward first decile {first:.3} -> last decile {last:.3} (need rise), {collided} collision episodes (need >=1), ensemble wall {:.0} s (limit 1200 s)",
        if ok { "PASS" } else { "FAIL" },
        rewards.len(),
        f.adv_wall.as_secs_f64()
    );
    assert!(last > first, "no learning: deciles {first} -> {last}");
    assert!(collided >= 1, "no collision episode");
    assert!(fast_enough, "adversary stage took {:?}", f.adv_wall);
}

// ===== criterion 6: fine-tuning robustness direction ======================

#[test]
fn criterion_6_fine_tuning_robustness_direction() {
    let f = fixture();
    let (il_total, il_first) = adv_totals(&f.dir, "il_policy");
    let (arc_total, arc_first) = adv_totals(&f.dir, "arc_policy");
    let (n1_total, _) = adv_totals(&f.dir_n1, "arc_n1");

    // Clause 1: fresh attackers find at most half as many collisions
    // against the fine-tuned policy as against the imitation policy.
    let halved = (arc_total as f64) <= 0.5 * il_total as f64;
    // Clause 2: the first induced collision comes later.
    let later_first = match (il_first, arc_first) {
        (Some(a), Some(b)) => b > a,
        (Some(_), None) => true, // tuned policy never collides at all
        _ => false,
    };
    // Clause 3: a five-worker ensemble is no worse than a single worker.
    let directional = arc_total <= n1_total;

    let ok = halved && later_first && directional;
    println!(
        "[{}] criterion 6: robustness direction — attacker collisions il {il_total} vs tuned {arc_total} (need <= {:.0}), first collision il {il_first:?} vs tuned {arc_first:?} (need later), ensemble 1 -> 5 workers {n1_total} -> {arc_total} (need no worse)",
        if ok { "PASS" } else { "FAIL" },
        0.5 * il_total as f64
    );
    // At this training budget the fine-tuning phase does not measurably
    // harden the policy; the assertions record the intended bar.
    assert!(halved, "collision count not halved: {il_total} -> {arc_total}");
    assert!(later_first, "first collision not later: {il_first:?} -> {arc_first:?}");
    assert!(directional, "ensemble regression: {n1_total} -> {arc_total}");
}

// ===== criterion 7: distillation retention ================================

#[test]
fn criterion_7_distillation_retention() {
    let f = fixture();
    let (il_t_h, _) = nat_row(&f.dir, "il_policy");
    let (arc_t_h, arc_cols) = nat_row(&f.dir, "arc_policy");
    let (ab_t_h, ab_cols) = nat_row(&f.dir_ablate, "ablation");

    // Clause 1: with the distillation anchor, naturalistic behavior is
    // retained to within ±10% of the imitation policy's mean headway.
    let retained = (arc_t_h - il_t_h).abs() <= 0.10 * il_t_h && arc_cols == 0;
    // Clause 2: without the anchor (and with frozen attackers) the
    // fine-tuned policy degrades: drifts conservative by more than +50%
    // in mean headway, or starts colliding.
    let drifted = ab_t_h > 1.5 * il_t_h || ab_cols > 0;

    let ok = retained && drifted;
    println!(
        "[{}] criterion 7: distillation retention — tuned battery mean t_h {arc_t_h:.3} s vs imitation {il_t_h:.3} s (need within ±10%), unanchored ablation {ab_t_h:.3} s / {ab_cols} collisions (need > {:.3} s or collisions)",
        if ok { "PASS" } else { "FAIL" },
        1.5 * il_t_h
    );
    assert!(retained, "retention broken: {arc_t_h} vs {il_t_h}, {arc_cols} collisions");
    // With zero gradient available to the host (frozen attackers never
    // learn to react to the pedal slot, so the unanchored objective is
    // flat), the ablation cannot drift at this budget; the assertion
    // records the intended bar.
    assert!(drifted, "ablation did not degrade: {ab_t_h} vs {il_t_h}, {ab_cols} collisions");
}

// ===== criterion 8: determinism ===========================================

#[test]
fn criterion_8_determinism() {
    let base = std::env::temp_dir().join("arc-acceptance-det");
    let _ = std::fs::remove_dir_all(&base);
    let dirs = [base.join("a"), base.join("b")];
    // Miniature budgets: every pipeline stage, single worker everywhere.
    let tiny: &[&str] = &[
        "--dataset.episodes",
        "4",
        "--il.epochs",
        "2",
        "--adv.count",
        "1",
        "--adv.episodes",
        "6",
        "--arc.n",
        "1",
        "--arc.episodes",
        "6",
        "--battery.frictions",
        "0.8",
        "--battery.profiles",
        "2",
        "--advtest.adversaries",
        "1",
        "--advtest.episodes",
        "4",
    ];
    for dir in &dirs {
        std::fs::create_dir_all(dir).expect("mkdir");
        let il = dir.join("il_policy.ckpt");
        for stage in [
            vec!["collect-dataset"],
            vec!["train-il"],
            vec!["train-adv"],
            vec!["train-arc"],
            vec!["eval-nat", "--policy", path_str(&il)],
            vec!["eval-adv", "--policy", path_str(&il)],
            vec!["report"],
        ] {
            let mut args = stage.clone();
            args.extend_from_slice(tiny);
            if let Err(e) = run_stage(dir, &args) {
                panic!("miniature pipeline failed: {e}");
            }
        }
    }

    let artifacts = [
        "dataset.csv",
        "il_policy.ckpt",
        "il_train_curve.csv",
        "adv_actor_0.ckpt",
        "adv_critic_0.ckpt",
        "adv_train_log_0.csv",
        "min_headway_curve_0.csv",
        "arc_policy.ckpt",
        "arc_adv_actor_0.ckpt",
        "arc_adv_critic_0.ckpt",
        "arc_train_log.csv",
        "nat_metrics.csv",
        "adv_metrics.csv",
        "comparison.csv",
        "fig_adversary_reward.svg",
        "fig_collisions.svg",
        "fig_min_headway.svg",
    ];
    let mut mismatched = Vec::new();
    for name in artifacts {
        let a = std::fs::read(dirs[0].join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"));
        let b = std::fs::read(dirs[1].join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"));
        if a != b {
            mismatched.push(name);
        }
    }

    let ok = mismatched.is_empty();
    println!(
        "[{}] criterion 8: determinism — {} artifacts byte-compared across two seeded runs of every stage{}",
        if ok { "PASS" } else { "FAIL" },
        artifacts.len(),
        if ok { ", all identical".to_string() } else { format!(", mismatched: {mismatched:?}") }
    );
    assert!(ok, "non-deterministic artifacts: {mismatched:?}");
}

// ===== criterion 9: physics invariants ====================================

#[test]
fn criterion_9_physics_invariants() {
    const STEPS: u64 = 1_000_000;
    let cfg = EnvConfig::default();
    let stream = SeedStream::root(902);
    let mut rng = stream.child("physics").rng();

    let mut taken = 0u64;
    let mut episode = 0u64;
    while taken < STEPS {
        let ep = cfg.with_mu(cfg.sample_mu(&mut rng));
        let mut state = env::reset(&ep, &mut rng);
        let limit = ep.mu * ep.gravity;
        episode += 1;
        loop {
            // Pedal within its physical range; lead command deliberately
            // wider than the legal band to exercise the clipping.
            let pedal = rng.random_range(-1.0..=1.0);
            let lead_cmd = rng.random_range(-10.0..6.0);
            let info = env::step(&mut state, &ep, pedal, lead_cmd);
            taken += 1;

            assert!(
                (-6.0..=2.0).contains(&state.a_lead),
                "lead acceleration {} outside [-6, 2] at step {taken}",
                state.a_lead
            );
            assert!(state.v >= 0.0, "host velocity {} negative at step {taken}", state.v);
            assert!(
                state.a.abs() <= limit + 1e-9,
                "host acceleration {} beyond friction limit {limit} at step {taken}",
                state.a
            );
            assert!(
                info.reward > 0.0 && info.reward <= 100.0,
                "reward {} outside (0, 100] at step {taken}",
                info.reward
            );
            let expect_t_h = env::headway(state.x_rel, state.v, &ep);
            assert!(
                info.t_h == expect_t_h,
                "t_h {} != clipped x_rel/max(v, v_floor) {expect_t_h} at step {taken}",
                info.t_h
            );
            assert!(state.x_rel >= 0.0, "gap {} negative at step {taken}", state.x_rel);

            if info.done || taken >= STEPS {
                break;
            }
        }
    }

    println!(
        "[PASS] criterion 9: physics invariants — {STEPS} random steps over {episode} episodes: lead acceleration in [-6, 2], host velocity >= 0, friction-limited host acceleration, reward in (0, 100], exact clipped headway"
    );
}
