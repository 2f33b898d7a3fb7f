//! Subcommand implementations. Each stage reads its prerequisites from the
//! output directory, computes, and writes its artifacts back; inputs are
//! never modified. Fixed seed and one worker make every stage
//! bit-reproducible.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use arc_core::eval::{
    run_naturalistic, summarize, trace_episode, MetricsRecord, PolicySummary,
};
use arc_core::expert::collect_dataset;
use arc_core::il::train_il;
use arc_core::nn::{ActorParams, CriticParams, MlpParams};
use arc_core::rng::SeedStream;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset_io;
use crate::logs::{self, AdvRow, NatRow};
use crate::plot;
use crate::store;

// ===== artifact layout ====================================================

pub fn dataset_path(out: &Path) -> PathBuf {
    out.join("dataset.csv")
}

pub fn il_policy_path(out: &Path) -> PathBuf {
    out.join("il_policy.ckpt")
}

pub fn adv_actor_path(out: &Path, i: u32) -> PathBuf {
    out.join(format!("adv_actor_{i}.ckpt"))
}

pub fn adv_critic_path(out: &Path, i: u32) -> PathBuf {
    out.join(format!("adv_critic_{i}.ckpt"))
}

pub fn adv_log_path(out: &Path, i: u32) -> PathBuf {
    out.join(format!("adv_train_log_{i}.csv"))
}

pub fn arc_policy_path(out: &Path) -> PathBuf {
    out.join("arc_policy.ckpt")
}

pub fn min_headway_path(out: &Path, i: u32) -> PathBuf {
    out.join(format!("min_headway_curve_{i}.csv"))
}

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing prerequisite {}: run `arc {producer}` first",
            path.display()
        );
    }
    Ok(())
}

// ===== stages =============================================================

pub fn collect_dataset_cmd(cfg: &RunConfig) -> Result<()> {
    ensure_out(cfg)?;
    // Demonstrations cover ordinary highway driving: the same lead-velocity
    // band the naturalistic battery evaluates on. Adversary training runs
    // on its own (lower) band, deliberately probing speeds the imitation
    // policy never saw.
    let mut nat_env = cfg.env.clone();
    nat_env.v_lead_min = cfg.battery.v_min;
    nat_env.v_lead_max = cfg.battery.v_max;
    let ds = collect_dataset(&nat_env, cfg.dataset_episodes, cfg.seed)?;
    let path = dataset_path(&cfg.out);
    dataset_io::save(&path, &ds)?;
    println!(
        "dataset: {} rows from {} episodes -> {}",
        ds.rows.len(),
        cfg.dataset_episodes,
        path.display()
    );
    Ok(())
}

pub fn train_il_cmd(cfg: &RunConfig) -> Result<()> {
    ensure_out(cfg)?;
    let ds_path = dataset_path(&cfg.out);
    require(&ds_path, "collect-dataset")?;
    let ds = dataset_io::load(&ds_path)?;
    let (params, curve) = train_il(&ds, &cfg.il, cfg.seed)?;
    let ckpt = il_policy_path(&cfg.out);
    checkpoint::save_mlp(&ckpt, &params)?;
    logs::write_il_curve(&cfg.out.join("il_train_curve.csv"), &curve)?;
    let best = curve.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
    println!(
        "imitation policy: best validation MSE {best:.6} over {} epochs -> {}",
        curve.len(),
        ckpt.display()
    );
    Ok(())
}

pub fn train_adv_cmd(cfg: &RunConfig) -> Result<()> {
    ensure_out(cfg)?;
    let il_path = il_policy_path(&cfg.out);
    require(&il_path, "train-il")?;
    let il = checkpoint::load_mlp(&il_path)?;
    let stream = SeedStream::root(cfg.seed).child("advpre");
    let adv_env = cfg.adversary_env();
    let runs = store::train_adversaries_threaded(
        &adv_env,
        &il,
        &cfg.a2c,
        &stream,
        cfg.adv_count,
        cfg.workers,
    );
    for (i, run) in runs.iter().enumerate() {
        let i = i as u32;
        checkpoint::save_actor(&adv_actor_path(&cfg.out, i), &run.actor)?;
        checkpoint::save_critic(&adv_critic_path(&cfg.out, i), &run.critic)?;
        logs::write_adv_log(&adv_log_path(&cfg.out, i), &run.log)?;
        let collisions = run.log.iter().filter(|e| e.collided).count();
        println!(
            "adversary {i}: {collisions} collision episodes in {}, {} rejected updates",
            run.log.len(),
            run.incidents
        );
    }
    Ok(())
}

/// Load the consecutive pre-trained ensemble members present on disk.
fn load_ensemble(out: &Path) -> Result<Vec<(ActorParams, CriticParams)>> {
    let mut ensemble = Vec::new();
    loop {
        let i = ensemble.len() as u32;
        let actor_path = adv_actor_path(out, i);
        if !actor_path.exists() {
            break;
        }
        let critic_path = adv_critic_path(out, i);
        require(&critic_path, "train-adv")?;
        ensemble.push((
            checkpoint::load_actor(&actor_path)?,
            checkpoint::load_critic(&critic_path)?,
        ));
    }
    if ensemble.is_empty() {
        require(&adv_actor_path(out, 0), "train-adv")?;
    }
    Ok(ensemble)
}

pub fn train_arc_cmd(cfg: &RunConfig) -> Result<()> {
    ensure_out(cfg)?;
    let il_path = il_policy_path(&cfg.out);
    require(&il_path, "train-il")?;
    let il = checkpoint::load_mlp(&il_path)?;
    let ensemble = load_ensemble(&cfg.out)?;
    let hyper = cfg.arc_hyper();
    let stream = SeedStream::root(cfg.seed).child("arc");
    let adv_env = cfg.adversary_env();
    let outcome =
        store::run_arc_threaded(&il, &ensemble, &hyper, &adv_env, &stream, cfg.workers)?;
    if outcome.log.is_empty() {
        println!("warning: zero-episode budget; protagonist returned unchanged");
    }
    let ckpt = arc_policy_path(&cfg.out);
    checkpoint::save_mlp(&ckpt, &outcome.protagonist)?;
    logs::write_arc_log(&cfg.out.join("arc_train_log.csv"), &outcome.log)?;
    for (i, (actor, critic)) in outcome.adversaries.iter().enumerate() {
        let i = i as u32;
        checkpoint::save_actor(&cfg.out.join(format!("arc_adv_actor_{i}.ckpt")), actor)?;
        checkpoint::save_critic(&cfg.out.join(format!("arc_adv_critic_{i}.ckpt")), critic)?;
    }
    println!(
        "fine-tuned policy: {} episodes across {} workers, {} applied updates, \
         {} rejected -> {}",
        outcome.log.len(),
        hyper.n_envs,
        outcome.final_version,
        outcome.rejected_submissions,
        ckpt.display()
    );
    Ok(())
}

/// Load a following policy and check its observation width.
fn load_policy(path: &Path) -> Result<MlpParams> {
    require(path, "train-il")?;
    let p = checkpoint::load_mlp(path)?;
    if p.in_dim() != 3 {
        bail!(
            "{}: policy takes {} inputs, the following observation has 3",
            path.display(),
            p.in_dim()
        );
    }
    Ok(p)
}

fn label_for(path: &Path, label: Option<String>) -> Result<String> {
    let label = match label {
        Some(l) => l,
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "policy".to_string()),
    };
    if label.is_empty() || label.contains([',', '\n']) {
        bail!("label `{label}` must be non-empty and free of commas");
    }
    Ok(label)
}

pub fn eval_nat_cmd(
    cfg: &RunConfig,
    policy_path: &Path,
    label: Option<String>,
    trace: Option<u32>,
) -> Result<()> {
    ensure_out(cfg)?;
    let policy = load_policy(policy_path)?;
    let label = label_for(policy_path, label)?;
    let stream = SeedStream::root(cfg.seed).child("battery");
    let rec = run_naturalistic(&policy, &cfg.env, &cfg.battery, &stream);
    logs::upsert_nat(&cfg.out.join("nat_metrics.csv"), NatRow {
        label: label.clone(),
        rec,
    })?;
    print_nat(&label, &rec);

    if let Some(episode) = trace {
        let Some(rows) = trace_episode(&policy, &cfg.env, &cfg.battery, &stream, episode)
        else {
            bail!(
                "episode index {episode} out of range: the battery has {} episodes",
                cfg.battery.episodes()
            );
        };
        let path = cfg.out.join(format!("trace_{label}_{episode}.csv"));
        logs::write_trace(&path, &rows)?;
        println!("trace: episode {episode}, {} steps -> {}", rows.len(), path.display());
    }
    Ok(())
}

fn print_nat(label: &str, rec: &MetricsRecord) {
    println!(
        "naturalistic [{label}]: {} episodes, mean t_h {:.3} s, min t_h {:.3} s, \
         {} collisions",
        rec.episodes, rec.mean_t_h, rec.min_t_h, rec.collisions
    );
}

pub fn eval_adv_cmd(cfg: &RunConfig, policy_path: &Path, label: Option<String>) -> Result<()> {
    ensure_out(cfg)?;
    let policy = load_policy(policy_path)?;
    let label = label_for(policy_path, label)?;
    let stream = SeedStream::root(cfg.seed).child("advtest");
    let adv_env = cfg.adversary_env();
    let outcome = store::run_adversarial_threaded(
        &policy,
        &adv_env,
        cfg.advtest_adversaries,
        &cfg.advtest_hyper(),
        &stream,
        cfg.workers,
    );

    let rows: Vec<AdvRow> = outcome
        .runs
        .iter()
        .enumerate()
        .map(|(run, r)| AdvRow {
            label: label.clone(),
            run: run as u32,
            collisions: r.log.iter().filter(|e| e.collided).count() as u32,
            first_collision: outcome.first_collisions[run],
        })
        .collect();
    logs::upsert_adv_rows(&cfg.out.join("adv_metrics.csv"), &label, &rows)?;
    for (i, run) in outcome.runs.iter().enumerate() {
        logs::write_min_headway(&min_headway_path(&cfg.out, i as u32), &label, &run.log)?;
    }
    println!(
        "adversarial [{label}]: {} collisions over {} runs x {} episodes, \
         first at {}",
        outcome.total_collisions,
        outcome.runs.len(),
        cfg.advtest_episodes,
        outcome
            .mean_first_collision
            .map(|e| format!("{e}"))
            .unwrap_or_else(|| "-".to_string())
    );
    Ok(())
}

// ===== report =============================================================

/// Aggregate adversarial rows for one label.
fn adv_summary(rows: &[AdvRow], label: &str) -> (Option<u32>, Option<f64>) {
    let group: Vec<&AdvRow> = rows.iter().filter(|r| r.label == label).collect();
    if group.is_empty() {
        return (None, None);
    }
    let collisions = group.iter().map(|r| r.collisions).sum();
    let hits: Vec<f64> =
        group.iter().filter_map(|r| r.first_collision).map(f64::from).collect();
    let first = if hits.is_empty() {
        None
    } else {
        Some(hits.iter().sum::<f64>() / hits.len() as f64)
    };
    (Some(collisions), first)
}

pub fn report_cmd(cfg: &RunConfig) -> Result<()> {
    ensure_out(cfg)?;
    let out = &cfg.out;
    let mut produced = 0usize;

    // Comparison table: naturalistic metrics joined with adversarial
    // totals by label.
    let nat_path = out.join("nat_metrics.csv");
    if nat_path.exists() {
        let nat = logs::read_nat(&nat_path)?;
        let adv_path = out.join("adv_metrics.csv");
        let adv =
            if adv_path.exists() { logs::read_adv_rows(&adv_path)? } else { Vec::new() };
        let summaries: Vec<PolicySummary> = nat
            .iter()
            .map(|row| {
                let (adv_collisions, adv_first_collision) = adv_summary(&adv, &row.label);
                PolicySummary {
                    label: row.label.clone(),
                    nat: row.rec,
                    adv_collisions,
                    adv_first_collision,
                }
            })
            .collect();
        let table = summarize(&summaries);
        std::fs::write(out.join("comparison.csv"), &table)
            .with_context(|| format!("cannot write {}", out.join("comparison.csv").display()))?;
        println!("comparison.csv: {} policies", summaries.len());
        produced += 1;
    } else {
        println!("warning: no nat_metrics.csv; skipping comparison table");
    }

    // Adversary learning curve from the first pre-training log.
    let adv_log_path = adv_log_path(out, 0);
    if adv_log_path.exists() {
        let log = logs::read_adv_log(&adv_log_path)?;
        match plot::fig_adversary_reward(&log) {
            Some(svg) => {
                std::fs::write(out.join("fig_adversary_reward.svg"), svg)?;
                println!("fig_adversary_reward.svg: {} episodes", log.len());
                produced += 1;
            }
            None => println!("warning: empty adversary log; skipping reward figure"),
        }
    } else {
        println!("warning: no adversary training log; skipping reward figure");
    }

    // Collision counts per adversarial-testing run.
    let adv_path = out.join("adv_metrics.csv");
    if adv_path.exists() {
        let rows = logs::read_adv_rows(&adv_path)?;
        let baseline = if rows.iter().any(|r| r.label == "il") {
            Some("il")
        } else {
            rows.first().map(|r| r.label.as_str())
        };
        match plot::fig_collisions(&rows, baseline) {
            Some(svg) => {
                std::fs::write(out.join("fig_collisions.svg"), svg)?;
                println!("fig_collisions.svg: {} runs", rows.len());
                produced += 1;
            }
            None => println!("warning: empty adversarial metrics; skipping collision figure"),
        }
    } else {
        println!("warning: no adv_metrics.csv; skipping collision figure");
    }

    // Minimum-headway band over the most recent adversarial evaluation.
    let mut curves = Vec::new();
    let mut curve_label: Option<String> = None;
    for i in 0.. {
        let path = min_headway_path(out, i);
        if !path.exists() {
            break;
        }
        let (label, rows) = logs::read_min_headway(&path)?;
        match &curve_label {
            None => curve_label = Some(label),
            Some(l) if *l != label => {
                println!(
                    "warning: {} labeled `{label}`, expected `{l}`; ignoring it",
                    path.display()
                );
                continue;
            }
            Some(_) => {}
        }
        curves.push(rows);
    }
    if let Some(label) = curve_label {
        match plot::fig_min_headway(&label, &curves) {
            Some(svg) => {
                std::fs::write(out.join("fig_min_headway.svg"), svg)?;
                println!("fig_min_headway.svg: {} runs for `{label}`", curves.len());
                produced += 1;
            }
            None => println!("warning: empty headway curves; skipping headway figure"),
        }
    } else {
        println!("warning: no min_headway_curve files; skipping headway figure");
    }

    if produced == 0 {
        bail!("nothing to report in {}: run the pipeline first", out.display());
    }
    Ok(())
}

// ===== tests ==============================================================
