//! `arc` — imitation pre-training, adversarial fine-tuning, and
//! robustness evaluation for a vehicle-following policy.
//!
//! Configuration keys (see `--help`) can be set in a `key = value` file
//! passed with `--config`, or directly as flags: any `--key value` or
//! `--key=value` whose name is a config key is applied after the file, so
//! flags win. `ARC_OUT` overrides the output directory between the two.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use arc_cli::config::{self, RunConfig};
use arc_cli::pipeline;

#[derive(Parser, Debug)]
#[command(
    name = "arc",
    version,
    about = "Adversarially robust vehicle-following control pipeline",
    after_help = CONFIG_HELP
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for artifacts (also the `out` key / `ARC_OUT`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Root random seed (also the `seed` key).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Thread cap for stages that shard work (also the `workers` key).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Drive the scripted expert and record demonstrations.
    CollectDataset,
    /// Pre-train the following policy on the demonstration dataset.
    TrainIl,
    /// Pre-train an ensemble of attacking lead-vehicle drivers.
    TrainAdv,
    /// Fine-tune the policy against the adversary ensemble.
    TrainArc,
    /// Naturalistic battery: frictions x lead profiles, no adversary.
    EvalNat {
        /// Policy checkpoint to evaluate.
        #[arg(long, value_name = "CKPT")]
        policy: PathBuf,
        /// Row label in the metrics tables (default: checkpoint stem).
        #[arg(long)]
        label: Option<String>,
        /// Also export a step-by-step trace of this battery episode.
        #[arg(long, value_name = "EPISODE")]
        trace: Option<u32>,
    },
    /// Adversarial testing: train fresh attackers against the policy.
    EvalAdv {
        /// Policy checkpoint to evaluate.
        #[arg(long, value_name = "CKPT")]
        policy: PathBuf,
        /// Row label in the metrics tables (default: checkpoint stem).
        #[arg(long)]
        label: Option<String>,
    },
    /// Emit the comparison table and SVG figures from recorded logs.
    Report,
}

const CONFIG_HELP: &str = "Config keys (file `key = value` lines or `--key value` flags):
  seed, workers, out
  gamma, beta, lambda, eta_actor, eta_critic, eta_p
  env.dt, env.episode_cap, env.mu, env.mu_min, env.mu_max,
  env.v_lead_min, env.v_lead_max, env.lead_a_min, env.lead_a_max,
  env.pedal_gas_gain, env.pedal_brake_gain, env.tau, env.gravity,
  env.h0_min, env.h0_max, env.v_floor, env.t_h_max
  dataset.episodes
  il.lr, il.batch, il.epochs, il.val_frac
  adv.window, adv.var_floor, adv.episodes, adv.count, adv.cap,
  adv.closing_min, adv.closing_max
  arc.n, arc.episodes, arc.fixed_adversary
  battery.frictions, battery.profiles, battery.v_min, battery.v_max
  advtest.adversaries, advtest.episodes";

/// Pull `--key value` / `--key=value` config overrides out of the raw
/// arguments so clap only sees its own flags. Returns the remaining
/// arguments and the overrides in command-line order.
fn extract_overrides(
    args: Vec<String>,
) -> Result<(Vec<String>, Vec<(String, String)>), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline_value) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (body, None),
        };
        // Dedicated flags keep their clap behavior even though `seed`,
        // `workers`, and `out` are also config keys.
        let dedicated = matches!(key, "config" | "out" | "seed" | "workers");
        if !dedicated && config::is_config_key(key) {
            let key = key.to_string();
            let value = match inline_value {
                Some(v) => v,
                None => it
                    .next()
                    .ok_or_else(|| format!("missing value for --{key}"))?,
            };
            overrides.push((key, value));
        } else {
            rest.push(arg);
        }
    }
    Ok((rest, overrides))
}

fn run() -> Result<ExitCode, anyhow::Error> {
    let (args, mut overrides) = match extract_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(msg) => {
            eprintln!("error: {msg}");
            return Ok(ExitCode::from(2));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version displays are successes; everything else is
            // a usage error.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            e.print().expect("cannot write diagnostics");
            return Ok(ExitCode::from(code));
        }
    };

    // Dedicated flags are the strongest layer.
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(workers) = cli.workers {
        overrides.push(("workers".into(), workers.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.display().to_string()));
    }

    let env_out = std::env::var("ARC_OUT").ok();
    let cfg = RunConfig::build(cli.config.as_deref(), env_out.as_deref(), &overrides)?;

    match cli.cmd {
        Cmd::CollectDataset => pipeline::collect_dataset_cmd(&cfg)?,
        Cmd::TrainIl => pipeline::train_il_cmd(&cfg)?,
        Cmd::TrainAdv => pipeline::train_adv_cmd(&cfg)?,
        Cmd::TrainArc => pipeline::train_arc_cmd(&cfg)?,
        Cmd::EvalNat { policy, label, trace } => {
            pipeline::eval_nat_cmd(&cfg, &policy, label, trace)?
        }
        Cmd::EvalAdv { policy, label } => pipeline::eval_adv_cmd(&cfg, &policy, label)?,
        Cmd::Report => pipeline::report_cmd(&cfg)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
