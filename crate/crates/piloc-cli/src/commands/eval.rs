//! `piloc eval`, `piloc ablate`, `piloc scale`: batch evaluation, the
//! four-way mechanism ablation, and the agent-count sweep.

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use serde::Serialize;

use piloc_core::dynamics::EpisodeConfig;
use piloc_core::gridmap::GridMap;
use piloc_core::metrics::{BatchMetrics, EpisodeResult};
use piloc_learn::checkpoint;
use piloc_learn::evaluate::{evaluate, EvalOutcome, EvalPolicy};
use piloc_learn::net::Network;

use super::util::{
    echo_config, effective_config, ensure_dir, load_maps, metrics_row, metrics_table_header,
    write_atomic,
};
use crate::config::AppConfig;
use crate::{AblateArgs, EvalArgs, PolicyArg, RunError, ScaleArgs};

/// The four ablation rows, in the order the study reports them. The flags
/// are (pheromone enabled, comms enabled).
pub const ABLATION_ROWS: [(&str, bool, bool, &str); 4] = [
    ("PILOC-com-ph", false, false, "piloc-com-ph.ckpt"),
    ("PILOC-ph", false, true, "piloc-ph.ckpt"),
    ("PILOC-com", true, false, "piloc-com.ckpt"),
    ("PILOC", true, true, "piloc.ckpt"),
];

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub policy: String,
    pub episodes: usize,
    pub seed: u64,
    pub metrics: BatchMetrics,
    pub results: Vec<EpisodeResult>,
}

fn load_net_for(
    checkpoint_path: &Path,
    maps: &[Arc<GridMap>],
    config: &AppConfig,
) -> anyhow::Result<Network<f64>> {
    let (net, _) = checkpoint::load_file::<f64>(checkpoint_path)
        .with_context(|| format!("loading checkpoint {}", checkpoint_path.display()))?;
    let spec = net.spec();
    let (h, w) = (maps[0].height(), maps[0].width());
    anyhow::ensure!(
        spec.obstacle.input_height == h && spec.obstacle.input_width == w,
        "checkpoint expects {}x{} maps, directory has {}x{}",
        spec.obstacle.input_height,
        spec.obstacle.input_width,
        h,
        w
    );
    anyhow::ensure!(
        spec.pheromone.input_height == config.episode.pheromone_window,
        "checkpoint expects an {0}x{0} pheromone patch, config says {1}",
        spec.pheromone.input_height,
        config.episode.pheromone_window
    );
    Ok(net)
}

fn run_batch(
    policy: PolicyArg,
    net: Option<&Network<f64>>,
    maps: &[Arc<GridMap>],
    episodes: usize,
    episode_config: &EpisodeConfig,
    seed: u64,
    record_replays: bool,
) -> anyhow::Result<EvalOutcome> {
    let mut episode_config = episode_config.clone();
    let eval_policy = match policy {
        PolicyArg::Piloc => EvalPolicy::Net(net.expect("checkpoint loaded")),
        PolicyArg::Frontier => {
            // The frontier baseline is already rule-based; the recovery
            // fallback applies to network policies only.
            episode_config.fallback_enabled = false;
            EvalPolicy::Frontier
        }
        PolicyArg::Random => {
            episode_config.fallback_enabled = false;
            EvalPolicy::Random
        }
    };
    evaluate::<f64>(eval_policy, maps, episodes, &episode_config, seed, record_replays)
        .context("evaluation failed")
}

pub fn run_eval(args: EvalArgs) -> Result<EvalReport, RunError> {
    let config = effective_config(&args.common)?;
    if args.episodes == 0 {
        return Err(RunError::Usage("--episodes must be at least 1".into()));
    }
    if args.policy == PolicyArg::Piloc && args.checkpoint.is_none() {
        return Err(RunError::Usage(
            "--policy piloc requires --checkpoint".into(),
        ));
    }
    let maps = load_maps(&args.maps)?;
    let net = match args.policy {
        PolicyArg::Piloc => Some(load_net_for(
            args.checkpoint.as_ref().expect("checked above"),
            &maps,
            &config,
        )?),
        _ => None,
    };
    let seed = args.common.seed.unwrap_or(0);
    let outcome = run_batch(
        args.policy,
        net.as_ref(),
        &maps,
        args.episodes,
        &config.episode_config(),
        seed,
        !args.no_replays,
    )?;

    ensure_dir(&args.out)?;
    echo_config(&args.out, &config)?;
    let policy_name = format!("{:?}", args.policy).to_lowercase();
    let report = EvalReport {
        policy: policy_name.clone(),
        episodes: args.episodes,
        seed,
        metrics: outcome.metrics.clone(),
        results: outcome.results.clone(),
    };
    write_atomic(
        &args.out.join("metrics.json"),
        serde_json::to_string_pretty(&report)
            .context("serializing metrics")?
            .as_bytes(),
    )?;
    if !args.no_replays {
        let replay_dir = args.out.join("replays");
        ensure_dir(&replay_dir)?;
        for (i, replay) in outcome.replays.iter().enumerate() {
            write_atomic(
                &replay_dir.join(format!("ep_{i:04}.jsonl")),
                replay.to_lines().as_bytes(),
            )?;
        }
    }
    println!("{}", metrics_table_header());
    println!("{}", metrics_row(&policy_name, &outcome.metrics));
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub rows: Vec<(String, BatchMetrics)>,
}

pub fn run_ablate(args: AblateArgs) -> Result<AblationReport, RunError> {
    let config = effective_config(&args.common)?;
    let maps = load_maps(&args.maps)?;
    let seed = args.common.seed.unwrap_or(0);
    let mut rows = Vec::new();
    for (name, pheromone, comms, file) in ABLATION_ROWS {
        let path = args.checkpoints.join(file);
        let net = load_net_for(&path, &maps, &config)?;
        let episode_config = EpisodeConfig {
            pheromone_enabled: pheromone,
            comms_enabled: comms,
            ..config.episode_config()
        };
        let outcome = run_batch(
            PolicyArg::Piloc,
            Some(&net),
            &maps,
            args.episodes,
            &episode_config,
            seed,
            false,
        )?;
        rows.push((name.to_string(), outcome.metrics));
    }
    ensure_dir(&args.out)?;
    echo_config(&args.out, &config)?;
    let report = AblationReport { rows };
    write_atomic(
        &args.out.join("ablation.json"),
        serde_json::to_string_pretty(&report)
            .context("serializing ablation table")?
            .as_bytes(),
    )?;
    println!("{}", metrics_table_header());
    for (name, metrics) in &report.rows {
        println!("{}", metrics_row(name, metrics));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleReport {
    pub rows: Vec<(usize, BatchMetrics)>,
}

pub fn run_scale(args: ScaleArgs) -> Result<ScaleReport, RunError> {
    let config = effective_config(&args.common)?;
    let counts: Vec<usize> = args
        .agent_counts
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| RunError::Usage(format!("bad --agent-counts \"{}\"", args.agent_counts)))?;
    if counts.is_empty() || counts.contains(&0) {
        return Err(RunError::Usage("agent counts must be positive".into()));
    }
    let maps = load_maps(&args.maps)?;
    let net = load_net_for(&args.checkpoint, &maps, &config)?;
    let seed = args.common.seed.unwrap_or(0);
    let mut rows = Vec::new();
    for &n in &counts {
        let episode_config = EpisodeConfig {
            num_agents: n,
            ..config.episode_config()
        };
        let outcome = run_batch(
            PolicyArg::Piloc,
            Some(&net),
            &maps,
            args.episodes,
            &episode_config,
            seed,
            false,
        )?;
        rows.push((n, outcome.metrics));
    }
    ensure_dir(&args.out)?;
    echo_config(&args.out, &config)?;
    let report = ScaleReport { rows };
    write_atomic(
        &args.out.join("scalability.json"),
        serde_json::to_string_pretty(&report)
            .context("serializing scalability table")?
            .as_bytes(),
    )?;
    println!("{}", metrics_table_header());
    for (n, metrics) in &report.rows {
        println!("{}", metrics_row(&format!("{n} agents"), metrics));
    }
    Ok(report)
}
