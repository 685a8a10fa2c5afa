//! `piloc train`: curriculum training with a checkpoint stream and a
//! line-delimited metrics log.

use std::io::Write;

use anyhow::Context;

use piloc_core::seeds;
use piloc_learn::checkpoint::{self, AdamState};
use piloc_learn::net::Network;
use piloc_learn::trainer::Trainer;

use super::util::{echo_config, effective_config, ensure_dir, load_maps};
use crate::{RunError, TrainArgs};

pub fn run(args: TrainArgs) -> Result<(), RunError> {
    let mut config = effective_config(&args.common)?;
    if let Some(m) = args.max_updates {
        config.train.max_updates = m;
    }
    let seed = args.common.seed.unwrap_or(0);
    let maps = load_maps(&args.maps)?;
    let (h, w) = (maps[0].height(), maps[0].width());
    let spec = config.layer_spec(h, w);
    spec.validate().context("layer spec does not fit the map size")?;

    ensure_dir(&args.out)?;
    echo_config(&args.out, &config)?;

    let net = Network::<f64>::init(spec, seeds::derive(seed, 0x1217))
        .context("initializing network")?;
    let mut trainer = Trainer::new(net, maps, config.episode_config(), config.train_config(seed))
        .context("constructing trainer")?;

    let metrics_path = args.out.join("metrics.jsonl");
    let mut metrics_file = std::io::BufWriter::new(
        std::fs::File::create(&metrics_path)
            .with_context(|| format!("creating {}", metrics_path.display()))?,
    );
    let out_dir = args.out.clone();
    let quiet = args.quiet;
    let reason = trainer
        .run(
            |m| {
                let line = serde_json::to_string(m).expect("metrics serialize");
                let _ = writeln!(metrics_file, "{line}");
                let _ = metrics_file.flush();
                if !quiet {
                    eprintln!(
                        "update {:>5}  N_s {:>4}  return {:>9.2}  SR {:>5.2}  entropy {:.3}",
                        m.update, m.step_limit, m.mean_return, m.success_rate, m.entropy
                    );
                }
            },
            |update, net| {
                let path = out_dir.join(format!("checkpoint_{update:06}.ckpt"));
                if let Err(e) = checkpoint::save_file(&path, net, None) {
                    eprintln!("checkpoint write failed: {e}");
                }
            },
        )
        .context("training run failed")?;

    let final_path = args.out.join("checkpoint_final.ckpt");
    checkpoint::save_file(
        &final_path,
        &trainer.net,
        Some(&AdamState::of(trainer.optimizer())),
    )
    .context("writing final checkpoint")?;
    println!(
        "training stopped ({reason:?}); final checkpoint at {}",
        final_path.display()
    );
    Ok(())
}
