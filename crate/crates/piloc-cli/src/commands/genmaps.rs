//! `piloc genmaps`: seeded generation of connected map files.

use anyhow::Context;

use piloc_core::gridmap::GridMap;
use piloc_core::seeds;

use super::util::{echo_config, ensure_dir, write_atomic};
use crate::config::AppConfig;
use crate::{GenmapsArgs, RunError};

pub fn run(args: GenmapsArgs) -> Result<(), RunError> {
    let mut config = match &args.config {
        Some(path) => AppConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => AppConfig::default(),
    };
    if let Some(w) = args.width {
        config.map.width = w;
    }
    if let Some(h) = args.height {
        config.map.height = h;
    }
    if let Some(d) = args.density {
        config.map.density = d;
    }
    if args.count == 0 {
        return Err(RunError::Usage("--count must be at least 1".into()));
    }
    ensure_dir(&args.out)?;
    for i in 0..args.count {
        let map = GridMap::generate(
            config.map.width,
            config.map.height,
            config.map.density,
            seeds::derive(args.seed, i as u64),
        )
        .with_context(|| format!("generating map {i}"))?;
        let path = args.out.join(format!("map_{i:04}.map"));
        write_atomic(&path, map.to_text().as_bytes())?;
    }
    echo_config(&args.out, &config)?;
    println!(
        "wrote {} {}x{} maps (density {}) to {}",
        args.count,
        config.map.width,
        config.map.height,
        config.map.density,
        args.out.display()
    );
    Ok(())
}
