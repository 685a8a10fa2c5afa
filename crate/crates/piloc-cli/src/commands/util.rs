//! Shared command plumbing: config assembly, map-set loading, atomic
//! writes, and table rendering.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};

use piloc_core::gridmap::GridMap;
use piloc_core::metrics::BatchMetrics;

use crate::config::AppConfig;
use crate::{CommonArgs, RunError};

/// Config file + CLI overrides folded over the built-in defaults.
pub fn effective_config(common: &CommonArgs) -> Result<AppConfig, RunError> {
    let mut config = match &common.config {
        Some(path) => AppConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => AppConfig::default(),
    };
    if let Some(a) = common.agents {
        config.episode.num_agents = a;
    }
    if let Some(t) = common.targets {
        config.episode.num_targets = t;
    }
    if let Some(s) = common.steps {
        config.episode.step_limit = s;
    }
    if common.no_pheromone {
        config.episode.pheromone_enabled = false;
    }
    if common.no_comms {
        config.episode.comms_enabled = false;
    }
    if common.no_fallback {
        config.episode.fallback_enabled = false;
    }
    Ok(config)
}

/// Load every `*.map` file in a directory, sorted by file name; all maps
/// must share one dimension.
pub fn load_maps(dir: &Path) -> anyhow::Result<Vec<Arc<GridMap>>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading map directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "map"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no *.map files in {}", dir.display());
    }
    let mut maps = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let map = GridMap::parse(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        maps.push(map.into_arc());
    }
    let (w, h) = (maps[0].width(), maps[0].height());
    for (map, path) in maps.iter().zip(&paths) {
        if map.width() != w || map.height() != h {
            bail!(
                "map dimensions differ: {} is {}x{}, expected {}x{}",
                path.display(),
                map.width(),
                map.height(),
                w,
                h
            );
        }
    }
    Ok(maps)
}

/// Write via a temp file and rename so partial writes never surface.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn ensure_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Echo the effective config into the output directory.
pub fn echo_config(out: &Path, config: &AppConfig) -> anyhow::Result<()> {
    write_atomic(&out.join("config.toml"), config.to_toml().as_bytes())
}

/// One row of a metrics table.
pub fn metrics_row(label: &str, m: &BatchMetrics) -> String {
    let sv = m
        .step_variance
        .map(|v| format!("{v:10.2}"))
        .unwrap_or_else(|| format!("{:>10}", "-"));
    format!(
        "{label:<14} {:>7.1}% {:>9.2} {sv} {:>8.3}",
        m.success_rate * 100.0,
        m.avg_steps,
        m.avg_targets
    )
}

pub fn metrics_table_header() -> String {
    format!(
        "{:<14} {:>8} {:>9} {:>10} {:>8}",
        "policy", "SR", "AS", "SV", "ANTO"
    )
}
