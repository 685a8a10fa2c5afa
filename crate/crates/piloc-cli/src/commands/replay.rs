//! `piloc replay`: render a replay log as character-grid frames with a
//! pheromone heat overlay.
//!
//! The pheromone field is reconstructed tick by tick from the recorded
//! agent positions using the deposit-then-evaporate rule and the field
//! parameters in the log header.

use std::fmt::Write as _;

use anyhow::Context;

use piloc_core::gridmap::{CellKind, GridMap, Position};
use piloc_core::pheromone::PheromoneField;
use piloc_core::replay::ReplayLog;

use super::util::write_atomic;
use crate::{ReplayArgs, RunError};

pub fn run(args: ReplayArgs) -> Result<(), RunError> {
    let text = std::fs::read_to_string(&args.log)
        .with_context(|| format!("reading {}", args.log.display()))?;
    let log = ReplayLog::parse(&text).context("parsing replay log")?;
    let frames = render(&log)?;
    match &args.out {
        Some(path) => {
            write_atomic(path, frames.as_bytes())?;
            println!("wrote {} frames to {}", log.ticks.len(), path.display());
        }
        None => print!("{frames}"),
    }
    Ok(())
}

pub fn render(log: &ReplayLog) -> anyhow::Result<String> {
    let map = GridMap::parse(&log.header.map_text).context("map embedded in replay header")?;
    let (w, h) = (map.width(), map.height());
    let mut field = PheromoneField::<f64>::new(
        w,
        h,
        log.header.pheromone_max,
        log.header.evaporation_rate,
    );
    let mut out = String::new();
    writeln!(
        out,
        "replay: policy={} seed={} agents={} targets={} step_limit={}",
        log.header.policy,
        log.header.seed,
        log.header.num_agents,
        log.header.num_targets,
        log.header.step_limit
    )?;
    writeln!(
        out,
        "legend: '#' obstacle, '.' free, '1'-'9' pheromone level, A.. agents (lowercase when on a target), '*' target"
    )?;
    for tick in &log.ticks {
        if log.header.pheromone_enabled {
            let positions: Vec<Position> = tick
                .agents
                .iter()
                .map(|&(x, y)| Position::new(x, y))
                .collect();
            field.deposit(&positions);
            field.evaporate();
        }
        writeln!(out)?;
        let found: usize = tick.detections.len();
        writeln!(
            out,
            "--- tick {} | live targets {} | detections {} | fallback {:?} ---",
            tick.tick,
            tick.targets.len(),
            found,
            tick.fallback
        )?;
        let mut grid: Vec<char> = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let pos = Position::new(x, y);
                let ch = match map.cell(pos) {
                    Some(CellKind::Obstacle) => '#',
                    _ => {
                        let p = field.get(pos) / log.header.pheromone_max;
                        if p < 1e-3 {
                            '.'
                        } else {
                            let level = ((p * 9.0).ceil() as u32).clamp(1, 9);
                            char::from_digit(level, 10).unwrap()
                        }
                    }
                };
                grid.push(ch);
            }
        }
        for &(x, y) in &tick.targets {
            grid[y * w + x] = '*';
        }
        for (i, &(x, y)) in tick.agents.iter().enumerate() {
            let letter = (b'A' + (i % 26) as u8) as char;
            let on_target = tick.targets.contains(&(x, y));
            grid[y * w + x] = if on_target {
                letter.to_ascii_lowercase()
            } else {
                letter
            };
        }
        for y in 0..h {
            let row: String = grid[y * w..(y + 1) * w].iter().collect();
            writeln!(out, "{row}")?;
        }
    }
    writeln!(out)?;
    writeln!(
        out,
        "result: success={} steps={} targets_found={}/{}",
        log.result.success, log.result.steps, log.result.targets_found, log.result.targets_total
    )?;
    Ok(out)
}
