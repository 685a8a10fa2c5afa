//! Non-learning reference policies: frontier exploration and uniform
//! random walk.

use rand::Rng;

use crate::dynamics::{action_towards, Action};
use crate::fallback::astar;
use crate::gridmap::{neighbors4_raw, Position};
use crate::perception::{KnowledgeMaps, Occupancy};
use crate::scalar::Scalar;

/// Uniform over the four actions.
pub fn random_action<R: Rng>(rng: &mut R) -> Action {
    Action::ALL[rng.gen_range(0..4)]
}

/// Known-free cells 4-adjacent to at least one unknown cell, row-major.
pub fn frontier_cells<T: Scalar>(maps: &KnowledgeMaps<T>) -> Vec<Position> {
    let (w, h) = (maps.width(), maps.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = Position::new(x, y);
            if maps.occupancy(p) != Occupancy::Free {
                continue;
            }
            if neighbors4_raw(w, h, p)
                .into_iter()
                .any(|n| maps.occupancy(n) == Occupancy::Unknown)
            {
                out.push(p);
            }
        }
    }
    out
}

/// BFS distances from `pos` over known-free cells.
fn known_free_distances<T: Scalar>(maps: &KnowledgeMaps<T>, pos: Position) -> Vec<usize> {
    let (w, h) = (maps.width(), maps.height());
    let mut dist = vec![usize::MAX; w * h];
    let mut queue = std::collections::VecDeque::new();
    dist[pos.y * w + pos.x] = 0;
    queue.push_back(pos);
    while let Some(p) = queue.pop_front() {
        let d = dist[p.y * w + p.x];
        for n in neighbors4_raw(w, h, p) {
            let i = n.y * w + n.x;
            if dist[i] == usize::MAX && maps.occupancy(n) == Occupancy::Free {
                dist[i] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Frontier exploration: plan to the nearest frontier cell through known
/// free space (ties row-major); with no frontier left, head for the
/// known-free cell with the largest time mark; with nothing reachable, act
/// uniformly at random.
pub fn frontier_action<T: Scalar, R: Rng>(
    maps: &KnowledgeMaps<T>,
    pos: Position,
    rng: &mut R,
) -> Action {
    let (w, h) = (maps.width(), maps.height());
    let dist = known_free_distances(maps, pos);
    let d_of = |p: Position| dist[p.y * w + p.x];

    let goal = {
        let mut best: Option<(usize, Position)> = None;
        for p in frontier_cells(maps) {
            let d = d_of(p);
            if d == usize::MAX || d == 0 {
                continue;
            }
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
        best.map(|(_, p)| p)
    };
    let goal = goal.or_else(|| {
        // Degenerate branch: everything explored; same stale-cell rule as
        // the fallback recovery.
        let mut best: Option<(T, usize, Position)> = None;
        for y in 0..h {
            for x in 0..w {
                let p = Position::new(x, y);
                if p == pos || maps.occupancy(p) != Occupancy::Free {
                    continue;
                }
                let d = d_of(p);
                if d == usize::MAX {
                    continue;
                }
                let mark = maps.mark(p).expect("free cell has a mark");
                let better = match best {
                    None => true,
                    Some((bm, bd, _)) => mark > bm || (mark == bm && d < bd),
                };
                if better {
                    best = Some((mark, d, p));
                }
            }
        }
        best.map(|(_, _, p)| p)
    });

    let Some(goal) = goal else {
        return random_action(rng);
    };
    let traversable = |p: Position| maps.occupancy(p) == Occupancy::Free;
    match astar(w, h, traversable, pos, goal) {
        Some(path) if path.len() >= 2 => {
            action_towards(path[0], path[1]).unwrap_or_else(|| random_action(rng))
        }
        _ => random_action(rng),
    }
}
