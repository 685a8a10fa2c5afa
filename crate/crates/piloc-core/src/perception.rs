//! Per-agent knowledge maps and the three-channel observation encoding.
//!
//! Each agent owns an obstacle map (Unknown / Obstacle / Free) and an
//! exploration map of time marks in `[0, 0.3]` where 0 means "seen this
//! tick". Marks age linearly by [`MARK_STEP`] per tick and saturate at
//! [`MARK_MAX`]. The encoded observation stack feeds the policy network:
//! full-map obstacle and exploration channels plus an `l x l` pheromone
//! patch, all values in `[0, 1]`.

use crate::gridmap::{GridMap, Position};
use crate::pheromone::PheromoneField;
use crate::scalar::Scalar;

/// Saturation value for exploration time marks.
pub const MARK_MAX: f64 = 0.3;
/// Per-tick time-mark increment; saturates after 100 ticks.
pub const MARK_STEP: f64 = 0.003;

/// Obstacle-channel encoding.
pub const ENC_FREE: f64 = 0.0;
pub const ENC_UNKNOWN: f64 = 0.5;
pub const ENC_OBSTACLE: f64 = 1.0;
/// Exploration-channel encoding of never-observed cells.
pub const ENC_UNEXPLORED: f64 = 1.0;
/// History overwrites, most recent first.
pub const ENC_HISTORY: [f64; 3] = [0.9, 0.8, 0.7];

/// What an agent believes about one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occupancy {
    Unknown,
    Obstacle,
    Free,
}

/// One agent's accumulated world knowledge.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeMaps<T> {
    width: usize,
    height: usize,
    occupancy: Vec<Occupancy>,
    /// Time marks; only meaningful where `occupancy != Unknown`.
    marks: Vec<T>,
}

impl<T: Scalar> KnowledgeMaps<T> {
    pub fn new_unknown(width: usize, height: usize) -> Self {
        KnowledgeMaps {
            width,
            height,
            occupancy: vec![Occupancy::Unknown; width * height],
            marks: vec![T::zero(); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn occupancy(&self, pos: Position) -> Occupancy {
        self.occupancy[pos.y * self.width + pos.x]
    }

    pub fn is_explored(&self, pos: Position) -> bool {
        self.occupancy(pos) != Occupancy::Unknown
    }

    /// Time mark, or `None` for unexplored cells.
    pub fn mark(&self, pos: Position) -> Option<T> {
        self.is_explored(pos)
            .then(|| self.marks[pos.y * self.width + pos.x])
    }

    pub fn unknown_count(&self) -> usize {
        self.occupancy
            .iter()
            .filter(|&&o| o == Occupancy::Unknown)
            .count()
    }

    /// Write ground truth for every in-bounds cell within Chebyshev radius
    /// `v` of `center` and zero its time mark. Returns the number of free
    /// cells that were unknown before this call.
    pub fn observe(&mut self, map: &GridMap, center: Position, v: usize) -> usize {
        debug_assert_eq!(map.width(), self.width);
        debug_assert_eq!(map.height(), self.height);
        let r = v as i64;
        let mut newly_free = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let x = center.x as i64 + dx;
                let y = center.y as i64 + dy;
                if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                    continue;
                }
                let pos = Position::new(x as usize, y as usize);
                let i = pos.y * self.width + pos.x;
                let truth = if map.is_free(pos) {
                    Occupancy::Free
                } else {
                    Occupancy::Obstacle
                };
                if self.occupancy[i] == Occupancy::Unknown && truth == Occupancy::Free {
                    newly_free += 1;
                }
                self.occupancy[i] = truth;
                self.marks[i] = T::zero();
            }
        }
        newly_free
    }

    /// Age every explored cell's time mark by [`MARK_STEP`], clamped to
    /// [`MARK_MAX`]. Called once per tick, before the tick's observations so
    /// that freshly observed cells keep a mark of exactly zero.
    pub fn age_marks(&mut self) {
        let step = T::of(MARK_STEP);
        let cap = T::of(MARK_MAX);
        for i in 0..self.marks.len() {
            if self.occupancy[i] != Occupancy::Unknown {
                self.marks[i] = (self.marks[i] + step).min(cap);
            }
        }
    }

    /// Time marks of the explored free cells within Chebyshev radius `v` of
    /// `center` (the inputs to the re-exploration reward).
    pub fn marks_in_window(&self, center: Position, v: usize) -> Vec<T> {
        let r = v as i64;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let x = center.x as i64 + dx;
                let y = center.y as i64 + dy;
                if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                    continue;
                }
                let i = y as usize * self.width + x as usize;
                if self.occupancy[i] == Occupancy::Free {
                    out.push(self.marks[i]);
                }
            }
        }
        out
    }

    /// Merge another agent's knowledge into this one: occupancy union, and
    /// per-cell minimum time mark where both explored.
    ///
    /// Panics if the two maps disagree on Obstacle vs Free for a cell; both
    /// read ground truth, so a conflict indicates a simulator bug.
    pub fn absorb(&mut self, other: &KnowledgeMaps<T>) {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        for i in 0..self.occupancy.len() {
            match (self.occupancy[i], other.occupancy[i]) {
                (_, Occupancy::Unknown) => {}
                (Occupancy::Unknown, o) => {
                    self.occupancy[i] = o;
                    self.marks[i] = other.marks[i];
                }
                (a, b) => {
                    assert_eq!(
                        a, b,
                        "inconsistent occupancy at cell {i}: {a:?} vs {b:?} (simulator bug)"
                    );
                    if other.marks[i] < self.marks[i] {
                        self.marks[i] = other.marks[i];
                    }
                }
            }
        }
    }
}

/// Network input for one agent: two full-map channels plus the pheromone
/// patch, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStack<T> {
    pub height: usize,
    pub width: usize,
    /// Pheromone patch side length.
    pub window: usize,
    pub obstacle: Vec<T>,
    pub exploration: Vec<T>,
    pub pheromone: Vec<T>,
}

/// Encode the observation stack. `history` holds the agent's previous two
/// positions, most recent first. Passing `None` for the field feeds a
/// zeroed pheromone channel (the pheromone-disabled ablation).
pub fn encode<T: Scalar>(
    maps: &KnowledgeMaps<T>,
    pos: Position,
    history: &[Position; 2],
    field: Option<&PheromoneField<T>>,
    l: usize,
) -> ObservationStack<T> {
    let (w, h) = (maps.width, maps.height);
    let mut obstacle = Vec::with_capacity(w * h);
    let mut exploration = Vec::with_capacity(w * h);
    for i in 0..w * h {
        match maps.occupancy[i] {
            Occupancy::Unknown => {
                obstacle.push(T::of(ENC_UNKNOWN));
                exploration.push(T::of(ENC_UNEXPLORED));
            }
            Occupancy::Obstacle => {
                obstacle.push(T::of(ENC_OBSTACLE));
                exploration.push(maps.marks[i] / T::of(MARK_MAX));
            }
            Occupancy::Free => {
                obstacle.push(T::of(ENC_FREE));
                exploration.push(maps.marks[i] / T::of(MARK_MAX));
            }
        }
    }
    // Oldest first so the most recent position wins on overlap.
    for (pi, &p) in [history[1], history[0], pos].iter().enumerate() {
        let value = T::of(ENC_HISTORY[2 - pi]);
        let i = p.y * w + p.x;
        obstacle[i] = value;
        exploration[i] = value;
    }
    let pheromone = match field {
        Some(f) => {
            let p_max = f.p_max();
            f.window(pos, l).into_iter().map(|p| p / p_max).collect()
        }
        None => vec![T::zero(); l * l],
    };
    ObservationStack {
        height: h,
        width: w,
        window: l,
        obstacle,
        exploration,
        pheromone,
    }
}
