//! Rectangular occupancy grids whose free cells form one 4-connected region.
//!
//! Maps are generated procedurally (seeded random obstacles plus a
//! connectivity repair pass) or loaded from a plain-text format:
//! a `"W H"` header line followed by `H` rows of exactly `W` characters,
//! `'#'` for obstacles and `'.'` for free cells, each row terminated by
//! `'\n'`. The writer output is canonical byte-for-byte so fixtures can be
//! checksummed.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum width and height of a valid map.
pub const MIN_DIM: usize = 5;
/// Highest requested obstacle density the generator accepts; connectivity
/// repair is unreliable beyond this.
pub const MAX_GEN_DENSITY: f64 = 0.45;

/// Occupancy of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Obstacle,
    Free,
}

/// A cell coordinate; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: usize,
    pub y: usize,
}

impl Position {
    pub fn new(x: usize, y: usize) -> Self {
        Position { x, y }
    }

    /// Chebyshev (chessboard) distance.
    pub fn chebyshev(self, other: Position) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    /// Squared Euclidean distance (exact in integers).
    pub fn euclidean_sq(self, other: Position) -> u64 {
        let dx = self.x.abs_diff(other.x) as u64;
        let dy = self.y.abs_diff(other.y) as u64;
        dx * dx + dy * dy
    }
}

// Row-major order: by row first, then column. Used for deterministic
// tie-breaking throughout the crate.
impl Ord for Position {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Position {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridMapError {
    #[error("map must be at least {MIN_DIM}x{MIN_DIM}, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("obstacle density {0} outside [0, {MAX_GEN_DENSITY}]")]
    BadDensity(String),
    #[error("missing or malformed header line, expected \"W H\"")]
    BadHeader,
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("expected {expected} rows, got {got}")]
    RowCount { expected: usize, got: usize },
    #[error("map has no free cells")]
    NoFreeCells,
    #[error("free region is not 4-connected")]
    Disconnected,
}

/// Immutable occupancy grid. Free cells are guaranteed non-empty and
/// 4-connected; moves off the map edge behave like obstacle collisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
}

impl GridMap {
    /// Validate dimensions, free-cell existence and connectivity.
    pub fn from_cells(
        width: usize,
        height: usize,
        cells: Vec<CellKind>,
    ) -> Result<Self, GridMapError> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(GridMapError::TooSmall { width, height });
        }
        assert_eq!(cells.len(), width * height, "cell buffer size mismatch");
        if !cells.contains(&CellKind::Free) {
            return Err(GridMapError::NoFreeCells);
        }
        if !free_region_connected(width, height, &cells) {
            return Err(GridMapError::Disconnected);
        }
        Ok(GridMap {
            width,
            height,
            cells,
        })
    }

    /// Generate a map with roughly `density` obstacles. Obstacles are placed
    /// independently at random, then a repair pass carves the shortest
    /// corridors between disconnected free components, so the achieved
    /// density can fall slightly below the request.
    pub fn generate(
        width: usize,
        height: usize,
        density: f64,
        seed: u64,
    ) -> Result<Self, GridMapError> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(GridMapError::TooSmall { width, height });
        }
        if !(0.0..=MAX_GEN_DENSITY).contains(&density) {
            return Err(GridMapError::BadDensity(format!("{density}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<CellKind> = (0..width * height)
            .map(|_| {
                if rng.gen::<f64>() < density {
                    CellKind::Obstacle
                } else {
                    CellKind::Free
                }
            })
            .collect();
        if !cells.contains(&CellKind::Free) {
            cells[(height / 2) * width + width / 2] = CellKind::Free;
        }
        connect_free_region(width, height, &mut cells);
        GridMap::from_cells(width, height, cells)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn in_bounds(&self, pos: Position) -> bool {
        pos.x < self.width && pos.y < self.height
    }

    pub fn index(&self, pos: Position) -> usize {
        debug_assert!(self.in_bounds(pos));
        pos.y * self.width + pos.x
    }

    /// Cell kind at `pos`, or `None` out of bounds.
    pub fn cell(&self, pos: Position) -> Option<CellKind> {
        self.in_bounds(pos).then(|| self.cells[self.index(pos)])
    }

    /// True iff `pos` is in bounds and free. Out-of-bounds queries return
    /// false rather than erroring (border acts like an obstacle).
    pub fn is_free(&self, pos: Position) -> bool {
        self.cell(pos) == Some(CellKind::Free)
    }

    /// In-bounds free cells among the 4 von-Neumann neighbors, in the fixed
    /// order left, up, right, down.
    pub fn neighbors4(&self, pos: Position) -> Vec<Position> {
        neighbors4_raw(self.width, self.height, pos)
            .into_iter()
            .filter(|&p| self.is_free(p))
            .collect()
    }

    /// All free cells in row-major order.
    pub fn free_cells(&self) -> Vec<Position> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cells[y * self.width + x] == CellKind::Free {
                    out.push(Position::new(x, y));
                }
            }
        }
        out
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == CellKind::Free).count()
    }

    pub fn obstacle_fraction(&self) -> f64 {
        1.0 - self.free_count() as f64 / self.cells.len() as f64
    }

    /// Serialize to the canonical text format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1) + 16);
        out.push_str(&format!("{} {}\n", self.width, self.height));
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(match self.cells[y * self.width + x] {
                    CellKind::Obstacle => '#',
                    CellKind::Free => '.',
                });
            }
            out.push('\n');
        }
        out
    }

    /// Parse the text format and validate all map invariants. A missing
    /// final newline is tolerated; anything else about the shape is not.
    pub fn parse(text: &str) -> Result<Self, GridMapError> {
        let mut lines: Vec<&str> = text.split('\n').collect();
        if lines.last() == Some(&"") {
            lines.pop();
        }
        let header = lines.first().ok_or(GridMapError::BadHeader)?;
        let mut parts = header.split(' ');
        let width: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(GridMapError::BadHeader)?;
        let height: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(GridMapError::BadHeader)?;
        if parts.next().is_some() {
            return Err(GridMapError::BadHeader);
        }
        if width < MIN_DIM || height < MIN_DIM {
            return Err(GridMapError::TooSmall { width, height });
        }
        let rows = &lines[1..];
        if rows.len() != height {
            return Err(GridMapError::RowCount {
                expected: height,
                got: rows.len(),
            });
        }
        let mut cells = Vec::with_capacity(width * height);
        for (y, row) in rows.iter().enumerate() {
            let n = row.chars().count();
            if n != width {
                return Err(GridMapError::RaggedRow {
                    row: y,
                    got: n,
                    expected: width,
                });
            }
            for (x, ch) in row.chars().enumerate() {
                cells.push(match ch {
                    '#' => CellKind::Obstacle,
                    '.' => CellKind::Free,
                    _ => return Err(GridMapError::UnknownChar { ch, row: y, col: x }),
                });
            }
        }
        GridMap::from_cells(width, height, cells)
    }

    pub fn into_arc(self) -> Arc<GridMap> {
        Arc::new(self)
    }
}

/// In-bounds von-Neumann neighbors regardless of occupancy, in the fixed
/// order left, up, right, down.
pub fn neighbors4_raw(width: usize, height: usize, pos: Position) -> Vec<Position> {
    let mut out = Vec::with_capacity(4);
    if pos.x > 0 {
        out.push(Position::new(pos.x - 1, pos.y));
    }
    if pos.y > 0 {
        out.push(Position::new(pos.x, pos.y - 1));
    }
    if pos.x + 1 < width {
        out.push(Position::new(pos.x + 1, pos.y));
    }
    if pos.y + 1 < height {
        out.push(Position::new(pos.x, pos.y + 1));
    }
    out
}

fn free_region_connected(width: usize, height: usize, cells: &[CellKind]) -> bool {
    let start = match cells.iter().position(|&c| c == CellKind::Free) {
        Some(i) => i,
        None => return false,
    };
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    let mut reached = 0usize;
    while let Some(i) = queue.pop_front() {
        reached += 1;
        let pos = Position::new(i % width, i / width);
        for n in neighbors4_raw(width, height, pos) {
            let j = n.y * width + n.x;
            if !seen[j] && cells[j] == CellKind::Free {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    reached == cells.iter().filter(|&&c| c == CellKind::Free).count()
}

/// Label free cells by connected component; returns (labels, component count).
/// Obstacle cells get usize::MAX.
fn free_components(width: usize, height: usize, cells: &[CellKind]) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; cells.len()];
    let mut next = 0usize;
    for start in 0..cells.len() {
        if cells[start] != CellKind::Free || label[start] != usize::MAX {
            continue;
        }
        let mut queue = VecDeque::new();
        label[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let pos = Position::new(i % width, i / width);
            for n in neighbors4_raw(width, height, pos) {
                let j = n.y * width + n.x;
                if cells[j] == CellKind::Free && label[j] == usize::MAX {
                    label[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    (label, next)
}

/// Carve the shortest obstacle corridors until the free region is a single
/// component. Deterministic: BFS from the largest component in row-major
/// order, merging the first foreign component reached each round.
fn connect_free_region(width: usize, height: usize, cells: &mut [CellKind]) {
    loop {
        let (labels, count) = free_components(width, height, cells);
        if count <= 1 {
            return;
        }
        let mut sizes = vec![0usize; count];
        for &l in &labels {
            if l != usize::MAX {
                sizes[l] += 1;
            }
        }
        let main = sizes
            .iter()
            .enumerate()
            .max_by_key(|&(i, &s)| (s, usize::MAX - i))
            .map(|(i, _)| i)
            .expect("at least one component");

        // Multi-source BFS from the main component across every cell;
        // stop at the first cell belonging to a different free component.
        let mut parent = vec![usize::MAX; cells.len()];
        let mut seen = vec![false; cells.len()];
        let mut queue = VecDeque::new();
        for i in 0..cells.len() {
            if labels[i] == main {
                seen[i] = true;
                queue.push_back(i);
            }
        }
        let mut hit = None;
        'bfs: while let Some(i) = queue.pop_front() {
            let pos = Position::new(i % width, i / width);
            for n in neighbors4_raw(width, height, pos) {
                let j = n.y * width + n.x;
                if seen[j] {
                    continue;
                }
                seen[j] = true;
                parent[j] = i;
                if labels[j] != usize::MAX && labels[j] != main {
                    hit = Some(j);
                    break 'bfs;
                }
                queue.push_back(j);
            }
        }
        let mut i = hit.expect("a foreign component is always reachable");
        while i != usize::MAX {
            if cells[i] == CellKind::Obstacle {
                cells[i] = CellKind::Free;
            }
            i = parent[i];
        }
    }
}
