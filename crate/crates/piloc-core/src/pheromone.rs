//! Shared environmental pheromone field: presence-based deposit with a
//! concentration cap, multiplicative evaporation, and windowed queries.
//!
//! Per tick the order is fixed: deposit (then clamp), then evaporate. A
//! freshly visited cell therefore ends the tick at no more than
//! `p_max * (1 - lambda)`.

use crate::gridmap::Position;
use crate::scalar::Scalar;

/// Default concentration cap.
pub const DEFAULT_P_MAX: f64 = 10.0;
/// Default per-tick evaporation rate.
pub const DEFAULT_LAMBDA: f64 = 0.02;

/// Dense per-cell pheromone concentrations, same dimensions as the map.
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneField<T> {
    width: usize,
    height: usize,
    cells: Vec<T>,
    p_max: T,
    lambda: T,
}

impl<T: Scalar> PheromoneField<T> {
    /// All-zero field.
    pub fn new(width: usize, height: usize, p_max: T, lambda: T) -> Self {
        assert!(p_max > T::zero(), "p_max must be positive");
        assert!(
            lambda >= T::zero() && lambda < T::one(),
            "lambda must be in [0, 1)"
        );
        PheromoneField {
            width,
            height,
            cells: vec![T::zero(); width * height],
            p_max,
            lambda,
        }
    }

    pub fn with_defaults(width: usize, height: usize) -> Self {
        Self::new(width, height, T::of(DEFAULT_P_MAX), T::of(DEFAULT_LAMBDA))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn p_max(&self) -> T {
        self.p_max
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn get(&self, pos: Position) -> T {
        assert!(pos.x < self.width && pos.y < self.height);
        self.cells[pos.y * self.width + pos.x]
    }

    /// Direct write, primarily for tests and replay tooling.
    pub fn set(&mut self, pos: Position, value: T) {
        assert!(pos.x < self.width && pos.y < self.height);
        self.cells[pos.y * self.width + pos.x] = value.min(self.p_max).max(T::zero());
    }

    /// Add one unit per agent present (co-located agents stack), then clamp
    /// every touched cell to `p_max`.
    pub fn deposit(&mut self, agent_positions: &[Position]) {
        for &pos in agent_positions {
            assert!(pos.x < self.width && pos.y < self.height);
            let i = pos.y * self.width + pos.x;
            self.cells[i] = self.cells[i] + T::one();
        }
        for &pos in agent_positions {
            let i = pos.y * self.width + pos.x;
            if self.cells[i] > self.p_max {
                self.cells[i] = self.p_max;
            }
        }
    }

    /// Multiply every cell by `1 - lambda`.
    pub fn evaporate(&mut self) {
        let keep = T::one() - self.lambda;
        for c in &mut self.cells {
            *c = *c * keep;
        }
    }

    /// Copy of the `l x l` patch centered on `center`; out-of-map entries are
    /// filled with `p_max` so that looking off the map reads as maximally
    /// unattractive. `l` must be odd.
    pub fn window(&self, center: Position, l: usize) -> Vec<T> {
        assert!(l % 2 == 1, "window side must be odd");
        let r = (l / 2) as i64;
        let mut out = Vec::with_capacity(l * l);
        for dy in -r..=r {
            for dx in -r..=r {
                let x = center.x as i64 + dx;
                let y = center.y as i64 + dy;
                if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                    out.push(self.cells[y as usize * self.width + x as usize]);
                } else {
                    out.push(self.p_max);
                }
            }
        }
        out
    }

    /// Sum of concentrations over the in-bounds `(2v+1) x (2v+1)` Chebyshev
    /// window around `center`.
    pub fn window_sum(&self, center: Position, v: usize) -> T {
        let r = v as i64;
        let mut sum = T::zero();
        for dy in -r..=r {
            for dx in -r..=r {
                let x = center.x as i64 + dx;
                let y = center.y as i64 + dy;
                if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                    sum = sum + self.cells[y as usize * self.width + x as usize];
                }
            }
        }
        sum
    }

    pub fn max_value(&self) -> T {
        self.cells.iter().cloned().fold(T::zero(), T::max)
    }
}
