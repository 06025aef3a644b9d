use serde::{Deserialize, Serialize};

/// The Markov triple driving every intensity, plus the clock.
///
/// The mid-price is kept as an integer number of ticks away from an offset so
/// that it stays exactly on the `2 * delta` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub t: f64,
    pub tick: i64,
    /// Direction of the last jump, `+1` or `-1`.
    pub direction: i64,
    /// Time elapsed since the last jump.
    pub elapsed: f64,
}

impl MarketState {
    pub fn new(t: f64, tick: i64, direction: i64, elapsed: f64) -> Self {
        debug_assert!(direction == 1 || direction == -1);
        debug_assert!(elapsed >= 0.0);
        MarketState {
            t,
            tick,
            direction,
            elapsed,
        }
    }

    pub fn price(&self, delta: f64, offset: f64) -> f64 {
        offset + 2.0 * delta * self.tick as f64
    }

    /// Moves the clock forward by `dt` without an event.
    pub fn advance(&mut self, dt: f64) {
        self.t += dt;
        self.elapsed += dt;
    }

    /// Applies a one-tick jump in absolute direction `new_direction`.
    pub fn jump(&mut self, new_direction: i64) {
        self.tick += new_direction;
        self.direction = new_direction;
        self.elapsed = 0.0;
    }
}

/// Agent wealth and inventory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PortfolioState {
    pub cash: f64,
    pub inventory: i64,
}

impl PortfolioState {
    /// Inventory signed by the last jump direction.
    pub fn strong_inventory(&self, direction: i64) -> i64 {
        direction * self.inventory
    }
}
