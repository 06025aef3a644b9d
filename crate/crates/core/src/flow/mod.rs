//! Marked Cox trade flow subordinated to the price state, fill-size laws and
//! the event tape format.

mod fill;
mod intensity;
mod tape;
mod trades;

pub use fill::FillDist;
pub use intensity::TradeIntensitySpec;
pub use tape::{EventKind, EventTape, TapeRow, TAPE_HEADER};
pub(crate) use tape::csv_err;
pub use trades::{compensator, simulate_trades, JumpEvent, PricePath, TradeEvent};

use crate::model::{MarketModel, Side};

/// `(1 ± rho) / 2 * lambda(s)`, with the frozen-boundary closure.
pub fn side_intensity(model: &MarketModel, side: Side, s: f64) -> f64 {
    model.side_intensity(side, s)
}

/// Draws an executed quantity in `{0, ..., L}`.
pub fn draw_fill<R: rand::Rng + ?Sized>(fill: &FillDist, rng: &mut R) -> u32 {
    fill.draw(rng)
}
