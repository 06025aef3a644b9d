//! Mid-price model: parameters, renewal laws, state types and the derived
//! hazard functions.

mod dist;
mod market;
mod params;
mod state;

pub use dist::{RenewalDist, INVERSION_TOL};
pub use market::{MarketModel, TAIL_FLOOR, TRUNCATION_SURVIVAL};
pub use params::{ModelParams, Side, PARAMS_SCHEMA_VERSION};
pub use state::{MarketState, PortfolioState};
