//! Market-making laboratory for a Markov-renewal mid-price model with a Cox
//! trade flow.
//!
//! The crate covers the full loop: simulate prices and trades, solve the
//! model's integro-PDEs on a characteristic-aligned `(t, s)` lattice, turn
//! the solved fields into quoting policies, backtest them by Monte Carlo and
//! calibrate every model primitive from an event tape.

pub mod calibration;
pub mod error;
pub mod flow;
pub mod model;
pub mod pde;
pub mod policy;
pub mod rng;
pub mod simulator;
pub mod stats;

#[doc(hidden)]
pub mod testing;

pub use error::{Error, Result};
