//! Reference parameter sets shared by unit tests, integration tests and the
//! CLI examples.

use crate::flow::{FillDist, TradeIntensitySpec};
use crate::model::{ModelParams, RenewalDist};

/// Mean-reverting model with a Weibull(1.5) continuation clock and an
/// exponential reversal clock, alpha = -0.75, rho = -0.5, two-lot orders.
pub fn weibull_exp_params() -> ModelParams {
    ModelParams {
        delta: 0.5,
        alpha: -0.75,
        dist_plus: RenewalDist::Weibull {
            shape: 1.5,
            scale: 1.0,
        },
        dist_minus: RenewalDist::Exponential { rate: 1.0 },
        lambda_spec: TradeIntensitySpec::ExpDecay {
            base: 0.5,
            amplitude: 2.0,
            decay: 1.5,
        },
        rho: -0.5,
        fill_plus: FillDist::new(vec![0.2, 0.3, 0.5]).expect("valid pmf"),
        fill_minus: FillDist::new(vec![0.3, 0.4, 0.3]).expect("valid pmf"),
        lot_size: 2,
        fee: 0.05,
        eta: 0.0,
        horizon: 5.0,
    }
}

/// Both clocks exponential with the same rate: jumps form a Poisson process
/// of intensity `rate` and hazards are `(1 ± alpha) / 2 * rate`.
pub fn symmetric_exp_params(alpha: f64, rate: f64) -> ModelParams {
    ModelParams {
        alpha,
        dist_plus: RenewalDist::Exponential { rate },
        dist_minus: RenewalDist::Exponential { rate },
        ..weibull_exp_params()
    }
}

/// Weibull clocks with shapes 1.5 (continuation) and 0.8 (reversal); the
/// reversal hazard is unbounded at zero, so this set is only used pointwise.
pub fn weibull_mix_params() -> ModelParams {
    ModelParams {
        dist_plus: RenewalDist::Weibull {
            shape: 1.5,
            scale: 1.0,
        },
        dist_minus: RenewalDist::Weibull {
            shape: 0.8,
            scale: 0.7,
        },
        ..weibull_exp_params()
    }
}
