//! Inter-arrival distributions for the renewal clock.
//!
//! Survival functions are evaluated directly (never as `1 - cdf`) so that
//! hazards stay accurate deep into the tail.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Bisection tolerance for numeric inversions.
pub const INVERSION_TOL: f64 = 1e-12;

/// Distribution of the time between two consecutive price jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RenewalDist {
    Exponential {
        rate: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// Piecewise-linear CDF through `(knots[i], cdf[i])`; `knots[0] = 0`,
    /// `cdf[0] = 0` and `cdf[last] = 1`.
    Empirical {
        knots: Vec<f64>,
        cdf: Vec<f64>,
    },
}

impl RenewalDist {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        match self {
            RenewalDist::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad("exponential rate must be positive");
                }
            }
            RenewalDist::Weibull { shape, scale } => {
                if !(shape.is_finite() && *shape > 0.0 && scale.is_finite() && *scale > 0.0) {
                    return bad("weibull shape and scale must be positive");
                }
            }
            RenewalDist::Gamma { shape, rate } => {
                if !(shape.is_finite() && *shape > 0.0 && rate.is_finite() && *rate > 0.0) {
                    return bad("gamma shape and rate must be positive");
                }
            }
            RenewalDist::Empirical { knots, cdf } => {
                if knots.len() < 2 || knots.len() != cdf.len() {
                    return bad("empirical cdf needs >= 2 matching knots");
                }
                if knots[0] != 0.0 || cdf[0] != 0.0 {
                    return bad("empirical cdf must start at (0, 0)");
                }
                if (cdf[cdf.len() - 1] - 1.0).abs() > 1e-12 {
                    return bad("empirical cdf must end at 1");
                }
                for w in knots.windows(2) {
                    if !(w[1] > w[0]) {
                        return bad("empirical knots must be strictly increasing");
                    }
                }
                for w in cdf.windows(2) {
                    if w[1] < w[0] {
                        return bad("empirical cdf must be nondecreasing");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            RenewalDist::Empirical { knots, cdf } => {
                let n = knots.len();
                if s >= knots[n - 1] {
                    return 1.0;
                }
                let k = knots.partition_point(|&x| x <= s);
                let (x0, x1) = (knots[k - 1], knots[k]);
                let w = (s - x0) / (x1 - x0);
                cdf[k - 1] + w * (cdf[k] - cdf[k - 1])
            }
            _ => 1.0 - self.survival(s),
        }
    }

    pub fn survival(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        match self {
            RenewalDist::Exponential { rate } => (-rate * s).exp(),
            RenewalDist::Weibull { shape, scale } => (-(s / scale).powf(*shape)).exp(),
            RenewalDist::Gamma { shape, rate } => gamma_ur(*shape, rate * s),
            RenewalDist::Empirical { .. } => 1.0 - self.cdf(s),
        }
    }

    pub fn pdf(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match self {
            RenewalDist::Exponential { rate } => rate * (-rate * s).exp(),
            RenewalDist::Weibull { shape, scale } => {
                let z = s / scale;
                if s == 0.0 {
                    return if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                shape / scale * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
            RenewalDist::Gamma { shape, rate } => {
                if s == 0.0 {
                    return if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        *rate
                    } else {
                        0.0
                    };
                }
                let ln = shape * rate.ln() + (shape - 1.0) * s.ln() - rate * s - ln_gamma(*shape);
                ln.exp()
            }
            RenewalDist::Empirical { knots, cdf } => {
                let n = knots.len();
                if s >= knots[n - 1] {
                    return 0.0;
                }
                let k = knots.partition_point(|&x| x <= s);
                (cdf[k] - cdf[k - 1]) / (knots[k] - knots[k - 1])
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            RenewalDist::Exponential { rate } => 1.0 / rate,
            RenewalDist::Weibull { shape, scale } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
            RenewalDist::Gamma { shape, rate } => shape / rate,
            RenewalDist::Empirical { knots, cdf } => knots
                .windows(2)
                .zip(cdf.windows(2))
                .map(|(x, c)| 0.5 * (x[0] + x[1]) * (c[1] - c[0]))
                .sum(),
        }
    }

    /// Smallest `s` with `cdf(s) >= p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        let p = p.clamp(0.0, 1.0);
        match self {
            RenewalDist::Exponential { rate } => Ok(-(-p).ln_1p() / rate),
            RenewalDist::Weibull { shape, scale } => Ok(scale * (-(-p).ln_1p()).powf(1.0 / shape)),
            _ => invert_decreasing(|x| self.survival(x), 1.0 - p, 0.0),
        }
    }
}

/// Solves `f(x) = target` for a nonincreasing `f` with `f(start) >= target`,
/// by doubling for a bracket and then bisecting to [`INVERSION_TOL`].
pub(crate) fn invert_decreasing(f: impl Fn(f64) -> f64, target: f64, start: f64) -> Result<f64> {
    let mut lo = start;
    let mut step = 1.0_f64.max(start);
    let mut hi = start + step;
    let mut guard = 0;
    while f(hi) > target {
        lo = hi;
        step *= 2.0;
        hi = start + step;
        guard += 1;
        if guard > 200 || !hi.is_finite() {
            return Err(Error::SamplerFailure { s: start });
        }
    }
    while hi - lo > INVERSION_TOL * (1.0 + lo.abs()) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
