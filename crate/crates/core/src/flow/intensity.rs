use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trade arrival rate as a function of the elapsed time since the last jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TradeIntensitySpec {
    Constant {
        rate: f64,
    },
    /// `base + amplitude * exp(-decay * s)`.
    ExpDecay {
        base: f64,
        amplitude: f64,
        decay: f64,
    },
    /// Linear interpolation through `(s[i], rate[i])`, flat outside the table.
    Table {
        s: Vec<f64>,
        rate: Vec<f64>,
    },
}

impl TradeIntensitySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        match self {
            TradeIntensitySpec::Constant { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return bad("constant trade rate must be >= 0");
                }
            }
            TradeIntensitySpec::ExpDecay {
                base,
                amplitude,
                decay,
            } => {
                if !(base.is_finite() && *base >= 0.0) {
                    return bad("exp_decay base must be >= 0");
                }
                if !(amplitude.is_finite() && decay.is_finite() && *decay >= 0.0) {
                    return bad("exp_decay amplitude/decay must be finite, decay >= 0");
                }
                if base + amplitude.min(0.0) < 0.0 {
                    return bad("exp_decay intensity must stay nonnegative");
                }
            }
            TradeIntensitySpec::Table { s, rate } => {
                if s.is_empty() || s.len() != rate.len() {
                    return bad("table intensity needs matching nonempty s/rate");
                }
                if s.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("table s must be strictly increasing");
                }
                if rate.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return bad("table rates must be finite and >= 0");
                }
            }
        }
        Ok(())
    }

    pub fn rate(&self, s: f64) -> f64 {
        match self {
            TradeIntensitySpec::Constant { rate } => *rate,
            TradeIntensitySpec::ExpDecay {
                base,
                amplitude,
                decay,
            } => base + amplitude * (-decay * s).exp(),
            TradeIntensitySpec::Table { s: xs, rate } => {
                let n = xs.len();
                if s <= xs[0] {
                    return rate[0];
                }
                if s >= xs[n - 1] {
                    return rate[n - 1];
                }
                let k = xs.partition_point(|&x| x <= s);
                let w = (s - xs[k - 1]) / (xs[k] - xs[k - 1]);
                rate[k - 1] + w * (rate[k] - rate[k - 1])
            }
        }
    }

    /// Supremum of the rate over `[0, s_max]`.
    pub fn max_rate(&self, s_max: f64) -> f64 {
        match self {
            TradeIntensitySpec::Constant { rate } => *rate,
            TradeIntensitySpec::ExpDecay {
                base,
                amplitude,
                decay,
            } => {
                if *amplitude >= 0.0 {
                    base + amplitude
                } else {
                    base + amplitude * (-decay * s_max).exp()
                }
            }
            TradeIntensitySpec::Table { s, rate } => {
                let mut m = self.rate(0.0).max(self.rate(s_max));
                for (x, r) in s.iter().zip(rate) {
                    if *x <= s_max {
                        m = m.max(*r);
                    }
                }
                m
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_rate_dominates_samples() {
        let specs = [
            TradeIntensitySpec::Constant { rate: 1.7 },
            TradeIntensitySpec::ExpDecay {
                base: 0.5,
                amplitude: 2.0,
                decay: 1.5,
            },
            TradeIntensitySpec::ExpDecay {
                base: 3.0,
                amplitude: -1.0,
                decay: 0.5,
            },
            TradeIntensitySpec::Table {
                s: vec![0.5, 1.0, 2.0],
                rate: vec![1.0, 4.0, 0.5],
            },
        ];
        for spec in &specs {
            spec.validate().unwrap();
            let bound = spec.max_rate(5.0);
            for k in 0..=5000 {
                assert!(spec.rate(k as f64 * 1e-3) <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn table_interpolates() {
        let t = TradeIntensitySpec::Table {
            s: vec![0.0, 1.0],
            rate: vec![1.0, 3.0],
        };
        assert_eq!(t.rate(0.25), 1.5);
        assert_eq!(t.rate(10.0), 3.0);
    }
}
