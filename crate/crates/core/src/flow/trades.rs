use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MarketModel, MarketState};
use crate::rng::{exponential, open_unit};

/// A price jump: absolute new direction at `time`, with the elapsed time
/// just before the jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub direction: i64,
    pub elapsed_before: f64,
}

/// A small market order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub time: f64,
    /// Exchange side: `+1` buy at the ask, `-1` sell at the bid.
    pub side: i64,
    /// `side * I_{t-}`: `+1` on the strong side, `-1` on the weak side.
    pub concordance: i64,
    /// Elapsed time since the last jump at the trade.
    pub elapsed: f64,
}

/// One realization of the mid-price over `[start.t, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub start: MarketState,
    pub horizon: f64,
    pub jumps: Vec<JumpEvent>,
}

impl PricePath {
    pub fn simulate<R: Rng + ?Sized>(
        model: &MarketModel,
        start: MarketState,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut jumps = Vec::new();
        let mut state = start;
        loop {
            let (wait, mark) = model.sample_next_jump(state.elapsed, rng)?;
            if state.t + wait > horizon {
                break;
            }
            let elapsed_before = state.elapsed + wait;
            state.advance(wait);
            let direction = mark * state.direction;
            state.jump(direction);
            jumps.push(JumpEvent {
                time: state.t,
                direction,
                elapsed_before,
            });
        }
        Ok(PricePath {
            start,
            horizon,
            jumps,
        })
    }

    /// Price state just before time `t` (left limit).
    pub fn state_before(&self, t: f64) -> MarketState {
        let k = self.jumps.partition_point(|j| j.time < t);
        self.state_after_jumps(k, t)
    }

    /// State at time `t` after the first `k` jumps have been applied.
    fn state_after_jumps(&self, k: usize, t: f64) -> MarketState {
        if k == 0 {
            let mut s = self.start;
            s.advance(t - self.start.t);
            return s;
        }
        let last = &self.jumps[k - 1];
        let tick = self.start.tick + self.jumps[..k].iter().map(|j| j.direction).sum::<i64>();
        MarketState::new(t, tick, last.direction, t - last.time)
    }

    pub fn terminal_state(&self) -> MarketState {
        self.state_after_jumps(self.jumps.len(), self.horizon)
    }

    /// Constant-state segments `(from, to, direction, elapsed at from)`.
    pub fn segments(&self) -> Vec<(f64, f64, i64, f64)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut from = self.start.t;
        let mut dir = self.start.direction;
        let mut elapsed = self.start.elapsed;
        for j in &self.jumps {
            out.push((from, j.time, dir, elapsed));
            from = j.time;
            dir = j.direction;
            elapsed = 0.0;
        }
        out.push((from, self.horizon, dir, elapsed));
        out
    }
}

/// Generates the Cox trade flow on top of a price path by thinning against
/// the model's intensity bound.
pub fn simulate_trades<R: Rng + ?Sized>(
    path: &PricePath,
    model: &MarketModel,
    rng: &mut R,
) -> Result<Vec<TradeEvent>> {
    let bound = model.lambda_max();
    let mut out = Vec::new();
    if bound <= 0.0 {
        return Ok(out);
    }
    let concordant = model.params().trade_side_weight(crate::model::Side::Strong);
    for (from, to, direction, elapsed0) in path.segments() {
        let mut t = from;
        loop {
            t += exponential(rng, bound);
            if t >= to {
                break;
            }
            let s = elapsed0 + (t - from);
            let rate = model.trade_intensity(s);
            if rate > bound * (1.0 + 1e-12) {
                return Err(Error::ThinningBoundViolated {
                    s,
                    value: rate,
                    bound,
                });
            }
            if open_unit(rng) * bound < rate {
                let concordance = if open_unit(rng) < concordant { 1 } else { -1 };
                out.push(TradeEvent {
                    time: t,
                    side: concordance * direction,
                    concordance,
                    elapsed: s,
                });
            }
        }
    }
    Ok(out)
}

/// Cumulative trade intensity `int_{from}^{to} lambda(S_u) du` along a path,
/// by Simpson's rule on each constant-direction segment.
pub fn compensator(path: &PricePath, model: &MarketModel, from: f64, to: f64) -> f64 {
    let mut total = 0.0;
    for (a, b, _, e0) in path.segments() {
        let lo = a.max(from);
        let hi = b.min(to);
        if hi <= lo {
            continue;
        }
        let n = (((hi - lo) / 0.01).ceil() as usize).max(2) * 2;
        let h = (hi - lo) / n as f64;
        let f = |t: f64| model.trade_intensity(e0 + (t - a));
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + k as f64 * h);
        }
        total += acc * h / 3.0;
    }
    total
}
