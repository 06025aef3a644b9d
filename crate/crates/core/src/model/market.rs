//! Markov-renewal mid-price model: hazards, trend/agitation, conditional
//! direction and single-event sampling.
//!
//! Beyond the truncation point `s_max` (the `1 - 1e-4` quantile of the pooled
//! inter-arrival law) every function of the elapsed time is frozen at its
//! `s_max` value. The sampler draws from that frozen process, so simulations
//! and grid solvers describe the same dynamics.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::dist::invert_decreasing;
use crate::model::{ModelParams, Side};
use crate::rng::open_unit;

/// Pooled-survival level defining the truncation point of the s-axis.
pub const TRUNCATION_SURVIVAL: f64 = 1e-4;
/// Survival below which hazards are not evaluated.
pub const TAIL_FLOOR: f64 = 1e-250;

/// Number of sample points used to bound intensities on `[0, s_max]`.
const BOUND_SAMPLES: usize = 4096;

/// A validated parameter set together with its derived constants.
#[derive(Debug, Clone)]
pub struct MarketModel {
    params: ModelParams,
    s_max: f64,
    hazard_max: f64,
    lambda_max: f64,
}

impl MarketModel {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let mut model = MarketModel {
            params,
            s_max: 0.0,
            hazard_max: 0.0,
            lambda_max: 0.0,
        };
        model.s_max = invert_decreasing(|s| model.survival(s), TRUNCATION_SURVIVAL, 0.0)?;
        let mut hmax: f64 = 0.0;
        for k in 0..=BOUND_SAMPLES {
            let s = model.s_max * k as f64 / BOUND_SAMPLES as f64;
            let (_, sigma2) = model.drift_vol(s)?;
            hmax = hmax.max(sigma2);
        }
        model.hazard_max = hmax;
        model.lambda_max = model.params.lambda_spec.max_rate(model.s_max);
        Ok(model)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Truncation point of the elapsed-time axis.
    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// Numerical supremum of `sigma2 = h+ + h-` over `[0, s_max]`.
    pub fn hazard_max(&self) -> f64 {
        self.hazard_max
    }

    /// Supremum of the trade intensity over `[0, s_max]`; the thinning bound.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Pooled survival `1 - F(s)`.
    pub fn survival(&self, s: f64) -> f64 {
        Side::BOTH
            .iter()
            .map(|&side| self.params.jump_side_weight(side) * self.params.dist(side).survival(s))
            .sum()
    }

    /// Pooled CDF `F(s)`.
    pub fn cdf(&self, s: f64) -> f64 {
        1.0 - self.survival(s)
    }

    fn checked_survival(&self, s: f64) -> Result<f64> {
        let survival = self.survival(s);
        if survival < TAIL_FLOOR {
            return Err(Error::TailUnderflow { s, survival });
        }
        Ok(survival)
    }

    /// Intensity of the next jump landing on `side`, given `s` elapsed.
    pub fn hazard(&self, side: Side, s: f64) -> Result<f64> {
        let survival = self.checked_survival(s)?;
        let weight = self.params.jump_side_weight(side);
        if weight == 0.0 {
            return Ok(0.0);
        }
        Ok(weight * self.params.dist(side).pdf(s) / survival)
    }

    /// Trend `h+ - h-` and agitation `h+ + h-`.
    pub fn drift_vol(&self, s: f64) -> Result<(f64, f64)> {
        let hp = self.hazard(Side::Strong, s)?;
        let hm = self.hazard(Side::Weak, s)?;
        Ok((hp - hm, hp + hm))
    }

    /// Conditional mean of the next jump direction relative to the last one,
    /// given survival to `s`.
    pub fn tilde_alpha(&self, s: f64) -> Result<f64> {
        let survival = self.checked_survival(s)?;
        let num: f64 = Side::BOTH
            .iter()
            .map(|&side| {
                side.sign() * self.params.jump_side_weight(side) * self.params.dist(side).survival(s)
            })
            .sum();
        Ok((num / survival).clamp(-1.0, 1.0))
    }

    /// Large-horizon limit of the martingale deviation.
    pub fn theta_infinity(&self, s: f64) -> Result<f64> {
        let p = &self.params;
        Ok(2.0 * p.delta * self.tilde_alpha(s)? / (1.0 - p.alpha))
    }

    fn clamp_s(&self, s: f64) -> f64 {
        s.min(self.s_max)
    }

    /// Hazard with the frozen-boundary closure applied.
    pub fn hazard_frozen(&self, side: Side, s: f64) -> f64 {
        self.hazard(side, self.clamp_s(s))
            .expect("survival at s_max is above the tail floor")
    }

    pub fn drift_vol_frozen(&self, s: f64) -> (f64, f64) {
        self.drift_vol(self.clamp_s(s))
            .expect("survival at s_max is above the tail floor")
    }

    pub fn tilde_alpha_frozen(&self, s: f64) -> f64 {
        self.tilde_alpha(self.clamp_s(s))
            .expect("survival at s_max is above the tail floor")
    }

    pub fn theta_infinity_frozen(&self, s: f64) -> f64 {
        self.theta_infinity(self.clamp_s(s))
            .expect("survival at s_max is above the tail floor")
    }

    /// Trade intensity `lambda(s)` with the frozen-boundary closure.
    pub fn trade_intensity(&self, s: f64) -> f64 {
        self.params.lambda_spec.rate(self.clamp_s(s))
    }

    /// Concordant (`Strong`) or discordant (`Weak`) trade intensity.
    pub fn side_intensity(&self, side: Side, s: f64) -> f64 {
        self.params.trade_side_weight(side) * self.trade_intensity(s)
    }

    /// Samples the next jump from elapsed time `s`.
    ///
    /// Returns the waiting time and the mark `B` (+1 continuation, -1
    /// reversal); the new absolute direction is `B * i`.
    pub fn sample_next_jump<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<(f64, i64)> {
        let u = open_unit(rng);
        let v = open_unit(rng);
        let (jump_at, mark_s) = if s >= self.s_max {
            let (_, sigma2) = self.drift_vol_frozen(self.s_max);
            (s - u.ln() / sigma2, self.s_max)
        } else {
            let target = u * self.survival(s);
            let tail = self.survival(self.s_max);
            if target >= tail {
                let x = invert_decreasing(|x| self.survival(x), target, s)?.min(self.s_max);
                (x, x)
            } else {
                let (_, sigma2) = self.drift_vol_frozen(self.s_max);
                (self.s_max + (tail / target).ln() / sigma2, self.s_max)
            }
        };
        let wait = jump_at - s;
        if !(wait > 0.0 && wait.is_finite()) {
            return Err(Error::SamplerFailure { s });
        }
        let p_cont = self.continuation_probability(mark_s);
        let mark = if v < p_cont { 1 } else { -1 };
        Ok((wait, mark))
    }

    /// Probability that a jump occurring at elapsed time `x` continues the
    /// last direction: `h+(x) / sigma2(x)`.
    fn continuation_probability(&self, x: f64) -> f64 {
        let p = &self.params;
        let fp = p.jump_side_weight(Side::Strong) * p.dist_plus.pdf(x);
        let fm = p.jump_side_weight(Side::Weak) * p.dist_minus.pdf(x);
        if fp.is_infinite() || fm.is_infinite() {
            return if fp.is_infinite() && fm.is_infinite() {
                p.jump_side_weight(Side::Strong)
            } else if fp.is_infinite() {
                1.0
            } else {
                0.0
            };
        }
        if fp + fm > 0.0 {
            fp / (fp + fm)
        } else {
            // Flat stretch of an empirical CDF: fall back to survival odds.
            0.5 * (1.0 + self.tilde_alpha_frozen(x))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{symmetric_exp_params, weibull_exp_params};

    #[test]
    fn memoryless_symmetric_hazards_are_half_rate() {
        let m = MarketModel::new(symmetric_exp_params(0.0, 2.0)).unwrap();
        for &s in &[0.0, 0.3, 1.0, 3.0] {
            assert!((m.hazard(Side::Strong, s).unwrap() - 1.0).abs() < 1e-12);
            assert!((m.hazard(Side::Weak, s).unwrap() - 1.0).abs() < 1e-12);
            let (mu, sigma2) = m.drift_vol(s).unwrap();
            assert!(mu.abs() < 1e-12);
            assert!((sigma2 - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_minus_one_kills_continuations() {
        let mut p = weibull_exp_params();
        p.alpha = -1.0;
        let m = MarketModel::new(p).unwrap();
        for &s in &[0.0, 0.5, 2.0] {
            assert_eq!(m.hazard(Side::Strong, s).unwrap(), 0.0);
            let hm = m.hazard(Side::Weak, s).unwrap();
            let (mu, sigma2) = m.drift_vol(s).unwrap();
            assert_eq!(mu, -hm);
            assert_eq!(sigma2, hm);
        }
    }

    #[test]
    fn tilde_alpha_at_zero_and_independent_case() {
        let m = MarketModel::new(weibull_exp_params()).unwrap();
        assert_eq!(m.tilde_alpha(0.0).unwrap(), m.params().alpha);
        let m = MarketModel::new(symmetric_exp_params(-0.4, 1.0)).unwrap();
        for &s in &[0.0, 0.7, 4.0] {
            assert!((m.tilde_alpha(s).unwrap() + 0.4).abs() < 1e-12);
            let expect = 2.0 * m.params().delta * -0.4 / 1.4;
            assert!((m.theta_infinity(s).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_infinity_with_zero_alpha() {
        let mut p = weibull_exp_params();
        p.alpha = 0.0;
        let m = MarketModel::new(p).unwrap();
        for &s in &[0.0, 0.4, 2.5] {
            let ta = m.tilde_alpha(s).unwrap();
            assert!((m.theta_infinity(s).unwrap() - 2.0 * m.params().delta * ta).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_invariants() {
        let m = MarketModel::new(weibull_exp_params()).unwrap();
        for k in 0..=1000 {
            let s = m.s_max() * k as f64 / 1000.0;
            let hp = m.hazard(Side::Strong, s).unwrap();
            let hm = m.hazard(Side::Weak, s).unwrap();
            let (mu, sigma2) = m.drift_vol(s).unwrap();
            assert!(hp >= 0.0 && hm >= 0.0);
            assert_eq!(sigma2, hp + hm);
            assert!(mu.abs() <= sigma2);
            let ta = m.tilde_alpha(s).unwrap();
            assert!((-1.0..=1.0).contains(&ta));
            assert!(sigma2 <= m.hazard_max() + 1e-12);
        }
    }

    #[test]
    fn truncation_point_matches_quantile() {
        let m = MarketModel::new(weibull_exp_params()).unwrap();
        assert!((m.survival(m.s_max()) - TRUNCATION_SURVIVAL).abs() < 1e-12);
    }

    #[test]
    fn tail_underflow_is_reported() {
        let m = MarketModel::new(symmetric_exp_params(0.0, 2.0)).unwrap();
        assert!(matches!(
            m.hazard(Side::Strong, 1e4),
            Err(Error::TailUnderflow { .. })
        ));
        assert!(m.hazard_frozen(Side::Strong, 1e4).is_finite());
    }
}
