//! Simulation-based oracles for hazards, the Bayes-updated mark probability
//! and the conditional renewal sampler.

use renewal_mm::model::{MarketModel, ModelParams, Side};
use renewal_mm::rng::{open_unit, substream, Stream};
use renewal_mm::stats::{ks_critical_1pct, ks_statistic, ks_two_sample, Moments};
use renewal_mm::testing::{symmetric_exp_params, weibull_exp_params, weibull_mix_params};

fn draws(model: &MarketModel, s: f64, n: usize, seed: u64) -> Vec<(f64, i64)> {
    let mut rng = substream(seed, 0, Stream::Aux);
    (0..n).map(|_| model.sample_next_jump(s, &mut rng).unwrap()).collect()
}

/// Pooled median of the inter-arrival law, by bisection on the model CDF.
fn pooled_quantile(model: &MarketModel, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while model.cdf(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn hazards_match_differentiated_empirical_survival() {
    let model = MarketModel::new(weibull_mix_params()).unwrap();
    let s = pooled_quantile(&model, 0.5);
    let w = 0.02;
    // Straight from the definition: class first, then its renewal law.
    let p = model.params();
    let mut rng = substream(1, 0, Stream::Aux);
    let sample: Vec<(f64, i64)> = (0..10_000_000)
        .map(|_| {
            let side = if open_unit(&mut rng) < p.jump_side_weight(Side::Strong) {
                Side::Strong
            } else {
                Side::Weak
            };
            (p.dist(side).quantile(open_unit(&mut rng)).unwrap(), side.sign_i64())
        })
        .collect();
    let at_risk = sample.iter().filter(|d| d.0 >= s - w).count() as f64;
    let survival_mid = sample.iter().filter(|d| d.0 >= s).count() as f64;
    let mut empirical = [0.0; 2];
    for side in Side::BOTH {
        // Central difference of the side-specific sub-survival.
        let events = sample
            .iter()
            .filter(|d| d.1 == side.sign_i64() && d.0 >= s - w && d.0 < s + w)
            .count() as f64;
        empirical[side.index()] = events / (2.0 * w) / survival_mid;
        let truth = model.hazard(side, s).unwrap();
        let rel = (empirical[side.index()] - truth).abs() / truth;
        assert!(rel < 0.02, "{side:?}: empirical {} vs {truth} ({rel})", empirical[side.index()]);
    }
    assert!(at_risk > survival_mid);
    let (mu, sigma2) = model.drift_vol(s).unwrap();
    let (emu, esigma2) = (empirical[0] - empirical[1], empirical[0] + empirical[1]);
    assert!((esigma2 - sigma2).abs() < 0.02 * sigma2);
    assert!((emu - mu).abs() < 0.02 * sigma2, "mu {emu} vs {mu}");
}

#[test]
fn tilde_alpha_matches_rejection_sampling() {
    for params in [weibull_mix_params(), weibull_exp_params()] {
        let model = MarketModel::new(params).unwrap();
        let s = pooled_quantile(&model, 0.7);
        let kept: Vec<f64> = draws(&model, 0.0, 1_000_000, 2)
            .into_iter()
            .filter(|d| d.0 >= s)
            .map(|d| d.1 as f64)
            .collect();
        let est = Moments::from_slice(&kept).estimate();
        let truth = model.tilde_alpha(s).unwrap();
        assert!(est.agrees_with(truth, 3.0, 0.0), "{est:?} vs {truth}");
    }
}

#[test]
fn conditional_sampler_matches_rejection() {
    let model = MarketModel::new(weibull_exp_params()).unwrap();
    for s0 in [0.3, 1.2] {
        let conditional: Vec<(f64, i64)> = draws(&model, s0, 100_000, 3);
        let rejected: Vec<(f64, i64)> = draws(&model, 0.0, 400_000, 4)
            .into_iter()
            .filter(|d| d.0 > s0)
            .map(|(w, m)| (w - s0, m))
            .take(100_000)
            .collect();
        assert!(rejected.len() > 50_000);
        let a: Vec<f64> = conditional.iter().map(|d| d.0).collect();
        let b: Vec<f64> = rejected.iter().map(|d| d.0).collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks < 0.01, "s0 = {s0}: KS {ks}");
        let ma = Moments::from_slice(&conditional.iter().map(|d| d.1 as f64).collect::<Vec<_>>());
        let mb = Moments::from_slice(&rejected.iter().map(|d| d.1 as f64).collect::<Vec<_>>());
        let se = ma.std_error().hypot(mb.std_error());
        assert!((ma.mean() - mb.mean()).abs() < 3.0 * se);
    }
}

#[test]
fn unconditional_inter_arrivals_follow_the_mixture() {
    let model = MarketModel::new(weibull_exp_params()).unwrap();
    let waits: Vec<f64> = draws(&model, 0.0, 100_000, 5).into_iter().map(|d| d.0).collect();
    let ks = ks_statistic(&waits, |s| model.cdf(s));
    assert!(ks < ks_critical_1pct(waits.len()), "KS {ks}");
}

#[test]
fn poisson_degenerate_case() {
    let model = MarketModel::new(symmetric_exp_params(0.0, 2.0)).unwrap();
    let sample = draws(&model, 0.0, 100_000, 6);
    let waits = Moments::from_slice(&sample.iter().map(|d| d.0).collect::<Vec<_>>()).estimate();
    assert!(waits.agrees_with(0.5, 3.0, 0.0), "{waits:?}");
    let marks = Moments::from_slice(&sample.iter().map(|d| d.1 as f64).collect::<Vec<_>>()).estimate();
    assert!(marks.agrees_with(0.0, 3.0, 0.0), "{marks:?}");
}

#[test]
fn reversal_frequency_at_reset() {
    let model = MarketModel::new(weibull_exp_params()).unwrap();
    let rev: Vec<f64> = draws(&model, 0.0, 100_000, 7)
        .into_iter()
        .map(|d| f64::from(d.1 == -1))
        .collect();
    let est = Moments::from_slice(&rev).estimate();
    assert!(est.agrees_with(0.875, 3.0, 0.0), "{est:?}");
}

#[test]
fn theta_infinity_closed_forms() {
    let same = MarketModel::new(symmetric_exp_params(-0.5, 1.0)).unwrap();
    let p = same.params();
    for s in [0.0, 0.5, 3.0] {
        let want = 2.0 * p.delta * p.alpha / (1.0 - p.alpha);
        assert!((same.theta_infinity(s).unwrap() - want).abs() < 1e-12);
    }
    let zero_alpha = MarketModel::new(ModelParams {
        alpha: 0.0,
        ..weibull_exp_params()
    })
    .unwrap();
    for s in [0.0, 0.5, 3.0] {
        let want = 2.0 * zero_alpha.params().delta * zero_alpha.tilde_alpha(s).unwrap();
        assert!((zero_alpha.theta_infinity(s).unwrap() - want).abs() < 1e-12);
    }
}
