//! Cross-checks between solved fields, feedback controls and backtests.

use std::sync::Arc;

use renewal_mm::model::{MarketModel, ModelParams, Side};
use renewal_mm::pde::{asymptotic_barrier, solve_linear, solve_theta, solve_zeta_exact, GridSpec};
use renewal_mm::policy::{
    adjustments, control_approx_node, switch_inventory, ApproxPolicy, Eta0Policy, ExactPolicy, Hold,
    Policy, QuoteDecision,
};
use renewal_mm::simulator::{oracle_inventory_moments, run_backtest, utility_curve, BacktestConfig, StartState};
use renewal_mm::testing::{symmetric_exp_params, weibull_exp_params};

#[test]
fn barrier_reaches_its_stationary_form() {
    let base = weibull_exp_params();
    let dt = 0.02;
    let horizon = (50.0 * base.mean_inter_arrival() / dt).ceil() * dt;
    let model = MarketModel::new(ModelParams { horizon, ..base }).unwrap();
    let spec = GridSpec::for_model(&model, dt).unwrap();
    let sol = solve_linear(&model, &spec).unwrap();
    for side in Side::BOTH {
        let g = sol.barriers.side(side);
        let stationary: Vec<f64> = (0..=spec.n_s).map(|k| asymptotic_barrier(&model, side, spec.s(k))).collect();
        let scale = stationary.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap = (0..=spec.n_s)
            .map(|k| (g.get(0, k) - stationary[k]).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 0.01 * scale, "{side:?}: gap {gap}, scale {scale}");
    }
}

#[test]
fn holding_inventory_earns_theta() {
    let params = ModelParams {
        eta: 0.01,
        ..weibull_exp_params()
    };
    let model = MarketModel::new(params).unwrap();
    let spec = GridSpec::for_model(&model, 0.005).unwrap();
    let theta = solve_theta(&model, &spec).unwrap();
    let (y, x0, p0) = (3i64, 1.0, 100.0);
    for (direction, s0) in [(1, 0.0), (-1, 0.8)] {
        let mut cfg = BacktestConfig::new(100_000, 21);
        cfg.start = StartState {
            price: p0,
            direction,
            elapsed: s0,
            cash: x0,
            inventory: y,
            ..StartState::default()
        };
        let report = run_backtest(&cfg, &model, &Hold).unwrap();
        let q0 = direction * y;
        let want = x0 + y as f64 * p0 + q0 as f64 * theta.interpolate(0.0, s0) - 0.01 * (y * y) as f64;
        assert!(
            report.utility.agrees_with(want, 3.0, 0.0),
            "I = {direction}, s = {s0}: {:?} vs {want}",
            report.utility
        );
    }
}

#[test]
fn hold_utility_drops_by_exactly_eta_y_squared() {
    let mut cfg = BacktestConfig::new(500, 3);
    cfg.start.inventory = 2;
    let rows = utility_curve(&weibull_exp_params(), &[0.0, 0.01, 0.1], &cfg, |_| {
        Ok(vec![Box::new(Hold) as Box<dyn Policy>])
    })
    .unwrap();
    let base = rows[0].utility.mean;
    for r in &rows[1..] {
        assert!((base - r.utility.mean - 4.0 * r.eta).abs() < 1e-9, "{r:?}");
    }
}

#[test]
fn exact_control_is_not_beaten_by_the_expansion() {
    let eta = 0.01;
    let params = ModelParams {
        eta,
        ..weibull_exp_params()
    };
    let cfg = BacktestConfig::new(20_000, 8);
    let rows = utility_curve(&params, &[eta], &cfg, |model| {
        let spec = GridSpec::for_model(model, 0.05)?;
        let sol = solve_linear(model, &spec)?;
        let zeta = solve_zeta_exact(model, &sol.barriers, 48)?;
        let barriers = Arc::new(sol.barriers.clone());
        Ok(vec![
            Box::new(ExactPolicy {
                model: Arc::new(model.clone()),
                barriers: barriers.clone(),
                zeta: Arc::new(zeta),
            }) as Box<dyn Policy>,
            Box::new(ApproxPolicy {
                barriers,
                adjustments: Arc::new(adjustments(model, &sol.zeta1)),
                eta,
            }),
        ])
    })
    .unwrap();
    let (exact, approx) = (&rows[0].utility, &rows[1].utility);
    let se = exact.se.hypot(approx.se);
    assert!(exact.mean - approx.mean >= -3.0 * se, "{rows:?}");
}

#[test]
fn inventory_shrinks_the_flat_trading_region_and_forces_one_side() {
    let eta = 0.05;
    let model = MarketModel::new(weibull_exp_params()).unwrap();
    let spec = GridSpec::for_model(&model, 0.05).unwrap();
    let sol = solve_linear(&model, &spec).unwrap();
    let adj = adjustments(&model, &sol.zeta1);
    let g = &sol.barriers;
    for j in 0..=spec.n_t {
        for k in 0..=spec.n_s {
            let flat = control_approx_node(g, &adj, eta, j, k, 0);
            for side in Side::BOTH {
                if adj.a(side).get(j, k) >= 0.0 && flat.posted(side) {
                    assert!(g.side(side).get(j, k) > 0.0, "node ({j}, {k})");
                }
            }
            // Far enough long the strong side, only the strong side is quoted.
            let reach = Side::BOTH
                .iter()
                .filter_map(|&side| switch_inventory(g, &adj, eta, side, j, k))
                .fold(0.0f64, |m, q| m.max(q.abs()));
            let q = reach.ceil() as i64 + 1;
            assert_eq!(control_approx_node(g, &adj, eta, j, k, q), QuoteDecision::new(true, false));
            assert_eq!(control_approx_node(g, &adj, eta, j, k, -q), QuoteDecision::new(false, true));
        }
    }
}

#[test]
fn symmetric_sides_have_no_inventory_drift() {
    let params = ModelParams {
        rho: 0.0,
        fill_minus: weibull_exp_params().fill_plus,
        ..symmetric_exp_params(0.0, 1.0)
    };
    let model = MarketModel::new(params).unwrap();
    let spec = GridSpec::for_model(&model, 0.01).unwrap();
    let sol = solve_linear(&model, &spec).unwrap();
    assert!(sol.zeta1.sup_abs() < 1e-12);
    let policy = Eta0Policy {
        barriers: Arc::new(sol.barriers),
    };
    let m = oracle_inventory_moments(&model, &policy, 0.0, 0.3, 50_000, 4).unwrap();
    assert!(m.inventory.agrees_with(0.0, 3.0, 0.0), "{:?}", m.inventory);
    assert!(m.strong_inventory_sq.agrees_with(sol.zeta0.interpolate(0.0, 0.3), 3.0, 0.0));
}
