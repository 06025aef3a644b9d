use proptest::prelude::*;
use renewal_mm::flow::{EventKind, EventTape, FillDist};
use renewal_mm::model::{MarketModel, ModelParams, RenewalDist, Side};
use renewal_mm::pde::{FieldKind, GridSpec, ValueGrid};
use renewal_mm::policy::AlwaysOn;
use renewal_mm::rng::{substream, Stream};
use renewal_mm::simulator::{replay_tape, run_paths, BacktestConfig, StartState};
use renewal_mm::testing::weibull_exp_params;

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (-0.95f64..0.95, 0.6f64..3.0, 0.6f64..3.0, 0.3f64..2.0, -0.9f64..0.9).prop_map(
        |(alpha, shape_plus, shape_minus, rate, rho)| ModelParams {
            alpha,
            rho,
            dist_plus: RenewalDist::Weibull {
                shape: shape_plus,
                scale: 1.0,
            },
            dist_minus: RenewalDist::Gamma {
                shape: shape_minus,
                rate,
            },
            ..weibull_exp_params()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hazard_invariants(params in params_strategy(), u in 0.0f64..1.0) {
        let model = MarketModel::new(params).unwrap();
        let s = u * model.s_max();
        let hp = model.hazard_frozen(Side::Strong, s);
        let hm = model.hazard_frozen(Side::Weak, s);
        prop_assert!(hp >= 0.0 && hm >= 0.0);
        let (mu, sigma2) = model.drift_vol_frozen(s);
        prop_assert!((sigma2 - hp - hm).abs() <= 1e-12 * sigma2.max(1.0));
        prop_assert!(mu.abs() <= sigma2 * (1.0 + 1e-12));
        let a = model.tilde_alpha_frozen(s);
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert!((model.tilde_alpha_frozen(0.0) - model.params().alpha).abs() < 1e-12);
    }

    #[test]
    fn tapes_round_trip_and_replay(params in params_strategy(), seed in any::<u64>(), inventory in -5i64..5) {
        let model = MarketModel::new(params).unwrap();
        let mut cfg = BacktestConfig::new(3, seed);
        cfg.start = StartState { inventory, price: 50.0, ..StartState::default() };
        for o in run_paths(&model, &AlwaysOn, &cfg).unwrap() {
            let mut bytes = Vec::new();
            o.tape.write_csv(&mut bytes).unwrap();
            let back = EventTape::read_csv(bytes.as_slice()).unwrap();
            prop_assert_eq!(&back.rows, &o.tape.rows);
            back.validate(model.params().delta).unwrap();
            let pf = replay_tape(&model, &back, &cfg.start).unwrap();
            prop_assert_eq!(pf.cash.to_bits(), o.portfolio.cash.to_bits());
            prop_assert_eq!(pf.inventory, o.portfolio.inventory);
            let ticks = (o.terminal_price - 50.0) / (2.0 * model.params().delta);
            prop_assert_eq!(ticks, ticks.round());
            for r in o.tape.rows.iter().filter(|r| r.kind == EventKind::Jump && r.fill > 0) {
                prop_assert_eq!(r.fill, model.params().lot_size);
            }
        }
    }

    #[test]
    fn grids_round_trip_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
        let spec = GridSpec::new(0.5, 1.0, 1.5).unwrap();
        let grid = ValueGrid::from_values(FieldKind::Omega, spec, values).unwrap();
        let mut bytes = Vec::new();
        grid.write_csv(&mut bytes).unwrap();
        let back = ValueGrid::read_csv(bytes.as_slice(), FieldKind::Omega, spec).unwrap();
        prop_assert!(back.values().iter().zip(grid.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn fill_draws_stay_in_range(weights in prop::collection::vec(0.01f64..1.0, 2..6), seed in any::<u64>()) {
        let total: f64 = weights.iter().sum();
        let fill = FillDist::new(weights.iter().map(|w| w / total).collect()).unwrap();
        let mut rng = substream(seed, 0, Stream::Fills);
        for _ in 0..200 {
            prop_assert!(fill.draw(&mut rng) <= fill.lot_size());
        }
        let mean: f64 = fill.pmf().iter().enumerate().map(|(i, p)| i as f64 * p).sum();
        prop_assert!((fill.mean() - mean).abs() < 1e-12);
    }

    #[test]
    fn params_hash_is_stable_and_sensitive(params in params_strategy(), bump in 1e-6f64..0.01) {
        let again = ModelParams::from_json(&params.to_json().unwrap()).unwrap();
        prop_assert_eq!(params.hash(), again.hash());
        let moved = ModelParams { fee: params.fee + bump, ..params.clone() };
        prop_assert_ne!(params.hash(), moved.hash());
    }
}
