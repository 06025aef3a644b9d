use crate::error::Result;
use crate::model::{MarketModel, Side};

use super::grid::{Coefficients, FieldKind, GridSpec, ValueGrid};

/// Backward march along characteristics with `V(T, .) = 0`.
///
/// `rhs(j1, k1, next)` is evaluated at the upstream node `(j + 1, k1)` where
/// `k1 = min(k + 1, n_s)` and `next` is the solved row `j + 1`.
fn march(
    kind: FieldKind,
    spec: GridSpec,
    mut rhs: impl FnMut(usize, usize, &[f64]) -> f64,
) -> ValueGrid {
    let mut grid = ValueGrid::zeros(kind, spec);
    let n_s = spec.n_s;
    for j in (0..spec.n_t).rev() {
        let (cur, next) = grid.split_rows(j);
        for (k, slot) in cur.iter_mut().enumerate() {
            let k1 = (k + 1).min(n_s);
            *slot = next[k1] + spec.dt * rhs(j + 1, k1, next);
        }
    }
    grid
}

fn checked(model: &MarketModel, spec: &GridSpec) -> Result<Coefficients> {
    let c = Coefficients::new(model, spec);
    c.check_stability(spec)?;
    Ok(c)
}

/// Martingale deviation `theta(t, s)`.
pub fn solve_theta(model: &MarketModel, spec: &GridSpec) -> Result<ValueGrid> {
    let c = checked(model, spec)?;
    let two_delta = 2.0 * model.params().delta;
    Ok(march(FieldKind::Theta, *spec, |_, k, next| {
        c.mu[k] * next[0] - c.sigma2[k] * next[k] + two_delta * c.mu[k]
    }))
}

/// Quoting barriers `G+` and `G-` on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Barriers {
    pub plus: ValueGrid,
    pub minus: ValueGrid,
}

impl Barriers {
    pub fn side(&self, side: Side) -> &ValueGrid {
        match side {
            Side::Strong => &self.plus,
            Side::Weak => &self.minus,
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.plus.spec
    }

    /// Whether quoting on `side` is strictly profitable at node `(j, k)`.
    #[inline]
    pub fn active(&self, side: Side, j: usize, k: usize) -> bool {
        self.side(side).get(j, k) > 0.0
    }
}

/// Trade (spread capture) and jump (adverse selection) parts of `G` at one
/// node; their sum is the barrier.
pub fn barrier_parts(
    model: &MarketModel,
    side: Side,
    theta_ts: f64,
    theta_t0: f64,
    s: f64,
) -> (f64, f64) {
    let p = model.params();
    let nu = side.sign();
    let trade = model.side_intensity(side, s) * (p.delta - p.fee - nu * theta_ts) * p.fill(side).mean();
    let jump = -model.hazard_frozen(side, s) * (p.delta + p.fee + theta_t0) * p.lot_size as f64;
    (trade, jump)
}

/// Barrier evaluated with the stationary deviation in place of `theta`.
pub fn asymptotic_barrier(model: &MarketModel, side: Side, s: f64) -> f64 {
    let (trade, jump) = barrier_parts(
        model,
        side,
        model.theta_infinity_frozen(s),
        model.theta_infinity_frozen(0.0),
        s,
    );
    trade + jump
}

/// `G+/-` from a solved theta grid.
pub fn barrier_g(model: &MarketModel, theta: &ValueGrid) -> Barriers {
    let [plus, minus] = barrier_split(model, theta).map(|(trade, jump)| {
        let kind = trade.kind;
        let values = trade
            .values()
            .iter()
            .zip(jump.values())
            .map(|(a, b)| a + b)
            .collect();
        ValueGrid::from_values(kind, trade.spec, values).expect("same shape")
    });
    Barriers { plus, minus }
}

/// Per side `(trade part, jump part)` grids of the barrier.
pub fn barrier_split(model: &MarketModel, theta: &ValueGrid) -> [(ValueGrid, ValueGrid); 2] {
    let spec = theta.spec;
    Side::BOTH.map(|side| {
        let kind = match side {
            Side::Strong => FieldKind::GPlus,
            Side::Weak => FieldKind::GMinus,
        };
        let n = spec.node_count();
        let (mut trade, mut jump) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for j in 0..=spec.n_t {
            let row = theta.row(j);
            for (k, &th) in row.iter().enumerate() {
                let (a, b) = barrier_parts(model, side, th, row[0], spec.s(k));
                trade.push(a);
                jump.push(b);
            }
        }
        (
            ValueGrid::from_values(kind, spec, trade).expect("same shape"),
            ValueGrid::from_values(kind, spec, jump).expect("same shape"),
        )
    })
}

/// Value of the risk-neutral optimal quotes over the hold strategy.
pub fn solve_omega(model: &MarketModel, g: &Barriers) -> Result<ValueGrid> {
    let spec = g.spec();
    let c = checked(model, &spec)?;
    Ok(march(FieldKind::Omega, spec, |j, k, next| {
        let source = g.plus.get(j, k).max(0.0) + g.minus.get(j, k).max(0.0);
        c.sigma2[k] * (next[0] - next[k]) + source
    }))
}

/// `h L + lambda theta^1` on one side at s-node `k`.
fn b_coef(c: &Coefficients, model: &MarketModel, side: Side, k: usize) -> f64 {
    let p = model.params();
    let i = side.index();
    c.hazard[i][k] * p.lot_size as f64 + c.trade[i][k] * p.fill(side).mean()
}

/// Expected terminal inventory under the risk-neutral optimal quotes, per
/// unit of the last jump direction.
pub fn solve_zeta1(model: &MarketModel, g: &Barriers) -> Result<ValueGrid> {
    let spec = g.spec();
    let c = checked(model, &spec)?;
    Ok(march(FieldKind::Zeta1, spec, |j, k, next| {
        let mut source = 0.0;
        for side in Side::BOTH {
            if g.active(side, j, k) {
                source += side.sign() * b_coef(&c, model, side, k);
            }
        }
        c.mu[k] * next[0] - c.sigma2[k] * next[k] - source
    }))
}

/// Expected squared terminal strong inventory from zero under the
/// risk-neutral optimal quotes.
pub fn solve_zeta0(model: &MarketModel, g: &Barriers, zeta1: &ValueGrid) -> Result<ValueGrid> {
    let spec = g.spec();
    let c = checked(model, &spec)?;
    let p = model.params();
    let lot = p.lot_size as f64;
    Ok(march(FieldKind::Zeta0, spec, |j, k, next| {
        let z1_0 = zeta1.get(j, 0);
        let z1_s = zeta1.get(j, k);
        let mut source = 0.0;
        for side in Side::BOTH {
            if g.active(side, j, k) {
                let i = side.index();
                let fill = p.fill(side);
                source += c.hazard[i][k] * (lot * lot - 2.0 * lot * z1_0)
                    + c.trade[i][k]
                        * (fill.second_moment() - 2.0 * side.sign() * fill.mean() * z1_s);
            }
        }
        c.sigma2[k] * (next[0] - next[k]) + source
    }))
}

/// The linear fields of one solve.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub theta: ValueGrid,
    pub barriers: Barriers,
    pub omega: ValueGrid,
    pub zeta1: ValueGrid,
    pub zeta0: ValueGrid,
}

/// Solves theta, G+/-, omega, zeta1 and zeta0 in dependency order.
pub fn solve_linear(model: &MarketModel, spec: &GridSpec) -> Result<LinearSolution> {
    let theta = solve_theta(model, spec)?;
    let barriers = barrier_g(model, &theta);
    let omega = solve_omega(model, &barriers)?;
    let zeta1 = solve_zeta1(model, &barriers)?;
    let zeta0 = solve_zeta0(model, &barriers, &zeta1)?;
    Ok(LinearSolution {
        theta,
        barriers,
        omega,
        zeta1,
        zeta0,
    })
}

/// Observed convergence order from three nested solves at `dt`, `dt/2` and
/// `dt/4`, using sup-norm differences on the coarse nodes.
pub fn richardson_order(coarse: &ValueGrid, fine: &ValueGrid, finest: &ValueGrid) -> f64 {
    let d1 = sup_diff_nested(coarse, fine);
    let d2 = sup_diff_nested_pair(coarse, fine, finest);
    (d1 / d2).log2()
}

/// `max |a - b|` over the nodes of `a`, where `b` lives on a refinement.
pub fn sup_diff_nested(a: &ValueGrid, b: &ValueGrid) -> f64 {
    let ratio = (a.spec.dt / b.spec.dt).round() as usize;
    let mut d: f64 = 0.0;
    for j in 0..=a.spec.n_t {
        for k in 0..=a.spec.n_s {
            d = d.max((a.get(j, k) - b.get(j * ratio, k * ratio)).abs());
        }
    }
    d
}

fn sup_diff_nested_pair(coarse: &ValueGrid, fine: &ValueGrid, finest: &ValueGrid) -> f64 {
    let r1 = (coarse.spec.dt / fine.spec.dt).round() as usize;
    let r2 = (coarse.spec.dt / finest.spec.dt).round() as usize;
    let mut d: f64 = 0.0;
    for j in 0..=coarse.spec.n_t {
        for k in 0..=coarse.spec.n_s {
            d = d.max((fine.get(j * r1, k * r1) - finest.get(j * r2, k * r2)).abs());
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FillDist, TradeIntensitySpec};
    use crate::testing::{symmetric_exp_params, weibull_exp_params};

    fn model() -> MarketModel {
        MarketModel::new(weibull_exp_params()).unwrap()
    }

    #[test]
    fn theta_vanishes_for_symmetric_hazards() {
        let m = MarketModel::new(symmetric_exp_params(0.0, 1.3)).unwrap();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        let th = solve_theta(&m, &spec).unwrap();
        assert_eq!(th.sup_abs(), 0.0);
    }

    #[test]
    fn terminal_rows_are_zero() {
        let m = model();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        let sol = solve_linear(&m, &spec).unwrap();
        for g in [&sol.theta, &sol.omega, &sol.zeta1, &sol.zeta0] {
            assert!(g.row(spec.n_t).iter().all(|&v| v == 0.0));
        }
        assert!(sol.theta.sup_abs() > 0.0);
    }

    #[test]
    fn terminal_barrier_row_matches_formula() {
        let m = model();
        let p = m.params();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        let g = barrier_g(&m, &solve_theta(&m, &spec).unwrap());
        for side in Side::BOTH {
            for k in [0, 7, spec.n_s] {
                let s = spec.s(k);
                let want = m.side_intensity(side, s) * (p.delta - p.fee) * p.fill(side).mean()
                    - m.hazard_frozen(side, s) * (p.delta + p.fee) * p.lot_size as f64;
                assert!((g.side(side).get(spec.n_t, k) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn no_jumps_means_flat_barrier() {
        // Push every jump far beyond the horizon.
        let mut p = weibull_exp_params();
        p.dist_plus = crate::model::RenewalDist::Exponential { rate: 1e-9 };
        p.dist_minus = crate::model::RenewalDist::Exponential { rate: 1e-9 };
        p.horizon = 1.0;
        let m = MarketModel::new(p.clone()).unwrap();
        let spec = GridSpec::new(0.1, 1.0, 1.0).unwrap();
        let g = barrier_g(&m, &solve_theta(&m, &spec).unwrap());
        for side in Side::BOTH {
            let want = m.side_intensity(side, 0.3) * (p.delta - p.fee) * p.fill(side).mean();
            assert!((g.side(side).get(3, 3) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn inactive_controls_give_zero_fields() {
        let mut p = weibull_exp_params();
        p.fee = 2.0;
        let m = MarketModel::new(p).unwrap();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        let sol = solve_linear(&m, &spec).unwrap();
        assert!(sol.barriers.plus.values().iter().all(|&v| v <= 0.0));
        assert!(sol.barriers.minus.values().iter().all(|&v| v <= 0.0));
        assert_eq!(sol.omega.sup_abs(), 0.0);
        assert_eq!(sol.zeta1.sup_abs(), 0.0);
        assert_eq!(sol.zeta0.sup_abs(), 0.0);
    }

    #[test]
    fn symmetric_sides_cancel_in_zeta1() {
        let mut p = symmetric_exp_params(0.0, 1.0);
        p.rho = 0.0;
        p.fill_minus = p.fill_plus.clone();
        p.lambda_spec = TradeIntensitySpec::Constant { rate: 2.0 };
        let m = MarketModel::new(p).unwrap();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        let sol = solve_linear(&m, &spec).unwrap();
        assert!(sol.omega.sup_abs() > 0.0);
        assert!(sol.zeta1.sup_abs() < 1e-12);
    }

    #[test]
    fn omega_and_zeta_invariants() {
        let m = model();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        let sol = solve_linear(&m, &spec).unwrap();
        for k in 0..=spec.n_s {
            for j in 0..spec.n_t {
                assert!(sol.omega.get(j, k) >= sol.omega.get(j + 1, k) - 1e-12);
                let z1 = sol.zeta1.get(j, k);
                assert!(z1 * z1 <= sol.zeta0.get(j, k) + 1e-9);
            }
        }
        assert!(sol.zeta0.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn unstable_grid_rejected() {
        let mut p = weibull_exp_params();
        p.lambda_spec = TradeIntensitySpec::Constant { rate: 50.0 };
        p.fill_plus = FillDist::full(2);
        let m = MarketModel::new(p).unwrap();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        assert!(matches!(
            solve_theta(&m, &spec),
            Err(crate::Error::StabilityViolation { .. })
        ));
    }
}
