//! Quoting policies built from solved fields.
//!
//! Every feedback control reads the nearest lattice node in `(t, s)`; the
//! strong inventory `q` is used exactly.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::csv_err;
use crate::model::{MarketModel, Side};
use crate::pde::{apply_c, Barriers, FieldKind, GridSpec, ValueGrid, ZetaField};

/// Which sides carry a resting limit order of size `L`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuoteDecision {
    pub ell_plus: bool,
    pub ell_minus: bool,
}

impl QuoteDecision {
    pub const NONE: QuoteDecision = QuoteDecision {
        ell_plus: false,
        ell_minus: false,
    };
    pub const BOTH: QuoteDecision = QuoteDecision {
        ell_plus: true,
        ell_minus: true,
    };

    pub fn new(ell_plus: bool, ell_minus: bool) -> Self {
        QuoteDecision { ell_plus, ell_minus }
    }

    pub fn posted(&self, side: Side) -> bool {
        match side {
            Side::Strong => self.ell_plus,
            Side::Weak => self.ell_minus,
        }
    }

    fn from_fn(mut f: impl FnMut(Side) -> bool) -> Self {
        QuoteDecision::new(f(Side::Strong), f(Side::Weak))
    }
}

fn node(spec: &GridSpec, t: f64, s: f64) -> Result<(usize, usize)> {
    Ok((spec.t_index(t)?, spec.s_index(s)))
}

/// Risk-neutral optimal quotes: post where the barrier is strictly positive.
pub fn control_eta0(g: &Barriers, t: f64, s: f64) -> Result<QuoteDecision> {
    let (j, k) = node(&g.spec(), t, s)?;
    Ok(QuoteDecision::from_fn(|side| g.active(side, j, k)))
}

/// Inventory-independent (`a`) and inventory-linear (`b`) threshold
/// corrections of the small risk-aversion policy, per side.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentField {
    pub a: [ValueGrid; 2],
    pub b: [ValueGrid; 2],
}

impl AdjustmentField {
    pub fn a(&self, side: Side) -> &ValueGrid {
        &self.a[side.index()]
    }

    pub fn b(&self, side: Side) -> &ValueGrid {
        &self.b[side.index()]
    }
}

/// Builds `A+/-` and `B+/-` from a solved `zeta1` grid.
pub fn adjustments(model: &MarketModel, zeta1: &ValueGrid) -> AdjustmentField {
    let p = model.params();
    let spec = zeta1.spec;
    let lot = p.lot_size as f64;
    let build = |side: Side| {
        let fill = p.fill(side);
        let nu = side.sign();
        let n = spec.node_count();
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for j in 0..=spec.n_t {
            let row = zeta1.row(j);
            for (k, &z) in row.iter().enumerate() {
                let s = spec.s(k);
                let h = model.hazard_frozen(side, s);
                let l = model.side_intensity(side, s);
                a.push(h * lot * (lot - 2.0 * row[0]) + l * (fill.second_moment() - 2.0 * nu * z * fill.mean()));
                b.push(h * lot + l * fill.mean());
            }
        }
        let (ka, kb) = match side {
            Side::Strong => (FieldKind::APlus, FieldKind::BPlus),
            Side::Weak => (FieldKind::AMinus, FieldKind::BMinus),
        };
        (
            ValueGrid::from_values(ka, spec, a).expect("same shape"),
            ValueGrid::from_values(kb, spec, b).expect("same shape"),
        )
    };
    let (ap, bp) = build(Side::Strong);
    let (am, bm) = build(Side::Weak);
    AdjustmentField {
        a: [ap, am],
        b: [bp, bm],
    }
}

/// Small risk-aversion threshold `eta (A -/+ 2 q B)` at a node.
#[inline]
pub fn approx_threshold(adj: &AdjustmentField, eta: f64, side: Side, j: usize, k: usize, q: i64) -> f64 {
    eta * (adj.a(side).get(j, k) - 2.0 * side.sign() * q as f64 * adj.b(side).get(j, k))
}

/// Decision of the small risk-aversion policy at a node.
pub fn control_approx_node(
    g: &Barriers,
    adj: &AdjustmentField,
    eta: f64,
    j: usize,
    k: usize,
    q: i64,
) -> QuoteDecision {
    QuoteDecision::from_fn(|side| g.side(side).get(j, k) > approx_threshold(adj, eta, side, j, k, q))
}

pub fn control_approx(
    g: &Barriers,
    adj: &AdjustmentField,
    eta: f64,
    t: f64,
    s: f64,
    q: i64,
) -> Result<QuoteDecision> {
    let (j, k) = node(&g.spec(), t, s)?;
    Ok(control_approx_node(g, adj, eta, j, k, q))
}

/// Inventory level `q*` with `ell_nu = 1` exactly when `nu q > q*`, or `None`
/// when `B` vanishes and the decision does not depend on `q`.
pub fn switch_inventory(
    g: &Barriers,
    adj: &AdjustmentField,
    eta: f64,
    side: Side,
    j: usize,
    k: usize,
) -> Option<f64> {
    let b = adj.b(side).get(j, k);
    if eta <= 0.0 || b <= 0.0 {
        return None;
    }
    Some((eta * adj.a(side).get(j, k) - g.side(side).get(j, k)) / (2.0 * eta * b))
}

/// `<C_nu, zeta>` at a node, the exact risk-averse threshold.
pub fn exact_threshold(
    model: &MarketModel,
    zeta: &ZetaField,
    side: Side,
    j: usize,
    k: usize,
    q: i64,
) -> f64 {
    let s = zeta.spec.s(k);
    apply_c(model, side, s, q, |qq, reset| {
        zeta.get(j, if reset { 0 } else { k }, qq)
    })
}

/// Decision of the exact risk-averse policy at a node.
pub fn control_exact_node(
    model: &MarketModel,
    zeta: &ZetaField,
    g: &Barriers,
    j: usize,
    k: usize,
    q: i64,
) -> Result<QuoteDecision> {
    let reach = q.abs() + model.params().lot_size as i64;
    if reach > zeta.q_max {
        return Err(Error::QRangeExceeded {
            q,
            q_max: zeta.q_max,
        });
    }
    Ok(QuoteDecision::from_fn(|side| {
        g.side(side).get(j, k) > exact_threshold(model, zeta, side, j, k, q)
    }))
}

pub fn control_exact(
    zeta: &ZetaField,
    g: &Barriers,
    model: &MarketModel,
    t: f64,
    s: f64,
    q: i64,
) -> Result<QuoteDecision> {
    let (j, k) = node(&g.spec(), t, s)?;
    control_exact_node(model, zeta, g, j, k, q)
}

/// Largest `|<C_nu, eta (q^2 + 2 q zeta1 + zeta0)> - eta (A_nu - 2 nu q B_nu)|`
/// over every node, both sides and `|q| <= q_bound`.
pub fn operator_identity_residual(
    model: &MarketModel,
    zeta1: &ValueGrid,
    zeta0: &ValueGrid,
    adj: &AdjustmentField,
    eta: f64,
    q_bound: i64,
) -> f64 {
    let spec = zeta1.spec;
    let mut worst: f64 = 0.0;
    for j in 0..=spec.n_t {
        for k in 0..=spec.n_s {
            let s = spec.s(k);
            for q in -q_bound..=q_bound {
                let f = |q: i64, reset: bool| {
                    let kk = if reset { 0 } else { k };
                    let q = q as f64;
                    eta * (q * q + 2.0 * q * zeta1.get(j, kk) + zeta0.get(j, kk))
                };
                for side in Side::BOTH {
                    let got = apply_c(model, side, s, q, f);
                    let want = approx_threshold(adj, eta, side, j, k, q);
                    worst = worst.max((got - want).abs());
                }
            }
        }
    }
    worst
}

/// Fraction of `(t, s, q)` nodes with `|q| <= q_bound` where the exact and the
/// small risk-aversion policies post different quotes.
pub fn control_disagreement(
    model: &MarketModel,
    zeta: &ZetaField,
    g: &Barriers,
    adj: &AdjustmentField,
    q_bound: i64,
) -> Result<f64> {
    let spec = g.spec();
    let mut differ = 0usize;
    let mut total = 0usize;
    for j in 0..=spec.n_t {
        for k in 0..=spec.n_s {
            for q in -q_bound..=q_bound {
                let exact = control_exact_node(model, zeta, g, j, k, q)?;
                let approx = control_approx_node(g, adj, zeta.eta, j, k, q);
                total += 1;
                differ += usize::from(exact != approx);
            }
        }
    }
    Ok(differ as f64 / total as f64)
}

/// A feedback quoting rule on `(t, s, q)`.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn decide(&self, t: f64, s: f64, q: i64) -> Result<QuoteDecision>;
}

/// Never quotes.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hold;

impl Policy for Hold {
    fn name(&self) -> &str {
        "hold"
    }

    fn decide(&self, _t: f64, _s: f64, _q: i64) -> Result<QuoteDecision> {
        Ok(QuoteDecision::NONE)
    }
}

/// Always quotes on both sides.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysOn;

impl Policy for AlwaysOn {
    fn name(&self) -> &str {
        "always_on"
    }

    fn decide(&self, _t: f64, _s: f64, _q: i64) -> Result<QuoteDecision> {
        Ok(QuoteDecision::BOTH)
    }
}

#[derive(Debug, Clone)]
pub struct Eta0Policy {
    pub barriers: Arc<Barriers>,
}

impl Policy for Eta0Policy {
    fn name(&self) -> &str {
        "eta0"
    }

    fn decide(&self, t: f64, s: f64, _q: i64) -> Result<QuoteDecision> {
        control_eta0(&self.barriers, t, s)
    }
}

#[derive(Debug, Clone)]
pub struct ApproxPolicy {
    pub barriers: Arc<Barriers>,
    pub adjustments: Arc<AdjustmentField>,
    pub eta: f64,
}

impl Policy for ApproxPolicy {
    fn name(&self) -> &str {
        "approx"
    }

    fn decide(&self, t: f64, s: f64, q: i64) -> Result<QuoteDecision> {
        control_approx(&self.barriers, &self.adjustments, self.eta, t, s, q)
    }
}

#[derive(Debug, Clone)]
pub struct ExactPolicy {
    pub model: Arc<MarketModel>,
    pub barriers: Arc<Barriers>,
    pub zeta: Arc<ZetaField>,
}

impl Policy for ExactPolicy {
    fn name(&self) -> &str {
        "exact"
    }

    fn decide(&self, t: f64, s: f64, q: i64) -> Result<QuoteDecision> {
        control_exact(&self.zeta, &self.barriers, &self.model, t, s, q)
    }
}

/// Writes `t,s,[q,]ell_plus,ell_minus` for every lattice node (and every `q`
/// in `q_range` when given).
pub fn write_policy_csv<W: Write>(
    writer: W,
    spec: &GridSpec,
    q_range: Option<std::ops::RangeInclusive<i64>>,
    mut decide: impl FnMut(usize, usize, i64) -> Result<QuoteDecision>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_q = q_range.is_some();
    if with_q {
        w.write_record(["t", "s", "q", "ell_plus", "ell_minus"])
    } else {
        w.write_record(["t", "s", "ell_plus", "ell_minus"])
    }
    .map_err(csv_err)?;
    let qs: Vec<i64> = q_range.map(|r| r.collect()).unwrap_or_else(|| vec![0]);
    for j in 0..=spec.n_t {
        for &q in &qs {
            for k in 0..=spec.n_s {
                let d = decide(j, k, q)?;
                let (t, s) = (spec.t(j).to_string(), spec.s(k).to_string());
                let (lp, lm) = (u8::from(d.ell_plus).to_string(), u8::from(d.ell_minus).to_string());
                if with_q {
                    w.write_record([t, s, q.to_string(), lp, lm])
                } else {
                    w.write_record([t, s, lp, lm])
                }
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{solve_linear, solve_zeta_exact_unchecked, LinearSolution};
    use crate::testing::weibull_exp_params;

    fn solved(eta: f64) -> (MarketModel, LinearSolution) {
        let mut p = weibull_exp_params();
        p.eta = eta;
        p.horizon = 2.0;
        let m = MarketModel::new(p).unwrap();
        let spec = GridSpec::for_model(&m, 0.05).unwrap();
        let sol = solve_linear(&m, &spec).unwrap();
        (m, sol)
    }

    fn barriers_from(gp: f64, gm: f64) -> Barriers {
        let spec = GridSpec::new(0.5, 1.0, 1.0).unwrap();
        let fill = |v: f64, kind| ValueGrid::from_values(kind, spec, vec![v; spec.node_count()]).unwrap();
        Barriers {
            plus: fill(gp, FieldKind::GPlus),
            minus: fill(gm, FieldKind::GMinus),
        }
    }

    #[test]
    fn eta0_reads_barrier_signs() {
        assert_eq!(
            control_eta0(&barriers_from(0.3, -0.1), 0.2, 0.4).unwrap(),
            QuoteDecision::new(true, false)
        );
        assert_eq!(
            control_eta0(&barriers_from(0.0, 0.0), 0.2, 0.4).unwrap(),
            QuoteDecision::NONE
        );
        assert!(matches!(
            control_eta0(&barriers_from(1.0, 1.0), 1.7, 0.0),
            Err(Error::OutOfGrid { .. })
        ));
    }

    #[test]
    fn terminal_row_quotes_both_sides_when_spread_pays() {
        let (m, sol) = solved(0.0);
        let p = m.params();
        let spec = sol.theta.spec;
        for k in 0..=spec.n_s {
            let s = spec.s(k);
            let pays = Side::BOTH.iter().all(|&side| {
                m.side_intensity(side, s) * (p.delta - p.fee) * p.fill(side).mean()
                    > m.hazard_frozen(side, s) * (p.delta + p.fee) * p.lot_size as f64
            });
            let d = control_eta0(&sol.barriers, p.horizon, s).unwrap();
            assert_eq!(d == QuoteDecision::BOTH, pays, "s = {s}");
        }
    }

    #[test]
    fn adjustments_reduce_without_zeta1() {
        let (m, sol) = solved(0.0);
        let spec = sol.zeta1.spec;
        let zero = ValueGrid::zeros(FieldKind::Zeta1, spec);
        let adj = adjustments(&m, &zero);
        let p = m.params();
        let lot = p.lot_size as f64;
        for side in Side::BOTH {
            for k in [0, 4, spec.n_s] {
                let s = spec.s(k);
                let (h, l) = (m.hazard_frozen(side, s), m.side_intensity(side, s));
                let fill = p.fill(side);
                assert!((adj.a(side).get(3, k) - (h * lot * lot + l * fill.second_moment())).abs() < 1e-14);
                assert!((adj.b(side).get(3, k) - (h * lot + l * fill.mean())).abs() < 1e-14);
            }
        }
        let adj = adjustments(&m, &sol.zeta1);
        assert!(adj.b.iter().all(|b| b.values().iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn approx_with_zero_eta_is_eta0() {
        let (m, sol) = solved(0.0);
        let adj = adjustments(&m, &sol.zeta1);
        let spec = sol.theta.spec;
        for j in 0..=spec.n_t {
            for k in 0..=spec.n_s {
                let d0 = control_eta0(&sol.barriers, spec.t(j), spec.s(k)).unwrap();
                for q in [-3, 0, 5] {
                    assert_eq!(control_approx_node(&sol.barriers, &adj, 0.0, j, k, q), d0);
                }
            }
        }
    }

    #[test]
    fn approx_is_monotone_in_inventory() {
        let (m, sol) = solved(0.05);
        let adj = adjustments(&m, &sol.zeta1);
        let spec = sol.theta.spec;
        for j in (0..=spec.n_t).step_by(5) {
            for k in (0..=spec.n_s).step_by(7) {
                let mut prev = control_approx_node(&sol.barriers, &adj, 0.05, j, k, -40);
                for q in -39..=40 {
                    let d = control_approx_node(&sol.barriers, &adj, 0.05, j, k, q);
                    assert!(d.ell_plus >= prev.ell_plus && d.ell_minus <= prev.ell_minus);
                    prev = d;
                }
                assert_eq!(prev, QuoteDecision::new(true, false));
                let q_star = switch_inventory(&sol.barriers, &adj, 0.05, Side::Strong, j, k).unwrap();
                let above = q_star.floor() as i64 + 1;
                assert!(control_approx_node(&sol.barriers, &adj, 0.05, j, k, above).ell_plus);
            }
        }
    }

    #[test]
    fn exact_with_zero_eta_is_eta0_and_range_checked() {
        let (m, sol) = solved(0.0);
        let zeta = solve_zeta_exact_unchecked(&m, &sol.barriers, 6).unwrap();
        let spec = sol.theta.spec;
        for j in (0..=spec.n_t).step_by(3) {
            for k in (0..=spec.n_s).step_by(3) {
                let d0 = control_eta0(&sol.barriers, spec.t(j), spec.s(k)).unwrap();
                assert_eq!(control_exact_node(&m, &zeta, &sol.barriers, j, k, 2).unwrap(), d0);
            }
        }
        assert!(matches!(
            control_exact_node(&m, &zeta, &sol.barriers, 0, 0, 5),
            Err(Error::QRangeExceeded { .. })
        ));
    }

    #[test]
    fn exact_terminal_threshold_closed_form() {
        let (m, sol) = solved(0.02);
        let zeta = solve_zeta_exact_unchecked(&m, &sol.barriers, 12).unwrap();
        let p = m.params();
        let spec = zeta.spec;
        let lot = p.lot_size as f64;
        let j = spec.n_t;
        for k in [0, 9, spec.n_s] {
            let s = spec.s(k);
            for q in -4i64..=4 {
                for side in Side::BOTH {
                    let nu = side.sign();
                    let fill = p.fill(side);
                    let (h, l) = (m.hazard_frozen(side, s), m.side_intensity(side, s));
                    let qf = q as f64;
                    let want = 0.02
                        * (h * (lot * lot - 2.0 * nu * qf * lot)
                            + l * (fill.second_moment() - 2.0 * nu * qf * fill.mean()));
                    let got = exact_threshold(&m, &zeta, side, j, k, q);
                    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn policy_csv_has_one_row_per_node() {
        let (_, sol) = solved(0.0);
        let spec = sol.theta.spec;
        let mut buf = Vec::new();
        write_policy_csv(&mut buf, &spec, None, |j, k, _| {
            Ok(QuoteDecision::from_fn(|side| sol.barriers.active(side, j, k)))
        })
        .unwrap();
        let lines = String::from_utf8(buf).unwrap().lines().count();
        assert_eq!(lines, spec.node_count() + 1);
    }
}
