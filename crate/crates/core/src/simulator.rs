//! Event-driven Monte-Carlo backtester and the probabilistic oracles used to
//! validate the grid solvers.
//!
//! Each path draws its market (jumps and trades) from its own `Market`
//! substream, so every policy sees the same market for a given seed. Fill
//! sizes come from the `Fills` substream.
//!
//! Quotes are predictable: the decision used at an event is taken from the
//! left-limit state `(t, S_{t-}, Q_{t-})`. Between events nothing can fill,
//! so re-evaluating on a time grid in between would not change any path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{simulate_trades, EventKind, EventTape, PricePath};
use crate::model::{MarketModel, MarketState, PortfolioState, Side};
use crate::policy::{Policy, QuoteDecision};
use crate::rng::{substream, Stream};
use crate::stats::{Estimate, Moments};

/// Initial condition of every path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartState {
    pub t: f64,
    /// Mid-price `p`; later prices are `p + 2 delta * ticks`.
    pub price: f64,
    pub direction: i64,
    pub elapsed: f64,
    pub cash: f64,
    pub inventory: i64,
}

impl Default for StartState {
    fn default() -> Self {
        StartState {
            t: 0.0,
            price: 0.0,
            direction: 1,
            elapsed: 0.0,
            cash: 0.0,
            inventory: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub start: StartState,
    /// Keep every path's tape (with agent fills) in the report.
    #[serde(default)]
    pub record_tapes: bool,
}

impl BacktestConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        BacktestConfig {
            n_paths,
            seed,
            start: StartState::default(),
            record_tapes: false,
        }
    }

    fn validate(&self, model: &MarketModel) -> Result<()> {
        let s = &self.start;
        if self.n_paths == 0 {
            return Err(Error::InvalidParams("n_paths must be >= 1".into()));
        }
        if s.direction != 1 && s.direction != -1 {
            return Err(Error::InvalidParams(format!("start direction {}", s.direction)));
        }
        if !(s.elapsed >= 0.0 && s.t >= 0.0 && s.t <= model.params().horizon) {
            return Err(Error::InvalidParams(format!(
                "start (t = {}, s = {}) outside [0, T] x [0, inf)",
                s.t, s.elapsed
            )));
        }
        Ok(())
    }
}

/// Executed quantities split by what caused them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillCounts {
    pub trade_events: u64,
    pub trade_lots: u64,
    pub jump_events: u64,
    pub jump_lots: u64,
}

impl FillCounts {
    fn add(&mut self, other: &FillCounts) {
        self.trade_events += other.trade_events;
        self.trade_lots += other.trade_lots;
        self.jump_events += other.jump_events;
        self.jump_lots += other.jump_lots;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub policy: String,
    pub n_paths: usize,
    pub seed: u64,
    pub eta: f64,
    pub params_hash: String,
    /// `X_T + Y_T P_T - eta Y_T^2`.
    pub utility: Estimate,
    pub inventory_mean: f64,
    pub inventory_variance: f64,
    pub fills: FillCounts,
    #[serde(skip)]
    pub tapes: Option<Vec<EventTape>>,
}

/// Cash and inventory updates shared by the backtester and tape replay.
#[derive(Debug, Clone, Copy)]
struct Book {
    delta: f64,
    fee: f64,
    offset: f64,
}

impl Book {
    fn new(model: &MarketModel, offset: f64) -> Self {
        let p = model.params();
        Book {
            delta: p.delta,
            fee: p.fee,
            offset,
        }
    }

    fn price(&self, tick: i64) -> f64 {
        self.offset + 2.0 * self.delta * tick as f64
    }

    /// `k` lots filled against an order on exchange side `z` (+1 the ask,
    /// -1 the bid) quoted around the mid at `tick`.
    fn fill(&self, pf: &mut PortfolioState, z: i64, k: u32, tick: i64) {
        pf.cash += k as f64 * (z as f64 * self.price(tick) + self.delta - self.fee);
        pf.inventory -= k as i64 * z;
    }
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub portfolio: PortfolioState,
    pub terminal: MarketState,
    pub terminal_price: f64,
    pub fills: FillCounts,
    pub tape: EventTape,
}

impl PathOutcome {
    pub fn utility(&self, eta: f64) -> f64 {
        let y = self.portfolio.inventory as f64;
        self.portfolio.cash + y * self.terminal_price - eta * y * y
    }

    pub fn strong_inventory(&self) -> i64 {
        self.portfolio.strong_inventory(self.terminal.direction)
    }
}

fn undefined(err: Error, t: f64, s: f64, q: i64) -> Error {
    match err {
        e @ Error::PolicyUndefined { .. } => e,
        other => Error::PolicyUndefined {
            t,
            s,
            q,
            reason: other.to_string(),
        },
    }
}

/// Simulates path `index` of a backtest under `policy`.
pub fn simulate_path(
    model: &MarketModel,
    policy: &dyn Policy,
    config: &BacktestConfig,
    index: u64,
) -> Result<PathOutcome> {
    let start = config.start;
    let p = model.params();
    let mut market_rng = substream(config.seed, index, Stream::Market);
    let mut fill_rng = substream(config.seed, index, Stream::Fills);
    let m0 = MarketState::new(start.t, 0, start.direction, start.elapsed);
    let path = PricePath::simulate(model, m0, p.horizon, &mut market_rng)?;
    let trades = simulate_trades(&path, model, &mut market_rng)?;
    let mut tape = EventTape::from_market(&path, &trades, p.delta, start.price);

    let book = Book::new(model, start.price);
    let lot = p.lot_size;
    let mut pf = PortfolioState {
        cash: start.cash,
        inventory: start.inventory,
    };
    let mut tick = 0i64;
    let mut direction = start.direction;
    let mut fills = FillCounts::default();
    for row in tape.rows.iter_mut() {
        let q = pf.strong_inventory(direction);
        let decision: QuoteDecision = policy
            .decide(row.time, row.state_s, q)
            .map_err(|e| undefined(e, row.time, row.state_s, q))?;
        match row.kind {
            EventKind::Trade => {
                let side = Side::from_sign(row.direction * direction);
                if decision.posted(side) {
                    let k = p.fill(side).draw(&mut fill_rng);
                    book.fill(&mut pf, row.direction, k, tick);
                    row.fill = k;
                    if k > 0 {
                        fills.trade_events += 1;
                        fills.trade_lots += k as u64;
                    }
                }
            }
            EventKind::Jump => {
                let side = Side::from_sign(row.direction * direction);
                if decision.posted(side) {
                    book.fill(&mut pf, row.direction, lot, tick);
                    row.fill = lot;
                    fills.jump_events += 1;
                    fills.jump_lots += lot as u64;
                }
                tick += row.direction;
                direction = row.direction;
            }
        }
    }
    let terminal = path.terminal_state();
    debug_assert_eq!(terminal.tick, tick);
    Ok(PathOutcome {
        portfolio: pf,
        terminal,
        terminal_price: book.price(tick),
        fills,
        tape,
    })
}

/// Runs every path in parallel and reduces the outcomes in path order.
pub fn run_paths(
    model: &MarketModel,
    policy: &dyn Policy,
    config: &BacktestConfig,
) -> Result<Vec<PathOutcome>> {
    config.validate(model)?;
    (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(model, policy, config, i))
        .collect()
}

pub fn run_backtest(
    config: &BacktestConfig,
    model: &MarketModel,
    policy: &dyn Policy,
) -> Result<BacktestReport> {
    let outcomes = run_paths(model, policy, config)?;
    let eta = model.params().eta;
    let mut utility = Moments::default();
    let mut inventory = Moments::default();
    let mut fills = FillCounts::default();
    for o in &outcomes {
        utility.push(o.utility(eta));
        inventory.push(o.portfolio.inventory as f64);
        fills.add(&o.fills);
    }
    let tapes = config
        .record_tapes
        .then(|| outcomes.into_iter().map(|o| o.tape).collect());
    Ok(BacktestReport {
        policy: policy.name().to_string(),
        n_paths: config.n_paths,
        seed: config.seed,
        eta,
        params_hash: model.params().hash(),
        utility: utility.estimate(),
        inventory_mean: inventory.mean(),
        inventory_variance: inventory.variance(),
        fills,
        tapes,
    })
}

/// Rebuilds terminal cash and inventory from a tape with agent fills.
///
/// Uses the same arithmetic as the backtester, so the result is bit-exact.
pub fn replay_tape(model: &MarketModel, tape: &EventTape, start: &StartState) -> Result<PortfolioState> {
    let p = model.params();
    let book = Book::new(model, start.price);
    let mut pf = PortfolioState {
        cash: start.cash,
        inventory: start.inventory,
    };
    let mut tick = 0i64;
    for row in &tape.rows {
        match row.kind {
            EventKind::Trade => {
                if row.fill > 0 {
                    book.fill(&mut pf, row.direction, row.fill, tick);
                }
            }
            EventKind::Jump => {
                if row.fill > 0 {
                    book.fill(&mut pf, row.direction, row.fill, tick);
                }
                let post = ((row.price - start.price) / (2.0 * p.delta)).round() as i64;
                if post != tick + row.direction {
                    return Err(Error::Schema(format!(
                        "jump at t = {} lands on tick {post}, expected {}",
                        row.time,
                        tick + row.direction
                    )));
                }
                tick = post;
            }
        }
    }
    Ok(pf)
}

/// Monte-Carlo value of `E[int_{t0}^T f(u, S_u) du | S_{t0} = s0]`, where
/// `S` is the elapsed-time process alone (reset to zero at rate `sigma2`).
///
/// Each constant-clock segment is integrated with composite Simpson steps no
/// longer than `step`.
pub fn oracle_elapsed_time_functional(
    model: &MarketModel,
    integrand: &(dyn Fn(f64, f64) -> f64 + Sync),
    t0: f64,
    s0: f64,
    n_paths: usize,
    seed: u64,
    step: f64,
) -> Result<Estimate> {
    let horizon = model.params().horizon;
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = substream(seed, i, Stream::Aux);
            let (mut t, mut s) = (t0, s0);
            let mut total = 0.0;
            while t < horizon {
                let (wait, _) = model.sample_next_jump(s, &mut rng)?;
                let end = (t + wait).min(horizon);
                total += simpson(|u| integrand(u, s + (u - t)), t, end, step);
                t = end;
                s = 0.0;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    Ok(Moments::from_slice(&values).estimate())
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, step: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = (((b - a) / step).ceil() as usize).max(1) * 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Terminal inventory moments from zero inventory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryMoments {
    /// `E[Y_T]` started from `I = +1`.
    pub inventory: Estimate,
    /// `E[Q_T^2]` for the strong inventory.
    pub strong_inventory_sq: Estimate,
}

/// Inventory-only dynamics under `policy` from `(t0, I = +1, s0, Y = 0)`.
pub fn oracle_inventory_moments(
    model: &MarketModel,
    policy: &dyn Policy,
    t0: f64,
    s0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<InventoryMoments> {
    let config = BacktestConfig {
        n_paths,
        seed,
        start: StartState {
            t: t0,
            elapsed: s0,
            ..StartState::default()
        },
        record_tapes: false,
    };
    let outcomes = run_paths(model, policy, &config)?;
    let mut y = Moments::default();
    let mut q2 = Moments::default();
    for o in &outcomes {
        y.push(o.portfolio.inventory as f64);
        let q = o.strong_inventory() as f64;
        q2.push(q * q);
    }
    Ok(InventoryMoments {
        inventory: y.estimate(),
        strong_inventory_sq: q2.estimate(),
    })
}

/// One row of a cross-policy utility comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub eta: f64,
    pub policy: String,
    pub utility: Estimate,
}

/// Backtests each policy at each risk aversion on common random numbers.
///
/// `policies(eta)` returns the policies to compare at that `eta`.
pub fn utility_curve(
    params: &crate::model::ModelParams,
    eta_list: &[f64],
    config: &BacktestConfig,
    mut policies: impl FnMut(&MarketModel) -> Result<Vec<Box<dyn Policy>>>,
) -> Result<Vec<UtilityRow>> {
    let mut rows = Vec::new();
    for &eta in eta_list {
        let mut p = params.clone();
        p.eta = eta;
        let model = MarketModel::new(p)?;
        for policy in policies(&model)? {
            let report = run_backtest(config, &model, policy.as_ref())?;
            rows.push(UtilityRow {
                eta,
                policy: report.policy,
                utility: report.utility,
            });
        }
    }
    Ok(rows)
}
