//! Estimators for every model primitive from an event tape.
//!
//! Inter-arrival `S_n = T_n - T_{n-1}` is paired with the mark
//! `B_n = J_n J_{n-1}` of the jump that ends it. Only jumps observed inside
//! the tape are used, so the elapsed time before the first jump (whose start
//! is unobserved) never enters an estimate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{csv_err, EventKind, EventTape};
use crate::stats::Moments;

/// A proportion-type estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    /// Every observation was identical, so the standard error is zero.
    pub degenerate: bool,
}

fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let m = Moments::from_slice(xs);
    let degenerate = xs.windows(2).all(|w| w[0] == w[1]);
    MeanEstimate {
        value: m.mean(),
        se: if degenerate { 0.0 } else { m.std_error() },
        n: xs.len(),
        degenerate,
    }
}

struct Jump {
    time: f64,
    direction: i64,
}

fn jumps(tape: &EventTape) -> Vec<Jump> {
    tape.jumps()
        .map(|r| Jump {
            time: r.time,
            direction: r.direction,
        })
        .collect()
}

/// `(S_n, B_n)` for consecutive observed jumps.
fn inter_arrivals(tape: &EventTape) -> Vec<(f64, i64)> {
    jumps(tape)
        .windows(2)
        .map(|w| (w[1].time - w[0].time, w[1].direction * w[0].direction))
        .collect()
}

/// Mean of `B_n` over consecutive jumps.
pub fn estimate_alpha(tape: &EventTape) -> Result<MeanEstimate> {
    let marks: Vec<f64> = inter_arrivals(tape).iter().map(|&(_, b)| b as f64).collect();
    if marks.is_empty() {
        return Err(Error::InsufficientData(
            "alpha needs at least two jumps".into(),
        ));
    }
    Ok(mean_estimate(&marks))
}

/// Mean of `Z_k I_{theta_k-}` over trades preceded by a jump.
pub fn estimate_rho(tape: &EventTape) -> Result<MeanEstimate> {
    let mut direction = None;
    let mut xs = Vec::new();
    for r in &tape.rows {
        match r.kind {
            EventKind::Jump => direction = Some(r.direction),
            EventKind::Trade => {
                if let Some(i) = direction {
                    xs.push((r.direction * i) as f64);
                }
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::InsufficientData(
            "rho needs a trade after the first jump".into(),
        ));
    }
    Ok(mean_estimate(&xs))
}

/// Empirical CDF of one class of inter-arrivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    /// Sorted sample.
    pub sample: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut sample: Vec<f64>) -> Self {
        sample.sort_by(f64::total_cmp);
        EmpiricalCdf { sample }
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if self.sample.is_empty() {
            return f64::NAN;
        }
        self.sample.partition_point(|&x| x <= s) as f64 / self.sample.len() as f64
    }
}

/// Occurrence/exposure hazards on one elapsed-time bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardBin {
    pub s_lo: f64,
    pub s_hi: f64,
    /// Pooled empirical renewal quantile at the bin edges.
    pub quantile_lo: f64,
    pub quantile_hi: f64,
    pub exposure: f64,
    pub events_plus: u64,
    pub events_minus: u64,
    pub h_plus: f64,
    pub h_minus: f64,
    pub se_plus: f64,
    pub se_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalEstimate {
    pub pooled: EmpiricalCdf,
    /// `None` when the class never occurs.
    pub plus: Option<EmpiricalCdf>,
    pub minus: Option<EmpiricalCdf>,
    pub bins: Vec<HazardBin>,
    pub warnings: Vec<String>,
}

/// Minimum number of jumps ending in a hazard bin.
pub const MIN_BIN_EVENTS: usize = 30;
/// Class size below which a warning is attached.
pub const RECOMMENDED_CLASS_SIZE: usize = 50;

/// Empirical `F+/-` and binned hazards on the pooled renewal-quantile axis,
/// with at most `max_bins` bins of at least [`MIN_BIN_EVENTS`] events each.
pub fn estimate_renewal(tape: &EventTape, max_bins: usize) -> Result<RenewalEstimate> {
    let pairs = inter_arrivals(tape);
    if pairs.len() < MIN_BIN_EVENTS {
        return Err(Error::InsufficientData(format!(
            "{} inter-arrivals, need at least {MIN_BIN_EVENTS}",
            pairs.len()
        )));
    }
    let class = |b: i64| {
        let xs: Vec<f64> = pairs.iter().filter(|p| p.1 == b).map(|p| p.0).collect();
        (!xs.is_empty()).then(|| EmpiricalCdf::new(xs))
    };
    let plus = class(1);
    let minus = class(-1);
    let mut warnings = Vec::new();
    for (name, c) in [("F+", &plus), ("F-", &minus)] {
        match c {
            None => warnings.push(format!("{name} undefined: no inter-arrivals in this class")),
            Some(c) if c.len() < RECOMMENDED_CLASS_SIZE => warnings.push(format!(
                "{name} estimated from only {} inter-arrivals",
                c.len()
            )),
            _ => {}
        }
    }
    let pooled = EmpiricalCdf::new(pairs.iter().map(|p| p.0).collect());
    let n = pooled.len();

    // Equal-count edges on the pooled sample, then merge bins that fall
    // short of the minimum (ties can make them thin).
    let n_bins = max_bins.clamp(1, n / MIN_BIN_EVENTS);
    let mut edges = vec![0.0];
    for b in 1..n_bins {
        let e = pooled.sample[b * n / n_bins];
        if e > *edges.last().expect("non-empty") {
            edges.push(e);
        }
    }
    edges.push(f64::INFINITY);
    let count_in = |lo: f64, hi: f64| pooled.sample.iter().filter(|&&x| x >= lo && x < hi).count();
    let mut merged = vec![edges[0]];
    for &e in &edges[1..edges.len() - 1] {
        if count_in(*merged.last().expect("non-empty"), e) >= MIN_BIN_EVENTS {
            merged.push(e);
        }
    }
    if merged.len() > 1 && count_in(*merged.last().expect("non-empty"), f64::INFINITY) < MIN_BIN_EVENTS {
        merged.pop();
    }
    merged.push(f64::INFINITY);

    let bins = merged
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let mut exposure = 0.0;
            let (mut ep, mut em) = (0u64, 0u64);
            for &(s, b) in &pairs {
                exposure += (s.min(hi) - lo).max(0.0);
                if s >= lo && s < hi {
                    if b == 1 {
                        ep += 1;
                    } else {
                        em += 1;
                    }
                }
            }
            let rate = |e: u64| e as f64 / exposure;
            let se = |e: u64| (e as f64).sqrt() / exposure;
            HazardBin {
                s_lo: lo,
                s_hi: if hi.is_finite() { hi } else { pooled.sample[n - 1] },
                quantile_lo: pooled.sample.partition_point(|&x| x < lo) as f64 / n as f64,
                quantile_hi: if hi.is_finite() { pooled.cdf(hi) } else { 1.0 },
                exposure,
                events_plus: ep,
                events_minus: em,
                h_plus: rate(ep),
                h_minus: rate(em),
                se_plus: se(ep),
                se_minus: se(em),
            }
        })
        .collect();
    Ok(RenewalEstimate {
        pooled,
        plus,
        minus,
        bins,
        warnings,
    })
}

/// Fitted `lambda(s) = lambda0 + a exp(-k s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda0: f64,
    pub a: f64,
    pub k: f64,
    /// Standard errors from the observed information; `None` for parameters
    /// that sit on a bound (and for `k` when `a` does).
    pub se: [Option<f64>; 3],
    pub loglik: f64,
    pub iterations: usize,
    pub n_trades: usize,
    pub window: f64,
}

impl LambdaFit {
    pub fn rate(&self, s: f64) -> f64 {
        self.lambda0 + self.a * (-self.k * s).exp()
    }
}

/// Data for the intensity likelihood: trade elapsed times and inter-jump
/// segment lengths (the last one censored by the horizon).
struct IntensityData {
    trades: Vec<f64>,
    segments: Vec<f64>,
}

fn intensity_data(tape: &EventTape) -> Result<IntensityData> {
    let first = tape
        .jumps()
        .next()
        .ok_or_else(|| Error::InsufficientData("intensity fit needs a jump".into()))?
        .time;
    let end = tape
        .horizon
        .or_else(|| tape.rows.last().map(|r| r.time))
        .unwrap_or(first);
    let mut last = first;
    let mut trades = Vec::new();
    let mut segments = Vec::new();
    for r in tape.rows.iter().filter(|r| r.time > first) {
        match r.kind {
            EventKind::Trade => trades.push(r.time - last),
            EventKind::Jump => {
                segments.push(r.time - last);
                last = r.time;
            }
        }
    }
    segments.push((end - last).max(0.0));
    if trades.is_empty() {
        return Err(Error::InsufficientData(
            "intensity fit needs at least one trade after the first jump".into(),
        ));
    }
    Ok(IntensityData { trades, segments })
}

impl IntensityData {
    /// Log-likelihood and its gradient in `(lambda0, a, k)`.
    fn loglik(&self, x: [f64; 3]) -> (f64, [f64; 3]) {
        let [l0, a, k] = x;
        let mut ll = 0.0;
        let mut g = [0.0; 3];
        for &s in &self.trades {
            let e = (-k * s).exp();
            let r = l0 + a * e;
            ll += r.ln();
            g[0] += 1.0 / r;
            g[1] += e / r;
            g[2] -= a * s * e / r;
        }
        for &d in &self.segments {
            let e = (-k * d).exp();
            let one_minus = -(-k * d).exp_m1();
            ll -= l0 * d + a / k * one_minus;
            g[0] -= d;
            g[1] -= one_minus / k;
            g[2] -= a * (d * e / k - one_minus / (k * k));
        }
        (ll, g)
    }

    fn window(&self) -> f64 {
        self.segments.iter().sum()
    }
}

/// Bounds on `ln(lambda0), ln(a), ln(k)`.
const LOG_LO: [f64; 3] = [-20.0, -25.0, -10.0];
const LOG_HI: [f64; 3] = [12.0, 12.0, 8.0];
const MLE_MAX_ITER: usize = 500;
const MLE_GRAD_TOL: f64 = 1e-7;

struct Optimum {
    y: [f64; 3],
    f: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn project(y: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| y[i].clamp(LOG_LO[i], LOG_HI[i]))
}

/// Components of the gradient that can still move the iterate inward.
fn projected_gradient(y: &[f64; 3], g: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| {
        let at_lo = y[i] <= LOG_LO[i] && g[i] > 0.0;
        let at_hi = y[i] >= LOG_HI[i] && g[i] < 0.0;
        if at_lo || at_hi {
            0.0
        } else {
            g[i]
        }
    })
}

/// Projected BFGS on a box.
fn minimize(f: &impl Fn(&[f64; 3]) -> (f64, [f64; 3]), y0: [f64; 3]) -> Optimum {
    let mut y = project(y0);
    let (mut fy, mut g) = f(&y);
    let mut h = [[0.0; 3]; 3];
    let reset = |h: &mut [[f64; 3]; 3]| {
        *h = [[0.0; 3]; 3];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
    };
    reset(&mut h);
    for it in 0..MLE_MAX_ITER {
        let pg = projected_gradient(&y, &g);
        let gn = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gn < MLE_GRAD_TOL || !fy.is_finite() {
            return Optimum {
                y,
                f: fy,
                grad_norm: gn,
                iterations: it,
                converged: fy.is_finite(),
            };
        }
        let free: [bool; 3] = std::array::from_fn(|i| pg[i] != 0.0 || (y[i] > LOG_LO[i] && y[i] < LOG_HI[i]));
        let mut d = [0.0; 3];
        for i in 0..3 {
            if free[i] {
                d[i] = -(0..3).filter(|&j| free[j]).map(|j| h[i][j] * pg[j]).sum::<f64>();
            }
        }
        if dot(&d, &pg) >= 0.0 {
            reset(&mut h);
            d = pg.map(|v| -v);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = project(std::array::from_fn(|i| y[i] + step * d[i]));
            let (ft, gt) = f(&trial);
            let moved: [f64; 3] = std::array::from_fn(|i| trial[i] - y[i]);
            if ft.is_finite() && ft <= fy + 1e-4 * dot(&g, &moved) {
                accepted = Some((trial, ft, gt, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt, s)) = accepted else {
            return Optimum {
                y,
                f: fy,
                grad_norm: gn,
                iterations: it,
                converged: false,
            };
        };
        let yv: [f64; 3] = std::array::from_fn(|i| gt[i] - g[i]);
        let sy = dot(&s, &yv);
        if sy > 1e-14 {
            // Inverse BFGS update.
            let hy: [f64; 3] = std::array::from_fn(|i| dot(&h[i], &yv));
            let yhy = dot(&yv, &hy);
            let mut nh = h;
            for i in 0..3 {
                for j in 0..3 {
                    nh[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
            h = nh;
        } else {
            reset(&mut h);
        }
        y = trial;
        fy = ft;
        g = gt;
    }
    let pg = projected_gradient(&y, &g);
    Optimum {
        y,
        f: fy,
        grad_norm: pg.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        iterations: MLE_MAX_ITER,
        converged: false,
    }
}

/// Inverse of a small symmetric matrix by Gauss-Jordan; `None` if singular.
fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        let piv = a[c][c];
        for v in a[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for j in 0..2 * n {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Maximum-likelihood fit of `lambda(s) = lambda0 + a exp(-k s)` from trade
/// times and the elapsed-time path implied by the jumps.
pub fn estimate_lambda_mle(tape: &EventTape) -> Result<LambdaFit> {
    let data = intensity_data(tape)?;
    let n = data.trades.len() as f64;
    let window = data.window();
    // Negative mean log-likelihood in log coordinates.
    let objective = |y: &[f64; 3]| {
        let x = y.map(f64::exp);
        let (ll, g) = data.loglik(x);
        let gy: [f64; 3] = std::array::from_fn(|i| -g[i] * x[i] / n);
        (-ll / n, gy)
    };
    let base = (n / window.max(f64::MIN_POSITIVE)).max(1e-8);
    let starts = [
        [base, base, 1.0],
        [0.5 * base, 2.0 * base, 0.3],
        [0.9 * base, 0.5 * base, 3.0],
        [0.25 * base, 4.0 * base, 10.0],
        [base, 0.05 * base, 0.1],
    ];
    let mut best: Option<Optimum> = None;
    for s in starts {
        let opt = minimize(&objective, s.map(f64::ln));
        let better = match &best {
            None => true,
            Some(b) => (opt.converged && !b.converged) || (opt.converged == b.converged && opt.f < b.f),
        };
        if better {
            best = Some(opt);
        }
    }
    let best = best.expect("at least one start");
    let x = best.y.map(f64::exp);
    if !best.converged {
        return Err(Error::OptimizerNotConverged {
            iterations: best.iterations,
            grad_norm: best.grad_norm,
            best: x,
        });
    }
    let (loglik, _) = data.loglik(x);
    Ok(LambdaFit {
        lambda0: x[0],
        a: x[1],
        k: x[2],
        se: standard_errors(&data, x, best.y),
        loglik,
        iterations: best.iterations,
        n_trades: data.trades.len(),
        window,
    })
}

/// Inverse observed information on the parameters off their bounds.
fn standard_errors(data: &IntensityData, x: [f64; 3], y: [f64; 3]) -> [Option<f64>; 3] {
    let on_bound: [bool; 3] = std::array::from_fn(|i| y[i] <= LOG_LO[i] + 1e-9 || y[i] >= LOG_HI[i] - 1e-9);
    let mut free: Vec<usize> = (0..3).filter(|&i| !on_bound[i]).collect();
    if on_bound[1] {
        free.retain(|&i| i != 2);
    }
    let hess = |i: usize, j: usize| {
        let h = 1e-5 * x[j].abs().max(1e-8);
        let mut up = x;
        let mut dn = x;
        up[j] += h;
        dn[j] -= h;
        -(data.loglik(up).1[i] - data.loglik(dn).1[i]) / (2.0 * h)
    };
    let info: Vec<Vec<f64>> = free
        .iter()
        .map(|&i| free.iter().map(|&j| 0.5 * (hess(i, j) + hess(j, i))).collect())
        .collect();
    let mut se = [None; 3];
    if let Some(cov) = invert(&info) {
        for (a, &i) in free.iter().enumerate() {
            if cov[a][a] > 0.0 {
                se[i] = Some(cov[a][a].sqrt());
            }
        }
    }
    se
}

/// Estimated execution-size laws on the strong and weak sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarthetaEstimate {
    /// `pmf[0..=L]`, with `pmf[0] = 1 - sum of the rest`.
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// Corrected trade counts `E_N` per side.
    pub trades_plus: i64,
    pub trades_minus: i64,
    /// Corrected agent fill counts `e_N(i)` per side, for `i = 0..=L`
    /// (the zero entry is `E_N` minus the others).
    pub counts_plus: Vec<i64>,
    pub counts_minus: Vec<i64>,
}

/// Execution-size laws from a tape recorded under the always-on policy.
///
/// Over each complete inter-jump interval `(T_{k-1}, T_k]` the jump itself
/// counts as a trade on side `B_k` (with a full fill of `L` for the agent)
/// and is then removed again by the `1{B_k = +/-}` correction.
pub fn estimate_vartheta(tape: &EventTape, lot_size: u32) -> Result<VarthetaEstimate> {
    let l = lot_size as usize;
    let mut trades = [0i64; 2];
    let mut counts = [vec![0i64; l + 1], vec![0i64; l + 1]];
    let mut direction: Option<i64> = None;
    // Per-interval counters, committed when the closing jump is seen.
    let mut tr = [0i64; 2];
    let mut ct = [vec![0i64; l + 1], vec![0i64; l + 1]];
    let side_index = |concordance: i64| if concordance > 0 { 0 } else { 1 };
    for r in &tape.rows {
        let Some(i) = direction else {
            if r.kind == EventKind::Jump {
                direction = Some(r.direction);
            }
            continue;
        };
        let side = side_index(r.direction * i);
        if r.fill as usize > l {
            return Err(Error::Schema(format!(
                "fill {} at t = {} exceeds the lot size {l}",
                r.fill, r.time
            )));
        }
        tr[side] += 1;
        if r.fill > 0 {
            ct[side][r.fill as usize] += 1;
        }
        if r.kind == EventKind::Jump {
            // Remove the jump-caused trade and the forced full fill.
            tr[side] -= 1;
            if r.fill > 0 {
                ct[side][l] -= 1;
            }
            for s in 0..2 {
                trades[s] += tr[s];
                for k in 1..=l {
                    counts[s][k] += ct[s][k];
                }
                tr[s] = 0;
                ct[s].fill(0);
            }
            direction = Some(r.direction);
        }
    }
    let pmf = |s: usize, counts: &mut Vec<i64>| -> Result<Vec<f64>> {
        let e = trades[s];
        if e <= 0 {
            return Err(Error::InsufficientData(format!(
                "no trades on the {} side between jumps",
                if s == 0 { "strong" } else { "weak" }
            )));
        }
        counts[0] = e - counts[1..].iter().sum::<i64>();
        Ok(counts.iter().map(|&c| c as f64 / e as f64).collect())
    };
    let [mut cp, mut cm] = counts;
    let plus = pmf(0, &mut cp)?;
    let minus = pmf(1, &mut cm)?;
    Ok(VarthetaEstimate {
        plus,
        minus,
        trades_plus: trades[0],
        trades_minus: trades[1],
        counts_plus: cp,
        counts_minus: cm,
    })
}

pub const CALIBRATION_SCHEMA_VERSION: &str = "renewal-mm.calibration/1";

/// Everything estimable from one tape; failed estimators leave a warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub schema_version: String,
    pub alpha: Option<MeanEstimate>,
    pub rho: Option<MeanEstimate>,
    pub hazard_bins: Vec<HazardBin>,
    pub class_sizes: [usize; 2],
    pub lambda: Option<LambdaFit>,
    pub vartheta: Option<VarthetaEstimate>,
    pub warnings: Vec<String>,
}

/// Runs every estimator; `lot_size` enables the execution-size estimate.
pub fn calibrate(tape: &EventTape, max_bins: usize, lot_size: Option<u32>) -> CalibrationReport {
    fn keep<T>(warnings: &mut Vec<String>, name: &str, r: Result<T>) -> Option<T> {
        r.map_err(|e| warnings.push(format!("{name}: {e}"))).ok()
    }
    let mut warnings = Vec::new();
    let w = &mut warnings;
    let alpha = keep(w, "alpha", estimate_alpha(tape));
    let rho = keep(w, "rho", estimate_rho(tape));
    let renewal = keep(w, "renewal", estimate_renewal(tape, max_bins));
    let lambda = keep(w, "lambda", estimate_lambda_mle(tape));
    let vartheta = lot_size.and_then(|l| keep(w, "vartheta", estimate_vartheta(tape, l)));
    if let Some(a) = &alpha {
        if a.degenerate {
            warnings.push(format!("alpha: all marks equal {}, standard error is zero", a.value));
        }
    }
    let (hazard_bins, class_sizes) = match renewal {
        Some(r) => {
            warnings.extend(r.warnings.iter().map(|w| format!("renewal: {w}")));
            let sizes = [
                r.plus.as_ref().map_or(0, |c| c.len()),
                r.minus.as_ref().map_or(0, |c| c.len()),
            ];
            (r.bins, sizes)
        }
        None => (Vec::new(), [0, 0]),
    };
    CalibrationReport {
        schema_version: CALIBRATION_SCHEMA_VERSION.into(),
        alpha,
        rho,
        hazard_bins,
        class_sizes,
        lambda,
        vartheta,
        warnings,
    }
}

/// Hazard curve CSV, one row per bin.
pub fn write_hazard_csv<W: Write>(writer: W, bins: &[HazardBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in bins {
        w.serialize(b).map_err(csv_err)?;
    }
    if bins.is_empty() {
        w.write_record([
            "s_lo", "s_hi", "quantile_lo", "quantile_hi", "exposure", "events_plus",
            "events_minus", "h_plus", "h_minus", "se_plus", "se_minus",
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Fitted intensity on `n + 1` points of `[0, s_max]`.
pub fn write_intensity_csv<W: Write>(writer: W, fit: &LambdaFit, s_max: f64, n: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["s", "lambda"]).map_err(csv_err)?;
    for i in 0..=n {
        let s = s_max * i as f64 / n as f64;
        w.serialize((s, fit.rate(s))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::TapeRow;

    fn jump(time: f64, direction: i64) -> TapeRow {
        TapeRow {
            time,
            kind: EventKind::Jump,
            direction,
            fill: 0,
            state_s: 0.0,
            price: 0.0,
        }
    }

    fn trade(time: f64, side: i64, fill: u32) -> TapeRow {
        TapeRow {
            time,
            kind: EventKind::Trade,
            direction: side,
            fill,
            state_s: 0.0,
            price: 0.0,
        }
    }

    fn tape(rows: Vec<TapeRow>) -> EventTape {
        EventTape {
            rows,
            horizon: None,
        }
    }

    #[test]
    fn alternating_and_constant_marks() {
        let alt = tape((0..10).map(|i| jump(i as f64, if i % 2 == 0 { 1 } else { -1 })).collect());
        let a = estimate_alpha(&alt).unwrap();
        assert_eq!(a.value, -1.0);
        let same = tape((0..10).map(|i| jump(i as f64, 1)).collect());
        let a = estimate_alpha(&same).unwrap();
        assert_eq!((a.value, a.se, a.degenerate), (1.0, 0.0, true));
        assert!(estimate_alpha(&tape(vec![jump(1.0, 1)])).is_err());
    }

    #[test]
    fn concordant_trades_give_rho_one() {
        let t = tape(vec![
            trade(0.5, -1, 0),
            jump(1.0, 1),
            trade(1.5, 1, 0),
            jump(2.0, -1),
            trade(2.5, -1, 0),
        ]);
        let r = estimate_rho(&t).unwrap();
        assert_eq!((r.value, r.n), (1.0, 2));
        assert!(estimate_rho(&tape(vec![trade(0.1, 1, 0)])).is_err());
    }

    #[test]
    fn one_class_only_is_flagged() {
        let t = tape((0..100).map(|i| jump(i as f64 * 0.7 + (i * i % 7) as f64 * 0.1, 1)).collect());
        let r = estimate_renewal(&t, 10).unwrap();
        assert!(r.minus.is_none());
        assert!(r.warnings.iter().any(|w| w.contains("F-")));
        assert!(r.bins.iter().all(|b| b.events_plus + b.events_minus >= MIN_BIN_EVENTS as u64));
    }

    #[test]
    fn vartheta_full_fill_and_jump_correction() {
        // Two complete intervals; every trade fills L = 2.
        let t = tape(vec![
            jump(0.0, 1),
            trade(0.1, 1, 2),
            trade(0.2, -1, 2),
            jump(0.5, -1), // reversal: side B = -, forced fill on the weak side
            trade(0.6, -1, 2),
            jump(0.9, -1),
        ]);
        let mut t = t;
        t.rows[3].fill = 2;
        t.rows[5].fill = 2;
        let v = estimate_vartheta(&t, 2).unwrap();
        assert_eq!(v.plus, vec![0.0, 0.0, 1.0]);
        assert_eq!(v.minus, vec![0.0, 0.0, 1.0]);
        assert_eq!((v.trades_plus, v.trades_minus), (2, 1));
    }

    #[test]
    fn vartheta_without_trades_errors() {
        let t = tape(vec![jump(0.0, 1), jump(1.0, 1), jump(2.0, -1)]);
        assert!(matches!(estimate_vartheta(&t, 2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn lambda_needs_trades() {
        let t = tape(vec![jump(0.0, 1), jump(1.0, 1)]);
        assert!(estimate_lambda_mle(&t).is_err());
    }

    #[test]
    fn small_inverse() {
        let m = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let inv = invert(&m).unwrap();
        assert!((inv[0][0] - 3.0 / 11.0).abs() < 1e-14);
        assert!((inv[0][1] + 1.0 / 11.0).abs() < 1e-14);
    }
}
