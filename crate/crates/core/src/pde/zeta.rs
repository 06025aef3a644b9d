use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::csv_err;
use crate::model::{MarketModel, Side};

use super::grid::{Coefficients, GridSpec};
use super::linear::Barriers;

/// Relative tolerance of the q-range doubling check.
pub const Q_RANGE_TOL: f64 = 1e-8;

/// Risk-aversion deformation `zeta(t, s, q)` for `q` in `[-q_max, q_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaField {
    pub spec: GridSpec,
    pub q_max: i64,
    pub eta: f64,
    values: Vec<f64>,
}

impl ZetaField {
    fn slices(&self) -> usize {
        (2 * self.q_max + 1) as usize
    }

    fn index(&self, j: usize, k: usize, q: i64) -> usize {
        let w = self.spec.n_s + 1;
        (j * self.slices() + (q + self.q_max) as usize) * w + k
    }

    /// Stored value; `q` must lie in range.
    #[inline]
    pub fn get(&self, j: usize, k: usize, q: i64) -> f64 {
        debug_assert!(q.abs() <= self.q_max);
        self.values[self.index(j, k, q)]
    }

    /// Value with the quadratic extension beyond `+/-q_max`.
    #[inline]
    pub fn lookup(&self, j: usize, k: usize, q: i64) -> f64 {
        lookup_row(self.row(j), self.spec.n_s + 1, self.q_max, self.eta, k, q)
    }

    /// All q-slices of time row `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.slices() * (self.spec.n_s + 1);
        &self.values[j * n..(j + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Long-format CSV: `t,s,q,value`, ordered by `t`, then `q`, then `s`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "s", "q", "value"]).map_err(csv_err)?;
        for j in 0..=self.spec.n_t {
            for q in -self.q_max..=self.q_max {
                for k in 0..=self.spec.n_s {
                    w.serialize((self.spec.t(j), self.spec.s(k), q, self.get(j, k, q)))
                        .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, spec: GridSpec, q_max: i64, eta: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().ne(["t", "s", "q", "value"]) {
            return Err(Error::Schema(format!("zeta header {header:?}")));
        }
        let mut field = ZetaField {
            spec,
            q_max,
            eta,
            values: Vec::new(),
        };
        let total = field.slices() * spec.node_count();
        let mut values = Vec::with_capacity(total);
        let w = spec.n_s + 1;
        for (idx, rec) in r.deserialize::<(f64, f64, i64, f64)>().enumerate() {
            let (t, s, q, v) = rec.map_err(csv_err)?;
            let k = idx % w;
            let qi = (idx / w) % field.slices();
            let j = idx / (w * field.slices());
            if (t - spec.t(j)).abs() > 1e-9 || (s - spec.s(k)).abs() > 1e-9 || q != qi as i64 - q_max {
                return Err(Error::Schema(format!(
                    "zeta row {idx} at (t={t}, s={s}, q={q}) is out of order"
                )));
            }
            values.push(v);
        }
        if values.len() != total {
            return Err(Error::Schema(format!(
                "zeta file has {} values, expected {total}",
                values.len()
            )));
        }
        field.values = values;
        Ok(field)
    }
}

#[inline]
fn lookup_row(row: &[f64], w: usize, q_max: i64, eta: f64, k: usize, q: i64) -> f64 {
    let clamped = q.clamp(-q_max, q_max);
    let base = row[(clamped + q_max) as usize * w + k];
    if clamped == q {
        base
    } else {
        let (q, qm) = (q as f64, q_max as f64);
        base + eta * (q * q - qm * qm)
    }
}

/// `<C_nu, f>` at elapsed time `s` and strong inventory `q`, where
/// `f(q, at_reset)` reads the function at `(t, 0, q)` when `at_reset` and at
/// `(t, s, q)` otherwise.
pub fn apply_c(
    model: &MarketModel,
    side: Side,
    s: f64,
    q: i64,
    f: impl Fn(i64, bool) -> f64,
) -> f64 {
    let p = model.params();
    let nu = side.sign_i64();
    let lot = p.lot_size as i64;
    let jump = model.hazard_frozen(side, s) * (f(nu * q - lot, true) - f(nu * q, true));
    let here = f(q, false);
    let trade: f64 = p
        .fill(side)
        .pmf()
        .iter()
        .enumerate()
        .map(|(k, &w)| w * (f(q - nu * k as i64, false) - here))
        .sum();
    jump + model.side_intensity(side, s) * trade
}

/// Exact risk-averse deformation with a q-range check: the solve is repeated
/// with `2 q_max` and the two must agree on `|q| <= q_max / 2`.
pub fn solve_zeta_exact(model: &MarketModel, g: &Barriers, q_max: i64) -> Result<ZetaField> {
    let narrow = solve_zeta_exact_unchecked(model, g, q_max)?;
    let wide = solve_zeta_exact_unchecked(model, g, 2 * q_max)?;
    let inner = q_max / 2;
    let spec = narrow.spec;
    let mut discrepancy: f64 = 0.0;
    for j in 0..=spec.n_t {
        for q in -inner..=inner {
            for k in 0..=spec.n_s {
                discrepancy = discrepancy.max((narrow.get(j, k, q) - wide.get(j, k, q)).abs());
            }
        }
    }
    if discrepancy > Q_RANGE_TOL * (1.0 + wide.sup_abs()) {
        return Err(Error::QRangeTooSmall {
            q_max,
            discrepancy,
        });
    }
    Ok(narrow)
}

/// Exact deformation on `[-q_max, q_max]` without the range check.
pub fn solve_zeta_exact_unchecked(
    model: &MarketModel,
    g: &Barriers,
    q_max: i64,
) -> Result<ZetaField> {
    let p = model.params();
    if q_max < p.lot_size as i64 {
        return Err(Error::InvalidParams(format!(
            "q_max = {q_max} must be at least the lot size {}",
            p.lot_size
        )));
    }
    let spec = g.spec();
    let c = Coefficients::new(model, &spec);
    c.check_stability(&spec)?;
    let eta = p.eta;
    let w = spec.n_s + 1;
    let slices = (2 * q_max + 1) as usize;
    let row_len = slices * w;
    let mut values = vec![0.0; row_len * (spec.n_t + 1)];
    for (qi, slice) in values[spec.n_t * row_len..].chunks_mut(w).enumerate() {
        let q = (qi as i64 - q_max) as f64;
        slice.fill(eta * (q * q));
    }
    let lot = p.lot_size as i64;
    let pmfs = [p.fill(Side::Strong).pmf(), p.fill(Side::Weak).pmf()];

    for j in (0..spec.n_t).rev() {
        let (head, tail) = values.split_at_mut((j + 1) * row_len);
        let next = &tail[..row_len];
        let cur = &mut head[j * row_len..];
        let z = |k: usize, q: i64| lookup_row(next, w, q_max, eta, k, q);
        cur.par_chunks_mut(w).enumerate().for_each(|(qi, slice)| {
            let q = qi as i64 - q_max;
            for (k, out) in slice.iter_mut().enumerate() {
                let k1 = (k + 1).min(spec.n_s);
                let base = z(k1, q);
                let mut acc = 0.0;
                for side in Side::BOTH {
                    let i = side.index();
                    let nu = side.sign_i64();
                    let gv = g.side(side).get(j + 1, k1);
                    let h = c.hazard[i][k1];
                    let positive = gv.max(0.0);
                    let cost0 = h * (z(0, nu * q) - base) + positive;
                    let trades: f64 = pmfs[i]
                        .iter()
                        .enumerate()
                        .map(|(n, &wgt)| wgt * (z(k1, q - nu * n as i64) - base))
                        .sum();
                    let cost1 = h * (z(0, nu * q - lot) - base) + c.trade[i][k1] * trades + positive
                        - gv;
                    acc += if cost1 < cost0 { cost1 } else { cost0 };
                }
                *out = base + spec.dt * acc;
            }
        });
    }
    Ok(ZetaField {
        spec,
        q_max,
        eta,
        values,
    })
}
