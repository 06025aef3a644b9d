use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::csv_err;
use crate::model::{MarketModel, Side};

/// Characteristic-aligned lattice: `t_j = j * dt`, `s_k = k * dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub horizon: f64,
    /// Last s-node; the frozen closure applies beyond it.
    pub s_extent: f64,
    /// Number of time steps; there are `n_t + 1` time nodes.
    pub n_t: usize,
    /// Number of s steps; there are `n_s + 1` s nodes.
    pub n_s: usize,
}

/// Stability limit on `dt * (sigma2_max + lambda_max)`.
pub const STABILITY_LIMIT: f64 = 0.5;

fn whole_steps(len: f64, dt: f64, what: &str) -> Result<usize> {
    let n = len / dt;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "dt = {dt} does not divide {what} = {len}"
        )));
    }
    Ok(r as usize)
}

impl GridSpec {
    pub fn new(dt: f64, horizon: f64, s_extent: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be > 0, got {dt}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        let n_t = whole_steps(horizon, dt, "horizon")?;
        let n_s = whole_steps(s_extent, dt, "s extent")?;
        Ok(GridSpec {
            dt,
            horizon,
            s_extent,
            n_t,
            n_s,
        })
    }

    /// Grid over the model horizon whose s-axis reaches the truncation point,
    /// rounded up to a whole number of steps.
    pub fn for_model(model: &MarketModel, dt: f64) -> Result<Self> {
        let s_extent = (model.s_max() / dt).ceil().max(1.0) * dt;
        GridSpec::new(dt, model.params().horizon, s_extent)
    }

    /// Same extents with half the step.
    pub fn refine(&self) -> Self {
        GridSpec {
            dt: self.dt / 2.0,
            horizon: self.horizon,
            s_extent: self.s_extent,
            n_t: self.n_t * 2,
            n_s: self.n_s * 2,
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn s(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn node_count(&self) -> usize {
        (self.n_t + 1) * (self.n_s + 1)
    }

    /// Nearest time index; errors past the horizon.
    pub fn t_index(&self, t: f64) -> Result<usize> {
        if !(t >= -1e-12 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::OutOfGrid {
                t,
                horizon: self.horizon,
            });
        }
        Ok(((t / self.dt).round() as usize).min(self.n_t))
    }

    /// Nearest s index, clamped to the last node.
    pub fn s_index(&self, s: f64) -> usize {
        ((s.max(0.0) / self.dt).round() as usize).min(self.n_s)
    }
}

/// Model coefficients sampled on the s-nodes of a grid.
#[derive(Debug, Clone)]
pub struct Coefficients {
    /// Jump hazards, indexed by `Side::index()`.
    pub hazard: [Vec<f64>; 2],
    /// Side trade intensities, indexed by `Side::index()`.
    pub trade: [Vec<f64>; 2],
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl Coefficients {
    pub fn new(model: &MarketModel, spec: &GridSpec) -> Self {
        let nodes = spec.n_s + 1;
        let sample = |f: &dyn Fn(f64) -> f64| (0..nodes).map(|k| f(spec.s(k))).collect::<Vec<_>>();
        let hazard = [
            sample(&|s| model.hazard_frozen(Side::Strong, s)),
            sample(&|s| model.hazard_frozen(Side::Weak, s)),
        ];
        let trade = [
            sample(&|s| model.side_intensity(Side::Strong, s)),
            sample(&|s| model.side_intensity(Side::Weak, s)),
        ];
        let mu = hazard[0].iter().zip(&hazard[1]).map(|(a, b)| a - b).collect();
        let sigma2 = hazard[0].iter().zip(&hazard[1]).map(|(a, b)| a + b).collect();
        Coefficients {
            hazard,
            trade,
            mu,
            sigma2,
        }
    }

    /// Rejects grids violating `dt * (sigma2_max + lambda_max) <= 0.5`.
    pub fn check_stability(&self, spec: &GridSpec) -> Result<()> {
        let sigma_max = self.sigma2.iter().copied().fold(0.0, f64::max);
        let lambda_max = self.trade[0]
            .iter()
            .zip(&self.trade[1])
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max);
        let product = spec.dt * (sigma_max + lambda_max);
        if !(product <= STABILITY_LIMIT) {
            return Err(Error::StabilityViolation {
                product,
                limit: STABILITY_LIMIT,
            });
        }
        Ok(())
    }
}

/// Which scalar field a [`ValueGrid`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Theta,
    Omega,
    Zeta1,
    Zeta0,
    GPlus,
    GMinus,
    APlus,
    AMinus,
    BPlus,
    BMinus,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Theta => "theta",
            FieldKind::Omega => "omega",
            FieldKind::Zeta1 => "zeta1",
            FieldKind::Zeta0 => "zeta0",
            FieldKind::GPlus => "g_plus",
            FieldKind::GMinus => "g_minus",
            FieldKind::APlus => "a_plus",
            FieldKind::AMinus => "a_minus",
            FieldKind::BPlus => "b_plus",
            FieldKind::BMinus => "b_minus",
        }
    }
}

/// One scalar field over the `(t, s)` lattice, row-major in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub kind: FieldKind,
    pub spec: GridSpec,
    values: Vec<f64>,
}

impl ValueGrid {
    pub fn zeros(kind: FieldKind, spec: GridSpec) -> Self {
        ValueGrid {
            kind,
            spec,
            values: vec![0.0; spec.node_count()],
        }
    }

    pub fn from_values(kind: FieldKind, spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.node_count() {
            return Err(Error::Schema(format!(
                "{} grid has {} values, spec needs {}",
                kind.name(),
                values.len(),
                spec.node_count()
            )));
        }
        Ok(ValueGrid { kind, spec, values })
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * (self.spec.n_s + 1) + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let w = self.spec.n_s + 1;
        &self.values[j * w..(j + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable row `j` together with the already solved row `j + 1`.
    pub(crate) fn split_rows(&mut self, j: usize) -> (&mut [f64], &[f64]) {
        let w = self.spec.n_s + 1;
        let (head, tail) = self.values.split_at_mut((j + 1) * w);
        (&mut head[j * w..], &tail[..w])
    }

    /// Value at the nearest node.
    pub fn nearest(&self, t: f64, s: f64) -> Result<f64> {
        Ok(self.get(self.spec.t_index(t)?, self.spec.s_index(s)))
    }

    /// Bilinear interpolation, frozen beyond the s extent.
    pub fn interpolate(&self, t: f64, s: f64) -> f64 {
        let spec = &self.spec;
        let x = (t / spec.dt).clamp(0.0, spec.n_t as f64);
        let y = (s / spec.dt).clamp(0.0, spec.n_s as f64);
        let j = (x.floor() as usize).min(spec.n_t.saturating_sub(1));
        let k = (y.floor() as usize).min(spec.n_s.saturating_sub(1));
        let (fx, fy) = (x - j as f64, y - k as f64);
        let v00 = self.get(j, k);
        let v01 = self.get(j, k + 1);
        let v10 = self.get(j + 1, k);
        let v11 = self.get(j + 1, k + 1);
        (1.0 - fx) * ((1.0 - fy) * v00 + fy * v01) + fx * ((1.0 - fy) * v10 + fy * v11)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Long-format CSV: `t,s,value`, one row per node.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "s", "value"]).map_err(csv_err)?;
        for j in 0..=self.spec.n_t {
            for k in 0..=self.spec.n_s {
                w.serialize((self.spec.t(j), self.spec.s(k), self.get(j, k)))
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, kind: FieldKind, spec: GridSpec) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().ne(["t", "s", "value"]) {
            return Err(Error::Schema(format!("grid header {header:?}")));
        }
        let mut values = Vec::with_capacity(spec.node_count());
        for (idx, rec) in r.deserialize::<(f64, f64, f64)>().enumerate() {
            let (t, s, v) = rec.map_err(csv_err)?;
            let j = idx / (spec.n_s + 1);
            let k = idx % (spec.n_s + 1);
            if (t - spec.t(j)).abs() > 1e-9 || (s - spec.s(k)).abs() > 1e-9 {
                return Err(Error::Schema(format!(
                    "grid row {idx} at (t={t}, s={s}) does not match node ({j}, {k})"
                )));
            }
            values.push(v);
        }
        ValueGrid::from_values(kind, spec, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_requires_whole_steps() {
        assert!(GridSpec::new(0.3, 1.0, 3.0).is_err());
        let g = GridSpec::new(0.25, 1.0, 3.0).unwrap();
        assert_eq!((g.n_t, g.n_s), (4, 12));
        let f = g.refine();
        assert_eq!((f.n_t, f.n_s), (8, 24));
        assert!(GridSpec::new(0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn nearest_lookup_rejects_past_horizon() {
        let g = GridSpec::new(0.5, 2.0, 2.0).unwrap();
        assert_eq!(g.t_index(0.74).unwrap(), 1);
        assert_eq!(g.s_index(100.0), 4);
        assert!(matches!(g.t_index(2.6), Err(Error::OutOfGrid { .. })));
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let spec = GridSpec::new(0.1, 0.5, 0.3).unwrap();
        let vals: Vec<f64> = (0..spec.node_count())
            .map(|i| (i as f64 * 0.7).sin() / 3.0)
            .collect();
        let g = ValueGrid::from_values(FieldKind::Omega, spec, vals).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = ValueGrid::read_csv(buf.as_slice(), FieldKind::Omega, spec).unwrap();
        assert_eq!(back.values().len(), g.values().len());
        assert!(back
            .values()
            .iter()
            .zip(g.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let spec = GridSpec::new(0.5, 1.0, 1.0).unwrap();
        let vals: Vec<f64> = (0..spec.node_count()).map(|i| i as f64).collect();
        let g = ValueGrid::from_values(FieldKind::Theta, spec, vals).unwrap();
        assert_eq!(g.interpolate(0.5, 1.0), g.get(1, 2));
        assert_eq!(g.interpolate(0.25, 0.25), 0.5 * (0.5 * (0.0 + 1.0) + 0.5 * (3.0 + 4.0)));
        assert_eq!(g.interpolate(1.0, 7.0), g.get(2, 2));
    }
}
