//! Backward solvers for the `(t, s)` integro-PDEs on a lattice with equal
//! time and elapsed-time steps, so the transport part is solved exactly by
//! following characteristics.
//!
//! Each scheme is the expectation of a discrete Markov chain: over one step
//! the elapsed time resets with probability `sigma2 * dt`, a trade arrives
//! on side `nu` with probability `lambda_nu * dt`, and otherwise `s` moves
//! one node to the right (held at the last node).

mod grid;
mod linear;
mod zeta;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use grid::{Coefficients, FieldKind, GridSpec, ValueGrid, STABILITY_LIMIT};
pub use linear::{
    asymptotic_barrier, barrier_g, barrier_parts, barrier_split, richardson_order, solve_linear,
    solve_omega, solve_theta, solve_zeta0, solve_zeta1, sup_diff_nested, Barriers, LinearSolution,
};
pub use zeta::{apply_c, solve_zeta_exact, solve_zeta_exact_unchecked, ZetaField, Q_RANGE_TOL};

use crate::error::{Error, Result};

pub const GRID_SCHEMA_VERSION: &str = "renewal-mm.grid/1";

/// JSON sidecar describing a grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub schema_version: String,
    pub field: String,
    pub grid: GridSpec,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl GridHeader {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
        let header: GridHeader = serde_json::from_reader(BufReader::new(file))?;
        if header.schema_version != GRID_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "{}: schema {} (expected {GRID_SCHEMA_VERSION})",
                path.display(),
                header.schema_version
            )));
        }
        Ok(header)
    }

    fn check_hash(&self, expected: Option<&str>) -> Result<()> {
        match expected {
            Some(h) if h != self.config_hash => Err(Error::Schema(format!(
                "{} grid carries config hash {}, expected {h}",
                self.field, self.config_hash
            ))),
            _ => Ok(()),
        }
    }
}

fn write_header(path: &Path, header: &GridHeader) -> Result<()> {
    let mut text = serde_json::to_string_pretty(header)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes `<dir>/<field>.csv` and its `<dir>/<field>.json` header.
pub fn write_grid(dir: &Path, grid: &ValueGrid, config_hash: &str) -> Result<()> {
    let name = grid.kind.name();
    write_header(
        &dir.join(format!("{name}.json")),
        &GridHeader {
            schema_version: GRID_SCHEMA_VERSION.into(),
            field: name.into(),
            grid: grid.spec,
            config_hash: config_hash.into(),
            q_max: None,
            eta: None,
        },
    )?;
    grid.write_csv(BufWriter::new(File::create(dir.join(format!("{name}.csv")))?))
}

/// Reads a grid written by [`write_grid`], optionally checking the hash.
pub fn read_grid(dir: &Path, kind: FieldKind, config_hash: Option<&str>) -> Result<(ValueGrid, GridHeader)> {
    let name = kind.name();
    let header = GridHeader::read(&dir.join(format!("{name}.json")))?;
    if header.field != name {
        return Err(Error::Schema(format!("header names field {}", header.field)));
    }
    header.check_hash(config_hash)?;
    let csv_path = dir.join(format!("{name}.csv"));
    let file = File::open(&csv_path)
        .map_err(|_| Error::MissingArtifact(csv_path.display().to_string()))?;
    let grid = ValueGrid::read_csv(BufReader::new(file), kind, header.grid)?;
    Ok((grid, header))
}

/// Writes `<dir>/zeta.csv` and `<dir>/zeta.json`.
pub fn write_zeta(dir: &Path, zeta: &ZetaField, config_hash: &str) -> Result<()> {
    write_header(
        &dir.join("zeta.json"),
        &GridHeader {
            schema_version: GRID_SCHEMA_VERSION.into(),
            field: "zeta".into(),
            grid: zeta.spec,
            config_hash: config_hash.into(),
            q_max: Some(zeta.q_max),
            eta: Some(zeta.eta),
        },
    )?;
    zeta.write_csv(BufWriter::new(File::create(dir.join("zeta.csv"))?))
}

pub fn read_zeta(dir: &Path, config_hash: Option<&str>) -> Result<(ZetaField, GridHeader)> {
    let header = GridHeader::read(&dir.join("zeta.json"))?;
    header.check_hash(config_hash)?;
    let (Some(q_max), Some(eta)) = (header.q_max, header.eta) else {
        return Err(Error::Schema("zeta header lacks q_max or eta".into()));
    };
    let csv_path = dir.join("zeta.csv");
    let file = File::open(&csv_path)
        .map_err(|_| Error::MissingArtifact(csv_path.display().to_string()))?;
    let zeta = ZetaField::read_csv(BufReader::new(file), header.grid, q_max, eta)?;
    Ok((zeta, header))
}
