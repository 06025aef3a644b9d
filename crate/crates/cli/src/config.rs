//! Run configuration: one JSON document with a single master seed.

use std::path::{Path, PathBuf};

use renewal_mm::model::ModelParams;
use renewal_mm::simulator::StartState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const RUN_SCHEMA_VERSION: &str = "renewal-mm.run/1";

/// Model parameters inline or as a path relative to the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSource {
    File(PathBuf),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOptions {
    pub dt: f64,
    /// Inventory half-width of the exact risk-averse solve.
    pub q_max: i64,
    /// Also solve at `dt/2` and `dt/4` and log the observed orders.
    pub convergence: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            dt: 0.01,
            q_max: 48,
            convergence: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestOptions {
    pub n_paths: usize,
    pub start: StartState,
    /// Use the exact risk-averse policy instead of the expansion.
    pub exact: bool,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        BacktestOptions {
            n_paths: 10_000,
            start: StartState::default(),
            exact: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOptions {
    pub n_paths: usize,
    /// Record agent fills of the always-on policy in the tapes.
    pub agent_fills: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            n_paths: 1,
            agent_fills: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateOptions {
    /// Tape to calibrate; defaults to the first simulated tape.
    pub tape: Option<PathBuf>,
    pub max_bins: usize,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            tape: None,
            max_bins: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    schema_version: String,
    params: ParamsSource,
    seed: u64,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default)]
    grid: GridOptions,
    #[serde(default)]
    simulate: SimulateOptions,
    #[serde(default)]
    backtest: BacktestOptions,
    #[serde(default)]
    calibrate: CalibrateOptions,
}

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub eta: Option<f64>,
    pub exact: bool,
    pub grid_dt: Option<f64>,
    pub tape: Option<PathBuf>,
}

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub grid: GridOptions,
    pub simulate: SimulateOptions,
    pub backtest: BacktestOptions,
    pub calibrate: CalibrateOptions,
}

/// Everything that can change an artifact; the output directory and the
/// calibration input are excluded.
#[derive(Serialize)]
struct HashView<'a> {
    schema_version: &'a str,
    params_hash: String,
    seed: u64,
    grid: &'a GridOptions,
    simulate: &'a SimulateOptions,
    backtest: &'a BacktestOptions,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base, overrides)
    }

    /// Parses a config; relative paths resolve against `base`.
    pub fn from_json(text: &str, base: &Path, overrides: &Overrides) -> CliResult<Self> {
        let doc: ConfigDocument =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if doc.schema_version != RUN_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "config schema {}, expected {RUN_SCHEMA_VERSION}",
                doc.schema_version
            )));
        }
        let mut params = match doc.params {
            ParamsSource::Inline(v) => ModelParams::from_json_value(v)?,
            ParamsSource::File(p) => {
                let p = base.join(p);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Config(format!("params file {}: {e}", p.display())))?;
                ModelParams::from_json(&text)?
            }
        };
        if let Some(eta) = overrides.eta {
            params.eta = eta;
            params.validate()?;
        }
        let mut grid = doc.grid;
        if let Some(dt) = overrides.grid_dt {
            grid.dt = dt;
        }
        if !(grid.dt.is_finite() && grid.dt > 0.0) {
            return Err(CliError::Config(format!("grid dt must be > 0, got {}", grid.dt)));
        }
        if grid.q_max < params.lot_size as i64 {
            return Err(CliError::Config(format!(
                "grid q_max = {} is below the lot size {}",
                grid.q_max, params.lot_size
            )));
        }
        let mut simulate = doc.simulate;
        let mut backtest = doc.backtest;
        if let Some(n) = overrides.paths {
            simulate.n_paths = n;
            backtest.n_paths = n;
        }
        if simulate.n_paths == 0 || backtest.n_paths == 0 {
            return Err(CliError::Config("path counts must be >= 1".into()));
        }
        backtest.exact |= overrides.exact;
        let mut calibrate = doc.calibrate;
        if let Some(t) = &overrides.tape {
            calibrate.tape = Some(t.clone());
        } else if let Some(t) = calibrate.tape.take() {
            calibrate.tape = Some(base.join(t));
        }
        let out_dir = match (&overrides.out, doc.out_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => base.join("out"),
        };
        Ok(RunConfig {
            params,
            seed: overrides.seed.unwrap_or(doc.seed),
            out_dir,
            grid,
            simulate,
            backtest,
            calibrate,
        })
    }

    /// SHA-256 over the canonical JSON of every artifact-relevant field.
    pub fn hash(&self) -> String {
        let view = HashView {
            schema_version: RUN_SCHEMA_VERSION,
            params_hash: self.params.hash(),
            seed: self.seed,
            grid: &self.grid,
            simulate: &self.simulate,
            backtest: &self.backtest,
        };
        let bytes = serde_json::to_vec(&view).expect("config view serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn dir(&self, sub: &str) -> CliResult<PathBuf> {
        let d = self.out_dir.join(sub);
        std::fs::create_dir_all(&d)?;
        Ok(d)
    }

    /// Risk-averse policies are only meaningful with `eta > 0`.
    pub fn risk_averse(&self) -> bool {
        self.params.eta > 0.0
    }
}
