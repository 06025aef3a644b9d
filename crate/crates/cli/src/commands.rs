//! Subcommand bodies. Each writes its artifacts under a subdirectory of the
//! output directory together with a manifest carrying the config hash.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use renewal_mm::calibration::{calibrate, write_hazard_csv, write_intensity_csv, CalibrationReport};
use renewal_mm::flow::EventTape;
use renewal_mm::model::MarketModel;
use renewal_mm::pde::{
    read_grid, read_zeta, richardson_order, solve_linear, solve_zeta_exact, sup_diff_nested, write_grid,
    write_zeta, Barriers, FieldKind, GridSpec, ValueGrid, ZetaField,
};
use renewal_mm::policy::{
    adjustments, control_approx_node, control_eta0, control_exact_node, write_policy_csv, AlwaysOn,
    ApproxPolicy, Eta0Policy, ExactPolicy, Hold, Policy,
};
use renewal_mm::simulator::{run_backtest, run_paths, BacktestConfig, BacktestReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_SCHEMA_VERSION: &str = "renewal-mm.manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub command: String,
    pub config_hash: String,
    pub params_hash: String,
    pub seed: u64,
    pub files: Vec<String>,
}

impl Manifest {
    fn new(command: &str, cfg: &RunConfig, files: Vec<String>) -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION.into(),
            command: command.into(),
            config_hash: cfg.hash(),
            params_hash: cfg.params.hash(),
            seed: cfg.seed,
            files,
        }
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub(crate) fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn model(cfg: &RunConfig) -> CliResult<MarketModel> {
    Ok(MarketModel::new(cfg.params.clone())?)
}

fn backtest_config(cfg: &RunConfig, n_paths: usize, record_tapes: bool) -> BacktestConfig {
    BacktestConfig {
        n_paths,
        seed: cfg.seed,
        start: cfg.backtest.start,
        record_tapes,
    }
}

pub fn tape_name(i: usize) -> String {
    format!("tape_{i:05}.csv")
}

/// Writes `n_paths` tapes; with agent fills they come from the always-on
/// policy, otherwise from a market with no agent.
pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<PathBuf> {
    let model = model(cfg)?;
    let dir = cfg.dir("tapes")?;
    let bt = backtest_config(cfg, cfg.simulate.n_paths, true);
    let policy: &dyn Policy = if cfg.simulate.agent_fills { &AlwaysOn } else { &Hold };
    let outcomes = run_paths(&model, policy, &bt)?;
    let mut files = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        let name = tape_name(i);
        o.tape.write_csv(create(&dir.join(&name))?)?;
        files.push(name);
    }
    Manifest::new("simulate", cfg, files).write(&dir)?;
    Ok(dir)
}

const LINEAR_FIELDS: [FieldKind; 6] = [
    FieldKind::Theta,
    FieldKind::GPlus,
    FieldKind::GMinus,
    FieldKind::Omega,
    FieldKind::Zeta1,
    FieldKind::Zeta0,
];

/// Sup-norm differences between successive refinements and observed orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    pub dt: [f64; 3],
    pub fields: Vec<FieldConvergence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConvergence {
    pub field: String,
    pub sup_diff_coarse: f64,
    pub sup_diff_fine: f64,
    pub order: f64,
}

pub fn cmd_solve(cfg: &RunConfig) -> CliResult<PathBuf> {
    let model = model(cfg)?;
    let spec = GridSpec::for_model(&model, cfg.grid.dt)?;
    let hash = cfg.hash();
    let dir = cfg.dir("grids")?;
    let sol = solve_linear(&model, &spec)?;
    let grids = [
        &sol.theta,
        &sol.barriers.plus,
        &sol.barriers.minus,
        &sol.omega,
        &sol.zeta1,
        &sol.zeta0,
    ];
    let mut files = Vec::new();
    for g in grids {
        write_grid(&dir, g, &hash)?;
        files.push(format!("{}.csv", g.kind.name()));
    }
    if cfg.backtest.exact && cfg.risk_averse() {
        let zeta = solve_zeta_exact(&model, &sol.barriers, cfg.grid.q_max)?;
        write_zeta(&dir, &zeta, &hash)?;
        files.push("zeta.csv".into());
    }
    if cfg.grid.convergence {
        let fine = solve_linear(&model, &spec.refine())?;
        let finest = solve_linear(&model, &spec.refine().refine())?;
        let pick = |s: &renewal_mm::pde::LinearSolution, k: FieldKind| -> ValueGrid {
            match k {
                FieldKind::Theta => s.theta.clone(),
                FieldKind::Omega => s.omega.clone(),
                FieldKind::Zeta1 => s.zeta1.clone(),
                _ => s.zeta0.clone(),
            }
        };
        let fields = [FieldKind::Theta, FieldKind::Omega, FieldKind::Zeta1, FieldKind::Zeta0]
            .into_iter()
            .map(|k| {
                let (a, b, c) = (pick(&sol, k), pick(&fine, k), pick(&finest, k));
                FieldConvergence {
                    field: k.name().into(),
                    sup_diff_coarse: sup_diff_nested(&a, &b),
                    sup_diff_fine: sup_diff_nested(&b, &c),
                    order: richardson_order(&a, &b, &c),
                }
            })
            .collect();
        let log = ConvergenceLog {
            dt: [spec.dt, spec.dt / 2.0, spec.dt / 4.0],
            fields,
        };
        write_json(&dir.join("convergence.json"), &log)?;
        files.push("convergence.json".into());
    }
    Manifest::new("solve", cfg, files).write(&dir)?;
    Ok(dir)
}

/// Solved fields read back from `grids/` with their hashes checked.
pub struct Solved {
    pub theta: ValueGrid,
    pub barriers: Barriers,
    pub omega: ValueGrid,
    pub zeta1: ValueGrid,
    pub zeta0: ValueGrid,
    pub zeta: Option<ZetaField>,
}

pub fn load_solved(cfg: &RunConfig) -> CliResult<Solved> {
    let dir = cfg.out_dir.join("grids");
    let hash = cfg.hash();
    let mut grids = Vec::with_capacity(LINEAR_FIELDS.len());
    for kind in LINEAR_FIELDS {
        grids.push(read_grid(&dir, kind, Some(&hash))?.0);
    }
    let [theta, plus, minus, omega, zeta1, zeta0]: [ValueGrid; 6] =
        grids.try_into().map_err(|_| CliError::Config("grid count".into()))?;
    let zeta = if cfg.backtest.exact && cfg.risk_averse() {
        Some(read_zeta(&dir, Some(&hash))?.0)
    } else {
        None
    };
    Ok(Solved {
        theta,
        barriers: Barriers { plus, minus },
        omega,
        zeta1,
        zeta0,
        zeta,
    })
}

/// Inventory window of the q-dependent exports.
pub fn q_window(cfg: &RunConfig) -> i64 {
    2 * cfg.params.lot_size as i64
}

pub fn cmd_policy(cfg: &RunConfig) -> CliResult<PathBuf> {
    let model = model(cfg)?;
    let solved = load_solved(cfg)?;
    let dir = cfg.dir("policy")?;
    let g = &solved.barriers;
    let spec = g.spec();
    let mut files = vec!["eta0_regions.csv".to_string()];
    write_policy_csv(create(&dir.join(&files[0]))?, &spec, None, |j, k, _| {
        control_eta0(g, spec.t(j), spec.s(k))
    })?;
    if cfg.risk_averse() {
        let eta = cfg.params.eta;
        let qw = q_window(cfg);
        let adj = adjustments(&model, &solved.zeta1);
        write_policy_csv(create(&dir.join("approx_regions.csv"))?, &spec, Some(-qw..=qw), |j, k, q| {
            Ok(control_approx_node(g, &adj, eta, j, k, q))
        })?;
        files.push("approx_regions.csv".into());
        if let Some(zeta) = &solved.zeta {
            write_policy_csv(create(&dir.join("exact_regions.csv"))?, &spec, Some(-qw..=qw), |j, k, q| {
                control_exact_node(&model, zeta, g, j, k, q)
            })?;
            files.push("exact_regions.csv".into());
        }
    }
    Manifest::new("policy", cfg, files).write(&dir)?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub config_hash: String,
    /// Name of the model-based policy among `reports`.
    pub optimal: String,
    pub reports: Vec<BacktestReport>,
}

/// Backtests hold, always-on and the model-based policy on common market
/// paths.
pub fn cmd_backtest(cfg: &RunConfig) -> CliResult<PathBuf> {
    let model = Arc::new(model(cfg)?);
    let solved = load_solved(cfg)?;
    let barriers = Arc::new(solved.barriers);
    let optimal: Box<dyn Policy> = match (cfg.risk_averse(), solved.zeta) {
        (false, _) => Box::new(Eta0Policy { barriers }),
        (true, Some(zeta)) => Box::new(ExactPolicy {
            model: model.clone(),
            barriers,
            zeta: Arc::new(zeta),
        }),
        (true, None) => Box::new(ApproxPolicy {
            adjustments: Arc::new(adjustments(&model, &solved.zeta1)),
            barriers,
            eta: cfg.params.eta,
        }),
    };
    let bt = backtest_config(cfg, cfg.backtest.n_paths, false);
    let mut reports = Vec::new();
    for policy in [&Hold as &dyn Policy, &AlwaysOn, optimal.as_ref()] {
        reports.push(run_backtest(&bt, &model, policy)?);
    }
    let dir = cfg.dir("backtest")?;
    let mut w = csv::Writer::from_writer(create(&dir.join("summary.csv"))?);
    w.write_record([
        "policy", "n_paths", "utility", "utility_se", "inventory_mean", "inventory_variance",
        "trade_fills", "trade_lots", "jump_fills", "jump_lots",
    ])?;
    for r in &reports {
        w.write_record([
            r.policy.clone(),
            r.n_paths.to_string(),
            r.utility.mean.to_string(),
            r.utility.se.to_string(),
            r.inventory_mean.to_string(),
            r.inventory_variance.to_string(),
            r.fills.trade_events.to_string(),
            r.fills.trade_lots.to_string(),
            r.fills.jump_events.to_string(),
            r.fills.jump_lots.to_string(),
        ])?;
    }
    w.flush()?;
    let summary = BacktestSummary {
        config_hash: cfg.hash(),
        optimal: optimal.name().into(),
        reports,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Manifest::new("backtest", cfg, vec!["summary.json".into(), "summary.csv".into()]).write(&dir)?;
    Ok(dir)
}

pub fn read_backtest_summary(cfg: &RunConfig) -> CliResult<Option<BacktestSummary>> {
    let path = cfg.out_dir.join("backtest").join("summary.json");
    if !path.exists() {
        return Ok(None);
    }
    let summary: BacktestSummary = serde_json::from_reader(BufReader::new(File::open(&path)?))?;
    if summary.config_hash != cfg.hash() {
        return Err(renewal_mm::Error::Schema(format!(
            "{} carries config hash {}, expected {}",
            path.display(),
            summary.config_hash,
            cfg.hash()
        ))
        .into());
    }
    Ok(Some(summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub tape: String,
    pub params_hash: String,
    #[serde(flatten)]
    pub report: CalibrationReport,
}

/// Estimates every primitive from a tape. Execution sizes are estimated
/// only when the tape records agent fills.
pub fn cmd_calibrate(cfg: &RunConfig) -> CliResult<PathBuf> {
    let (path, own) = match &cfg.calibrate.tape {
        Some(p) => (p.clone(), false),
        None => (cfg.out_dir.join("tapes").join(tape_name(0)), true),
    };
    let file = File::open(&path)
        .map_err(|_| renewal_mm::Error::MissingArtifact(path.display().to_string()))?;
    let mut tape = EventTape::read_csv(BufReader::new(file))?;
    if own {
        tape.horizon = Some(cfg.params.horizon);
    }
    let has_fills = tape.rows.iter().any(|r| r.fill > 0);
    let lot = has_fills.then_some(cfg.params.lot_size);
    let mut report = calibrate(&tape, cfg.calibrate.max_bins, lot);
    if !has_fills {
        report
            .warnings
            .push("vartheta: tape records no agent fills, execution sizes not estimated".into());
    }
    let dir = cfg.dir("calibration")?;
    let mut files = vec!["report.json".to_string(), "hazard.csv".to_string()];
    write_hazard_csv(create(&dir.join("hazard.csv"))?, &report.hazard_bins)?;
    if let Some(fit) = &report.lambda {
        let s_hi = report.hazard_bins.last().map_or(1.0, |b| b.s_hi);
        write_intensity_csv(create(&dir.join("intensity.csv"))?, fit, s_hi, 200)?;
        files.push("intensity.csv".into());
    }
    let out = CalibrationOutput {
        tape: path.display().to_string(),
        params_hash: cfg.params.hash(),
        report,
    };
    write_json(&dir.join("report.json"), &out)?;
    Manifest::new("calibrate", cfg, files).write(&dir)?;
    Ok(dir)
}
