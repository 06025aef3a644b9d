//! Plot-ready exports and the artifact checks table.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use renewal_mm::model::{MarketModel, Side};
use renewal_mm::pde::ValueGrid;
use renewal_mm::policy::{
    adjustments, control_approx_node, control_disagreement, control_eta0, control_exact_node,
    operator_identity_residual, write_policy_csv,
};
use serde::{Deserialize, Serialize};

use crate::commands::{create, load_solved, q_window, read_backtest_summary, ConvergenceLog, Solved};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// One row of the checks table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(id: &str, name: &str, value: f64, limit: f64) -> Self {
        Check {
            id: id.into(),
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }

    fn at_least(id: &str, name: &str, value: f64, limit: f64) -> Self {
        Check {
            pass: value >= limit,
            ..Check::at_most(id, name, value, limit)
        }
    }
}

/// Tolerance for invariants that hold exactly in exact arithmetic.
const ROUNDING: f64 = 1e-9;

fn min_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

/// Evaluates every check the available artifacts allow.
pub fn checks(cfg: &RunConfig, model: &MarketModel, solved: &Solved) -> CliResult<Vec<Check>> {
    let p = model.params();
    let spec = solved.omega.spec;
    let mut out = Vec::new();

    if p.horizon >= 50.0 * p.mean_inter_arrival() {
        let worst = (0..=spec.n_s)
            .map(|k| (solved.theta.get(0, k) - model.theta_infinity_frozen(spec.s(k))).abs())
            .fold(0.0, f64::max);
        let scale = 2.0 * p.delta / (1.0 - p.alpha);
        out.push(Check::at_most("AC-2", "theta asymptote gap", worst, 0.01 * scale));
    }

    out.push(Check::at_least(
        "AC-10",
        "min omega",
        min_of(solved.omega.values().iter().copied()),
        -ROUNDING,
    ));
    let variance = solved
        .zeta0
        .values()
        .iter()
        .zip(solved.zeta1.values())
        .map(|(z0, z1)| z0 - z1 * z1);
    out.push(Check::at_least("AC-10", "min zeta0 - zeta1^2", min_of(variance), -ROUNDING));

    let adj = adjustments(model, &solved.zeta1);
    let b_min = min_of(Side::BOTH.iter().flat_map(|&s| adj.b(s).values().iter().copied()));
    out.push(Check::at_least("AC-6", "min B", b_min, 0.0));
    let eta = if p.eta > 0.0 { p.eta } else { 1.0 };
    let residual = operator_identity_residual(model, &solved.zeta1, &solved.zeta0, &adj, eta, q_window(cfg));
    out.push(Check::at_most("AC-6", "operator identity residual", residual, 1e-10));

    if let Some(zeta) = &solved.zeta {
        let qb = zeta.q_max;
        let mut lowest = f64::INFINITY;
        let mut excess = f64::NEG_INFINITY;
        for j in 0..=spec.n_t {
            for k in 0..=spec.n_s {
                for q in -qb..=qb {
                    let z = zeta.get(j, k, q);
                    lowest = lowest.min(z);
                    excess = excess.max(z - solved.omega.get(j, k) - zeta.eta * (q * q) as f64);
                }
            }
        }
        out.push(Check::at_least("AC-10", "min zeta", lowest, -ROUNDING));
        out.push(Check::at_most("AC-10", "max zeta - omega - eta q^2", excess, ROUNDING));
        if zeta.eta <= 1e-3 {
            let rate = control_disagreement(model, zeta, &solved.barriers, &adj, q_window(cfg))?;
            out.push(Check::at_most("AC-7", "exact vs approx disagreement rate", rate, 0.01));
        }
    }

    let conv = cfg.out_dir.join("grids").join("convergence.json");
    if conv.exists() {
        let log: ConvergenceLog = serde_json::from_reader(BufReader::new(File::open(&conv)?))?;
        for f in log.fields.iter().filter(|f| f.field == "theta" || f.field == "omega") {
            out.push(Check::at_least("AC-10", &format!("{} Richardson order", f.field), f.order, 0.8));
        }
    }

    if let Some(summary) = read_backtest_summary(cfg)? {
        let find = |name: &str| summary.reports.iter().find(|r| r.policy == name);
        if let Some(best) = find(&summary.optimal) {
            for other in ["hold", "always_on"] {
                if let Some(o) = find(other) {
                    let se = best.utility.se.hypot(o.utility.se);
                    let shortfall = o.utility.mean - best.utility.mean;
                    out.push(Check::at_most(
                        "AC-8",
                        &format!("{} minus {} utility", other, best.policy),
                        shortfall,
                        3.0 * se,
                    ));
                }
            }
        }
    }
    Ok(out)
}

fn write_omega_sections(path: &std::path::Path, omega: &ValueGrid) -> CliResult<()> {
    let spec = omega.spec;
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "s", "omega"])?;
    let mut rows: Vec<usize> = (0..4).map(|i| i * spec.n_t / 4).collect();
    rows.dedup();
    for j in rows {
        for k in 0..=spec.n_s {
            w.serialize((spec.t(j), spec.s(k), omega.get(j, k)))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the section and region CSVs plus `checks.csv`, prints the checks
/// table and fails when any check fails.
pub fn cmd_report(cfg: &RunConfig) -> CliResult<(PathBuf, Vec<Check>)> {
    let model = MarketModel::new(cfg.params.clone())?;
    let solved = load_solved(cfg)?;
    let dir = cfg.dir("report")?;
    let g = &solved.barriers;
    let spec = g.spec();

    write_omega_sections(&dir.join("omega_sections.csv"), &solved.omega)?;
    write_policy_csv(create(&dir.join("eta0_regions.csv"))?, &spec, None, |j, k, _| {
        control_eta0(g, spec.t(j), spec.s(k))
    })?;
    if cfg.risk_averse() {
        let qw = q_window(cfg);
        let adj = adjustments(&model, &solved.zeta1);
        let eta = cfg.params.eta;
        write_policy_csv(create(&dir.join("q_regions.csv"))?, &spec, Some(-qw..=qw), |j, k, q| match &solved
            .zeta
        {
            Some(zeta) => Ok(control_exact_node(&model, zeta, g, j, k, q)?),
            None => Ok(control_approx_node(g, &adj, eta, j, k, q)),
        })?;
    }

    let table = checks(cfg, &model, &solved)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("checks.csv"))?);
    w.write_record(["id", "name", "value", "limit", "status"])?;
    for c in &table {
        let status = if c.pass { "PASS" } else { "FAIL" };
        w.write_record([c.id.clone(), c.name.clone(), c.value.to_string(), c.limit.to_string(), status.into()])?;
        println!("{status} {:<6} {:<40} value {:.3e} limit {:.3e}", c.id, c.name, c.value, c.limit);
    }
    w.flush()?;
    let failed = table.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed {
            failed,
            total: table.len(),
        });
    }
    Ok((dir, table))
}
