//! The commands behind the binary.

use std::path::{Path, PathBuf};

use bowley_core::choquet::Distortion;
use bowley_core::dataio::{synth_generate, DEFAULT_ROWS};
use bowley_core::game::{FarmerPreference, GameConfig, Leader, Mode, Problem, ScenarioSet};
use bowley_core::oracle::{
    default_deductibles, enumeration_oracle, expected_grid, general_grid, leader_grid_oracle,
    power_grid, verify_oracle, FollowerRule, OracleResult,
};
use bowley_core::premium::PremiumPrinciple;
use bowley_core::vpbgd::{solve_with_model, verify_report, EquilibriumReport, SolveError, SolverConfig};
use serde::Serialize;

use crate::config::{FollowerSpec, Loaded, OracleSpec};
use crate::error::{Error, Result};
use crate::files;
use crate::report::{self, ORACLE_FILE, REPORT_FILE};

pub const SCENARIOS_FILE: &str = "scenarios.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone)]
pub struct GenData {
    pub seed: u64,
    pub n: usize,
    pub basis_risk: f64,
    pub rows: usize,
    pub out: PathBuf,
}

impl Default for GenData {
    fn default() -> Self {
        GenData {
            seed: 0,
            n: 200,
            basis_risk: 0.5,
            rows: DEFAULT_ROWS,
            out: PathBuf::from("."),
        }
    }
}

/// Writes `scenarios.csv` and returns its path.
pub fn gen_data(g: &GenData) -> Result<PathBuf> {
    let s = synth_generate(g.seed, g.n, g.basis_risk, g.rows)?;
    report::create_dir(&g.out)?;
    let path = g.out.join(SCENARIOS_FILE);
    files::write_scenarios(&path, &s)?;
    Ok(path)
}

/// Solves and writes the artifacts into `out`. A diverged run still writes
/// its partial report before the error is returned.
pub fn solve_into(
    game: &GameConfig,
    scfg: &SolverConfig,
    s: &ScenarioSet,
    out: &Path,
) -> Result<EquilibriumReport> {
    match solve_with_model(game, scfg, s) {
        Ok((r, model)) => {
            report::write_solve(out, &r, Some(&model))?;
            Ok(r)
        }
        Err(SolveError::Diverged { iteration, report }) => {
            report::write_solve(out, &report, None)?;
            Err(Error::Diverged { iteration, report })
        }
        Err(SolveError::Core(e)) => Err(e.into()),
    }
}

pub fn solve(l: &Loaded) -> Result<EquilibriumReport> {
    let s = l.scenarios()?;
    solve_into(&l.config.game, &l.config.solver, &s, &l.out)
}

fn enumeration_levels(s: &ScenarioSet, step: f64) -> Vec<Vec<f64>> {
    s.losses()
        .iter()
        .map(|&y| {
            let mut v: Vec<f64> = (0..)
                .map(|k| k as f64 * step)
                .take_while(|&x| x < y)
                .collect();
            v.push(y);
            v
        })
        .collect()
}

/// Leader grid of the game's problem.
pub fn leader_grid(game: &GameConfig, spec: &OracleSpec, s: &ScenarioSet) -> Result<Vec<PremiumPrinciple>> {
    let thetas = spec.thetas.values();
    Ok(match game.problem {
        Problem::P1 => expected_grid(&thetas),
        Problem::P2 => power_grid(&thetas, &spec.rhos.values()),
        Problem::P3 => general_grid(
            s,
            &thetas,
            &spec.rhos.values(),
            &spec.curve_values,
            game.leader.knots,
        )?,
    })
}

pub fn run_oracle(game: &GameConfig, spec: &OracleSpec, s: &ScenarioSet) -> Result<OracleResult> {
    if game.mode != Mode::Indemnity {
        return Err(Error::Config("oracles are defined for indemnity mode only".into()));
    }
    let grid = leader_grid(game, spec, s)?;
    let r = match spec.follower {
        FollowerSpec::StopLoss => leader_grid_oracle(
            game,
            s,
            &grid,
            &FollowerRule::StopLoss {
                deductibles: default_deductibles(s),
            },
        )?,
        FollowerSpec::Layers => leader_grid_oracle(game, s, &grid, &FollowerRule::Layers)?,
        FollowerSpec::Enumerate { step } => {
            enumeration_oracle(game, s, &grid, &enumeration_levels(s, step))?
        }
    };
    verify_oracle(&r, game, s)?;
    Ok(r)
}

pub fn oracle(l: &Loaded) -> Result<OracleResult> {
    let s = l.scenarios()?;
    let r = run_oracle(&l.config.game, &l.config.oracle, &s)?;
    report::write_oracle(&l.out, &r)?;
    Ok(r)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub theta: Option<f64>,
    pub rho: Option<f64>,
    pub insurer_profit: f64,
    pub farmer_risk: f64,
    pub premium: f64,
    pub expected_payoff: f64,
    pub final_gap: f64,
}

fn tail_level(f: &FarmerPreference) -> f64 {
    match f.distortion() {
        Distortion::Cvar { alpha } | Distortion::ConvexCombo { alpha, .. } => *alpha,
        _ => unreachable!("farmer distortions are cvar or convex_combo"),
    }
}

/// Directory of one sweep point.
pub fn sweep_dir(out: &Path, lambda: f64) -> PathBuf {
    out.join(format!("lambda_{lambda}"))
}

/// One solve per farmer `lambda`, each in its own directory, plus a summary
/// table in `sweep.csv`.
pub fn sweep(l: &Loaded) -> Result<Vec<SweepRow>> {
    let s = l.scenarios()?;
    let alpha = tail_level(&l.config.game.farmer);
    let mut rows = Vec::new();
    for &lambda in &l.config.sweep.lambdas {
        let mut game = l.config.game.clone();
        game.farmer = FarmerPreference::convex_combo(lambda, alpha)?;
        let r = solve_into(&game, &l.config.solver, &s, &sweep_dir(&l.out, lambda))?;
        let (theta, rho) = match r.leader {
            Leader::Theta { theta } => (Some(theta), None),
            Leader::ThetaRho { theta, rho } => (Some(theta), Some(rho)),
            Leader::Curve { .. } => (None, None),
        };
        rows.push(SweepRow {
            lambda,
            theta,
            rho,
            insurer_profit: r.insurer_profit,
            farmer_risk: r.farmer_risk,
            premium: r.premium,
            expected_payoff: r.expected_payoff,
            final_gap: r.final_gap,
        });
    }
    let path = l.out.join(SWEEP_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

pub fn verify_report_file(path: &Path) -> Result<EquilibriumReport> {
    let r: EquilibriumReport = report::read_json(path)?;
    verify_report(&r)?;
    Ok(r)
}

/// Re-checks every report under the output directory (including sweep
/// points) and the oracle result against the configured data. Returns the
/// files checked.
pub fn verify(l: &Loaded) -> Result<Vec<PathBuf>> {
    let mut checked = Vec::new();
    let mut reports = vec![l.out.join(REPORT_FILE)];
    reports.extend(
        l.config
            .sweep
            .lambdas
            .iter()
            .map(|&lambda| sweep_dir(&l.out, lambda).join(REPORT_FILE)),
    );
    for path in reports.into_iter().filter(|p| p.is_file()) {
        verify_report_file(&path)?;
        checked.push(path);
    }
    let oracle = l.out.join(ORACLE_FILE);
    if oracle.is_file() {
        let r: OracleResult = report::read_json(&oracle)?;
        verify_oracle(&r, &l.config.game, &l.scenarios()?)?;
        checked.push(oracle);
    }
    if checked.is_empty() {
        return Err(Error::Config(format!(
            "nothing to verify in {}",
            l.out.display()
        )));
    }
    Ok(checked)
}
