//! Value-gap penalized bilevel gradient descent.
//!
//! Each outer iteration copies the current payoff model into a reference
//! model, runs a fresh inner subgradient loop on the farmer's objective from
//! there, and then steps the leader and the payoff model on
//! `-UP(x, I) + gamma * (LP(x, I) - LP(x, I_ref))`. The gradient of the
//! value function in the leader's parameters is taken at the reference
//! model.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choquet::OutcomeSample;
use crate::diffnet::ExponentialDecay;
use crate::game::{evaluate, Evaluation, GameConfig, Leader, Mode, Problem, ScenarioSet};
use crate::payoff::{Architecture, InputMode, PayoffModel};
use crate::{Error, Result};

/// Objective magnitude treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Points on which the learned pricing curve is reported.
pub const CURVE_POINTS: usize = 101;

/// Step sizes, budgets and model choices of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Outer step size at iteration 0.
    pub alpha0: f64,
    /// Per-iteration decay of both step sizes.
    pub decay: f64,
    /// Penalty weight on the value gap.
    pub gamma: f64,
    /// Multiplier on the outer step for the leader's parameters.
    pub leader_scale: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    /// Inner step size at the start of each inner loop; `alpha0` if absent.
    pub beta: Option<f64>,
    pub seed: u64,
    /// Slack used when counting inner-loop increases.
    pub tolerance: f64,
    pub architecture: Architecture,
    /// Initial output bias of the payoff network; half the mean loss if
    /// absent.
    pub output_bias: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha0: 0.01,
            decay: 0.96,
            gamma: 10.0,
            leader_scale: 1.0,
            inner_iters: 50,
            outer_iters: 300,
            beta: None,
            seed: 0,
            tolerance: 1e-9,
            architecture: Architecture::default(),
            output_bias: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("solver.{field}: {why}")));
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return bad("alpha0", "must be > 0");
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad("decay", "must lie in (0, 1)");
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("gamma", "must be > 0");
        }
        if !(self.leader_scale.is_finite() && self.leader_scale > 0.0) {
            return bad("leader_scale", "must be > 0");
        }
        if self.inner_iters == 0 {
            return bad("inner_iters", "must be >= 1");
        }
        if self.outer_iters == 0 {
            return bad("outer_iters", "must be >= 1");
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b > 0.0) {
                return bad("beta", "must be > 0");
            }
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return bad("tolerance", "must be >= 0");
        }
        if let Some(b) = self.output_bias {
            if !b.is_finite() {
                return bad("output_bias", "must be finite");
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.alpha0)
    }

    pub fn outer_schedule(&self) -> ExponentialDecay {
        ExponentialDecay {
            alpha0: self.alpha0,
            decay: self.decay,
        }
    }

    pub fn inner_schedule(&self) -> ExponentialDecay {
        ExponentialDecay {
            alpha0: self.beta(),
            decay: self.decay,
        }
    }
}

/// Leader and follower iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub leader: Leader,
    pub model: PayoffModel,
    pub iteration: usize,
}

impl SolverState {
    /// Leader from the game's initial values, payoff network seeded from
    /// `scfg.seed`.
    pub fn initial(game: &GameConfig, scfg: &SolverConfig, s: &ScenarioSet) -> Result<Self> {
        game.validate()?;
        scfg.validate()?;
        let mode = input_mode(game, s)?;
        let bias = scfg
            .output_bias
            .unwrap_or_else(|| 0.5 * s.loss_sample().mean());
        let mut rng = ChaCha8Rng::seed_from_u64(scfg.seed);
        let model = PayoffModel::new(mode, &scfg.architecture, s, bias, &mut rng)?;
        Ok(SolverState {
            leader: Leader::initial(game)?,
            model,
            iteration: 0,
        })
    }
}

/// The payoff input implied by the game mode and the data.
pub fn input_mode(game: &GameConfig, s: &ScenarioSet) -> Result<InputMode> {
    match game.mode {
        Mode::Indemnity => Ok(InputMode::ScalarLoss),
        Mode::Index if s.has_weather() => Ok(InputMode::IndexGrid { rows: s.rows() }),
        Mode::Index => Err(Error::Config(
            "index mode needs scenarios with weather grids".into(),
        )),
    }
}

/// Outcome of one inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    /// Lowest-objective iterate seen, the start included.
    pub model: PayoffModel,
    pub lp_start: f64,
    pub lp_best: f64,
    /// Steps after which the objective rose by more than the tolerance.
    pub increases: usize,
}

fn check_finite(ev: &Evaluation) -> Result<()> {
    if ev.farmer_risk.is_finite() && ev.profit.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "objective (risk {}, profit {})",
            ev.farmer_risk, ev.profit
        )))
    }
}

/// Runs `inner_iters` subgradient steps on the farmer's objective from
/// `start` with the leader frozen, step `beta * decay^t`.
pub fn inner_solve(
    game: &GameConfig,
    scfg: &SolverConfig,
    leader: &Leader,
    start: &PayoffModel,
    s: &ScenarioSet,
) -> Result<InnerSolution> {
    let losses = s.loss_sample();
    let schedule = scfg.inner_schedule();
    let mut cur = start.clone();
    cur.network_mut().zero_grad();
    let mut ev = evaluate(game, leader, &losses, &cur.payoff_batch(s)?)?;
    check_finite(&ev)?;
    let lp_start = ev.farmer_risk;
    let mut best = (lp_start, cur.clone());
    let mut increases = 0;
    let mut last = lp_start;
    for t in 0..scfg.inner_iters {
        cur.accumulate_gradients(s, &ev.d_risk_d_payoff)?;
        if cur.network().gradients().iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("inner gradient".into()));
        }
        cur.network_mut().sgd_step(schedule.rate(t));
        ev = evaluate(game, leader, &losses, &cur.payoff_batch(s)?)?;
        check_finite(&ev)?;
        if ev.farmer_risk > last + scfg.tolerance {
            increases += 1;
        }
        last = ev.farmer_risk;
        if ev.farmer_risk < best.0 {
            best = (ev.farmer_risk, cur.clone());
        }
    }
    Ok(InnerSolution {
        model: best.1,
        lp_start,
        lp_best: best.0,
        increases,
    })
}

/// Objective values at the iterate an outer step started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iter: usize,
    /// Negated insurer profit.
    pub up_loss: f64,
    /// Farmer's risk at the current payoff.
    pub lp_loss: f64,
    /// `LP(I) - LP(I_ref)`.
    pub gap: f64,
    #[serde(skip)]
    pub inner_increases: usize,
}

/// One penalized step with rate `lr` on the payoff model and
/// `lr * leader_scale` on the leader, followed by projection of the leader.
pub fn outer_step(
    game: &GameConfig,
    scfg: &SolverConfig,
    state: &mut SolverState,
    s: &ScenarioSet,
    lr: f64,
) -> Result<StepRecord> {
    let losses = s.loss_sample();
    let inner = inner_solve(game, scfg, &state.leader, &state.model, s)?;
    let ev = evaluate(game, &state.leader, &losses, &state.model.payoff_batch(s)?)?;
    let ev_ref = evaluate(game, &state.leader, &losses, &inner.model.payoff_batch(s)?)?;
    check_finite(&ev)?;
    let gamma = scfg.gamma;

    let d_leader: Vec<f64> = ev
        .d_premium_d_leader
        .iter()
        .zip(&ev_ref.d_premium_d_leader)
        .map(|(a, b)| -a + gamma * (a - b))
        .collect();
    let d_payoff: Vec<f64> = ev
        .d_profit_d_payoff
        .iter()
        .zip(&ev.d_risk_d_payoff)
        .map(|(up, lp)| -up + gamma * lp)
        .collect();
    if d_leader.iter().chain(&d_payoff).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("outer gradient".into()));
    }

    state.model.network_mut().zero_grad();
    state.model.accumulate_gradients(s, &d_payoff)?;
    if state.model.network().gradients().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("outer gradient".into()));
    }
    state.model.network_mut().sgd_step(lr);
    let params: Vec<f64> = state
        .leader
        .params()
        .iter()
        .zip(&d_leader)
        .map(|(p, g)| p - lr * scfg.leader_scale * g)
        .collect();
    state.leader.set_params(&params)?;
    state.leader.project();
    state.iteration += 1;

    Ok(StepRecord {
        iter: state.iteration - 1,
        up_loss: -ev.profit,
        lp_loss: ev.farmer_risk,
        gap: ev.farmer_risk - inner.lp_best,
        inner_increases: inner.increases,
    })
}

/// One row of the payoff trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffPoint {
    pub scenario: usize,
    pub prob: f64,
    pub loss: f64,
    pub payoff: f64,
}

/// Learned pricing curve on an even grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub s: f64,
    pub g: f64,
}

/// What a solve produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub problem: Problem,
    pub mode: Mode,
    pub leader: Leader,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pricing_curve: Vec<CurveSample>,
    pub insurer_profit: f64,
    pub farmer_risk: f64,
    pub premium: f64,
    pub expected_payoff: f64,
    /// Value gap at the reported point.
    pub final_gap: f64,
    /// Outer iterations actually run.
    pub iterations: usize,
    /// Inner steps that raised the farmer's objective, summed over the run.
    pub inner_increases: usize,
    pub curves: Vec<StepRecord>,
    pub payoffs: Vec<PayoffPoint>,
    pub seed: u64,
    pub game: GameConfig,
    pub solver: SolverConfig,
}

/// Tolerance of [`verify_report`].
pub const REPORT_TOL: f64 = 1e-9;

/// Recomputes premium, expected payoff, profit and farmer risk from the
/// reported leader and payoff trace.
pub fn verify_report(r: &EquilibriumReport) -> Result<()> {
    let losses: Vec<f64> = r.payoffs.iter().map(|p| p.loss).collect();
    let payoffs: Vec<f64> = r.payoffs.iter().map(|p| p.payoff).collect();
    let probs: Vec<f64> = r.payoffs.iter().map(|p| p.prob).collect();
    let y = OutcomeSample::new(losses, probs.clone())?;
    let i = OutcomeSample::new(payoffs, probs)?;
    let principle = r.leader.premium_principle();
    principle.validate()?;
    let premium = crate::premium::premium(&principle, &i)?;
    let profit = crate::premium::insurer_profit(&principle, &r.game.cost, &i)?;
    let risk = crate::game::farmer_risk(&r.game.farmer, &principle, &y, &i)?;
    let checks = [
        ("insurer_profit", r.insurer_profit, profit),
        ("premium", r.premium, premium),
        ("expected_payoff", r.expected_payoff, i.mean()),
        ("farmer_risk", r.farmer_risk, risk),
    ];
    for (name, reported, recomputed) in checks {
        if !((reported - recomputed).abs() <= REPORT_TOL * (1.0 + recomputed.abs())) {
            return Err(Error::InvalidSample(format!(
                "report {name} {reported} differs from recomputed {recomputed}"
            )));
        }
    }
    if let Leader::Curve { curve } = &r.leader {
        let g = curve.pricing_curve();
        for p in &r.pricing_curve {
            let want = g.eval(p.s)?;
            if (p.g - want).abs() > REPORT_TOL * (1.0 + want.abs()) {
                return Err(Error::InvalidSample(format!(
                    "pricing curve sample at {} differs from the reported curve",
                    p.s
                )));
            }
        }
    }
    Ok(())
}

/// Solve failure; divergence carries the report up to the failing
/// iteration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("objective diverged at outer iteration {iteration}")]
    Diverged {
        iteration: usize,
        report: Box<EquilibriumReport>,
    },
}

fn build_report(
    game: &GameConfig,
    scfg: &SolverConfig,
    s: &ScenarioSet,
    state: &SolverState,
    curves: Vec<StepRecord>,
    final_gap: f64,
) -> Result<EquilibriumReport> {
    let losses = s.loss_sample();
    let payoffs = state.model.payoff_batch(s)?;
    let ev = evaluate(game, &state.leader, &losses, &payoffs)?;
    let pricing_curve = match &state.leader {
        Leader::Curve { curve } => curve
            .samples(CURVE_POINTS)
            .into_iter()
            .map(|(s, g)| CurveSample { s, g })
            .collect(),
        _ => Vec::new(),
    };
    let inner_increases = curves.iter().map(|c| c.inner_increases).sum();
    Ok(EquilibriumReport {
        problem: game.problem,
        mode: game.mode,
        leader: state.leader.clone(),
        pricing_curve,
        insurer_profit: ev.profit,
        farmer_risk: ev.farmer_risk,
        premium: ev.premium,
        expected_payoff: ev.expected_payoff,
        final_gap,
        iterations: state.iteration,
        inner_increases,
        payoffs: s
            .scenarios()
            .iter()
            .zip(payoffs.values())
            .enumerate()
            .map(|(n, (sc, &payoff))| PayoffPoint {
                scenario: n,
                prob: sc.prob,
                loss: sc.loss,
                payoff,
            })
            .collect(),
        curves,
        seed: scfg.seed,
        game: game.clone(),
        solver: scfg.clone(),
    })
}

fn diverged(r: &StepRecord) -> bool {
    !(r.up_loss.abs() <= DIVERGENCE_BOUND && r.lp_loss.abs() <= DIVERGENCE_BOUND)
}

/// Runs the full outer loop and returns the report with the trained model.
pub fn solve_with_model(
    game: &GameConfig,
    scfg: &SolverConfig,
    s: &ScenarioSet,
) -> core::result::Result<(EquilibriumReport, PayoffModel), SolveError> {
    let mut state = SolverState::initial(game, scfg, s)?;
    let schedule = scfg.outer_schedule();
    let mut curves = Vec::with_capacity(scfg.outer_iters);
    for k in 0..scfg.outer_iters {
        let rec = match outer_step(game, scfg, &mut state, s, schedule.rate(k)) {
            Ok(rec) => rec,
            Err(Error::NonFinite(_)) => {
                return Err(SolveError::Diverged {
                    iteration: k,
                    report: Box::new(build_report(game, scfg, s, &state, curves, f64::NAN)?),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let bad = diverged(&rec);
        curves.push(rec);
        if bad {
            return Err(SolveError::Diverged {
                iteration: k,
                report: Box::new(build_report(game, scfg, s, &state, curves, f64::NAN)?),
            });
        }
    }
    let inner = inner_solve(game, scfg, &state.leader, &state.model, s)?;
    let gap = inner.lp_start - inner.lp_best;
    let report = build_report(game, scfg, s, &state, curves, gap)?;
    if diverged(&StepRecord {
        iter: state.iteration,
        up_loss: report.insurer_profit,
        lp_loss: report.farmer_risk,
        gap,
        inner_increases: 0,
    }) {
        return Err(SolveError::Diverged {
            iteration: state.iteration,
            report: Box::new(report),
        });
    }
    Ok((report, state.model))
}

/// Runs the full outer loop.
pub fn solve(
    game: &GameConfig,
    scfg: &SolverConfig,
    s: &ScenarioSet,
) -> core::result::Result<EquilibriumReport, SolveError> {
    solve_with_model(game, scfg, s).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{FarmerPreference, LeaderInit};
    use crate::premium::CostModel;

    fn game(problem: Problem, alpha: f64) -> GameConfig {
        GameConfig {
            problem,
            mode: Mode::Indemnity,
            cost: CostModel::default(),
            farmer: FarmerPreference::cvar(alpha).unwrap(),
            leader: LeaderInit::default(),
        }
    }

    #[test]
    fn zero_losses_give_zero_equilibrium() {
        let s = ScenarioSet::uniform_losses(&[0.0, 0.0, 0.0]).unwrap();
        let scfg = SolverConfig {
            outer_iters: 20,
            inner_iters: 5,
            ..SolverConfig::default()
        };
        let r = solve(&game(Problem::P1, 0.8), &scfg, &s).unwrap();
        assert!(r.payoffs.iter().all(|p| p.payoff == 0.0));
        assert_eq!(r.insurer_profit, 0.0);
        assert_eq!(r.farmer_risk, 0.0);
        verify_report(&r).unwrap();
    }

    #[test]
    fn inner_fixed_point_when_insurance_is_too_dear() {
        let s = ScenarioSet::uniform_losses(&[1.0, 4.0, 6.0]).unwrap();
        let g = game(Problem::P1, 0.5);
        let m = PayoffModel::affine_relu(InputMode::ScalarLoss, &s, 0.0, 0.0).unwrap();
        let scfg = SolverConfig::default();
        let inner = inner_solve(&g, &scfg, &Leader::Theta { theta: 10.0 }, &m, &s).unwrap();
        assert!((inner.lp_best - inner.lp_start).abs() <= 1e-8);
    }

    #[test]
    fn one_state_indemnity_reaches_closed_form() {
        // One state: LP(I) = (Y - I) + (1 + theta) I, minimized at I = 0 for
        // theta > 0 with value Y.
        let s = ScenarioSet::uniform_losses(&[5.0]).unwrap();
        let g = game(Problem::P1, 0.5);
        let m = PayoffModel::affine_relu(InputMode::ScalarLoss, &s, 0.6, 0.0).unwrap();
        let scfg = SolverConfig {
            inner_iters: 200,
            beta: Some(0.05),
            decay: 0.99,
            ..SolverConfig::default()
        };
        let inner = inner_solve(&g, &scfg, &Leader::Theta { theta: 0.5 }, &m, &s).unwrap();
        assert!((inner.lp_best - 5.0).abs() <= 1e-3, "{}", inner.lp_best);
    }

    #[test]
    fn zero_rate_leaves_state_unchanged() {
        let s = ScenarioSet::uniform_losses(&[0.0, 2.0, 5.0, 10.0]).unwrap();
        let g = game(Problem::P2, 0.8);
        let scfg = SolverConfig {
            inner_iters: 3,
            ..SolverConfig::default()
        };
        let mut st = SolverState::initial(&g, &scfg, &s).unwrap();
        let before = st.clone();
        outer_step(&g, &scfg, &mut st, &s, 0.0).unwrap();
        assert_eq!(st.leader, before.leader);
        assert_eq!(st.model.network().parameters(), before.model.network().parameters());
    }

    #[test]
    fn leader_ascends_profit_when_gap_is_zero() {
        // With I at the farmer's optimum and the inner loop unable to improve,
        // the leader direction is -dPi/dtheta = -E[I]: theta goes up by lr E[I].
        let s = ScenarioSet::uniform_losses(&[0.0, 2.0, 5.0, 10.0]).unwrap();
        let g = game(Problem::P1, 0.8);
        let scfg = SolverConfig {
            inner_iters: 1,
            beta: Some(1e-300),
            ..SolverConfig::default()
        };
        let mut st = SolverState {
            leader: Leader::Theta { theta: 2.0 },
            model: PayoffModel::affine_relu(InputMode::ScalarLoss, &s, 1.0, -5.0).unwrap(),
            iteration: 0,
        };
        outer_step(&g, &scfg, &mut st, &s, 0.1).unwrap();
        let Leader::Theta { theta } = st.leader else {
            unreachable!()
        };
        assert_close!(theta, 2.0 + 0.1 * 1.25, 1e-12);
    }

    #[test]
    fn projection_holds_at_every_iterate() {
        let s = ScenarioSet::uniform_losses(&[0.0, 2.0, 5.0, 10.0]).unwrap();
        let mut g = game(Problem::P2, 0.8);
        g.leader.theta = 0.0;
        let scfg = SolverConfig {
            alpha0: 0.5,
            outer_iters: 30,
            inner_iters: 5,
            ..SolverConfig::default()
        };
        let mut st = SolverState::initial(&g, &scfg, &s).unwrap();
        for k in 0..scfg.outer_iters {
            outer_step(&g, &scfg, &mut st, &s, scfg.outer_schedule().rate(k)).unwrap();
            let Leader::ThetaRho { theta, rho } = st.leader else {
                unreachable!()
            };
            assert!(theta >= 0.0 && rho >= 1.0);
        }
    }

    #[test]
    fn solves_are_deterministic_and_consistent() {
        let s = ScenarioSet::uniform_losses(&[0.0, 2.0, 5.0, 10.0]).unwrap();
        for problem in [Problem::P1, Problem::P2, Problem::P3] {
            let g = game(problem, 0.8);
            let scfg = SolverConfig {
                outer_iters: 15,
                inner_iters: 5,
                seed: 3,
                ..SolverConfig::default()
            };
            let a = solve(&g, &scfg, &s).unwrap();
            let b = solve(&g, &scfg, &s).unwrap();
            assert_eq!(a, b);
            verify_report(&a).unwrap();
            assert!(a.curves.iter().all(|c| c.gap >= 0.0));
            assert_eq!(a.pricing_curve.len(), if problem == Problem::P3 { 101 } else { 0 });
        }
    }

    #[test]
    fn tampered_report_fails_verification() {
        let s = ScenarioSet::uniform_losses(&[0.0, 2.0, 5.0, 10.0]).unwrap();
        let scfg = SolverConfig {
            outer_iters: 3,
            inner_iters: 2,
            ..SolverConfig::default()
        };
        let mut r = solve(&game(Problem::P1, 0.8), &scfg, &s).unwrap();
        r.insurer_profit += 1e-6;
        assert!(verify_report(&r).is_err());
    }

    #[test]
    fn huge_steps_report_divergence() {
        let s = ScenarioSet::uniform_losses(&[0.0, 2.0, 5.0, 1e6]).unwrap();
        let scfg = SolverConfig {
            alpha0: 1e9,
            decay: 0.999,
            outer_iters: 50,
            inner_iters: 2,
            ..SolverConfig::default()
        };
        match solve(&game(Problem::P1, 0.8), &scfg, &s) {
            Err(SolveError::Diverged { report, .. }) => assert!(!report.curves.is_empty() || report.iterations == 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        c.decay = 1.0;
        assert!(c.validate().is_err());
        c = SolverConfig {
            gamma: 0.0,
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
        c = SolverConfig {
            beta: Some(-1.0),
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }
}
