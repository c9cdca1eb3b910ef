//! The insurer's upper problem, the farmer's lower problem, and the
//! value-gap penalized objective that joins them.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::choquet::{choquet, choquet_subgradient, Distortion, OutcomeSample, PROB_SUM_TOL};
use crate::payoff::{MonotonePricingCurve, PayoffModel};
use crate::premium::{premium_gradients, premium_unchecked, CostModel, PremiumPrinciple};
use crate::{Error, Result};

/// Months per weather-index row.
pub const MONTHS: usize = 12;

/// One state of the world.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// `rows x 12` index matrix, row-major; absent for indemnity-only data.
    pub weather: Option<Vec<f64>>,
    pub loss: f64,
    pub prob: f64,
}

/// The finite probability space the game is played on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    rows: usize,
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    /// `rows` is the number of weather indices per scenario, 0 when no
    /// weather grids are attached.
    pub fn new(rows: usize, scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidSample("scenario set is empty".into()));
        }
        let mut total = 0.0;
        for (n, s) in scenarios.iter().enumerate() {
            if !(s.loss.is_finite() && s.loss >= 0.0) {
                return Err(Error::InvalidSample(format!(
                    "scenario {n}: loss must be finite and >= 0, got {}",
                    s.loss
                )));
            }
            if !(s.prob.is_finite() && s.prob > 0.0) {
                return Err(Error::InvalidSample(format!(
                    "scenario {n}: probability must be > 0, got {}",
                    s.prob
                )));
            }
            total += s.prob;
            match (&s.weather, rows) {
                (None, 0) => {}
                (Some(w), r) if r > 0 && w.len() == r * MONTHS => {
                    if w.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidSample(format!(
                            "scenario {n}: non-finite weather value"
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidSample(format!(
                        "scenario {n}: weather grid does not match {rows} x {MONTHS}"
                    )))
                }
            }
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidSample(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(ScenarioSet { rows, scenarios })
    }

    /// Loss-only scenarios with the given probabilities.
    pub fn from_losses(losses: &[f64], probs: &[f64]) -> Result<Self> {
        if losses.len() != probs.len() {
            return Err(Error::InvalidSample(format!(
                "{} losses but {} probabilities",
                losses.len(),
                probs.len()
            )));
        }
        Self::new(
            0,
            losses
                .iter()
                .zip(probs)
                .map(|(&loss, &prob)| Scenario {
                    weather: None,
                    loss,
                    prob,
                })
                .collect(),
        )
    }

    /// Equally likely loss-only scenarios.
    pub fn uniform_losses(losses: &[f64]) -> Result<Self> {
        let p = alloc::vec![1.0 / losses.len().max(1) as f64; losses.len()];
        Self::from_losses(losses, &p)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn has_weather(&self) -> bool {
        self.rows > 0
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn losses(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.loss).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.prob).collect()
    }

    pub fn loss_sample(&self) -> OutcomeSample {
        OutcomeSample::new(self.losses(), self.probs())
            .expect("scenario set invariants make a valid sample")
    }

    /// Same scenarios with every loss multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let scenarios = self
            .scenarios
            .iter()
            .map(|s| Scenario {
                weather: s.weather.clone(),
                loss: s.loss * c,
                prob: s.prob,
            })
            .collect();
        Self::new(self.rows, scenarios)
    }
}

/// The farmer's distortion: concave with `g(1) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Distortion", into = "Distortion")]
pub struct FarmerPreference {
    distortion: Distortion,
}

impl TryFrom<Distortion> for FarmerPreference {
    type Error = Error;

    fn try_from(d: Distortion) -> Result<Self> {
        FarmerPreference::new(d)
    }
}

impl From<FarmerPreference> for Distortion {
    fn from(f: FarmerPreference) -> Self {
        f.distortion
    }
}

impl FarmerPreference {
    pub fn new(distortion: Distortion) -> Result<Self> {
        distortion.validate()?;
        match distortion {
            Distortion::Cvar { .. } | Distortion::ConvexCombo { .. } => {
                Ok(FarmerPreference { distortion })
            }
            _ => Err(Error::Config(
                "farmer distortion must be cvar or convex_combo".to_string(),
            )),
        }
    }

    pub fn cvar(alpha: f64) -> Result<Self> {
        Self::new(Distortion::cvar(alpha)?)
    }

    pub fn convex_combo(lambda: f64, alpha: f64) -> Result<Self> {
        Self::new(Distortion::convex_combo(lambda, alpha)?)
    }

    pub fn distortion(&self) -> &Distortion {
        &self.distortion
    }

    /// `rho_F(Z)`.
    pub fn risk(&self, z: &OutcomeSample) -> f64 {
        choquet(&self.distortion, z)
    }
}

/// Which feasible set of premium principles the insurer searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    /// Expected-value principle, loading `theta`.
    P1,
    /// Power distortion, `theta` and `rho`.
    P2,
    /// General nondecreasing distortion (knot curve).
    P3,
}

/// Whether the payoff is written on the weather grid or on the loss itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Index,
    Indemnity,
}

/// Starting point of the leader's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeaderInit {
    pub theta: f64,
    pub rho: f64,
    /// Knot count of the pricing curve (Problem 3).
    pub knots: usize,
    /// Raw curve parameters; when absent the curve starts at `(1 + theta) s`.
    pub raw_increments: Option<Vec<f64>>,
}

impl Default for LeaderInit {
    fn default() -> Self {
        LeaderInit {
            theta: 0.1,
            rho: 1.0,
            knots: crate::choquet::DEFAULT_KNOTS,
            raw_increments: None,
        }
    }
}

/// Everything that defines one game instance apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub problem: Problem,
    pub mode: Mode,
    #[serde(default)]
    pub cost: CostModel,
    pub farmer: FarmerPreference,
    #[serde(default)]
    pub leader: LeaderInit,
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        if !(self.leader.theta.is_finite() && self.leader.theta >= 0.0) {
            return Err(Error::Config(format!(
                "leader.theta must be >= 0, got {}",
                self.leader.theta
            )));
        }
        if !(self.leader.rho.is_finite() && self.leader.rho >= 1.0) {
            return Err(Error::Config(format!(
                "leader.rho must be >= 1, got {}",
                self.leader.rho
            )));
        }
        if self.leader.knots == 0 {
            return Err(Error::Config("leader.knots must be positive".into()));
        }
        if let Some(raw) = &self.leader.raw_increments {
            if raw.len() != self.leader.knots {
                return Err(Error::Config(format!(
                    "leader.raw_increments has {} entries, knots is {}",
                    raw.len(),
                    self.leader.knots
                )));
            }
        }
        Ok(())
    }
}

/// The leader's decision variables for each problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Leader {
    Theta { theta: f64 },
    ThetaRho { theta: f64, rho: f64 },
    Curve { curve: MonotonePricingCurve },
}

impl Leader {
    pub fn initial(cfg: &GameConfig) -> Result<Self> {
        cfg.validate()?;
        let init = &cfg.leader;
        Ok(match cfg.problem {
            Problem::P1 => Leader::Theta { theta: init.theta },
            Problem::P2 => Leader::ThetaRho {
                theta: init.theta,
                rho: init.rho,
            },
            Problem::P3 => Leader::Curve {
                curve: match &init.raw_increments {
                    Some(raw) => MonotonePricingCurve::new(raw.clone())?,
                    None => MonotonePricingCurve::linear(init.knots, 1.0 + init.theta)?,
                },
            },
        })
    }

    pub fn premium_principle(&self) -> PremiumPrinciple {
        match self {
            Leader::Theta { theta } => PremiumPrinciple::Expected { theta: *theta },
            Leader::ThetaRho { theta, rho } => PremiumPrinciple::PowerDistortion {
                theta: *theta,
                rho: *rho,
            },
            Leader::Curve { curve } => PremiumPrinciple::General {
                distortion: curve.pricing_curve(),
            },
        }
    }

    /// Unconstrained parameter vector the solver steps on.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Leader::Theta { theta } => alloc::vec![*theta],
            Leader::ThetaRho { theta, rho } => alloc::vec![*theta, *rho],
            Leader::Curve { curve } => curve.raw().to_vec(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params().len() {
            return Err(Error::Config(format!(
                "leader expects {} parameters, got {}",
                self.params().len(),
                p.len()
            )));
        }
        match self {
            Leader::Theta { theta } => *theta = p[0],
            Leader::ThetaRho { theta, rho } => {
                *theta = p[0];
                *rho = p[1];
            }
            Leader::Curve { curve } => curve.raw_mut().copy_from_slice(p),
        }
        Ok(())
    }

    /// Projection onto the feasible set: `theta >= 0`, `rho >= 1`. Curve
    /// parameters are feasible for any value.
    pub fn project(&mut self) {
        match self {
            Leader::Theta { theta } => *theta = theta.max(0.0),
            Leader::ThetaRho { theta, rho } => {
                *theta = theta.max(0.0);
                *rho = rho.max(1.0);
            }
            Leader::Curve { .. } => {}
        }
    }

    /// Maps d premium / d (theta | theta, rho | increments) to the solver's
    /// parameters.
    pub fn chain_premium_gradient(&self, d_premium: &[f64]) -> Vec<f64> {
        match self {
            Leader::Curve { curve } => curve.chain(d_premium),
            _ => d_premium.to_vec(),
        }
    }
}

/// Objective values and payoff gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub premium: f64,
    pub expected_payoff: f64,
    /// Lower objective `rho_F(Y - I + Pi(I))`.
    pub farmer_risk: f64,
    /// Upper objective `Pi(I) - (1 + mu) E[I]`.
    pub profit: f64,
    /// Subgradient of the farmer's risk with respect to each payoff.
    pub d_risk_d_payoff: Vec<f64>,
    /// Gradient of the profit with respect to each payoff.
    pub d_profit_d_payoff: Vec<f64>,
    /// Gradient of the premium with respect to the leader's parameters
    /// (already chained through the curve transform for Problem 3).
    pub d_premium_d_leader: Vec<f64>,
}

/// Farmer's risk `rho_F(Y - I + Pi)` computed from the translation identity
/// `rho_F(Y - I) + Pi`, valid because `g_f(1) = 1`.
pub fn farmer_risk(
    farmer: &FarmerPreference,
    premium: &PremiumPrinciple,
    losses: &OutcomeSample,
    payoffs: &OutcomeSample,
) -> Result<f64> {
    let pi = crate::premium::premium(premium, payoffs)?;
    Ok(farmer.risk(&retained(losses, payoffs)?) + pi)
}

/// `Y - I` on the common probability space.
pub fn retained(losses: &OutcomeSample, payoffs: &OutcomeSample) -> Result<OutcomeSample> {
    if losses.len() != payoffs.len() {
        return Err(Error::InvalidSample(format!(
            "{} losses but {} payoffs",
            losses.len(),
            payoffs.len()
        )));
    }
    losses.with_values(
        losses
            .values()
            .iter()
            .zip(payoffs.values())
            .map(|(y, i)| y - i)
            .collect(),
    )
}

/// Both objectives and their payoff gradients.
pub fn evaluate(
    cfg: &GameConfig,
    leader: &Leader,
    losses: &OutcomeSample,
    payoffs: &OutcomeSample,
) -> Result<Evaluation> {
    let principle = leader.premium_principle();
    let grads = premium_gradients(&principle, &cfg.cost, payoffs)?;
    let premium = premium_unchecked(&principle, payoffs);
    let expected_payoff = payoffs.mean();
    let kept = retained(losses, payoffs)?;
    let farmer_risk = cfg.farmer.risk(&kept) + premium;
    let w = choquet_subgradient(cfg.farmer.distortion(), &kept);
    let d_risk_d_payoff = w
        .iter()
        .zip(&grads.payoff)
        .map(|(wf, dp)| dp - wf)
        .collect();
    let ev = Evaluation {
        premium,
        expected_payoff,
        farmer_risk,
        profit: premium - (1.0 + cfg.cost.mu) * expected_payoff,
        d_risk_d_payoff,
        d_profit_d_payoff: grads.profit_payoff,
        d_premium_d_leader: leader.chain_premium_gradient(&grads.leader),
    };
    if !(ev.farmer_risk.is_finite() && ev.profit.is_finite()) {
        return Err(Error::NonFinite("objective evaluation".into()));
    }
    Ok(ev)
}

/// `rho_F(Y - I(X) + Pi(I(X)))` for the model's payoffs.
pub fn lower_objective(
    cfg: &GameConfig,
    premium: &PremiumPrinciple,
    model: &PayoffModel,
    s: &ScenarioSet,
) -> Result<f64> {
    let payoffs = model.payoff_batch(s)?;
    farmer_risk(&cfg.farmer, premium, &s.loss_sample(), &payoffs)
}

/// Insurer's profit `Pi(I(X)) - (1 + mu) E[I(X)]`.
pub fn upper_objective(
    cfg: &GameConfig,
    premium: &PremiumPrinciple,
    model: &PayoffModel,
    s: &ScenarioSet,
) -> Result<f64> {
    let payoffs = model.payoff_batch(s)?;
    crate::premium::insurer_profit(premium, &cfg.cost, &payoffs)
}

/// `-UP(I) + gamma (LP(I) - LP(I_ref))`, with `I_ref` the inner-loop
/// refinement standing in for the lower-level minimizer.
pub fn combined_objective(
    cfg: &GameConfig,
    premium: &PremiumPrinciple,
    model: &PayoffModel,
    ref_model: &PayoffModel,
    gamma: f64,
    s: &ScenarioSet,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
    }
    let up = upper_objective(cfg, premium, model, s)?;
    let gap = lower_objective(cfg, premium, model, s)? - lower_objective(cfg, premium, ref_model, s)?;
    Ok(-up + gamma * gap)
}
