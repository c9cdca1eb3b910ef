//! Premium principles available to the insurer and the insurer's profit.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::choquet::{
    choquet, choquet_subgradient, knot_sensitivities, tail_weighted_sum, Distortion,
    OutcomeSample,
};
use crate::{Error, Result};

/// Default administrative cost factor.
pub const DEFAULT_MU: f64 = 0.02;

/// Pricing rule chosen by the insurer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PremiumPrinciple {
    /// `(1 + theta) E[I]`
    Expected { theta: f64 },
    /// `(1 + theta) int_0^inf P(I > z)^(1/rho) dz`
    PowerDistortion { theta: f64, rho: f64 },
    /// `int_0^inf g(P(I > z)) dz` for a nondecreasing `g` with `g(0) = 0`.
    General { distortion: Distortion },
}

impl PremiumPrinciple {
    pub fn validate(&self) -> Result<()> {
        match self {
            PremiumPrinciple::Expected { theta } => check_theta(*theta),
            PremiumPrinciple::PowerDistortion { theta, rho } => {
                check_theta(*theta)?;
                if !(rho.is_finite() && *rho >= 1.0) {
                    return Err(Error::Domain(format!("rho must be >= 1, got {rho}")));
                }
                Ok(())
            }
            PremiumPrinciple::General { distortion } => distortion.validate(),
        }
    }

    /// The distortion whose Choquet integral is this premium.
    pub fn distortion(&self) -> Distortion {
        match self {
            PremiumPrinciple::Expected { theta } => Distortion::Linear { scale: 1.0 + theta },
            PremiumPrinciple::PowerDistortion { theta, rho } => Distortion::Power {
                rho: *rho,
                scale: 1.0 + theta,
            },
            PremiumPrinciple::General { distortion } => distortion.clone(),
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::Domain(format!("theta must be >= 0, got {theta}")));
    }
    Ok(())
}

/// Proportional administrative cost: the insurer pays `(1 + mu) E[I]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub mu: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { mu: DEFAULT_MU }
    }
}

impl CostModel {
    pub fn new(mu: f64) -> Result<Self> {
        let c = CostModel { mu };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Domain(format!("mu must be >= 0, got {}", self.mu)));
        }
        Ok(())
    }
}

fn check_payoffs(i: &OutcomeSample) -> Result<()> {
    if let Some(v) = i.values().iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("payoffs must be nonnegative, got {v}")));
    }
    Ok(())
}

/// Premium charged for the payoff `i`.
pub fn premium(p: &PremiumPrinciple, i: &OutcomeSample) -> Result<f64> {
    p.validate()?;
    check_payoffs(i)?;
    Ok(premium_unchecked(p, i))
}

pub(crate) fn premium_unchecked(p: &PremiumPrinciple, i: &OutcomeSample) -> f64 {
    match p {
        PremiumPrinciple::Expected { theta } => (1.0 + theta) * i.mean(),
        PremiumPrinciple::PowerDistortion { theta, rho } => {
            (1.0 + theta) * choquet(&Distortion::Power { rho: *rho, scale: 1.0 }, i)
        }
        PremiumPrinciple::General { distortion } => choquet(distortion, i),
    }
}

/// `premium - (1 + mu) E[I]`.
pub fn insurer_profit(p: &PremiumPrinciple, c: &CostModel, i: &OutcomeSample) -> Result<f64> {
    c.validate()?;
    Ok(premium(p, i)? - (1.0 + c.mu) * i.mean())
}

/// Partial derivatives of the premium (and of the insurer's profit).
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumGradients {
    /// d premium / d leader parameters: `[theta]`, `[theta, rho]`, the knot
    /// increments of a general knot distortion, or empty for a fixed
    /// closed-form general distortion.
    pub leader: Vec<f64>,
    /// d premium / d payoff values, per state.
    pub payoff: Vec<f64>,
    /// d profit / d payoff values, per state.
    pub profit_payoff: Vec<f64>,
}

pub fn premium_gradients(
    p: &PremiumPrinciple,
    c: &CostModel,
    i: &OutcomeSample,
) -> Result<PremiumGradients> {
    p.validate()?;
    c.validate()?;
    check_payoffs(i)?;
    let (leader, payoff) = match p {
        PremiumPrinciple::Expected { theta } => {
            let payoff = i.probs().iter().map(|q| (1.0 + theta) * q).collect();
            (alloc::vec![i.mean()], payoff)
        }
        PremiumPrinciple::PowerDistortion { theta, rho } => {
            let g = Distortion::Power { rho: *rho, scale: 1.0 };
            let base = choquet(&g, i);
            let rho = *rho;
            // d/drho s^(1/rho) = -s^(1/rho) ln(s) / rho^2
            let d_rho = tail_weighted_sum(i, |s| {
                if s <= 0.0 {
                    0.0
                } else {
                    -libm::pow(s, 1.0 / rho) * libm::log(s) / (rho * rho)
                }
            });
            let payoff = choquet_subgradient(&g, i)
                .into_iter()
                .map(|w| (1.0 + theta) * w)
                .collect();
            (alloc::vec![base, (1.0 + theta) * d_rho], payoff)
        }
        PremiumPrinciple::General { distortion } => {
            let leader = match distortion {
                Distortion::Knots(curve) => knot_sensitivities(curve.knot_count(), i),
                _ => Vec::new(),
            };
            (leader, choquet_subgradient(distortion, i))
        }
    };
    let profit_payoff = payoff
        .iter()
        .zip(i.probs())
        .map(|(d, q)| d - (1.0 + c.mu) * q)
        .collect();
    Ok(PremiumGradients {
        leader,
        payoff,
        profit_payoff,
    })
}
