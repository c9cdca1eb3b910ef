//! Brute-force leader and follower solvers for tiny instances.
//!
//! The follower is solved by exhaustive search over per-scenario payoff
//! levels, over the stop-loss family `(Y - d)+`, or by the layer rule that
//! covers each slice of the loss axis the premium prices below the farmer's
//! own valuation. Farmer ties go to the smaller expected payoff; leader ties
//! go to the first grid point.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::choquet::{Distortion, KnotCurve, OutcomeSample};
use crate::game::{farmer_risk, FarmerPreference, GameConfig, Mode, Problem, ScenarioSet};
use crate::premium::{insurer_profit, premium, PremiumPrinciple};
use crate::{Error, Result};

/// Largest scenario count [`enumerate_follower`] accepts.
pub const MAX_SCENARIOS: usize = 6;
/// Largest per-scenario level count [`enumerate_follower`] accepts.
pub const MAX_LEVELS: usize = 21;
/// Largest number of candidate pricing curves built from value grids.
pub const MAX_CURVES: usize = 2_000_000;

/// Relative slack under which two farmer objectives count as tied.
const TIE_TOL: f64 = 1e-12;

/// Farmer's best response found by a follower oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerChoice {
    pub payoffs: Vec<f64>,
    pub farmer_risk: f64,
    pub expected_payoff: f64,
    /// Deductible of the chosen stop-loss contract; absent for no cover or
    /// enumerated payoffs.
    pub deductible: Option<f64>,
    pub evaluated: usize,
}

/// Best leader point with the farmer's response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Problem whose feasible set the leader grid samples.
    pub problem: Problem,
    pub principle: PremiumPrinciple,
    pub deductible: Option<f64>,
    pub payoffs: Vec<f64>,
    pub insurer_profit: f64,
    pub farmer_risk: f64,
    pub premium: f64,
    pub expected_payoff: f64,
    pub leader_points: usize,
    pub follower_evaluations: usize,
}

/// Evenly spaced grid `lo, .., hi` with `points` entries.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Zero and every distinct loss, ascending. Under a distortion farmer the
/// best stop-loss deductible sits at one of these.
pub fn default_deductibles(s: &ScenarioSet) -> Vec<f64> {
    let mut d = s.losses();
    d.push(0.0);
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

fn better(lp: f64, e: f64, best_lp: f64, best_e: f64) -> bool {
    let tol = TIE_TOL * (1.0 + best_lp.abs());
    lp < best_lp - tol || (lp <= best_lp + tol && e < best_e)
}

/// Exhaustive farmer's best response over payoff vectors with
/// `payoffs[n]` drawn from `levels[n]`.
pub fn enumerate_follower(
    farmer: &FarmerPreference,
    principle: &PremiumPrinciple,
    s: &ScenarioSet,
    levels: &[Vec<f64>],
) -> Result<FollowerChoice> {
    let groups: Vec<usize> = (0..s.len()).collect();
    enumerate_grouped(farmer, principle, s, &groups, levels)
}

/// As [`enumerate_follower`], but the payoff may depend only on the weather
/// grid: scenarios with identical grids share one level, drawn from
/// `levels[g]` for the `g`-th distinct grid in scenario order.
pub fn enumerate_index_follower(
    farmer: &FarmerPreference,
    principle: &PremiumPrinciple,
    s: &ScenarioSet,
    levels: &[Vec<f64>],
) -> Result<FollowerChoice> {
    let groups = weather_groups(s)?;
    enumerate_grouped(farmer, principle, s, &groups, levels)
}

/// Index of the distinct weather grid of each scenario, in order of first
/// appearance.
pub fn weather_groups(s: &ScenarioSet) -> Result<Vec<usize>> {
    if !s.has_weather() {
        return Err(Error::Config("scenarios carry no weather grids".into()));
    }
    let mut seen: Vec<&[f64]> = Vec::new();
    let mut groups = Vec::with_capacity(s.len());
    for sc in s.scenarios() {
        let w = sc.weather.as_deref().expect("weather present");
        let g = match seen.iter().position(|v| *v == w) {
            Some(g) => g,
            None => {
                seen.push(w);
                seen.len() - 1
            }
        };
        groups.push(g);
    }
    Ok(groups)
}

fn enumerate_grouped(
    farmer: &FarmerPreference,
    principle: &PremiumPrinciple,
    s: &ScenarioSet,
    groups: &[usize],
    levels: &[Vec<f64>],
) -> Result<FollowerChoice> {
    principle.validate()?;
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    if s.len() > MAX_SCENARIOS {
        return Err(Error::TooLarge(format!(
            "{} scenarios, enumeration allows at most {MAX_SCENARIOS}",
            s.len()
        )));
    }
    if levels.len() != n_groups {
        return Err(Error::Config(format!(
            "{} level sets for {n_groups} payoff groups",
            levels.len()
        )));
    }
    for l in levels {
        if l.is_empty() {
            return Err(Error::Config("empty payoff level set".into()));
        }
        if l.len() > MAX_LEVELS {
            return Err(Error::TooLarge(format!(
                "{} payoff levels, enumeration allows at most {MAX_LEVELS}",
                l.len()
            )));
        }
        if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("payoff levels must be finite and >= 0".into()));
        }
    }
    let losses = s.loss_sample();
    let mut idx = vec![0usize; n_groups];
    let mut best: Option<FollowerChoice> = None;
    let mut evaluated = 0;
    loop {
        let values: Vec<f64> = groups.iter().map(|&g| levels[g][idx[g]]).collect();
        let i = losses.with_values(values)?;
        let lp = farmer_risk(farmer, principle, &losses, &i)?;
        let e = i.mean();
        evaluated += 1;
        if best
            .as_ref()
            .is_none_or(|b| better(lp, e, b.farmer_risk, b.expected_payoff))
        {
            best = Some(FollowerChoice {
                payoffs: i.values().to_vec(),
                farmer_risk: lp,
                expected_payoff: e,
                deductible: None,
                evaluated: 0,
            });
        }
        // odometer over the level indices
        let mut k = 0;
        loop {
            if k == n_groups {
                let mut b = best.expect("at least one candidate");
                b.evaluated = evaluated;
                return Ok(b);
            }
            idx[k] += 1;
            if idx[k] < levels[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Farmer's best stop-loss contract, no cover included.
pub fn stoploss_follower(
    farmer: &FarmerPreference,
    principle: &PremiumPrinciple,
    s: &ScenarioSet,
    deductibles: &[f64],
) -> Result<FollowerChoice> {
    let losses = s.loss_sample();
    let none = losses.with_values(vec![0.0; s.len()])?;
    let mut best = FollowerChoice {
        payoffs: none.values().to_vec(),
        farmer_risk: farmer_risk(farmer, principle, &losses, &none)?,
        expected_payoff: 0.0,
        deductible: None,
        evaluated: 1,
    };
    for &d in deductibles {
        let i = stop_loss(&losses, d)?;
        let lp = farmer_risk(farmer, principle, &losses, &i)?;
        let e = i.mean();
        best.evaluated += 1;
        if better(lp, e, best.farmer_risk, best.expected_payoff) {
            best = FollowerChoice {
                payoffs: i.values().to_vec(),
                farmer_risk: lp,
                expected_payoff: e,
                deductible: Some(d),
                evaluated: best.evaluated,
            };
        }
    }
    Ok(best)
}

/// `(Y - d)+` on the loss sample.
pub fn stop_loss(losses: &OutcomeSample, d: f64) -> Result<OutcomeSample> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::Domain(format!("deductible must be >= 0, got {d}")));
    }
    losses.with_values(losses.values().iter().map(|y| (y - d).max(0.0)).collect())
}

/// How the oracle computes the farmer's response at each leader point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FollowerRule {
    /// Best `(Y - d)+` over the deductible grid, or no cover.
    StopLoss { deductibles: Vec<f64> },
    /// Best layer contract; see [`layer_follower`].
    Layers,
}

/// Farmer's best layer contract: the loss axis is cut at zero and every
/// distinct loss, and a layer is covered exactly when the premium's
/// distortion lies strictly below the farmer's at the layer's exceedance
/// probability. Among payoffs `I` with `I` and `Y - I` both nondecreasing in
/// `Y` this minimizes the farmer's objective; with the expected-value
/// premium it is a stop-loss contract.
pub fn layer_follower(
    farmer: &FarmerPreference,
    principle: &PremiumPrinciple,
    s: &ScenarioSet,
) -> Result<FollowerChoice> {
    principle.validate()?;
    let gi = principle.distortion();
    let gf = farmer.distortion();
    let losses = s.loss_sample();
    let cuts = default_deductibles(s);
    let mut payoff = vec![0.0; s.len()];
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let exceed: f64 = s
            .scenarios()
            .iter()
            .filter(|sc| sc.loss > lo)
            .map(|sc| sc.prob)
            .sum::<f64>()
            .min(1.0);
        let (ci, cf) = (gi.value_at(exceed), gf.value_at(exceed));
        if ci < cf - TIE_TOL * (1.0 + cf.abs()) {
            for (i, y) in payoff.iter_mut().zip(losses.values()) {
                *i += (y - lo).clamp(0.0, hi - lo);
            }
        }
    }
    let i = losses.with_values(payoff)?;
    Ok(FollowerChoice {
        farmer_risk: farmer_risk(farmer, principle, &losses, &i)?,
        expected_payoff: i.mean(),
        payoffs: i.values().to_vec(),
        deductible: None,
        evaluated: 1,
    })
}

impl FollowerRule {
    pub fn respond(
        &self,
        farmer: &FarmerPreference,
        principle: &PremiumPrinciple,
        s: &ScenarioSet,
    ) -> Result<FollowerChoice> {
        match self {
            FollowerRule::StopLoss { deductibles } => {
                stoploss_follower(farmer, principle, s, deductibles)
            }
            FollowerRule::Layers => layer_follower(farmer, principle, s),
        }
    }
}

/// Best leader point among `principles` when the farmer responds by `rule`.
pub fn leader_grid_oracle(
    game: &GameConfig,
    s: &ScenarioSet,
    principles: &[PremiumPrinciple],
    rule: &FollowerRule,
) -> Result<OracleResult> {
    game.validate()?;
    if game.mode != Mode::Indemnity {
        return Err(Error::Config(
            "grid oracles are defined for indemnity mode".into(),
        ));
    }
    if let FollowerRule::StopLoss { deductibles } = rule {
        if deductibles.is_empty() {
            return Err(Error::Config("empty deductible grid".into()));
        }
    }
    if principles.is_empty() {
        return Err(Error::Config("empty leader grid".into()));
    }
    let mut best: Option<(PremiumPrinciple, FollowerChoice, f64)> = None;
    let mut evaluations = 0;
    for p in principles {
        let f = rule.respond(&game.farmer, p, s)?;
        evaluations += f.evaluated;
        let i = s.loss_sample().with_values(f.payoffs.clone())?;
        let profit = insurer_profit(p, &game.cost, &i)?;
        if best.as_ref().is_none_or(|b| profit > b.2) {
            best = Some((p.clone(), f, profit));
        }
    }
    let (p, f, _) = best.expect("nonempty grid");
    finish(game.problem, game, s, p, f, principles.len(), evaluations)
}

/// Best leader point among `principles` against the stop-loss follower.
pub fn stoploss_oracle_over(
    game: &GameConfig,
    s: &ScenarioSet,
    principles: &[PremiumPrinciple],
    deductibles: &[f64],
) -> Result<OracleResult> {
    let rule = FollowerRule::StopLoss {
        deductibles: deductibles.to_vec(),
    };
    leader_grid_oracle(game, s, principles, &rule)
}

/// Expected-value principles over `thetas`.
pub fn expected_grid(thetas: &[f64]) -> Vec<PremiumPrinciple> {
    thetas
        .iter()
        .map(|&theta| PremiumPrinciple::Expected { theta })
        .collect()
}

/// Power-distortion principles over `thetas x rhos`.
pub fn power_grid(thetas: &[f64], rhos: &[f64]) -> Vec<PremiumPrinciple> {
    let mut ps = Vec::with_capacity(thetas.len() * rhos.len());
    for &theta in thetas {
        for &rho in rhos {
            ps.push(PremiumPrinciple::PowerDistortion { theta, rho });
        }
    }
    ps
}

/// General distortions: the closed-form candidates of the other two
/// problems plus every knot curve of `curve_values` at the loss levels.
pub fn general_grid(
    s: &ScenarioSet,
    thetas: &[f64],
    rhos: &[f64],
    curve_values: &[f64],
    knots: usize,
) -> Result<Vec<PremiumPrinciple>> {
    let mut ps = Vec::new();
    for &theta in thetas {
        ps.push(PremiumPrinciple::General {
            distortion: Distortion::linear(1.0 + theta)?,
        });
    }
    for &theta in thetas {
        for &rho in rhos {
            ps.push(PremiumPrinciple::General {
                distortion: Distortion::power(rho, 1.0 + theta)?,
            });
        }
    }
    for g in knot_grid(s, curve_values, knots)? {
        ps.push(PremiumPrinciple::General { distortion: g });
    }
    Ok(ps)
}

fn finish(
    problem: Problem,
    game: &GameConfig,
    s: &ScenarioSet,
    principle: PremiumPrinciple,
    f: FollowerChoice,
    leader_points: usize,
    follower_evaluations: usize,
) -> Result<OracleResult> {
    let i = s.loss_sample().with_values(f.payoffs.clone())?;
    Ok(OracleResult {
        problem,
        insurer_profit: insurer_profit(&principle, &game.cost, &i)?,
        premium: premium(&principle, &i)?,
        farmer_risk: f.farmer_risk,
        expected_payoff: f.expected_payoff,
        deductible: f.deductible,
        payoffs: f.payoffs,
        principle,
        leader_points,
        follower_evaluations,
    })
}

/// Expected-value leader over `thetas`.
pub fn stoploss_oracle(
    game: &GameConfig,
    s: &ScenarioSet,
    thetas: &[f64],
    deductibles: &[f64],
) -> Result<OracleResult> {
    let mut r = stoploss_oracle_over(game, s, &expected_grid(thetas), deductibles)?;
    r.problem = Problem::P1;
    Ok(r)
}

/// Power-distortion leader over `thetas x rhos`.
pub fn stoploss_oracle_power(
    game: &GameConfig,
    s: &ScenarioSet,
    thetas: &[f64],
    rhos: &[f64],
    deductibles: &[f64],
) -> Result<OracleResult> {
    let mut r = stoploss_oracle_over(game, s, &power_grid(thetas, rhos), deductibles)?;
    r.problem = Problem::P2;
    Ok(r)
}

/// Cumulative probabilities of the scenarios sorted by descending loss;
/// the premium of any stop-loss payoff depends on the pricing curve only
/// through its values at these levels.
pub fn loss_levels(s: &ScenarioSet) -> Vec<f64> {
    let order = crate::choquet::descending_order(&s.losses());
    let probs = s.probs();
    let mut acc = 0.0;
    let mut out: Vec<f64> = order
        .iter()
        .map(|&k| {
            acc += probs[k];
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Knot curve through `(0, 0)` and `(levels[k], values[k])`, linear in
/// between, sampled on `m` knots.
pub fn curve_through(levels: &[f64], values: &[f64], m: usize) -> Result<Distortion> {
    if levels.len() != values.len() || levels.is_empty() {
        return Err(Error::Config("levels and values must pair up".into()));
    }
    let at = |s: f64| -> f64 {
        let mut x0 = 0.0;
        let mut y0 = 0.0;
        for (&x1, &y1) in levels.iter().zip(values) {
            if s <= x1 {
                return if x1 > x0 { y0 + (y1 - y0) * (s - x0) / (x1 - x0) } else { y1 };
            }
            x0 = x1;
            y0 = y1;
        }
        y0
    };
    let mut prev = 0.0;
    let mut inc = Vec::with_capacity(m);
    for i in 1..=m {
        let v = at(i as f64 / m as f64);
        inc.push((v - prev).max(0.0));
        prev = v;
    }
    Ok(Distortion::Knots(KnotCurve::new(inc)?))
}

/// Every nondecreasing assignment of `values` to the loss levels, turned
/// into `m`-knot curves.
pub fn knot_grid(s: &ScenarioSet, values: &[f64], m: usize) -> Result<Vec<Distortion>> {
    let levels = loss_levels(s);
    let q = levels.len();
    let mut vals: Vec<f64> = values.to_vec();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    if vals.is_empty() || vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Config("curve values must be finite, >= 0 and nonempty".into()));
    }
    // multiset count C(n + q - 1, q)
    let n = vals.len();
    let mut count: f64 = 1.0;
    for k in 0..q {
        count *= (n + k) as f64 / (k + 1) as f64;
    }
    if count > MAX_CURVES as f64 {
        return Err(Error::TooLarge(format!(
            "{count:.0} candidate curves, at most {MAX_CURVES}"
        )));
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; q];
    loop {
        let v: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
        out.push(curve_through(&levels, &v, m)?);
        // next nondecreasing index tuple
        let mut k = q;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if idx[k] + 1 < n {
                idx[k] += 1;
                let base = idx[k];
                idx[k + 1..].iter_mut().for_each(|i| *i = base);
                break;
            }
        }
    }
}

/// General-distortion leader over [`general_grid`].
pub fn stoploss_oracle_general(
    game: &GameConfig,
    s: &ScenarioSet,
    thetas: &[f64],
    rhos: &[f64],
    curve_values: &[f64],
    knots: usize,
    deductibles: &[f64],
) -> Result<OracleResult> {
    let ps = general_grid(s, thetas, rhos, curve_values, knots)?;
    let mut r = stoploss_oracle_over(game, s, &ps, deductibles)?;
    r.problem = Problem::P3;
    Ok(r)
}

/// Leader grid search with the exhaustive follower.
pub fn enumeration_oracle(
    game: &GameConfig,
    s: &ScenarioSet,
    principles: &[PremiumPrinciple],
    levels: &[Vec<f64>],
) -> Result<OracleResult> {
    game.validate()?;
    if principles.is_empty() {
        return Err(Error::Config("empty leader grid".into()));
    }
    let mut best: Option<(PremiumPrinciple, FollowerChoice, f64)> = None;
    let mut evaluations = 0;
    for p in principles {
        let f = enumerate_follower(&game.farmer, p, s, levels)?;
        evaluations += f.evaluated;
        let i = s.loss_sample().with_values(f.payoffs.clone())?;
        let profit = insurer_profit(p, &game.cost, &i)?;
        if best.as_ref().is_none_or(|b| profit > b.2) {
            best = Some((p.clone(), f, profit));
        }
    }
    let (p, f, _) = best.expect("nonempty grid");
    finish(game.problem, game, s, p, f, principles.len(), evaluations)
}

/// Recomputes profit, premium, expected payoff and farmer risk of an oracle
/// result within `1e-12`.
pub fn verify_oracle(r: &OracleResult, game: &GameConfig, s: &ScenarioSet) -> Result<()> {
    let i = s.loss_sample().with_values(r.payoffs.clone())?;
    let checks = [
        ("insurer_profit", r.insurer_profit, insurer_profit(&r.principle, &game.cost, &i)?),
        ("premium", r.premium, premium(&r.principle, &i)?),
        ("expected_payoff", r.expected_payoff, i.mean()),
        (
            "farmer_risk",
            r.farmer_risk,
            farmer_risk(&game.farmer, &r.principle, &s.loss_sample(), &i)?,
        ),
    ];
    for (name, got, want) in checks {
        if (got - want).abs() > 1e-12 * (1.0 + want.abs()) {
            return Err(Error::InvalidSample(format!(
                "oracle {name} {got} differs from recomputed {want}"
            )));
        }
    }
    Ok(())
}
