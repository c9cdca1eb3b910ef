//! Distortion functions and Choquet integrals over finite probability spaces.
//!
//! Everything here works on an [`OutcomeSample`]: a vector of outcomes with
//! strictly positive state probabilities. The Choquet integral is evaluated in
//! its signed, sorted-increment form
//!
//! ```text
//! sum_k (g(S_k) - g(S_{k-1})) * Z_(k)
//! ```
//!
//! where `Z_(1) >= Z_(2) >= ...` and `S_k` is the probability mass of the `k`
//! largest outcomes. For nonnegative outcomes this equals
//! `int_0^inf g(P(Z > z)) dz`; negative outcomes are handled by the usual
//! signed extension.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the probability simplex.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Default number of uniform knots for piecewise-linear distortions.
pub const DEFAULT_KNOTS: usize = 100;

/// A distortion `g: [0,1] -> R+` with `g(0) = 0`, nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distortion {
    /// `g(s) = scale * s`
    Linear { scale: f64 },
    /// `g(s) = min(s / (1 - alpha), 1)`
    Cvar { alpha: f64 },
    /// `g(s) = lambda * s + (1 - lambda) * min(s / (1 - alpha), 1)`
    ConvexCombo { lambda: f64, alpha: f64 },
    /// `g(s) = scale * s^(1/rho)`
    Power { rho: f64, scale: f64 },
    /// Piecewise linear through `M + 1` uniform abscissae.
    Knots(KnotCurve),
}

/// Piecewise-linear distortion on the uniform grid `0, 1/M, ..., 1` with
/// nonnegative increments between consecutive knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "KnotRepr", into = "KnotRepr")]
pub struct KnotCurve {
    increments: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnotRepr {
    increments: Vec<f64>,
}

impl From<KnotRepr> for KnotCurve {
    fn from(r: KnotRepr) -> Self {
        KnotCurve::from_increments_unchecked(r.increments)
    }
}

impl From<KnotCurve> for KnotRepr {
    fn from(c: KnotCurve) -> Self {
        KnotRepr {
            increments: c.increments,
        }
    }
}

impl KnotCurve {
    pub fn new(increments: Vec<f64>) -> Result<Self> {
        let c = Self::from_increments_unchecked(increments);
        c.validate()?;
        Ok(c)
    }

    fn from_increments_unchecked(increments: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for &d in &increments {
            acc += d;
            cumulative.push(acc);
        }
        KnotCurve {
            increments,
            cumulative,
        }
    }

    /// Knot curve matching `g` at the knots `j / m`.
    pub fn discretize(g: &Distortion, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("knot count must be positive".into()));
        }
        let mut prev = g.value_at(0.0);
        let mut inc = Vec::with_capacity(m);
        for j in 1..=m {
            let v = g.value_at(j as f64 / m as f64);
            inc.push((v - prev).max(0.0));
            prev = v;
        }
        Self::new(inc)
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn knot_count(&self) -> usize {
        self.increments.len()
    }

    fn validate(&self) -> Result<()> {
        if self.increments.is_empty() {
            return Err(Error::Domain("knot curve needs at least one increment".into()));
        }
        if let Some(d) = self
            .increments
            .iter()
            .find(|d| !d.is_finite() || **d < 0.0)
        {
            return Err(Error::Domain(format!(
                "knot increments must be finite and nonnegative, got {d}"
            )));
        }
        Ok(())
    }

    fn value_at(&self, s: f64) -> f64 {
        let m = self.increments.len();
        let pos = s * m as f64;
        let j = (libm::floor(pos) as usize).min(m - 1);
        let frac = (pos - j as f64).clamp(0.0, 1.0);
        self.cumulative[j] + frac * self.increments[j]
    }
}

/// Weight of increment `i` in `g(s)` for an `m`-knot curve: `clamp(s*m - i, 0, 1)`.
pub fn knot_basis(m: usize, i: usize, s: f64) -> f64 {
    (s * m as f64 - i as f64).clamp(0.0, 1.0)
}

fn check_unit_open(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("{name} must lie in (0,1), got {x}")));
    }
    Ok(())
}

impl Distortion {
    pub fn linear(scale: f64) -> Result<Self> {
        let g = Distortion::Linear { scale };
        g.validate()?;
        Ok(g)
    }

    pub fn cvar(alpha: f64) -> Result<Self> {
        let g = Distortion::Cvar { alpha };
        g.validate()?;
        Ok(g)
    }

    pub fn convex_combo(lambda: f64, alpha: f64) -> Result<Self> {
        let g = Distortion::ConvexCombo { lambda, alpha };
        g.validate()?;
        Ok(g)
    }

    pub fn power(rho: f64, scale: f64) -> Result<Self> {
        let g = Distortion::Power { rho, scale };
        g.validate()?;
        Ok(g)
    }

    pub fn knots(increments: Vec<f64>) -> Result<Self> {
        Ok(Distortion::Knots(KnotCurve::new(increments)?))
    }

    /// Checks the parameter ranges of the variant.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distortion::Linear { scale } => {
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(Error::Domain(format!("scale must be >= 0, got {scale}")));
                }
            }
            Distortion::Cvar { alpha } => check_unit_open("alpha", alpha)?,
            Distortion::ConvexCombo { lambda, alpha } => {
                check_unit_open("alpha", alpha)?;
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(Error::Domain(format!("lambda must lie in [0,1], got {lambda}")));
                }
            }
            Distortion::Power { rho, scale } => {
                if !(rho.is_finite() && rho >= 1.0) {
                    return Err(Error::Domain(format!("rho must be >= 1, got {rho}")));
                }
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(Error::Domain(format!("scale must be >= 0, got {scale}")));
                }
            }
            Distortion::Knots(ref c) => c.validate()?,
        }
        Ok(())
    }

    /// `g(s)` for `s` in `[0, 1]`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("distortion argument must lie in [0,1], got {s}")));
        }
        Ok(self.value_at(s))
    }

    /// `g(s)` without the range check; `s` is clamped into `[0, 1]`.
    pub(crate) fn value_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match *self {
            Distortion::Linear { scale } => scale * s,
            Distortion::Cvar { alpha } => (s / (1.0 - alpha)).min(1.0),
            Distortion::ConvexCombo { lambda, alpha } => {
                lambda * s + (1.0 - lambda) * (s / (1.0 - alpha)).min(1.0)
            }
            Distortion::Power { rho, scale } => {
                if s == 0.0 {
                    0.0
                } else {
                    scale * libm::pow(s, 1.0 / rho)
                }
            }
            Distortion::Knots(ref c) => c.value_at(s),
        }
    }

    /// `g(1)`.
    pub fn total(&self) -> f64 {
        self.value_at(1.0)
    }

    /// Whether `g` is concave on `[0, 1]`.
    pub fn is_concave(&self) -> bool {
        match self {
            Distortion::Linear { .. }
            | Distortion::Cvar { .. }
            | Distortion::ConvexCombo { .. }
            | Distortion::Power { .. } => true,
            Distortion::Knots(c) => c.increments.windows(2).all(|w| w[1] <= w[0]),
        }
    }
}

/// Outcomes of a random variable on a finite probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSample {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl OutcomeSample {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSample("sample is empty".into()));
        }
        if values.len() != probs.len() {
            return Err(Error::InvalidSample(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite outcome {v}")));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "probabilities must be strictly positive, got {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidSample(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(OutcomeSample { values, probs })
    }

    /// Equally likely outcomes.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let probs = vec![1.0 / n.max(1) as f64; n];
        Self::new(values, probs)
    }

    /// Same probabilities, new outcome values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.probs.len() {
            return Err(Error::InvalidSample(format!(
                "{} values for {} states",
                values.len(),
                self.probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite outcome {v}")));
        }
        Ok(OutcomeSample {
            values,
            probs: self.probs.clone(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v * p)
            .sum()
    }
}

/// Indices of `values` in descending order; ties keep ascending index order.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Sorted order together with the cumulative tail masses `S_1..S_q`.
fn tail_levels(z: &OutcomeSample) -> (Vec<usize>, Vec<f64>) {
    let order = descending_order(&z.values);
    let mut levels = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &i in &order {
        acc += z.probs[i];
        levels.push(acc.min(1.0));
    }
    // The simplex holds to PROB_SUM_TOL; pin the last level so weights sum to g(1).
    if let Some(last) = levels.last_mut() {
        *last = 1.0;
    }
    (order, levels)
}

/// Choquet integral of `z` with respect to the distortion `g`.
pub fn choquet(g: &Distortion, z: &OutcomeSample) -> f64 {
    let (order, levels) = tail_levels(z);
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (&i, &s) in order.iter().zip(&levels) {
        let gs = g.value_at(s);
        acc += (gs - prev) * z.values[i];
        prev = gs;
    }
    acc
}

/// Sorted-increment weights of the Choquet integral, in the original state
/// order. This is the gradient of [`choquet`] with respect to the outcome
/// values wherever those values are pairwise distinct, and a subgradient
/// selection elsewhere.
pub fn choquet_subgradient(g: &Distortion, z: &OutcomeSample) -> Vec<f64> {
    let (order, levels) = tail_levels(z);
    let mut w = vec![0.0; z.len()];
    let mut prev = 0.0;
    for (&i, &s) in order.iter().zip(&levels) {
        let gs = g.value_at(s);
        w[i] = gs - prev;
        prev = gs;
    }
    w
}

/// `sum_k h(S_k) * (Z_(k) - Z_(k+1))` with `Z_(q+1) = 0`.
///
/// With `h = g` this is the Choquet integral again (Abel summation); with
/// `h = dg/dparam` it is the derivative of the integral in that parameter,
/// since the sort order does not depend on `g`.
pub fn tail_weighted_sum(z: &OutcomeSample, h: impl Fn(f64) -> f64) -> f64 {
    let (order, levels) = tail_levels(z);
    let mut acc = 0.0;
    for k in 0..order.len() {
        let next = if k + 1 < order.len() {
            z.values[order[k + 1]]
        } else {
            0.0
        };
        acc += h(levels[k]) * (z.values[order[k]] - next);
    }
    acc
}

/// Derivative of `choquet(Knots(inc), z)` with respect to each of the `m`
/// increments. The integral is linear in the increments.
pub fn knot_sensitivities(m: usize, z: &OutcomeSample) -> Vec<f64> {
    let (order, levels) = tail_levels(z);
    let mut out = vec![0.0; m];
    for k in 0..order.len() {
        let next = if k + 1 < order.len() {
            z.values[order[k + 1]]
        } else {
            0.0
        };
        let gap = z.values[order[k]] - next;
        if gap == 0.0 {
            continue;
        }
        let pos = levels[k] * m as f64;
        // full increments below the level, a fractional one at the level
        let full = (libm::floor(pos) as usize).min(m);
        for o in out.iter_mut().take(full) {
            *o += gap;
        }
        if full < m {
            out[full] += gap * knot_basis(m, full, levels[k]);
        }
    }
    out
}

/// `CVaR_alpha(Z) = 1/(1-alpha) * int_alpha^1 VaR_u(Z) du`, integrated
/// exactly over the piecewise-constant quantile function.
pub fn empirical_cvar(alpha: f64, z: &OutcomeSample) -> Result<f64> {
    check_unit_open("alpha", alpha)?;
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| z.values[a].total_cmp(&z.values[b]));
    // VaR_u = x_j for u in (F_{j-1}, F_j]
    let mut lower = 0.0;
    let mut acc = 0.0;
    for (pos, &i) in idx.iter().enumerate() {
        let upper = if pos + 1 == idx.len() {
            1.0
        } else {
            lower + z.probs[i]
        };
        let overlap = upper.min(1.0) - lower.max(alpha);
        if overlap > 0.0 {
            acc += overlap * z.values[i];
        }
        lower = upper;
    }
    Ok(acc / (1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Signed Choquet integral by direct integration of the survival function:
    /// `int_0^inf g(P(Z>t)) dt - int_-inf^0 (g(1) - g(P(Z>t))) dt`.
    fn survival_integral(g: &Distortion, z: &OutcomeSample) -> f64 {
        let mut pts: Vec<f64> = z.values().to_vec();
        pts.push(0.0);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let surv = |t: f64| -> f64 {
            z.values()
                .iter()
                .zip(z.probs())
                .filter(|(v, _)| **v > t)
                .map(|(_, p)| *p)
                .sum::<f64>()
                .min(1.0)
        };
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let len = w[1] - w[0];
            let gs = g.value_at(surv(mid));
            if mid > 0.0 {
                acc += gs * len;
            } else {
                acc -= (g.total() - gs) * len;
            }
        }
        acc
    }

    #[test]
    fn closed_forms() {
        assert_close!(Distortion::cvar(0.8).unwrap().eval(0.2).unwrap(), 1.0, 1e-15);
        let cc = Distortion::convex_combo(0.5, 0.8).unwrap();
        assert_close!(cc.eval(0.1).unwrap(), 0.30, 1e-15);
        assert_close!(Distortion::power(2.0, 1.0).unwrap().eval(0.25).unwrap(), 0.5, 1e-15);
    }

    #[test]
    fn eval_rejects_out_of_range() {
        let g = Distortion::cvar(0.5).unwrap();
        assert!(matches!(g.eval(1.5), Err(Error::Domain(_))));
        assert!(matches!(g.eval(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn constructors_validate() {
        assert!(Distortion::cvar(1.0).is_err());
        assert!(Distortion::convex_combo(1.2, 0.5).is_err());
        assert!(Distortion::power(0.5, 1.0).is_err());
        assert!(Distortion::linear(-1.0).is_err());
        assert!(Distortion::knots(vec![0.1, -0.1]).is_err());
        assert!(Distortion::knots(vec![]).is_err());
    }

    #[test]
    fn zero_at_origin_for_every_kind() {
        let kinds = [
            Distortion::linear(1.3).unwrap(),
            Distortion::cvar(0.9).unwrap(),
            Distortion::convex_combo(0.3, 0.7).unwrap(),
            Distortion::power(3.0, 1.5).unwrap(),
            Distortion::knots(vec![0.2, 0.0, 0.5]).unwrap(),
        ];
        for g in &kinds {
            assert_eq!(g.eval(0.0).unwrap(), 0.0);
            let mut prev = 0.0;
            for j in 0..=1000 {
                let v = g.eval(j as f64 / 1000.0).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn choquet_examples() {
        let z = OutcomeSample::new(vec![4.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_close!(choquet(&Distortion::linear(1.0).unwrap(), &z), 3.0, 1e-15);

        let z = OutcomeSample::uniform(vec![10.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let g = Distortion::cvar(0.8).unwrap();
        let oracle = survival_integral(&g, &z);
        assert_close!(oracle, 10.0, 1e-12);
        assert_close!(choquet(&g, &z), oracle, 1e-12);

        let z = OutcomeSample::new(vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        let g = Distortion::power(2.0, 1.0).unwrap();
        assert_close!(survival_integral(&g, &z), std::f64::consts::FRAC_1_SQRT_2, 1e-15);
        assert_close!(choquet(&g, &z), std::f64::consts::FRAC_1_SQRT_2, 1e-15);
    }

    #[test]
    fn signed_choquet_matches_survival_integral() {
        let z = OutcomeSample::new(vec![-3.0, 2.5, 0.5, -1.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        for g in [
            Distortion::cvar(0.75).unwrap(),
            Distortion::power(2.5, 1.2).unwrap(),
            Distortion::linear(1.4).unwrap(),
        ] {
            assert_close!(choquet(&g, &z), survival_integral(&g, &z), 1e-12);
        }
    }

    #[test]
    fn displayed_sum_form_for_nonnegative_outcomes() {
        // sum_{k<q} g(S_k)(Z_(k) - Z_(k+1)) + Z_(q), valid when g(1) = 1
        let z = OutcomeSample::new(vec![1.0, 7.0, 3.0, 3.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = Distortion::convex_combo(0.4, 0.9).unwrap();
        let sorted = [7.0, 3.0, 3.0, 1.0];
        let levels = [0.2, 0.5, 0.9, 1.0];
        let mut displayed = sorted[3];
        for k in 0..3 {
            displayed += g.value_at(levels[k]) * (sorted[k] - sorted[k + 1]);
        }
        assert_close!(choquet(&g, &z), displayed, 1e-12);
    }

    #[test]
    fn subgradient_examples() {
        let z = OutcomeSample::new(vec![4.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(choquet_subgradient(&Distortion::linear(1.0).unwrap(), &z), vec![0.5, 0.5]);

        let z = OutcomeSample::new(vec![3.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(choquet_subgradient(&Distortion::cvar(0.5).unwrap(), &z), vec![1.0, 0.0]);

        let z = OutcomeSample::new(vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        let g = Distortion::power(2.0, 1.0).unwrap();
        let w = choquet_subgradient(&g, &z);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = z.values().to_vec();
            let mut dn = z.values().to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (choquet(&g, &z.with_values(up).unwrap())
                - choquet(&g, &z.with_values(dn).unwrap()))
                / (2.0 * h);
            assert_close!(w[i], fd, 1e-8);
        }
        assert_close!(w[0], 0.5f64.sqrt(), 1e-15);
        assert_close!(w[1], 1.0 - 0.5f64.sqrt(), 1e-15);
    }

    #[test]
    fn tie_break_is_by_ascending_index() {
        assert_eq!(descending_order(&[1.0, 3.0, 1.0, 3.0]), vec![1, 3, 0, 2]);
        let z = OutcomeSample::uniform(vec![2.0, 2.0]).unwrap();
        let w = choquet_subgradient(&Distortion::cvar(0.5).unwrap(), &z);
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn empirical_cvar_examples() {
        let z = OutcomeSample::new(vec![3.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_close!(empirical_cvar(0.5, &z).unwrap(), 3.0, 1e-15);
        let c = OutcomeSample::uniform(vec![2.5; 7]).unwrap();
        for a in [0.05, 0.5, 0.93] {
            assert_close!(empirical_cvar(a, &c).unwrap(), 2.5, 1e-12);
        }
        let z = OutcomeSample::uniform(vec![10.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_close!(empirical_cvar(0.8, &z).unwrap(), 10.0, 1e-12);
        assert!(empirical_cvar(1.0, &z).is_err());
        assert!(empirical_cvar(0.0, &z).is_err());
    }

    #[test]
    fn sample_validation() {
        assert!(OutcomeSample::new(vec![1.0], vec![0.9]).is_err());
        assert!(OutcomeSample::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(OutcomeSample::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(OutcomeSample::new(vec![], vec![]).is_err());
        assert!(OutcomeSample::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn knot_curve_interpolates() {
        let g = Distortion::knots(vec![0.5, 0.25, 0.25, 0.0]).unwrap();
        assert_close!(g.eval(0.125).unwrap(), 0.25, 1e-15);
        assert_close!(g.eval(0.5).unwrap(), 0.75, 1e-15);
        assert_close!(g.eval(1.0).unwrap(), 1.0, 1e-15);
        assert!(g.is_concave());
        assert!(!Distortion::knots(vec![0.1, 0.2]).unwrap().is_concave());
    }

    #[test]
    fn knot_sensitivities_match_finite_differences() {
        let z = OutcomeSample::new(vec![3.0, -1.0, 0.7, 2.2], vec![0.15, 0.35, 0.3, 0.2]).unwrap();
        let inc = vec![0.3, 0.1, 0.2, 0.05, 0.4, 0.0, 0.1];
        let sens = knot_sensitivities(inc.len(), &z);
        for i in 0..inc.len() {
            let mut up = inc.clone();
            up[i] += 1e-6;
            let fd = (choquet(&Distortion::knots(up).unwrap(), &z)
                - choquet(&Distortion::knots(inc.clone()).unwrap(), &z))
                / 1e-6;
            assert_close!(sens[i], fd, 1e-7);
        }
    }

    #[test]
    fn tail_weighted_sum_reproduces_choquet() {
        let z = OutcomeSample::new(vec![3.0, -1.0, 0.7], vec![0.2, 0.5, 0.3]).unwrap();
        let g = Distortion::convex_combo(0.2, 0.6).unwrap();
        assert_close!(tail_weighted_sum(&z, |s| g.value_at(s)), choquet(&g, &z), 1e-12);
    }

    #[test]
    fn knot_serde_keeps_cumulative() {
        let g = Distortion::knots(vec![0.2, 0.3]).unwrap();
        let c = match &g {
            Distortion::Knots(c) => c.clone(),
            _ => unreachable!(),
        };
        let back: KnotCurve = KnotRepr::from(c).into();
        assert_eq!(Distortion::Knots(back), g);
    }
}
