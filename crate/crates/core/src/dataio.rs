//! Yield detrending, loss construction and a synthetic scenario generator.
//!
//! Synthetic weather cells are independent standard normals. The loss is
//! `Y = max(f(X) + level * eps, 0)` with `eps` standard normal and
//!
//! ```text
//! z    = 1.2 * X[1][6] - 1.0 * X[0][6] + 0.6 * X[4 mod rows][7]
//! f(X) = 4 * softplus(z - 1)
//! ```
//!
//! (row index, month index, both from 0), so a zero noise level makes the
//! loss a function of the grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::game::{Scenario, ScenarioSet, MONTHS};
use crate::payoff::softplus;
use crate::{Error, Result};

/// Index rows of the weather grid unless configured otherwise.
pub const DEFAULT_ROWS: usize = 6;

/// Names of the default index rows.
pub const INDEX_NAMES: [&str; DEFAULT_ROWS] = ["pcpn", "tmax", "tmin", "dpt", "vpdmax", "vpdmin"];

/// Annual yield of one county.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldRecord {
    pub county: String,
    pub year: i32,
    #[serde(rename = "yield")]
    pub yield_value: f64,
}

/// Monthly index grid of one county-year, `rows x 12` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub county: String,
    pub year: i32,
    pub values: Vec<f64>,
}

/// Quadratic trend `c0 + c1 u + c2 u^2` in `u = year - center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub center: f64,
    pub coefficients: [f64; 3],
}

impl Trend {
    pub fn at(&self, year: f64) -> f64 {
        let u = year - self.center;
        self.coefficients[0] + u * (self.coefficients[1] + u * self.coefficients[2])
    }
}

/// Detrended series with the fitted trend.
#[derive(Debug, Clone, PartialEq)]
pub struct Detrended {
    pub trend: Trend,
    /// `y - trend(year) + trend(last year)`, in input order.
    pub adjusted: Vec<f64>,
}

/// Least-squares fit of a quadratic `a + b u + c u^2` by Householder QR.
pub fn fit_quadratic(years: &[f64], values: &[f64]) -> Result<Trend> {
    let n = years.len();
    if n != values.len() {
        return Err(Error::InvalidSample(format!(
            "{n} years but {} values",
            values.len()
        )));
    }
    if years.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite year or value".into()));
    }
    if n < 3 {
        return Err(Error::RankDeficient(format!(
            "{n} observations cannot fit a quadratic"
        )));
    }
    let center = years.iter().sum::<f64>() / n as f64;
    // column-major design matrix
    let mut a: Vec<[f64; 3]> = years
        .iter()
        .map(|&t| {
            let u = t - center;
            [1.0, u, u * u]
        })
        .collect();
    let mut b = values.to_vec();
    let scale: f64 = a.iter().map(|r| r[2].abs().max(1.0)).fold(0.0, f64::max);
    for k in 0..3 {
        let norm = libm::sqrt(a[k..].iter().map(|r| r[k] * r[k]).sum::<f64>());
        if norm <= 1e-10 * scale {
            return Err(Error::RankDeficient(
                "fewer than three distinct years".into(),
            ));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k..].iter().map(|r| r[k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for j in k..3 {
            let dot: f64 = v.iter().zip(&a[k..]).map(|(vi, r)| vi * r[j]).sum();
            let f = 2.0 * dot / vv;
            for (vi, r) in v.iter().zip(&mut a[k..]) {
                r[j] -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(vi, bi)| vi * bi).sum();
        let f = 2.0 * dot / vv;
        for (vi, bi) in v.iter().zip(&mut b[k..]) {
            *bi -= f * vi;
        }
    }
    let mut c = [0.0; 3];
    for k in (0..3).rev() {
        let mut s = b[k];
        for j in k + 1..3 {
            s -= a[k][j] * c[j];
        }
        if a[k][k].abs() <= 1e-10 * scale {
            return Err(Error::RankDeficient(
                "fewer than three distinct years".into(),
            ));
        }
        c[k] = s / a[k][k];
    }
    Ok(Trend {
        center,
        coefficients: c,
    })
}

/// Removes a quadratic time trend and re-levels every observation to the
/// trend value of the latest year.
pub fn detrend(years: &[i32], yields: &[f64]) -> Result<Detrended> {
    let t: Vec<f64> = years.iter().map(|&y| y as f64).collect();
    let trend = fit_quadratic(&t, yields)?;
    let last = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let level = trend.at(last);
    let adjusted = t
        .iter()
        .zip(yields)
        .map(|(&yr, &y)| y - trend.at(yr) + level)
        .collect();
    Ok(Detrended { trend, adjusted })
}

/// Shortfall against the best observation, `(max - y) * price`.
pub fn to_losses(yields: &[f64], price: f64) -> Result<Vec<f64>> {
    if yields.is_empty() {
        return Err(Error::InvalidSample("no yields".into()));
    }
    if !(price.is_finite() && price > 0.0) {
        return Err(Error::Domain(format!("price must be > 0, got {price}")));
    }
    if yields.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidSample("non-finite yield".into()));
    }
    let max = yields.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(yields.iter().map(|y| (max - y) * price).collect())
}

/// Detrends each county, pools all county-years with equal weight, turns
/// yields into losses and attaches the weather grid of the same
/// county-year.
pub fn assemble(
    yields: &[YieldRecord],
    weather: &[WeatherRecord],
    rows: usize,
    price: f64,
) -> Result<ScenarioSet> {
    let mut by_county: BTreeMap<&str, Vec<(i32, f64, usize)>> = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for (k, r) in yields.iter().enumerate() {
        if !(r.yield_value.is_finite() && r.yield_value >= 0.0) {
            return Err(Error::InvalidSample(format!(
                "yield of {} {} must be >= 0",
                r.county, r.year
            )));
        }
        if seen.insert((r.county.as_str(), r.year), k).is_some() {
            return Err(Error::InvalidSample(format!(
                "duplicate yield for {} {}",
                r.county, r.year
            )));
        }
        by_county
            .entry(r.county.as_str())
            .or_default()
            .push((r.year, r.yield_value, k));
    }
    let mut adjusted = vec![0.0; yields.len()];
    for series in by_county.values() {
        let years: Vec<i32> = series.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = series.iter().map(|s| s.1).collect();
        let d = detrend(&years, &ys)?;
        for (s, a) in series.iter().zip(d.adjusted) {
            adjusted[s.2] = a;
        }
    }
    let losses = to_losses(&adjusted, price)?;
    let mut grids = BTreeMap::new();
    for w in weather {
        if w.values.len() != rows * MONTHS {
            return Err(Error::InvalidSample(format!(
                "weather of {} {} has {} values, expected {}",
                w.county,
                w.year,
                w.values.len(),
                rows * MONTHS
            )));
        }
        if grids.insert((w.county.as_str(), w.year), &w.values).is_some() {
            return Err(Error::InvalidSample(format!(
                "duplicate weather for {} {}",
                w.county, w.year
            )));
        }
    }
    let p = 1.0 / yields.len() as f64;
    let scenarios = yields
        .iter()
        .zip(losses)
        .map(|(r, loss)| {
            let weather = if rows == 0 {
                None
            } else {
                Some(
                    grids
                        .get(&(r.county.as_str(), r.year))
                        .ok_or_else(|| {
                            Error::InvalidSample(format!("no weather for {} {}", r.county, r.year))
                        })?
                        .to_vec(),
                )
            };
            Ok(Scenario {
                weather,
                loss,
                prob: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScenarioSet::new(rows, scenarios)
}

/// The noise-free synthetic loss `f(X)` of a `rows x 12` grid.
pub fn synthetic_loss_rule(weather: &[f64], rows: usize) -> Result<f64> {
    if rows < 2 || weather.len() != rows * MONTHS {
        return Err(Error::Config(format!(
            "synthetic rule needs at least 2 rows of {MONTHS} months"
        )));
    }
    let cell = |r: usize, m: usize| weather[r * MONTHS + m];
    let z = 1.2 * cell(1, 6) - 1.0 * cell(0, 6) + 0.6 * cell(4 % rows, 7);
    Ok(4.0 * softplus(z - 1.0))
}

/// `n` equally likely synthetic scenarios; see the module docs for the rule.
pub fn synth_generate(seed: u64, n: usize, basis_risk: f64, rows: usize) -> Result<ScenarioSet> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 scenarios, got {n}")));
    }
    if rows < 2 {
        return Err(Error::Config(format!("need at least 2 index rows, got {rows}")));
    }
    if !(basis_risk.is_finite() && basis_risk >= 0.0) {
        return Err(Error::Config(format!(
            "basis risk level must be >= 0, got {basis_risk}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 1.0 / n as f64;
    let scenarios = (0..n)
        .map(|_| {
            let weather: Vec<f64> = (0..rows * MONTHS)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let eps: f64 = StandardNormal.sample(&mut rng);
            let f = synthetic_loss_rule(&weather, rows)?;
            Ok(Scenario {
                loss: (f + basis_risk * eps).max(0.0),
                weather: Some(weather),
                prob: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScenarioSet::new(rows, scenarios)
}
