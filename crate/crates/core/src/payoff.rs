//! Payoff models `I(.)` and the monotone pricing curve of the general
//! distortion problem.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choquet::{Distortion, KnotCurve, OutcomeSample};
use crate::diffnet::{LayerSpec, Network, NetworkSnapshot, Tensor};
use crate::game::{ScenarioSet, MONTHS};
use crate::{Error, Result};

/// What the payoff is written on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputMode {
    /// `rows x 12` weather-index grid.
    IndexGrid { rows: usize },
    /// The realized loss.
    ScalarLoss,
}

impl InputMode {
    fn channels(&self) -> usize {
        match self {
            InputMode::IndexGrid { rows } => *rows,
            InputMode::ScalarLoss => 1,
        }
    }

    fn channel_width(&self) -> usize {
        match self {
            InputMode::IndexGrid { .. } => MONTHS,
            InputMode::ScalarLoss => 1,
        }
    }
}

/// Network family for the payoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    /// Dense layers on the flattened input.
    Mlp { hidden: Vec<usize> },
    /// Convolutions on the grid, one max-pool, then a dense head.
    Cnn {
        conv: Vec<usize>,
        kernel: [usize; 2],
        pool: [usize; 2],
        dense: Vec<usize>,
    },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Mlp { hidden: vec![8, 8] }
    }
}

impl Architecture {
    pub fn default_cnn() -> Self {
        Architecture::Cnn {
            conv: vec![32, 32],
            kernel: [2, 2],
            pool: [2, 2],
            dense: vec![32],
        }
    }

    /// Input shape and layer list; every stack ends in `Dense(.., 1)` and a
    /// ReLU so payoffs are nonnegative.
    pub fn layers(&self, mode: InputMode) -> Result<(Vec<usize>, Vec<LayerSpec>)> {
        let flat = mode.channels() * mode.channel_width();
        if flat == 0 {
            return Err(Error::Config("payoff input has no entries".into()));
        }
        let mut specs = Vec::new();
        let (shape, width) = match self {
            Architecture::Mlp { hidden } => {
                let mut width = flat;
                for &h in hidden {
                    specs.push(LayerSpec::Dense {
                        inputs: width,
                        outputs: h,
                    });
                    specs.push(LayerSpec::Relu);
                    width = h;
                }
                (vec![flat], width)
            }
            Architecture::Cnn {
                conv,
                kernel,
                pool,
                dense,
            } => {
                let InputMode::IndexGrid { rows } = mode else {
                    return Err(Error::Config(
                        "convolutional payoff needs the index grid input".into(),
                    ));
                };
                let shape = vec![1, rows, MONTHS];
                let mut cur = shape.clone();
                let mut ch = 1;
                for &c in conv {
                    specs.push(LayerSpec::Conv2d {
                        in_channels: ch,
                        out_channels: c,
                        kernel_h: kernel[0],
                        kernel_w: kernel[1],
                    });
                    specs.push(LayerSpec::Relu);
                    ch = c;
                }
                specs.push(LayerSpec::MaxPool {
                    pool_h: pool[0],
                    pool_w: pool[1],
                });
                specs.push(LayerSpec::Flatten);
                for (idx, spec) in specs.iter().enumerate() {
                    cur = spec
                        .output_shape(&cur)
                        .map_err(|detail| Error::Shape { layer: idx, detail })?;
                }
                let mut width = cur.iter().product();
                for &h in dense {
                    specs.push(LayerSpec::Dense {
                        inputs: width,
                        outputs: h,
                    });
                    specs.push(LayerSpec::Relu);
                    width = h;
                }
                (shape, width)
            }
        };
        specs.push(LayerSpec::Dense {
            inputs: width,
            outputs: 1,
        });
        specs.push(LayerSpec::Relu);
        Ok((shape, specs))
    }
}

/// Per-channel standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Below this a channel counts as constant and is only centered.
const MIN_STD: f64 = 1e-12;

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Population mean and standard deviation of each channel; entry `j` of
    /// an input belongs to channel `j / width`.
    pub fn fit(inputs: &[Vec<f64>], channels: usize, width: usize) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidSample("no inputs to normalize".into()));
        }
        let mut mean = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        for x in inputs {
            if x.len() != channels * width {
                return Err(Error::InvalidSample(format!(
                    "input of length {}, expected {}",
                    x.len(),
                    channels * width
                )));
            }
            for (j, v) in x.iter().enumerate() {
                mean[j / width] += v;
            }
        }
        let count = (inputs.len() * width) as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        for x in inputs {
            for (j, v) in x.iter().enumerate() {
                let d = v - mean[j / width];
                sq[j / width] += d * d;
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = libm::sqrt(s / count);
                if sd > MIN_STD {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Normalization { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let width = x.len() / self.mean.len().max(1);
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let c = j / width.max(1);
                (v - self.mean[c]) / self.std[c]
            })
            .collect()
    }
}

/// Serializable form of a [`PayoffModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffSnapshot {
    pub mode: InputMode,
    pub normalization: Normalization,
    pub network: NetworkSnapshot,
}

/// A nonnegative payoff `I(X)` or `I(Y)` backed by a network.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffModel {
    mode: InputMode,
    norm: Normalization,
    net: Network,
}

impl PayoffModel {
    /// Glorot-initialized network with the input statistics of `s`. The
    /// output bias is set to `output_bias`; a positive value keeps the
    /// final ReLU active at the start of training.
    pub fn new<R: Rng + ?Sized>(
        mode: InputMode,
        arch: &Architecture,
        s: &ScenarioSet,
        output_bias: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let (shape, specs) = arch.layers(mode)?;
        let mut net = Network::glorot(shape, &specs, rng)?;
        let last = specs.len() - 2;
        let (w, _) = net.layer_params(last).expect("output layer exists");
        let w = w.to_vec();
        net.set_layer_params(last, &w, &[output_bias])?;
        let inputs = (0..s.len())
            .map(|n| raw_input(mode, s, n))
            .collect::<Result<Vec<_>>>()?;
        let norm = Normalization::fit(&inputs, mode.channels(), mode.channel_width())?;
        Self::from_parts(mode, norm, net)
    }

    /// `max(w * Y + b, 0)` on the unnormalized loss.
    pub fn affine_relu(mode: InputMode, _s: &ScenarioSet, w: f64, b: f64) -> Result<Self> {
        if mode != InputMode::ScalarLoss {
            return Err(Error::Config("affine payoff is written on the loss".into()));
        }
        let mut net = Network::zeros(
            vec![1],
            &[
                LayerSpec::Dense {
                    inputs: 1,
                    outputs: 1,
                },
                LayerSpec::Relu,
            ],
        )?;
        net.set_layer_params(0, &[w], &[b])?;
        Self::from_parts(mode, Normalization::identity(1), net)
    }

    pub fn from_parts(mode: InputMode, norm: Normalization, net: Network) -> Result<Self> {
        let flat = mode.channels() * mode.channel_width();
        if net.input_shape().iter().product::<usize>() != flat {
            return Err(Error::Shape {
                layer: 0,
                detail: format!(
                    "network input {:?} does not hold {flat} payoff inputs",
                    net.input_shape()
                ),
            });
        }
        if net.output_shape() != [1] || !net.ends_with_relu() {
            return Err(Error::Config(
                "payoff network must end in a scalar ReLU output".into(),
            ));
        }
        if norm.mean.len() != mode.channels() || norm.std.len() != mode.channels() {
            return Err(Error::Config("normalization does not match input mode".into()));
        }
        if norm
            .std
            .iter()
            .chain(&norm.mean)
            .any(|v| !v.is_finite())
            || norm.std.iter().any(|s| *s <= 0.0)
        {
            return Err(Error::Config("normalization must be finite with std > 0".into()));
        }
        Ok(PayoffModel { mode, norm, net })
    }

    pub fn from_snapshot(s: &PayoffSnapshot) -> Result<Self> {
        Self::from_parts(s.mode, s.normalization.clone(), Network::from_snapshot(&s.network)?)
    }

    pub fn snapshot(&self) -> PayoffSnapshot {
        PayoffSnapshot {
            mode: self.mode,
            normalization: self.norm.clone(),
            network: self.net.snapshot(),
        }
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    /// Copies the parameters of `other` (same architecture) into `self`.
    pub fn assign_from(&mut self, other: &PayoffModel) -> Result<()> {
        self.net.set_parameters(&other.net.parameters())?;
        self.norm = other.norm.clone();
        Ok(())
    }

    fn input(&self, s: &ScenarioSet, n: usize) -> Result<Tensor> {
        let x = self.norm.apply(&raw_input(self.mode, s, n)?);
        Tensor::new(self.net.input_shape().to_vec(), x)
    }

    /// `I` for scenario `n`.
    pub fn payoff(&self, s: &ScenarioSet, n: usize) -> Result<f64> {
        Ok(self.net.forward_eval(&self.input(s, n)?)?.data()[0])
    }

    /// Payoffs of every scenario, carrying the scenario probabilities.
    pub fn payoff_batch(&self, s: &ScenarioSet) -> Result<OutcomeSample> {
        let values = (0..s.len())
            .map(|n| self.payoff(s, n))
            .collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payoff".into()));
        }
        OutcomeSample::new(values, s.probs())
    }

    /// Adds `sum_n d_payoff[n] * dI_n / d(params)` to the network's gradient
    /// accumulators.
    pub fn accumulate_gradients(&mut self, s: &ScenarioSet, d_payoff: &[f64]) -> Result<()> {
        if d_payoff.len() != s.len() {
            return Err(Error::InvalidSample(format!(
                "{} payoff gradients for {} scenarios",
                d_payoff.len(),
                s.len()
            )));
        }
        for (n, &d) in d_payoff.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let x = self.input(s, n)?;
            self.net.forward(&x)?;
            self.net.backward(&Tensor::vector(vec![d]))?;
        }
        Ok(())
    }
}

/// Unnormalized model input of scenario `n`.
pub fn raw_input(mode: InputMode, s: &ScenarioSet, n: usize) -> Result<Vec<f64>> {
    let sc = s
        .scenarios()
        .get(n)
        .ok_or_else(|| Error::InvalidSample(format!("no scenario {n}")))?;
    match mode {
        InputMode::ScalarLoss => Ok(vec![sc.loss]),
        InputMode::IndexGrid { rows } => {
            if s.rows() != rows {
                return Err(Error::Shape {
                    layer: 0,
                    detail: format!("scenarios carry {} index rows, model expects {rows}", s.rows()),
                });
            }
            sc.weather
                .clone()
                .ok_or_else(|| Error::InvalidSample(format!("scenario {n} has no weather grid")))
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn softplus_inverse(y: f64) -> f64 {
    y + libm::log(-libm::expm1(-y))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Knot curve with increments `softplus(raw)`; every raw vector gives a
/// continuous nondecreasing distortion with `g(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonePricingCurve {
    raw: Vec<f64>,
}

impl MonotonePricingCurve {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Domain("pricing curve needs at least one knot".into()));
        }
        if raw.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("pricing curve parameter".into()));
        }
        Ok(MonotonePricingCurve { raw })
    }

    /// Raw parameters reproducing the given strictly positive increments.
    pub fn from_increments(increments: &[f64]) -> Result<Self> {
        if increments.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Domain(
                "increments must be positive to have a preimage".into(),
            ));
        }
        Self::new(increments.iter().map(|&d| softplus_inverse(d)).collect())
    }

    /// `g(s) = slope * s` on `m` knots.
    pub fn linear(m: usize, slope: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("pricing curve needs at least one knot".into()));
        }
        Self::from_increments(&vec![slope / m as f64; m])
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn knot_count(&self) -> usize {
        self.raw.len()
    }

    pub fn increments(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn pricing_curve(&self) -> Distortion {
        Distortion::Knots(
            KnotCurve::new(self.increments()).expect("softplus increments are nonnegative"),
        )
    }

    /// Maps a gradient over increments to one over raw parameters.
    pub fn chain(&self, d_increments: &[f64]) -> Vec<f64> {
        self.raw
            .iter()
            .zip(d_increments)
            .map(|(&r, d)| d * sigmoid(r))
            .collect()
    }

    /// `(s, g(s))` on `points` equally spaced abscissae in `[0, 1]`.
    pub fn samples(&self, points: usize) -> Vec<(f64, f64)> {
        let g = self.pricing_curve();
        let last = points.saturating_sub(1).max(1) as f64;
        (0..points)
            .map(|k| {
                let s = k as f64 / last;
                (s, g.eval(s).expect("grid lies in [0, 1]"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn grid_set(n: usize, rows: usize, seed: u64) -> ScenarioSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenarios = (0..n)
            .map(|k| Scenario {
                weather: Some(
                    (0..rows * MONTHS)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect(),
                ),
                loss: k as f64,
                prob: 1.0 / n as f64,
            })
            .collect();
        ScenarioSet::new(rows, scenarios).unwrap()
    }

    #[test]
    fn zero_output_weights_give_zero_payoff() {
        let s = grid_set(5, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = PayoffModel::new(
            InputMode::IndexGrid { rows: 3 },
            &Architecture::default(),
            &s,
            0.0,
            &mut rng,
        )
        .unwrap();
        let mut p = m.network().parameters();
        let n_out = 8 + 1;
        let len = p.len();
        p[len - n_out..].iter_mut().for_each(|v| *v = 0.0);
        m.network_mut().set_parameters(&p).unwrap();
        assert!(m.payoff_batch(&s).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_payoff_on_losses() {
        let s = ScenarioSet::uniform_losses(&[0.0, 2.5, 7.0]).unwrap();
        let m = PayoffModel::affine_relu(InputMode::ScalarLoss, &s, 1.0, 0.0).unwrap();
        assert_eq!(m.payoff_batch(&s).unwrap().values(), &[0.0, 2.5, 7.0]);
    }

    #[test]
    fn cnn_batch_matches_single_passes() {
        let s = grid_set(4, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let arch = Architecture::Cnn {
            conv: vec![4, 3],
            kernel: [2, 2],
            pool: [2, 2],
            dense: vec![5],
        };
        let m = PayoffModel::new(InputMode::IndexGrid { rows: 6 }, &arch, &s, 0.5, &mut rng)
            .unwrap();
        let batch = m.payoff_batch(&s).unwrap();
        for n in 0..s.len() {
            assert_eq!(batch.values()[n].to_bits(), m.payoff(&s, n).unwrap().to_bits());
        }
        assert_eq!(batch.probs(), s.probs().as_slice());
    }

    #[test]
    fn cnn_needs_grid_input() {
        assert!(Architecture::default_cnn().layers(InputMode::ScalarLoss).is_err());
        let (shape, specs) = Architecture::default_cnn()
            .layers(InputMode::IndexGrid { rows: 6 })
            .unwrap();
        assert_eq!(shape, vec![1, 6, 12]);
        assert!(Network::zeros(shape, &specs).is_ok());
    }

    #[test]
    fn wrong_grid_rows_is_a_shape_error() {
        let s = grid_set(3, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = PayoffModel::new(
            InputMode::IndexGrid { rows: 3 },
            &Architecture::default(),
            &s,
            0.0,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn normalization_is_idempotent() {
        let s = grid_set(30, 4, 7);
        let mode = InputMode::IndexGrid { rows: 4 };
        let raw: Vec<_> = (0..s.len()).map(|n| raw_input(mode, &s, n).unwrap()).collect();
        let norm = Normalization::fit(&raw, 4, MONTHS).unwrap();
        let once: Vec<_> = raw.iter().map(|x| norm.apply(x)).collect();
        let again = Normalization::fit(&once, 4, MONTHS).unwrap();
        for x in &once {
            for (a, b) in x.iter().zip(again.apply(x)) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn constant_channel_is_only_centered() {
        let inputs = vec![vec![3.0, 1.0], vec![3.0, 2.0]];
        let norm = Normalization::fit(&inputs, 2, 1).unwrap();
        assert_eq!(norm.std[0], 1.0);
        assert_eq!(norm.apply(&[3.0, 1.0]), vec![0.0, -1.0]);
    }

    #[test]
    fn payoff_gradients_match_finite_differences() {
        let s = ScenarioSet::uniform_losses(&[0.3, 1.7, 4.2, 6.1, 9.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = PayoffModel::new(
            InputMode::ScalarLoss,
            &Architecture::Mlp { hidden: vec![4] },
            &s,
            1.0,
            &mut rng,
        )
        .unwrap();
        let d = [0.4, -1.0, 0.25, 2.0, -0.3];
        let obj = |m: &PayoffModel| -> f64 {
            m.payoff_batch(&s)
                .unwrap()
                .values()
                .iter()
                .zip(&d)
                .map(|(i, w)| i * w)
                .sum()
        };
        m.accumulate_gradients(&s, &d).unwrap();
        let grad = m.network().gradients();
        let p0 = m.network().parameters();
        let h = 1e-6;
        for j in 0..p0.len() {
            let mut probe = m.clone();
            let mut p = p0.clone();
            p[j] += h;
            probe.network_mut().set_parameters(&p).unwrap();
            let up = obj(&probe);
            p[j] -= 2.0 * h;
            probe.network_mut().set_parameters(&p).unwrap();
            let dn = obj(&probe);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grad[j]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {j}: {fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn identity_curve_from_preimage() {
        let m = 100;
        let c = MonotonePricingCurve::new(vec![softplus_inverse(1.0 / m as f64); m]).unwrap();
        let g = c.pricing_curve();
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            assert_close!(g.eval(s).unwrap(), s, 1e-12);
        }
    }

    #[test]
    fn single_increment_curve_kinks_at_first_knot() {
        let m = 10;
        let mut raw = vec![-60.0; m];
        raw[0] = softplus_inverse(1.0);
        let g = MonotonePricingCurve::new(raw).unwrap().pricing_curve();
        for s in [0.0, 0.03, 0.1, 0.5, 1.0] {
            let want = if s * m as f64 >= 1.0 { 1.0 } else { s * m as f64 };
            assert_close!(g.eval(s).unwrap(), want, 1e-12);
        }
    }

    #[test]
    fn any_raw_vector_gives_nondecreasing_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..50).map(|_| rng.random_range(-30.0..30.0)).collect();
            let c = MonotonePricingCurve::new(raw).unwrap();
            let pts = c.samples(1001);
            assert_eq!(pts[0].1, 0.0);
            assert!(pts.windows(2).all(|w| w[1].1 >= w[0].1));
        }
    }

    #[test]
    fn chain_matches_finite_differences() {
        let c = MonotonePricingCurve::new(vec![-1.0, 0.0, 2.0]).unwrap();
        let d = c.chain(&[1.0, 1.0, 1.0]);
        for j in 0..3 {
            let h = 1e-6;
            let r = c.raw()[j];
            let fd = (softplus(r + h) - softplus(r - h)) / (2.0 * h);
            assert_close!(d[j], fd, 1e-8);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let s = grid_set(4, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = PayoffModel::new(
            InputMode::IndexGrid { rows: 2 },
            &Architecture::default(),
            &s,
            0.1,
            &mut rng,
        )
        .unwrap();
        let back = PayoffModel::from_snapshot(&m.snapshot()).unwrap();
        assert_eq!(back, m);
    }
}
