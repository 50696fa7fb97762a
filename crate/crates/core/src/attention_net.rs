//! Small feed-forward embedding networks and scaled dot-product scoring.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NafError, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }

    pub fn n_params(&self) -> usize {
        self.input_width * self.output_width + self.output_width
    }
}

/// Embedding network shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// One linear layer `d -> h`.
    #[serde(rename = "naf1")]
    Naf1,
    /// `d -> h` tanh, `h -> h` tanh, `h -> h` linear.
    #[serde(rename = "naf3")]
    Naf3,
}

impl Architecture {
    pub fn layer_specs(self, input_width: usize, embed_width: usize) -> Vec<LayerSpec> {
        match self {
            Architecture::Naf1 => vec![LayerSpec::new(input_width, embed_width, Activation::Linear)],
            Architecture::Naf3 => vec![
                LayerSpec::new(input_width, embed_width, Activation::Tanh),
                LayerSpec::new(embed_width, embed_width, Activation::Tanh),
                LayerSpec::new(embed_width, embed_width, Activation::Linear),
            ],
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Architecture::Naf1 => "naf1",
            Architecture::Naf3 => "naf3",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Naf1 => "NAF-1",
            Architecture::Naf3 => "NAF-3",
        })
    }
}

impl FromStr for Architecture {
    type Err = NafError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "naf1" => Ok(Architecture::Naf1),
            "naf3" => Ok(Architecture::Naf3),
            other => Err(NafError::Config(format!(
                "unknown architecture {other:?}; expected naf1 or naf3"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Row-major `output_width x input_width`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn affine(&self, input: &[f64]) -> Vec<f64> {
        let n_in = self.spec.input_width;
        self.weights
            .chunks_exact(n_in)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b)
            .collect()
    }
}

/// Per-layer activations from a forward pass; `values[0]` is the input and
/// `values[l + 1]` the output of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionNet {
    layers: Vec<Layer>,
}

impl AttentionNet {
    /// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        check_chain(specs)?;
        let mut rng = stream_rng(seed, 0);
        let layers = specs
            .iter()
            .map(|spec| {
                let scale = 1.0 / (spec.input_width as f64).sqrt();
                let weights = (0..spec.input_width * spec.output_width)
                    .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
                    .collect();
                Layer {
                    spec: *spec,
                    weights,
                    bias: vec![0.0; spec.output_width],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// A network mapping every input to the same embedding (all ones).
    pub fn constant(specs: &[LayerSpec]) -> Result<Self> {
        check_chain(specs)?;
        let last = specs.len() - 1;
        let layers = specs
            .iter()
            .enumerate()
            .map(|(l, spec)| Layer {
                spec: *spec,
                weights: vec![0.0; spec.input_width * spec.output_width],
                bias: vec![if l == last { 1.0 } else { 0.0 }; spec.output_width],
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_chain(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.spec.input_width * l.spec.output_width
                || l.bias.len() != l.spec.output_width
            {
                return Err(NafError::ModelFormat(format!(
                    "layer {i} parameter counts do not match its spec"
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].spec.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_width
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.spec.n_params()).sum()
    }

    /// Flattened parameters: per layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(NafError::Dimension {
                expected: self.n_params(),
                actual: params.len(),
                location: None,
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.layers.iter().fold(input.to_vec(), |v, layer| {
            let mut z = layer.affine(&v);
            if layer.spec.activation == Activation::Tanh {
                z.iter_mut().for_each(|x| *x = x.tanh());
            }
            z
        })
    }

    pub fn forward_trace(&self, input: &[f64]) -> Trace {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let mut z = layer.affine(values.last().unwrap());
            if layer.spec.activation == Activation::Tanh {
                z.iter_mut().for_each(|x| *x = x.tanh());
            }
            values.push(z);
        }
        Trace { values }
    }

    /// Backpropagate `grad_output` through a recorded pass. Parameter
    /// gradients are added into `param_grad` (flattened layout); the
    /// gradient with respect to the input is returned.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], param_grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(param_grad.len(), self.n_params());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.spec.n_params();
        }
        let mut grad = grad_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.values[l + 1];
            if layer.spec.activation == Activation::Tanh {
                grad.iter_mut().zip(out).for_each(|(g, y)| *g *= 1.0 - y * y);
            }
            let input = &trace.values[l];
            let n_in = layer.spec.input_width;
            let (gw, gb) = param_grad[offsets[l]..offsets[l] + layer.spec.n_params()]
                .split_at_mut(n_in * layer.spec.output_width);
            let mut grad_in = vec![0.0; n_in];
            for (o, &g) in grad.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                for ((gw_i, x), (gi, w)) in gw[o * n_in..(o + 1) * n_in]
                    .iter_mut()
                    .zip(input)
                    .zip(grad_in.iter_mut().zip(row))
                {
                    *gw_i += g * x;
                    *gi += g * w;
                }
            }
            grad = grad_in;
        }
        grad
    }
}

fn check_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(NafError::Config("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_width == 0 || s.output_width == 0 {
            return Err(NafError::Config(format!("layer {i} has zero width")));
        }
        if i > 0 && specs[i - 1].output_width != s.input_width {
            return Err(NafError::WidthMismatch {
                layer: i,
                expected: s.input_width,
                actual: specs[i - 1].output_width,
            });
        }
    }
    Ok(())
}

/// Raw scores and their softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    pub raw_scores: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-shifted softmax in place.
pub fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    scores.iter_mut().for_each(|s| *s /= total);
}

/// Softmax of `query . key / sqrt(h)` over the keys, `h` being the width.
pub fn score_softmax<K: AsRef<[f64]>>(query: &[f64], keys: &[K]) -> Result<ScoreBatch> {
    if keys.is_empty() {
        return Err(NafError::EmptyKeys);
    }
    let scale = 1.0 / (query.len() as f64).sqrt();
    let mut raw_scores = Vec::with_capacity(keys.len());
    for (i, k) in keys.iter().enumerate() {
        let k = k.as_ref();
        if k.len() != query.len() {
            return Err(NafError::Dimension {
                expected: query.len(),
                actual: k.len(),
                location: Some(i),
            });
        }
        raw_scores.push(dot(query, k) * scale);
    }
    let mut weights = raw_scores.clone();
    softmax_in_place(&mut weights);
    Ok(ScoreBatch { raw_scores, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn naf1_and_naf3_shapes() {
        let net = AttentionNet::init(&Architecture::Naf1.layer_specs(10, 16), 1).unwrap();
        assert_eq!(net.n_params(), 176);
        let specs = Architecture::Naf3.layer_specs(10, 16);
        assert_eq!(
            specs,
            vec![
                LayerSpec::new(10, 16, Activation::Tanh),
                LayerSpec::new(16, 16, Activation::Tanh),
                LayerSpec::new(16, 16, Activation::Linear),
            ]
        );
        let a = AttentionNet::init(&specs, 5).unwrap();
        let b = AttentionNet::init(&specs, 5).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), AttentionNet::init(&specs, 6).unwrap().params());
    }

    #[test]
    fn width_mismatch_rejected() {
        let specs = [
            LayerSpec::new(3, 4, Activation::Tanh),
            LayerSpec::new(5, 2, Activation::Linear),
        ];
        assert!(matches!(
            AttentionNet::init(&specs, 0),
            Err(NafError::WidthMismatch { layer: 1, .. })
        ));
    }

    #[test]
    fn forward_small_cases() {
        let mut net = AttentionNet::init(&[LayerSpec::new(1, 1, Activation::Linear)], 0).unwrap();
        net.set_params(&[2.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[3.0]), vec![7.0]);

        let specs = Architecture::Naf3.layer_specs(3, 4);
        let mut zero = AttentionNet::init(&specs, 0).unwrap();
        zero.set_params(&vec![0.0; zero.n_params()]).unwrap();
        assert_eq!(zero.forward(&[1.0, -2.0, 0.5]), vec![0.0; 4]);

        // identity-padded 3 -> 5
        let mut id = AttentionNet::init(&[LayerSpec::new(3, 5, Activation::Linear)], 0).unwrap();
        let mut p = vec![0.0; id.n_params()];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        id.set_params(&p).unwrap();
        assert_eq!(id.forward(&[1.5, -2.0, 4.0]), vec![1.5, -2.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_examples() {
        let keys = [vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let batch = score_softmax(&[0.3, -0.2], &keys).unwrap();
        assert!(batch.weights.iter().all(|&w| w == 1.0 / 3.0));

        let batch = score_softmax(&[1.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((batch.raw_scores[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(batch.raw_scores[1], 0.0);
        // exp(1/sqrt 2) / (exp(1/sqrt 2) + 1)
        assert!((batch.weights[0] - 0.669_761_549_326_656_9).abs() < 1e-12);
        assert!((batch.weights[1] - 0.330_238_450_673_343_1).abs() < 1e-12);

        assert!(matches!(
            score_softmax::<Vec<f64>>(&[1.0], &[]),
            Err(NafError::EmptyKeys)
        ));
    }

    #[test]
    fn constant_net_gives_uniform_weights() {
        let net = AttentionNet::constant(&Architecture::Naf3.layer_specs(2, 4)).unwrap();
        let keys: Vec<Vec<f64>> = (0..7).map(|i| net.forward(&[i as f64, -(i as f64)])).collect();
        let batch = score_softmax(&net.forward(&[0.2, 9.0]), &keys).unwrap();
        assert!(batch.weights.iter().all(|&w| w == 1.0 / 7.0));
    }

    fn reference_forward(net: &AttentionNet, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for layer in net.layers() {
            let s = layer.spec;
            let mut out = vec![0.0; s.output_width];
            for (o, item) in out.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (i, xi) in v.iter().enumerate() {
                    acc += layer.weights[o * s.input_width + i] * xi;
                }
                *item = match s.activation {
                    Activation::Tanh => acc.tanh(),
                    Activation::Linear => acc,
                };
            }
            v = out;
        }
        v
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            scores in prop::collection::vec(-30.0f64..30.0, 1..12),
            shift in -50.0f64..50.0,
        ) {
            let mut w = scores.clone();
            softmax_in_place(&mut w);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
            let mut shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            softmax_in_place(&mut shifted);
            for (a, b) in w.iter().zip(&shifted) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn forward_matches_reference(seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 4)) {
            for arch in [Architecture::Naf1, Architecture::Naf3] {
                let mut net = AttentionNet::init(&arch.layer_specs(4, 6), seed).unwrap();
                // random biases too
                let mut p = net.params();
                let mut rng = stream_rng(seed, 1);
                p.iter_mut().for_each(|v| *v += 0.3 * (rng.random::<f64>() - 0.5));
                net.set_params(&p).unwrap();
                let fast = net.forward(&x);
                let slow = reference_forward(&net, &x);
                for (a, b) in fast.iter().zip(&slow) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
                let trace = net.forward_trace(&x);
                prop_assert_eq!(trace.output(), fast.as_slice());
            }
        }

        #[test]
        fn param_round_trip_is_exact(seed in any::<u64>()) {
            let net = AttentionNet::init(&Architecture::Naf3.layer_specs(3, 5), seed).unwrap();
            let mut other = AttentionNet::constant(&net.specs()).unwrap();
            other.set_params(&net.params()).unwrap();
            prop_assert_eq!(other, net);
        }
    }
}
