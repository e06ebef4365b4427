//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Shared by the Q-network, the actor and critic, and the trait predictor.
//! Everything is `f64` and row-major; a layer's weight matrix is
//! `outputs x inputs`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CHMLPNN\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
            Activation::Softmax => 3,
        }
    }

    fn from_code(code: u8) -> Option<Activation> {
        Some(match code {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            2 => Activation::Linear,
            3 => Activation::Softmax,
            _ => return None,
        })
    }

    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Tanh => z.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Linear => {}
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Turns `grad` (w.r.t. the activation output `y`) into the gradient
    /// w.r.t. the pre-activation.
    fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => grad
                .iter_mut()
                .zip(y)
                .for_each(|(g, &y)| if y <= 0.0 { *g = 0.0 }),
            Activation::Tanh => grad.iter_mut().zip(y).for_each(|(g, &y)| *g *= 1.0 - y * y),
            Activation::Linear => {}
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(y).map(|(g, y)| g * y).sum();
                grad.iter_mut().zip(y).for_each(|(g, &y)| *g = y * (*g - dot));
            }
        }
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in z.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    z.iter_mut().for_each(|x| *x /= sum);
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Layer {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        let mut z = self.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *zo += dot(row, input);
        }
        z
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Per-layer `(weights, biases)` gradients, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Gradients {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|x| *x *= k);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(x, y)| *x += y);
            b.iter_mut().zip(ob).for_each(|(x, y)| *x += y);
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    fn shape_matches(&self, model: &Mlp) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.biases.len())
    }
}

/// Activations recorded by a forward pass; `values[0]` is the input.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    values: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("cache holds the input at least")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    cache: Option<ForwardCacheEq>,
}

// Wrapper so the cache never takes part in model equality.
#[derive(Clone, Debug)]
struct ForwardCacheEq(ForwardCache);

impl PartialEq for ForwardCacheEq {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Mlp {
    /// Builds a network through `dims` (input first), `hidden` between layers
    /// and `output` on the last. Weights are drawn uniformly in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases start at zero.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, seed: u64) -> Mlp {
        assert!(dims.len() >= 2, "need at least an input and an output size");
        let specs: Vec<_> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == dims.len() { output } else { hidden };
                (w[0], w[1], act)
            })
            .collect();
        Mlp::from_spec(&specs, seed)
    }

    pub fn from_spec(specs: &[(usize, usize, Activation)], seed: u64) -> Mlp {
        for pair in specs.windows(2) {
            assert_eq!(pair[0].1, pair[1].0, "layer dimensions must chain");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|&(inputs, outputs, activation)| {
                let mut layer = Layer::zeros(inputs, outputs, activation);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = rng.gen_range(-limit..=limit));
                layer
            })
            .collect();
        Mlp { layers, cache: None }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Mlp> {
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::DimensionMismatch {
                    expected: l.inputs * l.outputs,
                    got: l.weights.len(),
                });
            }
        }
        Ok(Mlp { layers, cache: None })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Same layer sizes and activations.
    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation
            })
    }

    pub fn copy_params_from(&mut self, other: &Mlp) {
        assert!(self.same_architecture(other));
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.biases.copy_from_slice(&src.biases);
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|p| p.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.pre_activation(&x);
            layer.activation.apply(&mut z);
            x = z;
        }
        Ok(x)
    }

    pub fn forward_with_cache(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let mut z = layer.pre_activation(values.last().unwrap());
            layer.activation.apply(&mut z);
            values.push(z);
        }
        Ok(ForwardCache { values })
    }

    /// Forward pass that keeps its activations for a following [`Mlp::backward`].
    pub fn forward_train(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_with_cache(input)?;
        let out = cache.output().to_vec();
        self.cache = Some(ForwardCacheEq(cache));
        Ok(out)
    }

    /// Gradients of the most recent [`Mlp::forward_train`] given the gradient
    /// of the loss w.r.t. the network output. Consumes the cached pass.
    /// Returns parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?.0;
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(&cache, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Accumulates parameter gradients for `cache` into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if cache.values.len() != self.layers.len() + 1 {
            return Err(Error::NoForwardCache);
        }
        let mut grad = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.values[k + 1];
            let x = &cache.values[k];
            layer.activation.backprop(y, &mut grad);
            let (gw, gb) = &mut grads.layers[k];
            let mut gx = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let g = grad[o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let row = o * layer.inputs..(o + 1) * layer.inputs;
                for (gwi, xi) in gw[row.clone()].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
                for (gxi, wi) in gx.iter_mut().zip(&layer.weights[row]) {
                    *gxi += g * wi;
                }
            }
            grad = gx;
        }
        Ok(grad)
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            out.write_all(&(l.inputs as u32).to_le_bytes())?;
            out.write_all(&(l.outputs as u32).to_le_bytes())?;
            out.write_all(&[l.activation.code()])?;
        }
        for l in &self.layers {
            for p in l.weights.iter().chain(&l.biases) {
                out.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load_weights(path: impl AsRef<Path>) -> Result<Mlp> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Mlp::read_from(&mut BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn read_from(input: &mut impl Read) -> Result<Mlp> {
        let io = |e| Error::io("<weights>", e);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::VersionMismatch("bad magic".into()));
        }
        let version = read_u32(input).map_err(io)?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch(format!(
                "file version {version}, supported {FORMAT_VERSION}"
            )));
        }
        let n = read_u32(input).map_err(io)? as usize;
        if n == 0 || n > 64 {
            return Err(Error::VersionMismatch(format!("implausible layer count {n}")));
        }
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let inputs = read_u32(input).map_err(io)? as usize;
            let outputs = read_u32(input).map_err(io)? as usize;
            let mut code = [0u8; 1];
            input.read_exact(&mut code).map_err(io)?;
            let activation = Activation::from_code(code[0])
                .ok_or_else(|| Error::VersionMismatch(format!("unknown activation {}", code[0])))?;
            layers.push(Layer::zeros(inputs, outputs, activation));
        }
        for l in &mut layers {
            for p in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                let mut buf = [0u8; 8];
                input.read_exact(&mut buf).map_err(io)?;
                *p = f64::from_le_bytes(buf);
            }
        }
        Mlp::from_layers(layers)
    }

    /// Loads a weight file into this model, which must have the same architecture.
    pub fn load_into(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let loaded = Mlp::load_weights(path)?;
        if !self.same_architecture(&loaded) {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: loaded.num_params(),
            });
        }
        self.copy_params_from(&loaded);
        Ok(())
    }
}

fn read_u32(input: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> OptimizerKind {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Rescale gradients whose global norm exceeds this.
    pub max_grad_norm: Option<f64>,
    step_count: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, model: &Mlp) -> Optimizer {
        Optimizer {
            kind,
            learning_rate,
            max_grad_norm: None,
            step_count: 0,
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
        }
    }

    pub fn sgd(learning_rate: f64, model: &Mlp) -> Optimizer {
        Optimizer::new(OptimizerKind::Sgd, learning_rate, model)
    }

    pub fn adam(learning_rate: f64, model: &Mlp) -> Optimizer {
        Optimizer::new(OptimizerKind::adam(), learning_rate, model)
    }

    pub fn with_max_grad_norm(mut self, norm: f64) -> Optimizer {
        self.max_grad_norm = Some(norm);
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self) -> (&Gradients, &Gradients) {
        (&self.first_moment, &self.second_moment)
    }

    /// Applies one update. Rejects mismatched or non-finite gradients without
    /// touching the model.
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.shape_matches(model) || !self.first_moment.shape_matches(model) {
            return Err(Error::DimensionMismatch {
                expected: model.num_params(),
                got: grads.iter().count(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteGrad);
        }
        let scale = match self.max_grad_norm {
            Some(max) => {
                let n = grads.norm();
                if n > max { max / n } else { 1.0 }
            }
            None => 1.0,
        };

        let t = self.step_count + 1;
        let lr = self.learning_rate;
        let mut updated: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(model.layers.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (l, (gw, gb)) in model.layers.iter().zip(&grads.layers) {
                    let w = l.weights.iter().zip(gw).map(|(p, g)| p - lr * scale * g).collect();
                    let b = l.biases.iter().zip(gb).map(|(p, g)| p - lr * scale * g).collect();
                    updated.push((w, b));
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let bc1 = 1.0 - beta1.powi(t as i32);
                let bc2 = 1.0 - beta2.powi(t as i32);
                let mut m = self.first_moment.clone();
                let mut v = self.second_moment.clone();
                for (k, l) in model.layers.iter().enumerate() {
                    let (gw, gb) = &grads.layers[k];
                    let (mw, mb) = &mut m.layers[k];
                    let (vw, vb) = &mut v.layers[k];
                    let upd = |params: &[f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                        params
                            .iter()
                            .enumerate()
                            .map(|(i, p)| {
                                let g = g[i] * scale;
                                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                                let mhat = m[i] / bc1;
                                let vhat = v[i] / bc2;
                                p - lr * mhat / (vhat.sqrt() + epsilon)
                            })
                            .collect::<Vec<f64>>()
                    };
                    let w = upd(&l.weights, gw, mw, vw);
                    let b = upd(&l.biases, gb, mb, vb);
                    updated.push((w, b));
                }
                if updated.iter().all(|(w, b)| w.iter().chain(b).all(|p| p.is_finite())) {
                    self.first_moment = m;
                    self.second_moment = v;
                }
            }
        }
        if !updated.iter().all(|(w, b)| w.iter().chain(b).all(|p| p.is_finite())) {
            return Err(Error::NonFiniteGrad);
        }
        for (l, (w, b)) in model.layers.iter_mut().zip(updated) {
            l.weights = w;
            l.biases = b;
        }
        self.step_count = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(n: usize) -> Mlp {
        let mut l = Layer::zeros(n, n, Activation::Linear);
        for i in 0..n {
            l.weights[i * n + i] = 1.0;
        }
        Mlp::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn identity_linear_layer() {
        let m = identity_layer(3);
        assert_eq!(m.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let mut l = Layer::zeros(2, 3, Activation::Relu);
        l.biases = vec![-1.0, 0.5, 2.0];
        let m = Mlp::from_layers(vec![l]).unwrap();
        assert_eq!(m.forward(&[3.0, 4.0]).unwrap(), vec![0.0, 0.5, 2.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = identity_layer(3);
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut m = Mlp::new(&[3, 2], Activation::Linear, Activation::Linear, 1);
        let x = [0.5, -1.0, 2.0];
        let g = [0.3, -0.7];
        m.forward_train(&x).unwrap();
        let (grads, _) = m.backward(&g).unwrap();
        let (gw, gb) = &grads.layers[0];
        for o in 0..2 {
            for i in 0..3 {
                assert!((gw[o * 3 + i] - g[o] * x[i]).abs() < 1e-15);
            }
            assert_eq!(gb[o], g[o]);
        }
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        // d(-log softmax_t)/dz = p - onehot(t); through the softmax layer the
        // upstream gradient is -onehot(t)/p_t.
        let mut m = Mlp::new(&[4, 5], Activation::Linear, Activation::Softmax, 9);
        let x = [0.1, 0.2, -0.3, 0.4];
        let probs = m.forward_train(&x).unwrap();
        let target = 2;
        let mut upstream = vec![0.0; 5];
        upstream[target] = -1.0 / probs[target];
        m.forward_train(&x).unwrap();
        let (grads, _) = m.backward(&upstream).unwrap();
        let (_, gb) = &grads.layers[0];
        for k in 0..5 {
            let expected = probs[k] - if k == target { 1.0 } else { 0.0 };
            assert!((gb[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_requires_forward() {
        let mut m = identity_layer(2);
        assert!(matches!(m.backward(&[1.0, 1.0]), Err(Error::NoForwardCache)));
        m.forward_train(&[1.0, 1.0]).unwrap();
        m.backward(&[1.0, 1.0]).unwrap();
        assert!(matches!(m.backward(&[1.0, 1.0]), Err(Error::NoForwardCache)));
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut m = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Linear, 5);
        let before = m.params();
        let mut grads = Gradients::zeros_like(&m);
        grads.layers[0].0[0] = 1.0;
        for mut opt in [Optimizer::sgd(0.0, &m), Optimizer::adam(0.0, &m)] {
            opt.step(&mut m, &grads).unwrap();
            assert_eq!(m.params(), before);
            assert_eq!(opt.step_count(), 1);
        }
    }

    #[test]
    fn sgd_rule() {
        let mut m = Mlp::new(&[2, 2], Activation::Linear, Activation::Linear, 5);
        let before = m.params();
        let mut grads = Gradients::zeros_like(&m);
        grads.layers[0].0 = vec![1.0, -2.0, 0.5, 0.0];
        grads.layers[0].1 = vec![3.0, 4.0];
        let mut opt = Optimizer::sgd(0.1, &m);
        opt.step(&mut m, &grads).unwrap();
        let g: Vec<f64> = grads.iter().collect();
        for ((a, b), g) in m.params().iter().zip(&before).zip(&g) {
            assert!((a - (b - 0.1 * g)).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        // m = 0.1, v = 0.001; mhat = 1, vhat = 1 -> step = lr * 1 / (1 + 1e-8)
        let mut m = Mlp::new(&[2, 1], Activation::Linear, Activation::Linear, 5);
        let before = m.params();
        let mut grads = Gradients::zeros_like(&m);
        grads.layers[0].0 = vec![1.0, 1.0];
        grads.layers[0].1 = vec![1.0];
        let mut opt = Optimizer::adam(0.01, &m);
        opt.step(&mut m, &grads).unwrap();
        let expected = 0.01 / (1.0 + 1e-8);
        for (a, b) in m.params().iter().zip(&before) {
            assert!((b - a - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn nonfinite_gradient_rejected() {
        let mut m = Mlp::new(&[2, 2], Activation::Linear, Activation::Linear, 5);
        let before = m.params();
        let mut grads = Gradients::zeros_like(&m);
        grads.layers[0].0[1] = f64::NAN;
        let mut opt = Optimizer::adam(0.1, &m);
        let err = opt.step(&mut m, &grads).unwrap_err();
        assert_eq!(err.code(), "NONFINITE_GRAD");
        assert_eq!(m.params(), before);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn optimizer_shape_mismatch() {
        let mut m = Mlp::new(&[2, 2], Activation::Linear, Activation::Linear, 5);
        let other = Mlp::new(&[3, 2], Activation::Linear, Activation::Linear, 5);
        let mut opt = Optimizer::sgd(0.1, &m);
        let err = opt.step(&mut m, &Gradients::zeros_like(&other)).unwrap_err();
        assert_eq!(err.code(), "DIMENSION_MISMATCH");
    }

    #[test]
    fn weights_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = Mlp::new(&[5, 7, 3], Activation::Relu, Activation::Softmax, 11);
        m.save_weights(&path).unwrap();
        let loaded = Mlp::load_weights(&path).unwrap();
        assert_eq!(loaded, m);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert_eq!(m.forward(&x).unwrap(), loaded.forward(&x).unwrap());
        }

        let mut wrong = Mlp::new(&[5, 8, 3], Activation::Relu, Activation::Softmax, 1);
        assert_eq!(wrong.load_into(&path).unwrap_err().code(), "DIMENSION_MISMATCH");

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(Mlp::load_weights(&path).unwrap_err().code(), "VERSION_MISMATCH");
        bytes[0] = MAGIC[0];
        bytes[8] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(Mlp::load_weights(&path).unwrap_err().code(), "VERSION_MISMATCH");
    }

    #[test]
    fn xor_trains() {
        let mut m = Mlp::new(&[2, 4, 1], Activation::Tanh, Activation::Linear, 3);
        let mut opt = Optimizer::adam(0.05, &m);
        let data = [([0.0, 0.0], 0.0), ([0.0, 1.0], 1.0), ([1.0, 0.0], 1.0), ([1.0, 1.0], 0.0)];
        for _ in 0..5000 {
            let mut grads = Gradients::zeros_like(&m);
            for (x, y) in &data {
                let cache = m.forward_with_cache(x).unwrap();
                let err = cache.output()[0] - y;
                m.backward_into(&cache, &[2.0 * err / 4.0], &mut grads).unwrap();
            }
            opt.step(&mut m, &grads).unwrap();
        }
        let mse: f64 = data
            .iter()
            .map(|(x, y)| (m.forward(x).unwrap()[0] - y).powi(2))
            .sum::<f64>()
            / 4.0;
        assert!(mse < 0.1, "mse {mse}");
    }
}
