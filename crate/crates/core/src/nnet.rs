//! Minimal dense feed-forward networks with reverse-mode gradients and Adam.
//!
//! Batched evaluation stores samples as matrix columns: an input batch for a
//! net with `in` inputs is an `in × batch` matrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        if self == Activation::Relu {
            z.apply(|v| *v = v.max(0.0));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Dense network; `activation` follows every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Intermediate values of a recorded forward pass, consumed by
/// [`DenseNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// Input to each layer.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn clear(&mut self) {
        self.inputs.clear();
        self.pre.clear();
    }
}

impl DenseNet {
    /// Builds a net from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} does not match {} outputs",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    layer.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Glorot-uniform weights, zero biases. `dims` lists every layer width
    /// including input and output.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "invalid layer dims {dims:?}");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                Layer {
                    weight: DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(rng)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self { layers, activation }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, rows: usize) -> Result<()> {
        if rows != self.in_dim() {
            return Err(Error::Shape(format!("network expects {} inputs, got {rows}", self.in_dim())));
        }
        Ok(())
    }

    fn affine(layer: &Layer, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.weight * x;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        z
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        Ok(self.forward_batch(&x)?.as_slice().to_vec())
    }

    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(inputs.nrows())?;
        let last = self.layers.len() - 1;
        let mut x = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = Self::affine(layer, &x);
            if i < last {
                self.activation.apply(&mut x);
            }
        }
        Ok(x)
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    pub fn forward_record(&self, inputs: &DMatrix<f64>, tape: &mut Tape) -> Result<DMatrix<f64>> {
        self.check_input(inputs.nrows())?;
        tape.clear();
        let last = self.layers.len() - 1;
        let mut x = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &x);
            tape.inputs.push(x);
            let mut a = z.clone();
            tape.pre.push(z);
            if i < last {
                self.activation.apply(&mut a);
            }
            x = a;
        }
        Ok(x)
    }

    /// Gradients of a scalar loss given `upstream = ∂loss/∂output` for the
    /// batch recorded in `tape`. Also returns `∂loss/∂input`.
    pub fn backward(&self, tape: &Tape, upstream: &DMatrix<f64>) -> Result<(GradientSet, DMatrix<f64>)> {
        if tape.is_empty() {
            return Err(Error::State("backward called before a recorded forward pass".into()));
        }
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::State(format!(
                "tape holds {} layers but network has {}",
                tape.inputs.len(),
                self.layers.len()
            )));
        }
        let batch = tape.inputs[0].ncols();
        if upstream.nrows() != self.out_dim() || upstream.ncols() != batch {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{batch}",
                upstream.nrows(),
                upstream.ncols(),
                self.out_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut weights = vec![DMatrix::zeros(0, 0); self.layers.len()];
        let mut biases = vec![DVector::zeros(0); self.layers.len()];
        let mut delta = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last && self.activation == Activation::Relu {
                delta.zip_apply(&tape.pre[i], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            weights[i] = &delta * tape.inputs[i].transpose();
            biases[i] = delta.column_sum();
            delta = self.layers[i].weight.transpose() * &delta;
        }
        Ok((GradientSet { weights, biases }, delta))
    }

    pub fn to_checkpoint(&self) -> NetCheckpoint {
        let mut params = Vec::with_capacity(2 * self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let w = &layer.weight;
            params.push(NamedParam {
                layer: i,
                name: "W".into(),
                shape: vec![w.nrows(), w.ncols()],
                values: w.transpose().as_slice().to_vec(),
            });
            params.push(NamedParam {
                layer: i,
                name: "b".into(),
                shape: vec![layer.bias.len()],
                values: layer.bias.as_slice().to_vec(),
            });
        }
        NetCheckpoint { activation: self.activation, params }
    }

    pub fn from_checkpoint(ckpt: &NetCheckpoint) -> Result<Self> {
        let n_layers = ckpt.params.iter().map(|p| p.layer + 1).max().unwrap_or(0);
        let mut weights: Vec<Option<DMatrix<f64>>> = vec![None; n_layers];
        let mut biases: Vec<Option<DVector<f64>>> = vec![None; n_layers];
        for p in &ckpt.params {
            let expected: usize = p.shape.iter().product();
            if expected != p.values.len() {
                return Err(Error::Shape(format!(
                    "parameter {}:{} has shape {:?} but {} values",
                    p.layer,
                    p.name,
                    p.shape,
                    p.values.len()
                )));
            }
            match (p.name.as_str(), p.shape.as_slice()) {
                ("W", &[rows, cols]) => weights[p.layer] = Some(DMatrix::from_row_slice(rows, cols, &p.values)),
                ("b", &[len]) => biases[p.layer] = Some(DVector::from_column_slice(&p.values[..len])),
                _ => {
                    return Err(Error::Input(format!("unexpected parameter {}:{} {:?}", p.layer, p.name, p.shape)))
                }
            }
        }
        let layers = weights
            .into_iter()
            .zip(biases)
            .enumerate()
            .map(|(i, (w, b))| match (w, b) {
                (Some(weight), Some(bias)) => Ok(Layer { weight, bias }),
                _ => Err(Error::Input(format!("layer {i} is missing W or b"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, ckpt.activation)
    }
}

/// JSON checkpoint: named parameter arrays, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub activation: Activation,
    pub params: Vec<NamedParam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub layer: usize,
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Per-parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| DMatrix::zeros(l.out_dim(), l.in_dim())).collect(),
            biases: net.layers.iter().map(|l| DVector::zeros(l.out_dim())).collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flat_map(|w| w.iter()).chain(self.biases.iter().flat_map(|b| b.iter()))
    }

    pub fn global_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    fn matches(&self, net: &DenseNet) -> bool {
        self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && net.layers.iter().zip(&self.weights).all(|(l, w)| w.shape() == l.weight.shape())
            && net.layers.iter().zip(&self.biases).all(|(l, b)| b.len() == l.bias.len())
    }
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`.
pub fn clip_gradient_norm(mut grads: GradientSet, max_norm: f64) -> GradientSet {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    grads
}

#[derive(Debug, Clone)]
pub struct AdamState {
    first: GradientSet,
    second: GradientSet,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0);
        Self {
            first: GradientSet::zeros_like(net),
            second: GradientSet::zeros_like(net),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut DenseNet, grads: &GradientSet) -> Result<()> {
        if !grads.matches(net) || !self.first.matches(net) {
            return Err(Error::Shape("gradient/optimizer shapes do not match the network".into()));
        }
        self.step += 1;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.learning_rate);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (gw, mw, vw) = (&grads.weights[i], &mut self.first.weights[i], &mut self.second.weights[i]);
            for (((p, g), m), v) in layer.weight.iter_mut().zip(gw.iter()).zip(mw.iter_mut()).zip(vw.iter_mut()) {
                update(p, *g, m, v);
            }
            let (gb, mb, vb) = (&grads.biases[i], &mut self.first.biases[i], &mut self.second.biases[i]);
            for (((p, g), m), v) in layer.bias.iter_mut().zip(gb.iter()).zip(mb.iter_mut()).zip(vb.iter_mut()) {
                update(p, *g, m, v);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn layer(w: &[f64], rows: usize, cols: usize, b: &[f64]) -> Layer {
        Layer { weight: DMatrix::from_row_slice(rows, cols, w), bias: DVector::from_column_slice(b) }
    }

    #[test]
    fn zero_weight_layer_returns_bias() {
        let net = DenseNet::from_layers(vec![layer(&[0.0; 6], 2, 3, &[0.3, -0.1])], Activation::Relu).unwrap();
        assert_eq!(net.forward(&[5.0, -2.0, 9.0]).unwrap(), vec![0.3, -0.1]);
    }

    #[test]
    fn identity_layer() {
        let net =
            DenseNet::from_layers(vec![layer(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.0, 0.0])], Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn two_layer_relu_chain_by_hand() {
        // h = relu([[1,-1],[2,0.5]]·(1,3) + (0.5,-1)) = relu(-1.5, 2.5) = (0, 2.5)
        // y = [[2,-3]]·h + 0.25 = -7.25
        let net = DenseNet::from_layers(
            vec![layer(&[1.0, -1.0, 2.0, 0.5], 2, 2, &[0.5, -1.0]), layer(&[2.0, -3.0], 1, 2, &[0.25])],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, 3.0]).unwrap(), vec![-7.25]);
    }

    #[test]
    fn dimension_errors() {
        let mut r = rng::stream(0, &[]);
        let net = DenseNet::new(&[3, 4, 2], Activation::Relu, &mut r);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape(_))));
        let bad = DenseNet::from_layers(
            vec![layer(&[0.0; 6], 2, 3, &[0.0; 2]), layer(&[0.0; 3], 1, 3, &[0.0])],
            Activation::Relu,
        );
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let mut r = rng::stream(0, &[]);
        let net = DenseNet::new(&[2, 2], Activation::Relu, &mut r);
        let err = net.backward(&Tape::default(), &DMatrix::zeros(2, 1));
        assert!(matches!(err, Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut r = rng::stream(1, &[]);
        let net = DenseNet::new(&[3, 5, 2], Activation::Relu, &mut r);
        let mut tape = Tape::default();
        let x = DMatrix::from_fn(3, 4, |_, _| r.random_range(-1.0..1.0));
        net.forward_record(&x, &mut tape).unwrap();
        let (g, dx) = net.backward(&tape, &DMatrix::zeros(2, 4)).unwrap();
        assert_eq!(g.global_norm(), 0.0);
        assert_eq!(dx.norm(), 0.0);
    }

    #[test]
    fn linear_least_squares_gradient_is_closed_form() {
        let mut r = rng::stream(2, &[]);
        let net = DenseNet::new(&[3, 2], Activation::Relu, &mut r);
        let x = DVector::from_vec(vec![0.4, -1.2, 2.0]);
        let y = DVector::from_vec(vec![0.7, -0.3]);
        let mut tape = Tape::default();
        let out = net.forward_record(&DMatrix::from_column_slice(3, 1, x.as_slice()), &mut tape).unwrap();
        let resid = DVector::from_column_slice(out.as_slice()) - &y;
        // loss = ‖Wx+b−y‖², upstream = 2(Wx+b−y)
        let (g, _) = net.backward(&tape, &DMatrix::from_column_slice(2, 1, (2.0 * &resid).as_slice())).unwrap();
        let expected = 2.0 * &resid * x.transpose();
        assert!((&g.weights[0] - expected).abs().max() < 1e-14);
        assert!((&g.biases[0] - 2.0 * resid).abs().max() < 1e-14);
    }

    #[test]
    fn clip_examples() {
        let grads = GradientSet { weights: vec![DMatrix::from_row_slice(1, 2, &[3.0, 4.0])], biases: vec![DVector::zeros(1)] };
        let clipped = clip_gradient_norm(grads, 1.0);
        assert!((clipped.weights[0][(0, 0)] - 0.6).abs() < 1e-15);
        assert!((clipped.weights[0][(0, 1)] - 0.8).abs() < 1e-15);

        let small = GradientSet { weights: vec![DMatrix::from_row_slice(1, 2, &[0.3, 0.4])], biases: vec![DVector::zeros(1)] };
        assert_eq!(clip_gradient_norm(small.clone(), 1.0), small);
    }

    #[test]
    fn clip_norm_is_min_and_idempotent() {
        let mut r = rng::stream(3, &[]);
        for _ in 0..50 {
            let net = DenseNet::new(&[4, 6, 3], Activation::Relu, &mut r);
            let mut g = GradientSet::zeros_like(&net);
            let scale = r.random_range(0.01..10.0);
            g.weights.iter_mut().for_each(|w| w.apply(|v| *v = r.random_range(-scale..scale)));
            g.biases.iter_mut().for_each(|b| b.apply(|v| *v = r.random_range(-scale..scale)));
            let before = g.global_norm();
            let once = clip_gradient_norm(g, 1.0);
            assert!((once.global_norm() - before.min(1.0)).abs() < 1e-12);
            let twice = clip_gradient_norm(once.clone(), 1.0);
            assert!((twice.global_norm() - once.global_norm()).abs() < 1e-15);
        }
    }

    fn scalar_net(theta: f64) -> DenseNet {
        DenseNet::from_layers(vec![layer(&[0.0], 1, 1, &[theta])], Activation::Identity).unwrap()
    }

    fn scalar_grad(net: &DenseNet, g: f64) -> GradientSet {
        let mut grads = GradientSet::zeros_like(net);
        grads.biases[0][0] = g;
        grads
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut net = scalar_net(1.5);
        let mut adam = AdamState::new(&net, 0.1);
        let before = net.clone();
        let g = GradientSet::zeros_like(&net);
        adam.step(&mut net, &g).unwrap();
        assert_eq!(net, before);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        for g in [1e-3, -0.5, 3.0, -1e4] {
            let mut net = scalar_net(0.0);
            let mut adam = AdamState::new(&net, 0.1);
            let grad = scalar_grad(&net, g);
            adam.step(&mut net, &grad).unwrap();
            let delta = net.layers()[0].bias[0];
            assert!((delta + 0.1 * g.signum()).abs() < 1e-6, "g={g}: {delta}");
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // Oracle: the same scalar recursion written out longhand.
        let (mut theta, mut m, mut v) = (0.0f64, 0.0, 0.0);
        let mut oracle = Vec::new();
        for t in 1..=100 {
            let g = 2.0 * (theta - 2.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            theta -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            oracle.push(theta);
        }

        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(&net, 0.1);
        let mut errs = Vec::new();
        for want in &oracle {
            let theta = net.layers()[0].bias[0];
            let grad = scalar_grad(&net, 2.0 * (theta - 2.0));
            adam.step(&mut net, &grad).unwrap();
            let now = net.layers()[0].bias[0];
            assert!((now - want).abs() < 1e-12);
            errs.push((now - 2.0).abs());
        }
        for w in errs[5..].windows(2).take(15) {
            assert!(w[1] <= w[0]);
        }
        assert!(errs[99] < 0.5);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut r = rng::stream(4, &[]);
        let net = DenseNet::new(&[5, 7, 3], Activation::Relu, &mut r);
        let json = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let back: NetCheckpoint = serde_json::from_str(&json).unwrap();
        let restored = DenseNet::from_checkpoint(&back).unwrap();
        assert_eq!(restored, net);
        assert!(json.contains("\"W\"") && json.contains("\"layer\""));
    }

    #[test]
    fn forward_is_pure() {
        let mut r = rng::stream(5, &[]);
        let net = DenseNet::new(&[3, 8, 8, 2], Activation::Relu, &mut r);
        let x = [0.1, -0.7, 0.33];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
