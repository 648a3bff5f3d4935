//! Fully connected ReLU network with a logistic output, trained by
//! mini-batch Adam on binary cross-entropy.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureMatrix;
use crate::rng::stream;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid network parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![128, 64, 32],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 50,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidParams(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// Weights are stored input-major: layer `l` maps `dims[l]` to `dims[l+1]`
/// with `weights[l]` of shape `(dims[l], dims[l+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Mean binary cross-entropy on the logistic output.
    BinaryCrossEntropy,
    /// Half mean squared error on the raw (pre-logistic) output.
    SquaredError,
}

/// Adam moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m_w: Vec<Array2<f64>>,
    pub v_w: Vec<Array2<f64>>,
    pub m_b: Vec<Array1<f64>>,
    pub v_b: Vec<Array1<f64>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &MlpModel, params: &MlpParams) -> Self {
        AdamState {
            step: 0,
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            learning_rate: params.learning_rate,
            beta1: params.beta1,
            beta2: params.beta2,
            epsilon: params.epsilon,
        }
    }

    pub fn update(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let lr = self.learning_rate;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let step = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..model.weights.len() {
            Zip::from(&mut model.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .and(&grads.w[l])
                .for_each(|p, m, v, &g| step(p, m, v, g));
            Zip::from(&mut model.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .and(&grads.b[l])
                .for_each(|p, m, v, &g| step(p, m, v, g));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

/// Intermediate values of one forward pass.
struct Trace {
    /// Layer inputs: `inputs[0]` is the batch, `inputs[l]` the activation
    /// feeding layer `l`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations per layer; the last one holds the output logits.
    pre: Vec<Array2<f64>>,
}

// Unlike f64::max this lets NaN through, so divergence surfaces in the loss.
fn relu(z: f64) -> f64 {
    if z < 0.0 {
        0.0
    } else {
        z
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl MlpModel {
    /// He-uniform weights, zero biases.
    pub fn init(n_inputs: usize, hidden: &[usize], seed: u64) -> MlpModel {
        let mut dims = vec![n_inputs];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut rng = stream(seed, "mlp-init", 0);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let limit = (6.0 / dims[l].max(1) as f64).sqrt();
            weights.push(Array2::from_shape_fn((dims[l], dims[l + 1]), |_| {
                rng.gen_range(-limit..=limit)
            }));
            biases.push(Array1::zeros(dims[l + 1]));
        }
        MlpModel {
            layer_dims: dims,
            weights,
            biases,
        }
    }

    /// All weights and biases zero.
    pub fn zeros(n_inputs: usize, hidden: &[usize]) -> MlpModel {
        let mut m = MlpModel::init(n_inputs, hidden, 0);
        m.weights.iter_mut().for_each(|w| w.fill(0.0));
        m
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn forward(&self, x: ArrayView2<f64>) -> Trace {
        let n_layers = self.weights.len();
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let z = inputs[l].dot(&self.weights[l]) + &self.biases[l];
            if l + 1 < n_layers {
                inputs.push(z.mapv(relu));
            }
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut h = x.to_owned();
        for l in 0..self.weights.len() {
            h = h.dot(&self.weights[l]) + &self.biases[l];
            if l + 1 < self.weights.len() {
                h.mapv_inplace(relu);
            }
        }
        h.column(0).to_owned()
    }

    /// Mean loss over the batch.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[f64], loss: Loss) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let z = self.logits(x);
        batch_loss(&z, y, loss)
    }

    /// Backpropagated gradients of the mean loss.
    pub fn gradients(&self, x: ArrayView2<f64>, y: &[f64], loss: Loss) -> Gradients {
        let trace = self.forward(x);
        self.backward(&trace, y, loss)
    }

    fn backward(&self, trace: &Trace, y: &[f64], loss: Loss) -> Gradients {
        let n = y.len().max(1) as f64;
        let n_layers = self.weights.len();
        let z_out = &trace.pre[n_layers - 1];
        let mut delta = Array2::from_shape_fn(z_out.raw_dim(), |(i, _)| {
            let z = z_out[(i, 0)];
            match loss {
                Loss::BinaryCrossEntropy => (sigmoid(z) - y[i]) / n,
                Loss::SquaredError => (z - y[i]) / n,
            }
        });
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            gw[l] = trace.inputs[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                Zip::from(&mut back).and(&trace.pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        Gradients { w: gw, b: gb }
    }

    /// Per-layer ReLU on/off pattern, used to spot kinks.
    fn activation_pattern(&self, x: ArrayView2<f64>) -> Vec<bool> {
        let trace = self.forward(x);
        let last = trace.pre.len() - 1;
        trace.pre[..last]
            .iter()
            .flat_map(|z| z.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect()
    }
}

fn batch_loss(z: &Array1<f64>, y: &[f64], loss: Loss) -> f64 {
    let n = y.len() as f64;
    let total: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| match loss {
            Loss::BinaryCrossEntropy => softplus(z) - y * z,
            Loss::SquaredError => 0.5 * (z - y) * (z - y),
        })
        .sum();
    total / n
}

fn view(x: &FeatureMatrix) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((x.n_rows, x.n_cols), &x.data).expect("row-major matrix")
}

fn labels_f64(y: &[bool]) -> Vec<f64> {
    y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpFit {
    pub model: MlpModel,
    /// Mean loss of the last epoch.
    pub final_loss: f64,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn fit_mlp(x: &FeatureMatrix, y: &[bool], params: &MlpParams) -> Result<MlpFit, NeuralError> {
    params.validate()?;
    if x.n_rows != y.len() {
        return Err(NeuralError::ShapeMismatch {
            expected: x.n_rows,
            got: y.len(),
        });
    }
    let mut model = MlpModel::init(x.n_cols, &params.hidden, params.seed);
    let mut adam = AdamState::new(&model, params);
    let xs = view(x);
    let ys = labels_f64(y);
    let mut order: Vec<usize> = (0..x.n_rows).collect();
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        order.shuffle(&mut stream(params.seed, "mlp-shuffle", epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(params.batch_size) {
            let xb = xs.select(Axis(0), batch);
            let yb: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let trace = model.forward(xb.view());
            let z = trace.pre.last().unwrap().column(0).to_owned();
            let l = batch_loss(&z, &yb, Loss::BinaryCrossEntropy);
            if !l.is_finite() {
                return Err(NeuralError::NonFiniteLoss { epoch });
            }
            total += l * batch.len() as f64;
            let grads = model.backward(&trace, &yb, Loss::BinaryCrossEntropy);
            adam.update(&mut model, &grads);
        }
        let mean = total / x.n_rows.max(1) as f64;
        if !mean.is_finite() {
            return Err(NeuralError::NonFiniteLoss { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(MlpFit {
        model,
        final_loss: *epoch_losses.last().unwrap_or(&0.0),
        epoch_losses,
    })
}

/// Callback probabilities, kept strictly inside (0, 1).
pub fn mlp_predict_proba(model: &MlpModel, x: &FeatureMatrix) -> Result<Vec<f64>, NeuralError> {
    if x.n_cols != model.n_inputs() {
        return Err(NeuralError::ShapeMismatch {
            expected: model.n_inputs(),
            got: x.n_cols,
        });
    }
    if x.n_rows == 0 {
        return Ok(Vec::new());
    }
    let hi = 1.0 - f64::EPSILON / 2.0;
    Ok(model
        .logits(view(x))
        .iter()
        .map(|&z| sigmoid(z).clamp(f64::MIN_POSITIVE, hi))
        .collect())
}

/// Largest relative difference between backpropagated gradients and
/// central finite differences (step 1e-5), over all parameters, using
/// `|a - n| / max(|a| + |n|, 1e-6)`. Parameters whose perturbation flips a
/// ReLU on or off are skipped, since the loss is not differentiable there.
pub fn gradient_check(model: &MlpModel, x: &FeatureMatrix, y: &[f64], loss: Loss) -> f64 {
    assert_eq!(x.n_rows, y.len());
    if x.n_rows == 0 {
        return 0.0;
    }
    const H: f64 = 1e-5;
    let xs = view(x);
    let analytic = model.gradients(xs, y, loss);
    let base_pattern = model.activation_pattern(xs);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;

    let mut check = |probe: &mut MlpModel, get: &dyn Fn(&mut MlpModel) -> &mut f64, a: f64| {
        let orig = *get(probe);
        *get(probe) = orig + H;
        let plus = probe.loss(xs, y, loss);
        let kink_plus = probe.activation_pattern(xs) != base_pattern;
        *get(probe) = orig - H;
        let minus = probe.loss(xs, y, loss);
        let kink_minus = probe.activation_pattern(xs) != base_pattern;
        *get(probe) = orig;
        if kink_plus || kink_minus {
            return;
        }
        let numeric = (plus - minus) / (2.0 * H);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    };

    for l in 0..model.weights.len() {
        let (r, c) = model.weights[l].dim();
        for i in 0..r {
            for j in 0..c {
                check(&mut probe, &|m: &mut MlpModel| &mut m.weights[l][(i, j)], analytic.w[l][(i, j)]);
            }
        }
        for j in 0..model.biases[l].len() {
            check(&mut probe, &|m: &mut MlpModel| &mut m.biases[l][j], analytic.b[l][j]);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = stream(seed, "blobs", 0);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c = if pos { 1.5 } else { -1.5 };
            rows.push(vec![c + rng.gen_range(-1.0..1.0), c + rng.gen_range(-1.0..1.0)]);
            y.push(pos);
        }
        (FeatureMatrix::from_rows(&rows), y)
    }

    #[test]
    fn zero_network_outputs_half() {
        let m = MlpModel::zeros(3, &[4, 2]);
        let x = FeatureMatrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.0, 0.0, 0.0]]);
        assert_eq!(mlp_predict_proba(&m, &x).unwrap(), vec![0.5, 0.5]);
        let mut scaled = MlpModel::init(3, &[4, 2], 1);
        scaled.weights[0].mapv_inplace(|w| 2.0 * w);
        for w in &mut scaled.weights[1..] {
            w.fill(0.0);
        }
        assert_eq!(mlp_predict_proba(&scaled, &x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn shapes_chain() {
        let m = MlpModel::init(7, &[128, 64, 32], 0);
        assert_eq!(m.layer_dims, vec![7, 128, 64, 32, 1]);
        for l in 0..m.weights.len() {
            assert_eq!(m.weights[l].dim(), (m.layer_dims[l], m.layer_dims[l + 1]));
            assert_eq!(m.biases[l].len(), m.layer_dims[l + 1]);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let (x, y) = blobs(64, 1);
        let p = MlpParams {
            learning_rate: 0.0,
            epochs: 2,
            ..MlpParams::default()
        };
        let fit = fit_mlp(&x, &y, &p).unwrap();
        assert_eq!(fit.model, MlpModel::init(2, &p.hidden, p.seed));
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(500, 2);
        let fit = fit_mlp(&x, &y, &MlpParams::default().with_seed(3)).unwrap();
        let p = mlp_predict_proba(&fit.model, &x).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, y)| (**p > 0.5) == **y).count() as f64 / 500.0;
        assert!(acc >= 0.99, "accuracy {acc}");
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn all_positive_targets() {
        let (x, _) = blobs(200, 4);
        let y = vec![true; 200];
        let fit = fit_mlp(&x, &y, &MlpParams::default()).unwrap();
        assert!(mlp_predict_proba(&fit.model, &x).unwrap().iter().all(|&p| p >= 0.9));
    }

    #[test]
    fn gradient_check_passes_at_init() {
        let (x, y) = blobs(16, 5);
        let m = MlpModel::init(2, &[6, 5, 3], 8);
        let yf = labels_f64(&y);
        assert!(gradient_check(&m, &x, &yf, Loss::BinaryCrossEntropy) < 1e-4);
        let empty = FeatureMatrix::from_rows(&[]);
        assert_eq!(gradient_check(&m, &FeatureMatrix { n_cols: 2, ..empty }, &[], Loss::BinaryCrossEntropy), 0.0);
    }

    #[test]
    fn shape_and_param_errors() {
        let (x, y) = blobs(10, 6);
        assert!(matches!(fit_mlp(&x, &y[..5], &MlpParams::default()), Err(NeuralError::ShapeMismatch { .. })));
        let bad = MlpParams {
            batch_size: 0,
            ..MlpParams::default()
        };
        assert!(matches!(fit_mlp(&x, &y, &bad), Err(NeuralError::InvalidParams(_))));
        let m = MlpModel::init(3, &[2], 0);
        assert!(matches!(mlp_predict_proba(&m, &x), Err(NeuralError::ShapeMismatch { .. })));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = blobs(64, 7);
        let p = MlpParams {
            learning_rate: 1e300,
            epochs: 5,
            ..MlpParams::default()
        };
        assert!(matches!(fit_mlp(&x, &y, &p), Err(NeuralError::NonFiniteLoss { .. })));
    }
}
