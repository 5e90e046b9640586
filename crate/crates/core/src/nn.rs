//! Minimal dense feedforward classifier: relu hidden layers, softmax output.
//!
//! Forward inference backs fitness evaluation; backprop with Adam produces
//! the parent checkpoints that get merged. All arithmetic is `f64`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Part};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Layer widths `[input, hidden..., classes]` of a dense classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    layer_widths: Vec<usize>,
    hidden_activation: Activation,
}

impl ModelSpec {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output width, got {layer_widths:?}"
            )));
        }
        if layer_widths.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "every layer width must be positive, got {layer_widths:?}"
            )));
        }
        Ok(ModelSpec {
            layer_widths,
            hidden_activation: Activation::Relu,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of dense layers (weight matrices).
    pub fn depth(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// `(fan_in, fan_out)` for each dense layer.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_widths.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().map(|(i, o)| i * o + o).sum()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.layer_widths.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Parses `2-16-16-2` or `2,16,16,2`.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let widths = s
            .split(['-', ',', 'x'])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidSpec(format!("bad layer width `{p}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        ModelSpec::new(widths)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`, row-major.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayeredParams {
    pub layers: Vec<DenseLayer>,
}

impl LayeredParams {
    pub fn zeros(spec: &ModelSpec) -> Self {
        LayeredParams {
            layers: spec
                .layer_shapes()
                .map(|(i, o)| DenseLayer {
                    weights: Array2::zeros((i, o)),
                    bias: Array1::zeros(o),
                })
                .collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(spec: &ModelSpec, rng: &mut impl rand::Rng) -> Self {
        let mut params = LayeredParams::zeros(spec);
        for layer in &mut params.layers {
            let (fan_in, fan_out) = layer.weights.dim();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
        }
        params
    }

    pub fn check_shapes(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.depth() {
            return Err(Error::shape(
                "parameters",
                format!("{} layers", spec.depth()),
                format!("{} layers", self.layers.len()),
            ));
        }
        for (layer, (i, o)) in self.layers.iter().zip(spec.layer_shapes()) {
            if layer.weights.dim() != (i, o) || layer.bias.len() != o {
                return Err(Error::shape(
                    "parameters",
                    format!("{i}x{o} weights + {o} bias"),
                    format!(
                        "{}x{} weights + {} bias",
                        layer.weights.nrows(),
                        layer.weights.ncols(),
                        layer.bias.len()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            epochs: 50,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return bad("adam_beta1 must lie in (0, 1)");
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam_beta2 must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

fn check_batch(params: &LayeredParams, spec: &ModelSpec, batch: &ArrayView2<f64>) -> Result<()> {
    params.check_shapes(spec)?;
    if batch.ncols() != spec.input_dim() {
        return Err(Error::shape(
            "input batch",
            format!("{} columns", spec.input_dim()),
            format!("{} columns", batch.ncols()),
        ));
    }
    Ok(())
}

fn relu_in_place(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| v.max(0.0));
}

fn logits(params: &LayeredParams, batch: ArrayView2<f64>) -> Array2<f64> {
    let last = params.layers.len() - 1;
    let mut a = batch.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = a.dot(&layer.weights) + &layer.bias;
        if l != last {
            relu_in_place(&mut z);
        }
        a = z;
    }
    a
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Class probabilities for every row of `batch`.
pub fn forward(
    params: &LayeredParams,
    spec: &ModelSpec,
    batch: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_batch(params, spec, &batch)?;
    let mut out = logits(params, batch);
    softmax_rows(&mut out);
    Ok(out)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(
    params: &LayeredParams,
    spec: &ModelSpec,
    features: ArrayView2<f64>,
    labels: &[usize],
) -> Result<f64> {
    if labels.is_empty() || features.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != features.nrows() {
        return Err(Error::shape(
            "labels",
            format!("{} labels", features.nrows()),
            format!("{} labels", labels.len()),
        ));
    }
    let probs = forward(params, spec, features)?;
    let correct = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Pairwise summation; the result depends only on the order of `values`.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean cross-entropy over the batch and its gradient with respect to every
/// parameter.
pub fn loss_and_gradient(
    params: &LayeredParams,
    spec: &ModelSpec,
    batch_x: ArrayView2<f64>,
    batch_y: &[usize],
) -> Result<(f64, LayeredParams)> {
    check_batch(params, spec, &batch_x)?;
    let n = batch_x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if batch_y.len() != n {
        return Err(Error::shape(
            "labels",
            format!("{n} labels"),
            format!("{} labels", batch_y.len()),
        ));
    }
    let classes = spec.num_classes();
    if let Some(&bad) = batch_y.iter().find(|&&y| y >= classes) {
        return Err(Error::shape(
            "labels",
            format!("labels below {classes}"),
            format!("label {bad}"),
        ));
    }

    let last = params.layers.len() - 1;
    // inputs[l] feeds layer l; pre[l] is its pre-activation.
    let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    let mut a = batch_x.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let z = a.dot(&layer.weights) + &layer.bias;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: l });
        }
        let mut next = z.clone();
        if l != last {
            relu_in_place(&mut next);
        }
        inputs.push(a);
        pre.push(z);
        a = next;
    }

    // log-softmax keeps the loss finite even for saturated logits
    let z_out = &pre[last];
    let mut probs = Array2::<f64>::zeros(z_out.dim());
    let mut per_sample = Vec::with_capacity(n);
    for (i, row) in z_out.rows().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        per_sample.push(lse - row[batch_y[i]]);
        for (j, &v) in row.iter().enumerate() {
            probs[[i, j]] = (v - lse).exp();
        }
    }
    let loss = pairwise_sum(&per_sample) / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: last });
    }

    let mut delta = probs;
    for (i, &y) in batch_y.iter().enumerate() {
        delta[[i, y]] -= 1.0;
    }
    delta.mapv_inplace(|v| v / n as f64);

    let mut grads: Vec<DenseLayer> = Vec::with_capacity(params.layers.len());
    for l in (0..params.layers.len()).rev() {
        let weights_grad = inputs[l].t().dot(&delta);
        let bias_grad = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&params.layers[l].weights.t());
            Zip::from(&mut back).and(&pre[l - 1]).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
        grads.push(DenseLayer {
            weights: weights_grad,
            bias: bias_grad,
        });
    }
    grads.reverse();
    Ok((loss, LayeredParams { layers: grads }))
}

struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    learning_rate: f64,
    step: i32,
    first: LayeredParams,
    second: LayeredParams,
}

impl Adam {
    fn new(spec: &ModelSpec, cfg: &TrainConfig) -> Self {
        Adam {
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            epsilon: cfg.adam_epsilon,
            learning_rate: cfg.learning_rate,
            step: 0,
            first: LayeredParams::zeros(spec),
            second: LayeredParams::zeros(spec),
        }
    }

    fn update(&mut self, params: &mut LayeredParams, grad: &LayeredParams) {
        self.step += 1;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..params.layers.len() {
            let (p, m, v, g) = (
                &mut params.layers[l],
                &mut self.first.layers[l],
                &mut self.second.layers[l],
                &grad.layers[l],
            );
            Zip::from(&mut p.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(apply);
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(apply);
        }
    }
}

/// The seeded initialization `train` starts from.
pub fn init_params(spec: &ModelSpec, seed: u64) -> LayeredParams {
    LayeredParams::glorot(spec, &mut stream(seed, Stream::WeightInit))
}

/// Mini-batch Adam on the training partition. Pure in `(spec, dataset, cfg)`.
pub fn train(spec: &ModelSpec, dataset: &Dataset, cfg: &TrainConfig) -> Result<LayeredParams> {
    cfg.validate()?;
    if dataset.feature_dim() != spec.input_dim() {
        return Err(Error::shape(
            "dataset features",
            format!("{} columns", spec.input_dim()),
            format!("{} columns", dataset.feature_dim()),
        ));
    }
    if dataset.num_classes() > spec.num_classes() {
        return Err(Error::shape(
            "dataset labels",
            format!("at most {} classes", spec.num_classes()),
            format!("{} classes", dataset.num_classes()),
        ));
    }
    let (x, y) = dataset.part(Part::Train);
    if y.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }

    let mut params = init_params(spec, cfg.seed);
    let mut order_rng = stream(cfg.seed, Stream::DataOrder);
    let mut adam = Adam::new(spec, cfg);
    let mut order: Vec<usize> = (0..y.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grad) = match loss_and_gradient(&params, spec, bx.view(), &by) {
                Ok(ok) => ok,
                Err(Error::NonFinite { .. }) => return Err(Error::Divergence { epoch }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            adam.update(&mut params, &grad);
        }
        if !params.is_finite() {
            return Err(Error::Divergence { epoch });
        }
    }
    Ok(params)
}
