//! Reference classifier: softmax regression with an optional rectified hidden layer.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense layer `y = W x + b` with momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub weight_velocity: Array2<f64>,
    pub bias_velocity: Array1<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            weight_velocity: Array2::zeros((outputs, inputs)),
            bias_velocity: Array1::zeros(outputs),
        }
    }

    fn random(inputs: usize, outputs: usize, std: f64, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut layer = Self::zeros(inputs, outputs);
        layer.weight.mapv_inplace(|_| normal.sample(rng.raw()));
        layer
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Gradient of the mean cross-entropy, laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: Option<(Array2<f64>, Array1<f64>)>,
    pub output: (Array2<f64>, Array1<f64>),
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        let (w, b) = &self.output;
        let mut ok = w.iter().chain(b.iter()).all(|v| v.is_finite());
        if let Some((w, b)) = &self.hidden {
            ok &= w.iter().chain(b.iter()).all(|v| v.is_finite());
        }
        ok
    }

    /// Flattened in the same order as [`ModelParams::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some((w, b)) = &self.hidden {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(self.output.0.iter());
        out.extend(self.output.1.iter());
        out
    }
}

/// Weights of the reference model. With `hidden = None` this is plain
/// multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hidden: Option<Layer>,
    pub output: Layer,
}

/// Forward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub probs: Array2<f64>,
    /// Hidden activations, or the inputs themselves without a hidden layer.
    pub embeddings: Array2<f64>,
    /// Per-row `-ln p(label)` when labels were supplied.
    pub losses: Vec<f64>,
    pre_activation: Option<Array2<f64>>,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
}

impl ModelParams {
    /// All-zero parameters (uniform predictions).
    pub fn zeros(dim: usize, hidden: usize, classes: usize) -> Self {
        let (hidden_layer, out_in) = if hidden > 0 {
            (Some(Layer::zeros(dim, hidden)), hidden)
        } else {
            (None, dim)
        };
        Self {
            hidden: hidden_layer,
            output: Layer::zeros(out_in, classes),
        }
    }

    /// He-initialized hidden layer, small Gaussian output layer, zero biases.
    pub fn init(dim: usize, hidden: usize, classes: usize, rng: &mut Rng) -> Self {
        if hidden > 0 {
            Self {
                hidden: Some(Layer::random(dim, hidden, (2.0 / dim as f64).sqrt(), rng)),
                output: Layer::random(hidden, classes, (1.0 / hidden as f64).sqrt(), rng),
            }
        } else {
            Self {
                hidden: None,
                output: Layer::random(dim, classes, 0.01, rng),
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.hidden {
            Some(h) => h.weight.ncols(),
            None => self.output.weight.ncols(),
        }
    }

    pub fn classes(&self) -> usize {
        self.output.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.hidden.as_ref().map_or(0, Layer::param_count) + self.output.param_count()
    }

    pub fn is_finite(&self) -> bool {
        let layer_ok = |l: &Layer| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite());
        layer_ok(&self.output) && self.hidden.as_ref().is_none_or(layer_ok)
    }

    /// Probabilities and embedding for one input.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        let batch = x.insert_axis(Axis(0));
        let out = self.forward_batch(batch, None);
        Ok((out.probs.row(0).to_owned(), out.embeddings.row(0).to_owned()))
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>, labels: Option<&[usize]>) -> BatchForward {
        let (embeddings, pre) = match &self.hidden {
            Some(h) => {
                let pre = x.dot(&h.weight.t()) + &h.bias;
                (pre.mapv(|z| z.max(0.0)), Some(pre))
            }
            None => (x.to_owned(), None),
        };
        let logits = embeddings.dot(&self.output.weight.t()) + &self.output.bias;
        let mut log_probs = logits.clone();
        for mut row in log_probs.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|z| z - lse);
        }
        let mut probs = logits;
        softmax_rows(&mut probs);
        let losses = labels
            .map(|ls| ls.iter().enumerate().map(|(i, &y)| -log_probs[[i, y]]).collect())
            .unwrap_or_default();
        BatchForward {
            probs,
            embeddings,
            losses,
            pre_activation: pre,
        }
    }

    /// Mean cross-entropy over the rows of `x` and its gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Gradients, Vec<f64>) {
        let batch = x.nrows() as f64;
        let fwd = self.forward_batch(x, Some(labels));
        let mut dlogits = fwd.probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            dlogits[[i, y]] -= 1.0;
        }
        dlogits /= batch;
        let grad_out_w = dlogits.t().dot(&fwd.embeddings);
        let grad_out_b = dlogits.sum_axis(Axis(0));
        let hidden = match (&self.hidden, &fwd.pre_activation) {
            (Some(_), Some(pre)) => {
                let mut dh = dlogits.dot(&self.output.weight);
                dh.zip_mut_with(pre, |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                Some((dh.t().dot(&x), dh.sum_axis(Axis(0))))
            }
            _ => None,
        };
        let loss = fwd.losses.iter().sum::<f64>() / batch;
        (
            loss,
            Gradients {
                hidden,
                output: (grad_out_w, grad_out_b),
            },
            fwd.losses,
        )
    }

    /// Heavy-ball update: `v ← momentum·v + g + weight_decay·w`, `w ← w − lr·v`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64, momentum: f64, weight_decay: f64) {
        fn update(layer: &mut Layer, gw: &Array2<f64>, gb: &Array1<f64>, lr: f64, mu: f64, wd: f64) {
            ndarray::Zip::from(&mut layer.weight)
                .and(&mut layer.weight_velocity)
                .and(gw)
                .for_each(|w, v, &g| {
                    *v = mu * *v + g + wd * *w;
                    *w -= lr * *v;
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut layer.bias_velocity)
                .and(gb)
                .for_each(|w, v, &g| {
                    *v = mu * *v + g + wd * *w;
                    *w -= lr * *v;
                });
        }
        if let (Some(layer), Some((gw, gb))) = (self.hidden.as_mut(), grads.hidden.as_ref()) {
            update(layer, gw, gb, lr, momentum, weight_decay);
        }
        update(
            &mut self.output,
            &grads.output.0,
            &grads.output.1,
            lr,
            momentum,
            weight_decay,
        );
    }

    /// Parameters flattened as hidden weight, hidden bias, output weight, output bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        if let Some(h) = &self.hidden {
            out.extend(h.weight.iter());
            out.extend(h.bias.iter());
        }
        out.extend(self.output.weight.iter());
        out.extend(self.output.bias.iter());
        out
    }

    /// Inverse of [`flat_params`](Self::flat_params).
    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut rest = flat;
        let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for v in dst {
                *v = rest[0];
                rest = &rest[1..];
            }
        };
        if let Some(h) = self.hidden.as_mut() {
            fill(&mut h.weight.iter_mut());
            fill(&mut h.bias.iter_mut());
        }
        fill(&mut self.output.weight.iter_mut());
        fill(&mut self.output.bias.iter_mut());
    }

    /// Rectified hidden activations (or `|x|` without a hidden layer) for every row.
    pub fn rectified_features(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match &self.hidden {
            Some(_) => self.forward_batch(x, None).embeddings,
            None => x.mapv(f64::abs),
        }
    }
}

/// Take rows `idx` of `m`.
pub(crate) fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), m.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.slice_mut(s![r, ..]).assign(&m.row(i));
    }
    out
}
