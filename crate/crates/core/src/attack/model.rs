//! A small softmax classifier: multinomial logistic regression, or one tanh
//! hidden layer in front of it. Trained by full-batch gradient descent on the
//! mean negative log-likelihood.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::PointSet;
use crate::rng::{stream_rng, STREAM_MODEL_INIT};

/// Dense affine layer, weights row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }

    /// `Wᵀ · delta`.
    fn backward_input(&self, delta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.inputs];
        for (o, &dl) in delta.iter().enumerate() {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (gi, wi) in g.iter_mut().zip(w) {
                *gi += wi * dl;
            }
        }
        g
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::Validation("layer shape does not match its parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub input_dim: usize,
    pub n_classes: usize,
    /// Optional tanh layer before the softmax layer.
    pub hidden: Option<Layer>,
    pub output: Layer,
}

/// Intermediate values of one forward pass.
struct Forward {
    hidden: Option<Vec<f64>>,
    probs: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

impl ClassifierModel {
    /// Checks internal shape consistency, e.g. after deserialising.
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Validation("a classifier needs at least two classes".into()));
        }
        self.output.check()?;
        let out_inputs = match &self.hidden {
            Some(h) => {
                h.check()?;
                if h.inputs != self.input_dim {
                    return Err(Error::Validation("hidden layer input size mismatch".into()));
                }
                h.outputs
            }
            None => self.input_dim,
        };
        if self.output.inputs != out_inputs || self.output.outputs != self.n_classes {
            return Err(Error::Validation("output layer shape mismatch".into()));
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let mut buf = Vec::new();
        let hidden = self.hidden.as_ref().map(|h| {
            h.forward(x, &mut buf);
            buf.iter().map(|v| v.tanh()).collect::<Vec<_>>()
        });
        let mut logits = Vec::with_capacity(self.n_classes);
        self.output.forward(hidden.as_deref().unwrap_or(x), &mut logits);
        Forward {
            probs: softmax(&logits),
            hidden,
        }
    }

    pub fn predict_proba_f64(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).probs
    }

    pub fn predict_proba(&self, x: &[f32]) -> Vec<f64> {
        self.predict_proba_f64(&to_f64(x))
    }

    pub fn predict(&self, x: &[f32]) -> u32 {
        argmax(&self.predict_proba(x))
    }

    /// Negative log-likelihood of `label` at `x`.
    pub fn loss_f64(&self, x: &[f64], label: u32) -> f64 {
        -self.forward(x).probs[label as usize].max(f64::MIN_POSITIVE).ln()
    }

    /// Gradient of the negative log-likelihood with respect to the input.
    pub fn input_gradient_f64(&self, x: &[f64], label: u32) -> Vec<f64> {
        let f = self.forward(x);
        let mut delta = f.probs;
        delta[label as usize] -= 1.0;
        let g = self.output.backward_input(&delta);
        match (&self.hidden, &f.hidden) {
            (Some(h), Some(act)) => {
                let dh: Vec<f64> = g.iter().zip(act).map(|(g, a)| g * (1.0 - a * a)).collect();
                h.backward_input(&dh)
            }
            _ => g,
        }
    }

    pub fn input_gradient(&self, x: &[f32], label: u32) -> Vec<f64> {
        self.input_gradient_f64(&to_f64(x), label)
    }

    pub fn check_input(&self, ps: &PointSet) -> Result<()> {
        if ps.d() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: ps.d(),
            });
        }
        if let Some(bad) = ps.labels().and_then(|l| l.iter().find(|&&l| l as usize >= self.n_classes)) {
            return Err(Error::Validation(format!(
                "label {bad} outside the model's {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Fraction of labelled rows predicted correctly.
    pub fn accuracy(&self, ps: &PointSet) -> Result<f64> {
        self.check_input(ps)?;
        let labels = ps.require_labels("accuracy")?;
        if labels.is_empty() {
            return Ok(0.0);
        }
        let correct = ps
            .rows()
            .zip(labels)
            .filter(|(x, &y)| self.predict(x) == y)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }
}

pub(crate) fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

pub(crate) fn argmax(p: &[f64]) -> u32 {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0 as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Width of the tanh hidden layer; 0 trains plain logistic regression.
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.5,
            hidden_width: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: ClassifierModel,
    /// Mean training loss before each update, one entry per epoch.
    pub losses: Vec<f64>,
    /// Training accuracy of the final model.
    pub accuracy: f64,
}

fn init_layer(inputs: usize, outputs: usize, std: f64, rng: &mut impl rand::Rng) -> Layer {
    let normal = Normal::new(0.0, std).expect("positive std");
    Layer {
        inputs,
        outputs,
        weights: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
        bias: vec![0.0; outputs],
    }
}

/// Full-batch gradient descent on the mean negative log-likelihood.
/// The class count is `max label + 1`, and every class must be present.
pub fn train_classifier(train: &PointSet, config: &TrainConfig) -> Result<Training> {
    let labels = train.require_labels("training")?;
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut present = vec![false; n_classes];
    for &l in labels {
        present[l as usize] = true;
    }
    if n_classes < 2 || present.iter().any(|p| !p) {
        return Err(Error::Validation(format!(
            "training labels must cover at least two classes 0..{n_classes} with no gaps"
        )));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let d = train.d();
    let mut rng = stream_rng(config.seed, STREAM_MODEL_INIT);
    let hidden = (config.hidden_width > 0)
        .then(|| init_layer(d, config.hidden_width, 1.0 / (d as f64).sqrt(), &mut rng));
    let out_in = if config.hidden_width > 0 { config.hidden_width } else { d };
    let mut model = ClassifierModel {
        input_dim: d,
        n_classes,
        output: init_layer(out_in, n_classes, 0.01, &mut rng),
        hidden,
    };
    let xs: Vec<Vec<f64>> = train.rows().map(to_f64).collect();
    let n = xs.len() as f64;
    let mut losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut g_out_w = vec![0.0; model.output.weights.len()];
        let mut g_out_b = vec![0.0; n_classes];
        let mut g_hid = model
            .hidden
            .as_ref()
            .map(|h| (vec![0.0; h.weights.len()], vec![0.0; h.outputs]));
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            let f = model.forward(x);
            loss -= f.probs[y as usize].max(f64::MIN_POSITIVE).ln();
            let mut delta = f.probs;
            delta[y as usize] -= 1.0;
            let act = f.hidden.as_deref().unwrap_or(x);
            for (o, &dl) in delta.iter().enumerate() {
                g_out_b[o] += dl;
                let row = &mut g_out_w[o * out_in..(o + 1) * out_in];
                for (g, a) in row.iter_mut().zip(act) {
                    *g += dl * a;
                }
            }
            if let (Some(h), Some((gw, gb)), Some(a)) = (&model.hidden, g_hid.as_mut(), &f.hidden) {
                let back = model.output.backward_input(&delta);
                for (j, (b, a)) in back.iter().zip(a).enumerate() {
                    let dh = b * (1.0 - a * a);
                    gb[j] += dh;
                    for (g, xi) in gw[j * h.inputs..(j + 1) * h.inputs].iter_mut().zip(x) {
                        *g += dh * xi;
                    }
                }
            }
        }
        losses.push(loss / n);
        let step = config.learning_rate / n;
        for (w, g) in model.output.weights.iter_mut().zip(&g_out_w) {
            *w -= step * g;
        }
        for (b, g) in model.output.bias.iter_mut().zip(&g_out_b) {
            *b -= step * g;
        }
        if let (Some(h), Some((gw, gb))) = (model.hidden.as_mut(), g_hid) {
            for (w, g) in h.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in h.bias.iter_mut().zip(&gb) {
                *b -= step * g;
            }
        }
    }
    let accuracy = model.accuracy(train)?;
    Ok(Training {
        model,
        losses,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::data::make_blobs;

    #[test]
    fn probabilities_sum_to_one() {
        let train = make_blobs(60, 3, 3, 8.0, 2).unwrap();
        for hidden_width in [0, 5] {
            let t = train_classifier(&train, &TrainConfig { epochs: 3, hidden_width, ..Default::default() }).unwrap();
            for x in train.rows() {
                let p = t.model.predict_proba(x);
                assert_eq!(p.len(), 3);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let ps = PointSet::new(vec![0.0, 1.0, 2.0], 1, Some(vec![0, 0, 0])).unwrap();
        assert!(train_classifier(&ps, &TrainConfig::default()).is_err());
        let gap = PointSet::new(vec![0.0, 1.0, 2.0], 1, Some(vec![0, 2, 2])).unwrap();
        assert!(train_classifier(&gap, &TrainConfig::default()).is_err());
        assert!(train_classifier(&ps.without_labels(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn separable_blobs_train_to_high_accuracy() {
        for seed in 0..5 {
            let train = make_blobs(400, 4, 2, 10.0, seed).unwrap();
            for hidden_width in [0, 8] {
                let cfg = TrainConfig { seed, hidden_width, ..Default::default() };
                let t = train_classifier(&train, &cfg).unwrap();
                assert!(t.accuracy >= 0.95, "seed {seed} width {hidden_width}: {}", t.accuracy);
            }
        }
    }

    #[test]
    fn loss_decreases_early() {
        let train = make_blobs(300, 5, 3, 10.0, 4).unwrap();
        for hidden_width in [0, 8] {
            let cfg = TrainConfig { epochs: 11, hidden_width, ..Default::default() };
            let t = train_classifier(&train, &cfg).unwrap();
            assert!(t.losses.windows(2).all(|w| w[1] < w[0]), "{:?}", t.losses);
        }
    }

    #[test]
    fn serde_round_trip_validates() {
        let train = make_blobs(40, 2, 2, 10.0, 1).unwrap();
        let t = train_classifier(&train, &TrainConfig { epochs: 2, hidden_width: 3, ..Default::default() }).unwrap();
        let json = serde_json::to_string(&t.model).unwrap();
        let back: ClassifierModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t.model);
        back.validate().unwrap();
        let mut broken = back;
        broken.output.bias.pop();
        assert!(broken.validate().is_err());
    }
}
