use rand_distr::{Distribution, Normal};

use super::optim::{minibatches, softmax, Adam};
use super::{argmax_lowest, Classifier, Phase, Standardizer, TrainConfig};
use crate::domain::{CategoryId, LabelSpace, LabeledDataset};
use crate::seed;

/// Multinomial logistic regression trained by minibatch gradient descent.
#[derive(Clone, Debug)]
pub struct LogisticModel {
    space: LabelSpace,
    standardizer: Standardizer,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    dim: usize,
}

impl LogisticModel {
    pub(crate) fn fit(
        data: &LabeledDataset,
        classes: &[usize],
        space: &LabelSpace,
        config: &TrainConfig,
        phase: Phase,
        seed: u64,
    ) -> Self {
        let k = space.len();
        let d = data.dim();
        let standardizer = Standardizer::fit(data.features());
        let x = standardizer.transform(data.features());
        let mut rng = seed::rng(seed);

        // Parameters: weights then bias, flattened for the optimizer.
        let init = Normal::new(0.0, 0.01).expect("valid normal");
        let mut params: Vec<f64> = (0..k * d).map(|_| init.sample(&mut rng)).collect();
        params.extend(std::iter::repeat_n(0.0, k));
        let mut grad = vec![0.0; params.len()];
        let mut adam = Adam::new(params.len(), config.learning_rate);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let batch = config.batch_for(phase, data.len());
        let mut z = vec![0.0; k];

        if k > 1 {
            for _ in 0..config.epochs {
                for mb in minibatches(&mut order, batch, &mut rng) {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let scale = 1.0 / mb.len() as f64;
                    for &i in &mb {
                        let xi = x.row(i);
                        for c in 0..k {
                            let w = &params[c * d..(c + 1) * d];
                            z[c] = w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + params[k * d + c];
                        }
                        softmax(&mut z);
                        z[classes[i]] -= 1.0;
                        for c in 0..k {
                            let gc = z[c] * scale;
                            for j in 0..d {
                                grad[c * d + j] += gc * xi[j];
                            }
                            grad[k * d + c] += gc;
                        }
                    }
                    for j in 0..k * d {
                        grad[j] += config.l2 * params[j];
                    }
                    adam.step(&mut params, &grad);
                }
            }
        }

        let bias = params.split_off(k * d);
        LogisticModel {
            space: space.clone(),
            standardizer,
            weights: params,
            bias,
            dim: d,
        }
    }

    /// Builds a model from explicit parameters over raw (unstandardized)
    /// features.
    pub fn from_parameters(space: LabelSpace, weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Self {
        assert_eq!(weights.len(), space.len());
        assert_eq!(bias.len(), space.len());
        let dim = weights.first().map_or(0, Vec::len);
        LogisticModel {
            standardizer: Standardizer::identity(dim),
            space,
            weights: weights.concat(),
            bias,
            dim,
        }
    }

    /// Class scores (logits) for `x`, in label-space order.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut xs = Vec::with_capacity(self.dim);
        self.standardizer.apply(x, &mut xs);
        (0..self.space.len())
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                w.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>() + self.bias[c]
            })
            .collect()
    }

    /// Weights and bias expressed over raw features: `w_raw = w / scale`,
    /// `b_raw = b - sum(w * mean / scale)`.
    pub fn raw_parameters(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for c in 0..self.space.len() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            let raw: Vec<f64> = w.iter().zip(&self.standardizer.scale).map(|(a, s)| a / s).collect();
            let shift: f64 = raw.iter().zip(&self.standardizer.mean).map(|(a, m)| a * m).sum();
            ws.push(raw);
            bs.push(self.bias[c] - shift);
        }
        (ws, bs)
    }
}

impl Classifier for LogisticModel {
    fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    fn predict(&self, x: &[f64]) -> CategoryId {
        self.space.categories()[argmax_lowest(&self.logits(x))]
    }
}
