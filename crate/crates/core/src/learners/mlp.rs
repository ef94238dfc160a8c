use rand_distr::{Distribution, Uniform};

use super::optim::{minibatches, softmax, Adam};
use super::{argmax_lowest, Classifier, Phase, Standardizer, TrainConfig};
use crate::domain::{CategoryId, LabelSpace, LabeledDataset};
use crate::seed;

/// One hidden tanh layer followed by a softmax output, trained with Adam on
/// cross-entropy.
#[derive(Clone, Debug)]
pub struct MlpModel {
    space: LabelSpace,
    standardizer: Standardizer,
    dim: usize,
    hidden: usize,
    /// Layout: w1 (hidden x dim), b1 (hidden), w2 (classes x hidden), b2 (classes).
    params: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

fn offsets(d: usize, h: usize, k: usize) -> Offsets {
    let w1 = 0;
    let b1 = w1 + h * d;
    let w2 = b1 + h;
    let b2 = w2 + k * h;
    Offsets {
        w1,
        b1,
        w2,
        b2,
        total: b2 + k,
    }
}

fn forward(p: &[f64], o: &Offsets, d: usize, h: usize, k: usize, x: &[f64], hid: &mut [f64], out: &mut [f64]) {
    for u in 0..h {
        let w = &p[o.w1 + u * d..o.w1 + (u + 1) * d];
        let a = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + p[o.b1 + u];
        hid[u] = a.tanh();
    }
    for c in 0..k {
        let w = &p[o.w2 + c * h..o.w2 + (c + 1) * h];
        out[c] = w.iter().zip(hid.iter()).map(|(a, b)| a * b).sum::<f64>() + p[o.b2 + c];
    }
}

impl MlpModel {
    pub(crate) fn fit(
        data: &LabeledDataset,
        classes: &[usize],
        space: &LabelSpace,
        config: &TrainConfig,
        phase: Phase,
        seed: u64,
    ) -> Self {
        let d = data.dim();
        let h = config.hidden;
        let k = space.len();
        let o = offsets(d, h, k);
        let standardizer = Standardizer::fit(data.features());
        let x = standardizer.transform(data.features());
        let mut rng = seed::rng(seed);

        let mut params = vec![0.0; o.total];
        let lim1 = (6.0 / (d + h) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-lim1, lim1).expect("valid range");
        params[o.w1..o.b1].iter_mut().for_each(|w| *w = u1.sample(&mut rng));
        let lim2 = (6.0 / (h + k) as f64).sqrt();
        let u2 = Uniform::new_inclusive(-lim2, lim2).expect("valid range");
        params[o.w2..o.b2].iter_mut().for_each(|w| *w = u2.sample(&mut rng));

        let mut grad = vec![0.0; o.total];
        let mut adam = Adam::new(o.total, config.learning_rate);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let batch = config.batch_for(phase, data.len());
        let mut hid = vec![0.0; h];
        let mut out = vec![0.0; k];
        let mut dhid = vec![0.0; h];

        if k > 1 {
            for _ in 0..config.epochs {
                for mb in minibatches(&mut order, batch, &mut rng) {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let scale = 1.0 / mb.len() as f64;
                    for &i in &mb {
                        let xi = x.row(i);
                        forward(&params, &o, d, h, k, xi, &mut hid, &mut out);
                        softmax(&mut out);
                        out[classes[i]] -= 1.0;
                        dhid.iter_mut().for_each(|v| *v = 0.0);
                        for c in 0..k {
                            let gc = out[c] * scale;
                            for u in 0..h {
                                grad[o.w2 + c * h + u] += gc * hid[u];
                                dhid[u] += gc * params[o.w2 + c * h + u];
                            }
                            grad[o.b2 + c] += gc;
                        }
                        for u in 0..h {
                            let g = dhid[u] * (1.0 - hid[u] * hid[u]);
                            for j in 0..d {
                                grad[o.w1 + u * d + j] += g * xi[j];
                            }
                            grad[o.b1 + u] += g;
                        }
                    }
                    for j in (o.w1..o.b1).chain(o.w2..o.b2) {
                        grad[j] += config.l2 * params[j];
                    }
                    adam.step(&mut params, &grad);
                }
            }
        }

        MlpModel {
            space: space.clone(),
            standardizer,
            dim: d,
            hidden: h,
            params,
        }
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let k = self.space.len();
        let o = offsets(self.dim, self.hidden, k);
        let mut xs = Vec::with_capacity(self.dim);
        self.standardizer.apply(x, &mut xs);
        let mut hid = vec![0.0; self.hidden];
        let mut out = vec![0.0; k];
        forward(&self.params, &o, self.dim, self.hidden, k, &xs, &mut hid, &mut out);
        out
    }
}

impl Classifier for MlpModel {
    fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    fn predict(&self, x: &[f64]) -> CategoryId {
        self.space.categories()[argmax_lowest(&self.scores(x))]
    }
}
