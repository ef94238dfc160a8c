use super::{argmax_lowest, Classifier, TrainConfig};
use crate::domain::{CategoryId, LabelSpace, LabeledDataset};

/// Gaussian naive Bayes. Variances are smoothed by `var_smoothing` times the
/// largest per-feature variance of the training set. Classes with no
/// training instances are never predicted.
#[derive(Clone, Debug)]
pub struct NaiveBayesModel {
    space: LabelSpace,
    log_prior: Vec<f64>,
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

impl NaiveBayesModel {
    pub(crate) fn fit(data: &LabeledDataset, classes: &[usize], space: &LabelSpace, config: &TrainConfig) -> Self {
        let k = space.len();
        let d = data.dim();
        let n = data.len() as f64;
        let mut count = vec![0usize; k];
        let mut mean = vec![vec![0.0; d]; k];
        for (row, &c) in data.features().iter_rows().zip(classes) {
            count[c] += 1;
            for (m, v) in mean[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for c in 0..k {
            if count[c] > 0 {
                mean[c].iter_mut().for_each(|m| *m /= count[c] as f64);
            }
        }
        let mut var = vec![vec![0.0; d]; k];
        for (row, &c) in data.features().iter_rows().zip(classes) {
            for ((s, v), m) in var[c].iter_mut().zip(row).zip(&mean[c]) {
                *s += (v - m) * (v - m);
            }
        }

        // Global feature variance sets the smoothing floor.
        let mut global_mean = vec![0.0; d];
        for row in data.features().iter_rows() {
            for (m, v) in global_mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let v = data
                .features()
                .iter_rows()
                .map(|r| (r[j] - global_mean[j]).powi(2))
                .sum::<f64>()
                / n;
            max_var = max_var.max(v);
        }
        let floor = (config.var_smoothing * max_var).max(1e-12);

        for c in 0..k {
            let cnt = count[c].max(1) as f64;
            var[c].iter_mut().for_each(|s| *s = *s / cnt + floor);
        }
        let log_prior = count
            .iter()
            .map(|&c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / n).ln() })
            .collect();
        NaiveBayesModel {
            space: space.clone(),
            log_prior,
            mean,
            var,
        }
    }

    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        (0..self.space.len())
            .map(|c| {
                if self.log_prior[c] == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let ll: f64 = x
                    .iter()
                    .zip(&self.mean[c])
                    .zip(&self.var[c])
                    .map(|((v, m), s)| -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - m) * (v - m) / s))
                    .sum();
                self.log_prior[c] + ll
            })
            .collect()
    }
}

impl Classifier for NaiveBayesModel {
    fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    fn predict(&self, x: &[f64]) -> CategoryId {
        self.space.categories()[argmax_lowest(&self.log_joint(x))]
    }
}
