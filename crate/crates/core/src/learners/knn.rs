use super::{Classifier, TrainConfig};
use crate::domain::{CategoryId, FeatureMatrix, LabelSpace, LabeledDataset};

/// k-nearest neighbours under Euclidean distance.
///
/// Equal distances are ordered by training row; vote ties go to the lowest
/// category.
#[derive(Clone, Debug)]
pub struct KnnModel {
    space: LabelSpace,
    k: usize,
    points: FeatureMatrix,
    classes: Vec<usize>,
}

impl KnnModel {
    pub(crate) fn fit(data: &LabeledDataset, classes: &[usize], space: &LabelSpace, config: &TrainConfig) -> Self {
        KnnModel {
            space: space.clone(),
            k: config.k.min(data.len()),
            points: data.features().clone(),
            classes: classes.to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Classifier for KnnModel {
    fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    fn predict(&self, x: &[f64]) -> CategoryId {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter_rows()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        let mut votes = vec![0usize; self.space.len()];
        for &(_, i) in &dist[..self.k] {
            votes[self.classes[i]] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        self.space.categories()[best]
    }
}
