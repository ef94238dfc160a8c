//! Construction of the public unlabeled dataset.
//!
//! Generation is sequential in a single RNG stream, so for a fixed seed the
//! dataset of size `m` is always a prefix of the dataset of size `m' > m`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::taxonomy::SubclassTaxonomy;
use super::types::{FeatureMatrix, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_MARGIN: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum UnlabeledStrategy {
    /// Samples from taxonomy clusters that never enter any local dataset.
    FromHeldOutSubclasses,
    /// Uniform samples in the pool's bounding box, widened by `margin` of
    /// the extent on each side of every axis.
    UniformRandomValid {
        #[serde(default = "default_margin")]
        margin: f64,
    },
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

impl Default for UnlabeledStrategy {
    fn default() -> Self {
        UnlabeledStrategy::UniformRandomValid { margin: DEFAULT_MARGIN }
    }
}

/// Per-axis closed interval box.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn of(features: &FeatureMatrix) -> Result<Bounds> {
        if features.rows() == 0 {
            return Err(Error::EmptyDataset("cannot bound an empty feature matrix".into()));
        }
        let mut lo = vec![f64::INFINITY; features.dim()];
        let mut hi = vec![f64::NEG_INFINITY; features.dim()];
        for row in features.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        Ok(Bounds { lo, hi })
    }

    pub fn expand(&self, margin: f64) -> Result<Bounds> {
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::InvalidSpec(format!("margin must be finite and non-negative, got {margin}")));
        }
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let pad = margin * (h - l);
                (l - pad, h + pad)
            })
            .unzip();
        Ok(Bounds { lo, hi })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| v >= l && v <= h)
    }
}

/// Uniform samples inside `bounds`.
pub fn uniform_in_bounds(bounds: &Bounds, size: usize, seed: u64) -> Result<UnlabeledDataset> {
    if size == 0 {
        return Err(Error::InvalidSpec("unlabeled size must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let dim = bounds.lo.len();
    let mut data = Vec::with_capacity(size * dim);
    for _ in 0..size {
        for (&l, &h) in bounds.lo.iter().zip(&bounds.hi) {
            let u: f64 = rng.random();
            data.push(l + u * (h - l));
        }
    }
    UnlabeledDataset::new(FeatureMatrix::new(dim, data)?)
}

/// Builds the public dataset of `size` instances with the given strategy.
pub fn generate_unlabeled(
    pool: &FeatureMatrix,
    taxonomy: Option<&SubclassTaxonomy>,
    size: usize,
    strategy: UnlabeledStrategy,
    seed: u64,
) -> Result<UnlabeledDataset> {
    if size == 0 {
        return Err(Error::InvalidSpec("unlabeled size must be at least 1".into()));
    }
    match strategy {
        UnlabeledStrategy::UniformRandomValid { margin } => {
            let bounds = Bounds::of(pool)?.expand(margin)?;
            uniform_in_bounds(&bounds, size, seed)
        }
        UnlabeledStrategy::FromHeldOutSubclasses => {
            let taxonomy = taxonomy.ok_or(Error::NoHeldOutSubclasses)?;
            let held_out = taxonomy.held_out_subclasses();
            if held_out.is_empty() {
                return Err(Error::NoHeldOutSubclasses);
            }
            let mut rng = seed::rng(seed);
            let mut features = FeatureMatrix::empty(taxonomy.dim());
            let mut buf = Vec::with_capacity(taxonomy.dim());
            for _ in 0..size {
                let sub = held_out[rng.random_range(0..held_out.len())];
                taxonomy.draw(sub, &mut rng, &mut buf);
                features.push_row(&buf);
            }
            UnlabeledDataset::new(features)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::taxonomy::{generate_taxonomy, TaxonomySpec};

    fn taxonomy(held_out: usize) -> (crate::domain::LabeledDataset, SubclassTaxonomy) {
        generate_taxonomy(
            &TaxonomySpec {
                n_superclasses: 2,
                subclasses_per_superclass: 2,
                held_out_per_superclass: held_out,
                instances_per_subclass: 30,
                dim: 4,
                ..TaxonomySpec::default()
            },
            8,
        )
        .unwrap()
    }

    #[test]
    fn uniform_stays_inside_expanded_bounds() {
        let (pool, _) = taxonomy(0);
        let strategy = UnlabeledStrategy::default();
        let d = generate_unlabeled(pool.features(), None, 5000, strategy, 1).unwrap();
        assert_eq!(d.len(), 5000);
        let b = Bounds::of(pool.features()).unwrap().expand(DEFAULT_MARGIN).unwrap();
        assert!(d.features().iter_rows().all(|r| b.contains(r)));
    }

    #[test]
    fn single_instance() {
        let (pool, _) = taxonomy(0);
        let d = generate_unlabeled(pool.features(), None, 1, UnlabeledStrategy::default(), 1).unwrap();
        assert_eq!(d.len(), 1);
        assert!(generate_unlabeled(pool.features(), None, 0, UnlabeledStrategy::default(), 1).is_err());
    }

    #[test]
    fn held_out_requires_clusters() {
        let (pool, tax) = taxonomy(0);
        let r = generate_unlabeled(pool.features(), Some(&tax), 10, UnlabeledStrategy::FromHeldOutSubclasses, 1);
        assert!(matches!(r, Err(Error::NoHeldOutSubclasses)));
    }

    #[test]
    fn prefix_stable() {
        let (pool, tax) = taxonomy(1);
        for strategy in [UnlabeledStrategy::default(), UnlabeledStrategy::FromHeldOutSubclasses] {
            let big = generate_unlabeled(pool.features(), Some(&tax), 200, strategy, 4).unwrap();
            let small = generate_unlabeled(pool.features(), Some(&tax), 50, strategy, 4).unwrap();
            assert_eq!(big.prefix(50).unwrap(), small);
        }
    }
}
