//! Synthetic superclass/subclass corpus.
//!
//! Each superclass owns a fixed number of subclasses; each subclass is an
//! isotropic Gaussian cluster whose mean is scattered around its
//! superclass centre. Categories seen by learners are superclasses, while
//! subclasses drive the non-IID skew.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::types::{CategoryId, FeatureMatrix, InstanceTag, LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaxonomySpec {
    pub n_superclasses: usize,
    pub subclasses_per_superclass: usize,
    /// Extra clusters per superclass that never enter local or test data.
    pub held_out_per_superclass: usize,
    pub instances_per_subclass: usize,
    pub dim: usize,
    /// Standard deviation of superclass centres around the origin.
    pub superclass_spread: f64,
    /// Standard deviation of subclass means around their superclass centre.
    pub subclass_spread: f64,
    /// Within-cluster standard deviation.
    pub noise_std: f64,
}

impl Default for TaxonomySpec {
    fn default() -> Self {
        TaxonomySpec {
            n_superclasses: 10,
            subclasses_per_superclass: 3,
            held_out_per_superclass: 1,
            instances_per_subclass: 600,
            dim: 8,
            superclass_spread: 2.0,
            subclass_spread: 2.0,
            noise_std: 3.0,
        }
    }
}

impl TaxonomySpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_superclasses", self.n_superclasses),
            ("subclasses_per_superclass", self.subclasses_per_superclass),
            ("instances_per_subclass", self.instances_per_subclass),
            ("dim", self.dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidSpec(format!("{name} must be positive")));
            }
        }
        let spreads = [
            ("superclass_spread", self.superclass_spread),
            ("subclass_spread", self.subclass_spread),
            ("noise_std", self.noise_std),
        ];
        for (name, v) in spreads {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and non-negative")));
            }
        }
        if u32::try_from(self.n_superclasses).is_err() {
            return Err(Error::InvalidSpec("too many superclasses".into()));
        }
        Ok(())
    }
}

/// A generated taxonomy: the spec plus every cluster mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubclassTaxonomy {
    spec: TaxonomySpec,
    means: Vec<Vec<f64>>,
}

impl SubclassTaxonomy {
    pub fn spec(&self) -> &TaxonomySpec {
        &self.spec
    }

    pub fn n_superclasses(&self) -> usize {
        self.spec.n_superclasses
    }

    pub fn subclasses_per_superclass(&self) -> usize {
        self.spec.subclasses_per_superclass
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    fn stride(&self) -> usize {
        self.spec.subclasses_per_superclass + self.spec.held_out_per_superclass
    }

    pub fn superclass_of(&self, subclass: usize) -> CategoryId {
        CategoryId((subclass / self.stride()) as u32)
    }

    /// Subclasses of `superclass` that may appear in local and test data.
    pub fn subclasses_of(&self, superclass: CategoryId) -> std::ops::Range<usize> {
        let start = superclass.index() * self.stride();
        start..start + self.spec.subclasses_per_superclass
    }

    pub fn held_out_subclasses(&self) -> Vec<usize> {
        (0..self.spec.n_superclasses)
            .flat_map(|k| {
                let start = k * self.stride() + self.spec.subclasses_per_superclass;
                start..start + self.spec.held_out_per_superclass
            })
            .collect()
    }

    pub fn is_held_out(&self, subclass: usize) -> bool {
        subclass % self.stride() >= self.spec.subclasses_per_superclass
    }

    pub fn mean(&self, subclass: usize) -> &[f64] {
        &self.means[subclass]
    }

    pub fn n_clusters(&self) -> usize {
        self.means.len()
    }

    pub(crate) fn draw(&self, subclass: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        out.clear();
        for &m in &self.means[subclass] {
            let z: f64 = StandardNormal.sample(rng);
            out.push(m + self.spec.noise_std * z);
        }
    }

    /// Draws `per_subclass` instances from every non-held-out subclass, in
    /// subclass order, labeled by superclass and tagged with the subclass.
    pub fn sample_labeled(&self, per_subclass: usize, seed: u64) -> Result<LabeledDataset> {
        if per_subclass == 0 {
            return Err(Error::InvalidSpec("per-subclass sample count must be positive".into()));
        }
        let mut rng = seed::rng(seed);
        let mut features = FeatureMatrix::empty(self.dim());
        let mut labels = Vec::new();
        let mut tags = Vec::new();
        let mut buf = Vec::with_capacity(self.dim());
        for k in 0..self.n_superclasses() {
            let sup = CategoryId(k as u32);
            for sub in self.subclasses_of(sup) {
                for _ in 0..per_subclass {
                    self.draw(sub, &mut rng, &mut buf);
                    features.push_row(&buf);
                    tags.push(InstanceTag {
                        pool_index: labels.len(),
                        subclass: sub,
                    });
                    labels.push(sup);
                }
            }
        }
        Ok(LabeledDataset::new(features, labels, Provenance::Synthetic)?.with_tags(tags))
    }
}

/// Generates cluster means from `seed`, then the labeled pool.
pub fn generate_taxonomy(spec: &TaxonomySpec, seed: u64) -> Result<(LabeledDataset, SubclassTaxonomy)> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(seed, seed::Stream::Taxonomy, 0));
    let stride = spec.subclasses_per_superclass + spec.held_out_per_superclass;
    let mut means = Vec::with_capacity(spec.n_superclasses * stride);
    for _ in 0..spec.n_superclasses {
        let centre: Vec<f64> = (0..spec.dim)
            .map(|_| spec.superclass_spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for _ in 0..stride {
            means.push(
                centre
                    .iter()
                    .map(|c| c + spec.subclass_spread * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
        }
    }
    let taxonomy = SubclassTaxonomy {
        spec: spec.clone(),
        means,
    };
    let pool = taxonomy.sample_labeled(spec.instances_per_subclass, seed::derive(seed, seed::Stream::Pool, 0))?;
    Ok((pool, taxonomy))
}
