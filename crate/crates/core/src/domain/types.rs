use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a category in the federation-wide union of label spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u32);

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for CategoryId {
    fn from(v: u32) -> Self {
        CategoryId(v)
    }
}

/// The output categories of one participant's task. Always non-empty, sorted
/// ascending and free of duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<CategoryId>", into = "Vec<CategoryId>")]
pub struct LabelSpace {
    categories: Vec<CategoryId>,
}

impl LabelSpace {
    pub fn new(categories: impl IntoIterator<Item = CategoryId>) -> Result<Self> {
        let mut categories: Vec<CategoryId> = categories.into_iter().collect();
        if categories.is_empty() {
            return Err(Error::InvalidSpec("label space must not be empty".into()));
        }
        let n = categories.len();
        categories.sort_unstable();
        categories.dedup();
        if categories.len() != n {
            return Err(Error::InvalidSpec("label space contains duplicate categories".into()));
        }
        Ok(LabelSpace { categories })
    }

    pub fn from_ids(ids: &[u32]) -> Result<Self> {
        Self::new(ids.iter().copied().map(CategoryId))
    }

    pub fn categories(&self) -> &[CategoryId] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: CategoryId) -> bool {
        self.categories.binary_search(&c).is_ok()
    }

    /// Position of `c` within this space, used as the class index by learners.
    pub fn position(&self, c: CategoryId) -> Option<usize> {
        self.categories.binary_search(&c).ok()
    }

    pub fn intersects(&self, other: &LabelSpace) -> bool {
        self.categories.iter().any(|c| other.contains(*c))
    }

    pub fn intersection(&self, other: &LabelSpace) -> Vec<CategoryId> {
        self.categories.iter().copied().filter(|c| other.contains(*c)).collect()
    }

    pub fn max_id(&self) -> CategoryId {
        *self.categories.last().expect("label space is non-empty")
    }

    pub fn check(&self, c: CategoryId, context: impl FnOnce() -> String) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::LabelOutsideSpace {
                category: c,
                context: context(),
            })
        }
    }
}

impl TryFrom<Vec<CategoryId>> for LabelSpace {
    type Error = Error;

    fn try_from(v: Vec<CategoryId>) -> Result<Self> {
        LabelSpace::new(v)
    }
}

impl From<LabelSpace> for Vec<CategoryId> {
    fn from(s: LabelSpace) -> Self {
        s.categories
    }
}

/// Who owns a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Participant(u32),
    Synthetic,
}

/// Where a generated instance came from. Only present on synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceTag {
    pub pool_index: usize,
    pub subclass: usize,
}

/// A row-major feature matrix with a fixed, federation-wide dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("feature dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::LengthMismatch(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "non-finite feature at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(FeatureMatrix { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::LengthMismatch(format!(
                    "row {i} has {} features, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub(crate) fn empty(dim: usize) -> Self {
        FeatureMatrix { dim, data: Vec::new() }
    }

    pub(crate) fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn truncate_rows(&mut self, n: usize) {
        self.data.truncate(n * self.dim);
    }
}

/// Labeled instances held by one participant (or a synthetic pool).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: FeatureMatrix,
    labels: Vec<CategoryId>,
    tags: Vec<InstanceTag>,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(features: FeatureMatrix, labels: Vec<CategoryId>, provenance: Provenance) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} instances but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            tags: Vec::new(),
            provenance,
        })
    }

    pub(crate) fn with_tags(mut self, tags: Vec<InstanceTag>) -> Self {
        debug_assert_eq!(tags.len(), self.labels.len());
        self.tags = tags;
        self
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[CategoryId] {
        &self.labels
    }

    /// Synthetic provenance tags; empty for data loaded from files.
    pub fn tags(&self) -> &[InstanceTag] {
        &self.tags
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn validate_labels(&self, space: &LabelSpace) -> Result<()> {
        for (row, &c) in self.labels.iter().enumerate() {
            space.check(c, || format!(" (row {row})"))?;
        }
        Ok(())
    }

    /// Concatenates `self` with extra rows; tags are dropped if either side lacks them.
    pub fn concat(&self, features: &FeatureMatrix, labels: &[CategoryId]) -> Result<LabeledDataset> {
        if features.dim() != self.dim() {
            return Err(Error::LengthMismatch(format!(
                "feature dimension {} does not match {}",
                features.dim(),
                self.dim()
            )));
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(features.as_slice());
        let mut all_labels = self.labels.clone();
        all_labels.extend_from_slice(labels);
        LabeledDataset::new(FeatureMatrix::new(self.dim(), data)?, all_labels, self.provenance)
    }

    pub(crate) fn set_provenance(&mut self, p: Provenance) {
        self.provenance = p;
    }
}

/// The shared public dataset. Index order is canonical for a federation run.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledDataset {
    features: FeatureMatrix,
}

impl UnlabeledDataset {
    pub fn new(features: FeatureMatrix) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyDataset("public unlabeled dataset needs at least one instance".into()));
        }
        Ok(UnlabeledDataset { features })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// The first `m` instances, preserving order.
    pub fn prefix(&self, m: usize) -> Result<UnlabeledDataset> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidSpec(format!(
                "prefix size {m} outside 1..={}",
                self.len()
            )));
        }
        let mut f = self.features.clone();
        f.truncate_rows(m);
        UnlabeledDataset::new(f)
    }
}
