//! Core data types, synthetic corpus generation, partitioning and file I/O.

pub mod csv_io;
pub mod partition;
pub mod taxonomy;
pub mod types;
pub mod unlabeled;

pub use csv_io::{content_hash, load_csv, load_labeled, load_unlabeled, save_csv, CsvDataset};
pub use partition::{partition, CountRange, ParticipantShard, PartitionMode, PartitionSpec};
pub use taxonomy::{generate_taxonomy, SubclassTaxonomy, TaxonomySpec};
pub use types::{
    CategoryId, FeatureMatrix, InstanceTag, LabelSpace, LabeledDataset, Provenance, UnlabeledDataset,
};
pub use unlabeled::{generate_unlabeled, Bounds, UnlabeledStrategy};

use crate::error::Result;

/// The rows of `data` whose label lies in `space`, preserving order.
pub fn restrict_to_space(data: &LabeledDataset, space: &LabelSpace) -> Result<LabeledDataset> {
    let mut features = FeatureMatrix::empty(data.dim());
    let mut labels = Vec::new();
    let mut tags = Vec::new();
    for (i, &y) in data.labels().iter().enumerate() {
        if space.contains(y) {
            features.push_row(data.instance(i));
            labels.push(y);
            if let Some(t) = data.tags().get(i) {
                tags.push(*t);
            }
        }
    }
    let out = LabeledDataset::new(features, labels, data.provenance())?;
    Ok(if tags.len() == out.len() { out.with_tags(tags) } else { out })
}
