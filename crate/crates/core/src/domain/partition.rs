//! Splitting a synthetic pool into heterogeneous participant datasets.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::taxonomy::SubclassTaxonomy;
use super::types::{CategoryId, FeatureMatrix, InstanceTag, LabelSpace, LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::seed;

/// Rejection-sampling cap for the label-space overlap condition.
pub const MAX_OVERLAP_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    NonIid,
}

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        CountRange { min, max }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::InvalidSpec(format!(
                "{name} must be a non-empty positive range, got {}..={}",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub n_participants: usize,
    pub superclasses_per_participant: CountRange,
    pub instances_per_superclass: usize,
    pub mode: PartitionMode,
    /// Only consulted in non-IID mode.
    pub subclasses_per_superclass_owned: CountRange,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            n_participants: 10,
            superclasses_per_participant: CountRange::new(4, 5),
            instances_per_superclass: 10,
            mode: PartitionMode::NonIid,
            subclasses_per_superclass_owned: CountRange::new(1, 2),
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_participants == 0 {
            return Err(Error::InvalidSpec("n_participants must be positive".into()));
        }
        if self.instances_per_superclass == 0 {
            return Err(Error::InvalidSpec("instances_per_superclass must be positive".into()));
        }
        self.superclasses_per_participant.validate("superclasses_per_participant")?;
        if self.mode == PartitionMode::NonIid {
            self.subclasses_per_superclass_owned
                .validate("subclasses_per_superclass_owned")?;
        }
        Ok(())
    }
}

/// One participant's share of the pool.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticipantShard {
    pub id: u32,
    pub label_space: LabelSpace,
    pub dataset: LabeledDataset,
    /// Subclasses each owned superclass was drawn from.
    pub owned_subclasses: BTreeMap<CategoryId, Vec<usize>>,
}

fn overlap_holds(spaces: &[LabelSpace]) -> bool {
    if spaces.len() < 2 {
        return true;
    }
    spaces
        .iter()
        .enumerate()
        .all(|(i, a)| spaces.iter().enumerate().any(|(j, b)| i != j && a.intersects(b)))
}

fn assign_label_spaces(
    taxonomy: &SubclassTaxonomy,
    spec: &PartitionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LabelSpace>> {
    let n_sup = taxonomy.n_superclasses();
    if spec.superclasses_per_participant.min > n_sup {
        return Err(Error::InvalidSpec(format!(
            "participants need at least {} superclasses but the taxonomy has {n_sup}",
            spec.superclasses_per_participant.min
        )));
    }
    let range = CountRange::new(
        spec.superclasses_per_participant.min,
        spec.superclasses_per_participant.max.min(n_sup),
    );
    for _ in 0..MAX_OVERLAP_ATTEMPTS {
        let mut spaces = Vec::with_capacity(spec.n_participants);
        for _ in 0..spec.n_participants {
            let k = range.sample(rng);
            let picked = index::sample(rng, n_sup, k);
            spaces.push(LabelSpace::new(picked.into_iter().map(|s| CategoryId(s as u32)))?);
        }
        if overlap_holds(&spaces) {
            return Ok(spaces);
        }
    }
    Err(Error::ImpossibleOverlap {
        attempts: MAX_OVERLAP_ATTEMPTS,
    })
}

/// Splits `pool` into one disjoint labeled dataset per participant.
pub fn partition(
    pool: &LabeledDataset,
    taxonomy: &SubclassTaxonomy,
    spec: &PartitionSpec,
) -> Result<Vec<ParticipantShard>> {
    spec.validate()?;
    if pool.tags().len() != pool.len() {
        return Err(Error::InvalidSpec("pool instances must carry subclass tags".into()));
    }
    let mut rng = seed::rng(seed::derive(spec.seed, seed::Stream::Partition, 0));
    let spaces = assign_label_spaces(taxonomy, spec, &mut rng)?;

    let mut available: Vec<Vec<usize>> = vec![Vec::new(); taxonomy.n_clusters()];
    for (row, tag) in pool.tags().iter().enumerate() {
        available[tag.subclass].push(row);
    }

    let per_sup = taxonomy.subclasses_per_superclass();
    if spec.mode == PartitionMode::NonIid && spec.subclasses_per_superclass_owned.min > per_sup {
        return Err(Error::InvalidSpec(format!(
            "cannot own {} subclasses of a superclass with only {per_sup}",
            spec.subclasses_per_superclass_owned.min
        )));
    }
    let owned_range = CountRange::new(
        spec.subclasses_per_superclass_owned.min,
        spec.subclasses_per_superclass_owned.max.min(per_sup),
    );

    let mut shards = Vec::with_capacity(spaces.len());
    for (pid, space) in spaces.into_iter().enumerate() {
        let pid = pid as u32;
        let mut features = FeatureMatrix::empty(pool.dim());
        let mut labels = Vec::new();
        let mut tags = Vec::new();
        let mut owned = BTreeMap::new();
        for &sup in space.categories() {
            let subs: Vec<usize> = match spec.mode {
                PartitionMode::Iid => taxonomy.subclasses_of(sup).collect(),
                PartitionMode::NonIid => {
                    let n = owned_range.sample(&mut rng);
                    let mut picked: Vec<usize> = index::sample(&mut rng, per_sup, n)
                        .into_iter()
                        .map(|o| taxonomy.subclasses_of(sup).start + o)
                        .collect();
                    picked.sort_unstable();
                    picked
                }
            };
            let candidates: Vec<usize> = subs.iter().flat_map(|&s| available[s].iter().copied()).collect();
            if candidates.len() < spec.instances_per_superclass {
                return Err(Error::PoolExhausted(format!(
                    "participant {pid} needs {} instances of superclass {sup} but only {} remain",
                    spec.instances_per_superclass,
                    candidates.len()
                )));
            }
            let mut chosen: Vec<usize> = index::sample(&mut rng, candidates.len(), spec.instances_per_superclass)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            chosen.sort_unstable();
            let taken: HashSet<usize> = chosen.iter().copied().collect();
            for &s in &subs {
                available[s].retain(|r| !taken.contains(r));
            }
            for row in chosen {
                features.push_row(pool.instance(row));
                labels.push(pool.labels()[row]);
                tags.push(InstanceTag {
                    pool_index: pool.tags()[row].pool_index,
                    subclass: pool.tags()[row].subclass,
                });
            }
            owned.insert(sup, subs);
        }
        let dataset = LabeledDataset::new(features, labels, Provenance::Participant(pid))?.with_tags(tags);
        shards.push(ParticipantShard {
            id: pid,
            label_space: space,
            dataset,
            owned_subclasses: owned,
        });
    }
    Ok(shards)
}
