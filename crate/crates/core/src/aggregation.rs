//! Pseudolabel aggregation.
//!
//! Every participant votes one category per public instance. For each
//! category `c`, `TOTAL[c]` is the number (or weight mass) of participants
//! whose label space contains `c`, and an index joins `P_c` when the votes
//! for `c` at that index satisfy `COUNT[c] / TOTAL[c] > alpha`. Because the
//! inequality is strict, `alpha = 1` always yields empty sets.
//!
//! A participant receives only the sets for its own categories, with any
//! index claimed by two or more of those sets dropped so the bundle carries
//! no contradictory labels.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{CategoryId, LabelSpace};
use crate::error::{Error, Result};
use crate::learners::PredictionVector;

/// Indices into the public dataset pseudolabeled with one category.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudolabelSet {
    indices: Vec<usize>,
}

impl PseudolabelSet {
    /// Sorts and deduplicates `indices`.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        PseudolabelSet { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &PseudolabelSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }
}

/// `P_k` for every category in the union of label spaces.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PseudolabelSets {
    sets: BTreeMap<CategoryId, PseudolabelSet>,
}

impl PseudolabelSets {
    pub fn from_map(sets: BTreeMap<CategoryId, PseudolabelSet>) -> Self {
        PseudolabelSets { sets }
    }

    pub fn get(&self, c: CategoryId) -> Option<&PseudolabelSet> {
        self.sets.get(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CategoryId, &PseudolabelSet)> {
        self.sets.iter()
    }

    pub fn categories(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.sets.keys().copied()
    }

    /// Sum of `|P_k|` over all categories.
    pub fn total_pseudolabels(&self) -> usize {
        self.sets.values().map(PseudolabelSet::len).sum()
    }

    pub fn as_map(&self) -> &BTreeMap<CategoryId, PseudolabelSet> {
        &self.sets
    }
}

/// Conflict-free pseudolabels for one participant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudolabelBundle {
    owner: u32,
    entries: BTreeMap<CategoryId, PseudolabelSet>,
}

impl PseudolabelBundle {
    /// Assembles a bundle, rejecting overlapping entries or categories
    /// outside `space`.
    pub fn new(owner: u32, entries: BTreeMap<CategoryId, PseudolabelSet>, space: &LabelSpace) -> Result<Self> {
        let mut seen = HashMap::new();
        for (&c, set) in &entries {
            space.check(c, || format!(" (bundle for participant {owner})"))?;
            for &i in set.indices() {
                if let Some(prev) = seen.insert(i, c) {
                    return Err(Error::Protocol(format!(
                        "bundle index {i} labeled both {prev} and {c}"
                    )));
                }
            }
        }
        Ok(PseudolabelBundle { owner, entries })
    }

    pub fn empty(owner: u32) -> Self {
        PseudolabelBundle {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> u32 {
        self.owner
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CategoryId, &PseudolabelSet)> {
        self.entries.iter()
    }

    pub fn get(&self, c: CategoryId) -> Option<&PseudolabelSet> {
        self.entries.get(&c)
    }

    /// Number of pseudolabeled instances, `|R_i|`.
    pub fn len(&self) -> usize {
        self.entries.values().map(PseudolabelSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The bundle's label for each public index it covers.
    pub fn labels_by_index(&self) -> BTreeMap<usize, CategoryId> {
        self.entries
            .iter()
            .flat_map(|(&c, s)| s.indices().iter().map(move |&i| (i, c)))
            .collect()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.values().filter_map(|s| s.indices().last().copied()).max()
    }
}

/// Per-participant vote weights, indexed like the prediction list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CredibilityWeights(pub Vec<f64>);

impl CredibilityWeights {
    pub fn uniform(n: usize) -> Self {
        CredibilityWeights(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Whether conflicting indices are removed within each bundle (the default)
/// or across every category of the federation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictScope {
    #[default]
    PerBundle,
    Global,
}

fn validate_inputs(predictions: &[PredictionVector], spaces: &[LabelSpace], alpha: f64, m: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if predictions.len() != spaces.len() {
        return Err(Error::LengthMismatch(format!(
            "{} prediction vectors for {} label spaces",
            predictions.len(),
            spaces.len()
        )));
    }
    for (i, (p, s)) in predictions.iter().zip(spaces).enumerate() {
        p.validate(s, m).map_err(|e| e.for_participant(i as u32))?;
    }
    Ok(())
}

fn category_union(spaces: &[LabelSpace]) -> Vec<CategoryId> {
    let mut all: Vec<CategoryId> = spaces.iter().flat_map(|s| s.categories().iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Core loop shared by the weighted and unweighted variants. `weight(i)` is
/// participant `i`'s vote mass; sums run in participant order.
fn aggregate_with<W, T>(
    predictions: &[PredictionVector],
    spaces: &[LabelSpace],
    alpha: f64,
    m: usize,
    weight: W,
    to_f64: fn(T) -> f64,
) -> PseudolabelSets
where
    W: Fn(usize) -> T,
    T: Copy + Default + std::ops::AddAssign + PartialEq,
{
    let union = category_union(spaces);
    let slot: HashMap<CategoryId, usize> = union.iter().enumerate().map(|(s, &c)| (c, s)).collect();

    let mut total = vec![T::default(); union.len()];
    for (i, space) in spaces.iter().enumerate() {
        for c in space.categories() {
            total[slot[c]] += weight(i);
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); union.len()];
    let mut count = vec![T::default(); union.len()];
    let mut touched: Vec<usize> = Vec::with_capacity(predictions.len());
    for index in 0..m {
        for (i, p) in predictions.iter().enumerate() {
            let s = slot[&p.labels[index]];
            if !touched.contains(&s) {
                touched.push(s);
            }
            count[s] += weight(i);
        }
        for &s in &touched {
            let t = to_f64(total[s]);
            if t > 0.0 && to_f64(count[s]) / t > alpha {
                members[s].push(index);
            }
            count[s] = T::default();
        }
        touched.clear();
    }

    PseudolabelSets {
        sets: union
            .into_iter()
            .zip(members)
            .map(|(c, idx)| (c, PseudolabelSet { indices: idx }))
            .collect(),
    }
}

/// Unweighted pseudolabel aggregation.
pub fn aggregate(
    predictions: &[PredictionVector],
    spaces: &[LabelSpace],
    alpha: f64,
    m: usize,
) -> Result<PseudolabelSets> {
    validate_inputs(predictions, spaces, alpha, m)?;
    Ok(aggregate_with(predictions, spaces, alpha, m, |_| 1u64, |v| v as f64))
}

/// Credibility-weighted aggregation: `TOTAL` and `COUNT` sum participant
/// weights instead of counting participants. Zero-weight owners still
/// appear in `TOTAL` with zero mass.
pub fn aggregate_weighted(
    predictions: &[PredictionVector],
    spaces: &[LabelSpace],
    weights: &CredibilityWeights,
    alpha: f64,
    m: usize,
) -> Result<PseudolabelSets> {
    validate_inputs(predictions, spaces, alpha, m)?;
    let w = weights.as_slice();
    if w.len() != spaces.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} participants",
            w.len(),
            spaces.len()
        )));
    }
    if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidWeights(format!("weight of participant {i} must be finite and non-negative")));
    }
    for c in category_union(spaces) {
        let mass: f64 = spaces
            .iter()
            .zip(w)
            .filter(|(s, _)| s.contains(c))
            .map(|(_, v)| v)
            .sum();
        if mass <= 0.0 {
            return Err(Error::InvalidWeights(format!("every owner of category {c} has zero weight")));
        }
    }
    Ok(aggregate_with(predictions, spaces, alpha, m, |i| w[i], |v| v))
}

/// Restricts `sets` to `space` and drops every index claimed by two or more
/// of the restricted sets.
pub fn build_bundle(sets: &PseudolabelSets, space: &LabelSpace, owner: u32) -> PseudolabelBundle {
    build_bundle_scoped(sets, space, owner, ConflictScope::PerBundle)
}

pub fn build_bundle_scoped(
    sets: &PseudolabelSets,
    space: &LabelSpace,
    owner: u32,
    scope: ConflictScope,
) -> PseudolabelBundle {
    let in_scope = |c: &CategoryId| match scope {
        ConflictScope::PerBundle => space.contains(*c),
        ConflictScope::Global => true,
    };
    let mut claims: HashMap<usize, u32> = HashMap::new();
    for (_, set) in sets.sets.iter().filter(|(c, _)| in_scope(c)) {
        for &i in set.indices() {
            *claims.entry(i).or_default() += 1;
        }
    }
    let entries = sets
        .sets
        .iter()
        .filter(|(c, _)| space.contains(**c))
        .map(|(&c, set)| {
            let kept = set.indices().iter().copied().filter(|i| claims[i] == 1).collect();
            (c, PseudolabelSet { indices: kept })
        })
        .collect();
    PseudolabelBundle { owner, entries }
}

/// Checks that every member of `P_k` carries strictly more than
/// `alpha * TOTAL[c_k]` vote mass. Returns the first offending
/// `(category, index)` if any.
pub fn verify_certificate(
    sets: &PseudolabelSets,
    predictions: &[PredictionVector],
    spaces: &[LabelSpace],
    weights: Option<&CredibilityWeights>,
    alpha: f64,
) -> Option<(CategoryId, usize)> {
    let w = |i: usize| weights.map_or(1.0, |w| w.0[i]);
    for (&c, set) in sets.iter() {
        let total: f64 = (0..spaces.len()).filter(|&i| spaces[i].contains(c)).map(w).sum();
        for &idx in set.indices() {
            let votes: f64 = (0..predictions.len())
                .filter(|&i| predictions[i].labels.get(idx) == Some(&c))
                .map(w)
                .sum();
            if votes <= alpha * total {
                return Some((c, idx));
            }
        }
    }
    None
}
