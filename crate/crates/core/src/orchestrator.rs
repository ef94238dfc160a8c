//! In-process execution of one federated cotraining round.
//!
//! The round has four barrier-separated phases: every participant trains
//! locally, then pseudolabels the public dataset; the coordinator
//! aggregates all votes once; finally every participant retrains on its
//! private data plus its bundle. Participants run concurrently within a
//! phase and all randomness derives from the master seed.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate, aggregate_weighted, build_bundle_scoped, ConflictScope, CredibilityWeights, PseudolabelBundle,
    PseudolabelSets,
};
use crate::domain::{
    self, csv_io, generate_taxonomy, generate_unlabeled, partition, CategoryId, LabelSpace, LabeledDataset,
    ParticipantShard, PartitionSpec, Provenance, SubclassTaxonomy, TaxonomySpec, UnlabeledDataset, UnlabeledStrategy,
};
use crate::error::{Error, Result};
use crate::learners::{LearnerKind, Model, PredictionVector, TrainConfig};
use crate::seed::{self, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlabeledSpec {
    pub size: usize,
    #[serde(default)]
    pub strategy: UnlabeledStrategy,
}

impl Default for UnlabeledSpec {
    fn default() -> Self {
        UnlabeledSpec {
            size: 2000,
            strategy: UnlabeledStrategy::FromHeldOutSubclasses,
        }
    }
}

fn default_test_per_subclass() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    #[serde(default)]
    pub taxonomy: TaxonomySpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default)]
    pub unlabeled: UnlabeledSpec,
    /// Test instances drawn per subclass into the shared test pool.
    #[serde(default = "default_test_per_subclass")]
    pub test_per_subclass: usize,
}

impl Default for SyntheticData {
    fn default() -> Self {
        SyntheticData {
            taxonomy: TaxonomySpec::default(),
            partition: PartitionSpec::default(),
            unlabeled: UnlabeledSpec::default(),
            test_per_subclass: default_test_per_subclass(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generate everything from the master seed.
    Synthetic(SyntheticData),
    /// Load datasets listed in a manifest written by `generate-data` (or by
    /// hand for external tabular data).
    Files { manifest: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticData::default())
    }
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantConfig {
    pub kind: LearnerKind,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl ParticipantConfig {
    pub fn new(kind: LearnerKind) -> Self {
        ParticipantConfig {
            kind,
            train: TrainConfig::default(),
            weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub master_seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub conflict_scope: ConflictScope,
    #[serde(default)]
    pub data: DataSource,
    pub participants: Vec<ParticipantConfig>,
}

impl FederationConfig {
    /// A synthetic federation whose participants cycle through the
    /// built-in learner kinds.
    pub fn mixed(data: SyntheticData, alpha: f64, master_seed: u64) -> Self {
        let participants = (0..data.partition.n_participants)
            .map(|i| ParticipantConfig::new(LearnerKind::ALL[i % LearnerKind::ALL.len()]))
            .collect();
        FederationConfig {
            master_seed,
            alpha,
            conflict_scope: ConflictScope::default(),
            data: DataSource::Synthetic(data),
            participants,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if self.participants.is_empty() {
            return Err(Error::Config("at least one participant is required".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.partition.n_participants != self.participants.len() {
                return Err(Error::Config(format!(
                    "partition.n_participants is {} but {} participants are configured",
                    s.partition.n_participants,
                    self.participants.len()
                )));
            }
            if s.test_per_subclass == 0 {
                return Err(Error::Config("test_per_subclass must be positive".into()));
            }
            if s.unlabeled.size == 0 {
                return Err(Error::Config("unlabeled.size must be at least 1".into()));
            }
        }
        for (i, p) in self.participants.iter().enumerate() {
            p.train
                .validate()
                .map_err(|e| Error::Config(format!("participant {i}: {e}")))?;
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(Error::Config(format!("participant {i}: weight must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> CredibilityWeights {
        CredibilityWeights(self.participants.iter().map(|p| p.weight).collect())
    }

    /// Replaces the public dataset size of a synthetic source.
    pub fn with_unlabeled_size(&self, size: usize) -> Self {
        let mut c = self.clone();
        if let DataSource::Synthetic(s) = &mut c.data {
            s.unlabeled.size = size;
        }
        c
    }
}

/// Everything a participant holds locally.
#[derive(Clone, Debug)]
pub struct ParticipantSetup {
    pub id: u32,
    pub label_space: LabelSpace,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub kind: LearnerKind,
    pub config: TrainConfig,
}

/// Materialized data for a run.
#[derive(Clone, Debug)]
pub struct Federation {
    pub participants: Vec<ParticipantSetup>,
    pub public: UnlabeledDataset,
    pub taxonomy: Option<SubclassTaxonomy>,
    pub shards: Vec<ParticipantShard>,
    pub pool: Option<LabeledDataset>,
    pub test_pool: Option<LabeledDataset>,
}

impl Federation {
    pub fn label_spaces(&self) -> Vec<LabelSpace> {
        self.participants.iter().map(|p| p.label_space.clone()).collect()
    }
}

/// Generates (or loads) all datasets for `config`.
pub fn build_federation(config: &FederationConfig) -> Result<Federation> {
    config.validate()?;
    match &config.data {
        DataSource::Synthetic(s) => build_synthetic(config, s),
        DataSource::Files { manifest } => build_from_manifest(config, manifest),
    }
}

fn build_synthetic(config: &FederationConfig, s: &SyntheticData) -> Result<Federation> {
    let master = config.master_seed;
    let (pool, taxonomy) = generate_taxonomy(&s.taxonomy, master)?;
    let mut spec = s.partition.clone();
    spec.seed = seed::derive(master, Stream::Partition, s.partition.seed);
    let shards = partition(&pool, &taxonomy, &spec)?;
    let test_pool = taxonomy.sample_labeled(s.test_per_subclass, seed::derive(master, Stream::TestSet, 0))?;
    let public = generate_unlabeled(
        pool.features(),
        Some(&taxonomy),
        s.unlabeled.size,
        s.unlabeled.strategy,
        seed::derive(master, Stream::Unlabeled, 0),
    )?;
    let participants = shards
        .iter()
        .zip(&config.participants)
        .map(|(shard, pc)| {
            let test = domain::restrict_to_space(&test_pool, &shard.label_space)?;
            Ok(ParticipantSetup {
                id: shard.id,
                label_space: shard.label_space.clone(),
                train: shard.dataset.clone(),
                test,
                kind: pc.kind,
                config: pc.train.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Federation {
        participants,
        public,
        taxonomy: Some(taxonomy),
        shards,
        pool: Some(pool),
        test_pool: Some(test_pool),
    })
}

/// Ids of the configured participants in aggregation order.
pub fn participant_ids(config: &FederationConfig) -> Result<Vec<u32>> {
    match &config.data {
        DataSource::Synthetic(_) => Ok((0..config.participants.len() as u32).collect()),
        DataSource::Files { manifest } => Ok(read_manifest(manifest)?.participants.iter().map(|p| p.id).collect()),
    }
}

/// Materializes only the public dataset.
pub fn load_public(config: &FederationConfig) -> Result<UnlabeledDataset> {
    config.validate()?;
    match &config.data {
        DataSource::Synthetic(_) => Ok(build_federation(config)?.public),
        DataSource::Files { manifest: path } => {
            let manifest = read_manifest(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            csv_io::load_unlabeled(&manifest.public.verified_path(base)?)
        }
    }
}

/// Materializes the data a single participant holds: its own setup and the
/// public dataset. File-backed sources read only that participant's files.
pub fn load_participant(config: &FederationConfig, id: u32) -> Result<(ParticipantSetup, UnlabeledDataset)> {
    config.validate()?;
    let unknown = || Error::Config(format!("participant {id} is not part of the configuration"));
    match &config.data {
        DataSource::Synthetic(_) => {
            let mut f = build_federation(config)?;
            let pos = f.participants.iter().position(|p| p.id == id).ok_or_else(unknown)?;
            Ok((f.participants.swap_remove(pos), f.public))
        }
        DataSource::Files { manifest: path } => {
            let manifest = read_manifest(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let pos = manifest.participants.iter().position(|p| p.id == id).ok_or_else(unknown)?;
            let pc = config.participants.get(pos).ok_or_else(unknown)?;
            let public = csv_io::load_unlabeled(&manifest.public.verified_path(base)?)?;
            let setup = load_manifest_participant(&manifest.participants[pos], pc, base, &public)?;
            Ok((setup, public))
        }
    }
}

fn load_manifest_participant(
    m: &ManifestParticipant,
    pc: &ParticipantConfig,
    base: &Path,
    public: &UnlabeledDataset,
) -> Result<ParticipantSetup> {
    let space = &m.label_space;
    let train = csv_io::load_labeled(&m.train.verified_path(base)?, Some(space), Provenance::Participant(m.id))?;
    let test = csv_io::load_labeled(&m.test.verified_path(base)?, Some(space), Provenance::Synthetic)?;
    if train.dim() != public.dim() || test.dim() != public.dim() {
        return Err(Error::Config(format!(
            "participant {}: feature dimension differs from the public dataset",
            m.id
        )));
    }
    Ok(ParticipantSetup {
        id: m.id,
        label_space: space.clone(),
        train,
        test,
        kind: pc.kind,
        config: pc.train.clone(),
    })
}

/// Dataset manifest shared by `generate-data` and file-backed runs. Paths
/// are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataManifest {
    pub master_seed: Option<u64>,
    pub public: ManifestFile,
    pub participants: Vec<ManifestParticipant>,
    #[serde(default)]
    pub pool: Option<ManifestFile>,
    #[serde(default)]
    pub test_pool: Option<ManifestFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestParticipant {
    pub id: u32,
    pub label_space: LabelSpace,
    pub train: ManifestFile,
    pub test: ManifestFile,
    /// Owned subclasses per superclass, present for synthetic partitions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub owned_subclasses: Vec<OwnedSubclasses>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwnedSubclasses {
    pub superclass: CategoryId,
    pub subclasses: Vec<usize>,
}

impl ManifestFile {
    /// Describes a file already written to `base.join(path)`.
    pub fn describe(base: &Path, path: impl Into<PathBuf>, rows: usize) -> Result<ManifestFile> {
        let path = path.into();
        Ok(ManifestFile {
            sha256: csv_io::file_sha256(&base.join(&path))?,
            path,
            rows,
        })
    }

    /// Resolves the path against `base` and checks the recorded hash.
    pub fn verified_path(&self, base: &Path) -> Result<PathBuf> {
        let full = base.join(&self.path);
        let actual = csv_io::file_sha256(&full)?;
        if actual != self.sha256 {
            return Err(Error::Config(format!(
                "{}: sha256 {actual} does not match the manifest ({})",
                full.display(),
                self.sha256
            )));
        }
        Ok(full)
    }
}

pub fn read_manifest(path: &Path) -> Result<DataManifest> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes a federation's datasets as CSV files under `dir` together with
/// `manifest.json`, and returns the manifest.
pub fn export_federation(federation: &Federation, dir: &Path, master_seed: Option<u64>) -> Result<DataManifest> {
    std::fs::create_dir_all(dir)?;
    let write_labeled = |name: String, data: &LabeledDataset| -> Result<ManifestFile> {
        csv_io::save_labeled(data, &dir.join(&name))?;
        ManifestFile::describe(dir, name, data.len())
    };
    csv_io::save_unlabeled(&federation.public, &dir.join("public.csv"))?;
    let public = ManifestFile::describe(dir, "public.csv", federation.public.len())?;
    let mut participants = Vec::with_capacity(federation.participants.len());
    for (i, p) in federation.participants.iter().enumerate() {
        let owned_subclasses = federation
            .shards
            .get(i)
            .map(|s| {
                s.owned_subclasses
                    .iter()
                    .map(|(&superclass, subs)| OwnedSubclasses {
                        superclass,
                        subclasses: subs.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        participants.push(ManifestParticipant {
            id: p.id,
            label_space: p.label_space.clone(),
            train: write_labeled(format!("participant_{}_train.csv", p.id), &p.train)?,
            test: write_labeled(format!("participant_{}_test.csv", p.id), &p.test)?,
            owned_subclasses,
        });
    }
    let pool = federation.pool.as_ref().map(|d| write_labeled("pool.csv".into(), d)).transpose()?;
    let test_pool = federation
        .test_pool
        .as_ref()
        .map(|d| write_labeled("test_pool.csv".into(), d))
        .transpose()?;
    let manifest = DataManifest {
        master_seed,
        public,
        participants,
        pool,
        test_pool,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

fn build_from_manifest(config: &FederationConfig, manifest_path: &Path) -> Result<Federation> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.participants.len() != config.participants.len() {
        return Err(Error::Config(format!(
            "manifest lists {} participants but {} are configured",
            manifest.participants.len(),
            config.participants.len()
        )));
    }
    let public = csv_io::load_unlabeled(&manifest.public.verified_path(base)?)?;
    let participants = manifest
        .participants
        .iter()
        .zip(&config.participants)
        .map(|(m, pc)| load_manifest_participant(m, pc, base, &public))
        .collect::<Result<Vec<_>>>()?;
    Ok(Federation {
        participants,
        public,
        taxonomy: None,
        shards: Vec::new(),
        pool: None,
        test_pool: None,
    })
}

/// Result of local training and pseudolabeling for one participant.
#[derive(Debug)]
pub struct LocalOutcome {
    pub model: Model,
    pub phase1_accuracy: f64,
    pub predictions: PredictionVector,
}

/// Phases 1 and 2 for one participant.
pub fn local_phase(p: &ParticipantSetup, public: &UnlabeledDataset, master_seed: u64) -> Result<LocalOutcome> {
    let run = || -> Result<LocalOutcome> {
        let mut model = Model::new(p.kind, p.label_space.clone(), p.config.clone());
        model.train_local(&p.train, seed::derive(master_seed, Stream::LocalTraining, p.id as u64))?;
        let phase1_accuracy = model.evaluate(&p.test)?;
        let predictions = model.pseudolabel(public)?;
        Ok(LocalOutcome {
            model,
            phase1_accuracy,
            predictions,
        })
    };
    run().map_err(|e| e.for_participant(p.id))
}

/// Result of update training for one participant.
#[derive(Debug)]
pub struct UpdateOutcome {
    pub federated: Model,
    /// Retrained twin on the private data alone with the update-phase
    /// configuration and seed.
    pub baseline: Model,
    pub local_accuracy: f64,
    pub federated_accuracy: f64,
    /// `f_fed` on the public dataset, kept for analysis.
    pub federated_predictions: PredictionVector,
}

/// Phase 4 for one participant.
pub fn update_phase(
    p: &ParticipantSetup,
    bundle: &PseudolabelBundle,
    public: &UnlabeledDataset,
    master_seed: u64,
) -> Result<UpdateOutcome> {
    let run = || -> Result<UpdateOutcome> {
        let s = seed::derive(master_seed, Stream::UpdateTraining, p.id as u64);
        let mut federated = Model::new(p.kind, p.label_space.clone(), p.config.clone());
        federated.update_train(&p.train, bundle, public, s)?;
        let mut baseline = Model::new(p.kind, p.label_space.clone(), p.config.clone());
        baseline.update_train(&p.train, &PseudolabelBundle::empty(p.id), public, s)?;
        let local_accuracy = baseline.evaluate(&p.test)?;
        let federated_accuracy = federated.evaluate(&p.test)?;
        let federated_predictions = federated.pseudolabel(public)?;
        Ok(UpdateOutcome {
            federated,
            baseline,
            local_accuracy,
            federated_accuracy,
            federated_predictions,
        })
    };
    run().map_err(|e| e.for_participant(p.id))
}

/// Phase 3: aggregation and bundle construction, run exactly once.
pub fn aggregate_round(
    predictions: &[PredictionVector],
    spaces: &[LabelSpace],
    owners: &[u32],
    weights: &CredibilityWeights,
    alpha: f64,
    m: usize,
    scope: ConflictScope,
) -> Result<(PseudolabelSets, Vec<PseudolabelBundle>)> {
    let sets = if weights.as_slice().iter().all(|&w| w == 1.0) {
        aggregate(predictions, spaces, alpha, m)?
    } else {
        aggregate_weighted(predictions, spaces, weights, alpha, m)?
    };
    let bundles = spaces
        .iter()
        .zip(owners)
        .map(|(s, &id)| build_bundle_scoped(&sets, s, id, scope))
        .collect();
    Ok((sets, bundles))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantReport {
    pub id: u32,
    pub learner: LearnerKind,
    pub label_space: LabelSpace,
    pub n_local: usize,
    pub n_test: usize,
    pub bundle_size: usize,
    pub phase1_accuracy: f64,
    pub local_accuracy: f64,
    pub federated_accuracy: f64,
    pub relative_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: CategoryId,
    pub owners: usize,
    pub pseudolabels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub alpha: f64,
    pub unlabeled_size: usize,
    pub participants: Vec<ParticipantReport>,
    pub categories: Vec<CategoryReport>,
    pub total_pseudolabels: usize,
    pub mean_local_accuracy: f64,
    pub mean_federated_accuracy: f64,
    pub mean_relative_accuracy: Option<f64>,
}

/// Intermediate results kept for audit and analysis. Contains only
/// category ids and public indices, never private instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundArtifacts {
    pub label_spaces: Vec<LabelSpace>,
    pub predictions: Vec<PredictionVector>,
    pub sets: PseudolabelSets,
    pub bundles: Vec<PseudolabelBundle>,
    pub federated_predictions: Vec<PredictionVector>,
    pub local_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutcome {
    pub report: RoundReport,
    pub artifacts: RoundArtifacts,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn relative_accuracy(federated: f64, local: f64) -> Option<f64> {
    (local > 0.0).then(|| federated / local)
}

pub fn participant_report(
    p: &ParticipantSetup,
    bundle_size: usize,
    phase1_accuracy: f64,
    local_accuracy: f64,
    federated_accuracy: f64,
) -> ParticipantReport {
    ParticipantReport {
        id: p.id,
        learner: p.kind,
        label_space: p.label_space.clone(),
        n_local: p.train.len(),
        n_test: p.test.len(),
        bundle_size,
        phase1_accuracy,
        local_accuracy,
        federated_accuracy,
        relative_accuracy: relative_accuracy(federated_accuracy, local_accuracy),
    }
}

/// Assembles the round report from per-participant reports.
pub fn summarize(
    alpha: f64,
    public_size: usize,
    participants: Vec<ParticipantReport>,
    sets: &PseudolabelSets,
) -> RoundReport {
    let categories = sets
        .iter()
        .map(|(&c, s)| CategoryReport {
            category: c,
            owners: participants.iter().filter(|p| p.label_space.contains(c)).count(),
            pseudolabels: s.len(),
        })
        .collect();
    RoundReport {
        alpha,
        unlabeled_size: public_size,
        total_pseudolabels: sets.total_pseudolabels(),
        mean_local_accuracy: mean(participants.iter().map(|p| p.local_accuracy)).unwrap_or(0.0),
        mean_federated_accuracy: mean(participants.iter().map(|p| p.federated_accuracy)).unwrap_or(0.0),
        mean_relative_accuracy: mean(participants.iter().filter_map(|p| p.relative_accuracy)),
        participants,
        categories,
    }
}

/// Local phase for every participant, in parallel.
pub fn run_local_phase(federation: &Federation, master_seed: u64) -> Result<Vec<LocalOutcome>> {
    federation
        .participants
        .par_iter()
        .map(|p| local_phase(p, &federation.public, master_seed))
        .collect()
}

/// Phases 3 and 4 given completed local outcomes. `public` may be a prefix
/// of the federation's public dataset, in which case predictions are
/// truncated to match.
pub fn finish_round(
    config: &FederationConfig,
    federation: &Federation,
    public: &UnlabeledDataset,
    local: &[LocalOutcome],
    alpha: f64,
) -> Result<RoundOutcome> {
    let m = public.len();
    let predictions: Vec<PredictionVector> = local
        .iter()
        .map(|o| PredictionVector::new(o.predictions.labels[..m].to_vec()))
        .collect();
    let spaces = federation.label_spaces();
    let owners: Vec<u32> = federation.participants.iter().map(|p| p.id).collect();
    let (sets, bundles) = aggregate_round(
        &predictions,
        &spaces,
        &owners,
        &config.weights(),
        alpha,
        m,
        config.conflict_scope,
    )?;
    let updates: Vec<UpdateOutcome> = federation
        .participants
        .par_iter()
        .zip(bundles.par_iter())
        .map(|(p, b)| update_phase(p, b, public, config.master_seed))
        .collect::<Result<_>>()?;
    let reports = federation
        .participants
        .iter()
        .zip(local)
        .zip(&updates)
        .zip(&bundles)
        .map(|(((p, l), u), b)| participant_report(p, b.len(), l.phase1_accuracy, u.local_accuracy, u.federated_accuracy))
        .collect();
    let report = summarize(alpha, m, reports, &sets);
    let artifacts = RoundArtifacts {
        label_spaces: spaces,
        predictions,
        sets,
        bundles,
        federated_predictions: updates.into_iter().map(|u| u.federated_predictions).collect(),
        local_sizes: federation.participants.iter().map(|p| p.train.len()).collect(),
    };
    Ok(RoundOutcome { report, artifacts })
}

/// Runs the full single-round protocol.
pub fn run_round(config: &FederationConfig) -> Result<RoundOutcome> {
    let federation = build_federation(config)?;
    run_round_on(config, &federation)
}

pub fn run_round_on(config: &FederationConfig, federation: &Federation) -> Result<RoundOutcome> {
    let local = run_local_phase(federation, config.master_seed)?;
    finish_round(config, federation, &federation.public, &local, config.alpha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub outcome: RoundOutcome,
    pub total_pseudolabels: usize,
}

/// One round per `alpha` over identical data and local models. Phases 1-2
/// do not depend on `alpha`, so they run once.
pub fn sweep_alpha(config: &FederationConfig, alphas: &[f64]) -> Result<Vec<AlphaPoint>> {
    if let Some(&a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::AlphaOutOfRange(a));
    }
    let federation = build_federation(config)?;
    let local = run_local_phase(&federation, config.master_seed)?;
    alphas
        .iter()
        .map(|&alpha| {
            let outcome = finish_round(config, &federation, &federation.public, &local, alpha)?;
            Ok(AlphaPoint {
                alpha,
                total_pseudolabels: outcome.report.total_pseudolabels,
                outcome,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizePoint {
    pub size: usize,
    pub outcome: RoundOutcome,
}

/// One round per public-dataset size. The datasets are nested: each is the
/// prefix of the largest, so only the size varies.
pub fn sweep_unlabeled_size(config: &FederationConfig, sizes: &[usize]) -> Result<Vec<SizePoint>> {
    let max = *sizes
        .iter()
        .max()
        .ok_or_else(|| Error::Config("size sweep needs at least one size".into()))?;
    if sizes.contains(&0) {
        return Err(Error::Config("unlabeled sizes must be at least 1".into()));
    }
    let federation = match &config.data {
        DataSource::Synthetic(_) => build_federation(&config.with_unlabeled_size(max))?,
        DataSource::Files { .. } => {
            let f = build_federation(config)?;
            if max > f.public.len() {
                return Err(Error::Config(format!(
                    "size {max} exceeds the {} instances of the public file",
                    f.public.len()
                )));
            }
            f
        }
    };
    let local = run_local_phase(&federation, config.master_seed)?;
    sizes
        .iter()
        .map(|&size| {
            let public = federation.public.prefix(size)?;
            let outcome = finish_round(config, &federation, &public, &local, config.alpha)?;
            Ok(SizePoint { size, outcome })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::domain::{CountRange, PartitionMode};

    pub(crate) fn tiny_config(n: usize, alpha: f64) -> FederationConfig {
        let data = SyntheticData {
            taxonomy: TaxonomySpec {
                n_superclasses: 4,
                subclasses_per_superclass: 2,
                instances_per_subclass: 60,
                dim: 3,
                ..TaxonomySpec::default()
            },
            partition: PartitionSpec {
                n_participants: n,
                superclasses_per_participant: CountRange::new(2, 3),
                instances_per_superclass: 10,
                mode: PartitionMode::NonIid,
                ..PartitionSpec::default()
            },
            unlabeled: UnlabeledSpec {
                size: 60,
                ..UnlabeledSpec::default()
            },
            test_per_subclass: 10,
        };
        let mut c = FederationConfig::mixed(data, alpha, 5);
        for p in &mut c.participants {
            p.train.epochs = 5;
        }
        c
    }

    #[test]
    fn single_participant_round_completes() {
        let out = run_round(&tiny_config(1, 0.3)).unwrap();
        assert_eq!(out.report.participants.len(), 1);
        // With one voter every predicted category clears any alpha < 1 and
        // no index carries two labels.
        assert_eq!(out.artifacts.bundles[0].len(), 60);
    }

    #[test]
    fn alpha_one_means_no_pseudolabels() {
        let out = run_round(&tiny_config(3, 1.0)).unwrap();
        assert_eq!(out.report.total_pseudolabels, 0);
        for p in &out.report.participants {
            assert_eq!(p.bundle_size, 0);
            assert_eq!(p.relative_accuracy, Some(1.0));
        }
    }

    #[test]
    fn rounds_are_reproducible() {
        let c = tiny_config(3, 0.3);
        assert_eq!(run_round(&c).unwrap(), run_round(&c).unwrap());
    }

    #[test]
    fn participant_count_must_match_partition() {
        let mut c = tiny_config(3, 0.3);
        c.participants.pop();
        assert!(matches!(run_round(&c), Err(Error::Config(_))));
    }
}
