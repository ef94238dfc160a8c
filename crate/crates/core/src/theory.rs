//! Cotraining bound calculator.
//!
//! Given a model `f` trained on `L` with error bound `eps_f`, and a
//! pseudolabeler `g` with error bound `eps_g` that labeled `P`, retraining
//! `f` on `L ∪ P` yields the bound
//!
//! ```text
//! eps_f' = max(eps_f + |P|/|L| * (eps_g - d(g, f')), 0)
//! ```
//!
//! provided `|L| * eps_f < (u!)^(1/u) * e - u` with `u = |P| * eps_g`. The
//! factorial of a non-integer `u` is taken as `Gamma(u + 1)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::domain::CategoryId;
use crate::error::{Error, Result};
use crate::orchestrator::{RoundArtifacts, RoundReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub l_size: usize,
    pub p_size: usize,
    pub eps_f: f64,
    pub eps_g: f64,
    pub delta: f64,
    pub d_gf_prime: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        if self.l_size == 0 {
            return Err(Error::InvalidTheoryParams("|L| must be positive".into()));
        }
        for (name, v) in [("eps_f", self.eps_f), ("eps_g", self.eps_g)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(Error::InvalidTheoryParams(format!("{name} must lie in (0, 1/2), got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidTheoryParams(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.d_gf_prime) {
            return Err(Error::InvalidTheoryParams(format!(
                "d(g, f') must lie in [0, 1], got {}",
                self.d_gf_prime
            )));
        }
        Ok(())
    }
}

/// Fraction of positions where two label sequences differ.
pub fn empirical_disagreement(a: &[CategoryId], b: &[CategoryId]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!("{} vs {} predictions", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset("disagreement needs at least one instance".into()));
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

/// Disagreement restricted to instances where both predictions fall in
/// `shared`. `None` when no instance qualifies.
pub fn disagreement_on_shared(a: &[CategoryId], b: &[CategoryId], shared: &[CategoryId]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!("{} vs {} predictions", a.len(), b.len())));
    }
    let (mut n, mut diff) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        if shared.contains(x) && shared.contains(y) {
            n += 1;
            if x != y {
                diff += 1;
            }
        }
    }
    Ok((n > 0).then(|| diff as f64 / n as f64))
}

/// Right-hand side of the sample-size condition, `(u!)^(1/u) * e - u`.
pub fn sample_size_bound(p_size: f64, eps_g: f64) -> Result<f64> {
    let u = p_size * eps_g;
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::InvalidTheoryParams(format!("|P| * eps_g must be positive, got {u}")));
    }
    Ok((ln_gamma(u + 1.0) / u).exp() * std::f64::consts::E - u)
}

/// Whether `|L| * eps_f` falls strictly below the bound. `None` when
/// `|P| * eps_g` is zero and the bound is undefined.
pub fn sample_size_condition_holds(params: &TheoryParams) -> Option<bool> {
    let bound = sample_size_bound(params.p_size as f64, params.eps_g).ok()?;
    Some((params.l_size as f64) * params.eps_f < bound)
}

/// The retrained model's error bound.
pub fn eps_f_prime(params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    Ok(eps_f_prime_unchecked(params))
}

pub(crate) fn eps_f_prime_unchecked(p: &TheoryParams) -> f64 {
    let ratio = p.p_size as f64 / p.l_size as f64;
    (p.eps_f + ratio * (p.eps_g - p.d_gf_prime)).max(0.0)
}

/// Measured quantities for one participant. Error rates are empirical
/// proxies: `eps_f` is the test error of the model trained on private data
/// alone, `eps_g` the mean phase-1 test error of the other participants
/// that share a category with this one (the voters behind its bundle).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantAnalysis {
    pub id: u32,
    pub l_size: usize,
    pub p_size: usize,
    pub eps_f: f64,
    pub eps_g: f64,
    /// Disagreement of the local model with the bundle labels on the bundle's
    /// indices.
    pub d_local_vs_bundle: Option<f64>,
    /// `d(g, f')`: disagreement of the federated model with the bundle
    /// labels on the bundle's indices. Zero when the bundle is empty.
    pub d_gf_prime: f64,
    pub eps_f_prime: f64,
    /// `|L| * eps_f` against the sample-size bound; `None` when `|P| = 0`.
    pub condition_holds: Option<bool>,
    /// Whether every precondition of the bound is met by the measured values.
    pub guarantee_applies: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDisagreement {
    pub a: u32,
    pub b: u32,
    pub shared: Vec<CategoryId>,
    /// Fraction of public instances, among those both label inside the
    /// shared categories, on which their local models differ.
    pub disagreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundAnalysis {
    pub participants: Vec<ParticipantAnalysis>,
    pub pairs: Vec<PairDisagreement>,
}

fn disagreement_with_bundle(
    predictions: &[CategoryId],
    bundle: &std::collections::BTreeMap<usize, CategoryId>,
) -> Result<Option<f64>> {
    if bundle.is_empty() {
        return Ok(None);
    }
    let mut diff = 0usize;
    for (&i, &c) in bundle {
        let p = predictions.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            size: predictions.len(),
        })?;
        if *p != c {
            diff += 1;
        }
    }
    Ok(Some(diff as f64 / bundle.len() as f64))
}

/// Descriptive bound analysis of a completed round.
pub fn analyze_round(report: &RoundReport, artifacts: &RoundArtifacts) -> Result<RoundAnalysis> {
    let n = report.participants.len();
    let a = artifacts;
    if n == 0
        || [
            a.label_spaces.len(),
            a.predictions.len(),
            a.bundles.len(),
            a.federated_predictions.len(),
            a.local_sizes.len(),
        ]
        .iter()
        .any(|&len| len != n)
    {
        return Err(Error::MissingArtifacts(format!(
            "expected artifacts for {n} participants"
        )));
    }

    let mut participants = Vec::with_capacity(n);
    for (i, p) in report.participants.iter().enumerate() {
        let by_index = a.bundles[i].labels_by_index();
        let d_local = disagreement_with_bundle(&a.predictions[i].labels, &by_index)?;
        let d_fed = disagreement_with_bundle(&a.federated_predictions[i].labels, &by_index)?.unwrap_or(0.0);
        let eps_f = 1.0 - p.local_accuracy;
        let voters: Vec<f64> = (0..n)
            .filter(|&j| j != i && a.label_spaces[j].intersects(&a.label_spaces[i]))
            .map(|j| 1.0 - report.participants[j].phase1_accuracy)
            .collect();
        let eps_g = if voters.is_empty() {
            1.0 - p.phase1_accuracy
        } else {
            voters.iter().sum::<f64>() / voters.len() as f64
        };
        let params = TheoryParams {
            l_size: a.local_sizes[i],
            p_size: by_index.len(),
            eps_f,
            eps_g,
            delta: 0.05,
            d_gf_prime: d_fed,
        };
        let condition_holds = sample_size_condition_holds(&params);
        participants.push(ParticipantAnalysis {
            id: p.id,
            l_size: params.l_size,
            p_size: params.p_size,
            eps_f,
            eps_g,
            d_local_vs_bundle: d_local,
            d_gf_prime: d_fed,
            eps_f_prime: eps_f_prime_unchecked(&params),
            condition_holds,
            guarantee_applies: params.validate().is_ok() && condition_holds == Some(true),
        });
    }

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let shared = a.label_spaces[i].intersection(&a.label_spaces[j]);
            if shared.is_empty() {
                continue;
            }
            let disagreement = disagreement_on_shared(&a.predictions[i].labels, &a.predictions[j].labels, &shared)?;
            pairs.push(PairDisagreement {
                a: report.participants[i].id,
                b: report.participants[j].id,
                shared,
                disagreement,
            });
        }
    }
    Ok(RoundAnalysis { participants, pairs })
}
