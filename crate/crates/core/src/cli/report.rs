//! Aligned-text and JSON-record renderings of reports.

use serde::Serialize;
use serde_json::{json, Value};

use crate::orchestrator::{AlphaPoint, ParticipantReport, RoundReport, SizePoint};
use crate::theory::RoundAnalysis;

/// Left-aligned first column, right-aligned others, two-space gutters.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = width[i])
                } else {
                    format!("{c:>w$}", w = width[i])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn opt4(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), f4)
}

fn participant_row(p: &ParticipantReport) -> Vec<String> {
    vec![
        p.id.to_string(),
        p.learner.name().to_string(),
        p.label_space.len().to_string(),
        p.n_local.to_string(),
        p.n_test.to_string(),
        p.bundle_size.to_string(),
        f4(p.phase1_accuracy),
        f4(p.local_accuracy),
        f4(p.federated_accuracy),
        opt4(p.relative_accuracy),
    ]
}

const PARTICIPANT_HEADER: [&str; 10] = [
    "participant",
    "learner",
    "classes",
    "n_local",
    "n_test",
    "bundle",
    "phase1",
    "local",
    "federated",
    "relative",
];

pub fn participants_table(participants: &[ParticipantReport]) -> String {
    let rows: Vec<Vec<String>> = participants.iter().map(participant_row).collect();
    table(&PARTICIPANT_HEADER, &rows)
}

pub fn round_table(r: &RoundReport) -> String {
    let mut rows: Vec<Vec<String>> = r.participants.iter().map(participant_row).collect();
    let mut mean = vec![String::from("mean")];
    mean.extend(std::iter::repeat_n(String::new(), 6));
    mean.extend([
        f4(r.mean_local_accuracy),
        f4(r.mean_federated_accuracy),
        opt4(r.mean_relative_accuracy),
    ]);
    rows.push(mean);
    let mut out = table(&PARTICIPANT_HEADER, &rows);
    out.push_str(&format!(
        "\nalpha {}  unlabeled {}  pseudolabels {}\n",
        r.alpha, r.unlabeled_size, r.total_pseudolabels
    ));
    out
}

fn record<T: Serialize>(kind: &str, body: &T) -> Value {
    let mut v = serde_json::to_value(body).expect("report values serialize");
    if let Value::Object(map) = &mut v {
        map.insert("record".into(), Value::String(kind.into()));
    }
    v
}

fn to_lines(values: &[Value]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

fn round_values(r: &RoundReport, extra: &[(&str, Value)]) -> Vec<Value> {
    let tag = |mut v: Value| {
        if let Value::Object(map) = &mut v {
            for (k, x) in extra {
                map.insert((*k).into(), x.clone());
            }
        }
        v
    };
    let mut out: Vec<Value> = r.participants.iter().map(|p| tag(record("participant", p))).collect();
    out.extend(r.categories.iter().map(|c| tag(record("category", c))));
    out.push(tag(json!({
        "record": "summary",
        "alpha": r.alpha,
        "unlabeled_size": r.unlabeled_size,
        "total_pseudolabels": r.total_pseudolabels,
        "mean_local_accuracy": r.mean_local_accuracy,
        "mean_federated_accuracy": r.mean_federated_accuracy,
        "mean_relative_accuracy": r.mean_relative_accuracy,
    })));
    out
}

/// One JSON object per line: participants, categories, then a summary.
pub fn round_records(r: &RoundReport) -> String {
    to_lines(&round_values(r, &[]))
}

pub fn participant_records(participants: &[ParticipantReport]) -> String {
    to_lines(&participants.iter().map(|p| record("participant", p)).collect::<Vec<_>>())
}

pub fn alpha_table(points: &[AlphaPoint]) -> String {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let r = &p.outcome.report;
            vec![
                p.alpha.to_string(),
                p.total_pseudolabels.to_string(),
                f4(r.mean_local_accuracy),
                f4(r.mean_federated_accuracy),
                opt4(r.mean_relative_accuracy),
            ]
        })
        .collect();
    table(&["alpha", "pseudolabels", "local", "federated", "relative"], &rows)
}

pub fn alpha_records(points: &[AlphaPoint]) -> String {
    let values: Vec<Value> = points
        .iter()
        .flat_map(|p| round_values(&p.outcome.report, &[("sweep_alpha", json!(p.alpha))]))
        .collect();
    to_lines(&values)
}

pub fn size_table(points: &[SizePoint]) -> String {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let r = &p.outcome.report;
            vec![
                p.size.to_string(),
                r.total_pseudolabels.to_string(),
                f4(r.mean_local_accuracy),
                f4(r.mean_federated_accuracy),
                opt4(r.mean_relative_accuracy),
            ]
        })
        .collect();
    table(&["size", "pseudolabels", "local", "federated", "relative"], &rows)
}

pub fn size_records(points: &[SizePoint]) -> String {
    let values: Vec<Value> = points
        .iter()
        .flat_map(|p| round_values(&p.outcome.report, &[("sweep_size", json!(p.size))]))
        .collect();
    to_lines(&values)
}

pub fn analysis_table(a: &RoundAnalysis) -> String {
    let rows: Vec<Vec<String>> = a
        .participants
        .iter()
        .map(|p| {
            vec![
                p.id.to_string(),
                p.l_size.to_string(),
                p.p_size.to_string(),
                f4(p.eps_f),
                f4(p.eps_g),
                opt4(p.d_local_vs_bundle),
                f4(p.d_gf_prime),
                f4(p.eps_f_prime),
                p.condition_holds.map_or_else(|| "-".into(), |b| b.to_string()),
                p.guarantee_applies.to_string(),
            ]
        })
        .collect();
    let mut out = table(
        &[
            "participant",
            "|L|",
            "|P|",
            "eps_f",
            "eps_g",
            "d(f,P)",
            "d(g,f')",
            "eps_f'",
            "condition",
            "applies",
        ],
        &rows,
    );
    if !a.pairs.is_empty() {
        let rows: Vec<Vec<String>> = a
            .pairs
            .iter()
            .map(|p| {
                vec![
                    format!("{}-{}", p.a, p.b),
                    p.shared.len().to_string(),
                    opt4(p.disagreement),
                ]
            })
            .collect();
        out.push('\n');
        out.push_str(&table(&["pair", "shared", "disagreement"], &rows));
    }
    out
}

pub fn analysis_records(a: &RoundAnalysis) -> String {
    let mut values: Vec<Value> = a.participants.iter().map(|p| record("analysis", p)).collect();
    values.extend(a.pairs.iter().map(|p| record("pair_disagreement", p)));
    to_lines(&values)
}
