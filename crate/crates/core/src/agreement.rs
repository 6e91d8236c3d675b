//! Manual annotation handling: majority vote per user, Krippendorff's alpha
//! for nominal labels, and agreement between heuristic and manual labels.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::UserProfile;
use crate::error::{Error, Result};
use crate::party::{Party, PartyLabel, N_PARTIES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub user_id: String,
    pub annotator_id: String,
    pub label: Party,
}

impl AnnotationRecord {
    pub fn new(user_id: impl Into<String>, annotator_id: impl Into<String>, label: Party) -> Self {
        AnnotationRecord {
            user_id: user_id.into(),
            annotator_id: annotator_id.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MajorityVote {
    pub label: PartyLabel,
    /// Set when no label has a strict majority.
    pub needs_review: bool,
}

/// Strict-majority label over one user's annotations. Without a strict
/// majority the result is Inconclusive and flagged for re-annotation.
pub fn majority_label(annotations: &[AnnotationRecord]) -> Result<MajorityVote> {
    if annotations.is_empty() {
        return Err(Error::EmptyAnnotations);
    }
    let mut counts = [0usize; N_PARTIES];
    for a in annotations {
        counts[a.label.index()] += 1;
    }
    let n = annotations.len();
    Ok(match Party::ALL.into_iter().find(|p| 2 * counts[p.index()] > n) {
        Some(p) => MajorityVote {
            label: PartyLabel::Party(p),
            needs_review: false,
        },
        None => MajorityVote {
            label: PartyLabel::Inconclusive,
            needs_review: true,
        },
    })
}

fn group_by_user(annotations: &[AnnotationRecord]) -> Result<BTreeMap<&str, Vec<&AnnotationRecord>>> {
    let mut seen = HashSet::new();
    let mut items: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in annotations {
        if !seen.insert((a.user_id.as_str(), a.annotator_id.as_str())) {
            return Err(Error::DuplicateAnnotation {
                user: a.user_id.clone(),
                annotator: a.annotator_id.clone(),
            });
        }
        items.entry(a.user_id.as_str()).or_default().push(a);
    }
    Ok(items)
}

/// Majority vote for every annotated user.
pub fn manual_labels(annotations: &[AnnotationRecord]) -> Result<BTreeMap<String, MajorityVote>> {
    group_by_user(annotations)?
        .into_iter()
        .map(|(user, recs)| {
            let owned: Vec<AnnotationRecord> = recs.into_iter().cloned().collect();
            Ok((user.to_string(), majority_label(&owned)?))
        })
        .collect()
}

/// Coincidence matrix over nominal values: every ordered pair of values
/// within an item contributes `1 / (m_u - 1)`. Items with a single value
/// are skipped.
pub fn coincidence_matrix(annotations: &[AnnotationRecord]) -> Result<([[f64; N_PARTIES]; N_PARTIES], usize)> {
    let items = group_by_user(annotations)?;
    let mut o = [[0.0; N_PARTIES]; N_PARTIES];
    let mut pairable = 0;
    for values in items.values() {
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable += 1;
        let w = 1.0 / (m - 1) as f64;
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i != j {
                    o[a.label.index()][b.label.index()] += w;
                }
            }
        }
    }
    Ok((o, pairable))
}

/// Krippendorff's alpha for nominal data, `1 - D_o / D_e`, with
/// `D_o = sum_{c != k} o_ck` and `D_e = sum_{c != k} n_c n_k / (n - 1)`.
///
/// When every pairable value carries the same label `D_e` is zero and
/// alpha is defined as 1.
pub fn krippendorff_alpha(annotations: &[AnnotationRecord]) -> Result<f64> {
    let (o, pairable) = coincidence_matrix(annotations)?;
    if pairable < 2 {
        return Err(Error::TooFewPairableItems(pairable));
    }
    let marginals: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..N_PARTIES {
        for k in 0..N_PARTIES {
            if c != k {
                observed += o[c][k];
                expected += marginals[c] * marginals[k];
            }
        }
    }
    expected /= n - 1.0;
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub matched: usize,
    pub compared: usize,
    /// Overlapping users left out because the heuristic called them
    /// Inconclusive.
    pub heuristic_inconclusive: usize,
    /// Overlapping users left out because annotators reached no majority.
    pub manual_inconclusive: usize,
}

/// Fraction of overlapping users whose heuristic label equals the manual
/// label. Inconclusive users on either side are excluded from the
/// denominator and counted separately.
pub fn heuristic_vs_manual_accuracy(
    heuristic: &[UserProfile],
    manual: &BTreeMap<String, PartyLabel>,
) -> Result<AccuracyReport> {
    let mut report = AccuracyReport {
        accuracy: 0.0,
        matched: 0,
        compared: 0,
        heuristic_inconclusive: 0,
        manual_inconclusive: 0,
    };
    let mut overlap = 0;
    for profile in heuristic {
        let (Some(assigned), Some(&gold)) = (profile.assigned, manual.get(&profile.user_id)) else {
            continue;
        };
        overlap += 1;
        match (assigned, gold) {
            (PartyLabel::Inconclusive, _) => report.heuristic_inconclusive += 1,
            (_, PartyLabel::Inconclusive) => report.manual_inconclusive += 1,
            (a, g) => {
                report.compared += 1;
                if a == g {
                    report.matched += 1;
                }
            }
        }
    }
    if overlap == 0 || report.compared == 0 {
        return Err(Error::EmptyOverlap);
    }
    report.accuracy = report.matched as f64 / report.compared as f64;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub alpha: f64,
    /// Items (users) with at least two annotations.
    pub n_items: usize,
    pub n_annotators: usize,
    pub n_users: usize,
    pub flagged_for_review: Vec<String>,
    pub accuracy_vs_heuristic: Option<AccuracyReport>,
}

impl AgreementReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<28}{:>10.4}\n", "Krippendorff alpha", self.alpha));
        s.push_str(&format!("{:<28}{:>10}\n", "annotated users", self.n_users));
        s.push_str(&format!("{:<28}{:>10}\n", "pairable users", self.n_items));
        s.push_str(&format!("{:<28}{:>10}\n", "annotators", self.n_annotators));
        s.push_str(&format!("{:<28}{:>10}\n", "flagged for review", self.flagged_for_review.len()));
        if let Some(acc) = &self.accuracy_vs_heuristic {
            s.push_str(&format!(
                "{:<28}{:>10.4}  ({}/{}; {} heuristic-inconclusive)\n",
                "heuristic vs manual acc.", acc.accuracy, acc.matched, acc.compared, acc.heuristic_inconclusive
            ));
        }
        s
    }
}

pub fn agreement_report(annotations: &[AnnotationRecord], heuristic: Option<&[UserProfile]>) -> Result<AgreementReport> {
    let alpha = krippendorff_alpha(annotations)?;
    let (_, n_items) = coincidence_matrix(annotations)?;
    let votes = manual_labels(annotations)?;
    let annotators: BTreeSet<&str> = annotations.iter().map(|a| a.annotator_id.as_str()).collect();
    let manual: BTreeMap<String, PartyLabel> = votes.iter().map(|(u, v)| (u.clone(), v.label)).collect();
    let accuracy_vs_heuristic = match heuristic {
        Some(h) => Some(heuristic_vs_manual_accuracy(h, &manual)?),
        None => None,
    };
    Ok(AgreementReport {
        alpha,
        n_items,
        n_annotators: annotators.len(),
        n_users: votes.len(),
        flagged_for_review: votes
            .iter()
            .filter(|(_, v)| v.needs_review)
            .map(|(u, _)| u.clone())
            .collect(),
        accuracy_vs_heuristic,
    })
}

/// Reads `user_id,annotator_id,label`.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != ["user_id", "annotator_id", "label"] {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            expected: "user_id,annotator_id,label".into(),
            found: header.join(","),
        });
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn write_annotations(annotations: &[AnnotationRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for a in annotations {
        w.serialize(a)?;
    }
    if annotations.is_empty() {
        w.write_record(["user_id", "annotator_id", "label"])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
