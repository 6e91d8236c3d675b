//! Like-tally heuristic: count each user's likes per party, drop users
//! below the like threshold, pick the unique most-liked party, and stamp
//! that label on the user's posts.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSource, Post, UserProfile};
use crate::error::{Error, Result};
use crate::ingest::LikeRecord;
use crate::party::{Party, PartyLabel, Tally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingThresholds {
    /// Users with fewer total likes are dropped.
    pub min_likes: u32,
    /// Skip both the like threshold and the tie exclusion. Ties then
    /// resolve to the first leader in canonical order.
    pub ambiguous_mode: bool,
}

impl Default for LabelingThresholds {
    fn default() -> Self {
        LabelingThresholds {
            min_likes: 10,
            ambiguous_mode: false,
        }
    }
}

/// One profile per distinct user, sorted by user id, with `assigned` unset.
pub fn tally_likes(records: &[LikeRecord]) -> Vec<UserProfile> {
    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    for r in records {
        tallies.entry(r.user_id.as_str()).or_default()[r.party] += 1;
    }
    tallies
        .into_iter()
        .map(|(user, tally)| UserProfile::new(user, tally))
        .collect()
}

/// Returns `None` when the user falls below the like threshold; otherwise
/// the profile with its heuristic label (Inconclusive on a top tie).
pub fn assign_label(profile: &UserProfile, t: &LabelingThresholds) -> Option<UserProfile> {
    let total = profile.tally.total();
    if total == 0 || (!t.ambiguous_mode && total < t.min_likes.max(1)) {
        return None;
    }
    let leaders = profile.tally.leaders();
    let assigned = match leaders.as_slice() {
        [only] => PartyLabel::Party(*only),
        [first, ..] if t.ambiguous_mode => PartyLabel::Party(*first),
        _ => PartyLabel::Inconclusive,
    };
    Some(UserProfile {
        assigned: Some(assigned),
        source: LabelSource::Heuristic,
        ..profile.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelingSummary {
    pub users_seen: usize,
    pub labeled: usize,
    pub inconclusive: usize,
    pub below_threshold: usize,
    pub per_party: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct LabelingOutcome {
    /// Surviving profiles, including Inconclusive ones, sorted by user id.
    pub profiles: Vec<UserProfile>,
    /// Users dropped by the like threshold, with their total like count.
    pub excluded: Vec<(String, u32)>,
}

impl LabelingOutcome {
    pub fn summary(&self) -> LabelingSummary {
        let mut per_party: BTreeMap<String, usize> = Party::ALL.iter().map(|p| (p.to_string(), 0)).collect();
        let mut inconclusive = 0;
        for p in &self.profiles {
            match p.assigned {
                Some(PartyLabel::Party(party)) => *per_party.get_mut(party.as_str()).unwrap() += 1,
                _ => inconclusive += 1,
            }
        }
        LabelingSummary {
            users_seen: self.profiles.len() + self.excluded.len(),
            labeled: self.profiles.len() - inconclusive,
            inconclusive,
            below_threshold: self.excluded.len(),
            per_party,
        }
    }
}

pub fn label_users(records: &[LikeRecord], t: &LabelingThresholds) -> LabelingOutcome {
    let mut profiles = Vec::new();
    let mut excluded = Vec::new();
    for profile in tally_likes(records) {
        match assign_label(&profile, t) {
            Some(p) => profiles.push(p),
            None => excluded.push((profile.user_id, profile.tally.total())),
        }
    }
    LabelingOutcome { profiles, excluded }
}

/// Labels every post whose author has a party label. Posts of Inconclusive,
/// unassigned or unknown users are left out.
pub fn propagate_labels(profiles: &[UserProfile], posts: &[Post]) -> Vec<Post> {
    let labels: HashMap<&str, Party> = profiles
        .iter()
        .filter_map(|p| p.party().map(|party| (p.user_id.as_str(), party)))
        .collect();
    posts
        .iter()
        .filter_map(|post| labels.get(post.user_id.as_str()).map(|&l| post.clone().with_label(l)))
        .collect()
}

const PROFILE_FIXED: [&str; 3] = ["user_id", "assigned", "source"];

fn profile_header() -> Vec<String> {
    PROFILE_FIXED
        .iter()
        .map(|s| s.to_string())
        .chain(Party::ALL.iter().map(|p| format!("tally_{p}")))
        .collect()
}

/// Writes `user_id,assigned,source,tally_<party>...` with parties in
/// canonical order.
pub fn write_profiles(profiles: &[UserProfile], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(profile_header())?;
    for p in profiles {
        let mut row = vec![
            p.user_id.clone(),
            p.assigned.map(|a| a.to_string()).unwrap_or_default(),
            p.source.to_string(),
        ];
        row.extend(p.tally.0.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_profiles(path: &Path) -> Result<Vec<UserProfile>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != profile_header() {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            expected: profile_header().join(","),
            found: header.join(","),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |m: String| Error::Config(format!("{}: {m}", path.display()));
        let assigned = match rec[1].trim() {
            "" => None,
            s => Some(s.parse::<PartyLabel>()?),
        };
        let mut tally = Tally::default();
        for (i, slot) in tally.0.iter_mut().enumerate() {
            *slot = rec[3 + i].parse().map_err(|e| bad(format!("bad tally `{}`: {e}", &rec[3 + i])))?;
        }
        out.push(UserProfile {
            user_id: rec[0].to_string(),
            tally,
            assigned,
            source: rec[2].parse()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn like(user: &str, party: Party, n: usize) -> Vec<LikeRecord> {
        (0..n)
            .map(|i| LikeRecord {
                user_id: user.into(),
                post_id: format!("{party}-{i}"),
                politician_id: format!("pol-{party}"),
                party,
            })
            .collect()
    }

    fn profile(pairs: &[(Party, u32)]) -> UserProfile {
        let mut t = Tally::default();
        for &(p, c) in pairs {
            t[p] = c;
        }
        UserProfile::new("u", t)
    }

    #[test]
    fn tally_counts_per_party() {
        let mut recs = like("u1", Party::PiS, 3);
        recs.extend(like("u1", Party::PO, 1));
        let profiles = tally_likes(&recs);
        assert_eq!(profiles.len(), 1);
        assert_eq!(profiles[0].tally[Party::PiS], 3);
        assert_eq!(profiles[0].tally[Party::PO], 1);
        assert_eq!(profiles[0].assigned, None);
        assert!(tally_likes(&[]).is_empty());
    }

    #[test]
    fn assignment_rules() {
        let t = LabelingThresholds::default();
        let p = assign_label(&profile(&[(Party::PiS, 12), (Party::PO, 3)]), &t).unwrap();
        assert_eq!(p.assigned, Some(PartyLabel::Party(Party::PiS)));
        assert_eq!(p.source, LabelSource::Heuristic);

        let p = assign_label(&profile(&[(Party::PO, 7), (Party::Lewica, 7)]), &t).unwrap();
        assert_eq!(p.assigned, Some(PartyLabel::Inconclusive));

        assert!(assign_label(&profile(&[(Party::PiS, 5), (Party::PO, 4)]), &t).is_none());
    }

    #[test]
    fn ambiguous_mode_skips_threshold_and_ties() {
        let t = LabelingThresholds {
            min_likes: 10,
            ambiguous_mode: true,
        };
        let p = assign_label(&profile(&[(Party::PiS, 2), (Party::PO, 2)]), &t).unwrap();
        assert_eq!(p.assigned, Some(PartyLabel::Party(Party::PO)));
    }

    #[test]
    fn propagation_skips_inconclusive_and_unknown() {
        let mut po = profile(&[(Party::PO, 11)]);
        po.user_id = "a".into();
        po.assigned = Some(PartyLabel::Party(Party::PO));
        let mut tie = profile(&[]);
        tie.user_id = "b".into();
        tie.assigned = Some(PartyLabel::Inconclusive);
        let posts: Vec<Post> = ["a", "a", "a", "a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, u)| Post::new(i.to_string(), *u, "t"))
            .collect();
        let out = propagate_labels(&[po, tie], &posts);
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|p| p.label == Some(Party::PO) && p.user_id == "a"));
    }

    #[test]
    fn label_users_reports_exclusions() {
        let mut recs = like("nine", Party::PiS, 9);
        recs.extend(like("ten", Party::PiS, 10));
        let out = label_users(&recs, &LabelingThresholds::default());
        assert_eq!(out.excluded, vec![("nine".to_string(), 9)]);
        assert_eq!(out.profiles.len(), 1);
        let s = out.summary();
        assert_eq!((s.users_seen, s.labeled, s.below_threshold), (2, 1, 1));
    }

    #[test]
    fn profile_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        let mut a = profile(&[(Party::Konfederacja, 4), (Party::PiS, 9)]);
        a.assigned = Some(PartyLabel::Party(Party::PiS));
        let mut b = profile(&[(Party::PO, 5), (Party::Lewica, 5)]);
        b.user_id = "v".into();
        b.assigned = Some(PartyLabel::Inconclusive);
        write_profiles(&[a.clone(), b.clone()], &path).unwrap();
        assert_eq!(read_profiles(&path).unwrap(), vec![a, b]);
    }
}
