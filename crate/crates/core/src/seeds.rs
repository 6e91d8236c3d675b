//! Seed registry: politician accounts, party priors and controversial-topic
//! keyword sets.
//!
//! The registry is read from a TOML file with three optional sections:
//!
//! ```toml
//! [politicians]
//! jan_k = { display_name = "Jan K.", party = "PiS" }
//!
//! [priors]          # raw poll values, renormalized on load
//! PiS = 38
//! PO = 26
//! PL2050 = 14
//! Konfederacja = 9
//! Lewica = 8
//!
//! [topics]
//! lextvn = ["lextvn", "tvn"]
//! ```
//!
//! Omitted sections fall back to the built-in defaults. Other top-level
//! sections are ignored so the same file can carry run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TopicId;
use crate::error::{Error, Result};
use crate::party::{Party, N_PARTIES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Politician {
    pub account_id: String,
    pub display_name: String,
    pub party: Party,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartyPrior {
    pub party: Party,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicKeywordSet {
    pub topic_id: TopicId,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRegistry {
    pub politicians: Vec<Politician>,
    pub priors: Vec<PartyPrior>,
    pub topics: Vec<TopicKeywordSet>,
}

/// Raw poll values in canonical party order (Lewica, PO, PL2050, PiS,
/// Konfederacja). They sum to 95; the rest was undeclared.
pub const POLL_PERCENT: [f64; N_PARTIES] = [8.0, 26.0, 14.0, 38.0, 9.0];

pub fn default_priors() -> Vec<PartyPrior> {
    normalize_priors(&Party::ALL.into_iter().zip(POLL_PERCENT).collect::<Vec<_>>())
        .expect("built-in priors are valid")
}

pub fn default_topics() -> Vec<TopicKeywordSet> {
    let set = |topic_id, kws: &[&str]| TopicKeywordSet {
        topic_id,
        keywords: kws.iter().map(|k| k.to_string()).collect(),
    };
    vec![
        set(
            TopicId::Abortion,
            &[
                "aborcja",
                "strajkkobiet",
                "godek",
                "czarnyprotest",
                "AniJednejWięcej",
                "prolife",
                "BabiesLivesMatter",
                "LegalnaAborcja",
                "AborcjaJestOk",
            ],
        ),
        set(
            TopicId::EuCjeu,
            &[
                "tsue",
                "turów",
                "polexit",
                "konstytucja",
                "zostajeMYwUE",
                "MyZostajemy",
                "NieWygasiciePolski",
                "TrybunałKonstytucyjny",
                "trybunał",
                "UniaToMy",
                "ZostajęwUnii",
                "PolexitNow",
                "ZostajemyWEuropie",
            ],
        ),
        set(TopicId::LexTvn, &["lextvn", "tvn"]),
        set(
            TopicId::PolishOrder,
            &["PolskiŁad", "Polski Ład", "PolskiLad", "Polski Lad"],
        ),
    ]
}

impl Default for SeedRegistry {
    fn default() -> Self {
        SeedRegistry {
            politicians: Vec::new(),
            priors: default_priors(),
            topics: default_topics(),
        }
    }
}

/// Renormalizes raw prior values so they sum to one. Every party must
/// appear exactly once with a positive value.
pub fn normalize_priors(raw: &[(Party, f64)]) -> Result<Vec<PartyPrior>> {
    let mut values = [None; N_PARTIES];
    for &(party, v) in raw {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("prior for {party} must be positive, got {v}")));
        }
        if values[party.index()].replace(v).is_some() {
            return Err(Error::Config(format!("prior for {party} given twice")));
        }
    }
    let mut full = [0.0; N_PARTIES];
    for p in Party::ALL {
        full[p.index()] = values[p.index()].ok_or_else(|| Error::Config(format!("missing prior for {p}")))?;
    }
    let total: f64 = full.iter().sum();
    Ok(Party::ALL
        .into_iter()
        .map(|party| PartyPrior {
            party,
            share: full[party.index()] / total,
        })
        .collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoliticianEntry {
    display_name: Option<String>,
    party: String,
}

#[derive(Deserialize)]
struct SeedFile {
    politicians: Option<BTreeMap<String, PoliticianEntry>>,
    priors: Option<BTreeMap<String, f64>>,
    topics: Option<BTreeMap<String, Vec<String>>>,
}

impl SeedRegistry {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: SeedFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let mut reg = SeedRegistry::default();

        if let Some(entries) = file.politicians {
            reg.politicians = entries
                .into_iter()
                .map(|(account_id, e)| {
                    let party: Party = e.party.parse()?;
                    Ok(Politician {
                        display_name: e.display_name.unwrap_or_else(|| account_id.clone()),
                        account_id,
                        party,
                    })
                })
                .collect::<Result<_>>()?;
        }
        if let Some(priors) = file.priors {
            let raw = priors
                .into_iter()
                .map(|(name, v)| Ok((name.parse::<Party>()?, v)))
                .collect::<Result<Vec<_>>>()?;
            reg.priors = normalize_priors(&raw)?;
        }
        if let Some(topics) = file.topics {
            reg.topics = topics
                .into_iter()
                .map(|(id, keywords)| {
                    let topic_id: TopicId = id.parse()?;
                    Ok(TopicKeywordSet { topic_id, keywords })
                })
                .collect::<Result<_>>()?;
            reg.topics.sort_by_key(|t| t.topic_id);
        }
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for p in &self.politicians {
            if !ids.insert(p.account_id.as_str()) {
                return Err(Error::Config(format!("duplicate politician `{}`", p.account_id)));
            }
        }
        for t in &self.topics {
            if t.keywords.is_empty() || t.keywords.iter().any(|k| k.trim().is_empty()) {
                return Err(Error::Config(format!("topic `{}` has an empty keyword list", t.topic_id)));
            }
        }
        let sum: f64 = self.priors.iter().map(|p| p.share).sum();
        if self.priors.len() != N_PARTIES || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("priors must cover all parties and sum to 1 (sum = {sum})")));
        }
        Ok(())
    }

    /// Serializes back to the TOML config format.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::from("[politicians]\n");
        for p in &self.politicians {
            out.push_str(&format!(
                "{} = {{ display_name = {}, party = \"{}\" }}\n",
                toml_key(&p.account_id),
                toml_str(&p.display_name),
                p.party
            ));
        }
        out.push_str("\n[priors]\n");
        for p in &self.priors {
            out.push_str(&format!("{} = {}\n", p.party, p.share));
        }
        out.push_str("\n[topics]\n");
        for t in &self.topics {
            let kws: Vec<String> = t.keywords.iter().map(|k| toml_str(k)).collect();
            out.push_str(&format!("{} = [{}]\n", t.topic_id, kws.join(", ")));
        }
        out
    }

    pub fn party_of(&self, account_id: &str) -> Option<Party> {
        self.politicians
            .iter()
            .find(|p| p.account_id == account_id)
            .map(|p| p.party)
    }

    pub fn prior_shares(&self) -> [f64; N_PARTIES] {
        let mut shares = [0.0; N_PARTIES];
        for p in &self.priors {
            shares[p.party.index()] = p.share;
        }
        shares
    }
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn toml_key(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        s.to_string()
    } else {
        toml_str(s)
    }
}

/// Loads the registry from `path`, or returns the defaults when no path is
/// given.
pub fn load_seed_config(path: Option<&Path>) -> Result<SeedRegistry> {
    match path {
        None => Ok(SeedRegistry::default()),
        Some(path) => {
            let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            SeedRegistry::from_toml_str(&s)
        }
    }
}
