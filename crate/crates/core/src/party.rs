//! Party labels and per-party tallies.
//!
//! Parties are declared in left-to-right spectrum order; the derived `Ord`
//! is the canonical order used for tie-breaking and for confusion-matrix
//! axes.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const N_PARTIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Lewica,
    PO,
    PL2050,
    PiS,
    Konfederacja,
}

impl Party {
    /// All parties in canonical spectrum order.
    pub const ALL: [Party; N_PARTIES] = [
        Party::Lewica,
        Party::PO,
        Party::PL2050,
        Party::PiS,
        Party::Konfederacja,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Party> {
        Party::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Party::Lewica => "Lewica",
            Party::PO => "PO",
            Party::PL2050 => "PL2050",
            Party::PiS => "PiS",
            Party::Konfederacja => "Konfederacja",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Party::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::UnknownParty(t.to_string()))
    }
}

impl Serialize for Party {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Party {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A user's affiliation outcome: one of the five parties, or the
/// `Inconclusive` sentinel for users whose evidence ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyLabel {
    Party(Party),
    Inconclusive,
}

impl PartyLabel {
    pub fn party(self) -> Option<Party> {
        match self {
            PartyLabel::Party(p) => Some(p),
            PartyLabel::Inconclusive => None,
        }
    }

    pub fn is_inconclusive(self) -> bool {
        matches!(self, PartyLabel::Inconclusive)
    }
}

impl From<Party> for PartyLabel {
    fn from(p: Party) -> Self {
        PartyLabel::Party(p)
    }
}

impl fmt::Display for PartyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyLabel::Party(p) => p.fmt(f),
            PartyLabel::Inconclusive => f.write_str("Inconclusive"),
        }
    }
}

impl FromStr for PartyLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("inconclusive") {
            Ok(PartyLabel::Inconclusive)
        } else {
            s.parse().map(PartyLabel::Party)
        }
    }
}

impl Serialize for PartyLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Non-negative count per party.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tally(pub [u32; N_PARTIES]);

impl Tally {
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn max(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Parties reaching the maximum count, in canonical order.
    pub fn leaders(&self) -> Vec<Party> {
        let max = self.max();
        Party::ALL
            .into_iter()
            .filter(|p| self[*p] == max)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Party, u32)> + '_ {
        Party::ALL.into_iter().map(move |p| (p, self[p]))
    }
}

impl Index<Party> for Tally {
    type Output = u32;

    fn index(&self, p: Party) -> &u32 {
        &self.0[p.index()]
    }
}

impl IndexMut<Party> for Tally {
    fn index_mut(&mut self, p: Party) -> &mut u32 {
        &mut self.0[p.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_spectrum_order() {
        let mut parties = vec![Party::PiS, Party::Konfederacja, Party::Lewica, Party::PL2050, Party::PO];
        parties.sort();
        assert_eq!(parties, Party::ALL.to_vec());
        assert!(Party::Lewica < Party::PO && Party::PL2050 < Party::PiS);
    }

    #[test]
    fn parse_round_trip() {
        for p in Party::ALL {
            assert_eq!(p.as_str().parse::<Party>().unwrap(), p);
            assert_eq!(p.to_string().to_lowercase().parse::<Party>().unwrap(), p);
        }
        assert_eq!("Inconclusive".parse::<PartyLabel>().unwrap(), PartyLabel::Inconclusive);
        assert!(matches!("XYZ".parse::<Party>(), Err(Error::UnknownParty(_))));
        assert!("Inconclusive".parse::<Party>().is_err());
    }

    #[test]
    fn tally_leaders() {
        let mut t = Tally::default();
        t[Party::PO] = 7;
        t[Party::Lewica] = 7;
        t[Party::PiS] = 2;
        assert_eq!(t.total(), 16);
        assert_eq!(t.leaders(), vec![Party::Lewica, Party::PO]);
    }
}
