use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub strip_hashtags: bool,
    pub strip_mentions: bool,
    pub strip_urls: bool,
    pub lowercase: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            strip_hashtags: true,
            strip_mentions: true,
            strip_urls: true,
            lowercase: true,
        }
    }
}

/// Whitespace tokenization with markup removal and edge-punctuation
/// trimming. Hashtags, mentions and URLs are dropped before they can leak
/// into features.
pub fn preprocess(s: &str, cfg: &PreprocessConfig) -> Vec<String> {
    s.split_whitespace()
        .filter(|t| {
            !(cfg.strip_hashtags && text::is_hashtag(t)
                || cfg.strip_mentions && text::is_mention(t)
                || cfg.strip_urls && text::is_url(t))
        })
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(|t| if cfg.lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_markup_and_punctuation() {
        let cfg = PreprocessConfig::default();
        assert_eq!(preprocess("Polexit TERAZ! #tsue @ktoś http://x.y", &cfg), vec!["polexit", "teraz"]);
        assert!(preprocess("", &cfg).is_empty());
        assert_eq!(preprocess("„Sejm” -- (ŁAD)", &cfg), vec!["sejm", "ład"]);
    }

    #[test]
    fn flags_are_independent() {
        let cfg = PreprocessConfig {
            strip_hashtags: false,
            lowercase: false,
            ..Default::default()
        };
        assert_eq!(preprocess("#Tsue @x Sejm", &cfg), vec!["Tsue", "Sejm"]);
    }
}
