use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess, PreprocessConfig};
use crate::corpus::Post;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Binary,
    Count,
    TfIdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub weighting: Weighting,
    pub min_doc_freq: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            weighting: Weighting::TfIdf,
            min_doc_freq: 2,
        }
    }
}

/// Sparse feature vector: `(index, value)` pairs sorted by index.
pub type SparseVec = Vec<(usize, f64)>;

/// Vocabulary with dense indices `0..V` in lexicographic term order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub preprocess: PreprocessConfig,
    pub weighting: Weighting,
    pub min_doc_freq: usize,
    pub n_docs: usize,
    terms: Vec<String>,
    idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for FeatureSpace {
    fn eq(&self, other: &Self) -> bool {
        self.preprocess == other.preprocess
            && self.weighting == other.weighting
            && self.min_doc_freq == other.min_doc_freq
            && self.n_docs == other.n_docs
            && self.terms == other.terms
            && self.idf == other.idf
    }
}

impl FeatureSpace {
    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn idf(&self, i: usize) -> f64 {
        self.idf[i]
    }

    /// Rebuilds the term index after deserialization.
    pub(crate) fn rebuild_index(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        preprocess(text, &self.preprocess)
    }

    /// Binary and count weights are raw; TF-IDF rows are L2-normalized.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in self.tokens(text) {
            if let Some(&i) = self.index.get(&tok) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut v: SparseVec = counts
            .into_iter()
            .map(|(i, c)| {
                let w = match self.weighting {
                    Weighting::Binary => 1.0,
                    Weighting::Count => c,
                    Weighting::TfIdf => c * self.idf[i],
                };
                (i, w)
            })
            .collect();
        if self.weighting == Weighting::TfIdf {
            let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|(_, x)| *x /= norm);
            }
        }
        v
    }
}

/// Builds the vocabulary from training posts only, keeping tokens whose
/// document frequency reaches `min_doc_freq`. IDF is the smoothed
/// `ln((1 + N) / (1 + df)) + 1`.
pub fn fit_features(train: &[Post], preprocess_cfg: &PreprocessConfig, cfg: &FeatureConfig) -> Result<FeatureSpace> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for post in train {
        let distinct: BTreeSet<String> = preprocess(&post.text, preprocess_cfg).into_iter().collect();
        for tok in distinct {
            *df.entry(tok).or_insert(0) += 1;
        }
    }
    let n = train.len();
    let min_df = cfg.min_doc_freq.max(1);
    let (terms, idf): (Vec<String>, Vec<f64>) = df
        .into_iter()
        .filter(|(_, d)| *d >= min_df)
        .map(|(t, d)| (t, ((1 + n) as f64 / (1 + d) as f64).ln() + 1.0))
        .unzip();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary(cfg.min_doc_freq));
    }
    let mut fs = FeatureSpace {
        preprocess: *preprocess_cfg,
        weighting: cfg.weighting,
        min_doc_freq: min_df,
        n_docs: n,
        terms,
        idf,
        index: HashMap::new(),
    };
    fs.rebuild_index();
    Ok(fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posts(texts: &[&str]) -> Vec<Post> {
        texts.iter().enumerate().map(|(i, t)| Post::new(i.to_string(), "u", *t)).collect()
    }

    #[test]
    fn shared_token_enters_vocabulary() {
        let fs = fit_features(
            &posts(&["sejm obraduje", "sejm dziś", "sejm jutro"]),
            &PreprocessConfig::default(),
            &FeatureConfig::default(),
        )
        .unwrap();
        assert_eq!(fs.terms(), ["sejm"]);
    }

    #[test]
    fn min_doc_freq_above_corpus_size_fails() {
        let cfg = FeatureConfig {
            min_doc_freq: 4,
            ..Default::default()
        };
        let r = fit_features(&posts(&["a b", "a c", "a d"]), &PreprocessConfig::default(), &cfg);
        assert!(matches!(r, Err(Error::EmptyVocabulary(4))));
        assert!(matches!(
            fit_features(&[], &PreprocessConfig::default(), &FeatureConfig::default()),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn tfidf_rows_are_unit_length() {
        let fs = fit_features(
            &posts(&["a b c", "a b", "a", "c c b"]),
            &PreprocessConfig::default(),
            &FeatureConfig::default(),
        )
        .unwrap();
        let v = fs.transform("a a b zzz");
        assert_eq!(v.len(), 2);
        let norm: f64 = v.iter().map(|(_, x)| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(fs.transform("zzz").is_empty());
    }
}
