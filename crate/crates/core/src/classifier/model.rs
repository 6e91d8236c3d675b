use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSpace, SparseVec};
use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::party::{Party, N_PARTIES};
use crate::seed::rng_for;

const MODEL_FORMAT: &str = "leaning-linear";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeighting {
    /// `w_c = N / (K * n_c)`.
    InverseFrequency,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub class_weighting: ClassWeighting,
    /// L2 penalty on the weight matrix (not the bias).
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 50,
            patience: 15,
            batch_size: 32,
            learning_rate: 0.1,
            class_weighting: ClassWeighting::InverseFrequency,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// A labeled, featurized sample. `class` is a canonical party index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: SparseVec,
    pub class: usize,
}

/// Softmax regression parameters. `weights` is row-major
/// `N_PARTIES x dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; N_PARTIES],
}

impl Params {
    pub fn zeros(dim: usize) -> Self {
        Params {
            dim,
            weights: vec![0.0; N_PARTIES * dim],
            bias: [0.0; N_PARTIES],
        }
    }

    pub fn logits(&self, x: &SparseVec) -> [f64; N_PARTIES] {
        let mut z = self.bias;
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *zc += x.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
        }
        z
    }

    pub fn probabilities(&self, x: &SparseVec) -> [f64; N_PARTIES] {
        softmax(&self.logits(x))
    }

    /// Per-example loss coefficients `w_i (p_ic - [c = y_i]) / sum_i w_i`
    /// together with the weighted cross-entropy (without the L2 term).
    fn coefficients(&self, batch: &[&Example], class_weights: &[f64; N_PARTIES]) -> (f64, Vec<[f64; N_PARTIES]>) {
        let total_w: f64 = batch.iter().map(|e| class_weights[e.class]).sum();
        let mut loss = 0.0;
        let coefs = batch
            .iter()
            .map(|e| {
                let z = self.logits(&e.x);
                let lse = log_sum_exp(&z);
                let w = class_weights[e.class] / total_w;
                loss += w * (lse - z[e.class]);
                let mut g = [0.0; N_PARTIES];
                for c in 0..N_PARTIES {
                    g[c] = w * ((z[c] - lse).exp() - if c == e.class { 1.0 } else { 0.0 });
                }
                g
            })
            .collect();
        (loss, coefs)
    }

    /// Class-weighted mean cross-entropy plus `l2 / 2 * |W|^2`.
    pub fn loss(&self, batch: &[&Example], class_weights: &[f64; N_PARTIES], l2: f64) -> f64 {
        let (ce, _) = self.coefficients(batch, class_weights);
        ce + self.l2_term(l2)
    }

    fn l2_term(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            0.0
        } else {
            0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
        }
    }

    /// Analytic gradient of [`Params::loss`], returned densely.
    pub fn gradient(&self, batch: &[&Example], class_weights: &[f64; N_PARTIES], l2: f64) -> Params {
        let (_, coefs) = self.coefficients(batch, class_weights);
        let mut grad = Params::zeros(self.dim);
        for (e, g) in batch.iter().zip(&coefs) {
            for c in 0..N_PARTIES {
                grad.bias[c] += g[c];
                for &(j, v) in &e.x {
                    grad.weights[c * self.dim + j] += g[c] * v;
                }
            }
        }
        if l2 != 0.0 {
            for (gw, w) in grad.weights.iter_mut().zip(&self.weights) {
                *gw += l2 * w;
            }
        }
        grad
    }

    /// One gradient-descent step on a batch; returns the batch loss before
    /// the update.
    fn step(&mut self, batch: &[&Example], class_weights: &[f64; N_PARTIES], l2: f64, lr: f64) -> f64 {
        let (ce, coefs) = self.coefficients(batch, class_weights);
        let loss = ce + self.l2_term(l2);
        if l2 != 0.0 {
            let shrink = 1.0 - lr * l2;
            self.weights.iter_mut().for_each(|w| *w *= shrink);
        }
        for (e, g) in batch.iter().zip(&coefs) {
            for c in 0..N_PARTIES {
                self.bias[c] -= lr * g[c];
                let row = c * self.dim;
                for &(j, v) in &e.x {
                    self.weights[row + j] -= lr * g[c] * v;
                }
            }
        }
        loss
    }
}

fn log_sum_exp(z: &[f64; N_PARTIES]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64; N_PARTIES]) -> [f64; N_PARTIES] {
    let lse = log_sum_exp(z);
    let mut p = [0.0; N_PARTIES];
    for (pc, zc) in p.iter_mut().zip(z) {
        *pc = (zc - lse).exp();
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Index of the largest score; the earliest class in canonical order wins
/// ties.
pub fn argmax(scores: &[f64; N_PARTIES]) -> usize {
    let mut best = 0;
    for c in 1..N_PARTIES {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Party,
    pub scores: [f64; N_PARTIES],
}

/// Anything that maps post text to a party prediction.
pub trait Classify {
    fn classify(&self, text: &str) -> Prediction;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_micro_f1: f64,
    pub seed: u64,
    pub class_weights: [f64; N_PARTIES],
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub features: FeatureSpace,
    pub params: Params,
    pub meta: TrainingMeta,
}

impl LinearModel {
    pub fn predict(&self, text: &str) -> Prediction {
        let scores = self.params.probabilities(&self.features.transform(text));
        Prediction {
            label: Party::ALL[argmax(&scores)],
            scores,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            format: &'a str,
            version: u32,
            model: &'a LinearModel,
        }
        let json = serde_json::to_string(&Out {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        })?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct In {
            format: String,
            version: u32,
            model: LinearModel,
        }
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: In = serde_json::from_str(&s)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                file.format, file.version
            )));
        }
        let mut model = file.model;
        if model.params.dim != model.features.dim() || model.params.weights.len() != N_PARTIES * model.params.dim {
            return Err(Error::Model("weight matrix does not match the vocabulary".into()));
        }
        if model.params.weights.iter().chain(&model.params.bias).any(|w| !w.is_finite()) {
            return Err(Error::Model("non-finite parameter".into()));
        }
        model.features.rebuild_index();
        Ok(model)
    }
}

impl Classify for LinearModel {
    fn classify(&self, text: &str) -> Prediction {
        self.predict(text)
    }
}

pub fn featurize(posts: &[Post], features: &FeatureSpace) -> Result<Vec<Example>> {
    posts
        .iter()
        .map(|p| {
            let label = p.label.ok_or_else(|| Error::UnlabeledPost(p.post_id.clone()))?;
            Ok(Example {
                x: features.transform(&p.text),
                class: label.index(),
            })
        })
        .collect()
}

pub fn class_weights(examples: &[Example], scheme: ClassWeighting) -> Result<[f64; N_PARTIES]> {
    let mut counts = [0usize; N_PARTIES];
    for e in examples {
        counts[e.class] += 1;
    }
    if let Some(c) = (0..N_PARTIES).find(|&c| counts[c] == 0) {
        return Err(Error::MissingClass(Party::ALL[c]));
    }
    let n = examples.len() as f64;
    Ok(match scheme {
        ClassWeighting::InverseFrequency => counts.map(|k| n / (N_PARTIES as f64 * k as f64)),
        ClassWeighting::Uniform => [1.0; N_PARTIES],
    })
}

fn micro_f1(params: &Params, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let correct = examples
        .iter()
        .filter(|e| argmax(&params.logits(&e.x)) == e.class)
        .count();
    correct as f64 / examples.len() as f64
}

/// Mini-batch gradient descent on the class-weighted cross-entropy with
/// early stopping on validation micro-F1.
///
/// Samples are reshuffled every epoch from a seed-derived stream. Training
/// stops after `patience` epochs without a strict improvement or at
/// `max_epochs`, and the best epoch's parameters are returned. With an
/// empty validation split the training split is monitored instead.
pub fn train(train: &[Post], valid: &[Post], features: FeatureSpace, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let train_ids: HashSet<&str> = train.iter().map(|p| p.post_id.as_str()).collect();
    if let Some(p) = valid.iter().find(|p| train_ids.contains(p.post_id.as_str())) {
        return Err(Error::Config(format!("post `{}` is in both train and validation", p.post_id)));
    }
    let train_ex = featurize(train, &features)?;
    let valid_ex = featurize(valid, &features)?;
    let weights = class_weights(&train_ex, cfg.class_weighting)?;
    let monitor = if valid_ex.is_empty() { &train_ex } else { &valid_ex };

    let mut params = Params::zeros(features.dim());
    let mut best = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut rng = rng_for(cfg.seed, "train-shuffle", &[]);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_ex[i]).collect();
            let loss = params.step(&batch, &weights, cfg.l2, cfg.learning_rate);
            if !loss.is_finite() {
                return Err(Error::Diverged(epoch));
            }
            loss_sum += loss;
            batches += 1;
        }
        if params.weights.iter().chain(&params.bias).any(|w| !w.is_finite()) {
            return Err(Error::Diverged(epoch));
        }
        let f1 = micro_f1(&params, monitor);
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            valid_micro_f1: f1,
        });
        log::debug!("epoch {epoch}: loss {:.5} valid micro-F1 {f1:.4}", loss_sum / batches as f64);
        if f1 > best_f1 {
            best_f1 = f1;
            best_epoch = epoch;
            best = params.clone();
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    Ok(LinearModel {
        features,
        params: best,
        meta: TrainingMeta {
            epochs_run: history.len(),
            best_epoch,
            best_valid_micro_f1: best_f1,
            seed: cfg.seed,
            class_weights: weights,
            history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{fit_features, FeatureConfig, PreprocessConfig};

    fn toy(n_per: usize) -> Vec<Post> {
        (0..2 * n_per)
            .map(|i| {
                let (party, words) = if i % 2 == 0 {
                    (Party::PiS, "alfa beta gamma delta")
                } else {
                    (Party::PO, "omega psi chi phi")
                };
                Post::new(format!("t{i}"), format!("u{i}"), format!("{words} w{i}")).with_label(party)
            })
            .collect()
    }

    fn all_parties(n_per: usize) -> Vec<Post> {
        let mut out = Vec::new();
        for (k, p) in Party::ALL.iter().enumerate() {
            for i in 0..n_per {
                out.push(Post::new(format!("{k}-{i}"), format!("u{k}"), format!("tok{k}a tok{k}b x{i}")).with_label(*p));
            }
        }
        out
    }

    #[test]
    fn missing_class_is_named() {
        let posts = toy(10);
        let fs = fit_features(&posts, &PreprocessConfig::default(), &FeatureConfig::default()).unwrap();
        let r = train(&posts, &[], fs, &TrainConfig::default());
        assert!(matches!(r, Err(Error::MissingClass(Party::Lewica))));
    }

    #[test]
    fn separable_toy_set_is_fit() {
        let posts = all_parties(4);
        let fs = fit_features(&posts, &PreprocessConfig::default(), &FeatureConfig::default()).unwrap();
        let model = train(&posts, &[], fs, &TrainConfig::default()).unwrap();
        for p in &posts {
            assert_eq!(Some(model.predict(&p.text).label), p.label);
        }
        assert!(model.meta.epochs_run <= 50);
    }

    #[test]
    fn oov_post_predicts_softmax_of_bias() {
        let posts = all_parties(3);
        let fs = fit_features(&posts, &PreprocessConfig::default(), &FeatureConfig::default()).unwrap();
        let model = train(&posts, &[], fs, &TrainConfig::default()).unwrap();
        let pred = model.predict("nieznane słowa tylko");
        let expected = softmax(&model.params.bias);
        for c in 0..N_PARTIES {
            assert!((pred.scores[c] - expected[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn argmax_breaks_ties_canonically() {
        assert_eq!(argmax(&[0.2; 5]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.2, 0.1]), 1);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            patience: 50,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn model_file_round_trip() {
        let posts = all_parties(3);
        let fs = fit_features(&posts, &PreprocessConfig::default(), &FeatureConfig::default()).unwrap();
        let model = train(&posts, &[], fs, &TrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = LinearModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict("tok2a"), model.predict("tok2a"));
    }
}
