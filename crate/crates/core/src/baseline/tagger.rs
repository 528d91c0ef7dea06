//! Averaged structured perceptron with first-order transitions and
//! constrained Viterbi decoding.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::token_features;
use super::perceptron::{f1, Averaged, FeatureIndex};
use super::{BaselineError, EpochLog, StopReason, TrainConfig};
use crate::encoding::TaggedSentence;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaggerModel {
    pub tags: Vec<String>,
    pub seed: u64,
    pub epochs_run: usize,
    features: Vec<String>,
    /// Row-major `features × tags`.
    emission: Vec<f64>,
    /// Row-major `(tags + 1) × tags`; row 0 scores the sentence start.
    transition: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    allowed: Vec<bool>,
}

impl PartialEq for TaggerModel {
    fn eq(&self, other: &Self) -> bool {
        self.tags == other.tags
            && self.seed == other.seed
            && self.epochs_run == other.epochs_run
            && self.features == other.features
            && self.emission == other.emission
            && self.transition == other.transition
    }
}

/// `allowed[p * n + t]` where `p = 0` is the sentence start and `p = k + 1`
/// is tag `k`.
fn transition_mask(tags: &[String]) -> Vec<bool> {
    let n = tags.len();
    let mut mask = vec![true; (n + 1) * n];
    for (t, name) in tags.iter().enumerate() {
        let Some(class) = name.strip_prefix("I-") else {
            continue;
        };
        for p in 0..=n {
            let ok = p > 0
                && (tags[p - 1].strip_prefix("B-") == Some(class)
                    || tags[p - 1].strip_prefix("I-") == Some(class));
            mask[p * n + t] = ok;
        }
    }
    mask
}

/// Highest-scoring allowed path; ties go to the lower tag index, so an
/// all-zero model yields all `O` when `O` is tag 0.
fn viterbi(n: usize, emissions: &[Vec<f64>], transition: &[f64], allowed: &[bool]) -> Vec<usize> {
    let len = emissions.len();
    if len == 0 {
        return Vec::new();
    }
    let mut score = vec![f64::NEG_INFINITY; n];
    let mut back = vec![vec![0usize; n]; len];
    for t in 0..n {
        if allowed[t] {
            score[t] = transition[t] + emissions[0][t];
        }
    }
    for i in 1..len {
        let mut next = vec![f64::NEG_INFINITY; n];
        for t in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for p in 0..n {
                if !allowed[(p + 1) * n + t] || score[p] == f64::NEG_INFINITY {
                    continue;
                }
                let s = score[p] + transition[(p + 1) * n + t];
                if s > best {
                    best = s;
                    arg = p;
                }
            }
            if best > f64::NEG_INFINITY {
                next[t] = best + emissions[i][t];
                back[i][t] = arg;
            }
        }
        score = next;
    }
    let mut last = 0;
    for t in 1..n {
        if score[t] > score[last] {
            last = t;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for i in (1..len).rev() {
        path[i - 1] = back[i][path[i]];
    }
    path
}

impl TaggerModel {
    fn from_parts(
        tags: Vec<String>,
        seed: u64,
        epochs_run: usize,
        index: &FeatureIndex,
        weights: &[f64],
        transition: Vec<f64>,
    ) -> Self {
        let n = tags.len();
        let mut features = Vec::new();
        let mut emission = Vec::new();
        for (i, name) in index.names.iter().enumerate() {
            let row = &weights[i * n..(i + 1) * n];
            if row.iter().any(|&w| w != 0.0) {
                features.push(name.clone());
                emission.extend_from_slice(row);
            }
        }
        let mut m = TaggerModel {
            tags,
            seed,
            epochs_run,
            features,
            emission,
            transition,
            index: HashMap::new(),
            allowed: Vec::new(),
        };
        m.rebuild();
        m
    }

    /// Restores lookup tables skipped by serialization.
    pub(crate) fn rebuild(&mut self) {
        self.index = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        self.allowed = transition_mask(&self.tags);
    }

    pub(crate) fn check(&self) -> bool {
        let n = self.tags.len();
        n > 0
            && self.emission.len() == self.features.len() * n
            && self.transition.len() == (n + 1) * n
    }

    /// A model with every weight zero.
    pub fn untrained(tags: Vec<String>) -> Self {
        let n = tags.len();
        TaggerModel::from_parts(
            tags,
            0,
            0,
            &FeatureIndex::default(),
            &[],
            vec![0.0; (n + 1) * n],
        )
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    fn emissions(&self, words: &[&str]) -> Vec<Vec<f64>> {
        let n = self.tags.len();
        token_features(words)
            .iter()
            .map(|fs| {
                let mut e = vec![0.0; n];
                for f in fs {
                    if let Some(&r) = self.index.get(f) {
                        for (t, w) in self.emission[r * n..(r + 1) * n].iter().enumerate() {
                            e[t] += w;
                        }
                    }
                }
                e
            })
            .collect()
    }

    /// Tag indices for `words`; always the same length as the input.
    pub fn tag(&self, words: &[&str]) -> Vec<usize> {
        viterbi(
            self.tags.len(),
            &self.emissions(words),
            &self.transition,
            &self.allowed,
        )
    }

    pub fn tag_names(&self, words: &[&str]) -> Vec<String> {
        self.tag(words)
            .into_iter()
            .map(|t| self.tags[t].clone())
            .collect()
    }
}

fn token_f1(model: &TaggerModel, data: &[TaggedSentence]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for s in data {
        let words: Vec<&str> = s.words.iter().map(String::as_str).collect();
        for (p, g) in model.tag(&words).into_iter().zip(&s.tags) {
            if p == *g && p != 0 {
                tp += 1;
            } else {
                fp += usize::from(p != 0);
                fn_ += usize::from(*g != 0);
            }
        }
    }
    f1(tp, fp, fn_)
}

/// Online learner behind [`train_tagger`]; one `learn` call is one
/// perceptron instance.
#[derive(Clone, Debug)]
pub struct TaggerTrainer {
    tags: Vec<String>,
    mask: Vec<bool>,
    index: FeatureIndex,
    em: Averaged,
    tr: Averaged,
}

impl TaggerTrainer {
    /// `tags[0]` must be `O`.
    pub fn new(tags: &[String]) -> Self {
        let n = tags.len();
        TaggerTrainer {
            tags: tags.to_vec(),
            mask: transition_mask(tags),
            index: FeatureIndex::default(),
            em: Averaged::new(0),
            tr: Averaged::new((n + 1) * n),
        }
    }

    fn intern(&mut self, words: &[&str]) -> Vec<Vec<usize>> {
        let feats: Vec<Vec<usize>> = token_features(words)
            .iter()
            .map(|fs| fs.iter().map(|f| self.index.intern(f)).collect())
            .collect();
        self.em.grow(self.index.names.len() * self.tags.len());
        feats
    }

    /// Returns whether the current weights mis-tagged the sentence.
    fn step(&mut self, feats: &[Vec<usize>], gold: &[usize]) -> bool {
        if gold.is_empty() {
            return false;
        }
        let n = self.tags.len();
        let emissions: Vec<Vec<f64>> = feats
            .iter()
            .map(|fs| {
                let mut e = vec![0.0; n];
                for &f in fs {
                    for (t, w) in self.em.w[f * n..(f + 1) * n].iter().enumerate() {
                        e[t] += *w as f64;
                    }
                }
                e
            })
            .collect();
        let trf: Vec<f64> = self.tr.w.iter().map(|&w| w as f64).collect();
        let pred = viterbi(n, &emissions, &trf, &self.mask);
        let wrong = pred != gold;
        if wrong {
            for i in 0..gold.len() {
                let (gp, pp) = if i == 0 {
                    (0, 0)
                } else {
                    (gold[i - 1] + 1, pred[i - 1] + 1)
                };
                if gold[i] != pred[i] {
                    for &f in &feats[i] {
                        self.em.update(f * n + gold[i], 1);
                        self.em.update(f * n + pred[i], -1);
                    }
                }
                if gold[i] != pred[i] || gp != pp {
                    self.tr.update(gp * n + gold[i], 1);
                    self.tr.update(pp * n + pred[i], -1);
                }
            }
        }
        self.em.tick();
        self.tr.tick();
        wrong
    }

    /// One update on a gold-tagged sentence; returns whether it was a mistake.
    pub fn learn(&mut self, words: &[&str], gold: &[usize]) -> Result<bool, BaselineError> {
        if words.len() != gold.len() || gold.iter().any(|&t| t >= self.tags.len()) {
            return Err(BaselineError::BadExample {
                words: words.len(),
                tags: gold.len(),
            });
        }
        let feats = self.intern(words);
        Ok(self.step(&feats, gold))
    }

    /// The averaged model so far.
    pub fn snapshot(&self, seed: u64, epochs_run: usize) -> TaggerModel {
        TaggerModel::from_parts(
            self.tags.clone(),
            seed,
            epochs_run,
            &self.index,
            &self.em.averaged(),
            self.tr.averaged(),
        )
    }
}

/// Trains on `train`, optionally stopping early on token F1 over `val`.
/// `tags[0]` must be `O`.
pub fn train_tagger(
    tags: &[String],
    train: &[TaggedSentence],
    val: Option<&[TaggedSentence]>,
    cfg: &TrainConfig,
) -> Result<(TaggerModel, Vec<EpochLog>, StopReason), BaselineError> {
    if cfg.epochs == 0 {
        return Err(BaselineError::NoEpochs);
    }
    if train.iter().all(|s| s.words.is_empty()) {
        return Err(BaselineError::EmptyCorpus("tagger"));
    }
    let mut trainer = TaggerTrainer::new(tags);
    let feats: Vec<Vec<Vec<usize>>> = train
        .iter()
        .map(|s| {
            let words: Vec<&str> = s.words.iter().map(String::as_str).collect();
            trainer.intern(&words)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, TaggerModel)> = None;
    let mut stale = 0;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut mistakes = 0;
        for &si in &order {
            mistakes += usize::from(trainer.step(&feats[si], &train[si].tags));
        }
        if val.is_none() && epoch < cfg.epochs {
            log.push(EpochLog {
                epoch,
                mistakes,
                val_f1: None,
            });
            continue;
        }
        let model = trainer.snapshot(cfg.seed, epoch);
        let score = val.map(|v| token_f1(&model, v));
        log.push(EpochLog {
            epoch,
            mistakes,
            val_f1: score,
        });
        match score {
            None => best = Some((0.0, model)),
            Some(s) => {
                if best.as_ref().is_none_or(|(b, _)| s > *b) {
                    best = Some((s, model));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        stop = StopReason::EarlyStop;
                        break;
                    }
                }
            }
        }
    }
    let (_, mut model) = best.expect("at least one epoch");
    model.epochs_run = log.len();
    Ok((model, log, stop))
}
