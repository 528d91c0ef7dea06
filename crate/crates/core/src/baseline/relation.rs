//! Averaged multiclass perceptron over trigger/argument candidates.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::relation_features;
use super::perceptron::{f1, Averaged, FeatureIndex};
use super::{BaselineError, EpochLog, StopReason, TrainConfig};
use crate::encoding::{MarkerConfig, RelationCandidate, NO_RELATION};

/// Features of a candidate, computed from its marked token sequence.
pub fn candidate_features(c: &RelationCandidate, markers: &MarkerConfig) -> Vec<String> {
    let m = markers.all();
    let words: Vec<&str> = c
        .marked_tokens
        .iter()
        .map(String::as_str)
        .filter(|w| !m.contains(w))
        .collect();
    relation_features(
        &words,
        &c.trigger_tokens,
        &c.argument_tokens,
        &c.event_type,
        &c.argument_label,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelModel {
    /// `NO_RELATION` first, then schema roles.
    pub roles: Vec<String>,
    pub seed: u64,
    pub epochs_run: usize,
    features: Vec<String>,
    /// Row-major `features × roles`.
    weights: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    role_index: HashMap<String, usize>,
}

impl PartialEq for RelModel {
    fn eq(&self, other: &Self) -> bool {
        self.roles == other.roles
            && self.seed == other.seed
            && self.epochs_run == other.epochs_run
            && self.features == other.features
            && self.weights == other.weights
    }
}

impl RelModel {
    fn from_parts(
        roles: Vec<String>,
        seed: u64,
        epochs_run: usize,
        index: &FeatureIndex,
        weights: &[f64],
    ) -> Self {
        let n = roles.len();
        let mut features = Vec::new();
        let mut kept = Vec::new();
        for (i, name) in index.names.iter().enumerate() {
            let row = &weights[i * n..(i + 1) * n];
            if row.iter().any(|&w| w != 0.0) {
                features.push(name.clone());
                kept.extend_from_slice(row);
            }
        }
        let mut m = RelModel {
            roles,
            seed,
            epochs_run,
            features,
            weights: kept,
            index: HashMap::new(),
            role_index: HashMap::new(),
        };
        m.rebuild();
        m
    }

    pub(crate) fn rebuild(&mut self) {
        self.index = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        self.role_index = self
            .roles
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
    }

    pub(crate) fn check(&self) -> bool {
        !self.roles.is_empty() && self.weights.len() == self.features.len() * self.roles.len()
    }

    pub fn untrained(roles: Vec<String>) -> Self {
        RelModel::from_parts(roles, 0, 0, &FeatureIndex::default(), &[])
    }

    fn scores(&self, feats: &[String]) -> Vec<f64> {
        let n = self.roles.len();
        let mut s = vec![0.0; n];
        for f in feats {
            if let Some(&r) = self.index.get(f) {
                for (k, w) in self.weights[r * n..(r + 1) * n].iter().enumerate() {
                    s[k] += w;
                }
            }
        }
        s
    }

    /// Best role among `allowed`, scanning in order so ties keep the earlier
    /// entry (`NO_RELATION` leads every allowed list).
    pub fn classify_features(&self, feats: &[String], allowed: &[String]) -> String {
        let s = self.scores(feats);
        let mut best: Option<(&str, f64)> = None;
        for role in allowed {
            let v = self.role_index.get(role).map(|&i| s[i]).unwrap_or(0.0);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((role, v));
            }
        }
        best.map(|(r, _)| r.to_string())
            .unwrap_or_else(|| NO_RELATION.to_string())
    }

    pub fn classify(&self, c: &RelationCandidate, markers: &MarkerConfig) -> String {
        self.classify_features(&candidate_features(c, markers), &c.allowed_roles)
    }
}

struct Example {
    feats: Vec<usize>,
    allowed: Vec<usize>,
    gold: usize,
}

fn positive_f1(model: &RelModel, val: &[RelationCandidate], markers: &MarkerConfig) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in val {
        let p = model.classify(c, markers);
        if p == c.gold_role && p != NO_RELATION {
            tp += 1;
        } else {
            fp += usize::from(p != NO_RELATION);
            fn_ += usize::from(c.gold_role != NO_RELATION);
        }
    }
    f1(tp, fp, fn_)
}

/// Online learner behind [`train_rel`]; one `learn` call is one perceptron
/// instance.
#[derive(Clone, Debug)]
pub struct RelTrainer {
    roles: Vec<String>,
    role_index: HashMap<String, usize>,
    index: FeatureIndex,
    w: Averaged,
}

impl RelTrainer {
    /// `roles` lists `NO_RELATION` first.
    pub fn new(roles: &[String]) -> Self {
        RelTrainer {
            roles: roles.to_vec(),
            role_index: roles
                .iter()
                .enumerate()
                .map(|(i, r)| (r.clone(), i))
                .collect(),
            index: FeatureIndex::default(),
            w: Averaged::new(0),
        }
    }

    fn lookup(&self, r: &str) -> Result<usize, BaselineError> {
        self.role_index
            .get(r)
            .copied()
            .ok_or_else(|| BaselineError::UnknownRole(r.to_string()))
    }

    fn example(
        &mut self,
        c: &RelationCandidate,
        markers: &MarkerConfig,
    ) -> Result<Example, BaselineError> {
        let allowed = c
            .allowed_roles
            .iter()
            .map(|r| self.lookup(r))
            .collect::<Result<Vec<_>, _>>()?;
        let gold = self.lookup(&c.gold_role)?;
        if !allowed.contains(&gold) {
            return Err(BaselineError::UnknownRole(c.gold_role.clone()));
        }
        let feats = candidate_features(c, markers)
            .iter()
            .map(|f| self.index.intern(f))
            .collect();
        self.w.grow(self.index.names.len() * self.roles.len());
        Ok(Example {
            feats,
            allowed,
            gold,
        })
    }

    fn step(&mut self, ex: &Example) -> bool {
        let n = self.roles.len();
        let mut scores = vec![0i64; n];
        for &f in &ex.feats {
            for (k, v) in self.w.w[f * n..(f + 1) * n].iter().enumerate() {
                scores[k] += v;
            }
        }
        let mut pred = ex.allowed[0];
        for &r in &ex.allowed[1..] {
            if scores[r] > scores[pred] {
                pred = r;
            }
        }
        let wrong = pred != ex.gold;
        if wrong {
            for &f in &ex.feats {
                self.w.update(f * n + ex.gold, 1);
                self.w.update(f * n + pred, -1);
            }
        }
        self.w.tick();
        wrong
    }

    /// One update on a candidate with a gold role; returns whether it was a
    /// mistake.
    pub fn learn(
        &mut self,
        c: &RelationCandidate,
        markers: &MarkerConfig,
    ) -> Result<bool, BaselineError> {
        let ex = self.example(c, markers)?;
        Ok(self.step(&ex))
    }

    /// The averaged model so far.
    pub fn snapshot(&self, seed: u64, epochs_run: usize) -> RelModel {
        RelModel::from_parts(
            self.roles.clone(),
            seed,
            epochs_run,
            &self.index,
            &self.w.averaged(),
        )
    }
}

/// Trains over `roles` (`NO_RELATION` first). Each update compares the gold
/// role with the best-scoring role in the candidate's allowed list.
pub fn train_rel(
    roles: &[String],
    train: &[RelationCandidate],
    val: Option<&[RelationCandidate]>,
    markers: &MarkerConfig,
    cfg: &TrainConfig,
) -> Result<(RelModel, Vec<EpochLog>, StopReason), BaselineError> {
    if cfg.epochs == 0 {
        return Err(BaselineError::NoEpochs);
    }
    if train.is_empty() {
        return Err(BaselineError::EmptyCorpus("relation classifier"));
    }
    let mut trainer = RelTrainer::new(roles);
    let data = train
        .iter()
        .map(|c| trainer.example(c, markers))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, RelModel)> = None;
    let mut stale = 0;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut mistakes = 0;
        for &i in &order {
            mistakes += usize::from(trainer.step(&data[i]));
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
        let score = val.map(|v| positive_f1(&model, v, markers));
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
