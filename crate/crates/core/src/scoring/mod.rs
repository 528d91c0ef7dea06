//! Evaluation: token-level entity scores, trigger alignment, role scores
//! with kind-specific equivalence, inter-annotator agreement and corpus
//! statistics.

mod metrics;
pub mod report;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, Span};
use crate::schema::{ArgKind, EventSchema};
use crate::standoff::{self, to_events, AnnotationDoc};
use crate::textproc::TokenizedDoc;

pub use metrics::Metrics;
pub use stats::{corpus_stats, CorpusStats, Summary};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("document sets differ: only in gold {only_gold:?}, only in prediction {only_pred:?}")]
    DocumentMismatch {
        only_gold: Vec<String>,
        only_pred: Vec<String>,
    },
    #[error("{0}: gold and predicted text differ")]
    TextMismatch(String),
    #[error("role `{0}` is not in the schema")]
    UnknownRole(String),
}

/// An event with trigger and argument spans mapped to global token indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenEvent {
    pub event_type: String,
    pub trigger: BTreeSet<usize>,
    pub arguments: Vec<TokenArgument>,
    /// The source event in canonical form; used only to break ties.
    pub key: Event,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenArgument {
    pub role: String,
    pub tokens: BTreeSet<usize>,
    pub value: Option<String>,
}

pub fn token_set(tok: &TokenizedDoc, span: &Span) -> BTreeSet<usize> {
    tok.global_tokens(span).into_iter().collect()
}

pub fn token_events(tok: &TokenizedDoc, events: &[Event]) -> Vec<TokenEvent> {
    events
        .iter()
        .map(|e| TokenEvent {
            event_type: e.event_type.clone(),
            trigger: token_set(tok, &e.trigger),
            arguments: e
                .arguments
                .iter()
                .map(|a| TokenArgument {
                    role: a.role.clone(),
                    tokens: token_set(tok, &a.span),
                    value: a.value.clone(),
                })
                .collect(),
            key: e.normalized(),
        })
        .collect()
}

/// One-to-one trigger matching. Candidate pairs share an event type and at
/// least one trigger token. Pairs are taken greedily by overlap, larger
/// first; equal overlaps are ordered by the two events' canonical forms,
/// smaller pair first, compared without regard to which side each came from.
/// Returns `(gold, pred)` index pairs sorted by gold index.
pub fn align_triggers(gold: &[TokenEvent], pred: &[TokenEvent]) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            if g.event_type != p.event_type {
                continue;
            }
            let overlap = g.trigger.intersection(&p.trigger).count();
            if overlap == 0 {
                continue;
            }
            let (lo, hi) = if g.key <= p.key {
                (&g.key, &p.key)
            } else {
                (&p.key, &g.key)
            };
            cands.push((std::cmp::Reverse(overlap), lo, hi, gi, pi));
        }
    }
    cands.sort();
    let mut used_g = vec![false; gold.len()];
    let mut used_p = vec![false; pred.len()];
    let mut out = Vec::new();
    for (_, _, _, gi, pi) in cands {
        if !used_g[gi] && !used_p[pi] {
            used_g[gi] = true;
            used_p[pi] = true;
            out.push((gi, pi));
        }
    }
    out.sort_unstable();
    out
}

/// Role and trigger counts for one document or a whole corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventScores {
    pub triggers: BTreeMap<String, Metrics>,
    pub roles: BTreeMap<String, Metrics>,
    pub unmatched_gold: usize,
    pub unmatched_pred: usize,
}

impl EventScores {
    pub fn merge(&mut self, o: &EventScores) {
        for (k, v) in &o.triggers {
            *self.triggers.entry(k.clone()).or_default() += *v;
        }
        for (k, v) in &o.roles {
            *self.roles.entry(k.clone()).or_default() += *v;
        }
        self.unmatched_gold += o.unmatched_gold;
        self.unmatched_pred += o.unmatched_pred;
    }
}

fn role_union(ev: &TokenEvent, role: &str) -> BTreeSet<usize> {
    ev.arguments
        .iter()
        .filter(|a| a.role == role)
        .flat_map(|a| a.tokens.iter().copied())
        .collect()
}

fn value_counts<'a>(ev: &'a TokenEvent, role: &str) -> HashMap<Option<&'a str>, usize> {
    let mut m = HashMap::new();
    for a in ev.arguments.iter().filter(|a| a.role == role) {
        *m.entry(a.value.as_deref()).or_insert(0) += 1;
    }
    m
}

fn role_metrics(
    kind: ArgKind,
    role: &str,
    g: Option<&TokenEvent>,
    p: Option<&TokenEvent>,
) -> Metrics {
    match kind {
        ArgKind::SpanOnly => {
            let gs = g.map(|e| role_union(e, role)).unwrap_or_default();
            let ps = p.map(|e| role_union(e, role)).unwrap_or_default();
            let tp = gs.intersection(&ps).count();
            Metrics::new(tp, ps.len() - tp, gs.len() - tp)
        }
        ArgKind::SpanWithValue => {
            let gc = g.map(|e| value_counts(e, role)).unwrap_or_default();
            let pc = p.map(|e| value_counts(e, role)).unwrap_or_default();
            let mut m = Metrics::default();
            for (v, &n) in &gc {
                let k = pc.get(v).copied().unwrap_or(0);
                m.tp += n.min(k);
                m.fn_ += n - n.min(k);
            }
            for (v, &k) in &pc {
                let n = gc.get(v).copied().unwrap_or(0);
                m.fp += k - n.min(k);
            }
            m
        }
    }
}

/// Trigger and role scores for one document's events.
pub fn score_roles(
    gold: &[TokenEvent],
    pred: &[TokenEvent],
    schema: &EventSchema,
) -> Result<EventScores, ScoreError> {
    for a in gold.iter().chain(pred).flat_map(|e| &e.arguments) {
        schema
            .resolve_role(&a.role)
            .map_err(|_| ScoreError::UnknownRole(a.role.clone()))?;
    }
    let mut out = EventScores::default();
    for et in schema.event_types() {
        out.triggers.insert(et.name.clone(), Metrics::default());
    }
    for r in schema.roles() {
        out.roles.insert(r.to_string(), Metrics::default());
    }
    let pairs = align_triggers(gold, pred);
    let mut g_match = vec![None; gold.len()];
    let mut p_used = vec![false; pred.len()];
    for &(gi, pi) in &pairs {
        g_match[gi] = Some(pi);
        p_used[pi] = true;
    }
    let roles: Vec<(String, ArgKind)> = schema
        .roles()
        .into_iter()
        .map(|r| (r.to_string(), schema.role_kind(r).expect("schema role")))
        .collect();
    let mut add = |g: Option<&TokenEvent>, p: Option<&TokenEvent>| {
        let et = g.or(p).unwrap().event_type.clone();
        let t = out.triggers.entry(et).or_default();
        match (g, p) {
            (Some(_), Some(_)) => t.tp += 1,
            (Some(_), None) => t.fn_ += 1,
            _ => t.fp += 1,
        }
        for (role, kind) in &roles {
            let m = role_metrics(*kind, role, g, p);
            *out.roles.get_mut(role).unwrap() += m;
        }
    };
    for (gi, g) in gold.iter().enumerate() {
        add(Some(g), g_match[gi].map(|pi| &pred[pi]));
    }
    for (pi, p) in pred.iter().enumerate() {
        if !p_used[pi] {
            add(None, Some(p));
        }
    }
    out.unmatched_gold = gold.len() - pairs.len();
    out.unmatched_pred = pred.len() - pairs.len();
    Ok(out)
}

/// Per-label token counts plus a per-value breakdown for valued labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityScores {
    pub labels: BTreeMap<String, Metrics>,
    /// Keyed by label, then value.
    pub values: BTreeMap<String, BTreeMap<String, Metrics>>,
}

impl EntityScores {
    pub fn merge(&mut self, o: &EntityScores) {
        for (k, v) in &o.labels {
            *self.labels.entry(k.clone()).or_default() += *v;
        }
        for (k, vs) in &o.values {
            let e = self.values.entry(k.clone()).or_default();
            for (v, m) in vs {
                *e.entry(v.clone()).or_default() += *m;
            }
        }
    }

    pub fn overall(&self) -> Metrics {
        self.labels.values().copied().sum()
    }
}

type Pairs = HashSet<(usize, String, Option<String>)>;

fn entity_tokens(doc: &AnnotationDoc, tok: &TokenizedDoc, schema: &EventSchema) -> Pairs {
    let attrs = standoff::attribute_index(doc);
    let mut out = HashSet::new();
    for tb in &doc.textbounds {
        let (label, value) = standoff::entity_label_value(&attrs, schema, tb);
        if !schema.contains_label(&label) {
            continue;
        }
        for t in tok.global_tokens(&tb.span) {
            out.insert((t, label.clone(), value.clone()));
        }
    }
    out
}

fn set_metrics<T: Eq + std::hash::Hash>(g: &HashSet<T>, p: &HashSet<T>) -> Metrics {
    let tp = g.intersection(p).count();
    Metrics::new(tp, p.len() - tp, g.len() - tp)
}

/// Token-level entity scores for one document pair.
pub fn score_entities_doc(
    gold: &AnnotationDoc,
    pred: &AnnotationDoc,
    schema: &EventSchema,
) -> EntityScores {
    let tok = TokenizedDoc::new(&gold.text, []);
    let g = entity_tokens(gold, &tok, schema);
    let p = entity_tokens(pred, &tok, schema);
    let mut out = EntityScores::default();
    for label in schema.entity_labels() {
        let by_label = |s: &Pairs| -> HashSet<usize> {
            s.iter()
                .filter(|(_, l, _)| l == label)
                .map(|(t, _, _)| *t)
                .collect()
        };
        out.labels
            .insert(label.clone(), set_metrics(&by_label(&g), &by_label(&p)));
        if let Some(arg) = schema.label_argument(label).filter(|a| a.has_values()) {
            let mut per = BTreeMap::new();
            for v in &arg.values {
                let by_value = |s: &Pairs| -> HashSet<usize> {
                    s.iter()
                        .filter(|(_, l, val)| l == label && val.as_deref() == Some(v.as_str()))
                        .map(|(t, _, _)| *t)
                        .collect()
                };
                per.insert(v.clone(), set_metrics(&by_value(&g), &by_value(&p)));
            }
            out.values.insert(label.clone(), per);
        }
    }
    out
}

/// Full evaluation of one system against gold.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub documents: usize,
    pub entities: EntityScores,
    pub events: EventScores,
    /// Standoff-to-event problems found on the gold side and the predicted side.
    pub gold_issues: usize,
    pub pred_issues: usize,
}

impl ScoreReport {
    pub fn merge(&mut self, o: &ScoreReport) {
        self.documents += o.documents;
        self.entities.merge(&o.entities);
        self.events.merge(&o.events);
        self.gold_issues += o.gold_issues;
        self.pred_issues += o.pred_issues;
    }

    pub fn trigger_overall(&self) -> Metrics {
        self.events.triggers.values().copied().sum()
    }

    fn rollup(&self, schema: &EventSchema, kind: ArgKind) -> Metrics {
        self.events
            .roles
            .iter()
            .filter(|(r, _)| schema.role_kind(r).ok() == Some(kind))
            .map(|(_, m)| *m)
            .sum()
    }

    pub fn span_only(&self, schema: &EventSchema) -> Metrics {
        self.rollup(schema, ArgKind::SpanOnly)
    }

    pub fn span_with_value(&self, schema: &EventSchema) -> Metrics {
        self.rollup(schema, ArgKind::SpanWithValue)
    }

    /// Named scalar scores, in a fixed order, for cross-validation tables.
    pub fn scalars(&self, schema: &EventSchema) -> Vec<(String, f64)> {
        let mut out = vec![
            ("entity_f1".to_string(), self.entities.overall().f1()),
            ("trigger_f1".to_string(), self.trigger_overall().f1()),
            ("span_only_f1".to_string(), self.span_only(schema).f1()),
            (
                "span_with_value_f1".to_string(),
                self.span_with_value(schema).f1(),
            ),
        ];
        for r in schema.roles() {
            let m = self.events.roles.get(r).copied().unwrap_or_default();
            out.push((format!("{r}_f1"), m.f1()));
        }
        out
    }
}

/// Scores one document pair. Both documents must carry the same text.
pub fn score_doc(
    gold: &AnnotationDoc,
    pred: &AnnotationDoc,
    schema: &EventSchema,
) -> Result<ScoreReport, ScoreError> {
    if gold.text != pred.text {
        return Err(ScoreError::TextMismatch(gold.doc_id.clone()));
    }
    let tok = TokenizedDoc::new(&gold.text, []);
    let gc = to_events(gold, schema);
    let pc = to_events(pred, schema);
    let events = score_roles(
        &token_events(&tok, &gc.events),
        &token_events(&tok, &pc.events),
        schema,
    )?;
    Ok(ScoreReport {
        documents: 1,
        entities: score_entities_doc(gold, pred, schema),
        events,
        gold_issues: gc.issues.len(),
        pred_issues: pc.issues.len(),
    })
}

fn pair_up<'a>(
    gold: &'a [AnnotationDoc],
    pred: &'a [AnnotationDoc],
) -> Result<Vec<(&'a AnnotationDoc, &'a AnnotationDoc)>, ScoreError> {
    let pm: HashMap<&str, &AnnotationDoc> = pred.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let gm: HashSet<&str> = gold.iter().map(|d| d.doc_id.as_str()).collect();
    let mut only_gold: Vec<String> = gold
        .iter()
        .filter(|d| !pm.contains_key(d.doc_id.as_str()))
        .map(|d| d.doc_id.clone())
        .collect();
    let mut only_pred: Vec<String> = pred
        .iter()
        .filter(|d| !gm.contains(d.doc_id.as_str()))
        .map(|d| d.doc_id.clone())
        .collect();
    if !only_gold.is_empty() || !only_pred.is_empty() {
        only_gold.sort();
        only_pred.sort();
        return Err(ScoreError::DocumentMismatch {
            only_gold,
            only_pred,
        });
    }
    Ok(gold.iter().map(|g| (g, pm[g.doc_id.as_str()])).collect())
}

/// Scores a predicted corpus against gold, matching documents by id.
pub fn score_corpus(
    gold: &[AnnotationDoc],
    pred: &[AnnotationDoc],
    schema: &EventSchema,
) -> Result<ScoreReport, ScoreError> {
    let pairs = pair_up(gold, pred)?;
    let per_doc: Vec<ScoreReport> = pairs
        .par_iter()
        .map(|(g, p)| score_doc(g, p, schema))
        .collect::<Result<_, _>>()?;
    let mut out = ScoreReport::default();
    for r in &per_doc {
        out.merge(r);
    }
    if out.events.triggers.is_empty() {
        out.events = score_roles(&[], &[], schema)?;
        out.entities =
            score_entities_doc(&AnnotationDoc::default(), &AnnotationDoc::default(), schema);
    }
    Ok(out)
}

/// Token-level entity scores over a corpus.
pub fn score_entities_token(
    gold: &[AnnotationDoc],
    pred: &[AnnotationDoc],
    schema: &EventSchema,
) -> Result<EntityScores, ScoreError> {
    let pairs = pair_up(gold, pred)?;
    let mut out = score_entities_doc(&AnnotationDoc::default(), &AnnotationDoc::default(), schema);
    for (g, p) in pairs {
        if g.text != p.text {
            return Err(ScoreError::TextMismatch(g.doc_id.clone()));
        }
        out.merge(&score_entities_doc(g, p, schema));
    }
    Ok(out)
}

/// Agreement between two annotators: `a` is scored as gold, `b` as
/// prediction. F1 values do not depend on the order.
pub fn pairwise_iaa(
    a: &[AnnotationDoc],
    b: &[AnnotationDoc],
    schema: &EventSchema,
) -> Result<ScoreReport, ScoreError> {
    score_corpus(a, b, schema)
}

#[cfg(test)]
mod tests;
