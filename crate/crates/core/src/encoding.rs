//! The two supervised task encodings: BIO-tagged token sequences for entity
//! recognition, and marker-bracketed trigger/argument pairs for role
//! classification. Also the way back, from predictions to events.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Argument, Event, Fragment, Span};
use crate::schema::{ArgKind, EventSchema, LabelRef};
use crate::standoff::{self, AnnotationDoc};
use crate::textproc::{AlignError, Token, TokenizedDoc};

/// Negative class for trigger/argument pairs without a link.
pub const NO_RELATION: &str = "No_relation";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("{label} length mismatch: {labels} labels for {tokens} tokens")]
    LengthMismatch {
        label: &'static str,
        labels: usize,
        tokens: usize,
    },
    #[error("{doc}: {source}")]
    Align { doc: String, source: AlignError },
    #[error("relation head {0} is not a trigger entity")]
    HeadNotTrigger(usize),
    #[error("relation references unknown entity {0}")]
    UnknownMention(usize),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("role `{role}` cannot attach to a `{event_type}` trigger")]
    ForeignRole { role: String, event_type: String },
    #[error("marker strings must be pairwise distinct and absent from the corpus: `{0}`")]
    BadMarker(String),
}

/// An entity located inside one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub label: String,
    pub value: Option<String>,
    /// Sentence-local token indices, sorted and non-empty.
    pub tokens: Vec<usize>,
}

impl Mention {
    pub fn first(&self) -> usize {
        self.tokens[0]
    }

    pub fn last(&self) -> usize {
        *self.tokens.last().unwrap()
    }

    /// Smallest contiguous token range containing the mention.
    pub fn hull(&self) -> Range<usize> {
        self.first()..self.last() + 1
    }

    /// Character span of the mention; each run of adjacent tokens becomes one
    /// fragment.
    pub fn span(&self, tokens: &[Token]) -> Span {
        let mut frags: Vec<Fragment> = Vec::new();
        let mut prev: Option<usize> = None;
        for &t in &self.tokens {
            let r = &tokens[t].range;
            match (prev, frags.last_mut()) {
                (Some(p), Some(f)) if p + 1 == t => f.end = r.end,
                _ => frags.push(Fragment::new(r.start, r.end)),
            }
            prev = Some(t);
        }
        Span(frags)
    }
}

/// A directed trigger → argument link between two mentions of a sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub trigger: usize,
    pub argument: usize,
    pub role: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bio {
    O,
    B,
    I,
}

/// Entity class distinguished by the tagger: a label, plus the categorical
/// value for span-with-value labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EntityClass {
    pub label: String,
    pub value: Option<String>,
}

/// Enumerates the BIO tag inventory of a schema. Tag 0 is `O`; class `c` has
/// `B` at `1 + 2c` and `I` at `2 + 2c`.
#[derive(Clone, Debug)]
pub struct TagSet {
    classes: Vec<EntityClass>,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagSet {
    pub fn from_schema(schema: &EventSchema) -> Self {
        let mut classes = Vec::new();
        for label in schema.entity_labels() {
            match schema.label_argument(label) {
                Some(arg) if arg.kind == ArgKind::SpanWithValue => {
                    for v in &arg.values {
                        classes.push(EntityClass {
                            label: label.clone(),
                            value: Some(v.clone()),
                        });
                    }
                }
                _ => classes.push(EntityClass {
                    label: label.clone(),
                    value: None,
                }),
            }
        }
        let mut names = vec!["O".to_string()];
        for c in &classes {
            let base = match &c.value {
                Some(v) => format!("{}-{}", c.label, v),
                None => c.label.clone(),
            };
            names.push(format!("B-{base}"));
            names.push(format!("I-{base}"));
        }
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        TagSet {
            classes,
            names,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, tag: usize) -> &str {
        &self.names[tag]
    }

    pub fn parse(&self, name: &str) -> Result<usize, EncodingError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| EncodingError::UnknownLabel(name.to_string()))
    }

    pub fn classes(&self) -> &[EntityClass] {
        &self.classes
    }

    pub fn bio(&self, tag: usize) -> Bio {
        match tag {
            0 => Bio::O,
            t if t % 2 == 1 => Bio::B,
            _ => Bio::I,
        }
    }

    /// Class index of a non-O tag.
    pub fn class_of(&self, tag: usize) -> Option<usize> {
        (tag > 0).then(|| (tag - 1) / 2)
    }

    pub fn class_index(&self, label: &str, value: Option<&str>) -> Option<usize> {
        self.classes
            .iter()
            .position(|c| c.label == label && c.value.as_deref() == value)
    }

    pub fn begin(class: usize) -> usize {
        1 + 2 * class
    }

    pub fn inside(class: usize) -> usize {
        2 + 2 * class
    }

    /// Whether `cur` may follow `prev` (`None` at sentence start): `I-X` only
    /// continues `B-X` or `I-X`.
    pub fn allowed(&self, prev: Option<usize>, cur: usize) -> bool {
        match self.bio(cur) {
            Bio::I => prev.is_some_and(|p| p != 0 && self.class_of(p) == self.class_of(cur)),
            _ => true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeStats {
    /// Mentions dropped because their tokens were already claimed by a
    /// higher-precedence mention.
    pub conflicts: usize,
    /// Entities with a label or value the tag set cannot express.
    pub unencodable: usize,
    /// Gold links whose trigger and argument fall in different sentences.
    pub cross_sentence_links: usize,
    /// Candidate pairs skipped because trigger and argument overlap.
    pub overlap_skips: usize,
    /// Sentence boundaries removed to keep entities whole.
    pub merged_sentences: usize,
}

impl EncodeStats {
    pub fn add(&mut self, other: &EncodeStats) {
        self.conflicts += other.conflicts;
        self.unencodable += other.unencodable;
        self.cross_sentence_links += other.cross_sentence_links;
        self.overlap_skips += other.overlap_skips;
        self.merged_sentences += other.merged_sentences;
    }
}

/// Tags a sentence of `n_tokens` tokens. Mentions are placed in precedence
/// order (triggers first, then arguments in schema order, then by position);
/// a mention touching an already tagged token is dropped and counted.
pub fn bio_encode(
    n_tokens: usize,
    mentions: &[Mention],
    schema: &EventSchema,
    tags: &TagSet,
    stats: &mut EncodeStats,
) -> Vec<usize> {
    let mut order: Vec<&Mention> = mentions.iter().collect();
    order.sort_by(|a, b| {
        schema
            .label_rank(&a.label)
            .cmp(&schema.label_rank(&b.label))
            .then(a.first().cmp(&b.first()))
            .then(b.tokens.len().cmp(&a.tokens.len()))
            .then(a.value.cmp(&b.value))
    });
    let mut out = vec![0usize; n_tokens];
    for m in order {
        let Some(class) = tags.class_index(&m.label, m.value.as_deref()) else {
            stats.unencodable += 1;
            continue;
        };
        if m.tokens.iter().any(|&t| t >= n_tokens || out[t] != 0) {
            stats.conflicts += 1;
            continue;
        }
        for (k, &t) in m.tokens.iter().enumerate() {
            out[t] = if k == 0 {
                TagSet::begin(class)
            } else {
                TagSet::inside(class)
            };
        }
    }
    out
}

/// Reads maximal B/I runs back into mentions. A stray `I-X` that does not
/// continue an `X` run starts a new mention.
pub fn bio_decode(labels: &[usize], tags: &TagSet) -> Vec<Mention> {
    let mut out: Vec<Mention> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &tag) in labels.iter().enumerate() {
        let class = tags.class_of(tag);
        match (tags.bio(tag), class) {
            (Bio::I, Some(c)) if open == Some(c) => {
                out.last_mut().unwrap().tokens.push(i);
            }
            (Bio::B | Bio::I, Some(c)) => {
                let ec = &tags.classes()[c];
                out.push(Mention {
                    label: ec.label.clone(),
                    value: ec.value.clone(),
                    tokens: vec![i],
                });
                open = Some(c);
            }
            _ => open = None,
        }
    }
    out
}

/// String-level decode; fails on tags outside the schema's inventory.
pub fn bio_decode_names<S: AsRef<str>>(
    labels: &[S],
    tags: &TagSet,
) -> Result<Vec<Mention>, EncodingError> {
    let idx = labels
        .iter()
        .map(|l| tags.parse(l.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(bio_decode(&idx, tags))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerConfig {
    pub trigger_open: String,
    pub trigger_close: String,
    pub arg_open: String,
    pub arg_close: String,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        MarkerConfig {
            trigger_open: "[unused0]".into(),
            trigger_close: "[unused1]".into(),
            arg_open: "[unused2]".into(),
            arg_close: "[unused3]".into(),
        }
    }
}

impl MarkerConfig {
    pub fn all(&self) -> [&str; 4] {
        [
            &self.trigger_open,
            &self.trigger_close,
            &self.arg_open,
            &self.arg_close,
        ]
    }

    pub fn validate<'a>(
        &self,
        vocabulary: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), EncodingError> {
        let all = self.all();
        for (i, m) in all.iter().enumerate() {
            if m.is_empty() || all[..i].contains(m) {
                return Err(EncodingError::BadMarker(m.to_string()));
            }
        }
        for w in vocabulary {
            if all.contains(&w) {
                return Err(EncodingError::BadMarker(w.to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCandidate {
    pub sentence: usize,
    /// Index of the trigger mention within the sentence.
    pub trigger: usize,
    pub event_type: String,
    pub trigger_tokens: Range<usize>,
    pub argument: usize,
    pub argument_label: String,
    pub argument_tokens: Range<usize>,
    pub marked_tokens: Vec<String>,
    pub gold_role: String,
    /// `NO_RELATION` followed by the compatible roles in schema order.
    pub allowed_roles: Vec<String>,
}

fn mark(
    words: &[&str],
    trig: &Range<usize>,
    arg: &Range<usize>,
    markers: &MarkerConfig,
) -> Vec<String> {
    let mut out = Vec::with_capacity(words.len() + 4);
    for (i, w) in words.iter().enumerate() {
        if i == trig.start {
            out.push(markers.trigger_open.clone());
        }
        if i == arg.start {
            out.push(markers.arg_open.clone());
        }
        out.push(w.to_string());
        if i + 1 == trig.end {
            out.push(markers.trigger_close.clone());
        }
        if i + 1 == arg.end {
            out.push(markers.arg_close.clone());
        }
    }
    out
}

/// One candidate per (trigger mention, compatible argument mention) pair.
/// Gold roles come from `links`; unlinked pairs get `NO_RELATION`.
pub fn gen_candidates(
    sentence: usize,
    words: &[&str],
    mentions: &[Mention],
    links: &[Link],
    schema: &EventSchema,
    markers: &MarkerConfig,
    stats: &mut EncodeStats,
) -> Vec<RelationCandidate> {
    let gold: HashMap<(usize, usize), &str> = links
        .iter()
        .map(|l| ((l.trigger, l.argument), l.role.as_str()))
        .collect();
    let mut out = Vec::new();
    for (ti, t) in mentions.iter().enumerate() {
        let Ok(LabelRef::Trigger { event }) = schema.resolve_label(&t.label) else {
            continue;
        };
        let event_type = &schema.event_types()[event].name;
        for (ai, a) in mentions.iter().enumerate() {
            if ai == ti || schema.is_trigger_label(&a.label) {
                continue;
            }
            let roles = schema.roles_between(event, &a.label);
            if roles.is_empty() {
                continue;
            }
            let (th, ah) = (t.hull(), a.hull());
            if th.start < ah.end && ah.start < th.end {
                stats.overlap_skips += 1;
                continue;
            }
            let mut allowed = vec![NO_RELATION.to_string()];
            allowed.extend(roles.iter().map(|r| r.to_string()));
            out.push(RelationCandidate {
                sentence,
                trigger: ti,
                event_type: event_type.clone(),
                argument: ai,
                argument_label: a.label.clone(),
                marked_tokens: mark(words, &th, &ah, markers),
                trigger_tokens: th,
                argument_tokens: ah,
                gold_role: gold
                    .get(&(ti, ai))
                    .map(|r| r.to_string())
                    .unwrap_or_else(|| NO_RELATION.to_string()),
                allowed_roles: allowed,
            });
        }
    }
    out
}

/// Builds one event per trigger mention and attaches every positive relation
/// to its trigger's event.
pub fn assemble_events(
    tokens: &[Token],
    mentions: &[Mention],
    relations: &[Link],
    schema: &EventSchema,
) -> Result<Vec<Event>, EncodingError> {
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut events = Vec::new();
    for (i, m) in mentions.iter().enumerate() {
        if let Ok(LabelRef::Trigger { event }) = schema.resolve_label(&m.label) {
            slot.insert(i, events.len());
            events.push(Event::new(
                schema.event_types()[event].name.clone(),
                m.span(tokens),
            ));
        }
    }
    for rel in relations {
        if rel.role == NO_RELATION {
            continue;
        }
        let &ev = slot
            .get(&rel.trigger)
            .ok_or(EncodingError::HeadNotTrigger(rel.trigger))?;
        let arg = mentions
            .get(rel.argument)
            .ok_or(EncodingError::UnknownMention(rel.argument))?;
        let rr = schema
            .resolve_role(&rel.role)
            .map_err(|_| EncodingError::UnknownRole(rel.role.clone()))?;
        let event = &mut events[ev];
        if schema.event_types()[rr.event].name != event.event_type {
            return Err(EncodingError::ForeignRole {
                role: rel.role.clone(),
                event_type: event.event_type.clone(),
            });
        }
        let value = match schema.argument(rr).kind {
            ArgKind::SpanWithValue => arg.value.clone(),
            ArgKind::SpanOnly => None,
        };
        event.arguments.push(Argument {
            role: rel.role.clone(),
            span: arg.span(tokens),
            value,
        });
    }
    Ok(events)
}

/// A sentence with its entities and gold links, ready for either task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceSample {
    pub doc_id: String,
    pub sentence: usize,
    pub range: Range<usize>,
    pub tokens: Vec<Token>,
    pub mentions: Vec<Mention>,
    pub links: Vec<Link>,
}

impl SentenceSample {
    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

/// Splits an annotated report into sentence samples. Every text-bound with a
/// schema label becomes a mention; event lines become links.
pub fn encode_doc(
    doc: &AnnotationDoc,
    schema: &EventSchema,
    stats: &mut EncodeStats,
) -> Result<Vec<SentenceSample>, EncodingError> {
    let tok = TokenizedDoc::new(&doc.text, doc.textbounds.iter().map(|t| &t.span));
    stats.merged_sentences += tok.merged;
    let mut samples: Vec<SentenceSample> = tok
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| SentenceSample {
            doc_id: doc.doc_id.clone(),
            sentence: i,
            range: s.range.clone(),
            tokens: s.tokens.clone(),
            mentions: Vec::new(),
            links: Vec::new(),
        })
        .collect();

    let attrs = standoff::attribute_index(doc);
    let mut where_is: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut interned: HashMap<(usize, Mention), usize> = HashMap::new();
    for tb in &doc.textbounds {
        let (label, value) = standoff::entity_label_value(&attrs, schema, tb);
        if !schema.contains_label(&label) {
            stats.unencodable += 1;
            continue;
        }
        let aligned = tok.align(&tb.span).map_err(|source| EncodingError::Align {
            doc: doc.doc_id.clone(),
            source,
        })?;
        let m = Mention {
            label,
            value,
            tokens: aligned.tokens,
        };
        let sample = &mut samples[aligned.sentence];
        let idx = *interned
            .entry((aligned.sentence, m.clone()))
            .or_insert_with(|| {
                sample.mentions.push(m);
                sample.mentions.len() - 1
            });
        where_is.insert(tb.id.as_str(), (aligned.sentence, idx));
    }

    let mut seen = BTreeSet::new();
    for ev in &doc.events {
        let Some(&(ts, ti)) = where_is.get(ev.trigger.as_str()) else {
            continue;
        };
        for (raw_role, target) in &ev.args {
            let Some(&(asent, ai)) = where_is.get(target.as_str()) else {
                continue;
            };
            if asent != ts {
                stats.cross_sentence_links += 1;
                continue;
            }
            let role = standoff::strip_role_suffix(raw_role).to_string();
            if schema.resolve_role(&role).is_err() {
                stats.unencodable += 1;
                continue;
            }
            if seen.insert((ts, ti, ai, role.clone())) {
                samples[ts].links.push(Link {
                    trigger: ti,
                    argument: ai,
                    role,
                });
            }
        }
    }
    Ok(samples)
}

/// A sentence with gold tag indices, the NER task unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub doc_id: String,
    pub sentence: usize,
    pub words: Vec<String>,
    pub tags: Vec<usize>,
}

/// Both task encodings of a corpus.
#[derive(Clone, Debug, Default)]
pub struct TaskData {
    pub ner: Vec<TaggedSentence>,
    pub re: Vec<RelationCandidate>,
    pub stats: EncodeStats,
}

/// Encodes every document into tagged sentences and relation candidates.
pub fn encode_corpus(
    docs: &[AnnotationDoc],
    schema: &EventSchema,
    tags: &TagSet,
    markers: &MarkerConfig,
) -> Result<TaskData, EncodingError> {
    let mut out = TaskData::default();
    for doc in docs {
        let samples = encode_doc(doc, schema, &mut out.stats)?;
        for s in samples {
            let words = s.words();
            markers.validate(words.iter().copied())?;
            let seq = bio_encode(words.len(), &s.mentions, schema, tags, &mut out.stats);
            let cands = gen_candidates(
                s.sentence,
                &words,
                &s.mentions,
                &s.links,
                schema,
                markers,
                &mut out.stats,
            );
            out.ner.push(TaggedSentence {
                doc_id: s.doc_id.clone(),
                sentence: s.sentence,
                words: words.iter().map(|w| w.to_string()).collect(),
                tags: seq,
            });
            out.re.extend(cands);
        }
    }
    Ok(out)
}

/// Gold decomposition of single-sentence events into mentions and links.
/// Identical entities are shared between events.
pub fn decompose_events(
    tokens: &[Token],
    events: &[Event],
    schema: &EventSchema,
) -> Result<(Vec<Mention>, Vec<Link>), EncodingError> {
    let ranges: Vec<Range<usize>> = tokens.iter().map(|t| t.range.clone()).collect();
    let locate = |span: &Span| -> Result<Vec<usize>, EncodingError> {
        let toks: Vec<usize> = ranges
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                span.fragments()
                    .iter()
                    .any(|f| r.start < f.end && f.start < r.end)
            })
            .map(|(i, _)| i)
            .collect();
        if toks.is_empty() {
            return Err(EncodingError::Align {
                doc: String::new(),
                source: AlignError::NoTokens(span.clone()),
            });
        }
        Ok(toks)
    };
    let mut mentions: Vec<Mention> = Vec::new();
    let mut intern = |m: Mention| match mentions.iter().position(|x| *x == m) {
        Some(i) => i,
        None => {
            mentions.push(m);
            mentions.len() - 1
        }
    };
    let mut links = Vec::new();
    for ev in events {
        let et = schema
            .event_type(&ev.event_type)
            .map_err(|_| EncodingError::UnknownLabel(ev.event_type.clone()))?;
        let ti = intern(Mention {
            label: et.trigger_label.clone(),
            value: None,
            tokens: locate(&ev.trigger)?,
        });
        for arg in &ev.arguments {
            let def = schema
                .role_argument(&arg.role)
                .map_err(|_| EncodingError::UnknownRole(arg.role.clone()))?;
            let ai = intern(Mention {
                label: def.entity_label.clone(),
                value: if def.has_values() {
                    arg.value.clone()
                } else {
                    None
                },
                tokens: locate(&arg.span)?,
            });
            let link = Link {
                trigger: ti,
                argument: ai,
                role: arg.role.clone(),
            };
            if !links.contains(&link) {
                links.push(link);
            }
        }
    }
    Ok((mentions, links))
}
