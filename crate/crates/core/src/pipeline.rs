//! Prediction pipeline: tag → candidates → classify → assemble → standoff.

use rayon::prelude::*;
use thiserror::Error;

use crate::baseline::BaselineModel;
use crate::encoding::{
    assemble_events, bio_decode_names, gen_candidates, EncodeStats, EncodingError, Link,
    MarkerConfig, RelationCandidate, TagSet, NO_RELATION,
};
use crate::event::Event;
use crate::schema::EventSchema;
use crate::standoff::{from_events, AnnotationDoc, FromEventsError};
use crate::textproc::TokenizedDoc;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Events(#[from] FromEventsError),
    #[error("model returned {got} results for {want} inputs")]
    Count { want: usize, got: usize },
    #[error("model error: {0}")]
    Model(String),
}

/// A model filling both pipeline slots. Tag labels and roles are exchanged as
/// strings so that local and remote models are interchangeable.
pub trait Extractor {
    fn markers(&self) -> MarkerConfig {
        MarkerConfig::default()
    }

    /// One BIO label per word for every sentence.
    fn tag(&mut self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, PipelineError>;

    /// One role per candidate, drawn from its allowed roles.
    fn classify(&mut self, candidates: &[RelationCandidate]) -> Result<Vec<String>, PipelineError>;
}

impl Extractor for &BaselineModel {
    fn markers(&self) -> MarkerConfig {
        self.markers.clone()
    }

    fn tag(&mut self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, PipelineError> {
        Ok(sentences
            .par_iter()
            .map(|s| {
                let words: Vec<&str> = s.iter().map(String::as_str).collect();
                self.tagger.tag_names(&words)
            })
            .collect())
    }

    fn classify(&mut self, candidates: &[RelationCandidate]) -> Result<Vec<String>, PipelineError> {
        Ok(candidates
            .par_iter()
            .map(|c| self.relations.classify(c, &self.markers))
            .collect())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Prediction {
    pub events: Vec<Event>,
    pub doc: AnnotationDoc,
    pub stats: EncodeStats,
}

/// Runs the full pipeline over one raw report.
pub fn predict_text<E: Extractor + ?Sized>(
    model: &mut E,
    schema: &EventSchema,
    doc_id: &str,
    text: &str,
) -> Result<Prediction, PipelineError> {
    let markers = model.markers();
    let tok = TokenizedDoc::new(text, []);
    let sentences: Vec<Vec<String>> = tok
        .sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.text.clone()).collect())
        .collect();
    let labels = if sentences.is_empty() {
        Vec::new()
    } else {
        model.tag(&sentences)?
    };
    if labels.len() != sentences.len() {
        return Err(PipelineError::Count {
            want: sentences.len(),
            got: labels.len(),
        });
    }
    let tagset = TagSet::from_schema(schema);
    let mut stats = EncodeStats::default();
    let mut mentions = Vec::with_capacity(sentences.len());
    let mut candidates = Vec::new();
    for (i, (words, tags)) in sentences.iter().zip(&labels).enumerate() {
        if tags.len() != words.len() {
            return Err(EncodingError::LengthMismatch {
                label: "tag",
                labels: tags.len(),
                tokens: words.len(),
            }
            .into());
        }
        let ms = bio_decode_names(tags, &tagset)?;
        let w: Vec<&str> = words.iter().map(String::as_str).collect();
        candidates.extend(gen_candidates(
            i,
            &w,
            &ms,
            &[],
            schema,
            &markers,
            &mut stats,
        ));
        mentions.push(ms);
    }
    let roles = if candidates.is_empty() {
        Vec::new()
    } else {
        model.classify(&candidates)?
    };
    if roles.len() != candidates.len() {
        return Err(PipelineError::Count {
            want: candidates.len(),
            got: roles.len(),
        });
    }
    let mut links: Vec<Vec<Link>> = vec![Vec::new(); sentences.len()];
    for (c, role) in candidates.iter().zip(roles) {
        if role != NO_RELATION && c.allowed_roles.contains(&role) {
            links[c.sentence].push(Link {
                trigger: c.trigger,
                argument: c.argument,
                role,
            });
        }
    }
    let mut events = Vec::new();
    for (i, s) in tok.sentences.iter().enumerate() {
        events.extend(assemble_events(&s.tokens, &mentions[i], &links[i], schema)?);
    }
    for ev in &mut events {
        keep_nearest_single(ev, schema);
    }
    let doc = from_events(doc_id, text, &events, schema)?;
    Ok(Prediction { events, doc, stats })
}

/// For arguments the schema marks non-repeatable, keeps only the instance
/// closest to the trigger.
fn keep_nearest_single(ev: &mut Event, schema: &EventSchema) {
    let dist = |a: &crate::event::Argument| {
        let (t, s) = (&ev.trigger, &a.span);
        if s.start() >= t.end() {
            s.start() - t.end()
        } else {
            t.start().saturating_sub(s.end())
        }
    };
    let mut keep = vec![true; ev.arguments.len()];
    for (i, a) in ev.arguments.iter().enumerate() {
        let Ok(def) = schema.role_argument(&a.role) else {
            continue;
        };
        if def.repeatable {
            continue;
        }
        for (j, b) in ev.arguments.iter().enumerate() {
            if j != i && b.role == a.role && (dist(b), j) < (dist(a), i) {
                keep[i] = false;
            }
        }
    }
    let mut k = keep.into_iter();
    ev.arguments.retain(|_| k.next().unwrap());
}

/// Predicts every document, in parallel, keeping input order.
pub fn predict_corpus(
    model: &BaselineModel,
    schema: &EventSchema,
    docs: &[(String, String)],
) -> Result<Vec<Prediction>, PipelineError> {
    docs.par_iter()
        .map(|(id, text)| {
            let mut m = model;
            predict_text(&mut m, schema, id, text)
        })
        .collect()
}
