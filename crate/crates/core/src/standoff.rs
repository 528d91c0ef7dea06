//! BRAT standoff reader and writer, and conversion between standoff lines and
//! normalized [`Event`]s.
//!
//! Offsets are byte offsets into the UTF-8 report text. Fragment boundaries
//! must fall on character boundaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::event::{Argument, Event, Fragment, Span};
use crate::schema::{ArgKind, EventSchema, Violation};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextBound {
    pub id: String,
    pub label: String,
    pub span: Span,
    pub surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventLine {
    pub id: String,
    pub type_label: String,
    pub trigger: String,
    /// (role name, possibly with a numeric suffix; target TextBound id)
    pub args: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeLine {
    pub id: String,
    pub name: String,
    pub target: String,
    pub value: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationDoc {
    pub doc_id: String,
    pub text: String,
    pub textbounds: Vec<TextBound>,
    pub events: Vec<EventLine>,
    pub attributes: Vec<AttributeLine>,
    /// Relation, normalization, note and comment lines kept verbatim.
    pub passthrough: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ErrorKind {
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("{id}: offset {offset} out of bounds (text length {len})")]
    OffsetOutOfBounds {
        id: String,
        offset: usize,
        len: usize,
    },
    #[error("{id}: offset {offset} is not on a character boundary")]
    NotCharBoundary { id: String, offset: usize },
    #[error("{id}: fragments must be non-empty, sorted and non-overlapping")]
    BadFragments { id: String },
    #[error("{id}: surface `{found}` does not match text `{expected}`")]
    SurfaceMismatch {
        id: String,
        expected: String,
        found: String,
    },
    #[error("{id}: reference to unknown annotation `{target}`")]
    DanglingReference { id: String, target: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

/// A standoff error located by document and 1-based `.ann` line (0 when the
/// document was built in memory).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{doc}:{line}: {kind}")]
pub struct StandoffError {
    pub doc: String,
    pub line: usize,
    pub kind: ErrorKind,
}

fn is_id(s: &str, prefix: char) -> bool {
    let mut chars = s.chars();
    chars.next() == Some(prefix) && {
        let rest = chars.as_str();
        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
    }
}

/// Removes a trailing numeric suffix from a role name (`Anatomy2` → `Anatomy`).
pub fn strip_role_suffix(role: &str) -> &str {
    let base = role.trim_end_matches(|c: char| c.is_ascii_digit());
    if base.is_empty() {
        role
    } else {
        base
    }
}

fn sanitize_surface(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn check_span(text: &str, id: &str, span: &Span) -> Result<(), ErrorKind> {
    let frags = span.fragments();
    if frags.is_empty() {
        return Err(ErrorKind::BadFragments { id: id.to_string() });
    }
    for (i, f) in frags.iter().enumerate() {
        if f.start >= f.end || (i > 0 && frags[i - 1].end > f.start) {
            return Err(ErrorKind::BadFragments { id: id.to_string() });
        }
        for offset in [f.start, f.end] {
            if offset > text.len() {
                return Err(ErrorKind::OffsetOutOfBounds {
                    id: id.to_string(),
                    offset,
                    len: text.len(),
                });
            }
            if !text.is_char_boundary(offset) {
                return Err(ErrorKind::NotCharBoundary {
                    id: id.to_string(),
                    offset,
                });
            }
        }
    }
    Ok(())
}

fn parse_fragments(s: &str) -> Option<Span> {
    let mut frags = Vec::new();
    for part in s.split(';') {
        let mut nums = part.split_whitespace();
        let start = nums.next()?.parse().ok()?;
        let end = nums.next()?.parse().ok()?;
        if nums.next().is_some() {
            return None;
        }
        frags.push(Fragment::new(start, end));
    }
    Some(Span(frags))
}

pub fn parse_ann(doc_id: &str, txt: &str, ann: &str) -> Result<AnnotationDoc, StandoffError> {
    let err = |line: usize, kind: ErrorKind| StandoffError {
        doc: doc_id.to_string(),
        line,
        kind,
    };
    let malformed = |line: usize, msg: &str| err(line, ErrorKind::Malformed(msg.to_string()));

    let mut doc = AnnotationDoc {
        doc_id: doc_id.to_string(),
        text: txt.to_string(),
        ..Default::default()
    };
    let mut lines_of: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in ann.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let id = line.split('\t').next().unwrap_or_default();
        if is_id(id, 'T') {
            let mut fields = line.splitn(3, '\t');
            fields.next();
            let body = fields
                .next()
                .ok_or_else(|| malformed(line_no, "text-bound without label and offsets"))?;
            let surface = fields
                .next()
                .ok_or_else(|| malformed(line_no, "text-bound without surface text"))?;
            let (label, offsets) = body
                .split_once(' ')
                .ok_or_else(|| malformed(line_no, "text-bound without offsets"))?;
            let span = parse_fragments(offsets)
                .ok_or_else(|| malformed(line_no, "cannot parse fragment offsets"))?;
            check_span(txt, id, &span).map_err(|k| err(line_no, k))?;
            let expected = span.surface(txt);
            if sanitize_surface(&expected) != sanitize_surface(surface) {
                return Err(err(
                    line_no,
                    ErrorKind::SurfaceMismatch {
                        id: id.to_string(),
                        expected,
                        found: surface.to_string(),
                    },
                ));
            }
            if lines_of.insert(id.to_string(), line_no).is_some() {
                return Err(err(line_no, ErrorKind::DuplicateId(id.to_string())));
            }
            doc.textbounds.push(TextBound {
                id: id.to_string(),
                label: label.to_string(),
                span,
                surface: surface.to_string(),
            });
        } else if is_id(id, 'E') {
            let body = line
                .split_once('\t')
                .map(|(_, b)| b)
                .ok_or_else(|| malformed(line_no, "event without body"))?;
            let mut parts = body.split_whitespace();
            let (type_label, trigger) = parts
                .next()
                .and_then(|p| p.split_once(':'))
                .ok_or_else(|| malformed(line_no, "event without Type:Trigger"))?;
            let mut args = Vec::new();
            for p in parts {
                let (role, target) = p
                    .split_once(':')
                    .ok_or_else(|| malformed(line_no, "event argument without Role:Id"))?;
                args.push((role.to_string(), target.to_string()));
            }
            if lines_of.insert(id.to_string(), line_no).is_some() {
                return Err(err(line_no, ErrorKind::DuplicateId(id.to_string())));
            }
            doc.events.push(EventLine {
                id: id.to_string(),
                type_label: type_label.to_string(),
                trigger: trigger.to_string(),
                args,
            });
        } else if is_id(id, 'A') {
            let body = line
                .split_once('\t')
                .map(|(_, b)| b)
                .ok_or_else(|| malformed(line_no, "attribute without body"))?;
            let parts: Vec<&str> = body.split_whitespace().collect();
            let (name, target, value) = match parts.as_slice() {
                [n, t] => (*n, *t, None),
                [n, t, v] => (*n, *t, Some(v.to_string())),
                _ => {
                    return Err(malformed(
                        line_no,
                        "attribute must be `Name Target [Value]`",
                    ))
                }
            };
            if lines_of.insert(id.to_string(), line_no).is_some() {
                return Err(err(line_no, ErrorKind::DuplicateId(id.to_string())));
            }
            doc.attributes.push(AttributeLine {
                id: id.to_string(),
                name: name.to_string(),
                target: target.to_string(),
                value,
            });
        } else {
            doc.passthrough.push(line.to_string());
        }
    }

    let tb_ids: HashSet<&str> = doc.textbounds.iter().map(|t| t.id.as_str()).collect();
    let ev_ids: HashSet<&str> = doc.events.iter().map(|e| e.id.as_str()).collect();
    let dangling = |id: &str, target: &str| {
        err(
            lines_of.get(id).copied().unwrap_or(0),
            ErrorKind::DanglingReference {
                id: id.to_string(),
                target: target.to_string(),
            },
        )
    };
    for e in &doc.events {
        if !tb_ids.contains(e.trigger.as_str()) {
            return Err(dangling(&e.id, &e.trigger));
        }
        if let Some((_, t)) = e.args.iter().find(|(_, t)| !tb_ids.contains(t.as_str())) {
            return Err(dangling(&e.id, t));
        }
    }
    for a in &doc.attributes {
        if !tb_ids.contains(a.target.as_str()) && !ev_ids.contains(a.target.as_str()) {
            return Err(dangling(&a.id, &a.target));
        }
    }
    Ok(doc)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SerializeOptions {
    /// Renumber T, E and A ids from 1 in emission order.
    pub canonicalize: bool,
}

pub fn serialize_ann(doc: &AnnotationDoc) -> Result<String, StandoffError> {
    serialize_ann_with(doc, SerializeOptions::default())
}

pub fn serialize_ann_with(
    doc: &AnnotationDoc,
    opts: SerializeOptions,
) -> Result<String, StandoffError> {
    let err = |id: &str, target: &str| StandoffError {
        doc: doc.doc_id.clone(),
        line: 0,
        kind: ErrorKind::DanglingReference {
            id: id.to_string(),
            target: target.to_string(),
        },
    };
    let mut rename: HashMap<&str, String> = HashMap::new();
    for (i, t) in doc.textbounds.iter().enumerate() {
        let new = if opts.canonicalize {
            format!("T{}", i + 1)
        } else {
            t.id.clone()
        };
        rename.insert(t.id.as_str(), new);
    }
    for (i, e) in doc.events.iter().enumerate() {
        let new = if opts.canonicalize {
            format!("E{}", i + 1)
        } else {
            e.id.clone()
        };
        rename.insert(e.id.as_str(), new);
    }
    let tb_ids: HashSet<&str> = doc.textbounds.iter().map(|t| t.id.as_str()).collect();

    let mut out = String::new();
    for t in &doc.textbounds {
        out.push_str(&format!(
            "{}\t{} {}\t{}\n",
            rename[t.id.as_str()],
            t.label,
            t.span,
            sanitize_surface(&t.surface)
        ));
    }
    for e in &doc.events {
        if !tb_ids.contains(e.trigger.as_str()) {
            return Err(err(&e.id, &e.trigger));
        }
        let mut line = format!(
            "{}\t{}:{}",
            rename[e.id.as_str()],
            e.type_label,
            rename[e.trigger.as_str()]
        );
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (role, target) in &e.args {
            if !tb_ids.contains(target.as_str()) {
                return Err(err(&e.id, target));
            }
            let base = strip_role_suffix(role);
            let n = seen.entry(base).or_default();
            *n += 1;
            if *n == 1 {
                line.push_str(&format!(" {}:{}", base, rename[target.as_str()]));
            } else {
                line.push_str(&format!(" {}{}:{}", base, n, rename[target.as_str()]));
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    for (i, a) in doc.attributes.iter().enumerate() {
        let target = rename
            .get(a.target.as_str())
            .ok_or_else(|| err(&a.id, &a.target))?;
        let id = if opts.canonicalize {
            format!("A{}", i + 1)
        } else {
            a.id.clone()
        };
        match &a.value {
            Some(v) => out.push_str(&format!("{}\t{} {} {}\n", id, a.name, target, v)),
            None => out.push_str(&format!("{}\t{} {}\n", id, a.name, target)),
        }
    }
    for p in &doc.passthrough {
        out.push_str(p);
        out.push('\n');
    }
    Ok(out)
}

/// Id-free view of a document used to compare annotation sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticDoc {
    pub textbounds: Vec<(String, Span)>,
    pub events: Vec<SemanticEvent>,
    pub attributes: Vec<(String, String, Option<String>)>,
    pub passthrough: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SemanticEvent {
    pub type_label: String,
    pub trigger: (String, Span),
    pub args: Vec<(String, (String, Span))>,
}

impl fmt::Display for SemanticEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.type_label, self.trigger.1)
    }
}

impl AnnotationDoc {
    pub fn textbound(&self, id: &str) -> Option<&TextBound> {
        self.textbounds.iter().find(|t| t.id == id)
    }

    pub fn semantic(&self) -> SemanticDoc {
        let tbs: HashMap<&str, (String, Span)> = self
            .textbounds
            .iter()
            .map(|t| (t.id.as_str(), (t.label.clone(), t.span.clone())))
            .collect();
        let resolve = |id: &str| tbs.get(id).cloned().unwrap_or_default();
        let mut events_by_id = HashMap::new();
        let mut events = Vec::new();
        for e in &self.events {
            let mut args: Vec<_> = e
                .args
                .iter()
                .map(|(r, t)| (strip_role_suffix(r).to_string(), resolve(t)))
                .collect();
            args.sort();
            let se = SemanticEvent {
                type_label: e.type_label.clone(),
                trigger: resolve(&e.trigger),
                args,
            };
            events_by_id.insert(e.id.as_str(), se.clone());
            events.push(se);
        }
        events.sort();
        let mut attributes: Vec<_> = self
            .attributes
            .iter()
            .map(|a| {
                let target = match tbs.get(a.target.as_str()) {
                    Some((l, s)) => format!("T:{l}@{s}"),
                    None => events_by_id
                        .get(a.target.as_str())
                        .map(|e| format!("E:{e}"))
                        .unwrap_or_default(),
                };
                (a.name.clone(), target, a.value.clone())
            })
            .collect();
        attributes.sort();
        let mut textbounds: Vec<_> = tbs.into_values().collect();
        textbounds.sort();
        let mut passthrough = self.passthrough.clone();
        passthrough.sort();
        SemanticDoc {
            textbounds,
            events,
            attributes,
            passthrough,
        }
    }
}

/// A non-fatal problem found while converting standoff lines to events.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Issue {
    #[error("{id}: unknown event type `{type_label}`")]
    UnknownEventType { id: String, type_label: String },
    #[error("{id}: role `{role}` points at a `{label}` entity")]
    LabelMismatch {
        id: String,
        role: String,
        label: String,
    },
    #[error("{0}")]
    Schema(Violation),
}

#[derive(Clone, Debug, Default)]
pub struct Conversion {
    pub events: Vec<Event>,
    pub issues: Vec<Issue>,
}

/// Resolves an entity's label and categorical value, accepting both the
/// attribute dialect and the value-suffixed label dialect.
pub(crate) fn entity_label_value(
    doc_attrs: &HashMap<(&str, &str), Option<&str>>,
    schema: &EventSchema,
    tb: &TextBound,
) -> (String, Option<String>) {
    if let Some(arg) = schema.label_argument(&tb.label) {
        if arg.kind == ArgKind::SpanOnly {
            return (tb.label.clone(), None);
        }
        let value = doc_attrs
            .get(&(tb.id.as_str(), arg.attr_name.as_str()))
            .copied()
            .flatten()
            .map(str::to_string)
            .or_else(|| arg.default_value.clone());
        return (tb.label.clone(), value);
    }
    if let Some((arg, v)) = schema.split_value_label(&tb.label) {
        return (arg.entity_label.clone(), Some(v.to_string()));
    }
    (tb.label.clone(), None)
}

pub(crate) fn attribute_index(doc: &AnnotationDoc) -> HashMap<(&str, &str), Option<&str>> {
    doc.attributes
        .iter()
        .map(|a| ((a.target.as_str(), a.name.as_str()), a.value.as_deref()))
        .collect()
}

pub fn to_events(doc: &AnnotationDoc, schema: &EventSchema) -> Conversion {
    let tbs: HashMap<&str, &TextBound> =
        doc.textbounds.iter().map(|t| (t.id.as_str(), t)).collect();
    let attrs = attribute_index(doc);
    let mut conv = Conversion::default();

    for line in &doc.events {
        let Some(trigger) = tbs.get(line.trigger.as_str()) else {
            continue;
        };
        let type_idx = schema
            .event_type_index(&line.type_label)
            .or_else(|| schema.event_type_index(&trigger.label));
        let Some(type_idx) = type_idx else {
            conv.issues.push(Issue::UnknownEventType {
                id: line.id.clone(),
                type_label: line.type_label.clone(),
            });
            continue;
        };
        let et = &schema.event_types()[type_idx];
        let mut event = Event::new(et.name.clone(), trigger.span.clone());
        for (raw_role, target) in &line.args {
            let Some(tb) = tbs.get(target.as_str()) else {
                continue;
            };
            let role = strip_role_suffix(raw_role);
            let (label, value) = entity_label_value(&attrs, schema, tb);
            if let Ok(def) = schema.role_argument(role) {
                if def.entity_label != label {
                    conv.issues.push(Issue::LabelMismatch {
                        id: line.id.clone(),
                        role: role.to_string(),
                        label: tb.label.clone(),
                    });
                }
            }
            event.arguments.push(Argument {
                role: role.to_string(),
                span: tb.span.clone(),
                value,
            });
        }
        conv.events.push(event);
    }
    conv.issues.extend(
        crate::schema::validate_events(schema, &conv.events)
            .into_iter()
            .map(Issue::Schema),
    );
    conv
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FromEventsError {
    #[error("event {event}: {kind}")]
    Span { event: usize, kind: ErrorKind },
    #[error("event {event}: {source}")]
    Schema {
        event: usize,
        source: crate::schema::SchemaError,
    },
    #[error("event {event}: role `{role}` does not belong to event type `{event_type}`")]
    ForeignRole {
        event: usize,
        role: String,
        event_type: String,
    },
}

/// Builds a standoff document holding `events`. Identical entities (same
/// label, span and value) share one text-bound.
pub fn from_events(
    doc_id: &str,
    text: &str,
    events: &[Event],
    schema: &EventSchema,
) -> Result<AnnotationDoc, FromEventsError> {
    let mut doc = AnnotationDoc {
        doc_id: doc_id.to_string(),
        text: text.to_string(),
        ..Default::default()
    };
    let mut tb_ids: BTreeMap<(String, Span, Option<String>), String> = BTreeMap::new();
    let mut intern = |doc: &mut AnnotationDoc,
                      label: &str,
                      span: &Span,
                      value: Option<&str>,
                      attr: Option<&str>| {
        let key = (label.to_string(), span.clone(), value.map(str::to_string));
        if let Some(id) = tb_ids.get(&key) {
            return id.clone();
        }
        let id = format!("T{}", doc.textbounds.len() + 1);
        doc.textbounds.push(TextBound {
            id: id.clone(),
            label: label.to_string(),
            span: span.clone(),
            surface: sanitize_surface(&span.surface(text)),
        });
        if let (Some(v), Some(name)) = (value, attr) {
            doc.attributes.push(AttributeLine {
                id: format!("A{}", doc.attributes.len() + 1),
                name: name.to_string(),
                target: id.clone(),
                value: Some(v.to_string()),
            });
        }
        tb_ids.insert(key, id.clone());
        id
    };

    for (ei, ev) in events.iter().enumerate() {
        let et = schema
            .event_type(&ev.event_type)
            .map_err(|source| FromEventsError::Schema { event: ei, source })?;
        check_span(text, "trigger", &ev.trigger)
            .map_err(|kind| FromEventsError::Span { event: ei, kind })?;
        let trigger = intern(&mut doc, &et.trigger_label, &ev.trigger, None, None);
        let mut line = EventLine {
            id: format!("E{}", ei + 1),
            type_label: et.trigger_label.clone(),
            trigger,
            args: Vec::new(),
        };
        for arg in &ev.arguments {
            let def = schema
                .role_argument(&arg.role)
                .map_err(|source| FromEventsError::Schema { event: ei, source })?;
            if !et.arguments.iter().any(|a| a == def) {
                return Err(FromEventsError::ForeignRole {
                    event: ei,
                    role: arg.role.clone(),
                    event_type: ev.event_type.clone(),
                });
            }
            check_span(text, &arg.role, &arg.span)
                .map_err(|kind| FromEventsError::Span { event: ei, kind })?;
            let value = if def.has_values() {
                arg.value.as_deref()
            } else {
                None
            };
            let id = intern(
                &mut doc,
                &def.entity_label,
                &arg.span,
                value,
                Some(&def.attr_name),
            );
            line.args.push((arg.role.clone(), id));
        }
        doc.events.push(line);
    }
    Ok(doc)
}
