//! Event schema: finding types, their triggers, argument kinds, categorical
//! value sets and role names.
//!
//! Schemas are written in a small line-oriented config language:
//!
//! ```text
//! # comment
//! event <Name>
//!   trigger <EntityLabel>
//!   arg <Name> label=<EntityLabel> kind=span|value [values=v1|v2] [default=v]
//!       [roles=r1|r2] [attr=<AttrName>] [repeat=yes|no]
//! ```
//!
//! `roles=` defaults to a single role named after the entity label, `attr=`
//! defaults to the entity label followed by `Val`, and `repeat=` defaults to
//! `yes`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::event::Event;

/// The built-in Lesion / Medical-Problem schema in config form.
pub const DEFAULT_SCHEMA_CONFIG: &str = "\
# Lesion and Medical-Problem findings
event Lesion
  trigger Lesion-Description
  arg Anatomy label=Lesion-Anatomy kind=span
  arg Assertion label=Lesion-Assertion kind=value values=present|absent|possible default=present
  arg Characteristic label=Lesion-Characteristic kind=span
  arg Count label=Lesion-Count kind=span
  arg Size label=Lesion-Size kind=span roles=Lesion-Size-Present|Lesion-Size-Past
  arg Size-Trend label=Lesion-Size-Trend kind=value values=new|increasing|decreasing|no-change
event Medical-Problem
  trigger Medical-Problem
  arg Anatomy label=Medical-Anatomy kind=span
  arg Assertion label=Medical-Assertion kind=value values=present|absent|possible default=present
";

/// Argument names that become single-valued under strict cardinality.
const STRICT_SINGLE_ARGUMENTS: &[&str] = &["Count", "Size", "Size-Trend"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no event types")]
    NoEventTypes,
    #[error("duplicate entity label `{0}`")]
    DuplicateLabel(String),
    #[error("duplicate role `{0}`")]
    DuplicateRole(String),
    #[error("duplicate event type `{0}`")]
    DuplicateEventType(String),
    #[error("argument `{0}` has kind=value but no values")]
    EmptyValueSet(String),
    #[error("argument `{0}` has kind=span but declares values")]
    UnexpectedValueSet(String),
    #[error("default `{value}` of argument `{arg}` is not one of its values")]
    DefaultNotInValues { arg: String, value: String },
    #[error("argument `{0}` declares no roles")]
    NoRoles(String),
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("unknown entity label `{0}`")]
    UnknownLabel(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("unknown event type `{0}`")]
    UnknownEventType(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArgKind {
    SpanOnly,
    SpanWithValue,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgumentDef {
    pub name: String,
    pub entity_label: String,
    pub kind: ArgKind,
    pub values: Vec<String>,
    pub default_value: Option<String>,
    pub roles: Vec<String>,
    pub repeatable: bool,
    /// Standoff attribute name carrying the categorical value.
    pub attr_name: String,
}

impl ArgumentDef {
    pub fn span_only(name: &str, label: &str) -> Self {
        ArgumentDef {
            name: name.to_string(),
            entity_label: label.to_string(),
            kind: ArgKind::SpanOnly,
            values: Vec::new(),
            default_value: None,
            roles: vec![label.to_string()],
            repeatable: true,
            attr_name: format!("{label}Val"),
        }
    }

    pub fn with_values(name: &str, label: &str, values: &[&str], default: Option<&str>) -> Self {
        ArgumentDef {
            kind: ArgKind::SpanWithValue,
            values: values.iter().map(|v| v.to_string()).collect(),
            default_value: default.map(str::to_string),
            ..ArgumentDef::span_only(name, label)
        }
    }

    pub fn has_values(&self) -> bool {
        self.kind == ArgKind::SpanWithValue
    }

    pub fn allows_value(&self, value: &str) -> bool {
        self.values.iter().any(|v| v == value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventTypeDef {
    pub name: String,
    pub trigger_label: String,
    pub arguments: Vec<ArgumentDef>,
}

/// What an entity label denotes inside the schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelRef {
    Trigger { event: usize },
    Argument { event: usize, arg: usize },
}

impl LabelRef {
    pub fn event(&self) -> usize {
        match *self {
            LabelRef::Trigger { event } | LabelRef::Argument { event, .. } => event,
        }
    }

    pub fn is_trigger(&self) -> bool {
        matches!(self, LabelRef::Trigger { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoleRef {
    pub event: usize,
    pub arg: usize,
}

/// An immutable, validated event schema with label and role lookups.
#[derive(Clone, Debug)]
pub struct EventSchema {
    event_types: Vec<EventTypeDef>,
    labels: HashMap<String, LabelRef>,
    roles: HashMap<String, RoleRef>,
    /// Entity labels in precedence order: triggers first, then arguments in
    /// declaration order.
    precedence: Vec<String>,
}

impl PartialEq for EventSchema {
    fn eq(&self, other: &Self) -> bool {
        self.event_types == other.event_types
    }
}

impl Eq for EventSchema {}

fn valid_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | '|' | '=' | ':' | '#'))
}

impl EventSchema {
    pub fn new(event_types: Vec<EventTypeDef>) -> Result<Self, SchemaError> {
        if event_types.is_empty() {
            return Err(SchemaError::NoEventTypes);
        }
        let mut labels = HashMap::new();
        let mut roles = HashMap::new();
        let mut names = HashSet::new();
        let mut triggers = Vec::new();
        let mut arguments = Vec::new();

        for (ei, et) in event_types.iter().enumerate() {
            if !valid_identifier(&et.name) {
                return Err(SchemaError::InvalidIdentifier(et.name.clone()));
            }
            if !names.insert(et.name.clone()) {
                return Err(SchemaError::DuplicateEventType(et.name.clone()));
            }
            if !valid_identifier(&et.trigger_label) {
                return Err(SchemaError::InvalidIdentifier(et.trigger_label.clone()));
            }
            if labels
                .insert(et.trigger_label.clone(), LabelRef::Trigger { event: ei })
                .is_some()
            {
                return Err(SchemaError::DuplicateLabel(et.trigger_label.clone()));
            }
            triggers.push(et.trigger_label.clone());
            for (ai, arg) in et.arguments.iter().enumerate() {
                for id in [&arg.name, &arg.entity_label, &arg.attr_name] {
                    if !valid_identifier(id) {
                        return Err(SchemaError::InvalidIdentifier(id.clone()));
                    }
                }
                match arg.kind {
                    ArgKind::SpanWithValue if arg.values.is_empty() => {
                        return Err(SchemaError::EmptyValueSet(arg.name.clone()))
                    }
                    ArgKind::SpanOnly if !arg.values.is_empty() => {
                        return Err(SchemaError::UnexpectedValueSet(arg.name.clone()))
                    }
                    _ => {}
                }
                let mut seen_values = HashSet::new();
                for v in &arg.values {
                    if !valid_identifier(v) || !seen_values.insert(v) {
                        return Err(SchemaError::InvalidIdentifier(v.clone()));
                    }
                }
                if let Some(d) = &arg.default_value {
                    if !arg.allows_value(d) {
                        return Err(SchemaError::DefaultNotInValues {
                            arg: arg.name.clone(),
                            value: d.clone(),
                        });
                    }
                }
                if arg.roles.is_empty() {
                    return Err(SchemaError::NoRoles(arg.name.clone()));
                }
                if labels
                    .insert(
                        arg.entity_label.clone(),
                        LabelRef::Argument { event: ei, arg: ai },
                    )
                    .is_some()
                {
                    return Err(SchemaError::DuplicateLabel(arg.entity_label.clone()));
                }
                arguments.push(arg.entity_label.clone());
                for role in &arg.roles {
                    // a trailing digit would be indistinguishable from a standoff role suffix
                    if !valid_identifier(role) || role.ends_with(|c: char| c.is_ascii_digit()) {
                        return Err(SchemaError::InvalidIdentifier(role.clone()));
                    }
                    if roles
                        .insert(role.clone(), RoleRef { event: ei, arg: ai })
                        .is_some()
                    {
                        return Err(SchemaError::DuplicateRole(role.clone()));
                    }
                }
            }
        }
        triggers.extend(arguments);
        Ok(EventSchema {
            event_types,
            labels,
            roles,
            precedence: triggers,
        })
    }

    pub fn event_types(&self) -> &[EventTypeDef] {
        &self.event_types
    }

    /// Looks up an event type by its name or by its trigger label.
    pub fn event_type_index(&self, name: &str) -> Option<usize> {
        self.event_types
            .iter()
            .position(|et| et.name == name)
            .or_else(|| {
                self.event_types
                    .iter()
                    .position(|et| et.trigger_label == name)
            })
    }

    pub fn event_type(&self, name: &str) -> Result<&EventTypeDef, SchemaError> {
        self.event_type_index(name)
            .map(|i| &self.event_types[i])
            .ok_or_else(|| SchemaError::UnknownEventType(name.to_string()))
    }

    pub fn resolve_label(&self, label: &str) -> Result<LabelRef, SchemaError> {
        self.labels
            .get(label)
            .copied()
            .ok_or_else(|| SchemaError::UnknownLabel(label.to_string()))
    }

    pub fn contains_label(&self, label: &str) -> bool {
        self.labels.contains_key(label)
    }

    /// Resolves labels of the value-suffixed dialect, e.g.
    /// `Medical-Assertion-absent` → (Medical-Assertion, absent).
    pub fn split_value_label<'a>(&'a self, label: &str) -> Option<(&'a ArgumentDef, &'a str)> {
        for et in &self.event_types {
            for arg in et.arguments.iter().filter(|a| a.has_values()) {
                if let Some(rest) = label
                    .strip_prefix(arg.entity_label.as_str())
                    .and_then(|r| r.strip_prefix('-'))
                {
                    if let Some(v) = arg.values.iter().find(|v| v.as_str() == rest) {
                        return Some((arg, v.as_str()));
                    }
                }
            }
        }
        None
    }

    pub fn resolve_role(&self, role: &str) -> Result<RoleRef, SchemaError> {
        self.roles
            .get(role)
            .copied()
            .ok_or_else(|| SchemaError::UnknownRole(role.to_string()))
    }

    pub fn argument(&self, r: RoleRef) -> &ArgumentDef {
        &self.event_types[r.event].arguments[r.arg]
    }

    pub fn role_argument(&self, role: &str) -> Result<&ArgumentDef, SchemaError> {
        self.resolve_role(role).map(|r| self.argument(r))
    }

    /// Argument definition owning an entity label, `None` for triggers.
    pub fn label_argument(&self, label: &str) -> Option<&ArgumentDef> {
        match self.labels.get(label)? {
            LabelRef::Argument { event, arg } => Some(&self.event_types[*event].arguments[*arg]),
            LabelRef::Trigger { .. } => None,
        }
    }

    pub fn is_trigger_label(&self, label: &str) -> bool {
        matches!(self.labels.get(label), Some(LabelRef::Trigger { .. }))
    }

    /// Entity labels ordered by tagging precedence.
    pub fn entity_labels(&self) -> &[String] {
        &self.precedence
    }

    pub fn label_rank(&self, label: &str) -> usize {
        self.precedence
            .iter()
            .position(|l| l == label)
            .unwrap_or(usize::MAX)
    }

    /// All role identifiers in declaration order.
    pub fn roles(&self) -> Vec<&str> {
        self.event_types
            .iter()
            .flat_map(|et| et.arguments.iter())
            .flat_map(|a| a.roles.iter().map(String::as_str))
            .collect()
    }

    /// Roles linking a trigger of `event_type` to an argument entity labelled
    /// `entity_label`, in declaration order.
    pub fn roles_between(&self, event_type: usize, entity_label: &str) -> Vec<&str> {
        self.event_types
            .get(event_type)
            .into_iter()
            .flat_map(|et| et.arguments.iter())
            .filter(|a| a.entity_label == entity_label)
            .flat_map(|a| a.roles.iter().map(String::as_str))
            .collect()
    }

    pub fn role_kind(&self, role: &str) -> Result<ArgKind, SchemaError> {
        self.role_argument(role).map(|a| a.kind)
    }

    /// Marks Count, Size and Size-Trend arguments as single-valued.
    pub fn strict(mut self) -> Self {
        for et in &mut self.event_types {
            for arg in &mut et.arguments {
                if STRICT_SINGLE_ARGUMENTS.contains(&arg.name.as_str()) {
                    arg.repeatable = false;
                }
            }
        }
        self
    }
}

pub fn default_schema() -> EventSchema {
    let lesion = EventTypeDef {
        name: "Lesion".into(),
        trigger_label: "Lesion-Description".into(),
        arguments: vec![
            ArgumentDef::span_only("Anatomy", "Lesion-Anatomy"),
            ArgumentDef::with_values(
                "Assertion",
                "Lesion-Assertion",
                &["present", "absent", "possible"],
                Some("present"),
            ),
            ArgumentDef::span_only("Characteristic", "Lesion-Characteristic"),
            ArgumentDef::span_only("Count", "Lesion-Count"),
            ArgumentDef {
                roles: vec!["Lesion-Size-Present".into(), "Lesion-Size-Past".into()],
                ..ArgumentDef::span_only("Size", "Lesion-Size")
            },
            ArgumentDef::with_values(
                "Size-Trend",
                "Lesion-Size-Trend",
                &["new", "increasing", "decreasing", "no-change"],
                None,
            ),
        ],
    };
    let problem = EventTypeDef {
        name: "Medical-Problem".into(),
        trigger_label: "Medical-Problem".into(),
        arguments: vec![
            ArgumentDef::span_only("Anatomy", "Medical-Anatomy"),
            ArgumentDef::with_values(
                "Assertion",
                "Medical-Assertion",
                &["present", "absent", "possible"],
                Some("present"),
            ),
        ],
    };
    EventSchema::new(vec![lesion, problem]).expect("built-in schema is valid")
}

fn parse_err(line: usize, message: impl Into<String>) -> SchemaError {
    SchemaError::Parse {
        line,
        message: message.into(),
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split('|').map(str::to_string).collect()
}

pub fn load_schema(config_text: &str) -> Result<EventSchema, SchemaError> {
    let mut event_types: Vec<EventTypeDef> = Vec::new();
    let mut trigger_seen = false;

    for (idx, raw) in config_text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or_default();
        match keyword {
            "event" => {
                if let Some(prev) = event_types.last() {
                    if !trigger_seen {
                        return Err(parse_err(
                            line_no,
                            format!("event `{}` has no trigger", prev.name),
                        ));
                    }
                }
                let name = words
                    .next()
                    .ok_or_else(|| parse_err(line_no, "expected event name"))?;
                if words.next().is_some() {
                    return Err(parse_err(line_no, "unexpected text after event name"));
                }
                event_types.push(EventTypeDef {
                    name: name.to_string(),
                    trigger_label: String::new(),
                    arguments: Vec::new(),
                });
                trigger_seen = false;
            }
            "trigger" => {
                let et = event_types
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "trigger outside of an event block"))?;
                if trigger_seen {
                    return Err(parse_err(line_no, "second trigger in event block"));
                }
                let label = words
                    .next()
                    .ok_or_else(|| parse_err(line_no, "expected trigger label"))?;
                if words.next().is_some() {
                    return Err(parse_err(line_no, "unexpected text after trigger label"));
                }
                et.trigger_label = label.to_string();
                trigger_seen = true;
            }
            "arg" => {
                let et = event_types
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "arg outside of an event block"))?;
                let name = words
                    .next()
                    .ok_or_else(|| parse_err(line_no, "expected argument name"))?;
                let mut label = None;
                let mut kind = None;
                let mut values = Vec::new();
                let mut default = None;
                let mut roles = None;
                let mut attr = None;
                let mut repeatable = true;
                for kv in words {
                    let (key, value) = kv.split_once('=').ok_or_else(|| {
                        parse_err(line_no, format!("expected key=value, got `{kv}`"))
                    })?;
                    match key {
                        "label" => label = Some(value.to_string()),
                        "kind" => {
                            kind = Some(match value {
                                "span" => ArgKind::SpanOnly,
                                "value" => ArgKind::SpanWithValue,
                                other => {
                                    return Err(parse_err(
                                        line_no,
                                        format!("unknown kind `{other}`"),
                                    ))
                                }
                            })
                        }
                        "values" => values = split_list(value),
                        "default" => default = Some(value.to_string()),
                        "roles" => roles = Some(split_list(value)),
                        "attr" => attr = Some(value.to_string()),
                        "repeat" => {
                            repeatable = match value {
                                "yes" => true,
                                "no" => false,
                                other => {
                                    return Err(parse_err(
                                        line_no,
                                        format!("repeat must be yes or no, got `{other}`"),
                                    ))
                                }
                            }
                        }
                        other => return Err(parse_err(line_no, format!("unknown key `{other}`"))),
                    }
                }
                let label = label.ok_or_else(|| parse_err(line_no, "missing label="))?;
                let kind = kind.ok_or_else(|| parse_err(line_no, "missing kind="))?;
                et.arguments.push(ArgumentDef {
                    name: name.to_string(),
                    roles: roles.unwrap_or_else(|| vec![label.clone()]),
                    attr_name: attr.unwrap_or_else(|| format!("{label}Val")),
                    entity_label: label,
                    kind,
                    values,
                    default_value: default,
                    repeatable,
                });
            }
            other => return Err(parse_err(line_no, format!("unknown directive `{other}`"))),
        }
    }
    if let Some(last) = event_types.last() {
        if !trigger_seen {
            return Err(parse_err(
                config_text.lines().count(),
                format!("event `{}` has no trigger", last.name),
            ));
        }
    }
    EventSchema::new(event_types)
}

/// Emits config text that `load_schema` turns back into an equal schema.
pub fn serialize_schema(schema: &EventSchema) -> String {
    let mut out = String::new();
    for et in schema.event_types() {
        let _ = writeln!(out, "event {}", et.name);
        let _ = writeln!(out, "  trigger {}", et.trigger_label);
        for arg in &et.arguments {
            let kind = match arg.kind {
                ArgKind::SpanOnly => "span",
                ArgKind::SpanWithValue => "value",
            };
            let _ = write!(
                out,
                "  arg {} label={} kind={}",
                arg.name, arg.entity_label, kind
            );
            if !arg.values.is_empty() {
                let _ = write!(out, " values={}", arg.values.join("|"));
            }
            if let Some(d) = &arg.default_value {
                let _ = write!(out, " default={d}");
            }
            let _ = write!(out, " roles={}", arg.roles.join("|"));
            let _ = write!(out, " attr={}", arg.attr_name);
            if !arg.repeatable {
                out.push_str(" repeat=no");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    #[error("event {event}: unknown event type `{event_type}`")]
    UnknownEventType { event: usize, event_type: String },
    #[error("event {event}: unknown role `{role}`")]
    UnknownRole { event: usize, role: String },
    #[error("event {event}: role `{role}` does not belong to event type `{event_type}`")]
    RoleNotInEventType {
        event: usize,
        role: String,
        event_type: String,
    },
    #[error("event {event}: value `{value}` not allowed for role `{role}`")]
    ValueNotAllowed {
        event: usize,
        role: String,
        value: String,
    },
    #[error("event {event}: role `{role}` requires a categorical value")]
    MissingValue { event: usize, role: String },
    #[error("event {event}: span-only role `{role}` carries value `{value}`")]
    UnexpectedValue {
        event: usize,
        role: String,
        value: String,
    },
    #[error("event {event}: non-repeatable role `{role}` appears more than once")]
    DuplicateArgument { event: usize, role: String },
}

pub fn validate_events(schema: &EventSchema, events: &[Event]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (ei, ev) in events.iter().enumerate() {
        let Some(type_idx) = schema.event_type_index(&ev.event_type) else {
            out.push(Violation::UnknownEventType {
                event: ei,
                event_type: ev.event_type.clone(),
            });
            continue;
        };
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for arg in &ev.arguments {
            let role = match schema.resolve_role(&arg.role) {
                Ok(r) => r,
                Err(_) => {
                    out.push(Violation::UnknownRole {
                        event: ei,
                        role: arg.role.clone(),
                    });
                    continue;
                }
            };
            if role.event != type_idx {
                out.push(Violation::RoleNotInEventType {
                    event: ei,
                    role: arg.role.clone(),
                    event_type: ev.event_type.clone(),
                });
                continue;
            }
            let def = schema.argument(role);
            match (def.kind, &arg.value) {
                (ArgKind::SpanWithValue, None) => out.push(Violation::MissingValue {
                    event: ei,
                    role: arg.role.clone(),
                }),
                (ArgKind::SpanWithValue, Some(v)) if !def.allows_value(v) => {
                    out.push(Violation::ValueNotAllowed {
                        event: ei,
                        role: arg.role.clone(),
                        value: v.clone(),
                    })
                }
                (ArgKind::SpanOnly, Some(v)) => out.push(Violation::UnexpectedValue {
                    event: ei,
                    role: arg.role.clone(),
                    value: v.clone(),
                }),
                _ => {}
            }
            let n = counts.entry(arg.role.as_str()).or_default();
            *n += 1;
            if *n == 2 && !def.repeatable {
                out.push(Violation::DuplicateArgument {
                    event: ei,
                    role: arg.role.clone(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Span;

    #[test]
    fn default_config_matches_builtin() {
        let loaded = load_schema(DEFAULT_SCHEMA_CONFIG).unwrap();
        assert_eq!(loaded, default_schema());
        assert_eq!(loaded.event_types().len(), 2);
        assert_eq!(loaded.entity_labels().len(), 10);
        // Lesion-Size carries two roles; every other argument carries one.
        assert_eq!(loaded.roles().len(), 9);
        assert_eq!(
            loaded.roles_between(0, "Lesion-Size"),
            vec!["Lesion-Size-Present", "Lesion-Size-Past"]
        );
    }

    #[test]
    fn default_schema_shape() {
        let s = default_schema();
        let lesion = s.event_type("Lesion").unwrap();
        let assertion = &lesion.arguments[1];
        assert_eq!(assertion.default_value.as_deref(), Some("present"));
        assert_eq!(assertion.attr_name, "Lesion-AssertionVal");
        assert_eq!(s.event_type("Medical-Problem").unwrap().arguments.len(), 2);
        assert!(s
            .event_types()
            .iter()
            .all(|et| et.arguments.iter().all(|a| a.repeatable)));
    }

    #[test]
    fn duplicate_label_rejected() {
        let cfg = "event A\n trigger T\n arg X label=L kind=span\n arg Y label=L kind=span\n";
        assert_eq!(
            load_schema(cfg),
            Err(SchemaError::DuplicateLabel("L".into()))
        );
    }

    #[test]
    fn empty_config_rejected() {
        assert_eq!(load_schema(""), Err(SchemaError::NoEventTypes));
        assert_eq!(
            load_schema("# only a comment\n"),
            Err(SchemaError::NoEventTypes)
        );
    }

    #[test]
    fn value_kind_errors() {
        let cfg = "event A\n trigger T\n arg X label=L kind=value\n";
        assert_eq!(
            load_schema(cfg),
            Err(SchemaError::EmptyValueSet("X".into()))
        );
        let cfg = "event A\n trigger T\n arg X label=L kind=value values=a|b default=c\n";
        assert!(matches!(
            load_schema(cfg),
            Err(SchemaError::DefaultNotInValues { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cfg = "event A\n  trigger T\n  arg X label=L kind=blob\n";
        assert!(matches!(
            load_schema(cfg),
            Err(SchemaError::Parse { line: 3, .. })
        ));
        let cfg = "trigger T\n";
        assert!(matches!(
            load_schema(cfg),
            Err(SchemaError::Parse { line: 1, .. })
        ));
        let cfg = "event A\nevent B\n trigger T\n";
        assert!(matches!(
            load_schema(cfg),
            Err(SchemaError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_role_and_digit_suffix_rejected() {
        let cfg = "event A\n trigger T\n arg X label=L kind=span roles=R\n arg Y label=M kind=span roles=R\n";
        assert_eq!(
            load_schema(cfg),
            Err(SchemaError::DuplicateRole("R".into()))
        );
        let cfg = "event A\n trigger T\n arg X label=L kind=span roles=R2\n";
        assert!(matches!(
            load_schema(cfg),
            Err(SchemaError::InvalidIdentifier(_))
        ));
    }

    #[test]
    fn label_resolution_fails_loudly() {
        let s = default_schema();
        assert_eq!(
            s.resolve_label("Lesion-Size"),
            Ok(LabelRef::Argument { event: 0, arg: 4 })
        );
        assert_eq!(
            s.resolve_label("Medical-Problem"),
            Ok(LabelRef::Trigger { event: 1 })
        );
        assert_eq!(
            s.resolve_label("Lesion-Sise"),
            Err(SchemaError::UnknownLabel("Lesion-Sise".into()))
        );
        let (arg, v) = s.split_value_label("Medical-Assertion-absent").unwrap();
        assert_eq!(
            (arg.entity_label.as_str(), v),
            ("Medical-Assertion", "absent")
        );
        assert!(s.split_value_label("Medical-Assertion-maybe").is_none());
    }

    fn sp(a: usize, b: usize) -> Span {
        Span::contiguous(a, b)
    }

    #[test]
    fn validate_examples() {
        let s = default_schema();
        let wrong_type = Event::new("Medical-Problem", sp(0, 4)).with_argument(
            "Lesion-Size-Present",
            sp(5, 9),
            None,
        );
        assert_eq!(validate_events(&s, &[wrong_type]).len(), 1);

        let two_anatomy = Event::new("Lesion", sp(0, 4))
            .with_argument("Lesion-Anatomy", sp(5, 9), None)
            .with_argument("Lesion-Anatomy", sp(10, 14), None);
        assert!(validate_events(&s, &[two_anatomy]).is_empty());

        let maybe = Event::new("Lesion", sp(0, 4)).with_argument(
            "Lesion-Assertion",
            sp(5, 9),
            Some("maybe"),
        );
        assert_eq!(
            validate_events(&s, &[maybe]),
            vec![Violation::ValueNotAllowed {
                event: 0,
                role: "Lesion-Assertion".into(),
                value: "maybe".into()
            }]
        );
    }

    #[test]
    fn strict_mode_flags_repeated_count() {
        let ev = Event::new("Lesion", sp(0, 4))
            .with_argument("Lesion-Count", sp(5, 6), None)
            .with_argument("Lesion-Count", sp(7, 8), None);
        assert!(validate_events(&default_schema(), &[ev.clone()]).is_empty());
        let strict = default_schema().strict();
        assert_eq!(validate_events(&strict, &[ev]).len(), 1);
    }

    #[test]
    fn serialize_round_trips() {
        let s = default_schema().strict();
        assert_eq!(load_schema(&serialize_schema(&s)).unwrap(), s);
    }
}
