//! Normalized finding events shared by every stage of the pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A half-open byte range `[start, end)` into a report's raw text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fragment {
    pub start: usize,
    pub end: usize,
}

impl Fragment {
    pub fn new(start: usize, end: usize) -> Self {
        Fragment { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// An ordered, non-overlapping set of fragments. Most spans have a single
/// fragment; discontinuous annotations carry several.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Span(pub Vec<Fragment>);

impl Span {
    pub fn contiguous(start: usize, end: usize) -> Self {
        Span(vec![Fragment::new(start, end)])
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.0
    }

    pub fn start(&self) -> usize {
        self.0.first().map(|f| f.start).unwrap_or(0)
    }

    pub fn end(&self) -> usize {
        self.0.last().map(|f| f.end).unwrap_or(0)
    }

    /// Fragment substrings joined by a single space, the standoff surface rule.
    pub fn surface(&self, text: &str) -> String {
        self.0
            .iter()
            .map(|f| &text[f.start..f.end])
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|fr| format!("{} {}", fr.start, fr.end))
            .collect();
        f.write_str(&parts.join(";"))
    }
}

/// One trigger-to-argument link inside an event.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Argument {
    pub role: String,
    pub span: Span,
    /// Categorical label for span-with-value arguments, `None` for span-only ones.
    pub value: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub event_type: String,
    pub trigger: Span,
    pub arguments: Vec<Argument>,
}

impl Event {
    pub fn new(event_type: impl Into<String>, trigger: Span) -> Self {
        Event {
            event_type: event_type.into(),
            trigger,
            arguments: Vec::new(),
        }
    }

    pub fn with_argument(
        mut self,
        role: impl Into<String>,
        span: Span,
        value: Option<&str>,
    ) -> Self {
        self.arguments.push(Argument {
            role: role.into(),
            span,
            value: value.map(str::to_string),
        });
        self
    }

    /// Copy with arguments in canonical order, for order-insensitive comparison.
    pub fn normalized(&self) -> Event {
        let mut e = self.clone();
        e.arguments.sort();
        e
    }
}

/// Sorts events and their arguments so two event sets can be compared as sets.
pub fn normalize_events(events: &[Event]) -> Vec<Event> {
    let mut out: Vec<Event> = events.iter().map(Event::normalized).collect();
    out.sort();
    out
}
