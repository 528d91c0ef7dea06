//! Corpus statistics: entity and role counts per label, and per-report
//! distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::schema::EventSchema;
use crate::standoff::{self, to_events, AnnotationDoc};
use crate::textproc::TokenizedDoc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Some(Summary {
            min: v[0],
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    /// Text-bound counts per entity label.
    pub entities: BTreeMap<String, usize>,
    /// Text-bound counts per value of valued labels.
    pub entity_values: BTreeMap<String, BTreeMap<String, usize>>,
    /// Argument links per role; an entity shared by k events counts k times.
    pub roles: BTreeMap<String, usize>,
    pub events: BTreeMap<String, usize>,
    pub words_per_report: Option<Summary>,
    pub events_per_report: Option<Summary>,
    pub events_per_report_by_type: BTreeMap<String, Option<Summary>>,
    pub arguments_per_event: Option<Summary>,
}

pub fn corpus_stats(docs: &[AnnotationDoc], schema: &EventSchema) -> CorpusStats {
    let mut st = CorpusStats {
        documents: docs.len(),
        ..Default::default()
    };
    for l in schema.entity_labels() {
        st.entities.insert(l.clone(), 0);
        if let Some(arg) = schema.label_argument(l).filter(|a| a.has_values()) {
            st.entity_values.insert(
                l.clone(),
                arg.values.iter().map(|v| (v.clone(), 0)).collect(),
            );
        }
    }
    for r in schema.roles() {
        st.roles.insert(r.to_string(), 0);
    }
    let types: Vec<String> = schema
        .event_types()
        .iter()
        .map(|e| e.name.clone())
        .collect();
    for t in &types {
        st.events.insert(t.clone(), 0);
    }
    let mut words = Vec::new();
    let mut events = Vec::new();
    let mut by_type: BTreeMap<String, Vec<f64>> =
        types.iter().map(|t| (t.clone(), Vec::new())).collect();
    let mut args = Vec::new();
    for d in docs {
        words.push(TokenizedDoc::new(&d.text, []).token_count() as f64);
        let attrs = standoff::attribute_index(d);
        for tb in &d.textbounds {
            let (label, value) = standoff::entity_label_value(&attrs, schema, tb);
            if let Some(c) = st.entities.get_mut(&label) {
                *c += 1;
            }
            if let (Some(vs), Some(v)) = (st.entity_values.get_mut(&label), value) {
                *vs.entry(v).or_insert(0) += 1;
            }
        }
        let evs = to_events(d, schema).events;
        events.push(evs.len() as f64);
        for t in &types {
            let n = evs.iter().filter(|e| &e.event_type == t).count();
            by_type.get_mut(t).unwrap().push(n as f64);
            *st.events.get_mut(t).unwrap() += n;
        }
        for e in &evs {
            args.push(e.arguments.len() as f64);
            for a in &e.arguments {
                *st.roles.entry(a.role.clone()).or_insert(0) += 1;
            }
        }
    }
    st.words_per_report = Summary::of(&words);
    st.events_per_report = Summary::of(&events);
    st.events_per_report_by_type = by_type
        .into_iter()
        .map(|(k, v)| (k, Summary::of(&v)))
        .collect();
    st.arguments_per_event = Summary::of(&args);
    st
}
