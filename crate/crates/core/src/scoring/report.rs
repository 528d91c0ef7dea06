//! JSON and CSV renderings of score reports. Counts are exact integers;
//! rates are rounded to 4 decimals.

use serde_json::{json, Map, Value};

use super::{Metrics, ScoreReport};
use crate::schema::EventSchema;

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn metrics_json(m: &Metrics) -> Value {
    json!({
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn_,
        "precision": round4(m.precision()),
        "recall": round4(m.recall()),
        "f1": round4(m.f1()),
    })
}

/// Report rows in schema order: `(section, name, metrics)`.
pub fn rows(r: &ScoreReport, schema: &EventSchema) -> Vec<(String, String, Metrics)> {
    let mut out = Vec::new();
    for l in schema.entity_labels() {
        out.push((
            "entity".into(),
            l.clone(),
            r.entities.labels.get(l).copied().unwrap_or_default(),
        ));
        if let Some(vals) = r.entities.values.get(l) {
            let arg = schema.label_argument(l).expect("valued label");
            for v in &arg.values {
                let m = vals.get(v).copied().unwrap_or_default();
                out.push(("entity_value".into(), format!("{l}-{v}"), m));
            }
        }
    }
    out.push(("entity_overall".into(), "all".into(), r.entities.overall()));
    for et in schema.event_types() {
        out.push((
            "trigger".into(),
            et.name.clone(),
            r.events.triggers.get(&et.name).copied().unwrap_or_default(),
        ));
    }
    out.push(("trigger_overall".into(), "all".into(), r.trigger_overall()));
    for role in schema.roles() {
        out.push((
            "role".into(),
            role.to_string(),
            r.events.roles.get(role).copied().unwrap_or_default(),
        ));
    }
    out.push(("rollup".into(), "trigger".into(), r.trigger_overall()));
    out.push(("rollup".into(), "span_only".into(), r.span_only(schema)));
    out.push((
        "rollup".into(),
        "span_with_value".into(),
        r.span_with_value(schema),
    ));
    out
}

pub fn to_csv(r: &ScoreReport, schema: &EventSchema) -> String {
    let mut s = String::from("section,name,tp,fp,fn,precision,recall,f1\n");
    for (sec, name, m) in rows(r, schema) {
        s.push_str(&format!(
            "{sec},{name},{},{},{},{:.4},{:.4},{:.4}\n",
            m.tp,
            m.fp,
            m.fn_,
            m.precision(),
            m.recall(),
            m.f1()
        ));
    }
    s
}

pub fn to_json(r: &ScoreReport, schema: &EventSchema) -> Value {
    let mut sections: Map<String, Value> = Map::new();
    for (sec, name, m) in rows(r, schema) {
        let entry = sections
            .entry(sec)
            .or_insert_with(|| Value::Object(Map::new()));
        entry
            .as_object_mut()
            .unwrap()
            .insert(name, metrics_json(&m));
    }
    sections.insert("documents".into(), json!(r.documents));
    sections.insert(
        "diagnostics".into(),
        json!({
            "unmatched_gold_events": r.events.unmatched_gold,
            "unmatched_pred_events": r.events.unmatched_pred,
            "gold_issues": r.gold_issues,
            "pred_issues": r.pred_issues,
        }),
    );
    Value::Object(sections)
}

/// Fixed-width text table for terminals.
pub fn to_table(r: &ScoreReport, schema: &EventSchema) -> String {
    let mut s = format!(
        "{:<16} {:<34} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}\n",
        "section", "name", "tp", "fp", "fn", "P", "R", "F1"
    );
    for (sec, name, m) in rows(r, schema) {
        s.push_str(&format!(
            "{:<16} {:<34} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}\n",
            sec,
            name,
            m.tp,
            m.fp,
            m.fn_,
            m.precision(),
            m.recall(),
            m.f1()
        ));
    }
    s
}
