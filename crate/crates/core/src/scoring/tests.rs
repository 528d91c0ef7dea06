use super::*;
use crate::schema::default_schema;
use crate::standoff::{from_events, parse_ann};

fn at(text: &str, needle: &str) -> Span {
    let s = text
        .find(needle)
        .unwrap_or_else(|| panic!("{needle} not in text"));
    Span::contiguous(s, s + needle.len())
}

fn doc(text: &str, events: &[Event]) -> AnnotationDoc {
    from_events("d", text, events, &default_schema()).unwrap()
}

fn toks(text: &str, events: &[Event]) -> Vec<TokenEvent> {
    token_events(&TokenizedDoc::new(text, []), events)
}

#[test]
fn entity_partial_anatomy() {
    let s = default_schema();
    let text = "Nodule in the left lower lobe.";
    let g = parse_ann("d", text, "T1\tLesion-Anatomy 14 29\tleft lower lobe\n").unwrap();
    let p = parse_ann("d", text, "T1\tLesion-Anatomy 19 29\tlower lobe\n").unwrap();
    let r = score_entities_doc(&g, &p, &s);
    let m = r.labels["Lesion-Anatomy"];
    assert_eq!(m, Metrics::new(2, 0, 1));
    assert_eq!(m.precision(), 1.0);
    assert!((m.recall() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn entity_identical_and_mismatched_labels() {
    let s = default_schema();
    let text = "Nodule in the lung.";
    let g = parse_ann(
        "d",
        text,
        "T1\tLesion-Anatomy 14 18\tlung\nT2\tLesion-Description 0 6\tNodule\n",
    )
    .unwrap();
    let same = score_entities_doc(&g, &g, &s);
    assert!(same.labels.values().all(|m| m.f1() == 1.0));
    let p = parse_ann(
        "d",
        text,
        "T1\tMedical-Anatomy 14 18\tlung\nT2\tLesion-Description 0 6\tNodule\n",
    )
    .unwrap();
    let r = score_entities_doc(&g, &p, &s);
    assert_eq!(r.labels["Lesion-Anatomy"], Metrics::new(0, 0, 1));
    assert_eq!(r.labels["Medical-Anatomy"], Metrics::new(0, 1, 0));
}

#[test]
fn entity_value_breakdown() {
    let s = default_schema();
    let text = "No mass.";
    let g = parse_ann(
        "d",
        text,
        "T1\tLesion-Assertion 0 2\tNo\nA1\tLesion-AssertionVal T1 absent\n",
    )
    .unwrap();
    let p = parse_ann("d", text, "T1\tLesion-Assertion 0 2\tNo\n").unwrap();
    let r = score_entities_doc(&g, &p, &s);
    // the type-level score ignores the value, the breakdown does not
    assert_eq!(r.labels["Lesion-Assertion"], Metrics::new(1, 0, 0));
    assert_eq!(
        r.values["Lesion-Assertion"]["absent"],
        Metrics::new(0, 0, 1)
    );
    assert_eq!(
        r.values["Lesion-Assertion"]["present"],
        Metrics::new(0, 1, 0)
    );
}

#[test]
fn discontinuous_trigger_matches() {
    let text = "There are displaced left rib fractures.";
    let disp = at(text, "displaced");
    let frac = at(text, "fractures");
    let gold = Event::new("Medical-Problem", Span(vec![disp.0[0], frac.0[0]])).with_argument(
        "Medical-Anatomy",
        at(text, "left rib"),
        None,
    );
    let pred = Event::new("Medical-Problem", frac).with_argument(
        "Medical-Anatomy",
        at(text, "left rib"),
        None,
    );
    let g = toks(text, &[gold]);
    let p = toks(text, &[pred]);
    assert_eq!(align_triggers(&g, &p), vec![(0, 0)]);
    let r = score_roles(&g, &p, &default_schema()).unwrap();
    assert_eq!(r.triggers["Medical-Problem"], Metrics::new(1, 0, 0));
    assert_eq!(r.roles["Medical-Anatomy"], Metrics::new(2, 0, 0));
}

#[test]
fn two_gold_one_pred_takes_larger_overlap() {
    let text = "large mass lesion here";
    let g = toks(
        text,
        &[
            Event::new("Lesion", at(text, "large")),
            Event::new("Lesion", at(text, "mass lesion")),
        ],
    );
    let p = toks(text, &[Event::new("Lesion", at(text, "large mass lesion"))]);
    assert_eq!(align_triggers(&g, &p), vec![(1, 0)]);
}

#[test]
fn different_types_never_match() {
    let text = "effusion";
    let g = toks(text, &[Event::new("Lesion", at(text, "effusion"))]);
    let p = toks(text, &[Event::new("Medical-Problem", at(text, "effusion"))]);
    assert!(align_triggers(&g, &p).is_empty());
}

#[test]
fn partial_anatomy_tokens() {
    let s = default_schema();
    let text = "Mass in the left parapharyngeal space extending posteriorly to the nasopharynx.";
    let trig = at(text, "Mass");
    let first = at(text, "left parapharyngeal space");
    let gold = Event::new("Lesion", trig.clone()).with_argument(
        "Lesion-Anatomy",
        at(text, "extending posteriorly to the nasopharynx"),
        None,
    );
    let pred = Event::new("Lesion", trig.clone()).with_argument(
        "Lesion-Anatomy",
        at(text, "posteriorly to the nasopharynx"),
        None,
    );
    let r = score_roles(
        &toks(text, &[gold.clone()]),
        &toks(text, &[pred.clone()]),
        &s,
    )
    .unwrap();
    assert_eq!(r.roles["Lesion-Anatomy"], Metrics::new(4, 0, 1));

    // with an identical first anatomy argument on both sides
    let gold = gold.with_argument("Lesion-Anatomy", first.clone(), None);
    let pred = pred.with_argument("Lesion-Anatomy", first, None);
    let r = score_roles(&toks(text, &[gold]), &toks(text, &[pred]), &s).unwrap();
    assert_eq!(r.roles["Lesion-Anatomy"], Metrics::new(7, 0, 1));
}

#[test]
fn value_only_role() {
    let s = default_schema();
    let text = "Interval increase in size and number of pulmonary nodules.";
    let trig = at(text, "nodules");
    let gold = Event::new("Lesion", trig.clone()).with_argument(
        "Lesion-Size-Trend",
        at(text, "increase in size and number"),
        Some("increasing"),
    );
    let pred = Event::new("Lesion", trig).with_argument(
        "Lesion-Size-Trend",
        at(text, "increase in size"),
        Some("increasing"),
    );
    let r = score_roles(&toks(text, &[gold]), &toks(text, &[pred]), &s).unwrap();
    assert_eq!(r.roles["Lesion-Size-Trend"], Metrics::new(1, 0, 0));
}

#[test]
fn value_matching_counts_duplicates() {
    let s = default_schema();
    let text = "a b c d mass";
    let t = at(text, "mass");
    let gold = Event::new("Lesion", t.clone())
        .with_argument("Lesion-Assertion", at(text, "a"), Some("absent"))
        .with_argument("Lesion-Assertion", at(text, "b"), Some("absent"));
    let pred = Event::new("Lesion", t)
        .with_argument("Lesion-Assertion", at(text, "c"), Some("absent"))
        .with_argument("Lesion-Assertion", at(text, "d"), Some("possible"));
    let r = score_roles(&toks(text, &[gold]), &toks(text, &[pred]), &s).unwrap();
    assert_eq!(r.roles["Lesion-Assertion"], Metrics::new(1, 1, 1));
}

#[test]
fn unmatched_events_count_whole() {
    let s = default_schema();
    let text = "mass in liver ; cyst";
    let gold = Event::new("Lesion", at(text, "mass")).with_argument(
        "Lesion-Anatomy",
        at(text, "in liver"),
        None,
    );
    let pred = Event::new("Lesion", at(text, "cyst")).with_argument(
        "Lesion-Assertion",
        at(text, ";"),
        Some("absent"),
    );
    let r = score_roles(&toks(text, &[gold]), &toks(text, &[pred]), &s).unwrap();
    assert_eq!(r.triggers["Lesion"], Metrics::new(0, 1, 1));
    assert_eq!(r.roles["Lesion-Anatomy"], Metrics::new(0, 0, 2));
    assert_eq!(r.roles["Lesion-Assertion"], Metrics::new(0, 1, 0));
    assert_eq!((r.unmatched_gold, r.unmatched_pred), (1, 1));
}

#[test]
fn perfect_and_empty_predictions() {
    let s = default_schema();
    let text = "Small mass in the liver. No effusion.";
    let events = vec![
        Event::new("Lesion", at(text, "mass"))
            .with_argument("Lesion-Anatomy", at(text, "liver"), None)
            .with_argument("Lesion-Size-Present", at(text, "Small"), None),
        Event::new("Medical-Problem", at(text, "effusion")).with_argument(
            "Medical-Assertion",
            at(text, "No"),
            Some("absent"),
        ),
    ];
    let g = doc(text, &events);
    let r = score_corpus(std::slice::from_ref(&g), std::slice::from_ref(&g), &s).unwrap();
    assert_eq!(r.trigger_overall().f1(), 1.0);
    assert!(r.events.roles.values().all(|m| m.f1() == 1.0));
    assert_eq!(r.span_only(&s), Metrics::new(2, 0, 0));

    let empty = doc(text, &[]);
    let r = pairwise_iaa(std::slice::from_ref(&g), std::slice::from_ref(&empty), &s).unwrap();
    assert_eq!(r.trigger_overall().f1(), 0.0);
    assert_eq!(r.span_only(&s).f1(), 0.0);
    assert_eq!(r.span_with_value(&s).f1(), 0.0);
}

#[test]
fn rollups_sum_constituents() {
    let s = default_schema();
    let text = "Small mass in the liver. No effusion.";
    let g = doc(
        text,
        &[Event::new("Lesion", at(text, "mass")).with_argument(
            "Lesion-Anatomy",
            at(text, "liver"),
            None,
        )],
    );
    let p = doc(
        text,
        &[Event::new("Lesion", at(text, "mass")).with_argument(
            "Lesion-Size-Present",
            at(text, "Small"),
            None,
        )],
    );
    let r = score_corpus(&[g], &[p], &s).unwrap();
    let sum: Metrics = [
        "Lesion-Anatomy",
        "Lesion-Characteristic",
        "Lesion-Count",
        "Lesion-Size-Present",
        "Lesion-Size-Past",
        "Medical-Anatomy",
    ]
    .iter()
    .map(|r2| r.events.roles[*r2])
    .sum();
    assert_eq!(r.span_only(&s), sum);
}

#[test]
fn document_sets_must_match() {
    let s = default_schema();
    let a = parse_ann("a", "x", "").unwrap();
    let b = parse_ann("b", "x", "").unwrap();
    assert!(matches!(
        score_corpus(&[a.clone()], &[b], &s),
        Err(ScoreError::DocumentMismatch { .. })
    ));
    let a2 = parse_ann("a", "y", "").unwrap();
    assert!(matches!(
        score_corpus(&[a], &[a2], &s),
        Err(ScoreError::TextMismatch(_))
    ));
}

#[test]
fn unknown_role_is_an_error() {
    let text = "mass x";
    let ev =
        Event::new("Lesion", at(text, "mass")).with_argument("Lesion-Color", at(text, "x"), None);
    let t = toks(text, &[ev]);
    assert_eq!(
        score_roles(&t, &[], &default_schema()),
        Err(ScoreError::UnknownRole("Lesion-Color".into()))
    );
}

#[test]
fn alignment_is_transposed_under_swap() {
    let text = "a b c d e f";
    let g = toks(
        text,
        &[
            Event::new("Lesion", at(text, "a b")),
            Event::new("Lesion", at(text, "c d")),
        ],
    );
    let p = toks(
        text,
        &[
            Event::new("Lesion", at(text, "b c")),
            Event::new("Lesion", at(text, "d e")),
        ],
    );
    let ab = align_triggers(&g, &p);
    let mut ba: Vec<(usize, usize)> = align_triggers(&p, &g)
        .into_iter()
        .map(|(x, y)| (y, x))
        .collect();
    ba.sort_unstable();
    assert_eq!(ab, ba);
}

#[test]
fn empty_corpus_scores_perfect() {
    let s = default_schema();
    let r = score_corpus(&[], &[], &s).unwrap();
    assert_eq!(r.trigger_overall().f1(), 1.0);
    assert_eq!(r.events.roles.len(), s.roles().len());
}
