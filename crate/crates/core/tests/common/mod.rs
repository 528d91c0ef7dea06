//! Generators and brute-force oracles shared by the integration tests. The
//! oracles restate the scoring and standoff rules from scratch and avoid the
//! library's own helpers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use radfind::standoff::AnnotationDoc;
use radfind::{Argument, Event, Fragment, Span};

/// Role table of the built-in schema: (event type, trigger label, roles),
/// each role being (role, entity label, categorical values).
pub const TYPES: &[(&str, &str, &[(&str, &str, &[&str])])] = &[
    (
        "Lesion",
        "Lesion-Description",
        &[
            ("Lesion-Anatomy", "Lesion-Anatomy", &[]),
            (
                "Lesion-Assertion",
                "Lesion-Assertion",
                &["present", "absent", "possible"],
            ),
            ("Lesion-Characteristic", "Lesion-Characteristic", &[]),
            ("Lesion-Count", "Lesion-Count", &[]),
            ("Lesion-Size-Present", "Lesion-Size", &[]),
            ("Lesion-Size-Past", "Lesion-Size", &[]),
            (
                "Lesion-Size-Trend",
                "Lesion-Size-Trend",
                &["new", "increasing", "decreasing", "no-change"],
            ),
        ],
    ),
    (
        "Medical-Problem",
        "Medical-Problem",
        &[
            ("Medical-Anatomy", "Medical-Anatomy", &[]),
            (
                "Medical-Assertion",
                "Medical-Assertion",
                &["present", "absent", "possible"],
            ),
        ],
    ),
];

pub fn trigger_label(event_type: &str) -> &'static str {
    TYPES.iter().find(|t| t.0 == event_type).unwrap().1
}

/// (entity label, values) of a role.
pub fn role_info(role: &str) -> (&'static str, &'static [&'static str]) {
    TYPES
        .iter()
        .flat_map(|t| t.2.iter())
        .find(|r| r.0 == role)
        .map(|r| (r.1, r.2))
        .unwrap()
}

pub fn all_roles() -> Vec<&'static str> {
    TYPES.iter().flat_map(|t| t.2.iter().map(|r| r.0)).collect()
}

pub fn entity_labels() -> Vec<&'static str> {
    let mut out: Vec<&str> = Vec::new();
    for t in TYPES {
        out.push(t.1);
        for r in t.2 {
            if !out.contains(&r.1) {
                out.push(r.1);
            }
        }
    }
    out
}

const WORDS: &[&str] = &[
    "mass",
    "nodule",
    "left",
    "right",
    "lobe",
    "lower",
    "upper",
    "small",
    "large",
    "no",
    "new",
    "stable",
    "liver",
    "lung",
    "cyst",
    "effusion",
    "in",
    "the",
    "of",
    "with",
    "cm",
    "two",
    "prior",
    "increased",
    "possible",
];

/// A single-sentence text of space-separated lowercase words and the byte
/// range of each word.
pub fn word_text<R: Rng>(rng: &mut R, n: usize) -> (String, Vec<Range<usize>>) {
    let mut text = String::new();
    let mut ranges = Vec::new();
    for i in 0..n {
        if i > 0 {
            text.push(' ');
        }
        let w = WORDS.choose(rng).unwrap();
        ranges.push(text.len()..text.len() + w.len());
        text.push_str(w);
    }
    (text, ranges)
}

/// Span over word indices `toks` (sorted, distinct); adjacent words share a
/// fragment.
pub fn span_of(words: &[Range<usize>], toks: &[usize]) -> Span {
    let mut frags: Vec<Fragment> = Vec::new();
    for (k, &t) in toks.iter().enumerate() {
        if k > 0 && toks[k - 1] + 1 == t {
            frags.last_mut().unwrap().end = words[t].end;
        } else {
            frags.push(Fragment::new(words[t].start, words[t].end));
        }
    }
    Span(frags)
}

/// 1-3 contiguous words, or now and then two runs with a gap.
pub fn rand_toks<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let len = rng.gen_range(1..=3.min(n));
    let start = rng.gen_range(0..=n - len);
    let mut toks: Vec<usize> = (start..start + len).collect();
    if rng.gen_bool(0.1) && start + len + 1 < n {
        toks.push(rng.gen_range(start + len + 1..n));
    }
    toks
}

pub fn rand_arg<R: Rng>(rng: &mut R, words: &[Range<usize>], event_type: &str) -> Argument {
    let roles = TYPES.iter().find(|t| t.0 == event_type).unwrap().2;
    let (role, _, values) = roles.choose(rng).unwrap();
    Argument {
        role: role.to_string(),
        span: span_of(words, &rand_toks(rng, words.len())),
        value: values.choose(rng).map(|v| v.to_string()),
    }
}

pub fn rand_event<R: Rng>(rng: &mut R, words: &[Range<usize>]) -> Event {
    let et = TYPES.choose(rng).unwrap().0;
    let mut ev = Event::new(et, span_of(words, &rand_toks(rng, words.len())));
    for _ in 0..rng.gen_range(0..=3) {
        ev.arguments.push(rand_arg(rng, words, et));
    }
    ev
}

/// A noisy copy of `gold`: events kept, perturbed or dropped, plus spurious
/// ones, at most `max` in total.
pub fn perturb<R: Rng>(
    rng: &mut R,
    words: &[Range<usize>],
    gold: &[Event],
    max: usize,
) -> Vec<Event> {
    let mut out = Vec::new();
    for g in gold {
        match rng.gen_range(0..10) {
            0 | 1 => continue,
            2 | 3 => out.push(g.clone()),
            _ => {
                let mut e = g.clone();
                if rng.gen_bool(0.3) {
                    e.trigger = span_of(words, &rand_toks(rng, words.len()));
                }
                e.arguments.retain(|_| rng.gen_bool(0.7));
                for a in &mut e.arguments {
                    if rng.gen_bool(0.3) {
                        a.span = span_of(words, &rand_toks(rng, words.len()));
                    }
                    let (_, values) = role_info(&a.role);
                    if !values.is_empty() && rng.gen_bool(0.3) {
                        a.value = values.choose(rng).map(|v| v.to_string());
                    }
                }
                if rng.gen_bool(0.3) {
                    e.arguments.push(rand_arg(rng, words, &e.event_type));
                }
                out.push(e);
            }
        }
    }
    while out.len() < max && rng.gen_bool(0.3) {
        out.push(rand_event(rng, words));
    }
    out.truncate(max);
    out.shuffle(rng);
    out
}

/// Indices of the words a span touches.
pub fn toks_of(words: &[Range<usize>], span: &Span) -> BTreeSet<usize> {
    words
        .iter()
        .enumerate()
        .filter(|(_, w)| span.0.iter().any(|f| w.start < f.end && f.start < w.end))
        .map(|(i, _)| i)
        .collect()
}

pub type Counts = (usize, usize, usize);

fn set_counts(g: &BTreeSet<usize>, p: &BTreeSet<usize>) -> Counts {
    let tp = g.intersection(p).count();
    (tp, p.len() - tp, g.len() - tp)
}

fn add(a: &mut Counts, b: Counts) {
    a.0 += b.0;
    a.1 += b.1;
    a.2 += b.2;
}

/// Everything the brute-force scorer reports for one document.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct OracleScores {
    pub entities: BTreeMap<String, Counts>,
    pub values: BTreeMap<(String, String), Counts>,
    pub triggers: BTreeMap<String, Counts>,
    pub roles: BTreeMap<String, Counts>,
}

impl OracleScores {
    pub fn merge(&mut self, o: &OracleScores) {
        for (k, v) in &o.entities {
            add(self.entities.entry(k.clone()).or_default(), *v);
        }
        for (k, v) in &o.values {
            add(self.values.entry(k.clone()).or_default(), *v);
        }
        for (k, v) in &o.triggers {
            add(self.triggers.entry(k.clone()).or_default(), *v);
        }
        for (k, v) in &o.roles {
            add(self.roles.entry(k.clone()).or_default(), *v);
        }
    }

    /// Summed counts of the span-only roles (`valued = false`) or the
    /// span-with-value roles.
    pub fn rollup(&self, valued: bool) -> Counts {
        let mut out = (0, 0, 0);
        for (r, c) in &self.roles {
            if role_info(r).1.is_empty() != valued {
                add(&mut out, *c);
            }
        }
        out
    }
}

/// Every (word, label, value) pair carried by the events' entities.
fn entity_pairs(
    words: &[Range<usize>],
    events: &[Event],
) -> BTreeSet<(usize, String, Option<String>)> {
    let mut out = BTreeSet::new();
    for e in events {
        for t in toks_of(words, &e.trigger) {
            out.insert((t, trigger_label(&e.event_type).to_string(), None));
        }
        for a in &e.arguments {
            let (label, values) = role_info(&a.role);
            let value = if values.is_empty() {
                None
            } else {
                a.value.clone()
            };
            for t in toks_of(words, &a.span) {
                out.insert((t, label.to_string(), value.clone()));
            }
        }
    }
    out
}

/// Tie-break rank of a candidate pair: larger overlap first, then the two
/// events' canonical forms, smaller pair first, whichever side they are on.
type Rank = (std::cmp::Reverse<usize>, Event, Event, usize, usize);

fn canonical(e: &Event) -> Event {
    let mut c = e.clone();
    c.arguments.sort();
    c
}

/// Exhaustive search for the best one-to-one trigger matching. Matchings are
/// compared by their ascending list of pair ranks: the first smaller rank
/// wins, and a matching that extends another wins over it.
pub fn oracle_alignment(
    words: &[Range<usize>],
    gold: &[Event],
    pred: &[Event],
) -> Vec<(usize, usize)> {
    let mut rank: BTreeMap<(usize, usize), Rank> = BTreeMap::new();
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let overlap = toks_of(words, &g.trigger)
                .intersection(&toks_of(words, &p.trigger))
                .count();
            if g.event_type == p.event_type && overlap > 0 {
                let (a, b) = (canonical(g), canonical(p));
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                rank.insert((gi, pi), (std::cmp::Reverse(overlap), lo, hi, gi, pi));
            }
        }
    }
    fn better(a: &[&Rank], b: &[&Rank]) -> bool {
        for (x, y) in a.iter().zip(b) {
            if x != y {
                return x < y;
            }
        }
        a.len() > b.len()
    }
    fn search<'a>(
        gi: usize,
        n_gold: usize,
        n_pred: usize,
        rank: &'a BTreeMap<(usize, usize), Rank>,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        best: &mut Option<(Vec<&'a Rank>, Vec<(usize, usize)>)>,
    ) {
        if gi == n_gold {
            let mut ranks: Vec<&Rank> = cur.iter().map(|k| &rank[k]).collect();
            ranks.sort();
            if best.as_ref().is_none_or(|(b, _)| better(&ranks, b)) {
                *best = Some((ranks, cur.clone()));
            }
            return;
        }
        search(gi + 1, n_gold, n_pred, rank, used, cur, best);
        for pi in 0..n_pred {
            if !used[pi] && rank.contains_key(&(gi, pi)) {
                used[pi] = true;
                cur.push((gi, pi));
                search(gi + 1, n_gold, n_pred, rank, used, cur, best);
                cur.pop();
                used[pi] = false;
            }
        }
    }
    let mut best = None;
    search(
        0,
        gold.len(),
        pred.len(),
        &rank,
        &mut vec![false; pred.len()],
        &mut Vec::new(),
        &mut best,
    );
    let mut out = best.map(|b| b.1).unwrap_or_default();
    out.sort();
    out
}

/// Role counts for one gold/pred event pair; either side may be missing.
fn role_counts(
    words: &[Range<usize>],
    g: Option<&Event>,
    p: Option<&Event>,
    out: &mut BTreeMap<String, Counts>,
) {
    for role in all_roles() {
        let args = |e: Option<&Event>| -> Vec<Argument> {
            e.map(|e| {
                e.arguments
                    .iter()
                    .filter(|a| a.role == role)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
        };
        let (ga, pa) = (args(g), args(p));
        let c = if role_info(role).1.is_empty() {
            let union = |xs: &[Argument]| -> BTreeSet<usize> {
                xs.iter().flat_map(|a| toks_of(words, &a.span)).collect()
            };
            set_counts(&union(&ga), &union(&pa))
        } else {
            let mut tp = 0;
            for v in role_info(role).1 {
                let n =
                    |xs: &[Argument]| xs.iter().filter(|a| a.value.as_deref() == Some(*v)).count();
                tp += n(&ga).min(n(&pa));
            }
            (tp, pa.len() - tp, ga.len() - tp)
        };
        add(out.get_mut(role).unwrap(), c);
    }
}

/// Brute-force scores of `pred` against `gold` on one word text.
pub fn oracle_scores(words: &[Range<usize>], gold: &[Event], pred: &[Event]) -> OracleScores {
    let mut out = OracleScores::default();
    let gp = entity_pairs(words, gold);
    let pp = entity_pairs(words, pred);
    for label in entity_labels() {
        let pick = |s: &BTreeSet<(usize, String, Option<String>)>,
                    value: Option<&str>|
         -> BTreeSet<usize> {
            s.iter()
                .filter(|(_, l, v)| l == label && value.is_none_or(|x| v.as_deref() == Some(x)))
                .map(|(t, _, _)| *t)
                .collect()
        };
        out.entities.insert(
            label.to_string(),
            set_counts(&pick(&gp, None), &pick(&pp, None)),
        );
        if let Some(r) = TYPES
            .iter()
            .flat_map(|t| t.2.iter())
            .find(|r| r.1 == label && !r.2.is_empty())
        {
            for v in r.2 {
                out.values.insert(
                    (label.to_string(), v.to_string()),
                    set_counts(&pick(&gp, Some(v)), &pick(&pp, Some(v))),
                );
            }
        }
    }
    for t in TYPES {
        out.triggers.insert(t.0.to_string(), (0, 0, 0));
    }
    for r in all_roles() {
        out.roles.insert(r.to_string(), (0, 0, 0));
    }
    let pairs = oracle_alignment(words, gold, pred);
    for (gi, g) in gold.iter().enumerate() {
        let m = pairs.iter().find(|x| x.0 == gi).map(|x| &pred[x.1]);
        let c = out.triggers.get_mut(&g.event_type).unwrap();
        if m.is_some() {
            c.0 += 1;
        } else {
            c.2 += 1;
        }
        role_counts(words, Some(g), m, &mut out.roles);
    }
    for (pi, p) in pred.iter().enumerate() {
        if !pairs.iter().any(|x| x.1 == pi) {
            out.triggers.get_mut(&p.event_type).unwrap().1 += 1;
            role_counts(words, None, Some(p), &mut out.roles);
        }
    }
    out
}

/// Id-free, order-free content of a standoff document.
#[derive(Debug, PartialEq, Eq)]
pub struct Meaning {
    pub textbounds: BTreeMap<(String, Vec<(usize, usize)>), usize>,
    pub events: BTreeMap<String, usize>,
    pub attributes: BTreeMap<(String, String, Option<String>), usize>,
    pub passthrough: BTreeMap<String, usize>,
}

fn bump<K: Ord>(m: &mut BTreeMap<K, usize>, k: K) {
    *m.entry(k).or_default() += 1;
}

pub fn meaning(doc: &AnnotationDoc) -> Meaning {
    let tb = |id: &str| -> String {
        let t = doc
            .textbounds
            .iter()
            .find(|t| t.id == id)
            .expect("resolved text-bound");
        let frags: Vec<String> = t
            .span
            .0
            .iter()
            .map(|f| format!("{}-{}", f.start, f.end))
            .collect();
        format!("{}[{}]", t.label, frags.join(","))
    };
    let ev = |id: &str| -> String {
        let e = doc
            .events
            .iter()
            .find(|e| e.id == id)
            .expect("resolved event");
        let mut args: Vec<String> = e
            .args
            .iter()
            .map(|(r, t)| {
                format!(
                    "{}={}",
                    r.trim_end_matches(|c: char| c.is_ascii_digit()),
                    tb(t)
                )
            })
            .collect();
        args.sort();
        format!("{}:{}({})", e.type_label, tb(&e.trigger), args.join(" "))
    };
    let mut m = Meaning {
        textbounds: BTreeMap::new(),
        events: BTreeMap::new(),
        attributes: BTreeMap::new(),
        passthrough: BTreeMap::new(),
    };
    for t in &doc.textbounds {
        // the surface must always equal the spanned text
        let joined: Vec<&str> = t.span.0.iter().map(|f| &doc.text[f.start..f.end]).collect();
        assert_eq!(
            t.surface.replace(['\n', '\r'], " "),
            joined.join(" ").replace(['\n', '\r'], " ")
        );
        bump(
            &mut m.textbounds,
            (
                t.label.clone(),
                t.span.0.iter().map(|f| (f.start, f.end)).collect(),
            ),
        );
    }
    for e in &doc.events {
        bump(&mut m.events, ev(&e.id));
    }
    for a in &doc.attributes {
        let target = if a.target.starts_with('T') {
            tb(&a.target)
        } else {
            ev(&a.target)
        };
        bump(&mut m.attributes, (a.name.clone(), target, a.value.clone()));
    }
    for p in &doc.passthrough {
        bump(&mut m.passthrough, p.clone());
    }
    m
}
