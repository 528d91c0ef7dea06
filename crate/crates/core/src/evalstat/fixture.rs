//! Synthetic radiology-like corpus with known gold events.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event::{Event, Span};
use crate::schema::default_schema;
use crate::standoff::{from_events, AnnotationDoc};

const L_SINGLE: &[&str] = &[
    "mass", "nodule", "lesion", "cyst", "tumor", "opacity", "focus",
];
const L_PLURAL: &[&str] = &["masses", "nodules", "lesions", "cysts", "opacities"];
const L_CHAR: &[&str] = &[
    "spiculated",
    "hypodense",
    "enhancing",
    "calcified",
    "heterogeneous",
    "ill-defined",
    "lobulated",
    "hyperdense",
    "necrotic",
];
const L_ANAT: &[&str] = &[
    "right upper lobe",
    "left lower lobe",
    "liver",
    "pancreatic head",
    "left kidney",
    "right adrenal gland",
    "spleen",
    "thyroid",
    "segment 7 of the liver",
    "right breast",
    "lingula",
];
const L_COUNT: &[&str] = &["Two", "Three", "Multiple", "Several", "Numerous"];
const M_TRIG: &[&str] = &[
    "pleural effusion",
    "pneumothorax",
    "atelectasis",
    "consolidation",
    "pulmonary edema",
    "cardiomegaly",
    "fracture",
    "hydronephrosis",
    "emphysema",
    "pneumonia",
];
const M_ANAT: &[&str] = &[
    "left hemithorax",
    "right hemithorax",
    "lung bases",
    "left lung base",
    "right lung apex",
    "cardiac silhouette",
    "left ribs",
    "right ribs",
    "bilateral lungs",
    "right collecting system",
];

fn cap(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Builder {
    text: String,
    ents: Vec<(Span, Option<String>)>,
    events: Vec<(&'static str, usize, Vec<(&'static str, usize)>)>,
}

impl Builder {
    fn lit(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self
    }

    fn ent(&mut self, s: &str, value: Option<&str>) -> usize {
        let start = self.text.len();
        self.text.push_str(s);
        self.ents.push((
            Span::contiguous(start, self.text.len()),
            value.map(str::to_string),
        ));
        self.ents.len() - 1
    }

    fn event(&mut self, ty: &'static str, trig: usize, args: Vec<(&'static str, usize)>) {
        self.events.push((ty, trig, args));
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty list")
}

fn size(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => format!("{}.{} cm", rng.gen_range(1..6), rng.gen_range(0..10)),
        1 => format!(
            "{}.{} x {}.{} cm",
            rng.gen_range(1..6),
            rng.gen_range(0..10),
            rng.gen_range(1..6),
            rng.gen_range(0..10)
        ),
        _ => format!("{} mm", rng.gen_range(3..20)),
    }
}

fn lesion_sentence(b: &mut Builder, rng: &mut ChaCha8Rng) {
    const L: &str = "Lesion";
    match rng.gen_range(0..9) {
        0 => {
            let mut args = Vec::new();
            b.lit(if rng.gen_bool(0.5) {
                "There is a "
            } else {
                "A "
            });
            if rng.gen_bool(0.5) {
                let c = b.ent(pick(rng, L_CHAR), None);
                args.push(("Lesion-Characteristic", c));
                b.lit(" ");
            }
            let t = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            args.push(("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None)));
            if rng.gen_bool(0.5) {
                b.lit(", measuring ");
                let s = size(rng);
                args.push(("Lesion-Size-Present", b.ent(&s, None)));
            }
            b.lit(".");
            b.event(L, t, args);
        }
        1 => {
            let mut args = vec![("Lesion-Count", b.ent(pick(rng, L_COUNT), None))];
            b.lit(" ");
            if rng.gen_bool(0.5) {
                args.push(("Lesion-Characteristic", b.ent(pick(rng, L_CHAR), None)));
                b.lit(" ");
            }
            let t = b.ent(pick(rng, L_PLURAL), None);
            b.lit(" are seen in the ");
            args.push(("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None)));
            b.lit(".");
            b.event(L, t, args);
        }
        2 => {
            b.lit("The ");
            let t = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            let mut args = vec![("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None))];
            let (phrase, value) = match rng.gen_range(0..4) {
                0 => ("increased in size", "increasing"),
                1 => ("enlarged", "increasing"),
                2 => ("decreased in size", "decreasing"),
                _ => ("become smaller", "decreasing"),
            };
            b.lit(" has ");
            args.push(("Lesion-Size-Trend", b.ent(phrase, Some(value))));
            b.lit(", now measuring ");
            let s = size(rng);
            args.push(("Lesion-Size-Present", b.ent(&s, None)));
            b.lit(", previously ");
            let s = size(rng);
            args.push(("Lesion-Size-Past", b.ent(&s, None)));
            b.lit(".");
            b.event(L, t, args);
        }
        3 => {
            let mut args = vec![("Lesion-Size-Trend", b.ent("New", Some("new")))];
            b.lit(" ");
            if rng.gen_bool(0.5) {
                args.push(("Lesion-Characteristic", b.ent(pick(rng, L_CHAR), None)));
                b.lit(" ");
            }
            let t = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            args.push(("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None)));
            b.lit(".");
            b.event(L, t, args);
        }
        4 => {
            let word = if rng.gen_bool(0.5) {
                "Stable"
            } else {
                "Unchanged"
            };
            let mut args = vec![("Lesion-Size-Trend", b.ent(word, Some("no-change")))];
            b.lit(" ");
            let t = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            args.push(("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None)));
            if rng.gen_bool(0.5) {
                b.lit(", measuring ");
                let s = size(rng);
                args.push(("Lesion-Size-Present", b.ent(&s, None)));
            }
            b.lit(".");
            b.event(L, t, args);
        }
        5 => {
            let cue = if rng.gen_bool(0.5) {
                "No"
            } else {
                "No evidence of"
            };
            let mut args = vec![("Lesion-Assertion", b.ent(cue, Some("absent")))];
            b.lit(" ");
            let t = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            args.push(("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None)));
            b.lit(".");
            b.event(L, t, args);
        }
        6 => {
            let mut args = Vec::new();
            if rng.gen_bool(0.5) {
                let cue = if rng.gen_bool(0.5) {
                    "Possible"
                } else {
                    "Probable"
                };
                args.push(("Lesion-Assertion", b.ent(cue, Some("possible"))));
                b.lit(" ");
            } else {
                b.lit("Findings are ");
                args.push((
                    "Lesion-Assertion",
                    b.ent("suspicious for", Some("possible")),
                ));
                b.lit(" a ");
            }
            if rng.gen_bool(0.5) {
                args.push(("Lesion-Characteristic", b.ent(pick(rng, L_CHAR), None)));
                b.lit(" ");
            }
            let t = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            args.push(("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None)));
            b.lit(".");
            b.event(L, t, args);
        }
        7 => {
            b.lit("Findings are ");
            let mut args = vec![(
                "Lesion-Assertion",
                b.ent("consistent with", Some("present")),
            )];
            b.lit(" a ");
            if rng.gen_bool(0.5) {
                args.push(("Lesion-Characteristic", b.ent(pick(rng, L_CHAR), None)));
                b.lit(" ");
            }
            let t = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            args.push(("Lesion-Anatomy", b.ent(pick(rng, L_ANAT), None)));
            b.lit(".");
            b.event(L, t, args);
        }
        _ => {
            // two triggers sharing one anatomy entity
            let c = b.ent(&cap(pick(rng, L_CHAR)), None);
            b.lit(" ");
            let t1 = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" and ");
            let t2 = b.ent(pick(rng, L_SINGLE), None);
            b.lit(" in the ");
            let a = b.ent(pick(rng, L_ANAT), None);
            b.lit(".");
            b.event(
                L,
                t1,
                vec![("Lesion-Characteristic", c), ("Lesion-Anatomy", a)],
            );
            b.event(L, t2, vec![("Lesion-Anatomy", a)]);
        }
    }
}

fn medical_sentence(b: &mut Builder, rng: &mut ChaCha8Rng) {
    const M: &str = "Medical-Problem";
    match rng.gen_range(0..6) {
        0 => {
            let a = b.ent("No", Some("absent"));
            b.lit(" ");
            let t = b.ent(pick(rng, M_TRIG), None);
            let mut args = vec![("Medical-Assertion", a)];
            if rng.gen_bool(0.5) {
                b.lit(" in the ");
                args.push(("Medical-Anatomy", b.ent(pick(rng, M_ANAT), None)));
            }
            b.lit(".");
            b.event(M, t, args);
        }
        1 => {
            // one negation cue shared by two problems
            let a = b.ent("No", Some("absent"));
            b.lit(" ");
            let (x, y) = loop {
                let x = pick(rng, M_TRIG);
                let y = pick(rng, M_TRIG);
                if x != y {
                    break (x, y);
                }
            };
            let t1 = b.ent(x, None);
            b.lit(" or ");
            let t2 = b.ent(y, None);
            b.lit(".");
            b.event(M, t1, vec![("Medical-Assertion", a)]);
            b.event(M, t2, vec![("Medical-Assertion", a)]);
        }
        2 => {
            let cue = if rng.gen_bool(0.5) {
                "Possible"
            } else {
                "Probable"
            };
            let a = b.ent(cue, Some("possible"));
            b.lit(" ");
            let t = b.ent(pick(rng, M_TRIG), None);
            b.lit(" in the ");
            let an = b.ent(pick(rng, M_ANAT), None);
            b.lit(".");
            b.event(
                M,
                t,
                vec![("Medical-Assertion", a), ("Medical-Anatomy", an)],
            );
        }
        3 => {
            let t = b.ent(&cap(pick(rng, M_TRIG)), None);
            b.lit(" is seen in the ");
            let an = b.ent(pick(rng, M_ANAT), None);
            b.lit(".");
            b.event(M, t, vec![("Medical-Anatomy", an)]);
        }
        4 => {
            b.lit("Appearance is ");
            let a = b.ent("consistent with", Some("present"));
            b.lit(" ");
            let t = b.ent(pick(rng, M_TRIG), None);
            b.lit(" in the ");
            let an = b.ent(pick(rng, M_ANAT), None);
            b.lit(".");
            b.event(
                M,
                t,
                vec![("Medical-Assertion", a), ("Medical-Anatomy", an)],
            );
        }
        _ => {
            // two problems sharing one anatomy entity
            let (x, y) = loop {
                let x = pick(rng, M_TRIG);
                let y = pick(rng, M_TRIG);
                if x != y {
                    break (x, y);
                }
            };
            let t1 = b.ent(&cap(x), None);
            b.lit(" and ");
            let t2 = b.ent(y, None);
            b.lit(" in the ");
            let an = b.ent(pick(rng, M_ANAT), None);
            b.lit(".");
            b.event(M, t1, vec![("Medical-Anatomy", an)]);
            b.event(M, t2, vec![("Medical-Anatomy", an)]);
        }
    }
}

fn sentence(b: &mut Builder, rng: &mut ChaCha8Rng) {
    if rng.gen_bool(0.6) {
        lesion_sentence(b, rng)
    } else {
        medical_sentence(b, rng)
    }
}

/// `n_docs` synthetic reports named `fixture-0000`, `fixture-0001`, ...
/// Identical seeds give identical corpora.
pub fn gen_fixture(seed: u64, n_docs: usize) -> Vec<AnnotationDoc> {
    let schema = default_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|i| {
            let mut b = Builder {
                text: String::new(),
                ents: Vec::new(),
                events: Vec::new(),
            };
            b.lit("FINDINGS:\n");
            let n = rng.gen_range(3..=6);
            for k in 0..n {
                if k > 0 {
                    b.lit(" ");
                }
                sentence(&mut b, &mut rng);
            }
            b.lit("\nIMPRESSION:\n");
            sentence(&mut b, &mut rng);
            b.lit("\n");
            let events: Vec<Event> = b
                .events
                .iter()
                .map(|(ty, trig, args)| {
                    let mut e = Event::new(*ty, b.ents[*trig].0.clone());
                    for (role, a) in args {
                        let (span, value) = &b.ents[*a];
                        e = e.with_argument(*role, span.clone(), value.as_deref());
                    }
                    e
                })
                .collect();
            from_events(&format!("fixture-{i:04}"), &b.text, &events, &schema)
                .expect("fixture respects the schema")
        })
        .collect()
}
