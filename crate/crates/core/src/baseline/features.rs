//! Feature templates. The lists here define the model format: changing a
//! template changes every trained model.

use std::ops::Range;

/// Compressed word shape: uppercase `X`, lowercase `x`, digit `d`, other
/// characters kept, runs collapsed.
pub fn shape(word: &str) -> String {
    let mut out = String::new();
    let mut last = None;
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_ascii_digit() {
            'd'
        } else {
            c
        };
        if last != Some(s) {
            out.push(s);
            last = Some(s);
        }
    }
    out
}

fn window_word(lower: &[String], i: isize) -> &str {
    if i < 0 {
        "<s>"
    } else if i as usize >= lower.len() {
        "</s>"
    } else {
        &lower[i as usize]
    }
}

/// Emission features for every token of a sentence. The previous-label
/// feature is carried by the transition weights instead.
pub fn token_features(words: &[&str]) -> Vec<Vec<String>> {
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    (0..words.len())
        .map(|i| {
            let w = &lower[i];
            let chars: Vec<char> = w.chars().collect();
            let mut f = Vec::with_capacity(16);
            f.push("bias".to_string());
            f.push(format!("w={w}"));
            f.push(format!("sh={}", shape(words[i])));
            for k in 1..=4.min(chars.len()) {
                f.push(format!("p{k}={}", chars[..k].iter().collect::<String>()));
                f.push(format!(
                    "s{k}={}",
                    chars[chars.len() - k..].iter().collect::<String>()
                ));
            }
            for d in [-2isize, -1, 1, 2] {
                f.push(format!("w{d:+}={}", window_word(&lower, i as isize + d)));
            }
            f
        })
        .collect()
}

/// Relation features for one marked pair. `trig` and `arg` are token ranges
/// into `words` (the unmarked sentence).
pub fn relation_features(
    words: &[&str],
    trig: &Range<usize>,
    arg: &Range<usize>,
    trigger_label: &str,
    arg_label: &str,
) -> Vec<String> {
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let mut f = Vec::with_capacity(32);
    let tw = lower[trig.clone()].join("_");
    let aw = lower[arg.clone()].join("_");
    f.push(format!("tl={trigger_label}"));
    f.push(format!("al={arg_label}"));
    f.push(format!("tw={tw}"));
    f.push(format!("aw={aw}"));
    let (dir, gap) = if arg.start >= trig.end {
        ("R", arg.start - trig.end)
    } else {
        ("L", trig.start - arg.end)
    };
    f.push(format!("dir={dir}"));
    f.push(format!("dist={}", gap.min(10)));
    f.push(format!("dir|dist={dir}|{}", gap.min(10)));
    let between = if dir == "R" {
        trig.end..arg.start
    } else {
        arg.end..trig.start
    };
    let mut bag: Vec<&str> = lower[between].iter().map(String::as_str).collect();
    bag.sort_unstable();
    bag.dedup();
    for w in bag {
        f.push(format!("bw={w}"));
    }
    for (tag, r) in [("t", trig), ("a", arg)] {
        for d in [1isize, 2] {
            f.push(format!(
                "{tag}-{d}={}",
                window_word(&lower, r.start as isize - d)
            ));
            f.push(format!(
                "{tag}+{d}={}",
                window_word(&lower, r.end as isize - 1 + d)
            ));
        }
    }
    f
}
