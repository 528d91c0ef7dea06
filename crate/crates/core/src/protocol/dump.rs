//! Task dumps: one `train_example` record per line, holding one sentence or
//! one candidate.

use super::{ProtocolError, Record, Task, TrainSentence, TrainStreams, WireCandidate};

fn example(
    id: u64,
    task: Task,
    sentences: Vec<TrainSentence>,
    candidates: Vec<WireCandidate>,
) -> String {
    Record::TrainExample {
        id,
        epoch: None,
        task: Some(task),
        sentences,
        candidates,
        ok: false,
    }
    .to_line()
}

/// NER lines first, then RE lines; ids count from 0 across both.
pub fn write_dump(streams: &TrainStreams) -> String {
    let mut out = String::new();
    let mut id = 0;
    for s in &streams.ner {
        out.push_str(&example(id, Task::Ner, vec![s.clone()], Vec::new()));
        out.push('\n');
        id += 1;
    }
    for c in &streams.re {
        out.push_str(&example(id, Task::Re, Vec::new(), vec![c.clone()]));
        out.push('\n');
        id += 1;
    }
    out
}

/// Reads a dump back; every non-blank line must be a `train_example`.
pub fn read_dump(text: &str) -> Result<TrainStreams, (usize, ProtocolError)> {
    let mut out = TrainStreams::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match Record::parse(line).map_err(|e| (i + 1, e))? {
            Record::TrainExample {
                sentences,
                candidates,
                ..
            } => {
                out.ner.extend(sentences);
                out.re.extend(candidates);
            }
            other => {
                return Err((
                    i + 1,
                    ProtocolError::Malformed {
                        line: other.kind().into(),
                        reason: "task dumps hold only train_example records".into(),
                    },
                ))
            }
        }
    }
    Ok(out)
}
