//! Server side: request dispatch, the echo server and the baseline server.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde_json::Value;

use super::{LabelSets, Record, Task, TrainSentence, WireCandidate, PROTOCOL_VERSION};
use crate::baseline::{role_labels, BaselineModel, RelTrainer, TaggerTrainer};
use crate::encoding::{MarkerConfig, TagSet, NO_RELATION};
use crate::schema::EventSchema;

/// A model behind the protocol. Errors become `error` records carrying the
/// request id.
pub trait ModelServer {
    fn tasks(&self) -> Vec<Task> {
        vec![Task::Ner, Task::Re]
    }

    fn labels(&self) -> LabelSets;

    fn supports_training(&self) -> bool {
        false
    }

    fn tag(&mut self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, String>;

    fn classify(&mut self, candidates: &[WireCandidate]) -> Result<Vec<String>, String>;

    fn train_begin(
        &mut self,
        _seed: u64,
        _markers: Option<&MarkerConfig>,
        _hyperparams: &BTreeMap<String, Value>,
    ) -> Result<(), String> {
        Err("training is not supported".into())
    }

    fn train_batch(
        &mut self,
        _task: Task,
        _sentences: &[TrainSentence],
        _candidates: &[WireCandidate],
    ) -> Result<(), String> {
        Err("training is not supported".into())
    }

    fn epoch_end(&mut self, _epoch: usize, _score: Option<f64>) -> Result<(), String> {
        Err("training is not supported".into())
    }

    fn train_end(&mut self, _best_epoch: Option<usize>) -> Result<(), String> {
        Err("training is not supported".into())
    }
}

/// Turns request lines into response lines for one client.
pub struct Session<S> {
    pub server: S,
    training: bool,
}

fn raw_id(line: &str) -> Option<u64> {
    serde_json::from_str::<Value>(line)
        .ok()?
        .get("id")?
        .as_u64()
}

impl<S: ModelServer> Session<S> {
    pub fn new(server: S) -> Self {
        Session {
            server,
            training: false,
        }
    }

    pub fn respond(&mut self, line: &str) -> String {
        let rec = match Record::parse(line) {
            Ok(r) => r,
            Err(e) => {
                return Record::Error {
                    id: raw_id(line),
                    message: e.to_string(),
                }
                .to_line()
            }
        };
        let id = rec.id();
        match self.dispatch(rec) {
            Ok(r) => r,
            Err(message) => Record::Error { id, message },
        }
        .to_line()
    }

    fn require_training(&self) -> Result<(), String> {
        if self.training {
            Ok(())
        } else {
            Err("no training session is open".into())
        }
    }

    fn dispatch(&mut self, rec: Record) -> Result<Record, String> {
        Ok(match rec {
            Record::Hello { id, version, .. } => {
                if version != PROTOCOL_VERSION {
                    return Err(format!("unsupported protocol version {version}"));
                }
                Record::Hello {
                    id,
                    version: PROTOCOL_VERSION,
                    tasks: self.server.tasks(),
                    labels: Some(self.server.labels()),
                    training: self.server.supports_training(),
                }
            }
            Record::TagRequest { id, sentences } => Record::TagResponse {
                id,
                labels: self.server.tag(&sentences)?,
            },
            Record::RelRequest { id, candidates } => Record::RelResponse {
                id,
                roles: self.server.classify(&candidates)?,
            },
            Record::TrainBegin {
                id,
                seed,
                markers,
                hyperparams,
                ok: false,
                ..
            } => {
                self.server
                    .train_begin(seed.unwrap_or(0), markers.as_ref(), &hyperparams)?;
                self.training = true;
                ack_begin(id)
            }
            Record::TrainExample {
                id,
                task,
                sentences,
                candidates,
                ok: false,
                ..
            } => {
                self.require_training()?;
                let task = task.ok_or("train_example without a task")?;
                self.server.train_batch(task, &sentences, &candidates)?;
                Record::TrainExample {
                    id,
                    epoch: None,
                    task: None,
                    sentences: Vec::new(),
                    candidates: Vec::new(),
                    ok: true,
                }
            }
            Record::EpochEnd {
                id,
                epoch,
                score,
                ok: false,
            } => {
                self.require_training()?;
                self.server
                    .epoch_end(epoch.ok_or("epoch_end without an epoch")?, score)?;
                Record::EpochEnd {
                    id,
                    epoch: None,
                    score: None,
                    ok: true,
                }
            }
            Record::TrainEnd {
                id,
                best_epoch,
                ok: false,
                ..
            } => {
                self.require_training()?;
                self.server.train_end(best_epoch)?;
                self.training = false;
                Record::TrainEnd {
                    id,
                    epochs: None,
                    best_epoch: None,
                    stop_reason: None,
                    ok: true,
                }
            }
            other => return Err(format!("`{}` is not a request", other.kind())),
        })
    }
}

fn ack_begin(id: u64) -> Record {
    Record::TrainBegin {
        id,
        seed: None,
        markers: None,
        labels: None,
        hyperparams: BTreeMap::new(),
        ok: true,
    }
}

/// Answers every request until end of input and returns the server.
pub fn serve<S: ModelServer>(
    server: S,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<S> {
    let mut session = Session::new(server);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", session.respond(&line))?;
        output.flush()?;
    }
    Ok(session.server)
}

/// Tags every word `O`, links nothing, and acknowledges training without
/// learning.
#[derive(Clone, Debug)]
pub struct EchoServer {
    labels: LabelSets,
}

impl EchoServer {
    pub fn new(schema: &EventSchema) -> Self {
        EchoServer {
            labels: LabelSets {
                ner: TagSet::from_schema(schema).names().to_vec(),
                re: role_labels(schema),
            },
        }
    }
}

impl ModelServer for EchoServer {
    fn labels(&self) -> LabelSets {
        self.labels.clone()
    }

    fn supports_training(&self) -> bool {
        true
    }

    fn tag(&mut self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, String> {
        Ok(sentences
            .iter()
            .map(|s| vec!["O".to_string(); s.len()])
            .collect())
    }

    fn classify(&mut self, candidates: &[WireCandidate]) -> Result<Vec<String>, String> {
        Ok(vec![NO_RELATION.to_string(); candidates.len()])
    }

    fn train_begin(
        &mut self,
        _: u64,
        _: Option<&MarkerConfig>,
        _: &BTreeMap<String, Value>,
    ) -> Result<(), String> {
        Ok(())
    }

    fn train_batch(
        &mut self,
        _: Task,
        _: &[TrainSentence],
        _: &[WireCandidate],
    ) -> Result<(), String> {
        Ok(())
    }

    fn epoch_end(&mut self, _: usize, _: Option<f64>) -> Result<(), String> {
        Ok(())
    }

    fn train_end(&mut self, _: Option<usize>) -> Result<(), String> {
        Ok(())
    }
}

struct TrainState {
    seed: u64,
    tag_index: HashMap<String, usize>,
    tagger: TaggerTrainer,
    rel: RelTrainer,
    epoch: usize,
    dirty: bool,
    best: Option<(Option<f64>, BaselineModel)>,
}

/// The perceptron baseline behind the protocol. Training restarts from zero
/// weights and keeps the epoch with the best forwarded validation score.
#[derive(Debug)]
pub struct BaselineServer {
    model: BaselineModel,
    state: Option<Box<TrainState>>,
}

impl std::fmt::Debug for TrainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainState")
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

impl BaselineServer {
    pub fn new(model: BaselineModel) -> Self {
        BaselineServer { model, state: None }
    }

    pub fn model(&self) -> &BaselineModel {
        &self.model
    }

    pub fn into_model(self) -> BaselineModel {
        self.model
    }

    fn refresh(&mut self) {
        if let Some(st) = self.state.as_mut().filter(|s| s.dirty) {
            self.model.tagger = st.tagger.snapshot(st.seed, st.epoch);
            self.model.relations = st.rel.snapshot(st.seed, st.epoch);
            st.dirty = false;
        }
    }
}

impl ModelServer for BaselineServer {
    fn labels(&self) -> LabelSets {
        LabelSets {
            ner: self.model.tagger.tags.clone(),
            re: self.model.relations.roles.clone(),
        }
    }

    fn supports_training(&self) -> bool {
        true
    }

    fn tag(&mut self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, String> {
        self.refresh();
        Ok(sentences
            .iter()
            .map(|s| {
                let words: Vec<&str> = s.iter().map(String::as_str).collect();
                self.model.tagger.tag_names(&words)
            })
            .collect())
    }

    fn classify(&mut self, candidates: &[WireCandidate]) -> Result<Vec<String>, String> {
        self.refresh();
        Ok(candidates
            .iter()
            .map(|c| {
                self.model
                    .relations
                    .classify(&c.to_candidate(), &self.model.markers)
            })
            .collect())
    }

    fn train_begin(
        &mut self,
        seed: u64,
        markers: Option<&MarkerConfig>,
        _: &BTreeMap<String, Value>,
    ) -> Result<(), String> {
        if let Some(m) = markers {
            m.validate([]).map_err(|e| e.to_string())?;
            self.model.markers = m.clone();
        }
        let tags = &self.model.tagger.tags;
        self.state = Some(Box::new(TrainState {
            seed,
            tag_index: tags
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i))
                .collect(),
            tagger: TaggerTrainer::new(tags),
            rel: RelTrainer::new(&self.model.relations.roles),
            epoch: 0,
            dirty: true,
            best: None,
        }));
        Ok(())
    }

    fn train_batch(
        &mut self,
        task: Task,
        sentences: &[TrainSentence],
        candidates: &[WireCandidate],
    ) -> Result<(), String> {
        let st = self.state.as_mut().ok_or("no training session is open")?;
        let markers = &self.model.markers;
        match task {
            Task::Ner => {
                for s in sentences {
                    let gold = s
                        .labels
                        .iter()
                        .map(|l| {
                            st.tag_index
                                .get(l)
                                .copied()
                                .ok_or_else(|| format!("unknown tag `{l}`"))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let words: Vec<&str> = s.words.iter().map(String::as_str).collect();
                    st.tagger.learn(&words, &gold).map_err(|e| e.to_string())?;
                }
            }
            Task::Re => {
                for c in candidates {
                    if c.role.is_none() {
                        return Err("training candidate without a role".into());
                    }
                    st.rel
                        .learn(&c.to_candidate(), markers)
                        .map_err(|e| e.to_string())?;
                }
            }
        }
        st.dirty = true;
        Ok(())
    }

    fn epoch_end(&mut self, epoch: usize, score: Option<f64>) -> Result<(), String> {
        let st = self.state.as_mut().ok_or("no training session is open")?;
        st.epoch = epoch;
        st.dirty = true;
        self.refresh();
        let st = self.state.as_mut().expect("open session");
        let better = match (&st.best, score) {
            (None, _) | (_, None) => true,
            (Some((b, _)), Some(s)) => b.is_none_or(|b| s > b),
        };
        if better {
            st.best = Some((score, self.model.clone()));
        }
        Ok(())
    }

    fn train_end(&mut self, _: Option<usize>) -> Result<(), String> {
        let st = self.state.take().ok_or("no training session is open")?;
        if let Some((_, mut m)) = st.best {
            m.tagger.epochs_run = st.epoch;
            m.relations.epochs_run = st.epoch;
            self.model = m;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;

    fn roundtrip(s: &mut Session<impl ModelServer>, line: &str) -> Record {
        Record::parse(&s.respond(line)).unwrap()
    }

    #[test]
    fn echo_answers_every_kind() {
        let mut s = Session::new(EchoServer::new(&default_schema()));
        match roundtrip(&mut s, r#"{"kind":"hello","id":0,"version":1}"#) {
            Record::Hello {
                id,
                version,
                tasks,
                labels,
                training,
            } => {
                assert_eq!((id, version, training), (0, 1, true));
                assert_eq!(tasks, vec![Task::Ner, Task::Re]);
                assert_eq!(labels.unwrap().ner[0], "O");
            }
            r => panic!("{r:?}"),
        }
        assert_eq!(
            roundtrip(
                &mut s,
                r#"{"kind":"tag_request","id":1,"sentences":[["a","b","c"]]}"#
            ),
            Record::TagResponse {
                id: 1,
                labels: vec![vec!["O".into(); 3]]
            }
        );
        assert!(matches!(
            roundtrip(&mut s, r#"{"kind":"hello","id":2,"version":9}"#),
            Record::Error { id: Some(2), .. }
        ));
        assert!(matches!(
            roundtrip(&mut s, r#"{"kind":"train_example","id":3,"task":"ner"}"#),
            Record::Error { id: Some(3), .. }
        ));
        assert!(matches!(
            roundtrip(&mut s, r#"{"kind":"tag_response","id":4,"labels":[]}"#),
            Record::Error { id: Some(4), .. }
        ));
        assert!(matches!(
            roundtrip(&mut s, "{oops"),
            Record::Error { id: None, .. }
        ));
        assert!(matches!(
            roundtrip(&mut s, r#"{"kind":"bogus","id":7}"#),
            Record::Error { id: Some(7), .. }
        ));
    }

    #[test]
    fn serve_reads_until_eof() {
        let input = "{\"kind\":\"hello\",\"id\":0,\"version\":1}\n\n{\"kind\":\"rel_request\",\"id\":1,\"candidates\":[]}\n";
        let mut out = Vec::new();
        serve(
            EchoServer::new(&default_schema()),
            input.as_bytes(),
            &mut out,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], r#"{"kind":"rel_response","id":1,"roles":[]}"#);
    }
}
