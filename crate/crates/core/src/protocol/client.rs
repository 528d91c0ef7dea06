//! Client side: handshake, batched inference, training sessions and the
//! conformance suite.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::server::ModelServer;
use super::transport::{self, InProcess, Transport};
use super::{
    Endpoint, LabelSets, ProtocolConfig, ProtocolError, Record, Task, TrainSentence, WireCandidate,
    PROTOCOL_VERSION,
};
use crate::baseline::{StopReason, TrainConfig};
use crate::encoding::{MarkerConfig, RelationCandidate, TagSet, TaskData, NO_RELATION};
use crate::pipeline::{Extractor, PipelineError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub version: u32,
    pub tasks: Vec<Task>,
    pub labels: LabelSets,
    pub training: bool,
}

/// Training material in wire form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainStreams {
    pub ner: Vec<TrainSentence>,
    pub re: Vec<WireCandidate>,
}

impl TrainStreams {
    pub fn from_task(data: &TaskData, tags: &TagSet) -> Self {
        TrainStreams {
            ner: data
                .ner
                .iter()
                .map(|s| TrainSentence {
                    words: s.words.clone(),
                    labels: s.tags.iter().map(|&t| tags.name(t).to_string()).collect(),
                })
                .collect(),
            re: data
                .re
                .iter()
                .map(|c| WireCandidate::from_candidate(c, true))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Task of each batch in the order sent.
    pub schedule: Vec<Task>,
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub epochs: Vec<EpochRecord>,
}

/// Interleaves `ner` and `re` batches, drawing each next task with
/// probability proportional to its remaining batch count.
pub fn schedule(ner: usize, re: usize, rng: &mut impl Rng) -> Vec<Task> {
    let (mut a, mut b) = (ner, re);
    let mut out = Vec::with_capacity(a + b);
    while a + b > 0 {
        if rng.gen_range(0..a + b) < a {
            out.push(Task::Ner);
            a -= 1;
        } else {
            out.push(Task::Re);
            b -= 1;
        }
    }
    out
}

fn micro_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// One session with a model server. Requests are strictly sequential; ids
/// start at 0 with the handshake and increase by one per request.
pub struct Client {
    transport: Option<Box<dyn Transport>>,
    config: ProtocolConfig,
    next_id: u64,
    caps: Capabilities,
    /// Roles returned outside the candidate's allowed list.
    pub violations: usize,
}

impl Client {
    pub fn connect(config: ProtocolConfig) -> Result<Client, ProtocolError> {
        config.validate()?;
        let t = transport::connect(&config.endpoint, config.timeout)?;
        Client::with_transport(t, config)
    }

    pub fn with_transport(
        transport: Box<dyn Transport>,
        config: ProtocolConfig,
    ) -> Result<Client, ProtocolError> {
        config.validate()?;
        let mut c = Client {
            transport: Some(transport),
            config,
            next_id: 0,
            caps: Capabilities {
                version: 0,
                tasks: Vec::new(),
                labels: LabelSets::default(),
                training: false,
            },
            violations: 0,
        };
        c.caps = c.handshake()?;
        Ok(c)
    }

    /// A server running in this thread, for tests and local wrapping.
    pub fn in_process<S: ModelServer + Send + 'static>(
        server: S,
        mut config: ProtocolConfig,
    ) -> Result<Client, ProtocolError> {
        config.endpoint = Endpoint::InProcess;
        Client::with_transport(Box::new(InProcess::new(server)), config)
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn is_closed(&self) -> bool {
        self.transport.is_none()
    }

    /// Drops the connection; a child server is terminated.
    pub fn close(&mut self) {
        self.transport = None;
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Sends one line and returns the parsed reply, without any id check.
    pub fn send_raw(&mut self, line: &str) -> Result<Record, ProtocolError> {
        let timeout = self.config.timeout;
        let t = self.transport.as_mut().ok_or(ProtocolError::Closed)?;
        let reply = t.send(line).and_then(|_| t.recv(timeout));
        let parsed = reply.and_then(|l| Record::parse(&l));
        if let Err(e) = &parsed {
            if !matches!(e, ProtocolError::Server { .. }) {
                self.close();
            }
        }
        parsed
    }

    /// Round trip for `req`, whose id must be the last one taken. Error
    /// records surface as [`ProtocolError::Server`]; anything else unexpected
    /// closes the connection.
    fn call(&mut self, req: Record, expected: &'static str) -> Result<Record, ProtocolError> {
        let id = req.id().expect("requests carry ids");
        let resp = self.send_raw(&req.to_line())?;
        if let Record::Error { id: rid, message } = resp {
            if rid.is_some_and(|r| r != id) {
                self.close();
                return Err(ProtocolError::IdMismatch {
                    expected: id,
                    got: rid,
                });
            }
            return Err(ProtocolError::Server { id: rid, message });
        }
        if resp.id() != Some(id) {
            self.close();
            return Err(ProtocolError::IdMismatch {
                expected: id,
                got: resp.id(),
            });
        }
        if resp.kind() != expected {
            self.close();
            return Err(ProtocolError::UnexpectedKind {
                id,
                expected,
                got: resp.kind(),
            });
        }
        Ok(resp)
    }

    fn handshake(&mut self) -> Result<Capabilities, ProtocolError> {
        let id = self.take_id();
        let req = Record::Hello {
            id,
            version: PROTOCOL_VERSION,
            tasks: Vec::new(),
            labels: None,
            training: false,
        };
        match self.call(req, "hello")? {
            Record::Hello {
                version,
                tasks,
                labels,
                training,
                ..
            } => {
                if version != PROTOCOL_VERSION {
                    self.close();
                    return Err(ProtocolError::Version(version));
                }
                if tasks.is_empty() {
                    self.close();
                    return Err(ProtocolError::Malformed {
                        line: "hello".into(),
                        reason: "server lists no tasks".into(),
                    });
                }
                Ok(Capabilities {
                    version,
                    tasks,
                    labels: labels.unwrap_or_default(),
                    training,
                })
            }
            _ => unreachable!("kind checked"),
        }
    }

    fn require(&self, task: Task) -> Result<(), ProtocolError> {
        if self.caps.tasks.contains(&task) {
            Ok(())
        } else {
            Err(ProtocolError::Unsupported(task.to_string()))
        }
    }

    /// One label per word for every sentence, sent in `batch_size` chunks.
    pub fn tag_batch(
        &mut self,
        sentences: &[Vec<String>],
    ) -> Result<Vec<Vec<String>>, ProtocolError> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        self.require(Task::Ner)?;
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(self.config.batch_size) {
            let id = self.take_id();
            let req = Record::TagRequest {
                id,
                sentences: chunk.to_vec(),
            };
            let Record::TagResponse { labels, .. } = self.call(req, "tag_response")? else {
                unreachable!("kind checked")
            };
            if labels.len() != chunk.len() {
                return Err(ProtocolError::Count {
                    id,
                    want: chunk.len(),
                    got: labels.len(),
                });
            }
            for (index, (s, l)) in chunk.iter().zip(&labels).enumerate() {
                if s.len() != l.len() {
                    return Err(ProtocolError::Length {
                        id,
                        index,
                        want: s.len(),
                        got: l.len(),
                    });
                }
                let known = &self.caps.labels.ner;
                if let Some(bad) = l.iter().find(|x| !known.is_empty() && !known.contains(x)) {
                    return Err(ProtocolError::UnknownLabel {
                        id,
                        label: bad.clone(),
                    });
                }
            }
            out.extend(labels);
        }
        Ok(out)
    }

    /// One role per candidate. A role outside the candidate's allowed list
    /// counts as a violation and is replaced by `No_relation`.
    pub fn rel_batch(
        &mut self,
        candidates: &[WireCandidate],
    ) -> Result<Vec<String>, ProtocolError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        self.require(Task::Re)?;
        let mut out = Vec::with_capacity(candidates.len());
        for chunk in candidates.chunks(self.config.batch_size) {
            let id = self.take_id();
            let req = Record::RelRequest {
                id,
                candidates: chunk.to_vec(),
            };
            let Record::RelResponse { roles, .. } = self.call(req, "rel_response")? else {
                unreachable!("kind checked")
            };
            if roles.len() != chunk.len() {
                return Err(ProtocolError::Count {
                    id,
                    want: chunk.len(),
                    got: roles.len(),
                });
            }
            for (c, r) in chunk.iter().zip(roles) {
                if c.allowed_roles.contains(&r) {
                    out.push(r);
                } else {
                    self.violations += 1;
                    out.push(NO_RELATION.to_string());
                }
            }
        }
        Ok(out)
    }

    /// Mean of tagging token F1 and positive-role F1 over the tasks present.
    fn validation_score(&mut self, val: &TrainStreams) -> Result<Option<f64>, ProtocolError> {
        let mut parts = Vec::new();
        if !val.ner.is_empty() {
            let words: Vec<Vec<String>> = val.ner.iter().map(|s| s.words.clone()).collect();
            let pred = self.tag_batch(&words)?;
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (s, p) in val.ner.iter().zip(&pred) {
                for (g, p) in s.labels.iter().zip(p) {
                    if g == p && g != "O" {
                        tp += 1;
                    } else {
                        fp += usize::from(p != "O");
                        fn_ += usize::from(g != "O");
                    }
                }
            }
            parts.push(micro_f1(tp, fp, fn_));
        }
        if !val.re.is_empty() {
            let bare: Vec<WireCandidate> = val
                .re
                .iter()
                .map(|c| WireCandidate {
                    role: None,
                    ..c.clone()
                })
                .collect();
            let pred = self.rel_batch(&bare)?;
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (c, p) in val.re.iter().zip(&pred) {
                let g = c.role.as_deref().unwrap_or(NO_RELATION);
                if g == p && p != NO_RELATION {
                    tp += 1;
                } else {
                    fp += usize::from(p != NO_RELATION);
                    fn_ += usize::from(g != NO_RELATION);
                }
            }
            parts.push(micro_f1(tp, fp, fn_));
        }
        Ok((!parts.is_empty()).then(|| parts.iter().sum::<f64>() / parts.len() as f64))
    }

    fn ack(&mut self, req: Record) -> Result<(), ProtocolError> {
        let kind = req.kind();
        let expected = match kind {
            "train_begin" => "train_begin",
            "train_example" => "train_example",
            "epoch_end" => "epoch_end",
            _ => "train_end",
        };
        let resp = self.call(req, expected)?;
        let ok = match resp {
            Record::TrainBegin { ok, .. }
            | Record::TrainExample { ok, .. }
            | Record::EpochEnd { ok, .. }
            | Record::TrainEnd { ok, .. } => ok,
            _ => false,
        };
        if !ok {
            self.close();
            return Err(ProtocolError::Malformed {
                line: kind.into(),
                reason: "acknowledgement without `ok: true`".into(),
            });
        }
        Ok(())
    }

    /// Streams `train` in seeded, interleaved batches for up to `cfg.epochs`
    /// epochs. With `val`, the client scores each epoch through the server,
    /// forwards the score in `epoch_end`, and stops after `cfg.patience`
    /// epochs without improvement.
    pub fn train_session(
        &mut self,
        train: &TrainStreams,
        val: Option<&TrainStreams>,
        cfg: &TrainConfig,
    ) -> Result<SessionReport, ProtocolError> {
        if !self.caps.training {
            return Err(ProtocolError::Unsupported("training".into()));
        }
        if cfg.epochs == 0 {
            return Err(ProtocolError::Config("epochs must be at least 1".into()));
        }
        if train.ner.is_empty() && train.re.is_empty() {
            return Err(ProtocolError::Config("nothing to train on".into()));
        }
        if !train.ner.is_empty() {
            self.require(Task::Ner)?;
        }
        if !train.re.is_empty() {
            self.require(Task::Re)?;
        }
        let id = self.take_id();
        self.ack(Record::TrainBegin {
            id,
            seed: Some(cfg.seed),
            markers: Some(self.config.markers.clone()),
            labels: Some(self.caps.labels.clone()),
            hyperparams: self.config.hyperparams.clone(),
            ok: false,
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ner_order: Vec<usize> = (0..train.ner.len()).collect();
        let mut re_order: Vec<usize> = (0..train.re.len()).collect();
        let bs = self.config.batch_size;
        let mut epochs = Vec::new();
        let mut best: Option<(usize, Option<f64>)> = None;
        let mut stale = 0;
        let mut stop = StopReason::MaxEpochs;
        for epoch in 1..=cfg.epochs {
            ner_order.shuffle(&mut rng);
            re_order.shuffle(&mut rng);
            let mut ner_batches = ner_order.chunks(bs);
            let mut re_batches = re_order.chunks(bs);
            let plan = schedule(ner_batches.len(), re_batches.len(), &mut rng);
            for &task in &plan {
                let id = self.take_id();
                let (sentences, candidates) = match task {
                    Task::Ner => (
                        ner_batches
                            .next()
                            .expect("planned")
                            .iter()
                            .map(|&i| train.ner[i].clone())
                            .collect(),
                        Vec::new(),
                    ),
                    Task::Re => (
                        Vec::new(),
                        re_batches
                            .next()
                            .expect("planned")
                            .iter()
                            .map(|&i| train.re[i].clone())
                            .collect(),
                    ),
                };
                self.ack(Record::TrainExample {
                    id,
                    epoch: Some(epoch),
                    task: Some(task),
                    sentences,
                    candidates,
                    ok: false,
                })?;
            }
            let score = match val {
                Some(v) => self.validation_score(v)?,
                None => None,
            };
            let id = self.take_id();
            self.ack(Record::EpochEnd {
                id,
                epoch: Some(epoch),
                score,
                ok: false,
            })?;
            epochs.push(EpochRecord {
                epoch,
                schedule: plan,
                score,
            });
            let improved = match (best, score) {
                (None, _) | (_, None) => true,
                (Some((_, b)), Some(s)) => b.is_none_or(|b| s > b),
            };
            if improved {
                best = Some((epoch, score));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    stop = StopReason::EarlyStop;
                    break;
                }
            }
        }
        let best_epoch = best.map(|(e, _)| e).unwrap_or(epochs.len());
        let id = self.take_id();
        self.ack(Record::TrainEnd {
            id,
            epochs: Some(epochs.len()),
            best_epoch: Some(best_epoch),
            stop_reason: Some(stop),
            ok: false,
        })?;
        Ok(SessionReport {
            epochs_run: epochs.len(),
            best_epoch,
            stop_reason: stop,
            epochs,
        })
    }
}

impl Extractor for Client {
    fn markers(&self) -> MarkerConfig {
        self.config.markers.clone()
    }

    fn tag(&mut self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, PipelineError> {
        self.tag_batch(sentences)
            .map_err(|e| PipelineError::Model(e.to_string()))
    }

    fn classify(&mut self, candidates: &[RelationCandidate]) -> Result<Vec<String>, PipelineError> {
        let wire: Vec<WireCandidate> = candidates
            .iter()
            .map(|c| WireCandidate::from_candidate(c, false))
            .collect();
        self.rel_batch(&wire)
            .map_err(|e| PipelineError::Model(e.to_string()))
    }
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn sample_candidate() -> WireCandidate {
    let m = MarkerConfig::default();
    WireCandidate {
        tokens: [
            &m.trigger_open,
            "mass",
            &m.trigger_close,
            "in",
            "the",
            &m.arg_open,
            "liver",
            &m.arg_close,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        event_type: "Lesion".into(),
        trigger: [0, 1],
        argument_label: "Lesion-Anatomy".into(),
        argument: [3, 4],
        allowed_roles: vec![NO_RELATION.into(), "Lesion-Anatomy".into()],
        role: None,
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Contract checks against a server; `connect` opens a fresh session for
/// each check. Returns `(check name, outcome)` in a fixed order.
pub fn conformance_suite(
    connect: &dyn Fn() -> Result<Client, ProtocolError>,
) -> Vec<(&'static str, Result<(), String>)> {
    type Check = fn(&mut Client) -> Result<(), String>;
    let checks: Vec<(&'static str, Check)> = vec![
        ("handshake", |c| {
            let caps = c.capabilities().clone();
            check(caps.version == PROTOCOL_VERSION, || {
                format!("version {}", caps.version)
            })?;
            check(
                caps.tasks.contains(&Task::Ner) && caps.tasks.contains(&Task::Re),
                || format!("tasks {:?}", caps.tasks),
            )?;
            check(
                caps.labels.ner.first().map(String::as_str) == Some("O"),
                || "ner labels must start with O".into(),
            )?;
            check(
                caps.labels.re.first().map(String::as_str) == Some(NO_RELATION),
                || "re labels must start with No_relation".into(),
            )
        }),
        ("tag_length", |c| {
            let out = c
                .tag_batch(&[words("mass in liver")])
                .map_err(|e| e.to_string())?;
            check(out.len() == 1 && out[0].len() == 3, || format!("{out:?}"))
        }),
        ("tag_batching", |c| {
            let input: Vec<Vec<String>> = (0..5).map(|i| words(&"w ".repeat(i + 1))).collect();
            let out = c.tag_batch(&input).map_err(|e| e.to_string())?;
            check(out.iter().map(Vec::len).eq(1..=5), || format!("{out:?}"))
        }),
        ("empty_inputs", |c| {
            let before = c.next_id;
            let a = c.tag_batch(&[]).map_err(|e| e.to_string())?;
            let b = c.rel_batch(&[]).map_err(|e| e.to_string())?;
            check(a.is_empty() && b.is_empty() && c.next_id == before, || {
                "empty batch made a round trip".into()
            })?;
            let e = c.tag_batch(&[Vec::new()]).map_err(|e| e.to_string())?;
            check(e == vec![Vec::<String>::new()], || format!("{e:?}"))
        }),
        ("rel_roles_allowed", |c| {
            let out = c
                .rel_batch(&[sample_candidate(), sample_candidate()])
                .map_err(|e| e.to_string())?;
            check(out.len() == 2 && c.violations == 0, || {
                format!("{out:?}, {} violations", c.violations)
            })
        }),
        ("ids_echoed", |c| {
            let id = c.take_id();
            let r = c
                .send_raw(
                    &Record::TagRequest {
                        id,
                        sentences: vec![words("a b")],
                    }
                    .to_line(),
                )
                .map_err(|e| e.to_string())?;
            check(r.id() == Some(id) && r.kind() == "tag_response", || {
                format!("{r:?}")
            })
        }),
        ("malformed_line", |c| {
            let r = c.send_raw("{not json").map_err(|e| e.to_string())?;
            check(matches!(r, Record::Error { .. }), || format!("{r:?}"))
        }),
        ("unknown_kind", |c| {
            let id = c.take_id();
            let r = c
                .send_raw(&format!(r#"{{"kind":"frobnicate","id":{id}}}"#))
                .map_err(|e| e.to_string())?;
            check(
                matches!(r, Record::Error { id: Some(x), .. } if x == id),
                || format!("{r:?}"),
            )
        }),
        ("version_mismatch", |c| {
            let id = c.take_id();
            let r = c
                .send_raw(&format!(r#"{{"kind":"hello","id":{id},"version":999}}"#))
                .map_err(|e| e.to_string())?;
            check(matches!(r, Record::Error { .. }), || format!("{r:?}"))
        }),
        ("training_without_session", |c| {
            let id = c.take_id();
            let r = c
                .send_raw(&format!(r#"{{"kind":"epoch_end","id":{id},"epoch":1}}"#))
                .map_err(|e| e.to_string())?;
            check(matches!(r, Record::Error { .. }), || format!("{r:?}"))
        }),
        ("train_session", |c| {
            if !c.capabilities().training {
                return Ok(());
            }
            let o = || "O".to_string();
            let streams = TrainStreams {
                ner: vec![TrainSentence {
                    words: words("mass in liver"),
                    labels: vec![o(), o(), o()],
                }],
                re: Vec::new(),
            };
            let cfg = TrainConfig {
                epochs: 2,
                seed: 1,
                patience: 5,
            };
            let r = c
                .train_session(&streams, None, &cfg)
                .map_err(|e| e.to_string())?;
            check(
                r.epochs_run == 2 && r.epochs.iter().all(|e| e.schedule == [Task::Ner]),
                || format!("{r:?}"),
            )
        }),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let outcome = connect()
                .map_err(|e| e.to_string())
                .and_then(|mut c| f(&mut c));
            (name, outcome)
        })
        .collect()
}
