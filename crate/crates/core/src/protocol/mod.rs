//! JSON Lines protocol through which an external model serves the tagging
//! and role-classification tasks. See `docs/protocol.md` for the wire
//! reference.

pub mod client;
pub mod dump;
pub mod server;
pub mod transport;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::baseline::StopReason;
use crate::encoding::{MarkerConfig, RelationCandidate, NO_RELATION};

pub use client::{conformance_suite, Client, SessionReport, TrainStreams};
pub use server::{serve, BaselineServer, EchoServer, ModelServer, Session};
pub use transport::Transport;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Ner,
    Re,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ner => "ner",
            Task::Re => "re",
        })
    }
}

/// Label inventories: BIO tag names and roles (`No_relation` first).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSets {
    #[serde(default)]
    pub ner: Vec<String>,
    #[serde(default)]
    pub re: Vec<String>,
}

/// One gold-tagged training sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSentence {
    pub words: Vec<String>,
    pub labels: Vec<String>,
}

/// A relation candidate as sent over the wire. `tokens` carries the marker
/// strings; `trigger` and `argument` are `[start, end)` word indices into
/// the unmarked sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub tokens: Vec<String>,
    pub event_type: String,
    pub trigger: [usize; 2],
    pub argument_label: String,
    pub argument: [usize; 2],
    pub allowed_roles: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl WireCandidate {
    /// `with_gold` includes the gold role, for training.
    pub fn from_candidate(c: &RelationCandidate, with_gold: bool) -> Self {
        WireCandidate {
            tokens: c.marked_tokens.clone(),
            event_type: c.event_type.clone(),
            trigger: [c.trigger_tokens.start, c.trigger_tokens.end],
            argument_label: c.argument_label.clone(),
            argument: [c.argument_tokens.start, c.argument_tokens.end],
            allowed_roles: c.allowed_roles.clone(),
            role: with_gold.then(|| c.gold_role.clone()),
        }
    }

    /// Sentence and mention indices are not transmitted and come back as 0.
    pub fn to_candidate(&self) -> RelationCandidate {
        RelationCandidate {
            sentence: 0,
            trigger: 0,
            event_type: self.event_type.clone(),
            trigger_tokens: self.trigger[0]..self.trigger[1],
            argument: 0,
            argument_label: self.argument_label.clone(),
            argument_tokens: self.argument[0]..self.argument[1],
            marked_tokens: self.tokens.clone(),
            gold_role: self.role.clone().unwrap_or_else(|| NO_RELATION.to_string()),
            allowed_roles: self.allowed_roles.clone(),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One line on the wire. Requests flow client → server; each is answered by
/// exactly one record carrying the same `id`. Training records are
/// acknowledged with the same kind, the same id and `"ok": true`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Hello {
        id: u64,
        version: u32,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        tasks: Vec<Task>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<LabelSets>,
        #[serde(default, skip_serializing_if = "is_false")]
        training: bool,
    },
    TagRequest {
        id: u64,
        sentences: Vec<Vec<String>>,
    },
    TagResponse {
        id: u64,
        labels: Vec<Vec<String>>,
    },
    RelRequest {
        id: u64,
        candidates: Vec<WireCandidate>,
    },
    RelResponse {
        id: u64,
        roles: Vec<String>,
    },
    TrainBegin {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        markers: Option<MarkerConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<LabelSets>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        hyperparams: BTreeMap<String, Value>,
        #[serde(default, skip_serializing_if = "is_false")]
        ok: bool,
    },
    TrainExample {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epoch: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task: Option<Task>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sentences: Vec<TrainSentence>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        candidates: Vec<WireCandidate>,
        #[serde(default, skip_serializing_if = "is_false")]
        ok: bool,
    },
    EpochEnd {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epoch: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score: Option<f64>,
        #[serde(default, skip_serializing_if = "is_false")]
        ok: bool,
    },
    TrainEnd {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epochs: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        best_epoch: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stop_reason: Option<StopReason>,
        #[serde(default, skip_serializing_if = "is_false")]
        ok: bool,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

impl Record {
    pub fn kind(&self) -> &'static str {
        match self {
            Record::Hello { .. } => "hello",
            Record::TagRequest { .. } => "tag_request",
            Record::TagResponse { .. } => "tag_response",
            Record::RelRequest { .. } => "rel_request",
            Record::RelResponse { .. } => "rel_response",
            Record::TrainBegin { .. } => "train_begin",
            Record::TrainExample { .. } => "train_example",
            Record::EpochEnd { .. } => "epoch_end",
            Record::TrainEnd { .. } => "train_end",
            Record::Error { .. } => "error",
        }
    }

    pub fn id(&self) -> Option<u64> {
        match self {
            Record::Hello { id, .. }
            | Record::TagRequest { id, .. }
            | Record::TagResponse { id, .. }
            | Record::RelRequest { id, .. }
            | Record::RelResponse { id, .. }
            | Record::TrainBegin { id, .. }
            | Record::TrainExample { id, .. }
            | Record::EpochEnd { id, .. }
            | Record::TrainEnd { id, .. } => Some(*id),
            Record::Error { id, .. } => *id,
        }
    }

    /// Single-line JSON, no trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    pub fn parse(line: &str) -> Result<Record, ProtocolError> {
        serde_json::from_str(line).map_err(|e| ProtocolError::Malformed {
            line: truncate(line),
            reason: e.to_string(),
        })
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 200;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("no answer within {0:?}")]
    Timeout(Duration),
    #[error("connection closed")]
    Closed,
    #[error("malformed record `{line}`: {reason}")]
    Malformed { line: String, reason: String },
    #[error("expected `{expected}` for request {id}, got `{got}`")]
    UnexpectedKind {
        id: u64,
        expected: &'static str,
        got: &'static str,
    },
    #[error("expected response id {expected}, got {got:?}")]
    IdMismatch { expected: u64, got: Option<u64> },
    #[error("server speaks protocol version {0}, client speaks {PROTOCOL_VERSION}")]
    Version(u32),
    #[error("server does not support {0}")]
    Unsupported(String),
    #[error("server error for request {id:?}: {message}")]
    Server { id: Option<u64>, message: String },
    #[error("request {id}: sentence {index} has {want} words but {got} labels")]
    Length {
        id: u64,
        index: usize,
        want: usize,
        got: usize,
    },
    #[error("request {id}: {want} inputs but {got} outputs")]
    Count { id: u64, want: usize, got: usize },
    #[error("request {id}: unknown label `{label}`")]
    UnknownLabel { id: u64, label: String },
}

/// Where the model server lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    /// Program and arguments; the server speaks on its standard streams.
    Command(Vec<String>),
    /// `host:port` of a listening server.
    Tcp(String),
    /// A server object owned by the client; see [`Client::in_process`].
    InProcess,
}

impl Endpoint {
    /// `tcp:HOST:PORT` or `cmd:PROGRAM ARG...`.
    pub fn parse(s: &str) -> Result<Endpoint, ProtocolError> {
        if let Some(addr) = s.strip_prefix("tcp:") {
            if addr
                .rsplit_once(':')
                .is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok())
            {
                return Ok(Endpoint::Tcp(addr.to_string()));
            }
            return Err(ProtocolError::Config(format!(
                "bad socket address `{addr}`"
            )));
        }
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(ProtocolError::Config("empty command".into()));
            }
            return Ok(Endpoint::Command(argv));
        }
        Err(ProtocolError::Config(format!(
            "endpoint `{s}` must start with `tcp:` or `cmd:`"
        )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub endpoint: Endpoint,
    pub markers: MarkerConfig,
    pub timeout: Duration,
    pub batch_size: usize,
    /// Passed through verbatim in `train_begin`.
    pub hyperparams: BTreeMap<String, Value>,
}

impl ProtocolConfig {
    pub fn new(endpoint: Endpoint) -> Self {
        ProtocolConfig {
            endpoint,
            markers: MarkerConfig::default(),
            timeout: Duration::from_secs(30),
            batch_size: 32,
            hyperparams: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.timeout.is_zero() {
            return Err(ProtocolError::Config("timeout must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ProtocolError::Config(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_lines() {
        let r = Record::Hello {
            id: 0,
            version: 1,
            tasks: vec![],
            labels: None,
            training: false,
        };
        assert_eq!(r.to_line(), r#"{"kind":"hello","id":0,"version":1}"#);
        let ack = Record::TrainExample {
            id: 4,
            epoch: None,
            task: None,
            sentences: vec![],
            candidates: vec![],
            ok: true,
        };
        assert_eq!(
            ack.to_line(),
            r#"{"kind":"train_example","id":4,"ok":true}"#
        );
        let e = Record::parse(r#"{"kind":"error","message":"bad"}"#).unwrap();
        assert_eq!(e.id(), None);
        assert!(matches!(
            Record::parse(r#"{"kind":"bogus","id":1}"#),
            Err(ProtocolError::Malformed { .. })
        ));
        assert!(Record::parse("not json").is_err());
        let tr = Record::TagResponse {
            id: 3,
            labels: vec![vec!["O".into()]],
        };
        assert_eq!(Record::parse(&tr.to_line()).unwrap(), tr);
    }

    #[test]
    fn endpoints_and_config() {
        assert_eq!(
            Endpoint::parse("tcp:127.0.0.1:9000").unwrap(),
            Endpoint::Tcp("127.0.0.1:9000".into())
        );
        assert_eq!(
            Endpoint::parse("cmd:radfind serve --echo").unwrap(),
            Endpoint::Command(vec!["radfind".into(), "serve".into(), "--echo".into()])
        );
        assert!(Endpoint::parse("tcp:nohost").is_err());
        assert!(Endpoint::parse("cmd:  ").is_err());
        assert!(Endpoint::parse("http://x").is_err());
        let mut c = ProtocolConfig::new(Endpoint::Tcp("h:1".into()));
        assert!(c.validate().is_ok());
        c.batch_size = 0;
        assert!(c.validate().is_err());
        c.batch_size = 1;
        c.timeout = Duration::ZERO;
        assert!(c.validate().is_err());
    }

    #[test]
    fn candidate_roundtrip() {
        let w = WireCandidate {
            tokens: vec!["[unused0]".into(), "mass".into(), "[unused1]".into()],
            event_type: "Lesion".into(),
            trigger: [0, 1],
            argument_label: "Lesion-Anatomy".into(),
            argument: [3, 4],
            allowed_roles: vec![NO_RELATION.into(), "Lesion-Anatomy".into()],
            role: Some("Lesion-Anatomy".into()),
        };
        let c = w.to_candidate();
        assert_eq!(WireCandidate::from_candidate(&c, true), w);
        let bare = WireCandidate::from_candidate(&c, false);
        assert_eq!(bare.role, None);
        assert_eq!(bare.to_candidate().gold_role, NO_RELATION);
    }
}
