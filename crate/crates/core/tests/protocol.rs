use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use radfind::baseline::{train_baseline, BaselineModel, TrainConfig};
use radfind::default_schema;
use radfind::encoding::{encode_corpus, MarkerConfig, TagSet, NO_RELATION};
use radfind::evalstat::gen_fixture;
use radfind::pipeline::predict_text;
use radfind::protocol::client::schedule;
use radfind::protocol::{
    conformance_suite, serve, BaselineServer, Client, EchoServer, Endpoint, LabelSets, ModelServer,
    ProtocolConfig, ProtocolError, Task, TrainSentence, TrainStreams, WireCandidate,
};
use radfind::standoff::serialize_ann;

fn config() -> ProtocolConfig {
    let mut c = ProtocolConfig::new(Endpoint::InProcess);
    c.timeout = Duration::from_secs(5);
    c.batch_size = 3;
    c
}

fn trained() -> BaselineModel {
    let s = default_schema();
    train_baseline(&gen_fixture(7, 60), &[], &s, &TrainConfig::default())
        .unwrap()
        .0
}

fn assert_all_pass(results: &[(&str, Result<(), String>)]) {
    for (name, r) in results {
        assert!(r.is_ok(), "{name}: {r:?}");
    }
    assert!(results.len() >= 10);
}

#[test]
fn echo_and_baseline_pass_conformance_in_process() {
    let s = default_schema();
    assert_all_pass(&conformance_suite(&|| {
        Client::in_process(EchoServer::new(&s), config())
    }));
    let m = trained();
    assert_all_pass(&conformance_suite(&|| {
        Client::in_process(BaselineServer::new(m.clone()), config())
    }));
}

#[test]
fn protocol_path_is_byte_identical_to_direct_path() {
    let s = default_schema();
    let m = trained();
    let mut client = Client::in_process(BaselineServer::new(m.clone()), config()).unwrap();
    let mut linked = 0;
    for d in gen_fixture(11, 40) {
        let direct = predict_text(&mut &m, &s, &d.doc_id, &d.text).unwrap();
        let remote = predict_text(&mut client, &s, &d.doc_id, &d.text).unwrap();
        assert_eq!(
            serialize_ann(&direct.doc).unwrap(),
            serialize_ann(&remote.doc).unwrap()
        );
        linked += direct
            .events
            .iter()
            .filter(|e| !e.arguments.is_empty())
            .count();
    }
    assert!(linked > 0);
    assert_eq!(client.violations, 0);
}

fn spawn_tcp<F>(handler: F) -> String
where
    F: Fn(std::net::TcpStream) + Send + Sync + Clone + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let h = handler.clone();
            thread::spawn(move || h(stream));
        }
    });
    addr
}

#[test]
fn echo_over_tcp_passes_conformance() {
    let addr = spawn_tcp(|stream| {
        let reader = BufReader::new(stream.try_clone().unwrap());
        let _ = serve(EchoServer::new(&default_schema()), reader, stream);
    });
    let mut cfg = ProtocolConfig::new(Endpoint::parse(&format!("tcp:{addr}")).unwrap());
    cfg.timeout = Duration::from_secs(5);
    assert_all_pass(&conformance_suite(&|| Client::connect(cfg.clone())));
}

/// Answers each line with whatever `reply` returns; `None` means silence.
fn scripted(reply: fn(usize, &str) -> Option<String>) -> ProtocolConfig {
    let addr = spawn_tcp(move |stream| {
        let mut w = stream.try_clone().unwrap();
        for (i, line) in BufReader::new(stream).lines().enumerate() {
            let Ok(line) = line else { break };
            if let Some(r) = reply(i, &line) {
                if writeln!(w, "{r}").is_err() {
                    break;
                }
            }
        }
    });
    let mut cfg = ProtocolConfig::new(Endpoint::Tcp(addr));
    cfg.timeout = Duration::from_millis(400);
    cfg
}

fn hello(line: &str) -> String {
    let id = serde_json::from_str::<serde_json::Value>(line).unwrap()["id"]
        .as_u64()
        .unwrap();
    format!(r#"{{"kind":"hello","id":{id},"version":1,"tasks":["ner","re"],"training":true}}"#)
}

#[test]
fn unknown_kind_is_a_protocol_error_and_closes() {
    let cfg = scripted(|_, _| Some(r#"{"kind":"greetings","id":0}"#.into()));
    let err = Client::connect(cfg).err().unwrap();
    assert!(matches!(err, ProtocolError::Malformed { .. }), "{err}");
}

#[test]
fn version_mismatch_and_bad_hello() {
    let cfg =
        scripted(|_, _| Some(r#"{"kind":"hello","id":0,"version":2,"tasks":["ner"]}"#.into()));
    assert!(matches!(
        Client::connect(cfg),
        Err(ProtocolError::Version(2))
    ));
    let cfg = scripted(|_, _| Some(r#"{"kind":"hello","id":0}"#.into()));
    assert!(matches!(
        Client::connect(cfg),
        Err(ProtocolError::Malformed { .. })
    ));
}

#[test]
fn unreachable_endpoint_times_out() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut cfg = ProtocolConfig::new(Endpoint::Tcp(format!("127.0.0.1:{port}")));
    cfg.timeout = Duration::from_millis(300);
    let t = Instant::now();
    let err = Client::connect(cfg).err().unwrap();
    assert!(matches!(err, ProtocolError::Timeout(_)), "{err}");
    assert!(t.elapsed() >= Duration::from_millis(300));
}

#[test]
fn silent_server_times_out_mid_session() {
    let cfg = scripted(|i, line| (i == 0).then(|| hello(line)));
    let mut c = Client::connect(cfg).unwrap();
    let streams = TrainStreams {
        ner: vec![TrainSentence {
            words: vec!["a".into()],
            labels: vec!["O".into()],
        }],
        re: Vec::new(),
    };
    let err = c
        .train_session(&streams, None, &TrainConfig::default())
        .unwrap_err();
    assert!(matches!(err, ProtocolError::Timeout(_)), "{err}");
    assert!(c.is_closed());
    assert!(matches!(
        c.tag_batch(&[vec!["a".into()]]),
        Err(ProtocolError::Closed)
    ));
}

#[test]
fn response_id_must_match() {
    let cfg = scripted(|i, line| {
        if i == 0 {
            Some(hello(line))
        } else {
            Some(r#"{"kind":"tag_response","id":99,"labels":[["O"]]}"#.into())
        }
    });
    let mut c = Client::connect(cfg).unwrap();
    let err = c.tag_batch(&[vec!["a".into()]]).unwrap_err();
    assert!(
        matches!(
            err,
            ProtocolError::IdMismatch {
                expected: 1,
                got: Some(99)
            }
        ),
        "{err}"
    );
}

#[derive(Clone, Copy)]
enum Fault {
    ShortSentence,
    FewerSentences,
    BadLabel,
    ForeignRole,
    AbortTraining,
}

struct Faulty(Fault);

impl ModelServer for Faulty {
    fn labels(&self) -> LabelSets {
        LabelSets {
            ner: vec!["O".into(), "B-X".into()],
            re: vec![NO_RELATION.into()],
        }
    }

    fn supports_training(&self) -> bool {
        true
    }

    fn tag(&mut self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, String> {
        Ok(match self.0 {
            Fault::ShortSentence => sentences
                .iter()
                .map(|s| vec!["O".into(); s.len() - 1])
                .collect(),
            Fault::FewerSentences => Vec::new(),
            Fault::BadLabel => sentences
                .iter()
                .map(|s| vec!["B-Nope".into(); s.len()])
                .collect(),
            _ => sentences
                .iter()
                .map(|s| vec!["O".into(); s.len()])
                .collect(),
        })
    }

    fn classify(&mut self, candidates: &[WireCandidate]) -> Result<Vec<String>, String> {
        Ok(candidates
            .iter()
            .map(|_| "Lesion-Count".to_string())
            .collect())
    }

    fn train_begin(
        &mut self,
        _: u64,
        _: Option<&MarkerConfig>,
        _: &std::collections::BTreeMap<String, serde_json::Value>,
    ) -> Result<(), String> {
        Ok(())
    }

    fn train_batch(
        &mut self,
        _: Task,
        _: &[TrainSentence],
        _: &[WireCandidate],
    ) -> Result<(), String> {
        Err("out of memory".into())
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[test]
fn client_enforces_contracts() {
    let mut c = Client::in_process(Faulty(Fault::ShortSentence), config()).unwrap();
    let err = c.tag_batch(&[words("mass in liver")]).unwrap_err();
    assert!(
        matches!(
            err,
            ProtocolError::Length {
                want: 3,
                got: 2,
                ..
            }
        ),
        "{err}"
    );

    let mut c = Client::in_process(Faulty(Fault::FewerSentences), config()).unwrap();
    assert!(matches!(
        c.tag_batch(&[words("a")]),
        Err(ProtocolError::Count { .. })
    ));

    let mut c = Client::in_process(Faulty(Fault::BadLabel), config()).unwrap();
    assert!(matches!(
        c.tag_batch(&[words("a")]),
        Err(ProtocolError::UnknownLabel { .. })
    ));

    let mut c = Client::in_process(Faulty(Fault::ForeignRole), config()).unwrap();
    let cand = WireCandidate {
        tokens: words("[unused0] mass [unused1] [unused2] liver [unused3]"),
        event_type: "Lesion".into(),
        trigger: [0, 1],
        argument_label: "Lesion-Anatomy".into(),
        argument: [1, 2],
        allowed_roles: vec![NO_RELATION.into(), "Lesion-Anatomy".into()],
        role: None,
    };
    let roles = c.rel_batch(&[cand.clone(), cand]).unwrap();
    assert_eq!(roles, vec![NO_RELATION; 2]);
    assert_eq!(c.violations, 2);
}

#[test]
fn server_abort_surfaces_message() {
    let mut c = Client::in_process(Faulty(Fault::AbortTraining), config()).unwrap();
    let streams = TrainStreams {
        ner: vec![TrainSentence {
            words: words("a"),
            labels: vec!["O".into()],
        }],
        re: Vec::new(),
    };
    match c.train_session(&streams, None, &TrainConfig::default()) {
        Err(ProtocolError::Server {
            id: Some(_),
            message,
        }) => assert_eq!(message, "out of memory"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn schedules_are_seeded_and_proportional() {
    let a = schedule(2, 2, &mut ChaCha8Rng::seed_from_u64(5));
    let b = schedule(2, 2, &mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(a, b);
    assert_eq!(a.iter().filter(|t| **t == Task::Ner).count(), 2);
    assert_eq!(
        schedule(3, 0, &mut ChaCha8Rng::seed_from_u64(1)),
        vec![Task::Ner; 3]
    );
    assert!(schedule(0, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let long = schedule(300, 100, &mut rng);
    let first_half_ner = long[..200].iter().filter(|t| **t == Task::Ner).count();
    assert!((120..=180).contains(&first_half_ner), "{first_half_ner}");
}

#[test]
fn baseline_trains_through_the_protocol() {
    let s = default_schema();
    let tags = TagSet::from_schema(&s);
    let markers = MarkerConfig::default();
    let docs = gen_fixture(7, 100);
    let (train, val) = docs.split_at(80);
    let tr = TrainStreams::from_task(&encode_corpus(train, &s, &tags, &markers).unwrap(), &tags);
    let va = TrainStreams::from_task(&encode_corpus(val, &s, &tags, &markers).unwrap(), &tags);
    let cfg = TrainConfig {
        epochs: 6,
        seed: 3,
        patience: 2,
    };
    let run = || {
        let mut c = Client::in_process(BaselineServer::new(BaselineModel::untrained(&s)), config())
            .unwrap();
        let report = c.train_session(&tr, Some(&va), &cfg).unwrap();
        let pred = predict_text(&mut c, &s, &val[0].doc_id, &val[0].text).unwrap();
        (report, serialize_ann(&pred.doc).unwrap())
    };
    let (r1, ann1) = run();
    let (r2, ann2) = run();
    assert_eq!(r1, r2);
    assert_eq!(ann1, ann2);
    assert!(r1.epochs_run >= 1 && r1.epochs_run <= 6);
    assert!(r1.epochs.iter().all(|e| e.score.is_some()));
    let best = r1.epochs[r1.best_epoch - 1].score.unwrap();
    assert!(best >= 0.9, "{best}");
    assert!(
        r1.epochs[0].schedule.contains(&Task::Ner) && r1.epochs[0].schedule.contains(&Task::Re)
    );

    let zero_re = TrainStreams {
        ner: tr.ner.clone(),
        re: Vec::new(),
    };
    let mut c =
        Client::in_process(BaselineServer::new(BaselineModel::untrained(&s)), config()).unwrap();
    let r = c
        .train_session(&zero_re, None, &TrainConfig { epochs: 2, ..cfg })
        .unwrap();
    assert!(r
        .epochs
        .iter()
        .all(|e| e.schedule.iter().all(|t| *t == Task::Ner)));
}
