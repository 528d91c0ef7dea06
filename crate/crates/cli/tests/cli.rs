use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Duration;

use radfind::protocol::{conformance_suite, Client, Endpoint, ProtocolConfig};

const BIN: &str = env!("CARGO_BIN_EXE_radfind");

fn radfind(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path, docs: usize) -> std::path::PathBuf {
    let out = dir.join("corpus");
    let o = radfind(&[
        "fixture",
        "--docs",
        &docs.to_string(),
        "--seed",
        "11",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn validate_clean_and_broken() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture(dir.path(), 20);
    let o = radfind(&["validate", "--corpus", s(&corpus)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("0 violations in 20 documents"));

    fs::write(
        corpus.join("fixture-0003.ann"),
        "T1\tLesion-Description 0 4\tzzzz\n",
    )
    .unwrap();
    let o = radfind(&["validate", "--corpus", s(&corpus)]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("fixture-0003.ann:1:"), "{out}");
    assert!(out.contains("1 violations in 20 documents"), "{out}");
}

#[test]
fn score_of_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture(dir.path(), 15);
    let o = radfind(&[
        "score",
        "--gold",
        s(&corpus),
        "--pred",
        s(&corpus),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(rows.len() > 10);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[3], "0", "{row}");
        assert_eq!(f[4], "0", "{row}");
        if f[2] != "0" {
            assert_eq!(&f[5..], ["1.0000", "1.0000", "1.0000"], "{row}");
        }
    }
    let json_out = dir.path().join("r.json");
    let o = radfind(&[
        "iaa",
        "--a",
        s(&corpus),
        "--b",
        s(&corpus),
        "--out",
        s(&json_out),
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(json_out).unwrap()).unwrap();
    assert_eq!(v["documents"], 15);
}

#[test]
fn train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture(dir.path(), 40);
    let model = dir.path().join("model.json");
    let o = radfind(&[
        "train",
        "--corpus",
        s(&corpus),
        "--epochs",
        "4",
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["tagger_epochs"].is_array());

    let pred = dir.path().join("pred");
    let o = radfind(&[
        "predict",
        "--model",
        s(&model),
        "--in",
        s(&corpus),
        "--out",
        s(&pred),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = radfind(&["validate", "--corpus", s(&pred)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let one = dir.path().join("one.ann");
    let o = radfind(&[
        "predict",
        "--model",
        s(&model),
        "--in",
        s(&corpus.join("fixture-0000.txt")),
        "--out",
        s(&one),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(one).unwrap(),
        fs::read_to_string(pred.join("fixture-0000.ann")).unwrap()
    );
}

#[test]
fn echo_server_passes_conformance_over_stdio() {
    let connect = || {
        let mut cfg = ProtocolConfig::new(Endpoint::Command(vec![
            BIN.into(),
            "serve".into(),
            "--echo".into(),
        ]));
        cfg.timeout = Duration::from_secs(20);
        Client::connect(cfg)
    };
    for (name, r) in conformance_suite(&connect) {
        assert!(r.is_ok(), "{name}: {r:?}");
    }
}

#[test]
fn endpoint_training_saves_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture(dir.path(), 20);
    let model = dir.path().join("m.json");
    let saved = dir.path().join("saved.json");
    assert_eq!(
        code(&radfind(&[
            "train",
            "--corpus",
            s(&corpus),
            "--epochs",
            "1",
            "--out",
            s(&model)
        ])),
        0
    );
    let endpoint = format!("cmd:{BIN} serve --model {} --save {}", s(&model), s(&saved));
    let o = radfind(&[
        "train",
        "--corpus",
        s(&corpus),
        "--val",
        s(&corpus),
        "--epochs",
        "2",
        "--endpoint",
        &endpoint,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["epochs_run"], 2);
    assert!(saved.is_file());
}

#[test]
fn cv_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture(dir.path(), 30);
    let run = |jobs: &str| {
        let out = dir.path().join(format!("cv{jobs}"));
        let o = radfind(&[
            "cv",
            "--corpus",
            s(&corpus),
            "--repeats",
            "2",
            "--epochs",
            "2",
            "--seed",
            "9",
            "--jobs",
            jobs,
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(out.join("results.csv")).unwrap(),
            fs::read(out.join("summary.json")).unwrap(),
        )
    };
    let a = run("1");
    assert_eq!(a, run("8"));
    assert_eq!(String::from_utf8_lossy(&a.0).lines().count(), 1 + 10);
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, base: f64, step: f64| {
        let mut t = String::from("repeat,fold,seed,m\n");
        for i in 0..10 {
            t.push_str(&format!(
                "{},{},0,{}\n",
                i / 5,
                i % 5,
                base + step * (i % 3) as f64
            ));
        }
        let p = dir.path().join(name);
        fs::write(&p, t).unwrap();
        p
    };
    let a = write("a.csv", 0.80, 0.01);
    let b = write("b.csv", 0.70, 0.02);
    let c = write("c.csv", 0.80, 0.01);
    let out = dir.path().join("t.json");
    let o = radfind(&["compare", "--a", s(&a), "--b", s(&b), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["tests"][0]["significant"], true);
    assert_eq!(code(&radfind(&["compare", "--a", s(&a), "--b", s(&c)])), 0);
    assert_eq!(
        code(&radfind(&[
            "compare",
            "--a",
            s(&a),
            "--b",
            s(&b),
            "--metric",
            "nope"
        ])),
        2
    );
}

#[test]
fn export_layout() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred");
    let doc = radfind::standoff::parse_ann(
        "p10000032_s50414267",
        "A mass.",
        "T1\tLesion-Description 2 6\tmass\n",
    )
    .unwrap();
    radfind::corpus::write_corpus(&pred, &[doc]).unwrap();
    let out = dir.path().join("out");
    let o = radfind(&["export", "--pred", s(&pred), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ann = out.join("files/p10/p10000032/s50414267.ann");
    assert_eq!(
        fs::read_to_string(ann).unwrap(),
        "T1\tLesion-Description 2 6\tmass\n"
    );
    assert!(out.join("files/p10/p10000032/s50414267.txt").is_file());
}

#[test]
fn usage_and_io_errors() {
    assert_eq!(code(&radfind(&["frobnicate"])), 2);
    assert_eq!(code(&radfind(&["score", "--gold", "x"])), 2);
    assert_eq!(code(&radfind(&["stats"])), 2);
    assert_eq!(
        code(&radfind(&["stats", "--corpus", "/definitely/not/here"])),
        3
    );
    let o = radfind(&[
        "predict",
        "--in",
        "x",
        "--out",
        "y",
        "--endpoint",
        "tcp:127.0.0.1:1",
        "--timeout",
        "0.3",
    ]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&radfind(&["--help"])), 0);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture(dir.path(), 10);
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, format!("corpus = {}\nstrict = true\n", s(&corpus))).unwrap();
    let o = radfind(&["--config", s(&cfg), "validate"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(code(&radfind(&["--config", s(&cfg), "validate"])), 2);
}
