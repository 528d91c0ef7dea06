//! `radfind` command-line front end.
//!
//! Exit codes: 0 success, 1 violations found (or a significant difference
//! for `compare`), 2 usage error, 3 I/O or protocol failure.

mod settings;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use radfind::baseline::{train_baseline, BaselineModel, TrainConfig};
use radfind::corpus::{load_corpus, load_texts, scan_corpus, write_corpus, write_doc, CorpusError};
use radfind::encoding::{encode_corpus, MarkerConfig, TagSet};
use radfind::evalstat::runner::{baseline_run, endpoint_run};
use radfind::evalstat::{
    column, corrected_t, gen_fixture, parse_results_csv, repeat_cv, results_csv, summarize,
    RunResult,
};
use radfind::pipeline::{predict_corpus, predict_text, Prediction};
use radfind::protocol::dump::write_dump;
use radfind::protocol::{
    serve, BaselineServer, Client, EchoServer, Endpoint, ProtocolConfig, TrainStreams,
};
use radfind::schema::EventSchema;
use radfind::scoring::report::{to_csv, to_json, to_table};
use radfind::scoring::stats::corpus_stats;
use radfind::scoring::{pairwise_iaa, score_corpus, ScoreReport};
use radfind::standoff::{parse_ann, serialize_ann, to_events, AnnotationDoc};

use settings::Settings;

/// `println!` that ignores a closed stdout (for example when piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "radfind",
    version,
    about = "Event-based findings extraction for radiology reports"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Key-value config file; flags take precedence over its entries
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Schema config file, or `default`
    #[arg(long, global = true)]
    schema: Option<String>,
    /// Count, Size and Size-Trend may appear at most once per event
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default)]
struct Remote {
    /// Model server: `tcp:HOST:PORT` or `cmd:PROGRAM ARGS`
    #[arg(long)]
    endpoint: Option<String>,
    /// Seconds to wait for each server response
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Training hyperparameter passed to the server, `NAME=VALUE` (repeatable)
    #[arg(long = "hyper", value_name = "NAME=VALUE")]
    hyper: Vec<String>,
}

#[derive(Args, Clone, Debug, Default)]
struct Training {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a corpus against the schema
    Validate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Corpus statistics as JSON
    Stats {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Write tagging and role-classification examples as protocol records
    Encode {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train the baseline, or a protocol server with --endpoint
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Validation corpus for early stopping
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        training: Training,
        #[command(flatten)]
        remote: Remote,
    },
    /// Extract events from a report or a directory of reports
    Predict {
        /// Baseline model file
        #[arg(long)]
        model: Option<PathBuf>,
        /// A `.txt` file or a directory
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        remote: Remote,
    },
    /// Score predictions against a gold corpus
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Agreement between two annotators; symmetric in its arguments
    Iaa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Repeated cross-validation; writes results.csv and summary.json
    Cv {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Results CSV of another system to test against
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        training: Training,
        #[command(flatten)]
        remote: Remote,
    },
    /// Corrected resampled t-test between two results CSVs
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Compare only this metric
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Write a synthetic annotated corpus
    Fixture {
        #[arg(long, default_value_t = 200)]
        docs: usize,
    },
    /// Mirror predictions into a files/pXX/pSUBJECT/sSTUDY tree
    Export {
        #[arg(long)]
        pred: PathBuf,
        /// CSV with columns doc_id,subject_id,study_id
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Serve a model over the protocol on stdin/stdout or a TCP port
    Serve {
        /// All-`O` tags and `No_relation` roles; no model needed
        #[arg(long)]
        echo: bool,
        /// Baseline model file
        #[arg(long)]
        model: Option<PathBuf>,
        /// Listen on ADDR (for example 127.0.0.1:0) instead of stdin/stdout
        #[arg(long)]
        listen: Option<String>,
        /// Save the baseline model here after each session
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Fail {
    code: u8,
    msg: String,
}

type Res<T> = Result<T, Fail>;

fn fail(code: u8, msg: impl Display) -> Fail {
    Fail {
        code,
        msg: msg.to_string(),
    }
}

fn usage(msg: impl Display) -> Fail {
    fail(2, msg)
}

fn io_fail(msg: impl Display) -> Fail {
    fail(3, msg)
}

fn corpus_fail(e: CorpusError) -> Fail {
    match e {
        CorpusError::Standoff(e) => fail(1, e),
        e => io_fail(e),
    }
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| io_fail(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(|e| io_fail(format!("{}: {e}", p.display())))?;
    }
    fs::write(path, text).map_err(|e| io_fail(format!("{}: {e}", path.display())))
}

/// Writes to `--out` when given, else to stdout.
fn emit(out: Option<&Path>, text: &str) -> Res<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

struct Ctx {
    settings: Settings,
    common: Common,
}

impl Ctx {
    fn schema(&self) -> Res<EventSchema> {
        let spec = self.settings.string("schema", self.common.schema.clone());
        let schema = match spec.as_deref() {
            None | Some("default") => radfind::default_schema(),
            Some(path) => {
                let p = Path::new(path);
                radfind::load_schema(&read(p)?)
                    .map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
        };
        Ok(if self.strict()? {
            schema.strict()
        } else {
            schema
        })
    }

    fn strict(&self) -> Res<bool> {
        Ok(self.common.strict || self.settings.get::<bool>("strict", None)?.unwrap_or(false))
    }

    fn seed(&self) -> Res<u64> {
        Ok(self.settings.get("seed", self.common.seed)?.unwrap_or(0))
    }

    fn jobs(&self) -> Res<usize> {
        let jobs = self
            .settings
            .get("jobs", self.common.jobs)?
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        Ok(jobs)
    }

    fn out(&self) -> Option<PathBuf> {
        self.common
            .out
            .clone()
            .or_else(|| self.settings.string("out", None).map(PathBuf::from))
    }

    fn need_out(&self) -> Res<PathBuf> {
        self.out().ok_or_else(|| usage("--out is required"))
    }

    fn corpus(&self, flag: &Option<PathBuf>) -> Res<PathBuf> {
        flag.clone()
            .or_else(|| self.settings.string("corpus", None).map(PathBuf::from))
            .ok_or_else(|| usage("--corpus is required"))
    }

    fn train_config(&self, t: &Training) -> Res<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: self.settings.get("epochs", t.epochs)?.unwrap_or(d.epochs),
            seed: self.seed()?,
            patience: self
                .settings
                .get("patience", t.patience)?
                .unwrap_or(d.patience),
        };
        if cfg.epochs == 0 {
            return Err(usage("--epochs must be at least 1"));
        }
        Ok(cfg)
    }

    /// `None` selects the built-in baseline.
    fn protocol(&self, r: &Remote) -> Res<Option<ProtocolConfig>> {
        let spec = r.endpoint.clone().or_else(|| {
            self.settings
                .string("model", None)
                .filter(|m| m != "baseline")
        });
        let Some(spec) = spec else {
            return Ok(None);
        };
        let mut cfg = ProtocolConfig::new(Endpoint::parse(&spec).map_err(usage)?);
        if !(r.timeout > 0.0 && r.timeout.is_finite()) {
            return Err(usage("--timeout must be positive"));
        }
        cfg.timeout = Duration::from_secs_f64(r.timeout);
        cfg.batch_size = r.batch_size;
        for h in &r.hyper {
            let (k, v) = h
                .split_once('=')
                .ok_or_else(|| usage(format!("--hyper `{h}`: expected NAME=VALUE")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            cfg.hyperparams.insert(k.to_string(), value);
        }
        cfg.validate().map_err(usage)?;
        Ok(Some(cfg))
    }

    fn rho(&self, flag: Option<f64>) -> Res<f64> {
        let rho = self
            .settings
            .get("rho", flag)?
            .unwrap_or(radfind::evalstat::DEFAULT_RHO);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(usage("--rho must be positive"));
        }
        Ok(rho)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("radfind: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Res<u8> {
    let settings = match &cli.common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let ctx = Ctx {
        settings,
        common: cli.common,
    };
    let jobs = ctx.jobs()?;
    // a second build only fails if the pool already exists
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global();
    match cli.cmd {
        Cmd::Validate { corpus } => validate(&ctx, &ctx.corpus(&corpus)?),
        Cmd::Stats { corpus } => {
            let docs = load_corpus(&ctx.corpus(&corpus)?).map_err(corpus_fail)?;
            emit(
                ctx.out().as_deref(),
                &pretty(&corpus_stats(&docs, &ctx.schema()?)),
            )?;
            Ok(0)
        }
        Cmd::Encode { corpus } => encode(&ctx, &ctx.corpus(&corpus)?),
        Cmd::Train {
            corpus,
            val,
            training,
            remote,
        } => train(
            &ctx,
            &ctx.corpus(&corpus)?,
            val.as_deref(),
            &training,
            &remote,
        ),
        Cmd::Predict {
            model,
            input,
            remote,
        } => predict(&ctx, model.as_deref(), &input, &remote),
        Cmd::Score { gold, pred, format } => {
            let schema = ctx.schema()?;
            let g = load_corpus(&gold).map_err(corpus_fail)?;
            let p = load_corpus(&pred).map_err(corpus_fail)?;
            let r = score_corpus(&g, &p, &schema).map_err(|e| fail(1, e))?;
            report(&ctx, &r, &schema, format)
        }
        Cmd::Iaa { a, b, format } => {
            let schema = ctx.schema()?;
            let da = load_corpus(&a).map_err(corpus_fail)?;
            let db = load_corpus(&b).map_err(corpus_fail)?;
            let r = pairwise_iaa(&da, &db, &schema).map_err(|e| fail(1, e))?;
            report(&ctx, &r, &schema, format)
        }
        Cmd::Cv {
            corpus,
            repeats,
            against,
            rho,
            training,
            remote,
        } => cv(
            &ctx,
            &ctx.corpus(&corpus)?,
            repeats,
            against.as_deref(),
            rho,
            &training,
            &remote,
            jobs,
        ),
        Cmd::Compare {
            a,
            b,
            metric,
            rho,
            alpha,
        } => compare(&ctx, &a, &b, metric.as_deref(), ctx.rho(rho)?, alpha),
        Cmd::Fixture { docs } => {
            let out = ctx.need_out()?;
            write_corpus(&out, &gen_fixture(ctx.seed()?, docs)).map_err(corpus_fail)?;
            eprintln!("wrote {docs} documents to {}", out.display());
            Ok(0)
        }
        Cmd::Export { pred, map } => export(&ctx, &pred, map.as_deref()),
        Cmd::Serve {
            echo,
            model,
            listen,
            save,
        } => serve_cmd(
            &ctx,
            echo,
            model.as_deref(),
            listen.as_deref(),
            save.as_deref(),
        ),
    }
}

fn validate(ctx: &Ctx, root: &Path) -> Res<u8> {
    let schema = ctx.schema()?;
    let (docs, errors) = scan_corpus(root).map_err(corpus_fail)?;
    let ann = |id: &str| root.join(format!("{id}.ann")).display().to_string();
    let mut lines: Vec<String> = errors
        .iter()
        .map(|e| format!("{}:{}: {}", ann(&e.doc), e.line, e.kind))
        .collect();
    for d in &docs {
        for issue in to_events(d, &schema).issues {
            lines.push(format!("{}: {issue}", ann(&d.doc_id)));
        }
    }
    let mut text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    text.push_str(&format!(
        "{} violations in {} documents\n",
        lines.len(),
        docs.len() + errors.len()
    ));
    emit(ctx.out().as_deref(), &text)?;
    if ctx.out().is_some() {
        say!("{}", text.lines().last().unwrap_or_default());
    }
    Ok(u8::from(!lines.is_empty()))
}

fn encode(ctx: &Ctx, root: &Path) -> Res<u8> {
    let out = ctx.need_out()?;
    let schema = ctx.schema()?;
    let docs = load_corpus(root).map_err(corpus_fail)?;
    let tags = TagSet::from_schema(&schema);
    let data =
        encode_corpus(&docs, &schema, &tags, &MarkerConfig::default()).map_err(|e| fail(1, e))?;
    let streams = TrainStreams::from_task(&data, &tags);
    write(&out, &write_dump(&streams))?;
    eprintln!(
        "{} sentences, {} candidates; {}",
        streams.ner.len(),
        streams.re.len(),
        serde_json::to_string(&data.stats).expect("serializable")
    );
    Ok(0)
}

fn train(ctx: &Ctx, root: &Path, val: Option<&Path>, t: &Training, r: &Remote) -> Res<u8> {
    let schema = ctx.schema()?;
    let cfg = ctx.train_config(t)?;
    let train_docs = load_corpus(root).map_err(corpus_fail)?;
    let val_docs = match val {
        Some(v) => load_corpus(v).map_err(corpus_fail)?,
        None => Vec::new(),
    };
    match ctx.protocol(r)? {
        None => {
            let out = ctx.need_out()?;
            let (model, report) =
                train_baseline(&train_docs, &val_docs, &schema, &cfg).map_err(|e| fail(1, e))?;
            model
                .save(&out)
                .map_err(|e| io_fail(format!("{}: {e}", out.display())))?;
            say!("{}", pretty(&report).trim_end());
        }
        Some(pc) => {
            let tags = TagSet::from_schema(&schema);
            let enc = |docs: &[AnnotationDoc]| {
                encode_corpus(docs, &schema, &tags, &pc.markers)
                    .map(|d| TrainStreams::from_task(&d, &tags))
                    .map_err(|e| fail(1, e))
            };
            let tr = enc(&train_docs)?;
            let va = enc(&val_docs)?;
            let mut client = Client::connect(pc).map_err(io_fail)?;
            let has_val = !va.ner.is_empty() || !va.re.is_empty();
            let rep = client
                .train_session(&tr, has_val.then_some(&va), &cfg)
                .map_err(io_fail)?;
            emit(ctx.out().as_deref(), &pretty(&rep))?;
        }
    }
    Ok(0)
}

fn predict(ctx: &Ctx, model_path: Option<&Path>, input: &Path, r: &Remote) -> Res<u8> {
    let out = ctx.need_out()?;
    let remote = ctx.protocol(r)?;
    let model = match (model_path, &remote) {
        (Some(p), None) => {
            BaselineModel::load(p).map_err(|e| io_fail(format!("{}: {e}", p.display())))?
        }
        (None, Some(_)) => BaselineModel::untrained(&radfind::default_schema()),
        _ => return Err(usage("give exactly one of --model and --endpoint")),
    };
    let schema = match (&ctx.common.schema, model_path) {
        (None, Some(_)) if ctx.settings.string("schema", None).is_none() => {
            let s = model
                .schema()
                .map_err(|e| io_fail(format!("model schema: {e}")))?;
            if ctx.strict()? {
                s.strict()
            } else {
                s
            }
        }
        _ => ctx.schema()?,
    };
    let texts = load_texts(input).map_err(corpus_fail)?;
    let preds: Vec<Prediction> = match remote {
        None => predict_corpus(&model, &schema, &texts).map_err(|e| fail(3, e))?,
        Some(pc) => {
            let mut client = Client::connect(pc).map_err(io_fail)?;
            let preds = texts
                .iter()
                .map(|(id, text)| predict_text(&mut client, &schema, id, text))
                .collect::<Result<Vec<_>, _>>()
                .map_err(io_fail)?;
            if client.violations > 0 {
                eprintln!("radfind: {} protocol violations", client.violations);
            }
            preds
        }
    };
    let mut problems = 0;
    for p in &preds {
        let ann = serialize_ann(&p.doc).map_err(|e| fail(1, e))?;
        let back = parse_ann(&p.doc.doc_id, &p.doc.text, &ann).map_err(|e| fail(1, e))?;
        for issue in to_events(&back, &schema).issues {
            eprintln!("{}: {issue}", p.doc.doc_id);
            problems += 1;
        }
    }
    if input.is_file() {
        let p = &preds[0];
        write(&out, &serialize_ann(&p.doc).map_err(|e| fail(1, e))?)?;
    } else {
        for p in &preds {
            write_doc(&out, &p.doc).map_err(corpus_fail)?;
        }
    }
    let events: usize = preds.iter().map(|p| p.events.len()).sum();
    eprintln!("{} documents, {events} events", preds.len());
    Ok(u8::from(problems > 0))
}

fn report(ctx: &Ctx, r: &ScoreReport, schema: &EventSchema, format: Option<Format>) -> Res<u8> {
    let out = ctx.out();
    let format = format.unwrap_or_else(|| {
        match out
            .as_ref()
            .and_then(|p| p.extension())
            .and_then(|e| e.to_str())
        {
            Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            _ => Format::Table,
        }
    });
    let text = match format {
        Format::Table => to_table(r, schema),
        Format::Csv => to_csv(r, schema),
        Format::Json => pretty(&to_json(r, schema)),
    };
    emit(out.as_deref(), &text)?;
    let issues = r.gold_issues + r.pred_issues;
    if issues > 0 {
        eprintln!("radfind: {issues} schema issues in the inputs");
    }
    Ok(u8::from(issues > 0))
}

#[allow(clippy::too_many_arguments)]
fn cv(
    ctx: &Ctx,
    root: &Path,
    repeats: Option<usize>,
    against: Option<&Path>,
    rho: Option<f64>,
    t: &Training,
    r: &Remote,
    jobs: usize,
) -> Res<u8> {
    let out = ctx.need_out()?;
    let schema = ctx.schema()?;
    let cfg = ctx.train_config(t)?;
    let repeats = ctx.settings.get("repeats", repeats)?.unwrap_or(10);
    let rho = ctx.rho(rho)?;
    let docs = load_corpus(root).map_err(corpus_fail)?;
    let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
    let remote = ctx.protocol(r)?;
    let results = repeat_cv(&ids, repeats, cfg.seed, jobs, |run| match &remote {
        None => baseline_run(&docs, &schema, &cfg, run),
        Some(pc) => endpoint_run(pc, &docs, &schema, &cfg, run),
    })
    .map_err(|e| match e {
        radfind::evalstat::StatError::TooFewDocuments { .. } => fail(1, e),
        e => io_fail(e),
    })?;
    write(&out.join("results.csv"), &results_csv(&results))?;
    let summary = summarize(&results).map_err(|e| fail(1, e))?;
    let mut doc = json!({
        "repeats": repeats,
        "folds": radfind::evalstat::FOLDS,
        "seed": cfg.seed,
        "rho": rho,
        "metrics": summary,
    });
    if let Some(path) = against {
        let other = parse_results_csv(&read(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        doc["t_tests"] = Value::Array(t_tests(&results, &other, None, rho, 0.05)?.0);
    }
    write(&out.join("summary.json"), &pretty(&doc))?;
    for m in &summary {
        say!("{:<34} {:.4} ± {:.4}", m.metric, m.mean, m.ci95);
    }
    Ok(0)
}

/// Corrected t-tests of every shared metric (or just `metric`); also
/// returns whether any difference is significant at `alpha`.
fn t_tests(
    a: &[RunResult],
    b: &[RunResult],
    metric: Option<&str>,
    rho: f64,
    alpha: f64,
) -> Res<(Vec<Value>, bool)> {
    let keys = |r: &[RunResult]| r.iter().map(|x| (x.repeat, x.fold)).collect::<Vec<_>>();
    if keys(a) != keys(b) {
        return Err(usage(
            "the two result files cover different (repeat, fold) runs",
        ));
    }
    let names: Vec<String> = match metric {
        Some(m) => vec![m.to_string()],
        None => a
            .first()
            .map(|r| r.scores.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default(),
    };
    let mut out = Vec::new();
    let mut any = false;
    for name in names {
        let (Some(x), Some(y)) = (column(a, &name), column(b, &name)) else {
            if metric.is_some() {
                return Err(usage(format!("metric `{name}` is missing from an input")));
            }
            continue;
        };
        let t = corrected_t(&x, &y, rho).map_err(usage)?;
        let significant = t.p < alpha;
        any |= significant;
        let mut v = serde_json::to_value(&t).expect("serializable");
        v["metric"] = json!(name);
        v["significant"] = json!(significant);
        if !t.t.is_finite() {
            v["t"] = json!(if t.t > 0.0 { "inf" } else { "-inf" });
        }
        out.push(v);
    }
    Ok((out, any))
}

fn compare(ctx: &Ctx, a: &Path, b: &Path, metric: Option<&str>, rho: f64, alpha: f64) -> Res<u8> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage("--alpha must lie in (0, 1)"));
    }
    let load = |p: &Path| -> Res<Vec<RunResult>> {
        parse_results_csv(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))
    };
    let (ra, rb) = (load(a)?, load(b)?);
    let (tests, any) = t_tests(&ra, &rb, metric, rho, alpha)?;
    let doc = json!({ "rho": rho, "alpha": alpha, "tests": tests });
    if let Some(out) = ctx.out() {
        write(&out, &pretty(&doc))?;
    }
    for t in &tests {
        say!(
            "{:<34} diff {:+.4}  t {}  p {:.4}{}",
            t["metric"].as_str().unwrap_or_default(),
            t["mean_diff"].as_f64().unwrap_or(f64::NAN),
            match &t["t"] {
                Value::Number(n) => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
                v => v.as_str().unwrap_or("nan").to_string(),
            },
            t["p"].as_f64().unwrap_or(f64::NAN),
            if t["significant"] == json!(true) {
                "  *"
            } else {
                ""
            }
        );
    }
    Ok(u8::from(any))
}

/// `(subject, study)` from ids shaped like `.../p<subject>/s<study>`,
/// `p<subject>_s<study>` or `<subject>_<study>`.
fn subject_study(id: &str) -> Option<(String, String)> {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let parts: Vec<&str> = id.split('/').collect();
    if let [.., p, s] = parts.as_slice() {
        if let (Some(p), Some(s)) = (p.strip_prefix('p'), s.strip_prefix('s')) {
            if digits(p) && digits(s) {
                return Some((p.to_string(), s.to_string()));
            }
        }
    }
    let last = parts.last()?;
    let (a, b) = last.split_once('_')?;
    let a = a.strip_prefix('p').unwrap_or(a);
    let b = b.strip_prefix('s').unwrap_or(b);
    (digits(a) && digits(b)).then(|| (a.to_string(), b.to_string()))
}

fn export(ctx: &Ctx, pred: &Path, map: Option<&Path>) -> Res<u8> {
    let out = ctx.need_out()?;
    let docs = load_corpus(pred).map_err(corpus_fail)?;
    let mut table: BTreeMap<String, (String, String)> = BTreeMap::new();
    if let Some(m) = map {
        for (i, line) in read(m)?.lines().enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if i == 0 && f.first() == Some(&"doc_id") || line.trim().is_empty() {
                continue;
            }
            let [id, subject, study] = f.as_slice() else {
                return Err(usage(format!(
                    "{}:{}: expected doc_id,subject_id,study_id",
                    m.display(),
                    i + 1
                )));
            };
            table.insert(id.to_string(), (subject.to_string(), study.to_string()));
        }
    }
    let mut missing = Vec::new();
    for d in &docs {
        let Some((subject, study)) = table
            .get(&d.doc_id)
            .cloned()
            .or_else(|| subject_study(&d.doc_id))
        else {
            missing.push(d.doc_id.clone());
            continue;
        };
        let prefix: String = subject.chars().take(2).collect();
        let mut doc = d.clone();
        doc.doc_id = format!("files/p{prefix}/p{subject}/s{study}");
        write_doc(&out, &doc).map_err(corpus_fail)?;
    }
    for m in &missing {
        eprintln!("radfind: {m}: no subject/study id");
    }
    eprintln!(
        "exported {} of {} documents",
        docs.len() - missing.len(),
        docs.len()
    );
    Ok(u8::from(!missing.is_empty()))
}

fn serve_cmd(
    ctx: &Ctx,
    echo: bool,
    model: Option<&Path>,
    listen: Option<&str>,
    save: Option<&Path>,
) -> Res<u8> {
    enum Server {
        Echo(EchoServer),
        Baseline(BaselineServer),
    }
    let mut server = match (echo, model) {
        (true, None) => Server::Echo(EchoServer::new(&ctx.schema()?)),
        (false, Some(p)) => Server::Baseline(BaselineServer::new(
            BaselineModel::load(p).map_err(|e| io_fail(format!("{}: {e}", p.display())))?,
        )),
        _ => return Err(usage("give exactly one of --echo and --model")),
    };
    if save.is_some() && echo {
        return Err(usage("--save needs --model"));
    }
    let session =
        |server: Server, input: Box<dyn std::io::BufRead>, output: Box<dyn Write>| -> Res<Server> {
            Ok(match server {
                Server::Echo(s) => Server::Echo(serve(s, input, output).map_err(io_fail)?),
                Server::Baseline(s) => {
                    let s = serve(s, input, output).map_err(io_fail)?;
                    if let Some(path) = save {
                        s.model()
                            .save(path)
                            .map_err(|e| io_fail(format!("{}: {e}", path.display())))?;
                    }
                    Server::Baseline(s)
                }
            })
        };
    match listen {
        None => {
            let stdin = std::io::stdin();
            session(server, Box::new(stdin.lock()), Box::new(std::io::stdout()))?;
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| io_fail(format!("{addr}: {e}")))?;
            let local = listener.local_addr().map_err(io_fail)?;
            eprintln!("listening on {local}");
            for stream in listener.incoming() {
                let stream = stream.map_err(io_fail)?;
                let reader = BufReader::new(stream.try_clone().map_err(io_fail)?);
                server = session(server, Box::new(reader), Box::new(stream))?;
            }
        }
    }
    Ok(0)
}
