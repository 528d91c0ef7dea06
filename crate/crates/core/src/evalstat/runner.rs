//! Per-fold train → predict → score cycles for [`super::repeat_cv`].

use std::collections::HashMap;

use crate::baseline::{train_baseline, TrainConfig};
use crate::encoding::{encode_corpus, TagSet};
use crate::pipeline::{predict_corpus, predict_text, Extractor};
use crate::protocol::{Client, ProtocolConfig, TrainStreams};
use crate::schema::EventSchema;
use crate::scoring::{score_corpus, ScoreReport};
use crate::standoff::AnnotationDoc;

use super::RunContext;

/// The documents named by `ids`, in `ids` order. Unknown ids are errors.
pub fn select(docs: &[AnnotationDoc], ids: &[String]) -> Result<Vec<AnnotationDoc>, String> {
    let by_id: HashMap<&str, &AnnotationDoc> =
        docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|d| (*d).clone())
                .ok_or_else(|| format!("unknown document `{id}`"))
        })
        .collect()
}

/// Predicts `test` with `model`, one document at a time, and scores it.
pub fn evaluate<E: Extractor + ?Sized>(
    model: &mut E,
    test: &[AnnotationDoc],
    schema: &EventSchema,
) -> Result<ScoreReport, String> {
    let pred = test
        .iter()
        .map(|d| predict_text(model, schema, &d.doc_id, &d.text).map(|p| p.doc))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    score_corpus(test, &pred, schema).map_err(|e| e.to_string())
}

/// Trains the baseline on the fold's train split (early-stopping on its
/// validation split) with the run seed, and scores the test split.
pub fn baseline_run(
    docs: &[AnnotationDoc],
    schema: &EventSchema,
    cfg: &TrainConfig,
    ctx: &RunContext,
) -> Result<Vec<(String, f64)>, String> {
    let train = select(docs, &ctx.split.train)?;
    let val = select(docs, &ctx.split.val)?;
    let test = select(docs, &ctx.split.test)?;
    let cfg = TrainConfig {
        seed: ctx.seed,
        ..cfg.clone()
    };
    let (model, _) = train_baseline(&train, &val, schema, &cfg).map_err(|e| e.to_string())?;
    let inputs: Vec<(String, String)> = test
        .iter()
        .map(|d| (d.doc_id.clone(), d.text.clone()))
        .collect();
    let pred: Vec<AnnotationDoc> = predict_corpus(&model, schema, &inputs)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| p.doc)
        .collect();
    let report = score_corpus(&test, &pred, schema).map_err(|e| e.to_string())?;
    Ok(report.scalars(schema))
}

/// Same cycle against a protocol server: one fresh session per run.
pub fn endpoint_run(
    config: &ProtocolConfig,
    docs: &[AnnotationDoc],
    schema: &EventSchema,
    cfg: &TrainConfig,
    ctx: &RunContext,
) -> Result<Vec<(String, f64)>, String> {
    let tags = TagSet::from_schema(schema);
    let streams = |ids: &[String]| -> Result<TrainStreams, String> {
        let data = encode_corpus(&select(docs, ids)?, schema, &tags, &config.markers)
            .map_err(|e| e.to_string())?;
        Ok(TrainStreams::from_task(&data, &tags))
    };
    let train = streams(&ctx.split.train)?;
    let val = streams(&ctx.split.val)?;
    let test = select(docs, &ctx.split.test)?;
    let mut client = Client::connect(config.clone()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        seed: ctx.seed,
        ..cfg.clone()
    };
    client
        .train_session(&train, Some(&val), &cfg)
        .map_err(|e| e.to_string())?;
    Ok(evaluate(&mut client, &test, schema)?.scalars(schema))
}
