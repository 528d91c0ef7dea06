//! Self-contained trainable extractor: a perceptron BIO tagger for entities
//! and a perceptron classifier for trigger/argument roles.

mod features;
mod perceptron;
pub mod relation;
pub mod tagger;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    encode_corpus, EncodeStats, EncodingError, MarkerConfig, TagSet, NO_RELATION,
};
use crate::schema::{load_schema, serialize_schema, EventSchema, SchemaError};
use crate::standoff::AnnotationDoc;

pub use features::{relation_features, shape, token_features};
pub use relation::{candidate_features, train_rel, RelModel, RelTrainer};
pub use tagger::{train_tagger, TaggerModel, TaggerTrainer};

/// Identifies the model file format.
pub const MODEL_FORMAT: &str = "radfind-baseline";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("epochs must be at least 1")]
    NoEpochs,
    #[error("empty training set for the {0}")]
    EmptyCorpus(&'static str),
    #[error("role `{0}` is not in the model's role set")]
    UnknownRole(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("model schema: {0}")]
    Schema(#[from] SchemaError),
    #[error("model file: {0}")]
    Format(String),
    #[error("{words} words but {tags} tags, or a tag outside the tag set")]
    BadExample { words: usize, tags: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            seed: 0,
            patience: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mistakes: usize,
    pub val_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub tagger_epochs: Vec<EpochLog>,
    pub tagger_stop: StopReason,
    pub rel_epochs: Vec<EpochLog>,
    pub rel_stop: StopReason,
    pub stats: EncodeStats,
}

/// Persisted baseline: schema text, markers and both weight tables. Stored as
/// JSON; weights are row-major float arrays next to their feature lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub format: String,
    pub version: u32,
    pub schema: String,
    pub markers: MarkerConfig,
    pub tagger: TaggerModel,
    pub relations: RelModel,
}

impl BaselineModel {
    pub fn schema(&self) -> Result<EventSchema, SchemaError> {
        load_schema(&self.schema)
    }

    /// An untrained model: tags everything `O` and never links.
    pub fn untrained(schema: &EventSchema) -> Self {
        BaselineModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            schema: serialize_schema(schema),
            markers: MarkerConfig::default(),
            tagger: TaggerModel::untrained(TagSet::from_schema(schema).names().to_vec()),
            relations: RelModel::untrained(role_labels(schema)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, BaselineError> {
        let mut m: BaselineModel =
            serde_json::from_str(s).map_err(|e| BaselineError::Format(e.to_string()))?;
        if m.format != MODEL_FORMAT {
            return Err(BaselineError::Format(format!(
                "unexpected format `{}`",
                m.format
            )));
        }
        if m.version != MODEL_VERSION {
            return Err(BaselineError::Format(format!(
                "unsupported version {}",
                m.version
            )));
        }
        if !m.tagger.check() || !m.relations.check() {
            return Err(BaselineError::Format(
                "weight table sizes do not match".into(),
            ));
        }
        m.tagger.rebuild();
        m.relations.rebuild();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        BaselineModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `NO_RELATION` followed by every schema role.
pub fn role_labels(schema: &EventSchema) -> Vec<String> {
    std::iter::once(NO_RELATION)
        .chain(schema.roles())
        .map(str::to_string)
        .collect()
}

/// Trains both models on `train`, early-stopping on `val` when it is
/// non-empty.
pub fn train_baseline(
    train: &[AnnotationDoc],
    val: &[AnnotationDoc],
    schema: &EventSchema,
    cfg: &TrainConfig,
) -> Result<(BaselineModel, TrainReport), BaselineError> {
    let markers = MarkerConfig::default();
    let tags = TagSet::from_schema(schema);
    let tr = encode_corpus(train, schema, &tags, &markers)?;
    let va = encode_corpus(val, schema, &tags, &markers)?;
    let ner_val = (!va.ner.is_empty()).then_some(va.ner.as_slice());
    let re_val = (!va.re.is_empty()).then_some(va.re.as_slice());
    let (tagger, tagger_epochs, tagger_stop) = train_tagger(tags.names(), &tr.ner, ner_val, cfg)?;
    let (relations, rel_epochs, rel_stop) =
        train_rel(&role_labels(schema), &tr.re, re_val, &markers, cfg)?;
    let model = BaselineModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        schema: serialize_schema(schema),
        markers,
        tagger,
        relations,
    };
    let report = TrainReport {
        tagger_epochs,
        tagger_stop,
        rel_epochs,
        rel_stop,
        stats: tr.stats,
    };
    Ok((model, report))
}
