//! Event-based extraction of lesion and medical-problem findings from
//! radiology reports.

pub mod baseline;
pub mod corpus;
pub mod encoding;
pub mod evalstat;
pub mod event;
pub mod pipeline;
pub mod protocol;
pub mod schema;
pub mod scoring;
pub mod standoff;
pub mod textproc;

pub use event::{Argument, Event, Fragment, Span};
pub use schema::{default_schema, load_schema, EventSchema};
