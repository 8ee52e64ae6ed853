//! Discrete semantic-token tooling.
//!
//! The crate covers the whole data path from continuous feature frames to
//! LLM-ready instruction records:
//!
//! * [`rvq`] trains, expands and applies a residual vector quantizer.
//! * [`durcodec`] run-length compresses level-0 sound tokens into
//!   `(sound, duration)` groups.
//! * [`vocab`] lays the extended tokens out on top of a base vocabulary and
//!   renders/parses the textual markup.
//! * [`text2sem`] holds the synthetic acoustic oracle and the
//!   character-level text-to-semantic mapper.
//! * [`eval`] implements normalization plus WER/CER/TER.
//! * [`pipeline`] filters and builds dataset records.
//! * [`orchestrator`] runs the pipeline over a worker pool with retries.

pub mod digest;
pub mod durcodec;
pub mod eval;
pub mod orchestrator;
pub mod pipeline;
pub mod rvq;
pub mod text2sem;
pub mod vocab;

pub use durcodec::{DurationCodec, Group, TokenStream};
pub use rvq::{FeatureSeq, Quantizer, SemanticTokenSeq, TrainConfig};
pub use text2sem::{MapperModel, OracleConfig};
pub use vocab::VocabSpec;
