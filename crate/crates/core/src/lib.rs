//! Gated state-dependent Hawkes processes for limit order book event
//! streams.
//!
//! Events are marked by a type and by the spread state they leave behind.
//! Each event type carries a binary admissibility gate per state; an event
//! that is inadmissible in the current state has zero intensity, and its
//! accumulated excitation resumes once the book returns to a state where it
//! is admissible.

pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod scenario;
pub mod signature;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{
    validate_model, validate_stream, EventRecord, EventStream, EventType, HawkesParams, ModelSpec,
    SpreadState, Taxonomy, TransitionKernel, Variant, Violation,
};
pub use tensor::{Matrix, Tensor3};
