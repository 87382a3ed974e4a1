//! A desk-scale laboratory for multi-talker neural transducers.
//!
//! Everything runs on a synthetic symbolic-speech corpus where token onsets
//! are known exactly, so the serialized-output baseline can use oracle
//! timestamps while the prompt-token system uses none.

pub mod error;
pub mod numerics;

pub use error::{MtlabError, Result};
pub mod checks;
pub mod decode;
pub mod eval;
pub mod labels;
pub mod model;
pub mod simdata;
pub mod train;
pub mod transducer;
