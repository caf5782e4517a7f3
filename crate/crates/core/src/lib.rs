pub mod dag;
pub mod embedding;
pub mod error;
pub mod evalkit;
pub mod expansion;
pub mod format;
pub mod grouping;
pub mod input;
pub mod pipeline;
pub mod refine;
pub mod semantic;
pub mod taxonomy;
pub mod textnorm;

pub use error::{Error, ErrorKind, Result};
