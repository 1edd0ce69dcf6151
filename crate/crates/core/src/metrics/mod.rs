//! Conversation metrics computed from finished game states.

mod chains;
mod distributions;
mod lexicon;
mod outcomes;
mod summary;

pub use chains::*;
pub use distributions::*;
pub use lexicon::*;
pub use outcomes::*;
pub use summary::*;

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("messages out of time order at index {index}")]
    Unordered { index: usize },
    #[error("no samples")]
    Empty,
    #[error("malformed log: {0}")]
    MalformedLog(String),
}
