pub mod analyze;
pub mod config;
pub mod eventlog;
pub mod llm;
pub mod server;
pub mod simulate;
