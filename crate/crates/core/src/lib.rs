//! Core of the opinion-consensus debate platform.
//!
//! Everything in this crate is pure and deterministic: the game state
//! machine, the confederate agents and their text pipeline, the scripted
//! simulator, the conversation analytics and the statistical machinery.
//! IO, networking and file formats live in the companion `consensus-lab`
//! crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod agent;
pub mod domain;
pub mod engine;
pub mod math;
pub mod metrics;
pub mod sim;
pub mod stats;
pub mod text;

pub use domain::{
    classify_assignment, classify_conversation, AssignmentType, Condition, ConversationType,
    GameConfig, OpinionChoice, ParticipantKind, PerceivedConfidence, PersonalConfidence,
};
pub use engine::{Command, EngineError, Event, EventKind, GameState, Stage};
