//! Toolkit for chit-chat-to-task-oriented sales dialogues: a four-stage
//! synthesis pipeline, a policy-controlled sales agent with chain-of-thought
//! parsing, a persona-driven user simulator, and turn/dialogue-level
//! evaluation.

pub mod agent;
pub mod backend;
pub mod core;
pub mod promptkit;
pub mod util;
pub mod genpipe;
pub mod simarena;
pub mod evalkit;
