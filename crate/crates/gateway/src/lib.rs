//! An OpenAI-compatible gateway that routes GUI grounding calls across a
//! pool of vision-language models.
//!
//! Each request is scored for difficulty and risk, optionally probed on the
//! smallest model, and forwarded to the model the router picks. Feedback on
//! outcomes grows a per-application memory used by later probes.

pub mod backend;
pub mod config;
pub mod embedder;
pub mod mock;
pub mod pipeline;
pub mod server;
pub mod wire;

pub use pipeline::{Gateway, GatewayParts};
