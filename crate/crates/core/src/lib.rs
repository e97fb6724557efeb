//! Routing of computer-use tool calls across a pool of vision-language
//! models of increasing size and cost.
//!
//! A call passes a safety check, a difficulty estimate from prototype
//! similarity and, when neither settles it, a confidence probe of the
//! smallest model compared against a difficulty-dependent threshold.
//! Per-application memories are injected into the probe prompt so a small
//! model can become confident on tasks it has seen before.

pub mod call;
pub mod kbtool;
pub mod confidence;
pub mod costmodel;
pub mod difficulty;
pub mod embedding;
pub mod kb;
pub mod memory;
pub mod money;
pub mod outcome;
pub mod pool;
pub mod routing;
pub mod safety;
pub mod simulator;
