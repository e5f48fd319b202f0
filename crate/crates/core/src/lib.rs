//! Generation pipeline for IEC 61131-3 Structured Text: prompt construction,
//! LLM backends, model-checker integration, dataset synthesis and metrics.

pub mod checker;
pub mod dataset;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod verifier;
