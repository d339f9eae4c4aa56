//! Automatic GPU offloading of C loop statements with OpenACC directives.
//!
//! The pipeline parses a C subset ([`model`]), finds loops that accept a
//! compute directive ([`classify`]), searches offload patterns with a genetic
//! algorithm ([`ga`]) measured by an [`eval::Evaluator`], plans host-device
//! transfers for each pattern ([`transfer`]) and writes the annotated source
//! ([`emit`]). [`pipeline`] ties the stages together.

pub mod classify;
pub mod emit;
pub mod eval;
pub mod ga;
pub mod model;
pub mod transfer;
pub mod pipeline;
