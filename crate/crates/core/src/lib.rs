//! Program synthesis from demonstrations, end to end: a control-flow DSL,
//! a deterministic gridworld, an interpreter that turns programs into
//! demonstration traces, a visual-token encoding of those traces, a small
//! encoder-decoder transformer trained from scratch to translate
//! demonstrations back into program source, and exact/aliased accuracy
//! evaluation with a perception-noise ablation harness.

pub mod dataset;
pub mod dsl;
pub mod eval;
pub mod exec;
pub mod model;
pub mod rng;
pub mod vislang;
pub mod world;
