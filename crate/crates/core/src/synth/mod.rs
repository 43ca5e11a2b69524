//! Sequential conditional synthesis of whole tables.

mod engine;
mod plan;
mod rules;

pub use engine::{
    fit_observed, synthesize, synthesize_fitted, synthesize_missingness, synthesize_stratified, FittedModel,
    FittedPlan, FittedStep, Manifest, StratumReport, SynthesisOutput, VariableModel, VariableReport,
};
pub use plan::{Step, SynthesisPlan};
pub use rules::{CmpOp, CompiledRule, Condition, Literal, Rule};
