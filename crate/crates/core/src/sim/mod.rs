//! Simulation studies of the variance estimators.

mod ratio;
mod report;
mod srs;
mod strat;

pub use ratio::{
    run_interaction_shrinkage, run_ratio_study, stand_in_plan, stand_in_schema, stand_in_survey, RatioReport, RatioRow,
    RatioStudyConfig, ShrinkageConfig, ShrinkageRow, INTERACTION_MODEL, MAIN_EFFECTS_MODEL, MARITAL_LEVELS,
    RATIO_COLUMNS,
};
pub use report::{Arm, ArmRuns, EstimatorRow, SimReport, TargetRow};
pub use srs::{run_srs_simulation, SrsSimConfig};
pub use strat::{design_effect, run_stratified_simulation, stratified_mean, StratSimConfig};
