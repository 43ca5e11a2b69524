//! Pooling per-replicate estimates and the synthetic-data variance
//! estimators.

mod estimators;
mod model;

pub use estimators::{
    combine, normal_quantile, pool, var_tm, var_tm_adjusted, var_tp, var_ts, var_ts_de, var_ts_ppd, variance_of,
    CombinedEstimate, Estimator, PerSynthesisEstimates, PooledStats,
};
pub use model::{analyze_synthetic, fit_model, model_design, Analysis, AnalysisSpec, Family, Formula, ModelFit};
