use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{analyze_synthetic, fit_model, pool, variance_of, AnalysisSpec, Estimator};
use crate::error::{Error, Result};
use crate::fit::{MethodKind, MethodSpec};
use crate::rng::{child_stream, derive_seed, SynthRng};
use crate::sim::report::Arm;
use crate::synth::{fit_observed, synthesize_fitted, Rule, SynthesisPlan};
use crate::table::{Cell, DataTable, Schema, VariableDef};

pub const MARITAL_LEVELS: [&str; 5] = ["single", "married", "remarried", "divorced", "widowed"];

/// Main-effects model of the stand-in survey.
pub const MAIN_EFFECTS_MODEL: &str = "ILL9=No ~ AGE9 + SEX9 + MSTAT9";
/// Same with the sex by marital-status interaction.
pub const INTERACTION_MODEL: &str = "ILL9=No ~ AGE9 + SEX9*MSTAT9";

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn draw_category(weights: &[f64], rng: &mut SynthRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn stand_in_schema() -> Schema {
    Schema::new(vec![
        VariableDef::continuous("AGE9"),
        VariableDef::categorical("SEX9", ["M", "F"]),
        VariableDef::categorical("MSTAT9", MARITAL_LEVELS),
        VariableDef::categorical("ILL9", ["Yes", "No"]),
    ])
    .expect("fixed schema is valid")
}

/// Survey-like table: integer age, sex logistic in age, marital status
/// multinomial-logistic in age and sex (everyone under 16 is single), and
/// limiting long-term illness logistic in all three. `interaction` scales
/// a sex by marital-status effect on illness; at 0 the main-effects
/// logistic model holds exactly.
pub fn stand_in_survey(n: usize, interaction: f64, rng: &mut SynthRng) -> Result<DataTable> {
    // married, remarried, divorced, widowed against single:
    // intercept, per-decade-over-16 slope, female effect
    const MSTAT: [(f64, f64, f64); 4] = [(-1.0, 1.0, 0.1), (-4.0, 1.0, 0.0), (-3.0, 0.9, 0.2), (-7.0, 1.7, 0.5)];
    const ILL_MAIN: [f64; 5] = [0.0, 0.35, 0.2, -0.25, 0.15];
    const ILL_FEMALE: [f64; 5] = [0.0, -0.6, -0.4, 0.5, -0.4];
    let mut cols: Vec<Vec<Cell>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let age = rng.random_range(0..95) as f64;
        let female = rng.random::<f64>() < logistic(-0.2 + 0.006 * age);
        let f = if female { 1.0 } else { 0.0 };
        let mstat = if age < 16.0 {
            0
        } else {
            let decades = (age - 16.0) / 10.0;
            let mut w = vec![1.0];
            w.extend(MSTAT.iter().map(|(a, b, c)| (a + b * decades + c * f).exp()));
            draw_category(&w, rng)
        };
        let eta = 3.5 - 0.055 * age + 0.25 * f + ILL_MAIN[mstat] + interaction * ILL_FEMALE[mstat] * f;
        let no = rng.random::<f64>() < logistic(eta);
        cols[0].push(Cell::Num(age));
        cols[1].push(Cell::Level(u32::from(female)));
        cols[2].push(Cell::Level(mstat as u32));
        cols[3].push(Cell::Level(u32::from(no)));
    }
    DataTable::new(stand_in_schema(), cols)
}

/// Parametric synthesis of the stand-in survey in the order age, sex,
/// marital status, illness, with the under-16 marital-status rule.
pub fn stand_in_plan(m: usize, seed: u64) -> SynthesisPlan {
    SynthesisPlan::new()
        .with_visit_sequence(&["AGE9", "SEX9", "MSTAT9", "ILL9"])
        .with_method("AGE9", MethodSpec::new(MethodKind::Normrank))
        .with_method("SEX9", MethodSpec::new(MethodKind::Logit))
        .with_method("MSTAT9", MethodSpec::new(MethodKind::Polyreg))
        .with_method("ILL9", MethodSpec::new(MethodKind::Logit))
        .with_rule(Rule::new("AGE9 < 16", "MSTAT9", "single"))
        .replicates(m)
        .seed(seed)
}

/// Repeated stand-in surveys, each synthesized with and without posterior
/// draws; records `√T / SE_obs` for the main-effects logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioStudyConfig {
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub interaction: f64,
    pub seed: u64,
}

impl Default for RatioStudyConfig {
    fn default() -> Self {
        RatioStudyConfig {
            n: 20_000,
            m: 10,
            reps: 200,
            interaction: 0.0,
            seed: 20_240_503,
        }
    }
}

/// Columns of the ratio table.
pub const RATIO_COLUMNS: [(Arm, Estimator); 5] = [
    (Arm::PlugIn, Estimator::Ts),
    (Arm::PlugIn, Estimator::Tp),
    (Arm::Proper, Estimator::TsPpd),
    (Arm::Proper, Estimator::Tp),
    (Arm::Proper, Estimator::Tm),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub arm: Arm,
    pub estimator: String,
    pub coefficient: String,
    /// Mean ratio over repetitions where it is defined.
    pub mean_ratio: f64,
    /// Repetitions with a negative variance (no ratio).
    pub n_na: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub coefficients: Vec<String>,
    /// `ratios[rep][column][coefficient]`, columns as in [`RATIO_COLUMNS`];
    /// `None` where the variance estimate is negative.
    pub ratios: Vec<Vec<Vec<Option<f64>>>>,
    pub rows: Vec<RatioRow>,
}

impl RatioReport {
    /// Mean over coefficients and repetitions of one column.
    pub fn grand_mean(&self, arm: Arm, est: Estimator) -> Option<f64> {
        let c = RATIO_COLUMNS.iter().position(|&(a, e)| a == arm && e == est)?;
        let vals: Vec<f64> = self
            .ratios
            .iter()
            .flat_map(|r| r[c].iter().flatten().copied())
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Table of one repetition, `NA` for negative variances.
    pub fn render_rep(&self, rep: usize) -> String {
        let mut out = format!("{:<18}", "coefficient");
        for (a, e) in RATIO_COLUMNS {
            out.push_str(&format!(" {:>14}", format!("{} {}", a.name(), e)));
        }
        out.push('\n');
        for (j, name) in self.coefficients.iter().enumerate() {
            out.push_str(&format!("{name:<18}"));
            for c in 0..RATIO_COLUMNS.len() {
                let cell = self.ratios[rep][c][j].map_or("NA".to_string(), |r| format!("{r:.3}"));
                out.push_str(&format!(" {cell:>14}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn run_ratio_study(cfg: &RatioStudyConfig) -> Result<RatioReport> {
    if cfg.m < 2 || cfg.reps == 0 {
        return Err(Error::invalid("ratio study needs m >= 2 and at least one repetition"));
    }
    let spec = AnalysisSpec::parse(MAIN_EFFECTS_MODEL, None)?;
    let per_rep = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(cfg.seed, r);
            let observed = stand_in_survey(cfg.n, cfg.interaction, &mut child_stream(rep_seed, 0))?;
            let obs_fit = fit_model(&observed, &spec)?;
            let plan = stand_in_plan(cfg.m, derive_seed(rep_seed, 1));
            let fitted = fit_observed(&observed, &plan)?;
            let mut cols = Vec::with_capacity(RATIO_COLUMNS.len());
            let mut stats = None;
            for (i, &(arm, est)) in RATIO_COLUMNS.iter().enumerate() {
                if i == 0 || RATIO_COLUMNS[i - 1].0 != arm {
                    let proper = arm == Arm::Proper;
                    let plan = SynthesisPlan {
                        proper,
                        seed: derive_seed(rep_seed, 1 + u64::from(proper)),
                        ..plan.clone()
                    };
                    let out = synthesize_fitted(&observed, &plan, &fitted.with_posterior_draws(proper))?;
                    let a = analyze_synthetic(&out.replicates, &spec, Estimator::Vbar, 0.95, cfg.n)?;
                    stats = Some(pool(&a.per));
                }
                let st = stats.as_ref().expect("set on the first column of each arm");
                let ratios = (0..obs_fit.coef.len())
                    .map(|j| {
                        let (t, _, _) = variance_of(st, j, est)?;
                        Ok((t >= 0.0).then(|| (t / obs_fit.variance[j]).sqrt()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                cols.push(ratios);
            }
            Ok((obs_fit.names, cols))
        })
        .collect::<Result<Vec<_>>>()?;
    let coefficients = per_rep[0].0.clone();
    let ratios: Vec<_> = per_rep.into_iter().map(|(_, c)| c).collect();
    let mut rows = Vec::new();
    for (c, &(arm, est)) in RATIO_COLUMNS.iter().enumerate() {
        for (j, name) in coefficients.iter().enumerate() {
            let vals: Vec<f64> = ratios.iter().filter_map(|r| r[c][j]).collect();
            rows.push(RatioRow {
                arm,
                estimator: est.to_string(),
                coefficient: name.clone(),
                mean_ratio: vals.iter().sum::<f64>() / vals.len().max(1) as f64,
                n_na: ratios.len() - vals.len(),
            });
        }
    }
    Ok(RatioReport {
        coefficients,
        ratios,
        rows,
    })
}

/// Interaction coefficients fitted to observed data with a real
/// interaction and to main-effects synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkageRow {
    pub seed: u64,
    pub coefficient: String,
    pub observed: f64,
    pub synthetic: f64,
    pub shrunk: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkageConfig {
    pub n: usize,
    pub m: usize,
    pub seeds: usize,
    pub interaction: f64,
    pub seed: u64,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        ShrinkageConfig {
            n: 5000,
            m: 10,
            seeds: 50,
            interaction: 1.0,
            seed: 20_240_504,
        }
    }
}

/// Synthesize with a model that leaves out the sex by marital-status
/// interaction and compare the interaction terms of the fuller analysis
/// model: `shrunk` when `|q̄_M| < |q̂_obs|`.
pub fn run_interaction_shrinkage(cfg: &ShrinkageConfig) -> Result<Vec<ShrinkageRow>> {
    let spec = AnalysisSpec::parse(INTERACTION_MODEL, None)?;
    let per_seed = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(cfg.seed, s);
            let observed = stand_in_survey(cfg.n, cfg.interaction, &mut child_stream(seed, 0))?;
            let obs = fit_model(&observed, &spec)?;
            let out = crate::synth::synthesize(&observed, &stand_in_plan(cfg.m, derive_seed(seed, 1)))?;
            let syn = analyze_synthetic(&out.replicates, &spec, Estimator::Ts, 0.95, cfg.n)?;
            Ok(obs
                .names
                .iter()
                .enumerate()
                .filter(|(_, name)| name.contains(':'))
                .filter_map(|(j, name)| {
                    let e = syn.estimates.iter().find(|e| &e.name == name)?;
                    Some(ShrinkageRow {
                        seed: s,
                        coefficient: name.clone(),
                        observed: obs.coef[j],
                        synthetic: e.estimate,
                        shrunk: e.estimate.abs() < obs.coef[j].abs(),
                    })
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}
