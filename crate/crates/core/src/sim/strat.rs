use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{pool, PerSynthesisEstimates, PooledStats};
use crate::error::{Error, Result};
use crate::fit::{MethodKind, MethodSpec};
use crate::rng::{child_stream, derive_seed};
use crate::sim::report::{Arm, ArmRuns, SimReport};
use crate::synth::{synthesize_stratified, SynthesisPlan};
use crate::table::{Cell, DataTable, Role, Schema, VariableDef};

/// Stratified estimate of a population mean and its variance with the
/// finite-population correction:
/// `Σ_h (N_h/N) ȳ_h` and `Σ_h (1 − n_h/N_h)(N_h/N)² s_h²/n_h`.
pub fn stratified_mean(groups: &[Vec<f64>], pop_sizes: &[usize]) -> Result<(f64, f64)> {
    if groups.len() != pop_sizes.len() || groups.is_empty() {
        return Err(Error::invalid("one population size per stratum is needed"));
    }
    let big_n: usize = pop_sizes.iter().sum();
    let mut est = 0.0;
    let mut var = 0.0;
    for (y, &nh_pop) in groups.iter().zip(pop_sizes) {
        let n = y.len();
        if n < 2 || n > nh_pop {
            return Err(Error::invalid(format!(
                "stratum sample size {n} must be at least 2 and at most its population {nh_pop}"
            )));
        }
        let w = nh_pop as f64 / big_n as f64;
        let mean = y.iter().sum::<f64>() / n as f64;
        let s2 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        est += w * mean;
        var += (1.0 - n as f64 / nh_pop as f64) * w * w * s2 / n as f64;
    }
    Ok((est, var))
}

/// Stratified population with stratum `h = 1..H` drawn from `N(10h, h²)`,
/// stratified samples, and normal synthesis within each stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StratSimConfig {
    /// Population units per stratum.
    pub stratum_size: usize,
    /// Sample size of each stratum; its length sets the number of strata.
    pub sample_sizes: Vec<usize>,
    pub m: usize,
    pub n_sims: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for StratSimConfig {
    fn default() -> Self {
        StratSimConfig::preset(1).expect("preset 1 exists")
    }
}

impl StratSimConfig {
    /// Preset designs: 1 is 20 per stratum with `m = 100`; 2 and 3 use
    /// `m = 10` with equal (20 each) and increasing (11, 13, ..., 29)
    /// allocation of the same total.
    pub fn preset(config: u8) -> Result<StratSimConfig> {
        let (sample_sizes, m, n_sims) = match config {
            1 => (vec![20; 10], 100, 300),
            2 => (vec![20; 10], 10, 1000),
            3 => ((0..10).map(|h| 11 + 2 * h).collect(), 10, 1000),
            _ => return Err(Error::invalid(format!("unknown stratified preset {config}"))),
        };
        Ok(StratSimConfig {
            stratum_size: 1000,
            sample_sizes,
            m,
            n_sims,
            seed: 20_240_502,
            ci_level: 0.95,
        })
    }
}

fn pop_var(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64
}

/// Variance of the sample mean under simple random sampling over the
/// variance of the stratified estimator, both from population variances.
pub fn design_effect(population: &[Vec<f64>], sample_sizes: &[usize]) -> f64 {
    let big_n: usize = population.iter().map(Vec::len).sum();
    let n: usize = sample_sizes.iter().sum();
    let all: Vec<f64> = population.iter().flatten().copied().collect();
    let srs = (1.0 - n as f64 / big_n as f64) * pop_var(&all) / n as f64;
    let strat: f64 = population
        .iter()
        .zip(sample_sizes)
        .map(|(y, &nh)| {
            let w = y.len() as f64 / big_n as f64;
            (1.0 - nh as f64 / y.len() as f64) * w * w * pop_var(y) / nh as f64
        })
        .sum();
    srs / strat
}

fn observed_table(schema: &Arc<Schema>, groups: &[Vec<f64>]) -> Result<DataTable> {
    let mut strata = Vec::new();
    let mut y = Vec::new();
    for (h, g) in groups.iter().enumerate() {
        strata.extend(std::iter::repeat_n(Cell::Level(h as u32), g.len()));
        y.extend(g.iter().map(|&v| Cell::Num(v)));
    }
    DataTable::new(schema.clone(), vec![strata, y])
}

/// Repeated stratified sampling from one fixed population, each sample
/// synthesized by stratum with the normal model under both arms.
///
/// Sampling and synthesis streams depend only on the seed and the
/// simulation index, never on the allocation: stratum `h` of simulation
/// `s` takes the first `n_h` units of one fixed permutation, so two
/// allocations run with one seed are paired draw by draw.
pub fn run_stratified_simulation(cfg: &StratSimConfig) -> Result<SimReport> {
    let n_strata = cfg.sample_sizes.len();
    if n_strata == 0 || cfg.m < 2 || cfg.n_sims < 2 {
        return Err(Error::invalid("need at least one stratum, m >= 2 and n_sims >= 2"));
    }
    if let Some(bad) = cfg.sample_sizes.iter().find(|&&n| n < 10 || n > cfg.stratum_size) {
        return Err(Error::invalid(format!(
            "stratum sample size {bad} must lie between 10 and the stratum size {}",
            cfg.stratum_size
        )));
    }
    let mut pop_rng = child_stream(cfg.seed, u64::MAX);
    let population: Vec<Vec<f64>> = (1..=n_strata)
        .map(|h| {
            (0..cfg.stratum_size)
                .map(|_| 10.0 * h as f64 + h as f64 * pop_rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let pop_sizes = vec![cfg.stratum_size; n_strata];
    let truth = population.iter().flatten().sum::<f64>() / (n_strata * cfg.stratum_size) as f64;
    let labels: Vec<String> = (1..=n_strata).map(|h| h.to_string()).collect();
    let schema = Arc::new(Schema::new(vec![
        VariableDef::categorical("stratum", labels).with_role(Role::Stratum),
        VariableDef::continuous("y"),
    ])?);
    let n: usize = cfg.sample_sizes.iter().sum();

    let per_sim = (0..cfg.n_sims as u64)
        .into_par_iter()
        .map(|s| {
            let sim_seed = derive_seed(cfg.seed, s);
            let groups: Vec<Vec<f64>> = population
                .iter()
                .zip(&cfg.sample_sizes)
                .enumerate()
                .map(|(h, (units, &nh))| {
                    let mut idx: Vec<usize> = (0..units.len()).collect();
                    idx.shuffle(&mut child_stream(sim_seed, h as u64));
                    idx[..nh].iter().map(|&i| units[i]).collect()
                })
                .collect();
            let observed = observed_table(&schema, &groups)?;
            let arm = |proper: bool, stream: u64| -> Result<PooledStats> {
                let plan = SynthesisPlan::new()
                    .with_method("y", MethodSpec::new(MethodKind::Norm).proper(proper))
                    .replicates(cfg.m)
                    .seed(derive_seed(sim_seed, stream));
                let out = synthesize_stratified(&observed, &plan, "stratum", &BTreeMap::new())?;
                let mut q = Vec::with_capacity(cfg.m);
                let mut v = Vec::with_capacity(cfg.m);
                for rep in &out.replicates {
                    let mut by_stratum = vec![Vec::new(); n_strata];
                    for (sc, yc) in rep.column_at(0).iter().zip(rep.column_at(1)) {
                        if let (Cell::Level(h), Cell::Num(y)) = (sc, yc) {
                            by_stratum[*h as usize].push(*y);
                        }
                    }
                    let (e, var) = stratified_mean(&by_stratum, &pop_sizes)?;
                    q.push(vec![e]);
                    v.push(vec![var]);
                }
                Ok(pool(&PerSynthesisEstimates::new(q, v, n, n)?))
            };
            Ok((arm(false, 1_000_001)?, arm(true, 1_000_002)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (plug, proper): (Vec<_>, Vec<_>) = per_sim.into_iter().unzip();
    let mut report = SimReport::from_runs(
        format!("stratified population, {n_strata} strata, n={n}, M={}", cfg.m),
        cfg.seed,
        vec!["mean".into()],
        vec![truth],
        vec![
            ArmRuns {
                arm: Arm::PlugIn,
                stats: plug,
            },
            ArmRuns {
                arm: Arm::Proper,
                stats: proper,
            },
        ],
        cfg.ci_level,
    )?;
    report.design_effect = Some(design_effect(&population, &cfg.sample_sizes));
    Ok(report)
}
