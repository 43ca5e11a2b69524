use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{pool, PerSynthesisEstimates, PooledStats};
use crate::error::{Error, Result};
use crate::fit::fit_ols;
use crate::linalg::{cholesky_lower, inverse_wishart};
use crate::rng::{child_stream, derive_seed, SynthRng};
use crate::sim::report::{Arm, ArmRuns, SimReport};
use crate::table::DesignMatrix;

/// Multivariate-normal population, simple random samples, and synthesis
/// from the fitted normal. The estimand is the population regression of
/// the first variable on the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrsSimConfig {
    pub population: usize,
    /// Observed sample size.
    pub n: usize,
    /// Synthetic rows per replicate.
    pub k: usize,
    pub m: usize,
    pub n_sims: usize,
    /// Common correlation between every pair of variables (unit variances).
    pub rho: f64,
    pub dim: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for SrsSimConfig {
    fn default() -> Self {
        SrsSimConfig {
            population: 50_000,
            n: 500,
            k: 1000,
            m: 5,
            n_sims: 2000,
            rho: 0.5,
            dim: 5,
            seed: 20_240_501,
            ci_level: 0.95,
        }
    }
}

impl SrsSimConfig {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid("dim must be at least 2"));
        }
        if self.n <= self.dim + 1 || self.n > self.population {
            return Err(Error::invalid("need dim + 1 < n <= population"));
        }
        if self.k <= self.dim || self.m < 2 || self.n_sims < 2 {
            return Err(Error::invalid("need k > dim, m >= 2 and n_sims >= 2"));
        }
        let lo = -1.0 / (self.dim as f64 - 1.0);
        if !(self.rho > lo && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in ({lo}, 1)")));
        }
        Ok(())
    }
}

/// Rows of `N(mu, L Lᵀ)` as an `n × p` matrix.
fn mvn_rows(n: usize, mu: &DVector<f64>, l: &DMatrix<f64>, rng: &mut SynthRng) -> DMatrix<f64> {
    let p = mu.len();
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = z * l.transpose();
    for mut row in x.row_iter_mut() {
        row += mu.transpose();
    }
    x
}

/// OLS of column 0 on an intercept and the remaining columns.
fn regress_first(data: &DMatrix<f64>, names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, p) = data.shape();
    let x = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { data[(r, c)] });
    let y: Vec<f64> = data.column(0).iter().copied().collect();
    let fit = fit_ols(&y, &DesignMatrix::from_matrix(x, names.to_vec())?)?;
    let v = (0..p).map(|j| fit.xtx_inv[(j, j)] * fit.sigma2).collect();
    Ok((fit.coef.iter().copied().collect(), v))
}

fn mean_and_cov(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    let s = c.transpose() * &c / (n - 1.0);
    (mean, s)
}

fn one_arm(
    sample: &DMatrix<f64>,
    cfg: &SrsSimConfig,
    arm: Arm,
    names: &[String],
    rng: &mut SynthRng,
) -> Result<PooledStats> {
    let n = sample.nrows();
    let (ybar, s) = mean_and_cov(sample);
    let mut q = Vec::with_capacity(cfg.m);
    let mut v = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let (mu, l) = match arm {
            Arm::PlugIn => (ybar.clone(), cholesky_lower(&s)?),
            Arm::Proper => {
                let sigma = inverse_wishart((n - 1) as f64, &(&s * (n - 1) as f64), rng)?;
                let l = cholesky_lower(&sigma)?;
                let mu = &ybar
                    + &l * DVector::from_fn(ybar.len(), |_, _| rng.sample::<f64, _>(StandardNormal))
                        / (n as f64).sqrt();
                (mu, l)
            }
        };
        let syn = mvn_rows(cfg.k, &mu, &l, rng);
        let (ql, vl) = regress_first(&syn, names)?;
        q.push(ql);
        v.push(vl);
    }
    Ok(pool(&PerSynthesisEstimates::new(q, v, cfg.k, n)?))
}

/// Repeated sampling from one fixed multivariate-normal population, each
/// sample synthesized `m` times under both arms.
pub fn run_srs_simulation(cfg: &SrsSimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let p = cfg.dim;
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { cfg.rho });
    let l = cholesky_lower(&sigma)?;
    let population = mvn_rows(
        cfg.population,
        &DVector::zeros(p),
        &l,
        &mut child_stream(cfg.seed, u64::MAX),
    );
    let mut names = vec!["(Intercept)".to_string()];
    names.extend((2..=p).map(|i| format!("y{i}")));
    let (truth, _) = regress_first(&population, &names)?;

    let per_sim = (0..cfg.n_sims as u64)
        .into_par_iter()
        .map(|s| {
            let sim_seed = derive_seed(cfg.seed, s);
            let rows = sample(&mut child_stream(sim_seed, 0), cfg.population, cfg.n);
            let obs = population.select_rows(rows.iter().collect::<Vec<_>>().iter());
            let plug = one_arm(&obs, cfg, Arm::PlugIn, &names, &mut child_stream(sim_seed, 1))?;
            let proper = one_arm(&obs, cfg, Arm::Proper, &names, &mut child_stream(sim_seed, 2))?;
            Ok((plug, proper))
        })
        .collect::<Result<Vec<_>>>()?;
    let (plug, proper): (Vec<_>, Vec<_>) = per_sim.into_iter().unzip();
    SimReport::from_runs(
        format!(
            "normal population N={}, n={}, k={}, M={}",
            cfg.population, cfg.n, cfg.k, cfg.m
        ),
        cfg.seed,
        names,
        truth,
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
    )
}
