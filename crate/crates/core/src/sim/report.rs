use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::combine::{normal_quantile, variance_of, Estimator, PooledStats};
use crate::error::{Error, Result};

/// How the synthesizer treats parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Generate from the fitted parameters.
    PlugIn,
    /// Generate from a posterior-predictive parameter draw.
    Proper,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::PlugIn => "plug-in",
            Arm::Proper => "proper",
        }
    }

    /// Variance estimators that are valid for this arm, reference first.
    pub fn estimators(self) -> &'static [Estimator] {
        match self {
            Arm::PlugIn => &[Estimator::Ts, Estimator::Tp],
            Arm::Proper => &[Estimator::TsPpd, Estimator::Tp, Estimator::Tm, Estimator::TmAdjusted],
        }
    }
}

/// Pooled statistics of every simulation for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmRuns {
    pub arm: Arm,
    pub stats: Vec<PooledStats>,
}

/// Bias and spread of `q̄_M` over simulations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetRow {
    pub arm: Arm,
    pub target: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub empirical_variance: f64,
    /// Share of simulations with a negative `T_M` (proper arm only).
    pub negative_tm_fraction: Option<f64>,
}

/// Behaviour of one variance estimator over simulations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub arm: Arm,
    pub target: String,
    pub estimator: String,
    /// Simulations entering the row (`TM>0` drops negative ones).
    pub n_used: usize,
    pub mean_variance: f64,
    /// Variance of the variance estimate across simulations.
    pub variance_of_estimate: f64,
    /// `variance_of_estimate` relative to that of the arm's reference
    /// estimator (`Ts` or `Ts_PPD`).
    pub variability_ratio: f64,
    /// Interval coverage of the truth in percent; `None` for raw `TM`,
    /// whose negative values give no interval.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub title: String,
    pub seed: u64,
    pub n_sims: usize,
    pub ci_level: f64,
    pub targets: Vec<String>,
    pub truth: Vec<f64>,
    pub runs: Vec<ArmRuns>,
    pub summary: Vec<TargetRow>,
    pub estimators: Vec<EstimatorRow>,
    /// Ratio of the simple-random-sampling variance to the design variance
    /// of the observed estimate, when the design has one.
    pub design_effect: Option<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

impl SimReport {
    pub fn from_runs(
        title: impl Into<String>,
        seed: u64,
        targets: Vec<String>,
        truth: Vec<f64>,
        runs: Vec<ArmRuns>,
        ci_level: f64,
    ) -> Result<SimReport> {
        let z = normal_quantile(ci_level)?;
        let n_sims = runs.first().map_or(0, |r| r.stats.len());
        if n_sims == 0 || runs.iter().any(|r| r.stats.len() != n_sims) {
            return Err(Error::invalid(
                "every arm needs the same, positive number of simulations",
            ));
        }
        let mut summary = Vec::new();
        let mut estimators = Vec::new();
        for run in &runs {
            for (j, target) in targets.iter().enumerate() {
                let q: Vec<f64> = run.stats.iter().map(|s| s.qbar[j]).collect();
                let tm: Option<Vec<f64>> = (run.arm == Arm::Proper)
                    .then(|| {
                        run.stats
                            .iter()
                            .map(|s| variance_of(s, j, Estimator::Tm).map(|t| t.0))
                            .collect::<Result<Vec<_>>>()
                    })
                    .transpose()?;
                summary.push(TargetRow {
                    arm: run.arm,
                    target: target.clone(),
                    truth: truth[j],
                    mean_estimate: mean(&q),
                    empirical_variance: sample_var(&q),
                    negative_tm_fraction: tm
                        .as_ref()
                        .map(|t| t.iter().filter(|v| **v < 0.0).count() as f64 / n_sims as f64),
                });
                let mut reference = None;
                for &est in run.arm.estimators() {
                    let t: Vec<f64> = run
                        .stats
                        .iter()
                        .map(|s| variance_of(s, j, est).map(|t| t.0))
                        .collect::<Result<_>>()?;
                    let spread = sample_var(&t);
                    let reference = *reference.get_or_insert(spread);
                    let covered = |idx: &[usize]| {
                        100.0
                            * idx
                                .iter()
                                .filter(|&&i| (q[i] - truth[j]).abs() <= z * t[i].sqrt())
                                .count() as f64
                            / idx.len().max(1) as f64
                    };
                    let all: Vec<usize> = (0..n_sims).collect();
                    estimators.push(EstimatorRow {
                        arm: run.arm,
                        target: target.clone(),
                        estimator: est.to_string(),
                        n_used: n_sims,
                        mean_variance: mean(&t),
                        variance_of_estimate: spread,
                        variability_ratio: spread / reference,
                        coverage: (est != Estimator::Tm).then(|| covered(&all)),
                    });
                    if est == Estimator::Tm {
                        let pos: Vec<usize> = all.iter().copied().filter(|&i| t[i] > 0.0).collect();
                        let tp: Vec<f64> = pos.iter().map(|&i| t[i]).collect();
                        estimators.push(EstimatorRow {
                            arm: run.arm,
                            target: target.clone(),
                            estimator: "TM>0".into(),
                            n_used: pos.len(),
                            mean_variance: mean(&tp),
                            variance_of_estimate: sample_var(&tp),
                            variability_ratio: sample_var(&tp) / reference,
                            coverage: Some(covered(&pos)),
                        });
                    }
                }
            }
        }
        Ok(SimReport {
            title: title.into(),
            seed,
            n_sims,
            ci_level,
            targets,
            truth,
            runs,
            summary,
            estimators,
            design_effect: None,
        })
    }

    pub fn estimator(&self, arm: Arm, target: &str, estimator: &str) -> Option<&EstimatorRow> {
        self.estimators
            .iter()
            .find(|r| r.arm == arm && r.target == target && r.estimator == estimator)
    }

    pub fn target(&self, arm: Arm, target: &str) -> Option<&TargetRow> {
        self.summary.iter().find(|r| r.arm == arm && r.target == target)
    }

    pub fn arm(&self, arm: Arm) -> Option<&ArmRuns> {
        self.runs.iter().find(|r| r.arm == arm)
    }

    /// Plain-text table of the summary.
    pub fn render(&self) -> String {
        let mut out = format!("{} (seed {}, {} simulations)\n", self.title, self.seed, self.n_sims);
        if let Some(de) = self.design_effect {
            out.push_str(&format!("design effect {de:.2}\n"));
        }
        out.push_str(&format!(
            "{:<8} {:<12} {:>10} {:>10} {:>10} {:>8}\n",
            "arm", "target", "truth", "mean", "emp.var", "neg.TM"
        ));
        for r in &self.summary {
            out.push_str(&format!(
                "{:<8} {:<12} {:>10.4} {:>10.4} {:>10.4e} {:>8}\n",
                r.arm.name(),
                r.target,
                r.truth,
                r.mean_estimate,
                r.empirical_variance,
                r.negative_tm_fraction.map_or("".into(), |f| format!("{f:.3}"))
            ));
        }
        out.push_str(&format!(
            "{:<8} {:<12} {:<8} {:>6} {:>11} {:>8} {:>9}\n",
            "arm", "target", "est", "n", "mean.var", "ratio", "coverage"
        ));
        for r in &self.estimators {
            out.push_str(&format!(
                "{:<8} {:<12} {:<8} {:>6} {:>11.4e} {:>8.2} {:>9}\n",
                r.arm.name(),
                r.target,
                r.estimator,
                r.n_used,
                r.mean_variance,
                r.variability_ratio,
                r.coverage.map_or("NA".into(), |c| format!("{c:.1}"))
            ));
        }
        out
    }

    /// Write `{stem}_summary.csv`, `{stem}_estimators.csv` and
    /// `{stem}_runs.csv` (one row per simulation, arm and target).
    pub fn write_csv(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let summary = dir.join(format!("{stem}_summary.csv"));
        let mut w = csv::Writer::from_path(&summary)?;
        for r in &self.summary {
            w.serialize(r)?;
        }
        w.flush()?;
        let est = dir.join(format!("{stem}_estimators.csv"));
        let mut w = csv::Writer::from_path(&est)?;
        for r in &self.estimators {
            w.serialize(r)?;
        }
        w.flush()?;
        let runs = dir.join(format!("{stem}_runs.csv"));
        let mut w = csv::Writer::from_path(&runs)?;
        w.write_record(["sim", "arm", "target", "qbar", "vbar", "b"])?;
        for run in &self.runs {
            for (s, st) in run.stats.iter().enumerate() {
                for (j, t) in self.targets.iter().enumerate() {
                    w.write_record([
                        (s + 1).to_string(),
                        run.arm.name().to_string(),
                        t.clone(),
                        st.qbar[j].to_string(),
                        st.vbar[j].to_string(),
                        st.b.as_ref().map_or(String::new(), |b| b[j].to_string()),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(vec![summary, est, runs])
    }
}
