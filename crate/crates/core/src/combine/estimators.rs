use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Per-replicate estimates `q^(l)` and variances `v^(l)` of `p` quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSynthesisEstimates {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Synthetic rows per replicate.
    pub k: usize,
    /// Observed rows.
    pub n: usize,
}

impl PerSynthesisEstimates {
    pub fn new(q: Vec<Vec<f64>>, v: Vec<Vec<f64>>, k: usize, n: usize) -> Result<Self> {
        let p = q
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("no replicate estimates"))?;
        if q.len() != v.len() || q.iter().chain(&v).any(|r| r.len() != p) {
            return Err(Error::invalid("estimate and variance vectors differ in shape"));
        }
        if v.iter().flatten().any(|x| x.is_nan() || *x < 0.0) {
            return Err(Error::invalid("replicate variances must be non-negative"));
        }
        if k == 0 || n == 0 {
            return Err(Error::invalid("k and n must be positive"));
        }
        Ok(PerSynthesisEstimates { q, v, k, n })
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }
}

/// `q̄_M`, `v̄_M` and the between-replicate variance `b_M` (undefined for
/// a single replicate).
#[derive(Debug, Clone, PartialEq)]
pub struct PooledStats {
    pub qbar: Vec<f64>,
    pub vbar: Vec<f64>,
    pub b: Option<Vec<f64>>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

pub fn pool(per: &PerSynthesisEstimates) -> PooledStats {
    let m = per.m();
    let p = per.q[0].len();
    let mean = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64;
    let qbar: Vec<f64> = (0..p).map(|j| mean(&per.q, j)).collect();
    let vbar = (0..p).map(|j| mean(&per.v, j)).collect();
    let b = (m > 1).then(|| {
        (0..p)
            .map(|j| per.q.iter().map(|r| (r[j] - qbar[j]).powi(2)).sum::<f64>() / (m - 1) as f64)
            .collect()
    });
    PooledStats {
        qbar,
        vbar,
        b,
        m,
        k: per.k,
        n: per.n,
    }
}

/// `b(1 + 1/M) − v̄`; may be negative.
pub fn var_tm(b: f64, vbar: f64, m: usize) -> f64 {
    b * (1.0 + 1.0 / m as f64) - vbar
}

/// `v̄(k/n + 1/M)`.
pub fn var_ts(vbar: f64, k: usize, n: usize, m: usize) -> f64 {
    vbar * (k as f64 / n as f64 + 1.0 / m as f64)
}

/// `v̄(k/n + (1 + k/n)/M)`.
pub fn var_ts_ppd(vbar: f64, k: usize, n: usize, m: usize) -> f64 {
    let r = k as f64 / n as f64;
    vbar * (r + (1.0 + r) / m as f64)
}

/// `v̄·k/n + b/M`.
pub fn var_tp(b: f64, vbar: f64, k: usize, n: usize, m: usize) -> f64 {
    vbar * k as f64 / n as f64 + b / m as f64
}

/// `v̄(DE·k/n + 1/M)`.
pub fn var_ts_de(vbar: f64, k: usize, n: usize, m: usize, de: f64) -> f64 {
    vbar * (de * k as f64 / n as f64 + 1.0 / m as f64)
}

/// `T_M` when positive, otherwise the floor `v̄·k/n`; the flag reports the
/// floor was used.
pub fn var_tm_adjusted(b: f64, vbar: f64, k: usize, n: usize, m: usize) -> (f64, bool) {
    let t = var_tm(b, vbar, m);
    if t > 0.0 {
        (t, false)
    } else {
        (vbar * k as f64 / n as f64, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    /// `v̄_M` alone: the variance the analyst would get from real data.
    Vbar,
    Tm,
    TmAdjusted,
    Ts,
    TsPpd,
    Tp,
    /// `T_s` with a design effect.
    TsDe(f64),
}

impl Estimator {
    pub fn needs_replicates(self) -> bool {
        matches!(self, Estimator::Tm | Estimator::TmAdjusted | Estimator::Tp)
    }

    pub const ALL_NAMES: [&'static str; 7] = ["vbar", "TM", "TM_adj", "Ts", "Ts_PPD", "Tp", "TsDE(<DE>)"];

    fn static_name(self) -> &'static str {
        match self {
            Estimator::Vbar => "vbar",
            Estimator::Tm => "TM",
            Estimator::TmAdjusted => "TM_adj",
            Estimator::Ts => "Ts",
            Estimator::TsPpd => "Ts_PPD",
            Estimator::Tp => "Tp",
            Estimator::TsDe(_) => "TsDE",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::TsDe(de) => write!(f, "TsDE({de})"),
            e => f.write_str(e.static_name()),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "vbar" => Estimator::Vbar,
            "tm" => Estimator::Tm,
            "tm_adj" | "tm_adjusted" => Estimator::TmAdjusted,
            "ts" => Estimator::Ts,
            "ts_ppd" | "tsppd" => Estimator::TsPpd,
            "tp" => Estimator::Tp,
            _ => {
                let de = lower
                    .strip_prefix("tsde(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|d| d.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "unknown estimator `{t}`; expected one of {}",
                            Estimator::ALL_NAMES.join(", ")
                        ))
                    })?;
                if !(de > 0.0 && de.is_finite()) {
                    return Err(Error::invalid(format!("design effect must be positive, got {de}")));
                }
                Estimator::TsDe(de)
            }
        })
    }
}

impl TryFrom<String> for Estimator {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.to_string()
    }
}

/// Variance of one quantity under `est`, with the negative / adjusted flags.
pub fn variance_of(stats: &PooledStats, j: usize, est: Estimator) -> Result<(f64, bool, bool)> {
    let (vbar, m, k, n) = (stats.vbar[j], stats.m, stats.k, stats.n);
    let b = || {
        stats
            .b
            .as_ref()
            .map(|b| b[j])
            .ok_or(Error::NeedsReplicates(est.static_name()))
    };
    Ok(match est {
        Estimator::Vbar => (vbar, false, false),
        Estimator::Ts => (var_ts(vbar, k, n, m), false, false),
        Estimator::TsPpd => (var_ts_ppd(vbar, k, n, m), false, false),
        Estimator::TsDe(de) => (var_ts_de(vbar, k, n, m, de), false, false),
        Estimator::Tp => (var_tp(b()?, vbar, k, n, m), false, false),
        Estimator::Tm => {
            let t = var_tm(b()?, vbar, m);
            (t, t < 0.0, false)
        }
        Estimator::TmAdjusted => {
            let (t, adj) = var_tm_adjusted(b()?, vbar, k, n, m);
            (t, false, adj)
        }
    })
}

/// Pooled estimate of one quantity with its variance and interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedEstimate {
    pub name: String,
    pub estimate: f64,
    pub variance: f64,
    pub estimator: String,
    pub ci_level: f64,
    /// `None` when the variance is negative.
    pub interval: Option<(f64, f64)>,
    pub negative_variance: bool,
    pub adjusted: bool,
}

impl CombinedEstimate {
    pub fn se(&self) -> Option<f64> {
        (self.variance >= 0.0).then(|| self.variance.sqrt())
    }

    pub fn covers(&self, truth: f64) -> Option<bool> {
        self.interval.map(|(lo, hi)| lo <= truth && truth <= hi)
    }

    pub fn flags(&self) -> String {
        match (self.negative_variance, self.adjusted) {
            (true, _) => "negative_variance".into(),
            (_, true) => "adjusted".into(),
            _ => String::new(),
        }
    }
}

/// Two-sided normal quantile for a `level` interval.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + level / 2.0))
}

/// Pool `per` and apply `est` to every quantity.
pub fn combine(
    per: &PerSynthesisEstimates,
    names: &[String],
    est: Estimator,
    ci_level: f64,
) -> Result<Vec<CombinedEstimate>> {
    let z = normal_quantile(ci_level)?;
    let stats = pool(per);
    if est.needs_replicates() && stats.m < 2 {
        return Err(Error::NeedsReplicates(est.static_name()));
    }
    (0..stats.qbar.len())
        .map(|j| {
            let (variance, negative, adjusted) = variance_of(&stats, j, est)?;
            let q = stats.qbar[j];
            Ok(CombinedEstimate {
                name: names.get(j).cloned().unwrap_or_else(|| format!("q{}", j + 1)),
                estimate: q,
                variance,
                estimator: est.to_string(),
                ci_level,
                interval: (variance >= 0.0).then(|| (q - z * variance.sqrt(), q + z * variance.sqrt())),
                negative_variance: negative,
                adjusted,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(b: f64, vbar: f64, m: usize) -> PooledStats {
        PooledStats {
            qbar: vec![0.0],
            vbar: vec![vbar],
            b: Some(vec![b]),
            m,
            k: 100,
            n: 100,
        }
    }

    #[test]
    fn pooling() {
        let per = PerSynthesisEstimates::new(vec![vec![1.0], vec![3.0]], vec![vec![2.0], vec![2.0]], 10, 10).unwrap();
        let p = pool(&per);
        assert_eq!((p.qbar[0], p.vbar[0], p.b.as_ref().unwrap()[0]), (2.0, 2.0, 2.0));
        let same = PerSynthesisEstimates::new(vec![vec![4.0]; 3], vec![vec![1.0]; 3], 10, 10).unwrap();
        assert_eq!(pool(&same).b.unwrap()[0], 0.0);
        let one = PerSynthesisEstimates::new(vec![vec![5.0]], vec![vec![1.0]], 10, 10).unwrap();
        let p1 = pool(&one);
        assert!(p1.b.is_none());
        assert_eq!(p1.qbar[0], 5.0);
        assert!(PerSynthesisEstimates::new(vec![vec![1.0]], vec![vec![-1.0]], 1, 1).is_err());
    }

    #[test]
    fn tm_cases() {
        assert!((var_tm(1.2, 1.0, 5) - 0.44).abs() < 1e-12);
        assert!((var_tm(0.5, 1.0, 5) + 0.4).abs() < 1e-12);
        assert_eq!(var_tm(2.0, 0.0, 4), 2.5);
        assert!(variance_of(&stats(0.5, 1.0, 5), 0, Estimator::Tm).unwrap().1);
    }

    #[test]
    fn simple_estimators() {
        assert_eq!(var_ts(1.5, 10, 10, 1), 3.0);
        assert!(((var_ts(1.0, 50, 50, 10)).sqrt() - 1.0488).abs() < 1e-4);
        assert!(((var_ts_ppd(1.0, 50, 50, 10)).sqrt() - 1.0954).abs() < 1e-4);
        assert!((var_ts(1.0, 20, 10, 5) - 2.2).abs() < 1e-12);
        assert!((var_tp(0.5, 1.0, 10, 10, 5) - 1.1).abs() < 1e-12);
        assert_eq!(var_tp(0.0, 1.0, 10, 10, 5), 1.0);
        assert!((var_tp(1.0, 2.0, 5, 10, 10) - 1.1).abs() < 1e-12);
        assert_eq!(var_ts_de(1.3, 10, 10, 4, 1.0), var_ts(1.3, 10, 10, 4));
        assert!((var_ts_de(1.0, 10, 10, 1_000_000, 22.0) - 22.0).abs() < 1e-4);
        assert_eq!(var_ts_de(1.0, 10, 10, 1, 2.0), 3.0);
    }

    #[test]
    fn adjusted_floor() {
        assert!(!var_tm_adjusted(1.2, 1.0, 10, 10, 5).1);
        assert!((var_tm_adjusted(1.2, 1.0, 10, 10, 5).0 - 0.44).abs() < 1e-12);
        assert_eq!(var_tm_adjusted(0.5, 1.0, 10, 10, 5), (1.0, true));
        assert_eq!(var_tm_adjusted(0.0, 1.0, 10, 10, 5), (1.0, true));
    }

    #[test]
    fn replicate_requirements_and_intervals() {
        let one = PerSynthesisEstimates::new(vec![vec![5.0]], vec![vec![4.0]], 10, 10).unwrap();
        let names = vec!["x".to_string()];
        for e in [Estimator::Tm, Estimator::TmAdjusted, Estimator::Tp] {
            assert!(matches!(combine(&one, &names, e, 0.95), Err(Error::NeedsReplicates(_))));
        }
        let ts = &combine(&one, &names, Estimator::Ts, 0.95).unwrap()[0];
        assert!((ts.se().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let (lo, hi) = ts.interval.unwrap();
        assert!((5.0 - lo - (hi - 5.0)).abs() < 1e-12);
        assert!((hi - 5.0 - 1.959964 * ts.se().unwrap()).abs() < 1e-5);
        let neg = PerSynthesisEstimates::new(vec![vec![1.0], vec![1.1]], vec![vec![1.0]; 2], 10, 10).unwrap();
        let tm = &combine(&neg, &names, Estimator::Tm, 0.95).unwrap()[0];
        assert!(tm.negative_variance && tm.interval.is_none());
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in [
            Estimator::Vbar,
            Estimator::Tm,
            Estimator::TmAdjusted,
            Estimator::Ts,
            Estimator::TsPpd,
            Estimator::Tp,
            Estimator::TsDe(2.5),
        ] {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
        assert!("TsDE(-1)".parse::<Estimator>().is_err());
        assert!("T".parse::<Estimator>().is_err());
    }
}
