//! Observed-versus-synthetic comparisons for the data holder.

use rayon::prelude::*;
use serde::Serialize;

use crate::combine::{fit_model, normal_quantile, pool, AnalysisSpec, PerSynthesisEstimates};
use crate::error::{Error, Result};
use crate::table::{Cell, DataTable, VariableKind};

/// Equal-width bins used when no width is given.
pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// `DEFAULT_BINS` equal-width bins over the pooled range.
    Default,
    Count(usize),
    /// Fixed width, anchored at a multiple of the width.
    Width(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalComparison {
    pub variable: String,
    /// Category labels or bin intervals; missing codes come last.
    pub bins: Vec<String>,
    pub observed: Vec<f64>,
    /// Averaged over replicates.
    pub synthetic: Vec<f64>,
    pub differences: Vec<f64>,
    pub max_abs_difference: f64,
}

fn proportions(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

pub fn compare_marginals(
    observed: &DataTable,
    replicates: &[DataTable],
    variable: &str,
    binning: Binning,
) -> Result<MarginalComparison> {
    if replicates.is_empty() {
        return Err(Error::invalid("no synthetic replicates to compare"));
    }
    let idx = observed.schema().index_of(variable)?;
    let def = observed.schema().variable(idx);
    for r in replicates {
        if r.schema() != observed.schema() {
            return Err(Error::invalid("replicate schema differs from the observed schema"));
        }
    }
    let n_codes = def.missing_codes.len();
    let (labels, assign): (Vec<String>, Box<dyn Fn(Cell) -> usize + Sync>) = match def.kind {
        VariableKind::Categorical => {
            let n_levels = def.levels.len();
            let labels = (0..def.n_categories())
                .map(|c| def.category_label(c).to_string())
                .collect();
            (labels, Box::new(move |c: Cell| c.category(n_levels).unwrap_or(0)))
        }
        VariableKind::Continuous => {
            let (lo, hi) = std::iter::once(observed)
                .chain(replicates)
                .flat_map(|t| t.column_at(idx).iter().filter_map(Cell::as_num))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let (start, width, n_bins) = if lo > hi {
                (0.0, 1.0, 1)
            } else {
                match binning {
                    Binning::Width(w) if w > 0.0 && w.is_finite() => {
                        let start = (lo / w).floor() * w;
                        (start, w, (((hi - start) / w).floor() as usize + 1).max(1))
                    }
                    Binning::Width(w) => return Err(Error::invalid(format!("bin width must be positive, got {w}"))),
                    Binning::Count(0) => return Err(Error::invalid("bin count must be positive")),
                    Binning::Count(b) if hi > lo => (lo, (hi - lo) / b as f64, b),
                    Binning::Default if hi > lo => (lo, (hi - lo) / DEFAULT_BINS as f64, DEFAULT_BINS),
                    _ => (lo, 1.0, 1),
                }
            };
            let mut labels: Vec<String> = (0..n_bins)
                .map(|b| {
                    let a = start + b as f64 * width;
                    let close = if b + 1 == n_bins { "]" } else { ")" };
                    format!("[{a},{}{close}", a + width)
                })
                .collect();
            labels.extend(def.missing_codes.iter().map(|m| format!("missing:{m}")));
            (
                labels,
                Box::new(move |c: Cell| match c {
                    Cell::Num(x) => (((x - start) / width).floor().max(0.0) as usize).min(n_bins - 1),
                    Cell::Missing(m) => n_bins + m as usize,
                    Cell::Level(_) => 0,
                }),
            )
        }
    };
    let _ = n_codes;
    let count = |t: &DataTable| {
        let mut c = vec![0usize; labels.len()];
        for &cell in t.column_at(idx) {
            c[assign(cell)] += 1;
        }
        proportions(&c)
    };
    let obs = count(observed);
    let per: Vec<Vec<f64>> = replicates.par_iter().map(count).collect();
    let syn: Vec<f64> = (0..labels.len())
        .map(|j| per.iter().map(|p| p[j]).sum::<f64>() / per.len() as f64)
        .collect();
    let differences: Vec<f64> = syn.iter().zip(&obs).map(|(s, o)| s - o).collect();
    let max_abs_difference = differences.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(MarginalComparison {
        variable: variable.to_string(),
        bins: labels,
        observed: obs,
        synthetic: syn,
        differences,
        max_abs_difference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub observed: f64,
    pub observed_se: f64,
    /// `q̄_M`.
    pub synthetic: f64,
    /// `√v̄_M`.
    pub synthetic_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(q̄_M − q̂_obs) / SE_obs`.
    pub z: f64,
    /// `(q̄_M − q̂_obs) / (SE_obs·√(1/M + 1))`.
    pub bias_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientComparison {
    pub formula: String,
    pub m: usize,
    pub rows: Vec<CoefficientRow>,
}

pub fn compare_coefficients(
    observed: &DataTable,
    replicates: &[DataTable],
    spec: &AnalysisSpec,
    ci_level: f64,
) -> Result<CoefficientComparison> {
    if replicates.is_empty() {
        return Err(Error::invalid("no synthetic replicates to compare"));
    }
    let z = normal_quantile(ci_level)?;
    let obs = fit_model(observed, spec)?;
    let fits = replicates
        .par_iter()
        .enumerate()
        .map(|(l, t)| {
            fit_model(t, spec).map_err(|e| Error::ReplicateFit {
                replicate: l + 1,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(l) = fits.iter().position(|f| f.names != obs.names) {
        return Err(Error::ReplicateFit {
            replicate: l + 1,
            source: Box::new(Error::invalid("model columns differ from the observed fit")),
        });
    }
    let m = fits.len();
    let per = PerSynthesisEstimates::new(
        fits.iter().map(|f| f.coef.clone()).collect(),
        fits.iter().map(|f| f.variance.clone()).collect(),
        replicates[0].n_rows(),
        observed.n_rows(),
    )?;
    let stats = pool(&per);
    let scale = (1.0 / m as f64 + 1.0).sqrt();
    let rows = obs
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se_obs = obs.variance[j].sqrt();
            let q = stats.qbar[j];
            let se_syn = stats.vbar[j].sqrt();
            let d = q - obs.coef[j];
            let ratio = |den: f64| if d == 0.0 { 0.0 } else { d / den };
            CoefficientRow {
                name: name.clone(),
                observed: obs.coef[j],
                observed_se: se_obs,
                synthetic: q,
                synthetic_se: se_syn,
                ci_low: q - z * se_syn,
                ci_high: q + z * se_syn,
                z: ratio(se_obs),
                bias_z: ratio(se_obs * scale),
            }
        })
        .collect();
    Ok(CoefficientComparison {
        formula: spec.formula.source.clone(),
        m,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::table::{ColumnInput, Schema, VariableDef};
    use rand::Rng;

    fn table(n: usize, seed: u64) -> DataTable {
        let mut rng = stream(seed);
        let s = Schema::new(vec![
            VariableDef::continuous("age").with_missing(["-999"]),
            VariableDef::categorical("sex", ["M", "F", "X"]),
            VariableDef::continuous("y"),
        ])
        .unwrap();
        let age: Vec<f64> = (0..n)
            .map(|i| {
                if i % 50 == 0 {
                    -999.0
                } else {
                    rng.random_range(0.0..90.0)
                }
            })
            .collect();
        let sex: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "M" } else { "F" }).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        DataTable::from_columns(
            s,
            vec![
                ColumnInput::Numbers(age),
                ColumnInput::labels(sex),
                ColumnInput::Numbers(y),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identical_copies_give_zero_differences() {
        let t = table(300, 1);
        for v in ["age", "sex"] {
            let c = compare_marginals(&t, &[t.clone(), t.clone()], v, Binning::Default).unwrap();
            assert_eq!(c.max_abs_difference, 0.0);
            assert!((c.observed.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let c = compare_marginals(&t, std::slice::from_ref(&t), "age", Binning::Default).unwrap();
        assert_eq!(c.bins.len(), DEFAULT_BINS + 1);
        assert_eq!(c.bins.last().unwrap(), "missing:-999");
        assert!((c.observed.last().unwrap() - 6.0 / 300.0).abs() < 1e-12);
        let sex = compare_marginals(&t, std::slice::from_ref(&t), "sex", Binning::Default).unwrap();
        assert_eq!(sex.bins, ["M", "F", "X"]);
        assert_eq!(sex.synthetic[2], 0.0);
        assert!(compare_marginals(&t, &[], "sex", Binning::Default).is_err());
    }

    #[test]
    fn width_binning_and_row_order() {
        let t = table(300, 2);
        let c = compare_marginals(&t, &[table(300, 3)], "age", Binning::Width(5.0)).unwrap();
        assert_eq!(c.bins[0], "[0,5)");
        assert_eq!(c.bins.len(), 18 + 1);
        let rows: Vec<usize> = (0..300).rev().collect();
        let r = compare_marginals(&t.select_rows(&rows), &[table(300, 3)], "age", Binning::Width(5.0)).unwrap();
        assert_eq!(r, c);
    }

    #[test]
    fn copies_of_observed_have_zero_z() {
        let t = table(200, 4);
        let spec = AnalysisSpec::parse("y ~ age + sex", None).unwrap();
        let mut broken = t.clone();
        broken.replace_column(1, vec![Cell::Level(0); 200]).unwrap();
        let c = compare_coefficients(&t, &[t.clone(), t.clone()], &spec, 0.95).unwrap();
        assert!(c.rows.iter().all(|r| r.z == 0.0 && r.bias_z == 0.0));
        // intercept, age, age.missing, sex=F (sex=X is never observed)
        assert_eq!(c.rows.len(), 4);
        assert!(compare_coefficients(&t, &[broken], &spec, 0.95).is_err());
    }
}
