//! Analysis models: `y ~ a + b + a:b` formulas fitted by least squares or
//! logistic regression.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::estimators::{combine, CombinedEstimate, Estimator, PerSynthesisEstimates};
use crate::error::{Error, Result};
use crate::fit::{fit_logit, fit_ols};
use crate::table::{encode_design, Cell, DataTable, DesignMatrix, TermKind, VariableKind, INTERCEPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    pub response: String,
    /// For a categorical response, the level counted as success.
    pub success: Option<String>,
    /// Terms as lists of variables; singletons are main effects.
    pub terms: Vec<Vec<String>>,
    pub source: String,
}

impl Formula {
    pub fn parse(src: &str) -> Result<Formula> {
        let err = |m: &str| Error::Formula {
            formula: src.to_string(),
            message: m.to_string(),
        };
        let (lhs, rhs) = src.split_once('~').ok_or_else(|| err("missing `~`"))?;
        let lhs = lhs.trim();
        let (response, success) = match lhs.split_once('=') {
            Some((v, l)) => (
                v.trim().to_string(),
                Some(l.trim_start_matches('=').trim().trim_matches(['"', '\'']).to_string()),
            ),
            None => (lhs.to_string(), None),
        };
        if response.is_empty() || success.as_deref() == Some("") {
            return Err(err("empty response"));
        }
        let mut terms: Vec<Vec<String>> = Vec::new();
        for chunk in rhs.split('+') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                return Err(err("empty term"));
            }
            if chunk == "1" {
                continue;
            }
            // a*b*c expands to every non-empty subset, a:b:c is one term
            let star: Vec<Vec<String>> = chunk
                .split('*')
                .map(|f| {
                    let vars: Vec<String> = f.split(':').map(|v| v.trim().to_string()).collect();
                    if vars.iter().any(|v| v.is_empty() || v.contains(char::is_whitespace)) {
                        Err(err(&format!("malformed term `{chunk}`")))
                    } else {
                        Ok(vars)
                    }
                })
                .collect::<Result<_>>()?;
            for mask in 1..(1u32 << star.len()) {
                let mut t: Vec<String> = Vec::new();
                for (i, f) in star.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        for v in f {
                            if !t.contains(v) {
                                t.push(v.clone());
                            }
                        }
                    }
                }
                if !terms.iter().any(|e| same_set(e, &t)) {
                    terms.push(t);
                }
            }
        }
        if terms.iter().flatten().any(|v| *v == response) {
            return Err(err("response appears among the predictors"));
        }
        terms.sort_by_key(Vec::len);
        Ok(Formula {
            response,
            success,
            terms,
            source: src.trim().to_string(),
        })
    }

    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for v in self.terms.iter().flatten() {
            if !out.contains(&v.as_str()) {
                out.push(v);
            }
        }
        out
    }
}

fn same_set(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

/// An analysis model over schema variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSpec {
    pub formula: Formula,
    /// `None` picks logistic for categorical responses, linear otherwise.
    pub family: Option<Family>,
}

impl AnalysisSpec {
    pub fn parse(formula: &str, family: Option<Family>) -> Result<AnalysisSpec> {
        Ok(AnalysisSpec {
            formula: Formula::parse(formula)?,
            family,
        })
    }

    pub fn family_for(&self, table: &DataTable) -> Result<Family> {
        let def = table.schema().get(&self.formula.response)?;
        Ok(self.family.unwrap_or(match def.kind {
            VariableKind::Categorical => Family::Logistic,
            VariableKind::Continuous => Family::Linear,
        }))
    }
}

/// Coefficients and their estimated variances from one table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub variance: Vec<f64>,
    pub n: usize,
    pub warnings: Vec<String>,
}

impl ModelFit {
    pub fn se(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

/// Design with interaction columns built from the main-effect encoding.
/// All-zero columns (absent categories) are left out.
pub fn model_design(table: &DataTable, formula: &Formula) -> Result<DesignMatrix> {
    let vars = formula.variables();
    let base = encode_design(table, &vars)?;
    let columns_of = |v: &str| -> Vec<usize> {
        base.terms()
            .iter()
            .filter(|t| t.variable == v && !matches!(t.kind, TermKind::Intercept))
            .flat_map(|t| t.columns.iter().copied())
            .collect()
    };
    let n = table.n_rows();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut names = vec![INTERCEPT.to_string()];
    for term in &formula.terms {
        // cartesian product of the columns of each factor
        let mut acc: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; n])];
        for v in term {
            let mut next = Vec::new();
            for (name, vals) in &acc {
                for c in columns_of(v) {
                    let label = &base.names()[c];
                    let joined = if name.is_empty() {
                        label.clone()
                    } else {
                        format!("{name}:{label}")
                    };
                    next.push((joined, (0..n).map(|i| vals[i] * base.get(i, c)).collect()));
                }
            }
            acc = next;
        }
        // empty categories give all-zero columns, which carry no information
        for (name, vals) in acc.into_iter().filter(|(_, v)| v.iter().any(|&x| x != 0.0)) {
            names.push(name);
            cols.push(vals);
        }
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    DesignMatrix::from_matrix(x, names)
}

/// Fit `spec` to one table.
pub fn fit_model(table: &DataTable, spec: &AnalysisSpec) -> Result<ModelFit> {
    let f = &spec.formula;
    let family = spec.family_for(table)?;
    let idx = table.schema().index_of(&f.response)?;
    let def = table.schema().variable(idx);
    let col = table.column_at(idx);
    let design = model_design(table, f)?;
    let bad = |m: String| Error::Formula {
        formula: f.source.clone(),
        message: m,
    };
    match family {
        Family::Linear => {
            if def.kind != VariableKind::Continuous || f.success.is_some() {
                return Err(bad(format!(
                    "linear model needs a continuous response, `{}` is not",
                    def.name
                )));
            }
            let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| !col[r].is_missing()).collect();
            let y: Vec<f64> = rows.iter().map(|&r| col[r].as_num().unwrap_or(f64::NAN)).collect();
            let x = design.select_rows(&rows);
            let fit = fit_ols(&y, &x)?;
            let variance = (0..fit.coef.len()).map(|j| fit.xtx_inv[(j, j)] * fit.sigma2).collect();
            Ok(ModelFit {
                names: x.names().to_vec(),
                coef: fit.coef.iter().copied().collect(),
                variance,
                n: rows.len(),
                warnings: Vec::new(),
            })
        }
        Family::Logistic => {
            let y: Vec<u32> = match (def.kind, &f.success) {
                (VariableKind::Categorical, Some(level)) => {
                    let target = def
                        .level_index(level)
                        .map(|l| l as usize)
                        .or_else(|| def.missing_index(level).map(|m| def.levels.len() + m as usize))
                        .ok_or_else(|| bad(format!("`{level}` is not a category of `{}`", def.name)))?;
                    col.iter()
                        .map(|c| u32::from(c.category(def.levels.len()) == Some(target)))
                        .collect()
                }
                (VariableKind::Categorical, None) if def.n_categories() == 2 => col
                    .iter()
                    .map(|c| u32::from(c.category(def.levels.len()) != Some(0)))
                    .collect(),
                (VariableKind::Categorical, None) => {
                    return Err(bad(format!(
                        "`{}` has more than two categories; name the success level as `{}=level`",
                        def.name, def.name
                    )))
                }
                (VariableKind::Continuous, _) => col
                    .iter()
                    .map(|c| match c {
                        Cell::Num(x) if *x == 0.0 || *x == 1.0 => Ok(*x as u32),
                        _ => Err(bad(format!("logistic response `{}` must be 0/1", def.name))),
                    })
                    .collect::<Result<_>>()?,
            };
            let fit = fit_logit(&y, &design)?;
            let p = fit.coef.nrows();
            Ok(ModelFit {
                names: design.names().to_vec(),
                coef: fit.coef.column(0).iter().copied().collect(),
                variance: (0..p).map(|j| fit.covariance[(j, j)].max(0.0)).collect(),
                n: y.len(),
                warnings: fit.warnings.clone(),
            })
        }
    }
}

/// Result of analysing synthetic replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub estimates: Vec<CombinedEstimate>,
    pub per: PerSynthesisEstimates,
    pub warnings: Vec<String>,
}

/// Fit the model to every replicate and combine under `est`.
pub fn analyze_synthetic(
    replicates: &[DataTable],
    spec: &AnalysisSpec,
    est: Estimator,
    ci_level: f64,
    n_observed: usize,
) -> Result<Analysis> {
    let first = replicates
        .first()
        .ok_or_else(|| Error::invalid("no synthetic replicates"))?;
    if est.needs_replicates() && replicates.len() < 2 {
        return Err(Error::NeedsReplicates(match est {
            Estimator::Tm => "TM",
            Estimator::TmAdjusted => "TM_adj",
            _ => "Tp",
        }));
    }
    if replicates.iter().any(|r| r.schema() != first.schema()) {
        return Err(Error::invalid("replicates do not share one schema"));
    }
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
    for (l, f) in fits.iter().enumerate() {
        if f.names != fits[0].names {
            return Err(Error::ReplicateFit {
                replicate: l + 1,
                source: Box::new(Error::invalid("model columns differ from the first replicate")),
            });
        }
    }
    let warnings = fits
        .iter()
        .enumerate()
        .flat_map(|(l, f)| f.warnings.iter().map(move |w| format!("replicate {}: {w}", l + 1)))
        .collect();
    let k = first.n_rows();
    let names = fits[0].names.clone();
    let per = PerSynthesisEstimates::new(
        fits.iter().map(|f| f.coef.clone()).collect(),
        fits.into_iter().map(|f| f.variance).collect(),
        k,
        n_observed,
    )?;
    Ok(Analysis {
        estimates: combine(&per, &names, est, ci_level)?,
        per,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::table::{ColumnInput, Schema, VariableDef};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn formula_parsing() {
        let f = Formula::parse("ILL9=No ~ AGE9 + SEX9*MSTAT9").unwrap();
        assert_eq!(f.response, "ILL9");
        assert_eq!(f.success.as_deref(), Some("No"));
        assert_eq!(
            f.terms,
            vec![vec!["AGE9"], vec!["SEX9"], vec!["MSTAT9"], vec!["SEX9", "MSTAT9"]]
        );
        assert_eq!(
            Formula::parse("y ~ a:b + a").unwrap().terms,
            vec![vec!["a"], vec!["a", "b"]]
        );
        assert_eq!(Formula::parse("y ~ 1").unwrap().terms, Vec::<Vec<String>>::new());
        for bad in ["y a", "~ a", "y ~ a +", "y ~ y", "y ~ a b"] {
            assert!(Formula::parse(bad).is_err(), "{bad}");
        }
    }

    fn table(n: usize) -> DataTable {
        let mut rng = stream(3);
        let schema = Schema::new(vec![
            VariableDef::continuous("x"),
            VariableDef::categorical("g", ["a", "b", "c"]),
            VariableDef::continuous("y"),
            VariableDef::categorical("ill", ["Yes", "No"]),
        ])
        .unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let g: Vec<&str> = (0..n).map(|i| ["a", "b", "c"][i % 3]).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&g)
            .map(|(x, g)| 1.0 + 2.0 * x + if *g == "c" { 1.5 * x } else { 0.0 } + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ill: Vec<&str> = x
            .iter()
            .map(|x| {
                if rng.random::<f64>() < 1.0 / (1.0 + (-(0.5 + x)).exp()) {
                    "No"
                } else {
                    "Yes"
                }
            })
            .collect();
        DataTable::from_columns(
            schema,
            vec![
                ColumnInput::Numbers(x),
                ColumnInput::labels(g),
                ColumnInput::Numbers(y),
                ColumnInput::labels(ill),
            ],
        )
        .unwrap()
    }

    #[test]
    fn interaction_design_columns() {
        let t = table(30);
        let d = model_design(&t, &Formula::parse("y ~ x*g").unwrap()).unwrap();
        assert_eq!(d.names(), ["(Intercept)", "x", "g=b", "g=c", "x:g=b", "x:g=c"]);
        for i in 0..30 {
            assert_eq!(d.get(i, 5), d.get(i, 1) * d.get(i, 3));
        }
    }

    #[test]
    fn linear_and_logistic_fits() {
        let t = table(6000);
        let lin = fit_model(&t, &AnalysisSpec::parse("y ~ x*g", None).unwrap()).unwrap();
        let slope_c = lin.coef[5];
        assert!((slope_c - 1.5).abs() < 4.0 * lin.variance[5].sqrt());
        let logit = fit_model(&t, &AnalysisSpec::parse("ill=No ~ x", None).unwrap()).unwrap();
        assert!((logit.coef[1] - 1.0).abs() < 4.0 * logit.variance[1].sqrt());
        let implicit = fit_model(&t, &AnalysisSpec::parse("ill ~ x", None).unwrap()).unwrap();
        assert_eq!(implicit.coef, logit.coef);
        assert!(fit_model(&t, &AnalysisSpec::parse("g ~ x", None).unwrap()).is_err());
        assert!(fit_model(&t, &AnalysisSpec::parse("g ~ x", Some(Family::Linear)).unwrap()).is_err());
    }

    #[test]
    fn identical_replicates_have_zero_between_variance() {
        let t = table(200);
        let spec = AnalysisSpec::parse("y ~ x + g", None).unwrap();
        let reps = vec![t.clone(), t.clone(), t.clone()];
        let a = analyze_synthetic(&reps, &spec, Estimator::Tp, 0.95, 200).unwrap();
        let single = fit_model(&t, &spec).unwrap();
        for (e, (q, v)) in a.estimates.iter().zip(single.coef.iter().zip(&single.variance)) {
            assert!((e.estimate - q).abs() < 1e-12);
            assert!((e.variance - v).abs() < 1e-12 * v.max(1.0));
        }
        assert!(analyze_synthetic(&reps[..1], &spec, Estimator::Tm, 0.95, 200).is_err());
        let vb = analyze_synthetic(&reps[..1], &spec, Estimator::Vbar, 0.95, 200).unwrap();
        assert_eq!(vb.estimates[1].se().unwrap(), single.se()[1]);
    }

    #[test]
    fn failing_replicate_is_named() {
        let t = table(60);
        let mut broken = t.clone();
        broken.replace_column(1, vec![Cell::Level(0); 60]).unwrap();
        let spec = AnalysisSpec::parse("y ~ x + g", None).unwrap();
        match analyze_synthetic(&[t, broken], &spec, Estimator::Ts, 0.95, 60) {
            Err(Error::ReplicateFit { replicate, .. }) => assert_eq!(replicate, 2),
            r => panic!("{r:?}"),
        }
    }
}
