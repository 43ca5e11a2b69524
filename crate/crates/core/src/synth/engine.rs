use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{FittedGenerator, MethodKind, MethodSpec, Response};
use crate::linalg::independent_columns;
use crate::rng::{child_stream, derive_seed, SynthRng};
use crate::synth::plan::{Step, SynthesisPlan};
use crate::table::{encode_design, write_csv, Cell, DataTable, DesignMatrix, Role, Schema, VariableKind};

/// A fitted model for one variable plus the design columns it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub generator: FittedGenerator,
    /// Design columns kept after dropping collinear ones; `None` keeps all.
    pub columns: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum VariableModel {
    Plain(FittedModel),
    /// Continuous variable with missing codes: missingness category first
    /// (0 = observed, `j` = missing code `j − 1`), then values.
    WithMissing {
        indicator: Option<FittedModel>,
        values: FittedModel,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedStep {
    pub step: Step,
    pub model: VariableModel,
    /// Method actually used for the values (after fallbacks).
    pub method: MethodKind,
    pub notes: Vec<String>,
}

/// All per-variable fits of a plan on one observed table.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPlan {
    pub steps: Vec<FittedStep>,
    pub warnings: Vec<String>,
}

impl FittedPlan {
    /// Same fits with posterior-predictive draws switched on or off for
    /// every variable, so both kinds of synthesis can share one fit.
    pub fn with_posterior_draws(&self, proper: bool) -> FittedPlan {
        let mut out = self.clone();
        for fs in &mut out.steps {
            fs.step.spec.proper = proper;
            match &mut fs.model {
                VariableModel::Plain(m) => m.generator.spec.proper = proper,
                VariableModel::WithMissing { indicator, values } => {
                    values.generator.spec.proper = proper;
                    if let Some(m) = indicator {
                        m.generator.spec.proper = proper;
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableReport {
    pub name: String,
    pub method: String,
    pub posterior_draw: bool,
    pub smoothing: bool,
    pub predictors: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub stratum: String,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

/// Run record written next to the synthetic files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub proper: bool,
    pub master_seed: u64,
    pub replicate_seeds: Vec<u64>,
    pub visit_sequence: Vec<String>,
    pub rules: Vec<String>,
    pub warnings: Vec<String>,
    /// Disclosure-control counts (never values).
    pub sdc: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub strata: Vec<StratumReport>,
    pub variables: Vec<VariableReport>,
}

impl Manifest {
    /// Manifest as TOML, preceded by a `# label` line when labelled.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(l) = &self.label {
            let _ = writeln!(out, "# {l}");
        }
        out.push_str(&toml::to_string(self).expect("manifest serializes"));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutput {
    pub replicates: Vec<DataTable>,
    pub manifest: Manifest,
}

impl SynthesisOutput {
    /// Write `{stem}_{l}.csv` for each replicate plus `{stem}_manifest.toml`.
    pub fn write_to_dir(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.replicates.len() + 1);
        for (l, t) in self.replicates.iter().enumerate() {
            let p = dir.join(format!("{stem}_{}.csv", l + 1));
            write_csv(t, &p)?;
            paths.push(p);
        }
        let p = dir.join(format!("{stem}_manifest.toml"));
        std::fs::write(&p, self.manifest.render())?;
        paths.push(p);
        Ok(paths)
    }
}

fn response_of(table: &DataTable, var: usize, rows: &[usize]) -> Result<Response> {
    let def = table.schema().variable(var);
    let col = table.column_at(var);
    let cells: Vec<Cell> = rows.iter().map(|&r| col[r]).collect();
    Response::from_cells(def, &cells)
}

/// Fit one model, dropping collinear design columns for parametric methods
/// and falling back to empirical sampling where a model is pointless.
fn fit_model(
    name: &str,
    spec: MethodSpec,
    y: &Response,
    design: DesignMatrix,
    notes: &mut Vec<String>,
    warnings: &mut Vec<String>,
) -> Result<(FittedModel, MethodKind)> {
    let mut spec = spec;
    if design.ncols() == 1 && spec.kind == MethodKind::Cart {
        spec.kind = MethodKind::Empirical;
        notes.push("no predictors: cart replaced by empirical sampling".into());
    } else if y.n_distinct() == 1 && spec.kind != MethodKind::Empirical {
        notes.push(format!(
            "single observed value: {} replaced by empirical sampling",
            spec.kind.name()
        ));
        spec.kind = MethodKind::Empirical;
    }
    let mut columns = None;
    let mut design = design;
    if spec.kind.is_parametric() {
        let (keep, dropped) = independent_columns(design.matrix());
        if !dropped.is_empty() {
            let names: Vec<&str> = dropped.iter().map(|&j| design.names()[j].as_str()).collect();
            notes.push(format!("collinear design columns dropped: {}", names.join(", ")));
            design = design.select_columns(&keep);
            columns = Some(keep);
        }
    }
    let generator = FittedGenerator::fit(spec, y, &design).map_err(|e| Error::Method {
        variable: name.to_string(),
        message: e.to_string(),
    })?;
    warnings.extend(generator.warnings.iter().map(|w| format!("{name}: {w}")));
    Ok((FittedModel { generator, columns }, spec.kind))
}

fn predictor_names<'a>(schema: &'a Schema, step: &Step) -> Vec<&'a str> {
    step.predictors
        .iter()
        .map(|&i| schema.variable(i).name.as_str())
        .collect()
}

fn fit_step(observed: &DataTable, step: &Step) -> Result<(FittedStep, Vec<String>)> {
    let schema = observed.schema();
    let def = schema.variable(step.var);
    let name = def.name.as_str();
    let mut excluded = vec![false; observed.n_rows()];
    for rule in &step.rules {
        for r in rule.matching_rows(observed) {
            excluded[r] = true;
        }
    }
    let rows: Vec<usize> = (0..observed.n_rows()).filter(|&r| !excluded[r]).collect();
    if rows.is_empty() {
        return Err(Error::Plan(format!("rules leave no rows to fit `{name}`")));
    }
    let full = encode_design(observed, &predictor_names(schema, step))?;
    let mut notes = Vec::new();
    let mut warnings = Vec::new();
    let n_excluded = observed.n_rows() - rows.len();
    if n_excluded > 0 {
        notes.push(format!("{n_excluded} rule-determined rows excluded from fitting"));
    }
    let split_missing = def.kind == VariableKind::Continuous && def.has_missing_codes();
    let (model, method) = if split_missing {
        let col = observed.column_at(step.var);
        let cats: Vec<u32> = rows
            .iter()
            .map(|&r| match col[r] {
                Cell::Missing(m) => u32::from(m) + 1,
                _ => 0,
            })
            .collect();
        let observed_rows: Vec<usize> = rows.iter().copied().filter(|&r| !col[r].is_missing()).collect();
        if observed_rows.is_empty() {
            return Err(Error::Plan(format!("all observed values of `{name}` are missing")));
        }
        let indicator = if observed_rows.len() == rows.len() {
            None
        } else {
            let n_categories = def.missing_codes.len() + 1;
            let kind = match step.spec.kind {
                MethodKind::Cart | MethodKind::Empirical => step.spec.kind,
                _ if n_categories == 2 => MethodKind::Logit,
                _ => MethodKind::Polyreg,
            };
            let spec = MethodSpec {
                kind,
                smoothing: false,
                ..step.spec
            };
            let y = Response::Categorical {
                codes: cats,
                n_categories,
            };
            let mut ind_notes = Vec::new();
            let (m, _) = fit_model(
                &format!("{name}.missing"),
                spec,
                &y,
                full.select_rows(&rows),
                &mut ind_notes,
                &mut warnings,
            )?;
            notes.extend(ind_notes.into_iter().map(|n| format!("missingness indicator: {n}")));
            Some(m)
        };
        let y = response_of(observed, step.var, &observed_rows)?;
        let (values, method) = fit_model(
            name,
            step.spec,
            &y,
            full.select_rows(&observed_rows),
            &mut notes,
            &mut warnings,
        )?;
        (VariableModel::WithMissing { indicator, values }, method)
    } else {
        let y = response_of(observed, step.var, &rows)?;
        let (m, method) = fit_model(name, step.spec, &y, full.select_rows(&rows), &mut notes, &mut warnings)?;
        (VariableModel::Plain(m), method)
    };
    Ok((
        FittedStep {
            step: step.clone(),
            model,
            method,
            notes,
        },
        warnings,
    ))
}

/// Fit every variable of `plan` on the observed table.
pub fn fit_observed(observed: &DataTable, plan: &SynthesisPlan) -> Result<FittedPlan> {
    let steps = plan.resolve(observed.schema())?;
    let max_pred = steps.iter().map(|s| s.predictors.len()).max().unwrap_or(0);
    if observed.n_rows() < (2 * max_pred).max(1) {
        return Err(Error::Plan(format!(
            "{} observed rows are too few for {} predictors",
            observed.n_rows(),
            max_pred
        )));
    }
    let fitted = steps
        .par_iter()
        .map(|s| fit_step(observed, s))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let steps = fitted
        .into_iter()
        .map(|(s, w)| {
            warnings.extend(w);
            s
        })
        .collect();
    Ok(FittedPlan { steps, warnings })
}

fn generate_with<R: Rng>(model: &FittedModel, design: &DesignMatrix, rng: &mut R) -> Result<Response> {
    let design = match &model.columns {
        Some(keep) => design.select_columns(keep),
        None => design.clone(),
    };
    Ok(if model.generator.spec.proper {
        model.generator.draw_posterior(rng)?.generate(&design, rng)
    } else {
        model.generator.generate(&design, rng)
    })
}

fn placeholder(def: &crate::table::VariableDef) -> Cell {
    match def.kind {
        VariableKind::Continuous => Cell::Num(0.0),
        VariableKind::Categorical if def.levels.is_empty() => Cell::Missing(0),
        VariableKind::Categorical => Cell::Level(0),
    }
}

fn replicate(observed: &DataTable, fitted: &FittedPlan, k: usize, resample: bool, seed: u64) -> Result<DataTable> {
    let schema = observed.schema();
    let n = observed.n_rows();
    let x_rows: Option<Vec<usize>> = if k == n {
        None
    } else if resample {
        let mut rng = child_stream(seed, schema.len() as u64);
        Some((0..k).map(|_| rng.random_range(0..n)).collect())
    } else {
        None
    };
    let mut columns = Vec::with_capacity(schema.len());
    for (i, def) in schema.variables().iter().enumerate() {
        let src = observed.column_at(i);
        columns.push(match (def.role, &x_rows) {
            (Role::Synthesize, _) => vec![placeholder(def); k],
            (_, Some(rows)) => rows.iter().map(|&r| src[r]).collect(),
            (_, None) if k == n => src.to_vec(),
            (_, None) => {
                if src.iter().all(|c| *c == src[0]) && n > 0 {
                    vec![src[0]; k]
                } else {
                    return Err(Error::Plan(format!(
                        "{k} synthetic rows requested for {n} observed rows, but unchanged variable `{}` \
                         varies and no resampling policy is set",
                        def.name
                    )));
                }
            }
        });
    }
    let mut work = DataTable::new(observed.schema_arc().clone(), columns)?;
    for fs in &fitted.steps {
        let var = fs.step.var;
        let def = schema.variable(var);
        let mut rng: SynthRng = child_stream(seed, var as u64);
        let design = encode_design(&work, &predictor_names(schema, &fs.step))?;
        let mut cells = match &fs.model {
            VariableModel::Plain(m) => generate_with(m, &design, &mut rng)?.to_cells(def),
            VariableModel::WithMissing { indicator, values } => {
                let cats = match indicator {
                    Some(m) => match generate_with(m, &design, &mut rng)? {
                        Response::Categorical { codes, .. } => codes,
                        Response::Continuous(_) => unreachable!("indicator is categorical"),
                    },
                    None => vec![0; k],
                };
                let present: Vec<usize> = (0..k).filter(|&r| cats[r] == 0).collect();
                let mut cells: Vec<Cell> = cats
                    .iter()
                    .map(|&c| {
                        if c == 0 {
                            Cell::Num(0.0)
                        } else {
                            Cell::Missing((c - 1) as u16)
                        }
                    })
                    .collect();
                if !present.is_empty() {
                    let vals = generate_with(values, &design.select_rows(&present), &mut rng)?;
                    for (&r, cell) in present.iter().zip(vals.to_cells(def)) {
                        cells[r] = cell;
                    }
                }
                cells
            }
        };
        for rule in &fs.step.rules {
            for r in rule.matching_rows(&work) {
                cells[r] = rule.value;
            }
        }
        work.replace_column(var, cells)?;
    }
    Ok(work)
}

fn manifest(observed: &DataTable, plan: &SynthesisPlan, fitted: &FittedPlan, k: usize, seeds: Vec<u64>) -> Manifest {
    let schema = observed.schema();
    Manifest {
        label: None,
        n: observed.n_rows(),
        k,
        m: plan.m,
        proper: plan.proper,
        master_seed: plan.seed,
        replicate_seeds: seeds,
        visit_sequence: fitted
            .steps
            .iter()
            .map(|s| schema.variable(s.step.var).name.clone())
            .collect(),
        rules: plan.rules.iter().map(ToString::to_string).collect(),
        warnings: fitted.warnings.clone(),
        sdc: Vec::new(),
        strata: Vec::new(),
        variables: fitted
            .steps
            .iter()
            .map(|s| VariableReport {
                name: schema.variable(s.step.var).name.clone(),
                method: s.method.name().to_string(),
                posterior_draw: s.step.spec.proper,
                smoothing: s.step.spec.smoothing,
                predictors: predictor_names(schema, &s.step).into_iter().map(String::from).collect(),
                notes: s.notes.clone(),
            })
            .collect(),
    }
}

/// Synthesize `plan.m` replicates from already fitted models.
pub fn synthesize_fitted(observed: &DataTable, plan: &SynthesisPlan, fitted: &FittedPlan) -> Result<SynthesisOutput> {
    let k = plan.k.unwrap_or(observed.n_rows());
    let seeds: Vec<u64> = (0..plan.m as u64).map(|l| derive_seed(plan.seed, l)).collect();
    let replicates = seeds
        .par_iter()
        .map(|&s| replicate(observed, fitted, k, plan.resample_unchanged, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthesisOutput {
        replicates,
        manifest: manifest(observed, plan, fitted, k, seeds),
    })
}

/// Sequential conditional synthesis of `plan.m` replicates.
pub fn synthesize(observed: &DataTable, plan: &SynthesisPlan) -> Result<SynthesisOutput> {
    let fitted = fit_observed(observed, plan)?;
    synthesize_fitted(observed, plan, &fitted)
}

/// Synthesize one variable with missing codes: missingness category first,
/// then values for the rows drawn as observed. `synthetic` supplies the
/// predictor values for the new rows. Returns the 0/1 indicator and the
/// value cells (missing rows carry their missing marker).
pub fn synthesize_missingness(
    observed: &DataTable,
    synthetic: &DataTable,
    var: &str,
    predictors: &[&str],
    spec: MethodSpec,
    rng: &mut SynthRng,
) -> Result<(Vec<u8>, Vec<Cell>)> {
    let schema = observed.schema();
    let idx = schema.index_of(var)?;
    let def = schema.variable(idx);
    if def.kind != VariableKind::Continuous || !def.has_missing_codes() {
        return Err(Error::invalid(format!(
            "`{var}` is not a continuous variable with missing codes"
        )));
    }
    let step = Step {
        var: idx,
        predictors: predictors.iter().map(|p| schema.index_of(p)).collect::<Result<_>>()?,
        spec,
        rules: Vec::new(),
    };
    let (fs, _) = fit_step(observed, &step)?;
    let VariableModel::WithMissing { indicator, values } = &fs.model else {
        unreachable!("continuous variables with missing codes split")
    };
    let k = synthetic.n_rows();
    let design = encode_design(synthetic, predictors)?;
    let cats = match indicator {
        Some(m) => match generate_with(m, &design, rng)? {
            Response::Categorical { codes, .. } => codes,
            Response::Continuous(_) => unreachable!(),
        },
        None => vec![0; k],
    };
    let present: Vec<usize> = (0..k).filter(|&r| cats[r] == 0).collect();
    let mut cells: Vec<Cell> = cats
        .iter()
        .map(|&c| {
            if c == 0 {
                Cell::Num(0.0)
            } else {
                Cell::Missing((c - 1) as u16)
            }
        })
        .collect();
    if !present.is_empty() {
        let vals = generate_with(values, &design.select_rows(&present), rng)?;
        for (&r, cell) in present.iter().zip(vals.to_cells(def)) {
            cells[r] = cell;
        }
    }
    Ok((cats.iter().map(|&c| u8::from(c != 0)).collect(), cells))
}

/// Run `plan` independently within each stratum of `stratum_var` and stack
/// the results. `sizes` overrides per-stratum synthetic sizes by label.
pub fn synthesize_stratified(
    observed: &DataTable,
    plan: &SynthesisPlan,
    stratum_var: &str,
    sizes: &BTreeMap<String, usize>,
) -> Result<SynthesisOutput> {
    let schema = observed.schema();
    let s_idx = schema.index_of(stratum_var)?;
    let s_def = schema.variable(s_idx);
    if s_def.role != Role::Stratum {
        return Err(Error::Plan(format!("`{stratum_var}` does not have role stratum")));
    }
    let n_cat = s_def.n_categories().max(1);
    let steps = plan.resolve(schema)?;
    let min_rows = steps
        .iter()
        .map(|s| 2 * s.spec.cart.min_leaf_size)
        .max()
        .unwrap_or(2)
        .max(2);
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    match s_def.kind {
        VariableKind::Categorical => {
            for c in 0..n_cat {
                order.push(s_def.category_label(c).to_string());
            }
        }
        VariableKind::Continuous => {}
    }
    for r in 0..observed.n_rows() {
        let label = observed.render(s_idx, r);
        if !groups.contains_key(&label) && s_def.kind == VariableKind::Continuous {
            order.push(label.clone());
        }
        groups.entry(label).or_default().push(r);
    }
    if s_def.kind == VariableKind::Continuous {
        order.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap_or(0.0)
                .total_cmp(&b.parse::<f64>().unwrap_or(0.0))
        });
    }
    if let Some(unknown) = sizes.keys().find(|k| !order.contains(k)) {
        return Err(Error::Plan(format!(
            "synthetic size given for unknown stratum `{unknown}`"
        )));
    }
    let mut parts: Vec<Vec<DataTable>> = Vec::new();
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    let mut variables = Vec::new();
    for (h, label) in order.iter().enumerate() {
        let rows = groups.get(label).map(Vec::as_slice).unwrap_or(&[]);
        if rows.is_empty() {
            return Err(Error::Plan(format!("stratum `{label}` has no observed rows")));
        }
        if rows.len() < min_rows {
            return Err(Error::Plan(format!(
                "stratum `{label}` has {} rows, at least {min_rows} are needed",
                rows.len()
            )));
        }
        let sub = observed.select_rows(rows);
        let seed = derive_seed(plan.seed, h as u64);
        let k = sizes.get(label).copied().unwrap_or(rows.len());
        let sub_plan = SynthesisPlan {
            seed,
            k: Some(k),
            ..plan.clone()
        };
        let out = synthesize(&sub, &sub_plan)?;
        warnings.extend(out.manifest.warnings.iter().map(|w| format!("stratum {label}: {w}")));
        if variables.is_empty() {
            variables = out.manifest.variables.clone();
        }
        for v in &out.manifest.variables {
            for note in &v.notes {
                warnings.push(format!("stratum {label}: {}: {note}", v.name));
            }
        }
        reports.push(StratumReport {
            stratum: label.clone(),
            n: rows.len(),
            k,
            seed,
        });
        parts.push(out.replicates);
    }
    let replicates = (0..plan.m)
        .map(|l| DataTable::concat(&parts.iter().map(|p| p[l].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    for v in &mut variables {
        v.notes.clear();
    }
    let k_total = reports.iter().map(|r| r.k).sum();
    Ok(SynthesisOutput {
        replicates,
        manifest: Manifest {
            label: None,
            n: observed.n_rows(),
            k: k_total,
            m: plan.m,
            proper: plan.proper,
            master_seed: plan.seed,
            replicate_seeds: Vec::new(),
            visit_sequence: steps.iter().map(|s| schema.variable(s.var).name.clone()).collect(),
            rules: plan.rules.iter().map(ToString::to_string).collect(),
            warnings,
            sdc: Vec::new(),
            strata: reports,
            variables,
        },
    })
}
