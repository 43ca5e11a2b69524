use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{MethodKind, MethodSpec};
use crate::synth::rules::{CompiledRule, Rule};
use crate::table::{Role, Schema};

/// Specification of a sequential synthesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisPlan {
    /// Variables to synthesize, in order; empty means schema order.
    pub visit_sequence: Vec<String>,
    /// Predictors per variable. Variables without an entry use every earlier
    /// visited variable plus the keep-unchanged variables.
    pub predictors: BTreeMap<String, Vec<String>>,
    /// Methods per variable; others use `default_method`.
    pub methods: BTreeMap<String, MethodSpec>,
    pub default_method: MethodKind,
    pub rules: Vec<Rule>,
    /// Generate every variable from a posterior-predictive draw.
    pub proper: bool,
    /// Number of replicates.
    pub m: usize,
    /// Rows per replicate; `None` means the observed row count.
    pub k: Option<usize>,
    pub seed: u64,
    /// When `k ≠ n`, resample rows of the unchanged variables with
    /// replacement. Without it only constant unchanged columns are allowed.
    pub resample_unchanged: bool,
}

impl Default for SynthesisPlan {
    fn default() -> Self {
        SynthesisPlan {
            visit_sequence: Vec::new(),
            predictors: BTreeMap::new(),
            methods: BTreeMap::new(),
            default_method: MethodKind::Cart,
            rules: Vec::new(),
            proper: false,
            m: 1,
            k: None,
            seed: 0,
            resample_unchanged: false,
        }
    }
}

/// One resolved synthesis step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Schema index of the target.
    pub var: usize,
    /// Schema indices of predictors.
    pub predictors: Vec<usize>,
    pub spec: MethodSpec,
    pub rules: Vec<CompiledRule>,
}

impl SynthesisPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_method(mut self, var: &str, spec: MethodSpec) -> Self {
        self.methods.insert(var.to_string(), spec);
        self
    }

    pub fn with_predictors<S: AsRef<str>>(mut self, var: &str, predictors: &[S]) -> Self {
        self.predictors.insert(
            var.to_string(),
            predictors.iter().map(|s| s.as_ref().to_string()).collect(),
        );
        self
    }

    pub fn with_visit_sequence<S: AsRef<str>>(mut self, seq: &[S]) -> Self {
        self.visit_sequence = seq.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn replicates(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn rows(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn proper(mut self, proper: bool) -> Self {
        self.proper = proper;
        self
    }

    /// Visit sequence as schema indices.
    pub fn visit_indices(&self, schema: &Schema) -> Result<Vec<usize>> {
        let seq: Vec<usize> = if self.visit_sequence.is_empty() {
            (0..schema.len())
                .filter(|&i| schema.variable(i).role == Role::Synthesize)
                .collect()
        } else {
            self.visit_sequence
                .iter()
                .map(|v| schema.index_of(v))
                .collect::<Result<_>>()?
        };
        let mut seen = vec![false; schema.len()];
        for &i in &seq {
            let def = schema.variable(i);
            if def.role != Role::Synthesize {
                return Err(Error::Plan(format!(
                    "`{}` is in the visit sequence but its role is {:?}",
                    def.name, def.role
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Plan(format!(
                    "`{}` appears twice in the visit sequence",
                    def.name
                )));
            }
        }
        if let Some(def) = schema
            .variables()
            .iter()
            .enumerate()
            .find(|(i, d)| d.role == Role::Synthesize && !seen[*i])
            .map(|(_, d)| d)
        {
            return Err(Error::Plan(format!(
                "`{}` has role synthesize but is missing from the visit sequence",
                def.name
            )));
        }
        if seq.is_empty() {
            return Err(Error::Plan("nothing to synthesize".into()));
        }
        Ok(seq)
    }

    /// Check the plan against `schema` and resolve defaults.
    pub fn resolve(&self, schema: &Schema) -> Result<Vec<Step>> {
        if self.m == 0 {
            return Err(Error::Plan("the number of replicates must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(Error::Plan("synthetic row count must be positive".into()));
        }
        let seq = self.visit_indices(schema)?;
        for name in self.predictors.keys().chain(self.methods.keys()) {
            let i = schema.index_of(name)?;
            if !seq.contains(&i) {
                return Err(Error::Plan(format!(
                    "`{name}` has a predictor or method entry but is not synthesized"
                )));
            }
        }
        let unchanged: Vec<usize> = (0..schema.len())
            .filter(|&i| schema.variable(i).role == Role::KeepUnchanged)
            .collect();
        let position = |i: usize| seq.iter().position(|&s| s == i);
        let available = |target_pos: usize, p: usize| match position(p) {
            Some(pp) => pp < target_pos,
            None => true,
        };
        let rules = self
            .rules
            .iter()
            .map(|r| r.compile(schema).map(|c| (r, c)))
            .collect::<Result<Vec<_>>>()?;
        let mut steps = Vec::with_capacity(seq.len());
        for (pos, &var) in seq.iter().enumerate() {
            let def = schema.variable(var);
            let predictors = match self.predictors.get(&def.name) {
                Some(names) => {
                    let mut idx = Vec::with_capacity(names.len());
                    for p in names {
                        let i = schema.index_of(p)?;
                        if i == var || !available(pos, i) {
                            return Err(Error::Plan(format!(
                                "`{}` cannot predict `{}`: predictors must be visited earlier or kept unchanged",
                                p, def.name
                            )));
                        }
                        if idx.contains(&i) {
                            return Err(Error::Plan(format!(
                                "`{p}` listed twice as a predictor of `{}`",
                                def.name
                            )));
                        }
                        idx.push(i);
                    }
                    idx
                }
                None => unchanged.iter().copied().chain(seq[..pos].iter().copied()).collect(),
            };
            let mut spec = self
                .methods
                .get(&def.name)
                .copied()
                .unwrap_or_else(|| MethodSpec::new(self.default_method));
            spec.proper |= self.proper;
            spec.validate_for(def)?;
            let mut var_rules = Vec::new();
            for (raw, c) in rules.iter().filter(|(_, c)| c.target == var) {
                if let Some(&bad) = c.variables.iter().find(|&&v| v == var || !available(pos, v)) {
                    return Err(Error::Plan(format!(
                        "rule `{raw}` reads `{}`, which is not synthesized before `{}`",
                        schema.variable(bad).name,
                        def.name
                    )));
                }
                var_rules.push(c.clone());
            }
            steps.push(Step {
                var,
                predictors,
                spec,
                rules: var_rules,
            });
        }
        if let Some((raw, _)) = rules.iter().find(|(_, c)| !seq.contains(&c.target)) {
            return Err(Error::Plan(format!(
                "rule `{raw}` targets a variable that is not synthesized"
            )));
        }
        Ok(steps)
    }

    /// Predictor matrix over `keep-unchanged ++ visit sequence`, rows are
    /// targets; `true` marks a predictor.
    pub fn predictor_matrix(&self, schema: &Schema) -> Result<(Vec<String>, Vec<Vec<bool>>)> {
        let steps = self.resolve(schema)?;
        let mut order: Vec<usize> = (0..schema.len())
            .filter(|&i| schema.variable(i).role != Role::Synthesize)
            .collect();
        order.extend(steps.iter().map(|s| s.var));
        let names = order.iter().map(|&i| schema.variable(i).name.clone()).collect();
        let rows = steps
            .iter()
            .map(|s| order.iter().map(|i| s.predictors.contains(i)).collect())
            .collect();
        Ok((names, rows))
    }
}
