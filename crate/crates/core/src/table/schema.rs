use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved column carrying the faux-data label in emitted files.
pub const LABEL_COLUMN: &str = "data_label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Replaced by synthetic values.
    #[default]
    Synthesize,
    /// Copied (or resampled) from the observed data and conditioned on.
    KeepUnchanged,
    Stratum,
    Weight,
}

impl Role {
    /// Stratum and weight variables are part of the unchanged conditioning set.
    pub fn is_unchanged(self) -> bool {
        !matches!(self, Role::Synthesize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDef {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_codes: Vec<String>,
    #[serde(default)]
    pub role: Role,
}

impl VariableDef {
    pub fn continuous(name: impl Into<String>) -> Self {
        VariableDef {
            name: name.into(),
            kind: VariableKind::Continuous,
            levels: Vec::new(),
            missing_codes: Vec::new(),
            role: Role::Synthesize,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        VariableDef {
            name: name.into(),
            kind: VariableKind::Categorical,
            levels: levels.into_iter().map(Into::into).collect(),
            missing_codes: Vec::new(),
            role: Role::Synthesize,
        }
    }

    pub fn with_missing<S: Into<String>>(mut self, codes: impl IntoIterator<Item = S>) -> Self {
        self.missing_codes = codes.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == VariableKind::Categorical
    }

    pub fn has_missing_codes(&self) -> bool {
        !self.missing_codes.is_empty()
    }

    /// Number of categories once missing codes are counted as extra levels.
    pub fn n_categories(&self) -> usize {
        self.levels.len() + self.missing_codes.len()
    }

    /// Index of `text` among the missing codes. Numeric codes also match
    /// numerically equal spellings (`-999` and `-999.0`).
    pub fn missing_index(&self, text: &str) -> Option<u16> {
        let text = text.trim();
        let as_num = text.parse::<f64>().ok();
        self.missing_codes
            .iter()
            .position(|code| {
                code == text
                    || match (as_num, code.trim().parse::<f64>()) {
                        (Some(a), Ok(b)) => a == b,
                        _ => false,
                    }
            })
            .map(|i| i as u16)
    }

    pub fn level_index(&self, text: &str) -> Option<u32> {
        let text = text.trim();
        self.levels.iter().position(|l| l == text).map(|i| i as u32)
    }

    /// Label of extended category `cat` (levels first, then missing codes).
    pub fn category_label(&self, cat: usize) -> &str {
        if cat < self.levels.len() {
            &self.levels[cat]
        } else {
            &self.missing_codes[cat - self.levels.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    variables: Vec<VariableDef>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    variables: Vec<VariableDef>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = Error;
    fn try_from(raw: RawSchema) -> Result<Self> {
        Schema::new(raw.variables)
    }
}

impl From<Schema> for RawSchema {
    fn from(s: Schema) -> Self {
        RawSchema { variables: s.variables }
    }
}

impl Schema {
    pub fn new(variables: Vec<VariableDef>) -> Result<Self> {
        let mut index = HashMap::with_capacity(variables.len());
        let mut strata = 0;
        let mut weights = 0;
        for (i, v) in variables.iter().enumerate() {
            if v.name.is_empty() {
                return Err(Error::Schema(format!("variable {} has an empty name", i + 1)));
            }
            if v.name == LABEL_COLUMN {
                return Err(Error::Schema(format!("`{LABEL_COLUMN}` is a reserved column name")));
            }
            if index.insert(v.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate variable name `{}`", v.name)));
            }
            match v.kind {
                VariableKind::Categorical => {
                    if v.levels.is_empty() {
                        return Err(Error::Schema(format!("categorical `{}` declares no levels", v.name)));
                    }
                    for (j, l) in v.levels.iter().enumerate() {
                        if v.levels[..j].contains(l) {
                            return Err(Error::Schema(format!("`{}` repeats level `{l}`", v.name)));
                        }
                        if v.missing_codes.contains(l) {
                            return Err(Error::Schema(format!(
                                "`{}`: `{l}` is both a level and a missing code",
                                v.name
                            )));
                        }
                    }
                }
                VariableKind::Continuous => {
                    if !v.levels.is_empty() {
                        return Err(Error::Schema(format!("continuous `{}` cannot declare levels", v.name)));
                    }
                }
            }
            for (j, c) in v.missing_codes.iter().enumerate() {
                if v.missing_codes[..j].contains(c) {
                    return Err(Error::Schema(format!("`{}` repeats missing code `{c}`", v.name)));
                }
            }
            match v.role {
                Role::Stratum => strata += 1,
                Role::Weight => weights += 1,
                _ => {}
            }
        }
        if strata > 1 {
            return Err(Error::Schema("at most one variable may have role=stratum".into()));
        }
        if weights > 1 {
            return Err(Error::Schema("at most one variable may have role=weight".into()));
        }
        Ok(Schema { variables, index })
    }

    pub fn variables(&self) -> &[VariableDef] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.position(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&VariableDef> {
        self.index_of(name).map(|i| &self.variables[i])
    }

    pub fn variable(&self, i: usize) -> &VariableDef {
        &self.variables[i]
    }

    pub fn stratum(&self) -> Option<&VariableDef> {
        self.variables.iter().find(|v| v.role == Role::Stratum)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }
}
