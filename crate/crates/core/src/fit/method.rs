use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Cell, VariableDef, VariableKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    /// Resample observed values (no predictors).
    Empirical,
    /// Normal linear regression.
    Norm,
    /// Normal linear regression mapped back onto the observed marginal.
    Normrank,
    /// Binary logistic regression.
    Logit,
    /// Multinomial logistic regression, first level as baseline.
    Polyreg,
    /// Classification / regression tree with leaf-donor sampling.
    Cart,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Empirical => "empirical",
            MethodKind::Norm => "norm",
            MethodKind::Normrank => "normrank",
            MethodKind::Logit => "logit",
            MethodKind::Polyreg => "polyreg",
            MethodKind::Cart => "cart",
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            MethodKind::Norm | MethodKind::Normrank | MethodKind::Logit | MethodKind::Polyreg
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartControls {
    pub min_leaf_size: usize,
    pub max_depth: usize,
    /// Minimum impurity decrease of a split, relative to the root impurity.
    pub min_split_improvement: f64,
}

impl Default for CartControls {
    fn default() -> Self {
        CartControls {
            min_leaf_size: 5,
            max_depth: 30,
            min_split_improvement: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Generate from a posterior-predictive parameter draw.
    pub proper: bool,
    /// Add Gaussian kernel noise (normal-reference bandwidth) to continuous output.
    pub smoothing: bool,
    pub cart: CartControls,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec {
            kind,
            proper: false,
            smoothing: false,
            cart: CartControls::default(),
        }
    }

    pub fn proper(mut self, proper: bool) -> Self {
        self.proper = proper;
        self
    }

    pub fn smoothed(mut self, smoothing: bool) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn with_cart(mut self, cart: CartControls) -> Self {
        self.cart = cart;
        self
    }

    /// Check the method against the variable it is meant to synthesize.
    pub fn validate_for(&self, def: &VariableDef) -> Result<()> {
        let fail = |m: String| {
            Err(Error::Method {
                variable: def.name.clone(),
                message: m,
            })
        };
        if self.smoothing && def.kind != VariableKind::Continuous {
            return fail("smoothing applies only to continuous variables".into());
        }
        if self.smoothing && self.kind == MethodKind::Norm {
            return fail("smoothing applies to normrank, cart and empirical methods".into());
        }
        if self.cart.min_leaf_size == 0 || self.cart.max_depth == 0 {
            return fail("CART min_leaf_size and max_depth must be positive".into());
        }
        match (self.kind, def.kind) {
            (MethodKind::Norm | MethodKind::Normrank, VariableKind::Categorical) => {
                fail(format!("{} needs a continuous variable", self.kind.name()))
            }
            (MethodKind::Logit | MethodKind::Polyreg, VariableKind::Continuous) => {
                fail(format!("{} needs a categorical variable", self.kind.name()))
            }
            (MethodKind::Logit, _) if def.n_categories() != 2 => fail(format!(
                "logit needs a binary variable, `{}` has {} categories",
                def.name,
                def.n_categories()
            )),
            (MethodKind::Polyreg, _) if def.n_categories() < 2 => fail("polyreg needs at least two levels".into()),
            _ => Ok(()),
        }
    }
}

/// Values of one target variable, as fitted or generated.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Continuous(Vec<f64>),
    /// Category indices (declared levels, then missing codes).
    Categorical {
        codes: Vec<u32>,
        n_categories: usize,
    },
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(v) => v.len(),
            Response::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Response {
        match self {
            Response::Continuous(v) => Response::Continuous(rows.iter().map(|&r| v[r]).collect()),
            Response::Categorical { codes, n_categories } => Response::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                n_categories: *n_categories,
            },
        }
    }

    /// Read a response from table cells. Continuous missing markers are
    /// not representable and must be filtered out by the caller.
    pub fn from_cells(def: &VariableDef, cells: &[Cell]) -> Result<Response> {
        match def.kind {
            VariableKind::Continuous => cells
                .iter()
                .map(|c| {
                    c.as_num()
                        .ok_or_else(|| Error::invalid(format!("missing marker in continuous response `{}`", def.name)))
                })
                .collect::<Result<Vec<_>>>()
                .map(Response::Continuous),
            VariableKind::Categorical => Ok(Response::Categorical {
                codes: cells
                    .iter()
                    .map(|c| c.category(def.levels.len()).unwrap_or(0) as u32)
                    .collect(),
                n_categories: def.n_categories(),
            }),
        }
    }

    pub fn to_cells(&self, def: &VariableDef) -> Vec<Cell> {
        match self {
            Response::Continuous(v) => v.iter().map(|&x| Cell::Num(x)).collect(),
            Response::Categorical { codes, .. } => codes
                .iter()
                .map(|&c| Cell::from_category(c as usize, def.levels.len()))
                .collect(),
        }
    }

    /// Number of distinct values.
    pub fn n_distinct(&self) -> usize {
        match self {
            Response::Continuous(v) => {
                let mut s: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
                s.sort_unstable();
                s.dedup();
                s.len()
            }
            Response::Categorical { codes, n_categories } => {
                let mut seen = vec![false; *n_categories];
                codes.iter().for_each(|&c| seen[c as usize] = true);
                seen.iter().filter(|&&b| b).count()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rules() {
        let age = VariableDef::continuous("age");
        let sex = VariableDef::categorical("sex", ["M", "F"]);
        let eth = VariableDef::categorical("eth", ["a", "b", "c"]);
        assert!(MethodSpec::new(MethodKind::Norm).validate_for(&age).is_ok());
        assert!(MethodSpec::new(MethodKind::Norm).validate_for(&sex).is_err());
        assert!(MethodSpec::new(MethodKind::Logit).validate_for(&sex).is_ok());
        assert!(MethodSpec::new(MethodKind::Logit).validate_for(&eth).is_err());
        assert!(MethodSpec::new(MethodKind::Polyreg).validate_for(&eth).is_ok());
        assert!(MethodSpec::new(MethodKind::Cart)
            .smoothed(true)
            .validate_for(&sex)
            .is_err());
        assert!(MethodSpec::new(MethodKind::Cart)
            .smoothed(true)
            .validate_for(&age)
            .is_ok());
    }
}
