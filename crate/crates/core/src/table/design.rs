use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::table::data::{Cell, DataTable};
use crate::table::schema::VariableKind;

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq)]
pub enum TermKind {
    Intercept,
    Continuous,
    /// 0/1 column flagging a missing marker in the named continuous variable.
    MissingIndicator,
    /// Dummy columns; `coded[i]` is the category index carried by `columns[i]`.
    /// A row with all dummies zero is in the reference category 0.
    Categorical {
        n_categories: usize,
        coded: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub variable: String,
    pub kind: TermKind,
    pub columns: Vec<usize>,
}

/// Numeric predictor matrix plus a description of which variable each
/// column came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    names: Vec<String>,
    terms: Vec<Term>,
}

impl DesignMatrix {
    /// `n × 1` matrix of ones.
    pub fn intercept_only(n: usize) -> Self {
        DesignMatrix {
            x: DMatrix::from_element(n, 1, 1.0),
            names: vec![INTERCEPT.to_string()],
            terms: vec![Term {
                variable: INTERCEPT.to_string(),
                kind: TermKind::Intercept,
                columns: vec![0],
            }],
        }
    }

    /// Wrap a plain matrix; every column is a continuous term except one
    /// named [`INTERCEPT`].
    pub fn from_matrix(x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::invalid(format!(
                "{} names for {} design columns",
                names.len(),
                x.ncols()
            )));
        }
        let terms = names
            .iter()
            .enumerate()
            .map(|(j, n)| Term {
                variable: n.clone(),
                kind: if n == INTERCEPT {
                    TermKind::Intercept
                } else {
                    TermKind::Continuous
                },
                columns: vec![j],
            })
            .collect();
        Ok(DesignMatrix { x, names, terms })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.x[(row, col)]
    }

    /// Keep only the listed columns (in the given order).
    pub fn select_columns(&self, keep: &[usize]) -> DesignMatrix {
        let x = self.x.select_columns(keep);
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        let remap = |old: usize| keep.iter().position(|&k| k == old);
        let terms = self
            .terms
            .iter()
            .filter_map(|t| {
                let mut cols = Vec::new();
                let mut coded = Vec::new();
                for (i, &c) in t.columns.iter().enumerate() {
                    if let Some(new) = remap(c) {
                        cols.push(new);
                        if let TermKind::Categorical { coded: cd, .. } = &t.kind {
                            coded.push(cd[i]);
                        }
                    }
                }
                if cols.is_empty() {
                    return None;
                }
                let kind = match &t.kind {
                    TermKind::Categorical { n_categories, .. } => TermKind::Categorical {
                        n_categories: *n_categories,
                        coded,
                    },
                    k => k.clone(),
                };
                Some(Term {
                    variable: t.variable.clone(),
                    kind,
                    columns: cols,
                })
            })
            .collect();
        DesignMatrix { x, names, terms }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            x: self.x.select_rows(rows),
            names: self.names.clone(),
            terms: self.terms.clone(),
        }
    }
}

/// Encode `predictors` of `table` as intercept + continuous values +
/// reference-coded dummies + missingness indicators.
///
/// Continuous variables that declare missing codes always get an indicator
/// column, so designs built from observed and synthetic tables line up;
/// missing cells take the column's non-missing mean. Categorical missing
/// codes are extra categories.
pub fn encode_design(table: &DataTable, predictors: &[&str]) -> Result<DesignMatrix> {
    let n = table.n_rows();
    let schema = table.schema();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut names = vec![INTERCEPT.to_string()];
    let mut terms = vec![Term {
        variable: INTERCEPT.to_string(),
        kind: TermKind::Intercept,
        columns: vec![0],
    }];
    for &p in predictors {
        let idx = schema.index_of(p)?;
        let def = schema.variable(idx);
        let column = table.column_at(idx);
        match def.kind {
            VariableKind::Continuous => {
                let (sum, cnt) = column
                    .iter()
                    .filter_map(Cell::as_num)
                    .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
                let mean = if cnt > 0 { sum / cnt as f64 } else { 0.0 };
                terms.push(Term {
                    variable: p.to_string(),
                    kind: TermKind::Continuous,
                    columns: vec![cols.len()],
                });
                cols.push(column.iter().map(|c| c.as_num().unwrap_or(mean)).collect());
                names.push(p.to_string());
                if def.has_missing_codes() {
                    terms.push(Term {
                        variable: p.to_string(),
                        kind: TermKind::MissingIndicator,
                        columns: vec![cols.len()],
                    });
                    cols.push(column.iter().map(|c| if c.is_missing() { 1.0 } else { 0.0 }).collect());
                    names.push(format!("{p}.missing"));
                }
            }
            VariableKind::Categorical => {
                let n_cat = def.n_categories();
                let n_levels = def.levels.len();
                let start = cols.len();
                for cat in 1..n_cat {
                    cols.push(
                        column
                            .iter()
                            .map(|c| if c.category(n_levels) == Some(cat) { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    names.push(format!("{p}={}", def.category_label(cat)));
                }
                terms.push(Term {
                    variable: p.to_string(),
                    kind: TermKind::Categorical {
                        n_categories: n_cat,
                        coded: (1..n_cat).collect(),
                    },
                    columns: (start..cols.len()).collect(),
                });
            }
        }
    }
    let p = cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    Ok(DesignMatrix { x, names, terms })
}
