use std::sync::Arc;

use crate::error::{Error, Result};
use crate::table::schema::{Schema, VariableDef, VariableKind};

/// One cell of a [`DataTable`]. Missing markers keep the index of the
/// declared missing code so they never take part in arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Level(u32),
    Missing(u16),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing(_))
    }

    pub fn as_num(&self) -> Option<f64> {
        match *self {
            Cell::Num(x) => Some(x),
            _ => None,
        }
    }

    /// Category index with missing codes appended after the declared levels.
    pub fn category(&self, n_levels: usize) -> Option<usize> {
        match *self {
            Cell::Level(l) => Some(l as usize),
            Cell::Missing(m) => Some(n_levels + m as usize),
            Cell::Num(_) => None,
        }
    }

    /// Inverse of [`Cell::category`].
    pub fn from_category(cat: usize, n_levels: usize) -> Cell {
        if cat < n_levels {
            Cell::Level(cat as u32)
        } else {
            Cell::Missing((cat - n_levels) as u16)
        }
    }

    pub(crate) fn validate(&self, def: &VariableDef) -> std::result::Result<(), String> {
        match (*self, def.kind) {
            (Cell::Num(x), VariableKind::Continuous) if x.is_finite() => Ok(()),
            (Cell::Num(x), VariableKind::Continuous) => Err(format!("non-finite value {x}")),
            (Cell::Level(l), VariableKind::Categorical) if (l as usize) < def.levels.len() => Ok(()),
            (Cell::Level(l), VariableKind::Categorical) => Err(format!("level index {l} out of range")),
            (Cell::Missing(m), _) if (m as usize) < def.missing_codes.len() => Ok(()),
            (Cell::Missing(m), _) => Err(format!("missing-code index {m} not declared")),
            (c, k) => Err(format!("{c:?} does not fit a {k:?} variable")),
        }
    }
}

/// Validated columnar dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    schema: Arc<Schema>,
    n_rows: usize,
    columns: Vec<Vec<Cell>>,
    label: Option<String>,
}

impl DataTable {
    pub fn new(schema: impl Into<Arc<Schema>>, columns: Vec<Vec<Cell>>) -> Result<Self> {
        let schema = schema.into();
        if columns.len() != schema.len() {
            return Err(Error::Table(format!(
                "{} columns supplied for {} schema variables",
                columns.len(),
                schema.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (def, col) in schema.variables().iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::Table(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    def.name,
                    col.len()
                )));
            }
            for (r, cell) in col.iter().enumerate() {
                cell.validate(def).map_err(|message| Error::Cell {
                    row: r + 1,
                    column: def.name.clone(),
                    message,
                })?;
            }
        }
        Ok(DataTable {
            schema,
            n_rows,
            columns,
            label: None,
        })
    }

    /// Build a table from typed per-variable values; `NaN` in a continuous
    /// vector becomes the first declared missing code.
    pub fn from_columns(schema: impl Into<Arc<Schema>>, columns: Vec<ColumnInput>) -> Result<Self> {
        let schema = schema.into();
        let cells = columns
            .into_iter()
            .zip(schema.variables())
            .map(|(c, def)| c.into_cells(def))
            .collect::<Result<Vec<_>>>()?;
        DataTable::new(schema, cells)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn set_label(&mut self, label: Option<String>) {
        self.label = label;
    }

    pub fn columns(&self) -> &[Vec<Cell>] {
        &self.columns
    }

    pub fn column_at(&self, i: usize) -> &[Cell] {
        &self.columns[i]
    }

    pub fn column(&self, name: &str) -> Result<&[Cell]> {
        Ok(&self.columns[self.schema.index_of(name)?])
    }

    /// Replace column `i`, checking its length and cell validity.
    pub fn replace_column(&mut self, i: usize, col: Vec<Cell>) -> Result<()> {
        let def = self.schema.variable(i);
        if col.len() != self.n_rows {
            return Err(Error::Table(format!(
                "replacement for `{}` has {} rows, expected {}",
                def.name,
                col.len(),
                self.n_rows
            )));
        }
        for (r, cell) in col.iter().enumerate() {
            cell.validate(def).map_err(|message| Error::Cell {
                row: r + 1,
                column: def.name.clone(),
                message,
            })?;
        }
        self.columns[i] = col;
        Ok(())
    }

    /// Rows in the given order (indices may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        DataTable {
            schema: Arc::clone(&self.schema),
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            label: self.label.clone(),
        }
    }

    /// Stack tables sharing one schema.
    pub fn concat(tables: &[DataTable]) -> Result<DataTable> {
        let first = tables
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate an empty list of tables"))?;
        let mut columns = vec![Vec::new(); first.schema.len()];
        for t in tables {
            if t.schema != first.schema {
                return Err(Error::Table("tables to concatenate have different schemas".into()));
            }
            for (dst, src) in columns.iter_mut().zip(&t.columns) {
                dst.extend_from_slice(src);
            }
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        Ok(DataTable {
            schema: Arc::clone(&first.schema),
            n_rows,
            columns,
            label: first.label.clone(),
        })
    }

    /// Non-missing numeric values of a continuous column.
    pub fn observed_values(&self, i: usize) -> Vec<f64> {
        self.columns[i].iter().filter_map(Cell::as_num).collect()
    }

    /// Rendered text of one cell, as written to CSV.
    pub fn render(&self, var: usize, row: usize) -> String {
        render_cell(self.schema.variable(var), self.columns[var][row])
    }
}

pub(crate) fn render_cell(def: &VariableDef, cell: Cell) -> String {
    match cell {
        Cell::Num(x) => format!("{x}"),
        Cell::Level(l) => def.levels[l as usize].clone(),
        Cell::Missing(m) => def.missing_codes[m as usize].clone(),
    }
}

/// Convenience input for [`DataTable::from_columns`].
#[derive(Debug, Clone)]
pub enum ColumnInput {
    Numbers(Vec<f64>),
    Labels(Vec<String>),
}

impl ColumnInput {
    pub fn labels<S: AsRef<str>>(v: impl IntoIterator<Item = S>) -> Self {
        ColumnInput::Labels(v.into_iter().map(|s| s.as_ref().to_string()).collect())
    }

    fn into_cells(self, def: &VariableDef) -> Result<Vec<Cell>> {
        match (self, def.kind) {
            (ColumnInput::Numbers(v), VariableKind::Continuous) => v
                .into_iter()
                .enumerate()
                .map(|(r, x)| {
                    if x.is_nan() {
                        if def.has_missing_codes() {
                            Ok(Cell::Missing(0))
                        } else {
                            Err(Error::Cell {
                                row: r + 1,
                                column: def.name.clone(),
                                message: "NaN without a declared missing code".into(),
                            })
                        }
                    } else {
                        Ok(def.missing_index(&format!("{x}")).map_or(Cell::Num(x), Cell::Missing))
                    }
                })
                .collect(),
            (ColumnInput::Labels(v), _) => v
                .iter()
                .enumerate()
                .map(|(r, s)| {
                    parse_cell(def, s).map_err(|message| Error::Cell {
                        row: r + 1,
                        column: def.name.clone(),
                        message,
                    })
                })
                .collect(),
            (ColumnInput::Numbers(v), VariableKind::Categorical) => v
                .iter()
                .enumerate()
                .map(|(r, x)| {
                    parse_cell(def, &format!("{x}")).map_err(|message| Error::Cell {
                        row: r + 1,
                        column: def.name.clone(),
                        message,
                    })
                })
                .collect(),
        }
    }
}

/// Parse one textual cell against its variable definition.
pub(crate) fn parse_cell(def: &VariableDef, text: &str) -> std::result::Result<Cell, String> {
    if let Some(m) = def.missing_index(text) {
        return Ok(Cell::Missing(m));
    }
    match def.kind {
        VariableKind::Categorical => def
            .level_index(text)
            .map(Cell::Level)
            .ok_or_else(|| format!("`{}` is neither a declared level nor a missing code", text.trim())),
        VariableKind::Continuous => match text.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Cell::Num(x)),
            Ok(x) => Err(format!("non-finite value {x}")),
            Err(_) => Err(format!("cannot parse `{}` as a number", text.trim())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::schema::VariableDef;

    fn schema() -> Schema {
        Schema::new(vec![
            VariableDef::continuous("age").with_missing(["-999"]),
            VariableDef::categorical("sex", ["M", "F"]),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_ragged_columns() {
        let err = DataTable::new(schema(), vec![vec![Cell::Num(1.0)], vec![]]);
        assert!(matches!(err, Err(Error::Table(_))));
    }

    #[test]
    fn rejects_kind_mismatch() {
        let err = DataTable::new(schema(), vec![vec![Cell::Level(0)], vec![Cell::Level(0)]]);
        assert!(matches!(err, Err(Error::Cell { row: 1, .. })));
    }

    #[test]
    fn from_columns_maps_codes_to_markers() {
        let t = DataTable::from_columns(
            schema(),
            vec![
                ColumnInput::Numbers(vec![5.0, -999.0, f64::NAN]),
                ColumnInput::labels(["M", "F", "M"]),
            ],
        )
        .unwrap();
        assert_eq!(t.column_at(0), &[Cell::Num(5.0), Cell::Missing(0), Cell::Missing(0)]);
        assert_eq!(t.column_at(1)[1], Cell::Level(1));
    }

    #[test]
    fn concat_and_select() {
        let t = DataTable::from_columns(
            schema(),
            vec![ColumnInput::Numbers(vec![1.0, 2.0]), ColumnInput::labels(["M", "F"])],
        )
        .unwrap();
        let both = DataTable::concat(&[t.clone(), t.select_rows(&[1])]).unwrap();
        assert_eq!(both.n_rows(), 3);
        assert_eq!(both.column_at(0)[2], Cell::Num(2.0));
    }
}
