//! Typed columnar data: schema, table, CSV and design-matrix encoding.

mod data;
mod design;
mod io;
mod missing;
mod schema;

pub(crate) use data::parse_cell;
pub use data::{Cell, ColumnInput, DataTable};
pub use design::{encode_design, DesignMatrix, Term, TermKind, INTERCEPT};
pub use io::{parse_csv, read_csv, write_csv, write_csv_to};
pub use missing::{split_missingness, MissingSplit};
pub use schema::{Role, Schema, VariableDef, VariableKind, LABEL_COLUMN};
