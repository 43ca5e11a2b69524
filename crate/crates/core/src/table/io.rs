//! CSV reading and writing.
//!
//! Dialect: comma separated, header row first, UTF-8, RFC 4180 quoting.
//! Lines starting with `#` are comments; synthetic files carry their
//! faux-data label both as a leading comment and as a constant
//! [`LABEL_COLUMN`] column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::table::data::{parse_cell, render_cell, DataTable};
use crate::table::schema::{Schema, LABEL_COLUMN};

pub fn parse_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<DataTable> {
    let file = File::open(path.as_ref())?;
    read_csv(BufReader::new(file), schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    // file column -> schema index (None for the label column)
    let mut mapping = Vec::with_capacity(headers.len());
    let mut seen = vec![false; schema.len()];
    for h in headers.iter() {
        let h = h.trim();
        if h == LABEL_COLUMN {
            mapping.push(None);
            continue;
        }
        let i = schema.position(h).ok_or_else(|| Error::UnknownColumn(h.to_string()))?;
        if seen[i] {
            return Err(Error::Table(format!("column `{h}` appears twice in header")));
        }
        seen[i] = true;
        mapping.push(Some(i));
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::MissingColumn(schema.variable(i).name.clone()));
    }

    let mut columns = vec![Vec::new(); schema.len()];
    let mut label = None;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != mapping.len() {
            return Err(Error::Table(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                record.len(),
                mapping.len()
            )));
        }
        for (field, target) in record.iter().zip(&mapping) {
            match target {
                Some(i) => {
                    let def = schema.variable(*i);
                    let cell = parse_cell(def, field).map_err(|message| Error::Cell {
                        row: r + 1,
                        column: def.name.clone(),
                        message,
                    })?;
                    columns[*i].push(cell);
                }
                None => {
                    if label.is_none() {
                        label = Some(field.to_string());
                    }
                }
            }
        }
    }
    let mut table = DataTable::new(Arc::new(schema.clone()), columns)?;
    table.set_label(label);
    Ok(table)
}

pub fn write_csv(table: &DataTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_csv_to(table, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(table: &DataTable, mut out: W) -> Result<()> {
    let label = table.label().map(|l| l.replace(['\n', '\r'], " "));
    if let Some(l) = &label {
        writeln!(out, "# {l}")?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    let schema = table.schema();
    let mut header: Vec<&str> = schema.names().collect();
    if label.is_some() {
        header.push(LABEL_COLUMN);
    }
    wtr.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in 0..table.n_rows() {
        row.clear();
        for (i, def) in schema.variables().iter().enumerate() {
            row.push(render_cell(def, table.column_at(i)[r]));
        }
        if let Some(l) = &label {
            row.push(l.clone());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
