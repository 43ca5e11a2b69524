use crate::error::{Error, Result};
use crate::table::data::DataTable;

#[derive(Debug, Clone)]
pub struct MissingSplit {
    /// 1 where the variable carries a missing marker.
    pub indicator: Vec<u8>,
    /// Rows with indicator 0, in original order.
    pub observed: DataTable,
    /// Original row numbers of `observed`.
    pub observed_rows: Vec<usize>,
}

/// Separate the missingness indicator of `var` from its observed rows.
pub fn split_missingness(table: &DataTable, var: &str) -> Result<MissingSplit> {
    let def = table.schema().get(var)?;
    if !def.has_missing_codes() {
        return Err(Error::invalid(format!("`{var}` declares no missing codes")));
    }
    let column = table.column(var)?;
    let indicator: Vec<u8> = column.iter().map(|c| u8::from(c.is_missing())).collect();
    let observed_rows: Vec<usize> = (0..table.n_rows()).filter(|&r| indicator[r] == 0).collect();
    Ok(MissingSplit {
        observed: table.select_rows(&observed_rows),
        indicator,
        observed_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::data::ColumnInput;
    use crate::table::schema::{Schema, VariableDef};

    fn table(values: Vec<f64>, codes: bool) -> DataTable {
        let mut v = VariableDef::continuous("x");
        if codes {
            v = v.with_missing(["-999"]);
        }
        DataTable::from_columns(Schema::new(vec![v]).unwrap(), vec![ColumnInput::Numbers(values)]).unwrap()
    }

    #[test]
    fn indicator_marks_missing_rows() {
        let s = split_missingness(&table(vec![5.0, -999.0, 7.0], true), "x").unwrap();
        assert_eq!(s.indicator, vec![0, 1, 0]);
        assert_eq!(s.observed_rows, vec![0, 2]);
        assert_eq!(s.observed.n_rows(), 2);
    }

    #[test]
    fn no_markers_keeps_full_table() {
        let t = table(vec![1.0, 2.0], true);
        let s = split_missingness(&t, "x").unwrap();
        assert_eq!(s.indicator, vec![0, 0]);
        assert_eq!(s.observed, t);
    }

    #[test]
    fn requires_declared_codes() {
        assert!(split_missingness(&table(vec![1.0], false), "x").is_err());
    }

    #[test]
    fn fifteen_per_ten_thousand() {
        // 0.15% of 1000 rows rounds to 2 missing cells
        let mut v = vec![30.0; 1000];
        let k = (0.0015f64 * 1000.0).round() as usize;
        for x in v.iter_mut().take(k) {
            *x = -999.0;
        }
        let s = split_missingness(&table(v, true), "x").unwrap();
        assert_eq!(s.indicator.iter().map(|&b| b as usize).sum::<usize>(), 2);
    }
}
