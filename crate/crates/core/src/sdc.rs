//! Disclosure control applied to synthetic output.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SynthesisOutput;
use crate::table::{Cell, DataTable, VariableKind};

pub const DEFAULT_LABEL: &str = "FALSE DATA";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdcPolicy {
    pub label: String,
    /// Variables whose value tuple defines uniqueness; empty skips removal.
    pub keys: Vec<String>,
    pub topcode: BTreeMap<String, Bounds>,
}

impl Default for SdcPolicy {
    fn default() -> Self {
        SdcPolicy {
            label: DEFAULT_LABEL.to_string(),
            keys: Vec::new(),
            topcode: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum KeyCell {
    Num(u64),
    Level(u32),
    Missing(u16),
}

fn key_cell(c: Cell) -> KeyCell {
    match c {
        // +0.0 and -0.0 are the same value
        Cell::Num(x) => KeyCell::Num(if x == 0.0 { 0 } else { x.to_bits() }),
        Cell::Level(l) => KeyCell::Level(l),
        Cell::Missing(m) => KeyCell::Missing(m),
    }
}

fn key_counts(table: &DataTable, cols: &[usize]) -> (Vec<Vec<KeyCell>>, HashMap<Vec<KeyCell>, usize>) {
    let keys: Vec<Vec<KeyCell>> = (0..table.n_rows())
        .map(|r| cols.iter().map(|&c| key_cell(table.column_at(c)[r])).collect())
        .collect();
    let mut counts = HashMap::new();
    for k in &keys {
        *counts.entry(k.clone()).or_insert(0) += 1;
    }
    (keys, counts)
}

fn key_columns(table: &DataTable, keys: &[String]) -> Result<Vec<usize>> {
    if keys.is_empty() {
        return Err(Error::invalid("unique removal needs at least one key variable"));
    }
    keys.iter().map(|k| table.schema().index_of(k)).collect()
}

/// Delete synthetic rows whose key tuple is unique both in the observed and
/// in the synthetic table. Returns the cleaned table and the removal count.
pub fn remove_replicated_uniques(
    observed: &DataTable,
    synthetic: &DataTable,
    keys: &[String],
) -> Result<(DataTable, usize)> {
    if observed.schema() != synthetic.schema() {
        return Err(Error::invalid("observed and synthetic tables have different schemas"));
    }
    let cols = key_columns(observed, keys)?;
    let (_, obs_counts) = key_counts(observed, &cols);
    let (syn_keys, syn_counts) = key_counts(synthetic, &cols);
    let keep: Vec<usize> = (0..synthetic.n_rows())
        .filter(|&r| {
            let k = &syn_keys[r];
            !(syn_counts[k] == 1 && obs_counts.get(k) == Some(&1))
        })
        .collect();
    let removed = synthetic.n_rows() - keep.len();
    Ok((synthetic.select_rows(&keep), removed))
}

/// Number of synthetic rows whose key tuple is unique in both tables.
pub fn count_replicated_uniques(observed: &DataTable, synthetic: &DataTable, keys: &[String]) -> Result<usize> {
    remove_replicated_uniques(observed, synthetic, keys).map(|(_, n)| n)
}

/// Clamp continuous variables into their bounds. Returns the table and the
/// number of modified cells.
pub fn top_bottom_code(table: &DataTable, bounds: &BTreeMap<String, Bounds>) -> Result<(DataTable, usize)> {
    let mut out = table.clone();
    let mut changed = 0;
    for (name, b) in bounds {
        let i = table.schema().index_of(name)?;
        let def = table.schema().variable(i);
        if def.kind != VariableKind::Continuous {
            return Err(Error::invalid(format!("cannot top-code categorical variable `{name}`")));
        }
        let lo = b.lower.unwrap_or(f64::NEG_INFINITY);
        let hi = b.upper.unwrap_or(f64::INFINITY);
        if b.lower.is_some_and(|v| !v.is_finite()) || b.upper.is_some_and(|v| !v.is_finite()) || lo > hi {
            return Err(Error::invalid(format!("invalid bounds for `{name}`")));
        }
        let col: Vec<Cell> = table
            .column_at(i)
            .iter()
            .map(|&c| match c {
                Cell::Num(x) if x > hi || x < lo => {
                    changed += 1;
                    Cell::Num(x.clamp(lo, hi))
                }
                c => c,
            })
            .collect();
        out.replace_column(i, col)?;
    }
    Ok((out, changed))
}

/// Attach the faux-data label to the manifest and every replicate.
pub fn label_faux(mut output: SynthesisOutput, text: &str) -> SynthesisOutput {
    output.manifest.label = Some(text.to_string());
    for r in &mut output.replicates {
        r.set_label(Some(text.to_string()));
    }
    output
}

/// Top-coding, then replicated-unique removal (when keys are set), then
/// labelling. Counts go to the manifest.
pub fn apply_policy(output: SynthesisOutput, observed: &DataTable, policy: &SdcPolicy) -> Result<SynthesisOutput> {
    let mut output = output;
    let processed = output
        .replicates
        .par_iter()
        .map(|r| {
            let (t, clamped) = top_bottom_code(r, &policy.topcode)?;
            if policy.keys.is_empty() {
                Ok((t, clamped, None))
            } else {
                let (t, removed) = remove_replicated_uniques(observed, &t, &policy.keys)?;
                Ok((t, clamped, Some(removed)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut notes = Vec::new();
    output.replicates = processed
        .into_iter()
        .enumerate()
        .map(|(l, (t, clamped, removed))| {
            if !policy.topcode.is_empty() {
                notes.push(format!("replicate {}: {clamped} cells top/bottom-coded", l + 1));
            }
            match removed {
                Some(n) => notes.push(format!("replicate {}: {n} replicated unique rows removed", l + 1)),
                None if l == 0 => notes.push("no key variables: unique removal skipped".into()),
                None => {}
            }
            t
        })
        .collect();
    output.manifest.sdc.extend(notes);
    Ok(label_faux(output, &policy.label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnInput, Schema, VariableDef};

    fn tab(vals: &[&str]) -> DataTable {
        let s = Schema::new(vec![VariableDef::categorical("k", ["A", "B", "C"])]).unwrap();
        DataTable::from_columns(s, vec![ColumnInput::labels(vals)]).unwrap()
    }

    #[test]
    fn removes_only_uniques_in_both() {
        let keys = vec!["k".to_string()];
        let (out, n) = remove_replicated_uniques(&tab(&["A", "A", "B"]), &tab(&["B", "C"]), &keys).unwrap();
        assert_eq!((out.column_at(0).to_vec(), n), (vec![Cell::Level(2)], 1));
        let (same, n) = remove_replicated_uniques(&tab(&["A", "A"]), &tab(&["A", "C"]), &keys).unwrap();
        assert_eq!((same.n_rows(), n), (2, 0));
        let (dup, n) = remove_replicated_uniques(&tab(&["B"]), &tab(&["B", "B"]), &keys).unwrap();
        assert_eq!((dup.n_rows(), n), (2, 0));
        assert!(remove_replicated_uniques(&tab(&["B"]), &tab(&["B"]), &[]).is_err());
    }

    fn nums(v: &[f64]) -> DataTable {
        let s = Schema::new(vec![
            VariableDef::continuous("x").with_missing(["-999"]),
            VariableDef::categorical("g", ["a"]),
        ])
        .unwrap();
        DataTable::from_columns(
            s,
            vec![
                ColumnInput::Numbers(v.to_vec()),
                ColumnInput::labels(vec!["a"; v.len()]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn clamps_and_counts() {
        let b = BTreeMap::from([(
            "x".to_string(),
            Bounds {
                lower: Some(2.0),
                upper: Some(10.0),
            },
        )]);
        let (out, n) = top_bottom_code(&nums(&[1.0, 5.0, 99.0, -999.0]), &b).unwrap();
        assert_eq!(
            out.column_at(0),
            [Cell::Num(2.0), Cell::Num(5.0), Cell::Num(10.0), Cell::Missing(0)]
        );
        assert_eq!(n, 2);
        let (same, n) = top_bottom_code(&nums(&[3.0, 4.0]), &b).unwrap();
        assert_eq!((same, n), (nums(&[3.0, 4.0]), 0));
        let cat = BTreeMap::from([(
            "g".to_string(),
            Bounds {
                lower: None,
                upper: Some(1.0),
            },
        )]);
        assert!(top_bottom_code(&nums(&[1.0]), &cat).is_err());
        let inverted = BTreeMap::from([(
            "x".to_string(),
            Bounds {
                lower: Some(3.0),
                upper: Some(1.0),
            },
        )]);
        assert!(top_bottom_code(&nums(&[1.0]), &inverted).is_err());
    }
}
