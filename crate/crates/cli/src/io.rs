//! Allocation matrix files and output helpers.

use std::fs;
use std::path::Path;

use restake::model::AllocationMatrix;
use serde::Serialize;

use crate::config::parse_number;
use crate::CliError;

/// An allocation read from CSV, with its row and column labels.
#[derive(Debug, Clone)]
pub struct LabeledAllocation {
    pub validators: Vec<String>,
    pub ssps: Vec<String>,
    pub omega: AllocationMatrix,
}

impl LabeledAllocation {
    pub fn unlabeled(omega: AllocationMatrix) -> Self {
        LabeledAllocation {
            validators: (0..omega.n_validators()).map(|i| format!("v{i}")).collect(),
            ssps: (0..omega.n_ssps()).map(|j| format!("s{j}")).collect(),
            omega,
        }
    }
}

/// Reads `validator,<ssp ids…>` CSV with one row per validator.
pub fn read_allocation(path: &Path) -> Result<LabeledAllocation, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read allocation {}: {e}", path.display())))?;
    parse_allocation(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_allocation(text: &str) -> Result<LabeledAllocation, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| format!("line 1: {e}"))?.clone();
    if header.len() < 2 {
        return Err("line 1: need a validator column and at least one SSP column".into());
    }
    let ssps: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut validators = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| match e.position() {
            Some(p) => format!("line {}: {e}", p.line()),
            None => e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        validators.push(record[0].to_string());
        let row = record
            .iter()
            .skip(1)
            .map(|cell| {
                let v = parse_number(cell).map_err(|e| format!("line {line}: {e}"))?;
                if v < 0.0 {
                    return Err(format!("line {line}: negative stake {v}"));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no validator rows".into());
    }
    let omega = AllocationMatrix::from_rows(rows).map_err(|e| e.to_string())?;
    Ok(LabeledAllocation {
        validators,
        ssps,
        omega,
    })
}

pub fn allocation_csv(a: &LabeledAllocation) -> String {
    let mut out = String::from("validator");
    for s in &a.ssps {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    for (id, row) in a.validators.iter().zip(a.omega.rows()) {
        out.push_str(id);
        for w in row {
            out.push(',');
            out.push_str(&w.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_text(dir, name, &(text + "\n"))
}

pub fn write_rows<T: Serialize>(dir: &Path, stem: &str, rows: &[T], json: bool) -> Result<(), CliError> {
    if json {
        return write_json(dir, &format!("{stem}.json"), &rows);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_text(dir, &format!("{stem}.csv"), &String::from_utf8_lossy(&bytes))
}
