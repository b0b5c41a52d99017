//! Per-patch nucleus count tables (CSV, header row, LF line endings).

use std::path::Path;

use crate::classes::{ClassOrder, CountVector, NUM_CLASSES};
use crate::error::{Error, Result};

/// Parses a counts table. Columns are matched to classes by header name, so
/// any column order is accepted as long as all six classes appear once.
pub fn parse_counts<R: std::io::Read>(input: R, order: &ClassOrder) -> Result<Vec<CountVector>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.len() != NUM_CLASSES {
        return Err(Error::Counts(format!(
            "expected {NUM_CLASSES} columns, header has {}",
            headers.len()
        )));
    }
    let mut column_class = [0u8; NUM_CLASSES];
    let mut seen = [false; NUM_CLASSES];
    for (col, name) in headers.iter().enumerate() {
        let class = order
            .class_of(name)
            .ok_or_else(|| Error::Counts(format!("unknown class column {name:?}")))?;
        if std::mem::replace(&mut seen[class as usize - 1], true) {
            return Err(Error::Counts(format!("duplicate class column {name:?}")));
        }
        column_class[col] = class;
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Counts(format!("row {r}: {e}")))?;
        if record.len() != NUM_CLASSES {
            return Err(Error::Counts(format!(
                "row {r}: expected {NUM_CLASSES} fields, found {}",
                record.len()
            )));
        }
        let mut counts = CountVector::default();
        for (col, field) in record.iter().enumerate() {
            let v: u64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Counts(format!("row {r}: {field:?} is not a non-negative integer")))?;
            counts[column_class[col] as usize - 1] = v;
        }
        rows.push(counts);
    }
    Ok(rows)
}

pub fn read_counts_csv(path: &Path, order: &ClassOrder) -> Result<Vec<CountVector>> {
    parse_counts(std::fs::File::open(path)?, order)
}

pub fn format_counts(rows: &[CountVector], order: &ClassOrder) -> String {
    let mut out = order.0.join(",");
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.0.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_counts_csv(path: &Path, rows: &[CountVector], order: &ClassOrder) -> Result<()> {
    std::fs::write(path, format_counts(rows, order))?;
    Ok(())
}
