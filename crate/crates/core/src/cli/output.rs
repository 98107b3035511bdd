use std::fs;
use std::io;
use std::path::Path;

use faer::{c64, MatRef};
use serde::Serialize;

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// A CSV table whose first header cell is the schema tag and whose first
/// column is the row index.
pub(crate) struct Table {
    schema: &'static str,
    columns: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &'static str, columns: &'static [&'static str]) -> Self {
        Table {
            schema,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![self.schema];
        header.extend_from_slice(self.columns);
        w.write_record(&header)?;
        for (k, row) in self.rows.iter().enumerate() {
            w.write_field(k.to_string())?;
            w.write_record(row)?;
        }
        w.flush()
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

/// Dense matrix as `(i, j, re, im)` rows, 0-based, nonzero entries only.
pub(crate) fn write_matrix(path: &Path, m: MatRef<'_, c64>) -> io::Result<()> {
    let mut table = Table::new("bandlab/matrix@1", &["i", "j", "re", "im"]);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                table.push(vec![i.to_string(), j.to_string(), fmt_f64(v.re), fmt_f64(v.im)]);
            }
        }
    }
    table.write(path)
}
