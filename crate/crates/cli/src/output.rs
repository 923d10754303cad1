//! Plot-data files.
//!
//! Curves are CSV: one header line of column names, then one row per sample
//! with every value printed as `{:.15e}` and rows separated by `\n`.
//!
//! Maps are a whitespace matrix preceded by `#` header lines:
//!
//! ```text
//! # biphoton matrix v1
//! # quantity: G2
//! # rows: x1, n = 64, x1[i] = -1.280000000000000e-4 + i * 4.000000000000000e-6
//! # cols: x2, n = 64, x2[j] = -1.280000000000000e-4 + j * 4.000000000000000e-6
//! <row i = 0: n2 values separated by single spaces>
//! ...
//! ```
//!
//! Output is a pure function of the data, so equal inputs give equal bytes.

use std::fmt::Write as _;
use std::path::Path;

use biphoton::grid::TransverseGrid;
use ndarray::Array2;

use crate::CliError;

fn num(v: f64) -> String {
    format!("{v:.15e}")
}

pub fn curve_csv(header: &[&str], columns: &[&[f64]]) -> String {
    assert_eq!(header.len(), columns.len(), "one header per column");
    let rows = columns.first().map_or(0, |c| c.len());
    assert!(columns.iter().all(|c| c.len() == rows), "columns of equal length");
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| num(c[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn axis_line(label: &str, name: &str, index: &str, g: &TransverseGrid) -> String {
    format!(
        "# {label}: {name}, n = {}, {name}[{index}] = {} + {index} * {}\n",
        g.n(),
        num(g.x(0)),
        num(g.dx())
    )
}

pub fn matrix_text(quantity: &str, rows: &TransverseGrid, cols: &TransverseGrid, values: &Array2<f64>) -> String {
    assert_eq!(values.dim(), (rows.n(), cols.n()), "matrix matches its grids");
    let mut out = String::from("# biphoton matrix v1\n");
    let _ = writeln!(out, "# quantity: {quantity}");
    out.push_str(&axis_line("rows", "x1", "i", rows));
    out.push_str(&axis_line("cols", "x2", "j", cols));
    for row in values.rows() {
        let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
