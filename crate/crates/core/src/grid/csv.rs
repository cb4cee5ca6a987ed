//! Field export as CSV (one row per time level, one column per spatial node)
//! and the matching reader.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::report::format_number;

impl Field {
    /// Header `t,node_0,…,node_{N−1}` followed by one row per time level.
    pub fn to_csv(&self) -> String {
        let grid = self.grid();
        let n = grid.nspace();
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",node_{i}"));
        }
        out.push('\n');
        for level in 0..grid.nt() {
            out.push_str(&format_number(grid.time(level)));
            for &v in self.level(level) {
                out.push(',');
                out.push_str(&format_number(v));
            }
            out.push('\n');
        }
        out
    }
}

/// A parsed field CSV, not yet tied to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub times: Vec<f64>,
    pub nodes: usize,
    /// Row-major, `times.len() * nodes` values.
    pub values: Vec<f64>,
}

impl FieldTable {
    /// Attach the table to a grid with matching shape and time levels.
    pub fn into_field(self, grid: &Grid) -> Result<Field> {
        if self.nodes != grid.nspace() || self.times.len() != grid.nt() {
            return Err(Error::InvalidData(format!(
                "table is {}x{}, grid needs {}x{}",
                self.times.len(),
                self.nodes,
                grid.nt(),
                grid.nspace()
            )));
        }
        let tol = 1e-9 * grid.domain().t_final();
        for (level, &t) in self.times.iter().enumerate() {
            if (t - grid.time(level)).abs() > tol {
                return Err(Error::InvalidData(format!(
                    "time level {level}: table has t = {t}, grid has {}",
                    grid.time(level)
                )));
            }
        }
        Field::from_values(grid, self.values)
    }
}

/// Parse the format written by [`Field::to_csv`].
pub fn read_field_csv(text: &str) -> Result<FieldTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let header: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if header.first() != Some(&"t") {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be `t`".into(),
        });
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if *name != format!("node_{i}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("column {} must be `node_{i}`, got `{name}`", i + 1),
            });
        }
    }
    let nodes = header.len() - 1;
    if nodes == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no node columns".into(),
        });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("column {}: `{cell}` is not a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("column {}: non-finite value", col + 1),
                });
            }
            if col == 0 {
                if let Some(&prev) = times.last() {
                    if v <= prev {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "time column must increase".into(),
                        });
                    }
                }
                times.push(v);
            } else {
                values.push(v);
            }
            count += 1;
        }
        if count != nodes + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, got {count}", nodes + 1),
            });
        }
    }
    Ok(FieldTable {
        times,
        nodes,
        values,
    })
}
