//! Task-indexed CSV files and atomic output.
//!
//! Format: header `task,y,x1,...,xp`, one row per observation. `task` is a
//! positive integer; an empty `y` marks an unlabeled row. Labeled and
//! unlabeled rows of a task become separate samples with the same id.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use invariant_transfer::{MultiTaskDataset, TaskSample};
use nalgebra::{DMatrix, DVector};

use crate::error::{HarnessError, Result};

#[derive(Default)]
struct Rows {
    labeled: Vec<f64>,
    targets: Vec<f64>,
    unlabeled: Vec<f64>,
}

/// Reads a dataset from CSV text.
pub fn parse_csv(reader: impl std::io::Read) -> Result<MultiTaskDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| csv_error(&e))?,
        None => {
            return Err(HarnessError::ParseError {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.len() < 3 || names[0] != "task" || names[1] != "y" {
        return Err(HarnessError::ParseError {
            line: 1,
            message: "header must be task,y,x1,...,xp".into(),
        });
    }
    let width = names.len();
    let p = width - 2;
    let mut tasks: BTreeMap<u32, Rows> = BTreeMap::new();
    for record in records {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(HarnessError::InconsistentWidth {
                line,
                expected: width,
                found: record.len(),
            });
        }
        let task: u32 = match record[0].trim().parse() {
            Ok(t) if t >= 1 => t,
            _ => {
                return Err(HarnessError::ParseError {
                    line,
                    message: format!("task id {:?} is not a positive integer", &record[0]),
                })
            }
        };
        let number = |field: &str, what: &str| -> Result<f64> {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(HarnessError::ParseError {
                    line,
                    message: format!("{what} {field:?} is not a finite number"),
                }),
            }
        };
        let rows = tasks.entry(task).or_default();
        let y_field = record[1].trim();
        let dest = if y_field.is_empty() {
            &mut rows.unlabeled
        } else {
            rows.targets.push(number(y_field, "y")?);
            &mut rows.labeled
        };
        for (j, field) in record.iter().skip(2).enumerate() {
            dest.push(number(field, &names[j + 2])?);
        }
    }
    let mut samples = Vec::new();
    for (id, rows) in tasks {
        if !rows.targets.is_empty() {
            let n = rows.targets.len();
            samples.push(TaskSample::labeled(
                id,
                DMatrix::from_row_slice(n, p, &rows.labeled),
                DVector::from_vec(rows.targets),
            ));
        }
        if !rows.unlabeled.is_empty() {
            let n = rows.unlabeled.len() / p;
            samples.push(TaskSample::unlabeled(id, DMatrix::from_row_slice(n, p, &rows.unlabeled)));
        }
    }
    let mut ds = MultiTaskDataset::new(samples, p);
    ds.feature_names = Some(names[2..].to_vec());
    Ok(ds)
}

fn csv_error(e: &csv::Error) -> HarnessError {
    HarnessError::ParseError {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

pub fn load_csv(path: &Path) -> Result<MultiTaskDataset> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_csv(std::io::BufReader::new(file))
}

/// Shortest text that parses back to the same value.
fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

/// Renders a dataset as CSV; labeled rows of a task precede its unlabeled rows.
pub fn csv_string(ds: &MultiTaskDataset) -> String {
    let mut out = String::from("task,y");
    match &ds.feature_names {
        Some(names) if names.len() == ds.p => names.iter().for_each(|n| {
            out.push(',');
            out.push_str(n);
        }),
        _ => (1..=ds.p).for_each(|j| out.push_str(&format!(",x{j}"))),
    }
    out.push('\n');
    let mut order: Vec<&TaskSample> = ds.tasks.iter().collect();
    order.sort_by_key(|t| (t.task_id, !t.is_labeled()));
    for t in order {
        for i in 0..t.n_rows() {
            out.push_str(&t.task_id.to_string());
            out.push(',');
            if let Some(y) = &t.targets {
                out.push_str(&fmt_float(y[i]));
            }
            for j in 0..ds.p {
                out.push(',');
                out.push_str(&fmt_float(t.features[(i, j)]));
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_csv(ds: &MultiTaskDataset, path: &Path) -> Result<()> {
    write_atomic(path, csv_string(ds).as_bytes())
}

/// Writes to a temporary file in the target directory, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}
