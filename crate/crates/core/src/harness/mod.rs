//! Dataset ingestion, train/test splitting and experiment orchestration —
//! the machinery behind the CLI.

mod config;
mod experiment;
pub mod synthetic;

pub use config::{DatasetFormat, ExperimentConfig, FullLpKernel, Method};
pub use experiment::{run_experiment, run_experiment_on, PhaseTiming, Report};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A dense feature matrix with binary labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub x: Array2<f64>,
    pub y: Vec<i8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Array2<f64>, y: Vec<i8>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: y.len(),
            });
        }
        if let Some(((_, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { col });
        }
        if !(y.contains(&1) && y.contains(&-1)) {
            return Err(Error::BinaryTasksOnly {
                classes: usize::from(y.contains(&1)) + usize::from(y.contains(&-1)),
            });
        }
        Ok(Dataset {
            name: name.into(),
            x,
            y,
        })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    /// Seeded row subsample (without replacement) keeping both classes;
    /// returns the dataset unchanged when `rows` is not smaller.
    pub fn subsample(&self, rows: usize, seed: u64) -> Result<Dataset> {
        if rows >= self.rows() {
            return Ok(self.clone());
        }
        if rows < 2 {
            return Err(Error::InvalidParameter(
                "subsample needs at least two rows".into(),
            ));
        }
        let order = crate::nystrom::shuffled_indices(self.rows(), seed);
        let mut picked: Vec<usize> = order.iter().copied().take(rows).collect();
        // Keep both classes present: swap in the first row of a missing
        // class from the remainder if needed.
        for class in [-1i8, 1] {
            if !picked.iter().any(|&i| self.y[i] == class) {
                if let Some(&repl) = order[rows..].iter().find(|&&i| self.y[i] == class) {
                    picked[rows - 1] = repl;
                } else {
                    return Err(Error::ImpossibleClassCoverage);
                }
            }
        }
        let x = Array2::from_shape_fn((rows, self.cols()), |(i, j)| self.x[[picked[i], j]]);
        let y = picked.iter().map(|&i| self.y[i]).collect();
        Dataset::new(self.name.clone(), x, y)
    }
}

/// Loads a dataset from disk.
///
/// CSV rows are `label,feature,...`; svmlight rows are
/// `label index:value ...` with 1-based indices densified to the maximum
/// seen index. Raw labels are reduced to the two most frequent values
/// (rows carrying any other label are dropped) and mapped to {-1, +1}
/// with the larger raw value becoming +1.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_dataset(&text, format, name)
}

fn parse_dataset(text: &str, format: DatasetFormat, name: String) -> Result<Dataset> {
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut cols = 0usize;

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        match format {
            DatasetFormat::Csv => {
                let mut fields = line.split(',');
                let label: f64 = parse_field(fields.next(), lineno, "label")?;
                let mut row = Vec::new();
                for (j, field) in fields.enumerate() {
                    row.push((j, parse_field(Some(field), lineno, "feature")?));
                }
                if rows.is_empty() {
                    cols = row.len();
                } else if row.len() != cols {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected {} features, found {}", cols, row.len()),
                    });
                }
                raw_labels.push(label);
                rows.push(row);
            }
            DatasetFormat::Svmlight => {
                let mut fields = line.split_whitespace();
                let label: f64 = parse_field(fields.next(), lineno, "label")?;
                let mut row = Vec::new();
                for field in fields {
                    let (idx, val) = field.split_once(':').ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: format!("expected index:value, found {field:?}"),
                    })?;
                    let idx: usize = idx.trim().parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad feature index {idx:?}"),
                    })?;
                    if idx == 0 {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "svmlight feature indices are 1-based".into(),
                        });
                    }
                    let val: f64 = val.trim().parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad feature value {val:?}"),
                    })?;
                    cols = cols.max(idx);
                    row.push((idx - 1, val));
                }
                raw_labels.push(label);
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }

    // Two most frequent raw labels survive; everything else is dropped.
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for &l in &raw_labels {
        match counts.iter_mut().find(|(v, _)| *v == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    if counts.len() < 2 {
        return Err(Error::BinaryTasksOnly {
            classes: counts.len(),
        });
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.partial_cmp(&b.0).unwrap()));
    let (a, b) = (counts[0].0, counts[1].0);
    let (neg, pos) = if a < b { (a, b) } else { (b, a) };

    let kept: Vec<usize> = (0..rows.len())
        .filter(|&i| raw_labels[i] == neg || raw_labels[i] == pos)
        .collect();
    let mut x = Array2::<f64>::zeros((kept.len(), cols));
    let mut y = Vec::with_capacity(kept.len());
    for (out_i, &src) in kept.iter().enumerate() {
        for &(j, v) in &rows[src] {
            x[[out_i, j]] = v;
        }
        y.push(if raw_labels[src] == pos { 1 } else { -1 });
    }
    Dataset::new(name, x, y)
}

fn parse_field(field: Option<&str>, line: usize, what: &str) -> Result<f64> {
    let field = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} {field:?}"),
    })
}

/// Writes a dataset as `label,feature,...` CSV with full float precision,
/// so a reload reproduces it bit for bit.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for i in 0..dataset.rows() {
        write!(out, "{}", dataset.y[i]).expect("string write");
        for j in 0..dataset.cols() {
            write!(out, ",{:.17e}", dataset.x[[i, j]]).expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Train/test assignment: `f0` carries the revealed labels, `test_mask`
/// marks the held-out rows.
#[derive(Debug, Clone)]
pub struct Split {
    pub f0: Vec<f64>,
    pub test_mask: Vec<bool>,
}

impl Split {
    pub fn test_indices(&self) -> Vec<usize> {
        self.test_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_count(&self) -> usize {
        self.f0.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Holds out `test_fraction` of samples, then reveals `train_fraction`
/// of all samples (drawn from the non-test remainder) as labeled.
/// Redraws the training selection within the same seed stream until both
/// classes are covered; gives up with `ImpossibleClassCoverage` when the
/// remainder cannot cover them.
pub fn split_train_test(
    y: &[i8],
    test_fraction: f64,
    train_fraction: f64,
    seed: u64,
) -> Result<Split> {
    let n = y.len();
    if !(test_fraction > 0.0 && test_fraction < 1.0)
        || !(train_fraction > 0.0 && train_fraction < 1.0)
    {
        return Err(Error::InvalidParameter(
            "split fractions must lie in (0, 1)".into(),
        ));
    }
    if n < 3 {
        return Err(Error::InvalidParameter(
            "need at least three samples to split".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 2);
    let mut test_mask = vec![false; n];
    for &i in &order[..n_test] {
        test_mask[i] = true;
    }
    let mut remainder: Vec<usize> = order[n_test..].to_vec();
    let n_train = ((n as f64 * train_fraction).round() as usize)
        .clamp(2, remainder.len());

    for _attempt in 0..1000 {
        let chosen = &remainder[..n_train];
        let has_pos = chosen.iter().any(|&i| y[i] == 1);
        let has_neg = chosen.iter().any(|&i| y[i] == -1);
        if has_pos && has_neg {
            let mut f0 = vec![0.0; n];
            for &i in chosen {
                f0[i] = f64::from(y[i]);
            }
            return Ok(Split { f0, test_mask });
        }
        // Resample the training selection from the same stream.
        for i in (1..remainder.len()).rev() {
            let j = rng.random_range(0..=i);
            remainder.swap(i, j);
        }
    }
    Err(Error::ImpossibleClassCoverage)
}
