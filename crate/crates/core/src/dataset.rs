//! Labelled regression samples and CSV ingestion with deterministic
//! train/validation/test splits.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// One `(a, b)` pair: feature vector and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub a: Vector,
    pub b: f64,
}

/// Row ranges of the three splits, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Splits {
    pub train: (usize, usize),
    pub validation: (usize, usize),
    pub test: (usize, usize),
}

impl Splits {
    /// `⌈m/3⌉` rows for training and validation each; the test split takes the remainder.
    pub fn for_rows(m: usize) -> Self {
        let k = m.div_ceil(3);
        let tr_end = k.min(m);
        let va_end = (2 * k).min(m);
        Splits {
            train: (0, tr_end),
            validation: (tr_end, va_end),
            test: (va_end, m),
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (
            self.train.1 - self.train.0,
            self.validation.1 - self.validation.0,
            self.test.1 - self.test.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub path: Option<PathBuf>,
    pub rows: usize,
    pub shuffle_seed: Option<u64>,
    pub splits: Splits,
}

#[derive(Debug, Clone)]
pub struct SampleTable {
    samples: Vec<Sample>,
    columns: Vec<String>,
    provenance: Provenance,
}

impl SampleTable {
    /// Build from in-memory rows (already in stream order); no standardization.
    pub fn from_samples(samples: Vec<Sample>, columns: Vec<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d2 = samples[0].a.len();
        for s in &samples {
            if s.a.len() != d2 {
                return Err(Error::DimensionMismatch {
                    what: "sample feature length",
                    expected: d2,
                    got: s.a.len(),
                });
            }
        }
        let rows = samples.len();
        Ok(SampleTable {
            samples,
            columns,
            provenance: Provenance {
                path: None,
                rows,
                shuffle_seed: None,
                splits: Splits::for_rows(rows),
            },
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].a.len()
    }

    pub fn rows(&self) -> usize {
        self.samples.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    fn slice(&self, (lo, hi): (usize, usize)) -> &[Sample] {
        &self.samples[lo..hi]
    }

    pub fn train(&self) -> &[Sample] {
        self.slice(self.provenance.splits.train)
    }

    pub fn validation(&self) -> &[Sample] {
        self.slice(self.provenance.splits.validation)
    }

    pub fn test(&self) -> &[Sample] {
        self.slice(self.provenance.splits.test)
    }

    /// Standardize every feature column with the training split's mean and
    /// standard deviation. Constant columns are only centered.
    pub fn standardize_with_train_stats(&mut self) {
        let (lo, hi) = self.provenance.splits.train;
        let n = (hi - lo) as f64;
        if n == 0.0 {
            return;
        }
        let d = self.feature_dim();
        for j in 0..d {
            let mean = self.samples[lo..hi].iter().map(|s| s.a[j]).sum::<f64>() / n;
            let var = self.samples[lo..hi]
                .iter()
                .map(|s| (s.a[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            for s in &mut self.samples {
                s.a[j] = (s.a[j] - mean) * scale;
            }
        }
    }
}

/// Read a headered CSV of numeric cells. `label_column` names the target;
/// every other column is a feature. Rows are optionally shuffled with a seed,
/// then split and standardized with training statistics.
pub fn load_csv(path: &Path, label_column: &str, shuffle_seed: Option<u64>) -> Result<SampleTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse {
            row: 1,
            column: 0,
            message: format!("label column '{label_column}' not found"),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            message: "no feature columns".into(),
        });
    }

    let mut samples = Vec::new();
    for (k, record) in reader.records().enumerate() {
        // header is line 1
        let row = k + 2;
        let record = record.map_err(|e| csv_error(e, row))?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        let mut features = Vec::with_capacity(feature_names.len());
        let mut label = 0.0;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("non-numeric cell '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("non-finite cell '{cell}'"),
                });
            }
            if c == label_idx {
                label = v;
            } else {
                features.push(v);
            }
        }
        samples.push(Sample {
            a: Vector::from_vec(features),
            b: label,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(seed) = shuffle_seed {
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut table = SampleTable::from_samples(samples, feature_names)?;
    table.provenance.path = Some(path.to_path_buf());
    table.provenance.shuffle_seed = shuffle_seed;
    table.standardize_with_train_stats();
    Ok(table)
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    let row = e.position().map_or(row, |p| p.line() as usize);
    Error::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}
