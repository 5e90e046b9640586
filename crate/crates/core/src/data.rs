//! Datasets, seeded partitions, CSV ingestion and 2-D synthetic generators.

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "val" | "validation" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            other => Err(Error::UnknownPartition(other.to_string())),
        }
    }
}

/// Disjoint, covering index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    pub fn get(&self, part: Part) -> &[usize] {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    partition: Partition,
}

impl Dataset {
    /// Builds an unpartitioned dataset (every row in `train`). When
    /// `num_classes` is `None` it is inferred as `max(label) + 1`.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != labels.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} labels", features.nrows()),
                format!("{} labels", labels.len()),
            ));
        }
        let inferred = labels.iter().max().map_or(0, |&m| m + 1);
        let num_classes = match num_classes {
            Some(c) if c < inferred => {
                return Err(Error::shape(
                    "dataset labels",
                    format!("labels below {c}"),
                    format!("label {}", inferred - 1),
                ))
            }
            Some(c) => c,
            None => inferred,
        };
        let n = labels.len();
        Ok(Dataset {
            features,
            labels,
            num_classes,
            partition: Partition {
                train: (0..n).collect(),
                ..Partition::default()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Copies out the rows of one partition.
    pub fn part(&self, part: Part) -> (Array2<f64>, Vec<usize>) {
        let idx = self.partition.get(part);
        let x = self.features.select(Axis(0), idx);
        let y = idx.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    /// Seeded shuffle, then contiguous slices: validation first, then test,
    /// the remainder is training. Index sets are returned sorted.
    pub fn split(mut self, val_fraction: f64, test_fraction: f64, seed: u64) -> Result<Self> {
        let in_range = |f: f64| (0.0..1.0).contains(&f);
        if !in_range(val_fraction)
            || !in_range(test_fraction)
            || val_fraction + test_fraction >= 1.0
        {
            return Err(Error::InvalidConfig(format!(
                "split fractions must lie in [0, 1) and sum below 1 (val {val_fraction}, test {test_fraction})"
            )));
        }
        let n = self.len();
        let n_val = (n as f64 * val_fraction).round() as usize;
        let n_test = (n as f64 * test_fraction).round() as usize;
        if val_fraction > 0.0 && n_val == 0 {
            return Err(Error::EmptyPartition("val"));
        }
        if test_fraction > 0.0 && n_test == 0 {
            return Err(Error::EmptyPartition("test"));
        }
        if n_val + n_test >= n {
            return Err(Error::EmptyPartition("train"));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, Stream::Split));
        let mut val = order[..n_val].to_vec();
        let mut test = order[n_val..n_val + n_test].to_vec();
        let mut train = order[n_val + n_test..].to_vec();
        val.sort_unstable();
        test.sort_unstable();
        train.sort_unstable();
        self.partition = Partition { train, val, test };
        Ok(self)
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

/// Parses a numeric CSV with a header row. Features are every non-label
/// column in header order. Row numbers in errors count the header as row 1.
pub fn read_csv(reader: impl Read, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Csv {
            row: 1,
            message: "missing header row".into(),
        });
    }
    let label_idx = match header.iter().position(|h| h == label_column) {
        Some(i) => i,
        None => {
            let message = if header.iter().all(|h| h.parse::<f64>().is_ok()) {
                "missing header row (first row is numeric)".to_string()
            } else {
                format!("no column named `{label_column}` in header")
            };
            return Err(Error::Csv { row: 1, message });
        }
    };
    let width = header.len();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Csv {
                row,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                row,
                message: format!("non-numeric cell `{cell}` in column `{}`", &header[col]),
            })?;
            if col == label_idx {
                if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                    return Err(Error::Csv {
                        row,
                        message: format!("label `{cell}` is not a non-negative integer"),
                    });
                }
                labels.push(v as usize);
            } else if !v.is_finite() {
                return Err(Error::Csv {
                    row,
                    message: format!("non-finite cell `{cell}` in column `{}`", &header[col]),
                });
            } else {
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let features = Array2::from_shape_vec((labels.len(), width - 1), values)
        .expect("rows checked to be rectangular");
    Dataset::new(features, labels, None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    TwoMoons,
    GaussianBlobs,
    ConcentricRings,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::TwoMoons => "two_moons",
            SyntheticKind::GaussianBlobs => "gaussian_blobs",
            SyntheticKind::ConcentricRings => "concentric_rings",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            SyntheticKind::ConcentricRings => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" | "moons" => Ok(SyntheticKind::TwoMoons),
            "gaussian_blobs" | "blobs" => Ok(SyntheticKind::GaussianBlobs),
            "concentric_rings" | "rings" => Ok(SyntheticKind::ConcentricRings),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// 2-D toy classification data. Sample `i` belongs to class
/// `i % num_classes`, so class counts differ by at most one.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::InvalidConfig(format!(
            "synthetic datasets need n >= 10, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = stream(seed, Stream::Dataset);
    let jitter = Normal::new(0.0, noise).expect("noise validated");
    let classes = kind.num_classes();
    let mut features = Array2::<f64>::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);

    for i in 0..n {
        let class = i % classes;
        let (x, y) = match kind {
            SyntheticKind::TwoMoons => {
                let t = rng.random::<f64>() * PI;
                let (x, y) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                // centre on the origin, roughly unit spread
                ((x - 0.5) / 0.9, (y - 0.25) / 0.5)
            }
            SyntheticKind::GaussianBlobs => {
                let c = if class == 0 { -1.0 } else { 1.0 };
                (c, c)
            }
            SyntheticKind::ConcentricRings => {
                let t = rng.random::<f64>() * 2.0 * PI;
                let r = 0.4 + 0.6 * class as f64;
                (r * t.cos(), r * t.sin())
            }
        };
        let (dx, dy) = if noise > 0.0 {
            (jitter.sample(&mut rng), jitter.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        features[[i, 0]] = x + dx;
        features[[i, 1]] = y + dy;
        labels.push(class);
    }
    Dataset::new(features, labels, Some(classes))
}
