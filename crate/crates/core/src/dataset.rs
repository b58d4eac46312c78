//! Tabular binary-classification data: CSV ingestion with a JSON schema
//! sidecar, ±1 label encoding, and seeded 80/10/10 splits.
//!
//! Shuffles use ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`) followed by
//! `rand`'s Fisher-Yates `SliceRandom::shuffle`, so a `(row count, seed)` pair
//! always yields the same permutation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Positive class label.
pub const POSITIVE: i8 = 1;
/// Negative class label.
pub const NEGATIVE: i8 = -1;

/// Default train/validation/test fractions.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.80, 0.10, 0.10);

const MISSING_TOKENS: [&str; 4] = ["", "?", "NA", "NaN"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// JSON sidecar describing a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub label_column: String,
    pub positive_label: String,
    /// Optional; when absent the first non-positive token seen becomes the
    /// negative class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_label: Option<String>,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Feature matrix plus labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: DenseMatrix,
    pub labels: Vec<i8>,
    pub feature_names: Vec<String>,
    /// `(positive, negative)` tokens used to decode labels.
    pub label_tokens: (String, String),
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: DenseMatrix, labels: Vec<i8>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if let Some(row) = labels.iter().position(|&y| y != POSITIVE && y != NEGATIVE) {
            return Err(Error::UnknownLabel {
                row,
                token: labels[row].to_string(),
            });
        }
        let feature_names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            name: name.into(),
            features,
            labels,
            feature_names,
            label_tokens: ("+1".into(), "-1".into()),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.n_features();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Dataset {
            name: self.name.clone(),
            features: DenseMatrix::from_vec(indices.len(), d, data)
                .expect("subset dimensions are consistent"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            label_tokens: self.label_tokens.clone(),
        }
    }

    pub fn decode_labels(&self) -> Vec<String> {
        self.labels.iter().map(|&y| self.decode_label(y).to_string()).collect()
    }

    pub fn decode_label(&self, y: i8) -> &str {
        if y == POSITIVE {
            &self.label_tokens.0
        } else {
            &self.label_tokens.1
        }
    }

    pub fn encode_label(&self, token: &str) -> Option<i8> {
        if token == self.label_tokens.0 {
            Some(POSITIVE)
        } else if token == self.label_tokens.1 {
            Some(NEGATIVE)
        } else {
            None
        }
    }
}

enum RawColumn {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

fn is_missing(token: &str) -> bool {
    MISSING_TOKENS.contains(&token.trim())
}

/// Loads a CSV file described by `schema`. Labels become ±1, categorical
/// columns are one-hot encoded in sorted category order, missing numeric
/// values take the column median and missing categories the column mode.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();

    let label_idx = header
        .iter()
        .position(|h| *h == schema.label_column)
        .ok_or_else(|| Error::MissingLabelColumn(schema.label_column.clone()))?;

    let kinds: BTreeMap<&str, ColumnKind> = schema
        .columns
        .iter()
        .map(|c| (c.name.as_str(), c.kind))
        .collect();
    for c in &schema.columns {
        if !header.contains(&c.name) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("column `{}` not in CSV header", c.name),
            });
        }
    }
    let mut feature_cols = Vec::new();
    for (j, h) in header.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        let kind = *kinds.get(h.as_str()).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: format!("CSV column `{h}` has no kind in schema"),
        })?;
        feature_cols.push((j, h.clone(), kind));
    }
    if feature_cols.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: "no feature columns".into(),
        });
    }

    let mut raw: Vec<RawColumn> = feature_cols
        .iter()
        .map(|(_, _, k)| match k {
            ColumnKind::Numeric => RawColumn::Numeric(Vec::new()),
            ColumnKind::Categorical => RawColumn::Categorical(Vec::new()),
        })
        .collect();
    let positive = schema.positive_label.as_str();
    let mut negative = schema.negative_label.clone();
    let mut labels = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let token = record.get(label_idx).unwrap_or("");
        let y = if token == positive {
            POSITIVE
        } else {
            match &negative {
                Some(neg) if neg == token => NEGATIVE,
                None if !is_missing(token) => {
                    negative = Some(token.to_string());
                    NEGATIVE
                }
                _ => {
                    return Err(Error::UnknownLabel {
                        row,
                        token: token.to_string(),
                    })
                }
            }
        };
        labels.push(y);
        for ((j, name, _), col) in feature_cols.iter().zip(raw.iter_mut()) {
            let tok = record.get(*j).unwrap_or("");
            match col {
                RawColumn::Numeric(v) => {
                    if is_missing(tok) {
                        v.push(None);
                    } else {
                        let x: f64 = tok.parse().map_err(|_| Error::NonNumeric {
                            row,
                            column: name.clone(),
                            token: tok.to_string(),
                        })?;
                        if !x.is_finite() {
                            return Err(Error::NonNumeric {
                                row,
                                column: name.clone(),
                                token: tok.to_string(),
                            });
                        }
                        v.push(Some(x));
                    }
                }
                RawColumn::Categorical(v) => {
                    v.push((!is_missing(tok)).then(|| tok.to_string()));
                }
            }
        }
    }

    let m = labels.len();
    if m == 0 {
        return Err(Error::NoDataRows);
    }

    // expand into the dense feature matrix
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for ((_, name, _), col) in feature_cols.iter().zip(raw) {
        match col {
            RawColumn::Numeric(v) => {
                let missing = v.iter().filter(|x| x.is_none()).count();
                let fill = median(v.iter().flatten().copied().collect());
                if missing > 0 {
                    log::info!("{name}: imputed {missing} missing values with median {fill}");
                }
                columns.push(v.into_iter().map(|x| x.unwrap_or(fill)).collect());
                names.push(name.clone());
            }
            RawColumn::Categorical(v) => {
                let missing = v.iter().filter(|x| x.is_none()).count();
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for c in v.iter().flatten() {
                    *counts.entry(c.as_str()).or_default() += 1;
                }
                // mode; BTreeMap order makes ties resolve to the smallest token
                let mode = counts
                    .iter()
                    .fold(None::<(&str, usize)>, |best, (&k, &n)| match best {
                        Some((_, bn)) if bn >= n => best,
                        _ => Some((k, n)),
                    })
                    .map(|(k, _)| k.to_string())
                    .unwrap_or_default();
                if missing > 0 {
                    log::info!("{name}: imputed {missing} missing categories with mode `{mode}`");
                }
                let levels: BTreeSet<String> = v
                    .iter()
                    .map(|c| c.clone().unwrap_or_else(|| mode.clone()))
                    .collect();
                for level in &levels {
                    columns.push(
                        v.iter()
                            .map(|c| {
                                let c = c.as_deref().unwrap_or(&mode);
                                if c == level {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    );
                    names.push(format!("{name}={level}"));
                }
            }
        }
    }

    let d = columns.len();
    let mut data = Vec::with_capacity(m * d);
    for i in 0..m {
        data.extend(columns.iter().map(|c| c[i]));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset {
        name,
        features: DenseMatrix::from_vec(m, d, data)?,
        labels,
        feature_names: names,
        label_tokens: (
            schema.positive_label.clone(),
            negative.unwrap_or_else(|| format!("not_{}", schema.positive_label)),
        ),
    })
}

/// Loads `<stem>.csv` with its `<stem>.json` schema sitting next to it.
pub fn load_with_sidecar(csv_path: impl AsRef<Path>) -> Result<Dataset> {
    let csv_path = csv_path.as_ref();
    let schema = Schema::from_json_file(csv_path.with_extension("json"))?;
    load_csv(csv_path, &schema)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffles `0..m` with `seed` and cuts it into three contiguous blocks whose
/// sizes are `round(m·f_train)`, `round(m·f_val)` and the remainder.
pub fn make_split(m: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitPlan> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(*f > 0.0)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSplit(format!(
            "fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let n_train = (m as f64 * ft).round() as usize;
    let n_val = (m as f64 * fv).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= m {
        return Err(Error::InvalidSplit(format!(
            "{m} rows are too few for a {ft}/{fv}/{fs} split"
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(SplitPlan {
        train: idx,
        validation,
        test,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub repetitions: usize,
    pub base_seed: u64,
    pub splits: Vec<SplitPlan>,
}

/// One independent random split per repetition, seeded `base_seed + i`.
pub fn make_run_plan(m: usize, repetitions: usize, base_seed: u64) -> Result<RunPlan> {
    if repetitions == 0 {
        return Err(Error::InvalidSplit("repetitions must be at least 1".into()));
    }
    let splits = (0..repetitions)
        .map(|i| make_split(m, DEFAULT_FRACTIONS, base_seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    Ok(RunPlan {
        repetitions,
        base_seed,
        splits,
    })
}
