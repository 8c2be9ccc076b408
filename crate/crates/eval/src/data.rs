//! Reader for the Wisconsin Diagnostic Breast Cancer file format.

use std::path::Path;

use crate::error::{EvalError, Result};

pub const WDBC_FEATURES: usize = 30;

/// Labeled real-valued records. Label 1 is malignant.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub ids: Vec<u64>,
    pub labels: Vec<u8>,
    pub features: Vec<Vec<f64>>,
}

impl RawDataset {
    /// Checks shape and that both classes occur.
    pub fn new(ids: Vec<u64>, labels: Vec<u8>, features: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != features.len() || ids.len() != labels.len() {
            return Err(EvalError::Invalid("ids, labels and feature rows differ in length".into()));
        }
        if labels.len() < 2 {
            return Err(EvalError::Invalid("need at least two records".into()));
        }
        let width = features[0].len();
        if width == 0 || features.iter().any(|f| f.len() != width) {
            return Err(EvalError::Invalid("feature rows must share a non-zero width".into()));
        }
        if !labels.contains(&0) || !labels.contains(&1) {
            return Err(EvalError::Invalid("both classes must be present".into()));
        }
        Ok(RawDataset { ids, labels, features })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn malignant(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn benign(&self) -> usize {
        self.len() - self.malignant()
    }
}

pub fn load_wdbc(path: impl AsRef<Path>) -> Result<RawDataset> {
    parse_wdbc(&std::fs::read_to_string(path)?)
}

/// Parses `id,diagnosis,f1,…,f30` rows. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn parse_wdbc(text: &str) -> Result<RawDataset> {
    let (mut ids, mut labels, mut features) = (Vec::new(), Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        if cols.len() != WDBC_FEATURES + 2 {
            return Err(EvalError::Parse {
                line,
                reason: format!("expected {} columns, found {}", WDBC_FEATURES + 2, cols.len()),
            });
        }
        let id = cols[0]
            .parse()
            .map_err(|_| EvalError::Parse { line, reason: format!("bad id `{}`", cols[0]) })?;
        let label = match cols[1] {
            "M" => 1,
            "B" => 0,
            other => {
                return Err(EvalError::Parse { line, reason: format!("bad diagnosis `{other}`") })
            }
        };
        let feats = cols[2..]
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(EvalError::Parse { line, reason: format!("bad feature value `{c}`") }),
            })
            .collect::<Result<Vec<_>>>()?;
        ids.push(id);
        labels.push(label);
        features.push(feats);
    }
    if labels.is_empty() {
        return Err(EvalError::Parse { line: 0, reason: "no records".into() });
    }
    RawDataset::new(ids, labels, features)
}
