//! Min-max quantization onto the `g × g` grid.

use kish_core::{LabeledDatabase, RingParams};

use crate::error::{EvalError, Result};

/// Affine map of one axis: `v = round((x - min) · scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisMap {
    pub min: f64,
    pub scale: f64,
}

impl AxisMap {
    pub fn quantize(&self, x: f64, grid: u64) -> u64 {
        ((x - self.min) * self.scale).round_ties_even().clamp(0.0, (grid - 1) as f64) as u64
    }

    /// Centre of cell `v`. A degenerate axis maps back to its single value.
    pub fn dequantize(&self, v: u64) -> f64 {
        if self.scale == 0.0 {
            self.min
        } else {
            self.min + v as f64 / self.scale
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    pub grid: u64,
    pub points: Vec<Vec<u64>>,
    pub labels: Vec<u8>,
    pub axes: Vec<AxisMap>,
    /// Axes whose values were all equal; every point got coordinate 0.
    pub degenerate_axes: Vec<usize>,
}

impl GridDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn malignant(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Maps a real point with the same per-axis transform as the dataset.
    pub fn quantize_point(&self, x: &[f64]) -> Vec<u64> {
        self.axes.iter().zip(x).map(|(a, &v)| a.quantize(v, self.grid)).collect()
    }

    pub fn ring(&self) -> Result<RingParams> {
        Ok(kish_core::select_ring_params(self.grid, self.axes.len(), self.len())?)
    }

    pub fn database(&self) -> Result<LabeledDatabase> {
        Ok(LabeledDatabase::new(self.points.clone(), self.labels.clone(), &self.ring()?)?)
    }

    /// The dataset without point `i`.
    pub fn without(&self, i: usize) -> GridDataset {
        let mut out = self.clone();
        out.points.remove(i);
        out.labels.remove(i);
        out
    }
}

/// Scales each axis so its minimum maps to 0 and its maximum to `g - 1`,
/// rounding half to even.
pub fn quantize(points: &[[f64; 2]], labels: &[u8], grid: u64) -> Result<GridDataset> {
    if grid < 2 {
        return Err(EvalError::Invalid(format!("grid must be >= 2, got {grid}")));
    }
    if points.len() != labels.len() || points.is_empty() {
        return Err(EvalError::Invalid("need one label per point and at least one point".into()));
    }
    let mut axes = Vec::with_capacity(2);
    let mut degenerate_axes = Vec::new();
    for a in 0..2 {
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[a]), hi.max(p[a])));
        let scale = if hi > lo {
            (grid - 1) as f64 / (hi - lo)
        } else {
            degenerate_axes.push(a);
            0.0
        };
        axes.push(AxisMap { min: lo, scale });
    }
    let grid_points = points
        .iter()
        .map(|p| (0..2).map(|a| axes[a].quantize(p[a], grid)).collect())
        .collect();
    Ok(GridDataset {
        grid,
        points: grid_points,
        labels: labels.to_vec(),
        axes,
        degenerate_axes,
    })
}
