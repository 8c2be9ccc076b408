//! Circuit-cost sweeps over grid size and database size.

use std::time::Duration;

use kish_core::classifier::{encrypt_query, server_trace, LabeledDatabase, ProtocolParams};
use kish_core::{keygen, seed, select_ring_params, Circuit};

use crate::error::{EvalError, Result};
use crate::grid::quantize;

pub const BENCH_CSV_HEADER: &str = "grid,n,mult_gates,max_depth,wall_time_ms,peak_estimate";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Grid sizes swept at database size `grid_sweep_n`.
    pub grids: Vec<u64>,
    pub grid_sweep_n: usize,
    /// Database sizes swept at grid `n_sweep_grid`.
    pub ns: Vec<usize>,
    pub n_sweep_grid: u64,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub grid: u64,
    pub n: usize,
    pub mult_gates: u64,
    pub max_depth: u32,
    pub wall_time: Duration,
    /// `mult_gates · max_depth³`, a unitless proxy for the cost of running
    /// the same circuit under a leveled scheme, where per-gate cost grows
    /// roughly with the cube of the depth.
    pub peak_estimate: f64,
}

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.0}",
            self.grid,
            self.n,
            self.mult_gates,
            self.max_depth,
            self.wall_time.as_secs_f64() * 1e3,
            self.peak_estimate
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Repeats the points cyclically until there are exactly `n`.
pub fn resize_cyclic<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    items.iter().cycle().take(n).cloned().collect()
}

/// One metered server run per grid size (at fixed `n`) and per database size
/// (at fixed grid). Larger databases are built by duplicating points.
pub fn sweep_benchmarks(
    points: &[[f64; 2]],
    labels: &[u8],
    spec: &SweepSpec,
) -> Result<Vec<BenchRow>> {
    if spec.grids.is_empty() && spec.ns.is_empty() {
        return Err(EvalError::Invalid("nothing to sweep".into()));
    }
    let mut rows = Vec::with_capacity(spec.grids.len() + spec.ns.len());
    for &g in &spec.grids {
        rows.push(bench_point(points, labels, g, spec.grid_sweep_n, spec)?);
    }
    for &n in &spec.ns {
        rows.push(bench_point(points, labels, spec.n_sweep_grid, n, spec)?);
    }
    Ok(rows)
}

fn bench_point(
    points: &[[f64; 2]],
    labels: &[u8],
    grid: u64,
    n: usize,
    spec: &SweepSpec,
) -> Result<BenchRow> {
    if spec.k >= n {
        return Err(EvalError::Invalid(format!("k = {} needs n > k, got n = {n}", spec.k)));
    }
    let gd = quantize(points, labels, grid)?;
    let ring = select_ring_params(grid, 2, n)?;
    let db = LabeledDatabase::new(
        resize_cyclic(&gd.points, n),
        resize_cyclic(&gd.labels, n),
        &ring,
    )?;
    let run_seed = seed::derive(spec.seed, "bench", grid ^ ((n as u64) << 32));
    let pp = ProtocolParams::new(ring, spec.k, 1, run_seed)?;
    let keys = keygen(&ring, seed::derive(run_seed, "key", 0));
    let enc_q = encrypt_query(&keys.pk, &gd.points[0])?;
    let circuit = Circuit::new(&keys.pk)?;
    let (trace, m) = circuit.metered(|c| server_trace(c, &enc_q, &db, &pp));
    trace?;
    Ok(BenchRow {
        grid,
        n,
        mult_gates: m.mult_gates,
        max_depth: m.max_depth,
        wall_time: m.wall_time,
        peak_estimate: m.mult_gates as f64 * (m.max_depth as f64).powi(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> (Vec<[f64; 2]>, Vec<u8>) {
        let pts = (0..120).map(|i| [(i * 37 % 101) as f64, (i * 53 % 97) as f64]).collect();
        let labels = (0..120).map(|i| (i % 3 == 0) as u8).collect();
        (pts, labels)
    }

    #[test]
    fn n_sweep_is_linear() {
        let (pts, labels) = cloud();
        let spec = SweepSpec {
            grids: vec![],
            grid_sweep_n: 0,
            ns: vec![100, 200, 400],
            n_sweep_grid: 50,
            k: 13,
            seed: 1,
        };
        let rows = sweep_benchmarks(&pts, &labels, &spec).unwrap();
        assert_eq!(rows.len(), 3);
        let base = rows[0].mult_gates as f64;
        for (r, want) in rows.iter().zip([1.0, 2.0, 4.0]) {
            let ratio = r.mult_gates as f64 / base;
            assert!((ratio - want).abs() / want <= 0.05, "n={} ratio {ratio}", r.n);
        }
        assert!(rows.iter().all(|r| r.max_depth == rows[0].max_depth));
    }

    #[test]
    fn grid_sweep_depth_grows_slowly() {
        let (pts, labels) = cloud();
        let spec = SweepSpec {
            grids: vec![50, 100, 200],
            grid_sweep_n: 60,
            ns: vec![],
            n_sweep_grid: 0,
            k: 5,
            seed: 1,
        };
        let rows = sweep_benchmarks(&pts, &labels, &spec).unwrap();
        let d: Vec<i64> = rows.iter().map(|r| r.max_depth as i64).collect();
        assert!(d[0] <= d[1] && d[1] <= d[2], "{d:?}");
        assert!(d[2] - d[1] <= d[1] - d[0] + 1, "{d:?}");
    }

    #[test]
    fn csv_schema() {
        let row = BenchRow {
            grid: 100,
            n: 50,
            mult_gates: 10,
            max_depth: 3,
            wall_time: Duration::from_millis(5),
            peak_estimate: 270.0,
        };
        let csv = bench_csv(&[row]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], BENCH_CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), 6);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let (pts, labels) = cloud();
        let spec = SweepSpec {
            grids: vec![],
            grid_sweep_n: 0,
            ns: vec![],
            n_sweep_grid: 0,
            k: 1,
            seed: 0,
        };
        assert!(sweep_benchmarks(&pts, &labels, &spec).is_err());
    }
}
