//! Data pipeline and evaluation harness for the k-ish nearest neighbor
//! classifier: WDBC ingestion, a two-dimensional projection, grid
//! quantization, a plaintext kNN reference, leave-one-out F₁, a Gaussianity
//! diagnostic for distance distributions, and circuit-cost sweeps.

pub mod bench;
pub mod data;
pub mod diagnostic;
pub mod error;
pub mod evaluate;
pub mod grid;
pub mod knn;
pub mod projection;

pub use bench::{bench_csv, sweep_benchmarks, BenchRow, SweepSpec};
pub use data::{load_wdbc, parse_wdbc, RawDataset};
pub use diagnostic::{distance_distribution, gaussian_sd, histogram_csv, SdDiagnostic};
pub use error::{EvalError, Result};
pub use evaluate::{leave_one_out_f1, EvalConfig, EvalReport, Mode, RunStats};
pub use grid::{quantize, AxisMap, GridDataset};
pub use knn::{f1, plain_knn};
pub use projection::{project_2d, Projection};

/// Path of the bundled WDBC copy.
pub fn default_dataset_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/wdbc.data")
}
