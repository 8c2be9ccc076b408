//! Leave-one-out evaluation in plain or secure mode.

use std::time::{Duration, Instant};

use kish_core::classifier::{
    client_key_seed, encrypt_query, majority, server_trace, LabeledDatabase, ProtocolParams,
};
use kish_core::{keygen, seed, Circuit};
use rayon::prelude::*;

use crate::diagnostic::gaussian_sd;
use crate::error::{EvalError, Result};
use crate::grid::GridDataset;
use crate::knn::{f1, l1, plain_knn};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Secure,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Mode::Plain),
            "secure" => Ok(Mode::Secure),
            other => Err(format!("unknown mode `{other}`, expected plain or secure")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvalConfig {
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub mode: Mode,
}

/// Circuit cost over all secure runs of an evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunStats {
    pub runs: u64,
    /// Non-scalar multiplications of a single server run (the same for
    /// every run on a fixed ring and database size).
    pub mult_gates_per_run: u64,
    pub max_depth: u32,
    pub total_mult_gates: u64,
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub mode: Mode,
    pub grid: u64,
    pub k: usize,
    pub f1: f64,
    pub predictions: Vec<u8>,
    /// Number of selected neighbors in each secure run (empty in plain mode).
    pub kappa_samples: Vec<usize>,
    pub metrics: RunStats,
    /// Mean statistical distance between each query's distance distribution
    /// and its fitted discretized Gaussian.
    pub sd_gaussian: f64,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let mode = match self.mode {
            Mode::Plain => "plain",
            Mode::Secure => "secure",
        };
        let mut s = format!(
            "mode={mode} grid={} k={} n={} F1={:.4} sd_gaussian={:.4}",
            self.grid,
            self.k,
            self.predictions.len(),
            self.f1,
            self.sd_gaussian
        );
        if self.mode == Mode::Secure {
            let inside = self
                .kappa_samples
                .iter()
                .filter(|&&kk| 2 * kk > self.k && 2 * kk < 3 * self.k)
                .count();
            s.push_str(&format!(
                " runs={} mult_gates/run={} depth={} kappa_in_band={:.3} wall={:.1}s",
                self.metrics.runs,
                self.metrics.mult_gates_per_run,
                self.metrics.max_depth,
                inside as f64 / self.kappa_samples.len().max(1) as f64,
                self.metrics.wall_time.as_secs_f64()
            ));
        }
        s
    }

    /// `index,label,prediction` rows with a header.
    pub fn predictions_csv(&self, labels: &[u8]) -> String {
        let mut out = String::from("index,label,prediction\n");
        for (i, (l, p)) in labels.iter().zip(&self.predictions).enumerate() {
            out.push_str(&format!("{i},{l},{p}\n"));
        }
        out
    }
}

/// Seed of the leave-one-out run for point `i`.
pub fn point_seed(base: u64, i: usize) -> u64 {
    seed::derive(base, "loo", i as u64)
}

struct PointOutcome {
    prediction: u8,
    kappas: Vec<usize>,
    mult_gates: u64,
    max_depth: u32,
}

/// Classifies each point against the other `n - 1` and scores the result.
/// Points are processed in parallel; the report equals a sequential run.
pub fn leave_one_out_f1(db: &GridDataset, cfg: &EvalConfig) -> Result<EvalReport> {
    let n = db.len();
    if n < 3 {
        return Err(EvalError::Invalid("leave-one-out needs at least 3 points".into()));
    }
    if cfg.k == 0 || cfg.k >= n - 1 {
        return Err(EvalError::Invalid(format!("k must satisfy 1 <= k < n-1, got {}", cfg.k)));
    }
    let started = Instant::now();

    let sd_gaussian = (0..n)
        .into_par_iter()
        .map(|i| {
            let d: Vec<u64> =
                (0..n).filter(|&j| j != i).map(|j| l1(&db.points[j], &db.points[i])).collect();
            gaussian_sd(&d).sd
        })
        .sum::<f64>()
        / n as f64;

    let outcomes: Vec<PointOutcome> = match cfg.mode {
        Mode::Plain => (0..n)
            .into_par_iter()
            .map(|i| {
                let rest = db.without(i);
                let prediction = plain_knn(&rest.points, &rest.labels, &db.points[i], cfg.k);
                PointOutcome { prediction, kappas: Vec::new(), mult_gates: 0, max_depth: 0 }
            })
            .collect(),
        Mode::Secure => {
            let ring = kish_core::select_ring_params(db.grid, 2, n - 1)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let rest = db.without(i);
                    let rest = LabeledDatabase::new(rest.points, rest.labels, &ring)?;
                    let pp = ProtocolParams::new(ring, cfg.k, cfg.repetitions, point_seed(cfg.seed, i))?;
                    secure_point(&rest, &db.points[i], &pp)
                })
                .collect::<Result<_>>()?
        }
    };

    let predictions: Vec<u8> = outcomes.iter().map(|o| o.prediction).collect();
    let metrics = RunStats {
        runs: outcomes.iter().map(|o| o.kappas.len() as u64).sum(),
        mult_gates_per_run: outcomes.iter().map(|o| o.mult_gates).max().unwrap_or(0),
        max_depth: outcomes.iter().map(|o| o.max_depth).max().unwrap_or(0),
        total_mult_gates: outcomes.iter().map(|o| o.mult_gates * o.kappas.len() as u64).sum(),
        wall_time: started.elapsed(),
    };
    Ok(EvalReport {
        mode: cfg.mode,
        grid: db.grid,
        k: cfg.k,
        f1: f1(&predictions, &db.labels),
        kappa_samples: outcomes.into_iter().flat_map(|o| o.kappas).collect(),
        predictions,
        metrics,
        sd_gaussian,
    })
}

/// Same runs and seeds as `classify_with_majority`, but also reads κ from
/// the class counts. The evaluation harness holds the client's key, so this
/// needs no access beyond what the client already has.
fn secure_point(db: &LabeledDatabase, q: &[u64], pp: &ProtocolParams) -> Result<PointOutcome> {
    let keys = keygen(&pp.ring, client_key_seed(pp.rng_seed));
    let enc_q = encrypt_query(&keys.pk, q)?;
    let circuit = Circuit::new(&keys.pk)?;
    let mut bits = Vec::with_capacity(pp.repetitions);
    let mut kappas = Vec::with_capacity(pp.repetitions);
    let (mut mult_gates, mut max_depth) = (0, 0);
    for j in 0..pp.repetitions {
        let run_pp = pp.with_seed(pp.repetition_seed(j));
        let (trace, m) = circuit.metered(|c| server_trace(c, &enc_q, db, &run_pp));
        let trace = trace?;
        bits.push(keys.sk.decrypt(&trace.class_bit)?);
        let c0 = keys.sk.decrypt(&trace.class0)?;
        let c1 = keys.sk.decrypt(&trace.class1)?;
        kappas.push((c0 + c1) as usize);
        mult_gates = m.mult_gates;
        max_depth = max_depth.max(m.max_depth);
    }
    Ok(PointOutcome { prediction: majority(&bits), kappas, mult_gates, max_depth })
}
