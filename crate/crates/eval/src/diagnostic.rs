//! How Gaussian is a query's distance distribution?

use kish_core::ring::phi;

use crate::grid::GridDataset;
use crate::knn::l1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdDiagnostic {
    /// Largest pointwise probability gap.
    pub sd: f64,
    pub mu: f64,
    pub sigma: f64,
    /// σ was zero; `sd` is reported as 1.
    pub degenerate: bool,
}

/// Distances from `q` to every database point.
pub fn distance_distribution(db: &GridDataset, q: &[u64]) -> Vec<u64> {
    db.points.iter().map(|p| l1(p, q)).collect()
}

/// Statistical distance between the empirical distribution of `distances`
/// and the Gaussian with the same mean and (population) standard deviation,
/// discretized to integers: `G(u) = Φ((u+½-μ)/σ) - Φ((u-½-μ)/σ)`.
pub fn gaussian_sd(distances: &[u64]) -> SdDiagnostic {
    let n = distances.len() as f64;
    let mu = distances.iter().map(|&d| d as f64).sum::<f64>() / n;
    let var = distances.iter().map(|&d| (d as f64 - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma == 0.0 || distances.is_empty() {
        return SdDiagnostic { sd: 1.0, mu, sigma, degenerate: true };
    }

    let (dmin, dmax) = (*distances.iter().min().unwrap(), *distances.iter().max().unwrap());
    let lo = (dmin as f64).min((mu - 10.0 * sigma).floor()) as i64;
    let hi = (dmax as f64).max((mu + 10.0 * sigma).ceil()) as i64;
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &d in distances {
        counts[(d as i64 - lo) as usize] += 1;
    }
    let sd = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let u = (lo + i as i64) as f64;
            let g = phi((u + 0.5 - mu) / sigma) - phi((u - 0.5 - mu) / sigma);
            (c as f64 / n - g).abs()
        })
        .fold(0.0, f64::max);
    SdDiagnostic { sd, mu, sigma, degenerate: false }
}

/// Two-column `distance,count` CSV over the observed range.
pub fn histogram_csv(distances: &[u64]) -> String {
    let mut out = String::from("distance,count\n");
    let Some(&max) = distances.iter().max() else {
        return out;
    };
    let min = *distances.iter().min().unwrap();
    let mut counts = vec![0u64; (max - min + 1) as usize];
    for &d in distances {
        counts[(d - min) as usize] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        out.push_str(&format!("{},{c}\n", min + i as u64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use kish_core::ring::phi_inverse;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sampled_gaussian_is_close() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let d: Vec<u64> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random_range(1e-12..1.0);
                (60.0 + 12.0 * phi_inverse(u).unwrap()).round().max(0.0) as u64
            })
            .collect();
        let r = gaussian_sd(&d);
        assert!(r.sd <= 0.01, "{r:?}");
        assert!(!r.degenerate);
    }

    #[test]
    fn constant_distances_are_flagged() {
        let r = gaussian_sd(&[7; 50]);
        assert!(r.degenerate);
        assert_eq!(r.sd, 1.0);
    }

    #[test]
    fn bimodal_is_far() {
        let d: Vec<u64> = (0..1000).map(|i| if i % 2 == 0 { 10 } else { 90 }).collect();
        assert!(gaussian_sd(&d).sd > 0.3);
    }

    #[test]
    fn histogram_rows() {
        let csv = histogram_csv(&[3, 5, 5]);
        assert_eq!(csv, "distance,count\n3,1\n4,0\n5,2\n");
        assert_eq!(histogram_csv(&[]), "distance,count\n");
    }
}
