//! Plaintext reference classifier and the F₁ score.

pub fn l1(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y)).sum()
}

/// Exact k-nearest-neighbor vote under L1. Equal distances are ordered by
/// index; a tied vote gives 0.
pub fn plain_knn(points: &[Vec<u64>], labels: &[u8], q: &[u64], k: usize) -> u8 {
    let mut order: Vec<(u64, usize)> =
        points.iter().enumerate().map(|(i, p)| (l1(p, q), i)).collect();
    order.sort_unstable();
    let ones = order.iter().take(k).filter(|&&(_, i)| labels[i] == 1).count();
    (2 * ones > k.min(points.len())) as u8
}

/// `2|X ∩ Y| / (|X| + |Y|)` for the positive sets of `predicted` and
/// `truth`. Two empty sets score 0.
pub fn f1(predicted: &[u8], truth: &[u8]) -> f64 {
    let both = predicted.iter().zip(truth).filter(|&(&p, &t)| p == 1 && t == 1).count();
    let total = predicted.iter().filter(|&&p| p == 1).count()
        + truth.iter().filter(|&&t| t == 1).count();
    if total == 0 {
        0.0
    } else {
        2.0 * both as f64 / total as f64
    }
}
