//! Two-dimensional projection: Fisher discriminant plus the leading
//! principal component of what the discriminant leaves over.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::RawDataset;

/// Projected points and how they were obtained.
#[derive(Clone, Debug)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    /// Unit directions in standardized feature space.
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Ridge added to the within-class scatter, if it was singular.
    pub ridge: Option<f64>,
    /// The class means coincided and axis 1 fell back to the top principal
    /// component.
    pub discriminant_undefined: bool,
}

/// Standardizes features (population standard deviation; constant columns
/// are only centered) and projects onto the discriminant/residual-PCA plane.
pub fn project_2d(raw: &RawDataset) -> Projection {
    let (n, d) = (raw.len(), raw.dim());
    let mut z = DMatrix::from_fn(n, d, |i, j| raw.features[i][j]);
    for j in 0..d {
        let mut col = z.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }

    let class_mean = |c: u8| {
        let rows: Vec<usize> = (0..n).filter(|&i| raw.labels[i] == c).collect();
        let mut m = DVector::zeros(d);
        for &i in &rows {
            m += z.row(i).transpose();
        }
        m / rows.len() as f64
    };
    let (m0, m1) = (class_mean(0), class_mean(1));

    let mut sw = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let mc = if raw.labels[i] == 1 { &m1 } else { &m0 };
        let dev = z.row(i).transpose() - mc;
        sw.ger(1.0, &dev, &dev, 1.0);
    }
    let diff = &m1 - &m0;

    let eps = 1e-6 * sw.trace().max(f64::MIN_POSITIVE) / d as f64;
    let spectrum = sw.symmetric_eigenvalues();
    let singular = spectrum.min() <= 1e-10 * spectrum.max().max(f64::MIN_POSITIVE);
    let mut ridge = singular.then_some(eps);
    if singular {
        sw += DMatrix::identity(d, d) * eps;
    }
    let mut w = sw
        .clone()
        .cholesky()
        .map(|c| c.solve(&diff))
        .filter(|w| w.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| DVector::zeros(d));

    let degenerate = diff.norm() <= 1e-12 || w.norm() <= 1e-12;
    if degenerate {
        ridge.get_or_insert(eps);
        w = top_component(&z);
    }
    w.normalize_mut();
    fix_sign(&mut w);

    let a1 = &z * &w;
    let mut resid = &z - &a1 * w.transpose();
    for j in 0..d {
        let mut col = resid.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut v = top_component(&resid);
    if v.norm() > 0.0 {
        v.normalize_mut();
    }
    fix_sign(&mut v);
    let a2 = &resid * &v;

    Projection {
        points: (0..n).map(|i| [a1[i], a2[i]]).collect(),
        axis1: w.iter().copied().collect(),
        axis2: v.iter().copied().collect(),
        ridge,
        discriminant_undefined: degenerate,
    }
}

/// Leading eigenvector of `xᵀx`.
fn top_component(x: &DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(x.transpose() * x);
    let best = eig.eigenvalues.imax();
    eig.eigenvectors.column(best).into_owned()
}

/// First non-negligible coefficient made positive.
fn fix_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}
