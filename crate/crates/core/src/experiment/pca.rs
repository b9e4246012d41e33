//! Two-component principal component projection for plots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `n x 2` scores on the two leading components.
    pub scores: DMatrix<f64>,
    /// `m x 2` unit loadings; each column's largest-magnitude entry is positive.
    pub loadings: DMatrix<f64>,
    /// Fraction of total variance carried by each component.
    pub explained: [f64; 2],
}

pub fn pca_project(dataset: &Dataset) -> Result<Projection> {
    let (n, m) = (dataset.n(), dataset.m());
    if m < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 features, got {m}")));
    }
    let mut x = dataset.to_matrix();
    let mean: DVector<f64> = x.row_mean().transpose();
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = (x.transpose() * &x) / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut loadings = DMatrix::zeros(m, 2);
    let mut explained = [0.0; 2];
    for (c, &idx) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v = -v;
        }
        loadings.set_column(c, &v);
        explained[c] = if total > 0.0 { eig.eigenvalues[idx].max(0.0) / total } else { 0.0 };
    }
    Ok(Projection {
        scores: x * &loadings,
        loadings,
        explained,
    })
}
