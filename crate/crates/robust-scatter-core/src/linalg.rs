use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Median with the midpoint convention for even lengths. Sorts `values`.
pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    median_in_place(&mut v)
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending, each eigenvector
/// flipped so that its largest-magnitude entry is positive.
pub(crate) fn sorted_eigen(v: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (v + v.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let p = v.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = DVector::zeros(p);
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut best = 0;
        for r in 1..p {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Log-determinant of a symmetric positive-definite matrix.
pub(crate) fn log_det_spd(v: &DMatrix<f64>) -> Result<f64> {
    let chol = v.clone().cholesky().ok_or(Error::SingularScatter)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

pub(crate) fn is_column_orthonormal(m: &DMatrix<f64>, tol: f64) -> bool {
    let g = m.transpose() * m;
    let k = g.nrows();
    (g - DMatrix::<f64>::identity(k, k)).amax() <= tol
}
