//! Thin helpers over nalgebra's SVD.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

/// Singular values (descending), numerical rank and an orthonormal basis of
/// the null space of `a`. Singular values at or below
/// `max(abs_tol, rel_tol * sigma_max)` count as zero.
pub struct NullSpace {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub basis: Vec<DVector<C64>>,
}

pub fn null_space(a: &DMatrix<C64>, rel_tol: f64, abs_tol: f64) -> NullSpace {
    let n = a.ncols();
    // pad so the SVD exposes all n right singular vectors
    let m = a.nrows().max(n);
    let mut padded = DMatrix::<C64>::zeros(m, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let thresh = abs_tol.max(rel_tol * smax);
    let rank = sv.iter().filter(|&&s| s > thresh).count();
    let basis = order[rank..]
        .iter()
        .map(|&i| vt.row(i).transpose().map(|z| z.conj()))
        .collect();
    NullSpace {
        singular_values: sv,
        rank,
        basis,
    }
}

pub fn spectral_norm(a: &DMatrix<C64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |m, &s| m.max(s))
}

/// Numerical rank of a real matrix together with its singular values.
pub fn rank_real(a: &DMatrix<f64>, rel_tol: f64, abs_tol: f64) -> (usize, Vec<f64>) {
    if a.is_empty() {
        return (0, vec![]);
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let thresh = abs_tol.max(rel_tol * sv[0]);
    (sv.iter().filter(|&&s| s > thresh).count(), sv)
}

/// Orthonormal basis (columns) of the column space of a real matrix.
pub fn column_space_real(a: &DMatrix<f64>, rel_tol: f64, abs_tol: f64) -> Vec<DVector<f64>> {
    if a.ncols() == 0 {
        return vec![];
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let thresh = abs_tol.max(rel_tol * smax);
    let mut idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thresh)
        .collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    idx.iter().map(|&i| u.column(i).into_owned()).collect()
}

/// Null space of a real matrix as orthonormal vectors.
pub fn null_space_real(a: &DMatrix<f64>, rel_tol: f64, abs_tol: f64) -> Vec<DVector<f64>> {
    let c = a.map(|x| C64::new(x, 0.0));
    let ns = null_space(&c, rel_tol, abs_tol);
    // a real matrix has a real null space; rotate each vector to be real
    let raw: Vec<DVector<f64>> = ns
        .basis
        .iter()
        .flat_map(|v| [v.map(|z| z.re), v.map(|z| z.im)])
        .collect();
    if raw.is_empty() {
        return vec![];
    }
    let m = DMatrix::from_columns(&raw);
    column_space_real(&m, 1e-8, 1e-14)
}
