//! Moore-Penrose pseudo-inverse with a relative singular-value cutoff.

use nalgebra::DMatrix;

/// Singular values below `PINV_RCOND * sigma_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Pseudo-inverse via SVD. Returns the `n x m` inverse of an `m x n` matrix
/// together with its numerical rank.
pub fn pinv(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (DMatrix::zeros(n, m), 0);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = PINV_RCOND * sigma_max;
    let mut out = DMatrix::zeros(n, m);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            // out += v_i * u_i^T / s
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            out += (vi * ui.transpose()) / s;
        }
    }
    (out, rank)
}

/// 2-norm condition number `sigma_max / sigma_min` (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
