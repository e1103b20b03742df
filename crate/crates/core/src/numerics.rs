//! Dense kernels shared by the rest of the crate.
//!
//! Everything works on `nalgebra` dynamic matrices. The systems solved here are
//! small (at most a handful of rows), the banded collocation solve lives in
//! [`crate::servo::banded`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold for [`solve_linear`].
pub const PIVOT_TOL: f64 = 1e-12;
/// Relative singular value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Solves `A x = b` by LU with partial pivoting.
///
/// Fails with [`Error::SingularMatrix`] when a pivot of `U` is smaller than
/// `1e-12` times the largest entry of `A`.
pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    assert!(a.is_square(), "solve_linear needs a square matrix");
    assert_eq!(a.nrows(), b.len(), "dimension mismatch");
    let scale = a.amax();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::SingularMatrix { pivot: 0.0 });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    for i in 0..u.nrows() {
        let piv = u[(i, i)].abs();
        if piv < PIVOT_TOL * scale || !piv.is_finite() {
            return Err(Error::SingularMatrix { pivot: piv });
        }
    }
    lu.solve(b).ok_or(Error::SingularMatrix { pivot: 0.0 })
}

/// Same as [`solve_linear`] for several right-hand sides at once.
pub fn solve_linear_multi(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert!(a.is_square(), "solve_linear_multi needs a square matrix");
    let scale = a.amax();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::SingularMatrix { pivot: 0.0 });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    for i in 0..u.nrows() {
        let piv = u[(i, i)].abs();
        if piv < PIVOT_TOL * scale || !piv.is_finite() {
            return Err(Error::SingularMatrix { pivot: piv });
        }
    }
    lu.solve(b).ok_or(Error::SingularMatrix { pivot: 0.0 })
}

/// Orthonormal basis of the null space of a full-row-rank matrix.
///
/// The result has `A.ncols() - A.nrows()` columns. A square nonsingular `A`
/// gives an empty (`n x 0`) basis.
pub fn kernel_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, n) = a.shape();
    if r > n {
        return Err(Error::RankDeficientRows);
    }
    if r == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    // Pad with zero rows so the SVD returns the full right singular basis.
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (r, n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let smax = sv[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| sv[i] > RANK_TOL * smax)
        .count();
    if smax == 0.0 || rank < r {
        return Err(Error::RankDeficientRows);
    }
    let mut basis = DMatrix::zeros(n, n - r);
    for (k, &i) in order[r..].iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    Ok(basis)
}

/// Left inverse `(V^T V)^{-1} V^T` of a tall matrix with independent columns.
pub fn pseudo_inverse_tall(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = v.shape();
    if k > n {
        return Err(Error::RankDeficientColumns);
    }
    if k == 0 {
        return Ok(DMatrix::zeros(0, n));
    }
    let sv = v.singular_values();
    let smax = sv.max();
    if smax == 0.0 || sv.min() <= RANK_TOL * smax {
        return Err(Error::RankDeficientColumns);
    }
    let gram = v.transpose() * v;
    let chol = gram.cholesky().ok_or(Error::RankDeficientColumns)?;
    Ok(chol.solve(&v.transpose()))
}

/// Real, distinct eigenpairs sorted ascending by eigenvalue.
///
/// Eigenvectors have unit Euclidean norm; their sign is whatever the
/// factorization produced.
pub fn eig_real_small(a: &DMatrix<f64>) -> Result<Vec<(f64, DVector<f64>)>> {
    assert!(a.is_square(), "eig_real_small needs a square matrix");
    let n = a.nrows();
    let scale = a.amax().max(1.0);
    let mut values: Vec<f64> = if n == 2 {
        let half_tr = 0.5 * (a[(0, 0)] + a[(1, 1)]);
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let disc = half_tr * half_tr - det;
        if disc <= 1e-14 * scale * scale {
            return Err(Error::ComplexOrRepeatedSpectrum);
        }
        let root = disc.sqrt();
        vec![half_tr - root, half_tr + root]
    } else {
        let ev = a
            .clone()
            .schur()
            .complex_eigenvalues();
        let mut out = Vec::with_capacity(n);
        for z in ev.iter() {
            if z.im.abs() > 1e-10 * scale {
                return Err(Error::ComplexOrRepeatedSpectrum);
            }
            out.push(z.re);
        }
        out
    };
    values.sort_by(f64::total_cmp);
    for w in values.windows(2) {
        if (w[1] - w[0]).abs() <= 1e-10 * scale {
            return Err(Error::ComplexOrRepeatedSpectrum);
        }
    }
    values
        .into_iter()
        .map(|lambda| Ok((lambda, null_vector(&(a - DMatrix::identity(n, n) * lambda))?)))
        .collect()
}

// Right singular vector of the smallest singular value.
fn null_vector(shifted: &DMatrix<f64>) -> Result<DVector<f64>> {
    let svd = shifted.clone().svd(false, true);
    let v_t = svd.v_t.ok_or(Error::ComplexOrRepeatedSpectrum)?;
    let imin = svd.singular_values.imin();
    Ok(v_t.row(imin).transpose().normalize())
}

/// Central-difference Jacobian of `f` at `x`.
///
/// Component `i` is perturbed by `h * max(1, |x_i|)`; `None` selects
/// `h = 1e-6`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, h: Option<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let h = h.unwrap_or(1e-6);
    let f0 = f(x);
    if f0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation);
    }
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        let col = (fp - fm) / (2.0 * step);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation);
        }
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Attempts a Cholesky factorization of the symmetric part of `a`.
pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    let sym = (a + a.transpose()) * 0.5;
    sym.cholesky().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solve_identity_and_diagonal() {
        let x = solve_linear(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0]);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_linear(&a, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let err = solve_linear(&a, &DVector::from_vec(vec![1.0, 3.0])).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix { .. }));
    }

    #[test]
    fn kernel_of_coordinate_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let v = kernel_basis(&a).unwrap();
        assert_eq!(v.shape(), (3, 2));
        assert!((&a * &v).amax() <= 1e-12);
        assert!((v.transpose() * &v - DMatrix::identity(2, 2)).amax() <= 1e-12);
    }

    #[test]
    fn kernel_of_square_nonsingular_is_empty() {
        let v = kernel_basis(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(v.shape(), (2, 0));
    }

    #[test]
    fn kernel_rejects_dependent_rows() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(kernel_basis(&a).unwrap_err(), Error::RankDeficientRows);
    }

    #[test]
    fn pinv_examples() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let p = pseudo_inverse_tall(&e1).unwrap();
        assert_eq!(p.shape(), (1, 3));
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-15);
        let ones = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let p = pseudo_inverse_tall(&ones).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(0, 1)], 0.5, epsilon = 1e-15);
        let twin = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.5, 0.5]);
        assert_eq!(pseudo_inverse_tall(&twin).unwrap_err(), Error::RankDeficientColumns);
    }

    #[test]
    fn eig_diagonal_and_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        let pairs = eig_real_small(&a).unwrap();
        assert_eq!(pairs[0].0, -1.0);
        assert_eq!(pairs[1].0, 2.0);
        assert_abs_diff_eq!(pairs[0].1[0].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pairs[1].1[1].abs(), 1.0, epsilon = 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_eq!(eig_real_small(&rot).unwrap_err(), Error::ComplexOrRepeatedSpectrum);
        let rot3 = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        assert_eq!(eig_real_small(&rot3).unwrap_err(), Error::ComplexOrRepeatedSpectrum);
    }

    #[test]
    fn eig_general_route() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, -1.0, 4.0, 0.0, 0.0, 5.0]);
        let pairs = eig_real_small(&a).unwrap();
        let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], 5.0, epsilon = 1e-10);
        for (l, v) in &pairs {
            assert!((&a * v - v * *l).amax() <= 1e-8);
        }
    }

    #[test]
    fn fd_examples() {
        let x = DVector::from_vec(vec![0.3, -2.0, 7.0]);
        let j = fd_jacobian(|x| x.clone(), &x, Some(1e-5)).unwrap();
        assert!((j - DMatrix::identity(3, 3)).amax() <= 1e-8);

        let f = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0], x[0] * x[1]]);
        let j = fd_jacobian(f, &DVector::from_vec(vec![1.0, 2.0]), None).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 2.0, 1.0]);
        assert!((j - expect).amax() <= 1e-6);

        let g = |x: &DVector<f64>| DVector::from_vec(vec![1.0 / (x[0] - 1.0)]);
        assert_eq!(
            fd_jacobian(g, &DVector::from_vec(vec![1.0]), None).unwrap_err(),
            Error::NonFiniteEvaluation
        );
    }
}
