//! High-gain matrix, internal-dynamics coordinates and their linearization.
//!
//! For position outputs with relative degree two the input enters the second
//! derivatives of `[J; G; H] q` through
//!
//! ```text
//! Gamma = [J; G; H] M^{-1} [J^T G^T B]
//! ```
//!
//! Rows `phi2` spanning the annihilator of `M^{-1} [J^T G^T B]` within the
//! complement of `[J; G; H]` give velocity-level coordinates of the internal
//! dynamics that the input does not reach.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MbsModel;
use crate::numerics::{eig_real_small, fd_jacobian, kernel_basis, pseudo_inverse_tall, solve_linear_multi};
use crate::robot::{RobotModel, RobotParams};

#[derive(Debug, Clone, PartialEq)]
pub struct HighGain {
    pub gamma: DMatrix<f64>,
    /// Constraint block `[J; G] M^{-1} [J^T G^T]`.
    pub gram: DMatrix<f64>,
    /// Schur complement of `gram` in `gamma`, the input gain of `y''`.
    pub schur: DMatrix<f64>,
}

fn constraint_rows(model: &dyn MbsModel, q: &DVector<f64>) -> DMatrix<f64> {
    let d = model.dims();
    let mut c = DMatrix::zeros(d.p + d.ell, d.n);
    if d.p > 0 {
        c.view_mut((0, 0), (d.p, d.n)).copy_from(&model.nonholonomic(q));
    }
    if d.ell > 0 {
        c.view_mut((d.p, 0), (d.ell, d.n)).copy_from(&model.constraint_jacobian(q));
    }
    c
}

/// `[J; G; H]` and `[J^T G^T B]`.
fn outer_factors(model: &dyn MbsModel, q: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = model.dims();
    let k = d.p + d.ell;
    let cons = constraint_rows(model, q);
    let mut left = DMatrix::zeros(k + d.m, d.n);
    left.view_mut((0, 0), (k, d.n)).copy_from(&cons);
    left.view_mut((k, 0), (d.m, d.n)).copy_from(&model.output_jacobian(q));
    let mut right = DMatrix::zeros(d.n, k + d.m);
    right.view_mut((0, 0), (d.n, k)).copy_from(&cons.transpose());
    right.view_mut((0, k), (d.n, d.m)).copy_from(&model.input_map(q));
    (left, right)
}

/// `Gamma(q)` without any invertibility checks on the result.
pub fn gamma_matrix(model: &dyn MbsModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (left, right) = outer_factors(model, q);
    let minv_right = solve_linear_multi(&model.mass_matrix(q), &right)?;
    Ok(left * minv_right)
}

/// Assembles `Gamma`, the Gram block and its Schur complement.
pub fn high_gain(model: &dyn MbsModel, q: &DVector<f64>) -> Result<HighGain> {
    let d = model.dims();
    let k = d.p + d.ell;
    let gamma = gamma_matrix(model, q)?;
    let gram = gamma.view((0, 0), (k, k)).into_owned();
    let g22 = gamma.view((k, k), (d.m, d.m)).into_owned();
    let schur = if k == 0 {
        g22
    } else {
        let g12 = gamma.view((0, k), (k, d.m)).into_owned();
        let g21 = gamma.view((k, 0), (d.m, k)).into_owned();
        let x = solve_linear_multi(&gram, &g12).map_err(|_| Error::GramSingular)?;
        g22 - g21 * x
    };
    solve_linear_multi(&gamma, &DMatrix::identity(k + d.m, k + d.m))
        .map_err(|_| Error::GammaSingular)?;
    Ok(HighGain { gamma, gram, schur })
}

/// `S = H M^{-1} (M - C^T A^{-1} C) M^{-1} B` with `C = [J; G]`.
pub fn schur_complement_formula(model: &dyn MbsModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = model.mass_matrix(q);
    let c = constraint_rows(model, q);
    let minv_b = solve_linear_multi(&m, &model.input_map(q))?;
    let h = model.output_jacobian(q);
    if c.nrows() == 0 {
        return Ok(h * minv_b);
    }
    let minv_ct = solve_linear_multi(&m, &c.transpose())?;
    let gram = &c * &minv_ct;
    let inner = solve_linear_multi(&gram, &(&c * &minv_b)).map_err(|_| Error::GramSingular)?;
    Ok(h * (minv_b - minv_ct * inner))
}

/// Internal-coordinate rows `phi2(q)` for the kernel basis of `[J; G; H]`.
pub fn phi2_rows(model: &dyn MbsModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (left, _) = outer_factors(model, q);
    let basis = kernel_basis(&left)?;
    phi2_rows_with_basis(model, q, &basis)
}

/// As [`phi2_rows`] with a caller-supplied kernel basis.
pub fn phi2_rows_with_basis(
    model: &dyn MbsModel,
    q: &DVector<f64>,
    basis: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.dims().n;
    let (left, right) = outer_factors(model, q);
    let hg = high_gain(model, q)?;
    let minv_right = solve_linear_multi(&model.mass_matrix(q), &right)?;
    let gamma_inv_left = solve_linear_multi(&hg.gamma, &left).map_err(|_| Error::GammaSingular)?;
    let proj = DMatrix::identity(n, n) - minv_right * gamma_inv_left;
    Ok(pseudo_inverse_tall(basis)? * proj)
}

/// Largest entry of `phi2 M^{-1} [J^T G^T B]`; zero up to rounding.
pub fn annihilation_defect(model: &dyn MbsModel, q: &DVector<f64>) -> Result<f64> {
    let phi2 = phi2_rows(model, q)?;
    let (_, right) = outer_factors(model, q);
    let minv_right = solve_linear_multi(&model.mass_matrix(q), &right)?;
    Ok((phi2 * minv_right).amax())
}

/// Closed-form internal dynamics of the manipulator.
///
/// `eta = (gamma, p_gamma)` where `p_gamma` is the last row of the mass
/// matrix times `v` for a uniform third body.
pub fn robot_internal_rhs(eta: [f64; 2], y: [f64; 2], ydot: [f64; 2], p: &RobotParams) -> Result<[f64; 2]> {
    let denom = 2.0 - 3.0 * eta[0].cos();
    if denom.abs() < 1e-9 {
        return Err(Error::DenominatorSingular);
    }
    let kappa = p.kappa();
    let delta = p.delta();
    let (m3, l2, l3) = (p.m3, p.l2, p.l3);
    let cc = 2.0 * (l2 + 2.0 * l3) / (kappa * l2 * denom);
    let phase = y[1] + (1.0 - delta) * eta[0];
    let s = phase.sin();
    let f1 = cc
        * (eta[1] - (kappa + 0.25 * m3 * l2 * l3 * eta[0].cos()) * ydot[1]
            + 0.5 * m3 * l3 * s * ydot[0]);
    // The ydot[0] term enters with a plus sign; a minus breaks agreement
    // with the equations of motion whenever the first carriage moves.
    let first = (1.0 - delta) * eta[1]
        + (1.0 - delta) * 0.5 * l3 * m3 * s * ydot[0]
        - 0.25 * l2 * l3 * m3 * eta[0].cos() * ydot[1];
    let second = 0.5 * l3 * m3 * phase.cos() * ydot[0]
        + 0.25 * l2 * l3 * m3 * eta[0].sin()
            * cc
            * (kappa * ydot[1] - delta * eta[1] - 0.5 * delta * m3 * l3 * s * ydot[0]);
    let f2 = -cc * first * second - p.damping * f1 - p.c * eta[0];
    Ok([f1, f2])
}

/// Internal state `(gamma, p_gamma)` of a full robot state.
pub fn robot_internal_state(q: &DVector<f64>, v: &DVector<f64>, p: &RobotParams) -> [f64; 2] {
    [q[4], momentum_row(q, p).dot(v)]
}

// Last mass-matrix row with the uniform third body.
fn momentum_row(q: &DVector<f64>, p: &RobotParams) -> DVector<f64> {
    let kappa = p.kappa();
    let (b, g) = (q[3], q[4]);
    DVector::from_vec(vec![
        0.0,
        -0.5 * p.m3 * p.l3 * (b + g).sin(),
        0.0,
        kappa + 0.25 * p.m3 * p.l2 * p.l3 * g.cos(),
        kappa,
    ])
}

/// Linear model of the internal dynamics split into stable and unstable parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedInternalDynamics {
    pub q: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub p2: DMatrix<f64>,
    /// `P1 + Q P2`, the input of the shifted state `eta - P2 y`.
    pub p: DMatrix<f64>,
    /// Eigenvector matrix; unit columns with negative last entry.
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    /// Eigenvalues of `Q`, ascending.
    pub mu: Vec<f64>,
    /// Number of eigenvalues with positive real part. The unstable block
    /// occupies the last rows of `T^{-1}`.
    pub unstable: usize,
    pub q_tilde: DMatrix<f64>,
    pub p_tilde: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub rho: f64,
}

impl LinearizedInternalDynamics {
    pub fn mu_unstable(&self) -> f64 {
        self.q_tilde[(0, 0)]
    }

    /// Rows of `T^{-1}` belonging to the unstable block.
    pub fn unstable_rows(&self) -> DMatrix<f64> {
        let k = self.t_inv.nrows();
        self.t_inv.rows(k - self.unstable, self.unstable).into_owned()
    }

    pub fn with_gains(mut self, k1: DMatrix<f64>, k2: DMatrix<f64>, rho: f64) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self.rho = rho;
        self
    }
}

/// Averages Jacobians of [`robot_internal_rhs`] at `(0, y0, 0)` and
/// `(0, yf, 0)` and diagonalizes the result.
pub fn linearize(p: &RobotParams, y0: [f64; 2], yf: [f64; 2]) -> Result<LinearizedInternalDynamics> {
    let rhs = |eta: [f64; 2], y: [f64; 2], yd: [f64; 2]| -> DVector<f64> {
        match robot_internal_rhs(eta, y, yd, p) {
            Ok(v) => DVector::from_row_slice(&v),
            Err(_) => DVector::from_element(2, f64::NAN),
        }
    };
    let z = DVector::zeros(2);
    let mut q = DMatrix::zeros(2, 2);
    let mut p1 = DMatrix::zeros(2, 2);
    let mut p2 = DMatrix::zeros(2, 2);
    for y in [y0, yf] {
        let yv = DVector::from_row_slice(&y);
        q += fd_jacobian(|e| rhs([e[0], e[1]], y, [0.0; 2]), &z, None)?;
        p1 += fd_jacobian(|w| rhs([0.0; 2], [w[0], w[1]], [0.0; 2]), &yv, None)?;
        p2 += fd_jacobian(|w| rhs([0.0; 2], y, [w[0], w[1]]), &z, None)?;
    }
    q *= 0.5;
    p1 *= 0.5;
    p2 *= 0.5;
    decompose(q, p1, p2)
}

/// Eigen-decomposition of an already linearized model.
pub fn decompose(q: DMatrix<f64>, p1: DMatrix<f64>, p2: DMatrix<f64>) -> Result<LinearizedInternalDynamics> {
    let k = q.nrows();
    let pairs = eig_real_small(&q)?;
    if pairs.iter().any(|(l, _)| *l == 0.0) {
        return Err(Error::ComplexOrRepeatedSpectrum);
    }
    let mut t = DMatrix::zeros(k, k);
    for (j, (_, v)) in pairs.iter().enumerate() {
        let sign = if v[k - 1] > 0.0 { -1.0 } else { 1.0 };
        t.set_column(j, &(v * sign));
    }
    let t_inv = t.clone().try_inverse().ok_or(Error::ComplexOrRepeatedSpectrum)?;
    let mu: Vec<f64> = pairs.iter().map(|(l, _)| *l).collect();
    let unstable = mu.iter().filter(|&&l| l > 0.0).count();
    let p = &p1 + &q * &p2;
    let q_tilde = DMatrix::from_diagonal(&DVector::from_row_slice(&mu[k - unstable..]));
    let p_tilde = t_inv.rows(k - unstable, unstable) * &p;
    let m = p.ncols();
    let mut k2 = DMatrix::zeros(1, m);
    k2[(0, 0)] = 1.0;
    if m > 1 {
        k2[(0, 1)] = 0.01;
    }
    Ok(LinearizedInternalDynamics {
        q,
        p1,
        p2,
        p,
        t,
        t_inv,
        mu,
        unstable,
        q_tilde,
        p_tilde,
        k1: DMatrix::from_element(1, unstable.max(1), -0.1),
        k2,
        rho: 1.0,
    })
}

/// Unstable internal coordinate reconstructed from the full state.
///
/// `w (eta - P2 y)` with `w` the unstable row of `T^{-1}`, `eta` the internal
/// state and `y` the output.
pub fn psi(q: &DVector<f64>, v: &DVector<f64>, lin: &LinearizedInternalDynamics, p: &RobotParams) -> f64 {
    let eta = robot_internal_state(q, v, p);
    let y = [q[1], q[3] + p.delta() * q[4]];
    let shifted = DVector::from_row_slice(&eta) - &lin.p2 * DVector::from_row_slice(&y);
    (lin.unstable_rows() * shifted)[(0, 0)]
}

/// `rho [K1 P~; K2] S` at configuration `q`; positive definite where the
/// controller's gain-sign condition holds.
pub fn sign_condition_matrix(
    lin: &LinearizedInternalDynamics,
    model: &RobotModel,
    q: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let s = high_gain(model, q)?.schur;
    let top = &lin.k1 * &lin.p_tilde;
    let mut stacked = DMatrix::zeros(2, top.ncols());
    stacked.set_row(0, &top.row(0));
    stacked.set_row(1, &lin.k2.row(0));
    Ok(stacked * s * lin.rho)
}

/// Linearization at the reference path's end points with default gains.
pub fn robot_linearization(p: &RobotParams) -> Result<LinearizedInternalDynamics> {
    let y0 = crate::funnel::reference::Reference::robot_default(p)?.initial_output();
    let yf = crate::funnel::reference::Reference::robot_default(p)?.final_output();
    linearize(p, y0, yf)
}
