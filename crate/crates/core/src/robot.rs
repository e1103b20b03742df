//! Planar three-body manipulator with a kinematic loop.
//!
//! Coordinates are `q = (s1, s2, alpha, beta, gamma)`: two actuated carriage
//! positions, the angles of the two loop arms and the deflection of the
//! passive, spring-mounted third arm. The loop closes at the base offset `d`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{MbsDims, MbsModel, OperatingSet};

/// Physical parameters. Units are kg, m, kg m^2, N/rad and N s/rad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    pub m1: f64,
    pub l1: f64,
    pub i1: f64,
    pub m2: f64,
    pub l2: f64,
    pub i2: f64,
    pub m3: f64,
    pub l3: f64,
    /// Distance of the third body's centre of gravity from its joint.
    pub x3: f64,
    pub i3: f64,
    /// Torsion spring on the passive joint.
    pub c: f64,
    /// Damper on the passive joint.
    pub damping: f64,
    /// Base offset between the two carriage rails.
    pub d: f64,
}

impl RobotParams {
    /// Model used for inversion and controller design.
    pub fn reference() -> Self {
        Self {
            m1: 3.4,
            l1: 0.5,
            i1: 0.071,
            m2: 6.8,
            l2: 1.0,
            i2: 0.567,
            m3: 3.4,
            l3: 0.5,
            x3: 0.25,
            i3: 0.071,
            c: 50.0,
            damping: 0.25,
            d: 0.8,
        }
    }

    /// Plant with a 20% heavier third arm.
    pub fn simulated() -> Self {
        Self { m3: 4.1, i3: 0.085, ..Self::reference() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "reference" => Some(Self::reference()),
            "simulated" => Some(Self::simulated()),
            _ => None,
        }
    }

    /// Copy with a uniform third body: `x3 = l3/2`, `i3 = m3 l3^2/12`.
    pub fn with_homogeneous_body3(self) -> Self {
        Self { x3: 0.5 * self.l3, i3: self.m3 * self.l3 * self.l3 / 12.0, ..self }
    }

    /// Rotational inertia of the third body about its joint, uniform body.
    pub fn kappa(&self) -> f64 {
        self.m3 * self.l3 * self.l3 / 3.0
    }

    /// Weight of the passive angle in the second output.
    pub fn delta(&self) -> f64 {
        2.0 * self.l3 / (self.l2 + 2.0 * self.l3)
    }

    /// Lever from the end of arm two's midpoint to the tool tip.
    pub fn reach(&self) -> f64 {
        0.5 * self.l2 + self.l3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub params: RobotParams,
}

impl RobotModel {
    pub fn new(params: RobotParams) -> Self {
        Self { params }
    }
}

impl MbsModel for RobotModel {
    fn dims(&self) -> MbsDims {
        MbsDims::new(5, 2, 0, 2)
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let (a, b, g) = (q[2], q[3], q[4]);
        let mut m = DMatrix::zeros(5, 5);
        let m3x3 = p.m3 * p.x3;
        m[(0, 0)] = p.m1;
        m[(0, 2)] = 0.5 * p.l1 * p.m1 * a.cos();
        m[(1, 1)] = p.m2 + p.m3;
        m[(1, 3)] = -m3x3 * (b + g).sin() - 0.5 * p.l2 * p.m3 * b.sin();
        m[(1, 4)] = -m3x3 * (b + g).sin();
        m[(2, 2)] = 0.25 * p.m1 * p.l1 * p.l1 + p.i1;
        m[(3, 3)] = 0.25 * p.m3 * p.l2 * p.l2
            + p.m3 * g.cos() * p.l2 * p.x3
            + m3x3 * p.x3
            + p.i2
            + p.i3;
        m[(3, 4)] = m3x3 * p.x3 + 0.5 * p.l2 * p.m3 * g.cos() * p.x3 + p.i3;
        m[(4, 4)] = m3x3 * p.x3 + p.i3;
        for (i, j) in [(0, 2), (1, 3), (1, 4), (3, 4)] {
            m[(j, i)] = m[(i, j)];
        }
        m
    }

    fn forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let (a, b, g) = (q[2], q[3], q[4]);
        let (da, db, dg) = (v[2], v[3], v[4]);
        let cbg = (b + g).cos();
        DVector::from_vec(vec![
            0.5 * p.l1 * da * da * p.m1 * a.sin(),
            0.5 * p.m3
                * (2.0 * p.x3 * db * db * cbg
                    + 2.0 * p.x3 * dg * dg * cbg
                    + p.l2 * db * db * b.cos()
                    + 4.0 * p.x3 * db * dg * cbg),
            0.0,
            0.5 * p.l2 * p.x3 * dg * p.m3 * g.sin() * (2.0 * db + dg),
            -0.5 * p.l2 * p.x3 * p.m3 * g.sin() * db * db - p.damping * dg - p.c * g,
        ])
    }

    fn constraints(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let (a, b) = (q[2], q[3]);
        DVector::from_vec(vec![
            p.l1 * a.cos() - q[1] - p.d + 0.5 * p.l2 * b.cos(),
            q[0] + p.l1 * a.sin() - 0.5 * p.l2 * b.sin(),
        ])
    }

    fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let (a, b) = (q[2], q[3]);
        DMatrix::from_row_slice(
            2,
            5,
            &[
                0.0,
                -1.0,
                -p.l1 * a.sin(),
                -0.5 * p.l2 * b.sin(),
                0.0,
                1.0,
                0.0,
                p.l1 * a.cos(),
                -0.5 * p.l2 * b.cos(),
                0.0,
            ],
        )
    }

    fn constraint_jacobian_dot(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let (a, b) = (q[2], q[3]);
        let (da, db) = (v[2], v[3]);
        DMatrix::from_row_slice(
            2,
            5,
            &[
                0.0,
                0.0,
                -p.l1 * a.cos() * da,
                -0.5 * p.l2 * b.cos() * db,
                0.0,
                0.0,
                0.0,
                -p.l1 * a.sin() * da,
                0.5 * p.l2 * b.sin() * db,
                0.0,
            ],
        )
    }

    fn input_map(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(5, 2);
        b[(0, 0)] = 1.0;
        b[(1, 1)] = 1.0;
        b
    }

    fn output(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![q[1], q[3] + self.params.delta() * q[4]])
    }

    fn output_jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(2, 5);
        h[(0, 1)] = 1.0;
        h[(1, 3)] = 1.0;
        h[(1, 4)] = self.params.delta();
        h
    }
}

/// Operating range: both loop angles in `(0, pi/2)` and `cos(gamma) > 2/3`.
/// Carriage positions are limited to `(-1, 1)` m for sampling.
pub fn operating_set() -> OperatingSet {
    let gmax = (2.0f64 / 3.0).acos();
    OperatingSet {
        bounds: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (0.0, std::f64::consts::FRAC_PI_2),
            (0.0, std::f64::consts::FRAC_PI_2),
            (-gmax, gmax),
        ],
        predicate: Some(|q| q[4].cos() > 2.0 / 3.0),
    }
}

/// Loop angles `(alpha0, beta0)` of the rest configuration `s1 = s2 = gamma = 0`.
pub fn initial_configuration(p: &RobotParams) -> Result<(f64, f64)> {
    let arg = (p.l1 * p.l1 + p.d * p.d - 0.25 * p.l2 * p.l2) / (2.0 * p.l1 * p.d);
    if !(-1.0..=1.0).contains(&arg) {
        return Err(Error::InfeasibleGeometry);
    }
    let alpha = arg.acos();
    let s = 2.0 * p.l1 * alpha.sin() / p.l2;
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::InfeasibleGeometry);
    }
    Ok((alpha, s.asin()))
}

/// Rest configuration `(0, 0, alpha0, beta0, 0)`.
pub fn initial_state(p: &RobotParams) -> Result<DVector<f64>> {
    let (a, b) = initial_configuration(p)?;
    Ok(DVector::from_vec(vec![0.0, 0.0, a, b, 0.0]))
}

/// Approximate tool position for output `y`.
pub fn end_effector(y: &[f64; 2], p: &RobotParams) -> [f64; 2] {
    let r = p.reach();
    [p.d + y[0] + r * y[1].cos(), -r * y[1].sin()]
}

/// Inverse of [`end_effector`] on the branch `y2 in (-pi/2, pi/2)`.
pub fn output_from_end_effector(r: &[f64; 2], p: &RobotParams) -> Result<[f64; 2]> {
    let reach = p.reach();
    if r[1].abs() >= reach {
        return Err(Error::OutOfReach(r[0], r[1]));
    }
    let y2 = (-r[1] / reach).asin();
    Ok([r[0] - p.d - reach * y2.cos(), y2])
}

/// Determinant of the high-gain matrix assembled from the model.
pub fn det_gamma(p: &RobotParams, q: &DVector<f64>) -> Result<f64> {
    let gamma = crate::internal::gamma_matrix(&RobotModel::new(*p), q)?;
    Ok(gamma.determinant())
}

/// Closed-form determinant of the high-gain matrix.
///
/// The numerator term is `m3 x3^2`; with the third body uniform and
/// `cos(gamma) > 2/3` it is negative, so the determinant is positive.
pub fn det_gamma_closed_form(p: &RobotParams, q: &DVector<f64>) -> f64 {
    let (a, b, g) = (q[2], q[3], q[4]);
    let det_m = RobotModel::new(*p).mass_matrix(q).determinant();
    let num = p.i3 + p.m3 * p.x3 * p.x3 - p.m3 * p.l3 * p.x3 * g.cos();
    -p.l1 * p.l1 * p.l2 * p.l2 * a.sin() * (a + b).sin() * num
        / ((2.0 * p.l2 + 4.0 * p.l3) * det_m)
}
