use nalgebra::{DMatrix, DVector};

use super::{MbsDims, MbsModel, OperatingSet};

/// Two masses on a line joined by a spring-damper, force on the first mass.
///
/// Unconstrained (`ell = p = 0`). With `output_on_second = false` the output
/// is the position of the first mass, so input and output are colocated.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMass {
    pub m1: f64,
    pub m2: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub output_on_second: bool,
}

impl Default for TwoMass {
    fn default() -> Self {
        Self { m1: 1.0, m2: 2.0, stiffness: 10.0, damping: 0.5, output_on_second: false }
    }
}

impl TwoMass {
    pub fn operating_set() -> OperatingSet {
        OperatingSet::boxed(vec![(-1.0, 1.0), (-1.0, 1.0)])
    }
}

impl MbsModel for TwoMass {
    fn dims(&self) -> MbsDims {
        MbsDims::new(2, 0, 0, 1)
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.m1, self.m2]))
    }

    fn forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let fs = self.stiffness * (q[0] - q[1]) + self.damping * (v[0] - v[1]);
        DVector::from_vec(vec![-fs, fs])
    }

    fn constraints(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn constraint_jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, 2)
    }

    fn constraint_jacobian_dot(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, 2)
    }

    fn input_map(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[1.0, 0.0])
    }

    fn output(&self, q: &DVector<f64>) -> DVector<f64> {
        let i = usize::from(self.output_on_second);
        DVector::from_vec(vec![q[i]])
    }

    fn output_jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(1, 2);
        h[(0, usize::from(self.output_on_second))] = 1.0;
        h
    }
}
