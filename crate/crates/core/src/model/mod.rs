//! Multibody model contract and numerical checks of its standing assumptions.
//!
//! A model describes
//!
//! ```text
//! q' = v
//! M(q) v' = f(q, v) + G(q)^T lambda + J(q)^T mu + B(q) u
//! 0 = g(q),   0 = J(q) v + j(q),   y = h(q)
//! ```
//!
//! with `n` coordinates, `ell` holonomic and `p` nonholonomic constraints and
//! `m` inputs and outputs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::fd_jacobian;
use crate::robot::{RobotModel, RobotParams};

mod two_mass;

pub use two_mass::TwoMass;

/// Symmetry tolerance for the mass matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Tolerance for analytic Jacobians against finite differences.
pub const FD_TOL: f64 = 1e-6;
/// Tolerance of the colocation test `H = B^T`.
pub const COLOCATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MbsDims {
    pub n: usize,
    pub ell: usize,
    pub p: usize,
    pub m: usize,
}

impl MbsDims {
    /// Panics unless `ell + p + m <= n` and `m >= 1`.
    pub fn new(n: usize, ell: usize, p: usize, m: usize) -> Self {
        assert!(m >= 1, "a model needs at least one input");
        assert!(ell + p + m <= n, "need ell + p + m <= n");
        Self { n, ell, p, m }
    }
}

/// Equations of motion of a constrained multibody system.
///
/// Implementations supply the Jacobians analytically so that
/// [`validate_model`] is a real cross-check.
pub trait MbsModel: Send + Sync {
    fn dims(&self) -> MbsDims;
    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;
    fn forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    fn constraints(&self, q: &DVector<f64>) -> DVector<f64>;
    fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Time derivative of the constraint Jacobian along `v`.
    fn constraint_jacobian_dot(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;
    fn nonholonomic(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dims();
        DMatrix::zeros(d.p, d.n)
    }
    fn nonholonomic_offset(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dims().p)
    }
    fn input_map(&self, q: &DVector<f64>) -> DMatrix<f64>;
    fn output(&self, q: &DVector<f64>) -> DVector<f64>;
    fn output_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
}

/// Box of admissible coordinates with an optional extra membership test.
#[derive(Clone)]
pub struct OperatingSet {
    pub bounds: Vec<(f64, f64)>,
    pub predicate: Option<fn(&DVector<f64>) -> bool>,
}

impl std::fmt::Debug for OperatingSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatingSet")
            .field("bounds", &self.bounds)
            .field("predicate", &self.predicate.is_some())
            .finish()
    }
}

impl OperatingSet {
    pub fn boxed(bounds: Vec<(f64, f64)>) -> Self {
        Self { bounds, predicate: None }
    }

    /// Open-interval membership plus the predicate.
    pub fn contains(&self, q: &DVector<f64>) -> bool {
        q.len() == self.bounds.len()
            && self
                .bounds
                .iter()
                .zip(q.iter())
                .all(|(&(lo, hi), &x)| x > lo && x < hi)
            && self.predicate.map_or(true, |p| p(q))
    }

    /// Draws a uniform point by rejection. Panics after 10000 misses.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        for _ in 0..10_000 {
            let q = DVector::from_iterator(
                self.bounds.len(),
                self.bounds.iter().map(|&(lo, hi)| {
                    let x = rng.random_range(lo..hi);
                    if x == lo { 0.5 * (lo + hi) } else { x }
                }),
            );
            if self.contains(&q) {
                return q;
            }
        }
        panic!("operating set rejected 10000 samples");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub q: DVector<f64>,
    pub min_mass_eigenvalue: f64,
    pub mass_positive_definite: bool,
    pub symmetry_defect: f64,
    pub g_defect: f64,
    pub h_defect: f64,
    pub gdot_defect: f64,
}

impl SampleReport {
    pub fn passes(&self) -> bool {
        self.mass_positive_definite
            && self.symmetry_defect <= SYMMETRY_TOL
            && self.g_defect <= FD_TOL
            && self.h_defect <= FD_TOL
            && self.gdot_defect <= FD_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: Vec<SampleReport>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.samples.iter().all(SampleReport::passes)
    }

    fn worst(&self, f: impl Fn(&SampleReport) -> f64) -> f64 {
        self.samples.iter().map(f).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let min_eig = self
            .samples
            .iter()
            .map(|s| s.min_mass_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        format!(
            "samples: {}\npass: {}\nmin_mass_eigenvalue: {:e}\nmax_symmetry_defect: {:e}\nmax_g_defect: {:e}\nmax_h_defect: {:e}\nmax_gdot_defect: {:e}",
            self.samples.len(),
            self.passes(),
            min_eig,
            self.worst(|s| s.symmetry_defect),
            self.worst(|s| s.g_defect),
            self.worst(|s| s.h_defect),
            self.worst(|s| s.gdot_defect),
        )
    }
}

/// Samples `samples` coordinates from `set` and checks the model at each.
///
/// Velocities for the `G'` check are drawn from `[-1, 1]^n`. The report is a
/// pure function of `seed`.
pub fn validate_model(
    model: &dyn MbsModel,
    set: &OperatingSet,
    samples: usize,
    seed: u64,
) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.dims().n;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let q = set.sample(&mut rng);
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        out.push(check_sample(model, q, &v));
    }
    ValidationReport { samples: out }
}

fn check_sample(model: &dyn MbsModel, q: DVector<f64>, v: &DVector<f64>) -> SampleReport {
    let m = model.mass_matrix(&q);
    let symmetry_defect = (&m - m.transpose()).amax();
    let mass_positive_definite = m.clone().cholesky().is_some();
    let min_mass_eigenvalue = ((&m + m.transpose()) * 0.5).symmetric_eigenvalues().min();

    let jac_defect = |analytic: DMatrix<f64>, f: &dyn Fn(&DVector<f64>) -> DVector<f64>| {
        if analytic.nrows() == 0 {
            return 0.0;
        }
        match fd_jacobian(f, &q, None) {
            Ok(fd) => (analytic - fd).amax(),
            Err(_) => f64::INFINITY,
        }
    };
    let g_defect = jac_defect(model.constraint_jacobian(&q), &|x| model.constraints(x));
    let h_defect = jac_defect(model.output_jacobian(&q), &|x| model.output(x));

    let gdot_defect = if model.dims().ell == 0 {
        0.0
    } else {
        let eps = 1e-6;
        let fd = (model.constraint_jacobian(&(&q + v * eps))
            - model.constraint_jacobian(&(&q - v * eps)))
            / (2.0 * eps);
        (model.constraint_jacobian_dot(&q, v) - fd).amax()
    };

    SampleReport {
        q,
        min_mass_eigenvalue,
        mass_positive_definite,
        symmetry_defect,
        g_defect,
        h_defect,
        gdot_defect,
    }
}

/// True when `H(q) = B(q)^T` to [`COLOCATION_TOL`].
pub fn is_colocated(model: &dyn MbsModel, q: &DVector<f64>) -> bool {
    let h = model.output_jacobian(q);
    let b = model.input_map(q);
    h.shape() == (b.ncols(), b.nrows()) && (h - b.transpose()).amax() <= COLOCATION_TOL
}

/// Names accepted by [`registered_model`].
pub const MODEL_NAMES: [&str; 3] = ["robot-reference", "robot-simulated", "two-mass-colocated"];

/// Looks up a shipped model together with its operating set.
pub fn registered_model(name: &str) -> Result<(Box<dyn MbsModel>, OperatingSet)> {
    match name {
        "robot-reference" => Ok((
            Box::new(RobotModel::new(RobotParams::reference())),
            crate::robot::operating_set(),
        )),
        "robot-simulated" => Ok((
            Box::new(RobotModel::new(RobotParams::simulated())),
            crate::robot::operating_set(),
        )),
        "two-mass-colocated" => Ok((Box::new(TwoMass::default()), TwoMass::operating_set())),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}
