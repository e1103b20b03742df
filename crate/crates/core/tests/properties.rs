use mbstrack::funnel::{FunnelController, FunnelDesign, FunnelFunction, Reference};
use mbstrack::internal::{
    annihilation_defect, gamma_matrix, high_gain, phi2_rows_with_basis, robot_internal_rhs, robot_linearization,
    schur_complement_formula,
};
use mbstrack::model::{registered_model, TwoMass};
use mbstrack::numerics::{fd_jacobian, is_positive_definite, kernel_basis, solve_linear};
use mbstrack::robot::{end_effector, initial_state, operating_set, output_from_end_effector};
use mbstrack::servo::banded::BandMatrix;
use mbstrack::{validate_model, MbsModel, RobotModel, RobotParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

/// Coordinates in the manipulator's operating set.
fn robot_q() -> impl Strategy<Value = DVector<f64>> {
    let gmax = (2.0f64 / 3.0).acos() * 0.999;
    (-1.0..1.0f64, -1.0..1.0f64, 0.05..1.5f64, 0.05..1.5f64, -gmax..gmax)
        .prop_map(|(a, b, c, d, e)| DVector::from_vec(vec![a, b, c, d, e]))
}

fn robot() -> RobotModel {
    RobotModel::new(RobotParams::reference())
}

/// `[G; H]` of the manipulator, the rows the internal coordinates annihilate.
fn constraint_output_rows(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    let g = model.constraint_jacobian(q);
    let h = model.output_jacobian(q);
    let mut out = DMatrix::zeros(4, 5);
    out.view_mut((0, 0), (2, 5)).copy_from(&g);
    out.view_mut((2, 0), (2, 5)).copy_from(&h);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_solve_residual(n in 1usize..8, seed in matrix(8, 9)) {
        let mut a = seed.view((0, 0), (n, n)).into_owned();
        for i in 0..n {
            a[(i, i)] += 4.0;
        }
        let b = seed.view((0, 8), (n, 1)).column(0).into_owned();
        let x = solve_linear(&a, &b).unwrap();
        prop_assert!((&a * &x - &b).amax() <= 1e-12);
    }

    #[test]
    fn kernel_basis_is_orthonormal_null_space(r in 1usize..7, extra in 1usize..3, seed in matrix(8, 8)) {
        let n = (r + extra).min(8);
        let a = seed.view((0, 0), (r.min(n - 1), n)).into_owned();
        let v = kernel_basis(&a).unwrap();
        prop_assert_eq!(v.ncols(), n - a.nrows());
        prop_assert!((&a * &v).amax() <= 1e-10);
        prop_assert!((v.transpose() * &v - DMatrix::identity(v.ncols(), v.ncols())).amax() <= 1e-10);
    }

    #[test]
    fn central_differences_exact_on_quadratics(a in matrix(3, 4), x in matrix(4, 1)) {
        let x = x.column(0).into_owned();
        let f = |z: &DVector<f64>| DVector::from_fn(3, |i, _| (0..4).map(|j| a[(i, j)] * z[j] * z[j]).sum());
        let jac = fd_jacobian(f, &x, Some(1e-5)).unwrap();
        let exact = DMatrix::from_fn(3, 4, |i, j| 2.0 * a[(i, j)] * x[j]);
        prop_assert!((jac - exact).amax() <= 1e-8);
    }

    #[test]
    fn band_solve_matches_dense(n in 4usize..30, kl in 0usize..4, ku in 0usize..4, vals in prop::collection::vec(-1.0..1.0f64, 30 * 9 + 30)) {
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // Weak diagonal so that pivoting is exercised.
                let v = vals[k] + if i == j { 0.1 } else { 0.0 };
                k += 1;
                band.set(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<f64> = vals[vals.len() - n..].to_vec();
        prop_assume!(dense.clone().svd(false, false).singular_values.min() > 1e-3);
        let x = band.clone().solve(&b).unwrap();
        prop_assert!(band.mul_vec(&x).iter().zip(&b).all(|(l, r)| (l - r).abs() <= 1e-8));
        let xd = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        prop_assert!(x.iter().zip(xd.iter()).all(|(l, r)| (l - r).abs() <= 1e-6 * (1.0 + r.abs())));
    }

    #[test]
    fn forces_at_most_quadratic_in_velocity(q in robot_q(), v in matrix(5, 1)) {
        let m = robot();
        let v = v.column(0).into_owned();
        let f = |s: f64| m.forces(&q, &(&v * s));
        // Third finite difference of a quadratic vanishes.
        let d3 = f(3.0) - f(2.0) * 3.0 + f(1.0) * 3.0 - f(0.0);
        prop_assert!(d3.amax() <= 1e-10);
    }

    #[test]
    fn tool_position_round_trip(y1 in -0.5..0.5f64, y2 in -1.4..1.4f64) {
        let p = RobotParams::reference();
        let r = end_effector(&[y1, y2], &p);
        let back = output_from_end_effector(&r, &p).unwrap();
        prop_assert!((back[0] - y1).abs() <= 1e-12 && (back[1] - y2).abs() <= 1e-12);
    }

    #[test]
    fn internal_rows_annihilate_inputs_and_reactions(q in robot_q()) {
        let d = annihilation_defect(&robot(), &q).unwrap();
        prop_assert!(d <= 1e-9, "defect {d}");
    }

    #[test]
    fn internal_rows_change_by_left_factor_with_basis(q in robot_q(), r in matrix(1, 1)) {
        let m = robot();
        let v = kernel_basis(&constraint_output_rows(&m, &q)).unwrap();
        let scale = 0.5 + r[(0, 0)].abs();
        let a = phi2_rows_with_basis(&m, &q, &v).unwrap();
        let b = phi2_rows_with_basis(&m, &q, &(&v * scale)).unwrap();
        // With V R in place of V the rows become R^{-1} phi2.
        prop_assert!((b * scale - a).amax() <= 1e-9);
    }

    #[test]
    fn stacked_rows_have_full_rank(q in robot_q()) {
        let m = robot();
        let gh = constraint_output_rows(&m, &q);
        let v = kernel_basis(&gh).unwrap();
        let phi2 = phi2_rows_with_basis(&m, &q, &v).unwrap();
        let mut with_phi = DMatrix::zeros(5, 5);
        with_phi.view_mut((0, 0), (4, 5)).copy_from(&gh);
        with_phi.view_mut((4, 0), (1, 5)).copy_from(&phi2);
        let mut with_kernel = with_phi.clone();
        with_kernel.view_mut((4, 0), (1, 5)).copy_from(&v.transpose());
        for mat in [with_phi, with_kernel] {
            let sv = mat.singular_values();
            prop_assert!(sv.min() > 1e-8 * sv.max());
        }
    }

    #[test]
    fn linear_model_zeros_hold_along_outputs(y1 in -0.4..0.1f64, y2 in 0.5..1.2f64) {
        let p = RobotParams::reference();
        let z = DVector::zeros(2);
        let rhs = |eta: [f64; 2], y: [f64; 2]| DVector::from_row_slice(&robot_internal_rhs(eta, y, [0.0; 2], &p).unwrap());
        let q = fd_jacobian(|e| rhs([e[0], e[1]], [y1, y2]), &z, None).unwrap();
        let p1 = fd_jacobian(|w| rhs([0.0; 2], [w[0], w[1]]), &DVector::from_vec(vec![y1, y2]), None).unwrap();
        prop_assert!(q[(0, 0)].abs() <= 1e-9);
        prop_assert!(p1.amax() <= 1e-9);
    }

    #[test]
    fn colocated_input_gain_is_positive(q in matrix(2, 1)) {
        let m = TwoMass::default();
        let q = q.column(0).into_owned();
        let s = high_gain(&m, &q).unwrap().schur;
        prop_assert!(is_positive_definite(&s));
        prop_assert!((schur_complement_formula(&m, &q).unwrap() - s).amax() <= 1e-12);
    }

    #[test]
    fn schur_block_matches_projection_formula(q in robot_q()) {
        let m = robot();
        let s = high_gain(&m, &q).unwrap().schur;
        let f = schur_complement_formula(&m, &q).unwrap();
        prop_assert!((s - &f).amax() <= 1e-8 * (1.0 + f.amax()));
        prop_assert!(gamma_matrix(&m, &q).unwrap().determinant().is_finite());
    }

    #[test]
    fn funnel_functions_are_admissible(p in 0.1..2.0f64, rate in 0.1..5.0f64, r in 1e-3..1.0f64) {
        let f = FunnelFunction::new(p, rate, r);
        let (phi0, _, _) = f.eval(0.0);
        for k in 0..400 {
            let t = k as f64 * 0.05;
            let (phi, d1, d2) = f.eval(t);
            prop_assert!(phi > 0.0 && phi <= 1.0 / r + 1e-12);
            prop_assert!(phi >= phi0 - 1e-12);
            // Bounds from |w'| <= rate p and |w''| <= rate^2 p with w >= r.
            prop_assert!(d1.abs() <= rate * p / (r * r) + 1e-9);
            prop_assert!(d2.abs() <= 3.0 * rate * rate * p * (1.0 + p / r) / (r * r) + 1e-9);
            prop_assert!(f.third_derivative(t).is_finite());
        }
    }

    #[test]
    fn feedback_is_negative_multiple_of_stacked_error(dq in matrix(5, 1), dv in matrix(5, 1), t in 0.0..0.05f64) {
        let p = RobotParams::reference();
        let lin = robot_linearization(&p).unwrap();
        let reference = Reference::robot_default(&p).unwrap();
        let ctl = FunnelController::new(lin, FunnelDesign::default(), p, reference);
        let q = initial_state(&p).unwrap() + dq.column(0) * 1e-3;
        let v = dv.column(0) * 1e-3;
        let eta = ctl.initial_state().eta2_ref;
        // Near rest and early on the state is inside every funnel.
        let (u, d) = ctl.control(t, &q, &v, eta).unwrap();
        let expected = DVector::from_vec(vec![d.e12, d.e21]) * (-ctl.lin.rho * d.kbar);
        prop_assert!((&u - expected).amax() <= 1e-12 * (1.0 + u.amax()));
        prop_assert!(d.kbar > 0.0);
    }
}

#[test]
fn validation_is_deterministic_per_seed() {
    let (m, set) = registered_model("robot-reference").unwrap();
    let a = validate_model(m.as_ref(), &set, 50, 3);
    let b = validate_model(m.as_ref(), &set, 50, 3);
    let c = validate_model(m.as_ref(), &set, 50, 4);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn shipped_models_pass_validation() {
    for name in mbstrack::model::MODEL_NAMES {
        let (m, set) = registered_model(name).unwrap();
        let report = validate_model(m.as_ref(), &set, 1000, 11);
        assert!(report.passes(), "{name}:\n{}", report.summary());
    }
}

#[test]
fn unknown_model_is_rejected() {
    assert!(registered_model("pendulum").is_err());
}

#[test]
fn operating_set_samples_are_members() {
    use rand::SeedableRng;
    let set = operating_set();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for _ in 0..500 {
        assert!(set.contains(&set.sample(&mut rng)));
    }
}

/// Closed-form internal dynamics against the equations of motion, at
/// consistent states with the first carriage, the arm and the passive joint
/// all moving.
#[test]
fn closed_form_internal_dynamics_match_equations_of_motion() {
    use mbstrack::internal::robot_internal_state;
    use mbstrack::sim::index1_accelerations;
    let p = RobotParams::reference().with_homogeneous_body3();
    let m = RobotModel::new(p);
    for (s2, b, g, vs2, vb, vg) in [
        (0.0, 0.8, 0.1, 0.5, 0.0, 0.0),
        (0.0, 0.8, 0.1, 0.0, 0.7, 0.0),
        (0.05, 0.7, -0.1, 0.3, -0.4, 0.5),
        (-0.1, 1.0, 0.2, -0.6, 0.9, -0.8),
    ] {
        let a = ((s2 + p.d - 0.5 * p.l2 * f64::cos(b)) / p.l1).acos();
        let q = DVector::from_vec(vec![-p.l1 * a.sin() + 0.5 * p.l2 * b.sin(), s2, a, b, g]);
        let va = (-vs2 - 0.5 * p.l2 * b.sin() * vb) / (p.l1 * a.sin());
        let v = DVector::from_vec(vec![-p.l1 * a.cos() * va + 0.5 * p.l2 * b.cos() * vb, vs2, va, vb, vg]);
        assert!(m.constraints(&q).amax() < 1e-12 && (m.constraint_jacobian(&q) * &v).amax() < 1e-12);
        let (acc, _) = index1_accelerations(&m, &q, &v, &DVector::from_vec(vec![0.3, -0.2]), (0.0, 0.0)).unwrap();
        let h = 1e-6;
        let ahead = robot_internal_state(&(&q + &v * h), &(&v + &acc * h), &p);
        let behind = robot_internal_state(&(&q - &v * h), &(&v - &acc * h), &p);
        let y = [q[1], q[3] + p.delta() * q[4]];
        let yd = [v[1], v[3] + p.delta() * v[4]];
        let f = robot_internal_rhs(robot_internal_state(&q, &v, &p), y, yd, &p).unwrap();
        for k in 0..2 {
            let fd = (ahead[k] - behind[k]) / (2.0 * h);
            assert!((fd - f[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "component {k}: {fd} vs {}", f[k]);
        }
    }
}

/// Robot model with one constraint-Jacobian entry sign-flipped.
struct CorruptedJacobian(RobotModel);

impl MbsModel for CorruptedJacobian {
    fn dims(&self) -> mbstrack::MbsDims {
        self.0.dims()
    }
    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.0.mass_matrix(q)
    }
    fn forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.0.forces(q, v)
    }
    fn constraints(&self, q: &DVector<f64>) -> DVector<f64> {
        self.0.constraints(q)
    }
    fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.0.constraint_jacobian(q);
        g[(0, 2)] = -g[(0, 2)];
        g
    }
    fn constraint_jacobian_dot(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        self.0.constraint_jacobian_dot(q, v)
    }
    fn input_map(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.0.input_map(q)
    }
    fn output(&self, q: &DVector<f64>) -> DVector<f64> {
        self.0.output(q)
    }
    fn output_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.0.output_jacobian(q)
    }
}

#[test]
fn validation_catches_a_wrong_jacobian_entry() {
    let report = validate_model(&CorruptedJacobian(robot()), &operating_set(), 200, 1);
    assert!(!report.passes());
    let worst = report.samples.iter().map(|s| s.g_defect).fold(0.0, f64::max);
    assert!(worst > 1e-2, "{worst}");
}
