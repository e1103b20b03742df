//! Feedforward by inversion: the equations of motion with the output pinned
//! to the reference are solved as a boundary value problem on `[T0, Tf]`.
//!
//! Unknowns per grid node are `(q, v, lambda, u)`. Dynamics are transcribed
//! with Hermite-Simpson defects; loop closure and output constraints hold at
//! every node. The internal dynamics are unstable, so part of the boundary
//! data is imposed at each end of the window and the solution contains input
//! before the motion starts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::funnel::ReferenceSignal;
use crate::model::MbsModel;
use crate::numerics::{fd_jacobian, solve_linear, solve_linear_multi};
use crate::robot::RobotModel;

pub mod banded;

use banded::BandMatrix;

/// Rest point with output held at a constant target.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda: DVector<f64>,
    pub u: DVector<f64>,
}

impl Equilibrium {
    /// Node vector `(q, v, lambda, u)`.
    pub fn stacked(&self) -> DVector<f64> {
        let mut z = Vec::with_capacity(self.q.len() * 2 + self.lambda.len() + self.u.len());
        z.extend(self.q.iter());
        z.extend(self.v.iter());
        z.extend(self.lambda.iter());
        z.extend(self.u.iter());
        DVector::from_vec(z)
    }
}

/// Newton solve of `0 = f(q, 0) + G^T lambda + B u`, `g(q) = 0`, `h(q) = y`.
pub fn equilibrium(model: &dyn MbsModel, y_target: &DVector<f64>, guess: &DVector<f64>) -> Result<Equilibrium> {
    let d = model.dims();
    assert_eq!(d.p, 0, "nonholonomic constraints are not supported here");
    let (n, ell, m) = (d.n, d.ell, d.m);
    let zero_v = DVector::zeros(n);
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let q = x.rows(0, n).into_owned();
        let lam = x.rows(n, ell).into_owned();
        let u = x.rows(n + ell, m).into_owned();
        let dyn_rows = model.forces(&q, &zero_v)
            + model.constraint_jacobian(&q).transpose() * lam
            + model.input_map(&q) * u;
        let mut r = DVector::zeros(n + ell + m);
        r.rows_mut(0, n).copy_from(&dyn_rows);
        r.rows_mut(n, ell).copy_from(&model.constraints(&q));
        r.rows_mut(n + ell, m).copy_from(&(model.output(&q) - y_target));
        r
    };
    let mut x = DVector::zeros(n + ell + m);
    x.rows_mut(0, n).copy_from(guess);
    let mut res = residual(&x);
    for it in 0..50 {
        let norm = res.amax();
        if !norm.is_finite() {
            return Err(Error::NewtonDiverged { iterations: it, residual: norm });
        }
        if norm <= 1e-10 {
            return Ok(Equilibrium {
                q: x.rows(0, n).into_owned(),
                v: zero_v,
                lambda: x.rows(n, ell).into_owned(),
                u: x.rows(n + ell, m).into_owned(),
            });
        }
        let jac = fd_jacobian(residual, &x, None)
            .map_err(|_| Error::NewtonDiverged { iterations: it, residual: norm })?;
        let step = solve_linear(&jac, &res).map_err(|_| Error::NewtonDiverged { iterations: it, residual: norm })?;
        x -= step;
        res = residual(&x);
    }
    Err(Error::NewtonDiverged { iterations: 50, residual: res.amax() })
}

/// Manipulator rest point for output `y`, started from the loop's rest pose.
pub fn robot_equilibrium(model: &RobotModel, y: [f64; 2]) -> Result<Equilibrium> {
    let mut guess = crate::robot::initial_state(&model.params).map_err(|_| Error::NewtonDiverged {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    guess[1] = y[0];
    guess[3] = y[1];
    equilibrium(model, &DVector::from_row_slice(&y), &guess)
}

/// Entries of the node vector pinned to the equilibrium at each window end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySelection {
    pub at_start: Vec<usize>,
    pub at_end: Vec<usize>,
}

impl BoundarySelection {
    /// Manipulator choice: at `T0` all of `q`, `lambda` and `u`; at `Tf` the
    /// passive angle, `lambda` and `u`.
    ///
    /// Each constrained channel of the transcription has a pair of spurious
    /// modes with growth factors `-2 +- sqrt(3)` per interval, so every
    /// multiplier and input needs a condition at both ends. Pinning `v1, v2`
    /// at `T0` instead of `lambda2`, and `lambda1` only at `T0`, leaves a mode
    /// growing like `3.7^N` and the Jacobian is singular for `N >= 40`.
    pub fn robot_default() -> Self {
        Self { at_start: vec![0, 1, 2, 3, 4, 10, 11, 12, 13], at_end: vec![4, 10, 11, 12, 13] }
    }

    /// The selection `q, v1, v2, lambda1, u` at `T0` and `gamma, lambda2, u`
    /// at `Tf`; numerically singular except on very coarse grids.
    pub fn robot_velocity_pinned() -> Self {
        Self { at_start: vec![0, 1, 2, 3, 4, 5, 6, 10, 12, 13], at_end: vec![4, 11, 12, 13] }
    }

    fn check(&self, width: usize) {
        assert_eq!(self.at_start.len() + self.at_end.len(), width, "selection must pin 2n + ell + m entries");
        for list in [&self.at_start, &self.at_end] {
            let mut s = list.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), list.len(), "duplicate boundary index");
            assert!(s.iter().all(|&i| i < width), "boundary index out of range");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpOptions {
    /// Window start `T0`.
    pub t_start: f64,
    /// Window end `Tf`.
    pub t_end: f64,
    /// Number of intervals `N`.
    pub intervals: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl BvpOptions {
    /// `T0 = t0 - 0.5`, `Tf = tf + 1`, 350 intervals.
    pub fn around(t0: f64, tf: f64) -> Self {
        Self { t_start: t0 - 0.5, t_end: tf + 1.0, intervals: 350, tol: 1e-8, max_iter: 40 }
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = (self.t_end - self.t_start) / self.intervals as f64;
        (0..=self.intervals)
            .map(|i| if i == self.intervals { self.t_end } else { self.t_start + i as f64 * h })
            .collect()
    }
}

/// Converged node values on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSolution {
    pub grid: Vec<f64>,
    /// One `(q, v, lambda, u)` vector per grid node.
    pub nodes: Vec<DVector<f64>>,
    pub n: usize,
    pub ell: usize,
    pub m: usize,
    pub newton_iterations: usize,
    pub final_residual: f64,
}

impl CollocationSolution {
    pub fn q(&self, i: usize) -> DVector<f64> {
        self.nodes[i].rows(0, self.n).into_owned()
    }
    pub fn v(&self, i: usize) -> DVector<f64> {
        self.nodes[i].rows(self.n, self.n).into_owned()
    }
    pub fn lambda(&self, i: usize) -> DVector<f64> {
        self.nodes[i].rows(2 * self.n, self.ell).into_owned()
    }
    pub fn u(&self, i: usize) -> DVector<f64> {
        self.nodes[i].rows(2 * self.n + self.ell, self.m).into_owned()
    }

    /// Largest `|u|` component over the grid.
    pub fn max_input(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.u(i).amax()).fold(0.0, f64::max)
    }

    /// Header plus one line per node, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.n).map(|i| format!("q{i}")));
        cols.extend((1..=self.n).map(|i| format!("v{i}")));
        cols.extend((1..=self.ell).map(|i| format!("lam{i}")));
        cols.extend((1..=self.m).map(|i| format!("u{i}")));
        let mut out = cols.join(",");
        out.push('\n');
        for (t, z) in self.grid.iter().zip(&self.nodes) {
            let mut line = vec![crate::sim::fmt_value(*t)];
            line.extend(z.iter().map(|v| crate::sim::fmt_value(*v)));
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Transcription of the servo-constraint problem.
pub struct ServoProblem<'a> {
    pub model: &'a dyn MbsModel,
    pub reference: &'a dyn ReferenceSignal,
    pub selection: BoundarySelection,
    pub start: Equilibrium,
    pub end: Equilibrium,
    pub grid: Vec<f64>,
}

struct Layout {
    n: usize,
    ell: usize,
    m: usize,
    width: usize,
    n0: usize,
}

impl<'a> ServoProblem<'a> {
    pub fn new(
        model: &'a dyn MbsModel,
        reference: &'a dyn ReferenceSignal,
        selection: BoundarySelection,
        start: Equilibrium,
        end: Equilibrium,
        grid: Vec<f64>,
    ) -> Self {
        let d = model.dims();
        assert_eq!(d.p, 0, "nonholonomic constraints are not supported here");
        selection.check(2 * d.n + d.ell + d.m);
        Self { model, reference, selection, start, end, grid }
    }

    fn layout(&self) -> Layout {
        let d = self.model.dims();
        Layout {
            n: d.n,
            ell: d.ell,
            m: d.m,
            width: 2 * d.n + d.ell + d.m,
            n0: self.selection.at_start.len(),
        }
    }

    pub fn unknowns(&self) -> usize {
        self.grid.len() * self.layout().width
    }

    // (q', v') at one node.
    fn rate(&self, z: &[f64], l: &Layout) -> Result<DVector<f64>> {
        let q = DVector::from_row_slice(&z[..l.n]);
        let v = DVector::from_row_slice(&z[l.n..2 * l.n]);
        let lam = DVector::from_row_slice(&z[2 * l.n..2 * l.n + l.ell]);
        let u = DVector::from_row_slice(&z[2 * l.n + l.ell..]);
        let rhs = self.model.forces(&q, &v)
            + self.model.constraint_jacobian(&q).transpose() * lam
            + self.model.input_map(&q) * u;
        let acc = solve_linear(&self.model.mass_matrix(&q), &rhs).map_err(|_| Error::NonFiniteEvaluation)?;
        let mut out = DVector::zeros(2 * l.n);
        out.rows_mut(0, l.n).copy_from(&v);
        out.rows_mut(l.n, l.n).copy_from(&acc);
        Ok(out)
    }

    // Hermite-Simpson defect of interval [a, b].
    fn defect(&self, za: &[f64], zb: &[f64], h: f64, l: &Layout) -> Result<DVector<f64>> {
        let ns = 2 * l.n;
        let fa = self.rate(za, l)?;
        let fb = self.rate(zb, l)?;
        let mut zm = vec![0.0; l.width];
        for k in 0..l.width {
            zm[k] = 0.5 * (za[k] + zb[k]);
        }
        for k in 0..ns {
            zm[k] += h / 8.0 * (fa[k] - fb[k]);
        }
        let fm = self.rate(&zm, l)?;
        let mut d = DVector::zeros(ns);
        for k in 0..ns {
            d[k] = zb[k] - za[k] - h / 6.0 * (fa[k] + 4.0 * fm[k] + fb[k]);
        }
        Ok(d)
    }

    fn algebraic(&self, z: &[f64], t: f64, l: &Layout) -> DVector<f64> {
        let q = DVector::from_row_slice(&z[..l.n]);
        let mut r = DVector::zeros(l.ell + l.m);
        r.rows_mut(0, l.ell).copy_from(&self.model.constraints(&q));
        r.rows_mut(l.ell, l.m).copy_from(&(self.model.output(&q) - self.reference.sample(t).y));
        r
    }

    /// Residual of the stacked unknowns; same length as `z`.
    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let l = self.layout();
        let w = l.width;
        let nint = self.grid.len() - 1;
        let mut r = Vec::with_capacity(z.len());
        let s = self.start.stacked();
        let e = self.end.stacked();
        for &k in &self.selection.at_start {
            r.push(z[k] - s[k]);
        }
        for i in 0..nint {
            let za = &z[i * w..(i + 1) * w];
            let zb = &z[(i + 1) * w..(i + 2) * w];
            let h = self.grid[i + 1] - self.grid[i];
            r.extend(self.defect(za, zb, h, &l)?.iter());
            r.extend(self.algebraic(zb, self.grid[i + 1], &l).iter());
        }
        for &k in &self.selection.at_end {
            r.push(z[nint * w + k] - e[k]);
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation);
        }
        Ok(r)
    }

    /// Jacobian of [`Self::residual`] in band storage, by central differences
    /// on each interval's local stencil.
    pub fn jacobian(&self, z: &[f64]) -> Result<BandMatrix> {
        let l = self.layout();
        let w = l.width;
        let nint = self.grid.len() - 1;
        let ns = 2 * l.n;
        let kl = l.n0 + w - 1;
        let ku = (2 * w - 1).saturating_sub(l.n0).max(w - 1);
        let mut jac = BandMatrix::zeros(z.len(), kl, ku);
        for (row, &k) in self.selection.at_start.iter().enumerate() {
            jac.set(row, k, 1.0);
        }
        let mut local = vec![0.0; 2 * w];
        for i in 0..nint {
            let row0 = l.n0 + i * (w);
            let col0 = i * w;
            let h = self.grid[i + 1] - self.grid[i];
            local.copy_from_slice(&z[col0..col0 + 2 * w]);
            for c in 0..2 * w {
                let x = local[c];
                let step = 1e-6 * x.abs().max(1.0);
                local[c] = x + step;
                let dp = self.defect(&local[..w], &local[w..], h, &l)?;
                local[c] = x - step;
                let dm = self.defect(&local[..w], &local[w..], h, &l)?;
                local[c] = x;
                for k in 0..ns {
                    let v = (dp[k] - dm[k]) / (2.0 * step);
                    if v != 0.0 {
                        jac.set(row0 + k, col0 + c, v);
                    }
                }
            }
            let qb = DVector::from_row_slice(&z[col0 + w..col0 + w + l.n]);
            let gq = self.model.constraint_jacobian(&qb);
            let hq = self.model.output_jacobian(&qb);
            for k in 0..l.ell {
                for j in 0..l.n {
                    jac.set(row0 + ns + k, col0 + w + j, gq[(k, j)]);
                }
            }
            for k in 0..l.m {
                for j in 0..l.n {
                    jac.set(row0 + ns + l.ell + k, col0 + w + j, hq[(k, j)]);
                }
            }
        }
        let last = l.n0 + nint * w;
        for (row, &k) in self.selection.at_end.iter().enumerate() {
            jac.set(last + row, nint * w + k, 1.0);
        }
        Ok(jac)
    }

    /// Initial guess: `q` ramps linearly between the two rest points over the
    /// reference's motion interval; other unknowns start at zero.
    pub fn initial_guess(&self) -> Vec<f64> {
        let l = self.layout();
        let (t0, tf) = (self.reference.start(), self.reference.end());
        let mut z = vec![0.0; self.unknowns()];
        for (i, &t) in self.grid.iter().enumerate() {
            let s = if tf > t0 { ((t - t0) / (tf - t0)).clamp(0.0, 1.0) } else { 1.0 };
            for k in 0..l.n {
                z[i * l.width + k] = (1.0 - s) * self.start.q[k] + s * self.end.q[k];
            }
        }
        z
    }

    /// Damped Newton from `z`.
    pub fn solve_from(&self, mut z: Vec<f64>, tol: f64, max_iter: usize) -> Result<CollocationSolution> {
        let l = self.layout();
        let mut r = self.residual(&z)?;
        let mut iterations = 0;
        loop {
            let norm_inf = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm_inf <= tol {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::NewtonDiverged { iterations, residual: norm_inf });
            }
            iterations += 1;
            let jac = self.jacobian(&z)?;
            let step = jac
                .solve(&r)
                .map_err(|_| Error::NewtonDiverged { iterations, residual: norm_inf })?;
            let merit = r.iter().map(|v| v * v).sum::<f64>();
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = z.iter().zip(&step).map(|(a, s)| a - alpha * s).collect();
                if let Ok(rt) = self.residual(&trial) {
                    let mt = rt.iter().map(|v| v * v).sum::<f64>();
                    if mt <= (1.0 - 1e-4 * alpha) * merit || alpha < 1e-3 {
                        z = trial;
                        r = rt;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-6 {
                    return Err(Error::NewtonDiverged { iterations, residual: norm_inf });
                }
            }
        }
        let nodes = z.chunks(l.width).map(DVector::from_row_slice).collect();
        Ok(CollocationSolution {
            grid: self.grid.clone(),
            nodes,
            n: l.n,
            ell: l.ell,
            m: l.m,
            newton_iterations: iterations,
            final_residual: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        })
    }
}

/// Solves the servo-constraint problem for `reference` on the window in `opts`.
///
/// The rest points at both ends are computed from the reference's constant
/// values, starting Newton from `guess_q`.
pub fn solve_bvp(
    model: &dyn MbsModel,
    reference: &dyn ReferenceSignal,
    selection: BoundarySelection,
    guess_q: &DVector<f64>,
    opts: &BvpOptions,
) -> Result<CollocationSolution> {
    if opts.intervals < 20 {
        return Err(Error::BadGrid(opts.intervals));
    }
    let start = equilibrium(model, &reference.sample(opts.t_start).y, guess_q)?;
    let end = equilibrium(model, &reference.sample(opts.t_end).y, &start.q)?;
    let problem = ServoProblem::new(model, reference, selection, start, end, opts.grid());
    problem.solve_from(problem.initial_guess(), opts.tol, opts.max_iter)
}

/// Manipulator inversion with the default selection, started at its rest pose.
pub fn solve_robot_bvp(model: &RobotModel, reference: &dyn ReferenceSignal, opts: &BvpOptions) -> Result<CollocationSolution> {
    let guess = crate::robot::initial_state(&model.params)?;
    solve_bvp(model, reference, BoundarySelection::robot_default(), &guess, opts)
}

/// Causal feedforward from a collocation solution.
///
/// Zero before `t0`, piecewise cubic Hermite interpolation of the node inputs
/// on the grid (slopes by centred differences), held at the last node value
/// after the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedforward {
    grid: Vec<f64>,
    values: Vec<DVector<f64>>,
    slopes: Vec<DVector<f64>>,
    t0: f64,
    clip: bool,
}

impl Feedforward {
    pub fn new(sol: &CollocationSolution, t0: f64) -> Self {
        Self::build(sol, t0, true)
    }

    /// Same interpolant without the clipping before `t0`.
    pub fn unclipped(sol: &CollocationSolution) -> Self {
        Self::build(sol, f64::NEG_INFINITY, false)
    }

    fn build(sol: &CollocationSolution, t0: f64, clip: bool) -> Self {
        let values: Vec<DVector<f64>> = (0..sol.grid.len()).map(|i| sol.u(i)).collect();
        let g = &sol.grid;
        let last = g.len() - 1;
        let slopes = (0..g.len())
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(last));
                (&values[b] - &values[a]) / (g[b] - g[a])
            })
            .collect();
        Self { grid: sol.grid.clone(), values, slopes, t0, clip }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let m = self.values[0].len();
        if self.clip && t < self.t0 {
            return DVector::zeros(m);
        }
        let g = &self.grid;
        if t <= g[0] {
            return self.values[0].clone();
        }
        if t >= g[g.len() - 1] {
            return self.values[g.len() - 1].clone();
        }
        let i = g.partition_point(|&x| x <= t) - 1;
        let h = g[i + 1] - g[i];
        let s = (t - g[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.values[i] * h00 + &self.slopes[i] * (h10 * h) + &self.values[i + 1] * h01 + &self.slopes[i + 1] * (h11 * h)
    }
}

/// Node-wise output error `max |h(q) - y_ref|` of a solution.
pub fn servo_defect(model: &dyn MbsModel, reference: &dyn ReferenceSignal, sol: &CollocationSolution) -> f64 {
    (0..sol.grid.len())
        .map(|i| (model.output(&sol.q(i)) - reference.sample(sol.grid[i]).y).amax())
        .fold(0.0, f64::max)
}

/// `M^{-1}` applied to several columns; exposed for diagnostics.
pub fn mass_solve(model: &dyn MbsModel, q: &DVector<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_linear_multi(&model.mass_matrix(q), rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funnel::{ConstantReference, Reference};
    use crate::robot::RobotParams;
    use approx::assert_abs_diff_eq;

    fn model() -> RobotModel {
        RobotModel::new(RobotParams::reference())
    }

    #[test]
    fn start_equilibrium_is_rest_pose() {
        let m = model();
        let (a0, b0) = crate::robot::initial_configuration(&m.params).unwrap();
        let eq = robot_equilibrium(&m, [0.0, b0]).unwrap();
        assert_abs_diff_eq!(eq.q[2], a0, epsilon = 1e-10);
        assert_abs_diff_eq!(eq.q[3], b0, epsilon = 1e-10);
        assert!(eq.q[4].abs() <= 1e-10 && eq.q[0].abs() <= 1e-10);
        assert!(eq.lambda.amax() <= 1e-10 && eq.u.amax() <= 1e-10);
    }

    #[test]
    fn final_equilibrium_has_no_load() {
        let m = model();
        let r = Reference::robot_default(&m.params).unwrap();
        let eq = robot_equilibrium(&m, r.final_output()).unwrap();
        assert!(eq.q[4].abs() <= 1e-10);
        assert!(eq.u.amax() <= 1e-10);
        assert!(m.constraints(&eq.q).amax() <= 1e-10);
    }

    #[test]
    fn unreachable_target_diverges() {
        let m = model();
        assert!(matches!(robot_equilibrium(&m, [100.0, 0.6]), Err(Error::NewtonDiverged { .. })));
    }

    #[test]
    fn stationary_problem_has_zero_residual_and_solution() {
        let m = model();
        let eq = robot_equilibrium(&m, [0.0, 0.6f64.asin()]).unwrap();
        let r = ConstantReference(m.output(&eq.q));
        let opts = BvpOptions { t_start: 0.0, t_end: 1.0, intervals: 20, tol: 1e-8, max_iter: 40 };
        let p = ServoProblem::new(&m, &r, BoundarySelection::robot_default(), eq.clone(), eq.clone(), opts.grid());
        let z: Vec<f64> = (0..21).flat_map(|_| eq.stacked().iter().copied().collect::<Vec<_>>()).collect();
        let res = p.residual(&z).unwrap();
        assert!(res.iter().all(|v| v.abs() <= 1e-12));
        let sol = solve_robot_bvp(&m, &r, &opts).unwrap();
        assert!(sol.max_input() <= 1e-10);
        assert!((0..21).all(|i| sol.lambda(i).amax() <= 1e-10));
    }

    #[test]
    fn jacobian_matches_dense_differences() {
        let m = model();
        let r = Reference::robot_default(&m.params).unwrap();
        let opts = BvpOptions { t_start: -0.5, t_end: 2.0, intervals: 20, tol: 1e-8, max_iter: 40 };
        let start = robot_equilibrium(&m, r.initial_output()).unwrap();
        let end = robot_equilibrium(&m, r.final_output()).unwrap();
        let p = ServoProblem::new(&m, &r, BoundarySelection::robot_default(), start, end, opts.grid());
        let mut z = p.initial_guess();
        for (k, v) in z.iter_mut().enumerate() {
            *v += 0.01 * ((k as f64) * 0.37).sin();
        }
        let jac = p.jacobian(&z).unwrap();
        let x = DVector::from_row_slice(&z);
        let dense = fd_jacobian(|x| DVector::from_vec(p.residual(x.as_slice()).unwrap()), &x, None).unwrap();
        for i in 0..z.len() {
            for j in 0..z.len() {
                assert!((jac.get(i, j) - dense[(i, j)]).abs() <= 1e-6 * dense[(i, j)].abs().max(1.0), "({i},{j})");
            }
        }
    }

    #[test]
    fn too_few_intervals() {
        let m = model();
        let r = Reference::robot_default(&m.params).unwrap();
        let opts = BvpOptions { intervals: 10, ..BvpOptions::around(0.0, 1.0) };
        assert_eq!(solve_robot_bvp(&m, &r, &opts).unwrap_err(), Error::BadGrid(10));
    }
}
