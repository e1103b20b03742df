//! Funnel feedback for the manipulator.
//!
//! The second output is tracked directly. The first channel tracks the
//! unstable internal coordinate `eta2` against a bounded reference `eta2_ref`
//! obtained by integrating the unstable linear model forward from a
//! precomputed initial value. Derivatives of the new output are replaced by
//! their linear-model expressions in `q` and `v`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::internal::{psi, LinearizedInternalDynamics};
use crate::model::MbsModel;
use crate::robot::{RobotModel, RobotParams};

pub mod reference;

pub use reference::{timing_law, ConstantReference, RefSample, Reference, ReferenceSignal};

/// `phi(t) = 1 / (p exp(-qrate t) + r)`; the funnel boundary is `1 / phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunnelFunction {
    pub p: f64,
    pub qrate: f64,
    pub r: f64,
}

impl FunnelFunction {
    pub fn new(p: f64, qrate: f64, r: f64) -> Self {
        Self { p, qrate, r }
    }

    /// `(phi, phi', phi'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let e = self.p * (-self.qrate * t).exp();
        let w = e + self.r;
        let wd = -self.qrate * e;
        let wdd = self.qrate * self.qrate * e;
        let phi = 1.0 / w;
        (phi, -wd * phi * phi, (2.0 * wd * wd / w - wdd) * phi * phi)
    }

    /// Third derivative of `phi`, used only for boundedness checks.
    pub fn third_derivative(&self, t: f64) -> f64 {
        let e = self.p * (-self.qrate * t).exp();
        let w = e + self.r;
        let (w1, w2, w3) = (-self.qrate * e, self.qrate.powi(2) * e, -self.qrate.powi(3) * e);
        -w3 / w.powi(2) + 6.0 * w1 * w2 / w.powi(3) - 6.0 * w1.powi(3) / w.powi(4)
    }
}

/// Funnels and gains of the three chain stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunnelDesign {
    pub stages: [FunnelFunction; 3],
    pub kappa: [f64; 3],
}

impl Default for FunnelDesign {
    fn default() -> Self {
        Self {
            stages: [
                FunnelFunction::new(0.5, 2.0, 0.001),
                FunnelFunction::new(1.0, 2.0, 0.001),
                FunnelFunction::new(1.0, 2.0, 0.001),
            ],
            kappa: [1.0, 1.0, 50.0],
        }
    }
}

/// Bounded initial value of the unstable reference state.
///
/// `-int_0^inf exp(-mu s) P~ y_ref(s) ds`: composite Simpson on the moving
/// part of the reference and the exact tail for the constant remainder.
pub fn eta2_ref_init(lin: &LinearizedInternalDynamics, reference: &dyn ReferenceSignal) -> f64 {
    let mu = lin.mu_unstable();
    let tf = reference.end().max(0.0);
    let pt = lin.p_tilde.row(0).transpose();
    let f = |s: f64| (-mu * s).exp() * pt.dot(&reference.sample(s).y);
    let mut n = ((tf / 1e-3).ceil() as usize).max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = tf / n as f64;
    let mut acc = 0.0;
    if tf > 0.0 {
        acc = f(0.0) + f(tf);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc *= h / 3.0;
    }
    let tail = (-mu * tf).exp() * pt.dot(&reference.sample(tf).y) / mu;
    -(acc + tail)
}

/// Right-hand side of the unstable reference model.
pub fn reference_dynamics_rate(lin: &LinearizedInternalDynamics, eta: f64, y_ref: &DVector<f64>) -> f64 {
    lin.mu_unstable() * eta + lin.p_tilde.row(0).transpose().dot(y_ref)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub eta2_ref: f64,
    pub eta2_ref0: f64,
}

impl ControllerState {
    pub fn new(eta2_ref0: f64) -> Self {
        Self { eta2_ref: eta2_ref0, eta2_ref0 }
    }
}

/// One classical Runge-Kutta step of the reference model from `t` to `t + dt`.
pub fn step_reference_dynamics(
    state: ControllerState,
    lin: &LinearizedInternalDynamics,
    reference: &dyn ReferenceSignal,
    t: f64,
    dt: f64,
) -> ControllerState {
    let rate = |tt: f64, e: f64| reference_dynamics_rate(lin, e, &reference.sample(tt).y);
    let e = state.eta2_ref;
    let k1 = rate(t, e);
    let k2 = rate(t + 0.5 * dt, e + 0.5 * dt * k1);
    let k3 = rate(t + 0.5 * dt, e + 0.5 * dt * k2);
    let k4 = rate(t + dt, e + dt * k3);
    ControllerState { eta2_ref: e + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), ..state }
}

/// Everything the control law computed on its way to `u`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub e10: f64,
    pub e10_d1: f64,
    pub e10_d2: f64,
    pub e11: f64,
    pub e11_d1: f64,
    pub e12: f64,
    pub e20: f64,
    pub e21: f64,
    pub k10: f64,
    pub k10_d1: f64,
    pub k11: f64,
    pub k20: f64,
    pub kbar: f64,
    pub ebar_norm: f64,
    pub phi: [f64; 3],
    pub psi: f64,
}

impl Diagnostics {
    /// `1 - phi |e|` over every constrained stage; positive inside all funnels.
    pub fn min_margin(&self) -> f64 {
        [
            1.0 - self.phi[0] * self.e10.abs(),
            1.0 - self.phi[1] * self.e11.abs(),
            1.0 - self.phi[0] * self.e20.abs(),
            1.0 - self.phi[2] * self.ebar_norm,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// Funnel controller for the manipulator, designed on a reference model.
#[derive(Debug, Clone)]
pub struct FunnelController {
    pub lin: LinearizedInternalDynamics,
    pub design: FunnelDesign,
    pub params: RobotParams,
    pub reference: Reference,
}

fn gain(kappa: f64, phi: f64, e: f64, t: f64, stage: &'static str) -> Result<f64> {
    let g = 1.0 - phi * phi * e * e;
    if g <= 0.0 || !g.is_finite() {
        return Err(Error::FunnelViolation { t, stage });
    }
    Ok(kappa / g)
}

impl FunnelController {
    pub fn new(lin: LinearizedInternalDynamics, design: FunnelDesign, params: RobotParams, reference: Reference) -> Self {
        Self { lin, design, params, reference }
    }

    pub fn initial_state(&self) -> ControllerState {
        ControllerState::new(eta2_ref_init(&self.lin, &self.reference))
    }

    /// Feedback input at `t` for plant state `(q, v)` and reference state `eta2_ref`.
    pub fn control(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>, eta2_ref: f64) -> Result<(DVector<f64>, Diagnostics)> {
        let lin = &self.lin;
        let model = RobotModel::new(self.params);
        let mu = lin.mu_unstable();
        let k1 = lin.k1[(0, 0)];
        let k2 = lin.k2.row(0).transpose();
        let pt = lin.p_tilde.row(0).transpose();
        let rs = reference::ReferenceSignal::sample(&self.reference, t);

        let y = model.output(q);
        let yd = model.output_jacobian(q) * v;
        let psi_val = psi(q, v, lin, &self.params);

        let eta_d1 = mu * eta2_ref + pt.dot(&rs.y);
        let eta_d2 = mu * eta_d1 + pt.dot(&rs.yd);

        let [st0, st1, st2] = self.design.stages;
        let [kap0, kap1, kap2] = self.design.kappa;
        let (phi0, phi0_d, _) = st0.eval(t);
        let (phi1, _, _) = st1.eval(t);
        let (phi2, _, _) = st2.eval(t);

        let e10 = k1 * (psi_val - eta2_ref);
        let e10_d1 = k1 * (mu * psi_val + pt.dot(&y)) - k1 * eta_d1;
        let e10_d2 = k1 * (mu * mu * psi_val + mu * pt.dot(&y) + pt.dot(&yd)) - k1 * eta_d2;

        let k10 = gain(kap0, phi0, e10, t, "e10")?;
        let g0 = 1.0 - phi0 * phi0 * e10 * e10;
        let k10_d1 = 2.0 * kap0 / (g0 * g0) * (phi0 * phi0_d * e10 * e10 + phi0 * phi0 * e10 * e10_d1);
        let e11 = e10_d1 + k10 * e10;
        let e11_d1 = e10_d2 + k10 * e10_d1 + k10_d1 * e10;
        let k11 = gain(kap1, phi1, e11, t, "e11")?;
        let e12 = e11_d1 + k11 * e11;

        let e20 = k2.dot(&(&y - &rs.y));
        let k20 = gain(kap0, phi0, e20, t, "e20")?;
        let e21 = k2.dot(&(&yd - &rs.yd)) + k20 * e20;

        let ebar = DVector::from_row_slice(&[e12, e21]);
        let ebar_norm = ebar.norm();
        let kbar = gain(kap2, phi2, ebar_norm, t, "ebar")?;
        let u = ebar * (-lin.rho * kbar);

        let diag = Diagnostics {
            e10,
            e10_d1,
            e10_d2,
            e11,
            e11_d1,
            e12,
            e20,
            e21,
            k10,
            k10_d1,
            k11,
            k20,
            kbar,
            ebar_norm,
            phi: [phi0, phi1, phi2],
            psi: psi_val,
        };
        Ok((u, diag))
    }
}

/// Bounded solution of the unstable reference model, tabulated once.
///
/// Forward integration from [`eta2_ref_init`] amplifies any rounding or
/// quadrature error by `exp(mu t)`, about `1e24` over two seconds. The same
/// trajectory is the unique bounded one, so it is swept backward (where the
/// model is stable) from its constant value after the motion ends, and read
/// back by cubic Hermite interpolation with exact slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStateTable {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    rates: Vec<f64>,
    mu: f64,
    drive_start: f64,
}

impl ReferenceStateTable {
    pub fn new(lin: &LinearizedInternalDynamics, reference: &dyn ReferenceSignal, t0: f64, dt: f64) -> Self {
        let mu = lin.mu_unstable();
        let pt = lin.p_tilde.row(0).transpose();
        let drive = |t: f64| pt.dot(&reference.sample(t).y);
        let t_end = reference.end().max(t0);
        let n = ((t_end - t0) / dt).ceil().max(1.0) as usize;
        let dt = (t_end - t0) / n as f64;
        let dt = if dt > 0.0 { dt } else { 1.0 };
        let mut values = vec![0.0; n + 1];
        values[n] = -drive(t_end) / mu;
        // RK4 in reversed time s = t_end - t, where the model decays.
        let rate = |t: f64, e: f64| -(mu * e + drive(t));
        for i in (0..n).rev() {
            let t = t0 + (i + 1) as f64 * dt;
            let e = values[i + 1];
            let k1 = rate(t, e);
            let k2 = rate(t - 0.5 * dt, e + 0.5 * dt * k1);
            let k3 = rate(t - 0.5 * dt, e + 0.5 * dt * k2);
            let k4 = rate(t - dt, e + dt * k3);
            values[i] = e + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let rates = values.iter().enumerate().map(|(i, e)| mu * e + drive(t0 + i as f64 * dt)).collect();
        Self { t0, dt, values, rates, mu, drive_start: drive(t0) }
    }

    /// `(eta2_ref, d/dt eta2_ref)` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.values.len() - 1;
        if t <= self.t0 {
            // Constant drive before the table: exact exponential.
            let c = -self.drive_start / self.mu;
            let e = c + (self.values[0] - c) * (self.mu * (t - self.t0)).exp();
            return (e, self.mu * e + self.drive_start);
        }
        let s = (t - self.t0) / self.dt;
        if s >= n as f64 {
            return (self.values[n], 0.0);
        }
        let i = (s.floor() as usize).min(n - 1);
        let x = s - i as f64;
        let (x2, x3) = (x * x, x * x * x);
        let (a, b) = (self.values[i], self.values[i + 1]);
        let (da, db) = (self.rates[i] * self.dt, self.rates[i + 1] * self.dt);
        let e = (2.0 * x3 - 3.0 * x2 + 1.0) * a + (x3 - 2.0 * x2 + x) * da + (-2.0 * x3 + 3.0 * x2) * b + (x3 - x2) * db;
        let d = ((6.0 * x2 - 6.0 * x) * a + (3.0 * x2 - 4.0 * x + 1.0) * da + (-6.0 * x2 + 6.0 * x) * b + (3.0 * x2 - 2.0 * x) * db)
            / self.dt;
        (e, d)
    }
}
