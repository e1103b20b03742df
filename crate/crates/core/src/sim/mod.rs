//! Closed-loop simulation of the manipulator under the three controller
//! configurations, with CSV and metric output.
//!
//! The plant is integrated as an index-1 system: accelerations and
//! multipliers come from the saddle-point system with Baumgarte terms on the
//! loop-closure rows.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::funnel::{FunnelController, Reference, ReferenceSignal, ReferenceStateTable};
use crate::internal::robot_linearization;
use crate::model::MbsModel;
use crate::numerics::solve_linear;
use crate::robot::{end_effector, initial_state, operating_set, RobotModel, RobotParams};
use crate::servo::{solve_robot_bvp, CollocationSolution, Feedforward};

pub mod dopri;
pub mod report;
pub mod scenario;

pub use dopri::{integrate, StepControl};
pub use report::{compare, ComparisonReport};
pub use scenario::{Mode, Scenario};

/// CSV number format: 17 significant digits.
pub fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Accelerations and multipliers for state `(q, v)` under input `u`.
///
/// Solves `[M -G^T; G 0] [v'; lambda] = [f + B u; -G' v - 2 a G v - b^2 g]`.
pub fn index1_accelerations(
    model: &dyn MbsModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
    baumgarte: (f64, f64),
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = model.dims();
    let (n, ell) = (d.n, d.ell);
    let gq = model.constraint_jacobian(q);
    let mut k = DMatrix::zeros(n + ell, n + ell);
    k.view_mut((0, 0), (n, n)).copy_from(&model.mass_matrix(q));
    k.view_mut((0, n), (n, ell)).copy_from(&(-gq.transpose()));
    k.view_mut((n, 0), (ell, n)).copy_from(&gq);
    let (a, b) = baumgarte;
    let gv = &gq * v;
    let rhs_c = -(model.constraint_jacobian_dot(q, v) * v) - gv * (2.0 * a) - model.constraints(q) * (b * b);
    let mut rhs = DVector::zeros(n + ell);
    rhs.rows_mut(0, n).copy_from(&(model.forces(q, v) + model.input_map(q) * u));
    rhs.rows_mut(n, ell).copy_from(&rhs_c);
    let x = solve_linear(&k, &rhs).map_err(|_| Error::SaddleSingular)?;
    Ok((x.rows(0, n).into_owned(), x.rows(n, ell).into_owned()))
}

/// One logged sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub q: [f64; 5],
    pub v: [f64; 5],
    pub y: [f64; 2],
    pub y_ref: [f64; 2],
    pub u_ff: [f64; 2],
    pub u_fb: [f64; 2],
    pub u: [f64; 2],
    pub lambda: [f64; 2],
    /// Zero when feedback is off.
    pub ebar_norm: f64,
    /// `1 / phi(t)` of the outer funnel.
    pub funnel_boundary: f64,
    pub g_norm: f64,
    /// Approximate tool position from the outputs.
    pub r_app: [f64; 2],
    /// Smallest `1 - phi |e|` over all stages; `None` without feedback.
    pub margin: Option<f64>,
}

pub const CSV_HEADER: &str = "t,q1,q2,q3,q4,q5,v1,v2,v3,v4,v5,y1,y2,yref1,yref2,uff1,uff2,ufb1,ufb2,u1,u2,lam1,lam2,ebar_norm,funnel_boundary,g_norm,rapp1,rapp2";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub records: Vec<Record>,
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 600);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let mut vals = vec![r.t];
            vals.extend(r.q);
            vals.extend(r.v);
            vals.extend(r.y);
            vals.extend(r.y_ref);
            vals.extend(r.u_ff);
            vals.extend(r.u_fb);
            vals.extend(r.u);
            vals.extend(r.lambda);
            vals.extend([r.ebar_norm, r.funnel_boundary, r.g_norm]);
            vals.extend(r.r_app);
            let line: Vec<String> = vals.into_iter().map(fmt_value).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `int |y_i - y_ref,i| dt` per output channel.
    pub cumulative_output_error: [f64; 2],
    /// Same for the approximate tool position.
    pub cumulative_tool_error: [f64; 2],
    /// `int |y - y_ref|_2 dt`.
    pub cumulative_output_error_norm: f64,
    /// `int |r_app - r_ref|_2 dt`.
    pub cumulative_tool_error_norm: f64,
    pub final_output_error: [f64; 2],
    /// Euclidean tool-position error at the last sample.
    pub final_tool_error: f64,
    pub max_constraint_violation: f64,
    pub min_funnel_margin: Option<f64>,
    /// Largest Euclidean norm of the applied input.
    pub peak_input: f64,
    pub steps: usize,
    /// Logged samples whose coordinates left the operating set. Counted, not
    /// enforced: the loop may graze the boundary transiently.
    pub outside_operating_set: usize,
}

impl Metrics {
    pub fn from_series(series: &TimeSeries, reference: &Reference) -> Self {
        let rec = &series.records;
        let tool_ref = |t: f64| reference.end_effector(t).0;
        let mut cum_y = [0.0; 2];
        let mut cum_r = [0.0; 2];
        let (mut cum_yn, mut cum_rn) = (0.0, 0.0);
        let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
        for w in rec.windows(2) {
            let dt = w[1].t - w[0].t;
            let (ra, rb) = (tool_ref(w[0].t), tool_ref(w[1].t));
            cum_yn += 0.5 * dt * (dist(w[0].y, w[0].y_ref) + dist(w[1].y, w[1].y_ref));
            cum_rn += 0.5 * dt * (dist(w[0].r_app, ra) + dist(w[1].r_app, rb));
            for i in 0..2 {
                cum_y[i] += 0.5 * dt * ((w[0].y[i] - w[0].y_ref[i]).abs() + (w[1].y[i] - w[1].y_ref[i]).abs());
                cum_r[i] += 0.5 * dt * ((w[0].r_app[i] - ra[i]).abs() + (w[1].r_app[i] - rb[i]).abs());
            }
        }
        let last = rec.last().expect("series has at least the initial sample");
        let rf = tool_ref(last.t);
        Self {
            cumulative_output_error: cum_y,
            cumulative_tool_error: cum_r,
            cumulative_output_error_norm: cum_yn,
            cumulative_tool_error_norm: cum_rn,
            final_output_error: [(last.y[0] - last.y_ref[0]).abs(), (last.y[1] - last.y_ref[1]).abs()],
            final_tool_error: ((last.r_app[0] - rf[0]).powi(2) + (last.r_app[1] - rf[1]).powi(2)).sqrt(),
            max_constraint_violation: rec.iter().map(|r| r.g_norm).fold(0.0, f64::max),
            min_funnel_margin: rec.iter().filter_map(|r| r.margin).reduce(f64::min),
            peak_input: rec.iter().map(|r| r.u[0].hypot(r.u[1])).fold(0.0, f64::max),
            steps: rec.len().saturating_sub(1),
            outside_operating_set: {
                let set = operating_set();
                rec.iter().filter(|r| !set.contains(&DVector::from_row_slice(&r.q))).count()
            },
        }
    }

    /// `key: value` lines, keys prefixed with `prefix`.
    pub fn lines(&self, prefix: &str) -> Vec<String> {
        let mut out = vec![
            format!("{prefix}cumulative_error_y1: {}", fmt_value(self.cumulative_output_error[0])),
            format!("{prefix}cumulative_error_y2: {}", fmt_value(self.cumulative_output_error[1])),
            format!("{prefix}cumulative_error_x: {}", fmt_value(self.cumulative_tool_error[0])),
            format!("{prefix}cumulative_error_z: {}", fmt_value(self.cumulative_tool_error[1])),
            format!("{prefix}cumulative_error_y_norm: {}", fmt_value(self.cumulative_output_error_norm)),
            format!("{prefix}cumulative_error_tool_norm: {}", fmt_value(self.cumulative_tool_error_norm)),
            format!("{prefix}final_error_y1: {}", fmt_value(self.final_output_error[0])),
            format!("{prefix}final_error_y2: {}", fmt_value(self.final_output_error[1])),
            format!("{prefix}final_tool_error: {}", fmt_value(self.final_tool_error)),
            format!("{prefix}max_constraint_violation: {}", fmt_value(self.max_constraint_violation)),
        ];
        out.push(match self.min_funnel_margin {
            Some(m) => format!("{prefix}min_funnel_margin: {}", fmt_value(m)),
            None => format!("{prefix}min_funnel_margin: none"),
        });
        out.push(format!("{prefix}peak_input: {}", fmt_value(self.peak_input)));
        out.push(format!("{prefix}steps: {}", self.steps));
        out.push(format!("{prefix}outside_operating_set: {}", self.outside_operating_set));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Run {
    pub mode: Mode,
    pub series: TimeSeries,
    pub metrics: Metrics,
}

/// Everything a run needs that does not depend on the controller mode.
///
/// The controller and the inversion are designed on the reference
/// parameters; the plant uses the scenario's preset.
pub struct Prepared {
    pub scenario: Scenario,
    pub plant: RobotModel,
    pub controller: FunnelController,
    pub reference: Reference,
    pub reference_state: ReferenceStateTable,
    pub inversion: Option<CollocationSolution>,
}

impl Prepared {
    /// Designs the controller; solves the inversion when `with_inversion`.
    pub fn new(scenario: &Scenario, with_inversion: bool) -> Result<Self> {
        let design_params = RobotParams::reference();
        let reference = Reference::robot_default(&design_params)?;
        let (k1, k2) = scenario.gains();
        let lin = robot_linearization(&design_params)?.with_gains(k1, k2, 1.0);
        let reference_state = ReferenceStateTable::new(&lin, &reference, 0.0, 1e-4);
        let controller = FunnelController::new(lin, scenario.funnel, design_params, reference.clone());
        let inversion = if with_inversion {
            Some(solve_robot_bvp(&RobotModel::new(design_params), &reference, &scenario.bvp)?)
        } else {
            None
        };
        Ok(Self {
            scenario: scenario.clone(),
            plant: RobotModel::new(scenario.plant_params()),
            controller,
            reference,
            reference_state,
            inversion,
        })
    }

    pub fn feedforward(&self) -> Option<Feedforward> {
        self.inversion.as_ref().map(|s| Feedforward::new(s, self.reference.start()))
    }

    /// Inputs and controller diagnostics at `(t, q, v)`.
    fn inputs(
        &self,
        mode: Mode,
        ff: Option<&Feedforward>,
        t: f64,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, Option<crate::funnel::Diagnostics>)> {
        let u_ff = match (mode.uses_feedforward(), ff) {
            (true, Some(f)) => f.eval(t),
            (true, None) => panic!("feedforward mode needs a prepared inversion"),
            _ => DVector::zeros(2),
        };
        if mode.uses_feedback() {
            let (eta, _) = self.reference_state.eval(t);
            let (u_fb, diag) = self.controller.control(t, q, v, eta)?;
            Ok((u_ff, u_fb, Some(diag)))
        } else {
            Ok((u_ff, DVector::zeros(2), None))
        }
    }

    /// Integrates the closed loop over `[0, t_end]` from the rest pose.
    pub fn simulate(&self, mode: Mode) -> Result<Run> {
        let ff = if mode.uses_feedforward() {
            Some(self.feedforward().ok_or_else(|| Error::Config("inversion not prepared".into()))?)
        } else {
            None
        };
        let ff = ff.as_ref();
        let plant = &self.plant;
        let bg = self.scenario.baumgarte;
        let x0: Vec<f64> = initial_state(&plant.params)?.iter().copied().chain(std::iter::repeat(0.0).take(5)).collect();
        let split = |x: &[f64]| (DVector::from_row_slice(&x[..5]), DVector::from_row_slice(&x[5..10]));
        let rhs = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
            let (q, v) = split(x);
            let (u_ff, u_fb, _) = self.inputs(mode, ff, t, &q, &v)?;
            let (acc, _) = index1_accelerations(plant, &q, &v, &(u_ff + u_fb), bg)?;
            let mut out: Vec<f64> = Vec::with_capacity(10);
            out.extend(v.iter());
            out.extend(acc.iter());
            if out.iter().any(|z| !z.is_finite()) {
                return Err(Error::NonFiniteEvaluation);
            }
            Ok(out)
        };
        let outer = self.scenario.funnel.stages[2];
        let mut series = TimeSeries::default();
        let record = |t: f64, x: &[f64]| -> Result<()> {
            let (q, v) = split(x);
            let (u_ff, u_fb, diag) = self.inputs(mode, ff, t, &q, &v)?;
            let u = &u_ff + &u_fb;
            let (_, lam) = index1_accelerations(plant, &q, &v, &u, bg)?;
            let y = plant.output(&q);
            let yr = self.reference.sample(t).y;
            let r_app = end_effector(&[y[0], y[1]], &plant.params);
            let arr5 = |d: &DVector<f64>| [d[0], d[1], d[2], d[3], d[4]];
            series.records.push(Record {
                t,
                q: arr5(&q),
                v: arr5(&v),
                y: [y[0], y[1]],
                y_ref: [yr[0], yr[1]],
                u_ff: [u_ff[0], u_ff[1]],
                u_fb: [u_fb[0], u_fb[1]],
                u: [u[0], u[1]],
                lambda: [lam[0], lam[1]],
                ebar_norm: diag.map_or(0.0, |d| d.ebar_norm),
                funnel_boundary: 1.0 / outer.eval(t).0,
                g_norm: plant.constraints(&q).amax(),
                r_app,
                margin: diag.map(|d| d.min_margin()),
            });
            Ok(())
        };
        integrate(rhs, 0.0, self.scenario.t_end, &x0, &self.scenario.step, record)?;
        let metrics = Metrics::from_series(&series, &self.reference);
        Ok(Run { mode, series, metrics })
    }
}

/// Prepares and runs one mode.
pub fn integrate_closed_loop(scenario: &Scenario, mode: Mode) -> Result<Run> {
    Prepared::new(scenario, mode.uses_feedforward())?.simulate(mode)
}

/// Forward simulation of `model` driven by the unclipped inversion input,
/// started from the solution's state at the window start.
///
/// Returns the largest `|h(q) - y_ref|` over the reference's motion interval.
pub fn inversion_tracking_error(
    model: &dyn MbsModel,
    reference: &dyn ReferenceSignal,
    sol: &CollocationSolution,
    step: &StepControl,
) -> Result<f64> {
    let ff = Feedforward::unclipped(sol);
    let n = model.dims().n;
    let x0: Vec<f64> = sol.q(0).iter().chain(sol.v(0).iter()).copied().collect();
    let split = |x: &[f64]| (DVector::from_row_slice(&x[..n]), DVector::from_row_slice(&x[n..]));
    let rhs = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let (q, v) = split(x);
        let (acc, _) = index1_accelerations(model, &q, &v, &ff.eval(t), (20.0, 20.0))?;
        Ok(v.iter().chain(acc.iter()).copied().collect())
    };
    let (t0, tf) = (reference.start(), reference.end());
    let mut worst: f64 = 0.0;
    integrate(rhs, sol.grid[0], tf, &x0, step, |t, x| {
        if t >= t0 {
            let (q, _) = split(x);
            worst = worst.max((model.output(&q) - reference.sample(t).y).amax());
        }
        Ok(())
    })?;
    Ok(worst)
}

/// Writes `<label>.csv` into `dir`.
pub fn write_series(dir: &Path, label: &str, series: &TimeSeries) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{label}.csv")), series.to_csv())
}
