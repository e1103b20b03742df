use std::sync::OnceLock;

use mbstrack::funnel::{Diagnostics, ReferenceSignal};
use mbstrack::internal::{robot_internal_rhs, robot_internal_state};
use mbstrack::sim::{Mode, Prepared, Record, Run, Scenario, StepControl};
use nalgebra::DVector;

fn prepared() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| Prepared::new(&Scenario::default(), true).unwrap())
}

fn runs() -> &'static Vec<Run> {
    static R: OnceLock<Vec<Run>> = OnceLock::new();
    R.get_or_init(|| Mode::ALL.iter().map(|&m| prepared().simulate(m).unwrap()).collect())
}

fn run(mode: Mode) -> &'static Run {
    runs().iter().find(|r| r.mode == mode).unwrap()
}

#[test]
fn constraints_stay_satisfied_in_every_mode() {
    for r in runs() {
        assert!(r.metrics.max_constraint_violation <= 1e-6, "{}: {}", r.mode.label(), r.metrics.max_constraint_violation);
        assert!(r.series.records.iter().all(|rec| rec.g_norm <= 1e-6));
    }
}

#[test]
fn feedback_modes_stay_inside_funnels() {
    for mode in [Mode::C1, Mode::C2] {
        let r = run(mode);
        assert!(r.metrics.min_funnel_margin.unwrap() > 0.0);
        assert!(r.series.records.iter().all(|rec| rec.ebar_norm < rec.funnel_boundary));
    }
    assert_eq!(run(Mode::C3).metrics.min_funnel_margin, None);
}

#[test]
fn feedforward_alone_misses_the_target() {
    assert!(run(Mode::C3).metrics.final_tool_error > run(Mode::C1).metrics.final_tool_error);
    assert!(run(Mode::C1).metrics.cumulative_output_error_norm < run(Mode::C2).metrics.cumulative_output_error_norm);
}

#[test]
fn input_splits_into_its_parts() {
    for r in runs() {
        for rec in r.series.records.iter().step_by(97) {
            for i in 0..2 {
                assert_eq!(rec.u[i], rec.u_ff[i] + rec.u_fb[i]);
            }
            if !r.mode.uses_feedforward() {
                assert_eq!(rec.u_ff, [0.0; 2]);
            }
            if !r.mode.uses_feedback() {
                assert_eq!(rec.u_fb, [0.0; 2]);
            }
        }
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let again = Prepared::new(&Scenario::default(), true).unwrap().simulate(Mode::C1).unwrap();
    assert_eq!(again.series.to_csv(), run(Mode::C1).series.to_csv());
}

#[test]
fn tighter_tolerances_barely_move_the_metrics() {
    let mut scn = Scenario::default();
    scn.step = StepControl { rel_tol: scn.step.rel_tol * 0.1, abs_tol: scn.step.abs_tol * 0.1, ..scn.step };
    let tight = Prepared::new(&scn, true).unwrap();
    for mode in [Mode::C1, Mode::C2] {
        let a = &run(mode).metrics;
        let b = tight.simulate(mode).unwrap().metrics;
        for i in 0..2 {
            let rel = (a.cumulative_output_error[i] - b.cumulative_output_error[i]).abs() / b.cumulative_output_error[i];
            assert!(rel < 0.01, "{} channel {i}: {rel}", mode.label());
        }
    }
}

fn diagnostics(p: &Prepared, rec: &Record) -> Diagnostics {
    let (eta, _) = p.reference_state.eval(rec.t);
    let q = DVector::from_row_slice(&rec.q);
    let v = DVector::from_row_slice(&rec.v);
    p.controller.control(rec.t, &q, &v, eta).unwrap().1
}

/// Rate of the innermost error from the exact internal dynamics.
fn exact_inner_rate(p: &Prepared, rec: &Record) -> f64 {
    let params = p.controller.params;
    let lin = &p.controller.lin;
    let (q, v) = (DVector::from_row_slice(&rec.q), DVector::from_row_slice(&rec.v));
    let yd = [rec.v[1], rec.v[3] + params.delta() * rec.v[4]];
    let eta = robot_internal_state(&q, &v, &params);
    let eta_d = robot_internal_rhs(eta, rec.y, yd, &params).unwrap();
    let shifted = DVector::from_row_slice(&eta_d) - &lin.p2 * DVector::from_row_slice(&yd);
    let ref_rate = lin.mu_unstable() * p.reference_state.eval(rec.t).0
        + lin.p_tilde.row(0).transpose().dot(&p.reference.sample(rec.t).y);
    lin.k1[(0, 0)] * ((lin.unstable_rows() * shifted)[(0, 0)] - ref_rate)
}

/// Difference quotients of the innermost error along a run on the design
/// plant, against the exact and the linear-model rate.
///
/// The linear-model rate is off by up to 40% of its peak while the arm moves
/// fast; once the motion has ended it agrees to a few percent.
#[test]
fn inner_error_rate_along_trajectory() {
    let mut scn = Scenario::default();
    scn.params = "reference".into();
    let p = Prepared::new(&scn, true).unwrap();
    let recs = p.simulate(Mode::C1).unwrap().series.records;
    let (mut exact_gap, mut late_gap, mut scale): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in (1..recs.len() - 1).step_by(7) {
        let fd = (diagnostics(&p, &recs[i + 1]).e10 - diagnostics(&p, &recs[i - 1]).e10) / (recs[i + 1].t - recs[i - 1].t);
        let model = diagnostics(&p, &recs[i]).e10_d1;
        scale = scale.max(fd.abs());
        exact_gap = exact_gap.max((fd - exact_inner_rate(&p, &recs[i])).abs());
        if recs[i].t >= 1.0 {
            late_gap = late_gap.max((fd - model).abs());
        }
    }
    assert!(exact_gap <= 1e-3 * scale, "exact {exact_gap} vs {scale}");
    assert!(late_gap <= 0.05 * scale, "linear model {late_gap} vs {scale}");
}
