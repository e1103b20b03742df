//! Browser bindings for the tracking demo in `www/`.
//!
//! Each export returns a flat `Float64Array`; the row width is given next to
//! it. The plain Rust functions underneath are what the tests exercise.

use mbstrack::funnel::FunnelFunction;
use mbstrack::internal::linearize;
use mbstrack::sim::{Mode, Prepared, Scenario};
use mbstrack::RobotParams;
use wasm_bindgen::prelude::*;

/// Columns of [`closed_loop`]: `t, e1, e2, |ebar|, boundary, u1, u2`.
pub const CLOSED_LOOP_WIDTH: usize = 7;

/// Rows `(t, 1/phi(t))` on `samples` points of `[0, t_end]`.
pub fn boundary_curve(p: f64, rate: f64, r: f64, t_end: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(p > 0.0 && rate > 0.0 && r > 0.0 && t_end > 0.0) || samples < 2 {
        return Err("funnel parameters and horizon must be positive, samples >= 2".into());
    }
    let f = FunnelFunction::new(p, rate, r);
    Ok((0..samples)
        .flat_map(|i| {
            let t = t_end * i as f64 / (samples - 1) as f64;
            [t, 1.0 / f.eval(t).0]
        })
        .collect())
}

/// Rows `(m3, mu_stable, mu_unstable, P~2/P~1)` of the linearized internal
/// dynamics as the third body's mass varies.
pub fn spectrum_sweep(m3_from: f64, m3_to: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(m3_from > 0.0 && m3_to > m3_from) || samples < 2 {
        return Err("need 0 < m3_from < m3_to and samples >= 2".into());
    }
    let base = RobotParams::reference();
    // The path end points are fixed by the base geometry, not by m3.
    let reference = mbstrack::funnel::Reference::robot_default(&base).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(4 * samples);
    for i in 0..samples {
        let m3 = m3_from + (m3_to - m3_from) * i as f64 / (samples - 1) as f64;
        let p = RobotParams { m3, ..base }.with_homogeneous_body3();
        let lin = linearize(&p, reference.initial_output(), reference.final_output()).map_err(|e| e.to_string())?;
        out.extend([m3, lin.mu[0], lin.mu[1], lin.p_tilde[(0, 1)] / lin.p_tilde[(0, 0)]]);
    }
    Ok(out)
}

/// One closed-loop run, every `stride`-th logged sample, [`CLOSED_LOOP_WIDTH`]
/// columns per row.
pub fn closed_loop_rows(mode: &str, plant: &str, stride: usize) -> Result<Vec<f64>, String> {
    let mode: Mode = mode.parse().map_err(|e: mbstrack::Error| e.to_string())?;
    if RobotParams::preset(plant).is_none() {
        return Err(format!("unknown plant preset '{plant}'"));
    }
    let scenario = Scenario { params: plant.to_string(), ..Scenario::default() };
    let run = Prepared::new(&scenario, mode.uses_feedforward())
        .and_then(|p| p.simulate(mode))
        .map_err(|e| e.to_string())?;
    Ok(run
        .series
        .records
        .iter()
        .step_by(stride.max(1))
        .flat_map(|r| {
            [
                r.t,
                r.y[0] - r.y_ref[0],
                r.y[1] - r.y_ref[1],
                r.ebar_norm,
                r.funnel_boundary,
                r.u[0],
                r.u[1],
            ]
        })
        .collect())
}

#[wasm_bindgen]
pub fn funnel_boundary(p: f64, rate: f64, r: f64, t_end: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    boundary_curve(p, rate, r, t_end, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn internal_spectrum(m3_from: f64, m3_to: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    spectrum_sweep(m3_from, m3_to, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn closed_loop(mode: &str, plant: &str, stride: usize) -> Result<Vec<f64>, JsError> {
    closed_loop_rows(mode, plant, stride).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn closed_loop_width() -> usize {
    CLOSED_LOOP_WIDTH
}
