use nalgebra::DVector;

use crate::error::Result;
use crate::robot::{output_from_end_effector, RobotParams};

/// Degree-9 rest-to-rest polynomial and its first two derivatives.
///
/// `r = 70 s^9 - 315 s^8 + 540 s^7 - 420 s^6 + 126 s^5` with `s = t / tf`,
/// held at 0 before `t = 0` and at 1 after `tf`.
pub fn timing_law(t: f64, tf: f64) -> (f64, f64, f64) {
    if t < 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t > tf {
        return (1.0, 0.0, 0.0);
    }
    let s = t / tf;
    let s4 = s.powi(4);
    let r = s4 * s * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + s * 70.0))));
    let dr = s4 * (630.0 + s * (-2520.0 + s * (3780.0 + s * (-2520.0 + s * 630.0))));
    let ddr = s.powi(3) * (2520.0 + s * (-12600.0 + s * (22680.0 + s * (-17640.0 + s * 5040.0))));
    (r, dr / tf, ddr / (tf * tf))
}

/// Reference output with its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RefSample {
    pub y: DVector<f64>,
    pub yd: DVector<f64>,
    pub ydd: DVector<f64>,
}

/// Output reference that is constant outside `[start, end]`.
pub trait ReferenceSignal: Send + Sync {
    fn sample(&self, t: f64) -> RefSample;
    fn start(&self) -> f64;
    fn end(&self) -> f64;
}

/// Straight end-effector path between two rest points, mapped to outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub params: RobotParams,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub tf: f64,
}

impl Reference {
    /// Path from `(1.6, -0.6)` to `(0.9, -0.9)` m in one second.
    pub fn robot_default(params: &RobotParams) -> Result<Self> {
        Self::new(*params, [1.6, -0.6], [0.9, -0.9], 1.0)
    }

    pub fn new(params: RobotParams, from: [f64; 2], to: [f64; 2], tf: f64) -> Result<Self> {
        output_from_end_effector(&from, &params)?;
        output_from_end_effector(&to, &params)?;
        Ok(Self { params, from, to, tf })
    }

    /// End-effector reference and its derivatives at `t`.
    pub fn end_effector(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let (r, dr, ddr) = timing_law(t, self.tf);
        let dx = [self.to[0] - self.from[0], self.to[1] - self.from[1]];
        (
            [self.from[0] + r * dx[0], self.from[1] + r * dx[1]],
            [dr * dx[0], dr * dx[1]],
            [ddr * dx[0], ddr * dx[1]],
        )
    }

    pub fn initial_output(&self) -> [f64; 2] {
        let s = self.sample(0.0);
        [s.y[0], s.y[1]]
    }

    pub fn final_output(&self) -> [f64; 2] {
        let s = self.sample(self.tf);
        [s.y[0], s.y[1]]
    }
}

impl ReferenceSignal for Reference {
    fn sample(&self, t: f64) -> RefSample {
        let (r, dr, ddr) = self.end_effector(t);
        let reach = self.params.reach();
        // Both ends are reachable and the path is a segment, so this holds.
        let y = output_from_end_effector(&r, &self.params).expect("path stays in reach");
        let (s2, c2) = y[1].sin_cos();
        let y2d = -dr[1] / (reach * c2);
        let y2dd = (-ddr[1] / reach + s2 * y2d * y2d) / c2;
        let y1d = dr[0] + reach * s2 * y2d;
        let y1dd = ddr[0] + reach * (c2 * y2d * y2d + s2 * y2dd);
        RefSample {
            y: DVector::from_row_slice(&y),
            yd: DVector::from_row_slice(&[y1d, y2d]),
            ydd: DVector::from_row_slice(&[y1dd, y2dd]),
        }
    }

    fn start(&self) -> f64 {
        0.0
    }

    fn end(&self) -> f64 {
        self.tf
    }
}

/// Constant reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantReference(pub DVector<f64>);

impl ReferenceSignal for ConstantReference {
    fn sample(&self, _t: f64) -> RefSample {
        let z = DVector::zeros(self.0.len());
        RefSample { y: self.0.clone(), yd: z.clone(), ydd: z }
    }

    fn start(&self) -> f64 {
        0.0
    }

    fn end(&self) -> f64 {
        0.0
    }
}
