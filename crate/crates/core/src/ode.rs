//! Adaptive Dormand–Prince 5(4) integration for autonomous systems, with an
//! optional box guard on the leading state coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("trajectory left the window at t = {t}")]
    WindowEscape { t: f64, point: Vec<f64> },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Tolerances and limits for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { atol: 1e-9, rtol: 1e-9, h_init: 1e-2, h_min: 1e-12, h_max: 0.5, max_steps: 200_000 }
    }
}

impl StepControl {
    pub fn with_tolerance(tol: f64) -> Self {
        StepControl { atol: tol, rtol: tol, ..Default::default() }
    }
}

/// Axis-aligned analysis box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Window {
        assert_eq!(lo.len(), hi.len());
        Window { lo, hi }
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Window {
        Window { lo: vec![lo; n], hi: vec![hi; n] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Same center, every side length scaled by `1 + fraction`.
    pub fn inflated(&self, fraction: f64) -> Window {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let pad = 0.5 * fraction * (h - l);
                (l - pad, h + pad)
            })
            .unzip();
        Window { lo, hi }
    }

    /// Tensor grid with `per_axis` points on each axis, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let per_axis = per_axis.max(1);
        let axis = |i: usize, k: usize| {
            if per_axis == 1 {
                0.5 * (self.lo[i] + self.hi[i])
            } else {
                self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / (per_axis - 1) as f64
            }
        };
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; n];
                for (i, slot) in p.iter_mut().enumerate().rev() {
                    *slot = axis(i, idx % per_axis);
                    idx /= per_axis;
                }
                p
            })
            .collect()
    }
}

/// Fraction by which windows are inflated before a trajectory counts as escaped.
pub const ESCAPE_INFLATION: f64 = 0.2;

// Dormand–Prince coefficients. Right-hand sides are autonomous, so the
// stage nodes are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Reusable integrator state. `advance` may be called repeatedly; the last
/// accepted step size is carried over as the next initial guess.
pub struct Dopri5 {
    ctrl: StepControl,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    next: Vec<f64>,
    h: f64,
    pub steps: usize,
}

impl Dopri5 {
    pub fn new(dim: usize, ctrl: StepControl) -> Dopri5 {
        Dopri5 {
            ctrl,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            next: vec![0.0; dim],
            h: ctrl.h_init,
            steps: 0,
        }
    }

    /// Advances `y` by time `t` (negative for backward flow). When `guard` is
    /// given, the first `guard.dim()` coordinates must stay inside it.
    pub fn advance<F>(&mut self, mut rhs: F, y: &mut [f64], t: f64, guard: Option<&Window>) -> Result<(), FlowError>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), EvalError>,
    {
        if t == 0.0 {
            return Ok(());
        }
        let dir = t.signum();
        let total = t.abs();
        let mut f = |y: &[f64], out: &mut [f64]| -> Result<(), EvalError> {
            rhs(y, out)?;
            if dir < 0.0 {
                out.iter_mut().for_each(|v| *v = -*v);
            }
            Ok(())
        };
        let n = y.len();
        let mut s = 0.0;
        let mut h = self.h.clamp(self.ctrl.h_min, self.ctrl.h_max);
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        f(y, k1)?;
        let mut local_steps = 0usize;
        while s < total {
            if local_steps >= self.ctrl.max_steps {
                return Err(FlowError::TooManySteps { t: dir * s });
            }
            local_steps += 1;
            let last = s + h >= total;
            if last {
                h = total - s;
            }
            let tmp = &mut self.tmp;
            for i in 0..n {
                tmp[i] = y[i] + h * A21 * k1[i];
            }
            f(tmp, k2)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(tmp, k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(tmp, k4)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(tmp, k5)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(tmp, k6)?;
            let next = &mut self.next;
            for i in 0..n {
                next[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            f(next, k7)?;
            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.ctrl.atol + self.ctrl.rtol * y[i].abs().max(next[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                h *= 0.2;
                if h < self.ctrl.h_min {
                    return Err(FlowError::StepUnderflow { t: dir * s });
                }
                continue;
            }
            if err <= 1.0 {
                s = if last { total } else { s + h };
                y.copy_from_slice(next);
                std::mem::swap(k1, k7);
                self.steps += 1;
                if let Some(w) = guard {
                    if !w.contains(&y[..w.dim()]) {
                        return Err(FlowError::WindowEscape { t: dir * s, point: y[..w.dim()].to_vec() });
                    }
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = (h * factor).min(self.ctrl.h_max);
                    self.h = h;
                } else {
                    self.h = self.h.max(h * factor.min(1.0)).min(self.ctrl.h_max);
                }
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < self.ctrl.h_min {
                    return Err(FlowError::StepUnderflow { t: dir * s });
                }
            }
        }
        Ok(())
    }
}
