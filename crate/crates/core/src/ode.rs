//! Adaptive Dormand-Prince 5(4) integration for small fixed-size systems.
//!
//! The stepper exposes the last accepted step so callers can detect events on
//! `(t_prev, y_prev) -> (t, y)` and locate them with [`Dopri5::locate`], which
//! bisects on the step length using single RK steps from `y_prev`.

use crate::error::{Error, Result};

// Butcher tableau (autonomous systems only, so the nodes c_i are not needed).
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
// Difference between 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size control settings.
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-11,
            h_max: f64::INFINITY,
            h_min: 1e-14,
        }
    }
}

pub struct Dopri5<F, const D: usize> {
    rhs: F,
    opts: OdeOptions,
    t: f64,
    y: [f64; D],
    t_prev: f64,
    y_prev: [f64; D],
    h: f64,
}

#[inline]
fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

impl<F, const D: usize> Dopri5<F, D>
where
    F: Fn(&[f64; D]) -> [f64; D],
{
    pub fn new(rhs: F, t0: f64, y0: [f64; D], opts: OdeOptions) -> Self {
        let h = opts.h_max.min(1e-3);
        Self {
            rhs,
            opts,
            t: t0,
            y: y0,
            t_prev: t0,
            y_prev: y0,
            h,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; D] {
        &self.y
    }

    pub fn t_prev(&self) -> f64 {
        self.t_prev
    }

    pub fn y_prev(&self) -> &[f64; D] {
        &self.y_prev
    }

    /// One Dormand-Prince step of length `h` from `y`; returns the 5th order
    /// solution and the weighted error norm.
    fn trial(&self, y: &[f64; D], h: f64) -> ([f64; D], f64) {
        let f = &self.rhs;
        let k1 = f(y);
        let k2 = f(&axpy(y, h, &[(A21, &k1)]));
        let k3 = f(&axpy(y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(
            y,
            h,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        ));
        let k6 = f(&axpy(
            y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ));
        let y_new = axpy(
            y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(&y_new);
        let mut err = 0.0f64;
        for i in 0..D {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        (y_new, err)
    }

    /// Single unchecked step of length `h` from the previous accepted state.
    pub fn step_from_prev(&self, h: f64) -> [f64; D] {
        self.trial(&self.y_prev, h).0
    }

    /// Advances by one accepted step without passing `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<()> {
        loop {
            let remaining = t_end - self.t;
            if remaining <= 0.0 {
                return Ok(());
            }
            let mut h = self.h.min(self.opts.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let (y_new, err) = self.trial(&self.y, h);
            if err <= 1.0 {
                self.t_prev = self.t;
                self.y_prev = self.y;
                self.t = if last { t_end } else { self.t + h };
                self.y = y_new;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // Keep the proposal from a shortened final step from shrinking h.
                self.h = if last {
                    self.h.max(h * factor)
                } else {
                    h * factor
                };
                return Ok(());
            }
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.25)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            self.h = h * factor;
            if self.h < self.opts.h_min {
                return Err(Error::StepUnderflow {
                    t: self.t,
                    h: self.h,
                });
            }
        }
    }

    /// Integrates to `t_end`, calling `observe(t, y)` after every accepted step.
    pub fn run<O: FnMut(f64, &[f64; D])>(&mut self, t_end: f64, mut observe: O) -> Result<()> {
        while self.t < t_end {
            self.step(t_end)?;
            observe(self.t, &self.y);
        }
        Ok(())
    }

    /// Locates `g(y) = 0` inside the last accepted step by bisection on the
    /// step length, given that `g` changes sign over the step. Returns the
    /// event time and state.
    pub fn locate<G: Fn(&[f64; D]) -> f64>(&self, g: G, time_tol: f64) -> (f64, [f64; D]) {
        let g0 = g(&self.y_prev);
        let mut lo = 0.0;
        let mut hi = self.t - self.t_prev;
        let mut y_hi = self.y;
        while hi - lo > time_tol {
            let mid = 0.5 * (lo + hi);
            let y_mid = self.step_from_prev(mid);
            if (g(&y_mid) > 0.0) == (g0 > 0.0) {
                lo = mid;
            } else {
                hi = mid;
                y_hi = y_mid;
            }
        }
        let h = 0.5 * (lo + hi);
        let y = if h > 0.0 {
            self.step_from_prev(h)
        } else {
            y_hi
        };
        (self.t_prev + h, y)
    }
}
