//! The deterministic fast flow `x_j' = x_j (x_{j-1} - x_{j+1})` and the
//! geometry of its invariant loops `{z(x) = z}`.
//!
//! Loop quantities (period `T`, action `A`, averaged coefficient
//! `m = -A / T`) are computed by quadrature over `x1` between the turning
//! points `x_min < x_max`. Writing `x(1-x)^2 - 4z = (x - x_min)(x_max - x)(x_add - x)`
//! and substituting `x = x_min + (x_max - x_min) sin^2 phi` removes both
//! inverse-square-root endpoint singularities:
//!
//! ```text
//! T(z) =  4 ∫_0^{π/2} dphi / sqrt(x (x_add - x))
//! A(z) = -2 Δ^2 ∫_0^{π/2} sin^2 phi cos^2 phi sqrt((x_add - x) / x) dphi
//! ```
//!
//! with `Δ = x_max - x_min`. All root gaps are evaluated from half-angle
//! forms so that they keep full relative precision near both ends of
//! `(0, 1/27)`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::ode::{Dopri5, OdeOptions};
use crate::quadrature::{integrate_adaptive, Tolerance};
use crate::simplex::{next, prev, z_of, z_raw, SimplexPoint, Z_MAX};

/// `2 π sqrt(3)`, the period of the infinitesimal loops around the centre.
pub const CENTRE_PERIOD: f64 = 2.0 * PI * 1.732_050_807_568_877_2;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Local error tolerance of the flow integrator.
const FLOW_TOL: f64 = 1e-11;

const QUAD_TOL: Tolerance = Tolerance {
    rel: 1e-14,
    abs: 0.0,
    max_depth: 64,
};

/// A twice-differentiable function of the level `z`.
pub trait LevelFunction: Sync {
    fn value(&self, z: f64) -> f64;
    fn d1(&self, z: f64) -> f64;
    fn d2(&self, z: f64) -> f64;
}

/// Polynomial `c_0 + c_1 z + c_2 z^2 + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn identity() -> Self {
        Self(vec![0.0, 1.0])
    }
}

impl LevelFunction for Polynomial {
    fn value(&self, z: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    fn d1(&self, z: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * z + k as f64 * c)
    }

    fn d2(&self, z: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * z + (k * (k - 1)) as f64 * c)
    }
}

#[inline]
pub(crate) fn field_raw(x: &[f64; 3]) -> [f64; 3] {
    [
        x[0] * (x[2] - x[1]),
        x[1] * (x[0] - x[2]),
        x[2] * (x[1] - x[0]),
    ]
}

/// Velocity of the fast flow; component `j` is `x_j (x_{j-1} - x_{j+1})`.
pub fn vector_field(p: &SimplexPoint) -> [f64; 3] {
    field_raw(&p.coords())
}

/// Samples of a fast-flow solution together with its conserved level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub z0: f64,
    pub samples: Vec<(f64, SimplexPoint)>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &SimplexPoint {
        &self
            .samples
            .last()
            .expect("trajectory always has its initial sample")
            .1
    }

    /// Largest deviation of `z` from the initial level over all samples.
    pub fn max_z_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|(_, p)| (z_of(p) - self.z0).abs())
            .fold(0.0, f64::max)
    }
}

fn flow_options(dt_max: f64) -> OdeOptions {
    OdeOptions {
        rtol: FLOW_TOL,
        atol: FLOW_TOL,
        h_max: dt_max,
        ..OdeOptions::default()
    }
}

/// Integrates the fast flow from `p0` up to `t_final`, recording every
/// accepted step (steps never exceed `dt_max`).
pub fn integrate_flow(p0: &SimplexPoint, t_final: f64, dt_max: f64) -> Result<FlowTrajectory> {
    check_range("t_final", t_final, t_final >= 0.0, "[0, inf)")?;
    check_range("dt_max", dt_max, dt_max > 0.0, "(0, inf)")?;
    let mut samples = vec![(0.0, *p0)];
    let mut solver = Dopri5::new(field_raw, 0.0, p0.coords(), flow_options(dt_max));
    solver.run(t_final, |t, y| {
        samples.push((t, renormalized(y)));
    })?;
    Ok(FlowTrajectory {
        z0: z_of(p0),
        samples,
    })
}

/// Fast-flow state at each of the (ascending) `times`.
pub fn flow_at(p0: &SimplexPoint, times: &[f64]) -> Result<Vec<SimplexPoint>> {
    let mut out = Vec::with_capacity(times.len());
    let mut solver = Dopri5::new(field_raw, 0.0, p0.coords(), flow_options(f64::INFINITY));
    for &t in times {
        check_range("observation time", t, t >= solver.t(), "ascending, >= 0")?;
        while solver.t() < t {
            solver.step(t)?;
        }
        out.push(renormalized(solver.y()));
    }
    Ok(out)
}

fn renormalized(y: &[f64; 3]) -> SimplexPoint {
    let c = y.map(|v| v.max(0.0));
    let s: f64 = c.iter().sum();
    SimplexPoint::raw(c.map(|v| v / s))
}

/// The three real roots of `x (1 - x)^2 = 4 z` together with the gaps
/// between them, each computed without cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopRoots {
    pub z: f64,
    /// Angle `θ(27 z)` in `(0, π)`, with `cos θ = 54 z - 1`.
    pub theta: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub x_add: f64,
    /// `1 - x_max`.
    pub one_minus_x_max: f64,
    /// `x_max - x_min`.
    pub width: f64,
    /// `x_add - x_max`.
    pub top_gap: f64,
}

fn check_level(z: f64) -> Result<()> {
    check_range("z", z, z > 0.0 && z < Z_MAX, "(0, 1/27)")
}

/// Closed-form trigonometric roots of the loop cubic for `z` in `(0, 1/27)`.
pub fn loop_roots(z: f64) -> Result<LoopRoots> {
    check_level(z)?;
    let u = 27.0 * z;
    let (su, sv) = (u.sqrt(), (1.0 - u).sqrt());
    let theta = 2.0 * sv.atan2(su);
    // π - θ, computed directly to keep precision as z -> 0.
    let psi = 2.0 * su.atan2(sv);
    let (s6, c6) = (psi / 6.0).sin_cos();
    let x_min = 4.0 / 3.0 * s6 * s6;
    let one_minus_x_max = 2.0 / 3.0 * s6 * s6 + 2.0 / SQRT3 * s6 * c6;
    let width = 2.0 / SQRT3 * (theta / 3.0).sin();
    let top_gap = 2.0 / SQRT3 * (psi / 3.0).sin();
    Ok(LoopRoots {
        z,
        theta,
        x_min,
        x_max: 1.0 - one_minus_x_max,
        x_add: 2.0 / 3.0 * (1.0 + (theta / 3.0).cos()),
        one_minus_x_max,
        width,
        top_gap,
    })
}

/// `x2` on the loop at level `z` for a given `x1`: the lower branch while
/// `x1` increases, the upper branch while it decreases.
pub fn branch_x2(x1: f64, z: f64, increasing: bool) -> Result<f64> {
    check_level(z)?;
    check_range("x1", x1, x1 > 0.0 && x1 < 1.0, "(0, 1)")?;
    let mut disc = (1.0 - x1).powi(2) - 4.0 * z / x1;
    if disc < 0.0 {
        if disc >= -1e-14 {
            disc = 0.0;
        } else {
            return Err(Error::NegativeDiscriminant(disc));
        }
    }
    let r = disc.sqrt();
    Ok(if increasing {
        0.5 * (1.0 - x1 - r)
    } else {
        0.5 * (1.0 - x1 + r)
    })
}

/// Integrates `g(s, c)` with `s = sin^2 phi`, `c = cos^2 phi` over `[0, π/2]`,
/// splitting at `π/4` so that both `s` and `c` are formed from small angles
/// near their respective endpoints.
fn phi_integral<G: Fn(f64, f64) -> f64>(g: G) -> f64 {
    let lower = integrate_adaptive(
        |phi| {
            let s = phi.sin();
            let c = phi.cos();
            g(s * s, c * c)
        },
        0.0,
        PI / 4.0,
        QUAD_TOL,
    );
    let upper = integrate_adaptive(
        |phi| {
            let s = phi.cos();
            let c = phi.sin();
            g(s * s, c * c)
        },
        0.0,
        PI / 4.0,
        QUAD_TOL,
    );
    lower + upper
}

fn period_from_roots(r: &LoopRoots) -> f64 {
    4.0 * phi_integral(|s, c| {
        let x = r.x_min + r.width * s;
        let gap = r.top_gap + r.width * c;
        1.0 / (x * gap).sqrt()
    })
}

fn action_from_roots(r: &LoopRoots) -> f64 {
    -2.0 * r.width
        * r.width
        * phi_integral(|s, c| {
            let x = r.x_min + r.width * s;
            let gap = r.top_gap + r.width * c;
            s * c * (gap / x).sqrt()
        })
}

/// Period `T(z)` of the loop at level `z`.
pub fn period(z: f64) -> Result<f64> {
    Ok(period_from_roots(&loop_roots(z)?))
}

/// Signed action `A(z) = ∫ x2 dx1` over one loop; negative on `(0, 1/27)`.
pub fn action(z: f64) -> Result<f64> {
    Ok(action_from_roots(&loop_roots(z)?))
}

/// Averaged coefficient `m(z) = -A(z) / T(z)`, extended by continuity with
/// `m(0) = m(1/27) = 0`.
pub fn mean_m(z: f64) -> Result<f64> {
    check_range("z", z, (0.0..=Z_MAX).contains(&z), "[0, 1/27]")?;
    if z == 0.0 || z == Z_MAX {
        return Ok(0.0);
    }
    let r = loop_roots(z)?;
    Ok(-action_from_roots(&r) / period_from_roots(&r))
}

/// Everything known about the loop at one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopGeometry {
    pub z: f64,
    pub theta: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub x_add: f64,
    pub period: f64,
    pub action: f64,
    pub m: f64,
}

pub fn loop_geometry(z: f64) -> Result<LoopGeometry> {
    let r = loop_roots(z)?;
    let period = period_from_roots(&r);
    let action = action_from_roots(&r);
    Ok(LoopGeometry {
        z,
        theta: r.theta,
        x_min: r.x_min,
        x_max: r.x_max,
        x_add: r.x_add,
        period,
        action,
        m: -action / period,
    })
}

/// Point of the loop at level `z` where `x1` is maximal.
pub fn loop_start(z: f64) -> Result<SimplexPoint> {
    let r = loop_roots(z)?;
    let half = 0.5 * r.one_minus_x_max;
    Ok(SimplexPoint::raw([r.x_max, half, half]))
}

/// Time average of `f` over one period of the loop at level `z`, obtained by
/// integrating the flow together with the running integral of `f`.
pub fn time_average<F>(f: F, z: f64) -> Result<f64>
where
    F: Fn(&SimplexPoint) -> f64,
{
    let geo = loop_geometry(z)?;
    let start = loop_start(z)?.coords();
    let rhs = |y: &[f64; 4]| {
        let x = [y[0], y[1], y[2]];
        let v = field_raw(&x);
        [v[0], v[1], v[2], f(&SimplexPoint::raw(x))]
    };
    let mut solver = Dopri5::new(
        rhs,
        0.0,
        [start[0], start[1], start[2], 0.0],
        flow_options(f64::INFINITY),
    );
    solver.run(geo.period, |_, _| {})?;
    Ok(solver.y()[3] / geo.period)
}

/// Coefficients `(c1, c2)` with `L_slow (g ∘ z) = c1 g'(z) + c2 g''(z)`.
pub fn slow_generator_coefficients(p: &SimplexPoint, a: f64) -> (f64, f64) {
    let x = p.coords();
    let z = z_raw(&x);
    let mut drift = 0.0;
    let mut diff = 0.0;
    for i in 0..3 {
        let (xp, xn) = (x[prev(i)], x[next(i)]);
        drift += xp * xp * xn - z;
        diff += x[i] * xp * xp + x[i] * xn * xn - 2.0 * z;
    }
    (a * drift - 3.0 * z, 0.5 * z * diff)
}

/// The slow operator applied to `g ∘ z` at `p`.
pub fn slow_generator_apply<G: LevelFunction + ?Sized>(g: &G, p: &SimplexPoint, a: f64) -> f64 {
    let z = z_of(p);
    let (c1, c2) = slow_generator_coefficients(p, a);
    c1 * g.d1(z) + c2 * g.d2(z)
}

// ---------------------------------------------------------------------------
// Tabulated loop geometry
// ---------------------------------------------------------------------------

/// Number of nodes of the angle grid.
pub const THETA_NODES: usize = 2048;
/// Below this level the table switches to a grid uniform in `ln z`.
pub const LOG_SPLIT: f64 = 1e-4;
/// Smallest tabulated level; below it `T = c - 3 ln z` and `A` is frozen.
pub const LOG_FLOOR: f64 = 1e-30;
const LOG_NODES: usize = 1200;

/// `T`, `A` and `m` tabulated on a grid uniform in `θ(27 z)` (upper part) and
/// on a grid uniform in `ln z` (lower part), with four-point Lagrange
/// interpolation. Built once and shared read-only.
///
/// On the angle grid `A` and `m` are stored divided by `w = 1/27 - z`, which
/// keeps their relative accuracy as both vanish linearly at the centre.
#[derive(Clone, Debug)]
pub struct LoopTable {
    theta_step: f64,
    theta_rows: Vec<[f64; 3]>,
    log_lo: f64,
    log_step: f64,
    log_rows: Vec<[f64; 3]>,
}

fn z_of_theta(theta: f64) -> f64 {
    let c = (0.5 * theta).cos();
    c * c / 27.0
}

/// `θ(27 z)`, decreasing from `π` at `z = 0` to `0` at `z = 1/27`.
pub fn theta_of_z(z: f64) -> f64 {
    let u = (27.0 * z).clamp(0.0, 1.0);
    2.0 * (1.0 - u).sqrt().atan2(u.sqrt())
}

fn row(z: f64) -> [f64; 3] {
    let r = loop_roots(z).expect("table node inside (0, 1/27)");
    let t = period_from_roots(&r);
    let a = action_from_roots(&r);
    [t, a, -a / t]
}

/// Row `[T, A / w, m / w]` with `w = 1/27 - z = sin^2(θ/2) / 27`.
fn scaled_row(theta: f64) -> [f64; 3] {
    let s = (0.5 * theta).sin();
    let w = s * s / 27.0;
    let [t, a, m] = row(z_of_theta(theta));
    [t, a / w, m / w]
}

#[inline]
fn lagrange4(p: f64, v: [[f64; 3]; 4]) -> [f64; 3] {
    // Nodes at -1, 0, 1, 2; p in [0, 1].
    let w0 = -p * (p - 1.0) * (p - 2.0) / 6.0;
    let w1 = (p + 1.0) * (p - 1.0) * (p - 2.0) / 2.0;
    let w2 = -(p + 1.0) * p * (p - 2.0) / 2.0;
    let w3 = (p + 1.0) * p * (p - 1.0) / 6.0;
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = w0 * v[0][j] + w1 * v[1][j] + w2 * v[2][j] + w3 * v[3][j];
    }
    out
}

impl LoopTable {
    pub fn build() -> Self {
        let theta_step = PI / (THETA_NODES - 1) as f64;
        let theta_rows: Vec<[f64; 3]> = (0..THETA_NODES)
            .into_par_iter()
            .map(|k| {
                if k == 0 {
                    [CENTRE_PERIOD, -CENTRE_PERIOD, 1.0]
                } else if k == THETA_NODES - 1 {
                    [f64::INFINITY, -13.5, 0.0]
                } else {
                    scaled_row(k as f64 * theta_step)
                }
            })
            .collect();
        let log_lo = LOG_FLOOR.ln();
        let log_step = (LOG_SPLIT.ln() - log_lo) / (LOG_NODES - 1) as f64;
        let log_rows: Vec<[f64; 3]> = (0..LOG_NODES)
            .into_par_iter()
            .map(|j| row((log_lo + j as f64 * log_step).exp()))
            .collect();
        Self {
            theta_step,
            theta_rows,
            log_lo,
            log_step,
            log_rows,
        }
    }

    /// Process-wide table, built on first use.
    pub fn shared() -> Arc<LoopTable> {
        static TABLE: OnceLock<Arc<LoopTable>> = OnceLock::new();
        TABLE.get_or_init(|| Arc::new(LoopTable::build())).clone()
    }

    /// Interpolated `[T, A, m]` at level `z`; the boundary limits are returned
    /// at `z <= 0` and `z >= 1/27`.
    pub fn eval(&self, z: f64) -> [f64; 3] {
        if z <= 0.0 {
            return [f64::INFINITY, -0.5, 0.0];
        }
        if z >= Z_MAX {
            return [CENTRE_PERIOD, 0.0, 0.0];
        }
        if z >= LOG_SPLIT {
            let pos = theta_of_z(z) / self.theta_step;
            let k = (pos.floor() as usize).min(THETA_NODES - 3);
            let p = pos - k as f64;
            // Functions of z are even in θ, so reflect across θ = 0.
            let at = |i: isize| self.theta_rows[i.unsigned_abs()];
            let k = k as isize;
            let [t, a, m] = lagrange4(p, [at(k - 1), at(k), at(k + 1), at(k + 2)]);
            let w = Z_MAX - z;
            return [t, a * w, m * w];
        }
        let ell = z.ln();
        if ell < self.log_lo {
            let [t0, a0, _] = self.log_rows[0];
            let t = t0 - 3.0 * (ell - self.log_lo);
            return [t, a0, -a0 / t];
        }
        let pos = (ell - self.log_lo) / self.log_step;
        let k = (pos.floor() as usize).clamp(1, LOG_NODES - 3);
        let p = pos - k as f64;
        lagrange4(
            p,
            [
                self.log_rows[k - 1],
                self.log_rows[k],
                self.log_rows[k + 1],
                self.log_rows[k + 2],
            ],
        )
    }

    pub fn period(&self, z: f64) -> f64 {
        self.eval(z)[0]
    }

    pub fn action(&self, z: f64) -> f64 {
        self.eval(z)[1]
    }

    pub fn m(&self, z: f64) -> f64 {
        self.eval(z)[2]
    }
}

/// Levels of an `n`-point grid uniform in `θ(27 z)` over the open interval,
/// in increasing order of `z`.
pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n)
        .rev()
        .map(|k| z_of_theta(PI * (k as f64 + 0.5) / n as f64))
        .collect()
}
