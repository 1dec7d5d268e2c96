//! The averaged diffusion `dZ = 3(a m(Z) - Z) dt + sqrt(6 Z m(Z)) dW` on
//! `[0, 1/27]`.
//!
//! Scale and speed densities are `p'(z) = -1 / (z^a A(z))` and
//! `s'(z) = z^{a-1} T(z) / 3`, so that the generator factorizes as
//! `(d/ds)(d/dp)`. The speed density is also the (unnormalized) stationary
//! density. Integrals over levels use `u = ln z` below `1/54` and
//! `u = ln(1/27 - z)` above it, which absorbs the endpoint behaviour of both
//! `T ~ -3 ln z` and `A ~ -2π sqrt(3) (1/27 - z)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::fast::{mean_m, LevelFunction, LoopTable, LOG_FLOOR};
use crate::quadrature::{gl20, integrate_adaptive, Tolerance};
use crate::rng::stream_rng;
use crate::simplex::Z_MAX;

/// Reference level where scale and speed are anchored to 0.
pub const Z_REF: f64 = 1.0 / 54.0;
/// Default Euler-Maruyama step.
pub const DEFAULT_DT: f64 = 1e-4;
/// Lower clamp used when 0 is an entrance boundary.
pub const Z_FLOOR: f64 = 1e-14;

/// Drift and diffusion backed by the shared loop table.
#[derive(Clone, Debug)]
pub struct SdeCoefficients {
    a: f64,
    table: Arc<LoopTable>,
}

impl SdeCoefficients {
    pub fn new(a: f64) -> Result<Self> {
        check_range("a", a, a >= 0.0, "[0, inf)")?;
        Ok(Self {
            a,
            table: LoopTable::shared(),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn table(&self) -> &LoopTable {
        &self.table
    }

    pub fn m(&self, z: f64) -> f64 {
        self.table.m(z)
    }

    pub fn drift(&self, z: f64) -> f64 {
        3.0 * (self.a * self.m(z) - z)
    }

    pub fn diffusion(&self, z: f64) -> f64 {
        (6.0 * z * self.m(z)).max(0.0).sqrt()
    }

    /// `(b(z), sigma(z))` from a single table lookup.
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64) {
        let m = self.m(z);
        (3.0 * (self.a * m - z), (6.0 * z * m).max(0.0).sqrt())
    }
}

/// `b(z) = 3(a m(z) - z)` with `m` from direct quadrature.
pub fn drift(z: f64, a: f64) -> Result<f64> {
    check_range("a", a, a >= 0.0, "[0, inf)")?;
    Ok(3.0 * (a * mean_m(z)? - z))
}

/// `sigma(z) = sqrt(6 z m(z))` with `m` from direct quadrature.
pub fn diffusion(z: f64) -> Result<f64> {
    let r = 6.0 * z * mean_m(z)?;
    if r < -1e-14 {
        return Err(Error::NegativeRadicand(r));
    }
    Ok(r.max(0.0).sqrt())
}

/// `L_avg g(z) = 3(a m - z) g'(z) + 3 z m g''(z)`.
pub fn avg_generator_apply<G: LevelFunction + ?Sized>(g: &G, z: f64, a: f64) -> f64 {
    let m = LoopTable::shared().m(z);
    3.0 * (a * m - z) * g.d1(z) + 3.0 * z * m * g.d2(z)
}

/// Feller boundary type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryType {
    Entrance,
    Regular,
    Exit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClassification {
    pub a: f64,
    pub at_zero: BoundaryType,
    pub at_max: BoundaryType,
}

pub fn classify_boundaries(a: f64) -> Result<BoundaryClassification> {
    check_range("a", a, a >= 0.0, "[0, inf)")?;
    let at_zero = if a == 0.0 {
        BoundaryType::Exit
    } else if a < 1.0 {
        BoundaryType::Regular
    } else {
        BoundaryType::Entrance
    };
    Ok(BoundaryClassification {
        a,
        at_zero,
        at_max: BoundaryType::Entrance,
    })
}

const LEVEL_TOL: Tolerance = Tolerance {
    rel: 1e-11,
    abs: 0.0,
    max_depth: 48,
};

/// `∫_lo^hi f(z) dz` for `0 < lo <= hi < 1/27`, with the logarithmic
/// substitutions described in the module docs.
pub fn integrate_level<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: Tolerance) -> f64 {
    if hi < lo {
        return -integrate_level(f, hi, lo, tol);
    }
    if hi == lo {
        return 0.0;
    }
    let mut total = 0.0;
    if lo < Z_REF {
        let top = hi.min(Z_REF);
        total += integrate_adaptive(
            |u| {
                let z = u.exp();
                f(z) * z
            },
            lo.ln(),
            top.ln(),
            tol,
        );
    }
    if hi > Z_REF {
        let bottom = lo.max(Z_REF);
        total += integrate_adaptive(
            |v| {
                let w = v.exp();
                f(Z_MAX - w) * w
            },
            (Z_MAX - hi).ln(),
            (Z_MAX - bottom).ln(),
            tol,
        );
    }
    total
}

/// Scale and speed densities and their primitives anchored at `1/54`.
#[derive(Clone, Debug)]
pub struct ScaleSpeed {
    a: f64,
    table: Arc<LoopTable>,
}

impl ScaleSpeed {
    pub fn new(a: f64) -> Result<Self> {
        check_range("a", a, a >= 0.0, "[0, inf)")?;
        Ok(Self {
            a,
            table: LoopTable::shared(),
        })
    }

    /// `dp/dz = -1 / (z^a A(z))`.
    pub fn dp(&self, z: f64) -> f64 {
        -1.0 / (z.powf(self.a) * self.table.action(z))
    }

    /// `ds/dz = z^{a-1} T(z) / 3`.
    pub fn ds(&self, z: f64) -> f64 {
        z.powf(self.a - 1.0) * self.table.period(z) / 3.0
    }

    pub fn p(&self, z: f64) -> f64 {
        integrate_level(|x| self.dp(x), Z_REF, z, LEVEL_TOL)
    }

    pub fn s(&self, z: f64) -> f64 {
        integrate_level(|x| self.ds(x), Z_REF, z, LEVEL_TOL)
    }
}

/// Truncated Feller integrals toward both boundaries, with `s` and `p`
/// anchored at `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FellerIntegrals {
    pub a: f64,
    pub r: f64,
    pub eps: f64,
    /// `∫_eps^r |s(z) - s(r)| dp(z)`.
    pub lower_s_dp: f64,
    /// `∫_eps^r |p(z) - p(r)| ds(z)`.
    pub lower_p_ds: f64,
    /// `∫_r^{1/27 - eps} |s(z) - s(r)| dp(z)`.
    pub upper_s_dp: f64,
    /// `∫_r^{1/27 - eps} |p(z) - p(r)| ds(z)`.
    pub upper_p_ds: f64,
}

pub fn feller_integrals(a: f64, r: f64, eps: f64) -> Result<FellerIntegrals> {
    check_range("a", a, a >= 0.0, "[0, inf)")?;
    check_range("r", r, r > 0.0 && r < Z_MAX, "(0, 1/27)")?;
    check_range(
        "eps",
        eps,
        eps > 0.0 && eps < r && eps < Z_MAX - r,
        "(0, min(r, 1/27 - r))",
    )?;
    let ss = ScaleSpeed::new(a)?;
    let outer = Tolerance {
        rel: 1e-9,
        ..LEVEL_TOL
    };
    let inner = |f: &dyn Fn(f64) -> f64, x: f64, y: f64| integrate_level(f, x, y, LEVEL_TOL);
    let dp = |z: f64| ss.dp(z);
    let ds = |z: f64| ss.ds(z);
    let lower_s_dp = integrate_level(|z| inner(&ds, z, r) * ss.dp(z), eps, r, outer);
    let lower_p_ds = integrate_level(|z| inner(&dp, z, r) * ss.ds(z), eps, r, outer);
    let top = Z_MAX - eps;
    let upper_s_dp = integrate_level(|z| inner(&ds, r, z) * ss.dp(z), r, top, outer);
    let upper_p_ds = integrate_level(|z| inner(&dp, r, z) * ss.ds(z), r, top, outer);
    Ok(FellerIntegrals {
        a,
        r,
        eps,
        lower_s_dp,
        lower_p_ds,
        upper_s_dp,
        upper_p_ds,
    })
}

/// How a proposal outside `(0, 1/27)` is mapped back.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Clamp into `[floor, 1/27]`.
    Clamp { floor: f64 },
    /// Mirror negative proposals about 0, clamp above.
    Reflect,
    /// Freeze at 0 once reached, clamp above.
    Absorb,
}

impl BoundaryPolicy {
    /// Policy matching the type of the boundary at 0.
    pub fn for_a(a: f64) -> Self {
        if a >= 1.0 {
            Self::Clamp { floor: Z_FLOOR }
        } else if a > 0.0 {
            Self::Reflect
        } else {
            Self::Absorb
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Self::Clamp { floor } => z.clamp(floor, Z_MAX),
            Self::Reflect => z.abs().min(Z_MAX),
            Self::Absorb => z.clamp(0.0, Z_MAX),
        }
    }
}

/// Unconstrained Euler-Maruyama proposal.
#[inline]
pub fn em_proposal(z: f64, dt: f64, gaussian: f64, coeffs: &SdeCoefficients) -> f64 {
    let (b, s) = coeffs.eval(z);
    z + b * dt + s * dt.sqrt() * gaussian
}

/// One Euler-Maruyama step followed by the boundary policy.
pub fn em_step(
    z: f64,
    dt: f64,
    gaussian: f64,
    coeffs: &SdeCoefficients,
    policy: BoundaryPolicy,
) -> f64 {
    if policy == BoundaryPolicy::Absorb && z <= 0.0 {
        return 0.0;
    }
    policy.apply(em_proposal(z, dt, gaussian, coeffs))
}

/// Summary of one simulated path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub z_final: f64,
    pub absorbed: bool,
    /// First step time at which a proposal reached `z <= 0`.
    pub hit_lower: Option<f64>,
    /// First step time at which a proposal reached `z >= 1/27`.
    pub hit_upper: Option<f64>,
}

/// Runs `steps` steps from `z0`, drawing increments from `normal` and
/// calling `visit(k, z)` for `k = 0..=steps`.
pub fn drive_path<N, V>(
    z0: f64,
    coeffs: &SdeCoefficients,
    policy: BoundaryPolicy,
    dt: f64,
    steps: u64,
    mut normal: N,
    mut visit: V,
) -> PathOutcome
where
    N: FnMut() -> f64,
    V: FnMut(u64, f64),
{
    let mut z = z0;
    let mut hit_lower = None;
    let mut hit_upper = None;
    let mut absorbed = false;
    let sq = dt.sqrt();
    visit(0, z);
    for k in 1..=steps {
        if absorbed {
            visit(k, 0.0);
            continue;
        }
        let (b, s) = coeffs.eval(z);
        let prop = z + b * dt + s * sq * normal();
        let t = k as f64 * dt;
        if prop <= 0.0 && hit_lower.is_none() {
            hit_lower = Some(t);
        }
        if prop >= Z_MAX && hit_upper.is_none() {
            hit_upper = Some(t);
        }
        z = policy.apply(prop);
        if policy == BoundaryPolicy::Absorb && z <= 0.0 {
            absorbed = true;
            z = 0.0;
        }
        visit(k, z);
    }
    PathOutcome {
        z_final: z,
        absorbed,
        hit_lower,
        hit_upper,
    }
}

/// Number of steps closest to `t / dt`.
pub fn steps_for(t: f64, dt: f64) -> u64 {
    (t / dt).round().max(0.0) as u64
}

/// Parameters of an ensemble run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeEnsembleConfig {
    pub a: f64,
    pub z0: f64,
    pub t_final: f64,
    pub dt: f64,
    pub paths: u64,
    pub seed: u64,
    pub obs_times: Vec<f64>,
    pub policy: BoundaryPolicy,
}

impl SdeEnsembleConfig {
    pub fn new(a: f64, z0: f64, t_final: f64, dt: f64, paths: u64, seed: u64) -> Self {
        Self {
            a,
            z0,
            t_final,
            dt,
            paths,
            seed,
            obs_times: vec![t_final],
            policy: BoundaryPolicy::for_a(a),
        }
    }

    pub fn with_obs_times(mut self, obs_times: Vec<f64>) -> Self {
        self.obs_times = obs_times;
        self
    }

    fn validate(&self) -> Result<()> {
        check_range("a", self.a, self.a >= 0.0, "[0, inf)")?;
        check_range("z0", self.z0, self.z0 > 0.0 && self.z0 < Z_MAX, "(0, 1/27)")?;
        check_range("t_final", self.t_final, self.t_final >= 0.0, "[0, inf)")?;
        check_range("dt", self.dt, self.dt > 0.0, "(0, inf)")?;
        for w in self.obs_times.windows(2) {
            check_range("observation time", w[1], w[1] >= w[0], "ascending")?;
        }
        for &t in &self.obs_times {
            check_range(
                "observation time",
                t,
                (0.0..=self.t_final).contains(&t),
                "[0, t_final]",
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdePathRecord {
    pub path: u64,
    /// `Z` at the step nearest to each observation time.
    pub obs: Vec<f64>,
    pub outcome: PathOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeEnsemble {
    pub config: SdeEnsembleConfig,
    pub paths: Vec<SdePathRecord>,
}

impl SdeEnsemble {
    /// Values of all paths at observation `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.obs[k]).collect()
    }

    /// Fraction of paths absorbed by the end of the run.
    pub fn absorbed_fraction(&self) -> f64 {
        let n = self.paths.iter().filter(|p| p.outcome.absorbed).count();
        n as f64 / self.paths.len().max(1) as f64
    }
}

/// Independent paths in parallel; path `i` uses stream `i` of the seed.
pub fn sde_ensemble(cfg: &SdeEnsembleConfig) -> Result<SdeEnsemble> {
    cfg.validate()?;
    let coeffs = SdeCoefficients::new(cfg.a)?;
    let steps = steps_for(cfg.t_final, cfg.dt);
    let obs_steps: Vec<u64> = cfg
        .obs_times
        .iter()
        .map(|&t| steps_for(t, cfg.dt).min(steps))
        .collect();
    let paths = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i);
            let mut obs = vec![0.0; obs_steps.len()];
            let outcome = drive_path(
                cfg.z0,
                &coeffs,
                cfg.policy,
                cfg.dt,
                steps,
                || rng.sample(StandardNormal),
                |k, z| {
                    for (slot, &s) in obs.iter_mut().zip(&obs_steps) {
                        if s == k {
                            *slot = z;
                        }
                    }
                },
            );
            SdePathRecord {
                path: i,
                obs,
                outcome,
            }
        })
        .collect();
    Ok(SdeEnsemble {
        config: cfg.clone(),
        paths,
    })
}

const DENSITY_PANELS: usize = 3000;

/// Normalized density proportional to `z^{a-1} T(z)` with tabulated CDF.
///
/// Panels are uniform in `u = ln z` from `z_lo` to `1/27`; below `z_lo` the
/// mass is taken from `T = c - 3 ln z` in closed form.
#[derive(Clone, Debug)]
pub struct StationaryDensity {
    a: f64,
    norm: f64,
    u_lo: f64,
    du: f64,
    /// Unnormalized mass below each panel's left edge, plus the final total.
    cum: Vec<f64>,
    table: Arc<LoopTable>,
}

impl StationaryDensity {
    pub fn new(a: f64) -> Result<Self> {
        check_range("a", a, a > 0.0, "(0, inf)")?;
        let table = LoopTable::shared();
        let u_hi = Z_MAX.ln();
        let u_lo = (-60.0 / a).max(-690.0).min(LOG_FLOOR.ln());
        let du = (u_hi - u_lo) / DENSITY_PANELS as f64;
        let z_lo = u_lo.exp();
        let c = table.period(z_lo) + 3.0 * u_lo;
        let tail = z_lo.powf(a) * ((c - 3.0 * u_lo) / a + 3.0 / (a * a));
        let mut cum = Vec::with_capacity(DENSITY_PANELS + 1);
        let mut acc = tail;
        cum.push(acc);
        let weight = |u: f64| {
            let z = u.exp();
            z.powf(a) * table.period(z)
        };
        for k in 0..DENSITY_PANELS {
            let x0 = u_lo + k as f64 * du;
            acc += gl20().integrate(weight, x0, x0 + du);
            cum.push(acc);
        }
        Ok(Self {
            a,
            norm: acc,
            u_lo,
            du,
            cum,
            table,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `∫_0^{1/27} z^{a-1} T(z) dz`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn pdf(&self, z: f64) -> f64 {
        if z <= 0.0 || z >= Z_MAX {
            return 0.0;
        }
        z.powf(self.a - 1.0) * self.table.period(z) / self.norm
    }

    fn partial(&self, u: f64) -> f64 {
        let pos = ((u - self.u_lo) / self.du).clamp(0.0, DENSITY_PANELS as f64);
        let k = (pos.floor() as usize).min(DENSITY_PANELS - 1);
        let x0 = self.u_lo + k as f64 * self.du;
        let a = self.a;
        let table = &self.table;
        self.cum[k]
            + gl20().integrate(
                |v| {
                    let z = v.exp();
                    z.powf(a) * table.period(z)
                },
                x0,
                u,
            )
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= Z_MAX {
            return 1.0;
        }
        let u = z.ln();
        if u <= self.u_lo {
            let c = self.table.period(self.u_lo.exp()) + 3.0 * self.u_lo;
            let a = self.a;
            return z.powf(a) * ((c - 3.0 * u) / a + 3.0 / (a * a)) / self.norm;
        }
        (self.partial(u) / self.norm).clamp(0.0, 1.0)
    }

    /// Level below which a fraction `q` of the mass lies.
    pub fn quantile(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return Z_MAX;
        }
        let target = q * self.norm;
        if target <= self.cum[0] {
            let (mut lo, mut hi) = (f64::MIN_POSITIVE.ln(), self.u_lo);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.cdf(mid.exp()) < q {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return (0.5 * (lo + hi)).exp();
        }
        let k = self
            .cum
            .partition_point(|&c| c < target)
            .clamp(1, DENSITY_PANELS)
            - 1;
        let (mut lo, mut hi) = (
            self.u_lo + k as f64 * self.du,
            self.u_lo + (k + 1) as f64 * self.du,
        );
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.partial(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp().min(Z_MAX)
    }

    /// `E[f(Z)]` under the density.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let a = self.a;
        let table = &self.table;
        let mut acc = self.cum[0] * f(self.u_lo.exp());
        for k in 0..DENSITY_PANELS {
            let x0 = self.u_lo + k as f64 * self.du;
            acc += gl20().integrate(
                |u| {
                    let z = u.exp();
                    z.powf(a) * table.period(z) * f(z)
                },
                x0,
                x0 + self.du,
            );
        }
        acc / self.norm
    }

    /// Boundaries of `k` bins of equal mass, `k + 1` values from 0 to 1/27.
    pub fn equal_mass_edges(&self, k: usize) -> Vec<f64> {
        (0..=k)
            .map(|j| self.quantile(j as f64 / k as f64))
            .collect()
    }
}
