//! Empirical laws, distances, Dirichlet reference moments, and the desk-scale
//! experiments comparing particle system, fast flow, and averaged diffusion.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_range, Error, Result};
use crate::fast::{flow_at, loop_start};
use crate::particle::{invariant_measure, particle_ensemble, ObservedRun};
use crate::rng::stream_rng;
use crate::sde::{
    drive_path, sde_ensemble, steps_for, BoundaryPolicy, SdeCoefficients, SdeEnsembleConfig,
    StationaryDensity, DEFAULT_DT,
};
use crate::simplex::{to_point, z_of, CountState, ModelParams, SimplexPoint};

/// Sorted sample with its empirical CDF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    sorted: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(&bad) = samples.iter().find(|v| v.is_nan()) {
            return Err(Error::OutOfRange {
                name: "sample",
                value: bad,
                range: "non-NaN",
            });
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(p: &EmpiricalLaw, q: &EmpiricalLaw) -> f64 {
    let (x, y) = (&p.sorted, &q.sorted);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_against_cdf<F: Fn(f64) -> f64>(p: &EmpiricalLaw, cdf: F) -> f64 {
    let x = &p.sorted;
    let n = x.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < x.len() {
        let v = x[i];
        let mut k = i;
        while k < x.len() && x[k] == v {
            k += 1;
        }
        let f = cdf(v);
        d = d
            .max((k as f64 / n - f).abs())
            .max((f - i as f64 / n).abs());
        i = k;
    }
    d
}

/// Index of the bin `[e_j, e_{j+1})` containing `z`; the last bin is closed.
fn bin_of(edges: &[f64], z: f64) -> usize {
    let k = edges.len() - 1;
    edges[1..k].partition_point(|&e| e <= z)
}

/// Normalized bin masses of a sample.
pub fn bin_masses(samples: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; edges.len() - 1];
    for &z in samples {
        m[bin_of(edges, z)] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Normalized bin masses of a weighted discrete law.
pub fn weighted_bin_masses(points: &[(f64, f64)], edges: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; edges.len() - 1];
    for &(z, w) in points {
        m[bin_of(edges, z)] += w;
    }
    let total: f64 = m.iter().sum();
    m.iter_mut().for_each(|v| *v /= total);
    m
}

/// Total variation between two binned laws.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `E[x1^k1 x2^k2 x3^k3]` under Dirichlet(a, a, a).
pub fn dirichlet_moment(a: f64, powers: [u32; 3]) -> Result<f64> {
    check_range("a", a, a > 0.0, "(0, inf)")?;
    let k: u32 = powers.iter().sum();
    let log = powers
        .iter()
        .map(|&p| ln_gamma(a + p as f64) - ln_gamma(a))
        .sum::<f64>()
        + ln_gamma(3.0 * a)
        - ln_gamma(3.0 * a + k as f64);
    Ok(log.exp())
}

fn monomial(x: &SimplexPoint, powers: [u32; 3]) -> f64 {
    (0..3).map(|i| x.get(i).powi(powers[i] as i32)).product()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentGap {
    pub n: u64,
    pub a: f64,
    pub powers: [u32; 3],
    pub exact: f64,
    pub dirichlet: f64,
    pub gap: f64,
}

/// Moments of the finite-`n` invariant measure (exact enumeration) against
/// the Dirichlet limit.
pub fn check_prop21(n: u64, a: f64, powers: &[[u32; 3]]) -> Result<Vec<MomentGap>> {
    check_range("n", n as f64, n <= 400, "[1, 400]")?;
    let mu = invariant_measure(n, &ModelParams::new(a)?)?;
    powers
        .iter()
        .map(|&pw| {
            let exact = mu.expect(|x| monomial(x, pw));
            let dirichlet = dirichlet_moment(a, pw)?;
            Ok(MomentGap {
                n,
                a,
                powers: pw,
                exact,
                dirichlet,
                gap: (exact - dirichlet).abs(),
            })
        })
        .collect()
}

/// Mean ℓ¹ distance between the rescaled particle system and the fast flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowGapCurve {
    pub n: u64,
    pub a: f64,
    pub start: CountState,
    pub runs: u64,
    pub seed: u64,
    /// Fast-scale times `t`; the particle system is observed at `t / n`.
    pub t: Vec<f64>,
    pub mean_gap: Vec<f64>,
}

impl FlowGapCurve {
    pub fn max_gap(&self) -> f64 {
        self.mean_gap.iter().copied().fold(0.0, f64::max)
    }
}

/// `E ||X_N(t/N) - X_fast(t)||_1` with the flow started at `X_N(0)`, the grid
/// point nearest to `x0`.
pub fn check_prop22(
    n: u64,
    a: f64,
    x0: &SimplexPoint,
    t_grid: &[f64],
    runs: u64,
    seed: u64,
) -> Result<FlowGapCurve> {
    let params = ModelParams::new(a)?;
    let start = CountState::nearest(x0, n);
    let p0 = to_point(&start)?;
    let flow = flow_at(&p0, t_grid)?;
    let real_times: Vec<f64> = t_grid.iter().map(|t| t / n as f64).collect();
    let ens = particle_ensemble(start, params, &real_times, runs, seed)?;
    let mut mean_gap = vec![0.0; t_grid.len()];
    for run in &ens {
        for (k, s) in run.states.iter().enumerate() {
            mean_gap[k] += to_point(s)?.l1_distance(&flow[k]);
        }
    }
    mean_gap.iter_mut().for_each(|g| *g /= runs as f64);
    Ok(FlowGapCurve {
        n,
        a,
        start,
        runs,
        seed,
        t: t_grid.to_vec(),
        mean_gap,
    })
}

/// Particle start for level `z0`: the grid point nearest to the loop point
/// with `x1 = x_max(z0)` and `x2 = x3`.
pub fn start_on_level(z0: f64, n: u64) -> Result<CountState> {
    Ok(CountState::nearest(&loop_start(z0)?, n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawComparison {
    pub t: f64,
    pub ks: f64,
    pub particle_absorbed: f64,
    pub sde_absorbed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    pub n: u64,
    pub a: f64,
    pub z0: f64,
    /// `z` of the particle start, also used as the diffusion's start.
    pub z_start: f64,
    pub start: CountState,
    pub runs: u64,
    pub paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub rows: Vec<LawComparison>,
}

/// Law of `Z_N(t) = z(X_N(t))` against the averaged diffusion at each `t_obs`.
/// Both start from the same level; particle run `r` uses stream `r` of
/// `seed` and diffusion path `i` uses stream `i` of `seed + 1`.
pub fn check_theorem31(
    n: u64,
    a: f64,
    z0: f64,
    t_obs: &[f64],
    runs: u64,
    paths: u64,
    seed: u64,
) -> Result<AveragingReport> {
    check_theorem31_with_dt(n, a, z0, t_obs, runs, paths, seed, DEFAULT_DT)
}

#[allow(clippy::too_many_arguments)]
pub fn check_theorem31_with_dt(
    n: u64,
    a: f64,
    z0: f64,
    t_obs: &[f64],
    runs: u64,
    paths: u64,
    seed: u64,
    dt: f64,
) -> Result<AveragingReport> {
    let params = ModelParams::new(a)?;
    let start = start_on_level(z0, n)?;
    let z_start = z_of(&to_point(&start)?);
    let ens = particle_ensemble(start, params, t_obs, runs, seed)?;
    let t_final = t_obs.iter().copied().fold(0.0, f64::max);
    let cfg = SdeEnsembleConfig::new(a, z_start, t_final, dt, paths, seed.wrapping_add(1))
        .with_obs_times(t_obs.to_vec());
    let sde = sde_ensemble(&cfg)?;
    let mut rows = Vec::with_capacity(t_obs.len());
    for (k, &t) in t_obs.iter().enumerate() {
        let zp: Vec<f64> = ens
            .iter()
            .map(|r| z_of(&to_point(&r.states[k]).expect("n > 0")))
            .collect();
        let zs = sde.column(k);
        let frac0 = |v: &[f64]| v.iter().filter(|&&z| z <= 0.0).count() as f64 / v.len() as f64;
        rows.push(LawComparison {
            t,
            ks: ks_distance(
                &EmpiricalLaw::new(zp.clone())?,
                &EmpiricalLaw::new(zs.clone())?,
            ),
            particle_absorbed: frac0(&zp),
            sde_absorbed: frac0(&zs),
        });
    }
    Ok(AveragingReport {
        n,
        a,
        z0,
        z_start,
        start,
        runs,
        paths,
        dt,
        seed,
        rows,
    })
}

/// Fraction of runs from the centre whose smallest coordinate drops below
/// `threshold` before time `t`.
pub fn boundary_visit_fraction(
    n: u64,
    a: f64,
    t: f64,
    runs: u64,
    threshold: f64,
    seed: u64,
) -> Result<f64> {
    let start = CountState::nearest(&SimplexPoint::centre(), n);
    let ens = particle_ensemble(start, ModelParams::new(a)?, &[t], runs, seed)?;
    let hits = ens.iter().filter(|r| r.min_coordinate < threshold).count();
    Ok(hits as f64 / runs as f64)
}

/// Terminal laws of the diffusion at step `dt` and `dt / 2`, driven by the
/// same Brownian path: each coarse increment is the normalized sum of two
/// fine ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtHalving {
    pub a: f64,
    pub z0: f64,
    pub t: f64,
    pub dt: f64,
    pub paths: u64,
    pub seed: u64,
    pub ks: f64,
}

pub fn dt_halving(a: f64, z0: f64, t: f64, dt: f64, paths: u64, seed: u64) -> Result<DtHalving> {
    let coeffs = SdeCoefficients::new(a)?;
    let policy = BoundaryPolicy::for_a(a);
    let coarse_steps = steps_for(t, dt);
    let pairs: Vec<(f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let fine_normals: Vec<f64> = (0..2 * coarse_steps)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let mut it = fine_normals.iter();
            let fine = drive_path(
                z0,
                &coeffs,
                policy,
                0.5 * dt,
                2 * coarse_steps,
                || *it.next().expect("enough fine increments"),
                |_, _| {},
            );
            let mut ch = fine_normals.chunks_exact(2);
            let coarse = drive_path(
                z0,
                &coeffs,
                policy,
                dt,
                coarse_steps,
                || {
                    let c = ch.next().expect("enough coarse increments");
                    (c[0] + c[1]) * std::f64::consts::FRAC_1_SQRT_2
                },
                |_, _| {},
            );
            (coarse.z_final, fine.z_final)
        })
        .collect();
    let (coarse, fine): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(DtHalving {
        a,
        z0,
        t,
        dt,
        paths,
        seed,
        ks: ks_distance(&EmpiricalLaw::new(coarse)?, &EmpiricalLaw::new(fine)?),
    })
}

/// Settings of the long-run occupation leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationConfig {
    pub a: f64,
    pub z0: f64,
    pub t_burn: f64,
    pub t_end: f64,
    pub dt: f64,
    pub paths: u64,
    pub record_every: u64,
    pub seed: u64,
}

impl OccupationConfig {
    pub fn new(a: f64, seed: u64) -> Self {
        Self {
            a,
            z0: 1.0 / 54.0,
            t_burn: 50.0,
            t_end: 500.0,
            dt: DEFAULT_DT,
            paths: 16,
            record_every: 100,
            seed,
        }
    }
}

/// Pooled occupation samples of independent long paths over
/// `[t_burn, t_end]`.
pub fn sde_occupation(cfg: &OccupationConfig) -> Result<Vec<f64>> {
    check_range(
        "t_burn",
        cfg.t_burn,
        cfg.t_burn >= 0.0 && cfg.t_burn <= cfg.t_end,
        "[0, t_end]",
    )?;
    let coeffs = SdeCoefficients::new(cfg.a)?;
    let policy = BoundaryPolicy::for_a(cfg.a);
    let first = steps_for(cfg.t_burn, cfg.dt);
    let steps = steps_for(cfg.t_end, cfg.dt);
    let every = cfg.record_every.max(1);
    let per_path: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i);
            let mut out = Vec::with_capacity(((steps - first) / every + 1) as usize);
            drive_path(
                cfg.z0,
                &coeffs,
                policy,
                cfg.dt,
                steps,
                || StandardNormal.sample(&mut rng),
                |k, z| {
                    if k >= first && (k - first).is_multiple_of(every) {
                        out.push(z);
                    }
                },
            );
            out
        })
        .collect();
    Ok(per_path.concat())
}

/// Pairwise distances between the exact grid law of `z`, the diffusion's
/// occupation law, and the stationary density, on equal-mass bins of the
/// density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryComparison {
    pub a: f64,
    pub n: u64,
    pub bins: usize,
    pub occupation: OccupationConfig,
    pub occupation_samples: usize,
    pub tv_grid_density: f64,
    pub tv_occupation_density: f64,
    pub tv_grid_occupation: f64,
    pub ks_occupation_density: f64,
}

impl StationaryComparison {
    pub fn max_tv(&self) -> f64 {
        self.tv_grid_density
            .max(self.tv_occupation_density)
            .max(self.tv_grid_occupation)
    }
}

pub fn stationary_comparison(
    n: u64,
    occupation: &OccupationConfig,
    bins: usize,
) -> Result<StationaryComparison> {
    let a = occupation.a;
    let density = StationaryDensity::new(a)?;
    let edges = density.equal_mass_edges(bins);
    let reference = vec![1.0 / bins as f64; bins];
    let grid = invariant_measure(n, &ModelParams::new(a)?)?;
    let grid_masses = weighted_bin_masses(&grid.z_law(), &edges);
    let samples = sde_occupation(occupation)?;
    let occ_masses = bin_masses(&samples, &edges);
    let law = EmpiricalLaw::new(samples)?;
    Ok(StationaryComparison {
        a,
        n,
        bins,
        occupation: occupation.clone(),
        occupation_samples: law.len(),
        tv_grid_density: tv_distance(&grid_masses, &reference),
        tv_occupation_density: tv_distance(&occ_masses, &reference),
        tv_grid_occupation: tv_distance(&grid_masses, &occ_masses),
        ks_occupation_density: ks_against_cdf(&law, |z| density.cdf(z)),
    })
}

/// Time-stamped samples of an ensemble with the metadata needed to rerun it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub kind: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub obs_times: Vec<f64>,
    /// `values[run][k]` is the observed `z` of `run` at `obs_times[k]`.
    pub values: Vec<Vec<f64>>,
}

impl EnsembleRecord {
    pub fn from_particle(
        n: u64,
        a: f64,
        seed: u64,
        obs_times: &[f64],
        runs: &[ObservedRun],
    ) -> Self {
        let values = runs
            .iter()
            .map(|r| {
                r.states
                    .iter()
                    .map(|s| z_of(&to_point(s).expect("n > 0")))
                    .collect()
            })
            .collect();
        Self {
            kind: "particle".into(),
            params: BTreeMap::from([("n".into(), n as f64), ("a".into(), a)]),
            seed,
            obs_times: obs_times.to_vec(),
            values,
        }
    }

    pub fn from_sde(ens: &crate::sde::SdeEnsemble) -> Self {
        let c = &ens.config;
        Self {
            kind: "sde".into(),
            params: BTreeMap::from([
                ("a".into(), c.a),
                ("z0".into(), c.z0),
                ("dt".into(), c.dt),
                ("t_final".into(), c.t_final),
            ]),
            seed: c.seed,
            obs_times: c.obs_times.clone(),
            values: ens.paths.iter().map(|p| p.obs.clone()).collect(),
        }
    }

    /// Observed values of all runs at observation `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}
