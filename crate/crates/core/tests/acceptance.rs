//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits with status 0 after reporting unless `SLOWFAST_LV_STRICT=1` is set,
//! in which case any failing criterion makes the exit status 1.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use slowfast_lv::analysis::{
    boundary_visit_fraction, check_prop21, check_prop22, check_theorem31, dt_halving,
    stationary_comparison, OccupationConfig,
};
use slowfast_lv::fast::{
    action, mean_m, period, slow_generator_apply, time_average, LevelFunction, Polynomial,
};
use slowfast_lv::particle::{generator_matrix, invariant_measure};
use slowfast_lv::sde::{avg_generator_apply, StationaryDensity};
use slowfast_lv::simplex::{ModelParams, SimplexPoint, Z_MAX};

const SEED_BASE: u64 = 0x5EED_0000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Criterion {
    id: u64,
    name: &'static str,
    budget: Duration,
    run: fn(u64) -> Outcome,
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn c1_period_limit(_: u64) -> Outcome {
    let t = period(Z_MAX - 1e-8).unwrap();
    let e = rel(t, 2.0 * PI * 3f64.sqrt());
    outcome(
        e <= 1e-4,
        format!("T(1/27-1e-8)={t:.10}, rel err {e:.2e} <= 1e-4"),
    )
}

fn c2_period_asymptotics(_: u64) -> Outcome {
    let ratio = |z: f64| period(z).unwrap() / (-3.0 * z.ln());
    let (r8, r4) = (ratio(1e-8), ratio(1e-4));
    let pass = (0.85..=1.15).contains(&r8) && (r8 - 1.0).abs() < (r4 - 1.0).abs();
    outcome(
        pass,
        format!("T/(-3 ln z): {r8:.4} at 1e-8 in [0.85, 1.15], {r4:.4} at 1e-4"),
    )
}

fn c3_action_limits(_: u64) -> Outcome {
    let a0 = action(1e-8).unwrap();
    let q = action(Z_MAX - 1e-5).unwrap() / (-2.0 * PI * 3f64.sqrt() * 1e-5);
    let pass = (a0 + 0.5).abs() <= 1e-3 && (0.99..=1.01).contains(&q);
    outcome(
        pass,
        format!("A(1e-8)={a0:.6} (|+0.5| <= 1e-3), ratio at top {q:.6} in [0.99, 1.01]"),
    )
}

fn c4_action_derivative(_: u64) -> Outcome {
    let (lo, hi, h) = (1e-4, Z_MAX - 1e-4, 1e-6);
    let worst = (0..20)
        .map(|k| {
            let z = lo + (hi - lo) * k as f64 / 19.0;
            let d = (action(z + h).unwrap() - action(z - h).unwrap()) / (2.0 * h);
            rel(d, period(z).unwrap())
        })
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-4,
        format!("max rel |A' - T| {worst:.2e} <= 1e-4"),
    )
}

fn c5_averaging_identity(_: u64) -> Outcome {
    let tests = [
        Polynomial(vec![0.0, 1.0]),
        Polynomial(vec![0.0, 0.0, 1.0]),
        Polynomial(vec![0.0, 0.0, 0.0, 1.0]),
        Polynomial(vec![0.3, -2.0, 40.0, 500.0]),
    ];
    let mut worst = 0.0f64;
    for z in [1.0 / 200.0, 1.0 / 54.0, 1.0 / 30.0] {
        let m = mean_m(z).unwrap();
        for a in [0.0, 1.0, 2.0] {
            for g in &tests {
                let lhs = time_average(|p| slow_generator_apply(g, p, a), z).unwrap();
                let drift = 3.0 * (a * m - z) * g.d1(z);
                let diff = 3.0 * z * m * g.d2(z);
                let scale = drift.abs() + diff.abs();
                worst = worst.max((lhs - drift - diff).abs() / scale);
            }
        }
    }
    outcome(
        worst <= 1e-5,
        format!("max normalized error {worst:.2e} <= 1e-5"),
    )
}

fn c6_exact_stationarity(_: u64) -> Outcome {
    let mut worst = 0.0f64;
    for n in [3, 5, 10, 20] {
        for a in [0.5, 1.0, 2.0] {
            let p = ModelParams::new(a).unwrap();
            let g = generator_matrix(n, &p).unwrap();
            let mu = invariant_measure(n, &p).unwrap();
            worst = g
                .left_apply(&mu.weights)
                .iter()
                .fold(worst, |w, r| w.max(r.abs()));
        }
    }
    outcome(worst <= 1e-10, format!("max |mu G| {worst:.2e} <= 1e-10"))
}

fn c7_finite_n_moments(_: u64) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [0.5, 2.0] {
        let gaps: Vec<f64> = [20, 60, 180]
            .iter()
            .map(|&n| check_prop21(n, a, &[[1, 1, 1]]).unwrap()[0].gap)
            .collect();
        pass &= gaps.windows(2).all(|w| w[1] < w[0]) && gaps[2] <= 0.15 * gaps[0];
        parts.push(format!(
            "a={a}: gaps {:.3e} {:.3e} {:.3e}, ratio {:.3}",
            gaps[0],
            gaps[1],
            gaps[2],
            gaps[2] / gaps[0]
        ));
    }
    outcome(pass, parts.join("; ") + " (decreasing, ratio <= 0.15)")
}

fn c8_stationarity_integral(_: u64) -> Outcome {
    let fs = [
        Polynomial(vec![0.0, 1.0]),
        Polynomial(vec![0.0, 0.0, 1.0]),
        Polynomial(vec![0.0, 0.0, 0.0, 1.0]),
        Polynomial(vec![1.0, -30.0, 200.0, 5000.0]),
        Polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0]),
    ];
    let mut worst = 0.0f64;
    for a in [1.0, 2.0, 3.0] {
        let d = StationaryDensity::new(a).unwrap();
        for f in &fs {
            let v = d.expect(|z| avg_generator_apply(f, z, a));
            let scale = d.expect(|z| avg_generator_apply(f, z, a).abs());
            worst = worst.max(v.abs() / scale);
        }
    }
    outcome(
        worst <= 1e-6,
        format!("max normalized integral {worst:.2e} <= 1e-6"),
    )
}

fn c9_fast_flow_limit(seed: u64) -> Outcome {
    let x0 = SimplexPoint::new(0.34, 0.33, 0.33).unwrap();
    let t: Vec<f64> = (0..=100).map(|k| 0.05 * k as f64).collect();
    let main = check_prop22(2000, 1.0, &x0, &t, 100, seed).unwrap();
    let at5: Vec<f64> = [500, 2000, 8000]
        .iter()
        .map(|&n| {
            *check_prop22(n, 1.0, &x0, &[5.0], 100, seed)
                .unwrap()
                .mean_gap
                .last()
                .unwrap()
        })
        .collect();
    let max = main.max_gap();
    let trend = at5.windows(2).all(|w| w[1] < w[0]);
    outcome(
        max <= 0.05 && trend,
        format!(
            "max gap {max:.4} <= 0.05 [{}]; gap at t=5 for N=500,2000,8000: {:.4} {:.4} {:.4} [{}]",
            if max <= 0.05 { "ok" } else { "exceeded" },
            at5[0],
            at5[1],
            at5[2],
            if trend {
                "decreasing"
            } else {
                "not decreasing"
            }
        ),
    )
}

fn c10_averaging_limit(seed: u64) -> Outcome {
    let z0 = 1.0 / 54.0;
    let main = check_theorem31(1000, 2.0, z0, &[0.1, 0.2, 0.4], 500, 5000, seed).unwrap();
    let ks: Vec<f64> = main.rows.iter().map(|r| r.ks).collect();
    let at = |n: u64| {
        check_theorem31(n, 2.0, z0, &[0.2], 500, 5000, seed)
            .unwrap()
            .rows[0]
            .ks
    };
    let trend = [at(250), ks[1], at(4000)];
    let bound = ks.iter().all(|&k| k <= 0.1);
    let decreasing = trend.windows(2).all(|w| w[1] < w[0]);
    outcome(
        bound && decreasing,
        format!(
            "KS at t=0.1,0.2,0.4: {:.4} {:.4} {:.4} (each <= 0.1) [{}]; KS at t=0.2 for N=250,1000,4000: {:.4} {:.4} {:.4} [{}]",
            ks[0],
            ks[1],
            ks[2],
            if bound { "ok" } else { "exceeded" },
            trend[0],
            trend[1],
            trend[2],
            if decreasing { "decreasing" } else { "not decreasing" }
        ),
    )
}

fn c11_boundary_visits(seed: u64) -> Outcome {
    let low = boundary_visit_fraction(2000, 0.2, 1.0, 100, 0.01, seed).unwrap();
    let high = boundary_visit_fraction(2000, 1.3, 1.0, 100, 0.01, seed + 1).unwrap();
    outcome(
        low > 0.5 && high < 0.1,
        format!(
            "fraction with min x_i < 0.01: {low:.2} at a=0.2 (> 0.5), {high:.2} at a=1.3 (< 0.1)"
        ),
    )
}

fn c12_dt_halving(seed: u64) -> Outcome {
    let r = dt_halving(2.0, 1.0 / 54.0, 0.4, 1e-4, 10_000, seed).unwrap();
    outcome(
        r.ks <= 0.02,
        format!("KS(dt=1e-4, dt=5e-5) at t=0.4: {:.4} <= 0.02", r.ks),
    )
}

fn c13_stationary_agreement(seed: u64) -> Outcome {
    let r = stationary_comparison(120, &OccupationConfig::new(2.0, seed), 30).unwrap();
    outcome(
        r.max_tv() <= 0.05,
        format!(
            "TV grid/density {:.4}, occupation/density {:.4}, grid/occupation {:.4} (each <= 0.05; {} occupation samples)",
            r.tv_grid_density, r.tv_occupation_density, r.tv_grid_occupation, r.occupation_samples
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion {
            id: 1,
            name: "period limit at the centre",
            budget: secs(1),
            run: c1_period_limit,
        },
        Criterion {
            id: 2,
            name: "period log asymptotics",
            budget: secs(1),
            run: c2_period_asymptotics,
        },
        Criterion {
            id: 3,
            name: "action limits",
            budget: secs(1),
            run: c3_action_limits,
        },
        Criterion {
            id: 4,
            name: "action derivative equals period",
            budget: secs(10),
            run: c4_action_derivative,
        },
        Criterion {
            id: 5,
            name: "averaging identity",
            budget: secs(30),
            run: c5_averaging_identity,
        },
        Criterion {
            id: 6,
            name: "exact stationarity of the product measure",
            budget: secs(5),
            run: c6_exact_stationarity,
        },
        Criterion {
            id: 7,
            name: "finite-N moments approach Dirichlet",
            budget: secs(60),
            run: c7_finite_n_moments,
        },
        Criterion {
            id: 8,
            name: "stationarity integral",
            budget: secs(10),
            run: c8_stationarity_integral,
        },
        Criterion {
            id: 9,
            name: "fast-flow limit of the particle system",
            budget: secs(300),
            run: c9_fast_flow_limit,
        },
        Criterion {
            id: 10,
            name: "averaging limit in law",
            budget: secs(900),
            run: c10_averaging_limit,
        },
        Criterion {
            id: 11,
            name: "boundary visits from the centre",
            budget: secs(300),
            run: c11_boundary_visits,
        },
        Criterion {
            id: 12,
            name: "diffusion step-halving",
            budget: secs(300),
            run: c12_dt_halving,
        },
        Criterion {
            id: 13,
            name: "three-way stationary agreement",
            budget: secs(600),
            run: c13_stationary_agreement,
        },
    ];
    let filter: Vec<u64> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for c in criteria
        .iter()
        .filter(|c| filter.is_empty() || filter.contains(&c.id))
    {
        let start = Instant::now();
        let o = (c.run)(SEED_BASE + c.id);
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let pass = o.pass && in_time;
        if !pass {
            failed.push(c.id);
        }
        println!(
            "{} {:>2} {}: {} [{:.2} s of {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            o.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        if std::env::var("SLOWFAST_LV_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
