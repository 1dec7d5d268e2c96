use std::fmt::Write as _;

use anyhow::anyhow;
use serde::Serialize;
use serde_json::{json, Value};
use slowfast_lv::analysis::{check_prop21, check_prop22, check_theorem31};
use slowfast_lv::fast::{loop_geometry, theta_grid, Polynomial};
use slowfast_lv::particle::{generator_matrix, invariant_measure, particle_ensemble};
use slowfast_lv::rng::stream_seed;
use slowfast_lv::sde::{
    avg_generator_apply, classify_boundaries, feller_integrals, sde_ensemble, BoundaryPolicy,
    SdeEnsembleConfig, StationaryDensity,
};
use slowfast_lv::simplex::{to_point, z_of, CountState, ModelParams, SimplexPoint};

use crate::config::{
    canonical, BoundariesConfig, Check, Format, GeometryConfig, ParticleConfig, SdeConfig,
    StationaryConfig, VerifyConfig,
};
use crate::Failure;

/// Rendered artifact plus the destination it goes to.
pub struct Artifact {
    pub out: String,
    pub body: String,
    /// `Some(false)` for a verify report whose check did not pass.
    pub passed: Option<bool>,
}

pub struct Context {
    pub timestamp: Option<String>,
}

fn csv_header<R: Serialize>(ctx: &Context, command: &str, config: &R, columns: &str) -> String {
    let mut s = format!("# slowfast-lv {command}\n# config: {}\n", canonical(config));
    if let Some(t) = &ctx.timestamp {
        let _ = writeln!(s, "# generated: {t}");
    }
    s.push_str(columns);
    s.push('\n');
    s
}

fn json_doc<R: Serialize>(ctx: &Context, command: &str, config: &R, data: Value) -> String {
    let mut doc = json!({
        "command": command,
        "config": serde_json::to_value(config).expect("plain data"),
        "data": data,
    });
    if let Some(t) = &ctx.timestamp {
        doc["generated"] = json!(t);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("plain data");
    s.push('\n');
    s
}

fn uniform_times(t_final: f64) -> Vec<f64> {
    (0..=100).map(|k| t_final * k as f64 / 100.0).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn geometry(ctx: &Context, cfg: &GeometryConfig) -> Result<Artifact, Failure> {
    if cfg.z_grid == 0 {
        return Err(Failure::Validation(anyhow!("z-grid must be positive")));
    }
    let rows = theta_grid(cfg.z_grid)
        .into_iter()
        .map(loop_geometry)
        .collect::<Result<Vec<_>, _>>()?;
    let body = match cfg.format {
        Format::Csv => {
            let mut s = csv_header(
                ctx,
                "geometry",
                cfg,
                "z,theta,x_min,x_max,x_add,period,action,m",
            );
            for g in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    g.z, g.theta, g.x_min, g.x_max, g.x_add, g.period, g.action, g.m
                );
            }
            s
        }
        Format::Json => json_doc(ctx, "geometry", cfg, json!(rows)),
    };
    Ok(Artifact {
        out: cfg.out.clone(),
        body,
        passed: None,
    })
}

fn parse_init(init: &str, n: u64) -> Result<CountState, Failure> {
    let init = init.trim();
    if matches!(init, "center" | "centre") {
        return Ok(CountState::nearest(&SimplexPoint::centre(), n));
    }
    let list = init.strip_prefix("counts").unwrap_or(init);
    let list = list.trim_start_matches([':', ' ', '=']);
    let parts: Vec<u64> = list
        .split(',')
        .map(|p| p.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            Failure::Validation(anyhow!(
                "init `{init}`: expected `center` or `counts:N1,N2,N3`"
            ))
        })?;
    if parts.len() != 3 {
        return Err(Failure::Validation(anyhow!(
            "init `{init}`: expected three counts"
        )));
    }
    let s = CountState::new(parts[0], parts[1], parts[2]);
    if s.n() != n {
        return Err(Failure::Validation(anyhow!(
            "init counts sum to {} but n = {n}",
            s.n()
        )));
    }
    Ok(s)
}

pub fn particle(ctx: &Context, cfg: &mut ParticleConfig) -> Result<Artifact, Failure> {
    if cfg.obs_times.is_empty() {
        cfg.obs_times = uniform_times(cfg.t_final);
    }
    if cfg.t_final < 0.0 || !cfg.t_final.is_finite() {
        return Err(Failure::Validation(anyhow!(
            "t-final must be a nonnegative number"
        )));
    }
    if let Some(t) = cfg
        .obs_times
        .iter()
        .find(|&&t| !(0.0..=cfg.t_final).contains(&t))
    {
        return Err(Failure::Validation(anyhow!(
            "observation time {t} outside [0, t-final]"
        )));
    }
    let params = ModelParams::new(cfg.a)?;
    let start = parse_init(&cfg.init, cfg.n)?;
    let runs = particle_ensemble(start, params, &cfg.obs_times, cfg.runs, cfg.seed)?;
    let body = match cfg.format {
        Format::Csv => {
            let mut s = csv_header(ctx, "particle", &*cfg, "run,seed,t,n1,n2,n3,z");
            for r in &runs {
                let seed = stream_seed(cfg.seed, r.run);
                for (t, st) in cfg.obs_times.iter().zip(&r.states) {
                    let [n1, n2, n3] = st.counts();
                    let z = z_of(&to_point(st)?);
                    let _ = writeln!(s, "{},{seed},{t},{n1},{n2},{n3},{z}", r.run);
                }
            }
            s
        }
        Format::Json => {
            let data: Vec<Value> = runs
                .iter()
                .map(|r| {
                    json!({
                        "run": r.run,
                        "seed": stream_seed(cfg.seed, r.run),
                        "states": r.states.iter().map(|s| s.counts()).collect::<Vec<_>>(),
                        "absorption": r.absorption,
                        "events": r.events,
                        "min_coordinate": r.min_coordinate,
                    })
                })
                .collect();
            json_doc(ctx, "particle", &*cfg, json!(data))
        }
    };
    Ok(Artifact {
        out: cfg.out.clone(),
        body,
        passed: None,
    })
}

pub fn sde(ctx: &Context, cfg: &mut SdeConfig) -> Result<Artifact, Failure> {
    if cfg.obs_times.is_empty() {
        cfg.obs_times = uniform_times(cfg.t_final);
    }
    let ec = SdeEnsembleConfig::new(cfg.a, cfg.z0, cfg.t_final, cfg.dt, cfg.paths, cfg.seed)
        .with_obs_times(cfg.obs_times.clone());
    let ens = sde_ensemble(&ec)?;
    let absorbing = ec.policy == BoundaryPolicy::Absorb;
    let body = match cfg.format {
        Format::Csv => {
            let mut s = csv_header(
                ctx,
                "sde",
                &*cfg,
                "path,t,z,absorbed_flag,hit_time_lower,hit_time_upper",
            );
            for p in &ens.paths {
                let (lo, hi) = (opt(p.outcome.hit_lower), opt(p.outcome.hit_upper));
                for (t, z) in cfg.obs_times.iter().zip(&p.obs) {
                    let flag = u8::from(absorbing && *z <= 0.0);
                    let _ = writeln!(s, "{},{t},{z},{flag},{lo},{hi}", p.path);
                }
            }
            s
        }
        Format::Json => json_doc(ctx, "sde", &*cfg, json!(ens.paths)),
    };
    Ok(Artifact {
        out: cfg.out.clone(),
        body,
        passed: None,
    })
}

pub fn boundaries(ctx: &Context, cfg: &BoundariesConfig) -> Result<Artifact, Failure> {
    let classification = classify_boundaries(cfg.a)?;
    let ladder = cfg
        .eps
        .iter()
        .map(|&e| feller_integrals(cfg.a, cfg.r, e))
        .collect::<Result<Vec<_>, _>>()?;
    let data = json!({ "classification": classification, "ladder": ladder });
    Ok(Artifact {
        out: cfg.out.clone(),
        body: json_doc(ctx, "boundaries", cfg, data),
        passed: None,
    })
}

pub fn stationary(ctx: &Context, cfg: &StationaryConfig) -> Result<Artifact, Failure> {
    if cfg.points == 0 || cfg.bins == 0 {
        return Err(Failure::Validation(anyhow!(
            "points and bins must be positive"
        )));
    }
    let d = StationaryDensity::new(cfg.a)?;
    let zs = theta_grid(cfg.points);
    let body = match cfg.format {
        Format::Csv => {
            let mut s = csv_header(ctx, "stationary", cfg, "z,pdf,cdf");
            for z in zs {
                let _ = writeln!(s, "{z},{},{}", d.pdf(z), d.cdf(z));
            }
            s
        }
        Format::Json => {
            let table: Vec<[f64; 3]> = zs.iter().map(|&z| [z, d.pdf(z), d.cdf(z)]).collect();
            let data = json!({
                "normalization": d.normalization(),
                "mean": d.expect(|z| z),
                "equal_mass_edges": d.equal_mass_edges(cfg.bins),
                "table": table,
            });
            json_doc(ctx, "stationary", cfg, data)
        }
    };
    Ok(Artifact {
        out: cfg.out.clone(),
        body,
        passed: None,
    })
}

struct Report {
    params: Value,
    statistic: f64,
    threshold: f64,
    pass: bool,
}

fn verify_stationarity_exact(cfg: &VerifyConfig) -> Result<Report, Failure> {
    let (n, a) = (cfg.n.unwrap_or(5), cfg.a.unwrap_or(0.7));
    let p = ModelParams::new(a)?;
    let g = generator_matrix(n, &p)?;
    let mu = invariant_measure(n, &p)?;
    let stat = g
        .left_apply(&mu.weights)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(Report {
        params: json!({ "n": n, "a": a }),
        statistic: stat,
        threshold: 1e-10,
        pass: stat <= 1e-10,
    })
}

fn verify_prop21(cfg: &VerifyConfig) -> Result<Report, Failure> {
    let (n, a) = (cfg.n.unwrap_or(180), cfg.a.unwrap_or(2.0));
    if n < 9 {
        return Err(Failure::Validation(anyhow!("prop21 needs n >= 9")));
    }
    let ns = [n / 9, n / 3, n];
    let gaps = ns
        .iter()
        .map(|&k| Ok(check_prop21(k, a, &[[1, 1, 1]])?[0].gap))
        .collect::<Result<Vec<f64>, Failure>>()?;
    let ratio = gaps[2] / gaps[0];
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(Report {
        params: json!({ "n": ns, "a": a, "powers": [1, 1, 1], "gaps": gaps }),
        statistic: ratio,
        threshold: 0.15,
        pass: decreasing && ratio <= 0.15,
    })
}

fn verify_prop22(cfg: &VerifyConfig) -> Result<Report, Failure> {
    let (n, a, runs) = (
        cfg.n.unwrap_or(2000),
        cfg.a.unwrap_or(1.0),
        cfg.runs.unwrap_or(100),
    );
    let x0 = SimplexPoint::new(0.34, 0.33, 0.33)?;
    let t: Vec<f64> = (0..=100).map(|k| 0.05 * k as f64).collect();
    let curve = check_prop22(n, a, &x0, &t, runs, cfg.seed)?;
    let stat = curve.max_gap();
    Ok(Report {
        params: json!({ "n": n, "a": a, "runs": runs, "seed": cfg.seed, "x0": [0.34, 0.33, 0.33], "horizon": 5.0 }),
        statistic: stat,
        threshold: 0.05,
        pass: stat <= 0.05,
    })
}

fn verify_thm31(cfg: &VerifyConfig) -> Result<Report, Failure> {
    let n = cfg.n.unwrap_or(1000);
    let a = cfg.a.unwrap_or(2.0);
    let runs = cfg.runs.unwrap_or(500);
    let paths = cfg.paths.unwrap_or(5000);
    let z0 = cfg.z0.unwrap_or(1.0 / 54.0);
    let t_obs = [0.1, 0.2, 0.4];
    let r = check_theorem31(n, a, z0, &t_obs, runs, paths, cfg.seed)?;
    let ks: Vec<f64> = r.rows.iter().map(|x| x.ks).collect();
    let stat = ks.iter().copied().fold(0.0, f64::max);
    Ok(Report {
        params: json!({
            "n": n, "a": a, "z0": z0, "runs": runs, "paths": paths, "seed": cfg.seed,
            "t_obs": t_obs, "ks": ks, "z_start": r.z_start,
        }),
        statistic: stat,
        threshold: 0.1,
        pass: stat <= 0.1,
    })
}

fn verify_prop27(cfg: &VerifyConfig) -> Result<Report, Failure> {
    let a = cfg.a.unwrap_or(2.0);
    let d = StationaryDensity::new(a)?;
    let fs = [
        Polynomial(vec![0.0, 1.0]),
        Polynomial(vec![0.0, 0.0, 1.0]),
        Polynomial(vec![0.0, 0.0, 0.0, 1.0]),
        Polynomial(vec![1.0, -30.0, 200.0, 5000.0]),
        Polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0]),
    ];
    let stat = fs
        .iter()
        .map(|f| {
            let v = d.expect(|z| avg_generator_apply(f, z, a));
            v.abs() / d.expect(|z| avg_generator_apply(f, z, a).abs())
        })
        .fold(0.0, f64::max);
    Ok(Report {
        params: json!({ "a": a, "test_functions": fs.iter().map(|f| &f.0).collect::<Vec<_>>() }),
        statistic: stat,
        threshold: 1e-6,
        pass: stat <= 1e-6,
    })
}

fn verify_feller(cfg: &VerifyConfig) -> Result<Report, Failure> {
    let a = cfg.a.unwrap_or(0.5);
    let r = cfg.z0.unwrap_or(1.0 / 54.0);
    let eps = [1e-3, 1e-5, 1e-7];
    let ladder = eps
        .iter()
        .map(|&e| feller_integrals(a, r, e))
        .collect::<Result<Vec<_>, _>>()?;
    let v: Vec<f64> = ladder.iter().map(|f| f.lower_s_dp).collect();
    let ratio = (v[2] - v[1]) / (v[1] - v[0]);
    let converges = ratio < 0.5;
    let classification = classify_boundaries(a)?;
    Ok(Report {
        params: json!({
            "a": a, "r": r, "eps": eps, "lower_s_dp": v,
            "classification": classification,
        }),
        statistic: ratio,
        threshold: 0.5,
        pass: converges == (a < 1.0),
    })
}

pub fn verify(ctx: &Context, cfg: &VerifyConfig) -> Result<Artifact, Failure> {
    let check = cfg
        .check
        .ok_or_else(|| Failure::Validation(anyhow!("verify needs a check name")))?;
    let report = match check {
        Check::StationarityExact => verify_stationarity_exact(cfg)?,
        Check::Prop21 => verify_prop21(cfg)?,
        Check::Prop22 => verify_prop22(cfg)?,
        Check::Thm31 => verify_thm31(cfg)?,
        Check::Prop27 => verify_prop27(cfg)?,
        Check::Feller => verify_feller(cfg)?,
    };
    let mut doc = json!({
        "check": check.name(),
        "params": report.params,
        "statistic": report.statistic,
        "threshold": report.threshold,
        "pass": report.pass,
    });
    if let Some(t) = &ctx.timestamp {
        doc["generated"] = json!(t);
    }
    let mut body = serde_json::to_string_pretty(&doc).expect("plain data");
    body.push('\n');
    Ok(Artifact {
        out: cfg.out.clone(),
        body,
        passed: Some(report.pass),
    })
}
