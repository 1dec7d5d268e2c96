use slowfast_lv::fast::{
    action, integrate_flow, loop_roots, mean_m, period, slow_generator_apply, time_average,
    vector_field, LevelFunction, Polynomial, CENTRE_PERIOD,
};
use slowfast_lv::ode::{Dopri5, OdeOptions};
use slowfast_lv::simplex::{z_of, SimplexPoint, Z_MAX};

fn tight() -> OdeOptions {
    OdeOptions {
        rtol: 1e-12,
        atol: 1e-13,
        ..OdeOptions::default()
    }
}

fn rhs4(y: &[f64; 4]) -> [f64; 4] {
    let (x1, x2, x3) = (y[0], y[1], y[2]);
    let d1 = x1 * (x3 - x2);
    [d1, x2 * (x1 - x3), x3 * (x2 - x1), x2 * d1]
}

/// Period by section crossing: start at `x1 = x_min` with `x2 = x3` and wait
/// for the second sign change of `x2 - x3`. Also returns `∫ x2 dx1` over that
/// time.
fn return_time_oracle(z: f64) -> (f64, f64) {
    let r = loop_roots(z).unwrap();
    let half = 0.5 * (1.0 - r.x_min);
    let mut s = Dopri5::new(rhs4, 0.0, [r.x_min, half, half, 0.0], tight());
    let g = |y: &[f64; 4]| y[1] - y[2];
    s.step(1e3).unwrap();
    let mut sign = g(s.y()) > 0.0;
    let mut crossings = 0;
    loop {
        s.step(1e3).unwrap();
        let now = g(s.y()) > 0.0;
        if now != sign {
            crossings += 1;
            sign = now;
            if crossings == 2 {
                break;
            }
        }
    }
    let (t, _) = s.locate(g, 1e-13);
    // Integrate the action integrand over exactly [0, t] on a fresh solver.
    let mut q = Dopri5::new(rhs4, 0.0, [r.x_min, half, half, 0.0], tight());
    q.run(t, |_, _| {}).unwrap();
    (t, q.y()[3])
}

#[test]
fn period_agrees_with_return_time_oracle() {
    for z in [1.0 / 54.0, 1e-3, 0.035] {
        let (t_star, _) = return_time_oracle(z);
        let t = period(z).unwrap();
        assert!((t / t_star - 1.0).abs() < 1e-6, "z={z}: {t} vs {t_star}");
    }
}

#[test]
fn action_agrees_with_time_integral_oracle() {
    for z in [1.0 / 54.0, 1e-3, 0.035] {
        let (_, a_star) = return_time_oracle(z);
        let a = action(z).unwrap();
        assert!(a < 0.0);
        assert!((a / a_star - 1.0).abs() < 1e-6, "z={z}: {a} vs {a_star}");
    }
}

#[test]
fn mean_m_is_ratio_of_oracles_and_vanishes_at_ends() {
    let (t_star, a_star) = return_time_oracle(1.0 / 54.0);
    let m = mean_m(1.0 / 54.0).unwrap();
    assert!((m / (-a_star / t_star) - 1.0).abs() < 1e-6);
    assert_eq!(mean_m(0.0).unwrap(), 0.0);
    assert_eq!(mean_m(Z_MAX).unwrap(), 0.0);
    let z = 1e-10;
    let limit = 0.5 / (-3.0 * f64::ln(z));
    assert!((mean_m(z).unwrap() - limit).abs() < 1e-2);
    assert!(mean_m(Z_MAX - 1e-12).unwrap() < 1e-10);
    assert!(mean_m(-1e-3).is_err());
}

#[test]
fn period_limits_and_log_blow_up() {
    let t = period(Z_MAX - 1e-8).unwrap();
    assert!((t / CENTRE_PERIOD - 1.0).abs() < 1e-4);
    let ratio = |z: f64| period(z).unwrap() / (-3.0 * z.ln());
    let r8 = ratio(1e-8);
    assert!((0.85..=1.15).contains(&r8));
    assert!((r8 - 1.0).abs() < (ratio(1e-4) - 1.0).abs());
    let mut prev = period(1e-3).unwrap();
    for k in 1..=40 {
        let z = 1e-3 * 10f64.powf(-0.25 * k as f64);
        let t = period(z).unwrap();
        assert!(t > prev, "period not increasing at z={z}");
        prev = t;
    }
}

#[test]
fn action_derivative_is_period() {
    let (lo, hi) = (1e-4, Z_MAX - 1e-4);
    let h = 1e-6;
    for k in 0..20 {
        let z = lo + (hi - lo) * k as f64 / 19.0;
        let d = (action(z + h).unwrap() - action(z - h).unwrap()) / (2.0 * h);
        let t = period(z).unwrap();
        assert!((d / t - 1.0).abs() < 1e-4, "z={z}: {d} vs {t}");
    }
}

#[test]
fn flow_is_a_cyclic_shift_after_a_third_of_the_period() {
    for z in [1e-4, 1e-3, 1.0 / 54.0, Z_MAX - 1e-4] {
        let r = loop_roots(z).unwrap();
        let half = 0.5 * (1.0 - r.x_max);
        let p0 = SimplexPoint::new(r.x_max, half, half).unwrap();
        let t = period(z).unwrap();
        let times: Vec<f64> = (0..20).map(|k| t * k as f64 / 20.0).collect();
        let shifted: Vec<f64> = times.iter().map(|s| s + t / 3.0).collect();
        let base = slowfast_lv::fast::flow_at(&p0, &times).unwrap();
        let later = slowfast_lv::fast::flow_at(&p0, &shifted).unwrap();
        for (p, q) in base.iter().zip(&later) {
            for i in 0..3 {
                assert!(
                    (q.get(i + 1) - p.get(i)).abs() < 1e-6,
                    "z={z}: x_{{i+1}}(t+T/3) != x_i(t)"
                );
            }
        }
    }
}

#[test]
fn time_average_examples() {
    for z in [1e-3, 1.0 / 54.0, 0.03] {
        let avg = time_average(z_of, z).unwrap();
        assert!((avg / z - 1.0).abs() < 1e-6);
        let m = mean_m(z).unwrap();
        for i in 0..3 {
            let (ip, inx) = ((i + 2) % 3, (i + 1) % 3);
            let diff = time_average(
                |p| p.get(i) * p.get(inx).powi(2) - p.get(i) * p.get(ip).powi(2),
                z,
            )
            .unwrap();
            assert!(diff.abs() < 1e-8 * z.max(1e-3), "z={z}, i={i}: {diff}");
            let mi = time_average(|p| -p.get(inx) * vector_field(p)[i], z).unwrap();
            assert!((mi / m - 1.0).abs() < 1e-5, "z={z}, i={i}: {mi} vs {m}");
        }
    }
}

#[test]
fn averaged_slow_generator_matches_closed_form() {
    let tests = [
        Polynomial(vec![0.0, 1.0]),
        Polynomial(vec![0.3, -2.0, 40.0, 500.0]),
        Polynomial(vec![0.0, 0.0, 0.0, 1000.0]),
    ];
    for z in [1.0 / 200.0, 1.0 / 54.0, 1.0 / 30.0] {
        let m = mean_m(z).unwrap();
        for a in [0.0, 1.0, 2.0] {
            for g in &tests {
                let lhs = time_average(|p| slow_generator_apply(g, p, a), z).unwrap();
                let rhs = 3.0 * (a * m - z) * g.d1(z) + 3.0 * z * m * g.d2(z);
                let scale = rhs.abs().max(1e-3);
                assert!(
                    (lhs - rhs).abs() / scale < 1e-5,
                    "z={z}, a={a}: {lhs} vs {rhs}"
                );
            }
        }
    }
}

/// `L_N z` from the full jump expansion at finite `N`, extrapolated to
/// `N = ∞` by fitting `L + c1/N + c2/N^2` (exact, since `z` is cubic and the
/// order-`N` term vanishes identically).
fn finite_n_oracle(p: &SimplexPoint, a: f64) -> f64 {
    let x = p.coords();
    let z = |y: [f64; 3]| y[0] * y[1] * y[2];
    let l_n = |n: f64| {
        let mut acc = 0.0;
        for i in 0..3 {
            let j = (i + 1) % 3;
            let mut y = x;
            y[i] -= 1.0 / n;
            y[j] += 1.0 / n;
            acc += x[i] * (a + n * x[j]) * (z(y) - z(x));
        }
        n * acc
    };
    let (n1, n2, n3) = (8.0, 16.0, 32.0);
    let (l1, l2, l3) = (l_n(n1), l_n(n2), l_n(n3));
    // Solve for L with basis {1, 1/N, 1/N^2}.
    let (u1, u2, u3) = (1.0 / n1, 1.0 / n2, 1.0 / n3);
    let w1 = u2 * u3 / ((u1 - u2) * (u1 - u3));
    let w2 = u1 * u3 / ((u2 - u1) * (u2 - u3));
    let w3 = u1 * u2 / ((u3 - u1) * (u3 - u2));
    w1 * l1 + w2 * l2 + w3 * l3
}

#[test]
fn slow_generator_matches_finite_n_expansion() {
    let g = Polynomial::identity();
    for (pt, a) in [
        ([0.5, 0.3, 0.2], 1.0),
        ([0.5, 0.3, 0.2], 0.0),
        ([0.1, 0.6, 0.3], 2.5),
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0),
    ] {
        let p = SimplexPoint::from_array(pt).unwrap();
        let oracle = finite_n_oracle(&p, a);
        let got = slow_generator_apply(&g, &p, a);
        assert!(
            (got - oracle).abs() < 1e-10,
            "{pt:?}, a={a}: {got} vs {oracle}"
        );
    }
}

#[test]
fn long_flow_stays_on_its_level() {
    let p0 = SimplexPoint::new(0.9, 0.05, 0.05).unwrap();
    let traj = integrate_flow(&p0, 200.0, 1.0).unwrap();
    assert!(traj.max_z_drift() <= 1e-8);
}
