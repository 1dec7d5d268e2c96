use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use slowfast_lv::analysis::{
    check_prop21, check_theorem31, dirichlet_moment, ks_distance, tv_distance, weighted_bin_masses,
    EmpiricalLaw, EnsembleRecord,
};
use slowfast_lv::particle::{invariant_measure, particle_ensemble};
use slowfast_lv::rng::stream_rng;
use slowfast_lv::sde::StationaryDensity;
use slowfast_lv::simplex::{CountState, ModelParams};

/// Mean and standard error of `x1^k1 x2^k2 x3^k3` over Dirichlet(a, a, a)
/// draws built from normalized Gamma variates.
fn monte_carlo_moment(a: f64, powers: [i32; 3], count: usize, seed: u64) -> (f64, f64) {
    let gamma = Gamma::new(a, 1.0).unwrap();
    let mut rng = stream_rng(seed, 0);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..count {
        let g: [f64; 3] = std::array::from_fn(|_| gamma.sample(&mut rng));
        let t = g[0] + g[1] + g[2];
        let v: f64 = (0..3).map(|i| (g[i] / t).powi(powers[i])).product();
        s1 += v;
        s2 += v * v;
    }
    let n = count as f64;
    let mean = s1 / n;
    (mean, ((s2 / n - mean * mean) / n).sqrt())
}

#[test]
fn dirichlet_moments_match_monte_carlo() {
    for (a, powers, seed) in [
        (1.0, [1, 1, 1], 1u64),
        (2.0, [2, 0, 0], 2),
        (0.5, [1, 2, 0], 3),
    ] {
        let exact = dirichlet_moment(a, powers.map(|p| p as u32)).unwrap();
        let (mean, se) = monte_carlo_moment(a, powers, 10_000_000, seed);
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "a={a}: {mean} vs {exact} (se {se})"
        );
    }
}

#[test]
fn uniform_samples_respect_the_dkw_bound() {
    for seed in 0..5 {
        let mut r = stream_rng(seed, 0);
        let u: Vec<f64> = (0..10_000).map(|_| r.random()).collect();
        let v: Vec<f64> = (0..10_000).map(|_| r.random()).collect();
        let d = ks_distance(
            &EmpiricalLaw::new(u).unwrap(),
            &EmpiricalLaw::new(v).unwrap(),
        );
        assert!(d <= 0.03, "seed={seed}: {d}");
    }
}

#[test]
fn finite_n_moments_approach_dirichlet() {
    for a in [0.5, 2.0] {
        let gaps: Vec<f64> = [20, 60, 180]
            .iter()
            .map(|&n| check_prop21(n, a, &[[1, 1, 1]]).unwrap()[0].gap)
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "a={a}: {gaps:?}");
        assert!(gaps[2] <= 0.15 * gaps[0], "a={a}: {gaps:?}");
    }
    for row in check_prop21(40, 1.0, &[[1, 0, 0], [0, 0, 1]]).unwrap() {
        assert!((row.exact - 1.0 / 3.0).abs() < 1e-14);
    }
}

#[test]
fn grid_law_of_z_is_close_to_the_density() {
    let d = StationaryDensity::new(2.0).unwrap();
    let edges = d.equal_mass_edges(30);
    let grid = invariant_measure(120, &ModelParams::new(2.0).unwrap()).unwrap();
    let masses = weighted_bin_masses(&grid.z_law(), &edges);
    let tv = tv_distance(&masses, &[1.0 / 30.0; 30]);
    assert!(tv <= 0.05, "TV {tv}");
}

#[test]
fn averaging_report_at_time_zero_and_exit_mass() {
    let r = check_theorem31(400, 2.0, 1.0 / 54.0, &[0.0], 50, 500, 3).unwrap();
    assert!(r.rows[0].ks <= 0.05);

    let r = check_theorem31(500, 0.0, 1.0 / 54.0, &[1.0], 400, 4000, 5).unwrap();
    let row = &r.rows[0];
    assert!(row.sde_absorbed > 0.0);
    assert!(
        (row.particle_absorbed - row.sde_absorbed).abs() <= 0.05,
        "{} vs {}",
        row.particle_absorbed,
        row.sde_absorbed
    );
}

#[test]
fn ensemble_records_are_reproducible_from_metadata() {
    let params = ModelParams::new(1.5).unwrap();
    let start = CountState::new(40, 30, 30);
    let times = [0.0, 0.01, 0.02];
    let make = || {
        let runs = particle_ensemble(start, params, &times, 6, 21).unwrap();
        EnsembleRecord::from_particle(100, 1.5, 21, &times, &runs)
    };
    let (a, b) = (make(), make());
    assert_eq!(a, b);
    assert_eq!(a.values.len(), 6);
    assert!(a.column(0).iter().all(|&z| z == 0.4 * 0.3 * 0.3));
    let json = serde_json::to_string(&a).unwrap();
    let back: EnsembleRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}

proptest! {
    #[test]
    fn ks_is_a_symmetric_bounded_distance(
        x in prop::collection::vec(-5.0f64..5.0, 1..60),
        y in prop::collection::vec(-5.0f64..5.0, 1..60),
    ) {
        let p = EmpiricalLaw::new(x).unwrap();
        let q = EmpiricalLaw::new(y).unwrap();
        let d = ks_distance(&p, &q);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_distance(&q, &p));
        prop_assert_eq!(ks_distance(&p, &p), 0.0);
        for w in p.samples().windows(2) {
            prop_assert!(p.cdf(w[0]) <= p.cdf(w[1]));
        }
    }

    #[test]
    fn tv_is_bounded_by_one(w in prop::collection::vec(0.0f64..1.0, 2..40)) {
        let total: f64 = w.iter().sum::<f64>().max(1e-12);
        let p: Vec<f64> = w.iter().map(|v| v / total).collect();
        let q = vec![1.0 / w.len() as f64; w.len()];
        let d = tv_distance(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
    }
}
