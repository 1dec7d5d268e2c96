//! The finite-population jump process.
//!
//! Channel `i` moves one particle from species `i` to species `i + 1` at rate
//! `n_i (a + n_{i+1})`. Simulation is the direct stochastic simulation
//! algorithm; for small `n` the generator is also assembled explicitly and
//! checked against the closed-form product invariant measure
//! `μ(n1, n2, n3) ∝ Π Γ(n_i + a) / Γ(n_i + 1)`.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_range, Error, Result};
use crate::rng::{stream_rng, SimRng};
use crate::simplex::{apply_jump, next, to_point, z_of, CountState, JumpVector, ModelParams};

/// Largest population for which the generator matrix is assembled.
pub const MAX_MATRIX_N: u64 = 60;

/// Channel rates of one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateVector {
    pub r: [f64; 3],
    pub total: f64,
}

/// `r_i = n_i (a + n_{i+1})`, with the integer product formed before
/// conversion.
pub fn rates(s: &CountState, params: &ModelParams) -> RateVector {
    let c = s.counts();
    let a = params.a();
    let mut r = [0.0; 3];
    for (i, ri) in r.iter_mut().enumerate() {
        let ni = c[i];
        let pair = (ni as u128 * c[next(i)] as u128) as f64;
        *ri = if ni == 0 { 0.0 } else { pair + a * ni as f64 };
    }
    RateVector {
        r,
        total: r[0] + r[1] + r[2],
    }
}

/// Where and when an absorbing vertex was reached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Absorption {
    pub time: f64,
    pub vertex: usize,
}

/// Event-by-event simulator. The next event time is drawn ahead and kept
/// pending, so stopping at arbitrary times does not bias the path.
#[derive(Clone, Debug)]
pub struct ParticleSim {
    state: CountState,
    params: ModelParams,
    t: f64,
    pending: Option<f64>,
    absorbed: Option<Absorption>,
    events: u64,
    rng: SimRng,
}

impl ParticleSim {
    pub fn new(initial: CountState, params: ModelParams, rng: SimRng) -> Result<Self> {
        if initial.n() == 0 {
            return Err(Error::EmptyPopulation);
        }
        Ok(Self {
            state: initial,
            params,
            t: 0.0,
            pending: None,
            absorbed: None,
            events: 0,
            rng,
        })
    }

    pub fn state(&self) -> CountState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn absorption(&self) -> Option<Absorption> {
        self.absorbed
    }

    /// Runs until time `t_end` (or absorption), calling `visit(t, state, jump)`
    /// after every event. On return `time() == t_end` unless absorbed earlier.
    pub fn run_until<V>(&mut self, t_end: f64, mut visit: V)
    where
        V: FnMut(f64, &CountState, JumpVector),
    {
        if self.absorbed.is_some() {
            self.t = self.t.max(t_end);
            return;
        }
        loop {
            let rv = rates(&self.state, &self.params);
            if rv.total <= 0.0 {
                self.absorbed = Some(Absorption {
                    time: self.t,
                    vertex: self.state.is_vertex().unwrap_or(0),
                });
                self.t = self.t.max(t_end);
                return;
            }
            let next_time = match self.pending {
                Some(s) => s,
                None => {
                    let e: f64 = self.rng.sample(Exp1);
                    let s = self.t + e / rv.total;
                    self.pending = Some(s);
                    s
                }
            };
            if next_time > t_end {
                self.t = self.t.max(t_end);
                return;
            }
            let u = self.rng.random::<f64>() * rv.total;
            let mut ch = 2;
            let mut acc = 0.0;
            for (k, r) in rv.r.iter().enumerate() {
                acc += r;
                if u < acc {
                    ch = k;
                    break;
                }
            }
            // Rounding can land on a zero-rate channel; fall back to a live one.
            if rv.r[ch] == 0.0 {
                ch = (0..3)
                    .rev()
                    .find(|&k| rv.r[k] > 0.0)
                    .expect("positive total");
            }
            let j = JumpVector::new(ch).expect("channel index below 3");
            self.state =
                apply_jump(&self.state, j).expect("positive rate implies non-empty source");
            self.t = next_time;
            self.pending = None;
            self.events += 1;
            visit(self.t, &self.state, j);
        }
    }
}

/// Complete event log of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpTrajectory {
    pub initial: CountState,
    pub params: ModelParams,
    pub seed: u64,
    pub t_final: f64,
    pub events: Vec<(f64, usize)>,
    pub absorption: Option<Absorption>,
}

impl JumpTrajectory {
    /// State after the last event at or before `t`.
    pub fn state_at(&self, t: f64) -> CountState {
        let k = self.events.partition_point(|&(s, _)| s <= t);
        self.events[..k].iter().fold(self.initial, |s, &(_, j)| {
            apply_jump(&s, JumpVector::new(j).expect("logged index")).expect("logged jump is valid")
        })
    }

    pub fn final_state(&self) -> CountState {
        self.state_at(f64::INFINITY)
    }
}

/// Full-log simulation; the generator is stream 0 of `seed`.
pub fn ssa_run(
    initial: CountState,
    params: ModelParams,
    t_final: f64,
    seed: u64,
) -> Result<JumpTrajectory> {
    check_range("t_final", t_final, t_final >= 0.0, "[0, inf)")?;
    let mut sim = ParticleSim::new(initial, params, stream_rng(seed, 0))?;
    let mut events = Vec::new();
    sim.run_until(t_final, |t, _, j| events.push((t, j.source())));
    Ok(JumpTrajectory {
        initial,
        params,
        seed,
        t_final,
        events,
        absorption: sim.absorption(),
    })
}

/// States of one run at given observation times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedRun {
    pub run: u64,
    pub states: Vec<CountState>,
    pub absorption: Option<Absorption>,
    pub events: u64,
    /// Smallest coordinate `min_i n_i / n` seen up to the last observation.
    pub min_coordinate: f64,
}

fn check_times(obs_times: &[f64]) -> Result<()> {
    for w in obs_times.windows(2) {
        check_range("observation time", w[1], w[1] >= w[0], "ascending")?;
    }
    if let Some(&t0) = obs_times.first() {
        check_range("observation time", t0, t0 >= 0.0, "[0, inf)")?;
    }
    Ok(())
}

fn observe_with(
    initial: CountState,
    params: ModelParams,
    obs_times: &[f64],
    run: u64,
    rng: SimRng,
) -> Result<ObservedRun> {
    let mut sim = ParticleSim::new(initial, params, rng)?;
    let n = initial.n() as f64;
    let min_of = |s: &CountState| s.counts().iter().copied().min().unwrap_or(0) as f64 / n;
    let mut min_coordinate = min_of(&initial);
    let mut states = Vec::with_capacity(obs_times.len());
    for &t in obs_times {
        sim.run_until(t, |_, s, _| min_coordinate = min_coordinate.min(min_of(s)));
        states.push(sim.state());
    }
    Ok(ObservedRun {
        run,
        states,
        absorption: sim.absorption(),
        events: sim.events(),
        min_coordinate,
    })
}

/// Single run recorded only at `obs_times` (ascending); generator is stream 0
/// of `seed`.
pub fn ssa_observe(
    initial: CountState,
    params: ModelParams,
    obs_times: &[f64],
    seed: u64,
) -> Result<ObservedRun> {
    check_times(obs_times)?;
    observe_with(initial, params, obs_times, 0, stream_rng(seed, 0))
}

/// `runs` independent runs in parallel; run `r` uses stream `r` of `seed`, and
/// results are returned in run order.
pub fn particle_ensemble(
    initial: CountState,
    params: ModelParams,
    obs_times: &[f64],
    runs: u64,
    seed: u64,
) -> Result<Vec<ObservedRun>> {
    check_times(obs_times)?;
    (0..runs)
        .into_par_iter()
        .map(|r| observe_with(initial, params, obs_times, r, stream_rng(seed, r)))
        .collect()
}

/// All states of total `n`, ordered by `(n1, n2)` lexicographically.
pub fn enumerate_states(n: u64) -> Vec<CountState> {
    let mut out = Vec::with_capacity(((n + 1) * (n + 2) / 2) as usize);
    for n1 in 0..=n {
        for n2 in 0..=n - n1 {
            out.push(CountState::new(n1, n2, n - n1 - n2));
        }
    }
    out
}

/// Position of `s` in [`enumerate_states`] for its total.
pub fn state_index(s: &CountState) -> usize {
    let n = s.n();
    let [n1, n2, _] = s.counts();
    // Rows with first coordinate k < n1 hold n - k + 1 states each.
    let rows = n1 * (n + 1) - n1 * n1.saturating_sub(1) / 2;
    (rows + n2) as usize
}

/// Sparse generator over all states of total `n`.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    pub n: u64,
    pub states: Vec<CountState>,
    /// Off-diagonal entries `(column, rate)` of each row.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub diagonal: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// `μ^T Q`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = mu.iter().zip(&self.diagonal).map(|(m, d)| m * d).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, q) in row {
                out[j] += mu[i] * q;
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.diagonal)
            .map(|(row, d)| d + row.iter().map(|&(_, q)| q).sum::<f64>())
            .collect()
    }

    /// Entry `(i, j)`, zero when absent.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        self.rows[i]
            .iter()
            .filter(|&&(c, _)| c == j)
            .map(|&(_, q)| q)
            .sum()
    }
}

pub fn generator_matrix(n: u64, params: &ModelParams) -> Result<GeneratorMatrix> {
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    if n > MAX_MATRIX_N {
        return Err(Error::TooLarge {
            n,
            max: MAX_MATRIX_N,
        });
    }
    let states = enumerate_states(n);
    let mut rows = Vec::with_capacity(states.len());
    let mut diagonal = Vec::with_capacity(states.len());
    for s in &states {
        let rv = rates(s, params);
        let mut row = Vec::with_capacity(3);
        for j in JumpVector::all() {
            if rv.r[j.source()] > 0.0 {
                let t = apply_jump(s, j).expect("positive rate implies non-empty source");
                row.push((state_index(&t), rv.r[j.source()]));
            }
        }
        rows.push(row);
        diagonal.push(-rv.total);
    }
    Ok(GeneratorMatrix {
        n,
        states,
        rows,
        diagonal,
    })
}

/// Probability weights over all states of one total.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridMeasure {
    pub n: u64,
    pub states: Vec<CountState>,
    pub weights: Vec<f64>,
}

impl GridMeasure {
    /// Expectation of `f` evaluated at the barycentric point of each state.
    pub fn expect<F: Fn(&crate::simplex::SimplexPoint) -> f64>(&self, f: F) -> f64 {
        let mut sum = NeumaierSum::default();
        for (s, w) in self.states.iter().zip(&self.weights) {
            sum.add(w * f(&to_point(s).expect("n > 0")));
        }
        sum.value()
    }

    /// `(z, weight)` pairs sorted by `z`.
    pub fn z_law(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self
            .states
            .iter()
            .zip(&self.weights)
            .map(|(s, &w)| (z_of(&to_point(s).expect("n > 0")), w))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// The product invariant measure, with weights formed in log space.
pub fn invariant_measure(n: u64, params: &ModelParams) -> Result<GridMeasure> {
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let a = params.a();
    check_range("a", a, a > 0.0, "(0, inf) for the invariant measure")?;
    let states = enumerate_states(n);
    let log_factor = |k: u64| ln_gamma(k as f64 + a) - ln_gamma(k as f64 + 1.0);
    let table: Vec<f64> = (0..=n).map(log_factor).collect();
    let logs: Vec<f64> = states
        .iter()
        .map(|s| s.counts().iter().map(|&k| table[k as usize]).sum())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let mut total = NeumaierSum::default();
    weights.iter().for_each(|&w| total.add(w));
    let total = total.value();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GridMeasure { n, states, weights })
}

/// Independent draws by inverse CDF over the enumerated states.
pub fn sample_invariant(gm: &GridMeasure, count: usize, seed: u64) -> Vec<CountState> {
    let mut cdf = Vec::with_capacity(gm.weights.len());
    let mut acc = NeumaierSum::default();
    for &w in &gm.weights {
        acc.add(w);
        cdf.push(acc.value());
    }
    let total = *cdf.last().unwrap_or(&1.0);
    let last_positive = gm.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(last_positive);
            gm.states[k]
        })
        .collect()
}

/// `q_N g(x) = Σ_i x_i (a/n + x_{i+1}) n^2 (g(x + u_i/n) - g(x))^2` at
/// `x = counts / n`.
pub fn quadratic_operator<G>(g: G, s: &CountState, params: &ModelParams) -> Result<f64>
where
    G: Fn(&crate::simplex::SimplexPoint) -> f64,
{
    let x = to_point(s)?;
    let nf = s.n() as f64;
    let gx = g(&x);
    let mut acc = 0.0;
    for j in JumpVector::all() {
        let i = j.source();
        if s.get(i) == 0 {
            continue;
        }
        let y = to_point(&apply_jump(s, j)?)?;
        let d = g(&y) - gx;
        acc += x.get(i) * (params.a() / nf + x.get(i + 1)) * nf * nf * d * d;
    }
    Ok(acc)
}

/// `n^{1-a} Γ(n x + a) / Γ(n x + 1)`, which tends to `x^{a-1}`.
pub fn wendel_ratio(n: u64, x: f64, a: f64) -> Result<f64> {
    check_range("a", a, a >= 0.0, "[0, inf)")?;
    check_range("x", x, x >= 0.0, "[0, inf)")?;
    if x == 0.0 && a < 1.0 {
        return Err(Error::OutOfRange {
            name: "x",
            value: x,
            range: "(0, inf) when a < 1",
        });
    }
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let nf = n as f64;
    let nx = nf * x;
    Ok(((1.0 - a) * nf.ln() + ln_gamma(nx + a) - ln_gamma(nx + 1.0)).exp())
}
