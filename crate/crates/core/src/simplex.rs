//! Shared geometry of the two-simplex: barycentric points, integer grid
//! states, cyclic jumps and the conserved product `z = x1 x2 x3`.
//!
//! Species are indexed `0, 1, 2` with cyclic successor `i + 1 mod 3`; a jump
//! `i` moves one particle from species `i` to species `i + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest value of `z` on the simplex, attained only at the centre.
pub const Z_MAX: f64 = 1.0 / 27.0;

/// Deviation of the coordinate sum that is silently renormalized.
const RENORMALIZE_TOL: f64 = 1e-9;

#[inline]
pub(crate) const fn next(i: usize) -> usize {
    (i + 1) % 3
}

#[inline]
pub(crate) const fn prev(i: usize) -> usize {
    (i + 2) % 3
}

/// A point of the two-simplex with all three barycentric coordinates stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    x: [f64; 3],
}

impl SimplexPoint {
    /// Builds a point, renormalizing when the coordinate sum is off by at most
    /// `1e-9`. Larger deviations and negative coordinates are rejected.
    pub fn new(x1: f64, x2: f64, x3: f64) -> Result<Self> {
        let coords = [x1, x2, x3];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint(x1, x2, x3, "non-finite coordinate"));
        }
        if coords.iter().any(|&c| c < -RENORMALIZE_TOL) {
            return Err(Error::InvalidPoint(x1, x2, x3, "negative coordinate"));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::InvalidPoint(
                x1,
                x2,
                x3,
                "coordinates do not sum to 1",
            ));
        }
        let clamped = coords.map(|c| c.max(0.0));
        let s: f64 = clamped.iter().sum();
        Ok(Self {
            x: clamped.map(|c| (c / s).min(1.0)),
        })
    }

    pub fn from_array(x: [f64; 3]) -> Result<Self> {
        Self::new(x[0], x[1], x[2])
    }

    /// Wraps coordinates without validation. Used for intermediate integrator
    /// stages where the sum is conserved by construction.
    pub(crate) const fn raw(x: [f64; 3]) -> Self {
        Self { x }
    }

    pub fn centre() -> Self {
        Self { x: [1.0 / 3.0; 3] }
    }

    /// Vertex `v_i`: all mass on species `i`.
    pub fn vertex(i: usize) -> Self {
        let mut x = [0.0; 3];
        x[i % 3] = 1.0;
        Self { x }
    }

    #[inline]
    pub fn coords(&self) -> [f64; 3] {
        self.x
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.x[i % 3]
    }

    /// Cyclic relabelling `(x1, x2, x3) -> (x2, x3, x1)`.
    pub fn rotate(&self) -> Self {
        Self {
            x: [self.x[1], self.x[2], self.x[0]],
        }
    }

    pub fn l1_distance(&self, other: &SimplexPoint) -> f64 {
        self.x
            .iter()
            .zip(other.x.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn min_coord(&self) -> f64 {
        self.x[0].min(self.x[1]).min(self.x[2])
    }
}

/// The conserved product `x1 x2 x3`, in `[0, 1/27]`.
#[inline]
pub fn z_of(p: &SimplexPoint) -> f64 {
    p.x[0] * p.x[1] * p.x[2]
}

#[inline]
pub(crate) fn z_raw(x: &[f64; 3]) -> f64 {
    x[0] * x[1] * x[2]
}

/// Occupation numbers of the three species on the simplicial grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountState {
    counts: [u64; 3],
}

impl CountState {
    pub const fn new(n1: u64, n2: u64, n3: u64) -> Self {
        Self {
            counts: [n1, n2, n3],
        }
    }

    pub const fn from_array(counts: [u64; 3]) -> Self {
        Self { counts }
    }

    /// Total population `n`.
    #[inline]
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    #[inline]
    pub fn counts(&self) -> [u64; 3] {
        self.counts
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        self.counts[i % 3]
    }

    /// Grid state closest to `p` with total `n`, using largest-remainder
    /// rounding so the total is exact.
    pub fn nearest(p: &SimplexPoint, n: u64) -> Self {
        let scaled = p.coords().map(|c| c * n as f64);
        let mut counts = scaled.map(|c| c.floor() as u64);
        let mut deficit = n - counts.iter().sum::<u64>().min(n);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| {
            let ri = scaled[i] - scaled[i].floor();
            let rj = scaled[j] - scaled[j].floor();
            rj.total_cmp(&ri).then(i.cmp(&j))
        });
        for &i in order.iter().cycle() {
            if deficit == 0 {
                break;
            }
            counts[i] += 1;
            deficit -= 1;
        }
        Self { counts }
    }

    /// Whether all particles share one species (a vertex of the grid).
    pub fn is_vertex(&self) -> Option<usize> {
        let n = self.n();
        self.counts.iter().position(|&c| c == n && n > 0)
    }
}

/// Barycentric coordinates `n_i / n`.
pub fn to_point(s: &CountState) -> Result<SimplexPoint> {
    let n = s.n();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let nf = n as f64;
    Ok(SimplexPoint::raw(s.counts.map(|c| c as f64 / nf)))
}

/// A cyclic jump: one particle moves from species `i` to species `i + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JumpVector(usize);

impl JumpVector {
    pub fn new(i: usize) -> Result<Self> {
        if i < 3 {
            Ok(Self(i))
        } else {
            Err(Error::OutOfRange {
                name: "jump index",
                value: i as f64,
                range: "{0, 1, 2}",
            })
        }
    }

    #[inline]
    pub fn source(&self) -> usize {
        self.0
    }

    #[inline]
    pub fn target(&self) -> usize {
        next(self.0)
    }

    pub fn all() -> [JumpVector; 3] {
        [Self(0), Self(1), Self(2)]
    }
}

/// Applies a jump, rejecting moves out of an empty species.
pub fn apply_jump(s: &CountState, j: JumpVector) -> Result<CountState> {
    let [n1, n2, n3] = s.counts;
    if s.counts[j.source()] == 0 {
        return Err(Error::EmptySource {
            jump: j.source(),
            n1,
            n2,
            n3,
        });
    }
    let mut counts = s.counts;
    counts[j.source()] -= 1;
    counts[j.target()] += 1;
    Ok(CountState { counts })
}

/// The intrinsic rate `a >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    a: f64,
}

impl ModelParams {
    pub fn new(a: f64) -> Result<Self> {
        if a.is_finite() && a >= 0.0 {
            Ok(Self { a })
        } else {
            Err(Error::OutOfRange {
                name: "a",
                value: a,
                range: "[0, inf)",
            })
        }
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn z_examples() {
        assert!((z_of(&SimplexPoint::centre()) - Z_MAX).abs() < 1e-18);
        assert_eq!(z_of(&SimplexPoint::new(1.0, 0.0, 0.0).unwrap()), 0.0);
        assert!((z_of(&SimplexPoint::new(0.5, 0.25, 0.25).unwrap()) - 0.03125).abs() < 1e-17);
    }

    #[test]
    fn to_point_examples() {
        let p = to_point(&CountState::new(2, 0, 0)).unwrap();
        assert_eq!(p.coords(), [1.0, 0.0, 0.0]);
        let p = to_point(&CountState::new(1, 1, 1)).unwrap();
        assert!(p.coords().iter().all(|&c| (c - 1.0 / 3.0).abs() < 1e-16));
        let p = to_point(&CountState::new(3, 1, 0)).unwrap();
        assert_eq!(p.coords(), [0.75, 0.25, 0.0]);
        assert_eq!(
            to_point(&CountState::new(0, 0, 0)),
            Err(Error::EmptyPopulation)
        );
    }

    #[test]
    fn jump_examples() {
        let s = CountState::new(1, 1, 1);
        let s = apply_jump(&s, JumpVector::new(0).unwrap()).unwrap();
        assert_eq!(s, CountState::new(0, 2, 1));
        let s = apply_jump(&s, JumpVector::new(1).unwrap()).unwrap();
        assert_eq!(s, CountState::new(0, 1, 2));
        let err = apply_jump(&CountState::new(2, 0, 0), JumpVector::new(1).unwrap());
        assert!(matches!(err, Err(Error::EmptySource { jump: 1, .. })));
        assert!(JumpVector::new(3).is_err());
    }

    #[test]
    fn renormalization_policy() {
        let p = SimplexPoint::new(0.5 + 5e-10, 0.25, 0.25).unwrap();
        let s: f64 = p.coords().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(SimplexPoint::new(0.5 + 1e-6, 0.25, 0.25).is_err());
        assert!(SimplexPoint::new(1.1, -0.1, 0.0).is_err());
        assert!(SimplexPoint::new(f64::NAN, 0.5, 0.5).is_err());
    }

    #[test]
    fn nearest_grid_point() {
        let s = CountState::nearest(&SimplexPoint::centre(), 10);
        assert_eq!(s.n(), 10);
        assert_eq!(s.counts().iter().max(), Some(&4));
        let s = CountState::nearest(&SimplexPoint::new(0.5, 0.3, 0.2).unwrap(), 2000);
        assert_eq!(s, CountState::new(1000, 600, 400));
    }

    #[test]
    fn params_reject_negative() {
        assert!(ModelParams::new(-0.1).is_err());
        assert!(ModelParams::new(f64::INFINITY).is_err());
        assert_eq!(ModelParams::new(0.0).unwrap().a(), 0.0);
    }

    fn any_state() -> impl Strategy<Value = CountState> {
        (0u64..200, 0u64..200, 0u64..200).prop_map(|(a, b, c)| CountState::new(a, b, c))
    }

    proptest! {
        #[test]
        fn z_cyclic_invariance(x1 in 0.0f64..1.0, t in 0.0f64..1.0) {
            let x2 = (1.0 - x1) * t;
            let p = SimplexPoint::new(x1, x2, 1.0 - x1 - x2).unwrap();
            let z = z_of(&p);
            prop_assert!((z_of(&p.rotate()) - z).abs() <= 1e-17);
            prop_assert!((z_of(&p.rotate().rotate()) - z).abs() <= 1e-17);
            prop_assert!(z <= Z_MAX + 1e-17);
        }

        #[test]
        fn jumps_conserve_population_and_move_z_by_at_most_one_over_n(s in any_state(), j in 0usize..3) {
            let jump = JumpVector::new(j).unwrap();
            match apply_jump(&s, jump) {
                Ok(t) => {
                    prop_assert_eq!(t.n(), s.n());
                    let dz = z_of(&to_point(&t).unwrap()) - z_of(&to_point(&s).unwrap());
                    prop_assert!(dz.abs() <= 1.0 / s.n() as f64 + 1e-15);
                }
                Err(_) => prop_assert_eq!(s.get(j), 0),
            }
        }
    }
}
