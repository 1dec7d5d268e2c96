use thiserror::Error;

/// Errors raised by the simulation and quadrature routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid simplex point ({0}, {1}, {2}): {3}")]
    InvalidPoint(f64, f64, f64, &'static str),

    #[error("population size must be positive")]
    EmptyPopulation,

    #[error("jump {jump} from empty species in state ({n1}, {n2}, {n3})")]
    EmptySource {
        jump: usize,
        n1: u64,
        n2: u64,
        n3: u64,
    },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("negative discriminant {0:e} on the loop branch")]
    NegativeDiscriminant(f64),

    #[error("ODE integration failed at t = {t}: step size underflow (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("state space too large: n = {n} exceeds {max}")]
    TooLarge { n: u64, max: u64 },

    #[error("empty sample")]
    EmptySample,

    #[error("negative radicand {0:e} in diffusion coefficient")]
    NegativeRadicand(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    range: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
