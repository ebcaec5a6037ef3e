//! Scalar abstraction: every numeric component is generic over [`Real`],
//! instantiated as `f32` or `f64` (the crate root exports concrete aliases).

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar for weights, states, rewards and losses.
///
/// `LowerExp`/`FromStr` are required so snapshots and CSV logs can be written
/// and re-read losslessly at 17 significant digits.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("literal representable in scalar type")
}

/// Convert a count into the working scalar type.
#[inline]
pub fn real_of<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Format a scalar with 17 significant digits, enough for a bit-exact
/// round-trip of both `f32` and `f64`.
pub fn format_exact<T: Real>(v: T) -> String {
    format!("{:.16e}", v)
}

/// Parse a scalar previously written by [`format_exact`] (or any decimal).
pub fn parse_exact<T: Real>(s: &str) -> Option<T> {
    T::from_str(s).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn format_round_trips_f64_bit_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let v: f64 = (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-20..20));
            let back: f64 = parse_exact(&format_exact(v)).unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v}");
        }
    }

    #[test]
    fn format_round_trips_f32_bit_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let v: f32 = (rng.random::<f32>() - 0.5) * 10f32.powi(rng.random_range(-10..10));
            let back: f32 = parse_exact(&format_exact(v)).unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v}");
        }
    }
}
