use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the forecasting pipeline is generic over (`f32` or `f64`).
///
/// `Display` must print the shortest decimal string that parses back to the
/// same bits; the standard library guarantees this for both primitive floats
/// and the persistence and CSV layers rely on it.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Display
    + Debug
    + FromStr
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Tag written into persisted models.
    const NAME: &'static str;

    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    fn from_usize_lossy(value: usize) -> Self {
        Self::from_usize(value).expect("usize representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

#[cfg(test)]
mod tests {
    #[test]
    fn display_round_trips_bits() {
        for v in [0.1f64, 1.0 / 3.0, 35000.0, 1e-300, 123456.789012345] {
            let text = v.to_string();
            assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        let v = 0.1f32 + 0.2f32;
        assert_eq!(v.to_string().parse::<f32>().unwrap().to_bits(), v.to_bits());
    }
}
