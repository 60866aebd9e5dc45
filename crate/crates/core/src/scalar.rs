use std::fmt::Debug;

use num_traits::{FromPrimitive, Num};

/// Scalar usable by the weight engine: floats and exact rationals.
///
/// Only field operations and ordering are needed; anything that requires a
/// square root lives behind `num_traits::Float` in [`crate::metrics`].
pub trait Scalar: Clone + Debug + PartialOrd + Num + FromPrimitive {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar")
    }

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }
}

impl<T> Scalar for T where T: Clone + Debug + PartialOrd + Num + FromPrimitive {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Exact;

    #[test]
    fn counts_convert_exactly() {
        assert_eq!(f64::from_count(6), 6.0);
        assert_eq!(f32::from_count(3), 3.0);
        assert_eq!(Exact::from_count(6), Exact::from_integer(6.into()));
    }
}
