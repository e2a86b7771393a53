//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Display + Debug + FromStr + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the two implementors.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Real> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation = self.compensation + ((self.sum - t) + x);
        } else {
            self.compensation = self.compensation + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn total(&self) -> T {
        self.sum + self.compensation
    }
}

impl<T: Real> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1.0e16_f64];
        values.extend(std::iter::repeat_n(1.0, 1000));
        values.push(-1.0e16);
        let naive: f64 = values.iter().sum();
        let comp: CompensatedSum<f64> = values.iter().copied().collect();
        assert_eq!(comp.total(), 1000.0);
        assert_ne!(naive, 1000.0);
    }

    #[test]
    fn f32_beats_naive_summation() {
        let terms = std::iter::repeat_n(0.1_f32, 1_000_000);
        let naive: f32 = terms.clone().sum();
        let comp: CompensatedSum<f32> = terms.collect();
        let exact = 1_000_000.0 * f64::from(0.1_f32);
        let err = |x: f32| (f64::from(x) - exact).abs();
        assert!(
            err(comp.total()) * 50.0 < err(naive),
            "{} vs {naive}",
            comp.total()
        );
    }
}
