//! Exact nonnegative costs with a distinguished infinite value.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

/// A nonnegative exact rational, or infinity.
///
/// Finite values are always kept in lowest terms (guaranteed by
/// [`BigRational`]) and are never negative.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cost {
    Finite(BigRational),
    Infinite,
}

impl Cost {
    pub fn zero() -> Self {
        Cost::Finite(BigRational::zero())
    }

    pub fn from_integer(n: i64) -> Self {
        Self::new(BigRational::from_integer(BigInt::from(n)))
    }

    /// `numer / denom`; panics on a zero denominator or a negative result.
    pub fn ratio(numer: i64, denom: i64) -> Self {
        Self::new(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn new(value: BigRational) -> Self {
        assert!(!value.is_negative(), "costs are nonnegative");
        Cost::Finite(value)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        !self.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Cost::Finite(v) if v.is_zero())
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    /// Multiplies a finite cost by a load count.
    pub fn scaled(&self, factor: usize) -> Cost {
        match self {
            Cost::Finite(v) => Cost::Finite(v * BigRational::from_integer(BigInt::from(factor))),
            Cost::Infinite => Cost::Infinite,
        }
    }

    pub fn min(self, other: Cost) -> Cost {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Default for Cost {
    fn default() -> Self {
        Cost::zero()
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a.cmp(b),
            (Cost::Finite(_), Cost::Infinite) => Ordering::Less,
            (Cost::Infinite, Cost::Finite(_)) => Ordering::Greater,
            (Cost::Infinite, Cost::Infinite) => Ordering::Equal,
        }
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        &self + &rhs
    }
}

impl<'a> Add<&'a Cost> for &'a Cost {
    type Output = Cost;

    fn add(self, rhs: &'a Cost) -> Cost {
        match (self, rhs) {
            (Cost::Finite(a), Cost::Finite(b)) => Cost::Finite(a + b),
            _ => Cost::Infinite,
        }
    }
}

impl AddAssign<&Cost> for Cost {
    fn add_assign(&mut self, rhs: &Cost) {
        match (&mut *self, rhs) {
            (Cost::Finite(a), Cost::Finite(b)) => *a += b,
            _ => *self = Cost::Infinite,
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self += &rhs;
    }
}

impl Mul<usize> for &Cost {
    type Output = Cost;

    fn mul(self, rhs: usize) -> Cost {
        self.scaled(rhs)
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::zero(), |acc, c| acc + c)
    }
}

impl<'a> Sum<&'a Cost> for Cost {
    fn sum<I: Iterator<Item = &'a Cost>>(iter: I) -> Cost {
        iter.fold(Cost::zero(), |mut acc, c| {
            acc += c;
            acc
        })
    }
}

/// Renders `p/q`, `p` when `q = 1`, or `infeasible`.
impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{}", v),
            Cost::Infinite => f.write_str("infeasible"),
        }
    }
}

impl From<BigRational> for Cost {
    fn from(value: BigRational) -> Self {
        Cost::new(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirds_sum_to_one_exactly() {
        let third = Cost::ratio(1, 3);
        let total: Cost = [third.clone(), third.clone(), third].iter().sum();
        assert_eq!(total, Cost::from_integer(1));
    }

    #[test]
    fn infinity_absorbs_and_dominates() {
        assert_eq!(Cost::from_integer(7) + Cost::Infinite, Cost::Infinite);
        assert!(Cost::Infinite > Cost::from_integer(1_000_000));
        assert_eq!(Cost::Infinite.scaled(3), Cost::Infinite);
    }

    #[test]
    fn canonical_display() {
        assert_eq!(Cost::ratio(2, 6).to_string(), "1/3");
        assert_eq!(Cost::ratio(4, 2).to_string(), "2");
        assert_eq!(Cost::Infinite.to_string(), "infeasible");
    }

    #[test]
    #[should_panic]
    fn negative_rejected() {
        let _ = Cost::ratio(-1, 2);
    }
}
