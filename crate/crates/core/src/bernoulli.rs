//! Exact Bernoulli numbers.
//!
//! Even-index values come from the tangent numbers T_k, which obey an
//! integer-only recurrence:
//! B_{2k} = (-1)^(k-1) 2k T_k / (4^k (4^k - 1)).

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Largest index served from the table.
pub const MAX_INDEX: usize = 1024;

fn tangent_numbers() -> &'static [BigInt] {
    static TABLE: OnceLock<Vec<BigInt>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = MAX_INDEX / 2;
        // t[k] holds T_k for k in 1..=n; t[0] unused.
        let mut t = vec![BigInt::zero(); n + 1];
        t[1] = BigInt::one();
        for k in 2..=n {
            t[k] = &t[k - 1] * BigInt::from(k - 1);
        }
        for k in 2..=n {
            for j in k..=n {
                t[j] = &t[j - 1] * BigInt::from(j - k) + &t[j] * BigInt::from(j - k + 2);
            }
        }
        t
    })
}

/// B_n as an exact rational, with the B_1 = -1/2 convention.
///
/// Returns `None` above [`MAX_INDEX`].
pub fn bernoulli(n: usize) -> Option<BigRational> {
    if n > MAX_INDEX {
        return None;
    }
    Some(match n {
        0 => BigRational::one(),
        1 => BigRational::new(BigInt::from(-1), BigInt::from(2)),
        n if n % 2 == 1 => BigRational::zero(),
        n => {
            let k = n / 2;
            let four_k = BigInt::one() << (2 * k);
            let num = BigInt::from(2 * k) * &tangent_numbers()[k];
            let den = &four_k * (&four_k - BigInt::one());
            let b = BigRational::new(num, den);
            if k % 2 == 0 {
                -b
            } else {
                b
            }
        }
    })
}

/// log2 |n| for arbitrarily large integers; `-inf` for zero.
pub(crate) fn log2_abs(n: &BigInt) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let n = n.abs();
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    let top = (&n >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.log2() + shift as f64
}

/// log2 |r| for an exact rational.
pub(crate) fn log2_abs_ratio(r: &BigRational) -> f64 {
    log2_abs(r.numer()) - log2_abs(r.denom())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn small_values_are_exact() {
        assert_eq!(bernoulli(0).unwrap(), q(1, 1));
        assert_eq!(bernoulli(1).unwrap(), q(-1, 2));
        assert_eq!(bernoulli(2).unwrap(), q(1, 6));
        assert_eq!(bernoulli(3).unwrap(), q(0, 1));
        assert_eq!(bernoulli(4).unwrap(), q(-1, 30));
        assert_eq!(bernoulli(6).unwrap(), q(1, 42));
        assert_eq!(bernoulli(8).unwrap(), q(-1, 30));
        assert_eq!(bernoulli(10).unwrap(), q(5, 66));
        assert_eq!(bernoulli(12).unwrap(), q(-691, 2730));
    }

    // Independent check against the classical recurrence
    // sum_{k=0}^{m} C(m+1, k) B_k = 0 over exact rationals.
    #[test]
    fn agrees_with_binomial_recurrence() {
        let n = 40;
        let mut b: Vec<BigRational> = vec![BigRational::one()];
        for m in 1..=n {
            let mut acc = BigRational::zero();
            let mut binom = BigInt::one();
            for (k, bk) in b.iter().enumerate() {
                acc += BigRational::from_integer(binom.clone()) * bk;
                binom = binom * BigInt::from(m + 1 - k) / BigInt::from(k + 1);
            }
            b.push(-acc / BigRational::from_integer(BigInt::from(m + 1)));
        }
        for (i, expected) in b.iter().enumerate() {
            assert_eq!(&bernoulli(i).unwrap(), expected, "B_{i}");
        }
    }

    #[test]
    fn log2_of_huge_values() {
        let big = BigInt::one() << 3000usize;
        assert!((log2_abs(&big) - 3000.0).abs() < 1e-9);
        let r = bernoulli(1024).unwrap();
        assert!(log2_abs_ratio(&r).is_finite());
        assert!(bernoulli(1025).is_none());
    }
}
