//! Bessel functions of order 0 and 1 for nonnegative real arguments.
//!
//! The modified functions `I0`, `I1` use their Maclaurin series up to
//! [`BesselEvalConfig::series_crossover`] and the large-argument expansion
//!
//! ```text
//! I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k
//! a_k(nu) = prod_{i=1..k} (4 nu^2 - (2i-1)^2) / (k! 8^k)
//! ```
//!
//! above it, truncated at the smallest term. The ordinary functions `J0`, `J1`
//! use the alternating series for small arguments and Miller's backward
//! recurrence (normalized by `J0 + 2 sum J_2k = 1`) elsewhere, which keeps the
//! absolute error near machine precision well past x = 50.
//!
//! The ratios `I1(x)/x` and `J1(x)/x` are evaluated from their own series near
//! the origin, so the removable singularity is never divided through.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialFnError {
    #[error("argument {0} outside the domain [0, inf) of the evaluator")]
    Domain(f64),
    #[error("invalid evaluator configuration: {0}")]
    Config(&'static str),
}

/// Knobs for the modified Bessel evaluators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEvalConfig {
    /// Argument above which the asymptotic expansion replaces the series.
    pub series_crossover: f64,
    /// Relative size of the last retained series term.
    pub series_tol: f64,
    pub max_terms: usize,
}

impl Default for BesselEvalConfig {
    fn default() -> Self {
        Self {
            series_crossover: 15.0,
            series_tol: 1e-17,
            max_terms: 500,
        }
    }
}

impl BesselEvalConfig {
    pub fn validate(&self) -> Result<(), SpecialFnError> {
        if !(self.series_crossover > 0.0 && self.series_crossover.is_finite()) {
            return Err(SpecialFnError::Config("series_crossover must be positive"));
        }
        if !(self.series_tol > 0.0 && self.series_tol <= 1e-12) {
            return Err(SpecialFnError::Config("series_tol must lie in (0, 1e-12]"));
        }
        if self.max_terms == 0 {
            return Err(SpecialFnError::Config("max_terms must be positive"));
        }
        Ok(())
    }

    pub fn i0(&self, x: f64) -> Result<f64, SpecialFnError> {
        check_arg(x)?;
        self.validate()?;
        Ok(if x <= self.series_crossover {
            self.i_series(x, 0)
        } else {
            self.i_asymptotic(x, 0)
        })
    }

    pub fn i1(&self, x: f64) -> Result<f64, SpecialFnError> {
        check_arg(x)?;
        self.validate()?;
        Ok(if x <= self.series_crossover {
            self.i_series(x, 1)
        } else {
            self.i_asymptotic(x, 1)
        })
    }

    pub fn i1_over_z(&self, x: f64) -> Result<f64, SpecialFnError> {
        check_arg(x)?;
        self.validate()?;
        Ok(if x <= self.series_crossover {
            self.i1_over_z_series(x)
        } else {
            self.i_asymptotic(x, 1) / x
        })
    }

    /// `sum_k (x/2)^(2k+order) / (k! (k+order)!)`; all terms positive.
    fn i_series(&self, x: f64, order: u32) -> f64 {
        let q = 0.25 * x * x;
        let mut term = if order == 0 { 1.0 } else { 0.5 * x };
        let mut sum = term;
        for k in 1..self.max_terms {
            let kf = k as f64;
            term *= q / (kf * (kf + order as f64));
            sum += term;
            if term <= self.series_tol * sum {
                break;
            }
        }
        sum
    }

    fn i1_over_z_series(&self, x: f64) -> f64 {
        let q = 0.25 * x * x;
        let mut term = 0.5;
        let mut sum = term;
        for k in 1..self.max_terms {
            let kf = k as f64;
            term *= q / (kf * (kf + 1.0));
            sum += term;
            if term <= self.series_tol * sum {
                break;
            }
        }
        sum
    }

    fn i_asymptotic(&self, x: f64, order: u32) -> f64 {
        let four_nu2 = 4.0 * (order * order) as f64;
        let mut term = 1.0_f64;
        let mut sum = 1.0_f64;
        for k in 1..self.max_terms {
            let odd = (2 * k - 1) as f64;
            let next = term * (odd * odd - four_nu2) / (8.0 * k as f64 * x);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() <= self.series_tol * sum.abs() {
                break;
            }
        }
        // e^x / sqrt(2 pi x), split so the prefactor overflows only when the value does
        let half = (0.5 * x).exp();
        half * (half / (2.0 * PI * x).sqrt()) * sum
    }
}

fn check_arg(x: f64) -> Result<(), SpecialFnError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(SpecialFnError::Domain(x))
    }
}

const DEFAULT: BesselEvalConfig = BesselEvalConfig {
    series_crossover: 15.0,
    series_tol: 1e-17,
    max_terms: 500,
};

pub fn bessel_i0(x: f64) -> Result<f64, SpecialFnError> {
    DEFAULT.i0(x)
}

pub fn bessel_i1(x: f64) -> Result<f64, SpecialFnError> {
    DEFAULT.i1(x)
}

/// `I1(x)/x`, equal to exactly 1/2 at the origin.
pub fn i1_over_z(x: f64) -> Result<f64, SpecialFnError> {
    DEFAULT.i1_over_z(x)
}

pub fn bessel_j0(x: f64) -> Result<f64, SpecialFnError> {
    check_arg(x)?;
    Ok(j0(x))
}

pub fn bessel_j1(x: f64) -> Result<f64, SpecialFnError> {
    check_arg(x)?;
    Ok(j1(x))
}

/// `J1(x)/x`, equal to exactly 1/2 at the origin.
pub fn j1_over_z(x: f64) -> Result<f64, SpecialFnError> {
    check_arg(x)?;
    Ok(j1_over_z_unchecked(x))
}

// Unchecked fast paths for quadrature inner loops; callers guarantee x >= 0.

#[inline]
pub(crate) fn i0(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= DEFAULT.series_crossover {
        DEFAULT.i_series(x, 0)
    } else {
        DEFAULT.i_asymptotic(x, 0)
    }
}

#[inline]
pub(crate) fn i1_over_z_unchecked(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= DEFAULT.series_crossover {
        DEFAULT.i1_over_z_series(x)
    } else {
        DEFAULT.i_asymptotic(x, 1) / x
    }
}

/// Below this the alternating series loses at most a couple of digits.
const J_SERIES_LIMIT: f64 = 8.0;

pub(crate) fn j0(x: f64) -> f64 {
    if x <= J_SERIES_LIMIT {
        j_series(x, 0)
    } else {
        miller(x).0
    }
}

pub(crate) fn j1(x: f64) -> f64 {
    if x <= J_SERIES_LIMIT {
        j_series(x, 1)
    } else {
        miller(x).1
    }
}

pub(crate) fn j1_over_z_unchecked(x: f64) -> f64 {
    if x <= J_SERIES_LIMIT {
        let q = -0.25 * x * x;
        let mut term = 0.5;
        let mut sum = term;
        for k in 1..200 {
            let kf = k as f64;
            term *= q / (kf * (kf + 1.0));
            sum += term;
            if term.abs() <= 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        miller(x).1 / x
    }
}

fn j_series(x: f64, order: u32) -> f64 {
    let q = -0.25 * x * x;
    let mut term = if order == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (kf + order as f64));
        sum += term;
        if term.abs() <= 1e-18 {
            break;
        }
    }
    sum
}

/// Backward recurrence `J_{k-1} = (2k/x) J_k - J_{k+1}` from a start index well
/// above `x`, returning `(J0(x), J1(x))`.
fn miller(x: f64) -> (f64, f64) {
    let start = {
        let m = x as usize + 30 + (40.0 * x).sqrt() as usize;
        m + (m % 2)
    };
    let mut above = 0.0_f64; // J_{k+1}
    let mut cur = 1e-30_f64; // J_k
    let mut norm = 0.0_f64;
    let mut j0 = 0.0;
    let mut j1 = 0.0;
    for k in (1..=start).rev() {
        let below = 2.0 * k as f64 / x * cur - above;
        above = cur;
        cur = below;
        if cur.abs() > 1e250 {
            above *= 1e-250;
            cur *= 1e-250;
            norm *= 1e-250;
            j1 *= 1e-250;
        }
        // cur now holds J_{k-1}
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if k == 2 {
            j1 = cur;
        }
        if k == 1 {
            j0 = cur;
        }
    }
    norm += j0;
    (j0 / norm, j1 / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_origin() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        assert_eq!(bessel_i1(0.0).unwrap(), 0.0);
        assert_eq!(i1_over_z(0.0).unwrap(), 0.5);
        assert_eq!(bessel_j0(0.0).unwrap(), 1.0);
        assert_eq!(bessel_j1(0.0).unwrap(), 0.0);
        assert_eq!(j1_over_z(0.0).unwrap(), 0.5);
    }

    #[test]
    fn reference_values_at_one() {
        assert!((bessel_i0(1.0).unwrap() - 1.2660658777520084).abs() < 1e-15);
        assert!((bessel_i1(1.0).unwrap() - 0.5651591039924851).abs() < 1e-15);
        assert!((i1_over_z(1.0).unwrap() - 0.5651591039924851).abs() < 1e-15);
        assert!((bessel_j0(1.0).unwrap() - 0.7651976865579666).abs() < 1e-15);
    }

    #[test]
    fn removable_singularity_is_continuous() {
        assert!((i1_over_z(1e-8).unwrap() - 0.5).abs() <= 1e-15);
        assert!((j1_over_z(1e-8).unwrap() - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        for bad in [-1.0, f64::NAN, f64::INFINITY, -1e-300] {
            assert!(matches!(bessel_i0(bad), Err(SpecialFnError::Domain(_))));
            assert!(bessel_i1(bad).is_err());
            assert!(i1_over_z(bad).is_err());
            assert!(bessel_j0(bad).is_err());
            assert!(bessel_j1(bad).is_err());
        }
    }

    #[test]
    fn config_validation() {
        let mut c = BesselEvalConfig::default();
        assert!(c.validate().is_ok());
        c.series_tol = 1e-6;
        assert!(c.i0(1.0).is_err());
        let c = BesselEvalConfig {
            series_crossover: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn series_and_asymptotic_agree_at_seam() {
        let cfg = BesselEvalConfig::default();
        for &x in &[14.0, 15.0, 16.0, 20.0] {
            let s0 = cfg.i_series(x, 0);
            let a0 = cfg.i_asymptotic(x, 0);
            let s1 = cfg.i_series(x, 1);
            let a1 = cfg.i_asymptotic(x, 1);
            assert!(((s0 - a0) / s0).abs() < 1e-10, "I0 seam at {x}: {s0} vs {a0}");
            assert!(((s1 - a1) / s1).abs() < 1e-10, "I1 seam at {x}: {s1} vs {a1}");
        }
    }

    #[test]
    fn miller_matches_series_in_overlap() {
        for &x in &[2.0, 5.0, 8.0, 10.0] {
            let (m0, m1) = miller(x);
            assert!((m0 - j_series(x, 0)).abs() < 1e-13, "J0 at {x}");
            assert!((m1 - j_series(x, 1)).abs() < 1e-13, "J1 at {x}");
        }
    }

    #[test]
    fn large_argument_overflows_to_infinity() {
        assert_eq!(bessel_i0(800.0).unwrap(), f64::INFINITY);
        let big = bessel_i0(700.0).unwrap();
        assert!(big.is_finite() && big > 1e300);
    }
}
