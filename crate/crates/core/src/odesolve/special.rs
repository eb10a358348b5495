//! Special functions needed by the closed-form references.

use std::f64::consts::PI;

use super::OdeError;

/// Error function, absolute error below 1e-14 on the real line.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let v = if a <= 3.0 {
        erf_series(a)
    } else {
        1.0 - erfc_cf(a)
    };
    v.copysign(x)
}

/// Complementary error function; accurate in the tail where `1 - erf`
/// would cancel.
pub fn erfc(x: f64) -> f64 {
    if x > 3.0 {
        erfc_cf(x)
    } else {
        1.0 - erf(x)
    }
}

/// `2/sqrt(pi) * exp(-x^2) * sum 2^n x^(2n+1) / (2n+1)!!`; every term is
/// positive so nothing cancels.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    while term > sum * 1e-17 {
        n += 1;
        term *= 2.0 * x2 / f64::from(2 * n + 1);
        sum += term;
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

/// Laplace continued fraction for erfc, x > 3.
fn erfc_cf(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=80).rev() {
        t = x + f64::from(k) / 2.0 / t;
    }
    (-x * x).exp() / (PI.sqrt() * t)
}

pub fn artanh(x: f64) -> Result<f64, OdeError> {
    if !(x.abs() < 1.0) {
        return Err(OdeError::Domain(format!("artanh({x})")));
    }
    Ok(0.5 * ((1.0 + x) / (1.0 - x)).ln())
}

pub fn arctan(x: f64) -> f64 {
    x.atan()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain alternating Maclaurin series, fine for small arguments.
    fn erf_oracle(x: f64, terms: u32) -> f64 {
        let mut sum = 0.0;
        let mut fact = 1.0;
        for n in 0..terms {
            if n > 0 {
                fact *= f64::from(n);
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * x.powi(2 * n as i32 + 1) / (fact * f64::from(2 * n + 1));
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn erf_matches_oracle() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(0.5) - erf_oracle(0.5, 20)).abs() < 1e-15);
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((erf(-1.0) + 0.842_700_792_949_714_9).abs() < 1e-15);
    }

    #[test]
    fn erf_is_continuous_across_branch_switch() {
        let lo = erf(3.0);
        let hi = erf(3.0 + 1e-12);
        assert!((lo - hi).abs() < 1e-14);
        assert!((erfc(4.0) - 1.541_725_790_028_002e-8).abs() < 1e-20);
    }

    #[test]
    fn artanh_domain() {
        assert!(artanh(1.0).is_err());
        assert!((artanh(0.5).unwrap() - 0.549_306_144_334_054_8).abs() < 1e-15);
    }
}
