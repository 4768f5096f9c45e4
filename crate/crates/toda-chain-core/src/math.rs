//! Scalar math shims usable without `std`.
//!
//! `f64::exp` and friends live in `std`; in a `no_std` build they are routed
//! through [`libm`]. Keeping them behind one module also pins a single
//! implementation for every build mode.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn max(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

#[inline]
pub fn min(a: f64, b: f64) -> f64 {
    if a < b {
        a
    } else {
        b
    }
}

/// Euclidean norm of a slice.
pub fn norm(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in xs {
        s += x * x;
    }
    sqrt(s)
}

/// Euclidean distance between two slices of equal length.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    sqrt(s)
}

/// Maximum absolute entry of a slice (0 for an empty slice).
pub fn max_abs(xs: &[f64]) -> f64 {
    let mut m = 0.0;
    for &x in xs {
        let a = abs(x);
        if a > m {
            m = a;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shims_agree_with_std() {
        // libm is a softfloat implementation: sub-ulp accurate, not
        // necessarily bit-identical to the platform's transcendentals
        for &x in &[0.0, 1.0, -2.5, 10.0] {
            assert!((exp(x) - f64::exp(x)).abs() <= 1e-15 * f64::exp(x));
            assert_eq!(abs(x), f64::abs(x));
        }
        assert!((ln(2.0) - f64::ln(2.0)).abs() < 1e-16);
        assert_eq!(sqrt(2.0), f64::sqrt(2.0));
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
    }
}
