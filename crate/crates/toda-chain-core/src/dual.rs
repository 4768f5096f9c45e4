//! Nested (multi-level) dual numbers.
//!
//! A [`Dual`] of depth `d` is a truncated polynomial in `d` anticommuting
//! nilpotent symbols `ε_1, …, ε_d` (`ε_i² = 0`): it stores the `2^d`
//! coefficients of all square-free monomials. Seeding level `i` with a
//! direction and reading the `ε_i`-part afterwards yields an *exact*
//! directional derivative; nesting levels yields exact mixed directional
//! derivatives of any order. This is what lets iterated Lie brackets be
//! differentiated without finite-difference error.
//!
//! The coefficient vector is indexed by bitmask: `co[m]` multiplies
//! `∏_{i ∈ m} ε_i`. Binary operations split the vector in halves
//! (`x = lo + ε_d · hi`) and recurse, so a product at depth `d` costs
//! `3^d` scalar multiplications.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::math;

/// Truncated multi-level dual number. See the module docs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    co: Vec<f64>,
}

fn mul_acc(a: &[f64], b: &[f64], out: &mut [f64]) {
    if a.len() == 1 {
        out[0] += a[0] * b[0];
        return;
    }
    let h = a.len() / 2;
    mul_acc(&a[..h], &b[..h], &mut out[..h]);
    mul_acc(&a[..h], &b[h..], &mut out[h..]);
    mul_acc(&a[h..], &b[..h], &mut out[h..]);
}

fn exp_into(x: &[f64], out: &mut [f64]) {
    if x.len() == 1 {
        out[0] = math::exp(x[0]);
        return;
    }
    let h = x.len() / 2;
    let (xl, xh) = x.split_at(h);
    let (ol, oh) = out.split_at_mut(h);
    exp_into(xl, ol);
    // exp(lo + ε hi) = exp(lo) + ε · hi · exp(lo)
    mul_acc(xh, ol, oh);
}

fn recip_into(x: &[f64], out: &mut [f64]) {
    if x.len() == 1 {
        out[0] = 1.0 / x[0];
        return;
    }
    let h = x.len() / 2;
    let (xl, xh) = x.split_at(h);
    let (ol, oh) = out.split_at_mut(h);
    recip_into(xl, ol);
    // 1/(lo + ε hi) = 1/lo − ε · hi / lo²
    let mut t = vec![0.0; h];
    mul_acc(xh, ol, &mut t);
    let mut t2 = vec![0.0; h];
    mul_acc(&t, ol, &mut t2);
    for (o, v) in oh.iter_mut().zip(&t2) {
        *o -= v;
    }
}

fn ln_into(x: &[f64], out: &mut [f64]) {
    if x.len() == 1 {
        out[0] = math::ln(x[0]);
        return;
    }
    let h = x.len() / 2;
    let (xl, xh) = x.split_at(h);
    let (ol, oh) = out.split_at_mut(h);
    ln_into(xl, ol);
    // ln(lo + ε hi) = ln(lo) + ε · hi / lo
    let mut r = vec![0.0; h];
    recip_into(xl, &mut r);
    mul_acc(xh, &r, oh);
}

fn sqrt_into(x: &[f64], out: &mut [f64]) {
    if x.len() == 1 {
        out[0] = math::sqrt(x[0]);
        return;
    }
    let h = x.len() / 2;
    let (xl, xh) = x.split_at(h);
    let (ol, oh) = out.split_at_mut(h);
    sqrt_into(xl, ol);
    // sqrt(lo + ε hi) = s + ε · hi / (2 s)
    let two_s: Vec<f64> = ol.iter().map(|c| 2.0 * c).collect();
    let mut r = vec![0.0; h];
    recip_into(&two_s, &mut r);
    mul_acc(xh, &r, oh);
}

impl Dual {
    /// Constant (derivative-free) value at the given coefficient length.
    /// `len` must be a power of two; `len = 1` is a plain scalar.
    pub fn constant(value: f64, len: usize) -> Self {
        debug_assert!(len.is_power_of_two());
        let mut co = vec![0.0; len];
        co[0] = value;
        Dual { co }
    }

    /// Plain scalar (depth 0).
    pub fn scalar(value: f64) -> Self {
        Dual { co: vec![value] }
    }

    /// Adds one dual level: `lo + ε_new · hi`. Both halves must have the
    /// same length.
    pub fn raise(lo: &Dual, hi: &Dual) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        let mut co = Vec::with_capacity(2 * lo.len());
        co.extend_from_slice(&lo.co);
        co.extend_from_slice(&hi.co);
        Dual { co }
    }

    /// Coefficient of the top-level `ε`: the directional derivative
    /// recorded at the outermost seeding.
    pub fn top_part(&self) -> Dual {
        debug_assert!(self.len() >= 2);
        Dual {
            co: self.co[self.len() / 2..].to_vec(),
        }
    }

    /// Value with the top level stripped.
    pub fn low_part(&self) -> Dual {
        debug_assert!(self.len() >= 2);
        Dual {
            co: self.co[..self.len() / 2].to_vec(),
        }
    }

    /// The underlying real value.
    pub fn real(&self) -> f64 {
        self.co[0]
    }

    /// Number of stored coefficients (`2^depth`).
    pub fn len(&self) -> usize {
        self.co.len()
    }

    /// A dual always carries at least the real coefficient.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn all_finite(&self) -> bool {
        self.co.iter().all(|c| c.is_finite())
    }

    pub fn scale(&self, s: f64) -> Dual {
        Dual {
            co: self.co.iter().map(|c| c * s).collect(),
        }
    }

    pub fn exp(&self) -> Dual {
        let mut co = vec![0.0; self.len()];
        exp_into(&self.co, &mut co);
        Dual { co }
    }

    pub fn ln(&self) -> Dual {
        let mut co = vec![0.0; self.len()];
        ln_into(&self.co, &mut co);
        Dual { co }
    }

    pub fn sqrt(&self) -> Dual {
        let mut co = vec![0.0; self.len()];
        sqrt_into(&self.co, &mut co);
        Dual { co }
    }

    pub fn recip(&self) -> Dual {
        let mut co = vec![0.0; self.len()];
        recip_into(&self.co, &mut co);
        Dual { co }
    }
}

impl Add for &Dual {
    type Output = Dual;
    fn add(self, rhs: &Dual) -> Dual {
        debug_assert_eq!(self.len(), rhs.len());
        Dual {
            co: self.co.iter().zip(&rhs.co).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Dual {
    type Output = Dual;
    fn sub(self, rhs: &Dual) -> Dual {
        debug_assert_eq!(self.len(), rhs.len());
        Dual {
            co: self.co.iter().zip(&rhs.co).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Dual {
    type Output = Dual;
    fn mul(self, rhs: &Dual) -> Dual {
        debug_assert_eq!(self.len(), rhs.len());
        let mut co = vec![0.0; self.len()];
        mul_acc(&self.co, &rhs.co, &mut co);
        Dual { co }
    }
}

impl Neg for &Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            co: self.co.iter().map(|c| -c).collect(),
        }
    }
}

impl AddAssign<&Dual> for Dual {
    fn add_assign(&mut self, rhs: &Dual) {
        debug_assert_eq!(self.len(), rhs.len());
        for (a, b) in self.co.iter_mut().zip(&rhs.co) {
            *a += b;
        }
    }
}

macro_rules! forward_owned {
    ($trait:ident, $method:ident) => {
        impl $trait<Dual> for Dual {
            type Output = Dual;
            fn $method(self, rhs: Dual) -> Dual {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Dual> for Dual {
            type Output = Dual;
            fn $method(self, rhs: &Dual) -> Dual {
                (&self).$method(rhs)
            }
        }
        impl $trait<Dual> for &Dual {
            type Output = Dual;
            fn $method(self, rhs: Dual) -> Dual {
                self.$method(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        -(&self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn seeded(x: f64) -> Dual {
        // x + ε at depth 1
        Dual::raise(&Dual::scalar(x), &Dual::scalar(1.0))
    }

    #[test]
    fn first_derivative_of_exp() {
        let d = seeded(0.7).exp();
        assert_relative_eq!(d.real(), f64::exp(0.7));
        assert_relative_eq!(d.top_part().real(), f64::exp(0.7));
    }

    #[test]
    fn first_derivative_of_product_and_quotient() {
        // f(x) = x² / (1 + x), f'(x) = (x² + 2x) / (1+x)²
        let x = 1.3;
        let d = seeded(x);
        let one = Dual::constant(1.0, 2);
        let f = &(&d * &d) * &(&one + &d).recip();
        assert_relative_eq!(f.real(), x * x / (1.0 + x), epsilon = 1e-14);
        let expect = (x * x + 2.0 * x) / ((1.0 + x) * (1.0 + x));
        assert_relative_eq!(f.top_part().real(), expect, epsilon = 1e-13);
    }

    #[test]
    fn nested_levels_give_exact_second_derivative() {
        // d²/dx² exp(2x) = 4 exp(2x), via two nested seedings.
        let x = 0.3;
        let inner = Dual::raise(&Dual::scalar(x), &Dual::scalar(1.0));
        let outer = Dual::raise(&inner, &Dual::constant(1.0, 2));
        let f = outer.scale(2.0).exp();
        let second = f.top_part().top_part().real();
        assert_relative_eq!(second, 4.0 * f64::exp(2.0 * x), epsilon = 1e-12);
    }

    #[test]
    fn third_derivative_of_ln() {
        // d³/dx³ ln x = 2/x³
        let x = 0.9;
        let l1 = Dual::raise(&Dual::scalar(x), &Dual::scalar(1.0));
        let l2 = Dual::raise(&l1, &Dual::constant(1.0, 2));
        let l3 = Dual::raise(&l2, &Dual::constant(1.0, 4));
        let f = l3.ln();
        let d3 = f.top_part().top_part().top_part().real();
        assert_relative_eq!(d3, 2.0 / (x * x * x), epsilon = 1e-11);
    }

    #[test]
    fn sqrt_derivative() {
        let x = 2.0;
        let f = seeded(x).sqrt();
        assert_relative_eq!(f.top_part().real(), 0.5 / f64::sqrt(x), epsilon = 1e-14);
    }

    #[test]
    fn mixed_directions_commute() {
        // ∂²(x·y)/∂x∂y = 1 regardless of seeding order.
        let x = Dual::raise(
            &Dual::raise(&Dual::scalar(1.7), &Dual::scalar(1.0)),
            &Dual::constant(0.0, 2),
        );
        let y = Dual::raise(
            &Dual::raise(&Dual::scalar(-0.4), &Dual::scalar(0.0)),
            &Dual::constant(1.0, 2),
        );
        let f = &x * &y;
        assert_relative_eq!(f.top_part().top_part().real(), 1.0);
    }
}
