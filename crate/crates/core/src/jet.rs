//! Truncated Taylor arithmetic.
//!
//! A `Jet<N>` holds the normalized Taylor coefficients `f^(k)(x0) / k!` for
//! `k < N`. Propagating jets through `+ - * / exp` yields exact derivatives
//! (up to round-off) of closed-form expressions without finite differences.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize>(pub [f64; N]);

impl<const N: usize> Jet<N> {
    pub fn constant(c: f64) -> Self {
        let mut a = [0.0; N];
        a[0] = c;
        Jet(a)
    }

    /// The independent variable at `x0`.
    pub fn variable(x0: f64) -> Self {
        let mut a = [0.0; N];
        a[0] = x0;
        if N > 1 {
            a[1] = 1.0;
        }
        Jet(a)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// k-th derivative.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut f = 1.0;
        for i in 2..=k {
            f *= i as f64;
        }
        self.0[k] * f
    }

    pub fn derivatives(&self) -> [f64; N] {
        let mut out = [0.0; N];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.derivative(k);
        }
        out
    }

    pub fn recip(&self) -> Self {
        let a = &self.0;
        let mut b = [0.0; N];
        b[0] = 1.0 / a[0];
        for k in 1..N {
            let mut s = 0.0;
            for j in 1..=k {
                s += a[j] * b[k - j];
            }
            b[k] = -s * b[0];
        }
        Jet(b)
    }

    pub fn exp(&self) -> Self {
        // b' = a' b  =>  k b_k = sum_{j=1..k} j a_j b_{k-j}
        let a = &self.0;
        let mut b = [0.0; N];
        b[0] = a[0].exp();
        for k in 1..N {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * a[j] * b[k - j];
            }
            b[k] = s / k as f64;
        }
        Jet(b)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut a = self.0;
        for x in a.iter_mut() {
            *x *= c;
        }
        Jet(a)
    }

    /// Re-expresses the jet of `f` at `y0 = s * x0 + c` as the jet of
    /// `x -> f(s x + c)` at `x0`.
    pub fn chain_affine(&self, s: f64) -> Self {
        let mut a = self.0;
        let mut p = 1.0;
        for x in a.iter_mut() {
            *x *= p;
            p *= s;
        }
        Jet(a)
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut a = self.0;
        for (x, y) in a.iter_mut().zip(o.0) {
            *x += y;
        }
        Jet(a)
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut a = self.0;
        for (x, y) in a.iter_mut().zip(o.0) {
            *x -= y;
        }
        Jet(a)
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut c = [0.0; N];
        for i in 0..N {
            for j in 0..N - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_exp_sin_like() {
        // f(x) = exp(2x) at 0.3
        let x = Jet::<5>::variable(0.3);
        let f = x.scale(2.0).exp();
        for k in 0..5 {
            let expect = 2f64.powi(k as i32) * (0.6f64).exp();
            assert!((f.derivative(k) - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn reciprocal_matches_closed_form() {
        // f(x) = 1/x at 2 => f^(k) = (-1)^k k! / x^(k+1)
        let f = Jet::<5>::variable(2.0).recip();
        let mut fact = 1.0;
        for k in 0..5 {
            if k > 0 {
                fact *= k as f64;
            }
            let expect = (-1f64).powi(k as i32) * fact / 2f64.powi(k as i32 + 1);
            assert!((f.derivative(k) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn product_rule() {
        let x = Jet::<4>::variable(1.5);
        let f = x * x * x; // x^3
        assert!((f.derivative(1) - 3.0 * 1.5 * 1.5).abs() < 1e-14);
        assert!((f.derivative(2) - 6.0 * 1.5).abs() < 1e-14);
        assert!((f.derivative(3) - 6.0).abs() < 1e-14);
    }
}
