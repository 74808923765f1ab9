//! Truncated bivariate Taylor arithmetic.
//!
//! `Tay<NX, NT>` carries the coefficients of a function of two scalars
//! around an expansion point: `c[i][l]` multiplies `dx^i dt^l`, with
//! `i < NX` and `l < NT`. Pushing `Tay` values through a computation
//! (Taylor-mode forward propagation) yields exact partial derivatives up
//! to order `NX-1` in x and `NT-1` in t, with no finite-difference truncation
//! error, no expression-graph tape.
//!
//! The same type doubles as the adjoint carrier for the reverse sweep.
//! For a scalar built from Taylor values, the adjoint of each program
//! variable is itself a coefficient table, and if adjoints are stored
//! *coefficient-reversed* (entry `[i][l]` holding the true adjoint of
//! coefficient `[NX-1-i][NT-1-l]`), the chain rule through a product
//! becomes an ordinary truncated product again. That trick is what lets
//! one generic network sweep produce gradients of PDE residuals: see
//! [`crate::autodiff::net`].
//!
//! Plain `f64` implements the same [`Scalar`] interface as the degenerate
//! `1 x 1` jet, so value-only evaluation runs at native speed through the
//! identical code path: lower-order coefficients of a wider jet agree
//! bit-for-bit with a narrower evaluation of the same program.

use crate::error::{Error, Result};

/// Factorials through 4!, enough for the highest total order used
/// anywhere in the crate (x-order 3 plus t-order 1).
const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// Common interface over `f64` and truncated Taylor values.
///
/// A network evaluator written against `Scalar` computes plain values when
/// instantiated at `f64` and derivative jets when instantiated at `Tay`.
/// `top`/`top_mul` exist for the reverse sweep: with reversed adjoint
/// storage, a parameter's gradient is the *top* coefficient of the product
/// of its local partial and the incoming adjoint, and `top_mul` computes
/// just that coefficient.
pub trait Scalar: Copy + std::fmt::Debug {
    fn from_const(c: f64) -> Self;
    fn zero() -> Self {
        Self::from_const(0.0)
    }
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    /// Multiply by a plain constant.
    fn scale(self, k: f64) -> Self;
    fn tanh(self) -> Self;
    /// Value lane: the order-(0,0) coefficient.
    fn val(self) -> f64;
    /// Highest-order coefficient (equals `val` for `f64`).
    fn top(self) -> f64;
    /// Top coefficient of `self * o`, without forming the full product.
    fn top_mul(self, o: Self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn from_const(c: f64) -> Self {
        c
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        self + o
    }
    #[inline]
    fn sub(self, o: Self) -> Self {
        self - o
    }
    #[inline]
    fn mul(self, o: Self) -> Self {
        self * o
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn top(self) -> f64 {
        self
    }
    #[inline]
    fn top_mul(self, o: Self) -> f64 {
        self * o
    }
}

/// Truncated bivariate Taylor value; see the module docs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tay<const NX: usize, const NT: usize> {
    pub c: [[f64; NT]; NX],
}

impl<const NX: usize, const NT: usize> Tay<NX, NT> {
    /// Highest total order representable: monomial `dx^(NX-1) dt^(NT-1)`.
    pub const ORDER: usize = NX + NT - 2;

    /// Seed for the x input: value `x0`, unit first x-coefficient.
    pub fn var_x(x0: f64) -> Self {
        let mut c = [[0.0; NT]; NX];
        c[0][0] = x0;
        if NX > 1 {
            c[1][0] = 1.0;
        }
        Self { c }
    }

    /// Seed for the t input. With `NT == 1` the t direction is inert and
    /// this is just the constant `t0`.
    pub fn var_t(t0: f64) -> Self {
        let mut c = [[0.0; NT]; NX];
        c[0][0] = t0;
        if NT > 1 {
            c[0][1] = 1.0;
        }
        Self { c }
    }

    /// Partial derivative value `d^(i+l) u / dx^i dt^l` at the expansion
    /// point: the coefficient times `i! l!`.
    pub fn deriv(&self, i: usize, l: usize) -> f64 {
        self.c[i][l] * FACT[i] * FACT[l]
    }

    fn add_const(mut self, k: f64) -> Self {
        self.c[0][0] += k;
        self
    }

    /// Compose a smooth univariate function given its derivative values
    /// `derivs[k] = g^(k)(c[0][0])` for `k = 0..=ORDER`. Horner evaluation
    /// of the Taylor polynomial in `h = self - c[0][0]`; powers of `h`
    /// beyond `ORDER` vanish under truncation, so this is exact.
    fn compose(self, derivs: &[f64]) -> Self {
        let order = Self::ORDER;
        debug_assert!(derivs.len() > order);
        let mut h = self;
        h.c[0][0] = 0.0;
        let mut acc = Self::from_const(derivs[order] / FACT[order]);
        for k in (0..order).rev() {
            acc = h.mul(acc).add_const(derivs[k] / FACT[k]);
        }
        acc
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.c[0][0].sin_cos();
        self.compose(&[s, c, -s, -c, s])
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.c[0][0].sin_cos();
        self.compose(&[c, -s, -c, s, c])
    }

    pub fn cosh(self) -> Self {
        let ch = self.c[0][0].cosh();
        let sh = self.c[0][0].sinh();
        self.compose(&[ch, sh, ch, sh, ch])
    }

    pub fn exp(self) -> Self {
        let e = self.c[0][0].exp();
        self.compose(&[e; 5])
    }

    /// Multiplicative inverse; errors when the value lane is zero.
    pub fn recip(self) -> Result<Self> {
        let a = self.c[0][0];
        if a == 0.0 {
            return Err(Error::InvalidArgument(
                "reciprocal of a jet with zero value".into(),
            ));
        }
        // g^(k)(a) = (-1)^k k! / a^(k+1)
        let mut derivs = [0.0; 5];
        let mut p = 1.0 / a;
        let mut sign = 1.0;
        for k in 0..=Self::ORDER {
            derivs[k] = sign * FACT[k] * p;
            p /= a;
            sign = -sign;
        }
        Ok(self.compose(&derivs))
    }

    /// Integer power, exponents 1 through 3.
    pub fn powi(self, n: u32) -> Self {
        match n {
            1 => self,
            2 => self.mul(self),
            3 => self.mul(self).mul(self),
            _ => panic!("powi supports exponents 1..=3, got {n}"),
        }
    }

    pub fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const NX: usize, const NT: usize> Scalar for Tay<NX, NT> {
    fn from_const(c0: f64) -> Self {
        let mut c = [[0.0; NT]; NX];
        c[0][0] = c0;
        Self { c }
    }

    #[inline]
    fn add(mut self, o: Self) -> Self {
        for i in 0..NX {
            for l in 0..NT {
                self.c[i][l] += o.c[i][l];
            }
        }
        self
    }

    #[inline]
    fn sub(mut self, o: Self) -> Self {
        for i in 0..NX {
            for l in 0..NT {
                self.c[i][l] -= o.c[i][l];
            }
        }
        self
    }

    /// Truncated product: plain Cauchy convolution in both directions.
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut r = [[0.0; NT]; NX];
        for i in 0..NX {
            for j in 0..=i {
                for l in 0..NT {
                    for m in 0..=l {
                        r[i][l] += self.c[j][m] * o.c[i - j][l - m];
                    }
                }
            }
        }
        Self { c: r }
    }

    #[inline]
    fn scale(mut self, k: f64) -> Self {
        for i in 0..NX {
            for l in 0..NT {
                self.c[i][l] *= k;
            }
        }
        self
    }

    fn tanh(self) -> Self {
        // Derivatives of tanh at the value lane, via y = tanh(a) and
        // s = 1 - y^2 = sech^2(a):
        //   g'   = s
        //   g''  = -2 y s
        //   g''' = s (4 y^2 - 2 s)
        //   g'''' = y s (16 s - 8 y^2)
        let y = f64::tanh(self.c[0][0]);
        let s = 1.0 - y * y;
        self.compose(&[
            y,
            s,
            -2.0 * y * s,
            s * (4.0 * y * y - 2.0 * s),
            y * s * (16.0 * s - 8.0 * y * y),
        ])
    }

    #[inline]
    fn val(self) -> f64 {
        self.c[0][0]
    }

    #[inline]
    fn top(self) -> f64 {
        self.c[NX - 1][NT - 1]
    }

    #[inline]
    fn top_mul(self, o: Self) -> f64 {
        let mut r = 0.0;
        for j in 0..NX {
            for m in 0..NT {
                r += self.c[j][m] * o.c[NX - 1 - j][NT - 1 - m];
            }
        }
        r
    }
}

impl<const NX: usize, const NT: usize> std::ops::Add for Tay<NX, NT> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Scalar::add(self, o)
    }
}

impl<const NX: usize, const NT: usize> std::ops::Sub for Tay<NX, NT> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Scalar::sub(self, o)
    }
}

impl<const NX: usize, const NT: usize> std::ops::Mul for Tay<NX, NT> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Scalar::mul(self, o)
    }
}

impl<const NX: usize, const NT: usize> std::ops::Neg for Tay<NX, NT> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type T42 = Tay<4, 2>;

    fn expand<const NX: usize, const NT: usize>(
        f: impl Fn(Tay<NX, NT>, Tay<NX, NT>) -> Tay<NX, NT>,
        x0: f64,
        t0: f64,
    ) -> Tay<NX, NT> {
        f(Tay::var_x(x0), Tay::var_t(t0))
    }

    #[test]
    fn polynomial_jet_is_exact() {
        // u = x^3 t + 2 x at (x,t) = (1.5, -0.5)
        let u = expand::<4, 2>(
            |x, t| x.powi(3).mul(t).add(x.scale(2.0)),
            1.5,
            -0.5,
        );
        let (x, t) = (1.5, -0.5);
        assert_relative_eq!(u.deriv(0, 0), x * x * x * t + 2.0 * x, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(1, 0), 3.0 * x * x * t + 2.0, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(2, 0), 6.0 * x * t, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(3, 0), 6.0 * t, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(0, 1), x * x * x, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(1, 1), 3.0 * x * x, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(3, 1), 6.0, max_relative = 1e-14);
    }

    #[test]
    fn sin_jet_matches_closed_form() {
        // u = sin(2x + 3t): u_x = 2 cos, u_xx = -4 sin, u_xxx = -8 cos, u_t = 3 cos
        let (x0, t0) = (0.3, 0.7);
        let u = expand::<4, 2>(|x, t| x.scale(2.0).add(t.scale(3.0)).sin(), x0, t0);
        let a = 2.0 * x0 + 3.0 * t0;
        assert_relative_eq!(u.deriv(0, 0), a.sin(), max_relative = 1e-13);
        assert_relative_eq!(u.deriv(1, 0), 2.0 * a.cos(), max_relative = 1e-13);
        assert_relative_eq!(u.deriv(2, 0), -4.0 * a.sin(), max_relative = 1e-13);
        assert_relative_eq!(u.deriv(3, 0), -8.0 * a.cos(), max_relative = 1e-13);
        assert_relative_eq!(u.deriv(0, 1), 3.0 * a.cos(), max_relative = 1e-13);
        assert_relative_eq!(u.deriv(1, 1), -6.0 * a.sin(), max_relative = 1e-13);
    }

    #[test]
    fn tanh_jet_matches_closed_form() {
        // u = tanh(x): derivatives via s = sech^2.
        let x0 = 0.8_f64;
        let u = expand::<4, 2>(|x, _| x.tanh(), x0, 0.0);
        let y = x0.tanh();
        let s = 1.0 - y * y;
        assert_relative_eq!(u.deriv(0, 0), y, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(1, 0), s, max_relative = 1e-14);
        assert_relative_eq!(u.deriv(2, 0), -2.0 * y * s, max_relative = 1e-13);
        assert_relative_eq!(u.deriv(3, 0), s * (4.0 * y * y - 2.0 * s), max_relative = 1e-13);
        assert_eq!(u.deriv(0, 1), 0.0);
    }

    #[test]
    fn recip_and_cosh_match_sech_squared() {
        // sech^2(x) = 1 / cosh(x)^2, compared against tanh'(x).
        let x0 = 0.37_f64;
        let u = expand::<4, 2>(|x, _| x.cosh().powi(2).recip().unwrap(), x0, 0.0);
        let y = x0.tanh();
        let s = 1.0 - y * y;
        assert_relative_eq!(u.deriv(0, 0), s, max_relative = 1e-13);
        // d/dx sech^2 = -2 tanh sech^2
        assert_relative_eq!(u.deriv(1, 0), -2.0 * y * s, max_relative = 1e-12);
    }

    #[test]
    fn recip_of_zero_value_errors() {
        assert!(T42::from_const(0.0).recip().is_err());
    }

    #[test]
    fn truncation_is_consistent_across_widths() {
        // The same program at Tay<2,1> and Tay<4,2> must agree bit-for-bit
        // on the coefficients both can represent.
        let prog_narrow = |x: Tay<2, 1>| x.scale(0.7).tanh().mul(x).add(x.sin());
        let prog_wide = |x: Tay<4, 2>| x.scale(0.7).tanh().mul(x).add(x.sin());
        let n = prog_narrow(Tay::var_x(0.9));
        let w = prog_wide(Tay::var_x(0.9));
        assert_eq!(n.c[0][0].to_bits(), w.c[0][0].to_bits());
        assert_eq!(n.c[1][0].to_bits(), w.c[1][0].to_bits());
    }

    #[test]
    fn f64_lane_matches_jet_value_lane() {
        let fx = |x: f64| Scalar::tanh(x.scale(1.3)).mul(x).add(Scalar::from_const(0.25));
        let fj = |x: Tay<3, 2>| x.scale(1.3).tanh().mul(x).add(Tay::from_const(0.25));
        let x0 = -0.42;
        assert_eq!(fx(x0).to_bits(), fj(Tay::var_x(x0)).val().to_bits());
    }

    #[test]
    fn top_mul_equals_full_product_top() {
        let a = expand::<4, 2>(|x, t| x.sin().mul(t.add(x.scale(0.5))), 0.4, 1.1);
        let b = expand::<4, 2>(|x, t| x.cos().add(t.mul(x)), 0.4, 1.1);
        assert_relative_eq!(a.top_mul(b), a.mul(b).top(), max_relative = 1e-14);
    }

    #[test]
    fn exp_jet_matches_closed_form() {
        let u = expand::<3, 2>(|x, t| x.scale(0.5).add(t).exp(), 0.2, 0.1);
        let e = (0.5 * 0.2 + 0.1_f64).exp();
        assert_relative_eq!(u.deriv(0, 0), e, max_relative = 1e-13);
        assert_relative_eq!(u.deriv(1, 0), 0.5 * e, max_relative = 1e-13);
        assert_relative_eq!(u.deriv(2, 0), 0.25 * e, max_relative = 1e-13);
        assert_relative_eq!(u.deriv(0, 1), e, max_relative = 1e-13);
    }
}
