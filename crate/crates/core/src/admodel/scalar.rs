use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use super::Activation;

/// Arithmetic needed by the generic forward/backward passes.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + std::fmt::Debug
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    /// `(ρ(self), ρ'(self))` lifted to this scalar type.
    fn activate(self, act: Activation) -> (Self, Self);
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn activate(self, act: Activation) -> (Self, Self) {
        let d = act.derivatives(self);
        (d[0], d[1])
    }
}

/// First-order dual number `v + d ε`, `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }

    pub fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.d += o.d;
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }

    #[inline]
    fn activate(self, act: Activation) -> (Self, Self) {
        let [f, f1, f2, _] = act.derivatives(self.v);
        (Dual::new(f, f1 * self.d), Dual::new(f1, f2 * self.d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = x * x * x;
        assert_eq!(y, Dual::new(27.0, 27.0));
    }

    #[test]
    fn tanh_lift() {
        let (f, df) = Dual::new(0.0, 1.0).activate(Activation::Tanh);
        assert_eq!(f, Dual::new(0.0, 1.0));
        // d/dx tanh'(x) at 0 is tanh''(0) = 0
        assert_eq!(df, Dual::new(1.0, 0.0));
    }
}
