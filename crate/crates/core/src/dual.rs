//! First-order formal expansions `x0 + eps * x1` with lexicographic order.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

/// A number `x0 + eps * x1` where `eps` is a formal positive infinitesimal.
/// Products are truncated after the first order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub x0: f64,
    pub x1: f64,
}

/// Per-order zero thresholds for lexicographic comparisons.
#[derive(Debug, Clone, Copy)]
pub struct DualTol {
    pub zeroth: f64,
    pub first: f64,
}

impl Dual {
    pub const ZERO: Dual = Dual { x0: 0.0, x1: 0.0 };
    pub const ONE: Dual = Dual { x0: 1.0, x1: 0.0 };

    pub const fn new(x0: f64, x1: f64) -> Self {
        Self { x0, x1 }
    }

    pub const fn real(x0: f64) -> Self {
        Self { x0, x1: 0.0 }
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.x0 * k, self.x1 * k)
    }

    /// Lexicographic sign: -1, 0 or 1.
    pub fn signum(self, tol: DualTol) -> i8 {
        if self.x0 > tol.zeroth {
            1
        } else if self.x0 < -tol.zeroth {
            -1
        } else if self.x1 > tol.first {
            1
        } else if self.x1 < -tol.first {
            -1
        } else {
            0
        }
    }

    pub fn is_zero(self, tol: DualTol) -> bool {
        self.signum(tol) == 0
    }

    pub fn abs(self, tol: DualTol) -> Self {
        if self.signum(tol) < 0 {
            -self
        } else {
            self
        }
    }

    pub fn cmp_lex(self, other: Self, tol: DualTol) -> Ordering {
        match (self - other).signum(tol) {
            1 => Ordering::Greater,
            -1 => Ordering::Less,
            _ => Ordering::Equal,
        }
    }

    /// Quotient when the divisor has a nonzero zeroth-order part.
    pub fn checked_div(self, rhs: Self, zeroth_tol: f64) -> Option<Self> {
        if rhs.x0.abs() <= zeroth_tol {
            return None;
        }
        let q0 = self.x0 / rhs.x0;
        Some(Self::new(q0, (self.x1 - q0 * rhs.x1) / rhs.x0))
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.x0 + rhs.x0, self.x1 + rhs.x1)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.x0 - rhs.x0, self.x1 - rhs.x1)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.x0, -self.x1)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.x0 * rhs.x0, self.x0 * rhs.x1 + self.x1 * rhs.x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: DualTol = DualTol {
        zeroth: 1e-12,
        first: 1e-12,
    };

    #[test]
    fn lexicographic_order() {
        let a = Dual::new(1.0, -100.0);
        let b = Dual::new(0.5, 100.0);
        assert_eq!(a.cmp_lex(b, TOL), Ordering::Greater);
        let c = Dual::new(1.0, 2.0);
        assert_eq!(a.cmp_lex(c, TOL), Ordering::Less);
        assert_eq!(Dual::new(0.0, -1.0).signum(TOL), -1);
        assert_eq!(Dual::new(0.0, -1.0).abs(TOL), Dual::new(0.0, 1.0));
    }

    #[test]
    fn truncated_product_and_quotient() {
        let a = Dual::new(2.0, 3.0);
        let b = Dual::new(4.0, -1.0);
        assert_eq!(a * b, Dual::new(8.0, 10.0));
        let q = (a * b).checked_div(b, 1e-15).unwrap();
        assert!((q.x0 - 2.0).abs() < 1e-15 && (q.x1 - 3.0).abs() < 1e-15);
        assert!(a.checked_div(Dual::new(0.0, 1.0), 1e-15).is_none());
    }
}
