//! Scalar abstraction over the two supported precisions.
//!
//! All numeric state (features, weights, embeddings, summaries, messages) is
//! generic over [`Real`]. 32-bit is the default execution mode; 64-bit is
//! used for verification runs with tighter tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, SubAssign};

use num_traits::Float;

/// Floating-point scalar the engines are generic over.
pub trait Real:
    Float + AddAssign + SubAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Short label used in file headers and CLI output ("f32" / "f64").
    const LABEL: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Default comparison tolerance for this precision.
    fn default_tolerance() -> Tolerance;
}

impl Real for f32 {
    const LABEL: &'static str = "f32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn default_tolerance() -> Tolerance {
        Tolerance::F32
    }
}

impl Real for f64 {
    const LABEL: &'static str = "f64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn default_tolerance() -> Tolerance {
        Tolerance::F64
    }
}

/// Mixed absolute/relative comparison bound.
///
/// Two values pass when `|a - b| <= atol + rtol * |b|`, with `b` playing the
/// reference role (the from-scratch recompute in oracle checks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    /// Bound for 32-bit runs: 1e-4 relative, 1e-6 absolute.
    pub const F32: Tolerance = Tolerance { rtol: 1e-4, atol: 1e-6 };
    /// Bound for 64-bit runs: 1e-9 relative, 1e-12 absolute.
    pub const F64: Tolerance = Tolerance { rtol: 1e-9, atol: 1e-12 };

    /// Exact bitwise equality expressed as a tolerance.
    pub const EXACT: Tolerance = Tolerance { rtol: 0.0, atol: 0.0 };

    pub fn check(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.atol + self.rtol * b.abs()
    }

    pub fn check_slice<T: Real>(&self, a: &[T], b: &[T]) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(&x, &y)| self.check(x.as_f64(), y.as_f64()))
    }

    /// Row-scaled comparison: each entry must lie within
    /// `atol + rtol * max_j |b_j|`. Entries that are small only through
    /// cancellation are judged against the row's magnitude, which is the
    /// scale accumulated rounding actually follows.
    pub fn check_rows<T: Real>(&self, a: &[T], b: &[T]) -> bool {
        if a.len() != b.len() {
            return false;
        }
        let scale = b.iter().fold(0.0f64, |m, &x| m.max(x.as_f64().abs()));
        let bound = self.atol + self.rtol * scale;
        a.iter().zip(b).all(|(&x, &y)| (x.as_f64() - y.as_f64()).abs() <= bound)
    }
}

/// Largest absolute and relative deviation over paired entries.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Deviation {
    pub max_abs: f64,
    pub max_rel: f64,
}

impl Deviation {
    pub fn record(&mut self, a: f64, b: f64) {
        let abs = (a - b).abs();
        if abs > self.max_abs {
            self.max_abs = abs;
        }
        if b.abs() > 0.0 {
            let rel = abs / b.abs();
            if rel > self.max_rel {
                self.max_rel = rel;
            }
        } else if abs > 0.0 && self.max_rel < f64::INFINITY {
            // Deviating from an exact zero has no meaningful relative error;
            // it is still captured by max_abs.
        }
    }

    pub fn record_slices<T: Real>(&mut self, a: &[T], b: &[T]) {
        for (&x, &y) in a.iter().zip(b) {
            self.record(x.as_f64(), y.as_f64());
        }
    }

    /// Passes when every recorded pair individually met `tol`; conservative
    /// form used for summary reporting: abs within atol or rel within rtol.
    pub fn within(&self, tol: Tolerance) -> bool {
        self.max_abs <= tol.atol || self.max_rel <= tol.rtol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_mixes_absolute_and_relative() {
        let tol = Tolerance { rtol: 1e-4, atol: 1e-6 };
        assert!(tol.check(1.00009, 1.0));
        assert!(!tol.check(1.001, 1.0));
        // Near zero the absolute floor dominates.
        assert!(tol.check(5e-7, 0.0));
        assert!(!tol.check(5e-6, 0.0));
    }

    #[test]
    fn deviation_tracks_maxima() {
        let mut dev = Deviation::default();
        dev.record(1.0, 1.0);
        dev.record(2.0, 1.0);
        dev.record(0.5, 0.4);
        assert_eq!(dev.max_abs, 1.0);
        assert!((dev.max_rel - 1.0).abs() < 1e-12);
    }
}
