//! The substitution family `φ` with `φ' = φ^q`, `φ(0) = 1`.
//!
//! For `q = 1` this is `exp`; otherwise `φ(s) = [(1 - q)s + 1]^{1/(1-q)}` on
//! the interval `I_q` where the bracket is positive. For `0 < q < 1` the
//! truncated extension `[·]₊` makes `φ` defined (and zero) to the left of
//! `I_q`.

use crate::error::{Error, Result};

/// Inputs this close to a finite domain endpoint are snapped onto it.
const ENDPOINT_SNAP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiFamily {
    q: f64,
    truncated: bool,
}

impl PhiFamily {
    /// The family for exponent `q`. For `0 < q < 1` the truncated extension
    /// is used.
    pub fn new(q: f64) -> Result<Self> {
        Self::build(q, q > 0.0 && q < 1.0)
    }

    /// The family for `q` without truncation: evaluating left of `I_q` is a
    /// domain error in every regime.
    pub fn strict(q: f64) -> Result<Self> {
        Self::build(q, false)
    }

    fn build(q: f64, truncated: bool) -> Result<Self> {
        if q == 0.0 || !q.is_finite() {
            return Err(Error::Domain(format!("exponent q = {q} must be finite and nonzero")));
        }
        Ok(Self { q, truncated })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Endpoints of `I_q`, possibly infinite.
    pub fn domain(&self) -> (f64, f64) {
        let q = self.q;
        if q == 1.0 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else if q > 1.0 {
            (f64::NEG_INFINITY, 1.0 / (q - 1.0))
        } else {
            (-1.0 / (1.0 - q), f64::INFINITY)
        }
    }

    /// `ln((1 - q)s + 1)`, shared by the value and its derivatives so the
    /// two agree to rounding.
    fn ln_base(&self, s: f64) -> f64 {
        let t = (1.0 - self.q) * s;
        if t.abs() < 0.5 {
            t.ln_1p()
        } else {
            (1.0 - self.q).mul_add(s, 1.0).ln()
        }
    }

    fn snap(&self, s: f64) -> f64 {
        if !s.is_finite() {
            return s;
        }
        let (lo, hi) = self.domain();
        let tol = ENDPOINT_SNAP * s.abs().max(1.0);
        if lo.is_finite() && (s - lo).abs() <= tol {
            lo
        } else if hi.is_finite() && (s - hi).abs() <= tol {
            hi
        } else {
            s
        }
    }

    /// `φ(s)` on the closure of `I_q`, with endpoint limits.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if s.is_nan() {
            return Err(Error::Domain("φ of NaN".into()));
        }
        let q = self.q;
        if q == 1.0 {
            return Ok(s.exp());
        }
        let s = self.snap(s);
        let (lo, hi) = self.domain();
        if q > 1.0 {
            if s > hi {
                return Err(Error::Domain(format!("s = {s} beyond 1/(q-1) = {hi}")));
            }
            if s == hi {
                return Ok(f64::INFINITY);
            }
            if s == f64::NEG_INFINITY {
                return Ok(0.0);
            }
        } else {
            if s < lo {
                if self.truncated {
                    return Ok(0.0);
                }
                return Err(Error::Domain(format!("s = {s} below -1/(1-q) = {lo}")));
            }
            if s == lo {
                return Ok(0.0);
            }
            if s == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
        }
        Ok((self.ln_base(s) / (1.0 - q)).exp())
    }

    /// `φ⁻¹(t)`. For `q < 1` the continuous extension `φ⁻¹(0) = -1/(1-q)`
    /// is returned at `t = 0`.
    pub fn inverse(&self, t: f64) -> Result<f64> {
        let q = self.q;
        if t.is_nan() || t < 0.0 || (t == 0.0 && q >= 1.0) {
            return Err(Error::Domain(format!("φ⁻¹ undefined at t = {t} for q = {q}")));
        }
        if q == 1.0 {
            return Ok(t.ln());
        }
        if t == 0.0 {
            return Ok(-1.0 / (1.0 - q));
        }
        if t == f64::INFINITY {
            return Ok(self.domain().1);
        }
        Ok(((1.0 - q) * t.ln()).exp_m1() / (1.0 - q))
    }

    /// `(φ'(s), φ''(s))` for `s` in the open interval `I_q`.
    pub fn derivs(&self, s: f64) -> Result<(f64, f64)> {
        let q = self.q;
        if q == 1.0 {
            if !s.is_finite() {
                return Err(Error::Domain(format!("s = {s} not in I_q")));
            }
            let e = s.exp();
            return Ok((e, e));
        }
        let (lo, hi) = self.domain();
        if !(s > lo && s < hi) {
            return Err(Error::Domain(format!("s = {s} not in the open interval ({lo}, {hi})")));
        }
        let lb = self.ln_base(s);
        let d1 = (lb * q / (1.0 - q)).exp();
        let d2 = q * (lb * (2.0 * q - 1.0) / (1.0 - q)).exp();
        Ok((d1, d2))
    }
}
