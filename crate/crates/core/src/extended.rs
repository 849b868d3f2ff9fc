//! Double-double arithmetic and exact-ish decimal conversion.
//!
//! Fourier-side moment values differ from spatial-side values by the factor
//! `(-i)^t (2 pi)^{q/2}`. Storing the product rounded to `f64` and dividing it
//! back out does not always return the original bits. Carrying the product in
//! double-double and writing 17 significant digits keeps enough information for
//! the division to land on the original `f64` again.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Neg};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleDouble = DoubleDouble { hi: 1.0, lo: 0.0 };
    /// 2 pi to about 32 digits.
    pub const TWO_PI: DoubleDouble = DoubleDouble {
        hi: 2.0 * PI,
        lo: 2.449_293_598_294_706_4e-16,
    };

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return DoubleDouble::ZERO;
        }
        let s = self.hi.sqrt();
        let (p, e) = two_prod(s, s);
        let resid = ((self.hi - p) - e + self.lo) / (2.0 * s);
        let (hi, lo) = quick_two_sum(s, resid);
        DoubleDouble { hi, lo }
    }

    pub fn powi(self, exp: u32) -> Self {
        let mut result = DoubleDouble::ONE;
        let mut base = self;
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(base);
            }
            base = base.mul(base);
            e >>= 1;
        }
        result
    }

    fn cmp_abs(self, other: Self) -> Ordering {
        let a = self.abs();
        let b = other.abs();
        a.hi.total_cmp(&b.hi).then(a.lo.total_cmp(&b.lo))
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            self.neg()
        } else {
            self
        }
    }

    /// Nearest integer (ties away from zero), returned as an i128.
    fn round_to_i128(self) -> i128 {
        let h = self.hi.round();
        if h == self.hi {
            h as i128 + self.lo.round() as i128
        } else {
            let frac = DoubleDouble::from_f64(self.hi - h).add(DoubleDouble::from_f64(self.lo));
            let mut n = h as i128;
            if frac.hi > 0.5 || (frac.hi == 0.5 && frac.lo >= 0.0) {
                n += 1;
            } else if frac.hi < -0.5 || (frac.hi == -0.5 && frac.lo <= 0.0) {
                n -= 1;
            }
            n
        }
    }
}

impl Neg for DoubleDouble {
    type Output = DoubleDouble;

    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = DoubleDouble;

    fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let (t, f) = two_sum(self.lo, other.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl Mul for DoubleDouble {
    type Output = DoubleDouble;

    fn mul(self, other: Self) -> Self {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + (self.hi * other.lo + self.lo * other.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = DoubleDouble;

    fn div(self, other: Self) -> Self {
        let q1 = self.hi / other.hi;
        let r = self.add(other.mul_f64(q1).neg());
        let q2 = r.hi / other.hi;
        let r = r.add(other.mul_f64(q2).neg());
        let q3 = r.hi / other.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo }.add(DoubleDouble::from_f64(q3))
    }
}

/// `(2 pi)^{q/2}` in double-double.
pub fn fourier_scale(q: usize) -> DoubleDouble {
    let half = (q / 2) as u32;
    let even = DoubleDouble::TWO_PI.powi(half);
    if q % 2 == 1 {
        even.mul(DoubleDouble::TWO_PI.sqrt())
    } else {
        even
    }
}

fn pow10(exp: i32) -> DoubleDouble {
    let ten = DoubleDouble::from_f64(10.0);
    if exp >= 0 {
        ten.powi(exp as u32)
    } else {
        DoubleDouble::ONE.div(ten.powi(exp.unsigned_abs()))
    }
}

/// Parse a decimal literal (JSON number grammar) into double-double.
///
/// Exponents far outside the normal range fall back to `f64` parsing.
pub fn parse_decimal(text: &str) -> Option<DoubleDouble> {
    let s = text.trim();
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (mantissa, exp_part) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], Some(&body[pos + 1..])),
        None => (body, None),
    };
    let mut exp10: i64 = match exp_part {
        Some(e) => e.parse().ok()?,
        None => 0,
    };
    let mut acc = DoubleDouble::ZERO;
    let mut seen_digit = false;
    let mut seen_point = false;
    let mut significant = 0usize;
    for ch in mantissa.chars() {
        match ch {
            '.' if !seen_point => seen_point = true,
            '0'..='9' => {
                seen_digit = true;
                let d = ch as u32 - '0' as u32;
                if significant < 32 {
                    acc = acc.mul_f64(10.0).add(DoubleDouble::from_f64(d as f64));
                    if acc.hi != 0.0 {
                        significant += 1;
                    }
                    if seen_point {
                        exp10 -= 1;
                    }
                } else if !seen_point {
                    exp10 += 1;
                }
            }
            _ => return None,
        }
    }
    if !seen_digit {
        return None;
    }
    let value = if acc.hi == 0.0 {
        DoubleDouble::ZERO
    } else if (-280..=280).contains(&exp10) {
        let p = pow10(exp10.unsigned_abs() as i32);
        if exp10 >= 0 {
            acc.mul(p)
        } else {
            acc.div(p)
        }
    } else {
        DoubleDouble::from_f64(s.parse::<f64>().ok()?.abs())
    };
    Some(if negative { value.neg() } else { value })
}

/// Format with 17 significant digits, rounded from the double-double value.
pub fn format_17(x: DoubleDouble) -> String {
    if !x.is_finite() {
        return format!("{}", x.to_f64());
    }
    if x.hi == 0.0 {
        return if x.hi.is_sign_negative() {
            "-0.0".to_string()
        } else {
            "0.0".to_string()
        };
    }
    let negative = x.hi < 0.0;
    let a = x.abs();
    if !(1e-280..=1e280).contains(&a.hi) {
        return format!("{:.16e}", x.to_f64());
    }
    let mut exp = a.hi.log10().floor() as i32;
    let lower = DoubleDouble::from_f64(1e16);
    let upper = DoubleDouble::from_f64(1e17);
    let mut digits;
    loop {
        let shift = 16 - exp;
        let scaled = if shift >= 0 {
            a.mul(pow10(shift))
        } else {
            a.div(pow10(-shift))
        };
        if scaled.cmp_abs(lower) == Ordering::Less {
            exp -= 1;
            continue;
        }
        if scaled.cmp_abs(upper) != Ordering::Less {
            exp += 1;
            continue;
        }
        digits = scaled.round_to_i128();
        if digits >= 100_000_000_000_000_000 {
            digits /= 10;
            exp += 1;
        }
        break;
    }
    let text = digits.to_string();
    let (head, tail) = text.split_at(1);
    format!(
        "{}{}.{}e{}",
        if negative { "-" } else { "" },
        head,
        tail,
        exp
    )
}

pub fn format_f64_17(x: f64) -> String {
    format_17(DoubleDouble::from_f64(x))
}
