//! Multi-indices, points, boxes and Hermite-function evaluation.
//!
//! The orthonormal Hermite functions are evaluated through their three-term
//! recurrence with the Gaussian weight folded in, which keeps every value
//! bounded by `pi^{-1/4}`.

use std::cmp::Ordering;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `pi^{-1/4}`, the value of `psi_0(0)`.
pub const PSI0_AT_ZERO: f64 = 0.751_125_544_464_942_5;

/// Below this separation the Christoffel-Darboux quotient cancels badly and
/// the direct sum is used instead.
pub const CD_DIAGONAL_SWITCH: f64 = 1e-6;

// exp(-650) is still a normal f64; past that psi_0 underflows.
const WEIGHTED_RANGE: f64 = 650.0;

/// A q-tuple of nonnegative degrees.
///
/// Ordering is graded lexicographic: by total degree first, then
/// lexicographically on the degrees.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(degrees: Vec<u32>) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::invalid("multi-index needs at least one component"));
        }
        Ok(MultiIndex(degrees))
    }

    pub fn zero(q: usize) -> Self {
        MultiIndex(vec![0; q.max(1)])
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&d| d as usize).sum()
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total()
            .cmp(&other.total())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact binomial coefficient; saturates at `usize::MAX`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Number of q-variate multi-indices with total degree below `bound`.
pub fn index_count(q: usize, bound: usize) -> usize {
    if bound == 0 {
        0
    } else {
        binomial(bound - 1 + q, q)
    }
}

/// Position of `k` in the graded-lex enumeration of its dimension.
pub fn graded_lex_rank(k: &MultiIndex) -> usize {
    let q = k.dim();
    let total = k.total();
    let mut rank = index_count(q, total);
    let mut remaining = total;
    for (i, &d) in k.degrees().iter().enumerate().take(q - 1) {
        let parts_after = q - i - 1;
        for v in 0..d as usize {
            // compositions of (remaining - v) into parts_after parts
            rank += binomial(remaining - v + parts_after - 1, parts_after - 1);
        }
        remaining -= d as usize;
    }
    rank
}

/// All multi-indices of dimension `q` with total degree below `bound`, in
/// graded-lex order.
pub fn enumerate_indices(q: usize, bound: usize) -> Result<Vec<MultiIndex>> {
    if q == 0 {
        return Err(Error::invalid("dimension q must be at least 1"));
    }
    let mut out = Vec::with_capacity(index_count(q, bound));
    let mut scratch = vec![0u32; q];
    for total in 0..bound {
        compositions(total as u32, 0, &mut scratch, &mut out);
    }
    Ok(out)
}

fn compositions(remaining: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.to_vec()));
        return;
    }
    for v in 0..=remaining {
        scratch[pos] = v;
        compositions(remaining - v, pos + 1, scratch, out);
    }
}

/// A location in R^q.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("point needs at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Point(coords))
    }

    pub fn origin(q: usize) -> Self {
        Point(vec![0.0; q.max(1)])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        euclidean(&self.0, &other.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Lexicographic comparison of coordinates.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        lex_cmp(&self.0, &other.0)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_q, hi_q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct Region {
    lo: Point,
    hi: Point,
}

#[derive(Serialize, Deserialize)]
struct RegionRepr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RegionRepr> for Region {
    type Error = Error;
    fn try_from(r: RegionRepr) -> Result<Self> {
        Region::new(Point::new(r.lo)?, Point::new(r.hi)?)
    }
}

impl From<Region> for RegionRepr {
    fn from(r: Region) -> Self {
        RegionRepr {
            lo: r.lo.0,
            hi: r.hi.0,
        }
    }
}

impl Region {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if lo.dim() != hi.dim() {
            return Err(Error::DimensionMismatch {
                expected: lo.dim(),
                found: hi.dim(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::invalid("box needs lo <= hi on every axis"));
        }
        Ok(Region { lo, hi })
    }

    /// The cube `[lo, hi]^q`.
    pub fn cube(q: usize, lo: f64, hi: f64) -> Result<Self> {
        Region::new(Point::new(vec![lo; q])?, Point::new(vec![hi; q])?)
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// `max |c|` over all box corners, i.e. the sup-norm radius of the box.
    pub fn max_abs(&self) -> f64 {
        self.lo.max_abs().max(self.hi.max_abs())
    }
}

/// Fill `out[j] = psi_j(x)` for `j < out.len()`.
///
/// Forward recurrence
/// `psi_j = x sqrt(2/j) psi_{j-1} - sqrt((j-1)/j) psi_{j-2}`
/// seeded with `psi_0 = pi^{-1/4} e^{-x^2/2}` and `psi_1 = sqrt(2) x psi_0`.
/// Far from the origin the Gaussian factor is carried as a separate
/// logarithm so that `psi_0` underflowing does not zero out the whole table.
pub(crate) fn hermite_fill(x: f64, out: &mut [f64]) {
    let len = out.len();
    if len == 0 {
        return;
    }
    let half_sq = 0.5 * x * x;
    if half_sq < WEIGHTED_RANGE {
        out[0] = PSI0_AT_ZERO * (-half_sq).exp();
        if len > 1 {
            out[1] = SQRT_2 * x * out[0];
        }
        for j in 2..len {
            let jf = j as f64;
            out[j] = x * (2.0 / jf).sqrt() * out[j - 1] - ((jf - 1.0) / jf).sqrt() * out[j - 2];
        }
    } else {
        hermite_fill_scaled(x, half_sq, out);
    }
}

fn hermite_fill_scaled(x: f64, half_sq: f64, out: &mut [f64]) {
    const RESCALE: f64 = 1e200;
    let ln_rescale = RESCALE.ln();
    let mut log_scale = -half_sq;
    let mut prev = PSI0_AT_ZERO;
    out[0] = prev * log_scale.exp();
    if out.len() == 1 {
        return;
    }
    let mut cur = SQRT_2 * x * prev;
    out[1] = cur * log_scale.exp();
    for (j, slot) in out.iter_mut().enumerate().skip(2) {
        let jf = j as f64;
        let next = x * (2.0 / jf).sqrt() * cur - ((jf - 1.0) / jf).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += ln_rescale;
        }
        *slot = cur * log_scale.exp();
    }
}

/// `[psi_0(x), ..., psi_max_degree(x)]`.
pub fn hermite_eval_univariate(x: f64, max_degree: usize) -> Result<Vec<f64>> {
    if !x.is_finite() {
        return Err(Error::NonFinite("hermite argument"));
    }
    let mut out = vec![0.0; max_degree + 1];
    hermite_fill(x, &mut out);
    Ok(out)
}

/// Per-axis tables `psi_j(x_a)` for `j < degrees`, shared by every
/// multi-index evaluated at the same point.
#[derive(Debug, Clone)]
pub struct AxisTables {
    degrees: usize,
    // axis-major: tables[a * degrees + j] = psi_j(x_a)
    tables: Vec<f64>,
}

impl AxisTables {
    pub fn new(x: &[f64], degrees: usize) -> Self {
        let mut tables = vec![0.0; x.len() * degrees];
        if degrees > 0 {
            for (a, chunk) in tables.chunks_mut(degrees).enumerate() {
                hermite_fill(x[a], chunk);
            }
        }
        AxisTables { degrees, tables }
    }

    pub fn degrees(&self) -> usize {
        self.degrees
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.tables[a * self.degrees..(a + 1) * self.degrees]
    }

    /// `psi_k(x) = prod_a psi_{k_a}(x_a)`. Every degree must be below
    /// [`AxisTables::degrees`].
    #[inline]
    pub fn psi(&self, k: &[u32]) -> f64 {
        product_from_axes(k, |a| self.axis(a))
    }
}

/// The tensor product, multiplied in axis order. All multivariate values in
/// the crate go through this so that identical inputs give identical bits.
#[inline]
pub(crate) fn product_from_axes<'a>(k: &[u32], axis: impl Fn(usize) -> &'a [f64]) -> f64 {
    let mut acc = axis(0)[k[0] as usize];
    for (a, &d) in k.iter().enumerate().skip(1) {
        acc *= axis(a)[d as usize];
    }
    acc
}

/// `psi_k(x)` for a single multi-index.
pub fn hermite_eval_multivariate(x: &Point, k: &MultiIndex) -> Result<f64> {
    if x.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: k.dim(),
        });
    }
    let max = *k.degrees().iter().max().unwrap_or(&0) as usize;
    let tables = AxisTables::new(x.coords(), max + 1);
    Ok(tables.psi(k.degrees()))
}

/// `sum_{j < n} psi_j(x) psi_j(y)`.
///
/// Off the diagonal this uses the Christoffel-Darboux quotient; within
/// [`CD_DIAGONAL_SWITCH`] of it the sum is formed directly.
pub fn christoffel_darboux(x: f64, y: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("christoffel_darboux needs n >= 1"));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("christoffel_darboux arguments"));
    }
    let mut px = vec![0.0; n + 1];
    let mut py = vec![0.0; n + 1];
    hermite_fill(x, &mut px);
    hermite_fill(y, &mut py);
    if (x - y).abs() <= CD_DIAGONAL_SWITCH {
        Ok(px[..n].iter().zip(&py[..n]).map(|(a, b)| a * b).sum())
    } else {
        let nf = n as f64;
        Ok((nf / 2.0).sqrt() * (px[n] * py[n - 1] - py[n] * px[n - 1]) / (x - y))
    }
}

/// Closed form of `sum_j psi_j(y) psi_j(z) r^{|j|_1}` over all multi-indices.
pub fn mehler_closed_form(y: &Point, z: &Point, r: f64) -> Result<f64> {
    if y.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            expected: y.dim(),
            found: z.dim(),
        });
    }
    if !r.is_finite() || r.abs() >= 1.0 {
        return Err(Error::invalid(format!("Mehler parameter needs |r| < 1, got {r}")));
    }
    let q = y.dim() as f64;
    let dot: f64 = y.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    let norms: f64 = y.iter().chain(z.iter()).map(|a| a * a).sum();
    let one_minus = 1.0 - r * r;
    let exponent = (2.0 * dot * r - norms * r * r) / one_minus - norms / 2.0;
    Ok((PI * one_minus).powf(-q / 2.0) * exponent.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extended::DoubleDouble;
    use proptest::prelude::*;

    /// Physicists' Hermite polynomial coefficients, lowest degree first.
    /// Exact integers for the degrees used here.
    fn hermite_poly_coeffs(j: usize) -> Vec<i128> {
        let mut prev = vec![1i128];
        if j == 0 {
            return prev;
        }
        let mut cur = vec![0i128, 2];
        for m in 1..j {
            // H_{m+1} = 2x H_m - 2m H_{m-1}
            let mut next = vec![0i128; m + 2];
            for (i, c) in cur.iter().enumerate() {
                next[i + 1] += 2 * c;
            }
            for (i, c) in prev.iter().enumerate() {
                next[i] -= 2 * m as i128 * c;
            }
            prev = cur;
            cur = next;
        }
        cur
    }

    /// `(2^j j! sqrt(pi))^{-1/2} H_j(x) e^{-x^2/2}` with the polynomial
    /// evaluated by Horner in double-double.
    fn psi_explicit(j: usize, x: f64) -> f64 {
        let coeffs = hermite_poly_coeffs(j);
        let xd = DoubleDouble::from_f64(x);
        let h = coeffs.iter().rev().fold(DoubleDouble::ZERO, |acc, &c| {
            let hi = c as f64;
            let lo = (c - hi as i128) as f64;
            acc * xd + DoubleDouble { hi, lo }
        });
        let log_norm = 0.5 * ((j as f64) * 2f64.ln() + ln_factorial(j) + PI.ln() * 0.5);
        h.to_f64() * (-0.5 * x * x - log_norm).exp()
    }

    fn ln_factorial(j: usize) -> f64 {
        (1..=j).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn univariate_examples() {
        let v = hermite_eval_univariate(0.0, 0).unwrap();
        assert_eq!(v, vec![0.7511255444649425]);
        let v = hermite_eval_univariate(0.0, 1).unwrap();
        assert_eq!(v[0], PSI0_AT_ZERO);
        assert_eq!(v[1], 0.0);
        let v = hermite_eval_univariate(0.0, 2).unwrap();
        // (2^2 2! sqrt(pi))^{-1/2} * H_2(0) = -2 / sqrt(8 sqrt(pi))
        let oracle = -2.0 / (8.0 * PI.sqrt()).sqrt();
        assert!((v[2] - oracle).abs() < 1e-15);
        assert!((v[2] + 0.5311259660135985).abs() < 1e-15);
    }

    #[test]
    fn univariate_rejects_non_finite() {
        assert!(hermite_eval_univariate(f64::NAN, 3).is_err());
        assert!(hermite_eval_univariate(f64::INFINITY, 3).is_err());
    }

    #[test]
    fn recurrence_matches_explicit_polynomials() {
        let mut x = -10.0;
        while x <= 10.0 {
            let table = hermite_eval_univariate(x, 30).unwrap();
            for (j, &value) in table.iter().enumerate() {
                let oracle = psi_explicit(j, x);
                let scale = oracle.abs().max(1e-300);
                // relative agreement where the value is not deep in the tail
                if oracle.abs() > 1e-200 {
                    assert!(
                        (value - oracle).abs() / scale < 1e-10,
                        "j={j} x={x} rec={value} explicit={oracle}"
                    );
                }
            }
            x += 0.37;
        }
    }

    #[test]
    fn scaled_path_agrees_with_direct_path_near_the_switch() {
        // Force both code paths at the same argument.
        let x = (2.0 * WEIGHTED_RANGE).sqrt() - 1e-9;
        let mut direct = vec![0.0; 400];
        hermite_fill(x, &mut direct);
        let mut scaled = vec![0.0; 400];
        hermite_fill_scaled(x, 0.5 * x * x, &mut scaled);
        for j in 0..400 {
            let tol = 1e-12 * direct[j].abs().max(1e-300);
            assert!((direct[j] - scaled[j]).abs() <= tol, "j={j}");
        }
    }

    #[test]
    fn far_tail_keeps_high_degrees_alive() {
        // psi_0(40) underflows, but psi_900(40) is O(0.1).
        let t = hermite_eval_univariate(40.0, 900).unwrap();
        assert!(t[0] == 0.0 || t[0] < 1e-300);
        assert!(t[900].abs() > 1e-3);
    }

    #[test]
    fn parity_holds() {
        for &x in &[0.1, 0.9, 2.3, 5.5, 9.0] {
            let p = hermite_eval_univariate(x, 60).unwrap();
            let m = hermite_eval_univariate(-x, 60).unwrap();
            for j in 0..=60 {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let tol = 1e-14 * p[j].abs().max(1e-300);
                assert!((m[j] - sign * p[j]).abs() <= tol, "j={j} x={x}");
            }
        }
    }

    #[test]
    fn multivariate_examples() {
        let v = hermite_eval_multivariate(
            &Point::new(vec![0.0, 0.0]).unwrap(),
            &MultiIndex::new(vec![0, 0]).unwrap(),
        )
        .unwrap();
        assert!((v - 1.0 / PI.sqrt()).abs() < 1e-15);
        let v = hermite_eval_multivariate(
            &Point::new(vec![0.0, 3.0]).unwrap(),
            &MultiIndex::new(vec![1, 0]).unwrap(),
        )
        .unwrap();
        assert_eq!(v, 0.0);
        let v = hermite_eval_multivariate(
            &Point::new(vec![1.0, -1.0]).unwrap(),
            &MultiIndex::new(vec![2, 2]).unwrap(),
        )
        .unwrap();
        // psi_2(1) = (4 - 2) e^{-1/2} / sqrt(8 sqrt(pi))
        let psi2 = 2.0 * (-0.5f64).exp() / (8.0 * PI.sqrt()).sqrt();
        assert!((v - psi2 * psi2).abs() < 1e-15);
    }

    #[test]
    fn multivariate_dimension_mismatch() {
        let err = hermite_eval_multivariate(
            &Point::new(vec![0.0]).unwrap(),
            &MultiIndex::new(vec![0, 0]).unwrap(),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn enumeration_examples() {
        let e = enumerate_indices(1, 3).unwrap();
        let d: Vec<_> = e.iter().map(|k| k.degrees().to_vec()).collect();
        assert_eq!(d, vec![vec![0], vec![1], vec![2]]);
        let e = enumerate_indices(2, 2).unwrap();
        let d: Vec<_> = e.iter().map(|k| k.degrees().to_vec()).collect();
        assert_eq!(d, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        // direct double loop count
        let mut count = 0;
        for a in 0..64 {
            for b in 0..64 {
                if a + b < 64 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 2080);
        assert_eq!(enumerate_indices(2, 64).unwrap().len(), count);
        assert_eq!(index_count(2, 64), 2080);
        assert!(enumerate_indices(0, 3).is_err());
        assert!(enumerate_indices(3, 0).unwrap().is_empty());
    }

    #[test]
    fn enumeration_is_sorted_and_ranked() {
        for q in 1..=4 {
            let e = enumerate_indices(q, 9).unwrap();
            assert_eq!(e.len(), index_count(q, 9));
            for (i, k) in e.iter().enumerate() {
                assert_eq!(graded_lex_rank(k), i);
                if i > 0 {
                    assert!(e[i - 1] < *k);
                }
            }
        }
    }

    #[test]
    fn christoffel_darboux_examples() {
        let x = 0.83;
        let psi0 = hermite_eval_univariate(x, 0).unwrap()[0];
        assert!((christoffel_darboux(x, x, 1).unwrap() - psi0 * psi0).abs() < 1e-16);
        assert!((christoffel_darboux(0.0, 0.0, 2).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-15);
        let direct: f64 = {
            let a = hermite_eval_univariate(0.7, 19).unwrap();
            let b = hermite_eval_univariate(0.3, 19).unwrap();
            a.iter().zip(&b).map(|(u, v)| u * v).sum()
        };
        assert!((christoffel_darboux(0.7, 0.3, 20).unwrap() - direct).abs() < 1e-10);
        assert!(christoffel_darboux(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn christoffel_darboux_identity_sweep() {
        let pairs = [(0.0, 1e-3), (1.5, -2.0), (-3.0, 7.0), (0.25, 0.2505), (4.0, -6.0)];
        for n in [1usize, 5, 17, 64, 120, 200] {
            for &(x, y) in &pairs {
                let a = hermite_eval_univariate(x, n - 1).unwrap();
                let b = hermite_eval_univariate(y, n - 1).unwrap();
                let direct: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
                let cd = christoffel_darboux(x, y, n).unwrap();
                assert!((cd - direct).abs() < 1e-9, "n={n} x={x} y={y}: {cd} vs {direct}");
            }
        }
    }

    fn mehler_series(y: &[f64], z: &[f64], r: f64, terms: usize) -> f64 {
        y.iter()
            .zip(z)
            .map(|(&a, &b)| {
                let ta = hermite_eval_univariate(a, terms).unwrap();
                let tb = hermite_eval_univariate(b, terms).unwrap();
                let mut s = 0.0;
                let mut rp = 1.0;
                for j in 0..=terms {
                    s += ta[j] * tb[j] * rp;
                    rp *= r;
                }
                s
            })
            .product()
    }

    #[test]
    fn mehler_examples() {
        let o = Point::new(vec![0.0]).unwrap();
        assert!((mehler_closed_form(&o, &o, 0.0).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-15);
        let y = Point::new(vec![0.5]).unwrap();
        let z = Point::new(vec![-0.5]).unwrap();
        let closed = mehler_closed_form(&y, &z, 0.5).unwrap();
        // 0.5^200 is far below the requested accuracy
        assert!((closed - mehler_series(&[0.5], &[-0.5], 0.5, 199)).abs() < 1e-12);
        let o2 = Point::new(vec![0.0, 0.0]).unwrap();
        let one = mehler_closed_form(&o, &o, 0.3).unwrap();
        let two = mehler_closed_form(&o2, &o2, 0.3).unwrap();
        assert!((two - one * one).abs() < 1e-15);
        assert!(mehler_closed_form(&o, &o, 1.0).is_err());
        assert!(mehler_closed_form(&o, &o2, 0.1).is_err());
    }

    #[test]
    fn region_validation() {
        assert!(Region::cube(2, -1.0, 1.0).is_ok());
        assert!(Region::cube(2, 1.0, -1.0).is_err());
        let r = Region::cube(2, -1.0, 1.0).unwrap();
        assert!(r.contains(&Point::new(vec![0.0, 1.0]).unwrap()));
        assert!(!r.contains(&Point::new(vec![0.0, 1.1]).unwrap()));
        assert!(Point::new(vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn rank_inverts_enumeration(degrees in proptest::collection::vec(0u32..7, 1..4)) {
            let k = MultiIndex::new(degrees).unwrap();
            let all = enumerate_indices(k.dim(), k.total() + 1).unwrap();
            prop_assert_eq!(&all[graded_lex_rank(&k)], &k);
        }

        #[test]
        fn psi_is_bounded(x in -30.0f64..30.0) {
            let t = hermite_eval_univariate(x, 200).unwrap();
            for v in t {
                prop_assert!(v.abs() <= PSI0_AT_ZERO * (1.0 + 1e-12));
            }
        }
    }
}
