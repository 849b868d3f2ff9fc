//! Gauss-Hermite and Gauss-Legendre rules.
//!
//! Nodes are found by Newton iteration on the three-term recurrences. The
//! Hermite rule is returned with the Gaussian folded into the weights, so it
//! integrates `f(x) dx` directly for integrands like `psi_j psi_k`.

use std::f64::consts::PI;

use crate::basis::hermite_fill;
use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 3e-14;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affine map of a rule on `[-1, 1]` onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> QuadratureRule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        QuadratureRule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| half * w).collect(),
        }
    }
}

/// Gauss-Hermite rule with `n` nodes and weights `w_i e^{x_i^2}`.
///
/// With orthonormal Hermite functions the scaled weight is
/// `1 / (n psi_{n-1}(x_i)^2)`. Positive roots are bracketed by a scan finer
/// than the smallest root gap, then polished by Newton steps kept inside the
/// bracket.
pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::invalid("quadrature needs at least one node"));
    }
    let nf = n as f64;
    let mut table = vec![0.0; n + 1];
    let psi_n = |x: f64, table: &mut Vec<f64>| {
        hermite_fill(x, table);
        table[n]
    };
    // All roots lie below sqrt(2n+1); gaps are never smaller than near 0.
    let upper = (2.0 * nf + 1.0).sqrt() + 1.0;
    let step = PI / (4.0 * (2.0 * nf + 1.0).sqrt());
    let mut brackets = Vec::with_capacity(n / 2);
    let mut a = 0.5 * step;
    let mut fa = psi_n(a, &mut table);
    while a < upper && brackets.len() < n / 2 {
        let b = a + step;
        let fb = psi_n(b, &mut table);
        if fa.signum() != fb.signum() {
            brackets.push((a, b, fa));
        }
        a = b;
        fa = fb;
    }
    if brackets.len() != n / 2 {
        return Err(Error::invalid(format!("could not bracket the roots of psi_{n}")));
    }
    let mut positive = Vec::with_capacity(n / 2);
    for (mut lo, mut hi, flo) in brackets {
        let mut z = 0.5 * (lo + hi);
        for _ in 0..NEWTON_MAX_ITER {
            hermite_fill(z, &mut table);
            let f = table[n];
            if f == 0.0 {
                break;
            }
            if f.signum() == flo.signum() {
                lo = z;
            } else {
                hi = z;
            }
            let slope = (2.0 * nf).sqrt() * table[n - 1];
            let mut next = z - f / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let moved = (next - z).abs();
            z = next;
            if moved <= NEWTON_TOL * z.abs().max(1.0) {
                break;
            }
        }
        positive.push(z);
    }
    let mut nodes = Vec::with_capacity(n);
    nodes.extend(positive.iter().rev().map(|z| -z));
    if n % 2 == 1 {
        nodes.push(0.0);
    }
    nodes.extend(positive.iter().copied());
    let weights = nodes
        .iter()
        .map(|&z| {
            hermite_fill(z, &mut table);
            1.0 / (nf * table[n - 1] * table[n - 1])
        })
        .collect();
    Ok(QuadratureRule { nodes, weights })
}

/// Gauss-Legendre rule with `n` nodes on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::invalid("quadrature needs at least one node"));
    }
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(n, z);
            deriv = dp;
            let step = p / dp;
            z -= step;
            if step.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        if dp.is_finite() {
            deriv = dp;
        }
        let w = 2.0 / ((1.0 - z * z) * deriv * deriv);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[m - 1] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
    }
    let nf = n as f64;
    let dp = nf * (z * p1 - p2) / (z * z - 1.0);
    (p1, dp)
}

/// Composite Gauss-Legendre on `[a, b]` with `panels` equal panels of
/// `per_panel` nodes each, nodes in increasing order.
pub fn composite_gauss_legendre(
    a: f64,
    b: f64,
    panels: usize,
    per_panel: usize,
) -> Result<QuadratureRule> {
    composite_on_breakpoints(&uniform_breakpoints(a, b, panels)?, per_panel)
}

pub(crate) fn uniform_breakpoints(a: f64, b: f64, panels: usize) -> Result<Vec<f64>> {
    if panels == 0 {
        return Err(Error::invalid("composite rule needs at least one panel"));
    }
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::invalid(format!("bad integration interval [{a}, {b}]")));
    }
    let h = (b - a) / panels as f64;
    Ok((0..=panels)
        .map(|i| if i == panels { b } else { a + i as f64 * h })
        .collect())
}

/// Composite Gauss-Legendre with panels between consecutive breakpoints.
pub fn composite_on_breakpoints(breaks: &[f64], per_panel: usize) -> Result<QuadratureRule> {
    let base = gauss_legendre(per_panel)?;
    let mut nodes = Vec::with_capacity((breaks.len().saturating_sub(1)) * per_panel);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for w in breaks.windows(2) {
        let panel = base.mapped(w[0], w[1]);
        nodes.extend(panel.nodes);
        weights.extend(panel.weights);
    }
    Ok(QuadratureRule { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(10).unwrap();
        // exact for degree <= 19
        let got = rule.integrate(|x| x.powi(18));
        assert!((got - 2.0 / 19.0).abs() < 1e-14);
        assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let mapped = rule.mapped(0.0, 3.0);
        assert!((mapped.integrate(|x| x * x) - 9.0).abs() < 1e-13);
    }

    #[test]
    fn legendre_nodes_sorted_and_symmetric() {
        for n in [1, 2, 7, 20, 51] {
            let r = gauss_legendre(n).unwrap();
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            for i in 0..n {
                assert!((r.nodes[i] + r.nodes[n - 1 - i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hermite_integrates_gaussian_moments() {
        let rule = gauss_hermite(20).unwrap();
        // integral of e^{-x^2} x^4 = 3 sqrt(pi) / 4
        let got = rule.integrate(|x| x.powi(4) * (-x * x).exp());
        assert!((got - 0.75 * PI.sqrt()).abs() < 1e-13);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hermite_single_node() {
        let rule = gauss_hermite(1).unwrap();
        assert_eq!(rule.nodes, vec![0.0]);
        assert!((rule.weights[0] - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn hermite_two_hundred_nodes_converge() {
        let rule = gauss_hermite(200).unwrap();
        assert_eq!(rule.len(), 200);
        let got = rule.integrate(|x| (-x * x).exp());
        assert!((got - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn composite_rule_covers_interval() {
        let r = composite_gauss_legendre(-2.0, 4.0, 6, 5).unwrap();
        assert_eq!(r.len(), 30);
        assert!((r.integrate(|_| 1.0) - 6.0).abs() < 1e-13);
        assert!(composite_gauss_legendre(1.0, 0.0, 3, 3).is_err());
        assert!(composite_gauss_legendre(0.0, 1.0, 0, 3).is_err());
    }
}
