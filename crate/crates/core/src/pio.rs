//! The filtered Hermite expansion `T_n` and its kernel `Phi_n`.
//!
//! `T_n(x) = n^{-q} sum_{|j|_1 < n^2} H(sqrt(|j|_1) / n) m(j) psi_j(x)`, and
//! `Phi_n(x, y)` is the same sum with `m(j)` replaced by `psi_j(y)`. Terms are
//! always accumulated in graded-lex order, one node at a time, so grid values
//! do not depend on how many threads computed them.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_indices, hermite_fill, index_count, product_from_axes, AxisTables, Point, Region};
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::moments::{MomentSet, Side};

/// How the per-node sum is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summation {
    #[default]
    Plain,
    /// Neumaier-compensated.
    Compensated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PioConfig {
    pub n: usize,
    pub q: usize,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub summation: Summation,
}

impl PioConfig {
    pub fn new(n: usize, q: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("scale n must be at least 1"));
        }
        if q == 0 {
            return Err(Error::invalid("dimension q must be at least 1"));
        }
        Ok(PioConfig {
            n,
            q,
            filter: FilterSpec::default(),
            summation: Summation::Plain,
        })
    }

    pub fn with_filter(mut self, filter: FilterSpec) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_summation(mut self, summation: Summation) -> Self {
        self.summation = summation;
        self
    }

    /// Indices with `|j|_1` below this bound enter the sum.
    pub fn degree_bound(&self) -> usize {
        self.n * self.n
    }

    pub fn index_count(&self) -> usize {
        index_count(self.q, self.degree_bound())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point"));
        }
        Ok(())
    }
}

/// Precomputed indices and weights for one configuration.
pub(crate) struct Plan {
    q: usize,
    bound: usize,
    summation: Summation,
    /// Flattened degrees, `q` per index.
    degrees: Vec<u32>,
    weights: Vec<f64>,
}

impl Plan {
    pub(crate) fn new(cfg: &PioConfig) -> Plan {
        let by_total = cfg.filter.degree_weights(cfg.n, cfg.q);
        let indices = enumerate_indices(cfg.q, cfg.degree_bound()).expect("q >= 1");
        let mut degrees = Vec::with_capacity(indices.len() * cfg.q);
        let mut weights = Vec::with_capacity(indices.len());
        for k in &indices {
            degrees.extend_from_slice(k.degrees());
            weights.push(by_total[k.total()]);
        }
        Plan {
            q: cfg.q,
            bound: cfg.degree_bound(),
            summation: cfg.summation,
            degrees,
            weights,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.weights.len()
    }

    /// The first `len()` spatial values of `m`, after depth and side checks.
    pub(crate) fn coefficients<'m>(&self, cfg: &PioConfig, m: &'m MomentSet) -> Result<&'m [Complex64]> {
        if m.side() == Side::Fourier {
            return Err(Error::FourierSide);
        }
        if m.q() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                found: m.q(),
            });
        }
        if m.max_total_degree() < self.bound {
            return Err(Error::MomentsTooShallow {
                n: cfg.n,
                required: self.bound,
                available: m.max_total_degree(),
            });
        }
        Ok(&m.spatial_values()[..self.len()])
    }

    fn index(&self, i: usize) -> &[u32] {
        &self.degrees[i * self.q..(i + 1) * self.q]
    }

    /// `T_n` at a point whose per-axis tables are supplied by `axis`.
    pub(crate) fn eval_with<'t>(&self, coeffs: &[Complex64], axis: impl Fn(usize) -> &'t [f64] + Copy) -> Complex64 {
        let terms = (0..self.len()).map(|i| {
            let psi = product_from_axes(self.index(i), axis);
            self.weights[i] * (coeffs[i] * psi)
        });
        match self.summation {
            Summation::Plain => terms.fold(Complex64::new(0.0, 0.0), |acc, t| acc + t),
            Summation::Compensated => {
                let mut re = Neumaier::default();
                let mut im = Neumaier::default();
                for t in terms {
                    re.add(t.re);
                    im.add(t.im);
                }
                Complex64::new(re.total(), im.total())
            }
        }
    }

    pub(crate) fn eval_at(&self, coeffs: &[Complex64], x: &[f64]) -> Complex64 {
        let tables = AxisTables::new(x, self.bound);
        self.eval_with(coeffs, |a| tables.axis(a))
    }

    pub(crate) fn kernel_at(&self, x: &[f64], y: &[f64]) -> f64 {
        let tx = AxisTables::new(x, self.bound);
        let ty = AxisTables::new(y, self.bound);
        let terms = (0..self.len()).map(|i| {
            let k = self.index(i);
            let px = product_from_axes(k, |a| tx.axis(a));
            let py = product_from_axes(k, |a| ty.axis(a));
            self.weights[i] * (px * py)
        });
        match self.summation {
            Summation::Plain => terms.fold(0.0, |acc, t| acc + t),
            Summation::Compensated => {
                let mut s = Neumaier::default();
                terms.for_each(|t| s.add(t));
                s.total()
            }
        }
    }
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `T_n(x)` from spatial-side moments.
pub fn pio_eval(cfg: &PioConfig, m: &MomentSet, x: &Point) -> Result<Complex64> {
    cfg.check_point(x)?;
    let plan = Plan::new(cfg);
    let coeffs = plan.coefficients(cfg, m)?;
    Ok(plan.eval_at(coeffs, x))
}

/// `Phi_n(x, y)`; symmetric bit-for-bit.
pub fn kernel_eval(cfg: &PioConfig, x: &Point, y: &Point) -> Result<f64> {
    cfg.check_point(x)?;
    cfg.check_point(y)?;
    Ok(Plan::new(cfg).kernel_at(x, y))
}

/// `Phi_n(x, x)`.
pub fn kernel_diag(cfg: &PioConfig, x: &Point) -> Result<f64> {
    kernel_eval(cfg, x, x)
}

/// Default refusal threshold for lattice sizes.
pub const DEFAULT_MAX_NODES: usize = 10_000_000;

/// A rectangular lattice `lo + i h` per axis, row-major with the last axis
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    lo: Vec<f64>,
    spacing: Vec<f64>,
    shape: Vec<usize>,
}

impl Lattice {
    /// Nodes `lo + i h` for every `i` with the node inside the box (a
    /// relative slack of `1e-9 h` admits an endpoint lost to rounding).
    pub fn from_spacing(region: &Region, spacing: f64) -> Result<Self> {
        Lattice::from_axis_spacing(region, &vec![spacing; region.dim()])
    }

    pub fn from_axis_spacing(region: &Region, spacing: &[f64]) -> Result<Self> {
        if spacing.len() != region.dim() {
            return Err(Error::DimensionMismatch {
                expected: region.dim(),
                found: spacing.len(),
            });
        }
        let mut shape = Vec::with_capacity(spacing.len());
        for (a, &h) in spacing.iter().enumerate() {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid(format!("spacing must be positive, got {h}")));
            }
            let extent = region.hi()[a] - region.lo()[a];
            let steps = (extent / h * (1.0 + 1e-9)).floor();
            if steps > 1e12 {
                return Err(Error::GridTooLarge {
                    nodes: usize::MAX,
                    cap: DEFAULT_MAX_NODES,
                });
            }
            shape.push(steps as usize + 1);
        }
        Ok(Lattice {
            lo: region.lo().coords().to_vec(),
            spacing: spacing.to_vec(),
            shape,
        })
    }

    /// `shape[a]` nodes per axis spanning the box end to end.
    pub fn from_shape(region: &Region, shape: &[usize]) -> Result<Self> {
        if shape.len() != region.dim() {
            return Err(Error::DimensionMismatch {
                expected: region.dim(),
                found: shape.len(),
            });
        }
        let mut spacing = Vec::with_capacity(shape.len());
        for (a, &s) in shape.iter().enumerate() {
            if s == 0 {
                return Err(Error::invalid("lattice needs at least one node per axis"));
            }
            let extent = region.hi()[a] - region.lo()[a];
            spacing.push(if s == 1 { extent.max(f64::MIN_POSITIVE) } else { extent / (s - 1) as f64 });
        }
        Ok(Lattice {
            lo: region.lo().coords().to_vec(),
            spacing,
            shape: shape.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    /// Total node count, saturating.
    pub fn len(&self) -> usize {
        self.shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s)).unwrap_or(usize::MAX)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.spacing[axis]
    }

    pub fn axis_coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.shape[axis]).map(|i| self.coordinate(axis, i)).collect()
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coordinate(a, i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOptions {
    pub max_nodes: usize,
    /// `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            max_nodes: DEFAULT_MAX_NODES,
            workers: None,
        }
    }
}

impl GridOptions {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_max_nodes(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub node_count: usize,
    pub max_modulus: f64,
    /// Flat index of the first node attaining `max_modulus`.
    pub argmax: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    pub lattice: Lattice,
    pub values: Vec<Complex64>,
    pub stats: GridStats,
}

impl GridEvaluation {
    pub fn modulus(&self, flat: usize) -> f64 {
        self.values[flat].norm()
    }

    /// `x1,...,xq,re,im,abs`, one row per node.
    pub fn to_csv(&self) -> String {
        let q = self.lattice.dim();
        let mut out = String::new();
        let header: Vec<String> = (1..=q).map(|a| format!("x{a}")).collect();
        let _ = writeln!(out, "{},re,im,abs", header.join(","));
        for (flat, v) in self.values.iter().enumerate() {
            for c in self.lattice.node(flat) {
                let _ = write!(out, "{c},");
            }
            let _ = writeln!(out, "{},{},{}", v.re, v.im, v.norm());
        }
        out
    }
}

pub(crate) fn run_in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::invalid("worker count must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Evaluate `T_n` on a lattice. Node values are bitwise equal to
/// [`pio_eval`] at the node coordinates.
pub fn pio_eval_grid(cfg: &PioConfig, m: &MomentSet, region: &Region, spacing: f64, options: &GridOptions) -> Result<GridEvaluation> {
    if region.dim() != cfg.q {
        return Err(Error::DimensionMismatch {
            expected: cfg.q,
            found: region.dim(),
        });
    }
    let lattice = Lattice::from_spacing(region, spacing)?;
    pio_eval_lattice(cfg, m, lattice, options)
}

pub fn pio_eval_lattice(cfg: &PioConfig, m: &MomentSet, lattice: Lattice, options: &GridOptions) -> Result<GridEvaluation> {
    if lattice.dim() != cfg.q {
        return Err(Error::DimensionMismatch {
            expected: cfg.q,
            found: lattice.dim(),
        });
    }
    let nodes = lattice.len();
    if nodes > options.max_nodes {
        return Err(Error::GridTooLarge {
            nodes,
            cap: options.max_nodes,
        });
    }
    let plan = Plan::new(cfg);
    let coeffs = plan.coefficients(cfg, m)?;
    let bound = plan.bound;
    // Per-axis tables, one per distinct coordinate.
    let tables: Vec<Vec<Vec<f64>>> = (0..lattice.dim())
        .map(|a| {
            lattice
                .axis_coordinates(a)
                .into_iter()
                .map(|x| {
                    let mut t = vec![0.0; bound];
                    hermite_fill(x, &mut t);
                    t
                })
                .collect()
        })
        .collect();
    let eval_node = |flat: usize| {
        let idx = lattice.unflatten(flat);
        plan.eval_with(coeffs, |a| tables[a][idx[a]].as_slice())
    };
    let values: Vec<Complex64> = run_in_pool(options.workers, || (0..nodes).into_par_iter().map(eval_node).collect())?;
    let mut stats = GridStats {
        node_count: nodes,
        max_modulus: 0.0,
        argmax: None,
    };
    for (i, v) in values.iter().enumerate() {
        let r = v.norm();
        if r > stats.max_modulus {
            stats.max_modulus = r;
            stats.argmax = Some(i);
        }
    }
    Ok(GridEvaluation { lattice, values, stats })
}
