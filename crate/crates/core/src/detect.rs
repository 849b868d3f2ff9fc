//! Threshold, cluster, refine, weigh.
//!
//! The operator is evaluated on a coarse lattice; nodes where `|T_n|` clears
//! the threshold are grouped by single linkage, and each group's maximizer is
//! searched again on a lattice `refine_factor` times finer covering the
//! group's bounding box plus one coarse cell. The amplitude estimate is
//! `T_n(x) / Phi_n(x, x)` at the refined point.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::basis::{hermite_fill, lex_cmp, Point, Region};
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::moments::{min_pairwise_distance, MomentSet};
use crate::pio::{pio_eval_grid, run_in_pool, GridEvaluation, GridOptions, PioConfig, Plan, Summation};

/// Diagonal values at or below this are treated as vanishing.
pub const VANISHING_DIAGONAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Threshold {
    /// Keep nodes with `|T_n| >= theta`.
    Absolute(f64),
    /// Keep nodes with `|T_n| >= fraction * max |T_n|` over the grid.
    Relative(f64),
}

impl Threshold {
    fn validate(&self) -> Result<()> {
        match *self {
            Threshold::Absolute(t) if t.is_finite() && t > 0.0 => Ok(()),
            Threshold::Relative(f) if f > 0.0 && f < 1.0 => Ok(()),
            Threshold::Absolute(t) => Err(Error::invalid(format!("absolute threshold must be positive, got {t}"))),
            Threshold::Relative(f) => Err(Error::invalid(format!("relative threshold must lie in (0, 1), got {f}"))),
        }
    }

    /// The absolute level on a grid with the given maximum modulus, or `None`
    /// when a relative threshold meets an all-zero grid.
    pub fn level(&self, max_modulus: f64) -> Option<f64> {
        match *self {
            Threshold::Absolute(t) => Some(t),
            Threshold::Relative(f) if max_modulus > 0.0 => Some(f * max_modulus),
            Threshold::Relative(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub n: usize,
    pub refine_factor: usize,
    pub threshold: Threshold,
    /// `None` picks the coarse-lattice adjacency radius, then widens it to
    /// half the smallest gap between the resulting components.
    pub linkage_radius: Option<f64>,
    #[serde(rename = "box")]
    pub region: Region,
    pub coarse_spacing: f64,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub summation: Summation,
    /// Worker threads for lattice passes; never changes the output.
    #[serde(skip)]
    pub workers: Option<usize>,
    pub max_nodes: usize,
}

impl DetectConfig {
    pub fn new(n: usize, region: Region, coarse_spacing: f64, threshold: Threshold) -> Self {
        DetectConfig {
            n,
            refine_factor: 8,
            threshold,
            linkage_radius: None,
            region,
            coarse_spacing,
            filter: FilterSpec::default(),
            summation: Summation::Plain,
            workers: None,
            max_nodes: crate::pio::DEFAULT_MAX_NODES,
        }
    }

    pub fn with_refine_factor(mut self, refine_factor: usize) -> Self {
        self.refine_factor = refine_factor;
        self
    }

    pub fn with_linkage_radius(mut self, radius: f64) -> Self {
        self.linkage_radius = Some(radius);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn q(&self) -> usize {
        self.region.dim()
    }

    pub fn pio(&self) -> Result<PioConfig> {
        Ok(PioConfig::new(self.n, self.q())?
            .with_filter(self.filter)
            .with_summation(self.summation))
    }

    pub fn fine_spacing(&self) -> f64 {
        self.coarse_spacing / self.refine_factor as f64
    }

    fn grid_options(&self) -> GridOptions {
        GridOptions {
            max_nodes: self.max_nodes,
            workers: self.workers,
        }
    }

    /// Radius at which lattice neighbours (including diagonal ones) link.
    fn adjacency_radius(&self) -> f64 {
        self.coarse_spacing * (self.q() as f64).sqrt() * (1.0 + 1e-9)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("scale n must be at least 1"));
        }
        if self.refine_factor == 0 {
            return Err(Error::invalid("refine factor must be at least 1"));
        }
        if !(self.coarse_spacing.is_finite() && self.coarse_spacing > 0.0) {
            return Err(Error::invalid("coarse spacing must be positive"));
        }
        self.threshold.validate()?;
        if let Some(r) = self.linkage_radius {
            if !(r.is_finite() && r > self.coarse_spacing) {
                return Err(Error::invalid(format!(
                    "linkage radius {r} must exceed the coarse spacing {}",
                    self.coarse_spacing
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedSpike {
    pub location: Point,
    /// `None` when the kernel diagonal vanishes at `location`.
    pub amplitude: Option<Complex64>,
    pub peak_value: Complex64,
    pub cluster_id: usize,
    pub cluster_node_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub threshold: Threshold,
    /// Absolute level actually applied; `None` for an all-zero grid under a
    /// relative threshold.
    pub threshold_used: Option<f64>,
    pub grid_shape: Vec<usize>,
    pub grid_nodes: usize,
    pub grid_max_modulus: f64,
    pub coarse_spacing: f64,
    pub fine_spacing: f64,
    pub level_set_size: usize,
    pub linkage_radius: f64,
    pub min_spike_distance: Option<f64>,
    /// Spike pairs closer than the linkage radius after refinement.
    pub close_pairs: usize,
    /// Largest `|eps_k|` recorded on the moments, spatial units.
    pub noise_max_abs: f64,
    /// `eps * n^{-q} pi^{-q/4} sum_j H(sqrt(|j|)/n)`, an upper bound on the
    /// noise contribution to `|T_n|` anywhere.
    pub noise_bound: f64,
    /// `threshold_used / noise_bound`; `None` without noise or threshold.
    pub threshold_noise_ratio: Option<f64>,
    /// The threshold does not clear the worst-case noise level.
    pub noise_dominated: bool,
    /// Locations where the kernel diagonal vanished.
    pub vanishing_diagonal: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub spikes: Vec<DetectedSpike>,
    pub diagnostics: Diagnostics,
}

impl DetectionResult {
    pub fn count(&self) -> usize {
        self.spikes.len()
    }

    pub fn to_json_value(&self) -> Value {
        let spikes: Vec<Value> = self
            .spikes
            .iter()
            .map(|s| {
                json!({
                    "x": s.location.coords(),
                    "a": s.amplitude.map(|a| vec![a.re, a.im]),
                    "peak": [s.peak_value.re, s.peak_value.im],
                    "cluster": s.cluster_id,
                    "cluster_nodes": s.cluster_node_count,
                })
            })
            .collect();
        json!({
            "spikes": spikes,
            "count": self.count(),
            "diagnostics": self.diagnostics,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("result serializes")
    }

    /// `cluster,x1..xq,a_re,a_im,peak_re,peak_im,cluster_nodes`; missing
    /// amplitudes are left empty.
    pub fn to_csv(&self, q: usize) -> String {
        let mut out = String::from("cluster,");
        for a in 1..=q {
            let _ = write!(out, "x{a},");
        }
        out.push_str("a_re,a_im,peak_re,peak_im,cluster_nodes\n");
        for s in &self.spikes {
            let _ = write!(out, "{},", s.cluster_id);
            for c in s.location.coords() {
                let _ = write!(out, "{c},");
            }
            match s.amplitude {
                Some(a) => {
                    let _ = write!(out, "{},{},", a.re, a.im);
                }
                None => out.push_str(",,"),
            }
            let _ = writeln!(out, "{},{},{}", s.peak_value.re, s.peak_value.im, s.cluster_node_count);
        }
        out
    }
}

/// Flat lattice indices with `|T_n| >= level`, ascending, plus the level.
pub fn super_level_set(grid: &GridEvaluation, threshold: &Threshold) -> (Vec<usize>, Option<f64>) {
    let Some(level) = threshold.level(grid.stats.max_modulus) else {
        return (Vec::new(), None);
    };
    let nodes = (0..grid.values.len()).filter(|&i| grid.modulus(i) >= level).collect();
    (nodes, Some(level))
}

/// Single-linkage components of `points` at `radius` (Euclidean, inclusive).
///
/// Each component lists point indices sorted by coordinates; components are
/// ordered by their lexicographically smallest member.
pub fn cluster_points(points: &[Vec<f64>], radius: f64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let q = points[0].len();
    let cell = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / radius).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(cell(p)).or_default().push(i);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(q as u32))
        .map(|mut code| {
            (0..q)
                .map(|_| {
                    let d = (code % 3) as i64 - 1;
                    code /= 3;
                    d
                })
                .collect()
        })
        .collect();
    let mut uf = UnionFind::<usize>::new(points.len());
    let r2 = radius * radius;
    for (i, p) in points.iter().enumerate() {
        let home = cell(p);
        for off in &offsets {
            let key: Vec<i64> = home.iter().zip(off).map(|(c, d)| c + d).collect();
            if let Some(members) = buckets.get(&key) {
                for &j in members {
                    if j > i {
                        let d2: f64 = p.iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                        if d2 <= r2 {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..points.len() {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_root.into_values().collect();
    for g in groups.iter_mut() {
        g.sort_by(|&a, &b| lex_cmp(&points[a], &points[b]).then(a.cmp(&b)));
    }
    groups.sort_by(|a, b| lex_cmp(&points[a[0]], &points[b[0]]).then(a[0].cmp(&b[0])));
    groups
}

/// Smallest distance between members of different clusters.
fn min_gap(points: &[Vec<f64>], clusters: &[Vec<usize>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (ci, a) in clusters.iter().enumerate() {
        for b in &clusters[ci + 1..] {
            for &i in a {
                for &j in b {
                    let d = crate::basis::euclidean(&points[i], &points[j]);
                    best = Some(best.map_or(d, |x: f64| x.min(d)));
                }
            }
        }
    }
    best
}

/// Fine-lattice maximizer of `|T_n|` over a cluster's inflated bounding box.
struct Refined {
    location: Vec<f64>,
    peak: Complex64,
}

fn refine(
    plan: &Plan,
    coeffs: &[Complex64],
    grid: &GridEvaluation,
    cluster: &[usize],
    cfg: &DetectConfig,
) -> Result<Refined> {
    let q = cfg.q();
    let r = cfg.refine_factor;
    let lattice = &grid.lattice;
    let fine = cfg.fine_spacing();
    let region = &cfg.region;
    let mut lo_idx = vec![usize::MAX; q];
    let mut hi_idx = vec![0usize; q];
    for &flat in cluster {
        for (a, &i) in lattice.unflatten(flat).iter().enumerate() {
            lo_idx[a] = lo_idx[a].min(i);
            hi_idx[a] = hi_idx[a].max(i);
        }
    }
    // Fine index ranges per axis, inflated by one coarse cell and kept
    // inside the box.
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(q);
    for a in 0..q {
        let last = ((region.hi()[a] - region.lo()[a]) / fine * (1.0 + 1e-9)).floor() as usize;
        let start = (lo_idx[a] * r).saturating_sub(r);
        let end = ((hi_idx[a] + 1) * r).min(last);
        axes.push(
            (start..=end)
                .map(|i| if r == 1 { lattice.coordinate(a, i) } else { region.lo()[a] + i as f64 * fine })
                .collect(),
        );
    }
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let count = shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s)).unwrap_or(usize::MAX);
    if count > cfg.max_nodes {
        return Err(Error::GridTooLarge {
            nodes: count,
            cap: cfg.max_nodes,
        });
    }
    let tables: Vec<Vec<Vec<f64>>> = axes
        .iter()
        .map(|coords| {
            coords
                .iter()
                .map(|&x| {
                    let mut t = vec![0.0; cfg.n * cfg.n];
                    hermite_fill(x, &mut t);
                    t
                })
                .collect()
        })
        .collect();
    let unflatten = |mut flat: usize| {
        let mut idx = vec![0usize; q];
        for a in (0..q).rev() {
            idx[a] = flat % shape[a];
            flat /= shape[a];
        }
        idx
    };
    let values: Vec<Complex64> = run_in_pool(cfg.workers, || {
        (0..count)
            .into_par_iter()
            .map(|flat| {
                let idx = unflatten(flat);
                plan.eval_with(coeffs, |a| tables[a][idx[a]].as_slice())
            })
            .collect()
    })?;
    // Row-major order is lexicographic in the coordinates; a strict
    // comparison keeps the first maximizer.
    let mut best = 0usize;
    let mut best_mod = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        let m = v.norm();
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    let idx = unflatten(best);
    Ok(Refined {
        location: (0..q).map(|a| axes[a][idx[a]]).collect(),
        peak: values[best],
    })
}

/// `T_n(x) / Phi_n(x, x)`.
pub fn amplitude_at(cfg: &PioConfig, m: &MomentSet, x: &Point) -> Result<Complex64> {
    let plan = Plan::new(cfg);
    let m = m.to_spatial();
    let coeffs = plan.coefficients(cfg, &m)?;
    let t = plan.eval_at(coeffs, x);
    amplitude_from_peak(&plan, t, x)
}

fn amplitude_from_peak(plan: &Plan, peak: Complex64, x: &[f64]) -> Result<Complex64> {
    let diag = plan.kernel_at(x, x);
    if diag.is_nan() || diag <= VANISHING_DIAGONAL {
        return Err(Error::VanishingDiagonal(x.to_vec()));
    }
    Ok(peak / diag)
}

/// `eps * n^{-q} pi^{-q/4} sum_{|j|_1 < n^2} H(sqrt(|j|_1)/n)`, using
/// `|psi_j| <= pi^{-1/4}` per axis.
pub fn noise_bound(n: usize, q: usize, filter: &FilterSpec, eps: f64) -> f64 {
    let weights = filter.degree_weights(n, q);
    let sum: f64 = weights
        .iter()
        .enumerate()
        .map(|(t, w)| w * crate::basis::binomial(t + q - 1, q - 1) as f64)
        .sum();
    eps * PI.powf(-(q as f64) / 4.0) * sum
}

/// The full pipeline. Fourier-side moments are converted first.
pub fn detect(cfg: &DetectConfig, m: &MomentSet) -> Result<DetectionResult> {
    cfg.validate()?;
    let q = cfg.q();
    if m.q() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: m.q(),
        });
    }
    let m = m.to_spatial();
    let pio = cfg.pio()?;
    let grid = pio_eval_grid(&pio, &m, &cfg.region, cfg.coarse_spacing, &cfg.grid_options())?;
    let (nodes, level) = super_level_set(&grid, &cfg.threshold);
    let points: Vec<Vec<f64>> = nodes.iter().map(|&i| grid.lattice.node(i)).collect();

    let adjacency = cfg.adjacency_radius();
    let (clusters, radius) = match cfg.linkage_radius {
        Some(r) => (cluster_points(&points, r), r),
        None => {
            let base = cluster_points(&points, adjacency);
            match min_gap(&points, &base) {
                Some(gap) if gap / 2.0 > adjacency => (cluster_points(&points, gap / 2.0), gap / 2.0),
                _ => (base, adjacency),
            }
        }
    };

    let plan = Plan::new(&pio);
    let coeffs = plan.coefficients(&pio, &m)?;
    let mut spikes = Vec::with_capacity(clusters.len());
    let mut vanishing = Vec::new();
    for (id, members) in clusters.iter().enumerate() {
        let flat: Vec<usize> = members.iter().map(|&i| nodes[i]).collect();
        let refined = refine(&plan, coeffs, &grid, &flat, cfg)?;
        let amplitude = match amplitude_from_peak(&plan, refined.peak, &refined.location) {
            Ok(a) => Some(a),
            Err(Error::VanishingDiagonal(_)) => {
                vanishing.push(Point::new(refined.location.clone())?);
                None
            }
            Err(e) => return Err(e),
        };
        spikes.push(DetectedSpike {
            location: Point::new(refined.location)?,
            amplitude,
            peak_value: refined.peak,
            cluster_id: id,
            cluster_node_count: members.len(),
        });
    }

    let min_spike_distance = min_pairwise_distance(spikes.iter().map(|s| s.location.coords()));
    let mut close_pairs = 0;
    for i in 0..spikes.len() {
        for j in i + 1..spikes.len() {
            if spikes[i].location.distance(&spikes[j].location) < radius {
                close_pairs += 1;
            }
        }
    }
    let noise_max_abs = m.spatial_noise_bound();
    let bound = noise_bound(cfg.n, q, &cfg.filter, noise_max_abs);
    let ratio = match level {
        Some(l) if bound > 0.0 => Some(l / bound),
        _ => None,
    };
    let diagnostics = Diagnostics {
        threshold: cfg.threshold,
        threshold_used: level,
        grid_shape: grid.lattice.shape().to_vec(),
        grid_nodes: grid.stats.node_count,
        grid_max_modulus: grid.stats.max_modulus,
        coarse_spacing: cfg.coarse_spacing,
        fine_spacing: cfg.fine_spacing(),
        level_set_size: nodes.len(),
        linkage_radius: radius,
        min_spike_distance,
        close_pairs,
        noise_max_abs,
        noise_bound: bound,
        threshold_noise_ratio: ratio,
        noise_dominated: ratio.is_some_and(|r| r < 1.0),
        vanishing_diagonal: vanishing,
    };
    Ok(DetectionResult { spikes, diagnostics })
}
