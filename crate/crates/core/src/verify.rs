//! Numerical checks of the kernel facts the detector relies on.
//!
//! Every check runs a fixed sweep, reports the worst discrepancy it saw and
//! passes iff that discrepancy is strictly below its tolerance. Empirical
//! stand-ins for the unquantified constants (decay amplitude, diagonal floor,
//! positivity radius, Lipschitz slope) are recorded in `constants`; nothing in
//! the detection path reads them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::basis::{binomial, enumerate_indices, hermite_fill, mehler_closed_form, Point};
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::quadrature::{composite_gauss_legendre, gauss_hermite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// The exact sweep, enough to rerun the check.
    pub parameters: Value,
    pub worst_discrepancy: Option<f64>,
    pub tolerance: f64,
    pub status: Status,
    pub constants: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(name: CheckName, parameters: Value, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            parameters,
            worst_discrepancy: None,
            tolerance,
            status: Status::Skipped,
            constants: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn settle(mut self, worst: f64) -> Self {
        self.worst_discrepancy = Some(worst);
        self.status = if worst < self.tolerance { Status::Pass } else { Status::Fail };
        self
    }

    fn constant(&mut self, key: impl Into<String>, value: f64) {
        self.constants.insert(key.into(), value);
    }

    /// Skipped checks do not count as failures.
    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Orthonormality,
    Fourier,
    Mehler,
    Localization,
    DiagFloor,
    NearDiagSign,
    Growth,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        CheckName::Orthonormality,
        CheckName::Fourier,
        CheckName::Mehler,
        CheckName::Localization,
        CheckName::DiagFloor,
        CheckName::NearDiagSign,
        CheckName::Growth,
    ];
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckName::Orthonormality => "orthonormality",
            CheckName::Fourier => "fourier",
            CheckName::Mehler => "mehler",
            CheckName::Localization => "localization",
            CheckName::DiagFloor => "diag_floor",
            CheckName::NearDiagSign => "near_diag_sign",
            CheckName::Growth => "growth",
        })
    }
}

impl FromStr for CheckName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown check '{s}'")))
    }
}

/// `c_t = sum_{|j|_1 = t} prod_a seqs[a][j_a]` for `t < bound`.
fn degree_sums(seqs: &[Vec<f64>], bound: usize) -> Vec<f64> {
    let mut acc = vec![0.0; bound];
    acc[0] = 1.0;
    for s in seqs {
        let mut next = vec![0.0; bound];
        for (t, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in s.iter().enumerate().take(bound - t) {
                next[t + j] += a * b;
            }
        }
        acc = next;
    }
    acc
}

fn psi_table(x: f64, len: usize) -> Vec<f64> {
    let mut t = vec![0.0; len];
    hermite_fill(x, &mut t);
    t
}

/// `Phi_n(x, y)` grouped by total degree.
struct KernelProbe {
    n: usize,
    weights: Vec<f64>,
}

impl KernelProbe {
    fn new(n: usize, q: usize) -> Self {
        KernelProbe {
            n,
            weights: FilterSpec::default().degree_weights(n, q),
        }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.n * self.n;
        let seqs: Vec<Vec<f64>> = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let pa = psi_table(a, d);
                if a == b {
                    pa.iter().map(|v| v * v).collect()
                } else {
                    let pb = psi_table(b, d);
                    pa.iter().zip(&pb).map(|(u, v)| u * v).collect()
                }
            })
            .collect();
        degree_sums(&seqs, d).iter().zip(&self.weights).map(|(c, w)| c * w).sum()
    }

    /// Same, with per-axis tables already computed.
    fn eval_tables(&self, x: &[&[f64]], y: &[&[f64]]) -> f64 {
        let d = self.n * self.n;
        let seqs: Vec<Vec<f64>> = x.iter().zip(y).map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| u * v).collect()).collect();
        degree_sums(&seqs, d).iter().zip(&self.weights).map(|(c, w)| c * w).sum()
    }
}

/// Points of the lattice `lo + i h` covering `[lo, hi]` per axis, row-major.
fn box_points(q: usize, lo: f64, hi: f64, step: f64) -> Vec<Vec<f64>> {
    let count = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
    let axis: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..q {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut p = p.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out
}

fn directions(q: usize) -> Vec<Vec<f64>> {
    match q {
        1 => vec![vec![1.0], vec![-1.0]],
        _ => {
            let mut dirs = Vec::new();
            for a in 0..q {
                let mut e = vec![0.0; q];
                e[a] = 1.0;
                dirs.push(e.clone());
                e[a] = -1.0;
                dirs.push(e);
            }
            let s = 1.0 / (q as f64).sqrt();
            dirs.push(vec![s; q]);
            dirs.push(vec![-s; q]);
            let mut alt: Vec<f64> = (0..q).map(|a| if a % 2 == 0 { s } else { -s }).collect();
            dirs.push(alt.clone());
            alt.iter_mut().for_each(|v| *v = -*v);
            dirs.push(alt);
            dirs
        }
    }
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalityParams {
    pub max_degree: usize,
    pub quadrature_nodes: usize,
    pub tolerance: f64,
}

impl Default for OrthonormalityParams {
    fn default() -> Self {
        OrthonormalityParams {
            max_degree: 50,
            quadrature_nodes: 200,
            tolerance: 1e-8,
        }
    }
}

/// `max_{j,k} |sum_i w_i psi_j(x_i) psi_k(x_i) - delta_jk|` under Gauss-Hermite.
pub fn check_orthonormality(p: &OrthonormalityParams) -> Result<CheckReport> {
    let mut report = CheckReport::new(CheckName::Orthonormality, serde_json::to_value(p)?, p.tolerance);
    let rule = gauss_hermite(p.quadrature_nodes)?;
    let tables: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| psi_table(x, p.max_degree + 1)).collect();
    let mut worst: f64 = 0.0;
    for j in 0..=p.max_degree {
        for k in 0..=j {
            let g: f64 = tables.iter().zip(&rule.weights).map(|(t, w)| w * t[j] * t[k]).sum();
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    if p.quadrature_nodes < p.max_degree + 1 {
        report.notes.push("fewer nodes than functions: the rule cannot resolve every product".into());
    }
    Ok(report.settle(worst))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierParams {
    pub q: usize,
    /// Indices with `|k|_1 <= max_total_degree` are checked.
    pub max_total_degree: usize,
    pub points: usize,
    pub seed: u64,
    pub point_range: f64,
    pub half_width: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
    pub tolerance: f64,
}

impl Default for FourierParams {
    fn default() -> Self {
        FourierParams {
            q: 1,
            max_total_degree: 8,
            points: 10,
            seed: 7,
            point_range: 3.0,
            half_width: 12.0,
            panels: 96,
            nodes_per_panel: 20,
            tolerance: 1e-6,
        }
    }
}

/// `(2 pi)^{-q/2} int e^{-i u.x} psi_k(u) du` on a truncated box against
/// `(-i)^{|k|_1} psi_k(x)`. The box integral factorizes into 1-D transforms,
/// each done by composite Gauss-Legendre.
pub fn check_fourier_invariance(p: &FourierParams) -> Result<CheckReport> {
    let report = CheckReport::new(CheckName::Fourier, serde_json::to_value(p)?, p.tolerance);
    if p.q == 0 {
        return Err(Error::invalid("dimension q must be at least 1"));
    }
    let rule = composite_gauss_legendre(-p.half_width, p.half_width, p.panels, p.nodes_per_panel)?;
    let degree = p.max_total_degree + 1;
    let node_tables: Vec<Vec<f64>> = rule.nodes.iter().map(|&u| psi_table(u, degree)).collect();
    let transform_1d = |xi: f64| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); degree];
        for ((u, w), t) in rule.nodes.iter().zip(&rule.weights).zip(&node_tables) {
            let phase = Complex64::from_polar(*w, -u * xi);
            for (o, v) in out.iter_mut().zip(t) {
                *o += phase * v;
            }
        }
        out.iter().map(|v| v / (2.0 * PI).sqrt()).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let indices = enumerate_indices(p.q, degree)?;
    let mut worst: f64 = 0.0;
    for _ in 0..p.points {
        let x: Vec<f64> = (0..p.q).map(|_| rng.random_range(-p.point_range..=p.point_range)).collect();
        let per_axis: Vec<Vec<Complex64>> = x.iter().map(|&xi| transform_1d(xi)).collect();
        let exact: Vec<Vec<f64>> = x.iter().map(|&xi| psi_table(xi, degree)).collect();
        for k in &indices {
            let mut num = Complex64::new(1.0, 0.0);
            let mut psi = 1.0;
            for (a, &d) in k.degrees().iter().enumerate() {
                num *= per_axis[a][d as usize];
                psi *= exact[a][d as usize];
            }
            let phase = match k.total() % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, -1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, 1.0),
            };
            worst = worst.max((num - phase * psi).norm());
        }
    }
    Ok(report.settle(worst))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MehlerParams {
    pub q: usize,
    pub r_values: Vec<f64>,
    /// Coordinates combined per axis into the probe pairs.
    pub coordinates: Vec<f64>,
    /// Series truncated once the tail bound falls below this.
    pub tail_bound: f64,
    pub tolerance: f64,
}

impl Default for MehlerParams {
    fn default() -> Self {
        MehlerParams {
            q: 1,
            r_values: vec![0.2, 0.5, 0.8],
            coordinates: vec![-1.7, -0.5, 0.0, 0.6, 1.3],
            tail_bound: 1e-13,
            tolerance: 1e-10,
        }
    }
}

/// Smallest `T` with `pi^{-q/2} sum_{t >= T} C(t+q-1, q-1) |r|^t < tail`.
fn mehler_truncation(q: usize, r: f64, tail: f64) -> usize {
    let r = r.abs();
    if r == 0.0 {
        return 1;
    }
    let norm = PI.powf(-(q as f64) / 2.0);
    let term = |t: usize| norm * binomial(t + q - 1, q - 1) as f64 * r.powi(t as i32);
    // Terms decrease geometrically once t exceeds (q-1) r / (1-r); bound the
    // tail from there by a geometric series with the current ratio.
    let mut t = 1usize;
    loop {
        let ratio = term(t + 1) / term(t);
        if ratio < 1.0 && term(t) / (1.0 - ratio) < tail {
            return t;
        }
        t += 1;
    }
}

/// Truncated series `sum_j r^{|j|} psi_j(y) psi_j(z)` against the closed form.
pub fn check_mehler(p: &MehlerParams) -> Result<CheckReport> {
    let mut report = CheckReport::new(CheckName::Mehler, serde_json::to_value(p)?, p.tolerance);
    if p.q == 0 {
        return Err(Error::invalid("dimension q must be at least 1"));
    }
    let points = {
        let mut pts = vec![Vec::new()];
        for _ in 0..p.q {
            pts = pts
                .into_iter()
                .flat_map(|v: Vec<f64>| {
                    p.coordinates.iter().map(move |&c| {
                        let mut v = v.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        pts
    };
    let mut worst: f64 = 0.0;
    for &r in &p.r_values {
        if r.abs() >= 1.0 {
            return Err(Error::invalid(format!("Mehler parameter |r| must be below 1, got {r}")));
        }
        let terms = mehler_truncation(p.q, r, p.tail_bound);
        report.constant(format!("terms_r={r}"), terms as f64);
        for y in &points {
            let ty: Vec<Vec<f64>> = y.iter().map(|&c| psi_table(c, terms)).collect();
            for z in &points {
                let tz: Vec<Vec<f64>> = z.iter().map(|&c| psi_table(c, terms)).collect();
                let seqs: Vec<Vec<f64>> = ty.iter().zip(&tz).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v).collect()).collect();
                let by_degree = degree_sums(&seqs, terms);
                let mut series = 0.0;
                let mut rt = 1.0;
                for c in by_degree {
                    series += rt * c;
                    rt *= r;
                }
                let closed = mehler_closed_form(&Point::new(y.clone())?, &Point::new(z.clone())?, r)?;
                worst = worst.max((series - closed).abs());
            }
        }
    }
    Ok(report.settle(worst))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationParams {
    pub q: usize,
    pub n_values: Vec<usize>,
    /// Fitted decay exponent; `None` means `max(3, q + 1)`.
    pub s_probe: Option<u32>,
    /// Points range over `[-half_width, half_width]^q`.
    pub half_width: f64,
    pub d_max: f64,
    /// Distance step is `1 / (steps_per_unit n)`.
    pub steps_per_unit: usize,
    /// Base-point step for q > 1.
    pub base_step: f64,
    /// Pass needs `envelope(d_max) / envelope(2/n) < tolerance`.
    pub tolerance: f64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        LocalizationParams {
            q: 1,
            n_values: vec![4, 6, 8],
            s_probe: None,
            half_width: 2.0,
            d_max: 4.0,
            steps_per_unit: 20,
            base_step: 0.25,
            tolerance: 0.1,
        }
    }
}

/// Envelope of `|Phi_n(x, y)|` against `d = |x - y|` with `x, y` in the box,
/// filtered to its running supremum over larger distances, then fitted to
/// `A / (n d)^S` on `[2/n, d_max]`.
pub fn check_localization(p: &LocalizationParams) -> Result<CheckReport> {
    let s_probe = p.s_probe.unwrap_or_else(|| 3.max(p.q as u32 + 1));
    let mut report = CheckReport::new(CheckName::Localization, serde_json::to_value(p)?, p.tolerance);
    report.constant("s_probe", s_probe as f64);
    let mut worst: f64 = 0.0;
    let mut ran = false;
    for &n in &p.n_values {
        if n <= 1 {
            report.notes.push(format!("n={n}: single-term kernel, no localization to measure; skipped"));
            continue;
        }
        ran = true;
        let probe = KernelProbe::new(n, p.q);
        let dd = 1.0 / (p.steps_per_unit * n) as f64;
        let steps = (p.d_max / dd).round() as usize;
        let mut raw = vec![0.0f64; steps + 1];
        if p.q == 1 {
            // Pairs on one lattice of step dd: d = k dd.
            let count = (2.0 * p.half_width / dd).round() as usize + 1;
            let coords: Vec<f64> = (0..count).map(|i| -p.half_width + i as f64 * dd).collect();
            let tables: Vec<Vec<f64>> = coords.iter().map(|&x| psi_table(x, n * n)).collect();
            for (k, slot) in raw.iter_mut().enumerate() {
                for i in 0..count.saturating_sub(k) {
                    let v = probe.eval_tables(&[&tables[i]], &[&tables[i + k]]).abs();
                    *slot = slot.max(v);
                }
            }
        } else {
            let bases = box_points(p.q, -p.half_width, p.half_width, p.base_step);
            let dirs = directions(p.q);
            for (k, slot) in raw.iter_mut().enumerate() {
                let d = k as f64 * dd;
                for x in &bases {
                    for e in &dirs {
                        let y: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + d * b).collect();
                        if y.iter().all(|v| v.abs() <= p.half_width + 1e-12) {
                            *slot = slot.max(probe.eval(x, &y).abs());
                        }
                    }
                }
            }
        }
        // Running supremum from the far end.
        let mut envelope = raw.clone();
        for k in (0..steps).rev() {
            envelope[k] = envelope[k].max(envelope[k + 1]);
        }
        let start = (2.0 / n as f64 / dd).round() as usize;
        let raw_increases = raw[start..].windows(2).filter(|w| w[1] > w[0]).count();
        let first = envelope[start];
        let last = envelope[steps];
        let ratio = last / first;
        worst = worst.max(ratio);
        // log A = mean(log E(d) + S log(n d))
        let window: Vec<(f64, f64)> = (start..=steps)
            .filter(|&k| envelope[k] > 0.0)
            .map(|k| (n as f64 * k as f64 * dd, envelope[k]))
            .collect();
        let s = s_probe as f64;
        let log_a = window.iter().map(|(nd, e)| e.ln() + s * nd.ln()).sum::<f64>() / window.len() as f64;
        let residual = window
            .iter()
            .map(|(nd, e)| (e.ln() - (log_a - s * nd.ln())).abs())
            .fold(0.0, f64::max);
        let free_slope = -log_log_slope(
            &window.iter().map(|w| w.0).collect::<Vec<_>>(),
            &window.iter().map(|w| w.1).collect::<Vec<_>>(),
        );
        report.constant(format!("n={n}:envelope_at_2/n"), first);
        report.constant(format!("n={n}:envelope_at_d_max"), last);
        report.constant(format!("n={n}:decay_factor"), first / last);
        report.constant(format!("n={n}:A_fit"), log_a.exp());
        report.constant(format!("n={n}:log_residual"), residual);
        report.constant(format!("n={n}:S_free_fit"), free_slope);
        report.constant(format!("n={n}:raw_envelope_increases"), raw_increases as f64);
    }
    if !ran {
        return Ok(report);
    }
    Ok(report.settle(worst))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagFloorParams {
    pub q: usize,
    pub n_values: Vec<usize>,
    /// Box `[-h, h]^q`; `None` means `h = n / 2` for each `n`.
    pub half_width: Option<f64>,
    pub step: Option<f64>,
    /// Pass needs `-min Phi_n(x, x) < tolerance` for every n, i.e. a
    /// positive floor at the default of zero.
    pub tolerance: f64,
    /// Largest allowed spread of `slope * n^q` across n.
    pub lipschitz_spread: f64,
}

impl Default for DiagFloorParams {
    fn default() -> Self {
        DiagFloorParams {
            q: 1,
            n_values: vec![4, 6, 8],
            half_width: None,
            step: None,
            tolerance: 0.0,
            lipschitz_spread: 2.0,
        }
    }
}

/// Minimum of `Phi_n(x, x)` over a box scan, plus the largest slope between
/// neighbouring scan points.
pub fn check_diag_floor(p: &DiagFloorParams) -> Result<CheckReport> {
    let mut report = CheckReport::new(CheckName::DiagFloor, serde_json::to_value(p)?, p.tolerance);
    let mut worst = f64::NEG_INFINITY;
    let mut scaled_slopes = Vec::new();
    for &n in &p.n_values {
        let h = p.half_width.unwrap_or(n as f64 / 2.0);
        let step = p.step.unwrap_or(if p.q == 1 { 1e-3 } else { 0.05 });
        let probe = KernelProbe::new(n, p.q);
        let count = ((2.0 * h) / step * (1.0 + 1e-12)).floor() as usize + 1;
        let coords: Vec<f64> = (0..count).map(|i| -h + i as f64 * step).collect();
        let squares: Vec<Vec<f64>> = coords.iter().map(|&x| psi_table(x, n * n).iter().map(|v| v * v).collect()).collect();
        let total: usize = count.pow(p.q as u32);
        let mut values = vec![0.0; total];
        for (flat, v) in values.iter_mut().enumerate() {
            let mut rem = flat;
            let mut seqs = Vec::with_capacity(p.q);
            for _ in 0..p.q {
                seqs.push(squares[rem % count].clone());
                rem /= count;
            }
            *v = degree_sums(&seqs, n * n).iter().zip(&probe.weights).map(|(c, w)| c * w).sum();
        }
        let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut slope: f64 = 0.0;
        for flat in 0..total {
            let mut stride = 1;
            let mut rem = flat;
            for _ in 0..p.q {
                if rem % count + 1 < count {
                    slope = slope.max((values[flat + stride] - values[flat]).abs() / step);
                }
                rem /= count;
                stride *= count;
            }
        }
        let scaled = slope * (n as f64).powi(p.q as i32);
        scaled_slopes.push(scaled);
        worst = worst.max(-floor);
        report.constant(format!("n={n}:floor"), floor);
        report.constant(format!("n={n}:lipschitz_slope"), slope);
        report.constant(format!("n={n}:slope_times_n^q"), scaled);
    }
    let hi = scaled_slopes.iter().copied().fold(0.0, f64::max);
    let lo = scaled_slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let stable = scaled_slopes.len() < 2 || hi <= p.lipschitz_spread * lo;
    report.constant("lipschitz_spread", if lo > 0.0 { hi / lo } else { f64::INFINITY });
    let report = report.settle(worst);
    if stable {
        Ok(report)
    } else {
        let mut report = report;
        report.status = Status::Fail;
        report.notes.push("slope * n^q varies by more than the allowed spread".into());
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearDiagParams {
    pub q: usize,
    pub n_values: Vec<usize>,
    /// Base points `y` on a lattice of this step within `|y|_inf <= n/2`.
    pub base_step: Option<f64>,
    /// Offsets `k / (offsets_per_unit n)`.
    pub offsets_per_unit: usize,
    pub max_alpha: f64,
    /// Pass needs `max alpha / min alpha - 1 < tolerance` and every rho > 0.
    pub tolerance: f64,
}

impl Default for NearDiagParams {
    fn default() -> Self {
        NearDiagParams {
            q: 1,
            n_values: vec![4, 6, 8],
            base_step: None,
            offsets_per_unit: 50,
            max_alpha: 10.0,
            tolerance: 1.0,
        }
    }
}

/// Largest scanned `rho` with `0 <= Phi_n(x, y) <= Phi_n(y, y) + C |x - y|`
/// for every tested pair with `|x - y| <= rho`, `C` the measured diagonal
/// slope. The unrelaxed upper inequality already fails at first order in
/// `|x - y|` wherever the diagonal is not flat; its worst violation per unit
/// offset is reported alongside.
pub fn check_near_diag_sign(p: &NearDiagParams) -> Result<CheckReport> {
    let mut report = CheckReport::new(CheckName::NearDiagSign, serde_json::to_value(p)?, p.tolerance);
    let mut alphas = Vec::new();
    let mut any_zero = false;
    for &n in &p.n_values {
        let probe = KernelProbe::new(n, p.q);
        let h = n as f64 / 2.0;
        let step = p.base_step.unwrap_or(if p.q == 1 { 0.01 } else { 0.25 });
        let bases = box_points(p.q, -h, h, step);
        let dirs = directions(p.q);
        let d = n * n;
        let base_tables: Vec<Vec<Vec<f64>>> = bases.iter().map(|y| y.iter().map(|&c| psi_table(c, d)).collect()).collect();
        let diag: Vec<f64> = base_tables
            .iter()
            .map(|t| {
                let r: Vec<&[f64]> = t.iter().map(Vec::as_slice).collect();
                probe.eval_tables(&r, &r)
            })
            .collect();
        // Diagonal slope along the scan directions at the smallest offset.
        let dd = 1.0 / (p.offsets_per_unit * n) as f64;
        let mut slope: f64 = 0.0;
        let mut literal: f64 = 0.0;
        let max_k = (p.max_alpha / n as f64 / dd).ceil() as usize;
        let mut rho = 0.0;
        let mut first_pass = true;
        'offsets: for k in 1..=max_k {
            let delta = k as f64 * dd;
            let mut ok = true;
            let mut trial: Vec<(f64, f64, f64)> = Vec::new();
            for (bi, y) in bases.iter().enumerate() {
                let ty: Vec<&[f64]> = base_tables[bi].iter().map(Vec::as_slice).collect();
                for e in &dirs {
                    let x: Vec<f64> = y.iter().zip(e).map(|(a, b)| a + delta * b).collect();
                    let tx_owned: Vec<Vec<f64>> = x.iter().map(|&c| psi_table(c, d)).collect();
                    let tx: Vec<&[f64]> = tx_owned.iter().map(Vec::as_slice).collect();
                    let off = probe.eval_tables(&tx, &ty);
                    if first_pass {
                        let dx = probe.eval_tables(&tx, &tx);
                        slope = slope.max((dx - diag[bi]).abs() / delta);
                        literal = literal.max((off - diag[bi]) / delta);
                    }
                    trial.push((off, diag[bi], delta));
                }
            }
            first_pass = false;
            for (off, dy, delta) in trial {
                if off < 0.0 || off > dy + slope * delta {
                    ok = false;
                    break;
                }
            }
            if !ok {
                break 'offsets;
            }
            rho = delta;
        }
        if rho == 0.0 {
            any_zero = true;
        }
        let alpha = rho * n as f64;
        alphas.push(alpha);
        report.constant(format!("n={n}:rho"), rho);
        report.constant(format!("n={n}:alpha"), alpha);
        report.constant(format!("n={n}:diag_slope"), slope);
        report.constant(format!("n={n}:unrelaxed_violation_per_unit_offset"), literal.max(0.0));
        if rho >= max_k as f64 * dd {
            report.notes.push(format!("n={n}: condition held up to the scan limit alpha = {}", p.max_alpha));
        }
    }
    let hi = alphas.iter().copied().fold(0.0, f64::max);
    let lo = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { hi / lo - 1.0 } else { f64::INFINITY };
    let mut report = report.settle(spread);
    if any_zero {
        report.status = Status::Fail;
        report.notes.push("no positive radius found for some n".into());
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub q: usize,
    pub u_values: Vec<f64>,
    pub step: Option<f64>,
    /// Pass needs both fitted exponents within `tolerance` of q.
    pub tolerance: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        GrowthParams {
            q: 1,
            u_values: vec![2.0, 3.0, 4.0, 6.0, 8.0],
            step: None,
            tolerance: 0.5,
        }
    }
}

/// `sum_{|j|_1 < u^2} psi_j(x)^2` over `|x|_inf <= u / 2`.
pub fn christoffel_sums(q: usize, u: f64, step: f64) -> (f64, f64) {
    let bound = (u * u).ceil() as usize;
    let bound = if (bound as f64) < u * u { bound + 1 } else { bound };
    let h = u / 2.0;
    let count = ((2.0 * h) / step * (1.0 + 1e-12)).floor() as usize + 1;
    let squares: Vec<Vec<f64>> = (0..count)
        .map(|i| psi_table(-h + i as f64 * step, bound).iter().map(|v| v * v).collect())
        .collect();
    let mut sup: f64 = 0.0;
    let mut inf = f64::INFINITY;
    for flat in 0..count.pow(q as u32) {
        let mut rem = flat;
        let mut seqs = Vec::with_capacity(q);
        for _ in 0..q {
            seqs.push(squares[rem % count].clone());
            rem /= count;
        }
        let total: f64 = degree_sums(&seqs, bound).iter().sum();
        sup = sup.max(total);
        inf = inf.min(total);
    }
    (sup, inf)
}

/// Fits the growth exponent in `u` of the sup and inf of the Christoffel
/// sums over a central box.
pub fn check_growth(p: &GrowthParams) -> Result<CheckReport> {
    let mut report = CheckReport::new(CheckName::Growth, serde_json::to_value(p)?, p.tolerance);
    if p.u_values.len() < 2 {
        return Err(Error::invalid("growth fit needs at least two values of u"));
    }
    let step = p.step.unwrap_or(if p.q == 1 { 0.01 } else { 0.1 });
    let mut sups = Vec::new();
    let mut infs = Vec::new();
    for &u in &p.u_values {
        let (sup, inf) = christoffel_sums(p.q, u, step);
        report.constant(format!("u={u}:sup"), sup);
        report.constant(format!("u={u}:inf"), inf);
        report.constant(format!("u={u}:sup/u^q"), sup / u.powi(p.q as i32));
        sups.push(sup);
        infs.push(inf);
    }
    let e_sup = log_log_slope(&p.u_values, &sups);
    let e_inf = log_log_slope(&p.u_values, &infs);
    report.constant("exponent_sup", e_sup);
    report.constant("exponent_inf", e_inf);
    let q = p.q as f64;
    Ok(report.settle((e_sup - q).abs().max((e_inf - q).abs())))
}

/// Which checks to run, in what dimension, with an optional tolerance
/// override applied to each selected check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub q: usize,
    pub only: Option<Vec<CheckName>>,
    pub tolerance: Option<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            q: 1,
            only: None,
            tolerance: None,
        }
    }
}

pub fn run_check(name: CheckName, q: usize, tolerance: Option<f64>) -> Result<CheckReport> {
    macro_rules! with_tol {
        ($p:expr) => {{
            let mut p = $p;
            if let Some(t) = tolerance {
                p.tolerance = t;
            }
            p
        }};
    }
    match name {
        CheckName::Orthonormality => check_orthonormality(&with_tol!(OrthonormalityParams::default())),
        CheckName::Fourier => check_fourier_invariance(&with_tol!(FourierParams {
            q,
            ..FourierParams::default()
        })),
        CheckName::Mehler => check_mehler(&with_tol!(MehlerParams {
            q,
            ..MehlerParams::default()
        })),
        CheckName::Localization => check_localization(&with_tol!(LocalizationParams {
            q,
            ..LocalizationParams::default()
        })),
        CheckName::DiagFloor => check_diag_floor(&with_tol!(DiagFloorParams {
            q,
            ..DiagFloorParams::default()
        })),
        CheckName::NearDiagSign => check_near_diag_sign(&with_tol!(NearDiagParams {
            q,
            ..NearDiagParams::default()
        })),
        CheckName::Growth => check_growth(&with_tol!(GrowthParams {
            q,
            ..GrowthParams::default()
        })),
    }
}

pub fn run_suite(options: &SuiteOptions) -> Result<Vec<CheckReport>> {
    let names = options.only.clone().unwrap_or_else(|| CheckName::ALL.to_vec());
    names.into_iter().map(|n| run_check(n, options.q, options.tolerance)).collect()
}

pub fn summary_json(reports: &[CheckReport]) -> Value {
    json!({
        "checks": reports.len(),
        "failed": reports.iter().filter(|r| r.failed()).count(),
        "skipped": reports.iter().filter(|r| r.status == Status::Skipped).count(),
        "reports": reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormality_examples() {
        let r = check_orthonormality(&OrthonormalityParams::default()).unwrap();
        assert_eq!(r.status, Status::Pass, "{r:?}");
        let single = OrthonormalityParams {
            max_degree: 0,
            quadrature_nodes: 1,
            ..Default::default()
        };
        assert_eq!(check_orthonormality(&single).unwrap().status, Status::Pass);
        let under = OrthonormalityParams {
            max_degree: 1,
            quadrature_nodes: 1,
            ..Default::default()
        };
        assert_eq!(check_orthonormality(&under).unwrap().status, Status::Fail);
    }

    #[test]
    fn fourier_examples() {
        let zero = FourierParams {
            max_total_degree: 0,
            ..Default::default()
        };
        assert_eq!(check_fourier_invariance(&zero).unwrap().status, Status::Pass);
        assert_eq!(check_fourier_invariance(&FourierParams::default()).unwrap().status, Status::Pass);
        let two = FourierParams {
            q: 2,
            max_total_degree: 2,
            ..Default::default()
        };
        assert_eq!(check_fourier_invariance(&two).unwrap().status, Status::Pass);
    }

    #[test]
    fn mehler_examples() {
        for r in [0.0, 0.5, 0.99] {
            let p = MehlerParams {
                r_values: vec![r],
                ..Default::default()
            };
            let report = check_mehler(&p).unwrap();
            assert_eq!(report.status, Status::Pass, "r={r} {report:?}");
        }
        let bad = MehlerParams {
            r_values: vec![1.0],
            ..Default::default()
        };
        assert!(check_mehler(&bad).is_err());
    }

    #[test]
    fn mehler_truncation_grows_with_r() {
        let a = mehler_truncation(1, 0.2, 1e-13);
        let b = mehler_truncation(1, 0.8, 1e-13);
        let c = mehler_truncation(2, 0.8, 1e-13);
        assert!(a < b && b < c);
        // tail bound actually below target
        let tail: f64 = (b..b + 2000).map(|t| PI.powf(-0.5) * 0.8f64.powi(t as i32)).sum();
        assert!(tail < 1e-13);
    }

    #[test]
    fn degree_sums_convolve() {
        let c = degree_sums(&[vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]], 3);
        assert_eq!(c, vec![1.0, 3.0, 6.0]);
    }

    #[test]
    fn localization_examples() {
        let p = LocalizationParams {
            n_values: vec![6],
            ..Default::default()
        };
        let r = check_localization(&p).unwrap();
        assert_eq!(r.status, Status::Pass, "{r:?}");
        let single = LocalizationParams {
            n_values: vec![1],
            ..Default::default()
        };
        let r = check_localization(&single).unwrap();
        assert_eq!(r.status, Status::Skipped);
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn diag_floor_examples() {
        let r = check_diag_floor(&DiagFloorParams {
            n_values: vec![6],
            half_width: Some(3.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.status, Status::Pass);
        assert!(r.constants["n=6:floor"] > 0.0);
        let r = check_diag_floor(&DiagFloorParams {
            n_values: vec![1],
            ..Default::default()
        })
        .unwrap();
        let psi0 = PI.powf(-0.25) * (-0.125f64).exp();
        assert!((r.constants["n=1:floor"] - psi0 * psi0).abs() < 1e-15);
    }

    #[test]
    fn near_diag_radius_is_positive() {
        let r = check_near_diag_sign(&NearDiagParams {
            n_values: vec![6],
            ..Default::default()
        })
        .unwrap();
        assert!(r.constants["n=6:rho"] > 0.0);
        assert_eq!(r.status, Status::Pass);
    }

    #[test]
    fn growth_edge_and_fit() {
        let (sup, inf) = christoffel_sums(1, 1.0, 0.01);
        let psi0 = PI.powf(-0.25);
        assert!((sup - psi0 * psi0).abs() < 1e-15);
        assert!((inf - psi0 * psi0 * (-0.25f64).exp()).abs() < 1e-12);
        let r = check_growth(&GrowthParams::default()).unwrap();
        assert_eq!(r.status, Status::Pass, "{r:?}");
        assert!((r.constants["exponent_sup"] - 1.0).abs() < 0.5);
    }

    #[test]
    fn zero_tolerance_fails() {
        let r = run_check(CheckName::Orthonormality, 1, Some(0.0)).unwrap();
        assert_eq!(r.status, Status::Fail);
    }

    #[test]
    fn names_round_trip() {
        for c in CheckName::ALL {
            assert_eq!(c.to_string().parse::<CheckName>().unwrap(), c);
        }
        assert!("nope".parse::<CheckName>().is_err());
    }
}
