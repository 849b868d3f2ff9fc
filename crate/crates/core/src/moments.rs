//! Hermite moment sets: construction from point masses or densities,
//! Fourier/spatial conversion, perturbation and the JSON file format.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Number, Value};

use crate::basis::{
    enumerate_indices, euclidean, graded_lex_rank, hermite_fill, index_count, AxisTables,
    MultiIndex, Point, Region,
};
use crate::error::{Error, Result};
use crate::extended::{fourier_scale, format_17, format_f64_17, parse_decimal, DoubleDouble};
use crate::quadrature::{composite_on_breakpoints, uniform_breakpoints, QuadratureRule};

/// One term `a delta_x` of the measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    #[serde(rename = "x")]
    pub location: Point,
    #[serde(rename = "a")]
    pub amplitude: Complex64,
}

impl PointMass {
    pub fn new(location: Point, amplitude: Complex64) -> Self {
        PointMass {
            location,
            amplitude,
        }
    }

    pub fn real(location: Vec<f64>, amplitude: f64) -> Result<Self> {
        Ok(PointMass::new(
            Point::new(location)?,
            Complex64::new(amplitude, 0.0),
        ))
    }
}

/// A ground-truth configuration of point masses inside a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct Scenario {
    q: usize,
    masses: Vec<PointMass>,
    region: Region,
}

#[derive(Serialize, Deserialize)]
struct ScenarioRepr {
    q: usize,
    masses: Vec<PointMass>,
    #[serde(rename = "box")]
    region: Region,
}

impl TryFrom<ScenarioRepr> for Scenario {
    type Error = Error;
    fn try_from(r: ScenarioRepr) -> Result<Self> {
        Scenario::new(r.q, r.masses, r.region)
    }
}

impl From<Scenario> for ScenarioRepr {
    fn from(s: Scenario) -> Self {
        ScenarioRepr {
            q: s.q,
            masses: s.masses,
            region: s.region,
        }
    }
}

impl Scenario {
    pub fn new(q: usize, masses: Vec<PointMass>, region: Region) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("dimension q must be at least 1"));
        }
        if region.dim() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: region.dim(),
            });
        }
        for m in &masses {
            if m.location.dim() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    found: m.location.dim(),
                });
            }
            if !(m.amplitude.re.is_finite() && m.amplitude.im.is_finite()) {
                return Err(Error::NonFinite("amplitude"));
            }
            if m.amplitude.norm() == 0.0 {
                return Err(Error::invalid("point masses need a nonzero amplitude"));
            }
            if !region.contains(&m.location) {
                return Err(Error::OutsideRegion(m.location.coords().to_vec()));
            }
        }
        Ok(Scenario { q, masses, region })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn masses(&self) -> &[PointMass] {
        &self.masses
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `M = sum |a_l|`.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|m| m.amplitude.norm()).sum()
    }

    /// `mu = min |a_l|`, or `None` with no masses.
    pub fn min_amplitude(&self) -> Option<f64> {
        self.masses
            .iter()
            .map(|m| m.amplitude.norm())
            .min_by(f64::total_cmp)
    }

    /// `eta`, the minimal pairwise distance, or `None` with fewer than two masses.
    pub fn min_separation(&self) -> Option<f64> {
        min_pairwise_distance(self.masses.iter().map(|m| m.location.coords()))
    }

    /// `B = max |x_l|_inf`.
    pub fn max_abs_coord(&self) -> f64 {
        self.masses
            .iter()
            .map(|m| m.location.max_abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn min_pairwise_distance<'a>(points: impl Iterator<Item = &'a [f64]>) -> Option<f64> {
    let pts: Vec<&[f64]> = points.collect();
    let mut best: Option<f64> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = euclidean(pts[i], pts[j]);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Spatial,
    Fourier,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Spatial => Side::Fourier,
            Side::Fourier => Side::Spatial,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Spatial => f.write_str("spatial"),
            Side::Fourier => f.write_str("fourier"),
        }
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Side::Spatial),
            "fourier" => Ok(Side::Fourier),
            other => Err(Error::invalid(format!("unknown side '{other}'"))),
        }
    }
}

/// How moment values are perturbed.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationSpec {
    None,
    /// i.i.d. uniform on the complex disk of radius `magnitude`.
    UniformDisk { magnitude: f64, seed: u64 },
    /// Explicit additive values; indices not listed are left alone.
    FixedTable(Vec<(MultiIndex, Complex64)>),
}

impl PerturbationSpec {
    pub fn uniform_disk(magnitude: f64, seed: u64) -> Self {
        PerturbationSpec::UniformDisk { magnitude, seed }
    }
}

impl FromStr for PerturbationSpec {
    type Err = Error;

    /// `none` or `uniform_disk:<eps>:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["none"] => Ok(PerturbationSpec::None),
            ["uniform_disk", eps, seed] => {
                let magnitude: f64 = eps
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad noise magnitude '{eps}'")))?;
                let seed: u64 = seed
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad noise seed '{seed}'")))?;
                if !magnitude.is_finite() || magnitude < 0.0 {
                    return Err(Error::invalid("noise magnitude must be finite and >= 0"));
                }
                Ok(PerturbationSpec::UniformDisk { magnitude, seed })
            }
            _ => Err(Error::invalid(format!(
                "noise spec '{s}' is not 'none' or 'uniform_disk:<eps>:<seed>'"
            ))),
        }
    }
}

/// What a perturbation did, in the units of the side it was applied on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub kind: String,
    pub side: Side,
    pub magnitude: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// `max_k |eps_k|` actually added.
    pub max_abs: f64,
}

/// Hermite moments indexed by multi-index, kept in graded-lex order for every
/// index with total degree below `max_total_degree`.
///
/// Values are stored on the spatial side. A Fourier-side set reports values
/// multiplied by `(-i)^{|k|_1} (2 pi)^{q/2}`, so switching sides never touches
/// the stored numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    q: usize,
    side: Side,
    max_total_degree: usize,
    spatial: Vec<Complex64>,
    perturbations: Vec<PerturbationRecord>,
}

fn rotate_minus_i(v: (DoubleDouble, DoubleDouble), t: usize) -> (DoubleDouble, DoubleDouble) {
    let (re, im) = v;
    match t % 4 {
        0 => (re, im),
        1 => (im, -re),
        2 => (-re, -im),
        _ => (-im, re),
    }
}

fn rotate_plus_i(v: (DoubleDouble, DoubleDouble), t: usize) -> (DoubleDouble, DoubleDouble) {
    let (re, im) = v;
    match t % 4 {
        0 => (re, im),
        1 => (-im, re),
        2 => (-re, -im),
        _ => (im, -re),
    }
}

impl MomentSet {
    pub fn zeros(q: usize, max_total_degree: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("dimension q must be at least 1"));
        }
        Ok(MomentSet {
            q,
            side: Side::Spatial,
            max_total_degree,
            spatial: vec![Complex64::new(0.0, 0.0); index_count(q, max_total_degree)],
            perturbations: Vec::new(),
        })
    }

    /// Build from values given on `side`. Indices not listed are zero.
    pub fn from_values(
        q: usize,
        side: Side,
        max_total_degree: usize,
        values: impl IntoIterator<Item = (MultiIndex, Complex64)>,
    ) -> Result<Self> {
        let mut set = MomentSet::zeros(q, max_total_degree)?;
        set.side = side;
        let scale = fourier_scale(q);
        let mut seen = vec![false; set.spatial.len()];
        for (k, v) in values {
            let slot = set.slot(&k)?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::malformed(format!("duplicate multi-index {k:?}")));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite("moment value"));
            }
            set.spatial[slot] = match side {
                Side::Spatial => v,
                Side::Fourier => from_fourier(
                    (DoubleDouble::from_f64(v.re), DoubleDouble::from_f64(v.im)),
                    k.total(),
                    scale,
                ),
            };
        }
        Ok(set)
    }

    fn slot(&self, k: &MultiIndex) -> Result<usize> {
        if k.dim() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                found: k.dim(),
            });
        }
        if k.total() >= self.max_total_degree {
            return Err(Error::malformed(format!(
                "multi-index {k:?} has total degree >= {}",
                self.max_total_degree
            )));
        }
        Ok(graded_lex_rank(k))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn max_total_degree(&self) -> usize {
        self.max_total_degree
    }

    pub fn len(&self) -> usize {
        self.spatial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spatial.is_empty()
    }

    pub fn indices(&self) -> Vec<MultiIndex> {
        enumerate_indices(self.q, self.max_total_degree).expect("q >= 1")
    }

    /// Spatial-side values in graded-lex order, whatever the set's side.
    pub fn spatial_values(&self) -> &[Complex64] {
        &self.spatial
    }

    /// The value at `k` on this set's side.
    pub fn value(&self, k: &MultiIndex) -> Result<Complex64> {
        let slot = self.slot(k)?;
        Ok(match self.side {
            Side::Spatial => self.spatial[slot],
            Side::Fourier => {
                let (re, im) = self.fourier_dd(slot, k.total(), fourier_scale(self.q));
                Complex64::new(re.to_f64(), im.to_f64())
            }
        })
    }

    /// `(k, value)` pairs on this set's side, graded-lex.
    pub fn values(&self) -> Vec<(MultiIndex, Complex64)> {
        self.indices()
            .into_iter()
            .map(|k| {
                let v = self.value(&k).expect("index from own enumeration");
                (k, v)
            })
            .collect()
    }

    fn fourier_dd(&self, slot: usize, total: usize, scale: DoubleDouble) -> (DoubleDouble, DoubleDouble) {
        let v = self.spatial[slot];
        rotate_minus_i(
            (
                DoubleDouble::from_f64(v.re) * scale,
                DoubleDouble::from_f64(v.im) * scale,
            ),
            total,
        )
    }

    /// Same moments, presented on the other side.
    pub fn convert_side(&self) -> MomentSet {
        let mut out = self.clone();
        out.side = self.side.opposite();
        out
    }

    pub fn to_spatial(&self) -> MomentSet {
        match self.side {
            Side::Spatial => self.clone(),
            Side::Fourier => self.convert_side(),
        }
    }

    pub fn perturbations(&self) -> &[PerturbationRecord] {
        &self.perturbations
    }

    /// Upper bound on `max_k |eps_k|` in spatial units accumulated over all
    /// perturbations applied so far.
    pub fn spatial_noise_bound(&self) -> f64 {
        let scale = fourier_scale(self.q).to_f64();
        self.perturbations
            .iter()
            .map(|p| match p.side {
                Side::Spatial => p.max_abs,
                Side::Fourier => p.max_abs / scale,
            })
            .fold(0.0, |acc, v| acc + v)
    }

    /// Elementwise `alpha * self + beta * other`, on the spatial side.
    pub fn linear_combination(&self, alpha: Complex64, other: &MomentSet, beta: Complex64) -> Result<MomentSet> {
        if self.q != other.q || self.max_total_degree != other.max_total_degree {
            return Err(Error::invalid("moment sets differ in dimension or depth"));
        }
        let spatial = self
            .spatial
            .iter()
            .zip(&other.spatial)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(MomentSet {
            q: self.q,
            side: Side::Spatial,
            max_total_degree: self.max_total_degree,
            spatial,
            perturbations: Vec::new(),
        })
    }

    /// Keep only total degrees below `bound`.
    pub fn truncated(&self, bound: usize) -> Result<MomentSet> {
        if bound > self.max_total_degree {
            return Err(Error::invalid("cannot truncate to a deeper set"));
        }
        let mut out = self.clone();
        out.max_total_degree = bound;
        out.spatial.truncate(index_count(self.q, bound));
        Ok(out)
    }

    /// JSON moment file. Values are written with 17 significant digits;
    /// Fourier-side values are rounded from a double-double product so that
    /// reading them back recovers the stored spatial values exactly.
    pub fn to_json_value(&self) -> Value {
        let scale = fourier_scale(self.q);
        let values: Vec<Value> = self
            .indices()
            .into_iter()
            .enumerate()
            .map(|(slot, k)| {
                let (re, im) = match self.side {
                    Side::Spatial => {
                        let v = self.spatial[slot];
                        (format_f64_17(v.re), format_f64_17(v.im))
                    }
                    Side::Fourier => {
                        let (re, im) = self.fourier_dd(slot, k.total(), scale);
                        (format_17(re), format_17(im))
                    }
                };
                json!({"k": k.degrees(), "v": [raw_number(re), raw_number(im)]})
            })
            .collect();
        let mut obj = Map::new();
        obj.insert("q".into(), json!(self.q));
        obj.insert("side".into(), json!(self.side));
        obj.insert("max_total_degree".into(), json!(self.max_total_degree));
        obj.insert("values".into(), Value::Array(values));
        if !self.perturbations.is_empty() {
            obj.insert(
                "perturbations".into(),
                serde_json::to_value(&self.perturbations).expect("records serialize"),
            );
        }
        Value::Object(obj)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("moment file serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        MomentSet::from_json_value(&value)
    }

    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::malformed("moment file must be a JSON object"))?;
        let q = obj
            .get("q")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::malformed("moment file needs integer 'q'"))? as usize;
        let side: Side = obj
            .get("side")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::malformed("moment file needs 'side'"))?
            .parse()?;
        let max_total_degree = obj
            .get("max_total_degree")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::malformed("moment file needs integer 'max_total_degree'"))?
            as usize;
        let entries = obj
            .get("values")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::malformed("moment file needs a 'values' array"))?;
        let mut set = MomentSet::zeros(q, max_total_degree)?;
        set.side = side;
        let scale = fourier_scale(q);
        let mut seen = vec![false; set.spatial.len()];
        for entry in entries {
            let k = entry
                .get("k")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::malformed("moment entry needs 'k'"))?
                .iter()
                .map(|d| {
                    d.as_u64()
                        .and_then(|d| u32::try_from(d).ok())
                        .ok_or_else(|| Error::malformed("multi-index degrees must be small nonnegative integers"))
                })
                .collect::<Result<Vec<u32>>>()?;
            let k = MultiIndex::new(k)?;
            let v = entry
                .get("v")
                .and_then(Value::as_array)
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::malformed("moment entry needs 'v' as [re, im]"))?;
            let slot = set.slot(&k)?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::malformed(format!("duplicate multi-index {k:?}")));
            }
            let (re, im) = (number_text(&v[0])?, number_text(&v[1])?);
            set.spatial[slot] = match side {
                Side::Spatial => Complex64::new(parse_f64(re)?, parse_f64(im)?),
                Side::Fourier => from_fourier((parse_dd(re)?, parse_dd(im)?), k.total(), scale),
            };
            if !(set.spatial[slot].re.is_finite() && set.spatial[slot].im.is_finite()) {
                return Err(Error::NonFinite("moment value"));
            }
        }
        if let Some(p) = obj.get("perturbations") {
            set.perturbations = serde_json::from_value(p.clone())?;
        }
        Ok(set)
    }
}

fn from_fourier(f: (DoubleDouble, DoubleDouble), total: usize, scale: DoubleDouble) -> Complex64 {
    let (re, im) = rotate_plus_i(f, total);
    Complex64::new((re / scale).to_f64(), (im / scale).to_f64())
}

fn raw_number(text: String) -> Value {
    Value::Number(Number::from_string_unchecked(text))
}

fn number_text(v: &Value) -> Result<&str> {
    match v {
        Value::Number(n) => Ok(n.as_str()),
        _ => Err(Error::malformed("moment values must be numbers")),
    }
}

fn parse_f64(text: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|_| Error::malformed(format!("bad number '{text}'")))
}

fn parse_dd(text: &str) -> Result<DoubleDouble> {
    parse_decimal(text).ok_or_else(|| Error::malformed(format!("bad number '{text}'")))
}

/// Free-function form of [`MomentSet::convert_side`].
pub fn convert_side(m: &MomentSet) -> MomentSet {
    m.convert_side()
}

/// `value(k) = sum_l a_l psi_k(x_l)` for every `|k|_1 < n^2`.
///
/// Masses are accumulated in a canonical order (by location, then
/// amplitude), so the result does not depend on the order of the input list.
pub fn moments_from_masses(scenario: &Scenario, n: usize) -> Result<MomentSet> {
    if n == 0 {
        return Err(Error::invalid("scale n must be at least 1"));
    }
    let depth = n * n;
    let q = scenario.q();
    let mut set = MomentSet::zeros(q, depth)?;
    let indices = set.indices();
    let mut order: Vec<&PointMass> = scenario.masses().iter().collect();
    order.sort_by(|a, b| {
        a.location
            .lex_cmp(&b.location)
            .then(a.amplitude.re.total_cmp(&b.amplitude.re))
            .then(a.amplitude.im.total_cmp(&b.amplitude.im))
    });
    for mass in order {
        if mass.location.dim() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: mass.location.dim(),
            });
        }
        let tables = AxisTables::new(mass.location.coords(), depth);
        for (slot, k) in indices.iter().enumerate() {
            set.spatial[slot] += mass.amplitude * tables.psi(k.degrees());
        }
    }
    Ok(set)
}

/// Add `eps_k` to every stored value on the set's own side.
pub fn perturb(m: &MomentSet, spec: &PerturbationSpec) -> Result<MomentSet> {
    let mut out = m.clone();
    let indices = m.indices();
    let mut eps = vec![Complex64::new(0.0, 0.0); m.len()];
    let (kind, magnitude, seed) = match spec {
        PerturbationSpec::None => return Ok(out),
        PerturbationSpec::UniformDisk { magnitude, seed } => {
            if !magnitude.is_finite() || *magnitude < 0.0 {
                return Err(Error::invalid("noise magnitude must be finite and >= 0"));
            }
            if *magnitude == 0.0 {
                return Ok(out);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for e in eps.iter_mut() {
                let radius = magnitude * rng.random::<f64>().sqrt();
                let angle = 2.0 * PI * rng.random::<f64>();
                *e = Complex64::from_polar(radius, angle);
            }
            ("uniform_disk", *magnitude, Some(*seed))
        }
        PerturbationSpec::FixedTable(table) => {
            let mut largest = 0.0f64;
            for (k, v) in table {
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::NonFinite("perturbation value"));
                }
                let slot = m.slot(k)?;
                eps[slot] += *v;
                largest = largest.max(v.norm());
            }
            ("fixed_table", largest, None)
        }
    };
    let scale = fourier_scale(m.q);
    for ((slot, k), e) in indices.iter().enumerate().zip(&eps) {
        if *e == Complex64::new(0.0, 0.0) {
            continue;
        }
        out.spatial[slot] += match m.side {
            Side::Spatial => *e,
            Side::Fourier => from_fourier(
                (DoubleDouble::from_f64(e.re), DoubleDouble::from_f64(e.im)),
                k.total(),
                scale,
            ),
        };
    }
    let max_abs = eps.iter().map(|e| e.norm()).fold(0.0, f64::max);
    out.perturbations.push(PerturbationRecord {
        kind: kind.to_string(),
        side: m.side,
        magnitude,
        seed,
        max_abs,
    });
    Ok(out)
}

/// A real density on R^q that can be sampled pointwise.
pub trait Density: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, u: &[f64]) -> f64;

    /// Panel edges along `axis` when the density is piecewise smooth on a
    /// known lattice.
    fn breakpoints(&self, _axis: usize) -> Option<Vec<f64>> {
        None
    }

    /// Smallest feature the quadrature has to resolve.
    fn feature_scale(&self) -> Option<f64> {
        None
    }
}

/// A closure-backed density.
pub struct DensityFn<F> {
    q: usize,
    f: F,
    feature_scale: Option<f64>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> DensityFn<F> {
    pub fn new(q: usize, f: F) -> Self {
        DensityFn {
            q,
            f,
            feature_scale: None,
        }
    }

    pub fn with_feature_scale(mut self, scale: f64) -> Self {
        self.feature_scale = Some(scale);
        self
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Density for DensityFn<F> {
    fn dim(&self) -> usize {
        self.q
    }

    fn eval(&self, u: &[f64]) -> f64 {
        (self.f)(u)
    }

    fn feature_scale(&self) -> Option<f64> {
        self.feature_scale
    }
}

/// Density samples on a uniform lattice covering a box, row-major with the
/// last axis fastest. Between samples the density is multilinear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub q: usize,
    #[serde(rename = "box")]
    pub region: Region,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(region: Region, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let grid = DensityGrid {
            q: region.dim(),
            region,
            shape,
            values,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Sample `f` at the lattice nodes.
    pub fn sample(region: Region, shape: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let total: usize = shape.iter().product();
        let q = region.dim();
        if shape.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: shape.len(),
            });
        }
        let mut values = Vec::with_capacity(total);
        let mut u = vec![0.0; q];
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..q).rev() {
                let i = rem % shape[a];
                rem /= shape[a];
                u[a] = axis_node(&region, &shape, a, i);
            }
            values.push(f(&u));
        }
        DensityGrid::new(region, shape, values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.region.dim() != self.q || self.shape.len() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                found: self.shape.len(),
            });
        }
        if self.shape.iter().any(|&s| s < 2) {
            return Err(Error::malformed("density grid needs at least 2 samples per axis"));
        }
        let total: usize = self.shape.iter().product();
        if total != self.values.len() {
            return Err(Error::malformed(format!(
                "density grid shape expects {total} values, found {}",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density samples"));
        }
        Ok(())
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.region.hi()[axis] - self.region.lo()[axis]) / (self.shape[axis] - 1) as f64
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let grid: DensityGrid = serde_json::from_str(text)?;
        grid.validate()?;
        Ok(grid)
    }
}

fn axis_node(region: &Region, shape: &[usize], axis: usize, i: usize) -> f64 {
    let lo = region.lo()[axis];
    let hi = region.hi()[axis];
    if i + 1 == shape[axis] {
        hi
    } else {
        lo + i as f64 * (hi - lo) / (shape[axis] - 1) as f64
    }
}

impl Density for DensityGrid {
    fn dim(&self) -> usize {
        self.q
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let q = self.q;
        let mut base = vec![0usize; q];
        let mut frac = vec![0.0; q];
        for a in 0..q {
            let h = self.spacing(a);
            let lo = self.region.lo()[a];
            let hi = self.region.hi()[a];
            if u[a] < lo || u[a] > hi {
                return 0.0;
            }
            let pos = if h > 0.0 { (u[a] - lo) / h } else { 0.0 };
            let cell = (pos.floor() as usize).min(self.shape[a] - 2);
            base[a] = cell;
            frac[a] = (pos - cell as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << q) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for a in 0..q {
                let up = (corner >> (q - 1 - a)) & 1 == 1;
                weight *= if up { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.shape[a] + base[a] + usize::from(up);
            }
            if weight != 0.0 {
                acc += weight * self.values[flat];
            }
        }
        acc
    }

    fn breakpoints(&self, axis: usize) -> Option<Vec<f64>> {
        Some(
            (0..self.shape[axis])
                .map(|i| axis_node(&self.region, &self.shape, axis, i))
                .collect(),
        )
    }

    fn feature_scale(&self) -> Option<f64> {
        (0..self.q).map(|a| self.spacing(a)).min_by(f64::total_cmp)
    }
}

/// Gauss-Legendre nodes per panel in density quadrature, for a panel as
/// wide as [`max_panel_width`] allows.
pub const DENSITY_NODES_PER_PANEL: usize = 10;

/// Floor on nodes per panel for narrow panels.
pub const DENSITY_MIN_NODES_PER_PANEL: usize = 3;

/// Largest number of tensor quadrature nodes `moments_from_density` will
/// evaluate.
pub const DENSITY_NODE_CAP: usize = 50_000_000;

/// Widest panel that still resolves every `psi_j` with `j < degree_bound`:
/// a quarter of the shortest local period `2 pi / sqrt(2 j + 1)`.
pub fn max_panel_width(degree_bound: usize) -> f64 {
    let top = degree_bound.saturating_sub(1) as f64;
    PI / (2.0 * (2.0 * top + 1.0).sqrt())
}

/// Moments of a sampled density on its own box.
pub fn moments_from_density(grid: &DensityGrid, n: usize) -> Result<MomentSet> {
    grid.validate()?;
    moments_from_density_on(grid, &grid.region, n)
}

/// `value(k) ~ integral over region of psi_k F` by tensor composite
/// Gauss-Legendre quadrature, for `|k|_1 < n^2`.
pub fn moments_from_density_on(density: &impl Density, region: &Region, n: usize) -> Result<MomentSet> {
    if n == 0 {
        return Err(Error::invalid("scale n must be at least 1"));
    }
    let q = density.dim();
    if region.dim() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: region.dim(),
        });
    }
    let depth = n * n;
    let width = max_panel_width(depth);
    let mut rules: Vec<QuadratureRule> = Vec::with_capacity(q);
    for a in 0..q {
        let (lo, hi) = (region.lo()[a], region.hi()[a]);
        let breaks = match density.breakpoints(a) {
            Some(b) => {
                let widest = b.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                if widest > width {
                    return Err(Error::GridTooCoarse {
                        spacing: widest,
                        required: width,
                        degree: depth - 1,
                    });
                }
                b
            }
            None => {
                let target = match density.feature_scale() {
                    Some(s) if s > 0.0 => width.min(0.5 * s),
                    _ => width,
                };
                let panels = (((hi - lo) / target).ceil() as usize).max(1);
                uniform_breakpoints(lo, hi, panels)?
            }
        };
        // Panels much narrower than the resolution bound need fewer nodes.
        let widest = breaks.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let per_panel = ((DENSITY_NODES_PER_PANEL as f64 * widest / width).ceil() as usize)
            .clamp(DENSITY_MIN_NODES_PER_PANEL, DENSITY_NODES_PER_PANEL);
        rules.push(composite_on_breakpoints(&breaks, per_panel)?);
    }
    let total_nodes = rules
        .iter()
        .try_fold(1usize, |acc, r| acc.checked_mul(r.len()))
        .unwrap_or(usize::MAX);
    if total_nodes > DENSITY_NODE_CAP {
        return Err(Error::GridTooLarge {
            nodes: total_nodes,
            cap: DENSITY_NODE_CAP,
        });
    }

    // Sample the density on the tensor grid.
    let sizes: Vec<usize> = rules.iter().map(QuadratureRule::len).collect();
    let mut tensor = Vec::with_capacity(total_nodes);
    let mut u = vec![0.0; q];
    for flat in 0..total_nodes {
        let mut rem = flat;
        for a in (0..q).rev() {
            u[a] = rules[a].nodes[rem % sizes[a]];
            rem /= sizes[a];
        }
        tensor.push(density.eval(&u));
    }

    // Contract one axis at a time, last axis first:
    // shape [P_0..P_a, D..D] -> [P_0..P_{a-1}, D, D..D].
    for a in (0..q).rev() {
        let pre: usize = sizes[..a].iter().product();
        let post = depth.pow((q - 1 - a) as u32);
        let p_len = sizes[a];
        let mut psi = vec![0.0; p_len * depth];
        for (p, chunk) in psi.chunks_mut(depth).enumerate() {
            hermite_fill(rules[a].nodes[p], chunk);
            let w = rules[a].weights[p];
            chunk.iter_mut().for_each(|v| *v *= w);
        }
        let mut next = vec![0.0; pre * depth * post];
        for ipre in 0..pre {
            for p in 0..p_len {
                let src = &tensor[(ipre * p_len + p) * post..(ipre * p_len + p + 1) * post];
                for k in 0..depth {
                    let c = psi[p * depth + k];
                    if c == 0.0 {
                        continue;
                    }
                    let dst = &mut next[(ipre * depth + k) * post..(ipre * depth + k + 1) * post];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
        tensor = next;
    }

    let mut set = MomentSet::zeros(q, depth)?;
    for (slot, k) in set.indices().iter().enumerate() {
        let flat = k
            .degrees()
            .iter()
            .fold(0usize, |acc, &d| acc * depth + d as usize);
        set.spatial[slot] = Complex64::new(tensor[flat], 0.0);
    }
    Ok(set)
}

/// Sorted view of a moment set as a map, mostly for inspection.
pub fn as_map(m: &MomentSet) -> BTreeMap<MultiIndex, Complex64> {
    m.values().into_iter().collect()
}
