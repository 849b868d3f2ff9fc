//! Scenario synthesis: explicit spikes, grids of grouped spikes, random scenes.

use anyhow::{bail, Result};
use clap::ValueEnum;
use hermloc::{Complex64, Point, PointMass, Region, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Pair,
    Triangle,
    Square,
}

impl Template {
    /// Offsets in units of the template scale, and per-member amplitudes.
    fn members(self) -> Vec<([f64; 2], f64)> {
        match self {
            Template::Pair => vec![([-0.5, 0.0], 1.0), ([0.5, 0.0], 0.6)],
            Template::Triangle => vec![
                ([0.0, 0.577_350_269_189_625_8], 1.0),
                ([-0.5, -0.288_675_134_594_812_9], 0.8),
                ([0.5, -0.288_675_134_594_812_9], 0.6),
            ],
            Template::Square => vec![
                ([-0.5, -0.5], 1.0),
                ([0.5, -0.5], 0.8),
                ([-0.5, 0.5], 0.6),
                ([0.5, 0.5], 0.4),
            ],
        }
    }
}

/// `x1,...,xq@a` or `x1,...,xq@re,im`.
pub fn parse_spike(s: &str) -> Result<(Vec<f64>, Complex64), String> {
    let (coords, amp) = s
        .split_once('@')
        .ok_or_else(|| format!("spike '{s}' is not of the form x1,..,xq@amplitude"))?;
    let coords: Vec<f64> = coords
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("bad coordinate '{c}' in spike '{s}'")))
        .collect::<Result<_, _>>()?;
    let parts: Vec<f64> = amp
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("bad amplitude '{c}' in spike '{s}'")))
        .collect::<Result<_, _>>()?;
    let a = match parts.as_slice() {
        [re] => Complex64::new(*re, 0.0),
        [re, im] => Complex64::new(*re, *im),
        _ => return Err(format!("amplitude in spike '{s}' must be 're' or 're,im'")),
    };
    Ok((coords, a))
}

/// `rows x cols`.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("group grid '{s}' is not of the form RxC"))?;
    let r: usize = r.trim().parse().map_err(|_| format!("bad row count in '{s}'"))?;
    let c: usize = c.trim().parse().map_err(|_| format!("bad column count in '{s}'"))?;
    if r == 0 || c == 0 {
        return Err(format!("group grid '{s}' must have at least one row and column"));
    }
    Ok((r, c))
}

pub struct GroupLayout {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub template: Template,
    pub scale: f64,
}

/// Group centres on a `rows x cols` lattice of the given pitch, centred at the
/// origin; each group is a scaled copy of the template.
pub fn grid_of_groups(layout: &GroupLayout) -> Vec<PointMass> {
    let mut out = Vec::new();
    let members = layout.template.members();
    for r in 0..layout.rows {
        for c in 0..layout.cols {
            let cx = (c as f64 - (layout.cols - 1) as f64 / 2.0) * layout.pitch;
            let cy = (r as f64 - (layout.rows - 1) as f64 / 2.0) * layout.pitch;
            for (off, a) in &members {
                let p = Point::new(vec![cx + layout.scale * off[0], cy + layout.scale * off[1]]).expect("finite");
                out.push(PointMass::new(p, Complex64::new(*a, 0.0)));
            }
        }
    }
    out
}

/// `count` masses placed uniformly in `region` with pairwise distance at least
/// `min_separation` from each other and from `existing`; magnitudes uniform in
/// `[0.5, 1.5]` with a random sign.
pub fn random_masses(count: usize, region: &Region, min_separation: f64, seed: u64, existing: &[PointMass]) -> Result<Vec<PointMass>> {
    const ATTEMPTS_PER_SPIKE: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = region.dim();
    let mut placed: Vec<PointMass> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..ATTEMPTS_PER_SPIKE {
            let x: Vec<f64> = (0..q).map(|a| rng.random_range(region.lo()[a]..=region.hi()[a])).collect();
            let p = Point::new(x)?;
            let clear = existing
                .iter()
                .chain(&placed)
                .all(|m| m.location.distance(&p) >= min_separation);
            if clear {
                found = Some(p);
                break;
            }
        }
        let Some(p) = found else {
            bail!("could not place {count} spikes at separation {min_separation} in the box");
        };
        let mag = rng.random_range(0.5..=1.5);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        placed.push(PointMass::new(p, Complex64::new(sign * mag, 0.0)));
    }
    Ok(placed)
}

/// Smallest cube `[-c, c]^q`, `c` a positive integer, holding every mass with
/// a margin of one.
pub fn auto_box(q: usize, masses: &[PointMass]) -> Result<Region> {
    let b = masses.iter().map(|m| m.location.max_abs()).fold(0.0, f64::max);
    let c = (b + 1.0).ceil().max(1.0);
    Ok(Region::cube(q, -c, c)?)
}

pub fn region_from_intervals(q: usize, intervals: &[(f64, f64)]) -> Result<Region> {
    let intervals: Vec<(f64, f64)> = match intervals.len() {
        1 => vec![intervals[0]; q],
        n if n == q => intervals.to_vec(),
        n => return Err(Usage(format!("--box given {n} times for dimension {q}; give it once or once per axis")).into()),
    };
    let lo = Point::new(intervals.iter().map(|i| i.0).collect())?;
    let hi = Point::new(intervals.iter().map(|i| i.1).collect())?;
    Ok(Region::new(lo, hi)?)
}

pub fn build(q: usize, masses: Vec<PointMass>, region: Region) -> Result<Scenario> {
    Ok(Scenario::new(q, masses, region)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_syntax() {
        let (x, a) = parse_spike("-1.5,2@-0.8").unwrap();
        assert_eq!(x, vec![-1.5, 2.0]);
        assert_eq!(a, Complex64::new(-0.8, 0.0));
        let (_, a) = parse_spike("0@1,-2").unwrap();
        assert_eq!(a, Complex64::new(1.0, -2.0));
        assert!(parse_spike("1,2").is_err());
        assert!(parse_spike("a@1").is_err());
    }

    #[test]
    fn three_by_three_triangles() {
        let masses = grid_of_groups(&GroupLayout {
            rows: 3,
            cols: 3,
            pitch: 4.0,
            template: Template::Triangle,
            scale: 0.6,
        });
        assert_eq!(masses.len(), 27);
        assert!(masses.iter().all(|m| m.location.max_abs() < 4.5));
    }

    #[test]
    fn random_respects_separation() {
        let region = Region::cube(2, -3.0, 3.0).unwrap();
        let a = random_masses(6, &region, 1.0, 3, &[]).unwrap();
        let b = random_masses(6, &region, 1.0, 3, &[]).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            for j in 0..i {
                assert!(a[i].location.distance(&a[j].location) >= 1.0);
            }
        }
        assert!(random_masses(500, &region, 2.0, 0, &[]).is_err());
    }

    #[test]
    fn auto_box_margin() {
        let m = vec![PointMass::real(vec![2.3], 1.0).unwrap()];
        let r = auto_box(1, &m).unwrap();
        assert_eq!(r.hi().coords(), &[4.0]);
        assert_eq!(auto_box(2, &[]).unwrap().lo().coords(), &[-1.0, -1.0]);
    }
}
