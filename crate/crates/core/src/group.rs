//! Grouping detected spikes into composite objects.
//!
//! Spikes whose locations chain together within a radius form one group.
//! Each group carries its template (the member locations and amplitudes) and
//! a few summary statistics.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::basis::{Point, Region};
use crate::detect::{cluster_points, DetectedSpike};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRow {
    pub location: Point,
    pub amplitude: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub cardinality: usize,
    /// Weighted by `|a|`; the plain mean when every weight is zero or missing.
    pub centroid: Vec<f64>,
    #[serde(rename = "bbox")]
    pub bounding_box: Region,
    /// `sum |a|`, not `|sum a|`.
    pub total_abs_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: usize,
    pub members: Vec<DetectedSpike>,
    pub template: Vec<TemplateRow>,
    pub stats: GroupStats,
}

impl Group {
    fn from_members(id: usize, members: Vec<DetectedSpike>) -> Result<Self> {
        let q = members[0].location.dim();
        let template: Vec<TemplateRow> = members
            .iter()
            .map(|s| TemplateRow {
                location: s.location.clone(),
                amplitude: s.amplitude,
            })
            .collect();
        let weights: Vec<f64> = members.iter().map(|s| s.amplitude.map_or(0.0, |a| a.norm())).collect();
        let total: f64 = weights.iter().sum();
        let mut centroid = vec![0.0; q];
        let mut lo = vec![f64::INFINITY; q];
        let mut hi = vec![f64::NEG_INFINITY; q];
        for (s, w) in members.iter().zip(&weights) {
            let share = if total > 0.0 { w / total } else { 1.0 / members.len() as f64 };
            for (a, &c) in s.location.coords().iter().enumerate() {
                centroid[a] += share * c;
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c);
            }
        }
        let stats = GroupStats {
            cardinality: members.len(),
            centroid,
            bounding_box: Region::new(Point::new(lo)?, Point::new(hi)?)?,
            total_abs_amplitude: total,
        };
        Ok(Group {
            id,
            members,
            template,
            stats,
        })
    }
}

/// Single-linkage partition of spike locations at `radius`.
pub fn group_spikes(spikes: &[DetectedSpike], radius: f64) -> Result<Vec<Group>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid(format!("grouping radius must be positive, got {radius}")));
    }
    if let Some(first) = spikes.first() {
        let q = first.location.dim();
        if let Some(bad) = spikes.iter().find(|s| s.location.dim() != q) {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: bad.location.dim(),
            });
        }
    }
    let points: Vec<Vec<f64>> = spikes.iter().map(|s| s.location.coords().to_vec()).collect();
    cluster_points(&points, radius)
        .into_iter()
        .enumerate()
        .map(|(id, members)| Group::from_members(id, members.iter().map(|&i| spikes[i].clone()).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub radius: f64,
    pub groups: Vec<Group>,
}

impl GroupReport {
    pub fn new(radius: f64, groups: Vec<Group>) -> Self {
        GroupReport { radius, groups }
    }

    /// `sum_k L_k`.
    pub fn total_members(&self) -> usize {
        self.groups.iter().map(|g| g.stats.cardinality).sum()
    }

    pub fn to_json_value(&self) -> Value {
        let groups: Vec<Value> = self
            .groups
            .iter()
            .map(|g| {
                let template: Vec<Value> = g
                    .template
                    .iter()
                    .map(|row| json!({"x": row.location.coords(), "a": row.amplitude.map(|a| vec![a.re, a.im])}))
                    .collect();
                json!({
                    "id": g.id,
                    "cardinality": g.stats.cardinality,
                    "centroid": g.stats.centroid,
                    "bbox": g.stats.bounding_box,
                    "total_abs_amplitude": g.stats.total_abs_amplitude,
                    "template": template,
                })
            })
            .collect();
        json!({
            "radius": self.radius,
            "count": self.groups.len(),
            "total_members": self.total_members(),
            "groups": groups,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("report serializes")
    }

    /// Template rows: `group,x1..xq,a_re,a_im`.
    pub fn to_csv(&self, q: usize) -> String {
        let mut out = String::from("group,");
        for a in 1..=q {
            let _ = write!(out, "x{a},");
        }
        out.push_str("a_re,a_im\n");
        for g in &self.groups {
            for row in &g.template {
                let _ = write!(out, "{},", g.id);
                for c in row.location.coords() {
                    let _ = write!(out, "{c},");
                }
                match row.amplitude {
                    Some(a) => {
                        let _ = writeln!(out, "{},{}", a.re, a.im);
                    }
                    None => out.push_str(",\n"),
                }
            }
        }
        out
    }

    /// Per-group statistics: `group,cardinality,c1..cq,total_abs_amplitude`.
    pub fn stats_csv(&self, q: usize) -> String {
        let mut out = String::from("group,cardinality,");
        for a in 1..=q {
            let _ = write!(out, "c{a},");
        }
        out.push_str("total_abs_amplitude\n");
        for g in &self.groups {
            let _ = write!(out, "{},{},", g.id, g.stats.cardinality);
            for c in &g.stats.centroid {
                let _ = write!(out, "{c},");
            }
            let _ = writeln!(out, "{}", g.stats.total_abs_amplitude);
        }
        out
    }
}

/// Convenience wrapper: group and wrap in a report.
pub fn group_report(spikes: &[DetectedSpike], radius: f64) -> Result<GroupReport> {
    Ok(GroupReport::new(radius, group_spikes(spikes, radius)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spike(x: &[f64], a: f64) -> DetectedSpike {
        DetectedSpike {
            location: Point::new(x.to_vec()).unwrap(),
            amplitude: Some(Complex64::new(a, 0.0)),
            peak_value: Complex64::new(a, 0.0),
            cluster_id: 0,
            cluster_node_count: 1,
        }
    }

    fn blob(cx: f64, cy: f64) -> Vec<DetectedSpike> {
        vec![spike(&[cx, cy], 1.0), spike(&[cx + 0.5, cy], 0.5), spike(&[cx, cy + 0.5], 2.0)]
    }

    #[test]
    fn no_spikes_no_groups() {
        assert!(group_spikes(&[], 1.0).unwrap().is_empty());
        assert!(group_spikes(&[], 0.0).is_err());
    }

    #[test]
    fn chain_forms_one_group() {
        let spikes: Vec<DetectedSpike> = (0..6).map(|i| spike(&[0.9 * i as f64], 1.0)).collect();
        let groups = group_spikes(&spikes, 1.0).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].stats.cardinality, 6);
    }

    #[test]
    fn two_blobs_two_groups() {
        let mut spikes = blob(5.0, 5.0);
        spikes.extend(blob(-5.0, 0.0));
        let groups = group_spikes(&spikes, 1.0).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].stats.cardinality, 3);
        assert_eq!(groups[1].stats.cardinality, 3);
        // ordered by lex-smallest member
        assert_eq!(groups[0].members[0].location.coords(), &[-5.0, 0.0]);
        assert_eq!(GroupReport::new(1.0, groups).total_members(), 6);
    }

    #[test]
    fn report_examples() {
        let groups = group_spikes(&[spike(&[0.3, -0.2], 1.0)], 1.0).unwrap();
        assert_eq!(groups[0].template.len(), 1);
        assert_eq!(groups[0].stats.centroid, vec![0.3, -0.2]);

        let square = [spike(&[1.0, 1.0], 2.0), spike(&[-1.0, 1.0], 2.0), spike(&[1.0, -1.0], 2.0), spike(&[-1.0, -1.0], 2.0)];
        let g = &group_spikes(&square, 3.0).unwrap()[0];
        assert!(g.stats.centroid.iter().all(|c| c.abs() < 1e-15));

        let mixed = [spike(&[0.0], 1.0), spike(&[0.5], -1.0)];
        let g = &group_spikes(&mixed, 1.0).unwrap()[0];
        assert_eq!(g.stats.total_abs_amplitude, 2.0);
    }

    #[test]
    fn missing_amplitudes_fall_back_to_plain_mean() {
        let mut a = spike(&[0.0], 1.0);
        let mut b = spike(&[1.0], 1.0);
        a.amplitude = None;
        b.amplitude = None;
        let g = &group_spikes(&[a, b], 2.0).unwrap()[0];
        assert_eq!(g.stats.centroid, vec![0.5]);
        assert_eq!(g.stats.total_abs_amplitude, 0.0);
        let report = GroupReport::new(2.0, vec![g.clone()]);
        assert!(report.to_csv(1).contains("0,0,,\n"));
    }

    #[test]
    fn report_formats() {
        let report = group_report(&blob(0.0, 0.0), 1.0).unwrap();
        let v = report.to_json_value();
        assert_eq!(v["count"], 1);
        assert_eq!(v["groups"][0]["template"].as_array().unwrap().len(), 3);
        let csv = report.to_csv(2);
        assert!(csv.starts_with("group,x1,x2,a_re,a_im\n"));
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(report.stats_csv(2).lines().count(), 2);
    }

    fn cloud() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 0..25)
    }

    proptest! {
        #[test]
        fn partition_and_order_invariance(pts in cloud(), radius in 0.1f64..3.0, rot in 0usize..25) {
            let spikes: Vec<DetectedSpike> = pts.iter().map(|&(x, y)| spike(&[x, y], 1.0)).collect();
            let groups = group_spikes(&spikes, radius).unwrap();
            let total: usize = groups.iter().map(|g| g.stats.cardinality).sum();
            prop_assert_eq!(total, spikes.len());
            let mut rotated = spikes.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
            }
            prop_assert_eq!(group_spikes(&rotated, radius).unwrap(), groups);
        }

        #[test]
        fn larger_radius_never_adds_groups(pts in cloud(), r in 0.1f64..2.0, extra in 0.0f64..2.0) {
            let spikes: Vec<DetectedSpike> = pts.iter().map(|&(x, y)| spike(&[x, y], 1.0)).collect();
            let small = group_spikes(&spikes, r).unwrap().len();
            let large = group_spikes(&spikes, r + extra).unwrap().len();
            prop_assert!(large <= small);
        }
    }
}
