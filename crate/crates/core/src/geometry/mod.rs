//! Canonical domains, node sets and the deformation maps of the experiments.

pub mod maps;
mod nodes;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{norm, Points};

pub use maps::{
    circle_to_square, cube_to_sphere, joukowsky, square_to_disk, square_to_disk_unit, AnnulusMap, AnnulusSide,
    DeformationMap, JoukowskyParams,
};
pub use nodes::{
    classify_boundary, generate_nodes, select_data_sites, spacing_for_target, NodeRole, NodeSet, RepulsionOptions,
};

/// Domain kinds. The square and cube are the symmetric [-1, 1]^s boxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    UnitSquare,
    UnitDisk,
    Annulus { r_in: f64, r_out: f64 },
    UnitCube,
    UnitBall,
}

fn box_sdf(p: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::NEG_INFINITY;
    for &c in p {
        let q = c.abs() - 1.0;
        outside += q.max(0.0) * q.max(0.0);
        inside = inside.max(q);
    }
    outside.sqrt() + inside.min(0.0)
}

impl DomainSpec {
    pub fn annulus(r_in: f64, r_out: f64) -> Result<Self> {
        if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
            return Err(Error::invalid(format!("annulus needs 0 < r_in < r_out, got {r_in}, {r_out}")));
        }
        Ok(DomainSpec::Annulus { r_in, r_out })
    }

    pub fn validate(&self) -> Result<()> {
        if let DomainSpec::Annulus { r_in, r_out } = *self {
            DomainSpec::annulus(r_in, r_out)?;
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainSpec::UnitSquare => "unit_square",
            DomainSpec::UnitDisk => "unit_disk",
            DomainSpec::Annulus { .. } => "annulus",
            DomainSpec::UnitCube => "unit_cube",
            DomainSpec::UnitBall => "unit_ball",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::UnitCube | DomainSpec::UnitBall => 3,
            _ => 2,
        }
    }

    /// Signed distance to the boundary, negative inside.
    pub fn boundary_fn(&self, p: &[f64]) -> f64 {
        match *self {
            DomainSpec::UnitSquare | DomainSpec::UnitCube => box_sdf(p),
            DomainSpec::UnitDisk | DomainSpec::UnitBall => norm(p) - 1.0,
            DomainSpec::Annulus { r_in, r_out } => {
                let r = norm(p);
                (r_in - r).max(r - r_out)
            }
        }
    }

    /// Central-difference gradient of the signed distance.
    pub fn boundary_gradient(&self, p: &[f64]) -> Vec<f64> {
        let step = 1e-7;
        let mut q = p.to_vec();
        (0..p.len())
            .map(|d| {
                q[d] = p[d] + step;
                let plus = self.boundary_fn(&q);
                q[d] = p[d] - step;
                let minus = self.boundary_fn(&q);
                q[d] = p[d];
                (plus - minus) / (2.0 * step)
            })
            .collect()
    }

    /// Smallest length scale of the geometry: the width of the annulus ring,
    /// the side or diameter otherwise.
    pub fn feature_size(&self) -> f64 {
        match *self {
            DomainSpec::Annulus { r_in, r_out } => r_out - r_in,
            _ => 2.0,
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            DomainSpec::UnitSquare => 2.0 * 2f64.sqrt(),
            DomainSpec::UnitCube => 2.0 * 3f64.sqrt(),
            DomainSpec::UnitDisk | DomainSpec::UnitBall => 2.0,
            DomainSpec::Annulus { r_out, .. } => 2.0 * r_out,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            DomainSpec::UnitSquare => 4.0,
            DomainSpec::UnitDisk => PI,
            DomainSpec::Annulus { r_in, r_out } => PI * (r_out * r_out - r_in * r_in),
            DomainSpec::UnitCube => 8.0,
            DomainSpec::UnitBall => 4.0 * PI / 3.0,
        }
    }

    /// Length (2D) or area (3D) of the boundary.
    pub fn boundary_measure(&self) -> f64 {
        match *self {
            DomainSpec::UnitSquare => 8.0,
            DomainSpec::UnitDisk => TAU,
            DomainSpec::Annulus { r_in, r_out } => TAU * (r_in + r_out),
            DomainSpec::UnitCube => 24.0,
            DomainSpec::UnitBall => 4.0 * PI,
        }
    }

    /// Half extent of the axis-aligned bounding box centred at the origin.
    pub fn half_extent(&self) -> f64 {
        match *self {
            DomainSpec::Annulus { r_out, .. } => r_out,
            _ => 1.0,
        }
    }

    /// Deterministic boundary samples at spacing about `h`.
    pub fn boundary_samples(&self, h: f64) -> Points {
        match *self {
            DomainSpec::UnitSquare => square_perimeter(h),
            DomainSpec::UnitDisk => circle(1.0, circle_count(1.0, h, 1)),
            DomainSpec::Annulus { r_in, r_out } => {
                let mut pts = circle(r_in, circle_count(r_in, h, 1));
                // a multiple of 8 puts samples at 45° + k·90°, the square corners
                for p in circle(r_out, circle_count(r_out, h, 8)).iter() {
                    pts.push(p);
                }
                pts
            }
            DomainSpec::UnitCube => cube_faces(h),
            DomainSpec::UnitBall => fibonacci_sphere(h),
        }
    }

    /// Indices of inner-circle boundary nodes of an annulus ordered by angle,
    /// tracing the hole. `None` for simply connected domains.
    pub fn hole_ring(&self, nodes: &NodeSet) -> Option<Vec<usize>> {
        let DomainSpec::Annulus { r_in, r_out } = *self else {
            return None;
        };
        let mid = 0.5 * (r_in + r_out);
        let mut ring: Vec<(f64, usize)> = nodes
            .boundary_indices()
            .into_iter()
            .filter_map(|i| {
                let p = nodes.points().point(i);
                (norm(p) < mid).then(|| (p[1].atan2(p[0]), i))
            })
            .collect();
        ring.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Some(ring.into_iter().map(|(_, i)| i).collect())
    }
}

impl std::str::FromStr for DomainSpec {
    type Err = Error;

    /// Parses a domain name; the annulus gets its default radii.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_square" | "square" => Ok(DomainSpec::UnitSquare),
            "unit_disk" | "disk" => Ok(DomainSpec::UnitDisk),
            "annulus" => Ok(DomainSpec::Annulus { r_in: 0.5, r_out: 2.0 }),
            "unit_cube" | "cube" => Ok(DomainSpec::UnitCube),
            "unit_ball" | "ball" => Ok(DomainSpec::UnitBall),
            other => Err(Error::invalid(format!("unknown domain `{other}`"))),
        }
    }
}

fn circle_count(r: f64, h: f64, multiple: usize) -> usize {
    let n = (TAU * r / h).round().max(3.0) as usize;
    let n = n.div_ceil(multiple) * multiple;
    n.max(multiple)
}

fn circle(r: f64, n: usize) -> Points {
    let mut pts = Points::empty(2);
    for i in 0..n {
        let t = TAU * i as f64 / n as f64;
        pts.push(&[r * t.cos(), r * t.sin()]);
    }
    pts
}

/// Counter-clockwise perimeter of [-1, 1]² starting at (-1, -1).
fn square_perimeter(h: f64) -> Points {
    let m = (2.0 / h).round().max(1.0) as usize;
    let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let mut pts = Points::empty(2);
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        for i in 0..m {
            let t = i as f64 / m as f64;
            pts.push(&[a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    pts
}

/// Structured (m+1)² grids on the six faces of [-1, 1]³, shared edges kept once.
fn cube_faces(h: f64) -> Points {
    let m = (2.0 / h).round().max(1.0) as usize;
    let coord = |i: usize| if i == m { 1.0 } else { -1.0 + 2.0 * i as f64 / m as f64 };
    let mut pts = Points::empty(3);
    for i in 0..=m {
        for j in 0..=m {
            for k in 0..=m {
                if i == 0 || i == m || j == 0 || j == m || k == 0 || k == m {
                    pts.push(&[coord(i), coord(j), coord(k)]);
                }
            }
        }
    }
    pts
}

/// Fibonacci lattice on the unit sphere with hexagonal-packing density.
fn fibonacci_sphere(h: f64) -> Points {
    let n = ((4.0 * PI) / (0.5 * 3f64.sqrt() * h * h)).round().max(4.0) as usize;
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut pts = Points::empty(3);
    for i in 0..n {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let t = golden * i as f64;
        pts.push(&[r * t.cos(), r * t.sin(), z]);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn boundary_functions_vanish_on_samples() {
        let domains = [
            DomainSpec::UnitSquare,
            DomainSpec::UnitDisk,
            DomainSpec::annulus(0.5, 2.0).unwrap(),
            DomainSpec::UnitCube,
            DomainSpec::UnitBall,
        ];
        for d in domains {
            let b = d.boundary_samples(0.1);
            assert!(!b.is_empty());
            for p in b.iter() {
                assert!(d.boundary_fn(p).abs() < 1e-14, "{} {p:?}", d.name());
            }
            let origin_side = if matches!(d, DomainSpec::Annulus { .. }) { vec![1.0, 0.0] } else { vec![0.0; d.dim()] };
            assert!(d.boundary_fn(&origin_side) < 0.0);
        }
    }

    #[test]
    fn disk_boundary_function_zero_on_circle() {
        let d = DomainSpec::UnitDisk;
        let t: f64 = 0.3;
        assert!(d.boundary_fn(&[t.cos(), t.sin()]).abs() < 1e-15);
        assert_abs_diff_eq!(d.boundary_fn(&[0.0, 0.0]), -1.0);
    }

    #[test]
    fn square_perimeter_has_corners_and_spacing() {
        let b = DomainSpec::UnitSquare.boundary_samples(0.5);
        assert_eq!(b.len(), 16);
        for c in [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]] {
            assert!(b.iter().any(|p| p == c));
        }
    }

    #[test]
    fn annulus_outer_samples_hit_square_corners() {
        let d = DomainSpec::annulus(0.5, 2.0).unwrap();
        let b = d.boundary_samples(0.07);
        let outer: Vec<&[f64]> = b.iter().filter(|p| norm(p) > 1.0).collect();
        assert_eq!(outer.len() % 8, 0);
        let corner = std::f64::consts::FRAC_PI_4;
        assert!(outer.iter().any(|p| (p[1].atan2(p[0]) - corner).abs() < 1e-12));
    }

    #[test]
    fn cube_samples_are_unique() {
        let b = DomainSpec::UnitCube.boundary_samples(0.5);
        // 5³ − 3³ grid points on the surface
        assert_eq!(b.len(), 125 - 27);
        let mut v: Vec<Vec<u64>> = b.iter().map(|p| p.iter().map(|c| c.to_bits()).collect()).collect();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), b.len());
    }

    #[test]
    fn gradient_points_outward() {
        let d = DomainSpec::UnitDisk;
        let g = d.boundary_gradient(&[0.6, 0.0]);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-6);
        assert!(DomainSpec::annulus(2.0, 1.0).is_err());
        assert_eq!("annulus".parse::<DomainSpec>().unwrap(), DomainSpec::Annulus { r_in: 0.5, r_out: 2.0 });
    }
}
