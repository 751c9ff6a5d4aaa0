//! Inradius/circumradius element quality, normalized to 1 for the equilateral
//! triangle and the regular tetrahedron.

use serde::{Deserialize, Serialize};

use super::predicates;
use super::stencil::{per_vertex_quality, Stencils};
use super::SimplicialMesh;
use crate::points::dist;

pub fn signed_measure(p: &[&[f64]]) -> f64 {
    match p.len() {
        3 => 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0])),
        4 => {
            let u = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
            let v = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
            let w = [p[3][0] - p[0][0], p[3][1] - p[0][1], p[3][2] - p[0][2]];
            (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
                + u[2] * (v[0] * w[1] - v[1] * w[0]))
                / 6.0
        }
        n => panic!("unsupported simplex size {n}"),
    }
}

/// 16A²/(abc(a+b+c)) = 2·inradius/circumradius.
pub fn triangle_quality(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let (la, lb, lc) = (dist(b, c), dist(a, c), dist(a, b));
    let denom = la * lb * lc * (la + lb + lc);
    if denom == 0.0 {
        return 0.0;
    }
    // Heron-free area from the cross product works in 2D and 3D alike
    let u: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let v: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
    let area2 = if a.len() == 2 {
        let cr = u[0] * v[1] - u[1] * v[0];
        cr * cr
    } else {
        let cr = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        cr.iter().map(|x| x * x).sum()
    };
    // area² = area2 / 4
    4.0 * area2 / denom
}

fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let cr = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt()
}

/// 3·inradius/circumradius of a tetrahedron.
pub fn tetrahedron_quality(p: &[&[f64]]) -> f64 {
    let vol = signed_measure(p).abs();
    if vol == 0.0 {
        return 0.0;
    }
    let faces = triangle_area(p[1], p[2], p[3])
        + triangle_area(p[0], p[2], p[3])
        + triangle_area(p[0], p[1], p[3])
        + triangle_area(p[0], p[1], p[2]);
    let inradius = 3.0 * vol / faces;
    // products of opposite edge lengths
    let x = dist(p[0], p[1]) * dist(p[2], p[3]);
    let y = dist(p[0], p[2]) * dist(p[1], p[3]);
    let z = dist(p[0], p[3]) * dist(p[1], p[2]);
    let prod = (x + y + z) * (x + y - z) * (x - y + z) * (-x + y + z);
    let circumradius = prod.max(0.0).sqrt() / (24.0 * vol);
    if circumradius == 0.0 {
        return 0.0;
    }
    3.0 * inradius / circumradius
}

/// Element quality in [0, 1]; zero-measure elements score 0.
pub fn element_quality(p: &[&[f64]]) -> f64 {
    match p.len() {
        3 => triangle_quality(p[0], p[1], p[2]),
        4 => tetrahedron_quality(p),
        n => panic!("unsupported simplex size {n}"),
    }
}

/// Number of elements with nonpositive orientation under the stored vertex order.
pub fn orientation_check(mesh: &SimplicialMesh) -> usize {
    (0..mesh.num_elements())
        .filter(|&e| predicates::orient(&mesh.element_coords(e)) <= 0.0)
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub q_e: Vec<f64>,
    pub q_y: Vec<f64>,
    pub norm2_qe: f64,
    pub min_qe: f64,
    pub mean_qe: f64,
    pub norm2_qy: f64,
    pub min_qy: f64,
    pub inverted_count: usize,
}

impl QualityReport {
    pub fn element_qualities(mesh: &SimplicialMesh) -> Vec<f64> {
        (0..mesh.num_elements())
            .map(|e| element_quality(&mesh.element_coords(e)))
            .collect()
    }

    pub fn compute(mesh: &SimplicialMesh, stencils: &Stencils) -> Self {
        let q_e = Self::element_qualities(mesh);
        let q_y = per_vertex_quality(mesh, &q_e, stencils);
        Self::from_fields(mesh, q_e, q_y)
    }

    pub fn from_fields(mesh: &SimplicialMesh, q_e: Vec<f64>, q_y: Vec<f64>) -> Self {
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let mean_qe = if q_e.is_empty() {
            0.0
        } else {
            q_e.iter().sum::<f64>() / q_e.len() as f64
        };
        QualityReport {
            norm2_qe: norm2(&q_e),
            min_qe: min(&q_e),
            mean_qe,
            norm2_qy: norm2(&q_y),
            min_qy: min(&q_y),
            inverted_count: orientation_check(mesh),
            q_e,
            q_y,
        }
    }
}
