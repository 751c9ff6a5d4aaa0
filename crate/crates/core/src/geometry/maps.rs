//! Boundary deformation maps used by the experiments.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// admissible rounding slack on the canonical [-1, 1]^s inputs
const BOX_SLACK: f64 = 1e-12;

fn check_box(coords: &[f64]) -> Result<()> {
    if coords.iter().all(|c| c.is_finite() && c.abs() <= 1.0 + BOX_SLACK) {
        Ok(())
    } else {
        Err(Error::invalid(format!("point {coords:?} lies outside [-1, 1]^{}", coords.len())))
    }
}

/// Square [-1,1]² onto the unit disk: (x√(1−y²/2), y√(1−x²/2)).
pub fn square_to_disk(x: f64, y: f64) -> Result<[f64; 2]> {
    check_box(&[x, y])?;
    Ok([x * (1.0 - 0.5 * y * y).sqrt(), y * (1.0 - 0.5 * x * x).sqrt()])
}

/// Same map for inputs given on [0,1]², affinely rescaled to [-1,1]² first.
pub fn square_to_disk_unit(x: f64, y: f64) -> Result<[f64; 2]> {
    square_to_disk(2.0 * x - 1.0, 2.0 * y - 1.0)
}

/// Cube [-1,1]³ onto the unit ball, x' = x√(1 − y²/2 − z²/2 + y²z²/3) and cyclic.
pub fn cube_to_sphere(x: f64, y: f64, z: f64) -> Result<[f64; 3]> {
    check_box(&[x, y, z])?;
    let (x2, y2, z2) = (x * x, y * y, z * z);
    Ok([
        x * (1.0 - 0.5 * y2 - 0.5 * z2 + y2 * z2 / 3.0).sqrt(),
        y * (1.0 - 0.5 * z2 - 0.5 * x2 + z2 * x2 / 3.0).sqrt(),
        z * (1.0 - 0.5 * x2 - 0.5 * y2 + x2 * y2 / 3.0).sqrt(),
    ])
}

/// Affine pre-map z = c + a·p followed by w = z + 1/z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoukowskyParams {
    pub center: [f64; 2],
    /// Complex scale; its modulus is the generating-circle radius.
    pub scale: [f64; 2],
}

impl JoukowskyParams {
    pub const IDENTITY: JoukowskyParams = JoukowskyParams {
        center: [0.0, 0.0],
        scale: [1.0, 0.0],
    };

    /// Generating circle through z = 1 reached from p = (1, 0): a = 1 − c.
    pub fn through_trailing_edge(center: [f64; 2]) -> Self {
        JoukowskyParams {
            center,
            scale: [1.0 - center[0], -center[1]],
        }
    }
}

impl Default for JoukowskyParams {
    fn default() -> Self {
        JoukowskyParams::through_trailing_edge([-0.08, 0.08])
    }
}

pub fn joukowsky(p: [f64; 2], params: &JoukowskyParams) -> Result<[f64; 2]> {
    let c = Complex::new(params.center[0], params.center[1]);
    let a = Complex::new(params.scale[0], params.scale[1]);
    let z = c + a * Complex::new(p[0], p[1]);
    if z.norm_sqr() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::invalid(format!("Joukowsky pole: pre-map sends {p:?} to z = 0")));
    }
    let w = z + z.inv();
    Ok([w.re, w.im])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnulusSide {
    Inner,
    Outer,
}

/// Boundary correspondence for the annulus → square-with-airfoil case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusMap {
    pub r_in: f64,
    pub r_out: f64,
    pub joukowsky: JoukowskyParams,
    /// Uniform scale applied to the Joukowsky image.
    pub airfoil_scale: f64,
    pub square_half_width: f64,
}

impl Default for AnnulusMap {
    fn default() -> Self {
        AnnulusMap {
            r_in: 0.5,
            r_out: 2.0,
            joukowsky: JoukowskyParams::default(),
            airfoil_scale: 0.25,
            square_half_width: 2.0,
        }
    }
}

impl AnnulusMap {
    /// Maps a point on the requested annulus circle; `alpha` is the admissible
    /// radial distance from that circle.
    pub fn boundary_map(&self, p: [f64; 2], side: AnnulusSide, alpha: f64) -> Result<[f64; 2]> {
        let r = p[0].hypot(p[1]);
        let radius = match side {
            AnnulusSide::Inner => self.r_in,
            AnnulusSide::Outer => self.r_out,
        };
        if !((r - radius).abs() <= alpha) {
            return Err(Error::OffBoundary {
                index: 0,
                alpha,
                which: match side {
                    AnnulusSide::Inner => "inner",
                    AnnulusSide::Outer => "outer",
                },
            });
        }
        let theta = p[1].atan2(p[0]);
        match side {
            AnnulusSide::Inner => {
                let w = joukowsky([theta.cos(), theta.sin()], &self.joukowsky)?;
                Ok([self.airfoil_scale * w[0], self.airfoil_scale * w[1]])
            }
            AnnulusSide::Outer => Ok(circle_to_square(theta, self.square_half_width)),
        }
    }

    /// Side of the annulus whose circle is nearer to `p`.
    pub fn nearest_side(&self, p: [f64; 2]) -> AnnulusSide {
        let r = p[0].hypot(p[1]);
        if (r - self.r_in).abs() <= (r - self.r_out).abs() {
            AnnulusSide::Inner
        } else {
            AnnulusSide::Outer
        }
    }
}

/// Arclength-proportional correspondence from angle to the perimeter of the
/// square of half width `half`, with corners at 45° + k·90°.
pub fn circle_to_square(theta: f64, half: f64) -> [f64; 2] {
    let corners = [[half, half], [-half, half], [-half, -half], [half, -half]];
    let s = (theta - FRAC_PI_4).rem_euclid(TAU);
    let k = ((s / FRAC_PI_2).floor() as usize).min(3);
    let u = (s - k as f64 * FRAC_PI_2) / FRAC_PI_2;
    let (a, b) = (corners[k], corners[(k + 1) % 4]);
    [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
}

/// Named deformation applied to boundary samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeformationMap {
    SquareToDisk,
    AnnulusToAirfoil(AnnulusMap),
    CubeToSphere,
}

impl DeformationMap {
    pub fn name(&self) -> &'static str {
        match self {
            DeformationMap::SquareToDisk => "square_to_disk",
            DeformationMap::AnnulusToAirfoil(_) => "joukowsky",
            DeformationMap::CubeToSphere => "cube_to_sphere",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DeformationMap::CubeToSphere => 3,
            _ => 2,
        }
    }

    /// Image of a boundary point of the undeformed domain. `alpha` is the
    /// boundary thickness used to attach annulus points to a circle.
    pub fn apply(&self, p: &[f64], alpha: f64) -> Result<Vec<f64>> {
        if p.len() != self.dim() {
            return Err(Error::invalid(format!(
                "map {} expects {}D points, got {}D",
                self.name(),
                self.dim(),
                p.len()
            )));
        }
        match self {
            DeformationMap::SquareToDisk => Ok(square_to_disk(p[0], p[1])?.to_vec()),
            DeformationMap::CubeToSphere => Ok(cube_to_sphere(p[0], p[1], p[2])?.to_vec()),
            DeformationMap::AnnulusToAirfoil(m) => {
                let q = [p[0], p[1]];
                Ok(m.boundary_map(q, m.nearest_side(q), alpha)?.to_vec())
            }
        }
    }
}
