//! Vector-valued RBF interpolant of a boundary deformation.
//!
//! Coefficients are fitted once at ε*; evaluation may then use ε* everywhere or
//! a per-point shape parameter, which is how smoothing is applied.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, phi};
use crate::points::{dist, Points};

/// Default number of evaluation rows processed per parallel task.
pub const DEFAULT_EVAL_BLOCK: usize = 256;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeformationInterpolant {
    centers: Points,
    /// Row-major N_d × components coefficients.
    coefficients: Vec<f64>,
    components: usize,
    eps_fit: f64,
}

/// Per-evaluation-point shape parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalShapeVector(Vec<f64>);

impl EvalShapeVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("shape parameter {j} must be positive, got {v}")));
        }
        Ok(EvalShapeVector(values))
    }

    pub fn uniform(eps: f64, len: usize) -> Result<Self> {
        EvalShapeVector::new(vec![eps; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl DeformationInterpolant {
    /// Fits one scalar interpolant per target component at shape parameter `eps_star`.
    pub fn fit(data_sites: &Points, targets: &Points, eps_star: f64) -> Result<Self> {
        if data_sites.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} data sites but {} targets",
                data_sites.len(),
                targets.len()
            )));
        }
        if data_sites.is_empty() {
            return Err(Error::invalid("cannot fit an interpolant without data sites"));
        }
        if !data_sites.all_finite() || !targets.all_finite() {
            return Err(Error::invalid("non-finite data site or target"));
        }
        let a = kernel::assemble(data_sites, eps_star)?.entries;
        let n = data_sites.len();
        let chol = match Cholesky::new(a.clone()) {
            Some(c) => c,
            None => {
                let (first, second, distance) = closest_pair(data_sites);
                return Err(Error::DistinctCenters {
                    first,
                    second,
                    distance,
                });
            }
        };
        let components = targets.dim();
        let mut coefficients = vec![0.0; n * components];
        for c in 0..components {
            let b = DVector::from_iterator(n, targets.iter().map(|t| t[c]));
            let mut x = chol.solve(&b);
            // one step of iterative refinement
            let r = &b - &a * &x;
            x += chol.solve(&r);
            for i in 0..n {
                coefficients[i * components + c] = x[i];
            }
        }
        Ok(DeformationInterpolant {
            centers: data_sites.clone(),
            coefficients,
            components,
            eps_fit: eps_star,
        })
    }

    pub fn centers(&self) -> &Points {
        &self.centers
    }

    pub fn eps_fit(&self) -> f64 {
        self.eps_fit
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Coefficient column for one output component.
    pub fn coefficients(&self, component: usize) -> Vec<f64> {
        self.coefficients
            .chunks_exact(self.components)
            .map(|row| row[component])
            .collect()
    }

    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.centers.len(), self.components, &self.coefficients)
    }

    /// Evaluates with ε = ε* at every point.
    pub fn evaluate_uniform(&self, points: &Points) -> Result<Points> {
        let eps = EvalShapeVector(vec![self.eps_fit; points.len()]);
        self.evaluate_pointwise(points, &eps)
    }

    pub fn evaluate_pointwise(&self, points: &Points, eps: &EvalShapeVector) -> Result<Points> {
        self.evaluate_pointwise_blocked(points, eps, DEFAULT_EVAL_BLOCK)
    }

    /// Row j is Σ_i λ_i φ(ε_j ‖p_j − x_i‖) with the ε*-fitted coefficients.
    /// Rows are processed in independent blocks of `block` points.
    pub fn evaluate_pointwise_blocked(
        &self,
        points: &Points,
        eps: &EvalShapeVector,
        block: usize,
    ) -> Result<Points> {
        if points.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "evaluation points have dimension {}, interpolant has {}",
                points.dim(),
                self.dim()
            )));
        }
        if eps.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} shape parameters for {} evaluation points",
                eps.len(),
                points.len()
            )));
        }
        if !points.all_finite() {
            return Err(Error::invalid("non-finite evaluation point"));
        }
        let comps = self.components;
        let mut out = vec![0.0; points.len() * comps];
        let block = block.max(1);
        out.par_chunks_mut(block * comps)
            .enumerate()
            .for_each(|(b, chunk)| {
                for (local, row) in chunk.chunks_exact_mut(comps).enumerate() {
                    let j = b * block + local;
                    self.evaluate_row(points.point(j), eps.0[j], row);
                }
            });
        Ok(Points::new(comps, out))
    }

    #[inline]
    fn evaluate_row(&self, p: &[f64], eps: f64, out: &mut [f64]) {
        out.fill(0.0);
        for (x, lambda) in self
            .centers
            .iter()
            .zip(self.coefficients.chunks_exact(self.components))
        {
            let w = phi(eps * dist(p, x));
            for (o, l) in out.iter_mut().zip(lambda) {
                *o += l * w;
            }
        }
    }

    /// Largest componentwise deviation from `targets` at the centers.
    pub fn max_residual(&self, targets: &Points) -> Result<f64> {
        let y = self.evaluate_uniform(&self.centers)?;
        Ok(y.as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn closest_pair(points: &Points) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = dist(points.point(i), points.point(j));
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::maps::square_to_disk;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle(n: usize, r: f64) -> Points {
        Points::from_rows(
            2,
            (0..n).map(|i| {
                let t = std::f64::consts::TAU * (i as f64 + 0.25) / n as f64;
                [r * t.cos(), r * t.sin()]
            }),
        )
    }

    fn brute_eval(centers: &Points, lambda: &DMatrix<f64>, p: &[f64], eps: f64) -> Vec<f64> {
        let mut out = vec![0.0; lambda.ncols()];
        for i in 0..centers.len() {
            let c = centers.point(i);
            let r = c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let e = eps * r;
            let w = (3.0 + 3.0 * e + e * e) * (-e).exp();
            for k in 0..out.len() {
                out[k] += lambda[(i, k)] * w;
            }
        }
        out
    }

    #[test]
    fn single_site_coefficient() {
        let x = Points::from_rows(2, [[0.5, 0.5]]);
        let t = Points::from_rows(2, [[3.0, -6.0]]);
        let f = DeformationInterpolant::fit(&x, &t, 1.0).unwrap();
        assert_relative_eq!(f.coefficients(0)[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(f.coefficients(1)[0], -2.0, max_relative = 1e-15);
    }

    #[test]
    fn constant_targets_are_reproduced() {
        let x = circle(25, 1.0);
        let t = Points::from_rows(2, (0..25).map(|_| [0.7, -1.3]));
        let f = DeformationInterpolant::fit(&x, &t, 2.0).unwrap();
        let y = f.evaluate_uniform(&x).unwrap();
        for p in y.iter() {
            assert!((p[0] - 0.7).abs() < 1e-8 && (p[1] + 1.3).abs() < 1e-8);
        }
    }

    #[test]
    fn fit_matches_independent_lu_solve() {
        let x = circle(40, 1.0);
        let t = Points::from_rows(
            2,
            x.iter().map(|p| {
                let q = square_to_disk(p[0] / 1.5, p[1] / 1.5).unwrap();
                [q[0], q[1]]
            }),
        );
        let eps = 1.5;
        let f = DeformationInterpolant::fit(&x, &t, eps).unwrap();
        // oracle: LU on a separately built matrix
        let n = x.len();
        let a = DMatrix::from_fn(n, n, |i, j| {
            let r = dist(x.point(i), x.point(j));
            (3.0 + 3.0 * eps * r + eps * eps * r * r) * (-eps * r).exp()
        });
        let lu = a.clone().lu();
        for c in 0..2 {
            let b = DVector::from_iterator(n, t.iter().map(|p| p[c]));
            let lam = lu.solve(&b).unwrap();
            let mine = DVector::from_vec(f.coefficients(c));
            let res = (&a * &mine - &b).amax();
            assert!(res <= 1e-8, "residual {res}");
            assert!((&a * &lam - &b).amax() <= 1e-8);
        }
        assert!(f.max_residual(&t).unwrap() <= 1e-8);
    }

    #[test]
    fn uniform_evaluation_matches_brute_force() {
        let x = circle(30, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Points::new(2, (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let f = DeformationInterpolant::fit(&x, &t, 3.0).unwrap();
        let pts = Points::new(2, (0..200).map(|_| rng.gen_range(-0.9..0.9)).collect());
        let y = f.evaluate_uniform(&pts).unwrap();
        let lam = f.coefficient_matrix();
        for j in 0..pts.len() {
            let b = brute_eval(&x, &lam, pts.point(j), 3.0);
            for k in 0..2 {
                assert!((y.point(j)[k] - b[k]).abs() <= 1e-12 * (1.0 + b[k].abs()));
            }
        }
    }

    #[test]
    fn empty_evaluation() {
        let x = circle(5, 1.0);
        let f = DeformationInterpolant::fit(&x, &x, 1.0).unwrap();
        let y = f.evaluate_uniform(&Points::empty(2)).unwrap();
        assert!(y.is_empty());
    }

    #[test]
    fn pointwise_with_fit_parameter_is_bitwise_uniform() {
        let x = circle(20, 1.0);
        let f = DeformationInterpolant::fit(&x, &x, 1.7).unwrap();
        let pts = circle(33, 0.5);
        let u = f.evaluate_uniform(&pts).unwrap();
        let p = f
            .evaluate_pointwise(&pts, &EvalShapeVector::uniform(1.7, 33).unwrap())
            .unwrap();
        assert_eq!(u, p);
    }

    #[test]
    fn pointwise_two_center_hand_sum() {
        let x = Points::from_rows(2, [[0.0, 0.0], [1.0, 0.0]]);
        let t = Points::from_rows(2, [[0.0, 1.0], [2.0, 0.0]]);
        let eps_star = 2.0;
        let f = DeformationInterpolant::fit(&x, &t, eps_star).unwrap();
        let p = Points::from_rows(2, [[0.25, 0.5]]);
        let e = eps_star / 2.0;
        let y = f.evaluate_pointwise(&p, &EvalShapeVector::new(vec![e]).unwrap()).unwrap();
        let r0 = (0.25f64 * 0.25 + 0.25).sqrt();
        let r1 = (0.75f64 * 0.75 + 0.25).sqrt();
        let phi = |r: f64| (3.0 + 3.0 * e * r + e * e * r * r) * (-e * r).exp();
        for c in 0..2 {
            let l = f.coefficients(c);
            assert_relative_eq!(y.point(0)[c], l[0] * phi(r0) + l[1] * phi(r1), max_relative = 1e-14);
        }
    }

    #[test]
    fn changing_one_shape_parameter_moves_one_row() {
        let x = circle(20, 1.0);
        let t = Points::from_rows(2, x.iter().map(|p| [p[0] * 1.2, p[1] * 0.8]));
        let f = DeformationInterpolant::fit(&x, &t, 2.0).unwrap();
        let pts = circle(15, 0.5);
        let mut eps = vec![2.0; 15];
        let base = f.evaluate_pointwise(&pts, &EvalShapeVector::new(eps.clone()).unwrap()).unwrap();
        eps[7] = 1.9;
        let moved = f.evaluate_pointwise(&pts, &EvalShapeVector::new(eps.clone()).unwrap()).unwrap();
        let lam = f.coefficient_matrix();
        for j in 0..15 {
            if j == 7 {
                assert_ne!(base.point(j), moved.point(j));
                let b = brute_eval(&x, &lam, pts.point(j), 1.9);
                assert!((moved.point(j)[0] - b[0]).abs() < 1e-12);
            } else {
                assert_eq!(base.point(j), moved.point(j));
            }
        }
    }

    #[test]
    fn block_size_does_not_change_results() {
        let x = circle(20, 1.0);
        let f = DeformationInterpolant::fit(&x, &x, 2.0).unwrap();
        let pts = circle(101, 0.7);
        let eps = EvalShapeVector::uniform(1.5, 101).unwrap();
        let a = f.evaluate_pointwise_blocked(&pts, &eps, 1).unwrap();
        let b = f.evaluate_pointwise_blocked(&pts, &eps, 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argument_errors() {
        let x = circle(5, 1.0);
        let f = DeformationInterpolant::fit(&x, &x, 1.0).unwrap();
        assert!(EvalShapeVector::new(vec![1.0, 0.0]).is_err());
        assert!(f.evaluate_pointwise(&x, &EvalShapeVector::uniform(1.0, 4).unwrap()).is_err());
        let bad = Points::from_rows(2, [[f64::NAN, 0.0]]);
        assert!(f.evaluate_uniform(&bad).is_err());
        let dup = Points::from_rows(2, [[0.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            DeformationInterpolant::fit(&dup, &dup, 1.0),
            Err(Error::DistinctCenters { .. })
        ));
    }

    #[test]
    fn reducing_shape_parameter_smooths_oscillation() {
        // collinear centers with alternating targets
        let n = 21;
        let x = Points::from_rows(2, (0..n).map(|i| [i as f64 / (n - 1) as f64, 0.0]));
        let t = Points::from_rows(1, (0..n).map(|i| [if i % 2 == 0 { 1.0 } else { -1.0 }]));
        let eps_star = 20.0;
        let f = DeformationInterpolant::fit(&x, &t, eps_star).unwrap();
        let grid = Points::from_rows(2, (0..400).map(|i| [i as f64 / 399.0, 0.0]));
        let tv = |eps: f64| {
            let y = f.evaluate_pointwise(&grid, &EvalShapeVector::uniform(eps, 400).unwrap()).unwrap();
            y.as_slice().windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
        };
        assert!(tv(0.9 * eps_star) < tv(eps_star));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn translation_equivariance(cx in -5.0f64..5.0, cy in -5.0f64..5.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = circle(16, 1.0);
            let t = Points::new(2, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let shifted = Points::from_rows(2, t.iter().map(|p| [p[0] + cx, p[1] + cy]));
            // off-center outputs differ by the interpolant of the constant, so compare at the centers
            let ac = DeformationInterpolant::fit(&x, &t, 3.0).unwrap().evaluate_uniform(&x).unwrap();
            let bc = DeformationInterpolant::fit(&x, &shifted, 3.0).unwrap().evaluate_uniform(&x).unwrap();
            for (p, q) in ac.iter().zip(bc.iter()) {
                proptest::prop_assert!((p[0] + cx - q[0]).abs() <= 1e-9);
                proptest::prop_assert!((p[1] + cy - q[1]).abs() <= 1e-9);
            }
        }

        #[test]
        fn permuting_rows_permutes_output(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = circle(12, 1.0);
            let f = DeformationInterpolant::fit(&x, &x, 2.0).unwrap();
            let pts = Points::new(2, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let eps: Vec<f64> = (0..10).map(|_| rng.gen_range(0.5..2.0)).collect();
            let y = f.evaluate_pointwise(&pts, &EvalShapeVector::new(eps.clone()).unwrap()).unwrap();
            let perm: Vec<usize> = (0..10).rev().collect();
            let pts_p = pts.select(&perm);
            let eps_p: Vec<f64> = perm.iter().map(|&i| eps[i]).collect();
            let y_p = f.evaluate_pointwise(&pts_p, &EvalShapeVector::new(eps_p).unwrap()).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                proptest::prop_assert_eq!(y_p.point(k), y.point(i));
            }
        }
    }
}
