//! C⁴ Matérn kernel, dense interpolation matrices and the condition-number
//! targeted choice of the fit shape parameter.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{dist, dist2, Points};

/// Unchecked kernel profile φ(ρ) = (3 + 3ρ + ρ²)e^{−ρ} with ρ = εr.
#[inline]
pub(crate) fn phi(rho: f64) -> f64 {
    (3.0 + rho * (3.0 + rho)) * (-rho).exp()
}

/// C⁴ Matérn kernel value at shape parameter `eps` and distance `r`.
pub fn matern_c4(eps: f64, r: f64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("shape parameter must be positive, got {eps}")));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!("distance must be nonnegative, got {r}")));
    }
    Ok(phi(eps * r))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    OneNorm,
    TwoNorm,
    MaxNorm,
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_norm" => Ok(NormKind::OneNorm),
            "two_norm" => Ok(NormKind::TwoNorm),
            "max_norm" => Ok(NormKind::MaxNorm),
            other => Err(Error::invalid(format!("unknown norm kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub target_condition: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub norm_kind: NormKind,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            target_condition: 1e12,
            bracket_lo: 1e-3,
            bracket_hi: 1e2,
            norm_kind: NormKind::OneNorm,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_condition > 1.0) {
            return Err(Error::invalid("target condition number must exceed 1"));
        }
        if !(self.bracket_lo > 0.0 && self.bracket_lo < self.bracket_hi && self.bracket_hi.is_finite()) {
            return Err(Error::invalid(format!(
                "shape parameter bracket [{}, {}] is not a positive increasing interval",
                self.bracket_lo, self.bracket_hi
            )));
        }
        Ok(())
    }
}

/// Dense symmetric kernel matrix A_ij = φ(ε‖x_i − x_j‖).
#[derive(Clone, Debug)]
pub struct InterpMatrix {
    pub entries: DMatrix<f64>,
    pub shape: f64,
    /// Fingerprint of the center coordinates the matrix was assembled from.
    pub centers_ref: u64,
}

/// Order-sensitive FNV-1a hash of the coordinate bit patterns.
pub fn fingerprint(points: &Points) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in points.as_slice() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Minimum admissible distance between two centers: 1e-12 of the bounding-box diagonal.
pub fn separation_tolerance(centers: &Points) -> f64 {
    1e-12 * centers.diameter_bound()
}

/// Returns the first pair (in index order) closer than the separation tolerance.
pub fn check_distinct(centers: &Points) -> Result<()> {
    let tol = separation_tolerance(centers);
    let tol2 = tol * tol;
    let n = centers.len();
    for i in 0..n {
        let pi = centers.point(i);
        for j in i + 1..n {
            let d2 = dist2(pi, centers.point(j));
            if d2 <= tol2 {
                return Err(Error::DistinctCenters {
                    first: i,
                    second: j,
                    distance: d2.sqrt(),
                });
            }
        }
    }
    Ok(())
}

/// Assembles the interpolation matrix for `centers` at shape parameter `eps`.
pub fn assemble(centers: &Points, eps: f64) -> Result<InterpMatrix> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("shape parameter must be positive, got {eps}")));
    }
    check_distinct(centers)?;
    Ok(InterpMatrix {
        entries: assemble_unchecked(centers, eps),
        shape: eps,
        centers_ref: fingerprint(centers),
    })
}

pub(crate) fn assemble_unchecked(centers: &Points, eps: f64) -> DMatrix<f64> {
    let n = centers.len();
    let mut data = vec![0.0; n * n];
    // column-major; each column is independent
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(j, col)| {
        let pj = centers.point(j);
        for (i, v) in col.iter_mut().enumerate() {
            *v = phi(eps * dist(centers.point(i), pj));
        }
    });
    DMatrix::from_vec(n, n, data)
}

enum Factor {
    Cholesky(Cholesky<f64, nalgebra::Dyn>),
    Lu {
        lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    },
}

impl Factor {
    fn new(a: &DMatrix<f64>) -> Option<Factor> {
        if a.is_square() && is_symmetric(a) {
            if let Some(ch) = Cholesky::new(a.clone()) {
                return Some(Factor::Cholesky(ch));
            }
        }
        let lu = a.clone().lu();
        if !lu.is_invertible() {
            return None;
        }
        let lu_t = a.transpose().lu();
        Some(Factor::Lu { lu, lu_t })
    }

    fn solve(&self, b: &mut DVector<f64>) -> bool {
        match self {
            Factor::Cholesky(ch) => {
                ch.solve_mut(b);
                true
            }
            Factor::Lu { lu, .. } => lu.solve_mut(b),
        }
    }

    fn solve_transpose(&self, b: &mut DVector<f64>) -> bool {
        match self {
            Factor::Cholesky(ch) => {
                ch.solve_mut(b);
                true
            }
            Factor::Lu { lu_t, .. } => lu_t.solve_mut(b),
        }
    }
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| a[(i, j)] == a[(j, i)]))
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's estimate of ‖B‖₁ with Higham's alternating-sign safeguard, where
/// products with B and Bᵀ are supplied as in-place closures.
fn estimate_norm1(
    n: usize,
    apply: impl Fn(&mut DVector<f64>) -> bool,
    apply_t: impl Fn(&mut DVector<f64>) -> bool,
) -> Option<f64> {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let mut y = x.clone();
        if !apply(&mut y) {
            return None;
        }
        let y_norm = y.iter().map(|v| v.abs()).sum::<f64>();
        if y_norm <= est && last_j != usize::MAX {
            break;
        }
        est = y_norm;
        let mut z = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        if !apply_t(&mut z) {
            return None;
        }
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if zmax <= z.dot(&x) || j == last_j {
            break;
        }
        last_j = j;
        x.fill(0.0);
        x[j] = 1.0;
    }
    if n > 1 {
        let mut alt = DVector::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n - 1) as f64)
        });
        if !apply(&mut alt) {
            return None;
        }
        let temp = 2.0 * alt.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        est = est.max(temp);
    }
    Some(est)
}

/// Condition number of a square matrix in the requested norm. A numerically
/// singular matrix yields `f64::INFINITY`.
pub fn condition_estimate(a: &DMatrix<f64>, norm: NormKind) -> f64 {
    assert!(a.is_square(), "condition number of a non-square matrix");
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    if !a.iter().all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    match norm {
        NormKind::TwoNorm => {
            let sv = a.clone().singular_values();
            let smax = sv.max();
            let smin = sv.min();
            if smin <= 0.0 || !(smax / smin).is_finite() {
                f64::INFINITY
            } else {
                smax / smin
            }
        }
        NormKind::OneNorm | NormKind::MaxNorm => {
            let Some(f) = Factor::new(a) else {
                return f64::INFINITY;
            };
            let (anorm, inv) = if norm == NormKind::OneNorm {
                (norm1(a), estimate_norm1(n, |b| f.solve(b), |b| f.solve_transpose(b)))
            } else {
                (norm_inf(a), estimate_norm1(n, |b| f.solve_transpose(b), |b| f.solve(b)))
            };
            match inv {
                Some(v) if v.is_finite() && v > 0.0 => {
                    let k = anorm * v;
                    if k.is_finite() {
                        k.max(1.0)
                    } else {
                        f64::INFINITY
                    }
                }
                _ => f64::INFINITY,
            }
        }
    }
}

impl InterpMatrix {
    pub fn condition(&self, norm: NormKind) -> f64 {
        condition_estimate(&self.entries, norm)
    }
}

/// κ(A(ε)) for the given centers, without the distinct-centers check.
pub fn condition_at(centers: &Points, eps: f64, norm: NormKind) -> f64 {
    condition_estimate(&assemble_unchecked(centers, eps), norm)
}

// log10 of an infinite condition number is replaced by this value so the
// root finder always sees finite function values.
const LOG_KAPPA_CAP: f64 = 400.0;

fn log_kappa(k: f64) -> f64 {
    if k.is_finite() {
        k.log10()
    } else {
        LOG_KAPPA_CAP
    }
}

/// Finds ε* in the configured bracket such that κ(A(ε*)) matches the target
/// condition number, using Brent–Dekker on log₁₀κ over log₁₀ε.
pub fn find_shape_parameter(centers: &Points, cfg: &KernelConfig) -> Result<f64> {
    cfg.validate()?;
    check_distinct(centers)?;
    let target = cfg.target_condition.log10();
    let objective = |log_eps: f64| -> f64 {
        log_kappa(condition_at(centers, 10f64.powf(log_eps), cfg.norm_kind)) - target
    };
    let (a, b) = (cfg.bracket_lo.log10(), cfg.bracket_hi.log10());
    let fa = objective(a);
    if fa == 0.0 {
        return Ok(cfg.bracket_lo);
    }
    let fb = objective(b);
    if fb == 0.0 {
        return Ok(cfg.bracket_hi);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket {
            lo: cfg.bracket_lo,
            hi: cfg.bracket_hi,
            kappa_lo: 10f64.powf(fa + target),
            kappa_hi: 10f64.powf(fb + target),
            target: cfg.target_condition,
        });
    }
    let mut conv = roots::SimpleConvergency {
        eps: 1e-9,
        max_iter: 200,
    };
    let root = roots::find_root_brent(a, b, objective, &mut conv)
        .map_err(|e| Error::Numerical(format!("shape parameter search failed: {e:?}")))?;
    Ok(10f64.powf(root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Points::new(dim, (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn circle(n: usize) -> Points {
        Points::from_rows(
            2,
            (0..n).map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                [t.cos(), t.sin()]
            }),
        )
    }

    #[test]
    fn kernel_closed_forms() {
        assert_eq!(matern_c4(1.0, 0.0).unwrap(), 3.0);
        assert_relative_eq!(matern_c4(1.0, 1.0).unwrap(), 7.0 / std::f64::consts::E, max_relative = 1e-15);
        assert_eq!(matern_c4(2.0, 0.5).unwrap(), matern_c4(1.0, 1.0).unwrap());
    }

    #[test]
    fn kernel_rejects_bad_arguments() {
        assert!(matern_c4(0.0, 1.0).is_err());
        assert!(matern_c4(-1.0, 1.0).is_err());
        assert!(matern_c4(1.0, -0.1).is_err());
        assert!(matern_c4(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn kernel_is_decreasing_and_positive() {
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = matern_c4(1.3, i as f64 * 0.1).unwrap();
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn assemble_small_cases() {
        let one = Points::from_rows(2, [[0.3, 0.4]]);
        let a = assemble(&one, 1.0).unwrap();
        assert_eq!(a.entries.shape(), (1, 1));
        assert_eq!(a.entries[(0, 0)], 3.0);

        let d: f64 = 0.7;
        let two = Points::from_rows(2, [[0.0, 0.0], [d, 0.0]]);
        let a = assemble(&two, 1.0).unwrap();
        assert_relative_eq!(a.entries[(0, 1)], (3.0 + 3.0 * d + d * d) * (-d).exp(), max_relative = 1e-15);
        assert_eq!(a.entries[(0, 1)], a.entries[(1, 0)]);
    }

    #[test]
    fn assemble_matches_double_loop() {
        let pts = random_points(5, 2, 11);
        let eps = 0.8;
        let a = assemble(&pts, eps).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (p, q) = (pts.point(i), pts.point(j));
                let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                let e = eps * r;
                let expected = (3.0 + 3.0 * e + e * e) * (-e).exp();
                assert_relative_eq!(a.entries[(i, j)], expected, max_relative = 1e-14);
            }
            assert_eq!(a.entries[(i, i)], 3.0);
        }
    }

    #[test]
    fn assemble_rejects_duplicates() {
        let pts = Points::from_rows(2, [[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]);
        match assemble(&pts, 1.0) {
            Err(Error::DistinctCenters { first, second, .. }) => assert_eq!((first, second), (0, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn condition_of_simple_matrices() {
        let id = DMatrix::<f64>::identity(4, 4);
        for norm in [NormKind::OneNorm, NormKind::TwoNorm, NormKind::MaxNorm] {
            assert_relative_eq!(condition_estimate(&id, norm), 1.0, max_relative = 1e-14);
        }
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0]));
        assert_relative_eq!(condition_estimate(&d, NormKind::TwoNorm), 10.0, max_relative = 1e-14);
        assert_relative_eq!(condition_estimate(&d, NormKind::OneNorm), 10.0, max_relative = 1e-14);
        assert_relative_eq!(condition_estimate(&d, NormKind::MaxNorm), 10.0, max_relative = 1e-14);
    }

    #[test]
    fn singular_matrix_reports_infinity() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_estimate(&s, NormKind::OneNorm).is_infinite());
        assert!(condition_estimate(&s, NormKind::TwoNorm).is_infinite());
    }

    #[test]
    fn two_norm_condition_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let b = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
            let spd = &b * b.transpose() + DMatrix::identity(6, 6) * 0.1;
            let eig = SymmetricEigen::new(spd.clone()).eigenvalues;
            let oracle = eig.max() / eig.min();
            let k = condition_estimate(&spd, NormKind::TwoNorm);
            assert!((k - oracle).abs() <= 0.1 * oracle, "{k} vs {oracle}");
        }
    }

    #[test]
    fn one_norm_estimate_is_close_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [3, 6, 12, 30] {
            let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let spd = &b * b.transpose() + DMatrix::identity(n, n) * 0.05;
            let inv = spd.clone().try_inverse().unwrap();
            let exact = norm1(&spd) * norm1(&inv);
            let est = condition_estimate(&spd, NormKind::OneNorm);
            assert!(est <= exact * (1.0 + 1e-9), "{est} > {exact}");
            assert!(est >= 0.3 * exact, "{est} << {exact}");
        }
    }

    #[test]
    fn shape_parameter_planted_at_bracket_end() {
        let pts = circle(20);
        let target = condition_at(&pts, 1.0, NormKind::OneNorm);
        let cfg = KernelConfig {
            target_condition: target,
            bracket_lo: 0.01,
            bracket_hi: 1.0,
            norm_kind: NormKind::OneNorm,
        };
        let eps = find_shape_parameter(&pts, &cfg).unwrap();
        assert_relative_eq!(eps, 1.0, max_relative = 1e-6);

        let cfg = KernelConfig { bracket_hi: 10.0, ..cfg };
        let eps = find_shape_parameter(&pts, &cfg).unwrap();
        assert_relative_eq!(eps, 1.0, max_relative = 1e-3);
    }

    #[test]
    fn shape_parameter_on_circle_verified_by_eigen_oracle() {
        let pts = circle(30);
        let cfg = KernelConfig {
            target_condition: 1e10,
            norm_kind: NormKind::TwoNorm,
            ..KernelConfig::default()
        };
        let eps = find_shape_parameter(&pts, &cfg).unwrap();
        let eig = SymmetricEigen::new(assemble(&pts, eps).unwrap().entries).eigenvalues;
        let k = eig.max() / eig.min();
        assert!((k.log10() - 10.0).abs() <= 0.5, "kappa {k:e} at eps {eps}");
    }

    #[test]
    fn shape_parameter_bracket_error_reports_endpoints() {
        let pts = circle(10);
        let cfg = KernelConfig {
            target_condition: 1e12,
            bracket_lo: 5.0,
            bracket_hi: 50.0,
            norm_kind: NormKind::OneNorm,
        };
        match find_shape_parameter(&pts, &cfg) {
            Err(Error::Bracket { kappa_lo, kappa_hi, .. }) => {
                assert!(kappa_lo < 1e12 && kappa_hi < 1e12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_parameter_search_is_deterministic() {
        let pts = random_points(40, 2, 3);
        let cfg = KernelConfig::default();
        let a = find_shape_parameter(&pts, &cfg).unwrap();
        let b = find_shape_parameter(&pts, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn condition_decreases_with_shape_parameter() {
        for seed in 0..5 {
            let pts = circle(24 + seed);
            let mut prev = f64::INFINITY;
            for k in 0..10 {
                let eps = 10f64.powf(-0.5 + 0.2 * k as f64);
                let c = condition_at(&pts, eps, NormKind::TwoNorm);
                assert!(c <= prev * (1.0 + 1e-6), "kappa increased at eps {eps}");
                prev = c;
            }
        }
    }

    #[test]
    fn kernel_matrix_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for s in 0..100 {
            let n = rng.gen_range(2..30);
            let dim = 2 + (s % 2);
            let pts = random_points(n, dim, s as u64);
            let eps = rng.gen_range(0.5..5.0);
            let a = assemble(&pts, eps).unwrap();
            assert!(Cholesky::new(a.entries).is_some(), "set {s} not SPD");
        }
    }

    proptest::proptest! {
        #[test]
        fn kernel_depends_only_on_product(eps in 1e-3f64..1e2, r in 0.0f64..50.0, k in 0u32..6) {
            let a = 2f64.powi(k as i32 - 3);
            proptest::prop_assert_eq!(matern_c4(a * eps, r / a).unwrap(), matern_c4(eps, r).unwrap());
        }
    }
}
