//! Timing of the preprocessing steps against problem size, with log-log slopes.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interpolation::{DeformationInterpolant, EvalShapeVector, DEFAULT_EVAL_BLOCK};
use crate::kernel::{find_shape_parameter, KernelConfig};
use crate::points::Points;

/// Evaluation points per data site at the smallest size.
pub const EVAL_POINTS_PER_SITE: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub n_d: usize,
    pub eps_star: f64,
    /// Seconds for the ε* search.
    pub search: f64,
    /// Seconds for the fit (assembly, factorization, solves).
    pub fit: f64,
    /// Evaluation point count of the fixed-N_d evaluation timing.
    pub n_eval: usize,
    pub eval: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub reps: usize,
    pub rows: Vec<BenchRow>,
    pub search_slope: f64,
    pub fit_slope: f64,
    /// Slope of evaluation time against N with N_d held at the smallest size.
    pub eval_slope: f64,
}

/// Halton points in [−1, 1]², bases 2 and 3, skipping the origin.
pub fn halton_2d(n: usize) -> Points {
    fn radical_inverse(mut i: usize, base: usize) -> f64 {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    Points::from_rows(2, (1..=n).map(|i| [2.0 * radical_inverse(i, 2) - 1.0, 2.0 * radical_inverse(i, 3) - 1.0]))
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Shortest wall time of one timed sample; fast operations are repeated
/// within a sample until it lasts this long.
pub const MIN_SAMPLE_SECS: f64 = 0.2;

/// Minimum over `reps` samples of the per-call wall time, with the last result.
/// Each sample averages as many back-to-back calls as fit in [`MIN_SAMPLE_SECS`].
pub fn min_time<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let t = Instant::now();
    let mut out = f()?;
    let once = t.elapsed().as_secs_f64();
    let calls = ((MIN_SAMPLE_SECS / once.max(1e-9)).ceil() as usize).max(1);
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        for _ in 0..calls {
            out = f()?;
        }
        best = best.min(t.elapsed().as_secs_f64() / calls as f64);
    }
    Ok((best, out))
}

/// Times ε* search and fit for each data-site count in `sizes`, and
/// evaluation at `sizes[i] · EVAL_POINTS_PER_SITE` points with N_d fixed at
/// `sizes[0]`. Every time is the minimum over `reps` runs.
///
/// Everything runs on one thread, so the times reflect operation counts
/// rather than how well each size fills the thread pool.
pub fn benchmark_preprocessing(sizes: &[usize], reps: usize, kernel: &KernelConfig) -> Result<BenchReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    pool.install(|| bench_on_current_pool(sizes, reps, kernel))
}

fn bench_on_current_pool(sizes: &[usize], reps: usize, kernel: &KernelConfig) -> Result<BenchReport> {
    if sizes.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 sizes, got {}", sizes.len())));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] < 2 {
        return Err(Error::invalid("sizes must be strictly ascending and at least 2"));
    }
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    let targets_for = |x: &Points| Points::from_rows(2, x.iter().map(|p| [p[0] + 0.1 * p[1] * p[1], p[1] - 0.1 * p[0]]));

    let base = halton_2d(sizes[0]);
    let base_eps = find_shape_parameter(&base, kernel)?;
    let base_fit = DeformationInterpolant::fit(&base, &targets_for(&base), base_eps)?;

    let mut rows = Vec::with_capacity(sizes.len());
    for &n_d in sizes {
        let x = halton_2d(n_d);
        let y = targets_for(&x);
        let (search, eps_star) = min_time(reps, || find_shape_parameter(&x, kernel))?;
        let (fit, _) = min_time(reps, || DeformationInterpolant::fit(&x, &y, eps_star))?;

        let n_eval = n_d * EVAL_POINTS_PER_SITE;
        let pts = halton_2d(n_eval + sizes[0]).select(&(sizes[0]..n_eval + sizes[0]).collect::<Vec<_>>());
        let eps = EvalShapeVector::uniform(base_eps, n_eval)?;
        let (eval, _) = min_time(reps, || base_fit.evaluate_pointwise_blocked(&pts, &eps, DEFAULT_EVAL_BLOCK))?;
        rows.push(BenchRow {
            n_d,
            eps_star,
            search,
            fit,
            n_eval,
            eval,
        });
    }
    let nd: Vec<f64> = rows.iter().map(|r| r.n_d as f64).collect();
    let ne: Vec<f64> = rows.iter().map(|r| r.n_eval as f64).collect();
    let col = |f: fn(&BenchRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    Ok(BenchReport {
        reps,
        search_slope: loglog_slope(&nd, &col(|r| r.search)),
        fit_slope: loglog_slope(&nd, &col(|r| r.fit)),
        eval_slope: loglog_slope(&ne, &col(|r| r.eval)),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 5.0 * v.powf(2.5)).collect();
        assert_relative_eq!(loglog_slope(&x, &y), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn min_time_takes_the_minimum() {
        let mut calls = 0;
        let sleeps = [210u64, 260, 230, 300];
        let (t, last) = min_time(3, || {
            std::thread::sleep(std::time::Duration::from_millis(sleeps[calls]));
            calls += 1;
            Ok(calls)
        })
        .unwrap();
        // One calibration call, then three single-call samples.
        assert_eq!(last, 4);
        assert!((0.225..0.26).contains(&t), "{t}");
    }

    #[test]
    fn halton_points_are_distinct_and_inside() {
        let p = halton_2d(500);
        assert!(p.iter().all(|q| q.iter().all(|c| c.abs() < 1.0)));
        crate::kernel::check_distinct(&p).unwrap();
    }

    #[test]
    fn rejects_bad_size_lists() {
        let k = KernelConfig::default();
        assert!(benchmark_preprocessing(&[10, 20, 40], 1, &k).is_err());
        assert!(benchmark_preprocessing(&[10, 20, 20, 40], 1, &k).is_err());
        assert!(benchmark_preprocessing(&[10, 20, 30, 40], 0, &k).is_err());
    }

    #[test]
    fn small_benchmark_reports_every_size() {
        let r = benchmark_preprocessing(&[20, 30, 40, 50], 1, &KernelConfig::default()).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows.iter().all(|row| row.fit > 0.0 && row.eval > 0.0 && row.eps_star > 0.0));
        assert!(r.fit_slope.is_finite() && r.eval_slope.is_finite());
    }
}
