//! Iterative mesh smoothing by per-vertex reduction of the evaluation shape
//! parameter, plus a Laplace smoother used as a baseline.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DeformationMap, DomainSpec, NodeSet};
use crate::interpolation::{DeformationInterpolant, EvalShapeVector, DEFAULT_EVAL_BLOCK};
use crate::kernel::{condition_at, find_shape_parameter, KernelConfig};
use crate::mesh::{orientation_check, tessellate, QualityReport, SimplicialMesh, Stencils};
use crate::points::{dist2, Points};

/// Lower bound on every ε entry, relative to ε*.
pub const EPS_FLOOR_FACTOR: f64 = 1e-3;

/// Which deformed points μ measures distance to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuBoundary {
    /// Images of the data sites.
    #[default]
    DataSites,
    /// Exact images of every boundary node.
    AllBoundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub delta: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Upper bound on the number of recorded quality values.
    pub max_iterations: usize,
    /// When set, only vertices with q_y below this value drive updates.
    pub quality_gate: Option<f64>,
    pub mu_boundary: MuBoundary,
    /// Place non-data boundary nodes with the exact map instead of the interpolant.
    pub snap_boundary: bool,
    pub eval_block: usize,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams {
            delta: 9.9422e-7,
            sigma: 0.1006,
            alpha: 1e-3,
            max_iterations: 50,
            quality_gate: None,
            mu_boundary: MuBoundary::DataSites,
            snap_boundary: false,
            eval_block: DEFAULT_EVAL_BLOCK,
        }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if self.eval_block == 0 {
            return Err(Error::invalid("eval_block must be at least 1"));
        }
        Ok(())
    }
}

/// μ: distance from `y` to the nearest deformed boundary point, or 0 within α.
pub fn boundary_proximity(y: &[f64], deformed_boundary: &Points, alpha: f64) -> Result<f64> {
    if deformed_boundary.is_empty() {
        return Err(Error::NoBoundary);
    }
    let d = deformed_boundary
        .iter()
        .map(|b| dist2(y, b))
        .fold(f64::INFINITY, f64::min)
        .sqrt();
    Ok(if d <= alpha { 0.0 } else { d })
}

/// μ for every row of `nodes`.
pub fn proximity_all(nodes: &Points, deformed_boundary: &Points, alpha: f64) -> Result<Vec<f64>> {
    if deformed_boundary.is_empty() {
        return Err(Error::NoBoundary);
    }
    (0..nodes.len())
        .into_par_iter()
        .map(|k| boundary_proximity(nodes.point(k), deformed_boundary, alpha))
        .collect()
}

/// Ψ_k: |q_k − q_j| for each neighbour j of the stencil `[k, neighbours…]`.
pub fn quality_gap(q_y: &[f64], stencil: &[usize]) -> Vec<f64> {
    let qk = q_y[stencil[0]];
    stencil[1..].iter().map(|&j| (qk - q_y[j]).abs()).collect()
}

/// γ = exp(−σΨ), entrywise.
pub fn falloff(psi: &[f64], sigma: f64) -> Vec<f64> {
    psi.iter().map(|p| (-sigma * p).exp()).collect()
}

/// One sweep of ε_j ← ε_j − θ_k γ_kj over all stencils.
///
/// Decrements are accumulated in ascending k against the incoming `eps`, and
/// the result is floored at [`EPS_FLOOR_FACTOR`]·ε*. Vertex k belongs to its
/// own stencil with γ = 1.
pub fn update_shape_parameters(
    eps: &[f64],
    eps_star: f64,
    q_y: &[f64],
    stencils: &Stencils,
    mu: &[f64],
    params: &SmoothingParams,
) -> Vec<f64> {
    let n = eps.len();
    assert_eq!(q_y.len(), n, "q_y length");
    assert_eq!(mu.len(), n, "mu length");
    assert_eq!(stencils.len(), n, "stencil count");
    let mut dec = vec![0.0; n];
    for k in 0..n {
        let theta = params.delta * mu[k];
        if theta == 0.0 {
            continue;
        }
        if let Some(gate) = params.quality_gate {
            if q_y[k] >= gate {
                continue;
            }
        }
        let stencil = stencils.stencil(k);
        dec[k] += theta;
        let gamma = falloff(&quality_gap(q_y, stencil), params.sigma);
        for (&j, g) in stencil[1..].iter().zip(gamma) {
            dec[j] += theta * g;
        }
    }
    let floor = EPS_FLOOR_FACTOR * eps_star;
    eps.iter()
        .zip(&dec)
        .map(|(&e, &d)| if d == 0.0 { e } else { (e - d).max(floor) })
        .collect()
}

/// Wall-clock samples keyed by step label.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings(pub BTreeMap<String, Vec<f64>>);

impl Timings {
    fn time<T>(&mut self, key: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0
            .entry(key.to_string())
            .or_default()
            .push(start.elapsed().as_secs_f64());
        out
    }

    /// Mean seconds per sample for each key.
    pub fn means(&self) -> BTreeMap<String, f64> {
        self.0
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().sum::<f64>() / v.len().max(1) as f64))
            .collect()
    }
}

/// Fixed inputs of the smoothing loop.
#[derive(Clone, Debug)]
pub struct SmoothingContext {
    /// Undeformed node coordinates X.
    pub undeformed: Points,
    pub interpolant: DeformationInterpolant,
    /// Points μ is measured against.
    pub mu_targets: Points,
    /// Inner boundary ring (node indices in order) whose interior is a hole.
    pub hole: Option<Vec<usize>>,
    /// Nodes placed at fixed positions instead of by the interpolant.
    pub pinned: Vec<(usize, Vec<f64>)>,
}

impl SmoothingContext {
    /// Y = interpolant evaluated at X with per-node ε, pinned nodes overridden.
    pub fn place(&self, eps: &[f64], block: usize) -> Result<Points> {
        let eps = EvalShapeVector::new(eps.to_vec())?;
        let mut y = self
            .interpolant
            .evaluate_pointwise_blocked(&self.undeformed, &eps, block)?;
        for (i, p) in &self.pinned {
            y.point_mut(*i).copy_from_slice(p);
        }
        Ok(y)
    }

    pub fn tessellate(&self, y: &Points) -> Result<SimplicialMesh> {
        tessellate_with_hole(y, self.hole.as_deref())
    }
}

/// Delaunay tessellation with the elements enclosed by `hole` removed.
pub fn tessellate_with_hole(y: &Points, hole: Option<&[usize]>) -> Result<SimplicialMesh> {
    let mut mesh = tessellate(y)?;
    if let Some(ring) = hole {
        mesh.remove_enclosed(ring);
    }
    Ok(mesh)
}

#[derive(Clone, Debug)]
pub struct SmoothingState {
    pub eps: Vec<f64>,
    pub eps_star: f64,
    /// ‖q_e‖₂ of each assessed mesh.
    pub history: Vec<f64>,
    pub iteration: usize,
    pub current_nodes: Points,
    pub current_mesh: SimplicialMesh,
    pub stencils: Stencils,
}

impl SmoothingState {
    /// Starting state: ε ≡ ε*, nodes placed and tessellated.
    pub fn initialize(ctx: &SmoothingContext, params: &SmoothingParams) -> Result<Self> {
        let mut t = Timings::default();
        Self::initialize_timed(ctx, params, &mut t)
    }

    fn initialize_timed(ctx: &SmoothingContext, params: &SmoothingParams, t: &mut Timings) -> Result<Self> {
        let eps_star = ctx.interpolant.eps_fit();
        let eps = vec![eps_star; ctx.undeformed.len()];
        let nodes = t.time("14", || ctx.place(&eps, params.eval_block))?;
        let mesh = t.time("15", || ctx.tessellate(&nodes))?;
        let stencils = t.time("16", || Stencils::build(&mesh));
        Ok(SmoothingState {
            eps,
            eps_star,
            history: Vec::new(),
            iteration: 0,
            current_nodes: nodes,
            current_mesh: mesh,
            stencils,
        })
    }

    /// Quality of the current mesh, appended to the history.
    fn assess(&mut self, t: &mut Timings) -> QualityReport {
        let q_e = t.time("18", || QualityReport::element_qualities(&self.current_mesh));
        let norm = t.time("19", || q_e.iter().map(|q| q * q).sum::<f64>().sqrt());
        self.history.push(norm);
        self.iteration = self.history.len();
        let q_y = t.time("21", || {
            crate::mesh::per_vertex_quality(&self.current_mesh, &q_e, &self.stencils)
        });
        QualityReport::from_fields(&self.current_mesh, q_e, q_y)
    }

    /// Shape-parameter update, re-evaluation, re-tessellation and new stencils.
    fn advance(
        &mut self,
        report: &QualityReport,
        ctx: &SmoothingContext,
        params: &SmoothingParams,
        t: &mut Timings,
    ) -> Result<()> {
        self.eps = t.time("23-30", || -> Result<Vec<f64>> {
            let mu = proximity_all(&self.current_nodes, &ctx.mu_targets, params.alpha)?;
            Ok(update_shape_parameters(
                &self.eps,
                self.eps_star,
                &report.q_y,
                &self.stencils,
                &mu,
                params,
            ))
        })?;
        self.current_nodes = t.time("32", || ctx.place(&self.eps, params.eval_block))?;
        self.current_mesh = t.time("33", || ctx.tessellate(&self.current_nodes))?;
        self.stencils = t.time("34", || Stencils::build(&self.current_mesh));
        Ok(())
    }

    /// Whether the newest history value fell below the maximum of the earlier ones.
    pub fn quality_dropped(&self) -> bool {
        match self.history.split_last() {
            Some((&last, prior)) if !prior.is_empty() => last < prior.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            _ => false,
        }
    }
}

/// One full iteration: assess the current mesh, record it, then update ε,
/// move the nodes and rebuild mesh and stencils.
pub fn smoothing_step(
    state: &mut SmoothingState,
    ctx: &SmoothingContext,
    params: &SmoothingParams,
) -> Result<QualityReport> {
    let mut t = Timings::default();
    let report = state.assess(&mut t);
    state.advance(&report, ctx, params, &mut t)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// The newest ‖q_e‖₂ fell below the maximum of the earlier history.
    QualityDropped,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub norm2_qe: f64,
    pub min_qe: f64,
    pub mean_qe: f64,
    pub inverted_count: usize,
    pub norm2_qy: f64,
    pub min_qy: f64,
    /// Inversions of the undeformed connectivity carried to the current nodes.
    pub tangled_count: usize,
}

/// Everything produced by [`run`].
#[derive(Clone, Debug)]
pub struct SmoothingRun {
    pub eps_star: f64,
    /// Condition number of A(ε*) in the configured norm.
    pub kappa_star: f64,
    /// Largest data-site residual of the fitted interpolant.
    pub fit_residual: f64,
    pub context: SmoothingContext,
    pub undeformed_mesh: SimplicialMesh,
    /// Mesh assessed at each history entry; entry 0 is the unsmoothed deformation.
    pub meshes: Vec<SimplicialMesh>,
    pub reports: Vec<QualityReport>,
    pub records: Vec<IterationRecord>,
    pub history: Vec<f64>,
    pub final_eps: Vec<f64>,
    pub termination: TerminationReason,
    /// History index at which the loop stopped.
    pub termination_iteration: usize,
    /// First index of the history maximum; the returned mesh.
    pub best: usize,
    pub timings: Timings,
}

impl SmoothingRun {
    pub fn best_mesh(&self) -> &SimplicialMesh {
        &self.meshes[self.best]
    }

    /// Number of ε updates applied before the loop stopped.
    pub fn smoothing_iterations(&self) -> usize {
        self.history.len() - 1
    }
}

/// Exact map images of the nodes in `indices`.
pub fn map_nodes(map: &DeformationMap, points: &Points, indices: &[usize], alpha: f64) -> Result<Points> {
    let mut out = Points::empty(map.dim());
    for &i in indices {
        let y = map.apply(points.point(i), alpha).map_err(|e| match e {
            Error::OffBoundary { alpha, which, .. } => Error::OffBoundary { index: i, alpha, which },
            other => other,
        })?;
        out.push(&y);
    }
    Ok(out)
}

/// Builds the fitted context: ε* search, fit, μ targets, pinned nodes, hole.
pub fn prepare(
    nodes: &NodeSet,
    domain: &DomainSpec,
    map: &DeformationMap,
    params: &SmoothingParams,
    kernel: &KernelConfig,
    t: &mut Timings,
) -> Result<(SmoothingContext, f64)> {
    params.validate()?;
    if map.dim() != domain.dim() || nodes.dim() != domain.dim() {
        return Err(Error::invalid(format!(
            "map {} ({}D) does not fit domain {} ({}D) with {}D nodes",
            map.name(),
            map.dim(),
            domain.name(),
            domain.dim(),
            nodes.dim()
        )));
    }
    let x = nodes.points();
    let sites = nodes.data_site_indices();
    if sites.is_empty() {
        return Err(Error::NoBoundary);
    }
    let xd = x.select(&sites);
    let yd = map_nodes(map, x, &sites, params.alpha)?;
    let eps_star = t.time("10", || find_shape_parameter(&xd, kernel))?;
    let interpolant = t.time("12-13", || DeformationInterpolant::fit(&xd, &yd, eps_star))?;
    let kappa = condition_at(&xd, eps_star, kernel.norm_kind);

    let boundary = nodes.boundary_indices();
    let mu_targets = match params.mu_boundary {
        MuBoundary::DataSites => yd,
        MuBoundary::AllBoundary => map_nodes(map, x, &boundary, params.alpha)?,
    };
    let pinned = if params.snap_boundary {
        let rest: Vec<usize> = boundary
            .iter()
            .copied()
            .filter(|&i| nodes.role(i) != crate::geometry::NodeRole::DataSite)
            .collect();
        let images = map_nodes(map, x, &rest, params.alpha)?;
        rest.into_iter().zip(images.iter().map(|p| p.to_vec())).collect()
    } else {
        Vec::new()
    };
    Ok((
        SmoothingContext {
            undeformed: x.clone(),
            interpolant,
            mu_targets,
            hole: domain.hole_ring(nodes),
            pinned,
        },
        kappa,
    ))
}

/// Full pipeline: preprocessing, then smoothing steps until the quality norm
/// drops below its earlier maximum or `max_iterations` values are recorded.
pub fn run(
    nodes: &NodeSet,
    domain: &DomainSpec,
    map: &DeformationMap,
    params: &SmoothingParams,
    kernel: &KernelConfig,
) -> Result<SmoothingRun> {
    let mut t = Timings::default();
    let (ctx, kappa_star) = prepare(nodes, domain, map, params, kernel, &mut t)?;
    let fit_residual = ctx
        .interpolant
        .max_residual(&map_nodes(map, nodes.points(), &nodes.data_site_indices(), params.alpha)?)?;
    let undeformed_mesh = tessellate_with_hole(&ctx.undeformed, ctx.hole.as_deref())?;
    let mut state = SmoothingState::initialize_timed(&ctx, params, &mut t)?;

    let mut meshes = Vec::new();
    let mut reports = Vec::new();
    let mut records = Vec::new();
    let termination;
    loop {
        let report = state.assess(&mut t);
        let tangled = undeformed_mesh
            .with_vertices(state.current_nodes.clone())
            .map(|m| orientation_check(&m))?;
        records.push(IterationRecord {
            iteration: state.history.len() - 1,
            norm2_qe: report.norm2_qe,
            min_qe: report.min_qe,
            mean_qe: report.mean_qe,
            inverted_count: report.inverted_count,
            norm2_qy: report.norm2_qy,
            min_qy: report.min_qy,
            tangled_count: tangled,
        });
        meshes.push(state.current_mesh.clone());
        let stop = t.time("20", || state.quality_dropped());
        if stop {
            termination = TerminationReason::QualityDropped;
            reports.push(report);
            break;
        }
        if state.history.len() >= params.max_iterations {
            termination = TerminationReason::MaxIterations;
            reports.push(report);
            break;
        }
        state.advance(&report, &ctx, params, &mut t)?;
        reports.push(report);
    }
    let history = state.history.clone();
    let best = argmax_first(&history);
    Ok(SmoothingRun {
        eps_star: state.eps_star,
        kappa_star,
        fit_residual,
        context: ctx,
        undeformed_mesh,
        meshes,
        reports,
        records,
        termination_iteration: history.len() - 1,
        history,
        final_eps: state.eps,
        termination,
        best,
        timings: t,
    })
}

/// Index of the first maximum.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Jacobi Laplace smoothing: each free vertex moves to the mean of its 1-ring,
/// all from the previous positions. The connectivity of `mesh` is used
/// throughout and the result is re-tessellated (with `hole` removed) at the end.
pub fn laplace_smooth(
    mesh: &SimplicialMesh,
    fixed: &[bool],
    iterations: usize,
    hole: Option<&[usize]>,
) -> Result<SimplicialMesh> {
    let moved = laplace_positions(mesh, fixed, iterations)?;
    tessellate_with_hole(&moved, hole)
}

/// Vertex positions after `iterations` Jacobi Laplace sweeps.
pub fn laplace_positions(mesh: &SimplicialMesh, fixed: &[bool], iterations: usize) -> Result<Points> {
    if fixed.len() != mesh.num_vertices() {
        return Err(Error::invalid(format!(
            "{} fixed flags for {} vertices",
            fixed.len(),
            mesh.num_vertices()
        )));
    }
    let ring = mesh.one_ring();
    let dim = mesh.dim();
    let mut cur = mesh.vertices().clone();
    for _ in 0..iterations {
        let mut next = cur.clone();
        for (k, nbrs) in ring.iter().enumerate() {
            if fixed[k] || nbrs.is_empty() {
                continue;
            }
            let p = next.point_mut(k);
            p.fill(0.0);
            for &j in nbrs {
                for d in 0..dim {
                    p[d] += cur.point(j)[d];
                }
            }
            p.iter_mut().for_each(|c| *c /= nbrs.len() as f64);
        }
        cur = next;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify_boundary, generate_nodes, select_data_sites};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid3() -> SimplicialMesh {
        let mut pts = Points::empty(2);
        for r in 0..3 {
            for c in 0..3 {
                pts.push(&[c as f64, r as f64]);
            }
        }
        let mut el = Vec::new();
        for r in 0..2 {
            for c in 0..2 {
                let a = 3 * r + c;
                el.extend_from_slice(&[a, a + 1, a + 4, a, a + 4, a + 3]);
            }
        }
        SimplicialMesh::new(pts, el).unwrap()
    }

    fn params(delta: f64, sigma: f64) -> SmoothingParams {
        SmoothingParams {
            delta,
            sigma,
            ..Default::default()
        }
    }

    fn small_square(delta: f64) -> (NodeSet, DomainSpec, DeformationMap, SmoothingParams) {
        let domain = DomainSpec::UnitSquare;
        let p = SmoothingParams {
            delta,
            sigma: 0.1006,
            alpha: 1e-3,
            max_iterations: 12,
            ..Default::default()
        };
        let nodes = generate_nodes(&domain, 0.2, 3).unwrap();
        let nodes = classify_boundary(&nodes, &domain, p.alpha).unwrap();
        let nodes = select_data_sites(&nodes, 0.86, 3).unwrap();
        (nodes, domain, DeformationMap::SquareToDisk, p)
    }

    #[test]
    fn proximity_examples() {
        let b = Points::from_rows(2, [[0.5, 0.0], [3.0, 3.0]]);
        assert_eq!(boundary_proximity(&[0.5, 0.0], &b, 1e-3).unwrap(), 0.0);
        assert_eq!(boundary_proximity(&[0.0, 0.0], &b, 0.5).unwrap(), 0.0);
        assert_eq!(boundary_proximity(&[0.0, 0.0], &b, 1e-3).unwrap(), 0.5);
        assert!(matches!(
            boundary_proximity(&[0.0, 0.0], &Points::empty(2), 1e-3),
            Err(Error::NoBoundary)
        ));
    }

    #[test]
    fn gap_and_falloff_examples() {
        let q = [0.9, 0.9, 0.5];
        let psi = quality_gap(&q, &[0, 1, 2]);
        assert_relative_eq!(psi[0], 0.0);
        assert_relative_eq!(psi[1], 0.4, epsilon = 1e-15);
        assert!(quality_gap(&[0.7; 4], &[2, 0, 1, 3]).iter().all(|&v| v == 0.0));

        let g = falloff(&[0.0, std::f64::consts::LN_2 / 3.0, 1.0, 2.0], 3.0);
        assert_eq!(g[0], 1.0);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-15);
        assert!(g[2] > g[3] && g[3] > 0.0);
    }

    #[test]
    fn gap_matches_direct_recomputation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        let pts = Points::from_rows(2, (0..20).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]));
        let mesh = tessellate(&pts).unwrap();
        let st = Stencils::build(&mesh);
        let q: Vec<f64> = (0..20).map(|_| rng.gen()).collect();
        for k in 0..20 {
            let psi = quality_gap(&q, st.stencil(k));
            assert_eq!(psi.len(), st.neighbors(k).len());
            for (p, &j) in psi.iter().zip(st.neighbors(k)) {
                assert_eq!(*p, (q[k] - q[j]).abs());
            }
        }
    }

    #[test]
    fn single_triangle_uniform_quality() {
        let mesh = SimplicialMesh::new(Points::from_rows(2, [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), vec![0, 1, 2]).unwrap();
        let st = Stencils::build(&mesh);
        let p = params(0.01, 1.0);
        let mu = [0.5, 0.5, 0.5];
        let eps = update_shape_parameters(&[0.4; 3], 0.4, &[0.8; 3], &st, &mu, &p);
        let theta = 0.01 * 0.5;
        for e in eps {
            assert_relative_eq!(e, 0.4 - 3.0 * theta, epsilon = 1e-15);
        }
    }

    #[test]
    fn frozen_layer_leaves_eps_unchanged() {
        let mesh = grid3();
        let st = Stencils::build(&mesh);
        let eps: Vec<f64> = (0..9).map(|i| 0.3 + 0.01 * i as f64).collect();
        let q: Vec<f64> = (0..9).map(|i| 0.5 + 0.05 * i as f64).collect();
        let out = update_shape_parameters(&eps, 0.3, &q, &st, &[0.0; 9], &params(1.0, 1.0));
        assert_eq!(out, eps);
    }

    // Hand trace on a 3×3 grid split along the (1,1) diagonals. Only vertices
    // 2 and 4 lie outside the boundary layer. The 2-ring of corner 2 is
    // {1, 5, 0, 4, 8}; the 2-ring of the centre is every other vertex.
    #[test]
    fn nine_node_manual_trace() {
        let mesh = grid3();
        let st = Stencils::build(&mesh);
        let mut s2: Vec<usize> = st.neighbors(2).to_vec();
        s2.sort_unstable();
        assert_eq!(s2, vec![0, 1, 4, 5, 8]);
        assert_eq!(st.neighbors(4).len(), 8);

        let q = [0.9, 0.8, 0.4, 0.7, 0.6, 0.5, 1.0, 0.9, 0.3];
        let mut mu = [0.0; 9];
        mu[2] = 0.5;
        mu[4] = 0.25;
        let (delta, sigma, eps0) = (0.02, 2.0, 0.5);
        let out = update_shape_parameters(&[eps0; 9], eps0, &q, &st, &mu, &params(delta, sigma));

        let t2 = delta * 0.5;
        let t4 = delta * 0.25;
        let g = |k: usize, j: usize| (-sigma * f64::abs(q[k] - q[j])).exp();
        let mut expect = [eps0; 9];
        expect[2] -= t2;
        for j in [0, 1, 4, 5, 8] {
            expect[j] -= t2 * g(2, j);
        }
        expect[4] -= t4;
        for j in [0, 1, 2, 3, 5, 6, 7, 8] {
            expect[j] -= t4 * g(4, j);
        }
        for k in 0..9 {
            assert_relative_eq!(out[k], expect[k], epsilon = 1e-15);
        }
        // Vertices 3, 6 and 7 sit only in the centre's stencil.
        assert_relative_eq!(out[6], eps0 - t4 * (-sigma * 0.4f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn floor_holds_and_gate_skips_good_vertices() {
        let mesh = grid3();
        let st = Stencils::build(&mesh);
        let q = [0.2, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
        let out = update_shape_parameters(&[0.5; 9], 0.5, &q, &st, &[1.0; 9], &params(10.0, 1.0));
        assert!(out.iter().all(|&e| e == EPS_FLOOR_FACTOR * 0.5));

        let gated = SmoothingParams {
            quality_gate: Some(0.5),
            ..params(0.01, 1.0)
        };
        let mut mu = [0.0; 9];
        mu[0] = 1.0;
        mu[8] = 1.0;
        let out = update_shape_parameters(&[0.5; 9], 0.5, &q, &st, &mu, &gated);
        let ungated = update_shape_parameters(&[0.5; 9], 0.5, &q, &st, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &params(0.01, 1.0));
        assert_eq!(out, ungated);
    }

    proptest! {
        #[test]
        fn update_is_monotone_and_floored(
            seed in 0u64..1000,
            delta in 0.0f64..0.5,
            sigma in 0.01f64..10.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let pts = Points::from_rows(2, (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]));
            let mesh = tessellate(&pts).unwrap();
            let st = Stencils::build(&mesh);
            let eps_star = 0.4;
            let eps: Vec<f64> = (0..n).map(|_| rng.gen_range(EPS_FLOOR_FACTOR * eps_star..eps_star)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let mu: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen() }).collect();
            let out = update_shape_parameters(&eps, eps_star, &q, &st, &mu, &params(delta, sigma));
            for k in 0..n {
                prop_assert!(out[k] <= eps[k]);
                prop_assert!(out[k] >= EPS_FLOOR_FACTOR * eps_star);
            }
        }

        #[test]
        fn laplace_moves_stay_in_ring_hull(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts = Points::from_rows(2, (0..40).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]));
            let mesh = tessellate(&pts).unwrap();
            let ring = mesh.one_ring();
            let fixed: Vec<bool> = (0..40).map(|_| rng.gen_bool(0.3)).collect();
            let moved = laplace_positions(&mesh, &fixed, 1).unwrap();
            for k in 0..40 {
                if fixed[k] {
                    prop_assert_eq!(moved.point(k), mesh.vertices().point(k));
                    continue;
                }
                let ring_pts: Vec<[f64; 2]> = ring[k].iter().map(|&j| [pts.point(j)[0], pts.point(j)[1]]).collect();
                let hull = convex_hull(ring_pts);
                let p = moved.point(k);
                for i in 0..hull.len() {
                    let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
                    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                    prop_assert!(cross >= -1e-14, "vertex {} outside its ring hull", k);
                }
            }
        }
    }

    // Andrew's monotone chain, counter-clockwise.
    fn convex_hull(mut p: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        let mut h: Vec<[f64; 2]> = Vec::new();
        for pass in 0..2 {
            let start = h.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
            for &q in iter {
                while h.len() >= start + 2 && cross(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
                    h.pop();
                }
                h.push(q);
            }
            h.pop();
        }
        h
    }

    #[test]
    fn laplace_examples() {
        let mut pts = Points::from_rows(2, [[0.0, 0.0]]);
        for i in 0..6 {
            let a = std::f64::consts::PI / 3.0 * i as f64;
            pts.push(&[a.cos(), a.sin()]);
        }
        let el: Vec<usize> = (0..6).flat_map(|i| [0, 1 + i, 1 + (i + 1) % 6]).collect();
        let mesh = SimplicialMesh::new(pts.clone(), el.clone()).unwrap();
        let mut fixed = vec![true; 7];
        fixed[0] = false;
        let still = laplace_positions(&mesh, &fixed, 3).unwrap();
        assert_relative_eq!(still.point(0)[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(still.point(0)[1], 0.0, epsilon = 1e-15);

        pts.point_mut(0).copy_from_slice(&[0.3, -0.2]);
        let perturbed = SimplicialMesh::new(pts, el).unwrap();
        let back = laplace_positions(&perturbed, &fixed, 1).unwrap();
        assert_relative_eq!(back.point(0)[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(back.point(0)[1], 0.0, epsilon = 1e-15);
        let m = laplace_smooth(&perturbed, &fixed, 1, None).unwrap();
        assert_eq!(m.num_elements(), 6);
        assert!(laplace_positions(&perturbed, &[true; 3], 1).is_err());
    }

    #[test]
    fn laplace_is_jacobi() {
        // Path 0 - 1 - 2 - 3 inside a strip; only the middle pair moves.
        let pts = Points::from_rows(2, [[0.0, 0.0], [0.2, 0.1], [0.9, 0.0], [1.0, 0.5]]);
        let mesh = SimplicialMesh::new(pts, vec![0, 1, 3, 1, 2, 3]).unwrap();
        let fixed = [true, false, false, true];
        let out = laplace_positions(&mesh, &fixed, 1).unwrap();
        let ring = mesh.one_ring();
        for k in [1, 2] {
            let n = ring[k].len() as f64;
            let mean_x: f64 = ring[k].iter().map(|&j| mesh.vertices().point(j)[0]).sum::<f64>() / n;
            assert_relative_eq!(out.point(k)[0], mean_x, epsilon = 1e-15);
        }
    }

    #[test]
    fn param_validation() {
        assert!(SmoothingParams::default().validate().is_ok());
        assert!(params(0.0, 1.0).validate().is_ok());
        assert!(params(-1.0, 1.0).validate().is_err());
        assert!(params(1.0, 0.0).validate().is_err());
        let p = SmoothingParams { max_iterations: 0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = SmoothingParams { alpha: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn argmax_takes_first() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_first(&[5.0]), 0);
    }

    #[test]
    fn zero_delta_is_a_fixed_point() {
        let (nodes, domain, map, p) = small_square(0.0);
        let mut t = Timings::default();
        let (ctx, _) = prepare(&nodes, &domain, &map, &p, &KernelConfig::default(), &mut t).unwrap();
        let mut state = SmoothingState::initialize(&ctx, &p).unwrap();
        let y0 = state.current_nodes.clone();
        let m0 = state.current_mesh.clone();
        for i in 0..4 {
            smoothing_step(&mut state, &ctx, &p).unwrap();
            assert_eq!(state.history.len(), i + 1);
            assert_eq!(state.iteration, state.history.len());
            assert_eq!(state.current_nodes, y0);
            assert_eq!(state.current_mesh, m0);
        }
        assert!(state.history.windows(2).all(|w| w[0] == w[1]));

        let run = run(&nodes, &domain, &map, &p, &KernelConfig::default()).unwrap();
        assert_eq!(run.termination, TerminationReason::MaxIterations);
        assert_eq!(run.history.len(), p.max_iterations);
        assert_eq!(run.best, 0);
        assert!(run.meshes.iter().all(|m| *m == run.meshes[0]));
    }

    #[test]
    fn step_only_moves_rows_whose_eps_changed() {
        let (nodes, domain, map, p) = small_square(5e-3);
        let mut t = Timings::default();
        let (ctx, _) = prepare(&nodes, &domain, &map, &p, &KernelConfig::default(), &mut t).unwrap();
        let mut state = SmoothingState::initialize(&ctx, &p).unwrap();
        let y0 = state.current_nodes.clone();
        let eps0 = state.eps.clone();
        smoothing_step(&mut state, &ctx, &p).unwrap();
        let mut moved = 0;
        for k in 0..y0.len() {
            if state.eps[k] == eps0[k] {
                assert_eq!(state.current_nodes.point(k), y0.point(k), "row {k}");
            } else {
                moved += 1;
            }
            assert!(state.eps[k] <= eps0[k]);
        }
        assert!(moved > 0);
        // Data sites stay interpolated even when a neighbouring stencil lowers their ε.
        for &i in &nodes.data_site_indices() {
            let y = map.apply(nodes.points().point(i), p.alpha).unwrap();
            let d = crate::points::dist(&y, state.current_nodes.point(i));
            if state.eps[i] == eps0[i] {
                assert!(d < 1e-8, "data site {i} drifted by {d}");
            }
        }
    }

    #[test]
    fn run_history_and_stopping_are_sound() {
        let (nodes, domain, map, p) = small_square(2e-3);
        let run = run(&nodes, &domain, &map, &p, &KernelConfig::default()).unwrap();
        assert_eq!(run.meshes.len(), run.history.len());
        assert_eq!(run.records.len(), run.history.len());
        for (i, m) in run.meshes.iter().enumerate() {
            let q = QualityReport::element_qualities(m);
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_eq!(n, run.history[i]);
            assert_eq!(run.records[i].iteration, i);
            assert_eq!(run.records[i].inverted_count, orientation_check(m));
        }
        let t = run.termination_iteration;
        assert_eq!(t, run.history.len() - 1);
        match run.termination {
            TerminationReason::QualityDropped => {
                let prior = run.history[..t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(run.history[t] < prior);
                for i in 1..t {
                    let before = run.history[..i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    assert!(run.history[i] >= before);
                }
            }
            TerminationReason::MaxIterations => assert_eq!(run.history.len(), p.max_iterations),
        }
        assert_eq!(run.best, argmax_first(&run.history));
        assert_eq!(run.best_mesh(), &run.meshes[run.best]);
        assert!(run.final_eps.iter().all(|&e| e <= run.eps_star && e >= EPS_FLOOR_FACTOR * run.eps_star));
        assert!(run.timings.0.contains_key("10") && run.timings.0.contains_key("33"));
    }

    #[test]
    fn run_is_deterministic() {
        let (nodes, domain, map, p) = small_square(2e-3);
        let a = run(&nodes, &domain, &map, &p, &KernelConfig::default()).unwrap();
        let b = run(&nodes, &domain, &map, &p, &KernelConfig::default()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.meshes, b.meshes);
        assert_eq!(a.final_eps, b.final_eps);
    }

    #[test]
    fn run_rejects_mismatched_inputs() {
        let (nodes, domain, _, p) = small_square(1e-3);
        let err = run(&nodes, &domain, &DeformationMap::CubeToSphere, &p, &KernelConfig::default());
        assert!(err.is_err());
        let bad = SmoothingParams { sigma: -1.0, ..p };
        assert!(run(&nodes, &domain, &DeformationMap::SquareToDisk, &bad, &KernelConfig::default()).is_err());
    }

    #[test]
    fn all_boundary_and_snap_options() {
        let (nodes, domain, map, p) = small_square(2e-3);
        let p = SmoothingParams {
            mu_boundary: MuBoundary::AllBoundary,
            snap_boundary: true,
            max_iterations: 3,
            ..p
        };
        let mut t = Timings::default();
        let (ctx, _) = prepare(&nodes, &domain, &map, &p, &KernelConfig::default(), &mut t).unwrap();
        assert_eq!(ctx.mu_targets.len(), nodes.num_boundary());
        assert_eq!(ctx.pinned.len(), nodes.num_boundary() - nodes.num_data_sites());
        let y = ctx.place(&vec![ctx.interpolant.eps_fit(); nodes.len()], 64).unwrap();
        for &i in &nodes.boundary_indices() {
            let r = crate::points::norm(y.point(i));
            assert!((r - 1.0).abs() < 1e-8, "boundary node {i} at radius {r}");
        }
    }
}
