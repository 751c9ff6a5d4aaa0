//! Quasi-uniform node sets: lattice fill, repulsion relaxation, roles.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DomainSpec;
use crate::error::{Error, Result};
use crate::mesh::tessellate;
use crate::points::{norm, Points};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Interior,
    Boundary,
    DataSite,
}

impl NodeRole {
    pub fn is_boundary(self) -> bool {
        matches!(self, NodeRole::Boundary | NodeRole::DataSite)
    }
}

/// Node coordinates with per-node roles and the target spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    points: Points,
    roles: Vec<NodeRole>,
    spacing: f64,
}

impl NodeSet {
    pub fn new(points: Points, roles: Vec<NodeRole>, spacing: f64) -> Result<Self> {
        if roles.len() != points.len() {
            return Err(Error::invalid(format!("{} roles for {} nodes", roles.len(), points.len())));
        }
        Ok(NodeSet { points, roles, spacing })
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn role(&self, i: usize) -> NodeRole {
        self.roles[i]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn indices(&self, keep: impl Fn(NodeRole) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| keep(self.roles[i])).collect()
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        self.indices(|r| r == NodeRole::Interior)
    }

    /// Boundary nodes, data sites included.
    pub fn boundary_indices(&self) -> Vec<usize> {
        self.indices(NodeRole::is_boundary)
    }

    pub fn data_site_indices(&self) -> Vec<usize> {
        self.indices(|r| r == NodeRole::DataSite)
    }

    pub fn num_interior(&self) -> usize {
        self.roles.iter().filter(|r| **r == NodeRole::Interior).count()
    }

    pub fn num_boundary(&self) -> usize {
        self.roles.iter().filter(|r| r.is_boundary()).count()
    }

    pub fn num_data_sites(&self) -> usize {
        self.roles.iter().filter(|r| **r == NodeRole::DataSite).count()
    }

    pub fn data_sites(&self) -> Points {
        self.points.select(&self.data_site_indices())
    }
}

/// Parameters of the repulsion relaxation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepulsionOptions {
    pub max_iterations: usize,
    /// Stop once every node moves less than `tolerance · h` in one step.
    pub tolerance: f64,
    pub dt: f64,
    /// Retessellate after any node drifts `retriangulate · h` from the last tessellation.
    pub retriangulate: f64,
    /// Initial lattice jitter as a fraction of h.
    pub jitter: f64,
    /// Interior nodes are held at least `clearance · h` inside the boundary.
    pub clearance: f64,
}

impl Default for RepulsionOptions {
    fn default() -> Self {
        RepulsionOptions {
            max_iterations: 500,
            tolerance: 1e-3,
            dt: 0.2,
            retriangulate: 0.1,
            jitter: 0.1,
            clearance: 0.3,
        }
    }
}

fn check_spacing(domain: &DomainSpec, h: f64) -> Result<()> {
    domain.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("spacing must be positive, got {h}")));
    }
    Ok(())
}

/// Centred lattice with nearest-neighbour distance about `h`: rows of spacing h
/// and row pitch h·√3/2 in 2D, face-centred cubic in 3D.
fn lattice(domain: &DomainSpec, h: f64) -> Vec<Vec<f64>> {
    let e = domain.half_extent();
    let mut out = Vec::new();
    if domain.dim() == 2 {
        let dy = 0.5 * 3f64.sqrt() * h;
        let nx = (e / h).ceil() as i64 + 1;
        let ny = (e / dy).ceil() as i64 + 1;
        for j in -ny..ny {
            for i in -nx..nx {
                out.push(vec![(i as f64 + 0.5) * h, (j as f64 + 0.5) * dy]);
            }
        }
    } else {
        let a = h * 2f64.sqrt();
        let n = (e / a).ceil() as i64 + 1;
        let basis = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];
        for k in -n..n {
            for j in -n..n {
                for i in -n..n {
                    for b in basis {
                        out.push(vec![(i as f64 + b[0]) * a, (j as f64 + b[1]) * a, (k as f64 + b[2]) * a]);
                    }
                }
            }
        }
    }
    out
}

fn initial_interior(domain: &DomainSpec, h: f64, seed: u64, opts: &RepulsionOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lattice(domain, h)
        .into_iter()
        .filter_map(|mut p| {
            for c in &mut p {
                *c += opts.jitter * h * rng.gen_range(-1.0..1.0);
            }
            (domain.boundary_fn(&p) < -opts.clearance * h).then_some(p)
        })
        .collect()
}

/// Pushes `p` back to at least `depth` inside the boundary along the gradient.
fn hold_inside(domain: &DomainSpec, p: &mut [f64], depth: f64) {
    for _ in 0..3 {
        let d = domain.boundary_fn(p);
        if d <= -depth {
            return;
        }
        let g = domain.boundary_gradient(p);
        let gn = norm(&g);
        if gn == 0.0 {
            return;
        }
        for (c, gc) in p.iter_mut().zip(&g) {
            *c -= (d + depth) * gc / (gn * gn);
        }
    }
}

/// Bars of the current tessellation restricted to elements whose centroid lies
/// inside the domain.
fn bars(domain: &DomainSpec, pts: &Points, h: f64) -> Result<Vec<[usize; 2]>> {
    let mut mesh = tessellate(pts)?;
    mesh.retain_elements(|m, e| domain.boundary_fn(&m.centroid(e)) < -1e-3 * h);
    Ok(mesh.edges())
}

/// Quasi-uniform nodes at spacing `h`: fixed boundary samples plus relaxed
/// interior nodes. Interior nodes come first, boundary nodes after them.
pub fn generate_nodes(domain: &DomainSpec, h: f64, seed: u64) -> Result<NodeSet> {
    generate_nodes_with(domain, h, seed, &RepulsionOptions::default())
}

pub fn generate_nodes_with(domain: &DomainSpec, h: f64, seed: u64, opts: &RepulsionOptions) -> Result<NodeSet> {
    check_spacing(domain, h)?;
    let dim = domain.dim();
    let interior = initial_interior(domain, h, seed, opts);
    let needed = dim + 2;
    if interior.len() < needed {
        return Err(Error::InfeasibleSpacing {
            h,
            placed: interior.len(),
            needed,
        });
    }
    let boundary = domain.boundary_samples(h);
    let ni = interior.len();
    let mut pts = Points::from_rows(dim, &interior);
    for p in boundary.iter() {
        pts.push(p);
    }

    let fscale = if dim == 2 { 1.2 } else { 1.1 };
    let mut last = pts.clone();
    let mut edges = bars(domain, &pts, h)?;
    let mut force = vec![0.0; ni * dim];
    for _ in 0..opts.max_iterations {
        let drift = (0..ni)
            .map(|i| crate::points::dist(pts.point(i), last.point(i)))
            .fold(0.0, f64::max);
        if drift > opts.retriangulate * h {
            edges = bars(domain, &pts, h)?;
            last = pts.clone();
        }
        let lengths: Vec<f64> = edges.iter().map(|&[a, b]| crate::points::dist(pts.point(a), pts.point(b))).collect();
        let mean_pow = lengths.iter().map(|l| l.powi(dim as i32)).sum::<f64>() / lengths.len().max(1) as f64;
        let l0 = fscale * mean_pow.powf(1.0 / dim as f64);

        force.iter_mut().for_each(|f| *f = 0.0);
        for (&[a, b], &l) in edges.iter().zip(&lengths) {
            if l == 0.0 {
                continue;
            }
            let f = (l0 - l).max(0.0) / l;
            for d in 0..dim {
                let v = f * (pts.point(a)[d] - pts.point(b)[d]);
                if a < ni {
                    force[a * dim + d] += v;
                }
                if b < ni {
                    force[b * dim + d] -= v;
                }
            }
        }
        let mut max_move: f64 = 0.0;
        for i in 0..ni {
            let before = pts.point(i).to_vec();
            let p = pts.point_mut(i);
            for d in 0..dim {
                p[d] += opts.dt * force[i * dim + d];
            }
            hold_inside(domain, p, opts.clearance * h);
            max_move = max_move.max(crate::points::dist(&before, p));
        }
        if max_move < opts.tolerance * h {
            break;
        }
    }

    let mut roles = vec![NodeRole::Interior; ni];
    roles.extend(std::iter::repeat(NodeRole::Boundary).take(boundary.len()));
    NodeSet::new(pts, roles, h)
}

/// Node count the generator produces at spacing `h`, without relaxation.
fn count_nodes(domain: &DomainSpec, h: f64, seed: u64) -> usize {
    let opts = RepulsionOptions::default();
    initial_interior(domain, h, seed, &opts).len() + domain.boundary_samples(h).len()
}

/// Spacing whose node set has about `n_target` nodes: a density estimate
/// followed by count-based corrections.
pub fn spacing_for_target(domain: &DomainSpec, n_target: usize, seed: u64) -> Result<f64> {
    domain.validate()?;
    if n_target < domain.dim() + 3 {
        return Err(Error::invalid(format!("node target {n_target} is too small")));
    }
    let dim = domain.dim() as f64;
    // interior density of the lattice (2/√3 per h² or √2 per h³)
    let density = if domain.dim() == 2 { 2.0 / 3f64.sqrt() } else { 2f64.sqrt() };
    let mut h = (domain.measure() * density / n_target as f64).powf(1.0 / dim);
    for _ in 0..6 {
        let n = count_nodes(domain, h, seed) as f64;
        h *= (n / n_target as f64).powf(1.0 / dim);
    }
    Ok(h)
}

/// Marks nodes with |boundary_fn| ≤ α as boundary, all others interior.
/// Previous data-site marks are cleared.
pub fn classify_boundary(nodes: &NodeSet, domain: &DomainSpec, alpha: f64) -> Result<NodeSet> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("boundary thickness must be positive, got {alpha}")));
    }
    let roles = nodes
        .points
        .iter()
        .map(|p| {
            if domain.boundary_fn(p).abs() <= alpha {
                NodeRole::Boundary
            } else {
                NodeRole::Interior
            }
        })
        .collect();
    NodeSet::new(nodes.points.clone(), roles, nodes.spacing)
}

/// Marks ⌈p·N_b⌉ boundary nodes, drawn uniformly under `seed`, as data sites.
pub fn select_data_sites(nodes: &NodeSet, p: f64, seed: u64) -> Result<NodeSet> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("data-site fraction must lie in (0, 1], got {p}")));
    }
    let boundary = nodes.boundary_indices();
    if boundary.is_empty() {
        return Err(Error::NoBoundary);
    }
    let nb = boundary.len();
    // the small offset keeps products such as 0.86·200 = 172.00000000000003 at 172
    let count = ((p * nb as f64 - 1e-9).ceil() as usize).clamp(1, nb);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, nb, count).into_vec();
    picked.sort_unstable();
    let mut roles: Vec<NodeRole> = nodes
        .roles
        .iter()
        .map(|&r| if r == NodeRole::DataSite { NodeRole::Boundary } else { r })
        .collect();
    for k in picked {
        roles[boundary[k]] = NodeRole::DataSite;
    }
    NodeSet::new(nodes.points.clone(), roles, nodes.spacing)
}
