//! Incremental Delaunay tessellation in 2D and 3D.
//!
//! Bowyer–Watson insertion over a triangulation closed by ghost simplices
//! (one vertex at infinity per hull facet), so the convex hull is exact even
//! for collinear or coplanar boundary chains. Points are inserted in Morton
//! order and located by a visibility walk from the last created simplex.
//! Cospherical ties are never treated as conflicts, so the result depends only
//! on the (deterministic) insertion order.

use std::collections::HashMap;

use super::predicates::{coplanar_in_circle, collinear3, in_ball, orient, orient2d, strictly_between};
use super::SimplicialMesh;
use crate::error::{Error, Result};
use crate::points::Points;

const INF: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

/// Delaunay tessellation of `vertices` (2D triangles or 3D tetrahedra).
///
/// Exact duplicates are skipped and stay unreferenced in the output mesh.
pub fn tessellate(vertices: &Points) -> Result<SimplicialMesh> {
    if !vertices.all_finite() {
        return Err(Error::invalid("non-finite vertex coordinate"));
    }
    let elements = match vertices.dim() {
        2 => Builder::<3>::run(vertices)?,
        3 => Builder::<4>::run(vertices)?,
        d => return Err(Error::invalid(format!("tessellation in {d} dimensions is not supported"))),
    };
    let mut mesh = SimplicialMesh::new(vertices.clone(), elements)?;
    mesh.orient_positive();
    Ok(mesh)
}

struct Builder<'a, const K: usize> {
    pts: &'a Points,
    verts: Vec<[u32; K]>,
    nbrs: Vec<[u32; K]>,
    alive: Vec<bool>,
    free: Vec<u32>,
    visit: Vec<u32>,
    stamp: u32,
    hint: u32,
    // scratch buffers reused across insertions
    cavity: Vec<u32>,
    stack: Vec<u32>,
    boundary: Vec<(u32, usize)>,
    faces: HashMap<[u32; 2], (u32, usize)>,
    walk_turn: usize,
}

impl<'a, const K: usize> Builder<'a, K> {
    fn run(pts: &'a Points) -> Result<Vec<usize>> {
        let order = morton_order(pts);
        let mut b = Builder::<K> {
            pts,
            verts: Vec::new(),
            nbrs: Vec::new(),
            alive: Vec::new(),
            free: Vec::new(),
            visit: Vec::new(),
            stamp: 0,
            hint: 0,
            cavity: Vec::new(),
            stack: Vec::new(),
            boundary: Vec::new(),
            faces: HashMap::new(),
            walk_turn: 0,
        };
        let seed = b.initial_simplex(&order)?;
        b.start(&seed);
        for &i in &order {
            if seed.contains(&(i as u32)) {
                continue;
            }
            b.insert(i as u32);
        }
        let mut out = Vec::new();
        for (s, v) in b.verts.iter().enumerate() {
            if b.alive[s] && !v.contains(&INF) {
                out.extend(v.iter().map(|&x| x as usize));
            }
        }
        Ok(out)
    }

    #[inline]
    fn p(&self, v: u32) -> &'a [f64] {
        self.pts.point(v as usize)
    }

    fn initial_simplex(&self, order: &[usize]) -> Result<[u32; K]> {
        let dim = K - 1;
        let mut chosen: Vec<u32> = Vec::with_capacity(K);
        for &i in order {
            let i = i as u32;
            let ok = match chosen.len() {
                0 => true,
                1 => self.p(i) != self.p(chosen[0]),
                2 => {
                    if dim == 2 {
                        orient2d(self.p(chosen[0]), self.p(chosen[1]), self.p(i)) != 0.0
                    } else {
                        !collinear3(self.p(chosen[0]), self.p(chosen[1]), self.p(i))
                    }
                }
                _ => {
                    let mut q: Vec<&[f64]> = chosen.iter().map(|&c| self.p(c)).collect();
                    q.push(self.p(i));
                    orient(&q) != 0.0
                }
            };
            if ok {
                chosen.push(i);
                if chosen.len() == K {
                    break;
                }
            }
        }
        if chosen.len() < K {
            return Err(Error::Degenerate(format!(
                "{} points contain no {} affinely independent vertices",
                self.pts.len(),
                K
            )));
        }
        let mut s = [0u32; K];
        s.copy_from_slice(&chosen);
        Ok(s)
    }

    fn start(&mut self, seed: &[u32; K]) {
        let mut solid = *seed;
        let q: Vec<&[f64]> = solid.iter().map(|&v| self.p(v)).collect();
        if orient(&q) < 0.0 {
            solid.swap(0, 1);
        }
        let mut all = vec![solid];
        for i in 0..K {
            let mut g = solid;
            g[i] = INF;
            // flip parity so the infinite vertex sits on the outer side
            let (a, b) = if i == 0 { (1, 2) } else if i == 1 { (0, 2) } else { (0, 1) };
            g.swap(a, b);
            all.push(g);
        }
        let mut faces: HashMap<Vec<u32>, (usize, usize)> = HashMap::new();
        self.verts = all.clone();
        self.nbrs = vec![[NONE; K]; all.len()];
        self.alive = vec![true; all.len()];
        self.visit = vec![0; all.len()];
        for (s, v) in all.iter().enumerate() {
            for slot in 0..K {
                let mut key: Vec<u32> = (0..K).filter(|&j| j != slot).map(|j| v[j]).collect();
                key.sort_unstable();
                if let Some((t, ts)) = faces.remove(&key) {
                    self.nbrs[s][slot] = t as u32;
                    self.nbrs[t][ts] = s as u32;
                } else {
                    faces.insert(key, (s, slot));
                }
            }
        }
        debug_assert!(faces.is_empty());
        self.hint = 0;
    }

    /// Orientation of simplex `s` with the vertex in `slot` replaced by point `q`.
    #[inline]
    fn orient_replaced(&self, s: u32, slot: usize, q: u32) -> f64 {
        let v = &self.verts[s as usize];
        let mut pts: [&[f64]; K] = [&[]; K];
        for j in 0..K {
            pts[j] = if j == slot { self.p(q) } else { self.p(v[j]) };
        }
        orient(&pts)
    }

    fn conflict(&self, s: u32, q: u32) -> bool {
        let v = &self.verts[s as usize];
        if let Some(k) = v.iter().position(|&x| x == INF) {
            let o = self.orient_replaced(s, k, q);
            if o != 0.0 {
                return o > 0.0;
            }
            let f: Vec<&[f64]> = (0..K).filter(|&j| j != k).map(|j| self.p(v[j])).collect();
            if K == 3 {
                strictly_between(f[0], f[1], self.p(q))
            } else {
                coplanar_in_circle(f[0], f[1], f[2], self.p(q))
            }
        } else {
            let mut pts: [&[f64]; K] = [&[]; K];
            for j in 0..K {
                pts[j] = self.p(v[j]);
            }
            in_ball(&pts, self.p(q)) > 0.0
        }
    }

    fn is_ghost(&self, s: u32) -> bool {
        self.verts[s as usize].contains(&INF)
    }

    fn locate(&mut self, q: u32) -> u32 {
        let mut s = self.hint;
        if !self.alive[s as usize] {
            s = self.alive.iter().position(|&a| a).unwrap() as u32;
        }
        if self.is_ghost(s) {
            let k = self.verts[s as usize].iter().position(|&x| x == INF).unwrap();
            s = self.nbrs[s as usize][k];
        }
        let limit = 4 * self.verts.len() + 16;
        let mut steps = 0;
        'walk: loop {
            if self.is_ghost(s) {
                return s;
            }
            steps += 1;
            if steps > limit {
                break;
            }
            self.walk_turn = self.walk_turn.wrapping_add(1);
            for j in 0..K {
                let slot = (j + self.walk_turn) % K;
                if self.orient_replaced(s, slot, q) < 0.0 {
                    s = self.nbrs[s as usize][slot];
                    continue 'walk;
                }
            }
            return s;
        }
        // fallback: exhaustive search for a conflicting simplex
        (0..self.verts.len() as u32)
            .find(|&t| self.alive[t as usize] && self.conflict(t, q))
            .unwrap_or(s)
    }

    fn insert(&mut self, q: u32) {
        let mut start = self.locate(q);
        if !self.conflict(start, q) {
            let duplicate = self.verts[start as usize]
                .iter()
                .any(|&v| v != INF && self.p(v) == self.p(q));
            if duplicate {
                return;
            }
            match (0..self.verts.len() as u32).find(|&t| self.alive[t as usize] && self.conflict(t, q)) {
                Some(t) => start = t,
                None => return,
            }
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.visit.iter_mut().for_each(|v| *v = 0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        self.cavity.clear();
        self.boundary.clear();
        self.stack.clear();
        self.stack.push(start);
        self.visit[start as usize] = stamp;
        while let Some(s) = self.stack.pop() {
            self.cavity.push(s);
            for slot in 0..K {
                let n = self.nbrs[s as usize][slot];
                if self.visit[n as usize] == stamp {
                    continue;
                }
                if self.conflict(n, q) {
                    self.visit[n as usize] = stamp;
                    self.stack.push(n);
                } else {
                    self.boundary.push((s, slot));
                }
            }
        }
        // cavity slots are recycled only after the new simplices are linked
        let facets: Vec<([u32; K], u32, u32, usize)> = self
            .boundary
            .iter()
            .map(|&(s, slot)| {
                let mut v = self.verts[s as usize];
                v[slot] = q;
                (v, s, self.nbrs[s as usize][slot], slot)
            })
            .collect();
        self.faces.clear();
        let mut last = NONE;
        for (v, inside, outside, slot) in facets {
            let id = self.allocate(v);
            self.nbrs[id as usize][slot] = outside;
            let back = self.nbrs[outside as usize]
                .iter()
                .position(|&x| x == inside)
                .expect("outside simplex lost its cavity neighbor");
            self.nbrs[outside as usize][back] = id;
            for j in 0..K {
                if j == slot {
                    continue;
                }
                let mut key = [NONE; 2];
                let mut n = 0;
                for (t, &x) in v.iter().enumerate() {
                    if t != j && t != slot {
                        key[n] = x;
                        n += 1;
                    }
                }
                if n == 2 && key[0] > key[1] {
                    key.swap(0, 1);
                }
                if let Some((other, oslot)) = self.faces.remove(&key) {
                    self.nbrs[id as usize][j] = other;
                    self.nbrs[other as usize][oslot] = id;
                } else {
                    self.faces.insert(key, (id, j));
                }
            }
            if !v.contains(&INF) {
                last = id;
            }
        }
        debug_assert!(self.faces.is_empty());
        for i in 0..self.cavity.len() {
            let s = self.cavity[i];
            self.alive[s as usize] = false;
            self.free.push(s);
        }
        if last != NONE {
            self.hint = last;
        }
    }

    fn allocate(&mut self, v: [u32; K]) -> u32 {
        if let Some(id) = self.free.pop() {
            let i = id as usize;
            self.verts[i] = v;
            self.nbrs[i] = [NONE; K];
            self.alive[i] = true;
            id
        } else {
            self.verts.push(v);
            self.nbrs.push([NONE; K]);
            self.alive.push(true);
            self.visit.push(0);
            (self.verts.len() - 1) as u32
        }
    }
}

/// Insertion order: Morton code of the quantized coordinates, ties by index.
fn morton_order(pts: &Points) -> Vec<usize> {
    let n = pts.len();
    let Some((lo, hi)) = pts.bounding_box() else {
        return Vec::new();
    };
    let dim = pts.dim();
    let bits = if dim == 2 { 31 } else { 21 };
    let scale: Vec<f64> = (0..dim)
        .map(|d| {
            let w = hi[d] - lo[d];
            if w > 0.0 {
                ((1u64 << bits) - 1) as f64 / w
            } else {
                0.0
            }
        })
        .collect();
    let mut keyed: Vec<(u64, usize)> = (0..n)
        .map(|i| {
            let p = pts.point(i);
            let mut code = 0u64;
            let q: Vec<u64> = (0..dim).map(|d| ((p[d] - lo[d]) * scale[d]) as u64).collect();
            for b in (0..bits).rev() {
                for qd in &q {
                    code = (code << 1) | ((qd >> b) & 1);
                }
            }
            (code, i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}
