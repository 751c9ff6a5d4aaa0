//! Simplicial meshes: Delaunay construction, stencils, quality and validity.

mod delaunay;
pub mod predicates;
pub mod quality;
pub mod stencil;

pub use delaunay::tessellate;
pub use quality::{element_quality, orientation_check, QualityReport};
pub use stencil::{per_vertex_quality, two_ring, Stencils};

use crate::error::{Error, Result};
use crate::points::Points;

/// Vertices plus triangles (2D) or tetrahedra (3D).
#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialMesh {
    vertices: Points,
    /// Flat element connectivity, `dim + 1` indices per element.
    elements: Vec<usize>,
    vertex_to_elements: Vec<Vec<usize>>,
}

impl SimplicialMesh {
    /// Builds a mesh, checking index ranges and per-element distinctness.
    /// Element orientation is stored as given.
    pub fn new(vertices: Points, elements: Vec<usize>) -> Result<Self> {
        let dim = vertices.dim();
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("meshes must be 2D or 3D, got {dim}D")));
        }
        let k = dim + 1;
        if elements.len() % k != 0 {
            return Err(Error::invalid("element index count is not a multiple of dim + 1"));
        }
        let n = vertices.len();
        for (e, el) in elements.chunks_exact(k).enumerate() {
            for (a, &i) in el.iter().enumerate() {
                if i >= n {
                    return Err(Error::invalid(format!("element {e} references vertex {i} of {n}")));
                }
                if el[..a].contains(&i) {
                    return Err(Error::invalid(format!("element {e} repeats vertex {i}")));
                }
            }
        }
        let mut mesh = SimplicialMesh {
            vertices,
            elements,
            vertex_to_elements: Vec::new(),
        };
        mesh.rebuild_adjacency();
        Ok(mesh)
    }

    fn rebuild_adjacency(&mut self) {
        let mut v2e = vec![Vec::new(); self.vertices.len()];
        for (e, el) in self.elements.chunks_exact(self.nodes_per_element()).enumerate() {
            for &i in el {
                v2e[i].push(e);
            }
        }
        self.vertex_to_elements = v2e;
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.vertices.dim()
    }

    #[inline]
    pub fn nodes_per_element(&self) -> usize {
        self.dim() + 1
    }

    pub fn vertices(&self) -> &Points {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / self.nodes_per_element()
    }

    #[inline]
    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.elements.chunks_exact(self.nodes_per_element())
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.elements
    }

    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_to_elements[v]
    }

    pub fn element_coords(&self, e: usize) -> Vec<&[f64]> {
        self.element(e).iter().map(|&i| self.vertices.point(i)).collect()
    }

    /// Signed area (2D) or volume (3D) under the stored vertex order.
    pub fn signed_measure(&self, e: usize) -> f64 {
        quality::signed_measure(&self.element_coords(e))
    }

    pub fn centroid(&self, e: usize) -> Vec<f64> {
        let k = self.nodes_per_element() as f64;
        let mut c = vec![0.0; self.dim()];
        for p in self.element_coords(e) {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / k;
            }
        }
        c
    }

    /// Canonical orientation pass: reorders negatively oriented elements.
    pub fn orient_positive(&mut self) {
        let k = self.nodes_per_element();
        for e in 0..self.num_elements() {
            if predicates::orient(&self.element_coords(e)) < 0.0 {
                self.elements.swap(e * k + k - 2, e * k + k - 1);
            }
        }
    }

    /// Same connectivity placed at new vertex positions.
    pub fn with_vertices(&self, vertices: Points) -> Result<Self> {
        if vertices.len() != self.vertices.len() || vertices.dim() != self.dim() {
            return Err(Error::invalid("replacement vertices do not match the mesh"));
        }
        Ok(SimplicialMesh {
            vertices,
            elements: self.elements.clone(),
            vertex_to_elements: self.vertex_to_elements.clone(),
        })
    }

    /// Keeps the elements for which `keep(mesh, e)` holds.
    pub fn retain_elements(&mut self, mut keep: impl FnMut(&SimplicialMesh, usize) -> bool) {
        let k = self.nodes_per_element();
        let flags: Vec<bool> = (0..self.num_elements()).map(|e| keep(self, e)).collect();
        let mut out = Vec::with_capacity(self.elements.len());
        for (e, el) in self.elements.chunks_exact(k).enumerate() {
            if flags[e] {
                out.extend_from_slice(el);
            }
        }
        self.elements = out;
        self.rebuild_adjacency();
    }

    /// Unique undirected edges (i < j), sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let k = self.nodes_per_element();
        let mut edges = Vec::with_capacity(self.elements.len() * (k - 1) / 2 * 2);
        for el in self.elements() {
            for a in 0..k {
                for b in a + 1..k {
                    let (i, j) = (el[a].min(el[b]), el[a].max(el[b]));
                    edges.push([i, j]);
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Sorted edge neighbours of every vertex.
    pub fn one_ring(&self) -> Vec<Vec<usize>> {
        let mut ring = vec![Vec::new(); self.num_vertices()];
        for [i, j] in self.edges() {
            ring[i].push(j);
            ring[j].push(i);
        }
        for r in &mut ring {
            r.sort_unstable();
        }
        ring
    }

    /// Removes 2D elements whose centroid lies inside the closed polygon traced
    /// by `ring` (vertex indices in boundary order) at the current positions.
    pub fn remove_enclosed(&mut self, ring: &[usize]) {
        if self.dim() != 2 || ring.len() < 3 {
            return;
        }
        let poly: Vec<[f64; 2]> = ring
            .iter()
            .map(|&i| {
                let p = self.vertices.point(i);
                [p[0], p[1]]
            })
            .collect();
        self.retain_elements(|m, e| {
            let c = m.centroid(e);
            !point_in_polygon([c[0], c[1]], &poly)
        });
    }
}

/// Even-odd rule point-in-polygon test.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
