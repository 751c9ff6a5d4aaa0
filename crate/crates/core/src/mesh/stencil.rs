//! Two-ring stencils and the element-to-vertex quality average.

use super::SimplicialMesh;

/// Compressed per-vertex stencils; entry 0 of each stencil is the vertex itself,
/// followed by its 2-ring neighbours in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stencils {
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl Stencils {
    pub fn build(mesh: &SimplicialMesh) -> Self {
        let ring = mesh.one_ring();
        let n = mesh.num_vertices();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut members = Vec::new();
        let mut seen = vec![usize::MAX; n];
        let mut buf = Vec::new();
        offsets.push(0);
        for k in 0..n {
            buf.clear();
            seen[k] = k;
            for &j in &ring[k] {
                if seen[j] != k {
                    seen[j] = k;
                    buf.push(j);
                }
                for &l in &ring[j] {
                    if seen[l] != k {
                        seen[l] = k;
                        buf.push(l);
                    }
                }
            }
            buf.sort_unstable();
            members.push(k);
            members.extend_from_slice(&buf);
            offsets.push(members.len());
        }
        Stencils { offsets, members }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Vertex `k` followed by its neighbours.
    pub fn stencil(&self, k: usize) -> &[usize] {
        &self.members[self.offsets[k]..self.offsets[k + 1]]
    }

    /// The n_k 2-ring neighbours of `k`.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.stencil(k)[1..]
    }
}

/// Stencil of vertex `k`: itself plus every vertex within two edges.
pub fn two_ring(mesh: &SimplicialMesh, k: usize) -> Vec<usize> {
    let ring = mesh.one_ring();
    let mut out: Vec<usize> = ring[k].iter().flat_map(|&j| std::iter::once(j).chain(ring[j].iter().copied())).filter(|&j| j != k).collect();
    out.sort_unstable();
    out.dedup();
    out.insert(0, k);
    out
}

/// Mean element quality over the elements incident to any vertex of each stencil.
/// Vertices that belong to no element get quality 0.
pub fn per_vertex_quality(mesh: &SimplicialMesh, q_e: &[f64], stencils: &Stencils) -> Vec<f64> {
    assert_eq!(q_e.len(), mesh.num_elements(), "one quality per element");
    let mut stamp = vec![usize::MAX; mesh.num_elements()];
    (0..mesh.num_vertices())
        .map(|k| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for &v in stencils.stencil(k) {
                for &e in mesh.vertex_elements(v) {
                    if stamp[e] != k {
                        stamp[e] = k;
                        sum += q_e[e];
                        count += 1;
                    }
                }
            }
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect()
}
