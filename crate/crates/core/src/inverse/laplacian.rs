use alloc::collections::VecDeque;
use alloc::vec;

use crate::forge::SurfaceMesh;
use crate::{Error, Matrix, Result};

/// Graph Laplacian `D − A` of a connected mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(Matrix);

impl Laplacian {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_laplacian(mesh: &SurfaceMesh) -> Result<Laplacian> {
    let edges: alloc::vec::Vec<_> = mesh.edges().collect();
    laplacian_from_edges(mesh.len(), &edges)
}

/// Laplacian of an undirected graph given by its edge list.
pub fn laplacian_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Laplacian> {
    if n == 0 {
        return Err(Error::Empty("graph"));
    }
    let mut l = Matrix::zeros(n, n);
    let mut adj = vec![vec![]; n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::param("edge", alloc::format!("({a}, {b}) out of range")));
        }
        if a == b || l[(a, b)] != 0.0 {
            continue;
        }
        l[(a, b)] = -1.0;
        l[(b, a)] = -1.0;
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(a) = queue.pop_front() {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                queue.push_back(b);
            }
        }
    }
    if seen.contains(&false) {
        return Err(Error::Disconnected);
    }
    Ok(Laplacian(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::make_base_geometry;

    #[test]
    fn path_graph_closed_form() {
        let l = laplacian_from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let want = Matrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l.matrix(), &want);
        assert!(matches!(laplacian_from_edges(3, &[(0, 1)]), Err(Error::Disconnected)));
    }

    #[test]
    fn mesh_laplacian_is_symmetric_psd_with_constant_null_space() {
        for seed in 0..4 {
            let mesh = make_base_geometry(40, 60, seed).unwrap().source;
            let l = build_laplacian(&mesh).unwrap();
            let m = l.matrix();
            assert_eq!(m, &m.transpose());
            let ones = nalgebra::DVector::from_element(40, 1.0);
            assert!((m * ones).amax() < 1e-12);
            let eig = m.clone().symmetric_eigen();
            assert!(eig.eigenvalues.min() >= -1e-10);
        }
    }
}
