//! Symmetrically normalized sparse operators in CSR form.
//!
//! Every propagation step in the model multiplies by one of these. Entries
//! carry the weight 1/√(dᵢ·dⱼ) where degrees come from the unnormalized
//! structure; rows of isolated nodes stay empty (no smoothing), so the
//! operator never invents mass for nodes without neighbors.

use super::{InteractionMatrix, MetaPathSubgraph};
use crate::tensor::Dense;

/// CSR matrix over an undirected structure, with each stored entry tagged by
/// the undirected edge it came from. The tag is what lets a single learnable
/// retention weight cover both directions of one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
    entry_edge: Vec<u32>,
    edge_count: usize,
}

impl SparseAdjacency {
    /// Square dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entry count (twice the undirected edge count).
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Column indices of row `i`.
    pub fn row_indices(&self, i: usize) -> &[u32] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    /// Normalized weights of row `i`.
    pub fn row_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.indptr[i]..self.indptr[i + 1]]
    }

    /// Undirected edge ids of row `i`'s entries.
    pub fn row_edges(&self, i: usize) -> &[u32] {
        &self.entry_edge[self.indptr[i]..self.indptr[i + 1]]
    }

    /// Undirected edge id per stored entry, in storage order.
    pub fn entry_edges(&self) -> &[u32] {
        &self.entry_edge
    }

    /// Normalized weight per stored entry, in storage order.
    pub fn entry_weights(&self) -> &[f64] {
        &self.weights
    }

    /// y = A·x with the stored normalized weights.
    pub fn apply(&self, x: &Dense) -> Dense {
        assert_eq!(self.n, x.nrows(), "operator/input dimension mismatch");
        let d = x.ncols();
        let mut y = Dense::zeros((self.n, d));
        for i in 0..self.n {
            let lo = self.indptr[i];
            let hi = self.indptr[i + 1];
            let mut row = y.row_mut(i);
            for k in lo..hi {
                let j = self.indices[k] as usize;
                let w = self.weights[k];
                let src = x.row(j);
                for c in 0..d {
                    row[c] += w * src[c];
                }
            }
        }
        y
    }

    /// y = A·x with each stored entry's weight scaled by `entry_scale[k]`.
    pub fn apply_scaled(&self, entry_scale: &[f64], x: &Dense) -> Dense {
        assert_eq!(self.n, x.nrows(), "operator/input dimension mismatch");
        assert_eq!(entry_scale.len(), self.nnz(), "one scale per stored entry");
        let d = x.ncols();
        let mut y = Dense::zeros((self.n, d));
        for i in 0..self.n {
            let lo = self.indptr[i];
            let hi = self.indptr[i + 1];
            let mut row = y.row_mut(i);
            for ((&j, &w0), &s) in self.indices[lo..hi]
                .iter()
                .zip(&self.weights[lo..hi])
                .zip(&entry_scale[lo..hi])
            {
                let w = w0 * s;
                let src = x.row(j as usize);
                for c in 0..d {
                    row[c] += w * src[c];
                }
            }
        }
        y
    }

    /// yᵀ-side counterpart of [`apply`]: out[j] += w·g[i] for every entry.
    /// Because the structure is symmetric this equals `apply` with the same
    /// weights; it exists so weighted adjoints can reuse the entry scaling.
    pub fn apply_scaled_transpose(&self, entry_scale: &[f64], g: &Dense) -> Dense {
        assert_eq!(self.n, g.nrows(), "operator/input dimension mismatch");
        assert_eq!(entry_scale.len(), self.nnz(), "one scale per stored entry");
        let d = g.ncols();
        let mut out = Dense::zeros((self.n, d));
        for i in 0..self.n {
            let lo = self.indptr[i];
            let hi = self.indptr[i + 1];
            let src = g.row(i);
            for ((&j, &w0), &s) in self.indices[lo..hi]
                .iter()
                .zip(&self.weights[lo..hi])
                .zip(&entry_scale[lo..hi])
            {
                let w = w0 * s;
                let mut row = out.row_mut(j as usize);
                for c in 0..d {
                    row[c] += w * src[c];
                }
            }
        }
        out
    }

    /// Same structure with every stored entry's weight multiplied by
    /// `scale[k]`; normalization is kept from the original degrees.
    pub fn with_entry_scale(&self, scale: &[f64]) -> SparseAdjacency {
        assert_eq!(scale.len(), self.nnz(), "one scale per stored entry");
        let mut out = self.clone();
        for (w, s) in out.weights.iter_mut().zip(scale) {
            *w *= s;
        }
        out
    }

    /// Keep only edges whose id passes `keep`, then renormalize with the
    /// degrees of the surviving structure. Edge ids are preserved, so
    /// retention weights stay addressable after filtering.
    pub fn filter_edges(&self, keep: impl Fn(u32) -> bool) -> SparseAdjacency {
        let mut kept_pairs: Vec<(u32, u32, u32)> = Vec::new();
        for i in 0..self.n {
            let lo = self.indptr[i];
            for (offset, &j) in self.indices[lo..self.indptr[i + 1]].iter().enumerate() {
                if (i as u32) < j {
                    let e = self.entry_edge[lo + offset];
                    if keep(e) {
                        kept_pairs.push((i as u32, j, e));
                    }
                }
            }
        }
        build(self.n, self.edge_count, &kept_pairs)
    }

    /// Dense rendition, for oracles and small tests.
    pub fn to_dense(&self) -> Dense {
        let mut m = Dense::zeros((self.n, self.n));
        for i in 0..self.n {
            let lo = self.indptr[i];
            let hi = self.indptr[i + 1];
            for k in lo..hi {
                m[[i, self.indices[k] as usize]] = self.weights[k];
            }
        }
        m
    }
}

/// Normalize an undirected edge set over `n` nodes into a CSR operator.
///
/// Pairs may arrive in any order and orientation; duplicates and self-loops
/// are dropped. Undirected edge ids are assigned in sorted (min, max) order.
pub fn normalize_adjacency(n: usize, pairs: &[(u32, u32)]) -> SparseAdjacency {
    let mut canonical: Vec<(u32, u32)> = pairs
        .iter()
        .filter(|&&(a, b)| a != b)
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    canonical.sort_unstable();
    canonical.dedup();
    for &(a, b) in &canonical {
        assert!(
            (b as usize) < n,
            "edge ({a}, {b}) out of range for {n} nodes"
        );
    }
    let tagged: Vec<(u32, u32, u32)> = canonical
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| (a, b, e as u32))
        .collect();
    build(n, tagged.len(), &tagged)
}

/// The (M+N)-node bipartite operator over user-item interactions; users
/// occupy rows 0..M and items rows M..M+N.
pub fn bipartite_adjacency(inter: &InteractionMatrix) -> SparseAdjacency {
    let m = inter.users() as u32;
    let pairs: Vec<(u32, u32)> = inter
        .pairs()
        .iter()
        .map(|&(u, i)| (u, m + i))
        .collect();
    normalize_adjacency(inter.users() + inter.items(), &pairs)
}

/// Normalized operator over a composed meta-path subgraph.
pub fn subgraph_adjacency(sub: &MetaPathSubgraph) -> SparseAdjacency {
    let tagged: Vec<(u32, u32, u32)> = sub
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| (a, b, e as u32))
        .collect();
    build(sub.n(), tagged.len(), &tagged)
}

/// Assemble CSR from unique (i < j, edge id) triples.
fn build(n: usize, edge_count: usize, pairs: &[(u32, u32, u32)]) -> SparseAdjacency {
    let mut degree = vec![0usize; n];
    for &(a, b, _) in pairs {
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }
    let mut indptr = vec![0usize; n + 1];
    for i in 0..n {
        indptr[i + 1] = indptr[i] + degree[i];
    }
    let nnz = indptr[n];
    let mut indices = vec![0u32; nnz];
    let mut weights = vec![0.0f64; nnz];
    let mut entry_edge = vec![0u32; nnz];
    let mut cursor = indptr.clone();
    for &(a, b, e) in pairs {
        let w = 1.0 / ((degree[a as usize] as f64) * (degree[b as usize] as f64)).sqrt();
        for (row, col) in [(a as usize, b), (b as usize, a)] {
            let k = cursor[row];
            indices[k] = col;
            weights[k] = w;
            entry_edge[k] = e;
            cursor[row] += 1;
        }
    }
    // Within each row the columns arrive in ascending order already: pairs
    // are sorted by (min, max), and both insertion sweeps preserve that.
    SparseAdjacency {
        n,
        indptr,
        indices,
        weights,
        entry_edge,
        edge_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::InteractionMatrix;
    use crate::tensor::{dense, max_abs_diff};

    #[test]
    fn single_interaction_gives_unit_weights() {
        let im = InteractionMatrix::new(1, 1, vec![(0, 0)]).unwrap();
        let adj = bipartite_adjacency(&im);
        assert_eq!(adj.n(), 2);
        assert_eq!(adj.row_indices(0), &[1]);
        assert_eq!(adj.row_weights(0), &[1.0]);
        assert_eq!(adj.row_weights(1), &[1.0]);
    }

    #[test]
    fn shared_item_splits_weight_by_root_degree() {
        // u1 and u2 both linked to i1: weight(u1, i1) = 1/√(1·2).
        let im = InteractionMatrix::new(2, 1, vec![(0, 0), (1, 0)]).unwrap();
        let adj = bipartite_adjacency(&im);
        let w = adj.row_weights(0)[0];
        assert!((w - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn empty_edge_set_gives_zero_operator() {
        let adj = normalize_adjacency(4, &[]);
        assert_eq!(adj.nnz(), 0);
        let x = dense(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let y = adj.apply(&x);
        assert_eq!(y, Dense::zeros((4, 1)));
    }

    #[test]
    fn weights_invert_degree_product() {
        let adj = normalize_adjacency(5, &[(0, 1), (0, 2), (1, 2), (3, 1), (0, 4)]);
        let degree: Vec<usize> = (0..5).map(|i| adj.row_indices(i).len()).collect();
        for i in 0..5 {
            for (k, &j) in adj.row_indices(i).iter().enumerate() {
                let w = adj.row_weights(i)[k];
                let prod = (degree[i] * degree[j as usize]) as f64;
                assert!((w * prod.sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicate_and_self_loop_pairs_collapse() {
        let adj = normalize_adjacency(3, &[(0, 1), (1, 0), (2, 2), (0, 1)]);
        assert_eq!(adj.edge_count(), 1);
        assert_eq!(adj.nnz(), 2);
    }

    #[test]
    fn apply_matches_dense_reference() {
        let adj = normalize_adjacency(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let x = dense(&[&[1.0, -1.0], &[0.5, 2.0], &[3.0, 0.0], &[-2.0, 1.0]]);
        let reference = adj.to_dense().dot(&x);
        assert!(max_abs_diff(&adj.apply(&x), &reference) < 1e-12);
    }

    #[test]
    fn scaled_apply_and_transpose_agree_with_dense() {
        let adj = normalize_adjacency(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)]);
        let scale: Vec<f64> = (0..adj.nnz()).map(|k| 0.1 + 0.07 * k as f64).collect();
        let x = dense(&[&[1.0], &[2.0], &[-1.0], &[0.5]]);

        let mut m = Dense::zeros((4, 4));
        for i in 0..4 {
            for (k, &j) in adj.row_indices(i).iter().enumerate() {
                let base = adj.row_weights(i)[k];
                let offset = (0..i).map(|r| adj.row_indices(r).len()).sum::<usize>() + k;
                m[[i, j as usize]] = base * scale[offset];
            }
        }
        assert!(max_abs_diff(&adj.apply_scaled(&scale, &x), &m.dot(&x)) < 1e-12);
        assert!(max_abs_diff(&adj.apply_scaled_transpose(&scale, &x), &m.t().dot(&x)) < 1e-12);
    }

    #[test]
    fn filtering_renormalizes_surviving_structure() {
        let adj = normalize_adjacency(3, &[(0, 1), (1, 2)]);
        // Node 1 has degree 2, so weight(0,1) = 1/√2 before filtering.
        assert!((adj.row_weights(0)[0] - 1.0 / 2.0_f64.sqrt()).abs() < 1e-12);
        let kept = adj.filter_edges(|e| e == 0);
        assert_eq!(kept.nnz(), 2);
        assert_eq!(kept.row_weights(0), &[1.0]);
        assert!(kept.row_indices(2).is_empty());
        // Never adds edges: every kept entry exists in the original.
        for i in 0..3 {
            for &j in kept.row_indices(i) {
                assert!(adj.row_indices(i).contains(&j));
            }
        }
    }

    #[test]
    fn entry_edge_ids_pair_up_both_directions() {
        let adj = normalize_adjacency(3, &[(1, 0), (2, 1)]);
        // Edges sort to (0,1) → id 0 and (1,2) → id 1.
        assert_eq!(adj.row_edges(0), &[0]);
        assert_eq!(adj.row_edges(1), &[0, 1]);
        assert_eq!(adj.row_edges(2), &[1]);
    }
}
