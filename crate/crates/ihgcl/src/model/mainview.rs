//! LightGCN-style propagation over the user-item bipartite operator.
//!
//! Layers multiply by the normalized adjacency with no transforms or
//! nonlinearities; the readout is the arithmetic mean of layers 0..L, which
//! keeps the untouched layer-0 embedding in the mix and damps
//! oversmoothing.

use super::EmbeddingTable;
use crate::graph::SparseAdjacency;
use crate::tensor::{Dense, Tape, Var};

/// Propagated main-view embeddings E′, split back into blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MainViewOutput {
    pub user_emb: Dense,
    pub item_emb: Dense,
    pub layers: usize,
}

/// Tape version: propagate stacked user/item leaves `L` steps and mean the
/// layer sequence. Returns the user rows and item rows of the readout.
pub fn propagate_main_t<'g>(
    tape: &mut Tape<'g>,
    adj: &'g SparseAdjacency,
    users: Var,
    items: Var,
    layers: usize,
) -> (Var, Var) {
    let m = tape.value(users).nrows();
    let n = tape.value(items).nrows();
    assert_eq!(adj.n(), m + n, "operator size must equal M + N");

    let e0 = tape.concat_rows(users, items);
    let mut level = e0;
    let mut all = vec![e0];
    for _ in 0..layers {
        level = tape.spmm(adj, level);
        all.push(level);
    }
    let readout = tape.mean_pool_rows(&all);
    (tape.slice_rows(readout, 0, m), tape.slice_rows(readout, m, n))
}

/// Convenience wrapper over a throwaway tape for evaluation snapshots.
pub fn propagate_main(
    adj: &SparseAdjacency,
    table: &EmbeddingTable,
    layers: usize,
) -> MainViewOutput {
    let mut tape = Tape::new();
    let users = tape.leaf(table.users.clone());
    let items = tape.leaf(table.items.clone());
    let (u, i) = propagate_main_t(&mut tape, adj, users, items, layers);
    MainViewOutput {
        user_emb: tape.value(u).clone(),
        item_emb: tape.value(i).clone(),
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bipartite_adjacency, InteractionMatrix};
    use crate::tensor::{dense, max_abs_diff};

    fn table_2x1() -> EmbeddingTable {
        EmbeddingTable {
            users: dense(&[&[2.0, 0.0]]),
            items: dense(&[&[0.0, 4.0]]),
            mask_token: dense(&[&[0.0, 0.0]]),
            d: 2,
        }
    }

    #[test]
    fn zero_layers_returns_initial_embeddings() {
        let im = InteractionMatrix::new(1, 1, vec![(0, 0)]).unwrap();
        let adj = bipartite_adjacency(&im);
        let out = propagate_main(&adj, &table_2x1(), 0);
        assert_eq!(out.user_emb, dense(&[&[2.0, 0.0]]));
        assert_eq!(out.item_emb, dense(&[&[0.0, 4.0]]));
    }

    #[test]
    fn two_node_two_layer_readout_is_weighted_mix() {
        // One user linked to one item: layer 1 swaps the rows, layer 2 swaps
        // back, so readout_u = (2·E⁰_u + E⁰_i)/3.
        let im = InteractionMatrix::new(1, 1, vec![(0, 0)]).unwrap();
        let adj = bipartite_adjacency(&im);
        let out = propagate_main(&adj, &table_2x1(), 2);
        let expected_u = dense(&[&[4.0 / 3.0, 4.0 / 3.0]]);
        let expected_i = dense(&[&[2.0 / 3.0, 8.0 / 3.0]]);
        assert!(max_abs_diff(&out.user_emb, &expected_u) < 1e-12);
        assert!(max_abs_diff(&out.item_emb, &expected_i) < 1e-12);
    }

    #[test]
    fn disconnected_user_keeps_a_third_of_itself() {
        // User 1 has no interactions: propagated layers are zero rows, so
        // the L = 2 readout is E⁰_u/3.
        let im = InteractionMatrix::new(2, 1, vec![(0, 0)]).unwrap();
        let adj = bipartite_adjacency(&im);
        let table = EmbeddingTable {
            users: dense(&[&[1.0], &[9.0]]),
            items: dense(&[&[5.0]]),
            mask_token: dense(&[&[0.0]]),
            d: 1,
        };
        let out = propagate_main(&adj, &table, 2);
        assert!((out.user_emb[[1, 0]] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn propagation_is_linear_in_the_table() {
        let im = InteractionMatrix::new(3, 4, vec![(0, 0), (0, 1), (1, 1), (2, 3)]).unwrap();
        let adj = bipartite_adjacency(&im);
        let base = EmbeddingTable::xavier(3, 4, 6, 11);
        let mut scaled = base.clone();
        scaled.users.mapv_inplace(|v| 2.5 * v);
        scaled.items.mapv_inplace(|v| 2.5 * v);

        let out1 = propagate_main(&adj, &base, 2);
        let out2 = propagate_main(&adj, &scaled, 2);
        assert!(max_abs_diff(&out2.user_emb, &out1.user_emb.mapv(|v| 2.5 * v)) < 1e-12);
        assert!(max_abs_diff(&out2.item_emb, &out1.item_emb.mapv(|v| 2.5 * v)) < 1e-12);
    }

    #[test]
    fn consistent_permutation_permutes_output() {
        let im = InteractionMatrix::new(3, 2, vec![(0, 0), (1, 1), (2, 0)]).unwrap();
        let adj = bipartite_adjacency(&im);
        let table = EmbeddingTable::xavier(3, 2, 4, 5);
        let out = propagate_main(&adj, &table, 2);

        // Swap users 0 and 2 everywhere.
        let im_p = InteractionMatrix::new(3, 2, vec![(2, 0), (1, 1), (0, 0)]).unwrap();
        let adj_p = bipartite_adjacency(&im_p);
        let mut table_p = table.clone();
        let r0 = table.users.row(0).to_owned();
        let r2 = table.users.row(2).to_owned();
        table_p.users.row_mut(0).assign(&r2);
        table_p.users.row_mut(2).assign(&r0);
        let out_p = propagate_main(&adj_p, &table_p, 2);

        assert!(max_abs_diff(
            &out.user_emb.row(0).to_owned().insert_axis(ndarray::Axis(0)),
            &out_p.user_emb.row(2).to_owned().insert_axis(ndarray::Axis(0))
        ) < 1e-12);
        assert!(max_abs_diff(&out.item_emb, &out_p.item_emb) < 1e-12);
    }
}
