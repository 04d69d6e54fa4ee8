//! Heterogeneous graph schema, the user-item interaction matrix, and the
//! sparse operators built from them.
//!
//! A dataset is a set of typed node populations plus named relations between
//! them. The recommendation signal lives in one designated user-item
//! relation; the remaining relations only matter through the meta-path
//! subgraphs composed in [`metapath`].

pub mod adjacency;
pub mod dataset;
pub mod metapath;
pub mod synth;

pub use adjacency::{
    bipartite_adjacency, normalize_adjacency, subgraph_adjacency, SparseAdjacency,
};
pub use dataset::{
    carve_validation, load_hetero_graph, save_hetero_graph, split_interactions, Pairs,
};
pub use metapath::{
    compose_metapath, select_model_subgraphs, MetaPathSpec, MetaPathSubgraph, ModelSubgraphs,
};
pub use synth::{generate_synth, synth_meta_path_chains, SynthConfig};

use crate::error::{Error, Result};
use std::collections::HashSet;

/// One named, typed edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    /// Source node type name.
    pub src: String,
    /// Destination node type name.
    pub dst: String,
    /// Directed edges as (src index, dst index). Relations between a type
    /// and itself are traversed in both directions wherever they appear in
    /// a meta-path.
    pub edges: Vec<(u32, u32)>,
}

/// A validated multi-type graph: node populations plus relations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeteroGraph {
    node_types: Vec<(String, usize)>,
    relations: Vec<Relation>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| !c.is_control() && !matches!(c, '/' | '\\' | '\t'))
}

impl HeteroGraph {
    /// Validate and assemble a graph. Node types are kept in sorted order so
    /// that serialization is canonical regardless of insertion order.
    pub fn new(
        mut node_types: Vec<(String, usize)>,
        relations: Vec<Relation>,
    ) -> Result<Self> {
        node_types.sort_by(|a, b| a.0.cmp(&b.0));
        for w in node_types.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!("duplicate node type `{}`", w[0].0)));
            }
        }
        for (name, _) in &node_types {
            if !valid_name(name) {
                return Err(Error::Config(format!("invalid node type name `{name}`")));
            }
        }

        let count_of = |ty: &str| -> Result<usize> {
            node_types
                .iter()
                .find(|(name, _)| name == ty)
                .map(|&(_, n)| n)
                .ok_or_else(|| Error::UnknownNodeType(ty.to_string()))
        };

        let mut seen_names = HashSet::new();
        for rel in &relations {
            if !valid_name(&rel.name) {
                return Err(Error::Config(format!("invalid relation name `{}`", rel.name)));
            }
            if !seen_names.insert(rel.name.clone()) {
                return Err(Error::Config(format!("duplicate relation `{}`", rel.name)));
            }
            let ns = count_of(&rel.src)?;
            let nd = count_of(&rel.dst)?;
            let mut seen_edges = HashSet::with_capacity(rel.edges.len());
            for &(s, d) in &rel.edges {
                if s as usize >= ns {
                    return Err(Error::Config(format!(
                        "relation `{}`: source index {s} out of range (type `{}` has {ns} nodes)",
                        rel.name, rel.src
                    )));
                }
                if d as usize >= nd {
                    return Err(Error::Config(format!(
                        "relation `{}`: destination index {d} out of range (type `{}` has {nd} nodes)",
                        rel.name, rel.dst
                    )));
                }
                if !seen_edges.insert((s, d)) {
                    return Err(Error::Config(format!(
                        "relation `{}`: duplicate edge ({s}, {d})",
                        rel.name
                    )));
                }
            }
        }

        Ok(HeteroGraph {
            node_types,
            relations,
        })
    }

    /// Node type names with their population sizes, in canonical order.
    pub fn node_types(&self) -> &[(String, usize)] {
        &self.node_types
    }

    pub fn node_count(&self, ty: &str) -> Result<usize> {
        self.node_types
            .iter()
            .find(|(name, _)| name == ty)
            .map(|&(_, n)| n)
            .ok_or_else(|| Error::UnknownNodeType(ty.to_string()))
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        self.relations
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    /// Copy of the graph with one relation's edge list replaced and the
    /// whole structure re-validated.
    pub fn with_relation_edges(&self, name: &str, edges: Vec<(u32, u32)>) -> Result<HeteroGraph> {
        self.relation(name)?;
        let relations = self
            .relations
            .iter()
            .map(|r| {
                if r.name == name {
                    Relation {
                        edges: edges.clone(),
                        ..r.clone()
                    }
                } else {
                    r.clone()
                }
            })
            .collect();
        HeteroGraph::new(self.node_types.clone(), relations)
    }

    /// More than two node types and relations combined.
    pub fn is_heterogeneous(&self) -> bool {
        self.node_types.len() + self.relations.len() > 2
    }

    /// The unique relation connecting two node types (in either direction).
    /// Errors when none or several qualify; the caller should then name the
    /// relation explicitly.
    pub fn relation_between(&self, a: &str, b: &str) -> Result<&Relation> {
        let mut found: Option<&Relation> = None;
        for rel in &self.relations {
            let hit = (rel.src == a && rel.dst == b) || (rel.src == b && rel.dst == a);
            if hit {
                if let Some(prev) = found {
                    return Err(Error::Config(format!(
                        "both `{}` and `{}` connect `{a}` and `{b}`; name one explicitly",
                        prev.name, rel.name
                    )));
                }
                found = Some(rel);
            }
        }
        found.ok_or_else(|| Error::Config(format!("no relation connects `{a}` and `{b}`")))
    }
}

/// The user-item implicit-feedback matrix with adjacency in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    users: usize,
    items: usize,
    pairs: Vec<(u32, u32)>,
    user_ptr: Vec<usize>,
    user_items: Vec<u32>,
    item_ptr: Vec<usize>,
    item_users: Vec<u32>,
}

impl InteractionMatrix {
    /// Build from (user, item) pairs; duplicates collapse to one observation.
    pub fn new(users: usize, items: usize, mut pairs: Vec<(u32, u32)>) -> Result<Self> {
        for &(u, i) in &pairs {
            if u as usize >= users {
                return Err(Error::NodeOutOfRange {
                    node: u as usize,
                    size: users,
                });
            }
            if i as usize >= items {
                return Err(Error::NodeOutOfRange {
                    node: i as usize,
                    size: items,
                });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut user_ptr = vec![0usize; users + 1];
        for &(u, _) in &pairs {
            user_ptr[u as usize + 1] += 1;
        }
        for u in 0..users {
            user_ptr[u + 1] += user_ptr[u];
        }
        let user_items: Vec<u32> = pairs.iter().map(|&(_, i)| i).collect();

        let mut item_ptr = vec![0usize; items + 1];
        for &(_, i) in &pairs {
            item_ptr[i as usize + 1] += 1;
        }
        for i in 0..items {
            item_ptr[i + 1] += item_ptr[i];
        }
        let mut cursor = item_ptr.clone();
        let mut item_users = vec![0u32; pairs.len()];
        for &(u, i) in &pairs {
            item_users[cursor[i as usize]] = u;
            cursor[i as usize] += 1;
        }

        Ok(InteractionMatrix {
            users,
            items,
            pairs,
            user_ptr,
            user_items,
            item_ptr,
            item_users,
        })
    }

    /// Extract interactions from a graph relation, oriented user → item.
    pub fn from_graph(
        g: &HeteroGraph,
        relation: &str,
        user_type: &str,
        item_type: &str,
    ) -> Result<Self> {
        let rel = g.relation(relation)?;
        let users = g.node_count(user_type)?;
        let items = g.node_count(item_type)?;
        let pairs: Vec<(u32, u32)> = if rel.src == user_type && rel.dst == item_type {
            rel.edges.clone()
        } else if rel.src == item_type && rel.dst == user_type {
            rel.edges.iter().map(|&(i, u)| (u, i)).collect()
        } else {
            return Err(Error::Config(format!(
                "relation `{relation}` connects `{}`-`{}`, not `{user_type}`-`{item_type}`",
                rel.src, rel.dst
            )));
        };
        InteractionMatrix::new(users, items, pairs)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    /// Number of distinct observed pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All pairs, sorted by (user, item).
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Items observed for a user, ascending.
    pub fn items_of(&self, user: usize) -> &[u32] {
        &self.user_items[self.user_ptr[user]..self.user_ptr[user + 1]]
    }

    /// Users observed for an item, ascending.
    pub fn users_of(&self, item: usize) -> &[u32] {
        &self.item_users[self.item_ptr[item]..self.item_ptr[item + 1]]
    }

    pub fn degree(&self, user: usize) -> usize {
        self.user_ptr[user + 1] - self.user_ptr[user]
    }

    pub fn has(&self, user: usize, item: u32) -> bool {
        self.items_of(user).binary_search(&item).is_ok()
    }
}
