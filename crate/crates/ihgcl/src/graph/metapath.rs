//! Meta-path specs and their composition into same-type subgraphs.
//!
//! A meta-path is a typed chain like user–artist–tag–artist–user. Composing
//! it over a heterogeneous graph yields a homogeneous subgraph on the
//! endpoint type: two nodes are linked iff at least one path instance
//! connects them. Path counts are binarized — multiplicity would distort the
//! degree normalization later — the diagonal is dropped, and the edge set is
//! symmetrized.

use super::{HeteroGraph, Relation};
use crate::error::{Error, Result};

const MAX_HOPS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Step {
    relation: String,
    forward: bool,
}

/// A validated typed relation chain with equal endpoint types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPathSpec {
    name: String,
    types: Vec<String>,
    steps: Vec<Step>,
}

impl MetaPathSpec {
    /// Parse either the compact letter form (`"UATAU"`, one uppercase
    /// initial per node type) or the dash form
    /// (`"user-artist-tag-artist-user"`). Both resolve each adjacent type
    /// pair to the unique relation connecting those types.
    pub fn parse(g: &HeteroGraph, text: &str) -> Result<Self> {
        let type_names: Vec<String> = if text.contains('-') {
            text.split('-').map(str::to_string).collect()
        } else {
            let mut by_code = std::collections::HashMap::new();
            for (name, _) in g.node_types() {
                let code = name
                    .chars()
                    .next()
                    .map(|c| c.to_ascii_uppercase())
                    .unwrap_or('?');
                if by_code.insert(code, name.clone()).is_some() {
                    return Err(Error::MetaPath {
                        spec: text.to_string(),
                        reason: format!(
                            "node-type initial `{code}` is ambiguous; use the dashed form"
                        ),
                    });
                }
            }
            text.chars()
                .map(|c| {
                    by_code
                        .get(&c.to_ascii_uppercase())
                        .cloned()
                        .ok_or_else(|| Error::MetaPath {
                            spec: text.to_string(),
                            reason: format!("no node type starts with `{c}`"),
                        })
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::from_types(g, text, &type_names)
    }

    fn from_types(g: &HeteroGraph, name: &str, type_names: &[String]) -> Result<Self> {
        require_heterogeneous(g)?;
        if type_names.len() < 2 {
            return Err(Error::MetaPath {
                spec: name.to_string(),
                reason: "a meta-path needs at least two node types".to_string(),
            });
        }
        if type_names.len() - 1 > MAX_HOPS {
            return Err(Error::MetaPath {
                spec: name.to_string(),
                reason: format!(
                    "{} hops exceed the {MAX_HOPS}-hop limit",
                    type_names.len() - 1
                ),
            });
        }
        for ty in type_names {
            g.node_count(ty)?;
        }
        let mut steps = Vec::with_capacity(type_names.len() - 1);
        for w in type_names.windows(2) {
            let rel = g.relation_between(&w[0], &w[1]).map_err(|e| Error::MetaPath {
                spec: name.to_string(),
                reason: format!("link `{}`–`{}`: {e}", w[0], w[1]),
            })?;
            steps.push(Step {
                relation: rel.name.clone(),
                forward: rel.src == w[0],
            });
        }
        Ok(MetaPathSpec {
            name: name.to_string(),
            types: type_names.to_vec(),
            steps,
        })
    }

    /// Build from an explicit relation-name chain, e.g. `["U-M", "M-U"]`.
    /// A leading `~` traverses a relation from destination to source. This
    /// form disambiguates graphs where several relations connect the same
    /// pair of types.
    pub fn from_relation_chain(g: &HeteroGraph, names: &[&str]) -> Result<Self> {
        require_heterogeneous(g)?;
        let display = names.join(",");
        if names.is_empty() {
            return Err(Error::MetaPath {
                spec: display,
                reason: "empty relation chain".to_string(),
            });
        }
        if names.len() > MAX_HOPS {
            return Err(Error::MetaPath {
                spec: display,
                reason: format!("{} hops exceed the {MAX_HOPS}-hop limit", names.len()),
            });
        }

        let mut types: Vec<String> = Vec::with_capacity(names.len() + 1);
        let mut steps = Vec::with_capacity(names.len());
        for raw in names {
            let (explicit_reverse, rel_name) = match raw.strip_prefix('~') {
                Some(rest) => (true, rest),
                None => (false, *raw),
            };
            let rel = g.relation(rel_name)?;
            let forward = if explicit_reverse {
                false
            } else {
                match types.last() {
                    None => true,
                    Some(cur) if *cur == rel.src => true,
                    Some(cur) if *cur == rel.dst => false,
                    Some(cur) => {
                        return Err(Error::MetaPath {
                            spec: display.clone(),
                            reason: format!(
                                "link `{rel_name}` connects `{}`–`{}` but the chain is at `{cur}`",
                                rel.src, rel.dst
                            ),
                        })
                    }
                }
            };
            let (from, to) = if forward {
                (&rel.src, &rel.dst)
            } else {
                (&rel.dst, &rel.src)
            };
            if let Some(cur) = types.last() {
                if cur != from {
                    return Err(Error::MetaPath {
                        spec: display.clone(),
                        reason: format!(
                            "link `{raw}` starts at `{from}` but the chain is at `{cur}`"
                        ),
                    });
                }
            } else {
                types.push(from.clone());
            }
            types.push(to.clone());
            steps.push(Step {
                relation: rel.name.clone(),
                forward,
            });
        }
        Ok(MetaPathSpec {
            name: display,
            types,
            steps,
        })
    }

    /// Display name as given at parse time.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Node type sequence along the path.
    pub fn types(&self) -> &[String] {
        &self.types
    }

    /// Type of the first node in the chain.
    pub fn start_type(&self) -> &str {
        &self.types[0]
    }

    /// Type of the last node in the chain.
    pub fn end_type(&self) -> &str {
        &self.types[self.types.len() - 1]
    }

    pub fn hops(&self) -> usize {
        self.steps.len()
    }
}

fn require_heterogeneous(g: &HeteroGraph) -> Result<()> {
    if g.is_heterogeneous() {
        Ok(())
    } else {
        Err(Error::NotHeterogeneous {
            node_types: g.node_types().len(),
            relations: g.relations().len(),
        })
    }
}

/// Homogeneous subgraph induced by one meta-path: nodes of the endpoint
/// type, undirected deduplicated edges, and one retention logit per edge
/// (zero until trained, i.e. keep-probability ½).
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathSubgraph {
    name: String,
    node_type: String,
    n: usize,
    edges: Vec<(u32, u32)>,
    edge_logits: Vec<f64>,
}

impl MetaPathSubgraph {
    /// Rebuild a subgraph from a stored edge list. Edges must be strictly
    /// ascending (low, high) pairs with low < high < n; logits start at zero.
    pub fn from_edges(
        name: &str,
        node_type: &str,
        n: usize,
        edges: Vec<(u32, u32)>,
    ) -> Result<Self> {
        for (idx, &(a, b)) in edges.iter().enumerate() {
            if a >= b {
                return Err(Error::MetaPath {
                    spec: name.to_string(),
                    reason: format!("edge {idx} ({a}, {b}) is not an ascending pair"),
                });
            }
            if b as usize >= n {
                return Err(Error::MetaPath {
                    spec: name.to_string(),
                    reason: format!("edge {idx} ({a}, {b}) exceeds the node count {n}"),
                });
            }
            if idx > 0 && edges[idx - 1] >= (a, b) {
                return Err(Error::MetaPath {
                    spec: name.to_string(),
                    reason: format!("edge list is not sorted and unique at position {idx}"),
                });
            }
        }
        Ok(MetaPathSubgraph {
            name: name.to_string(),
            node_type: node_type.to_string(),
            n,
            edge_logits: vec![0.0; edges.len()],
            edges,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_type(&self) -> &str {
        &self.node_type
    }

    /// Node count of the endpoint type.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Unique undirected edges as (low, high) pairs in ascending order; the
    /// position of a pair in this list is its edge id.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Initial retention logits, one per edge, all zero.
    pub fn edge_logits(&self) -> &[f64] {
        &self.edge_logits
    }

    /// Neighbors of a node with the ids of the connecting edges.
    pub fn neighbors(&self, node: u32) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if a == node {
                out.push((b, e as u32));
            } else if b == node {
                out.push((a, e as u32));
            }
        }
        out
    }
}

/// Adjacency lists for one step of a chain. Relations between a type and
/// itself are traversed as undirected regardless of declared orientation.
fn step_adjacency(g: &HeteroGraph, rel: &Relation, forward: bool) -> Vec<Vec<u32>> {
    let src_n = g.node_count(if forward { &rel.src } else { &rel.dst }).unwrap();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); src_n];
    let self_relation = rel.src == rel.dst;
    for &(s, d) in &rel.edges {
        if self_relation {
            adj[s as usize].push(d);
            adj[d as usize].push(s);
        } else if forward {
            adj[s as usize].push(d);
        } else {
            adj[d as usize].push(s);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Boolean chain product: reach[i] = union of b[m] over m ∈ a[i].
fn chain(a: &[Vec<u32>], b: &[Vec<u32>]) -> Vec<Vec<u32>> {
    a.iter()
        .map(|mids| {
            let mut out: Vec<u32> = Vec::new();
            for &m in mids {
                out.extend_from_slice(&b[m as usize]);
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Compose a meta-path over the graph into its endpoint-type subgraph.
pub fn compose_metapath(g: &HeteroGraph, spec: &MetaPathSpec) -> Result<MetaPathSubgraph> {
    require_heterogeneous(g)?;
    if spec.start_type() != spec.end_type() {
        return Err(Error::MetaPath {
            spec: spec.name.clone(),
            reason: format!(
                "endpoints `{}` and `{}` differ; subgraphs need a round trip",
                spec.start_type(),
                spec.end_type()
            ),
        });
    }

    let mut reach: Option<Vec<Vec<u32>>> = None;
    for step in &spec.steps {
        let rel = g.relation(&step.relation)?;
        let hop = step_adjacency(g, rel, step.forward);
        reach = Some(match reach {
            None => hop,
            Some(prev) => chain(&prev, &hop),
        });
    }

    let reach = reach.expect("validated chains are non-empty");
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (i, targets) in reach.iter().enumerate() {
        let i = i as u32;
        for &j in targets {
            if i != j {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let n = g.node_count(spec.start_type())?;
    Ok(MetaPathSubgraph {
        name: spec.name.clone(),
        node_type: spec.start_type().to_string(),
        n,
        edge_logits: vec![0.0; edges.len()],
        edges,
    })
}

/// The four subgraphs the model trains on: two user views, two item views.
#[derive(Debug, Clone)]
pub struct ModelSubgraphs {
    pub user: [MetaPathSubgraph; 2],
    pub item: [MetaPathSubgraph; 2],
    /// Non-fatal observations, e.g. duplicated view specs.
    pub warnings: Vec<String>,
}

/// Compose and validate the model's 2+2 views. Specs must have the expected
/// endpoint types; duplicated specs are accepted with a warning since the
/// contrast between identical views degenerates.
pub fn select_model_subgraphs(
    g: &HeteroGraph,
    user_specs: &[MetaPathSpec],
    item_specs: &[MetaPathSpec],
    user_type: &str,
    item_type: &str,
) -> Result<ModelSubgraphs> {
    if user_specs.len() != 2 || item_specs.len() != 2 {
        return Err(Error::Config(format!(
            "expected 2 user and 2 item meta-paths, got {} and {}",
            user_specs.len(),
            item_specs.len()
        )));
    }
    let mut warnings = Vec::new();
    for (specs, expected, side) in [
        (user_specs, user_type, "user"),
        (item_specs, item_type, "item"),
    ] {
        for spec in specs {
            if spec.start_type() != expected || spec.end_type() != expected {
                return Err(Error::Config(format!(
                    "{side}-side meta-path `{}` has endpoints `{}`/`{}`, expected `{expected}`",
                    spec.name(),
                    spec.start_type(),
                    spec.end_type()
                )));
            }
        }
        if specs[0] == specs[1] {
            warnings.push(format!(
                "both {side}-side views use `{}`; their contrast degenerates",
                specs[0].name()
            ));
        }
    }

    Ok(ModelSubgraphs {
        user: [
            compose_metapath(g, &user_specs[0])?,
            compose_metapath(g, &user_specs[1])?,
        ],
        item: [
            compose_metapath(g, &item_specs[0])?,
            compose_metapath(g, &item_specs[1])?,
        ],
        warnings,
    })
}
