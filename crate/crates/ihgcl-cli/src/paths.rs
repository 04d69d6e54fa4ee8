//! Meta-path command-line syntax.
//!
//! `--meta-paths` takes `user1,user2;item1,item2`. Each token is either a
//! compact code string like `UATAU` (single letters, the uppercased first
//! character of each node type name) or dash-separated node type names like
//! `user-artist-tag-artist-user`. Every adjacent pair of node types must
//! resolve to exactly one declared relation, traversed backwards when the
//! chain arrives at its destination side.

use anyhow::{anyhow, bail, Result};
use ihgcl::graph::HeteroGraph;
use std::collections::BTreeMap;

#[derive(Debug)]
pub struct ParsedPaths {
    pub user_chains: [Vec<String>; 2],
    pub item_chains: [Vec<String>; 2],
    pub user_type: String,
    pub item_type: String,
    /// The user-item relation the recommendation signal lives in.
    pub interaction: String,
}

pub fn parse_meta_paths(
    g: &HeteroGraph,
    text: &str,
    interaction: Option<&str>,
) -> Result<ParsedPaths> {
    let (user_part, item_part) = text
        .split_once(';')
        .ok_or_else(|| anyhow!("expected `user1,user2;item1,item2`, missing `;` in `{text}`"))?;
    let [u1, u2] = two_tokens(user_part, "user")?;
    let [i1, i2] = two_tokens(item_part, "item")?;

    let user_seqs = [type_sequence(g, u1)?, type_sequence(g, u2)?];
    let item_seqs = [type_sequence(g, i1)?, type_sequence(g, i2)?];

    let user_type = endpoint_type(&user_seqs, "user")?;
    let item_type = endpoint_type(&item_seqs, "item")?;
    if user_type == item_type {
        bail!("user-side and item-side meta-paths both start at `{user_type}`");
    }

    let interaction = match interaction {
        Some(name) => {
            let rel = g.relation(name)?;
            let connects = (rel.src == user_type && rel.dst == item_type)
                || (rel.src == item_type && rel.dst == user_type);
            if !connects {
                bail!(
                    "relation `{name}` connects `{}`–`{}`, not `{user_type}`–`{item_type}`",
                    rel.src,
                    rel.dst
                );
            }
            name.to_string()
        }
        None => g.relation_between(&user_type, &item_type)?.name.clone(),
    };

    Ok(ParsedPaths {
        user_chains: [
            relation_chain(g, &user_seqs[0])?,
            relation_chain(g, &user_seqs[1])?,
        ],
        item_chains: [
            relation_chain(g, &item_seqs[0])?,
            relation_chain(g, &item_seqs[1])?,
        ],
        user_type,
        item_type,
        interaction,
    })
}

fn two_tokens<'a>(part: &'a str, side: &str) -> Result<[&'a str; 2]> {
    let tokens: Vec<&str> = part.split(',').map(str::trim).collect();
    match tokens[..] {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok([a, b]),
        _ => bail!("the {side} side needs exactly two comma-separated meta-paths, got `{part}`"),
    }
}

fn type_sequence(g: &HeteroGraph, token: &str) -> Result<Vec<String>> {
    let seq: Vec<String> = if token.contains('-') {
        token.split('-').map(str::to_string).collect()
    } else {
        let mut codes = BTreeMap::new();
        for (name, _) in g.node_types() {
            let code = name
                .chars()
                .next()
                .expect("node type names are non-empty")
                .to_ascii_uppercase();
            if codes.insert(code, name.clone()).is_some() {
                bail!(
                    "two node types share the code `{code}`; \
                     spell the path with dashes, e.g. `{}`",
                    g.node_types()
                        .iter()
                        .map(|(n, _)| n.as_str())
                        .collect::<Vec<_>>()
                        .join("-")
                );
            }
        }
        token
            .chars()
            .map(|c| {
                codes
                    .get(&c.to_ascii_uppercase())
                    .cloned()
                    .ok_or_else(|| anyhow!("unknown node type code `{c}` in `{token}`"))
            })
            .collect::<Result<_>>()?
    };
    for ty in &seq {
        g.node_count(ty)
            .map_err(|_| anyhow!("unknown node type `{ty}` in `{token}`"))?;
    }
    if seq.len() < 2 {
        bail!("meta-path `{token}` needs at least two node types");
    }
    if seq.first() != seq.last() {
        bail!(
            "meta-path `{token}` must start and end on the same node type \
             (got `{}` and `{}`)",
            seq.first().expect("non-empty"),
            seq.last().expect("non-empty")
        );
    }
    Ok(seq)
}

fn endpoint_type(seqs: &[Vec<String>; 2], side: &str) -> Result<String> {
    let a = seqs[0].first().expect("validated non-empty");
    let b = seqs[1].first().expect("validated non-empty");
    if a != b {
        bail!("the two {side}-side meta-paths start at `{a}` and `{b}`; they must agree");
    }
    Ok(a.clone())
}

fn relation_chain(g: &HeteroGraph, types: &[String]) -> Result<Vec<String>> {
    let mut chain = Vec::with_capacity(types.len() - 1);
    for w in types.windows(2) {
        let (x, y) = (&w[0], &w[1]);
        let mut candidates = Vec::new();
        for rel in g.relations() {
            if rel.src == *x && rel.dst == *y {
                candidates.push(rel.name.clone());
            } else if rel.src == *y && rel.dst == *x {
                candidates.push(format!("~{}", rel.name));
            }
        }
        match candidates.len() {
            0 => bail!("no declared relation connects `{x}`–`{y}`"),
            1 => chain.push(candidates.remove(0)),
            _ => bail!(
                "several relations connect `{x}`–`{y}` ({}); \
                 this syntax cannot disambiguate them",
                candidates.join(", ")
            ),
        }
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ihgcl::graph::{generate_synth, SynthConfig};

    fn graph() -> HeteroGraph {
        generate_synth(&SynthConfig {
            users: 12,
            artists: 18,
            tags: 3,
            groups: 3,
            listens_per_user: (3, 5),
            friends_per_user: 2,
            similars_per_artist: 2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn compact_and_dash_forms_parse_identically() {
        let g = graph();
        let a = parse_meta_paths(&g, "UU,UATAU;AA,ATA", None).unwrap();
        let b = parse_meta_paths(
            &g,
            "user-user,user-artist-tag-artist-user;artist-artist,artist-tag-artist",
            None,
        )
        .unwrap();
        assert_eq!(a.user_chains, b.user_chains);
        assert_eq!(a.item_chains, b.item_chains);
        assert_eq!(a.interaction, "listens");
        assert_eq!(a.user_type, "user");
        assert_eq!(a.item_type, "artist");
    }

    #[test]
    fn chains_are_oriented_from_the_path_start() {
        let g = graph();
        let p = parse_meta_paths(&g, "UU,UATAU;AA,ATA", None).unwrap();
        assert_eq!(p.user_chains[0], ["friend"]);
        assert_eq!(
            p.user_chains[1],
            ["listens", "tagged", "~tagged", "~listens"]
        );
        assert_eq!(p.item_chains[0], ["similar"]);
        assert_eq!(p.item_chains[1], ["tagged", "~tagged"]);
    }

    #[test]
    fn arity_and_shape_errors_are_reported() {
        let g = graph();
        for bad in [
            "UU;AA,ATA",
            "UU,UATAU,UAU;AA,ATA",
            "UU,UATAU",
            "UA,UATAU;AA,ATA",
            "XX,UU;AA,ATA",
        ] {
            assert!(parse_meta_paths(&g, bad, None).is_err(), "`{bad}` parsed");
        }
    }

    #[test]
    fn sides_must_not_share_an_endpoint_type() {
        let g = graph();
        assert!(parse_meta_paths(&g, "UU,UAU;UU,UAU", None).is_err());
    }

    #[test]
    fn explicit_interaction_must_connect_the_endpoint_types() {
        let g = graph();
        assert!(parse_meta_paths(&g, "UU,UATAU;AA,ATA", Some("friend")).is_err());
        let p = parse_meta_paths(&g, "UU,UATAU;AA,ATA", Some("listens")).unwrap();
        assert_eq!(p.interaction, "listens");
    }
}
