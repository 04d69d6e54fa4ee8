//! Deterministic generator for a small heterogeneous listening dataset.
//!
//! The generated graph mimics the shape of a music-listening platform: users
//! listen to artists, befriend each other, artists carry tags and similarity
//! links. Artists are partitioned into interest groups and every user follows
//! a two-group taste profile, so the graph has recoverable low-rank structure;
//! the noise knobs blur each relation independently, which is what makes the
//! dataset useful for exercising denoising components end to end.

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, Relation};
use crate::rng::stream;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Size and noise knobs for the synthetic listening graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub users: usize,
    pub artists: usize,
    pub tags: usize,
    /// Number of latent interest groups artists are partitioned into.
    pub groups: usize,
    /// Inclusive range of listen counts per user.
    pub listens_per_user: (usize, usize),
    /// Probability that a listen ignores the user's taste profile entirely.
    pub listen_noise: f64,
    /// Probability that an on-profile listen targets the secondary group.
    pub secondary_share: f64,
    /// Friendship edges drawn per user.
    pub friends_per_user: usize,
    /// Probability that a friendship ignores the group structure.
    pub friend_noise: f64,
    /// Similarity edges drawn per artist.
    pub similars_per_artist: usize,
    /// Probability that a similarity edge ignores the group structure.
    pub similar_noise: f64,
    /// Probability that an artist's tag is scrambled to a random one.
    pub tag_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            users: 700,
            artists: 900,
            tags: 36,
            groups: 36,
            listens_per_user: (12, 20),
            listen_noise: 0.3,
            secondary_share: 0.3,
            friends_per_user: 4,
            friend_noise: 0.1,
            similars_per_artist: 4,
            similar_noise: 0.1,
            tag_noise: 0.05,
        }
    }
}

impl SynthConfig {
    /// Reject configurations that cannot produce a well-formed graph.
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.artists == 0 || self.tags == 0 {
            return Err(Error::Config(
                "synthetic graph needs at least one user, artist, and tag".into(),
            ));
        }
        if self.groups == 0 || self.groups > self.artists {
            return Err(Error::Config(format!(
                "group count must be in 1..={} (got {})",
                self.artists, self.groups
            )));
        }
        let (lo, hi) = self.listens_per_user;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "listens_per_user range ({lo}, {hi}) must satisfy 1 <= lo <= hi"
            )));
        }
        if hi >= self.artists {
            return Err(Error::Config(format!(
                "listens_per_user upper bound {hi} must be below the artist count {}",
                self.artists
            )));
        }
        if self.friends_per_user >= self.users && self.users > 1 {
            return Err(Error::Config(format!(
                "friends_per_user {} must be below the user count {}",
                self.friends_per_user, self.users
            )));
        }
        if self.similars_per_artist >= self.artists && self.artists > 1 {
            return Err(Error::Config(format!(
                "similars_per_artist {} must be below the artist count {}",
                self.similars_per_artist, self.artists
            )));
        }
        for (name, p) in [
            ("listen_noise", self.listen_noise),
            ("secondary_share", self.secondary_share),
            ("friend_noise", self.friend_noise),
            ("similar_noise", self.similar_noise),
            ("tag_noise", self.tag_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "{name} must be a probability in [0, 1] (got {p})"
                )));
            }
        }
        Ok(())
    }
}

/// Relation chains matching the generated schema, as
/// (user view 1, user view 2, artist view 1, artist view 2).
pub fn synth_meta_path_chains() -> [Vec<String>; 4] {
    let chain = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
    [
        chain(&["friend"]),
        chain(&["listens", "tagged", "~tagged", "~listens"]),
        chain(&["similar"]),
        chain(&["tagged", "~tagged"]),
    ]
}

fn fill_distinct(
    rng: &mut ChaCha12Rng,
    want: usize,
    exclude: Option<u32>,
    what: &str,
    mut candidate: impl FnMut(&mut ChaCha12Rng) -> u32,
) -> Result<BTreeSet<u32>> {
    let mut set = BTreeSet::new();
    for _ in 0..200 * want.max(1) {
        if set.len() == want {
            break;
        }
        let c = candidate(rng);
        if Some(c) != exclude {
            set.insert(c);
        }
    }
    if set.len() < want {
        return Err(Error::Config(format!(
            "could not draw {want} distinct {what}; the candidate pool is too \
             small for the requested degree"
        )));
    }
    Ok(set)
}

/// Generate the full heterogeneous graph described by `cfg`.
pub fn generate_synth(cfg: &SynthConfig) -> Result<HeteroGraph> {
    cfg.validate()?;
    let groups = cfg.groups;
    let group_of_artist = |a: u32| a as usize % groups;
    let mut artists_of_group = vec![Vec::new(); groups];
    for a in 0..cfg.artists as u32 {
        artists_of_group[group_of_artist(a)].push(a);
    }

    let mut profile_rng = stream(cfg.seed, "synth-profile");
    let mut primary = Vec::with_capacity(cfg.users);
    let mut secondary = Vec::with_capacity(cfg.users);
    for _ in 0..cfg.users {
        let p = profile_rng.gen_range(0..groups);
        let mut s = p;
        while groups > 1 && s == p {
            s = profile_rng.gen_range(0..groups);
        }
        primary.push(p);
        secondary.push(s);
    }
    let mut users_of_group = vec![Vec::new(); groups];
    for (u, &g) in primary.iter().enumerate() {
        users_of_group[g].push(u as u32);
    }

    let mut listens = Vec::new();
    let mut listen_rng = stream(cfg.seed, "synth-listens");
    let (lo, hi) = cfg.listens_per_user;
    for u in 0..cfg.users as u32 {
        let n = listen_rng.gen_range(lo..=hi);
        let set = fill_distinct(&mut listen_rng, n, None, "listens", |rng| {
            if rng.gen::<f64>() < cfg.listen_noise {
                rng.gen_range(0..cfg.artists as u32)
            } else {
                let g = if rng.gen::<f64>() < cfg.secondary_share {
                    secondary[u as usize]
                } else {
                    primary[u as usize]
                };
                let pool = &artists_of_group[g];
                pool[rng.gen_range(0..pool.len())]
            }
        })?;
        listens.extend(set.into_iter().map(|a| (u, a)));
    }

    let mut friends = Vec::new();
    let mut friend_rng = stream(cfg.seed, "synth-friends");
    if cfg.users > 1 {
        for u in 0..cfg.users as u32 {
            let pool = &users_of_group[primary[u as usize]];
            let has_peer = pool.iter().any(|&v| v != u);
            let set = fill_distinct(&mut friend_rng, cfg.friends_per_user, Some(u), "friends", |rng| {
                if has_peer && rng.gen::<f64>() >= cfg.friend_noise {
                    pool[rng.gen_range(0..pool.len())]
                } else {
                    rng.gen_range(0..cfg.users as u32)
                }
            })?;
            friends.extend(set.into_iter().map(|v| (u, v)));
        }
    }

    let mut similars = Vec::new();
    let mut similar_rng = stream(cfg.seed, "synth-similar");
    if cfg.artists > 1 {
        for a in 0..cfg.artists as u32 {
            let pool = &artists_of_group[group_of_artist(a)];
            let has_peer = pool.iter().any(|&b| b != a);
            let set = fill_distinct(
                &mut similar_rng,
                cfg.similars_per_artist,
                Some(a),
                "similar artists",
                |rng| {
                    if has_peer && rng.gen::<f64>() >= cfg.similar_noise {
                        pool[rng.gen_range(0..pool.len())]
                    } else {
                        rng.gen_range(0..cfg.artists as u32)
                    }
                },
            )?;
            similars.extend(set.into_iter().map(|b| (a, b)));
        }
    }

    let mut tagged = Vec::new();
    let mut tag_rng = stream(cfg.seed, "synth-tags");
    for a in 0..cfg.artists as u32 {
        let tag = if tag_rng.gen::<f64>() < cfg.tag_noise {
            tag_rng.gen_range(0..cfg.tags as u32)
        } else {
            (group_of_artist(a) % cfg.tags) as u32
        };
        tagged.push((a, tag));
    }

    HeteroGraph::new(
        vec![
            ("user".to_string(), cfg.users),
            ("artist".to_string(), cfg.artists),
            ("tag".to_string(), cfg.tags),
        ],
        vec![
            Relation {
                name: "listens".to_string(),
                src: "user".to_string(),
                dst: "artist".to_string(),
                edges: listens,
            },
            Relation {
                name: "friend".to_string(),
                src: "user".to_string(),
                dst: "user".to_string(),
                edges: friends,
            },
            Relation {
                name: "similar".to_string(),
                src: "artist".to_string(),
                dst: "artist".to_string(),
                edges: similars,
            },
            Relation {
                name: "tagged".to_string(),
                src: "artist".to_string(),
                dst: "tag".to_string(),
                edges: tagged,
            },
        ],
    )
}
