//! User/item affinity graph construction (PCC, Jaccard, social) and the
//! pairwise user-item product graph used for the joint-vs-pairwise
//! comparison.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{RatingDataset, SocialEdges, TagAssignments};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entity {
    User,
    Item,
}

impl Entity {
    pub fn as_str(self) -> &'static str {
        match self {
            Entity::User => "user",
            Entity::Item => "item",
        }
    }
}

/// Similarity source for graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphSource {
    RatingPcc,
    TagJaccard,
    Social,
}

/// Symmetric sparse weighted graph over users or items. Each unordered
/// edge is stored once with its endpoints ordered `a < b`; adjacency lists
/// mirror every edge from both sides.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    pub entity: Entity,
    pub num_nodes: usize,
    edges: Vec<(u32, u32, f64)>,
    adjacency: Vec<Vec<(u32, f64)>>,
}

impl AffinityGraph {
    pub fn from_edges(entity: Entity, num_nodes: usize, edges: Vec<(u32, u32, f64)>) -> Self {
        let mut canon: Vec<(u32, u32, f64)> = edges
            .into_iter()
            .map(|(a, b, w)| {
                assert!(a != b, "self-edges are not allowed");
                assert!((a as usize) < num_nodes && (b as usize) < num_nodes);
                assert!((0.0..=1.0).contains(&w), "weight {w} out of [0,1]");
                (a.min(b), a.max(b), w)
            })
            .collect();
        canon.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        canon.dedup_by_key(|e| (e.0, e.1));
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b, w) in &canon {
            adjacency[a as usize].push((b, w));
            adjacency[b as usize].push((a, w));
        }
        AffinityGraph {
            entity,
            num_nodes,
            edges: canon,
            adjacency,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Unordered edges, endpoints ordered `a < b`, sorted.
    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, node: u32) -> &[(u32, f64)] {
        &self.adjacency[node as usize]
    }

    pub fn weight(&self, a: u32, b: u32) -> Option<f64> {
        self.adjacency[a as usize]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, w)| w)
    }

    /// Text edge-list dump: `entity num_nodes` header then `i k weight`
    /// lines with 9 significant digits.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{} {}", self.entity.as_str(), self.num_nodes).map_err(|e| Error::io(path, e))?;
        for &(a, b, w) in &self.edges {
            writeln!(f, "{a} {b} {:.8e}", w).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(f);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: path.into(),
            line: 1,
            msg: "empty graph file".into(),
        })?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: "expected `entity num_nodes` header".into(),
            });
        }
        let entity = match parts[0] {
            "user" => Entity::User,
            "item" => Entity::Item,
            other => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    msg: format!("unknown entity {other:?}"),
                })
            }
        };
        let num_nodes: usize = parts[1].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: 1,
            msg: "malformed node count".into(),
        })?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |msg: &str| Error::Parse {
                path: path.into(),
                line: lineno + 1,
                msg: msg.into(),
            };
            if parts.len() != 3 {
                return Err(parse_err("expected `i k weight`"));
            }
            let a: u32 = parts[0].parse().map_err(|_| parse_err("malformed node index"))?;
            let b: u32 = parts[1].parse().map_err(|_| parse_err("malformed node index"))?;
            let w: f64 = parts[2].parse().map_err(|_| parse_err("malformed weight"))?;
            edges.push((a, b, w));
        }
        Ok(AffinityGraph::from_edges(entity, num_nodes, edges))
    }
}

/// Sparse symmetric graph over user-item pair nodes, node `(i, j)` encoded
/// as `i * num_items + j`.
#[derive(Debug, Clone)]
pub struct PairwiseGraph {
    pub num_users: usize,
    pub num_items: usize,
    pub edges: Vec<(u32, u32, f64)>,
}

impl PairwiseGraph {
    pub fn node(&self, user: u32, item: u32) -> u32 {
        user * self.num_items as u32 + item
    }

    pub fn decode(&self, node: u32) -> (u32, u32) {
        (node / self.num_items as u32, node % self.num_items as u32)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users * self.num_items
    }
}

/// How to combine user and item similarity into a pairwise edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairwiseCombiner {
    Product,
    Min,
}

impl PairwiseCombiner {
    fn apply(self, w: f64, s: f64) -> f64 {
        match self {
            PairwiseCombiner::Product => w * s,
            PairwiseCombiner::Min => w.min(s),
        }
    }
}

/// Pearson correlation over co-rated coordinates only. Returns `None` when
/// the overlap is below `min_overlap` or either restricted vector has zero
/// variance.
pub fn pcc_similarity(
    ratings_a: &[(u32, f64)],
    ratings_b: &[(u32, f64)],
    min_overlap: usize,
) -> Option<f64> {
    let map_a: HashMap<u32, f64> = ratings_a.iter().copied().collect();
    let mut n = 0usize;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(ix, y) in ratings_b {
        if let Some(&x) = map_a.get(&ix) {
            n += 1;
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
    }
    if n < min_overlap || n == 0 {
        return None;
    }
    let n = n as f64;
    let cov = sxy - sx * sy / n;
    let var_x = sxx - sx * sx / n;
    let var_y = syy - sy * sy / n;
    if var_x <= 0.0 || var_y <= 0.0 {
        return None;
    }
    Some((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// |a ∩ b| / |a ∪ b|; both empty gives 0.
pub fn jaccard_similarity(set_a: &HashSet<u32>, set_b: &HashSet<u32>) -> f64 {
    let inter = set_a.intersection(set_b).count();
    let union = set_a.len() + set_b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Per-node top-k pruning followed by "either endpoint keeps it"
/// symmetrization. Candidates ranked by weight descending, neighbor index
/// ascending on ties.
fn prune_top_k(num_nodes: usize, candidates: &[(u32, u32, f64)], top_k: usize) -> Vec<(u32, u32, f64)> {
    let mut incident: Vec<Vec<(u32, f64)>> = vec![Vec::new(); num_nodes];
    for &(a, b, w) in candidates {
        incident[a as usize].push((b, w));
        incident[b as usize].push((a, w));
    }
    let mut kept: HashSet<(u32, u32)> = HashSet::new();
    for (node, list) in incident.iter_mut().enumerate() {
        list.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
        for &(other, _) in list.iter().take(top_k) {
            let a = (node as u32).min(other);
            let b = (node as u32).max(other);
            kept.insert((a, b));
        }
    }
    candidates
        .iter()
        .filter(|&&(a, b, _)| kept.contains(&(a, b)))
        .copied()
        .collect()
}

/// Build a user or item affinity graph from the requested source.
/// Rating-PCC weights are `max(PCC, 0)`; social edges get weight 1.
pub fn build_affinity_graph(
    ds: &RatingDataset,
    entity: Entity,
    source: GraphSource,
    min_overlap: usize,
    top_k: usize,
    social: Option<&SocialEdges>,
    tags: Option<&TagAssignments>,
) -> Result<AffinityGraph> {
    assert!(top_k >= 1);
    let num_nodes = match entity {
        Entity::User => ds.num_users,
        Entity::Item => ds.num_items,
    };
    let candidates: Vec<(u32, u32, f64)> = match source {
        GraphSource::Social => {
            if entity != Entity::User {
                return Err(Error::Config(
                    "social source is only defined for the user graph".into(),
                ));
            }
            let social = social
                .ok_or_else(|| Error::Config("social source requires social edges".into()))?;
            return Ok(AffinityGraph::from_edges(
                entity,
                num_nodes,
                social.edges.iter().map(|&(a, b)| (a, b, 1.0)).collect(),
            ));
        }
        GraphSource::RatingPcc => {
            let vectors = match entity {
                Entity::User => ds.by_user(),
                Entity::Item => ds.by_item(),
            };
            // enumerate only pairs that co-rate something
            let mut pairs: HashSet<(u32, u32)> = HashSet::new();
            let inverted = match entity {
                Entity::User => ds.by_item(),
                Entity::Item => ds.by_user(),
            };
            for group in &inverted {
                for (x, &(a, _)) in group.iter().enumerate() {
                    for &(b, _) in &group[x + 1..] {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
            let mut pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
            pairs.sort_unstable();
            pairs
                .into_iter()
                .filter_map(|(a, b)| {
                    pcc_similarity(&vectors[a as usize], &vectors[b as usize], min_overlap)
                        .filter(|&r| r > 0.0)
                        .map(|r| (a, b, r))
                })
                .collect()
        }
        GraphSource::TagJaccard => {
            if entity != Entity::Item {
                return Err(Error::Config(
                    "tag-jaccard source is only defined for the item graph".into(),
                ));
            }
            let tags = tags
                .ok_or_else(|| Error::Config("tag-jaccard source requires tag assignments".into()))?;
            if tags.tags.len() != num_nodes {
                return Err(Error::Dimension(format!(
                    "tag table covers {} items, dataset has {num_nodes}",
                    tags.tags.len()
                )));
            }
            // pairs sharing at least one tag
            let mut by_tag: HashMap<u32, Vec<u32>> = HashMap::new();
            for (j, set) in tags.tags.iter().enumerate() {
                for &t in set {
                    by_tag.entry(t).or_default().push(j as u32);
                }
            }
            let mut pairs: HashSet<(u32, u32)> = HashSet::new();
            for items in by_tag.values() {
                for (x, &a) in items.iter().enumerate() {
                    for &b in &items[x + 1..] {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
            let mut pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
            pairs.sort_unstable();
            pairs
                .into_iter()
                .filter_map(|(a, b)| {
                    let w = jaccard_similarity(&tags.tags[a as usize], &tags.tags[b as usize]);
                    (w > 0.0).then_some((a, b, w))
                })
                .collect()
        }
    };
    let pruned = prune_top_k(num_nodes, &candidates, top_k);
    Ok(AffinityGraph::from_edges(entity, num_nodes, pruned))
}

/// Build the U-I pairwise graph from joint user and item graphs. Every
/// user edge crossed with every item edge (plus unit self-similarities for
/// same-user or same-item combinations) yields pairwise edges between
/// distinct pair nodes.
pub fn build_pairwise_graph(
    g_user: &AffinityGraph,
    g_item: &AffinityGraph,
    combiner: PairwiseCombiner,
    ds: &RatingDataset,
) -> Result<PairwiseGraph> {
    if g_user.num_nodes != ds.num_users || g_item.num_nodes != ds.num_items {
        return Err(Error::Dimension(format!(
            "graphs ({} users, {} items) do not match dataset ({}, {})",
            g_user.num_nodes, g_item.num_nodes, ds.num_users, ds.num_items
        )));
    }
    let num_items = ds.num_items as u32;
    let node = |i: u32, j: u32| i * num_items + j;
    let mut edges = Vec::new();
    // same item: ((i,j),(k,j)) with item self-similarity 1
    for &(i, k, w) in g_user.edges() {
        for j in 0..num_items {
            edges.push((node(i, j), node(k, j), combiner.apply(w, 1.0)));
        }
    }
    // same user: ((i,j),(i,o)) with user self-similarity 1
    for &(j, o, s) in g_item.edges() {
        for i in 0..ds.num_users as u32 {
            edges.push((node(i, j), node(i, o), combiner.apply(1.0, s)));
        }
    }
    // diagonal combinations
    for &(i, k, w) in g_user.edges() {
        for &(j, o, s) in g_item.edges() {
            let p = combiner.apply(w, s);
            edges.push((node(i, j), node(k, o), p));
            edges.push((node(i, o), node(k, j), p));
        }
    }
    let edges = edges
        .into_iter()
        .map(|(a, b, w)| (a.min(b), a.max(b), w))
        .collect();
    Ok(PairwiseGraph {
        num_users: ds.num_users,
        num_items: ds.num_items,
        edges,
    })
}
