//! Confidence-decayed rating smoothness: hop distances to labeled
//! evidence, the active smoothness triple sets, and the energy functions
//! the trainer regularizes with.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::affinity::{AffinityGraph, Entity, PairwiseGraph};
use crate::dataset::RatingDataset;
use crate::error::{Error, Result};
use crate::model::FactorModel;

const INDEX_DUMP_VERSION: u32 = 1;

/// Hop distances from each node to the nearest labeled evidence, stored
/// sparsely up to `d_max`. For users, `distance(i, j)` is the hop count on
/// the user graph from user `i` to the nearest rater of item `j`; absent
/// means farther than `d_max`.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    pub entity: Entity,
    pub d_max: usize,
    /// Indexed by the opposite entity (items for a user table), mapping
    /// node index to hop count.
    tables: Vec<HashMap<u32, u32>>,
}

impl DistanceTable {
    pub fn distance(&self, node: u32, opposite: u32) -> Option<u32> {
        self.tables[opposite as usize].get(&node).copied()
    }
}

/// Confidence decay for evidence `d` hops away.
pub fn confidence(d: u32, alpha: f64) -> f64 {
    alpha.powi(d as i32 + 1)
}

/// Multi-source BFS per opposite index: for each item (user-entity case)
/// the traversal is seeded at all its raters and truncated at `d_max`.
pub fn label_distances(graph: &AffinityGraph, ds: &RatingDataset, d_max: usize) -> DistanceTable {
    let (num_opposite, seeds_by_opposite) = match graph.entity {
        Entity::User => (ds.num_items, ds.by_item()),
        Entity::Item => (ds.num_users, ds.by_user()),
    };
    let tables: Vec<HashMap<u32, u32>> = (0..num_opposite)
        .into_par_iter()
        .map(|opp| {
            let mut dist: HashMap<u32, u32> = HashMap::new();
            let mut frontier: Vec<u32> = Vec::new();
            for &(node, _) in &seeds_by_opposite[opp] {
                dist.insert(node, 0);
                frontier.push(node);
            }
            let mut depth = 0u32;
            while !frontier.is_empty() && (depth as usize) < d_max {
                depth += 1;
                let mut next = Vec::new();
                for &node in &frontier {
                    for &(nb, _) in graph.neighbors(node) {
                        if !dist.contains_key(&nb) {
                            dist.insert(nb, depth);
                            next.push(nb);
                        }
                    }
                }
                frontier = next;
            }
            dist
        })
        .collect();
    DistanceTable {
        entity: graph.entity,
        d_max,
        tables,
    }
}

/// One active smoothness term: graph edge `(a, b)` with a context node from
/// the opposite entity, its decayed confidence, and the edge weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothTriple {
    pub a: u32,
    pub b: u32,
    pub context: u32,
    pub confidence: f64,
    pub weight: f64,
}

/// Materialized smoothness terms for both graphs, enumerated once before
/// training.
#[derive(Debug, Clone)]
pub struct SmoothnessIndex {
    pub alpha: f64,
    pub epsilon_conf: f64,
    /// `None` when no propagation depth survives the confidence floor.
    pub d_max: Option<usize>,
    /// `(i, k, j, c, W_ik)`: user edge, item context.
    pub user_triples: Vec<SmoothTriple>,
    /// `(j, o, i, c, S_jo)`: item edge, user context.
    pub item_triples: Vec<SmoothTriple>,
}

/// Propagation depth at which confidence falls below `epsilon_conf`,
/// hard-capped at 6 so the traversal stays bounded as alpha approaches 1.
pub fn propagation_depth(alpha: f64, epsilon_conf: f64) -> Option<usize> {
    assert!((0.0..=1.0).contains(&alpha));
    assert!(epsilon_conf > 0.0);
    if alpha == 0.0 {
        return None;
    }
    if alpha >= 1.0 {
        return Some(6);
    }
    let raw = (epsilon_conf.ln() / alpha.ln()).floor() as i64 - 1;
    if raw < 0 {
        None
    } else {
        Some(raw.min(6) as usize)
    }
}

/// Enumerate active smoothness triples: for each user edge `(i, k)` and
/// each item `j` with `min(d_ij, d_kj) <= d_max`, the confidence is
/// `alpha^(min+1)`; item side symmetric.
pub fn build_smoothness_index(
    g_user: &AffinityGraph,
    g_item: &AffinityGraph,
    ds: &RatingDataset,
    alpha: f64,
    epsilon_conf: f64,
) -> SmoothnessIndex {
    let d_max = propagation_depth(alpha, epsilon_conf);
    let Some(d_max) = d_max else {
        return SmoothnessIndex {
            alpha,
            epsilon_conf,
            d_max: None,
            user_triples: Vec::new(),
            item_triples: Vec::new(),
        };
    };
    let user_dist = label_distances(g_user, ds, d_max);
    let item_dist = label_distances(g_item, ds, d_max);

    let enumerate = |graph: &AffinityGraph, dist: &DistanceTable, num_ctx: usize| {
        let mut triples = Vec::new();
        for ctx in 0..num_ctx as u32 {
            for &(a, b, w) in graph.edges() {
                let da = dist.distance(a, ctx);
                let db = dist.distance(b, ctx);
                let d = match (da, db) {
                    (Some(x), Some(y)) => x.min(y),
                    (Some(x), None) => x,
                    (None, Some(y)) => y,
                    (None, None) => continue,
                };
                if d as usize > d_max {
                    continue;
                }
                triples.push(SmoothTriple {
                    a,
                    b,
                    context: ctx,
                    confidence: confidence(d, alpha),
                    weight: w,
                });
            }
        }
        triples
    };

    SmoothnessIndex {
        alpha,
        epsilon_conf,
        d_max: Some(d_max),
        user_triples: enumerate(g_user, &user_dist, ds.num_items),
        item_triples: enumerate(g_item, &item_dist, ds.num_users),
    }
}

impl SmoothnessIndex {
    /// Version-tagged binary dump for reuse across runs.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let werr = |e| Error::io(path, e);
        w.write_all(&INDEX_DUMP_VERSION.to_le_bytes()).map_err(werr)?;
        w.write_all(&self.alpha.to_le_bytes()).map_err(werr)?;
        w.write_all(&self.epsilon_conf.to_le_bytes()).map_err(werr)?;
        let d = self.d_max.map_or(-1i64, |x| x as i64);
        w.write_all(&d.to_le_bytes()).map_err(werr)?;
        for list in [&self.user_triples, &self.item_triples] {
            w.write_all(&(list.len() as u64).to_le_bytes()).map_err(werr)?;
            for t in list.iter() {
                w.write_all(&t.a.to_le_bytes()).map_err(werr)?;
                w.write_all(&t.b.to_le_bytes()).map_err(werr)?;
                w.write_all(&t.context.to_le_bytes()).map_err(werr)?;
                w.write_all(&t.confidence.to_le_bytes()).map_err(werr)?;
                w.write_all(&t.weight.to_le_bytes()).map_err(werr)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let rerr = |e| Error::io(path, e);
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u32buf).map_err(rerr)?;
        let version = u32::from_le_bytes(u32buf);
        if version != INDEX_DUMP_VERSION {
            return Err(Error::Config(format!(
                "unsupported index dump version {version}"
            )));
        }
        r.read_exact(&mut u64buf).map_err(rerr)?;
        let alpha = f64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf).map_err(rerr)?;
        let epsilon_conf = f64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf).map_err(rerr)?;
        let d = i64::from_le_bytes(u64buf);
        let d_max = if d < 0 { None } else { Some(d as usize) };
        let mut lists = Vec::with_capacity(2);
        for _ in 0..2 {
            r.read_exact(&mut u64buf).map_err(rerr)?;
            let n = u64::from_le_bytes(u64buf) as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut u32buf).map_err(rerr)?;
                let a = u32::from_le_bytes(u32buf);
                r.read_exact(&mut u32buf).map_err(rerr)?;
                let b = u32::from_le_bytes(u32buf);
                r.read_exact(&mut u32buf).map_err(rerr)?;
                let context = u32::from_le_bytes(u32buf);
                r.read_exact(&mut u64buf).map_err(rerr)?;
                let confidence = f64::from_le_bytes(u64buf);
                r.read_exact(&mut u64buf).map_err(rerr)?;
                let weight = f64::from_le_bytes(u64buf);
                list.push(SmoothTriple {
                    a,
                    b,
                    context,
                    confidence,
                    weight,
                });
            }
            lists.push(list);
        }
        let item_triples = lists.pop().unwrap();
        let user_triples = lists.pop().unwrap();
        Ok(SmoothnessIndex {
            alpha,
            epsilon_conf,
            d_max,
            user_triples,
            item_triples,
        })
    }
}

/// User rating smoothness energy: sum over user triples of
/// `c * W_ik * (U_i'V_j - U_k'V_j)^2`.
pub fn energy_user(index: &SmoothnessIndex, model: &FactorModel) -> f64 {
    index
        .user_triples
        .iter()
        .map(|t| {
            let ri = model.score(t.a, t.context);
            let rk = model.score(t.b, t.context);
            t.confidence * t.weight * (ri - rk).powi(2)
        })
        .sum()
}

/// Item rating smoothness energy: sum over item triples of
/// `c * S_jo * (U_i'V_j - U_i'V_o)^2`.
pub fn energy_item(index: &SmoothnessIndex, model: &FactorModel) -> f64 {
    index
        .item_triples
        .iter()
        .map(|t| {
            let rj = model.score(t.context, t.a);
            let ro = model.score(t.context, t.b);
            t.confidence * t.weight * (rj - ro).powi(2)
        })
        .sum()
}

/// Joint smoothness energy `(lambda_f/2) E_U + (lambda_g/2) E_V`.
pub fn energy_joint(index: &SmoothnessIndex, model: &FactorModel, lambda_f: f64, lambda_g: f64) -> f64 {
    let eu = if lambda_f > 0.0 { energy_user(index, model) } else { 0.0 };
    let ev = if lambda_g > 0.0 { energy_item(index, model) } else { 0.0 };
    lambda_f / 2.0 * eu + lambda_g / 2.0 * ev
}

/// Pairwise smoothness energy `(lambda_p/2) sum P (r_ij - r_ko)^2`.
pub fn energy_pairwise(pg: &PairwiseGraph, model: &FactorModel, lambda_p: f64) -> f64 {
    if lambda_p == 0.0 {
        return 0.0;
    }
    let sum: f64 = pg
        .edges
        .iter()
        .map(|&(na, nb, p)| {
            let (i, j) = pg.decode(na);
            let (k, o) = pg.decode(nb);
            p * (model.score(i, j) - model.score(k, o)).powi(2)
        })
        .sum();
    lambda_p / 2.0 * sum
}
