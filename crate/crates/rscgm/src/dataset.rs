//! Rating, social and tag file ingestion, cross-validation folds and
//! sparsity sampling.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether ratings are real-valued or binary presence indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingMode {
    Explicit,
    Implicit,
}

/// Supported rating file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingFormat {
    /// Tab-separated with a header line (hetrec2011 dumps).
    HetrecTsv,
    /// `user::item::rating` records (classic MovieLens).
    MovielensColons,
    /// Comma, space or tab separated, no header required.
    GenericCsv,
}

/// Stable external-id to dense-index mapping, first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(&ix) = self.index.get(id) {
            return ix;
        }
        let ix = self.ids.len() as u32;
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), ix);
        ix
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: u32) -> &str {
        &self.ids[index as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One observed (user, item, rating) triple with dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: f64,
}

/// Sparse user-item rating data with stable vocabularies.
#[derive(Debug, Clone)]
pub struct RatingDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub triples: Vec<Rating>,
    pub mode: RatingMode,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
    /// Count of duplicate (user, item) records discarded during loading.
    pub duplicates_dropped: usize,
}

impl RatingDataset {
    /// Build a dataset from already-indexed triples (vocabularies get
    /// synthetic ids). Duplicate pairs keep the last occurrence.
    pub fn from_triples(
        num_users: usize,
        num_items: usize,
        triples: Vec<(u32, u32, f64)>,
        mode: RatingMode,
    ) -> Self {
        let mut user_ids = IdMap::new();
        for i in 0..num_users {
            user_ids.intern(&format!("u{i}"));
        }
        let mut item_ids = IdMap::new();
        for j in 0..num_items {
            item_ids.intern(&format!("i{j}"));
        }
        let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
        let mut out: Vec<Rating> = Vec::with_capacity(triples.len());
        let mut dupes = 0;
        for (user, item, value) in triples {
            assert!((user as usize) < num_users && (item as usize) < num_items);
            let value = match mode {
                RatingMode::Explicit => value,
                RatingMode::Implicit => 1.0,
            };
            match seen.get(&(user, item)) {
                Some(&pos) => {
                    out[pos].value = value;
                    dupes += 1;
                }
                None => {
                    seen.insert((user, item), out.len());
                    out.push(Rating { user, item, value });
                }
            }
        }
        RatingDataset {
            num_users,
            num_items,
            triples: out,
            mode,
            user_ids,
            item_ids,
            duplicates_dropped: dupes,
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Per-user lists of (item, rating), in triple order.
    pub fn by_user(&self) -> Vec<Vec<(u32, f64)>> {
        let mut out = vec![Vec::new(); self.num_users];
        for r in &self.triples {
            out[r.user as usize].push((r.item, r.value));
        }
        out
    }

    /// Per-item lists of (user, rating), in triple order.
    pub fn by_item(&self) -> Vec<Vec<(u32, f64)>> {
        let mut out = vec![Vec::new(); self.num_items];
        for r in &self.triples {
            out[r.item as usize].push((r.user, r.value));
        }
        out
    }

    pub fn global_mean(&self) -> f64 {
        if self.triples.is_empty() {
            return 0.0;
        }
        self.triples.iter().map(|r| r.value).sum::<f64>() / self.triples.len() as f64
    }

    /// Write the dataset as generic-csv (`user,item,rating` lines).
    pub fn save_generic_csv(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.triples {
            writeln!(
                f,
                "{},{},{}",
                self.user_ids.id(r.user),
                self.item_ids.id(r.item),
                r.value
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Undirected user-user edges, each unordered pair stored once.
#[derive(Debug, Clone, Default)]
pub struct SocialEdges {
    pub edges: Vec<(u32, u32)>,
}

/// Per-item tag sets plus optional topic vectors used as item prior means.
#[derive(Debug, Clone, Default)]
pub struct TagAssignments {
    pub tags: Vec<HashSet<u32>>,
    pub topics: Option<Vec<Vec<f64>>>,
}

impl TagAssignments {
    pub fn validate_topics(&self, k: usize) -> Result<()> {
        if let Some(topics) = &self.topics {
            for (j, t) in topics.iter().enumerate() {
                if t.len() != k {
                    return Err(Error::Dimension(format!(
                        "topic vector for item {j} has length {}, expected {k}",
                        t.len()
                    )));
                }
                if t.iter().any(|&x| x < 0.0) {
                    return Err(Error::Config(format!(
                        "topic vector for item {j} has a negative entry"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One train/test split out of a k-fold partition.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub train: RatingDataset,
    pub test: RatingDataset,
    pub fold_index: usize,
}

fn split_record(line: &str, format: RatingFormat) -> Vec<&str> {
    match format {
        RatingFormat::MovielensColons => line.split("::").collect(),
        RatingFormat::HetrecTsv => line.split('\t').collect(),
        RatingFormat::GenericCsv => line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect(),
    }
}

/// Load a rating file. Dense reindexing follows first-seen order; duplicate
/// (user, item) records keep the last occurrence and bump a counter.
pub fn load_ratings(path: &Path, format: RatingFormat, mode: RatingMode) -> Result<RatingDataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);

    let mut user_ids = IdMap::new();
    let mut item_ids = IdMap::new();
    let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
    let mut triples: Vec<Rating> = Vec::new();
    let mut dupes = 0usize;

    let skip_header = matches!(format, RatingFormat::HetrecTsv);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 && skip_header {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields = split_record(line, format);
        let min_fields = match mode {
            RatingMode::Explicit => 3,
            RatingMode::Implicit => 2,
        };
        if fields.len() < min_fields {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                msg: format!("expected at least {min_fields} fields, got {}", fields.len()),
            });
        }
        let value = match mode {
            RatingMode::Implicit => 1.0,
            RatingMode::Explicit => fields[2].parse::<f64>().map_err(|_| Error::Parse {
                path: path.into(),
                line: lineno + 1,
                msg: format!("malformed rating {:?}", fields[2]),
            })?,
        };
        let user = user_ids.intern(fields[0]);
        let item = item_ids.intern(fields[1]);
        match seen.get(&(user, item)) {
            Some(&pos) => {
                triples[pos].value = value;
                dupes += 1;
            }
            None => {
                seen.insert((user, item), triples.len());
                triples.push(Rating { user, item, value });
            }
        }
    }

    if triples.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 0,
            msg: "no rating records found".into(),
        });
    }

    Ok(RatingDataset {
        num_users: user_ids.len(),
        num_items: item_ids.len(),
        triples,
        mode,
        user_ids,
        item_ids,
        duplicates_dropped: dupes,
    })
}

/// Load user-user pairs; undirected dedup, self-loops dropped. When a
/// vocabulary is supplied, unknown user ids are an error; otherwise ids are
/// interned first-seen.
pub fn load_social(path: &Path, vocab: Option<&IdMap>) -> Result<SocialEdges> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);

    let mut own = IdMap::new();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        // hetrec social files carry a "userID friendID" header
        if lineno == 0 && line.starts_with("userID") {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                msg: "expected a user-id pair".into(),
            });
        }
        let resolve = |own: &mut IdMap, id: &str| -> Result<u32> {
            match vocab {
                Some(v) => v.get(id).ok_or_else(|| Error::UnknownId(id.to_string())),
                None => Ok(own.intern(id)),
            }
        };
        let a = resolve(&mut own, fields[0])?;
        let b = resolve(&mut own, fields[1])?;
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    Ok(SocialEdges { edges })
}

/// Load per-item tag assignments (`item_id tag_id` lines). Items are
/// resolved against the dataset vocabulary; unknown items are skipped,
/// matching hetrec dumps that tag items without ratings.
pub fn load_tags(path: &Path, items: &IdMap) -> Result<TagAssignments> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut tag_ids = IdMap::new();
    let mut tags = vec![HashSet::new(); items.len()];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.chars().next().is_some_and(|c| c.is_alphabetic()))
        {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                msg: "expected item-id tag-id".into(),
            });
        }
        if let Some(j) = items.get(fields[0]) {
            let t = tag_ids.intern(fields[1]);
            tags[j as usize].insert(t);
        }
    }
    Ok(TagAssignments { tags, topics: None })
}

/// Load per-item topic vectors (`item_id v1 .. vK` lines) into a
/// `TagAssignments` usable as CMF item prior means.
pub fn load_topics(path: &Path, items: &IdMap, k: usize) -> Result<TagAssignments> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut topics = vec![vec![0.0; k]; items.len()];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != k + 1 {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                msg: format!("expected item id plus {k} values, got {} fields", fields.len()),
            });
        }
        let j = items
            .get(fields[0])
            .ok_or_else(|| Error::UnknownId(fields[0].to_string()))?;
        for (d, s) in fields[1..].iter().enumerate() {
            topics[j as usize][d] = s.parse::<f64>().map_err(|_| Error::Parse {
                path: path.into(),
                line: lineno + 1,
                msg: format!("malformed value {s:?}"),
            })?;
        }
    }
    Ok(TagAssignments {
        tags: vec![HashSet::new(); items.len()],
        topics: Some(topics),
    })
}

/// Remove `round(len * remove_fraction)` triples uniformly at random.
/// Vocabularies are kept so factor shapes stay fixed across sparsity levels.
pub fn sample_ratings(ds: &RatingDataset, remove_fraction: f64, seed: u64) -> RatingDataset {
    assert!((0.0..1.0).contains(&remove_fraction));
    let n_remove = (ds.len() as f64 * remove_fraction).round() as usize;
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut removed: Vec<bool> = vec![false; ds.len()];
    for &ix in indices.iter().take(n_remove) {
        removed[ix] = true;
    }
    let triples = ds
        .triples
        .iter()
        .enumerate()
        .filter(|(ix, _)| !removed[*ix])
        .map(|(_, r)| *r)
        .collect();
    RatingDataset {
        triples,
        ..ds.clone()
    }
}

/// Drop every triple of users with more than `max_ratings_per_user` ratings.
pub fn sample_users(ds: &RatingDataset, max_ratings_per_user: usize) -> RatingDataset {
    assert!(max_ratings_per_user >= 1);
    let mut counts = vec![0usize; ds.num_users];
    for r in &ds.triples {
        counts[r.user as usize] += 1;
    }
    let triples = ds
        .triples
        .iter()
        .filter(|r| counts[r.user as usize] <= max_ratings_per_user)
        .copied()
        .collect();
    RatingDataset {
        triples,
        ..ds.clone()
    }
}

/// Partition triples into k near-equal folds; fold i's test set is group i.
pub fn kfold(ds: &RatingDataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if k > ds.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds the number of observed ratings ({})",
            ds.len()
        )));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let mut group = vec![0usize; ds.len()];
    for (pos, &ix) in indices.iter().enumerate() {
        group[ix] = pos % k;
    }

    let mut folds = Vec::with_capacity(k);
    for fold_index in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (ix, r) in ds.triples.iter().enumerate() {
            if group[ix] == fold_index {
                test.push(*r);
            } else {
                train.push(*r);
            }
        }
        folds.push(FoldSplit {
            train: RatingDataset {
                triples: train,
                ..ds.clone()
            },
            test: RatingDataset {
                triples: test,
                ..ds.clone()
            },
            fold_index,
        });
    }
    Ok(folds)
}
