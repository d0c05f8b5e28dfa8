//! Rating and ranking metrics plus the cross-validated method comparison
//! harness with JSON, table and CSV outputs.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::affinity::{
    build_affinity_graph, build_pairwise_graph, AffinityGraph, Entity, GraphSource,
    PairwiseCombiner,
};
use crate::baselines::{fit_icf, train_bmf, train_harmonic_ssl, train_lfr, Predictor};
use crate::dataset::{kfold, sample_ratings, RatingDataset, RatingMode, SocialEdges, TagAssignments};
use crate::error::{Error, Result};
use crate::model::{train, train_pairwise, Hyperparameters};

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} actuals",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Config("cannot compute MAE of an empty set".into()));
    }
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / predicted.len() as f64)
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} actuals",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Config("cannot compute RMSE of an empty set".into()));
    }
    Ok((predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / predicted.len() as f64)
        .sqrt())
}

/// Precision keeps `m` in the denominator even when fewer than `m` items
/// were recommendable; recall divides by the relevant-set size.
pub fn precision_recall_at_m(
    recommended: &[u32],
    relevant: &HashSet<u32>,
    m: usize,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    if relevant.is_empty() {
        return Err(Error::Config("relevant set is empty".into()));
    }
    let hits = recommended
        .iter()
        .take(m)
        .filter(|j| relevant.contains(j))
        .count() as f64;
    Ok((hits / m as f64, hits / relevant.len() as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub num_predictions: usize,
}

/// Score every test triple and summarize the errors.
pub fn evaluate_rating_model(
    predictor: &dyn Predictor,
    test: &RatingDataset,
) -> Result<RatingMetrics> {
    let mut predicted = Vec::with_capacity(test.len());
    let mut actual = Vec::with_capacity(test.len());
    for r in &test.triples {
        predicted.push(predictor.predict_score(r.user, r.item));
        actual.push(r.value);
    }
    Ok(RatingMetrics {
        mae: mae(&predicted, &actual)?,
        rmse: rmse(&predicted, &actual)?,
        num_predictions: predicted.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub precision: f64,
    pub recall: f64,
    pub users_evaluated: usize,
    /// Users skipped because no test item passed the liked threshold.
    pub users_excluded: usize,
}

/// Top-m ranking quality averaged over users. Candidates are the items the
/// user has not rated in training; a test item counts as liked when its
/// value reaches `like_threshold` (implicit data: every test item).
pub fn evaluate_ranking_model(
    predictor: &dyn Predictor,
    train_ds: &RatingDataset,
    test: &RatingDataset,
    m: usize,
    like_threshold: f64,
) -> Result<RankingMetrics> {
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let mut rated_in_train = vec![HashSet::new(); train_ds.num_users];
    for r in &train_ds.triples {
        rated_in_train[r.user as usize].insert(r.item);
    }
    let mut liked = vec![HashSet::new(); test.num_users];
    for r in &test.triples {
        let is_liked = match test.mode {
            RatingMode::Explicit => r.value >= like_threshold,
            RatingMode::Implicit => true,
        };
        if is_liked {
            liked[r.user as usize].insert(r.item);
        }
    }
    let mut psum = 0.0;
    let mut rsum = 0.0;
    let mut users_evaluated = 0;
    let mut users_excluded = 0;
    for u in 0..train_ds.num_users {
        if liked[u].is_empty() {
            users_excluded += 1;
            continue;
        }
        let mut scored: Vec<(u32, f64)> = (0..train_ds.num_items as u32)
            .filter(|j| !rated_in_train[u].contains(j))
            .map(|j| (j, predictor.predict_score(u as u32, j)))
            .collect();
        scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
        let recs: Vec<u32> = scored.into_iter().take(m).map(|(j, _)| j).collect();
        let (p, r) = precision_recall_at_m(&recs, &liked[u], m)?;
        psum += p;
        rsum += r;
        users_evaluated += 1;
    }
    if users_evaluated == 0 {
        return Err(Error::Config(
            "no user has a liked item in the test set".into(),
        ));
    }
    Ok(RankingMetrics {
        precision: psum / users_evaluated as f64,
        recall: rsum / users_evaluated as f64,
        users_evaluated,
        users_excluded,
    })
}

/// Methods the comparison harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Joint graph-smoothed factorization.
    Rscgm,
    /// Pairwise-graph variant of the same model.
    RscgmPairwise,
    /// Plain weighted factorization.
    Bmf,
    /// User-graph factor-Laplacian regularization.
    Ulfr,
    /// User and item factor-Laplacian regularization.
    Uilfr,
    /// Item-neighborhood weighted average.
    Icf,
    /// Per-user harmonic label propagation.
    Harmonic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rscgm => "rscgm",
            Method::RscgmPairwise => "rscgm-pairwise",
            Method::Bmf => "bmf",
            Method::Ulfr => "ulfr",
            Method::Uilfr => "uilfr",
            Method::Icf => "icf",
            Method::Harmonic => "harmonic",
        }
    }
}

fn default_folds() -> usize {
    5
}
fn default_like_threshold() -> f64 {
    4.0
}
fn default_min_overlap() -> usize {
    3
}
fn default_top_k() -> usize {
    50
}
fn default_icf_neighbors() -> usize {
    20
}
fn default_user_source() -> GraphSource {
    GraphSource::RatingPcc
}
fn default_item_source() -> GraphSource {
    GraphSource::RatingPcc
}
fn default_combiner() -> PairwiseCombiner {
    PairwiseCombiner::Product
}

/// Full comparison setup: which methods, which sparsity levels, how graphs
/// are built, and the shared hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub dataset: String,
    pub methods: Vec<Method>,
    /// Fractions of training ratings to remove, 0.0 meaning the full data.
    #[serde(default)]
    pub sparsity_levels: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default = "default_user_source")]
    pub user_graph_source: GraphSource,
    #[serde(default = "default_item_source")]
    pub item_graph_source: GraphSource,
    #[serde(default = "default_min_overlap")]
    pub min_overlap: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_combiner")]
    pub pairwise_combiner: PairwiseCombiner,
    #[serde(default = "default_icf_neighbors")]
    pub icf_neighbors: usize,
    /// Evaluate top-m ranking metrics as well when set.
    #[serde(default)]
    pub ranking_m: Option<usize>,
    #[serde(default = "default_like_threshold")]
    pub like_threshold: f64,
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        for &s in &self.sparsity_levels {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::Config(format!("sparsity level {s} outside [0, 1)")));
            }
        }
        self.hyperparameters.validate()
    }
}

/// One (sparsity, method, fold) measurement. Failed cells carry the error
/// text instead of metrics so one bad configuration cannot sink the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub sparsity: f64,
    pub method: String,
    pub fold: usize,
    pub metrics: BTreeMap<String, f64>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean metric values over folds for one (sparsity, method) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub sparsity: f64,
    pub method: String,
    pub metrics: BTreeMap<String, f64>,
    pub folds_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ComparisonConfig,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
}

fn fold_metrics(
    method: Method,
    train_ds: &RatingDataset,
    test: &RatingDataset,
    gu: &AffinityGraph,
    gi: &AffinityGraph,
    cfg: &ComparisonConfig,
) -> Result<BTreeMap<String, f64>> {
    let hp = &cfg.hyperparameters;
    let predictor: Box<dyn Predictor> = match method {
        Method::Rscgm => Box::new(train(train_ds, gu, gi, hp, None, None)?.0),
        Method::RscgmPairwise => {
            let pg = build_pairwise_graph(gu, gi, cfg.pairwise_combiner, train_ds)?;
            let hp = Hyperparameters {
                lambda_p: if hp.lambda_p > 0.0 { hp.lambda_p } else { hp.lambda_f },
                ..hp.clone()
            };
            Box::new(train_pairwise(train_ds, &pg, &hp, None, None)?.0)
        }
        Method::Bmf => Box::new(train_bmf(train_ds, hp, None, None)?.0),
        Method::Ulfr => Box::new(train_lfr(train_ds, Some(gu), None, hp, None, None)?.0),
        Method::Uilfr => Box::new(train_lfr(train_ds, Some(gu), Some(gi), hp, None, None)?.0),
        Method::Icf => Box::new(fit_icf(train_ds, gi, cfg.icf_neighbors)?),
        Method::Harmonic => Box::new(train_harmonic_ssl(train_ds, gi, 1e-6, 1000)?),
    };
    let mut out = BTreeMap::new();
    let rating = evaluate_rating_model(predictor.as_ref(), test)?;
    out.insert("mae".into(), rating.mae);
    out.insert("rmse".into(), rating.rmse);
    if let Some(m) = cfg.ranking_m {
        let ranking =
            evaluate_ranking_model(predictor.as_ref(), train_ds, test, m, cfg.like_threshold)?;
        out.insert(format!("precision_at_{m}"), ranking.precision);
        out.insert(format!("recall_at_{m}"), ranking.recall);
    }
    Ok(out)
}

/// Run every (sparsity, method, fold) combination on `ds` and aggregate
/// fold means.
pub fn run_comparison(
    ds: &RatingDataset,
    cfg: &ComparisonConfig,
    social: Option<&SocialEdges>,
    tags: Option<&TagAssignments>,
) -> Result<EvalReport> {
    cfg.validate()?;
    let sparsities = if cfg.sparsity_levels.is_empty() {
        vec![0.0]
    } else {
        cfg.sparsity_levels.clone()
    };
    let seed = cfg.hyperparameters.seed;
    let mut cells = Vec::new();
    for &sparsity in &sparsities {
        let sampled = if sparsity > 0.0 {
            sample_ratings(ds, sparsity, seed)
        } else {
            ds.clone()
        };
        let folds = kfold(&sampled, cfg.folds, seed)?;
        for fold in &folds {
            let gu = build_affinity_graph(
                &fold.train,
                Entity::User,
                cfg.user_graph_source,
                cfg.min_overlap,
                cfg.top_k,
                social,
                tags,
            )?;
            let gi = build_affinity_graph(
                &fold.train,
                Entity::Item,
                cfg.item_graph_source,
                cfg.min_overlap,
                cfg.top_k,
                social,
                tags,
            )?;
            for &method in &cfg.methods {
                let start = Instant::now();
                let result = fold_metrics(method, &fold.train, &fold.test, &gu, &gi, cfg);
                let seconds = start.elapsed().as_secs_f64();
                let (metrics, error) = match result {
                    Ok(m) => (m, None),
                    Err(e) => (BTreeMap::new(), Some(e.to_string())),
                };
                cells.push(Cell {
                    dataset: cfg.dataset.clone(),
                    sparsity,
                    method: method.as_str().into(),
                    fold: fold.fold_index,
                    metrics,
                    seconds,
                    error,
                });
            }
        }
    }
    let aggregates = aggregate_cells(&cells);
    Ok(EvalReport {
        config: cfg.clone(),
        cells,
        aggregates,
    })
}

fn aggregate_cells(cells: &[Cell]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, String), Vec<&Cell>> = BTreeMap::new();
    for c in cells {
        if c.error.is_none() {
            groups
                .entry((format!("{:.6}", c.sparsity), c.method.clone()))
                .or_default()
                .push(c);
        }
    }
    groups
        .into_iter()
        .map(|((sp, method), group)| {
            let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for c in &group {
                for (k, v) in &c.metrics {
                    let e = sums.entry(k.clone()).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
            Aggregate {
                sparsity: sp.parse().unwrap(),
                method,
                metrics: sums
                    .into_iter()
                    .map(|(k, (s, n))| (k, s / n as f64))
                    .collect(),
                folds_used: group.len(),
            }
        })
        .collect()
}

/// Aligned text table over the aggregates.
pub fn render_table(report: &EvalReport) -> String {
    let mut metric_names: Vec<String> = Vec::new();
    for a in &report.aggregates {
        for k in a.metrics.keys() {
            if !metric_names.contains(k) {
                metric_names.push(k.clone());
            }
        }
    }
    let mut header = vec!["sparsity".to_string(), "method".to_string()];
    header.extend(metric_names.iter().cloned());
    header.push("folds".into());
    let mut rows = vec![header];
    for a in &report.aggregates {
        let mut row = vec![format!("{:.2}", a.sparsity), a.method.clone()];
        for m in &metric_names {
            row.push(
                a.metrics
                    .get(m)
                    .map_or_else(|| "-".into(), |v| format!("{v:.4}")),
            );
        }
        row.push(a.folds_used.to_string());
        rows.push(row);
    }
    let ncols = rows[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Plot-ready long-format CSV: one row per (cell, metric).
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("dataset,sparsity,method,fold,metric,value,seconds\n");
    for c in &report.cells {
        for (k, v) in &c.metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.dataset, c.sparsity, c.method, c.fold, k, v, c.seconds
            ));
        }
    }
    out
}
