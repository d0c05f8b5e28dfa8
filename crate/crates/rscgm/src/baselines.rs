//! Comparison methods: plain weighted factorization, factor-Laplacian
//! regularization over one or both graphs, item-neighborhood prediction,
//! and per-user harmonic label propagation.

use nalgebra::{DMatrix, DVector};

use crate::affinity::AffinityGraph;
use crate::dataset::{RatingDataset, RatingMode};
use crate::error::{Error, Result};
use crate::model::{
    init_model, objective, train_with_index, FactorModel, Hyperparameters, TrainReport,
};
use crate::smoothness::SmoothnessIndex;

/// Anything that can score a (user, item) cell.
pub trait Predictor {
    fn predict_score(&self, user: u32, item: u32) -> f64;
}

impl Predictor for FactorModel {
    fn predict_score(&self, user: u32, item: u32) -> f64 {
        self.score(user, item)
    }
}

pub(crate) fn empty_index() -> SmoothnessIndex {
    SmoothnessIndex {
        alpha: 0.0,
        epsilon_conf: 1e-3,
        d_max: None,
        user_triples: Vec::new(),
        item_triples: Vec::new(),
    }
}

/// Weighted matrix factorization with Gaussian priors and no graph terms.
pub fn train_bmf(
    ds: &RatingDataset,
    hp: &Hyperparameters,
    mu_u: Option<&DMatrix<f64>>,
    mu_v: Option<&DMatrix<f64>>,
) -> Result<(FactorModel, TrainReport)> {
    let hp = Hyperparameters {
        lambda_f: 0.0,
        lambda_g: 0.0,
        ..hp.clone()
    };
    train_with_index(ds, &empty_index(), &hp, mu_u, mu_v)
}

fn lfr_objective(
    model: &FactorModel,
    ds: &RatingDataset,
    g_user: Option<&AffinityGraph>,
    g_item: Option<&AffinityGraph>,
    hp: &Hyperparameters,
) -> f64 {
    let base = {
        // fit and prior terms only
        let plain = Hyperparameters {
            lambda_f: 0.0,
            lambda_g: 0.0,
            ..hp.clone()
        };
        objective(model, ds, &empty_index(), &plain)
    };
    let mut smooth = 0.0;
    if let Some(g) = g_user {
        if hp.lambda_f > 0.0 {
            smooth += hp.lambda_f / 2.0
                * g.edges()
                    .iter()
                    .map(|&(i, k, w)| {
                        w * (model.user_factors.column(i as usize)
                            - model.user_factors.column(k as usize))
                        .norm_squared()
                    })
                    .sum::<f64>();
        }
    }
    if let Some(g) = g_item {
        if hp.lambda_g > 0.0 {
            smooth += hp.lambda_g / 2.0
                * g.edges()
                    .iter()
                    .map(|&(j, o, s)| {
                        s * (model.item_factors.column(j as usize)
                            - model.item_factors.column(o as usize))
                        .norm_squared()
                    })
                    .sum::<f64>();
        }
    }
    base + smooth
}

/// Factor-Laplacian regularized factorization. Supplying only the user
/// graph gives the user-side variant; supplying both regularizes both
/// factor matrices. `lambda_f` / `lambda_g` weight the two graphs, and
/// setting them to zero recovers plain factorization.
pub fn train_lfr(
    ds: &RatingDataset,
    g_user: Option<&AffinityGraph>,
    g_item: Option<&AffinityGraph>,
    hp: &Hyperparameters,
    mu_u: Option<&DMatrix<f64>>,
    mu_v: Option<&DMatrix<f64>>,
) -> Result<(FactorModel, TrainReport)> {
    if let Some(g) = g_user {
        if g.num_nodes != ds.num_users {
            return Err(Error::Dimension(format!(
                "user graph has {} nodes, dataset has {} users",
                g.num_nodes, ds.num_users
            )));
        }
    }
    if let Some(g) = g_item {
        if g.num_nodes != ds.num_items {
            return Err(Error::Dimension(format!(
                "item graph has {} nodes, dataset has {} items",
                g.num_nodes, ds.num_items
            )));
        }
    }
    let mut model = init_model(ds, hp, mu_u, mu_v)?;
    let k = hp.factors;
    let (a_conf, b_conf) = hp.label_confidences(ds.mode);
    let by_user = ds.by_user();
    let by_item = ds.by_item();

    let start = std::time::Instant::now();
    let mut trace = vec![lfr_objective(&model, ds, g_user, g_item, hp)];
    let mut converged = false;
    let mut iterations_run = 0;
    for _ in 0..hp.max_iters {
        let gram_v = (b_conf > 0.0).then(|| &model.item_factors * model.item_factors.transpose());
        for i in 0..ds.num_users {
            let mut a = match &gram_v {
                Some(g) => g * b_conf,
                None => DMatrix::zeros(k, k),
            };
            let mut b = DVector::zeros(k);
            for &(j, r) in &by_user[i] {
                let vj = model.item_factors.column(j as usize);
                a.ger(a_conf - b_conf, &vj, &vj, 1.0);
                b.axpy(a_conf * r, &vj, 1.0);
            }
            let mut diag = hp.lambda_u;
            if let Some(g) = g_user {
                if hp.lambda_f > 0.0 {
                    for &(nb, w) in g.neighbors(i as u32) {
                        diag += hp.lambda_f * w;
                        b.axpy(hp.lambda_f * w, &model.user_factors.column(nb as usize), 1.0);
                    }
                }
            }
            for d in 0..k {
                a[(d, d)] += diag;
            }
            b.axpy(hp.lambda_u, &model.user_prior_mean.column(i), 1.0);
            let chol = a
                .cholesky()
                .ok_or_else(|| Error::Numeric("update system is not positive definite".into()))?;
            model.user_factors.set_column(i, &chol.solve(&b));
        }
        let gram_u = (b_conf > 0.0).then(|| &model.user_factors * model.user_factors.transpose());
        for j in 0..ds.num_items {
            let mut a = match &gram_u {
                Some(g) => g * b_conf,
                None => DMatrix::zeros(k, k),
            };
            let mut b = DVector::zeros(k);
            for &(i, r) in &by_item[j] {
                let ui = model.user_factors.column(i as usize);
                a.ger(a_conf - b_conf, &ui, &ui, 1.0);
                b.axpy(a_conf * r, &ui, 1.0);
            }
            let mut diag = hp.lambda_v;
            if let Some(g) = g_item {
                if hp.lambda_g > 0.0 {
                    for &(nb, s) in g.neighbors(j as u32) {
                        diag += hp.lambda_g * s;
                        b.axpy(hp.lambda_g * s, &model.item_factors.column(nb as usize), 1.0);
                    }
                }
            }
            for d in 0..k {
                a[(d, d)] += diag;
            }
            b.axpy(hp.lambda_v, &model.item_prior_mean.column(j), 1.0);
            let chol = a
                .cholesky()
                .ok_or_else(|| Error::Numeric("update system is not positive definite".into()))?;
            model.item_factors.set_column(j, &chol.solve(&b));
        }
        iterations_run += 1;
        let obj = lfr_objective(&model, ds, g_user, g_item, hp);
        if !obj.is_finite() {
            return Err(Error::Numeric("objective became non-finite".into()));
        }
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if (prev - obj).abs() <= hp.rel_tol * prev.abs().max(1e-12) {
            converged = true;
            break;
        }
    }
    let report = TrainReport {
        objective_trace: trace,
        iterations_run,
        converged,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Item-neighborhood predictor: weighted average of the user's ratings on
/// the most similar rated items. Falls back to the user mean, then the
/// global mean (or 0 in implicit mode) when no neighbor evidence exists.
#[derive(Debug, Clone)]
pub struct IcfModel {
    by_user: Vec<Vec<(u32, f64)>>,
    graph: AffinityGraph,
    top_n: usize,
    user_means: Vec<Option<f64>>,
    fallback: f64,
}

pub fn fit_icf(ds: &RatingDataset, g_item: &AffinityGraph, top_n: usize) -> Result<IcfModel> {
    if g_item.num_nodes != ds.num_items {
        return Err(Error::Dimension(format!(
            "item graph has {} nodes, dataset has {} items",
            g_item.num_nodes, ds.num_items
        )));
    }
    if top_n == 0 {
        return Err(Error::Config("top_n must be at least 1".into()));
    }
    let by_user = ds.by_user();
    let user_means = by_user
        .iter()
        .map(|rs| {
            (!rs.is_empty()).then(|| rs.iter().map(|&(_, v)| v).sum::<f64>() / rs.len() as f64)
        })
        .collect();
    let fallback = match ds.mode {
        RatingMode::Explicit => ds.global_mean(),
        RatingMode::Implicit => 0.0,
    };
    Ok(IcfModel {
        by_user,
        graph: g_item.clone(),
        top_n,
        user_means,
        fallback,
    })
}

impl Predictor for IcfModel {
    fn predict_score(&self, user: u32, item: u32) -> f64 {
        let rated = &self.by_user[user as usize];
        let mut scored: Vec<(f64, f64)> = rated
            .iter()
            .filter_map(|&(j, r)| {
                if j == item {
                    return Some((1.0, r));
                }
                self.graph.weight(item, j).map(|w| (w, r))
            })
            .filter(|&(w, _)| w > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        scored.truncate(self.top_n);
        let wsum: f64 = scored.iter().map(|&(w, _)| w).sum();
        if wsum > 0.0 {
            scored.iter().map(|&(w, r)| w * r).sum::<f64>() / wsum
        } else {
            self.user_means[user as usize].unwrap_or(self.fallback)
        }
    }
}

/// Per-user harmonic scores on the item graph: rated items are clamped to
/// their ratings, every other item relaxes to the weighted average of its
/// neighbors.
#[derive(Debug, Clone)]
pub struct HarmonicModel {
    /// Row per user, column per item.
    pub scores: Vec<Vec<f64>>,
    pub max_residual: f64,
}

impl Predictor for HarmonicModel {
    fn predict_score(&self, user: u32, item: u32) -> f64 {
        self.scores[user as usize][item as usize]
    }
}

/// Jacobi relaxation with clamped labels, run independently per user.
/// Unlabeled items with no path to a label get the user mean (explicit) or
/// 0 (implicit).
pub fn train_harmonic_ssl(
    ds: &RatingDataset,
    g_item: &AffinityGraph,
    tol: f64,
    max_iters: usize,
) -> Result<HarmonicModel> {
    if g_item.num_nodes != ds.num_items {
        return Err(Error::Dimension(format!(
            "item graph has {} nodes, dataset has {} items",
            g_item.num_nodes, ds.num_items
        )));
    }
    let by_user = ds.by_user();
    let j = ds.num_items;
    let mut scores = Vec::with_capacity(ds.num_users);
    let mut max_residual = 0.0f64;
    for rated in &by_user {
        let default = match ds.mode {
            RatingMode::Explicit if !rated.is_empty() => {
                rated.iter().map(|&(_, v)| v).sum::<f64>() / rated.len() as f64
            }
            RatingMode::Explicit => ds.global_mean(),
            RatingMode::Implicit => 0.0,
        };
        let mut labeled = vec![false; j];
        let mut f = vec![default; j];
        for &(jx, r) in rated {
            labeled[jx as usize] = true;
            f[jx as usize] = r;
        }
        // restrict relaxation to unlabeled nodes with at least one neighbor
        let free: Vec<usize> = (0..j)
            .filter(|&jx| !labeled[jx] && !g_item.neighbors(jx as u32).is_empty())
            .collect();
        for _ in 0..max_iters {
            let mut next = f.clone();
            let mut delta = 0.0f64;
            for &jx in &free {
                let (mut num, mut den) = (0.0, 0.0);
                for &(nb, w) in g_item.neighbors(jx as u32) {
                    num += w * f[nb as usize];
                    den += w;
                }
                if den > 0.0 {
                    let v = num / den;
                    delta = delta.max((v - f[jx]).abs());
                    next[jx] = v;
                }
            }
            f = next;
            if delta <= tol {
                break;
            }
        }
        // harmonic residual of the final iterate
        for &jx in &free {
            let (mut num, mut den) = (0.0, 0.0);
            for &(nb, w) in g_item.neighbors(jx as u32) {
                num += w * f[nb as usize];
                den += w;
            }
            if den > 0.0 {
                max_residual = max_residual.max((f[jx] - num / den).abs());
            }
        }
        scores.push(f);
    }
    Ok(HarmonicModel {
        scores,
        max_residual,
    })
}
