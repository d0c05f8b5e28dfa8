//! The graph-smoothed factorization trainer: MAP objective, closed-form
//! coordinate updates, the sweep loop, prediction and top-M
//! recommendation. The pairwise-graph variant shares the same machinery.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityGraph, PairwiseGraph};
use crate::dataset::{RatingDataset, RatingMode};
use crate::error::{Error, Result};
use crate::smoothness::{build_smoothness_index, energy_joint, energy_pairwise, SmoothnessIndex};

const INIT_NOISE_STD: f64 = 0.01;
const CHECKPOINT_VERSION: u32 = 1;
/// Linear-system residual bound: `||Ax - b|| <= RESIDUAL_TOL * (1 + ||b||)`.
const RESIDUAL_TOL: f64 = 1e-10;

/// Latent factor matrices (column per user / item) plus prior means.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub factors: usize,
    /// K x I
    pub user_factors: DMatrix<f64>,
    /// K x J
    pub item_factors: DMatrix<f64>,
    pub user_prior_mean: DMatrix<f64>,
    pub item_prior_mean: DMatrix<f64>,
}

impl FactorModel {
    pub fn num_users(&self) -> usize {
        self.user_factors.ncols()
    }

    pub fn num_items(&self) -> usize {
        self.item_factors.ncols()
    }

    /// Inner product prediction without bounds checking.
    pub fn score(&self, user: u32, item: u32) -> f64 {
        self.user_factors
            .column(user as usize)
            .dot(&self.item_factors.column(item as usize))
    }

    /// Predicted rating `U_i' V_j` with bounds checking.
    pub fn predict(&self, user: u32, item: u32) -> Result<f64> {
        if user as usize >= self.num_users() || item as usize >= self.num_items() {
            return Err(Error::Config(format!(
                "prediction index ({user}, {item}) out of range ({} users, {} items)",
                self.num_users(),
                self.num_items()
            )));
        }
        Ok(self.score(user, item))
    }

    /// Binary checkpoint: `K I J version` header then row-major U and V,
    /// little-endian 64-bit floats.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let werr = |e| Error::io(path, e);
        for v in [
            self.factors as u32,
            self.num_users() as u32,
            self.num_items() as u32,
            CHECKPOINT_VERSION,
        ] {
            w.write_all(&v.to_le_bytes()).map_err(werr)?;
        }
        for m in [&self.user_factors, &self.item_factors] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.write_all(&m[(r, c)].to_le_bytes()).map_err(werr)?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let rerr = |e| Error::io(path, e);
        let mut buf4 = [0u8; 4];
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut buf4).map_err(rerr)?;
            *h = u32::from_le_bytes(buf4);
        }
        let [k, i, j, version] = header;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let (k, i, j) = (k as usize, i as usize, j as usize);
        let mut read_matrix = |rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(rows, cols);
            let mut buf8 = [0u8; 8];
            for rr in 0..rows {
                for cc in 0..cols {
                    r.read_exact(&mut buf8).map_err(rerr)?;
                    m[(rr, cc)] = f64::from_le_bytes(buf8);
                }
            }
            Ok(m)
        };
        let user_factors = read_matrix(k, i)?;
        let item_factors = read_matrix(k, j)?;
        Ok(FactorModel {
            factors: k,
            user_factors,
            item_factors,
            user_prior_mean: DMatrix::zeros(k, i),
            item_prior_mean: DMatrix::zeros(k, j),
        })
    }
}

/// All solver knobs in one place.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Latent dimensionality K.
    pub factors: usize,
    /// User prior confidence; must stay positive to keep updates definite.
    pub lambda_u: f64,
    pub lambda_v: f64,
    /// User-graph smoothness degree.
    pub lambda_f: f64,
    /// Item-graph smoothness degree.
    pub lambda_g: f64,
    /// Confidence decay in [0, 1].
    pub alpha: f64,
    /// Label confidence for observed entries (implicit mode only; explicit
    /// mode fixes a=1, b=0).
    pub label_conf_a: f64,
    /// Label confidence for unobserved entries.
    pub label_conf_b: f64,
    /// Confidence floor deciding the propagation depth.
    pub epsilon_conf: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Smoothness degree for the pairwise-graph variant.
    pub lambda_p: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            factors: 10,
            lambda_u: 0.1,
            lambda_v: 0.1,
            lambda_f: 0.001,
            lambda_g: 0.001,
            alpha: 0.5,
            label_conf_a: 1.0,
            label_conf_b: 0.01,
            epsilon_conf: 1e-3,
            max_iters: 100,
            rel_tol: 1e-6,
            seed: 42,
            lambda_p: 0.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 {
            return Err(Error::Config("factors must be at least 1".into()));
        }
        if self.lambda_u <= 0.0 || self.lambda_v <= 0.0 {
            return Err(Error::Config(
                "lambda_u and lambda_v must be positive".into(),
            ));
        }
        for (name, v) in [
            ("lambda_f", self.lambda_f),
            ("lambda_g", self.lambda_g),
            ("lambda_p", self.lambda_p),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be nonnegative")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1]".into()));
        }
        if !(self.label_conf_a > self.label_conf_b && self.label_conf_b >= 0.0) {
            return Err(Error::Config(
                "label confidences must satisfy a > b >= 0".into(),
            ));
        }
        if self.epsilon_conf <= 0.0 {
            return Err(Error::Config("epsilon_conf must be positive".into()));
        }
        Ok(())
    }

    /// Effective (observed, unobserved) label confidences for the dataset
    /// mode: explicit fits observed entries only.
    pub fn label_confidences(&self, mode: RatingMode) -> (f64, f64) {
        match mode {
            RatingMode::Explicit => (1.0, 0.0),
            RatingMode::Implicit => (self.label_conf_a, self.label_conf_b),
        }
    }
}

/// Objective trace and convergence record for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective after each completed sweep; index 0 is the initial value.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub wall_time_secs: f64,
}

/// Draw the initial factors around the prior means with iid Gaussian noise
/// of standard deviation 0.01 under the configured seed.
pub fn init_model(
    ds: &RatingDataset,
    hp: &Hyperparameters,
    mu_u: Option<&DMatrix<f64>>,
    mu_v: Option<&DMatrix<f64>>,
) -> Result<FactorModel> {
    hp.validate()?;
    let k = hp.factors;
    let user_prior_mean = match mu_u {
        Some(m) => {
            if m.nrows() != k || m.ncols() != ds.num_users {
                return Err(Error::Dimension(format!(
                    "user prior mean is {}x{}, expected {k}x{}",
                    m.nrows(),
                    m.ncols(),
                    ds.num_users
                )));
            }
            m.clone()
        }
        None => DMatrix::zeros(k, ds.num_users),
    };
    let item_prior_mean = match mu_v {
        Some(m) => {
            if m.nrows() != k || m.ncols() != ds.num_items {
                return Err(Error::Dimension(format!(
                    "item prior mean is {}x{}, expected {k}x{}",
                    m.nrows(),
                    m.ncols(),
                    ds.num_items
                )));
            }
            m.clone()
        }
        None => DMatrix::zeros(k, ds.num_items),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let noise = Normal::new(0.0, INIT_NOISE_STD).unwrap();
    let mut user_factors = user_prior_mean.clone();
    for c in 0..user_factors.ncols() {
        for r in 0..k {
            user_factors[(r, c)] += noise.sample(&mut rng);
        }
    }
    let mut item_factors = item_prior_mean.clone();
    for c in 0..item_factors.ncols() {
        for r in 0..k {
            item_factors[(r, c)] += noise.sample(&mut rng);
        }
    }
    Ok(FactorModel {
        factors: k,
        user_factors,
        item_factors,
        user_prior_mean,
        item_prior_mean,
    })
}

fn fit_term(model: &FactorModel, ds: &RatingDataset, hp: &Hyperparameters) -> f64 {
    let (a, b) = hp.label_confidences(ds.mode);
    let mut observed = 0.0;
    let mut observed_sq = 0.0;
    for r in &ds.triples {
        let pred = model.score(r.user, r.item);
        observed += (r.value - pred).powi(2);
        observed_sq += pred * pred;
    }
    let mut sum = a * observed;
    if b > 0.0 {
        // b * (sum over all cells of r^2 - observed r^2)
        let gram_v = &model.item_factors * model.item_factors.transpose();
        let mut all_sq = 0.0;
        for i in 0..model.num_users() {
            let u = model.user_factors.column(i);
            all_sq += (&gram_v * u).dot(&u);
        }
        sum += b * (all_sq - observed_sq);
    }
    0.5 * sum
}

fn prior_term(model: &FactorModel, hp: &Hyperparameters) -> f64 {
    let du = &model.user_factors - &model.user_prior_mean;
    let dv = &model.item_factors - &model.item_prior_mean;
    hp.lambda_u / 2.0 * du.norm_squared() + hp.lambda_v / 2.0 * dv.norm_squared()
}

/// Full MAP objective: weighted fit plus joint smoothness energy plus
/// Gaussian priors around the configured means.
pub fn objective(
    model: &FactorModel,
    ds: &RatingDataset,
    index: &SmoothnessIndex,
    hp: &Hyperparameters,
) -> f64 {
    fit_term(model, ds, hp) + energy_joint(index, model, hp.lambda_f, hp.lambda_g) + prior_term(model, hp)
}

/// Objective for the pairwise-graph variant.
pub fn objective_pairwise(
    model: &FactorModel,
    ds: &RatingDataset,
    pg: &PairwiseGraph,
    hp: &Hyperparameters,
) -> f64 {
    fit_term(model, ds, hp) + energy_pairwise(pg, model, hp.lambda_p) + prior_term(model, hp)
}

/// Per-node views of the observed ratings and smoothness triples, grouped
/// once before sweeping.
struct JointContext {
    by_user: Vec<Vec<(u32, f64)>>,
    by_item: Vec<Vec<(u32, f64)>>,
    /// Per user i: (other user k, context item j, c * W_ik).
    user_edge_adj: Vec<Vec<(u32, u32, f64)>>,
    /// Per user i: item triples with context i, (j, o, c * S_jo).
    user_ctx_adj: Vec<Vec<(u32, u32, f64)>>,
    /// Per item j: (other item o, context user i, c * S_jo).
    item_edge_adj: Vec<Vec<(u32, u32, f64)>>,
    /// Per item j: user triples with context j, (i, k, c * W_ik).
    item_ctx_adj: Vec<Vec<(u32, u32, f64)>>,
}

impl JointContext {
    fn new(ds: &RatingDataset, index: &SmoothnessIndex) -> Self {
        let mut user_edge_adj = vec![Vec::new(); ds.num_users];
        let mut item_ctx_adj = vec![Vec::new(); ds.num_items];
        for t in &index.user_triples {
            let cw = t.confidence * t.weight;
            user_edge_adj[t.a as usize].push((t.b, t.context, cw));
            user_edge_adj[t.b as usize].push((t.a, t.context, cw));
            item_ctx_adj[t.context as usize].push((t.a, t.b, cw));
        }
        let mut item_edge_adj = vec![Vec::new(); ds.num_items];
        let mut user_ctx_adj = vec![Vec::new(); ds.num_users];
        for t in &index.item_triples {
            let cs = t.confidence * t.weight;
            item_edge_adj[t.a as usize].push((t.b, t.context, cs));
            item_edge_adj[t.b as usize].push((t.a, t.context, cs));
            user_ctx_adj[t.context as usize].push((t.a, t.b, cs));
        }
        JointContext {
            by_user: ds.by_user(),
            by_item: ds.by_item(),
            user_edge_adj,
            user_ctx_adj,
            item_edge_adj,
            item_ctx_adj,
        }
    }
}

fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.iter().all(|x| x.is_finite()) || !b.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric("non-finite update system".into()));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("update system is not positive definite".into()))?;
    let mut x = chol.solve(b);
    // one iterative refinement step keeps the residual near machine precision
    let resid = b - a * &x;
    x += chol.solve(&resid);
    let resid = (b - a * &x).norm();
    if resid > RESIDUAL_TOL * (1.0 + b.norm()) {
        return Err(Error::Numeric(format!(
            "linear-system residual {resid:.3e} exceeds tolerance"
        )));
    }
    Ok(x)
}

#[allow(clippy::too_many_arguments)]
fn assemble_user_system(
    i: usize,
    model: &FactorModel,
    ctx: &JointContext,
    hp: &Hyperparameters,
    conf: (f64, f64),
    gram_v: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = model.factors;
    let (a_conf, b_conf) = conf;
    let mut a = match gram_v {
        Some(g) if b_conf > 0.0 => g * b_conf,
        _ => DMatrix::zeros(k, k),
    };
    let mut b = DVector::zeros(k);
    let fit_coeff = a_conf - b_conf;
    for &(j, r) in &ctx.by_user[i] {
        let vj = model.item_factors.column(j as usize);
        a.ger(fit_coeff, &vj, &vj, 1.0);
        b.axpy(a_conf * r, &vj, 1.0);
    }
    for d in 0..k {
        a[(d, d)] += hp.lambda_u;
    }
    b.axpy(hp.lambda_u, &model.user_prior_mean.column(i), 1.0);
    for &(other, j, cw) in &ctx.user_edge_adj[i] {
        let vj = model.item_factors.column(j as usize);
        let coeff = hp.lambda_f * cw;
        a.ger(coeff, &vj, &vj, 1.0);
        let dot = vj.dot(&model.user_factors.column(other as usize));
        b.axpy(coeff * dot, &vj, 1.0);
    }
    for &(j, o, cs) in &ctx.user_ctx_adj[i] {
        let d = model.item_factors.column(j as usize) - model.item_factors.column(o as usize);
        a.ger(hp.lambda_g * cs, &d, &d, 1.0);
    }
    (a, b)
}

#[allow(clippy::too_many_arguments)]
fn assemble_item_system(
    j: usize,
    model: &FactorModel,
    ctx: &JointContext,
    hp: &Hyperparameters,
    conf: (f64, f64),
    gram_u: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = model.factors;
    let (a_conf, b_conf) = conf;
    let mut a = match gram_u {
        Some(g) if b_conf > 0.0 => g * b_conf,
        _ => DMatrix::zeros(k, k),
    };
    let mut b = DVector::zeros(k);
    let fit_coeff = a_conf - b_conf;
    for &(i, r) in &ctx.by_item[j] {
        let ui = model.user_factors.column(i as usize);
        a.ger(fit_coeff, &ui, &ui, 1.0);
        b.axpy(a_conf * r, &ui, 1.0);
    }
    for d in 0..k {
        a[(d, d)] += hp.lambda_v;
    }
    b.axpy(hp.lambda_v, &model.item_prior_mean.column(j), 1.0);
    for &(other, i, cs) in &ctx.item_edge_adj[j] {
        let ui = model.user_factors.column(i as usize);
        let coeff = hp.lambda_g * cs;
        a.ger(coeff, &ui, &ui, 1.0);
        let dot = ui.dot(&model.item_factors.column(other as usize));
        b.axpy(coeff * dot, &ui, 1.0);
    }
    for &(i, kk, cw) in &ctx.item_ctx_adj[j] {
        let d = model.user_factors.column(i as usize) - model.user_factors.column(kk as usize);
        a.ger(hp.lambda_f * cw, &d, &d, 1.0);
    }
    (a, b)
}

/// Exact minimizer of the objective in `U_i` with everything else fixed.
pub fn update_user_factor(
    i: u32,
    model: &FactorModel,
    ds: &RatingDataset,
    index: &SmoothnessIndex,
    hp: &Hyperparameters,
) -> Result<DVector<f64>> {
    let ctx = JointContext::new(ds, index);
    let conf = hp.label_confidences(ds.mode);
    let gram_v = (conf.1 > 0.0).then(|| &model.item_factors * model.item_factors.transpose());
    let (a, b) = assemble_user_system(i as usize, model, &ctx, hp, conf, gram_v.as_ref());
    spd_solve(&a, &b)
}

/// Exact minimizer of the objective in `V_j` with everything else fixed.
pub fn update_item_factor(
    j: u32,
    model: &FactorModel,
    ds: &RatingDataset,
    index: &SmoothnessIndex,
    hp: &Hyperparameters,
) -> Result<DVector<f64>> {
    let ctx = JointContext::new(ds, index);
    let conf = hp.label_confidences(ds.mode);
    let gram_u = (conf.1 > 0.0).then(|| &model.user_factors * model.user_factors.transpose());
    let (a, b) = assemble_item_system(j as usize, model, &ctx, hp, conf, gram_u.as_ref());
    spd_solve(&a, &b)
}

/// Analytic gradient of the objective with respect to `U_i`: the update
/// system evaluated at the current factors, `A U_i - b`.
pub fn user_gradient(
    i: u32,
    model: &FactorModel,
    ds: &RatingDataset,
    index: &SmoothnessIndex,
    hp: &Hyperparameters,
) -> DVector<f64> {
    let ctx = JointContext::new(ds, index);
    let conf = hp.label_confidences(ds.mode);
    let gram_v = (conf.1 > 0.0).then(|| &model.item_factors * model.item_factors.transpose());
    let (a, b) = assemble_user_system(i as usize, model, &ctx, hp, conf, gram_v.as_ref());
    &a * model.user_factors.column(i as usize) - b
}

pub fn item_gradient(
    j: u32,
    model: &FactorModel,
    ds: &RatingDataset,
    index: &SmoothnessIndex,
    hp: &Hyperparameters,
) -> DVector<f64> {
    let ctx = JointContext::new(ds, index);
    let conf = hp.label_confidences(ds.mode);
    let gram_u = (conf.1 > 0.0).then(|| &model.user_factors * model.user_factors.transpose());
    let (a, b) = assemble_item_system(j as usize, model, &ctx, hp, conf, gram_u.as_ref());
    &a * model.item_factors.column(j as usize) - b
}

fn run_sweeps<F>(
    model: &mut FactorModel,
    hp: &Hyperparameters,
    mut sweep: F,
    mut eval_objective: impl FnMut(&FactorModel) -> f64,
) -> Result<TrainReport>
where
    F: FnMut(&mut FactorModel) -> Result<()>,
{
    let start = Instant::now();
    let mut trace = vec![eval_objective(model)];
    let mut converged = false;
    let mut iterations_run = 0;
    for _ in 0..hp.max_iters {
        sweep(model)?;
        iterations_run += 1;
        let obj = eval_objective(model);
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
    Ok(TrainReport {
        objective_trace: trace,
        iterations_run,
        converged,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// One Gauss-Seidel sweep: all users ascending, then all items ascending.
fn joint_sweep(
    model: &mut FactorModel,
    ctx: &JointContext,
    hp: &Hyperparameters,
    conf: (f64, f64),
) -> Result<()> {
    let gram_v = (conf.1 > 0.0).then(|| &model.item_factors * model.item_factors.transpose());
    for i in 0..model.num_users() {
        let (a, b) = assemble_user_system(i, model, ctx, hp, conf, gram_v.as_ref());
        let x = spd_solve(&a, &b)?;
        model.user_factors.set_column(i, &x);
    }
    let gram_u = (conf.1 > 0.0).then(|| &model.user_factors * model.user_factors.transpose());
    for j in 0..model.num_items() {
        let (a, b) = assemble_item_system(j, model, ctx, hp, conf, gram_u.as_ref());
        let x = spd_solve(&a, &b)?;
        model.item_factors.set_column(j, &x);
    }
    Ok(())
}

/// Train with joint smoothness on the supplied graphs (the smoothness
/// index is built once up front).
pub fn train(
    ds: &RatingDataset,
    g_user: &AffinityGraph,
    g_item: &AffinityGraph,
    hp: &Hyperparameters,
    mu_u: Option<&DMatrix<f64>>,
    mu_v: Option<&DMatrix<f64>>,
) -> Result<(FactorModel, TrainReport)> {
    if g_user.num_nodes != ds.num_users || g_item.num_nodes != ds.num_items {
        return Err(Error::Dimension(format!(
            "graphs ({}, {}) do not match dataset ({}, {})",
            g_user.num_nodes, g_item.num_nodes, ds.num_users, ds.num_items
        )));
    }
    let index = build_smoothness_index(g_user, g_item, ds, hp.alpha, hp.epsilon_conf);
    train_with_index(ds, &index, hp, mu_u, mu_v)
}

/// Train against a prebuilt smoothness index.
pub fn train_with_index(
    ds: &RatingDataset,
    index: &SmoothnessIndex,
    hp: &Hyperparameters,
    mu_u: Option<&DMatrix<f64>>,
    mu_v: Option<&DMatrix<f64>>,
) -> Result<(FactorModel, TrainReport)> {
    let mut model = init_model(ds, hp, mu_u, mu_v)?;
    let ctx = JointContext::new(ds, index);
    let conf = hp.label_confidences(ds.mode);
    let report = run_sweeps(
        &mut model,
        hp,
        |m| joint_sweep(m, &ctx, hp, conf),
        |m| objective(m, ds, index, hp),
    )?;
    Ok((model, report))
}

/// Per-node views of a pairwise graph. "Cross" entries keep the opposite
/// pair node fixed during the update; "self" entries have both pair nodes
/// sharing the updated coordinate and contribute only curvature.
struct PairwiseContext {
    by_user: Vec<Vec<(u32, f64)>>,
    by_item: Vec<Vec<(u32, f64)>>,
    /// Per user i: (j, k, o, p) for edges ((i,j),(k,o)) with k != i.
    user_cross: Vec<Vec<(u32, u32, u32, f64)>>,
    /// Per user i: (j, o, p) for edges ((i,j),(i,o)).
    user_self: Vec<Vec<(u32, u32, f64)>>,
    /// Per item j: (i, k, o, p) for edges ((i,j),(k,o)) with o != j.
    item_cross: Vec<Vec<(u32, u32, u32, f64)>>,
    /// Per item j: (i, k, p) for edges ((i,j),(k,j)).
    item_self: Vec<Vec<(u32, u32, f64)>>,
}

impl PairwiseContext {
    fn new(ds: &RatingDataset, pg: &PairwiseGraph) -> Self {
        let mut user_cross = vec![Vec::new(); ds.num_users];
        let mut user_self = vec![Vec::new(); ds.num_users];
        let mut item_cross = vec![Vec::new(); ds.num_items];
        let mut item_self = vec![Vec::new(); ds.num_items];
        for &(na, nb, p) in &pg.edges {
            let (i, j) = pg.decode(na);
            let (k, o) = pg.decode(nb);
            if i == k {
                user_self[i as usize].push((j, o, p));
            } else {
                user_cross[i as usize].push((j, k, o, p));
                user_cross[k as usize].push((o, i, j, p));
            }
            if j == o {
                item_self[j as usize].push((i, k, p));
            } else {
                item_cross[j as usize].push((i, k, o, p));
                item_cross[o as usize].push((k, i, j, p));
            }
        }
        PairwiseContext {
            by_user: ds.by_user(),
            by_item: ds.by_item(),
            user_cross,
            user_self,
            item_cross,
            item_self,
        }
    }
}

fn pairwise_sweep(
    model: &mut FactorModel,
    ctx: &PairwiseContext,
    hp: &Hyperparameters,
    conf: (f64, f64),
) -> Result<()> {
    let k_dim = model.factors;
    let (a_conf, b_conf) = conf;
    let gram_v = (b_conf > 0.0).then(|| &model.item_factors * model.item_factors.transpose());
    for i in 0..model.num_users() {
        let mut a = match &gram_v {
            Some(g) if b_conf > 0.0 => g * b_conf,
            _ => DMatrix::zeros(k_dim, k_dim),
        };
        let mut b = DVector::zeros(k_dim);
        for &(j, r) in &ctx.by_user[i] {
            let vj = model.item_factors.column(j as usize);
            a.ger(a_conf - b_conf, &vj, &vj, 1.0);
            b.axpy(a_conf * r, &vj, 1.0);
        }
        for d in 0..k_dim {
            a[(d, d)] += hp.lambda_u;
        }
        b.axpy(hp.lambda_u, &model.user_prior_mean.column(i), 1.0);
        for &(j, k, o, p) in &ctx.user_cross[i] {
            let vj = model.item_factors.column(j as usize);
            let coeff = hp.lambda_p * p;
            a.ger(coeff, &vj, &vj, 1.0);
            b.axpy(coeff * model.score(k, o), &vj, 1.0);
        }
        for &(j, o, p) in &ctx.user_self[i] {
            let d = model.item_factors.column(j as usize) - model.item_factors.column(o as usize);
            a.ger(hp.lambda_p * p, &d, &d, 1.0);
        }
        let x = spd_solve(&a, &b)?;
        model.user_factors.set_column(i, &x);
    }
    let gram_u = (b_conf > 0.0).then(|| &model.user_factors * model.user_factors.transpose());
    for j in 0..model.num_items() {
        let mut a = match &gram_u {
            Some(g) if b_conf > 0.0 => g * b_conf,
            _ => DMatrix::zeros(k_dim, k_dim),
        };
        let mut b = DVector::zeros(k_dim);
        for &(i, r) in &ctx.by_item[j] {
            let ui = model.user_factors.column(i as usize);
            a.ger(a_conf - b_conf, &ui, &ui, 1.0);
            b.axpy(a_conf * r, &ui, 1.0);
        }
        for d in 0..k_dim {
            a[(d, d)] += hp.lambda_v;
        }
        b.axpy(hp.lambda_v, &model.item_prior_mean.column(j), 1.0);
        for &(i, k, o, p) in &ctx.item_cross[j] {
            let ui = model.user_factors.column(i as usize);
            let coeff = hp.lambda_p * p;
            a.ger(coeff, &ui, &ui, 1.0);
            b.axpy(coeff * model.score(k, o), &ui, 1.0);
        }
        for &(i, k, p) in &ctx.item_self[j] {
            let d = model.user_factors.column(i as usize) - model.user_factors.column(k as usize);
            a.ger(hp.lambda_p * p, &d, &d, 1.0);
        }
        let x = spd_solve(&a, &b)?;
        model.item_factors.set_column(j, &x);
    }
    Ok(())
}

/// Train with the pairwise smoothness energy in place of the joint one.
pub fn train_pairwise(
    ds: &RatingDataset,
    pg: &PairwiseGraph,
    hp: &Hyperparameters,
    mu_u: Option<&DMatrix<f64>>,
    mu_v: Option<&DMatrix<f64>>,
) -> Result<(FactorModel, TrainReport)> {
    if pg.num_users != ds.num_users || pg.num_items != ds.num_items {
        return Err(Error::Dimension(format!(
            "pairwise graph ({}x{}) does not match dataset ({}x{})",
            pg.num_users, pg.num_items, ds.num_users, ds.num_items
        )));
    }
    let mut model = init_model(ds, hp, mu_u, mu_v)?;
    let ctx = PairwiseContext::new(ds, pg);
    let conf = hp.label_confidences(ds.mode);
    let report = run_sweeps(
        &mut model,
        hp,
        |m| pairwise_sweep(m, &ctx, hp, conf),
        |m| objective_pairwise(m, ds, pg, hp),
    )?;
    Ok((model, report))
}

/// Items unrated by `user` in training, sorted by predicted rating
/// descending with ties broken by ascending item index.
pub fn recommend_top_m(model: &FactorModel, train: &RatingDataset, user: u32, m: usize) -> Vec<u32> {
    assert!(m >= 1);
    let rated: std::collections::HashSet<u32> = train
        .triples
        .iter()
        .filter(|r| r.user == user)
        .map(|r| r.item)
        .collect();
    let mut scored: Vec<(u32, f64)> = (0..train.num_items as u32)
        .filter(|j| !rated.contains(j))
        .map(|j| (j, model.score(user, j)))
        .collect();
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    scored.into_iter().take(m).map(|(j, _)| j).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::Entity;
    use crate::dataset::RatingMode;
    use rand::Rng;

    fn empty_index() -> SmoothnessIndex {
        SmoothnessIndex {
            alpha: 0.0,
            epsilon_conf: 1e-3,
            d_max: None,
            user_triples: vec![],
            item_triples: vec![],
        }
    }

    #[test]
    fn init_is_deterministic() {
        let ds = RatingDataset::from_triples(3, 2, vec![(0, 0, 1.0)], RatingMode::Explicit);
        let hp = Hyperparameters::default();
        let m1 = init_model(&ds, &hp, None, None).unwrap();
        let m2 = init_model(&ds, &hp, None, None).unwrap();
        assert_eq!(m1.user_factors, m2.user_factors);
        assert_eq!(m1.item_factors, m2.item_factors);
    }

    #[test]
    fn init_noise_scale() {
        let ds = RatingDataset::from_triples(100, 100, vec![(0, 0, 1.0)], RatingMode::Explicit);
        let hp = Hyperparameters {
            factors: 50,
            ..Default::default()
        };
        let m = init_model(&ds, &hp, None, None).unwrap();
        let entries: Vec<f64> = m.user_factors.iter().chain(m.item_factors.iter()).copied().collect();
        assert!(entries.iter().all(|x| x.abs() < 5.0 * INIT_NOISE_STD));
        let mean: f64 = entries.iter().sum::<f64>() / entries.len() as f64;
        assert!(mean.abs() < 1e-3, "mean {mean}");
    }

    #[test]
    fn init_with_topic_prior() {
        let ds = RatingDataset::from_triples(2, 3, vec![(0, 0, 1.0)], RatingMode::Implicit);
        let hp = Hyperparameters {
            factors: 2,
            ..Default::default()
        };
        let mut mu_v = DMatrix::zeros(2, 3);
        for j in 0..3 {
            mu_v[(0, j)] = 1.0;
        }
        let m = init_model(&ds, &hp, None, Some(&mu_v)).unwrap();
        for j in 0..3 {
            assert!((m.item_factors[(0, j)] - 1.0).abs() < 5.0 * INIT_NOISE_STD);
            assert!(m.item_factors[(1, j)].abs() < 5.0 * INIT_NOISE_STD);
        }
    }

    #[test]
    fn init_dimension_mismatch() {
        let ds = RatingDataset::from_triples(2, 3, vec![(0, 0, 1.0)], RatingMode::Explicit);
        let hp = Hyperparameters::default();
        let bad = DMatrix::zeros(3, 3);
        assert!(init_model(&ds, &hp, Some(&bad), None).is_err());
    }

    #[test]
    fn objective_vanishes_at_prior_without_data() {
        // no observed ratings, zero means, b = 0
        let ds = RatingDataset {
            triples: vec![],
            ..RatingDataset::from_triples(2, 2, vec![(0, 0, 1.0)], RatingMode::Explicit)
        };
        let hp = Hyperparameters {
            factors: 2,
            ..Default::default()
        };
        let model = FactorModel {
            factors: 2,
            user_factors: DMatrix::zeros(2, 2),
            item_factors: DMatrix::zeros(2, 2),
            user_prior_mean: DMatrix::zeros(2, 2),
            item_prior_mean: DMatrix::zeros(2, 2),
        };
        assert_eq!(objective(&model, &ds, &empty_index(), &hp), 0.0);
    }

    #[test]
    fn objective_single_rating() {
        let ds = RatingDataset::from_triples(1, 1, vec![(0, 0, 2.0)], RatingMode::Explicit);
        let hp = Hyperparameters {
            factors: 1,
            lambda_u: 1e-12,
            lambda_v: 1e-12,
            ..Default::default()
        };
        let model = FactorModel {
            factors: 1,
            user_factors: DMatrix::zeros(1, 1),
            item_factors: DMatrix::zeros(1, 1),
            user_prior_mean: DMatrix::zeros(1, 1),
            item_prior_mean: DMatrix::zeros(1, 1),
        };
        // 1/2 * 1 * 2^2 = 2 (lambda terms vanish at zero factors)
        assert!((objective(&model, &ds, &empty_index(), &hp) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn user_update_prior_only() {
        let ds = RatingDataset {
            triples: vec![],
            ..RatingDataset::from_triples(2, 2, vec![(0, 0, 1.0)], RatingMode::Explicit)
        };
        let hp = Hyperparameters {
            factors: 2,
            ..Default::default()
        };
        let mut mu_u = DMatrix::zeros(2, 2);
        mu_u[(0, 0)] = 3.0;
        mu_u[(1, 0)] = -1.0;
        let model = init_model(&ds, &hp, Some(&mu_u), None).unwrap();
        let x = update_user_factor(0, &model, &ds, &empty_index(), &hp).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-10);
        assert!((x[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn item_update_prior_only_cmf() {
        let ds = RatingDataset {
            triples: vec![],
            ..RatingDataset::from_triples(2, 2, vec![(0, 0, 1.0)], RatingMode::Explicit)
        };
        let hp = Hyperparameters {
            factors: 2,
            ..Default::default()
        };
        let mut mu_v = DMatrix::zeros(2, 2);
        mu_v[(0, 1)] = 0.7;
        let model = init_model(&ds, &hp, None, Some(&mu_v)).unwrap();
        let x = update_item_factor(1, &model, &ds, &empty_index(), &hp).unwrap();
        assert!((x[0] - 0.7).abs() < 1e-10);
        assert!(x[1].abs() < 1e-10);
    }

    #[test]
    fn user_update_ridge_regression() {
        // smoothness off: update must equal the explicit ridge solution
        let ds = RatingDataset::from_triples(
            1,
            3,
            vec![(0, 0, 1.0), (0, 1, 2.0), (0, 2, 3.0)],
            RatingMode::Explicit,
        );
        let hp = Hyperparameters {
            factors: 2,
            lambda_f: 0.0,
            lambda_g: 0.0,
            ..Default::default()
        };
        let model = init_model(&ds, &hp, None, None).unwrap();
        let x = update_user_factor(0, &model, &ds, &empty_index(), &hp).unwrap();
        let mut a = DMatrix::<f64>::identity(2, 2) * hp.lambda_u;
        let mut b = DVector::<f64>::zeros(2);
        for r in &ds.triples {
            let vj = model.item_factors.column(r.item as usize);
            a += vj * vj.transpose();
            b += vj * r.value;
        }
        let expected = a.lu().solve(&b).unwrap();
        assert!((x - expected).norm() < 1e-9);
    }

    fn random_instance(
        seed: u64,
        i: usize,
        j: usize,
        k: usize,
    ) -> (RatingDataset, AffinityGraph, AffinityGraph, Hyperparameters) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triples = Vec::new();
        for u in 0..i as u32 {
            for v in 0..j as u32 {
                if rng.gen_bool(0.6) {
                    triples.push((u, v, rng.gen_range(1.0..5.0)));
                }
            }
        }
        if triples.is_empty() {
            triples.push((0, 0, 3.0));
        }
        let ds = RatingDataset::from_triples(i, j, triples, RatingMode::Explicit);
        let mut ue = Vec::new();
        for a in 0..i as u32 {
            for b in (a + 1)..i as u32 {
                if rng.gen_bool(0.5) {
                    ue.push((a, b, rng.gen_range(0.1..1.0)));
                }
            }
        }
        let mut ie = Vec::new();
        for a in 0..j as u32 {
            for b in (a + 1)..j as u32 {
                if rng.gen_bool(0.5) {
                    ie.push((a, b, rng.gen_range(0.1..1.0)));
                }
            }
        }
        let gu = AffinityGraph::from_edges(Entity::User, i, ue);
        let gi = AffinityGraph::from_edges(Entity::Item, j, ie);
        let hp = Hyperparameters {
            factors: k,
            lambda_f: 0.5,
            lambda_g: 0.3,
            alpha: 0.5,
            seed,
            ..Default::default()
        };
        (ds, gu, gi, hp)
    }

    #[test]
    fn update_is_local_minimum() {
        let (ds, gu, gi, hp) = random_instance(11, 4, 4, 2);
        let index = build_smoothness_index(&gu, &gi, &ds, hp.alpha, hp.epsilon_conf);
        let mut model = init_model(&ds, &hp, None, None).unwrap();
        let x = update_user_factor(1, &model, &ds, &index, &hp).unwrap();
        model.user_factors.set_column(1, &x);
        let base = objective(&model, &ds, &index, &hp);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let mut pert = model.clone();
            let mut delta = DVector::from_fn(hp.factors, |_, _| rng.gen_range(-1.0..1.0));
            let n = delta.norm();
            if n > 0.0 {
                delta /= n;
            }
            let col = (pert.user_factors.column(1) + delta * 1e-3).clone_owned();
            pert.user_factors.set_column(1, &col);
            assert!(objective(&pert, &ds, &index, &hp) >= base - 1e-12);
        }
    }

    #[test]
    fn train_objective_monotone() {
        let (ds, gu, gi, hp) = random_instance(5, 5, 4, 2);
        let hp = Hyperparameters {
            max_iters: 50,
            rel_tol: 0.0,
            ..hp
        };
        let (_, report) = train(&ds, &gu, &gi, &hp, None, None).unwrap();
        for w in report.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-10 * w[0].abs(),
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn zero_alpha_matches_smoothness_off() {
        let (ds, gu, gi, hp) = random_instance(6, 4, 3, 2);
        let hp_alpha0 = Hyperparameters {
            alpha: 0.0,
            max_iters: 10,
            ..hp.clone()
        };
        let hp_off = Hyperparameters {
            lambda_f: 0.0,
            lambda_g: 0.0,
            max_iters: 10,
            ..hp
        };
        let (m1, _) = train(&ds, &gu, &gi, &hp_alpha0, None, None).unwrap();
        let (m2, _) = train(&ds, &gu, &gi, &hp_off, None, None).unwrap();
        assert!((&m1.user_factors - &m2.user_factors).abs().max() <= 1e-10);
        assert!((&m1.item_factors - &m2.item_factors).abs().max() <= 1e-10);
    }

    #[test]
    fn predict_basics() {
        let mut model = FactorModel {
            factors: 2,
            user_factors: DMatrix::zeros(2, 2),
            item_factors: DMatrix::zeros(2, 2),
            user_prior_mean: DMatrix::zeros(2, 2),
            item_prior_mean: DMatrix::zeros(2, 2),
        };
        model.user_factors[(0, 0)] = 1.0;
        model.user_factors[(1, 0)] = 2.0;
        model.item_factors[(0, 0)] = 3.0;
        model.item_factors[(1, 0)] = -1.0;
        assert!((model.predict(0, 0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(model.predict(0, 1).unwrap(), 0.0);
        assert!(model.predict(5, 0).is_err());
    }

    #[test]
    fn recommend_ordering_and_ties() {
        let mut model = FactorModel {
            factors: 1,
            user_factors: DMatrix::from_element(1, 1, 1.0),
            item_factors: DMatrix::zeros(1, 6),
            user_prior_mean: DMatrix::zeros(1, 1),
            item_prior_mean: DMatrix::zeros(1, 6),
        };
        for (j, s) in [(0, 0.9), (1, 0.5), (2, 0.7), (3, 0.0), (4, 0.5), (5, 0.5)] {
            model.item_factors[(0, j)] = s;
        }
        let train_ds = RatingDataset::from_triples(1, 6, vec![(0, 3, 1.0)], RatingMode::Explicit);
        let recs = recommend_top_m(&model, &train_ds, 0, 4);
        // 0.9 then 0.7 then the 0.5 ties in ascending index order (1, 4)
        assert_eq!(recs, vec![0, 2, 1, 4]);

        let all_rated = RatingDataset::from_triples(
            1,
            2,
            vec![(0, 0, 1.0), (0, 1, 1.0)],
            RatingMode::Explicit,
        );
        let model2 = FactorModel {
            factors: 1,
            user_factors: DMatrix::zeros(1, 1),
            item_factors: DMatrix::zeros(1, 2),
            user_prior_mean: DMatrix::zeros(1, 1),
            item_prior_mean: DMatrix::zeros(1, 2),
        };
        assert!(recommend_top_m(&model2, &all_rated, 0, 3).is_empty());
    }

    #[test]
    fn checkpoint_round_trip() {
        let ds = RatingDataset::from_triples(3, 4, vec![(0, 0, 1.0)], RatingMode::Explicit);
        let hp = Hyperparameters {
            factors: 2,
            ..Default::default()
        };
        let model = init_model(&ds, &hp, None, None).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        model.save(f.path()).unwrap();
        let back = FactorModel::load(f.path()).unwrap();
        assert_eq!(back.user_factors, model.user_factors);
        assert_eq!(back.item_factors, model.item_factors);
    }

    #[test]
    fn pairwise_empty_graph_matches_plain_run() {
        let (ds, _, _, hp) = random_instance(8, 4, 3, 2);
        let hp = Hyperparameters {
            lambda_f: 0.0,
            lambda_g: 0.0,
            max_iters: 10,
            ..hp
        };
        let pg = PairwiseGraph {
            num_users: ds.num_users,
            num_items: ds.num_items,
            edges: vec![],
        };
        let (m1, _) = train_pairwise(&ds, &pg, &hp, None, None).unwrap();
        let (m2, _) = train_with_index(&ds, &empty_index(), &hp, None, None).unwrap();
        assert!((&m1.user_factors - &m2.user_factors).abs().max() <= 1e-10);
        assert!((&m1.item_factors - &m2.item_factors).abs().max() <= 1e-10);
    }
}
