//! Show where graph smoothing pays off: hold the data fixed, remove
//! growing fractions of the training ratings, and watch the gap to plain
//! factorization widen.
//!
//! Run with: cargo run --release --example sparsity_sweep

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rscgm::affinity::{AffinityGraph, Entity};
use rscgm::baselines::train_bmf;
use rscgm::dataset::{sample_ratings, RatingDataset, RatingMode};
use rscgm::model::{train, FactorModel, Hyperparameters};

fn main() {
    // low-rank ground truth with clustered users and items
    let (users, items, k, clusters) = (80usize, 80usize, 3usize, 8usize);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut u_true = DMatrix::zeros(k, users);
    let mut v_true = DMatrix::zeros(k, items);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..2 * k).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    for x in 0..users {
        for d in 0..k {
            u_true[(d, x)] = centers[x % clusters][d];
        }
    }
    for x in 0..items {
        for d in 0..k {
            v_true[(d, x)] = centers[x % clusters][k + d];
        }
    }
    let full = u_true.transpose() * &v_true;
    let ds = RatingDataset::from_triples(
        users,
        items,
        (0..users as u32)
            .flat_map(|i| (0..items as u32).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, full[(i as usize, j as usize)]))
            .collect(),
        RatingMode::Explicit,
    );

    // planted graphs connect same-cluster entities
    let planted = |entity, n: usize| {
        let mut e = Vec::new();
        for a in 0..n as u32 {
            for b in (a + 1)..n as u32 {
                if a as usize % clusters == b as usize % clusters {
                    e.push((a, b, 0.9));
                }
            }
        }
        AffinityGraph::from_edges(entity, n, e)
    };
    let gu = planted(Entity::User, users);
    let gi = planted(Entity::Item, items);

    let hp = Hyperparameters {
        factors: k,
        lambda_f: 1.0,
        lambda_g: 1.0,
        alpha: 0.5,
        max_iters: 25,
        ..Default::default()
    };

    let rmse_all = |m: &FactorModel| {
        let se: f64 = ds
            .triples
            .iter()
            .map(|r| (m.score(r.user, r.item) - r.value).powi(2))
            .sum();
        (se / ds.len() as f64).sqrt()
    };

    println!(
        "{:>8} {:>10} {:>12} {:>12} {:>8}",
        "removed", "train obs", "smoothed", "plain", "gap"
    );
    for remove in [0.5, 0.7, 0.85, 0.95] {
        let train_ds = sample_ratings(&ds, remove, 17);
        let (m_smooth, _) = train(&train_ds, &gu, &gi, &hp, None, None).expect("smoothed");
        let (m_plain, _) = train_bmf(&train_ds, &hp, None, None).expect("plain");
        let (rs, rp) = (rmse_all(&m_smooth), rmse_all(&m_plain));
        println!(
            "{:>7.0}% {:>10} {:>12.4} {:>12.4} {:>8.4}",
            remove * 100.0,
            train_ds.len(),
            rs,
            rp,
            rp - rs
        );
    }
}
