//! Compare the decomposed (joint) smoothness formulation against the
//! explicit user-item pairwise graph: same regularization idea, very
//! different cost.
//!
//! Run with: cargo run --release --example pairwise_vs_joint

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rscgm::affinity::{AffinityGraph, Entity, PairwiseCombiner};
use rscgm::dataset::{RatingDataset, RatingMode};
use rscgm::model::{train_pairwise, train_with_index, Hyperparameters};
use rscgm::smoothness::build_smoothness_index;
use rscgm::build_pairwise_graph;

fn main() {
    let n = 40usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut triples = Vec::new();
    for u in 0..n as u32 {
        for j in 0..n as u32 {
            if rng.gen_bool(0.3) {
                triples.push((u, j, rng.gen_range(1.0..5.0)));
            }
        }
    }
    let ds = RatingDataset::from_triples(n, n, triples, RatingMode::Explicit);

    let dense = |entity| {
        let mut e = Vec::new();
        for a in 0..n as u32 {
            for b in (a + 1)..n as u32 {
                e.push((a, b, 0.5));
            }
        }
        AffinityGraph::from_edges(entity, n, e)
    };
    let gu = dense(Entity::User);
    let gi = dense(Entity::Item);
    println!(
        "{} ratings, dense graphs with {} user and {} item edges",
        ds.len(),
        gu.num_edges(),
        gi.num_edges()
    );

    let hp = Hyperparameters {
        factors: 3,
        lambda_f: 0.5,
        lambda_g: 0.5,
        lambda_p: 0.5,
        max_iters: 2,
        rel_tol: 0.0,
        ..Default::default()
    };

    let t = Instant::now();
    let index = build_smoothness_index(&gu, &gi, &ds, hp.alpha, hp.epsilon_conf);
    let (m_joint, _) = train_with_index(&ds, &index, &hp, None, None).expect("joint");
    let joint_secs = t.elapsed().as_secs_f64();
    println!(
        "joint:    {} user + {} item smoothness terms, {:.3}s",
        index.user_triples.len(),
        index.item_triples.len(),
        joint_secs
    );

    let t = Instant::now();
    let pg = build_pairwise_graph(&gu, &gi, PairwiseCombiner::Product, &ds).expect("pairwise graph");
    let (m_pair, _) = train_pairwise(&ds, &pg, &hp, None, None).expect("pairwise");
    let pair_secs = t.elapsed().as_secs_f64();
    println!(
        "pairwise: {} pair edges, {:.3}s ({:.1}x slower)",
        pg.edges.len(),
        pair_secs,
        pair_secs / joint_secs
    );

    // both land on similar predictions for observed cells
    let mut diff = 0.0f64;
    for r in ds.triples.iter().take(200) {
        diff = diff.max((m_joint.score(r.user, r.item) - m_pair.score(r.user, r.item)).abs());
    }
    println!("max prediction difference over 200 observed cells: {diff:.3}");
}
