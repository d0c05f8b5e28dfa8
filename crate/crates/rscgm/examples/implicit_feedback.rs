//! Implicit-feedback training: binary observations, asymmetric label
//! confidences for observed versus unobserved cells, and top-M ranking.
//!
//! Run with: cargo run --example implicit_feedback

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rscgm::dataset::{RatingDataset, RatingMode};
use rscgm::eval::evaluate_ranking_model;
use rscgm::model::{recommend_top_m, train, Hyperparameters};
use rscgm::{build_affinity_graph, Entity, GraphSource};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (users, items) = (30usize, 24usize);
    // users interact mostly within their taste group
    let mut all = Vec::new();
    for u in 0..users as u32 {
        for j in 0..items as u32 {
            let p = if u % 4 == j % 4 { 0.7 } else { 0.06 };
            if rng.gen_bool(p) {
                all.push((u, j, 1.0));
            }
        }
    }
    // hold out a quarter of the interactions per user for evaluation
    let mut train_triples = Vec::new();
    let mut test_triples = Vec::new();
    for (ix, &t) in all.iter().enumerate() {
        if ix % 4 == 0 {
            test_triples.push(t);
        } else {
            train_triples.push(t);
        }
    }
    let train_ds = RatingDataset::from_triples(users, items, train_triples, RatingMode::Implicit);
    let test_ds = RatingDataset::from_triples(users, items, test_triples, RatingMode::Implicit);
    println!(
        "{} train interactions, {} held out",
        train_ds.len(),
        test_ds.len()
    );

    let gu = build_affinity_graph(&train_ds, Entity::User, GraphSource::RatingPcc, 2, 15, None, None)
        .expect("user graph");
    let gi = build_affinity_graph(&train_ds, Entity::Item, GraphSource::RatingPcc, 2, 15, None, None)
        .expect("item graph");

    // observed cells carry much more weight than the unobserved zeros
    let hp = Hyperparameters {
        factors: 4,
        lambda_u: 0.01,
        lambda_v: 1.0,
        lambda_f: 0.1,
        lambda_g: 0.1,
        label_conf_a: 1.0,
        label_conf_b: 0.01,
        max_iters: 25,
        ..Default::default()
    };
    let (model, report) = train(&train_ds, &gu, &gi, &hp, None, None).expect("training");
    println!(
        "trained {} sweeps, converged: {}",
        report.iterations_run, report.converged
    );

    let metrics = evaluate_ranking_model(&model, &train_ds, &test_ds, 5, 0.5).expect("ranking");
    println!(
        "precision@5 {:.3}, recall@5 {:.3} over {} users ({} excluded)",
        metrics.precision, metrics.recall, metrics.users_evaluated, metrics.users_excluded
    );

    let recs = recommend_top_m(&model, &train_ds, 0, 5);
    println!("top-5 for user 0: {recs:?} (group {})", 0 % 4);
}
