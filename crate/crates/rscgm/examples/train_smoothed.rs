//! Train the graph-smoothed factorization model end to end: build graphs,
//! train, inspect the objective trace, predict and recommend.
//!
//! Run with: cargo run --example train_smoothed

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rscgm::dataset::{RatingDataset, RatingMode};
use rscgm::model::{recommend_top_m, train, FactorModel, Hyperparameters};
use rscgm::{build_affinity_graph, Entity, GraphSource};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (users, items) = (30usize, 25usize);
    let mut triples = Vec::new();
    for u in 0..users as u32 {
        for j in 0..items as u32 {
            // block-structured preferences plus noise
            let base: f64 = if u / 10 == j / 9 { 4.0 } else { 2.0 };
            if rng.gen_bool(0.4) {
                triples.push((u, j, (base + rng.gen_range(-0.5..0.5)).clamp(1.0, 5.0)));
            }
        }
    }
    let ds = RatingDataset::from_triples(users, items, triples, RatingMode::Explicit);
    println!("{} users, {} items, {} ratings", users, items, ds.len());

    let g_user = build_affinity_graph(&ds, Entity::User, GraphSource::RatingPcc, 2, 20, None, None)
        .expect("user graph");
    let g_item = build_affinity_graph(&ds, Entity::Item, GraphSource::RatingPcc, 2, 20, None, None)
        .expect("item graph");
    println!(
        "graphs: {} user edges, {} item edges",
        g_user.num_edges(),
        g_item.num_edges()
    );

    let hp = Hyperparameters {
        factors: 4,
        lambda_f: 0.2,
        lambda_g: 0.2,
        alpha: 0.5,
        max_iters: 40,
        ..Default::default()
    };
    let (model, report) = train(&ds, &g_user, &g_item, &hp, None, None).expect("training");

    println!(
        "trained {} sweeps in {:.3}s, converged: {}",
        report.iterations_run, report.wall_time_secs, report.converged
    );
    println!("objective trace (first 5 sweeps):");
    for (i, obj) in report.objective_trace.iter().take(6).enumerate() {
        println!("  sweep {i}: {obj:.6e}");
    }

    let r = model.predict(0, 0).expect("prediction");
    println!("predicted rating for user 0, item 0: {r:.3}");

    let recs = recommend_top_m(&model, &ds, 0, 5);
    println!("top-5 unrated recommendations for user 0: {recs:?}");

    // checkpoints hold the factor matrices only
    let path = std::env::temp_dir().join("rscgm_example_model.bin");
    model.save(&path).expect("save checkpoint");
    let reloaded = FactorModel::load(&path).expect("load checkpoint");
    assert_eq!(reloaded.score(0, 0), model.score(0, 0));
    println!("checkpoint round-trip at {}", path.display());
}
