//! Train every method on the same data and compare held-out rating error.
//!
//! Run with: cargo run --example baselines_comparison

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rscgm::baselines::{fit_icf, train_bmf, train_harmonic_ssl, train_lfr, Predictor};
use rscgm::dataset::{kfold, RatingDataset, RatingMode};
use rscgm::eval::evaluate_rating_model;
use rscgm::model::{train, Hyperparameters};
use rscgm::{build_affinity_graph, Entity, GraphSource};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (users, items) = (40usize, 30usize);
    let mut triples = Vec::new();
    for u in 0..users as u32 {
        for j in 0..items as u32 {
            let affinity: f64 = if u % 4 == j % 4 { 4.5 } else { 2.5 };
            if rng.gen_bool(0.35) {
                triples.push((u, j, (affinity + rng.gen_range(-0.7..0.7)).clamp(1.0, 5.0)));
            }
        }
    }
    let ds = RatingDataset::from_triples(users, items, triples, RatingMode::Explicit);
    let fold = &kfold(&ds, 5, 3).expect("folds")[0];

    let gu = build_affinity_graph(&fold.train, Entity::User, GraphSource::RatingPcc, 2, 20, None, None)
        .expect("user graph");
    let gi = build_affinity_graph(&fold.train, Entity::Item, GraphSource::RatingPcc, 2, 20, None, None)
        .expect("item graph");

    let hp = Hyperparameters {
        factors: 4,
        lambda_f: 0.2,
        lambda_g: 0.2,
        max_iters: 30,
        ..Default::default()
    };

    let mut results: Vec<(&str, Box<dyn Predictor>)> = Vec::new();
    results.push((
        "graph-smoothed",
        Box::new(train(&fold.train, &gu, &gi, &hp, None, None).expect("rscgm").0),
    ));
    results.push((
        "plain factorization",
        Box::new(train_bmf(&fold.train, &hp, None, None).expect("bmf").0),
    ));
    results.push((
        "user laplacian",
        Box::new(train_lfr(&fold.train, Some(&gu), None, &hp, None, None).expect("ulfr").0),
    ));
    results.push((
        "user+item laplacian",
        Box::new(
            train_lfr(&fold.train, Some(&gu), Some(&gi), &hp, None, None)
                .expect("uilfr")
                .0,
        ),
    ));
    results.push((
        "item neighbors",
        Box::new(fit_icf(&fold.train, &gi, 20).expect("icf")),
    ));
    results.push((
        "harmonic propagation",
        Box::new(train_harmonic_ssl(&fold.train, &gi, 1e-6, 1000).expect("harmonic")),
    ));

    println!("{:<22} {:>8} {:>8}", "method", "MAE", "RMSE");
    for (name, predictor) in &results {
        let m = evaluate_rating_model(predictor.as_ref(), &fold.test).expect("metrics");
        println!("{:<22} {:>8.4} {:>8.4}", name, m.mae, m.rmse);
    }
}
