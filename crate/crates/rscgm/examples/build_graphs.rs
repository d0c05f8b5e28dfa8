//! Build user and item affinity graphs from ratings, a social network and
//! tag assignments, then write and reload an edge list.
//!
//! Run with: cargo run --example build_graphs

use std::collections::HashSet;

use rscgm::dataset::{RatingDataset, RatingMode, SocialEdges, TagAssignments};
use rscgm::{build_affinity_graph, AffinityGraph, Entity, GraphSource};

fn main() {
    // three taste groups of users rating overlapping item sets
    let mut triples = Vec::new();
    for u in 0..15u32 {
        let group = u % 3;
        for j in 0..12u32 {
            if j % 3 == group {
                triples.push((u, j, 4.0 + (u % 2) as f64));
            } else if (u + j) % 4 == 0 {
                triples.push((u, j, 2.0 + (j % 2) as f64));
            }
        }
    }
    let ds = RatingDataset::from_triples(15, 12, triples, RatingMode::Explicit);

    let g_user = build_affinity_graph(&ds, Entity::User, GraphSource::RatingPcc, 2, 10, None, None)
        .expect("user graph");
    println!(
        "user graph from rating correlation: {} nodes, {} edges",
        g_user.num_nodes,
        g_user.num_edges()
    );
    for &(a, b, w) in g_user.edges().iter().take(5) {
        println!("  u{a} -- u{b}  weight {w:.3}");
    }

    let g_item = build_affinity_graph(&ds, Entity::Item, GraphSource::RatingPcc, 2, 10, None, None)
        .expect("item graph");
    println!(
        "item graph from rating correlation: {} edges",
        g_item.num_edges()
    );

    // social edges become unit-weight user edges
    let social = SocialEdges {
        edges: vec![(0, 3), (3, 6), (1, 4), (2, 5)],
    };
    let g_social = build_affinity_graph(
        &ds,
        Entity::User,
        GraphSource::Social,
        2,
        10,
        Some(&social),
        None,
    )
    .expect("social graph");
    println!("social user graph: {} edges, all weight 1", g_social.num_edges());

    // tag overlap drives item similarity
    let tag = |xs: &[u32]| xs.iter().copied().collect::<HashSet<u32>>();
    let mut tags = vec![HashSet::new(); 12];
    for j in 0..12usize {
        tags[j] = match j % 3 {
            0 => tag(&[1, 2, 3]),
            1 => tag(&[3, 4]),
            _ => tag(&[5]),
        };
    }
    let tags = TagAssignments { tags, topics: None };
    let g_tags = build_affinity_graph(
        &ds,
        Entity::Item,
        GraphSource::TagJaccard,
        2,
        10,
        None,
        Some(&tags),
    )
    .expect("tag graph");
    println!("tag-based item graph: {} edges", g_tags.num_edges());

    // the text dump round-trips exactly enough for training
    let path = std::env::temp_dir().join("rscgm_example_user.graph");
    g_user.save(&path).expect("save");
    let reloaded = AffinityGraph::load(&path).expect("load");
    assert_eq!(reloaded.num_edges(), g_user.num_edges());
    println!("saved and reloaded edge list at {}", path.display());
}
