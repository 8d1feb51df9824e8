//! Values recorded once from fixed seeds and pinned so that any change to
//! sampling, generation or training order shows up as a diff.

use patnet::graph::{
    generate_synthetic, split, EntityKind, RelationKind, SplitSpec, SyntheticConfig, Triple,
    TripleStore,
};
use patnet::models::ModelKind;
use patnet::proximity::{nearest_neighbors, TransformMode};
use patnet::trainer::{desk_config, train, TrainConfig};

fn seed7_graph() -> TripleStore {
    generate_synthetic(&SyntheticConfig::new(5, 200, 40, 10, 0.02, 0.001, 7)).unwrap()
}

#[test]
fn twenty_triple_split_is_pinned() {
    let mut s = TripleStore::new();
    let p: Vec<usize> = (0..21)
        .map(|i| s.add_entity(EntityKind::Patent, &format!("p{i}")))
        .collect();
    for i in 1..21 {
        s.add_triple(Triple::new(p[i], RelationKind::Cite, p[i - 1]))
            .unwrap();
    }
    let (train_part, test) = split(
        &s,
        SplitSpec {
            test_fraction: 0.1,
            seed: 42,
        },
    )
    .unwrap();
    assert_eq!(
        test,
        vec![
            Triple::new(p[2], RelationKind::Cite, p[1]),
            Triple::new(p[8], RelationKind::Cite, p[7]),
        ]
    );
    assert_eq!(train_part.len(), 18);
}

#[test]
fn synthetic_counts_are_pinned() {
    let stats = seed7_graph().stats();
    // patent, inventor, assignee, group, subsection
    assert_eq!(stats.entities, [1000, 200, 50, 5, 2]);
    // cite, write, own, contain, comprise
    assert_eq!(stats.triples, [1194, 1506, 1000, 1055, 5]);
    assert_eq!(stats.total_triples(), 4760);
}

#[test]
fn transe_loss_falls_over_two_hundred_epochs() {
    let g = seed7_graph();
    let config = TrainConfig {
        epochs: 200,
        dim: 50,
        seed: 7,
        ..desk_config(ModelKind::TransEL2)
    };
    let (_, report) = train(&g, ModelKind::TransEL2, &config).unwrap();
    let (first, last) = (report.epoch_losses[0], report.epoch_losses[199]);
    assert!(last < first, "loss rose from {first} to {last}");
    assert!(
        (first - 4.0190759429718685).abs() < 1e-9,
        "first epoch loss {first}"
    );
    assert!(
        (last - 1.2334271848777807).abs() < 1e-9,
        "last epoch loss {last}"
    );
}

#[test]
fn sole_authored_patent_is_a_top_five_neighbor() {
    let g = seed7_graph();
    let config = TrainConfig {
        seed: 7,
        ..desk_config(ModelKind::TransEL2)
    };
    let (params, _) = train(&g, ModelKind::TransEL2, &config).unwrap();
    let (inventor, patent) = g
        .entities_of_kind(EntityKind::Inventor)
        .iter()
        .find_map(|&i| {
            g.tails(i, RelationKind::Write)
                .iter()
                .find(|&&p| g.heads(p, RelationKind::Write) == [i])
                .map(|&p| (i, p))
        })
        .expect("some patent has a single inventor");
    let hits = nearest_neighbors(
        &params,
        &g,
        g.entity(inventor).unwrap(),
        5,
        Some(&[EntityKind::Patent]),
        TransformMode::Algebraic,
    )
    .unwrap();
    assert!(
        hits.iter().any(|h| h.entity.ordinal == patent),
        "{} not among {:?}",
        g.entity(patent).unwrap(),
        hits.iter()
            .map(|h| h.entity.to_string())
            .collect::<Vec<_>>()
    );
}
