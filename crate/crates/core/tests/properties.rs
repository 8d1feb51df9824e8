use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;

use patnet::archive::{read_archive, write_archive, Encoding, EPOCH_TIMESTAMP};
use patnet::expansion::{
    auc, domain_agent_proximity, percentiles, DomainState, GroupProximity, PhiMode,
};
use patnet::graph::{
    sample_corrupt, split, CorruptPool, EntityKind, RelationKind, Side, SplitSpec, Triple,
    TripleStore,
};
use patnet::ingestion::GroupUniverse;
use patnet::models::{init_params, ModelKind, ModelParams};
use patnet::proximity::{cosine, transform_rule, TransformMode};

/// A store with `n` patents, a handful of other entities, and the requested
/// cite pairs plus one write/own/contain per patent.
fn store_from(n: usize, cites: &[(usize, usize)]) -> TripleStore {
    let mut s = TripleStore::new();
    let p: Vec<usize> = (0..n)
        .map(|i| s.add_entity(EntityKind::Patent, &format!("p{i}")))
        .collect();
    let inv: Vec<usize> = (0..3)
        .map(|i| s.add_entity(EntityKind::Inventor, &format!("i{i}")))
        .collect();
    let asg = s.add_entity(EntityKind::Assignee, "a0");
    let grp: Vec<usize> = ["H01A", "H01B"]
        .iter()
        .map(|g| s.add_entity(EntityKind::Group, g))
        .collect();
    for (i, &pi) in p.iter().enumerate() {
        s.insert(Triple::new(inv[i % 3], RelationKind::Write, pi))
            .unwrap();
        s.insert(Triple::new(asg, RelationKind::Own, pi)).unwrap();
        s.insert(Triple::new(grp[i % 2], RelationKind::Contain, pi))
            .unwrap();
    }
    for &(a, b) in cites {
        let (a, b) = (a % n, b % n);
        if a != b {
            s.insert(Triple::new(p[a], RelationKind::Cite, p[b]))
                .unwrap();
        }
    }
    s
}

fn cites() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (4usize..30).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..80)))
}

fn net(steps: &[(RelationKind, i8)]) -> [i8; 5] {
    let mut c = [0i8; 5];
    for &(r, s) in steps {
        c[r.index()] += s;
    }
    c
}

fn kind_strategy() -> impl Strategy<Value = EntityKind> {
    prop::sample::select(EntityKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn indices_agree_with_the_triple_list((n, pairs) in cites()) {
        let s = store_from(n, &pairs);
        for t in s.triples() {
            prop_assert!(s.contains(t));
            prop_assert!(s.tails(t.head, t.relation).contains(&t.tail));
            prop_assert!(s.heads(t.tail, t.relation).contains(&t.head));
        }
        let hr: usize = s.index_hr().values().map(Vec::len).sum();
        let tr: usize = s.index_tr().values().map(Vec::len).sum();
        prop_assert_eq!(hr, s.len());
        prop_assert_eq!(tr, s.len());
        let stats = s.stats();
        prop_assert_eq!(stats.total_triples(), s.len());
        prop_assert_eq!(stats.total_entities(), s.entity_count());
    }

    #[test]
    fn split_partitions_the_triples((n, pairs) in cites(), frac in 0.001f64..0.999, seed in any::<u64>()) {
        let s = store_from(n, &pairs);
        let (train, test) = split(&s, SplitSpec { test_fraction: frac, seed }).unwrap();
        prop_assert_eq!(test.len(), (frac * s.len() as f64).round() as usize);
        prop_assert_eq!(train.len() + test.len(), s.len());
        let all: HashSet<Triple> = s.triples().iter().copied().collect();
        let mut seen: HashSet<Triple> = train.triples().iter().copied().collect();
        for t in &test {
            prop_assert!(seen.insert(*t), "duplicate across parts");
        }
        prop_assert_eq!(seen, all);
        let (train2, test2) = split(&s, SplitSpec { test_fraction: frac, seed }).unwrap();
        prop_assert_eq!(test2, test);
        prop_assert_eq!(train2.triples(), train.triples());
    }

    #[test]
    fn corruptions_are_distinct_same_kind_and_filtered(
        (n, pairs) in cites(), k in 1usize..4, tail in any::<bool>(), filtered in any::<bool>(), seed in any::<u64>()
    ) {
        let s = store_from(n, &pairs);
        let t = s.triples()[0];
        let side = if tail { Side::Tail } else { Side::Head };
        match sample_corrupt(&s, &t, k, side, CorruptPool::SameKind, filtered, seed) {
            Ok(out) => {
                prop_assert_eq!(out.len(), k);
                let distinct: HashSet<Triple> = out.iter().copied().collect();
                prop_assert_eq!(distinct.len(), k);
                for c in &out {
                    prop_assert_ne!(c.slot(side), t.slot(side));
                    prop_assert_eq!(c.with_slot(side, t.slot(side)), t);
                    prop_assert_eq!(s.kind_of(c.slot(side)).unwrap(), s.kind_of(t.slot(side)).unwrap());
                    if filtered {
                        prop_assert!(!s.contains(c));
                    }
                }
            }
            Err(e) => prop_assert_eq!(e.code(), "PoolTooSmall"),
        }
    }

    #[test]
    fn auc_is_the_mean_and_order_free(mut entries in prop::collection::vec(0.0f64..=1.0, 1..200), seed in any::<u64>()) {
        let mean = entries.iter().sum::<f64>() / entries.len() as f64;
        let a = auc(&entries).unwrap();
        prop_assert!((a - mean).abs() <= 1e-9);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(entries.as_mut_slice(), &mut rng);
        prop_assert!((auc(&entries).unwrap() - a).abs() <= 1e-12);
    }

    #[test]
    fn percentiles_are_bounded_and_hit_both_ends(values in prop::collection::btree_set(-1000i32..1000, 2..40)) {
        let list: Vec<(String, f64)> = values.iter().map(|v| (v.to_string(), f64::from(*v) / 1000.0)).collect();
        let p = percentiles(&list).unwrap();
        prop_assert!(p.values().all(|x| (0.0..=1.0).contains(x)));
        let max = values.iter().max().unwrap().to_string();
        let min = values.iter().min().unwrap().to_string();
        prop_assert_eq!(p[&max], 1.0);
        prop_assert_eq!(p[&min], 0.0);
    }

    #[test]
    fn domain_agent_proximity_is_a_convex_combination(
        counts in prop::collection::vec(1u64..20, 1..6),
        weights in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let codes: Vec<String> = (0..7).map(|i| format!("H01{}", (b'A' + i as u8) as char)).collect();
        let universe = GroupUniverse::new(codes.clone()).unwrap();
        let mut state = DomainState::new(&universe);
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                state.add_patent([codes[i].as_str()]).unwrap();
            }
        }
        let target = codes[6].as_str();
        let w = |a: &str, _: &str| weights[codes.iter().position(|c| c == a).unwrap()];
        let v = domain_agent_proximity(&state, target, w).unwrap();
        let used: Vec<f64> = (0..counts.len()).map(|i| weights[i]).collect();
        let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn percentiles_ignore_embedding_scale(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let codes: Vec<String> = (0..6).map(|i| format!("H02{}", (b'A' + i as u8) as char)).collect();
        let mut vocab = TripleStore::new();
        for c in &codes {
            vocab.add_entity(EntityKind::Group, c);
        }
        let base = init_params(ModelKind::DistMult, codes.len(), 5, seed).with_fingerprint(vocab.fingerprint());
        let scaled = ModelParams::from_parts(
            ModelKind::DistMult,
            5,
            base.entity_table().iter().map(|x| x * scale).collect(),
            base.relations().to_vec(),
            vocab.fingerprint(),
        ).unwrap();
        let universe = GroupUniverse::new(codes.clone()).unwrap();
        let a = GroupProximity::from_params(&base, &vocab, &universe, PhiMode::Raw).unwrap();
        let b = GroupProximity::from_params(&scaled, &vocab, &universe, PhiMode::Raw).unwrap();
        let mut state = DomainState::new(&universe);
        state.add_patent([codes[0].as_str(), codes[1].as_str()]).unwrap();
        let rank = |g: &GroupProximity| {
            let list: Vec<(String, f64)> = codes[2..]
                .iter()
                .map(|t| (t.clone(), domain_agent_proximity(&state, t, |x, y| g.get(x, y).unwrap()).unwrap()))
                .collect();
            percentiles(&list).unwrap()
        };
        prop_assert_eq!(rank(&a), rank(&b));
    }

    #[test]
    fn distmult_is_symmetric(seed in any::<u64>(), dim in 1usize..32) {
        let p = init_params(ModelKind::DistMult, 2, dim, seed);
        for r in RelationKind::ALL {
            let (a, b) = (p.score(0, r, 1).unwrap(), p.score(1, r, 0).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn transe_ignores_a_common_shift(seed in any::<u64>(), shift in prop::collection::vec(-2.0f64..2.0, 6), l1 in any::<bool>()) {
        let kind = if l1 { ModelKind::TransEL1 } else { ModelKind::TransEL2 };
        let p = init_params(kind, 2, 6, seed);
        let shifted = ModelParams::from_parts(
            kind,
            6,
            p.entity_table().iter().enumerate().map(|(i, x)| x + shift[i % 6]).collect(),
            p.relations().to_vec(),
            String::new(),
        ).unwrap();
        let (a, b) = (p.score(0, RelationKind::Cite, 1).unwrap(), shifted.score(0, RelationKind::Cite, 1).unwrap());
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn rotate_keeps_modulus(seed in any::<u64>(), dim in 1usize..32) {
        let p = init_params(ModelKind::RotatE, 1, dim, seed);
        let h = p.entity(0).unwrap();
        let (re, im) = h.split_at(dim);
        for r in RelationKind::ALL {
            let theta = &p.relation(r).vector;
            for i in 0..dim {
                let (c, s) = (theta[i].cos(), theta[i].sin());
                let before = re[i].hypot(im[i]);
                let after = (re[i] * c - im[i] * s).hypot(re[i] * s + im[i] * c);
                prop_assert!((before - after).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cosine_is_bounded_and_scale_free(
        u in prop::collection::vec(-10.0f64..10.0, 1..16),
        k in 0.001f64..1000.0,
    ) {
        prop_assume!(u.iter().any(|x| *x != 0.0));
        let v: Vec<f64> = u.iter().rev().copied().collect();
        let c = cosine(&u, &v).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        let scaled: Vec<f64> = u.iter().map(|x| x * k).collect();
        prop_assert!((cosine(&scaled, &v).unwrap() - c).abs() <= 1e-12);
    }

    #[test]
    fn algebraic_transforms_compose(f in kind_strategy(), m in kind_strategy(), t in kind_strategy()) {
        let direct = net(&transform_rule(f, t, TransformMode::Algebraic).steps);
        let first = net(&transform_rule(m, t, TransformMode::Algebraic).steps);
        let second = net(&transform_rule(f, m, TransformMode::Algebraic).steps);
        let composed: Vec<i8> = first.iter().zip(&second).map(|(a, b)| a + b).collect();
        prop_assert_eq!(direct.to_vec(), composed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn f64_archives_round_trip_bit_exactly(kind in prop::sample::select(ModelKind::ALL.to_vec()), seed in any::<u64>(), dim in 1usize..6) {
        let store = store_from(5, &[(0, 1), (2, 3)]);
        let params = init_params(kind, store.entity_count(), dim, seed).with_fingerprint(store.fingerprint());
        let dir = tempfile::tempdir().unwrap();
        write_archive(dir.path(), &params, &store, Encoding::F64, EPOCH_TIMESTAMP).unwrap();
        let back = read_archive(dir.path()).unwrap();
        prop_assert_eq!(&back.params, &params);
        prop_assert_eq!(back.vocabulary.vocabulary_tsv(), store.vocabulary_tsv());
    }
}

#[test]
fn guide_table_disagrees_with_algebra_for_every_cross_kind_pair() {
    let mut pairs = BTreeSet::new();
    for f in EntityKind::ALL {
        for t in EntityKind::ALL {
            let g = net(&transform_rule(f, t, TransformMode::GuideTable).steps);
            let a = net(&transform_rule(f, t, TransformMode::Algebraic).steps);
            if f != t {
                assert_ne!(g, a);
                pairs.insert((f.index(), t.index()));
            }
        }
    }
    assert_eq!(pairs.len(), 20);
}
