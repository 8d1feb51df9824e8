#![allow(dead_code)]

use patnet::graph::{EntityKind, RelationKind, Triple, TripleStore};
use patnet::models::{ModelKind, ModelParams, RelationBlock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Copy of `params` with one change applied to its raw tables.
pub fn perturbed(
    params: &ModelParams,
    edit: impl FnOnce(&mut Vec<f64>, &mut Vec<RelationBlock>),
) -> ModelParams {
    let mut entities = params.entity_table().to_vec();
    let mut relations = params.relations().to_vec();
    edit(&mut entities, &mut relations);
    ModelParams::from_parts(
        params.kind(),
        params.dim(),
        entities,
        relations,
        params.fingerprint().to_string(),
    )
    .unwrap()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest |h + r - t| component, where TransE_L1 has its kinks.
fn l1_kink_distance(p: &ModelParams, h: usize, r: RelationKind, t: usize) -> f64 {
    let (hv, tv, rv) = (
        p.entity(h).unwrap(),
        p.entity(t).unwrap(),
        &p.relation(r).vector,
    );
    (0..p.dim())
        .map(|i| (hv[i] + rv[i] - tv[i]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Largest norm-wise relative error between analytic and central-difference
/// gradients over `n_triples` random triples. Returns (error, triples checked).
pub fn max_gradient_error(
    kind: ModelKind,
    dim: usize,
    n_triples: usize,
    step: f64,
    seed: u64,
) -> (f64, usize) {
    let n_entities = 24;
    let params = patnet::models::init_params(kind, n_entities, dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF1D1);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..n_triples {
        let h = rng.random_range(0..n_entities);
        let t = (h + rng.random_range(1..n_entities)) % n_entities;
        let r = RelationKind::ALL[rng.random_range(0..5)];
        let g = params.grad(h, r, t).unwrap();
        if g.non_differentiable
            || (kind == ModelKind::TransEL1 && l1_kink_distance(&params, h, r, t) < 10.0 * step)
        {
            continue;
        }
        let ri = r.index();
        let central = |edit: &dyn Fn(&mut Vec<f64>, &mut Vec<RelationBlock>, f64)| {
            let plus = perturbed(&params, |e, rel| edit(e, rel, step));
            let minus = perturbed(&params, |e, rel| edit(e, rel, -step));
            (plus.score(h, r, t).unwrap() - minus.score(h, r, t).unwrap()) / (2.0 * step)
        };
        let w = params.entity_width();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for i in 0..w {
            analytic.push(g.head[i]);
            numeric.push(central(&|e, _, d| e[h * w + i] += d));
            analytic.push(g.tail[i]);
            numeric.push(central(&|e, _, d| e[t * w + i] += d));
        }
        for i in 0..g.relation_vector.len() {
            analytic.push(g.relation_vector[i]);
            numeric.push(central(&|_, rel, d| rel[ri].vector[i] += d));
        }
        for i in 0..g.relation_matrix.len() {
            analytic.push(g.relation_matrix[i]);
            numeric.push(central(&|_, rel, d| rel[ri].matrix[i] += d));
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = l2(&analytic).max(l2(&numeric)).max(1e-12);
        worst = worst.max(l2(&diff) / scale);
        checked += 1;
    }
    (worst, checked)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMetrics {
    pub mr: f64,
    pub mrr: f64,
    pub hits: [f64; 3],
}

/// Scores every same-kind candidate for both sides of every test triple.
pub fn brute_force_metrics(
    params: &ModelParams,
    store: &TripleStore,
    test: &[Triple],
) -> OracleMetrics {
    let mut ranks = Vec::new();
    for t in test {
        let truth = params.score(t.head, t.relation, t.tail).unwrap();
        let (hk, tk) = t.relation.schema();
        for (side_kind, is_head) in [(hk, true), (tk, false)] {
            let original = if is_head { t.head } else { t.tail };
            let (mut better, mut ties) = (0.0, 0.0);
            for e in store.entities() {
                if e.kind != side_kind || e.ordinal == original {
                    continue;
                }
                let s = if is_head {
                    params.score(e.ordinal, t.relation, t.tail).unwrap()
                } else {
                    params.score(t.head, t.relation, e.ordinal).unwrap()
                };
                if s > truth {
                    better += 1.0;
                } else if s == truth {
                    ties += 1.0;
                }
            }
            ranks.push(1.0 + better + ties / 2.0);
        }
    }
    let n = ranks.len() as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    OracleMetrics {
        mr: ranks.iter().sum::<f64>() / n,
        mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits: [hits(1.0), hits(3.0), hits(10.0)],
    }
}

/// Rows whose pairwise inner products reproduce `gram` (lower Cholesky factor).
pub fn gram_factor(gram: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = gram.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = gram[i][i] - s;
                assert!(d > 0.0, "gram matrix is not positive definite");
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (gram[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// DistMult params with the given entity rows and zero relations, over a
/// vocabulary of `kind` entities named by `ids`.
pub fn fixed_params(
    kind: EntityKind,
    ids: &[String],
    rows: &[Vec<f64>],
) -> (TripleStore, ModelParams) {
    let mut store = TripleStore::new();
    for id in ids {
        store.add_entity(kind, id);
    }
    let dim = rows[0].len();
    let relations = RelationKind::ALL
        .iter()
        .map(|_| RelationBlock {
            vector: vec![0.0; dim],
            matrix: vec![],
        })
        .collect();
    let params = ModelParams::from_parts(
        ModelKind::DistMult,
        dim,
        rows.iter().flatten().copied().collect(),
        relations,
        store.fingerprint(),
    )
    .unwrap();
    (store, params)
}

/// Expected reciprocal rank when the truth is uniform among `n` positions.
pub fn random_baseline_mrr(n: usize) -> f64 {
    (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64
}
