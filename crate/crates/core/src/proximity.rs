//! Knowledge proximity: cosine similarity between a focal entity and a
//! target entity moved into the focal entity's kind by adding signed
//! relation vectors.
//!
//! Two rule tables are provided. [`TransformMode::Algebraic`] follows from
//! `head + relation ≈ tail` over the schema directions: every kind has an
//! offset that carries it into patent space (`inventor + write`,
//! `assignee + own`, `group + contain`, `subsection + comprise + contain`),
//! and moving kind T to kind F adds `offset(T) - offset(F)`.
//! [`TransformMode::GuideTable`] is the commonly circulated guide table,
//! whose signs are the exact opposite of the algebraic ones.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityKind, EntityRef, RelationKind, TripleStore};
use crate::models::{ModelKind, ModelParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformMode {
    GuideTable,
    #[default]
    Algebraic,
}

impl std::str::FromStr for TransformMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "guide-table" => Ok(TransformMode::GuideTable),
            "algebraic" => Ok(TransformMode::Algebraic),
            _ => Err(format!(
                "unknown transform mode {s:?} (guide-table|algebraic)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformRule {
    pub focal: EntityKind,
    pub target: EntityKind,
    /// Signed relation vectors added to the target embedding, in order.
    pub steps: Vec<(RelationKind, i8)>,
}

use EntityKind as K;
use RelationKind::{Comprise, Contain, Own, Write};

/// Row = focal kind, column = target kind, both in `EntityKind::ALL` order.
const GUIDE_TABLE: [[&[(RelationKind, i8)]; 5]; 5] = [
    // focal patent
    [
        &[],
        &[(Write, -1)],
        &[(Own, -1)],
        &[(Contain, -1)],
        &[(Contain, -1), (Comprise, -1)],
    ],
    // focal inventor
    [
        &[(Write, 1)],
        &[],
        &[(Write, 1), (Own, -1)],
        &[(Write, 1), (Contain, -1)],
        &[(Write, 1), (Contain, -1), (Comprise, -1)],
    ],
    // focal assignee
    [
        &[(Own, 1)],
        &[(Own, 1), (Write, -1)],
        &[],
        &[(Own, 1), (Contain, -1)],
        &[(Own, 1), (Contain, -1), (Comprise, -1)],
    ],
    // focal group
    [
        &[(Contain, 1)],
        &[(Contain, 1), (Write, -1)],
        &[(Contain, 1), (Own, -1)],
        &[],
        &[(Comprise, -1)],
    ],
    // focal subsection
    [
        &[(Comprise, 1), (Contain, 1)],
        &[(Comprise, 1), (Contain, 1), (Write, -1)],
        &[(Comprise, 1), (Contain, 1), (Own, -1)],
        &[(Comprise, 1)],
        &[],
    ],
];

/// Net relation coefficients carrying `kind` into patent space.
fn patent_offset(kind: EntityKind) -> [i8; 5] {
    let mut c = [0i8; 5];
    match kind {
        K::Patent => {}
        K::Inventor => c[Write.index()] = 1,
        K::Assignee => c[Own.index()] = 1,
        K::Group => c[Contain.index()] = 1,
        K::Subsection => {
            c[Comprise.index()] = 1;
            c[Contain.index()] = 1;
        }
    }
    c
}

pub fn transform_rule(focal: EntityKind, target: EntityKind, mode: TransformMode) -> TransformRule {
    let steps = match mode {
        TransformMode::GuideTable => GUIDE_TABLE[focal.index()][target.index()].to_vec(),
        TransformMode::Algebraic => {
            let (t, f) = (patent_offset(target), patent_offset(focal));
            RelationKind::ALL
                .iter()
                .filter_map(|&r| {
                    let c = t[r.index()] - f[r.index()];
                    (c != 0).then_some((r, c))
                })
                .collect()
        }
    };
    TransformRule {
        focal,
        target,
        steps,
    }
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn supports_vector_arithmetic(kind: ModelKind) -> bool {
    matches!(
        kind,
        ModelKind::TransEL1 | ModelKind::TransEL2 | ModelKind::DistMult
    )
}

/// Embedding of `target` expressed in `focal_kind`. Complex models yield the
/// flattened real row.
pub fn transform(
    params: &ModelParams,
    target: &EntityRef,
    focal_kind: EntityKind,
    mode: TransformMode,
) -> Result<Vec<f64>> {
    let mut v = params.entity(target.ordinal)?.to_vec();
    if focal_kind == target.kind {
        return Ok(v);
    }
    if !supports_vector_arithmetic(params.kind()) {
        return Err(Error::UnsupportedModel {
            model: params.kind(),
            what: format!("transforming {} into {}", target.kind, focal_kind),
        });
    }
    for (r, sign) in transform_rule(focal_kind, target.kind, mode).steps {
        let s = f64::from(sign);
        v.iter_mut()
            .zip(&params.relation(r).vector)
            .for_each(|(x, y)| *x += s * y);
    }
    Ok(v)
}

pub fn knowledge_proximity(
    params: &ModelParams,
    focal: &EntityRef,
    target: &EntityRef,
    mode: TransformMode,
) -> Result<f64> {
    let f = params.entity(focal.ordinal)?;
    let t = transform(params, target, focal.kind, mode)?;
    cosine(f, &t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborHit {
    pub entity: EntityRef,
    pub proximity: f64,
}

impl NeighborHit {
    pub fn kind(&self) -> EntityKind {
        self.entity.kind
    }
}

/// Top-`k` entities by proximity to `focal`, descending, ties by ordinal.
pub fn nearest_neighbors(
    params: &ModelParams,
    vocabulary: &TripleStore,
    focal: &EntityRef,
    k: usize,
    kind_filter: Option<&[EntityKind]>,
    mode: TransformMode,
) -> Result<Vec<NeighborHit>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if vocabulary.entity_count() != params.n_entities() {
        return Err(Error::FingerprintMismatch {
            expected: params.fingerprint().to_string(),
            found: vocabulary.fingerprint(),
        });
    }
    let focal_row = params.entity(focal.ordinal)?;
    let mut hits: Vec<NeighborHit> = vocabulary
        .entities()
        .par_iter()
        .filter(|e| e.ordinal != focal.ordinal)
        .filter(|e| kind_filter.is_none_or(|ks| ks.contains(&e.kind)))
        .map(|e| {
            let v = transform(params, e, focal.kind, mode)?;
            Ok(NeighborHit {
                entity: e.clone(),
                proximity: cosine(focal_row, &v)?,
            })
        })
        .collect::<Result<_>>()?;
    hits.sort_by(|a, b| {
        b.proximity
            .partial_cmp(&a.proximity)
            .unwrap_or(Ordering::Equal)
            .then(a.entity.ordinal.cmp(&b.entity.ordinal))
    });
    hits.truncate(k);
    Ok(hits)
}

/// Cosines between every pair of entities after moving all of them into
/// `common_kind`. Exactly symmetric with a unit diagonal.
pub fn pairwise_matrix(
    params: &ModelParams,
    entities: &[EntityRef],
    common_kind: EntityKind,
    mode: TransformMode,
) -> Result<Vec<Vec<f64>>> {
    if entities.is_empty() {
        return Err(Error::InvalidConfig("entity list is empty".into()));
    }
    let vectors: Vec<Vec<f64>> = entities
        .iter()
        .map(|e| transform(params, e, common_kind, mode))
        .collect::<Result<_>>()?;
    let n = vectors.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = cosine(&vectors[i], &vectors[i]).map(|_| 1.0)?;
        for j in i + 1..n {
            let c = cosine(&vectors[i], &vectors[j])?;
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RelationBlock;

    /// TransE_L2 params over a vocabulary with one entity per kind, with the
    /// given rows and relation vectors (cite, write, own, contain, comprise).
    fn toy(kind: ModelKind, rows: &[[f64; 2]], rels: [[f64; 2]; 5]) -> (TripleStore, ModelParams) {
        let mut s = TripleStore::new();
        for (i, k) in EntityKind::ALL.iter().cycle().take(rows.len()).enumerate() {
            s.add_entity(*k, &format!("e{i}"));
        }
        let relations = rels
            .iter()
            .map(|v| RelationBlock {
                vector: v.to_vec(),
                matrix: vec![],
            })
            .collect();
        let entities = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let p = ModelParams::from_parts(kind, 2, entities, relations, s.fingerprint()).unwrap();
        (s, p)
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn same_kind_rule_is_empty_in_both_modes() {
        for k in EntityKind::ALL {
            for mode in [TransformMode::GuideTable, TransformMode::Algebraic] {
                assert!(transform_rule(k, k, mode).steps.is_empty());
            }
        }
    }

    #[test]
    fn guide_table_is_the_algebraic_rule_negated() {
        let net = |steps: &[(RelationKind, i8)]| {
            let mut c = [0i8; 5];
            for &(r, s) in steps {
                c[r.index()] += s;
            }
            c
        };
        for f in EntityKind::ALL {
            for t in EntityKind::ALL {
                let guide = net(&transform_rule(f, t, TransformMode::GuideTable).steps);
                let alg = net(&transform_rule(f, t, TransformMode::Algebraic).steps);
                assert_eq!(guide, alg.map(|x| -x), "focal {f} target {t}");
            }
        }
    }

    #[test]
    fn algebraic_examples() {
        let rule = |f, t| transform_rule(f, t, TransformMode::Algebraic).steps;
        assert_eq!(rule(K::Patent, K::Inventor), vec![(Write, 1)]);
        assert_eq!(rule(K::Inventor, K::Patent), vec![(Write, -1)]);
        assert_eq!(rule(K::Inventor, K::Assignee), vec![(Write, -1), (Own, 1)]);
        assert_eq!(rule(K::Group, K::Subsection), vec![(Comprise, 1)]);
    }

    #[test]
    fn inventor_to_patent_vectors() {
        let rels = [[0.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let (s, p) = toy(ModelKind::TransEL2, &[[0.3, 0.3], [1.0, 0.0]], rels);
        let inventor = s.entity(1).unwrap();
        let alg = transform(&p, inventor, K::Patent, TransformMode::Algebraic).unwrap();
        assert_eq!(alg, vec![1.0, 1.0]);
        let guide = transform(&p, inventor, K::Patent, TransformMode::GuideTable).unwrap();
        assert_eq!(guide, vec![1.0, -1.0]);
        let same = transform(&p, inventor, K::Inventor, TransformMode::Algebraic).unwrap();
        assert_eq!(same, vec![1.0, 0.0]);
    }

    #[test]
    fn matrix_models_reject_cross_kind_transforms() {
        let mut s = TripleStore::new();
        s.add_entity(K::Patent, "p");
        s.add_entity(K::Inventor, "i");
        s.add_entity(K::Inventor, "j");
        for kind in [
            ModelKind::TransR,
            ModelKind::Rescal,
            ModelKind::ComplEx,
            ModelKind::RotatE,
        ] {
            let p = crate::models::init_params(kind, 3, 4, 1).with_fingerprint(s.fingerprint());
            let (pat, inv, inv2) = (
                s.entity(0).unwrap(),
                s.entity(1).unwrap(),
                s.entity(2).unwrap(),
            );
            assert!(matches!(
                knowledge_proximity(&p, pat, inv, TransformMode::Algebraic),
                Err(Error::UnsupportedModel { .. })
            ));
            let same = knowledge_proximity(&p, inv, inv2, TransformMode::Algebraic).unwrap();
            assert!((-1.0..=1.0).contains(&same));
        }
    }

    #[test]
    fn self_proximity_is_one_and_neighbors_exclude_focal() {
        let rels = [[0.1, 0.2], [0.3, -0.1], [0.0, 0.5], [0.2, 0.2], [-0.3, 0.1]];
        let rows = [
            [1.0, 0.2],
            [0.3, 0.9],
            [-0.5, 0.4],
            [0.7, -0.2],
            [0.1, 0.1],
            [0.9, 0.3],
            [0.2, 0.8],
        ];
        let (s, p) = toy(ModelKind::TransEL2, &rows, rels);
        let focal = s.entity(0).unwrap();
        assert!(
            (knowledge_proximity(&p, focal, focal, TransformMode::Algebraic).unwrap() - 1.0).abs()
                < 1e-12
        );
        let all = nearest_neighbors(&p, &s, focal, 100, None, TransformMode::Algebraic).unwrap();
        assert_eq!(all.len(), rows.len() - 1);
        assert!(all.iter().all(|h| h.entity.ordinal != 0));
        assert!(all.windows(2).all(|w| w[0].proximity >= w[1].proximity));
        let inventors = nearest_neighbors(
            &p,
            &s,
            focal,
            3,
            Some(&[K::Inventor]),
            TransformMode::Algebraic,
        )
        .unwrap();
        assert!(!inventors.is_empty() && inventors.iter().all(|h| h.kind() == K::Inventor));
    }

    #[test]
    fn neighbor_ties_break_by_ordinal() {
        let rels = [[0.0; 2]; 5];
        let rows = [
            [1.0, 0.0],
            [1.0, 0.0],
            [2.0, 0.0],
            [3.0, 0.0],
            [0.5, 0.0],
            [4.0, 0.0],
        ];
        let mut s = TripleStore::new();
        for i in 0..rows.len() {
            s.add_entity(K::Patent, &format!("p{i}"));
        }
        let relations = rels
            .iter()
            .map(|v| RelationBlock {
                vector: v.to_vec(),
                matrix: vec![],
            })
            .collect();
        let p = ModelParams::from_parts(
            ModelKind::TransEL2,
            2,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            relations,
            s.fingerprint(),
        )
        .unwrap();
        let hits = nearest_neighbors(
            &p,
            &s,
            s.entity(0).unwrap(),
            3,
            None,
            TransformMode::Algebraic,
        )
        .unwrap();
        let ords: Vec<usize> = hits.iter().map(|h| h.entity.ordinal).collect();
        assert_eq!(ords, vec![1, 2, 3]);
    }

    #[test]
    fn pairwise_matrix_shape_and_symmetry() {
        let rels = [[0.1, 0.2], [0.3, -0.1], [0.0, 0.5], [0.2, 0.2], [-0.3, 0.1]];
        let rows = [[1.0, 0.2], [0.3, 0.9], [-0.5, 0.4], [0.7, -0.2], [0.1, 0.1]];
        let (s, p) = toy(ModelKind::TransEL2, &rows, rels);
        let one =
            pairwise_matrix(&p, &s.entities()[..1], K::Patent, TransformMode::Algebraic).unwrap();
        assert_eq!(one, vec![vec![1.0]]);
        let twice = vec![s.entities()[1].clone(), s.entities()[1].clone()];
        let m = pairwise_matrix(&p, &twice, K::Patent, TransformMode::Algebraic).unwrap();
        for row in &m {
            for &x in row {
                assert!((x - 1.0).abs() < 1e-12);
            }
        }
        let m = pairwise_matrix(&p, s.entities(), K::Patent, TransformMode::Algebraic).unwrap();
        for i in 0..5 {
            assert_eq!(m[i][i], 1.0);
            for j in 0..5 {
                assert_eq!(m[i][j], m[j][i]);
                assert!(m[i][j].is_finite());
            }
        }
    }
}
