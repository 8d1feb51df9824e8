//! Entity-prediction evaluation by ranking the true entity among sampled
//! corruptions.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sample_corrupt_with, CorruptPool, Side, Triple, TripleStore};
use crate::models::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sides {
    HeadOnly,
    TailOnly,
    Both,
}

impl Sides {
    pub fn list(self) -> &'static [Side] {
        match self {
            Sides::HeadOnly => &[Side::Head],
            Sides::TailOnly => &[Side::Tail],
            Sides::Both => &[Side::Head, Side::Tail],
        }
    }
}

/// How corruptions scoring exactly the same as the truth count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieRule {
    /// `1 + better + ties / 2`
    #[default]
    Midpoint,
    /// `1 + better`
    Optimistic,
    /// `1 + better + ties`
    Pessimistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Corruptions drawn per query side (K).
    pub corruptions_per_side: usize,
    pub sides: Sides,
    pub pool: CorruptPool,
    pub filtered: bool,
    pub seed: u64,
    pub tie_rule: TieRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            corruptions_per_side: 100,
            sides: Sides::Both,
            pool: CorruptPool::SameKind,
            filtered: false,
            seed: 0,
            tie_rule: TieRule::Midpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRecord {
    pub triple: Triple,
    pub side: Side,
    pub rank: f64,
    /// Corruptions actually ranked against (K after clamping).
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub queries: usize,
    pub mr: f64,
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
}

impl Metrics {
    pub fn from_ranks(ranks: &[f64]) -> Option<Metrics> {
        if ranks.is_empty() {
            return None;
        }
        let n = ranks.len() as f64;
        let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Some(Metrics {
            queries: ranks.len(),
            mr: ranks.iter().sum::<f64>() / n,
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits_at_1: hits(1.0),
            hits_at_3: hits(3.0),
            hits_at_10: hits(10.0),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub overall: Metrics,
    pub per_relation: BTreeMap<String, Metrics>,
    pub config: EvalConfig,
    /// Largest K actually used; below the configured K when the pool ran short.
    pub max_candidates: usize,
    #[serde(skip)]
    pub records: Vec<RankRecord>,
}

/// Rank of the true triple among `corrupts` (higher score ranks first).
pub fn rank_target(
    params: &ModelParams,
    triple: &Triple,
    corrupts: &[Triple],
    tie_rule: TieRule,
) -> Result<f64> {
    let truth = params.score(triple.head, triple.relation, triple.tail)?;
    let mut better = 0usize;
    let mut ties = 0usize;
    for c in corrupts {
        let s = params.score(c.head, c.relation, c.tail)?;
        if s > truth {
            better += 1;
        } else if s == truth {
            ties += 1;
        }
    }
    Ok(match tie_rule {
        TieRule::Midpoint => 1.0 + better as f64 + ties as f64 / 2.0,
        TieRule::Optimistic => 1.0 + better as f64,
        TieRule::Pessimistic => 1.0 + (better + ties) as f64,
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (triple, side) query; independent of evaluation order.
pub fn query_seed(seed: u64, t: &Triple, side: Side) -> u64 {
    let side_tag = match side {
        Side::Head => 0u64,
        Side::Tail => 1,
    };
    [
        t.head as u64,
        t.relation.index() as u64,
        t.tail as u64,
        side_tag,
    ]
    .into_iter()
    .fold(splitmix(seed), |acc, x| splitmix(acc ^ x))
}

fn available_candidates(
    store: &TripleStore,
    t: &Triple,
    side: Side,
    config: &EvalConfig,
) -> Result<usize> {
    if config.filtered {
        return Ok(store
            .corruption_candidates(t, side, config.pool, true)?
            .len());
    }
    let kind = store.kind_of(t.slot(side))?;
    let pool = match config.pool {
        CorruptPool::SameKind => store.entities_of_kind(kind).len(),
        CorruptPool::AllEntities => store.entity_count(),
    };
    Ok(pool.saturating_sub(1))
}

fn rank_query(
    params: &ModelParams,
    store: &TripleStore,
    t: &Triple,
    side: Side,
    config: &EvalConfig,
) -> Result<RankRecord> {
    let available = available_candidates(store, t, side, config)?;
    let n = config.corruptions_per_side.min(available);
    let rank = if n == 0 {
        1.0
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(query_seed(config.seed, t, side));
        let corrupts =
            sample_corrupt_with(store, t, n, side, config.pool, config.filtered, &mut rng)?;
        rank_target(params, t, &corrupts, config.tie_rule)?
    };
    Ok(RankRecord {
        triple: *t,
        side,
        rank,
        candidates: n,
    })
}

pub fn evaluate(
    params: &ModelParams,
    test: &[Triple],
    store: &TripleStore,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if config.corruptions_per_side == 0 {
        return Err(Error::InvalidConfig(
            "corruptions_per_side must be >= 1".into(),
        ));
    }
    params.check_fingerprint(store)?;
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let sides = config.sides.list();
    let records: Vec<RankRecord> = test
        .par_iter()
        .map(|t| {
            sides
                .iter()
                .map(|&side| rank_query(params, store, t, side, config))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let clamped = records
        .iter()
        .filter(|r| r.candidates < config.corruptions_per_side)
        .count();
    if clamped > 0 {
        log::warn!(
            "{clamped} of {} queries had fewer than K = {} candidates; ranked exhaustively",
            records.len(),
            config.corruptions_per_side
        );
    }

    let ranks: Vec<f64> = records.iter().map(|r| r.rank).collect();
    let overall = Metrics::from_ranks(&ranks).expect("non-empty test set");
    let mut by_relation: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &records {
        by_relation
            .entry(r.triple.relation.token().to_string())
            .or_default()
            .push(r.rank);
    }
    let per_relation = by_relation
        .into_iter()
        .filter_map(|(k, v)| Metrics::from_ranks(&v).map(|m| (k, m)))
        .collect();
    Ok(EvalReport {
        overall,
        per_relation,
        config: config.clone(),
        max_candidates: records.iter().map(|r| r.candidates).max().unwrap_or(0),
        records,
    })
}
