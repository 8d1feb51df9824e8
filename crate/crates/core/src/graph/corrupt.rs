use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EntityKind, Triple, TripleStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Head,
    Tail,
}

/// Where replacement entities are drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CorruptPool {
    /// Entities of the same kind as the replaced slot.
    #[default]
    SameKind,
    AllEntities,
}

impl Triple {
    pub fn slot(&self, side: Side) -> usize {
        match side {
            Side::Head => self.head,
            Side::Tail => self.tail,
        }
    }

    pub fn with_slot(&self, side: Side, entity: usize) -> Triple {
        match side {
            Side::Head => Triple {
                head: entity,
                ..*self
            },
            Side::Tail => Triple {
                tail: entity,
                ..*self
            },
        }
    }
}

impl TripleStore {
    fn pool_len(&self, pool: CorruptPool, kind: EntityKind) -> usize {
        match pool {
            CorruptPool::SameKind => self.entities_of_kind(kind).len(),
            CorruptPool::AllEntities => self.entity_count(),
        }
    }

    fn pool_member(&self, pool: CorruptPool, kind: EntityKind, position: usize) -> usize {
        match pool {
            CorruptPool::SameKind => self.entities_of_kind(kind)[position],
            CorruptPool::AllEntities => position,
        }
    }

    fn pool_position(&self, pool: CorruptPool, ordinal: usize) -> usize {
        match pool {
            CorruptPool::SameKind => self.kind_position(ordinal),
            CorruptPool::AllEntities => ordinal,
        }
    }

    /// Replacement entities available for one slot of `t`.
    pub fn corruption_candidates(
        &self,
        t: &Triple,
        side: Side,
        pool: CorruptPool,
        filtered: bool,
    ) -> Result<Vec<usize>> {
        let original = t.slot(side);
        let kind = self.kind_of(original)?;
        let len = self.pool_len(pool, kind);
        Ok((0..len)
            .map(|pos| self.pool_member(pool, kind, pos))
            .filter(|&e| e != original)
            .filter(|&e| !filtered || !self.contains(&t.with_slot(side, e)))
            .collect())
    }

    /// One unfiltered corruption drawn uniformly from the pool, or `None` when
    /// the slot's pool holds only the original entity.
    pub(crate) fn corrupt_one<R: Rng>(
        &self,
        t: &Triple,
        side: Side,
        pool: CorruptPool,
        rng: &mut R,
    ) -> Option<Triple> {
        let original = t.slot(side);
        let kind = self.entities.get(original)?.kind;
        let len = self.pool_len(pool, kind);
        if len < 2 {
            return None;
        }
        let skip = self.pool_position(pool, original);
        let mut pos = rng.random_range(0..len - 1);
        if pos >= skip {
            pos += 1;
        }
        Some(t.with_slot(side, self.pool_member(pool, kind, pos)))
    }
}

/// Draw `n` distinct corruptions of one slot of `t`, seeded.
pub fn sample_corrupt(
    store: &TripleStore,
    t: &Triple,
    n: usize,
    side: Side,
    pool: CorruptPool,
    filtered: bool,
    seed: u64,
) -> Result<Vec<Triple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_corrupt_with(store, t, n, side, pool, filtered, &mut rng)
}

/// As [`sample_corrupt`], drawing from a caller-supplied generator.
///
/// Unfiltered draws index the pool directly, skipping the original's
/// position, so cost is O(n) rather than O(pool).
pub fn sample_corrupt_with<R: Rng>(
    store: &TripleStore,
    t: &Triple,
    n: usize,
    side: Side,
    pool: CorruptPool,
    filtered: bool,
    rng: &mut R,
) -> Result<Vec<Triple>> {
    if n == 0 {
        return Err(Error::InvalidConfig("corruption count must be >= 1".into()));
    }
    let original = t.slot(side);
    let kind = store.kind_of(original)?;
    if filtered {
        let candidates = store.corruption_candidates(t, side, pool, true)?;
        if candidates.len() < n {
            return Err(Error::PoolTooSmall {
                needed: n,
                available: candidates.len(),
            });
        }
        return Ok(index::sample(rng, candidates.len(), n)
            .into_iter()
            .map(|i| t.with_slot(side, candidates[i]))
            .collect());
    }
    let len = store.pool_len(pool, kind);
    let available = len.saturating_sub(1);
    if available < n {
        return Err(Error::PoolTooSmall {
            needed: n,
            available,
        });
    }
    let skip = store.pool_position(pool, original);
    Ok(index::sample(rng, available, n)
        .into_iter()
        .map(|i| {
            let pos = if i >= skip { i + 1 } else { i };
            t.with_slot(side, store.pool_member(pool, kind, pos))
        })
        .collect())
}
