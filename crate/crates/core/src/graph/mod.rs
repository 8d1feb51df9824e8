//! Typed triple store for the five-relation patent graph.
//!
//! Entities are interned into a dense ordinal space in first-seen order. The
//! store keeps the triple set together with `(head, relation) -> tails` and
//! `(tail, relation) -> heads` indexes; both are updated on every insert so
//! they stay exactly coherent with the set.

mod corrupt;
mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use corrupt::{sample_corrupt, sample_corrupt_with, CorruptPool, Side};
pub use synthetic::{generate_synthetic, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Patent,
    Inventor,
    Assignee,
    Group,
    Subsection,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] = [
        EntityKind::Patent,
        EntityKind::Inventor,
        EntityKind::Assignee,
        EntityKind::Group,
        EntityKind::Subsection,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            EntityKind::Patent => "patent",
            EntityKind::Inventor => "inventor",
            EntityKind::Assignee => "assignee",
            EntityKind::Group => "group",
            EntityKind::Subsection => "subsection",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| format!("unknown entity kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    Cite,
    Write,
    Own,
    Contain,
    Comprise,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::Cite,
        RelationKind::Write,
        RelationKind::Own,
        RelationKind::Contain,
        RelationKind::Comprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Fixed (head kind, tail kind) pair every triple of this relation obeys.
    pub fn schema(self) -> (EntityKind, EntityKind) {
        use EntityKind::*;
        match self {
            RelationKind::Cite => (Patent, Patent),
            RelationKind::Write => (Inventor, Patent),
            RelationKind::Own => (Assignee, Patent),
            RelationKind::Contain => (Group, Patent),
            RelationKind::Comprise => (Subsection, Group),
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            RelationKind::Cite => "cite",
            RelationKind::Write => "write",
            RelationKind::Own => "own",
            RelationKind::Contain => "contain",
            RelationKind::Comprise => "comprise",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        RelationKind::ALL
            .into_iter()
            .find(|r| r.token() == s)
            .ok_or_else(|| format!("unknown relation {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub source_id: String,
    pub ordinal: usize,
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.source_id)
    }
}

/// Parse a `kind:id` token. The id may itself contain colons.
pub fn parse_entity_token(token: &str) -> std::result::Result<(EntityKind, &str), String> {
    let (kind, id) = token
        .split_once(':')
        .ok_or_else(|| format!("expected kind:id, got {token:?}"))?;
    Ok((kind.parse()?, id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: RelationKind,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: RelationKind, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    /// Indexed by [`EntityKind::index`].
    pub entities: [usize; 5],
    /// Indexed by [`RelationKind::index`].
    pub triples: [usize; 5],
}

impl StoreStats {
    pub fn entity_count(&self, kind: EntityKind) -> usize {
        self.entities[kind.index()]
    }

    pub fn triple_count(&self, relation: RelationKind) -> usize {
        self.triples[relation.index()]
    }

    pub fn total_entities(&self) -> usize {
        self.entities.iter().sum()
    }

    pub fn total_triples(&self) -> usize {
        self.triples.iter().sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    entities: Vec<EntityRef>,
    lookup: HashMap<(EntityKind, String), usize>,
    by_kind: [Vec<usize>; 5],
    kind_position: Vec<usize>,
    triples: Vec<Triple>,
    members: HashSet<Triple>,
    index_hr: HashMap<(usize, RelationKind), Vec<usize>>,
    index_tr: HashMap<(usize, RelationKind), Vec<usize>>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Intern an entity, returning its ordinal. Existing entities keep theirs.
    pub fn add_entity(&mut self, kind: EntityKind, source_id: &str) -> usize {
        if let Some(&ord) = self.lookup.get(&(kind, source_id.to_string())) {
            return ord;
        }
        let ordinal = self.entities.len();
        self.entities.push(EntityRef {
            kind,
            source_id: source_id.to_string(),
            ordinal,
        });
        self.lookup.insert((kind, source_id.to_string()), ordinal);
        self.kind_position.push(self.by_kind[kind.index()].len());
        self.by_kind[kind.index()].push(ordinal);
        ordinal
    }

    pub fn lookup(&self, kind: EntityKind, source_id: &str) -> Option<usize> {
        self.lookup.get(&(kind, source_id.to_string())).copied()
    }

    /// Resolve a `kind:id` token against the vocabulary.
    pub fn resolve(&self, token: &str) -> Result<&EntityRef> {
        let (kind, id) = parse_entity_token(token).map_err(Error::UnknownEntity)?;
        self.lookup(kind, id)
            .map(|o| &self.entities[o])
            .ok_or_else(|| Error::UnknownEntity(token.to_string()))
    }

    pub fn entity(&self, ordinal: usize) -> Result<&EntityRef> {
        self.entities
            .get(ordinal)
            .ok_or(Error::UnknownOrdinal(ordinal))
    }

    pub fn entities(&self) -> &[EntityRef] {
        &self.entities
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn kind_of(&self, ordinal: usize) -> Result<EntityKind> {
        self.entity(ordinal).map(|e| e.kind)
    }

    /// Ordinals of one kind, ascending.
    pub fn entities_of_kind(&self, kind: EntityKind) -> &[usize] {
        &self.by_kind[kind.index()]
    }

    pub(crate) fn kind_position(&self, ordinal: usize) -> usize {
        self.kind_position[ordinal]
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.members.contains(t)
    }

    pub fn tails(&self, head: usize, relation: RelationKind) -> &[usize] {
        self.index_hr
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn heads(&self, tail: usize, relation: RelationKind) -> &[usize] {
        self.index_tr
            .get(&(tail, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn index_hr(&self) -> &HashMap<(usize, RelationKind), Vec<usize>> {
        &self.index_hr
    }

    pub fn index_tr(&self) -> &HashMap<(usize, RelationKind), Vec<usize>> {
        &self.index_tr
    }

    fn validate(&self, t: &Triple) -> Result<()> {
        let head = self.kind_of(t.head)?;
        let tail = self.kind_of(t.tail)?;
        let (expected_head, expected_tail) = t.relation.schema();
        if head != expected_head || tail != expected_tail {
            return Err(Error::SchemaViolation {
                relation: t.relation,
                expected_head,
                expected_tail,
                head,
                tail,
            });
        }
        if t.relation == RelationKind::Cite && t.head == t.tail {
            return Err(Error::SelfCitation(t.head));
        }
        Ok(())
    }

    fn push_unchecked(&mut self, t: Triple) {
        self.members.insert(t);
        self.triples.push(t);
        self.index_hr
            .entry((t.head, t.relation))
            .or_default()
            .push(t.tail);
        self.index_tr
            .entry((t.tail, t.relation))
            .or_default()
            .push(t.head);
    }

    /// Strict insert: rejects schema violations and duplicates.
    pub fn add_triple(&mut self, t: Triple) -> Result<()> {
        self.validate(&t)?;
        if self.members.contains(&t) {
            return Err(Error::DuplicateTriple {
                head: t.head,
                relation: t.relation,
                tail: t.tail,
            });
        }
        self.push_unchecked(t);
        Ok(())
    }

    /// Bulk-load insert: duplicates are ignored. Returns whether the triple was new.
    pub fn insert(&mut self, t: Triple) -> Result<bool> {
        self.validate(&t)?;
        if self.members.contains(&t) {
            return Ok(false);
        }
        self.push_unchecked(t);
        Ok(true)
    }

    /// A store with the same vocabulary (ordinals preserved) and no triples.
    pub fn empty_like(&self) -> TripleStore {
        TripleStore {
            entities: self.entities.clone(),
            lookup: self.lookup.clone(),
            by_kind: self.by_kind.clone(),
            kind_position: self.kind_position.clone(),
            ..TripleStore::default()
        }
    }

    pub fn stats(&self) -> StoreStats {
        let mut stats = StoreStats::default();
        for e in &self.entities {
            stats.entities[e.kind.index()] += 1;
        }
        for t in &self.triples {
            stats.triples[t.relation.index()] += 1;
        }
        stats
    }

    /// Vocabulary export: `<ordinal>\t<kind>:<source_id>` per line.
    pub fn vocabulary_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entities {
            out.push_str(&format!("{}\t{}\n", e.ordinal, e));
        }
        out
    }

    /// Triple export in the `kind:id\trelation\tkind:id` line format.
    pub fn triples_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.entities[t.head], t.relation, self.entities[t.tail]
            ));
        }
        out
    }

    /// SHA-256 of the vocabulary export, hex encoded.
    pub fn fingerprint(&self) -> String {
        vocabulary_fingerprint(&self.vocabulary_tsv())
    }
}

pub fn vocabulary_fingerprint(vocabulary_tsv: &str) -> String {
    let digest = Sha256::digest(vocabulary_tsv.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.10,
            seed: 0,
        }
    }
}

/// Random train/test partition. The train store shares the full vocabulary,
/// and both sides keep the store's original triple order.
pub fn split(store: &TripleStore, spec: SplitSpec) -> Result<(TripleStore, Vec<Triple>)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let n = store.len();
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut in_test = vec![false; n];
    for &i in &order[..n_test] {
        in_test[i] = true;
    }
    let mut train = store.empty_like();
    let mut test = Vec::with_capacity(n_test);
    for (i, &t) in store.triples().iter().enumerate() {
        if in_test[i] {
            test.push(t);
        } else {
            train.push_unchecked(t);
        }
    }
    Ok((train, test))
}
