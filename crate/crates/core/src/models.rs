//! Parameter tables and score functions for the seven embedding models.
//!
//! Every score is oriented so that higher means more plausible. Complex
//! models store each entity row as `[re_0..re_d, im_0..im_d]`; ComplEx
//! relation vectors use the same split layout, RotatE relations are `d`
//! phases whose unit-modulus rotation is implied.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RelationKind, TripleStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "TransE_L1")]
    TransEL1,
    #[serde(rename = "TransE_L2")]
    TransEL2,
    TransR,
    #[serde(rename = "RESCAL")]
    Rescal,
    DistMult,
    ComplEx,
    RotatE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::TransEL1,
        ModelKind::TransEL2,
        ModelKind::TransR,
        ModelKind::Rescal,
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::RotatE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransEL1 => "TransE_L1",
            ModelKind::TransEL2 => "TransE_L2",
            ModelKind::TransR => "TransR",
            ModelKind::Rescal => "RESCAL",
            ModelKind::DistMult => "DistMult",
            ModelKind::ComplEx => "ComplEx",
            ModelKind::RotatE => "RotatE",
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, ModelKind::ComplEx | ModelKind::RotatE)
    }

    /// Distance-based models: TransE variants, TransR and RotatE.
    pub fn is_translational(self) -> bool {
        matches!(
            self,
            ModelKind::TransEL1 | ModelKind::TransEL2 | ModelKind::TransR | ModelKind::RotatE
        )
    }

    pub fn is_transe(self) -> bool {
        matches!(self, ModelKind::TransEL1 | ModelKind::TransEL2)
    }

    pub fn entity_width(self, dim: usize) -> usize {
        if self.is_complex() {
            2 * dim
        } else {
            dim
        }
    }

    pub fn relation_vector_len(self, dim: usize) -> usize {
        match self {
            ModelKind::Rescal => 0,
            ModelKind::ComplEx => 2 * dim,
            _ => dim,
        }
    }

    pub fn relation_matrix_shape(self, dim: usize) -> (usize, usize) {
        match self {
            ModelKind::TransR | ModelKind::Rescal => (dim, dim),
            _ => (0, 0),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase().replace('_', "") == norm)
            .ok_or_else(|| format!("unknown model {s:?}"))
    }
}

/// Parameters of one relation. Unused blocks are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationBlock {
    pub vector: Vec<f64>,
    /// Row-major.
    pub matrix: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    kind: ModelKind,
    dim: usize,
    n_entities: usize,
    entities: Vec<f64>,
    relations: Vec<RelationBlock>,
    fingerprint: String,
}

/// Gradient of a single triple's score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
    pub relation_vector: Vec<f64>,
    pub relation_matrix: Vec<f64>,
    /// Set when the score has a kink at this point; the affected components
    /// carry the zero subgradient.
    pub non_differentiable: bool,
}

impl Gradient {
    fn reset(&mut self, kind: ModelKind, dim: usize) {
        let w = kind.entity_width(dim);
        let (mr, mc) = kind.relation_matrix_shape(dim);
        for (buf, len) in [
            (&mut self.head, w),
            (&mut self.tail, w),
            (&mut self.relation_vector, kind.relation_vector_len(dim)),
            (&mut self.relation_matrix, mr * mc),
        ] {
            buf.clear();
            buf.resize(len, 0.0);
        }
        self.non_differentiable = false;
    }
}

pub fn init_params(kind: ModelKind, n_entities: usize, dim: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 6.0 / (dim as f64).sqrt();
    let width = kind.entity_width(dim);
    let mut entities: Vec<f64> = (0..n_entities * width)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    if kind.is_translational() {
        for row in entities.chunks_mut(width.max(1)) {
            normalize(row);
        }
    }
    let (mr, mc) = kind.relation_matrix_shape(dim);
    let relations = RelationKind::ALL
        .iter()
        .map(|_| {
            let vector = (0..kind.relation_vector_len(dim))
                .map(|_| {
                    if kind == ModelKind::RotatE {
                        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
                    } else {
                        rng.random_range(-bound..=bound)
                    }
                })
                .collect();
            let matrix = (0..mr * mc)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            RelationBlock { vector, matrix }
        })
        .collect();
    ModelParams {
        kind,
        dim,
        n_entities,
        entities,
        relations,
        fingerprint: String::new(),
    }
}

/// Scale `row` to unit L2 norm in place; zero rows are left alone.
pub(crate) fn normalize(row: &mut [f64]) {
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|x| *x /= norm);
    }
}

impl ModelParams {
    /// Assemble parameters from raw tables, checking every shape.
    pub fn from_parts(
        kind: ModelKind,
        dim: usize,
        entities: Vec<f64>,
        relations: Vec<RelationBlock>,
        fingerprint: String,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        let width = kind.entity_width(dim);
        if !entities.len().is_multiple_of(width) {
            return Err(Error::InvalidConfig(format!(
                "entity table length {} is not a multiple of row width {width}",
                entities.len()
            )));
        }
        if relations.len() != RelationKind::ALL.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} relation blocks, got {}",
                RelationKind::ALL.len(),
                relations.len()
            )));
        }
        let (mr, mc) = kind.relation_matrix_shape(dim);
        for (rel, block) in RelationKind::ALL.iter().zip(&relations) {
            if block.vector.len() != kind.relation_vector_len(dim) || block.matrix.len() != mr * mc
            {
                return Err(Error::InvalidConfig(format!(
                    "relation {rel} has the wrong shape for {kind} at dim {dim}"
                )));
            }
        }
        Ok(ModelParams {
            kind,
            dim,
            n_entities: entities.len() / width,
            entities,
            relations,
            fingerprint,
        })
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = fingerprint.into();
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn entity_width(&self) -> usize {
        self.kind.entity_width(self.dim)
    }

    pub fn entity_table(&self) -> &[f64] {
        &self.entities
    }

    pub fn relations(&self) -> &[RelationBlock] {
        &self.relations
    }

    pub fn relation(&self, r: RelationKind) -> &RelationBlock {
        &self.relations[r.index()]
    }

    pub(crate) fn relation_mut(&mut self, r: RelationKind) -> &mut RelationBlock {
        &mut self.relations[r.index()]
    }

    /// Entity row; complex models return the flattened `2d` real form.
    pub fn entity(&self, ordinal: usize) -> Result<&[f64]> {
        if ordinal >= self.n_entities {
            return Err(Error::UnknownOrdinal(ordinal));
        }
        let w = self.entity_width();
        Ok(&self.entities[ordinal * w..(ordinal + 1) * w])
    }

    pub(crate) fn entity_mut(&mut self, ordinal: usize) -> &mut [f64] {
        let w = self.entity_width();
        &mut self.entities[ordinal * w..(ordinal + 1) * w]
    }

    pub fn check_fingerprint(&self, store: &TripleStore) -> Result<()> {
        let found = store.fingerprint();
        if found != self.fingerprint || store.entity_count() != self.n_entities {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entities.iter().all(|x| x.is_finite())
            && self
                .relations
                .iter()
                .all(|b| b.vector.iter().chain(&b.matrix).all(|x| x.is_finite()))
    }

    pub fn score(&self, head: usize, relation: RelationKind, tail: usize) -> Result<f64> {
        let h = self.entity(head)?;
        let t = self.entity(tail)?;
        Ok(score_rows(
            self.kind,
            self.dim,
            h,
            self.relation(relation),
            t,
        ))
    }

    pub fn grad(&self, head: usize, relation: RelationKind, tail: usize) -> Result<Gradient> {
        let mut g = Gradient::default();
        self.grad_into(head, relation, tail, &mut g)?;
        Ok(g)
    }

    /// As [`grad`](Self::grad), reusing `out`'s buffers.
    pub fn grad_into(
        &self,
        head: usize,
        relation: RelationKind,
        tail: usize,
        out: &mut Gradient,
    ) -> Result<()> {
        let h = self.entity(head)?;
        let t = self.entity(tail)?;
        grad_rows(self.kind, self.dim, h, self.relation(relation), t, out);
        Ok(())
    }
}

fn l2(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn score_rows(
    kind: ModelKind,
    d: usize,
    h: &[f64],
    rel: &RelationBlock,
    t: &[f64],
) -> f64 {
    let r = &rel.vector;
    match kind {
        ModelKind::TransEL1 => -(0..d).map(|i| (h[i] + r[i] - t[i]).abs()).sum::<f64>(),
        ModelKind::TransEL2 => -l2((0..d).map(|i| h[i] + r[i] - t[i])),
        ModelKind::TransR => {
            let m = &rel.matrix;
            -(0..d)
                .map(|a| {
                    let row = &m[a * d..(a + 1) * d];
                    let proj: f64 = (0..d).map(|b| row[b] * (h[b] - t[b])).sum();
                    let diff = proj + r[a];
                    diff * diff
                })
                .sum::<f64>()
        }
        ModelKind::Rescal => {
            let m = &rel.matrix;
            (0..d)
                .map(|a| {
                    let row = &m[a * d..(a + 1) * d];
                    h[a] * (0..d).map(|b| row[b] * t[b]).sum::<f64>()
                })
                .sum()
        }
        ModelKind::DistMult => (0..d).map(|i| h[i] * r[i] * t[i]).sum(),
        ModelKind::ComplEx => (0..d)
            .map(|i| {
                let (a, b) = (h[i], h[d + i]);
                let (c, dd) = (r[i], r[d + i]);
                let (e, f) = (t[i], t[d + i]);
                a * c * e + b * c * f + a * dd * f - b * dd * e
            })
            .sum(),
        ModelKind::RotatE => -l2((0..d).flat_map(|i| {
            let (a, b) = (h[i], h[d + i]);
            let (e, f) = (t[i], t[d + i]);
            let (sin, cos) = r[i].sin_cos();
            [a * cos - b * sin - e, a * sin + b * cos - f]
        })),
    }
}

fn grad_rows(
    kind: ModelKind,
    d: usize,
    h: &[f64],
    rel: &RelationBlock,
    t: &[f64],
    g: &mut Gradient,
) {
    g.reset(kind, d);
    let r = &rel.vector;
    match kind {
        ModelKind::TransEL1 => {
            for i in 0..d {
                let diff = h[i] + r[i] - t[i];
                if diff == 0.0 {
                    g.non_differentiable = true;
                    continue;
                }
                let s = diff.signum();
                g.head[i] = -s;
                g.tail[i] = s;
                g.relation_vector[i] = -s;
            }
        }
        ModelKind::TransEL2 => {
            let diff: Vec<f64> = (0..d).map(|i| h[i] + r[i] - t[i]).collect();
            let norm = l2(diff.iter().copied());
            if norm == 0.0 {
                g.non_differentiable = true;
                return;
            }
            for (i, x) in diff.iter().enumerate() {
                let v = x / norm;
                g.head[i] = -v;
                g.tail[i] = v;
                g.relation_vector[i] = -v;
            }
        }
        ModelKind::TransR => {
            let m = &rel.matrix;
            let delta: Vec<f64> = (0..d).map(|b| h[b] - t[b]).collect();
            for a in 0..d {
                let row = &m[a * d..(a + 1) * d];
                let diff = row.iter().zip(&delta).map(|(x, y)| x * y).sum::<f64>() + r[a];
                g.relation_vector[a] = -2.0 * diff;
                let grow = &mut g.relation_matrix[a * d..(a + 1) * d];
                for b in 0..d {
                    grow[b] = -2.0 * diff * delta[b];
                    g.head[b] -= 2.0 * diff * row[b];
                }
            }
            for b in 0..d {
                g.tail[b] = -g.head[b];
            }
        }
        ModelKind::Rescal => {
            let m = &rel.matrix;
            for a in 0..d {
                let row = &m[a * d..(a + 1) * d];
                g.head[a] = row.iter().zip(t).map(|(x, y)| x * y).sum();
                let grow = &mut g.relation_matrix[a * d..(a + 1) * d];
                for b in 0..d {
                    grow[b] = h[a] * t[b];
                    g.tail[b] += h[a] * row[b];
                }
            }
        }
        ModelKind::DistMult => {
            for i in 0..d {
                g.head[i] = r[i] * t[i];
                g.relation_vector[i] = h[i] * t[i];
                g.tail[i] = h[i] * r[i];
            }
        }
        ModelKind::ComplEx => {
            for i in 0..d {
                let (a, b) = (h[i], h[d + i]);
                let (c, dd) = (r[i], r[d + i]);
                let (e, f) = (t[i], t[d + i]);
                g.head[i] = c * e + dd * f;
                g.head[d + i] = c * f - dd * e;
                g.relation_vector[i] = a * e + b * f;
                g.relation_vector[d + i] = a * f - b * e;
                g.tail[i] = a * c - b * dd;
                g.tail[d + i] = b * c + a * dd;
            }
        }
        ModelKind::RotatE => {
            let mut uv = Vec::with_capacity(2 * d);
            for i in 0..d {
                let (a, b) = (h[i], h[d + i]);
                let (sin, cos) = r[i].sin_cos();
                uv.push(a * cos - b * sin - t[i]);
                uv.push(a * sin + b * cos - t[d + i]);
            }
            let norm = l2(uv.iter().copied());
            if norm == 0.0 {
                g.non_differentiable = true;
                return;
            }
            for i in 0..d {
                let (a, b) = (h[i], h[d + i]);
                let (sin, cos) = r[i].sin_cos();
                let (u, v) = (uv[2 * i] / norm, uv[2 * i + 1] / norm);
                g.head[i] = -(u * cos + v * sin);
                g.head[d + i] = -(-u * sin + v * cos);
                g.tail[i] = u;
                g.tail[d + i] = v;
                g.relation_vector[i] = -(u * (-a * sin - b * cos) + v * (a * cos - b * sin));
            }
        }
    }
}
