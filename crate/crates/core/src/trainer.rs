//! Mini-batch SGD with negative sampling.
//!
//! Each positive triple draws `negatives_per_positive` corruptions from the
//! same-kind pool (unfiltered), alternating head and tail by a running sample
//! counter. Gradients of a batch are taken at the parameters as they stood at
//! the start of the batch, summed, and applied to the touched rows only.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{self, Encoding};
use crate::error::{Error, Result};
use crate::graph::{CorruptPool, RelationKind, Side, Triple, TripleStore};
use crate::models::{init_params, normalize, Gradient, ModelKind, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    MarginRank,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecutionMode {
    /// Single thread, bit-deterministic per seed.
    Reference,
    /// Shards each epoch across workers and averages their parameter deltas.
    /// Reproducible for a fixed worker count, but not bit-identical to
    /// reference mode.
    Parallel { workers: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub loss: LossKind,
    pub l2_coefficient: f64,
    pub normalize_entities: bool,
    pub seed: u64,
    pub dim: usize,
    pub mode: ExecutionMode,
}

impl TrainConfig {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.negatives_per_positive == 0 {
            return bad("epochs, batch_size and negatives_per_positive must be >= 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        // Written so that NaN fails too.
        let non_negative = |x: f64| x >= 0.0;
        if !non_negative(self.margin) || !non_negative(self.l2_coefficient) {
            return bad("margin and l2_coefficient must be non-negative");
        }
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.normalize_entities && !kind.is_translational() {
            return bad("entity normalization applies to translational models only");
        }
        if let ExecutionMode::Parallel { workers: 0 } = self.mode {
            return bad("parallel mode needs at least one worker");
        }
        Ok(())
    }
}

/// Step size per model. Gradients are summed over a batch, so models whose
/// per-triple gradients are large or dense need smaller steps.
fn default_learning_rate(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::TransEL1 | ModelKind::TransR => 0.003,
        ModelKind::TransEL2 | ModelKind::Rescal | ModelKind::RotatE => 0.01,
        ModelKind::DistMult | ModelKind::ComplEx => 0.05,
    }
}

/// Per-family defaults at full scale (dim 500).
pub fn default_config(kind: ModelKind) -> TrainConfig {
    let (loss, l2_coefficient) = if kind.is_translational() {
        (LossKind::MarginRank, 0.0)
    } else {
        (LossKind::Logistic, 1e-5)
    };
    TrainConfig {
        epochs: 100,
        batch_size: 256,
        negatives_per_positive: 4,
        learning_rate: default_learning_rate(kind),
        margin: 1.0,
        loss,
        l2_coefficient,
        normalize_entities: kind.is_transe(),
        seed: 0,
        dim: 500,
        mode: ExecutionMode::Reference,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub model: ModelKind,
    /// Mean loss per positive triple, one entry per completed epoch.
    pub epoch_losses: Vec<f64>,
    pub wall_time_secs: f64,
    pub config: TrainConfig,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss of one positive against its negatives, with d(loss)/d(score) for
/// the positive and each negative.
pub fn sample_loss(
    loss: LossKind,
    margin: f64,
    positive: f64,
    negatives: &[f64],
) -> (f64, f64, Vec<f64>) {
    match loss {
        LossKind::MarginRank => {
            let mut total = 0.0;
            let mut d_pos = 0.0;
            let d_neg = negatives
                .iter()
                .map(|&neg| {
                    let v = margin - positive + neg;
                    if v > 0.0 {
                        total += v;
                        d_pos -= 1.0;
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            (total, d_pos, d_neg)
        }
        LossKind::Logistic => {
            let mut total = softplus(-positive);
            let d_pos = -sigmoid(-positive);
            let d_neg = negatives
                .iter()
                .map(|&neg| {
                    total += softplus(neg);
                    sigmoid(neg)
                })
                .collect();
            (total, d_pos, d_neg)
        }
    }
}

#[derive(Default)]
struct BatchGrad {
    entities: HashMap<usize, Vec<f64>>,
    relations: HashMap<RelationKind, (Vec<f64>, Vec<f64>)>,
}

impl BatchGrad {
    fn add_entity(&mut self, ordinal: usize, scale: f64, g: &[f64]) {
        let acc = self
            .entities
            .entry(ordinal)
            .or_insert_with(|| vec![0.0; g.len()]);
        acc.iter_mut().zip(g).for_each(|(a, x)| *a += scale * x);
    }

    fn add_relation(&mut self, r: RelationKind, scale: f64, vector: &[f64], matrix: &[f64]) {
        let (v, m) = self
            .relations
            .entry(r)
            .or_insert_with(|| (vec![0.0; vector.len()], vec![0.0; matrix.len()]));
        v.iter_mut().zip(vector).for_each(|(a, x)| *a += scale * x);
        m.iter_mut().zip(matrix).for_each(|(a, x)| *a += scale * x);
    }

    fn add_triple(&mut self, t: &Triple, scale: f64, g: &Gradient) {
        self.add_entity(t.head, scale, &g.head);
        self.add_entity(t.tail, scale, &g.tail);
        self.add_relation(t.relation, scale, &g.relation_vector, &g.relation_matrix);
    }

    fn add_l2(&mut self, params: &ModelParams, t: &Triple, coef: f64) -> f64 {
        let mut penalty = 0.0;
        for o in [t.head, t.tail] {
            let row = params.entity(o).expect("ordinal validated by the store");
            penalty += row.iter().map(|x| x * x).sum::<f64>();
            self.add_entity(o, 2.0 * coef, row);
        }
        let block = params.relation(t.relation);
        penalty += block
            .vector
            .iter()
            .chain(&block.matrix)
            .map(|x| x * x)
            .sum::<f64>();
        self.add_relation(t.relation, 2.0 * coef, &block.vector, &block.matrix);
        coef * penalty
    }
}

struct EpochRunner<'a> {
    store: &'a TripleStore,
    config: &'a TrainConfig,
    normalize: bool,
    grad: Gradient,
    negatives: Vec<Triple>,
    neg_scores: Vec<f64>,
    sample_counter: usize,
}

impl<'a> EpochRunner<'a> {
    fn new(store: &'a TripleStore, config: &'a TrainConfig, kind: ModelKind) -> Self {
        EpochRunner {
            store,
            config,
            normalize: config.normalize_entities && kind.is_translational(),
            grad: Gradient::default(),
            negatives: Vec::new(),
            neg_scores: Vec::new(),
            sample_counter: 0,
        }
    }

    fn draw_negatives(&mut self, pos: &Triple, rng: &mut ChaCha8Rng) {
        self.negatives.clear();
        for _ in 0..self.config.negatives_per_positive {
            let (first, second) = if self.sample_counter.is_multiple_of(2) {
                (Side::Head, Side::Tail)
            } else {
                (Side::Tail, Side::Head)
            };
            self.sample_counter += 1;
            let neg = self
                .store
                .corrupt_one(pos, first, CorruptPool::SameKind, rng)
                .or_else(|| {
                    self.store
                        .corrupt_one(pos, second, CorruptPool::SameKind, rng)
                });
            if let Some(neg) = neg {
                self.negatives.push(neg);
            }
        }
    }

    /// Runs the batches over `positives` (indices into the store's triples),
    /// returning the summed loss.
    fn run(
        &mut self,
        params: &mut ModelParams,
        positives: &[usize],
        rng: &mut ChaCha8Rng,
        epoch: usize,
        first_batch: usize,
    ) -> Result<f64> {
        let triples = self.store.triples();
        let cfg = self.config;
        let mut total = 0.0;
        for (b, batch) in positives.chunks(cfg.batch_size).enumerate() {
            let mut acc = BatchGrad::default();
            for &idx in batch {
                let pos = triples[idx];
                self.draw_negatives(&pos, rng);
                let s_pos = params.score(pos.head, pos.relation, pos.tail)?;
                self.neg_scores.clear();
                for n in &self.negatives {
                    self.neg_scores
                        .push(params.score(n.head, n.relation, n.tail)?);
                }
                let (loss, d_pos, d_neg) =
                    sample_loss(cfg.loss, cfg.margin, s_pos, &self.neg_scores);
                total += loss;
                if d_pos != 0.0 {
                    params.grad_into(pos.head, pos.relation, pos.tail, &mut self.grad)?;
                    acc.add_triple(&pos, d_pos, &self.grad);
                }
                for (n, &d) in self.negatives.iter().zip(&d_neg) {
                    if d != 0.0 {
                        params.grad_into(n.head, n.relation, n.tail, &mut self.grad)?;
                        acc.add_triple(n, d, &self.grad);
                    }
                }
                if cfg.l2_coefficient > 0.0 {
                    total += acc.add_l2(params, &pos, cfg.l2_coefficient);
                    for n in &self.negatives {
                        total += acc.add_l2(params, n, cfg.l2_coefficient);
                    }
                }
            }
            self.apply(params, acc, epoch, first_batch + b)?;
            if !total.is_finite() {
                return Err(Error::NumericalDivergence {
                    epoch,
                    batch: first_batch + b,
                });
            }
        }
        Ok(total)
    }

    fn apply(
        &self,
        params: &mut ModelParams,
        acc: BatchGrad,
        epoch: usize,
        batch: usize,
    ) -> Result<()> {
        let lr = self.config.learning_rate;
        let diverged = Error::NumericalDivergence { epoch, batch };
        for (o, g) in acc.entities {
            let row = params.entity_mut(o);
            row.iter_mut().zip(&g).for_each(|(p, x)| *p -= lr * x);
            if self.normalize {
                normalize(row);
            }
            if !row.iter().all(|x| x.is_finite()) {
                return Err(diverged);
            }
        }
        for (r, (v, m)) in acc.relations {
            let block = params.relation_mut(r);
            block
                .vector
                .iter_mut()
                .zip(&v)
                .for_each(|(p, x)| *p -= lr * x);
            block
                .matrix
                .iter_mut()
                .zip(&m)
                .for_each(|(p, x)| *p -= lr * x);
            if !block
                .vector
                .iter()
                .chain(&block.matrix)
                .all(|x| x.is_finite())
            {
                return Err(diverged);
            }
        }
        Ok(())
    }
}

fn worker_seed(seed: u64, epoch: usize, worker: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32) ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn train(
    store: &TripleStore,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate(kind)?;
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let started = Instant::now();
    let mut params = init_params(kind, store.entity_count(), config.dim, config.seed)
        .with_fingerprint(store.fingerprint());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..store.len()).collect();
    let n_pos = order.len() as f64;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let total = match config.mode {
            ExecutionMode::Reference => EpochRunner::new(store, config, kind).run(
                &mut params,
                &order,
                &mut rng,
                epoch,
                0,
            )?,
            ExecutionMode::Parallel { workers } => {
                let shard = order.len().div_ceil(workers);
                let batches_per_shard = shard.div_ceil(config.batch_size);
                let base = &params;
                let results: Vec<Result<(ModelParams, f64)>> = order
                    .par_chunks(shard)
                    .enumerate()
                    .map(|(w, positives)| {
                        let mut local = base.clone();
                        let mut wrng =
                            ChaCha8Rng::seed_from_u64(worker_seed(config.seed, epoch, w));
                        let loss = EpochRunner::new(store, config, kind).run(
                            &mut local,
                            positives,
                            &mut wrng,
                            epoch,
                            w * batches_per_shard,
                        )?;
                        Ok((local, loss))
                    })
                    .collect();
                let mut copies = Vec::with_capacity(results.len());
                let mut total = 0.0;
                for r in results {
                    let (p, l) = r?;
                    total += l;
                    copies.push(p);
                }
                params = average_deltas(&params, &copies)?;
                total
            }
        };
        epoch_losses.push(total / n_pos);
    }
    let report = TrainReport {
        model: kind,
        epoch_losses,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    Ok((params, report))
}

/// Defaults scaled down for graphs of a few thousand entities.
pub fn desk_config(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        epochs: 30,
        dim: 50,
        ..default_config(kind)
    }
}

/// `base + mean(copy - base)`, so entries no worker touched stay bit-identical.
fn average_deltas(base: &ModelParams, copies: &[ModelParams]) -> Result<ModelParams> {
    let k = copies.len() as f64;
    let merge = |b: &[f64], pick: &dyn Fn(&ModelParams) -> &[f64]| -> Vec<f64> {
        let mut out = b.to_vec();
        for (i, x) in out.iter_mut().enumerate() {
            let delta: f64 = copies.iter().map(|c| pick(c)[i] - b[i]).sum();
            if delta != 0.0 {
                *x += delta / k;
            }
        }
        out
    };
    let entities = merge(base.entity_table(), &|c| c.entity_table());
    let relations = RelationKind::ALL
        .iter()
        .map(|&r| {
            let b = base.relation(r);
            crate::models::RelationBlock {
                vector: merge(&b.vector, &|c| &c.relation(r).vector),
                matrix: merge(&b.matrix, &|c| &c.relation(r).matrix),
            }
        })
        .collect();
    ModelParams::from_parts(
        base.kind(),
        base.dim(),
        entities,
        relations,
        base.fingerprint().to_string(),
    )
}

/// Bit-exact checkpoint (64-bit payload).
pub fn checkpoint(params: &ModelParams, store: &TripleStore, dir: &Path) -> Result<()> {
    archive::write_archive(dir, params, store, Encoding::F64, archive::EPOCH_TIMESTAMP)
}

pub fn restore(dir: &Path) -> Result<ModelParams> {
    archive::read_archive(dir).map(|a| a.params)
}
