//! Planted-community graph generator for desk-scale experiments.
//!
//! Each community owns one group; groups share subsections four at a time.
//! Within a community, patents are laid out on a timeline: inventors and
//! assignees cover contiguous blocks of that timeline, and a patent may only
//! cite the `CITE_WINDOW` patents filed just before it. This gives every
//! relation a learnable local structure on top of the community split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EntityKind, RelationKind, Triple, TripleStore};
use crate::error::{Error, Result};

/// Number of immediately preceding same-community patents a patent may cite.
pub const CITE_WINDOW: usize = 20;
const CO_INVENTOR_PROB: f64 = 0.5;
const CROSS_GROUP_PROB: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub communities: usize,
    pub patents_per_community: usize,
    pub inventors_per_community: usize,
    pub assignees_per_community: usize,
    /// Citation probability for each (patent, earlier patent within the window) pair.
    pub intra_cite_prob: f64,
    /// Citation probability for each ordered cross-community patent pair.
    pub inter_cite_prob: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(
        communities: usize,
        patents_per_community: usize,
        inventors_per_community: usize,
        assignees_per_community: usize,
        intra_cite_prob: f64,
        inter_cite_prob: f64,
        seed: u64,
    ) -> Self {
        SyntheticConfig {
            communities,
            patents_per_community,
            inventors_per_community,
            assignees_per_community,
            intra_cite_prob,
            inter_cite_prob,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            self.communities,
            self.patents_per_community,
            self.inventors_per_community,
            self.assignees_per_community,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidConfig("all counts must be >= 1".into()));
        }
        for p in [self.intra_cite_prob, self.inter_cite_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "citation probability {p} outside [0, 1]"
                )));
            }
        }
        if self.intra_cite_prob < self.inter_cite_prob {
            return Err(Error::InvalidConfig(
                "intra_cite_prob must not be below inter_cite_prob".into(),
            ));
        }
        Ok(())
    }
}

/// Group code for community `c`: subsection `H{c/4:02}` plus a letter.
pub fn community_group_code(c: usize) -> String {
    format!(
        "{}{}",
        subsection_code(c / 4),
        (b'A' + (c % 4) as u8) as char
    )
}

fn subsection_code(s: usize) -> String {
    format!("H{s:02}")
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<TripleStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = TripleStore::new();
    let n_comm = config.communities;
    let n_pat = config.patents_per_community;
    let n_inv = config.inventors_per_community;
    let n_asg = config.assignees_per_community;

    let mut groups = Vec::with_capacity(n_comm);
    for c in 0..n_comm {
        let sub = store.add_entity(EntityKind::Subsection, &subsection_code(c / 4));
        let group = store.add_entity(EntityKind::Group, &community_group_code(c));
        store.insert(Triple::new(sub, RelationKind::Comprise, group))?;
        groups.push(group);
    }

    let mut patents = vec![Vec::with_capacity(n_pat); n_comm];
    for c in 0..n_comm {
        for i in 0..n_pat {
            let p = store.add_entity(EntityKind::Patent, &format!("c{c}p{i}"));
            patents[c].push(p);

            let lead = i * n_inv / n_pat;
            let inv = store.add_entity(EntityKind::Inventor, &format!("c{c}i{lead}"));
            store.insert(Triple::new(inv, RelationKind::Write, p))?;
            if n_inv > 1 && rng.random_bool(CO_INVENTOR_PROB) {
                let co = if lead + 1 < n_inv { lead + 1 } else { lead - 1 };
                let co = store.add_entity(EntityKind::Inventor, &format!("c{c}i{co}"));
                store.insert(Triple::new(co, RelationKind::Write, p))?;
            }

            let a = i * n_asg / n_pat;
            let asg = store.add_entity(EntityKind::Assignee, &format!("c{c}a{a}"));
            store.insert(Triple::new(asg, RelationKind::Own, p))?;

            store.insert(Triple::new(groups[c], RelationKind::Contain, p))?;
            if n_comm > 1 && rng.random_bool(CROSS_GROUP_PROB) {
                let mut other = rng.random_range(0..n_comm - 1);
                if other >= c {
                    other += 1;
                }
                store.insert(Triple::new(groups[other], RelationKind::Contain, p))?;
            }

            for &q in &patents[c][i.saturating_sub(CITE_WINDOW)..i] {
                if rng.random_bool(config.intra_cite_prob) {
                    store.insert(Triple::new(p, RelationKind::Cite, q))?;
                }
            }
        }
    }

    if config.inter_cite_prob > 0.0 {
        for c in 0..n_comm {
            for &citing in &patents[c] {
                for (c2, cited) in patents.iter().enumerate() {
                    if c2 == c {
                        continue;
                    }
                    for &q in cited {
                        if rng.random_bool(config.inter_cite_prob) {
                            store.insert(Triple::new(citing, RelationKind::Cite, q))?;
                        }
                    }
                }
            }
        }
    }
    Ok(store)
}
