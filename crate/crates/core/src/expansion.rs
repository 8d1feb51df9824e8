//! Domain-expansion study.
//!
//! An agent's home is the multiset of technology groups its patents so far
//! belong to. Every target group outside the home gets a domain-agent
//! proximity: the home groups' proximities to it, weighted by how many of
//! the agent's patents sit in each home group. When the agent's next patent
//! enters a new group, that group's rank percentile among all targets is
//! appended to the agent's expansion profile. A model whose proximities
//! anticipate real expansions puts entries near 1.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityKind, TripleStore};
use crate::ingestion::{AgentKind, AgentPortfolio, GroupUniverse};
use crate::models::ModelParams;
use crate::proximity::cosine;

/// Label carried by concatenated profiles.
pub const COMPOSITE_AGENT: &str = "*";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhiMode {
    /// Negative cosines count as no link.
    #[default]
    Floored,
    Raw,
}

impl PhiMode {
    fn apply(self, c: f64) -> f64 {
        match self {
            PhiMode::Floored => c.max(0.0),
            PhiMode::Raw => c,
        }
    }
}

impl std::str::FromStr for PhiMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "floored" => Ok(PhiMode::Floored),
            "raw" => Ok(PhiMode::Raw),
            _ => Err(format!("unknown phi mode {s:?} (floored|raw)")),
        }
    }
}

fn group_row<'a>(
    params: &'a ModelParams,
    vocabulary: &TripleStore,
    code: &str,
) -> Result<&'a [f64]> {
    let o = vocabulary
        .lookup(EntityKind::Group, code)
        .ok_or_else(|| Error::UnknownGroup(code.to_string()))?;
    params.entity(o)
}

/// Raw cosine between two group embeddings.
pub fn group_proximity(
    params: &ModelParams,
    vocabulary: &TripleStore,
    g1: &str,
    g2: &str,
) -> Result<f64> {
    cosine(
        group_row(params, vocabulary, g1)?,
        group_row(params, vocabulary, g2)?,
    )
}

/// Pairwise group weights over a universe, with the phi mode already applied.
#[derive(Debug, Clone)]
pub struct GroupProximity {
    codes: Vec<String>,
    index: HashMap<String, usize>,
    weights: Vec<f64>,
}

impl GroupProximity {
    pub fn from_params(
        params: &ModelParams,
        vocabulary: &TripleStore,
        universe: &GroupUniverse,
        mode: PhiMode,
    ) -> Result<Self> {
        let rows: Vec<&[f64]> = universe
            .codes()
            .iter()
            .map(|c| group_row(params, vocabulary, c))
            .collect::<Result<_>>()?;
        let n = rows.len();
        let weights: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i == j {
                    Ok(1.0)
                } else {
                    cosine(rows[i], rows[j]).map(|c| mode.apply(c))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self::assemble(universe, weights))
    }

    /// Weights from an arbitrary symmetric function; unlisted pairs are the
    /// caller's choice (typically 0).
    pub fn from_fn(universe: &GroupUniverse, phi: impl Fn(&str, &str) -> f64) -> Self {
        let codes = universe.codes();
        let n = codes.len();
        let weights = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i == j {
                    1.0
                } else {
                    phi(&codes[i], &codes[j])
                }
            })
            .collect();
        Self::assemble(universe, weights)
    }

    fn assemble(universe: &GroupUniverse, weights: Vec<f64>) -> Self {
        let codes = universe.codes().to_vec();
        let index = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        GroupProximity {
            codes,
            index,
            weights,
        }
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn position(&self, code: &str) -> Result<usize> {
        self.index
            .get(code)
            .copied()
            .ok_or_else(|| Error::UnknownGroup(code.to_string()))
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.codes.len() + j]
    }

    pub fn get(&self, g1: &str, g2: &str) -> Result<f64> {
        Ok(self.at(self.position(g1)?, self.position(g2)?))
    }
}

/// Home counts and remaining targets of one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainState {
    pub home: BTreeMap<String, u64>,
    pub targets: BTreeSet<String>,
}

impl DomainState {
    /// Everything in `universe` is a target.
    pub fn new(universe: &GroupUniverse) -> Self {
        DomainState {
            home: BTreeMap::new(),
            targets: universe.codes().iter().cloned().collect(),
        }
    }

    /// Count one patent in each of `groups`.
    pub fn add_patent<'a>(&mut self, groups: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for g in groups {
            if !self.home.contains_key(g) && !self.targets.remove(g) {
                return Err(Error::UnknownGroup(g.to_string()));
            }
            *self.home.entry(g.to_string()).or_insert(0) += 1;
        }
        Ok(())
    }
}

/// Count-weighted mean of home-to-target proximities.
pub fn domain_agent_proximity(
    state: &DomainState,
    target: &str,
    phi: impl Fn(&str, &str) -> f64,
) -> Result<f64> {
    if state.home.is_empty() {
        return Err(Error::EmptyHome);
    }
    if state.home.contains_key(target) {
        return Err(Error::TargetInHome(target.to_string()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (g, &a) in &state.home {
        num += phi(g, target) * a as f64;
        den += a as f64;
    }
    Ok(num / den)
}

/// Rank percentiles, 1 for the highest value and 0 for the lowest. Exact
/// ties share their mean rank.
fn rank_percentiles(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewTargets(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        let pct = (n as f64 - rank) / (n as f64 - 1.0);
        for &i in &order[start..end] {
            out[i] = pct;
        }
        start = end;
    }
    Ok(out)
}

pub fn percentiles(values: &[(String, f64)]) -> Result<BTreeMap<String, f64>> {
    let raw: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
    let pct = rank_percentiles(&raw)?;
    Ok(values.iter().map(|(g, _)| g.clone()).zip(pct).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionProfile {
    /// `kind:id` of the agent, or [`COMPOSITE_AGENT`].
    pub agent: String,
    pub entries: Vec<f64>,
}

pub fn build_profile(phi: &GroupProximity, portfolio: &AgentPortfolio) -> Result<ExpansionProfile> {
    if portfolio.events.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    let events: Vec<Vec<usize>> = portfolio
        .events
        .iter()
        .map(|e| {
            e.groups
                .iter()
                .map(|g| phi.position(g))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let n = phi.codes.len();
    let agent = format!(
        "{}:{}",
        portfolio.agent_kind.entity_kind(),
        portfolio.agent_id
    );
    let mut counts = vec![0u64; n];
    let mut total = 0u64;
    let mut entries = Vec::new();
    for groups in events.iter().filter(|g| !g.is_empty()) {
        if total > 0 {
            // BTreeSet order makes `groups` lexicographic already.
            let new: Vec<usize> = groups.iter().copied().filter(|&g| counts[g] == 0).collect();
            if !new.is_empty() {
                let targets: Vec<usize> = (0..n).filter(|&j| counts[j] == 0).collect();
                if targets.len() < 2 {
                    log::debug!("{agent}: {} target(s) left, no percentile", targets.len());
                } else {
                    let prox: Vec<f64> = targets
                        .iter()
                        .map(|&j| {
                            let num: f64 = (0..n)
                                .filter(|&i| counts[i] > 0)
                                .map(|i| phi.at(i, j) * counts[i] as f64)
                                .sum();
                            num / total as f64
                        })
                        .collect();
                    let pct = rank_percentiles(&prox)?;
                    for g in new {
                        let k = targets.binary_search(&g).expect("new group is a target");
                        entries.push(pct[k]);
                    }
                }
            }
        }
        for &g in groups {
            counts[g] += 1;
            total += 1;
        }
    }
    Ok(ExpansionProfile { agent, entries })
}

/// Concatenation in input order.
pub fn combine(profiles: &[ExpansionProfile]) -> ExpansionProfile {
    ExpansionProfile {
        agent: COMPOSITE_AGENT.to_string(),
        entries: profiles
            .iter()
            .flat_map(|p| p.entries.iter().copied())
            .collect(),
    }
}

/// Samples of F(x) = share of entries >= x at 0, every distinct entry, and 1.
pub fn cumulative_distribution(entries: &[f64]) -> Result<Vec<(f64, f64)>> {
    if entries.is_empty() {
        return Err(Error::EmptyProfile);
    }
    let n = entries.len() as f64;
    let mut xs: Vec<f64> = entries.iter().copied().chain([0.0, 1.0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    Ok(xs
        .into_iter()
        .map(|x| (x, entries.iter().filter(|&&p| p >= x).count() as f64 / n))
        .collect())
}

/// Exact area under the step function F on [0, 1].
pub fn auc(entries: &[f64]) -> Result<f64> {
    let samples = cumulative_distribution(entries)?;
    // F is left-continuous: on (x_a, x_b] it equals F(x_b).
    Ok(samples.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum())
}

/// Share of agents for which each model has the highest AUC, ties split.
pub fn explainability(
    per_agent: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<BTreeMap<String, f64>> {
    let Some(first) = per_agent.values().next() else {
        return Ok(BTreeMap::new());
    };
    let models: Vec<&String> = first.keys().collect();
    let mut awards: BTreeMap<String, f64> = models.iter().map(|m| ((*m).clone(), 0.0)).collect();
    for aucs in per_agent.values() {
        if aucs.len() != models.len() || !models.iter().all(|m| aucs.contains_key(*m)) {
            return Err(Error::InconsistentModelSets);
        }
        let best = aucs.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<&String> = aucs
            .iter()
            .filter(|(_, &v)| v == best)
            .map(|(m, _)| m)
            .collect();
        let share = 1.0 / winners.len() as f64;
        for m in winners {
            *awards.get_mut(m).expect("model present") += share;
        }
    }
    let n = per_agent.len() as f64;
    awards.values_mut().for_each(|v| *v /= n);
    Ok(awards)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: String,
    pub combined: ExpansionProfile,
    /// `None` when no agent of the class expanded.
    pub auc: Option<f64>,
    pub explainability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub agent_kind: AgentKind,
    pub agents: usize,
    /// Agents with a non-empty profile under every model.
    pub expanding_agents: usize,
    pub models: Vec<ModelOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub min_patents: usize,
    pub phi_mode: PhiMode,
    pub classes: Vec<ClassReport>,
}

pub struct StudyInput<'a> {
    pub vocabulary: &'a TripleStore,
    pub universe: &'a GroupUniverse,
    /// Portfolios per agent class.
    pub portfolios: &'a [Vec<AgentPortfolio>],
    pub min_patents: usize,
    pub phi_mode: PhiMode,
}

/// Profiles, combined AUC and explainability for every labelled model.
pub fn run_study(input: &StudyInput, models: &[(String, ModelParams)]) -> Result<ExpansionReport> {
    if models.is_empty() {
        return Err(Error::InvalidConfig("no models given".into()));
    }
    let labels: BTreeSet<&String> = models.iter().map(|(l, _)| l).collect();
    if labels.len() != models.len() {
        return Err(Error::InvalidConfig("model labels must be unique".into()));
    }
    let mut tables = Vec::with_capacity(models.len());
    for (_, params) in models {
        params.check_fingerprint(input.vocabulary)?;
        tables.push(GroupProximity::from_params(
            params,
            input.vocabulary,
            input.universe,
            input.phi_mode,
        )?);
    }

    let mut classes = Vec::new();
    for class in input.portfolios {
        let Some(first) = class.first() else { continue };
        let agent_kind = first.agent_kind;
        let mut agents: Vec<&AgentPortfolio> = class
            .iter()
            .filter(|p| p.events.len() >= input.min_patents)
            .collect();
        agents.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));

        // profiles[m][a]
        let profiles: Vec<Vec<ExpansionProfile>> = tables
            .iter()
            .map(|t| {
                agents
                    .par_iter()
                    .map(|p| build_profile(t, p))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;

        let mut per_agent: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (a, p) in agents.iter().enumerate() {
            if profiles.iter().any(|ps| ps[a].entries.is_empty()) {
                continue;
            }
            let aucs = models
                .iter()
                .zip(&profiles)
                .map(|((label, _), ps)| Ok((label.clone(), auc(&ps[a].entries)?)))
                .collect::<Result<_>>()?;
            per_agent.insert(p.agent_id.clone(), aucs);
        }
        let explain = explainability(&per_agent)?;

        let outcomes = models
            .iter()
            .zip(&profiles)
            .map(|((label, _), ps)| {
                let combined = combine(ps);
                let auc = if combined.entries.is_empty() {
                    None
                } else {
                    Some(auc(&combined.entries)?)
                };
                Ok(ModelOutcome {
                    model: label.clone(),
                    combined,
                    auc,
                    explainability: explain.get(label).copied().unwrap_or(0.0),
                })
            })
            .collect::<Result<_>>()?;
        classes.push(ClassReport {
            agent_kind,
            agents: agents.len(),
            expanding_agents: per_agent.len(),
            models: outcomes,
        });
    }
    Ok(ExpansionReport {
        min_patents: input.min_patents,
        phi_mode: input.phi_mode,
        classes,
    })
}
