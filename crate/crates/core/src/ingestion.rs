//! Parsers for the triple, vocabulary, patent-record and group-universe
//! files, plus the derived `comprise` relation and agent portfolios.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{parse_entity_token, EntityKind, RelationKind, Triple, TripleStore};

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Lines that survived or were dropped during a bulk triple load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub triples: usize,
    pub duplicates: usize,
    pub self_citations: usize,
    pub missing_endpoints: usize,
}

/// Parse triple lines into `store`. With `allow_new_entities = false` every
/// entity must already be in the vocabulary.
pub fn parse_triples_into(
    store: &mut TripleStore,
    text: &str,
    allow_new_entities: bool,
) -> Result<IngestStats> {
    let mut stats = IngestStats::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let [head, relation, tail] = fields[..] else {
            return Err(parse_err(
                line,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        };
        let (head_kind, head_id) = parse_entity_token(head).map_err(|r| parse_err(line, r))?;
        let relation: RelationKind = relation.parse().map_err(|r: String| parse_err(line, r))?;
        let (tail_kind, tail_id) = parse_entity_token(tail).map_err(|r| parse_err(line, r))?;
        let (expected_head, expected_tail) = relation.schema();
        if head_kind != expected_head || tail_kind != expected_tail {
            return Err(Error::SchemaViolation {
                relation,
                expected_head,
                expected_tail,
                head: head_kind,
                tail: tail_kind,
            }
            .at_line(line));
        }
        if head_id.trim().is_empty() || tail_id.trim().is_empty() {
            stats.missing_endpoints += 1;
            continue;
        }
        let resolve = |store: &mut TripleStore, kind, id: &str| {
            if allow_new_entities {
                Ok(store.add_entity(kind, id))
            } else {
                store
                    .lookup(kind, id)
                    .ok_or_else(|| Error::UnknownEntity(format!("{kind}:{id}")).at_line(line))
            }
        };
        let h = resolve(store, head_kind, head_id)?;
        let t = resolve(store, tail_kind, tail_id)?;
        if relation == RelationKind::Cite && h == t {
            stats.self_citations += 1;
            continue;
        }
        if store
            .insert(Triple::new(h, relation, t))
            .map_err(|e| e.at_line(line))?
        {
            stats.triples += 1;
        } else {
            stats.duplicates += 1;
        }
    }
    if stats.self_citations + stats.missing_endpoints + stats.duplicates > 0 {
        log::info!(
            "dropped {} self-citations, {} triples with missing endpoints, {} duplicates",
            stats.self_citations,
            stats.missing_endpoints,
            stats.duplicates
        );
    }
    Ok(stats)
}

pub fn parse_triples_str(text: &str) -> Result<(TripleStore, IngestStats)> {
    let mut store = TripleStore::new();
    let stats = parse_triples_into(&mut store, text, true)?;
    Ok((store, stats))
}

pub fn parse_triples_file(path: &Path) -> Result<TripleStore> {
    parse_triples_str(&read_text(path)?).map(|(s, _)| s)
}

/// Rebuild a vocabulary-only store from `<ordinal>\t<kind>:<id>` lines.
pub fn parse_vocabulary(text: &str) -> Result<TripleStore> {
    let mut store = TripleStore::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.is_empty() {
            continue;
        }
        let (ordinal, token) = raw
            .split_once('\t')
            .ok_or_else(|| parse_err(line, "expected <ordinal>\\t<kind>:<id>"))?;
        let ordinal: usize = ordinal
            .parse()
            .map_err(|_| parse_err(line, format!("bad ordinal {ordinal:?}")))?;
        let (kind, id) = parse_entity_token(token).map_err(|r| parse_err(line, r))?;
        if ordinal != store.entity_count() || store.lookup(kind, id).is_some() {
            return Err(parse_err(
                line,
                "ordinals must be unique and contiguous from 0",
            ));
        }
        store.add_entity(kind, id);
    }
    Ok(store)
}

pub const STORE_VOCAB_FILE: &str = "vocab.tsv";
pub const STORE_TRIPLES_FILE: &str = "triples.tsv";

/// Persist a store as a directory of `vocab.tsv` and `triples.tsv`.
pub fn write_store(dir: &Path, store: &TripleStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        (STORE_VOCAB_FILE, store.vocabulary_tsv()),
        (STORE_TRIPLES_FILE, store.triples_tsv()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_store(dir: &Path) -> Result<TripleStore> {
    let mut store = parse_vocabulary(&read_text(&dir.join(STORE_VOCAB_FILE))?)?;
    parse_triples_into(
        &mut store,
        &read_text(&dir.join(STORE_TRIPLES_FILE))?,
        false,
    )?;
    Ok(store)
}

/// Checks the letter-digit-digit-letter prefix of a classification group code.
pub fn is_group_code(code: &str) -> bool {
    let b = code.as_bytes();
    b.len() >= 4
        && b[0].is_ascii_alphabetic()
        && b[1].is_ascii_digit()
        && b[2].is_ascii_digit()
        && b[3].is_ascii_alphabetic()
}

/// Subsection code of a group: its first three characters.
pub fn subsection_of(group: &str) -> Result<&str> {
    if group.chars().count() < 4 {
        return Err(Error::MalformedCode(group.to_string()));
    }
    let end = group
        .char_indices()
        .nth(3)
        .map(|(i, _)| i)
        .unwrap_or(group.len());
    Ok(&group[..end])
}

/// One `subsection -comprise-> group` triple per group code, interning the
/// entities in `store` as needed. Output follows sorted code order.
pub fn derive_comprise<'a, I>(store: &mut TripleStore, groups: I) -> Result<Vec<Triple>>
where
    I: IntoIterator<Item = &'a str>,
{
    let codes: BTreeSet<&str> = groups.into_iter().collect();
    for code in &codes {
        subsection_of(code)?;
    }
    Ok(codes
        .into_iter()
        .map(|code| {
            let sub = store.add_entity(EntityKind::Subsection, subsection_of(code).unwrap());
            let group = store.add_entity(EntityKind::Group, code);
            Triple::new(sub, RelationKind::Comprise, group)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatentRecord {
    pub patent_id: String,
    pub application_date: NaiveDate,
    pub groups: BTreeSet<String>,
    pub inventors: Vec<String>,
    pub assignees: Vec<String>,
}

fn split_ids(field: Option<&&str>) -> Vec<String> {
    field
        .map(|f| {
            f.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .unwrap_or_default()
}

pub fn parse_patent_records(text: &str) -> Result<Vec<PatentRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() < 3 || fields.len() > 5 {
            return Err(parse_err(
                line,
                format!("expected 3 to 5 tab-separated fields, got {}", fields.len()),
            ));
        }
        let patent_id = fields[0].trim();
        if patent_id.is_empty() {
            return Err(parse_err(line, "empty patent id"));
        }
        let application_date = NaiveDate::parse_from_str(fields[1].trim(), "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date {:?}: {e}", fields[1])))?;
        let groups: BTreeSet<String> = split_ids(fields.get(2)).into_iter().collect();
        if groups.is_empty() {
            return Err(parse_err(line, "record has no groups"));
        }
        if let Some(bad) = groups.iter().find(|g| !is_group_code(g)) {
            return Err(parse_err(line, format!("malformed group code {bad:?}")));
        }
        out.push(PatentRecord {
            patent_id: patent_id.to_string(),
            application_date,
            groups,
            inventors: split_ids(fields.get(3)),
            assignees: split_ids(fields.get(4)),
        });
    }
    Ok(out)
}

pub fn format_patent_records(records: &[PatentRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let groups: Vec<&str> = r.groups.iter().map(String::as_str).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.patent_id,
            r.application_date.format("%Y-%m-%d"),
            groups.join(","),
            r.inventors.join(","),
            r.assignees.join(",")
        ));
    }
    out
}

/// Patent records implied by a store: groups from `contain`, agents from
/// `write`/`own`. Dates advance one day per patent in ordinal order from
/// `first_date`.
pub fn records_from_store(store: &TripleStore, first_date: NaiveDate) -> Vec<PatentRecord> {
    let ids = |p: usize, r: RelationKind| -> Vec<String> {
        let mut v: Vec<String> = store
            .heads(p, r)
            .iter()
            .map(|&o| store.entities()[o].source_id.clone())
            .collect();
        v.sort();
        v
    };
    store
        .entities_of_kind(EntityKind::Patent)
        .iter()
        .enumerate()
        .filter_map(|(k, &p)| {
            let groups: BTreeSet<String> = ids(p, RelationKind::Contain).into_iter().collect();
            if groups.is_empty() {
                return None;
            }
            Some(PatentRecord {
                patent_id: store.entities()[p].source_id.clone(),
                application_date: first_date + chrono::Days::new(k as u64),
                groups,
                inventors: ids(p, RelationKind::Write),
                assignees: ids(p, RelationKind::Own),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    Inventor,
    Assignee,
}

impl AgentKind {
    pub fn entity_kind(self) -> EntityKind {
        match self {
            AgentKind::Inventor => EntityKind::Inventor,
            AgentKind::Assignee => EntityKind::Assignee,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Inventor => "inventor",
            AgentKind::Assignee => "assignee",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "inventor" => Ok(AgentKind::Inventor),
            "assignee" => Ok(AgentKind::Assignee),
            _ => Err(format!("unknown agent kind {s:?}")),
        }
    }
}

/// An agent's patents in filing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPortfolio {
    pub agent_kind: AgentKind,
    pub agent_id: String,
    pub events: Vec<PatentRecord>,
}

/// Group records by agent, keeping agents with at least `min_patents`
/// patents. Events sort by (application date, patent id); portfolios sort by
/// agent id.
pub fn portfolios_from_records(
    records: &[PatentRecord],
    agent_kind: AgentKind,
    min_patents: usize,
) -> Vec<AgentPortfolio> {
    let mut by_agent: BTreeMap<&str, Vec<&PatentRecord>> = BTreeMap::new();
    for r in records {
        let agents = match agent_kind {
            AgentKind::Inventor => &r.inventors,
            AgentKind::Assignee => &r.assignees,
        };
        for a in agents {
            by_agent.entry(a).or_default().push(r);
        }
    }
    by_agent
        .into_iter()
        .filter(|(_, events)| events.len() >= min_patents)
        .map(|(agent, events)| {
            let mut events: Vec<PatentRecord> = events.into_iter().cloned().collect();
            events.sort_by(|a, b| {
                (a.application_date, &a.patent_id).cmp(&(b.application_date, &b.patent_id))
            });
            AgentPortfolio {
                agent_kind,
                agent_id: agent.to_string(),
                events,
            }
        })
        .collect()
}

pub fn load_portfolios(
    path: &Path,
    agent_kind: AgentKind,
    min_patents: usize,
) -> Result<Vec<AgentPortfolio>> {
    let records = parse_patent_records(&read_text(path)?)?;
    Ok(portfolios_from_records(&records, agent_kind, min_patents))
}

/// Ordered list of admissible group codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupUniverse {
    codes: Vec<String>,
}

impl GroupUniverse {
    pub fn new(codes: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, c) in codes.iter().enumerate() {
            if !is_group_code(c) {
                return Err(Error::MalformedCode(c.clone()).at_line(i + 1));
            }
            if !seen.insert(c) {
                return Err(parse_err(i + 1, format!("duplicate group {c:?}")));
            }
        }
        Ok(GroupUniverse { codes })
    }

    /// One code per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn contains(&self, code: &str) -> bool {
        self.codes.iter().any(|c| c == code)
    }
}
