use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use patnet::archive::{self, Encoding};
use patnet::evaluator::{self, EvalConfig, Sides, TieRule};
use patnet::expansion::{self, PhiMode, StudyInput};
use patnet::graph::{
    self, CorruptPool, EntityKind, EntityRef, SplitSpec, SyntheticConfig, TripleStore,
};
use patnet::ingestion::{self, AgentKind, GroupUniverse};
use patnet::models::{ModelKind, ModelParams};
use patnet::proximity::{self, TransformMode};
use patnet::trainer::{self, ExecutionMode, LossKind};
use patnet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "patnet",
    version,
    about = "Knowledge-graph embeddings for patent metadata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Seed {
    /// Seed for every random draw made by the command.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Parse triple files into a store directory.
    Ingest {
        /// Triple TSV files (head, relation, tail).
        #[arg(long = "triples", required = true, num_args = 1..)]
        triples: Vec<PathBuf>,
        /// Add comprise facts derived from every group's code.
        #[arg(long)]
        derive_comprise: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Split a store into training and test triples.
    Split {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        test_fraction: f64,
        /// Store directory for the training part.
        #[arg(long)]
        out_train: PathBuf,
        /// Triple TSV for the test part.
        #[arg(long)]
        out_test: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Train one model and write an embedding archive.
    Train(TrainArgs),
    /// Rank held-out triples against sampled corruptions.
    Eval {
        #[arg(long)]
        archive: PathBuf,
        /// Store the model was trained on.
        #[arg(long)]
        store: PathBuf,
        /// Triple TSV of held-out facts.
        #[arg(long)]
        test: PathBuf,
        /// Corruptions per query side.
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, value_enum, default_value_t = SidesArg::Both)]
        sides: SidesArg,
        #[arg(long, value_enum, default_value_t = PoolArg::SameKind)]
        pool: PoolArg,
        /// Never draw corruptions that are known facts.
        #[arg(long)]
        filtered: bool,
        #[arg(long, value_enum, default_value_t = TieArg::Midpoint)]
        ties: TieArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Nearest entities to a focal entity by knowledge proximity.
    Neighbors {
        #[arg(long)]
        archive: PathBuf,
        /// Focal entity as kind:id.
        #[arg(long)]
        focal: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Restrict results to these kinds.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<EntityKind>,
        #[arg(long, value_enum, default_value_t = ModeArg::Algebraic)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Pairwise proximity matrix over a list of entities.
    Proximity {
        #[arg(long)]
        archive: PathBuf,
        /// One kind:id token per line.
        #[arg(long)]
        entities: PathBuf,
        /// Kind every entity is moved into before comparison.
        #[arg(long, default_value = "patent")]
        kind: EntityKind,
        #[arg(long, value_enum, default_value_t = ModeArg::Algebraic)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Domain-expansion study across one or more archives.
    Expansion {
        #[arg(long = "archive", required = true, num_args = 1..)]
        archives: Vec<PathBuf>,
        /// Patent-record TSV.
        #[arg(long)]
        records: PathBuf,
        /// Group universe, one code per line.
        #[arg(long)]
        universe: PathBuf,
        #[arg(long, value_enum, default_value_t = AgentArg::Both)]
        agents: AgentArg,
        #[arg(long, default_value_t = 30)]
        min_patents: usize,
        #[arg(long, value_enum, default_value_t = PhiArg::Floored)]
        phi: PhiArg,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Dump entity embeddings as TSV.
    ExportEmbeddings {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<EntityKind>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Generate a community-structured graph with matching records and universe.
    Synth {
        #[arg(long, default_value_t = 5)]
        communities: usize,
        #[arg(long, default_value_t = 200)]
        patents: usize,
        #[arg(long, default_value_t = 40)]
        inventors: usize,
        #[arg(long, default_value_t = 10)]
        assignees: usize,
        #[arg(long, default_value_t = 0.3)]
        intra: f64,
        #[arg(long, default_value_t = 0.001)]
        inter: f64,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    l2: Option<f64>,
    /// Override entity normalization (TransE only).
    #[arg(long)]
    normalize: Option<bool>,
    /// Shard epochs across this many workers instead of the reference loop.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = EncodingArg::F32)]
    encoding: EncodingArg,
    /// Per-epoch mean loss as CSV.
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidesArg {
    Head,
    Tail,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolArg {
    SameKind,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Midpoint,
    Optimistic,
    Pessimistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    GuideTable,
    Algebraic,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Inventor,
    Assignee,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhiArg {
    Floored,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    MarginRank,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    F32,
    F64,
}

impl From<ModeArg> for TransformMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::GuideTable => TransformMode::GuideTable,
            ModeArg::Algebraic => TransformMode::Algebraic,
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_test(vocabulary: &TripleStore, path: &Path) -> Result<Vec<graph::Triple>> {
    let mut test = vocabulary.empty_like();
    ingestion::parse_triples_into(&mut test, &read_text(path)?, false)?;
    Ok(test.triples().to_vec())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            triples,
            derive_comprise,
            out,
            seed: _,
        } => {
            let mut store = TripleStore::new();
            for path in &triples {
                let stats = ingestion::parse_triples_into(&mut store, &read_text(path)?, true)?;
                log::info!("{}: {stats:?}", path.display());
            }
            if derive_comprise {
                let groups: Vec<String> = store
                    .entities_of_kind(EntityKind::Group)
                    .iter()
                    .map(|&o| store.entities()[o].source_id.clone())
                    .collect();
                for t in ingestion::derive_comprise(&mut store, groups.iter().map(String::as_str))?
                {
                    store.insert(t)?;
                }
            }
            ingestion::write_store(&out, &store)?;
            let s = store.stats();
            eprintln!(
                "{} entities, {} triples",
                s.total_entities(),
                s.total_triples()
            );
        }
        Command::Split {
            store,
            test_fraction,
            out_train,
            out_test,
            seed,
        } => {
            let store = ingestion::read_store(&store)?;
            let (train, test) = graph::split(
                &store,
                SplitSpec {
                    test_fraction,
                    seed: seed.seed,
                },
            )?;
            ingestion::write_store(&out_train, &train)?;
            let mut held = train.empty_like();
            for t in test {
                held.add_triple(t)?;
            }
            write_file(&out_test, &held.triples_tsv())?;
        }
        Command::Train(a) => train(a)?,
        Command::Eval {
            archive,
            store,
            test,
            k,
            sides,
            pool,
            filtered,
            ties,
            out,
            seed,
        } => {
            let params = archive::read_archive(&archive)?.params;
            let mut known = ingestion::read_store(&store)?;
            let test = load_test(&known, &test)?;
            if filtered {
                for t in &test {
                    known.insert(*t)?;
                }
            }
            let config = EvalConfig {
                corruptions_per_side: k,
                sides: match sides {
                    SidesArg::Head => Sides::HeadOnly,
                    SidesArg::Tail => Sides::TailOnly,
                    SidesArg::Both => Sides::Both,
                },
                pool: match pool {
                    PoolArg::SameKind => CorruptPool::SameKind,
                    PoolArg::All => CorruptPool::AllEntities,
                },
                filtered,
                seed: seed.seed,
                tie_rule: match ties {
                    TieArg::Midpoint => TieRule::Midpoint,
                    TieArg::Optimistic => TieRule::Optimistic,
                    TieArg::Pessimistic => TieRule::Pessimistic,
                },
            };
            let report = evaluator::evaluate(&params, &test, &known, &config)?;
            let text = toml::to_string(&report).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            write_file(&out, &text)?;
            eprintln!(
                "MR {:.3}  MRR {:.4}  Hits@1 {:.4}  Hits@3 {:.4}  Hits@10 {:.4}",
                report.overall.mr,
                report.overall.mrr,
                report.overall.hits_at_1,
                report.overall.hits_at_3,
                report.overall.hits_at_10
            );
        }
        Command::Neighbors {
            archive,
            focal,
            k,
            kinds,
            mode,
            out,
            seed: _,
        } => {
            let a = archive::read_archive(&archive)?;
            let focal = a.vocabulary.resolve(&focal)?.clone();
            let filter = (!kinds.is_empty()).then_some(kinds.as_slice());
            let hits = proximity::nearest_neighbors(
                &a.params,
                &a.vocabulary,
                &focal,
                k,
                filter,
                mode.into(),
            )?;
            let mut body = String::from("rank\tentity\tkind\tproximity\n");
            for (i, h) in hits.iter().enumerate() {
                writeln!(
                    body,
                    "{}\t{}\t{}\t{}",
                    i + 1,
                    h.entity,
                    h.kind(),
                    h.proximity
                )
                .unwrap();
            }
            write_file(&out, &body)?;
        }
        Command::Proximity {
            archive,
            entities,
            kind,
            mode,
            out,
            seed: _,
        } => {
            let a = archive::read_archive(&archive)?;
            let list: Vec<EntityRef> = read_text(&entities)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| a.vocabulary.resolve(l).cloned())
                .collect::<Result<_>>()?;
            let m = proximity::pairwise_matrix(&a.params, &list, kind, mode.into())?;
            let mut body = String::from("entity");
            for e in &list {
                write!(body, "\t{e}").unwrap();
            }
            body.push('\n');
            for (e, row) in list.iter().zip(&m) {
                body.push_str(&e.to_string());
                for x in row {
                    write!(body, "\t{x}").unwrap();
                }
                body.push('\n');
            }
            write_file(&out, &body)?;
        }
        Command::Expansion {
            archives,
            records,
            universe,
            agents,
            min_patents,
            phi,
            out_dir,
            seed: _,
        } => expansion_cmd(
            &archives,
            &records,
            &universe,
            agents,
            min_patents,
            phi,
            &out_dir,
        )?,
        Command::ExportEmbeddings {
            archive,
            kinds,
            out,
            seed: _,
        } => {
            let a = archive::read_archive(&archive)?;
            let mut body = String::new();
            for e in a.vocabulary.entities() {
                if !kinds.is_empty() && !kinds.contains(&e.kind) {
                    continue;
                }
                body.push_str(&e.to_string());
                for x in a.params.entity(e.ordinal)? {
                    write!(body, "\t{x}").unwrap();
                }
                body.push('\n');
            }
            write_file(&out, &body)?;
        }
        Command::Synth {
            communities,
            patents,
            inventors,
            assignees,
            intra,
            inter,
            out_dir,
            seed,
        } => {
            let config = SyntheticConfig::new(
                communities,
                patents,
                inventors,
                assignees,
                intra,
                inter,
                seed.seed,
            );
            let store = graph::generate_synthetic(&config)?;
            let first = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
            let records = ingestion::records_from_store(&store, first);
            let groups: BTreeSet<&str> = store
                .entities_of_kind(EntityKind::Group)
                .iter()
                .map(|&o| store.entities()[o].source_id.as_str())
                .collect();
            let mut universe = String::new();
            for g in groups {
                writeln!(universe, "{g}").unwrap();
            }
            write_file(&out_dir.join("triples.tsv"), &store.triples_tsv())?;
            write_file(
                &out_dir.join("records.tsv"),
                &ingestion::format_patent_records(&records),
            )?;
            write_file(&out_dir.join("universe.txt"), &universe)?;
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let store = ingestion::read_store(&a.store)?;
    let mut c = trainer::default_config(a.model);
    c.seed = a.seed.seed;
    if let Some(v) = a.dim {
        c.dim = v;
    }
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.negatives {
        c.negatives_per_positive = v;
    }
    if let Some(v) = a.lr {
        c.learning_rate = v;
    }
    if let Some(v) = a.margin {
        c.margin = v;
    }
    if let Some(v) = a.loss {
        c.loss = match v {
            LossArg::MarginRank => LossKind::MarginRank,
            LossArg::Logistic => LossKind::Logistic,
        };
    }
    if let Some(v) = a.l2 {
        c.l2_coefficient = v;
    }
    if let Some(v) = a.normalize {
        c.normalize_entities = v;
    }
    if let Some(w) = a.workers {
        c.mode = ExecutionMode::Parallel { workers: w };
    }
    let (params, report) = trainer::train(&store, a.model, &c)?;
    let encoding = match a.encoding {
        EncodingArg::F32 => Encoding::F32,
        EncodingArg::F64 => Encoding::F64,
    };
    archive::write_archive(&a.out, &params, &store, encoding, archive::EPOCH_TIMESTAMP)?;
    if let Some(path) = &a.loss_log {
        let mut body = String::from("epoch,loss\n");
        for (i, l) in report.epoch_losses.iter().enumerate() {
            writeln!(body, "{},{l}", i + 1).unwrap();
        }
        write_file(path, &body)?;
    }
    eprintln!(
        "{} trained for {} epochs in {:.2}s, final loss {}",
        a.model,
        c.epochs,
        report.wall_time_secs,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn expansion_cmd(
    archives: &[PathBuf],
    records: &Path,
    universe: &Path,
    agents: AgentArg,
    min_patents: usize,
    phi: PhiArg,
    out_dir: &Path,
) -> Result<()> {
    let mut models: Vec<(String, ModelParams)> = Vec::new();
    let mut vocabulary: Option<TripleStore> = None;
    for path in archives {
        let a = archive::read_archive(path)?;
        let base = a.params.kind().name().to_string();
        let mut label = base.clone();
        let mut n = 1;
        while models.iter().any(|(l, _)| *l == label) {
            n += 1;
            label = format!("{base}#{n}");
        }
        match &vocabulary {
            None => vocabulary = Some(a.vocabulary),
            Some(v) => a.params.check_fingerprint(v)?,
        }
        models.push((label, a.params));
    }
    let vocabulary = vocabulary.expect("at least one archive");
    let universe = GroupUniverse::load(universe)?;
    let records = ingestion::parse_patent_records(&read_text(records)?)?;
    let kinds: &[AgentKind] = match agents {
        AgentArg::Inventor => &[AgentKind::Inventor],
        AgentArg::Assignee => &[AgentKind::Assignee],
        AgentArg::Both => &[AgentKind::Inventor, AgentKind::Assignee],
    };
    let portfolios: Vec<_> = kinds
        .iter()
        .map(|&k| ingestion::portfolios_from_records(&records, k, min_patents))
        .collect();
    let report = expansion::run_study(
        &StudyInput {
            vocabulary: &vocabulary,
            universe: &universe,
            portfolios: &portfolios,
            min_patents,
            phi_mode: match phi {
                PhiArg::Floored => PhiMode::Floored,
                PhiArg::Raw => PhiMode::Raw,
            },
        },
        &models,
    )?;

    let mut auc_csv = String::from("agent_kind,model,agents,expanding_agents,entries,auc\n");
    let mut explain_csv = String::from("agent_kind,model,explainability\n");
    for class in &report.classes {
        let name = class.agent_kind.name();
        let mut cdf_csv = String::from("model,x,proportion\n");
        let mut profile_csv = String::from("model,index,percentile\n");
        for m in &class.models {
            let auc = m.auc.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                auc_csv,
                "{name},{},{},{},{},{auc}",
                m.model,
                class.agents,
                class.expanding_agents,
                m.combined.entries.len()
            )
            .unwrap();
            writeln!(explain_csv, "{name},{},{}", m.model, m.explainability).unwrap();
            if !m.combined.entries.is_empty() {
                for (x, p) in expansion::cumulative_distribution(&m.combined.entries)? {
                    writeln!(cdf_csv, "{},{x},{p}", m.model).unwrap();
                }
            }
            for (i, p) in m.combined.entries.iter().enumerate() {
                writeln!(profile_csv, "{},{},{p}", m.model, i + 1).unwrap();
            }
        }
        write_file(&out_dir.join(format!("cdf_{name}.csv")), &cdf_csv)?;
        write_file(&out_dir.join(format!("profiles_{name}.csv")), &profile_csv)?;
    }
    write_file(&out_dir.join("auc.csv"), &auc_csv)?;
    write_file(&out_dir.join("explainability.csv"), &explain_csv)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            ExitCode::from(1)
        }
    }
}
