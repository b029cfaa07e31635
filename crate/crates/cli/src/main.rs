//! `termset`: every workflow step from the command line.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or state errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use termset_core::eval::{read_dataset, DEFAULT_CUTOFFS};
use termset_core::expansion::{ExpandParams, ExpansionReport, DEFAULT_K, DEFAULT_POOL_SIZE};
use termset_core::mlp::{self, MlpConfig, Split, TrainSet};
use termset_core::{ContextType, TrainConfig};
use termset_service::project::{CorpusFormat, JobState, DEFAULT_PAGE};
use termset_service::store::ProjectHandle;
use termset_service::{render, ServiceConfig, Store, TrainRequest};

#[derive(Debug, Parser)]
#[command(name = "termset", version, about = "Term set expansion over a corpus")]
struct Cli {
    /// Data root holding the projects.
    #[arg(long, global = true, env = "TERMSET_DATA")]
    data_root: Option<PathBuf>,
    /// Project id.
    #[arg(long, short = 'p', global = true, default_value = "default")]
    project: String,
    /// TOML config file (port, data_root, [train] defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, short = 'o', global = true, value_enum, default_value_t = Output::Table)]
    output: Output,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a corpus into the project, replacing any previous one.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Input is CoNLL-U rather than plain text.
        #[arg(long)]
        conllu: bool,
    },
    /// Group terms and train one embedding per context type.
    Train(TrainArgs),
    /// List term groups.
    Groups {
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long, default_value_t = DEFAULT_PAGE)]
        limit: usize,
    },
    /// Example sentences for the group of a term.
    Snippets {
        term: String,
        #[arg(long, default_value_t = 5)]
        max_n: usize,
    },
    /// Expand seed terms into a ranked set.
    Expand {
        #[arg(long)]
        category: String,
        /// Comma-separated seed terms.
        #[arg(long, value_delimiter = ',', required = true)]
        seed: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
        pool_size: usize,
    },
    /// Show an expansion session.
    Session { session: String },
    /// Mark expansion items as completed (or not, with --undo).
    Validate {
        #[arg(long)]
        session: String,
        /// Comma-separated terms.
        #[arg(long, value_delimiter = ',', required = true)]
        terms: Vec<String>,
        #[arg(long)]
        undo: bool,
    },
    /// Expand again with accepted terms added to the seeds.
    Reexpand {
        #[arg(long)]
        session: String,
        #[arg(long, value_delimiter = ',', required = true)]
        accept: Vec<String>,
    },
    /// Persist the validated items of a session.
    Save {
        #[arg(long)]
        session: String,
    },
    /// Write a saved validated set as CSV.
    Export {
        #[arg(long)]
        category: String,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the project against a gold dataset (JSON lines).
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CUTOFFS)]
        n: Vec<usize>,
    },
    /// Train the candidate classifier from labeled features (CSV).
    MlpTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Project summary and jobs.
    Status,
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Comma-separated context types.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_context)]
    contexts: Vec<ContextType>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Skip surface-embedding similarity when grouping terms.
    #[arg(long)]
    no_aux: bool,
    #[arg(long, default_value_t = 1)]
    min_term_frequency: u64,
}

fn parse_context(s: &str) -> Result<ContextType, String> {
    s.parse().map_err(|e: termset_core::Error| e.to_string())
}

impl TrainArgs {
    fn request(&self, defaults: &TrainConfig) -> TrainRequest {
        let mut tc = defaults.clone();
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { tc.$f = v; } )*};
        }
        set!(dim, epochs, seed, negatives, alpha, min_count, subsample, workers);
        let mut req = TrainRequest::new(self.contexts.clone());
        req.train_config = Some(tc);
        req.aux_similarity = !self.no_aux;
        req.min_term_frequency = self.min_term_frequency;
        req
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn out(text: &str) -> Result<()> {
    let mut stdout = io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = ServiceConfig::load(cli.config.as_deref())?;
    if let Some(d) = &cli.data_root {
        config.data_root = d.clone();
    }
    if let Command::Serve { port, host } = &cli.command {
        if let Some(p) = port {
            config.port = *p;
        }
        if let Some(h) = host {
            config.host = h.clone();
        }
        let rt = tokio::runtime::Runtime::new()?;
        return Ok(rt.block_on(termset_service::serve(&config))?);
    }
    let store = Store::new(&config.data_root, config.train.clone())
        .with_context(|| format!("data root {}", config.data_root.display()))?;
    let json = cli.output == Output::Json;
    let project = |create: bool| -> Result<Arc<ProjectHandle>> { Ok(store.open_or_create(&cli.project, create)?) };

    match &cli.command {
        Command::Ingest { paths, conllu } => {
            let bytes = read_inputs(paths)?;
            let format = if *conllu { CorpusFormat::Conllu } else { CorpusFormat::Text };
            let h = project(true)?;
            let job = store.ingest_now(&h, bytes, format, &|_, _| {})?;
            if job.state == JobState::Failed {
                bail!("ingest failed: {}", job.message);
            }
            if json {
                out(&render::json(&h.read().summary())?)?;
            } else {
                out(&format!("{}: {}\n", cli.project, job.message))?;
            }
        }
        Command::Train(args) => {
            let h = project(false)?;
            if h.read().meta.corpus.is_none() {
                bail!("project {} has no corpus; run ingest first", cli.project);
            }
            let req = args.request(store.default_train());
            let verbose = !json;
            let job = store.train_now(&h, &req, &|f, msg| {
                if verbose {
                    eprintln!("[{:>3.0}%] {msg}", f * 100.0);
                }
            })?;
            if job.state == JobState::Failed {
                bail!("training failed: {}", job.message);
            }
            if json {
                out(&render::json(&job)?)?;
            } else {
                let p = h.read();
                let ctx: Vec<&str> = p.models.keys().map(|c| c.as_str()).collect();
                out(&format!("{}; contexts: {}\n", job.message, ctx.join(", ")))?;
            }
        }
        Command::Groups { filter, offset, limit } => {
            let h = project(false)?;
            let page = h.read().groups_page(filter.as_deref().filter(|f| !f.is_empty()), *offset, *limit);
            if json {
                out(&render::json(&page)?)?;
            } else {
                let mut t = Table::new(&["id", "canonical", "frequency", "members"]);
                for g in &page.groups {
                    let members: Vec<&str> = g.members.iter().map(|m| m.surface.as_str()).collect();
                    t.row(vec![g.id.to_string(), g.canonical.clone(), g.frequency.to_string(), members.join(" | ")]);
                }
                out(&t.render())?;
                out(&format!(
                    "{} of {} groups (offset {})\n",
                    page.groups.len(),
                    page.total,
                    page.offset
                ))?;
            }
        }
        Command::Snippets { term, max_n } => {
            let h = project(false)?;
            let p = h.read();
            let id = p.resolve_terms(std::slice::from_ref(term))?[0];
            let list = p.snippets(id, *max_n)?;
            if json {
                out(&render::json(&list)?)?;
            } else {
                for s in &list.snippets {
                    out(&format!("{}#{}: {}\n", s.doc_id, s.sent_index, s.text))?;
                }
            }
        }
        Command::Expand { category, seed, k, pool_size } => {
            let h = project(false)?;
            let mut p = h.write();
            let ids = p.resolve_terms(seed)?;
            let report = p.expand(category, &ids, ExpandParams { k: *k, pool_size: *pool_size })?;
            print_report(&report, json)?;
        }
        Command::Session { session } => {
            let h = project(false)?;
            let report = h.read().report(session)?;
            print_report(&report, json)?;
        }
        Command::Validate { session, terms, undo } => {
            let h = project(false)?;
            let mut p = h.write();
            let ids = p.resolve_terms(terms)?;
            let mut report = None;
            for id in ids {
                report = Some(p.validate(session, id, !undo)?);
            }
            print_report(&report.expect("at least one term"), json)?;
        }
        Command::Reexpand { session, accept } => {
            let h = project(false)?;
            let mut p = h.write();
            let ids = p.resolve_terms(accept)?;
            let report = p.reexpand(session, &ids)?;
            print_report(&report, json)?;
        }
        Command::Save { session } => {
            let h = project(false)?;
            let saved = h.write().save(session)?;
            if json {
                out(&render::json(&saved)?)?;
            } else {
                out(&format!("saved {} items of {:?} to {}\n", saved.items, saved.category, saved.file))?;
            }
        }
        Command::Export { category, out: path } => {
            let h = project(false)?;
            let csv = h.read().export(category)?;
            match path {
                Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => out(&csv)?,
            }
        }
        Command::Eval { dataset, n } => {
            let file = fs::File::open(dataset).with_context(|| format!("opening {}", dataset.display()))?;
            let data = read_dataset(io::BufReader::new(file)).with_context(|| format!("reading {}", dataset.display()))?;
            let h = project(false)?;
            let report = h.read().benchmark(&data, n)?;
            if json {
                out(&render::json(&report)?)?;
            } else {
                out(&report.table())?;
                for (cat, terms) in &report.unresolved {
                    eprintln!("{cat}: {} gold terms not in any group: {}", terms.len(), terms.join(", "));
                }
                for cat in &report.skipped {
                    eprintln!("{cat}: skipped, a seed term is not in any group");
                }
            }
        }
        Command::MlpTrain { data, hidden, lr, epochs, seed, patience } => {
            let file = fs::File::open(data).with_context(|| format!("opening {}", data.display()))?;
            let set = TrainSet::read_csv(file).with_context(|| format!("reading {}", data.display()))?;
            let mut cfg = MlpConfig::default();
            macro_rules! set {
                ($($f:ident),*) => {$( if let Some(v) = *$f { cfg.$f = v; } )*};
            }
            set!(hidden, lr, epochs, seed, patience);
            let (model, history) = mlp::train_with_history(&set, &cfg)?;
            let h = project(false)?;
            h.write().set_mlp(model)?;
            let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
            out(&format!(
                "mlp trained on {} rows ({} dev): best epoch {}, train loss {:.6}, dev loss {:.6}\n",
                set.split(Split::Train).len(),
                set.split(Split::Dev).len(),
                history.best_epoch,
                last(&history.train_loss),
                last(&history.dev_loss),
            ))?;
        }
        Command::Status => {
            let h = project(false)?;
            let summary = h.read().summary();
            if json {
                out(&render::json(&summary)?)?;
            } else {
                let corpus = match &summary.corpus {
                    Some(c) => format!("{} sentences, {} documents", c.sentences, c.documents),
                    None => "none".into(),
                };
                let ctx: Vec<&str> = summary.contexts.iter().map(|c| c.as_str()).collect();
                out(&format!(
                    "project {} ({})\ncorpus: {corpus}\ngroups: {}\ncontexts: {}\nmlp: {}\nsessions: {}\n",
                    summary.id,
                    summary.name,
                    summary.groups,
                    ctx.join(", "),
                    if summary.mlp { "yes" } else { "no" },
                    summary.sessions.join(", "),
                ))?;
            }
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
    Ok(())
}

/// Concatenates inputs; blank lines keep files from running together.
fn read_inputs(paths: &[PathBuf]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    for p in paths {
        let data = read(p)?;
        if !bytes.is_empty() {
            bytes.extend_from_slice(b"\n\n");
        }
        bytes.extend_from_slice(&data);
    }
    Ok(bytes)
}

fn read(p: &Path) -> Result<Vec<u8>> {
    fs::read(p).map_err(|e| anyhow!("cannot read {}: {e}", p.display()))
}

fn print_report(report: &ExpansionReport, json: bool) -> Result<()> {
    if json {
        return out(&render::json(report)?);
    }
    let mut t = Table::new(&["rank", "id", "canonical", "certainty", "seed", "completed"]);
    for (i, item) in report.items.iter().enumerate() {
        t.row(vec![
            (i + 1).to_string(),
            item.group_id.to_string(),
            item.canonical.clone(),
            format!("{:.4}", item.certainty),
            if item.seed { "*".into() } else { String::new() },
            if item.completed { "x".into() } else { String::new() },
        ]);
    }
    let header = match &report.session_id {
        Some(s) => format!("session {s}, category {:?}, scorer {}\n", report.category, report.scorer.as_str()),
        None => format!("category {:?}\n", report.category),
    };
    out(&header)?;
    out(&t.render())
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            format!("{}\n", parts.join("  ").trim_end())
        };
        let mut s = line(&self.header);
        for r in &self.rows {
            s.push_str(&line(r));
        }
        s
    }
}

