use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nl2sql_core::config::{PipelineConfig, CONFIG_ENV};
use nl2sql_core::dataset::{load_dataset, DbCatalog, Flavor};
use nl2sql_core::eval::{run_eval, summary_table, write_records};
use nl2sql_core::exec::ExecutionOutcome;
use nl2sql_core::pipeline::Pipeline;
use nl2sql_core::schema::render_schema;
use nl2sql_core::synth::{
    balance_report, synth_multitask, synth_reformat, synth_selection, BalancePolicy, CandidateBatch, ReformatStyle, SynthOutput,
    SynthSettings, TaskMix,
};
use nl2sql_core::Error;

#[derive(Parser)]
#[command(name = "nl2sql", version, about = "Multi-generator text-to-SQL pipeline")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for machine-readable outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Concurrent items during eval.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Question {
    /// SQLite database file.
    db: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, default_value = "")]
    evidence: String,
}

#[derive(Subcommand)]
enum Command {
    /// Print the rendered schema of a database.
    Introspect { db: PathBuf },
    /// Run the schema filter and dump its report.
    Link(Question),
    /// Generate candidates without selecting one.
    Gen(Question),
    /// Answer a question end to end.
    Ask {
        #[command(flatten)]
        q: Question,
        /// Execute the chosen SQL and print its rows.
        #[arg(long)]
        execute: bool,
    },
    /// Score the pipeline on a benchmark file.
    Eval {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "bird")]
        flavor: FlavorArg,
        /// Directory holding `<db_id>/<db_id>.sqlite`; defaults to the dataset's directory.
        #[arg(long)]
        db_root: Option<PathBuf>,
        /// Evaluate only the first N items.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Build training records from a benchmark file.
    Synth {
        dataset: PathBuf,
        #[arg(long, value_enum)]
        task: SynthTask,
        #[arg(long, value_enum, default_value = "bird")]
        flavor: FlavorArg,
        #[arg(long)]
        db_root: Option<PathBuf>,
        /// Rewrite style for `--task reformat`.
        #[arg(long, value_enum, default_value = "standard")]
        style: StyleArg,
        /// Backend role that performs rewrites.
        #[arg(long, default_value = "reformat")]
        role: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Bird,
    Spider,
}

impl From<FlavorArg> for Flavor {
    fn from(f: FlavorArg) -> Self {
        match f {
            FlavorArg::Bird => Flavor::Bird,
            FlavorArg::Spider => Flavor::Spider,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthTask {
    Multitask,
    Selection,
    Reformat,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Complex,
    Standard,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::ConfigInvalid(_))));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let Some(path) = &cli.config else {
        return Err(Error::ConfigInvalid(format!("no config file given (--config or {CONFIG_ENV})")).into());
    };
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
}

fn to_json(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn print_rows(o: &ExecutionOutcome) {
    match &o.rows {
        Some(rows) => {
            for r in rows {
                let cells: Vec<String> = r.iter().map(ToString::to_string).collect();
                println!("{}", cells.join("\t"));
            }
        }
        None => eprintln!("{}: {}", o.status, o.message.as_deref().unwrap_or("")),
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Introspect { db } => {
            let cap = match &cli.config {
                Some(_) => load_config(&cli)?.sample_cap,
                None => nl2sql_core::schema::DEFAULT_SAMPLE_CAP,
            };
            let (catalog, id) = DbCatalog::single(db);
            let doc = catalog.with_sample_cap(cap).doc(&id)?;
            let text = render_schema(&doc, None)?;
            print!("{text}");
            write_out(&cli.out, "schema.txt", text.as_bytes())
        }
        Command::Link(q) => {
            let pipeline = Pipeline::from_config(load_config(&cli)?)?;
            let doc = open_doc(&q.db, pipeline.config.sample_cap)?;
            let report = pipeline.link(&doc, &q.db, &q.question, &q.evidence)?;
            for s in &report.subsets {
                let cols: Vec<String> = s.columns.iter().map(ToString::to_string).collect();
                println!("S_{}: {}", s.iteration_index, cols.join(", "));
            }
            write_out(&cli.out, "link.json", &to_json(&report)?)
        }
        Command::Gen(q) => {
            let pipeline = Pipeline::from_config(load_config(&cli)?)?;
            let doc = open_doc(&q.db, pipeline.config.sample_cap)?;
            let (_, candidates) = pipeline.generate(&doc, &q.db, &q.question, &q.evidence)?;
            for c in &candidates {
                println!("{}\tS_{}\t{}\t{}", c.generator_id, c.schema_index, c.outcome.status, c.sql);
            }
            write_out(&cli.out, "candidates.json", &to_json(&candidates)?)
        }
        Command::Ask { q, execute } => {
            let pipeline = Pipeline::from_config(load_config(&cli)?)?;
            let doc = open_doc(&q.db, pipeline.config.sample_cap)?;
            let t = pipeline.ask(&doc, &q.db, &q.question, &q.evidence, *execute)?;
            println!("{}", t.chosen_sql);
            if let Some(r) = &t.result {
                print_rows(r);
            }
            write_out(&cli.out, "transcript.json", &to_json(&t)?)
        }
        Command::Eval {
            dataset,
            flavor,
            db_root,
            limit,
        } => {
            let cfg = load_config(&cli)?;
            let workers = cfg.workers;
            let catalog = catalog_for(dataset, db_root.as_deref(), cfg.sample_cap);
            let mut items = load_dataset(dataset, (*flavor).into())?;
            if let Some(n) = limit {
                items.truncate(*n);
            }
            let pipeline = Pipeline::from_config(cfg)?;
            let (records, report) = run_eval(&pipeline, &catalog, &items, workers)?;
            let mut buf = Vec::new();
            write_records(&records, &mut buf)?;
            write_out(&cli.out, "records.jsonl", &buf)?;
            write_out(&cli.out, "report.json", &to_json(&report)?)?;
            let table = summary_table(&report);
            write_out(&cli.out, "summary.txt", table.as_bytes())?;
            print!("{table}");
            Ok(())
        }
        Command::Synth {
            dataset,
            task,
            flavor,
            db_root,
            style,
            role,
        } => {
            let cfg = load_config(&cli)?;
            let catalog = catalog_for(dataset, db_root.as_deref(), cfg.sample_cap);
            let items = load_dataset(dataset, (*flavor).into())?;
            let settings = SynthSettings {
                seed: cfg.seed,
                mode: cfg.mode,
                timeout_ms: cfg.timeout_ms,
            };
            let (name, out) = match task {
                SynthTask::Multitask => ("multitask.jsonl", synth_multitask(&items, &catalog, TaskMix::default(), settings)?),
                SynthTask::Selection => {
                    let pipeline = Pipeline::from_config(cfg)?;
                    let source = |it: &nl2sql_core::dataset::BenchItem, doc: &nl2sql_core::schema::SchemaDoc, db: &Path| {
                        let (filter, candidates) = pipeline.generate(doc, db, &it.question, &it.evidence)?;
                        Ok(CandidateBatch {
                            candidates,
                            subsets: filter.subsets,
                        })
                    };
                    let out = synth_selection(&items, &catalog, &source, BalancePolicy::default(), settings)?;
                    write_out(&cli.out, "balance.json", &to_json(&balance_report(&out.samples))?)?;
                    ("selection.jsonl", out)
                }
                SynthTask::Reformat => {
                    let registry = cfg.build_registry()?;
                    let backend = registry.get(role)?;
                    let style = match style {
                        StyleArg::Complex => ReformatStyle::ComplexPattern,
                        StyleArg::Standard => ReformatStyle::Standardized,
                    };
                    ("reformat.jsonl", synth_reformat(&items, &catalog, style, backend.as_ref(), role, settings)?)
                }
            };
            finish_synth(&cli.out, name, &out)
        }
    }
}

fn finish_synth(dir: &Path, name: &str, out: &SynthOutput) -> Result<()> {
    let mut buf = Vec::new();
    out.write_jsonl(&mut buf)?;
    write_out(dir, name, &buf)?;
    let summary = serde_json::json!({
        "samples": out.samples.len(),
        "rejected": out.rejected,
        "skipped": out.skipped,
    });
    write_out(dir, "synth_report.json", &to_json(&summary)?)?;
    println!("{} samples, {} skipped, {} rejected", out.samples.len(), out.skipped.len(), out.rejected);
    Ok(())
}

fn open_doc(db: &Path, cap: usize) -> Result<std::sync::Arc<nl2sql_core::schema::SchemaDoc>> {
    let (catalog, id) = DbCatalog::single(db);
    Ok(catalog.with_sample_cap(cap).doc(&id)?)
}

fn catalog_for(dataset: &Path, db_root: Option<&Path>, cap: usize) -> DbCatalog {
    let root = db_root
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dataset.parent().map(Path::to_path_buf).unwrap_or_default());
    DbCatalog::new(root).with_sample_cap(cap)
}
