//! Command-line front end: `stats`, `cluster`, `train`, `tag`, `eval`.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::clustering::{kmeans, ClusterModel, EmbeddingTable};
use crate::conll::{class_weights, corpus_stats, read_conll, Sentence};
use crate::crf::{load_model, save_model, train_observed, IterationRecord};
use crate::error::{Error, Result};
use crate::eval::{evaluate, parse_paired, report_render, EvalReport, ReportFormat};
use crate::features::PosLexicon;
use crate::gazetteer::Gazetteer;
use crate::pipeline::{build_training_set, tag_sentences, Resources};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "crfner", version, about = "Feature-based CRF named entity recognition")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set features.use_pos=true`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Human,
    Tsv,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics: sentence lengths and tag family counts.
    Stats {
        corpus: PathBuf,
        #[arg(long)]
        columns: Option<String>,
        #[arg(long, value_enum, default_value = "human")]
        format: OutputFormat,
        /// Also print inverse-frequency class weights.
        #[arg(long)]
        class_weights: bool,
    },
    /// k-means over word embeddings; writes a cluster file.
    Cluster {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model from the configured corpus and features.
    Train {
        /// Also write the dev report as TSV here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Label a corpus; appends a predicted label column.
    Tag {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        columns: Option<String>,
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        pos_lexicon: Option<PathBuf>,
        /// `TYPE=PATH`, repeatable.
        #[arg(long = "gazetteer", value_name = "TYPE=PATH")]
        gazetteers: Vec<String>,
    },
    /// Span-level evaluation. Without `--pred`, the gold file's last two
    /// columns are the gold and predicted labels.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        /// Predicted file; its last column is the predicted label.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        columns: Option<String>,
        #[arg(long, value_enum, default_value = "human")]
        format: OutputFormat,
    },
}

/// Process exit code for an error: 1 usage/config, 2 data, 3 internal.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Training { .. } => 3,
        _ => 2,
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path, &self.overrides)?,
            None => RunConfig::from_toml("", &self.overrides)?,
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.train.seed = seed;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        Ok(config)
    }
}

/// Runs a parsed command line, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let config = cli.run_config()?;
    if config.threads > 0 {
        // a second call in the same process keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
    match &cli.command {
        Command::Stats {
            corpus,
            columns,
            format,
            class_weights,
        } => cmd_stats(&config, corpus, columns.as_deref(), *format, *class_weights, out),
        Command::Cluster { embeddings, k, out: dest } => {
            cmd_cluster(&config, embeddings.as_deref(), *k, dest.as_deref(), out)
        }
        Command::Train { report } => cmd_train(&config, report.as_deref(), out),
        Command::Tag {
            model,
            input,
            out: dest,
            columns,
            clusters,
            embeddings,
            pos_lexicon,
            gazetteers,
        } => {
            let mut paths = config.paths.clone();
            if let Some(p) = clusters {
                paths.clusters = Some(p.clone());
            }
            if let Some(p) = embeddings {
                paths.embeddings = Some(p.clone());
            }
            if let Some(p) = pos_lexicon {
                paths.pos_lexicon = Some(p.clone());
            }
            if !gazetteers.is_empty() {
                paths.gazetteers = parse_gazetteer_flags(gazetteers)?;
            }
            let model = model
                .clone()
                .or(paths.model.clone())
                .ok_or_else(|| Error::Config("no model given (--model or paths.model)".into()))?;
            let mut config = config.clone();
            config.paths = paths;
            cmd_tag(&config, &model, input, columns.as_deref(), dest.as_deref(), out)
        }
        Command::Eval {
            gold,
            pred,
            columns,
            format,
        } => cmd_eval(&config, gold, pred.as_deref(), columns.as_deref(), *format, out),
    }
}

fn parse_gazetteer_flags(flags: &[String]) -> Result<BTreeMap<String, PathBuf>> {
    flags
        .iter()
        .map(|f| {
            f.split_once('=')
                .map(|(t, p)| (t.to_string(), PathBuf::from(p)))
                .ok_or_else(|| Error::Config(format!("--gazetteer {f:?} is not TYPE=PATH")))
        })
        .collect()
}

fn corpus_options(config: &RunConfig, columns: Option<&str>) -> Result<crate::conll::ParseOptions> {
    let mut corpus = config.corpus.clone();
    if let Some(c) = columns {
        corpus.columns = c.to_string();
    }
    corpus.parse_options()
}

pub fn cmd_stats(
    config: &RunConfig,
    corpus: &Path,
    columns: Option<&str>,
    format: OutputFormat,
    with_weights: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let sentences = read_conll(corpus, &corpus_options(config, columns)?)?;
    let stats = corpus_stats(&sentences);
    let mut text = String::new();
    if matches!(format, OutputFormat::Human | OutputFormat::Both) {
        let _ = write!(text, "{stats}");
    }
    if matches!(format, OutputFormat::Tsv | OutputFormat::Both) {
        text.push_str(&stats.to_tsv());
    }
    if with_weights && !stats.tag_counts.is_empty() {
        for (tag, w) in class_weights(&stats.tag_counts)? {
            let _ = writeln!(text, "weight.{tag}\t{w}");
        }
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

pub fn cmd_cluster(
    config: &RunConfig,
    embeddings: Option<&Path>,
    k: Option<usize>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let embeddings = embeddings
        .or(config.paths.embeddings.as_deref())
        .ok_or_else(|| Error::Config("no embeddings given (--embeddings or paths.embeddings)".into()))?;
    let dest = dest
        .or(config.paths.clusters.as_deref())
        .ok_or_else(|| Error::Config("no output given (--out or paths.clusters)".into()))?;
    let table = EmbeddingTable::load(embeddings)?;
    if table.duplicates() > 0 {
        eprintln!("warning: {} duplicate embedding rows overrode earlier ones", table.duplicates());
    }
    let mut params = config.kmeans();
    if let Some(k) = k {
        params.k = k;
    }
    let model = kmeans(&table, &params)?;
    model.save(dest)?;
    writeln!(
        out,
        "words\t{}\nk\t{}\niterations\t{}\ninertia\t{}",
        table.len(),
        model.k(),
        model.iterations,
        model.inertia()
    )
    .map_err(stdout_err)
}

/// Loads every resource named in the config paths.
pub fn load_resources(config: &RunConfig) -> Result<Resources> {
    let mut resources = Resources::default();
    if let Some(p) = &config.paths.clusters {
        resources.clusters = Some(ClusterModel::load(p)?);
    }
    if let Some(p) = &config.paths.embeddings {
        resources.embeddings = Some(EmbeddingTable::load(p)?);
    }
    if !config.paths.gazetteers.is_empty() {
        let g = Gazetteer::load(&config.paths.gazetteers)?;
        for ty in g.empty_types() {
            eprintln!("warning: gazetteer list for {ty} is empty");
        }
        resources.gazetteer = Some(g);
    }
    if let Some(p) = &config.paths.pos_lexicon {
        resources.pos_lexicon = Some(PosLexicon::load(p)?);
    }
    Ok(resources)
}

fn format_log(records: &[IterationRecord]) -> String {
    let mut text = String::from("iteration\tobjective\tgradient_norm\tstep\n");
    for r in records {
        let _ = writeln!(text, "{}\t{}\t{}\t{}", r.iteration, r.objective, r.gradient_norm, r.step);
    }
    text
}

pub fn cmd_train(config: &RunConfig, report_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    config.validate_for_training()?;
    let options = config.corpus.parse_options()?;
    let schema = config.corpus.schema()?;
    let train_path = config.paths.train.as_deref().expect("validated");
    let model_path = config.paths.model.as_deref().expect("validated");
    let sentences = read_conll(train_path, &options)?;
    if sentences.is_empty() {
        return Err(Error::Invalid(format!("{}: no sentences", train_path.display())));
    }
    let resources = load_resources(config)?;
    let lookups = resources.lookups();
    let (index, instances) = build_training_set(&sentences, &schema, &config.features, &lookups)?;
    let n_features = index.len();

    let mut records = Vec::new();
    let result = train_observed(
        schema,
        index,
        config.features.clone(),
        &instances,
        &config.train,
        |r| records.push(*r),
    );
    if let Some(p) = &config.paths.train_log {
        write_file(p, &format_log(&records))?;
    }
    let outcome = result.map_err(|e| match (&e, &config.paths.train_log) {
        (Error::Training { iteration, message }, Some(p)) => Error::Training {
            iteration: *iteration,
            message: format!("{message} (iteration log: {})", p.display()),
        },
        _ => e,
    })?;
    let mut model = outcome.model;
    model.constrain_bio = config.decode.constrain_bio;
    save_model(&model, model_path)?;

    let last = outcome.log.last().expect("log starts with iteration 0");
    let mut text = String::new();
    let _ = writeln!(text, "sentences\t{}", sentences.len());
    let _ = writeln!(text, "features\t{n_features}");
    let _ = writeln!(text, "iterations\t{}", last.iteration);
    let _ = writeln!(text, "objective\t{}", last.objective);
    let _ = writeln!(text, "converged\t{}", outcome.converged);
    let _ = writeln!(text, "model\t{}", model_path.display());

    if let Some(dev) = &config.paths.dev {
        let gold = read_conll(dev, &options)?;
        let predicted = tag_sentences(&model, &gold, &lookups)?;
        let report = evaluate(&gold, &predicted)?;
        text.push('\n');
        text.push_str(&report_render(&report, ReportFormat::Human));
        if let Some(p) = report_path {
            write_file(p, &report_render(&report, ReportFormat::Tsv))?;
        }
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

/// Tagged output rows: surface, POS if present, gold label if present,
/// predicted label; tab separated.
pub fn render_tagged(sentences: &[Sentence], predicted: &[Vec<String>]) -> String {
    let mut text = String::new();
    for (s, labels) in sentences.iter().zip(predicted) {
        for (t, label) in s.tokens.iter().zip(labels) {
            text.push_str(&t.surface);
            for field in [&t.pos, &t.label].into_iter().flatten() {
                text.push('\t');
                text.push_str(field);
            }
            text.push('\t');
            text.push_str(label);
            text.push('\n');
        }
        text.push('\n');
    }
    text
}

pub fn cmd_tag(
    config: &RunConfig,
    model_path: &Path,
    input: &Path,
    columns: Option<&str>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let model = load_model(model_path)?;
    let mut options = corpus_options(config, columns)?;
    options.columns = options.columns.label_optional();
    let sentences = read_conll(input, &options)?;
    let resources = load_resources(config)?;
    let predicted = tag_sentences(&model, &sentences, &resources.lookups())?;
    let text = render_tagged(&sentences, &predicted);
    match dest {
        Some(p) => write_file(p, &text),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

fn last_column_labels(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::conll::parse_rows(&text)
        .into_iter()
        .map(|rows| {
            rows.into_iter()
                .map(|(_, fields)| fields[fields.len() - 1].to_string())
                .collect()
        })
        .collect())
}

pub fn cmd_eval(
    config: &RunConfig,
    gold: &Path,
    pred: Option<&Path>,
    columns: Option<&str>,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<()> {
    let (gold_sentences, predicted) = match pred {
        Some(p) => (read_conll(gold, &corpus_options(config, columns)?)?, last_column_labels(p)?),
        None => {
            let text = std::fs::read_to_string(gold).map_err(|e| Error::io(gold, e))?;
            parse_paired(&text)?
        }
    };
    let report = evaluate(&gold_sentences, &predicted)?;
    out.write_all(render_report(&report, format).as_bytes())
        .map_err(stdout_err)
}

fn render_report(report: &EvalReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Human => report_render(report, ReportFormat::Human),
        OutputFormat::Tsv => report_render(report, ReportFormat::Tsv),
        OutputFormat::Both => {
            report_render(report, ReportFormat::Human) + "\n" + &report_render(report, ReportFormat::Tsv)
        }
    }
}
