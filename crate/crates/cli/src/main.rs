//! `softhorn`: reasoning, dataset generation and evaluation for soft Horn rules.
//!
//! Exit codes: 0 success, 1 other failure, 2 parse error, 3 enumeration budget exceeded,
//! 4 prediction ids do not match the dataset.

mod config;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use softhorn::corpus;
use softhorn::datagen::{
    self, audit, gen_chain, gen_overlap, gen_single_rule, ExampleRecord, FactFormat, GenConfig,
    GenError, Group, Manifest,
};
use softhorn::lpmln::{ground, GroundError, ReasonError, Reasoner, DEFAULT_BUDGET};
use softhorn::metrics::{self, MetricsError, Prediction, ToyConfig, ToyModel};
use softhorn::rules::{parse_fact, parse_facts, Atom, Registry, RuleError, RuleSet};
use softhorn::verbalize::{assemble_prompt, TemplateRegistry, VerbalizeError};

use config::{parse_list, FileConfig};

/// Stdout writes that surface errors instead of panicking on a closed pipe.
macro_rules! out {
    ($($t:tt)*) => { write!(std::io::stdout(), $($t)*)? };
}

macro_rules! outln {
    ($($t:tt)*) => { writeln!(std::io::stdout(), $($t)*)? };
}

#[derive(Parser, Debug)]
#[command(
    name = "softhorn",
    version,
    about = "Soft Horn rule reasoning and dataset tooling"
)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration file with `section.key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maximum number of candidate atoms enumerated per independent component.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Predicate registry file (defaults to the bundled registry).
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Template file (defaults to the bundled templates).
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a rule file (and optionally a fact file) and report what was read.
    ParseCheck {
        rules: PathBuf,
        #[arg(long)]
        facts: Option<PathBuf>,
    },
    /// Print marginal probabilities of query atoms.
    Reason {
        rules: PathBuf,
        facts: PathBuf,
        /// Atoms to query; all derivable atoms when omitted.
        query: Vec<String>,
        /// Also print every stable model.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Generate a dataset with train/dev/test JSONL files and a manifest.
    Generate(GenerateArgs),
    /// Render a context (and hypothesis) as text, or a dataset as prompts.
    Verbalize {
        #[arg(long, requires = "facts", conflicts_with = "dataset")]
        rules: Option<PathBuf>,
        #[arg(long, requires = "rules")]
        facts: Option<PathBuf>,
        #[arg(long, requires = "rules")]
        hypothesis: Option<String>,
        /// JSONL dataset to encode as prompts.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score predictions against a dataset split.
    Evaluate {
        dataset: PathBuf,
        predictions: PathBuf,
        /// Comma-separated CA thresholds.
        #[arg(long)]
        thresholds: Option<String>,
    },
    /// Fit the logistic toy model on a dataset split.
    TrainToy {
        train: PathBuf,
        /// Split to predict and score; the training split when omitted.
        #[arg(long)]
        eval: Option<PathBuf>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hash_buckets: Option<usize>,
        /// Drop the rule-id by hypothesis-class features.
        #[arg(long)]
        no_meta: bool,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Single,
    Overlap,
    Chain,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    mode: Mode,
    /// Rule file (defaults to the bundled corpus for the mode).
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Comma-separated rule ids to use, in order.
    #[arg(long)]
    rule_ids: Option<String>,
    /// Target examples (per rule in single mode).
    #[arg(long)]
    n: Option<usize>,
    /// Maximum facts per context.
    #[arg(long)]
    m: Option<usize>,
    /// Maximum chain depth.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    fact_format: Option<FactFormat>,
    /// Comma-separated train, dev and test ratios.
    #[arg(long)]
    split_ratios: Option<String>,
    /// Re-derive every weight after generation and write audit.json.
    #[arg(long)]
    audit: bool,
}

struct Env {
    file: FileConfig,
    seed: u64,
    budget: usize,
    out: Option<PathBuf>,
    registry_text: String,
    registry: Registry,
    templates_text: String,
}

impl Env {
    fn new(cli: &Cli) -> Result<Self> {
        let file = FileConfig::load(cli.config.as_deref())?;
        let seed = file.pick(cli.seed, "run.seed")?.unwrap_or(0);
        let budget = file
            .pick(cli.budget, "run.budget")?
            .unwrap_or(DEFAULT_BUDGET);
        let out = file.pick(cli.out.clone(), "run.out")?;
        let registry_text = match file.pick(cli.registry.clone(), "paths.registry")? {
            Some(p) => read(&p)?,
            None => corpus::REGISTRY.to_string(),
        };
        let registry = Registry::parse(&registry_text).context("parsing registry")?;
        let templates_text = match file.pick(cli.templates.clone(), "paths.templates")? {
            Some(p) => read(&p)?,
            None => corpus::TEMPLATES.to_string(),
        };
        Ok(Env {
            file,
            seed,
            budget,
            out,
            registry_text,
            registry,
            templates_text,
        })
    }

    fn templates(&self) -> Result<TemplateRegistry> {
        let t = TemplateRegistry::parse(&self.templates_text).context("parsing templates")?;
        t.check_covers(&self.registry)?;
        Ok(t)
    }

    fn rules(&self, path: &Path) -> Result<RuleSet> {
        let text = read(path)?;
        RuleSet::parse_corpus(&text, self.registry.clone())
            .with_context(|| format!("in {}", path.display()))
    }

    fn facts(&self, path: &Path, registry: &mut Registry) -> Result<Vec<Atom>> {
        let text = read(path)?;
        parse_facts(&text, registry).with_context(|| format!("in {}", path.display()))
    }

    /// Writes to `--out` when given, else stdout.
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                out!("{text}");
                Ok(())
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = std::io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("writing {}", path.display()))?,
    );
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn to_jsonl<T: serde::Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item)?);
        s.push('\n');
    }
    Ok(s)
}

fn parse_check(env: &Env, rules: &Path, facts: Option<&Path>) -> Result<()> {
    let set = env.rules(rules)?;
    let hard = set.rules.iter().filter(|r| r.is_hard()).count();
    outln!(
        "{}: {} rules ({} hard, {} soft)",
        rules.display(),
        set.rules.len(),
        hard,
        set.rules.len() - hard
    );
    if let Some(f) = facts {
        let mut reg = set.registry.clone();
        let atoms = env.facts(f, &mut reg)?;
        let program = ground(&set.rules, &reg, &atoms)?;
        outln!(
            "{}: {} facts, {} ground atoms, {} triggered instances",
            f.display(),
            atoms.len(),
            program.base_len(),
            program.triggered_count()
        );
    }
    Ok(())
}

fn reason(env: &Env, rules: &Path, facts: &Path, queries: &[String], verbose: bool) -> Result<()> {
    let set = env.rules(rules)?;
    let mut reg = set.registry.clone();
    let atoms = env.facts(facts, &mut reg)?;
    let queries: Vec<Atom> = queries
        .iter()
        .map(|q| parse_fact(q, &mut reg).with_context(|| format!("query `{q}`")))
        .collect::<Result<_>>()?;
    let program = ground(&set.rules, &reg, &atoms)?;
    let reasoner = Reasoner::new(env.budget);
    let marginals = reasoner.marginals(&program)?;
    let shown: Vec<Atom> = if queries.is_empty() {
        program
            .herbrand_base()
            .filter(|a| marginals.is_supported(a))
            .cloned()
            .collect()
    } else {
        queries
    };
    for q in &shown {
        outln!("{q} {:.3}", marginals.probability(q));
    }
    if verbose {
        let set = reasoner.stable_models(&program)?;
        outln!();
        outln!("probability\thard_count\tsoft_weight_sum\tmodel");
        let mut total = 0.0;
        for m in &set.models {
            let atoms: Vec<String> = m.interpretation.atoms.iter().map(Atom::to_string).collect();
            outln!(
                "{:.6}\t{}\t{:.6}\t{{{}}}",
                m.probability,
                m.hard_count,
                m.soft_weight_sum,
                atoms.join(", ")
            );
            total += m.probability;
        }
        outln!("total\t{:.6}\t{} models", total, set.models.len());
    }
    Ok(())
}

fn select(set: &RuleSet, ids: &Option<Vec<String>>) -> Result<Vec<softhorn::rules::Rule>> {
    match ids {
        None => Ok(set.rules.clone()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                set.get(id)
                    .cloned()
                    .ok_or_else(|| anyhow!("no rule with id `{id}`"))
            })
            .collect(),
    }
}

fn generate(env: &Env, args: &GenerateArgs) -> Result<()> {
    let f = &env.file;
    let out = env
        .out
        .clone()
        .ok_or_else(|| anyhow!("generate needs --out DIR"))?;
    let default_ratios = match args.mode {
        Mode::Single => [0.8, 0.1, 0.1],
        Mode::Overlap | Mode::Chain => [0.7, 0.1, 0.2],
    };
    let ratios = match &args.split_ratios {
        Some(s) => Some(parse_list::<f64>(s)?),
        None => f.list::<f64>("generate.split_ratios")?,
    };
    let split_ratios = match ratios {
        None => default_ratios,
        Some(r) if r.len() == 3 => [r[0], r[1], r[2]],
        Some(r) => bail!("expected three split ratios, got {}", r.len()),
    };
    let defaults = GenConfig::default();
    let config = GenConfig {
        n: f.pick(args.n, "generate.n")?.unwrap_or(defaults.n),
        m: f.pick(args.m, "generate.m")?.unwrap_or(defaults.m),
        seed: env.seed,
        fact_format: f
            .pick(args.fact_format, "generate.fact_format")?
            .unwrap_or(defaults.fact_format),
        split_ratios,
        budget: env.budget,
        ..defaults
    };
    let rule_ids = match &args.rule_ids {
        Some(s) => Some(parse_list::<String>(s)?),
        None => f.list::<String>("generate.rule_ids")?,
    };
    let rules_path = f.pick(args.rules.clone(), "paths.rules")?;
    let (corpus_text, set) = match &rules_path {
        Some(p) => (read(p)?, env.rules(p)?),
        None => {
            let text = match args.mode {
                Mode::Single => corpus::SINGLE_RULES,
                Mode::Overlap => corpus::OVERLAP_RULES,
                Mode::Chain => corpus::CHAIN_RULES,
            };
            (
                text.to_string(),
                RuleSet::parse_corpus(text, env.registry.clone())?,
            )
        }
    };
    let rules = select(&set, &rule_ids)?;
    let depth = f.pick(args.depth, "generate.depth")?.unwrap_or(5);
    let reg = &set.registry;
    let (mode, groups): (&str, Vec<Group>) = match args.mode {
        Mode::Single => {
            let mut groups = Vec::new();
            for r in &rules {
                groups.extend(gen_single_rule(r, reg, &config)?);
            }
            ("single", groups)
        }
        Mode::Overlap => ("overlap", gen_overlap(&rules, reg, &config)?),
        Mode::Chain => ("chain", gen_chain(&rules, reg, depth, &config)?),
    };
    let data = datagen::split(groups, config.split_ratios, config.seed)?;
    let templates = env.templates()?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut all_records = Vec::new();
    for (name, groups) in data.parts() {
        let records: Vec<ExampleRecord> = groups
            .iter()
            .flat_map(|g| &g.examples)
            .map(|e| e.to_record(&templates, reg))
            .collect::<Result<_, _>>()?;
        write_jsonl(&out.join(format!("{name}.jsonl")), &records)?;
        if args.audit {
            all_records.extend(records);
        }
    }
    let extra = json!({
        "mode_params": {
            "rule_ids": rules.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
            "depth": if args.mode == Mode::Chain { Some(depth) } else { None },
        },
        "registry_sha256": datagen::sha256_hex(env.registry_text.as_bytes()),
        "templates_sha256": datagen::sha256_hex(env.templates_text.as_bytes()),
    });
    let manifest = Manifest::build(mode, &config, extra, &corpus_text, &data)?;
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    outln!(
        "{mode}: train {} / dev {} / test {} examples in {} / {} / {} contexts",
        manifest.splits["train"],
        manifest.splits["dev"],
        manifest.splits["test"],
        manifest.split_groups["train"],
        manifest.split_groups["dev"],
        manifest.split_groups["test"],
    );
    if args.audit {
        let report = audit(&all_records, reg, env.budget)?;
        fs::write(
            out.join("audit.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        outln!(
            "audit: {} checked, {} mismatches, {} law violations",
            report.checked,
            report.mismatches.len(),
            report.law_violations.len()
        );
        if !report.passed() {
            bail!("audit failed");
        }
    }
    Ok(())
}

fn verbalize(
    env: &Env,
    rules: Option<&Path>,
    facts: Option<&Path>,
    hypothesis: Option<&str>,
    dataset: Option<&Path>,
) -> Result<()> {
    if let Some(d) = dataset {
        let records: Vec<ExampleRecord> = read_jsonl(d)?;
        let prompts = records
            .iter()
            .map(|r| {
                Ok(json!({
                    "id": r.id,
                    "prompt": assemble_prompt(&r.context, &r.hypothesis)?.encoded,
                    "label": r.label,
                    "weight": r.weight,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        return env.emit(&to_jsonl(&prompts)?);
    }
    let (Some(rules), Some(facts)) = (rules, facts) else {
        bail!("verbalize needs --rules and --facts, or --dataset");
    };
    let templates = env.templates()?;
    let set = env.rules(rules)?;
    let mut reg = set.registry.clone();
    let atoms = env.facts(facts, &mut reg)?;
    let context = templates.context(&reg, &set.rules, &atoms, None)?;
    let text = match hypothesis {
        None => context,
        Some(h) => {
            let h = parse_fact(h, &mut reg)?;
            assemble_prompt(&context, &templates.fact(&reg, &h)?)?.encoded
        }
    };
    env.emit(&(text + "\n"))
}

fn evaluate(env: &Env, dataset: &Path, predictions: &Path, thresholds: Option<&str>) -> Result<()> {
    let records: Vec<ExampleRecord> = read_jsonl(dataset)?;
    let preds: Vec<Prediction> = read_jsonl(predictions)?;
    let thresholds = match thresholds {
        Some(t) => parse_list::<f64>(t)?,
        None => env
            .file
            .list::<f64>("metrics.thresholds")?
            .unwrap_or_else(|| metrics::DEFAULT_THRESHOLDS.to_vec()),
    };
    let joined = metrics::join(&records, &preds)?;
    let report = metrics::report(&joined, &thresholds)?;
    env.emit(&(serde_json::to_string_pretty(&report)? + "\n"))
}

#[allow(clippy::too_many_arguments)]
fn train_toy(
    env: &Env,
    train: &Path,
    eval: Option<&Path>,
    learning_rate: Option<f64>,
    epochs: Option<usize>,
    hash_buckets: Option<usize>,
    no_meta: bool,
) -> Result<()> {
    let f = &env.file;
    let d = ToyConfig::default();
    let config = ToyConfig {
        learning_rate: f
            .pick(learning_rate, "train.learning_rate")?
            .unwrap_or(d.learning_rate),
        epochs: f.pick(epochs, "train.epochs")?.unwrap_or(d.epochs),
        seed: env.seed,
        hash_buckets: f
            .pick(hash_buckets, "train.hash_buckets")?
            .unwrap_or(d.hash_buckets),
        meta_features: !no_meta && f.get::<bool>("train.meta_features")?.unwrap_or(true),
    };
    let records: Vec<ExampleRecord> = read_jsonl(train)?;
    let outcome = ToyModel::train(&records, &config)?;
    let scored = match eval {
        Some(p) => read_jsonl(p)?,
        None => records,
    };
    let predictions = outcome.model.predictions(&scored);
    let report = metrics::report(&predictions, &metrics::DEFAULT_THRESHOLDS)?;
    let summary = json!({
        "config": config,
        "initial_risk": outcome.initial_risk,
        "final_risk": outcome.final_risk,
        "eval_risk": metrics::batch_risk(&predictions)?,
        "metrics": report,
    });
    if let Some(dir) = &env.out {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("model.json"),
            serde_json::to_string(&outcome.model)?,
        )?;
        let lines: Vec<Prediction> = predictions
            .iter()
            .map(|p| Prediction {
                example_id: p.example_id.clone(),
                predicted_prob: p.predicted_prob,
            })
            .collect();
        write_jsonl(&dir.join("predictions.jsonl"), &lines)?;
    }
    outln!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let env = Env::new(&cli)?;
    match &cli.command {
        Command::ParseCheck { rules, facts } => parse_check(&env, rules, facts.as_deref()),
        Command::Reason {
            rules,
            facts,
            query,
            verbose,
        } => reason(&env, rules, facts, query, *verbose),
        Command::Generate(args) => generate(&env, args),
        Command::Verbalize {
            rules,
            facts,
            hypothesis,
            dataset,
        } => verbalize(
            &env,
            rules.as_deref(),
            facts.as_deref(),
            hypothesis.as_deref(),
            dataset.as_deref(),
        ),
        Command::Evaluate {
            dataset,
            predictions,
            thresholds,
        } => evaluate(&env, dataset, predictions, thresholds.as_deref()),
        Command::TrainToy {
            train,
            eval,
            learning_rate,
            epochs,
            hash_buckets,
            no_meta,
        } => train_toy(
            &env,
            train,
            eval.as_deref(),
            *learning_rate,
            *epochs,
            *hash_buckets,
            *no_meta,
        ),
    }
}

fn is_parse(e: &(dyn std::error::Error + 'static)) -> bool {
    if e.is::<RuleError>() || e.is::<serde_json::Error>() {
        return true;
    }
    if let Some(g) = e.downcast_ref::<GroundError>() {
        return matches!(g, GroundError::Rule(_));
    }
    if let Some(v) = e.downcast_ref::<VerbalizeError>() {
        return matches!(v, VerbalizeError::Template { .. } | VerbalizeError::Rule(_));
    }
    if let Some(g) = e.downcast_ref::<GenError>() {
        return matches!(g, GenError::Rule(_) | GenError::Json(_));
    }
    false
}

fn is_budget(e: &(dyn std::error::Error + 'static)) -> bool {
    if let Some(r) = e.downcast_ref::<ReasonError>() {
        return matches!(r, ReasonError::BudgetExceeded { .. });
    }
    if let Some(g) = e.downcast_ref::<GenError>() {
        return g.is_budget_exceeded();
    }
    false
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for e in err.chain() {
        if let Some(MetricsError::IdMismatch { .. }) = e.downcast_ref::<MetricsError>() {
            return 4;
        }
        if is_budget(e) {
            return 3;
        }
        if is_parse(e) {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
