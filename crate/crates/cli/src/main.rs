use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rapid_core::attr::{parse_dataset, Dataset, Vocabulary};
use rapid_core::dsl::{parse_ruleset, print_ruleset};
use rapid_core::eval::CompiledRuleSet;
use rapid_core::harness::{
    generate_synthetic, preset, run_experiment, summarize, write_report, ExperimentConfig,
    GeneratorSpec,
};
use rapid_core::learn::{learn_ruleset, FeedbackConstraints, LearnConfig};
use rapid_service::SessionStore;

#[derive(Parser)]
#[command(
    name = "rapid",
    version,
    about = "Learn, apply and refine logic labeling rules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated-expert experiment and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a planted-rule dataset.
    Gen {
        /// Generator spec (TOML) or the name of a built-in preset.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        records: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Learn rules from every labeled record of a dataset.
    Learn {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Learner settings (TOML).
        #[arg(long)]
        learn_config: Option<PathBuf>,
        #[arg(long)]
        noise_tolerant: bool,
    },
    /// Label every record of a dataset with a rule file, one JSON decision per line.
    Label {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        rules: PathBuf,
        /// Write decisions here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory for session event logs; existing sessions are replayed.
        #[arg(long, default_value = "sessions", conflicts_with = "in_memory")]
        state_dir: PathBuf,
        /// Keep sessions in memory only.
        #[arg(long)]
        in_memory: bool,
    },
}

#[derive(Args)]
struct DataArgs {
    /// JSONL records.
    #[arg(long)]
    data: PathBuf,
    /// Vocabulary JSON; the standard vocabulary when omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let vocab = match &self.vocab {
            Some(p) => Vocabulary::from_json(&read(p)?)
                .with_context(|| format!("vocabulary {}", p.display()))?,
            None => Vocabulary::standard(),
        };
        parse_dataset(&read(&self.data)?, &vocab)
            .with_context(|| format!("dataset {}", self.data.display()))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut config = ExperimentConfig::from_file(config)
        .with_context(|| format!("config {}", config.display()))?;
    if let Some(s) = seed {
        config.seeds = vec![s];
    }
    let runs = run_experiment(&config)?;
    write_report(out, &runs, &config)?;
    println!("seed  iters  final_acc  max_acc  plateau  hit_rate  clauses");
    for run in &runs {
        let s = summarize(run, &config);
        let hit = s
            .mean_hit_rate
            .map_or("-".to_string(), |h| format!("{h:.3}"));
        println!(
            "{:<5} {:<6} {:<10.3} {:<8.3} {:<8} {:<9} {:.2}",
            s.seed,
            s.iterations,
            s.final_accuracy,
            s.max_accuracy,
            s.plateau_iteration,
            hit,
            s.avg_clauses
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn gen(
    spec: &str,
    out: &Path,
    seed: Option<u64>,
    records: Option<usize>,
    noise: Option<f64>,
) -> Result<()> {
    let path = Path::new(spec);
    let mut g = if path.exists() {
        GeneratorSpec::from_toml(&read(path)?).with_context(|| format!("spec {spec}"))?
    } else {
        preset(spec).with_context(|| format!("{spec} is neither a file nor a preset"))?
    };
    if let Some(s) = seed {
        g.seed = s;
    }
    if let Some(r) = records {
        g.records = r;
    }
    if let Some(n) = noise {
        g.noise = n;
    }
    let synthetic = generate_synthetic(&g)?;
    synthetic.write_to(out)?;
    let a = &synthetic.audit;
    println!(
        "{} records in {} ({} scenes drawn, {} gold-rule violations after noise)",
        synthetic.dataset.len(),
        out.display(),
        a.attempts,
        a.violations
    );
    Ok(())
}

fn learn(
    data: &DataArgs,
    out: &Path,
    learn_config: Option<&Path>,
    noise_tolerant: bool,
) -> Result<()> {
    let dataset = data.load()?;
    let mut config = match learn_config {
        Some(p) => toml::from_str::<LearnConfig>(&read(p)?)
            .with_context(|| format!("learn config {}", p.display()))?,
        None => LearnConfig::default(),
    };
    config.noise_tolerant |= noise_tolerant;
    config.validate().map_err(anyhow::Error::msg)?;
    let labeled: Vec<_> = dataset
        .records()
        .iter()
        .filter(|r| r.label().is_some())
        .collect();
    if labeled.is_empty() {
        bail!("{} has no labeled records", data.data.display());
    }
    let rules = learn_ruleset(
        &labeled,
        dataset.labels(),
        &FeedbackConstraints::default(),
        dataset.vocabulary(),
        &config,
    )?;
    fs::write(out, print_ruleset(&rules)).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "learned {} rule(s) from {} record(s) into {}",
        rules.len(),
        labeled.len(),
        out.display()
    );
    Ok(())
}

fn label(data: &DataArgs, rules: &Path, out: Option<&Path>) -> Result<()> {
    let dataset = data.load()?;
    let rules = parse_ruleset(&read(rules)?, dataset.vocabulary())
        .with_context(|| format!("rules {}", rules.display()))?;
    if rules.is_empty() {
        bail!("the rule file defines no rules");
    }
    let compiled = CompiledRuleSet::new(&rules, dataset.vocabulary());
    let mut text = String::new();
    let (mut right, mut known) = (0usize, 0usize);
    for record in dataset.records() {
        let decision = compiled.assign(record);
        if let Some(gold) = record.label() {
            known += 1;
            right += usize::from(gold == decision.label);
        }
        text.push_str(&serde_json::to_string(&decision)?);
        text.push('\n');
    }
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if known > 0 {
        eprintln!(
            "accuracy on {known} labeled record(s): {:.4}",
            right as f64 / known as f64
        );
    }
    Ok(())
}

fn serve(addr: &str, state_dir: &Path, in_memory: bool) -> Result<()> {
    let store = if in_memory {
        SessionStore::in_memory()
    } else {
        let (store, failures) = SessionStore::open(state_dir)
            .with_context(|| format!("state dir {}", state_dir.display()))?;
        for f in failures {
            eprintln!(
                "warning: could not restore {}: {}",
                f.path.display(),
                f.message
            );
        }
        store
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(rapid_service::serve(Arc::new(store), addr))?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run { config, seed, out } => run(&config, seed, &out),
        Command::Gen {
            spec,
            out,
            seed,
            records,
            noise,
        } => gen(&spec, &out, seed, records, noise),
        Command::Learn {
            data,
            out,
            learn_config,
            noise_tolerant,
        } => learn(&data, &out, learn_config.as_deref(), noise_tolerant),
        Command::Label { data, rules, out } => label(&data, &rules, out.as_deref()),
        Command::Serve {
            addr,
            state_dir,
            in_memory,
        } => serve(&addr, &state_dir, in_memory),
    }
}
