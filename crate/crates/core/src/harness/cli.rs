//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, missing inputs, malformed
//! overrides), 2 when a run fails. Artifacts go to the paths given on the command line;
//! progress goes to standard error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, CommandFactory, Parser, Subcommand};

use super::ablate::{ablate, ablation_csv, Trial};
use super::config::TrainConfig;
use super::synthetic::{generate_synthetic, write_synthetic_resources, SyntheticSpec};
use super::train::{
    encode, load_resources, teacher_file, train, train_supervised, write_run, Prepared,
    CONFIG_FILE, STUDENT_FILE, VOCAB_FILE,
};
use crate::data::{
    preprocess, read_corpus, stratified_split, write_corpus, Example, ResourceSet, SplitFractions,
    SplitManifest, SplitPools, Vocabulary,
};
use crate::ensemble::{ensemble_predict, filter_pseudo_labels, write_pseudo_labels, TeacherBank};
use crate::harness::metrics::compute_metrics;
use crate::model::load_checkpoint;

#[derive(Debug, Parser)]
#[command(
    name = "ensemble-ssl",
    version,
    about = "Semi-supervised text classification with a teacher ensemble"
)]
struct Cli {
    /// More progress output (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-language corpus as JSONL.
    Gen(GenArgs),
    /// Normalize corpus texts and write them back as JSONL.
    Preprocess(PreprocessArgs),
    /// Write a stratified labeled/unlabeled/test split manifest.
    Split(SplitArgs),
    /// Train a student (and teachers) and write the run artifacts.
    Train(TrainArgs),
    /// Score a checkpoint from a run directory.
    Eval(EvalArgs),
    /// Run the full model and its four ablations over paired seeds.
    Ablate(AblateArgs),
    /// Dump the teachers' admitted pseudo-labels for the unlabeled pool.
    PseudoDump(PseudoDumpArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    langs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Signal words per class and language.
    #[arg(long)]
    signal_vocab: Option<usize>,
    /// Signal words per example.
    #[arg(long)]
    signal_tokens: Option<usize>,
    #[arg(long)]
    filler_vocab: Option<usize>,
    #[arg(long)]
    filler_tokens: Option<usize>,
    /// Probability that a signal slot carries a word of the other class.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-language stopword lists (the filler words) under this directory.
    #[arg(long)]
    resources_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Resource directory: shared files at the top, per-language overrides in subdirectories.
    #[arg(long)]
    resources: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    labeled: f64,
    #[arg(long, default_value_t = 0.6)]
    unlabeled: f64,
    #[arg(long, default_value_t = 0.2)]
    test: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set lr=2`. Repeatable; applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Plain supervised student on the labeled pool, no teachers.
    #[arg(long)]
    supervised: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Score the test pool of this split; without it every example is scored.
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Checkpoint to score; defaults to the run's student.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write the scores here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    /// Paired run seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PseudoDumpArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    /// Confidence threshold; defaults to the run's `tau_min`.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Preprocess(_) => "preprocess",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::PseudoDump(_) => "pseudo-dump",
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parse `argv` (program name first) and run the subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::PseudoDump(a) => pseudo_dump(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(message)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let name = cli.command.name();
            let usage = match cmd.find_subcommand_mut(name) {
                Some(sub) => sub.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("error: {message}\n\n{usage}\n\nFor more information, try 'ensemble-ssl {name} --help'.");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn require_file(path: &Path, what: &str) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{what} `{}` does not exist",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> Outcome {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{what} `{}` is not a directory",
            path.display()
        )))
    }
}

fn build_config(args: &ConfigArgs, seed: Option<u64>) -> std::result::Result<TrainConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            TrainConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => TrainConfig::default(),
    };
    for assignment in &args.overrides {
        cfg.apply_override(assignment)
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_corpus_and_split(
    corpus: &Path,
    splits: &Path,
) -> std::result::Result<(Vec<Example>, SplitPools), Failure> {
    require_file(corpus, "corpus")?;
    let manifest = read_manifest(splits)?;
    let examples = read_corpus(corpus)?;
    let pools = manifest.to_pools(&examples)?;
    Ok((examples, pools))
}

fn read_manifest(path: &Path) -> std::result::Result<SplitManifest, Failure> {
    require_file(path, "split manifest")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing split manifest {}", path.display()))?;
    Ok(manifest)
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn gen(a: &GenArgs) -> Outcome {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n_examples: a.n.unwrap_or(d.n_examples),
        n_languages: a.langs.unwrap_or(d.n_languages),
        signal_vocab: a.signal_vocab.unwrap_or(d.signal_vocab),
        signal_tokens: a.signal_tokens.unwrap_or(d.signal_tokens),
        filler_vocab: a.filler_vocab.unwrap_or(d.filler_vocab),
        filler_tokens: a.filler_tokens.unwrap_or(d.filler_tokens),
        noise_rate: a.noise.unwrap_or(d.noise_rate),
        seed: a.seed.unwrap_or(d.seed),
    };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = generate_synthetic(&spec)?;
    ensure_parent(&a.out)?;
    write_corpus(&a.out, &corpus)?;
    if let Some(dir) = &a.resources_out {
        write_synthetic_resources(dir, &spec)?;
    }
    log::info!("wrote {} examples to {}", corpus.len(), a.out.display());
    Ok(())
}

fn preprocess_cmd(a: &PreprocessArgs) -> Outcome {
    require_file(&a.corpus, "corpus")?;
    let resources = match &a.resources {
        Some(dir) => {
            require_dir(dir, "resource directory")?;
            ResourceSet::load_dir(dir)?
        }
        None => ResourceSet::default(),
    };
    let corpus: Vec<Example> = read_corpus(&a.corpus)?
        .into_iter()
        .map(|mut ex| {
            ex.text = preprocess(&ex.text, resources.for_lang(&ex.lang));
            ex
        })
        .collect();
    ensure_parent(&a.out)?;
    write_corpus(&a.out, &corpus)?;
    log::info!(
        "normalized {} examples into {}",
        corpus.len(),
        a.out.display()
    );
    Ok(())
}

fn split(a: &SplitArgs) -> Outcome {
    require_file(&a.corpus, "corpus")?;
    let fractions = SplitFractions::new(a.labeled, a.unlabeled, a.test)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = read_corpus(&a.corpus)?;
    let pools = stratified_split(&corpus, fractions, a.seed)?;
    let manifest = SplitManifest::from_pools(&pools, &corpus, a.seed);
    let json = serde_json::to_string_pretty(&manifest).context("serializing split manifest")?;
    write_file(&a.out, json + "\n")?;
    log::info!(
        "split {} examples: {} labeled, {} unlabeled, {} test",
        corpus.len(),
        pools.labeled.len(),
        pools.unlabeled.len(),
        pools.test.len()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Outcome {
    let cfg = build_config(&a.config, a.seed)?;
    let (corpus, pools) = load_corpus_and_split(&a.corpus, &a.splits)?;
    let data = Prepared::new(&cfg, corpus, pools)?;
    log::info!(
        "training on {} labeled / {} unlabeled examples, vocabulary {}",
        data.pools.labeled.len(),
        data.pools.unlabeled.len(),
        data.vocab.len()
    );
    let outcome = if a.supervised {
        train_supervised(&cfg, &data)?
    } else {
        train(&cfg, &data)?
    };
    write_run(&a.out, &cfg, &data, &outcome)?;
    if let Some(s) = outcome.final_test() {
        log::info!(
            "final test: acc {:.4} p {:.4} r {:.4} f1 {:.4}",
            s.accuracy,
            s.precision,
            s.recall,
            s.f1
        );
    }
    Ok(())
}

/// Config, vocabulary and encoded corpus for a finished run.
fn reload_run(
    run: &Path,
    corpus: &Path,
) -> std::result::Result<(TrainConfig, Vec<Example>, Vec<crate::data::TokenSequence>), Failure> {
    require_dir(run, "run directory")?;
    require_file(corpus, "corpus")?;
    let cfg = TrainConfig::load(&run.join(CONFIG_FILE))?;
    let vocab = Vocabulary::load(&run.join(VOCAB_FILE))?;
    let examples = read_corpus(corpus)?;
    let inputs = encode(&examples, &load_resources(&cfg)?, &vocab, cfg.max_len);
    Ok((cfg, examples, inputs))
}

fn eval(a: &EvalArgs) -> Outcome {
    let (_, examples, inputs) = reload_run(&a.run, &a.corpus)?;
    let ckpt_path = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| a.run.join(STUDENT_FILE));
    require_file(&ckpt_path, "checkpoint")?;
    let bytes = fs::read(&ckpt_path).with_context(|| format!("reading {}", ckpt_path.display()))?;
    let model = load_checkpoint(&bytes)?;
    let indices: Vec<usize> = match &a.splits {
        Some(splits) => read_manifest(splits)?.to_pools(&examples)?.test,
        None => (0..examples.len()).collect(),
    };
    let mut predictions = Vec::with_capacity(indices.len());
    let mut truths = Vec::with_capacity(indices.len());
    for &i in &indices {
        let Some(label) = examples[i].label else {
            return Err(Failure::Runtime(anyhow::anyhow!(
                "example `{}` has no label to score against",
                examples[i].id
            )));
        };
        predictions.push(model.predict(&inputs[i])?.1.argmax());
        truths.push(label);
    }
    let s = compute_metrics(&predictions, &truths)?;
    let report = format!(
        "n,acc,precision,recall,f1\n{},{},{},{},{}\n",
        indices.len(),
        s.accuracy,
        s.precision,
        s.recall,
        s.f1
    );
    match &a.out {
        Some(path) => write_file(path, report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn ablate_cmd(a: &AblateArgs) -> Outcome {
    let base = build_config(&a.config, None)?;
    if a.seeds.is_empty() {
        return Err(Failure::Usage("--seeds needs at least one seed".into()));
    }
    let (corpus, pools) = load_corpus_and_split(&a.corpus, &a.splits)?;
    let mut trials = Vec::with_capacity(a.seeds.len());
    for &seed in &a.seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        trials.push(Trial {
            seed,
            data: Prepared::new(&cfg, corpus.clone(), pools.clone())?,
        });
    }
    let rows = ablate(&base, &trials)?;
    write_file(&a.out, ablation_csv(&rows))?;
    log::info!("wrote {} ablation rows to {}", rows.len(), a.out.display());
    Ok(())
}

fn pseudo_dump(a: &PseudoDumpArgs) -> Outcome {
    let (cfg, examples, inputs) = reload_run(&a.run, &a.corpus)?;
    let pools = read_manifest(&a.splits)?.to_pools(&examples)?;

    let mut teachers = Vec::new();
    loop {
        let path = a.run.join(teacher_file(teachers.len()));
        if !path.is_file() {
            break;
        }
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        teachers.push(load_checkpoint(&bytes)?);
    }
    if teachers.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "no teacher checkpoints in {} (was it a supervised run?)",
            a.run.display()
        )));
    }
    let bank = TeacherBank::new(teachers, cfg.ema_decay)?;
    let tau = a.tau.unwrap_or(cfg.schedule.tau_min);
    if !(0.0..=1.0).contains(&tau) {
        return Err(Failure::Usage(format!("--tau {tau} outside [0, 1]")));
    }
    let verdicts = pools
        .unlabeled
        .iter()
        .filter(|&&i| !inputs[i].is_empty())
        .map(|&i| ensemble_predict(&bank, i, &examples[i].id, &inputs[i]))
        .collect::<crate::Result<Vec<_>>>()?;
    let labels = filter_pseudo_labels(&verdicts, tau, cfg.max_uncertainty, cfg.epochs);
    ensure_parent(&a.out)?;
    write_pseudo_labels(&a.out, &labels)?;
    log::info!(
        "{} of {} unlabeled examples pass tau {tau}",
        labels.len(),
        verdicts.len()
    );
    Ok(())
}
