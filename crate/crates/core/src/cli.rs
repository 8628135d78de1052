//! The `slda` command line.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 bad arguments,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;
use crate::corpus::load_corpus;
use crate::embed::EmbedConfig;
use crate::error::{Error, Result};
use crate::eval::{auc, bow_logreg_train, error_rate, predict_corpus, BowConfig, MetricsReport};
use crate::export::export_topics;
use crate::model::{PenaltyWeights, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::objective::Embedder;
use crate::snapshot::{load_snapshot, write_snapshot};
use crate::toybars::{generate, write_dataset, ToyBarsConfig};
use crate::train::{train, Regime, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "slda", version, about = "Penalized supervised LDA toolkit")]
struct Cli {
    /// Worker threads; 1 makes every output byte-reproducible.
    #[arg(long, global = true, env = "SLDA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a toy-bars dataset: train.txt, test.txt, vocab.txt and truth/.
    Generate(GenerateArgs),
    /// Train a model and write model.txt, trace.tsv and run.txt.
    Train(TrainArgs),
    /// Score a labeled corpus with a trained model.
    Eval(EvalArgs),
    /// Bag-of-words logistic regression baseline.
    Baseline(BaselineArgs),
    /// Write topic images and phi.csv for a trained model.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    tokens: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    doc_alpha: Option<f64>,
    /// Draw labels from the logistic model instead of thresholding it.
    #[arg(long)]
    label_noise: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    wx: Option<f64>,
    #[arg(long)]
    wy: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learn_rate: Option<f64>,
    #[arg(long)]
    pi_step: Option<f64>,
    #[arg(long)]
    pi_steps: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Unrolled embedding iterations during end-to-end training.
    #[arg(long)]
    unroll: Option<usize>,
    /// Exponentiated-gradient step of the embedding.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    recog_hidden: Option<usize>,
    #[arg(long)]
    recog_refresh: Option<usize>,
    #[arg(long)]
    recog_sample: Option<usize>,
    #[arg(long)]
    recog_epochs: Option<usize>,
    #[arg(long)]
    recog_step: Option<f64>,
    /// Drop the Dirichlet prior on the topics from the objective.
    #[arg(long)]
    no_phi_prior: bool,
    /// Also write topic images at this grid side into OUT/topics.
    #[arg(long)]
    export_grid: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Directory holding model.txt (and optionally run.txt).
    #[arg(long)]
    model: PathBuf,
    /// ideal or approx; defaults to approx when the model has a recognition network.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learn_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use ln(1 + count) features.
    #[arg(long)]
    log1p: bool,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    grid: Option<usize>,
}

/// Process exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Parse { .. } | Error::Format(_) | Error::Dimension(_) => EXIT_IO,
        Error::InvalidInput(_) => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads;
    if threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        match b.build() {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: cannot start worker threads: {e}");
                return EXIT_IO;
            }
        }
    };
    let reproducible = threads == Some(1);
    let result = pool.install(|| match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a, reproducible),
        Command::Eval(a) => cmd_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Export(a) => cmd_export(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let d = ToyBarsConfig::default();
    let cfg = ToyBarsConfig {
        grid_side: a.grid.unwrap_or(d.grid_side),
        n_docs: a.n_docs.unwrap_or(d.n_docs),
        tokens_per_doc: a.tokens.unwrap_or(d.tokens_per_doc),
        doc_alpha: a.doc_alpha.unwrap_or(d.doc_alpha),
        label_noise: a.label_noise,
        seed: a.seed,
        ..d
    };
    cfg.validate()?;
    let data = generate(&cfg)?;
    write_dataset(&a.out, &data, &cfg)
}

/// Resolves one setting: flag, then config file, then default.
fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.get_parsed(key)?.unwrap_or(default)),
    }
}

const TRAIN_KEYS: &[&str] = &[
    "K",
    "regime",
    "wx",
    "wy",
    "sweeps",
    "restarts",
    "seed",
    "learn_rate",
    "pi_step",
    "pi_steps",
    "init_scale",
    "alpha",
    "beta",
    "unroll",
    "xi",
    "batch_size",
    "recog_hidden",
    "recog_refresh",
    "recog_sample",
    "recog_epochs",
    "recog_step",
    "phi_prior",
];

fn train_config(a: &TrainArgs, file: &ConfigFile) -> Result<TrainConfig> {
    file.check_keys(TRAIN_KEYS)?;
    let regime: Regime = pick(a.regime.clone(), file, "regime", "instantiated".to_string())?.parse()?;
    let k = pick(a.k, file, "K", 6)?;
    let wx = pick(a.wx, file, "wx", 1.0)?;
    let wy = pick(a.wy, file, "wy", 1.0)?;
    let weights = PenaltyWeights::for_training(wx, wy)?;
    let mut cfg = TrainConfig::new(regime, k, weights);
    cfg.sweeps = pick(a.sweeps, file, "sweeps", cfg.sweeps)?;
    cfg.restarts = pick(a.restarts, file, "restarts", cfg.restarts)?;
    cfg.seed = pick(a.seed, file, "seed", cfg.seed)?;
    cfg.learn_rate = pick(a.learn_rate, file, "learn_rate", cfg.learn_rate)?;
    cfg.pi_step = pick(a.pi_step, file, "pi_step", cfg.pi_step)?;
    cfg.pi_steps_per_sweep = pick(a.pi_steps, file, "pi_steps", cfg.pi_steps_per_sweep)?;
    cfg.init_scale = pick(a.init_scale, file, "init_scale", cfg.init_scale)?;
    cfg.alpha = pick(a.alpha, file, "alpha", DEFAULT_ALPHA)?;
    cfg.beta = pick(a.beta, file, "beta", DEFAULT_BETA)?;
    let unroll = pick(a.unroll, file, "unroll", cfg.embed_cfg.max_iters)?;
    let xi = pick(a.xi, file, "xi", cfg.embed_cfg.step_size)?;
    cfg.embed_cfg = cfg.embed_cfg.with_max_iters(unroll).with_step_size(xi);
    cfg.eval_embed_cfg = cfg.eval_embed_cfg.with_step_size(xi);
    cfg.batch_size = match a.batch_size {
        Some(b) => Some(b),
        None => file.get_parsed("batch_size")?,
    };
    cfg.recog_hidden = pick(a.recog_hidden, file, "recog_hidden", cfg.recog_hidden)?;
    cfg.recog_refresh = pick(a.recog_refresh, file, "recog_refresh", cfg.recog_refresh)?;
    cfg.recog_sample = pick(a.recog_sample, file, "recog_sample", cfg.recog_sample)?;
    cfg.recog_epochs = pick(a.recog_epochs, file, "recog_epochs", cfg.recog_epochs)?;
    cfg.recog_step = pick(a.recog_step, file, "recog_step", cfg.recog_step)?;
    cfg.objective.phi_prior = if a.no_phi_prior {
        false
    } else {
        pick(None, file, "phi_prior", true)?
    };
    if cfg.batch_size == Some(0) {
        return Err(Error::invalid("batch size must be positive"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs, reproducible: bool) -> Result<()> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut cfg = train_config(&a, &file)?;
    cfg.record_timing = !reproducible;
    if cfg.alpha < 1.0 {
        eprintln!(
            "warning: alpha = {} < 1; the converge-mode embedding objective is not concave",
            cfg.alpha
        );
    }
    let corpus = load_corpus(&a.corpus)?;
    let out = train(&corpus, &cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_snapshot(a.out.join("model.txt"), &out.params, out.recog.as_ref())?;
    write(&a.out.join("trace.tsv"), &out.trace.to_tsv())?;
    let errors: Vec<String> = out
        .trace
        .restart_errors
        .iter()
        .map(|e| format!("{e:.6}"))
        .collect();
    let run = format!(
        "regime={}\nwx={}\nwy={}\nK={}\nsweeps={}\nseed={}\nselected_restart={}\nrestart_errors={}\n",
        cfg.regime,
        cfg.weights.w_x,
        cfg.weights.w_y,
        cfg.num_topics,
        cfg.sweeps,
        cfg.seed,
        out.trace.selected_restart,
        errors.join(",")
    );
    write(&a.out.join("run.txt"), &run)?;
    if let Some(side) = a.export_grid {
        export_topics(&out.params.phi()?, Some(side), &a.out.join("topics"))?;
    }
    Ok(())
}

fn task_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".into())
}

fn write_report(report: &MetricsReport, kv: &Path, json: Option<&Path>) -> Result<()> {
    write(kv, &report.to_key_value())?;
    if let Some(j) = json {
        write(j, &report.to_json())?;
    }
    Ok(())
}

fn auc_or_warn(preds: &crate::eval::PredictionSet) -> Option<f64> {
    let pos = preds.positives();
    if pos == 0 || pos == preds.len() {
        eprintln!("warning: test labels are all one class; AUC omitted");
        None
    } else {
        auc(preds).ok()
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let snap = load_snapshot(a.model.join("model.txt"))?;
    let run_path = a.model.join("run.txt");
    let run = if run_path.exists() {
        ConfigFile::load(&run_path)?
    } else {
        ConfigFile::default()
    };
    let corpus = load_corpus(&a.corpus)?;
    if !corpus.is_fully_labeled() {
        return Err(Error::invalid("evaluation corpus has unlabeled documents"));
    }
    if corpus.vocab_size() != snap.params.vocab_size() {
        return Err(Error::dim(format!(
            "corpus vocabulary has {} terms, model has {}",
            corpus.vocab_size(),
            snap.params.vocab_size()
        )));
    }
    let choice = match a.embedder.as_deref() {
        None if snap.recog.is_some() => "approx",
        None => "ideal",
        Some(s @ ("ideal" | "approx")) => s,
        Some(other) => return Err(Error::invalid(format!("unknown embedder {other:?}"))),
    };
    let embedder = match (choice, snap.recog.as_ref()) {
        ("approx", Some(params)) => Embedder::Approx {
            params,
            phi_path: false,
        },
        ("approx", None) => {
            return Err(Error::invalid("model has no recognition network for --embedder approx"))
        }
        _ => Embedder::Ideal(EmbedConfig::converge()),
    };
    let preds = predict_corpus(&corpus, &snap.params, &embedder)?;
    let report = MetricsReport {
        task: task_name(&a.corpus),
        regime: run.get("regime").unwrap_or("unknown").to_string(),
        w_x: run.get_parsed("wx")?,
        w_y: run.get_parsed("wy")?,
        k: Some(snap.params.num_topics()),
        auc: auc_or_warn(&preds),
        error_rate: error_rate(&preds, 0.5),
        n_test: preds.len(),
    };
    write_report(&report, &a.report, a.json.as_deref())
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let train_c = load_corpus(&a.train)?;
    let test_c = load_corpus(&a.test)?;
    if !train_c.is_fully_labeled() || !test_c.is_fully_labeled() {
        return Err(Error::invalid("baseline needs fully labeled corpora"));
    }
    if train_c.vocab_size() != test_c.vocab_size() {
        return Err(Error::dim("train and test vocabularies differ in size"));
    }
    let cfg = BowConfig {
        l2: a.l2,
        epochs: a.epochs,
        learn_rate: a.learn_rate,
        batch_size: None,
        seed: a.seed,
        log1p: a.log1p,
    };
    let model = bow_logreg_train(&train_c, &cfg)?;
    let preds = model.predict_corpus(&test_c)?;
    let report = MetricsReport {
        task: task_name(&a.test),
        regime: "bow".into(),
        w_x: None,
        w_y: None,
        k: None,
        auc: auc_or_warn(&preds),
        error_rate: error_rate(&preds, 0.5),
        n_test: preds.len(),
    };
    write_report(&report, &a.report, a.json.as_deref())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let snap = load_snapshot(a.model.join("model.txt"))?;
    export_topics(&snap.params.phi()?, a.grid, &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_train(extra: &[&str]) -> TrainArgs {
        let mut args = vec!["slda", "train", "--corpus", "c.txt", "--out", "o"];
        args.extend_from_slice(extra);
        match Cli::try_parse_from(args).unwrap().command {
            Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_config_over_defaults() {
        let file = ConfigFile::parse("sweeps=7\nlearn_rate=0.5\nregime=ideal\n").unwrap();
        let cfg = train_config(&parse_train(&["--sweeps", "9"]), &file).unwrap();
        assert_eq!(cfg.sweeps, 9);
        assert_eq!(cfg.learn_rate, 0.5);
        assert_eq!(cfg.regime, Regime::Ideal);
        assert_eq!(cfg.restarts, 1);
    }

    #[test]
    fn degenerate_weights_are_usage_errors() {
        let err = train_config(&parse_train(&["--wx", "0", "--wy", "0"]), &ConfigFile::default())
            .unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
        let err = train_config(
            &parse_train(&["--regime", "instantiated", "--wx", "0"]),
            &ConfigFile::default(),
        )
        .unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn unknown_config_key_rejected() {
        let file = ConfigFile::parse("sweep=7\n").unwrap();
        assert!(train_config(&parse_train(&[]), &file).is_err());
    }

    #[test]
    fn no_phi_prior_flag() {
        let cfg = train_config(&parse_train(&["--no-phi-prior"]), &ConfigFile::default()).unwrap();
        assert!(!cfg.objective.phi_prior);
    }

    #[test]
    fn missing_required_flag_is_usage_error() {
        assert_eq!(run(["slda", "generate"]), EXIT_USAGE);
        assert_eq!(run(["slda", "bogus"]), EXIT_USAGE);
    }
}
