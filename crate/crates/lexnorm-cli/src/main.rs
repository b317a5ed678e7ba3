//! Command-line entry point: corpus generation, the three training regimes,
//! batch labeling, and evaluation, glued into one reproducible pipeline.
//!
//! Configuration is layered: a named preset is the base, a flat JSON config
//! file overrides preset keys, `LEXNORM_*` environment variables override the
//! file, and command-line flags override everything. Exit codes classify
//! failures: 0 ok, 1 configuration, 2 data, 3 runtime.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use lexnorm::checkpoint::Checkpoint;
use lexnorm::data::{
    atomic_write, read_jsonl, read_jsonl_lossy, sha256_file, write_jsonl, LabeledRow,
    UnlabeledRow,
};
use lexnorm::error::{Error, Result};
use lexnorm::lexicon::Lexicon;
use lexnorm::metrics::{count_sentence, EvalCounts, MetricsReport};
use lexnorm::orchestrator::{
    self, build_corpus, build_rules, build_vocab, Datasets, PipelineConfig, Regime,
};
use lexnorm::student::StudentModel;
use lexnorm::text_prep::WordPair;
use lexnorm::vocab::Vocabulary;

#[derive(Parser)]
#[command(
    name = "lexnorm",
    version,
    about = "Weakly supervised lexical normalization of Vietnamese social media text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: labeled splits, unlabeled pool, and the
    /// sealed gold sidecar for the unlabeled pool.
    GenCorpus(GenCorpusArgs),
    /// Train one regime into a run directory (resumes if interrupted).
    Train(TrainArgs),
    /// Normalize a JSONL file of sentences with a trained checkpoint.
    Label(LabelArgs),
    /// Score predictions against gold rows.
    Evaluate(EvaluateArgs),
}

/// Config layering shared by gen-corpus and train.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Base preset: desk, bench, or paper.
    #[arg(long)]
    preset: Option<String>,
    /// Flat JSON config file overriding preset keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Diacritic-removal augmentation probability for the training split.
    #[arg(long)]
    p_diacritic: Option<f64>,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Output directory for the corpus files.
    #[arg(long)]
    out: PathBuf,
    /// Labeled pool size (sentences before splitting).
    #[arg(long)]
    n_labeled: Option<usize>,
    /// Unlabeled pool size.
    #[arg(long)]
    n_unlabeled: Option<usize>,
    /// Lexicon JSON to generate from (defaults to the built-in lexicon).
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Corpus directory produced by gen-corpus.
    #[arg(long)]
    data: PathBuf,
    /// Run directory (created if missing; resumed if it holds a partial run).
    #[arg(long)]
    out: PathBuf,
    /// student, self_training, or weak_supervision.
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    n_downsample: Option<usize>,
}

#[derive(Args)]
struct LabelArgs {
    /// Student checkpoint JSON from a run directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary JSON from the same run directory.
    #[arg(long)]
    vocab: PathBuf,
    /// Input JSONL; each row needs an `input` word array (or an `original`
    /// string to be whitespace-split).
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL with `output` (aligned elements) and `normalized` added.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions JSONL (rows with `input` and `output`, as written by
    /// label).
    #[arg(long)]
    pred: PathBuf,
    /// Gold JSONL (labeled rows; the sealed du_gold sidecar qualifies).
    #[arg(long)]
    gold: PathBuf,
    /// Optional path for the metrics report (always printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; flag misuse is a config error.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let result = match cli.command {
        Command::GenCorpus(args) => cmd_gen_corpus(args),
        Command::Train(args) => cmd_train(args),
        Command::Label(args) => cmd_label(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

/// All recognized flat config keys, in documentation order.
const FLAT_KEYS: &[&str] = &[
    "preset",
    "n_labeled",
    "n_unlabeled",
    "split_train",
    "split_dev",
    "split_test",
    "vocab_size",
    "p_diacritic",
    "dict_coverage",
    "dict_error_rate",
    "gen_min_words",
    "gen_max_words",
    "gen_p_phrase",
    "gen_p_punct_inline",
    "gen_p_punct_final",
    "gen_zipf_exponent",
    "corrupt_p_abbrev",
    "corrupt_p_teencode",
    "corrupt_p_repeat_suffix",
    "corrupt_p_typo",
    "corrupt_p_diacritic_char",
    "corrupt_target_nsw_fraction",
    "regime",
    "iterations",
    "n_downsample",
    "seed",
    "student_d_model",
    "student_n_layers",
    "student_d_ff",
    "student_max_seq_len",
    "student_max_n_mask",
    "student_lr_embeddings",
    "student_lr_encoder",
    "student_lr_heads",
    "student_epochs",
    "student_fine_tune_epochs",
    "student_soft_epochs",
    "student_batch_size",
    "ran_d_rule",
    "ran_hidden",
    "ran_unsup_epochs",
    "ran_sup_epochs",
    "ran_batch_size",
    "ran_lr_max",
    "ran_lr_end",
    "ran_warmup_frac",
    "ran_count_student_in_rule_set",
];

fn bad_value(key: &str, value: &serde_json::Value) -> Error {
    Error::Config(format!("config key {key:?} has unusable value {value}"))
}

fn as_usize(key: &str, v: &serde_json::Value) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| bad_value(key, v))
}

fn as_u64(key: &str, v: &serde_json::Value) -> Result<u64> {
    v.as_u64().ok_or_else(|| bad_value(key, v))
}

fn as_f64(key: &str, v: &serde_json::Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| bad_value(key, v))
}

fn as_bool(key: &str, v: &serde_json::Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad_value(key, v))
}

fn as_str<'v>(key: &str, v: &'v serde_json::Value) -> Result<&'v str> {
    v.as_str().ok_or_else(|| bad_value(key, v))
}

/// Apply one flat key to the config. `preset` is handled before this runs.
fn apply_flat(cfg: &mut PipelineConfig, key: &str, v: &serde_json::Value) -> Result<()> {
    match key {
        "preset" => {}
        "n_labeled" => cfg.n_labeled = as_usize(key, v)?,
        "n_unlabeled" => cfg.n_unlabeled = as_usize(key, v)?,
        "split_train" => cfg.split.0 = as_f64(key, v)?,
        "split_dev" => cfg.split.1 = as_f64(key, v)?,
        "split_test" => cfg.split.2 = as_f64(key, v)?,
        "vocab_size" => cfg.vocab_size = as_usize(key, v)?,
        "p_diacritic" => cfg.p_diacritic = as_f64(key, v)?,
        "dict_coverage" => cfg.dict_coverage = as_f64(key, v)?,
        "dict_error_rate" => cfg.dict_error_rate = as_f64(key, v)?,
        "gen_min_words" => cfg.generator.min_words = as_usize(key, v)?,
        "gen_max_words" => cfg.generator.max_words = as_usize(key, v)?,
        "gen_p_phrase" => cfg.generator.p_phrase = as_f64(key, v)?,
        "gen_p_punct_inline" => cfg.generator.p_punct_inline = as_f64(key, v)?,
        "gen_p_punct_final" => cfg.generator.p_punct_final = as_f64(key, v)?,
        "gen_zipf_exponent" => cfg.generator.zipf_exponent = as_f64(key, v)?,
        "corrupt_p_abbrev" => cfg.generator.corruption.p_abbrev = as_f64(key, v)?,
        "corrupt_p_teencode" => cfg.generator.corruption.p_teencode = as_f64(key, v)?,
        "corrupt_p_repeat_suffix" => {
            cfg.generator.corruption.p_repeat_suffix = as_f64(key, v)?;
        }
        "corrupt_p_typo" => cfg.generator.corruption.p_typo = as_f64(key, v)?,
        "corrupt_p_diacritic_char" => {
            cfg.generator.corruption.p_diacritic_char = as_f64(key, v)?;
        }
        "corrupt_target_nsw_fraction" => {
            cfg.generator.corruption.target_nsw_fraction = as_f64(key, v)?;
        }
        "regime" => cfg.run.regime = Regime::from_str(as_str(key, v)?)?,
        "iterations" => cfg.run.iterations = as_usize(key, v)?,
        "n_downsample" => cfg.run.n_downsample = as_usize(key, v)?,
        "seed" => cfg.run.seed = as_u64(key, v)?,
        "student_d_model" => cfg.run.student.d_model = as_usize(key, v)?,
        "student_n_layers" => cfg.run.student.n_layers = as_usize(key, v)?,
        "student_d_ff" => cfg.run.student.d_ff = as_usize(key, v)?,
        "student_max_seq_len" => cfg.run.student.max_seq_len = as_usize(key, v)?,
        "student_max_n_mask" => cfg.run.student.max_n_mask = as_usize(key, v)?,
        "student_lr_embeddings" => cfg.run.student.lr_embeddings = as_f64(key, v)?,
        "student_lr_encoder" => cfg.run.student.lr_encoder = as_f64(key, v)?,
        "student_lr_heads" => cfg.run.student.lr_heads = as_f64(key, v)?,
        "student_epochs" => cfg.run.student.epochs = as_usize(key, v)?,
        "student_fine_tune_epochs" => cfg.run.student.fine_tune_epochs = as_usize(key, v)?,
        "student_soft_epochs" => cfg.run.student.soft_epochs = as_usize(key, v)?,
        "student_batch_size" => cfg.run.student.batch_size = as_usize(key, v)?,
        "ran_d_rule" => cfg.run.ran.d_rule = as_usize(key, v)?,
        "ran_hidden" => cfg.run.ran.hidden = as_usize(key, v)?,
        "ran_unsup_epochs" => cfg.run.ran.unsup_epochs = as_usize(key, v)?,
        "ran_sup_epochs" => cfg.run.ran.sup_epochs = as_usize(key, v)?,
        "ran_batch_size" => cfg.run.ran.batch_size = as_usize(key, v)?,
        "ran_lr_max" => cfg.run.ran.lr_max = as_f64(key, v)?,
        "ran_lr_end" => cfg.run.ran.lr_end = as_f64(key, v)?,
        "ran_warmup_frac" => cfg.run.ran.warmup_frac = as_f64(key, v)?,
        "ran_count_student_in_rule_set" => {
            cfg.run.ran.count_student_in_rule_set = as_bool(key, v)?;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown config key {other:?}; known keys: {}",
                FLAT_KEYS.join(", ")
            )));
        }
    }
    Ok(())
}

/// Environment variable for a flat key: LEXNORM_<KEY uppercased>.
fn env_value(key: &str) -> Option<serde_json::Value> {
    let raw = std::env::var(format!("LEXNORM_{}", key.to_uppercase())).ok()?;
    // Numbers and booleans parse as JSON; anything else is a plain string.
    Some(
        serde_json::from_str(&raw)
            .unwrap_or(serde_json::Value::String(raw)),
    )
}

/// Layered resolution: preset < config file < environment < flags. Flags are
/// applied by the caller afterward.
fn resolve_config(common: &ConfigArgs) -> Result<PipelineConfig> {
    let file_map: Option<serde_json::Map<String, serde_json::Value>> = match &common.config {
        Some(path) => {
            let bytes = std::fs::read(path)?;
            Some(serde_json::from_slice(&bytes).map_err(|e| {
                Error::Config(format!("config file {}: {e}", path.display()))
            })?)
        }
        None => None,
    };
    let preset_name = common
        .preset
        .clone()
        .or_else(|| env_value("preset").and_then(|v| v.as_str().map(str::to_owned)))
        .or_else(|| {
            file_map
                .as_ref()
                .and_then(|m| m.get("preset"))
                .and_then(|v| v.as_str().map(str::to_owned))
        })
        .unwrap_or_else(|| "desk".to_owned());
    let mut cfg = PipelineConfig::preset(&preset_name)?;
    if let Some(map) = &file_map {
        for (key, value) in map {
            apply_flat(&mut cfg, key, value)?;
        }
    }
    for key in FLAT_KEYS {
        if *key == "preset" {
            continue;
        }
        if let Some(value) = env_value(key) {
            apply_flat(&mut cfg, key, &value)?;
        }
    }
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(p) = common.p_diacritic {
        cfg.p_diacritic = p;
    }
    Ok(cfg)
}

/// The aggregation network always reads the student's hidden states.
fn finalize_config(cfg: &mut PipelineConfig) -> Result<()> {
    cfg.run.ran.d_obs = cfg.run.student.d_model;
    cfg.validate()
}

fn cmd_gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(n) = args.n_labeled {
        cfg.n_labeled = n;
    }
    if let Some(n) = args.n_unlabeled {
        cfg.n_unlabeled = n;
    }
    finalize_config(&mut cfg)?;
    let lexicon = match &args.lexicon {
        Some(path) => Lexicon::load(path)?,
        None => Lexicon::builtin(),
    };
    let bundle = build_corpus(&cfg, &lexicon)?;

    let out = &args.out;
    std::fs::create_dir_all(out)?;
    let as_rows = |pairs: &[WordPair]| -> Vec<LabeledRow> {
        pairs.iter().map(LabeledRow::from_pair).collect()
    };
    write_jsonl(&out.join("dl_train.jsonl"), &as_rows(&bundle.train))?;
    write_jsonl(&out.join("dl_dev.jsonl"), &as_rows(&bundle.dev))?;
    write_jsonl(&out.join("dl_test.jsonl"), &as_rows(&bundle.test))?;
    let du: Vec<UnlabeledRow> = bundle
        .unlabeled_gold
        .iter()
        .enumerate()
        .map(|(i, p)| UnlabeledRow::synthetic(i as u64, &p.source_words))
        .collect();
    write_jsonl(&out.join("du.jsonl"), &du)?;
    // Gold targets of the unlabeled pool: sealed sidecar, read only by
    // evaluate.
    write_jsonl(&out.join("du_gold.jsonl"), &as_rows(&bundle.unlabeled_gold))?;
    lexicon.save(&out.join("lexicon.json"))?;

    let files = [
        "dl_train.jsonl",
        "dl_dev.jsonl",
        "dl_test.jsonl",
        "du.jsonl",
        "du_gold.jsonl",
        "lexicon.json",
    ];
    let mut hashes = serde_json::Map::new();
    for name in files {
        hashes.insert(
            name.to_owned(),
            serde_json::Value::String(sha256_file(&out.join(name))?),
        );
    }
    let manifest = serde_json::json!({
        "config": cfg,
        "rows": {
            "dl_train": bundle.train.len(),
            "dl_dev": bundle.dev.len(),
            "dl_test": bundle.test.len(),
            "du": du.len(),
        },
        "sha256": hashes,
    });
    atomic_write(
        &out.join("corpus_manifest.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    println!(
        "wrote corpus to {}: {} train / {} dev / {} test labeled rows, {} unlabeled",
        out.display(),
        bundle.train.len(),
        bundle.dev.len(),
        bundle.test.len(),
        du.len()
    );
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<WordPair>> {
    let rows: Vec<LabeledRow> = read_jsonl(path)?;
    rows.iter().map(LabeledRow::to_pair).collect()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(regime) = &args.regime {
        cfg.run.regime = Regime::from_str(regime)?;
    }
    if let Some(t) = args.iterations {
        cfg.run.iterations = t;
    }
    if let Some(n) = args.n_downsample {
        cfg.run.n_downsample = n;
    }
    finalize_config(&mut cfg)?;

    let data_dir = &args.data;
    let train = read_pairs(&data_dir.join("dl_train.jsonl"))?;
    let dev = read_pairs(&data_dir.join("dl_dev.jsonl"))?;
    let test = read_pairs(&data_dir.join("dl_test.jsonl"))?;
    let du: Vec<UnlabeledRow> = read_jsonl(&data_dir.join("du.jsonl"))?;
    let unlabeled: Vec<Vec<String>> = du.into_iter().map(|r| r.input).collect();
    let lexicon = Lexicon::load(&data_dir.join("lexicon.json"))?;

    let vocab = build_vocab(&train, &unlabeled, cfg.vocab_size)?;
    let rules = build_rules(&cfg, &lexicon)?;
    let datasets = Datasets {
        train,
        dev,
        test,
        unlabeled,
    };

    std::fs::create_dir_all(&args.out)?;
    vocab.save(&args.out.join("vocab.json"))?;
    let outcome = orchestrator::run(&cfg.run, &datasets, &vocab, Some(&rules), &args.out)?;

    // Enrich the run manifest with dataset hashes and the code version.
    let manifest_path = args.out.join("run_manifest.json");
    let mut manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
    let mut hashes = serde_json::Map::new();
    for name in ["dl_train.jsonl", "dl_dev.jsonl", "dl_test.jsonl", "du.jsonl"] {
        hashes.insert(
            name.to_owned(),
            serde_json::Value::String(sha256_file(&data_dir.join(name))?),
        );
    }
    if let Some(obj) = manifest.as_object_mut() {
        obj.insert("dataset_sha256".to_owned(), serde_json::Value::Object(hashes));
        obj.insert(
            "code_version".to_owned(),
            serde_json::Value::String(env!("CARGO_PKG_VERSION").to_owned()),
        );
        obj.insert(
            "metrics".to_owned(),
            serde_json::to_value(&outcome.history)?,
        );
    }
    atomic_write(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;

    println!("{}", serde_json::to_string_pretty(&outcome.report)?);
    Ok(())
}

fn cmd_label(args: LabelArgs) -> Result<()> {
    let vocab = Vocabulary::load(&args.vocab)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let student = StudentModel::from_checkpoint(&ckpt, &vocab)?;

    let (rows, bad) = read_jsonl_lossy::<serde_json::Value>(&args.input)?;
    for (line, message) in &bad {
        eprintln!("{}:{line}: skipped: {message}", args.input.display());
    }
    let mut out_rows: Vec<serde_json::Value> = Vec::with_capacity(rows.len());
    for (line, mut row) in rows {
        let words: Option<Vec<String>> = match (row.get("input"), row.get("original")) {
            (Some(serde_json::Value::Array(items)), _) => items
                .iter()
                .map(|v| v.as_str().map(str::to_owned))
                .collect(),
            (None, Some(serde_json::Value::String(s))) => {
                Some(s.split_whitespace().map(str::to_owned).collect())
            }
            _ => None,
        };
        let Some(words) = words else {
            eprintln!(
                "{}:{line}: skipped: no usable `input` word array or `original` string",
                args.input.display()
            );
            out_rows.push(row);
            continue;
        };
        let elements = student.normalize_sentence(&vocab, &words);
        if let Some(obj) = row.as_object_mut() {
            obj.insert(
                "normalized".to_owned(),
                serde_json::Value::String(elements.join(" ")),
            );
            obj.insert("output".to_owned(), serde_json::to_value(&elements)?);
        }
        out_rows.push(row);
    }
    write_jsonl(&args.out, &out_rows)?;
    println!(
        "labeled {} rows ({} skipped) -> {}",
        out_rows.len(),
        bad.len(),
        args.out.display()
    );
    Ok(())
}

fn string_array(v: &serde_json::Value) -> Option<Vec<String>> {
    v.as_array()?
        .iter()
        .map(|x| x.as_str().map(str::to_owned))
        .collect()
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pred: Vec<serde_json::Value> = read_jsonl(&args.pred)?;
    let gold: Vec<LabeledRow> = read_jsonl(&args.gold)?;
    if pred.len() != gold.len() {
        return Err(Error::RowMismatch {
            line: pred.len().min(gold.len()) + 1,
            reason: format!(
                "{} prediction rows vs {} gold rows",
                pred.len(),
                gold.len()
            ),
        });
    }
    let mut counts = EvalCounts::default();
    for (i, (p, g)) in pred.iter().zip(&gold).enumerate() {
        let line = i + 1;
        let predicted = p
            .get("output")
            .and_then(string_array)
            .ok_or_else(|| Error::RowMismatch {
                line,
                reason: "prediction row has no `output` word array".into(),
            })?;
        if let Some(input) = p.get("input").and_then(string_array) {
            if input != g.input {
                return Err(Error::RowMismatch {
                    line,
                    reason: "prediction and gold rows have different `input` words".into(),
                });
            }
        }
        counts.add(&count_sentence(&g.input, &g.output, &predicted)?);
    }
    let report = MetricsReport::from_counts(counts);
    let pretty = serde_json::to_string_pretty(&report)?;
    println!("{pretty}");
    if let Some(out) = &args.out {
        atomic_write(out, pretty.as_bytes())?;
    }
    Ok(())
}
