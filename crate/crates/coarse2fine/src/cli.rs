//! The `c2f` command line: dataset generation, training, evaluation,
//! single-question answering, encoding benchmarks, and dataset stats.
//!
//! Configuration precedence per invocation: built-in defaults, then
//! config file(s), then C2F_* environment variables, then flags. Usage
//! problems exit 2; runtime failures print one `error: ...` line and
//! exit 1.

use crate::bench::{benchmark_encoding, BenchConfig};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{self, BaselineKind};
use crate::gen::write_synthetic;
use crate::model::QaModel;
use crate::text::{
    self, prepare_dataset, prepare_example, read_jsonl, split_sentences, RawExample, Vocabulary,
};
use crate::train::{self, MetricsRow, RunSink, TrainConfig};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const USAGE: &str = "usage: c2f <command> [flags]

commands:
  gen-data    generate a synthetic QA dataset (train/dev/test JSONL)
  train       train a model (--method pipeline|reinforce|soft)
  evaluate    evaluate a checkpoint, optionally as a baseline
  answer      answer one example from flags or stdin JSONL
  benchmark   measure document-encoding throughput and speedups
  stats       dataset statistics (answer matches, lengths)

common flags: --config FILE (repeatable), --set key=value (repeatable)
run `c2f <command> --help` for the command's flags";

struct Parsed {
    values: BTreeMap<String, String>,
    switches: Vec<String>,
}

impl Parsed {
    fn value(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    fn required(&self, name: &str) -> Result<&str> {
        self.value(name)
            .ok_or_else(|| usage_error(format!("missing required flag --{name}")))
    }

    fn switch(&self, name: &str) -> bool {
        self.switches.iter().any(|s| s == name)
    }
}

fn usage_error(msg: impl Into<String>) -> Error {
    Error::Config(format!("usage: {}", msg.into()))
}

fn parse_flags(
    args: &[String],
    value_flags: &[&str],
    switch_flags: &[&str],
) -> Result<(Parsed, Vec<PathBuf>, Vec<(String, String)>)> {
    let mut values = BTreeMap::new();
    let mut switches = Vec::new();
    let mut configs = Vec::new();
    let mut sets = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let name = arg
            .strip_prefix("--")
            .ok_or_else(|| usage_error(format!("unexpected argument {arg:?}")))?;
        if name == "help" {
            return Err(usage_error("help requested"));
        }
        let take_value = |i: &mut usize| -> Result<String> {
            *i += 1;
            args.get(*i)
                .cloned()
                .ok_or_else(|| usage_error(format!("flag --{name} needs a value")))
        };
        if name == "config" {
            configs.push(PathBuf::from(take_value(&mut i)?));
        } else if name == "set" {
            let kv = take_value(&mut i)?;
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage_error(format!("--set expects key=value, got {kv:?}")))?;
            sets.push((k.trim().to_string(), v.trim().to_string()));
        } else if value_flags.contains(&name) {
            let v = take_value(&mut i)?;
            values.insert(name.to_string(), v);
        } else if switch_flags.contains(&name) {
            switches.push(name.to_string());
        } else {
            return Err(usage_error(format!("unknown flag --{name}")));
        }
        i += 1;
    }
    Ok((Parsed { values, switches }, configs, sets))
}

fn build_config(
    config_files: &[PathBuf],
    sets: &[(String, String)],
    flag_keys: &[(&str, Option<&str>)],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for file in config_files {
        cfg.merge_file(file)?;
    }
    cfg.merge_env(std::env::vars())?;
    for (k, v) in sets {
        cfg.set(k, v)?;
    }
    for (key, value) in flag_keys {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

/// Entry point for the `c2f` binary; returns the process exit code.
pub fn main(args: &[String]) -> i32 {
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string();
            if msg.starts_with("config error: usage:") || msg.starts_with("usage:") {
                eprintln!("error: {msg}");
                eprintln!("{USAGE}");
                2
            } else {
                eprintln!("error: {msg}");
                1
            }
        }
    }
}

pub fn run(args: &[String]) -> Result<()> {
    if args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{USAGE}");
        return Ok(());
    }
    let Some(command) = args.first() else {
        return Err(usage_error("no command given"));
    };
    let rest = &args[1..];
    match command.as_str() {
        "gen-data" => cmd_gen_data(rest),
        "train" => cmd_train(rest),
        "evaluate" => cmd_evaluate(rest),
        "answer" => cmd_answer(rest),
        "benchmark" => cmd_benchmark(rest),
        "stats" => cmd_stats(rest),
        other => Err(usage_error(format!("unknown command {other:?}"))),
    }
}

fn cmd_gen_data(args: &[String]) -> Result<()> {
    let (flags, files, sets) = parse_flags(
        args,
        &[
            "out", "n", "seed", "sentences-min", "sentences-max", "position",
            "distractor-rate", "missing-rate", "novel-entity-rate", "teaser-rate",
            "entities", "properties", "values",
        ],
        &["natural"],
    )?;
    let out = PathBuf::from(flags.required("out")?);
    let cfg = build_config(
        &files,
        &sets,
        &[
            ("gen.n", flags.value("n")),
            ("gen.seed", flags.value("seed")),
            ("gen.sentences_min", flags.value("sentences-min")),
            ("gen.sentences_max", flags.value("sentences-max")),
            ("gen.position", flags.value("position")),
            ("gen.distractor_rate", flags.value("distractor-rate")),
            ("gen.missing_rate", flags.value("missing-rate")),
            ("gen.novel_entity_rate", flags.value("novel-entity-rate")),
            ("gen.teaser_rate", flags.value("teaser-rate")),
            ("gen.entities", flags.value("entities")),
            ("gen.properties", flags.value("properties")),
            ("gen.values", flags.value("values")),
            ("gen.natural", flags.switch("natural").then_some("true")),
        ],
    )?;
    let gen_cfg = cfg.generator_config()?;
    std::fs::create_dir_all(&out)?;
    write_synthetic(&gen_cfg, &out)?;
    std::fs::write(out.join("dataset_config.json"), cfg.to_json())?;
    println!(
        "wrote {} examples (70/10/20 split) to {} [config {}]",
        gen_cfg.num_examples,
        out.display(),
        cfg.hash()
    );
    Ok(())
}

fn load_split(dir: &Path, name: &str) -> Result<Vec<RawExample>> {
    let path = dir.join(format!("{name}.jsonl"));
    if !path.exists() {
        return Err(Error::Config(format!("{} not found", path.display())));
    }
    read_jsonl(path)
}

struct DirSink {
    dir: PathBuf,
    rows: Vec<MetricsRow>,
    vocab_hash: String,
    config_hash: String,
}

impl DirSink {
    fn new(dir: &Path, cfg: &RunConfig, vocab: &Vocabulary) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), cfg.to_json())?;
        let vocab_json = json!({
            "placeholders": vocab.placeholder_count(),
            "tokens": vocab.tokens(),
        });
        std::fs::write(dir.join("vocab.json"), serde_json::to_string(&vocab_json)?)?;
        Ok(DirSink {
            dir: dir.to_path_buf(),
            rows: Vec::new(),
            vocab_hash: vocab.hash(),
            config_hash: cfg.hash(),
        })
    }
}

impl RunSink for DirSink {
    fn on_epoch(&mut self, epoch: usize, model: &QaModel, rows: &[MetricsRow]) -> Result<()> {
        checkpoint::save(
            self.dir.join(format!("ckpt-epoch-{epoch:03}.c2f")),
            &model.params,
            &self.vocab_hash,
            &self.config_hash,
        )?;
        self.rows.extend(rows.iter().cloned());
        std::fs::write(self.dir.join("metrics.csv"), train::metrics_to_csv(&self.rows))?;
        for row in rows {
            let sent = row
                .sent_acc
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "undefined".into());
            println!(
                "epoch {:3} {:5} answer_acc {:.4} sent_acc {} objective {:.4}",
                row.epoch, row.split, row.answer_acc, sent, row.objective
            );
        }
        Ok(())
    }
}

fn cmd_train(args: &[String]) -> Result<()> {
    let (flags, files, sets) = parse_flags(
        args,
        &[
            "data", "out", "method", "k", "decay", "seed", "epochs", "batch-size",
            "lr", "clip-norm", "selector", "summary", "early-stop-acc", "vocab-size",
            "placeholders",
        ],
        &["title-append"],
    )?;
    let data_dir = PathBuf::from(flags.required("data")?);
    let out_dir = PathBuf::from(flags.required("out")?);
    let mut cfg = build_config(
        &files,
        &sets,
        &[
            ("train.method", flags.value("method")),
            ("summary.k", flags.value("k")),
            ("train.decay", flags.value("decay")),
            ("train.seed", flags.value("seed")),
            ("train.epochs", flags.value("epochs")),
            ("train.batch_size", flags.value("batch-size")),
            ("train.lr", flags.value("lr")),
            ("train.clip_norm", flags.value("clip-norm")),
            ("selector.kind", flags.value("selector")),
            ("summary.mode", flags.value("summary")),
            ("train.early_stop_acc", flags.value("early-stop-acc")),
            ("vocab.size", flags.value("vocab-size")),
            ("vocab.placeholders", flags.value("placeholders")),
            (
                "data.title_append",
                flags.switch("title-append").then_some("true"),
            ),
        ],
    )?;
    // Soft training runs on blended summaries; keep the summary mode in
    // step with the method unless the flags said otherwise.
    if flags.value("summary").is_none() && cfg.get("train.method") == "soft" {
        cfg.set("summary.mode", "soft")?;
    }
    cfg.validate()?;

    let train_raw = load_split(&data_dir, "train")?;
    let dev_raw = load_split(&data_dir, "dev")?;
    let vocab = Vocabulary::build(
        &train_raw,
        cfg.usize_of("vocab.size")?,
        cfg.usize_of("vocab.placeholders")?,
    )?;
    let prep = cfg.prepare_config()?;
    let train_data = prepare_dataset(&train_raw, &vocab, &prep)?;
    let dev_data = prepare_dataset(&dev_raw, &vocab, &prep)?;

    let train_cfg: TrainConfig = cfg.train_config()?;
    let mut model = QaModel::new(cfg.model_config()?, vocab.size(), train_cfg.seed);
    let mut sink = DirSink::new(&out_dir, &cfg, &vocab)?;
    let outcome = train::run_training(
        &mut model,
        &vocab,
        &train_data,
        &dev_data,
        &train_cfg,
        Some(&mut sink),
    )?;
    println!(
        "done: {} epochs, metrics in {}",
        outcome.epochs_run,
        out_dir.join("metrics.csv").display()
    );
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let placeholders = value
        .get("placeholders")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Config(format!("{}: missing placeholders", path.display())))?;
    let tokens: Vec<String> = value
        .get("tokens")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Config(format!("{}: missing tokens", path.display())))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::Config("vocab tokens must be strings".into()))
        })
        .collect::<Result<_>>()?;
    Vocabulary::from_tokens(tokens, placeholders as usize)
}

/// Loads checkpoint + sibling vocab.json/config.json (unless overridden)
/// and verifies the vocabulary hash recorded at save time.
fn load_run(
    flags: &Parsed,
    files: &[PathBuf],
    sets: &[(String, String)],
) -> Result<(RunConfig, QaModel, Vocabulary)> {
    let ckpt_path = PathBuf::from(flags.required("checkpoint")?);
    let run_dir = ckpt_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut all_files: Vec<PathBuf> = Vec::new();
    let sibling_config = run_dir.join("config.json");
    if files.is_empty() && sibling_config.exists() {
        all_files.push(sibling_config);
    }
    all_files.extend(files.iter().cloned());
    let cfg = build_config(&all_files, sets, &[])?;

    let vocab_path = flags
        .value("vocab")
        .map(PathBuf::from)
        .unwrap_or_else(|| run_dir.join("vocab.json"));
    let vocab = load_vocab(&vocab_path)?;
    let (params, header) = checkpoint::load(&ckpt_path)?;
    if header.vocab_hash != vocab.hash() {
        return Err(Error::Checkpoint(format!(
            "vocabulary hash mismatch: checkpoint has {}, {} has {}",
            header.vocab_hash,
            vocab_path.display(),
            vocab.hash()
        )));
    }
    let model = QaModel {
        cfg: cfg.model_config()?,
        params,
    };
    Ok((cfg, model, vocab))
}

fn cmd_evaluate(args: &[String]) -> Result<()> {
    let (flags, files, sets) = parse_flags(
        args,
        &["checkpoint", "vocab", "data", "data-dir", "split", "baseline"],
        &[],
    )?;
    let (cfg, model, vocab) = load_run(&flags, &files, &sets)?;
    let data_path = match (flags.value("data"), flags.value("data-dir")) {
        (Some(f), _) => PathBuf::from(f),
        (None, Some(dir)) => {
            let split = flags.value("split").unwrap_or("dev");
            Path::new(dir).join(format!("{split}.jsonl"))
        }
        (None, None) => return Err(usage_error("need --data FILE or --data-dir DIR [--split NAME]")),
    };
    let raws = read_jsonl(&data_path)?;
    let data = prepare_dataset(&raws, &vocab, &cfg.prepare_config()?)?;
    let report = match flags.value("baseline").unwrap_or("none") {
        "none" => eval::evaluate(&model, &vocab, &data, cfg.get("train.method"))?,
        kind => {
            let kind: BaselineKind = kind.parse()?;
            eval::run_baseline(kind, &model, &vocab, &data)?
        }
    };
    let mut out = serde_json::to_value(&report)?;
    out["config_hash"] = serde_json::Value::String(cfg.hash());
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_answer(args: &[String]) -> Result<()> {
    let (flags, files, sets) = parse_flags(
        args,
        &["checkpoint", "vocab", "query", "document", "answer"],
        &[],
    )?;
    let (cfg, model, vocab) = load_run(&flags, &files, &sets)?;
    let raw = match flags.value("query") {
        Some(query) => {
            let doc = flags.required("document")?;
            RawExample::new(
                query,
                split_sentences(doc),
                flags.value("answer").unwrap_or("unknown"),
            )
        }
        None => {
            let mut line = String::new();
            std::io::stdin().read_line(&mut line)?;
            if line.trim().is_empty() {
                return Err(usage_error("no --query given and stdin is empty"));
            }
            text::parse_jsonl_line(&line, 1)?
        }
    };
    let ex = prepare_example(&raw, &vocab, &cfg.prepare_config()?)?;
    let pred = eval::predict(&model, &vocab, &ex)?;
    let out = match &pred.selection {
        Some(sel) => json!({
            "sentence_index": sel.predicted,
            "probability": sel.probability,
            "answer": pred.answer.surface,
        }),
        None => json!({
            "sentence_index": serde_json::Value::Null,
            "probability": serde_json::Value::Null,
            "answer": pred.answer.surface,
        }),
    };
    println!("{out}");
    Ok(())
}

fn parse_list(spec: &str, what: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{what} must be integers, got {s:?}")))
        })
        .collect()
}

fn cmd_benchmark(args: &[String]) -> Result<()> {
    let (flags, files, sets) = parse_flags(
        args,
        &["data", "batch-sizes", "k", "reps", "out", "checkpoint", "vocab", "seed"],
        &[],
    )?;
    let data_path = PathBuf::from(flags.required("data")?);
    let cfg = build_config(&files, &sets, &[("bench.reps", flags.value("reps"))])?;
    let raws = read_jsonl(&data_path)?;
    let (model, vocab) = if flags.value("checkpoint").is_some() {
        let (run_cfg, model, vocab) = load_run(&flags, &files, &sets)?;
        let _ = run_cfg;
        (model, vocab)
    } else {
        let vocab = Vocabulary::build(
            &raws,
            cfg.usize_of("vocab.size")?,
            cfg.usize_of("vocab.placeholders")?,
        )?;
        let seed = flags
            .value("seed")
            .map(|s| s.parse().map_err(|_| Error::Config("--seed must be an integer".into())))
            .transpose()?
            .unwrap_or(0);
        (
            QaModel::new(cfg.model_config()?, vocab.size(), seed),
            vocab,
        )
    };
    let data = prepare_dataset(&raws, &vocab, &cfg.prepare_config()?)?;
    let batch_sizes = parse_list(flags.value("batch-sizes").unwrap_or("1"), "--batch-sizes")?;
    let ks = parse_list(flags.value("k").unwrap_or("1,2"), "--k")?;
    let mut configs = vec![BenchConfig::Base];
    configs.extend(ks.into_iter().map(|k| BenchConfig::Hierarchical { k }));
    let report = benchmark_encoding(
        &model,
        &data,
        &batch_sizes,
        &configs,
        cfg.usize_of("bench.reps")?,
    )?;
    let csv = report.to_csv();
    match flags.value("out") {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!("wrote {path}");
            for row in &report.rows {
                println!(
                    "{} batch {}: {:.1} docs/s ({:.2}x base, {:.1} GRU steps/doc)",
                    row.config, row.batch_size, row.docs_per_sec, row.speedup_vs_base,
                    row.gru_steps_per_doc
                );
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_stats(args: &[String]) -> Result<()> {
    let (flags, files, sets) = parse_flags(args, &["data", "csv"], &["title-append"])?;
    let data_path = PathBuf::from(flags.required("data")?);
    let cfg = build_config(
        &files,
        &sets,
        &[(
            "data.title_append",
            flags.switch("title-append").then_some("true"),
        )],
    )?;
    let raws = read_jsonl(&data_path)?;
    let vocab = Vocabulary::build(
        &raws,
        cfg.usize_of("vocab.size")?,
        cfg.usize_of("vocab.placeholders")?,
    )?;
    let data = prepare_dataset(&raws, &vocab, &cfg.prepare_config()?)?;
    let stats = eval::dataset_stats(&data);
    let mut out = serde_json::to_value(&stats)?;
    out["config_hash"] = serde_json::Value::String(cfg.hash());
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(path) = flags.value("csv") {
        let csv = format!(
            "{}\n{}\n",
            crate::eval::StatsReport::CSV_HEADER,
            stats.csv_row()
        );
        std::fs::write(path, csv)?;
    }
    Ok(())
}
