use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use structparse::exec::set_thread_cap;
use structparse::labeler::{pixel_softmax, predict_labels, quota_size, read_ppm};
use structparse::nncore::Checkpoint;
use structparse::synthdata::SceneSpec;
use structparse::trainer::{
    evaluate, gradcheck, parse_image, write_synthetic, Dataset, Model, TrainConfig, Trainer, GRADCHECK_EPS,
};
use structparse::treeconv::{convert, ConstituencyTree, Lexicon, Vocabulary};
use structparse::{read_json, Error, Exec};

/// Gradients pass the check below this relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "structparse", version, about = "Structured scene parsing: pixel labeling, entity pooling and recursive relation trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with images, label maps, trees and a manifest.
    Synth {
        /// Scene spec JSON; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Number of scenes.
        #[arg(long)]
        count: usize,
        /// Index of the first scene.
        #[arg(long, default_value_t = 0)]
        first: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a constituency tree into a semantic tree.
    Convert {
        /// Constituency tree JSON.
        #[arg(long)]
        tree: PathBuf,
        /// Lexicon JSON with categories, synonyms, relations and relation words.
        #[arg(long)]
        lexicon: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model with EM and write its checkpoint.
    Train {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Training config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Final checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines loss log; defaults to the checkpoint path with a `.log.jsonl` suffix.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Parse one image into a relation tree (JSON on stdout).
    Parse {
        /// PPM image.
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated category ids, or `auto` to take every predicted
        /// category that covers at least the foreground quota.
        #[arg(long, default_value = "auto")]
        classes: String,
        /// Training config used for the checkpoint (activation, pi, rho_fg).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Vocabulary or manifest JSON used to name nodes in the DOT output.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Also write a Graphviz rendering.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Evaluate IoU and parse accuracies on a labeled manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training config used for the checkpoint (activation, pi, rho_fg).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference check of the full loss on a small synthetic scene.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = GRADCHECK_EPS)]
        eps: f64,
        /// Training config (activation, lambda, margin, widths).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Data(anyhow::Error),
    Numeric(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let numeric = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_numeric));
        if numeric {
            Failure::Numeric(e)
        } else {
            Failure::Data(e)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = std::env::var("STRUCTPARSE_THREADS").ok().and_then(|s| s.parse().ok()) {
        set_thread_cap(n);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numeric failure: {}", describe(&e));
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth { spec, count, first, out } => {
            let spec: SceneSpec = load_or_default(spec.as_deref())?;
            spec.validate()?;
            let manifest = write_synthetic(&spec, first, count, &out)?;
            print_json(&json!({ "manifest": manifest, "count": count }));
        }
        Command::Convert { tree, lexicon, out } => {
            let lex = Lexicon::load(&lexicon)?;
            let ct = ConstituencyTree::load(&tree)?;
            let text = convert(&ct, &lex)
                .and_then(|st| st.to_json_string(&lex.vocabulary()))
                .with_context(|| format!("converting {}", tree.display()))?;
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => {
                    let _ = std::io::stdout().lock().write_all(text.as_bytes());
                }
            }
        }
        Command::Train { manifest, config, out, log } => train(&manifest, config.as_deref(), &out, log)?,
        Command::Parse {
            image,
            checkpoint,
            classes,
            config,
            vocab,
            dot,
        } => {
            let config: TrainConfig = load_or_default(config.as_deref())?;
            let model = Model::from_checkpoint(&Checkpoint::load(&checkpoint)?, &config)?;
            let image = read_ppm(&image)?;
            let wanted = if classes.trim() == "auto" {
                auto_classes(&model, &image, &config)
            } else {
                parse_class_list(&classes, model.classes()).map_err(|e| Failure::Data(anyhow!(e)))?
            };
            let tree = parse_image(&model, &image, &wanted, &config)?;
            if let Some(path) = dot {
                let names = vocab.as_deref().map(load_vocabulary).transpose()?;
                std::fs::write(&path, tree.to_dot(names.as_ref())).with_context(|| format!("writing {}", path.display()))?;
            }
            print_json(&tree.to_json());
        }
        Command::Eval {
            manifest,
            checkpoint,
            config,
        } => {
            let config: TrainConfig = load_or_default(config.as_deref())?;
            let model = Model::from_checkpoint(&Checkpoint::load(&checkpoint)?, &config)?;
            let data = Dataset::load(&manifest)?;
            let report = evaluate(&model, &data.samples, &config, Exec::Parallel)?;
            eprintln!("{:<10} {:>8}", "class", "IoU");
            for (k, v) in &report.per_class_iou {
                let name = data.vocabulary.category_name(*k).unwrap_or("?");
                eprintln!("{name:<10} {v:>8.4}");
            }
            eprintln!("{:<10} {:>8.4}", "mean", report.mean_iou);
            eprintln!("structure accuracy {:.4}", report.structure_accuracy);
            eprintln!("relation accuracy  {:.4}", report.relation_accuracy);
            eprintln!("samples {} (parsed {})", report.samples, report.parsed_samples);
            print_json(&serde_json::to_value(&report).expect("report serializes"));
        }
        Command::Gradcheck { seed, eps, config } => {
            let config: TrainConfig = load_or_default(config.as_deref())?;
            config.validate()?;
            let r = gradcheck(seed, eps, &config, Exec::Parallel)?;
            print_json(&json!({
                "seed": seed,
                "eps": eps,
                "max_rel_error": r.max_rel_error,
                "worst_param": r.worst_param,
                "worst_index": r.worst_index,
                "analytic": r.analytic,
                "numeric": r.numeric,
                "checked": r.checked,
            }));
            if r.max_rel_error.is_nan() || r.max_rel_error >= GRADCHECK_TOLERANCE {
                return Err(Failure::Numeric(anyhow!(
                    "max relative error {:.3e} in {} exceeds {GRADCHECK_TOLERANCE:e}",
                    r.max_rel_error,
                    r.worst_param
                )));
            }
        }
    }
    Ok(())
}

fn train(manifest: &Path, config: Option<&Path>, out: &Path, log: Option<PathBuf>) -> Result<(), Failure> {
    let config: TrainConfig = load_or_default(config)?;
    let data = Dataset::load(manifest)?;
    let classes = data.vocabulary.categories.len();
    let relations = data.vocabulary.relation_count();
    let log_path = log.unwrap_or_else(|| sibling(out, "log.jsonl"));
    let file = File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let mut writer = BufWriter::new(file);
    let interval = config.checkpoint_interval;
    let mut trainer = Trainer::new(data.samples, classes, relations, config)?;
    let entries = trainer.run(|entry, model| {
        writeln!(writer, "{}", entry.to_json_line()).map_err(|e| Error::io(&log_path, e))?;
        let done = entry.iter + 1;
        if interval > 0 && done % interval == 0 {
            Checkpoint::capture(model).save(&sibling(out, &format!("iter{done:06}.json")))?;
        }
        Ok(())
    })?;
    writer.flush().with_context(|| format!("writing {}", log_path.display()))?;
    Checkpoint::capture(&trainer.model).save(out)?;
    let tail = &entries[entries.len().saturating_sub(100)..];
    let mean_total = tail.iter().map(|e| e.total).sum::<f64>() / tail.len().max(1) as f64;
    print_json(&json!({
        "checkpoint": out,
        "log": log_path,
        "iterations": entries.len(),
        "final_mean_total_loss": mean_total,
    }));
    Ok(())
}

/// `dir/stem.suffix` next to `path`, with `path`'s `.json` extension dropped.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        Some(p) => Ok(read_json(p)?),
        None => Ok(T::default()),
    }
}

/// Accepts a bare vocabulary or any document with a `vocabulary` field.
fn load_vocabulary(path: &Path) -> Result<Vocabulary, Failure> {
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("vocabulary").cloned().unwrap_or(value);
    serde_json::from_value(inner)
        .map_err(|e| Error::json(path, e))
        .map_err(Failure::from)
}

fn parse_class_list(list: &str, classes: usize) -> Result<BTreeSet<usize>, String> {
    let mut out = BTreeSet::new();
    for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: usize = part.parse().map_err(|_| format!("bad category id {part:?}"))?;
        if k == 0 || k >= classes {
            return Err(format!("category {k} outside 1..{classes}"));
        }
        out.insert(k);
    }
    if out.is_empty() {
        return Err("--classes lists no categories".into());
    }
    Ok(out)
}

/// Foreground categories whose argmax area reaches the foreground quota;
/// falls back to the single largest one.
fn auto_classes(model: &Model, image: &structparse::labeler::Image, config: &TrainConfig) -> BTreeSet<usize> {
    let (scores, _) = model.cnn.forward(image);
    let labels = predict_labels(&pixel_softmax(&scores));
    let min = quota_size(config.rho_fg, labels.pixel_count()).max(1);
    let counts: Vec<(usize, usize)> = (1..model.classes()).map(|k| (k, labels.count(k))).collect();
    let found: BTreeSet<usize> = counts.iter().filter(|c| c.1 >= min).map(|c| c.0).collect();
    if !found.is_empty() {
        return found;
    }
    let best = counts.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map_or(1, |c| c.0);
    BTreeSet::from([best])
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn print_json(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// The error chain joined with `: `, skipping causes that the previous
/// message already ends with.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}
