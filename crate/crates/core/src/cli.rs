//! Command-line front end: `preprocess`, `train`, `evaluate`, `predict`,
//! `ablate` and `synth`. Each subcommand writes everything under its
//! output directory and produces identical files when rerun on identical
//! inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::synth::{generate, SynthConfig};
use crate::corpus::{
    compute_cooccurrence, load_corpus, sample_low_resource, write_corpus, write_pair_table, Corpus, DependencyGraph,
};
use crate::error::{Error, Result};
use crate::evalkit::{aggregate, score, MeanStd, MetricsReport};
use crate::matcher::{read_predictions, to_predicted_labels, write_clusters, write_predictions};
use crate::trainer::{
    ablation_grid, clusters_from_predictions, derive_seed, evaluate_model, load_checkpoint, train, ConfigBuilder,
    ModelConfig,
};

#[derive(Debug, Parser)]
#[command(name = "protomatch", version, about = "Joint event relation extraction with prototype matching")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the pair table and the label dependency matrices of a corpus.
    Preprocess(PreprocessArgs),
    /// Train one model per seed and keep the best checkpoint of each.
    Train(TrainArgs),
    /// Score checkpoints or prediction files; aggregates over runs.
    Evaluate(EvaluateArgs),
    /// Write pair predictions and coreference clusters for a corpus.
    Predict(PredictArgs),
    /// Train and evaluate a named grid of variants.
    Ablate(AblateArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Configuration flags shared by `train` and `ablate`.
#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file of config keys; `default` means built-in defaults.
    #[arg(long)]
    pub config: Option<String>,
    /// `key=value` override, repeatable. Keys are the config field names.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Run seed, repeatable. Defaults to the configured seed.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Train on a seeded document sample of this size (e.g. 0.005).
    #[arg(long)]
    pub fraction: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory, or a `train` output directory holding
    /// `seed-*` checkpoints. Repeatable.
    #[arg(long, conflicts_with = "predictions")]
    pub checkpoint: Vec<PathBuf>,
    /// Prediction file written by `predict`. Repeatable.
    #[arg(long)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// table4, submodule or arch.
    #[arg(long)]
    pub grid: String,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 15)]
    pub documents: usize,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Written to `manifest.json` before a run starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ModelConfig,
    pub revision: String,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub documents: usize,
    pub pairs: usize,
    pub files: Vec<String>,
}

/// One scored run in an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub source: String,
    pub seed: Option<u64>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub metrics: BTreeMap<String, MeanStd>,
}

/// Source revision of the working tree, `unknown` outside a git checkout.
pub fn source_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Layer defaults, the config file, `PROTOMATCH_*` variables and `--set`
/// overrides.
pub fn resolve_config<I: IntoIterator<Item = (String, String)>>(args: &ConfigArgs, env: I) -> Result<ModelConfig> {
    let mut b = ConfigBuilder::new();
    if let Some(path) = args.config.as_deref().filter(|p| *p != "default") {
        b = b.file(Path::new(path));
    }
    b.env(env).overrides(&args.sets).build()
}

fn seeds_for(args: &ConfigArgs, config: &ModelConfig) -> Vec<u64> {
    if args.seeds.is_empty() {
        vec![config.seed]
    } else {
        args.seeds.clone()
    }
}

fn load_train(path: &Path, fraction: Option<f64>, seed: u64) -> Result<Corpus> {
    let corpus = load_corpus(path)?;
    match fraction {
        Some(f) => sample_low_resource(&corpus, f, derive_seed(seed, "fraction")),
        None => Ok(corpus),
    }
}

/// Pair table, raw and normalised matrices and a rendered matrix.
pub fn cmd_preprocess(corpus: &Path, out: &Path) -> Result<PreprocessSummary> {
    let corpus = load_corpus(corpus)?;
    create_dir(out)?;
    let pairs = write_pair_table(&corpus, out.join("pairs.jsonl"))?;
    let g = compute_cooccurrence(&corpus)?;
    write_text(&out.join("a_raw.tsv"), &DependencyGraph::to_tsv(&g.raw))?;
    write_text(&out.join("a_norm.tsv"), &DependencyGraph::to_tsv(&g.norm))?;
    write_text(&out.join("matrix.txt"), &g.render(&g.raw))?;
    write_json(&out.join("graph.json"), &g)?;
    let files = ["pairs.jsonl", "a_raw.tsv", "a_norm.tsv", "matrix.txt", "graph.json"].map(String::from).to_vec();
    Ok(PreprocessSummary { documents: corpus.len(), pairs, files })
}

/// Train one model per seed into `out/seed-<n>/`.
pub fn cmd_train(args: &TrainArgs, env: impl IntoIterator<Item = (String, String)>) -> Result<Vec<RunReport>> {
    let config = resolve_config(&args.config, env)?;
    let seeds = seeds_for(&args.config, &config);
    create_dir(&args.out)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("train".to_string(), args.train.display().to_string());
    if let Some(v) = &args.valid {
        inputs.insert("valid".into(), v.display().to_string());
    }
    if let Some(f) = args.fraction {
        inputs.insert("fraction".into(), f.to_string());
    }
    let manifest = RunManifest {
        command: "train".into(),
        config: config.clone(),
        revision: source_revision(),
        seeds: seeds.clone(),
        out_dir: args.out.clone(),
        inputs,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    let valid = args.valid.as_deref().map(load_corpus).transpose()?;
    let mut reports = Vec::new();
    for &seed in &seeds {
        let cfg = ModelConfig { seed, ..config.clone() };
        let corpus = load_train(&args.train, args.fraction, seed)?;
        let dir = args.out.join(format!("seed-{seed}"));
        log::info!("seed {seed}: training on {} documents", corpus.len());
        if args.fraction.is_some() {
            let ids: String = corpus.documents.iter().map(|d| format!("{}\n", d.doc_id)).collect();
            create_dir(&dir)?;
            write_text(&dir.join("train_docs.txt"), &ids)?;
        }
        let outcome = train(&corpus, valid.as_ref(), &cfg, Some(&dir))?;
        let run = RunReport { source: dir.display().to_string(), seed: Some(seed), report: outcome.best_report };
        write_json(&dir.join("report.json"), &run)?;
        reports.push(run);
    }
    Ok(reports)
}

/// Expand `train` output directories to their `seed-*` checkpoints.
fn checkpoint_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("weights.json").exists() {
            out.push(p.clone());
            continue;
        }
        let mut seeds: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| Error::io(format!("reading checkpoint {}", p.display()), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join("weights.json").exists())
            .filter(|d| d.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed-")))
            .collect();
        if seeds.is_empty() {
            return Err(Error::io(
                format!("loading checkpoint {}", p.display()),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no weights.json here or in seed-* subdirectories"),
            ));
        }
        seeds.sort();
        out.extend(seeds);
    }
    Ok(out)
}

fn render_aggregate(agg: &Aggregate) -> String {
    let mut s = format!("runs\t{}\nmetric\tmean\tstd\n", agg.runs);
    for (k, v) in &agg.metrics {
        s.push_str(&format!("{k}\t{:.6}\t{:.6}\n", v.mean, v.std));
    }
    s
}

/// Per-run reports plus the mean and sample standard deviation of every
/// metric.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Aggregate> {
    if args.checkpoint.is_empty() && args.predictions.is_empty() {
        return Err(Error::InvalidArgument("evaluate needs --checkpoint or --predictions".into()));
    }
    let corpus = load_corpus(&args.corpus)?;
    let mut runs = Vec::new();
    for dir in checkpoint_dirs(&args.checkpoint)? {
        let (model, state) = load_checkpoint(&dir)?;
        let report = evaluate_model(&model, &corpus)?;
        runs.push(RunReport { source: dir.display().to_string(), seed: Some(state.seed), report });
    }
    for path in &args.predictions {
        let report = score(&corpus, &to_predicted_labels(&read_predictions(path)?))?;
        runs.push(RunReport { source: path.display().to_string(), seed: None, report });
    }
    create_dir(&args.out)?;
    for (i, r) in runs.iter().enumerate() {
        write_json(&args.out.join(format!("run-{i}.json")), r)?;
        write_text(&args.out.join(format!("run-{i}.txt")), &format!("{}\n{}", r.source, r.report.render_table()))?;
    }
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report).collect();
    let agg = Aggregate { runs: runs.len(), metrics: aggregate(&reports) };
    write_json(&args.out.join("aggregate.json"), &agg)?;
    write_text(&args.out.join("aggregate.tsv"), &render_aggregate(&agg))?;
    Ok(agg)
}

/// `predictions.jsonl` and `clusters.jsonl`; returns the record count.
pub fn cmd_predict(args: &PredictArgs) -> Result<usize> {
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let corpus = load_corpus(&args.corpus)?;
    let preds = model.predict_corpus(&corpus)?;
    create_dir(&args.out)?;
    write_predictions(&preds, args.out.join("predictions.jsonl"))?;
    let clusters = clusters_from_predictions(&corpus, &to_predicted_labels(&preds))?;
    write_clusters(&clusters, args.out.join("clusters.jsonl"))?;
    Ok(preds.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub sets: Vec<String>,
    pub runs: Vec<RunReport>,
    pub overall: MeanStd,
}

/// Train and score every variant of a grid under `out/<variant>/seed-<n>/`.
pub fn cmd_ablate(args: &AblateArgs, env: impl IntoIterator<Item = (String, String)>) -> Result<Vec<VariantSummary>> {
    let grid = ablation_grid(&args.grid)?;
    let env: Vec<(String, String)> = env.into_iter().collect();
    let base = resolve_config(&args.config, env.clone())?;
    let seeds = seeds_for(&args.config, &base);
    create_dir(&args.out)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("grid".to_string(), args.grid.clone());
    inputs.insert("train".to_string(), args.train.display().to_string());
    if let Some(v) = &args.valid {
        inputs.insert("valid".into(), v.display().to_string());
    }
    if let Some(f) = args.fraction {
        inputs.insert("fraction".into(), f.to_string());
    }
    let manifest = RunManifest {
        command: "ablate".into(),
        config: base.clone(),
        revision: source_revision(),
        seeds: seeds.clone(),
        out_dir: args.out.clone(),
        inputs,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    let valid = args.valid.as_deref().map(load_corpus).transpose()?;
    let mut summaries = Vec::new();
    for (name, variant_sets) in grid {
        let mut sets = args.config.sets.clone();
        sets.extend(variant_sets.iter().map(|s| s.to_string()));
        let cfg_args = ConfigArgs { sets, ..args.config.clone() };
        let config = resolve_config(&cfg_args, env.clone())?;
        let mut runs = Vec::new();
        for &seed in &seeds {
            let cfg = ModelConfig { seed, ..config.clone() };
            let corpus = load_train(&args.train, args.fraction, seed)?;
            let dir = args.out.join(name).join(format!("seed-{seed}"));
            log::info!("variant {name}, seed {seed}");
            let outcome = train(&corpus, valid.as_ref(), &cfg, Some(&dir))?;
            runs.push(RunReport { source: dir.display().to_string(), seed: Some(seed), report: outcome.best_report });
        }
        let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report).collect();
        let overall = aggregate(&reports).remove("overall.f1").unwrap_or_default();
        summaries.push(VariantSummary {
            variant: name.to_string(),
            sets: variant_sets.iter().map(|s| s.to_string()).collect(),
            runs,
            overall,
        });
    }
    write_json(&args.out.join("summary.json"), &summaries)?;
    let mut tsv = String::from("variant\toverall_f1_mean\toverall_f1_std\n");
    for s in &summaries {
        tsv.push_str(&format!("{}\t{:.6}\t{:.6}\n", s.variant, s.overall.mean, s.overall.std));
    }
    write_text(&args.out.join("summary.tsv"), &tsv)?;
    Ok(summaries)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let corpus = generate(&SynthConfig { documents: args.documents, seed: args.seed, ..Default::default() });
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_corpus(&corpus, &args.out)
}

/// Dispatch a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let env = || std::env::vars();
    match &cli.command {
        Command::Preprocess(a) => {
            let s = cmd_preprocess(&a.corpus, &a.out)?;
            println!("{} documents, {} ordered pairs -> {}", s.documents, s.pairs, a.out.display());
        }
        Command::Train(a) => {
            for r in cmd_train(a, env())? {
                println!("seed {}: best overall F1 {:.4} ({})", r.seed.unwrap_or_default(), r.report.overall, r.source);
            }
        }
        Command::Evaluate(a) => {
            let agg = cmd_evaluate(a)?;
            print!("{}", render_aggregate(&agg));
        }
        Command::Predict(a) => {
            let n = cmd_predict(a)?;
            println!("{n} predictions -> {}", a.out.display());
        }
        Command::Ablate(a) => {
            for s in cmd_ablate(a, env())? {
                println!("{:<20} {:.4} +/- {:.4}", s.variant, s.overall.mean, s.overall.std);
            }
        }
        Command::Synth(a) => {
            cmd_synth(a)?;
            println!("{} documents -> {}", a.documents, a.out.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_repeatable_flags() {
        let cli = Cli::parse_from([
            "protomatch", "train", "--train", "t.jsonl", "--out", "o", "--set", "graph=off", "--set", "dim=8", "--seed", "1",
            "--seed", "2",
        ]);
        let Command::Train(a) = cli.command else { panic!("train") };
        assert_eq!(a.config.sets, ["graph=off", "dim=8"]);
        assert_eq!(a.config.seeds, [1, 2]);
    }

    #[test]
    fn default_config_name_means_defaults() {
        let args = ConfigArgs { config: Some("default".into()), ..Default::default() };
        let c = resolve_config(&args, Vec::new()).unwrap();
        assert_eq!((c.examples_k, c.gcn_layers), (5, 1));
        assert_eq!((c.lambda_coref, c.lambda_temporal, c.lambda_causal, c.lambda_subevent), (1.0, 2.0, 4.0, 4.0));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let args = ConfigArgs { sets: vec!["dim=0".into(), "nope=1".into()], ..Default::default() };
        let e = resolve_config(&args, Vec::new()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let Error::Config(list) = e else { panic!() };
        assert!(list.len() >= 2, "{list:?}");
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(checkpoint_dirs(&[dir.path().join("absent")]).is_err());
        assert!(checkpoint_dirs(&[dir.path().to_path_buf()]).is_err());
    }
}
