//! The subcommands, as library functions writing into an output directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use super::eval::{run_eval, EvalRun};
use super::json;
use super::manifest::{resolve_timestamp, sha256_hex, DatasetId, ModelId, RunManifest, TOOL};
use super::report::ReportTable;
use crate::benchmark::{edit_sentence, gen_world, parse_counterfact, to_plus, CaseRecord, FactWorld};
use crate::editors::{EditContext, EditorKind};
use crate::error::{Error, Result};
use crate::metrics::{Metric, Variant};
use crate::tinylm::gradcheck::{check_hidden, check_mlp, GradCheckReport};
use crate::tinylm::{io, train, Checkpoint, FinalTokenNll, ModelConfig, Tokenizer};

pub const WORLD_FILE: &str = "world.json";
pub const MODEL_FILE: &str = "model.tlm";
pub const TRAIN_FILE: &str = "train.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PLOT_FILE: &str = "plot.json";
pub const PLUS_FILE: &str = "counterfact_plus.json";

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

pub fn cmd_gen_world(seed: u64, config: &RunConfig, out: &Path) -> Result<FactWorld> {
    let world = gen_world(seed, config.world)?;
    write(out, WORLD_FILE, &json::to_pretty(&world)?)?;
    Ok(world)
}

/// Canonical prompts whose most likely next token is the true object's
/// first token.
pub fn fact_recall(ckpt: &Checkpoint, cases: &[CaseRecord]) -> Result<(usize, usize)> {
    let mut hits = 0;
    for case in cases {
        let r = case.request();
        let dist = ckpt.forward(&ckpt.tokenizer.encode_strict(&r.filled_prompt()?)?)?;
        if dist.argmax() == ckpt.tokenizer.object_first_token(&r.target_true)? {
            hits += 1;
        }
    }
    Ok((hits, cases.len()))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub world_seed: u64,
    pub world_sha256: String,
    pub model: ModelId,
    pub train: crate::tinylm::TrainSpec,
    pub epoch_losses: Vec<f64>,
    pub recall_hits: usize,
    pub recall_total: usize,
    pub recall: f64,
    pub min_recall: f64,
}

/// Trains a model on the world's corpus and saves it even if it misses
/// the recall gate; the summary says whether it passed.
pub fn cmd_train(world_path: &Path, config: &RunConfig, seed: u64, out: &Path) -> Result<TrainSummary> {
    let bytes = fs::read(world_path)?;
    let world = FactWorld::from_json(&bytes)?;
    let tok = Tokenizer::build(&world.tokenizer_corpus())?;
    let cfg = config.model.config(tok.vocab_size(), seed);
    let label = format!("tinylm-{}x{}-world{}", cfg.n_layers, cfg.d_model, world.seed);
    let init = Checkpoint::init(cfg, tok)?.with_provenance(label);
    let corpus = world
        .corpus
        .iter()
        .map(|s| init.tokenizer.encode_strict(s))
        .collect::<Result<Vec<_>>>()?;
    let spec = crate::tinylm::TrainSpec { seed, ..config.train };
    let (model, report) = train(&init, &corpus, &spec)?;
    let (hits, total) = fact_recall(&model, &world.cases)?;
    fs::create_dir_all(out)?;
    io::save(&model, out.join(MODEL_FILE))?;
    let summary = TrainSummary {
        world_seed: world.seed,
        world_sha256: sha256_hex(&bytes),
        model: ModelId::of(&model)?,
        train: spec,
        epoch_losses: report.epoch_losses,
        recall_hits: hits,
        recall_total: total,
        recall: hits as f64 / total.max(1) as f64,
        min_recall: config.min_recall,
    };
    write(out, TRAIN_FILE, &json::to_pretty(&summary)?)?;
    Ok(summary)
}

impl TrainSummary {
    pub fn passed(&self) -> bool {
        self.recall >= self.min_recall
    }
}

/// Cases and a text corpus for covariance statistics and key prefixes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: DatasetId,
    pub cases: Vec<CaseRecord>,
    pub corpus: Vec<String>,
}

/// A fact world (`{"facts": ...}`) or a CounterFact-style case array.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    let (kind, cases, corpus) = if value.get("facts").is_some() {
        let world = FactWorld::from_json(&bytes)?;
        ("world", world.cases, world.corpus)
    } else {
        let cases = parse_counterfact(&bytes)?;
        let mut corpus = Vec::new();
        for c in &cases {
            let r = c.request();
            corpus.push(format!("{} {}.", r.filled_prompt()?, r.target_true));
            corpus.extend(c.neighborhood_prompts.iter().cloned());
        }
        ("counterfact", cases, corpus)
    };
    Ok(Dataset {
        id: DatasetId { kind: kind.into(), name, sha256: sha256_hex(&bytes), n_cases: cases.len() },
        cases,
        corpus,
    })
}

/// `all`, or comma-separated case ids and inclusive ranges like `0-19`.
pub fn parse_cases(spec: &str) -> Result<Option<Vec<i64>>> {
    let spec = spec.trim();
    if spec.is_empty() || spec == "all" {
        return Ok(None);
    }
    let bad = || Error::Config(format!("bad case selection {spec:?}"));
    let mut ids = BTreeSet::new();
    for part in spec.split(',') {
        let part = part.trim();
        match part.split_once('-').filter(|(a, _)| !a.is_empty()) {
            Some((a, b)) => {
                let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                ids.extend(a..=b);
            }
            None => {
                ids.insert(part.parse().map_err(|_| bad())?);
            }
        }
    }
    Ok(Some(ids.into_iter().collect()))
}

fn select(cases: &[CaseRecord], ids: Option<&[i64]>) -> Result<Vec<CaseRecord>> {
    match ids {
        None => Ok(cases.to_vec()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                cases
                    .iter()
                    .find(|c| c.case_id == *id)
                    .cloned()
                    .ok_or_else(|| Error::Dataset(format!("no case with id {id}")))
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub dataset: &'a Path,
    pub config: &'a RunConfig,
    pub editor: Option<EditorKind>,
    pub cases: Option<Vec<i64>>,
    pub seed: u64,
    pub threads: usize,
    pub timestamp: Option<u64>,
    pub out: &'a Path,
}

/// Evaluates, writes the record file, report and plot data, and returns the
/// run. There is no report when every case failed. Callers decide what a failure rate above the threshold means.
pub fn cmd_eval(args: &EvalArgs) -> Result<(EvalRun, Option<ReportTable>)> {
    let ckpt = io::load(args.checkpoint)?;
    let data = load_dataset(args.dataset)?;
    let cases = select(&data.cases, args.cases.as_deref())?;
    let mut params = args.config.editor_for(&ckpt.config, args.editor)?;
    params.prefix_seed = args.seed;
    let ctx = EditContext::prepare(&ckpt, &data.corpus, &params)?;
    let manifest = RunManifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.seed,
        model: ModelId::of(&ckpt)?,
        dataset: data.id,
        cases: cases.iter().map(|c| c.case_id).collect(),
        editor: params,
        metrics: args.config.metrics.into(),
        timestamp: resolve_timestamp(args.timestamp)?,
    };
    let run = run_eval(&ckpt, &cases, &ctx, manifest, args.threads)?;
    fs::create_dir_all(args.out)?;
    write(args.out, RECORDS_FILE, &run.to_jsonl()?)?;
    if run.prompts.is_empty() {
        return Ok((run, None));
    }
    let table = write_reports(&run, args.out, ReportFormat::Both)?;
    Ok((run, Some(table)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Both,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

fn write_reports(run: &EvalRun, out: &Path, format: ReportFormat) -> Result<ReportTable> {
    let table = ReportTable::from_run(run)?;
    if format != ReportFormat::Csv {
        write(out, REPORT_JSON, &table.to_json()?)?;
    }
    if format != ReportFormat::Json {
        write(out, REPORT_CSV, &table.to_csv()?)?;
    }
    write(out, PLOT_FILE, &table.plot_data().to_json()?)?;
    Ok(table)
}

/// Re-aggregates a record file.
pub fn cmd_report(records: &Path, format: ReportFormat, out: &Path) -> Result<ReportTable> {
    let run = EvalRun::from_jsonl(&fs::read_to_string(records)?)?;
    write_reports(&run, out, format)
}

/// Human-readable summary lines for a report.
pub fn summarize(table: &ReportTable) -> Vec<String> {
    let mut lines = vec![format!("model {} (NKL in nats)", table.manifest.model.label)];
    for row in &table.rows {
        let mut line = format!("{:<9}", row.label);
        for metric in Metric::ALL {
            for variant in Variant::ALL {
                if let Some(s) = table.cell(row.editor, metric, variant) {
                    line.push_str(&format!(
                        "  {} {}: {:.4} [{:.4}, {:.4}]",
                        metric.as_str(),
                        variant.as_str(),
                        s.mean,
                        s.ci_low,
                        s.ci_high
                    ));
                }
            }
        }
        lines.push(line);
    }
    lines
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenPlusSummary {
    pub cases: usize,
    /// Cases whose neighborhood prompts already begin with the edit.
    pub already_prefixed: Vec<i64>,
}

/// Writes the dynamic variant of a CounterFact file. The transformation is
/// applied unconditionally; already-prefixed cases are only reported.
pub fn cmd_gen_plus(input: &Path, out: &Path) -> Result<GenPlusSummary> {
    let cases = parse_counterfact(&fs::read(input)?)?;
    let mut already_prefixed = Vec::new();
    let mut plus = Vec::with_capacity(cases.len());
    for c in &cases {
        let s = edit_sentence(&c.request())?;
        if c.extra.contains_key("plus_neighborhood_prompts")
            || (!c.neighborhood_prompts.is_empty() && c.neighborhood_prompts.iter().all(|p| p.starts_with(&s)))
        {
            already_prefixed.push(c.case_id);
        }
        plus.push(to_plus(c)?);
    }
    let text = json::to_pretty(&plus)?;
    match out.extension() {
        Some(_) => {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(out, text)?;
        }
        None => {
            write(out, PLUS_FILE, &text)?;
        }
    }
    Ok(GenPlusSummary { cases: cases.len(), already_prefixed })
}

/// A seeded untrained model over a small built-in vocabulary.
pub fn fresh_model(seed: u64) -> Result<Checkpoint> {
    let tok = Tokenizer::build(&["The mother tongue of Danielle Darrieux is French. Paris is the capital of France, and English is spoken in London."])?;
    let mut cfg = ModelConfig::small(tok.vocab_size());
    cfg.seed = seed;
    Checkpoint::init(cfg, tok)
}

/// Finite-difference checks of both gradient operations on a seeded random
/// sequence, for every layer.
pub fn cmd_gradcheck(ckpt: &Checkpoint, coords: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    let cfg = &ckpt.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = cfg.max_seq_len.min(12);
    let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(0..cfg.vocab_size as u32)).collect();
    let loss = FinalTokenNll { target: rng.random_range(0..cfg.vocab_size as u32) };
    let mut reports = Vec::new();
    for layer in 0..cfg.n_layers {
        for pos in [rng.random_range(0..len), len - 1] {
            let mut r = check_hidden(ckpt, &tokens, layer, pos, loss, coords, rng.random())?;
            r.target = format!("hidden layer {layer} position {pos}");
            reports.push(r);
        }
        let mut r = check_mlp(ckpt, &tokens, layer, loss, coords, rng.random())?;
        r.target = format!("mlp weights layer {layer}");
        reports.push(r);
    }
    Ok(reports)
}
