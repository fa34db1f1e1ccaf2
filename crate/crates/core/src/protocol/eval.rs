//! Per-case edit and dual-variant neighborhood evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use crate::benchmark::{edit_sentence, plus_prompt, CaseRecord};
use crate::editors::{apply_edit, efficacy_check, EditContext, EditorKind, EditorParams, EfficacyReport};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_prompt, PromptKey, PromptMeasurement, Variant};
use crate::tinylm::Checkpoint;

/// Runs fail when more than this fraction of cases fail.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub editor: EditorKind,
    pub prompt: String,
    #[serde(flatten)]
    pub measurement: PromptMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyRecord {
    pub case_id: i64,
    pub editor: EditorKind,
    #[serde(flatten)]
    pub report: EfficacyReport,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub touched_layers: Vec<usize>,
    pub max_weight_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: i64,
    pub editor: EditorKind,
    pub error: String,
}

/// One line of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Manifest(RunManifest),
    Prompt(PromptRecord),
    Efficacy(EfficacyRecord),
    Failure(CaseFailure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub manifest: RunManifest,
    pub prompts: Vec<PromptRecord>,
    pub efficacy: Vec<EfficacyRecord>,
    pub failures: Vec<CaseFailure>,
}

impl EvalRun {
    pub fn failure_rate(&self) -> f64 {
        if self.manifest.cases.is_empty() {
            0.0
        } else {
            self.failures.len() as f64 / self.manifest.cases.len() as f64
        }
    }

    pub fn failed(&self) -> bool {
        self.failure_rate() > MAX_FAILURE_RATE
    }

    /// Manifest first, then prompts, efficacy and failures, each in
    /// canonical order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |r: Record| -> Result<()> {
            out.push_str(&super::json::to_line(&r)?);
            out.push('\n');
            Ok(())
        };
        push(Record::Manifest(self.manifest.clone()))?;
        for p in &self.prompts {
            push(Record::Prompt(p.clone()))?;
        }
        for e in &self.efficacy {
            push(Record::Efficacy(e.clone()))?;
        }
        for f in &self.failures {
            push(Record::Failure(f.clone()))?;
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut manifest = None;
        let (mut prompts, mut efficacy, mut failures) = (vec![], vec![], vec![]);
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(line)
                .map_err(|e| Error::Dataset(format!("record line {}: {e}", n + 1)))?;
            match rec {
                Record::Manifest(m) if manifest.is_none() => manifest = Some(m),
                Record::Manifest(_) => return Err(Error::Dataset("more than one manifest record".into())),
                Record::Prompt(p) => prompts.push(p),
                Record::Efficacy(e) => efficacy.push(e),
                Record::Failure(f) => failures.push(f),
            }
        }
        let manifest = manifest.ok_or_else(|| Error::Dataset("record file has no manifest".into()))?;
        Ok(Self { manifest, prompts, efficacy, failures })
    }
}

/// The editors a run evaluates: always the unedited model, plus the
/// configured editor.
pub fn run_editors(params: &EditorParams) -> Vec<EditorKind> {
    let mut v = vec![EditorKind::None];
    if params.kind != EditorKind::None {
        v.push(params.kind);
    }
    v
}

/// Neighborhood prompts of `case` under `variant`.
pub fn variant_prompts(case: &CaseRecord, variant: Variant) -> Result<Vec<String>> {
    Ok(match variant {
        Variant::Base => case.neighborhood_prompts.clone(),
        Variant::Plus => {
            let s = edit_sentence(&case.request())?;
            case.neighborhood_prompts.iter().map(|p| plus_prompt(&s, p)).collect()
        }
    })
}

fn measure(pre: &Checkpoint, post: &Checkpoint, case: &CaseRecord, editor: EditorKind) -> Result<Vec<PromptRecord>> {
    let request = case.request();
    let mut out = Vec::new();
    for variant in Variant::ALL {
        for (i, prompt) in variant_prompts(case, variant)?.into_iter().enumerate() {
            let key = PromptKey { case_id: case.case_id, prompt_index: i, variant };
            let measurement = evaluate_prompt(pre, post, &prompt, &request, key)?;
            out.push(PromptRecord { editor, prompt, measurement });
        }
    }
    Ok(out)
}

type CaseResult = (Vec<PromptRecord>, Option<EfficacyRecord>);

/// Unedited rows, then a fresh edit of `pristine` and its rows.
pub fn evaluate_case(pristine: &Checkpoint, case: &CaseRecord, params: &EditorParams, ctx: &EditContext) -> Result<CaseResult> {
    case.validate()?;
    let mut rows = measure(pristine, pristine, case, EditorKind::None)?;
    if params.kind == EditorKind::None {
        return Ok((rows, None));
    }
    let request = case.request();
    let outcome = apply_edit(pristine, &request, params, ctx)?;
    if !outcome.post.all_finite() {
        return Err(Error::Edit("edited weights are not finite".into()));
    }
    rows.extend(measure(pristine, &outcome.post, case, params.kind)?);
    let eff = efficacy_check(&outcome, &request)?;
    let efficacy = EfficacyRecord {
        case_id: case.case_id,
        editor: params.kind,
        report: eff,
        iterations: outcome.diagnostics.iterations(),
        final_loss: outcome.diagnostics.final_loss(),
        touched_layers: outcome.touched_layers.clone(),
        max_weight_change: outcome.deltas.iter().map(|d| d.linf).fold(0.0, f64::max),
    };
    Ok((rows, Some(efficacy)))
}

fn editor_rank(k: EditorKind) -> usize {
    EditorKind::ALL.iter().position(|&e| e == k).unwrap_or(usize::MAX)
}

/// Evaluates every case of `cases` on `threads` workers. Output order does
/// not depend on scheduling.
pub fn run_eval(ckpt: &Checkpoint, cases: &[CaseRecord], ctx: &EditContext, manifest: RunManifest, threads: usize) -> Result<EvalRun> {
    let params = manifest.editor;
    let snapshot = ckpt.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<std::result::Result<CaseResult, String>> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| {
                if !ckpt.bit_identical(&snapshot) {
                    return Err("unedited checkpoint changed between cases".to_string());
                }
                evaluate_case(ckpt, case, &params, ctx).map_err(|e| e.to_string())
            })
            .collect()
    });

    let (mut prompts, mut efficacy, mut failures) = (vec![], vec![], vec![]);
    for (case, r) in cases.iter().zip(results) {
        match r {
            Ok((rows, eff)) => {
                prompts.extend(rows);
                efficacy.extend(eff);
            }
            Err(error) => failures.push(CaseFailure { case_id: case.case_id, editor: params.kind, error }),
        }
    }
    prompts.sort_by_key(|p| {
        let m = &p.measurement;
        (editor_rank(p.editor), m.case_id, m.variant, m.prompt_index)
    });
    efficacy.sort_by_key(|e| (editor_rank(e.editor), e.case_id));
    failures.sort_by_key(|f| f.case_id);
    Ok(EvalRun { manifest, prompts, efficacy, failures })
}
