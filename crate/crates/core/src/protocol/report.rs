//! Aggregate tables and plot series, computed only from prompt records.

use serde::{Deserialize, Serialize};

use super::eval::{EvalRun, PromptRecord};
use super::json::format_f64;
use super::manifest::{sha256_hex, RunManifest};
use crate::editors::EditorKind;
use crate::error::{Error, Result};
use crate::metrics::{bootstrap_ci, AggregateStat, Metric, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub variant: Variant,
    pub stat: AggregateStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub n_params: usize,
    pub editor: EditorKind,
    pub label: String,
    pub cells: Vec<ReportCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub manifest: RunManifest,
    pub rows: Vec<ReportRow>,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "model", "n_params", "editor", "metric", "variant", "mean", "ci_low", "ci_high", "n_samples", "bootstrap_n", "level",
];

/// Bootstrap seed of one table cell.
pub fn cell_seed(seed: u64, editor: EditorKind, metric: Metric, variant: Variant) -> u64 {
    let tag = format!("{seed}/{}/{}/{}", editor.as_str(), metric.as_str(), variant.as_str());
    let hex = sha256_hex(tag.as_bytes());
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}

pub fn aggregate(manifest: &RunManifest, prompts: &[PromptRecord]) -> Result<ReportTable> {
    let settings = manifest.metric_settings();
    let mut rows = Vec::new();
    for editor in EditorKind::ALL {
        let mine: Vec<&PromptRecord> = prompts.iter().filter(|p| p.editor == editor).collect();
        if mine.is_empty() {
            continue;
        }
        let mut cells = Vec::new();
        for metric in Metric::ALL {
            for variant in Variant::ALL {
                let values: Vec<f64> = mine
                    .iter()
                    .filter(|p| p.measurement.variant == variant)
                    .map(|p| metric.value(&p.measurement))
                    .collect();
                let seed = cell_seed(manifest.seed, editor, metric, variant);
                let stat = bootstrap_ci(metric.as_str(), &values, settings.bootstrap_n, settings.level, seed)?;
                cells.push(ReportCell { variant, stat });
            }
        }
        rows.push(ReportRow {
            model: manifest.model.label.clone(),
            n_params: manifest.model.n_params,
            editor,
            label: editor.label().to_string(),
            cells,
        });
    }
    if rows.is_empty() {
        return Err(Error::Metric("no prompt records to aggregate".into()));
    }
    Ok(ReportTable { manifest: manifest.clone(), rows })
}

impl ReportTable {
    pub fn from_run(run: &EvalRun) -> Result<Self> {
        aggregate(&run.manifest, &run.prompts)
    }

    pub fn cell(&self, editor: EditorKind, metric: Metric, variant: Variant) -> Option<&AggregateStat> {
        self.rows
            .iter()
            .find(|r| r.editor == editor)?
            .cells
            .iter()
            .find(|c| c.variant == variant && c.stat.metric == metric.as_str())
            .map(|c| &c.stat)
    }

    pub fn to_json(&self) -> Result<String> {
        super::json::to_pretty(self)
    }

    /// A `# manifest_sha256` comment line, then one row per cell.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        for row in &self.rows {
            for c in &row.cells {
                let s = &c.stat;
                w.write_record([
                    row.model.clone(),
                    row.n_params.to_string(),
                    row.editor.as_str().to_string(),
                    s.metric.clone(),
                    c.variant.as_str().to_string(),
                    format_f64(s.mean),
                    format_f64(s.ci_low),
                    format_f64(s.ci_high),
                    s.n_samples.to_string(),
                    s.bootstrap_n.to_string(),
                    format_f64(s.level),
                ])
                .map_err(csv_err)?;
            }
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let mut out = format!("# manifest_sha256={}\n", self.manifest.sha256()?);
        out.push_str(std::str::from_utf8(&body).expect("csv of UTF-8 fields"));
        Ok(out)
    }

    /// One series per (editor, variant), with a point per metric.
    pub fn plot_data(&self) -> PlotData {
        let mut series = Vec::new();
        for row in &self.rows {
            for variant in Variant::ALL {
                let points = row
                    .cells
                    .iter()
                    .filter(|c| c.variant == variant)
                    .map(|c| PlotPoint {
                        metric: c.stat.metric.clone(),
                        model: row.model.clone(),
                        n_params: row.n_params,
                        mean: c.stat.mean,
                        ci_low: c.stat.ci_low,
                        ci_high: c.stat.ci_high,
                    })
                    .collect();
                series.push(PlotSeries { editor: row.editor, label: row.label.clone(), variant, points });
            }
        }
        PlotData { manifest: self.manifest.clone(), series }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub metric: String,
    pub model: String,
    pub n_params: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub editor: EditorKind,
    pub label: String,
    pub variant: Variant,
    pub points: Vec<PlotPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub manifest: RunManifest,
    pub series: Vec<PlotSeries>,
}

impl PlotData {
    pub fn to_json(&self) -> Result<String> {
        super::json::to_pretty(self)
    }
}
