//! Editor settings and their flat `key = value` file form.
//!
//! ```text
//! # comments start with '#'
//! editor = rome            # none | rome | memit | ft-l
//! layer = 0                # rome, ft-l
//! layer_lo = 0             # memit, inclusive
//! layer_hi = 1             # memit, inclusive
//! ridge = 0.0001           # covariance ridge, multiplies mean diagonal
//! n_prefix = 1             # context variants averaged into the key
//! prefix_seed = 0
//! value_step = 0.1
//! value_max_steps = 100
//! value_stop_prob = 0.95
//! ftl_epsilon = 0.0005
//! ftl_learning_rate = 0.0005
//! ftl_steps = 25
//! degenerate_tol = 1e-10
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tinylm::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditorKind {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "rome")]
    Rome,
    #[serde(rename = "memit")]
    MemitLite,
    #[serde(rename = "ft-l")]
    FtL,
}

impl EditorKind {
    pub const ALL: [EditorKind; 4] = [EditorKind::None, EditorKind::Rome, EditorKind::MemitLite, EditorKind::FtL];

    pub fn as_str(self) -> &'static str {
        match self {
            EditorKind::None => "none",
            EditorKind::Rome => "rome",
            EditorKind::MemitLite => "memit",
            EditorKind::FtL => "ft-l",
        }
    }

    /// Row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            EditorKind::None => "unedited",
            EditorKind::Rome => "ROME",
            EditorKind::MemitLite => "MEMIT",
            EditorKind::FtL => "FT-L",
        }
    }
}

impl fmt::Display for EditorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EditorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(EditorKind::None),
            "rome" => Ok(EditorKind::Rome),
            "memit" | "memit-lite" | "memit_lite" => Ok(EditorKind::MemitLite),
            "ft-l" | "ftl" | "ft_l" => Ok(EditorKind::FtL),
            other => Err(Error::Config(format!("unknown editor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditorParams {
    pub kind: EditorKind,
    pub layer: usize,
    pub layer_lo: usize,
    pub layer_hi: usize,
    pub ridge: f64,
    pub n_prefix: usize,
    pub prefix_seed: u64,
    pub value_step: f64,
    pub value_max_steps: usize,
    pub value_stop_prob: f64,
    pub ftl_epsilon: f64,
    pub ftl_learning_rate: f64,
    pub ftl_steps: usize,
    pub degenerate_tol: f64,
}

impl Default for EditorParams {
    fn default() -> Self {
        Self {
            kind: EditorKind::Rome,
            layer: 0,
            layer_lo: 0,
            layer_hi: 1,
            ridge: 1e-4,
            n_prefix: 1,
            prefix_seed: 0,
            value_step: 0.1,
            value_max_steps: 100,
            value_stop_prob: 0.95,
            ftl_epsilon: 5e-4,
            ftl_learning_rate: 5e-4,
            ftl_steps: 25,
            degenerate_tol: 1e-10,
        }
    }
}

impl EditorParams {
    /// Defaults with layers placed around the middle of the model: a single
    /// layer at `ceil(n/2) - 1`, or the pair `ceil(n/2) - 1 ..= ceil(n/2)`.
    pub fn for_model(kind: EditorKind, config: &ModelConfig) -> Self {
        let mid = config.n_layers.div_ceil(2) - 1;
        Self {
            kind,
            layer: mid,
            layer_lo: mid,
            layer_hi: (mid + 1).min(config.n_layers - 1),
            ..Self::default()
        }
    }

    pub fn with_kind(mut self, kind: EditorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let n = config.n_layers;
        match self.kind {
            EditorKind::Rome | EditorKind::FtL if self.layer >= n => {
                return bad(format!("layer {} >= n_layers {n}", self.layer))
            }
            EditorKind::MemitLite if self.layer_lo > self.layer_hi || self.layer_hi >= n => {
                return bad(format!("layer range {}..={} invalid for {n} layers", self.layer_lo, self.layer_hi))
            }
            _ => {}
        }
        if !(self.ridge > 0.0) || !(self.value_step > 0.0) || !(self.degenerate_tol > 0.0) {
            return bad("ridge, value_step and degenerate_tol must be positive".into());
        }
        if self.n_prefix == 0 || self.value_max_steps == 0 {
            return bad("n_prefix and value_max_steps must be at least 1".into());
        }
        if !(self.value_stop_prob > 0.0 && self.value_stop_prob <= 1.0) {
            return bad("value_stop_prob must be in (0, 1]".into());
        }
        if !(self.ftl_epsilon >= 0.0) || !(self.ftl_learning_rate > 0.0) {
            return bad("ftl_epsilon must be >= 0 and ftl_learning_rate > 0".into());
        }
        Ok(())
    }

    /// Layers an edit with these params may modify.
    pub fn layers(&self) -> Vec<usize> {
        match self.kind {
            EditorKind::None => vec![],
            EditorKind::Rome | EditorKind::FtL => vec![self.layer],
            EditorKind::MemitLite => (self.layer_lo..=self.layer_hi).collect(),
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "editor = {}", self.kind);
        let _ = writeln!(s, "layer = {}", self.layer);
        let _ = writeln!(s, "layer_lo = {}", self.layer_lo);
        let _ = writeln!(s, "layer_hi = {}", self.layer_hi);
        let _ = writeln!(s, "ridge = {:?}", self.ridge);
        let _ = writeln!(s, "n_prefix = {}", self.n_prefix);
        let _ = writeln!(s, "prefix_seed = {}", self.prefix_seed);
        let _ = writeln!(s, "value_step = {:?}", self.value_step);
        let _ = writeln!(s, "value_max_steps = {}", self.value_max_steps);
        let _ = writeln!(s, "value_stop_prob = {:?}", self.value_stop_prob);
        let _ = writeln!(s, "ftl_epsilon = {:?}", self.ftl_epsilon);
        let _ = writeln!(s, "ftl_learning_rate = {:?}", self.ftl_learning_rate);
        let _ = writeln!(s, "ftl_steps = {}", self.ftl_steps);
        let _ = writeln!(s, "degenerate_tol = {:?}", self.degenerate_tol);
        s
    }

    /// Parses `key = value` lines on top of `base`. Unknown keys are errors;
    /// keys belonging to other sections (see [`parse_kv`]) may be skipped by
    /// passing them in `ignore`.
    pub fn from_kv(text: &str, base: EditorParams, ignore: &[&str]) -> Result<Self> {
        let mut p = base;
        for (key, value) in parse_kv(text)? {
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| Error::Config(format!("{key}: not a number: {v:?}")))
            };
            let int = |v: &str| -> Result<u64> {
                v.parse::<u64>().map_err(|_| Error::Config(format!("{key}: not an integer: {v:?}")))
            };
            match key.as_str() {
                "editor" => p.kind = value.parse()?,
                "layer" => p.layer = int(&value)? as usize,
                "layer_lo" => p.layer_lo = int(&value)? as usize,
                "layer_hi" => p.layer_hi = int(&value)? as usize,
                "ridge" => p.ridge = num(&value)?,
                "n_prefix" => p.n_prefix = int(&value)? as usize,
                "prefix_seed" => p.prefix_seed = int(&value)?,
                "value_step" => p.value_step = num(&value)?,
                "value_max_steps" => p.value_max_steps = int(&value)? as usize,
                "value_stop_prob" => p.value_stop_prob = num(&value)?,
                "ftl_epsilon" => p.ftl_epsilon = num(&value)?,
                "ftl_learning_rate" => p.ftl_learning_rate = num(&value)?,
                "ftl_steps" => p.ftl_steps = int(&value)? as usize,
                "degenerate_tol" => p.degenerate_tol = num(&value)?,
                k if ignore.contains(&k) => {}
                k => return Err(Error::Config(format!("unknown key {k:?}"))),
            }
        }
        Ok(p)
    }
}

/// Splits a flat configuration file into `(key, value)` pairs, in order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip() {
        let p = EditorParams { kind: EditorKind::FtL, ftl_epsilon: 1e-3, prefix_seed: 9, ..Default::default() };
        let back = EditorParams::from_kv(&p.to_kv(), EditorParams::default(), &[]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn kv_errors() {
        assert!(EditorParams::from_kv("editor = foo", Default::default(), &[]).is_err());
        assert!(EditorParams::from_kv("ridge = x", Default::default(), &[]).is_err());
        assert!(EditorParams::from_kv("bogus = 1", Default::default(), &[]).is_err());
        assert!(EditorParams::from_kv("bogus = 1", Default::default(), &["bogus"]).is_ok());
        assert!(EditorParams::from_kv("no equals", Default::default(), &[]).is_err());
        let p = EditorParams::from_kv("# c\n\nditch = 1 # x\n", Default::default(), &["ditch"]).unwrap();
        assert_eq!(p, EditorParams::default());
    }

    #[test]
    fn model_defaults() {
        let mut cfg = ModelConfig::small(10);
        let p = EditorParams::for_model(EditorKind::MemitLite, &cfg);
        assert_eq!((p.layer, p.layer_lo, p.layer_hi), (0, 0, 1));
        cfg.n_layers = 8;
        let p = EditorParams::for_model(EditorKind::MemitLite, &cfg);
        assert_eq!((p.layer, p.layer_lo, p.layer_hi), (3, 3, 4));
        cfg.n_layers = 1;
        let p = EditorParams::for_model(EditorKind::MemitLite, &cfg);
        assert_eq!(p.layers(), vec![0]);
        assert!(p.validate(&cfg).is_ok());
    }
}
