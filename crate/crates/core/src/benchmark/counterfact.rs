//! CounterFact case records. Field names follow the published dataset;
//! fields this crate does not interpret are kept verbatim so records
//! re-serialize without loss.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::editors::RewriteRequest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    #[serde(rename = "str")]
    pub text: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Target {
    pub fn new(text: impl Into<String>, id: impl Into<String>) -> Self {
        let mut extra = Map::new();
        extra.insert("id".into(), Value::String(id.into()));
        Self { text: text.into(), extra }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestedRewrite {
    pub prompt: String,
    pub relation_id: String,
    pub target_new: Target,
    pub target_true: Target,
    pub subject: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: i64,
    pub requested_rewrite: RequestedRewrite,
    #[serde(default)]
    pub paraphrase_prompts: Vec<String>,
    pub neighborhood_prompts: Vec<String>,
    #[serde(default)]
    pub attribute_prompts: Vec<String>,
    #[serde(default)]
    pub generation_prompts: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl CaseRecord {
    pub fn request(&self) -> RewriteRequest {
        let rw = &self.requested_rewrite;
        RewriteRequest {
            prompt_template: rw.prompt.clone(),
            subject: rw.subject.clone(),
            target_true: rw.target_true.text.clone(),
            target_new: rw.target_new.text.clone(),
            relation_id: rw.relation_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighborhood_prompts.is_empty() {
            return Err(Error::Case { case: self.case_id, msg: "no neighborhood prompts".into() });
        }
        self.request()
            .validate()
            .map_err(|e| Error::Case { case: self.case_id, msg: e.to_string() })
    }
}

/// Parses a JSON array of CounterFact cases and validates each one.
pub fn parse_counterfact(bytes: &[u8]) -> Result<Vec<CaseRecord>> {
    let raw: Vec<Value> = serde_json::from_slice(bytes)
        .map_err(|e| Error::Dataset(format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column())))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let case = v.get("case_id").and_then(Value::as_i64).unwrap_or(i as i64);
            let rec: CaseRecord = serde_json::from_value(v)
                .map_err(|e| Error::Case { case, msg: format!("record {i}: {e}") })?;
            rec.validate()?;
            Ok(rec)
        })
        .collect()
}

pub fn to_json(cases: &[CaseRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(cases)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_array() {
        assert!(parse_counterfact(b"[]").unwrap().is_empty());
    }

    #[test]
    fn missing_rewrite_names_case() {
        let err = parse_counterfact(br#"[{"case_id": 0, "neighborhood_prompts": ["x"]}]"#).unwrap_err();
        match err {
            Error::Case { case, msg } => {
                assert_eq!(case, 0);
                assert!(msg.contains("requested_rewrite"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_counterfact(b"[{\"case_id\": 0,").unwrap_err();
        assert!(matches!(err, Error::Dataset(m) if m.contains("line 1")));
    }

    #[test]
    fn unknown_fields_survive() {
        let src = r#"[{"case_id":3,"pararel_idx":7,"requested_rewrite":{"prompt":"{} is in","relation_id":"P1",
            "target_new":{"str":"Rome","id":"Q1"},"target_true":{"str":"Paris","id":"Q2"},"subject":"Louvre","x":1},
            "neighborhood_prompts":["Obama is in"]}]"#;
        let cases = parse_counterfact(src.as_bytes()).unwrap();
        assert_eq!(cases[0].extra["pararel_idx"], 7);
        assert_eq!(cases[0].requested_rewrite.extra["x"], 1);
        assert_eq!(cases[0].requested_rewrite.target_new.extra["id"], "Q1");
        let again = parse_counterfact(to_json(&cases).unwrap().as_bytes()).unwrap();
        assert_eq!(again, cases);
    }
}
