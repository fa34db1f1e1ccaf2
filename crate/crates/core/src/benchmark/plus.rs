//! The dynamic neighborhood variant: every neighborhood prompt is preceded
//! by the verbalized edit.

use serde::{Deserialize, Serialize};

use super::counterfact::CaseRecord;
use crate::editors::{fill_template, RewriteRequest};
use crate::error::Result;

/// The edit as a sentence, e.g. "The mother tongue of Danielle Darrieux is English."
pub fn edit_sentence(request: &RewriteRequest) -> Result<String> {
    let mut s = fill_template(&request.prompt_template, &request.subject)?;
    s.push(' ');
    s.push_str(&request.target_new);
    if !s.ends_with(['.', '!', '?']) {
        s.push('.');
    }
    Ok(s)
}

pub fn plus_prompt(sentence: &str, prompt: &str) -> String {
    format!("{sentence} {prompt}")
}

/// Inverse of [`plus_prompt`].
pub fn strip_edit_prefix<'a>(plus: &'a str, sentence: &str) -> Option<&'a str> {
    plus.strip_prefix(sentence)?.strip_prefix(' ')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlusCase {
    #[serde(flatten)]
    pub base: CaseRecord,
    pub plus_neighborhood_prompts: Vec<String>,
}

pub fn to_plus(case: &CaseRecord) -> Result<PlusCase> {
    let sentence = edit_sentence(&case.request())?;
    Ok(PlusCase {
        base: case.clone(),
        plus_neighborhood_prompts: case
            .neighborhood_prompts
            .iter()
            .map(|p| plus_prompt(&sentence, p))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(template: &str, subject: &str, new: &str) -> RewriteRequest {
        RewriteRequest {
            prompt_template: template.into(),
            subject: subject.into(),
            target_true: "T".into(),
            target_new: new.into(),
            relation_id: "r".into(),
        }
    }

    #[test]
    fn sentences() {
        assert_eq!(
            edit_sentence(&req("The mother tongue of {} is", "Danielle Darrieux", "English")).unwrap(),
            "The mother tongue of Danielle Darrieux is English."
        );
        assert_eq!(edit_sentence(&req("{} is located in", "X", "Y")).unwrap(), "X is located in Y.");
        assert_eq!(edit_sentence(&req("{} is in", "X", "Y.")).unwrap(), "X is in Y.");
        assert_eq!(edit_sentence(&req("Is {} in", "X", "Y?")).unwrap(), "Is X in Y?");
        assert_eq!(edit_sentence(&req("{} likes", "a{}b", "c")).unwrap(), "a{}b likes c.");
        assert!(edit_sentence(&req("no slot", "X", "Y")).is_err());
    }

    #[test]
    fn strip_inverts_prepend() {
        let s = "A is in B.";
        assert_eq!(strip_edit_prefix(&plus_prompt(s, "C is in"), s), Some("C is in"));
        assert_eq!(strip_edit_prefix("A is in B.C is in", s), None);
    }
}
