use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "{}";

/// One counterfactual statement `(subject, relation, target_new)` replacing
/// `(subject, relation, target_true)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRequest {
    /// Prompt with a single `{}` where the subject goes, ending right before
    /// the object.
    pub prompt_template: String,
    pub subject: String,
    pub target_true: String,
    pub target_new: String,
    pub relation_id: String,
}

impl RewriteRequest {
    pub fn validate(&self) -> Result<()> {
        let n = self.prompt_template.matches(PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::Edit(format!(
                "template {:?} has {n} placeholders, expected one",
                self.prompt_template
            )));
        }
        if self.subject.is_empty() || self.target_true.is_empty() || self.target_new.is_empty() {
            return Err(Error::Edit("subject and targets must be non-empty".into()));
        }
        if self.target_true == self.target_new {
            return Err(Error::Edit(format!("target_new equals target_true ({:?})", self.target_new)));
        }
        Ok(())
    }

    /// Template with the subject substituted once, left to right.
    pub fn filled_prompt(&self) -> Result<String> {
        fill_template(&self.prompt_template, &self.subject)
    }
}

/// Replaces the first `{}` of `template` with `subject`; the substituted
/// text is not re-scanned.
pub fn fill_template(template: &str, subject: &str) -> Result<String> {
    if !template.contains(PLACEHOLDER) {
        return Err(Error::Edit(format!("template {template:?} has no {PLACEHOLDER} placeholder")));
    }
    Ok(template.replacen(PLACEHOLDER, subject, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> RewriteRequest {
        RewriteRequest {
            prompt_template: "The mother tongue of {} is".into(),
            subject: "Danielle Darrieux".into(),
            target_true: "French".into(),
            target_new: "English".into(),
            relation_id: "P103".into(),
        }
    }

    #[test]
    fn validation() {
        assert!(req().validate().is_ok());
        let mut r = req();
        r.prompt_template = "{} and {}".into();
        assert!(r.validate().is_err());
        let mut r = req();
        r.target_new = "French".into();
        assert!(r.validate().is_err());
        let mut r = req();
        r.subject.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn fills_once_without_rescan() {
        assert_eq!(req().filled_prompt().unwrap(), "The mother tongue of Danielle Darrieux is");
        assert_eq!(fill_template("{} is in", "a{}b").unwrap(), "a{}b is in");
        assert!(fill_template("no slot", "x").is_err());
    }
}
