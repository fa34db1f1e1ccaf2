//! Word-level tokenizer with a GPT-2 style leading-space convention.
//!
//! Text is cut into units: a word (maximal run of non-space, non-punctuation
//! characters) or a single punctuation character, each optionally carrying
//! one leading ASCII space. Remaining whitespace forms its own units. The
//! units partition the input, so decoding the units of a text reproduces it
//! byte for byte.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: &str = "<bos>";
pub const UNK: &str = "<unk>";
pub const BOS_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

pub const SCHEME: &str = "word-punct-v1";

fn is_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '(' | ')' | '"')
}

/// Splits `text` into tokenizer units. Concatenating the result yields `text`.
pub fn split_units(text: &str) -> Vec<&str> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let n = bytes.len();
    let at = |i: usize| if i < n { bytes[i].0 } else { text.len() };
    let mut units = Vec::new();
    let mut i = 0;

    // end (char index) of the word-or-punct unit starting at j
    let unit_end = |j: usize| -> usize {
        if is_punct(bytes[j].1) {
            return j + 1;
        }
        let mut k = j;
        while k < n && !bytes[k].1.is_whitespace() && !is_punct(bytes[k].1) {
            k += 1;
        }
        k
    };

    while i < n {
        let c = bytes[i].1;
        if c.is_whitespace() {
            let mut j = i;
            while j < n && bytes[j].1.is_whitespace() {
                j += 1;
            }
            if j < n && bytes[j - 1].1 == ' ' {
                // last space attaches to the following unit
                if j - 1 > i {
                    units.push(&text[at(i)..at(j - 1)]);
                }
                let end = unit_end(j);
                units.push(&text[at(j - 1)..at(end)]);
                i = end;
            } else {
                units.push(&text[at(i)..at(j)]);
                i = j;
            }
        } else {
            let end = unit_end(i);
            units.push(&text[at(i)..at(end)]);
            i = end;
        }
    }
    units
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TokenizerRepr {
    scheme: String,
    vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TokenizerRepr", into = "TokenizerRepr")]
pub struct Tokenizer {
    vocabulary: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<TokenizerRepr> for Tokenizer {
    type Error = Error;

    fn try_from(repr: TokenizerRepr) -> Result<Self> {
        if repr.scheme != SCHEME {
            return Err(Error::Tokenizer(format!("unknown scheme {:?}", repr.scheme)));
        }
        Self::from_vocabulary(repr.vocabulary)
    }
}

impl From<Tokenizer> for TokenizerRepr {
    fn from(t: Tokenizer) -> Self {
        TokenizerRepr {
            scheme: SCHEME.to_string(),
            vocabulary: t.vocabulary,
        }
    }
}

impl Tokenizer {
    /// Builds a vocabulary of BOS, UNK, then every unit of `corpus` in order
    /// of first occurrence.
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Tokenizer("empty corpus".into()));
        }
        let mut vocabulary = vec![BOS.to_string(), UNK.to_string()];
        let mut seen: HashMap<String, u32> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        for text in corpus {
            for unit in split_units(text.as_ref()) {
                if !seen.contains_key(unit) {
                    seen.insert(unit.to_string(), vocabulary.len() as u32);
                    vocabulary.push(unit.to_string());
                }
            }
        }
        Ok(Self {
            vocabulary,
            index: seen,
        })
    }

    pub fn from_vocabulary(vocabulary: Vec<String>) -> Result<Self> {
        if vocabulary.len() < 2 || vocabulary[0] != BOS || vocabulary[1] != UNK {
            return Err(Error::Tokenizer("vocabulary must start with BOS, UNK".into()));
        }
        let mut index = HashMap::with_capacity(vocabulary.len());
        for (i, unit) in vocabulary.iter().enumerate() {
            if index.insert(unit.clone(), i as u32).is_some() {
                return Err(Error::Tokenizer(format!("duplicate unit {unit:?}")));
            }
        }
        Ok(Self { vocabulary, index })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn id(&self, unit: &str) -> Option<u32> {
        self.index.get(unit).copied()
    }

    pub fn unit(&self, id: u32) -> Option<&str> {
        self.vocabulary.get(id as usize).map(String::as_str)
    }

    /// Unit ids without the BOS prefix; unknown units map to UNK.
    pub fn encode_units(&self, text: &str) -> Vec<u32> {
        split_units(text)
            .into_iter()
            .map(|u| self.id(u).unwrap_or(UNK_ID))
            .collect()
    }

    /// BOS followed by the unit ids of `text`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::with_capacity(text.len() / 3 + 2);
        ids.push(BOS_ID);
        ids.extend(self.encode_units(text));
        ids
    }

    /// Like [`Tokenizer::encode`] but fails on any unknown unit.
    pub fn encode_strict(&self, text: &str) -> Result<Vec<u32>> {
        let ids = self.encode(text);
        if let Some(pos) = ids.iter().position(|&i| i == UNK_ID) {
            let unit = split_units(text)[pos - 1];
            return Err(Error::Tokenizer(format!("unknown unit {unit:?} in {text:?}")));
        }
        Ok(ids)
    }

    /// Concatenates units, dropping BOS.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            if id == BOS_ID {
                continue;
            }
            let unit = self.unit(id).ok_or(Error::TokenId {
                id,
                vocab: self.vocab_size(),
            })?;
            out.push_str(unit);
        }
        Ok(out)
    }

    /// First token of `" " + object`, the unit a prompt ending right before
    /// the object would be continued with.
    pub fn object_first_token(&self, object: &str) -> Result<u32> {
        if object.is_empty() {
            return Err(Error::Tokenizer("empty object".into()));
        }
        let joined = format!(" {object}");
        let first = split_units(&joined)[0];
        self.id(first)
            .ok_or_else(|| Error::Tokenizer(format!("object {object:?} has unknown first unit {first:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn whitespace_scheme_vocabulary() {
        let t = Tokenizer::build(&["a b", "b c"]).unwrap();
        assert_eq!(t.vocabulary(), &["<bos>", "<unk>", "a", " b", "b", " c"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let empty: [&str; 0] = [];
        assert!(Tokenizer::build(&empty).is_err());
    }

    #[test]
    fn units_of_a_prompt() {
        assert_eq!(
            split_units("The Louvre is in Rome. Obama, born"),
            vec!["The", " Louvre", " is", " in", " Rome", ".", " Obama", ",", " born"]
        );
        assert_eq!(split_units("a  b\n"), vec!["a", " ", " b", "\n"]);
        assert_eq!(split_units(" x"), vec![" x"]);
        assert_eq!(split_units("Chaban-Delmas"), vec!["Chaban-Delmas"]);
    }

    #[test]
    fn decode_prepends_nothing() {
        let t = Tokenizer::build(&["Paris is nice."]).unwrap();
        let ids = t.encode("Paris is nice.");
        assert_eq!(ids[0], BOS_ID);
        assert_eq!(t.decode(&ids).unwrap(), "Paris is nice.");
        assert_eq!(t.encode("Paris is bad")[3], UNK_ID);
        assert!(t.encode_strict("Paris is bad").is_err());
    }

    #[test]
    fn object_first_token_uses_leading_space() {
        let t = Tokenizer::build(&["x is New York"]).unwrap();
        assert_eq!(t.object_first_token("New York").unwrap(), t.id(" New").unwrap());
        assert!(t.object_first_token("Boston").is_err());
    }

    #[test]
    fn serde_rebuilds_index() {
        let t = Tokenizer::build(&["a b c"]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: Tokenizer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Tokenizer>(
            r#"{"scheme":"word-punct-v1","vocabulary":["<bos>","<unk>","a","a"]}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn units_partition_text(s in "[a-zA-Z .,!?\n\t-]{0,40}") {
            let joined: String = split_units(&s).concat();
            prop_assert_eq!(joined, s);
        }

        #[test]
        fn corpus_text_roundtrips(words in proptest::collection::vec("[a-z]{1,5}|[.,?]", 1..12)) {
            let text = words.join(" ");
            let t = Tokenizer::build(&[text.as_str()]).unwrap();
            let ids = t.encode(&text);
            prop_assert!(!ids.contains(&UNK_ID));
            prop_assert_eq!(t.decode(&ids).unwrap(), text);
        }
    }
}
