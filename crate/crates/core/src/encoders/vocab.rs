//! The canonical vocabulary and tokenizer.
//!
//! The vocabulary ships in-repo as a plain text file, one token per line;
//! the line number is the token id. Id 0 is the pad token and `S*` is the
//! rare placeholder bound to a subject during finetuning.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Contents of the canonical in-repo vocabulary file.
pub const VOCAB_TEXT: &str = include_str!("../../assets/vocab.txt");

pub const PAD_TOKEN: &str = "<pad>";
pub const PLACEHOLDER_TOKEN: &str = "S*";

/// Bijective word <-> id mapping in canonical (file) order.
#[derive(Debug)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_lines(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for line in text.lines() {
            let word = line.trim();
            if word.is_empty() {
                continue;
            }
            if index.insert(word.to_string(), words.len()).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary word {word:?}")));
            }
            words.push(word.to_string());
        }
        if words.is_empty() || words[0] != PAD_TOKEN {
            return Err(Error::Config(format!(
                "vocabulary must start with the pad token {PAD_TOKEN:?}"
            )));
        }
        if !index.contains_key(PLACEHOLDER_TOKEN) {
            return Err(Error::Config(format!(
                "vocabulary is missing the placeholder token {PLACEHOLDER_TOKEN:?}"
            )));
        }
        Ok(Vocabulary { words, index })
    }

    /// The vocabulary shipped with the crate.
    pub fn canonical() -> &'static Vocabulary {
        static CANONICAL: OnceLock<Vocabulary> = OnceLock::new();
        CANONICAL.get_or_init(|| {
            Vocabulary::from_lines(VOCAB_TEXT).expect("canonical vocabulary file is well-formed")
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn pad_id(&self) -> usize {
        0
    }

    pub fn placeholder_id(&self) -> usize {
        self.index[PLACEHOLDER_TOKEN]
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::Vocabulary(word.to_string()))
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(|s| s.as_str())
    }

    /// Tokenize a whitespace-separated prompt into exactly `max_len` ids,
    /// padded with the pad token. Overlong prompts are an error, never a
    /// silent truncation.
    pub fn tokenize(&self, prompt: &str, max_len: usize) -> Result<Vec<usize>> {
        let words: Vec<&str> = prompt.split_whitespace().collect();
        if words.len() > max_len {
            return Err(Error::PromptLength { got: words.len(), max: max_len });
        }
        let mut ids = Vec::with_capacity(max_len);
        for w in &words {
            ids.push(self.id(w)?);
        }
        ids.resize(max_len, self.pad_id());
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_vocabulary_is_well_formed() {
        let v = Vocabulary::canonical();
        assert_eq!(v.word(0), Some(PAD_TOKEN));
        assert!(v.placeholder_id() > 0);
        // bijective: ids round-trip through words
        for id in 0..v.len() {
            let w = v.word(id).unwrap();
            assert_eq!(v.id(w).unwrap(), id);
        }
    }

    #[test]
    fn tokenize_pads_to_length() {
        let v = Vocabulary::canonical();
        let ids = v.tokenize("a S* square", 8).unwrap();
        assert_eq!(ids.len(), 8);
        assert_eq!(ids[0], v.id("a").unwrap());
        assert_eq!(ids[1], v.placeholder_id());
        assert_eq!(ids[2], v.id("square").unwrap());
        assert!(ids[3..].iter().all(|&i| i == v.pad_id()));
    }

    #[test]
    fn empty_prompt_is_all_padding() {
        let v = Vocabulary::canonical();
        let ids = v.tokenize("", 8).unwrap();
        assert_eq!(ids, vec![v.pad_id(); 8]);
    }

    #[test]
    fn tokenize_is_deterministic() {
        let v = Vocabulary::canonical();
        assert_eq!(
            v.tokenize("a S* circle on red checker", 8).unwrap(),
            v.tokenize("a S* circle on red checker", 8).unwrap()
        );
    }

    #[test]
    fn unknown_word_names_the_word() {
        let v = Vocabulary::canonical();
        match v.tokenize("a S* dragon", 8) {
            Err(Error::Vocabulary(w)) => assert_eq!(w, "dragon"),
            other => panic!("expected vocabulary error, got {other:?}"),
        }
    }

    #[test]
    fn overlong_prompt_is_length_error() {
        let v = Vocabulary::canonical();
        let long = "a a a a a a a a a";
        assert!(matches!(v.tokenize(long, 8), Err(Error::PromptLength { got: 9, max: 8 })));
    }
}
