//! String interning shared by the aligner, language model and decoder.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::FxMap;

pub type WordId = u32;

/// Bidirectional token ↔ id map. Ids are dense and assigned in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    ids: FxMap<String, WordId>,
    words: Vec<String>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, word: &str) -> WordId {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as WordId;
        self.words.push(word.to_string());
        self.ids.insert(word.to_string(), id);
        id
    }

    pub fn get(&self, word: &str) -> Option<WordId> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn intern_all<S: AsRef<str>>(&mut self, tokens: &[S]) -> Vec<WordId> {
        tokens.iter().map(|t| self.intern(t.as_ref())).collect()
    }
}
