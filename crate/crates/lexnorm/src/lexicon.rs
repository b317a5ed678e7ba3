//! Lexical resources: canonical vocabulary, NSW mapping tables, diacritic map.
//!
//! The same file drives both directions of the pipeline: the corpus generator
//! walks the tables *backwards* (canonical word → one of its known NSW forms)
//! to corrupt clean text, and the weak dictionary rule is seeded *forwards*
//! from a subset of the same entries. Keys are NSW forms, values are standard
//! words; a value may contain spaces (a 1-n expansion such as "kt" → "kinh
//! tế").

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in Vietnamese lexicon used by tests and as the CLI default.
pub const DEFAULT_LEXICON_JSON: &str = include_str!("../data/lexicon_vi.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lexicon {
    /// Standard vocabulary, lowercase. Includes every word that appears
    /// inside a multi-word mapping value, so any gold target decomposes into
    /// canonical words.
    pub canonical_words: Vec<String>,
    /// Abbreviations: NSW form → standard word or phrase.
    pub abbreviation_table: BTreeMap<String, String>,
    /// Teencode spellings: NSW form → standard word.
    pub teencode_table: BTreeMap<String, String>,
    /// Per-character diacritic removal, e.g. "ụ" → "u", "đ" → "d".
    pub diacritic_map: BTreeMap<char, char>,
}

impl Lexicon {
    pub fn builtin() -> Lexicon {
        Lexicon::from_json(DEFAULT_LEXICON_JSON).expect("embedded lexicon is valid")
    }

    pub fn from_json(s: &str) -> Result<Lexicon> {
        let lex: Lexicon = serde_json::from_str(s)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        Lexicon::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::atomic_write(path, &serde_json::to_vec_pretty(self)?)
    }

    fn validate(&self) -> Result<()> {
        if self.canonical_words.is_empty() {
            return Err(Error::Data("lexicon has no canonical words".into()));
        }
        for (name, table) in [
            ("abbreviation_table", &self.abbreviation_table),
            ("teencode_table", &self.teencode_table),
        ] {
            for (k, v) in table {
                if k.is_empty() || v.trim().is_empty() {
                    return Err(Error::Data(format!("{name} has an empty key or value")));
                }
            }
        }
        for (&k, &v) in &self.diacritic_map {
            if self.diacritic_map.contains_key(&v) {
                return Err(Error::Data(format!(
                    "diacritic_map value {v:?} (for key {k:?}) still carries a mark"
                )));
            }
        }
        Ok(())
    }

    pub fn is_canonical(&self, word: &str) -> bool {
        self.canonical_words.iter().any(|w| w == word)
    }

    /// Strip diacritics from every character of `s`.
    pub fn strip_all(&self, s: &str) -> String {
        s.chars()
            .map(|c| self.diacritic_map.get(&c).copied().unwrap_or(c))
            .collect()
    }

    pub fn has_mark(&self, s: &str) -> bool {
        s.chars().any(|c| self.diacritic_map.contains_key(&c))
    }

    /// standard word/phrase → its NSW forms, over both tables, deterministic
    /// order. The corpus generator samples from this.
    pub fn reverse_table(&self) -> BTreeMap<String, Vec<String>> {
        let mut rev: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for table in [&self.abbreviation_table, &self.teencode_table] {
            for (nsw, standard) in table {
                rev.entry(standard.clone()).or_default().insert(nsw.clone());
            }
        }
        rev.into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect()
    }

    /// Multi-word mapping values ("kinh tế", "mọi người"), each as its word
    /// list. These are the phrase atoms the sentence sampler can emit.
    pub fn phrases(&self) -> Vec<Vec<String>> {
        let mut out: BTreeSet<Vec<String>> = BTreeSet::new();
        for table in [&self.abbreviation_table, &self.teencode_table] {
            for v in table.values() {
                if v.contains(' ') {
                    out.insert(v.split_whitespace().map(str::to_owned).collect());
                }
            }
        }
        out.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lexicon_loads_and_validates() {
        let lex = Lexicon::builtin();
        assert!(lex.canonical_words.len() > 200);
        assert_eq!(lex.diacritic_map.len(), 67);
        assert_eq!(lex.abbreviation_table["ko"], "không");
        assert_eq!(lex.teencode_table["thoai"], "thôi");
    }

    #[test]
    fn phrase_constituents_are_canonical() {
        let lex = Lexicon::builtin();
        for phrase in lex.phrases() {
            for w in &phrase {
                assert!(lex.is_canonical(w), "phrase word {w:?} not canonical");
            }
        }
    }

    #[test]
    fn single_word_values_are_canonical() {
        let lex = Lexicon::builtin();
        for table in [&lex.abbreviation_table, &lex.teencode_table] {
            for v in table.values() {
                if !v.contains(' ') {
                    assert!(lex.is_canonical(v), "value {v:?} not canonical");
                }
            }
        }
    }

    #[test]
    fn nsw_keys_do_not_collide_with_canonical_words() {
        // A key that is itself a standard word would make gold labels
        // ambiguous; the shipped lexicon keeps them disjoint.
        let lex = Lexicon::builtin();
        for table in [&lex.abbreviation_table, &lex.teencode_table] {
            for k in table.keys() {
                assert!(!lex.is_canonical(k), "NSW key {k:?} is canonical");
            }
        }
    }

    #[test]
    fn strip_all_removes_every_mark() {
        let lex = Lexicon::builtin();
        assert_eq!(lex.strip_all("đụng"), "dung");
        assert_eq!(lex.strip_all("đấy"), "day");
        assert!(!lex.has_mark(&lex.strip_all("người ơi")));
    }

    #[test]
    fn marked_value_in_diacritic_map_is_rejected() {
        let mut lex = Lexicon::builtin();
        lex.diacritic_map.insert('x', 'đ');
        assert!(lex.validate().is_err());
    }
}
