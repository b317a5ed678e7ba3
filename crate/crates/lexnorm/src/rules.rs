//! Weak labelers: a 1-1 dictionary and anchored regex rewrites.
//!
//! A rule fires on a whole word and proposes a replacement (possibly the word
//! itself); words it has nothing to say about get an abstention, which
//! shrinks the fired-rule set the aggregation network sees at that token.
//! Rule predictions are precomputed per word before training starts and stay
//! fixed for the whole run.
//!
//! Rule ids are stable across the system: 0 = regex, 1 = dictionary,
//! 2 = student. The student is not a rule here — the id exists so the
//! aggregation network can embed all three sources in one table.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::rng;
use crate::vocab::{Vocabulary, SPACE};

pub const RULE_REGEX: u8 = 0;
pub const RULE_DICT: u8 = 1;
pub const RULE_STUDENT: u8 = 2;
pub const N_SOURCES: usize = 3;

/// One word-level weak vote. `prediction = None` is an abstention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakPrediction {
    pub rule_id: u8,
    pub prediction: Option<String>,
}

/// Strictly 1-1 dictionary: NSW word → standard word.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DictionaryRule {
    pub entries: BTreeMap<String, String>,
}

impl DictionaryRule {
    /// Build from a raw mapping, rejecting 1-n entries (values with internal
    /// whitespace). Rejections come back as warnings, not errors: the rest of
    /// the dictionary is still usable.
    pub fn from_map(map: BTreeMap<String, String>) -> (DictionaryRule, Vec<String>) {
        let mut entries = BTreeMap::new();
        let mut warnings = Vec::new();
        for (k, v) in map {
            if v.trim().is_empty() || k.is_empty() {
                warnings.push(format!("dictionary entry {k:?} -> {v:?} is empty; dropped"));
            } else if v.contains(char::is_whitespace) {
                warnings.push(format!(
                    "dictionary entry {k:?} -> {v:?} is 1-n; only 1-1 mappings are kept"
                ));
            } else {
                entries.insert(k, v);
            }
        }
        (DictionaryRule { entries }, warnings)
    }

    pub fn load(path: &Path) -> Result<(DictionaryRule, Vec<String>)> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(DictionaryRule::from_map(map))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::atomic_write(path, &serde_json::to_vec_pretty(&self.entries)?)
    }

    pub fn apply(&self, word: &str) -> WeakPrediction {
        WeakPrediction {
            rule_id: RULE_DICT,
            prediction: self.entries.get(word).cloned(),
        }
    }
}

/// Serialized form of one regex rewrite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegexRuleSpec {
    pub pattern: String,
    pub replacement: String,
}

/// Ordered, full-word-anchored regex rewrites; the first matching pattern
/// wins. All patterns are matched in a single `RegexSet` pass per word.
#[derive(Debug, Clone)]
pub struct RegexRule {
    specs: Vec<RegexRuleSpec>,
    set: RegexSet,
    compiled: Vec<Regex>,
}

impl RegexRule {
    pub fn new(specs: Vec<RegexRuleSpec>) -> Result<RegexRule> {
        // Wrapping enforces the full-word anchoring the contract requires,
        // whether or not the author anchored the pattern.
        let anchored: Vec<String> = specs
            .iter()
            .map(|s| format!("^(?:{})$", s.pattern))
            .collect();
        let mut compiled = Vec::with_capacity(specs.len());
        for (spec, pat) in specs.iter().zip(&anchored) {
            compiled.push(Regex::new(pat).map_err(|e| Error::InvalidPattern {
                pattern: spec.pattern.clone(),
                reason: e.to_string(),
            })?);
        }
        let set = RegexSet::new(&anchored).map_err(|e| Error::InvalidPattern {
            pattern: "<set>".into(),
            reason: e.to_string(),
        })?;
        Ok(RegexRule {
            specs,
            set,
            compiled,
        })
    }

    pub fn load(path: &Path) -> Result<RegexRule> {
        let specs: Vec<RegexRuleSpec> =
            serde_json::from_str(&std::fs::read_to_string(path)?)?;
        RegexRule::new(specs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::atomic_write(path, &serde_json::to_vec_pretty(&self.specs)?)
    }

    pub fn apply(&self, word: &str) -> WeakPrediction {
        let prediction = self
            .set
            .matches(word)
            .iter()
            .next()
            .map(|i| {
                self.compiled[i]
                    .replace(word, self.specs[i].replacement.as_str())
                    .into_owned()
            });
        WeakPrediction {
            rule_id: RULE_REGEX,
            prediction,
        }
    }
}

/// Default shipped ruleset: collapse a trailing run of one repeated letter
/// ("đẹppp" → "đẹp", "vuiiii" → "vui"). The regex engine has no
/// backreferences, so the run letter is enumerated: one pattern per letter
/// that can appear in the corpus.
pub fn default_regex_rules(lexicon: &Lexicon) -> Result<RegexRule> {
    let mut letters: Vec<char> = ('a'..='z').collect();
    letters.extend(lexicon.diacritic_map.keys().copied());
    let specs = letters
        .into_iter()
        .map(|c| RegexRuleSpec {
            pattern: format!("(\\p{{L}}*?{c}){c}+"),
            replacement: "${1}".into(),
        })
        .collect();
    RegexRule::new(specs)
}

/// Seed a dictionary from the lexicon's own 1-1 table entries: a deterministic
/// `coverage` fraction of them, with an `error_rate` fraction remapped to a
/// wrong canonical word. Partial coverage and controlled noise are the point —
/// the aggregation network has to learn how far to trust it.
pub fn seed_dictionary(
    lexicon: &Lexicon,
    coverage: f64,
    error_rate: f64,
    seed: u64,
) -> DictionaryRule {
    let mut one_to_one: BTreeMap<String, String> = BTreeMap::new();
    for table in [&lexicon.teencode_table, &lexicon.abbreviation_table] {
        for (k, v) in table {
            if !v.contains(' ') {
                one_to_one.insert(k.clone(), v.clone());
            }
        }
    }
    let mut keys: Vec<String> = one_to_one.keys().cloned().collect();
    let mut r = rng::stream(seed, "seed_dictionary", 0);
    keys.shuffle(&mut r);
    let take = ((keys.len() as f64) * coverage.clamp(0.0, 1.0)).round() as usize;
    let mut entries = BTreeMap::new();
    for k in keys.into_iter().take(take) {
        let truth = one_to_one[&k].clone();
        let value = if r.gen::<f64>() < error_rate {
            // A wrong but plausible value: some other canonical word.
            loop {
                let w = lexicon.canonical_words.choose(&mut r).unwrap();
                if *w != truth {
                    break w.clone();
                }
            }
        } else {
            truth
        };
        entries.insert(k, value);
    }
    DictionaryRule { entries }
}

/// Both heuristic rules, applied together.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub regex: RegexRule,
    pub dictionary: DictionaryRule,
}

/// Precomputed word-level rule predictions for one word position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordRules {
    pub regex: Option<String>,
    pub dict: Option<String>,
}

impl RuleSet {
    pub fn word_rules(&self, word: &str) -> WordRules {
        WordRules {
            regex: self.regex.apply(word).prediction,
            dict: self.dictionary.apply(word).prediction,
        }
    }
}

/// Fixed rule columns for a whole corpus, one `WordRules` per word position.
pub fn precompute_rule_columns(
    sentences: &[Vec<String>],
    rules: &RuleSet,
) -> Vec<Vec<WordRules>> {
    sentences
        .iter()
        .map(|s| s.iter().map(|w| rules.word_rules(w)).collect())
        .collect()
}

/// Project a word-level prediction onto a token span: tokenize the predicted
/// word (or words) and pad with `<space>` to the span length. The span length
/// already includes any `<mask>` padding, so a prediction that needs more
/// room than the span offers cannot be represented there.
pub fn expand_to_subwords(
    prediction: &str,
    span_len: usize,
    vocab: &Vocabulary,
) -> Result<Vec<u32>> {
    let mut ids = crate::align::tokenize_target_element(vocab, prediction);
    if ids.len() > span_len {
        return Err(Error::SpanOverflow {
            word: prediction.to_string(),
            needed: ids.len(),
            available: span_len,
        });
    }
    ids.resize(span_len, SPACE);
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::MARKER;

    #[test]
    fn dictionary_rejects_one_to_n_with_warning() {
        let mut map = BTreeMap::new();
        map.insert("thoai".to_string(), "thôi".to_string());
        map.insert("cty".to_string(), "công ty".to_string());
        let (dict, warnings) = DictionaryRule::from_map(map);
        assert_eq!(dict.entries.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("cty"));
        assert_eq!(dict.apply("thoai").prediction.as_deref(), Some("thôi"));
        assert_eq!(dict.apply("cty").prediction, None);
        assert_eq!(dict.apply("thoai").rule_id, RULE_DICT);
    }

    #[test]
    fn default_regex_collapses_trailing_repeats() {
        let rule = default_regex_rules(&Lexicon::builtin()).unwrap();
        assert_eq!(rule.apply("đẹppp").prediction.as_deref(), Some("đẹp"));
        assert_eq!(rule.apply("đẹpp").prediction.as_deref(), Some("đẹp"));
        assert_eq!(rule.apply("vuiiii").prediction.as_deref(), Some("vui"));
        assert_eq!(rule.apply("quááá").prediction.as_deref(), Some("quá"));
        assert_eq!(rule.apply("hay").prediction, None, "no repeat, abstain");
        assert_eq!(rule.apply("!!").prediction, None, "punctuation, abstain");
        assert_eq!(rule.apply("vui").prediction, None);
        assert_eq!(rule.apply("đẹppp").rule_id, RULE_REGEX);
    }

    #[test]
    fn first_matching_pattern_wins() {
        let rule = RegexRule::new(vec![
            RegexRuleSpec {
                pattern: "ab+".into(),
                replacement: "first".into(),
            },
            RegexRuleSpec {
                pattern: "a.+".into(),
                replacement: "second".into(),
            },
        ])
        .unwrap();
        assert_eq!(rule.apply("abb").prediction.as_deref(), Some("first"));
        assert_eq!(rule.apply("axx").prediction.as_deref(), Some("second"));
    }

    #[test]
    fn patterns_anchor_the_full_word() {
        let rule = RegexRule::new(vec![RegexRuleSpec {
            pattern: "a+".into(),
            replacement: "x".into(),
        }])
        .unwrap();
        assert_eq!(rule.apply("aaa").prediction.as_deref(), Some("x"));
        assert_eq!(rule.apply("baab").prediction, None);
    }

    #[test]
    fn invalid_pattern_is_rejected_at_load() {
        match RegexRule::new(vec![RegexRuleSpec {
            pattern: "(".into(),
            replacement: "x".into(),
        }]) {
            Err(Error::InvalidPattern { pattern, .. }) => assert_eq!(pattern, "("),
            other => panic!("expected InvalidPattern, got {other:?}"),
        }
    }

    #[test]
    fn seeded_dictionary_has_requested_coverage() {
        let lexicon = Lexicon::builtin();
        let full = seed_dictionary(&lexicon, 1.0, 0.0, 0);
        let partial = seed_dictionary(&lexicon, 0.4, 0.0, 0);
        assert!(!full.entries.is_empty());
        let expect = ((full.entries.len() as f64) * 0.4).round() as usize;
        assert_eq!(partial.entries.len(), expect);
        // Zero error rate: every kept entry agrees with the lexicon.
        for (k, v) in &partial.entries {
            let truth = lexicon
                .abbreviation_table
                .get(k)
                .or_else(|| lexicon.teencode_table.get(k))
                .unwrap();
            assert_eq!(v, truth);
        }
        // Same seed, same dictionary.
        let again = seed_dictionary(&lexicon, 0.4, 0.0, 0);
        assert_eq!(partial.entries, again.entries);
    }

    #[test]
    fn seeded_dictionary_error_rate_corrupts_values() {
        let lexicon = Lexicon::builtin();
        let noisy = seed_dictionary(&lexicon, 1.0, 1.0, 3);
        for (k, v) in &noisy.entries {
            let truth = lexicon
                .abbreviation_table
                .get(k)
                .or_else(|| lexicon.teencode_table.get(k))
                .unwrap();
            assert_ne!(v, truth, "entry {k:?} should have been corrupted");
        }
    }

    #[test]
    fn expand_pads_with_space_and_reports_overflow() {
        let vocab = Vocabulary::from_units([
            format!("{MARKER}kinh"),
            format!("{MARKER}tế"),
            format!("{MARKER}kt"),
        ]);
        let ids = expand_to_subwords("kinh tế", 3, &vocab).unwrap();
        assert_eq!(
            ids,
            [
                vocab.id(&format!("{MARKER}kinh")).unwrap(),
                vocab.id(&format!("{MARKER}tế")).unwrap(),
                SPACE,
            ]
        );
        match expand_to_subwords("kinh tế", 1, &vocab) {
            Err(Error::SpanOverflow { needed, available, .. }) => {
                assert_eq!(needed, 2);
                assert_eq!(available, 1);
            }
            other => panic!("expected SpanOverflow, got {other:?}"),
        }
    }

    #[test]
    fn rule_columns_match_table_example() {
        let lexicon = Lexicon::builtin();
        let (dict, _) = DictionaryRule::from_map(
            [("thoai".to_string(), "thôi".to_string())].into_iter().collect(),
        );
        let rules = RuleSet {
            regex: default_regex_rules(&lexicon).unwrap(),
            dictionary: dict,
        };
        let sentences = vec![vec![
            "thoai".to_string(),
            "vuiii".to_string(),
            "nha".to_string(),
        ]];
        let columns = precompute_rule_columns(&sentences, &rules);
        assert_eq!(columns[0][0].dict.as_deref(), Some("thôi"));
        assert_eq!(columns[0][0].regex, None);
        assert_eq!(columns[0][1].regex.as_deref(), Some("vui"));
        assert_eq!(columns[0][1].dict, None);
        assert_eq!(columns[0][2], WordRules::default());
    }
}
