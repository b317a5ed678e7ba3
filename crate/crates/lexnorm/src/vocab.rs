//! Subword vocabulary: greedy frequency-based merges over a marked character
//! alphabet, greedy longest-match tokenization, and detokenization.
//!
//! Word-initial units carry a leading `▁` marker (so "ca" tokenizes to
//! `▁ca` and "màk" to `▁mà`, `k`); detokenization finds word boundaries by
//! that marker. Four special ids lead the table: `<pad>`, `<unk>`, `<mask>`,
//! `<space>`. `<mask>` pads short sources during alignment and `<space>` pads
//! short targets; both participate in the label space, `<unk>` only absorbs
//! characters never seen in training.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MARKER: char = '\u{2581}'; // ▁

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const SPACE: u32 = 3;
pub const N_SPECIALS: usize = 4;
const SPECIAL_UNITS: [&str; N_SPECIALS] = ["<pad>", "<unk>", "<mask>", "<space>"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Every unit string in id order; the first four are the specials.
    units: Vec<String>,
    #[serde(skip)]
    unit_to_id: HashMap<String, u32>,
    #[serde(skip)]
    max_unit_chars: usize,
}

impl Vocabulary {
    fn build_index(units: Vec<String>) -> Vocabulary {
        let unit_to_id = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as u32))
            .collect();
        let max_unit_chars = units
            .iter()
            .skip(N_SPECIALS)
            .map(|u| u.chars().count())
            .max()
            .unwrap_or(1);
        Vocabulary {
            units,
            unit_to_id,
            max_unit_chars,
        }
    }

    /// Assemble a vocabulary from explicit non-special units (tests and
    /// fixtures); specials are prepended automatically.
    pub fn from_units<I: IntoIterator<Item = S>, S: Into<String>>(units: I) -> Vocabulary {
        let mut all: Vec<String> = SPECIAL_UNITS.iter().map(|s| s.to_string()).collect();
        all.extend(units.into_iter().map(Into::into));
        Vocabulary::build_index(all)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn unit(&self, id: u32) -> &str {
        &self.units[id as usize]
    }

    pub fn id(&self, unit: &str) -> Option<u32> {
        self.unit_to_id.get(unit).copied()
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < N_SPECIALS
    }

    /// Greedy frequency-based merge training. The alphabet seeds both plain
    /// and word-initial variants of every character seen, so any string over
    /// seen characters tokenizes without `<unk>`. Merging stops when the
    /// vocabulary reaches `target_size` total units (specials + alphabet +
    /// merges) or no adjacent pair occurs at least twice.
    pub fn train(corpus: &[Vec<String>], target_size: usize) -> Result<Vocabulary> {
        // Unique marked words with counts, in first-seen order for
        // deterministic merges regardless of map internals.
        let mut word_counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        let mut alphabet: BTreeMap<String, ()> = BTreeMap::new();
        for sentence in corpus {
            for word in sentence {
                let chars: Vec<char> = word.chars().collect();
                if chars.is_empty() {
                    continue;
                }
                let mut symbols: Vec<String> = Vec::with_capacity(chars.len());
                for (i, c) in chars.iter().enumerate() {
                    let sym = if i == 0 {
                        format!("{MARKER}{c}")
                    } else {
                        c.to_string()
                    };
                    symbols.push(sym);
                }
                for c in &chars {
                    alphabet.insert(c.to_string(), ());
                    alphabet.insert(format!("{MARKER}{c}"), ());
                }
                *word_counts.entry(symbols).or_insert(0) += 1;
            }
        }
        if word_counts.is_empty() {
            return Err(Error::EmptyDataset("train_subword_vocab"));
        }
        let minimum = N_SPECIALS + alphabet.len();
        if target_size < minimum {
            return Err(Error::TargetTooSmall {
                target: target_size,
                minimum,
            });
        }

        let mut units: Vec<String> = SPECIAL_UNITS.iter().map(|s| s.to_string()).collect();
        units.extend(alphabet.keys().cloned());

        let mut words: Vec<(Vec<String>, u64)> = word_counts.into_iter().collect();
        while units.len() < target_size {
            let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
            for (symbols, count) in &words {
                for w in symbols.windows(2) {
                    *pair_counts
                        .entry((w[0].clone(), w[1].clone()))
                        .or_insert(0) += count;
                }
            }
            // Highest count wins; ties go to the lexicographically smallest
            // pair (BTreeMap iteration order makes `>` keep the first seen).
            let best = pair_counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)));
            let Some(((a, b), &count)) = best else { break };
            if count < 2 {
                break;
            }
            let (a, b) = (a.clone(), b.clone());
            let merged = format!("{a}{b}");
            for (symbols, _) in words.iter_mut() {
                let mut i = 0;
                while i + 1 < symbols.len() {
                    if symbols[i] == a && symbols[i + 1] == b {
                        symbols[i] = merged.clone();
                        symbols.remove(i + 1);
                    } else {
                        i += 1;
                    }
                }
            }
            units.push(merged);
        }
        Ok(Vocabulary::build_index(units))
    }

    /// Greedy longest-match tokenization of one word. Total: a character with
    /// no unit (never seen in training) becomes `<unk>`.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        let marked: String = format!("{MARKER}{word}");
        let chars: Vec<char> = marked.chars().collect();
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let mut matched = None;
            let max_len = self.max_unit_chars.min(chars.len() - pos);
            for len in (1..=max_len).rev() {
                let candidate: String = chars[pos..pos + len].iter().collect();
                if let Some(id) = self.id(&candidate) {
                    matched = Some((id, len));
                    break;
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => {
                    // The marker char itself is always in a trained alphabet;
                    // reaching here means an unseen character.
                    ids.push(UNK);
                    pos += 1;
                }
            }
        }
        ids
    }

    /// Render a unit without its word-initial marker.
    pub fn unit_text(&self, id: u32) -> &str {
        let u = self.unit(id);
        u.strip_prefix(MARKER).unwrap_or(u)
    }

    fn starts_word(&self, id: u32) -> bool {
        self.unit(id).starts_with(MARKER)
    }

    /// Strict detokenization of a target-side id sequence into words.
    /// `<space>` and `<pad>` are dropped; the sequence must not contain
    /// `<mask>`, and the first rendered unit must be word-initial.
    pub fn detokenize(&self, ids: &[u32]) -> Result<Vec<String>> {
        let mut words: Vec<String> = Vec::new();
        for (index, &id) in ids.iter().enumerate() {
            if id == SPACE || id == PAD {
                continue;
            }
            if id == MASK {
                return Err(Error::Data(format!(
                    "<mask> at token {index} cannot be detokenized"
                )));
            }
            if self.starts_word(id) || id == UNK {
                words.push(self.unit_text(id).to_string());
            } else {
                match words.last_mut() {
                    Some(w) => w.push_str(self.unit_text(id)),
                    None => {
                        return Err(Error::DanglingContinuation {
                            unit: self.unit(id).to_string(),
                            index,
                        })
                    }
                }
            }
        }
        Ok(words)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::atomic_write(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let v: Vocabulary = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if v.units.len() < N_SPECIALS
            || v.units[..N_SPECIALS]
                .iter()
                .zip(SPECIAL_UNITS)
                .any(|(a, b)| a != b)
        {
            return Err(Error::Data(format!(
                "vocabulary file {} lacks the reserved special tokens",
                path.display()
            )));
        }
        Ok(Vocabulary::build_index(v.units))
    }

    /// Stable content hash, recorded in checkpoints so a model is never
    /// restored against the wrong vocabulary.
    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for u in &self.units {
            hasher.update(u.as_bytes());
            hasher.update([0]);
        }
        format!("{:x}", hasher.finalize())
    }
}
