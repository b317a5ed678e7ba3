//! Corpus preparation: case folding, diacritic stripping, seeded corruption of
//! clean sentences into NSW forms, augmentation, and dataset splitting.
//!
//! The corruption direction is the inverse of normalization: a clean sentence
//! of canonical words is degraded word by word, and the degraded/clean pair
//! becomes a training example whose gold labels are exact by construction.
//! A multi-word expansion ("kinh tế" → source "kt") collapses several clean
//! positions into one pair position whose target element keeps the internal
//! space; source elements are always single words, so the pair stays aligned
//! word by word.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::rng;

/// One aligned sentence pair. `source_words` and `target_words` have equal
/// length; a target element may contain internal spaces when one source word
/// expands to several standard words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordPair {
    pub source_words: Vec<String>,
    pub target_words: Vec<String>,
}

impl WordPair {
    pub fn identity(words: &[String]) -> WordPair {
        WordPair {
            source_words: words.to_vec(),
            target_words: words.to_vec(),
        }
    }

    /// Target side flattened to plain words (internal spaces split).
    pub fn flat_target(&self) -> Vec<String> {
        self.target_words
            .iter()
            .flat_map(|w| w.split(' ').map(str::to_owned))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_words.len() != self.target_words.len() {
            return Err(Error::LengthMismatch {
                context: "word pair",
                source_len: self.source_words.len(),
                target_len: self.target_words.len(),
                predicted_len: 0,
            });
        }
        for w in self.source_words.iter().chain(&self.target_words) {
            if w.is_empty() {
                return Err(Error::Data("empty element in word pair".into()));
            }
        }
        Ok(())
    }
}

/// Lowercase a raw sentence and split it into word and punctuation tokens.
/// Maximal runs of non-alphanumeric characters become their own tokens, so
/// "ơi!!" separates into "ơi", "!!" while "…." stays one token.
pub fn case_fold_and_separate(sentence: &str) -> Vec<String> {
    let lowered: String = sentence.chars().flat_map(char::to_lowercase).collect();
    let mut out = Vec::new();
    for chunk in lowered.split_whitespace() {
        let mut current = String::new();
        let mut current_is_word = false;
        for c in chunk.chars() {
            let is_word = c.is_alphanumeric();
            if !current.is_empty() && is_word != current_is_word {
                out.push(std::mem::take(&mut current));
            }
            current.push(c);
            current_is_word = is_word;
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// True for tokens that carry no alphanumeric character (pure punctuation or
/// emoticons). Such tokens pass through corruption and normalization intact.
pub fn is_punctuation(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// Strip the diacritic from each marked character independently with
/// probability `p`. `p = 1` removes every mark.
pub fn strip_diacritics(word: &str, p: f64, lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> String {
    word.chars()
        .map(|c| match lexicon.diacritic_map.get(&c) {
            Some(&base) if p >= 1.0 || rng.gen::<f64>() < p => base,
            _ => c,
        })
        .collect()
}

/// Per-word corruption probabilities. Operators apply at most once per word,
/// in priority order: abbreviation > teencode > repeat suffix > typo >
/// diacritic removal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorruptionConfig {
    /// Chance an abbreviation fires on a word (or phrase) that has one.
    pub p_abbrev: f64,
    /// Chance a teencode spelling fires on a word that has one.
    pub p_teencode: f64,
    /// Chance the final character gets repeated ("vui" → "vuii").
    pub p_repeat_suffix: f64,
    /// Chance of a keyboard slip: adjacent swap or doubled character.
    pub p_typo: f64,
    /// Per-character probability of dropping a diacritic when no other
    /// operator fired on the word.
    pub p_diacritic_char: f64,
    /// Nominal fraction of corrupted words the mixture aims for; the defaults
    /// above are tuned so a generated corpus lands within a few points.
    pub target_nsw_fraction: f64,
    pub rng_seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            p_abbrev: 0.4,
            p_teencode: 0.4,
            p_repeat_suffix: 0.04,
            p_typo: 0.025,
            p_diacritic_char: 0.035,
            target_nsw_fraction: 0.17,
            rng_seed: 0,
        }
    }
}

/// Reverse views of the lexicon tables, built once per corpus.
pub struct Corruptor<'a> {
    lexicon: &'a Lexicon,
    config: CorruptionConfig,
    rev_abbrev: BTreeMap<String, Vec<String>>,
    rev_teencode: BTreeMap<String, Vec<String>>,
    /// Longest phrase length (in words) among abbreviation values.
    max_phrase_len: usize,
}

impl<'a> Corruptor<'a> {
    pub fn new(lexicon: &'a Lexicon, config: CorruptionConfig) -> Corruptor<'a> {
        let mut rev_abbrev: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (nsw, std_form) in &lexicon.abbreviation_table {
            rev_abbrev.entry(std_form.clone()).or_default().push(nsw.clone());
        }
        let mut rev_teencode: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (nsw, std_form) in &lexicon.teencode_table {
            rev_teencode.entry(std_form.clone()).or_default().push(nsw.clone());
        }
        let max_phrase_len = rev_abbrev
            .keys()
            .chain(rev_teencode.keys())
            .map(|k| k.split(' ').count())
            .max()
            .unwrap_or(1);
        Corruptor {
            lexicon,
            config,
            rev_abbrev,
            rev_teencode,
            max_phrase_len,
        }
    }

    /// Corrupt one clean sentence. Every non-punctuation word must be
    /// canonical. Returns the aligned pair; flattening the target side
    /// reproduces the input exactly.
    pub fn corrupt_sentence(&self, words: &[String], rng: &mut ChaCha8Rng) -> Result<WordPair> {
        for (position, w) in words.iter().enumerate() {
            if !is_punctuation(w) && !self.lexicon.is_canonical(w) {
                return Err(Error::UnknownWord {
                    word: w.clone(),
                    position,
                });
            }
        }
        let mut source = Vec::with_capacity(words.len());
        let mut target = Vec::with_capacity(words.len());
        let mut i = 0;
        while i < words.len() {
            let word = &words[i];
            if is_punctuation(word) {
                source.push(word.clone());
                target.push(word.clone());
                i += 1;
                continue;
            }
            // Multi-word expansion: the longest phrase starting here that has
            // an abbreviated form may collapse into a single source word.
            if let Some((len, nsw)) = self.try_phrase(words, i, rng) {
                source.push(nsw);
                target.push(words[i..i + len].join(" "));
                i += len;
                continue;
            }
            source.push(self.corrupt_word(word, rng));
            target.push(word.clone());
            i += 1;
        }
        Ok(WordPair {
            source_words: source,
            target_words: target,
        })
    }

    fn try_phrase(
        &self,
        words: &[String],
        i: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, String)> {
        for len in (2..=self.max_phrase_len.min(words.len() - i)).rev() {
            if words[i..i + len].iter().any(|w| is_punctuation(w)) {
                continue;
            }
            let phrase = words[i..i + len].join(" ");
            if let Some(forms) = self.rev_abbrev.get(&phrase).or(self.rev_teencode.get(&phrase)) {
                if rng.gen::<f64>() < self.config.p_abbrev {
                    return Some((len, forms.choose(rng).unwrap().clone()));
                }
            }
        }
        None
    }

    fn corrupt_word(&self, word: &str, rng: &mut ChaCha8Rng) -> String {
        let cfg = &self.config;
        if let Some(forms) = self.rev_abbrev.get(word) {
            if rng.gen::<f64>() < cfg.p_abbrev {
                return forms.choose(rng).unwrap().clone();
            }
        }
        if let Some(forms) = self.rev_teencode.get(word) {
            if rng.gen::<f64>() < cfg.p_teencode {
                return forms.choose(rng).unwrap().clone();
            }
        }
        let chars: Vec<char> = word.chars().collect();
        if chars.len() >= 2 && rng.gen::<f64>() < cfg.p_repeat_suffix {
            let extra = rng.gen_range(1..=3usize);
            let mut s = word.to_owned();
            for _ in 0..extra {
                s.push(*chars.last().unwrap());
            }
            return s;
        }
        if chars.len() >= 3 && rng.gen::<f64>() < cfg.p_typo {
            return typo(&chars, rng);
        }
        if self.lexicon.has_mark(word) {
            let stripped = strip_diacritics(word, cfg.p_diacritic_char, self.lexicon, rng);
            if stripped != word {
                return stripped;
            }
        }
        word.to_owned()
    }
}

/// Adjacent swap or doubled character; always changes the word.
fn typo(chars: &[char], rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        // Swap a pair of distinct adjacent characters if one exists.
        let candidates: Vec<usize> = (0..chars.len() - 1)
            .filter(|&i| chars[i] != chars[i + 1])
            .collect();
        if let Some(&i) = candidates.as_slice().choose(rng) {
            let mut out = chars.to_vec();
            out.swap(i, i + 1);
            return out.iter().collect();
        }
    }
    let i = rng.gen_range(0..chars.len());
    let mut out: Vec<char> = chars.to_vec();
    out.insert(i, chars[i]);
    out.iter().collect()
}

/// Sentence sampler settings for synthetic corpora.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub min_words: usize,
    pub max_words: usize,
    /// Chance each atom is a known multi-word phrase instead of a single word.
    pub p_phrase: f64,
    /// Chance of an inline punctuation token after an atom.
    pub p_punct_inline: f64,
    /// Chance the sentence ends with punctuation.
    pub p_punct_final: f64,
    /// Zipf-like exponent for word frequencies over the lexicon order.
    pub zipf_exponent: f64,
    pub corruption: CorruptionConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            min_words: 3,
            max_words: 11,
            p_phrase: 0.10,
            p_punct_inline: 0.06,
            p_punct_final: 0.35,
            zipf_exponent: 0.6,
            corruption: CorruptionConfig::default(),
        }
    }
}

const PUNCT: &[&str] = &[",", ".", "!", "?", "!!", "?!", "...", "…", ":)", ":))", "=))", ":("];

/// Draws clean sentences from the lexicon under a fixed Zipf-like word
/// distribution, so corpora of any size share the same frequency structure.
pub struct SentenceSampler<'a> {
    lexicon: &'a Lexicon,
    config: GeneratorConfig,
    cumulative: Vec<f64>,
    phrases: Vec<Vec<String>>,
}

impl<'a> SentenceSampler<'a> {
    pub fn new(lexicon: &'a Lexicon, config: GeneratorConfig) -> SentenceSampler<'a> {
        let n = lexicon.canonical_words.len();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            acc += 1.0 / ((i + 2) as f64).powf(config.zipf_exponent);
            cumulative.push(acc);
        }
        let phrases = lexicon.phrases();
        SentenceSampler {
            lexicon,
            config,
            cumulative,
            phrases,
        }
    }

    fn sample_word(&self, rng: &mut ChaCha8Rng) -> &str {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c < x);
        &self.lexicon.canonical_words[idx.min(self.cumulative.len() - 1)]
    }

    pub fn sample_clean_sentence(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        let cfg = &self.config;
        let n_atoms = rng.gen_range(cfg.min_words..=cfg.max_words);
        let mut words: Vec<String> = Vec::with_capacity(n_atoms + 2);
        for k in 0..n_atoms {
            if !self.phrases.is_empty() && rng.gen::<f64>() < cfg.p_phrase {
                words.extend(self.phrases.choose(rng).unwrap().iter().cloned());
            } else {
                words.push(self.sample_word(rng).to_owned());
            }
            if k + 1 < n_atoms && rng.gen::<f64>() < cfg.p_punct_inline {
                words.push((*PUNCT[..2].choose(rng).unwrap()).to_owned());
            }
        }
        if rng.gen::<f64>() < cfg.p_punct_final {
            words.push((*PUNCT.choose(rng).unwrap()).to_owned());
        }
        words
    }
}

/// Generate `n` corrupted/clean pairs. Sentence `i` draws from its own RNG
/// streams derived from `(seed, i)`, so corpora are reproducible and stable
/// under concurrency or resumption.
pub fn generate_corpus(
    lexicon: &Lexicon,
    config: &GeneratorConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<WordPair>> {
    let sampler = SentenceSampler::new(lexicon, config.clone());
    let corruptor = Corruptor::new(lexicon, config.corruption.clone());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut gen_rng = rng::stream(seed, "gen", i as u64);
        let clean = sampler.sample_clean_sentence(&mut gen_rng);
        let mut corrupt_rng = rng::stream(seed, "corrupt", i as u64);
        out.push(corruptor.corrupt_sentence(&clean, &mut corrupt_rng)?);
    }
    Ok(out)
}

/// Append a diacritic-stripped replica of every pair: sources are stripped
/// with per-character probability `p`, targets stay gold. Output length is
/// exactly twice the input length.
pub fn augment_with_diacritic_removal(
    pairs: &[WordPair],
    p: f64,
    lexicon: &Lexicon,
    seed: u64,
) -> Vec<WordPair> {
    let mut out = Vec::with_capacity(pairs.len() * 2);
    out.extend(pairs.iter().cloned());
    for (i, pair) in pairs.iter().enumerate() {
        let mut r = rng::stream(seed, "augment", i as u64);
        let source_words = pair
            .source_words
            .iter()
            .map(|w| strip_diacritics(w, p, lexicon, &mut r))
            .collect();
        out.push(WordPair {
            source_words,
            target_words: pair.target_words.clone(),
        });
    }
    out
}

/// Shuffle deterministically and split into train/dev/test. Sizes are within
/// one element of the exact proportions and the three parts partition the
/// input.
pub fn split_dataset(
    pairs: &[WordPair],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<WordPair>, Vec<WordPair>, Vec<WordPair>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("split_dataset"));
    }
    let (r_train, r_dev, r_test) = ratios;
    if !(r_train > 0.0 && r_dev >= 0.0 && r_test >= 0.0)
        || (r_train + r_dev + r_test - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    indices.shuffle(&mut rng::stream(seed, "split", 0));
    let n = pairs.len();
    let n_dev = (n as f64 * r_dev).round() as usize;
    let n_test = ((n as f64 * r_test).round() as usize).min(n - n_dev);
    let n_train = n - n_dev - n_test;
    let take = |range: std::ops::Range<usize>| {
        indices[range].iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>()
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_dev),
        take(n_train + n_dev..n),
    ))
}
