//! Alignment tokenization: turn a word pair into equal-length source/target
//! token sequences plus mask-count labels.
//!
//! Each word is tokenized on both sides independently. Within a word span the
//! shorter side is padded at the end — sources with `<mask>` (the model must
//! produce extra units there), targets with `<space>` (the model must emit
//! nothing there). A target element with internal spaces tokenizes as several
//! marked words, which is exactly how 1-n expansions surface at token level.
//!
//! The mask-count label of a non-mask source token is the number of `<mask>`
//! tokens immediately following it; mask positions themselves carry the
//! `IGNORE` sentinel and are excluded from the count loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_prep::WordPair;
use crate::vocab::{Vocabulary, MASK};

/// Sentinel for positions excluded from the mask-count loss.
pub const IGNORE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedExample {
    pub source_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
    /// Per-position mask counts; `IGNORE` at `<mask>` positions.
    pub n_mask: Vec<i32>,
    /// Half-open token ranges, one per word pair position; spans tile
    /// `[0, source_ids.len())`.
    pub word_spans: Vec<(usize, usize)>,
}

impl AlignedExample {
    pub fn len(&self) -> usize {
        self.source_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_ids.is_empty()
    }
}

/// Tokenize a target element, splitting internal spaces into separate marked
/// words.
pub fn tokenize_target_element(vocab: &Vocabulary, element: &str) -> Vec<u32> {
    element
        .split(' ')
        .filter(|w| !w.is_empty())
        .flat_map(|w| vocab.tokenize_word(w))
        .collect()
}

/// Align one pair. Errors with `MaskOverflow` when a span would need more
/// than `max_n_mask` mask tokens, keeping the count-label space closed.
pub fn align_pair(
    pair: &WordPair,
    vocab: &Vocabulary,
    max_n_mask: usize,
) -> Result<AlignedExample> {
    pair.validate()?;
    let mut source_ids = Vec::new();
    let mut target_ids = Vec::new();
    let mut word_spans = Vec::with_capacity(pair.source_words.len());
    for (src_word, tgt_word) in pair.source_words.iter().zip(&pair.target_words) {
        let mut s = vocab.tokenize_word(src_word);
        let mut t = tokenize_target_element(vocab, tgt_word);
        if s.len() < t.len() {
            let needed = t.len() - s.len();
            if needed > max_n_mask {
                return Err(Error::MaskOverflow {
                    needed,
                    max_n_mask,
                });
            }
            s.resize(t.len(), MASK);
        } else {
            t.resize(s.len(), crate::vocab::SPACE);
        }
        let start = source_ids.len();
        source_ids.extend_from_slice(&s);
        target_ids.extend_from_slice(&t);
        word_spans.push((start, source_ids.len()));
    }
    let n_mask = n_mask_labels(&source_ids, max_n_mask)?;
    Ok(AlignedExample {
        source_ids,
        target_ids,
        n_mask,
        word_spans,
    })
}

/// Count the `<mask>` tokens immediately following each non-mask position;
/// mask positions get `IGNORE`.
pub fn n_mask_labels(source_ids: &[u32], max_n_mask: usize) -> Result<Vec<i32>> {
    let mut labels = vec![IGNORE; source_ids.len()];
    let mut i = 0;
    while i < source_ids.len() {
        if source_ids[i] == MASK {
            i += 1;
            continue;
        }
        let mut count = 0usize;
        while i + 1 + count < source_ids.len() && source_ids[i + 1 + count] == MASK {
            count += 1;
        }
        if count > max_n_mask {
            return Err(Error::MaskOverflow {
                needed: count,
                max_n_mask,
            });
        }
        labels[i] = count as i32;
        i += 1 + count;
    }
    Ok(labels)
}

/// Rebuild a masked sequence from its unmasked ids and per-token counts —
/// the inverse of stripping masks out, and the operation inference performs
/// with predicted counts.
pub fn insert_masks(unmasked_ids: &[u32], counts: &[i32]) -> Vec<u32> {
    debug_assert_eq!(unmasked_ids.len(), counts.len());
    let mut out = Vec::with_capacity(unmasked_ids.len());
    for (&id, &c) in unmasked_ids.iter().zip(counts) {
        out.push(id);
        for _ in 0..c.max(0) {
            out.push(MASK);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::MARKER;

    fn table5_vocab() -> Vocabulary {
        Vocabulary::from_units([
            format!("{MARKER}ca"),
            format!("{MARKER}công"),
            format!("{MARKER}an"),
            format!("{MARKER}mà"),
            "k".to_string(),
            format!("{MARKER}hay"),
            format!("{MARKER}z"),
            format!("{MARKER}vậy"),
            format!("{MARKER}q"),
            "á".to_string(),
            format!("{MARKER}quá"),
        ])
    }

    fn pair() -> WordPair {
        WordPair {
            source_words: ["ca", "màk", "hay", "z", "qá"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            target_words: ["công an", "mà", "hay", "vậy", "quá"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    #[test]
    fn alignment_pads_source_with_mask_and_target_with_space() {
        let vocab = table5_vocab();
        let ex = align_pair(&pair(), &vocab, 3).unwrap();
        let render = |ids: &[u32]| -> Vec<String> {
            ids.iter().map(|&i| vocab.unit(i).to_string()).collect()
        };
        assert_eq!(
            render(&ex.source_ids),
            [
                format!("{MARKER}ca"),
                "<mask>".to_string(),
                format!("{MARKER}mà"),
                "k".to_string(),
                format!("{MARKER}hay"),
                format!("{MARKER}z"),
                format!("{MARKER}q"),
                "á".to_string(),
            ]
        );
        assert_eq!(
            render(&ex.target_ids),
            [
                format!("{MARKER}công"),
                format!("{MARKER}an"),
                format!("{MARKER}mà"),
                "<space>".to_string(),
                format!("{MARKER}hay"),
                format!("{MARKER}vậy"),
                format!("{MARKER}quá"),
                "<space>".to_string(),
            ]
        );
        assert_eq!(ex.n_mask, [1, IGNORE, 0, 0, 0, 0, 0, 0]);
        assert_eq!(ex.word_spans, [(0, 2), (2, 4), (4, 5), (5, 6), (6, 8)]);
    }

    #[test]
    fn single_unit_source_uses_compact_label_row() {
        // With ▁qá as one unit the label row matches the five-word example
        // exactly: [1, IGNORE, 0, 0, 0, 0, 0].
        let vocab = Vocabulary::from_units([
            format!("{MARKER}ca"),
            format!("{MARKER}công"),
            format!("{MARKER}an"),
            format!("{MARKER}mà"),
            "k".to_string(),
            format!("{MARKER}hay"),
            format!("{MARKER}z"),
            format!("{MARKER}vậy"),
            format!("{MARKER}qá"),
            format!("{MARKER}quá"),
        ]);
        let ex = align_pair(&pair(), &vocab, 3).unwrap();
        assert_eq!(ex.n_mask, [1, IGNORE, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn equal_lengths_and_tiling_spans() {
        let vocab = table5_vocab();
        let ex = align_pair(&pair(), &vocab, 3).unwrap();
        assert_eq!(ex.source_ids.len(), ex.target_ids.len());
        assert_eq!(ex.n_mask.len(), ex.source_ids.len());
        let mut pos = 0;
        for &(start, end) in &ex.word_spans {
            assert_eq!(start, pos);
            assert!(end > start);
            pos = end;
        }
        assert_eq!(pos, ex.source_ids.len());
    }

    #[test]
    fn target_round_trip_recovers_flat_words() {
        let vocab = table5_vocab();
        let p = pair();
        let ex = align_pair(&p, &vocab, 3).unwrap();
        assert_eq!(vocab.detokenize(&ex.target_ids).unwrap(), p.flat_target());
    }

    #[test]
    fn mask_overflow_is_reported_at_build_time() {
        // Source "a" = 1 unit, target "bcdef" = 5 units: needs 4 masks.
        let vocab = Vocabulary::from_units([
            format!("{MARKER}a"),
            format!("{MARKER}b"),
            "c".to_string(),
            "d".to_string(),
            "e".to_string(),
            "f".to_string(),
        ]);
        let p = WordPair {
            source_words: vec!["a".into()],
            target_words: vec!["bcdef".into()],
        };
        match align_pair(&p, &vocab, 3) {
            Err(Error::MaskOverflow { needed, max_n_mask }) => {
                assert_eq!(needed, 4);
                assert_eq!(max_n_mask, 3);
            }
            other => panic!("expected MaskOverflow, got {other:?}"),
        }
    }

    #[test]
    fn mask_counts_reconstruct_the_masked_sequence() {
        let vocab = table5_vocab();
        let ex = align_pair(&pair(), &vocab, 3).unwrap();
        let unmasked: Vec<u32> = ex
            .source_ids
            .iter()
            .copied()
            .filter(|&id| id != MASK)
            .collect();
        let counts: Vec<i32> = ex.n_mask.iter().copied().filter(|&c| c != IGNORE).collect();
        assert_eq!(insert_masks(&unmasked, &counts), ex.source_ids);
    }
}
