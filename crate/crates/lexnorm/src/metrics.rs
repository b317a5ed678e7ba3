//! Word-level evaluation: precision/recall/F1 over the words that need
//! normalization, integrity over the words that do not, and micro token
//! accuracy.
//!
//! Everything is computed from one bag of counts so corpus aggregation is a
//! plain sum (micro averaging throughout). Counting happens at word level,
//! after detokenization — subword units are an internal representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw counts for one sentence or a whole corpus (sums of sentences).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    /// Positions where source ≠ target (the word needed normalization).
    pub need_norm: u64,
    /// Positions where the prediction changed the source word.
    pub pred_need_norm: u64,
    /// need_norm positions where the prediction equals the target.
    pub tp_need_norm: u64,
    /// Positions where source == target (nothing to do).
    pub need_no_norm: u64,
    /// need_no_norm positions the prediction left unchanged.
    pub tp_need_no_norm: u64,
    /// Total word positions.
    pub n_token: u64,
    /// Positions where the prediction equals the target.
    pub tp_token: u64,
}

impl EvalCounts {
    pub fn add(&mut self, other: &EvalCounts) {
        self.need_norm += other.need_norm;
        self.pred_need_norm += other.pred_need_norm;
        self.tp_need_norm += other.tp_need_norm;
        self.need_no_norm += other.need_no_norm;
        self.tp_need_no_norm += other.tp_need_no_norm;
        self.n_token += other.n_token;
        self.tp_token += other.tp_token;
    }
}

/// Count one sentence, word by word. The three lists must align position for
/// position; that is the caller's contract (normalization preserves word
/// count).
pub fn count_sentence(
    source_words: &[String],
    target_words: &[String],
    predicted_words: &[String],
) -> Result<EvalCounts> {
    if source_words.len() != target_words.len()
        || source_words.len() != predicted_words.len()
    {
        return Err(Error::LengthMismatch {
            context: "count_sentence",
            source_len: source_words.len(),
            target_len: target_words.len(),
            predicted_len: predicted_words.len(),
        });
    }
    let mut c = EvalCounts::default();
    for ((s, t), p) in source_words
        .iter()
        .zip(target_words)
        .zip(predicted_words)
    {
        c.n_token += 1;
        if p == t {
            c.tp_token += 1;
        }
        if p != s {
            c.pred_need_norm += 1;
        }
        if s != t {
            c.need_norm += 1;
            if p == t {
                c.tp_need_norm += 1;
            }
        } else {
            c.need_no_norm += 1;
            if p == s {
                c.tp_need_no_norm += 1;
            }
        }
    }
    Ok(c)
}

/// Recall, precision, F1 over words needing normalization.
///
/// Zero-denominator conventions (the usual IR ones): precision is 1 when
/// nothing was predicted and nothing was needed, 0 when nothing was predicted
/// but something was needed; recall is 1 when nothing was needed; F1 is 0
/// when precision + recall is 0.
pub fn precision_recall_f1(counts: &EvalCounts) -> (f64, f64, f64) {
    let tp = counts.tp_need_norm as f64;
    let recall = if counts.need_norm == 0 {
        1.0
    } else {
        tp / counts.need_norm as f64
    };
    let precision = if counts.pred_need_norm == 0 {
        if counts.need_norm == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp / counts.pred_need_norm as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Fraction of words not needing normalization that were left unchanged.
/// 1.0 when there was nothing to preserve.
pub fn integrity(counts: &EvalCounts) -> f64 {
    if counts.need_no_norm == 0 {
        1.0
    } else {
        counts.tp_need_no_norm as f64 / counts.need_no_norm as f64
    }
}

/// Micro token accuracy: total correct words over total words.
pub fn accuracy(counts: &EvalCounts) -> f64 {
    if counts.n_token == 0 {
        1.0
    } else {
        counts.tp_token as f64 / counts.n_token as f64
    }
}

/// All five metric values plus the raw counts they came from — the payload of
/// a metrics report file and of per-iteration logging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub integrity: f64,
    pub accuracy: f64,
    pub counts: EvalCounts,
}

impl MetricsReport {
    pub fn from_counts(counts: EvalCounts) -> MetricsReport {
        let (precision, recall, f1) = precision_recall_f1(&counts);
        MetricsReport {
            precision,
            recall,
            f1,
            integrity: integrity(&counts),
            accuracy: accuracy(&counts),
            counts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &[&str]) -> Vec<String> {
        s.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn hand_counted_sentence() {
        let source = words(&["t", "ko", "đi"]);
        let target = words(&["tao", "không", "đi"]);
        let predicted = words(&["tao", "không", "đi"]);
        let c = count_sentence(&source, &target, &predicted).unwrap();
        assert_eq!(c.need_norm, 2);
        assert_eq!(c.tp_need_norm, 2);
        assert_eq!(c.need_no_norm, 1);
        assert_eq!(c.tp_need_no_norm, 1);
        assert_eq!(c.n_token, 3);
        assert_eq!(c.tp_token, 3);
        assert_eq!(c.pred_need_norm, 2);
    }

    #[test]
    fn identity_predictor() {
        let source = words(&["t", "ko", "đi"]);
        let target = words(&["tao", "không", "đi"]);
        let c = count_sentence(&source, &target, &source).unwrap();
        assert_eq!(c.tp_need_norm, 0);
        assert_eq!(c.tp_need_no_norm, c.need_no_norm);
        assert_eq!(integrity(&c), 1.0);
        let (_, recall, _) = precision_recall_f1(&c);
        assert_eq!(recall, 0.0);
    }

    #[test]
    fn oracle_predictor_scores_ones() {
        let source = words(&["t", "ko", "đi", "!"]);
        let target = words(&["tao", "không", "đi", "!"]);
        let c = count_sentence(&source, &target, &target).unwrap();
        let report = MetricsReport::from_counts(c);
        assert_eq!(
            (
                report.precision,
                report.recall,
                report.f1,
                report.integrity,
                report.accuracy
            ),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn worked_ratio_example() {
        let counts = EvalCounts {
            need_norm: 10,
            pred_need_norm: 12,
            tp_need_norm: 8,
            ..Default::default()
        };
        let (precision, recall, f1) = precision_recall_f1(&counts);
        assert_eq!(recall, 0.8);
        assert!((precision - 0.6667).abs() < 5e-5);
        assert!((f1 - 0.7273).abs() < 5e-5);
    }

    #[test]
    fn accuracy_is_micro() {
        let mut total = EvalCounts::default();
        total.add(
            &count_sentence(
                &words(&["a", "b", "c", "d"]),
                &words(&["a", "b", "c", "x"]),
                &words(&["a", "b", "c", "d"]),
            )
            .unwrap(),
        );
        assert_eq!(accuracy(&total), 0.75);
        total.add(&count_sentence(&words(&["e"]), &words(&["e"]), &words(&["e"])).unwrap());
        assert_eq!(accuracy(&total), 0.8);
    }

    #[test]
    fn zero_denominator_conventions() {
        // Nothing needed, nothing predicted: perfect by convention.
        let clean = count_sentence(
            &words(&["a", "b"]),
            &words(&["a", "b"]),
            &words(&["a", "b"]),
        )
        .unwrap();
        let (p, r, f1) = precision_recall_f1(&clean);
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
        // Something needed, nothing predicted.
        let missed = count_sentence(&words(&["ko"]), &words(&["không"]), &words(&["ko"]))
            .unwrap();
        let (p, r, f1) = precision_recall_f1(&missed);
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
        // Empty counts: integrity and accuracy default to 1.
        let empty = EvalCounts::default();
        assert_eq!(integrity(&empty), 1.0);
        assert_eq!(accuracy(&empty), 1.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let err = count_sentence(&words(&["a"]), &words(&["a", "b"]), &words(&["a"]))
            .unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn partition_invariant() {
        let source = words(&["t", "ko", "đi", "nha", "!"]);
        let target = words(&["tao", "không", "đi", "nha", "!"]);
        let predicted = words(&["tao", "ko", "đi", "nhà", "!"]);
        let c = count_sentence(&source, &target, &predicted).unwrap();
        assert_eq!(c.need_norm + c.need_no_norm, c.n_token);
        assert!(c.tp_need_norm <= c.need_norm.min(c.pred_need_norm));
        assert!(c.tp_need_no_norm <= c.need_no_norm);
        assert!(c.tp_token <= c.n_token);
    }
}
