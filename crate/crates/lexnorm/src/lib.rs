//! Weakly supervised lexical normalization for Vietnamese social media text,
//! framed as token-level sequence labeling.
//!
//! The pipeline has three trainable pieces and a rule layer:
//!
//! * [`text_prep`] — corpus preparation: case folding, diacritic stripping,
//!   seeded corruption of clean sentences into non-standard words (NSW), and
//!   dataset splitting. A synthetic corpus generated here carries its own gold
//!   normalizations, so every downstream stage can be evaluated exactly.
//! * [`vocab`] / [`align`] — subword vocabulary training and the alignment
//!   tokenization that turns a (source, target) word pair into equal-length
//!   token sequences, padding the source with `<mask>` and the target with
//!   `<space>`, plus per-token mask-count labels.
//! * [`rules`] — weak labelers: a 1-1 dictionary and anchored regex rewrites.
//!   Rules fire on whole words and abstain when they have nothing to say.
//! * [`student`] — a small self-attention encoder with a normalization head
//!   and a mask-count head, trained from scratch.
//! * [`ran`] — the rule-attention aggregation network that scores each rule's
//!   reliability per instance and blends rule votes, the student distribution,
//!   and a uniform prior into a soft label.
//! * [`orchestrator`] — the training regimes: supervised student baseline,
//!   classic self-training, and the weakly supervised loop (sample unlabeled
//!   data, train the aggregation network, retrain the student on its soft
//!   labels, fine-tune on gold).
//! * [`metrics`] — token-level precision/recall/F1 over words needing
//!   normalization, integrity over words that must stay unchanged, accuracy.
//!
//! Everything is deterministic given a root seed: each stochastic stage
//! derives its own RNG stream from `(seed, stage tag, index)`, so runs can be
//! killed and resumed from the last completed iteration bit-identically.

pub mod align;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod lexicon;
pub mod linalg;
pub mod metrics;
pub mod opt;
pub mod orchestrator;
pub mod ran;
pub mod rng;
pub mod rules;
pub mod student;
pub mod text_prep;
pub mod vocab;

pub use error::{Error, Result};
