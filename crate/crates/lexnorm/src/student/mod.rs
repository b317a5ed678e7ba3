//! The trainable student: a small self-attention encoder over subword tokens
//! with two output heads — token normalization (full vocabulary) and
//! mask-count estimation (how many `<mask>` tokens follow each source token).
//!
//! The model stands in for a pretrained encoder at desk scale: it is trained
//! from scratch, in f64, with hand-written backward passes, so gradient
//! correctness is checkable against finite differences and training is
//! bit-reproducible from a seed.
//!
//! Inference (`normalize_sentence`) follows the two-pass recipe: estimate
//! mask counts on the unmasked token sequence, insert that many `<mask>`
//! tokens after each source token, run the encoder again, and read the
//! normalization off per-position argmax — restricted to units that can
//! render as text (real subwords and `<space>`).

mod net;

pub use net::{EncoderParams, LayerParams, LnParams};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::align::{insert_masks, AlignedExample};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, linear_backward, linear_forward, softmax_in_place, Mat};
use crate::opt::{AdamState, TensorMut};
use crate::rng;
use crate::vocab::{Vocabulary, MARKER, MASK, N_SPECIALS, SPACE};

pub const GROUP_EMBEDDINGS: usize = 0;
pub const GROUP_ENCODER: usize = 1;
pub const GROUP_HEADS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    /// Embedding and hidden width d_o; also the dimensionality of the
    /// per-token representation handed to the aggregation network.
    pub d_model: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Largest mask count the alignment may produce; the mask head classifies
    /// over {0..max_n_mask}.
    pub max_n_mask: usize,
    /// Per-group learning rates (embeddings / encoder / heads), defaulting to
    /// the layer-specific rates used with the pretrained models.
    pub lr_embeddings: f64,
    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub epochs: usize,
    pub fine_tune_epochs: usize,
    pub soft_epochs: usize,
    pub batch_size: usize,
}

impl Default for StudentConfig {
    fn default() -> StudentConfig {
        StudentConfig {
            d_model: 64,
            n_layers: 2,
            d_ff: 256,
            max_seq_len: 96,
            max_n_mask: 3,
            lr_embeddings: 5e-5,
            lr_encoder: 2e-5,
            lr_heads: 1e-5,
            epochs: 10,
            fine_tune_epochs: 5,
            soft_epochs: 3,
            batch_size: 32,
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("d_model and d_ff must be positive".into()));
        }
        if self.max_seq_len < 1 + self.max_n_mask {
            return Err(Error::Config(format!(
                "max_seq_len {} cannot hold even one token with {} masks",
                self.max_seq_len, self.max_n_mask
            )));
        }
        if self.lr_embeddings <= 0.0 || self.lr_encoder <= 0.0 || self.lr_heads <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    fn lrs(&self) -> [f64; 3] {
        [self.lr_embeddings, self.lr_encoder, self.lr_heads]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams {
    pub embed: Mat,
    pub pos: Mat,
    pub encoder: EncoderParams,
    pub token_w: Mat,
    pub token_b: Vec<f64>,
    pub mask_w: Mat,
    pub mask_b: Vec<f64>,
}

impl StudentParams {
    /// Zero-valued parameters with the same shapes — a gradient buffer.
    pub fn zeros(cfg: &StudentConfig, vocab_size: usize) -> StudentParams {
        StudentParams {
            embed: Mat::zeros(vocab_size, cfg.d_model),
            pos: Mat::zeros(cfg.max_seq_len, cfg.d_model),
            encoder: EncoderParams::zeros(cfg.n_layers, cfg.d_model, cfg.d_ff),
            token_w: Mat::zeros(vocab_size, cfg.d_model),
            token_b: vec![0.0; vocab_size],
            mask_w: Mat::zeros(cfg.max_n_mask + 1, cfg.d_model),
            mask_b: vec![0.0; cfg.max_n_mask + 1],
        }
    }

    /// Flat, ordered view of every parameter tensor. The order is stable and
    /// shared by the optimizer, gradient buffers, and checkpoints.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut ts = Vec::new();
        ts.push(TensorMut {
            name: "embed".into(),
            group: GROUP_EMBEDDINGS,
            shape: vec![self.embed.rows, self.embed.cols],
            data: &mut self.embed.data,
        });
        ts.push(TensorMut {
            name: "pos".into(),
            group: GROUP_EMBEDDINGS,
            shape: vec![self.pos.rows, self.pos.cols],
            data: &mut self.pos.data,
        });
        for (i, layer) in self.encoder.layers.iter_mut().enumerate() {
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.ln1.gamma"),
                group: GROUP_ENCODER,
                shape: vec![layer.ln1.gamma.len()],
                data: &mut layer.ln1.gamma,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.ln1.beta"),
                group: GROUP_ENCODER,
                shape: vec![layer.ln1.beta.len()],
                data: &mut layer.ln1.beta,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.wq"),
                group: GROUP_ENCODER,
                shape: vec![layer.wq.rows, layer.wq.cols],
                data: &mut layer.wq.data,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.bq"),
                group: GROUP_ENCODER,
                shape: vec![layer.bq.len()],
                data: &mut layer.bq,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.wk"),
                group: GROUP_ENCODER,
                shape: vec![layer.wk.rows, layer.wk.cols],
                data: &mut layer.wk.data,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.bk"),
                group: GROUP_ENCODER,
                shape: vec![layer.bk.len()],
                data: &mut layer.bk,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.wv"),
                group: GROUP_ENCODER,
                shape: vec![layer.wv.rows, layer.wv.cols],
                data: &mut layer.wv.data,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.bv"),
                group: GROUP_ENCODER,
                shape: vec![layer.bv.len()],
                data: &mut layer.bv,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.wo"),
                group: GROUP_ENCODER,
                shape: vec![layer.wo.rows, layer.wo.cols],
                data: &mut layer.wo.data,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.bo"),
                group: GROUP_ENCODER,
                shape: vec![layer.bo.len()],
                data: &mut layer.bo,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.ln2.gamma"),
                group: GROUP_ENCODER,
                shape: vec![layer.ln2.gamma.len()],
                data: &mut layer.ln2.gamma,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.ln2.beta"),
                group: GROUP_ENCODER,
                shape: vec![layer.ln2.beta.len()],
                data: &mut layer.ln2.beta,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.w1"),
                group: GROUP_ENCODER,
                shape: vec![layer.w1.rows, layer.w1.cols],
                data: &mut layer.w1.data,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.b1"),
                group: GROUP_ENCODER,
                shape: vec![layer.b1.len()],
                data: &mut layer.b1,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.w2"),
                group: GROUP_ENCODER,
                shape: vec![layer.w2.rows, layer.w2.cols],
                data: &mut layer.w2.data,
            });
            ts.push(TensorMut {
                name: format!("encoder.layer{i}.b2"),
                group: GROUP_ENCODER,
                shape: vec![layer.b2.len()],
                data: &mut layer.b2,
            });
        }
        ts.push(TensorMut {
            name: "encoder.final_ln.gamma".into(),
            group: GROUP_ENCODER,
            shape: vec![self.encoder.final_ln.gamma.len()],
            data: &mut self.encoder.final_ln.gamma,
        });
        ts.push(TensorMut {
            name: "encoder.final_ln.beta".into(),
            group: GROUP_ENCODER,
            shape: vec![self.encoder.final_ln.beta.len()],
            data: &mut self.encoder.final_ln.beta,
        });
        ts.push(TensorMut {
            name: "token_w".into(),
            group: GROUP_HEADS,
            shape: vec![self.token_w.rows, self.token_w.cols],
            data: &mut self.token_w.data,
        });
        ts.push(TensorMut {
            name: "token_b".into(),
            group: GROUP_HEADS,
            shape: vec![self.token_b.len()],
            data: &mut self.token_b,
        });
        ts.push(TensorMut {
            name: "mask_w".into(),
            group: GROUP_HEADS,
            shape: vec![self.mask_w.rows, self.mask_w.cols],
            data: &mut self.mask_w.data,
        });
        ts.push(TensorMut {
            name: "mask_b".into(),
            group: GROUP_HEADS,
            shape: vec![self.mask_b.len()],
            data: &mut self.mask_b,
        });
        ts
    }
}

/// A sentence with per-position soft labels over the vocabulary, as produced
/// by the aggregation network.
#[derive(Debug, Clone)]
pub struct SoftExample {
    pub ids: Vec<u32>,
    /// One row per position, each a distribution over the vocabulary.
    pub q: Mat,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub dev_token_accuracy: Option<f64>,
}

/// Everything `forward` computes for one sentence, kept for the backward
/// pass.
pub struct SentenceCache {
    pub ids: Vec<u32>,
    enc: net::EncoderCache,
    pub token_logits: Mat,
    pub mask_logits: Mat,
}

impl SentenceCache {
    /// Final hidden states, one row per position.
    pub fn hidden(&self) -> &Mat {
        &self.enc.final_ln.out
    }
}

/// An unlabeled sentence prepared for pseudo-labeling: mask counts estimated,
/// masks inserted, and word spans tracked in the masked coordinate system.
#[derive(Debug, Clone)]
pub struct MaskedSentence {
    pub ids: Vec<u32>,
    /// Estimated mask count per unmasked source token.
    pub counts: Vec<i32>,
    /// Per source word: half-open span of positions in `ids`.
    pub word_spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct StudentModel {
    pub config: StudentConfig,
    pub vocab_sha256: String,
    pub params: StudentParams,
}

impl StudentModel {
    /// Seeded initialization. All weights are drawn N(0, 0.02); the `<space>`
    /// embedding row is then redrawn per coordinate from the empirical
    /// mean/std of the other rows — the vocabulary-extension recipe applied
    /// at init time.
    pub fn init(config: StudentConfig, vocab: &Vocabulary, seed: u64) -> Result<StudentModel> {
        config.validate()?;
        let v = vocab.len();
        let mut r = rng::stream(seed, "student_init", 0);
        let normal = Normal::new(0.0, net::INIT_STD).unwrap();
        let mut params = StudentParams::zeros(&config, v);
        params.embed = Mat::from_fn(v, config.d_model, |_, _| normal.sample(&mut r));
        params.pos = Mat::from_fn(config.max_seq_len, config.d_model, |_, _| normal.sample(&mut r));
        params.encoder = EncoderParams::init(config.n_layers, config.d_model, config.d_ff, &mut r);
        params.token_w = Mat::from_fn(v, config.d_model, |_, _| normal.sample(&mut r));
        params.mask_w =
            Mat::from_fn(config.max_n_mask + 1, config.d_model, |_, _| normal.sample(&mut r));

        // Redraw the <space> row from the population statistics of the rest.
        let space = SPACE as usize;
        for c in 0..config.d_model {
            let mut mean = 0.0;
            let mut count = 0.0;
            for row in 0..v {
                if row != space {
                    mean += params.embed.row(row)[c];
                    count += 1.0;
                }
            }
            mean /= count;
            let mut var = 0.0;
            for row in 0..v {
                if row != space {
                    let d = params.embed.row(row)[c] - mean;
                    var += d * d;
                }
            }
            var /= count;
            let coord = Normal::new(mean, var.sqrt().max(1e-12)).unwrap();
            params.embed.row_mut(space)[c] = coord.sample(&mut r);
        }

        Ok(StudentModel {
            config,
            vocab_sha256: vocab.sha256(),
            params,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.params.embed.rows
    }

    fn grads_like(&self) -> StudentParams {
        StudentParams::zeros(&self.config, self.vocab_size())
    }

    pub fn forward(&self, ids: &[u32]) -> Result<SentenceCache> {
        let l = ids.len();
        if l > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: l,
                max: self.config.max_seq_len,
            });
        }
        let d = self.config.d_model;
        let mut x0 = Mat::zeros(l, d);
        for (i, &id) in ids.iter().enumerate() {
            debug_assert!((id as usize) < self.vocab_size());
            let row = x0.row_mut(i);
            row.copy_from_slice(self.params.embed.row(id as usize));
            axpy(row, 1.0, self.params.pos.row(i));
        }
        let enc = net::encoder_forward(&self.params.encoder, &x0);
        let h = &enc.final_ln.out;
        let v = self.vocab_size();
        let k1 = self.config.max_n_mask + 1;
        let mut token_logits = Mat::zeros(l, v);
        let mut mask_logits = Mat::zeros(l, k1);
        for i in 0..l {
            linear_forward(&self.params.token_w, &self.params.token_b, h.row(i), token_logits.row_mut(i));
            linear_forward(&self.params.mask_w, &self.params.mask_b, h.row(i), mask_logits.row_mut(i));
        }
        Ok(SentenceCache {
            ids: ids.to_vec(),
            enc,
            token_logits,
            mask_logits,
        })
    }

    fn backward(
        &self,
        cache: &SentenceCache,
        d_token_logits: &Mat,
        d_mask_logits: &Mat,
        grads: &mut StudentParams,
    ) {
        let l = cache.ids.len();
        let d = self.config.d_model;
        let h = &cache.enc.final_ln.out;
        let mut dh = Mat::zeros(l, d);
        for i in 0..l {
            linear_backward(
                &self.params.token_w,
                h.row(i),
                d_token_logits.row(i),
                &mut grads.token_w,
                &mut grads.token_b,
                dh.row_mut(i),
            );
            linear_backward(
                &self.params.mask_w,
                h.row(i),
                d_mask_logits.row(i),
                &mut grads.mask_w,
                &mut grads.mask_b,
                dh.row_mut(i),
            );
        }
        let dx0 = net::encoder_backward(&self.params.encoder, &cache.enc, &dh, &mut grads.encoder);
        for (i, &id) in cache.ids.iter().enumerate() {
            axpy(grads.embed.row_mut(id as usize), 1.0, dx0.row(i));
            axpy(grads.pos.row_mut(i), 1.0, dx0.row(i));
        }
    }

    /// Summed token + mask-count cross-entropy for one aligned example.
    /// Returns (loss, token positions). Pass gradient buffers to also
    /// accumulate parameter gradients.
    ///
    /// The token loss runs on the gold-masked sequence (predicting the
    /// aligned target at every position, mask slots included). The
    /// mask-count loss runs on the unmasked view of the same sentence — the
    /// sequence the model will actually see in the first inference pass —
    /// with one label per source token (the non-IGNORE labels, repositioned).
    pub fn supervised_example(
        &self,
        ex: &AlignedExample,
        mut grads: Option<&mut StudentParams>,
    ) -> Result<(f64, usize)> {
        let v = self.vocab_size();
        let k1 = self.config.max_n_mask + 1;
        let want_grads = grads.is_some();
        let mut loss = 0.0;

        // Pass 1: masked sequence, token-normalization head.
        let cache = self.forward(&ex.source_ids)?;
        let l = ex.source_ids.len();
        let mut d_token = Mat::zeros(if want_grads { l } else { 0 }, v);
        let mut probs = vec![0.0; v];
        for i in 0..l {
            let logits = cache.token_logits.row(i);
            probs.copy_from_slice(logits);
            let lse = softmax_in_place(&mut probs);
            let y = ex.target_ids[i] as usize;
            loss += lse - logits[y];
            if want_grads {
                let row = d_token.row_mut(i);
                row.copy_from_slice(&probs);
                row[y] -= 1.0;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            let d_mask = Mat::zeros(l, k1);
            self.backward(&cache, &d_token, &d_mask, g);
        }

        // Pass 2: unmasked view, mask-count head.
        let mut unmasked = Vec::with_capacity(l);
        let mut counts = Vec::with_capacity(l);
        for (i, &id) in ex.source_ids.iter().enumerate() {
            if id != MASK {
                unmasked.push(id);
                debug_assert!(ex.n_mask[i] >= 0);
                counts.push(ex.n_mask[i]);
            }
        }
        let cache2 = self.forward(&unmasked)?;
        let l2 = unmasked.len();
        let mut d_mask = Mat::zeros(if want_grads { l2 } else { 0 }, k1);
        let mut mprobs = vec![0.0; k1];
        for i in 0..l2 {
            let mlogits = cache2.mask_logits.row(i);
            mprobs.copy_from_slice(mlogits);
            let mlse = softmax_in_place(&mut mprobs);
            let m = counts[i] as usize;
            loss += mlse - mlogits[m];
            if want_grads {
                let row = d_mask.row_mut(i);
                row.copy_from_slice(&mprobs);
                row[m] -= 1.0;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            let d_token2 = Mat::zeros(l2, v);
            self.backward(&cache2, &d_token2, &d_mask, g);
        }
        Ok((loss, l))
    }

    /// Soft-label cross-entropy −Σ_i Σ_j q_ij log p_ij for one sentence.
    pub fn soft_example(
        &self,
        ex: &SoftExample,
        mut grads: Option<&mut StudentParams>,
    ) -> Result<(f64, usize)> {
        let cache = self.forward(&ex.ids)?;
        let l = ex.ids.len();
        let v = self.vocab_size();
        let want_grads = grads.is_some();
        let mut d_token = Mat::zeros(if want_grads { l } else { 0 }, v);
        let d_mask = Mat::zeros(if want_grads { l } else { 0 }, self.config.max_n_mask + 1);
        let mut loss = 0.0;
        let mut probs = vec![0.0; v];
        for i in 0..l {
            let logits = cache.token_logits.row(i);
            let q = ex.q.row(i);
            probs.copy_from_slice(logits);
            let lse = softmax_in_place(&mut probs);
            // Σ_j q_j = 1, so −Σ_j q_j log p_j = lse − q·logits.
            loss += lse - dot(q, logits);
            if want_grads {
                let row = d_token.row_mut(i);
                for j in 0..v {
                    row[j] = probs[j] - q[j];
                }
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            self.backward(&cache, &d_token, &d_mask, g);
        }
        Ok((loss, l))
    }

    /// Step 1 / Step 5 training: token + mask-count cross-entropy on aligned
    /// gold examples, Adam with per-group learning rates, order reshuffled
    /// each epoch from the seed.
    pub fn train_supervised(
        &mut self,
        train: &[AlignedExample],
        dev: Option<&[AlignedExample]>,
        epochs: usize,
        seed: u64,
    ) -> Result<Vec<EpochStats>> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("train_supervised"));
        }
        let lrs = self.config.lrs();
        let mut adam = AdamState::new();
        let mut grads = self.grads_like();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut stats = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut r = rng::stream(seed, "student_epoch", epoch as u64);
            order.shuffle(&mut r);
            let mut loss_sum = 0.0;
            let mut tok = 0usize;
            for batch in order.chunks(self.config.batch_size) {
                for &i in batch {
                    let (l, n) = self.supervised_example(&train[i], Some(&mut grads))?;
                    loss_sum += l;
                    tok += n;
                }
                adam.step(&lrs, &mut self.params.tensors_mut(), &mut grads.tensors_mut());
            }
            let (dev_loss, dev_acc) = match dev {
                Some(d) => {
                    let (l, a) = self.eval_token_level(d)?;
                    (Some(l), Some(a))
                }
                None => (None, None),
            };
            stats.push(EpochStats {
                train_loss: loss_sum / tok.max(1) as f64,
                dev_loss,
                dev_token_accuracy: dev_acc,
            });
        }
        Ok(stats)
    }

    /// Identical mechanics to `train_supervised`, with the fine-tuning epoch
    /// count from the config.
    pub fn fine_tune(
        &mut self,
        train: &[AlignedExample],
        dev: Option<&[AlignedExample]>,
        seed: u64,
    ) -> Result<Vec<EpochStats>> {
        self.train_supervised(train, dev, self.config.fine_tune_epochs, seed)
    }

    /// Step 4 training: cross-entropy against the aggregation network's soft
    /// labels. The whole batch is validated before any parameter moves, so a
    /// bad soft label leaves the model untouched.
    pub fn train_on_soft_labels(
        &mut self,
        data: &[SoftExample],
        epochs: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::EmptyDataset("train_on_soft_labels"));
        }
        let v = self.vocab_size();
        let mut row_index = 0usize;
        for ex in data {
            if ex.q.rows != ex.ids.len() || ex.q.cols != v {
                return Err(Error::Data(format!(
                    "soft-label matrix is {}x{}, expected {}x{v}",
                    ex.q.rows,
                    ex.q.cols,
                    ex.ids.len()
                )));
            }
            for i in 0..ex.q.rows {
                let sum: f64 = ex.q.row(i).iter().sum();
                if (sum - 1.0).abs() > 1e-6 || ex.q.row(i).iter().any(|&x| x < 0.0) {
                    return Err(Error::InvalidSoftLabel {
                        row: row_index,
                        sum,
                    });
                }
                row_index += 1;
            }
        }
        let lrs = self.config.lrs();
        let mut adam = AdamState::new();
        let mut grads = self.grads_like();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut losses = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut r = rng::stream(seed, "student_soft_epoch", epoch as u64);
            order.shuffle(&mut r);
            let mut loss_sum = 0.0;
            let mut tok = 0usize;
            for batch in order.chunks(self.config.batch_size) {
                for &i in batch {
                    let (l, n) = self.soft_example(&data[i], Some(&mut grads))?;
                    loss_sum += l;
                    tok += n;
                }
                adam.step(&lrs, &mut self.params.tensors_mut(), &mut grads.tensors_mut());
            }
            losses.push(loss_sum / tok.max(1) as f64);
        }
        Ok(losses)
    }

    /// Mean token cross-entropy and argmax accuracy on aligned examples.
    pub fn eval_token_level(&self, data: &[AlignedExample]) -> Result<(f64, f64)> {
        let mut loss = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for ex in data {
            let cache = self.forward(&ex.source_ids)?;
            for i in 0..ex.source_ids.len() {
                let logits = cache.token_logits.row(i);
                let mut probs = logits.to_vec();
                let lse = softmax_in_place(&mut probs);
                let y = ex.target_ids[i] as usize;
                loss += lse - logits[y];
                let argmax = (0..logits.len())
                    .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
                    .unwrap();
                if argmax == y {
                    correct += 1;
                }
                total += 1;
            }
        }
        Ok((loss / total.max(1) as f64, correct as f64 / total.max(1) as f64))
    }

    /// Per-position distribution p_θ(y|x) and final hidden states for one
    /// (typically masked) token sequence — the student's contribution to the
    /// aggregation network.
    pub fn predict(&self, ids: &[u32]) -> Result<(Mat, Mat)> {
        let cache = self.forward(ids)?;
        let mut probs = cache.token_logits.clone();
        for i in 0..probs.rows {
            softmax_in_place(probs.row_mut(i));
        }
        Ok((cache.enc.final_ln.out.clone(), probs))
    }

    /// Argmax of the mask-count head per position.
    pub fn estimate_masks(&self, ids: &[u32]) -> Result<Vec<i32>> {
        let cache = self.forward(ids)?;
        Ok((0..ids.len())
            .map(|i| {
                let row = cache.mask_logits.row(i);
                (0..row.len())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .unwrap() as i32
            })
            .collect())
    }

    /// How many source tokens fit in one model window once every token may be
    /// followed by `max_n_mask` masks.
    pub fn window_capacity(&self) -> usize {
        self.config.max_seq_len / (1 + self.config.max_n_mask)
    }

    /// Tokenize, estimate mask counts, and insert masks for a word sequence
    /// that fits a single model window. Returns None when it does not fit;
    /// the caller decides whether to chunk (inference does) or skip
    /// (pseudo-label sampling does).
    pub fn prepare_masked(&self, vocab: &Vocabulary, words: &[String]) -> Option<MaskedSentence> {
        if words.is_empty() {
            return None;
        }
        let subs: Vec<Vec<u32>> = words.iter().map(|w| vocab.tokenize_word(w)).collect();
        let total: usize = subs.iter().map(Vec::len).sum();
        if total > self.window_capacity() {
            return None;
        }
        let unmasked: Vec<u32> = subs.iter().flatten().copied().collect();
        let counts = self
            .estimate_masks(&unmasked)
            .expect("window capacity bounds the sequence length");
        let ids = insert_masks(&unmasked, &counts);
        let mut word_spans = Vec::with_capacity(words.len());
        let mut m = 0usize;
        let mut t = 0usize;
        for s in &subs {
            let start = m;
            for _ in 0..s.len() {
                m += 1 + counts[t] as usize;
                t += 1;
            }
            word_spans.push((start, m));
        }
        Some(MaskedSentence {
            ids,
            counts,
            word_spans,
        })
    }

    fn renderable_argmax(&self, logits: &[f64]) -> u32 {
        let mut best = SPACE;
        let mut best_v = f64::NEG_INFINITY;
        for (id, &v) in logits.iter().enumerate() {
            let renderable = id == SPACE as usize || id >= N_SPECIALS;
            if renderable && v > best_v {
                best_v = v;
                best = id as u32;
            }
        }
        best
    }

    /// Normalize a word sequence end to end. Total: long inputs are chunked
    /// at word boundaries to fit the model window, a word too large for any
    /// window passes through unchanged, and a span predicted as all
    /// `<space>` falls back to its source word. The output always has
    /// exactly one element per input word (an element may contain spaces
    /// when one word normalizes to several).
    pub fn normalize_sentence(&self, vocab: &Vocabulary, words: &[String]) -> Vec<String> {
        let cap = self.window_capacity();
        let mut out = Vec::with_capacity(words.len());
        let mut i = 0;
        while i < words.len() {
            let mut j = i;
            let mut total = 0usize;
            while j < words.len() {
                let n = vocab.tokenize_word(&words[j]).len();
                if n > cap || total + n > cap {
                    break;
                }
                total += n;
                j += 1;
            }
            if j == i {
                out.push(words[i].clone());
                i += 1;
                continue;
            }
            let chunk = &words[i..j];
            let ms = self
                .prepare_masked(vocab, chunk)
                .expect("chunk sized to fit the window");
            let cache = self
                .forward(&ms.ids)
                .expect("masked chunk fits max_seq_len by construction");
            let pred: Vec<u32> = (0..ms.ids.len())
                .map(|p| self.renderable_argmax(cache.token_logits.row(p)))
                .collect();
            for (w, &(a, b)) in chunk.iter().zip(&ms.word_spans) {
                out.push(render_span(vocab, &pred[a..b], w));
            }
            i = j;
        }
        out
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new("student", &self.config, &self.vocab_sha256)?;
        let mut params = self.params.clone();
        for t in params.tensors_mut() {
            ckpt.insert(&t.name, t.shape.clone(), t.data.clone())?;
        }
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, vocab: &Vocabulary) -> Result<StudentModel> {
        if ckpt.kind != "student" {
            return Err(Error::Checkpoint(format!(
                "expected a student checkpoint, found {:?}",
                ckpt.kind
            )));
        }
        if ckpt.vocab_sha256 != vocab.sha256() {
            return Err(Error::Checkpoint(
                "checkpoint was trained against a different vocabulary".into(),
            ));
        }
        let config: StudentConfig = ckpt.config_as()?;
        config.validate()?;
        let mut params = StudentParams::zeros(&config, vocab.len());
        let mut n = 0;
        for t in params.tensors_mut() {
            let stored = ckpt.tensor_with_shape(&t.name, &t.shape)?;
            t.data.copy_from_slice(&stored.data);
            n += 1;
        }
        if n != ckpt.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {n}",
                ckpt.tensors.len()
            )));
        }
        Ok(StudentModel {
            config,
            vocab_sha256: ckpt.vocab_sha256.clone(),
            params,
        })
    }
}

fn render_span(vocab: &Vocabulary, pred: &[u32], fallback: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    for &id in pred {
        if id == SPACE || (id as usize) < N_SPECIALS {
            continue;
        }
        let unit = vocab.unit(id);
        match unit.strip_prefix(MARKER) {
            Some(s) => words.push(s.to_string()),
            None => match words.last_mut() {
                Some(last) => last.push_str(unit),
                None => words.push(unit.to_string()),
            },
        }
    }
    if words.is_empty() {
        fallback.to_string()
    } else {
        words.join(" ")
    }
}
