//! The rule attention network: per-instance reliability scoring of weak
//! sources, and their aggregation into a soft label.
//!
//! Each token position is an instance carrying the student's hidden state h,
//! the class votes of whichever heuristic rules fired, and the student's own
//! predicted distribution. A small MLP maps h into the rule-embedding space;
//! the sigmoid of its dot product with a source's embedding is that source's
//! attention weight on this instance. Aggregation blends the weighted votes
//! with a uniform distribution that soaks up the unassigned weight, so the
//! result is always a valid distribution:
//!
//!   q = (Σ_j a_j·q_j + a_S·p + a_u·u) / Z,   a_u = |R|+1 − Σ_j a_j − a_S
//!
//! with Z = |R|+1 (every component distribution sums to one, so the
//! normalizer is the total weight budget, a constant per instance — which
//! also keeps the gradients of q in the weights closed-form).
//!
//! Training is unsupervised entropy minimization on pseudo-labeled data
//! followed by supervised cross-entropy on gold data, one Adam run with a
//! warmup-then-exponential-decay learning-rate schedule spanning both phases.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, linear_backward, linear_forward, Mat};
use crate::opt::{AdamState, TensorMut};
use crate::rng;
use crate::rules::{N_SOURCES, RULE_STUDENT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RanConfig {
    /// Dimensionality of the student hidden states this network reads.
    pub d_obs: usize,
    /// Rule embedding dimensionality.
    pub d_rule: usize,
    /// Hidden width of the MLP mapping h into the rule-embedding space.
    pub hidden: usize,
    pub unsup_epochs: usize,
    pub sup_epochs: usize,
    pub batch_size: usize,
    /// Learning-rate schedule: linear warmup to `lr_max`, then exponential
    /// decay to `lr_end` by the final step of the supervised phase.
    pub lr_max: f64,
    pub lr_end: f64,
    /// Fraction of total steps spent warming up.
    pub warmup_frac: f64,
    /// Whether |R_i| in the weight budget counts the student as a rule
    /// (sensitivity alternative; default counts fired heuristic rules only,
    /// the student entering through the explicit +1).
    pub count_student_in_rule_set: bool,
}

impl Default for RanConfig {
    fn default() -> RanConfig {
        RanConfig {
            d_obs: 64,
            d_rule: 128,
            hidden: 128,
            unsup_epochs: 3,
            sup_epochs: 3,
            batch_size: 32,
            lr_max: 1e-2,
            lr_end: 1e-5,
            warmup_frac: 0.1,
            count_student_in_rule_set: false,
        }
    }
}

impl RanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_obs == 0 || self.d_rule == 0 || self.hidden == 0 {
            return Err(Error::Config("aggregation network dims must be positive".into()));
        }
        if self.lr_max <= 0.0 || self.lr_end <= 0.0 || self.lr_end > self.lr_max {
            return Err(Error::Config("need 0 < lr_end <= lr_max".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("warmup_frac must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One token position, ready for aggregation.
#[derive(Debug, Clone)]
pub struct RanInstance {
    /// Student hidden state (d_obs).
    pub h: Vec<f64>,
    /// Fired heuristic rules as (rule id, predicted class). Rule ids are
    /// 0 = regex, 1 = dictionary; the student never appears here.
    pub fired: Vec<(u8, u32)>,
    /// Student distribution over the K classes.
    pub student_p: Vec<f64>,
    /// Gold class, present for instances drawn from labeled data.
    pub gold: Option<u32>,
}

impl RanInstance {
    pub fn validate(&self, d_obs: usize) -> Result<()> {
        let k = self.student_p.len();
        if self.h.len() != d_obs {
            return Err(Error::Data(format!(
                "instance embedding has dim {}, expected {d_obs}",
                self.h.len()
            )));
        }
        let sum: f64 = self.student_p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.student_p.iter().any(|&p| p < 0.0) {
            return Err(Error::Data(format!(
                "student distribution sums to {sum}, not a distribution"
            )));
        }
        for &(rule, class) in &self.fired {
            if rule as usize >= N_SOURCES - 1 {
                return Err(Error::Data(format!("rule id {rule} is not a heuristic rule")));
            }
            if class as usize >= k {
                return Err(Error::Data(format!("rule vote {class} outside {k} classes")));
            }
        }
        if let Some(g) = self.gold {
            if g as usize >= k {
                return Err(Error::Data(format!("gold class {g} outside {k} classes")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RanParams {
    /// Source embeddings, one row per rule id (regex, dictionary, student).
    pub e: Mat,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl RanParams {
    /// Zero-valued parameters with the same shapes — a gradient buffer.
    pub fn zeros(cfg: &RanConfig) -> RanParams {
        RanParams {
            e: Mat::zeros(N_SOURCES, cfg.d_rule),
            w1: Mat::zeros(cfg.hidden, cfg.d_obs),
            b1: vec![0.0; cfg.hidden],
            w2: Mat::zeros(cfg.d_rule, cfg.hidden),
            b2: vec![0.0; cfg.d_rule],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        vec![
            TensorMut {
                name: "e".into(),
                group: 0,
                shape: vec![self.e.rows, self.e.cols],
                data: &mut self.e.data,
            },
            TensorMut {
                name: "w1".into(),
                group: 0,
                shape: vec![self.w1.rows, self.w1.cols],
                data: &mut self.w1.data,
            },
            TensorMut {
                name: "b1".into(),
                group: 0,
                shape: vec![self.b1.len()],
                data: &mut self.b1,
            },
            TensorMut {
                name: "w2".into(),
                group: 0,
                shape: vec![self.w2.rows, self.w2.cols],
                data: &mut self.w2.data,
            },
            TensorMut {
                name: "b2".into(),
                group: 0,
                shape: vec![self.b2.len()],
                data: &mut self.b2,
            },
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RanTrainStats {
    /// Mean entropy loss per instance, per unsupervised epoch.
    pub unsup_losses: Vec<f64>,
    /// Mean cross-entropy per instance, per supervised epoch.
    pub sup_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RanModel {
    pub config: RanConfig,
    pub params: RanParams,
}

enum Phase {
    Unsup,
    Sup,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl RanModel {
    pub fn init(config: RanConfig, seed: u64) -> Result<RanModel> {
        config.validate()?;
        let mut r = rng::stream(seed, "ran_init", 0);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let mut params = RanParams::zeros(&config);
        for m in [&mut params.e, &mut params.w1, &mut params.w2] {
            for x in &mut m.data {
                *x = normal.sample(&mut r);
            }
        }
        Ok(RanModel { config, params })
    }

    /// f(h): MLP into the rule-embedding space. Returns (hidden tanh
    /// activations, output) for reuse in the backward pass.
    fn mlp(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut t = vec![0.0; self.config.hidden];
        linear_forward(&self.params.w1, &self.params.b1, h, &mut t);
        for x in &mut t {
            *x = x.tanh();
        }
        let mut out = vec![0.0; self.config.d_rule];
        linear_forward(&self.params.w2, &self.params.b2, &t, &mut out);
        (t, out)
    }

    /// Attention weight of one source on one instance: σ(f(h) · e_rule).
    pub fn attention_weight(&self, h: &[f64], rule_id: u8) -> f64 {
        let (_, fh) = self.mlp(h);
        sigmoid(dot(&fh, self.params.e.row(rule_id as usize)))
    }

    /// Weight budget |R|+1 for an instance (the aggregation normalizer).
    fn budget(&self, inst: &RanInstance) -> f64 {
        (inst.fired.len() + 1 + usize::from(self.config.count_student_in_rule_set)) as f64
    }

    /// The label aggregation with explicit weights. Exposed for the
    /// reduction properties (majority vote at all-ones, uniform at
    /// all-zeros).
    pub fn aggregate_with_weights(
        &self,
        inst: &RanInstance,
        a_rules: &[f64],
        a_student: f64,
    ) -> Vec<f64> {
        let k = inst.student_p.len();
        let z = self.budget(inst);
        let a_u = z - a_rules.iter().sum::<f64>() - a_student;
        debug_assert!(a_u >= -1e-9, "uniform weight {a_u} negative");
        let a_u = a_u.max(0.0);
        let mut q = vec![a_u / k as f64; k];
        for (&(_, class), &a) in inst.fired.iter().zip(a_rules) {
            q[class as usize] += a;
        }
        axpy(&mut q, a_student, &inst.student_p);
        for x in &mut q {
            *x /= z;
        }
        q
    }

    /// Learned-weight aggregation: the teacher's soft label for an instance.
    pub fn teacher_label(&self, inst: &RanInstance) -> Vec<f64> {
        let (_, fh) = self.mlp(&inst.h);
        let a_rules: Vec<f64> = inst
            .fired
            .iter()
            .map(|&(rule, _)| sigmoid(dot(&fh, self.params.e.row(rule as usize))))
            .collect();
        let a_student = sigmoid(dot(&fh, self.params.e.row(RULE_STUDENT as usize)));
        self.aggregate_with_weights(inst, &a_rules, a_student)
    }

    /// Loss of one instance under the given phase; optionally accumulates
    /// parameter gradients.
    fn instance_loss(
        &self,
        inst: &RanInstance,
        phase: &Phase,
        grads: Option<&mut RanParams>,
    ) -> f64 {
        let k = inst.student_p.len();
        let (t, fh) = self.mlp(&inst.h);
        let n_src = inst.fired.len() + 1;
        // Source order: fired rules first, student last.
        let mut z_logits = Vec::with_capacity(n_src);
        for &(rule, _) in &inst.fired {
            z_logits.push(dot(&fh, self.params.e.row(rule as usize)));
        }
        z_logits.push(dot(&fh, self.params.e.row(RULE_STUDENT as usize)));
        let a: Vec<f64> = z_logits.iter().map(|&z| sigmoid(z)).collect();
        let q = self.aggregate_with_weights(inst, &a[..n_src - 1], a[n_src - 1]);

        let loss = match phase {
            Phase::Unsup => -q
                .iter()
                .map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 })
                .sum::<f64>(),
            Phase::Sup => {
                let gold = inst.gold.expect("supervised instance carries gold") as usize;
                -q[gold].max(1e-300).ln()
            }
        };

        let Some(grads) = grads else {
            return loss;
        };

        // dL/dq
        let dq: Vec<f64> = match phase {
            Phase::Unsup => q.iter().map(|&x| -(1.0 + x.max(1e-300).ln())).collect(),
            Phase::Sup => {
                let gold = inst.gold.unwrap() as usize;
                let mut d = vec![0.0; k];
                d[gold] = -1.0 / q[gold].max(1e-300);
                d
            }
        };
        let budget = self.budget(inst);
        let dq_sum: f64 = dq.iter().sum();
        let mean_term = dq_sum / k as f64;
        // dL/da for each source; q_k = (… + a_src · src_k + a_u · u_k)/Z with
        // a_u absorbing −a_src, so dq_k/da_src = (src_k − u_k)/Z.
        let mut dz = vec![0.0; n_src];
        for (s, &(_, class)) in inst.fired.iter().enumerate() {
            let da = (dq[class as usize] - mean_term) / budget;
            dz[s] = da * a[s] * (1.0 - a[s]);
        }
        let da_student = (dot(&dq, &inst.student_p) - mean_term) / budget;
        dz[n_src - 1] = da_student * a[n_src - 1] * (1.0 - a[n_src - 1]);

        // z_src = fh · e_src
        let mut dfh = vec![0.0; self.config.d_rule];
        for (s, &dzs) in dz.iter().enumerate() {
            if dzs == 0.0 {
                continue;
            }
            let row = if s + 1 == n_src {
                RULE_STUDENT as usize
            } else {
                inst.fired[s].0 as usize
            };
            axpy(grads.e.row_mut(row), dzs, &fh);
            axpy(&mut dfh, dzs, self.params.e.row(row));
        }
        // MLP backward.
        let mut dt = vec![0.0; self.config.hidden];
        linear_backward(&self.params.w2, &t, &dfh, &mut grads.w2, &mut grads.b2, &mut dt);
        for (x, &tv) in dt.iter_mut().zip(&t) {
            *x *= 1.0 - tv * tv;
        }
        let mut dh = vec![0.0; self.config.d_obs];
        linear_backward(&self.params.w1, &inst.h, &dt, &mut grads.w1, &mut grads.b1, &mut dh);
        loss
    }

    /// Total entropy of the aggregated labels over a batch.
    pub fn unsup_loss(&self, instances: &[RanInstance]) -> f64 {
        instances
            .iter()
            .map(|i| self.instance_loss(i, &Phase::Unsup, None))
            .sum()
    }

    /// Summed cross-entropy of the aggregated labels against gold.
    pub fn sup_loss(&self, instances: &[RanInstance]) -> f64 {
        instances
            .iter()
            .map(|i| self.instance_loss(i, &Phase::Sup, None))
            .sum()
    }

    /// `unsup_loss` that also accumulates parameter gradients into `grads`.
    pub fn unsup_loss_grad(&self, instances: &[RanInstance], grads: &mut RanParams) -> f64 {
        let mut loss = 0.0;
        for inst in instances {
            loss += self.instance_loss(inst, &Phase::Unsup, Some(grads));
        }
        loss
    }

    /// `sup_loss` that also accumulates parameter gradients into `grads`.
    pub fn sup_loss_grad(&self, instances: &[RanInstance], grads: &mut RanParams) -> f64 {
        let mut loss = 0.0;
        for inst in instances {
            loss += self.instance_loss(inst, &Phase::Sup, Some(grads));
        }
        loss
    }

    /// Unsupervised phase on pseudo-labeled instances, then supervised phase
    /// on gold instances, under one optimizer run and one learning-rate
    /// schedule (warmup to lr_max, exponential decay to lr_end).
    pub fn train(
        &mut self,
        pseudo: &[RanInstance],
        gold: &[RanInstance],
        seed: u64,
    ) -> Result<RanTrainStats> {
        for inst in pseudo.iter().chain(gold) {
            inst.validate(self.config.d_obs)?;
        }
        for inst in gold {
            if inst.gold.is_none() {
                return Err(Error::Data(
                    "supervised aggregation instance is missing its gold label".into(),
                ));
            }
        }
        let cfg = self.config.clone();
        let steps_of = |n: usize, epochs: usize| epochs * n.div_ceil(cfg.batch_size.max(1));
        let total_steps = steps_of(pseudo.len(), cfg.unsup_epochs) + steps_of(gold.len(), cfg.sup_epochs);
        let mut adam = AdamState::new();
        let mut grads = RanParams::zeros(&cfg);
        let mut step = 0u64;
        let mut stats = RanTrainStats {
            unsup_losses: Vec::new(),
            sup_losses: Vec::new(),
        };
        for (phase, data, epochs, tag) in [
            (Phase::Unsup, pseudo, cfg.unsup_epochs, "ran_unsup_epoch"),
            (Phase::Sup, gold, cfg.sup_epochs, "ran_sup_epoch"),
        ] {
            for epoch in 0..epochs {
                if data.is_empty() {
                    match phase {
                        Phase::Unsup => stats.unsup_losses.push(0.0),
                        Phase::Sup => stats.sup_losses.push(0.0),
                    }
                    continue;
                }
                let mut order: Vec<usize> = (0..data.len()).collect();
                let mut r = rng::stream(seed, tag, epoch as u64);
                order.shuffle(&mut r);
                let mut loss_sum = 0.0;
                for batch in order.chunks(cfg.batch_size) {
                    for &i in batch {
                        loss_sum += self.instance_loss(&data[i], &phase, Some(&mut grads));
                    }
                    let lr = lr_at(step, total_steps as u64, &cfg);
                    adam.step(&[lr], &mut self.params.tensors_mut(), &mut grads.tensors_mut());
                    step += 1;
                }
                let mean = loss_sum / data.len() as f64;
                match phase {
                    Phase::Unsup => stats.unsup_losses.push(mean),
                    Phase::Sup => stats.sup_losses.push(mean),
                }
            }
        }
        Ok(stats)
    }

    pub fn to_checkpoint(&self, vocab_sha256: &str) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new("ran", &self.config, vocab_sha256)?;
        let mut params = self.params.clone();
        for t in params.tensors_mut() {
            ckpt.insert(&t.name, t.shape.clone(), t.data.clone())?;
        }
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<RanModel> {
        if ckpt.kind != "ran" {
            return Err(Error::Checkpoint(format!(
                "expected a ran checkpoint, found {:?}",
                ckpt.kind
            )));
        }
        let config: RanConfig = ckpt.config_as()?;
        config.validate()?;
        let mut params = RanParams::zeros(&config);
        for t in params.tensors_mut() {
            let stored = ckpt.tensor_with_shape(&t.name, &t.shape)?;
            t.data.copy_from_slice(&stored.data);
        }
        Ok(RanModel { config, params })
    }
}

/// Learning rate at `step` of `total` steps: linear warmup to lr_max over
/// the first warmup_frac of steps, then exponential decay hitting lr_end at
/// the final step.
pub fn lr_at(step: u64, total: u64, cfg: &RanConfig) -> f64 {
    if total == 0 {
        return cfg.lr_max;
    }
    let warmup = ((total as f64 * cfg.warmup_frac).ceil() as u64).min(total.saturating_sub(1));
    if step < warmup {
        return cfg.lr_max * (step + 1) as f64 / warmup as f64;
    }
    let last = total.saturating_sub(1);
    if last <= warmup {
        return cfg.lr_max;
    }
    let frac = (step - warmup) as f64 / (last - warmup) as f64;
    cfg.lr_max * (cfg.lr_end / cfg.lr_max).powf(frac.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config() -> RanConfig {
        RanConfig {
            d_obs: 6,
            d_rule: 8,
            hidden: 5,
            unsup_epochs: 2,
            sup_epochs: 2,
            batch_size: 8,
            ..RanConfig::default()
        }
    }

    fn random_instance(k: usize, seed: u64, with_gold: bool) -> RanInstance {
        let mut r = rng::stream(seed, "ran-test-inst", 0);
        let h: Vec<f64> = (0..6).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect();
        let mut p: Vec<f64> = (0..k).map(|_| r.gen::<f64>() + 1e-3).collect();
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        let mut fired = Vec::new();
        if r.gen::<bool>() {
            fired.push((0u8, r.gen_range(0..k) as u32));
        }
        if r.gen::<bool>() {
            fired.push((1u8, r.gen_range(0..k) as u32));
        }
        RanInstance {
            h,
            fired,
            student_p: p,
            gold: with_gold.then(|| r.gen_range(0..k) as u32),
        }
    }

    #[test]
    fn hand_worked_single_rule_aggregation() {
        let model = RanModel::init(small_config(), 0).unwrap();
        let inst = RanInstance {
            h: vec![0.0; 6],
            fired: vec![(1, 0)],
            student_p: vec![0.5, 0.5],
            gold: None,
        };
        let q = model.aggregate_with_weights(&inst, &[1.0], 1.0);
        assert!((q[0] - 0.75).abs() < 1e-15, "{q:?}");
        assert!((q[1] - 0.25).abs() < 1e-15, "{q:?}");
    }

    #[test]
    fn all_ones_is_majority_vote_and_all_zeros_is_uniform() {
        let model = RanModel::init(small_config(), 1).unwrap();
        let k = 7;
        for seed in 0..50 {
            let inst = random_instance(k, seed, false);
            let ones = vec![1.0; inst.fired.len()];
            let q = model.aggregate_with_weights(&inst, &ones, 1.0);
            // Brute-force vote: sum all source distributions, renormalize.
            let mut vote = inst.student_p.clone();
            for &(_, class) in &inst.fired {
                vote[class as usize] += 1.0;
            }
            let z: f64 = vote.iter().sum();
            vote.iter_mut().for_each(|x| *x /= z);
            for (a, b) in q.iter().zip(&vote) {
                assert!((a - b).abs() <= 1e-12);
            }

            let zeros = vec![0.0; inst.fired.len()];
            let q = model.aggregate_with_weights(&inst, &zeros, 0.0);
            for &x in &q {
                assert_eq!(x, 1.0 / k as f64);
            }
        }
    }

    #[test]
    fn zero_embedding_gives_half_attention_strictly_inside_unit_interval() {
        let mut model = RanModel::init(small_config(), 2).unwrap();
        model.params.e.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
        let h: Vec<f64> = (0..6).map(|i| i as f64 / 3.0).collect();
        assert_eq!(model.attention_weight(&h, 0), 0.5);
        for rule in 0..3u8 {
            let a = model.attention_weight(&h, rule);
            assert!(a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn aggregated_labels_are_distributions_with_nonnegative_uniform_weight() {
        let model = RanModel::init(small_config(), 3).unwrap();
        for seed in 0..100 {
            let inst = random_instance(5, seed, false);
            let q = model.teacher_label(&inst);
            let sum: f64 = q.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
            assert!(q.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn raising_a_rule_weight_never_lowers_its_class() {
        let model = RanModel::init(small_config(), 4).unwrap();
        let inst = random_instance(5, 77, false);
        if inst.fired.is_empty() {
            return;
        }
        let c = inst.fired[0].1 as usize;
        let mut prev = -1.0;
        for step in 0..=10 {
            let mut a = vec![0.3; inst.fired.len()];
            a[0] = step as f64 / 10.0;
            let q = model.aggregate_with_weights(&inst, &a, 0.4);
            assert!(q[c] >= prev - 1e-12);
            prev = q[c];
        }
    }

    #[test]
    fn loss_values_on_degenerate_labels() {
        let model = RanModel::init(small_config(), 5).unwrap();
        let k = 4;
        // Student exactly one-hot, weight forced to 1 via aggregation of a
        // single agreeing rule: entropy contribution ~0.
        let mut p = vec![0.0; k];
        p[2] = 1.0;
        let inst = RanInstance {
            h: vec![0.1; 6],
            fired: vec![(0, 2)],
            student_p: p,
            gold: Some(2),
        };
        let q = model.aggregate_with_weights(&inst, &[1.0], 1.0);
        let entropy = -q
            .iter()
            .map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 })
            .sum::<f64>();
        assert!(entropy.abs() < 1e-12);

        // Uniform q: entropy ln K, supervised loss ln K.
        let inst_u = RanInstance {
            h: vec![0.1; 6],
            fired: vec![],
            student_p: vec![1.0 / k as f64; k],
            gold: Some(0),
        };
        let q = model.aggregate_with_weights(&inst_u, &[], 0.0);
        let entropy = -q.iter().map(|&x| x * x.ln()).sum::<f64>();
        assert!((entropy - (k as f64).ln()).abs() < 1e-12);
        assert!(((-q[0].ln()) - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut model = RanModel::init(small_config(), 6).unwrap();
        let instances: Vec<RanInstance> =
            (0..8).map(|s| random_instance(5, 1000 + s, true)).collect();
        for phase in [Phase::Unsup, Phase::Sup] {
            let loss_of = |m: &RanModel| -> f64 {
                instances
                    .iter()
                    .map(|i| m.instance_loss(i, &phase, None))
                    .sum()
            };
            let mut grads = RanParams::zeros(&model.config);
            for inst in &instances {
                model.instance_loss(inst, &phase, Some(&mut grads));
            }
            let eps = 1e-6;
            let n_tensors = model.params.tensors_mut().len();
            for ti in 0..n_tensors {
                let len = model.params.tensors_mut()[ti].data.len();
                for ci in [0, len / 3, len - 1] {
                    let analytic = grads.tensors_mut()[ti].data[ci];
                    let orig = model.params.tensors_mut()[ti].data[ci];
                    model.params.tensors_mut()[ti].data[ci] = orig + eps;
                    let up = loss_of(&model);
                    model.params.tensors_mut()[ti].data[ci] = orig - eps;
                    let down = loss_of(&model);
                    model.params.tensors_mut()[ti].data[ci] = orig;
                    let fd = (up - down) / (2.0 * eps);
                    let denom = fd.abs().max(analytic.abs()).max(1e-6);
                    assert!(
                        (fd - analytic).abs() / denom < 1e-3,
                        "tensor {ti} coord {ci}: analytic {analytic} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let mut cfg = small_config();
        cfg.unsup_epochs = 0;
        cfg.sup_epochs = 0;
        let mut model = RanModel::init(cfg, 7).unwrap();
        let before = model.params.clone();
        let pseudo: Vec<RanInstance> = (0..4).map(|s| random_instance(5, s, false)).collect();
        let gold: Vec<RanInstance> = (0..4).map(|s| random_instance(5, 50 + s, true)).collect();
        let stats = model.train(&pseudo, &gold, 0).unwrap();
        assert!(stats.unsup_losses.is_empty() && stats.sup_losses.is_empty());
        assert_eq!(model.params, before);
    }

    #[test]
    fn student_only_instances_blend_student_with_uniform() {
        let model = RanModel::init(small_config(), 8).unwrap();
        let k = 4;
        let inst = RanInstance {
            h: vec![0.2; 6],
            fired: vec![],
            student_p: vec![0.7, 0.1, 0.1, 0.1],
            gold: None,
        };
        let a_s = model.attention_weight(&inst.h, RULE_STUDENT);
        let q = model.teacher_label(&inst);
        for c in 0..k {
            let expect = a_s * inst.student_p[c] + (1.0 - a_s) / k as f64;
            assert!((q[c] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn training_separates_gold_classes() {
        // Supervised phase alone should push aggregated labels toward gold.
        let mut cfg = small_config();
        cfg.unsup_epochs = 0;
        cfg.sup_epochs = 30;
        cfg.lr_max = 5e-2;
        cfg.lr_end = 1e-3;
        let mut model = RanModel::init(cfg, 9).unwrap();
        let gold: Vec<RanInstance> = (0..32).map(|s| random_instance(4, 200 + s, true)).collect();
        let before: f64 = model.sup_loss(&gold);
        model.train(&[], &gold, 3).unwrap();
        let after: f64 = model.sup_loss(&gold);
        assert!(after < before, "sup loss {before} -> {after}");
    }

    #[test]
    fn schedule_hits_its_endpoints() {
        let cfg = RanConfig::default();
        let total = 200;
        let warmup = (total as f64 * cfg.warmup_frac).ceil() as u64;
        assert!((lr_at(warmup, total, &cfg) - cfg.lr_max).abs() < 1e-12);
        assert!((lr_at(total - 1, total, &cfg) - cfg.lr_end).abs() < 1e-12);
        // Monotone decay after warmup.
        let mut prev = lr_at(warmup, total, &cfg);
        for s in warmup + 1..total {
            let lr = lr_at(s, total, &cfg);
            assert!(lr <= prev);
            prev = lr;
        }
        assert!(lr_at(5, 0, &cfg) == cfg.lr_max);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = RanModel::init(small_config(), 10).unwrap();
        let path = dir.path().join("ran.ckpt.json");
        model.to_checkpoint("vhash").unwrap().save(&path).unwrap();
        let back = RanModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(model.params, back.params);
        assert_eq!(model.config, back.config);
    }

    #[test]
    fn bad_instances_are_rejected() {
        let mut model = RanModel::init(small_config(), 11).unwrap();
        let mut inst = random_instance(5, 1, true);
        inst.student_p[0] += 0.5; // no longer sums to 1
        assert!(model.train(&[inst], &[], 0).is_err());
        let missing_gold = random_instance(5, 2, false);
        assert!(model.train(&[], &[missing_gold], 0).is_err());
    }
}
