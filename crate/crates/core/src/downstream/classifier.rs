//! Linear intent and slot heads over mean-pooled token embeddings.
//!
//! `h_j` is the embedding of token `j` and `h_0` their mean. The intent head
//! is `softmax(W_i h_0 + b_i)` and the slot head `softmax(W_s h_j + b_s)`.
//! When the embeddings come from a compressed source the discrete codes are
//! fixed, and the codebook vectors can optionally be finetuned with the heads.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::dataset::{ParsingDataset, ParsingExample};
use crate::compressed::CompressedEmbedding;
use crate::embedding_io::EmbeddingTable;
use crate::error::{Error, Result};
use crate::learner::relax::{argmax_first, softmax_in_place};
use crate::optim::{adam_update, warmup_linear_lr, AdamConfig, Moments};
use crate::seeded_rng;

#[derive(Debug, Clone)]
pub enum EmbeddingSource {
    Dense(EmbeddingTable),
    Compressed { ce: CompressedEmbedding, trainable: bool },
}

impl EmbeddingSource {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingSource::Dense(t) => t.dim(),
            EmbeddingSource::Compressed { ce, .. } => ce.dim(),
        }
    }

    fn vocab(&self) -> &[String] {
        match self {
            EmbeddingSource::Dense(t) => t.vocab(),
            EmbeddingSource::Compressed { ce, .. } => ce.vocab(),
        }
    }

    pub fn trainable_codebooks(&self) -> bool {
        matches!(self, EmbeddingSource::Compressed { trainable: true, .. })
    }
}

/// Head weights plus, for a compressed source, the working codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `intents x D`.
    pub intent_w: Vec<f64>,
    pub intent_b: Vec<f64>,
    /// `slot_labels x D`.
    pub slot_w: Vec<f64>,
    pub slot_b: Vec<f64>,
    /// `M x K x D`; empty for a dense source.
    pub codebooks: Vec<f64>,
}

impl HeadParams {
    fn zeros_like(&self) -> Self {
        Self {
            intent_w: vec![0.0; self.intent_w.len()],
            intent_b: vec![0.0; self.intent_b.len()],
            slot_w: vec![0.0; self.slot_w.len()],
            slot_b: vec![0.0; self.slot_b.len()],
            codebooks: vec![0.0; self.codebooks.len()],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 5] {
        [&self.intent_w, &self.intent_b, &self.slot_w, &self.slot_b, &self.codebooks]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.intent_w,
            &mut self.intent_b,
            &mut self.slot_w,
            &mut self.slot_b,
            &mut self.codebooks,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

// Weight decay applies to the head matrices only.
const DECAYED: [bool; 5] = [true, false, true, false, false];

#[derive(Debug, Clone)]
pub struct JointClassifier {
    source: EmbeddingSource,
    index: HashMap<String, usize>,
    unk: Option<usize>,
    n_intents: usize,
    n_slots: usize,
    pub params: HeadParams,
    pub moments: [Moments; 5],
    pub step: u64,
}

impl JointClassifier {
    /// Zero-initialised heads. `unk` names a vocabulary token used for
    /// out-of-vocabulary query tokens.
    pub fn new(source: EmbeddingSource, n_intents: usize, n_slots: usize, unk: Option<&str>) -> Result<Self> {
        if n_intents == 0 || n_slots == 0 {
            return Err(Error::config("labels", "need at least one intent and one slot label"));
        }
        let index: HashMap<String, usize> =
            source.vocab().iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let unk = match unk {
            Some(u) => Some(
                *index
                    .get(u)
                    .ok_or_else(|| Error::config("unk", format!("`{u}` is not in the embedding vocabulary")))?,
            ),
            None => None,
        };
        let d = source.dim();
        let codebooks = match &source {
            EmbeddingSource::Dense(_) => Vec::new(),
            EmbeddingSource::Compressed { ce, .. } => ce.codebooks().iter().map(|&v| v as f64).collect(),
        };
        let params = HeadParams {
            intent_w: vec![0.0; n_intents * d],
            intent_b: vec![0.0; n_intents],
            slot_w: vec![0.0; n_slots * d],
            slot_b: vec![0.0; n_slots],
            codebooks,
        };
        let moments = params.tensors().map(|t| Moments::zeros(t.len()));
        Ok(Self {
            source,
            index,
            unk,
            n_intents,
            n_slots,
            params,
            moments,
            step: 0,
        })
    }

    pub fn for_dataset(source: EmbeddingSource, dataset: &ParsingDataset, unk: Option<&str>) -> Result<Self> {
        Self::new(source, dataset.intents.len(), dataset.slot_labels.len(), unk)
    }

    pub fn source(&self) -> &EmbeddingSource {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn n_intents(&self) -> usize {
        self.n_intents
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    fn token_id(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .or(self.unk)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    fn embed(&self, id: usize) -> Vec<f64> {
        match &self.source {
            EmbeddingSource::Dense(t) => t.row(id).iter().map(|&v| v as f64).collect(),
            EmbeddingSource::Compressed { ce, .. } => {
                let d = ce.dim();
                let mut out = vec![0.0; d];
                for (i, &c) in ce.token_codes(id).iter().enumerate() {
                    let off = (i * ce.k() + c as usize) * d;
                    for (o, &b) in out.iter_mut().zip(&self.params.codebooks[off..off + d]) {
                        *o += b;
                    }
                }
                out
            }
        }
    }

    fn check_example(&self, ex: &ParsingExample) -> Result<()> {
        if ex.tokens.is_empty() || ex.slots.len() != ex.tokens.len() || ex.slot_mask.len() != ex.tokens.len() {
            return Err(Error::Shape("example tokens, slots and mask must be nonempty and equally long".into()));
        }
        if ex.intent >= self.n_intents {
            return Err(Error::IndexOutOfRange {
                index: ex.intent,
                len: self.n_intents,
            });
        }
        if let Some(&s) = ex.slots.iter().find(|&&s| s >= self.n_slots) {
            return Err(Error::IndexOutOfRange { index: s, len: self.n_slots });
        }
        Ok(())
    }

    /// `(h_0, [h_j])` for one example.
    pub fn featurize(&self, ex: &ParsingExample) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if ex.tokens.is_empty() {
            return Err(Error::Shape("example has no tokens".into()));
        }
        let h = ex
            .tokens
            .iter()
            .map(|t| Ok(self.embed(self.token_id(t)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut h0 = vec![0.0; self.dim()];
        for hj in &h {
            for (a, b) in h0.iter_mut().zip(hj) {
                *a += b;
            }
        }
        let n = h.len() as f64;
        h0.iter_mut().for_each(|v| *v /= n);
        Ok((h0, h))
    }

    fn logits(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let d = x.len();
        b.iter()
            .enumerate()
            .map(|(c, &bias)| bias + w[c * d..(c + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Predicted intent and per-token slot labels.
    pub fn predict(&self, ex: &ParsingExample) -> Result<(usize, Vec<usize>)> {
        let (h0, h) = self.featurize(ex)?;
        let p = &self.params;
        let intent = argmax_first(&Self::logits(&p.intent_w, &p.intent_b, &h0));
        let slots = h.iter().map(|hj| argmax_first(&Self::logits(&p.slot_w, &p.slot_b, hj))).collect();
        Ok((intent, slots))
    }

    pub fn joint_loss(&self, batch: &[&ParsingExample], label_smoothing: f64) -> Result<f64> {
        Ok(self.loss_impl(batch, label_smoothing, false)?.0)
    }

    /// Mean over the batch of intent cross-entropy plus the summed slot
    /// cross-entropy at masked positions, with gradients for every tensor.
    /// Codebook gradients are zero unless the source is trainable.
    pub fn joint_loss_and_grads(&self, batch: &[&ParsingExample], label_smoothing: f64) -> Result<(f64, HeadParams)> {
        let (loss, grads) = self.loss_impl(batch, label_smoothing, true)?;
        Ok((loss, grads.expect("requested")))
    }

    fn loss_impl(
        &self,
        batch: &[&ParsingExample],
        smoothing: f64,
        want_grads: bool,
    ) -> Result<(f64, Option<HeadParams>)> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::config("label-smoothing", "must lie in [0, 1)"));
        }
        let d = self.dim();
        let p = &self.params;
        let mut grads = want_grads.then(|| p.zeros_like());
        let scale = 1.0 / batch.len() as f64;
        let train_cb = self.source.trainable_codebooks();
        let mut total = 0.0;

        // Cross-entropy against a smoothed one-hot target; returns the loss
        // and leaves `probs - target` in `z`.
        let xent = |z: &mut Vec<f64>, label: usize| -> f64 {
            let c = z.len() as f64;
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let mut loss = 0.0;
            for (i, v) in z.iter().enumerate() {
                let q = smoothing / c + if i == label { 1.0 - smoothing } else { 0.0 };
                loss -= q * (v - lse);
            }
            softmax_in_place(z);
            for (i, v) in z.iter_mut().enumerate() {
                *v -= smoothing / c + if i == label { 1.0 - smoothing } else { 0.0 };
            }
            loss
        };

        for (row, ex) in batch.iter().enumerate() {
            self.check_example(ex)?;
            let (h0, h) = self.featurize(ex)?;
            let mut zi = Self::logits(&p.intent_w, &p.intent_b, &h0);
            let mut loss = xent(&mut zi, ex.intent);
            let mut slot_deltas = Vec::with_capacity(h.len());
            for (j, hj) in h.iter().enumerate() {
                if !ex.slot_mask[j] {
                    slot_deltas.push(None);
                    continue;
                }
                let mut zs = Self::logits(&p.slot_w, &p.slot_b, hj);
                loss += xent(&mut zs, ex.slots[j]);
                slot_deltas.push(Some(zs));
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { row });
            }
            total += loss;

            let Some(g) = grads.as_mut() else { continue };
            let mut dh0 = vec![0.0; d];
            for (c, &delta) in zi.iter().enumerate() {
                let delta = delta * scale;
                g.intent_b[c] += delta;
                for t in 0..d {
                    g.intent_w[c * d + t] += delta * h0[t];
                    dh0[t] += delta * p.intent_w[c * d + t];
                }
            }
            let n = h.len() as f64;
            let mut dh: Vec<Vec<f64>> = vec![dh0.iter().map(|v| v / n).collect(); h.len()];
            for (j, zs) in slot_deltas.iter().enumerate() {
                let Some(zs) = zs else { continue };
                for (c, &delta) in zs.iter().enumerate() {
                    let delta = delta * scale;
                    g.slot_b[c] += delta;
                    for t in 0..d {
                        g.slot_w[c * d + t] += delta * h[j][t];
                        dh[j][t] += delta * p.slot_w[c * d + t];
                    }
                }
            }
            if train_cb {
                let EmbeddingSource::Compressed { ce, .. } = &self.source else { unreachable!() };
                for (tok, dhj) in ex.tokens.iter().zip(&dh) {
                    let id = self.token_id(tok)?;
                    for (i, &c) in ce.token_codes(id).iter().enumerate() {
                        let off = (i * ce.k() + c as usize) * d;
                        for (gc, v) in g.codebooks[off..off + d].iter_mut().zip(dhj) {
                            *gc += v;
                        }
                    }
                }
            }
        }
        Ok((total * scale, grads))
    }

    /// The compressed source with the current (possibly finetuned) codebooks.
    /// `None` for a dense source.
    pub fn export_compressed(&self) -> Option<Result<CompressedEmbedding>> {
        match &self.source {
            EmbeddingSource::Dense(_) => None,
            EmbeddingSource::Compressed { ce, .. } => {
                Some(ce.with_codebooks(self.params.codebooks.iter().map(|&v| v as f32).collect()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    /// Fraction of optimizer steps spent warming up.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.05,
            weight_decay: 0.01,
            label_smoothing: 0.0,
            warmup_fraction: 0.1,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch-size", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning-rate", "must be finite and non-negative"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight-decay", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::config("label-smoothing", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("warmup-fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// AdamW with linear warmup then linear decay to zero, over seeded shuffles.
/// Returns the mean training loss of each epoch.
pub fn train_classifier(
    model: &mut JointClassifier,
    dataset: &ParsingDataset,
    config: &ClassifierConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Shape("cannot train on an empty dataset".into()));
    }
    let trainable = [true, true, true, true, model.source.trainable_codebooks()];
    let n = dataset.len();
    let steps_per_epoch = n.div_ceil(config.batch_size) as u64;
    let total = steps_per_epoch * config.epochs as u64;
    let warmup = (config.warmup_fraction * total as f64).ceil() as u64;
    let mut rng = seeded_rng(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut schedule_step = 0u64;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&ParsingExample> = chunk.iter().map(|&i| &dataset.examples[i]).collect();
            let (loss, grads) = match model.joint_loss_and_grads(&batch, config.label_smoothing) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        loss: f64::NAN,
                        trace: losses,
                    })
                }
                Err(e) => return Err(e),
            };
            sum += loss * batch.len() as f64;
            schedule_step += 1;
            model.step += 1;
            let lr = warmup_linear_lr(config.learning_rate, schedule_step, warmup, total);
            let step = model.step;
            for (i, ((p, g), mom)) in model
                .params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(model.moments.iter_mut())
                .enumerate()
            {
                if trainable[i] {
                    let wd = if DECAYED[i] { config.weight_decay } else { 0.0 };
                    adam_update(p, g, mom, &config.adam, lr, wd, step);
                }
            }
        }
        let epoch_loss = sum / n as f64;
        losses.push(epoch_loss);
        if !epoch_loss.is_finite() || !model.params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
                trace: losses,
            });
        }
    }
    Ok(losses)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub exact_match: f64,
    pub intent_accuracy: f64,
    pub slot_token_accuracy: f64,
}

pub const EVAL_CSV_HEADER: &str = "split,em,intent_acc,slot_acc";

impl EvalResult {
    pub fn csv_row(&self, split: &str) -> String {
        format!(
            "{split},{:.6},{:.6},{:.6}",
            self.exact_match, self.intent_accuracy, self.slot_token_accuracy
        )
    }
}

/// Exact match, intent accuracy and masked-slot token accuracy.
pub fn evaluate(model: &JointClassifier, dataset: &ParsingDataset) -> Result<EvalResult> {
    if dataset.is_empty() {
        return Err(Error::Shape("cannot evaluate an empty dataset".into()));
    }
    let (mut exact, mut intents, mut slots_ok, mut slots_total) = (0usize, 0usize, 0usize, 0usize);
    for ex in &dataset.examples {
        model.check_example(ex)?;
        let (intent, slots) = model.predict(ex)?;
        let mut all_slots = true;
        for ((&pred, &gold), &mask) in slots.iter().zip(&ex.slots).zip(&ex.slot_mask) {
            if mask {
                slots_total += 1;
                if pred == gold {
                    slots_ok += 1;
                } else {
                    all_slots = false;
                }
            }
        }
        if intent == ex.intent {
            intents += 1;
            if all_slots {
                exact += 1;
            }
        }
    }
    let n = dataset.len() as f64;
    Ok(EvalResult {
        exact_match: exact as f64 / n,
        intent_accuracy: intents as f64 / n,
        slot_token_accuracy: if slots_total == 0 {
            1.0
        } else {
            slots_ok as f64 / slots_total as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_table() -> EmbeddingTable {
        EmbeddingTable::new("u", vec!["a".into(), "b".into(), "c".into()], 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()
    }

    fn example(tokens: &[&str], intent: usize, slots: &[usize]) -> ParsingExample {
        ParsingExample {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            intent,
            slots: slots.to_vec(),
            slot_mask: vec![true; tokens.len()],
        }
    }

    #[test]
    fn featurize_means_tokens() {
        let m = JointClassifier::new(EmbeddingSource::Dense(unit_table()), 2, 2, None).unwrap();
        let (h0, h) = m.featurize(&example(&["a", "b"], 0, &[0, 0])).unwrap();
        assert_eq!(h0, vec![0.5, 0.5]);
        assert_eq!(h.len(), 2);
        let (h0, _) = m.featurize(&example(&["c"], 0, &[0])).unwrap();
        assert_eq!(h0, vec![1.0, 1.0]);
        assert!(matches!(
            m.featurize(&example(&["zzz"], 0, &[0])),
            Err(Error::UnknownToken(_))
        ));
        let m = JointClassifier::new(EmbeddingSource::Dense(unit_table()), 2, 2, Some("c")).unwrap();
        let (h0, _) = m.featurize(&example(&["zzz"], 0, &[0])).unwrap();
        assert_eq!(h0, vec![1.0, 1.0]);
    }

    #[test]
    fn compressed_features_match_lookup() {
        let ce = CompressedEmbedding::new(
            vec!["x".into(), "y".into()],
            2,
            2,
            3,
            vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.5, 1e-3, 7.0, -0.25, 3.0, 3.0, 3.0],
            vec![0, 1, 1, 0],
        )
        .unwrap();
        let m = JointClassifier::new(EmbeddingSource::Compressed { ce: ce.clone(), trainable: true }, 1, 1, None).unwrap();
        let (_, h) = m.featurize(&example(&["x", "y"], 0, &[0, 0])).unwrap();
        assert_eq!(h[0], ce.lookup_f64(0).unwrap());
        assert_eq!(h[1], ce.lookup_f64(1).unwrap());
    }

    #[test]
    fn zero_model_loss_is_log_classes() {
        let m = JointClassifier::new(EmbeddingSource::Dense(unit_table()), 3, 5, None).unwrap();
        let ex = example(&["a"], 1, &[4]);
        let loss = m.joint_loss(&[&ex], 0.0).unwrap();
        assert!((loss - (3f64.ln() + 5f64.ln())).abs() < 1e-12);
        let mut masked = ex.clone();
        masked.slot_mask = vec![false];
        assert!((m.joint_loss(&[&masked], 0.0).unwrap() - 3f64.ln()).abs() < 1e-12);
        // Smoothing does not change the loss of a uniform prediction.
        assert!((m.joint_loss(&[&ex], 0.1).unwrap() - loss).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_batches() {
        let m = JointClassifier::new(EmbeddingSource::Dense(unit_table()), 2, 2, None).unwrap();
        assert!(m.joint_loss(&[], 0.0).is_err());
        assert!(m.joint_loss(&[&example(&["a"], 2, &[0])], 0.0).is_err());
        assert!(m.joint_loss(&[&example(&["a"], 0, &[3])], 0.0).is_err());
    }

    #[test]
    fn lr_zero_changes_nothing() {
        let mut m = JointClassifier::new(EmbeddingSource::Dense(unit_table()), 2, 2, None).unwrap();
        for t in m.params.tensors_mut() {
            for (i, v) in t.iter_mut().enumerate() {
                *v = 0.3 * i as f64 - 0.1;
            }
        }
        let before = m.params.clone();
        let data = ParsingDataset {
            intents: vec!["p".into(), "q".into()],
            slot_labels: vec!["O".into(), "B-x".into()],
            examples: vec![example(&["a", "b"], 0, &[0, 1]), example(&["c"], 1, &[1])],
        };
        let cfg = ClassifierConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..Default::default()
        };
        train_classifier(&mut m, &data, &cfg).unwrap();
        assert_eq!(m.params, before);
    }

    #[test]
    fn eval_counts() {
        let mut m = JointClassifier::new(EmbeddingSource::Dense(unit_table()), 2, 2, None).unwrap();
        // Intent 1 always wins; slot 0 always wins.
        m.params.intent_b = vec![0.0, 1.0];
        m.params.slot_b = vec![1.0, 0.0];
        let data = ParsingDataset {
            intents: vec!["p".into(), "q".into()],
            slot_labels: vec!["O".into(), "B-x".into()],
            examples: vec![
                example(&["a", "b"], 1, &[0, 0]),
                example(&["a"], 1, &[1]),
                example(&["c"], 0, &[0]),
                example(&["c"], 0, &[1]),
            ],
        };
        let r = evaluate(&m, &data).unwrap();
        assert_eq!(r.exact_match, 0.25);
        assert_eq!(r.intent_accuracy, 0.5);
        assert_eq!(r.slot_token_accuracy, 0.6);
        assert_eq!(r.csv_row("test"), "test,0.250000,0.500000,0.600000");
    }
}
