//! Convolution → ReLU → GRU → dense → sigmoid binary classifier over a
//! sequence of vectors (word vectors or sentence vectors).

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::checkpoint::Checkpoint;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::harness::compute_metrics;
use crate::layers::{CellKind, Linear, RecurrentCell};
use crate::numeric::{clip_global_norm, Bound, Graph, NodeId, Optimizer, OptimizerKind, ParamRef, ParamStore, Tensor};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub conv_filters: usize,
    pub kernel_width: usize,
    pub gru_hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            conv_filters: 64,
            kernel_width: 3,
            gru_hidden: 64,
            dropout: 0.2,
            learning_rate: 0.001,
            epochs: 10,
            batch_size: 32,
            seed: 1,
            optimizer: OptimizerKind::Sgd,
            clip_norm: 5.0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.kernel_width < 1 {
            return bad("classifier.kernel_width must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("classifier.dropout must be in [0, 1)");
        }
        if self.conv_filters < 1 || self.gru_hidden < 1 || self.batch_size < 1 {
            return bad("classifier.conv_filters, gru_hidden and batch_size must be >= 1");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("classifier.learning_rate must be non-negative");
        }
        Ok(())
    }
}

/// One classifier input: a sequence of equal-width vectors and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<Vec<f64>>,
    pub label: Label,
}

/// Positive iff `p >= 0.5`.
pub fn label_for(probability: f64) -> Label {
    if probability >= 0.5 {
        Label::Positive
    } else {
        Label::Negative
    }
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub config: ClassifierConfig,
    pub input_dim: usize,
    store: ParamStore,
    conv_w: ParamRef,
    conv_b: ParamRef,
    gru: RecurrentCell,
    dense: Linear,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    /// Validation F1 per epoch.
    pub validation_f1: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept; 0 means untrained.
    pub best_epoch: usize,
}

impl TrainedClassifier {
    /// Freshly initialised, untrained model.
    pub fn new(config: ClassifierConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim < 1 {
            return Err(Error::contract("classifier input_dim must be >= 1"));
        }
        let mut r = rng::stream(config.seed, "classifier-init");
        let mut store = ParamStore::new();
        let fan_in = config.kernel_width * input_dim;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * config.conv_filters)
            .map(|_| r.gen_range(-bound..=bound))
            .collect();
        let conv_w = store.add("conv.w", Tensor::matrix(fan_in, config.conv_filters, w));
        let conv_b = store.add("conv.b", Tensor::zeros(&[1, config.conv_filters]));
        let gru = RecurrentCell::new(
            &mut store,
            "gru",
            CellKind::Gru,
            config.conv_filters,
            config.gru_hidden,
            &mut r,
        );
        let dense = Linear::new(&mut store, "dense", config.gru_hidden, 1, &mut r);
        Ok(TrainedClassifier {
            config,
            input_dim,
            store,
            conv_w,
            conv_b,
            gru,
            dense,
            loss_history: Vec::new(),
            validation_f1: Vec::new(),
            best_epoch: 0,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check(&self, seq: &[Vec<f64>]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::contract("classifier input sequence is empty"));
        }
        if let Some(v) = seq.iter().find(|v| v.len() != self.input_dim) {
            return Err(Error::Dimension {
                op: "classifier input",
                left: vec![v.len()],
                right: vec![self.input_dim],
            });
        }
        Ok(())
    }

    /// Pre-sigmoid score. `mask`, when given, multiplies the final GRU state.
    pub fn logit_node(&self, g: &mut Graph, p: &Bound, seq: &[Vec<f64>], mask: Option<&[f64]>) -> Result<NodeId> {
        self.check(seq)?;
        let x = g.constant(Tensor::from_rows(seq)?);
        let cols = g.im2col(x, self.config.kernel_width)?;
        let conv = g.matmul(cols, p[self.conv_w])?;
        let conv = g.add_row(conv, p[self.conv_b])?;
        let conv = g.relu(conv);
        let mut s = self.gru.zero_state(g);
        for t in 0..seq.len() {
            let xt = g.row(conv, t)?;
            s = self.gru.step(g, p, xt, s)?;
        }
        let mut h = s.h;
        if let Some(m) = mask {
            let m = g.constant(Tensor::row_vector(m.to_vec()));
            h = g.mul(h, m)?;
        }
        self.dense.forward(g, p, h)
    }

    /// Binary cross-entropy of one example, `softplus((1 - 2y) z)`.
    pub fn loss_node(&self, g: &mut Graph, p: &Bound, ex: &Example, mask: Option<&[f64]>) -> Result<NodeId> {
        let z = self.logit_node(g, p, &ex.features, mask)?;
        let signed = g.scale(z, 1.0 - 2.0 * ex.label.target());
        Ok(g.softplus(signed))
    }

    pub fn probability(&self, seq: &[Vec<f64>]) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let z = self.logit_node(&mut g, &p, seq, None)?;
        let z = g.value(z).item();
        Ok(1.0 / (1.0 + (-z).exp()))
    }

    pub fn predict(&self, seq: &[Vec<f64>]) -> Result<(Label, f64)> {
        let p = self.probability(seq)?;
        Ok((label_for(p), p))
    }

    /// Predictions in input order.
    pub fn predict_batch(&self, seqs: &[Vec<Vec<f64>>]) -> Result<Vec<(Label, f64)>> {
        seqs.iter().map(|s| self.predict(s)).collect()
    }

    fn dropout_mask(&self, r: &mut Rng) -> Option<Vec<f64>> {
        let p = self.config.dropout;
        if p == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - p);
        Some(
            (0..self.config.gru_hidden)
                .map(|_| if r.gen::<f64>() < p { 0.0 } else { keep })
                .collect(),
        )
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::new("classifier");
        for (k, v) in [
            ("input_dim", self.input_dim.to_string()),
            ("conv_filters", c.conv_filters.to_string()),
            ("kernel_width", c.kernel_width.to_string()),
            ("gru_hidden", c.gru_hidden.to_string()),
            ("dropout", c.dropout.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("epochs", c.epochs.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("seed", c.seed.to_string()),
            ("optimizer", c.optimizer.to_string()),
            ("clip_norm", c.clip_norm.to_string()),
            ("best_epoch", self.best_epoch.to_string()),
        ] {
            ck.meta.insert(k.to_string(), v);
        }
        ck.blocks = self.store.blocks();
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "classifier" {
            return Err(Error::Format(format!(
                "expected a classifier checkpoint, found `{}`",
                ck.kind
            )));
        }
        let config = ClassifierConfig {
            conv_filters: ck.meta_parse("conv_filters")?,
            kernel_width: ck.meta_parse("kernel_width")?,
            gru_hidden: ck.meta_parse("gru_hidden")?,
            dropout: ck.meta_parse("dropout")?,
            learning_rate: ck.meta_parse("learning_rate")?,
            epochs: ck.meta_parse("epochs")?,
            batch_size: ck.meta_parse("batch_size")?,
            seed: ck.meta_parse("seed")?,
            optimizer: ck.meta("optimizer")?.parse()?,
            clip_norm: ck.meta_parse("clip_norm")?,
        };
        let mut clf = TrainedClassifier::new(config, ck.meta_parse("input_dim")?)?;
        clf.store.load(&ck.blocks)?;
        clf.best_epoch = ck.meta_parse("best_epoch")?;
        Ok(clf)
    }
}

fn validation_f1(clf: &TrainedClassifier, validation: &[Example]) -> Result<f64> {
    let mut preds = Vec::with_capacity(validation.len());
    for ex in validation {
        preds.push(clf.predict(&ex.features)?.0);
    }
    let labels: Vec<Label> = validation.iter().map(|e| e.label).collect();
    Ok(compute_metrics(&preds, &labels)?.f1)
}

/// Mini-batch training on binary cross-entropy. The returned model carries
/// the parameters of the epoch with the best validation F1 (earliest on
/// ties).
pub fn train_classifier(
    train: &[Example],
    validation: &[Example],
    config: &ClassifierConfig,
) -> Result<TrainedClassifier> {
    config.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::contract("classifier training set is empty"))?;
    if validation.is_empty() {
        return Err(Error::contract("classifier validation set is empty"));
    }
    let input_dim = first
        .features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::contract("classifier input sequence is empty"))?;
    if train.iter().all(|e| e.label == first.label) {
        log::warn!("classifier training set holds a single class");
    }

    let mut clf = TrainedClassifier::new(config.clone(), input_dim)?;
    let mut r = rng::stream(config.seed, "classifier-train");
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &clf.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, ParamStore)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut g = Graph::new();
            let p = clf.store.bind(&mut g);
            let mut terms = Vec::with_capacity(batch.len());
            for &i in batch {
                let mask = clf.dropout_mask(&mut r);
                terms.push(clf.loss_node(&mut g, &p, &train[i], mask.as_deref())?);
            }
            let stacked = g.stack_rows(&terms)?;
            let sum = g.sum(stacked);
            let loss = g.scale(sum, 1.0 / batch.len() as f64);
            total += g.value(sum).item();
            g.backward(loss)?;
            let mut grads = clf.store.gradients(&g, &p);
            clip_global_norm(&mut grads, config.clip_norm);
            opt.step(&mut clf.store, &grads);
        }
        if !clf.store.is_finite() {
            return Err(Error::Training(format!(
                "classifier parameters diverged in epoch {epoch}"
            )));
        }
        clf.loss_history.push(total / train.len() as f64);
        let f1 = validation_f1(&clf, validation)?;
        clf.validation_f1.push(f1);
        log::debug!(
            "classifier epoch {epoch}: loss {:.6} val f1 {f1:.4}",
            total / train.len() as f64
        );
        if best.as_ref().map_or(true, |(b, _)| f1 > *b) {
            best = Some((f1, clf.store.clone()));
            clf.best_epoch = epoch;
        }
    }
    if let Some((_, store)) = best {
        clf.store = store;
    }
    Ok(clf)
}
