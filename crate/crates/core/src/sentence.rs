//! Sentence vectors from word vectors: order-free pooling baselines and the
//! context vector of a seq2seq autoencoder.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::checkpoint::Checkpoint;
use crate::corpus::{AnnotatedPost, EOS};
use crate::error::{Error, Result};
use crate::layers::{attend, CellKind, CellState, Linear, RecurrentCell};
use crate::numeric::{clip_global_norm, Bound, Graph, NodeId, Optimizer, OptimizerKind, ParamStore, Tensor};
use crate::rng;
use crate::wordvec::WordTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolingMode {
    Max,
    Min,
    Avg,
}

/// Per-dimension max, min or mean of a non-empty list of equal-width vectors.
pub fn pool<V: AsRef<[f64]>>(vectors: &[V], mode: PoolingMode) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::contract("pooling needs at least one vector"))?
        .as_ref();
    let dim = first.len();
    let mut out = first.to_vec();
    for v in &vectors[1..] {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Dimension {
                op: "pool",
                left: vec![dim],
                right: vec![v.len()],
            });
        }
        for (o, &x) in out.iter_mut().zip(v) {
            *o = match mode {
                PoolingMode::Max => o.max(x),
                PoolingMode::Min => o.min(x),
                PoolingMode::Avg => *o + x,
            };
        }
    }
    if mode == PoolingMode::Avg {
        let n = vectors.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
    }
    Ok(out)
}

/// Which reconstruction loss drives the autoencoder's gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seq2SeqLoss {
    /// Mean over output positions of `|pred_t - true_t|^2`.
    PerToken,
    /// `(PV - TV)^2` where PV and TV sum every component of the predicted and
    /// true sequences.
    SequenceSum,
}

impl Seq2SeqLoss {
    pub fn name(self) -> &'static str {
        match self {
            Seq2SeqLoss::PerToken => "token",
            Seq2SeqLoss::SequenceSum => "sequence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(Seq2SeqLoss::PerToken),
            "sequence" => Ok(Seq2SeqLoss::SequenceSum),
            other => Err(Error::Config(format!("unknown seq2seq loss `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqConfig {
    pub cell: CellKind,
    pub attention: bool,
    /// Must equal the word-vector width.
    pub hidden_dim: usize,
    pub teacher_forcing: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_len: usize,
    pub train_subset: usize,
    pub seed: u64,
    pub loss: Seq2SeqLoss,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Seq2SeqConfig {
            cell: CellKind::Gru,
            attention: false,
            hidden_dim: 200,
            teacher_forcing: 0.5,
            learning_rate: 0.005,
            epochs: 10,
            max_len: 30,
            train_subset: 400_000,
            seed: 1,
            loss: Seq2SeqLoss::PerToken,
            optimizer: OptimizerKind::Adam,
            clip_norm: 5.0,
        }
    }
}

impl Seq2SeqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.teacher_forcing) {
            return Err(Error::Config("seq2seq.teacher_forcing must be in [0, 1]".into()));
        }
        if self.hidden_dim < 1 || self.max_len < 1 || self.train_subset < 1 {
            return Err(Error::Config(
                "seq2seq hidden_dim, max_len and train_subset must be >= 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("seq2seq.learning_rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// Encoder-decoder pair trained to reproduce its input sentence.
#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    pub config: Seq2SeqConfig,
    store: ParamStore,
    encoder: RecurrentCell,
    decoder: RecurrentCell,
    output: Linear,
    sos: Vec<f64>,
    eos: Vec<f64>,
    /// Mean per-token loss over the training sentences after each epoch,
    /// measured with teacher forcing.
    pub loss_history: Vec<f64>,
    /// Sequence-sum error `(1/n) sum_i (PV_i - TV_i)^2` over the training
    /// sentences after each epoch, measured the same way.
    pub sequence_loss_history: Vec<f64>,
    /// Sentences cut down to `max_len` during training.
    pub truncated: usize,
}

struct Decoded {
    preds: Vec<NodeId>,
}

enum Feed<'a> {
    /// Feed ground truth (`teacher`) or the model's own previous output.
    Train { targets: &'a [Vec<f64>], teacher: bool },
    /// Free-running for at most this many steps, stopping when `stop` says so.
    Generate {
        steps: usize,
        stop: &'a dyn Fn(&[f64]) -> bool,
    },
}

impl Seq2SeqModel {
    /// Randomly initialised model. `eos_norm` sets the length of the fixed
    /// end-of-sentence vector.
    pub fn new(config: Seq2SeqConfig, eos_norm: f64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut r = rng::stream(config.seed, "seq2seq-init");
        let mut store = ParamStore::new();
        let encoder = RecurrentCell::new(&mut store, "encoder", config.cell, h, h, &mut r);
        let dec_in = if config.attention { 2 * h } else { h };
        let decoder = RecurrentCell::new(&mut store, "decoder", config.cell, dec_in, h, &mut r);
        let output = Linear::new(&mut store, "output", dec_in, h, &mut r);
        let mut eos: Vec<f64> = (0..h).map(|_| r.gen_range(-1.0..1.0)).collect();
        let n = eos.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let target = if eos_norm > 0.0 { eos_norm } else { 1.0 };
        eos.iter_mut().for_each(|x| *x *= target / n);
        Ok(Seq2SeqModel {
            config,
            store,
            encoder,
            decoder,
            output,
            sos: vec![0.0; h],
            eos,
            loss_history: Vec::new(),
            sequence_loss_history: Vec::new(),
            truncated: 0,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn eos_vector(&self) -> &[f64] {
        &self.eos
    }

    fn check_width(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.hidden_dim() {
            return Err(Error::Dimension {
                op: "seq2seq input",
                left: vec![v.len()],
                right: vec![self.hidden_dim()],
            });
        }
        Ok(())
    }

    fn run_encoder(&self, g: &mut Graph, p: &Bound, words: &[Vec<f64>]) -> Result<(Vec<NodeId>, CellState)> {
        let mut s = self.encoder.zero_state(g);
        let mut states = Vec::with_capacity(words.len() + 1);
        for v in words
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.eos.as_slice()))
        {
            self.check_width(v)?;
            let x = g.constant(Tensor::row_vector(v.to_vec()));
            s = self.encoder.step(g, p, x, s)?;
            states.push(s.h);
        }
        Ok((states, s))
    }

    fn run(&self, g: &mut Graph, p: &Bound, words: &[Vec<f64>], feed: Feed<'_>) -> Result<Decoded> {
        let (enc_states, final_state) = self.run_encoder(g, p, words)?;
        let keys = if self.config.attention {
            Some(g.stack_rows(&enc_states)?)
        } else {
            None
        };
        let mut s = final_state;
        let steps = match &feed {
            Feed::Train { targets, .. } => targets.len(),
            Feed::Generate { steps, .. } => *steps,
        };
        let mut preds = Vec::with_capacity(steps);
        let mut prev = self.sos.clone();
        for t in 0..steps {
            let input = g.constant(Tensor::row_vector(prev.clone()));
            let pred = match keys {
                Some(keys) => {
                    let (ctx, _) = attend(g, s.h, keys)?;
                    let inp = g.concat(input, ctx, 1)?;
                    s = self.decoder.step(g, p, inp, s)?;
                    let out_in = g.concat(s.h, ctx, 1)?;
                    self.output.forward(g, p, out_in)?
                }
                None => {
                    s = self.decoder.step(g, p, input, s)?;
                    self.output.forward(g, p, s.h)?
                }
            };
            preds.push(pred);
            let produced = g.value(pred).data().to_vec();
            match &feed {
                Feed::Train { targets, teacher } => {
                    prev = if *teacher { targets[t].clone() } else { produced };
                }
                Feed::Generate { stop, .. } => {
                    if stop(&produced) {
                        break;
                    }
                    prev = produced;
                }
            }
        }
        Ok(Decoded { preds })
    }

    fn truncate<'a>(&self, words: &'a [Vec<f64>]) -> &'a [Vec<f64>] {
        &words[..words.len().min(self.config.max_len)]
    }

    /// Final encoder hidden state after reading the sentence and EOS.
    pub fn encode(&self, word_vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
        if word_vectors.is_empty() {
            return Err(Error::contract("cannot encode an empty sentence"));
        }
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let (_, s) = self.run_encoder(&mut g, &p, self.truncate(word_vectors))?;
        Ok(g.value(s.h).data().to_vec())
    }

    /// Free-running reconstruction. Each output vector is mapped to its
    /// nearest (Euclidean) row of `vocab` or to EOS; decoding stops at EOS or
    /// after `max_len` outputs.
    pub fn decode(&self, word_vectors: &[Vec<f64>], vocab: &WordTable) -> Result<Vec<String>> {
        if word_vectors.is_empty() {
            return Err(Error::contract("cannot decode an empty sentence"));
        }
        let nearest = |v: &[f64]| nearest_token(v, vocab, &self.eos);
        let stop = |v: &[f64]| nearest(v).is_none();
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let out = self.run(
            &mut g,
            &p,
            self.truncate(word_vectors),
            Feed::Generate {
                steps: self.config.max_len + 1,
                stop: &stop,
            },
        )?;
        let mut tokens: Vec<String> = out
            .preds
            .iter()
            .map_while(|&id| nearest(g.value(id).data()))
            .map(str::to_string)
            .collect();
        tokens.truncate(self.config.max_len);
        Ok(tokens)
    }

    /// Adds the per-token and sequence-sum losses of one sentence to `g`,
    /// with parameters bound by `p`. Returns `(token_loss, sequence_loss)`.
    pub fn loss_nodes(&self, g: &mut Graph, p: &Bound, words: &[Vec<f64>], teacher: bool) -> Result<(NodeId, NodeId)> {
        if words.is_empty() {
            return Err(Error::contract("cannot train on an empty sentence"));
        }
        let mut targets: Vec<Vec<f64>> = words.to_vec();
        targets.push(self.eos.clone());
        let out = self.run(
            g,
            p,
            words,
            Feed::Train {
                targets: &targets,
                teacher,
            },
        )?;
        let mut token_terms = Vec::with_capacity(targets.len());
        let mut pred_sums = Vec::with_capacity(targets.len());
        for (pred, tgt) in out.preds.iter().zip(&targets) {
            let t = g.constant(Tensor::row_vector(tgt.clone()));
            let diff = g.sub(*pred, t)?;
            let sq = g.mul(diff, diff)?;
            token_terms.push(g.sum(sq));
            pred_sums.push(g.sum(*pred));
        }
        let token_total = g.stack_rows(&token_terms)?;
        let token_total = g.sum(token_total);
        let token_loss = g.scale(token_total, 1.0 / targets.len() as f64);
        let pv = g.stack_rows(&pred_sums)?;
        let pv = g.sum(pv);
        let tv: f64 = targets.iter().flatten().sum();
        let tv = g.constant(Tensor::scalar(tv));
        let gap = g.sub(pv, tv)?;
        let seq_loss = g.mul(gap, gap)?;
        Ok((token_loss, seq_loss))
    }

    fn loss_graph(&self, words: &[Vec<f64>], teacher: bool) -> Result<(Graph, Bound, NodeId, NodeId)> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g);
        let (tok, seq) = self.loss_nodes(&mut g, &p, words, teacher)?;
        Ok((g, p, tok, seq))
    }

    /// Per-token and sequence-sum losses of one sentence under teacher forcing.
    pub fn sentence_losses(&self, words: &[Vec<f64>]) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let (tok, seq) = self.loss_nodes(&mut g, &p, self.truncate(words), true)?;
        Ok((g.value(tok).item(), g.value(seq).item()))
    }

    /// Mean per-token and sequence-sum losses over `sentences`, teacher forced.
    pub fn corpus_losses(&self, sentences: &[Vec<Vec<f64>>]) -> Result<(f64, f64)> {
        if sentences.is_empty() {
            return Err(Error::contract("no sentences to score"));
        }
        let (mut tok, mut seq) = (0.0, 0.0);
        for s in sentences {
            let (t, q) = self.sentence_losses(s)?;
            tok += t;
            seq += q;
        }
        let n = sentences.len() as f64;
        Ok((tok / n, seq / n))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::new("seq2seq");
        for (k, v) in [
            ("cell", c.cell.name().to_string()),
            ("attention", c.attention.to_string()),
            ("hidden_dim", c.hidden_dim.to_string()),
            ("teacher_forcing", c.teacher_forcing.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("epochs", c.epochs.to_string()),
            ("max_len", c.max_len.to_string()),
            ("train_subset", c.train_subset.to_string()),
            ("seed", c.seed.to_string()),
            ("loss", c.loss.name().to_string()),
            ("optimizer", c.optimizer.to_string()),
            ("clip_norm", c.clip_norm.to_string()),
        ] {
            ck.meta.insert(k.to_string(), v);
        }
        ck.blocks = self.store.blocks();
        ck.blocks
            .push(("const.sos".into(), Tensor::row_vector(self.sos.clone())));
        ck.blocks
            .push(("const.eos".into(), Tensor::row_vector(self.eos.clone())));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "seq2seq" {
            return Err(Error::Format(format!(
                "expected a seq2seq checkpoint, found `{}`",
                ck.kind
            )));
        }
        let config = Seq2SeqConfig {
            cell: CellKind::parse(ck.meta("cell")?)?,
            attention: ck.meta_parse("attention")?,
            hidden_dim: ck.meta_parse("hidden_dim")?,
            teacher_forcing: ck.meta_parse("teacher_forcing")?,
            learning_rate: ck.meta_parse("learning_rate")?,
            epochs: ck.meta_parse("epochs")?,
            max_len: ck.meta_parse("max_len")?,
            train_subset: ck.meta_parse("train_subset")?,
            seed: ck.meta_parse("seed")?,
            loss: Seq2SeqLoss::parse(ck.meta("loss")?)?,
            optimizer: ck.meta("optimizer")?.parse()?,
            clip_norm: ck.meta_parse("clip_norm")?,
        };
        let mut model = Seq2SeqModel::new(config, 1.0)?;
        let n = model.store.len();
        if ck.blocks.len() != n + 2 {
            return Err(Error::Format(
                "seq2seq checkpoint has the wrong number of blocks".into(),
            ));
        }
        model.store.load(&ck.blocks[..n])?;
        model.sos = ck.block("const.sos")?.data().to_vec();
        model.eos = ck.block("const.eos")?.data().to_vec();
        if model.sos.len() != model.hidden_dim() || model.eos.len() != model.hidden_dim() {
            return Err(Error::Format("special vectors have the wrong width".into()));
        }
        Ok(model)
    }
}

fn nearest_token<'a>(v: &[f64], vocab: &'a WordTable, eos: &[f64]) -> Option<&'a str> {
    let d2 = |w: &[f64]| -> f64 { v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum() };
    let mut best: Option<(&str, f64)> = None;
    for (t, w) in vocab.rows() {
        if t == EOS {
            continue;
        }
        let d = d2(w);
        if best.map_or(true, |(bt, bd)| d < bd || (d == bd && t < bt)) {
            best = Some((t, d));
        }
    }
    match best {
        Some((_, bd)) if bd <= d2(eos) => best.map(|(t, _)| t),
        _ => None,
    }
}

/// Sequence-sum reconstruction error `(1/n) sum_i (PV_i - TV_i)^2`, where
/// `PV_i` / `TV_i` add up every component of the i-th predicted / true
/// sequence.
pub fn sequence_sum_error(predicted: &[Vec<Vec<f64>>], truth: &[Vec<Vec<f64>>]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::contract(
            "sequence_sum_error needs equally many, non-zero sequences",
        ));
    }
    let total: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let pv: f64 = p.iter().flatten().sum();
            let tv: f64 = t.iter().flatten().sum();
            (pv - tv).powi(2)
        })
        .sum();
    Ok(total / predicted.len() as f64)
}

/// Word vectors of every non-empty sentence in `posts`.
pub fn sentence_vectors(posts: &[AnnotatedPost], table: &WordTable) -> Vec<Vec<Vec<f64>>> {
    posts
        .iter()
        .flat_map(|p| p.sentences.iter())
        .filter(|s| !s.is_empty())
        .map(|s| s.iter().map(|t| table.lookup(t).to_vec()).collect())
        .collect()
}

/// Trains an autoencoder on (a seeded subset of) the sentences of `posts`.
pub fn train_autoencoder(posts: &[AnnotatedPost], table: &WordTable, config: &Seq2SeqConfig) -> Result<Seq2SeqModel> {
    config.validate()?;
    if config.hidden_dim != table.dim() {
        return Err(Error::Config(format!(
            "seq2seq.hidden_dim {} must equal the word-vector width {}",
            config.hidden_dim,
            table.dim()
        )));
    }
    let mut data = sentence_vectors(posts, table);
    if data.is_empty() {
        return Err(Error::Training("empty corpus".into()));
    }
    let mut r = rng::stream(config.seed, "seq2seq-train");
    data.shuffle(&mut r);
    data.truncate(config.train_subset);
    let mut truncated = 0;
    for s in &mut data {
        if s.len() > config.max_len {
            s.truncate(config.max_len);
            truncated += 1;
        }
    }
    if truncated > 0 {
        log::info!("truncated {truncated} sentences to {} tokens", config.max_len);
    }
    let norms: Vec<f64> = data
        .iter()
        .flatten()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let eos_norm = norms.iter().sum::<f64>() / norms.len() as f64;

    let mut model = Seq2SeqModel::new(config.clone(), eos_norm)?;
    model.truncated = truncated;
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &model.store);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut r);
        for &i in &order {
            let teacher = r.gen::<f64>() < config.teacher_forcing;
            let (mut g, p, tok, seq) = model.loss_graph(&data[i], teacher)?;
            let root = match config.loss {
                Seq2SeqLoss::PerToken => tok,
                Seq2SeqLoss::SequenceSum => seq,
            };
            g.backward(root)?;
            let mut grads = model.store.gradients(&g, &p);
            clip_global_norm(&mut grads, config.clip_norm);
            opt.step(&mut model.store, &grads);
        }
        if !model.store.is_finite() {
            return Err(Error::Training(format!("seq2seq parameters diverged in epoch {epoch}")));
        }
        let (tok, seq) = model.corpus_losses(&data)?;
        model.loss_history.push(tok);
        model.sequence_loss_history.push(seq);
        log::debug!("seq2seq epoch {epoch}: token {tok:.6} sequence {seq:.6}");
    }
    Ok(model)
}

/// Sentence tier of a two-tier pipeline.
#[derive(Clone, Debug)]
pub enum SentenceEncoder {
    Pool(PoolingMode),
    Seq2Seq(Box<Seq2SeqModel>),
}

impl SentenceEncoder {
    pub fn encode_sentence(&self, words: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            SentenceEncoder::Pool(mode) => pool(words, *mode),
            SentenceEncoder::Seq2Seq(m) => m.encode(words),
        }
    }
}

/// One vector per sentence of `post`, in order.
pub fn encode_post(post: &AnnotatedPost, encoder: &SentenceEncoder, table: &WordTable) -> Result<Vec<Vec<f64>>> {
    post.sentences
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            let words: Vec<Vec<f64>> = s.iter().map(|t| table.lookup(t).to_vec()).collect();
            encoder.encode_sentence(&words)
        })
        .collect()
}

/// Share of positions where free-running reconstruction recovers the input
/// token; missing outputs count as misses.
pub fn reconstruction_accuracy(model: &Seq2SeqModel, sentences: &[Vec<String>], table: &WordTable) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in sentences {
        let words: Vec<Vec<f64>> = s.iter().map(|t| table.lookup(t).to_vec()).collect();
        let out = model.decode(&words, table)?;
        let s = &s[..s.len().min(model.config.max_len)];
        total += s.len();
        hit += s.iter().zip(&out).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Err(Error::contract("no tokens to reconstruct"));
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn table(dim: usize, words: &[&str], seed: u64) -> WordTable {
        let mut r = rng::stream(seed, "table");
        let data = (0..words.len() * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        WordTable::new(words.iter().map(|s| s.to_string()).collect(), dim, data).unwrap()
    }

    fn post(sentences: &[&[&str]]) -> AnnotatedPost {
        AnnotatedPost {
            id: "p".into(),
            sentences: sentences
                .iter()
                .map(|s| s.iter().map(|t| t.to_string()).collect())
                .collect(),
            label: Label::Negative,
        }
    }

    #[test]
    fn pooling_examples() {
        let one = [vec![0.3, -1.0]];
        for m in [PoolingMode::Max, PoolingMode::Min, PoolingMode::Avg] {
            assert_eq!(pool(&one, m).unwrap(), one[0]);
        }
        let two = [vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(pool(&two, PoolingMode::Max).unwrap(), vec![1.0, 1.0]);
        assert_eq!(pool(&two, PoolingMode::Min).unwrap(), vec![0.0, 0.0]);
        assert_eq!(pool(&two, PoolingMode::Avg).unwrap(), vec![0.5, 0.5]);
        assert!(pool::<Vec<f64>>(&[], PoolingMode::Max).is_err());
        assert!(pool(&[vec![1.0], vec![1.0, 2.0]], PoolingMode::Max).is_err());
    }

    #[test]
    fn encode_post_shapes() {
        let t = table(3, &["a", "b", "c"], 1);
        let enc = SentenceEncoder::Pool(PoolingMode::Avg);
        let one = encode_post(&post(&[&["a", "b"]]), &enc, &t).unwrap();
        assert_eq!(one.len(), 1);
        let want = pool(&[t.lookup("a"), t.lookup("b")], PoolingMode::Avg).unwrap();
        assert_eq!(one[0], want);
        let three = encode_post(&post(&[&["a"], &["b", "c"], &["c"]]), &enc, &t).unwrap();
        assert_eq!(three.len(), 3);
    }

    fn zero_model(cell: CellKind, dim: usize) -> Seq2SeqModel {
        let mut m = Seq2SeqModel::new(
            Seq2SeqConfig {
                cell,
                hidden_dim: dim,
                ..Default::default()
            },
            1.0,
        )
        .unwrap();
        for t in m.params_mut().tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        m
    }

    #[test]
    fn zero_simple_rnn_encodes_to_zero() {
        let m = zero_model(CellKind::SimpleRnn, 4);
        let out = m.encode(&[vec![0.5, -1.0, 2.0, 0.1], vec![1.0; 4]]).unwrap();
        assert_eq!(out, vec![0.0; 4]);
        assert!(m.encode(&[]).is_err());
        assert!(m.encode(&[vec![1.0; 3]]).is_err());
    }

    #[test]
    fn encoder_output_width_is_hidden_dim() {
        for cell in [CellKind::SimpleRnn, CellKind::Gru, CellKind::Lstm] {
            let m = Seq2SeqModel::new(
                Seq2SeqConfig {
                    cell,
                    hidden_dim: 5,
                    max_len: 4,
                    ..Default::default()
                },
                1.0,
            )
            .unwrap();
            for len in [1, 3, 9] {
                let words = vec![vec![0.2; 5]; len];
                let a = m.encode(&words).unwrap();
                assert_eq!(a.len(), 5);
                assert_eq!(a, m.encode(&words).unwrap());
            }
        }
    }

    #[test]
    fn sequence_sum_error_identity_is_zero() {
        let seqs = vec![vec![vec![0.5, 1.0], vec![2.0, -3.0]], vec![vec![1.0, 1.0]]];
        assert_eq!(sequence_sum_error(&seqs, &seqs).unwrap(), 0.0);
        let shifted = vec![vec![vec![1.5, 1.0], vec![2.0, -3.0]], vec![vec![1.0, 1.0]]];
        assert_eq!(sequence_sum_error(&shifted, &seqs).unwrap(), 0.5);
    }

    #[test]
    fn zero_learning_rate_with_full_teacher_forcing_keeps_parameters() {
        let t = table(4, &["a", "b", "c"], 2);
        let cfg = Seq2SeqConfig {
            hidden_dim: 4,
            learning_rate: 0.0,
            teacher_forcing: 1.0,
            epochs: 1,
            seed: 3,
            ..Default::default()
        };
        let init = Seq2SeqModel::new(cfg.clone(), 1.0).unwrap();
        let trained = train_autoencoder(&[post(&[&["a", "b", "c"], &["c", "a"]])], &t, &cfg).unwrap();
        assert_eq!(init.params(), trained.params());
        assert_eq!(trained.loss_history.len(), 1);
    }

    #[test]
    fn checkpoint_round_trip_preserves_encoding() {
        let t = table(4, &["a", "b", "c"], 2);
        let cfg = Seq2SeqConfig {
            hidden_dim: 4,
            attention: true,
            cell: CellKind::Lstm,
            epochs: 2,
            ..Default::default()
        };
        let m = train_autoencoder(&[post(&[&["a", "b", "c"]])], &t, &cfg).unwrap();
        let ck = m.to_checkpoint();
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Seq2SeqModel::from_checkpoint(&Checkpoint::read(buf.as_slice()).unwrap()).unwrap();
        let words = vec![t.lookup("b").to_vec(), t.lookup("a").to_vec()];
        assert_eq!(m.encode(&words).unwrap(), back.encode(&words).unwrap());
        assert_eq!(back.config, m.config);
    }

    #[test]
    fn rejects_mismatched_hidden_dim_and_empty_corpus() {
        let t = table(4, &["a"], 2);
        let cfg = Seq2SeqConfig {
            hidden_dim: 5,
            ..Default::default()
        };
        assert!(matches!(
            train_autoencoder(&[post(&[&["a"]])], &t, &cfg),
            Err(Error::Config(_))
        ));
        let cfg = Seq2SeqConfig {
            hidden_dim: 4,
            ..Default::default()
        };
        assert!(matches!(train_autoencoder(&[], &t, &cfg), Err(Error::Training(_))));
    }
}
