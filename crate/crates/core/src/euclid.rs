//! Euclidean word embeddings: skipgram with negative sampling, the subword
//! (character n-gram) variant, and GloVe.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{char_ngrams, AnnotatedPost, Vocabulary};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::rng::{self, Rng};
use crate::wordvec::{cosine, read_vectors, write_vectors, WordTable};

#[derive(Clone, Debug, PartialEq)]
pub struct EuclidConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    /// Initial skipgram step size, decayed linearly to zero.
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_count: u64,
    /// `(0, 0)` disables subwords.
    pub ngram_range: (usize, usize),
    pub glove_x_max: f64,
    pub glove_alpha: f64,
    /// AdaGrad base step for GloVe.
    pub glove_learning_rate: f64,
    pub seed: u64,
}

impl Default for EuclidConfig {
    fn default() -> Self {
        EuclidConfig {
            dim: 200,
            window: 40,
            negatives: 5,
            learning_rate: 0.025,
            epochs: 10,
            min_count: 5,
            ngram_range: (3, 6),
            glove_x_max: 100.0,
            glove_alpha: 0.75,
            glove_learning_rate: 0.05,
            seed: 1,
        }
    }
}

impl EuclidConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim < 1 {
            return bad("words.dim must be >= 1");
        }
        if self.window < 1 {
            return bad("words.window must be >= 1");
        }
        if self.negatives < 1 {
            return bad("words.negatives must be >= 1");
        }
        if self.epochs < 1 {
            return bad("words.epochs must be >= 1");
        }
        if self.min_count < 1 {
            return bad("vocab.min_count must be >= 1");
        }
        let (lo, hi) = self.ngram_range;
        if (lo, hi) != (0, 0) && (lo < 1 || lo > hi) {
            return bad("words.ngram_min/ngram_max must satisfy 1 <= min <= max, or both be 0");
        }
        if !(self.learning_rate >= 0.0) || !(self.glove_learning_rate >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if !(self.glove_x_max > 0.0) || !(self.glove_alpha > 0.0) {
            return bad("glove_x_max and glove_alpha must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Skipgram,
    Subword,
    Glove,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Skipgram => "skipgram",
            Family::Subword => "subword",
            Family::Glove => "glove",
        }
    }
}

/// Character n-gram rows of a subword model.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramTable {
    pub range: (usize, usize),
    pub grams: Vec<String>,
    pub index: HashMap<String, usize>,
    pub vectors: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub family: Family,
    pub vocab: Vocabulary,
    /// `|V| x dim` word vectors (GloVe: `W + W~`).
    pub input_vectors: Tensor,
    /// `|V| x dim` context vectors.
    pub output_vectors: Tensor,
    pub ngrams: Option<NgramTable>,
    /// Mean loss per training term, one entry per epoch.
    pub loss_history: Vec<f64>,
    /// For each vocabulary row, its n-gram rows (subword models only).
    word_ngrams: Vec<Vec<usize>>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.input_vectors.cols()
    }

    fn composed(&self, word: usize) -> Vec<f64> {
        let mut v = self.input_vectors.row(word).to_vec();
        if let (Some(ng), Some(rows)) = (&self.ngrams, self.word_ngrams.get(word)) {
            for &g in rows {
                for (a, b) in v.iter_mut().zip(ng.vectors.row(g)) {
                    *a += b;
                }
            }
        }
        v
    }

    /// Vector of `token`. Subword models fall back to the sum of the known
    /// n-gram vectors of an out-of-vocabulary word.
    pub fn word_vector(&self, token: &str) -> Result<Vec<f64>> {
        if let Some(i) = self.vocab.index_of(token) {
            return Ok(self.composed(i));
        }
        if let Some(ng) = &self.ngrams {
            if let Some(v) = oov_vector(ng, token, self.dim()) {
                return Ok(v);
            }
        }
        Err(Error::Lookup(format!("token `{token}`")))
    }

    /// Final vectors of every vocabulary entry, in vocabulary order.
    pub fn word_table(&self) -> WordTable {
        let dim = self.dim();
        let mut data = Vec::with_capacity(self.vocab.len() * dim);
        for i in 0..self.vocab.len() {
            data.extend(self.composed(i));
        }
        WordTable::new(self.vocab.tokens().to_vec(), dim, data).expect("vocabulary is a bijection")
    }

    /// Writes the word vectors to `w` and, for subword models, the n-gram
    /// rows to `ngram_w`.
    pub fn save(&self, w: impl Write, ngram_w: Option<impl Write>) -> Result<()> {
        let table = self.word_table();
        write_vectors(w, None, self.dim(), table.rows())?;
        if let (Some(ng), Some(nw)) = (&self.ngrams, ngram_w) {
            let comment = format!("ngram_range={} {}", ng.range.0, ng.range.1);
            let rows = ng
                .grams
                .iter()
                .enumerate()
                .map(|(i, g)| (g.as_str(), ng.vectors.row(i)));
            write_vectors(nw, Some(&comment), self.dim(), rows)?;
        }
        Ok(())
    }
}

fn oov_vector(ng: &NgramTable, token: &str, dim: usize) -> Option<Vec<f64>> {
    let mut v = vec![0.0; dim];
    let mut found = false;
    for g in char_ngrams(token, ng.range.0, ng.range.1) {
        if let Some(&r) = ng.index.get(&g) {
            found = true;
            for (a, b) in v.iter_mut().zip(ng.vectors.row(r)) {
                *a += b;
            }
        }
    }
    found.then_some(v)
}

/// Reads an n-gram file written by [`EmbeddingMatrix::save`].
pub fn read_ngram_table(reader: impl BufRead, source_name: &str) -> Result<NgramTable> {
    let file = read_vectors(reader, source_name)?;
    let range = file
        .comments
        .iter()
        .find_map(|c| {
            let rest = c.strip_prefix("ngram_range=")?;
            let mut it = rest.split_whitespace().map(str::parse::<usize>);
            Some((it.next()?.ok()?, it.next()?.ok()?))
        })
        .ok_or_else(|| Error::Format(format!("{source_name}: missing ngram_range comment")))?;
    let t = &file.table;
    let grams = t.tokens().to_vec();
    let index = grams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
    let data: Vec<f64> = t.rows().flat_map(|(_, v)| v.iter().copied()).collect();
    Ok(NgramTable {
        range,
        grams,
        index,
        vectors: Tensor::matrix(
            t.len().max(1),
            t.dim(),
            if data.is_empty() { vec![0.0; t.dim()] } else { data },
        ),
    })
}

/// Out-of-vocabulary vector from a loaded n-gram table.
pub fn ngram_fallback(ng: &NgramTable, token: &str) -> Option<Vec<f64>> {
    oov_vector(ng, token, ng.vectors.cols())
}

fn uniform_init(rng: &mut Rng, rows: usize, dim: usize) -> Tensor {
    let bound = 0.5 / dim as f64;
    let data = (0..rows * dim).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(rows, dim, data)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and gradients of one negative-sampling term
/// `-log s(u_o . v) - sum_k log s(-u_k . v)`.
#[derive(Clone, Debug)]
pub struct SgnsTerm {
    pub loss: f64,
    pub d_center: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

pub fn sgns_term(center: &[f64], positive: &[f64], negatives: &[&[f64]]) -> SgnsTerm {
    let dim = center.len();
    let mut d_center = vec![0.0; dim];
    let sp = dot(positive, center);
    // d/ds [-log s(s)] = s(s) - 1
    let gp = sigmoid(sp) - 1.0;
    let mut loss = softplus(-sp);
    for (dc, u) in d_center.iter_mut().zip(positive) {
        *dc += gp * u;
    }
    let d_positive = center.iter().map(|c| gp * c).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for u in negatives {
        let sn = dot(u, center);
        let gn = sigmoid(sn);
        loss += softplus(sn);
        for (dc, x) in d_center.iter_mut().zip(u.iter()) {
            *dc += gn * x;
        }
        d_negatives.push(center.iter().map(|c| gn * c).collect());
    }
    SgnsTerm {
        loss,
        d_center,
        d_positive,
        d_negatives,
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn negative_sampler(vocab: &Vocabulary) -> Result<WeightedIndex<f64>> {
    let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(0.75)).collect();
    WeightedIndex::new(weights).map_err(|e| Error::Training(format!("negative sampler: {e}")))
}

fn encoded(posts: &[AnnotatedPost], vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    let sentences: Vec<Vec<usize>> = vocab.encode_sentences(posts).filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(Error::Training("empty corpus".into()));
    }
    Ok(sentences)
}

pub fn train_skipgram(posts: &[AnnotatedPost], vocab: &Vocabulary, config: &EuclidConfig) -> Result<EmbeddingMatrix> {
    train_sgns(posts, vocab, config, None)
}

/// Skipgram whose centre vector is the token row plus the rows of all its
/// character n-grams.
pub fn train_subword_skipgram(
    posts: &[AnnotatedPost],
    vocab: &Vocabulary,
    config: &EuclidConfig,
) -> Result<EmbeddingMatrix> {
    train_sgns(posts, vocab, config, Some(config.ngram_range))
}

fn build_ngrams(vocab: &Vocabulary, range: (usize, usize)) -> (Vec<String>, HashMap<String, usize>, Vec<Vec<usize>>) {
    let mut grams = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut per_word = vec![Vec::new(); vocab.len()];
    if range == (0, 0) {
        return (grams, index, per_word);
    }
    for (w, rows) in per_word.iter_mut().enumerate() {
        if Vocabulary::is_special(w) {
            continue;
        }
        for g in char_ngrams(vocab.token(w), range.0, range.1) {
            let id = *index.entry(g.clone()).or_insert_with(|| {
                grams.push(g);
                grams.len() - 1
            });
            rows.push(id);
        }
    }
    (grams, index, per_word)
}

fn train_sgns(
    posts: &[AnnotatedPost],
    vocab: &Vocabulary,
    config: &EuclidConfig,
    subword: Option<(usize, usize)>,
) -> Result<EmbeddingMatrix> {
    config.validate()?;
    let sentences = encoded(posts, vocab)?;
    let sampler = negative_sampler(vocab)?;
    let dim = config.dim;
    let mut rng = rng::stream(config.seed, "skipgram");

    let mut input = uniform_init(&mut rng, vocab.len(), dim);
    let mut output = Tensor::zeros(&[vocab.len(), dim]);
    let (grams, gram_index, word_ngrams) = build_ngrams(vocab, subword.unwrap_or((0, 0)));
    let mut ngram_vecs = if grams.is_empty() {
        None
    } else {
        Some(uniform_init(&mut rng, grams.len(), dim))
    };

    let tokens_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total = (tokens_per_epoch * config.epochs) as f64;
    let mut processed = 0usize;
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut center = vec![0.0; dim];
    let mut negs: Vec<usize> = Vec::with_capacity(config.negatives);

    for _ in 0..config.epochs {
        for sent in &sentences {
            for (c, &w) in sent.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - processed as f64 / total).max(1e-4);
                processed += 1;
                let lo = c.saturating_sub(config.window);
                let hi = (c + config.window).min(sent.len() - 1);
                for o in lo..=hi {
                    if o == c {
                        continue;
                    }
                    let target = sent[o];
                    negs.clear();
                    for _ in 0..config.negatives {
                        let n = sampler.sample(&mut rng);
                        if n != target {
                            negs.push(n);
                        }
                    }
                    center.copy_from_slice(input.row(w));
                    if let Some(nv) = &ngram_vecs {
                        for &g in &word_ngrams[w] {
                            for (a, b) in center.iter_mut().zip(nv.row(g)) {
                                *a += b;
                            }
                        }
                    }
                    let neg_rows: Vec<&[f64]> = negs.iter().map(|&n| output.row(n)).collect();
                    let term = sgns_term(&center, output.row(target), &neg_rows);

                    let out = output.data_mut();
                    axpy(&mut out[target * dim..(target + 1) * dim], -lr, &term.d_positive);
                    for (&n, d) in negs.iter().zip(&term.d_negatives) {
                        axpy(&mut out[n * dim..(n + 1) * dim], -lr, d);
                    }
                    axpy(&mut input.data_mut()[w * dim..(w + 1) * dim], -lr, &term.d_center);
                    if let Some(nv) = &mut ngram_vecs {
                        for &g in &word_ngrams[w] {
                            axpy(&mut nv.data_mut()[g * dim..(g + 1) * dim], -lr, &term.d_center);
                        }
                    }
                }
            }
        }
        loss_history.push(sgns_objective(
            &sentences,
            &input,
            &output,
            ngram_vecs.as_ref().map(|nv| (nv, word_ngrams.as_slice())),
            &sampler,
            config,
        ));
    }

    let ngrams = ngram_vecs.map(|vectors| NgramTable {
        range: subword.unwrap_or((0, 0)),
        grams,
        index: gram_index,
        vectors,
    });
    let family = if subword.is_some() {
        Family::Subword
    } else {
        Family::Skipgram
    };
    Ok(EmbeddingMatrix {
        family,
        vocab: vocab.clone(),
        input_vectors: input,
        output_vectors: output,
        word_ngrams: if ngrams.is_some() { word_ngrams } else { Vec::new() },
        ngrams,
        loss_history,
    })
}

/// Mean negative-sampling loss over every (centre, context) pair with the
/// parameters frozen. Negatives come from a stream reset on each call, so
/// successive epochs are scored on identical terms.
fn sgns_objective(
    sentences: &[Vec<usize>],
    input: &Tensor,
    output: &Tensor,
    ngrams: Option<(&Tensor, &[Vec<usize>])>,
    sampler: &WeightedIndex<f64>,
    config: &EuclidConfig,
) -> f64 {
    let mut rng = rng::stream(config.seed, "skipgram-eval");
    let mut center = vec![0.0; input.cols()];
    let (mut total, mut terms) = (0.0, 0usize);
    for sent in sentences {
        for (c, &w) in sent.iter().enumerate() {
            center.copy_from_slice(input.row(w));
            if let Some((nv, per_word)) = ngrams {
                for &g in &per_word[w] {
                    axpy(&mut center, 1.0, nv.row(g));
                }
            }
            let lo = c.saturating_sub(config.window);
            let hi = (c + config.window).min(sent.len() - 1);
            for (o, &target) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                if o == c {
                    continue;
                }
                total += softplus(-dot(output.row(target), &center));
                for _ in 0..config.negatives {
                    let n = sampler.sample(&mut rng);
                    if n != target {
                        total += softplus(dot(output.row(n), &center));
                    }
                }
                terms += 1;
            }
        }
    }
    if terms > 0 {
        total / terms as f64
    } else {
        0.0
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Symmetric word co-occurrence weights keyed by vocabulary index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CooccurrenceTable {
    entries: BTreeMap<(usize, usize), f64>,
}

impl CooccurrenceTable {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &x)| (i, j, x))
    }
}

/// Every pair of tokens at distance `d <= window` within a sentence adds
/// `1/d` to both `X_ij` and `X_ji`.
pub fn build_cooccurrence(posts: &[AnnotatedPost], vocab: &Vocabulary, window: usize) -> Result<CooccurrenceTable> {
    if window < 1 {
        return Err(Error::contract("window must be >= 1"));
    }
    let mut entries = BTreeMap::new();
    for sent in vocab.encode_sentences(posts) {
        for p in 0..sent.len() {
            for q in p + 1..sent.len().min(p + window + 1) {
                let w = 1.0 / (q - p) as f64;
                *entries.entry((sent[p], sent[q])).or_insert(0.0) += w;
                *entries.entry((sent[q], sent[p])).or_insert(0.0) += w;
            }
        }
    }
    Ok(CooccurrenceTable { entries })
}

/// GloVe weighting `f(x) = (x / x_max)^alpha`, capped at 1.
pub fn glove_weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

/// One weighted least-squares term and its gradients with respect to
/// `(w_i, w~_j, b_i, b~_j)`.
pub struct GloveTerm {
    pub loss: f64,
    pub d_word: Vec<f64>,
    pub d_context: Vec<f64>,
    pub d_bias: f64,
    pub d_context_bias: f64,
}

pub fn glove_term(
    word: &[f64],
    context: &[f64],
    bias: f64,
    context_bias: f64,
    x: f64,
    x_max: f64,
    alpha: f64,
) -> GloveTerm {
    let f = glove_weight(x, x_max, alpha);
    let diff = dot(word, context) + bias + context_bias - x.ln();
    let fd = f * diff;
    GloveTerm {
        loss: 0.5 * f * diff * diff,
        d_word: context.iter().map(|c| fd * c).collect(),
        d_context: word.iter().map(|w| fd * w).collect(),
        d_bias: fd,
        d_context_bias: fd,
    }
}

pub fn train_glove(table: &CooccurrenceTable, vocab: &Vocabulary, config: &EuclidConfig) -> Result<EmbeddingMatrix> {
    config.validate()?;
    if table.is_empty() {
        return Err(Error::Training("empty co-occurrence table".into()));
    }
    if let Some((i, j, _)) = table.iter().find(|&(i, j, _)| i >= vocab.len() || j >= vocab.len()) {
        return Err(Error::contract(format!(
            "co-occurrence entry ({i},{j}) outside vocabulary"
        )));
    }
    let dim = config.dim;
    let v = vocab.len();
    let mut rng = rng::stream(config.seed, "glove");
    let mut w = uniform_init(&mut rng, v, dim);
    let mut wt = uniform_init(&mut rng, v, dim);
    let bound = 0.5 / dim as f64;
    let mut b: Vec<f64> = (0..v).map(|_| rng.gen_range(-bound..=bound)).collect();
    let mut bt: Vec<f64> = (0..v).map(|_| rng.gen_range(-bound..=bound)).collect();
    // AdaGrad accumulators start at 1 so the first step is the base rate.
    let mut gw = vec![1.0f64; v * dim];
    let mut gwt = vec![1.0f64; v * dim];
    let mut gb = vec![1.0f64; v];
    let mut gbt = vec![1.0f64; v];

    let mut entries: Vec<(usize, usize, f64)> = table.iter().collect();
    let lr = config.glove_learning_rate;
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        entries.shuffle(&mut rng);
        let mut total = 0.0;
        for &(i, j, x) in &entries {
            let term = glove_term(
                w.row(i),
                wt.row(j),
                b[i],
                bt[j],
                x,
                config.glove_x_max,
                config.glove_alpha,
            );
            total += term.loss;
            let wd = w.data_mut();
            for k in 0..dim {
                let g = term.d_word[k];
                wd[i * dim + k] -= lr * g / gw[i * dim + k].sqrt();
                gw[i * dim + k] += g * g;
            }
            let wtd = wt.data_mut();
            for k in 0..dim {
                let g = term.d_context[k];
                wtd[j * dim + k] -= lr * g / gwt[j * dim + k].sqrt();
                gwt[j * dim + k] += g * g;
            }
            b[i] -= lr * term.d_bias / gb[i].sqrt();
            gb[i] += term.d_bias * term.d_bias;
            bt[j] -= lr * term.d_context_bias / gbt[j].sqrt();
            gbt[j] += term.d_context_bias * term.d_context_bias;
        }
        loss_history.push(total / entries.len() as f64);
    }

    let summed = w.zip_map(&wt, |a, c| a + c);
    Ok(EmbeddingMatrix {
        family: Family::Glove,
        vocab: vocab.clone(),
        input_vectors: summed,
        output_vectors: wt,
        ngrams: None,
        loss_history,
        word_ngrams: Vec::new(),
    })
}

/// Builds the vocabulary from `posts` and trains `family`.
pub fn train_family(family: Family, posts: &[AnnotatedPost], config: &EuclidConfig) -> Result<EmbeddingMatrix> {
    config.validate()?;
    let vocab = crate::corpus::build_vocab(posts, config.min_count)?;
    match family {
        Family::Skipgram => train_skipgram(posts, &vocab, config),
        Family::Subword => train_subword_skipgram(posts, &vocab, config),
        Family::Glove => {
            let table = build_cooccurrence(posts, &vocab, config.window)?;
            train_glove(&table, &vocab, config)
        }
    }
}

/// Exact top-`k` neighbours of `token` by cosine similarity, excluding the
/// token itself. Ties are broken lexicographically.
pub fn nearest_neighbors(emb: &EmbeddingMatrix, token: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let query = emb.word_vector(token)?;
    let table = emb.word_table();
    neighbors_in_table(&table, &query, Some(token), k)
}

/// Top-`k` rows of `table` by cosine similarity to `query`.
pub fn neighbors_in_table(
    table: &WordTable,
    query: &[f64],
    exclude: Option<&str>,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let pool = table.len() - usize::from(exclude.is_some_and(|t| table.index_of(t).is_some()));
    if k < 1 || k > pool {
        return Err(Error::contract(format!("k must be in 1..={pool}, got {k}")));
    }
    let mut scored: Vec<(String, f64)> = table
        .rows()
        .filter(|(t, _)| Some(*t) != exclude)
        .map(|(t, v)| (t.to_string(), cosine(query, v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
