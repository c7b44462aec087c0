//! Poincaré-ball embeddings of the word-sentence relation graph.
//!
//! Every sentence becomes a node linked to each distinct word it contains.
//! Training pulls linked nodes together under the hyperbolic distance and
//! pushes sampled non-neighbours apart, using Riemannian SGD: the Euclidean
//! gradient is rescaled by the inverse metric `(1 - |x|^2)^2 / 4` and the
//! iterate is projected back inside the ball.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{AnnotatedPost, Vocabulary};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::rng;
use crate::wordvec::{write_vectors, WordTable};

/// Prefix that keeps sentence node names apart from word tokens.
pub const SENTENCE_PREFIX: &str = "@s/";

/// Bipartite word-sentence graph. Words occupy node indices
/// `0..word_count`, sentences follow.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationGraph {
    pub nodes: Vec<String>,
    pub word_count: usize,
    /// `(word node, sentence node)` pairs, deduplicated.
    pub edges: BTreeSet<(usize, usize)>,
}

impl RelationGraph {
    pub fn is_word(&self, node: usize) -> bool {
        node < self.word_count
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(w, s)| w == node || s == node).count()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    /// `word<TAB>sentence_id` lines, one per edge.
    pub fn write_tsv(&self, mut w: impl Write) -> Result<()> {
        for &(word, sent) in &self.edges {
            writeln!(w, "{}\t{}", self.nodes[word], self.nodes[sent])?;
        }
        Ok(())
    }
}

/// One sentence node per (post, sentence index), one edge per distinct word in
/// that sentence. With a vocabulary, rare words collapse onto UNK.
pub fn build_relation_graph(posts: &[AnnotatedPost], vocab: Option<&Vocabulary>) -> RelationGraph {
    let mut word_index: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<String> = Vec::new();
    let mut sentences: Vec<String> = Vec::new();
    let mut raw_edges: Vec<(usize, usize)> = Vec::new();
    for post in posts {
        for (k, sent) in post.sentences.iter().enumerate() {
            if sent.is_empty() {
                continue;
            }
            let s = sentences.len();
            sentences.push(format!(
                "{SENTENCE_PREFIX}{}/{k}",
                post.id.replace(char::is_whitespace, "_")
            ));
            for tok in sent {
                let name = match vocab {
                    Some(v) => v.token(v.index_or_unk(tok)).to_string(),
                    None => tok.clone(),
                };
                let w = *word_index.entry(name.clone()).or_insert_with(|| {
                    words.push(name);
                    words.len() - 1
                });
                raw_edges.push((w, s));
            }
        }
    }
    let word_count = words.len();
    let edges = raw_edges.into_iter().map(|(w, s)| (w, word_count + s)).collect();
    let mut nodes = words;
    nodes.extend(sentences);
    RelationGraph {
        nodes,
        word_count,
        edges,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareConfig {
    pub dim: usize,
    pub learning_rate: f64,
    /// Leading epochs trained at `learning_rate * burn_in_lr_factor`.
    pub burn_in_epochs: usize,
    pub burn_in_lr_factor: f64,
    pub negatives: usize,
    /// Total epochs, burn-in included.
    pub epochs: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        PoincareConfig {
            dim: 200,
            learning_rate: 0.3,
            burn_in_epochs: 10,
            burn_in_lr_factor: 0.01,
            negatives: 10,
            epochs: 50,
            epsilon: 1e-5,
            seed: 1,
        }
    }
}

impl PoincareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config("poincare.dim must be >= 2".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.1) {
            return Err(Error::Config("poincare.epsilon must be in (0, 0.1)".into()));
        }
        if self.negatives < 1 {
            return Err(Error::Config("poincare.negatives must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.burn_in_lr_factor >= 0.0) {
            return Err(Error::Config("poincare learning rates must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareEmbedding {
    pub epsilon: f64,
    pub names: Vec<String>,
    pub index: HashMap<String, usize>,
    pub word_count: usize,
    /// `n x dim`, every row inside the ball of radius `1 - epsilon`.
    pub vectors: Tensor,
    pub loss_history: Vec<f64>,
}

impl PoincareEmbedding {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.vectors.row(i))
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.vectors.rows())
            .map(|i| norm_sq(self.vectors.row(i)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Word-node vectors only; sentence nodes are training scaffolding.
    pub fn word_table(&self) -> WordTable {
        let dim = self.dim();
        let data = (0..self.word_count)
            .flat_map(|i| self.vectors.row(i).iter().copied())
            .collect();
        WordTable::new(self.names[..self.word_count].to_vec(), dim, data).expect("unique node names")
    }

    pub fn save(&self, w: impl Write) -> Result<()> {
        let table = self.word_table();
        let comment = format!("space=poincare epsilon={}", self.epsilon);
        write_vectors(w, Some(&comment), self.dim(), table.rows())
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dist_sq(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn distance_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let alpha = 1.0 - norm_sq(u);
    let beta = 1.0 - norm_sq(v);
    let z = 2.0 * dist_sq(u, v) / (alpha * beta);
    // arccosh(1 + z), accurate for small z
    (z + (z * (z + 2.0)).sqrt()).ln_1p()
}

/// Hyperbolic distance `arccosh(1 + 2|u-v|^2 / ((1-|u|^2)(1-|v|^2)))`.
pub fn poincare_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            op: "poincare_distance",
            left: vec![u.len()],
            right: vec![v.len()],
        });
    }
    for (name, x) in [("u", u), ("v", v)] {
        let n = norm_sq(x);
        if !(n < 1.0) {
            return Err(Error::Domain(format!(
                "{name} has norm {} outside the open unit ball",
                n.sqrt()
            )));
        }
    }
    Ok(distance_unchecked(u, v))
}

/// Euclidean gradient of `d(u, v)` with respect to `u`.
pub fn distance_grad_u(u: &[f64], v: &[f64]) -> Vec<f64> {
    let uu = norm_sq(u);
    let vv = norm_sq(v);
    let uv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let alpha = 1.0 - uu;
    let beta = 1.0 - vv;
    let gamma = 1.0 + 2.0 * dist_sq(u, v) / (alpha * beta);
    let root = (gamma * gamma - 1.0).max(0.0).sqrt();
    if root == 0.0 {
        return vec![0.0; u.len()];
    }
    let scale = 4.0 / (beta * root.max(1e-12));
    let cu = (vv - 2.0 * uv + 1.0) / (alpha * alpha);
    u.iter().zip(v).map(|(&a, &b)| scale * (cu * a - b / alpha)).collect()
}

/// Rescales `v` in place so that `|v| <= 1 - epsilon`.
fn project(v: &mut [f64], epsilon: f64) {
    let bound = 1.0 - epsilon;
    let mut n = norm_sq(v).sqrt();
    if n >= bound {
        let s = bound / n;
        v.iter_mut().for_each(|x| *x *= s);
        n = norm_sq(v).sqrt();
        while n > bound {
            v.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
            n = norm_sq(v).sqrt();
        }
    }
}

/// One Riemannian SGD step: `project(theta - lr * (1-|theta|^2)^2/4 * grad)`.
pub fn riemannian_update(theta: &[f64], euclid_grad: &[f64], lr: f64, epsilon: f64) -> Vec<f64> {
    let t = norm_sq(theta);
    debug_assert!(t < 1.0, "theta outside the ball");
    let factor = (1.0 - t) * (1.0 - t) / 4.0;
    let mut out: Vec<f64> = theta
        .iter()
        .zip(euclid_grad)
        .map(|(&x, &g)| x - lr * factor * g)
        .collect();
    project(&mut out, epsilon);
    out
}

/// Softmax ranking loss over `{v} ∪ negatives` and its gradient with respect
/// to every distance: `d0 + log sum_j exp(-d_j)`.
pub fn ranking_loss(distances: &[f64]) -> (f64, Vec<f64>) {
    let m = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = distances.iter().map(|d| (-(d - m)).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = distances[0] - m + z.ln();
    let grads = exps
        .iter()
        .enumerate()
        .map(|(j, e)| -e / z + if j == 0 { 1.0 } else { 0.0 })
        .collect();
    (loss, grads)
}

pub fn train_poincare(graph: &RelationGraph, config: &PoincareConfig) -> Result<PoincareEmbedding> {
    config.validate()?;
    if graph.edges.is_empty() {
        return Err(Error::Training("empty relation graph".into()));
    }
    let n = graph.nodes.len();
    let dim = config.dim;
    let mut rng = rng::stream(config.seed, "poincare");
    let init: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-0.001..=0.001)).collect();
    let mut vectors = Tensor::matrix(n, dim, init);
    for i in 0..n {
        project(&mut vectors.data_mut()[i * dim..(i + 1) * dim], config.epsilon);
    }

    let mut neighbours: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for &(w, s) in &graph.edges {
        neighbours[w].insert(s);
        neighbours[s].insert(w);
    }
    let mut edges: Vec<(usize, usize)> = graph.edges.iter().copied().collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut targets: Vec<usize> = Vec::with_capacity(config.negatives + 1);

    for epoch in 0..config.epochs {
        let lr = if epoch < config.burn_in_epochs {
            config.learning_rate * config.burn_in_lr_factor
        } else {
            config.learning_rate
        };
        edges.shuffle(&mut rng);
        let mut total = 0.0;
        for &(u, v) in &edges {
            targets.clear();
            targets.push(v);
            for _ in 0..config.negatives {
                let mut cand = rng.gen_range(0..n);
                for _ in 0..10 {
                    if cand != u && !neighbours[u].contains(&cand) {
                        break;
                    }
                    cand = rng.gen_range(0..n);
                }
                targets.push(cand);
            }
            let uvec = vectors.row(u).to_vec();
            let dists: Vec<f64> = targets
                .iter()
                .map(|&t| distance_unchecked(&uvec, vectors.row(t)))
                .collect();
            let (loss, dl) = ranking_loss(&dists);
            total += loss;

            let mut grad_u = vec![0.0; dim];
            let mut grad_t: Vec<(usize, Vec<f64>)> = Vec::with_capacity(targets.len());
            for (&t, &g) in targets.iter().zip(&dl) {
                if t == u || g == 0.0 {
                    continue;
                }
                let tvec = vectors.row(t);
                for (a, b) in grad_u.iter_mut().zip(distance_grad_u(&uvec, tvec)) {
                    *a += g * b;
                }
                let gt: Vec<f64> = distance_grad_u(tvec, &uvec).into_iter().map(|x| g * x).collect();
                match grad_t.iter_mut().find(|(id, _)| *id == t) {
                    Some((_, acc)) => acc.iter_mut().zip(&gt).for_each(|(a, b)| *a += b),
                    None => grad_t.push((t, gt)),
                }
            }
            let new_u = riemannian_update(&uvec, &grad_u, lr, config.epsilon);
            vectors.data_mut()[u * dim..(u + 1) * dim].copy_from_slice(&new_u);
            for (t, g) in grad_t {
                let new_t = riemannian_update(vectors.row(t), &g, lr, config.epsilon);
                vectors.data_mut()[t * dim..(t + 1) * dim].copy_from_slice(&new_t);
            }
            debug_assert!(
                (0..n).all(|i| norm_sq(vectors.row(i)).sqrt() <= 1.0 - config.epsilon),
                "ball invariant violated"
            );
        }
        loss_history.push(total / edges.len() as f64);
    }

    let index = graph.nodes.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(PoincareEmbedding {
        epsilon: config.epsilon,
        names: graph.nodes.clone(),
        index,
        word_count: graph.word_count,
        vectors,
        loss_history,
    })
}

/// The `k` rows of `table` closest to `query` in Poincaré distance, nearest
/// first, skipping `exclude`.
pub fn poincare_neighbors(
    table: &WordTable,
    query: &[f64],
    exclude: Option<&str>,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let pool = table.len() - usize::from(exclude.is_some_and(|t| table.index_of(t).is_some()));
    if k < 1 || k > pool {
        return Err(Error::contract(format!("k must be in 1..={pool}, got {k}")));
    }
    let mut scored = Vec::with_capacity(pool);
    for (t, v) in table.rows().filter(|(t, _)| Some(*t) != exclude) {
        scored.push((t.to_string(), poincare_distance(query, v)?));
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Projects the selected vectors onto their first two principal components,
/// scaled down into the unit disk when needed.
pub fn export_2d_projection(emb: &PoincareEmbedding, entities: &[&str]) -> Result<Vec<(String, f64, f64)>> {
    let dim = emb.dim();
    let rows: Vec<&[f64]> = entities
        .iter()
        .map(|e| emb.vector(e).ok_or_else(|| Error::Lookup(format!("entity `{e}`"))))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let centred = DMatrix::from_fn(rows.len(), dim, |i, k| rows[i][k] - mean[k]);
    let cov = centred.transpose() * &centred;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut axes: Vec<Option<Vec<f64>>> = Vec::new();
    for &k in order.iter().take(2) {
        let lambda = eig.eigenvalues[k];
        if top <= 0.0 || lambda <= 1e-12 * top {
            axes.push(None);
            continue;
        }
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        // sign convention: largest-magnitude component positive
        let pivot = axis
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(Some(axis));
    }
    let coord = |i: usize, axis: &Option<Vec<f64>>| -> f64 {
        axis.as_ref()
            .map_or(0.0, |a| centred.row(i).iter().zip(a).map(|(x, y)| x * y).sum())
    };
    let mut pts: Vec<(String, f64, f64)> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| {
            (
                e.to_string(),
                coord(i, &axes[0]),
                coord(i, &axes.get(1).cloned().flatten()),
            )
        })
        .collect();
    let max = pts.iter().map(|(_, x, y)| x.hypot(*y)).fold(0.0, f64::max);
    if max > 1.0 {
        for p in &mut pts {
            p.1 /= max;
            p.2 /= max;
        }
    }
    Ok(pts)
}
