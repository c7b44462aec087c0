//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use twotier::classifier::{ClassifierConfig, Example, TrainedClassifier};
use twotier::corpus::{annotate, split_holdout, Annotation, Label, ReactionCounts};
use twotier::euclid::{glove_term, sgns_term, train_family, EuclidConfig, Family};
use twotier::harness::{compute_metrics, run_experiment, ExperimentSpec, SentenceEncoderKind, WordEmbeddingKind};
use twotier::hyperbolic::{build_relation_graph, distance_grad_u, poincare_distance, train_poincare, PoincareConfig};
use twotier::layers::{attend, CellKind, CellState, RecurrentCell};
use twotier::numeric::{grad_check, max_relative_error, numeric_gradient, Graph, ParamStore, Tensor};
use twotier::rng::{self, Rng as StreamRng};
use twotier::sentence::{pool, reconstruction_accuracy, train_autoencoder, PoolingMode, Seq2SeqConfig};
use twotier::wordvec::{cosine, WordTable};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(r: &mut StreamRng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-bound..bound)).collect()
}

fn in_ball(r: &mut StreamRng, dim: usize, max_norm: f64) -> Vec<f64> {
    let v: Vec<f64> = uniform(r, dim, 1.0);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let radius = max_norm * r.gen::<f64>();
    v.iter().map(|x| x * radius / n).collect()
}

// ---------------------------------------------------------------- criterion 1

const GRAD_TOL: f64 = 1e-4;
const GRAD_POINTS: u64 = 10;

fn grad_skipgram(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "accept-sgns");
    let dim = 8;
    let center = uniform(&mut r, dim, 0.5);
    let pos = uniform(&mut r, dim, 0.5);
    let negs: Vec<Vec<f64>> = (0..5).map(|_| uniform(&mut r, dim, 0.5)).collect();
    let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
    let t = sgns_term(&center, &pos, &neg_refs);
    let mut all = center.clone();
    all.extend(&pos);
    negs.iter().for_each(|n| all.extend(n));
    let f = |x: &[f64]| {
        let n: Vec<&[f64]> = x[2 * dim..].chunks(dim).collect();
        sgns_term(&x[..dim], &x[dim..2 * dim], &n).loss
    };
    let numeric = numeric_gradient(f, &all, 1e-6);
    let mut analytic = t.d_center.clone();
    analytic.extend(&t.d_positive);
    t.d_negatives.iter().for_each(|n| analytic.extend(n));
    max_relative_error(&analytic, &numeric)
}

fn grad_glove(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "accept-glove");
    let dim = 8;
    let mut all = uniform(&mut r, 2 * dim + 2, 0.5);
    let x = r.gen_range(0.5..200.0);
    let (x_max, alpha) = (100.0, 0.75);
    let eval = |v: &[f64]| glove_term(&v[..dim], &v[dim..2 * dim], v[2 * dim], v[2 * dim + 1], x, x_max, alpha);
    let t = eval(&all);
    let numeric = numeric_gradient(|v| eval(v).loss, &all, 1e-6);
    let mut analytic = t.d_word.clone();
    analytic.extend(&t.d_context);
    analytic.push(t.d_bias);
    analytic.push(t.d_context_bias);
    all.clear();
    max_relative_error(&analytic, &numeric)
}

fn grad_poincare(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "accept-poincare-grad");
    let u = in_ball(&mut r, 5, 0.9);
    let v = in_ball(&mut r, 5, 0.9);
    let numeric_u = numeric_gradient(|x| poincare_distance(x, &v).unwrap(), &u, 1e-7);
    let numeric_v = numeric_gradient(|x| poincare_distance(&u, x).unwrap(), &v, 1e-7);
    max_relative_error(&distance_grad_u(&u, &v), &numeric_u)
        .max(max_relative_error(&distance_grad_u(&v, &u), &numeric_v))
}

/// Max relative error of one cell step, w.r.t. the input and every parameter.
fn grad_cell(kind: CellKind, seed: u64) -> f64 {
    let mut r = rng::stream(seed, "accept-cell");
    let (input, hidden) = (3, 4);
    let mut store = ParamStore::new();
    let cell = RecurrentCell::new(&mut store, "cell", kind, input, hidden, &mut r);
    // Non-zero biases so the bias gradients are exercised at generic points.
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.8..0.8));
    }
    let x = Tensor::row_vector(uniform(&mut r, input, 1.0));
    let h0 = Tensor::row_vector(uniform(&mut r, hidden, 0.8));
    let c0 = Tensor::row_vector(uniform(&mut r, hidden, 0.8));
    let w_out = Tensor::row_vector(uniform(&mut r, hidden, 1.0));
    let w_c = Tensor::row_vector(uniform(&mut r, hidden, 1.0));
    let readout = |g: &mut Graph, s: CellState| -> twotier::Result<twotier::numeric::NodeId> {
        let w = g.constant(w_out.clone());
        let m = g.mul(s.h, w)?;
        let mut total = g.sum(m);
        if let Some(c) = s.c {
            let wc = g.constant(w_c.clone());
            let mc = g.mul(c, wc)?;
            let sc = g.sum(mc);
            total = g.add(total, sc)?;
        }
        Ok(total)
    };
    let state = |g: &mut Graph| CellState {
        h: g.constant(h0.clone()),
        c: (kind == CellKind::Lstm).then(|| g.constant(c0.clone())),
    };
    let mut worst = grad_check(
        |g, xn| {
            let p = store.bind_frozen(g);
            let s = state(g);
            let s = cell.step(g, &p, xn, s)?;
            readout(g, s)
        },
        &x,
        1e-5,
    )
    .unwrap();
    for pr in store.refs().collect::<Vec<_>>() {
        let err = grad_check(
            |g, leaf| {
                let p = store.bind_replacing(g, pr, leaf);
                let xn = g.constant(x.clone());
                let s = state(g);
                let s = cell.step(g, &p, xn, s)?;
                readout(g, s)
            },
            store.get(pr),
            1e-5,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

fn grad_attention(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "accept-attn");
    let d = 4;
    let q = Tensor::row_vector(uniform(&mut r, d, 1.0));
    let keys = Tensor::matrix(5, d, uniform(&mut r, 5 * d, 1.0));
    let w = Tensor::row_vector(uniform(&mut r, d, 1.0));
    let wq = Tensor::row_vector(uniform(&mut r, 5, 1.0));
    let loss = |g: &mut Graph, qn, kn| -> twotier::Result<twotier::numeric::NodeId> {
        let (ctx, weights) = attend(g, qn, kn)?;
        let wn = g.constant(w.clone());
        let m = g.mul(ctx, wn)?;
        let a = g.sum(m);
        // also read the weights so their gradient path is covered on its own
        let wt = g.transpose(weights)?;
        let wqn = g.constant(wq.clone());
        let m2 = g.mul(wt, wqn)?;
        let b = g.sum(m2);
        g.add(a, b)
    };
    let e1 = grad_check(
        |g, qn| {
            let kn = g.constant(keys.clone());
            loss(g, qn, kn)
        },
        &q,
        1e-5,
    )
    .unwrap();
    let e2 = grad_check(
        |g, kn| {
            let qn = g.constant(q.clone());
            loss(g, qn, kn)
        },
        &keys,
        1e-5,
    )
    .unwrap();
    e1.max(e2)
}

fn grad_classifier(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "accept-clf");
    let config = ClassifierConfig {
        conv_filters: 3,
        kernel_width: 3,
        gru_hidden: 4,
        dropout: 0.0,
        seed,
        ..Default::default()
    };
    let mut clf = TrainedClassifier::new(config, 4).unwrap();
    for t in clf.params_mut().tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.8..0.8));
    }
    let ex = Example {
        features: (0..3).map(|_| uniform(&mut r, 4, 1.0)).collect(),
        label: if r.gen_bool(0.5) {
            Label::Positive
        } else {
            Label::Negative
        },
    };
    let store = clf.params().clone();
    let mut worst: f64 = 0.0;
    for pr in store.refs().collect::<Vec<_>>() {
        let err = grad_check(
            |g, leaf| {
                let p = store.bind_replacing(g, pr, leaf);
                clf.loss_node(g, &p, &ex, None)
            },
            store.get(pr),
            1e-5,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

fn criterion_1() -> Outcome {
    let checks: Vec<(&str, Box<dyn Fn(u64) -> f64>)> = vec![
        ("skipgram", Box::new(grad_skipgram)),
        ("glove", Box::new(grad_glove)),
        ("poincare", Box::new(grad_poincare)),
        ("rnn", Box::new(|s| grad_cell(CellKind::SimpleRnn, s))),
        ("gru", Box::new(|s| grad_cell(CellKind::Gru, s))),
        ("lstm", Box::new(|s| grad_cell(CellKind::Lstm, s))),
        ("attention", Box::new(grad_attention)),
        ("classifier", Box::new(grad_classifier)),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, f) in &checks {
        let worst = (1..=GRAD_POINTS).map(|s| f(s)).fold(0.0, f64::max);
        ok &= worst < GRAD_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    check(ok, format!("max rel err < {GRAD_TOL:e}: {}", parts.join(", ")))
}

// ---------------------------------------------------------------- criterion 2

/// Distance through the textbook arccosh form, evaluated in a separate way
/// from the library (explicit log formula on the raw ratio).
fn oracle_distance(u: &[f64], v: &[f64]) -> f64 {
    let sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let x = 1.0 + 2.0 * sq(&diff) / ((1.0 - sq(u)) * (1.0 - sq(v)));
    (x + (x * x - 1.0).sqrt()).ln()
}

fn criterion_2() -> Outcome {
    let mut r = rng::stream(2, "accept-metric");
    let mut worst_sym: f64 = 0.0;
    let mut worst_tri: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    let mut negatives = 0;
    for _ in 0..1000 {
        let dim = r.gen_range(2..=6);
        let u = in_ball(&mut r, dim, 0.99);
        let v = in_ball(&mut r, dim, 0.99);
        let w = in_ball(&mut r, dim, 0.99);
        let d = |a: &[f64], b: &[f64]| poincare_distance(a, b).unwrap();
        let (uv, vu, uw, wv) = (d(&u, &v), d(&v, &u), d(&u, &w), d(&w, &v));
        if uv < 0.0 || uw < 0.0 || wv < 0.0 {
            negatives += 1;
        }
        worst_self = worst_self.max(d(&u, &u).abs());
        worst_sym = worst_sym.max((uv - vu).abs());
        worst_tri = worst_tri.max(uv - (uw + wv));
    }
    let d_ref = poincare_distance(&[0.5, 0.0], &[0.0, 0.5]).unwrap();
    let oracle = oracle_distance(&[0.5, 0.0], &[0.0, 0.5]);
    // closed form: arccosh(1 + 2 * 0.5 / 0.5625) = arccosh(25/9) = ln(25/9 + sqrt(544)/9)
    let closed = ((25.0 + 544f64.sqrt()) / 9.0).ln();

    let emb = train_poincare(
        &build_relation_graph(&common::star_posts(), None),
        &PoincareConfig {
            seed: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let bound = 1.0 - emb.epsilon;
    let max_norm = emb.max_norm();
    let ok = negatives == 0
        && worst_self == 0.0
        && worst_sym <= 1e-12
        && worst_tri <= 1e-9
        && (d_ref - oracle).abs() <= 1e-6
        && (d_ref - closed).abs() <= 1e-6
        && (d_ref - 1.6807).abs() < 1e-4
        && max_norm <= bound;
    check(
        ok,
        format!(
            "negatives {negatives}, |d(u,u)| {worst_self:e}, symmetry {worst_sym:.1e}, triangle excess {worst_tri:.1e}, \
             d((.5,0),(0,.5)) = {d_ref:.10} (oracle {oracle:.10}), trained max norm {max_norm} <= {bound}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let graph = build_relation_graph(&common::star_posts(), None);
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in 1..=3 {
        let emb = train_poincare(
            &graph,
            &PoincareConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let vec_of = |i: usize| emb.vectors.row(i);
        let (mut edge, mut non) = (Vec::new(), Vec::new());
        for w in 0..graph.word_count {
            for s in graph.word_count..graph.nodes.len() {
                let d = poincare_distance(vec_of(w), vec_of(s)).unwrap();
                if graph.edges.contains(&(w, s)) {
                    edge.push(d);
                } else {
                    non.push(d);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (me, mn) = (mean(&edge), mean(&non));
        ok &= me < mn;
        parts.push(format!("seed {seed}: edge {me:.3} < non-edge {mn:.3}"));
    }
    check(ok, parts.join("; "))
}

// ---------------------------------------------------------------- criterion 4

const SEPARATION: f64 = 0.2;

fn separation(table: &WordTable, a: &[String], b: &[String]) -> f64 {
    let v = |t: &String| table.get(t).expect("topic word in vocabulary");
    let mut intra = Vec::new();
    for group in [a, b] {
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                intra.push(cosine(v(&group[i]), v(&group[j])));
            }
        }
    }
    let inter: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| (x, y)))
        .map(|(x, y)| cosine(v(x), v(y)))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    mean(&intra) - mean(&inter)
}

fn criterion_4() -> Outcome {
    let (posts, a, b) = common::two_cluster_corpus(4);
    let mut parts = Vec::new();
    let mut ok = true;
    for family in [Family::Skipgram, Family::Subword, Family::Glove] {
        let mut gaps = Vec::new();
        for seed in 1..=3 {
            let cfg = EuclidConfig {
                seed,
                ..Default::default()
            };
            let emb = train_family(family, &posts, &cfg).unwrap();
            let gap = separation(&emb.word_table(), &a, &b);
            ok &= gap >= SEPARATION;
            gaps.push(format!("{gap:.3}"));
        }
        parts.push(format!("{} [{}]", family.name(), gaps.join(" ")));
    }
    check(
        ok,
        format!("intra - inter cosine >= {SEPARATION}: {}", parts.join(", ")),
    )
}

// ---------------------------------------------------------------- criterion 5

fn toy_table(dim: usize) -> WordTable {
    let mut r = rng::stream(5, "accept-toy-table");
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let data = uniform(&mut r, words.len() * dim, 1.0);
    WordTable::new(words, dim, data).unwrap()
}

fn toy_config(seed: u64, attention: bool, epochs: usize) -> Seq2SeqConfig {
    Seq2SeqConfig {
        cell: CellKind::Gru,
        attention,
        hidden_dim: 16,
        epochs,
        seed,
        ..Default::default()
    }
}

/// Moving average of `xs` with window `w`, one value per full window.
fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    xs.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

fn criterion_5() -> Outcome {
    let table = toy_table(16);
    let model = train_autoencoder(&common::toy_posts(), &table, &toy_config(5, false, 300)).unwrap();
    let acc = reconstruction_accuracy(&model, &common::toy_sentences(), &table).unwrap();
    let ma = moving_average(&model.sequence_loss_history, 50);
    let tail = &ma[ma.len() - 50..];
    let rises = tail.windows(2).filter(|w| w[1] > w[0]).count();
    check(
        acc >= 0.9 && rises == 0,
        format!(
            "reconstruction accuracy {:.3} (>= 0.90); moving-average (50) sequence loss over last 50 epochs: {:.4e} -> {:.4e}, {rises} increases",
            acc,
            tail[0],
            tail[tail.len() - 1]
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let table = toy_table(16);
    let sentences = common::toy_sentences();
    let mut pairs: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let mut r = rng::stream(7, "accept-permute");
    for s in &sentences {
        let mut p = s.clone();
        while &p == s {
            p.shuffle(&mut r);
            if s.iter().collect::<HashSet<_>>().len() == 1 {
                break;
            }
        }
        if &p != s {
            pairs.push((s.clone(), p));
        }
    }
    let vecs = |s: &[String]| -> Vec<Vec<f64>> { s.iter().map(|t| table.lookup(t).to_vec()).collect() };
    let mut pooled_equal = true;
    for (a, b) in &pairs {
        for mode in [PoolingMode::Max, PoolingMode::Min, PoolingMode::Avg] {
            pooled_equal &= pool(&vecs(a), mode).unwrap() == pool(&vecs(b), mode).unwrap();
        }
    }
    let model = train_autoencoder(&common::toy_posts(), &table, &toy_config(7, false, 100)).unwrap();
    let min_linf = pairs
        .iter()
        .map(|(a, b)| {
            let (ca, cb) = (model.encode(&vecs(a)).unwrap(), model.encode(&vecs(b)).unwrap());
            ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    check(
        pooled_equal && min_linf > 1e-3,
        format!(
            "{} permuted pairs: pooled vectors identical = {pooled_equal}; min seq2seq L-inf gap {min_linf:.4} (> 1e-3)",
            pairs.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let posts = common::negation_corpus(2000, 7);
    let split = split_holdout(&posts, 7).unwrap();
    let cfg = common::small_run_config();
    let seeds: Vec<u64> = (1..=5).collect();
    let run = |enc| {
        run_experiment(
            &ExperimentSpec {
                word_embedding: WordEmbeddingKind::Skipgram,
                sentence_encoder: enc,
                seeds: seeds.clone(),
            },
            &split,
            &cfg,
        )
        .unwrap()
    };
    let attn = run(SentenceEncoderKind::Seq2SeqGruAttn);
    let avg = run(SentenceEncoderKind::AvgPool);

    let train_pos = split.train.iter().filter(|p| p.label == Label::Positive).count();
    let majority = if 2 * train_pos >= split.train.len() {
        Label::Positive
    } else {
        Label::Negative
    };
    let test_labels: Vec<Label> = split.test.iter().map(|p| p.label).collect();
    let base = compute_metrics(&vec![majority; test_labels.len()], &test_labels).unwrap();

    let gap = attn.mean.f1 - avg.mean.f1;
    let ok = gap >= 0.05
        && attn.mean.f1 > base.f1
        && avg.mean.f1 > base.f1
        && attn.mean.accuracy > base.accuracy
        && avg.mean.accuracy > base.accuracy;
    check(
        ok,
        format!(
            "mean F1 over 5 seeds: skipgram+gru-attn {:.2}, skipgram+avgpool {:.2} (gap {:.2} points, need >= 5); \
             majority baseline F1 {:.2} acc {:.2}",
            100.0 * attn.mean.f1,
            100.0 * avg.mean.f1,
            100.0 * gap,
            100.0 * base.f1,
            100.0 * base.accuracy
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let mut r = rng::stream(8, "accept-metrics");
    let mut worst: f64 = 0.0;
    let mut flag_mismatch = 0;
    for _ in 0..1000 {
        let counts: [usize; 4] = [
            r.gen_range(0..40),
            r.gen_range(0..40),
            r.gen_range(0..40),
            r.gen_range(0..40),
        ];
        if counts.iter().sum::<usize>() == 0 {
            continue;
        }
        let (tp, fp, fnn, tn) = (counts[0], counts[1], counts[2], counts[3]);
        let mut pairs: Vec<(Label, Label)> = Vec::new();
        pairs.extend(std::iter::repeat((Label::Positive, Label::Positive)).take(tp));
        pairs.extend(std::iter::repeat((Label::Positive, Label::Negative)).take(fp));
        pairs.extend(std::iter::repeat((Label::Negative, Label::Positive)).take(fnn));
        pairs.extend(std::iter::repeat((Label::Negative, Label::Negative)).take(tn));
        pairs.shuffle(&mut r);
        let (preds, labels): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let m = compute_metrics(&preds, &labels).unwrap();

        let n = (tp + fp + fnn + tn) as f64;
        let (tp, fp, fnn, tn) = (tp as f64, fp as f64, fnn as f64, tn as f64);
        let acc = (tp + tn) / n;
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
        let f1 = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        let degenerate = tp + fp == 0.0 || tp + fnn == 0.0 || prec + rec == 0.0;
        for (a, b) in [(m.accuracy, acc), (m.precision, prec), (m.recall, rec), (m.f1, f1)] {
            worst = worst.max((a - b).abs());
        }
        if m.degenerate != degenerate {
            flag_mismatch += 1;
        }
    }
    let labels: Vec<Label> = (0..50)
        .map(|i| if i % 3 == 0 { Label::Negative } else { Label::Positive })
        .collect();
    let all_pos = compute_metrics(&vec![Label::Positive; labels.len()], &labels).unwrap();
    let only_pos = compute_metrics(&[Label::Positive; 9], &[Label::Positive; 9]).unwrap();
    check(
        worst <= 1e-12 && flag_mismatch == 0 && all_pos.recall == 1.0 && only_pos.recall == 1.0,
        format!(
            "1000 matrices: max deviation {worst:e}, degenerate-flag mismatches {flag_mismatch}; all-positive recall {} / {}",
            all_pos.recall, only_pos.recall
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

const CLI_CONFIG: &str = "\
seed=3
vocab.min_count=1
words.dim=8
words.window=5
words.epochs=3
poincare.dim=8
poincare.epochs=10
poincare.burn_in_epochs=2
seq2seq.epochs=3
classifier.conv_filters=8
classifier.gru_hidden=8
classifier.epochs=3
classifier.optimizer=adam
classifier.learning_rate=0.01
harness.seeds=1,2
";

fn write_raw_corpus(dir: &Path) {
    let posts = common::negation_corpus(120, 9);
    let mut r = rng::stream(9, "accept-raw");
    let mut lines = String::new();
    for p in &posts {
        let strong: u64 = r.gen_range(1..20);
        let weak: u64 = r.gen_range(0..strong);
        let (loves, angry) = if p.label == Label::Positive {
            (strong, weak)
        } else {
            (weak, strong)
        };
        let text = format!("{}. Visit https://example.com #tag 2024!", p.sentences[0].join(" "));
        let obj = serde_json::json!({
            "id": p.id,
            "text": text,
            "reactions": {"likes": r.gen_range(0..50), "loves": loves, "angry": angry, "haha": r.gen_range(0..9)}
        });
        lines.push_str(&obj.to_string());
        lines.push('\n');
    }
    std::fs::write(dir.join("raw.jsonl"), lines).unwrap();
    std::fs::write(dir.join("stop.txt"), "the\nand\n").unwrap();
    std::fs::write(dir.join("run.cfg"), CLI_CONFIG).unwrap();
}

const ARTIFACTS: [&str; 12] = [
    "corpus.jsonl",
    "skipgram.vec",
    "subword.vec",
    "subword.vec.ngrams",
    "glove.vec",
    "poincare.vec",
    "poincare2.vec",
    "gru-attn.ckpt",
    "clf-none.ckpt",
    "clf-gru-attn.ckpt",
    "results.csv",
    "table.md",
];

fn run_pipeline(dir: &Path) -> Result<(), String> {
    write_raw_corpus(dir);
    let bin = env!("CARGO_BIN_EXE_twotier");
    let p = |name: &str| dir.join(name).display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "preprocess".into(),
            "--input".into(),
            p("raw.jsonl"),
            "--stopwords".into(),
            p("stop.txt"),
            "--output".into(),
            p("corpus.jsonl"),
        ],
        vec![
            "train-words".into(),
            "--config".into(),
            p("run.cfg"),
            "--family".into(),
            "skipgram".into(),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("skipgram.vec"),
        ],
        vec![
            "train-words".into(),
            "--config".into(),
            p("run.cfg"),
            "--family".into(),
            "subword".into(),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("subword.vec"),
        ],
        vec![
            "train-words".into(),
            "--config".into(),
            p("run.cfg"),
            "--family".into(),
            "glove".into(),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("glove.vec"),
        ],
        vec![
            "train-words".into(),
            "--config".into(),
            p("run.cfg"),
            "--family".into(),
            "poincare".into(),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("poincare.vec"),
        ],
        vec![
            "train-poincare".into(),
            "--config".into(),
            p("run.cfg"),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("poincare2.vec"),
        ],
        vec![
            "train-sentence".into(),
            "--config".into(),
            p("run.cfg"),
            "--encoder".into(),
            "gru-attn".into(),
            "--embedding".into(),
            p("skipgram.vec"),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("gru-attn.ckpt"),
        ],
        vec![
            "train-classifier".into(),
            "--config".into(),
            p("run.cfg"),
            "--embedding".into(),
            p("skipgram.vec"),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("clf-none.ckpt"),
        ],
        vec![
            "train-classifier".into(),
            "--config".into(),
            p("run.cfg"),
            "--encoder".into(),
            "gru-attn".into(),
            "--embedding".into(),
            p("skipgram.vec"),
            "--sentence-model".into(),
            p("gru-attn.ckpt"),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("clf-gru-attn.ckpt"),
        ],
        vec![
            "evaluate".into(),
            "--config".into(),
            p("run.cfg"),
            "--grid".into(),
            "single".into(),
            "--family".into(),
            "skipgram".into(),
            "--encoder".into(),
            "gru-attn".into(),
            "--input".into(),
            p("corpus.jsonl"),
            "--output".into(),
            p("results.csv"),
        ],
        vec![
            "export-table".into(),
            "--input".into(),
            p("results.csv"),
            "--output".into(),
            p("table.md"),
        ],
    ];
    for args in steps {
        let out = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "`{}` failed: {}",
                args[0],
                String::from_utf8_lossy(&out.stderr)
            ));
        }
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let mut differing = Vec::new();
    for name in ARTIFACTS {
        let x = std::fs::read(a.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y || x.is_empty() {
            differing.push(name);
        }
    }
    check(
        differing.is_empty(),
        format!(
            "{} artifacts compared across two full CLI runs; differing or empty: {:?}",
            ARTIFACTS.len(),
            differing
        ),
    )
}

// --------------------------------------------------------------- criterion 10

fn criterion_10() -> Outcome {
    let mut r = rng::stream(10, "accept-annotate");
    let mut rule_mismatch = 0;
    let mut variance = 0;
    let mut seen = [0usize; 3];
    for _ in 0..10_000 {
        let mut c = ReactionCounts {
            likes: r.gen_range(0..1000),
            loves: r.gen_range(0..6),
            wow: r.gen_range(0..6),
            haha: r.gen_range(0..1000),
            sad: r.gen_range(0..6),
            angry: r.gen_range(0..6),
            thankful: r.gen_range(0..1000),
        };
        let (pos, neg) = (c.loves + c.wow, c.sad + c.angry);
        let expected = if pos > neg {
            Annotation::Label(Label::Positive)
        } else if neg > pos {
            Annotation::Label(Label::Negative)
        } else {
            Annotation::Skip
        };
        let got = annotate(&c);
        if got != expected {
            rule_mismatch += 1;
        }
        seen[match expected {
            Annotation::Label(Label::Positive) => 0,
            Annotation::Label(Label::Negative) => 1,
            Annotation::Skip => 2,
        }] += 1;
        c.likes = r.gen();
        c.haha = r.gen();
        c.thankful = r.gen();
        if annotate(&c) != got {
            variance += 1;
        }
    }
    check(
        rule_mismatch == 0 && variance == 0 && seen.iter().all(|&n| n > 0),
        format!(
            "10000 fuzzed counts: rule mismatches {rule_mismatch}, likes/haha/thankful sensitivity {variance}; \
             positive/negative/skip = {}/{}/{}",
            seen[0], seen[1], seen[2]
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", criterion_1),
        ("poincare metric suite", criterion_2),
        ("poincare structure recovery", criterion_3),
        ("euclidean cluster separation", criterion_4),
        ("seq2seq autoencoding", criterion_5),
        ("order sensitivity vs pooling", criterion_6),
        ("end-to-end two-tier trend", criterion_7),
        ("metrics oracle", criterion_8),
        ("cli reproducibility", criterion_9),
        ("annotation contract", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(d) => println!("PASS [{}] {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => {
                println!("FAIL [{}] {name} ({secs:.1}s): {d}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
