#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use twotier::config::RunConfig;
use twotier::corpus::{AnnotatedPost, Label};
use twotier::numeric::OptimizerKind;
use twotier::rng;

pub fn post(id: impl Into<String>, sentences: Vec<Vec<String>>, label: Label) -> AnnotatedPost {
    AnnotatedPost {
        id: id.into(),
        sentences,
        label,
    }
}

pub fn words(s: &[&str]) -> Vec<String> {
    s.iter().map(|t| t.to_string()).collect()
}

/// Two disjoint 20-word topics; every sentence draws 8 words from one topic.
pub fn two_cluster_corpus(seed: u64) -> (Vec<AnnotatedPost>, Vec<String>, Vec<String>) {
    let a: Vec<String> = (0..20).map(|i| format!("alpha{i}")).collect();
    let b: Vec<String> = (0..20).map(|i| format!("beta{i}")).collect();
    let mut r = rng::stream(seed, "fixture-two-cluster");
    let posts = (0..1000)
        .map(|i| {
            let topic = if i % 2 == 0 { &a } else { &b };
            let sent = (0..8).map(|_| topic.choose(&mut r).unwrap().clone()).collect();
            post(format!("c{i}"), vec![sent], Label::Positive)
        })
        .collect();
    (posts, a, b)
}

/// 20 distinct sentences of 3 to 5 tokens over a 12-word vocabulary.
pub fn toy_sentences() -> Vec<Vec<String>> {
    let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let mut r = rng::stream(11, "fixture-toy");
    let mut out: Vec<Vec<String>> = Vec::new();
    while out.len() < 20 {
        let len = r.gen_range(3..=5);
        let s: Vec<String> = (0..len).map(|_| vocab.choose(&mut r).unwrap().clone()).collect();
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

pub fn toy_posts() -> Vec<AnnotatedPost> {
    toy_sentences()
        .into_iter()
        .enumerate()
        .map(|(i, s)| post(format!("t{i}"), vec![s], Label::Positive))
        .collect()
}

/// One hub word shared by ten single-word sentences, plus ten isolated
/// word/sentence pairs.
pub fn star_posts() -> Vec<AnnotatedPost> {
    let mut posts: Vec<AnnotatedPost> = (0..10)
        .map(|i| post(format!("hub{i}"), vec![words(&["hub"])], Label::Positive))
        .collect();
    posts.extend((0..10).map(|i| post(format!("leaf{i}"), vec![vec![format!("leaf{i}")]], Label::Positive)));
    posts
}

const POSITIVE: [&str; 3] = ["good", "great", "nice"];
const NEGATIVE: [&str; 3] = ["bad", "awful", "poor"];
const POSITIVE_FILL: [&str; 4] = ["sun", "song", "cake", "park"];
const NEGATIVE_FILL: [&str; 4] = ["rain", "noise", "bill", "queue"];
pub const NEGATION: &str = "not";

/// Single-sentence posts built around one sentiment word. Half the posts
/// contain `not`: placed right before the sentiment word it flips the label,
/// placed before a filler it does not, so the two orders share one bag of
/// words but carry opposite labels.
pub fn negation_corpus(n: usize, seed: u64) -> Vec<AnnotatedPost> {
    let mut r = rng::stream(seed, "fixture-negation");
    (0..n)
        .map(|i| {
            let positive = r.gen_bool(0.5);
            let (sentiment, fill) = if positive {
                (&POSITIVE, &POSITIVE_FILL)
            } else {
                (&NEGATIVE, &NEGATIVE_FILL)
            };
            let w = sentiment.choose(&mut r).unwrap().to_string();
            let f1 = fill.choose(&mut r).unwrap().to_string();
            let f2 = fill.choose(&mut r).unwrap().to_string();
            let mut label_positive = positive;
            let sent = if r.gen_bool(0.5) {
                let mut s = vec![w, f1, f2];
                s.shuffle(&mut r);
                s
            } else {
                let flip = r.gen_bool(0.5);
                if flip {
                    label_positive = !positive;
                    let mut chunks = vec![vec![NEGATION.to_string(), w], vec![f1], vec![f2]];
                    chunks.shuffle(&mut r);
                    chunks.concat()
                } else {
                    let mut chunks = vec![vec![NEGATION.to_string(), f1], vec![w], vec![f2]];
                    chunks.shuffle(&mut r);
                    chunks.concat()
                }
            };
            let label = if label_positive {
                Label::Positive
            } else {
                Label::Negative
            };
            post(format!("n{i}"), vec![sent], label)
        })
        .collect()
}

/// Small dimensions for the desk-scale pipeline runs.
pub fn small_run_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.euclid.dim = 16;
    c.euclid.min_count = 1;
    c.euclid.epochs = 5;
    c.euclid.window = 5;
    c.poincare.dim = 16;
    c.poincare.epochs = 20;
    c.poincare.burn_in_epochs = 5;
    c.seq2seq.epochs = 15;
    c.seq2seq.learning_rate = 0.01;
    c.classifier.conv_filters = 16;
    c.classifier.gru_hidden = 16;
    c.classifier.epochs = 15;
    c.classifier.learning_rate = 0.01;
    c.classifier.optimizer = OptimizerKind::Adam;
    c.classifier.dropout = 0.0;
    c
}
