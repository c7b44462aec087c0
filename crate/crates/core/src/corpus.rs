//! Raw post ingestion, text cleanup, reaction labels, vocabularies, and
//! holdout splits.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Per-post reaction totals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactionCounts {
    pub likes: u64,
    pub loves: u64,
    pub wow: u64,
    pub haha: u64,
    pub sad: u64,
    pub angry: u64,
    pub thankful: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub reactions: ReactionCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// 1.0 for positive, 0.0 for negative.
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Annotation {
    Label(Label),
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPost {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub label: Label,
}

impl AnnotatedPost {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// Loves and wow count as positive, sad and angry as negative. Likes, haha
/// and thankful are ignored. Ties (including no reactions) are skipped.
pub fn annotate(r: &ReactionCounts) -> Annotation {
    let pos = r.loves + r.wow;
    let neg = r.sad + r.angry;
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => Annotation::Label(Label::Positive),
        std::cmp::Ordering::Less => Annotation::Label(Label::Negative),
        std::cmp::Ordering::Equal => Annotation::Skip,
    }
}

const SENTENCE_END: [char; 5] = ['.', '?', '!', '។', '\n'];

fn is_sinhala(c: char) -> bool {
    ('\u{0D80}'..='\u{0DFF}').contains(&c)
}

fn is_joiner(c: char) -> bool {
    c == '\u{200C}' || c == '\u{200D}'
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
        || (('\u{00C0}'..='\u{024F}').contains(&c) && c != '×' && c != '÷')
        || ('\u{1E00}'..='\u{1EFF}').contains(&c)
}

fn is_url(raw: &str) -> bool {
    let lower = raw.to_lowercase();
    lower.contains("://") || lower.starts_with("www.")
}

/// Cleans one punctuation-free piece. Returns `None` when the piece must be
/// dropped entirely.
fn clean_piece(piece: &str) -> Option<String> {
    if piece.chars().any(char::is_numeric) {
        return None;
    }
    let mut out = String::with_capacity(piece.len());
    for c in piece.chars() {
        if is_sinhala(c) || is_joiner(c) {
            out.push(c);
        } else if is_latin_letter(c) {
            out.extend(c.to_lowercase());
        } else if c.is_alphabetic() {
            // a letter from some other script
            return None;
        }
    }
    let has_letter = out.chars().any(|c| !is_joiner(c));
    has_letter.then_some(out)
}

/// Splits a post into sentences of cleaned tokens.
///
/// URLs, e-mail addresses and mentions, hashtags, tokens carrying digits,
/// tokens in scripts other than Sinhala or Latin, and stop words are dropped.
/// Latin letters are lowercased.
pub fn preprocess(text: &str, stopwords: &HashSet<String>) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut flush = |current: &mut Vec<String>| {
        if !current.is_empty() {
            sentences.push(std::mem::take(current));
        }
    };
    for line in text.split('\n') {
        for raw in line.split_whitespace() {
            if is_url(raw) || raw.contains('@') || raw.starts_with('#') {
                continue;
            }
            let mut piece = String::new();
            for c in raw.chars() {
                if SENTENCE_END.contains(&c) {
                    if let Some(tok) = clean_piece(&piece) {
                        if !stopwords.contains(&tok) {
                            current.push(tok);
                        }
                    }
                    piece.clear();
                    flush(&mut current);
                } else {
                    piece.push(c);
                }
            }
            if let Some(tok) = clean_piece(&piece) {
                if !stopwords.contains(&tok) {
                    current.push(tok);
                }
            }
        }
        flush(&mut current);
    }
    sentences
}

/// Reads a newline-delimited stop-word list. Blank lines are ignored and
/// entries go through the same cleanup as post text.
pub fn read_stopwords(reader: impl BufRead) -> Result<HashSet<String>> {
    let mut set = HashSet::new();
    for line in reader.lines() {
        let line = line?;
        let word = line.trim();
        if word.is_empty() {
            continue;
        }
        match clean_piece(word) {
            Some(w) => set.insert(w),
            None => set.insert(word.to_lowercase()),
        };
    }
    Ok(set)
}

/// Preprocesses and labels a raw post. `None` for skipped or empty posts.
pub fn annotate_post(raw: &RawPost, stopwords: &HashSet<String>) -> Option<AnnotatedPost> {
    let Annotation::Label(label) = annotate(&raw.reactions) else {
        return None;
    };
    let sentences = preprocess(&raw.text, stopwords);
    if sentences.is_empty() {
        return None;
    }
    Some(AnnotatedPost {
        id: raw.id.clone(),
        sentences,
        label,
    })
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(
    reader: impl BufRead,
    source_name: &str,
    id_of: impl Fn(&T) -> &str,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(id_of(&item).to_string()) {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                message: format!("duplicate post id `{}`", id_of(&item)),
            });
        }
        out.push(item);
    }
    Ok(out)
}

/// Reads raw posts from JSON lines. Missing reaction keys default to zero.
pub fn read_raw_posts(reader: impl BufRead, source_name: &str) -> Result<Vec<RawPost>> {
    read_jsonl(reader, source_name, |p: &RawPost| &p.id)
}

pub fn read_annotated(reader: impl BufRead, source_name: &str) -> Result<Vec<AnnotatedPost>> {
    let posts: Vec<AnnotatedPost> = read_jsonl(reader, source_name, |p: &AnnotatedPost| &p.id)?;
    if let Some(p) = posts.iter().find(|p| p.token_count() == 0) {
        return Err(Error::Format(format!("post `{}` has no tokens", p.id)));
    }
    Ok(posts)
}

pub fn write_annotated(mut w: impl Write, posts: &[AnnotatedPost]) -> Result<()> {
    for p in posts {
        serde_json::to_writer(&mut w, p).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const SPECIALS: [&str; 4] = [SOS, EOS, UNK, PAD];
pub const SOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;
pub const PAD_ID: usize = 3;

/// Token/index bijection with frequencies. Indices 0-3 hold the special
/// tokens; regular tokens follow in descending frequency, ties broken
/// lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_count: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token/count list (already in
    /// final order, specials excluded).
    pub fn from_counts(entries: Vec<(String, u64)>, unk_count: u64, min_count: u64) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0, 0, unk_count, 0];
        for (t, c) in entries {
            tokens.push(t);
            counts.push(c);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            counts,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or the UNK index.
    pub fn index_or_unk(&self, token: &str) -> usize {
        self.index_of(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn is_special(i: usize) -> bool {
        i < SPECIALS.len()
    }

    /// Maps every sentence of every post to vocabulary indices.
    pub fn encode_sentences<'a>(&'a self, posts: &'a [AnnotatedPost]) -> impl Iterator<Item = Vec<usize>> + 'a {
        posts
            .iter()
            .flat_map(|p| p.sentences.iter())
            .map(|s| s.iter().map(|t| self.index_or_unk(t)).collect())
    }
}

/// Counts tokens over `posts` and keeps those seen at least `min_count` times.
/// Dropped occurrences are credited to UNK.
pub fn build_vocab(posts: &[AnnotatedPost], min_count: u64) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::contract("min_count must be >= 1"));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for t in posts.iter().flat_map(AnnotatedPost::tokens) {
        *freq.entry(t).or_default() += 1;
    }
    let mut unk = 0;
    let mut kept: Vec<(String, u64)> = Vec::new();
    for (t, c) in freq {
        if c >= min_count {
            kept.push((t.to_string(), c));
        } else {
            unk += c;
        }
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_counts(kept, unk, min_count))
}

/// Character n-grams of `<word>` for every length in `n_min..=n_max`,
/// followed by the bracketed word itself. Duplicates are dropped, keeping
/// the first occurrence.
pub fn char_ngrams(word: &str, n_min: usize, n_max: usize) -> Vec<String> {
    let bracketed: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let whole: String = bracketed.iter().collect();
    let mut out: Vec<String> = Vec::new();
    if n_min >= 1 {
        for n in n_min..=n_max {
            if n > bracketed.len() {
                break;
            }
            for w in bracketed.windows(n) {
                let g: String = w.iter().collect();
                if g != whole && !out.contains(&g) {
                    out.push(g);
                }
            }
        }
    }
    out.push(whole);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<AnnotatedPost>,
    pub validation: Vec<AnnotatedPost>,
    pub test: Vec<AnnotatedPost>,
    pub seed: u64,
}

/// Shuffles with the seed and cuts 8:1:1. Validation and test each get
/// `n / 10` posts; the remainder goes to train.
pub fn split_holdout(posts: &[AnnotatedPost], seed: u64) -> Result<CorpusSplit> {
    let n = posts.len();
    if n < 10 {
        return Err(Error::Size(format!("holdout split needs at least 10 posts, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let tenth = n / 10;
    let pick = |range: &[usize]| range.iter().map(|&i| posts[i].clone()).collect::<Vec<_>>();
    Ok(CorpusSplit {
        test: pick(&order[..tenth]),
        validation: pick(&order[tenth..2 * tenth]),
        train: pick(&order[2 * tenth..]),
        seed,
    })
}
