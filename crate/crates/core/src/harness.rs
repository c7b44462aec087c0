//! Holdout evaluation: metrics, the experiment grid, and result tables.

use std::cell::Cell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::classifier::{train_classifier, Example};
use crate::config::RunConfig;
use crate::corpus::{build_vocab, AnnotatedPost, CorpusSplit, Label};
use crate::error::{Error, Result};
use crate::euclid::{train_family, Family};
use crate::hyperbolic::{build_relation_graph, train_poincare};
use crate::layers::CellKind;
use crate::sentence::{train_autoencoder, PoolingMode, SentenceEncoder, Seq2SeqConfig};
use crate::wordvec::WordTable;

/// Accuracy, precision, recall and F1 with Positive as the target class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn compute_metrics(predictions: &[Label], labels: &[Label]) -> Result<Metrics> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::contract(format!(
            "metrics need equal non-zero lengths, got {} predictions and {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (p, l) in predictions.iter().zip(labels) {
        match (p, l) {
            (Label::Positive, Label::Positive) => tp += 1,
            (Label::Positive, Label::Negative) => fp += 1,
            (Label::Negative, Label::Positive) => fneg += 1,
            (Label::Negative, Label::Negative) => tn += 1,
        }
    }
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let accuracy = (tp + tn) as f64 / labels.len() as f64;
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fneg) as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        degenerate,
    })
}

/// Lower tier of a pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WordEmbeddingKind {
    Skipgram,
    Subword,
    GloVe,
    Poincare,
}

impl WordEmbeddingKind {
    pub const ALL: [WordEmbeddingKind; 4] = [
        WordEmbeddingKind::Skipgram,
        WordEmbeddingKind::Subword,
        WordEmbeddingKind::GloVe,
        WordEmbeddingKind::Poincare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WordEmbeddingKind::Skipgram => "skipgram",
            WordEmbeddingKind::Subword => "subword",
            WordEmbeddingKind::GloVe => "glove",
            WordEmbeddingKind::Poincare => "poincare",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown word embedding `{s}`")))
    }

    fn euclid_family(self) -> Option<Family> {
        match self {
            WordEmbeddingKind::Skipgram => Some(Family::Skipgram),
            WordEmbeddingKind::Subword => Some(Family::Subword),
            WordEmbeddingKind::GloVe => Some(Family::Glove),
            WordEmbeddingKind::Poincare => None,
        }
    }
}

/// Upper tier of a pipeline; `None` feeds word vectors straight to the
/// classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SentenceEncoderKind {
    None,
    MaxPool,
    MinPool,
    AvgPool,
    Seq2SeqGru,
    Seq2SeqGruAttn,
    Seq2SeqLstm,
    Seq2SeqLstmAttn,
}

impl SentenceEncoderKind {
    pub const ALL: [SentenceEncoderKind; 8] = [
        SentenceEncoderKind::None,
        SentenceEncoderKind::MaxPool,
        SentenceEncoderKind::MinPool,
        SentenceEncoderKind::AvgPool,
        SentenceEncoderKind::Seq2SeqGru,
        SentenceEncoderKind::Seq2SeqGruAttn,
        SentenceEncoderKind::Seq2SeqLstm,
        SentenceEncoderKind::Seq2SeqLstmAttn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SentenceEncoderKind::None => "none",
            SentenceEncoderKind::MaxPool => "maxpool",
            SentenceEncoderKind::MinPool => "minpool",
            SentenceEncoderKind::AvgPool => "avgpool",
            SentenceEncoderKind::Seq2SeqGru => "gru",
            SentenceEncoderKind::Seq2SeqGruAttn => "gru-attn",
            SentenceEncoderKind::Seq2SeqLstm => "lstm",
            SentenceEncoderKind::Seq2SeqLstmAttn => "lstm-attn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sentence encoder `{s}`")))
    }

    pub fn pooling(self) -> Option<PoolingMode> {
        match self {
            SentenceEncoderKind::MaxPool => Some(PoolingMode::Max),
            SentenceEncoderKind::MinPool => Some(PoolingMode::Min),
            SentenceEncoderKind::AvgPool => Some(PoolingMode::Avg),
            _ => None,
        }
    }

    /// Cell type and attention flag of the seq2seq variants.
    pub fn seq2seq(self) -> Option<(CellKind, bool)> {
        match self {
            SentenceEncoderKind::Seq2SeqGru => Some((CellKind::Gru, false)),
            SentenceEncoderKind::Seq2SeqGruAttn => Some((CellKind::Gru, true)),
            SentenceEncoderKind::Seq2SeqLstm => Some((CellKind::Lstm, false)),
            SentenceEncoderKind::Seq2SeqLstmAttn => Some((CellKind::Lstm, true)),
            _ => None,
        }
    }
}

/// One cell of the grid, repeated over `seeds`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub word_embedding: WordEmbeddingKind,
    pub sentence_encoder: SentenceEncoderKind,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn repeats(&self) -> usize {
        self.seeds.len()
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.word_embedding.name(), self.sentence_encoder.name())
    }
}

/// The 4 one-tier cells and the 28 two-tier cells, grouped by word embedding.
pub fn full_grid(seeds: &[u64]) -> Vec<ExperimentSpec> {
    WordEmbeddingKind::ALL
        .into_iter()
        .flat_map(|w| {
            SentenceEncoderKind::ALL.into_iter().map(move |s| ExperimentSpec {
                word_embedding: w,
                sentence_encoder: s,
                seeds: seeds.to_vec(),
            })
        })
        .collect()
}

/// Trains the lower tier on `posts`.
pub fn train_word_table(kind: WordEmbeddingKind, posts: &[AnnotatedPost], cfg: &RunConfig) -> Result<WordTable> {
    match kind.euclid_family() {
        Some(family) => Ok(train_family(family, posts, &cfg.euclid)?.word_table()),
        None => {
            let vocab = build_vocab(posts, cfg.euclid.min_count)?;
            let graph = build_relation_graph(posts, Some(&vocab));
            Ok(train_poincare(&graph, &cfg.poincare)?.word_table())
        }
    }
}

/// Trains (for seq2seq) or selects (for pooling) the upper tier.
pub fn train_sentence_encoder(
    kind: SentenceEncoderKind,
    posts: &[AnnotatedPost],
    table: &WordTable,
    cfg: &RunConfig,
) -> Result<Option<SentenceEncoder>> {
    if let Some(mode) = kind.pooling() {
        return Ok(Some(SentenceEncoder::Pool(mode)));
    }
    match kind.seq2seq() {
        Some((cell, attention)) => {
            let config = Seq2SeqConfig {
                cell,
                attention,
                hidden_dim: table.dim(),
                ..cfg.seq2seq.clone()
            };
            let model = train_autoencoder(posts, table, &config)?;
            Ok(Some(SentenceEncoder::Seq2Seq(Box::new(model))))
        }
        None => Ok(None),
    }
}

/// Classifier input for one post: word vectors of every token (one tier) or
/// one vector per sentence (two tiers). An empty post becomes one zero vector.
pub fn featurize(
    sentences: &[Vec<String>],
    table: &WordTable,
    encoder: Option<&SentenceEncoder>,
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = match encoder {
        None => sentences.iter().flatten().map(|t| table.lookup(t).to_vec()).collect(),
        Some(enc) => sentences
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| {
                let words: Vec<Vec<f64>> = s.iter().map(|t| table.lookup(t).to_vec()).collect();
                enc.encode_sentence(&words)
            })
            .collect::<Result<_>>()?,
    };
    if out.is_empty() {
        let dim = match encoder {
            Some(SentenceEncoder::Seq2Seq(m)) => m.hidden_dim(),
            _ => table.dim(),
        };
        out.push(vec![0.0; dim]);
    }
    Ok(out)
}

/// Test labels kept out of reach until predictions exist. Every access made
/// before `open` is counted.
#[derive(Debug)]
pub struct SealedLabels {
    labels: Vec<Label>,
    opened: Cell<bool>,
    early_reads: Cell<usize>,
}

impl SealedLabels {
    pub fn new(labels: Vec<Label>) -> Self {
        SealedLabels {
            labels,
            opened: Cell::new(false),
            early_reads: Cell::new(0),
        }
    }

    pub fn get(&self, i: usize) -> Label {
        if !self.opened.get() {
            self.early_reads.set(self.early_reads.get() + 1);
        }
        self.labels[i]
    }

    /// Releases the labels once `predictions` covers every item.
    pub fn open(&self, predictions: &[Label]) -> Result<&[Label]> {
        if predictions.len() != self.labels.len() {
            return Err(Error::contract("test labels opened before every item was predicted"));
        }
        self.opened.set(true);
        Ok(&self.labels)
    }

    pub fn early_reads(&self) -> usize {
        self.early_reads.get()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Metrics,
    /// Test-set predictions in test-split order.
    pub predictions: Vec<Label>,
    /// Test-label reads that happened before evaluation; always expected 0.
    pub test_label_reads_before_eval: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_seed: Vec<SeedRun>,
    pub mean: Metrics,
}

impl MetricsReport {
    pub fn from_runs(per_seed: Vec<SeedRun>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::contract("a report needs at least one run"));
        }
        let n = per_seed.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| per_seed.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        let mean = Metrics {
            accuracy: avg(|m| m.accuracy),
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
            degenerate: per_seed.iter().any(|r| r.metrics.degenerate),
        };
        Ok(MetricsReport { per_seed, mean })
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

/// Trains both tiers and the classifier on the training split with `seed`
/// and scores the test split.
pub fn run_seed(
    word_embedding: WordEmbeddingKind,
    sentence_encoder: SentenceEncoderKind,
    split: &CorpusSplit,
    cfg: &RunConfig,
    seed: u64,
) -> Result<SeedRun> {
    let cfg = cfg.with_seed(seed);
    let table = stage("word-embedding", train_word_table(word_embedding, &split.train, &cfg))?;
    let encoder = stage(
        "sentence-encoder",
        train_sentence_encoder(sentence_encoder, &split.train, &table, &cfg),
    )?;
    let examples = |posts: &[AnnotatedPost]| -> Result<Vec<Example>> {
        posts
            .iter()
            .map(|p| {
                Ok(Example {
                    features: featurize(&p.sentences, &table, encoder.as_ref())?,
                    label: p.label,
                })
            })
            .collect()
    };
    let train = stage("featurize", examples(&split.train))?;
    let validation = stage("featurize", examples(&split.validation))?;
    let test_inputs: Vec<&[Vec<String>]> = split.test.iter().map(|p| p.sentences.as_slice()).collect();
    let sealed = SealedLabels::new(split.test.iter().map(|p| p.label).collect());

    let clf = stage("classifier", train_classifier(&train, &validation, &cfg.classifier))?;
    let predictions = stage(
        "evaluate",
        test_inputs
            .iter()
            .map(|s| Ok(clf.predict(&featurize(s, &table, encoder.as_ref())?)?.0))
            .collect::<Result<Vec<_>>>(),
    )?;
    let early = sealed.early_reads();
    let labels = sealed.open(&predictions)?;
    let metrics = stage("evaluate", compute_metrics(&predictions, labels))?;
    Ok(SeedRun {
        seed,
        metrics,
        predictions,
        test_label_reads_before_eval: early,
    })
}

/// Runs every seed of `spec`; a failure names the cell and the stage.
pub fn run_experiment(spec: &ExperimentSpec, split: &CorpusSplit, cfg: &RunConfig) -> Result<MetricsReport> {
    if spec.seeds.is_empty() {
        return Err(Error::contract("an experiment needs at least one seed"));
    }
    let runs = spec
        .seeds
        .iter()
        .map(|&seed| run_seed(spec.word_embedding, spec.sentence_encoder, split, cfg, seed))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage(&spec.label()))?;
    MetricsReport::from_runs(runs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub word_embedding: WordEmbeddingKind,
    pub sentence_encoder: SentenceEncoderKind,
    pub report: MetricsReport,
}

/// Worker count from `TWOTIER_WORKERS`, default 1.
pub fn workers_from_env() -> usize {
    std::env::var("TWOTIER_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(1)
        .max(1)
}

/// Runs all cells on at most `workers` threads. Output order follows `specs`
/// regardless of scheduling.
pub fn run_grid(
    specs: &[ExperimentSpec],
    split: &CorpusSplit,
    cfg: &RunConfig,
    workers: usize,
) -> Result<Vec<CellReport>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<MetricsReport>>>> = Mutex::new((0..specs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, specs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = specs.get(i) else { break };
                log::info!("running {}", spec.label());
                let r = run_experiment(spec, split, cfg);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().expect("no worker panicked");
    specs
        .iter()
        .zip(slots)
        .map(|(spec, r)| {
            Ok(CellReport {
                word_embedding: spec.word_embedding,
                sentence_encoder: spec.sentence_encoder,
                report: r.expect("every cell ran")?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl TableFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            other => Err(Error::Config(format!("unknown table format `{other}`"))),
        }
    }
}

/// `x` as a percentage with two decimals.
pub fn percent(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// Index of the best mean F1 (first on ties) within each word-embedding
/// group; groups keep their first-appearance order.
fn group_best(cells: &[CellReport]) -> Vec<bool> {
    let mut best = vec![false; cells.len()];
    let mut seen: Vec<WordEmbeddingKind> = Vec::new();
    for c in cells {
        if seen.contains(&c.word_embedding) {
            continue;
        }
        seen.push(c.word_embedding);
        let mut top: Option<usize> = None;
        for (i, d) in cells.iter().enumerate() {
            if d.word_embedding == c.word_embedding && top.map_or(true, |t| d.report.mean.f1 > cells[t].report.mean.f1)
            {
                top = Some(i);
            }
        }
        if let Some(t) = top {
            best[t] = true;
        }
    }
    best
}

/// Mean metrics, one row per cell, grouped by word embedding, with the best
/// F1 of each group flagged.
pub fn emit_table(cells: &[CellReport], format: TableFormat) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::contract("cannot render an empty grid"));
    }
    let best = group_best(cells);
    let mut order: Vec<usize> = Vec::with_capacity(cells.len());
    let mut groups: Vec<WordEmbeddingKind> = Vec::new();
    for c in cells {
        if !groups.contains(&c.word_embedding) {
            groups.push(c.word_embedding);
        }
    }
    for g in &groups {
        order.extend((0..cells.len()).filter(|&i| cells[i].word_embedding == *g));
    }
    match format {
        TableFormat::Markdown => {
            let mut out = String::from(
                "| Word embedding | Sentence embedding | Accuracy | Precision | Recall | F1 |\n|---|---|---:|---:|---:|---:|\n",
            );
            for i in order {
                let c = &cells[i];
                let m = &c.report.mean;
                let f1 = if best[i] {
                    format!("**{}**", percent(m.f1))
                } else {
                    percent(m.f1)
                };
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} |\n",
                    c.word_embedding.name(),
                    c.sentence_encoder.name(),
                    percent(m.accuracy),
                    percent(m.precision),
                    percent(m.recall),
                    f1
                ));
            }
            Ok(out)
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "word_embedding",
                "sentence_encoder",
                "accuracy",
                "precision",
                "recall",
                "f1",
                "best_f1",
            ])?;
            for i in order {
                let c = &cells[i];
                let m = &c.report.mean;
                w.write_record([
                    c.word_embedding.name().to_string(),
                    c.sentence_encoder.name().to_string(),
                    percent(m.accuracy),
                    percent(m.precision),
                    percent(m.recall),
                    percent(m.f1),
                    best[i].to_string(),
                ])?;
            }
            csv_string(w)
        }
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub const RESULT_COLUMNS: [&str; 7] = [
    "word_embedding",
    "sentence_encoder",
    "seed",
    "accuracy",
    "precision",
    "recall",
    "f1",
];

/// Per-seed rows plus a `mean` row for every cell.
pub fn results_csv(cells: &[CellReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS)?;
    for c in cells {
        let rows = c
            .report
            .per_seed
            .iter()
            .map(|r| (r.seed.to_string(), &r.metrics))
            .chain(std::iter::once(("mean".to_string(), &c.report.mean)));
        for (seed, m) in rows {
            w.write_record([
                c.word_embedding.name().to_string(),
                c.sentence_encoder.name().to_string(),
                seed,
                m.accuracy.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
            ])?;
        }
    }
    csv_string(w)
}

/// Reads a results file back into mean rows per cell, in file order.
pub fn read_results(reader: impl std::io::Read) -> Result<Vec<CellReport>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_COLUMNS {
        return Err(Error::Format(format!("unexpected results header {header:?}")));
    }
    let mut cells: Vec<CellReport> = Vec::new();
    let mut runs: Vec<SeedRun> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad number `{}` in results", &rec[i])))
        };
        let m = Metrics {
            accuracy: num(3)?,
            precision: num(4)?,
            recall: num(5)?,
            f1: num(6)?,
            degenerate: false,
        };
        if &rec[2] == "mean" {
            let per_seed = std::mem::take(&mut runs);
            cells.push(CellReport {
                word_embedding: WordEmbeddingKind::parse(&rec[0])?,
                sentence_encoder: SentenceEncoderKind::parse(&rec[1])?,
                report: MetricsReport { per_seed, mean: m },
            });
        } else {
            runs.push(SeedRun {
                seed: rec[2]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad seed `{}` in results", &rec[2])))?,
                metrics: m,
                predictions: Vec::new(),
                test_label_reads_before_eval: 0,
            });
        }
    }
    if !runs.is_empty() {
        return Err(Error::Format("results file ends without a mean row".into()));
    }
    Ok(cells)
}
