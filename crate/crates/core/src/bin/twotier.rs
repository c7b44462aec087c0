use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use twotier::checkpoint::Checkpoint;
use twotier::classifier::{train_classifier, Example};
use twotier::config::RunConfig;
use twotier::corpus::{
    annotate_post, build_vocab, read_annotated, read_raw_posts, read_stopwords, split_holdout, write_annotated,
    AnnotatedPost, Label,
};
use twotier::euclid::{neighbors_in_table, train_family, Family};
use twotier::harness::{
    emit_table, featurize, full_grid, read_results, results_csv, run_grid, workers_from_env, ExperimentSpec,
    SentenceEncoderKind, TableFormat, WordEmbeddingKind,
};
use twotier::hyperbolic::{build_relation_graph, poincare_neighbors, train_poincare};
use twotier::layers::CellKind;
use twotier::sentence::{train_autoencoder, SentenceEncoder, Seq2SeqConfig, Seq2SeqModel};
use twotier::wordvec::{read_vectors, WordTable};
use twotier::{Error, Result};

#[derive(Parser)]
#[command(
    name = "twotier",
    version,
    about = "Word and sentence embeddings with a CNN+GRU sentiment classifier"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Skipgram,
    Subword,
    Glove,
    Poincare,
}

impl FamilyArg {
    fn kind(self) -> WordEmbeddingKind {
        match self {
            FamilyArg::Skipgram => WordEmbeddingKind::Skipgram,
            FamilyArg::Subword => WordEmbeddingKind::Subword,
            FamilyArg::Glove => WordEmbeddingKind::GloVe,
            FamilyArg::Poincare => WordEmbeddingKind::Poincare,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Maxpool,
    Minpool,
    Avgpool,
    Gru,
    GruAttn,
    Lstm,
    LstmAttn,
    None,
}

impl EncoderArg {
    fn kind(self) -> SentenceEncoderKind {
        match self {
            EncoderArg::Maxpool => SentenceEncoderKind::MaxPool,
            EncoderArg::Minpool => SentenceEncoderKind::MinPool,
            EncoderArg::Avgpool => SentenceEncoderKind::AvgPool,
            EncoderArg::Gru => SentenceEncoderKind::Seq2SeqGru,
            EncoderArg::GruAttn => SentenceEncoderKind::Seq2SeqGruAttn,
            EncoderArg::Lstm => SentenceEncoderKind::Seq2SeqLstm,
            EncoderArg::LstmAttn => SentenceEncoderKind::Seq2SeqLstmAttn,
            EncoderArg::None => SentenceEncoderKind::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Seq2SeqArg {
    Gru,
    GruAttn,
    Lstm,
    LstmAttn,
}

impl Seq2SeqArg {
    fn cell(self) -> (CellKind, bool) {
        match self {
            Seq2SeqArg::Gru => (CellKind::Gru, false),
            Seq2SeqArg::GruAttn => (CellKind::Gru, true),
            Seq2SeqArg::Lstm => (CellKind::Lstm, false),
            Seq2SeqArg::LstmAttn => (CellKind::Lstm, true),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Full,
    Single,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Run configuration (key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key of the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let cfg = RunConfig::from_path(&self.config).map_err(|e| e.at_stage("config"))?;
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Clean, split and annotate raw posts; posts without a majority label are dropped.
    Preprocess {
        /// Raw posts, one JSON object per line.
        #[arg(long)]
        input: PathBuf,
        /// Stopword list, one word per line.
        #[arg(long)]
        stopwords: PathBuf,
        /// Annotated corpus (JSON lines).
        #[arg(long)]
        output: PathBuf,
    },
    /// Train word vectors; subword runs also write `<output>.ngrams`.
    TrainWords {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Annotated corpus.
        #[arg(long)]
        input: PathBuf,
        /// Word-vector text file.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train Poincaré-ball vectors on the word–sentence graph.
    TrainPoincare {
        #[command(flatten)]
        common: Common,
        /// Annotated corpus.
        #[arg(long)]
        input: PathBuf,
        /// Word-vector text file.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a seq2seq sentence autoencoder over existing word vectors.
    TrainSentence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        encoder: Seq2SeqArg,
        /// Word-vector file the autoencoder reads.
        #[arg(long)]
        embedding: PathBuf,
        /// Annotated corpus.
        #[arg(long)]
        input: PathBuf,
        /// Model checkpoint.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the sentiment classifier on the train split, selecting on the validation split.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        /// Sentence tier; `none` feeds word vectors directly.
        #[arg(long, value_enum, default_value = "none")]
        encoder: EncoderArg,
        /// Word-vector file.
        #[arg(long)]
        embedding: PathBuf,
        /// Seq2seq checkpoint, required for the seq2seq encoders.
        #[arg(long)]
        sentence_model: Option<PathBuf>,
        /// Annotated corpus.
        #[arg(long)]
        input: PathBuf,
        /// Classifier checkpoint.
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the holdout evaluation and write per-seed and mean metrics as CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// `full` runs all 32 cells; `single` runs --family/--encoder.
        #[arg(long, value_enum)]
        grid: GridArg,
        #[arg(long, value_enum, required_if_eq("grid", "single"))]
        family: Option<FamilyArg>,
        #[arg(long, value_enum, required_if_eq("grid", "single"))]
        encoder: Option<EncoderArg>,
        /// Annotated corpus.
        #[arg(long)]
        input: PathBuf,
        /// Results CSV.
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the nearest neighbours of a token in a word-vector file.
    Nn {
        /// Word-vector file.
        #[arg(long)]
        embedding: PathBuf,
        /// Query token.
        #[arg(long)]
        token: String,
        /// Number of neighbours.
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Render a results CSV as a table of mean metrics in percent.
    ExportTable {
        /// Results CSV from `evaluate`.
        #[arg(long)]
        input: PathBuf,
        /// Table file.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_corpus(path: &Path) -> Result<Vec<AnnotatedPost>> {
    read_annotated(open(path)?, &path.display().to_string()).map_err(|e| e.at_stage("read-corpus"))
}

fn load_table(path: &Path) -> Result<(WordTable, bool)> {
    let file = read_vectors(open(path)?, &path.display().to_string()).map_err(|e| e.at_stage("read-embedding"))?;
    let hyperbolic = file.comments.iter().any(|c| c.contains("space=poincare"));
    Ok((file.table, hyperbolic))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::Preprocess {
            input,
            stopwords,
            output,
        } => {
            let stop = stage("read-stopwords", read_stopwords(open(&stopwords)?))?;
            let raw = stage(
                "read-input",
                read_raw_posts(open(&input)?, &input.display().to_string()),
            )?;
            let posts: Vec<AnnotatedPost> = raw.iter().filter_map(|r| annotate_post(r, &stop)).collect();
            let pos = posts.iter().filter(|p| p.label == Label::Positive).count();
            let mut w = create(&output)?;
            stage("write-corpus", write_annotated(&mut w, &posts))?;
            w.flush()?;
            Ok(format!(
                "preprocess: {} raw, {} kept ({} positive, {} negative), {} skipped",
                raw.len(),
                posts.len(),
                pos,
                posts.len() - pos,
                raw.len() - posts.len()
            ))
        }
        Command::TrainWords {
            common,
            family,
            input,
            output,
        } => {
            let cfg = common.load()?;
            let posts = load_corpus(&input)?;
            let mut w = create(&output)?;
            let (count, dim) = match family.kind() {
                WordEmbeddingKind::Poincare => train_poincare_file(&posts, &cfg, &mut w)?,
                kind => {
                    let fam = match kind {
                        WordEmbeddingKind::Skipgram => Family::Skipgram,
                        WordEmbeddingKind::Subword => Family::Subword,
                        _ => Family::Glove,
                    };
                    let emb = stage("train-words", train_family(fam, &posts, &cfg.euclid))?;
                    if emb.ngrams.is_some() {
                        let mut ngram_path = output.clone().into_os_string();
                        ngram_path.push(".ngrams");
                        let mut nw = create(Path::new(&ngram_path))?;
                        stage("write-embedding", emb.save(&mut w, Some(&mut nw)))?;
                        nw.flush()?;
                    } else {
                        stage("write-embedding", emb.save(&mut w, None::<&mut Vec<u8>>))?;
                    }
                    (emb.vocab.len(), emb.dim())
                }
            };
            w.flush()?;
            Ok(format!(
                "train-words: {} vectors of dim {} -> {}",
                count,
                dim,
                output.display()
            ))
        }
        Command::TrainPoincare { common, input, output } => {
            let cfg = common.load()?;
            let posts = load_corpus(&input)?;
            let mut w = create(&output)?;
            let (count, dim) = train_poincare_file(&posts, &cfg, &mut w)?;
            w.flush()?;
            Ok(format!(
                "train-poincare: {} vectors of dim {} -> {}",
                count,
                dim,
                output.display()
            ))
        }
        Command::TrainSentence {
            common,
            encoder,
            embedding,
            input,
            output,
        } => {
            let cfg = common.load()?;
            let (cell, attention) = encoder.cell();
            let (table, _) = load_table(&embedding)?;
            let posts = load_corpus(&input)?;
            let config = Seq2SeqConfig {
                cell,
                attention,
                hidden_dim: table.dim(),
                ..cfg.seq2seq.clone()
            };
            let model = stage("train-sentence", train_autoencoder(&posts, &table, &config))?;
            let mut w = create(&output)?;
            stage("write-checkpoint", model.to_checkpoint().write(&mut w))?;
            w.flush()?;
            Ok(format!(
                "train-sentence: {} epochs, final token loss {:.6}, sequence loss {:.6} -> {}",
                model.loss_history.len(),
                model.loss_history.last().copied().unwrap_or(f64::NAN),
                model.sequence_loss_history.last().copied().unwrap_or(f64::NAN),
                output.display()
            ))
        }
        Command::TrainClassifier {
            common,
            encoder,
            embedding,
            sentence_model,
            input,
            output,
        } => {
            let cfg = common.load()?;
            let (table, _) = load_table(&embedding)?;
            let kind = encoder.kind();
            let enc = match (kind.pooling(), kind.seq2seq(), &sentence_model) {
                (Some(mode), _, _) => Some(SentenceEncoder::Pool(mode)),
                (_, Some(_), Some(path)) => {
                    let ck = stage("read-sentence-model", Checkpoint::read(open(path)?))?;
                    Some(SentenceEncoder::Seq2Seq(Box::new(stage(
                        "read-sentence-model",
                        Seq2SeqModel::from_checkpoint(&ck),
                    )?)))
                }
                (_, Some(_), None) => {
                    return Err(Error::Config(format!(
                        "encoder `{}` needs --sentence-model",
                        kind.name()
                    )));
                }
                _ => None,
            };
            let posts = load_corpus(&input)?;
            let split = stage("split", split_holdout(&posts, cfg.seed))?;
            let examples = |ps: &[AnnotatedPost]| -> Result<Vec<Example>> {
                ps.iter()
                    .map(|p| {
                        Ok(Example {
                            features: featurize(&p.sentences, &table, enc.as_ref())?,
                            label: p.label,
                        })
                    })
                    .collect()
            };
            let train = stage("featurize", examples(&split.train))?;
            let val = stage("featurize", examples(&split.validation))?;
            let clf = stage("train-classifier", train_classifier(&train, &val, &cfg.classifier))?;
            let mut w = create(&output)?;
            stage("write-checkpoint", clf.to_checkpoint().write(&mut w))?;
            w.flush()?;
            Ok(format!(
                "train-classifier: best epoch {} with validation F1 {} -> {}",
                clf.best_epoch,
                clf.validation_f1
                    .get(clf.best_epoch.wrapping_sub(1))
                    .map_or("n/a".into(), |f| format!("{:.4}", f)),
                output.display()
            ))
        }
        Command::Evaluate {
            common,
            grid,
            family,
            encoder,
            input,
            output,
        } => {
            let cfg = common.load()?;
            let posts = load_corpus(&input)?;
            let split = stage("split", split_holdout(&posts, cfg.seed))?;
            let specs = match grid {
                GridArg::Full => full_grid(&cfg.seeds),
                GridArg::Single => vec![ExperimentSpec {
                    word_embedding: family.expect("required by clap").kind(),
                    sentence_encoder: encoder.expect("required by clap").kind(),
                    seeds: cfg.seeds.clone(),
                }],
            };
            let workers = workers_from_env();
            let cells = run_grid(&specs, &split, &cfg, workers)?;
            let mut w = create(&output)?;
            w.write_all(results_csv(&cells)?.as_bytes())?;
            w.flush()?;
            let best = cells
                .iter()
                .max_by(|a, b| a.report.mean.f1.total_cmp(&b.report.mean.f1))
                .expect("grid is non-empty");
            Ok(format!(
                "evaluate: {} cells x {} seeds, best mean F1 {:.4} ({}/{}) -> {}",
                cells.len(),
                cfg.seeds.len(),
                best.report.mean.f1,
                best.word_embedding.name(),
                best.sentence_encoder.name(),
                output.display()
            ))
        }
        Command::Nn { embedding, token, k } => {
            let (table, hyperbolic) = load_table(&embedding)?;
            let query = table
                .get(&token)
                .ok_or_else(|| Error::Lookup(format!("token `{token}`")))?
                .to_vec();
            let found = if hyperbolic {
                poincare_neighbors(&table, &query, Some(&token), k)?
            } else {
                neighbors_in_table(&table, &query, Some(&token), k)?
            };
            for (t, score) in &found {
                println!("{t}\t{score}");
            }
            Ok(format!(
                "nn: {} neighbours of `{token}` by {}",
                found.len(),
                if hyperbolic { "poincare distance" } else { "cosine" }
            ))
        }
        Command::ExportTable { input, output, format } => {
            let cells = stage("read-results", read_results(open(&input)?))?;
            let fmt = match format {
                FormatArg::Markdown => TableFormat::Markdown,
                FormatArg::Csv => TableFormat::Csv,
            };
            let text = emit_table(&cells, fmt)?;
            let mut w = create(&output)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
            Ok(format!("export-table: {} rows -> {}", cells.len(), output.display()))
        }
    }
}

fn train_poincare_file(posts: &[AnnotatedPost], cfg: &RunConfig, w: &mut impl Write) -> Result<(usize, usize)> {
    let vocab = stage("vocabulary", build_vocab(posts, cfg.euclid.min_count))?;
    let graph = build_relation_graph(posts, Some(&vocab));
    let emb = stage("train-poincare", train_poincare(&graph, &cfg.poincare))?;
    stage("write-embedding", emb.save(&mut *w))?;
    Ok((emb.word_count, emb.dim()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let start = Instant::now();
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary} ({:.2}s)", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
