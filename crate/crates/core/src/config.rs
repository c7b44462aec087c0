//! Flat `key=value` run configuration. Lines starting with `#` are comments;
//! sections are key prefixes such as `seq2seq.` or `classifier.`.

use std::path::Path;
use std::str::FromStr;

use crate::classifier::ClassifierConfig;
use crate::error::{Error, Result};
use crate::euclid::EuclidConfig;
use crate::hyperbolic::PoincareConfig;
use crate::sentence::{Seq2SeqConfig, Seq2SeqLoss};

/// Every accepted key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "vocab.min_count",
    "words.dim",
    "words.window",
    "words.negatives",
    "words.learning_rate",
    "words.epochs",
    "words.ngram_min",
    "words.ngram_max",
    "glove.x_max",
    "glove.alpha",
    "glove.learning_rate",
    "poincare.dim",
    "poincare.learning_rate",
    "poincare.burn_in_epochs",
    "poincare.burn_in_factor",
    "poincare.negatives",
    "poincare.epochs",
    "poincare.epsilon",
    "seq2seq.teacher_forcing",
    "seq2seq.learning_rate",
    "seq2seq.epochs",
    "seq2seq.max_len",
    "seq2seq.train_subset",
    "seq2seq.loss",
    "seq2seq.optimizer",
    "seq2seq.clip_norm",
    "classifier.conv_filters",
    "classifier.kernel_width",
    "classifier.gru_hidden",
    "classifier.dropout",
    "classifier.learning_rate",
    "classifier.epochs",
    "classifier.batch_size",
    "classifier.optimizer",
    "classifier.clip_norm",
    "harness.seeds",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub euclid: EuclidConfig,
    pub poincare: PoincareConfig,
    /// `hidden_dim` is taken from the word vectors at training time.
    pub seq2seq: Seq2SeqConfig,
    pub classifier: ClassifierConfig,
    /// Seeds of the repeated runs in `evaluate`.
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            euclid: EuclidConfig::default(),
            poincare: PoincareConfig::default(),
            seq2seq: Seq2SeqConfig::default(),
            classifier: ClassifierConfig::default(),
            seeds: vec![1, 2, 3],
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> std::result::Result<T, String> {
    raw.parse()
        .map_err(|_| format!("`{raw}` is not a valid {} for `{key}`", std::any::type_name::<T>()))
}

impl RunConfig {
    /// Copy with `seed` pushed into every stage.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.euclid.seed = seed;
        c.poincare.seed = seed;
        c.seq2seq.seed = seed;
        c.classifier.seed = seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.euclid.validate()?;
        self.poincare.validate()?;
        self.classifier.validate()?;
        let mut s = self.seq2seq.clone();
        s.hidden_dim = 1;
        s.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("harness.seeds must list at least one seed".into()));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, raw: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = value(key, raw)?,
            "vocab.min_count" => self.euclid.min_count = value(key, raw)?,
            "words.dim" => self.euclid.dim = value(key, raw)?,
            "words.window" => self.euclid.window = value(key, raw)?,
            "words.negatives" => self.euclid.negatives = value(key, raw)?,
            "words.learning_rate" => self.euclid.learning_rate = value(key, raw)?,
            "words.epochs" => self.euclid.epochs = value(key, raw)?,
            "words.ngram_min" => self.euclid.ngram_range.0 = value(key, raw)?,
            "words.ngram_max" => self.euclid.ngram_range.1 = value(key, raw)?,
            "glove.x_max" => self.euclid.glove_x_max = value(key, raw)?,
            "glove.alpha" => self.euclid.glove_alpha = value(key, raw)?,
            "glove.learning_rate" => self.euclid.glove_learning_rate = value(key, raw)?,
            "poincare.dim" => self.poincare.dim = value(key, raw)?,
            "poincare.learning_rate" => self.poincare.learning_rate = value(key, raw)?,
            "poincare.burn_in_epochs" => self.poincare.burn_in_epochs = value(key, raw)?,
            "poincare.burn_in_factor" => self.poincare.burn_in_lr_factor = value(key, raw)?,
            "poincare.negatives" => self.poincare.negatives = value(key, raw)?,
            "poincare.epochs" => self.poincare.epochs = value(key, raw)?,
            "poincare.epsilon" => self.poincare.epsilon = value(key, raw)?,
            "seq2seq.teacher_forcing" => self.seq2seq.teacher_forcing = value(key, raw)?,
            "seq2seq.learning_rate" => self.seq2seq.learning_rate = value(key, raw)?,
            "seq2seq.epochs" => self.seq2seq.epochs = value(key, raw)?,
            "seq2seq.max_len" => self.seq2seq.max_len = value(key, raw)?,
            "seq2seq.train_subset" => self.seq2seq.train_subset = value(key, raw)?,
            "seq2seq.loss" => self.seq2seq.loss = Seq2SeqLoss::parse(raw).map_err(|e| e.to_string())?,
            "seq2seq.optimizer" => self.seq2seq.optimizer = raw.parse().map_err(|e: Error| e.to_string())?,
            "seq2seq.clip_norm" => self.seq2seq.clip_norm = value(key, raw)?,
            "classifier.conv_filters" => self.classifier.conv_filters = value(key, raw)?,
            "classifier.kernel_width" => self.classifier.kernel_width = value(key, raw)?,
            "classifier.gru_hidden" => self.classifier.gru_hidden = value(key, raw)?,
            "classifier.dropout" => self.classifier.dropout = value(key, raw)?,
            "classifier.learning_rate" => self.classifier.learning_rate = value(key, raw)?,
            "classifier.epochs" => self.classifier.epochs = value(key, raw)?,
            "classifier.batch_size" => self.classifier.batch_size = value(key, raw)?,
            "classifier.optimizer" => self.classifier.optimizer = raw.parse().map_err(|e: Error| e.to_string())?,
            "classifier.clip_norm" => self.classifier.clip_norm = value(key, raw)?,
            "harness.seeds" => {
                self.seeds = raw
                    .split(',')
                    .map(|s| value::<u64>(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses and validates a config. Keys may appear at most once.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                message,
            };
            let (key, raw) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (key, raw) = (key.trim(), raw.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, raw).map_err(err)?;
        }
        let seed = cfg.seed;
        let cfg = cfg.with_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let e = &self.euclid;
        let p = &self.poincare;
        let s = &self.seq2seq;
        let c = &self.classifier;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let values = [
            self.seed.to_string(),
            e.min_count.to_string(),
            e.dim.to_string(),
            e.window.to_string(),
            e.negatives.to_string(),
            e.learning_rate.to_string(),
            e.epochs.to_string(),
            e.ngram_range.0.to_string(),
            e.ngram_range.1.to_string(),
            e.glove_x_max.to_string(),
            e.glove_alpha.to_string(),
            e.glove_learning_rate.to_string(),
            p.dim.to_string(),
            p.learning_rate.to_string(),
            p.burn_in_epochs.to_string(),
            p.burn_in_lr_factor.to_string(),
            p.negatives.to_string(),
            p.epochs.to_string(),
            p.epsilon.to_string(),
            s.teacher_forcing.to_string(),
            s.learning_rate.to_string(),
            s.epochs.to_string(),
            s.max_len.to_string(),
            s.train_subset.to_string(),
            s.loss.name().to_string(),
            s.optimizer.to_string(),
            s.clip_norm.to_string(),
            c.conv_filters.to_string(),
            c.kernel_width.to_string(),
            c.gru_hidden.to_string(),
            c.dropout.to_string(),
            c.learning_rate.to_string(),
            c.epochs.to_string(),
            c.batch_size.to_string(),
            c.optimizer.to_string(),
            c.clip_norm.to_string(),
            seeds.join(","),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
