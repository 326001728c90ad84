//! Corpus files, vocabulary, bag-of-words encoding and class balancing.
//!
//! Corpus files are UTF-8 with one record per line:
//!
//! ```text
//! split<TAB>relation<TAB>arg1 tokens<TAB>arg2 tokens
//! ```
//!
//! `split` is `train`, `dev` or `test`; `relation` is `COM`, `CON`, `EXP` or
//! `TEM`; tokens are pre-tokenized and space separated. Tokens are lowercased
//! on load. Blank lines are skipped.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseVector, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "COM")]
    Comparison,
    #[serde(rename = "CON")]
    Contingency,
    #[serde(rename = "EXP")]
    Expansion,
    #[serde(rename = "TEM")]
    Temporal,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::Comparison,
        Relation::Contingency,
        Relation::Expansion,
        Relation::Temporal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Relation::Comparison => "COM",
            Relation::Contingency => "CON",
            Relation::Expansion => "EXP",
            Relation::Temporal => "TEM",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Relation::ALL
            .into_iter()
            .find(|r| r.tag() == s)
            .ok_or_else(|| format!("unknown relation tag {s:?} (expected COM, CON, EXP or TEM)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, dev or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocumentPair {
    pub arg1_tokens: Vec<String>,
    pub arg2_tokens: Vec<String>,
    pub relation: Relation,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<RawDocumentPair>,
    pub dev: Vec<RawDocumentPair>,
    pub test: Vec<RawDocumentPair>,
}

impl DatasetSplit {
    pub fn get(&self, split: Split) -> &[RawDocumentPair] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<RawDocumentPair> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    /// Instances of `relation` in `split`.
    pub fn count(&self, split: Split, relation: Relation) -> usize {
        self.get(split).iter().filter(|p| p.relation == relation).count()
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<DatasetSplit> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), path)
}

/// Parses corpus records from `reader`; `origin` only labels error messages.
pub fn parse_corpus(reader: impl BufRead, origin: &Path) -> Result<DatasetSplit> {
    let mut out = DatasetSplit::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Corpus {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let split: Split = fields[0].trim().parse().map_err(err)?;
        let relation: Relation = fields[1].trim().parse().map_err(err)?;
        let arg1_tokens = tokenize(fields[2]);
        let arg2_tokens = tokenize(fields[3]);
        if arg1_tokens.is_empty() || arg2_tokens.is_empty() {
            return Err(err("both arguments must contain at least one token".into()));
        }
        out.get_mut(split).push(RawDocumentPair {
            arg1_tokens,
            arg2_tokens,
            relation,
        });
    }
    Ok(out)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Writes `data` in corpus format: all train records, then dev, then test.
pub fn write_corpus(data: &DatasetSplit, mut out: impl Write) -> std::io::Result<()> {
    for split in [Split::Train, Split::Dev, Split::Test] {
        for pair in data.get(split) {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                split,
                pair.relation,
                pair.arg1_tokens.join(" "),
                pair.arg2_tokens.join(" ")
            )?;
        }
    }
    Ok(())
}

/// Token-to-index map over the `d_x - 1` most frequent training tokens. The
/// last index is reserved for unknown words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    d_x: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>, d_x: usize) -> Result<Self> {
        if d_x < 2 || tokens.len() > d_x - 1 {
            return Err(Error::Config(format!(
                "vocabulary of {} tokens does not fit dimension {d_x}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, d_x, index })
    }

    /// Rebuilds the lookup table after deserialization.
    pub(crate) fn reindex(self) -> Result<Self> {
        Self::from_tokens(self.tokens, self.d_x)
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn unk_index(&self) -> usize {
        self.d_x - 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.d_x - 1)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Binary presence vector of `tokens`.
    pub fn encode(&self, tokens: &[String]) -> DenseVector {
        let mut v = DenseVector::zeros(self.d_x);
        for t in tokens {
            v.as_mut_slice()[self.lookup(t)] = 1.0;
        }
        v
    }
}

/// Vocabulary of dimension `size`: the `size - 1` most frequent tokens of
/// `train` (ties broken lexicographically) plus the unknown-word slot.
pub fn build_vocab(train: &[RawDocumentPair], size: usize) -> Result<Vocabulary> {
    if size < 2 {
        return Err(Error::Config(format!("vocabulary size must be >= 2, got {size}")));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for pair in train {
        for t in pair.arg1_tokens.iter().chain(&pair.arg2_tokens) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = ranked
        .into_iter()
        .take(size - 1)
        .map(|(t, _)| t.to_string())
        .collect();
    Vocabulary::from_tokens(tokens, size)
}

/// Bag-of-words vectors and one-hot relation label of one discourse.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInstance {
    pub x1: DenseVector,
    pub x2: DenseVector,
    /// `(1, 0)` for the target relation, `(0, 1)` otherwise.
    pub y: DenseVector,
}

impl EncodedInstance {
    pub fn is_positive(&self) -> bool {
        self.y[0] == 1.0
    }
}

pub fn label_vector(positive: bool) -> DenseVector {
    if positive {
        vec![1.0, 0.0].into()
    } else {
        vec![0.0, 1.0].into()
    }
}

pub fn vectorize(pair: &RawDocumentPair, vocab: &Vocabulary, target: Relation) -> EncodedInstance {
    EncodedInstance {
        x1: vocab.encode(&pair.arg1_tokens),
        x2: vocab.encode(&pair.arg2_tokens),
        y: label_vector(pair.relation == target),
    }
}

/// Upsamples the minority class with replacement until both classes have the
/// same count, then shuffles. Every input instance is kept.
pub fn balance_by_resampling(
    train: Vec<EncodedInstance>,
    rng: &mut RngState,
) -> Result<Vec<EncodedInstance>> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..train.len()).partition(|&i| train[i].is_positive());
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Data(format!(
            "cannot balance training data with {} positive and {} negative instances",
            pos.len(),
            neg.len()
        )));
    }
    let (minority, deficit) = if pos.len() < neg.len() {
        (&pos, neg.len() - pos.len())
    } else {
        (&neg, pos.len() - neg.len())
    };
    let extra: Vec<usize> = (0..deficit).map(|_| minority[rng.index(minority.len())]).collect();
    let mut out = train;
    let copies: Vec<EncodedInstance> = extra.into_iter().map(|i| out[i].clone()).collect();
    out.extend(copies);
    rng.shuffle(&mut out);
    Ok(out)
}

/// One one-vs-all task ready for training: balanced train, natural dev/test.
#[derive(Clone, Debug)]
pub struct TaskData {
    pub task: Relation,
    pub vocab: Vocabulary,
    pub train: Vec<EncodedInstance>,
    pub dev: Vec<EncodedInstance>,
    pub test: Vec<EncodedInstance>,
}

impl TaskData {
    pub fn split(&self, split: Split) -> &[EncodedInstance] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Builds the vocabulary from the training split only, encodes every split
/// and balances the training split.
pub fn prepare_task(
    data: &DatasetSplit,
    task: Relation,
    vocab_size: usize,
    rng: &mut RngState,
) -> Result<TaskData> {
    if data.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let vocab = build_vocab(&data.train, vocab_size)?;
    let encode = |pairs: &[RawDocumentPair]| -> Vec<EncodedInstance> {
        pairs.iter().map(|p| vectorize(p, &vocab, task)).collect()
    };
    let train = balance_by_resampling(encode(&data.train), rng)?;
    let dev = encode(&data.dev);
    let test = encode(&data.test);
    Ok(TaskData {
        task,
        vocab,
        train,
        dev,
        test,
    })
}
