//! Synthetic corpora with a known generating process.
//!
//! The token inventory is split into three disjoint sets: tokens only the
//! target relation emits, tokens only the other relations emit, and shared
//! tokens. Each token of an argument is drawn from the shared set with
//! probability `overlap` and from its class's own set otherwise, uniformly
//! within the chosen set. `overlap = 0` gives a perfectly separable corpus;
//! `overlap = 1` makes both classes identically distributed.

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, RawDocumentPair, Relation, Split};
use crate::error::{Error, Result};
use crate::numerics::RngState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of distinct token types.
    pub vocab_size: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub train_positive_fraction: f64,
    /// Positive fraction of dev and test, left unbalanced.
    pub eval_positive_fraction: f64,
    pub overlap: f64,
    pub target: Relation,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            train: 2000,
            dev: 400,
            test: 400,
            train_positive_fraction: 0.5,
            eval_positive_fraction: 0.25,
            overlap: 0.3,
            target: Relation::Expansion,
            min_tokens: 8,
            max_tokens: 16,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::Config(format!("synthetic vocab size must be >= 4, got {}", self.vocab_size)));
        }
        for (name, f) in [
            ("train_positive_fraction", self.train_positive_fraction),
            ("eval_positive_fraction", self.eval_positive_fraction),
            ("overlap", self.overlap),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::Config(format!(
                "token range {}..={} is invalid",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

/// Everything needed to audit a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub positive_tokens: Vec<String>,
    pub negative_tokens: Vec<String>,
    pub shared_tokens: Vec<String>,
    pub train: ClassCounts,
    pub dev: ClassCounts,
    pub test: ClassCounts,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub data: DatasetSplit,
    pub truth: GroundTruth,
}

pub fn token_name(i: usize) -> String {
    format!("w{i:05}")
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let v = config.vocab_size;
    let shared_n = v / 3;
    let positive_n = (v - shared_n) / 2;
    let names: Vec<String> = (0..v).map(token_name).collect();
    let positive_tokens = names[..positive_n].to_vec();
    let negative_tokens = names[positive_n..v - shared_n].to_vec();
    let shared_tokens = names[v - shared_n..].to_vec();

    let others: Vec<Relation> = Relation::ALL.into_iter().filter(|r| *r != config.target).collect();
    let mut rng = RngState::new(config.seed);
    let mut data = DatasetSplit::default();
    let mut counts = Vec::new();

    for (split, n, fraction) in [
        (Split::Train, config.train, config.train_positive_fraction),
        (Split::Dev, config.dev, config.eval_positive_fraction),
        (Split::Test, config.test, config.eval_positive_fraction),
    ] {
        let n_pos = ((n as f64) * fraction).round() as usize;
        let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
        rng.shuffle(&mut labels);
        let records: &mut Vec<RawDocumentPair> = match split {
            Split::Train => &mut data.train,
            Split::Dev => &mut data.dev,
            Split::Test => &mut data.test,
        };
        for positive in labels {
            let own = if positive { &positive_tokens } else { &negative_tokens };
            let argument = |rng: &mut RngState| -> Vec<String> {
                let len = config.min_tokens + rng.index(config.max_tokens - config.min_tokens + 1);
                (0..len)
                    .map(|_| {
                        let pool = if shared_tokens.is_empty() || rng.uniform() >= config.overlap {
                            own
                        } else {
                            &shared_tokens
                        };
                        pool[rng.index(pool.len())].clone()
                    })
                    .collect()
            };
            let arg1_tokens = argument(&mut rng);
            let arg2_tokens = argument(&mut rng);
            let relation = if positive {
                config.target
            } else {
                others[rng.index(others.len())]
            };
            records.push(RawDocumentPair {
                arg1_tokens,
                arg2_tokens,
                relation,
            });
        }
        counts.push(ClassCounts {
            positive: n_pos,
            negative: n - n_pos,
        });
    }

    Ok(SyntheticCorpus {
        data,
        truth: GroundTruth {
            config: config.clone(),
            positive_tokens,
            negative_tokens,
            shared_tokens,
            train: counts[0],
            dev: counts[1],
            test: counts[2],
        },
    })
}
