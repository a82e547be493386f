//! Skip-gram with negative sampling.
//!
//! Each (center, context) pair contributes
//!
//! ```text
//! L = −ln σ(u_ctx · v_center) − Σ_k ln σ(−u_k · v_center)
//! ```
//!
//! where `v` are input vectors, `u` output vectors and the `k` negatives are
//! drawn from the unigram distribution raised to 0.75. Updates are plain SGD
//! with a learning rate decaying linearly over the run.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingMode, EmbeddingTable};
use crate::util::{derive_seed, short_hash};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgnsConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub final_lr: f64,
    pub min_count: usize,
    /// Frequent-token downsampling threshold; 0 disables it.
    pub subsample: f64,
    pub seed: u64,
    /// Training is reproducible only with a single worker count; with more
    /// than one, shards are trained independently and averaged every epoch.
    pub workers: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig::hierarchy()
    }
}

impl SgnsConfig {
    /// Defaults for walk sentences.
    pub fn hierarchy() -> Self {
        SgnsConfig {
            dimension: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            final_lr: 0.0001,
            min_count: 1,
            subsample: 0.0,
            seed: 0,
            workers: 1,
        }
    }

    /// Defaults for natural-language corpora.
    pub fn text() -> Self {
        SgnsConfig {
            dimension: 128,
            min_count: 5,
            subsample: 1e-3,
            ..SgnsConfig::hierarchy()
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let fail = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_string()));
        if self.dimension < 2 {
            return fail("dimension must be >= 2");
        }
        if self.window < 1 {
            return fail("window must be >= 1");
        }
        if self.negatives < 1 {
            return fail("negatives must be >= 1");
        }
        if !(self.initial_lr > self.final_lr && self.final_lr > 0.0) {
            return fail("learning rates must satisfy initial > final > 0");
        }
        if self.workers < 1 {
            return fail("workers must be >= 1");
        }
        if !(self.subsample >= 0.0) {
            return fail("subsample must be >= 0");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("config serializes"))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One logistic term of the loss for output vector `u`. Adds `g · u` to
/// `grad_center` and returns `(loss, g)`, where `g` is the derivative of the
/// term with respect to the score `u · v`.
fn logistic_term(center: &[f64], u: &[f64], positive: bool, grad_center: &mut [f64]) -> (f64, f64) {
    let x = dot(u, center);
    let (loss, g) = if positive {
        (softplus(-x), sigmoid(x) - 1.0)
    } else {
        (softplus(x), sigmoid(x))
    };
    for (gc, ui) in grad_center.iter_mut().zip(u) {
        *gc += g * ui;
    }
    (loss, g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradients {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Loss of one (center, context, negatives) triple and its gradient with
/// respect to each vector, negatives treated as distinct vectors.
pub fn loss_and_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGradients {
    let mut grad_center = vec![0.0; center.len()];
    let (mut loss, g) = logistic_term(center, context, true, &mut grad_center);
    let grad_context = center.iter().map(|v| g * v).collect();
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for u in negatives {
        let (l, g) = logistic_term(center, u, false, &mut grad_center);
        loss += l;
        grad_negatives.push(center.iter().map(|v| g * v).collect());
    }
    SgnsGradients {
        loss,
        center: grad_center,
        context: grad_context,
        negatives: grad_negatives,
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingReport {
    /// Mean loss per (center, context) pair for each epoch.
    pub epoch_losses: Vec<f64>,
    pub vocabulary_size: usize,
    pub token_count: usize,
}

struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn build(sentences: &[Vec<String>], min_count: usize) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in sentences {
            for t in s {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count as u64)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let words: Vec<String> = entries.iter().map(|(w, _)| w.to_string()).collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary {
            words,
            counts: entries.iter().map(|e| e.1).collect(),
            index,
        }
    }
}

struct Params {
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl Params {
    fn average(parts: Vec<Params>) -> Params {
        let n = parts.len() as f64;
        let mut it = parts.into_iter();
        let mut acc = it.next().expect("at least one worker");
        for p in it {
            for (a, b) in acc.input.iter_mut().zip(&p.input) {
                *a += b;
            }
            for (a, b) in acc.output.iter_mut().zip(&p.output) {
                *a += b;
            }
        }
        if n > 1.0 {
            acc.input.iter_mut().for_each(|a| *a /= n);
            acc.output.iter_mut().for_each(|a| *a /= n);
        }
        acc
    }

    /// SGD step on one pair; returns the pair's loss before the update.
    fn step(&mut self, center: usize, context: usize, negatives: &[usize], lr: f64, grad_center: &mut [f64]) -> f64 {
        let dim = self.dim;
        grad_center.iter_mut().for_each(|g| *g = 0.0);
        let v = &self.input[center * dim..(center + 1) * dim];
        let mut loss = 0.0;
        let targets = std::iter::once((context, true)).chain(negatives.iter().map(|&n| (n, false)));
        for (target, positive) in targets {
            let u = &mut self.output[target * dim..(target + 1) * dim];
            let (l, g) = logistic_term(v, u, positive, grad_center);
            loss += l;
            for (ui, vi) in u.iter_mut().zip(v) {
                *ui -= lr * g * vi;
            }
        }
        let v = &mut self.input[center * dim..(center + 1) * dim];
        for (vi, gi) in v.iter_mut().zip(grad_center.iter()) {
            *vi -= lr * gi;
        }
        loss
    }
}

/// Trains embeddings for every token occurring at least `min_count` times.
pub fn train_sgns(sentences: &[Vec<String>], cfg: &SgnsConfig) -> Result<EmbeddingTable, EmbeddingError> {
    train_sgns_with_report(sentences, cfg, EmbeddingMode::Text).map(|(t, _)| t)
}

pub fn train_sgns_with_report(
    sentences: &[Vec<String>],
    cfg: &SgnsConfig,
    mode: EmbeddingMode,
) -> Result<(EmbeddingTable, TrainingReport), EmbeddingError> {
    cfg.validate()?;
    let vocab = Vocabulary::build(sentences, cfg.min_count);
    if vocab.words.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.index.get(t).copied()).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    let token_count: usize = encoded.iter().map(Vec::len).sum();

    let dim = cfg.dimension;
    let n = vocab.words.len();
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, 0));
    let scale = 0.5 / dim as f64;
    let mut params = Params {
        dim,
        input: (0..n * dim).map(|_| init_rng.gen_range(-scale..scale)).collect(),
        output: vec![0.0; n * dim],
    };

    let noise = WeightedIndex::new(vocab.counts.iter().map(|&c| (c as f64).powf(0.75)))
        .expect("vocabulary counts are positive");
    let keep_prob: Vec<f64> = vocab
        .counts
        .iter()
        .map(|&c| {
            if cfg.subsample <= 0.0 {
                1.0
            } else {
                let threshold = cfg.subsample * token_count as f64;
                ((c as f64 / threshold).sqrt() + 1.0) * threshold / c as f64
            }
        })
        .collect();

    let workers = cfg.workers.min(encoded.len()).max(1);
    let shard_len = encoded.len().div_ceil(workers);
    let shards: Vec<&[Vec<usize>]> = encoded.chunks(shard_len).collect();

    let mut report = TrainingReport {
        vocabulary_size: n,
        token_count,
        ..Default::default()
    };
    for epoch in 0..cfg.epochs {
        let run_shard = |w: usize, shard: &[Vec<usize>], mut local: Params| -> (Params, f64, usize) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64, w as u64));
            let shard_tokens: usize = shard.iter().map(Vec::len).sum();
            let planned = (cfg.epochs * shard_tokens).max(1) as f64;
            let mut processed = epoch * shard_tokens;
            let mut grad = vec![0.0; dim];
            let mut negs = Vec::with_capacity(cfg.negatives);
            let (mut loss_sum, mut pairs) = (0.0, 0usize);
            let mut kept = Vec::new();
            for sentence in shard {
                kept.clear();
                kept.extend(
                    sentence
                        .iter()
                        .copied()
                        .filter(|&t| keep_prob[t] >= 1.0 || rng.gen::<f64>() < keep_prob[t]),
                );
                let progress = processed as f64 / planned;
                processed += sentence.len();
                let lr = cfg.initial_lr - (cfg.initial_lr - cfg.final_lr) * progress;
                for (pos, &center) in kept.iter().enumerate() {
                    let reach = cfg.window - rng.gen_range(0..cfg.window);
                    let lo = pos.saturating_sub(reach);
                    let hi = (pos + reach).min(kept.len() - 1);
                    for (cpos, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                        if cpos == pos {
                            continue;
                        }
                        negs.clear();
                        while negs.len() < cfg.negatives {
                            let mut draw = noise.sample(&mut rng);
                            let mut tries = 0;
                            while draw == context && tries < 10 {
                                draw = noise.sample(&mut rng);
                                tries += 1;
                            }
                            if draw == context {
                                break;
                            }
                            negs.push(draw);
                        }
                        loss_sum += local.step(center, context, &negs, lr, &mut grad);
                        pairs += 1;
                    }
                }
            }
            (local, loss_sum, pairs)
        };

        let results: Vec<(Params, f64, usize)> = if shards.len() == 1 {
            let local = std::mem::replace(
                &mut params,
                Params {
                    dim,
                    input: Vec::new(),
                    output: Vec::new(),
                },
            );
            vec![run_shard(0, shards[0], local)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = shards
                    .iter()
                    .enumerate()
                    .map(|(w, shard)| {
                        let local = Params {
                            dim,
                            input: params.input.clone(),
                            output: params.output.clone(),
                        };
                        let run_shard = &run_shard;
                        scope.spawn(move || run_shard(w, shard, local))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        };
        let loss: f64 = results.iter().map(|r| r.1).sum();
        let pairs: usize = results.iter().map(|r| r.2).sum();
        report.epoch_losses.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
        params = Params::average(results.into_iter().map(|r| r.0).collect());
    }

    let corpus_hash = {
        let mut joined = String::new();
        for s in sentences {
            joined.push_str(&s.join(" "));
            joined.push('\n');
        }
        short_hash(joined.as_bytes())
    };
    let table = EmbeddingTable::from_rows(
        mode,
        dim,
        vocab.words.into_iter().zip(params.input.chunks(dim).map(<[f64]>::to_vec)),
        cfg.hash(),
        corpus_hash,
    )?;
    Ok((table, report))
}
