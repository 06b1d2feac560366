//! Skip-gram with negative sampling over node walks.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::alias::AliasTable;
use super::walks::Corpus;
use super::WalkConfig;
use crate::error::{Error, Result};

/// Exponent applied to node frequencies in the noise distribution.
pub const NOISE_EXPONENT: f64 = 0.75;
/// Final learning rate as a fraction of the initial one.
pub const MIN_LEARNING_RATE_FRACTION: f64 = 0.05;

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: f32 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    acc.iter().sum::<f32>() + tail
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Input and output vectors of a skip-gram model.
#[derive(Debug, Clone)]
pub struct SkipGramModel {
    pub dim: usize,
    pub input: Vec<f32>,
    pub output: Vec<f32>,
}

impl SkipGramModel {
    pub fn input_row(&self, node: usize) -> &[f32] {
        &self.input[node * self.dim..(node + 1) * self.dim]
    }

    pub fn output_row(&self, node: usize) -> &[f32] {
        &self.output[node * self.dim..(node + 1) * self.dim]
    }

    /// Mean negative-sampling log-likelihood of `(input, output)` pairs, each
    /// with its own block of negatives (`negatives.len()` must be a multiple of
    /// `pairs.len()`). Higher is better.
    pub fn objective(&self, pairs: &[(usize, usize)], negatives: &[usize]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let per = negatives.len() / pairs.len();
        let total: f64 = pairs
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| {
                let inp = self.input_row(u);
                let pos = log_sigmoid(dot(inp, self.output_row(v)) as f64);
                let neg: f64 = negatives[i * per..(i + 1) * per]
                    .iter()
                    .map(|&w| log_sigmoid(-(dot(inp, self.output_row(w)) as f64)))
                    .sum();
                pos + neg
            })
            .sum();
        total / pairs.len() as f64
    }

    pub fn into_embedding(self, node_count: usize) -> Array2<f32> {
        Array2::from_shape_vec((node_count, self.dim), self.input)
            .expect("input matrix has node_count rows")
    }
}

/// Per-epoch diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f32,
    pub pairs: u64,
}

/// Single-worker SGNS trainer; identical inputs give bit-identical output.
pub struct SkipGramTrainer<'c> {
    corpus: &'c Corpus,
    cfg: WalkConfig,
    model: SkipGramModel,
    noise: AliasTable,
    rng: ChaCha8Rng,
    epoch: usize,
    processed: u64,
    total_tokens: u64,
    neu1e: Vec<f32>,
}

impl<'c> SkipGramTrainer<'c> {
    pub fn new(corpus: &'c Corpus, cfg: &WalkConfig) -> Result<Self> {
        cfg.validate()?;
        let n = corpus.node_count;
        if corpus.token_count() == 0 || n == 0 {
            return Err(Error::invalid("empty walk corpus"));
        }
        let mut counts = vec![0u64; n];
        for walk in &corpus.walks {
            for &node in walk {
                let slot = counts.get_mut(node as usize).ok_or(Error::InvalidNode {
                    index: node as usize,
                    node_count: n,
                })?;
                *slot += 1;
            }
        }
        let weights: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64).powf(NOISE_EXPONENT))
            .collect();
        let noise = AliasTable::new(&weights).expect("corpus has at least one token");

        let dim = cfg.dimension;
        // separate stream from the walks, which use streams 0..rounds*n
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX);
        let input = (0..n * dim)
            .map(|_| (rng.random::<f32>() - 0.5) / dim as f32)
            .collect();
        let model = SkipGramModel {
            dim,
            input,
            output: vec![0.0; n * dim],
        };
        Ok(SkipGramTrainer {
            corpus,
            cfg: cfg.clone(),
            model,
            noise,
            rng,
            epoch: 0,
            processed: 0,
            total_tokens: (corpus.token_count() * cfg.epochs) as u64,
            neu1e: vec![0.0; dim],
        })
    }

    pub fn model(&self) -> &SkipGramModel {
        &self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    fn learning_rate(&self) -> f32 {
        let progress = (self.processed as f64 / self.total_tokens.max(1) as f64).min(1.0);
        let frac = 1.0 - (1.0 - MIN_LEARNING_RATE_FRACTION) * progress;
        (self.cfg.initial_learning_rate * frac) as f32
    }

    /// One pass over the corpus in a seeded walk order.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let mut order: Vec<usize> = (0..self.corpus.walks.len()).collect();
        order.shuffle(&mut self.rng);
        let window = self.cfg.window;
        let negatives = self.cfg.negatives_per_positive;
        let dim = self.model.dim;
        let mut loss = 0.0f64;
        let mut pairs = 0u64;
        let mut lr = self.learning_rate();
        for &w in &order {
            let walk = &self.corpus.walks[w];
            for (i, &center) in walk.iter().enumerate() {
                // reduced window as in word2vec: effective radius drawn from 1..=window
                let radius = self.rng.random_range(1..=window);
                let lo = i.saturating_sub(radius);
                let hi = (i + radius + 1).min(walk.len());
                for (j, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let inp = context as usize * dim;
                    self.neu1e.fill(0.0);
                    for d in 0..=negatives {
                        let (target, label) = if d == 0 {
                            (center as usize, 1.0f32)
                        } else {
                            let t = self.noise.sample(&mut self.rng);
                            if t == center as usize {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out = target * dim;
                        let f = dot(
                            &self.model.input[inp..inp + dim],
                            &self.model.output[out..out + dim],
                        );
                        let p = sigmoid(f);
                        loss -= if label > 0.0 {
                            log_sigmoid(f as f64)
                        } else {
                            log_sigmoid(-(f as f64))
                        };
                        let g = (label - p) * lr;
                        axpy(g, &self.model.output[out..out + dim], &mut self.neu1e);
                        let (input, output) = (&self.model.input, &mut self.model.output);
                        axpy(g, &input[inp..inp + dim], &mut output[out..out + dim]);
                    }
                    axpy(1.0, &self.neu1e, &mut self.model.input[inp..inp + dim]);
                    pairs += 1;
                }
                self.processed += 1;
                if self.processed % 10_000 == 0 {
                    lr = self.learning_rate();
                }
            }
        }
        self.epoch += 1;
        let mean_loss = loss / pairs.max(1) as f64;
        if !mean_loss.is_finite() || self.model.input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "skip-gram diverged in epoch {} (mean loss {mean_loss}, learning rate {lr})",
                self.epoch
            )));
        }
        log::debug!("epoch {}: {pairs} pairs, mean loss {mean_loss:.5}", self.epoch);
        Ok(EpochStats {
            epoch: self.epoch,
            mean_loss,
            learning_rate: lr,
            pairs,
        })
    }

    pub fn finish(self) -> SkipGramModel {
        self.model
    }
}

/// Trains for `cfg.epochs` epochs and returns the input vectors (N × d).
pub fn train_skipgram(corpus: &Corpus, cfg: &WalkConfig) -> Result<Array2<f32>> {
    let mut trainer = SkipGramTrainer::new(corpus, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish().into_embedding(corpus.node_count))
}
