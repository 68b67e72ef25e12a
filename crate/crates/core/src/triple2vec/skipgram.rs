use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    /// Starting step size; decays linearly towards `learning_rate * 1e-4`.
    pub learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 64,
            epochs: 30,
            window: 5,
            negatives: 5,
            learning_rate: 0.025,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkipGramOutput {
    /// Input vectors, one row per token id.
    pub embeddings: Matrix,
    /// Ids never seen in the corpus; their rows are untouched initial values.
    pub untrained: Vec<usize>,
    /// Mean negative-sampling loss per (centre, context) pair, per epoch.
    pub epoch_losses: Vec<f64>,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
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

/// Skip-gram with negative sampling over id sequences. Noise ids follow
/// the unigram distribution raised to 0.75. Training is sequential and fully
/// determined by the seed.
pub fn train_skipgram(corpus: &[Vec<usize>], vocab_size: usize, cfg: &SkipGramConfig) -> Result<SkipGramOutput> {
    if cfg.dim == 0 || cfg.epochs == 0 || cfg.window == 0 {
        return Err(Error::invalid("skip-gram dim, epochs and window must be positive"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::invalid("skip-gram learning rate must be positive"));
    }
    let tokens: usize = corpus.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Err(Error::Empty("walk corpus".into()));
    }
    let mut counts = vec![0u64; vocab_size];
    for &id in corpus.iter().flatten() {
        if id >= vocab_size {
            return Err(Error::invalid(format!(
                "corpus id {id} outside vocabulary of {vocab_size}"
            )));
        }
        counts[id] += 1;
    }
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;

    let d = cfg.dim;
    let mut r = rng::stream(cfg.rng_seed, "skipgram");
    let init = 0.5 / d as f64;
    let input: Vec<f64> = (0..vocab_size * d).map(|_| r.random_range(-init..init)).collect();
    let mut input = Matrix::from_vec(vocab_size, d, input)?;
    let mut output = Matrix::zeros(vocab_size, d);

    let total = (tokens * cfg.epochs) as f64;
    let floor = cfg.learning_rate * 1e-4;
    let mut processed = 0usize;
    let mut grad_in = vec![0.0; d];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let (mut loss, mut pairs) = (0.0, 0usize);
        for walk in corpus {
            for (pos, &centre) in walk.iter().enumerate() {
                let lr = (cfg.learning_rate * (1.0 - processed as f64 / total)).max(floor);
                processed += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(walk.len());
                for (cpos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let n = noise.sample(&mut r);
                            if n == context {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let score = linalg::dot(input.row(centre), output.row(target));
                        loss -= if label == 1.0 {
                            log_sigmoid(score)
                        } else {
                            log_sigmoid(-score)
                        };
                        let g = lr * (label - sigmoid(score));
                        linalg::axpy(g, output.row(target), &mut grad_in);
                        let (src, dst) = (input.row(centre).to_vec(), output.row_mut(target));
                        linalg::axpy(g, &src, dst);
                    }
                    linalg::axpy(1.0, &grad_in, input.row_mut(centre));
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(if pairs == 0 { 0.0 } else { loss / pairs as f64 });
    }
    if !input.is_finite() {
        return Err(Error::NonFinite {
            step: processed,
            batch: 0,
            what: "skip-gram vectors".into(),
        });
    }
    let untrained = (0..vocab_size).filter(|&i| counts[i] == 0).collect::<Vec<_>>();
    if !untrained.is_empty() {
        log::warn!(
            "{} ids never occur in the corpus and keep their initial vectors",
            untrained.len()
        );
    }
    Ok(SkipGramOutput {
        embeddings: input,
        untrained,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-800.0) == -800.0);
        assert!(log_sigmoid(800.0) == 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = SkipGramConfig::default();
        assert!(train_skipgram(&[], 3, &cfg).is_err());
        assert!(train_skipgram(&[vec![5]], 3, &cfg).is_err());
        assert!(train_skipgram(&[vec![0]], 1, &SkipGramConfig { dim: 0, ..cfg }).is_err());
    }

    #[test]
    fn absent_ids_are_flagged() {
        let cfg = SkipGramConfig {
            dim: 4,
            epochs: 1,
            ..Default::default()
        };
        let out = train_skipgram(&[vec![0, 2, 0, 2]], 4, &cfg).unwrap();
        assert_eq!(out.untrained, vec![1, 3]);
    }
}
