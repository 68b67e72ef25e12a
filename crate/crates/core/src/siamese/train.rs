use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SiameseModel;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::rng;
use crate::sampler::PtssDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of all optimizer steps over which the learning rate ramps
    /// linearly up from near zero.
    pub warmup_fraction: f64,
    pub epochs: usize,
    /// Number of dense layers in the encoder. Only one is supported.
    pub layers: usize,
    pub rng_seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            batch_size: 128,
            learning_rate: 2e-3,
            warmup_fraction: 0.1,
            epochs: 30,
            layers: 1,
            rng_seed: 0,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction must lie in [0, 1]"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if self.layers != 1 {
            return Err(Error::invalid(format!(
                "encoder depth {} is not supported; only a single dense layer is implemented",
                self.layers
            )));
        }
        Ok(())
    }

    /// Learning rate at 0-based optimizer step `step` out of `total`.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let warm = (self.warmup_fraction * total as f64).ceil() as usize;
        if warm == 0 || step >= warm {
            self.learning_rate
        } else {
            self.learning_rate * (step + 1) as f64 / warm as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub model: SiameseModel,
    /// Mean pair loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch Adam on the mean squared error between branch cosine and PTSS.
/// Embedding rows use lazy updates; the dense layer is updated every step.
pub fn train(mut model: SiameseModel, data: &PtssDataset, cfg: &FineTuneConfig) -> Result<FineTuneOutcome> {
    cfg.validate()?;
    if data.pairs.is_empty() {
        return Err(Error::Empty("PTSS dataset has no pairs".into()));
    }
    let n = model.num_triples();
    if let Some(p) = data.pairs.iter().find(|p| p.triple_a >= n || p.triple_b >= n) {
        return Err(Error::invalid(format!(
            "pair ({}, {}) references a triple beyond the {n} embedding rows",
            p.triple_a, p.triple_b
        )));
    }
    let d = model.dim();
    let emb_len = n * d;
    let w_off = emb_len;
    let b_off = w_off + d * d;
    let mut adam = Adam::new(b_off + d, AdamConfig::default());

    let pairs: Vec<(usize, usize, f64)> = data.pairs.iter().map(|p| (p.triple_a, p.triple_b, p.score)).collect();
    let steps_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut shuffle = rng::stream(cfg.rng_seed, "siamese-shuffle");
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| pairs[i]));
            let g = model.gradients_unchecked(&batch);
            sum += g.loss * batch.len() as f64;
            let lr = cfg.learning_rate_at(step, total);
            adam.next_step();
            let (emb, w1, b1) = model.parts_mut();
            for (row, grad) in &g.rows {
                adam.update(row * d, emb.row_mut(*row), grad, lr);
            }
            adam.update(w_off, w1.as_mut_slice(), g.w1.as_slice(), lr);
            adam.update(b_off, b1, &g.b1, lr);

            let touched_ok = g.rows.iter().all(|(r, _)| emb.row(*r).iter().all(|v| v.is_finite()));
            if !g.loss.is_finite() || !touched_ok || !w1.is_finite() || !b1.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    step,
                    batch: bi,
                    what: "siamese parameters".into(),
                });
            }
            step += 1;
        }
        let mean = sum / pairs.len() as f64;
        debug!("fine-tune epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    info!(
        "fine-tuned {n} triple rows over {total} steps, loss {:.6} -> {:.6}",
        epoch_losses[0],
        epoch_losses[epoch_losses.len() - 1]
    );
    Ok(FineTuneOutcome { model, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::sampler::{Provenance, PtssPair};
    use crate::seed::ModelTag;

    fn dataset(pairs: &[(usize, usize, f64)]) -> PtssDataset {
        PtssDataset {
            pairs: pairs
                .iter()
                .map(|&(a, b, s)| PtssPair {
                    triple_a: a,
                    triple_b: b,
                    score: s,
                    provenance: Provenance::SharedHead,
                })
                .collect(),
            n_param: 5,
            seed_tag: ModelTag::TransE,
            rng_seed: 0,
            negative_shortfalls: 0,
        }
    }

    #[test]
    fn config_validation() {
        assert!(FineTuneConfig::default().validate().is_ok());
        for bad in [
            FineTuneConfig {
                batch_size: 0,
                ..Default::default()
            },
            FineTuneConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
            FineTuneConfig {
                warmup_fraction: 1.5,
                ..Default::default()
            },
            FineTuneConfig {
                epochs: 0,
                ..Default::default()
            },
            FineTuneConfig {
                layers: 2,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn warmup_ramps_then_holds() {
        let cfg = FineTuneConfig {
            learning_rate: 1.0,
            warmup_fraction: 0.1,
            ..Default::default()
        };
        assert_eq!(cfg.learning_rate_at(0, 100), 0.1);
        assert_eq!(cfg.learning_rate_at(4, 100), 0.5);
        assert_eq!(cfg.learning_rate_at(9, 100), 1.0);
        assert_eq!(cfg.learning_rate_at(50, 100), 1.0);
        let flat = FineTuneConfig {
            warmup_fraction: 0.0,
            ..cfg
        };
        assert_eq!(flat.learning_rate_at(0, 100), 1.0);
    }

    #[test]
    fn loss_falls_on_a_fittable_target() {
        let emb = Matrix::from_rows(&[
            vec![0.5, -0.2, 0.1, 0.3],
            vec![-0.4, 0.6, 0.2, -0.1],
            vec![0.1, 0.1, -0.7, 0.2],
            vec![0.3, -0.5, 0.4, 0.6],
        ])
        .unwrap();
        let data = dataset(&[(0, 1, 0.9), (0, 2, -0.3), (1, 3, 0.2), (2, 3, 0.8), (0, 3, 0.0)]);
        let cfg = FineTuneConfig {
            batch_size: 2,
            epochs: 200,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let out = train(SiameseModel::new(emb, 1), &data, &cfg).unwrap();
        let first = out.epoch_losses[0];
        let last = *out.epoch_losses.last().unwrap();
        assert!(last < first * 0.1, "{first} -> {last}");
    }

    #[test]
    fn deterministic_for_a_seed() {
        let emb = Matrix::from_rows(&[vec![0.5, -0.2], vec![-0.4, 0.6], vec![0.1, 0.3]]).unwrap();
        let pairs: Vec<_> = (0..40).map(|i| (i % 3, (i + 1) % 3, (i as f64 * 0.37).sin())).collect();
        let data = dataset(&pairs);
        let cfg = FineTuneConfig {
            batch_size: 8,
            epochs: 3,
            ..Default::default()
        };
        let a = train(SiameseModel::new(emb.clone(), 4), &data, &cfg).unwrap();
        let b = train(SiameseModel::new(emb, 4), &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn rejects_out_of_range_pairs_and_empty_data() {
        let emb = Matrix::from_rows(&[vec![0.5, -0.2]]).unwrap();
        let cfg = FineTuneConfig::default();
        assert!(train(SiameseModel::new(emb.clone(), 0), &dataset(&[(0, 1, 0.1)]), &cfg).is_err());
        assert!(matches!(
            train(SiameseModel::new(emb, 0), &dataset(&[]), &cfg),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let emb = Matrix::from_rows(&[vec![0.5, -0.2], vec![f64::NAN, 0.0]]).unwrap();
        let cfg = FineTuneConfig {
            epochs: 1,
            ..Default::default()
        };
        let err = train(SiameseModel::new(emb, 0), &dataset(&[(0, 1, 0.1)]), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 0, batch: 0, .. }), "{err}");
    }
}
