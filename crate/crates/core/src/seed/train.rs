//! In-repo seed training with negative sampling.
//!
//! TransE and RotatE minimise a margin ranking loss; DistMult and ComplEx
//! minimise binary cross-entropy on logits. Negatives corrupt the head or
//! the tail (coin flip) with a uniformly drawn different entity.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scoring::{self, Norm};
use super::{EmbeddingSet, ModelTag};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::linalg::Matrix;
use crate::optim::{Adam, AdamConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    /// Margin of the ranking loss (TransE, RotatE).
    pub margin: f64,
    /// Distance of the TransE score.
    pub norm: Norm,
    pub rng_seed: u64,
}

impl Default for SeedTrainConfig {
    fn default() -> Self {
        SeedTrainConfig {
            dim: 64,
            epochs: 100,
            learning_rate: 0.01,
            batch_size: 128,
            negatives_per_positive: 1,
            margin: 1.0,
            norm: Norm::L2,
            rng_seed: 0,
        }
    }
}

impl SeedTrainConfig {
    pub fn validate(&self, model: ModelTag) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid("seed dimension must be at least 2"));
        }
        if self.negatives_per_positive < 1 {
            return Err(Error::invalid("need at least one negative per positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !model.is_trainable() {
            return Err(Error::invalid(format!(
                "{model} cannot be trained in-repo; import it instead"
            )));
        }
        if model.value_kind() == super::ValueKind::ComplexInterleaved && !self.dim.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "{model} needs an even dimension, got {}",
                self.dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedSeed {
    pub embeddings: EmbeddingSet,
    /// Mean loss per positive, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Parameters being optimised: entity rows plus per-model predicate rows
/// (phases for RotatE).
struct Params {
    model: ModelTag,
    norm: Norm,
    entities: Matrix,
    predicates: Matrix,
}

impl Params {
    fn init(g: &KnowledgeGraph, model: ModelTag, dim: usize, r: &mut rng::Rng) -> Self {
        let bound = 6.0 / (dim as f64).sqrt();
        let uniform = |rows: usize, cols: usize, bound: f64, r: &mut rng::Rng| {
            let data = (0..rows * cols).map(|_| r.random_range(-bound..bound)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized by construction")
        };
        let mut entities = uniform(g.num_entities(), dim, bound, r);
        let predicates = match model {
            ModelTag::RotatE => uniform(g.num_predicates(), dim / 2, PI, r),
            ModelTag::TransE => {
                let mut p = uniform(g.num_predicates(), dim, bound, r);
                for i in 0..p.rows() {
                    normalize(p.row_mut(i));
                }
                p
            }
            _ => uniform(g.num_predicates(), dim, bound, r),
        };
        if model == ModelTag::TransE {
            for i in 0..entities.rows() {
                project_unit_ball(entities.row_mut(i));
            }
        }
        Params {
            model,
            norm: Norm::L2,
            entities,
            predicates,
        }
    }

    fn score(&self, t: Triple) -> f64 {
        let h = self.entities.row(t.head);
        let p = self.predicates.row(t.predicate);
        let tl = self.entities.row(t.tail);
        match self.model {
            ModelTag::TransE => scoring::transe(h, p, tl, self.norm),
            ModelTag::DistMult => scoring::distmult(h, p, tl),
            ModelTag::ComplEx => scoring::complex(h, p, tl),
            ModelTag::RotatE => scoring::rotate(h, &scoring::phases_to_rotation(p), tl),
            _ => unreachable!("validated trainable"),
        }
    }

    /// Gradient of the score in parameter space.
    fn grad(&self, t: Triple) -> scoring::ScoreGrad {
        let h = self.entities.row(t.head);
        let p = self.predicates.row(t.predicate);
        let tl = self.entities.row(t.tail);
        let g = match self.model {
            ModelTag::TransE => scoring::transe_grad(h, p, tl, self.norm),
            ModelTag::DistMult => scoring::distmult_grad(h, p, tl),
            ModelTag::ComplEx => scoring::complex_grad(h, p, tl),
            ModelTag::RotatE => {
                let rot = scoring::phases_to_rotation(p);
                scoring::rotate_grad(h, &rot, tl).and_then(|mut g| {
                    g.predicate = scoring::rotate_phase_grad(h, p, tl)?;
                    Ok(g)
                })
            }
            _ => unreachable!("validated trainable"),
        };
        g.expect("dimensions fixed at init")
    }

    fn into_embeddings(self) -> Result<EmbeddingSet> {
        let predicates = if self.model == ModelTag::RotatE {
            let rows: Vec<Vec<f64>> = self.predicates.iter_rows().map(scoring::phases_to_rotation).collect();
            let cols = self.entities.cols();
            if rows.is_empty() {
                Matrix::zeros(0, cols)
            } else {
                Matrix::from_rows(&rows)?
            }
        } else {
            self.predicates
        };
        EmbeddingSet::new(self.entities, predicates, self.model.value_kind(), self.model)
    }
}

fn normalize(v: &mut [f64]) {
    let n = crate::linalg::norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn project_unit_ball(v: &mut [f64]) {
    let n = crate::linalg::norm2(v);
    if n > 1.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-sparse gradient accumulator.
struct SparseGrad {
    grad: Matrix,
    touched: Vec<usize>,
    is_touched: Vec<bool>,
}

impl SparseGrad {
    fn new(rows: usize, cols: usize) -> Self {
        SparseGrad {
            grad: Matrix::zeros(rows, cols),
            touched: Vec::new(),
            is_touched: vec![false; rows],
        }
    }

    fn add(&mut self, row: usize, scale: f64, g: &[f64]) {
        if !self.is_touched[row] {
            self.is_touched[row] = true;
            self.touched.push(row);
        }
        crate::linalg::axpy(scale, g, self.grad.row_mut(row));
    }

    fn apply(&mut self, params: &mut Matrix, adam: &mut Adam, lr: f64, after: impl Fn(&mut [f64])) {
        self.touched.sort_unstable();
        let cols = params.cols();
        for &row in &self.touched {
            adam.update(row * cols, params.row_mut(row), self.grad.row(row), lr);
            after(params.row_mut(row));
            self.grad.row_mut(row).fill(0.0);
            self.is_touched[row] = false;
        }
        self.touched.clear();
    }
}

fn corrupt(t: Triple, n_entities: usize, r: &mut rng::Rng) -> Triple {
    let replace_head = r.random_bool(0.5);
    let current = if replace_head { t.head } else { t.tail };
    let mut e = r.random_range(0..n_entities - 1);
    if e >= current {
        e += 1;
    }
    if replace_head {
        Triple::new(e, t.predicate, t.tail)
    } else {
        Triple::new(t.head, t.predicate, e)
    }
}

/// Fits seed embeddings on `g`. Deterministic given `cfg.rng_seed`.
pub fn train_seed(g: &KnowledgeGraph, model: ModelTag, cfg: &SeedTrainConfig) -> Result<TrainedSeed> {
    cfg.validate(model)?;
    if g.num_triples() == 0 {
        return Err(Error::Empty("cannot train seeds on an empty graph".into()));
    }
    if g.num_entities() < 2 {
        return Err(Error::invalid("negative sampling needs at least two entities"));
    }

    let mut r = rng::stream(cfg.rng_seed, "seed-train");
    let mut params = Params::init(g, model, cfg.dim, &mut r);
    params.norm = cfg.norm;

    let mut adam_e = Adam::new(params.entities.as_slice().len(), AdamConfig::default());
    let mut adam_p = Adam::new(params.predicates.as_slice().len(), AdamConfig::default());
    let mut grad_e = SparseGrad::new(params.entities.rows(), params.entities.cols());
    let mut grad_p = SparseGrad::new(params.predicates.rows(), params.predicates.cols());

    let margin_loss = matches!(model, ModelTag::TransE | ModelTag::RotatE);
    let negs = cfg.negatives_per_positive;
    let mut order: Vec<usize> = (0..g.num_triples()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            for &ti in batch {
                let pos = g.triple(ti);
                let f_pos = params.score(pos);
                let g_pos = params.grad(pos);
                let mut dpos = 0.0;
                for _ in 0..negs {
                    let neg = corrupt(pos, g.num_entities(), &mut r);
                    let f_neg = params.score(neg);
                    let (loss, dl_dpos, dl_dneg) = if margin_loss {
                        let l = cfg.margin - f_pos + f_neg;
                        if l > 0.0 {
                            (l, -1.0, 1.0)
                        } else {
                            (0.0, 0.0, 0.0)
                        }
                    } else {
                        (softplus(f_neg), 0.0, sigmoid(f_neg))
                    };
                    epoch_loss += loss / negs as f64;
                    dpos += dl_dpos / negs as f64;
                    if dl_dneg != 0.0 {
                        let g_neg = params.grad(neg);
                        let s = scale * dl_dneg / negs as f64;
                        grad_e.add(neg.head, s, &g_neg.head);
                        grad_e.add(neg.tail, s, &g_neg.tail);
                        grad_p.add(neg.predicate, s, &g_neg.predicate);
                    }
                }
                if !margin_loss {
                    epoch_loss += softplus(-f_pos);
                    dpos = -sigmoid(-f_pos);
                }
                if dpos != 0.0 {
                    let s = scale * dpos;
                    grad_e.add(pos.head, s, &g_pos.head);
                    grad_e.add(pos.tail, s, &g_pos.tail);
                    grad_p.add(pos.predicate, s, &g_pos.predicate);
                }
            }

            adam_e.next_step();
            adam_p.next_step();
            let lr = cfg.learning_rate;
            if model == ModelTag::TransE {
                grad_e.apply(&mut params.entities, &mut adam_e, lr, project_unit_ball);
            } else {
                grad_e.apply(&mut params.entities, &mut adam_e, lr, |_| {});
            }
            if model == ModelTag::TransE {
                grad_p.apply(&mut params.predicates, &mut adam_p, lr, project_unit_ball);
            } else {
                grad_p.apply(&mut params.predicates, &mut adam_p, lr, |_| {});
            }
            step += 1;

            if !params.entities.is_finite() || !params.predicates.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    batch: batch_idx,
                    what: format!("{model} seed parameters"),
                });
            }
        }
        epoch_losses.push(epoch_loss / g.num_triples() as f64);
    }

    Ok(TrainedSeed {
        embeddings: params.into_embeddings()?,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cosine;

    fn one_triple() -> KnowledgeGraph {
        KnowledgeGraph::from_named(&[("a", "r", "b")]).unwrap()
    }

    #[test]
    fn rejects_bad_configs() {
        let g = one_triple();
        let cfg = SeedTrainConfig {
            dim: 3,
            ..Default::default()
        };
        assert!(train_seed(&g, ModelTag::ComplEx, &cfg).is_err());
        assert!(train_seed(&g, ModelTag::Rescal, &SeedTrainConfig::default()).is_err());
        let cfg = SeedTrainConfig {
            dim: 1,
            ..Default::default()
        };
        assert!(train_seed(&g, ModelTag::TransE, &cfg).is_err());
    }

    #[test]
    fn every_model_produces_valid_sets() {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b"), ("b", "s", "c"), ("c", "r", "a")]).unwrap();
        for model in [
            ModelTag::TransE,
            ModelTag::DistMult,
            ModelTag::ComplEx,
            ModelTag::RotatE,
        ] {
            let cfg = SeedTrainConfig {
                dim: 8,
                epochs: 5,
                ..Default::default()
            };
            let out = train_seed(&g, model, &cfg).unwrap();
            out.embeddings.validate().unwrap();
            out.embeddings.check_aligned(&g).unwrap();
            assert_eq!(out.embeddings.model, model);
            if model == ModelTag::RotatE {
                let p = out.embeddings.predicate(0);
                assert!(crate::seed::score_rotate(p, p, p).is_ok());
            }
        }
    }

    #[test]
    fn transe_fits_single_triple() {
        let g = one_triple();
        let cfg = SeedTrainConfig {
            dim: 8,
            epochs: 200,
            ..Default::default()
        };
        let out = train_seed(&g, ModelTag::TransE, &cfg).unwrap();
        let e = &out.embeddings;
        let (a, r, b) = (e.entity(0), e.predicate(0), e.entity(1));
        let pos = scoring::transe(a, r, b, Norm::L2);
        assert!(-pos < 0.1, "‖h+p−t‖ = {}", -pos);
        // both corruptions score worse
        assert!(scoring::transe(b, r, b, Norm::L2) < pos);
        assert!(scoring::transe(a, r, a, Norm::L2) < pos);
    }

    #[test]
    fn single_triple_loss_is_monotone() {
        // margin 1 puts the optimum on the unit-ball boundary, where a fixed
        // Adam step keeps bouncing; at 0.5 the hinge reaches zero with slack
        let cfg = SeedTrainConfig {
            dim: 8,
            epochs: 200,
            margin: 0.5,
            ..Default::default()
        };
        let out = train_seed(&one_triple(), ModelTag::TransE, &cfg).unwrap();
        for w in out.epoch_losses.windows(2) {
            assert!(w[1] <= w[0], "loss went up: {w:?}");
        }
        assert_eq!(*out.epoch_losses.last().unwrap(), 0.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b"), ("b", "s", "c")]).unwrap();
        let cfg = SeedTrainConfig {
            dim: 6,
            epochs: 10,
            ..Default::default()
        };
        for model in [ModelTag::TransE, ModelTag::ComplEx] {
            let a = train_seed(&g, model, &cfg).unwrap();
            let b = train_seed(&g, model, &cfg).unwrap();
            assert_eq!(a.embeddings, b.embeddings);
        }
    }

    #[test]
    fn clusters_separate() {
        // three groups of 8 entities; each group has its own predicate and
        // every within-group pair is linked
        let mut triples = Vec::new();
        for c in 0..3 {
            for i in 0..8 {
                for j in 0..8 {
                    if i != j {
                        triples.push(Triple::new(c * 8 + i, c, c * 8 + j));
                    }
                }
            }
        }
        let g = KnowledgeGraph::from_ids(24, 3, triples).unwrap();
        let cfg = SeedTrainConfig {
            dim: 16,
            epochs: 60,
            batch_size: 32,
            ..Default::default()
        };
        let e = train_seed(&g, ModelTag::TransE, &cfg).unwrap().embeddings;
        let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0, 0.0, 0);
        for a in 0..24 {
            for b in (a + 1)..24 {
                let c = cosine(e.entity(a), e.entity(b));
                if a / 8 == b / 8 {
                    intra += c;
                    n_intra += 1;
                } else {
                    inter += c;
                    n_inter += 1;
                }
            }
        }
        let (intra, inter) = (intra / n_intra as f64, inter / n_inter as f64);
        assert!(intra > inter, "intra {intra} vs inter {inter}");
    }
}
