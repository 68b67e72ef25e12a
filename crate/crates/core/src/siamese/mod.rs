//! Siamese fine-tuning of triple embeddings.
//!
//! Each triple owns a tunable row in an embedding layer, initialised by
//! aggregating its head and tail seed vectors. A pair of rows goes through
//! one shared dense layer with `tanh`, the two outputs are compared by
//! cosine, and the squared error against the pair's PTSS drives updates to
//! the dense layer and to the embedding rows themselves. The tuned
//! embedding layer is the final triple representation.

mod train;

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::linalg::{self, Matrix};
use crate::rng;
use crate::seed::EmbeddingSet;

pub use train::{train, FineTuneConfig, FineTuneOutcome};

/// How head and tail vectors are combined into an initial triple vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationOp {
    /// `(hᵢ + tᵢ) / 2`
    Avg,
    /// `hᵢ · tᵢ`
    Had,
    /// `|hᵢ − tᵢ|`
    L1,
    /// `|hᵢ − tᵢ|²`
    L2,
    /// `h ‖ t`
    Ht,
}

impl AggregationOp {
    pub const ALL: [AggregationOp; 5] = [
        AggregationOp::Avg,
        AggregationOp::Had,
        AggregationOp::L1,
        AggregationOp::L2,
        AggregationOp::Ht,
    ];

    pub fn output_dim(self, d: usize) -> usize {
        if self == AggregationOp::Ht {
            2 * d
        } else {
            d
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationOp::Avg => "avg",
            AggregationOp::Had => "had",
            AggregationOp::L1 => "l1",
            AggregationOp::L2 => "l2",
            AggregationOp::Ht => "ht",
        }
    }
}

impl std::fmt::Display for AggregationOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregationOp::ALL
            .into_iter()
            .find(|op| op.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown aggregation {s:?}")))
    }
}

pub fn aggregate(h: &[f64], t: &[f64], op: AggregationOp) -> Result<Vec<f64>> {
    if h.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: t.len(),
        });
    }
    let zip = h.iter().zip(t);
    Ok(match op {
        AggregationOp::Avg => zip.map(|(a, b)| (a + b) / 2.0).collect(),
        AggregationOp::Had => zip.map(|(a, b)| a * b).collect(),
        AggregationOp::L1 => zip.map(|(a, b)| (a - b).abs()).collect(),
        AggregationOp::L2 => zip.map(|(a, b)| (a - b) * (a - b)).collect(),
        AggregationOp::Ht => h.iter().chain(t).copied().collect(),
    })
}

/// Naive `h + p + t`. Under an exact translation `h + p = t` this collapses
/// to `2t` and loses the predicate; kept for that comparison.
pub fn sum_with_predicate(h: &[f64], p: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if h.len() != p.len() || h.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: if h.len() != p.len() { p.len() } else { t.len() },
        });
    }
    Ok(h.iter().zip(p).zip(t).map(|((h, p), t)| h + p + t).collect())
}

/// One row per triple: `aggregate(entity[h], entity[t], op)`.
pub fn init_embedding_layer(g: &KnowledgeGraph, emb: &EmbeddingSet, op: AggregationOp) -> Result<Matrix> {
    emb.check_aligned(g)?;
    let width = op.output_dim(emb.dim());
    let mut m = Matrix::zeros(g.num_triples(), width);
    for (i, t) in g.triples().iter().enumerate() {
        let row = aggregate(emb.entity(t.head), emb.entity(t.tail), op)?;
        m.row_mut(i).copy_from_slice(&row);
    }
    Ok(m)
}

/// Outputs of one forward pass through both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct PairForward {
    pub out_a: Vec<f64>,
    pub out_b: Vec<f64>,
    pub similarity: f64,
}

/// Gradients of a batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `(row, ∂L/∂row)`, sorted by row, one entry per touched row.
    pub rows: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiameseModel {
    embeddings: Matrix,
    w1: Matrix,
    b1: Vec<f64>,
}

/// `(s_hat − target)²`
pub fn loss(s_hat: f64, target: f64) -> f64 {
    (s_hat - target) * (s_hat - target)
}

/// Mean of [`loss`] over `(s_hat, target)` pairs.
pub fn batch_loss(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|&(s, y)| loss(s, y)).sum::<f64>() / pairs.len() as f64
}

impl SiameseModel {
    /// Xavier-uniform `W1` (square, width of the embedding layer), zero `b1`.
    pub fn new(embeddings: Matrix, rng_seed: u64) -> Self {
        let d = embeddings.cols();
        let bound = (6.0 / (2 * d) as f64).sqrt();
        let mut r = rng::stream(rng_seed, "siamese-init");
        let w = (0..d * d).map(|_| r.random_range(-bound..bound)).collect();
        SiameseModel {
            embeddings,
            w1: Matrix::from_vec(d, d, w).expect("square"),
            b1: vec![0.0; d],
        }
    }

    pub fn with_params(embeddings: Matrix, w1: Matrix, b1: Vec<f64>) -> Result<Self> {
        let d = embeddings.cols();
        if w1.rows() != d || w1.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: if w1.rows() != d { w1.rows() } else { w1.cols() },
            });
        }
        if b1.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: b1.len(),
            });
        }
        Ok(SiameseModel { embeddings, w1, b1 })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn num_triples(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Matrix, &mut Matrix, &mut Vec<f64>) {
        (&mut self.embeddings, &mut self.w1, &mut self.b1)
    }

    /// The embedding layer, row-aligned with the triples.
    pub fn export_triple_embeddings(&self) -> Matrix {
        self.embeddings.clone()
    }

    /// `tanh(W1·e + b1)` for an arbitrary input vector.
    pub fn encode_vec(&self, e: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        self.w1.matvec(e, &mut z);
        z.iter().zip(&self.b1).map(|(z, b)| (z + b).tanh()).collect()
    }

    pub fn encode(&self, row: usize) -> Vec<f64> {
        self.encode_vec(self.embeddings.row(row))
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.num_triples() {
            return Err(Error::invalid(format!(
                "triple id {row} out of range ({} rows)",
                self.num_triples()
            )));
        }
        Ok(())
    }

    pub fn forward_pair(&self, a: usize, b: usize) -> Result<PairForward> {
        self.check_row(a)?;
        self.check_row(b)?;
        let out_a = self.encode(a);
        let out_b = if a == b { out_a.clone() } else { self.encode(b) };
        let similarity = linalg::cosine(&out_a, &out_b);
        Ok(PairForward {
            out_a,
            out_b,
            similarity,
        })
    }

    /// Mean squared error over `(a, b, target)` triples.
    pub fn loss_on(&self, batch: &[(usize, usize, f64)]) -> Result<f64> {
        let mut pairs = Vec::with_capacity(batch.len());
        for &(a, b, y) in batch {
            pairs.push((self.forward_pair(a, b)?.similarity, y));
        }
        Ok(batch_loss(&pairs))
    }

    /// Loss and analytic gradients of the mean squared error over a batch.
    pub fn gradients(&self, batch: &[(usize, usize, f64)]) -> Result<Gradients> {
        for &(a, b, _) in batch {
            self.check_row(a)?;
            self.check_row(b)?;
        }
        Ok(self.gradients_unchecked(batch))
    }

    /// Pairs are processed in fixed-size chunks in parallel and merged in
    /// chunk order, so results do not depend on the thread count.
    pub(crate) fn gradients_unchecked(&self, batch: &[(usize, usize, f64)]) -> Gradients {
        use rayon::prelude::*;
        const CHUNK: usize = 16;
        let scale = if batch.is_empty() {
            0.0
        } else {
            1.0 / batch.len() as f64
        };
        if batch.len() <= CHUNK {
            return self.gradients_serial(batch, scale);
        }
        let parts: Vec<Gradients> = batch
            .par_chunks(CHUNK)
            .map(|c| self.gradients_serial(c, scale))
            .collect();
        let mut parts = parts.into_iter();
        let mut acc = parts.next().expect("non-empty");
        let mut rows: std::collections::BTreeMap<usize, Vec<f64>> = std::mem::take(&mut acc.rows).into_iter().collect();
        for p in parts {
            acc.loss += p.loss;
            linalg::axpy(1.0, p.w1.as_slice(), acc.w1.as_mut_slice());
            linalg::axpy(1.0, &p.b1, &mut acc.b1);
            for (r, g) in p.rows {
                match rows.get_mut(&r) {
                    Some(existing) => linalg::axpy(1.0, &g, existing),
                    None => {
                        rows.insert(r, g);
                    }
                }
            }
        }
        acc.rows = rows.into_iter().collect();
        acc
    }

    fn gradients_serial(&self, batch: &[(usize, usize, f64)], scale: f64) -> Gradients {
        let d = self.dim();
        let mut g = Gradients {
            loss: 0.0,
            w1: Matrix::zeros(d, d),
            b1: vec![0.0; d],
            rows: Vec::new(),
        };
        let mut row_grads: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();

        for &(a, b, target) in batch {
            let oa = self.encode(a);
            let ob = self.encode(b);
            let na = linalg::norm2(&oa);
            let nb = linalg::norm2(&ob);
            if na == 0.0 || nb == 0.0 {
                // cosine pinned to 0, no gradient through it
                g.loss += scale * loss(0.0, target);
                continue;
            }
            let s = (linalg::dot(&oa, &ob) / (na * nb)).clamp(-1.0, 1.0);
            g.loss += scale * loss(s, target);
            let dl_ds = scale * 2.0 * (s - target);

            for (row, out, other, n_self) in [(a, &oa, &ob, na), (b, &ob, &oa, nb)] {
                // ∂s/∂o = other/(|o||other|) − s·o/|o|², then through tanh
                let delta: Vec<f64> = out
                    .iter()
                    .zip(other.iter())
                    .map(|(&o, &q)| {
                        let ds_do = q / (na * nb) - s * o / (n_self * n_self);
                        dl_ds * ds_do * (1.0 - o * o)
                    })
                    .collect();
                let e = self.embeddings.row(row);
                for (i, &di) in delta.iter().enumerate() {
                    if di != 0.0 {
                        linalg::axpy(di, e, g.w1.row_mut(i));
                    }
                }
                linalg::axpy(1.0, &delta, &mut g.b1);
                let ge = row_grads.entry(row).or_insert_with(|| vec![0.0; d]);
                self.w1.matvec_t_acc(&delta, ge);
            }
        }
        g.rows = row_grads.into_iter().collect();
        g
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings.is_finite() && self.w1.is_finite() && self.b1.iter().all(|v| v.is_finite())
    }
}

/// On-disk model: embedding layer, dense layer and the config it was
/// trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: SiameseModel,
    pub config: FineTuneConfig,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        // re-validate shapes
        SiameseModel::with_params(ck.model.embeddings.clone(), ck.model.w1.clone(), ck.model.b1.clone())?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{ModelTag, ValueKind};

    #[test]
    fn aggregation_examples() {
        assert_eq!(
            aggregate(&[2.0, 4.0], &[4.0, 0.0], AggregationOp::Avg).unwrap(),
            vec![3.0, 2.0]
        );
        let (h, t) = ([1.0, 2.0], [3.0, 4.0]);
        assert_eq!(aggregate(&h, &t, AggregationOp::Had).unwrap(), vec![3.0, 8.0]);
        assert_eq!(aggregate(&h, &t, AggregationOp::L1).unwrap(), vec![2.0, 2.0]);
        assert_eq!(aggregate(&h, &t, AggregationOp::L2).unwrap(), vec![4.0, 4.0]);
        assert_eq!(aggregate(&h, &t, AggregationOp::Ht).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(aggregate(&[1.0], &t, AggregationOp::Avg).is_err());
        for op in AggregationOp::ALL {
            assert_eq!(aggregate(&h, &t, op).unwrap().len(), op.output_dim(2));
            assert_eq!(op.as_str().parse::<AggregationOp>().unwrap(), op);
        }
    }

    fn toy() -> (KnowledgeGraph, EmbeddingSet) {
        let g = KnowledgeGraph::from_named(&[("a", "r", "b")]).unwrap();
        let e = EmbeddingSet::new(
            Matrix::from_rows(&[vec![1.0, 3.0, -1.0], vec![0.0, 1.0, 2.0]]).unwrap(),
            Matrix::from_rows(&[vec![-1.0, -2.0, 3.0]]).unwrap(),
            ValueKind::Real,
            ModelTag::TransE,
        )
        .unwrap();
        (g, e)
    }

    #[test]
    fn init_layer_is_midpoint_for_avg() {
        let (g, e) = toy();
        let m = init_embedding_layer(&g, &e, AggregationOp::Avg).unwrap();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.row(0), &[0.5, 2.0, 0.5]);
        assert_eq!(init_embedding_layer(&g, &e, AggregationOp::Ht).unwrap().cols(), 6);
    }

    #[test]
    fn naive_sum_is_twice_the_tail_under_exact_translation() {
        let (_, e) = toy();
        // h + p = t holds exactly for this toy set
        let s = sum_with_predicate(e.entity(0), e.predicate(0), e.entity(1)).unwrap();
        let twice: Vec<f64> = e.entity(1).iter().map(|v| 2.0 * v).collect();
        assert_eq!(s, twice);
    }

    #[test]
    fn identity_layer_tracks_input_cosine() {
        let emb = Matrix::from_rows(&[vec![0.004, -0.007, 0.001], vec![0.009, 0.002, -0.005]]).unwrap();
        let m = SiameseModel::with_params(emb.clone(), Matrix::identity(3), vec![0.0; 3]).unwrap();
        let f = m.forward_pair(0, 1).unwrap();
        let direct = linalg::cosine(emb.row(0), emb.row(1));
        assert!((f.similarity - direct).abs() < 1e-3);
    }

    #[test]
    fn same_row_scores_one() {
        let emb = Matrix::from_rows(&[vec![0.3, -2.0, 0.5, 1.1]]).unwrap();
        let m = SiameseModel::new(emb, 3);
        assert!((m.forward_pair(0, 0).unwrap().similarity - 1.0).abs() < 1e-12);
        assert!(m.forward_pair(0, 1).is_err());
    }

    #[test]
    fn zero_output_scores_zero() {
        let emb = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let m = SiameseModel::with_params(emb, Matrix::identity(2), vec![0.0; 2]).unwrap();
        assert_eq!(m.forward_pair(0, 1).unwrap().similarity, 0.0);
        let g = m.gradients(&[(0, 1, 0.5)]).unwrap();
        assert_eq!(g.loss, 0.25);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(0.5, 0.5), 0.0);
        assert_eq!(loss(1.0, -1.0), 4.0);
        assert_eq!(batch_loss(&[(0.0, 1.0), (1.0, 1.0)]), 0.5);
    }

    #[test]
    fn checkpoint_round_trip() {
        let emb = Matrix::from_rows(&[vec![0.1, 0.2], vec![1.0 / 3.0, -2.0e-7]]).unwrap();
        let ck = Checkpoint {
            model: SiameseModel::new(emb, 11),
            config: FineTuneConfig::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
