use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::optim::{Adam, AdamConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    LogregOvr,
    Mlp,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::LogregOvr => "logreg-ovr",
            ClassifierKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg-ovr" | "logreg" => Ok(ClassifierKind::LogregOvr),
            "mlp" => Ok(ClassifierKind::Mlp),
            _ => Err(Error::invalid(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub iterations: usize,
    /// Z-score features with training-fold statistics first.
    pub standardize: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1.0,
            iterations: 200,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 512,
            batch_size: 256,
            epochs: 10,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassifierSpec {
    LogregOvr(LogRegConfig),
    Mlp(MlpConfig),
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::LogregOvr(_) => ClassifierKind::LogregOvr,
            ClassifierSpec::Mlp(_) => ClassifierKind::Mlp,
        }
    }
}

/// Micro-averaged F1 from pooled true/false positive and false negative
/// counts over all classes.
pub fn micro_f1(predicted: &[usize], gold: &[usize]) -> f64 {
    assert_eq!(predicted.len(), gold.len());
    let mut tp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fn_: BTreeMap<usize, usize> = BTreeMap::new();
    for (&p, &g) in predicted.iter().zip(gold) {
        if p == g {
            *tp.entry(g).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fn_.entry(g).or_default() += 1;
        }
    }
    let tp: usize = tp.values().sum();
    let fp: usize = fp.values().sum();
    let fn_: usize = fn_.values().sum();
    if tp + fp + fn_ == 0 {
        return 0.0;
    }
    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
}

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> f64 {
    assert_eq!(predicted.len(), gold.len());
    if gold.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Largest eigenvalue of `AᵀA` for `A = [X | 1]`, by power iteration.
fn gram_spectral_bound(x: &Matrix) -> f64 {
    let d = x.cols() + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..50 {
        let mut w = vec![0.0; d];
        for row in x.iter_rows() {
            let s = linalg::dot(row, &v[..d - 1]) + v[d - 1];
            linalg::axpy(s, row, &mut w[..d - 1]);
            w[d - 1] += s;
        }
        let norm = linalg::norm2(&w);
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        w.iter_mut().for_each(|x| *x /= norm);
        v = w;
    }
    // power iteration approaches from below; pad so the step stays stable
    lambda * 1.05
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Matrix) -> Self {
        let (n, d) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            linalg::axpy(1.0 / n, row, &mut mean);
        }
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((v, &x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let scale = var
            .iter()
            .map(|v| if *v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

/// One-vs-rest logistic regression. Each binary model minimises the mean
/// log-loss plus `l2 / (2n) · ‖w‖²` (bias unpenalised) by full-batch
/// gradient descent with step `1/L`, `L` bounding the loss curvature.
pub struct LogRegOvr {
    /// Row `c` holds the weights of class `c`, bias last.
    weights: Matrix,
    standardizer: Option<Standardizer>,
}

impl LogRegOvr {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, cfg: &LogRegConfig) -> Self {
        let standardizer = cfg.standardize.then(|| Standardizer::fit(x));
        let scaled;
        let x = match &standardizer {
            Some(s) => {
                scaled = s.apply(x);
                &scaled
            }
            None => x,
        };
        let (n, d) = (x.rows() as f64, x.cols());
        let l2 = cfg.l2 / n;
        let lipschitz = 0.25 * gram_spectral_bound(x) / n + l2;
        let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

        let rows: Vec<Vec<f64>> = (0..n_classes)
            .into_par_iter()
            .map(|c| {
                let mut w = vec![0.0; d + 1];
                let mut grad = vec![0.0; d + 1];
                for _ in 0..cfg.iterations {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for (row, &label) in x.iter_rows().zip(y) {
                        let z = linalg::dot(row, &w[..d]) + w[d];
                        let target = if label == c { 1.0 } else { 0.0 };
                        let err = (sigmoid(z) - target) / n;
                        linalg::axpy(err, row, &mut grad[..d]);
                        grad[d] += err;
                    }
                    linalg::axpy(l2, &w[..d], &mut grad[..d]);
                    linalg::axpy(-step, &grad, &mut w);
                }
                w
            })
            .collect();
        LogRegOvr {
            weights: Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, d + 1)),
            standardizer,
        }
    }

    /// Per-class decision values; the argmax equals the argmax of the
    /// per-class probabilities.
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        let owned;
        let x = match &self.standardizer {
            Some(s) => {
                owned = s.apply(&Matrix::from_vec(1, x.len(), x.to_vec()).expect("row"));
                owned.row(0)
            }
            None => x,
        };
        let d = x.len();
        self.weights
            .iter_rows()
            .map(|w| linalg::dot(x, &w[..d]) + w[d])
            .collect()
    }
}

/// One hidden layer of rectified units, softmax output, cross-entropy.
pub struct Mlp {
    d: usize,
    hidden: usize,
    k: usize,
    params: Vec<f64>,
}

impl Mlp {
    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.d;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.k * self.hidden;
        (b1, w2, b2)
    }

    fn forward(&self, x: &[f64], h: &mut [f64], z: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        for j in 0..self.hidden {
            let a = linalg::dot(&p[j * self.d..(j + 1) * self.d], x) + p[b1 + j];
            h[j] = a.max(0.0);
        }
        for c in 0..self.k {
            z[c] = linalg::dot(&p[w2 + c * self.hidden..w2 + (c + 1) * self.hidden], h) + p[b2 + c];
        }
    }

    fn accumulate(&self, x: &Matrix, y: &[usize], idx: &[usize], scale: f64, grad: &mut [f64]) -> f64 {
        let (b1, w2, b2) = self.offsets();
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.k];
        let mut dh = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for &i in idx {
            let xi = x.row(i);
            self.forward(xi, &mut h, &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            loss += scale * (max + sum.ln() - z[y[i]]);
            dh.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..self.k {
                let dz = scale * ((z[c] - max).exp() / sum - if c == y[i] { 1.0 } else { 0.0 });
                let wrow = w2 + c * self.hidden;
                linalg::axpy(dz, &self.params[wrow..wrow + self.hidden], &mut dh);
                linalg::axpy(dz, &h, &mut grad[wrow..wrow + self.hidden]);
                grad[b2 + c] += dz;
            }
            for j in 0..self.hidden {
                if h[j] > 0.0 {
                    linalg::axpy(dh[j], xi, &mut grad[j * self.d..(j + 1) * self.d]);
                    grad[b1 + j] += dh[j];
                }
            }
        }
        loss
    }

    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, cfg: &MlpConfig, r: &mut rng::Rng) -> Result<Self> {
        if cfg.hidden == 0 || cfg.batch_size == 0 || cfg.epochs == 0 {
            return Err(Error::invalid(
                "MLP hidden size, batch size and epochs must be positive",
            ));
        }
        let (d, hidden, k) = (x.cols(), cfg.hidden, n_classes);
        let mut params = Vec::with_capacity(hidden * d + hidden + k * hidden + k);
        let b1 = (6.0 / (d + hidden) as f64).sqrt();
        params.extend((0..hidden * d).map(|_| r.random_range(-b1..b1)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        let b2 = (6.0 / (hidden + k) as f64).sqrt();
        params.extend((0..k * hidden).map(|_| r.random_range(-b2..b2)));
        params.extend(std::iter::repeat_n(0.0, k));
        let mut net = Mlp { d, hidden, k, params };

        let mut adam = Adam::new(net.params.len(), AdamConfig::default());
        let mut order: Vec<usize> = (0..x.rows()).collect();
        const CHUNK: usize = 32;
        for _ in 0..cfg.epochs {
            order.shuffle(r);
            for batch in order.chunks(cfg.batch_size) {
                let scale = 1.0 / batch.len() as f64;
                let parts: Vec<Vec<f64>> = batch
                    .par_chunks(CHUNK)
                    .map(|c| {
                        let mut g = vec![0.0; net.params.len()];
                        net.accumulate(x, y, c, scale, &mut g);
                        g
                    })
                    .collect();
                let mut grad = vec![0.0; net.params.len()];
                for p in &parts {
                    linalg::axpy(1.0, p, &mut grad);
                }
                adam.next_step();
                adam.update(0, &mut net.params, &grad, cfg.learning_rate);
            }
        }
        if !net.params.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                step: adam.step() as usize,
                batch: 0,
                what: "MLP parameters".into(),
            });
        }
        Ok(net)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.k];
        self.forward(x, &mut h, &mut z);
        z
    }

    /// Mean cross-entropy over the given rows.
    pub fn loss(&self, x: &Matrix, y: &[usize]) -> f64 {
        let idx: Vec<usize> = (0..x.rows()).collect();
        let mut scratch = vec![0.0; self.params.len()];
        self.accumulate(x, y, &idx, 1.0 / x.rows() as f64, &mut scratch)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

type ScoreFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>;

/// Trains on `train`, predicts `test`. Labels are arbitrary ids; classes
/// missing from the training rows can never be predicted.
pub fn fit_predict(
    x: &Matrix,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    spec: &ClassifierSpec,
    r: &mut rng::Rng,
) -> Result<Vec<usize>> {
    let mut classes: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("a training fold needs at least two classes"));
    }
    let missing: std::collections::BTreeSet<usize> = test
        .iter()
        .map(|&i| labels[i])
        .filter(|l| classes.binary_search(l).is_err())
        .collect();
    if !missing.is_empty() {
        warn!(
            "{} classes are absent from the training fold and cannot be predicted",
            missing.len()
        );
    }
    let xt = x.select_rows(train);
    let yt: Vec<usize> = train
        .iter()
        .map(|&i| classes.binary_search(&labels[i]).expect("present"))
        .collect();
    let scores: ScoreFn = match spec {
        ClassifierSpec::LogregOvr(cfg) => {
            let m = LogRegOvr::fit(&xt, &yt, classes.len(), cfg);
            Box::new(move |row| m.decision(row))
        }
        ClassifierSpec::Mlp(cfg) => {
            let m = Mlp::fit(&xt, &yt, classes.len(), cfg, r)?;
            Box::new(move |row| m.logits(row))
        }
    };
    Ok(test.par_iter().map(|&i| classes[argmax(&scores(x.row(i)))]).collect())
}
