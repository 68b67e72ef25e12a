//! Triple classification, clusterability and correlation measurements.

mod classify;
mod cluster;
mod correlation;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{multi_predicate_triple_ids, KnowledgeGraph};
use crate::linalg::Matrix;
use crate::rng;

pub use classify::{
    accuracy, fit_predict, micro_f1, ClassifierKind, ClassifierSpec, LogRegConfig, LogRegOvr, Mlp, MlpConfig,
};
pub use cluster::{calinski_harabasz, kmeans, KMeansConfig, KMeansResult};
pub use correlation::{average_ranks, pearson, spearman};

/// Restricted evaluation refuses to run on fewer triples than this.
pub const MIN_EVAL_TRIPLES: usize = 10;

/// `(train, test)` index lists. Test sets partition `0..n` into contiguous
/// runs of a seeded permutation, sizes within one of each other.
pub fn kfold_split(n: usize, folds: usize, rng_seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    if n < folds {
        return Err(Error::invalid(format!("{n} items cannot fill {folds} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(rng_seed, "kfold"));
    Ok((0..folds)
        .map(|f| {
            let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
            let mut test = perm[lo..hi].to_vec();
            let mut train: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
            test.sort_unstable();
            train.sort_unstable();
            (train, test)
        })
        .collect())
}

/// Micro-F1 on each held-out fold.
pub fn train_classify(
    features: &Matrix,
    labels: &[usize],
    spec: &ClassifierSpec,
    folds: &[(Vec<usize>, Vec<usize>)],
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            actual: labels.len(),
        });
    }
    // folds run one after another; each classifier parallelises internally
    folds
        .iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let mut r = rng::item_stream(rng_seed, spec.kind().as_str(), f as u64);
            let pred = fit_predict(features, labels, train, test, spec, &mut r)?;
            let gold: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
            Ok(micro_f1(&pred, &gold))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Cluster,
    #[default]
    All,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "cluster" => Ok(Task::Cluster),
            "all" => Ok(Task::All),
            _ => Err(Error::invalid(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierChoice {
    Logreg,
    Mlp,
    #[default]
    Both,
}

impl FromStr for ClassifierChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ClassifierChoice::Logreg),
            "mlp" => Ok(ClassifierChoice::Mlp),
            "both" => Ok(ClassifierChoice::Both),
            _ => Err(Error::invalid(format!("unknown classifier choice {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub task: Task,
    pub classifiers: ClassifierChoice,
    pub restrict_multi_predicate: bool,
    pub folds: usize,
    pub rng_seed: u64,
    pub logreg: LogRegConfig,
    pub mlp: MlpConfig,
    pub kmeans: KMeansConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            task: Task::All,
            classifiers: ClassifierChoice::Both,
            restrict_multi_predicate: false,
            folds: 5,
            rng_seed: 0,
            logreg: LogRegConfig::default(),
            mlp: MlpConfig::default(),
            kmeans: KMeansConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn specs(&self) -> Vec<ClassifierSpec> {
        let mut v = Vec::new();
        if self.classifiers != ClassifierChoice::Mlp {
            v.push(ClassifierSpec::LogregOvr(self.logreg));
        }
        if self.classifiers != ClassifierChoice::Logreg {
            v.push(ClassifierSpec::Mlp(self.mlp));
        }
        v
    }
}

/// Describes where the evaluated embeddings came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ReportMetadata {
    /// e.g. `ptss`, `init`, `triple2vec`.
    pub method: String,
    pub dataset: String,
    pub seed_model: Option<String>,
    pub aggregation: Option<String>,
    pub dim: usize,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScores {
    pub classifier: ClassifierKind,
    pub micro_f1_per_fold: Vec<f64>,
    pub micro_f1_mean: f64,
}

mod ch_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => Repr::Tag("inf".into()).serialize(s),
            Some(x) => Repr::Num(*x).serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Tag(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Tag(t)) => Err(serde::de::Error::custom(format!("bad CH value {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classification: Vec<ClassifierScores>,
    /// `+∞` (written as `"inf"`) when the within-cluster dispersion is zero.
    #[serde(with = "ch_serde")]
    pub ch_index: Option<f64>,
    pub ch_degenerate: bool,
    pub kmeans_k: Option<usize>,
    pub kmeans_config: KMeansConfig,
    pub n_evaluated: usize,
    pub restricted_to_multi_predicate: bool,
    /// Named Pearson (and `spearman:`-prefixed rank) coefficients, filled
    /// when reports are compared.
    pub correlations: BTreeMap<String, f64>,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    pub fn scores(&self, kind: ClassifierKind) -> Option<&ClassifierScores> {
        self.classification.iter().find(|c| c.classifier == kind)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn fold_csv(&self) -> String {
        let mut s = String::from("classifier,fold,micro_f1\n");
        for c in &self.classification {
            for (f, v) in c.micro_f1_per_fold.iter().enumerate() {
                let _ = writeln!(s, "{},{f},{v}", c.classifier);
            }
        }
        s
    }
}

/// Runs the configured tasks on triple embeddings row-aligned with
/// `g.triples()`, labelled by predicate id.
pub fn evaluate(emb: &Matrix, g: &KnowledgeGraph, cfg: &EvalConfig, metadata: ReportMetadata) -> Result<EvalReport> {
    if emb.rows() != g.num_triples() {
        return Err(Error::DimensionMismatch {
            expected: g.num_triples(),
            actual: emb.rows(),
        });
    }
    let all_labels = g.predicate_labels();
    let (features, labels) = if cfg.restrict_multi_predicate {
        let ids = multi_predicate_triple_ids(g);
        if ids.len() < MIN_EVAL_TRIPLES {
            return Err(Error::invalid(format!(
                "restriction to multi-predicate triples leaves {} triples, need at least {MIN_EVAL_TRIPLES}",
                ids.len()
            )));
        }
        (
            emb.select_rows(&ids),
            ids.iter().map(|&i| all_labels[i]).collect::<Vec<_>>(),
        )
    } else {
        (emb.clone(), all_labels)
    };
    let n = features.rows();
    info!("evaluating {n} triples of width {}", features.cols());

    let mut classification = Vec::new();
    if cfg.task != Task::Cluster {
        let folds = kfold_split(n, cfg.folds, cfg.rng_seed)?;
        for spec in cfg.specs() {
            let f1 = train_classify(&features, &labels, &spec, &folds, cfg.rng_seed)?;
            let mean = f1.iter().sum::<f64>() / f1.len() as f64;
            info!("{}: micro-F1 {mean:.4}", spec.kind());
            classification.push(ClassifierScores {
                classifier: spec.kind(),
                micro_f1_per_fold: f1,
                micro_f1_mean: mean,
            });
        }
    }

    let (mut ch_index, mut ch_degenerate, mut kmeans_k) = (None, false, None);
    if cfg.task != Task::Classify {
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let k = distinct.len();
        if k < 2 {
            return Err(Error::invalid("clusterability needs at least two predicates"));
        }
        let km = kmeans(&features, k, &cfg.kmeans, cfg.rng_seed)?;
        let ch = calinski_harabasz(&features, &km.assignment, k)?;
        info!("k-means with k = {k}: CH {ch:.4}");
        ch_degenerate = km.degenerate || ch.is_infinite();
        ch_index = Some(ch);
        kmeans_k = Some(k);
    }

    Ok(EvalReport {
        classification,
        ch_index,
        ch_degenerate,
        kmeans_k,
        kmeans_config: cfg.kmeans,
        n_evaluated: n,
        restricted_to_multi_predicate: cfg.restrict_multi_predicate,
        correlations: BTreeMap::new(),
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_items_five_folds() {
        let folds = kfold_split(10, 5, 3).unwrap();
        let mut seen = [0; 10];
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            test.iter().for_each(|&i| seen[i] += 1);
            assert!(test.iter().all(|i| !train.contains(i)));
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(folds, kfold_split(10, 5, 3).unwrap());
        assert!(kfold_split(4, 5, 0).is_err());
    }

    #[test]
    fn fold_sizes_stay_balanced() {
        for (train, test) in kfold_split(93_003, 5, 0).unwrap() {
            assert!((test.len() as f64 - 18_600.6).abs() <= 1.0);
            assert_eq!(train.len() + test.len(), 93_003);
        }
    }

    #[test]
    fn report_json_round_trip_with_infinite_ch() {
        let r = EvalReport {
            classification: vec![ClassifierScores {
                classifier: ClassifierKind::Mlp,
                micro_f1_per_fold: vec![0.5, 0.25],
                micro_f1_mean: 0.375,
            }],
            ch_index: Some(f64::INFINITY),
            ch_degenerate: true,
            kmeans_k: Some(2),
            kmeans_config: KMeansConfig::default(),
            n_evaluated: 20,
            restricted_to_multi_predicate: false,
            correlations: BTreeMap::new(),
            metadata: ReportMetadata::default(),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<EvalReport>(&s).unwrap(), r);
        assert!(r.fold_csv().contains("mlp,1,0.25"));
    }
}
