//! Weak-supervision pairs: candidate sampling around each anchor triple and
//! the pairwise triple similarity score (PTSS) that labels them.
//!
//! For an anchor, up to `N` triples are drawn from each of the shared-head,
//! shared-tail and shared-predicate sets (the whole set when it is smaller
//! than `N`), plus up to `N` negatives sharing no slot with the anchor. That
//! bounds the dataset by `4N·|T|` pairs and makes the build linear in `|T|`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::linalg;
use crate::rng;
use crate::seed::{EmbeddingSet, ModelTag};

/// Rejection-sampling attempts per requested negative.
pub const NEGATIVE_ATTEMPTS_PER_N: usize = 100;

const STREAM: &str = "ptss-sample";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SharedHead,
    SharedTail,
    SharedPredicate,
    Negative,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::SharedHead => "shared-head",
            Provenance::SharedTail => "shared-tail",
            Provenance::SharedPredicate => "shared-predicate",
            Provenance::Negative => "negative",
        }
    }

    /// Whether `a` and `b` satisfy this provenance's slot relation.
    pub fn holds(self, a: Triple, b: Triple) -> bool {
        match self {
            Provenance::SharedHead => a.head == b.head,
            Provenance::SharedTail => a.tail == b.tail,
            Provenance::SharedPredicate => a.predicate == b.predicate,
            Provenance::Negative => a.head != b.head && a.tail != b.tail && a.predicate != b.predicate,
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "shared-head" => Provenance::SharedHead,
            "shared-tail" => Provenance::SharedTail,
            "shared-predicate" => Provenance::SharedPredicate,
            "negative" => Provenance::Negative,
            other => return Err(Error::invalid(format!("unknown provenance {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtssPair {
    pub triple_a: usize,
    pub triple_b: usize,
    pub score: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtssDataset {
    pub pairs: Vec<PtssPair>,
    pub n_param: usize,
    pub seed_tag: ModelTag,
    pub rng_seed: u64,
    /// Anchors whose negative budget ran out before `N` negatives were found.
    pub negative_shortfalls: usize,
}

/// Cosine similarity, clamped to `[-1, 1]`; an all-zero argument gives 0.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(linalg::cosine(u, v))
}

/// Mean of the head, predicate and tail cosine similarities.
///
/// Complex-interleaved embeddings are compared as plain real vectors.
pub fn compute_ptss(a: Triple, b: Triple, emb: &EmbeddingSet) -> f64 {
    let heads = linalg::cosine(emb.entity(a.head), emb.entity(b.head));
    let preds = linalg::cosine(emb.predicate(a.predicate), emb.predicate(b.predicate));
    let tails = linalg::cosine(emb.entity(a.tail), emb.entity(b.tail));
    (heads + preds + tails) / 3.0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    pub items: Vec<(usize, Provenance)>,
    /// Fewer than `N` negatives were found within the retry budget.
    pub negatives_short: bool,
}

fn draw_from_slot(
    postings: &[usize],
    anchor: usize,
    n: usize,
    provenance: Provenance,
    r: &mut rng::Rng,
    out: &mut Vec<(usize, Provenance)>,
) {
    let others: Vec<usize> = postings.iter().copied().filter(|&i| i != anchor).collect();
    if others.len() <= n {
        out.extend(others.into_iter().map(|i| (i, provenance)));
        return;
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(r, others.len(), n).into_vec();
    picked.sort_unstable();
    out.extend(picked.into_iter().map(|k| (others[k], provenance)));
}

/// Draws the at most `4N` candidates of one anchor triple.
pub fn sample_candidates(g: &KnowledgeGraph, anchor: usize, n: usize, r: &mut rng::Rng) -> Result<Candidates> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    if anchor >= g.num_triples() {
        return Err(Error::invalid(format!("anchor {anchor} out of range")));
    }
    let a = g.triple(anchor);
    let mut items = Vec::with_capacity(4 * n);
    draw_from_slot(g.by_head(a.head), anchor, n, Provenance::SharedHead, r, &mut items);
    draw_from_slot(g.by_tail(a.tail), anchor, n, Provenance::SharedTail, r, &mut items);
    draw_from_slot(
        g.by_predicate(a.predicate),
        anchor,
        n,
        Provenance::SharedPredicate,
        r,
        &mut items,
    );

    let mut negatives: Vec<usize> = Vec::with_capacity(n);
    let total = g.num_triples();
    for _ in 0..NEGATIVE_ATTEMPTS_PER_N * n {
        if negatives.len() == n {
            break;
        }
        let b = r.random_range(0..total);
        if Provenance::Negative.holds(a, g.triple(b)) && !negatives.contains(&b) {
            negatives.push(b);
        }
    }
    let negatives_short = negatives.len() < n;
    items.extend(negatives.into_iter().map(|b| (b, Provenance::Negative)));
    Ok(Candidates { items, negatives_short })
}

/// Samples candidates for every anchor and scores each pair.
///
/// Every anchor uses its own random stream derived from `(rng_seed,
/// anchor)`, so the result does not depend on thread scheduling.
pub fn build_dataset(g: &KnowledgeGraph, emb: &EmbeddingSet, n: usize, rng_seed: u64) -> Result<PtssDataset> {
    emb.check_aligned(g)?;
    let per_anchor: Vec<(Vec<PtssPair>, bool)> = (0..g.num_triples())
        .into_par_iter()
        .map(|anchor| {
            let mut r = rng::item_stream(rng_seed, STREAM, anchor as u64);
            let c = sample_candidates(g, anchor, n, &mut r)?;
            let a = g.triple(anchor);
            let pairs = c
                .items
                .into_iter()
                .map(|(b, provenance)| PtssPair {
                    triple_a: anchor,
                    triple_b: b,
                    score: compute_ptss(a, g.triple(b), emb),
                    provenance,
                })
                .collect();
            Ok((pairs, c.negatives_short))
        })
        .collect::<Result<_>>()?;

    let negative_shortfalls = per_anchor.iter().filter(|(_, short)| *short).count();
    if negative_shortfalls > 0 {
        log::warn!("{negative_shortfalls} anchors got fewer than {n} negatives");
    }
    Ok(PtssDataset {
        pairs: per_anchor.into_iter().flat_map(|(p, _)| p).collect(),
        n_param: n,
        seed_tag: emb.model,
        rng_seed,
        negative_shortfalls,
    })
}

impl PtssDataset {
    /// Checks every pair against the graph: distinct ends, provenance
    /// relation holds. Returns the index of the first offending pair.
    pub fn first_provenance_violation(&self, g: &KnowledgeGraph) -> Option<usize> {
        self.pairs.iter().position(|p| {
            p.triple_a == p.triple_b
                || p.triple_a >= g.num_triples()
                || p.triple_b >= g.num_triples()
                || !p.provenance.holds(g.triple(p.triple_a), g.triple(p.triple_b))
        })
    }

    /// `a<TAB>b<TAB>score<TAB>provenance` lines after `#` metadata lines.
    /// Scores carry 17 significant digits.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "# n_param={}", self.n_param).map_err(io)?;
        writeln!(w, "# seed_tag={}", self.seed_tag).map_err(io)?;
        writeln!(w, "# rng_seed={}", self.rng_seed).map_err(io)?;
        writeln!(w, "# negative_shortfalls={}", self.negative_shortfalls).map_err(io)?;
        for p in &self.pairs {
            writeln!(
                w,
                "{}\t{}\t{:.16e}\t{}",
                p.triple_a,
                p.triple_b,
                p.score,
                p.provenance.as_str()
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ds = PtssDataset {
            pairs: Vec::new(),
            n_param: 0,
            seed_tag: ModelTag::Imported,
            rng_seed: 0,
            negative_shortfalls: 0,
        };
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                message,
            };
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.trim().split_once('=') else {
                    continue;
                };
                let bad = |_| err(format!("bad value for {key}"));
                match key {
                    "n_param" => ds.n_param = value.parse().map_err(bad)?,
                    "seed_tag" => ds.seed_tag = value.parse()?,
                    "rng_seed" => ds.rng_seed = value.parse().map_err(bad)?,
                    "negative_shortfalls" => ds.negative_shortfalls = value.parse().map_err(bad)?,
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", f.len())));
            }
            ds.pairs.push(PtssPair {
                triple_a: f[0].parse().map_err(|_| err("bad triple id".into()))?,
                triple_b: f[1].parse().map_err(|_| err("bad triple id".into()))?,
                score: f[2].parse().map_err(|_| err("bad score".into()))?,
                provenance: f[3].parse()?,
            });
        }
        Ok(ds)
    }
}
