//! Line-graph random-walk baseline.
//!
//! Triples become nodes of a line graph, adjacent when they share an
//! entity. Edges are weighted by how similar the two predicates are in
//! terms of the (head, tail) pairs they co-label. Weighted random walks over
//! that graph feed a skip-gram model whose input vectors are the triple
//! embeddings.

mod skipgram;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::linalg::{self, Matrix};
use crate::rng;

pub use skipgram::{train_skipgram, SkipGramConfig, SkipGramOutput};

/// `C[i][j]`: number of (head, tail) pairs labelled by both `p_i` and
/// `p_j`. The diagonal holds each predicate's own pair count, or zero.
pub fn cooccurrence_counts(g: &KnowledgeGraph, zero_diagonal: bool) -> Vec<Vec<u64>> {
    let np = g.num_predicates();
    let mut by_pair: std::collections::HashMap<(usize, usize), Vec<usize>> = Default::default();
    for t in g.triples() {
        by_pair.entry((t.head, t.tail)).or_default().push(t.predicate);
    }
    let mut c = vec![vec![0u64; np]; np];
    for preds in by_pair.values() {
        for &a in preds {
            for &b in preds {
                if a != b || !zero_diagonal {
                    c[a][b] += 1;
                }
            }
        }
    }
    c
}

/// `ln(1 + C[i][j])`
pub fn tf(i: usize, j: usize, c: &[Vec<u64>]) -> f64 {
    (c[i][j] as f64).ln_1p()
}

/// `ln(n_entities / |{i : C[i][j] > 0}|)`, zero for a predicate that
/// co-occurs with nothing.
pub fn itf(j: usize, n_entities: usize, c: &[Vec<u64>]) -> f64 {
    let df = c.iter().filter(|row| row[j] > 0).count();
    if df == 0 {
        return 0.0;
    }
    (n_entities as f64 / df as f64).ln()
}

/// `C_M[i][j] = tf(i, j) · itf(j)`.
pub fn build_cm(c: &[Vec<u64>], n_entities: usize) -> Result<Matrix> {
    if n_entities == 0 {
        return Err(Error::invalid("ITF needs at least one entity"));
    }
    let np = c.len();
    let itfs: Vec<f64> = (0..np).map(|j| itf(j, n_entities, c)).collect();
    let mut m = Matrix::zeros(np, np);
    for i in 0..np {
        for (j, (v, itf_j)) in m.row_mut(i).iter_mut().zip(&itfs).enumerate() {
            *v = tf(i, j, c) * itf_j;
        }
    }
    Ok(m)
}

/// Cosine similarity between rows of `C_M`, with a unit diagonal.
pub fn predicate_similarity(cm: &Matrix) -> Matrix {
    let np = cm.rows();
    let mut m = Matrix::identity(np);
    for i in 0..np {
        for j in i + 1..np {
            let s = linalg::cosine(cm.row(i), cm.row(j));
            m.row_mut(i)[j] = s;
            m.row_mut(j)[i] = s;
        }
    }
    m
}

/// Undirected, weighted, no self-loops. Adjacency is kept in compressed
/// rows with cumulative weights for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LineGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LineGraph {
    /// Builds from explicit edges `(a, b, weight)`; each unordered pair at
    /// most once.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_nodes];
        for &(a, b, w) in edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::invalid(format!("edge ({a}, {b}) outside {n_nodes} nodes")));
            }
            if a == b {
                return Err(Error::invalid("line graph edges cannot be self-loops"));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!(
                    "edge weight {w} must be finite and non-negative"
                )));
            }
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| n);
            if list.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::invalid("duplicate line graph edge"));
            }
        }
        Ok(Self::from_adjacency(adj))
    }

    fn from_adjacency(adj: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let total: usize = adj.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut cumulative = Vec::with_capacity(total);
        for list in adj {
            let mut acc = 0.0;
            for (n, w) in list {
                neighbors.push(n);
                weights.push(w);
                acc += w;
                cumulative.push(acc);
            }
            offsets.push(neighbors.len());
        }
        LineGraph {
            offsets,
            neighbors,
            weights,
            cumulative,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn neighbor_weights(&self, node: usize) -> &[f64] {
        &self.weights[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let ns = self.neighbors(a);
        ns.binary_search(&b).ok().map(|k| self.neighbor_weights(a)[k])
    }

    /// Every edge once, as `(a, b, weight)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for a in 0..self.num_nodes() {
            for (&b, &w) in self.neighbors(a).iter().zip(self.neighbor_weights(a)) {
                if a < b {
                    out.push((a, b, w));
                }
            }
        }
        out
    }

    /// Next node drawn proportionally to edge weight, or `None` at a dead
    /// end (no neighbours, or all weights zero).
    fn step(&self, node: usize, r: &mut rng::Rng) -> Option<usize> {
        let (lo, hi) = (self.offsets[node], self.offsets[node + 1]);
        if lo == hi {
            return None;
        }
        let total = self.cumulative[hi - 1];
        if total <= 0.0 {
            return None;
        }
        let u = r.random_range(0.0..total);
        let k = self.cumulative[lo..hi].partition_point(|&c| c <= u);
        Some(self.neighbors[lo + k.min(hi - lo - 1)])
    }
}

/// Nodes are triples; two triples are adjacent when they share an entity.
/// The weight is the predicate similarity clamped at zero.
pub fn build_line_graph(g: &KnowledgeGraph, similarity: &Matrix) -> Result<LineGraph> {
    let np = g.num_predicates();
    if similarity.rows() != np || similarity.cols() != np {
        return Err(Error::DimensionMismatch {
            expected: np,
            actual: similarity.rows(),
        });
    }
    let adj: Vec<Vec<(usize, f64)>> = (0..g.num_triples())
        .into_par_iter()
        .map(|i| {
            let t = g.triple(i);
            let mut ns: Vec<usize> = Vec::new();
            for e in [t.head, t.tail] {
                ns.extend_from_slice(g.by_head(e));
                ns.extend_from_slice(g.by_tail(e));
            }
            ns.sort_unstable();
            ns.dedup();
            ns.into_iter()
                .filter(|&j| j != i)
                .map(|j| (j, similarity[(t.predicate, g.triple(j).predicate)].max(0.0)))
                .collect()
        })
        .collect();
    Ok(LineGraph::from_adjacency(adj))
}

/// `walks_per_node` walks of at most `walk_length` nodes from every node.
/// Walks stop early at dead ends. Walk `k` from node `v` uses its own random
/// stream, so the corpus does not depend on thread scheduling.
pub fn random_walks(
    lg: &LineGraph,
    walks_per_node: usize,
    walk_length: usize,
    rng_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if walk_length == 0 {
        return Err(Error::invalid("walk length must be at least 1"));
    }
    let n = lg.num_nodes();
    Ok((0..n * walks_per_node)
        .into_par_iter()
        .map(|k| {
            let start = k / walks_per_node.max(1);
            let mut r = rng::item_stream(rng_seed, "walk", k as u64);
            let mut walk = Vec::with_capacity(walk_length);
            walk.push(start);
            let mut cur = start;
            while walk.len() < walk_length {
                match lg.step(cur, &mut r) {
                    Some(next) => {
                        walk.push(next);
                        cur = next;
                    }
                    None => break,
                }
            }
            walk
        })
        .collect())
}

pub fn write_corpus(path: &Path, walks: &[Vec<usize>]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for walk in walks {
        let line: Vec<String> = walk.iter().map(usize::to_string).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<Vec<usize>>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut walks = Vec::new();
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let walk = line
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: no + 1,
                    message: format!("bad triple id {tok:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        walks.push(walk);
    }
    Ok(walks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Triple2vecConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Leave `C[i][i]` at zero instead of the predicate's pair count.
    pub zero_diagonal: bool,
    pub skipgram: SkipGramConfig,
}

impl Default for Triple2vecConfig {
    fn default() -> Self {
        Triple2vecConfig {
            walks_per_node: 10,
            walk_length: 20,
            zero_diagonal: false,
            skipgram: SkipGramConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Triple2vecOutput {
    pub embeddings: Matrix,
    /// Triples that never appeared in the corpus and kept their initial vectors.
    pub untrained: Vec<usize>,
    pub epoch_losses: Vec<f64>,
    pub corpus: Vec<Vec<usize>>,
    pub line_graph_edges: usize,
}

/// Full baseline: counts, weights, line graph, walks, skip-gram.
pub fn run_triple2vec(g: &KnowledgeGraph, cfg: &Triple2vecConfig) -> Result<Triple2vecOutput> {
    let c = cooccurrence_counts(g, cfg.zero_diagonal);
    let cm = build_cm(&c, g.num_entities())?;
    let sim = predicate_similarity(&cm);
    let lg = build_line_graph(g, &sim)?;
    log::info!("line graph: {} nodes, {} edges", lg.num_nodes(), lg.num_edges());
    let corpus = random_walks(&lg, cfg.walks_per_node, cfg.walk_length, cfg.skipgram.rng_seed)?;
    let sg = train_skipgram(&corpus, g.num_triples(), &cfg.skipgram)?;
    Ok(Triple2vecOutput {
        embeddings: sg.embeddings,
        untrained: sg.untrained,
        epoch_losses: sg.epoch_losses,
        corpus,
        line_graph_edges: lg.num_edges(),
    })
}
