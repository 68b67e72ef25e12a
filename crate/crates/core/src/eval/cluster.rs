use log::warn;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once no centroid moves further than this.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 10,
            max_iterations: 300,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Matrix,
    /// Within-cluster sum of squares of the returned assignment.
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    /// Fewer distinct points than clusters.
    pub degenerate: bool,
}

fn distinct_rows(x: &Matrix) -> usize {
    let mut rows: Vec<Vec<u64>> = x
        .iter_rows()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

fn nearest(c: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, row) in c.iter_rows().enumerate() {
        let d = linalg::squared_distance(x, row);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(x: &Matrix, k: usize, r: &mut rng::Rng) -> Matrix {
    let n = x.rows();
    let mut c = Matrix::zeros(k, x.cols());
    let first = r.random_range(0..n);
    c.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = x
        .iter_rows()
        .map(|row| linalg::squared_distance(row, c.row(0)))
        .collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            r.random_range(0..n)
        };
        c.row_mut(j).copy_from_slice(x.row(pick));
        for (i, row) in x.iter_rows().enumerate() {
            d2[i] = d2[i].min(linalg::squared_distance(row, c.row(j)));
        }
    }
    c
}

#[allow(clippy::needless_range_loop)]
fn lloyd(x: &Matrix, k: usize, cfg: &KMeansConfig, r: &mut rng::Rng) -> KMeansResult {
    let (n, d) = (x.rows(), x.cols());
    let mut c = plus_plus_init(x, k, r);
    let mut assignment = vec![0usize; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut inertia = 0.0;
        for (i, row) in x.iter_rows().enumerate() {
            let (j, dist) = nearest(&c, row);
            assignment[i] = j;
            inertia += dist;
        }
        trace.push(inertia);
        if iterations == cfg.max_iterations {
            break;
        }
        iterations += 1;

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, row) in x.iter_rows().enumerate() {
            counts[assignment[i]] += 1;
            linalg::axpy(1.0, row, sums.row_mut(assignment[i]));
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                // an empty cluster takes over the point worst served by its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = linalg::squared_distance(x.row(a), c.row(assignment[a]));
                        let db = linalg::squared_distance(x.row(b), c.row(assignment[b]));
                        da.total_cmp(&db)
                    })
                    .expect("n >= k >= 1");
                sums.row_mut(j).copy_from_slice(x.row(far));
                counts[j] = 1;
            }
            let inv = 1.0 / counts[j] as f64;
            let new: Vec<f64> = sums.row(j).iter().map(|v| v * inv).collect();
            shift = shift.max(linalg::squared_distance(&new, c.row(j)).sqrt());
            c.row_mut(j).copy_from_slice(&new);
        }
        if shift < cfg.tolerance {
            // one more assignment pass against the settled centroids
            let mut inertia = 0.0;
            for (i, row) in x.iter_rows().enumerate() {
                let (j, dist) = nearest(&c, row);
                assignment[i] = j;
                inertia += dist;
            }
            trace.push(inertia);
            break;
        }
    }
    KMeansResult {
        inertia: *trace.last().expect("at least one pass"),
        assignment,
        centroids: c,
        inertia_trace: trace,
        iterations,
        degenerate: false,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia wins, ties going to the earlier restart.
pub fn kmeans(x: &Matrix, k: usize, cfg: &KMeansConfig, rng_seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if x.rows() < k {
        return Err(Error::invalid(format!("{} points cannot form {k} clusters", x.rows())));
    }
    if cfg.restarts == 0 {
        return Err(Error::invalid("k-means needs at least one restart"));
    }
    let degenerate = distinct_rows(x) < k;
    if degenerate {
        warn!("fewer distinct points than k = {k}");
    }
    let runs: Vec<KMeansResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| lloyd(x, k, cfg, &mut rng::item_stream(rng_seed, "kmeans", i as u64)))
        .collect();
    let mut best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("restarts >= 1");
    best.degenerate = degenerate;
    Ok(best)
}

/// Between-to-within dispersion ratio scaled by `(n − k)/(k − 1)`.
///
/// Returns `f64::INFINITY` when the within-cluster dispersion is zero.
pub fn calinski_harabasz(x: &Matrix, assignment: &[usize], k: usize) -> Result<f64> {
    let n = x.rows();
    if assignment.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: assignment.len(),
        });
    }
    if k < 2 {
        return Err(Error::invalid("the CH index needs k >= 2"));
    }
    if n <= k {
        return Err(Error::invalid(format!("the CH index needs more than {k} points")));
    }
    let d = x.cols();
    let mut means = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    let mut global = vec![0.0; d];
    for (row, &c) in x.iter_rows().zip(assignment) {
        if c >= k {
            return Err(Error::invalid(format!("cluster id {c} out of range for k = {k}")));
        }
        counts[c] += 1;
        linalg::axpy(1.0, row, means.row_mut(c));
        linalg::axpy(1.0, row, &mut global);
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("cluster {empty} is empty")));
    }
    global.iter_mut().for_each(|v| *v /= n as f64);
    for (j, &c) in counts.iter().enumerate() {
        means.row_mut(j).iter_mut().for_each(|v| *v /= c as f64);
    }
    let between: f64 = (0..k)
        .map(|j| counts[j] as f64 * linalg::squared_distance(means.row(j), &global))
        .sum();
    let within: f64 = x
        .iter_rows()
        .zip(assignment)
        .map(|(row, &c)| linalg::squared_distance(row, means.row(c)))
        .sum();
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between / within * (n - k) as f64 / (k - 1) as f64)
}
