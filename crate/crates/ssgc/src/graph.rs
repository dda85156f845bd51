//! Weighted neighborhood field graph construction and CSR storage.
//!
//! A spectrum of `n` bins becomes a directed weighted graph: for every pair
//! of bins within index distance `K`, one edge runs from the larger value to
//! the smaller with weight `(z_i - z_j) / (i - j)`. Only that direction is
//! stored; the reverse direction is implied with negated weight, so the full
//! adjacency matrix is antisymmetric and reconstruction is exact.

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use crate::signal::Spectrum;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vector length {got} does not match node count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("graph dump is malformed at line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
}

/// Neighborhood distance configuration: either an explicit distance or a
/// fraction of the node count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WnfgConfig {
    /// Connect bins up to this index distance.
    K(usize),
    /// Connect bins up to `ceil(rate * n)` apart, `rate` in (0, 1].
    NearFieldRate(f64),
}

impl WnfgConfig {
    /// Resolve to a concrete distance for a graph of `n` nodes.
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            WnfgConfig::K(k) => k.clamp(1, n - 1),
            WnfgConfig::NearFieldRate(rate) => near_field_rate_to_k(rate, n),
        }
    }
}

/// Convert a near-field rate in (0, 1] to a neighborhood distance:
/// `max(1, ceil(rate * n))` capped at `n - 1`.
pub fn near_field_rate_to_k(rate: f64, n: usize) -> usize {
    debug_assert!(rate > 0.0 && rate <= 1.0, "rate {rate} out of (0,1]");
    debug_assert!(n >= 2);
    let k = (rate * n as f64).ceil() as usize;
    k.max(1).min(n - 1)
}

/// Directed weighted adjacency for one segment, in CSR form.
///
/// Invariants: `row_ptr` is nondecreasing with `row_ptr[n] == nnz`, column
/// indices are strictly increasing within each row, there are no self loops,
/// every stored weight is nonzero, and `|i - j| <= k` for every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub weights: Vec<f64>,
    pub label: usize,
    /// Neighborhood distance the graph was built with.
    pub k: usize,
}

/// Cost accounting for one graph build.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GraphStats {
    pub nnz: usize,
    /// Exact byte size of the three CSR arrays.
    pub bytes: usize,
    pub build_seconds: f64,
}

/// Build the neighborhood field graph of a spectrum.
///
/// For every ordered pair `(i, j)` with `1 <= |i - j| <= k` and
/// `z_i > z_j`, stores a directed edge `i -> j` with weight
/// `(z_i - z_j) / (i - j)`. Equal values produce no edge.
pub fn build_wnfg(spectrum: &Spectrum, k: usize) -> SparseGraph {
    let z = &spectrum.magnitudes;
    let n = z.len();
    assert!(n >= 2, "spectrum must have at least 2 bins");
    assert!(k >= 1 && k <= n - 1, "k={k} out of [1, {}]", n - 1);

    let mut row_ptr = Vec::with_capacity(n + 1);
    // Tight upper bound: every node connects to at most 2k neighbors and
    // each unordered pair stores one direction.
    let cap = (k * n).saturating_sub(k * (k + 1) / 2);
    let mut col_idx = Vec::with_capacity(cap);
    let mut weights = Vec::with_capacity(cap);
    row_ptr.push(0);
    for i in 0..n {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(n - 1);
        for j in lo..=hi {
            if j != i && z[i] > z[j] {
                col_idx.push(j as u32);
                weights.push((z[i] - z[j]) / (i as f64 - j as f64));
            }
        }
        row_ptr.push(col_idx.len());
    }
    SparseGraph {
        n,
        row_ptr,
        col_idx,
        weights,
        label: spectrum.label,
        k,
    }
}

/// Full-distance baseline: identical to [`build_wnfg`] with `k = n - 1`,
/// so every value-ordered pair is connected.
pub fn build_dense_baseline(spectrum: &Spectrum) -> SparseGraph {
    build_wnfg(spectrum, spectrum.magnitudes.len() - 1)
}

/// Build a graph and record its size and wall-clock cost.
pub fn build_with_stats(spectrum: &Spectrum, k: usize) -> (SparseGraph, GraphStats) {
    let start = Instant::now();
    let graph = build_wnfg(spectrum, k);
    let build_seconds = start.elapsed().as_secs_f64();
    let stats = GraphStats {
        nnz: graph.nnz(),
        bytes: graph.csr_bytes(),
        build_seconds,
    };
    (graph, stats)
}

impl SparseGraph {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Exact byte size of the row pointer, column index, and weight arrays.
    pub fn csr_bytes(&self) -> usize {
        self.row_ptr.len() * std::mem::size_of::<usize>()
            + self.col_idx.len() * std::mem::size_of::<u32>()
            + self.weights.len() * std::mem::size_of::<f64>()
    }

    /// Stored (source, target, weight) triples in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |e| (i, self.col_idx[e] as usize, self.weights[e]))
        })
    }

    /// Multiply the full antisymmetric adjacency by `v`, materializing the
    /// implied reverse edges from single-direction storage:
    /// `out[i] += w * v[j]` and `out[j] -= w * v[i]` per stored edge.
    pub fn adjacency_matvec(&self, v: &[f64]) -> Result<Vec<f64>, GraphError> {
        if v.len() != self.n {
            return Err(GraphError::LengthMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for (i, j, w) in self.edges() {
            out[i] += w * v[j];
            out[j] -= w * v[i];
        }
        Ok(out)
    }

    /// ASCII dump: header `n nnz k`, then one `i j w` triple per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.n, self.nnz(), self.k).unwrap();
        for (i, j, w) in self.edges() {
            writeln!(out, "{i} {j} {w:.17e}").unwrap();
        }
        out
    }

    /// Parse the [`dump`](Self::dump) format back into a graph.
    pub fn parse_dump(text: &str, label: usize) -> Result<SparseGraph, GraphError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(GraphError::MalformedDump {
            line: 1,
            reason: "missing header".into(),
        })?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| GraphError::MalformedDump {
                    line: 1,
                    reason: format!("bad header field {t:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if head.len() != 3 {
            return Err(GraphError::MalformedDump {
                line: 1,
                reason: "header must be `n nnz k`".into(),
            });
        }
        let (n, nnz, k) = (head[0], head[1], head[2]);
        let mut edges = Vec::with_capacity(nnz);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(GraphError::MalformedDump {
                    line: idx + 1,
                    reason: "expected `i j w`".into(),
                });
            }
            let i: usize = fields[0].parse().map_err(|_| GraphError::MalformedDump {
                line: idx + 1,
                reason: format!("bad source index {:?}", fields[0]),
            })?;
            let j: usize = fields[1].parse().map_err(|_| GraphError::MalformedDump {
                line: idx + 1,
                reason: format!("bad target index {:?}", fields[1]),
            })?;
            let w: f64 = fields[2].parse().map_err(|_| GraphError::MalformedDump {
                line: idx + 1,
                reason: format!("bad weight {:?}", fields[2]),
            })?;
            edges.push((i, j, w));
        }
        if edges.len() != nnz {
            return Err(GraphError::MalformedDump {
                line: 1,
                reason: format!("header claims {nnz} edges, found {}", edges.len()),
            });
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &edges {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseGraph {
            n,
            row_ptr,
            col_idx: edges.iter().map(|&(_, j, _)| j as u32).collect(),
            weights: edges.iter().map(|&(_, _, w)| w).collect(),
            label,
            k,
        })
    }
}
