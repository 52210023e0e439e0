//! Gossip matrices: who an agent contacts on an information pull.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RandomnessPlan, Stream};

/// Largest network for which conductance is found by subset enumeration.
pub const CONDUCTANCE_BRUTE_FORCE_CAP: usize = 20;

const ROW_TOLERANCE: f64 = 1e-12;
const PAIRING_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Complete,
    Ring,
    Star,
    DRegular { d: usize, seed: u64 },
    Custom,
}

/// A graph/matrix description as accepted on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    Complete,
    Ring,
    Star,
    DRegular { d: usize, seed: u64 },
    /// Rows of a CSV file, kept inline so the configuration is self-contained.
    Matrix { rows: Vec<Vec<f64>> },
}

impl GraphSpec {
    /// Parse `complete`, `ring`, `star`, `dreg:d=4:seed=7` or `file:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "complete" => return Ok(GraphSpec::Complete),
            "ring" => return Ok(GraphSpec::Ring),
            "star" => return Ok(GraphSpec::Star),
            _ => {}
        }
        if let Some(path) = spec.strip_prefix("file:") {
            let text = std::fs::read_to_string(Path::new(path))?;
            return Ok(GraphSpec::Matrix {
                rows: parse_matrix_csv(&text)?,
            });
        }
        if let Some(rest) = spec.strip_prefix("dreg:") {
            let mut d = None;
            let mut seed = 0;
            for part in rest.split(':') {
                match part.split_once('=') {
                    Some(("d", v)) => {
                        d = Some(v.parse::<usize>().map_err(|e| {
                            Error::config("graph", format!("bad degree `{v}`: {e}"))
                        })?)
                    }
                    Some(("seed", v)) => {
                        seed = v.parse::<u64>().map_err(|e| {
                            Error::config("graph", format!("bad seed `{v}`: {e}"))
                        })?
                    }
                    _ => {
                        return Err(Error::config(
                            "graph",
                            format!("unexpected `{part}` in `{spec}`"),
                        ))
                    }
                }
            }
            let d = d.ok_or_else(|| Error::config("graph", "dreg needs d=<degree>"))?;
            return Ok(GraphSpec::DRegular { d, seed });
        }
        Err(Error::config(
            "graph",
            format!("unknown graph `{spec}` (expected complete, ring, star, dreg:d=<d>:seed=<s> or file:<path>)"),
        ))
    }

    pub fn build(&self, n: usize) -> Result<GossipNetwork> {
        match self {
            GraphSpec::Complete => GossipNetwork::complete(n),
            GraphSpec::Ring => GossipNetwork::ring(n),
            GraphSpec::Star => GossipNetwork::star(n),
            GraphSpec::DRegular { d, seed } => GossipNetwork::d_regular(n, *d, *seed),
            GraphSpec::Matrix { rows } => {
                if rows.len() != n {
                    return Err(Error::config(
                        "graph",
                        format!("matrix has {} rows but there are {n} agents", rows.len()),
                    ));
                }
                GossipNetwork::from_rows(rows.clone())
            }
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Complete => write!(f, "complete"),
            GraphSpec::Ring => write!(f, "ring"),
            GraphSpec::Star => write!(f, "star"),
            GraphSpec::DRegular { d, seed } => write!(f, "dreg:d={d}:seed={seed}"),
            GraphSpec::Matrix { rows } => write!(f, "matrix[{}]", rows.len()),
        }
    }
}

/// N rows of N comma-separated probabilities.
pub fn parse_matrix_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("`{}` is not a probability: {e}", cell.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Row-stochastic gossip matrix with an optional underlying undirected graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GossipNetwork {
    rows: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
    origin: Origin,
    neighbors: Option<Vec<Vec<usize>>>,
}

impl GossipNetwork {
    fn from_graph(neighbors: Vec<Vec<usize>>, origin: Origin) -> Self {
        let n = neighbors.len();
        let rows = neighbors
            .iter()
            .map(|adj| {
                let mut row = vec![0.0; n];
                for &j in adj {
                    row[j] = 1.0 / adj.len() as f64;
                }
                row
            })
            .collect::<Vec<_>>();
        let mut net = Self::assemble(rows, origin);
        net.neighbors = Some(neighbors);
        net
    }

    fn assemble(rows: Vec<Vec<f64>>, origin: Origin) -> Self {
        let cumulative = rows
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self {
            rows,
            cumulative,
            origin,
            neighbors: None,
        }
    }

    fn require_generator_size(n: usize) -> Result<()> {
        if n < 2 {
            Err(Error::Construction(format!(
                "generated networks need at least 2 agents, got {n}"
            )))
        } else {
            Ok(())
        }
    }

    /// `P(i, j) = 1 / (N - 1)` for every `j != i`.
    pub fn complete(n: usize) -> Result<Self> {
        Self::require_generator_size(n)?;
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).collect())
            .collect();
        Ok(Self::from_graph(neighbors, Origin::Complete))
    }

    /// Cycle `0 - 1 - ... - (N-1) - 0`; for `N = 2` a single edge.
    pub fn ring(n: usize) -> Result<Self> {
        Self::require_generator_size(n)?;
        let neighbors = (0..n)
            .map(|i| {
                let mut adj = vec![(i + n - 1) % n, (i + 1) % n];
                adj.sort_unstable();
                adj.dedup();
                adj
            })
            .collect();
        Ok(Self::from_graph(neighbors, Origin::Ring))
    }

    /// Agent 0 is the hub: leaves always call it, it calls leaves uniformly.
    pub fn star(n: usize) -> Result<Self> {
        Self::require_generator_size(n)?;
        let neighbors = (0..n)
            .map(|i| if i == 0 { (1..n).collect() } else { vec![0] })
            .collect();
        Ok(Self::from_graph(neighbors, Origin::Star))
    }

    /// Uniform gossip over a random simple `d`-regular graph drawn with the
    /// pairing model, rejecting pairings with loops or repeated edges.
    pub fn d_regular(n: usize, d: usize, seed: u64) -> Result<Self> {
        Self::require_generator_size(n)?;
        if d == 0 || d >= n || (n * d) % 2 != 0 {
            return Err(Error::Construction(format!(
                "no simple {d}-regular graph on {n} vertices"
            )));
        }
        let mut stream = RandomnessPlan::new(seed).stream(0, 0, Purpose::Init);
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        for _ in 0..PAIRING_ATTEMPTS {
            stubs.shuffle(&mut stream);
            let mut edges = HashSet::with_capacity(n * d / 2);
            let simple = stubs.chunks_exact(2).all(|pair| {
                let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                a != b && edges.insert((a, b))
            });
            if simple {
                let mut neighbors = vec![Vec::with_capacity(d); n];
                for (a, b) in edges {
                    neighbors[a].push(b);
                    neighbors[b].push(a);
                }
                for adj in &mut neighbors {
                    adj.sort_unstable();
                }
                return Ok(Self::from_graph(neighbors, Origin::DRegular { d, seed }));
            }
        }
        Err(Error::Construction(format!(
            "pairing model found no simple {d}-regular graph on {n} vertices in {PAIRING_ATTEMPTS} attempts"
        )))
    }

    /// Arbitrary row-stochastic matrix. The underlying undirected graph is
    /// recorded when the off-diagonal support is symmetric.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Construction("empty gossip matrix".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Construction(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::Construction(format!("row {i} has invalid entry {p}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Construction(format!("row {i} sums to {sum}, not 1")));
            }
        }
        let symmetric = (0..n).all(|i| (0..n).all(|j| (rows[i][j] > 0.0) == (rows[j][i] > 0.0)));
        let neighbors = symmetric.then(|| {
            (0..n)
                .map(|i| (0..n).filter(|&j| j != i && rows[i][j] > 0.0).collect())
                .collect()
        });
        let mut net = Self::assemble(rows, Origin::Custom);
        net.neighbors = neighbors;
        Ok(net)
    }

    pub fn n_agents(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn neighbors(&self) -> Option<&[Vec<usize>]> {
        self.neighbors.as_deref()
    }

    /// Sample a contact for agent `i` from row `i`, consuming one draw.
    pub fn sample_target(&self, i: usize, stream: &mut Stream) -> usize {
        let u: f64 = stream.random();
        let cum = &self.cumulative[i];
        let total = *cum.last().expect("non-empty row");
        let idx = cum.partition_point(|&c| c <= u * total);
        // guard against rounding past the last positive entry
        let idx = idx.min(cum.len() - 1);
        if self.rows[i][idx] > 0.0 {
            idx
        } else {
            (0..=idx).rev().find(|&j| self.rows[i][j] > 0.0).unwrap_or(idx)
        }
    }

    /// Strong connectivity of the positive-entry digraph.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n_agents();
        let forward = |i: usize| -> Vec<usize> {
            (0..n).filter(|&j| self.rows[i][j] > 0.0).collect()
        };
        let backward = |i: usize| -> Vec<usize> {
            (0..n).filter(|&j| self.rows[j][i] > 0.0).collect()
        };
        reaches_all(n, forward) && reaches_all(n, backward)
    }

    /// Exact conductance as the reduced fraction `(cut, volume)`.
    pub fn conductance_exact(&self) -> Result<(u64, u64)> {
        let neighbors = self.neighbors.as_ref().ok_or_else(|| {
            Error::Input("conductance needs an underlying undirected graph".into())
        })?;
        let n = neighbors.len();
        if n > CONDUCTANCE_BRUTE_FORCE_CAP {
            return match self.origin {
                Origin::Complete => Ok(reduce(n as u64, 2 * (n as u64 - 1))),
                Origin::Ring if n % 2 == 0 => Ok(reduce(2, n as u64)),
                Origin::Ring => Ok(reduce(2, n as u64 - 1)),
                _ => Err(Error::UnsupportedSize {
                    n,
                    cap: CONDUCTANCE_BRUTE_FORCE_CAP,
                }),
            };
        }
        let masks: Vec<u32> = neighbors
            .iter()
            .map(|adj| adj.iter().fold(0u32, |m, &j| m | (1 << j)))
            .collect();
        let degree: Vec<u64> = neighbors.iter().map(|adj| adj.len() as u64).collect();
        let total: u64 = degree.iter().sum();
        if total == 0 {
            return Err(Error::Input("conductance of an edgeless graph".into()));
        }
        let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        let mut best: Option<(u64, u64)> = None;
        for subset in 1..full {
            let mut vol = 0u64;
            let mut cut = 0u64;
            let mut rest = subset;
            while rest != 0 {
                let u = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                vol += degree[u];
                cut += u64::from((masks[u] & !subset & full).count_ones());
            }
            if vol == 0 || 2 * vol > total {
                continue;
            }
            if best.is_none_or(|(c, v)| cut * v < c * vol) {
                best = Some((cut, vol));
            }
        }
        let (cut, vol) = best.ok_or_else(|| Error::Input("no admissible vertex subset".into()))?;
        Ok(reduce(cut, vol))
    }

    pub fn conductance(&self) -> Result<f64> {
        let (cut, vol) = self.conductance_exact()?;
        Ok(cut as f64 / vol as f64)
    }
}

fn reduce(a: u64, b: u64) -> (u64, u64) {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let g = gcd(a, b).max(1);
    (a / g, b / g)
}

fn reaches_all(n: usize, next: impl Fn(usize) -> Vec<usize>) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in next(u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
