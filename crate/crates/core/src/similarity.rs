//! State-to-state similarity matrices built from the transition tensor.
//!
//! The sensorimotor similarity credits, for every sufficiently observed
//! `(state, motor)` row, its confident successor(s). The sensory similarity
//! ignores motors entirely and serves as the ablation baseline.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transitions::TransitionTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Credit only the modal successor of each admitted row, when its
    /// probability strictly exceeds `p_sim`.
    Argmax,
    /// Credit every successor whose probability is at least `p_sim`.
    SumOverE,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityParams {
    /// Rows need strictly more than this many observations.
    pub n_min: u64,
    pub p_sim: f64,
    pub mode: SimilarityMode,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams { n_min: 20, p_sim: 0.3, mode: SimilarityMode::Argmax }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_sim) {
            return Err(Error::Config(format!("similarity.p_sim = {} is not a probability", self.p_sim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimilarityKind {
    #[serde(rename = "SM")]
    Sensorimotor,
    #[serde(rename = "S")]
    Sensory,
}

/// Dense square nonnegative matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub kind: SimilarityKind,
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn zeros(kind: SimilarityKind, n: usize) -> SimilarityMatrix {
        SimilarityMatrix { kind, n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(kind: SimilarityKind, rows: &[Vec<f64>]) -> SimilarityMatrix {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        SimilarityMatrix { kind, n, data: rows.iter().flatten().copied().collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// `(M + M^T) / 2`.
    pub fn symmetrized(&self) -> SimilarityMatrix {
        let n = self.n;
        let mut out = SimilarityMatrix::zeros(self.kind, n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = 0.5 * (self.get(i, j) + self.get(j, i));
            }
        }
        out
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// K rows of K comma-separated values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(kind: SimilarityKind, text: &str) -> Result<SimilarityMatrix> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<Vec<f64>, _>>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format { what: "similarity csv", detail: e.to_string() })?;
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(Error::Format { what: "similarity csv", detail: "matrix is not square".into() });
        }
        Ok(SimilarityMatrix::from_rows(kind, &rows))
    }
}

/// The unsymmetrized sensorimotor similarity.
pub fn directed_lambda_sm(t: &TransitionTensor, params: &SimilarityParams) -> SimilarityMatrix {
    let mut m = SimilarityMatrix::zeros(SimilarityKind::Sensorimotor, t.n_states());
    for row in t.rows() {
        if row.total <= params.n_min {
            continue;
        }
        let total = row.total as f64;
        let a = row.state as usize;
        match params.mode {
            SimilarityMode::Argmax => {
                // first maximum wins, successors are sorted by state id
                let mut best = row.successors[0];
                for &e in &row.successors[1..] {
                    if e.1 > best.1 {
                        best = e;
                    }
                }
                let p_max = best.1 as f64 / total;
                if p_max > params.p_sim {
                    m.add(a, best.0 as usize, p_max);
                }
            }
            SimilarityMode::SumOverE => {
                for &(b, c) in row.successors {
                    let p = c as f64 / total;
                    if p >= params.p_sim {
                        m.add(a, b as usize, p);
                    }
                }
            }
        }
    }
    m
}

pub fn build_lambda_sm(t: &TransitionTensor, params: &SimilarityParams) -> SimilarityMatrix {
    directed_lambda_sm(t, params).symmetrized()
}

/// Motor-blind similarity: counts summed over motors, row-normalized to
/// `p(s_b | s_a)`, then symmetrized.
pub fn build_lambda_s(t: &TransitionTensor) -> SimilarityMatrix {
    let n = t.n_states();
    let mut counts = vec![0u64; n * n];
    for row in t.rows() {
        let a = row.state as usize;
        for &(b, c) in row.successors {
            counts[a * n + b as usize] += c;
        }
    }
    let mut m = SimilarityMatrix::zeros(SimilarityKind::Sensory, n);
    for a in 0..n {
        let total: u64 = counts[a * n..(a + 1) * n].iter().sum();
        if total == 0 {
            continue;
        }
        for b in 0..n {
            m.data[a * n + b] = counts[a * n + b] as f64 / total as f64;
        }
    }
    m.symmetrized()
}
