//! Spectral clustering of similarity graphs, the normalized cut, and the
//! cut-gap rule that picks the number of clusters.

pub mod eigen;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{fit_weighted, KmeansOptions};
use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;
use crate::streams::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use eigen::{symmetric_eigen, SymmetricEigen};

/// Where the second-order difference of the Ncut curve is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeConvention {
    /// `argmax_N Ncut(N+2) + Ncut(N) - 2 Ncut(N+1)`.
    Verbatim,
    /// `argmax_N Ncut(N+1) + Ncut(N-1) - 2 Ncut(N)`, with `Ncut(1) = 0`.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralParams {
    pub n_max: usize,
    pub restarts: usize,
    pub knee: KneeConvention,
    pub eigen_tol: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams { n_max: 10, restarts: 10, knee: KneeConvention::Centered, eigen_tol: 1e-10 }
    }
}

impl SpectralParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 2 || self.restarts == 0 {
            return Err(Error::Config(format!(
                "spectral.n_max = {} (need >= 2), spectral.restarts = {} (need >= 1)",
                self.n_max, self.restarts
            )));
        }
        if !(self.eigen_tol > 0.0) {
            return Err(Error::Config("spectral.eigen_tol must be positive".into()));
        }
        Ok(())
    }
}

/// A partition of the non-excluded states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster of each state; `None` for excluded (zero-degree) states.
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
    pub excluded: Vec<usize>,
    pub ncut: f64,
}

impl Clustering {
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, l)| **l == Some(c)).map(|(i, _)| i).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for l in self.labels.iter().flatten() {
            s[*l] += 1;
        }
        s
    }
}

/// Normalized cut: sum over clusters of boundary weight over cluster degree.
/// Unlabeled states count as outside every cluster.
pub fn ncut(lambda: &SimilarityMatrix, labels: &[Option<usize>]) -> Result<f64> {
    let n = lambda.n();
    assert_eq!(labels.len(), n, "one label per state");
    let k = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut cut = vec![0.0; k];
    let mut degree = vec![0.0; k];
    let mut present = vec![false; k];
    for i in 0..n {
        let Some(ci) = labels[i] else { continue };
        present[ci] = true;
        for (j, &w) in lambda.row(i).iter().enumerate() {
            degree[ci] += w;
            if labels[j] != Some(ci) {
                cut[ci] += w;
            }
        }
    }
    let mut total = 0.0;
    for c in 0..k {
        if !present[c] {
            continue;
        }
        if degree[c] <= 0.0 {
            return Err(Error::ZeroDegreeCluster(c));
        }
        total += cut[c] / degree[c];
    }
    Ok(total)
}

/// Relabel clusters in order of first appearance.
fn canonicalize(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&l| {
            if l >= map.len() {
                map.resize(l + 1, None);
            }
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    (out, next)
}

/// Eigendecomposition of the normalized Laplacian of a similarity graph,
/// reusable across cluster counts.
///
/// States with zero degree are excluded. States whose only similarity is
/// their own diagonal are isolated: they stay in the clustering but carry no
/// spectral information, so they embed at the origin and do not each claim a
/// null-space dimension.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    n_states: usize,
    active: Vec<usize>,
    excluded: Vec<usize>,
    /// Positions within `active` of the states entering the eigenproblem.
    linked: Vec<usize>,
    eigen: SymmetricEigen,
}

impl SpectralEmbedding {
    pub fn new(lambda: &SimilarityMatrix, tol: f64) -> SpectralEmbedding {
        let n = lambda.n();
        let degrees: Vec<f64> = (0..n).map(|i| lambda.degree(i)).collect();
        let (active, excluded): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| degrees[i] > 0.0);
        let linked: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|&(_, &i)| lambda.row(i).iter().enumerate().any(|(j, &w)| j != i && w > 0.0))
            .map(|(r, _)| r)
            .collect();
        let m = linked.len();
        let states: Vec<usize> = linked.iter().map(|&r| active[r]).collect();
        let inv_sqrt: Vec<f64> = states.iter().map(|&i| 1.0 / degrees[i].sqrt()).collect();
        let mut lap = vec![0.0; m * m];
        for (r, &i) in states.iter().enumerate() {
            for (c, &j) in states.iter().enumerate() {
                let norm = inv_sqrt[r] * lambda.get(i, j) * inv_sqrt[c];
                lap[r * m + c] = if r == c { 1.0 - norm } else { -norm };
            }
        }
        // exact symmetry for the solver
        for r in 0..m {
            for c in r + 1..m {
                let avg = 0.5 * (lap[r * m + c] + lap[c * m + r]);
                lap[r * m + c] = avg;
                lap[c * m + r] = avg;
            }
        }
        let eigen = symmetric_eigen(&lap, m, tol);
        SpectralEmbedding { n_states: n, active, excluded, linked, eigen }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    /// Active states that entered the eigenproblem.
    pub fn linked(&self) -> Vec<usize> {
        self.linked.iter().map(|&r| self.active[r]).collect()
    }

    /// Laplacian eigenvalues over the linked states, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigen(&self) -> &SymmetricEigen {
        &self.eigen
    }

    /// One row per active state built from the first `dim` eigenvectors,
    /// each scaled to unit length. Isolated states and rows that vanish stay
    /// zero. Row-major `n_active x dim`.
    pub fn rows(&self, dim: usize) -> Vec<f64> {
        let m = self.linked.len();
        let used = dim.min(m);
        let mut out = vec![0.0; self.active.len() * dim];
        for (r, &pos) in self.linked.iter().enumerate() {
            let row = &mut out[pos * dim..(pos + 1) * dim];
            for (c, x) in row.iter_mut().take(used).enumerate() {
                *x = self.eigen.vectors[r * m + c];
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            // components below this are eigensolver noise
            if norm > 1e-9 {
                row.iter_mut().for_each(|x| *x /= norm);
            } else {
                row.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        out
    }

    /// Cluster into `n` groups: k-means on the embedding rows, best of
    /// `params.restarts` by normalized cut.
    pub fn cluster(&self, lambda: &SimilarityMatrix, n: usize, seed: u64, params: &SpectralParams) -> Result<Clustering> {
        assert_eq!(lambda.n(), self.n_states, "embedding built from a different matrix");
        let m = self.active.len();
        if n < 1 || n > m {
            return Err(Error::TooManyClusters { requested: n, available: m });
        }
        let rows = self.rows(n);
        let weights = vec![1.0; m];
        let opts = KmeansOptions { max_iter: 300, rel_tol: 1e-9 };
        let mut best: Option<Clustering> = None;
        for restart in 0..params.restarts.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, restart as u64));
            let fit = fit_weighted(&rows, n, &weights, n, &mut rng, &opts)?;
            let (local, k) = canonicalize(&fit.labels);
            let mut labels = vec![None; self.n_states];
            for (r, &i) in self.active.iter().enumerate() {
                labels[i] = Some(local[r]);
            }
            let score = ncut(lambda, &labels)?;
            if best.as_ref().map_or(true, |b| score < b.ncut) {
                best = Some(Clustering { labels, n_clusters: k, excluded: self.excluded.clone(), ncut: score });
            }
        }
        Ok(best.expect("at least one restart"))
    }
}

/// Spectral clustering of `lambda` into `n` clusters.
pub fn spectral_cluster(lambda: &SimilarityMatrix, n: usize, seed: u64, params: &SpectralParams) -> Result<Clustering> {
    SpectralEmbedding::new(lambda, params.eigen_tol).cluster(lambda, n, seed, params)
}

/// Ncut as a function of the cluster count and the selected count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcutCurve {
    /// `(N, Ncut(N))` for `N = 2 ..= n_max + 2` (fewer if the graph is small).
    pub ncut: Vec<(usize, f64)>,
    /// `(N, Ncut(N+2) + Ncut(N) - 2 Ncut(N+1))`.
    pub delta: Vec<(usize, f64)>,
    /// `(N, Ncut(N+1) + Ncut(N-1) - 2 Ncut(N))`, taking `Ncut(1) = 0`.
    pub curvature: Vec<(usize, f64)>,
    pub n_star_verbatim: usize,
    pub n_star_centered: usize,
    pub convention: KneeConvention,
    pub n_star: usize,
}

impl NcutCurve {
    /// Build the curve from Ncut values at consecutive `N` starting at 2.
    pub fn from_values(values: &[f64], n_max: usize, convention: KneeConvention) -> NcutCurve {
        let ncut: Vec<(usize, f64)> = values.iter().enumerate().map(|(i, &v)| (i + 2, v)).collect();
        let at = |n: usize| -> Option<f64> {
            match n {
                1 => Some(0.0),
                _ => values.get(n.checked_sub(2)?).copied(),
            }
        };
        let delta: Vec<(usize, f64)> = (2..=n_max).filter_map(|n| Some((n, at(n + 2)? + at(n)? - 2.0 * at(n + 1)?))).collect();
        let curvature: Vec<(usize, f64)> = (2..=n_max + 1).filter_map(|n| Some((n, at(n + 1)? + at(n - 1)? - 2.0 * at(n)?))).collect();
        let argmax = |xs: &[(usize, f64)]| {
            xs.iter()
                .fold(None::<(usize, f64)>, |best, &(n, v)| match best {
                    Some((_, bv)) if v <= bv => best,
                    _ => Some((n, v)),
                })
                .map_or(2, |b| b.0)
        };
        let n_star_verbatim = argmax(&delta);
        let n_star_centered = argmax(&curvature);
        let n_star = match convention {
            KneeConvention::Verbatim => n_star_verbatim,
            KneeConvention::Centered => n_star_centered,
        };
        NcutCurve { ncut, delta, curvature, n_star_verbatim, n_star_centered, convention, n_star }
    }

    pub fn value(&self, n: usize) -> Option<f64> {
        self.ncut.iter().find(|e| e.0 == n).map(|e| e.1)
    }

    /// `N` at which `Ncut(N+1) - Ncut(N)` is largest.
    pub fn largest_increase_at(&self) -> Option<usize> {
        self.ncut
            .windows(2)
            .map(|w| (w[0].0, w[1].1 - w[0].1))
            .fold(None::<(usize, f64)>, |best, (n, d)| match best {
                Some((_, bd)) if d <= bd => best,
                _ => Some((n, d)),
            })
            .map(|b| b.0)
    }

    /// `N,ncut,delta` lines; delta is empty where undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,ncut,delta\n");
        for &(n, v) in &self.ncut {
            let d = self.delta.iter().find(|e| e.0 == n).map(|e| e.1.to_string()).unwrap_or_default();
            out.push_str(&format!("{n},{v},{d}\n"));
        }
        out
    }
}

/// Sweep the cluster count, compute Ncut for each, and pick the knee.
pub fn cut_gap(lambda: &SimilarityMatrix, seed: u64, params: &SpectralParams) -> Result<(NcutCurve, SpectralEmbedding)> {
    let emb = SpectralEmbedding::new(lambda, params.eigen_tol);
    let top = (params.n_max + 2).min(emb.active().len());
    let values: Vec<f64> = (2..=top)
        .into_par_iter()
        .map(|n| emb.cluster(lambda, n, derive_seed(seed, n as u64), params).map(|c| c.ncut))
        .collect::<Result<_>>()?;
    Ok((NcutCurve::from_values(&values, params.n_max, params.knee), emb))
}
