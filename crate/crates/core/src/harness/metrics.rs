//! Partition scores against ground truth and similarity-density summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gridworld::Provenance;
use crate::similarity::SimilarityMatrix;
use crate::spectral::Clustering;

use super::truth::GroundTruth;

/// A cluster is dense when its internal off-diagonal similarity mass is at
/// least this multiple of the mass crossing its boundary.
pub const DENSE_RATIO: f64 = 5.0;

/// Adjusted Rand index of two labelings of the same items.
///
/// When both labelings are trivial in the same way (every item alone, or all
/// together) the index is 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let pairs = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Per cluster: mean off-diagonal similarity inside it (0 for singletons),
/// internal off-diagonal mass, and boundary mass. Also the mean similarity
/// over all pairs in different clusters (0 if there are none).
pub struct Densities {
    pub intra_mean: Vec<f64>,
    pub intra_mass: Vec<f64>,
    pub boundary_mass: Vec<f64>,
    pub inter_mean: f64,
}

pub fn densities(lambda: &SimilarityMatrix, clustering: &Clustering) -> Densities {
    let k = clustering.n_clusters;
    let mut intra = vec![(0.0, 0u64); k];
    let mut boundary = vec![0.0; k];
    let (mut inter, mut inter_n) = (0.0, 0u64);
    let members: Vec<(usize, usize)> = clustering.labels.iter().enumerate().filter_map(|(i, l)| l.map(|c| (i, c))).collect();
    for &(i, ci) in &members {
        for j in 0..lambda.n() {
            if i == j {
                continue;
            }
            let w = lambda.get(i, j);
            match clustering.labels[j] {
                Some(cj) if cj == ci => {
                    intra[ci].0 += w;
                    intra[ci].1 += 1;
                }
                Some(_) => {
                    boundary[ci] += w;
                    inter += w;
                    inter_n += 1;
                }
                None => boundary[ci] += w,
            }
        }
    }
    Densities {
        intra_mean: intra.iter().map(|&(s, n)| if n > 0 { s / n as f64 } else { 0.0 }).collect(),
        intra_mass: intra.iter().map(|x| x.0).collect(),
        boundary_mass: boundary,
        inter_mean: if inter_n > 0 { inter / inter_n as f64 } else { 0.0 },
    }
}

pub fn is_dense(size: usize, intra_mass: f64, boundary_mass: f64) -> bool {
    size >= 2 && intra_mass > 0.0 && intra_mass >= DENSE_RATIO * boundary_mass
}

/// Ground-truth composition of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub id: usize,
    pub size: usize,
    pub visits: u64,
    /// Visit mass of the cluster's states grouped by their state label.
    pub label_mass: BTreeMap<String, u64>,
    pub majority_label: Option<String>,
    pub majority_is_object: bool,
    /// Share of visit mass whose state label is the majority label.
    pub purity: f64,
    /// Largest share held by a single `OBJECT(k)` state label.
    pub object_purity: f64,
    /// Share of the cluster's raw visits whose own patch was an object patch.
    pub object_visit_share: f64,
    /// The cluster's share of all object-patch visits in the run.
    pub object_mass_share: f64,
    /// Mean off-diagonal similarity between members.
    pub intra_density: f64,
    /// Off-diagonal similarity summed over ordered member pairs.
    pub intra_mass: f64,
    /// Similarity from members to every state outside the cluster.
    pub boundary_mass: f64,
    pub dense: bool,
}

/// Score every cluster against state labels weighted by visit counts.
pub fn score_clusters(lambda: &SimilarityMatrix, clustering: &Clustering, truth: &GroundTruth) -> (Vec<ClusterScore>, f64) {
    let d = densities(lambda, clustering);
    let all_object: u64 = (0..truth.n_states()).map(|s| truth.object_visits(s)).sum();
    let sizes = clustering.sizes();
    let scores = (0..clustering.n_clusters)
        .map(|c| {
            let mut mass: BTreeMap<Provenance, u64> = BTreeMap::new();
            let (mut visits, mut object) = (0, 0);
            for s in clustering.members(c) {
                let v = truth.visits(s);
                visits += v;
                object += truth.object_visits(s);
                if let Some(l) = truth.label(s) {
                    *mass.entry(l).or_default() += v;
                }
            }
            let share = |x: u64| if visits > 0 { x as f64 / visits as f64 } else { 0.0 };
            // BTreeMap order puts objects first, so ties go to the lowest label.
            let majority = mass.iter().fold(None::<(Provenance, u64)>, |b, (&l, &m)| match b {
                Some((_, bm)) if m <= bm => b,
                _ => Some((l, m)),
            });
            let object_purity = mass.iter().filter(|(l, _)| matches!(l, Provenance::Object(_))).map(|(_, &m)| share(m)).fold(0.0, f64::max);
            ClusterScore {
                id: c,
                size: sizes[c],
                visits,
                label_mass: mass.iter().map(|(l, m)| (l.to_string(), *m)).collect(),
                majority_label: majority.map(|m| m.0.to_string()),
                majority_is_object: matches!(majority, Some((Provenance::Object(_), _))),
                purity: majority.map_or(0.0, |m| share(m.1)),
                object_purity,
                object_visit_share: share(object),
                object_mass_share: if all_object > 0 { object as f64 / all_object as f64 } else { 0.0 },
                intra_density: d.intra_mean[c],
                intra_mass: d.intra_mass[c],
                boundary_mass: d.boundary_mass[c],
                dense: is_dense(sizes[c], d.intra_mass[c], d.boundary_mass[c]),
            }
        })
        .collect();
    (scores, d.inter_mean)
}

/// ARI between cluster ids and state labels over clustered, visited states.
pub fn clustering_ari(clustering: &Clustering, truth: &GroundTruth) -> f64 {
    let n_obj = truth.n_obj();
    let (a, b): (Vec<usize>, Vec<usize>) = clustering
        .labels
        .iter()
        .enumerate()
        .filter_map(|(s, c)| Some((c.as_ref().copied()?, super::truth::label_index(truth.label(s)?, n_obj))))
        .unzip();
    adjusted_rand_index(&a, &b)
}
