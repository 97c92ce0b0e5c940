//! Quantization of sensory patches into discrete states.
//!
//! Weighted k-means (k-means++ seeding, Lloyd iterations) over the histogram
//! of distinct patch codes, and an exact lookup table from every one of the
//! 3^9 codes to its nearest centroid.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{decode_patch, PatchCode, N_CODES};
use crate::gridworld::PATCH_LEN;
use crate::streams::{stream_rng, Stream};

pub type StateId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmeansOptions {
    pub max_iter: usize,
    /// Stop once the relative inertia change falls below this.
    pub rel_tol: f64,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        KmeansOptions { max_iter: 200, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub dim: usize,
    pub k: usize,
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    /// Set when fewer distinct points than requested clusters were supplied.
    pub reduced_from: Option<usize>,
}

impl KmeansFit {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(data: &[f64], dim: usize, centroids: &[f64]) -> Vec<(usize, f64)> {
    const CHUNK: usize = 1024;
    data.par_chunks(dim * CHUNK)
        .flat_map_iter(|block| block.chunks_exact(dim).map(|p| nearest(p, centroids, dim)).collect::<Vec<_>>())
        .collect()
}

fn distinct_rows(data: &[f64], dim: usize) -> usize {
    let mut rows: Vec<&[f64]> = data.chunks_exact(dim).collect();
    let cmp = |a: &&[f64], b: &&[f64]| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
    };
    rows.sort_by(cmp);
    rows.dedup_by(|a, b| cmp(&&**a, &&**b) == Ordering::Equal);
    rows.len()
}

fn sample_weighted<R: Rng + ?Sized>(rng: &mut R, w: &[f64]) -> Option<usize> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut r = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            if r < x {
                return Some(i);
            }
            r -= x;
            last = Some(i);
        }
    }
    last
}

/// k-means++ seeding on weighted points.
pub fn kmeans_pp_init<R: Rng + ?Sized>(data: &[f64], dim: usize, weights: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let uniform = vec![1.0; n];
    let base = if weights.iter().any(|&w| w > 0.0) { weights } else { &uniform[..] };
    let first = sample_weighted(rng, base).unwrap_or(0);
    let mut centroids = row(first).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    let mut score = vec![0.0; n];
    for _ in 1..k {
        for i in 0..n {
            score[i] = base[i] * d2[i];
        }
        let next = match sample_weighted(rng, &score) {
            Some(i) => i,
            // every weighted point already sits on a centroid
            None => (0..n).find(|&i| d2[i] > 0.0).unwrap_or(0),
        };
        centroids.extend_from_slice(row(next));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(row(i), row(next)));
        }
    }
    centroids
}

/// Weighted Lloyd iterations from the given initial centroids.
pub fn lloyd(data: &[f64], dim: usize, weights: &[f64], init: Vec<f64>, opts: &KmeansOptions) -> KmeansFit {
    let n = data.len() / dim;
    let k = init.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = init;
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    let mut assignment;
    loop {
        assignment = assign(data, dim, &centroids);
        repair_empty(&mut assignment, &mut centroids, data, dim, k);
        let inertia: f64 = assignment.iter().zip(weights).map(|(a, w)| a.1 * w).sum();
        trace.push(inertia);
        iterations += 1;
        let converged = inertia == 0.0 || (prev.is_finite() && (prev - inertia).abs() <= opts.rel_tol * prev);
        if converged || iterations >= opts.max_iter {
            break;
        }
        prev = inertia;

        let mut sums = vec![0.0; k * dim];
        let mut mass = vec![0.0; k];
        for i in 0..n {
            let (j, _) = assignment[i];
            let w = weights[i];
            mass[j] += w;
            for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(row(i)) {
                *s += w * x;
            }
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                for d in 0..dim {
                    centroids[j * dim + d] = sums[j * dim + d] / mass[j];
                }
            }
        }
    }
    let inertia = *trace.last().unwrap_or(&0.0);
    KmeansFit {
        dim,
        k,
        centroids,
        labels: assignment.into_iter().map(|a| a.0).collect(),
        inertia,
        inertia_trace: trace,
        iterations,
        reduced_from: None,
    }
}

/// Give every empty cluster the point currently farthest from its centroid.
fn repair_empty(assignment: &mut [(usize, f64)], centroids: &mut [f64], data: &[f64], dim: usize, k: usize) {
    let mut sizes = vec![0usize; k];
    for a in assignment.iter() {
        sizes[a.0] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let victim = assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| sizes[a.0] > 1)
            .max_by(|(i, a), (l, b)| a.1.total_cmp(&b.1).then(l.cmp(i)))
            .map(|(i, _)| i);
        let Some(i) = victim else { return };
        sizes[assignment[i].0] -= 1;
        sizes[j] = 1;
        assignment[i] = (j, 0.0);
        centroids[j * dim..(j + 1) * dim].copy_from_slice(&data[i * dim..(i + 1) * dim]);
    }
}

/// Weighted k-means: k-means++ seeding then Lloyd iterations.
///
/// `k` is reduced to the number of distinct points when fewer are supplied;
/// the reduction is reported in [`KmeansFit::reduced_from`].
pub fn fit_weighted<R: Rng + ?Sized>(
    data: &[f64],
    dim: usize,
    weights: &[f64],
    k: usize,
    rng: &mut R,
    opts: &KmeansOptions,
) -> Result<KmeansFit> {
    assert!(dim > 0 && data.len() % dim == 0, "data length not a multiple of dim");
    let n = data.len() / dim;
    assert_eq!(weights.len(), n, "one weight per point");
    if n == 0 || k == 0 {
        return Err(Error::EmptyInput);
    }
    let distinct = distinct_rows(data, dim);
    let k_eff = k.min(distinct);
    let init = kmeans_pp_init(data, dim, weights, k_eff, rng);
    let mut fit = lloyd(data, dim, weights, init, opts);
    if k_eff < k {
        fit.reduced_from = Some(k);
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookParams {
    pub k: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for CodebookParams {
    fn default() -> Self {
        CodebookParams { k: 250, max_iter: 200, rel_tol: 1e-6 }
    }
}

impl CodebookParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > StateId::MAX as usize {
            return Err(Error::Config(format!("codebook.k = {} out of range", self.k)));
        }
        if self.max_iter == 0 || !(self.rel_tol >= 0.0) {
            return Err(Error::Config("codebook.max_iter must be >= 1 and rel_tol >= 0".into()));
        }
        Ok(())
    }
}

/// Patch quantizer: the fitted centroids plus the code -> state lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<[f64; PATCH_LEN]>,
    assign_table: Vec<StateId>,
}

/// Summary of a codebook fit, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookFitSummary {
    pub k: usize,
    pub requested_k: usize,
    pub distinct_codes: usize,
    pub iterations: usize,
    pub inertia: f64,
}

impl Codebook {
    pub fn from_centroids(centroids: Vec<[f64; PATCH_LEN]>) -> Codebook {
        assert!(!centroids.is_empty() && centroids.len() <= StateId::MAX as usize);
        let assign_table = build_assign_table(&centroids);
        Codebook { centroids, assign_table }
    }

    /// Fit on a histogram of patch-code visit counts (length 3^9).
    pub fn fit(histogram: &[u64], params: &CodebookParams, seed: u64) -> Result<(Codebook, CodebookFitSummary)> {
        assert_eq!(histogram.len(), N_CODES);
        let codes: Vec<PatchCode> = (0..N_CODES as PatchCode).filter(|&c| histogram[c as usize] > 0).collect();
        let data: Vec<f64> = codes.iter().flat_map(|&c| decode_patch(c).map(f64::from)).collect();
        let weights: Vec<f64> = codes.iter().map(|&c| histogram[c as usize] as f64).collect();
        let opts = KmeansOptions { max_iter: params.max_iter, rel_tol: params.rel_tol };
        let mut rng = stream_rng(seed, Stream::Kmeans);
        let fit = fit_weighted(&data, PATCH_LEN, &weights, params.k, &mut rng, &opts)?;
        let centroids = (0..fit.k).map(|j| fit.centroid(j).try_into().expect("9-dim centroid")).collect();
        let summary = CodebookFitSummary {
            k: fit.k,
            requested_k: params.k,
            distinct_codes: codes.len(),
            iterations: fit.iterations,
            inertia: fit.inertia,
        };
        Ok((Codebook::from_centroids(centroids), summary))
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroid(&self, state: StateId) -> &[f64; PATCH_LEN] {
        &self.centroids[state as usize]
    }

    pub fn centroids(&self) -> &[[f64; PATCH_LEN]] {
        &self.centroids
    }

    #[inline]
    pub fn state_of(&self, code: PatchCode) -> StateId {
        self.assign_table[code as usize]
    }

    pub fn assign_table(&self) -> &[StateId] {
        &self.assign_table
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CodebookFile { k: self.k(), centroids: self.centroids.clone() }).expect("codebook serializes")
    }

    pub fn from_json(text: &str) -> Result<Codebook> {
        let bad = |detail: String| Error::Format { what: "codebook", detail };
        let file: CodebookFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.k != file.centroids.len() || file.k == 0 {
            return Err(bad(format!("K = {} but {} centroids", file.k, file.centroids.len())));
        }
        Ok(Codebook::from_centroids(file.centroids))
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    #[serde(rename = "K")]
    k: usize,
    centroids: Vec<[f64; PATCH_LEN]>,
}

/// Nearest centroid (ties to the lowest index) for every patch code.
pub fn build_assign_table(centroids: &[[f64; PATCH_LEN]]) -> Vec<StateId> {
    let flat: Vec<f64> = centroids.iter().flatten().copied().collect();
    (0..N_CODES as PatchCode)
        .into_par_iter()
        .map(|c| {
            let p = decode_patch(c).map(f64::from);
            nearest(&p, &flat, PATCH_LEN).0 as StateId
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Minimum inertia over every 2-partition of 1-D points.
    fn brute_force_two_means(xs: &[f64]) -> f64 {
        let n = xs.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut cost = 0.0;
            for side in [true, false] {
                let pts: Vec<f64> = (0..n).filter(|&i| (mask >> i & 1 == 1) == side).map(|i| xs[i]).collect();
                let mean = pts.iter().sum::<f64>() / pts.len() as f64;
                cost += pts.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn two_point_masses_are_recovered() {
        let xs = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        assert_eq!(brute_force_two_means(&xs), 0.0);
        let data: Vec<f64> = xs.iter().flat_map(|&x| [x, 0.0, 0.0]).collect();
        let fit = fit_weighted(&data, 3, &[1.0; 6], 2, &mut rng(1), &KmeansOptions::default()).unwrap();
        let mut cs: Vec<f64> = (0..2).map(|j| fit.centroid(j)[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![0.0, 10.0]);
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn brute_force_optimum_on_small_line() {
        let xs = [0.0, 1.0, 2.0, 7.0, 8.5, 9.0, 9.5];
        let data: Vec<f64> = xs.to_vec();
        let oracle = brute_force_two_means(&xs);
        let fit = fit_weighted(&data, 1, &[1.0; 7], 2, &mut rng(4), &KmeansOptions::default()).unwrap();
        assert!((fit.inertia - oracle).abs() < 1e-9, "{} vs {oracle}", fit.inertia);
    }

    #[test]
    fn k_equal_distinct_points_gives_zero_inertia() {
        let data = [1.0, 2.0, 3.0, 2.0, 2.0, 2.0, 3.0, 3.0, 1.0];
        let fit = fit_weighted(&data, 3, &[5.0, 1.0, 2.0], 3, &mut rng(2), &KmeansOptions::default()).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut labels = fit.labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn k_reduced_to_distinct_count() {
        let data = [1.0, 1.0, 1.0, 4.0];
        let fit = fit_weighted(&data, 1, &[1.0; 4], 3, &mut rng(3), &KmeansOptions::default()).unwrap();
        assert_eq!((fit.k, fit.reduced_from), (2, Some(3)));
    }

    #[test]
    fn empty_input_errors() {
        assert!(matches!(fit_weighted(&[], 2, &[], 2, &mut rng(0), &KmeansOptions::default()), Err(Error::EmptyInput)));
    }

    #[test]
    fn weighted_equals_raw_samples() {
        // The same multiset given raw (with duplicates) or aggregated with
        // weights must give identical Lloyd trajectories from identical seeds.
        let mut r = rng(9);
        let distinct: Vec<[f64; 2]> = (0..40).map(|_| [r.gen_range(0..5) as f64, r.gen_range(0..5) as f64]).collect();
        let counts: Vec<usize> = (0..40).map(|_| r.gen_range(1..6)).collect();
        let mut raw = Vec::new();
        for (p, &c) in distinct.iter().zip(&counts) {
            for _ in 0..c {
                raw.extend_from_slice(p);
            }
        }
        let agg: Vec<f64> = distinct.iter().flatten().copied().collect();
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let init = kmeans_pp_init(&agg, 2, &w, 4, &mut rng(10));
        let opts = KmeansOptions::default();
        let a = lloyd(&agg, 2, &w, init.clone(), &opts);
        let b = lloyd(&raw, 2, &vec![1.0; raw.len() / 2], init, &opts);
        assert!((a.inertia - b.inertia).abs() < 1e-9 * a.inertia.max(1.0));
        for (x, y) in a.centroids.iter().zip(&b.centroids) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn inertia_never_increases() {
        let mut r = rng(12);
        let data: Vec<f64> = (0..3000).map(|_| r.gen_range(1..=3) as f64).collect();
        let w: Vec<f64> = (0..1000).map(|_| r.gen_range(1..50) as f64).collect();
        let fit = fit_weighted(&data, 3, &w, 12, &mut rng(13), &KmeansOptions { max_iter: 100, rel_tol: 0.0 }).unwrap();
        for pair in fit.inertia_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{:?}", pair);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut r = rng(20);
        let data: Vec<f64> = (0..900).map(|_| r.gen::<f64>()).collect();
        let w = vec![1.0; 300];
        let a = fit_weighted(&data, 3, &w, 7, &mut rng(21), &KmeansOptions::default()).unwrap();
        let b = fit_weighted(&data, 3, &w, 7, &mut rng(21), &KmeansOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_centroid_table_is_zero() {
        let t = build_assign_table(&[[2.0; 9]]);
        assert_eq!(t.len(), N_CODES);
        assert!(t.iter().all(|&s| s == 0));
    }

    #[test]
    fn exact_centroid_wins_its_code() {
        let mut r = rng(30);
        let mut cs: Vec<[f64; 9]> = (0..20).map(|_| std::array::from_fn(|_| r.gen_range(1.0..3.0))).collect();
        let code = 12_345;
        cs[7] = decode_patch(code).map(f64::from);
        let cb = Codebook::from_centroids(cs);
        assert_eq!(cb.state_of(code), 7);
    }

    #[test]
    fn table_agrees_with_direct_search() {
        let mut r = rng(31);
        let cs: Vec<[f64; 9]> = (0..250).map(|_| std::array::from_fn(|_| r.gen_range(1.0..=3.0))).collect();
        let table = build_assign_table(&cs);
        for _ in 0..1000 {
            let code: PatchCode = r.gen_range(0..N_CODES as u16);
            let p = decode_patch(code).map(f64::from);
            let mut best = (0usize, f64::INFINITY);
            for (j, c) in cs.iter().enumerate() {
                let d: f64 = (0..9).map(|i| (p[i] - c[i]).powi(2)).sum();
                if d < best.1 {
                    best = (j, d);
                }
            }
            assert_eq!(table[code as usize] as usize, best.0);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cb = Codebook::from_centroids(vec![[1.0; 9], [3.0; 9]]);
        // all-2 patch is equidistant from both
        assert_eq!(cb.state_of(crate::explorer::encode_patch(&[2; 9])), 0);
    }

    #[test]
    fn codebook_fit_on_histogram() {
        let mut hist = vec![0u64; N_CODES];
        let mut r = rng(40);
        for _ in 0..600 {
            hist[r.gen_range(0..N_CODES)] += r.gen_range(1..100);
        }
        let params = CodebookParams { k: 25, ..Default::default() };
        let (cb, summary) = Codebook::fit(&hist, &params, 1).unwrap();
        assert_eq!(cb.k(), 25);
        assert_eq!(summary.k, 25);
        for c in cb.centroids() {
            assert!(c.iter().all(|&v| (1.0..=3.0).contains(&v)));
        }
        let again = Codebook::fit(&hist, &params, 1).unwrap().0;
        assert_eq!(cb, again);
        let json = cb.to_json();
        assert!(json.contains("\"K\": 25"));
        assert_eq!(Codebook::from_json(&json).unwrap(), cb);
    }

    #[test]
    fn codebook_json_rejects_mismatch() {
        assert!(Codebook::from_json(r#"{"K": 2, "centroids": [[1,1,1,1,1,1,1,1,1]]}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn fit_ignores_visit_order(seed in 0u64..1000, perm_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut r = rng(seed);
            let mut visits: Vec<PatchCode> = (0..2000).map(|_| r.gen_range(0..400)).collect();
            let fit = |vs: &[PatchCode]| {
                let mut hist = vec![0u64; N_CODES];
                for &c in vs {
                    hist[c as usize] += 1;
                }
                Codebook::fit(&hist, &CodebookParams { k: 10, ..Default::default() }, seed).unwrap().0
            };
            let a = fit(&visits);
            visits.shuffle(&mut rng(perm_seed));
            prop_assert_eq!(a, fit(&visits));
        }
    }
}
