//! One full experiment: explore, quantize, replay, count, compare, cluster,
//! and score against ground truth.

use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, CodebookFitSummary, StateId};
use crate::error::Result;
use crate::explorer::{explore_stream, MotorSpace, N_CODES};
use crate::gridworld::PATCH_LEN;
use crate::predictor::{reconstruct_canvas, Canvas};
use crate::similarity::{build_lambda_s, build_lambda_sm, SimilarityKind, SimilarityMatrix};
use crate::spectral::{cut_gap, Clustering, KneeConvention, NcutCurve};
use crate::streams::{derive_seed, stream_rng, Stream};
use crate::transitions::{TransitionCounter, TransitionTensor};

use super::config::{Scenario, ScenarioConfig};
use super::metrics::{clustering_ari, score_clusters, ClusterScore};
use super::truth::{canvas_fidelity, confident_outside_window, object_stamps, Fidelity, GroundTruth, Placement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NStar {
    pub verbatim: usize,
    pub centered: usize,
    pub convention: KneeConvention,
    pub selected: usize,
}

/// Canvas of the highest-degree state of a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub cluster: usize,
    pub state: StateId,
    pub degree: f64,
    /// Dominant in-object position of the state, if it was ever seen inside one.
    pub placement: Option<Placement>,
    pub fidelity: Option<Fidelity>,
    pub confident_outside_window: usize,
    pub canvas: Canvas,
}

/// Clustering of one similarity matrix and its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub kind: SimilarityKind,
    pub n_star: NStar,
    pub ncut: NcutCurve,
    /// `N` with the largest `Ncut(N+1) - Ncut(N)`.
    pub largest_increase_at: Option<usize>,
    pub cluster_sizes: Vec<usize>,
    pub clusters: Vec<ClusterScore>,
    pub inter_density: f64,
    pub ari: f64,
    pub clustering: Clustering,
    pub reconstructions: Vec<Reconstruction>,
    /// Row-major similarity matrix.
    pub similarity: Vec<Vec<f64>>,
}

impl Analysis {
    pub fn matrix(&self) -> SimilarityMatrix {
        SimilarityMatrix::from_rows(self.kind, &self.similarity)
    }

    /// File-name suffix for this analysis's exports.
    pub fn suffix(&self) -> &'static str {
        match self.kind {
            SimilarityKind::Sensorimotor => "",
            SimilarityKind::Sensory => "_s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSummary {
    pub n_states: usize,
    pub n_motors: usize,
    pub n_triplets: u64,
    pub n_entries: usize,
}

/// Per-state ground truth as used for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTruth {
    pub visits: u64,
    pub object_visits: u64,
    pub label: Option<String>,
}

/// Everything a run produces, deterministic in `(config, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub codebook: CodebookFitSummary,
    pub centroids: Vec<[f64; PATCH_LEN]>,
    pub tensor: TensorSummary,
    /// Empirical `P(s_{t+1} = s_t | null motor)`.
    pub null_self_transition: f64,
    pub states: Vec<StateTruth>,
    /// The first entry is the primary analysis.
    pub analyses: Vec<Analysis>,
    /// Files written next to `report.json`, relative to its directory.
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn primary(&self) -> &Analysis {
        &self.analyses[0]
    }

    pub fn analysis(&self, kind: SimilarityKind) -> Option<&Analysis> {
        self.analyses.iter().find(|a| a.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Wall-clock seconds per phase. Kept apart from the report so that the
/// report stays byte-identical between runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub pass1: f64,
    pub codebook: f64,
    pub pass2: f64,
    pub similarity: f64,
    pub spectral: f64,
    pub scoring: f64,
    pub total: f64,
}

/// Run a scenario at one seed.
pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<ExperimentReport> {
    run_scenario_timed(config, seed).map(|r| r.0)
}

pub fn run_scenario_timed(config: &ScenarioConfig, seed: u64) -> Result<(ExperimentReport, Timings)> {
    run_inner(config, seed).map_err(|e| e.in_scenario(config.name.as_str(), seed))
}

/// Similarity matrices a scenario clusters, primary first.
fn kinds(name: Scenario) -> &'static [SimilarityKind] {
    match name {
        Scenario::NoMotor => &[SimilarityKind::Sensory, SimilarityKind::Sensorimotor],
        _ => &[SimilarityKind::Sensorimotor],
    }
}

fn run_inner(config: &ScenarioConfig, seed: u64) -> Result<(ExperimentReport, Timings)> {
    config.validate()?;
    let grid = &config.grid;
    let n_step = config.explore.n_step;
    let mut timings = Timings::default();
    let start = Instant::now();
    let mut lap = Instant::now();
    let mut tick = |slot: &mut f64| {
        *slot = lap.elapsed().as_secs_f64();
        lap = Instant::now();
    };

    let mut hist = vec![0u64; N_CODES];
    let mut first = true;
    explore_stream(grid, n_step, seed, |v| {
        if first {
            hist[v.triplet.code_t as usize] += 1;
            first = false;
        }
        hist[v.triplet.code_next as usize] += 1;
    });
    tick(&mut timings.pass1);

    let (codebook, fit) = Codebook::fit(&hist, &config.codebook, seed)?;
    drop(hist);
    tick(&mut timings.codebook);

    let motors = MotorSpace::new(grid);
    let mut counter = TransitionCounter::new(codebook.k(), motors.n_total);
    let mut truth = GroundTruth::new(codebook.k(), grid);
    explore_stream(grid, n_step, seed, |v| {
        let to = codebook.state_of(v.triplet.code_next);
        counter.push(codebook.state_of(v.triplet.code_t), v.triplet.motor, to);
        truth.record(to, v);
    });
    let tensor = counter.finish();
    tick(&mut timings.pass2);

    let null_self_transition = null_self_transition(&tensor, motors.null_motor());
    let matrices: Vec<SimilarityMatrix> = kinds(config.name)
        .iter()
        .map(|k| match k {
            SimilarityKind::Sensorimotor => build_lambda_sm(&tensor, &config.similarity),
            SimilarityKind::Sensory => build_lambda_s(&tensor),
        })
        .collect();
    tick(&mut timings.similarity);

    let spectral_seed = stream_rng(seed, Stream::Spectral).next_u64();
    let mut clustered = Vec::with_capacity(matrices.len());
    for m in &matrices {
        let (curve, emb) = cut_gap(m, spectral_seed, &config.spectral)?;
        let n = curve.n_star;
        let clustering = emb.cluster(m, n, derive_seed(spectral_seed, n as u64), &config.spectral)?;
        clustered.push((curve, clustering));
    }
    tick(&mut timings.spectral);

    let stamps = object_stamps(grid, seed);
    let mut analyses = Vec::with_capacity(matrices.len());
    for (m, (curve, clustering)) in matrices.iter().zip(clustered) {
        let (clusters, inter_density) = score_clusters(m, &clustering, &truth);
        let reconstructions = (0..clustering.n_clusters)
            .map(|c| {
                let state = highest_degree(m, &clustering.members(c));
                let canvas = reconstruct_canvas(&tensor, &codebook, &motors, state as StateId, &config.similarity);
                let placement = truth.placement(state);
                Reconstruction {
                    cluster: c,
                    state: state as StateId,
                    degree: m.degree(state),
                    fidelity: placement.map(|p| canvas_fidelity(&canvas, &p, &stamps)),
                    placement,
                    confident_outside_window: confident_outside_window(&canvas),
                    canvas,
                }
            })
            .collect();
        analyses.push(Analysis {
            kind: m.kind,
            n_star: NStar {
                verbatim: curve.n_star_verbatim,
                centered: curve.n_star_centered,
                convention: curve.convention,
                selected: curve.n_star,
            },
            largest_increase_at: curve.largest_increase_at(),
            cluster_sizes: clustering.sizes(),
            clusters,
            inter_density,
            ari: clustering_ari(&clustering, &truth),
            reconstructions,
            similarity: (0..m.n()).map(|i| m.row(i).to_vec()).collect(),
            ncut: curve,
            clustering,
        });
    }
    tick(&mut timings.scoring);

    let states = (0..codebook.k())
        .map(|s| StateTruth {
            visits: truth.visits(s),
            object_visits: truth.object_visits(s),
            label: truth.label(s).map(|l| l.to_string()),
        })
        .collect();
    let mut report = ExperimentReport {
        scenario: config.name,
        seed,
        config: config.clone(),
        codebook: fit,
        centroids: codebook.centroids().to_vec(),
        tensor: TensorSummary {
            n_states: tensor.n_states(),
            n_motors: tensor.n_motors(),
            n_triplets: tensor.n_triplets(),
            n_entries: tensor.n_entries(),
        },
        null_self_transition,
        states,
        analyses,
        artifacts: Vec::new(),
    };
    report.artifacts = super::export::artifact_names(&report);
    timings.total = start.elapsed().as_secs_f64();
    Ok((report, timings))
}

/// `sum_s T(s, null, s) / sum_s T(s, null, .)`, or 0 without null moves.
pub fn null_self_transition(t: &TransitionTensor, null: u16) -> f64 {
    let (mut same, mut all) = (0u64, 0u64);
    for s in 0..t.n_states() {
        same += t.count(s as StateId, null, s as StateId);
        all += t.total(s as StateId, null);
    }
    if all == 0 {
        0.0
    } else {
        same as f64 / all as f64
    }
}

/// Member with the largest degree; ties go to the lowest index.
fn highest_degree(m: &SimilarityMatrix, members: &[usize]) -> usize {
    let mut best = members[0];
    for &s in &members[1..] {
        if m.degree(s) > m.degree(best) {
            best = s;
        }
    }
    best
}
