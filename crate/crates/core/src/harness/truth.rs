//! Ground truth for scoring. Every sensed patch's provenance votes for the
//! state it was assigned to; object patches also record where inside the
//! object the sensor was, so predicted canvases can be checked pixel by pixel.
//! None of this is visible to the agent.

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, StateId};
use crate::explorer::{explore_stream, StepView};
use crate::gridworld::{GridConfig, ProtoObject, Provenance, WorldState};
use crate::predictor::Canvas;
use crate::streams::{stream_rng, Stream};

/// Certainty at which a canvas pixel counts as a confident prediction.
pub const CONFIDENT: f64 = 0.5;

/// Majority of a vote vector laid out as `[OBJECT(0) .. OBJECT(n-1), ENV, MIXED]`.
/// Ties go to the earlier entry. `None` when there are no votes.
pub fn majority_label(votes: &[u64]) -> Option<Provenance> {
    let n_obj = votes.len().checked_sub(2).expect("votes include ENV and MIXED");
    let (best, &count) = votes.iter().enumerate().fold((0, &0), |b, (i, c)| if *c > *b.1 { (i, c) } else { b });
    (count > 0).then(|| label_at(best, n_obj))
}

fn label_at(i: usize, n_obj: usize) -> Provenance {
    match i {
        i if i < n_obj => Provenance::Object(i),
        i if i == n_obj => Provenance::Env,
        _ => Provenance::Mixed,
    }
}

/// Index of a label in a vote vector.
pub fn label_index(p: Provenance, n_obj: usize) -> usize {
    match p {
        Provenance::Object(k) => k,
        Provenance::Env => n_obj,
        Provenance::Mixed => n_obj + 1,
    }
}

/// Where inside an object a state's visits most often sat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub object: usize,
    /// Clockwise quarter turns of the object stamps at the time.
    pub orientation: u8,
    /// Sensor top-left relative to the object box.
    pub lx: usize,
    pub ly: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    n_states: usize,
    n_obj: usize,
    /// Row per state: `[OBJECT(0) .. OBJECT(n_obj-1), ENV, MIXED]`.
    votes: Vec<u64>,
    side: usize,
    /// Per state, object, orientation and box offset.
    placements: Vec<u32>,
}

impl GroundTruth {
    pub fn new(n_states: usize, grid: &GridConfig) -> GroundTruth {
        let n_obj = grid.n_obj;
        let side = grid.size_bounds().1;
        GroundTruth {
            n_states,
            n_obj,
            votes: vec![0; n_states * (n_obj + 2)],
            side,
            placements: vec![0; n_states * n_obj * 4 * side * side],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_obj(&self) -> usize {
        self.n_obj
    }

    pub fn vote(&mut self, state: StateId, p: Provenance) {
        let w = self.n_obj + 2;
        self.votes[state as usize * w + label_index(p, self.n_obj)] += 1;
    }

    /// Vote with the provenance of the patch read in `view`, and record the
    /// sensor's position inside the object when it is an object patch.
    pub fn record(&mut self, state: StateId, view: &StepView<'_>) {
        let p = view.frame.provenance(view.anchor);
        self.vote(state, p);
        if let Provenance::Object(k) = p {
            let place = view.world.objects[k].placement.expect("an object patch comes from a present object");
            let (lx, ly) = (view.anchor.x - place.x, view.anchor.y - place.y);
            let o = view.world.orientation as usize;
            let side = self.side;
            let idx = (((state as usize * self.n_obj + k) * 4 + o) * side + ly) * side + lx;
            self.placements[idx] += 1;
        }
    }

    pub fn votes(&self, state: usize) -> &[u64] {
        let w = self.n_obj + 2;
        &self.votes[state * w..(state + 1) * w]
    }

    pub fn visits(&self, state: usize) -> u64 {
        self.votes(state).iter().sum()
    }

    pub fn object_visits(&self, state: usize) -> u64 {
        self.votes(state)[..self.n_obj].iter().sum()
    }

    pub fn label(&self, state: usize) -> Option<Provenance> {
        majority_label(self.votes(state))
    }

    pub fn labels(&self) -> Vec<Option<Provenance>> {
        (0..self.n_states).map(|s| self.label(s)).collect()
    }

    /// Most frequent in-object position of a state; ties go to the lowest
    /// object, orientation, row and column in that order.
    pub fn placement(&self, state: usize) -> Option<Placement> {
        let side = self.side;
        let block = self.n_obj * 4 * side * side;
        let counts = &self.placements[state * block..(state + 1) * block];
        let (i, &c) = counts.iter().enumerate().fold((0, &0), |b, (i, c)| if *c > *b.1 { (i, c) } else { b });
        if c == 0 {
            return None;
        }
        Some(Placement {
            object: i / (4 * side * side),
            orientation: ((i / (side * side)) % 4) as u8,
            ly: (i / side) % side,
            lx: i % side,
            count: c as u64,
        })
    }
}

/// Replay an exploration and collect ground truth against a fitted codebook.
pub fn label_states_ground_truth(grid: &GridConfig, n_step: u64, seed: u64, codebook: &Codebook) -> GroundTruth {
    let mut truth = GroundTruth::new(codebook.k(), grid);
    explore_stream(grid, n_step, seed, |v| truth.record(codebook.state_of(v.triplet.code_next), v));
    truth
}

/// Object stamps of a run as generated, indexed `[object][orientation]`.
pub fn object_stamps(grid: &GridConfig, seed: u64) -> Vec<[ProtoObject; 4]> {
    let world = WorldState::new(grid, &mut stream_rng(seed, Stream::WorldInit));
    world
        .objects
        .into_iter()
        .map(|o| {
            let mut turns = [o.clone(), o.clone(), o.clone(), o];
            for (n, stamp) in turns.iter_mut().enumerate() {
                for _ in 0..n {
                    stamp.rotate_stamp_cw();
                }
            }
            turns
        })
        .collect()
}

/// Confident canvas pixels checked against the object under the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub confident: usize,
    pub correct: usize,
    /// `correct / confident`; 0 when nothing is confident.
    pub fraction: f64,
}

/// Score a canvas against the object stamp at `place`. A confident pixel is
/// correct when its rounded value equals the object pixel there; confident
/// pixels off the object count as wrong.
pub fn canvas_fidelity(canvas: &Canvas, place: &Placement, stamps: &[[ProtoObject; 4]]) -> Fidelity {
    let stamp = &stamps[place.object][place.orientation as usize];
    let (mut confident, mut correct) = (0, 0);
    for ((dx, dy), px) in canvas.offsets().zip(&canvas.pixels) {
        let Some(v) = px.value else { continue };
        if px.certainty < CONFIDENT {
            continue;
        }
        confident += 1;
        let (x, y) = (place.lx as i64 + dx, place.ly as i64 + dy);
        let truth = (x >= 0 && y >= 0).then(|| stamp.local(x as usize, y as usize)).flatten();
        if truth.is_some_and(|t| v.round() == f64::from(t)) {
            correct += 1;
        }
    }
    let fraction = if confident > 0 { correct as f64 / confident as f64 } else { 0.0 };
    Fidelity { confident, correct, fraction }
}

/// Confident canvas pixels outside the reference sensor window.
pub fn confident_outside_window(canvas: &Canvas) -> usize {
    canvas
        .offsets()
        .zip(&canvas.pixels)
        .filter(|((dx, dy), p)| p.value.is_some() && p.certainty >= CONFIDENT && !Canvas::in_window(*dx, *dy))
        .count()
}
