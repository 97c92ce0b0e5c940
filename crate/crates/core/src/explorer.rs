//! Random exploration of the gridworld and the sensorimotor triplet stream.
//!
//! The stream is never stored: it is a deterministic function of the seed and
//! the grid config, so later passes simply replay it.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Anchor, Frame, GridConfig, Pixel, WorldState, FIELD, PATCH_LEN};
use crate::streams::{stream_rng, Stream};

/// A 3x3 patch encoded as a base-3 integer, first pixel most significant.
pub type PatchCode = u16;

/// Number of distinct 3x3 patches over a 3-letter alphabet.
pub const N_CODES: usize = 19_683;

pub fn encode_patch(patch: &[Pixel; PATCH_LEN]) -> PatchCode {
    let mut code = 0u16;
    for &v in patch {
        assert!((1..=3).contains(&v), "pixel value {v} outside the alphabet 1..=3");
        code = code * 3 + (v - 1) as u16;
    }
    code
}

pub fn decode_patch(code: PatchCode) -> [Pixel; PATCH_LEN] {
    assert!((code as usize) < N_CODES, "patch code {code} out of range");
    let mut out = [0; PATCH_LEN];
    let mut c = code;
    for v in out.iter_mut().rev() {
        *v = (c % 3) as Pixel + 1;
        c /= 3;
    }
    out
}

/// Discrete motor commands: every relative sensor displacement, plus an
/// optional rotate action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotorSpace {
    /// Sensor anchors per axis.
    pub anchors_x: usize,
    pub anchors_y: usize,
    pub n_move: usize,
    pub rotate_index: Option<u16>,
    pub n_total: usize,
}

impl MotorSpace {
    pub fn new(grid: &GridConfig) -> MotorSpace {
        let anchors_x = grid.width - FIELD + 1;
        let anchors_y = grid.height - FIELD + 1;
        let n_move = (2 * anchors_x - 1) * (2 * anchors_y - 1);
        let rotate_index = grid.rotation_enabled.then_some(n_move as u16);
        MotorSpace { anchors_x, anchors_y, n_move, rotate_index, n_total: n_move + rotate_index.is_some() as usize }
    }

    pub fn motor_index(&self, from: Anchor, to: Anchor) -> u16 {
        let dx = to.x as i64 - from.x as i64;
        let dy = to.y as i64 - from.y as i64;
        self.encode(dx, dy)
    }

    pub fn encode(&self, dx: i64, dy: i64) -> u16 {
        let (rx, ry) = (self.anchors_x as i64 - 1, self.anchors_y as i64 - 1);
        assert!(dx.abs() <= rx && dy.abs() <= ry, "displacement ({dx}, {dy}) outside the motor range");
        ((dx + rx) * (2 * ry + 1) + (dy + ry)) as u16
    }

    /// Sensor displacement of a motor, `None` for the rotate action.
    pub fn displacement(&self, motor: u16) -> Option<(i64, i64)> {
        let m = motor as usize;
        if m >= self.n_move {
            return None;
        }
        let (rx, ry) = (self.anchors_x as i64 - 1, self.anchors_y as i64 - 1);
        let span_y = (2 * ry + 1) as usize;
        Some(((m / span_y) as i64 - rx, (m % span_y) as i64 - ry))
    }

    pub fn null_motor(&self) -> u16 {
        self.encode(0, 0)
    }

    pub fn n_actions(&self) -> usize {
        self.anchors_x * self.anchors_y + self.rotate_index.is_some() as usize
    }
}

/// One sensorimotor transition `(s_t, m_t, s_{t+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub code_t: PatchCode,
    pub motor: u16,
    pub code_next: PatchCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreConfig {
    pub n_step: u64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { n_step: 30_000_000 }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_step == 0 {
            return Err(Error::Config("explore.n_step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything visible to a sink after one exploration step.
pub struct StepView<'a> {
    pub triplet: Triplet,
    /// Sensor anchor at which `code_next` was read.
    pub anchor: Anchor,
    /// Composite world after the step.
    pub frame: &'a Frame,
    pub world: &'a WorldState,
}

/// Run the random exploration policy for `n_step` steps and hand every
/// triplet to `sink`.
///
/// Per step: the agent holds `s_t`, draws one of the sensor positions (or the
/// rotate action) uniformly, moves or rotates, the world takes one dynamics
/// step, and `s_{t+1}` is read at the new sensor position.
pub fn explore_stream<F>(grid: &GridConfig, n_step: u64, seed: u64, mut sink: F)
where
    F: FnMut(&StepView<'_>),
{
    let motors = MotorSpace::new(grid);
    let mut world = WorldState::new(grid, &mut stream_rng(seed, Stream::WorldInit));
    let mut dynamics = stream_rng(seed, Stream::WorldDynamics);
    let mut policy = stream_rng(seed, Stream::Policy);

    let mut frame = world.render();
    let n_positions = motors.anchors_x * motors.anchors_y;
    let n_actions = motors.n_actions();
    let mut anchor = Anchor::new(policy.gen_range(0..motors.anchors_x), policy.gen_range(0..motors.anchors_y));
    let mut code = encode_patch(&frame.patch(anchor));

    for _ in 0..n_step {
        let action = policy.gen_range(0..n_actions);
        let mut dirty = false;
        let motor = if action < n_positions {
            let to = Anchor::new(action % motors.anchors_x, action / motors.anchors_x);
            let m = motors.motor_index(anchor, to);
            anchor = to;
            m
        } else {
            world.rotate_objects();
            dirty = true;
            motors.rotate_index.expect("rotate action drawn without rotation enabled")
        };
        let events = world.step_world(&mut dynamics, grid);
        if dirty || events.changed() {
            world.render_into(&mut frame);
        }
        let next = encode_patch(&frame.patch(anchor));
        let triplet = Triplet { code_t: code, motor, code_next: next };
        sink(&StepView { triplet, anchor, frame: &frame, world: &world });
        code = next;
    }
}

const CACHE_MAGIC: &[u8; 4] = b"SMT1";

/// Serialize triplets in the debug cache layout: `SMT1`, u32 count, then
/// little-endian `(u16 code_t, u16 motor, u16 code_next)` records.
pub fn encode_cache(triplets: &[Triplet]) -> Result<Vec<u8>> {
    let count =
        u32::try_from(triplets.len()).map_err(|_| Error::Format { what: "triplet cache", detail: "more than u32::MAX triplets".into() })?;
    let mut out = Vec::with_capacity(8 + 6 * triplets.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for t in triplets {
        out.extend_from_slice(&t.code_t.to_le_bytes());
        out.extend_from_slice(&t.motor.to_le_bytes());
        out.extend_from_slice(&t.code_next.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_cache(bytes: &[u8]) -> Result<Vec<Triplet>> {
    let bad = |detail: String| Error::Format { what: "triplet cache", detail };
    if bytes.len() < 8 || &bytes[..4] != CACHE_MAGIC {
        return Err(bad("missing SMT1 header".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != count * 6 {
        return Err(bad(format!("header announces {count} triplets, body holds {} bytes", body.len())));
    }
    let word = |c: &[u8], i: usize| u16::from_le_bytes([c[2 * i], c[2 * i + 1]]);
    Ok(body.chunks_exact(6).map(|c| Triplet { code_t: word(c, 0), motor: word(c, 1), code_next: word(c, 2) }).collect())
}

pub fn write_cache(path: &Path, triplets: &[Triplet]) -> Result<()> {
    fs::write(path, encode_cache(triplets)?).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<Vec<Triplet>> {
    decode_cache(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn patch_code_examples() {
        assert_eq!(encode_patch(&[1; 9]), 0);
        assert_eq!(encode_patch(&[3; 9]), 19_682);
        assert_eq!(encode_patch(&[2, 1, 1, 1, 1, 1, 1, 1, 1]), 6561);
    }

    #[test]
    #[should_panic(expected = "alphabet")]
    fn encode_rejects_foreign_values() {
        encode_patch(&[1, 1, 1, 1, 4, 1, 1, 1, 1]);
    }

    #[test]
    fn code_space_is_bijective() {
        for c in 0..N_CODES as u16 {
            assert_eq!(encode_patch(&decode_patch(c)), c);
        }
    }

    #[test]
    fn motor_examples() {
        let m = MotorSpace::new(&GridConfig::default());
        assert_eq!((m.anchors_x, m.n_move, m.n_total), (18, 1225, 1225));
        assert_eq!(m.encode(0, 0), 612);
        assert_eq!(m.null_motor(), 612);
        assert_eq!(m.encode(-17, -17), 0);
        assert_eq!(m.motor_index(Anchor::new(17, 17), Anchor::new(0, 0)), 0);
        assert_eq!(m.rotate_index, None);
        let r = MotorSpace::new(&GridConfig { rotation_enabled: true, ..Default::default() });
        assert_eq!((r.rotate_index, r.n_total, r.n_actions()), (Some(1225), 1226, 325));
        assert_eq!(r.displacement(1225), None);
    }

    #[test]
    fn motor_encoding_is_bijective_over_all_displacements() {
        let m = MotorSpace::new(&GridConfig::default());
        let mut seen = vec![false; m.n_move];
        for dx in -17..=17 {
            for dy in -17..=17 {
                let i = m.encode(dx, dy);
                assert!(!seen[i as usize]);
                seen[i as usize] = true;
                assert_eq!(m.displacement(i), Some((dx, dy)));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn frozen_world_null_moves_repeat() {
        let grid = GridConfig { p_env: 0.0, p_obj: 0.0, ..Default::default() };
        let null = MotorSpace::new(&grid).null_motor();
        let mut nulls = 0;
        explore_stream(&grid, 100_000, 5, |v| {
            if v.triplet.motor == null {
                nulls += 1;
                assert_eq!(v.triplet.code_t, v.triplet.code_next);
            }
        });
        assert!(nulls > 200);
    }

    #[test]
    fn replay_is_identical() {
        let grid = GridConfig { rotation_enabled: true, ..Default::default() };
        let collect = |seed| {
            let mut v = Vec::new();
            explore_stream(&grid, 20_000, seed, |s| v.push(s.triplet));
            v
        };
        let a = collect(17);
        assert_eq!(a, collect(17));
        assert_ne!(a, collect(18));
        assert_eq!(encode_cache(&a).unwrap(), encode_cache(&collect(17)).unwrap());
    }

    #[test]
    fn consecutive_triplets_chain() {
        let grid = GridConfig::default();
        let mut prev: Option<Triplet> = None;
        explore_stream(&grid, 5_000, 3, |v| {
            if let Some(p) = prev {
                assert_eq!(p.code_next, v.triplet.code_t);
            }
            assert_eq!(v.triplet.code_next, encode_patch(&v.world.read_patch(v.anchor)));
            prev = Some(v.triplet);
        });
    }

    #[test]
    fn actions_are_uniform() {
        // chi-square over the 325 actions of the rotation-enabled policy
        let grid = GridConfig { rotation_enabled: true, ..Default::default() };
        let motors = MotorSpace::new(&grid);
        let n_actions = motors.n_actions();
        let mut counts = vec![0u64; n_actions];
        let n = 650_000u64;
        explore_stream(&grid, n, 9, |v| {
            let a = if Some(v.triplet.motor) == motors.rotate_index { n_actions - 1 } else { v.anchor.y * motors.anchors_x + v.anchor.x };
            counts[a] += 1;
        });
        let expected = n as f64 / n_actions as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dof = (n_actions - 1) as f64;
        assert!((chi2 - dof).abs() < 3.0 * (2.0 * dof).sqrt(), "chi2 = {chi2}, dof = {dof}");
    }

    #[test]
    fn null_motor_self_transition_bound() {
        let grid = GridConfig::default();
        let null = MotorSpace::new(&grid).null_motor();
        let (mut same, mut total) = (0u64, 0u64);
        explore_stream(&grid, 3_000_000, 1, |v| {
            if v.triplet.motor == null {
                total += 1;
                same += (v.triplet.code_t == v.triplet.code_next) as u64;
            }
        });
        let f = same as f64 / total as f64;
        let bound = 0.9f64.powi(2) * 0.95 - 0.03;
        assert!(f >= bound, "self-transition frequency {f} below {bound}");
    }

    #[test]
    fn cache_rejects_bad_input() {
        assert!(decode_cache(b"SMT2\0\0\0\0").is_err());
        let mut ok = encode_cache(&[Triplet { code_t: 1, motor: 2, code_next: 3 }]).unwrap();
        ok.pop();
        assert!(decode_cache(&ok).is_err());
    }

    #[test]
    fn cache_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.smt");
        let ts = vec![Triplet { code_t: 19_682, motor: 1224, code_next: 0 }, Triplet { code_t: 5, motor: 612, code_next: 5 }];
        write_cache(&path, &ts).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"SMT1\x02\0\0\0");
        assert_eq!(read_cache(&path).unwrap(), ts);
    }

    proptest! {
        #[test]
        fn cache_roundtrip(raw in proptest::collection::vec((0u16..19_683, 0u16..1226, 0u16..19_683), 0..200)) {
            let ts: Vec<Triplet> = raw.into_iter().map(|(a, m, b)| Triplet { code_t: a, motor: m, code_next: b }).collect();
            prop_assert_eq!(decode_cache(&encode_cache(&ts).unwrap()).unwrap(), ts);
        }
    }
}
