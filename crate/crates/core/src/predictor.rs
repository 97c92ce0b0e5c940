//! The transition tensor read as a predictive model: next-state queries and
//! the multi-movement reconstruction canvas around a reference state.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, StateId};
use crate::explorer::MotorSpace;
use crate::gridworld::FIELD;
use crate::similarity::SimilarityParams;
use crate::transitions::TransitionTensor;

/// Contributions at or above this probability take part in ambiguity checks.
pub const AMBIGUITY_P: f64 = 0.5;
/// Confident contributions further apart than this disagree.
pub const AMBIGUITY_GAP: f64 = 1.0;

/// `p(. | s, m)` when `(s, m)` was seen more than `n_min` times.
pub fn predict_next(t: &TransitionTensor, s: StateId, m: u16, params: &SimilarityParams) -> Option<Vec<(StateId, f64)>> {
    if t.total(s, m) > params.n_min {
        t.conditional(s, m)
    } else {
        None
    }
}

/// Modal successor and its probability; ties go to the lowest state.
pub fn modal(dist: &[(StateId, f64)]) -> Option<(StateId, f64)> {
    dist.iter().fold(None, |best: Option<(StateId, f64)>, &(b, p)| match best {
        Some((_, bp)) if p <= bp => best,
        _ => Some((b, p)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasPixel {
    /// `None` where no admitted movement predicts this pixel.
    pub value: Option<f64>,
    pub certainty: f64,
    pub ambiguous: bool,
}

impl CanvasPixel {
    pub const EMPTY: CanvasPixel = CanvasPixel { value: None, certainty: 0.0, ambiguous: false };
}

/// Predicted pixels around the sensor window of a reference state, indexed
/// by offset relative to the window's top-left cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub state: StateId,
    pub width: usize,
    pub height: usize,
    /// Canvas cell of offset `(0, 0)`.
    pub origin_x: usize,
    pub origin_y: usize,
    /// Row-major `width x height`.
    pub pixels: Vec<CanvasPixel>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    weighted: f64,
    weight: f64,
    certainty: f64,
    confident_lo: f64,
    confident_hi: f64,
    n_confident: usize,
}

impl Canvas {
    fn blank(state: StateId, motors: &MotorSpace) -> Canvas {
        let (rx, ry) = (motors.anchors_x - 1, motors.anchors_y - 1);
        let (width, height) = (2 * rx + FIELD, 2 * ry + FIELD);
        Canvas { state, width, height, origin_x: rx, origin_y: ry, pixels: vec![CanvasPixel::EMPTY; width * height] }
    }

    /// Pixel at offset `(dx, dy)` from the reference window.
    pub fn at(&self, dx: i64, dy: i64) -> Option<&CanvasPixel> {
        let x = usize::try_from(self.origin_x as i64 + dx).ok().filter(|&x| x < self.width)?;
        let y = usize::try_from(self.origin_y as i64 + dy).ok().filter(|&y| y < self.height)?;
        Some(&self.pixels[y * self.width + x])
    }

    /// Offsets `(dx, dy)` of every cell, row-major.
    pub fn offsets(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| (x as i64 - self.origin_x as i64, y as i64 - self.origin_y as i64)))
    }

    /// Whether an offset lies inside the reference sensor window.
    pub fn in_window(dx: i64, dy: i64) -> bool {
        (0..FIELD as i64).contains(&dx) && (0..FIELD as i64).contains(&dy)
    }

    pub fn n_filled(&self) -> usize {
        self.pixels.iter().filter(|p| p.value.is_some()).count()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record {
            dx: i64,
            dy: i64,
            value: Option<f64>,
            certainty: f64,
            ambiguous: bool,
        }
        #[derive(Serialize)]
        struct File {
            state: StateId,
            width: usize,
            height: usize,
            origin: [usize; 2],
            pixels: Vec<Record>,
        }
        let pixels = self
            .offsets()
            .zip(&self.pixels)
            .map(|((dx, dy), p)| Record { dx, dy, value: p.value, certainty: p.certainty, ambiguous: p.ambiguous })
            .collect();
        let file = File { state: self.state, width: self.width, height: self.height, origin: [self.origin_x, self.origin_y], pixels };
        serde_json::to_string_pretty(&file).expect("canvas serializes")
    }

    /// Binary PPM: value mapped onto a three-color ramp and dimmed by
    /// certainty; ambiguous pixels in magenta, empty ones black. Each canvas
    /// cell becomes a `scale x scale` block.
    pub fn write_ppm<W: Write>(&self, mut w: W, scale: usize) -> io::Result<()> {
        let scale = scale.max(1);
        write!(w, "P6\n{} {}\n255\n", self.width * scale, self.height * scale)?;
        let mut line = Vec::with_capacity(self.width * scale * 3);
        for y in 0..self.height {
            line.clear();
            for x in 0..self.width {
                let rgb = pixel_color(&self.pixels[y * self.width + x]);
                for _ in 0..scale {
                    line.extend_from_slice(&rgb);
                }
            }
            for _ in 0..scale {
                w.write_all(&line)?;
            }
        }
        Ok(())
    }
}

const RAMP: [[f64; 3]; 3] = [[230.0, 159.0, 0.0], [86.0, 180.0, 233.0], [0.0, 158.0, 115.0]];
const AMBIGUOUS_RGB: [u8; 3] = [255, 0, 255];

fn pixel_color(p: &CanvasPixel) -> [u8; 3] {
    let Some(v) = p.value else { return [0, 0, 0] };
    if p.ambiguous {
        return AMBIGUOUS_RGB;
    }
    let t = (v - 1.0).clamp(0.0, 2.0);
    let i = (t.floor() as usize).min(1);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let base = RAMP[i][c] * (1.0 - f) + RAMP[i + 1][c] * f;
        out[c] = (base * p.certainty.clamp(0.0, 1.0)).round() as u8;
    }
    out
}

/// Stamp the modal predicted patch of every admitted movement from `s` at
/// its displacement and blend the overlaps.
///
/// A movement is admitted when its row holds more than `n_min` samples and
/// its modal probability exceeds `p_sim`. Each pixel's value is the
/// probability-weighted mean of its contributions and its certainty the
/// largest contributing probability.
pub fn reconstruct_canvas(t: &TransitionTensor, codebook: &Codebook, motors: &MotorSpace, s: StateId, params: &SimilarityParams) -> Canvas {
    let mut canvas = Canvas::blank(s, motors);
    let mut acc = vec![Accum::default(); canvas.pixels.len()];
    for m in 0..motors.n_move as u16 {
        let Some(dist) = predict_next(t, s, m, params) else { continue };
        let Some((b, p)) = modal(&dist) else { continue };
        if p <= params.p_sim {
            continue;
        }
        let (dx, dy) = motors.displacement(m).expect("movement motor");
        let patch = codebook.centroid(b);
        for r in 0..FIELD {
            for c in 0..FIELD {
                let x = (canvas.origin_x as i64 + dx) as usize + c;
                let y = (canvas.origin_y as i64 + dy) as usize + r;
                let v = patch[r * FIELD + c];
                let a = &mut acc[y * canvas.width + x];
                a.weighted += p * v;
                a.weight += p;
                a.certainty = a.certainty.max(p);
                if p >= AMBIGUITY_P {
                    if a.n_confident == 0 {
                        a.confident_lo = v;
                        a.confident_hi = v;
                    } else {
                        a.confident_lo = a.confident_lo.min(v);
                        a.confident_hi = a.confident_hi.max(v);
                    }
                    a.n_confident += 1;
                }
            }
        }
    }
    for (px, a) in canvas.pixels.iter_mut().zip(&acc) {
        if a.weight > 0.0 {
            *px = CanvasPixel {
                value: Some(a.weighted / a.weight),
                certainty: a.certainty,
                ambiguous: a.n_confident >= 2 && a.confident_hi - a.confident_lo >= AMBIGUITY_GAP,
            };
        }
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{GridConfig, PATCH_LEN};
    use proptest::prelude::*;

    fn small_motors() -> MotorSpace {
        // 5x5 grid: 3 anchors per axis, displacements in [-2, 2]
        MotorSpace::new(&GridConfig { width: 5, height: 5, obj_size_min: 2, obj_size_max: 2, ..Default::default() })
    }

    fn flat(v: f64) -> [f64; PATCH_LEN] {
        [v; PATCH_LEN]
    }

    fn params() -> SimilarityParams {
        SimilarityParams::default()
    }

    #[test]
    fn unvisited_row_has_no_prediction() {
        let t = TransitionTensor::new(3, 25);
        assert_eq!(predict_next(&t, 0, 4, &params()), None);
    }

    #[test]
    fn single_successor_is_certain() {
        let mut t = TransitionTensor::new(3, 25);
        for _ in 0..100 {
            t.add(0, 4, 2);
        }
        assert_eq!(predict_next(&t, 0, 4, &params()), Some(vec![(2, 1.0)]));
    }

    #[test]
    fn n_min_is_strict() {
        let mut t = TransitionTensor::new(3, 25);
        for _ in 0..20 {
            t.add(0, 4, 2);
        }
        assert_eq!(predict_next(&t, 0, 4, &params()), None);
        t.add(0, 4, 1);
        assert!(predict_next(&t, 0, 4, &params()).is_some());
    }

    #[test]
    fn modal_ties_go_low() {
        assert_eq!(modal(&[(3, 0.5), (1, 0.5)]), Some((3, 0.5)));
        assert_eq!(modal(&[(1, 0.5), (3, 0.5)]), Some((1, 0.5)));
        assert_eq!(modal(&[]), None);
    }

    #[test]
    fn canvas_extent_covers_motor_range() {
        let motors = MotorSpace::new(&GridConfig::default());
        let cb = Codebook::from_centroids(vec![flat(1.0)]);
        let canvas = reconstruct_canvas(&TransitionTensor::new(1, motors.n_total), &cb, &motors, 0, &params());
        assert_eq!((canvas.width, canvas.height), (37, 37));
        assert!(canvas.at(-17, -17).is_some() && canvas.at(19, 19).is_some());
        assert!(canvas.at(-18, 0).is_none() && canvas.at(20, 0).is_none());
        assert!(canvas.pixels.iter().all(|p| *p == CanvasPixel::EMPTY));
    }

    #[test]
    fn single_motor_stamps_centroid_at_displacement() {
        let motors = small_motors();
        let cb = Codebook::from_centroids(vec![flat(1.0), flat(3.0)]);
        let mut t = TransitionTensor::new(2, motors.n_total);
        let m = motors.encode(2, -1);
        for _ in 0..24 {
            t.add(0, m, 1);
        }
        for _ in 0..6 {
            t.add(0, m, 0);
        }
        let canvas = reconstruct_canvas(&t, &cb, &motors, 0, &params());
        assert_eq!(canvas.n_filled(), 9);
        for (dx, dy) in canvas.offsets().collect::<Vec<_>>() {
            let p = canvas.at(dx, dy).unwrap();
            if (2..5).contains(&dx) && (-1..2).contains(&dy) {
                assert!((p.value.unwrap() - 3.0).abs() < 1e-12);
                assert!((p.certainty - 0.8).abs() < 1e-12);
                assert!(!p.ambiguous);
            } else {
                assert_eq!(*p, CanvasPixel::EMPTY);
            }
        }
    }

    #[test]
    fn weak_rows_are_not_admitted() {
        let motors = small_motors();
        let cb = Codebook::from_centroids(vec![flat(1.0), flat(2.0), flat(3.0), flat(2.5)]);
        let mut t = TransitionTensor::new(4, motors.n_total);
        let m = motors.encode(1, 1);
        // p_max = 0.3 exactly, not above p_sim
        for (b, n) in [(0, 9), (1, 7), (2, 7), (3, 7)] {
            for _ in 0..n {
                t.add(0, m, b);
            }
        }
        assert_eq!(reconstruct_canvas(&t, &cb, &motors, 0, &params()).n_filled(), 0);
    }

    #[test]
    fn overlapping_motors_blend_and_flag_disagreement() {
        let motors = small_motors();
        let cb = Codebook::from_centroids(vec![flat(1.0), flat(3.0)]);
        let mut t = TransitionTensor::new(2, motors.n_total);
        let (a, b) = (motors.encode(0, 0), motors.encode(1, 0));
        for _ in 0..30 {
            t.add(0, a, 0);
        }
        for _ in 0..27 {
            t.add(0, b, 1);
        }
        for _ in 0..3 {
            t.add(0, b, 0);
        }
        let canvas = reconstruct_canvas(&t, &cb, &motors, 0, &params());
        // column dx = 1 is covered by both stamps
        let both = canvas.at(1, 0).unwrap();
        let expect = (1.0 * 1.0 + 0.9 * 3.0) / 1.9;
        assert!((both.value.unwrap() - expect).abs() < 1e-12);
        assert_eq!(both.certainty, 1.0);
        assert!(both.ambiguous);
        let only_a = canvas.at(0, 0).unwrap();
        assert_eq!((only_a.value, only_a.ambiguous), (Some(1.0), false));
        let only_b = canvas.at(3, 2).unwrap();
        assert!((only_b.certainty - 0.9).abs() < 1e-12 && !only_b.ambiguous);
    }

    #[test]
    fn rotate_action_is_never_stamped() {
        let motors = MotorSpace::new(&GridConfig {
            width: 5,
            height: 5,
            rotation_enabled: true,
            obj_size_min: 2,
            obj_size_max: 2,
            ..Default::default()
        });
        let cb = Codebook::from_centroids(vec![flat(2.0)]);
        let mut t = TransitionTensor::new(1, motors.n_total);
        for _ in 0..50 {
            t.add(0, motors.rotate_index.unwrap(), 0);
        }
        assert_eq!(reconstruct_canvas(&t, &cb, &motors, 0, &params()).n_filled(), 0);
    }

    #[test]
    fn json_and_ppm_exports() {
        let motors = small_motors();
        let cb = Codebook::from_centroids(vec![flat(2.0)]);
        let mut t = TransitionTensor::new(1, motors.n_total);
        for _ in 0..30 {
            t.add(0, motors.null_motor(), 0);
        }
        let canvas = reconstruct_canvas(&t, &cb, &motors, 0, &params());
        let json: serde_json::Value = serde_json::from_str(&canvas.to_json()).unwrap();
        assert_eq!(json["pixels"].as_array().unwrap().len(), 49);
        assert_eq!(json["pixels"][0]["value"], serde_json::Value::Null);
        let mut ppm = Vec::new();
        canvas.write_ppm(&mut ppm, 2).unwrap();
        let header = b"P6\n14 14\n255\n";
        assert_eq!(&ppm[..header.len()], header);
        assert_eq!(ppm.len(), header.len() + 14 * 14 * 3);
        // centre pixel: value 2 at full certainty
        let at = header.len() + ((2 * 2 + 2) * 14 + 2 * 2 + 2) * 3;
        assert_eq!(&ppm[at..at + 3], &[86, 180, 233]);
        assert_eq!(&ppm[header.len()..header.len() + 3], &[0, 0, 0]);
    }

    proptest! {
        #[test]
        fn values_are_convex_combinations(
            cells in proptest::collection::vec((0u16..25, 0u16..4, 1u64..40), 1..60),
            centroid_values in proptest::collection::vec(1.0f64..3.0, 4),
        ) {
            let motors = small_motors();
            let cb = Codebook::from_centroids(centroid_values.iter().map(|&v| flat(v)).collect());
            let mut t = TransitionTensor::new(4, motors.n_total);
            for &(m, b, n) in &cells {
                for _ in 0..n {
                    t.add(0, m, b);
                }
            }
            let canvas = reconstruct_canvas(&t, &cb, &motors, 0, &params());
            let lo = centroid_values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = centroid_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for p in &canvas.pixels {
                match p.value {
                    None => prop_assert!(p.certainty == 0.0 && !p.ambiguous),
                    Some(v) => {
                        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                        prop_assert!(p.certainty > params().p_sim && p.certainty <= 1.0);
                    }
                }
            }
            prop_assert_eq!(canvas.clone(), reconstruct_canvas(&t, &cb, &motors, 0, &params()));
        }
    }
}
