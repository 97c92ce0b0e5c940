//! The stochastic gridworld: a pixel environment that is redrawn from time to
//! time, and a handful of proto-objects that keep their internal pattern while
//! being moved around, removed and (optionally) rotated.
//!
//! Coordinates are `(x, y)` = (column, row). Object placements and sensor
//! anchors both denote the top-left cell of the box they describe.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub type Pixel = u8;

/// Side of the square sensory receptive field.
pub const FIELD: usize = 3;
/// Cells in a sensory patch.
pub const PATCH_LEN: usize = FIELD * FIELD;

const NO_OWNER: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Anchor {
    pub x: usize,
    pub y: usize,
}

impl Anchor {
    pub fn new(x: usize, y: usize) -> Self {
        Anchor { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub alphabet_size: u8,
    pub n_obj: usize,
    pub obj_size_min: usize,
    pub obj_size_max: usize,
    pub fill_fraction_min: f64,
    pub p_env: f64,
    pub p_obj: f64,
    pub p_abs: f64,
    /// All objects move as one rigid group.
    pub linked: bool,
    /// Every object is a copy of object 0.
    pub identical: bool,
    /// The agent has an extra action rotating every object by 90 degrees.
    pub rotation_enabled: bool,
    /// Objects are 2x2, smaller than the receptive field.
    pub small_objects: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            width: 20,
            height: 20,
            alphabet_size: 3,
            n_obj: 2,
            obj_size_min: 5,
            obj_size_max: 7,
            fill_fraction_min: 0.6,
            p_env: 0.05,
            p_obj: 0.1,
            p_abs: 0.2,
            linked: false,
            identical: false,
            rotation_enabled: false,
            small_objects: false,
        }
    }
}

impl GridConfig {
    /// Effective `(min, max)` box side, honoring `small_objects`.
    pub fn size_bounds(&self) -> (usize, usize) {
        if self.small_objects {
            (2, 2)
        } else {
            (self.obj_size_min, self.obj_size_max)
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, p) in [("p_env", self.p_env), ("p_obj", self.p_obj), ("p_abs", self.p_abs)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(0.0..=1.0).contains(&self.fill_fraction_min) {
            return bad(format!("fill_fraction_min = {} outside [0, 1]", self.fill_fraction_min));
        }
        if self.alphabet_size < 2 {
            return bad(format!("alphabet_size = {} (need >= 2)", self.alphabet_size));
        }
        if self.alphabet_size > 3 {
            // patch codes are base-3 integers
            return bad(format!("alphabet_size = {} (patch codes support at most 3)", self.alphabet_size));
        }
        if self.width < FIELD || self.height < FIELD {
            return bad(format!("grid {}x{} smaller than the sensor", self.width, self.height));
        }
        let (lo, hi) = self.size_bounds();
        if lo == 0 || lo > hi || hi > self.width.min(self.height) {
            return bad(format!("object size bounds {lo}..{hi} invalid for a {}x{} grid", self.width, self.height));
        }
        if self.n_obj >= NO_OWNER as usize {
            return bad(format!("n_obj = {} too large", self.n_obj));
        }
        if self.linked && self.rotation_enabled {
            return bad("linked objects cannot be combined with rotation".into());
        }
        Ok(())
    }
}

/// Ground-truth origin of a sensed patch. Used only for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Object(usize),
    Env,
    Mixed,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Object(k) => write!(f, "OBJECT({k})"),
            Provenance::Env => f.write_str("ENV"),
            Provenance::Mixed => f.write_str("MIXED"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ENV" => Ok(Provenance::Env),
            "MIXED" => Ok(Provenance::Mixed),
            _ => s
                .strip_prefix("OBJECT(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|k| k.parse().ok())
                .map(Provenance::Object)
                .ok_or_else(|| format!("unknown provenance {s:?}")),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtoObject {
    pub id: usize,
    pub box_w: usize,
    pub box_h: usize,
    /// Row-major over the bounding box.
    pub mask: Vec<bool>,
    /// Row-major over the bounding box; 0 where the mask is off.
    pub pixels: Vec<Pixel>,
    /// `None` while the object is absent from the environment.
    pub placement: Option<Anchor>,
}

impl ProtoObject {
    /// Pixel of the object at local box coordinates, if the mask covers it.
    /// `None` outside the box.
    #[inline]
    pub fn local(&self, lx: usize, ly: usize) -> Option<Pixel> {
        if lx >= self.box_w || ly >= self.box_h {
            return None;
        }
        let i = ly * self.box_w + lx;
        self.mask[i].then(|| self.pixels[i])
    }

    /// Pixel covering grid cell `(x, y)`, if the object is present and covers it.
    #[inline]
    pub fn covering(&self, x: usize, y: usize) -> Option<Pixel> {
        let a = self.placement?;
        if x < a.x || y < a.y || x >= a.x + self.box_w || y >= a.y + self.box_h {
            return None;
        }
        self.local(x - a.x, y - a.y)
    }

    pub fn cell_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Rotate the stamp 90 degrees clockwise in place; the anchor is untouched.
    pub fn rotate_stamp_cw(&mut self) {
        let (w, h) = (self.box_w, self.box_h);
        let (nw, nh) = (h, w);
        let mut mask = vec![false; w * h];
        let mut pixels = vec![0; w * h];
        for r in 0..nh {
            for c in 0..nw {
                let src = (h - 1 - c) * w + r;
                mask[r * nw + c] = self.mask[src];
                pixels[r * nw + c] = self.pixels[src];
            }
        }
        self.box_w = nw;
        self.box_h = nh;
        self.mask = mask;
        self.pixels = pixels;
    }
}

fn random_anchor<R: Rng + ?Sized>(rng: &mut R, cfg: &GridConfig, w: usize, h: usize) -> Anchor {
    Anchor::new(rng.gen_range(0..=cfg.width - w), rng.gen_range(0..=cfg.height - h))
}

fn random_pixel<R: Rng + ?Sized>(rng: &mut R, alphabet: u8) -> Pixel {
    rng.gen_range(1..=alphabet)
}

/// Draw an irregular proto-object.
///
/// The mask grows from the box center in breadth-first order, neighbor order
/// shuffled at every expansion, until it holds at least the target count and
/// touches all four sides of its box.
pub fn generate_object<R: Rng + ?Sized>(rng: &mut R, cfg: &GridConfig, id: usize) -> ProtoObject {
    let (lo, hi) = cfg.size_bounds();
    let box_w = rng.gen_range(lo..=hi);
    let box_h = rng.gen_range(lo..=hi);
    let area = box_w * box_h;
    let min_cells = ((cfg.fill_fraction_min * area as f64).ceil() as usize).clamp(1, area);
    let target = rng.gen_range(min_cells..=area);

    let mut mask = vec![false; area];
    let mut queued = vec![false; area];
    let mut queue = VecDeque::from([(box_h / 2) * box_w + box_w / 2]);
    queued[queue[0]] = true;
    let mut count = 0;
    let touches_all = |m: &[bool]| {
        let top = (0..box_w).any(|x| m[x]);
        let bottom = (0..box_w).any(|x| m[(box_h - 1) * box_w + x]);
        let left = (0..box_h).any(|y| m[y * box_w]);
        let right = (0..box_h).any(|y| m[y * box_w + box_w - 1]);
        top && bottom && left && right
    };
    while count < target || !touches_all(&mask) {
        let Some(cell) = queue.pop_front() else { break };
        mask[cell] = true;
        count += 1;
        let (x, y) = (cell % box_w, cell / box_w);
        let mut next = Vec::with_capacity(4);
        if x > 0 {
            next.push(cell - 1);
        }
        if x + 1 < box_w {
            next.push(cell + 1);
        }
        if y > 0 {
            next.push(cell - box_w);
        }
        if y + 1 < box_h {
            next.push(cell + box_w);
        }
        next.shuffle(rng);
        for n in next {
            if !queued[n] {
                queued[n] = true;
                queue.push_back(n);
            }
        }
    }

    let pixels = mask.iter().map(|&m| if m { random_pixel(rng, cfg.alphabet_size) } else { 0 }).collect();
    let placement = Some(random_anchor(rng, cfg, box_w, box_h));
    ProtoObject { id, box_w, box_h, mask, pixels, placement }
}

/// Rigid layout shared by all objects in linked mode.
#[derive(Debug, Clone, PartialEq)]
struct Group {
    /// Offset of each object's box from the group origin.
    offsets: Vec<Anchor>,
    span_w: usize,
    span_h: usize,
}

impl Group {
    fn from_placements(objects: &[ProtoObject]) -> Group {
        let anchors: Vec<Anchor> = objects.iter().map(|o| o.placement.expect("initial placement")).collect();
        let x0 = anchors.iter().map(|a| a.x).min().unwrap_or(0);
        let y0 = anchors.iter().map(|a| a.y).min().unwrap_or(0);
        let offsets: Vec<Anchor> = anchors.iter().map(|a| Anchor::new(a.x - x0, a.y - y0)).collect();
        let span_w = objects.iter().zip(&offsets).map(|(o, d)| d.x + o.box_w).max().unwrap_or(0);
        let span_h = objects.iter().zip(&offsets).map(|(o, d)| d.y + o.box_h).max().unwrap_or(0);
        Group { offsets, span_w, span_h }
    }
}

/// What fired during one call to [`WorldState::step_world`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub env_redrawn: bool,
    /// Bit k set when object k experienced a move event.
    pub moved: u64,
}

impl StepEvents {
    pub fn object_moved(&self, k: usize) -> bool {
        self.moved >> k & 1 == 1
    }

    pub fn changed(&self) -> bool {
        self.env_redrawn || self.moved != 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub width: usize,
    pub height: usize,
    pub alphabet: u8,
    /// Row-major environment pixels.
    pub env: Vec<Pixel>,
    pub objects: Vec<ProtoObject>,
    pub step_index: u64,
    /// Number of clockwise quarter turns applied so far, modulo 4.
    pub orientation: u8,
    group: Option<Group>,
}

impl WorldState {
    /// Build the initial world. The config must already be validated.
    pub fn new<R: Rng + ?Sized>(cfg: &GridConfig, rng: &mut R) -> WorldState {
        let env = (0..cfg.width * cfg.height).map(|_| random_pixel(rng, cfg.alphabet_size)).collect();
        let mut objects: Vec<ProtoObject> = Vec::with_capacity(cfg.n_obj);
        for id in 0..cfg.n_obj {
            let mut obj = generate_object(rng, cfg, id);
            if cfg.identical && id > 0 {
                let first = &objects[0];
                obj.box_w = first.box_w;
                obj.box_h = first.box_h;
                obj.mask = first.mask.clone();
                obj.pixels = first.pixels.clone();
                obj.placement = Some(random_anchor(rng, cfg, obj.box_w, obj.box_h));
            }
            objects.push(obj);
        }
        let group = (cfg.linked && !objects.is_empty()).then(|| Group::from_placements(&objects));
        WorldState { width: cfg.width, height: cfg.height, alphabet: cfg.alphabet_size, env, objects, step_index: 0, orientation: 0, group }
    }

    /// Apply one step of stochastic dynamics in place.
    ///
    /// The environment is redrawn with probability `p_env`. Each object (or the
    /// whole group, when linked) undergoes a move event with probability
    /// `p_obj`; a move event makes it absent with probability `p_abs` and
    /// otherwise drops it at a uniform valid anchor.
    pub fn step_world<R: Rng + ?Sized>(&mut self, rng: &mut R, cfg: &GridConfig) -> StepEvents {
        let mut ev = StepEvents::default();
        if cfg.p_env > 0.0 && rng.gen_bool(cfg.p_env) {
            ev.env_redrawn = true;
            for p in &mut self.env {
                *p = random_pixel(rng, self.alphabet);
            }
        }
        if cfg.p_obj > 0.0 {
            if let Some(group) = &self.group {
                if rng.gen_bool(cfg.p_obj) {
                    ev.moved = if self.objects.len() >= 64 { u64::MAX } else { (1u64 << self.objects.len()) - 1 };
                    let origin = if cfg.p_abs > 0.0 && rng.gen_bool(cfg.p_abs) {
                        None
                    } else {
                        Some(random_anchor(rng, cfg, group.span_w, group.span_h))
                    };
                    for (obj, off) in self.objects.iter_mut().zip(&group.offsets) {
                        obj.placement = origin.map(|g| Anchor::new(g.x + off.x, g.y + off.y));
                    }
                }
            } else {
                for (k, obj) in self.objects.iter_mut().enumerate() {
                    if rng.gen_bool(cfg.p_obj) {
                        ev.moved |= 1 << k;
                        obj.placement = if cfg.p_abs > 0.0 && rng.gen_bool(cfg.p_abs) {
                            None
                        } else {
                            Some(random_anchor(rng, cfg, obj.box_w, obj.box_h))
                        };
                    }
                }
            }
        }
        self.step_index += 1;
        ev
    }

    /// Rotate every object 90 degrees clockwise, clamping anchors so the
    /// rotated boxes stay inside the grid. Environment pixels are untouched.
    pub fn rotate_objects(&mut self) {
        for obj in &mut self.objects {
            obj.rotate_stamp_cw();
            if let Some(a) = obj.placement.as_mut() {
                a.x = a.x.min(self.width - obj.box_w);
                a.y = a.y.min(self.height - obj.box_h);
            }
        }
        self.orientation = (self.orientation + 1) % 4;
    }

    /// Topmost value at a cell and the object that supplies it, if any.
    /// Higher object ids occlude lower ones.
    pub fn cell(&self, x: usize, y: usize) -> (Pixel, Option<usize>) {
        for obj in self.objects.iter().rev() {
            if let Some(p) = obj.covering(x, y) {
                return (p, Some(obj.id));
            }
        }
        (self.env[y * self.width + x], None)
    }

    fn check_anchor(&self, a: Anchor) {
        assert!(
            a.x + FIELD <= self.width && a.y + FIELD <= self.height,
            "sensor anchor ({}, {}) leaves the {}x{} grid",
            a.x,
            a.y,
            self.width,
            self.height
        );
    }

    /// The 3x3 composite patch at `anchor`, row-major.
    pub fn read_patch(&self, anchor: Anchor) -> [Pixel; PATCH_LEN] {
        self.check_anchor(anchor);
        let mut out = [0; PATCH_LEN];
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.cell(anchor.x + i % FIELD, anchor.y + i / FIELD).0;
        }
        out
    }

    pub fn provenance(&self, anchor: Anchor) -> Provenance {
        self.check_anchor(anchor);
        let owners = (0..PATCH_LEN).map(|i| self.cell(anchor.x + i % FIELD, anchor.y + i / FIELD).1);
        classify(owners)
    }

    pub fn render(&self) -> Frame {
        let mut f = Frame::empty(self.width, self.height);
        self.render_into(&mut f);
        f
    }

    /// Composite the world into an existing frame buffer.
    pub fn render_into(&self, frame: &mut Frame) {
        frame.values.copy_from_slice(&self.env);
        frame.owner.fill(NO_OWNER);
        for obj in &self.objects {
            let Some(a) = obj.placement else { continue };
            for ly in 0..obj.box_h {
                let row = (a.y + ly) * self.width + a.x;
                for lx in 0..obj.box_w {
                    let i = ly * obj.box_w + lx;
                    if obj.mask[i] {
                        frame.values[row + lx] = obj.pixels[i];
                        frame.owner[row + lx] = obj.id as u8;
                    }
                }
            }
        }
    }
}

fn classify<I: IntoIterator<Item = Option<usize>>>(owners: I) -> Provenance {
    let mut first: Option<Option<usize>> = None;
    for o in owners {
        match first {
            None => first = Some(o),
            Some(f) if f != o => return Provenance::Mixed,
            _ => {}
        }
    }
    match first.flatten() {
        Some(k) => Provenance::Object(k),
        None => Provenance::Env,
    }
}

/// A rendered composite of the world with per-cell ownership.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Pixel>,
    owner: Vec<u8>,
}

impl Frame {
    pub fn empty(width: usize, height: usize) -> Frame {
        Frame { width, height, values: vec![0; width * height], owner: vec![NO_OWNER; width * height] }
    }

    #[inline]
    pub fn owner(&self, x: usize, y: usize) -> Option<usize> {
        let o = self.owner[y * self.width + x];
        (o != NO_OWNER).then_some(o as usize)
    }

    #[inline]
    pub fn patch(&self, a: Anchor) -> [Pixel; PATCH_LEN] {
        debug_assert!(a.x + FIELD <= self.width && a.y + FIELD <= self.height);
        let w = self.width;
        let base = a.y * w + a.x;
        let v = &self.values;
        [
            v[base],
            v[base + 1],
            v[base + 2],
            v[base + w],
            v[base + w + 1],
            v[base + w + 2],
            v[base + 2 * w],
            v[base + 2 * w + 1],
            v[base + 2 * w + 2],
        ]
    }

    pub fn provenance(&self, a: Anchor) -> Provenance {
        classify((0..PATCH_LEN).map(|i| self.owner(a.x + i % FIELD, a.y + i / FIELD)))
    }
}
