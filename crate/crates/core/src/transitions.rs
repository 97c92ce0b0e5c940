//! Sparse `(state, motor, next state)` transition counts.
//!
//! Counts are stored; conditional probabilities are derived on demand.

use std::io::{self, Write};

use crate::codebook::{Codebook, StateId};
use crate::explorer::Triplet;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Row {
    total: u64,
    /// Sorted by successor state.
    succ: Vec<(StateId, u64)>,
}

/// One observed `(s_a, m)` row.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    pub state: StateId,
    pub motor: u16,
    pub total: u64,
    pub successors: &'a [(StateId, u64)],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTensor {
    n_states: usize,
    n_motors: usize,
    rows: Vec<Row>,
    n_triplets: u64,
}

impl TransitionTensor {
    pub fn new(n_states: usize, n_motors: usize) -> TransitionTensor {
        TransitionTensor { n_states, n_motors, rows: vec![Row::default(); n_states * n_motors], n_triplets: 0 }
    }

    /// Map a triplet stream through the codebook and count it.
    pub fn accumulate<I>(triplets: I, codebook: &Codebook, n_motors: usize) -> TransitionTensor
    where
        I: IntoIterator<Item = Triplet>,
    {
        let mut c = TransitionCounter::new(codebook.k(), n_motors);
        for tr in triplets {
            c.push_triplet(&tr, codebook);
        }
        c.finish()
    }

    #[inline]
    pub fn add_triplet(&mut self, tr: &Triplet, codebook: &Codebook) {
        self.add(codebook.state_of(tr.code_t), tr.motor, codebook.state_of(tr.code_next));
    }

    #[inline]
    pub fn add(&mut self, from: StateId, motor: u16, to: StateId) {
        assert!((motor as usize) < self.n_motors, "motor {motor} outside the {}-motor space", self.n_motors);
        assert!((from as usize) < self.n_states && (to as usize) < self.n_states, "state out of range");
        self.bump(from as usize, motor as usize, to, 1);
    }

    /// Add `count` to one cell.
    fn bump(&mut self, from: usize, motor: usize, to: StateId, count: u64) {
        let row = &mut self.rows[from * self.n_motors + motor];
        row.total += count;
        match row.succ.binary_search_by_key(&to, |e| e.0) {
            Ok(i) => row.succ[i].1 += count,
            Err(i) => row.succ.insert(i, (to, count)),
        }
        self.n_triplets += count;
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_motors(&self) -> usize {
        self.n_motors
    }

    pub fn n_triplets(&self) -> u64 {
        self.n_triplets
    }

    /// Number of distinct observed `(s_a, m, s_b)` cells.
    pub fn n_entries(&self) -> usize {
        self.rows.iter().map(|r| r.succ.len()).sum()
    }

    fn row(&self, from: StateId, motor: u16) -> Option<&Row> {
        if (from as usize) >= self.n_states || (motor as usize) >= self.n_motors {
            return None;
        }
        Some(&self.rows[from as usize * self.n_motors + motor as usize])
    }

    pub fn total(&self, from: StateId, motor: u16) -> u64 {
        self.row(from, motor).map_or(0, |r| r.total)
    }

    pub fn count(&self, from: StateId, motor: u16, to: StateId) -> u64 {
        self.successors(from, motor).binary_search_by_key(&to, |e| e.0).map_or(0, |i| self.successors(from, motor)[i].1)
    }

    pub fn successors(&self, from: StateId, motor: u16) -> &[(StateId, u64)] {
        self.row(from, motor).map_or(&[], |r| &r.succ)
    }

    /// Empirical `p(s_b | s_a, m)`, or `None` when `(s_a, m)` was never seen.
    pub fn conditional(&self, from: StateId, motor: u16) -> Option<Vec<(StateId, f64)>> {
        let row = self.row(from, motor)?;
        if row.total == 0 {
            return None;
        }
        let total = row.total as f64;
        Some(row.succ.iter().map(|&(b, c)| (b, c as f64 / total)).collect())
    }

    /// Observed rows in `(state, motor)` order.
    pub fn rows(&self) -> impl Iterator<Item = RowView<'_>> {
        self.rows.iter().enumerate().filter(|(_, r)| r.total > 0).map(move |(i, r)| RowView {
            state: (i / self.n_motors) as StateId,
            motor: (i % self.n_motors) as u16,
            total: r.total,
            successors: &r.succ,
        })
    }

    /// Debug dump: `s_a,m,s_b,count` lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "s_a,m,s_b,count")?;
        for row in self.rows() {
            for &(b, c) in row.successors {
                writeln!(w, "{},{},{},{}", row.state, row.motor, b, c)?;
            }
        }
        Ok(())
    }
}

/// Buffered accumulation for long triplet streams. Increments are packed
/// into integer keys and folded in sorted batches, which is far cheaper than
/// scattering single increments across rows.
#[derive(Debug, Clone)]
pub struct TransitionCounter {
    tensor: TransitionTensor,
    buf: Vec<u64>,
    cap: usize,
}

impl TransitionCounter {
    const DEFAULT_BATCH: usize = 1 << 23;

    pub fn new(n_states: usize, n_motors: usize) -> TransitionCounter {
        TransitionCounter::with_batch(n_states, n_motors, Self::DEFAULT_BATCH)
    }

    pub fn with_batch(n_states: usize, n_motors: usize, batch: usize) -> TransitionCounter {
        let cap = batch.max(1);
        TransitionCounter { tensor: TransitionTensor::new(n_states, n_motors), buf: Vec::with_capacity(cap), cap }
    }

    #[inline]
    pub fn push(&mut self, from: StateId, motor: u16, to: StateId) {
        let t = &self.tensor;
        assert!((motor as usize) < t.n_motors, "motor {motor} outside the {}-motor space", t.n_motors);
        assert!((from as usize) < t.n_states && (to as usize) < t.n_states, "state out of range");
        let key = (from as u64 * t.n_motors as u64 + motor as u64) * t.n_states as u64 + to as u64;
        self.buf.push(key);
        if self.buf.len() == self.cap {
            self.flush();
        }
    }

    #[inline]
    pub fn push_triplet(&mut self, tr: &Triplet, codebook: &Codebook) {
        self.push(codebook.state_of(tr.code_t), tr.motor, codebook.state_of(tr.code_next));
    }

    fn flush(&mut self) {
        self.buf.sort_unstable();
        let (k, m) = (self.tensor.n_states as u64, self.tensor.n_motors as u64);
        let mut i = 0;
        while i < self.buf.len() {
            let key = self.buf[i];
            let mut j = i + 1;
            while j < self.buf.len() && self.buf[j] == key {
                j += 1;
            }
            let to = (key % k) as StateId;
            let row = key / k;
            self.tensor.bump((row / m) as usize, (row % m) as usize, to, (j - i) as u64);
            i = j;
        }
        self.buf.clear();
    }

    pub fn finish(mut self) -> TransitionTensor {
        self.flush();
        self.tensor
    }
}
