//! Slot-by-slot event profiling and peak extraction.
//!
//! A profiling round visits every slot of the period exactly once, spread
//! over as many passes (periods) as the energy budget requires. Rounds repeat
//! until the running mean profile stops moving.

use crate::energy::{harvest_tick, EnergyStore, HarvestSource, WAKE_COST};
use crate::error::{Error, Result};
use crate::world::StepClass;

use super::qtable::ShapeKey;

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileParams {
    /// Rounds compared when testing convergence.
    pub window: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            window: 2,
            rel_tol: 0.25,
            abs_tol: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotProfile {
    /// Catches per slot in the current round.
    pub counts: Vec<u32>,
    pub visited: Vec<bool>,
    /// Periods spent profiling.
    pub passes: usize,
    /// Completed rounds, one snapshot of `counts` each.
    pub history: Vec<Vec<u32>>,
    /// Energy level seen at the start of each slot in its latest pass.
    pub slot_levels: Vec<Option<usize>>,
    /// Visits per slot in the current round.
    pub visits: Vec<u32>,
}

impl SlotProfile {
    pub fn new(n_slots: usize) -> Self {
        Self {
            counts: vec![0; n_slots],
            visited: vec![false; n_slots],
            passes: 0,
            history: Vec::new(),
            slot_levels: vec![None; n_slots],
            visits: vec![0; n_slots],
        }
    }

    pub fn n_slots(&self) -> usize {
        self.counts.len()
    }

    /// Slot-start decision: profile when unvisited and `stored` funds `cost`.
    /// Marks the slot visited when it returns true.
    pub fn begin_slot(&mut self, slot: usize, stored: f64, cost: f64, level: usize) -> bool {
        self.slot_levels[slot] = Some(level);
        if self.visited[slot] || stored + crate::energy::ENERGY_EPS < cost {
            return false;
        }
        self.visited[slot] = true;
        self.visits[slot] += 1;
        true
    }

    pub fn record_catch(&mut self, slot: usize) {
        self.counts[slot] += 1;
    }

    pub fn all_visited(&self) -> bool {
        self.visited.iter().all(|&v| v)
    }

    /// Closes one pass. When every slot has been visited the round is
    /// archived and a new one starts; returns true in that case.
    pub fn end_pass(&mut self) -> bool {
        self.passes += 1;
        if !self.all_visited() {
            return false;
        }
        self.history.push(std::mem::take(&mut self.counts));
        self.counts = vec![0; self.visited.len()];
        self.visited.iter_mut().for_each(|v| *v = false);
        self.visits.iter_mut().for_each(|v| *v = 0);
        true
    }

    /// Mean counts over the first `rounds` completed rounds.
    pub fn mean_profile(&self, rounds: usize) -> Vec<f64> {
        let n = self.n_slots();
        let mut m = vec![0.0; n];
        let rounds = rounds.min(self.history.len());
        if rounds == 0 {
            return m;
        }
        for snap in &self.history[..rounds] {
            for (acc, &c) in m.iter_mut().zip(snap) {
                *acc += f64::from(c);
            }
        }
        m.iter_mut().for_each(|x| *x /= rounds as f64);
        m
    }

    pub fn current_mean(&self) -> Vec<f64> {
        self.mean_profile(self.history.len())
    }
}

fn within(a: f64, b: f64, p: &ProfileParams) -> bool {
    let d = (a - b).abs();
    d <= p.abs_tol || d <= p.rel_tol * a.max(b)
}

/// True once `window` rounds are complete and the running mean profile
/// moved by at most the tolerance in every slot over the last `window - 1`
/// rounds.
pub fn profile_converged(profile: &SlotProfile, p: &ProfileParams) -> bool {
    let n = profile.history.len();
    let w = p.window.max(2);
    if n < w {
        return false;
    }
    let latest = profile.mean_profile(n);
    (n + 1 - w..n).all(|r| {
        let earlier = profile.mean_profile(r);
        latest.iter().zip(&earlier).all(|(&a, &b)| within(a, b, p))
    })
}

/// Contiguous runs of slots above `noise_floor`, split into chunks of at most `max_steps`.
pub fn extract_peaks(mean_counts: &[f64], noise_floor: f64, max_steps: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < mean_counts.len() {
        if mean_counts[i] > noise_floor {
            let start = i;
            while i < mean_counts.len() && mean_counts[i] > noise_floor {
                i += 1;
            }
            let mut s = start;
            while s < i {
                let len = (i - s).min(max_steps.max(1));
                out.push((s, len));
                s += len;
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Labels each step H when its count reaches `theta` of the peak maximum.
pub fn classify_shape(counts: &[f64], theta: f64, noise_floor: f64) -> Result<ShapeKey> {
    let max = counts.iter().copied().fold(0.0, f64::max);
    if counts.is_empty() || max <= noise_floor {
        return Err(Error::EmptyPeak);
    }
    Ok(ShapeKey(
        counts
            .iter()
            .map(|&c| if c >= theta * max { StepClass::H } else { StepClass::L })
            .collect(),
    ))
}

/// Runs one period of profiling on its own: for each slot, profile at the
/// highest frequency when unvisited and fundable, otherwise sleep and
/// harvest. `events` covers one period; `masks_high` is the awake mask of
/// the highest frequency over one slot. Returns the catches recorded.
pub fn run_profile_pass(
    profile: &mut SlotProfile,
    store: &mut EnergyStore,
    source: &HarvestSource,
    events: &[bool],
    first_tick: u64,
    slot_ticks: usize,
    mask_high: &[bool],
    k_levels: usize,
) -> usize {
    let cost = mask_high.iter().filter(|&&b| b).count() as f64 * WAKE_COST;
    let mut caught = 0;
    let mut profiling = false;
    for (t, &ev) in events.iter().enumerate() {
        let slot = t / slot_ticks;
        let off = t % slot_ticks;
        if off == 0 {
            profiling = profile.begin_slot(slot, store.stored(), cost, store.level(k_levels));
        }
        let awake = profiling && mask_high[off] && store.draw(WAKE_COST).is_ok();
        if awake {
            if ev {
                profile.record_catch(slot);
                caught += 1;
            }
        } else {
            harvest_tick(store, source, first_tick + t as u64);
        }
    }
    profile.end_pass();
    caught
}
