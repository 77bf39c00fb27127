//! Wake-up policies driven tick by tick by the simulation loop.

use std::fmt;

use crate::energy::{EnergyStore, ENERGY_EPS, WAKE_COST};
use crate::error::{Error, Result};
use crate::learner::{
    extract_peaks, probe_plan, profile_converged, Learner, LearnerConfig, Observation, Phase, ProfileParams,
    SlotProfile,
};
use crate::rng::{Stream, StreamName};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    SmartOn,
    Ctid,
    CtidPro,
    Gt,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::SmartOn,
        PolicyKind::Ctid,
        PolicyKind::CtidPro,
        PolicyKind::Gt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::SmartOn => "smarton",
            PolicyKind::Ctid => "ctid",
            PolicyKind::CtidPro => "ctidpro",
            PolicyKind::Gt => "gt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "smarton" => Ok(PolicyKind::SmartOn),
            "ctid" => Ok(PolicyKind::Ctid),
            "ctidpro" => Ok(PolicyKind::CtidPro),
            "gt" => Ok(PolicyKind::Gt),
            _ => Err(Error::validation(
                "policy",
                format!("unknown policy `{s}` (smarton, ctid, ctidpro, gt)"),
            )),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Interface between a policy and the simulation loop.
///
/// Per tick the loop calls `decide`, executes the wake-up if the store can
/// fund it, and reports back through `observe`. A policy only learns whether
/// an event happened on ticks where it was actually awake.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;
    fn begin_period(&mut self, _period: usize) {}
    /// Whether to wake at in-period tick `t`.
    fn decide(&mut self, t: usize, store: &EnergyStore) -> bool;
    /// `caught` is `Some(event)` for executed wake-ups, `None` otherwise.
    fn observe(&mut self, _t: usize, _caught: Option<bool>, _store: &EnergyStore) {}
    fn end_period(&mut self) {}
    fn phase(&self) -> Option<Phase> {
        None
    }
    /// False for oracles that wake without paying.
    fn debits_energy(&self) -> bool {
        true
    }
    /// True for policies that profile the event pattern and so see pinned entry levels.
    fn event_aware(&self) -> bool {
        false
    }
    fn learner(&self) -> Option<&Learner> {
        None
    }
    /// Passes needed by each completed profiling run.
    fn phase1_passes(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// Awake every tick, pays nothing.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth;

impl Policy for GroundTruth {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Gt
    }

    fn decide(&mut self, _t: usize, _store: &EnergyStore) -> bool {
        true
    }

    fn debits_energy(&self) -> bool {
        false
    }
}

/// Awake ticks of a window under the ground-truth oracle.
pub fn gt_schedule(window: std::ops::Range<usize>) -> Vec<usize> {
    window.collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtidConfig {
    pub e_on: f64,
    pub e_off: f64,
    pub discharge_frequency: f64,
}

impl Default for CtidConfig {
    fn default() -> Self {
        Self {
            e_on: 30.0,
            e_off: 0.0,
            discharge_frequency: 1.0,
        }
    }
}

impl CtidConfig {
    pub fn validate(&self, capacity: f64) -> Result<()> {
        if !(self.e_off < self.e_on && self.e_on <= capacity + ENERGY_EPS && self.e_off >= 0.0) {
            return Err(Error::validation("ctid_e_on", "need 0 <= e_off < e_on <= capacity"));
        }
        if !(self.discharge_frequency > 0.0 && self.discharge_frequency <= 1.0) {
            return Err(Error::validation("ctid_frequency", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Charge to `e_on`, then discharge until `e_off`, blind to events.
#[derive(Clone, Debug)]
pub struct Ctid {
    pub cfg: CtidConfig,
    discharging: bool,
    since_on: u64,
}

impl Ctid {
    pub fn new(cfg: CtidConfig) -> Self {
        Self {
            cfg,
            discharging: false,
            since_on: 0,
        }
    }

    pub fn discharging(&self) -> bool {
        self.discharging
    }
}

/// One mode-bit step: returns whether to wake given the stored energy.
pub fn ctid_step(state: &mut Ctid, stored: f64) -> bool {
    if state.discharging && (stored <= state.cfg.e_off + ENERGY_EPS || stored + ENERGY_EPS < WAKE_COST) {
        state.discharging = false;
    }
    if !state.discharging && stored + ENERGY_EPS >= state.cfg.e_on {
        state.discharging = true;
        state.since_on = 0;
    }
    if !state.discharging {
        return false;
    }
    let i = state.since_on;
    state.since_on += 1;
    let f = state.cfg.discharge_frequency;
    i == 0 || (i as f64 * f + 1e-9).floor() > ((i - 1) as f64 * f + 1e-9).floor()
}

impl Policy for Ctid {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Ctid
    }

    fn decide(&mut self, _t: usize, store: &EnergyStore) -> bool {
        ctid_step(self, store.stored())
    }
}

/// Profiles like SmartON's first phase, then spends greedily at the highest
/// frequency inside profiled slots; probes and re-profiles like SmartON.
#[derive(Clone, Debug)]
pub struct CtidPro {
    params: ProfileParams,
    state_duration: usize,
    k_levels: usize,
    noise_floor: f64,
    max_peak_steps: usize,
    probe_budget: usize,
    probe_trigger: usize,
    probe_mask: Vec<bool>,
    high_mask: Vec<bool>,
    profile_cost: f64,
    profile: SlotProfile,
    phase: Phase,
    in_peak: Vec<bool>,
    probe_slots: Vec<usize>,
    probe_catches: usize,
    probe_rng: Stream,
    mode: ProMode,
    phase1_passes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ProMode {
    Asleep,
    Profile(usize),
    Peak,
    Probe,
}

impl CtidPro {
    pub fn new(cfg: &LearnerConfig, period_ticks: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n_slots = period_ticks / cfg.state_duration;
        let masks = cfg.actions.masks(cfg.state_duration);
        Ok(Self {
            params: cfg.profile.clone(),
            state_duration: cfg.state_duration,
            k_levels: cfg.k_levels,
            noise_floor: cfg.noise_floor,
            max_peak_steps: cfg.max_peak_steps(),
            probe_budget: cfg.probe_budget,
            probe_trigger: cfg.probe_trigger,
            probe_mask: masks[1].clone(),
            high_mask: masks[masks.len() - 1].clone(),
            profile_cost: cfg.max_wakes_per_step() as f64 * WAKE_COST,
            profile: SlotProfile::new(n_slots),
            phase: Phase::Profile,
            in_peak: vec![false; n_slots],
            probe_slots: Vec::new(),
            probe_catches: 0,
            probe_rng: Stream::named(seed, StreamName::Probe),
            mode: ProMode::Asleep,
            phase1_passes: Vec::new(),
        })
    }

    /// Profiled peak slots are marked directly (skips profiling).
    pub fn with_peak_slots(mut self, slots: &[usize]) -> Self {
        self.in_peak.iter_mut().for_each(|s| *s = false);
        for &s in slots {
            self.in_peak[s] = true;
        }
        self.phase = Phase::Exploit;
        self
    }

    pub fn peak_slots(&self) -> Vec<usize> {
        (0..self.in_peak.len()).filter(|&s| self.in_peak[s]).collect()
    }
}

impl Policy for CtidPro {
    fn kind(&self) -> PolicyKind {
        PolicyKind::CtidPro
    }

    fn begin_period(&mut self, _period: usize) {
        self.probe_catches = 0;
        self.probe_slots = if self.phase == Phase::Exploit {
            probe_plan(&self.in_peak, self.probe_budget, &mut self.probe_rng)
        } else {
            Vec::new()
        };
    }

    fn decide(&mut self, t: usize, store: &EnergyStore) -> bool {
        let d = self.state_duration;
        let (slot, off) = (t / d, t % d);
        if off == 0 {
            self.mode = ProMode::Asleep;
            match self.phase {
                Phase::Profile => {
                    if self
                        .profile
                        .begin_slot(slot, store.stored(), self.profile_cost, store.level(self.k_levels))
                    {
                        self.mode = ProMode::Profile(slot);
                    }
                }
                _ => {
                    if self.in_peak[slot] {
                        self.mode = ProMode::Peak;
                    } else if self.probe_slots.contains(&slot) {
                        self.mode = ProMode::Probe;
                    }
                }
            }
        }
        match self.mode {
            ProMode::Asleep => false,
            ProMode::Profile(_) | ProMode::Peak => self.high_mask[off],
            ProMode::Probe => self.probe_mask[off],
        }
    }

    fn observe(&mut self, _t: usize, caught: Option<bool>, _store: &EnergyStore) {
        if caught != Some(true) {
            return;
        }
        match self.mode {
            ProMode::Profile(slot) => self.profile.record_catch(slot),
            ProMode::Probe => self.probe_catches += 1,
            _ => {}
        }
    }

    fn end_period(&mut self) {
        self.mode = ProMode::Asleep;
        match self.phase {
            Phase::Profile => {
                if self.profile.end_pass() && profile_converged(&self.profile, &self.params) {
                    self.phase1_passes.push(self.profile.passes);
                    let mean = self.profile.current_mean();
                    self.in_peak.iter_mut().for_each(|s| *s = false);
                    for (start, len) in extract_peaks(&mean, self.noise_floor, self.max_peak_steps) {
                        self.in_peak[start..start + len].fill(true);
                    }
                    self.phase = Phase::Exploit;
                }
            }
            _ => {
                if self.probe_catches >= self.probe_trigger {
                    debug_assert_eq!(
                        crate::learner::phase_transition(Phase::Exploit, Observation::ProbeCaught),
                        Ok(Phase::Profile)
                    );
                    self.phase = Phase::Profile;
                    self.profile = SlotProfile::new(self.in_peak.len());
                    self.in_peak.iter_mut().for_each(|s| *s = false);
                }
            }
        }
    }

    fn phase(&self) -> Option<Phase> {
        Some(self.phase)
    }

    fn phase1_passes(&self) -> Vec<usize> {
        self.phase1_passes.clone()
    }

    fn event_aware(&self) -> bool {
        true
    }
}

/// The three-phase learner as a policy.
#[derive(Clone, Debug)]
pub struct SmartOn {
    pub learner: Learner,
}

impl SmartOn {
    pub fn new(cfg: LearnerConfig, period_ticks: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            learner: Learner::new(cfg, period_ticks, seed)?,
        })
    }
}

impl Policy for SmartOn {
    fn kind(&self) -> PolicyKind {
        PolicyKind::SmartOn
    }

    fn begin_period(&mut self, period: usize) {
        self.learner.begin_period(period);
    }

    fn decide(&mut self, t: usize, store: &EnergyStore) -> bool {
        self.learner.decide(t, store)
    }

    fn observe(&mut self, t: usize, caught: Option<bool>, store: &EnergyStore) {
        self.learner.observe(t, caught, store);
    }

    fn end_period(&mut self) {
        self.learner.end_period();
    }

    fn phase(&self) -> Option<Phase> {
        Some(self.learner.phase())
    }

    fn event_aware(&self) -> bool {
        true
    }

    fn learner(&self) -> Option<&Learner> {
        Some(&self.learner)
    }

    fn phase1_passes(&self) -> Vec<usize> {
        self.learner.log().phase1_passes.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub ctid: CtidConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::SmartOn,
            ctid: CtidConfig::default(),
        }
    }
}

pub fn build_policy(
    cfg: &PolicyConfig,
    learner: &LearnerConfig,
    period_ticks: usize,
    seed: u64,
) -> Result<Box<dyn Policy>> {
    Ok(match cfg.kind {
        PolicyKind::Gt => Box::new(GroundTruth),
        PolicyKind::Ctid => Box::new(Ctid::new(cfg.ctid.clone())),
        PolicyKind::CtidPro => Box::new(CtidPro::new(learner, period_ticks, seed)?),
        PolicyKind::SmartOn => Box::new(SmartOn::new(learner.clone(), period_ticks, seed)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{harvest_tick, HarvestSource};

    #[test]
    fn ctid_first_wake_at_ninety() {
        let mut c = Ctid::new(CtidConfig {
            e_on: 10.0,
            ..CtidConfig::default()
        });
        let mut s = EnergyStore::abstract_store(120.0, 9.0, 0.0).unwrap();
        let src = HarvestSource::Constant(1.0);
        let mut awake = Vec::new();
        for t in 0..200u64 {
            let want = ctid_step(&mut c, s.stored());
            if want && s.draw(WAKE_COST).is_ok() {
                awake.push(t);
            } else {
                harvest_tick(&mut s, &src, t);
            }
        }
        assert_eq!(&awake[..10], &(90..100).collect::<Vec<_>>()[..]);
        assert!(awake.len() == 10 || awake[10] > 100);
    }

    #[test]
    fn ctid_never_wakes_without_energy() {
        let mut c = Ctid::new(CtidConfig::default());
        assert!((0..1000).all(|_| !ctid_step(&mut c, 0.0)));
    }

    #[test]
    fn ctid_half_frequency() {
        let mut c = Ctid::new(CtidConfig {
            discharge_frequency: 0.5,
            ..CtidConfig::default()
        });
        let wakes: Vec<bool> = (0..6).map(|_| ctid_step(&mut c, 50.0)).collect();
        assert_eq!(wakes, vec![true, false, true, false, true, false]);
    }

    #[test]
    fn gt_window() {
        assert_eq!(gt_schedule(0..30).len(), 30);
        assert!(!GroundTruth.debits_energy());
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(PolicyKind::parse(k.as_str()), Ok(k));
        }
        assert!(PolicyKind::parse("oracle").is_err());
    }

    #[test]
    fn ctid_config_bounds() {
        assert!(CtidConfig::default().validate(120.0).is_ok());
        assert!(CtidConfig {
            e_on: 0.0,
            ..CtidConfig::default()
        }
        .validate(120.0)
        .is_err());
        assert!(CtidConfig {
            e_on: 200.0,
            ..CtidConfig::default()
        }
        .validate(120.0)
        .is_err());
    }
}
