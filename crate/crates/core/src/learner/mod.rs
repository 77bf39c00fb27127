//! Three-phase learner: profile the event pattern, learn a wake-up policy per
//! peak shape with partitioned Q-learning, then exploit it while probing for
//! pattern changes.

pub mod phase;
pub mod profile;
pub mod qtable;

use std::collections::BTreeMap;

use crate::energy::{EnergyStore, WAKE_COST};
use crate::error::{Error, Result};
use crate::rng::{Stream, StreamName};

pub use phase::{phase_transition, probe_plan, Observation, Phase};
pub use profile::{classify_shape, extract_peaks, profile_converged, run_profile_pass, ProfileParams, SlotProfile};
pub use qtable::{
    affordable_actions, choose_exploit, choose_explore, get_state, q_update, step_reward, ActionSet, Affordability,
    ConvergenceRule, PartitionStats, QTable, ShapeKey, UpdateOutcome,
};

/// When a learned table may be exploited.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gating {
    /// As soon as the entry level's partition has converged.
    Partitioned,
    /// Only once every entry level of the table has converged.
    Monolithic,
}

impl Gating {
    pub fn as_str(self) -> &'static str {
        match self {
            Gating::Partitioned => "partitioned",
            Gating::Monolithic => "monolithic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "partitioned" => Ok(Gating::Partitioned),
            "monolithic" => Ok(Gating::Monolithic),
            _ => Err(Error::validation("gating", "expected partitioned or monolithic")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub reward_catch: f64,
    pub reward_miss: f64,
    pub k_levels: usize,
    /// Slot length in ticks as seen by the learner.
    pub state_duration: usize,
    pub actions: ActionSet,
    /// Quiet-episode threshold as a fraction of the largest per-step reward.
    pub convergence_tolerance: f64,
    /// Consecutive quiet episodes that make a partition converged.
    pub convergence_window: usize,
    pub profile: ProfileParams,
    /// Relative H/L threshold.
    pub theta: f64,
    pub noise_floor: f64,
    pub probe_budget: usize,
    pub probe_trigger: usize,
    pub peak_max_duration: usize,
    pub gating: Gating,
    pub affordability: Affordability,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            gamma: 0.618,
            reward_catch: 10.0,
            reward_miss: -1.0,
            k_levels: 4,
            state_duration: 30,
            actions: ActionSet::default(),
            convergence_tolerance: 0.1,
            convergence_window: 5,
            profile: ProfileParams::default(),
            theta: 0.5,
            noise_floor: 0.0,
            probe_budget: 2,
            probe_trigger: 1,
            peak_max_duration: 120,
            gating: Gating::Partitioned,
            affordability: Affordability::FirstWake,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let v = Error::validation;
        // alpha = 0 is accepted as a frozen-table degenerate case.
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(v("alpha", "must satisfy 0 <= alpha <= 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(v("gamma", "must satisfy 0 <= gamma < 1"));
        }
        if !self.reward_catch.is_finite() || !self.reward_miss.is_finite() {
            return Err(v("reward_catch", "rewards must be finite"));
        }
        if self.k_levels < 2 {
            return Err(v("k_levels", "must be at least 2"));
        }
        if self.state_duration == 0 {
            return Err(v("state_duration", "must be positive"));
        }
        if self.peak_max_duration < self.state_duration {
            return Err(v("peak_max_duration", "must cover at least one state"));
        }
        self.actions.validate()?;
        if !(self.convergence_tolerance >= 0.0) {
            return Err(v("convergence_tolerance", "must be nonnegative"));
        }
        if self.convergence_window == 0 {
            return Err(v("convergence_window", "must be positive"));
        }
        if self.profile.window < 2 {
            return Err(v("profile_window", "must be at least 2"));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(v("theta", "must lie in (0, 1]"));
        }
        if self.probe_trigger == 0 {
            return Err(v("probe_trigger", "must be positive"));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn max_peak_steps(&self) -> usize {
        (self.peak_max_duration / self.state_duration).max(1)
    }

    /// Wake-ups of the highest frequency in one state.
    pub fn max_wakes_per_step(&self) -> usize {
        self.actions
            .awake_offsets(self.n_actions() - 1, self.state_duration)
            .len()
    }

    pub fn max_step_reward(&self) -> f64 {
        self.max_wakes_per_step() as f64 * self.reward_catch.abs().max(self.reward_miss.abs())
    }

    pub fn convergence_rule(&self) -> ConvergenceRule {
        ConvergenceRule {
            epsilon: self.epsilon(),
            gamma: self.gamma,
            window: self.convergence_window,
            frozen: self.alpha == 0.0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.convergence_tolerance * self.max_step_reward()
    }

    /// Bound on |Q|: largest per-step reward over 1 - gamma.
    pub fn q_bound(&self) -> f64 {
        self.max_step_reward() / (1.0 - self.gamma)
    }
}

/// A peak found by profiling, in learner slots.
#[derive(Clone, Debug, PartialEq)]
pub struct KnownPeak {
    pub start_slot: usize,
    pub len: usize,
    pub shape: ShapeKey,
    pub entry_level: Option<usize>,
}

/// One step of an episode: state row, action, reward, catches.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub catches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub period: usize,
    pub shape: ShapeKey,
    pub entry_level: usize,
    /// True for learning episodes, false for exploitation.
    pub explore: bool,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn catches(&self) -> usize {
        self.steps.iter().map(|s| s.catches).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub period: usize,
    pub from: Phase,
    pub to: Phase,
    pub observation: Observation,
}

/// A partition that became converged.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceEvent {
    pub shape: ShapeKey,
    pub entry_level: usize,
    pub learn_order: usize,
    /// Episodes entered at this level until convergence.
    pub episodes_to_converge: usize,
    /// Learning episodes across all levels and shapes until convergence.
    pub global_episode: usize,
    pub period: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearnerLog {
    pub episodes: Vec<EpisodeRecord>,
    pub transitions: Vec<TransitionRecord>,
    /// Passes needed by each completed Phase-1 run.
    pub phase1_passes: Vec<usize>,
    pub convergence: Vec<ConvergenceEvent>,
    pub learning_episodes: usize,
}

#[derive(Clone, Debug)]
struct Episode {
    peak: usize,
    shape: ShapeKey,
    entry_level: usize,
    explore: bool,
    step: usize,
    state: usize,
    action: usize,
    reward: f64,
    catches: usize,
    max_delta: f64,
    first_touch: bool,
    /// Actions fundable when the current step began.
    affordable: Vec<usize>,
    rows: Vec<(usize, Vec<usize>)>,
    steps: Vec<StepRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SlotMode {
    Asleep,
    Profile(usize),
    Peak,
    Probe,
}

/// Learner state for one run (phase, profile, tables, active episode).
#[derive(Clone, Debug)]
pub struct Learner {
    cfg: LearnerConfig,
    masks: Vec<Vec<bool>>,
    /// Full-step energy cost per action.
    step_costs: Vec<f64>,
    n_slots: usize,
    phase: Phase,
    profile: SlotProfile,
    tables: BTreeMap<ShapeKey, QTable>,
    known_peaks: Vec<KnownPeak>,
    peak_start: Vec<Option<usize>>,
    in_peak: Vec<bool>,
    episode: Option<Episode>,
    mode: SlotMode,
    mask: usize,
    probe_slots: Vec<usize>,
    probe_catches: usize,
    explore_rng: Stream,
    probe_rng: Stream,
    period: usize,
    log: LearnerLog,
}

impl Learner {
    pub fn new(cfg: LearnerConfig, period_ticks: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if period_ticks % cfg.state_duration != 0 {
            return Err(Error::validation(
                "state_duration",
                format!("period {period_ticks} is not a multiple of {}", cfg.state_duration),
            ));
        }
        let n_slots = period_ticks / cfg.state_duration;
        let masks = cfg.actions.masks(cfg.state_duration);
        Ok(Self {
            step_costs: masks
                .iter()
                .map(|m| m.iter().filter(|&&b| b).count() as f64 * WAKE_COST)
                .collect(),
            masks,
            n_slots,
            phase: Phase::Profile,
            profile: SlotProfile::new(n_slots),
            tables: BTreeMap::new(),
            known_peaks: Vec::new(),
            peak_start: vec![None; n_slots],
            in_peak: vec![false; n_slots],
            episode: None,
            mode: SlotMode::Asleep,
            mask: 0,
            probe_slots: Vec::new(),
            probe_catches: 0,
            explore_rng: Stream::named(seed, StreamName::Explore),
            probe_rng: Stream::named(seed, StreamName::Probe),
            period: 0,
            log: LearnerLog::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn profile(&self) -> &SlotProfile {
        &self.profile
    }

    pub fn tables(&self) -> &BTreeMap<ShapeKey, QTable> {
        &self.tables
    }

    pub fn table(&self, shape: &ShapeKey) -> Option<&QTable> {
        self.tables.get(shape)
    }

    /// Seeds a table, e.g. from a serialized warm start.
    pub fn insert_table(&mut self, table: QTable) {
        self.tables.insert(table.shape.clone(), table);
    }

    pub fn known_peaks(&self) -> &[KnownPeak] {
        &self.known_peaks
    }

    pub fn probe_slots(&self) -> &[usize] {
        &self.probe_slots
    }

    pub fn log(&self) -> &LearnerLog {
        &self.log
    }

    pub fn in_episode(&self) -> bool {
        self.episode.is_some()
    }

    /// Whether `shape` may be exploited when entered at `level`.
    pub fn exploitable(&self, shape: &ShapeKey, level: usize) -> bool {
        self.tables.get(shape).is_some_and(|t| match self.cfg.gating {
            Gating::Partitioned => t.partition_converged(level),
            Gating::Monolithic => t.fully_converged(),
        })
    }

    fn transition(&mut self, obs: Observation) {
        let to = phase_transition(self.phase, obs).expect("learner only issues valid observations");
        if to != self.phase {
            self.log.transitions.push(TransitionRecord {
                period: self.period,
                from: self.phase,
                to,
                observation: obs,
            });
        }
        self.phase = to;
    }

    pub fn begin_period(&mut self, period: usize) {
        self.period = period;
        self.probe_catches = 0;
        self.probe_slots = if self.phase == Phase::Exploit {
            probe_plan(&self.in_peak, self.cfg.probe_budget, &mut self.probe_rng)
        } else {
            Vec::new()
        };
    }

    /// Wake decision for in-period tick `t`.
    pub fn decide(&mut self, t: usize, store: &EnergyStore) -> bool {
        let d = self.cfg.state_duration;
        let (slot, off) = (t / d, t % d);
        if off == 0 {
            self.start_slot(slot, store);
        }
        match self.mode {
            SlotMode::Asleep => false,
            _ => self.masks[self.mask][off],
        }
    }

    fn start_slot(&mut self, slot: usize, store: &EnergyStore) {
        self.mode = SlotMode::Asleep;
        if self.phase == Phase::Profile {
            let high = self.masks.len() - 1;
            let cost = self.cfg.max_wakes_per_step() as f64 * WAKE_COST;
            if self
                .profile
                .begin_slot(slot, store.stored(), cost, store.level(self.cfg.k_levels))
            {
                self.mode = SlotMode::Profile(slot);
                self.mask = high;
            }
            return;
        }
        if self.episode.is_none() {
            if let Some(p) = self.peak_start[slot] {
                self.start_episode(p, store);
            }
        }
        if self.episode.is_some() {
            self.choose_step_action(store);
            self.mode = SlotMode::Peak;
        } else if self.probe_slots.contains(&slot) {
            self.mode = SlotMode::Probe;
            self.mask = 1;
        }
    }

    fn start_episode(&mut self, peak: usize, store: &EnergyStore) {
        let k = self.cfg.k_levels;
        let level = store.level(k);
        let shape = self.known_peaks[peak].shape.clone();
        self.known_peaks[peak].entry_level = Some(level);
        let n = self.cfg.n_actions();
        self.tables
            .entry(shape.clone())
            .or_insert_with(|| QTable::new(shape.clone(), k, n));
        let learned = self.exploitable(&shape, level);
        if self.phase == Phase::Exploit && !learned {
            self.transition(Observation::UnlearnedEntry);
        }
        let state = get_state(level, 1, k, shape.len()).expect("level and step in range");
        self.episode = Some(Episode {
            peak,
            shape,
            entry_level: level,
            explore: !learned,
            step: 0,
            state,
            action: 0,
            reward: 0.0,
            catches: 0,
            max_delta: 0.0,
            first_touch: false,
            affordable: Vec::new(),
            rows: Vec::new(),
            steps: Vec::new(),
        });
    }

    fn choose_step_action(&mut self, store: &EnergyStore) {
        let aff = affordable_actions(&self.step_costs, store.stored(), self.cfg.affordability);
        let ep = self.episode.as_mut().expect("active episode");
        ep.action = if ep.explore {
            let table = &self.tables[&ep.shape];
            let (eps, gamma) = (self.cfg.epsilon(), self.cfg.gamma);
            let unsettled: Vec<usize> = aff
                .iter()
                .copied()
                .filter(|&a| !table.is_settled(ep.state, a, eps, gamma))
                .collect();
            choose_explore(
                if unsettled.is_empty() { &aff } else { &unsettled },
                &mut self.explore_rng,
            )
        } else {
            choose_exploit(&self.tables[&ep.shape], ep.state, &aff)
        };
        ep.reward = 0.0;
        ep.catches = 0;
        ep.affordable = aff;
        self.mask = ep.action;
    }

    /// Feedback for tick `t`: `caught` is `Some(event)` when the node was
    /// awake and `None` otherwise.
    pub fn observe(&mut self, t: usize, caught: Option<bool>, store: &EnergyStore) {
        let d = self.cfg.state_duration;
        match self.mode {
            SlotMode::Asleep => {}
            SlotMode::Profile(slot) => {
                if caught == Some(true) {
                    self.profile.record_catch(slot);
                }
            }
            SlotMode::Probe => {
                if caught == Some(true) {
                    self.probe_catches += 1;
                }
            }
            SlotMode::Peak => {
                if let Some(ev) = caught {
                    let ep = self.episode.as_mut().expect("active episode");
                    if ev {
                        ep.reward += self.cfg.reward_catch;
                        ep.catches += 1;
                    } else {
                        ep.reward += self.cfg.reward_miss;
                    }
                }
                if t % d == d - 1 {
                    self.finish_step(store);
                }
            }
        }
    }

    fn finish_step(&mut self, store: &EnergyStore) {
        let k = self.cfg.k_levels;
        let level = store.level(k);
        let mut ep = self.episode.take().expect("active episode");
        let t_len = ep.shape.len();
        let next = (ep.step + 1 < t_len).then(|| get_state(level, ep.step + 2, k, t_len).expect("in range"));
        if ep.explore {
            let table = self.tables.get_mut(&ep.shape).expect("table exists");
            let aff = affordable_actions(&self.step_costs, store.stored(), self.cfg.affordability);
            let out = q_update(
                table,
                ep.state,
                ep.action,
                ep.reward,
                next.map(|s| (s, aff.as_slice())),
                &self.cfg,
            );
            ep.max_delta = ep.max_delta.max(out.delta.abs());
            ep.first_touch |= out.first_touch && self.cfg.alpha > 0.0;
            ep.rows.push((ep.state, std::mem::take(&mut ep.affordable)));
        }
        ep.steps.push(StepRecord {
            state: ep.state,
            action: ep.action,
            reward: ep.reward,
            catches: ep.catches,
        });
        match next {
            Some(s) => {
                ep.step += 1;
                ep.state = s;
                self.episode = Some(ep);
            }
            None => self.finish_episode(ep),
        }
    }

    fn finish_episode(&mut self, ep: Episode) {
        if ep.explore {
            self.log.learning_episodes += 1;
            let rule = self.cfg.convergence_rule();
            let table = self.tables.get_mut(&ep.shape).expect("table exists");
            if table.record_episode(ep.entry_level, ep.max_delta, ep.first_touch, &ep.rows, &rule) {
                let p = table.partition(ep.entry_level);
                self.log.convergence.push(ConvergenceEvent {
                    shape: ep.shape.clone(),
                    entry_level: ep.entry_level,
                    learn_order: p.learn_order.unwrap_or(0),
                    episodes_to_converge: p.episodes_to_converge.unwrap_or(0),
                    global_episode: self.log.learning_episodes,
                    period: self.period,
                });
            }
        }
        let _ = ep.peak;
        self.log.episodes.push(EpisodeRecord {
            period: self.period,
            shape: ep.shape,
            entry_level: ep.entry_level,
            explore: ep.explore,
            steps: ep.steps,
        });
        self.mode = SlotMode::Asleep;
    }

    /// Period boundary: applies the phase transitions that are decided per period.
    pub fn end_period(&mut self) {
        self.mode = SlotMode::Asleep;
        match self.phase {
            Phase::Profile => {
                if self.profile.end_pass() && profile_converged(&self.profile, &self.cfg.profile) {
                    self.log.phase1_passes.push(self.profile.passes);
                    self.install_peaks();
                    let all_learned = !self.known_peaks.is_empty()
                        && self
                            .known_peaks
                            .iter()
                            .all(|p| p.entry_level.is_some_and(|l| self.exploitable(&p.shape, l)));
                    self.transition(Observation::ProfileConverged { all_learned });
                }
            }
            Phase::Learn => {
                let done = self
                    .known_peaks
                    .iter()
                    .all(|p| p.entry_level.is_some_and(|l| self.exploitable(&p.shape, l)));
                if done {
                    self.transition(Observation::PartitionConverged);
                }
            }
            Phase::Exploit => {
                if self.probe_catches >= self.cfg.probe_trigger {
                    self.transition(Observation::ProbeCaught);
                    self.reset_profile();
                } else {
                    self.transition(Observation::ProbeQuiet);
                }
            }
        }
    }

    fn install_peaks(&mut self) {
        let mean = self.profile.current_mean();
        let peaks = extract_peaks(&mean, self.cfg.noise_floor, self.cfg.max_peak_steps());
        self.known_peaks.clear();
        self.peak_start = vec![None; self.n_slots];
        self.in_peak = vec![false; self.n_slots];
        for (start, len) in peaks {
            let Ok(shape) = classify_shape(&mean[start..start + len], self.cfg.theta, self.cfg.noise_floor) else {
                continue;
            };
            self.peak_start[start] = Some(self.known_peaks.len());
            self.in_peak[start..start + len].fill(true);
            self.known_peaks.push(KnownPeak {
                start_slot: start,
                len,
                shape,
                entry_level: self.profile.slot_levels[start],
            });
        }
    }

    fn reset_profile(&mut self) {
        self.profile = SlotProfile::new(self.n_slots);
        self.known_peaks.clear();
        self.peak_start = vec![None; self.n_slots];
        self.in_peak = vec![false; self.n_slots];
        self.episode = None;
    }
}
