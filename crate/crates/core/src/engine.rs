//! The per-second simulation loop, metrics and multi-period experiments.

use crate::energy::{harvest_tick, level_upper_bound, CapacitorArray, EnergyStore, HarvestSource, WAKE_COST};
use crate::error::{Error, Result};
use crate::learner::{Learner, LearnerConfig, LearnerLog, Phase, ShapeKey};
use crate::policies::{build_policy, Policy, PolicyConfig, PolicyKind};
use crate::rng::{word_at, Stream, StreamName};
use crate::world::{build_pattern, sample_trace_from, EventPattern, EventTrace, PatternSpec, PeakDecl};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoreKind {
    Abstract,
    Array,
}

impl StoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StoreKind::Abstract => "abstract",
            StoreKind::Array => "array",
        }
    }
}

/// How the stored energy is set when a peak begins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryPlan {
    /// Natural dynamics.
    Free,
    /// Every peak is entered at this level.
    Fixed(usize),
    /// Levels 1..=K in a shuffled order, each held until its partition converges.
    Sequential,
    /// A uniformly drawn level in 1..=K each period.
    Random,
}

impl EntryPlan {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" | "free" => Ok(EntryPlan::Free),
            "sequential" => Ok(EntryPlan::Sequential),
            "random" => Ok(EntryPlan::Random),
            _ => s
                .parse::<usize>()
                .map(EntryPlan::Fixed)
                .map_err(|_| Error::validation("entry_level", "expected none, sequential, random or a level number")),
        }
    }
}

impl std::fmt::Display for EntryPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntryPlan::Free => f.write_str("none"),
            EntryPlan::Fixed(k) => write!(f, "{k}"),
            EntryPlan::Sequential => f.write_str("sequential"),
            EntryPlan::Random => f.write_str("random"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyConfig {
    pub kind: StoreKind,
    pub capacity: f64,
    pub charging_ratio: f64,
    pub initial_stored: f64,
    pub source: HarvestSource,
    pub entry: EntryPlan,
    /// Capacitor preset for the array store.
    pub preset: String,
    pub v_max: f64,
    pub v_activate: f64,
    pub unit_joules: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            kind: StoreKind::Abstract,
            capacity: 120.0,
            charging_ratio: 9.0,
            initial_stored: 0.0,
            source: HarvestSource::Constant(1.0),
            entry: EntryPlan::Free,
            preset: "image".into(),
            v_max: 3.3,
            v_activate: 2.8,
            unit_joules: 0.01,
        }
    }
}

impl EnergyConfig {
    pub fn build_store(&self) -> Result<EnergyStore> {
        self.source.validate()?;
        match self.kind {
            StoreKind::Abstract => EnergyStore::abstract_store(self.capacity, self.charging_ratio, self.initial_stored),
            StoreKind::Array => {
                let preset = CapacitorArray::preset(&self.preset)?;
                let caps = preset.capacitors().iter().map(|c| c.capacitance()).collect();
                let array = CapacitorArray::new(caps, self.v_activate, self.v_max)?;
                let mut s = EnergyStore::array_store(array, self.charging_ratio, self.unit_joules)?;
                if self.initial_stored > s.capacity() {
                    return Err(Error::validation("initial_stored", "exceeds the array capacity"));
                }
                s.set_stored(self.initial_stored);
                Ok(s)
            }
        }
    }
}

/// A stretch of periods with its own peaks and entry plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub peaks: Vec<PeakDecl>,
    pub entry: EntryPlan,
    pub periods: usize,
}

impl Segment {
    /// Parses `type1@10/E4/80` (peaks joined with `+`, entry `E<k>` or `E-`).
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        let err = || Error::validation("segments", format!("`{s}` should look like type1@10/E4/80"));
        if parts.len() != 3 {
            return Err(err());
        }
        let peaks = parts[0].split('+').map(PeakDecl::parse).collect::<Result<Vec<_>>>()?;
        let entry = match parts[1].strip_prefix('E').ok_or_else(err)? {
            "-" => EntryPlan::Free,
            k => EntryPlan::Fixed(k.parse().map_err(|_| err())?),
        };
        let periods = parts[2].parse().map_err(|_| err())?;
        Ok(Self { peaks, entry, periods })
    }
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let peaks: Vec<String> = self.peaks.iter().map(|p| p.to_string()).collect();
        let entry = match self.entry {
            EntryPlan::Fixed(k) => format!("E{k}"),
            _ => "E-".into(),
        };
        write!(f, "{}/{}/{}", peaks.join("+"), entry, self.periods)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordLevel {
    Summary,
    PerTick,
}

impl RecordLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordLevel::Summary => "summary",
            RecordLevel::PerTick => "per-tick",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// Run all `n_periods`.
    Fixed,
    /// Stop once the policy has been in phase 3 for this many whole periods.
    Phase3Stable(usize),
    /// Stop when the first profiling run converges.
    Phase1Converged,
    /// Stop when every entry level of a sequential plan has converged.
    EntriesConverged,
}

impl StopRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(StopRule::Fixed),
            "phase1" => Ok(StopRule::Phase1Converged),
            "entries" => Ok(StopRule::EntriesConverged),
            _ => match s.strip_prefix("phase3-stable:") {
                Some(m) => m
                    .parse()
                    .map(StopRule::Phase3Stable)
                    .map_err(|_| Error::validation("stop", "bad period count")),
                None => Err(Error::validation(
                    "stop",
                    "expected fixed, phase1, entries or phase3-stable:<m>",
                )),
            },
        }
    }
}

impl std::fmt::Display for StopRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopRule::Fixed => f.write_str("fixed"),
            StopRule::Phase3Stable(m) => write!(f, "phase3-stable:{m}"),
            StopRule::Phase1Converged => f.write_str("phase1"),
            StopRule::EntriesConverged => f.write_str("entries"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub name: String,
    pub seed: u64,
    /// Period cap; ignored when segments are given (their lengths add up).
    pub n_periods: usize,
    pub record_level: RecordLevel,
    /// Trailing periods used for summary metrics; 0 means every period.
    pub eval_periods: usize,
    pub stop: StopRule,
    pub pattern: PatternSpec,
    pub segments: Vec<Segment>,
    pub energy: EnergyConfig,
    pub learner: LearnerConfig,
    pub policy: PolicyConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            n_periods: 200,
            record_level: RecordLevel::Summary,
            eval_periods: 0,
            stop: StopRule::Phase3Stable(5),
            pattern: PatternSpec::default(),
            segments: Vec::new(),
            energy: EnergyConfig::default(),
            learner: LearnerConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn total_periods(&self) -> usize {
        if self.segments.is_empty() {
            self.n_periods
        } else {
            self.segments.iter().map(|s| s.periods).sum()
        }
    }

    /// Patterns per segment (one entry when no segments are configured).
    pub fn patterns(&self) -> Result<Vec<(EventPattern, EntryPlan, usize)>> {
        if self.segments.is_empty() {
            return Ok(vec![(build_pattern(&self.pattern)?, self.energy.entry, self.n_periods)]);
        }
        self.segments
            .iter()
            .map(|seg| {
                let spec = PatternSpec {
                    peaks: seg.peaks.clone(),
                    ..self.pattern.clone()
                };
                Ok((build_pattern(&spec)?, seg.entry, seg.periods))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let patterns = self.patterns()?;
        self.learner.validate()?;
        if self.pattern.period_ticks % self.learner.state_duration != 0 {
            return Err(Error::validation(
                "state_duration",
                "learner slots must divide the period",
            ));
        }
        let store = self.energy.build_store()?;
        self.policy.ctid.validate(store.capacity())?;
        for (_, entry, _) in &patterns {
            if let EntryPlan::Fixed(k) = entry {
                if !(1..=self.learner.k_levels).contains(k) {
                    return Err(Error::validation(
                        "entry_level",
                        format!("must lie in 1..={}", self.learner.k_levels),
                    ));
                }
            }
        }
        if self.eval_periods > self.total_periods() {
            return Err(Error::validation("eval_periods", "exceeds the number of periods"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickRecord {
    pub awake: bool,
    pub event: bool,
    pub drawn: f64,
    pub harvested: f64,
    pub stored: f64,
    pub phase: Option<Phase>,
    pub slot: usize,
    /// Step within the world's peak, 1-based.
    pub step: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeriodLog {
    pub period: usize,
    pub segment: usize,
    pub phase_start: Option<Phase>,
    pub phase_end: Option<Phase>,
    pub awake_ticks: usize,
    pub event_ticks: usize,
    pub catches: usize,
    /// Wake-ups the store could not fund.
    pub skipped_wakes: usize,
    pub no_event_wakeups: usize,
    pub drawn: f64,
    /// Energy counted as spent (drawn, or one wake cost per awake tick for oracles).
    pub spent: f64,
    pub spent_on_events: f64,
    pub harvested: f64,
    pub wasted_saturation: f64,
    pub redistribution_loss: f64,
    /// Signed change from pinning entry levels.
    pub entry_adjust: f64,
    pub stored_start: f64,
    pub stored_end: f64,
    pub ticks: Vec<TickRecord>,
}

impl PeriodLog {
    pub fn misses(&self) -> usize {
        self.event_ticks - self.catches
    }

    /// stored_start + harvested - drawn - wasted - losses + entry_adjust.
    pub fn ledger_end(&self) -> f64 {
        self.stored_start + self.harvested - self.drawn - self.wasted_saturation - self.redistribution_loss
            + self.entry_adjust
    }
}

/// Mutable state of one run between periods.
pub struct RunState {
    pub store: EnergyStore,
    pub policy: Box<dyn Policy>,
    pub source: HarvestSource,
    pub k_levels: usize,
    pub record: RecordLevel,
}

/// Entry level forced on the store at the given ticks of a period.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryPin {
    pub level: usize,
    pub ticks: Vec<usize>,
}

impl EntryPin {
    /// Pins `level` at every peak start of `pattern`.
    pub fn at_peaks(level: usize, pattern: &EventPattern) -> Self {
        Self {
            level,
            ticks: pattern.peak_start_ticks(),
        }
    }
}

/// Simulates one period. Pinning applies to event-aware policies once they
/// have left profiling.
pub fn run_period(
    state: &mut RunState,
    pattern: &EventPattern,
    trace: &EventTrace,
    period: usize,
    entry: Option<&EntryPin>,
) -> PeriodLog {
    let p = pattern.period_ticks;
    let first = (period * p) as u64;
    let pin = entry.filter(|_| state.policy.event_aware() && state.policy.phase() != Some(Phase::Profile));
    let debits = state.policy.debits_energy();
    let mut log = PeriodLog {
        period,
        phase_start: state.policy.phase(),
        stored_start: state.store.stored(),
        ..PeriodLog::default()
    };
    state.policy.begin_period(period);
    for t in 0..p {
        if let Some(pin) = pin {
            if pin.ticks.contains(&t) {
                let target = level_upper_bound(pin.level, state.store.capacity(), state.k_levels);
                log.entry_adjust += state.store.set_stored(target);
            }
        }
        let event = trace.bits()[t];
        if event {
            log.event_ticks += 1;
        }
        let want = state.policy.decide(t, &state.store);
        let mut awake = false;
        let mut drawn = 0.0;
        if want {
            if !debits {
                awake = true;
            } else if state.store.draw(WAKE_COST).is_ok() {
                awake = true;
                drawn = WAKE_COST;
            } else {
                log.skipped_wakes += 1;
            }
        }
        let mut harvested = 0.0;
        if !awake {
            let f = harvest_tick(&mut state.store, &state.source, first + t as u64);
            harvested = f.harvested;
            log.harvested += f.harvested;
            log.wasted_saturation += f.wasted_saturation;
            log.redistribution_loss += f.redistribution_loss;
        }
        if awake {
            let spent = if debits { drawn } else { WAKE_COST };
            log.awake_ticks += 1;
            log.drawn += drawn;
            log.spent += spent;
            if event {
                log.catches += 1;
                log.spent_on_events += spent;
            } else {
                log.no_event_wakeups += 1;
            }
        }
        state.policy.observe(t, awake.then_some(event), &state.store);
        if state.record == RecordLevel::PerTick {
            let slot = t / pattern.state_duration;
            let step = pattern
                .peaks
                .iter()
                .find(|pk| (pk.start_slot..pk.end_slot()).contains(&slot))
                .map(|pk| slot - pk.start_slot + 1);
            log.ticks.push(TickRecord {
                awake,
                event,
                drawn,
                harvested,
                stored: state.store.stored(),
                phase: state.policy.phase(),
                slot,
                step,
            });
        }
    }
    state.policy.end_period();
    log.phase_end = state.policy.phase();
    log.stored_end = state.store.stored();
    log
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub periods: usize,
    pub total_catches: usize,
    pub energy_efficiency: f64,
    pub awake_ticks: usize,
    pub event_ticks: usize,
    pub drawn: f64,
    pub spent: f64,
    /// Periods started in phase 1, 2 and 3.
    pub phase_periods: [usize; 3],
}

impl Metrics {
    pub fn catches_per_period(&self) -> f64 {
        if self.periods == 0 {
            0.0
        } else {
            self.total_catches as f64 / self.periods as f64
        }
    }

    pub fn per_period(&self, x: usize) -> f64 {
        if self.periods == 0 {
            0.0
        } else {
            x as f64 / self.periods as f64
        }
    }
}

pub fn compute_metrics(logs: &[PeriodLog]) -> Metrics {
    let mut m = Metrics {
        periods: logs.len(),
        ..Metrics::default()
    };
    let mut on_events = 0.0;
    for l in logs {
        m.total_catches += l.catches;
        m.awake_ticks += l.awake_ticks;
        m.event_ticks += l.event_ticks;
        m.drawn += l.drawn;
        m.spent += l.spent;
        on_events += l.spent_on_events;
        if let Some(ph) = l.phase_start {
            m.phase_periods[ph.number() as usize - 1] += 1;
        }
    }
    m.energy_efficiency = if m.spent > 0.0 { on_events / m.spent } else { 0.0 };
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSpan {
    pub start: usize,
    pub end: usize,
    pub entry: EntryPlan,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub name: String,
    pub seed: u64,
    pub policy: PolicyKind,
    pub charging_ratio: f64,
    pub periods: Vec<PeriodLog>,
    pub segments: Vec<SegmentSpan>,
    /// Entry levels of a sequential plan, in the order they were held.
    pub entry_order: Vec<usize>,
    pub learner: Option<Learner>,
    /// Passes per completed profiling run (SmartON or CTIDpro).
    pub phase1_passes: Vec<usize>,
    pub eval_periods: usize,
}

impl ExperimentResult {
    pub fn learner_log(&self) -> Option<&LearnerLog> {
        self.learner.as_ref().map(|l| l.log())
    }

    /// Metrics over the evaluation window (trailing `eval_periods`, or all).
    pub fn eval_metrics(&self) -> Metrics {
        let n = self.periods.len();
        let k = if self.eval_periods == 0 {
            n
        } else {
            self.eval_periods.min(n)
        };
        compute_metrics(&self.periods[n - k..])
    }

    pub fn metrics(&self) -> Metrics {
        compute_metrics(&self.periods)
    }

    /// Learning episodes that started inside a segment.
    pub fn learning_episodes_in(&self, seg: &SegmentSpan) -> usize {
        self.learner_log().map_or(0, |log| {
            log.episodes
                .iter()
                .filter(|e| e.explore && (seg.start..seg.end).contains(&e.period))
                .count()
        })
    }

    /// Periods from the segment start until the policy, having left phase 3
    /// (or never been there), next starts a period in phase 3.
    pub fn periods_to_phase3(&self, seg: &SegmentSpan) -> Option<usize> {
        let logs = &self.periods[seg.start.min(self.periods.len())..seg.end.min(self.periods.len())];
        let left = logs.iter().position(|l| l.phase_start != Some(Phase::Exploit))?;
        logs[left..]
            .iter()
            .position(|l| l.phase_start == Some(Phase::Exploit))
            .map(|i| left + i)
    }

    /// First period index (absolute) at which the policy starts in phase 3
    /// after `from`, having left phase 3 first.
    pub fn phase3_entry_after(&self, seg: &SegmentSpan) -> Option<usize> {
        self.periods_to_phase3(seg).map(|i| seg.start + i)
    }
}

fn entry_order(k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=k).collect();
    Stream::named(seed, StreamName::Shuffle).shuffle(&mut order);
    order
}

pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let patterns = cfg.patterns()?;
    let period_ticks = cfg.pattern.period_ticks;
    let policy = build_policy(&cfg.policy, &cfg.learner, period_ticks, cfg.seed)?;
    let mut state = RunState {
        store: cfg.energy.build_store()?,
        policy,
        source: cfg.energy.source.clone(),
        k_levels: cfg.learner.k_levels,
        record: cfg.record_level,
    };
    let mut spans = Vec::new();
    let mut start = 0;
    for (_, entry, n) in &patterns {
        spans.push(SegmentSpan {
            start,
            end: start + n,
            entry: *entry,
        });
        start += n;
    }
    let order = entry_order(cfg.learner.k_levels, cfg.seed);
    let entry_key = Stream::named(cfg.seed, StreamName::Entry).key();
    let mut order_idx = 0;
    let mut used_order = Vec::new();
    let mut logs: Vec<PeriodLog> = Vec::new();
    // A segment's entry level applies once the node has re-profiled in it.
    // Until then the previous segment's pin stays, so the stale peak keeps
    // the conditions it was learned under.
    let mut carried: Option<EntryPin> = None;
    'outer: for (seg_idx, (pattern, entry, _)) in patterns.iter().enumerate() {
        let span = spans[seg_idx].clone();
        let mut profiled = carried.is_none();
        for period in span.start..span.end {
            let pin = match entry {
                EntryPlan::Free => None,
                EntryPlan::Fixed(k) => Some(*k),
                EntryPlan::Sequential => {
                    if used_order.last() != Some(&order[order_idx]) {
                        used_order.push(order[order_idx]);
                    }
                    Some(order[order_idx])
                }
                EntryPlan::Random => {
                    let word = word_at(entry_key, period as u64);
                    Some(1 + ((u128::from(word) * cfg.learner.k_levels as u128) >> 64) as usize)
                }
            };
            profiled |= state.policy.phase() == Some(Phase::Profile);
            let own = pin.map(|level| EntryPin::at_peaks(level, pattern));
            let applied = if profiled { own } else { carried.clone() };
            let trace = sample_trace_from(pattern, cfg.seed, period, 1);
            let mut log = run_period(&mut state, pattern, &trace, period, applied.as_ref());
            log.segment = seg_idx;
            profiled |= log.phase_end == Some(Phase::Profile);
            logs.push(log);
            if profiled {
                carried = applied;
            }

            if *entry == EntryPlan::Sequential {
                if let (Some(level), Some(l)) = (pin, state.policy.learner()) {
                    if l.tables().values().any(|t| t.partition_converged(level)) {
                        order_idx += 1;
                        if order_idx == order.len() {
                            if cfg.stop == StopRule::EntriesConverged {
                                break 'outer;
                            }
                            order_idx = 0;
                        }
                    }
                }
            }
            let stop = match cfg.stop {
                StopRule::Fixed | StopRule::EntriesConverged => false,
                StopRule::Phase1Converged => !state.policy.phase1_passes().is_empty(),
                StopRule::Phase3Stable(m) => {
                    m > 0
                        && logs.len() >= m
                        && logs[logs.len() - m..]
                            .iter()
                            .all(|l| l.phase_start == Some(Phase::Exploit) && l.phase_end == Some(Phase::Exploit))
                }
            };
            if stop {
                break 'outer;
            }
        }
    }
    let phase1 = state.policy.phase1_passes();
    Ok(ExperimentResult {
        name: cfg.name.clone(),
        seed: cfg.seed,
        policy: cfg.policy.kind,
        charging_ratio: cfg.energy.charging_ratio,
        periods: logs,
        segments: spans,
        entry_order: used_order,
        learner: state.policy.learner().cloned(),
        phase1_passes: phase1,
        eval_periods: cfg.eval_periods,
    })
}

/// Per-entry-level convergence of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryConvergence {
    pub shape: ShapeKey,
    pub entry_level: usize,
    pub learn_order: usize,
    pub episodes_to_converge: usize,
    pub global_episode: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceStats {
    pub entries: Vec<EntryConvergence>,
    pub phase1_passes: Vec<usize>,
    pub learning_episodes: usize,
}

pub fn convergence_stats(result: &ExperimentResult) -> ConvergenceStats {
    let mut stats = ConvergenceStats {
        phase1_passes: result.phase1_passes.clone(),
        ..ConvergenceStats::default()
    };
    if let Some(log) = result.learner_log() {
        stats.learning_episodes = log.learning_episodes;
        stats.entries = log
            .convergence
            .iter()
            .map(|c| EntryConvergence {
                shape: c.shape.clone(),
                entry_level: c.entry_level,
                learn_order: c.learn_order,
                episodes_to_converge: c.episodes_to_converge,
                global_episode: c.global_episode,
            })
            .collect();
    }
    stats
}
