//! Periodic event-arrival patterns and sampled per-second event traces.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::{stream_key, unit_f64, word_at, StreamName};

/// Probability class of one peak step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepClass {
    H,
    L,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeName {
    /// Bell: low, high..., low.
    Type1,
    /// Uniform: all high.
    Type2,
    /// Front-loaded: high then lows.
    Type3,
    /// Back-loaded: lows then high.
    Type4,
    Custom,
}

impl ShapeName {
    pub const CANONICAL: [ShapeName; 4] = [ShapeName::Type1, ShapeName::Type2, ShapeName::Type3, ShapeName::Type4];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeName::Type1 => "type1",
            ShapeName::Type2 => "type2",
            ShapeName::Type3 => "type3",
            ShapeName::Type4 => "type4",
            ShapeName::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "type1" => Ok(ShapeName::Type1),
            "type2" => Ok(ShapeName::Type2),
            "type3" => Ok(ShapeName::Type3),
            "type4" => Ok(ShapeName::Type4),
            "custom" => Ok(ShapeName::Custom),
            _ => Err(Error::InvalidSpec(format!("unknown event type `{s}`"))),
        }
    }

    /// Step sequence of a canonical shape with `t` steps.
    pub fn steps(self, t: usize) -> Result<Vec<StepClass>> {
        use StepClass::{H, L};
        if t == 0 {
            return Err(Error::InvalidSpec("zero-length peak".into()));
        }
        let v = match self {
            ShapeName::Type1 => {
                if t < 3 {
                    return Err(Error::InvalidSpec("type1 needs at least 3 steps".into()));
                }
                (0..t).map(|i| if i == 0 || i == t - 1 { L } else { H }).collect()
            }
            ShapeName::Type2 => vec![H; t],
            ShapeName::Type3 => (0..t).map(|i| if i == 0 { H } else { L }).collect(),
            ShapeName::Type4 => (0..t).map(|i| if i == t - 1 { H } else { L }).collect(),
            ShapeName::Custom => return Err(Error::InvalidSpec("custom shapes need explicit steps".into())),
        };
        Ok(v)
    }
}

impl fmt::Display for ShapeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parses an `H`/`L` signature such as `LHL`.
pub fn parse_steps(s: &str) -> Result<Vec<StepClass>> {
    s.chars()
        .map(|c| match c {
            'H' | 'h' => Ok(StepClass::H),
            'L' | 'l' => Ok(StepClass::L),
            _ => Err(Error::InvalidSpec(format!("bad step class `{c}` in `{s}`"))),
        })
        .collect()
}

pub fn steps_string(steps: &[StepClass]) -> String {
    steps
        .iter()
        .map(|s| match s {
            StepClass::H => 'H',
            StepClass::L => 'L',
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakSpec {
    pub start_slot: usize,
    pub steps: Vec<StepClass>,
    pub shape_name: ShapeName,
}

impl PeakSpec {
    pub fn canonical(shape: ShapeName, start_slot: usize, t: usize) -> Result<Self> {
        Ok(Self {
            start_slot,
            steps: shape.steps(t)?,
            shape_name: shape,
        })
    }

    pub fn end_slot(&self) -> usize {
        self.start_slot + self.steps.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventPattern {
    pub period_ticks: usize,
    pub state_duration: usize,
    pub peaks: Vec<PeakSpec>,
    pub p_high: f64,
    pub p_low: f64,
    /// Per-second probability outside every peak.
    pub background_rate: f64,
    pub max_peak_steps: usize,
}

/// Peak declaration used to build a pattern: a canonical shape or explicit steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakDecl {
    pub shape: ShapeName,
    /// Required for [`ShapeName::Custom`]; overrides the canonical steps otherwise.
    pub steps: Option<Vec<StepClass>>,
    pub start_slot: usize,
}

impl PeakDecl {
    pub fn new(shape: ShapeName, start_slot: usize) -> Self {
        Self {
            shape,
            steps: None,
            start_slot,
        }
    }

    /// Parses `type1@10` or `LHHL@12`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, slot) = s
            .trim()
            .split_once('@')
            .ok_or_else(|| Error::InvalidSpec(format!("peak `{s}` must look like type1@10")))?;
        let start_slot = slot
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad start slot in `{s}`")))?;
        let name = name.trim();
        if name.starts_with("type") {
            Ok(Self::new(ShapeName::parse(name)?, start_slot))
        } else {
            Ok(Self {
                shape: ShapeName::Custom,
                steps: Some(parse_steps(name)?),
                start_slot,
            })
        }
    }
}

impl fmt::Display for PeakDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.steps, self.shape) {
            (Some(steps), _) => write!(f, "{}@{}", steps_string(steps), self.start_slot),
            (None, shape) => write!(f, "{}@{}", shape, self.start_slot),
        }
    }
}

/// Scenario fields that determine a pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternSpec {
    pub period_ticks: usize,
    pub state_duration: usize,
    pub p_high: f64,
    pub p_low: f64,
    pub background_rate: f64,
    pub peak_max_duration: usize,
    /// Steps per canonical peak.
    pub peak_steps: usize,
    pub peaks: Vec<PeakDecl>,
}

impl Default for PatternSpec {
    fn default() -> Self {
        Self {
            period_ticks: 1200,
            state_duration: 30,
            p_high: 0.8,
            p_low: 0.2,
            background_rate: 0.0,
            peak_max_duration: 120,
            peak_steps: 3,
            peaks: vec![PeakDecl::new(ShapeName::Type1, 10)],
        }
    }
}

pub fn build_pattern(spec: &PatternSpec) -> Result<EventPattern> {
    if spec.state_duration == 0 || spec.period_ticks == 0 {
        return Err(Error::InvalidSpec("period and state duration must be positive".into()));
    }
    if spec.period_ticks % spec.state_duration != 0 {
        return Err(Error::InvalidSpec(format!(
            "period {} is not a multiple of state duration {}",
            spec.period_ticks, spec.state_duration
        )));
    }
    let max_peak_steps = (spec.peak_max_duration / spec.state_duration).max(1);
    let peaks = spec
        .peaks
        .iter()
        .map(|d| match (&d.steps, d.shape) {
            (Some(steps), shape) => Ok(PeakSpec {
                start_slot: d.start_slot,
                steps: steps.clone(),
                shape_name: shape,
            }),
            (None, shape) => PeakSpec::canonical(shape, d.start_slot, spec.peak_steps),
        })
        .collect::<Result<Vec<_>>>()?;
    let pattern = EventPattern {
        period_ticks: spec.period_ticks,
        state_duration: spec.state_duration,
        peaks,
        p_high: spec.p_high,
        p_low: spec.p_low,
        background_rate: spec.background_rate,
        max_peak_steps,
    };
    pattern.validate()?;
    Ok(pattern)
}

impl EventPattern {
    pub fn n_slots(&self) -> usize {
        self.period_ticks / self.state_duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_low) || !(0.0..=1.0).contains(&self.p_high) {
            return Err(Error::InvalidSpec("probabilities must lie in [0, 1]".into()));
        }
        if !(self.p_low < self.p_high) && !(self.p_low == 0.0 && self.p_high == 0.0) {
            return Err(Error::InvalidSpec("need p_low < p_high".into()));
        }
        if !(0.0..=1.0).contains(&self.background_rate) {
            return Err(Error::InvalidSpec("background_rate must lie in [0, 1]".into()));
        }
        let n = self.n_slots();
        let mut used = vec![false; n];
        for p in &self.peaks {
            if p.steps.is_empty() {
                return Err(Error::InvalidSpec("zero-length peak".into()));
            }
            if p.steps.len() > self.max_peak_steps {
                return Err(Error::InvalidSpec(format!(
                    "peak of {} steps exceeds the maximum of {}",
                    p.steps.len(),
                    self.max_peak_steps
                )));
            }
            if !p.steps.contains(&StepClass::H) {
                return Err(Error::InvalidSpec("a peak needs at least one H step".into()));
            }
            if p.end_slot() > n {
                return Err(Error::InvalidSpec(format!(
                    "peak at slot {} leaves the period",
                    p.start_slot
                )));
            }
            for s in p.start_slot..p.end_slot() {
                if used[s] {
                    return Err(Error::InvalidSpec(format!("peaks overlap at slot {s}")));
                }
                used[s] = true;
            }
        }
        Ok(())
    }

    /// Class of `slot`, if it lies in a peak.
    pub fn slot_class(&self, slot: usize) -> Option<StepClass> {
        self.peaks
            .iter()
            .find(|p| (p.start_slot..p.end_slot()).contains(&slot))
            .map(|p| p.steps[slot - p.start_slot])
    }

    /// Event probability at in-period tick `t`.
    pub fn prob_at(&self, t: usize) -> f64 {
        match self.slot_class((t % self.period_ticks) / self.state_duration) {
            Some(StepClass::H) => self.p_high,
            Some(StepClass::L) => self.p_low,
            None => self.background_rate,
        }
    }

    /// Per-tick probabilities for one period.
    pub fn schedule(&self) -> Vec<f64> {
        (0..self.period_ticks).map(|t| self.prob_at(t)).collect()
    }

    /// In-period ticks at which a peak begins.
    pub fn peak_start_ticks(&self) -> Vec<usize> {
        self.peaks.iter().map(|p| p.start_slot * self.state_duration).collect()
    }

    pub fn expected_events_per_period(&self) -> f64 {
        self.schedule().iter().sum()
    }
}

/// Moves every peak by `delta_slots`.
pub fn shift_pattern(pattern: &EventPattern, delta_slots: isize) -> Result<EventPattern> {
    let mut out = pattern.clone();
    for p in &mut out.peaks {
        let s = p.start_slot as isize + delta_slots;
        if s < 0 {
            return Err(Error::InvalidSpec("shifted peak leaves the period".into()));
        }
        p.start_slot = s as usize;
    }
    out.validate()?;
    Ok(out)
}

/// Replaces the steps of peak `index` with the canonical `shape`, keeping its length.
pub fn morph_pattern(pattern: &EventPattern, index: usize, shape: ShapeName) -> Result<EventPattern> {
    let mut out = pattern.clone();
    let peak = out
        .peaks
        .get_mut(index)
        .ok_or_else(|| Error::InvalidSpec(format!("no peak {index} to morph")))?;
    peak.steps = shape.steps(peak.steps.len())?;
    peak.shape_name = shape;
    out.validate()?;
    Ok(out)
}

/// One sampled realization of a pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventTrace {
    occurrences: Vec<bool>,
    pub seed: u64,
    pub period_ticks: usize,
    pub pattern_id: String,
}

/// Event bit at absolute tick `g` of the trace stream keyed by `key`.
#[inline]
pub fn event_bit(key: u64, g: u64, p: f64) -> bool {
    p > 0.0 && unit_f64(word_at(key, g)) < p
}

/// Samples `n_periods` periods. The bit at absolute tick `g` depends only on
/// `(seed, g, p(g mod period))`, so traces of different lengths share prefixes.
pub fn sample_trace(pattern: &EventPattern, seed: u64, n_periods: usize) -> EventTrace {
    sample_trace_from(pattern, seed, 0, n_periods)
}

/// Samples periods `first_period .. first_period + n_periods` of the stream.
pub fn sample_trace_from(pattern: &EventPattern, seed: u64, first_period: usize, n_periods: usize) -> EventTrace {
    let key = stream_key(seed, StreamName::Trace.as_str());
    let sched = pattern.schedule();
    let p = pattern.period_ticks;
    let base = (first_period * p) as u64;
    let occurrences = (0..n_periods * p)
        .map(|i| event_bit(key, base + i as u64, sched[i % p]))
        .collect();
    EventTrace {
        occurrences,
        seed,
        period_ticks: p,
        pattern_id: pattern_id(pattern),
    }
}

/// Short textual identity of a pattern, e.g. `p1200/d30/LHL@10`.
pub fn pattern_id(pattern: &EventPattern) -> String {
    let peaks: Vec<String> = pattern
        .peaks
        .iter()
        .map(|p| format!("{}@{}", steps_string(&p.steps), p.start_slot))
        .collect();
    format!(
        "p{}/d{}/{}",
        pattern.period_ticks,
        pattern.state_duration,
        peaks.join("+")
    )
}

impl EventTrace {
    pub fn from_bits(occurrences: Vec<bool>, seed: u64, period_ticks: usize, pattern_id: String) -> Self {
        Self {
            occurrences,
            seed,
            period_ticks,
            pattern_id,
        }
    }

    pub fn len(&self) -> usize {
        self.occurrences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty()
    }

    pub fn n_periods(&self) -> usize {
        if self.period_ticks == 0 {
            0
        } else {
            self.occurrences.len() / self.period_ticks
        }
    }

    pub fn event_at(&self, t: usize) -> Result<bool> {
        self.occurrences.get(t).copied().ok_or(Error::OutOfRange {
            tick: t,
            len: self.len(),
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.occurrences
    }

    pub fn event_count(&self) -> usize {
        self.occurrences.iter().filter(|&&b| b).count()
    }

    /// Appends another trace (used when a schedule switches patterns).
    pub fn extend(&mut self, other: &EventTrace) {
        self.occurrences.extend_from_slice(&other.occurrences);
        if !other.pattern_id.is_empty() && self.pattern_id != other.pattern_id {
            self.pattern_id = format!("{}|{}", self.pattern_id, other.pattern_id);
        }
    }

    /// Run-length text: a header line, then one `tick:bit` line per change point.
    pub fn to_rle(&self) -> String {
        let mut out = format!(
            "# trace len={} period={} seed={} pattern={}\n",
            self.len(),
            self.period_ticks,
            self.seed,
            self.pattern_id
        );
        let mut prev = None;
        for (t, &b) in self.occurrences.iter().enumerate() {
            if prev != Some(b) {
                out.push_str(&format!("{}:{}\n", t, u8::from(b)));
                prev = Some(b);
            }
        }
        out
    }

    pub fn from_rle(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty trace".into(),
        })?;
        let mut len = None;
        let mut period = 0usize;
        let mut seed = 0u64;
        let mut pattern_id = String::new();
        for field in header.trim_start_matches('#').split_whitespace().skip(1) {
            let (k, v) = field.split_once('=').unwrap_or((field, ""));
            let bad = || Error::Parse {
                line: 1,
                msg: format!("bad header field `{field}`"),
            };
            match k {
                "len" => len = Some(v.parse::<usize>().map_err(|_| bad())?),
                "period" => period = v.parse().map_err(|_| bad())?,
                "seed" => seed = v.parse().map_err(|_| bad())?,
                "pattern" => pattern_id = v.to_string(),
                _ => return Err(bad()),
            }
        }
        let len = len.ok_or(Error::Parse {
            line: 1,
            msg: "header lacks len=".into(),
        })?;
        let mut bits = vec![false; len];
        let mut points: Vec<(usize, bool)> = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = || Error::Parse {
                line: i + 1,
                msg: format!("expected tick:bit, got `{line}`"),
            };
            let (t, b) = line.split_once(':').ok_or_else(err)?;
            let t: usize = t.parse().map_err(|_| err())?;
            let b = match b {
                "0" => false,
                "1" => true,
                _ => return Err(err()),
            };
            if t >= len || points.last().is_some_and(|&(p, _)| p >= t) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "change points must increase within len".into(),
                });
            }
            points.push((t, b));
        }
        for (j, &(t, b)) in points.iter().enumerate() {
            let end = points.get(j + 1).map_or(len, |&(n, _)| n);
            bits[t..end].fill(b);
        }
        Ok(Self {
            occurrences: bits,
            seed,
            period_ticks: period,
            pattern_id,
        })
    }
}
