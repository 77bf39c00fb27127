//! INI scenario files and the preset library.
//!
//! A scenario is a base [`SimConfig`] plus sweep axes. Keys before the first
//! section are run-level settings; `[pattern]`, `[energy]`, `[learner]`,
//! `[policy]` and `[sweep]` hold the rest. Lists are comma separated; seed
//! lists also accept `a..b` (half open).

use std::fmt::Write as _;
use std::path::Path;

use crate::energy::HarvestSource;
use crate::engine::{EntryPlan, RecordLevel, Segment, SimConfig, StopRule, StoreKind};
use crate::error::{Error, Result};
use crate::learner::{Affordability, Gating};
use crate::policies::PolicyKind;
use crate::world::{PeakDecl, ShapeName};

/// The canonical type shared by all peaks, or `Custom` when they differ.
fn uniform_shape(peaks: &[PeakDecl]) -> ShapeName {
    match peaks.first() {
        Some(first) if peaks.iter().all(|p| p.shape == first.shape && p.steps.is_none()) => first.shape,
        _ => ShapeName::Custom,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxes {
    pub charging_ratio: Vec<f64>,
    pub entry_level: Vec<EntryPlan>,
    /// `custom` keeps the configured peaks; a canonical type replaces
    /// the shape of every peak.
    pub event_type: Vec<ShapeName>,
    /// Learner state duration in ticks.
    pub state_duration: Vec<usize>,
    pub policy: Vec<PolicyKind>,
    pub seed: Vec<u64>,
}

impl SweepAxes {
    /// Single-point axes taken from `base`.
    pub fn from_base(base: &SimConfig) -> Self {
        Self {
            charging_ratio: vec![base.energy.charging_ratio],
            entry_level: vec![base.energy.entry],
            event_type: vec![uniform_shape(&base.pattern.peaks)],
            state_duration: vec![base.learner.state_duration],
            policy: vec![base.policy.kind],
            seed: vec![base.seed],
        }
    }

    pub fn len(&self) -> usize {
        self.charging_ratio.len()
            * self.entry_level.len()
            * self.event_type.len()
            * self.state_duration.len()
            * self.policy.len()
            * self.seed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub base: SimConfig,
    pub sweep: SweepAxes,
}

impl Scenario {
    pub fn from_base(base: SimConfig) -> Self {
        Self {
            name: base.name.clone(),
            sweep: SweepAxes::from_base(&base),
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        let empty = [
            ("charging_ratio", s.charging_ratio.is_empty()),
            ("entry_level", s.entry_level.is_empty()),
            ("event_type", s.event_type.is_empty()),
            ("state_duration", s.state_duration.is_empty()),
            ("policy", s.policy.is_empty()),
            ("seed", s.seed.is_empty()),
        ];
        if let Some((field, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::validation(field, "sweep axis is empty"));
        }
        self.base.validate()?;
        for cfg in self.configs() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Every run of the sweep in a fixed order: event type, entry level,
    /// charging ratio, state duration, policy, seed (seed varies fastest).
    pub fn configs(&self) -> Vec<SimConfig> {
        let s = &self.sweep;
        let mut out = Vec::with_capacity(s.len());
        for &ty in &s.event_type {
            for &entry in &s.entry_level {
                for &ratio in &s.charging_ratio {
                    for &d in &s.state_duration {
                        for &policy in &s.policy {
                            for &seed in &s.seed {
                                let mut c = self.base.clone();
                                c.name = self.name.clone();
                                c.seed = seed;
                                c.policy.kind = policy;
                                c.learner.state_duration = d;
                                c.energy.charging_ratio = ratio;
                                c.energy.entry = entry;
                                if ty != ShapeName::Custom {
                                    for p in &mut c.pattern.peaks {
                                        p.shape = ty;
                                        p.steps = None;
                                    }
                                }
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

struct Line<'a> {
    no: usize,
    key: &'a str,
    value: &'a str,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(l: &Line) -> Result<T> {
    l.value
        .parse()
        .map_err(|_| perr(l.no, format!("`{}` is not a valid value for `{}`", l.value, l.key)))
}

fn list(value: &str) -> Vec<&str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn num_list<T: std::str::FromStr>(l: &Line) -> Result<Vec<T>> {
    list(l.value)
        .into_iter()
        .map(|v| {
            v.parse()
                .map_err(|_| perr(l.no, format!("`{v}` is not a valid value for `{}`", l.key)))
        })
        .collect()
}

fn seed_list(l: &Line) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in list(l.value) {
        let bad = || perr(l.no, format!("bad seed `{item}`"));
        match item.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                out.extend(a..b);
            }
            None => out.push(item.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

/// Re-tags an error from a value parser with the line it came from.
fn at<T>(no: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => perr(no, other.to_string()),
    })
}

pub fn parse_source(s: &str) -> Result<HarvestSource> {
    let bad = || {
        Error::validation(
            "source",
            format!("`{s}` should be constant:<p>, diurnal:<peak>:<period> or trace:<p> <p> ..."),
        )
    };
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "constant" => rest.trim().parse().map(HarvestSource::Constant).map_err(|_| bad()),
        "diurnal" => {
            let (peak, period) = rest.split_once(':').ok_or_else(bad)?;
            Ok(HarvestSource::DiurnalRamp {
                peak: peak.trim().parse().map_err(|_| bad())?,
                period_ticks: period.trim().parse().map_err(|_| bad())?,
            })
        }
        "trace" => rest
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()
            .map(HarvestSource::Trace),
        _ => Err(bad()),
    }
}

pub fn source_string(s: &HarvestSource) -> String {
    match s {
        HarvestSource::Constant(p) => format!("constant:{p}"),
        HarvestSource::DiurnalRamp { peak, period_ticks } => {
            format!("diurnal:{peak}:{period_ticks}")
        }
        HarvestSource::Trace(v) => {
            let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            format!("trace:{}", parts.join(" "))
        }
    }
}

fn set_global(c: &mut SimConfig, name: &mut Option<String>, l: &Line) -> Result<()> {
    match l.key {
        "name" => *name = Some(l.value.to_string()),
        "seed" => c.seed = num(l)?,
        "n_periods" => c.n_periods = num(l)?,
        "eval_periods" => c.eval_periods = num(l)?,
        "record_level" => {
            c.record_level = match l.value {
                "summary" => RecordLevel::Summary,
                "per-tick" => RecordLevel::PerTick,
                _ => return Err(perr(l.no, "record_level expects summary or per-tick")),
            }
        }
        "stop" => c.stop = at(l.no, StopRule::parse(l.value))?,
        "segments" => {
            c.segments = at(l.no, list(l.value).into_iter().map(Segment::parse).collect())?;
        }
        _ => return Err(perr(l.no, format!("unknown key `{}`", l.key))),
    }
    Ok(())
}

fn set_pattern(c: &mut SimConfig, l: &Line) -> Result<()> {
    let p = &mut c.pattern;
    match l.key {
        "period" => p.period_ticks = num(l)?,
        "state_duration" => p.state_duration = num(l)?,
        "p_high" => p.p_high = num(l)?,
        "p_low" => p.p_low = num(l)?,
        "background_rate" => p.background_rate = num(l)?,
        "peak_max_duration" => p.peak_max_duration = num(l)?,
        "peak_steps" => p.peak_steps = num(l)?,
        "peaks" => p.peaks = at(l.no, list(l.value).into_iter().map(PeakDecl::parse).collect())?,
        _ => return Err(perr(l.no, format!("unknown key `{}` in [pattern]", l.key))),
    }
    Ok(())
}

fn set_energy(c: &mut SimConfig, l: &Line) -> Result<()> {
    let e = &mut c.energy;
    match l.key {
        "store" => {
            e.kind = match l.value {
                "abstract" => StoreKind::Abstract,
                "array" => StoreKind::Array,
                _ => return Err(perr(l.no, "store expects abstract or array")),
            }
        }
        "capacity" => e.capacity = num(l)?,
        "charging_ratio" => e.charging_ratio = num(l)?,
        "initial_stored" => e.initial_stored = num(l)?,
        "source" => e.source = at(l.no, parse_source(l.value))?,
        "entry_level" => e.entry = at(l.no, EntryPlan::parse(l.value))?,
        "preset" => e.preset = l.value.to_string(),
        "v_max" => e.v_max = num(l)?,
        "v_activate" => e.v_activate = num(l)?,
        "unit_joules" => e.unit_joules = num(l)?,
        _ => return Err(perr(l.no, format!("unknown key `{}` in [energy]", l.key))),
    }
    Ok(())
}

fn set_learner(c: &mut SimConfig, l: &Line) -> Result<()> {
    let x = &mut c.learner;
    match l.key {
        "alpha" => x.alpha = num(l)?,
        "gamma" => x.gamma = num(l)?,
        "reward_catch" => x.reward_catch = num(l)?,
        "reward_miss" => x.reward_miss = num(l)?,
        "k_levels" => x.k_levels = num(l)?,
        "state_duration" => x.state_duration = num(l)?,
        "frequencies" => x.actions.frequencies = num_list(l)?,
        "convergence_tolerance" => x.convergence_tolerance = num(l)?,
        "convergence_window" => x.convergence_window = num(l)?,
        "profile_window" => x.profile.window = num(l)?,
        "profile_rel_tol" => x.profile.rel_tol = num(l)?,
        "profile_abs_tol" => x.profile.abs_tol = num(l)?,
        "theta" => x.theta = num(l)?,
        "noise_floor" => x.noise_floor = num(l)?,
        "probe_budget" => x.probe_budget = num(l)?,
        "probe_trigger" => x.probe_trigger = num(l)?,
        "peak_max_duration" => x.peak_max_duration = num(l)?,
        "gating" => x.gating = at(l.no, Gating::parse(l.value))?,
        "affordability" => x.affordability = at(l.no, Affordability::parse(l.value))?,
        _ => return Err(perr(l.no, format!("unknown key `{}` in [learner]", l.key))),
    }
    Ok(())
}

fn set_policy(c: &mut SimConfig, l: &Line) -> Result<()> {
    match l.key {
        "kind" => c.policy.kind = at(l.no, PolicyKind::parse(l.value))?,
        "ctid_e_on" => c.policy.ctid.e_on = num(l)?,
        "ctid_e_off" => c.policy.ctid.e_off = num(l)?,
        "ctid_frequency" => c.policy.ctid.discharge_frequency = num(l)?,
        _ => return Err(perr(l.no, format!("unknown key `{}` in [policy]", l.key))),
    }
    Ok(())
}

#[derive(Default)]
struct Axes {
    charging_ratio: Option<Vec<f64>>,
    entry_level: Option<Vec<EntryPlan>>,
    event_type: Option<Vec<ShapeName>>,
    state_duration: Option<Vec<usize>>,
    policy: Option<Vec<PolicyKind>>,
    seed: Option<Vec<u64>>,
}

fn set_sweep(a: &mut Axes, l: &Line) -> Result<()> {
    match l.key {
        "charging_ratio" => a.charging_ratio = Some(num_list(l)?),
        "entry_level" => a.entry_level = Some(at(l.no, list(l.value).into_iter().map(EntryPlan::parse).collect())?),
        "event_type" => a.event_type = Some(at(l.no, list(l.value).into_iter().map(ShapeName::parse).collect())?),
        "state_duration" => a.state_duration = Some(num_list(l)?),
        "policy" => a.policy = Some(at(l.no, list(l.value).into_iter().map(PolicyKind::parse).collect())?),
        "seed" => a.seed = Some(seed_list(l)?),
        _ => return Err(perr(l.no, format!("unknown key `{}` in [sweep]", l.key))),
    }
    Ok(())
}

/// Parses scenario text. Unset keys keep their defaults; unset sweep axes
/// collapse to the base value.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut base = SimConfig::default();
    let mut name = None;
    let mut axes = Axes::default();
    let mut section = String::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.split_once('#').map_or(raw, |(head, _)| head).trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let sec = rest
                .strip_suffix(']')
                .ok_or_else(|| perr(no, "unterminated section header"))?
                .trim();
            if !["pattern", "energy", "learner", "policy", "sweep"].contains(&sec) {
                return Err(perr(no, format!("unknown section [{sec}]")));
            }
            section = sec.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| perr(no, "expected `key = value`"))?;
        let l = Line {
            no,
            key: key.trim(),
            value: value.trim(),
        };
        if !seen.insert((section.clone(), l.key.to_string())) {
            return Err(perr(no, format!("duplicate key `{}`", l.key)));
        }
        match section.as_str() {
            "" => set_global(&mut base, &mut name, &l)?,
            "pattern" => set_pattern(&mut base, &l)?,
            "energy" => set_energy(&mut base, &l)?,
            "learner" => set_learner(&mut base, &l)?,
            "policy" => set_policy(&mut base, &l)?,
            _ => set_sweep(&mut axes, &l)?,
        }
    }
    if let Some(n) = name {
        base.name = n;
    }
    let d = SweepAxes::from_base(&base);
    let scenario = Scenario {
        name: base.name.clone(),
        sweep: SweepAxes {
            charging_ratio: axes.charging_ratio.unwrap_or(d.charging_ratio),
            entry_level: axes.entry_level.unwrap_or(d.entry_level),
            event_type: axes.event_type.unwrap_or(d.event_type),
            state_duration: axes.state_duration.unwrap_or(d.state_duration),
            policy: axes.policy.unwrap_or(d.policy),
            seed: axes.seed.unwrap_or(d.seed),
        },
        base,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Writes every field, so `parse_scenario(&write_config(s)) == s`.
pub fn write_config(s: &Scenario) -> String {
    let c = &s.base;
    let mut o = String::new();
    let _ = writeln!(o, "name = {}", s.name);
    let _ = writeln!(o, "seed = {}", c.seed);
    let _ = writeln!(o, "n_periods = {}", c.n_periods);
    let _ = writeln!(o, "eval_periods = {}", c.eval_periods);
    let _ = writeln!(o, "record_level = {}", c.record_level.as_str());
    let _ = writeln!(o, "stop = {}", c.stop);
    let _ = writeln!(o, "segments = {}", join(&c.segments));

    let p = &c.pattern;
    let _ = writeln!(o, "\n[pattern]");
    let _ = writeln!(o, "period = {}", p.period_ticks);
    let _ = writeln!(o, "state_duration = {}", p.state_duration);
    let _ = writeln!(o, "p_high = {}", p.p_high);
    let _ = writeln!(o, "p_low = {}", p.p_low);
    let _ = writeln!(o, "background_rate = {}", p.background_rate);
    let _ = writeln!(o, "peak_max_duration = {}", p.peak_max_duration);
    let _ = writeln!(o, "peak_steps = {}", p.peak_steps);
    let _ = writeln!(o, "peaks = {}", join(&p.peaks));

    let e = &c.energy;
    let _ = writeln!(o, "\n[energy]");
    let _ = writeln!(o, "store = {}", e.kind.as_str());
    let _ = writeln!(o, "capacity = {}", e.capacity);
    let _ = writeln!(o, "charging_ratio = {}", e.charging_ratio);
    let _ = writeln!(o, "initial_stored = {}", e.initial_stored);
    let _ = writeln!(o, "source = {}", source_string(&e.source));
    let _ = writeln!(o, "entry_level = {}", e.entry);
    let _ = writeln!(o, "preset = {}", e.preset);
    let _ = writeln!(o, "v_max = {}", e.v_max);
    let _ = writeln!(o, "v_activate = {}", e.v_activate);
    let _ = writeln!(o, "unit_joules = {}", e.unit_joules);

    let l = &c.learner;
    let _ = writeln!(o, "\n[learner]");
    let _ = writeln!(o, "alpha = {}", l.alpha);
    let _ = writeln!(o, "gamma = {}", l.gamma);
    let _ = writeln!(o, "reward_catch = {}", l.reward_catch);
    let _ = writeln!(o, "reward_miss = {}", l.reward_miss);
    let _ = writeln!(o, "k_levels = {}", l.k_levels);
    let _ = writeln!(o, "state_duration = {}", l.state_duration);
    let _ = writeln!(o, "frequencies = {}", join(&l.actions.frequencies));
    let _ = writeln!(o, "convergence_tolerance = {}", l.convergence_tolerance);
    let _ = writeln!(o, "convergence_window = {}", l.convergence_window);
    let _ = writeln!(o, "profile_window = {}", l.profile.window);
    let _ = writeln!(o, "profile_rel_tol = {}", l.profile.rel_tol);
    let _ = writeln!(o, "profile_abs_tol = {}", l.profile.abs_tol);
    let _ = writeln!(o, "theta = {}", l.theta);
    let _ = writeln!(o, "noise_floor = {}", l.noise_floor);
    let _ = writeln!(o, "probe_budget = {}", l.probe_budget);
    let _ = writeln!(o, "probe_trigger = {}", l.probe_trigger);
    let _ = writeln!(o, "peak_max_duration = {}", l.peak_max_duration);
    let _ = writeln!(o, "gating = {}", l.gating.as_str());
    let _ = writeln!(o, "affordability = {}", l.affordability.as_str());

    let _ = writeln!(o, "\n[policy]");
    let _ = writeln!(o, "kind = {}", c.policy.kind);
    let _ = writeln!(o, "ctid_e_on = {}", c.policy.ctid.e_on);
    let _ = writeln!(o, "ctid_e_off = {}", c.policy.ctid.e_off);
    let _ = writeln!(o, "ctid_frequency = {}", c.policy.ctid.discharge_frequency);

    let w = &s.sweep;
    let _ = writeln!(o, "\n[sweep]");
    let _ = writeln!(o, "charging_ratio = {}", join(&w.charging_ratio));
    let _ = writeln!(o, "entry_level = {}", join(&w.entry_level));
    let _ = writeln!(o, "event_type = {}", join(&w.event_type));
    let _ = writeln!(o, "state_duration = {}", join(&w.state_duration));
    let _ = writeln!(o, "policy = {}", join(&w.policy));
    let _ = writeln!(o, "seed = {}", join(&w.seed));
    o
}

pub const PRESETS: [&str; 5] = [
    "fig-perf",
    "conv-vs-ratio",
    "conv-per-entry",
    "state-duration",
    "adaptation",
];

/// Built-in scenarios behind the reproduction figures.
pub fn preset(name: &str) -> Result<Scenario> {
    let mut c = SimConfig {
        name: name.to_string(),
        ..SimConfig::default()
    };
    let mut s = match name {
        "fig-perf" => {
            c.n_periods = 170;
            c.eval_periods = 20;
            c.stop = StopRule::Fixed;
            c.energy.charging_ratio = 6.0;
            let mut s = Scenario::from_base(c);
            s.sweep.event_type = ShapeName::CANONICAL.to_vec();
            s.sweep.entry_level = (1..=4).map(EntryPlan::Fixed).collect();
            s.sweep.policy = PolicyKind::ALL.to_vec();
            s.sweep.seed = (0..10).collect();
            s
        }
        "conv-vs-ratio" => {
            c.n_periods = 400;
            c.stop = StopRule::Phase1Converged;
            let mut s = Scenario::from_base(c);
            s.sweep.charging_ratio = vec![3.0, 6.0, 9.0, 12.0];
            s.sweep.seed = (0..10).collect();
            s
        }
        "conv-per-entry" => {
            c.n_periods = 20_000;
            c.stop = StopRule::EntriesConverged;
            c.learner.k_levels = 10;
            c.energy.entry = EntryPlan::Sequential;
            let mut s = Scenario::from_base(c);
            s.sweep.seed = (0..20).collect();
            s
        }
        "state-duration" => {
            c.n_periods = 170;
            c.eval_periods = 20;
            c.stop = StopRule::Fixed;
            c.energy.charging_ratio = 6.0;
            let mut s = Scenario::from_base(c);
            s.sweep.state_duration = vec![20, 30, 60];
            s.sweep.entry_level = (1..=4).map(EntryPlan::Fixed).collect();
            s.sweep.seed = (0..20).collect();
            s
        }
        "adaptation" => {
            c.stop = StopRule::Fixed;
            c.seed = 0;
            c.segments = ["type1@10/E4/200", "type3@25/E3/200", "type1@10/E4/200"]
                .iter()
                .map(|x| Segment::parse(x))
                .collect::<Result<_>>()?;
            Scenario::from_base(c)
        }
        _ => {
            return Err(Error::UnknownPreset {
                name: name.to_string(),
                valid: PRESETS.join(", "),
            })
        }
    };
    s.name = name.to_string();
    Ok(s)
}

/// A preset name or a path to a scenario file.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if PRESETS.contains(&spec) {
        preset(spec)
    } else if Path::new(spec).exists() {
        parse_config(Path::new(spec))
    } else {
        Err(Error::UnknownPreset {
            name: spec.to_string(),
            valid: format!("{}, or a scenario file path", PRESETS.join(", ")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = parse_scenario("").unwrap();
        assert_eq!(s.base, SimConfig::default());
        assert_eq!(s.base.learner.alpha, 0.7);
        assert_eq!(s.base.learner.gamma, 0.618);
        assert_eq!(s.base.learner.actions.frequencies, vec![0.0, 0.2, 0.5, 1.0]);
        assert_eq!(s.sweep.len(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_scenario("seed = 3\n\n[learner]\nbogus = 1\n").unwrap_err();
        assert_eq!(
            e,
            Error::Parse {
                line: 4,
                msg: "unknown key `bogus` in [learner]".into()
            }
        );
        let e = parse_scenario("[learner]\nalpha = x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_scenario("[nope]\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_scenario("seed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn alpha_above_one_names_the_field() {
        let e = parse_scenario("[learner]\nalpha = 1.5\n").unwrap_err();
        assert!(
            matches!(e, Error::Validation { ref field, .. } if field == "alpha"),
            "{e:?}"
        );
        assert!(e.is_validation());
    }

    #[test]
    fn trailing_comments_are_ignored() {
        let s = parse_scenario("# header\nn_periods = 7   # short run\n[energy]\n; note\ncharging_ratio = 3 # fast\n")
            .unwrap();
        assert_eq!(s.base.n_periods, 7);
        assert_eq!(s.base.energy.charging_ratio, 3.0);
    }

    #[test]
    fn seed_ranges_expand() {
        let s = parse_scenario("[sweep]\nseed = 0..3, 7\n").unwrap();
        assert_eq!(s.sweep.seed, vec![0, 1, 2, 7]);
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let s = preset(name).unwrap();
            s.validate().unwrap();
            let text = write_config(&s);
            assert_eq!(parse_scenario(&text).unwrap(), s, "{name}");
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset { .. })));
    }

    #[test]
    fn fig_perf_cardinality() {
        let s = preset("fig-perf").unwrap();
        assert_eq!(s.configs().len(), 4 * 4 * 4 * 10);
    }

    #[test]
    fn sources_round_trip() {
        for src in [
            HarvestSource::Constant(1.5),
            HarvestSource::DiurnalRamp {
                peak: 2.0,
                period_ticks: 1200,
            },
            HarvestSource::Trace(vec![0.0, 0.25, 3.0]),
        ] {
            assert_eq!(parse_source(&source_string(&src)).unwrap(), src);
        }
    }
}
