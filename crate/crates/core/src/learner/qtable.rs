//! Per-shape Q-tables, action schedules and the update rule.

use std::collections::BTreeSet;
use std::fmt;

use crate::energy::{ENERGY_EPS, WAKE_COST};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::world::{parse_steps, steps_string, StepClass};

use super::LearnerConfig;

/// H/L signature of a peak; equal signatures share one table.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShapeKey(pub Vec<StepClass>);

impl ShapeKey {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse(s: &str) -> Result<Self> {
        let steps = parse_steps(s)?;
        if steps.is_empty() {
            return Err(Error::InvalidSpec("empty shape signature".into()));
        }
        Ok(ShapeKey(steps))
    }
}

impl fmt::Display for ShapeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&steps_string(&self.0))
    }
}

/// Wake-up frequencies; action `a` wakes at `frequencies[a]` Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    pub frequencies: Vec<f64>,
}

impl Default for ActionSet {
    fn default() -> Self {
        Self {
            frequencies: vec![0.0, 0.2, 0.5, 1.0],
        }
    }
}

impl ActionSet {
    pub fn validate(&self) -> Result<()> {
        let f = &self.frequencies;
        if f.len() < 2 || f[0] != 0.0 {
            return Err(Error::validation(
                "frequencies",
                "need at least two values starting with 0",
            ));
        }
        if f.windows(2).any(|w| !(w[1] > w[0])) || f.iter().any(|x| !x.is_finite() || *x > 1.0) {
            return Err(Error::validation(
                "frequencies",
                "must be strictly increasing and at most 1 Hz",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Offsets within a step of `duration` ticks at which action `a` wakes:
    /// floor(k / f) for k = 0, 1, ... while below `duration`.
    pub fn awake_offsets(&self, a: usize, duration: usize) -> Vec<usize> {
        let f = self.frequencies[a];
        if f <= 0.0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for k in 0.. {
            let o = (k as f64 / f + 1e-9).floor() as usize;
            if o >= duration {
                break;
            }
            out.push(o);
        }
        out
    }

    /// Per-action awake masks over one step.
    pub fn masks(&self, duration: usize) -> Vec<Vec<bool>> {
        (0..self.len())
            .map(|a| {
                let mut m = vec![false; duration];
                for o in self.awake_offsets(a, duration) {
                    m[o] = true;
                }
                m
            })
            .collect()
    }
}

/// Row index of (level, step): (level - 1) * T + (step - 1).
pub fn get_state(level: usize, step: usize, k: usize, t: usize) -> Result<usize> {
    if !(1..=k).contains(&level) || !(1..=t).contains(&step) {
        return Err(Error::InvalidState { level, step, k, t });
    }
    Ok((level - 1) * t + (step - 1))
}

/// Reward and catches of one step: +catch per awake instant with an event, +miss otherwise.
pub fn step_reward(awake_instants: &[usize], events: &[bool], reward_catch: f64, reward_miss: f64) -> (f64, usize) {
    let mut reward = 0.0;
    let mut catches = 0;
    for &t in awake_instants {
        if events[t] {
            reward += reward_catch;
            catches += 1;
        } else {
            reward += reward_miss;
        }
    }
    (reward, catches)
}

/// Convergence bookkeeping for episodes entered at one energy level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartitionStats {
    pub episodes: usize,
    pub quiet_streak: usize,
    pub converged: bool,
    pub episodes_to_converge: Option<usize>,
    /// 1-based position among this table's converged entry levels.
    pub learn_order: Option<usize>,
    /// Rows updated by episodes entered at this level.
    pub touched_rows: BTreeSet<usize>,
}

/// Thresholds for declaring an entry partition converged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRule {
    /// Largest update magnitude of a quiet episode.
    pub epsilon: f64,
    pub gamma: f64,
    /// Consecutive quiet episodes required.
    pub window: usize,
    /// No value can move (alpha = 0), so every row counts as settled.
    pub frozen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub delta: f64,
    pub first_touch: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub shape: ShapeKey,
    pub k: usize,
    pub t: usize,
    pub n: usize,
    values: Vec<f64>,
    touched: Vec<bool>,
    /// Per entry: the action was fundable on some visit to its row.
    fundable: Vec<bool>,
    /// Per entry: the row that followed its latest update (None at peak end).
    next_row: Vec<Option<usize>>,
    /// Per entry: the bootstrap value and the successor actions it maxed
    /// over (bit mask) at its latest update.
    bootstrap: Vec<(f64, u64)>,
    partitions: Vec<PartitionStats>,
    converged_levels: usize,
}

impl QTable {
    pub fn new(shape: ShapeKey, k: usize, n: usize) -> Self {
        let t = shape.len();
        Self {
            shape,
            k,
            t,
            n,
            values: vec![0.0; k * t * n],
            touched: vec![false; k * t * n],
            fundable: vec![false; k * t * n],
            next_row: vec![None; k * t * n],
            bootstrap: vec![(0.0, 0); k * t * n],
            partitions: vec![PartitionStats::default(); k],
            converged_levels: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.k * self.t
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n + action]
    }

    pub fn set(&mut self, state: usize, action: usize, v: f64) {
        self.values[state * self.n + action] = v;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n..(state + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn masked_max(&self, row: usize, mask: u64) -> f64 {
        (0..self.n)
            .filter(|a| mask >> a & 1 == 1)
            .map(|a| self.get(row, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// An entry is settled once tried and while its successor's value has
    /// moved by at most `epsilon / gamma` since the entry was last updated.
    pub fn is_settled(&self, state: usize, action: usize, epsilon: f64, gamma: f64) -> bool {
        let idx = state * self.n + action;
        if !self.touched[idx] {
            return false;
        }
        match self.next_row[idx] {
            None => true,
            Some(next) => {
                let (used, mask) = self.bootstrap[idx];
                gamma * (self.masked_max(next, mask) - used).abs() <= epsilon
            }
        }
    }

    pub fn is_touched(&self, state: usize, action: usize) -> bool {
        self.touched[state * self.n + action]
    }

    pub fn max_q(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn partition(&self, level: usize) -> &PartitionStats {
        &self.partitions[level - 1]
    }

    pub fn partitions(&self) -> &[PartitionStats] {
        &self.partitions
    }

    pub fn partition_converged(&self, level: usize) -> bool {
        self.partitions.get(level.wrapping_sub(1)).is_some_and(|p| p.converged)
    }

    pub fn fully_converged(&self) -> bool {
        self.partitions.iter().all(|p| p.converged)
    }

    /// Books one learning episode entered at `level`. `visits` lists each
    /// updated row with the actions that were fundable there. The partition
    /// converges after `window` consecutive quiet episodes (largest update at
    /// most `epsilon`, no first touch) once every row its episodes reached
    /// is settled. Returns true when it converges now.
    pub fn record_episode(
        &mut self,
        level: usize,
        max_delta: f64,
        first_touch: bool,
        visits: &[(usize, Vec<usize>)],
        rule: &ConvergenceRule,
    ) -> bool {
        let order = self.converged_levels + 1;
        for (row, aff) in visits {
            for &a in aff {
                self.fundable[row * self.n + a] = true;
            }
        }
        let p = &mut self.partitions[level - 1];
        p.episodes += 1;
        p.touched_rows.extend(visits.iter().map(|(row, _)| *row));
        if p.converged {
            return false;
        }
        if max_delta <= rule.epsilon && !first_touch {
            p.quiet_streak += 1;
        } else {
            p.quiet_streak = 0;
        }
        let p = &self.partitions[level - 1];
        if p.quiet_streak < rule.window || !(rule.frozen || p.touched_rows.iter().all(|&r| self.row_settled(r, rule))) {
            return false;
        }
        let p = &mut self.partitions[level - 1];
        p.converged = true;
        p.episodes_to_converge = Some(p.episodes);
        p.learn_order = Some(order);
        self.converged_levels += 1;
        true
    }

    /// True when every action ever fundable in `row` is settled.
    pub fn row_settled(&self, row: usize, rule: &ConvergenceRule) -> bool {
        (0..self.n).all(|a| !self.fundable[row * self.n + a] || self.is_settled(row, a, rule.epsilon, rule.gamma))
    }

    /// Writes the text form: a header line, then `level step v1 .. vN` per row.
    pub fn to_text(&self, alpha: f64, gamma: f64) -> String {
        let mut out = format!(
            "qtable shape={} K={} T={} N={} alpha={:.6} gamma={:.6}\n",
            self.shape, self.k, self.t, self.n, alpha, gamma
        );
        for level in 1..=self.k {
            for step in 1..=self.t {
                let s = (level - 1) * self.t + (step - 1);
                out.push_str(&format!("{level} {step}"));
                for v in self.row(s) {
                    out.push_str(&format!(" {v:.6}"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`QTable::to_text`] output; returns the table with `(alpha, gamma)`.
    pub fn from_text(text: &str) -> Result<(Self, f64, f64)> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty table".into(),
        })?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("qtable") {
            return Err(Error::Parse {
                line: 1,
                msg: "expected `qtable` header".into(),
            });
        }
        let (mut shape, mut k, mut t, mut n, mut alpha, mut gamma) = (None, None, None, None, None, None);
        for f in fields {
            let bad = || Error::Parse {
                line: 1,
                msg: format!("bad header field `{f}`"),
            };
            let (key, v) = f.split_once('=').ok_or_else(bad)?;
            match key {
                "shape" => shape = Some(ShapeKey::parse(v).map_err(|_| bad())?),
                "K" => k = Some(v.parse::<usize>().map_err(|_| bad())?),
                "T" => t = Some(v.parse::<usize>().map_err(|_| bad())?),
                "N" => n = Some(v.parse::<usize>().map_err(|_| bad())?),
                "alpha" => alpha = Some(v.parse::<f64>().map_err(|_| bad())?),
                "gamma" => gamma = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let missing = |what: &str| Error::Parse {
            line: 1,
            msg: format!("header lacks {what}"),
        };
        let shape = shape.ok_or_else(|| missing("shape"))?;
        let (k, t, n) = (
            k.ok_or_else(|| missing("K"))?,
            t.ok_or_else(|| missing("T"))?,
            n.ok_or_else(|| missing("N"))?,
        );
        if t != shape.len() {
            return Err(Error::Parse {
                line: 1,
                msg: "T does not match the shape length".into(),
            });
        }
        let mut table = QTable::new(shape, k, n);
        let mut seen = 0;
        for (i, line) in lines {
            let err = |m: &str| Error::Parse {
                line: i + 1,
                msg: m.to_string(),
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != n + 2 {
                return Err(err("wrong number of columns"));
            }
            let level: usize = parts[0].parse().map_err(|_| err("bad level"))?;
            let step: usize = parts[1].parse().map_err(|_| err("bad step"))?;
            let s = get_state(level, step, k, t).map_err(|_| err("state out of range"))?;
            for (a, p) in parts[2..].iter().enumerate() {
                let v: f64 = p.parse().map_err(|_| err("bad value"))?;
                table.set(s, a, v);
            }
            seen += 1;
        }
        if seen != k * t {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected {} rows, found {seen}", k * t),
            });
        }
        Ok((
            table,
            alpha.ok_or_else(|| missing("alpha"))?,
            gamma.ok_or_else(|| missing("gamma"))?,
        ))
    }
}

/// Q[s,a] <- Q[s,a] + alpha (R + gamma max_k Q[next, k] - Q[s,a]); a terminal
/// step (`next = None`) bootstraps from 0.
pub fn q_update(
    table: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next: Option<(usize, &[usize])>,
    cfg: &LearnerConfig,
) -> UpdateOutcome {
    let mask = next.map_or(0, |(_, aff)| aff.iter().fold(0u64, |m, &a| m | 1 << a));
    let bootstrap = next.map_or(0.0, |(s, _)| table.masked_max(s, mask));
    let old = table.get(state, action);
    let new = old + cfg.alpha * (reward + cfg.gamma * bootstrap - old);
    table.set(state, action, new);
    let idx = state * table.n + action;
    let first_touch = !table.touched[idx];
    table.touched[idx] = true;
    table.next_row[idx] = next.map(|(s, _)| s);
    table.bootstrap[idx] = (bootstrap, mask);
    if let Some((s, aff)) = next {
        for &a in aff {
            table.fundable[s * table.n + a] = true;
        }
    }
    UpdateOutcome {
        delta: new - old,
        first_touch,
    }
}

/// Which actions may be chosen at a given stored energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Affordability {
    /// Any action once one wake-up is funded; wake-ups the store cannot
    /// cover are skipped while the step runs.
    #[default]
    FirstWake,
    /// Only actions whose whole-step cost is covered.
    FullStep,
}

impl Affordability {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "first-wake" => Ok(Affordability::FirstWake),
            "full-step" => Ok(Affordability::FullStep),
            _ => Err(Error::validation("affordability", "expected first-wake or full-step")),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Affordability::FirstWake => "first-wake",
            Affordability::FullStep => "full-step",
        }
    }
}

/// Actions selectable at `stored`, given each action's full-step cost.
pub fn affordable_actions(step_costs: &[f64], stored: f64, rule: Affordability) -> Vec<usize> {
    let budget = stored + ENERGY_EPS;
    (0..step_costs.len())
        .filter(|&a| match rule {
            Affordability::FirstWake => step_costs[a] == 0.0 || budget >= WAKE_COST,
            Affordability::FullStep => step_costs[a] <= budget,
        })
        .collect()
}

/// Uniform pick among `affordable` (exploration).
pub fn choose_explore(affordable: &[usize], rng: &mut Stream) -> usize {
    affordable[rng.below(affordable.len() as u64) as usize]
}

/// Argmax over `affordable`; ties go to the lower frequency.
pub fn choose_exploit(table: &QTable, state: usize, affordable: &[usize]) -> usize {
    let mut best = affordable[0];
    for &a in &affordable[1..] {
        if table.get(state, a) > table.get(state, best) {
            best = a;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use StepClass::{H, L};

    fn cfg() -> LearnerConfig {
        LearnerConfig::default()
    }

    const COSTS: [f64; 4] = [0.0, 6.0, 15.0, 30.0];

    fn rule(epsilon: f64) -> ConvergenceRule {
        ConvergenceRule {
            epsilon,
            gamma: 0.618,
            window: 5,
            frozen: false,
        }
    }

    fn lhl() -> ShapeKey {
        ShapeKey(vec![L, H, L])
    }

    #[test]
    fn state_indexing() {
        assert_eq!(get_state(1, 1, 5, 3), Ok(0));
        assert_eq!(get_state(5, 3, 5, 3), Ok(14));
        assert_eq!(get_state(3, 1, 5, 3), Ok(6));
        assert!(get_state(0, 1, 5, 3).is_err());
        assert!(get_state(1, 4, 5, 3).is_err());
        let t = QTable::new(lhl(), 5, 4);
        assert_eq!((t.rows(), t.n), (15, 4));
    }

    #[test]
    fn step_reward_examples() {
        let events = vec![false; 30];
        assert_eq!(step_reward(&[], &events, 10.0, -1.0), (0.0, 0));
        let mut ev = vec![false; 30];
        let f2: Vec<usize> = (0..30).step_by(2).collect();
        for &t in &f2[..3] {
            ev[t] = true;
        }
        assert_eq!(step_reward(&f2, &ev, 10.0, -1.0), (18.0, 3));
        let all: Vec<usize> = (0..30).collect();
        assert_eq!(step_reward(&all, &[true; 30], 10.0, -1.0), (300.0, 30));
    }

    #[test]
    fn update_examples() {
        let mut t = QTable::new(lhl(), 4, 4);
        let out = q_update(&mut t, 0, 2, 18.0, Some((1, &[0, 1, 2, 3])), &cfg());
        assert!((t.get(0, 2) - 12.6).abs() < 1e-12);
        assert!(out.first_touch);
        assert!(!q_update(&mut t, 0, 2, 18.0, Some((1, &[0, 1, 2, 3])), &cfg()).first_touch);

        let frozen = LearnerConfig { alpha: 0.0, ..cfg() };
        let mut t = QTable::new(lhl(), 4, 4);
        t.set(0, 1, 3.5);
        q_update(&mut t, 0, 1, 50.0, Some((1, &[0, 1, 2, 3])), &frozen);
        assert_eq!(t.get(0, 1), 3.5);

        let mut t = QTable::new(lhl(), 4, 4);
        t.set(0, 0, 5.0);
        t.set(1, 3, 5.0);
        q_update(&mut t, 0, 0, 10.0, Some((1, &[0, 1, 2, 3])), &cfg());
        assert!((t.get(0, 0) - 10.663).abs() < 1e-12);
    }

    #[test]
    fn terminal_step_ignores_next_row() {
        let mut t = QTable::new(lhl(), 4, 4);
        t.set(3, 0, 100.0);
        q_update(&mut t, 2, 1, 10.0, None, &cfg());
        assert!((t.get(2, 1) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn exploit_tie_break_and_affordability() {
        let mut t = QTable::new(lhl(), 4, 4);
        for (a, v) in [0.0, 3.0, 7.0, 7.0].into_iter().enumerate() {
            t.set(0, a, v);
        }
        assert_eq!(
            choose_exploit(&t, 0, &affordable_actions(&COSTS, 50.0, Affordability::FullStep)),
            2
        );
        assert_eq!(
            choose_exploit(&t, 0, &affordable_actions(&COSTS, 0.5, Affordability::FullStep)),
            0
        );
        assert_eq!(affordable_actions(&COSTS, 14.0, Affordability::FullStep), vec![0, 1]);
        assert_eq!(
            choose_exploit(&t, 0, &affordable_actions(&COSTS, 14.0, Affordability::FullStep)),
            1
        );
        assert_eq!(
            affordable_actions(&COSTS, 1.0, Affordability::FirstWake),
            vec![0, 1, 2, 3]
        );
        assert_eq!(affordable_actions(&COSTS, 0.5, Affordability::FirstWake), vec![0]);
    }

    #[test]
    fn explore_is_reproducible() {
        let aff = affordable_actions(&COSTS, 40.0, Affordability::FullStep);
        let mut a = Stream::new(3, "explore");
        let mut b = Stream::new(3, "explore");
        let xs: Vec<usize> = (0..50).map(|_| choose_explore(&aff, &mut a)).collect();
        let ys: Vec<usize> = (0..50).map(|_| choose_explore(&aff, &mut b)).collect();
        assert_eq!(xs, ys);
        assert!((0..4).all(|x| xs.contains(&x)));
    }

    #[test]
    fn awake_offsets_per_frequency() {
        let a = ActionSet::default();
        assert!(a.awake_offsets(0, 30).is_empty());
        assert_eq!(a.awake_offsets(1, 30), vec![0, 5, 10, 15, 20, 25]);
        assert_eq!(a.awake_offsets(2, 30).len(), 15);
        assert_eq!(a.awake_offsets(3, 30), (0..30).collect::<Vec<_>>());
        assert!(ActionSet {
            frequencies: vec![0.0, 0.5, 0.5]
        }
        .validate()
        .is_err());
        assert!(ActionSet {
            frequencies: vec![0.1, 0.5]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn partition_window() {
        let mut t = QTable::new(lhl(), 4, 4);
        assert!(!t.partition_converged(2));
        assert!(!t.record_episode(2, 0.0, true, &[(3, vec![0])], &rule(0.1)));
        t.touched[3 * 4] = true;
        for i in 0..5 {
            let done = t.record_episode(2, 0.05, false, &[(3, vec![0])], &rule(0.1));
            assert_eq!(done, i == 4);
        }
        assert!(t.partition_converged(2));
        assert_eq!(t.partition(2).episodes_to_converge, Some(6));
        assert_eq!(t.partition(2).learn_order, Some(1));
        assert!(!t.partition_converged(1));
    }

    #[test]
    fn unsettled_rows_block_convergence() {
        let c = cfg();
        let r = rule(1.0);
        let mut t = QTable::new(lhl(), 4, 4);
        // Entry row 3 (level 2, step 1) leads to row 7 (level 3, step 2).
        q_update(&mut t, 3, 1, 20.0, Some((7, &[0, 1])), &c);
        q_update(&mut t, 3, 0, 0.0, Some((7, &[0, 1])), &c);
        q_update(&mut t, 7, 0, 5.0, None, &c);
        let visits = [(3, vec![0, 1]), (7, vec![0, 1])];
        for _ in 0..20 {
            assert!(!t.record_episode(2, 0.0, false, &visits, &r));
        }
        // Trying action 1 in row 7 moves the row's value, so row 3 is stale.
        q_update(&mut t, 7, 1, 40.0, None, &c);
        assert!(t.row_settled(7, &r));
        assert!(!t.row_settled(3, &r));
        assert!(!t.record_episode(2, 0.0, false, &visits, &r));
        q_update(&mut t, 3, 0, 0.0, Some((7, &[0, 1])), &c);
        q_update(&mut t, 3, 1, 20.0, Some((7, &[0, 1])), &c);
        assert!(t.record_episode(2, 0.0, false, &visits, &r));
    }

    #[test]
    fn text_round_trip() {
        let mut t = QTable::new(lhl(), 2, 4);
        t.set(4, 3, -12.25);
        t.set(0, 1, 7.0);
        let text = t.to_text(0.7, 0.618);
        assert!(text.starts_with("qtable shape=LHL K=2 T=3 N=4 alpha=0.700000 gamma=0.618000\n"));
        assert!(text.contains("2 2 0.000000 0.000000 0.000000 -12.250000\n"));
        let (back, alpha, gamma) = QTable::from_text(&text).unwrap();
        assert_eq!(back.values(), t.values());
        assert_eq!((alpha, gamma), (0.7, 0.618));
        assert!(QTable::from_text("qtable shape=LHL K=1 T=3 N=4 alpha=1 gamma=0\n1 1 0 0 0 0\n").is_err());
    }
}
