//! Parallel sweep execution and the per-run summaries written to CSV.

use rayon::prelude::*;

use crate::config::Scenario;
use crate::engine::{
    convergence_stats, run_experiment, ConvergenceStats, EntryPlan, ExperimentResult, Metrics, SimConfig,
};
use crate::error::{Error, Result};
use crate::learner::Phase;
use crate::policies::PolicyKind;
use crate::world::ShapeName;

#[derive(Clone, Debug, PartialEq)]
pub struct RunKey {
    pub scenario: String,
    pub policy: PolicyKind,
    pub event_type: ShapeName,
    pub entry: EntryPlan,
    pub charging_ratio: f64,
    pub state_duration: usize,
    pub seed: u64,
}

impl RunKey {
    pub fn of(cfg: &SimConfig) -> Self {
        let ty = match cfg.pattern.peaks.first() {
            Some(p)
                if cfg
                    .pattern
                    .peaks
                    .iter()
                    .all(|q| q.shape == p.shape && q.steps.is_none()) =>
            {
                p.shape
            }
            _ => ShapeName::Custom,
        };
        Self {
            scenario: cfg.name.clone(),
            policy: cfg.policy.kind,
            event_type: ty,
            entry: cfg.energy.entry,
            charging_ratio: cfg.energy.charging_ratio,
            state_duration: cfg.learner.state_duration,
            seed: cfg.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimelineRow {
    pub period: usize,
    pub segment: usize,
    pub phase: Option<Phase>,
    pub catches: usize,
    pub misses: usize,
}

/// Phase-3 recovery inside one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentStats {
    pub start: usize,
    pub end: usize,
    pub learning_episodes: usize,
    pub periods_to_phase3: Option<usize>,
    /// Absolute period of the first phase-3 start after leaving phase 3.
    pub phase3_entry: Option<usize>,
    /// Mean misses over the 3 periods before and from the phase-3 entry.
    pub misses_before: Option<f64>,
    pub misses_after: Option<f64>,
}

impl SegmentStats {
    /// True when misses after the phase-3 entry are at most half of before.
    pub fn misses_halved(&self) -> bool {
        match (self.misses_before, self.misses_after) {
            (Some(b), Some(a)) => a <= 0.5 * b,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub key: RunKey,
    pub periods: usize,
    /// Metrics over the evaluation window.
    pub metrics: Metrics,
    pub convergence: ConvergenceStats,
    pub timeline: Vec<TimelineRow>,
    pub segments: Vec<SegmentStats>,
}

impl RunSummary {
    /// Episode index at which the first partition converged.
    pub fn first_converged(&self) -> Option<usize> {
        self.convergence.entries.iter().map(|e| e.global_episode).min()
    }

    /// Episode index at which the last partition converged.
    pub fn last_converged(&self) -> Option<usize> {
        self.convergence.entries.iter().map(|e| e.global_episode).max()
    }
}

const WINDOW: usize = 3;

fn mean_misses(timeline: &[TimelineRow], range: std::ops::Range<usize>) -> Option<f64> {
    let rows = timeline.get(range)?;
    if rows.is_empty() {
        return None;
    }
    Some(rows.iter().map(|r| r.misses as f64).sum::<f64>() / rows.len() as f64)
}

pub fn summarize(cfg: &SimConfig, res: &ExperimentResult) -> RunSummary {
    let timeline: Vec<TimelineRow> = res
        .periods
        .iter()
        .map(|l| TimelineRow {
            period: l.period,
            segment: l.segment,
            phase: l.phase_start,
            catches: l.catches,
            misses: l.misses(),
        })
        .collect();
    let segments = res
        .segments
        .iter()
        .map(|s| {
            let entry = res.phase3_entry_after(s);
            SegmentStats {
                start: s.start,
                end: s.end,
                learning_episodes: res.learning_episodes_in(s),
                periods_to_phase3: res.periods_to_phase3(s),
                phase3_entry: entry,
                misses_before: entry.and_then(|e| mean_misses(&timeline, e.saturating_sub(WINDOW)..e)),
                misses_after: entry.and_then(|e| mean_misses(&timeline, e..e + WINDOW)),
            }
        })
        .collect();
    RunSummary {
        key: RunKey::of(cfg),
        periods: res.periods.len(),
        metrics: res.eval_metrics(),
        convergence: convergence_stats(res),
        timeline,
        segments,
    }
}

pub fn run_one(cfg: &SimConfig) -> Result<RunSummary> {
    let res = run_experiment(cfg)?;
    Ok(summarize(cfg, &res))
}

/// Runs every configuration of the scenario on `jobs` threads (0 = all
/// cores). Output order matches [`Scenario::configs`].
pub fn run_sweep(scenario: &Scenario, jobs: usize) -> Result<Vec<RunSummary>> {
    scenario.validate()?;
    run_configs(&scenario.configs(), jobs)
}

pub fn run_configs(configs: &[SimConfig], jobs: usize) -> Result<Vec<RunSummary>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| configs.par_iter().map(run_one).collect())
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Standard error of the mean (sample standard deviation over sqrt(n)).
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Least-squares line: (slope, intercept, R²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Mean episodes-to-converge by learning position (index 0 = first learned).
pub fn by_learn_order(runs: &[RunSummary], k: usize) -> Vec<f64> {
    let mut buckets = vec![Vec::new(); k];
    for r in runs {
        for e in &r.convergence.entries {
            if (1..=k).contains(&e.learn_order) {
                buckets[e.learn_order - 1].push(e.episodes_to_converge as f64);
            }
        }
    }
    buckets.iter().map(|b| mean(b)).collect()
}

/// Full-table over first-partition convergence, as (mean of per-run ratios,
/// ratio of means). Runs where nothing converged are skipped.
pub fn partition_speedup(runs: &[RunSummary]) -> (f64, f64) {
    let pairs: Vec<(f64, f64)> = runs
        .iter()
        .filter_map(|r| Some((r.first_converged()? as f64, r.last_converged()? as f64)))
        .filter(|(f, _)| *f > 0.0)
        .collect();
    let ratios: Vec<f64> = pairs.iter().map(|(f, l)| l / f).collect();
    let firsts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let lasts: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    (mean(&ratios), mean(&lasts) / mean(&firsts))
}
