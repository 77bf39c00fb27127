use smarton_core::energy::HarvestSource;
use smarton_core::engine::{
    compute_metrics, convergence_stats, run_experiment, run_period, EntryPlan, PeriodLog, RecordLevel, RunState,
    SimConfig, StopRule,
};
use smarton_core::learner::Phase;
use smarton_core::policies::{build_policy, PolicyKind};
use smarton_core::world::{build_pattern, sample_trace_from};

fn fixed(periods: usize) -> SimConfig {
    SimConfig {
        n_periods: periods,
        stop: StopRule::Fixed,
        ..SimConfig::default()
    }
}

#[test]
fn gt_is_awake_every_tick() {
    let mut cfg = fixed(2);
    cfg.policy.kind = PolicyKind::Gt;
    let res = run_experiment(&cfg).unwrap();
    for l in &res.periods {
        assert_eq!(l.awake_ticks, 1200);
        assert_eq!(l.catches, l.event_ticks);
        assert_eq!(l.drawn, 0.0);
    }
}

#[test]
fn smarton_in_phase_three_sleeps_without_a_source() {
    let cfg = SimConfig::default();
    let pattern = build_pattern(&cfg.pattern).unwrap();
    let mut state = RunState {
        store: cfg.energy.build_store().unwrap(),
        policy: build_policy(&cfg.policy, &cfg.learner, 1200, cfg.seed).unwrap(),
        source: cfg.energy.source.clone(),
        k_levels: cfg.learner.k_levels,
        record: RecordLevel::Summary,
    };
    let mut period = 0;
    while state.policy.phase() != Some(Phase::Exploit) {
        let trace = sample_trace_from(&pattern, cfg.seed, period, 1);
        run_period(&mut state, &pattern, &trace, period, None);
        period += 1;
        assert!(period < 500, "never reached phase 3");
    }
    state.source = HarvestSource::Constant(0.0);
    state.store.set_stored(0.0);
    let trace = sample_trace_from(&pattern, cfg.seed, period, 1);
    let log = run_period(&mut state, &pattern, &trace, period, None);
    assert_eq!(log.awake_ticks, 0);
    assert_eq!(log.stored_start, 0.0);
    assert_eq!(log.stored_end, 0.0);
}

#[test]
fn identical_inputs_give_identical_logs() {
    let mut cfg = fixed(30);
    cfg.record_level = RecordLevel::PerTick;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.periods, b.periods);
    assert!(a.periods.iter().all(|l| l.ticks.len() == 1200));
    cfg.seed += 1;
    let c = run_experiment(&cfg).unwrap();
    assert_ne!(a.periods, c.periods);
}

fn log(awake: usize, catches: usize, events: usize) -> PeriodLog {
    PeriodLog {
        awake_ticks: awake,
        catches,
        event_ticks: events,
        drawn: awake as f64,
        spent: awake as f64,
        spent_on_events: catches as f64,
        ..PeriodLog::default()
    }
}

#[test]
fn metrics_arithmetic() {
    let m = compute_metrics(&[log(20, 5, 9)]);
    assert_eq!(m.total_catches, 5);
    assert!((m.energy_efficiency - 0.25).abs() < 1e-12);

    let m = compute_metrics(&[log(0, 0, 12)]);
    assert_eq!(m.total_catches, 0);
    assert_eq!(m.energy_efficiency, 0.0);

    let m = compute_metrics(&[log(7, 7, 7), log(3, 3, 3)]);
    assert_eq!(m.total_catches, 10);
    assert_eq!(m.energy_efficiency, 1.0);
    assert_eq!(m.periods, 2);
}

#[test]
fn zero_periods_is_empty() {
    let res = run_experiment(&fixed(0)).unwrap();
    assert!(res.periods.is_empty());
    let m = res.metrics();
    assert_eq!((m.periods, m.total_catches, m.energy_efficiency), (0, 0, 0.0));
    assert!(convergence_stats(&res).entries.is_empty());
}

#[test]
fn frozen_learner_converges_after_the_window() {
    let mut cfg = fixed(200);
    cfg.learner.alpha = 0.0;
    cfg.energy.entry = EntryPlan::Fixed(4);
    let res = run_experiment(&cfg).unwrap();
    assert!(res
        .learner
        .as_ref()
        .unwrap()
        .tables()
        .values()
        .all(|t| t.values().iter().all(|&q| q == 0.0)));
    let stats = convergence_stats(&res);
    assert!(!stats.entries.is_empty());
    for e in &stats.entries {
        assert_eq!(e.episodes_to_converge, cfg.learner.convergence_window, "{e:?}");
    }
}

#[test]
fn segments_are_laid_end_to_end() {
    let mut cfg = fixed(0);
    cfg.segments = ["type1@10/E4/7", "type3@25/E3/5"]
        .iter()
        .map(|s| smarton_core::engine::Segment::parse(s).unwrap())
        .collect();
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.periods.len(), 12);
    assert_eq!((res.segments[1].start, res.segments[1].end), (7, 12));
    assert!(res.periods[..7].iter().all(|l| l.segment == 0));
    assert!(res.periods[7..].iter().all(|l| l.segment == 1));
}

#[test]
fn phase3_stable_stop_rule() {
    let cfg = SimConfig {
        n_periods: 500,
        stop: StopRule::Phase3Stable(5),
        ..SimConfig::default()
    };
    let res = run_experiment(&cfg).unwrap();
    assert!(res.periods.len() < 500);
    let tail = &res.periods[res.periods.len() - 5..];
    assert!(tail
        .iter()
        .all(|l| l.phase_start == Some(Phase::Exploit) && l.phase_end == Some(Phase::Exploit)));
}

#[test]
fn pinned_entry_is_booked_in_the_ledger() {
    let mut cfg = fixed(40);
    cfg.energy.entry = EntryPlan::Fixed(1);
    let res = run_experiment(&cfg).unwrap();
    assert!(res.periods.iter().any(|l| l.entry_adjust != 0.0));
    for l in &res.periods {
        assert!((l.stored_end - l.ledger_end()).abs() <= 1e-9 * l.stored_start.max(1.0));
    }
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = fixed(3);
    cfg.energy.entry = EntryPlan::Fixed(9);
    assert!(run_experiment(&cfg).unwrap_err().is_validation());
    let mut cfg = fixed(3);
    cfg.learner.state_duration = 7;
    assert!(run_experiment(&cfg).unwrap_err().is_validation());
}

#[test]
fn middle_entry_levels_take_longest() {
    let mut per_level = [(0.0, 0usize); 4];
    for seed in 0..20 {
        let cfg = SimConfig {
            seed,
            n_periods: 20_000,
            stop: StopRule::EntriesConverged,
            energy: smarton_core::engine::EnergyConfig {
                entry: EntryPlan::Sequential,
                ..Default::default()
            },
            ..SimConfig::default()
        };
        for e in convergence_stats(&run_experiment(&cfg).unwrap()).entries {
            let slot = &mut per_level[e.entry_level - 1];
            slot.0 += e.episodes_to_converge as f64;
            slot.1 += 1;
        }
    }
    let mean: Vec<f64> = per_level.iter().map(|(s, n)| s / *n as f64).collect();
    assert!(mean[1].max(mean[2]) > mean[0].max(mean[3]), "{mean:?}");
}
