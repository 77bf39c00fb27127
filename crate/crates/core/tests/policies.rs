use proptest::prelude::*;

use smarton_core::energy::{EnergyStore, HarvestSource};
use smarton_core::engine::{run_experiment, run_period, RecordLevel, RunState, SimConfig, StopRule};
use smarton_core::learner::{classify_shape, q_update, LearnerConfig, QTable, ShapeKey};
use smarton_core::policies::{Ctid, CtidConfig, CtidPro, Policy, PolicyKind};
use smarton_core::world::{build_pattern, sample_trace_from, PatternSpec, StepClass};

fn state(policy: Box<dyn Policy>, stored: f64, source: f64) -> RunState {
    RunState {
        store: EnergyStore::abstract_store(120.0, 9.0, stored).unwrap(),
        policy,
        source: HarvestSource::Constant(source),
        k_levels: 4,
        record: RecordLevel::PerTick,
    }
}

fn awake_ticks(st: &mut RunState, seed: u64) -> Vec<usize> {
    let pattern = build_pattern(&PatternSpec::default()).unwrap();
    let trace = sample_trace_from(&pattern, seed, 0, 1);
    let log = run_period(st, &pattern, &trace, 0, None);
    log.ticks
        .iter()
        .enumerate()
        .filter(|(_, r)| r.awake)
        .map(|(t, _)| t)
        .collect()
}

fn quiet_learner() -> LearnerConfig {
    LearnerConfig {
        probe_budget: 0,
        ..LearnerConfig::default()
    }
}

#[test]
fn ctidpro_spends_greedily_inside_peaks() {
    let pro = CtidPro::new(&quiet_learner(), 1200, 0)
        .unwrap()
        .with_peak_slots(&[10, 11, 12]);
    let mut st = state(Box::new(pro), 45.0, 0.0);
    let awake = awake_ticks(&mut st, 3);
    // 45 wake-ups at one per second starting with slot 10 (tick 300).
    assert_eq!(awake, (300..345).collect::<Vec<_>>());
    assert_eq!(st.store.stored(), 0.0);
}

#[test]
fn ctidpro_without_peaks_sleeps() {
    let pro = CtidPro::new(&quiet_learner(), 1200, 0).unwrap().with_peak_slots(&[]);
    let mut st = state(Box::new(pro), 120.0, 1.0);
    assert!(awake_ticks(&mut st, 0).is_empty());
}

#[test]
fn ctid_duty_cycle_matches_charging_ratio() {
    // Long-run awake fraction 1 / (1 + r) with harvest only while asleep.
    let mut cfg = SimConfig {
        n_periods: 60,
        stop: StopRule::Fixed,
        ..SimConfig::default()
    };
    cfg.policy.kind = PolicyKind::Ctid;
    cfg.energy.charging_ratio = 7.0;
    let m = run_experiment(&cfg).unwrap().metrics();
    let frac = m.awake_ticks as f64 / (60.0 * 1200.0);
    assert!((frac - 1.0 / 8.0).abs() < 2e-3, "{frac}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ctid_ignores_events(seed_a in any::<u64>(), seed_b in any::<u64>(), stored in 0.0f64..120.0, on in 1.0f64..120.0) {
        let cfg = CtidConfig { e_on: on, ..CtidConfig::default() };
        let mut a = state(Box::new(Ctid::new(cfg.clone())), stored, 1.0);
        let mut b = state(Box::new(Ctid::new(cfg)), stored, 1.0);
        prop_assert_eq!(awake_ticks(&mut a, seed_a), awake_ticks(&mut b, seed_b));
    }

    #[test]
    fn spending_never_exceeds_income(
        policy in prop::sample::select(vec![PolicyKind::SmartOn, PolicyKind::Ctid, PolicyKind::CtidPro]),
        seed in any::<u64>(),
        ratio in 1.0f64..15.0,
        initial in 0.0f64..120.0,
    ) {
        let mut cfg = SimConfig { seed, n_periods: 3, stop: StopRule::Fixed, record_level: RecordLevel::PerTick, ..SimConfig::default() };
        cfg.policy.kind = policy;
        cfg.energy.charging_ratio = ratio;
        cfg.energy.initial_stored = initial;
        let res = run_experiment(&cfg).unwrap();
        let (mut drawn, mut income) = (0.0, initial);
        for l in &res.periods {
            for r in &l.ticks {
                drawn += r.drawn;
                income += r.harvested;
                prop_assert!(drawn <= income + 1e-9);
            }
        }
    }

    #[test]
    fn constant_reward_converges_geometrically(alpha in 0.01f64..1.0, reward in -300.0f64..300.0, start in -500.0f64..500.0) {
        let cfg = LearnerConfig { alpha, ..LearnerConfig::default() };
        let mut t = QTable::new(ShapeKey(vec![StepClass::H]), 1, 4);
        t.set(0, 0, start);
        let mut prev = (reward - start).abs();
        for _ in 0..30 {
            q_update(&mut t, 0, 0, reward, None, &cfg);
            let gap = (reward - t.get(0, 0)).abs();
            prop_assert!(gap <= (1.0 - alpha) * prev + 1e-9 * (1.0 + prev));
            prev = gap;
        }
    }

    #[test]
    fn shape_labels_ignore_scale(counts in prop::collection::vec(0.0f64..50.0, 1..5), k in 0.1f64..20.0) {
        prop_assume!(counts.iter().any(|&c| c > 0.0));
        let scaled: Vec<f64> = counts.iter().map(|c| c * k).collect();
        prop_assert_eq!(classify_shape(&counts, 0.5, 0.0).ok(), classify_shape(&scaled, 0.5, 0.0).ok());
    }
}
