//! Property checks shared by the proptest suite and the acceptance runner.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use smarton_core::config::{parse_scenario, write_config, Scenario};
use smarton_core::energy::{CapacitorArray, HarvestSource};
use smarton_core::engine::{run_experiment, EntryPlan, SimConfig, StopRule};
use smarton_core::learner::{q_update, LearnerConfig, QTable, ShapeKey, SlotProfile};
use smarton_core::policies::PolicyKind;
use smarton_core::report::emit_csv;
use smarton_core::sweep::run_sweep;
use smarton_core::world::{sample_trace, PeakDecl, ShapeName, StepClass};

pub fn shape_strategy() -> impl Strategy<Value = ShapeName> {
    prop::sample::select(ShapeName::CANONICAL.to_vec())
}

pub fn policy_strategy() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(PolicyKind::ALL.to_vec())
}

// ---- capacitor activation --------------------------------------------------

#[derive(Clone, Debug)]
pub struct ArrayCase {
    pub caps: Vec<f64>,
    pub v: f64,
}

pub fn array_strategy() -> impl Strategy<Value = ArrayCase> {
    (prop::collection::vec(1e-4f64..0.5, 2..6), 0.0f64..3.3).prop_map(|(caps, v)| ArrayCase { caps, v })
}

/// Activating the next capacitor keeps Q = C V and loses the energy
/// 0.5 C_old V^2 (1 - C_old / C_new_total).
pub fn charge_conservation(case: ArrayCase) -> Result<(), TestCaseError> {
    let mut a = CapacitorArray::new(case.caps.clone(), 3.3, 3.3).unwrap();
    a.set_energy(0.5 * a.active_capacitance() * case.v * case.v);
    while a.active_count() < case.caps.len() {
        let q0 = a.charge();
        let e0 = a.energy();
        let c0 = a.active_capacitance();
        let lost = a.activate_next_capacitor().unwrap();
        let q1 = a.charge();
        prop_assert!(
            (q1 - q0).abs() <= 1e-12 * q0.abs().max(f64::MIN_POSITIVE),
            "charge {q0} -> {q1}"
        );
        let expect_lost = e0 * (1.0 - c0 / a.active_capacitance());
        prop_assert!((lost - expect_lost).abs() <= 1e-12 * e0.max(1e-300) + 1e-18);
    }
    Ok(())
}

// ---- short simulations ----------------------------------------------------

#[derive(Clone, Debug)]
pub struct SimCase {
    pub policy: PolicyKind,
    pub shape: ShapeName,
    pub start_slot: usize,
    pub ratio: f64,
    pub entry: Option<usize>,
    pub initial: f64,
    pub array: bool,
    pub seed: u64,
    pub periods: usize,
}

pub fn sim_strategy() -> impl Strategy<Value = SimCase> {
    (
        policy_strategy(),
        shape_strategy(),
        0usize..36,
        prop::sample::select(vec![1.0, 3.0, 6.0, 9.0, 12.0]),
        prop::option::of(1usize..=4),
        0.0f64..120.0,
        prop::bool::weighted(0.2),
        any::<u64>(),
        1usize..4,
    )
        .prop_map(
            |(policy, shape, start_slot, ratio, entry, initial, array, seed, periods)| SimCase {
                policy,
                shape,
                start_slot,
                ratio,
                entry,
                initial,
                array,
                seed,
                periods,
            },
        )
}

pub fn sim_config(c: &SimCase) -> SimConfig {
    let mut cfg = SimConfig {
        seed: c.seed,
        n_periods: c.periods,
        stop: StopRule::Fixed,
        ..SimConfig::default()
    };
    cfg.pattern.peaks = vec![PeakDecl::new(c.shape, c.start_slot)];
    cfg.policy.kind = c.policy;
    cfg.energy.charging_ratio = c.ratio;
    cfg.energy.entry = c.entry.map_or(EntryPlan::Free, EntryPlan::Fixed);
    if c.array {
        cfg.energy.kind = smarton_core::engine::StoreKind::Array;
        cfg.energy.initial_stored = 0.0;
    } else {
        cfg.energy.initial_stored = c.initial;
    }
    cfg
}

/// Per-period energy ledger, metric bounds and the |Q| bound.
pub fn ledger_and_bounds(c: SimCase) -> Result<(), TestCaseError> {
    let cfg = sim_config(&c);
    let res = run_experiment(&cfg).unwrap();
    prop_assert_eq!(res.periods.len(), c.periods);
    for l in &res.periods {
        let scale = l.stored_end.abs().max(l.stored_start.abs()).max(l.harvested).max(1.0);
        prop_assert!(
            (l.stored_end - l.ledger_end()).abs() <= 1e-9 * scale,
            "period {}: end {} ledger {}",
            l.period,
            l.stored_end,
            l.ledger_end()
        );
        prop_assert!(l.catches <= l.awake_ticks.min(l.event_ticks));
        if c.policy == PolicyKind::Gt {
            prop_assert_eq!(l.catches, l.event_ticks);
        }
    }
    let m = res.metrics();
    prop_assert!(m.total_catches <= m.awake_ticks.min(m.event_ticks));
    prop_assert!((0.0..=1.0).contains(&m.energy_efficiency));
    if let Some(learner) = &res.learner {
        let bound = cfg.learner.q_bound();
        for t in learner.tables().values() {
            prop_assert!(t.values().iter().all(|q| q.abs() <= bound));
        }
    }
    Ok(())
}

// ---- Q-value bound under arbitrary update sequences -----------------------

#[derive(Clone, Debug)]
pub struct UpdateSeq {
    /// (state, action, wakes, catches, next state or terminal)
    pub steps: Vec<(usize, usize, usize, usize, Option<usize>)>,
}

pub fn update_strategy() -> impl Strategy<Value = UpdateSeq> {
    prop::collection::vec(
        (
            0usize..16,
            0usize..4,
            0usize..=30,
            0usize..=30,
            prop::option::of(0usize..16),
        ),
        1..200,
    )
    .prop_map(|v| UpdateSeq {
        steps: v.into_iter().map(|(s, a, w, c, n)| (s, a, w, c.min(w), n)).collect(),
    })
}

pub fn q_bound_holds(seq: UpdateSeq) -> Result<(), TestCaseError> {
    let cfg = LearnerConfig::default();
    let bound = 300.0 / (1.0 - 0.618);
    let mut t = QTable::new(
        ShapeKey(vec![StepClass::L, StepClass::H, StepClass::L, StepClass::H]),
        4,
        4,
    );
    let all = [0usize, 1, 2, 3];
    for (s, a, wakes, catches, next) in seq.steps {
        let reward = 10.0 * catches as f64 - (wakes - catches) as f64;
        q_update(&mut t, s, a, reward, next.map(|n| (n, &all[..])), &cfg);
        prop_assert!(t.get(s, a).abs() <= bound);
    }
    Ok(())
}

// ---- profiling visits ------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ProfileCase {
    pub slots: usize,
    pub budget: Vec<f64>,
    pub cost: f64,
}

pub fn profile_strategy() -> impl Strategy<Value = ProfileCase> {
    (2usize..50, 1.0f64..40.0).prop_flat_map(|(slots, cost)| {
        prop::collection::vec(0.0f64..120.0, slots * 4).prop_map(move |budget| ProfileCase { slots, budget, cost })
    })
}

/// Within one profiling round every slot is profiled exactly once,
/// whatever energy the node has at each slot start.
pub fn profile_visits_once(c: ProfileCase) -> Result<(), TestCaseError> {
    let mut p = SlotProfile::new(c.slots);
    let mut visits = vec![0u32; c.slots];
    let mut draws = c.budget.iter().cycle();
    for _ in 0..200 {
        for (slot, v) in visits.iter_mut().enumerate() {
            let stored = *draws.next().unwrap();
            if p.begin_slot(slot, stored, c.cost, 1) {
                *v += 1;
            }
        }
        if p.end_pass() {
            prop_assert!(visits.iter().all(|&v| v == 1), "visits {visits:?}");
            visits.iter_mut().for_each(|v| *v = 0);
        } else {
            prop_assert!(visits.iter().all(|&v| v <= 1));
        }
    }
    Ok(())
}

// ---- whole-pipeline replay -------------------------------------------------

pub fn replay_strategy() -> impl Strategy<Value = (u64, ShapeName)> {
    (0u64..1_000, shape_strategy())
}

/// Running the same sweep twice writes byte-identical CSV files.
pub fn replay_is_identical((seed, shape): (u64, ShapeName)) -> Result<(), TestCaseError> {
    let text = format!(
        "name = replay\nn_periods = 3\nstop = fixed\n[energy]\ncharging_ratio = 6\n[sweep]\nevent_type = {shape}\n\
         policy = smarton, ctid, gt\nentry_level = 2, 4\nseed = {seed}, {}\n",
        seed + 1
    );
    let s = parse_scenario(&text).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_csv(&run_sweep(&s, 1).unwrap(), a.path()).unwrap();
    emit_csv(&run_sweep(&s, 2).unwrap(), b.path()).unwrap();
    for name in ["metrics.csv", "runs.csv", "convergence.csv", "timeline.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        prop_assert!(x == y, "{name} differs");
    }
    Ok(())
}

// ---- config round trip -----------------------------------------------------

pub fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (
        (
            0.0f64..=1.0,
            0.0f64..0.99,
            2usize..12,
            prop::sample::select(vec![10usize, 20, 30, 40, 60]),
        ),
        (0.5f64..20.0, 10.0f64..500.0, prop::option::of(1usize..=2)),
        (
            prop::collection::vec(shape_strategy(), 1..4),
            prop::collection::vec(policy_strategy(), 1..4),
        ),
        (
            prop::collection::vec(any::<u64>(), 1..5),
            1usize..500,
            prop::sample::select(vec![0.0, 0.5, 2.5]),
        ),
    )
        .prop_map(
            |((alpha, gamma, k, d), (ratio, capacity, entry), (types, policies), (seeds, n, src))| {
                let mut c = SimConfig::default();
                c.learner.alpha = alpha;
                c.learner.gamma = gamma;
                c.learner.k_levels = k;
                c.learner.state_duration = d;
                c.energy.charging_ratio = ratio;
                c.energy.capacity = capacity;
                c.energy.source = HarvestSource::Constant(src);
                c.energy.entry = entry.map_or(EntryPlan::Free, EntryPlan::Fixed);
                c.policy.ctid.e_on = capacity.min(30.0);
                c.n_periods = n;
                let mut s = Scenario::from_base(c);
                s.sweep.event_type = types;
                s.sweep.policy = policies;
                s.sweep.seed = seeds;
                s
            },
        )
}

pub fn config_round_trip(s: Scenario) -> Result<(), TestCaseError> {
    let text = write_config(&s);
    let back = parse_scenario(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(back, s);
    Ok(())
}

/// GT oracle used by the acceptance runner: catches equal the trace's events.
pub fn gt_catches_match(c: &SimCase) -> bool {
    let mut cfg = sim_config(c);
    cfg.policy.kind = PolicyKind::Gt;
    let res = run_experiment(&cfg).unwrap();
    let pattern = smarton_core::world::build_pattern(&cfg.pattern).unwrap();
    let events = sample_trace(&pattern, cfg.seed, cfg.n_periods).event_count();
    res.metrics().total_catches == events
}
