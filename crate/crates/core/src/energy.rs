//! Harvested-energy inflow and stored-energy outflow.
//!
//! All amounts exposed by [`EnergyStore`] are in wake-cost units: one wake-up
//! costs [`WAKE_COST`]. The capacitor array works in joules internally and
//! converts through `unit_joules`.

use crate::error::{Error, Result};

/// Energy drawn by one wake-up; the unit of all store quantities.
pub const WAKE_COST: f64 = 1.0;

/// Slack for threshold comparisons on accumulated floating-point energy.
pub const ENERGY_EPS: f64 = 1e-9;

/// Inflow profile, in wake-cost-equivalents per tick before the charging ratio.
#[derive(Clone, Debug, PartialEq)]
pub enum HarvestSource {
    Constant(f64),
    /// Triangular day: zero at the period edges, `peak` at mid-period.
    DiurnalRamp {
        peak: f64,
        period_ticks: u64,
    },
    /// Per-tick samples, repeated cyclically.
    Trace(Vec<f64>),
}

impl HarvestSource {
    pub fn power(&self, tick: u64) -> f64 {
        match self {
            HarvestSource::Constant(p) => p.max(0.0),
            HarvestSource::DiurnalRamp { peak, period_ticks } => {
                if *period_ticks == 0 {
                    return 0.0;
                }
                let phase = (tick % period_ticks) as f64 / *period_ticks as f64;
                (peak * (1.0 - (2.0 * phase - 1.0).abs())).max(0.0)
            }
            HarvestSource::Trace(v) => {
                if v.is_empty() {
                    0.0
                } else {
                    v[(tick % v.len() as u64) as usize].max(0.0)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match self {
            HarvestSource::Constant(p) => !(p.is_finite() && *p >= 0.0),
            HarvestSource::DiurnalRamp { peak, .. } => !(peak.is_finite() && *peak >= 0.0),
            HarvestSource::Trace(v) => v.iter().any(|p| !(p.is_finite() && *p >= 0.0)),
        };
        if bad {
            return Err(Error::validation(
                "source",
                "harvest power must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// Energy movement caused by one harvest tick, in store units.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Inflow {
    /// Energy arriving at the store after charging efficiency, before saturation.
    pub harvested: f64,
    /// Inflow discarded because the store was saturated.
    pub wasted_saturation: f64,
    /// Charge-redistribution loss from capacitor activation.
    pub redistribution_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbstractStore {
    pub stored: f64,
    pub capacity: f64,
    pub charging_ratio: f64,
}

impl AbstractStore {
    pub fn new(capacity: f64, charging_ratio: f64, stored: f64) -> Result<Self> {
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::validation("capacity", "must be > 0"));
        }
        if !(charging_ratio.is_finite() && charging_ratio > 0.0) {
            return Err(Error::validation("charging_ratio", "must be > 0"));
        }
        if !(0.0..=capacity).contains(&stored) {
            return Err(Error::validation("initial_stored", "must lie in [0, capacity]"));
        }
        Ok(Self {
            stored,
            capacity,
            charging_ratio,
        })
    }

    pub fn harvest(&mut self, power: f64) -> Inflow {
        let incoming = power.max(0.0) * WAKE_COST / self.charging_ratio;
        let room = self.capacity - self.stored;
        if incoming > room {
            self.stored = self.capacity;
            Inflow {
                harvested: incoming,
                wasted_saturation: incoming - room,
                redistribution_loss: 0.0,
            }
        } else {
            self.stored += incoming;
            Inflow {
                harvested: incoming,
                ..Inflow::default()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capacitor {
    capacitance: f64,
    pub active: bool,
}

impl Capacitor {
    pub fn capacitance(&self) -> f64 {
        self.capacitance
    }
}

/// Voltage after connecting an uncharged `c_new` to `c_old` at voltage `v`.
pub fn redistribute_voltage(v: f64, c_old: f64, c_new: f64) -> f64 {
    if c_new <= 0.0 {
        return v;
    }
    v * c_old / (c_old + c_new)
}

/// Capacitors sharing one voltage; the active ones are a prefix of the
/// ascending-capacitance order and the first is always active.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacitorArray {
    capacitors: Vec<Capacitor>,
    voltage: f64,
    pub v_activate: f64,
    pub v_max: f64,
}

impl CapacitorArray {
    pub fn new(mut capacitances: Vec<f64>, v_activate: f64, v_max: f64) -> Result<Self> {
        if capacitances.is_empty() {
            return Err(Error::validation("capacitors", "at least one capacitor is required"));
        }
        if capacitances.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::validation("capacitors", "capacitances must be > 0"));
        }
        if !(v_max.is_finite() && v_max > 0.0 && v_activate > 0.0 && v_activate <= v_max) {
            return Err(Error::validation("v_activate", "need 0 < v_activate <= v_max"));
        }
        capacitances.sort_by(f64::total_cmp);
        let capacitors = capacitances
            .iter()
            .enumerate()
            .map(|(i, &c)| Capacitor {
                capacitance: c,
                active: i == 0,
            })
            .collect();
        Ok(Self {
            capacitors,
            voltage: 0.0,
            v_activate,
            v_max,
        })
    }

    /// Two 12 mF, two 47 mF and one 110 mF capacitor.
    pub fn image_preset() -> Self {
        Self::new(vec![0.012, 0.012, 0.047, 0.047, 0.110], 2.8, 3.3).expect("valid preset")
    }

    pub fn audio_preset() -> Self {
        Self::new(vec![0.0047, 0.012, 0.012, 0.047], 2.8, 3.3).expect("valid preset")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "image" => Ok(Self::image_preset()),
            "audio" => Ok(Self::audio_preset()),
            _ => Err(Error::validation(
                "preset",
                format!("unknown capacitor preset `{name}` (image, audio)"),
            )),
        }
    }

    pub fn capacitors(&self) -> &[Capacitor] {
        &self.capacitors
    }

    pub fn voltage(&self) -> f64 {
        self.voltage
    }

    pub fn active_count(&self) -> usize {
        self.capacitors.iter().filter(|c| c.active).count()
    }

    pub fn active_capacitance(&self) -> f64 {
        self.capacitors.iter().filter(|c| c.active).map(|c| c.capacitance).sum()
    }

    pub fn total_capacitance(&self) -> f64 {
        self.capacitors.iter().map(|c| c.capacitance).sum()
    }

    /// Stored energy in joules.
    pub fn energy(&self) -> f64 {
        0.5 * self.active_capacitance() * self.voltage * self.voltage
    }

    /// Largest storable energy in joules (everything active at `v_max`).
    pub fn max_energy(&self) -> f64 {
        0.5 * self.total_capacitance() * self.v_max * self.v_max
    }

    pub fn charge(&self) -> f64 {
        self.active_capacitance() * self.voltage
    }

    /// Charging efficiency at the current voltage: 1 - V / (2 v_max).
    pub fn eta(&self) -> f64 {
        1.0 - self.voltage / (2.0 * self.v_max)
    }

    /// Activates the smallest inactive capacitor; returns the energy lost (J).
    pub fn activate_next_capacitor(&mut self) -> Result<f64> {
        let c_old = self.active_capacitance();
        let next = self
            .capacitors
            .iter()
            .position(|c| !c.active)
            .ok_or(Error::NoInactiveCapacitor)?;
        let before = self.energy();
        let c_new = self.capacitors[next].capacitance;
        self.voltage = redistribute_voltage(self.voltage, c_old, c_new);
        self.capacitors[next].active = true;
        Ok(before - self.energy())
    }

    /// Adds `e_in` joules of incoming energy; amounts in the result are joules.
    pub fn harvest(&mut self, e_in: f64) -> Inflow {
        let e_in = e_in.max(0.0);
        let gained = self.eta() * e_in;
        let c = self.active_capacitance();
        let e = self.energy() + gained;
        self.voltage = (2.0 * e / c).sqrt();
        let mut loss = 0.0;
        while self.voltage > self.v_activate {
            match self.activate_next_capacitor() {
                Ok(l) => loss += l,
                Err(_) => break,
            }
        }
        let mut wasted = 0.0;
        if self.voltage > self.v_max {
            let before = self.energy();
            self.voltage = self.v_max;
            wasted = before - self.energy();
        }
        Inflow {
            harvested: gained,
            wasted_saturation: wasted,
            redistribution_loss: loss,
        }
    }

    pub fn draw(&mut self, joules: f64) -> Result<()> {
        let e = self.energy();
        if e + 1e-12 < joules {
            return Err(Error::InsufficientEnergy {
                stored: e,
                amount: joules,
            });
        }
        let left = (e - joules).max(0.0);
        self.voltage = (2.0 * left / self.active_capacitance()).sqrt();
        Ok(())
    }

    /// Sets the stored energy directly, activating capacitors (without
    /// redistribution) as needed to stay at or below `v_activate`.
    pub fn set_energy(&mut self, joules: f64) {
        let joules = joules.clamp(0.0, self.max_energy());
        let mut c = self.active_capacitance();
        let mut v = (2.0 * joules / c).sqrt();
        while v > self.v_activate {
            match self.capacitors.iter().position(|cap| !cap.active) {
                Some(i) => {
                    self.capacitors[i].active = true;
                    c += self.capacitors[i].capacitance;
                    v = (2.0 * joules / c).sqrt();
                }
                None => break,
            }
        }
        self.voltage = v.min(self.v_max);
    }
}

/// A capacitor array viewed in wake-cost units.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayStore {
    pub array: CapacitorArray,
    pub charging_ratio: f64,
    /// Joules per wake-cost unit.
    pub unit_joules: f64,
}

/// The two storage flavors behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum EnergyStore {
    Abstract(AbstractStore),
    Array(ArrayStore),
}

impl EnergyStore {
    pub fn abstract_store(capacity: f64, charging_ratio: f64, stored: f64) -> Result<Self> {
        AbstractStore::new(capacity, charging_ratio, stored).map(EnergyStore::Abstract)
    }

    pub fn array_store(array: CapacitorArray, charging_ratio: f64, unit_joules: f64) -> Result<Self> {
        if !(charging_ratio.is_finite() && charging_ratio > 0.0) {
            return Err(Error::validation("charging_ratio", "must be > 0"));
        }
        if !(unit_joules.is_finite() && unit_joules > 0.0) {
            return Err(Error::validation("unit_joules", "must be > 0"));
        }
        Ok(EnergyStore::Array(ArrayStore {
            array,
            charging_ratio,
            unit_joules,
        }))
    }

    pub fn stored(&self) -> f64 {
        match self {
            EnergyStore::Abstract(s) => s.stored,
            EnergyStore::Array(a) => a.array.energy() / a.unit_joules,
        }
    }

    pub fn capacity(&self) -> f64 {
        match self {
            EnergyStore::Abstract(s) => s.capacity,
            EnergyStore::Array(a) => a.array.max_energy() / a.unit_joules,
        }
    }

    pub fn charging_ratio(&self) -> f64 {
        match self {
            EnergyStore::Abstract(s) => s.charging_ratio,
            EnergyStore::Array(a) => a.charging_ratio,
        }
    }

    /// Wake-ups the current store can fund.
    pub fn can_afford(&self, amount: f64) -> bool {
        self.stored() + ENERGY_EPS >= amount
    }

    pub fn level(&self, k: usize) -> usize {
        quantize_level(self.stored(), self.capacity(), k)
    }

    /// Sets stored energy (used to pin entry levels); returns the signed change.
    pub fn set_stored(&mut self, target: f64) -> f64 {
        let before = self.stored();
        match self {
            EnergyStore::Abstract(s) => s.stored = target.clamp(0.0, s.capacity),
            EnergyStore::Array(a) => a.array.set_energy(target * a.unit_joules),
        }
        self.stored() - before
    }

    /// Draws `amount`; a failed draw leaves the store unchanged.
    pub fn draw(&mut self, amount: f64) -> Result<()> {
        let stored = self.stored();
        if amount < 0.0 || stored + ENERGY_EPS < amount {
            return Err(Error::InsufficientEnergy { stored, amount });
        }
        match self {
            EnergyStore::Abstract(s) => s.stored = (s.stored - amount).max(0.0),
            EnergyStore::Array(a) => {
                let j = (amount * a.unit_joules).min(a.array.energy());
                a.array.draw(j)?;
            }
        }
        Ok(())
    }
}

/// Applies one tick of harvesting from `source` at `tick`.
pub fn harvest_tick(store: &mut EnergyStore, source: &HarvestSource, tick: u64) -> Inflow {
    let power = source.power(tick);
    match store {
        EnergyStore::Abstract(s) => s.harvest(power),
        EnergyStore::Array(a) => {
            let e_in = power * a.unit_joules / a.charging_ratio;
            let f = a.array.harvest(e_in);
            Inflow {
                harvested: f.harvested / a.unit_joules,
                wasted_saturation: f.wasted_saturation / a.unit_joules,
                redistribution_loss: f.redistribution_loss / a.unit_joules,
            }
        }
    }
}

/// Equal-width level bins: ceil(K * stored / capacity) clamped to 1..=K.
pub fn quantize_level(stored: f64, capacity: f64, k: usize) -> usize {
    debug_assert!(k >= 1 && capacity > 0.0);
    let x = (k as f64 * stored / capacity - ENERGY_EPS).ceil();
    if x <= 1.0 {
        1
    } else {
        (x as usize).min(k)
    }
}

/// Stored energy at the top of level `level`, the value used when pinning entry levels.
pub fn level_upper_bound(level: usize, capacity: f64, k: usize) -> f64 {
    capacity * level as f64 / k as f64
}
