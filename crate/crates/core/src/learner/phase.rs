//! The phase machine: profiling (1), learning (2), exploiting with probes (3).

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Profile = 1,
    Learn = 2,
    Exploit = 3,
}

impl Phase {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Events that may move the machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observation {
    /// Profiling finished; `all_learned` when every extracted shape already
    /// has an exploitable table at its observed entry level.
    ProfileConverged {
        all_learned: bool,
    },
    /// Every known peak is exploitable at its current entry level.
    PartitionConverged,
    /// A probe slot caught at least `probe_trigger` events.
    ProbeCaught,
    ProbeQuiet,
    /// A known peak was entered at a level that has not been learned yet.
    UnlearnedEntry,
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Observation::ProfileConverged { all_learned: true } => "profile-converged (all shapes learned)",
            Observation::ProfileConverged { all_learned: false } => "profile-converged",
            Observation::PartitionConverged => "partition-converged",
            Observation::ProbeCaught => "probe-caught-events",
            Observation::ProbeQuiet => "probe-quiet",
            Observation::UnlearnedEntry => "unlearned-entry",
        };
        f.write_str(s)
    }
}

pub fn phase_transition(from: Phase, obs: Observation) -> Result<Phase> {
    use Observation as O;
    use Phase as P;
    match (from, obs) {
        (P::Profile, O::ProfileConverged { all_learned: true }) => Ok(P::Exploit),
        (P::Profile, O::ProfileConverged { all_learned: false }) => Ok(P::Learn),
        (P::Learn, O::PartitionConverged) => Ok(P::Exploit),
        (P::Exploit, O::ProbeCaught) => Ok(P::Profile),
        (P::Exploit, O::ProbeQuiet) => Ok(P::Exploit),
        (P::Exploit, O::UnlearnedEntry) => Ok(P::Learn),
        (from, obs) => Err(Error::InvalidTransition {
            from: from.number(),
            observation: obs.to_string(),
        }),
    }
}

/// Picks up to `budget` probe slots uniformly from slots outside every known peak.
pub fn probe_plan(in_peak: &[bool], budget: usize, rng: &mut Stream) -> Vec<usize> {
    if budget == 0 {
        return Vec::new();
    }
    let free: Vec<usize> = (0..in_peak.len()).filter(|&s| !in_peak[s]).collect();
    let mut picks = rng.sample(&free, budget);
    picks.sort_unstable();
    picks
}
