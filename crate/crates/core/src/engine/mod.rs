//! Continuous-time Markov chain simulators.
//!
//! [`Simulation`] runs an arbitrary [`NetworkSpec`](crate::topology::NetworkSpec)
//! under one of the [`DisciplineKind`]s. It samples events with a single
//! merged exponential clock: all rates are state independent, so the next
//! event time is exponential with the total rate and its category is chosen
//! proportionally to the individual rates.
//!
//! [`ReshufflingSim`] simulates the reshuffling system directly on stage
//! counts, and [`run_free`] draws independent free-system packets.

mod discipline;
mod free;
mod general;
mod observer;
mod reshuffle;
mod state;

pub use discipline::{select_packet, useful_on_link, DisciplineKind, SelfishFallback};
pub use free::run_free;
pub use general::{check_ou_nesting, run, step, Simulation};
pub use observer::{Observer, Occupancy};
pub use reshuffle::{run_reshuffling, ReshufflingSim, StageCounts};
pub use state::{init_impulse, Availability, PacketId, PacketState, SystemState};

use crate::metrics::{MetricsAccumulator, UsefulCountHistogram};
use crate::topology::NodeId;
use crate::transform::DelayProfileAccumulator;
use crate::{Error, Result};
use alloc::vec::Vec;

/// What happened at one event of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// A fresh stage-1 packet at `node`.
    Arrival { node: NodeId, packet: PacketId },
    /// Communication epoch on a link. `delivered` counts transmitted packets
    /// (more than one only in the free system); `packet`/`stage_after`
    /// describe the first of them.
    Epoch {
        from: NodeId,
        to: NodeId,
        delivered: u32,
        packet: Option<PacketId>,
        stage_after: Option<u32>,
    },
    /// Communication epoch of the reshuffling system, where link identity is
    /// irrelevant. `useful` is the number of competing useful packets.
    Shuffled {
        useful: u32,
        packet: Option<PacketId>,
        stage_after: Option<u32>,
    },
}

impl EventKind {
    pub fn packet(&self) -> Option<PacketId> {
        match *self {
            EventKind::Arrival { packet, .. } => Some(packet),
            EventKind::Epoch { packet, .. } | EventKind::Shuffled { packet, .. } => packet,
        }
    }

    pub fn stage_after(&self) -> Option<u32> {
        match *self {
            EventKind::Arrival { .. } => Some(1),
            EventKind::Epoch { stage_after, .. } | EventKind::Shuffled { stage_after, .. } => {
                stage_after
            }
        }
    }
}

/// Run length and recording options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Absolute end time. May be infinite for runs without arrivals, which
    /// then stop once the system empties.
    pub horizon: f64,
    /// Statistics accumulate from this time on.
    pub warmup: f64,
    /// Keep per-packet stage-hit times and fold them into a delay profile.
    pub record_profile: bool,
}

impl RunConfig {
    pub fn new(horizon: f64, warmup: f64) -> Self {
        Self {
            horizon,
            warmup,
            record_profile: false,
        }
    }

    pub fn with_profile(mut self) -> Self {
        self.record_profile = true;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.warmup >= 0.0 && self.warmup.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "warmup",
                reason: "must be finite and nonnegative",
            });
        }
        if !(self.horizon > self.warmup) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must exceed warmup",
            });
        }
        Ok(())
    }
}

/// Everything a run accumulated. Results of independent replications can
/// be merged.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub events: u64,
    pub end_time: f64,
    pub metrics: MetricsAccumulator,
    /// Sojourn times of packets that arrived at or after warm-up and
    /// departed before the end of the run.
    pub sojourns: Vec<f64>,
    /// Packets that arrived at or after warm-up but were still present at
    /// the end.
    pub censored: u64,
    pub profile: Option<DelayProfileAccumulator>,
    /// Useful-packet counts at communication epochs (reshuffling runs only).
    pub useful_counts: UsefulCountHistogram,
}

impl RunResult {
    pub fn merge(&mut self, other: &RunResult) {
        self.events += other.events;
        self.end_time = self.end_time.max(other.end_time);
        self.metrics.merge(&other.metrics);
        self.sojourns.extend_from_slice(&other.sojourns);
        self.censored += other.censored;
        match (&mut self.profile, &other.profile) {
            (Some(a), Some(b)) => a.merge(b),
            (None, Some(b)) => self.profile = Some(b.clone()),
            _ => {}
        }
        self.useful_counts.merge(&other.useful_counts);
    }
}
