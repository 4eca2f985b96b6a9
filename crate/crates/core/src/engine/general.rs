use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1};

use super::discipline::select_position;
use super::{
    DisciplineKind, Event, EventKind, Observer, PacketId, PacketState, RunConfig, RunResult,
    SelfishFallback, SystemState,
};
use crate::error::{invalid, Error, Result};
use crate::metrics::{Recorder, StageHitRecord};
use crate::topology::{LinkSet, NetworkSpec, NodeId};
use crate::RngStream;

#[derive(Debug, Clone)]
enum NodePick {
    None,
    Uniform,
    Alias(WeightedAliasIndex<f64>),
}

#[derive(Debug, Clone)]
enum LinkPick {
    Complete,
    Alias(WeightedAliasIndex<f64>, Vec<(NodeId, NodeId)>),
}

enum Sampled {
    Arrival(NodeId),
    Epoch(NodeId, NodeId),
}

/// Merged-clock sampler: O(1) per event through alias tables, with
/// implicit uniform draws for complete homogeneous link sets.
#[derive(Debug, Clone)]
struct EventSampler {
    n: usize,
    arrival_total: f64,
    total: f64,
    nodes: NodePick,
    links: LinkPick,
}

impl EventSampler {
    fn new(net: &NetworkSpec) -> Result<Self> {
        let n = net.node_count();
        let arrival_total = net.total_arrival_rate();
        let total = arrival_total + net.total_capacity();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroRate);
        }
        let nodes = if arrival_total == 0.0 {
            NodePick::None
        } else if net.uniform_arrival_rate().is_some() {
            NodePick::Uniform
        } else {
            NodePick::Alias(
                WeightedAliasIndex::new(net.arrival_rates().to_vec())
                    .map_err(|_| invalid("arrival_rates", "alias table construction failed"))?,
            )
        };
        let links = match net.link_set() {
            LinkSet::Complete { .. } => LinkPick::Complete,
            LinkSet::Explicit(l) => {
                if l.is_empty() {
                    return Err(Error::InvalidNetwork("network has no links"));
                }
                let w = l.iter().map(|k| k.capacity).collect();
                let ends = l.iter().map(|k| (k.from, k.to)).collect();
                LinkPick::Alias(
                    WeightedAliasIndex::new(w)
                        .map_err(|_| invalid("capacity", "alias table construction failed"))?,
                    ends,
                )
            }
        };
        Ok(Self {
            n,
            arrival_total,
            total,
            nodes,
            links,
        })
    }

    #[inline]
    fn holding_time(&self, rng: &mut RngStream) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / self.total
    }

    #[inline]
    fn sample(&self, rng: &mut RngStream) -> Sampled {
        let u = rng.random::<f64>() * self.total;
        if u < self.arrival_total {
            let node = match &self.nodes {
                NodePick::Uniform => rng.random_range(0..self.n),
                NodePick::Alias(a) => a.sample(rng),
                NodePick::None => unreachable!("arrival with zero arrival rate"),
            };
            return Sampled::Arrival(NodeId(node));
        }
        match &self.links {
            LinkPick::Complete => {
                let u = rng.random_range(0..self.n);
                let mut v = rng.random_range(0..self.n - 1);
                if v >= u {
                    v += 1;
                }
                Sampled::Epoch(NodeId(u), NodeId(v))
            }
            LinkPick::Alias(a, ends) => {
                let (u, v) = ends[a.sample(rng)];
                Sampled::Epoch(u, v)
            }
        }
    }
}

/// Calls `f` on the useful packets of `(from, to)` in arrival order until
/// it returns true. Stops once all `held` packets present at `from` have
/// been seen.
#[inline]
fn scan_useful(
    packets: &VecDeque<PacketState>,
    from: NodeId,
    to: NodeId,
    held: u64,
    mut f: impl FnMut(usize, &PacketState) -> bool,
) {
    if held == 0 {
        return;
    }
    let mut seen = 0;
    for (i, p) in packets.iter().enumerate() {
        if p.availability.contains(from) {
            if !p.availability.contains(to) && f(i, p) {
                return;
            }
            seen += 1;
            if seen == held {
                return;
            }
        }
    }
}

/// Simulator for a fixed network and discipline.
#[derive(Debug, Clone)]
pub struct Simulation {
    discipline: DisciplineKind,
    sampler: EventSampler,
    state: SystemState,
    rng: RngStream,
    scratch: Vec<usize>,
    events: u64,
}

impl Simulation {
    /// Starts from the empty state at time 0.
    pub fn new(net: &NetworkSpec, discipline: DisciplineKind, rng: RngStream) -> Result<Self> {
        Ok(Self {
            discipline,
            sampler: EventSampler::new(net)?,
            state: SystemState::empty(net.node_count()),
            rng,
            scratch: Vec::new(),
            events: 0,
        })
    }

    /// Replaces the current state, e.g. with an impulse from
    /// [`init_impulse`](super::init_impulse).
    pub fn with_state(mut self, state: SystemState) -> Result<Self> {
        if state.node_count != self.sampler.n {
            return Err(invalid("state", "node count does not match the network"));
        }
        let record = self.state.record_hits;
        self.state = state;
        self.set_record_hits(record);
        Ok(self)
    }

    /// Keep stage-hit times for packets (needed for delay profiles).
    pub fn set_record_hits(&mut self, on: bool) {
        self.state.record_hits = on;
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn into_rng(self) -> RngStream {
        self.rng
    }

    fn idle(&self) -> bool {
        self.sampler.arrival_total == 0.0 && self.state.packets.is_empty()
    }

    /// Advances to the next event unless it would fall after `horizon`, in
    /// which case the clock stops at `horizon` and `None` is returned. A
    /// system that is empty and receives no arrivals also stops (at
    /// `horizon` when it is finite).
    pub fn advance<O: Observer<SystemState>>(
        &mut self,
        horizon: f64,
        obs: &mut O,
    ) -> Option<Event> {
        let now = self.state.clock;
        if self.idle() {
            if horizon.is_finite() && horizon > now {
                obs.interval(now, horizon, &self.state);
                self.state.clock = horizon;
            }
            return None;
        }
        let t = now + self.sampler.holding_time(&mut self.rng);
        if t > horizon {
            obs.interval(now, horizon, &self.state);
            self.state.clock = horizon;
            return None;
        }
        obs.interval(now, t, &self.state);
        self.state.clock = t;
        self.events += 1;
        let kind = match self.sampler.sample(&mut self.rng) {
            Sampled::Arrival(node) => {
                let packet = self.state.push_packet(node, t);
                EventKind::Arrival { node, packet }
            }
            Sampled::Epoch(from, to) => self.epoch(from, to, obs),
        };
        let ev = Event { time: t, kind };
        obs.event(&ev, &self.state);
        Some(ev)
    }

    fn epoch<O: Observer<SystemState>>(&mut self, from: NodeId, to: NodeId, obs: &mut O) -> EventKind {
        let packets = &self.state.packets;
        let held = self.state.held[from.0];
        let chosen = match self.discipline {
            DisciplineKind::OldestUseful => {
                let mut first = None;
                scan_useful(packets, from, to, held, |i, _| {
                    first = Some(i);
                    true
                });
                first
            }
            DisciplineKind::Selfish(SelfishFallback::OldestFirst) => {
                let mut first = None;
                let mut own = None;
                scan_useful(packets, from, to, held, |i, p| {
                    first.get_or_insert(i);
                    if p.source == from {
                        own = Some(i);
                        return true;
                    }
                    false
                });
                own.or(first)
            }
            _ => {
                self.scratch.clear();
                let scratch = &mut self.scratch;
                scan_useful(packets, from, to, held, |i, _| {
                    scratch.push(i);
                    false
                });
                if self.discipline == DisciplineKind::Free {
                    return self.deliver_all(from, to, obs);
                }
                select_position(
                    self.discipline,
                    from,
                    &self.scratch,
                    |i| &packets[i],
                    &mut self.rng,
                )
                .map(|k| self.scratch[k])
            }
        };
        match chosen {
            None => EventKind::Epoch {
                from,
                to,
                delivered: 0,
                packet: None,
                stage_after: None,
            },
            Some(i) => {
                let (id, stage) = self.transmit(i, to, obs);
                EventKind::Epoch {
                    from,
                    to,
                    delivered: 1,
                    packet: Some(id),
                    stage_after: Some(stage),
                }
            }
        }
    }

    fn deliver_all<O: Observer<SystemState>>(
        &mut self,
        from: NodeId,
        to: NodeId,
        obs: &mut O,
    ) -> EventKind {
        let k = self.scratch.len();
        let mut first = None;
        // Highest position first so removals do not shift pending ones.
        for j in (0..k).rev() {
            let i = self.scratch[j];
            first = Some(self.transmit(i, to, obs));
        }
        EventKind::Epoch {
            from,
            to,
            delivered: k as u32,
            packet: first.map(|f| f.0),
            stage_after: first.map(|f| f.1),
        }
    }

    fn transmit<O: Observer<SystemState>>(
        &mut self,
        pos: usize,
        to: NodeId,
        obs: &mut O,
    ) -> (PacketId, u32) {
        let n = self.state.node_count as u32;
        let clock = self.state.clock;
        let record = self.state.record_hits;
        let p = &mut self.state.packets[pos];
        let fresh = p.availability.insert(to);
        debug_assert!(fresh, "transmitted packet was not useful");
        p.stage += 1;
        if record {
            p.hits.push(clock);
        }
        let (id, stage) = (p.id, p.stage);
        self.state.undelivered -= 1;
        self.state.held[to.0] += 1;
        if stage == n {
            for h in &mut self.state.held {
                *h -= 1;
            }
            let p = self
                .state
                .packets
                .remove(pos)
                .expect("position within bounds");
            let rec = StageHitRecord::new(p.id, p.arrival_time, clock, p.hits);
            obs.departure(&rec);
        }
        (id, stage)
    }

    /// Runs until the clock reaches `horizon` (or the system empties with
    /// no arrivals possible).
    pub fn run_until<O: Observer<SystemState>>(&mut self, horizon: f64, obs: &mut O) {
        obs.start(self.state.clock, &self.state);
        while self.advance(horizon, obs).is_some() {}
        obs.finish(self.state.clock, &self.state);
    }
}

/// Applies one event to `state`. Convenience form of
/// [`Simulation::advance`] for callers that manage the state themselves.
pub fn step(
    state: &mut SystemState,
    net: &NetworkSpec,
    discipline: DisciplineKind,
    rng: &mut RngStream,
) -> Result<Event> {
    let taken = core::mem::replace(state, SystemState::empty(net.node_count()));
    let r = core::mem::replace(rng, RngStream::new(0));
    let mut sim = Simulation::new(net, discipline, r)?.with_state(taken)?;
    let ev = sim.advance(f64::INFINITY, &mut ());
    *state = sim.state;
    *rng = sim.rng;
    ev.ok_or(Error::ZeroRate)
}

/// Simulates from the empty state up to `cfg.horizon`, accumulating the
/// standard metrics from `cfg.warmup` on. `observer` sees every event.
pub fn run<O: Observer<SystemState>>(
    net: &NetworkSpec,
    discipline: DisciplineKind,
    cfg: &RunConfig,
    rng: &mut RngStream,
    observer: &mut O,
) -> Result<RunResult> {
    cfg.validate()?;
    let r = core::mem::replace(rng, RngStream::new(0));
    let mut sim = Simulation::new(net, discipline, r)?;
    let result = run_simulation(&mut sim, cfg, observer);
    *rng = sim.rng;
    Ok(result)
}

/// Runs an already configured simulation (for instance one started from an
/// impulse) and collects the standard metrics.
pub(crate) fn run_simulation<O: Observer<SystemState>>(
    sim: &mut Simulation,
    cfg: &RunConfig,
    observer: &mut O,
) -> RunResult {
    if cfg.record_profile {
        sim.set_record_hits(true);
    }
    let n = sim.state.node_count;
    let mut rec = Recorder::new(n, cfg.warmup, cfg.record_profile);
    sim.run_until(cfg.horizon, &mut (&mut rec, observer));
    let censored = sim
        .state
        .packets
        .iter()
        .filter(|p| p.arrival_time >= cfg.warmup)
        .count() as u64;
    rec.into_result(sim.events, sim.state.clock, censored)
}

impl Simulation {
    /// Runs with the standard recorder; see [`run`].
    pub fn run_recorded<O: Observer<SystemState>>(
        &mut self,
        cfg: &RunConfig,
        observer: &mut O,
    ) -> Result<RunResult> {
        if !(cfg.warmup >= 0.0) {
            return Err(invalid("warmup", "must be nonnegative"));
        }
        Ok(run_simulation(self, cfg, observer))
    }
}

/// True when, for every source, each younger packet's availability set is
/// contained in every older one's. Holds at all times under Oldest-Useful
/// on a complete homogeneous network.
pub fn check_ou_nesting(state: &SystemState) -> bool {
    let ps: Vec<_> = state.packets.iter().collect();
    for (i, older) in ps.iter().enumerate() {
        for younger in &ps[i + 1..] {
            if younger.source == older.source
                && !younger.availability.is_subset(&older.availability)
            {
                return false;
            }
        }
    }
    true
}
