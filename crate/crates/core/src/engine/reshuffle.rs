use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};

use super::{Event, EventKind, Observer, Occupancy, PacketId, RunConfig, RunResult};
use crate::error::{invalid, Result};
use crate::metrics::{Recorder, StageHitRecord};
use crate::RngStream;

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    id: PacketId,
    arrival: f64,
    hits: Vec<f64>,
}

/// State of the reshuffling system: the number of packets at every stage,
/// with per-stage registries so individual packets can be followed.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCounts {
    n: usize,
    clock: f64,
    /// `stages[i]` holds the stage-`i` packets; index 0 is unused.
    stages: Vec<Vec<Entry>>,
    occupied: Vec<u32>,
    slot: Vec<u32>,
    arrivals: BTreeMap<PacketId, f64>,
    undelivered: u64,
    next_id: u64,
    record_hits: bool,
}

const NONE: u32 = u32::MAX;

impl StageCounts {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            clock: 0.0,
            stages: vec![Vec::new(); n],
            occupied: Vec::new(),
            slot: vec![NONE; n],
            arrivals: BTreeMap::new(),
            undelivered: 0,
            next_id: 1,
            record_hits: false,
        }
    }

    /// `mass` stage-1 packets arriving at time 0.
    pub fn impulse(n: usize, mass: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        if mass == 0 {
            return Err(invalid("mass", "must be at least 1"));
        }
        let mut s = Self::empty(n);
        for _ in 0..mass {
            s.place(1, 0.0)?;
        }
        Ok(s)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// `n(i)`; zero outside `1..N`.
    pub fn count(&self, stage: usize) -> usize {
        self.stages.get(stage).map_or(0, Vec::len)
    }

    /// `n(1), ..., n(N-1)`.
    pub fn counts(&self) -> Vec<usize> {
        self.stages[1..].iter().map(Vec::len).collect()
    }

    /// Stages with at least one packet, in no particular order.
    pub fn occupied(&self) -> &[u32] {
        &self.occupied
    }

    /// Adds a packet directly at `stage` (arrival time `arrival_time`).
    pub fn place(&mut self, stage: usize, arrival_time: f64) -> Result<PacketId> {
        if stage == 0 || stage >= self.n {
            return Err(invalid("stage", "must lie in 1..N"));
        }
        let id = PacketId(self.next_id);
        self.next_id += 1;
        let mut hits = Vec::new();
        if self.record_hits {
            hits.reserve_exact(self.n - 1);
            // Stages skipped by direct placement count as reached on arrival.
            hits.resize(stage - 1, arrival_time);
        }
        self.arrivals.insert(id, arrival_time);
        self.undelivered += (self.n - stage) as u64;
        self.push(stage, Entry { id, arrival: arrival_time, hits });
        Ok(id)
    }

    fn push(&mut self, stage: usize, e: Entry) {
        if self.stages[stage].is_empty() {
            self.slot[stage] = self.occupied.len() as u32;
            self.occupied.push(stage as u32);
        }
        self.stages[stage].push(e);
    }

    fn take(&mut self, stage: usize, index: usize) -> Entry {
        let e = self.stages[stage].swap_remove(index);
        if self.stages[stage].is_empty() {
            let k = self.slot[stage] as usize;
            self.occupied.swap_remove(k);
            if let Some(&moved) = self.occupied.get(k) {
                self.slot[moved as usize] = k as u32;
            }
            self.slot[stage] = NONE;
        }
        e
    }

    /// Debug check: registries, occupied list and counters agree.
    pub fn check_invariants(&self) -> bool {
        let mut undelivered = 0u64;
        let mut total = 0usize;
        for (i, s) in self.stages.iter().enumerate() {
            let listed = self.slot[i] != NONE;
            if listed != !s.is_empty() || (i == 0 && listed) {
                return false;
            }
            if listed && self.occupied[self.slot[i] as usize] as usize != i {
                return false;
            }
            undelivered += ((self.n - i) * s.len()) as u64;
            total += s.len();
        }
        undelivered == self.undelivered && total == self.arrivals.len()
    }
}

impl Occupancy for StageCounts {
    fn distinct(&self) -> usize {
        self.arrivals.len()
    }
    fn undelivered(&self) -> u64 {
        self.undelivered
    }
    fn oldest_arrival(&self) -> Option<f64> {
        // Ids grow with arrival time.
        self.arrivals.first_key_value().map(|(_, &t)| t)
    }
}

/// Exact simulator of the reshuffling system on stage counts.
#[derive(Debug, Clone)]
pub struct ReshufflingSim {
    lambda: f64,
    arrival_rate: f64,
    total_rate: f64,
    /// `p[i] = i(N-i) / (N(N-1))`: chance a stage-`i` packet is useful on a
    /// uniformly chosen link.
    p: Vec<f64>,
    useful: Vec<(u32, u64)>,
    state: StageCounts,
    rng: RngStream,
    events: u64,
}

impl ReshufflingSim {
    pub fn new(n: usize, lambda: f64, rng: RngStream) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", "must be finite and nonnegative"));
        }
        let nf = n as f64;
        let links = nf * (nf - 1.0);
        let p = (0..n).map(|i| (i * (n - i)) as f64 / links).collect();
        Ok(Self {
            lambda,
            arrival_rate: lambda * nf,
            total_rate: lambda * nf + links,
            p,
            useful: Vec::new(),
            state: StageCounts::empty(n),
            rng,
            events: 0,
        })
    }

    pub fn with_state(mut self, state: StageCounts) -> Result<Self> {
        if state.n != self.state.n {
            return Err(invalid("state", "node count does not match"));
        }
        let record = self.state.record_hits;
        self.state = state;
        self.set_record_hits(record);
        Ok(self)
    }

    /// Keep stage-hit times (needed for delay profiles). Applies to packets
    /// created afterwards.
    pub fn set_record_hits(&mut self, on: bool) {
        self.state.record_hits = on;
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn state(&self) -> &StageCounts {
        &self.state
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn into_rng(self) -> RngStream {
        self.rng
    }

    /// Performs one communication epoch at the current clock: draws the
    /// useful packets of every stage, advances one of them uniformly, and
    /// reports the count to `obs`.
    pub fn communicate<O: Observer<StageCounts>>(&mut self, obs: &mut O) -> EventKind {
        let t = self.state.clock;
        self.useful.clear();
        let mut k_total = 0u64;
        for &stage in &self.state.occupied {
            let n_i = self.state.stages[stage as usize].len() as u64;
            let p = self.p[stage as usize];
            let k = if n_i <= 16 {
                (0..n_i).filter(|_| self.rng.random::<f64>() < p).count() as u64
            } else {
                Binomial::new(n_i, p)
                    .expect("probability lies in [0, 1]")
                    .sample(&mut self.rng)
            };
            if k > 0 {
                self.useful.push((stage, k));
                k_total += k;
            }
        }
        obs.useful(t, k_total as usize);
        if k_total == 0 {
            return EventKind::Shuffled {
                useful: 0,
                packet: None,
                stage_after: None,
            };
        }
        let mut r = self.rng.random_range(0..k_total);
        let mut stage = 0usize;
        for &(s, k) in &self.useful {
            if r < k {
                stage = s as usize;
                break;
            }
            r -= k;
        }
        let len = self.state.stages[stage].len();
        let idx = self.rng.random_range(0..len);
        let mut e = self.state.take(stage, idx);
        if self.state.record_hits {
            e.hits.push(t);
        }
        self.state.undelivered -= 1;
        let next = stage + 1;
        let id = e.id;
        if next == self.state.n {
            self.state.arrivals.remove(&id);
            obs.departure(&StageHitRecord::new(id, e.arrival, t, e.hits));
        } else {
            self.state.push(next, e);
        }
        EventKind::Shuffled {
            useful: k_total as u32,
            packet: Some(id),
            stage_after: Some(next as u32),
        }
    }

    /// Advances to the next event unless it falls after `horizon`. With no
    /// arrivals, an empty system and an infinite horizon the run stops.
    pub fn advance<O: Observer<StageCounts>>(&mut self, horizon: f64, obs: &mut O) -> Option<Event> {
        let now = self.state.clock;
        if self.arrival_rate == 0.0 && self.state.arrivals.is_empty() && !horizon.is_finite() {
            return None;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        let t = now + e / self.total_rate;
        if t > horizon {
            obs.interval(now, horizon, &self.state);
            self.state.clock = horizon;
            return None;
        }
        obs.interval(now, t, &self.state);
        self.state.clock = t;
        self.events += 1;
        let kind = if self.rng.random::<f64>() * self.total_rate < self.arrival_rate {
            let packet = self.state.place(1, t).expect("stage 1 is valid");
            let node = crate::topology::NodeId(self.rng.random_range(0..self.state.n));
            EventKind::Arrival { node, packet }
        } else {
            self.communicate(obs)
        };
        let ev = Event { time: t, kind };
        obs.event(&ev, &self.state);
        Some(ev)
    }

    pub fn run_until<O: Observer<StageCounts>>(&mut self, horizon: f64, obs: &mut O) {
        obs.start(self.state.clock, &self.state);
        while self.advance(horizon, obs).is_some() {}
        obs.finish(self.state.clock, &self.state);
    }

    /// Runs with the standard recorder up to `cfg.horizon`.
    pub fn run_recorded<O: Observer<StageCounts>>(
        &mut self,
        cfg: &RunConfig,
        observer: &mut O,
    ) -> RunResult {
        if cfg.record_profile {
            self.set_record_hits(true);
        }
        let mut rec = Recorder::new(self.state.n, cfg.warmup, cfg.record_profile);
        self.run_until(cfg.horizon, &mut (&mut rec, observer));
        let censored = self
            .state
            .arrivals
            .values()
            .filter(|&&t| t >= cfg.warmup)
            .count() as u64;
        rec.into_result(self.events, self.state.clock, censored)
    }
}

/// Simulates the reshuffling system from the empty state.
pub fn run_reshuffling<O: Observer<StageCounts>>(
    n: usize,
    lambda: f64,
    cfg: &RunConfig,
    rng: &mut RngStream,
    observer: &mut O,
) -> Result<RunResult> {
    cfg.validate()?;
    let r = core::mem::replace(rng, RngStream::new(0));
    let mut sim = ReshufflingSim::new(n, lambda, r)?;
    let out = sim.run_recorded(cfg, observer);
    *rng = sim.into_rng();
    Ok(out)
}
