//! Seeded scenarios: steady-state metric tables, slowdowns, the reshuffling
//! Poisson check, delay profiles, the impulse comparison and the stability
//! experiments.
//!
//! Replication `r` of discipline `d` always draws from
//! `RngStream::with_stream(seed, tag(d) << 32 | r)`, so every result is a
//! function of the base seed alone, whatever the worker count.

use std::fmt;

use clap::ValueEnum;
use dissem_core::engine::{
    self, init_impulse, run_free, run_reshuffling, DisciplineKind, Event, EventKind, Observer,
    Occupancy, ReshufflingSim, RunResult, Simulation, StageCounts, SystemState,
};
use dissem_core::hydro::{self, DensityGrid, ImpulseSolution};
use dissem_core::metrics::{
    least_squares, poisson_gof, poisson_mle, summarize, Sampler, StageOccupancy, SummaryStats,
    UsefulCountHistogram,
};
use dissem_core::topology::{
    build_counterexample, build_symmetric, build_tree_uniform, check_cut_condition,
    is_unique_path, CutReport, NetworkSpec, NodeId,
};
use dissem_core::transform::{
    cumulative_stage_profile, delay_profile, free_expected_sojourn, gamma_table, DelayProfile,
    DelayProfileAccumulator,
};
use dissem_core::RngStream;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    Ou,
    Ru,
    Selfish,
    Rs,
    Free,
}

impl Discipline {
    /// The three disciplines of the metric tables.
    pub const COMPARED: [Discipline; 3] = [Discipline::Ou, Discipline::Ru, Discipline::Selfish];

    pub fn label(self) -> &'static str {
        match self {
            Discipline::Ou => "ou",
            Discipline::Ru => "ru",
            Discipline::Selfish => "selfish",
            Discipline::Rs => "rs",
            Discipline::Free => "free",
        }
    }

    /// Engine discipline; `None` for reshuffling, which has its own
    /// simulator.
    pub fn kind(self) -> Option<DisciplineKind> {
        match self {
            Discipline::Ou => Some(DisciplineKind::OldestUseful),
            Discipline::Ru => Some(DisciplineKind::RandomUseful),
            Discipline::Selfish => Some(DisciplineKind::SELFISH),
            Discipline::Free => Some(DisciplineKind::Free),
            Discipline::Rs => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Discipline::Ou => 1,
            Discipline::Ru => 2,
            Discipline::Selfish => 3,
            Discipline::Rs => 4,
            Discipline::Free => 5,
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Warm-up and absolute end time of a steady-state run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLength {
    pub warmup: f64,
    pub horizon: f64,
}

impl RunLength {
    pub const DEFAULT: RunLength = RunLength {
        warmup: 2000.0,
        horizon: 20000.0,
    };

    pub fn new(warmup: f64, horizon: f64) -> Result<Self> {
        if !(warmup >= 0.0 && warmup.is_finite()) {
            return Err(invalid("warmup", "must be finite and nonnegative"));
        }
        if !(horizon > warmup && horizon.is_finite()) {
            return Err(invalid("horizon", "must be finite and exceed warmup"));
        }
        Ok(Self { warmup, horizon })
    }

    fn config(self) -> engine::RunConfig {
        engine::RunConfig::new(self.horizon, self.warmup)
    }
}

/// Replication count, base seed and worker cap (`0` = one per core).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Replications {
    pub count: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Replications {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            jobs: 0,
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn stream(&self, d: Discipline, rep: usize) -> RngStream {
        RngStream::with_stream(self.seed, d.tag() << 32 | rep as u64)
    }

    fn check(&self) -> Result<()> {
        if self.count < 2 {
            return Err(invalid("reps", "at least 2 replications are needed for error bars"));
        }
        Ok(())
    }

    /// Runs `f(key, rep)` for every key and replication on the worker pool;
    /// results come back grouped by key, in replication order.
    fn grid<K: Sync, T: Send>(
        &self,
        keys: &[K],
        f: impl Fn(&K, usize) -> Result<T> + Sync + Send,
    ) -> Result<Vec<Vec<T>>> {
        let reps = self.count;
        let flat = parallel(self.jobs, keys.len() * reps, |i| f(&keys[i / reps], i % reps))?;
        let mut it = flat.into_iter();
        Ok(keys.iter().map(|_| it.by_ref().take(reps).collect()).collect())
    }
}

/// Ordered parallel map over `0..count` on a pool of `jobs` threads.
pub fn parallel<T: Send>(
    jobs: usize,
    count: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(invalid("lambda", "must lie in [0, 1)"));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    Ok(())
}

fn symmetric_params(net: &NetworkSpec) -> Result<(usize, f64)> {
    match net.uniform_arrival_rate() {
        Some(l) if net.is_symmetric() => Ok((net.node_count(), l)),
        _ => Err(Error::Precondition(
            "reshuffling needs a complete symmetric network".into(),
        )),
    }
}

/// One replication of discipline `d` on `net`.
pub fn run_once(
    net: &NetworkSpec,
    d: Discipline,
    length: RunLength,
    profile: bool,
    rng: &mut RngStream,
) -> Result<RunResult> {
    let mut cfg = length.config();
    if profile {
        cfg = cfg.with_profile();
    }
    Ok(match d.kind() {
        Some(kind) => engine::run(net, kind, &cfg, rng, &mut ())?,
        None => {
            let (n, lambda) = symmetric_params(net)?;
            run_reshuffling(n, lambda, &cfg, rng, &mut ())?
        }
    })
}

/// Replicated steady-state summary of one discipline.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub discipline: Discipline,
    pub n: usize,
    /// Per-node arrival rate when it is uniform.
    pub lambda: Option<f64>,
    pub distinct: SummaryStats,
    pub undelivered: SummaryStats,
    pub aoi: SummaryStats,
    /// Across replications of the per-replication mean of `sojourn / B_N`.
    pub slowdown: Option<SummaryStats>,
    /// Pooled sample variance of `sojourn / B_N`.
    pub sojourn_variance: Option<f64>,
    pub departures: usize,
    pub censored: u64,
}

pub fn summarize_runs(d: Discipline, net: &NetworkSpec, runs: &[RunResult]) -> Result<MetricSummary> {
    let n = net.node_count();
    let b = free_expected_sojourn(n)?;
    let mut cols = [vec![], vec![], vec![]];
    for r in runs {
        let (x, u, a) = r
            .metrics
            .means()
            .ok_or(Error::Core(dissem_core::Error::InsufficientSamples { needed: 1, got: 0 }))?;
        cols[0].push(x);
        cols[1].push(u);
        cols[2].push(a);
    }
    let per_rep: Option<Vec<f64>> = runs
        .iter()
        .map(|r| {
            (!r.sojourns.is_empty())
                .then(|| r.sojourns.iter().sum::<f64>() / r.sojourns.len() as f64 / b)
        })
        .collect();
    let all: Vec<f64> = runs.iter().flat_map(|r| r.sojourns.iter().map(|s| s / b)).collect();
    Ok(MetricSummary {
        discipline: d,
        n,
        lambda: net.uniform_arrival_rate(),
        distinct: summarize(&cols[0])?,
        undelivered: summarize(&cols[1])?,
        aoi: summarize(&cols[2])?,
        slowdown: per_rep.map(|v| summarize(&v)).transpose()?,
        sojourn_variance: summarize(&all).ok().map(|s| s.variance),
        departures: all.len(),
        censored: runs.iter().map(|r| r.censored).sum(),
    })
}

/// A fully specified experiment: everything follows from the name and base
/// seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub network: NetworkSpec,
    pub disciplines: Vec<Discipline>,
    pub length: RunLength,
    pub replications: Replications,
}

/// Names accepted by [`Scenario::named`].
pub const SCENARIOS: [&str; 5] = ["table1-l0.3", "table1-l0.5", "table1-l0.7", "star5", "path3"];

impl Scenario {
    pub fn named(name: &str, seed: u64) -> Result<Self> {
        let table = |lambda| -> Result<Scenario> {
            Ok(Scenario {
                name: name.into(),
                network: build_symmetric(50, lambda)?,
                disciplines: Discipline::COMPARED.to_vec(),
                length: RunLength::DEFAULT,
                replications: Replications::new(10, seed),
            })
        };
        let tree = |network| Scenario {
            name: name.into(),
            network,
            disciplines: Discipline::COMPARED.to_vec(),
            length: RunLength::DEFAULT,
            replications: Replications::new(10, seed),
        };
        match name {
            "table1-l0.3" => table(0.3),
            "table1-l0.5" => table(0.5),
            "table1-l0.7" => table(0.7),
            "star5" => Ok(tree(star(5, 0.2)?)),
            "path3" => Ok(tree(path(3, 0.4)?)),
            _ => Err(invalid("scenario", format!("unknown scenario `{name}`"))),
        }
    }

    pub fn run(&self) -> Result<Vec<MetricSummary>> {
        self.replications.check()?;
        let runs = self.replications.grid(&self.disciplines, |&d, r| {
            run_once(&self.network, d, self.length, false, &mut self.replications.stream(d, r))
        })?;
        self.disciplines
            .iter()
            .zip(&runs)
            .map(|(&d, rs)| summarize_runs(d, &self.network, rs))
            .collect()
    }
}

/// Star on `n` nodes centred at node 0, unit capacities, rate `lambda` at
/// every node.
pub fn star(n: usize, lambda: f64) -> Result<NetworkSpec> {
    check_n(n)?;
    let edges: Vec<_> = (1..n).map(|k| (0, k)).collect();
    Ok(build_tree_uniform(&edges, 1.0, vec![lambda; n])?)
}

/// Path `0 - 1 - ... - n-1`, unit capacities, rate `lambda` at every node.
pub fn path(n: usize, lambda: f64) -> Result<NetworkSpec> {
    check_n(n)?;
    let edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
    Ok(build_tree_uniform(&edges, 1.0, vec![lambda; n])?)
}

/// OU, RU and Selfish on the symmetric network with identical run lengths.
pub fn table_comparison(
    n: usize,
    lambda: f64,
    length: RunLength,
    reps: &Replications,
) -> Result<Vec<MetricSummary>> {
    check_n(n)?;
    check_lambda(lambda)?;
    Scenario {
        name: format!("table1-n{n}-l{lambda}"),
        network: build_symmetric(n, lambda)?,
        disciplines: Discipline::COMPARED.to_vec(),
        length,
        replications: *reps,
    }
    .run()
}

/// Per-size steady-state summaries (slowdown and its variance) of one
/// discipline.
pub fn slowdown_table(
    d: Discipline,
    ns: &[usize],
    lambda: f64,
    length: RunLength,
    reps: &Replications,
) -> Result<Vec<MetricSummary>> {
    Ok(mndf_experiment(d, ns, lambda, length, reps)?
        .into_iter()
        .map(|m| m.summary)
        .collect())
}

/// Fixed-width histogram of normalized sojourns.
#[derive(Debug, Clone, PartialEq)]
pub struct SojournHistogram {
    pub width: f64,
    pub counts: Vec<u64>,
}

impl SojournHistogram {
    pub const WIDTH: f64 = 0.05;

    pub fn from_samples(samples: impl IntoIterator<Item = f64>, width: f64) -> Self {
        let mut counts = vec![];
        for s in samples {
            let k = (s / width) as usize;
            if k >= counts.len() {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        Self { width, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(left edge, count, density)` per bin.
    pub fn bins(&self) -> impl Iterator<Item = (f64, u64, f64)> + '_ {
        let t = self.total().max(1) as f64;
        self.counts
            .iter()
            .enumerate()
            .map(move |(k, &c)| (k as f64 * self.width, c, c as f64 / t / self.width))
    }
}

/// Delay profile and sojourn distribution at one network size.
#[derive(Debug, Clone, PartialEq)]
pub struct MndfResult {
    pub summary: MetricSummary,
    pub profile: DelayProfile,
    pub histogram: SojournHistogram,
}

/// Mean normalized delay profiles of `d` on symmetric networks of the
/// given sizes.
pub fn mndf_experiment(
    d: Discipline,
    ns: &[usize],
    lambda: f64,
    length: RunLength,
    reps: &Replications,
) -> Result<Vec<MndfResult>> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(invalid("lambda", "must lie in (0, 1)"));
    }
    if ns.is_empty() {
        return Err(invalid("n", "at least one size is required"));
    }
    ns.iter().try_for_each(|&n| check_n(n))?;
    reps.check()?;
    let nets: Vec<NetworkSpec> = ns
        .iter()
        .map(|&n| build_symmetric(n, lambda))
        .collect::<Result<_, _>>()?;
    let runs = reps.grid(&nets, |net, r| {
        run_once(net, d, length, true, &mut reps.stream(d, r))
    })?;
    nets.iter()
        .zip(runs)
        .map(|(net, rs)| {
            let n = net.node_count();
            let summary = summarize_runs(d, net, &rs)?;
            let mut acc = DelayProfileAccumulator::new(n);
            for r in &rs {
                if let Some(p) = &r.profile {
                    acc.merge(p);
                }
            }
            let b = free_expected_sojourn(n)?;
            let histogram = SojournHistogram::from_samples(
                rs.iter().flat_map(|r| r.sojourns.iter().map(move |s| s / b)),
                SojournHistogram::WIDTH,
            );
            Ok(MndfResult {
                summary,
                profile: acc.profile()?,
                histogram,
            })
        })
        .collect()
}

/// Useful-count statistics, slowdown and stage profile of the reshuffling
/// system at one `(N, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReshufflingReport {
    pub n: usize,
    pub lambda: f64,
    /// `-ln(1 - λ)`.
    pub predicted: f64,
    /// Sample mean of the pooled useful counts.
    pub psi_hat: f64,
    /// Across replications of the per-replication estimate.
    pub psi_runs: SummaryStats,
    /// Total-variation distance of the pooled counts to Poisson(`psi_hat`).
    pub tv: f64,
    pub lag1: Option<f64>,
    pub slowdown: SummaryStats,
    /// `(γ_k, φ(γ_k))`, `k = 1..N-1`, pooled over replications.
    pub stage_profile: Vec<(f64, f64)>,
    pub histogram: UsefulCountHistogram,
}

impl ReshufflingReport {
    pub fn slowdown_target(&self) -> f64 {
        self.predicted / self.lambda
    }

    /// `(x, γ_k, φ(γ_k) / (ψ γ_k))` at `x = 0.1, ..., 1.0`, with `γ_k` the
    /// stage point nearest `x`.
    pub fn decile_ratios(&self) -> Vec<(f64, f64, f64)> {
        (1..=10)
            .map(|k| {
                let x = k as f64 / 10.0;
                let &(g, phi) = self
                    .stage_profile
                    .iter()
                    .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()))
                    .expect("profile has N-1 points");
                (x, g, phi / (self.predicted * g))
            })
            .collect()
    }
}

struct RsRun {
    result: RunResult,
    occupancy: StageOccupancy,
}

pub fn reshuffling_study(
    n: usize,
    lambda: f64,
    length: RunLength,
    reps: &Replications,
) -> Result<ReshufflingReport> {
    Ok(rs_poisson_table(&[n], &[lambda], length, reps)?.remove(0))
}

/// Reshuffling runs over the `(N, λ)` grid, in row-major order of `ns`.
pub fn rs_poisson_table(
    ns: &[usize],
    lambdas: &[f64],
    length: RunLength,
    reps: &Replications,
) -> Result<Vec<ReshufflingReport>> {
    ns.iter().try_for_each(|&n| check_n(n))?;
    for &l in lambdas {
        if !(l > 0.0 && l < 1.0) {
            return Err(invalid("lambda", "must lie in (0, 1)"));
        }
    }
    reps.check()?;
    let keys: Vec<(usize, f64)> = ns
        .iter()
        .flat_map(|&n| lambdas.iter().map(move |&l| (n, l)))
        .collect();
    let cfg = length.config();
    let runs = reps.grid(&keys, |&(n, l), r| {
        let mut occupancy = StageOccupancy::new(n, length.warmup);
        let result = run_reshuffling(n, l, &cfg, &mut reps.stream(Discipline::Rs, r), &mut occupancy)?;
        Ok(RsRun { result, occupancy })
    })?;
    keys.iter()
        .zip(runs)
        .map(|(&(n, lambda), rs)| {
            let mut hist = UsefulCountHistogram::new();
            let mut occ = StageOccupancy::new(n, length.warmup);
            let mut psis = vec![];
            let mut slow = vec![];
            let b = free_expected_sojourn(n)?;
            for run in &rs {
                psis.push(poisson_mle(&run.result.useful_counts)?);
                hist.merge(&run.result.useful_counts);
                occ.merge(&run.occupancy);
                let s = &run.result.sojourns;
                if s.is_empty() {
                    return Err(Error::Precondition("a replication completed no packets".into()));
                }
                slow.push(s.iter().sum::<f64>() / s.len() as f64 / b);
            }
            let psi_hat = poisson_mle(&hist)?;
            Ok(ReshufflingReport {
                n,
                lambda,
                predicted: hydro::fixed_point(lambda)?,
                psi_hat,
                psi_runs: summarize(&psis)?,
                tv: poisson_gof(&hist, psi_hat)?,
                lag1: hist.lag1_autocorrelation(),
                slowdown: summarize(&slow)?,
                stage_profile: cumulative_stage_profile(&occ.mean_counts(), &gamma_table(n)?)?,
                histogram: hist,
            })
        })
        .collect()
}

/// Per-replication normalized times to reach `γ_1..γ_{N-1}` from an
/// impulse start.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseCurve {
    pub discipline: Discipline,
    pub x: Vec<f64>,
    pub runs: Vec<Vec<f64>>,
}

impl ImpulseCurve {
    /// Index of the point nearest `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let k = self.x.partition_point(|&g| g < x);
        if k == 0 {
            0
        } else if k == self.x.len() || x - self.x[k - 1] <= self.x[k] - x {
            k - 1
        } else {
            k
        }
    }

    pub fn summary(&self, k: usize) -> Result<SummaryStats> {
        let v: Vec<f64> = self.runs.iter().map(|r| r[k]).collect();
        Ok(summarize(&v)?)
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.runs.iter().map(|r| r[k]).sum::<f64>() / self.runs.len() as f64
    }

    pub fn at(&self, x: f64) -> Result<SummaryStats> {
        self.summary(self.nearest(x))
    }

    /// Mean transformed sojourn: the value at `x = 1`.
    pub fn total(&self) -> Result<SummaryStats> {
        self.summary(self.x.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseReport {
    pub n: usize,
    pub c: f64,
    /// Packets in the impulse, `round(c A_N)`.
    pub mass: usize,
    pub rs: ImpulseCurve,
    pub ru: ImpulseCurve,
    pub hydro: ImpulseSolution,
}

impl ImpulseReport {
    /// Mean RS transformed sojourn minus the limit `c + 1`.
    pub fn total_deviation(&self) -> Result<f64> {
        Ok(self.rs.total()?.mean - self.hydro.sojourn())
    }
}

/// Drains an impulse of `round(c A_N)` fresh packets under reshuffling and
/// under Random-Useful, without further arrivals.
pub fn impulse_experiment(c: f64, n: usize, reps: &Replications) -> Result<ImpulseReport> {
    check_n(n)?;
    let solution = hydro::impulse_solution(c)?;
    reps.check()?;
    let table = gamma_table(n)?;
    let mass = (c * table.a_n).round() as usize;
    if mass == 0 {
        return Err(invalid("c", "impulse holds no packets at this size"));
    }
    let cfg = engine::RunConfig::new(f64::INFINITY, 0.0).with_profile();
    let net = build_symmetric(n, 0.0)?;
    let ds = [Discipline::Rs, Discipline::Ru];
    let runs = reps.grid(&ds, |&d, r| {
        let mut rng = reps.stream(d, r);
        let result = if d == Discipline::Rs {
            let mut sim = ReshufflingSim::new(n, 0.0, rng)?.with_state(StageCounts::impulse(n, mass)?)?;
            sim.run_recorded(&cfg, &mut ())
        } else {
            let state = init_impulse(n, mass, &mut rng)?;
            let mut sim = Simulation::new(&net, DisciplineKind::RandomUseful, rng)?.with_state(state)?;
            sim.run_recorded(&cfg, &mut ())?
        };
        let profile = result.profile.expect("profile requested").profile()?;
        Ok(profile.points.iter().map(|p| p.r).collect::<Vec<f64>>())
    })?;
    let x = table.gamma[1..].to_vec();
    let mut it = runs.into_iter();
    let mut curve = |d| ImpulseCurve {
        discipline: d,
        x: x.clone(),
        runs: it.next().expect("one group per discipline"),
    };
    let rs = curve(Discipline::Rs);
    let ru = curve(Discipline::Ru);
    Ok(ImpulseReport {
        n,
        c,
        mass,
        rs,
        ru,
        hydro: solution,
    })
}

/// Three-node counterexample run, one discipline.
#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityReport {
    pub discipline: Discipline,
    pub epsilon: f64,
    pub horizon: f64,
    /// Uniform sampling times.
    pub times: Vec<f64>,
    /// Replication mean of the number of distinct packets.
    pub total_packets: Vec<f64>,
    /// Replication mean of the packets held by the source node only.
    pub node_queue: Vec<f64>,
    /// Least-squares growth rate over the second half of each replication.
    pub slope: SummaryStats,
    /// Fresh packets first transmitted by the source, per unit time, over
    /// the second half of each replication.
    pub creation_rate: SummaryStats,
    /// Mean total at the end over the mean total at a tenth of the horizon.
    pub growth_factor: f64,
    /// Events after which packets held by exactly one of the two receivers
    /// sat at both receivers.
    pub mixed_states: u64,
    /// Events after which the tracked classes did not add up to the state.
    pub bookkeeping_errors: u64,
}

/// Tracks the source-only packets and the in-transit packets of each
/// receiver from the event stream of the counterexample network.
#[derive(Debug, Clone, Default)]
struct TransitTracker {
    step: f64,
    next: f64,
    burn_in: f64,
    fresh: i64,
    at_first: i64,
    at_second: i64,
    created: u64,
    mixed: u64,
    errors: u64,
    times: Vec<f64>,
    totals: Vec<f64>,
    queue: Vec<f64>,
}

impl Observer<SystemState> for TransitTracker {
    fn interval(&mut self, _from: f64, to: f64, state: &SystemState) {
        while self.next <= to {
            self.times.push(self.next);
            self.totals.push(state.distinct() as f64);
            self.queue.push(self.fresh as f64);
            self.next += self.step;
        }
    }

    fn event(&mut self, e: &Event, state: &SystemState) {
        match e.kind {
            EventKind::Arrival { .. } => self.fresh += 1,
            EventKind::Epoch {
                to,
                stage_after: Some(s),
                ..
            } => {
                let first = to == NodeId(1);
                match s {
                    2 => {
                        self.fresh -= 1;
                        if first {
                            self.at_first += 1;
                        } else {
                            self.at_second += 1;
                        }
                        if e.time >= self.burn_in {
                            self.created += 1;
                        }
                    }
                    // Completion: the packet was missing only at `to`.
                    _ => {
                        if first {
                            self.at_second -= 1;
                        } else {
                            self.at_first -= 1;
                        }
                    }
                }
            }
            _ => {}
        }
        if self.at_first > 0 && self.at_second > 0 {
            self.mixed += 1;
        }
        let sum = self.fresh + self.at_first + self.at_second;
        if self.fresh < 0 || self.at_first < 0 || self.at_second < 0 || sum != state.distinct() as i64
        {
            self.errors += 1;
        }
    }
}

/// OU and RU on the three-node counterexample with source rate `2 - ε`.
pub fn instability_experiment(
    epsilon: f64,
    horizon: f64,
    reps: &Replications,
) -> Result<Vec<InstabilityReport>> {
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(invalid("epsilon", "must lie in (0, 0.1]"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", "must be positive and finite"));
    }
    reps.check()?;
    let net = build_counterexample(epsilon)?;
    let ds = [Discipline::Ou, Discipline::Ru];
    let burn_in = horizon / 2.0;
    let runs = reps.grid(&ds, |&d, r| {
        let mut t = TransitTracker {
            step: horizon / 1000.0,
            burn_in,
            ..TransitTracker::default()
        };
        let kind = d.kind().expect("engine discipline");
        let mut sim = Simulation::new(&net, kind, reps.stream(d, r))?;
        sim.run_until(horizon, &mut t);
        Ok(t)
    })?;
    ds.iter()
        .zip(runs)
        .map(|(&d, ts)| {
            let m = ts[0].times.len();
            let mean_of = |f: fn(&TransitTracker) -> &Vec<f64>| -> Vec<f64> {
                (0..m)
                    .map(|k| ts.iter().map(|t| f(t)[k]).sum::<f64>() / ts.len() as f64)
                    .collect()
            };
            let totals = mean_of(|t| &t.totals);
            let mut slopes = vec![];
            let mut rates = vec![];
            for t in &ts {
                let from = t.times.partition_point(|&s| s < burn_in);
                slopes.push(least_squares(&t.times[from..], &t.totals[from..])?.slope);
                rates.push(t.created as f64 / (horizon - burn_in));
            }
            let tenth = (m - 1) / 10;
            Ok(InstabilityReport {
                discipline: d,
                epsilon,
                horizon,
                times: ts[0].times.clone(),
                growth_factor: totals[m - 1] / totals[tenth].max(1.0),
                total_packets: totals,
                node_queue: mean_of(|t| &t.queue),
                slope: summarize(&slopes)?,
                creation_rate: summarize(&rates)?,
                mixed_states: ts.iter().map(|t| t.mixed).sum(),
                bookkeeping_errors: ts.iter().map(|t| t.errors).sum(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessRow {
    pub discipline: Discipline,
    /// Growth rate of the total packet count over the second half.
    pub slope: SummaryStats,
    pub mean_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport {
    pub cut: CutReport,
    pub rows: Vec<BoundednessRow>,
}

/// Long runs on a unique-path network that satisfies the cut condition.
/// Refuses to run otherwise.
pub fn tree_boundedness_experiment(
    net: &NetworkSpec,
    disciplines: &[Discipline],
    length: RunLength,
    reps: &Replications,
) -> Result<BoundednessReport> {
    if !is_unique_path(net)? {
        return Err(Error::Precondition("network is not unique-path".into()));
    }
    let cut = check_cut_condition(net)?;
    if !cut.satisfied {
        let s: Vec<String> = cut.worst_subset.iter().map(|v| (v.0 + 1).to_string()).collect();
        return Err(Error::Precondition(format!(
            "cut condition fails at S={{{}}} (margin {})",
            s.join(","),
            cut.margin
        )));
    }
    if disciplines.contains(&Discipline::Rs) {
        return Err(invalid("discipline", "reshuffling is defined on symmetric networks only"));
    }
    reps.check()?;
    let half = length.horizon / 2.0;
    let runs = reps.grid(disciplines, |&d, r| {
        let mut s = Sampler::new(length.horizon / 1000.0)?;
        let kind = d.kind().expect("engine discipline");
        let mut sim = Simulation::new(net, kind, reps.stream(d, r))?;
        sim.run_until(length.horizon, &mut s);
        let from = s.times.partition_point(|&t| t < half);
        let fit = least_squares(&s.times[from..], &s.distinct[from..])?;
        let mean = s.distinct[from..].iter().sum::<f64>() / (s.distinct.len() - from) as f64;
        Ok((fit.slope, mean))
    })?;
    let rows = disciplines
        .iter()
        .zip(runs)
        .map(|(&d, v)| {
            let slopes: Vec<f64> = v.iter().map(|p| p.0).collect();
            Ok(BoundednessRow {
                discipline: d,
                slope: summarize(&slopes)?,
                mean_total: v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundednessReport { cut, rows })
}

/// Closed-form and simulated free-system quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeReport {
    pub n: usize,
    pub b_n: f64,
    /// `2 ln N / N`.
    pub asymptote: f64,
    pub sojourn: SummaryStats,
    /// `sup |R(γ_k) - γ_k|` of the simulated delay profile.
    pub profile_deviation: f64,
    pub profile: DelayProfile,
}

pub fn free_experiment(n: usize, lambda: f64, packets: usize, seed: u64) -> Result<FreeReport> {
    check_n(n)?;
    if packets < 2 {
        return Err(invalid("packets", "must be at least 2"));
    }
    let mut rng = Replications::new(1, seed).stream(Discipline::Free, 0);
    let records = run_free(n, lambda, packets, &mut rng)?;
    let sojourns: Vec<f64> = records.iter().map(|r| r.sojourn()).collect();
    let profile = delay_profile(&records, n)?;
    let profile_deviation = profile.points.iter().map(|p| (p.r - p.x).abs()).fold(0.0, f64::max);
    Ok(FreeReport {
        n,
        b_n: free_expected_sojourn(n)?,
        asymptote: 2.0 * (n as f64).ln() / n as f64,
        sojourn: summarize(&sojourns)?,
        profile_deviation,
        profile,
    })
}

/// Deviation of the transport solution from its fixed point over time.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroReport {
    pub lambda: f64,
    pub psi: f64,
    pub times: Vec<f64>,
    /// `sup_{[0,1]} |ξ(·, t) - ψ|` at each time.
    pub sup_deviation: Vec<f64>,
    pub snapshots: Vec<DensityGrid>,
}

pub fn hydro_convergence(xi0: &DensityGrid, times: &[f64]) -> Result<HydroReport> {
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || !(times[0] >= 0.0) {
        return Err(invalid("times", "must be nonempty, nonnegative and ascending"));
    }
    let lambda = xi0.lambda();
    let psi = hydro::fixed_point(lambda)?;
    let evo = hydro::solve(xi0, *times.last().expect("nonempty"))?;
    let snapshots = times.iter().map(|&t| evo.at(t)).collect::<Result<Vec<_>, _>>()?;
    Ok(HydroReport {
        lambda,
        psi,
        times: times.to_vec(),
        sup_deviation: snapshots.iter().map(|g| g.sup_deviation(psi)).collect(),
        snapshots,
    })
}

/// Piecewise-constant density on `[0, 1]` with `pieces` equal pieces whose
/// values are uniform on `[0, max]`.
pub fn random_step_density(seed: u64, pieces: usize, max: f64, lambda: f64) -> Result<DensityGrid> {
    if pieces == 0 {
        return Err(invalid("pieces", "must be positive"));
    }
    if !(max >= 0.0 && max.is_finite()) {
        return Err(invalid("max", "must be finite and nonnegative"));
    }
    let mut rng = RngStream::new(seed);
    let vals: Vec<f64> = (0..pieces).map(|_| rng.random::<f64>() * max).collect();
    Ok(DensityGrid::from_fn(
        |x| vals[((x * pieces as f64) as usize).min(pieces - 1)],
        lambda,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_groups_by_key() {
        let reps = Replications::new(3, 1).with_jobs(2);
        let g = reps.grid(&[10, 20], |&k, r| Ok(k + r)).unwrap();
        assert_eq!(g, vec![vec![10, 11, 12], vec![20, 21, 22]]);
    }

    #[test]
    fn streams_depend_on_discipline_and_rep() {
        let reps = Replications::new(2, 9);
        let mut a = reps.stream(Discipline::Ou, 0);
        let mut b = reps.stream(Discipline::Ru, 0);
        let mut c = reps.stream(Discipline::Ou, 1);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert!(x != y && x != z && y != z);
    }

    #[test]
    fn zero_load_table_is_zero() {
        let rows = table_comparison(5, 0.0, RunLength::new(1.0, 11.0).unwrap(), &Replications::new(2, 1))
            .unwrap();
        for r in rows {
            assert_eq!(r.distinct.mean, 0.0);
            assert_eq!(r.undelivered.mean, 0.0);
            assert_eq!(r.aoi.mean, 0.0);
            assert!(r.slowdown.is_none());
        }
    }

    #[test]
    fn histogram_bins() {
        let h = SojournHistogram::from_samples([0.01, 0.06, 0.07, 0.2], 0.05);
        assert_eq!(h.counts, vec![1, 2, 0, 0, 1]);
        let area: f64 = h.bins().map(|b| b.2 * h.width).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let reps = Replications::new(2, 1);
        assert!(table_comparison(50, 1.0, RunLength::DEFAULT, &reps).is_err());
        assert!(instability_experiment(0.2, 10.0, &reps).is_err());
        assert!(impulse_experiment(0.0, 100, &reps).is_err());
        assert!(table_comparison(5, 0.5, RunLength::DEFAULT, &Replications::new(1, 1)).is_err());
        assert!(Scenario::named("nope", 1).is_err());
    }

    #[test]
    fn overloaded_tree_is_refused() {
        let mut rates = vec![0.3; 5];
        rates[0] = 5.0;
        let edges: Vec<_> = (1..5).map(|k| (0, k)).collect();
        let net = build_tree_uniform(&edges, 1.0, rates).unwrap();
        let e = tree_boundedness_experiment(
            &net,
            &Discipline::COMPARED,
            RunLength::DEFAULT,
            &Replications::new(2, 1),
        );
        assert!(matches!(e, Err(Error::Precondition(_))));
    }
}
