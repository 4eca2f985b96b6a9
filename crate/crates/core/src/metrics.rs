//! Observers and estimators.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{Observer, Occupancy, PacketId, RunResult, StageCounts};
use crate::error::{invalid, Error, Result};
use crate::transform::DelayProfileAccumulator;

/// Time integrals of the occupancy metrics from a start time on.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsAccumulator {
    start: f64,
    last: f64,
    elapsed: f64,
    distinct: f64,
    undelivered: f64,
    aoi: f64,
}

impl MetricsAccumulator {
    /// Accumulates over times at or after `start`.
    pub fn new(start: f64) -> Self {
        Self {
            start,
            last: f64::NEG_INFINITY,
            elapsed: 0.0,
            distinct: 0.0,
            undelivered: 0.0,
            aoi: 0.0,
        }
    }

    /// Adds the contribution of `state`, held constant over `[from, to]`.
    /// The part before the start time is ignored.
    pub fn integrate<S: Occupancy + ?Sized>(&mut self, from: f64, to: f64, state: &S) -> Result<()> {
        if to < from || from < self.last {
            return Err(Error::OutOfOrder {
                time: from.min(to),
                last: self.last,
            });
        }
        self.last = to;
        let a = from.max(self.start);
        if to <= a {
            return Ok(());
        }
        let h = to - a;
        self.elapsed += h;
        self.distinct += state.distinct() as f64 * h;
        self.undelivered += state.undelivered() as f64 * h;
        if let Some(t0) = state.oldest_arrival() {
            // Age grows with slope 1 between events.
            self.aoi += (a - t0) * h + 0.5 * h * h;
        }
        Ok(())
    }

    /// Integrates the pre-event `state` from the last observed time up to
    /// `time`.
    pub fn observe<S: Occupancy + ?Sized>(&mut self, time: f64, state: &S) -> Result<()> {
        let from = if self.last.is_finite() { self.last } else { self.start.min(time) };
        if time < from {
            return Err(Error::OutOfOrder {
                time,
                last: from,
            });
        }
        self.integrate(from, time, state)
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn distinct_integral(&self) -> f64 {
        self.distinct
    }

    pub fn undelivered_integral(&self) -> f64 {
        self.undelivered
    }

    pub fn aoi_integral(&self) -> f64 {
        self.aoi
    }

    /// Time averages of (distinct packets, undelivered copies, AoI), or
    /// `None` before any time has elapsed.
    pub fn means(&self) -> Option<(f64, f64, f64)> {
        (self.elapsed > 0.0).then(|| {
            (
                self.distinct / self.elapsed,
                self.undelivered / self.elapsed,
                self.aoi / self.elapsed,
            )
        })
    }

    /// Pools the integrals of an independent run.
    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.elapsed += other.elapsed;
        self.distinct += other.distinct;
        self.undelivered += other.undelivered;
        self.aoi += other.aoi;
        self.start = self.start.min(other.start);
        self.last = self.last.max(other.last);
    }
}

/// Age of the oldest present packet at `now`; 0 for an empty system.
pub fn aoi<S: Occupancy + ?Sized>(state: &S, now: f64) -> f64 {
    state.oldest_arrival().map_or(0.0, |t| now - t)
}

/// Arrival time and the absolute times at which a packet reached stages
/// 2, 3, ..., N. The last hit is the departure.
#[derive(Debug, Clone, PartialEq)]
pub struct StageHitRecord {
    pub id: PacketId,
    pub arrival_time: f64,
    pub departure_time: f64,
    /// Empty when hit recording was off.
    pub hits: Vec<f64>,
}

impl StageHitRecord {
    pub fn new(id: PacketId, arrival_time: f64, departure_time: f64, hits: Vec<f64>) -> Self {
        debug_assert!(
            hits.windows(2).all(|w| w[0] <= w[1]) && hits.first().is_none_or(|&h| h >= arrival_time),
            "stage hits out of order"
        );
        debug_assert!(hits.last().is_none_or(|&h| h == departure_time));
        Self {
            id,
            arrival_time,
            departure_time,
            hits,
        }
    }

    pub fn sojourn(&self) -> f64 {
        self.departure_time - self.arrival_time
    }
}

/// Counts of communication epochs by number of competing useful packets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UsefulCountHistogram {
    counts: Vec<u64>,
    prev: Option<u32>,
    lag_pairs: u64,
    lag_products: f64,
}

impl UsefulCountHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self {
            counts,
            ..Self::default()
        }
    }

    pub fn record(&mut self, k: u32) {
        let i = k as usize;
        if i >= self.counts.len() {
            self.counts.resize(i + 1, 0);
        }
        self.counts[i] += 1;
        if let Some(p) = self.prev {
            self.lag_pairs += 1;
            self.lag_products += p as f64 * k as f64;
        }
        self.prev = Some(k);
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| {
            let s: f64 = self.counts.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
            s / n as f64
        })
    }

    pub fn variance(&self) -> Option<f64> {
        let n = self.total();
        let m = self.mean()?;
        (n > 1).then(|| {
            let s: f64 = self
                .counts
                .iter()
                .enumerate()
                .map(|(k, &c)| sq(k as f64 - m) * c as f64)
                .sum();
            s / (n - 1) as f64
        })
    }

    /// Lag-1 autocorrelation of consecutive counts (within each run).
    pub fn lag1_autocorrelation(&self) -> Option<f64> {
        let m = self.mean()?;
        let v = self.variance()?;
        if self.lag_pairs == 0 || v <= 0.0 {
            return None;
        }
        Some((self.lag_products / self.lag_pairs as f64 - m * m) / v)
    }

    /// Adds the counts of an independent run. Consecutive-pair statistics are
    /// pooled without linking the two runs.
    pub fn merge(&mut self, other: &UsefulCountHistogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.lag_pairs += other.lag_pairs;
        self.lag_products += other.lag_products;
        self.prev = None;
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

/// Poisson maximum-likelihood mean: the sample mean.
pub fn poisson_mle(hist: &UsefulCountHistogram) -> Result<f64> {
    hist.mean().ok_or(Error::InsufficientSamples { needed: 1, got: 0 })
}

pub fn poisson_pmf(k: u32, psi: f64) -> f64 {
    if psi == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let ln = k as f64 * libm::log(psi) - psi - libm::lgamma(k as f64 + 1.0);
    libm::exp(ln)
}

/// Total-variation distance between the empirical distribution and
/// Poisson(`psi`). Poisson mass beyond the largest observed count forms one
/// final bucket, which has empirical frequency zero.
pub fn poisson_gof(hist: &UsefulCountHistogram, psi: f64) -> Result<f64> {
    if !(psi >= 0.0) || !psi.is_finite() {
        return Err(invalid("psi", "must be finite and nonnegative"));
    }
    let n = hist.total();
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut below = 0.0f64;
    let mut tv = 0.0;
    for (k, &c) in hist.counts.iter().enumerate() {
        let p = poisson_pmf(k as u32, psi);
        below += p;
        tv += (c as f64 / n as f64 - p).abs();
    }
    tv += (1.0 - below).max(0.0);
    Ok(0.5 * tv)
}

/// Mean, unbiased variance and standard error of independent samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub count: usize,
}

impl SummaryStats {
    /// Two-sided 95% confidence interval using Student's t.
    pub fn ci95(&self) -> (f64, f64) {
        let w = t_quantile_975(self.count.saturating_sub(1)) * self.stderr;
        (self.mean - w, self.mean + w)
    }
}

pub fn summarize(samples: &[f64]) -> Result<SummaryStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = samples.iter().map(|x| sq(x - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(SummaryStats {
        mean,
        variance,
        stderr: libm::sqrt(variance / n as f64),
        count: n,
    })
}

/// Summary over the means of `batches` contiguous equal batches of a
/// single run's series (trailing remainder dropped).
pub fn batch_means(series: &[f64], batches: usize) -> Result<SummaryStats> {
    if batches < 2 || series.len() < batches {
        return Err(Error::InsufficientSamples {
            needed: batches.max(2),
            got: series.len(),
        });
    }
    let size = series.len() / batches;
    let means: Vec<f64> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    summarize(&means)
}

/// 0.975 quantile of Student's t with `df` degrees of freedom (normal
/// value beyond 30).
pub fn t_quantile_975(df: usize) -> f64 {
    const T: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => T[df - 1],
        _ => 1.96,
    }
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope under independent residuals.
    pub slope_stderr: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(invalid("ys", "length differs from xs"));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| sq(x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("xs", "all abscissae are equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| sq(y - intercept - slope * x))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr: libm::sqrt(rss / (n - 2) as f64 / sxx),
    })
}

/// Standard observer behind [`run`](crate::engine::run): occupancy
/// integrals, sojourns, optional delay profile and useful counts, all from
/// the warm-up time on.
#[derive(Debug, Clone)]
pub struct Recorder {
    warmup: f64,
    metrics: MetricsAccumulator,
    sojourns: Vec<f64>,
    profile: Option<DelayProfileAccumulator>,
    useful: UsefulCountHistogram,
}

impl Recorder {
    pub fn new(node_count: usize, warmup: f64, record_profile: bool) -> Self {
        Self {
            warmup,
            metrics: MetricsAccumulator::new(warmup),
            sojourns: Vec::new(),
            profile: record_profile.then(|| DelayProfileAccumulator::new(node_count)),
            useful: UsefulCountHistogram::new(),
        }
    }

    pub fn into_result(self, events: u64, end_time: f64, censored: u64) -> RunResult {
        RunResult {
            events,
            end_time,
            metrics: self.metrics,
            sojourns: self.sojourns,
            censored,
            profile: self.profile,
            useful_counts: self.useful,
        }
    }
}

impl<S: Occupancy + ?Sized> Observer<S> for Recorder {
    fn interval(&mut self, from: f64, to: f64, state: &S) {
        self.metrics
            .integrate(from, to, state)
            .expect("simulator reports intervals in time order");
    }

    fn departure(&mut self, record: &StageHitRecord) {
        if record.arrival_time >= self.warmup {
            self.sojourns.push(record.sojourn());
            if let Some(p) = &mut self.profile {
                p.add(record);
            }
        }
    }

    fn useful(&mut self, time: f64, count: usize) {
        if time >= self.warmup {
            self.useful.record(count as u32);
        }
    }
}

/// Series of occupancy snapshots on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    step: f64,
    next: f64,
    pub times: Vec<f64>,
    pub distinct: Vec<f64>,
}

impl Sampler {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(invalid("step", "must be positive and finite"));
        }
        Ok(Self {
            step,
            next: 0.0,
            times: vec![],
            distinct: vec![],
        })
    }
}

impl<S: Occupancy + ?Sized> Observer<S> for Sampler {
    fn interval(&mut self, _from: f64, to: f64, state: &S) {
        while self.next <= to {
            self.times.push(self.next);
            self.distinct.push(state.distinct() as f64);
            self.next += self.step;
        }
    }
}

/// Time integrals of the reshuffling stage counts `n(i)` from a start time
/// on.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOccupancy {
    start: f64,
    elapsed: f64,
    sums: Vec<f64>,
}

impl StageOccupancy {
    pub fn new(node_count: usize, start: f64) -> Self {
        Self {
            start,
            elapsed: 0.0,
            sums: vec![0.0; node_count.saturating_sub(1)],
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Time-averaged `n(1), ..., n(N-1)`.
    pub fn mean_counts(&self) -> Vec<f64> {
        let e = self.elapsed;
        self.sums.iter().map(|s| if e > 0.0 { s / e } else { 0.0 }).collect()
    }

    pub fn merge(&mut self, other: &StageOccupancy) {
        self.elapsed += other.elapsed;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
    }
}

impl Observer<StageCounts> for StageOccupancy {
    fn interval(&mut self, from: f64, to: f64, state: &StageCounts) {
        let a = from.max(self.start);
        if to <= a {
            return;
        }
        let h = to - a;
        self.elapsed += h;
        for &i in state.occupied() {
            self.sums[i as usize - 1] += state.count(i as usize) as f64 * h;
        }
    }
}
