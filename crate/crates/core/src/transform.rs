//! Space-time transform: stage `i` of an `N`-node system is placed at the
//! point `γ_i` of `[0, 1]` and time is divided by the free-system mean
//! sojourn `B_N`, so that a free packet moves at unit speed.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::metrics::{summarize, StageHitRecord, SummaryStats};

/// Prefix sums of harmonic numbers `H_0..=H_m` with compensated summation.
fn harmonics(m: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(m + 1);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    h.push(0.0);
    for i in 1..=m {
        let x = 1.0 / i as f64;
        let t = sum + x;
        comp += if sum.abs() >= x { (sum - t) + x } else { (x - t) + sum };
        sum = t;
        h.push(sum + comp);
    }
    h
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    Ok(())
}

/// `B_N = Σ_{i=1}^{N-1} 1/(i(N-i))`, the mean sojourn of a free packet.
pub fn free_expected_sojourn(n: usize) -> Result<f64> {
    check_n(n)?;
    let h = *harmonics(n - 1).last().unwrap_or(&0.0);
    Ok(2.0 * h / n as f64)
}

/// `A_N = N·B_N`.
pub fn free_scale(n: usize) -> Result<f64> {
    check_n(n)?;
    Ok(2.0 * *harmonics(n - 1).last().unwrap_or(&0.0))
}

/// `B_N`, `A_N` and the stage coordinates `γ_0..=γ_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformTable {
    pub n: usize,
    pub b_n: f64,
    pub a_n: f64,
    pub gamma: Vec<f64>,
}

pub fn gamma_table(n: usize) -> Result<TransformTable> {
    check_n(n)?;
    let h = harmonics(n - 1);
    let hn = h[n - 1];
    // Σ_{j≤i} 1/(j(N-j)) = (H_i + H_{N-1} - H_{N-1-i}) / N.
    let gamma = (0..n)
        .map(|i| match i {
            0 => 0.0,
            _ if i == n - 1 => 1.0,
            _ => (h[i] + (hn - h[n - 1 - i])) / (2.0 * hn),
        })
        .collect();
    Ok(TransformTable {
        n,
        b_n: 2.0 * hn / n as f64,
        a_n: 2.0 * hn,
        gamma,
    })
}

impl TransformTable {
    /// Index `i` with `γ_i` nearest to `x`.
    pub fn nearest_stage(&self, x: f64) -> usize {
        let g = &self.gamma;
        let k = g.partition_point(|&v| v < x);
        if k == 0 {
            0
        } else if k == g.len() || (x - g[k - 1]) <= (g[k] - x) {
            k - 1
        } else {
            k
        }
    }
}

/// Fraction of `γ_1..γ_{N-1}` strictly inside `(1/2 - ε, 1/2 + ε)`.
pub fn mid_fraction(n: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(invalid("epsilon", "must lie in (0, 1/2)"));
    }
    let t = gamma_table(n)?;
    let inside = t.gamma[1..]
        .iter()
        .filter(|&&g| g > 0.5 - epsilon && g < 0.5 + epsilon)
        .count();
    Ok(inside as f64 / (n - 1) as f64)
}

/// One point of a mean normalized delay profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub x: f64,
    pub r: f64,
    pub stderr: f64,
}

/// Mean normalized delay to reach each `γ_i`, `i = 1..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub points: Vec<ProfilePoint>,
    pub n_packets: u64,
}

impl DelayProfile {
    /// Value at the end point `x = 1`: the mean normalized sojourn.
    pub fn total(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.r)
    }

    /// Linear interpolation of `R` at `x` (used only for overlays).
    pub fn at(&self, x: f64) -> f64 {
        let p = &self.points;
        let k = p.partition_point(|q| q.x < x);
        if k == 0 {
            // Between the origin (R = 0) and the first point.
            return p.first().map_or(0.0, |q| q.r * x / q.x);
        }
        if k == p.len() {
            return p[k - 1].r;
        }
        let (a, b) = (p[k - 1], p[k]);
        a.r + (b.r - a.r) * (x - a.x) / (b.x - a.x)
    }
}

/// Per-stage delay sums for completed packets; mergeable across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfileAccumulator {
    n: usize,
    count: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl DelayProfileAccumulator {
    pub fn new(n: usize) -> Self {
        let m = n.saturating_sub(1);
        Self {
            n,
            count: 0,
            sum: alloc::vec![0.0; m],
            sum_sq: alloc::vec![0.0; m],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds a completed packet. Records without a full hit vector are
    /// ignored.
    pub fn add(&mut self, r: &StageHitRecord) {
        if r.hits.len() != self.sum.len() {
            return;
        }
        self.count += 1;
        for (k, &t) in r.hits.iter().enumerate() {
            let d = t - r.arrival_time;
            self.sum[k] += d;
            self.sum_sq[k] += d * d;
        }
    }

    pub fn merge(&mut self, other: &DelayProfileAccumulator) {
        debug_assert_eq!(self.n, other.n);
        self.count += other.count;
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sum_sq[k] += other.sum_sq[k];
        }
    }

    pub fn profile(&self) -> Result<DelayProfile> {
        if self.count == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let t = gamma_table(self.n)?;
        let c = self.count as f64;
        let points = (0..self.sum.len())
            .map(|k| {
                let mean = self.sum[k] / c;
                let var = if self.count > 1 {
                    ((self.sum_sq[k] - c * mean * mean) / (c - 1.0)).max(0.0)
                } else {
                    0.0
                };
                ProfilePoint {
                    x: t.gamma[k + 1],
                    r: mean / t.b_n,
                    stderr: libm::sqrt(var / c) / t.b_n,
                }
            })
            .collect();
        Ok(DelayProfile {
            points,
            n_packets: self.count,
        })
    }
}

/// Mean normalized delay profile of completed packets: reaching `γ_i`
/// means reaching stage `i + 1`.
pub fn delay_profile<'a>(
    records: impl IntoIterator<Item = &'a StageHitRecord>,
    n: usize,
) -> Result<DelayProfile> {
    check_n(n)?;
    let mut acc = DelayProfileAccumulator::new(n);
    for r in records {
        if r.hits.len() != n - 1 {
            return Err(invalid("records", "hit vector length must be N-1"));
        }
        acc.add(r);
    }
    acc.profile()
}

/// Summary of normalized sojourns `sojourn / B_N`.
pub fn slowdown(sojourns: &[f64], n: usize) -> Result<SummaryStats> {
    let b = free_expected_sojourn(n)?;
    let v: Vec<f64> = sojourns.iter().map(|s| s / b).collect();
    summarize(&v)
}

/// Normalized cumulative stage profile: `φ(γ_k) = (1/A_N) Σ_{i≤k} n̄(i)`,
/// where `mean_counts[i-1]` is the time-averaged number of stage-`i`
/// packets. Returns `(γ_k, φ(γ_k))` for `k = 1..N-1`.
pub fn cumulative_stage_profile(mean_counts: &[f64], table: &TransformTable) -> Result<Vec<(f64, f64)>> {
    if mean_counts.len() != table.n - 1 {
        return Err(invalid("mean_counts", "length must be N-1"));
    }
    let mut acc = 0.0;
    Ok(mean_counts
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            acc += m;
            (table.gamma[k + 1], acc / table.a_n)
        })
        .collect())
}
