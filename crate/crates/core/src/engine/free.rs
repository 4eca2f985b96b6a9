use alloc::vec::Vec;

use rand_distr::{Distribution, Exp1};

use super::PacketId;
use crate::error::{invalid, Result};
use crate::metrics::StageHitRecord;
use crate::RngStream;

/// Independent free-system packets. Arrivals form a Poisson process of rate
/// `lambda·N` (all at time 0 when `lambda = 0`); a packet holds at stage `i`
/// for an exponential time of rate `i(N-i)`.
pub fn run_free(
    n: usize,
    lambda: f64,
    packet_count: usize,
    rng: &mut RngStream,
) -> Result<Vec<StageHitRecord>> {
    if n < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", "must be finite and nonnegative"));
    }
    let arrival_rate = lambda * n as f64;
    let mut clock = 0.0;
    let mut out = Vec::with_capacity(packet_count);
    for k in 0..packet_count {
        if arrival_rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            clock += e / arrival_rate;
        }
        let mut t = clock;
        let mut hits = Vec::with_capacity(n - 1);
        for i in 1..n {
            let e: f64 = Exp1.sample(rng);
            t += e / (i as f64 * (n - i) as f64);
            hits.push(t);
        }
        out.push(StageHitRecord::new(PacketId(k as u64 + 1), clock, t, hits));
    }
    Ok(out)
}
