use dissem_core::engine::{
    init_impulse, run, run_reshuffling, DisciplineKind, Event, EventKind, Observer, Occupancy, PacketId, RunConfig,
    Simulation, StageCounts, SystemState,
};
use dissem_core::metrics::{
    least_squares, poisson_gof, poisson_pmf, summarize, MetricsAccumulator, StageHitRecord, UsefulCountHistogram,
};
use dissem_core::topology::build_symmetric;
use dissem_core::transform::free_expected_sojourn;
use dissem_core::RngStream;
use proptest::prelude::*;

#[test]
fn littles_law_on_symmetric_networks() {
    let (n, lambda) = (10, 0.5);
    let net = build_symmetric(n, lambda).unwrap();
    let cfg = RunConfig::new(5200.0, 200.0);
    for d in [DisciplineKind::OldestUseful, DisciplineKind::RandomUseful, DisciplineKind::SELFISH] {
        let gaps: Vec<f64> = (0..10)
            .map(|r| {
                let res = run(&net, d, &cfg, &mut RngStream::with_stream(77, r), &mut ()).unwrap();
                let distinct = res.metrics.means().unwrap().0;
                let sojourn = res.sojourns.iter().sum::<f64>() / res.sojourns.len() as f64;
                distinct - lambda * n as f64 * sojourn
            })
            .collect();
        let s = summarize(&gaps).unwrap();
        assert!(s.mean.abs() <= 3.0 * s.stderr, "{d}: L - lambda N W = {} ± {}", s.mean, s.stderr);
    }
}

#[test]
fn free_impulse_time_average_matches_closed_form() {
    // Packets of one run share the link clocks, so the error bar comes from
    // independent runs rather than from packets within a run.
    let (n, m) = (20, 200);
    let net = build_symmetric(n, 0.0).unwrap();
    let per_run: Vec<f64> = (0..40)
        .map(|r| {
            let mut rng = RngStream::with_stream(5, r);
            let state = init_impulse(n, m, &mut rng).unwrap();
            let mut sim = Simulation::new(&net, DisciplineKind::Free, rng).unwrap().with_state(state).unwrap();
            let res = sim.run_recorded(&RunConfig::new(f64::INFINITY, 0.0), &mut ()).unwrap();
            assert_eq!(res.sojourns.len(), m);
            let per_packet = res.metrics.distinct_integral() / m as f64;
            let mean = res.sojourns.iter().sum::<f64>() / m as f64;
            assert!((per_packet - mean).abs() < 1e-9 * mean);
            per_packet
        })
        .collect();
    let s = summarize(&per_run).unwrap();
    let b = free_expected_sojourn(n).unwrap();
    assert!((s.mean - b).abs() <= 3.0 * s.stderr, "{} ± {} vs {b}", s.mean, s.stderr);
}

/// Recomputes the AoI integral from the intervals the simulator reports.
struct AoiOracle {
    warmup: f64,
    integral: f64,
    acc: MetricsAccumulator,
}

impl Observer<SystemState> for AoiOracle {
    fn interval(&mut self, from: f64, to: f64, state: &SystemState) {
        self.acc.integrate(from, to, state).unwrap();
        let a = from.max(self.warmup);
        if to <= a {
            return;
        }
        if let Some(o) = state.oldest_arrival() {
            self.integral += (to - a) * (0.5 * (a + to) - o);
        }
    }
}

#[test]
fn aoi_integral_is_exact() {
    let net = build_symmetric(8, 0.6).unwrap();
    for d in [DisciplineKind::OldestUseful, DisciplineKind::RandomUseful, DisciplineKind::SELFISH] {
        let mut o = AoiOracle {
            warmup: 10.0,
            integral: 0.0,
            acc: MetricsAccumulator::new(10.0),
        };
        let mut sim = Simulation::new(&net, d, RngStream::new(3)).unwrap();
        sim.run_until(400.0, &mut o);
        let got = o.acc.aoi_integral();
        assert!((got - o.integral).abs() <= 1e-9 * o.integral, "{d}: {got} vs {}", o.integral);
        assert!((o.acc.elapsed() - 390.0).abs() < 1e-9);
    }
}

#[derive(Default)]
struct EpochCount {
    warmup: f64,
    epochs: u64,
}

impl Observer<StageCounts> for EpochCount {
    fn event(&mut self, e: &Event, _: &StageCounts) {
        if matches!(e.kind, EventKind::Shuffled { .. }) && e.time >= self.warmup {
            self.epochs += 1;
        }
    }
}

#[test]
fn useful_histogram_counts_every_epoch() {
    let mut obs = EpochCount {
        warmup: 50.0,
        ..Default::default()
    };
    let cfg = RunConfig::new(300.0, 50.0);
    let res = run_reshuffling(30, 0.6, &cfg, &mut RngStream::new(12), &mut obs).unwrap();
    assert!(obs.epochs > 0);
    assert_eq!(res.useful_counts.total(), obs.epochs);
}

proptest! {
    #[test]
    fn histogram_merge_and_fit(a in prop::collection::vec(0u64..50, 1..15), b in prop::collection::vec(0u64..50, 1..15), psi in 0.0f64..4.0) {
        prop_assume!(a.iter().sum::<u64>() > 0);
        let mut h = UsefulCountHistogram::from_counts(a.clone());
        let g = UsefulCountHistogram::from_counts(b.clone());
        prop_assert_eq!(h.total(), a.iter().sum::<u64>());
        h.merge(&g);
        prop_assert_eq!(h.total(), a.iter().sum::<u64>() + b.iter().sum::<u64>());
        let tv = poisson_gof(&h, psi).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        let weighted: u64 = h.counts().iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
        prop_assert!((h.mean().unwrap() - weighted as f64 / h.total() as f64).abs() < 1e-12);
    }

    #[test]
    fn exact_poisson_frequencies_fit(psi in 0.1f64..3.0) {
        let scale = 1e9;
        let counts: Vec<u64> = (0..40).map(|k| (poisson_pmf(k, psi) * scale).round() as u64).collect();
        let h = UsefulCountHistogram::from_counts(counts);
        prop_assert!(poisson_gof(&h, psi).unwrap() < 1e-6);
        prop_assert!((h.mean().unwrap() - psi).abs() < 1e-6);
    }

    #[test]
    fn summary_stats_are_consistent(xs in prop::collection::vec(-1e3f64..1e3, 2..60)) {
        let s = summarize(&xs).unwrap();
        prop_assert!(s.variance >= 0.0);
        prop_assert!((s.stderr * s.stderr * xs.len() as f64 - s.variance).abs() <= 1e-9 * (1.0 + s.variance));
        let (lo, hi) = s.ci95();
        prop_assert!(lo <= s.mean && s.mean <= hi);
    }

    #[test]
    fn least_squares_recovers_a_line(slope in -5.0f64..5.0, icept in -5.0f64..5.0, n in 3usize..40) {
        let xs: Vec<f64> = (0..n).map(|k| k as f64 * 0.7).collect();
        let ys: Vec<f64> = xs.iter().map(|x| icept + slope * x).collect();
        let fit = least_squares(&xs, &ys).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
    }
}

#[test]
#[cfg(debug_assertions)]
#[should_panic(expected = "out of order")]
fn stage_hits_must_increase() {
    StageHitRecord::new(PacketId(1), 0.0, 2.0, vec![1.0, 0.5, 2.0]);
}

#[test]
fn occupancy_of_empty_state() {
    let s = SystemState::empty(4);
    assert_eq!(s.distinct(), 0);
    assert_eq!(s.undelivered(), 0);
    assert_eq!(s.oldest_arrival(), None);
}
