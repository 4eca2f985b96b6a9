use dissem_core::hydro::{
    backward_map, evolve, extend_density, fixed_point, impulse_solution, solve, speed, DensityGrid, Evolution,
    CELLS_PER_HALF, DEFAULT_DEPTH, GRID_SPACING,
};
use proptest::prelude::*;

fn bisect_fixed_point(lambda: f64) -> f64 {
    // M(u) - u changes sign once on (0, inf) for 0 < lambda < 1.
    let (mut lo, mut hi) = (1e-9, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if backward_map(mid, lambda).unwrap() > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn fixed_point_agrees_with_bisection() {
    for k in 1..=9 {
        let lambda = k as f64 / 10.0;
        let psi = fixed_point(lambda).unwrap();
        assert!((psi - bisect_fixed_point(lambda)).abs() < 1e-10, "lambda={lambda}");
        assert!((psi + (1.0 - lambda).ln()).abs() < 1e-12);
    }
    assert_eq!(fixed_point(0.0).unwrap(), 0.0);
    assert!(fixed_point(1.0).is_err());
}

#[test]
fn speed_examples() {
    assert_eq!(speed(0.0).unwrap(), 1.0);
    assert!((speed(2f64.ln()).unwrap() - 0.5 / 2f64.ln()).abs() < 1e-15);
    assert!((speed(1e-12).unwrap() - 1.0).abs() < 1e-9);
    assert!(speed(-1.0).is_err());
    assert_eq!(backward_map(0.0, 0.3).unwrap(), 0.3);
}

#[test]
fn backward_iterates_increase_to_psi() {
    let psi = fixed_point(0.5).unwrap();
    let mut u = 0.0;
    for _ in 0..200 {
        let next = backward_map(u, 0.5).unwrap();
        assert!(next >= u && next <= psi + 1e-15);
        u = next;
    }
    assert!((u - psi).abs() < 1e-12);
}

proptest! {
    #[test]
    fn speed_decreases_and_map_increases(a in 0.0f64..30.0, b in 0.0f64..30.0, lambda in 0.0f64..0.99) {
        prop_assume!(a < b);
        let (va, vb) = (speed(a).unwrap(), speed(b).unwrap());
        prop_assert!(va > vb && vb > 0.0 && va <= 1.0);
        prop_assert!(backward_map(a, lambda).unwrap() <= backward_map(b, lambda).unwrap());
    }

    #[test]
    fn deviation_from_psi_never_grows(
        levels in prop::collection::vec(0.0f64..3.0, 1..8),
        lambda in 0.1f64..0.9,
    ) {
        let psi = fixed_point(lambda).unwrap();
        let evo = solve(&steps(&levels, lambda), 25.0).unwrap();
        let mut last = f64::INFINITY;
        for j in 0..=50 {
            let d = evo.at(0.5 * j as f64).unwrap().sup_deviation(psi);
            prop_assert!(d <= last, "t={}: {} after {}", 0.5 * j as f64, d, last);
            last = d;
        }
    }

    #[test]
    fn converges_to_psi_at_half_load(levels in prop::collection::vec(0.0f64..3.0, 1..8)) {
        let psi = fixed_point(0.5).unwrap();
        let evo = solve(&steps(&levels, 0.5), 20.0).unwrap();
        let d = evo.at(20.0).unwrap().sup_deviation(psi);
        prop_assert!(d < 1e-3, "deviation {} at t = 20", d);
    }
}

fn steps(levels: &[f64], lambda: f64) -> DensityGrid {
    let k = levels.len();
    DensityGrid::from_fn(|x| levels[((x * k as f64) as usize).min(k - 1)], lambda).unwrap()
}

#[test]
fn constant_psi_is_stationary() {
    for lambda in [0.2, 0.5, 0.8] {
        let psi = fixed_point(lambda).unwrap();
        let xi0 = DensityGrid::constant(psi, lambda).unwrap();
        let ext = extend_density(&xi0, DEFAULT_DEPTH).unwrap();
        assert!(ext.values().iter().all(|&v| (v - psi).abs() <= 1e-12));
        for t in [0.3, 1.0, 4.5] {
            assert!(evolve(&ext, t).unwrap().sup_deviation(psi) <= 1e-12);
        }
    }
}

#[test]
fn zero_start_extension() {
    let xi0 = DensityGrid::constant(0.0, 0.5).unwrap();
    let ext = extend_density(&xi0, DEFAULT_DEPTH).unwrap();
    let c = CELLS_PER_HALF;
    let v = ext.values();
    let base = DEFAULT_DEPTH * c;
    // (-1/2, 0] is M(0) = lambda, the strips further left climb towards psi.
    assert!(v[base - c..base].iter().all(|&x| x == 0.5));
    let strips: Vec<f64> = (1..=DEFAULT_DEPTH).map(|s| v[base - s * c]).collect();
    assert!(strips.windows(2).all(|w| w[1] >= w[0]));
    assert!((v[0] - 2f64.ln()).abs() < 1e-6);
}

#[test]
fn exact_shift_conserves_mass() {
    let xi0 = DensityGrid::from_fn(|x| 0.4 + (7.0 * x).sin().abs(), 0.6).unwrap();
    let ext = extend_density(&xi0, DEFAULT_DEPTH).unwrap();
    let evo = Evolution::new(ext.clone()).unwrap();
    for cells in [1usize, 37, 700, 1500] {
        let y = cells as f64 * GRID_SPACING;
        let t = evo.map().tau(y).unwrap();
        let moved = evo.at(t).unwrap();
        for (a, b) in [(0.0, 1.0), (0.1, 0.35), (0.5, 0.75)] {
            let want = ext.mass(a - y, b - y);
            let got = moved.mass(a, b);
            assert!((got - want).abs() <= 1e-9 * want.max(1.0), "shift {cells}: [{a}, {b}] {got} vs {want}");
        }
    }
}

#[test]
fn block_crosses_midpoint_at_its_own_speed() {
    let lambda = 0.5;
    let (u, a) = (1.7, 0.25);
    let xi0 = DensityGrid::from_fn(|x| if x < a { u } else { 0.2 }, lambda).unwrap();
    let evo = solve(&xi0, 5.0).unwrap();
    let map = evo.map();
    // The block sits on [0, a], so it passes 1/2 while the displacement
    // runs from 1/2 - a to 1/2.
    let crossing = map.tau(0.5).unwrap() - map.tau(0.5 - a).unwrap();
    let expected = a / speed(u).unwrap();
    assert!((crossing - expected).abs() < 1e-9, "{crossing} vs {expected}");
    assert!((speed(u).unwrap() - (1.0 - (-u).exp()) / u).abs() < 1e-15);
}

#[test]
fn impulse_solution_shape() {
    for c in [5.0, 10.0, 1e-6] {
        let s = impulse_solution(c).unwrap();
        assert_eq!(s.sojourn(), c + 1.0);
        assert_eq!(s.time_to(0.25), 0.25);
        assert_eq!(s.time_to(0.75), 0.75 + c);
    }
    assert!(impulse_solution(0.0).is_err());
}
