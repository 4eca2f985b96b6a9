use dissem_core::topology::{
    build_symmetric, build_tree, check_cut_condition, is_unique_path, Link, NetworkSpec, NodeId,
};
use proptest::prelude::*;

/// Edmonds-Karp on a dense capacity matrix.
fn max_flow(cap: &[Vec<f64>], s: usize, t: usize) -> f64 {
    let n = cap.len();
    let mut res: Vec<Vec<f64>> = cap.to_vec();
    let mut flow = 0.0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && res[u][v] > 1e-12 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return flow;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            push = push.min(res[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            res[u][v] -= push;
            res[v][u] += push;
            v = u;
        }
        flow += push;
    }
}

fn network(cap: &[Vec<f64>], rates: Vec<f64>) -> NetworkSpec {
    let mut links = vec![];
    for (a, row) in cap.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c > 0.0 {
                links.push(Link {
                    from: NodeId(a),
                    to: NodeId(b),
                    capacity: c,
                });
            }
        }
    }
    NetworkSpec::new(rates, links).unwrap()
}

fn capacities(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(0u8..4, n), n).prop_map(move |m| {
            (0..n)
                .map(|a| (0..n).map(|b| if a == b { 0.0 } else { m[a][b] as f64 }).collect())
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn single_source_cut_matches_max_flow(cap in capacities(10), src in 0usize..10, half_units in 0u32..12) {
        let n = cap.len();
        let s = src % n;
        // Half-integer loads never tie with the integer flows.
        let load = half_units as f64 + 0.5;
        let mut rates = vec![0.0; n];
        rates[s] = load;
        let net = network(&cap, rates);
        let r = check_cut_condition(&net).unwrap();
        let min_flow = (0..n).filter(|&t| t != s).map(|t| max_flow(&cap, s, t)).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(r.satisfied, min_flow > load);
        prop_assert!((r.margin - (min_flow - load)).abs() < 1e-9, "margin {} vs {}", r.margin, min_flow - load);
        prop_assert!(r.worst_subset.contains(&NodeId(s)));
    }

    #[test]
    fn random_trees_are_unique_path(n in 2usize..=12, picks in prop::collection::vec(any::<prop::sample::Index>(), 11)) {
        let edges: Vec<(usize, usize)> = (1..n).map(|k| (picks[k - 1].index(k), k)).collect();
        let caps = vec![(1.0, 0.5); n - 1];
        let net = build_tree(&edges, &caps, vec![0.1; n]).unwrap();
        prop_assert!(is_unique_path(&net).unwrap());
        prop_assert_eq!(net.link_count(), 2 * (n - 1));
    }
}

#[test]
fn symmetric_cut_condition_iff_load_below_one() {
    for n in 2..=12 {
        for k in 0..=30 {
            let lambda = k as f64 * 0.05;
            let r = check_cut_condition(&build_symmetric(n, lambda).unwrap()).unwrap();
            assert_eq!(r.satisfied, lambda < 1.0, "N={n} lambda={lambda}: {r:?}");
        }
    }
}

#[test]
fn complete_graph_is_not_unique_path() {
    assert!(!is_unique_path(&build_symmetric(3, 0.5).unwrap()).unwrap());
    assert!(is_unique_path(&build_symmetric(2, 0.5).unwrap()).unwrap());
}
