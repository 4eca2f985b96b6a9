//! Network specifications and their static analysis.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Error, Result};

/// Dense node index in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Directed link with its communication rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: f64,
}

/// Link set of a network. Complete graphs are kept implicit so that large
/// symmetric systems (N in the tens of thousands) do not materialise
/// `N(N-1)` link records.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkSet {
    Complete { capacity: f64 },
    Explicit(Vec<Link>),
}

/// Directed graph with per-node arrival rates and per-link capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    node_count: usize,
    arrival_rates: Vec<f64>,
    links: LinkSet,
}

fn check_rate(name: &'static str, r: f64) -> Result<()> {
    if !r.is_finite() || r < 0.0 {
        return Err(invalid(name, "must be finite and nonnegative"));
    }
    Ok(())
}

impl NetworkSpec {
    /// Network with an explicit link list.
    pub fn new(arrival_rates: Vec<f64>, links: Vec<Link>) -> Result<Self> {
        let n = arrival_rates.len();
        if n < 2 {
            return Err(Error::InvalidNetwork("at least two nodes are required"));
        }
        for &r in &arrival_rates {
            check_rate("arrival_rate", r)?;
        }
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(links.len());
        for l in &links {
            if l.from.0 >= n || l.to.0 >= n {
                return Err(Error::InvalidNetwork("link endpoint out of range"));
            }
            if l.from == l.to {
                return Err(Error::InvalidNetwork("self-loop link"));
            }
            if !l.capacity.is_finite() || l.capacity <= 0.0 {
                return Err(Error::InvalidNetwork("link capacity must be positive"));
            }
            pairs.push((l.from.0, l.to.0));
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidNetwork("duplicate link"));
        }
        Ok(Self {
            node_count: n,
            arrival_rates,
            links: LinkSet::Explicit(links),
        })
    }

    /// Complete digraph with a common link capacity.
    pub fn complete(arrival_rates: Vec<f64>, capacity: f64) -> Result<Self> {
        if arrival_rates.len() < 2 {
            return Err(Error::InvalidNetwork("at least two nodes are required"));
        }
        for &r in &arrival_rates {
            check_rate("arrival_rate", r)?;
        }
        if !capacity.is_finite() || capacity <= 0.0 {
            return Err(Error::InvalidNetwork("link capacity must be positive"));
        }
        Ok(Self {
            node_count: arrival_rates.len(),
            arrival_rates,
            links: LinkSet::Complete { capacity },
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival_rates
    }

    pub fn link_set(&self) -> &LinkSet {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        match &self.links {
            LinkSet::Complete { .. } => self.node_count * (self.node_count - 1),
            LinkSet::Explicit(l) => l.len(),
        }
    }

    /// Iterates over every directed link.
    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        let n = self.node_count;
        let (complete, explicit) = match &self.links {
            LinkSet::Complete { capacity } => (Some(*capacity), &[][..]),
            LinkSet::Explicit(l) => (None, &l[..]),
        };
        let implicit = complete.into_iter().flat_map(move |c| {
            (0..n).flat_map(move |u| {
                (0..n).filter(move |&v| v != u).map(move |v| Link {
                    from: NodeId(u),
                    to: NodeId(v),
                    capacity: c,
                })
            })
        });
        implicit.chain(explicit.iter().copied())
    }

    pub fn capacity(&self, from: NodeId, to: NodeId) -> Option<f64> {
        match &self.links {
            LinkSet::Complete { capacity } => {
                (from != to && from.0 < self.node_count && to.0 < self.node_count)
                    .then_some(*capacity)
            }
            LinkSet::Explicit(l) => l
                .iter()
                .find(|k| k.from == from && k.to == to)
                .map(|k| k.capacity),
        }
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.arrival_rates.iter().sum()
    }

    pub fn total_capacity(&self) -> f64 {
        match &self.links {
            LinkSet::Complete { capacity } => capacity * self.link_count() as f64,
            LinkSet::Explicit(l) => l.iter().map(|k| k.capacity).sum(),
        }
    }

    /// Common arrival rate if every node has the same one.
    pub fn uniform_arrival_rate(&self) -> Option<f64> {
        let first = self.arrival_rates[0];
        self.arrival_rates
            .iter()
            .all(|&r| r == first)
            .then_some(first)
    }

    /// Symmetric means complete, unit capacities and equal arrival rates.
    pub fn is_symmetric(&self) -> bool {
        matches!(self.links, LinkSet::Complete { capacity } if capacity == 1.0)
            && self.uniform_arrival_rate().is_some()
    }
}

/// Complete digraph on `n` nodes, unit capacities, arrival rate `lambda`
/// at every node.
pub fn build_symmetric(n: usize, lambda: f64) -> Result<NetworkSpec> {
    if n < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    check_rate("lambda", lambda)?;
    NetworkSpec::complete(vec![lambda; n], 1.0)
}

/// Three-node network on which Oldest-Useful is unstable although the cut
/// condition holds. Node 0 receives all traffic at rate `2 - epsilon` and
/// feeds nodes 1 and 2, which are linked in both directions; every link has
/// capacity 1.
pub fn build_counterexample(epsilon: f64) -> Result<NetworkSpec> {
    if !(epsilon > 0.0 && epsilon < 2.0) {
        return Err(invalid("epsilon", "must lie in (0, 2)"));
    }
    let link = |a, b| Link {
        from: NodeId(a),
        to: NodeId(b),
        capacity: 1.0,
    };
    NetworkSpec::new(
        vec![2.0 - epsilon, 0.0, 0.0],
        vec![link(0, 1), link(0, 2), link(1, 2), link(2, 1)],
    )
}

/// Tree-structured network: each undirected edge `(a, b)` becomes the links
/// `a -> b` and `b -> a` with capacities `capacities[k] = (c_ab, c_ba)`.
/// The node count is `arrival_rates.len()`.
pub fn build_tree(
    undirected_edges: &[(usize, usize)],
    capacities: &[(f64, f64)],
    arrival_rates: Vec<f64>,
) -> Result<NetworkSpec> {
    let n = arrival_rates.len();
    if n < 2 {
        return Err(Error::InvalidNetwork("at least two nodes are required"));
    }
    if capacities.len() != undirected_edges.len() {
        return Err(invalid("capacities", "one capacity pair per edge is required"));
    }
    if undirected_edges.len() != n - 1 {
        return Err(Error::InvalidNetwork("a tree on N nodes has exactly N-1 edges"));
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut links = Vec::with_capacity(2 * undirected_edges.len());
    for (&(a, b), &(cab, cba)) in undirected_edges.iter().zip(capacities) {
        if a >= n || b >= n {
            return Err(Error::InvalidNetwork("edge endpoint out of range"));
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return Err(Error::InvalidNetwork("edge list contains a cycle"));
        }
        parent[ra] = rb;
        links.push(Link {
            from: NodeId(a),
            to: NodeId(b),
            capacity: cab,
        });
        links.push(Link {
            from: NodeId(b),
            to: NodeId(a),
            capacity: cba,
        });
    }
    // n-1 acyclic edges on n nodes are necessarily connected.
    NetworkSpec::new(arrival_rates, links)
}

/// Tree with the same capacity on every directed link.
pub fn build_tree_uniform(
    undirected_edges: &[(usize, usize)],
    capacity: f64,
    arrival_rates: Vec<f64>,
) -> Result<NetworkSpec> {
    let caps = vec![(capacity, capacity); undirected_edges.len()];
    build_tree(undirected_edges, &caps, arrival_rates)
}

/// Result of the exhaustive cut-condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct CutReport {
    pub satisfied: bool,
    /// Minimising strict nonempty subset, ascending node order.
    pub worst_subset: Vec<NodeId>,
    /// `cut capacity - arrival rate` of the minimising subset.
    pub margin: f64,
}

pub const CUT_CHECK_MAX_NODES: usize = 24;

/// Checks that every strict nonempty subset `S` receiving traffic receives
/// strictly less than the capacity of the links leaving it. Subsets with no
/// arrivals cannot be overloaded and are exempt. A margin of exactly
/// zero (a critically loaded cut) is reported as not satisfied.
///
/// Enumerates all `2^N - 2` subsets in Gray-code order, updating cut
/// capacity and load incrementally in `O(N)` per subset. Ties are broken
/// towards smaller subsets, then lower bitmasks.
pub fn check_cut_condition(net: &NetworkSpec) -> Result<CutReport> {
    let n = net.node_count();
    if n > CUT_CHECK_MAX_NODES {
        return Err(Error::SizeLimit {
            operation: "check_cut_condition",
            nodes: n,
            limit: CUT_CHECK_MAX_NODES,
        });
    }
    let mut cap = vec![0.0f64; n * n];
    for l in net.links() {
        cap[l.from.0 * n + l.to.0] = l.capacity;
    }
    let lambda = net.arrival_rates();
    let scale = net.total_capacity() + net.total_arrival_rate();
    let tie = 1e-12 * scale.max(1.0);

    let full: u32 = (1u32 << n) - 1;
    let mut mask: u32 = 0;
    let mut cut = 0.0f64;
    let mut load = 0.0f64;
    let mut best: Option<(f64, u32)> = None;
    let mut idle: Option<(f64, u32)> = None;

    for k in 1u64..(1u64 << n) {
        let w = (k.trailing_zeros()) as usize;
        let bit = 1u32 << w;
        let adding = mask & bit == 0;
        mask &= !bit;
        // Links from w to outside S and from S into w change status.
        let mut out_w = 0.0;
        let mut in_w = 0.0;
        for v in (0..n).filter(|&v| v != w) {
            if mask & (1 << v) != 0 {
                in_w += cap[v * n + w];
            } else {
                out_w += cap[w * n + v];
            }
        }
        if adding {
            mask |= bit;
            cut += out_w - in_w;
            load += lambda[w];
        } else {
            cut -= out_w - in_w;
            load -= lambda[w];
        }
        if mask == full || mask == 0 {
            continue;
        }
        // A subset without arrivals has nothing to push out.
        if load <= tie {
            let m = cut;
            if idle.is_none_or(|(b, _)| m < b - tie) {
                idle = Some((m, mask));
            }
            continue;
        }
        let mut margin = cut - load;
        if margin.abs() <= tie {
            margin = 0.0;
        }
        let better = match best {
            None => true,
            Some((m, bm)) => {
                if margin < m - tie {
                    true
                } else if (margin - m).abs() <= tie {
                    let (pc, pb) = (mask.count_ones(), bm.count_ones());
                    pc < pb || (pc == pb && mask < bm)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((margin, mask));
        }
    }
    // Without any traffic the condition holds trivially; report the
    // smallest spare cut.
    let (margin, bm, satisfied) = match best {
        Some((m, b)) => (m, b, m > 0.0),
        None => {
            let (m, b) = idle.expect("n >= 2 has strict nonempty subsets");
            (m, b, true)
        }
    };
    Ok(CutReport {
        satisfied,
        worst_subset: (0..n).filter(|&v| bm & (1 << v) != 0).map(NodeId).collect(),
        margin,
    })
}

pub const UNIQUE_PATH_MAX_NODES: usize = 12;

/// True iff every ordered node pair is joined by at most one simple
/// directed path.
pub fn is_unique_path(net: &NetworkSpec) -> Result<bool> {
    let n = net.node_count();
    if n > UNIQUE_PATH_MAX_NODES {
        return Err(Error::SizeLimit {
            operation: "is_unique_path",
            nodes: n,
            limit: UNIQUE_PATH_MAX_NODES,
        });
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for l in net.links() {
        adj[l.from.0].push(l.to.0);
    }
    // Each simple path from the root ends at some node; a second arrival at
    // any node is a second path, so the walk stops after O(N) paths.
    fn walk(adj: &[Vec<usize>], at: usize, on_path: &mut [bool], hits: &mut [u8]) -> bool {
        for &next in &adj[at] {
            if on_path[next] {
                continue;
            }
            hits[next] += 1;
            if hits[next] > 1 {
                return false;
            }
            on_path[next] = true;
            let ok = walk(adj, next, on_path, hits);
            on_path[next] = false;
            if !ok {
                return false;
            }
        }
        true
    }
    for root in 0..n {
        let mut on_path = vec![false; n];
        let mut hits = vec![0u8; n];
        on_path[root] = true;
        if !walk(&adj, root, &mut on_path, &mut hits) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[usize]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn symmetric_builders() {
        let net = build_symmetric(2, 0.5).unwrap();
        assert_eq!(net.link_count(), 2);
        assert_eq!(net.arrival_rates(), &[0.5, 0.5]);
        assert!(net.links().all(|l| l.capacity == 1.0));

        let net = build_symmetric(4, 0.3).unwrap();
        assert_eq!(net.link_count(), 12);
        assert_eq!(net.links().count(), 12);
        assert!(net.is_symmetric());

        let net = build_symmetric(50, 0.3).unwrap();
        assert_eq!(net.node_count(), 50);
        assert_eq!(net.uniform_arrival_rate(), Some(0.3));

        assert!(build_symmetric(1, 0.5).is_err());
        assert!(build_symmetric(3, -0.1).is_err());
    }

    #[test]
    fn counterexample_shape() {
        let net = build_counterexample(0.05).unwrap();
        assert!((net.arrival_rates()[0] - 1.95).abs() < 1e-15);
        assert_eq!(&net.arrival_rates()[1..], &[0.0, 0.0]);
        assert_eq!(net.link_count(), 4);
        assert!(net.links().all(|l| l.capacity == 1.0));
        assert_eq!(net.capacity(NodeId(1), NodeId(0)), None);
        assert!(build_counterexample(2.0).is_err());
        assert!(build_counterexample(0.0).is_err());
    }

    #[test]
    fn counterexample_cut_margin() {
        let r = check_cut_condition(&build_counterexample(0.1).unwrap()).unwrap();
        assert!(r.satisfied);
        assert!((r.margin - 0.1).abs() < 1e-12);
        assert_eq!(r.worst_subset, ids(&[0]));

        let r = check_cut_condition(&build_counterexample(0.05).unwrap()).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.worst_subset, ids(&[0]));
        assert!((r.margin - 0.05).abs() < 1e-12);
    }

    #[test]
    fn symmetric_cut_margin() {
        let r = check_cut_condition(&build_symmetric(3, 0.9).unwrap()).unwrap();
        assert!(r.satisfied);
        assert!((r.margin - 0.2).abs() < 1e-12);
        assert_eq!(r.worst_subset.len(), 2);

        for n in 2..=8 {
            let r = check_cut_condition(&build_symmetric(n, 1.0).unwrap()).unwrap();
            assert!(!r.satisfied, "n = {n}");
            assert_eq!(r.margin, 0.0);
        }
    }

    #[test]
    fn cut_size_limit() {
        let net = build_symmetric(25, 0.1).unwrap();
        assert!(matches!(
            check_cut_condition(&net),
            Err(Error::SizeLimit { limit: 24, .. })
        ));
    }

    #[test]
    fn tree_builder() {
        let net = build_tree_uniform(&[(0, 1), (1, 2)], 1.0, vec![0.1; 3]).unwrap();
        assert_eq!(net.link_count(), 4);

        let star = build_tree_uniform(&[(0, 1), (0, 2), (0, 3)], 1.0, vec![0.1; 4]).unwrap();
        assert_eq!(star.link_count(), 6);
        assert!(is_unique_path(&star).unwrap());

        assert!(build_tree_uniform(&[(0, 1), (1, 2), (2, 0)], 1.0, vec![0.1; 3]).is_err());
        assert!(build_tree_uniform(&[(0, 1), (0, 1)], 1.0, vec![0.1; 3]).is_err());
        assert!(build_tree_uniform(&[(0, 1)], 1.0, vec![0.1; 3]).is_err());
    }

    #[test]
    fn unique_path_cases() {
        assert!(!is_unique_path(&build_symmetric(3, 0.1).unwrap()).unwrap());
        let link = |a, b| Link {
            from: NodeId(a),
            to: NodeId(b),
            capacity: 1.0,
        };
        let cycle =
            NetworkSpec::new(vec![0.1; 3], vec![link(0, 1), link(1, 2), link(2, 0)]).unwrap();
        assert!(is_unique_path(&cycle).unwrap());
        assert!(is_unique_path(&build_symmetric(13, 0.1).unwrap()).is_err());
    }

    #[test]
    fn rejects_bad_links() {
        let l = |a, b, c| Link {
            from: NodeId(a),
            to: NodeId(b),
            capacity: c,
        };
        assert!(NetworkSpec::new(vec![0.1; 2], vec![l(0, 0, 1.0)]).is_err());
        assert!(NetworkSpec::new(vec![0.1; 2], vec![l(0, 1, 1.0), l(0, 1, 2.0)]).is_err());
        assert!(NetworkSpec::new(vec![0.1; 2], vec![l(0, 1, 0.0)]).is_err());
        assert!(NetworkSpec::new(vec![0.1; 2], vec![l(0, 2, 1.0)]).is_err());
    }
}
