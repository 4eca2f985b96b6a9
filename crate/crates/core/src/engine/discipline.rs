use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::{PacketId, PacketState, SystemState};
use crate::topology::NodeId;
use crate::RngStream;

/// Rule applied by Selfish when the sender holds no useful packet of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelfishFallback {
    #[default]
    OldestFirst,
    YoungestFirst,
    UniformRandom,
}

/// Packet selection rule at a communication epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisciplineKind {
    OldestUseful,
    RandomUseful,
    Selfish(SelfishFallback),
    /// Every useful packet crosses the link at each epoch.
    Free,
}

impl DisciplineKind {
    pub const SELFISH: DisciplineKind = DisciplineKind::Selfish(SelfishFallback::OldestFirst);

    pub fn label(&self) -> &'static str {
        match self {
            DisciplineKind::OldestUseful => "ou",
            DisciplineKind::RandomUseful => "ru",
            DisciplineKind::Selfish(_) => "selfish",
            DisciplineKind::Free => "free",
        }
    }
}

impl fmt::Display for DisciplineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[inline]
pub(crate) fn is_useful(p: &PacketState, from: NodeId, to: NodeId) -> bool {
    p.availability.contains(from) && !p.availability.contains(to)
}

/// Packets held by `from` and missing at `to`, oldest first.
pub fn useful_on_link(state: &SystemState, from: NodeId, to: NodeId) -> Vec<PacketId> {
    state
        .packets
        .iter()
        .filter(|p| is_useful(p, from, to))
        .map(|p| p.id)
        .collect()
}

/// Chooses among useful packets given by position in the packet deque.
/// `useful` must be in ascending position (arrival) order. Returns a
/// position into `useful`.
pub(crate) fn select_position<'a>(
    discipline: DisciplineKind,
    from: NodeId,
    useful: &[usize],
    packet: impl Fn(usize) -> &'a PacketState,
    rng: &mut RngStream,
) -> Option<usize> {
    if useful.is_empty() {
        return None;
    }
    match discipline {
        // Positions follow arrival order; equal arrival times fall back to
        // the smaller id, which is also the earlier position.
        DisciplineKind::OldestUseful | DisciplineKind::Free => Some(0),
        DisciplineKind::RandomUseful => Some(rng.random_range(0..useful.len())),
        DisciplineKind::Selfish(fallback) => {
            if let Some(k) = useful.iter().position(|&i| packet(i).source == from) {
                return Some(k);
            }
            Some(match fallback {
                SelfishFallback::OldestFirst => 0,
                SelfishFallback::YoungestFirst => useful.len() - 1,
                SelfishFallback::UniformRandom => rng.random_range(0..useful.len()),
            })
        }
    }
}

/// Packet transmitted on `(from, to)` under `discipline`, given the exact
/// output of [`useful_on_link`]. For [`DisciplineKind::Free`] every useful
/// packet is sent; this returns the oldest of them.
pub fn select_packet(
    discipline: DisciplineKind,
    from: NodeId,
    useful: &[PacketId],
    state: &SystemState,
    rng: &mut RngStream,
) -> Option<PacketId> {
    let positions: Vec<usize> = useful
        .iter()
        .filter_map(|&id| state.index_of(id))
        .collect();
    select_position(discipline, from, &positions, |i| &state.packets[i], rng).map(|k| useful[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn state_with(n: usize, packets: &[(usize, f64, &[usize])]) -> SystemState {
        let mut s = SystemState::empty(n);
        for &(src, t, extra) in packets {
            let id = s.push_packet(NodeId(src), t);
            let i = s.index_of(id).unwrap();
            for &v in extra {
                let p = &mut s.packets[i];
                if p.availability.insert(NodeId(v)) {
                    p.stage += 1;
                    s.undelivered -= 1;
                    s.held[v] += 1;
                }
            }
        }
        s
    }

    #[test]
    fn usefulness() {
        let s = state_with(3, &[(0, 1.0, &[])]);
        assert_eq!(useful_on_link(&s, NodeId(0), NodeId(1)), vec![PacketId(1)]);
        let s = state_with(3, &[(0, 1.0, &[1])]);
        assert!(useful_on_link(&s, NodeId(0), NodeId(1)).is_empty());
        let s = state_with(3, &[(2, 1.0, &[])]);
        assert!(useful_on_link(&s, NodeId(0), NodeId(1)).is_empty());
    }

    #[test]
    fn oldest_useful_picks_minimum_arrival() {
        // Arrival times must be nondecreasing in the deque, so build in
        // order 2.0, 5.0, 9.0 and check OU picks the 2.0 packet.
        let s = state_with(4, &[(0, 2.0, &[]), (0, 5.0, &[]), (0, 9.0, &[])]);
        let useful = useful_on_link(&s, NodeId(0), NodeId(1));
        let mut rng = RngStream::new(0);
        let id = select_packet(DisciplineKind::OldestUseful, NodeId(0), &useful, &s, &mut rng);
        assert_eq!(s.packet(id.unwrap()).unwrap().arrival_time, 2.0);
    }

    #[test]
    fn selfish_prefers_own() {
        // Older packet from node 2 already at node 0, younger one from node 0.
        let s = state_with(4, &[(2, 1.0, &[0]), (0, 3.0, &[])]);
        let useful = useful_on_link(&s, NodeId(0), NodeId(1));
        assert_eq!(useful.len(), 2);
        let mut rng = RngStream::new(0);
        for fb in [
            SelfishFallback::OldestFirst,
            SelfishFallback::YoungestFirst,
            SelfishFallback::UniformRandom,
        ] {
            let id = select_packet(DisciplineKind::Selfish(fb), NodeId(0), &useful, &s, &mut rng);
            assert_eq!(s.packet(id.unwrap()).unwrap().source, NodeId(0));
        }
        let id = select_packet(DisciplineKind::OldestUseful, NodeId(0), &useful, &s, &mut rng);
        assert_eq!(id, Some(PacketId(1)));
    }

    #[test]
    fn selfish_fallbacks() {
        let s = state_with(4, &[(2, 1.0, &[0]), (3, 2.0, &[0])]);
        let useful = useful_on_link(&s, NodeId(0), NodeId(1));
        let mut rng = RngStream::new(0);
        let pick = |fb, rng: &mut RngStream| {
            select_packet(DisciplineKind::Selfish(fb), NodeId(0), &useful, &s, rng)
        };
        assert_eq!(pick(SelfishFallback::OldestFirst, &mut rng), Some(PacketId(1)));
        assert_eq!(pick(SelfishFallback::YoungestFirst, &mut rng), Some(PacketId(2)));
        let mut seen = [false; 2];
        for _ in 0..64 {
            let id = pick(SelfishFallback::UniformRandom, &mut rng).unwrap();
            seen[(id.0 - 1) as usize] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn empty_useful_is_none() {
        let s = state_with(3, &[(0, 1.0, &[])]);
        let mut rng = RngStream::new(0);
        for d in [
            DisciplineKind::OldestUseful,
            DisciplineKind::RandomUseful,
            DisciplineKind::SELFISH,
            DisciplineKind::Free,
        ] {
            assert_eq!(select_packet(d, NodeId(1), &[], &s, &mut rng), None);
        }
    }

    #[test]
    fn random_useful_is_uniform() {
        let s = state_with(3, &[(0, 1.0, &[]), (0, 2.0, &[]), (0, 3.0, &[])]);
        let useful = useful_on_link(&s, NodeId(0), NodeId(1));
        let mut rng = RngStream::new(11);
        let mut counts = [0u32; 3];
        let trials = 30_000;
        for _ in 0..trials {
            let id = select_packet(DisciplineKind::RandomUseful, NodeId(0), &useful, &s, &mut rng);
            counts[(id.unwrap().0 - 1) as usize] += 1;
        }
        // Binomial sd at p = 1/3 is about 82; allow 4 sd.
        for c in counts {
            assert!((c as f64 - trials as f64 / 3.0).abs() < 330.0, "{counts:?}");
        }
    }
}
