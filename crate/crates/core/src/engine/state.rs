use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::Occupancy;
use crate::error::{invalid, Result};
use crate::topology::NodeId;
use crate::RngStream;

/// Arrival sequence number. Ids grow with arrival time, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId(pub u64);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fixed-width bit set over the nodes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Availability {
    words: Box<[u64]>,
}

impl Availability {
    pub fn empty(node_count: usize) -> Self {
        Self {
            words: vec![0u64; node_count.div_ceil(64)].into_boxed_slice(),
        }
    }

    pub fn singleton(node_count: usize, node: NodeId) -> Self {
        let mut a = Self::empty(node_count);
        a.insert(node);
        a
    }

    #[inline]
    pub fn contains(&self, node: NodeId) -> bool {
        let i = node.0;
        self.words[i >> 6] & (1u64 << (i & 63)) != 0
    }

    /// Sets the bit; returns whether it was clear before.
    #[inline]
    pub fn insert(&mut self, node: NodeId) -> bool {
        let i = node.0;
        let w = &mut self.words[i >> 6];
        let m = 1u64 << (i & 63);
        let fresh = *w & m == 0;
        *w |= m;
        fresh
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_subset(&self, other: &Availability) -> bool {
        self.words
            .iter()
            .zip(other.words.iter())
            .all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            core::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(NodeId(wi * 64 + b))
            })
        })
    }
}

impl fmt::Debug for Availability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|n| n.0)).finish()
    }
}

/// One packet in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketState {
    pub id: PacketId,
    pub source: NodeId,
    pub arrival_time: f64,
    pub availability: Availability,
    /// Number of nodes holding the packet; always the bit count of
    /// `availability`.
    pub stage: u32,
    /// Times at which stages 2, 3, ... were reached, when recording.
    pub hits: Vec<f64>,
}

/// Full state of the general simulator: the packets in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub(crate) node_count: usize,
    pub(crate) clock: f64,
    pub(crate) packets: VecDeque<PacketState>,
    pub(crate) next_id: u64,
    pub(crate) undelivered: u64,
    /// `held[u]`: present packets available at node `u`.
    pub(crate) held: Vec<u64>,
    pub(crate) record_hits: bool,
}

impl SystemState {
    pub fn empty(node_count: usize) -> Self {
        Self {
            node_count,
            clock: 0.0,
            packets: VecDeque::new(),
            next_id: 1,
            undelivered: 0,
            held: vec![0; node_count],
            record_hits: false,
        }
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn packets(&self) -> impl ExactSizeIterator<Item = &PacketState> + '_ {
        self.packets.iter()
    }

    pub fn packet(&self, id: PacketId) -> Option<&PacketState> {
        self.index_of(id).map(|i| &self.packets[i])
    }

    pub(crate) fn index_of(&self, id: PacketId) -> Option<usize> {
        // Ids increase along the deque.
        let (a, b) = self.packets.as_slices();
        match a.binary_search_by(|p| p.id.cmp(&id)) {
            Ok(i) => Some(i),
            Err(_) => b
                .binary_search_by(|p| p.id.cmp(&id))
                .ok()
                .map(|i| i + a.len()),
        }
    }

    pub fn next_packet_id(&self) -> PacketId {
        PacketId(self.next_id)
    }

    /// Adds a stage-1 packet at `source`; it becomes the youngest packet.
    pub fn push_packet(&mut self, source: NodeId, arrival_time: f64) -> PacketId {
        let id = PacketId(self.next_id);
        self.next_id += 1;
        let hits = if self.record_hits {
            Vec::with_capacity(self.node_count - 1)
        } else {
            Vec::new()
        };
        self.packets.push_back(PacketState {
            id,
            source,
            arrival_time,
            availability: Availability::singleton(self.node_count, source),
            stage: 1,
            hits,
        });
        self.undelivered += (self.node_count - 1) as u64;
        self.held[source.0] += 1;
        id
    }

    /// Debug check of the bookkeeping invariants: stage equals bit count,
    /// source bit set, no fully delivered packet present, arrival order.
    pub fn check_invariants(&self) -> bool {
        let mut undelivered = 0u64;
        let mut held = vec![0u64; self.node_count];
        let mut prev: Option<(f64, PacketId)> = None;
        for p in &self.packets {
            if p.availability.count() != p.stage
                || !p.availability.contains(p.source)
                || p.stage as usize >= self.node_count
                || p.stage == 0
            {
                return false;
            }
            if let Some((t, id)) = prev {
                if p.arrival_time < t || p.id <= id {
                    return false;
                }
            }
            prev = Some((p.arrival_time, p.id));
            for u in p.availability.iter() {
                held[u.0] += 1;
            }
            undelivered += (self.node_count - p.stage as usize) as u64;
        }
        undelivered == self.undelivered && held == self.held
    }
}

impl Occupancy for SystemState {
    #[inline]
    fn distinct(&self) -> usize {
        self.packets.len()
    }
    #[inline]
    fn undelivered(&self) -> u64 {
        self.undelivered
    }
    #[inline]
    fn oldest_arrival(&self) -> Option<f64> {
        self.packets.front().map(|p| p.arrival_time)
    }
}

/// Impulse initial state: `mass` stage-1 packets arriving at time 0, each at
/// a node drawn uniformly at random.
pub fn init_impulse(node_count: usize, mass: usize, rng: &mut RngStream) -> Result<SystemState> {
    if node_count < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    if mass == 0 {
        return Err(invalid("mass", "must be at least 1"));
    }
    let mut s = SystemState::empty(node_count);
    for _ in 0..mass {
        let node = NodeId(rng.random_range(0..node_count));
        s.push_packet(node, 0.0);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitset_basics() {
        let mut a = Availability::singleton(130, NodeId(3));
        assert!(a.contains(NodeId(3)));
        assert!(!a.contains(NodeId(4)));
        assert!(a.insert(NodeId(129)));
        assert!(!a.insert(NodeId(129)));
        assert_eq!(a.count(), 2);
        let ids: Vec<usize> = a.iter().map(|n| n.0).collect();
        assert_eq!(ids, vec![3, 129]);
        let b = Availability::singleton(130, NodeId(3));
        assert!(b.is_subset(&a));
        assert!(!a.is_subset(&b));
    }

    #[test]
    fn arrival_creates_stage_one() {
        let mut s = SystemState::empty(5);
        let id = s.push_packet(NodeId(2), 1.5);
        let p = s.packet(id).unwrap();
        assert_eq!(p.stage, 1);
        assert!(p.availability.contains(NodeId(2)));
        assert_eq!(p.availability.count(), 1);
        assert_eq!(s.undelivered(), 4);
        assert!(s.check_invariants());
    }

    #[test]
    fn impulse_ids_and_times() {
        let mut rng = RngStream::new(1);
        let s = init_impulse(10, 7, &mut rng).unwrap();
        let ids: Vec<u64> = s.packets().map(|p| p.id.0).collect();
        assert_eq!(ids, (1..=7).collect::<Vec<_>>());
        assert!(s.packets().all(|p| p.arrival_time == 0.0 && p.stage == 1));
        assert!(init_impulse(10, 0, &mut rng).is_err());
    }
}
