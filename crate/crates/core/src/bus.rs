//! Deterministic discrete-event message bus.
//!
//! Nodes publish on string topics and subscribe by topic prefix. Every
//! directed pair of nodes has a [`LinkCondition`] deciding, at send time,
//! whether an envelope gets through and when it lands. Delivery happens
//! only when the clock is advanced, in `(deliver_time, sequence)` order, so
//! a run is a pure function of the publish sequence and the link seeds.
//! Publishing never blocks and a silent peer stalls nothing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::{self, Write};
use std::time::Instant;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = String;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("advance needs dt > 0, got {0}")]
    InvalidStep(f64),
    #[error("the clock follows wall time; advance is only available in simulated mode")]
    WallClock,
    #[error("invalid link condition: {0}")]
    InvalidLink(String),
}

/// Round to whole nanoseconds so repeated steps land on exact tick times.
pub fn quantize(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Simulated,
    Wall,
}

#[derive(Debug, Clone)]
pub struct VirtualClock {
    now: f64,
    mode: ClockMode,
    origin: Instant,
}

impl VirtualClock {
    pub fn new(mode: ClockMode) -> Self {
        Self {
            now: 0.0,
            mode,
            origin: Instant::now(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }
}

/// Connectivity of one direction of a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCondition {
    /// Sorted, disjoint `[start, end)` windows in which the link is up.
    /// `None` means always up.
    #[serde(default)]
    pub connected_intervals: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub latency: f64,
    /// Extra delay drawn uniformly from `[0, jitter)`.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub jitter_seed: u64,
    #[serde(default)]
    pub drop_rate: f64,
}

impl Default for LinkCondition {
    fn default() -> Self {
        Self {
            connected_intervals: None,
            latency: 0.0,
            jitter: 0.0,
            jitter_seed: 0,
            drop_rate: 0.0,
        }
    }
}

impl LinkCondition {
    /// Up everywhere except the given `[start, end)` gaps.
    pub fn with_gaps(gaps: &[(f64, f64)]) -> Self {
        let mut intervals = Vec::new();
        let mut start = f64::MIN;
        let mut sorted = gaps.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (lo, hi) in sorted {
            if lo > start {
                intervals.push([start, lo]);
            }
            start = start.max(hi);
        }
        intervals.push([start, f64::MAX]);
        Self {
            connected_intervals: Some(intervals),
            ..Self::default()
        }
    }

    pub fn latency(mut self, latency: f64) -> Self {
        self.latency = latency;
        self
    }

    pub fn drop_rate(mut self, rate: f64, seed: u64) -> Self {
        self.drop_rate = rate;
        self.jitter_seed = seed;
        self
    }

    pub fn connected_at(&self, t: f64) -> bool {
        match &self.connected_intervals {
            None => true,
            Some(iv) => iv.iter().any(|[s, e]| *s <= t && t < *e),
        }
    }

    pub fn validate(&self) -> Result<(), BusError> {
        let bad = |m: &str| Err(BusError::InvalidLink(m.to_string()));
        if !(self.latency >= 0.0) || !(self.jitter >= 0.0) {
            return bad("latency and jitter must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return bad("drop_rate must lie in [0, 1]");
        }
        if let Some(iv) = &self.connected_intervals {
            let mut prev_end = f64::NEG_INFINITY;
            for [s, e] in iv {
                if !(s < e) || *s < prev_end {
                    return bad("intervals must be non-empty, sorted and disjoint");
                }
                prev_end = *e;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub topic: String,
    pub payload: Bytes,
    pub src: NodeId,
    pub dst: NodeId,
    /// Per directed link, counting dropped envelopes too.
    pub link_seq: u64,
    pub send_time: f64,
    /// `None` when the envelope was dropped.
    pub deliver_time: Option<f64>,
}

/// One line of the delivery log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub t_send: f64,
    pub t_deliver: Option<f64>,
    pub topic: String,
    pub src: String,
    pub dst: String,
    pub dropped: bool,
}

struct LinkState {
    cond: LinkCondition,
    rng: ChaCha8Rng,
}

impl LinkState {
    fn new(cond: LinkCondition, salt: u64) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cond.jitter_seed ^ salt);
        Self { cond, rng }
    }
}

struct Pending {
    deliver_time: f64,
    seq: u64,
    envelope: Envelope,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .deliver_time
            .total_cmp(&self.deliver_time)
            .then(other.seq.cmp(&self.seq))
    }
}

const REVERSE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub struct Bus {
    clock: VirtualClock,
    subscriptions: BTreeMap<NodeId, Vec<String>>,
    offline: BTreeSet<NodeId>,
    links: BTreeMap<(NodeId, NodeId), LinkState>,
    link_seq: BTreeMap<(NodeId, NodeId), u64>,
    last_delivery: BTreeMap<(NodeId, NodeId, String), f64>,
    topics: BTreeSet<String>,
    pending: BinaryHeap<Pending>,
    next_seq: u64,
    log: Vec<DeliveryRecord>,
    record_log: bool,
}

impl Bus {
    pub fn new(mode: ClockMode) -> Self {
        Self {
            clock: VirtualClock::new(mode),
            subscriptions: BTreeMap::new(),
            offline: BTreeSet::new(),
            links: BTreeMap::new(),
            link_seq: BTreeMap::new(),
            last_delivery: BTreeMap::new(),
            topics: BTreeSet::new(),
            pending: BinaryHeap::new(),
            next_seq: 0,
            log: Vec::new(),
            record_log: true,
        }
    }

    pub fn simulated() -> Self {
        Self::new(ClockMode::Simulated)
    }

    pub fn now(&self) -> f64 {
        self.clock.now
    }

    pub fn mode(&self) -> ClockMode {
        self.clock.mode
    }

    /// Keep or skip the delivery log (long fuzz runs skip it).
    pub fn set_logging(&mut self, on: bool) {
        self.record_log = on;
    }

    pub fn subscribe(&mut self, node: &str, prefix: &str) {
        let subs = self.subscriptions.entry(node.to_string()).or_default();
        if !subs.iter().any(|p| p == prefix) {
            subs.push(prefix.to_string());
        }
    }

    /// An offline node neither sends nor receives.
    pub fn set_online(&mut self, node: &str, online: bool) {
        if online {
            self.offline.remove(node);
        } else {
            self.offline.insert(node.to_string());
        }
    }

    pub fn is_online(&self, node: &str) -> bool {
        !self.offline.contains(node)
    }

    /// Replace the condition of both directions between `a` and `b`.
    pub fn set_link(&mut self, a: &str, b: &str, cond: LinkCondition) {
        self.set_link_directed(a, b, cond.clone());
        self.set_link_directed(b, a, cond);
    }

    /// Replace the condition of the `from -> to` direction only.
    pub fn set_link_directed(&mut self, from: &str, to: &str, cond: LinkCondition) {
        let salt = if from < to { 0 } else { REVERSE_SALT };
        self.links
            .insert((from.to_string(), to.to_string()), LinkState::new(cond, salt));
    }

    pub fn link(&self, from: &str, to: &str) -> Option<&LinkCondition> {
        self.links
            .get(&(from.to_string(), to.to_string()))
            .map(|l| &l.cond)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.topics.iter().map(String::as_str)
    }

    /// Send `payload` to every subscriber of `topic`, applying link loss now.
    pub fn publish(&mut self, topic: &str, payload: impl Into<Bytes>, src: &str) {
        if self.offline.contains(src) {
            return;
        }
        if !self.topics.contains(topic) {
            self.topics.insert(topic.to_string());
        }
        let payload = payload.into();
        let now = self.clock.now;
        let subscribers: Vec<NodeId> = self
            .subscriptions
            .iter()
            .filter(|(_, prefixes)| prefixes.iter().any(|p| topic.starts_with(p.as_str())))
            .map(|(node, _)| node.clone())
            .collect();
        for dst in subscribers {
            let key = (src.to_string(), dst.clone());
            let seq_slot = self.link_seq.entry(key.clone()).or_default();
            let link_seq = *seq_slot;
            *seq_slot += 1;

            let mut deliver = if dst == src {
                Some(now)
            } else {
                match self.links.get_mut(&key) {
                    None => Some(now),
                    Some(link) => {
                        let up = link.cond.connected_at(now);
                        let lost = link.cond.drop_rate > 0.0
                            && link.rng.random::<f64>() < link.cond.drop_rate;
                        let jitter = if link.cond.jitter > 0.0 {
                            link.rng.random::<f64>() * link.cond.jitter
                        } else {
                            0.0
                        };
                        (up && !lost).then(|| quantize(now + link.cond.latency + jitter))
                    }
                }
            };
            if self.offline.contains(&dst) {
                deliver = None;
            }
            let envelope = Envelope {
                topic: topic.to_string(),
                payload: payload.clone(),
                src: src.to_string(),
                dst: dst.clone(),
                link_seq,
                send_time: now,
                deliver_time: None,
            };
            match deliver {
                None => self.record(&envelope, None),
                Some(t) => {
                    let stream = (src.to_string(), dst, topic.to_string());
                    let t = match self.last_delivery.get(&stream) {
                        Some(&last) if last > t => last,
                        _ => t,
                    };
                    self.last_delivery.insert(stream, t);
                    self.pending.push(Pending {
                        deliver_time: t,
                        seq: self.next_seq,
                        envelope,
                    });
                    self.next_seq += 1;
                }
            }
        }
    }

    /// Move simulated time forward and return everything now due.
    pub fn advance(&mut self, dt: f64) -> Result<Vec<Envelope>, BusError> {
        if self.clock.mode == ClockMode::Wall {
            return Err(BusError::WallClock);
        }
        if !(dt > 0.0) {
            return Err(BusError::InvalidStep(dt));
        }
        self.clock.now = quantize(self.clock.now + dt);
        Ok(self.deliver_due())
    }

    /// Wall mode: catch the clock up with real elapsed time.
    pub fn sync_wall(&mut self) -> Vec<Envelope> {
        if self.clock.mode == ClockMode::Wall {
            self.clock.now = quantize(self.clock.origin.elapsed().as_secs_f64()).max(self.clock.now);
        }
        self.deliver_due()
    }

    /// Envelopes whose delivery time has come, without moving the clock.
    pub fn deliver_due(&mut self) -> Vec<Envelope> {
        let now = self.clock.now;
        let mut out = Vec::new();
        while self.pending.peek().is_some_and(|p| p.deliver_time <= now) {
            let Pending {
                deliver_time,
                mut envelope,
                ..
            } = self.pending.pop().expect("peeked");
            if self.offline.contains(&envelope.dst) {
                self.record(&envelope, None);
                continue;
            }
            envelope.deliver_time = Some(deliver_time);
            self.record(&envelope, Some(deliver_time));
            out.push(envelope);
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    fn record(&mut self, env: &Envelope, delivered: Option<f64>) {
        if self.record_log {
            self.log.push(DeliveryRecord {
                t_send: env.send_time,
                t_deliver: delivered,
                topic: env.topic.clone(),
                src: env.src.clone(),
                dst: env.dst.clone(),
                dropped: delivered.is_none(),
            });
        }
    }

    pub fn log(&self) -> &[DeliveryRecord] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<DeliveryRecord> {
        std::mem::take(&mut self.log)
    }
}

/// Write records as line-delimited JSON.
pub fn write_log<W: Write>(records: &[DeliveryRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus() -> Bus {
        let mut bus = Bus::simulated();
        bus.subscribe("joint", "cmd/");
        bus
    }

    #[test]
    fn ideal_link_delivers_same_tick() {
        let mut bus = bus();
        bus.publish("cmd/limb1/j1", &b"x"[..], "op");
        let got = bus.deliver_due();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].deliver_time, Some(0.0));
    }

    #[test]
    fn gaps_drop_at_send_time() {
        let mut bus = bus();
        bus.set_link("op", "joint", LinkCondition::with_gaps(&[(1.0, 2.3)]));
        let mut delivered = Vec::new();
        for _ in 0..300 {
            bus.publish("cmd/limb1/j1", &b"x"[..], "op");
            delivered.extend(bus.advance(0.01).unwrap());
        }
        assert!(delivered
            .iter()
            .all(|e| !(1.0..2.3).contains(&e.send_time)));
        let dropped: Vec<_> = bus.log().iter().filter(|r| r.dropped).collect();
        assert_eq!(dropped.len(), 130);
        assert!(dropped.iter().all(|r| (1.0..2.3).contains(&r.t_send)));
    }

    #[test]
    fn full_drop_rate_loses_everything() {
        let mut bus = bus();
        bus.set_link("op", "joint", LinkCondition::default().drop_rate(1.0, 4));
        for _ in 0..50 {
            bus.publish("cmd/a/b", &b"x"[..], "op");
            assert!(bus.advance(0.02).unwrap().is_empty());
        }
    }

    #[test]
    fn constant_latency_is_exact() {
        let mut bus = bus();
        bus.set_link("op", "joint", LinkCondition::default().latency(0.05));
        bus.publish("cmd/a/b", &b"x"[..], "op");
        assert!(bus.advance(0.04).unwrap().is_empty());
        let got = bus.advance(0.01).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].deliver_time.unwrap() - got[0].send_time, 0.05);
    }

    #[test]
    fn delivery_in_time_order() {
        let mut bus = bus();
        bus.set_link("slow", "joint", LinkCondition::default().latency(0.02));
        bus.set_link("fast", "joint", LinkCondition::default().latency(0.01));
        bus.publish("cmd/a/slow", &b"1"[..], "slow");
        bus.publish("cmd/a/fast", &b"2"[..], "fast");
        let got = bus.advance(0.05).unwrap();
        let order: Vec<_> = got.iter().map(|e| e.src.as_str()).collect();
        assert_eq!(order, ["fast", "slow"]);
    }

    #[test]
    fn advance_preconditions() {
        assert_eq!(bus().advance(0.0).unwrap_err(), BusError::InvalidStep(0.0));
        let mut wall = Bus::new(ClockMode::Wall);
        assert_eq!(wall.advance(0.1).unwrap_err(), BusError::WallClock);
    }

    #[test]
    fn in_flight_survives_later_disconnection() {
        let mut bus = bus();
        bus.set_link(
            "op",
            "joint",
            LinkCondition::with_gaps(&[(0.01, 1.0)]).latency(0.1),
        );
        bus.publish("cmd/a/b", &b"x"[..], "op");
        assert_eq!(bus.advance(0.2).unwrap().len(), 1);
    }

    #[test]
    fn jitter_keeps_stream_order() {
        let mut bus = bus();
        let mut cond = LinkCondition::default().latency(0.01);
        cond.jitter = 0.05;
        cond.jitter_seed = 99;
        bus.set_link("op", "joint", cond);
        let mut got = Vec::new();
        for i in 0..200u32 {
            bus.publish("cmd/a/b", i.to_le_bytes().to_vec(), "op");
            got.extend(bus.advance(0.005).unwrap());
        }
        got.extend(bus.advance(1.0).unwrap());
        let seqs: Vec<u64> = got.iter().map(|e| e.link_seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(seqs.len(), 200);
    }

    #[test]
    fn offline_nodes_are_silent() {
        let mut bus = bus();
        bus.set_online("joint", false);
        bus.publish("cmd/a/b", &b"x"[..], "op");
        assert!(bus.deliver_due().is_empty());
        bus.set_online("op", false);
        bus.publish("cmd/a/b", &b"x"[..], "op");
        assert_eq!(bus.log().len(), 1);
    }

    #[test]
    fn link_validation() {
        assert!(LinkCondition::with_gaps(&[(1.0, 1.3), (0.2, 0.4)]).validate().is_ok());
        let mut bad = LinkCondition::default();
        bad.connected_intervals = Some(vec![[1.0, 2.0], [1.5, 3.0]]);
        assert!(bad.validate().is_err());
        assert!(LinkCondition::default().latency(-1.0).validate().is_err());
        assert!(LinkCondition::default().drop_rate(1.5, 0).validate().is_err());
    }

    #[test]
    fn log_is_line_delimited_json() {
        let mut bus = bus();
        bus.set_link("op", "joint", LinkCondition::default().drop_rate(1.0, 0));
        bus.publish("cmd/a/b", &b"x"[..], "op");
        let mut out = Vec::new();
        write_log(bus.log(), &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"t_send\":0.0,\"t_deliver\":null,\"topic\":\"cmd/a/b\",\"src\":\"op\",\"dst\":\"joint\",\"dropped\":true}\n"
        );
    }
}
