//! Mission-control view of node health.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use crate::stack::NodeTelemetry;

/// Frames older than this are flagged stale.
pub const STALE_AFTER: f64 = 3.0;
/// Placeholder CPU load reported by every node.
pub const CPU_LOAD_STUB: f64 = 0.1;

/// Received fraction over the last envelopes, from per-link sequence gaps.
#[derive(Debug, Clone)]
pub struct LinkQuality {
    window: VecDeque<(String, u64)>,
    capacity: usize,
}

impl Default for LinkQuality {
    fn default() -> Self {
        Self::new(200)
    }
}

impl LinkQuality {
    pub fn new(capacity: usize) -> Self {
        Self {
            window: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn observe(&mut self, src: &str, seq: u64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back((src.to_string(), seq));
    }

    /// 1.0 when nothing has been observed yet.
    pub fn value(&self) -> f64 {
        let mut spans: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
        for (src, seq) in &self.window {
            let e = spans.entry(src).or_insert((*seq, *seq, 0));
            e.0 = e.0.min(*seq);
            e.1 = e.1.max(*seq);
            e.2 += 1;
        }
        let (received, expected) = spans
            .values()
            .fold((0, 0), |(r, x), (lo, hi, n)| (r + n, x + hi - lo + 1));
        if expected == 0 {
            1.0
        } else {
            received as f64 / expected as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub node: String,
    pub t_last: f64,
    pub stale: bool,
    pub ping_ok: bool,
    pub link_quality: f64,
    pub cpu_load: f64,
    pub battery: Option<f64>,
    pub address: String,
    pub neighbours: Vec<String>,
}

/// Latest frame per node, flagged stale when older than [`STALE_AFTER`] at `now`.
pub fn telemetry_aggregate(frames: &[NodeTelemetry], now: f64) -> Vec<TelemetryRow> {
    let mut latest: BTreeMap<&str, &NodeTelemetry> = BTreeMap::new();
    for f in frames {
        match latest.get(f.node.as_str()) {
            Some(prev) if prev.t > f.t => {}
            _ => {
                latest.insert(&f.node, f);
            }
        }
    }
    latest
        .into_values()
        .map(|f| TelemetryRow {
            node: f.node.clone(),
            t_last: f.t,
            stale: now - f.t > STALE_AFTER,
            ping_ok: f.ping_ok,
            link_quality: f.link_quality,
            cpu_load: f.cpu_load,
            battery: f.battery,
            address: f.address.clone(),
            neighbours: f.neighbours.clone(),
        })
        .collect()
}

pub fn telemetry_csv(rows: &[TelemetryRow]) -> String {
    let mut out = String::from("node,t_last,stale,ping_ok,link_quality,cpu_load,battery,address,neighbours\n");
    for r in rows {
        let battery = r.battery.map(|b| format!("{b:.3}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.3},{},{},{:.3},{:.2},{},{},{}",
            r.node,
            r.t_last,
            r.stale,
            r.ping_ok,
            r.link_quality,
            r.cpu_load,
            battery,
            r.address,
            r.neighbours.join(";")
        );
    }
    out
}

/// Plain-text table for terminals.
pub fn telemetry_table(rows: &[TelemetryRow]) -> String {
    let mut out = format!(
        "{:<16} {:>7} {:>6} {:>5} {:>6} {:>8}  {}\n",
        "node", "t_last", "stale", "ping", "link", "battery", "neighbours"
    );
    for r in rows {
        let battery = r.battery.map(|b| format!("{b:.1}%")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<16} {:>7.2} {:>6} {:>5} {:>6.2} {:>8}  {}",
            r.node,
            r.t_last,
            r.stale,
            r.ping_ok,
            r.link_quality,
            battery,
            r.neighbours.join(",")
        );
    }
    out
}
