//! Run-level accounting shared by all protocol engines.
//!
//! Packets are attributed to the measurement window by their *generation*
//! instant: a packet counts (as generated, and later as delivered, dropped,
//! or residual) exactly when it was generated at or after the end of the
//! warmup period. This makes `generated = delivered + dropped + residual`
//! an exact identity for every run regardless of warmup, because each
//! counted packet ends in exactly one of the three terminal states.

use crate::traffic::Packet;

// ======================================================================
// Latency histogram
// ======================================================================

/// Histogram of delivery latencies over fixed log-spaced bins so that
/// histograms from different runs and seeds can be merged bin-by-bin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatencyHistogram {
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
}

impl LatencyHistogram {
    /// Lower edge of the first bin, in seconds.
    pub const FLOOR_S: f64 = 1e-5;
    /// Bins per decade.
    pub const BINS_PER_DECADE: usize = 10;
    /// Number of decades covered, `[1e-5, 1e2)`.
    pub const DECADES: usize = 7;

    fn new() -> Self {
        LatencyHistogram {
            counts: vec![0; Self::BINS_PER_DECADE * Self::DECADES],
            underflow: 0,
            overflow: 0,
        }
    }

    fn record(&mut self, latency_s: f64) {
        if latency_s < Self::FLOOR_S {
            self.underflow += 1;
            return;
        }
        let idx = ((latency_s / Self::FLOOR_S).log10() * Self::BINS_PER_DECADE as f64) as usize;
        match self.counts.get_mut(idx) {
            Some(c) => *c += 1,
            None => self.overflow += 1,
        }
    }

    /// Lower edge of bin `i` in seconds: `1e-5 * 10^(i/10)`.
    pub fn bin_lower_edge(i: usize) -> f64 {
        Self::FLOOR_S * 10f64.powf(i as f64 / Self::BINS_PER_DECADE as f64)
    }

    /// Per-bin counts (latencies below/above the covered range are tracked
    /// separately).
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Deliveries faster than the first bin edge.
    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    /// Deliveries beyond the last bin edge.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// Total recorded deliveries.
    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.counts.iter().sum::<u64>()
    }
}

// ======================================================================
// Metrics
// ======================================================================

/// Protocol-specific diagnostics accumulated over the measurement window.
#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolExtras {
    /// No extra diagnostics (TDMA).
    None,
    /// PIMA: estimation quality and frame shape.
    Pima {
        /// Mean absolute error of the activity-count estimate per frame.
        mean_estimate_error: f64,
        /// Mean DT sub-frame length in slots.
        mean_dt_len: f64,
        /// Frames observed in the measurement window.
        frames: u64,
    },
    /// Slotted ALOHA: backlog-estimate behaviour.
    Saloha {
        /// Mean backlog estimate over measured slots.
        mean_backlog_estimate: f64,
    },
}

/// Aggregated outcome of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Packets generated in the measurement window.
    pub generated: u64,
    /// Of those, packets successfully delivered.
    pub delivered: u64,
    /// Of those, packets evicted by drop-oldest buffer overflow.
    pub dropped: u64,
    /// Of those, packets still queued when the run ended.
    pub residual: u64,
    /// `dropped / generated`, or 0 when nothing was generated.
    pub drop_probability: f64,
    /// Mean delivery latency in seconds; `None` when nothing was delivered.
    pub mean_latency_s: Option<f64>,
    /// Latency distribution over fixed log-spaced bins.
    pub latency_histogram: LatencyHistogram,
    /// Protocol-specific diagnostics.
    pub extras: ProtocolExtras,
}

/// Event-by-event accumulator used by the engines.
#[derive(Clone, Debug)]
pub struct MetricsCollector {
    warmup_end_s: f64,
    generated: u64,
    delivered: u64,
    dropped: u64,
    residual: u64,
    latency_sum_s: f64,
    histogram: LatencyHistogram,
}

impl MetricsCollector {
    /// Creates a collector that counts packets generated at or after
    /// `warmup_end_s` seconds.
    pub fn new(warmup_end_s: f64) -> Self {
        MetricsCollector {
            warmup_end_s,
            generated: 0,
            delivered: 0,
            dropped: 0,
            residual: 0,
            latency_sum_s: 0.0,
            histogram: LatencyHistogram::new(),
        }
    }

    /// End of the warmup period in seconds.
    pub fn warmup_end_s(&self) -> f64 {
        self.warmup_end_s
    }

    fn counted(&self, packet: &Packet) -> bool {
        packet.gen_time >= self.warmup_end_s
    }

    /// A packet entered the system (was pushed toward a buffer).
    pub fn on_generated(&mut self, packet: &Packet) {
        if self.counted(packet) {
            self.generated += 1;
        }
    }

    /// A packet was delivered at `at_s` (its transmission slot's start).
    pub fn on_delivered(&mut self, packet: &Packet, at_s: f64) {
        debug_assert!(at_s >= packet.gen_time, "delivery precedes generation");
        if self.counted(packet) {
            self.delivered += 1;
            let latency = at_s - packet.gen_time;
            self.latency_sum_s += latency;
            self.histogram.record(latency);
        }
    }

    /// A packet was evicted by a buffer overflow.
    pub fn on_dropped(&mut self, packet: &Packet) {
        if self.counted(packet) {
            self.dropped += 1;
        }
    }

    /// A packet was still queued when the run ended.
    pub fn on_residual(&mut self, packet: &Packet) {
        if self.counted(packet) {
            self.residual += 1;
        }
    }

    /// Finalizes the counters into a [`Metrics`] value.
    pub fn finish(self, extras: ProtocolExtras) -> Metrics {
        let drop_probability = if self.generated == 0 {
            0.0
        } else {
            self.dropped as f64 / self.generated as f64
        };
        let mean_latency_s = if self.delivered == 0 {
            None
        } else {
            Some(self.latency_sum_s / self.delivered as f64)
        };
        Metrics {
            generated: self.generated,
            delivered: self.delivered,
            dropped: self.dropped,
            residual: self.residual,
            drop_probability,
            mean_latency_s,
            latency_histogram: self.histogram,
            extras,
        }
    }
}

// ======================================================================
// Tests
// ======================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(gen_time: f64) -> Packet {
        Packet {
            owner: 0,
            gen_time,
            seq: 0,
        }
    }

    #[test]
    fn warmup_packets_are_invisible_in_every_counter() {
        let mut c = MetricsCollector::new(10.0);
        let early = packet(9.9);
        let late = packet(10.0);
        c.on_generated(&early);
        c.on_generated(&late);
        c.on_delivered(&early, 11.0);
        c.on_delivered(&late, 11.5);
        let m = c.finish(ProtocolExtras::None);
        assert_eq!((m.generated, m.delivered), (1, 1));
        assert!((m.mean_latency_s.unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn conservation_holds_by_construction() {
        let mut c = MetricsCollector::new(0.0);
        for i in 0..100 {
            let p = packet(i as f64);
            c.on_generated(&p);
            match i % 3 {
                0 => c.on_delivered(&p, i as f64 + 0.5),
                1 => c.on_dropped(&p),
                _ => c.on_residual(&p),
            }
        }
        let m = c.finish(ProtocolExtras::None);
        assert_eq!(m.generated, m.delivered + m.dropped + m.residual);
        assert!((m.drop_probability - m.dropped as f64 / 100.0).abs() < 1e-15);
    }

    #[test]
    fn empty_run_reports_null_latency_without_division_error() {
        let m = MetricsCollector::new(0.0).finish(ProtocolExtras::None);
        assert_eq!(m.generated, 0);
        assert_eq!(m.drop_probability, 0.0);
        assert_eq!(m.mean_latency_s, None);
    }

    #[test]
    fn histogram_bins_by_decade() {
        let mut c = MetricsCollector::new(0.0);
        for (gen, at) in [(0.0, 1e-6), (0.0, 1e-5), (0.0, 2e-4), (0.0, 500.0)] {
            let p = packet(gen);
            c.on_generated(&p);
            c.on_delivered(&p, at);
        }
        let m = c.finish(ProtocolExtras::None);
        let h = &m.latency_histogram;
        assert_eq!(h.underflow(), 1);
        assert_eq!(h.overflow(), 1);
        assert_eq!(h.total(), 4);
        assert_eq!(h.counts()[0], 1); // exactly at the floor
                                      // 2e-4 s is 1.3 decades above the floor: bin 13.
        assert_eq!(h.counts()[13], 1);
        assert!(LatencyHistogram::bin_lower_edge(13) <= 2e-4);
        assert!(LatencyHistogram::bin_lower_edge(14) > 2e-4);
    }
}
