//! Fixed round-robin TDMA engine.
//!
//! Every frame is exactly `users` slots long and user `k` owns slot `k`
//! of each frame. There is no contention: the owner transmits its buffer
//! head whenever the buffer is non-empty at the owned slot's start, and the
//! transmission always succeeds. A packet arriving mid-frame but before its
//! owner's slot is therefore served within the same frame.

use crate::harness::SimConfig;
use crate::metrics::{Metrics, MetricsCollector, ProtocolExtras};
use crate::protocol::{absorb_arrivals, drain_residual, DeliveryEvent, Outcome};
use crate::traffic::{ArrivalFeed, UserBuffer};

/// Round-robin engine state.
#[derive(Clone, Debug)]
pub struct TdmaEngine {
    slot_s: f64,
    buffers: Vec<UserBuffer>,
    frame_index: u64,
    collector: MetricsCollector,
}

impl TdmaEngine {
    /// Creates an engine with empty buffers.
    pub fn new(cfg: &SimConfig) -> Self {
        TdmaEngine {
            slot_s: cfg.slot_duration_s,
            buffers: (0..cfg.users)
                .map(|_| UserBuffer::new(cfg.buffer_capacity))
                .collect(),
            frame_index: 0,
            collector: MetricsCollector::new(cfg.warmup_slots as f64 * cfg.slot_duration_s),
        }
    }

    /// Number of users (and slots per frame).
    pub fn users(&self) -> usize {
        self.buffers.len()
    }

    /// Current time in seconds (start of the next frame).
    pub fn clock_s(&self) -> f64 {
        (self.frame_index * self.buffers.len() as u64) as f64 * self.slot_s
    }

    /// Frames completed so far.
    pub fn frames(&self) -> u64 {
        self.frame_index
    }

    /// Absorbs arrivals strictly before `until_s` without advancing time.
    pub fn absorb_until(
        &mut self,
        feed: &mut ArrivalFeed,
        until_s: f64,
        events: &mut Vec<DeliveryEvent>,
    ) {
        absorb_arrivals(
            &mut self.buffers,
            &mut self.collector,
            feed,
            until_s,
            events,
        );
    }

    /// Runs one full frame of `users` slots.
    pub fn run_frame(&mut self, feed: &mut ArrivalFeed, events: &mut Vec<DeliveryEvent>) {
        let users = self.buffers.len() as u64;
        let base_slot = self.frame_index * users;
        for k in 0..self.buffers.len() {
            let slot_start = (base_slot + k as u64) as f64 * self.slot_s;
            self.absorb_until(feed, slot_start, events);
            if self.buffers[k].is_active() {
                let packet = self.buffers[k].pop_head();
                self.collector.on_delivered(&packet, slot_start);
                events.push(DeliveryEvent {
                    packet,
                    at_s: slot_start,
                    outcome: Outcome::Delivered,
                });
            }
        }
        self.frame_index += 1;
        let frame_end = (base_slot + users) as f64 * self.slot_s;
        self.absorb_until(feed, frame_end, events);
    }

    /// Counts leftover packets as residual and returns the run's metrics.
    pub fn finish(mut self) -> Metrics {
        drain_residual(&self.buffers, &mut self.collector);
        self.collector.finish(ProtocolExtras::None)
    }
}
