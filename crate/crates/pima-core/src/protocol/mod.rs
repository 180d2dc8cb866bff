//! Frame-level engines for the three access protocols.
//!
//! - [`pima`]: estimate-then-schedule frames (PIA sub-frame for the power
//!   measurement, DT sub-frame for data slots).
//! - [`tdma`]: fixed round-robin frames, one owned slot per user.
//! - [`saloha`]: pseudo-Bayesian stabilized slotted ALOHA with a running
//!   backlog estimate.
//!
//! All engines share the same event model: arrivals are absorbed in
//! chronological order strictly before each decision instant, deliveries
//! happen at slot starts, and drop-oldest evictions happen at push time.
//! Engines expose `run_frame`/`step` so tests can drive them slot by slot;
//! [`run_protocol`] is the whole-run entry point.

mod pima;
mod saloha;
mod tdma;

pub use pima::PimaEngine;
pub use saloha::{update_backlog, SalohaEngine, SalohaVariant, SlotFeedback, COLLISION_INCREMENT};
pub use tdma::TdmaEngine;

use crate::harness::SimConfig;
use crate::metrics::{Metrics, MetricsCollector};
use crate::traffic::{ArrivalFeed, Packet, TrafficConfig, UserBuffer};
use crate::{Error, Result};

// ======================================================================
// Shared protocol types
// ======================================================================

/// The access protocol to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    /// Estimate-then-schedule semi-grant-free access.
    Pima,
    /// Fixed round-robin TDMA.
    Tdma,
    /// Pseudo-Bayesian stabilized slotted ALOHA.
    Saloha,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pima" => Ok(Protocol::Pima),
            "tdma" => Ok(Protocol::Tdma),
            "saloha" => Ok(Protocol::Saloha),
            other => Err(Error::Config {
                field: "protocol",
                message: format!("unknown protocol {other:?}; expected pima, tdma, or saloha"),
            }),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Pima => "pima",
            Protocol::Tdma => "tdma",
            Protocol::Saloha => "saloha",
        })
    }
}

/// How the PIMA scheduler learns the number of active users each frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EstimationMode {
    /// Estimate from the sampled PIA received power (the real protocol).
    #[default]
    Measured,
    /// Use the true active count directly (idealized reference).
    Perfect,
}

/// Terminal state of a packet reported through a [`DeliveryEvent`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Transmitted alone in a slot and received.
    Delivered,
    /// Evicted from a full buffer by a newer arrival.
    Dropped,
}

/// A packet leaving the system, with the instant it did so.
#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryEvent {
    /// The packet that left.
    pub packet: Packet,
    /// When it left, in seconds (slot start for deliveries, arrival time of
    /// the evicting packet for drops).
    pub at_s: f64,
    /// How it left.
    pub outcome: Outcome,
}

/// Per-frame summary emitted by the PIMA engine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameTrace {
    /// Frame index, starting at 0.
    pub frame: u64,
    /// Frame start in seconds.
    pub start_s: f64,
    /// Frame duration in seconds (PIA plus DT).
    pub duration_s: f64,
    /// True number of active users at the frame start.
    pub active: u32,
    /// Estimated number of active users.
    pub estimated: u32,
    /// DT sub-frame length in slots.
    pub dt_len: u32,
    /// Slots with exactly one transmitter.
    pub successes: u32,
    /// Slots with two or more transmitters.
    pub collisions: u32,
}

/// Receiver for per-frame traces.
pub trait TraceSink {
    /// Records one frame summary.
    fn record(&mut self, trace: &FrameTrace);
}

impl TraceSink for Vec<FrameTrace> {
    fn record(&mut self, trace: &FrameTrace) {
        self.push(*trace);
    }
}

// ======================================================================
// Shared arrival absorption
// ======================================================================

/// Pushes every feed arrival strictly before `until_s` into its owner's
/// buffer, reporting generations and drop-oldest evictions as they happen.
pub(crate) fn absorb_arrivals(
    buffers: &mut [UserBuffer],
    collector: &mut MetricsCollector,
    feed: &mut ArrivalFeed,
    until_s: f64,
    events: &mut Vec<DeliveryEvent>,
) {
    while let Some(packet) = feed.next_before(until_s) {
        collector.on_generated(&packet);
        let at_s = packet.gen_time;
        if let Some(evicted) = buffers[packet.owner as usize].push(packet) {
            collector.on_dropped(&evicted);
            events.push(DeliveryEvent {
                packet: evicted,
                at_s,
                outcome: Outcome::Dropped,
            });
        }
    }
}

/// Moves every packet still queued in `buffers` into the residual count.
pub(crate) fn drain_residual(buffers: &[UserBuffer], collector: &mut MetricsCollector) {
    for buffer in buffers {
        for packet in buffer.iter() {
            collector.on_residual(packet);
        }
    }
}

// ======================================================================
// Whole-run driver
// ======================================================================

/// Runs the configured protocol over the full horizon and returns the
/// aggregated metrics. `trace` receives one record per PIMA frame; passing
/// a sink with a non-PIMA protocol is a configuration error.
///
/// The final frame may extend past the horizon so that no slot is ever cut
/// short; arrivals are generated only up to the horizon, and whatever is
/// still queued at the end is accounted as residual.
pub fn run_protocol(cfg: &SimConfig, mut trace: Option<&mut dyn TraceSink>) -> Result<Metrics> {
    if trace.is_some() && cfg.protocol != Protocol::Pima {
        return Err(Error::Config {
            field: "trace",
            message: "frame traces are only produced by the pima protocol".into(),
        });
    }
    let traffic = TrafficConfig::from_total(cfg.users, cfg.lambda_total, cfg.horizon_slots)?;
    let mut feed = ArrivalFeed::generate(&traffic, cfg.slot_duration_s, cfg.seed)?;
    let horizon_end_s = cfg.horizon_slots as f64 * cfg.slot_duration_s;
    let mut events = Vec::new();

    match cfg.protocol {
        Protocol::Pima => {
            let mut engine = PimaEngine::new(cfg)?;
            while engine.clock_s() < horizon_end_s {
                events.clear();
                let frame = engine.run_frame(&mut feed, &mut events);
                if let Some(sink) = trace.as_deref_mut() {
                    sink.record(&frame);
                }
            }
            events.clear();
            engine.absorb_until(&mut feed, f64::INFINITY, &mut events);
            Ok(engine.finish())
        }
        Protocol::Tdma => {
            let mut engine = TdmaEngine::new(cfg);
            while engine.clock_s() < horizon_end_s {
                events.clear();
                engine.run_frame(&mut feed, &mut events);
            }
            events.clear();
            engine.absorb_until(&mut feed, f64::INFINITY, &mut events);
            Ok(engine.finish())
        }
        Protocol::Saloha => {
            let mut engine = SalohaEngine::new(cfg);
            for _ in 0..cfg.horizon_slots {
                events.clear();
                engine.step(&mut feed, &mut events);
            }
            events.clear();
            engine.absorb_until(&mut feed, f64::INFINITY, &mut events);
            Ok(engine.finish())
        }
    }
}
