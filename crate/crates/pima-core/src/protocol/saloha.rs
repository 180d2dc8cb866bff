//! Pseudo-Bayesian stabilized slotted ALOHA engine.
//!
//! Every slot, each user with a non-empty buffer independently transmits its
//! buffer head with probability `alpha = min(1, 1/G)`, where `G` is the
//! running backlog estimate. The estimate is updated from the channel
//! feedback: after a success the collision-free drift `max(N*theta, G +
//! N*theta - 1)` applies, while a collision adds `N*theta + 1/(e - 2)`.
//!
//! Two update variants for the remaining case, an idle slot, are provided:
//! the default groups idle with success (an idle slot is evidence the
//! backlog is small), while [`SalohaVariant::MergedIdle`] groups idle with
//! collision. The merged variant inflates `G` without bound under light
//! load, driving the transmit probability to zero; it is kept only so the
//! effect can be reproduced.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::SimConfig;
use crate::metrics::{Metrics, MetricsCollector, ProtocolExtras};
use crate::protocol::{absorb_arrivals, drain_residual, DeliveryEvent, Outcome};
use crate::traffic::{ArrivalFeed, UserBuffer};

/// Backlog increment applied after a collision: `1/(e - 2)`.
pub const COLLISION_INCREMENT: f64 = 1.0 / (std::f64::consts::E - 2.0);

/// Which feedbacks grow the backlog estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SalohaVariant {
    /// Idle slots shrink the estimate like successes do.
    #[default]
    Classic,
    /// Idle slots grow the estimate like collisions do.
    MergedIdle,
}

/// Channel feedback observed for one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotFeedback {
    /// Nobody transmitted.
    Idle,
    /// Exactly one user transmitted; its packet was delivered.
    Success,
    /// Two or more users transmitted; all of them failed.
    Collision,
}

/// One pseudo-Bayesian update of the backlog estimate `g`, with `n_theta`
/// the expected number of users becoming active per slot.
pub fn update_backlog(g: f64, n_theta: f64, feedback: SlotFeedback, variant: SalohaVariant) -> f64 {
    let shrink = (g + n_theta - 1.0).max(n_theta);
    let grow = g + n_theta + COLLISION_INCREMENT;
    match (feedback, variant) {
        (SlotFeedback::Collision, _) => grow,
        (SlotFeedback::Success, _) => shrink,
        (SlotFeedback::Idle, SalohaVariant::Classic) => shrink,
        (SlotFeedback::Idle, SalohaVariant::MergedIdle) => grow,
    }
}

/// Transmission probability for a backlog estimate: `min(1, 1/G)`.
pub fn transmit_prob(backlog: f64) -> f64 {
    if backlog <= 1.0 {
        1.0
    } else {
        1.0 / backlog
    }
}

/// Stabilized slotted ALOHA engine state.
#[derive(Clone, Debug)]
pub struct SalohaEngine {
    slot_s: f64,
    buffers: Vec<UserBuffer>,
    variant: SalohaVariant,
    alpha_override: Option<f64>,
    backlog: f64,
    n_theta: f64,
    slot_index: u64,
    rng: ChaCha8Rng,
    collector: MetricsCollector,
    backlog_sum: f64,
    slots_measured: u64,
}

impl SalohaEngine {
    /// Creates an engine with empty buffers and a zero backlog estimate.
    pub fn new(cfg: &SimConfig) -> Self {
        // Probability that one user turns active in a slot under Poisson
        // arrivals of rate lambda_total/users per user per slot.
        let theta = 1.0 - (-cfg.lambda_total / cfg.users as f64).exp();
        SalohaEngine {
            slot_s: cfg.slot_duration_s,
            buffers: (0..cfg.users)
                .map(|_| UserBuffer::new(cfg.buffer_capacity))
                .collect(),
            variant: cfg.saloha_variant,
            alpha_override: cfg.saloha_alpha_override,
            backlog: 0.0,
            n_theta: cfg.users as f64 * theta,
            slot_index: 0,
            rng: ChaCha8Rng::seed_from_u64(crate::stats::substream_seed(
                cfg.seed,
                crate::stats::Stream::Engine,
                0,
            )),
            collector: MetricsCollector::new(cfg.warmup_slots as f64 * cfg.slot_duration_s),
            backlog_sum: 0.0,
            slots_measured: 0,
        }
    }

    /// Current backlog estimate `G`.
    pub fn backlog(&self) -> f64 {
        self.backlog
    }

    /// Expected newly-active users per slot, `N*theta`.
    pub fn n_theta(&self) -> f64 {
        self.n_theta
    }

    /// Slots completed so far.
    pub fn slots(&self) -> u64 {
        self.slot_index
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

    /// Runs one contention slot and returns the channel feedback.
    pub fn step(
        &mut self,
        feed: &mut ArrivalFeed,
        events: &mut Vec<DeliveryEvent>,
    ) -> SlotFeedback {
        let slot_start = self.slot_index as f64 * self.slot_s;
        self.absorb_until(feed, slot_start, events);

        let alpha = self
            .alpha_override
            .unwrap_or_else(|| transmit_prob(self.backlog));
        let mut transmitters = 0u32;
        let mut sole = 0usize;
        for (k, buffer) in self.buffers.iter().enumerate() {
            if buffer.is_active() && self.rng.gen::<f64>() < alpha {
                transmitters += 1;
                sole = k;
            }
        }
        let feedback = match transmitters {
            0 => SlotFeedback::Idle,
            1 => SlotFeedback::Success,
            _ => SlotFeedback::Collision,
        };
        if feedback == SlotFeedback::Success {
            let packet = self.buffers[sole].pop_head();
            self.collector.on_delivered(&packet, slot_start);
            events.push(DeliveryEvent {
                packet,
                at_s: slot_start,
                outcome: Outcome::Delivered,
            });
        }

        if slot_start >= self.collector.warmup_end_s() {
            self.backlog_sum += self.backlog;
            self.slots_measured += 1;
        }
        self.backlog = update_backlog(self.backlog, self.n_theta, feedback, self.variant);
        self.slot_index += 1;
        feedback
    }

    /// Counts leftover packets as residual and returns the run's metrics.
    pub fn finish(mut self) -> Metrics {
        drain_residual(&self.buffers, &mut self.collector);
        self.collector.finish(ProtocolExtras::Saloha {
            mean_backlog_estimate: self.backlog_sum / self.slots_measured.max(1) as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SimConfig;
    use crate::protocol::Protocol;

    #[test]
    fn backlog_update_matches_hand_computed_values() {
        assert!((COLLISION_INCREMENT - 1.392_211_191_177_333_2).abs() < 1e-13);
        let g = 2.0;
        let nt = 0.5;
        let grown = 2.0 + 0.5 + COLLISION_INCREMENT;
        for variant in [SalohaVariant::Classic, SalohaVariant::MergedIdle] {
            let up = update_backlog(g, nt, SlotFeedback::Collision, variant);
            assert!((up - grown).abs() < 1e-15, "collision grows G identically");
            let down = update_backlog(g, nt, SlotFeedback::Success, variant);
            assert!((down - 1.5).abs() < 1e-15, "success: max(0.5, 1.5)");
        }
        // Only the idle case distinguishes the variants.
        let idle_classic = update_backlog(g, nt, SlotFeedback::Idle, SalohaVariant::Classic);
        assert!((idle_classic - 1.5).abs() < 1e-15);
        let idle_merged = update_backlog(g, nt, SlotFeedback::Idle, SalohaVariant::MergedIdle);
        assert!((idle_merged - grown).abs() < 1e-15);
        // The floor keeps the estimate at N*theta when it would go negative.
        assert!(
            (update_backlog(0.2, 0.5, SlotFeedback::Success, SalohaVariant::Classic) - 0.5).abs()
                < 1e-15
        );
    }

    #[test]
    fn transmit_prob_saturates_at_one() {
        assert_eq!(transmit_prob(0.0), 1.0);
        assert_eq!(transmit_prob(0.4), 1.0);
        assert_eq!(transmit_prob(1.0), 1.0);
        assert!((transmit_prob(4.0) - 0.25).abs() < 1e-15);
    }

    fn cfg(users: usize, lambda_total: f64) -> SimConfig {
        let mut cfg = SimConfig::new(Protocol::Saloha, lambda_total);
        cfg.users = users;
        cfg.warmup_slots = 0;
        cfg
    }

    #[test]
    fn lone_backlogged_user_delivers_immediately() {
        let cfg = cfg(4, 0.1);
        let slot = cfg.slot_duration_s;
        let mut engine = SalohaEngine::new(&cfg);
        let mut feed = ArrivalFeed::from_events(4, vec![(0.5 * slot, 2)]);
        let mut events = Vec::new();
        assert_eq!(engine.step(&mut feed, &mut events), SlotFeedback::Idle);
        // The packet landed mid-slot 0, so slot 1 serves it: G is tiny, so
        // alpha = 1 and the lone user cannot collide.
        assert_eq!(engine.step(&mut feed, &mut events), SlotFeedback::Success);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].packet.owner, 2);
        assert!((events[0].at_s - slot).abs() < 1e-15);
        assert!((events[0].at_s - events[0].packet.gen_time - 0.5 * slot).abs() < 1e-15);
    }

    #[test]
    fn forced_simultaneous_transmissions_never_deliver() {
        // Two permanently backlogged users with alpha pinned to 1 collide in
        // every slot, forever: deliveries must stay at zero and both heads
        // must remain the first packets.
        let mut cfg = cfg(2, 0.1);
        cfg.saloha_alpha_override = Some(1.0);
        let mut engine = SalohaEngine::new(&cfg);
        let mut feed = ArrivalFeed::from_events(2, vec![(0.0, 0), (1e-9, 1)]);
        let mut events = Vec::new();
        engine.step(&mut feed, &mut events); // absorbs nothing: t >= 0 is mid-slot 0
        for _ in 0..200 {
            let fb = engine.step(&mut feed, &mut events);
            assert_eq!(fb, SlotFeedback::Collision);
        }
        assert!(events.is_empty());
        let metrics = engine.finish();
        assert_eq!(metrics.delivered, 0);
        assert_eq!(metrics.residual, 2);
        assert_eq!(metrics.generated, 2);
    }

    #[test]
    fn merged_idle_variant_inflates_the_backlog_estimate() {
        let mut classic = SalohaEngine::new(&cfg(20, 0.01));
        let mut merged = {
            let mut c = cfg(20, 0.01);
            c.saloha_variant = SalohaVariant::MergedIdle;
            SalohaEngine::new(&c)
        };
        let mut feed_a = ArrivalFeed::from_events(20, vec![]);
        let mut feed_b = ArrivalFeed::from_events(20, vec![]);
        let mut events = Vec::new();
        for _ in 0..500 {
            classic.step(&mut feed_a, &mut events);
            merged.step(&mut feed_b, &mut events);
        }
        // With no traffic every slot is idle: the classic estimate stays at
        // its floor N*theta while the merged variant grows without bound.
        assert!((classic.backlog() - classic.n_theta()).abs() < 1e-12);
        assert!(merged.backlog() > 500.0, "got {}", merged.backlog());
    }
}
