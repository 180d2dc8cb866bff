//! Packet generation and buffering shared by every protocol engine.
//!
//! Arrivals form independent homogeneous Poisson processes per user, with
//! real-valued arrival instants (no slot binning at generation time; each
//! engine decides when an arrival becomes eligible). Every user owns a
//! bounded FIFO buffer; when a packet arrives at a full buffer the *oldest*
//! queued packet is evicted and counted as dropped.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use std::collections::VecDeque;

use crate::stats::{substream_seed, Stream};
use crate::{Error, Result};

// ======================================================================
// Packets and buffers
// ======================================================================

/// One data packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Packet {
    /// Generating user, `0..K`.
    pub owner: u16,
    /// Generation instant in seconds from simulation start (real-valued).
    pub gen_time: f64,
    /// Per-user sequence number, strictly increasing in generation order.
    pub seq: u64,
}

/// Bounded FIFO queue for one user with drop-oldest eviction.
#[derive(Clone, Debug)]
pub struct UserBuffer {
    capacity: usize,
    queue: VecDeque<Packet>,
    dropped: u64,
}

impl UserBuffer {
    /// Creates an empty buffer holding at most `capacity` packets.
    ///
    /// # Panics
    ///
    /// Panics if `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "buffer capacity must be at least 1");
        UserBuffer {
            capacity,
            queue: VecDeque::with_capacity(capacity),
            dropped: 0,
        }
    }

    /// Appends `packet`. If the buffer is full, evicts and returns the
    /// oldest queued packet (head) and increments the drop counter.
    pub fn push(&mut self, packet: Packet) -> Option<Packet> {
        debug_assert!(
            self.queue
                .back()
                .is_none_or(|tail| packet.gen_time >= tail.gen_time),
            "packets must be pushed in generation order"
        );
        let evicted = if self.queue.len() == self.capacity {
            self.dropped += 1;
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(packet);
        evicted
    }

    /// Removes and returns the head-of-queue packet.
    ///
    /// # Panics
    ///
    /// Panics if the buffer is empty; callers must guard with
    /// [`UserBuffer::is_active`].
    pub fn pop_head(&mut self) -> Packet {
        self.queue
            .pop_front()
            .expect("pop_head on an empty buffer is a logic error")
    }

    /// Head-of-queue packet, if any.
    pub fn head(&self) -> Option<&Packet> {
        self.queue.front()
    }

    /// True when at least one packet is queued.
    pub fn is_active(&self) -> bool {
        !self.queue.is_empty()
    }

    /// Number of queued packets (always `<= capacity`).
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    /// True when no packet is queued.
    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Total packets evicted from this buffer so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Iterates over queued packets from head to tail.
    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.queue.iter()
    }
}

// ======================================================================
// Traffic configuration and generation
// ======================================================================

/// Aggregate traffic description: `users` independent Poisson sources of
/// `per_user_rate` packets per slot each.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrafficConfig {
    /// Number of users `K`.
    pub users: usize,
    /// Per-user arrival rate in packets per slot.
    pub per_user_rate: f64,
    /// Number of slots over which arrivals are generated.
    pub horizon_slots: u64,
}

impl TrafficConfig {
    /// Builds the per-user configuration from a total arrival rate spread
    /// evenly over `users` sources.
    pub fn from_total(users: usize, lambda_total: f64, horizon_slots: u64) -> Result<Self> {
        if users == 0 {
            return Err(Error::Config {
                field: "users",
                message: "must be at least 1".into(),
            });
        }
        if !lambda_total.is_finite() || lambda_total < 0.0 {
            return Err(Error::Config {
                field: "lambda_total",
                message: format!("must be finite and non-negative, got {lambda_total}"),
            });
        }
        Ok(TrafficConfig {
            users,
            per_user_rate: lambda_total / users as f64,
            horizon_slots,
        })
    }

    /// Total arrival rate `K * lambda` in packets per slot.
    pub fn total_rate(&self) -> f64 {
        self.users as f64 * self.per_user_rate
    }
}

/// Draws one Poisson process realization: ordered arrival instants in slot
/// units over `[0, duration)`, built from exponential inter-arrival gaps.
///
/// A zero rate (or zero duration) yields no arrivals.
pub fn generate_arrivals<R: Rng + ?Sized>(
    rate_per_slot: f64,
    duration_slots: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !rate_per_slot.is_finite() || rate_per_slot < 0.0 {
        return Err(Error::Config {
            field: "lambda_total",
            message: format!("arrival rate must be finite and non-negative, got {rate_per_slot}"),
        });
    }
    if !duration_slots.is_finite() || duration_slots < 0.0 {
        return Err(Error::Config {
            field: "horizon_slots",
            message: format!("duration must be finite and non-negative, got {duration_slots}"),
        });
    }
    if rate_per_slot == 0.0 || duration_slots == 0.0 {
        return Ok(Vec::new());
    }
    let gap = Exp::new(rate_per_slot).expect("validated rate");
    let mut times = Vec::with_capacity((rate_per_slot * duration_slots * 1.05) as usize + 16);
    let mut t = gap.sample(rng);
    while t < duration_slots {
        times.push(t);
        t += gap.sample(rng);
    }
    Ok(times)
}

// ======================================================================
// Merged arrival feed
// ======================================================================

/// All users' arrivals merged into one chronological stream of [`Packet`]s.
///
/// Each user draws from its own seed-derived generator, so the realization
/// for user `k` depends only on `(master_seed, k)` and stays identical when
/// other parameters (protocol, horizon of *other* components) change.
#[derive(Clone, Debug)]
pub struct ArrivalFeed {
    /// `(gen_time_seconds, owner)` sorted by time.
    arrivals: Vec<(f64, u16)>,
    next: usize,
    seq: Vec<u64>,
}

impl ArrivalFeed {
    /// Generates the merged feed for `config` with arrival instants converted
    /// to seconds via `slot_duration_s`.
    pub fn generate(
        config: &TrafficConfig,
        slot_duration_s: f64,
        master_seed: u64,
    ) -> Result<Self> {
        let mut arrivals: Vec<(f64, u16)> = Vec::new();
        for user in 0..config.users {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(
                master_seed,
                Stream::Arrivals,
                user as u64,
            ));
            let times =
                generate_arrivals(config.per_user_rate, config.horizon_slots as f64, &mut rng)?;
            arrivals.extend(
                times
                    .into_iter()
                    .map(|t| (t * slot_duration_s, user as u16)),
            );
        }
        // Ties between users are measure-zero but the order must still be
        // deterministic, so break them by user index.
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(ArrivalFeed {
            arrivals,
            next: 0,
            seq: vec![0; config.users],
        })
    }

    /// Builds a feed from explicit `(gen_time_seconds, owner)` events; used
    /// by deterministic tests. Events may be given in any order.
    pub fn from_events(users: usize, mut events: Vec<(f64, u16)>) -> Self {
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ArrivalFeed {
            arrivals: events,
            next: 0,
            seq: vec![0; users],
        }
    }

    /// Returns the next packet arriving strictly before `t_s` seconds, if
    /// any, stamping its per-user sequence number.
    pub fn next_before(&mut self, t_s: f64) -> Option<Packet> {
        let &(time, owner) = self.arrivals.get(self.next)?;
        if time < t_s {
            self.next += 1;
            let seq = self.seq[owner as usize];
            self.seq[owner as usize] += 1;
            Some(Packet {
                owner,
                gen_time: time,
                seq,
            })
        } else {
            None
        }
    }

    /// Total number of arrivals in the feed (consumed or not).
    pub fn total(&self) -> usize {
        self.arrivals.len()
    }
}

// ======================================================================
// Tests
// ======================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(owner: u16, gen_time: f64, seq: u64) -> Packet {
        Packet {
            owner,
            gen_time,
            seq,
        }
    }

    #[test]
    fn zero_rate_produces_no_arrivals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_arrivals(0.0, 1e6, &mut rng).unwrap().is_empty());
        assert!(generate_arrivals(0.5, 0.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn negative_rate_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_arrivals(-0.1, 10.0, &mut rng).is_err());
        assert!(generate_arrivals(0.1, -10.0, &mut rng).is_err());
    }

    #[test]
    fn arrival_times_are_strictly_increasing_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let times = generate_arrivals(0.2, 5000.0, &mut rng).unwrap();
        assert!(!times.is_empty());
        for w in times.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(*times.last().unwrap() < 5000.0);
        assert!(times[0] > 0.0);
    }

    #[test]
    fn empirical_rate_matches_configuration() {
        // Average packets-per-slot over 100 seeds at the busiest per-user
        // operating point must sit within 1% of the configured rate.
        let rate = 0.035;
        let duration = 1e6;
        let mut total = 0usize;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            total += generate_arrivals(rate, duration, &mut rng).unwrap().len();
        }
        let empirical = total as f64 / (100.0 * duration);
        assert!(
            (empirical / rate - 1.0).abs() < 0.01,
            "empirical rate {empirical} far from {rate}"
        );
    }

    #[test]
    fn unit_interval_counts_have_poisson_moments() {
        // Counts per unit interval are Poisson(rate): empirical mean and
        // variance must each land within 5% of the rate.
        let rate = 1.0;
        let duration = 1e4;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let times = generate_arrivals(rate, duration, &mut rng).unwrap();
        let mut counts = vec![0.0f64; duration as usize];
        for t in times {
            counts[t as usize] += 1.0;
        }
        let m = crate::stats::mean(&counts);
        let v = crate::stats::sample_variance(&counts);
        assert!((m / rate - 1.0).abs() < 0.05, "mean {m}");
        assert!((v / rate - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn from_total_splits_rate_evenly() {
        let cfg = TrafficConfig::from_total(20, 0.7, 1000).unwrap();
        assert!((cfg.per_user_rate - 0.035).abs() < 1e-15);
        assert_eq!(cfg.total_rate(), cfg.users as f64 * cfg.per_user_rate);
        assert!(TrafficConfig::from_total(0, 0.5, 10).is_err());
        assert!(TrafficConfig::from_total(4, -0.5, 10).is_err());
    }

    #[test]
    fn push_evicts_oldest_when_full() {
        let mut buf = UserBuffer::new(3);
        for i in 0..3 {
            assert!(buf.push(packet(0, i as f64, i)).is_none());
        }
        let evicted = buf.push(packet(0, 3.0, 3)).unwrap();
        assert_eq!(evicted.seq, 0);
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.dropped(), 1);
        assert_eq!(buf.head().unwrap().seq, 1);
    }

    #[test]
    fn sustained_overflow_keeps_newest_packets() {
        let mut buf = UserBuffer::new(3);
        for i in 0..10 {
            buf.push(packet(0, i as f64, i));
        }
        assert_eq!(buf.dropped(), 7);
        let kept: Vec<u64> = buf.iter().map(|p| p.seq).collect();
        assert_eq!(kept, vec![7, 8, 9]);
    }

    #[test]
    fn pop_follows_fifo_order_and_frees_space() {
        let mut buf = UserBuffer::new(2);
        buf.push(packet(0, 0.0, 0));
        buf.push(packet(0, 1.0, 1));
        assert_eq!(buf.pop_head().seq, 0);
        assert!(buf.push(packet(0, 2.0, 2)).is_none());
        assert_eq!(buf.pop_head().seq, 1);
        assert_eq!(buf.pop_head().seq, 2);
        assert!(!buf.is_active());
    }

    #[test]
    #[should_panic(expected = "logic error")]
    fn pop_on_empty_buffer_panics() {
        UserBuffer::new(1).pop_head();
    }

    #[test]
    fn random_interleaving_conserves_packets() {
        // Under any push/pop interleaving: pushed = popped + evicted + queued,
        // and occupancy never exceeds capacity.
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for capacity in [1usize, 2, 3, 8] {
            let mut buf = UserBuffer::new(capacity);
            let (mut pushed, mut popped) = (0u64, 0u64);
            for step in 0..5000u64 {
                if rng.gen_bool(0.6) {
                    buf.push(packet(0, step as f64, step));
                    pushed += 1;
                } else if buf.is_active() {
                    buf.pop_head();
                    popped += 1;
                }
                assert!(buf.len() <= capacity);
            }
            assert_eq!(pushed, popped + buf.dropped() + buf.len() as u64);
        }
    }

    #[test]
    fn feed_merges_users_chronologically_with_per_user_seq() {
        let cfg = TrafficConfig::from_total(4, 0.4, 5000).unwrap();
        let mut feed = ArrivalFeed::generate(&cfg, 0.000125, 99).unwrap();
        let mut last_time = 0.0;
        let mut seq = [0u64; 4];
        let mut n = 0;
        while let Some(p) = feed.next_before(f64::INFINITY) {
            assert!(p.gen_time >= last_time);
            last_time = p.gen_time;
            assert_eq!(p.seq, seq[p.owner as usize]);
            seq[p.owner as usize] += 1;
            n += 1;
        }
        assert_eq!(n, feed.total());
        assert!(n > 0);
    }

    #[test]
    fn feed_is_reproducible_per_seed() {
        let cfg = TrafficConfig::from_total(3, 0.3, 2000).unwrap();
        let a = ArrivalFeed::generate(&cfg, 0.000125, 5).unwrap();
        let b = ArrivalFeed::generate(&cfg, 0.000125, 5).unwrap();
        let c = ArrivalFeed::generate(&cfg, 0.000125, 6).unwrap();
        assert_eq!(a.arrivals, b.arrivals);
        assert_ne!(a.arrivals, c.arrivals);
    }

    #[test]
    fn next_before_respects_strict_cutoff() {
        let mut feed = ArrivalFeed::from_events(2, vec![(1.0, 0), (2.0, 1), (3.0, 0)]);
        assert!(feed.next_before(1.0).is_none());
        let p = feed.next_before(1.5).unwrap();
        assert_eq!((p.owner, p.gen_time), (0, 1.0));
        assert!(feed.next_before(2.0).is_none());
        assert_eq!(feed.next_before(10.0).unwrap().owner, 1);
    }
}
