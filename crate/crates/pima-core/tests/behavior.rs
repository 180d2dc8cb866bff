//! End-to-end behavior checks that exercise the public API the way the CLI
//! does: whole simulation runs, sweeps, and the frame-level guarantees the
//! engines advertise.

use pima_core::harness::{sweep, SimConfig, SweepSpec};
use pima_core::protocol::{
    run_protocol, DeliveryEvent, EstimationMode, Outcome, PimaEngine, Protocol, TdmaEngine,
};
use pima_core::traffic::{ArrivalFeed, TrafficConfig};

fn base(protocol: Protocol, lambda_total: f64) -> SimConfig {
    SimConfig::new(protocol, lambda_total)
}

#[test]
fn light_load_round_robin_latency_matches_the_frame_structure() {
    let mut cfg = base(Protocol::Tdma, 0.01);
    cfg.horizon_slots = 10_000_000;
    let metrics = pima_core::harness::run(&cfg).unwrap();
    assert!(
        metrics.drop_probability < 1e-4,
        "a nearly idle round-robin system must not drop: {}",
        metrics.drop_probability
    );
    let latency = metrics.mean_latency_s.expect("packets were delivered");
    // A packet waits for its owner's slot: on average about half a frame
    // (20 slots of 125 us) away.
    assert!(
        (1.1e-3..=1.5e-3).contains(&latency),
        "latency {latency} outside the mid-frame wait window"
    );
    assert_eq!(
        metrics.generated,
        metrics.delivered + metrics.dropped + metrics.residual
    );
}

#[test]
fn light_load_random_access_latency_is_half_a_slot() {
    let mut cfg = base(Protocol::Saloha, 0.01);
    cfg.horizon_slots = 2_000_000;
    let metrics = pima_core::harness::run(&cfg).unwrap();
    let latency = metrics.mean_latency_s.expect("packets were delivered");
    // With no contention a packet transmits at the next slot edge, so the
    // mean wait is half a slot (62.5 us).
    assert!(
        (5e-5..=8e-5).contains(&latency),
        "latency {latency} outside the next-slot window"
    );
    assert_eq!(
        metrics.generated,
        metrics.delivered + metrics.dropped + metrics.residual
    );
}

#[test]
fn zero_load_produces_no_traffic_and_no_latency() {
    for protocol in [Protocol::Tdma, Protocol::Saloha, Protocol::Pima] {
        let mut cfg = base(protocol, 0.0);
        cfg.horizon_slots = 50_000;
        let metrics = pima_core::harness::run(&cfg).unwrap();
        assert_eq!(
            metrics.generated, 0,
            "{protocol}: no load may mean no packets"
        );
        assert_eq!(metrics.drop_probability, 0.0);
        assert!(
            metrics.mean_latency_s.is_none(),
            "{protocol}: latency undefined"
        );
    }
}

#[test]
fn tdma_latency_never_exceeds_the_queue_drain_bound() {
    // Saturate a small system: each surviving packet can sit behind at most
    // B - 1 others, the head leaves every frame, and the owner's slot is at
    // most a frame away, so latency < (B + 1) frames.
    let mut cfg = base(Protocol::Tdma, 2.0);
    cfg.users = 10;
    cfg.horizon_slots = 100_000;
    cfg.warmup_slots = 0;
    let traffic =
        TrafficConfig::from_total(cfg.users, cfg.lambda_total, cfg.horizon_slots).unwrap();
    let mut feed = ArrivalFeed::generate(&traffic, cfg.slot_duration_s, cfg.seed).unwrap();
    let mut engine = TdmaEngine::new(&cfg);
    let mut events: Vec<DeliveryEvent> = Vec::new();
    let horizon_s = cfg.horizon_slots as f64 * cfg.slot_duration_s;
    let bound_s = (cfg.buffer_capacity + 1) as f64 * cfg.users as f64 * cfg.slot_duration_s + 1e-12;
    let mut delivered = 0u64;
    while engine.clock_s() < horizon_s {
        events.clear();
        engine.run_frame(&mut feed, &mut events);
        for event in &events {
            if event.outcome == Outcome::Delivered {
                delivered += 1;
                let wait = event.at_s - event.packet.gen_time;
                assert!(
                    wait <= bound_s,
                    "delivered packet waited {wait} s, above the drain bound {bound_s} s"
                );
            }
        }
    }
    assert!(
        delivered > 40_000,
        "the saturated system must deliver steadily"
    );
}

#[test]
fn mid_frame_packets_never_transmit_before_the_frame_ends() {
    // Huge buffers remove evictions; every generated packet either leaves
    // through a slot or stays queued, and none may leave during the frame
    // in which it was generated.
    let mut cfg = base(Protocol::Pima, 0.9);
    cfg.buffer_capacity = 1_000;
    cfg.warmup_slots = 0;
    cfg.estimation = EstimationMode::Perfect;
    cfg.horizon_slots = 100_000;
    let traffic =
        TrafficConfig::from_total(cfg.users, cfg.lambda_total, cfg.horizon_slots).unwrap();
    let mut feed = ArrivalFeed::generate(&traffic, cfg.slot_duration_s, cfg.seed).unwrap();
    let mut engine = PimaEngine::new(&cfg).unwrap();
    let mut events: Vec<DeliveryEvent> = Vec::new();
    let horizon_s = cfg.horizon_slots as f64 * cfg.slot_duration_s;
    let mut frames = 0u64;
    let mut checked = 0u64;
    while engine.clock_s() < horizon_s {
        events.clear();
        let trace = engine.run_frame(&mut feed, &mut events);
        frames += 1;
        for event in &events {
            assert_eq!(event.outcome, Outcome::Delivered, "nothing may be evicted");
            assert!(
                event.packet.gen_time < trace.start_s,
                "packet generated at {} inside frame [{}, {}) left in that same frame",
                event.packet.gen_time,
                trace.start_s,
                trace.start_s + trace.duration_s
            );
            checked += 1;
        }
    }
    assert!(
        frames > 1_000 && checked > 10_000,
        "the run must exercise many frames"
    );
}

#[test]
fn each_user_transmits_at_most_once_per_frame() {
    let mut cfg = base(Protocol::Pima, 0.7);
    cfg.warmup_slots = 0;
    cfg.horizon_slots = 50_000;
    let traffic =
        TrafficConfig::from_total(cfg.users, cfg.lambda_total, cfg.horizon_slots).unwrap();
    let mut feed = ArrivalFeed::generate(&traffic, cfg.slot_duration_s, cfg.seed).unwrap();
    let mut engine = PimaEngine::new(&cfg).unwrap();
    let mut events: Vec<DeliveryEvent> = Vec::new();
    let horizon_s = cfg.horizon_slots as f64 * cfg.slot_duration_s;
    while engine.clock_s() < horizon_s {
        events.clear();
        engine.run_frame(&mut feed, &mut events);
        let mut owners: Vec<u16> = events
            .iter()
            .filter(|e| e.outcome == Outcome::Delivered)
            .map(|e| e.packet.owner)
            .collect();
        let before = owners.len();
        owners.sort_unstable();
        owners.dedup();
        assert_eq!(
            before,
            owners.len(),
            "an owner delivered twice in one frame"
        );
    }
}

#[test]
fn estimation_noise_costs_at_most_a_quarter_more_drops() {
    let mut measured = base(Protocol::Pima, 0.7);
    measured.pe_target = 0.3;
    measured.horizon_slots = 300_000;
    let mut perfect = measured.clone();
    perfect.estimation = EstimationMode::Perfect;
    let mut measured_drop = 0.0;
    let mut perfect_drop = 0.0;
    for seed in 1..=3u64 {
        let mut m = measured.clone();
        m.seed = seed;
        let mut p = perfect.clone();
        p.seed = seed;
        measured_drop += pima_core::harness::run(&m).unwrap().drop_probability;
        perfect_drop += pima_core::harness::run(&p).unwrap().drop_probability;
    }
    measured_drop /= 3.0;
    perfect_drop /= 3.0;
    assert!(
        measured_drop <= perfect_drop * 1.25 + 1e-4,
        "noisy estimation drop {measured_drop} too far above the perfect-count drop {perfect_drop}"
    );
}

#[test]
fn frame_clock_equals_the_sum_of_frame_durations_bit_for_bit() {
    let mut cfg = base(Protocol::Pima, 0.5);
    cfg.horizon_slots = 50_000;
    let traffic =
        TrafficConfig::from_total(cfg.users, cfg.lambda_total, cfg.horizon_slots).unwrap();
    let mut feed = ArrivalFeed::generate(&traffic, cfg.slot_duration_s, cfg.seed).unwrap();
    let mut engine = PimaEngine::new(&cfg).unwrap();
    let mut events: Vec<DeliveryEvent> = Vec::new();
    let horizon_s = cfg.horizon_slots as f64 * cfg.slot_duration_s;
    let mut summed = 0.0f64;
    while engine.clock_s() < horizon_s {
        events.clear();
        let trace = engine.run_frame(&mut feed, &mut events);
        summed += trace.duration_s;
    }
    // The engine advances its clock by the same additions in the same
    // order, so re-summing the trace must reproduce it exactly.
    assert_eq!(summed.to_bits(), engine.clock_s().to_bits());
}

#[test]
fn confidence_intervals_shrink_with_the_seed_count() {
    let mut cfg = base(Protocol::Tdma, 0.7);
    cfg.horizon_slots = 100_000;
    let few = sweep(&SweepSpec {
        base: cfg.clone(),
        lambdas: vec![0.7],
        seeds: (1..=4).collect(),
    })
    .unwrap();
    let many = sweep(&SweepSpec {
        base: cfg,
        lambdas: vec![0.7],
        seeds: (1..=16).collect(),
    })
    .unwrap();
    let wide = few.points[0].drop_ci95;
    let narrow = many.points[0].drop_ci95;
    assert!(wide > 0.0 && narrow > 0.0);
    let shrink = wide / narrow;
    // Quadrupling the seeds roughly halves the standard error and also
    // tightens the t quantile; allow a generous band around that.
    assert!(
        (1.5..=6.0).contains(&shrink),
        "ci went from {wide} to {narrow} (factor {shrink})"
    );
}

#[test]
fn doubling_the_warmup_leaves_steady_state_drop_unchanged() {
    for protocol in [Protocol::Tdma, Protocol::Pima] {
        let mut short = base(protocol, 0.7);
        short.horizon_slots = 1_000_000;
        short.warmup_slots = 10_000;
        let mut long = short.clone();
        long.warmup_slots = 20_000;
        let a = pima_core::harness::run(&short).unwrap().drop_probability;
        let b = pima_core::harness::run(&long).unwrap().drop_probability;
        let rel = (a - b).abs() / a;
        assert!(
            rel < 0.02,
            "{protocol}: drop moved from {a} to {b} ({rel:.3} relative) when the warmup doubled"
        );
    }
}

#[test]
fn sweeps_report_run_protocol_results_cell_by_cell() {
    let mut cfg = base(Protocol::Saloha, 0.2);
    cfg.horizon_slots = 40_000;
    let result = sweep(&SweepSpec {
        base: cfg.clone(),
        lambdas: vec![0.1, 0.2],
        seeds: vec![3, 4],
    })
    .unwrap();
    assert_eq!(result.cells.len(), 4);
    assert_eq!(result.points.len(), 2);
    for cell in &result.cells {
        let again = run_protocol(&cell.config, None).unwrap();
        assert_eq!(
            again, cell.metrics,
            "a sweep cell must equal its standalone run"
        );
    }
}
