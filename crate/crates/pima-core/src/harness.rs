//! Run configuration, whole-run drivers, CSV emission, and parameter sweeps.
//!
//! A [`SimConfig`] fully determines a run: same config and seed give
//! bit-identical [`Metrics`]. Sweeps fan a base config out over an offered
//! load grid and a seed list, run the cells in parallel, and aggregate each
//! load point into a mean with a 95% Student-t confidence interval.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::estimator::{required_samples, ActivityPrior, PowerSampling};
use crate::metrics::Metrics;
use crate::protocol::{run_protocol, EstimationMode, Protocol, SalohaVariant, TraceSink};
use crate::stats;
use crate::{Error, Result};

// ======================================================================
// Configuration
// ======================================================================

/// Everything needed to reproduce one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Access protocol to simulate.
    pub protocol: Protocol,
    /// Number of users `K`.
    pub users: usize,
    /// Total offered load in packets per slot across all users.
    pub lambda_total: f64,
    /// Per-user buffer capacity `B` (drop-oldest on overflow).
    pub buffer_capacity: usize,
    /// Data slot duration in seconds.
    pub slot_duration_s: f64,
    /// System bandwidth in Hz (sets the pilot sample rate).
    pub bandwidth_hz: f64,
    /// Noise power, linear scale.
    pub noise_power: f64,
    /// Target count-estimation error probability used to size the pilot.
    pub pe_target: f64,
    /// Explicit pilot length in samples; overrides `pe_target` when set.
    pub pia_samples: Option<u32>,
    /// Master seed; all random streams derive from it.
    pub seed: u64,
    /// Run length in slots (frames may overhang the final slot).
    pub horizon_slots: u64,
    /// Initial slots excluded from measurement.
    pub warmup_slots: u64,
    /// Backlog-update variant for slotted ALOHA.
    pub saloha_variant: SalohaVariant,
    /// Fixed transmit probability for slotted ALOHA (testing hook).
    pub saloha_alpha_override: Option<f64>,
    /// How the pilot power measurement is drawn.
    pub power_sampling: PowerSampling,
    /// Measured or idealized activity estimation for PIMA.
    pub estimation: EstimationMode,
    /// Skip the DT sub-frame entirely when the estimate is zero.
    pub pima_skip_empty_dt: bool,
    /// Activity prior for MAP decision regions; practical thresholds if
    /// unset.
    pub map_prior: Option<ActivityPrior>,
}

impl SimConfig {
    /// Standard-system defaults: 20 users, buffers of 3, 0.125 ms slots,
    /// 100 MHz bandwidth, -10 dB noise, 10% estimation-error target, a one
    /// million slot horizon with ten thousand slots of warmup.
    pub fn new(protocol: Protocol, lambda_total: f64) -> Self {
        SimConfig {
            protocol,
            users: 20,
            lambda_total,
            buffer_capacity: 3,
            slot_duration_s: 0.000_125,
            bandwidth_hz: 1e8,
            noise_power: 0.1,
            pe_target: 0.1,
            pia_samples: None,
            seed: 1,
            horizon_slots: 1_000_000,
            warmup_slots: 10_000,
            saloha_variant: SalohaVariant::default(),
            saloha_alpha_override: None,
            power_sampling: PowerSampling::default(),
            estimation: EstimationMode::default(),
            pima_skip_empty_dt: false,
            map_prior: None,
        }
    }

    /// Pilot length in samples: the explicit override if set, otherwise the
    /// smallest length meeting `pe_target`.
    pub fn resolved_pia_samples(&self) -> Result<u32> {
        match self.pia_samples {
            Some(0) => Err(Error::Config {
                field: "m1",
                message: "pilot length must be at least 1 sample".into(),
            }),
            Some(m) => Ok(m),
            None => required_samples(self.users, self.noise_power, self.pe_target),
        }
    }

    /// PIA sub-frame duration in seconds.
    pub fn pia_duration_s(&self) -> Result<f64> {
        Ok(self.resolved_pia_samples()? as f64 / self.bandwidth_hz)
    }

    /// Checks every field, returning non-fatal warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        fn bad(field: &'static str, message: impl Into<String>) -> Error {
            Error::Config {
                field,
                message: message.into(),
            }
        }
        if self.users == 0 {
            return Err(bad("users", "need at least one user"));
        }
        if self.users > u16::MAX as usize {
            return Err(bad(
                "users",
                format!("at most {} users supported", u16::MAX),
            ));
        }
        if !self.lambda_total.is_finite() || self.lambda_total < 0.0 {
            return Err(bad(
                "lambda_total",
                format!(
                    "offered load must be finite and non-negative, got {}",
                    self.lambda_total
                ),
            ));
        }
        if self.buffer_capacity == 0 {
            return Err(bad("buffer", "buffer capacity must be at least 1"));
        }
        if !(self.slot_duration_s.is_finite() && self.slot_duration_s > 0.0) {
            return Err(bad(
                "slot_us",
                format!(
                    "slot duration must be positive, got {} s",
                    self.slot_duration_s
                ),
            ));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(bad(
                "bandwidth_hz",
                format!("bandwidth must be positive, got {}", self.bandwidth_hz),
            ));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(bad(
                "noise_db",
                format!("noise power must be positive, got {}", self.noise_power),
            ));
        }
        if let Some(alpha) = self.saloha_alpha_override {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(bad(
                    "saloha_alpha_override",
                    format!("transmit probability must lie in [0, 1], got {alpha}"),
                ));
            }
        }
        if self.protocol == Protocol::Pima {
            // Also validates pe_target / the explicit pilot length.
            self.resolved_pia_samples()?;
        }
        let mut warnings = Vec::new();
        if self.lambda_total > self.users as f64 {
            warnings.push(format!(
                "offered load {} exceeds one packet per user per slot ({} users)",
                self.lambda_total, self.users
            ));
        }
        if self.horizon_slots > 0 && self.warmup_slots >= self.horizon_slots {
            warnings.push(format!(
                "warmup ({} slots) covers the whole horizon ({} slots); nothing will be measured",
                self.warmup_slots, self.horizon_slots
            ));
        }
        Ok(warnings)
    }
}

// ======================================================================
// Run drivers
// ======================================================================

/// Validates the config and runs it to completion.
pub fn run(cfg: &SimConfig) -> Result<Metrics> {
    cfg.validate()?;
    run_protocol(cfg, None)
}

/// Like [`run`], but streams one [`crate::protocol::FrameTrace`] per PIMA
/// frame into `sink`.
pub fn run_with_trace(cfg: &SimConfig, sink: &mut dyn TraceSink) -> Result<Metrics> {
    cfg.validate()?;
    run_protocol(cfg, Some(sink))
}

// ======================================================================
// CSV emission
// ======================================================================

/// Column header matching [`csv_row`].
pub const CSV_HEADER: &str =
    "protocol,K,lambda_total,B,L1_us,seed,generated,delivered,dropped,drop_prob,mean_latency_s";

/// One result row. `L1_us` is the PIA duration in microseconds (0 for the
/// baselines, which have no pilot). Floats use Rust's shortest-roundtrip
/// formatting so identical runs produce byte-identical rows; an undefined
/// mean latency prints as `nan`.
pub fn csv_row(cfg: &SimConfig, metrics: &Metrics) -> String {
    let l1_us = match cfg.protocol {
        Protocol::Pima => {
            let samples = cfg
                .resolved_pia_samples()
                .expect("csv_row requires a validated configuration");
            // One division, one rounding: 4373 samples at 100 MHz must print
            // as exactly "43.73".
            samples as f64 * 1e6 / cfg.bandwidth_hz
        }
        Protocol::Tdma | Protocol::Saloha => 0.0,
    };
    let latency = match metrics.mean_latency_s {
        Some(v) => v.to_string(),
        None => "nan".into(),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        cfg.protocol,
        cfg.users,
        cfg.lambda_total,
        cfg.buffer_capacity,
        l1_us,
        cfg.seed,
        metrics.generated,
        metrics.delivered,
        metrics.dropped,
        metrics.drop_probability,
        latency
    )
}

// ======================================================================
// Sweeps
// ======================================================================

/// A base configuration fanned out over loads and seeds.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    /// Template; `lambda_total` and `seed` are overridden per cell.
    pub base: SimConfig,
    /// Offered loads to visit, in order.
    pub lambdas: Vec<f64>,
    /// Seeds run at every load.
    pub seeds: Vec<u64>,
}

/// One completed cell of a sweep.
#[derive(Clone, Debug)]
pub struct SweepCell {
    /// The exact configuration that ran.
    pub config: SimConfig,
    /// Its result.
    pub metrics: Metrics,
}

/// Seed-aggregated statistics at one offered load.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint {
    /// Offered load of this point.
    pub lambda_total: f64,
    /// Seeds aggregated.
    pub seeds: usize,
    /// Mean drop probability across seeds.
    pub drop_mean: f64,
    /// 95% confidence half-width for the drop probability.
    pub drop_ci95: f64,
    /// Mean of the per-seed mean latencies, when any seed delivered.
    pub latency_mean_s: Option<f64>,
    /// 95% confidence half-width for the latency, when defined.
    pub latency_ci95_s: Option<f64>,
}

/// All cells (load-major, then seed order) plus one aggregate per load.
#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Per-(load, seed) outcomes in deterministic order.
    pub cells: Vec<SweepCell>,
    /// Per-load aggregates, in load order.
    pub points: Vec<SweepPoint>,
}

/// Sample mean and 95% Student-t confidence half-width (0 for fewer than
/// two samples).
fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let m = stats::mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let sd = stats::sample_variance(xs).sqrt();
    let t = StudentsT::new(0.0, 1.0, (xs.len() - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    (m, t * sd / (xs.len() as f64).sqrt())
}

fn aggregate_point(lambda_total: f64, group: &[SweepCell]) -> SweepPoint {
    let drops: Vec<f64> = group.iter().map(|c| c.metrics.drop_probability).collect();
    let (drop_mean, drop_ci95) = mean_ci95(&drops);
    let latencies: Vec<f64> = group
        .iter()
        .filter_map(|c| c.metrics.mean_latency_s)
        .collect();
    let (latency_mean_s, latency_ci95_s) = if latencies.is_empty() {
        (None, None)
    } else {
        let (m, ci) = mean_ci95(&latencies);
        (Some(m), Some(ci))
    };
    SweepPoint {
        lambda_total,
        seeds: group.len(),
        drop_mean,
        drop_ci95,
        latency_mean_s,
        latency_ci95_s,
    }
}

/// Runs every requested (load, seed) cell, in parallel, and aggregates
/// each load point. Cell order and all results are independent of thread
/// scheduling.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let mut configs = Vec::with_capacity(spec.lambdas.len() * spec.seeds.len());
    for &lambda in &spec.lambdas {
        for &seed in &spec.seeds {
            let mut cfg = spec.base.clone();
            cfg.lambda_total = lambda;
            cfg.seed = seed;
            configs.push(cfg);
        }
    }
    let cells = configs
        .into_par_iter()
        .map(|config| {
            let metrics = run(&config)?;
            Ok(SweepCell { config, metrics })
        })
        .collect::<Result<Vec<SweepCell>>>()?;
    let points = spec
        .lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            aggregate_point(
                lambda,
                &cells[i * spec.seeds.len()..(i + 1) * spec.seeds.len()],
            )
        })
        .collect();
    Ok(SweepResult { cells, points })
}

// ======================================================================
// Standard experiment grid
// ======================================================================

/// The ten-point offered-load grid used by the benchmark figures:
/// `0.01 + i * 0.69/9` for `i = 0..10`, spanning 0.01 to 0.7.
pub fn figure_lambda_grid() -> Vec<f64> {
    (0..10).map(|i| 0.01 + i as f64 * (0.69 / 9.0)).collect()
}

/// The four benchmark curves: both baselines plus PIMA sized for a 10% and
/// a 30% estimation-error target (roughly 44 us and 17 us pilots at
/// 100 MHz). Each entry is (label, config) derived from `base`.
pub fn standard_curves(base: &SimConfig) -> Vec<(&'static str, SimConfig)> {
    let mut tdma = base.clone();
    tdma.protocol = Protocol::Tdma;
    let mut saloha = base.clone();
    saloha.protocol = Protocol::Saloha;
    let mut pima_long = base.clone();
    pima_long.protocol = Protocol::Pima;
    pima_long.pe_target = 0.1;
    pima_long.pia_samples = None;
    let mut pima_short = base.clone();
    pima_short.protocol = Protocol::Pima;
    pima_short.pe_target = 0.3;
    pima_short.pia_samples = None;
    vec![
        ("tdma", tdma),
        ("saloha", saloha),
        ("pima_l1_44us", pima_long),
        ("pima_l1_17us", pima_short),
    ]
}

// ======================================================================
// Tests
// ======================================================================
