//! Activity-count estimation from the pilot (PIA) sub-frame.
//!
//! During the pilot, every active user emits a unit-received-power signal, so
//! the per-sample received power is exponential with mean `active + noise`
//! and the average over the `M1` pilot samples follows an Erlang law with
//! shape `M1` and the same mean. The base station maps the measured average
//! onto a count estimate through a set of power thresholds:
//!
//! - *practical thresholds* place each boundary half-way between adjacent
//!   means, `eps_b = b + noise + 1/2`;
//! - *MAP boundaries* intersect adjacent Gaussian approximations of the
//!   Erlang law weighted by a user-supplied activity prior.
//!
//! The module also provides the analytic misclassification probabilities and
//! the pilot-length sizing rule derived from them.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::stats::{q_func, q_inv};
use crate::{Error, Result};

/// Zero prior entries are floored at this value before taking logs in the
/// MAP boundary equation.
const PRIOR_FLOOR: f64 = 1e-12;

// ======================================================================
// Power model
// ======================================================================

/// Received-power statistics of the pilot sub-frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerModel {
    noise_power: f64,
    samples: u32,
    bandwidth_hz: f64,
}

impl PowerModel {
    /// Creates the model from the linear noise power, the pilot sample count
    /// `M1`, and the system bandwidth (which fixes the sample rate).
    pub fn new(noise_power: f64, samples: u32, bandwidth_hz: f64) -> Result<Self> {
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(Error::Config {
                field: "noise_db",
                message: format!("linear noise power must be positive, got {noise_power}"),
            });
        }
        if samples < 1 {
            return Err(Error::Config {
                field: "m1",
                message: "pilot sample count must be at least 1".into(),
            });
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::Config {
                field: "bandwidth_hz",
                message: format!("bandwidth must be positive, got {bandwidth_hz}"),
            });
        }
        Ok(PowerModel {
            noise_power,
            samples,
            bandwidth_hz,
        })
    }

    /// Linear noise power.
    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Number of pilot samples `M1`.
    pub fn samples(&self) -> u32 {
        self.samples
    }

    /// System bandwidth in Hz.
    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// Pilot sub-frame duration in seconds: `M1 / W`.
    pub fn pia_duration_s(&self) -> f64 {
        self.samples as f64 / self.bandwidth_hz
    }

    /// Mean measured power with `active` users transmitting.
    pub fn mean_power(&self, active: usize) -> f64 {
        active as f64 + self.noise_power
    }

    /// Variance of the measured power with `active` users transmitting.
    pub fn power_variance(&self, active: usize) -> f64 {
        let m = self.mean_power(active);
        m * m / self.samples as f64
    }
}

/// How the pilot power measurement is drawn during simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PowerSampling {
    /// Draw directly from the exact Erlang law of the averaged power.
    #[default]
    Erlang,
    /// Draw all `M1` complex samples explicitly and average their powers;
    /// statistically identical, kept for validation.
    SymbolLevel,
}

/// Draws one pilot power measurement: Erlang with shape `M1` and mean
/// `active + noise` (the average of `M1` i.i.d. exponential sample powers).
pub fn sample_received_power<R: Rng + ?Sized>(
    active: usize,
    model: &PowerModel,
    rng: &mut R,
) -> f64 {
    let mean = model.mean_power(active);
    let shape = model.samples as f64;
    Gamma::new(shape, mean / shape)
        .expect("valid Erlang parameters")
        .sample(rng)
}

/// Symbol-level counterpart of [`sample_received_power`]: draws each of the
/// `M1` received samples as the sum of `active` unit-power complex symbols
/// plus complex noise, then averages the sample powers.
pub fn sample_received_power_symbols<R: Rng + ?Sized>(
    active: usize,
    model: &PowerModel,
    rng: &mut R,
) -> f64 {
    // A circularly-symmetric complex signal of power p has components with
    // variance p/2 each.
    let symbol = Normal::new(0.0, (0.5f64).sqrt()).expect("valid");
    let noise = Normal::new(0.0, (model.noise_power / 2.0).sqrt()).expect("valid");
    let mut acc = 0.0;
    for _ in 0..model.samples {
        let mut re: f64 = noise.sample(rng);
        let mut im: f64 = noise.sample(rng);
        for _ in 0..active {
            re += symbol.sample(rng);
            im += symbol.sample(rng);
        }
        acc += re * re + im * im;
    }
    acc / model.samples as f64
}

// ======================================================================
// Decision regions
// ======================================================================

/// Power thresholds `eps_0 < eps_1 < ... < eps_{K-1}` splitting the real line
/// into `K + 1` count regions: region `b` covers `[eps_{b-1}, eps_b]`, with
/// region `0` starting at zero and region `K` unbounded above.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRegions {
    boundaries: Vec<f64>,
}

impl DecisionRegions {
    /// Validates that the boundaries are finite and strictly increasing.
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::InvalidRegions("no boundaries given".into()));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidRegions("non-finite boundary".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRegions(
                "boundaries must be strictly increasing".into(),
            ));
        }
        Ok(DecisionRegions { boundaries })
    }

    /// The boundary values.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Largest representable count `K` (one more region than boundaries).
    pub fn max_count(&self) -> usize {
        self.boundaries.len()
    }

    /// Region index containing `power`. A measurement exactly on a boundary
    /// resolves to the lower region.
    pub fn classify(&self, power: f64) -> usize {
        self.boundaries.partition_point(|&b| b < power)
    }
}

/// Practical thresholds `eps_b = b + noise + 1/2`, half-way between the mean
/// powers of adjacent counts.
pub fn practical_thresholds(users: usize, noise_power: f64) -> DecisionRegions {
    assert!(users >= 1, "need at least one user");
    let boundaries = (0..users).map(|b| b as f64 + noise_power + 0.5).collect();
    DecisionRegions { boundaries }
}

/// Maps a pilot power measurement onto the estimated active count.
pub fn estimate_active(power: f64, regions: &DecisionRegions) -> usize {
    regions.classify(power)
}

// ======================================================================
// Activity prior and MAP boundaries
// ======================================================================

/// Probability mass over the number of simultaneously active users,
/// `b = 0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityPrior {
    weights: Vec<f64>,
}

impl ActivityPrior {
    /// Validates a mass function over `0..=K` (length `K + 1`).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Config {
                field: "prior",
                message: "prior must cover counts 0..=K with K >= 1".into(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config {
                field: "prior",
                message: "prior entries must be finite and non-negative".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config {
                field: "prior",
                message: format!("prior must sum to 1 within 1e-9, sums to {total}"),
            });
        }
        Ok(ActivityPrior { weights })
    }

    /// Uniform prior over `0..=K`.
    pub fn uniform(users: usize) -> Self {
        ActivityPrior {
            weights: vec![1.0 / (users + 1) as f64; users + 1],
        }
    }

    /// All mass on one count.
    pub fn point_mass(users: usize, at: usize) -> Self {
        assert!(at <= users, "point mass outside 0..=K");
        let mut weights = vec![0.0; users + 1];
        weights[at] = 1.0;
        ActivityPrior { weights }
    }

    /// Mass at count `b`.
    pub fn get(&self, b: usize) -> f64 {
        self.weights[b]
    }

    /// Largest count `K` covered by the prior.
    pub fn users(&self) -> usize {
        self.weights.len() - 1
    }
}

/// Intersection of two weighted Gaussian curves `w / (sd sqrt(2 pi)) *
/// exp(-(x - mean)^2 / var)` lying strictly between the two means, or `None`
/// when the curves do not cross there (so the lower-count region would be
/// empty or fragmented).
///
/// Equating the two curves and taking logs yields the quadratic
/// `A x^2 + B x + C = 0` with
/// `A = 1/var_hi - 1/var_lo`,
/// `B = 2 mean_lo/var_lo - 2 mean_hi/var_hi`,
/// `C = mean_hi^2/var_hi - mean_lo^2/var_lo - ln(w_hi sd_lo / (w_lo sd_hi))`.
pub fn gaussian_boundary(
    mean_lo: f64,
    var_lo: f64,
    weight_lo: f64,
    mean_hi: f64,
    var_hi: f64,
    weight_hi: f64,
) -> Option<f64> {
    debug_assert!(mean_lo < mean_hi && var_lo > 0.0 && var_hi > 0.0);
    let a = 1.0 / var_hi - 1.0 / var_lo;
    let b = 2.0 * mean_lo / var_lo - 2.0 * mean_hi / var_hi;
    let c = mean_hi * mean_hi / var_hi
        - mean_lo * mean_lo / var_lo
        - (weight_hi * var_lo.sqrt() / (weight_lo * var_hi.sqrt())).ln();
    let inside = |x: f64| x > mean_lo && x < mean_hi;
    if a == 0.0 {
        // Equal variances: the quadratic degenerates to a line.
        let x = -c / b;
        return inside(x).then_some(x);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = if q == 0.0 {
        [(-c / a).sqrt(), -(-c / a).sqrt()]
    } else {
        [q / a, c / q]
    };
    match (inside(roots[0]), inside(roots[1])) {
        (true, false) => Some(roots[0]),
        (false, true) => Some(roots[1]),
        // Zero or two interior roots: the regions are not well-formed
        // intervals for this prior.
        _ => None,
    }
}

/// Maximum-a-posteriori decision boundaries: for each adjacent pair of
/// counts, the crossing point of their prior-weighted Gaussian power
/// approximations. Zero prior entries are floored at `1e-12` before the log.
pub fn map_boundaries(
    prior: &ActivityPrior,
    noise_power: f64,
    samples: u32,
) -> Result<DecisionRegions> {
    let users = prior.users();
    let m1 = samples.max(1) as f64;
    let mut boundaries = Vec::with_capacity(users);
    for b in 0..users {
        let mean_lo = b as f64 + noise_power;
        let mean_hi = (b + 1) as f64 + noise_power;
        let var_lo = mean_lo * mean_lo / m1;
        let var_hi = mean_hi * mean_hi / m1;
        let w_lo = prior.get(b).max(PRIOR_FLOOR);
        let w_hi = prior.get(b + 1).max(PRIOR_FLOOR);
        let eps = gaussian_boundary(mean_lo, var_lo, w_lo, mean_hi, var_hi, w_hi).ok_or(
            Error::DegeneratePrior {
                lower: b,
                upper: b + 1,
            },
        )?;
        boundaries.push(eps);
    }
    DecisionRegions::new(boundaries)
}

// ======================================================================
// Error probabilities and pilot sizing
// ======================================================================

/// Probability of misclassifying the count when exactly `b` users are
/// active, under the Gaussian approximation of the power law: the chance of
/// the measurement escaping region `b` through its upper or lower boundary.
///
/// # Panics
///
/// Panics if `b` exceeds the largest count representable by `regions`.
pub fn conditional_error_prob(
    b: usize,
    regions: &DecisionRegions,
    samples: u32,
    noise_power: f64,
) -> f64 {
    let users = regions.max_count();
    assert!(b <= users, "count {b} outside 0..={users}");
    let mean = b as f64 + noise_power;
    let scale = (samples as f64).sqrt() / mean;
    let bounds = regions.boundaries();
    // Upper escape: measurement above eps_b (absent for the top region).
    let upper = if b < users {
        q_func(scale * (bounds[b] - mean))
    } else {
        0.0
    };
    // Lower escape: measurement below eps_{b-1} (absent for region 0).
    let lower = if b > 0 {
        q_func(scale * (mean - bounds[b - 1]))
    } else {
        0.0
    };
    upper + lower
}

/// Average misclassification probability under `prior`:
/// sum of `conditional_error_prob(b) * prior(b)` over all counts.
pub fn average_error_prob(
    prior: &ActivityPrior,
    regions: &DecisionRegions,
    samples: u32,
    noise_power: f64,
) -> f64 {
    assert_eq!(
        prior.users(),
        regions.max_count(),
        "prior and regions must cover the same count range"
    );
    (0..=prior.users())
        .map(|b| prior.get(b) * conditional_error_prob(b, regions, samples, noise_power))
        .sum()
}

/// Pilot sample count needed so the worst-case (largest-count) conditional
/// error stays at or below `pe_target`:
/// `M1 = ceil( [2 (K + noise) Qinv(pe_target / 2)]^2 )`, floored at 1.
pub fn required_samples(users: usize, noise_power: f64, pe_target: f64) -> Result<u32> {
    if !(pe_target > 0.0 && pe_target < 1.0) {
        return Err(Error::Config {
            field: "pe_target",
            message: format!("must lie strictly in (0, 1), got {pe_target}"),
        });
    }
    let x = q_inv(pe_target / 2.0);
    let root = 2.0 * (users as f64 + noise_power) * x;
    Ok(((root * root).ceil() as u32).max(1))
}

// ======================================================================
// Tests
// ======================================================================
