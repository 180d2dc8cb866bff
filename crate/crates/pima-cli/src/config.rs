//! Flag and config-file resolution into a validated simulator
//! configuration.
//!
//! The config file is flat `key = value` text: one assignment per line,
//! `#` starts a comment, blank lines are skipped. Keys are the long flag
//! names with dashes replaced by underscores, and unknown keys are
//! rejected. Values use the same syntax as the flags. When a key appears
//! both in the file and as a flag, the flag wins; when it appears twice in
//! the file, the later line wins.

use std::path::{Path, PathBuf};

use pima_core::harness::SimConfig;
use pima_core::protocol::Protocol;

use crate::RunArgs;

/// A failure with its process exit code: configuration problems (bad keys,
/// unreadable values, failed validation) exit 2, IO problems exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<pima_core::Error> for CliError {
    fn from(err: pima_core::Error) -> Self {
        CliError::Config(err.to_string())
    }
}

/// How the pilot length is chosen when the protocol estimates activity.
#[derive(Clone, Copy, Debug)]
pub enum Pilot {
    /// Derive the sample count from a worst-case error target.
    ErrorTarget(f64),
    /// Use this many samples directly.
    Samples(u32),
}

/// Options gathered from one source (file or flags); `None` means "not
/// mentioned here".
#[derive(Debug, Default)]
pub struct Overrides {
    pub protocol: Option<String>,
    pub users: Option<usize>,
    pub lambda_total: Option<f64>,
    pub buffer: Option<usize>,
    pub slot_us: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub noise_db: Option<f64>,
    pub pilot: Option<Pilot>,
    pub seed: Option<u64>,
    pub horizon_slots: Option<u64>,
    pub warmup_slots: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Collects the explicit command-line flags.
    pub fn from_flags(args: &RunArgs) -> Overrides {
        Overrides {
            protocol: args.protocol.clone(),
            users: args.users,
            lambda_total: args.lambda_total,
            buffer: args.buffer,
            slot_us: args.slot_us,
            bandwidth_hz: args.bandwidth_hz,
            noise_db: args.noise_db,
            // The two pilot flags are mutually exclusive at the parser.
            pilot: match (args.pe_target, args.m1) {
                (Some(pe), None) => Some(Pilot::ErrorTarget(pe)),
                (None, Some(m1)) => Some(Pilot::Samples(m1)),
                _ => None,
            },
            seed: args.seed,
            horizon_slots: args.horizon_slots,
            warmup_slots: args.warmup_slots,
            out: args.out.clone(),
        }
    }

    /// Parses a config file, naming the offending line in every error.
    pub fn from_file(path: &Path) -> Result<Overrides, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| CliError::Io(format!("cannot read {}: {err}", path.display())))?;
        let mut over = Overrides::default();
        let mut pe_line = None;
        let mut m1_line = None;
        for (index, raw) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{line_no}: expected `key = value`, got `{line}`",
                    path.display()
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            let fail = |what: &str| {
                CliError::Config(format!(
                    "{}:{line_no}: {key}: {what} (got `{value}`)",
                    path.display()
                ))
            };
            match key {
                "protocol" => over.protocol = Some(value.to_string()),
                "users" => over.users = Some(value.parse().map_err(|_| fail("expected a count"))?),
                "lambda_total" => {
                    over.lambda_total = Some(value.parse().map_err(|_| fail("expected a number"))?)
                }
                "buffer" => {
                    over.buffer = Some(value.parse().map_err(|_| fail("expected a count"))?)
                }
                "slot_us" => {
                    over.slot_us = Some(value.parse().map_err(|_| fail("expected a number"))?)
                }
                "bandwidth_hz" => {
                    over.bandwidth_hz = Some(value.parse().map_err(|_| fail("expected a number"))?)
                }
                "noise_db" => {
                    over.noise_db = Some(value.parse().map_err(|_| fail("expected a number"))?)
                }
                "pe_target" => {
                    pe_line = Some(line_no);
                    let pe = value.parse().map_err(|_| fail("expected a number"))?;
                    over.pilot = Some(Pilot::ErrorTarget(pe));
                }
                "m1" => {
                    m1_line = Some(line_no);
                    let m1 = value.parse().map_err(|_| fail("expected a sample count"))?;
                    over.pilot = Some(Pilot::Samples(m1));
                }
                "seed" => over.seed = Some(value.parse().map_err(|_| fail("expected an integer"))?),
                "horizon_slots" => {
                    over.horizon_slots =
                        Some(value.parse().map_err(|_| fail("expected a slot count"))?)
                }
                "warmup_slots" => {
                    over.warmup_slots =
                        Some(value.parse().map_err(|_| fail("expected a slot count"))?)
                }
                "out" => over.out = Some(PathBuf::from(value)),
                other => {
                    return Err(CliError::Config(format!(
                        "{}:{line_no}: unknown key `{other}`",
                        path.display()
                    )))
                }
            }
        }
        if let (Some(a), Some(b)) = (pe_line, m1_line) {
            return Err(CliError::Config(format!(
                "{}: pe_target (line {a}) and m1 (line {b}) are mutually exclusive",
                path.display()
            )));
        }
        Ok(over)
    }

    /// Overlays `self` on top of `base`: anything set here wins.
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            protocol: self.protocol.or(base.protocol),
            users: self.users.or(base.users),
            lambda_total: self.lambda_total.or(base.lambda_total),
            buffer: self.buffer.or(base.buffer),
            slot_us: self.slot_us.or(base.slot_us),
            bandwidth_hz: self.bandwidth_hz.or(base.bandwidth_hz),
            noise_db: self.noise_db.or(base.noise_db),
            pilot: self.pilot.or(base.pilot),
            seed: self.seed.or(base.seed),
            horizon_slots: self.horizon_slots.or(base.horizon_slots),
            warmup_slots: self.warmup_slots.or(base.warmup_slots),
            out: self.out.or(base.out),
        }
    }

    /// Builds and validates the simulator configuration, returning it with
    /// any non-fatal warnings.
    pub fn resolve(self) -> Result<(SimConfig, Vec<String>), CliError> {
        let protocol: Protocol = self
            .protocol
            .as_deref()
            .ok_or_else(|| {
                CliError::Config("protocol: required (pima, tdma or saloha)".to_string())
            })?
            .parse()?;
        let mut cfg = SimConfig::new(protocol, self.lambda_total.unwrap_or(0.7));
        if let Some(users) = self.users {
            cfg.users = users;
        }
        if let Some(buffer) = self.buffer {
            cfg.buffer_capacity = buffer;
        }
        if let Some(slot_us) = self.slot_us {
            cfg.slot_duration_s = slot_us * 1e-6;
        }
        if let Some(bandwidth) = self.bandwidth_hz {
            cfg.bandwidth_hz = bandwidth;
        }
        if let Some(db) = self.noise_db {
            cfg.noise_power = 10f64.powf(db / 10.0);
        }
        match self.pilot {
            Some(Pilot::ErrorTarget(pe)) => {
                cfg.pe_target = pe;
                cfg.pia_samples = None;
            }
            Some(Pilot::Samples(m1)) => cfg.pia_samples = Some(m1),
            None => {}
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(horizon) = self.horizon_slots {
            cfg.horizon_slots = horizon;
        }
        if let Some(warmup) = self.warmup_slots {
            cfg.warmup_slots = warmup;
        }
        let warnings = cfg.validate()?;
        Ok((cfg, warnings))
    }
}
