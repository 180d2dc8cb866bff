//! The three subcommands: `run`, `figures` and `tables`.
//!
//! Machine-readable output (CSV rows, tables) goes to stdout or the
//! requested file; logs, warnings and the human summary go to stderr, so
//! redirecting stdout always yields clean data.

use std::fmt::Write as _;
use std::path::Path;

use pima_core::estimator::{practical_thresholds, required_samples};
use pima_core::harness::{
    self, figure_lambda_grid, standard_curves, SimConfig, SweepResult, SweepSpec,
};
use pima_core::protocol::Protocol;
use pima_core::scheduler::ScheduleTable;

use crate::config::{CliError, Overrides};
use crate::{FiguresArgs, RunArgs, TablesArgs};

/// Writes `text` to `path`, mapping failures to IO errors (exit 3).
fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|err| CliError::Io(format!("cannot write {}: {err}", path.display())))
}

/// Logs the fully-resolved configuration on stderr, one `key=value` pair
/// per field, so every run records exactly what it simulated.
fn log_resolved(cfg: &SimConfig) -> Result<(), CliError> {
    let mut line = format!(
        "resolved config: protocol={} users={} lambda_total={} buffer={} slot_us={} \
         bandwidth_hz={} noise_power={}",
        cfg.protocol,
        cfg.users,
        cfg.lambda_total,
        cfg.buffer_capacity,
        cfg.slot_duration_s * 1e6,
        cfg.bandwidth_hz,
        cfg.noise_power,
    );
    if cfg.protocol == Protocol::Pima {
        let samples = cfg.resolved_pia_samples()?;
        let l1_us = samples as f64 * 1e6 / cfg.bandwidth_hz;
        match cfg.pia_samples {
            Some(_) => write!(line, " m1={samples} L1_us={l1_us}").unwrap(),
            None => write!(
                line,
                " pe_target={} m1={samples} L1_us={l1_us}",
                cfg.pe_target
            )
            .unwrap(),
        }
    }
    write!(
        line,
        " seed={} horizon_slots={} warmup_slots={}",
        cfg.seed, cfg.horizon_slots, cfg.warmup_slots
    )
    .unwrap();
    eprintln!("{line}");
    Ok(())
}

/// `run`: simulate one configuration and emit a single CSV row.
pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => Overrides::from_file(path)?,
        None => Overrides::default(),
    };
    let merged = Overrides::from_flags(args).over(file);
    let out = merged.out.clone();
    let (cfg, warnings) = merged.resolve()?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    log_resolved(&cfg)?;

    let metrics = harness::run(&cfg)?;
    let csv = format!(
        "{}\n{}\n",
        harness::CSV_HEADER,
        harness::csv_row(&cfg, &metrics)
    );
    match &out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }

    let latency = match metrics.mean_latency_s {
        Some(v) => format!("{v:.6e} s"),
        None => "undefined".to_string(),
    };
    eprintln!(
        "summary: generated={} delivered={} dropped={} residual={} drop_probability={:.6e} \
         mean_latency={latency}",
        metrics.generated,
        metrics.delivered,
        metrics.dropped,
        metrics.residual,
        metrics.drop_probability,
    );
    Ok(())
}

/// Formats one aggregated drop-probability row.
fn drop_row(curve: &str, point: &harness::SweepPoint) -> String {
    format!(
        "{curve},{},{},{},{}",
        point.lambda_total, point.seeds, point.drop_mean, point.drop_ci95
    )
}

/// Formats one aggregated latency row; loads where no seed delivered
/// anything print as `nan`.
fn latency_row(curve: &str, point: &harness::SweepPoint) -> String {
    let (mean, ci) = match (point.latency_mean_s, point.latency_ci95_s) {
        (Some(m), Some(c)) => (m.to_string(), c.to_string()),
        _ => ("nan".to_string(), "nan".to_string()),
    };
    format!("{curve},{},{},{mean},{ci}", point.lambda_total, point.seeds)
}

/// `figures`: sweep the four standard curves over the load grid and write
/// the two aggregated CSV files.
pub fn cmd_figures(args: &FiguresArgs) -> Result<(), CliError> {
    let mut base = SimConfig::new(Protocol::Tdma, 0.7);
    base.horizon_slots = args.horizon_slots;
    base.warmup_slots = args.warmup_slots;
    let lambdas = figure_lambda_grid();
    let seeds: Vec<u64> = (1..=args.seeds).collect();

    let mut drops = String::from("curve,lambda_total,seeds,drop_mean,drop_ci95\n");
    let mut latencies = String::from("curve,lambda_total,seeds,latency_mean_s,latency_ci95_s\n");
    for (curve, cfg) in standard_curves(&base) {
        eprintln!(
            "sweeping {curve}: {} loads x {} seeds, {} slots each",
            lambdas.len(),
            seeds.len(),
            cfg.horizon_slots
        );
        let spec = SweepSpec {
            base: cfg,
            lambdas: lambdas.clone(),
            seeds: seeds.clone(),
        };
        let result: SweepResult = harness::sweep(&spec)?;
        for point in &result.points {
            drops.push_str(&drop_row(curve, point));
            drops.push('\n');
            latencies.push_str(&latency_row(curve, point));
            latencies.push('\n');
        }
    }

    std::fs::create_dir_all(&args.out)
        .map_err(|err| CliError::Io(format!("cannot create {}: {err}", args.out.display())))?;
    let drop_path = args.out.join("fig2_drop.csv");
    let latency_path = args.out.join("fig3_latency.csv");
    write_file(&drop_path, &drops)?;
    write_file(&latency_path, &latencies)?;
    eprintln!(
        "wrote {} and {}",
        drop_path.display(),
        latency_path.display()
    );
    Ok(())
}

/// `tables`: print the analytic design tables for one system size.
pub fn cmd_tables(args: &TablesArgs) -> Result<(), CliError> {
    let users = args.users;
    let noise = 10f64.powf(args.noise_db / 10.0);
    let mut out = String::new();

    writeln!(out, "# schedule table (users = {users})").unwrap();
    writeln!(out, "nu,optimal_l2,frame_efficiency").unwrap();
    let table = ScheduleTable::build(users);
    for nu in 0..=users {
        writeln!(out, "{nu},{},{}", table.dt_len(nu), table.efficiency(nu)).unwrap();
    }

    writeln!(out).unwrap();
    writeln!(
        out,
        "# decision boundaries (users = {users}, noise = {noise})"
    )
    .unwrap();
    writeln!(out, "b,upper_boundary").unwrap();
    let regions = practical_thresholds(users, noise);
    for (b, boundary) in regions.boundaries().iter().enumerate() {
        writeln!(out, "{b},{boundary}").unwrap();
    }

    writeln!(out).unwrap();
    writeln!(
        out,
        "# pilot sizing (users = {users}, noise = {noise}, bandwidth = 100000000 Hz)"
    )
    .unwrap();
    writeln!(out, "pe_target,m1,l1_us").unwrap();
    for pe in [0.01, 0.05, 0.1, 0.2, 0.3] {
        let m1 = required_samples(users, noise, pe)?;
        let l1_us = m1 as f64 * 1e6 / 1e8;
        writeln!(out, "{pe},{m1},{l1_us}").unwrap();
    }

    print!("{out}");
    Ok(())
}
