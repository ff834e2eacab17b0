//! Command-line driver: buffer-time sweeps, oracle verification and traced
//! single trials.

pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use repeater_core::metrics::{fidelity_density, optimize_buffer, RateResult};
use repeater_core::protocol::Simulator;
use repeater_core::verification;

use crate::config::ExperimentConfig;
pub use crate::error::CliError;
use crate::output::{Manifest, OutputDir};

pub const MAX_TRACED_TRIALS: u64 = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "sim",
    version,
    about = "Two-link repeater buffer-time simulator"
)]
pub struct Cli {
    /// Worker threads for trial batches (default: all cores).
    #[arg(long, global = true, env = "SIM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep buffer times for every memory count in the config.
    Sweep {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare closed-form updates with density-matrix circuits.
    Verify {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
    },
    /// Print event traces of individual trials.
    Trial {
        config: PathBuf,
        #[arg(long)]
        buffer: u64,
        #[arg(long)]
        count: u64,
        /// Memories per end node (default: first entry of M_list).
        #[arg(long)]
        memories: Option<usize>,
    },
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match cli.command {
        Command::Sweep { config, output } => cmd_sweep(&config, &output, out),
        Command::Verify { tol, output } => cmd_verify(tol, &output, out),
        Command::Trial {
            config,
            buffer,
            count,
            memories,
        } => cmd_trial(&config, buffer, count, memories, out),
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

pub fn cmd_sweep(config_path: &Path, dir: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let mut files = OutputDir::create(dir)?;
    let range = config.sweep.buffer_min..=config.sweep.buffer_max;

    let mut sweep_rows: Vec<RateResult> = Vec::new();
    let mut optima: Vec<RateResult> = Vec::new();
    for &m in &config.memory.memories {
        let template = config.sim_config(m);
        let sweep = optimize_buffer(&template, range.clone())?;
        let best = sweep.best.clone();
        writeln!(
            out,
            "M={m}: N_buffer*={} rate={:.6} ebit/s per_memory={:.6} p_succ={:.6} F={}",
            best.buffer_steps,
            best.rate,
            best.per_memory_rate,
            best.p_succ,
            best.mean_fidelity.map_or("-".into(), |f| format!("{f:.6}")),
        )
        .map_err(stdout_err)?;

        let batch = Simulator::new(template.with_buffer_steps(best.buffer_steps))?.run_batch();
        let density = fidelity_density(&batch.fidelities(), config.sweep.bins)?;
        files.density_csv(m, &density)?;
        files.density_svg(m, best.buffer_steps, &density)?;

        sweep_rows.extend(sweep.all);
        optima.push(best);
    }
    files.sweep_csv(&sweep_rows)?;
    files.optimal_json(&optima)?;
    files.summary_svgs(&optima)?;
    let manifest = Manifest::new(&config, files.written());
    files.manifest(&manifest)?;
    writeln!(
        out,
        "wrote {} files to {}",
        files.written().len() + 1,
        dir.display()
    )
    .map_err(stdout_err)?;
    Ok(())
}

pub fn cmd_verify(tol: f64, dir: &Path, out: &mut impl Write) -> Result<(), CliError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Usage(format!(
            "--tol must be a positive number, got {tol}"
        )));
    }
    let report = verification::full_report()?;
    let mut files = OutputDir::create(dir)?;
    files.verify_csv(&report)?;

    let mut formulas: Vec<&str> = Vec::new();
    for row in &report.rows {
        if !formulas.contains(&row.formula) {
            formulas.push(row.formula);
        }
    }
    for formula in formulas {
        let (flagged, checked): (Vec<_>, Vec<_>) = report
            .rows
            .iter()
            .filter(|r| r.formula == formula)
            .partition(|r| r.known_discrepancy);
        let worst = |rows: &[&verification::Comparison]| {
            rows.iter().map(|r| r.abs_diff()).fold(0.0, f64::max)
        };
        let status = if checked.iter().all(|r| r.within(tol)) {
            "ok"
        } else {
            "FAIL"
        };
        write!(
            out,
            "{formula:<24} {status:<4} rows={:<4} max_abs_diff={:.3e}",
            checked.len(),
            worst(&checked)
        )
        .map_err(stdout_err)?;
        if !flagged.is_empty() {
            write!(
                out,
                " known_discrepancies={} (max_abs_diff={:.3e})",
                flagged.len(),
                worst(&flagged)
            )
            .map_err(stdout_err)?;
        }
        writeln!(out).map_err(stdout_err)?;
    }

    let failures = report.failures(tol).count();
    if failures > 0 {
        return Err(CliError::Verification(format!(
            "{failures} comparisons exceed tolerance {tol:e}; see {}",
            dir.join(output::VERIFY_CSV).display()
        )));
    }
    Ok(())
}

pub fn cmd_trial(
    config_path: &Path,
    buffer: u64,
    count: u64,
    memories: Option<usize>,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let config = ExperimentConfig::load(config_path)?;
    if count == 0 || count > MAX_TRACED_TRIALS {
        return Err(CliError::Usage(format!(
            "--count must be between 1 and {MAX_TRACED_TRIALS}, got {count}"
        )));
    }
    if buffer == 0 {
        return Err(CliError::Usage("--buffer must be at least 1".into()));
    }
    let memories = memories.unwrap_or(config.memory.memories[0]);
    if memories == 0 {
        return Err(CliError::Usage("--memories must be at least 1".into()));
    }
    let sim_config = config.sim_config(memories).with_buffer_steps(buffer);
    let sim = Simulator::new(sim_config)?;

    for trial in 0..count {
        let mut result = Ok(());
        let mut rng = sim.trial_rng(trial);
        writeln!(
            out,
            "trial {trial} (M={memories}, N_buffer={buffer}, seed={})",
            config.sweep.seed
        )
        .map_err(stdout_err)?;
        let outcome = sim.run_trial_traced(&mut rng, |event| {
            if result.is_ok() {
                result = writeln!(out, "  {event}");
            }
        });
        result.map_err(stdout_err)?;
        if outcome.success {
            writeln!(out, "  outcome: success F={:.6}", outcome.fidelity)
        } else {
            writeln!(out, "  outcome: failure")
        }
        .map_err(stdout_err)?;
    }
    Ok(())
}
