//! `omniwheel`: run the balancing experiments, check the linear model and
//! synthesize gains.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use omniwheel::control::{gains_to_toml, load_gains, GainSet, LqrWeights};
use omniwheel::experiments::{emit_outputs, run_all, Metrics, ScenarioSpec};
use omniwheel::linearization::{closed_loop_spectrum, compare, numeric_linearization, spectral_abscissa, state_matrices};
use omniwheel::model::load_params;
use omniwheel::simulation::SensorProfile;
use omniwheel::RobotParams;

/// Relative tolerance on nonzero entries for `linearize --check`.
const CHECK_REL_TOL: f64 = 1e-6;
/// Absolute tolerance on structurally zero entries.
const CHECK_ZERO_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "omniwheel", version, about = "Omnidirectional balancing unicycle: experiments and control synthesis")]
struct Cli {
    /// Robot parameter file (TOML); defaults to the built-in table.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Gain file (TOML) as written by `synthesize --export-gains`.
    #[arg(long, global = true)]
    gains: Option<PathBuf>,
    /// Sensor profile: ideal | realistic.
    #[arg(long, global = true, default_value = "realistic")]
    sensor: SensorProfile,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; each scenario writes into its own subdirectory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (station-keeping, disturbance, velocity-tracking,
    /// path-triangle, path-circle, incline).
    Run { scenario: String },
    /// Run every scenario in parallel.
    All,
    /// Incline balancing at each slope angle.
    SweepIncline {
        /// Slope angles in degrees.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        gammas: Vec<f64>,
    },
    /// Print the linear model; with --check compare it against finite
    /// differences of the nonlinear dynamics.
    Linearize {
        #[arg(long)]
        check: bool,
    },
    /// LQR synthesis; prints K, H and the closed-loop poles.
    Synthesize {
        /// Diagonal of Q (6 values).
        #[arg(long, value_delimiter = ',', num_args = 6)]
        q: Option<Vec<f64>>,
        /// Diagonal of Rw (2 values).
        #[arg(long, value_delimiter = ',', num_args = 2)]
        rw: Option<Vec<f64>>,
        /// Write the gain set to this file.
        #[arg(long)]
        export_gains: Option<PathBuf>,
    },
}

fn print_matrix<const R: usize, const C: usize>(name: &str, m: &nalgebra::SMatrix<f64, R, C>) {
    println!("{name} =");
    for r in 0..R {
        let row: Vec<String> = (0..C).map(|c| format!("{:>14.6e}", m[(r, c)])).collect();
        println!("  [{} ]", row.join(""));
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn params(cli: &Cli) -> Result<RobotParams> {
    match &cli.params {
        Some(path) => load_params(&read(path)?).with_context(|| format!("in {}", path.display())),
        None => Ok(RobotParams::prototype()),
    }
}

fn gains(cli: &Cli, p: &RobotParams) -> Result<GainSet> {
    match &cli.gains {
        Some(path) => load_gains(&read(path)?).with_context(|| format!("in {}", path.display())),
        None => GainSet::synthesize_default(p).context("default gain synthesis"),
    }
}

fn headline(m: &Metrics) -> String {
    let mut parts = Vec::new();
    let mut push = |name: &str, v: Option<f64>, unit: &str| {
        if let Some(v) = v {
            parts.push(format!("{name} {v:.4}{unit}"));
        }
    };
    push("diameter", m.steady_state_region_diameter, " m");
    push("recovery", m.recovery_time, " s");
    push("tracking error", m.velocity_tracking_error_pct, " %");
    push("plateau pitch", m.plateau_pitch.map(f64::to_degrees), "°");
    push("lean law", m.lean_law_pitch.map(f64::to_degrees), "°");
    push("path rms", m.path_rms_deviation, " m");
    push("pitch", m.incline_equilibrium_pitch.map(f64::to_degrees), "°");
    push("expected", m.incline_expected_pitch.map(f64::to_degrees), "°");
    if let Some(r) = m.initial_reversal {
        parts.push(format!("reversal {r}"));
    }
    parts.join(", ")
}

/// Run, write outputs and report; true if every scenario passed.
fn run_specs(cli: &Cli, specs: Vec<ScenarioSpec>) -> Result<bool> {
    let p = params(cli)?;
    let g = gains(cli, &p)?;
    let specs: Vec<_> = specs.into_iter().map(|s| s.with_sensor(cli.sensor, cli.seed)).collect();
    let mut all_ok = true;
    for (spec, result) in specs.iter().zip(run_all(&specs, &p, &g)) {
        let run = result.with_context(|| format!("scenario {}", spec.name))?;
        let dir = cli.out.join(&spec.name);
        emit_outputs(&run.trace, &run.metrics, &dir).with_context(|| format!("writing {}", dir.display()))?;
        let m = &run.metrics;
        let status = if m.passed { "PASS" } else { "FAIL" };
        println!("{status}  {} ({} seed {}): {}", spec.name, m.sensor, m.seed, headline(m));
        for f in &m.failures {
            println!("      {f}");
        }
        all_ok &= m.passed;
    }
    println!("outputs in {}", cli.out.display());
    Ok(all_ok)
}

fn linearize(cli: &Cli, check: bool) -> Result<bool> {
    let p = params(cli)?;
    let sm = state_matrices(&p);
    print_matrix("A", &sm.a);
    print_matrix("B", &sm.b);
    if !check {
        return Ok(true);
    }
    let d = compare(&sm, &numeric_linearization(&p)?);
    let ok = d.max_relative_nonzero < CHECK_REL_TOL && d.max_abs_structural_zero < CHECK_ZERO_TOL;
    println!(
        "{}  max relative error {:.3e} (< {CHECK_REL_TOL:e}), max structural-zero entry {:.3e} (< {CHECK_ZERO_TOL:e})",
        if ok { "PASS" } else { "FAIL" },
        d.max_relative_nonzero,
        d.max_abs_structural_zero
    );
    Ok(ok)
}

fn synthesize(cli: &Cli, q: Option<&[f64]>, rw: Option<&[f64]>, export: Option<&Path>) -> Result<bool> {
    let p = params(cli)?;
    let std = LqrWeights::standard();
    let w = match (q, rw) {
        (None, None) => std,
        (q, rw) => {
            let q: [f64; 6] = match q {
                Some(v) => v.try_into().context("--q needs 6 values")?,
                None => std::array::from_fn(|i| std.q[(i, i)]),
            };
            let rw: [f64; 2] = match rw {
                Some(v) => v.try_into().context("--rw needs 2 values")?,
                None => [std.rw[(0, 0)], std.rw[(1, 1)]],
            };
            LqrWeights::diagonal(q, rw)
        }
    };
    let g = GainSet::synthesize(&p, &w)?;
    let spectrum = closed_loop_spectrum(&state_matrices(&p), &g.k);
    print_matrix("K", &g.k);
    print_matrix("H", &g.h);
    let poles: Vec<String> = spectrum.iter().map(|z| format!("{:.4}{:+.4}i", z.re, z.im)).collect();
    println!("closed-loop poles: {}", poles.join(", "));
    println!("spectral abscissa: {:.6}", spectral_abscissa(&spectrum));
    if let Some(path) = export {
        std::fs::write(path, gains_to_toml(&g)).with_context(|| format!("writing {}", path.display()))?;
        println!("gains written to {}", path.display());
    }
    Ok(true)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { scenario } => {
            let p = params(cli)?;
            run_specs(cli, vec![ScenarioSpec::builtin(scenario, &p)?])
        }
        Command::All => {
            let p = params(cli)?;
            run_specs(cli, ScenarioSpec::all(&p)?)
        }
        Command::SweepIncline { gammas } => {
            if gammas.iter().any(|g| !g.is_finite() || g.abs() >= 90.0) {
                bail!("slope angles must be finite and below 90°");
            }
            let specs = gammas
                .iter()
                .map(|g| {
                    let mut s = ScenarioSpec::incline(g.to_radians());
                    s.name = format!("incline-{g}");
                    s
                })
                .collect();
            run_specs(cli, specs)
        }
        Command::Linearize { check } => linearize(cli, *check),
        Command::Synthesize { q, rw, export_gains } => {
            synthesize(cli, q.as_deref(), rw.as_deref(), export_gains.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
