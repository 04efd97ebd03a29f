//! `hoc` — command-line runner for the house-of-cards selection-mutation
//! laboratory.
//!
//! Subcommands: `spectral` (eigen report only), `evolve` (full run with
//! diagnostics), `oracle` (integrator vs dense matrix exponential),
//! `check` (the verification suite), `sweep` (grid/step refinement study).
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical or I/O
//! failure, 3 verification-suite failure. `HOC_OUT` overrides `--out`.

mod config;
mod output;
mod scenario;

use clap::{Parser, Subcommand};
use hoc_core::acceptance;
use hoc_core::dynamics::LinearStepper;
use hoc_core::{oracle, Error, Measure};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hoc",
    about = "house-of-cards selection-mutation laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overridden by the HOC_OUT environment variable).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for the randomized invariant checks.
    #[arg(long, global = true, default_value_t = acceptance::DEFAULT_SEED)]
    seed: u64,

    /// Suppress per-check detail lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral analysis only: rho, lambda, alpha, regime, residuals.
    Spectral,
    /// Full scenario: spectral analysis, evolution with diagnostics, fits.
    Evolve,
    /// Compare the exponential integrator against the dense matrix
    /// exponential on the configured model (cells capped at 256).
    Oracle,
    /// Run the verification suite; exit 0 only if every criterion passes.
    Check,
    /// Re-run the scenario on refined grids and steps and report the drift
    /// of the spectral quantities and the final mass.
    Sweep {
        /// Refinement levels (cells doubled, grading +1, dt halved per level).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Model(_) => 1,
        Error::Numerical(_) | Error::Unsupported(_) => 2,
    }
}

fn load_config(cli: &Cli) -> Result<config::RunConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this subcommand needs --config PATH".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    config::parse_config(&text)
}

fn out_dir(cli: &Cli, cfg: &config::RunConfig) -> PathBuf {
    if let Ok(env_dir) = std::env::var("HOC_OUT") {
        return PathBuf::from(env_dir);
    }
    cli.out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_spectral(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let prepared = scenario::prepare(&cfg)?;
    let text = serde_json::to_string_pretty(&prepared.report)
        .map_err(|e| Error::Numerical(format!("report serialization: {e}")))?;
    println!("{text}");
    Ok(())
}

fn cmd_evolve(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let result = scenario::run_scenario(&cfg)?;
    let dir = out_dir(cli, &cfg);
    let written = output::write_outputs(&cfg, &result, &dir)?;
    if !cli.quiet {
        println!(
            "regime {:?}, lambda = {}, final mass = {}",
            result.report.regime, result.report.lambda, result.final_mass
        );
        for fit in &result.fits {
            println!(
                "fit '{}': rate = {:.6}, r2 = {:.5}{}",
                fit.series,
                fit.fit.rate,
                fit.fit.r2,
                if fit.fit.reliable {
                    ""
                } else {
                    " (unreliable)"
                }
            );
        }
        for path in &written {
            println!("wrote {path}");
        }
    }
    Ok(())
}

fn cmd_oracle(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let prepared = scenario::prepare(&cfg)?;
    let model = &prepared.model;
    let t_final = cfg.run.t_final;
    let dt = cfg.run.dt;
    let stepper = LinearStepper::new(model, dt)?;
    let mut u = Measure::uniform(&model.grid);
    let steps = (t_final / dt).round() as usize;
    for _ in 0..steps {
        stepper.step(model, &mut u);
    }
    let gen = oracle::dense_generator(model)?;
    let y0 = oracle::to_coords(&Measure::uniform(&model.grid), &model.grid);
    let reference = oracle::from_coords(&oracle::expm_propagate(&gen, &y0, t_final)?, &model.grid);
    let gap = (u.atom0 - reference.atom0).abs()
        + model.grid.quad(
            &u.dens
                .iter()
                .zip(&reference.dens)
                .map(|(a, b)| (a - b).abs())
                .collect::<Vec<_>>(),
        );
    println!("integrator vs expm on [0, {t_final}] at dt = {dt}: TV difference = {gap:.3e}");
    if !gap.is_finite() {
        return Err(Error::Numerical(
            "oracle comparison produced a non-finite gap".into(),
        ));
    }
    Ok(())
}

fn cmd_check(cli: &Cli) -> Result<bool, Error> {
    let outcomes = acceptance::run_all(cli.seed)?;
    let mut all_passed = true;
    for outcome in &outcomes {
        println!("{}", outcome.summary());
        if !cli.quiet {
            for check in &outcome.checks {
                let mark = if check.passed { "ok " } else { "FAIL" };
                println!("    [{mark}] {} — {}", check.label, check.detail);
            }
        }
        all_passed &= outcome.passed();
    }
    Ok(all_passed)
}

fn cmd_sweep(cli: &Cli, levels: usize) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    if levels < 2 {
        return Err(Error::Config("sweep needs at least 2 levels".into()));
    }
    // independent scenarios; run them in parallel and report in order
    let results: Vec<Result<(usize, f64, config::RunConfig, scenario::ScenarioResult), Error>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..levels)
                .map(|level| {
                    let mut level_cfg = cfg.clone();
                    level_cfg.grid.n_cells = cfg
                        .grid
                        .n_cells
                        .checked_shl(level as u32)
                        .unwrap_or(usize::MAX);
                    level_cfg.grid.grading = cfg.grid.grading + level as f64;
                    level_cfg.run.dt = cfg.run.dt / (1 << level) as f64;
                    scope.spawn(move || {
                        let result = scenario::run_scenario(&level_cfg)?;
                        Ok((level, level_cfg.run.dt, level_cfg, result))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });

    let mut rows = Vec::new();
    for item in results {
        let (level, dt, level_cfg, result) = item?;
        rows.push((
            level,
            level_cfg.grid.n_cells,
            level_cfg.grid.grading,
            dt,
            result,
        ));
    }
    rows.sort_by_key(|r| r.0);

    let mut csv = String::from("level,n_cells,grading,dt,rho_fine,lambda,alpha,final_mass\n");
    for (level, n, g, dt, result) in &rows {
        use std::fmt::Write as _;
        let _ = writeln!(
            csv,
            "{level},{n},{g},{dt},{},{},{},{}",
            result.report.rho_fine,
            result.report.lambda,
            result.report.alpha.unwrap_or(f64::NAN),
            result.final_mass,
        );
    }
    print!("{csv}");
    for pair in rows.windows(2) {
        let (c, f) = (&pair[0].4, &pair[1].4);
        let dl = (f.report.lambda - c.report.lambda).abs();
        let dm = (f.final_mass - c.final_mass).abs();
        println!(
            "level {} -> {}: |d lambda| = {dl:.3e}, |d final_mass| = {dm:.3e}",
            pair[0].0, pair[1].0
        );
    }
    let dir = out_dir(cli, &cfg);
    std::fs::create_dir_all(&dir)
        .and_then(|_| std::fs::write(dir.join("sweep.csv"), csv))
        .map_err(|e| Error::Numerical(format!("i/o failure: {e}")))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<u8, Error> = match &cli.command {
        Command::Spectral => cmd_spectral(&cli).map(|_| 0),
        Command::Evolve => cmd_evolve(&cli).map(|_| 0),
        Command::Oracle => cmd_oracle(&cli).map(|_| 0),
        Command::Check => cmd_check(&cli).map(|ok| if ok { 0 } else { 3 }),
        Command::Sweep { levels } => cmd_sweep(&cli, *levels).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
