//! Command-line front end.
//!
//! Results go to standard output as JSON (models as TOML). Failures are
//! reported on the diagnostic stream as one JSON record per line, and the
//! exit code follows [`Error::exit_code`].

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::absorption::{check_absorbing, decay_bound};
use crate::best_response::{best_response, build_br_lp, slater_check, BestResponseReport};
use crate::equilibrium::{
    solve_equilibrium, solve_unconstrained, verify_equilibrium, verify_unconstrained, SolveConfig, SolveOutcome,
    StepSchedule,
};
use crate::error::{Error, Result};
use crate::io::{self, LoadedModel, ModelFile, ResultFile, SolveMode, StrategyDocument};
use crate::model::{product_strategy, GameModel, StationaryProfile};
use crate::occupation::{occupation_measure, payoffs, residual};
use crate::simulate::{estimate_with_cap, Play, DEFAULT_STEP_CAP};
use crate::transforms::discount_to_absorbing;

#[derive(Debug, Parser)]
#[command(name = "agame", version, about = "Equilibria of absorbing Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a model and report whether it is well formed.
    Validate(ModelArg),
    /// Decide absorption and compute the uniform absorption bound.
    Absorption(ModelArg),
    /// Occupation measure, payoffs and flow residual of a profile.
    Occupancy {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        profile: PathBuf,
    },
    /// Constrained best response of one player to a profile.
    BestResponse {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        player: usize,
        #[arg(long)]
        profile: PathBuf,
        /// Drop the player's constraints.
        #[arg(long)]
        unconstrained: bool,
        /// Write the best-response LP as a table to this file.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Search for an equilibrium.
    Solve(SolveArgs),
    /// Certify a profile (or a stored result) as an ε-equilibrium.
    Verify {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long)]
        unconstrained: bool,
    },
    /// Monte Carlo estimates under a profile.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Steps after which a trajectory is truncated.
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: usize,
    },
    /// Convert a discounted model into an absorbing one.
    TransformDiscounted {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ModelArg {
    /// Model file (TOML).
    model: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Schedule {
    Constant,
    Harmonic,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["constrained", "unconstrained"])))]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    constrained: bool,
    #[arg(long)]
    unconstrained: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    /// Target epsilon.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = Schedule::Constant)]
    schedule: Schedule,
    /// Write one JSON record per iteration to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = if e.use_stderr() {
                writeln!(err, "{}", json!({"error": "Usage", "message": e.to_string(), "exit_code": code}))
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", error_record(&e));
            e.exit_code()
        }
    }
}

fn error_record(e: &Error) -> serde_json::Value {
    json!({"error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code()})
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    writeln!(out, "{text}").map_err(stdout_error)
}

fn stdout_error(source: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source,
    }
}

fn absorbing_model(path: &Path) -> Result<GameModel> {
    io::load_model(path)?.into_absorbing()
}

fn load_profile(model: &GameModel, path: &Path) -> Result<StationaryProfile> {
    io::load_strategy_document(path)?.profile(model)
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate(arg) => {
            let loaded = io::load_model(&arg.model)?;
            let m = loaded.game();
            let beta = match &loaded {
                LoadedModel::Discounted(d) => Some(d.beta()),
                LoadedModel::Absorbing(_) => None,
            };
            emit(
                out,
                &json!({
                    "valid": true,
                    "players": m.player_count(),
                    "states": m.state_count(),
                    "absorbing_states": m.delta().iter().filter(|d| **d).count(),
                    "constraint_rows": m.constraint_rows(),
                    "joint_actions": (0..m.state_count()).map(|x| m.joint_count(x)).sum::<usize>(),
                    "discount": beta,
                }),
            )?;
            Ok(0)
        }
        Command::Absorption(arg) => {
            let m = absorbing_model(&arg.model)?;
            let report = check_absorbing(&m);
            let witness = report.offending_component.as_ref().map(|c| {
                c.iter()
                    .map(|w| {
                        json!({
                            "state": m.states()[w.state],
                            "joint_actions": w.joint_actions.iter().map(|&ja| m.joint_label(w.state, ja)).collect::<Vec<_>>(),
                        })
                    })
                    .collect::<Vec<_>>()
            });
            emit(
                out,
                &json!({
                    "is_absorbing": report.is_absorbing,
                    "offending_component": witness,
                    "uniform_bound": report.uniform_bound,
                    "decay_bound": if report.is_absorbing { decay_bound(&m, m.eta()) } else { None },
                }),
            )?;
            Ok(0)
        }
        Command::Occupancy { model, profile } => {
            let m = absorbing_model(&model.model)?;
            let profile = load_profile(&m, &profile)?;
            let mu = occupation_measure(&m, &product_strategy(&m, &profile)?, m.eta())?;
            let weights: Vec<_> = (0..m.state_count())
                .flat_map(|x| (0..m.joint_count(x)).map(move |ja| (x, ja)))
                .filter(|&(x, ja)| mu.weights()[x][ja] != 0.0)
                .map(|(x, ja)| json!({"state": m.states()[x], "action": m.joint_label(x, ja), "weight": mu.weights()[x][ja]}))
                .collect();
            let marginal = mu.state_marginal();
            emit(
                out,
                &json!({
                    "measure": weights,
                    "state_occupancy": m.states().iter().zip(&marginal).collect::<std::collections::BTreeMap<_, _>>(),
                    "total_mass": mu.total_mass(),
                    "payoffs": payoffs(&m, &mu)?,
                    "residual": residual(&m, &mu, m.eta())?,
                }),
            )?;
            Ok(0)
        }
        Command::BestResponse {
            model,
            player,
            profile,
            unconstrained,
            dump_lp,
        } => {
            let m = absorbing_model(&model.model)?;
            if player >= m.player_count() {
                return Err(Error::ProfileModelMismatch(format!("no player {player}")));
            }
            let profile = load_profile(&m, &profile)?;
            let rho_i: &[f64] = if unconstrained { &[] } else { &m.rho()[player] };
            if let Some(path) = dump_lp {
                let lp = build_br_lp(&m, player, &profile, m.eta(), rho_i)?;
                let mut table = Vec::new();
                lp.write_table(&mut table).map_err(stdout_error)?;
                io::write(&path, &String::from_utf8_lossy(&table))?;
            }
            let br = best_response(&m, player, &profile, m.eta(), rho_i)?;
            let slack = slater_check(&m, player, &profile, m.eta(), rho_i)?;
            emit(out, &BestResponseReport::new(&m, player, &br, slack))?;
            Ok(0)
        }
        Command::Solve(args) => solve(args, out, err),
        Command::Verify {
            model,
            profile,
            epsilon,
            unconstrained,
        } => {
            let m = absorbing_model(&model.model)?;
            let doc = io::load_strategy_document(&profile)?;
            let stored_mode = match &doc {
                StrategyDocument::Result(r) => Some(r.solver.mode),
                StrategyDocument::Profile(_) => None,
            };
            let profile = doc.profile(&m)?;
            let cert = if unconstrained || stored_mode == Some(SolveMode::Unconstrained) {
                verify_unconstrained(&m, &profile, m.eta(), epsilon)?
            } else {
                verify_equilibrium(&m, &profile, m.eta(), m.rho(), epsilon)?
            };
            emit(out, &cert)?;
            Ok(if cert.is_equilibrium {
                0
            } else if !cert.feasible.iter().all(|f| *f) || cert.gap.iter().any(Option::is_none) {
                2
            } else {
                1
            })
        }
        Command::Simulate {
            model,
            profile,
            samples,
            seed,
            cap,
        } => {
            let m = absorbing_model(&model.model)?;
            let profile = load_profile(&m, &profile)?;
            writeln!(err, "{}", json!({"event": "seed", "seed": seed})).map_err(stdout_error)?;
            let report = estimate_with_cap(&m, Play::Independent(&profile), m.eta(), samples, seed, cap)?;
            emit(out, &report)?;
            Ok(0)
        }
        Command::TransformDiscounted { model, out: target } => {
            let dm = match io::load_model(&model.model)? {
                LoadedModel::Discounted(dm) => dm,
                LoadedModel::Absorbing(_) => {
                    return Err(Error::Schema("the model has no discount block".into()));
                }
            };
            let text = ModelFile::from_model(&discount_to_absorbing(&dm)?).to_toml()?;
            match target {
                Some(path) => io::write(&path, &text)?,
                None => write!(out, "{text}").map_err(stdout_error)?,
            }
            Ok(0)
        }
    }
}

fn solve(args: SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let m = absorbing_model(&args.model.model)?;
    let config = SolveConfig {
        max_iterations: args.max_iter,
        damping: args.damping,
        restarts: args.restarts,
        seed: args.seed,
        tolerance: args.tol,
        schedule: match args.schedule {
            Schedule::Constant => StepSchedule::Constant,
            Schedule::Harmonic => StepSchedule::Harmonic,
        },
        ..SolveConfig::default()
    };
    let mode = if args.unconstrained {
        SolveMode::Unconstrained
    } else {
        SolveMode::Constrained
    };
    writeln!(err, "{}", json!({"event": "seed", "seed": config.seed})).map_err(stdout_error)?;
    let start = Instant::now();
    let result = match mode {
        SolveMode::Unconstrained => solve_unconstrained(&m, m.eta(), &config),
        SolveMode::Constrained => solve_equilibrium(&m, m.eta(), m.rho(), &config),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let (outcome, code) = match result {
        Ok(outcome) => (outcome, 0),
        Err(e @ Error::NoConvergence(_)) => {
            writeln!(err, "{}", error_record(&e)).map_err(stdout_error)?;
            match e {
                Error::NoConvergence(outcome) => (*outcome, 3),
                _ => unreachable!(),
            }
        }
        Err(e) => return Err(e),
    };
    write_outputs(&m, &outcome, mode, &config, elapsed, &args, out)?;
    Ok(code)
}

fn write_outputs(
    m: &GameModel,
    outcome: &SolveOutcome,
    mode: SolveMode,
    config: &SolveConfig,
    elapsed: f64,
    args: &SolveArgs,
    out: &mut dyn Write,
) -> Result<()> {
    if let Some(path) = &args.trace {
        let mut lines = String::new();
        for record in &outcome.trace {
            lines.push_str(&serde_json::to_string(record).map_err(|e| Error::Schema(e.to_string()))?);
            lines.push('\n');
        }
        io::write(path, &lines)?;
    }
    let text = ResultFile::new(m, outcome, mode, config, elapsed).to_json()?;
    match &args.out {
        Some(path) => io::write(path, &text),
        None => writeln!(out, "{text}").map_err(stdout_error),
    }
}
