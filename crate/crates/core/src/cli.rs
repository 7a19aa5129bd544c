//! Command-line front end. Exit codes: 0 success, 1 invalid input, 2 runtime
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use crate::error::{Error, Result};
use crate::grid_model::LossInvariants;
use crate::optimizer::{brute_force_oracle, e0_lipschitz, pareto_ladder, pareto_sweep, solve_one_shot};
use crate::power_flow::{exact_power_flow_oracle, linearized_flow, InjectionState};
use crate::sim::{load_scenario, run_policy, write_run_outputs, Policy, Scenario};

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "GREENGRID_SEED";

#[derive(Debug, Parser)]
#[command(name = "greengrid", version, about = "Green-energy power allocation for base stations on a microgrid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate a scenario with its feeder and traces.
    Validate { scenario: PathBuf },
    /// Run allocation policies over the scenario horizon.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// `online`, `oneshot`, `brown-only`, a comma list, or `all`.
        #[arg(long, default_value = "all")]
        policy: String,
        /// Noise seed; overrides the scenario's.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trace the brown-import / capacity frontier on one slot.
    Pareto {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// 1-based slot whose green generation and floors are used.
        #[arg(long, default_value_t = 1)]
        slot: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check loss-matrix invariants and compare the solver with the oracles.
    Gridcheck {
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    Input(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            let (Failure::Input(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e}");
            f.code()
        }
    }
}

fn load(path: &Path) -> std::result::Result<Scenario, Failure> {
    load_scenario(path).map_err(Failure::Input)
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!(
                "{}: ok ({} buses, {} stations, {} green sites, horizon {})",
                scenario.display(),
                s.feeder.topology.bus_count(),
                s.n_stations(),
                s.green_sites.len(),
                s.horizon
            );
            Ok(())
        }
        Command::Run {
            scenario,
            policy,
            seed,
            out,
        } => {
            let mut s = load(&scenario)?;
            let policies = parse_policies(&policy).map_err(|e| Failure::Input(Error::Validation(vec![e])))?;
            let env_seed = match std::env::var(SEED_ENV) {
                Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| {
                    Failure::Input(Error::Validation(vec![format!("{SEED_ENV}={v:?} is not an unsigned integer")]))
                })?),
                Err(_) => None,
            };
            if let Some(seed) = env_seed.or(seed) {
                s.noise.seed = seed;
            }
            let runs = policies
                .iter()
                .map(|&p| run_policy(&s, p))
                .collect::<Result<Vec<_>>>()
                .map_err(Failure::Runtime)?;
            write_run_outputs(&runs, &out).map_err(Failure::Runtime)?;
            for run in &runs {
                let sm = run.summary();
                println!(
                    "{}: mean E0 {:.4} kWh/slot, mean P_loss {:.4} kW, mean f {:.6e}",
                    sm.policy, sm.mean_e0_kwh, sm.mean_p_loss_kw, sm.mean_f
                );
            }
            Ok(())
        }
        Command::Pareto {
            scenario,
            points,
            slot,
            out,
        } => {
            let s = load(&scenario)?;
            if slot == 0 || slot > s.horizon {
                return Err(Failure::Input(Error::Validation(vec![format!(
                    "slot {slot} outside 1..={}",
                    s.horizon
                )])));
            }
            let mut problem = s.template().with_green(s.green(slot - 1));
            problem.demand = s.demand(slot - 1);
            let ladder = pareto_ladder(&problem, points, &s.solver).map_err(Failure::Runtime)?;
            let metering = s.metering();
            let mut csv = String::from("c0_bits_hz,e0_kw,p_loss_kw,capacity_bits_hz\n");
            for (c0, result) in pareto_sweep(&problem, &ladder, &s.solver) {
                let alloc = result.map_err(Failure::Runtime)?;
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    c0,
                    metering.kw(alloc.e0),
                    metering.kw(alloc.p_loss),
                    alloc.capacity_total
                ));
            }
            std::fs::create_dir_all(&out).map_err(|e| Failure::Runtime(Error::io(&out, e)))?;
            let path = out.join("frontier.csv");
            std::fs::write(&path, csv).map_err(|e| Failure::Runtime(Error::io(&path, e)))?;
            println!("wrote {} frontier points to {}", ladder.len(), path.display());
            Ok(())
        }
        Command::Gridcheck { scenario } => gridcheck(&load(&scenario)?),
    }
}

fn parse_policies(list: &str) -> std::result::Result<Vec<Policy>, String> {
    if list == "all" {
        return Ok(Policy::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in list.split(',') {
        let p: Policy = name.trim().parse()?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

fn gridcheck(s: &Scenario) -> std::result::Result<(), Failure> {
    let inv = LossInvariants::of(&s.loss);
    println!("loss matrix ({} buses)", s.loss.x_real().nrows());
    println!("  slack row/column max |x|  {:e}", inv.slack_max_abs);
    println!("  max asymmetry             {:e}", inv.asymmetry);
    println!("  min eigenvalue            {:e}", inv.min_eigenvalue);

    let mut problem = s.template().with_green(s.green(0));
    problem.demand = s.demand(0);
    let alloc = solve_one_shot(&problem, &s.solver).map_err(Failure::Runtime)?;
    println!("slot 1 one-shot: E0 {:e} pu, P_loss {:e} pu, kkt residual {:e}", alloc.e0, alloc.p_loss, alloc.kkt_residual);

    let mut topo = s.feeder.topology.clone();
    topo.slack_voltage = s.slack_voltage;
    let state = InjectionState::new(alloc.p.clone(), problem.green.clone());
    let lin = linearized_flow(&state, &s.loss, s.slack_voltage).map_err(Failure::Runtime)?;
    match exact_power_flow_oracle(&topo, &state) {
        Ok(exact) => {
            let rel = (lin.p_loss - exact.p_loss).abs() / exact.p_loss.abs().max(1e-300);
            let dv = (&lin.v_mag - &exact.v_mag).amax();
            println!("linearised vs exact flow: loss rel. error {rel:.3e}, max |dV| {dv:.3e} pu");
        }
        Err(e) => println!("linearised vs exact flow: exact solve failed ({e})"),
    }

    if s.n_stations() <= crate::optimizer::grid_search::MAX_STATIONS {
        let range = s
            .stations
            .iter()
            .map(|b| b.p_max - b.p_min)
            .fold(0.0, f64::max);
        let resolution = 1e-3 * range;
        let oracle = brute_force_oracle(&problem, resolution).map_err(Failure::Runtime)?;
        let bound = e0_lipschitz(&problem) * resolution;
        println!(
            "grid oracle: |dE0| {:.3e} (bound {:.3e})",
            (oracle.e0 - alloc.e0).abs(),
            bound
        );
    } else {
        println!("grid oracle: skipped ({} stations, at most 3 supported)", s.n_stations());
    }

    if inv.hold() {
        Ok(())
    } else {
        Err(Failure::Input(Error::Validation(vec!["loss matrix invariants violated".into()])))
    }
}
