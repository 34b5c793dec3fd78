//! Command-line driver: closed-loop runs and single water-flow solves.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::warn;
use wdngp::hydraulics::{solve_wfp_newton, FixedData, NewtonOptions};
use wdngp::io::{emit_results, format_value, IoError, ScenarioConfig};
use wdngp::mpc::{run_mpc, MpcError};
use wdngp::nalgebra::DVector;
use wdngp::network::incidence_matrices;
use wdngp::{FlowUnit, Network, PlantMode, ScaConfig};

pub const EXIT_OK: i32 = 0;
/// Bad input: unreadable or malformed files, invalid options.
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "wdngp",
    version,
    about = "Pump scheduling for water networks by successive geometric programming"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one steady water-flow problem and print heads and flows.
    Wfp(WfpArgs),
}

#[derive(Debug, Args)]
struct Inputs {
    /// Network in the INP subset.
    #[arg(long, value_name = "PATH")]
    network: Option<PathBuf>,
    /// Demand CSV (step,junction,value); replaces the INP demands.
    #[arg(long, value_name = "PATH")]
    demands: Option<PathBuf>,
    /// Flow unit of the demand CSV and of all output.
    #[arg(long, default_value = "GPM")]
    units: FlowUnit,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Prediction horizon in steps.
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    /// Base of the exponential transform.
    #[arg(long, default_value_t = 1.005)]
    base: f64,
    /// SCA stopping threshold on the iterate distance.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 40)]
    max_iter: usize,
    /// Sampling time in seconds.
    #[arg(long, default_value_t = 3600.0, value_name = "SECONDS")]
    dt: f64,
    /// Number of applied steps.
    #[arg(long, default_value_t = 24, value_name = "STEPS")]
    t_final: usize,
    #[arg(long, default_value = "nominal")]
    plant: PlantMode,
    /// Start each window from the previous window's solution.
    #[arg(long)]
    warm_start: bool,
    /// Output directory.
    #[arg(long, default_value = "out", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WfpArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Demand step to solve for.
    #[arg(long, default_value_t = 0)]
    step: usize,
    /// Relative speed applied to every pump.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Tank heads in ft, comma separated; defaults to the initial heads.
    #[arg(long, value_delimiter = ',')]
    tank_heads: Option<Vec<f64>>,
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<MpcError> for Failure {
    fn from(e: MpcError) -> Self {
        match e {
            MpcError::InvalidConfig(_) | MpcError::Network(_) => Failure::Input(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Some(Command::Wfp(args)) => wfp(args),
        None => run(cli.run),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            EXIT_SOLVER
        }
    }
}

fn load(inputs: &Inputs) -> Result<Network, Failure> {
    let Some(path) = &inputs.network else {
        return Err(Failure::Input("--network is required".into()));
    };
    let (net, warnings) =
        wdngp::io::load_network(path, inputs.demands.as_deref().map(|p| (p, inputs.units))).map_err(|e| match e {
            IoError::Io { .. } => Failure::from(e),
            IoError::Csv { .. } => {
                let csv = inputs.demands.as_deref().unwrap_or(path);
                Failure::Input(format!("{}: {e}", csv.display()))
            }
            _ => Failure::Input(format!("{}: {e}", path.display())),
        })?;
    for w in warnings {
        warn!("{}: {w}", path.display());
    }
    Ok(net)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let scenario = ScenarioConfig {
        network: args.inputs.network.clone().unwrap_or_default(),
        demands: args.inputs.demands.clone(),
        sca: ScaConfig {
            base: args.base,
            threshold: args.threshold,
            max_iter: args.max_iter,
            hp: args.horizon,
            dt: args.dt,
            plant: args.plant,
            warm_start: args.warm_start,
            ..ScaConfig::default()
        },
        t_final: args.t_final,
        io_unit: args.inputs.units,
        out: args.out,
    };
    scenario.sca.check().map_err(Failure::from)?;
    let net = load(&args.inputs)?;
    let traj = run_mpc(&net, scenario.t_final, &scenario.sca)?;
    let files = emit_results(&traj, &scenario.out, scenario.io_unit)?;
    let not_converged = traj.steps.iter().filter(|r| !r.converged).count();
    if not_converged > 0 {
        warn!("{not_converged} of {} windows hit the iteration limit", traj.len());
    }
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn wfp(args: WfpArgs) -> Result<(), Failure> {
    let net = load(&args.inputs)?;
    let x = match args.tank_heads {
        Some(h) if h.len() != net.n_tanks() => {
            return Err(Failure::Input(format!(
                "--tank-heads has {} values, the network has {} tanks",
                h.len(),
                net.n_tanks()
            )))
        }
        Some(h) => h,
        None => net.initial_tank_heads(),
    };
    let mats = incidence_matrices(&net, 3600.0).map_err(|e| Failure::Input(e.to_string()))?;
    let fixed = FixedData {
        tank_heads: DVector::from_vec(x),
        speeds: DVector::from_element(net.n_pumps(), args.speed),
        demands: DVector::from_vec(net.demands_at(args.step)),
    };
    let state =
        solve_wfp_newton(&net, &mats, &fixed, &NewtonOptions::default()).map_err(|e| Failure::Solver(e.to_string()))?;
    let unit = args.inputs.units;
    println!("kind,id,value");
    for (i, node) in net.nodes().iter().enumerate() {
        println!("head,{},{}", node.id, format_value(state.node_head(&net, i)));
    }
    for (i, link) in net.links().iter().enumerate() {
        println!(
            "flow,{},{}",
            link.id,
            format_value(unit.from_cfs(state.link_flow(&net, i)))
        );
    }
    Ok(())
}
