//! Successive convex approximation over one window and the receding-horizon
//! driver.

use log::{debug, info};
use nalgebra::DVector;
use thiserror::Error;

use crate::gp::{solve, GpError, SolveStatus, SolverOptions};
use crate::gp_model::{build_window, CoefficientSet, ModelConfig, ModelError, WindowData, WindowIterate};
use crate::hydraulics::{
    dae_residual, solve_wfp_newton, tank_step, FixedData, HydraulicState, HydraulicsError, NewtonOptions,
};
use crate::network::{incidence_matrices, DaeMatrices, Network, NetworkError};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("GP solve failed at step {step}, SCA iteration {iteration}: {source}")]
    SolverFailure {
        step: usize,
        iteration: usize,
        #[source]
        source: GpError,
    },
    #[error("model construction failed at step {step}: {source}")]
    Model {
        step: usize,
        #[source]
        source: ModelError,
    },
    #[error("plant replay failed at step {step}: {source}")]
    Plant {
        step: usize,
        #[source]
        source: HydraulicsError,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How the first iterate of a cold window is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Pumps share the total demand equally; every pipe carries the mean
    /// junction demand.
    DemandShare,
    /// Fixed flows (cfs) for every pipe and pump.
    Uniform { pipe_flow: f64, pump_flow: f64 },
    /// Steady state of the network at full speed, from the Newton solver.
    Hydraulic,
}

/// What advances the tanks between windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantMode {
    /// The window's own flows.
    Nominal,
    /// The applied speeds replayed through the Newton solver.
    Oracle,
}

impl std::str::FromStr for PlantMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nominal" => Ok(PlantMode::Nominal),
            "oracle" => Ok(PlantMode::Oracle),
            other => Err(format!("unknown plant mode '{other}' (expected nominal or oracle)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaConfig {
    pub base: f64,
    pub threshold: f64,
    pub max_iter: usize,
    pub hp: usize,
    /// Sampling time (s).
    pub dt: f64,
    pub initial_guess: InitialGuess,
    /// Start each window from the previous window's final iterate.
    pub warm_start: bool,
    pub plant: PlantMode,
    /// Re-solve an infeasible GP without junction head floors. Linearized
    /// heads far from the fixed point can violate floors the physical
    /// solution satisfies.
    pub relax_head_floor: bool,
    /// Model options; its `base` is overridden by [`ScaConfig::base`].
    pub model: ModelConfig,
    pub solver: SolverOptions,
}

impl Default for ScaConfig {
    fn default() -> Self {
        ScaConfig {
            base: 1.005,
            threshold: 0.5,
            max_iter: 40,
            hp: 10,
            dt: 3600.0,
            initial_guess: InitialGuess::DemandShare,
            warm_start: false,
            plant: PlantMode::Nominal,
            relax_head_floor: true,
            model: ModelConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl ScaConfig {
    pub fn check(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::InvalidConfig(m.into()));
        if !(self.base > 1.0 && self.base.is_finite()) {
            return bad("base must be > 1");
        }
        if !(self.threshold > 0.0) {
            return bad("threshold must be > 0");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be ≥ 1");
        }
        if self.hp == 0 {
            return bad("horizon must be ≥ 1");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            base: self.base,
            ..self.model.clone()
        }
    }
}

/// Constraint group dropped from an infeasible GP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    SmoothnessBound,
    HeadFloor,
}

/// Record of one SCA run.
#[derive(Debug, Clone)]
pub struct WindowSolution {
    /// Final iterate.
    pub iterate: WindowIterate,
    /// `‖ξ̂_n − ξ̂_{n−1}‖` for `n = 1, 2, …`.
    pub errors: Vec<f64>,
    /// `ln` of the GP objective per iteration.
    pub objectives: Vec<f64>,
    /// Iterates `ξ_0, ξ_1, …`; `iterates.len() == errors.len() + 1`.
    pub iterates: Vec<WindowIterate>,
    pub converged: bool,
    /// Iterations whose GP was infeasible and was re-solved with a
    /// constraint group dropped.
    pub relaxed: Vec<(usize, Relaxation)>,
}

impl WindowSolution {
    pub fn iterations(&self) -> usize {
        self.errors.len()
    }
}

/// First iterate for a window starting at heads `x0`.
pub fn initial_iterate(
    net: &Network,
    mats: &DaeMatrices,
    data: &WindowData,
    hp: usize,
    guess: &InitialGuess,
) -> Result<WindowIterate, HydraulicsError> {
    let nm = net.n_pumps();
    let np = net.n_pipes();
    let fixed_heads: Vec<f64> = data.x0.iter().copied().chain(net.reservoir_heads()).collect();
    let mean_head = fixed_heads.iter().sum::<f64>() / fixed_heads.len().max(1) as f64;
    let mut it = WindowIterate {
        x: vec![data.x0.clone(); hp],
        l: vec![DVector::from_element(net.n_junctions(), mean_head); hp],
        u: Vec::with_capacity(hp),
        v: Vec::with_capacity(hp),
        s: vec![DVector::from_element(nm, 1.0); hp],
    };
    for k in 0..hp {
        let total: f64 = data.demands[k].iter().sum();
        let (u, v) = match guess {
            InitialGuess::DemandShare => {
                let mean = total / net.n_junctions().max(1) as f64;
                (
                    DVector::from_element(nm, (total / nm.max(1) as f64).max(0.0)),
                    DVector::from_element(np, mean),
                )
            }
            InitialGuess::Uniform { pipe_flow, pump_flow } => (
                DVector::from_element(nm, *pump_flow),
                DVector::from_element(np, *pipe_flow),
            ),
            InitialGuess::Hydraulic => {
                let fixed = FixedData {
                    tank_heads: data.x0.clone(),
                    speeds: DVector::from_element(nm, 1.0),
                    demands: data.demands[k].clone(),
                };
                let st = solve_wfp_newton(net, mats, &fixed, &NewtonOptions::default())?;
                it.l[k] = st.l.clone();
                (st.u.map(|q| q.max(0.0)), st.v)
            }
        };
        it.u.push(u);
        it.v.push(v);
    }
    Ok(it)
}

/// Run the SCA loop on one window starting from `start`.
pub fn solve_window(
    net: &Network,
    mats: &DaeMatrices,
    data: &WindowData,
    start: &WindowIterate,
    cfg: &ScaConfig,
    step: usize,
) -> Result<WindowSolution, MpcError> {
    cfg.check()?;
    if data.demands.len() < cfg.hp || start.horizon() < cfg.hp {
        return Err(MpcError::InvalidConfig(format!(
            "window needs {} steps of demand and initial iterate",
            cfg.hp
        )));
    }
    let model = cfg.model_config();
    let model_err = |source| MpcError::Model { step, source };

    let mut prev = start.clone();
    let mut prev_hat = prev.encode(&model);
    let mut sol = WindowSolution {
        iterate: prev.clone(),
        errors: Vec::new(),
        objectives: Vec::new(),
        iterates: vec![prev.clone()],
        converged: false,
        relaxed: Vec::new(),
    };
    let mut warm: Option<Vec<f64>> = None;
    let mut error = f64::INFINITY;
    let mut n = 0;
    while error >= cfg.threshold && n < cfg.max_iter {
        n += 1;
        let coeffs =
            CoefficientSet::from_iterate(net, &prev, &data.x0, data.u_before.as_ref(), &model).map_err(model_err)?;
        let mut attempt = model.clone();
        let solution = loop {
            let problem = build_window(net, mats, data, &coeffs, cfg.hp, &attempt).map_err(model_err)?;
            let warm_point = warm.clone().unwrap_or_else(|| problem.warm_point(&prev, data, net));
            match solve(&problem.gp, Some(&warm_point), &cfg.solver) {
                Ok(s) => break (problem, s),
                Err(GpError::Infeasible { .. }) if attempt.smoothness_lower_bound => {
                    debug!("step {step} iteration {n}: dropping the smoothness lower bound");
                    sol.relaxed.push((n, Relaxation::SmoothnessBound));
                    attempt.smoothness_lower_bound = false;
                }
                Err(GpError::Infeasible { .. }) if attempt.junction_head_floor && cfg.relax_head_floor => {
                    debug!("step {step} iteration {n}: dropping junction head floors");
                    sol.relaxed.push((n, Relaxation::HeadFloor));
                    attempt.junction_head_floor = false;
                }
                Err(source) => {
                    return Err(MpcError::SolverFailure {
                        step,
                        iteration: n,
                        source,
                    })
                }
            }
        };
        let (problem, gp_sol) = solution;
        if gp_sol.status == SolveStatus::MaxIter {
            debug!("step {step} iteration {n}: GP solver hit its iteration limit");
        }
        let next = problem.decode_log(&gp_sol.y);
        let next_hat = next.encode(&model);
        error = next_hat
            .iter()
            .zip(&prev_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        debug!(
            "step {step} iteration {n}: error {error:.6e}, ln objective {:.6e}",
            gp_sol.ln_objective
        );
        sol.errors.push(error);
        sol.objectives.push(gp_sol.ln_objective);
        sol.iterates.push(next.clone());
        warm = Some(gp_sol.x);
        prev = next;
        prev_hat = next_hat;
    }
    sol.converged = error < cfg.threshold;
    sol.iterate = prev;
    Ok(sol)
}

/// Nonlinear residual norms of an applied step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    pub tank: f64,
    pub mass: f64,
    pub energy: f64,
}

/// One applied control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Tank heads at the start of the step.
    pub x_start: DVector<f64>,
    /// Tank heads at the end of the step.
    pub x_end: DVector<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub s: DVector<f64>,
    pub demand: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub errors: Vec<f64>,
    pub residual: ResidualNorms,
}

/// Closed-loop result. Heads in ft, flows in cfs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MpcTrajectory {
    pub tank_ids: Vec<String>,
    pub junction_ids: Vec<String>,
    pub pump_ids: Vec<String>,
    pub pipe_ids: Vec<String>,
    pub steps: Vec<StepRecord>,
}

impl MpcTrajectory {
    pub fn empty_for(net: &Network) -> Self {
        let ids = |idx: &[usize], nodes: bool| -> Vec<String> {
            idx.iter()
                .map(|&i| {
                    if nodes {
                        net.nodes()[i].id.clone()
                    } else {
                        net.links()[i].id.clone()
                    }
                })
                .collect()
        };
        MpcTrajectory {
            tank_ids: ids(net.tanks(), true),
            junction_ids: ids(net.junctions(), true),
            pump_ids: ids(net.pumps(), false),
            pipe_ids: ids(net.pipes(), false),
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn advance_tanks(net: &Network, dt: f64, x0: &DVector<f64>, state: &HydraulicState) -> DVector<f64> {
    DVector::from_fn(net.n_tanks(), |t, _| {
        let node = net.tanks()[t];
        let flows = |links: &[usize]| links.iter().map(|&i| state.link_flow(net, i)).collect::<Vec<_>>();
        tank_step(
            x0[t],
            &flows(net.inflow_links(node)),
            &flows(net.outflow_links(node)),
            dt,
            net.tank(t).area,
        )
    })
}

/// Closed-loop simulation over `t_final` steps.
pub fn run_mpc(net: &Network, t_final: usize, cfg: &ScaConfig) -> Result<MpcTrajectory, MpcError> {
    cfg.check()?;
    let mats = incidence_matrices(net, cfg.dt)?;
    let mut traj = MpcTrajectory::empty_for(net);
    let mut x = DVector::from_vec(net.initial_tank_heads());
    let mut u_before: Option<DVector<f64>> = None;
    let mut carried: Option<WindowIterate> = None;

    for step in 0..t_final {
        let data = WindowData {
            x0: x.clone(),
            demands: net
                .demand_forecast(step, cfg.hp)
                .into_iter()
                .map(DVector::from_vec)
                .collect(),
            u_before: u_before.clone(),
        };
        let start = match carried.take() {
            Some(it) if cfg.warm_start => it,
            _ => initial_iterate(net, &mats, &data, cfg.hp, &cfg.initial_guess)
                .map_err(|source| MpcError::Plant { step, source })?,
        };
        let sol = solve_window(net, &mats, &data, &start, cfg, step)?;
        let it = &sol.iterate;
        let d = data.demands[0].clone();

        let state = match cfg.plant {
            PlantMode::Nominal => HydraulicState {
                x: x.clone(),
                l: it.l[0].clone(),
                u: it.u[0].clone(),
                v: it.v[0].clone(),
                s: it.s[0].clone(),
            },
            PlantMode::Oracle => {
                let fixed = FixedData {
                    tank_heads: x.clone(),
                    speeds: it.s[0].clone(),
                    demands: d.clone(),
                };
                let mut st = solve_wfp_newton(net, &mats, &fixed, &NewtonOptions::default())
                    .map_err(|source| MpcError::Plant { step, source })?;
                st.x = x.clone();
                st
            }
        };
        let x_end = advance_tanks(net, cfg.dt, &x, &state);
        let r = dae_residual(net, &mats, &state, &x_end, &d).map_err(|source| MpcError::Plant { step, source })?;
        info!(
            "step {step}: {} SCA iterations, error {:.3e}, tank heads {:?}, speeds {:?}",
            sol.iterations(),
            sol.errors.last().copied().unwrap_or(0.0),
            x_end.as_slice(),
            state.s.as_slice()
        );
        traj.steps.push(StepRecord {
            step,
            x_start: x.clone(),
            x_end: x_end.clone(),
            l: state.l.clone(),
            u: state.u.clone(),
            v: state.v.clone(),
            s: state.s.clone(),
            demand: d,
            iterations: sol.iterations(),
            converged: sol.converged,
            errors: sol.errors.clone(),
            residual: ResidualNorms {
                tank: r.tank_inf(),
                mass: r.mass_inf(),
                energy: r.energy_inf(),
            },
        });
        u_before = Some(state.u.clone());
        carried = Some(sol.iterate.shifted());
        x = x_end;
    }
    Ok(traj)
}

/// Per-step safety deficit `‖max(x^sf − x, 0)‖²` on the end-of-step heads
/// and control variation `ΔuᵀΔu` (cfs², zero at the first step).
pub fn evaluate_objectives(traj: &MpcTrajectory, x_sf: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gamma1 = traj
        .steps
        .iter()
        .map(|r| r.x_end.iter().zip(x_sf).map(|(x, sf)| (sf - x).max(0.0).powi(2)).sum())
        .collect();
    let gamma2 = traj
        .steps
        .iter()
        .enumerate()
        .map(|(k, r)| match k {
            0 => 0.0,
            _ => (&r.u - &traj.steps[k - 1].u).norm_squared(),
        })
        .collect();
    (gamma1, gamma2)
}
