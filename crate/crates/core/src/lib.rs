//! Geometric-programming based model predictive control for water
//! distribution networks.
//!
//! The nonconvex hydraulic model (tank dynamics, junction mass balance,
//! pipe head loss and pump head gain) is exponentiated into a geometric
//! program whose pipe and pump constants are frozen at the previous iterate.
//! Repeating the GP solve until the iterate settles gives a successive convex
//! approximation of one MPC window; [`mpc::run_mpc`] drives the receding
//! horizon loop on top of that.
//!
//! Module map:
//!
//! - [`network`]: typed graph, partitions and the constant DAE matrices.
//! - [`hydraulics`]: head loss laws, DAE residuals and a damped Newton
//!   water-flow solver used as an independent reference.
//! - [`gp`]: monomials, posynomials, the element-wise exponential operators,
//!   the log-space transform and a barrier solver.
//! - [`gp_model`]: per-window GP construction and the iterated constants.
//! - [`mpc`]: the SCA loop for one window and the receding-horizon driver.
//! - [`io`]: INP-subset reader, demand CSV and result files.
//! - [`sparse`]: the small CSR type behind the DAE matrices.

pub mod gp;
pub mod gp_model;
pub mod hydraulics;
pub mod io;
pub mod mpc;
pub mod network;
pub mod sparse;
pub mod units;

pub use nalgebra;

pub use gp::{GpProblem, GpSolution, Monomial, Posynomial, VarId};
pub use gp_model::{CoefficientSet, ModelConfig, WindowIterate, WindowProblem};
pub use hydraulics::{HydraulicState, ResistanceSpec};
pub use mpc::{MpcTrajectory, PlantMode, ScaConfig};
pub use network::{DaeMatrices, DemandPattern, Link, LinkKind, Network, Node, NodeKind};
pub use units::FlowUnit;
