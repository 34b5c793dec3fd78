//! Pipe and pump laws, tank dynamics, DAE residuals and a damped
//! Newton-Raphson solver for the water flow problem.
//!
//! Everything here works in ft, cfs and seconds.

use crate::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{DaeMatrices, LinkClass, Network, NodeClass};

/// Lowest admissible relative pump speed.
pub const S_MIN: f64 = 1e-3;

/// Flow regularization used only when assembling Jacobians (cfs).
pub const JACOBIAN_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicsError {
    #[error("pump speed {speed} is below the floor {S_MIN}")]
    DegeneratePumpState { speed: f64 },
    #[error("pump flow {flow} is negative")]
    NegativePumpFlow { flow: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("network has no tank or reservoir to fix the head")]
    NoFixedHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadlossFormula {
    HazenWilliams {
        c_hw: f64,
    },
    /// `friction_factor` is taken as constant; `roughness` is kept for reference.
    DarcyWeisbach {
        roughness: f64,
        friction_factor: f64,
    },
    ChezyManning {
        c_cm: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceSpec {
    /// Length (ft).
    pub length: f64,
    /// Diameter (ft).
    pub diameter: f64,
    pub formula: HeadlossFormula,
}

impl ResistanceSpec {
    pub fn hazen_williams(length: f64, diameter: f64, c_hw: f64) -> Self {
        ResistanceSpec {
            length,
            diameter,
            formula: HeadlossFormula::HazenWilliams { c_hw },
        }
    }

    pub fn darcy_weisbach(length: f64, diameter: f64, roughness: f64, friction_factor: f64) -> Self {
        ResistanceSpec {
            length,
            diameter,
            formula: HeadlossFormula::DarcyWeisbach {
                roughness,
                friction_factor,
            },
        }
    }

    pub fn chezy_manning(length: f64, diameter: f64, c_cm: f64) -> Self {
        ResistanceSpec {
            length,
            diameter,
            formula: HeadlossFormula::ChezyManning { c_cm },
        }
    }
}

/// Resistance coefficient `R` and flow exponent `μ` (ft/cfs units).
pub fn resistance_coefficient(spec: &ResistanceSpec) -> (f64, f64) {
    let (l, d) = (spec.length, spec.diameter);
    match spec.formula {
        HeadlossFormula::HazenWilliams { c_hw } => (4.727 * l * c_hw.powf(-1.852) * d.powf(-4.871), 1.852),
        HeadlossFormula::DarcyWeisbach { friction_factor, .. } => (0.0252 * l * friction_factor * d.powi(-5), 2.0),
        HeadlossFormula::ChezyManning { c_cm } => (4.66 * l * c_cm * c_cm * d.powf(-5.33), 2.0),
    }
}

/// Head drop `h_i − h_j = R q |q|^(μ−1)` along a pipe.
pub fn pipe_headloss(q: f64, r: f64, mu: f64) -> f64 {
    r * q * q.abs().powf(mu - 1.0)
}

/// Exact derivative of [`pipe_headloss`] with respect to `q`.
pub fn pipe_headloss_derivative(q: f64, r: f64, mu: f64) -> f64 {
    mu * r * q.abs().powf(mu - 1.0)
}

fn pipe_headloss_derivative_regularized(q: f64, r: f64, mu: f64) -> f64 {
    mu * r * (q * q + JACOBIAN_EPS * JACOBIAN_EPS).powf(0.5 * (mu - 1.0))
}

/// Head delivered by a pump, `h_j − h_i = s²(h0 − r (q/s)^ν)`.
///
/// `q` must be in the units the curve coefficient `r` was fitted in.
pub fn pump_headgain(q: f64, s: f64, h0: f64, r: f64, nu: f64) -> Result<f64, HydraulicsError> {
    if !(s >= S_MIN) {
        return Err(HydraulicsError::DegeneratePumpState { speed: s });
    }
    if q < 0.0 {
        return Err(HydraulicsError::NegativePumpFlow { flow: q });
    }
    Ok(pump_gain_unchecked(q, s, h0, r, nu))
}

/// Pump gain with the flow term extended oddly to `q < 0`.
fn pump_gain_unchecked(q: f64, s: f64, h0: f64, r: f64, nu: f64) -> f64 {
    if q == 0.0 {
        return s * s * h0;
    }
    s * s * h0 - r * q.signum() * q.abs().powf(nu) * s.powf(2.0 - nu)
}

fn pump_gain_derivative_regularized(q: f64, s: f64, r: f64, nu: f64) -> f64 {
    -nu * r * (q * q + JACOBIAN_EPS * JACOBIAN_EPS).powf(0.5 * (nu - 1.0)) * s.powf(2.0 - nu)
}

/// One explicit step of the tank mass balance.
pub fn tank_step(h: f64, inflows: &[f64], outflows: &[f64], dt: f64, area: f64) -> f64 {
    let net: f64 = inflows.iter().sum::<f64>() - outflows.iter().sum::<f64>();
    h + dt / area * net
}

/// One time step of network state.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    /// Tank heads (ft).
    pub x: DVector<f64>,
    /// Junction heads (ft).
    pub l: DVector<f64>,
    /// Pump flows (cfs).
    pub u: DVector<f64>,
    /// Pipe flows (cfs).
    pub v: DVector<f64>,
    /// Relative pump speeds.
    pub s: DVector<f64>,
}

impl HydraulicState {
    pub fn zeros(net: &Network) -> Self {
        HydraulicState {
            x: DVector::zeros(net.n_tanks()),
            l: DVector::zeros(net.n_junctions()),
            u: DVector::zeros(net.n_pumps()),
            v: DVector::zeros(net.n_pipes()),
            s: DVector::zeros(net.n_pumps()),
        }
    }

    /// Head of node `i` given fixed reservoir heads.
    pub fn node_head(&self, net: &Network, i: usize) -> f64 {
        match net.node_slot(i) {
            (NodeClass::Junction, j) => self.l[j],
            (NodeClass::Tank, t) => self.x[t],
            (NodeClass::Reservoir, r) => net.reservoir_head(r),
        }
    }

    /// Flow of link `i` (cfs).
    pub fn link_flow(&self, net: &Network, i: usize) -> f64 {
        match net.link_slot(i) {
            (LinkClass::Pipe, p) => self.v[p],
            (LinkClass::Pump, m) => self.u[m],
        }
    }

    fn check(&self, net: &Network) -> Result<(), HydraulicsError> {
        let dims = [
            ("x", net.n_tanks(), self.x.len()),
            ("l", net.n_junctions(), self.l.len()),
            ("u", net.n_pumps(), self.u.len()),
            ("v", net.n_pipes(), self.v.len()),
            ("s", net.n_pumps(), self.s.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(HydraulicsError::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }
}

/// Residuals of the three DAE blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeResidual {
    /// ft
    pub tank: DVector<f64>,
    /// cfs
    pub mass: DVector<f64>,
    /// ft, pipes first then pumps
    pub energy: DVector<f64>,
}

impl DaeResidual {
    pub fn tank_inf(&self) -> f64 {
        self.tank.amax()
    }

    pub fn mass_inf(&self) -> f64 {
        self.mass.amax()
    }

    pub fn energy_inf(&self) -> f64 {
        self.energy.amax()
    }
}

fn spmv(m: &CsrMatrix, x: &DVector<f64>) -> DVector<f64> {
    m.mul_vec(x)
}

/// Head differences `h_from − h_to` for every link (pipes then pumps).
fn link_head_drops(mats: &DaeMatrices, x: &DVector<f64>, l: &DVector<f64>, h_r: &DVector<f64>) -> DVector<f64> {
    spmv(&mats.e_x, x) + spmv(&mats.e_l, l) + spmv(&mats.e_r, h_r)
}

/// Residuals of the DAE model at step `k`, given the next tank heads and
/// the step's demands (cfs).
pub fn dae_residual(
    net: &Network,
    mats: &DaeMatrices,
    state: &HydraulicState,
    x_next: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<DaeResidual, HydraulicsError> {
    state.check(net)?;
    if x_next.len() != net.n_tanks() {
        return Err(HydraulicsError::DimensionMismatch {
            what: "x_next",
            expected: net.n_tanks(),
            got: x_next.len(),
        });
    }
    if d.len() != net.n_junctions() {
        return Err(HydraulicsError::DimensionMismatch {
            what: "d",
            expected: net.n_junctions(),
            got: d.len(),
        });
    }

    let tank = x_next - spmv(&mats.a, &state.x) - spmv(&mats.b_u, &state.u) - spmv(&mats.b_v, &state.v);
    let mass = spmv(&mats.e_u, &state.u) + spmv(&mats.e_v, &state.v) + spmv(&mats.e_d, d);

    let h_r = DVector::from_vec(net.reservoir_heads());
    let mut energy = link_head_drops(mats, &state.x, &state.l, &h_r);
    let np = net.n_pipes();
    for p in 0..np {
        let (r, mu) = resistance_coefficient(net.pipe_spec(p));
        energy[p] -= pipe_headloss(state.v[p], r, mu);
    }
    for m in 0..net.n_pumps() {
        let curve = net.pump_curve(m);
        energy[np + m] += pump_gain_unchecked(
            state.u[m],
            state.s[m],
            curve.shutoff_head,
            curve.coefficient_cfs(),
            curve.exponent,
        );
    }
    Ok(DaeResidual { tank, mass, energy })
}

/// Quantities held fixed while solving the water flow problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedData {
    /// Tank heads (ft).
    pub tank_heads: DVector<f64>,
    /// Pump relative speeds.
    pub speeds: DVector<f64>,
    /// Junction demands (cfs).
    pub demands: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
        }
    }
}

/// Unknowns of the water flow problem, stacked as `[l; v; u]`.
fn unpack(net: &Network, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (nj, np, nm) = (net.n_junctions(), net.n_pipes(), net.n_pumps());
    (
        z.rows(0, nj).into_owned(),
        z.rows(nj, np).into_owned(),
        z.rows(nj + np, nm).into_owned(),
    )
}

/// Residual of the water flow problem at `z = [l; v; u]`: mass rows then
/// energy rows.
pub fn wfp_residual(net: &Network, mats: &DaeMatrices, fixed: &FixedData, z: &DVector<f64>) -> DVector<f64> {
    let (l, v, u) = unpack(net, z);
    let state = HydraulicState {
        x: fixed.tank_heads.clone(),
        l,
        u,
        v,
        s: fixed.speeds.clone(),
    };
    let mass = spmv(&mats.e_u, &state.u) + spmv(&mats.e_v, &state.v) + spmv(&mats.e_d, &fixed.demands);
    let h_r = DVector::from_vec(net.reservoir_heads());
    let mut energy = link_head_drops(mats, &state.x, &state.l, &h_r);
    let np = net.n_pipes();
    for p in 0..np {
        let (r, mu) = resistance_coefficient(net.pipe_spec(p));
        energy[p] -= pipe_headloss(state.v[p], r, mu);
    }
    for m in 0..net.n_pumps() {
        let c = net.pump_curve(m);
        energy[np + m] += pump_gain_unchecked(state.u[m], state.s[m], c.shutoff_head, c.coefficient_cfs(), c.exponent);
    }
    let mut out = DVector::zeros(mass.len() + energy.len());
    out.rows_mut(0, mass.len()).copy_from(&mass);
    out.rows_mut(mass.len(), energy.len()).copy_from(&energy);
    out
}

/// Jacobian of [`wfp_residual`]; flow powers use the `ε`-regularized form.
pub fn wfp_jacobian(net: &Network, mats: &DaeMatrices, fixed: &FixedData, z: &DVector<f64>) -> DMatrix<f64> {
    let (nj, np, nm) = (net.n_junctions(), net.n_pipes(), net.n_pumps());
    let n = nj + np + nm;
    let mut jac = DMatrix::zeros(n, n);
    let (_, v, u) = unpack(net, z);

    let mut scatter = |m: &CsrMatrix, row0: usize, col0: usize| {
        for (i, row) in m.row_iter().enumerate() {
            for (&j, &a) in row.col_indices().iter().zip(row.values()) {
                jac[(row0 + i, col0 + j)] += a;
            }
        }
    };
    scatter(&mats.e_v, 0, nj);
    scatter(&mats.e_u, 0, nj + np);
    scatter(&mats.e_l, nj, 0);

    for p in 0..np {
        let (r, mu) = resistance_coefficient(net.pipe_spec(p));
        jac[(nj + p, nj + p)] -= pipe_headloss_derivative_regularized(v[p], r, mu);
    }
    for m in 0..nm {
        let c = net.pump_curve(m);
        jac[(nj + np + m, nj + np + m)] +=
            pump_gain_derivative_regularized(u[m], fixed.speeds[m], c.coefficient_cfs(), c.exponent);
    }
    jac
}

/// A starting point for Newton: junction heads at the mean fixed head,
/// small positive flows.
fn initial_point(net: &Network, fixed: &FixedData) -> DVector<f64> {
    let (nj, np, nm) = (net.n_junctions(), net.n_pipes(), net.n_pumps());
    let fixed_heads: Vec<f64> = fixed.tank_heads.iter().copied().chain(net.reservoir_heads()).collect();
    let mean = fixed_heads.iter().sum::<f64>() / fixed_heads.len().max(1) as f64;
    let mut z = DVector::zeros(nj + np + nm);
    z.rows_mut(0, nj).fill(mean);
    z.rows_mut(nj, np).fill(0.1);
    z.rows_mut(nj + np, nm).fill(0.1);
    z
}

/// Solve mass and energy balance for junction heads and link flows with
/// tank heads, reservoir heads and pump speeds fixed.
pub fn solve_wfp_newton(
    net: &Network,
    mats: &DaeMatrices,
    fixed: &FixedData,
    opts: &NewtonOptions,
) -> Result<HydraulicState, HydraulicsError> {
    if net.n_tanks() + net.n_reservoirs() == 0 {
        return Err(HydraulicsError::NoFixedHead);
    }
    for (what, expected, got) in [
        ("tank_heads", net.n_tanks(), fixed.tank_heads.len()),
        ("speeds", net.n_pumps(), fixed.speeds.len()),
        ("demands", net.n_junctions(), fixed.demands.len()),
    ] {
        if expected != got {
            return Err(HydraulicsError::DimensionMismatch { what, expected, got });
        }
    }
    if let Some(&s) = fixed.speeds.iter().find(|&&s| !(s >= S_MIN)) {
        return Err(HydraulicsError::DegeneratePumpState { speed: s });
    }

    let mut z = initial_point(net, fixed);
    let mut res = wfp_residual(net, mats, fixed, &z);
    let mut norm = res.amax();
    let mut iterations = 0;
    while norm > opts.tol {
        if iterations == opts.max_iter {
            return Err(HydraulicsError::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let jac = wfp_jacobian(net, mats, fixed, &z);
        let step = jac
            .lu()
            .solve(&(-&res))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(HydraulicsError::SingularJacobian { iteration: iterations })?;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &z + alpha * &step;
            let trial_res = wfp_residual(net, mats, fixed, &trial);
            let trial_norm = trial_res.norm();
            if trial_norm.is_finite() && trial_norm < res.norm() {
                z = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Stalled at roundoff level counts as converged only if within tol.
            if norm <= opts.tol {
                break;
            }
            return Err(HydraulicsError::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        norm = res.amax();
    }
    log::debug!("wfp converged in {iterations} iterations, residual {norm:.2e}");

    let (l, v, u) = unpack(net, &z);
    Ok(HydraulicState {
        x: fixed.tank_heads.clone(),
        l,
        u,
        v,
        s: fixed.speeds.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, incidence_matrices, DemandPattern, Link, Node, PumpCurve};
    use crate::units::FlowUnit;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hazen_williams_coefficient() {
        let (r, mu) = resistance_coefficient(&ResistanceSpec::hazen_williams(1000.0, 1.0, 100.0));
        // 4727 * exp(-1.852 ln 100)
        let oracle = 4727.0 * (-1.852 * 100f64.ln()).exp();
        assert_relative_eq!(r, oracle, max_relative = 1e-12);
        assert!((r - 0.9346).abs() < 1e-4);
        assert_eq!(mu, 1.852);
    }

    #[test]
    fn chezy_manning_and_darcy() {
        let (r, mu) = resistance_coefficient(&ResistanceSpec::chezy_manning(1.0, 1.0, 1.0));
        assert_relative_eq!(r, 4.66);
        assert_eq!(mu, 2.0);
        let (r, mu) = resistance_coefficient(&ResistanceSpec::darcy_weisbach(1.0, 1.0, 0.0, 1.0 / 0.0252));
        assert_relative_eq!(r, 1.0, max_relative = 1e-12);
        assert_eq!(mu, 2.0);
    }

    #[test]
    fn headloss_examples() {
        assert_eq!(pipe_headloss(1.0, 10.0, 1.852), 10.0);
        assert_eq!(pipe_headloss(-1.0, 10.0, 1.852), -10.0);
        let oracle = (1.852 * 2f64.ln()).exp();
        assert_relative_eq!(pipe_headloss(2.0, 1.0, 1.852), oracle, max_relative = 1e-12);
        assert!((oracle - 3.611).abs() < 1e-3);
    }

    #[test]
    fn pump_examples() {
        assert_eq!(pump_headgain(0.0, 1.0, 393.7, 3.7e-6, 2.59).unwrap(), 393.7);
        assert_relative_eq!(
            pump_headgain(0.0, 0.5, 393.7, 3.7e-6, 2.59).unwrap(),
            98.425,
            max_relative = 1e-12
        );
        let g = pump_headgain(1000.0, 1.0, 393.7, 3.7e-6, 2.59).unwrap();
        let oracle = 393.7 - 3.7e-6 * (2.59 * 1000f64.ln()).exp();
        assert_relative_eq!(g, oracle, max_relative = 1e-12);
        assert!((g - 175.8).abs() < 0.1, "{g}");
        assert!(matches!(
            pump_headgain(1.0, 1e-4, 393.7, 3.7e-6, 2.59),
            Err(HydraulicsError::DegeneratePumpState { .. })
        ));
        assert!(pump_headgain(-1.0, 1.0, 393.7, 3.7e-6, 2.59).is_err());
    }

    #[test]
    fn tank_step_examples() {
        assert_eq!(tank_step(834.0, &[2.0], &[2.0], 3600.0, 3600.0), 834.0);
        assert_eq!(tank_step(834.0, &[1.0], &[], 3600.0, 3600.0), 835.0);
        assert_eq!(
            tank_step(834.0, &[1.5, 0.5], &[0.5, 1.5], 3600.0, 100.0),
            tank_step(834.0, &[], &[], 3600.0, 100.0)
        );
    }

    proptest! {
        #[test]
        fn headloss_is_odd_and_increasing(q in 0.0f64..50.0, dq in 1e-3f64..5.0, r in 0.01f64..100.0) {
            let mu = 1.852;
            prop_assert_eq!(pipe_headloss(-q, r, mu), -pipe_headloss(q, r, mu));
            prop_assert!(pipe_headloss(q + dq, r, mu) > pipe_headloss(q, r, mu));
        }

        #[test]
        fn headloss_derivative_matches_fd(q in 0.1f64..10.0, r in 0.01f64..100.0, mu in prop::sample::select(vec![1.852, 2.0])) {
            let h = 1e-5 * q;
            let fd = (pipe_headloss(q + h, r, mu) - pipe_headloss(q - h, r, mu)) / (2.0 * h);
            let d = pipe_headloss_derivative(q, r, mu);
            prop_assert!((fd - d).abs() <= 1e-6 * d.abs(), "fd {} vs {}", fd, d);
        }

        #[test]
        fn tank_step_conserves_volume(h in 800.0f64..900.0, qi in 0.0f64..10.0, qo in 0.0f64..10.0, area in 10.0f64..1e4) {
            let dt = 3600.0;
            let next = tank_step(h, &[qi], &[qo], dt, area);
            let lhs = area * (next - h);
            let rhs = dt * (qi - qo);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()) + 1e-9 * area * h);
        }
    }

    fn fixed(net: &Network, speeds: Vec<f64>, demands: Vec<f64>) -> FixedData {
        FixedData {
            tank_heads: DVector::from_vec(net.initial_tank_heads()),
            speeds: DVector::from_vec(speeds),
            demands: DVector::from_vec(demands),
        }
    }

    /// A pipe with R = 1 exactly (Darcy-Weisbach with μ tweaked is not
    /// available, so use HW geometry solved for R = 1).
    fn unit_hw_spec() -> ResistanceSpec {
        // R = 4.727 L C^-1.852 D^-4.871 = 1 with C = 100, D = 1.
        let l = 1.0 / (4.727 * 100f64.powf(-1.852));
        ResistanceSpec::hazen_williams(l, 1.0, 100.0)
    }

    #[test]
    fn newton_series_network() {
        let mut p = DemandPattern::new();
        p.insert("J", vec![1.0]);
        let net = build_network(
            vec![Node::reservoir("R", 700.0), Node::junction("J", 600.0)],
            vec![Link::pipe("P", "R", "J", unit_hw_spec(), 10.0)],
            &p,
        )
        .unwrap();
        let mats = incidence_matrices(&net, 3600.0).unwrap();
        let st = solve_wfp_newton(&net, &mats, &fixed(&net, vec![], vec![1.0]), &NewtonOptions::default()).unwrap();
        assert_relative_eq!(st.v[0], 1.0, max_relative = 1e-8);
        assert_relative_eq!(st.l[0], 699.0, max_relative = 1e-10);
    }

    #[test]
    fn newton_no_flow_equilibrium() {
        let net = build_network(
            vec![
                Node::reservoir("R", 700.0),
                Node::junction("A", 600.0),
                Node::junction("B", 600.0),
            ],
            vec![
                Link::pipe("1", "R", "A", ResistanceSpec::hazen_williams(1000.0, 1.0, 100.0), 10.0),
                Link::pipe("2", "A", "B", ResistanceSpec::hazen_williams(500.0, 0.5, 120.0), 10.0),
            ],
            &DemandPattern::new(),
        )
        .unwrap();
        let mats = incidence_matrices(&net, 3600.0).unwrap();
        let st = solve_wfp_newton(
            &net,
            &mats,
            &fixed(&net, vec![], vec![0.0, 0.0]),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(st.v.amax() < 1e-6);
        assert!((st.l[0] - 700.0).abs() < 1e-8 && (st.l[1] - 700.0).abs() < 1e-8);
    }

    #[test]
    fn newton_parallel_pipes_split_evenly() {
        let spec = ResistanceSpec::hazen_williams(1000.0, 1.0, 100.0);
        let net = build_network(
            vec![Node::reservoir("R", 700.0), Node::junction("J", 600.0)],
            vec![
                Link::pipe("1", "R", "J", spec, 10.0),
                Link::pipe("2", "R", "J", spec, 10.0),
            ],
            &DemandPattern::new(),
        )
        .unwrap();
        let mats = incidence_matrices(&net, 3600.0).unwrap();
        let st = solve_wfp_newton(&net, &mats, &fixed(&net, vec![], vec![2.0]), &NewtonOptions::default()).unwrap();
        assert_relative_eq!(st.v[0], 1.0, max_relative = 1e-8);
        assert_relative_eq!(st.v[1], 1.0, max_relative = 1e-8);
    }

    fn pumped_net(reverse_pipe: bool) -> Network {
        let (from, to) = if reverse_pipe { ("T", "J") } else { ("J", "T") };
        build_network(
            vec![
                Node::reservoir("R", 700.0),
                Node::junction("J", 700.0),
                Node::tank(
                    "T",
                    830.0,
                    crate::network::Tank {
                        area: 1000.0,
                        initial_head: 834.0,
                        head_min: 830.0,
                        head_max: 850.0,
                        safety_head: 838.0,
                    },
                ),
            ],
            vec![
                Link::pump(
                    "M",
                    "R",
                    "J",
                    PumpCurve {
                        shutoff_head: 393.7,
                        coefficient: 3.7e-6,
                        exponent: 2.59,
                        flow_unit: FlowUnit::Gpm,
                    },
                    10.0,
                ),
                Link::pipe("P", from, to, ResistanceSpec::hazen_williams(5000.0, 1.0, 100.0), 10.0),
            ],
            &DemandPattern::new(),
        )
        .unwrap()
    }

    #[test]
    fn newton_residuals_and_orientation_invariance() {
        let opts = NewtonOptions::default();
        let a = pumped_net(false);
        let b = pumped_net(true);
        let ma = incidence_matrices(&a, 3600.0).unwrap();
        let mb = incidence_matrices(&b, 3600.0).unwrap();
        let sa = solve_wfp_newton(&a, &ma, &fixed(&a, vec![0.8], vec![0.5]), &opts).unwrap();
        let sb = solve_wfp_newton(&b, &mb, &fixed(&b, vec![0.8], vec![0.5]), &opts).unwrap();
        assert_relative_eq!(sa.v[0], -sb.v[0], max_relative = 1e-8);
        assert_relative_eq!(sa.l[0], sb.l[0], max_relative = 1e-10);
        assert!(sa.u[0] > 0.0);

        let res = dae_residual(&a, &ma, &sa, &sa.x, &DVector::from_vec(vec![0.5])).unwrap();
        assert!(res.mass_inf() <= 1e-6 && res.energy_inf() <= 1e-6);
    }

    #[test]
    fn dae_residual_constructive_and_linear() {
        let net = pumped_net(false);
        let mats = incidence_matrices(&net, 3600.0).unwrap();
        let st = solve_wfp_newton(
            &net,
            &mats,
            &fixed(&net, vec![1.0], vec![0.2]),
            &NewtonOptions::default(),
        )
        .unwrap();
        let t = net.tank(0);
        let x_next = DVector::from_element(1, tank_step(st.x[0], &[st.v[0]], &[], 3600.0, t.area));
        let d = DVector::from_vec(vec![0.2]);
        let res = dae_residual(&net, &mats, &st, &x_next, &d).unwrap();
        assert!(res.tank_inf() < 1e-9 && res.mass_inf() < 1e-8 && res.energy_inf() < 1e-8);

        let mut perturbed = st.clone();
        perturbed.v[0] += 0.25;
        let res2 = dae_residual(&net, &mats, &perturbed, &x_next, &d).unwrap();
        // pipe J -> T leaves junction J
        assert_relative_eq!(res2.mass[0] - res.mass[0], -0.25, max_relative = 1e-12);
    }

    #[test]
    fn dae_residual_checks_dimensions() {
        let net = pumped_net(false);
        let mats = incidence_matrices(&net, 3600.0).unwrap();
        let st = HydraulicState::zeros(&net);
        let err = dae_residual(&net, &mats, &st, &DVector::zeros(1), &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, HydraulicsError::DimensionMismatch { what: "d", .. }));
    }
}
