//! One MPC window written as a geometric program.
//!
//! Every model quantity `q` becomes a GP variable `q̂ = b^q`, so linear
//! relations in `q` are monomial equalities in `q̂`. Pipe and pump laws are
//! linearized in the exponent by constants frozen at the previous iterate
//! ([`CoefficientSet`]). Heads are in ft; flows inside the GP are expressed
//! in [`ModelConfig::flow_unit`] while everything crossing this module's
//! boundary stays in cfs.

use nalgebra::DVector;
use thiserror::Error;

use crate::gp::{GpError, GpProblem, Monomial, Posynomial, VarId};
use crate::hydraulics::{resistance_coefficient, S_MIN};
use crate::network::{DaeMatrices, Network, NodeClass};
use crate::units::FlowUnit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("pump speed {speed} is below the floor {S_MIN}")]
    DegeneratePumpState { speed: f64 },
    #[error("pump flow {flow} is negative")]
    NegativePumpFlow { flow: f64 },
    #[error("exponent {value:.3e} in {what} exceeds the representable range; use smaller flow units")]
    ExponentOverflow { what: String, value: f64 },
    #[error("empty box for {what}: min {min} > max {max}")]
    InfeasibleBoxBounds { what: String, min: f64, max: f64 },
    #[error("decoded value {value} of variable {index} is not positive")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("window data: {0}")]
    WindowData(String),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// How the safety objective is attached to tank heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafetyMode {
    /// `ẑ = x̂^sf / x̂` wherever the previous iterate is below the safety
    /// head, `ẑ = 1` elsewhere.
    Activated,
    /// As `Activated`, plus `ẑ ≥ 1` on active steps (caps the head at the
    /// safety level while active).
    ActivatedCapped,
    /// `ẑ ≥ 1` and `ẑ ≥ x̂^sf / x̂` on every step; no activation needed.
    Epigraph,
    /// As `Activated`, but the term on `x(k+1)` is switched by the head at
    /// the start of step `k`. For the first step that head is measured, so
    /// its activation never changes between iterations.
    Lagged,
}

impl std::str::FromStr for SafetyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "activated" => Ok(SafetyMode::Activated),
            "capped" => Ok(SafetyMode::ActivatedCapped),
            "epigraph" => Ok(SafetyMode::Epigraph),
            "lagged" => Ok(SafetyMode::Lagged),
            other => Err(format!("unknown safety mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub base: f64,
    /// Flow unit of the GP variables.
    pub flow_unit: FlowUnit,
    pub safety_mode: SafetyMode,
    /// Exponent multiplier on `ẑ`.
    pub safety_weight: f64,
    /// Weight of `Δuᵀ Δu` with `Δu` in cfs.
    pub smoothness_weight: f64,
    /// Emit the `Γ̂2 ≥ 1` constraint.
    pub smoothness_lower_bound: bool,
    /// Keep junction heads at or above their elevation.
    pub junction_head_floor: bool,
    /// Fix every pump speed to the given values.
    pub pinned_speeds: Option<Vec<f64>>,
    /// A tank counts as below its safety head when `x ≤ x^sf + tol`.
    pub activation_tol: f64,
    /// Weight `ρ` of the speed proximal term
    /// `ρ (e^{σ(s − s_prev)} + e^{σ(s_prev − s)})`; zero disables it.
    pub proximal_weight: f64,
    /// Scale `σ` of the proximal term, per unit speed.
    pub proximal_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base: 1.005,
            flow_unit: FlowUnit::Gpm,
            safety_mode: SafetyMode::Lagged,
            safety_weight: 1.0,
            smoothness_weight: 1.0,
            smoothness_lower_bound: false,
            junction_head_floor: true,
            pinned_speeds: None,
            activation_tol: 1e-6,
            proximal_weight: 0.01,
            proximal_scale: 5.0,
        }
    }
}

impl ModelConfig {
    /// cfs per GP flow unit.
    pub fn kappa(&self) -> f64 {
        self.flow_unit.cfs_per_unit()
    }

    fn exponent_limit(&self) -> f64 {
        700.0 / self.base.ln()
    }
}

fn guard(what: impl FnOnce() -> String, value: f64, limit: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value.abs() <= limit {
        Ok(value)
    } else {
        Err(ModelError::ExponentOverflow { what: what(), value })
    }
}

/// `log_b C^P = q (R |q|^{μ−1} − 1)` in whatever flow unit `R` is given in.
pub fn pipe_coefficient_exponent(q_prev: f64, r: f64, mu: f64) -> f64 {
    q_prev * (r * q_prev.abs().powf(mu - 1.0) - 1.0)
}

/// The frozen pipe constant `C^P = b^{q(R|q|^{μ−1} − 1)}`.
pub fn pipe_coefficient(q_prev: f64, r: f64, mu: f64, b: f64) -> Result<f64, ModelError> {
    let e = guard(
        || "C^P".into(),
        pipe_coefficient_exponent(q_prev, r, mu),
        700.0 / b.ln(),
    )?;
    Ok(b.powf(e))
}

/// The frozen pump constants `(C1, C2) = (−s h0, r q^{ν−1} s^{2−ν})`.
pub fn pump_coefficients(q_prev: f64, s_prev: f64, h0: f64, r: f64, nu: f64) -> Result<(f64, f64), ModelError> {
    if !(s_prev >= S_MIN) {
        return Err(ModelError::DegeneratePumpState { speed: s_prev });
    }
    if q_prev < 0.0 {
        return Err(ModelError::NegativePumpFlow { flow: q_prev });
    }
    Ok((-s_prev * h0, r * q_prev.powf(nu - 1.0) * s_prev.powf(2.0 - nu)))
}

/// Per-step values of the window variables in model units (ft, cfs).
///
/// Index `k` runs over the window steps; `x[k]` holds the tank heads at the
/// end of step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowIterate {
    pub x: Vec<DVector<f64>>,
    pub l: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
}

impl WindowIterate {
    pub fn horizon(&self) -> usize {
        self.x.len()
    }

    /// `log_b` of the hat variables `[x̂(k+1), l̂, û, v̂, ŝ]` for every step,
    /// flows in the GP unit.
    pub fn log_vector(&self, cfg: &ModelConfig) -> Vec<f64> {
        let kappa = cfg.kappa();
        let mut out = Vec::new();
        for k in 0..self.horizon() {
            out.extend(self.x[k].iter());
            out.extend(self.l[k].iter());
            out.extend(self.u[k].iter().map(|q| q / kappa));
            out.extend(self.v[k].iter().map(|q| q / kappa));
            out.extend(self.s[k].iter());
        }
        out
    }

    /// Hat-space image `b^ξ`.
    pub fn encode(&self, cfg: &ModelConfig) -> Vec<f64> {
        self.log_vector(cfg).into_iter().map(|y| cfg.base.powf(y)).collect()
    }

    /// Inverse of [`encode`](Self::encode) for a window of the given shape.
    pub fn decode(hat: &[f64], net: &Network, hp: usize, cfg: &ModelConfig) -> Result<WindowIterate, ModelError> {
        let ln_b = cfg.base.ln();
        let y = hat
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 && v.is_finite() {
                    Ok(v.ln() / ln_b)
                } else {
                    Err(ModelError::NonPositiveValue { index: i, value: v })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let per = net.n_tanks() + net.n_junctions() + 2 * net.n_pumps() + net.n_pipes();
        if y.len() != per * hp {
            return Err(ModelError::WindowData(format!(
                "hat vector has {} entries, expected {}",
                y.len(),
                per * hp
            )));
        }
        let kappa = cfg.kappa();
        let (nt, nj, nm, np) = (net.n_tanks(), net.n_junctions(), net.n_pumps(), net.n_pipes());
        let mut it = WindowIterate::empty();
        for k in 0..hp {
            let mut o = k * per;
            let mut take = |n: usize, scale: f64| {
                let v = DVector::from_iterator(n, y[o..o + n].iter().map(|v| v * scale));
                o += n;
                v
            };
            it.x.push(take(nt, 1.0));
            it.l.push(take(nj, 1.0));
            it.u.push(take(nm, kappa));
            it.v.push(take(np, kappa));
            it.s.push(take(nm, 1.0));
        }
        Ok(it)
    }

    fn empty() -> Self {
        WindowIterate {
            x: Vec::new(),
            l: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            s: Vec::new(),
        }
    }

    /// Shift by one step, repeating the last step at the end.
    pub fn shifted(&self) -> WindowIterate {
        fn shift(v: &[DVector<f64>]) -> Vec<DVector<f64>> {
            let mut out: Vec<_> = v.iter().skip(1).cloned().collect();
            if let Some(last) = v.last() {
                out.push(last.clone());
            }
            out
        }
        WindowIterate {
            x: shift(&self.x),
            l: shift(&self.l),
            u: shift(&self.u),
            v: shift(&self.v),
            s: shift(&self.s),
        }
    }
}

/// Euclidean distance between two iterates in hat space.
pub fn hat_distance(a: &WindowIterate, b: &WindowIterate, cfg: &ModelConfig) -> f64 {
    a.encode(cfg)
        .iter()
        .zip(b.encode(cfg))
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Constants frozen at the previous iterate.
///
/// Flow-dependent entries are stored in the GP flow unit of the config
/// they were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub base: f64,
    /// `log_b C^P` per step and pipe.
    pub cp_exponent: Vec<DVector<f64>>,
    /// `C1^M` per step and pump.
    pub f_s: Vec<DVector<f64>>,
    /// `C2^M` per step and pump.
    pub f_u: Vec<DVector<f64>>,
    /// Tanks below their safety head at the previous iterate.
    pub active: Vec<Vec<bool>>,
    /// `u(k) − u(k−1)` in cfs at the previous iterate.
    pub du_prev: Vec<DVector<f64>>,
    /// Pump speeds at the previous iterate.
    pub s_prev: Vec<DVector<f64>>,
}

impl CoefficientSet {
    /// `C^P` values per step and pipe.
    pub fn f_v(&self) -> Vec<DVector<f64>> {
        self.cp_exponent.iter().map(|e| e.map(|v| self.base.powf(v))).collect()
    }

    /// Recompute every constant from `it`. `x0` holds the tank heads at the
    /// window start and `u_before` the pump flows applied just before it.
    pub fn from_iterate(
        net: &Network,
        it: &WindowIterate,
        x0: &DVector<f64>,
        u_before: Option<&DVector<f64>>,
        cfg: &ModelConfig,
    ) -> Result<CoefficientSet, ModelError> {
        let kappa = cfg.kappa();
        let limit = cfg.exponent_limit();
        let pipes: Vec<(f64, f64)> = (0..net.n_pipes())
            .map(|p| {
                let (r, mu) = resistance_coefficient(net.pipe_spec(p));
                (r * kappa.powf(mu), mu)
            })
            .collect();
        let hp = it.horizon();
        let mut set = CoefficientSet {
            base: cfg.base,
            cp_exponent: Vec::with_capacity(hp),
            f_s: Vec::with_capacity(hp),
            f_u: Vec::with_capacity(hp),
            active: Vec::with_capacity(hp),
            du_prev: Vec::with_capacity(hp),
            s_prev: it.s.iter().map(|s| s.map(|v| v.clamp(S_MIN, 1.0))).collect(),
        };
        for k in 0..hp {
            let mut cp = DVector::zeros(net.n_pipes());
            for (p, &(r, mu)) in pipes.iter().enumerate() {
                let e = pipe_coefficient_exponent(it.v[k][p] / kappa, r, mu);
                cp[p] = guard(
                    || format!("C^P of pipe {} at step {k}", net.links()[net.pipes()[p]].id),
                    e,
                    limit,
                )?;
            }
            let mut c1 = DVector::zeros(net.n_pumps());
            let mut c2 = DVector::zeros(net.n_pumps());
            for m in 0..net.n_pumps() {
                let curve = net.pump_curve(m);
                // the GP keeps s ≥ S_MIN and q ≥ 0 only up to solver tolerance
                let s = it.s[k][m].max(S_MIN);
                let q = (it.u[k][m] / kappa).max(0.0);
                let (a, b) = pump_coefficients(
                    q,
                    s,
                    curve.shutoff_head,
                    curve.coefficient_in(cfg.flow_unit),
                    curve.exponent,
                )?;
                c1[m] = a;
                c2[m] = guard(
                    || format!("C2^M of pump {} at step {k}", net.links()[net.pumps()[m]].id),
                    b,
                    limit,
                )?;
            }
            set.cp_exponent.push(cp);
            set.f_s.push(c1);
            set.f_u.push(c2);
            set.active.push(
                (0..net.n_tanks())
                    .map(|t| {
                        let reference = match (cfg.safety_mode, k) {
                            (SafetyMode::Lagged, 0) => x0[t],
                            (SafetyMode::Lagged, _) => it.x[k - 1][t],
                            _ => it.x[k][t],
                        };
                        reference <= net.tank(t).safety_head + cfg.activation_tol
                    })
                    .collect(),
            );
            let du = match (k, u_before) {
                (0, Some(before)) => &it.u[0] - before,
                (0, None) => DVector::zeros(net.n_pumps()),
                _ => &it.u[k] - &it.u[k - 1],
            };
            set.du_prev.push(du);
        }
        Ok(set)
    }

    pub fn horizon(&self) -> usize {
        self.cp_exponent.len()
    }
}

/// Fixed data of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowData {
    /// Tank heads at the window start (ft).
    pub x0: DVector<f64>,
    /// Demands per step (cfs); at least `hp` entries.
    pub demands: Vec<DVector<f64>>,
    /// Pump flows applied in the step before the window (cfs).
    pub u_before: Option<DVector<f64>>,
}

/// Variable indices of a window GP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hp: usize,
    pub n_t: usize,
    pub n_j: usize,
    pub n_m: usize,
    pub n_p: usize,
}

impl Layout {
    pub fn new(net: &Network, hp: usize) -> Self {
        Layout {
            hp,
            n_t: net.n_tanks(),
            n_j: net.n_junctions(),
            n_m: net.n_pumps(),
            n_p: net.n_pipes(),
        }
    }

    /// Variables of `ξ̂` per step.
    pub fn core_per_step(&self) -> usize {
        self.n_t + self.n_j + 2 * self.n_m + self.n_p
    }

    /// Core plus auxiliaries `ẑ`, `p̂`.
    pub fn per_step(&self) -> usize {
        self.core_per_step() + self.n_t + self.n_m
    }

    pub fn n_vars(&self) -> usize {
        self.hp * self.per_step()
    }

    fn at(&self, k: usize, offset: usize) -> VarId {
        VarId(k * self.per_step() + offset)
    }

    pub fn x(&self, k: usize, t: usize) -> VarId {
        self.at(k, t)
    }

    pub fn l(&self, k: usize, j: usize) -> VarId {
        self.at(k, self.n_t + j)
    }

    pub fn u(&self, k: usize, m: usize) -> VarId {
        self.at(k, self.n_t + self.n_j + m)
    }

    pub fn v(&self, k: usize, p: usize) -> VarId {
        self.at(k, self.n_t + self.n_j + self.n_m + p)
    }

    pub fn s(&self, k: usize, m: usize) -> VarId {
        self.at(k, self.n_t + self.n_j + self.n_m + self.n_p + m)
    }

    pub fn z(&self, k: usize, t: usize) -> VarId {
        self.at(k, self.core_per_step() + t)
    }

    pub fn p(&self, k: usize, m: usize) -> VarId {
        self.at(k, self.core_per_step() + self.n_t + m)
    }

    /// Positions of the `ξ̂` variables, in [`WindowIterate::log_vector`] order.
    pub fn core_indices(&self) -> Vec<usize> {
        (0..self.hp)
            .flat_map(|k| (0..self.core_per_step()).map(move |o| k * self.per_step() + o))
            .collect()
    }
}

/// A window GP together with its layout.
#[derive(Debug, Clone)]
pub struct WindowProblem {
    pub gp: GpProblem,
    pub layout: Layout,
    /// Tank activation used for this build, per step.
    pub active: Vec<Vec<bool>>,
    kappa: f64,
}

impl WindowProblem {
    /// Decode a solution given as `log_b` values.
    pub fn decode_log(&self, y: &[f64]) -> WindowIterate {
        let lay = &self.layout;
        let mut it = WindowIterate::empty();
        for k in 0..lay.hp {
            it.x.push(DVector::from_fn(lay.n_t, |t, _| y[lay.x(k, t).0]));
            it.l.push(DVector::from_fn(lay.n_j, |j, _| y[lay.l(k, j).0]));
            it.u.push(DVector::from_fn(lay.n_m, |m, _| y[lay.u(k, m).0] * self.kappa));
            it.v.push(DVector::from_fn(lay.n_p, |p, _| y[lay.v(k, p).0] * self.kappa));
            it.s.push(DVector::from_fn(lay.n_m, |m, _| y[lay.s(k, m).0]));
        }
        it
    }

    /// Decode a solution given in hat space.
    pub fn decode(&self, hat: &[f64]) -> Result<WindowIterate, ModelError> {
        let ln_b = self.gp.base.ln();
        let y = hat
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 && v.is_finite() {
                    Ok(v.ln() / ln_b)
                } else {
                    Err(ModelError::NonPositiveValue { index: i, value: v })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.decode_log(&y))
    }

    /// Hat-space point for warm starting the solver from `it`. Auxiliaries
    /// are filled consistently with their defining equalities.
    pub fn warm_point(&self, it: &WindowIterate, data: &WindowData, net: &Network) -> Vec<f64> {
        let lay = &self.layout;
        let b = self.gp.base;
        let mut y = vec![0.0; lay.n_vars()];
        for k in 0..lay.hp {
            for t in 0..lay.n_t {
                y[lay.x(k, t).0] = it.x[k][t];
                y[lay.z(k, t).0] = (net.tank(t).safety_head - it.x[k][t]).max(1e-3);
            }
            for j in 0..lay.n_j {
                y[lay.l(k, j).0] = it.l[k][j];
            }
            for m in 0..lay.n_m {
                y[lay.u(k, m).0] = it.u[k][m] / self.kappa;
                y[lay.s(k, m).0] = it.s[k][m];
                let before = match k {
                    0 => data.u_before.as_ref().map(|u| u[m]),
                    _ => Some(it.u[k - 1][m]),
                };
                y[lay.p(k, m).0] = before.map_or(0.0, |u0| (it.u[k][m] - u0) / self.kappa);
            }
            for p in 0..lay.n_p {
                y[lay.v(k, p).0] = it.v[k][p] / self.kappa;
            }
        }
        y.into_iter().map(|v| b.powf(v)).collect()
    }
}

/// `Π ẑ_i^w` over the given auxiliaries.
pub fn safety_objective(z: &[VarId], weight: f64) -> Posynomial {
    Monomial::from_ln(0.0, z.iter().map(|&v| (v, weight)).collect()).into()
}

/// `Π p̂_i^{e_i}` with exponents frozen at the previous iterate.
pub fn smoothness_objective(p: &[VarId], exponents: &[f64]) -> Posynomial {
    Monomial::from_ln(0.0, p.iter().zip(exponents).map(|(&v, &e)| (v, e)).collect())
        .simplified()
        .into()
}

/// Accumulates `Σ a_i y_i + c` and turns `= 0` / `≤ 0` into GP constraints.
struct Row {
    exps: Vec<(VarId, f64)>,
    constant: f64,
}

impl Row {
    fn new() -> Self {
        Row {
            exps: Vec::new(),
            constant: 0.0,
        }
    }

    fn var(mut self, v: VarId, a: f64) -> Self {
        self.exps.push((v, a));
        self
    }

    fn konst(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    fn monomial(self, ln_b: f64, limit: f64, what: &dyn Fn() -> String) -> Result<Monomial, ModelError> {
        guard(what, self.constant, limit)?;
        for &(_, a) in &self.exps {
            guard(what, a, limit)?;
        }
        Ok(Monomial::from_ln(self.constant * ln_b, self.exps).simplified())
    }
}

/// Head of node `i` at step `k` added to `row` with sign `sign`.
fn add_head(row: Row, net: &Network, lay: &Layout, x0: &DVector<f64>, node: usize, k: usize, sign: f64) -> Row {
    match net.node_slot(node) {
        (NodeClass::Junction, j) => row.var(lay.l(k, j), sign),
        (NodeClass::Tank, t) if k == 0 => row.konst(sign * x0[t]),
        (NodeClass::Tank, t) => row.var(lay.x(k - 1, t), sign),
        (NodeClass::Reservoir, r) => row.konst(sign * net.reservoir_head(r)),
    }
}

/// Assemble the GP for one window and one SCA iteration.
pub fn build_window(
    net: &Network,
    mats: &DaeMatrices,
    data: &WindowData,
    coeffs: &CoefficientSet,
    hp: usize,
    cfg: &ModelConfig,
) -> Result<WindowProblem, ModelError> {
    if data.demands.len() < hp {
        return Err(ModelError::WindowData(format!(
            "{} demand steps for a horizon of {hp}",
            data.demands.len()
        )));
    }
    if coeffs.horizon() < hp {
        return Err(ModelError::WindowData(format!(
            "coefficients cover {} steps for a horizon of {hp}",
            coeffs.horizon()
        )));
    }
    if data.x0.len() != net.n_tanks() {
        return Err(ModelError::WindowData("x0 length differs from the tank count".into()));
    }
    if let Some(pins) = &cfg.pinned_speeds {
        if pins.len() != net.n_pumps() {
            return Err(ModelError::WindowData(
                "pinned speeds differ from the pump count".into(),
            ));
        }
    }

    let lay = Layout::new(net, hp);
    let mut gp = GpProblem::new(cfg.base)?;
    for k in 0..hp {
        for t in 0..lay.n_t {
            gp.add_var(format!("x[{k}][{t}]"));
        }
        for j in 0..lay.n_j {
            gp.add_var(format!("l[{k}][{j}]"));
        }
        for m in 0..lay.n_m {
            gp.add_var(format!("u[{k}][{m}]"));
        }
        for p in 0..lay.n_p {
            gp.add_var(format!("v[{k}][{p}]"));
        }
        for m in 0..lay.n_m {
            gp.add_var(format!("s[{k}][{m}]"));
        }
        for t in 0..lay.n_t {
            gp.add_var(format!("z[{k}][{t}]"));
        }
        for m in 0..lay.n_m {
            gp.add_var(format!("p[{k}][{m}]"));
        }
    }
    debug_assert_eq!(gp.n_vars(), lay.n_vars());

    let ln_b = cfg.base.ln();
    let limit = cfg.exponent_limit();
    let kappa = cfg.kappa();
    let np = lay.n_p;
    let mut objective = Vec::new();

    let bound = |gp: &mut GpProblem, v: VarId, lo: f64, hi: f64, what: &dyn Fn() -> String| -> Result<(), ModelError> {
        if lo > hi {
            return Err(ModelError::InfeasibleBoxBounds {
                what: what(),
                min: lo,
                max: hi,
            });
        }
        if lo.is_finite() {
            guard(what, lo, limit)?;
            gp.add_inequality(Monomial::from_ln(lo * ln_b, vec![(v, -1.0)]).into());
        }
        if hi.is_finite() {
            guard(what, hi, limit)?;
            gp.add_inequality(Monomial::from_ln(-hi * ln_b, vec![(v, 1.0)]).into());
        }
        Ok(())
    };

    for k in 0..hp {
        // tank dynamics
        for (t, (b_u, b_v)) in mats.b_u.row_iter().zip(mats.b_v.row_iter()).enumerate() {
            let mut row = Row::new().var(lay.x(k, t), 1.0);
            row = if k == 0 {
                row.konst(-data.x0[t])
            } else {
                row.var(lay.x(k - 1, t), -1.0)
            };
            for (&m, &a) in b_u.col_indices().iter().zip(b_u.values()) {
                row = row.var(lay.u(k, m), -a * kappa);
            }
            for (&p, &a) in b_v.col_indices().iter().zip(b_v.values()) {
                row = row.var(lay.v(k, p), -a * kappa);
            }
            gp.add_equality(row.monomial(ln_b, limit, &|| format!("tank {t} step {k}"))?);
        }

        // junction mass balance
        for (j, (e_u, e_v)) in mats.e_u.row_iter().zip(mats.e_v.row_iter()).enumerate() {
            let mut row = Row::new();
            for (&m, &a) in e_u.col_indices().iter().zip(e_u.values()) {
                row = row.var(lay.u(k, m), a);
            }
            for (&p, &a) in e_v.col_indices().iter().zip(e_v.values()) {
                row = row.var(lay.v(k, p), a);
            }
            let e_d = mats.e_d.row(j);
            for (&jj, &a) in e_d.col_indices().iter().zip(e_d.values()) {
                row = row.konst(a * data.demands[k][jj] / kappa);
            }
            gp.add_equality(row.monomial(ln_b, limit, &|| format!("junction {j} step {k}"))?);
        }

        // pipes: h_i − h_j = log_b C^P + q
        for p in 0..np {
            let (from, to) = net.link_ends(net.pipes()[p]);
            let mut row = Row::new();
            row = add_head(row, net, &lay, &data.x0, from, k, 1.0);
            row = add_head(row, net, &lay, &data.x0, to, k, -1.0);
            row = row.var(lay.v(k, p), -1.0).konst(-coeffs.cp_exponent[k][p]);
            gp.add_equality(row.monomial(ln_b, limit, &|| format!("pipe {p} step {k}"))?);
        }

        // pumps: h_i − h_j = C1 s + C2 q
        for m in 0..lay.n_m {
            let (from, to) = net.link_ends(net.pumps()[m]);
            let mut row = Row::new();
            row = add_head(row, net, &lay, &data.x0, from, k, 1.0);
            row = add_head(row, net, &lay, &data.x0, to, k, -1.0);
            row = row
                .var(lay.s(k, m), -coeffs.f_s[k][m])
                .var(lay.u(k, m), -coeffs.f_u[k][m]);
            gp.add_equality(row.monomial(ln_b, limit, &|| format!("pump {m} step {k}"))?);
        }

        // safety auxiliaries
        let mut z_terms = Vec::new();
        for t in 0..lay.n_t {
            let xsf = net.tank(t).safety_head;
            let z = lay.z(k, t);
            match cfg.safety_mode {
                SafetyMode::Epigraph => {
                    // b^{xsf} x̂^{-1} ẑ^{-1} ≤ 1 and ẑ ≥ 1
                    let row = Row::new().var(z, -1.0).var(lay.x(k, t), -1.0).konst(xsf);
                    gp.add_inequality(row.monomial(ln_b, limit, &|| format!("safety {t} step {k}"))?.into());
                    bound(&mut gp, z, 0.0, f64::INFINITY, &|| format!("z[{k}][{t}]"))?;
                    z_terms.push(z);
                }
                SafetyMode::Activated | SafetyMode::ActivatedCapped | SafetyMode::Lagged if coeffs.active[k][t] => {
                    let row = Row::new().var(z, 1.0).var(lay.x(k, t), 1.0).konst(-xsf);
                    gp.add_equality(row.monomial(ln_b, limit, &|| format!("safety {t} step {k}"))?);
                    if cfg.safety_mode == SafetyMode::ActivatedCapped {
                        bound(&mut gp, z, 0.0, f64::INFINITY, &|| format!("z[{k}][{t}]"))?;
                    }
                    z_terms.push(z);
                }
                _ => gp.add_equality(Monomial::var(z)),
            }
        }
        if !z_terms.is_empty() {
            objective.extend(safety_objective(&z_terms, cfg.safety_weight).terms);
        }

        // smoothness auxiliaries: p = u(k) − u(k−1)
        let mut p_vars = Vec::new();
        let mut p_exps = Vec::new();
        for m in 0..lay.n_m {
            let pv = lay.p(k, m);
            let before = match k {
                0 => data.u_before.as_ref().map(|u| u[m] / kappa),
                _ => None,
            };
            let row = match (k, before) {
                (0, None) => Row::new().var(pv, 1.0),
                (0, Some(u0)) => Row::new().var(pv, 1.0).var(lay.u(0, m), -1.0).konst(u0),
                _ => Row::new().var(pv, 1.0).var(lay.u(k, m), -1.0).var(lay.u(k - 1, m), 1.0),
            };
            gp.add_equality(row.monomial(ln_b, limit, &|| format!("smoothness {m} step {k}"))?);
            let e = cfg.smoothness_weight * kappa * coeffs.du_prev[k][m];
            if e != 0.0 && (k > 0 || data.u_before.is_some()) {
                p_vars.push(pv);
                p_exps.push(guard(|| format!("smoothness exponent {m} step {k}"), e, limit)?);
            }
        }
        if !p_vars.is_empty() {
            let gamma2 = smoothness_objective(&p_vars, &p_exps);
            if cfg.smoothness_lower_bound {
                gp.add_inequality(gamma2.terms[0].inv().into());
            }
            objective.extend(gamma2.terms);
        }

        // boxes
        for t in 0..lay.n_t {
            let tank = net.tank(t);
            bound(&mut gp, lay.x(k, t), tank.head_min, tank.head_max, &|| {
                format!("x[{k}][{t}]")
            })?;
        }
        if cfg.junction_head_floor {
            for j in 0..lay.n_j {
                let elev = net.nodes()[net.junctions()[j]].elevation;
                bound(&mut gp, lay.l(k, j), elev, f64::INFINITY, &|| format!("l[{k}][{j}]"))?;
            }
        }
        for m in 0..lay.n_m {
            let link = &net.links()[net.pumps()[m]];
            bound(
                &mut gp,
                lay.u(k, m),
                link.flow_min / kappa,
                link.flow_max / kappa,
                &|| format!("u[{k}][{m}]"),
            )?;
            match &cfg.pinned_speeds {
                Some(pins) => {
                    let row = Row::new().var(lay.s(k, m), 1.0).konst(-pins[m]);
                    gp.add_equality(row.monomial(ln_b, limit, &|| format!("s[{k}][{m}]"))?);
                }
                None => {
                    bound(&mut gp, lay.s(k, m), S_MIN, 1.0, &|| format!("s[{k}][{m}]"))?;
                    if cfg.proximal_weight > 0.0 {
                        let c = guard(|| "proximal scale".into(), cfg.proximal_scale / ln_b, limit)?;
                        let sp = cfg.proximal_scale * coeffs.s_prev[k][m];
                        let lr = cfg.proximal_weight.ln();
                        objective.push(Monomial::from_ln(lr - sp, vec![(lay.s(k, m), c)]));
                        objective.push(Monomial::from_ln(lr + sp, vec![(lay.s(k, m), -c)]));
                    }
                }
            }
        }
        for p in 0..np {
            let link = &net.links()[net.pipes()[p]];
            bound(
                &mut gp,
                lay.v(k, p),
                link.flow_min / kappa,
                link.flow_max / kappa,
                &|| format!("v[{k}][{p}]"),
            )?;
        }
    }

    if objective.is_empty() {
        objective.push(Monomial::from_ln(0.0, Vec::new()));
    }
    gp.set_objective(Posynomial::new(objective)?);

    Ok(WindowProblem {
        gp,
        layout: lay,
        active: coeffs.active[..hp].to_vec(),
        kappa,
    })
}
