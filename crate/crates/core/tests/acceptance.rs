//! Acceptance checks. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wdngp::gp::{elementwise_exp, solve, star_product, verify_property1, SolverOptions};
use wdngp::hydraulics::{dae_residual, solve_wfp_newton, wfp_jacobian, wfp_residual, FixedData, NewtonOptions};
use wdngp::mpc::{initial_iterate, run_mpc, solve_window, ScaConfig, WindowSolution};
use wdngp::network::incidence_matrices;
use wdngp::{GpProblem, HydraulicState, Monomial, MpcTrajectory, Network, Posynomial};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn operator_identity() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bases = [1.005, 2.0, std::f64::consts::E];
    let mut worst: f64 = 0.0;
    let mut worst_naive: f64 = 0.0;
    for trial in 0..500 {
        let b = bases[trial % 3];
        let (p, q, r) = (
            rng.random_range(1..=6),
            rng.random_range(1..=6),
            rng.random_range(1..=6),
        );
        let x = DMatrix::from_fn(q, r, |_, _| rng.random_range(-2.0..=2.0));
        let y = DMatrix::from_fn(p, q, |_, _| rng.random_range(-2.0..=2.0));
        worst = worst.max(verify_property1(&x, &y, b).unwrap());
        // entry by entry: b^{(YX)_ij} against prod_k (b^{X_kj})^{Y_ik}
        let star = star_product(&elementwise_exp(&x, b), &y).unwrap();
        for i in 0..p {
            for j in 0..r {
                let exponent: f64 = (0..q).map(|k| y[(i, k)] * x[(k, j)]).sum();
                let direct = b.powf(exponent);
                let product: f64 = (0..q).map(|k| b.powf(x[(k, j)]).powf(y[(i, k)])).product();
                worst_naive = worst_naive.max((direct - star[(i, j)]).abs() / direct);
                worst_naive = worst_naive.max((direct - product).abs() / direct);
            }
        }
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-9 && worst_naive <= 1e-9 && within(el, 1.0),
        format!(
            "max rel {worst:.2e}, entrywise {worst_naive:.2e}, {:.3} s",
            el.as_secs_f64()
        ),
    )
}

/// Per-step nonlinear state of a window solution, with the step's start
/// heads.
fn step_state(sol: &WindowSolution, x0: &DVector<f64>, k: usize) -> (HydraulicState, DVector<f64>) {
    let it = &sol.iterate;
    let state = HydraulicState {
        x: if k == 0 { x0.clone() } else { it.x[k - 1].clone() },
        l: it.l[k].clone(),
        u: it.u[k].clone(),
        v: it.v[k].clone(),
        s: it.s[k].clone(),
    };
    (state, it.x[k].clone())
}

fn fixed_point_physics() -> Outcome {
    let t = Instant::now();
    let net = net4();
    let mats = incidence_matrices(&net, 3600.0).unwrap();
    let cfg = ScaConfig {
        hp: 3,
        threshold: 1e-9,
        max_iter: 2000,
        ..ScaConfig::default()
    };
    let x0 = vec![net.tank(0).initial_head];
    let data = window_data(&net, 0, cfg.hp, x0.clone());
    let start = initial_iterate(&net, &mats, &data, cfg.hp, &cfg.initial_guess).unwrap();
    let sol = match solve_window(&net, &mats, &data, &start, &cfg, 0) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("window failed: {e}")),
    };
    let (mut energy, mut tank): (f64, f64) = (0.0, 0.0);
    for k in 0..cfg.hp {
        let (state, x_next) = step_state(&sol, &data.x0, k);
        let res = dae_residual(&net, &mats, &state, &x_next, &data.demands[k]).unwrap();
        energy = energy.max(res.energy_inf());
        tank = tank.max(res.tank_inf());
    }
    let el = t.elapsed();
    outcome(
        sol.converged && energy <= 1e-6 && tank <= 1e-6 && within(el, 5.0),
        format!(
            "{} iterations, energy {energy:.2e} ft, tank {tank:.2e} ft, {:.2} s",
            sol.iterations(),
            el.as_secs_f64()
        ),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let net = net4();
    let mats = incidence_matrices(&net, 3600.0).unwrap();
    let mut cfg = ScaConfig {
        hp: 3,
        threshold: 1e-9,
        max_iter: 2000,
        ..ScaConfig::default()
    };
    cfg.model.pinned_speeds = Some(vec![0.8]);
    let data = window_data(&net, 0, cfg.hp, vec![net.tank(0).initial_head]);
    let start = initial_iterate(&net, &mats, &data, cfg.hp, &cfg.initial_guess).unwrap();
    let sol = match solve_window(&net, &mats, &data, &start, &cfg, 0) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("window failed: {e}")),
    };
    let mut worst: f64 = 0.0;
    for k in 0..cfg.hp {
        let (state, _) = step_state(&sol, &data.x0, k);
        let fixed = FixedData {
            tank_heads: state.x.clone(),
            speeds: DVector::from_element(1, 0.8),
            demands: data.demands[k].clone(),
        };
        let newton = solve_wfp_newton(&net, &mats, &fixed, &NewtonOptions::default()).unwrap();
        let pairs = state
            .l
            .iter()
            .zip(newton.l.iter())
            .chain(state.u.iter().zip(newton.u.iter()))
            .chain(state.v.iter().zip(newton.v.iter()));
        for (a, b) in pairs {
            worst = worst.max(rel(*a, *b));
        }
    }
    let el = t.elapsed();
    outcome(
        sol.converged && worst <= 1e-3 && within(el, 10.0),
        format!(
            "{} iterations, max rel {worst:.2e}, {:.2} s",
            sol.iterations(),
            el.as_secs_f64()
        ),
    )
}

fn scenario(net: &Network) -> Result<(MpcTrajectory, Duration), String> {
    let t = Instant::now();
    let traj = run_mpc(net, 24, &ScaConfig::default()).map_err(|e| e.to_string())?;
    Ok((traj, t.elapsed()))
}

fn scenario_properties(net: &Network, run: &Result<(MpcTrajectory, Duration), String>) -> Outcome {
    let (traj, el) = match run {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let tank = net.tank(0);
    let mut failures = Vec::new();
    if traj.len() != 24 {
        failures.push(format!("{} steps", traj.len()));
    }
    let in_box = traj
        .steps
        .iter()
        .all(|r| r.x_end[0] >= 830.0 && r.x_end[0] <= 850.0 && r.x_start[0] >= 830.0 && r.x_start[0] <= 850.0);
    if !in_box || tank.head_min != 830.0 || tank.head_max != 850.0 {
        failures.push("(a) tank left [830, 850]".into());
    }
    for r in &traj.steps {
        if r.x_start[0] < 838.0 && (r.s[0] - 1.0).abs() > 1e-6 {
            failures.push(format!(
                "(b) step {} at {:.3} ft has s = {}",
                r.step, r.x_start[0], r.s[0]
            ));
        }
    }
    let signs: Vec<f64> = traj.steps.iter().map(|r| r.u[0].signum()).collect();
    if signs.iter().any(|&s| s != signs[0] || s == 0.0) {
        failures.push("(c) pump flow changed sign".into());
    }
    let np = net.n_pipes();
    let changes: Vec<usize> = (0..np)
        .map(|p| {
            traj.steps
                .windows(2)
                .filter(|w| w[0].v[p].signum() != w[1].v[p].signum())
                .count()
        })
        .collect();
    if changes.iter().all(|&c| c == 0) {
        failures.push("(d) no pipe flow changed sign".into());
    }
    for r in &traj.steps {
        let last = r.errors.last().copied().unwrap_or(f64::INFINITY);
        if !(last < 0.5 || r.iterations == 40) {
            failures.push(format!(
                "(e) step {} ended at error {last} after {}",
                r.step, r.iterations
            ));
        }
    }
    if !within(*el, 300.0) {
        failures.push(format!("runtime {:.1} s", el.as_secs_f64()));
    }
    let x: Vec<f64> = traj.steps.iter().map(|r| r.x_end[0]).collect();
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "tank {lo:.2}..{hi:.2} ft, sign changes per pipe {changes:?}, max {} iterations, {:.1} s",
        traj.steps.iter().map(|r| r.iterations).max().unwrap_or(0),
        el.as_secs_f64()
    );
    if failures.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{detail}; {}", failures.join("; ")))
    }
}

fn convergence_shape(run: &Result<(MpcTrajectory, Duration), String>) -> Outcome {
    let traj = match run {
        Ok((t, _)) => t,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let Some(r) = traj.steps.get(23) else {
        return outcome(false, "no window at t0 = 23".into());
    };
    let e = &r.errors;
    if e.len() < 5 {
        return outcome(false, format!("only {} iterations", e.len()));
    }
    let tail = &e[e.len() - 5..];
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
    outcome(decreasing, format!("final errors {}", sci(tail)))
}

fn jacobian_check() -> Outcome {
    let net = net8();
    let mats = incidence_matrices(&net, 3600.0).unwrap();
    let (nj, np, nm) = (net.n_junctions(), net.n_pipes(), net.n_pumps());
    let n = nj + np + nm;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let fixed = FixedData {
            tank_heads: DVector::from_fn(net.n_tanks(), |_, _| rng.random_range(830.0..850.0)),
            speeds: DVector::from_fn(nm, |_, _| rng.random_range(0.5..1.0)),
            demands: DVector::from_fn(nj, |_, _| rng.random_range(0.0..1.0)),
        };
        // flows kept away from zero, where the Jacobian is regularized
        let z = DVector::from_fn(n, |i, _| {
            if i < nj {
                rng.random_range(700.0..900.0)
            } else {
                let q: f64 = rng.random_range(0.05..2.0);
                if i >= nj + np || rng.random_bool(0.5) {
                    q
                } else {
                    -q
                }
            }
        });
        let jac = wfp_jacobian(&net, &mats, &fixed, &z);
        for j in 0..n {
            let h = 1e-6 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let fd = (wfp_residual(&net, &mats, &fixed, &zp) - wfp_residual(&net, &mats, &fixed, &zm)) / (2.0 * h);
            for i in 0..n {
                let scale = jac[(i, j)].abs().max(1.0);
                worst = worst.max((jac[(i, j)] - fd[i]).abs() / scale);
            }
        }
    }
    outcome(worst <= 1e-6, format!("max rel {worst:.2e} over 50 states"))
}

fn gp_examples() -> Outcome {
    let t = Instant::now();
    let opts = SolverOptions::default();
    let mut errs = Vec::new();

    let mut p = GpProblem::new(std::f64::consts::E).unwrap();
    let x = p.add_var("x");
    p.set_objective(Monomial::var(x).into());
    p.add_inequality(Monomial::new(2.0, vec![(x, -1.0)]).unwrap().into());
    errs.push(solve(&p, None, &opts).map(|s| (s.x[0] - 2.0).abs()));

    let mut p = GpProblem::new(2.0).unwrap();
    let x = p.add_var("x");
    p.set_objective(Posynomial::new(vec![Monomial::var(x), Monomial::var(x).inv()]).unwrap());
    errs.push(solve(&p, None, &opts).map(|s| (s.x[0] - 1.0).abs().max((s.ln_objective.exp() - 2.0).abs())));

    // minimize x y with x y^2 = 8, x >= 1; compared with a refined grid
    let mut p = GpProblem::new(1.005).unwrap();
    let x = p.add_var("x");
    let y = p.add_var("y");
    p.set_objective(Monomial::new(1.0, vec![(x, 1.0), (y, 1.0)]).unwrap().into());
    p.add_equality(Monomial::new(1.0 / 8.0, vec![(x, 1.0), (y, 2.0)]).unwrap());
    p.add_inequality(Monomial::new(1.0, vec![(x, -1.0)]).unwrap().into());
    let grid = brute_force_min(|x| x * (8.0 / x).sqrt(), 1.0, 100.0);
    errs.push(solve(&p, None, &opts).map(|s| {
        let obj = s.x[0] * s.x[1];
        (obj - grid.1).abs().max((s.x[0] - grid.0).abs())
    }));

    let el = t.elapsed();
    match errs.into_iter().collect::<Result<Vec<f64>, _>>() {
        Ok(e) => outcome(
            e.iter().all(|&v| v <= 1e-4) && within(el, 1.0),
            format!("errors {}, {:.3} s", sci(&e), el.as_secs_f64()),
        ),
        Err(e) => outcome(false, format!("solver error: {e}")),
    }
}

/// Minimum of `f` on `[lo, hi]` by repeated grid refinement.
fn brute_force_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut best = (lo, f(lo));
    for _ in 0..30 {
        let n = 200;
        let step = (hi - lo) / n as f64;
        for i in 0..=n {
            let x = lo + step * i as f64;
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        lo = (best.0 - step).max(lo);
        hi = (best.0 + step).min(hi);
    }
    best
}

fn main() -> ExitCode {
    let net = net8();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 operator identity", operator_identity()),
        ("2 fixed-point physics", fixed_point_physics()),
        ("3 oracle equivalence", oracle_equivalence()),
    ];
    let run = scenario(&net);
    results.push(("4 24 h scenario", scenario_properties(&net, &run)));
    results.push(("5 convergence shape", convergence_shape(&run)));
    results.push(("6 Jacobian check", jacobian_check()));
    results.push(("7 GP solver sanity", gp_examples()));

    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "criterion {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
