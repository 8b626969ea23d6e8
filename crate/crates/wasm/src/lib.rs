//! Browser bindings. Every export takes plain numbers and strings and returns
//! a JSON document, so the page needs no generated types.

use serde::Serialize;
use sirtoc::{
    eradication_time_for_tau, optimize, run_curves, simulate, uncontrolled_eradication_time,
    ControlSchedule, IntegratorConfig, IntegratorOverrides, ModelParams, Policy, PolicyKind,
    DEFAULT_MESH_COUNT,
};
use wasm_bindgen::prelude::*;

/// Longest series handed to the page; trajectories are thinned to this.
const MAX_POINTS: usize = 1500;

#[derive(Debug, Serialize)]
pub struct TrajectoryView {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub u: Vec<f64>,
    pub eradication_time: Option<f64>,
    pub tau: f64,
}

#[derive(Debug, Serialize)]
pub struct ScanView {
    pub tau: Vec<f64>,
    pub eradication_time: Vec<f64>,
    pub tau_star: f64,
    pub t_star: f64,
    pub t_at_zero: f64,
    pub t_unc: f64,
    pub regime: String,
}

#[derive(Debug, Serialize)]
pub struct CurveView {
    pub u_max: Vec<f64>,
    pub tau_star: Vec<f64>,
    pub t_star: Vec<f64>,
    pub t_at_zero: Vec<f64>,
    pub regime: Vec<String>,
    pub rc_unit_crossing: Option<f64>,
}

fn problem(
    policy: &str,
    u_max: f64,
    r0: f64,
) -> Result<(ModelParams, Policy, IntegratorConfig), String> {
    let kind: PolicyKind = policy.parse().map_err(|e: sirtoc::Error| e.to_string())?;
    let params = ModelParams::from_r0(
        r0,
        ModelParams::DEFAULT_MU,
        ModelParams::DEFAULT_S0,
        ModelParams::DEFAULT_I0,
        ModelParams::DEFAULT_EPSILON,
    )
    .map_err(|e| e.to_string())?;
    let policy = Policy::new(kind, u_max).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig::for_problem(&params, &policy).map_err(|e| e.to_string())?;
    Ok((params, policy, cfg))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn trajectory_view(
    policy: &str,
    u_max: f64,
    r0: f64,
    tau: f64,
) -> Result<TrajectoryView, String> {
    let (params, policy, cfg) = problem(policy, u_max, r0)?;
    let traj = simulate(&params, &policy, &ControlSchedule::new(tau, u_max), &cfg)
        .map_err(|e| e.to_string())?;
    let stride = traj.len().div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..traj.len()).step_by(stride).collect();
    if idx.last() != Some(&(traj.len() - 1)) {
        idx.push(traj.len() - 1);
    }
    Ok(TrajectoryView {
        t: idx.iter().map(|&k| traj.times[k]).collect(),
        s: idx.iter().map(|&k| traj.states[k].s).collect(),
        i: idx.iter().map(|&k| traj.states[k].i).collect(),
        u: idx.iter().map(|&k| traj.controls[k]).collect(),
        eradication_time: traj.eradication_time,
        tau: traj.tau,
    })
}

pub fn scan_view(policy: &str, u_max: f64, r0: f64, points: usize) -> Result<ScanView, String> {
    let (params, policy, cfg) = problem(policy, u_max, r0)?;
    let t_unc = uncontrolled_eradication_time(&params, &cfg).map_err(|e| e.to_string())?;
    let n = points.max(2);
    let tau: Vec<f64> = (0..n).map(|k| t_unc * k as f64 / (n - 1) as f64).collect();
    let eradication_time = tau
        .iter()
        .map(|&t| eradication_time_for_tau(&params, &policy, t, &cfg))
        .collect::<sirtoc::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    let best = optimize(&params, &policy, DEFAULT_MESH_COUNT, &cfg).map_err(|e| e.to_string())?;
    Ok(ScanView {
        tau,
        eradication_time,
        tau_star: best.tau_star,
        t_star: best.t_star,
        t_at_zero: best.t_at_zero,
        t_unc,
        regime: best.regime.to_string(),
    })
}

pub fn curve_view(
    policy: &str,
    r0: f64,
    u_lo: f64,
    u_hi: f64,
    n: usize,
) -> Result<CurveView, String> {
    let (params, policy, _) = problem(policy, u_hi, r0)?;
    let table = run_curves(
        policy.kind(),
        &params,
        (u_lo, u_hi),
        n,
        DEFAULT_MESH_COUNT,
        &IntegratorOverrides::default(),
    )
    .map_err(|e| e.to_string())?;
    let mut view = CurveView {
        u_max: Vec::new(),
        tau_star: Vec::new(),
        t_star: Vec::new(),
        t_at_zero: Vec::new(),
        regime: Vec::new(),
        rc_unit_crossing: table.rc_unit_crossing,
    };
    for (u, s) in table.successes() {
        view.u_max.push(u);
        view.tau_star.push(s.tau_star);
        view.t_star.push(s.t_star);
        view.t_at_zero.push(s.t_at_zero);
        view.regime.push(s.regime.to_string());
    }
    Ok(view)
}

/// Trajectory of the schedule switching on at `tau`, as JSON.
#[wasm_bindgen(js_name = simulateSchedule)]
pub fn simulate_schedule(policy: &str, u_max: f64, r0: f64, tau: f64) -> Result<String, String> {
    trajectory_view(policy, u_max, r0, tau).and_then(|v| to_json(&v))
}

/// Eradication time against intervention start plus the optimum, as JSON.
#[wasm_bindgen(js_name = scanTau)]
pub fn scan_tau(policy: &str, u_max: f64, r0: f64, points: usize) -> Result<String, String> {
    scan_view(policy, u_max, r0, points).and_then(|v| to_json(&v))
}

/// Optimal start and eradication times along the effort bound, as JSON.
#[wasm_bindgen(js_name = effortCurve)]
pub fn effort_curve(
    policy: &str,
    r0: f64,
    u_lo: f64,
    u_hi: f64,
    n: usize,
) -> Result<String, String> {
    curve_view(policy, r0, u_lo, u_hi, n).and_then(|v| to_json(&v))
}
