//! Numerical check of the minimum-principle conditions along a candidate
//! optimum.
//!
//! For the time-optimal problem the Hamiltonian is
//! `H(x, λ, u) = 1 + λ·(f(x) + u·g(x))`, the costate obeys `λ' = -∂H/∂x` and
//! the switching function is `ψ = λ·g(x)`. At the eradication time the
//! costate is pinned by `λ_S(T) = 0` and `H(T) = 0`, which gives
//! `λ_I(T) = -1/İ(T)`. Integrating backward with the same Crank–Nicolson
//! discretization as the forward pass yields `ψ` and `H` on the grid, and the
//! report compares them against the bang-bang structure of the schedule.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{peak_time, IntegratorConfig, Trajectory};
use crate::model::{
    control_direction, field, field_jacobian, ModelParams, Policy, PolicyKind, State,
};
use crate::timeopt::{default_peak_tol, OptimalResult};

/// Costate pair `(λ_S, λ_I)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Adjoint {
    pub lambda_s: f64,
    pub lambda_i: f64,
}

impl Adjoint {
    pub fn new(lambda_s: f64, lambda_i: f64) -> Self {
        Self { lambda_s, lambda_i }
    }
}

/// Costate, switching function and Hamiltonian on the forward grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub lambda_i: Vec<f64>,
    pub psi: Vec<f64>,
    pub hamiltonian: Vec<f64>,
    /// `İ(T)` from the field at the terminal state.
    pub terminal_rate: f64,
}

impl AdjointTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn adjoint(&self, k: usize) -> Adjoint {
        Adjoint::new(self.lambda_s[k], self.lambda_i[k])
    }

    /// Writes `t,lambda_S,lambda_I,psi,H` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,lambda_S,lambda_I,psi,H")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.times[k], self.lambda_s[k], self.lambda_i[k], self.psi[k], self.hamiltonian[k]
            )?;
        }
        Ok(())
    }
}

/// Switching function `ψ = λ·g(x)`: `-α₁Sλ_S - α₂Iλ_I` for the linear
/// policies and `(λ_S - λ_I)βSI` for transmission reduction.
pub fn switching_function(
    params: &ModelParams,
    state: State,
    adjoint: Adjoint,
    policy: &Policy,
) -> f64 {
    let (gs, gi) = control_direction(params, policy, state);
    adjoint.lambda_s * gs + adjoint.lambda_i * gi
}

/// Time derivative of `ψ` along the extremal: `βSI(α₁λ_I - α₂λ_S)` for the
/// linear policies and `-μβSIλ_S` for transmission reduction.
pub fn switching_rate(
    params: &ModelParams,
    state: State,
    adjoint: Adjoint,
    policy: &Policy,
) -> f64 {
    let inf = params.beta * state.s * state.i;
    match policy.kind() {
        PolicyKind::TransmissionReduction => -params.mu * inf * adjoint.lambda_s,
        _ => inf * (policy.alpha1() * adjoint.lambda_i - policy.alpha2() * adjoint.lambda_s),
    }
}

/// Hamiltonian `1 + λ·(f(x) + u·g(x))`.
pub fn hamiltonian(
    params: &ModelParams,
    state: State,
    adjoint: Adjoint,
    u: f64,
    policy: &Policy,
) -> f64 {
    let (fs, fi) = field(params, policy, state, u);
    1.0 + adjoint.lambda_s * fs + adjoint.lambda_i * fi
}

/// `λ' = A λ` with `A = -(∂F/∂x)ᵀ`.
fn costate_matrix(params: &ModelParams, policy: &Policy, x: State, u: f64) -> [[f64; 2]; 2] {
    let j = field_jacobian(params, policy, x, u);
    [[-j[0][0], -j[1][0]], [-j[0][1], -j[1][1]]]
}

/// Integrates the costate backward from the eradication time of `traj`.
pub fn adjoint_backward(
    params: &ModelParams,
    policy: &Policy,
    traj: &Trajectory,
    cfg: &IntegratorConfig,
) -> Result<AdjointTrajectory> {
    let n = traj.len();
    let k_end = traj.eradication_index().ok_or(Error::HorizonExhausted {
        horizon: cfg.t_horizon,
    })?;
    debug_assert_eq!(k_end, n - 1);
    let x_end = traj.states[k_end];
    let u_end = traj.controls[k_end];
    let terminal_rate = field(params, policy, x_end, u_end).1;
    if !(terminal_rate < 0.0) {
        return Err(Error::InvalidTerminal {
            rate: terminal_rate,
        });
    }

    let h = 0.5 * traj.dt;
    let mut ls = vec![0.0; n];
    let mut li = vec![0.0; n];
    li[k_end] = -1.0 / terminal_rate;
    for k in (0..k_end).rev() {
        let u = traj.controls[k];
        let a_next = costate_matrix(params, policy, traj.states[k + 1], u);
        let a_here = costate_matrix(params, policy, traj.states[k], u);
        // (I + h·A_k) λ_k = (I - h·A_{k+1}) λ_{k+1}
        let rhs_s = ls[k + 1] - h * (a_next[0][0] * ls[k + 1] + a_next[0][1] * li[k + 1]);
        let rhs_i = li[k + 1] - h * (a_next[1][0] * ls[k + 1] + a_next[1][1] * li[k + 1]);
        let a = 1.0 + h * a_here[0][0];
        let b = h * a_here[0][1];
        let c = h * a_here[1][0];
        let d = 1.0 + h * a_here[1][1];
        let det = a * d - b * c;
        ls[k] = (d * rhs_s - b * rhs_i) / det;
        li[k] = (a * rhs_i - c * rhs_s) / det;
    }

    let mut psi = Vec::with_capacity(n);
    let mut ham = Vec::with_capacity(n);
    for k in 0..n {
        let lam = Adjoint::new(ls[k], li[k]);
        psi.push(switching_function(params, traj.states[k], lam, policy));
        ham.push(hamiltonian(
            params,
            traj.states[k],
            lam,
            traj.controls[k],
            policy,
        ));
    }
    // pin the terminal identity H(T) = 1 + λ_I İ(T) = 0 exactly
    ham[k_end] = 1.0 + li[k_end] * terminal_rate;

    Ok(AdjointTrajectory {
        times: traj.times.clone(),
        lambda_s: ls,
        lambda_i: li,
        psi,
        hamiltonian: ham,
        terminal_rate,
    })
}

/// Tolerances for the residual checks, scaled with the step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmpTolerances {
    pub ham_tol: f64,
    pub psi_tol: f64,
    pub peak_tol: f64,
}

impl PmpTolerances {
    const HAM_FACTOR: f64 = 10.0;

    /// `ham_tol = 10·dt·|İ(T)|/I(T)`, i.e. ten steps measured in the terminal
    /// decay rate of the infected class; `ψ_tol` is the same fraction of
    /// `psi_scale`, the largest `|ψ|` along the trajectory.
    pub fn new(cfg: &IntegratorConfig, terminal_decay_rate: f64, psi_scale: f64) -> Self {
        let ham_tol = Self::HAM_FACTOR * cfg.dt * terminal_decay_rate.abs();
        Self {
            ham_tol,
            psi_tol: ham_tol * psi_scale,
            peak_tol: default_peak_tol(cfg),
        }
    }

    /// Tolerances for a computed costate.
    pub fn for_adjoint(traj: &Trajectory, adj: &AdjointTrajectory, cfg: &IntegratorConfig) -> Self {
        let i_end = traj.final_state().i.max(f64::MIN_POSITIVE);
        let psi_scale = adj.psi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        Self::new(cfg, adj.terminal_rate / i_end, psi_scale)
    }
}

/// A sign change of `ψ` between two stable sign runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub time: f64,
    /// `true` for a change from positive to negative.
    pub downward: bool,
}

/// Outcome of the minimum-principle checks for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmpReport {
    pub tolerances: PmpTolerances,
    /// `max |H|` over the grid.
    pub ham_residual: f64,
    pub ham_ok: bool,
    /// Grid points where the sign of `ψ` contradicts the applied control.
    pub sign_violations: usize,
    /// Largest `|ψ|` among the violating points.
    pub sign_residual: f64,
    pub sign_ok: bool,
    pub crossings: Vec<Crossing>,
    pub crossing_ok: bool,
    /// `|λ_S(T)|`.
    pub transversality_residual: f64,
    /// `max ψ` on the controlled segment `(τ*, T)`.
    pub controlled_psi_max: f64,
    pub controlled_ok: bool,
    /// `min_k max(|λ_S|, |λ_I|)`.
    pub multiplier_min: f64,
    /// For vaccination: every crossing precedes `t_p + peak_tol`.
    pub vaccination_ok: bool,
    pub tau: f64,
    pub peak_time: f64,
}

impl PmpReport {
    pub const CSV_HEADER: &'static str = "ham_residual,ham_tol,ham_ok,sign_violations,sign_residual,psi_tol,sign_ok,crossing_count,crossing_time,crossing_ok,transversality_residual,controlled_psi_max,controlled_ok,multiplier_min,passed";

    /// All conditions hold.
    pub fn passed(&self) -> bool {
        self.ham_ok
            && self.sign_ok
            && self.crossing_ok
            && self.controlled_ok
            && self.transversality_residual == 0.0
            && self.multiplier_min > 0.0
            && self.vaccination_ok
    }

    pub fn crossing_time(&self) -> Option<f64> {
        self.crossings.first().map(|c| c.time)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        let crossing = self
            .crossing_time()
            .map(|t| t.to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.ham_residual,
            self.tolerances.ham_tol,
            self.ham_ok,
            self.sign_violations,
            self.sign_residual,
            self.tolerances.psi_tol,
            self.sign_ok,
            self.crossings.len(),
            crossing,
            self.crossing_ok,
            self.transversality_residual,
            self.controlled_psi_max,
            self.controlled_ok,
            self.multiplier_min,
            self.passed()
        )
    }
}

/// Sign changes of `psi` between runs of at least two consecutive grid points
/// outside `[-tol, tol]`.
fn stable_crossings(times: &[f64], psi: &[f64], tol: f64) -> Vec<Crossing> {
    const MIN_RUN: usize = 2;
    let sign = |v: f64| {
        if v > tol {
            1i8
        } else if v < -tol {
            -1
        } else {
            0
        }
    };
    // (sign, first index, last index)
    let mut runs: Vec<(i8, usize, usize)> = Vec::new();
    for (k, &v) in psi.iter().enumerate() {
        let s = sign(v);
        match runs.last_mut() {
            Some(run) if run.0 == s && run.2 + 1 == k => run.2 = k,
            _ => runs.push((s, k, k)),
        }
    }
    let stable: Vec<_> = runs
        .into_iter()
        .filter(|&(s, a, b)| s != 0 && b - a + 1 >= MIN_RUN)
        .collect();
    stable
        .windows(2)
        .filter(|w| w[0].0 != w[1].0)
        .map(|w| {
            let (from, to) = (w[0].2, w[1].1);
            // last zero crossing of ψ between the two runs
            let mut time = times[to];
            for k in (from..to).rev() {
                if (psi[k] > 0.0) != (psi[k + 1] > 0.0) {
                    let denom = psi[k] - psi[k + 1];
                    let frac = if denom != 0.0 { psi[k] / denom } else { 0.0 };
                    time = times[k] + frac.clamp(0.0, 1.0) * (times[k + 1] - times[k]);
                    break;
                }
            }
            Crossing {
                time,
                downward: w[0].0 > 0,
            }
        })
        .collect()
}

/// Checks the minimum-principle conditions along the optimizer's trajectory.
pub fn check_pmp(
    params: &ModelParams,
    policy: &Policy,
    result: &OptimalResult,
    cfg: &IntegratorConfig,
) -> Result<PmpReport> {
    check_trajectory(params, policy, &result.trajectory, cfg)
}

/// Checks the minimum-principle conditions along any bang-bang trajectory.
pub fn check_trajectory(
    params: &ModelParams,
    policy: &Policy,
    traj: &Trajectory,
    cfg: &IntegratorConfig,
) -> Result<PmpReport> {
    let adj = adjoint_backward(params, policy, traj, cfg)?;
    let tol = PmpTolerances::for_adjoint(traj, &adj, cfg);
    Ok(report_from(policy, traj, &adj, tol))
}

pub(crate) fn report_from(
    policy: &Policy,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    tol: PmpTolerances,
) -> PmpReport {
    let n = adj.len();
    let u_max = policy.u_max();

    let ham_residual = adj.hamiltonian.iter().fold(0.0f64, |m, h| m.max(h.abs()));

    let mut sign_violations = 0;
    let mut sign_residual = 0.0f64;
    for k in 0..n {
        let (p, u) = (adj.psi[k], traj.controls[k]);
        let bad = (p > tol.psi_tol && u != 0.0) || (p < -tol.psi_tol && u != u_max);
        if bad {
            sign_violations += 1;
            sign_residual = sign_residual.max(p.abs());
        }
    }

    let crossings = stable_crossings(&adj.times, &adj.psi, tol.psi_tol);
    let crossing_ok = crossings.len() <= 1 && crossings.iter().all(|c| c.downward);

    let tau = traj.tau;
    let controlled_psi_max = (0..n.saturating_sub(1))
        .filter(|&k| adj.times[k] > tau)
        .map(|k| adj.psi[k])
        .fold(f64::NEG_INFINITY, f64::max);

    let tp = peak_time(traj);
    let vaccination_ok = policy.kind() != PolicyKind::Vaccination
        || crossings.iter().all(|c| c.time < tp + tol.peak_tol);

    let multiplier_min = adj
        .lambda_s
        .iter()
        .zip(&adj.lambda_i)
        .map(|(s, i)| s.abs().max(i.abs()))
        .fold(f64::INFINITY, f64::min);

    PmpReport {
        tolerances: tol,
        ham_residual,
        ham_ok: ham_residual <= tol.ham_tol,
        sign_violations,
        sign_residual,
        sign_ok: sign_violations == 0,
        crossing_ok,
        crossings,
        transversality_residual: adj.lambda_s[n - 1].abs(),
        controlled_psi_max,
        controlled_ok: !(controlled_psi_max > tol.psi_tol),
        multiplier_min,
        vaccination_ok,
        tau,
        peak_time: tp,
    }
}
