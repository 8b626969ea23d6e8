//! Minimum eradication time over single-switch bang-bang schedules.
//!
//! Every candidate is `u(t; τ) = 0` for `t < τ` and `u_max` for `t ≥ τ`, so the
//! control problem reduces to a scalar search over the intervention start `τ`.
//! The search scans a uniform mesh over `[0, T_unc]` and refines around the
//! best mesh point.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrate::{
    grid_time, peak_time, run_from, simulate, tau_index, IntegratorConfig, RunOutcome, Trajectory,
};
use crate::model::{r0, rc, ModelParams, Policy};

/// Bang-bang schedule with at most one jump, from `0` to `u_max` at `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub tau: f64,
    pub u_max: f64,
}

impl ControlSchedule {
    pub fn new(tau: f64, u_max: f64) -> Self {
        Self { tau, u_max }
    }

    /// Maximum effort from `t = 0`.
    pub fn constant(u_max: f64) -> Self {
        Self::new(0.0, u_max)
    }

    /// Control value at time `t`; the jump itself takes the value `u_max`.
    pub fn control_at(&self, t: f64) -> f64 {
        if t >= self.tau {
            self.u_max
        } else {
            0.0
        }
    }
}

/// Shape of an optimal schedule relative to the infection peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeClass {
    ConstantMax,
    DelayedBeforePeak,
    DelayedAtPeak,
    DelayedAfterPeak,
}

impl RegimeClass {
    pub const ALL: [RegimeClass; 4] = [
        RegimeClass::ConstantMax,
        RegimeClass::DelayedBeforePeak,
        RegimeClass::DelayedAtPeak,
        RegimeClass::DelayedAfterPeak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegimeClass::ConstantMax => "constant-max",
            RegimeClass::DelayedBeforePeak => "delayed-before-peak",
            RegimeClass::DelayedAtPeak => "delayed-at-peak",
            RegimeClass::DelayedAfterPeak => "delayed-after-peak",
        }
    }

    pub fn is_delayed(self) -> bool {
        self != RegimeClass::ConstantMax
    }
}

impl fmt::Display for RegimeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegimeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegimeClass::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| invalid("regime", format!("unknown regime `{s}`")))
    }
}

/// Optimizer output for one parameter point.
#[derive(Debug, Clone)]
pub struct OptimalResult {
    pub params: ModelParams,
    pub policy: Policy,
    pub tau_star: f64,
    pub t_star: f64,
    /// Eradication time of the constant-maximum schedule.
    pub t_at_zero: f64,
    /// Eradication time without control.
    pub t_unc: f64,
    pub regime: RegimeClass,
    pub trajectory: Trajectory,
    pub s_at_tstar: f64,
    pub s_at_tzero: f64,
    /// Spacing of the coarse `τ` mesh.
    pub mesh_spacing: f64,
    /// At least three adjacent mesh points lie within `2·dt` of the minimum.
    pub plateau: bool,
    /// Every `(τ, J(τ))` pair evaluated, coarse mesh first.
    pub evaluations: Vec<(f64, f64)>,
    pub dt: f64,
}

impl OptimalResult {
    pub const CSV_HEADER: &'static str = "policy,beta,mu,s0,i0,eps,u_max,R0,RC,tau_star,T_star,T_at_zero,s_at_Tstar,s_at_Tzero,regime";

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> io::Result<()> {
        let p = &self.params;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.policy.kind(),
            p.beta,
            p.mu,
            p.s0,
            p.i0,
            p.epsilon,
            self.policy.u_max(),
            r0(p),
            rc(p, &self.policy),
            self.tau_star,
            self.t_star,
            self.t_at_zero,
            self.s_at_tstar,
            self.s_at_tzero,
            self.regime
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        self.write_csv_row(w)
    }
}

/// Eradication time `J(τ)` of the schedule starting maximum effort at `tau`.
pub fn eradication_time_for_tau(
    params: &ModelParams,
    policy: &Policy,
    tau: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let traj = simulate(
        params,
        policy,
        &ControlSchedule::new(tau, policy.u_max()),
        cfg,
    )?;
    traj.eradication_time.ok_or(Error::HorizonExhausted {
        horizon: cfg.t_horizon,
    })
}

/// One evaluated mesh point.
#[derive(Debug, Clone, Copy)]
struct Evaluation {
    index: usize,
    outcome: RunOutcome,
    crossing: f64,
}

impl Evaluation {
    /// Grid eradication step, then sub-grid crossing time, then earliest `τ`.
    fn better_than(&self, other: &Evaluation) -> bool {
        (self.outcome.end_index, self.crossing, self.index)
            < (other.outcome.end_index, other.crossing, other.index)
    }
}

/// Evaluates `J` on grid-aligned intervention starts, reusing the shared
/// uncontrolled prefix.
struct TauScanner<'a> {
    params: &'a ModelParams,
    policy: &'a Policy,
    cfg: &'a IntegratorConfig,
    prefix: Vec<crate::model::State>,
    unc: Evaluation,
}

impl<'a> TauScanner<'a> {
    fn new(params: &'a ModelParams, policy: &'a Policy, cfg: &'a IntegratorConfig) -> Result<Self> {
        let x0 = params.initial_state();
        let mut prefix = vec![x0];
        let out = run_from(
            params,
            policy,
            cfg,
            0,
            x0,
            usize::MAX,
            0.0,
            Some(&mut prefix),
        )?;
        if !out.eradicated {
            return Err(Error::HorizonExhausted {
                horizon: cfg.t_horizon,
            });
        }
        let unc = Evaluation {
            index: out.end_index,
            outcome: out,
            crossing: out.interpolated_time(cfg.dt, params.epsilon),
        };
        Ok(Self {
            params,
            policy,
            cfg,
            prefix,
            unc,
        })
    }

    fn unc_index(&self) -> usize {
        self.unc.outcome.end_index
    }

    fn evaluate(&self, index: usize) -> Result<Evaluation> {
        if index >= self.unc_index() {
            return Ok(Evaluation { index, ..self.unc });
        }
        let out = run_from(
            self.params,
            self.policy,
            self.cfg,
            index,
            self.prefix[index],
            index,
            self.policy.u_max(),
            None,
        )
        .map_err(|e| Error::Optimization {
            tau: grid_time(index, self.cfg.dt),
            source: Box::new(e),
        })?;
        if !out.eradicated {
            return Err(Error::Optimization {
                tau: grid_time(index, self.cfg.dt),
                source: Box::new(Error::HorizonExhausted {
                    horizon: self.cfg.t_horizon,
                }),
            });
        }
        Ok(Evaluation {
            index,
            outcome: out,
            crossing: out.interpolated_time(self.cfg.dt, self.params.epsilon),
        })
    }

    fn evaluate_all(&self, indices: &[usize]) -> Result<Vec<Evaluation>> {
        crate::par_map(indices, |&k| self.evaluate(k))
            .into_iter()
            .collect()
    }
}

/// Uniform mesh of grid indices over `[0, n]` with at most `m` points, spacing
/// an integer number of steps, both endpoints included.
fn mesh_indices(n: usize, m: usize) -> Vec<usize> {
    let stride = n.div_ceil(m.saturating_sub(1).max(1)).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    idx.push(n);
    idx
}

/// All grid indices in `[lo, hi]` if there are at most `m`, otherwise `m`
/// evenly spread ones.
fn refine_indices(lo: usize, hi: usize, m: usize) -> Vec<usize> {
    if hi - lo < m {
        return (lo..=hi).collect();
    }
    let span = (hi - lo) as f64;
    let mut idx: Vec<usize> = (0..m)
        .map(|k| lo + (k as f64 * span / (m - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

fn best_of(evals: &[Evaluation]) -> usize {
    let mut best = 0;
    for (k, e) in evals.iter().enumerate() {
        if e.better_than(&evals[best]) {
            best = k;
        }
    }
    best
}

/// Default number of coarse mesh points.
pub const DEFAULT_MESH_COUNT: usize = 400;

/// Minimizes the eradication time over the intervention start `τ ∈ [0, T_unc]`.
///
/// `J` is evaluated on a uniform mesh of `mesh_count` grid-aligned points and
/// then on every grid point (or `mesh_count` points) between the neighbours of
/// the best one. Candidates are ranked by grid eradication time; equal grid
/// times are ordered by the interpolated threshold crossing and then by the
/// smaller `τ`.
pub fn optimize(
    params: &ModelParams,
    policy: &Policy,
    mesh_count: usize,
    cfg: &IntegratorConfig,
) -> Result<OptimalResult> {
    if mesh_count < 2 {
        return Err(invalid(
            "mesh_count",
            format!("must be >= 2, got {mesh_count}"),
        ));
    }
    params.validate()?;
    cfg.validate()?;
    let dt = cfg.dt;
    let scanner = TauScanner::new(params, policy, cfg)?;
    let n_unc = scanner.unc_index();

    let coarse_idx = mesh_indices(n_unc, mesh_count);
    let coarse = scanner.evaluate_all(&coarse_idx)?;
    let j = best_of(&coarse);

    let lo = coarse_idx[j.saturating_sub(1)];
    let hi = coarse_idx[(j + 1).min(coarse_idx.len() - 1)];
    let fine = scanner.evaluate_all(&refine_indices(lo, hi, mesh_count))?;
    let f = best_of(&fine);
    let best = if fine[f].better_than(&coarse[j]) {
        fine[f]
    } else {
        coarse[j]
    };

    let min_steps = coarse[j].outcome.end_index.min(best.outcome.end_index);
    let near =
        |e: &Evaluation| grid_time(e.outcome.end_index - min_steps, dt) <= 2.0 * dt + 1e-12 * dt;
    let plateau = coarse.windows(3).any(|w| w.iter().all(near));

    let at_zero = coarse[0];
    let tau_star = grid_time(best.index, dt);
    let trajectory = simulate(
        params,
        policy,
        &ControlSchedule::new(tau_star, policy.u_max()),
        cfg,
    )?;
    let t_star = trajectory
        .eradication_time
        .expect("optimal schedule was evaluated as eradicating");

    let reported = |e: &Evaluation| {
        if cfg.interpolate_eradication {
            e.crossing
        } else {
            e.outcome.grid_time(dt)
        }
    };
    let evaluations = coarse
        .iter()
        .chain(&fine)
        .map(|e| (grid_time(e.index, dt), reported(e)))
        .collect();

    let mut result = OptimalResult {
        params: *params,
        policy: *policy,
        tau_star,
        t_star,
        t_at_zero: reported(&at_zero),
        t_unc: reported(&scanner.unc),
        regime: RegimeClass::ConstantMax,
        s_at_tstar: trajectory.final_state().s,
        s_at_tzero: at_zero.outcome.end_state.s,
        trajectory,
        mesh_spacing: grid_time(coarse_idx.get(1).copied().unwrap_or(0), dt),
        plateau,
        evaluations,
        dt,
    };
    result.regime = classify(&result, &result.trajectory, default_peak_tol(cfg), cfg);
    Ok(result)
}

/// Half-width of the "at the peak" band, three steps.
pub fn default_peak_tol(cfg: &IntegratorConfig) -> f64 {
    3.0 * cfg.dt
}

/// Regime of an optimum: constant if `τ* < dt`, otherwise by the position of
/// `τ*` relative to the infection peak of `traj`.
pub fn classify(
    result: &OptimalResult,
    traj: &Trajectory,
    peak_tol: f64,
    cfg: &IntegratorConfig,
) -> RegimeClass {
    if result.tau_star < cfg.dt {
        return RegimeClass::ConstantMax;
    }
    let tp = peak_time(traj);
    if result.tau_star < tp - peak_tol {
        RegimeClass::DelayedBeforePeak
    } else if result.tau_star > tp + peak_tol {
        RegimeClass::DelayedAfterPeak
    } else {
        RegimeClass::DelayedAtPeak
    }
}

/// Convenience: optimize with the default configuration for the problem.
pub fn optimize_default(params: &ModelParams, policy: &Policy) -> Result<OptimalResult> {
    let cfg = IntegratorConfig::for_problem(params, policy)?;
    optimize(params, policy, DEFAULT_MESH_COUNT, &cfg)
}

/// Intervention start after snapping to the integration grid.
pub fn snapped_tau(tau: f64, cfg: &IntegratorConfig) -> f64 {
    grid_time(tau_index(tau, cfg.dt), cfg.dt)
}
