//! Fixed-step Crank–Nicolson integration with eradication detection.
//!
//! Each step solves `x' = x + (dt/2)[F(x) + F(x')]` by Newton iteration on the
//! analytic Jacobian, falling back to a damped fixed-point iteration when
//! Newton does not settle. The control is held constant over a step and the
//! intervention time is snapped to the grid, so a bang-bang schedule never
//! switches inside a step.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{check_control, field, field_jacobian, ModelParams, Policy, State};
use crate::timeopt::ControlSchedule;

/// Step size, horizon and implicit-solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_horizon: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Report the eradication time by linear interpolation between the two
    /// grid points bracketing `I = ε` instead of the first grid point with
    /// `I ≤ ε`.
    pub interpolate_eradication: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_horizon: 1e3,
            newton_tol: 1e-9,
            newton_max_iter: 50,
            interpolate_eradication: false,
        }
    }
}

impl IntegratorConfig {
    /// Fraction of the fastest linear time scale used as the step ceiling.
    const RATE_FRACTION: f64 = 0.2;
    /// Minimum number of steps across the uncontrolled outbreak.
    const STEPS_PER_OUTBREAK: f64 = 5000.0;
    /// Horizon as a multiple of the uncontrolled eradication time.
    const HORIZON_FACTOR: f64 = 50.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_horizon > 0.0 && self.t_horizon.is_finite()) {
            return Err(invalid(
                "t_horizon",
                format!("must be > 0, got {}", self.t_horizon),
            ));
        }
        if !(self.newton_tol > 0.0) {
            return Err(invalid(
                "newton_tol",
                format!("must be > 0, got {}", self.newton_tol),
            ));
        }
        if self.newton_max_iter == 0 {
            return Err(invalid("newton_max_iter", "must be >= 1"));
        }
        Ok(())
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Default configuration for a problem: `dt` resolves the fastest linear
    /// decay and gives at least 5000 steps across the uncontrolled outbreak;
    /// the horizon is 50 uncontrolled eradication times.
    pub fn for_problem(params: &ModelParams, policy: &Policy) -> Result<Self> {
        params.validate()?;
        let mut dt = Self::rate_limited_dt(params, policy);
        let probe = Self {
            dt,
            t_horizon: 1e4 / params.mu,
            ..Self::default()
        };
        let t_unc = uncontrolled_eradication_time(params, &probe)?;
        dt = dt.min(t_unc / Self::STEPS_PER_OUTBREAK);
        Ok(Self {
            dt,
            t_horizon: Self::HORIZON_FACTOR * t_unc,
            ..Self::default()
        })
    }

    fn rate_limited_dt(params: &ModelParams, policy: &Policy) -> f64 {
        let fastest = (params.mu + policy.linear_rate()).max(params.beta * (params.s0 + params.i0));
        Self::RATE_FRACTION / fastest
    }

    fn max_steps(&self) -> usize {
        (self.t_horizon / self.dt + 1e-9).floor() as usize
    }
}

/// Optional replacements for fields of a derived [`IntegratorConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolate_eradication: Option<bool>,
}

impl IntegratorOverrides {
    pub fn apply(&self, mut cfg: IntegratorConfig) -> IntegratorConfig {
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.t_horizon {
            cfg.t_horizon = v;
        }
        if let Some(v) = self.newton_tol {
            cfg.newton_tol = v;
        }
        if let Some(v) = self.newton_max_iter {
            cfg.newton_max_iter = v;
        }
        if let Some(v) = self.interpolate_eradication {
            cfg.interpolate_eradication = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryStatus {
    /// `I ≤ ε` was reached on the grid.
    Eradicated,
    /// The horizon was exhausted first.
    HorizonReached,
}

/// Discrete record of a controlled run on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Control applied from each grid time to the next.
    pub controls: Vec<f64>,
    pub eradication_time: Option<f64>,
    pub status: TrajectoryStatus,
    pub dt: f64,
    /// Intervention start after grid snapping (`∞` if never applied).
    pub tau: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> State {
        *self
            .states
            .last()
            .expect("trajectory has at least one point")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least one point")
    }

    /// Grid index of the eradication point, if reached.
    pub fn eradication_index(&self) -> Option<usize> {
        match self.status {
            TrajectoryStatus::Eradicated => Some(self.len() - 1),
            TrajectoryStatus::HorizonReached => None,
        }
    }

    /// Crossing time of `I = ε` by linear interpolation between the
    /// bracketing grid points.
    pub fn interpolated_eradication_time(&self, epsilon: f64) -> Option<f64> {
        let k = self.eradication_index()?;
        Some(interpolate_crossing(
            self.times[k],
            self.dt,
            self.states[k - 1].i,
            self.states[k].i,
            epsilon,
        ))
    }

    /// Writes `t,S,I,u` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,S,I,u")?;
        for ((t, x), u) in self.times.iter().zip(&self.states).zip(&self.controls) {
            writeln!(w, "{t},{},{},{u}", x.s, x.i)?;
        }
        Ok(())
    }
}

fn interpolate_crossing(t_after: f64, dt: f64, i_before: f64, i_after: f64, epsilon: f64) -> f64 {
    let drop = i_before - i_after;
    if drop <= 0.0 {
        return t_after;
    }
    let frac = ((i_before - epsilon) / drop).clamp(0.0, 1.0);
    t_after - dt + frac * dt
}

/// One Crank–Nicolson step of length `cfg.dt` with constant control `u`.
///
/// A step failure reports `t = 0`, i.e. relative to the start of the step.
pub fn step(
    params: &ModelParams,
    policy: &Policy,
    state: State,
    u: f64,
    cfg: &IntegratorConfig,
) -> Result<State> {
    check_control(policy, u)?;
    if state.s < 0.0 || state.i < 0.0 {
        return Err(Error::NegativeState {
            s: state.s,
            i: state.i,
        });
    }
    cn_step(params, policy, state, u, cfg, 0.0)
}

pub(crate) fn cn_step(
    params: &ModelParams,
    policy: &Policy,
    x: State,
    u: f64,
    cfg: &IntegratorConfig,
    t: f64,
) -> Result<State> {
    let h = 0.5 * cfg.dt;
    let (fs, fi) = field(params, policy, x, u);
    let rhs_s = x.s + h * fs;
    let rhs_i = x.i + h * fi;
    let converged = |d_s: f64, d_i: f64, y: State| {
        d_s.abs() <= cfg.newton_tol * y.s.abs().max(1.0)
            && d_i.abs() <= cfg.newton_tol * y.i.abs().max(1.0)
    };

    // Newton from the explicit Euler predictor.
    let mut y = State::new(x.s + cfg.dt * fs, x.i + cfg.dt * fi);
    let mut solved = false;
    for _ in 0..cfg.newton_max_iter {
        let (gs, gi) = field(params, policy, y, u);
        let r_s = y.s - h * gs - rhs_s;
        let r_i = y.i - h * gi - rhs_i;
        let jf = field_jacobian(params, policy, y, u);
        let a = 1.0 - h * jf[0][0];
        let b = -h * jf[0][1];
        let c = -h * jf[1][0];
        let d = 1.0 - h * jf[1][1];
        let det = a * d - b * c;
        let d_s = -(d * r_s - b * r_i) / det;
        let d_i = -(a * r_i - c * r_s) / det;
        if !(d_s.is_finite() && d_i.is_finite()) {
            break;
        }
        y.s += d_s;
        y.i += d_i;
        if converged(d_s, d_i, y) {
            solved = true;
            break;
        }
    }

    if !solved {
        const DAMPING: f64 = 0.5;
        y = x;
        for _ in 0..10 * cfg.newton_max_iter {
            let (gs, gi) = field(params, policy, y, u);
            let d_s = DAMPING * (rhs_s + h * gs - y.s);
            let d_i = DAMPING * (rhs_i + h * gi - y.i);
            if !(d_s.is_finite() && d_i.is_finite()) {
                break;
            }
            y.s += d_s;
            y.i += d_i;
            if converged(d_s, d_i, y) {
                solved = true;
                break;
            }
        }
    }

    if !solved {
        return Err(Error::StepFailed {
            t,
            iterations: cfg.newton_max_iter,
        });
    }
    clamp_nonnegative(y, cfg.newton_tol)
}

fn clamp_nonnegative(y: State, tol: f64) -> Result<State> {
    let clamp = |v: f64| {
        if v >= 0.0 {
            Some(v)
        } else if v >= -tol {
            Some(0.0)
        } else {
            None
        }
    };
    match (clamp(y.s), clamp(y.i)) {
        (Some(s), Some(i)) => Ok(State::new(s, i)),
        _ => Err(Error::NegativeState { s: y.s, i: y.i }),
    }
}

/// Grid index at which a control starting at `tau` first applies.
pub(crate) fn tau_index(tau: f64, dt: f64) -> usize {
    if !tau.is_finite() {
        return usize::MAX;
    }
    let k = (tau / dt).round();
    if k >= usize::MAX as f64 {
        usize::MAX
    } else {
        k as usize
    }
}

pub(crate) fn grid_time(k: usize, dt: f64) -> f64 {
    k as f64 * dt
}

/// End point of a run, without the full trajectory.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RunOutcome {
    pub end_index: usize,
    pub end_state: State,
    pub prev_i: f64,
    pub eradicated: bool,
}

impl RunOutcome {
    pub fn grid_time(&self, dt: f64) -> f64 {
        grid_time(self.end_index, dt)
    }

    pub fn interpolated_time(&self, dt: f64, epsilon: f64) -> f64 {
        interpolate_crossing(
            self.grid_time(dt),
            dt,
            self.prev_i,
            self.end_state.i,
            epsilon,
        )
    }
}

/// Integrates from grid index `start` with state `x` until eradication or
/// the horizon, applying `u_on` from grid index `on_index` onward.
pub(crate) fn run_from(
    params: &ModelParams,
    policy: &Policy,
    cfg: &IntegratorConfig,
    start: usize,
    x: State,
    on_index: usize,
    u_on: f64,
    mut record: Option<&mut Vec<State>>,
) -> Result<RunOutcome> {
    let max_steps = cfg.max_steps();
    let mut k = start;
    let mut x = x;
    let mut prev_i = x.i;
    if x.i <= params.epsilon {
        return Ok(RunOutcome {
            end_index: k,
            end_state: x,
            prev_i,
            eradicated: true,
        });
    }
    while k < max_steps {
        let u = if k >= on_index { u_on } else { 0.0 };
        let next = cn_step(params, policy, x, u, cfg, grid_time(k, cfg.dt))?;
        prev_i = x.i;
        x = next;
        k += 1;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(x);
        }
        if x.i <= params.epsilon {
            return Ok(RunOutcome {
                end_index: k,
                end_state: x,
                prev_i,
                eradicated: true,
            });
        }
    }
    Ok(RunOutcome {
        end_index: k,
        end_state: x,
        prev_i,
        eradicated: false,
    })
}

/// Integrates the controlled system under a bang-bang schedule.
///
/// The control is `0` before the snapped intervention time and
/// `schedule.u_max` from it onward. Integration stops at the first grid point
/// with `I ≤ ε`; if the horizon comes first the trajectory is returned with
/// [`TrajectoryStatus::HorizonReached`] and no eradication time.
pub fn simulate(
    params: &ModelParams,
    policy: &Policy,
    schedule: &ControlSchedule,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    params.validate()?;
    cfg.validate()?;
    if !(schedule.tau >= 0.0) {
        return Err(invalid(
            "tau",
            format!("must be >= 0, got {}", schedule.tau),
        ));
    }
    check_control(policy, schedule.u_max)?;
    let on = tau_index(schedule.tau, cfg.dt);
    let x0 = params.initial_state();
    let mut states = vec![x0];
    let out = run_from(
        params,
        policy,
        cfg,
        0,
        x0,
        on,
        schedule.u_max,
        Some(&mut states),
    )?;
    Ok(build_trajectory(
        params,
        cfg,
        states,
        on,
        schedule.u_max,
        out.eradicated,
    ))
}

pub(crate) fn build_trajectory(
    params: &ModelParams,
    cfg: &IntegratorConfig,
    states: Vec<State>,
    on_index: usize,
    u_on: f64,
    eradicated: bool,
) -> Trajectory {
    let n = states.len();
    let times: Vec<f64> = (0..n).map(|k| grid_time(k, cfg.dt)).collect();
    let controls = (0..n)
        .map(|k| if k >= on_index { u_on } else { 0.0 })
        .collect();
    let tau = if on_index == usize::MAX {
        f64::INFINITY
    } else {
        grid_time(on_index, cfg.dt)
    };
    let (status, eradication_time) = if eradicated {
        let t_grid = times[n - 1];
        let t = if cfg.interpolate_eradication && n >= 2 {
            interpolate_crossing(
                t_grid,
                cfg.dt,
                states[n - 2].i,
                states[n - 1].i,
                params.epsilon,
            )
        } else {
            t_grid
        };
        (TrajectoryStatus::Eradicated, Some(t))
    } else {
        (TrajectoryStatus::HorizonReached, None)
    };
    Trajectory {
        times,
        states,
        controls,
        eradication_time,
        status,
        dt: cfg.dt,
        tau,
    }
}

/// Eradication time of the epidemic without any control.
pub fn uncontrolled_eradication_time(params: &ModelParams, cfg: &IntegratorConfig) -> Result<f64> {
    params.validate()?;
    cfg.validate()?;
    let policy = Policy::new(crate::model::PolicyKind::Isolation, 0.0)?;
    let out = run_from(
        params,
        &policy,
        cfg,
        0,
        params.initial_state(),
        usize::MAX,
        0.0,
        None,
    )?;
    if !out.eradicated {
        return Err(Error::HorizonExhausted {
            horizon: cfg.t_horizon,
        });
    }
    Ok(if cfg.interpolate_eradication {
        out.interpolated_time(cfg.dt, params.epsilon)
    } else {
        out.grid_time(cfg.dt)
    })
}

/// Grid time of the maximum of `I`, earliest on ties.
pub fn peak_time(traj: &Trajectory) -> f64 {
    let mut best = 0;
    for (k, x) in traj.states.iter().enumerate() {
        if x.i > traj.states[best].i {
            best = k;
        }
    }
    traj.times[best]
}
