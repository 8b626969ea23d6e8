//! Controlled SIR dynamics.
//!
//! The uncontrolled field is `f(S, I) = (-βSI, βSI - μI)`. Each policy adds a
//! term `u·g(S, I)`:
//!
//! | policy                 | g(S, I)          |
//! |------------------------|------------------|
//! | vaccination            | `(-S, 0)`        |
//! | isolation              | `(0, -I)`        |
//! | culling                | `(-S, -I)`       |
//! | transmission reduction | `(βSI, -βSI)`    |
//!
//! The three linear policies share `g = (-α₁S, -α₂I)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Epidemiological constants, initial state and eradication threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Transmission rate.
    pub beta: f64,
    /// Removal rate of infected individuals.
    pub mu: f64,
    pub s0: f64,
    pub i0: f64,
    /// Eradication threshold on `I`.
    #[serde(rename = "eps")]
    pub epsilon: f64,
}

impl ModelParams {
    pub const DEFAULT_S0: f64 = 2000.0;
    pub const DEFAULT_MU: f64 = 5.0;
    pub const DEFAULT_I0: f64 = 1.0;
    pub const DEFAULT_EPSILON: f64 = 0.5;

    pub fn new(beta: f64, mu: f64, s0: f64, i0: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            beta,
            mu,
            s0,
            i0,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with transmission rate chosen so that `R0 = βS0/μ` equals `r0`.
    pub fn from_r0(r0: f64, mu: f64, s0: f64, i0: f64, epsilon: f64) -> Result<Self> {
        Self::new(r0 * mu / s0, mu, s0, i0, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |field, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be finite, got {v}")))
            }
        };
        finite("beta", self.beta)?;
        finite("mu", self.mu)?;
        finite("s0", self.s0)?;
        finite("i0", self.i0)?;
        finite("eps", self.epsilon)?;
        if self.beta <= 0.0 {
            return Err(invalid("beta", format!("must be > 0, got {}", self.beta)));
        }
        if self.mu <= 0.0 {
            return Err(invalid("mu", format!("must be > 0, got {}", self.mu)));
        }
        if self.s0 <= 0.0 {
            return Err(invalid("s0", format!("must be > 0, got {}", self.s0)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(
                "eps",
                format!("must satisfy 0 < eps < 1, got {}", self.epsilon),
            ));
        }
        if self.i0 <= self.epsilon {
            return Err(invalid(
                "i0",
                format!(
                    "must be strictly greater than eps ({}), got {}",
                    self.epsilon, self.i0
                ),
            ));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> State {
        State {
            s: self.s0,
            i: self.i0,
        }
    }
}

impl Default for ModelParams {
    /// `R0 = 3` with the remaining values at their defaults.
    fn default() -> Self {
        Self {
            beta: 3.0 * Self::DEFAULT_MU / Self::DEFAULT_S0,
            mu: Self::DEFAULT_MU,
            s0: Self::DEFAULT_S0,
            i0: Self::DEFAULT_I0,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Vaccination,
    Isolation,
    Culling,
    #[serde(alias = "reduction")]
    TransmissionReduction,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Vaccination,
        PolicyKind::Isolation,
        PolicyKind::Culling,
        PolicyKind::TransmissionReduction,
    ];

    /// `(α₁, α₂)` of the linear control term; `None` for transmission reduction.
    pub fn alphas(self) -> Option<(f64, f64)> {
        match self {
            PolicyKind::Vaccination => Some((1.0, 0.0)),
            PolicyKind::Isolation => Some((0.0, 1.0)),
            PolicyKind::Culling => Some((1.0, 1.0)),
            PolicyKind::TransmissionReduction => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Vaccination => "vaccination",
            PolicyKind::Isolation => "isolation",
            PolicyKind::Culling => "culling",
            PolicyKind::TransmissionReduction => "transmission-reduction",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vaccination" | "v" => Ok(PolicyKind::Vaccination),
            "isolation" | "i" => Ok(PolicyKind::Isolation),
            "culling" | "c" => Ok(PolicyKind::Culling),
            "transmission-reduction" | "transmission_reduction" | "reduction" | "r" => {
                Ok(PolicyKind::TransmissionReduction)
            }
            other => Err(invalid("policy", format!("unknown policy `{other}`"))),
        }
    }
}

/// A control policy together with its effort bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    u_max: f64,
    alpha1: f64,
    alpha2: f64,
}

impl Policy {
    pub fn new(kind: PolicyKind, u_max: f64) -> Result<Self> {
        if !u_max.is_finite() || u_max < 0.0 {
            return Err(invalid(
                "u_max",
                format!("must be finite and >= 0, got {u_max}"),
            ));
        }
        if kind == PolicyKind::TransmissionReduction && u_max > 1.0 {
            return Err(invalid(
                "u_max",
                format!("transmission reduction requires 0 <= u_max <= 1, got {u_max}"),
            ));
        }
        let (alpha1, alpha2) = kind.alphas().unwrap_or((0.0, 0.0));
        Ok(Self {
            kind,
            u_max,
            alpha1,
            alpha2,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn is_linear(&self) -> bool {
        self.kind != PolicyKind::TransmissionReduction
    }

    /// Same policy with a different effort bound.
    pub fn with_u_max(&self, u_max: f64) -> Result<Self> {
        Self::new(self.kind, u_max)
    }

    /// Largest per-capita rate the control adds to either compartment.
    pub(crate) fn linear_rate(&self) -> f64 {
        if self.is_linear() {
            self.u_max * self.alpha1.max(self.alpha2)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub i: f64,
}

impl State {
    pub fn new(s: f64, i: f64) -> Self {
        Self { s, i }
    }
}

/// 2×2 matrix in row-major order.
pub(crate) type Mat2 = [[f64; 2]; 2];

/// `F(x) = f(x) + u·g(x)` without range checks.
#[inline]
pub(crate) fn field(params: &ModelParams, policy: &Policy, x: State, u: f64) -> (f64, f64) {
    let (s, i) = (x.s, x.i);
    if policy.is_linear() {
        let inf = params.beta * s * i;
        (
            -inf - policy.alpha1 * u * s,
            inf - params.mu * i - policy.alpha2 * u * i,
        )
    } else {
        let inf = params.beta * (1.0 - u) * s * i;
        (-inf, inf - params.mu * i)
    }
}

/// Jacobian `∂F/∂x` of the controlled field.
#[inline]
pub(crate) fn field_jacobian(params: &ModelParams, policy: &Policy, x: State, u: f64) -> Mat2 {
    let (s, i) = (x.s, x.i);
    let (b, a1, a2) = if policy.is_linear() {
        (params.beta, policy.alpha1, policy.alpha2)
    } else {
        (params.beta * (1.0 - u), 0.0, 0.0)
    };
    [
        [-b * i - a1 * u, -b * s],
        [b * i, b * s - params.mu - a2 * u],
    ]
}

/// Control direction `g(x)`.
#[inline]
pub(crate) fn control_direction(params: &ModelParams, policy: &Policy, x: State) -> (f64, f64) {
    if policy.is_linear() {
        (-policy.alpha1 * x.s, -policy.alpha2 * x.i)
    } else {
        let inf = params.beta * x.s * x.i;
        (inf, -inf)
    }
}

/// Rate of change `(dS/dt, dI/dt)` of the controlled system at `state` under
/// control value `u`.
pub fn vector_field(
    params: &ModelParams,
    policy: &Policy,
    state: State,
    u: f64,
) -> Result<(f64, f64)> {
    check_control(policy, u)?;
    if state.s < 0.0 || state.i < 0.0 || state.s.is_nan() || state.i.is_nan() {
        return Err(Error::NegativeState {
            s: state.s,
            i: state.i,
        });
    }
    Ok(field(params, policy, state, u))
}

pub(crate) fn check_control(policy: &Policy, u: f64) -> Result<()> {
    if !(0.0..=policy.u_max).contains(&u) {
        return Err(Error::ControlOutOfRange {
            u,
            u_max: policy.u_max,
        });
    }
    Ok(())
}

/// Basic reproduction number `βS0/μ`.
pub fn r0(params: &ModelParams) -> f64 {
    params.beta * params.s0 / params.mu
}

/// Control reproduction number with the control held at `u_max` from `t = 0`.
pub fn rc(params: &ModelParams, policy: &Policy) -> f64 {
    let base = params.beta * params.s0;
    match policy.kind {
        PolicyKind::Vaccination => base / params.mu,
        PolicyKind::Isolation | PolicyKind::Culling => base / (params.mu + policy.u_max),
        PolicyKind::TransmissionReduction => base * (1.0 - policy.u_max) / params.mu,
    }
}
