//! Layered run configuration: command-line flags over a TOML file over
//! built-in defaults. File keys are named like the CSV columns.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sirtoc::{
    IntegratorOverrides, ModelParams, Policy, PolicyKind, SweepAxis, SweepSpec, DEFAULT_MESH_COUNT,
};

use crate::CliError;

pub const DEFAULT_OUT: &str = "sirtoc";
pub const DEFAULT_CURVE_POINTS: usize = 200;
pub const DEFAULT_R0_RANGE: (f64, f64) = (0.5, 5.0);
pub const DEFAULT_I0_RANGE: (f64, f64) = (1.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Optimize,
    VerifyPmp,
    Map,
    Curves,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::VerifyPmp => "verify-pmp",
            Command::Map => "map",
            Command::Curves => "curves",
        }
    }

    fn needs_policy_bound(self) -> bool {
        !matches!(self, Command::Map | Command::Curves)
    }
}

/// `[map]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapLayer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_axis: Option<SweepAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_y: Option<usize>,
}

/// `[curves]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesLayer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

/// One configuration source; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(rename = "R0", skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Intervention start for `simulate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjoint: Option<bool>,
    #[serde(skip_serializing_if = "is_empty_overrides")]
    pub integrator: IntegratorOverrides,
    #[serde(skip_serializing_if = "is_default")]
    pub map: MapLayer,
    #[serde(skip_serializing_if = "is_default")]
    pub curves: CurvesLayer,
}

fn is_empty_overrides(o: &IntegratorOverrides) -> bool {
    *o == IntegratorOverrides::default()
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Config(format!("config file: {}", e.message().trim())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config layers always serialize")
    }

    /// Field-wise `self` over `lower`. The transmission rate travels with
    /// `R0`: whichever layer names either of them wins as a pair.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        let (r0, beta) = if self.r0.is_some() || self.beta.is_some() {
            (self.r0, self.beta)
        } else {
            (lower.r0, lower.beta)
        };
        let i = self.integrator;
        let li = lower.integrator;
        ConfigLayer {
            policy: self.policy.or(lower.policy),
            u_max: self.u_max.or(lower.u_max),
            r0,
            beta,
            mu: self.mu.or(lower.mu),
            s0: self.s0.or(lower.s0),
            i0: self.i0.or(lower.i0),
            eps: self.eps.or(lower.eps),
            tau: self.tau.or(lower.tau),
            mesh_count: self.mesh_count.or(lower.mesh_count),
            out: self.out.or(lower.out),
            svg: self.svg.or(lower.svg),
            adjoint: self.adjoint.or(lower.adjoint),
            integrator: IntegratorOverrides {
                dt: i.dt.or(li.dt),
                t_horizon: i.t_horizon.or(li.t_horizon),
                newton_tol: i.newton_tol.or(li.newton_tol),
                newton_max_iter: i.newton_max_iter.or(li.newton_max_iter),
                interpolate_eradication: i.interpolate_eradication.or(li.interpolate_eradication),
            },
            map: MapLayer {
                x_axis: self.map.x_axis.or(lower.map.x_axis),
                x_range: self.map.x_range.or(lower.map.x_range),
                n_x: self.map.n_x.or(lower.map.n_x),
                r0_range: self.map.r0_range.or(lower.map.r0_range),
                n_y: self.map.n_y.or(lower.map.n_y),
            },
            curves: CurvesLayer {
                u_range: self.curves.u_range.or(lower.curves.u_range),
                n: self.curves.n.or(lower.curves.n),
            },
        }
    }
}

/// Fully resolved and validated configuration of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    pub policy_kind: PolicyKind,
    /// Effort bound; absent only for sweeps that vary it.
    pub policy: Option<Policy>,
    pub integrator: IntegratorOverrides,
    pub tau: f64,
    pub mesh_count: usize,
    pub sweep: SweepSpec,
    pub curve_range: (f64, f64),
    pub curve_points: usize,
    pub out: PathBuf,
    pub svg: bool,
    pub adjoint: bool,
}

fn config_err(e: sirtoc::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Resolves `flags` over the optional file contents over the defaults.
pub fn parse_config(
    command: Command,
    file: Option<&str>,
    flags: ConfigLayer,
) -> Result<RunConfig, CliError> {
    let file_layer = file
        .map(ConfigLayer::from_toml)
        .transpose()?
        .unwrap_or_default();
    resolve(command, flags.over(file_layer))
}

fn resolve(command: Command, c: ConfigLayer) -> Result<RunConfig, CliError> {
    let mu = c.mu.unwrap_or(ModelParams::DEFAULT_MU);
    let s0 = c.s0.unwrap_or(ModelParams::DEFAULT_S0);
    let i0 = c.i0.unwrap_or(ModelParams::DEFAULT_I0);
    let eps = c.eps.unwrap_or(ModelParams::DEFAULT_EPSILON);
    let beta = match (c.r0, c.beta) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "invalid `R0`: give either `R0` or `beta`, not both".into(),
            ))
        }
        (None, Some(b)) => b,
        (r0, None) => r0.unwrap_or_else(|| sirtoc::r0(&ModelParams::default())) * mu / s0,
    };
    let params = ModelParams::new(beta, mu, s0, i0, eps).map_err(config_err)?;
    let policy_kind = c
        .policy
        .ok_or_else(|| CliError::Config("missing `policy`".into()))?;
    let policy = match c.u_max {
        Some(u) => Some(Policy::new(policy_kind, u).map_err(config_err)?),
        None if command.needs_policy_bound() => {
            return Err(CliError::Config("missing `u_max`".into()))
        }
        None => None,
    };
    let tau = c.tau.unwrap_or(0.0);
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(CliError::Config(format!(
            "invalid `tau`: must be >= 0, got {tau}"
        )));
    }
    let mesh_count = c.mesh_count.unwrap_or(DEFAULT_MESH_COUNT);
    if mesh_count < 2 {
        return Err(CliError::Config(
            "invalid `mesh_count`: must be >= 2".into(),
        ));
    }
    let u_top = if policy_kind == PolicyKind::TransmissionReduction {
        1.0
    } else {
        2.0 * mu
    };

    let axis = c.map.x_axis.unwrap_or(SweepAxis::UMax);
    let n_x = c.map.n_x.unwrap_or(SweepSpec::DEFAULT_RESOLUTION);
    let x_range = c.map.x_range.unwrap_or(match axis {
        SweepAxis::UMax => (u_top / n_x.max(1) as f64, u_top),
        SweepAxis::I0 => DEFAULT_I0_RANGE,
    });
    let mut sweep = SweepSpec::effort_map(
        policy_kind,
        x_range,
        c.map.r0_range.unwrap_or(DEFAULT_R0_RANGE),
    )
    .with_resolution(n_x, c.map.n_y.unwrap_or(SweepSpec::DEFAULT_RESOLUTION));
    sweep.s0 = s0;
    sweep.i0 = i0;
    sweep.mu = mu;
    sweep.eps = eps;
    sweep.x_axis = axis;
    sweep.mesh_count = mesh_count;
    sweep.integrator = c.integrator;
    match (axis, &policy) {
        (SweepAxis::I0, Some(p)) => sweep.u_max = p.u_max(),
        (SweepAxis::I0, None) if command == Command::Map => {
            return Err(CliError::Config(
                "missing `u_max`: required when `x_axis` is i0".into(),
            ))
        }
        _ => {}
    }
    if command == Command::Map {
        sweep.validate().map_err(config_err)?;
    }

    let curve_points = c.curves.n.unwrap_or(DEFAULT_CURVE_POINTS);
    let curve_range = c
        .curves
        .u_range
        .unwrap_or((u_top / curve_points.max(1) as f64, u_top));
    if command == Command::Curves {
        if curve_points < 2 {
            return Err(CliError::Config("invalid `n`: must be >= 2".into()));
        }
        let (lo, hi) = curve_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(CliError::Config(format!(
                "invalid `u_range`: need 0 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Policy::new(policy_kind, hi).map_err(config_err)?;
    }

    let cfg_check = c.integrator.apply(sirtoc::IntegratorConfig {
        dt: 1.0,
        t_horizon: 1.0,
        ..Default::default()
    });
    cfg_check.validate().map_err(config_err)?;

    Ok(RunConfig {
        command,
        params,
        policy_kind,
        policy,
        integrator: c.integrator,
        tau,
        mesh_count,
        sweep,
        curve_range,
        curve_points,
        out: c.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        svg: c.svg.unwrap_or(false),
        adjoint: c.adjoint.unwrap_or(false),
    })
}

impl RunConfig {
    /// Every resolved setting as a config layer; parsing it back with the
    /// same command reproduces `self`.
    pub fn to_layer(&self) -> ConfigLayer {
        ConfigLayer {
            policy: Some(self.policy_kind),
            u_max: self.policy.map(|p| p.u_max()),
            r0: None,
            beta: Some(self.params.beta),
            mu: Some(self.params.mu),
            s0: Some(self.params.s0),
            i0: Some(self.params.i0),
            eps: Some(self.params.epsilon),
            tau: Some(self.tau),
            mesh_count: Some(self.mesh_count),
            out: Some(self.out.clone()),
            svg: Some(self.svg),
            adjoint: Some(self.adjoint),
            integrator: self.integrator,
            map: MapLayer {
                x_axis: Some(self.sweep.x_axis),
                x_range: Some(self.sweep.x_range),
                n_x: Some(self.sweep.n_x),
                r0_range: Some(self.sweep.r0_range),
                n_y: Some(self.sweep.n_y),
            },
            curves: CurvesLayer {
                u_range: Some(self.curve_range),
                n: Some(self.curve_points),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        self.to_layer().to_toml()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(text: &str) -> ConfigLayer {
        ConfigLayer::from_toml(text).unwrap()
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = parse_config(
            Command::Optimize,
            Some("policy = \"vaccination\"\nu_max = 3.0"),
            ConfigLayer::default(),
        )
        .unwrap();
        assert_eq!(cfg.params.epsilon, 0.5);
        assert_eq!(cfg.params.s0, 2000.0);
        assert_eq!(cfg.params.mu, 5.0);
        assert_eq!(cfg.params.i0, 1.0);
        assert_eq!(cfg.mesh_count, DEFAULT_MESH_COUNT);
        assert!((sirtoc::r0(&cfg.params) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn flags_beat_file() {
        let flags = ConfigLayer {
            u_max: Some(4.0),
            r0: Some(2.0),
            ..Default::default()
        };
        let cfg = parse_config(
            Command::Optimize,
            Some("policy = \"isolation\"\nu_max = 1.0\nbeta = 0.02\nmu = 4.0"),
            flags,
        )
        .unwrap();
        assert_eq!(cfg.policy.unwrap().u_max(), 4.0);
        assert_eq!(cfg.params.mu, 4.0);
        assert!((sirtoc::r0(&cfg.params) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_i0_at_threshold() {
        let err = parse_config(
            Command::Optimize,
            Some("policy = \"culling\"\nu_max = 1.0\ni0 = 0.5"),
            ConfigLayer::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("i0"), "{err}");
    }

    #[test]
    fn rejects_reduction_above_one() {
        let err = parse_config(
            Command::Optimize,
            Some("policy = \"reduction\"\nu_max = 1.5"),
            ConfigLayer::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("u_max"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = ConfigLayer::from_toml("policy = \"culling\"\nepsilon = 0.5").unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        let err = ConfigLayer::from_toml("[integrator]\nstep = 0.1").unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
    }

    #[test]
    fn rejects_r0_with_beta() {
        let err = parse_config(
            Command::Optimize,
            Some("policy = \"culling\"\nu_max = 1.0\nR0 = 2.0\nbeta = 0.01"),
            ConfigLayer::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("R0"), "{err}");
    }

    #[test]
    fn missing_bound_only_matters_for_single_runs() {
        let text = "policy = \"isolation\"";
        assert!(parse_config(Command::Optimize, Some(text), ConfigLayer::default()).is_err());
        let map = parse_config(Command::Map, Some(text), ConfigLayer::default()).unwrap();
        assert_eq!(map.sweep.x_range, (10.0 / 60.0, 10.0));
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            policy = "transmission-reduction"
            u_max = 0.4
            R0 = 2.0
            tau = 1.5
            out = "runs/a"
            svg = true
            [integrator]
            dt = 0.001
            [map]
            x_axis = "i0"
            x_range = [1.0, 20.0]
            n_x = 5
            n_y = 4
            [curves]
            n = 30
        "#;
        let cfg = parse_config(Command::Map, Some(text), ConfigLayer::default()).unwrap();
        let again =
            parse_config(Command::Map, Some(&cfg.to_toml()), ConfigLayer::default()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(layer(&cfg.to_toml()), cfg.to_layer());
    }
}
