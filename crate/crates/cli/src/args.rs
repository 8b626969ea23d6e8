//! Command-line flags. Every flag maps onto a config-file key.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sirtoc::{PolicyKind, SweepAxis};

use crate::config::{Command, ConfigLayer, CurvesLayer, MapLayer};

#[derive(Debug, Parser)]
#[command(
    name = "sirtoc",
    version,
    about = "Time-optimal bang-bang control of SIR epidemics",
    arg_required_else_help = true,
    after_help = "Set SIRTOC_WORKERS to cap the number of worker threads used by map and curves."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Integrate one schedule and write the trajectory.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Intervention start time.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Find the intervention start minimizing the eradication time.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Optimize, then check the minimum-principle conditions.
    VerifyPmp {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the costate trajectory.
        #[arg(long)]
        adjoint: bool,
    },
    /// Classify optima over an effort (or initial infected) by R0 grid.
    Map {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        map: MapArgs,
        /// Also render the map as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Optimal and constant-control quantities along the effort bound.
    Curves {
        #[command(flatten)]
        common: CommonArgs,
        /// Effort range as LO,HI.
        #[arg(long, value_parser = parse_pair)]
        u_range: Option<(f64, f64)>,
        /// Number of effort samples.
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// vaccination, isolation, culling or transmission-reduction.
    #[arg(long)]
    pub policy: Option<PolicyKind>,
    /// Effort bound.
    #[arg(long = "u-max", visible_alias = "umax")]
    pub u_max: Option<f64>,
    /// Basic reproduction number; sets beta = R0*mu/s0.
    #[arg(long = "r0", conflicts_with = "beta")]
    pub r0: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub i0: Option<f64>,
    /// Eradication threshold.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Time step; derived from the problem when omitted.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_horizon: Option<f64>,
    /// Number of mesh points for the intervention-start scan.
    #[arg(long)]
    pub mesh_count: Option<usize>,
    /// Output path prefix.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// u_max or i0.
    #[arg(long)]
    pub x_axis: Option<SweepAxis>,
    /// Horizontal range as LO,HI.
    #[arg(long, value_parser = parse_pair)]
    pub x_range: Option<(f64, f64)>,
    #[arg(long)]
    pub n_x: Option<usize>,
    /// R0 range as LO,HI.
    #[arg(long, value_parser = parse_pair)]
    pub r0_range: Option<(f64, f64)>,
    #[arg(long)]
    pub n_y: Option<usize>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

impl CommonArgs {
    fn layer(&self) -> ConfigLayer {
        let mut l = ConfigLayer {
            policy: self.policy,
            u_max: self.u_max,
            r0: self.r0,
            beta: self.beta,
            mu: self.mu,
            s0: self.s0,
            i0: self.i0,
            eps: self.eps,
            mesh_count: self.mesh_count,
            out: self.out.clone(),
            ..Default::default()
        };
        l.integrator.dt = self.dt;
        l.integrator.t_horizon = self.t_horizon;
        l
    }
}

impl CliCommand {
    pub fn command(&self) -> Command {
        match self {
            CliCommand::Simulate { .. } => Command::Simulate,
            CliCommand::Optimize { .. } => Command::Optimize,
            CliCommand::VerifyPmp { .. } => Command::VerifyPmp,
            CliCommand::Map { .. } => Command::Map,
            CliCommand::Curves { .. } => Command::Curves,
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            CliCommand::Simulate { common, .. }
            | CliCommand::Optimize { common }
            | CliCommand::VerifyPmp { common, .. }
            | CliCommand::Map { common, .. }
            | CliCommand::Curves { common, .. } => common,
        }
    }

    /// The flag layer; boolean switches only count when given.
    pub fn layer(&self) -> ConfigLayer {
        let mut l = self.common().layer();
        match self {
            CliCommand::Simulate { tau, .. } => l.tau = *tau,
            CliCommand::Optimize { .. } => {}
            CliCommand::VerifyPmp { adjoint, .. } => l.adjoint = adjoint.then_some(true),
            CliCommand::Map { map, svg, .. } => {
                l.svg = svg.then_some(true);
                l.map = MapLayer {
                    x_axis: map.x_axis,
                    x_range: map.x_range,
                    n_x: map.n_x,
                    r0_range: map.r0_range,
                    n_y: map.n_y,
                };
            }
            CliCommand::Curves { u_range, n, .. } => {
                l.curves = CurvesLayer {
                    u_range: *u_range,
                    n: *n,
                }
            }
        }
        l
    }
}
