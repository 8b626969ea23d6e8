//! Executes a resolved [`RunConfig`] and writes its output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sirtoc::{
    adjoint_backward, check_pmp, detect_transition, optimize, run_curves, run_map, simulate,
    ControlSchedule, IntegratorConfig, OptimalResult, Policy, RegimeClass,
};

use crate::config::{Command, RunConfig};
use crate::CliError;

/// Runs the configured subcommand and returns the one-line summary.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    match cfg.command {
        Command::Simulate => simulate_cmd(cfg),
        Command::Optimize => optimize_cmd(cfg),
        Command::VerifyPmp => verify_cmd(cfg),
        Command::Map => map_cmd(cfg),
        Command::Curves => curves_cmd(cfg),
    }
}

fn output_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_file(
    prefix: &Path,
    suffix: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<PathBuf, CliError> {
    let path = output_path(prefix, suffix);
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
    Ok(path)
}

fn single_policy(cfg: &RunConfig) -> Policy {
    cfg.policy
        .expect("validated: single runs carry an effort bound")
}

fn integrator(cfg: &RunConfig, policy: &Policy) -> Result<IntegratorConfig, CliError> {
    let c = cfg
        .integrator
        .apply(IntegratorConfig::for_problem(&cfg.params, policy)?);
    c.validate()?;
    Ok(c)
}

fn simulate_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let policy = single_policy(cfg);
    let icfg = integrator(cfg, &policy)?;
    let traj = simulate(
        &cfg.params,
        &policy,
        &ControlSchedule::new(cfg.tau, policy.u_max()),
        &icfg,
    )?;
    let path = write_file(&cfg.out, "_trajectory.csv", |w| traj.write_csv(w))?;
    let t = traj
        .eradication_time
        .map(|t| format!("T={t:.6}"))
        .unwrap_or_else(|| format!("not eradicated by t={:.6}", traj.final_time()));
    Ok(format!(
        "simulate: policy={} u_max={} tau={:.6} {t} S(T)={:.4} steps={} -> {}",
        policy.kind(),
        policy.u_max(),
        traj.tau,
        traj.final_state().s,
        traj.len() - 1,
        path.display()
    ))
}

fn run_optimize(cfg: &RunConfig) -> Result<(Policy, IntegratorConfig, OptimalResult), CliError> {
    let policy = single_policy(cfg);
    let icfg = integrator(cfg, &policy)?;
    let res = optimize(&cfg.params, &policy, cfg.mesh_count, &icfg)?;
    Ok((policy, icfg, res))
}

fn optimize_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let (_, _, res) = run_optimize(cfg)?;
    let path = write_file(&cfg.out, "_optimal.csv", |w| res.write_csv(w))?;
    write_file(&cfg.out, "_trajectory.csv", |w| res.trajectory.write_csv(w))?;
    Ok(format!(
        "optimize: policy={} u_max={} regime={} tau*={:.6} T*={:.6} T(tau=0)={:.6} T_unc={:.6}{} -> {}",
        res.policy.kind(),
        res.policy.u_max(),
        res.regime,
        res.tau_star,
        res.t_star,
        res.t_at_zero,
        res.t_unc,
        if res.plateau { " plateau" } else { "" },
        path.display()
    ))
}

fn verify_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let (policy, icfg, res) = run_optimize(cfg)?;
    let report = check_pmp(&cfg.params, &policy, &res, &icfg)?;
    let path = write_file(&cfg.out, "_pmp.csv", |w| report.write_csv(w))?;
    if cfg.adjoint {
        let adj = adjoint_backward(&cfg.params, &policy, &res.trajectory, &icfg)?;
        write_file(&cfg.out, "_adjoint.csv", |w| adj.write_csv(w))?;
    }
    let crossing = report
        .crossing_time()
        .map(|t| format!("{t:.6}"))
        .unwrap_or_else(|| "none".into());
    Ok(format!(
        "verify-pmp: {} regime={} tau*={:.6} max|H|={:.3e} (tol {:.3e}) sign violations={} crossing={crossing} -> {}",
        if report.passed() { "passed" } else { "FAILED" },
        res.regime,
        res.tau_star,
        report.ham_residual,
        report.tolerances.ham_tol,
        report.sign_violations,
        path.display()
    ))
}

fn map_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let map = run_map(&cfg.sweep)?;
    let path = write_file(&cfg.out, "_map.csv", |w| map.write_csv(w))?;
    if cfg.svg {
        let svg = map.to_svg();
        write_file(&cfg.out, "_map.svg", |w| w.write_all(svg.as_bytes()))?;
    }
    let counts: Vec<String> = RegimeClass::ALL
        .iter()
        .map(|&r| format!("{r}={}", map.count(r)))
        .collect();
    Ok(format!(
        "map: policy={} {}x{} cells {} failed={} -> {}",
        cfg.sweep.policy,
        cfg.sweep.n_x,
        cfg.sweep.n_y,
        counts.join(" "),
        map.failures(),
        path.display()
    ))
}

fn curves_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let table = run_curves(
        cfg.policy_kind,
        &cfg.params,
        cfg.curve_range,
        cfg.curve_points,
        cfg.mesh_count,
        &cfg.integrator,
    )?;
    let path = write_file(&cfg.out, "_curves.csv", |w| table.write_csv(w))?;
    let transition = detect_transition(&table)
        .map(|t| {
            format!(
                "transition at u_max~{:.4} (tau* drop {:.4}, T* change {:.2e})",
                t.u_star(),
                t.tau_drop,
                t.t_star_change
            )
        })
        .unwrap_or_else(|| "no transition".into());
    let rc1 = table
        .rc_unit_crossing
        .map(|u| format!(" RC=1 at u_max={u:.4}"))
        .unwrap_or_default();
    let failed = table.points.len() - table.successes().count();
    Ok(format!(
        "curves: policy={} points={} failed={failed} {transition}{rc1} -> {}",
        cfg.policy_kind,
        table.points.len(),
        path.display()
    ))
}
