//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p sirtoc --test acceptance`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sirtoc::pmp::check_trajectory;
use sirtoc::{
    check_pmp, detect_transition, optimize, optimize_default, run_curves, run_map, simulate,
    uncontrolled_eradication_time, ControlSchedule, CurveTable, IntegratorConfig, ModelParams,
    Policy, PolicyKind, RegimeClass, SweepSpec, DEFAULT_MESH_COUNT,
};

const MU: f64 = 5.0;
const S0: f64 = 2000.0;
const I0: f64 = 1.0;
const EPS: f64 = 0.5;

const MAP_N: usize = 20;
const MAP_RUNTIME_LIMIT: Duration = Duration::from_secs(300);
const CURVE_N: usize = 200;
const REFINE_N: usize = 51;
const T_STAR_JUMP_DT: f64 = 5.0;
const FOLD_RANGE: (f64, f64) = (2.0 * 0.8, 5.0 * 1.2);
const PERTURB_FRACTION: f64 = 0.2;
const PERTURB_MIN_FAILS: usize = 9;
const FINAL_SIZE_TOL: f64 = 1e-3;
const HALVING_DT: f64 = 2.0;
const RANDOM_RUNS: usize = 1000;
const RANDOM_SEED: u64 = 20_160_901;
const S_JUMP_FACTOR: f64 = 10.0;

type Outcome = Result<String, String>;

fn params(r0: f64) -> ModelParams {
    ModelParams::from_r0(r0, MU, S0, I0, EPS).unwrap()
}

fn curve(kind: PolicyKind, r0: f64, range: (f64, f64), n: usize) -> Result<CurveTable, String> {
    run_curves(
        kind,
        &params(r0),
        range,
        n,
        DEFAULT_MESH_COUNT,
        &Default::default(),
    )
    .map_err(|e| e.to_string())
}

fn effort_curve(kind: PolicyKind) -> Result<CurveTable, String> {
    let hi = if kind == PolicyKind::TransmissionReduction {
        1.0
    } else {
        2.0 * MU
    };
    curve(kind, 2.0, (hi / CURVE_N as f64, hi), CURVE_N)
}

fn criterion_1() -> Outcome {
    let spec = SweepSpec::effort_map(
        PolicyKind::Vaccination,
        (2.0 * MU / MAP_N as f64, 2.0 * MU),
        (0.5, 5.0),
    )
    .with_resolution(MAP_N, MAP_N);
    let start = Instant::now();
    let map = run_map(&spec).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut bad = Vec::new();
    for cell in &map.cells {
        match &cell.outcome {
            Err(e) => bad.push(format!("({}, {}) failed: {e}", cell.x, cell.y)),
            Ok(s) => {
                let must_be_constant = cell.y < 1.0 || cell.x > MU;
                if must_be_constant && s.regime != RegimeClass::ConstantMax {
                    bad.push(format!("({}, {}) is {}", cell.x, cell.y, s.regime));
                }
                if matches!(
                    s.regime,
                    RegimeClass::DelayedAtPeak | RegimeClass::DelayedAfterPeak
                ) {
                    bad.push(format!("({}, {}) is {}", cell.x, cell.y, s.regime));
                }
            }
        }
    }
    if elapsed > MAP_RUNTIME_LIMIT {
        bad.push(format!("runtime {elapsed:?}"));
    }
    let detail = format!(
        "{} cells in {:.1?}, constant {}, before-peak {}",
        map.cells.len(),
        elapsed,
        map.count(RegimeClass::ConstantMax),
        map.count(RegimeClass::DelayedBeforePeak)
    );
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", bad.join("; ")))
    }
}

fn criterion_2() -> Outcome {
    let coarse = curve(
        PolicyKind::Vaccination,
        3.0,
        (2.0 * MU / CURVE_N as f64, 2.0 * MU),
        CURVE_N,
    )?;
    let t = detect_transition(&coarse).ok_or("no transition on the coarse curve")?;
    if t.u_star() >= MU {
        return Err(format!("transition at u = {} is not below mu", t.u_star()));
    }
    let fine = curve(
        PolicyKind::Vaccination,
        3.0,
        (t.u_before, t.u_after),
        REFINE_N,
    )?;
    let ft = detect_transition(&fine).ok_or("transition lost on the refined curve")?;
    let limit = T_STAR_JUMP_DT * fine.dt;
    let detail = format!(
        "u* in [{:.4}, {:.4}], tau drop {:.4}, |dT*| {:.2e} (limit {:.2e})",
        ft.u_before,
        ft.u_after,
        ft.tau_drop,
        ft.t_star_change.abs(),
        limit
    );
    if ft.t_star_change.abs() <= limit && ft.u_star() < MU {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let spec = SweepSpec::effort_map(
        PolicyKind::Isolation,
        (2.0 * MU / MAP_N as f64, 2.0 * MU),
        (1.2, 5.0),
    )
    .with_resolution(MAP_N, MAP_N);
    let map = run_map(&spec).map_err(|e| e.to_string())?;
    let after = map.count(RegimeClass::DelayedAfterPeak);
    let constant = map.count(RegimeClass::ConstantMax);
    let detail = format!(
        "after-peak {after}, constant {constant}, failed {}",
        map.failures()
    );
    if after > 0 && constant > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4(curves: &[(PolicyKind, CurveTable)]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, table) in curves {
        let hits: Vec<f64> = table
            .successes()
            .filter(|(_, s)| s.rc < 1.0 && s.tau_star > 0.0)
            .map(|(u, _)| u)
            .collect();
        ok &= !hits.is_empty();
        parts.push(format!(
            "{kind}: {} points, e.g. {:?}",
            hits.len(),
            hits.first()
        ));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5(curves: &[(PolicyKind, CurveTable)]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, table) in curves {
        let (u, ratio) = table
            .successes()
            .map(|(u, s)| (u, s.t_at_zero / s.t_unc))
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        ok &= (FOLD_RANGE.0..=FOLD_RANGE.1).contains(&ratio);
        parts.push(format!("{kind}: max {ratio:.3} at u = {u:.3}"));
    }
    let detail = format!("{} (accepted {:?})", parts.join("; "), FOLD_RANGE);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let cases = [
        (PolicyKind::Vaccination, 3.0, 0.5),
        (PolicyKind::Vaccination, 3.0, 2.0),
        (PolicyKind::Isolation, 2.0, 1.0),
        (PolicyKind::Isolation, 2.0, 5.1),
        (PolicyKind::Isolation, 2.0, 6.0),
        (PolicyKind::Culling, 3.0, 0.5),
        (PolicyKind::Culling, 3.0, 2.0),
        (PolicyKind::TransmissionReduction, 2.0, 0.3),
        (PolicyKind::TransmissionReduction, 2.0, 0.9),
        (PolicyKind::TransmissionReduction, 3.0, 0.6),
    ];
    let mut failures = Vec::new();
    let mut perturbed_fails = 0;
    let mut regimes = Vec::new();
    for (kind, r0, u) in cases {
        let p = params(r0);
        let policy = Policy::new(kind, u).unwrap();
        let cfg = IntegratorConfig::for_problem(&p, &policy).map_err(|e| e.to_string())?;
        let res = optimize(&p, &policy, DEFAULT_MESH_COUNT, &cfg).map_err(|e| e.to_string())?;
        regimes.push(res.regime);
        let report = check_pmp(&p, &policy, &res, &cfg).map_err(|e| e.to_string())?;
        if !report.passed() {
            failures.push(format!("{kind} R0={r0} u={u}: {report:?}"));
        }
        let shift = PERTURB_FRACTION * res.t_unc;
        let tau = if res.tau_star + shift <= res.t_unc {
            res.tau_star + shift
        } else {
            res.tau_star - shift
        };
        let traj = simulate(&p, &policy, &ControlSchedule::new(tau, u), &cfg)
            .map_err(|e| e.to_string())?;
        let perturbed = check_trajectory(&p, &policy, &traj, &cfg).map_err(|e| e.to_string())?;
        if !perturbed.passed() {
            perturbed_fails += 1;
        }
    }
    let distinct = RegimeClass::ALL
        .iter()
        .filter(|r| regimes.contains(r))
        .count();
    let detail = format!(
        "optima passing {}/{}, perturbed failing {perturbed_fails}/{} (need {PERTURB_MIN_FAILS}), {distinct} regimes",
        cases.len() - failures.len(),
        cases.len(),
        cases.len()
    );
    if failures.is_empty() && perturbed_fails >= PERTURB_MIN_FAILS {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    let zero = Policy::new(PolicyKind::Vaccination, 0.0).unwrap();
    for r0 in [1.5, 2.0, 3.0] {
        let p = params(r0);
        let cfg = IntegratorConfig::for_problem(&p, &zero).map_err(|e| e.to_string())?;
        let fine = cfg.with_dt(cfg.dt / 4.0);
        let traj = simulate(&p, &zero, &ControlSchedule::constant(0.0), &fine)
            .map_err(|e| e.to_string())?;
        let v = |s: f64, i: f64| s + i - p.mu / p.beta * s.ln();
        let end = traj.final_state();
        let residual = (v(end.s, end.i) - v(p.s0, p.i0)).abs() / (p.s0 + p.i0);
        if residual >= FINAL_SIZE_TOL {
            bad.push(format!("R0={r0} final-size residual {residual:.2e}"));
        }
        parts.push(format!("R0={r0}: {residual:.1e}"));
    }
    let mut worst: f64 = 0.0;
    let cases = [
        (PolicyKind::Vaccination, 1.5, 0.0),
        (PolicyKind::Vaccination, 2.0, 0.0),
        (PolicyKind::Vaccination, 3.0, 0.0),
        (PolicyKind::Vaccination, 3.0, 0.5),
        (PolicyKind::Isolation, 2.0, 1.0),
        (PolicyKind::Culling, 3.0, 2.0),
        (PolicyKind::TransmissionReduction, 2.0, 0.3),
    ];
    for (kind, r0, u) in cases {
        let p = params(r0);
        let policy = Policy::new(kind, u).unwrap();
        let cfg = IntegratorConfig::for_problem(&p, &policy).map_err(|e| e.to_string())?;
        let half = cfg.with_dt(cfg.dt / 2.0);
        let times = |c: &IntegratorConfig| -> Result<Vec<f64>, String> {
            if u == 0.0 {
                return uncontrolled_eradication_time(&p, c)
                    .map(|t| vec![t])
                    .map_err(|e| e.to_string());
            }
            let r = optimize(&p, &policy, DEFAULT_MESH_COUNT, c).map_err(|e| e.to_string())?;
            Ok(vec![r.t_unc, r.t_star, r.t_at_zero])
        };
        for (a, b) in times(&cfg)?.into_iter().zip(times(&half)?) {
            let change = (a - b).abs();
            worst = worst.max(change / cfg.dt);
            if change > HALVING_DT * cfg.dt {
                bad.push(format!("{kind} R0={r0} u={u}: T {a} -> {b}"));
            }
        }
    }
    let detail = format!(
        "final-size residuals {}; worst halving change {worst:.2} dt",
        parts.join(", ")
    );
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", bad.join("; ")))
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_SEED);
    let mut violations = Vec::new();
    let mut steps = 0usize;
    for run in 0..RANDOM_RUNS {
        let r0 = rng.gen_range(0.5..5.0);
        let mu = rng.gen_range(0.5..10.0);
        let s0 = rng.gen_range(100.0..5000.0);
        let i0 = rng.gen_range(1.0..50.0);
        let p = ModelParams::from_r0(r0, mu, s0, i0, EPS).unwrap();
        let kind = PolicyKind::ALL[rng.gen_range(0..4)];
        let u = match kind {
            PolicyKind::TransmissionReduction => rng.gen_range(0.0..=1.0),
            _ => rng.gen_range(0.0..2.0 * mu),
        };
        let policy = Policy::new(kind, u).unwrap();
        let cfg = IntegratorConfig::for_problem(&p, &policy).map_err(|e| e.to_string())?;
        let t_unc = uncontrolled_eradication_time(&p, &cfg).map_err(|e| e.to_string())?;
        let tau = rng.gen_range(0.0..t_unc);
        let traj = simulate(&p, &policy, &ControlSchedule::new(tau, u), &cfg)
            .map_err(|e| format!("run {run}: {e}"))?;
        let cap = (s0 + i0) * (1.0 + 1e-12);
        steps += traj.len();
        for (k, x) in traj.states.iter().enumerate() {
            if x.s < 0.0 || x.i < 0.0 {
                violations.push(format!("run {run} step {k}: negative {x:?}"));
            }
            if x.s + x.i > cap {
                violations.push(format!("run {run} step {k}: S+I = {}", x.s + x.i));
            }
            if k > 0 && x.s > traj.states[k - 1].s {
                violations.push(format!("run {run} step {k}: S increased"));
            }
        }
    }
    let detail = format!(
        "{RANDOM_RUNS} runs, {steps} grid points, {} violations",
        violations.len()
    );
    if violations.is_empty() {
        Ok(detail)
    } else {
        violations.truncate(5);
        Err(format!("{detail}; {}", violations.join("; ")))
    }
}

fn criterion_9(curves: &[(PolicyKind, CurveTable)]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, table) in curves {
        match detect_transition(table) {
            None => {
                ok = false;
                parts.push(format!("{kind}: no transition"));
            }
            Some(t) => {
                let ratio = t.s_star_change.abs() / t.s_star_median_change;
                ok &= t.s_star_change.abs() > S_JUMP_FACTOR * t.s_star_median_change;
                parts.push(format!(
                    "{kind}: dS(T*) {:.1} at u = {:.3}, {ratio:.0}x median",
                    t.s_star_change,
                    t.u_star()
                ));
            }
        }
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    // smoke-check the public entry point before the long runs
    let smoke = optimize_default(
        &params(3.0),
        &Policy::new(PolicyKind::Vaccination, 6.0).unwrap(),
    );
    assert!(smoke.is_ok(), "{smoke:?}");

    let curves: Result<Vec<(PolicyKind, CurveTable)>, String> =
        [PolicyKind::Isolation, PolicyKind::TransmissionReduction]
            .into_iter()
            .map(|k| effort_curve(k).map(|t| (k, t)))
            .collect();

    let mut results: Vec<(&str, Outcome)> = vec![
        (
            "1 vaccination map never delays after the peak",
            criterion_1(),
        ),
        ("2 vaccination transition with continuous T*", criterion_2()),
        (
            "3 isolation map has after-peak and constant regions",
            criterion_3(),
        ),
    ];
    match &curves {
        Ok(c) => {
            results.push(("4 delayed optimum with RC < 1", criterion_4(c)));
            results.push((
                "5 constant-control slowdown two- to five-fold",
                criterion_5(c),
            ));
        }
        Err(e) => {
            results.push(("4 delayed optimum with RC < 1", Err(e.clone())));
            results.push((
                "5 constant-control slowdown two- to five-fold",
                Err(e.clone()),
            ));
        }
    }
    results.push((
        "6 minimum principle on optima and perturbations",
        criterion_6(),
    ));
    results.push(("7 integrator final size and dt halving", criterion_7()));
    results.push(("8 randomized invariants", criterion_8()));
    results.push((
        "9 S(T*) jumps at the transition",
        curves
            .as_ref()
            .map_err(|e| e.clone())
            .and_then(|c| criterion_9(c)),
    ));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
