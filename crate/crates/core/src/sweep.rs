//! Parameter-grid experiments: regime maps and effort curves.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::integrate::{IntegratorConfig, IntegratorOverrides};
use crate::model::{r0, rc, ModelParams, Policy, PolicyKind};
use crate::timeopt::{optimize, OptimalResult, RegimeClass, DEFAULT_MESH_COUNT};

/// Quantity varied along the horizontal axis of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    UMax,
    I0,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::UMax => "u_max",
            SweepAxis::I0 => "i0",
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "u_max" | "umax" => Ok(SweepAxis::UMax),
            "i0" => Ok(SweepAxis::I0),
            other => Err(invalid("x_axis", format!("unknown axis `{other}`"))),
        }
    }
}

/// Grid experiment: `x` is the effort bound or the initial infected count,
/// `y` is `R0` (mapped to `β = R0·μ/S0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub policy: PolicyKind,
    pub s0: f64,
    pub i0: f64,
    pub mu: f64,
    pub eps: f64,
    /// Effort bound when the `x` axis is `i0`.
    pub u_max: f64,
    pub x_axis: SweepAxis,
    pub x_range: (f64, f64),
    pub n_x: usize,
    pub r0_range: (f64, f64),
    pub n_y: usize,
    pub mesh_count: usize,
    #[serde(default)]
    pub integrator: IntegratorOverrides,
}

impl SweepSpec {
    pub const DEFAULT_RESOLUTION: usize = 60;

    /// Effort-by-`R0` map with the default population constants.
    pub fn effort_map(policy: PolicyKind, u_range: (f64, f64), r0_range: (f64, f64)) -> Self {
        Self {
            policy,
            s0: ModelParams::DEFAULT_S0,
            i0: ModelParams::DEFAULT_I0,
            mu: ModelParams::DEFAULT_MU,
            eps: ModelParams::DEFAULT_EPSILON,
            u_max: u_range.1,
            x_axis: SweepAxis::UMax,
            x_range: u_range,
            n_x: Self::DEFAULT_RESOLUTION,
            r0_range,
            n_y: Self::DEFAULT_RESOLUTION,
            mesh_count: DEFAULT_MESH_COUNT,
            integrator: IntegratorOverrides::default(),
        }
    }

    pub fn with_resolution(mut self, n_x: usize, n_y: usize) -> Self {
        self.n_x = n_x;
        self.n_y = n_y;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let range = |field, (lo, hi): (f64, f64)| {
            if lo > 0.0 && hi >= lo && hi.is_finite() {
                Ok(())
            } else {
                Err(invalid(
                    field,
                    format!("need 0 < lo <= hi, got [{lo}, {hi}]"),
                ))
            }
        };
        range("x_range", self.x_range)?;
        range("r0_range", self.r0_range)?;
        if self.n_x < 2 {
            return Err(invalid("n_x", "must be >= 2"));
        }
        if self.n_y < 2 {
            return Err(invalid("n_y", "must be >= 2"));
        }
        if self.mesh_count < 2 {
            return Err(invalid("mesh_count", "must be >= 2"));
        }
        let (xlo, xhi) = self.x_range;
        let (ylo, _) = self.r0_range;
        // corner cells must be valid problems
        self.cell_problem(xlo, ylo)?;
        self.cell_problem(xhi, ylo)?;
        Ok(())
    }

    pub fn x_values(&self) -> Vec<f64> {
        linspace(self.x_range, self.n_x)
    }

    pub fn y_values(&self) -> Vec<f64> {
        linspace(self.r0_range, self.n_y)
    }

    /// Parameters and policy of the cell at `(x, R0)`.
    pub fn cell_problem(&self, x: f64, r0_value: f64) -> Result<(ModelParams, Policy)> {
        let (i0, u_max) = match self.x_axis {
            SweepAxis::UMax => (self.i0, x),
            SweepAxis::I0 => (x, self.u_max),
        };
        let params = ModelParams::from_r0(r0_value, self.mu, self.s0, i0, self.eps)?;
        let policy = Policy::new(self.policy, u_max)?;
        Ok((params, policy))
    }
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Scalars kept for one optimized parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointSummary {
    pub regime: RegimeClass,
    pub tau_star: f64,
    pub t_star: f64,
    pub t_at_zero: f64,
    pub t_unc: f64,
    pub s_at_tstar: f64,
    pub s_at_tzero: f64,
    pub rc: f64,
    pub plateau: bool,
    pub dt: f64,
}

impl PointSummary {
    pub fn from_result(res: &OptimalResult) -> Self {
        Self {
            regime: res.regime,
            tau_star: res.tau_star,
            t_star: res.t_star,
            t_at_zero: res.t_at_zero,
            t_unc: res.t_unc,
            s_at_tstar: res.s_at_tstar,
            s_at_tzero: res.s_at_tzero,
            rc: rc(&res.params, &res.policy),
            plateau: res.plateau,
            dt: res.dt,
        }
    }

    fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.regime,
            self.tau_star,
            self.t_star,
            self.t_at_zero,
            self.s_at_tstar,
            self.s_at_tzero,
            self.rc
        )
    }
}

/// One map cell; failures keep the error message.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCell {
    pub x: f64,
    pub y: f64,
    pub outcome: std::result::Result<PointSummary, String>,
}

impl MapCell {
    pub fn regime(&self) -> Option<RegimeClass> {
        self.outcome.as_ref().ok().map(|s| s.regime)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeMap {
    pub spec: SweepSpec,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// Row-major: all `x` for the first `R0`, then the next `R0`, ...
    pub cells: Vec<MapCell>,
}

impl RegimeMap {
    pub const CSV_HEADER: &'static str =
        "x_value,y_value,regime,tau_star,T_star,T_at_zero,s_at_Tstar,s_at_Tzero,RC";

    pub fn cell(&self, ix: usize, iy: usize) -> &MapCell {
        &self.cells[iy * self.x_values.len() + ix]
    }

    pub fn count(&self, regime: RegimeClass) -> usize {
        self.cells
            .iter()
            .filter(|c| c.regime() == Some(regime))
            .count()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            match &c.outcome {
                Ok(s) => writeln!(w, "{},{},{}", c.x, c.y, s.csv_fields())?,
                Err(_) => writeln!(w, "{},{},failed,,,,,,", c.x, c.y)?,
            }
        }
        Ok(())
    }

    /// Heatmap with white = constant, light gray = before peak, gray = at
    /// peak, dark gray = after peak, red = failed.
    pub fn to_svg(&self) -> String {
        const CELL: f64 = 8.0;
        const MARGIN: f64 = 50.0;
        let nx = self.x_values.len();
        let ny = self.y_values.len();
        let w = nx as f64 * CELL;
        let h = ny as f64 * CELL;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            w + 2.0 * MARGIN,
            h + 2.0 * MARGIN,
            w + 2.0 * MARGIN,
            h + 2.0 * MARGIN
        );
        let _ = writeln!(
            svg,
            r#"<rect x="0" y="0" width="100%" height="100%" fill="white"/>"#
        );
        for iy in 0..ny {
            for ix in 0..nx {
                let fill = match self.cell(ix, iy).regime() {
                    Some(r) => regime_color(r),
                    None => "#d62728",
                };
                // R0 grows upward
                let _ = writeln!(
                    svg,
                    r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#,
                    MARGIN + ix as f64 * CELL,
                    MARGIN + (ny - 1 - iy) as f64 * CELL
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}" fill="none" stroke="black"/>"#
        );
        let x_label = match self.spec.x_axis {
            SweepAxis::UMax => "u_max",
            SweepAxis::I0 => "I(0)",
        };
        let (xlo, xhi) = self.spec.x_range;
        let (ylo, yhi) = self.spec.r0_range;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{x_label} [{xlo}, {xhi}]</text>"#,
            MARGIN + w / 2.0,
            MARGIN + h + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="15" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {})">R0 [{ylo}, {yhi}]</text>"#,
            MARGIN + h / 2.0,
            MARGIN + h / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="30" font-size="12" text-anchor="middle">{}</text>"#,
            MARGIN + w / 2.0,
            self.spec.policy
        );
        svg.push_str("</svg>\n");
        svg
    }
}

pub fn regime_color(r: RegimeClass) -> &'static str {
    match r {
        RegimeClass::ConstantMax => "#ffffff",
        RegimeClass::DelayedBeforePeak => "#d0d0d0",
        RegimeClass::DelayedAtPeak => "#909090",
        RegimeClass::DelayedAfterPeak => "#505050",
    }
}

fn optimize_point(
    params: &ModelParams,
    policy: &Policy,
    mesh_count: usize,
    overrides: &IntegratorOverrides,
    shared: Option<&IntegratorConfig>,
) -> Result<OptimalResult> {
    let cfg = match shared {
        Some(c) => *c,
        None => overrides.apply(IntegratorConfig::for_problem(params, policy)?),
    };
    optimize(params, policy, mesh_count, &cfg)
}

/// Optimizes and classifies every cell of the grid.
///
/// Each cell derives its own integrator configuration from its parameters,
/// so a cell's result does not depend on the rest of the grid. Failed cells
/// are recorded and the sweep continues.
pub fn run_map(spec: &SweepSpec) -> Result<RegimeMap> {
    spec.validate()?;
    let xs = spec.x_values();
    let ys = spec.y_values();
    let coords: Vec<(f64, f64)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    let cells = crate::par_map(&coords, |&(x, y)| {
        let outcome = spec
            .cell_problem(x, y)
            .and_then(|(p, pol)| optimize_point(&p, &pol, spec.mesh_count, &spec.integrator, None))
            .map(|r| PointSummary::from_result(&r))
            .map_err(|e| e.to_string());
        MapCell { x, y, outcome }
    });
    Ok(RegimeMap {
        spec: spec.clone(),
        x_values: xs,
        y_values: ys,
        cells,
    })
}

/// One point of an effort curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub u_max: f64,
    pub outcome: std::result::Result<PointSummary, String>,
}

impl CurvePoint {
    pub fn summary(&self) -> Option<&PointSummary> {
        self.outcome.as_ref().ok()
    }
}

/// Optimal and constant-control quantities as functions of `u_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub policy: PolicyKind,
    pub params: ModelParams,
    pub points: Vec<CurvePoint>,
    /// Effort at which `RC = 1`, when it falls inside the sampled range.
    pub rc_unit_crossing: Option<f64>,
    /// Step size shared by all points.
    pub dt: f64,
}

impl CurveTable {
    pub const CSV_HEADER: &'static str =
        "u_max,regime,tau_star,T_star,T_at_zero,s_at_Tstar,s_at_Tzero,RC";

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for p in &self.points {
            match &p.outcome {
                Ok(s) => writeln!(w, "{},{}", p.u_max, s.csv_fields())?,
                Err(_) => writeln!(w, "{},failed,,,,,,", p.u_max)?,
            }
        }
        Ok(())
    }

    /// Successful points as `(u_max, summary)`.
    pub fn successes(&self) -> impl Iterator<Item = (f64, &PointSummary)> {
        self.points
            .iter()
            .filter_map(|p| p.summary().map(|s| (p.u_max, s)))
    }
}

/// Effort at which the control reproduction number equals one.
pub fn rc_unit_crossing(params: &ModelParams, kind: PolicyKind) -> Option<f64> {
    let base = r0(params);
    let u = match kind {
        PolicyKind::Vaccination => return None,
        PolicyKind::Isolation | PolicyKind::Culling => params.beta * params.s0 - params.mu,
        PolicyKind::TransmissionReduction => 1.0 - 1.0 / base,
    };
    (u > 0.0).then_some(u)
}

/// Optimizes along `n` evenly spaced efforts in `[lo, hi]`.
///
/// All points share the integrator configuration of the largest effort so
/// that differences between neighbours are not step-size artifacts.
pub fn run_curves(
    kind: PolicyKind,
    params: &ModelParams,
    u_range: (f64, f64),
    n: usize,
    mesh_count: usize,
    overrides: &IntegratorOverrides,
) -> Result<CurveTable> {
    let (lo, hi) = u_range;
    if !(lo >= 0.0 && hi >= lo) {
        return Err(invalid(
            "u_range",
            format!("need 0 <= lo <= hi, got [{lo}, {hi}]"),
        ));
    }
    if n < 2 {
        return Err(invalid("n", "must be >= 2"));
    }
    params.validate()?;
    let top = Policy::new(kind, hi)?;
    let cfg = overrides.apply(IntegratorConfig::for_problem(params, &top)?);
    cfg.validate()?;
    let us = linspace(u_range, n);
    let points = crate::par_map(&us, |&u| {
        let outcome = Policy::new(kind, u)
            .and_then(|pol| optimize_point(params, &pol, mesh_count, overrides, Some(&cfg)))
            .map(|r| PointSummary::from_result(&r))
            .map_err(|e| e.to_string());
        CurvePoint { u_max: u, outcome }
    });
    let rc_unit_crossing = rc_unit_crossing(params, kind).filter(|u| (lo..=hi).contains(u));
    Ok(CurveTable {
        policy: kind,
        params: *params,
        points,
        rc_unit_crossing,
        dt: cfg.dt,
    })
}

/// Abrupt drop of the optimal intervention start along an effort curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    /// Effort just before and just after the drop.
    pub u_before: f64,
    pub u_after: f64,
    /// `τ*` before minus `τ*` after.
    pub tau_drop: f64,
    /// `T*` after minus `T*` before.
    pub t_star_change: f64,
    /// `S(T*)` after minus `S(T*)` before.
    pub s_star_change: f64,
    /// Median absolute adjacent change of `S(T*)` along the curve.
    pub s_star_median_change: f64,
    /// Drop threshold that was applied.
    pub threshold: f64,
}

impl Transition {
    /// Midpoint estimate of the transition effort.
    pub fn u_star(&self) -> f64 {
        0.5 * (self.u_before + self.u_after)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First adjacent pair along the curve where `τ*` drops by more than ten
/// times the median adjacent change (and by more than 5% of the largest
/// `τ*`, so that a curve that is mostly flat does not flag ordinary drift).
pub fn detect_transition(table: &CurveTable) -> Option<Transition> {
    const MEDIAN_FACTOR: f64 = 10.0;
    const RELATIVE_FLOOR: f64 = 0.05;
    let pts: Vec<(f64, &PointSummary)> = table.successes().collect();
    if pts.len() < 2 {
        return None;
    }
    let tau_changes: Vec<f64> = pts
        .windows(2)
        .map(|w| (w[1].1.tau_star - w[0].1.tau_star).abs())
        .collect();
    let s_changes: Vec<f64> = pts
        .windows(2)
        .map(|w| (w[1].1.s_at_tstar - w[0].1.s_at_tstar).abs())
        .collect();
    let tau_max = pts.iter().map(|p| p.1.tau_star).fold(0.0, f64::max);
    let threshold = (MEDIAN_FACTOR * median(tau_changes)).max(RELATIVE_FLOOR * tau_max);
    let s_median = median(s_changes);
    pts.windows(2).find_map(|w| {
        let (a, b) = (w[0].1, w[1].1);
        let drop = a.tau_star - b.tau_star;
        (drop > threshold).then(|| Transition {
            u_before: w[0].0,
            u_after: w[1].0,
            tau_drop: drop,
            t_star_change: b.t_star - a.t_star,
            s_star_change: b.s_at_tstar - a.s_at_tstar,
            s_star_median_change: s_median,
            threshold,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(tau: f64, s: f64) -> PointSummary {
        PointSummary {
            regime: if tau > 0.0 {
                RegimeClass::DelayedBeforePeak
            } else {
                RegimeClass::ConstantMax
            },
            tau_star: tau,
            t_star: 1.0,
            t_at_zero: 1.0,
            t_unc: 1.0,
            s_at_tstar: s,
            s_at_tzero: s,
            rc: 1.0,
            plateau: false,
            dt: 1e-3,
        }
    }

    fn table(taus: &[f64]) -> CurveTable {
        CurveTable {
            policy: PolicyKind::Vaccination,
            params: ModelParams::default(),
            points: taus
                .iter()
                .enumerate()
                .map(|(k, &t)| CurvePoint {
                    u_max: k as f64,
                    outcome: Ok(summary(t, 100.0 + k as f64)),
                })
                .collect(),
            rc_unit_crossing: None,
            dt: 1e-3,
        }
    }

    #[test]
    fn flat_curve_has_no_transition() {
        assert_eq!(detect_transition(&table(&[0.0; 10])), None);
    }

    #[test]
    fn finds_first_large_drop() {
        let t = detect_transition(&table(&[1.0, 1.01, 1.02, 1.03, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(t.u_before, 3.0);
        assert_eq!(t.u_after, 4.0);
        assert!((t.tau_drop - 1.03).abs() < 1e-12);
        assert_eq!(t.u_star(), 3.5);
    }

    #[test]
    fn failed_points_are_skipped() {
        let mut tb = table(&[1.0, 1.0, 1.0, 0.0, 0.0]);
        tb.points[3].outcome = Err("boom".into());
        let t = detect_transition(&tb).unwrap();
        assert_eq!((t.u_before, t.u_after), (2.0, 4.0));
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace((0.5, 5.0), 10);
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[9], 5.0);
    }

    #[test]
    fn rc_crossing_effort() {
        let p = ModelParams::from_r0(2.0, 5.0, 2000.0, 1.0, 0.5).unwrap();
        let u = rc_unit_crossing(&p, PolicyKind::Isolation).unwrap();
        assert!((rc(&p, &Policy::new(PolicyKind::Isolation, u).unwrap()) - 1.0).abs() < 1e-12);
        let u = rc_unit_crossing(&p, PolicyKind::TransmissionReduction).unwrap();
        let pol = Policy::new(PolicyKind::TransmissionReduction, u).unwrap();
        assert!((rc(&p, &pol) - 1.0).abs() < 1e-12);
        assert_eq!(rc_unit_crossing(&p, PolicyKind::Vaccination), None);
    }

    #[test]
    fn spec_validation() {
        let spec = SweepSpec::effort_map(PolicyKind::Isolation, (0.5, 10.0), (1.0, 5.0));
        assert!(spec.validate().is_ok());
        let mut bad = spec.clone();
        bad.n_x = 1;
        assert!(bad.validate().is_err());
        let mut bad = spec.clone();
        bad.x_range = (0.0, 1.0);
        assert!(bad.validate().is_err());
        let mut bad =
            SweepSpec::effort_map(PolicyKind::TransmissionReduction, (0.1, 1.5), (1.0, 5.0));
        assert!(bad.validate().is_err());
        bad.x_range = (0.1, 1.0);
        assert!(bad.validate().is_ok());
    }

    #[test]
    fn svg_has_one_rect_per_cell() {
        let spec = SweepSpec::effort_map(PolicyKind::Vaccination, (1.0, 2.0), (1.0, 2.0))
            .with_resolution(2, 2);
        let cells = (0..4)
            .map(|k| MapCell {
                x: 0.0,
                y: 0.0,
                outcome: if k == 3 {
                    Err("x".into())
                } else {
                    Ok(summary(k as f64, 1.0))
                },
            })
            .collect();
        let map = RegimeMap {
            spec,
            x_values: vec![1.0, 2.0],
            y_values: vec![1.0, 2.0],
            cells,
        };
        let svg = map.to_svg();
        assert_eq!(svg.matches("<rect").count(), 4 + 2);
        assert!(svg.contains("#d62728"));
        let mut csv = Vec::new();
        map.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(4).unwrap().contains("failed"));
    }
}
