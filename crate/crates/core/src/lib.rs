//! Time-optimal bang-bang control of SIR epidemics.
//!
//! The crate integrates the controlled SIR system under four policies
//! (vaccination, isolation, culling, transmission reduction), finds the
//! intervention start that minimizes the eradication time, checks the
//! candidate against Pontryagin's minimum principle and runs parameter sweeps
//! that classify optima by their switching regime.
//!
//! ```
//! use sirtoc::{optimize_default, ModelParams, Policy, PolicyKind, RegimeClass};
//!
//! let params = ModelParams::from_r0(3.0, 5.0, 2000.0, 1.0, 0.5).unwrap();
//! let policy = Policy::new(PolicyKind::Vaccination, 6.0).unwrap();
//! let best = optimize_default(&params, &policy).unwrap();
//! assert_eq!(best.regime, RegimeClass::ConstantMax);
//! ```

pub mod error;
pub mod integrate;
pub mod model;
pub mod pmp;
pub mod sweep;
pub mod timeopt;

pub use error::{Error, Result};
pub use integrate::{
    peak_time, simulate, step, uncontrolled_eradication_time, IntegratorConfig,
    IntegratorOverrides, Trajectory, TrajectoryStatus,
};
pub use model::{r0, rc, vector_field, ModelParams, Policy, PolicyKind, State};
pub use pmp::{
    adjoint_backward, check_pmp, hamiltonian, switching_function, switching_rate, Adjoint,
    AdjointTrajectory, PmpReport, PmpTolerances,
};
pub use sweep::{
    detect_transition, run_curves, run_map, CurvePoint, CurveTable, RegimeMap, SweepAxis,
    SweepSpec, Transition,
};
pub use timeopt::{
    classify, eradication_time_for_tau, optimize, optimize_default, ControlSchedule, OptimalResult,
    RegimeClass, DEFAULT_MESH_COUNT,
};

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order always follows input order.
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
