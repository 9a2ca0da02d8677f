//! Continuous-state branching processes with Brownian and compound Poisson
//! branching mechanisms.

pub mod mechanism;
pub mod paths;
pub mod verify;

pub use mechanism::{JumpLaw, JumpMeasure, Mechanism};
pub use paths::{
    cb_functionals, sample_cbi, sample_feller_cb, sample_jumpdiff_cb, CbiScheme, FellerKernel, Jump, PathFunctionals,
    SamplePath, TimeGrid,
};
pub use verify::{
    excursion_mass_laplace_quadrature, excursion_mass_tail, lccb_limit, mass_tail, scale_ratio_report,
    sigma_tail_checks, verify_lccb, CbRunOptions, LccbReport, LccbRow, PathFunctional, ScaleRow, SigmaReport,
};
