//! Peak age-of-information (PAoI) analytics for RIS-assisted THz uplinks.
//!
//! The crate is organised bottom-up:
//!
//! * [`thz_link`] turns geometry and radio parameters into a per-user update rate.
//! * [`aoi_analytic`] evaluates the closed-form stage PAoI laws (M/M/1/2 FCFS and
//!   M/M/1/2* LCFS), system CDFs, the maximum-severity-of-ruin CDF and average PAoI.
//! * [`queue_sim`] is a discrete-event simulator of the per-user stage queues feeding a
//!   shared FCFS compute queue, used as ground truth for the analytic layer.
//! * [`scenario`] builds rooms, places and associates users, and runs parameter sweeps.
//!
//! All physical constants live in [`constants`].

pub mod aoi_analytic;
pub mod constants;
pub mod error;
pub mod quadrature;
pub mod queue_sim;
pub mod scenario;
pub mod thz_link;

pub use aoi_analytic::{
    CdfSource, CdfValue, ComputeFormula, ComputeQueueLaw, Discipline, ExponentMode,
    LambdaMode, PsiMode, SeverityOutcome, SeverityQuery, StageLaw, SystemLaw, Validity,
};
pub use error::{Error, Result};
pub use queue_sim::{ComputeFeed, PaoiSamples, QueueConfig, Stage};
pub use scenario::{Room, Scenario, Sweep, SweepVariable};
pub use thz_link::{InterferenceMode, LinkGeometry, LinkParams, NoiseModel};
