//! Simulation library for gain-modulated evidence accumulation and
//! human/autonomy task dispatch.
//!
//! The pieces stack bottom-up:
//!
//! * [`stochastic`]: reproducible random streams and a fixed-step SDE integrator.
//! * [`decision`]: drift-diffusion, race and gain-modulated pool models.
//! * [`strategy`]: cue weighting and cue-processing schedules.
//! * [`gain`]: the operator's gain state, utility traces and LC mode.
//! * [`reward`]: reward rate and its surface over the gain plane.
//! * [`supervisor`]: the closed-loop task dispatcher.

pub mod decision;
pub mod digest;
pub mod error;
pub mod gain;
pub mod reward;
pub mod stats;
pub mod stochastic;
pub mod strategy;
pub mod supervisor;

pub use error::{Result, SimError};
