//! Evidence-accumulation decision models.
//!
//! Each model simulates one trial on a [`TimeGrid`] with its own
//! [`RngStream`] and reports a [`DecisionOutcome`]. Alternatives are
//! zero-based; for the two-threshold diffusion models alternative 0 is the
//! upper threshold (A) and alternative 1 the lower threshold (B).

mod ddm;
mod lip;
mod performance;
mod race;

pub use ddm::{ddm_endpoint, simulate_ddm, simulate_multicue_2afc, CueDrift, DdmParams, MultiCue2afcParams};
pub use lip::{simulate_lip, LipConfig};
pub use performance::{estimate_performance, simulate_trials, Performance};
pub use race::{
    race_endpoint, simulate_multicue_race, simulate_race, Criterion, CueCoupling, MultiCueRaceConfig, RaceConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stochastic::{RngStream, TimeGrid};

pub const CHOICE_A: usize = 0;
pub const CHOICE_B: usize = 1;

/// Default free-response horizon, seconds.
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Decide at the first criterion crossing; time out at the horizon.
    #[default]
    FreeResponse,
    /// Read the decision out at the horizon.
    Interrogation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Threshold,
    Interrogation,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub choice: Option<usize>,
    /// Seconds from stimulus onset; the horizon on timeout or interrogation.
    pub decision_time: f64,
    pub termination: Termination,
}

impl DecisionOutcome {
    pub(crate) fn timeout(horizon: f64) -> Self {
        Self {
            choice: None,
            decision_time: horizon,
            termination: Termination::Timeout,
        }
    }
}

/// A model that can simulate independent trials.
pub trait DecisionModel: Sync {
    fn alternatives(&self) -> usize;

    fn simulate(&self, grid: &TimeGrid, rng: &mut RngStream, protocol: Protocol) -> Result<DecisionOutcome>;
}

impl DecisionModel for DdmParams {
    fn alternatives(&self) -> usize {
        2
    }

    fn simulate(&self, grid: &TimeGrid, rng: &mut RngStream, protocol: Protocol) -> Result<DecisionOutcome> {
        simulate_ddm(self, grid, rng, protocol)
    }
}

impl DecisionModel for MultiCue2afcParams {
    fn alternatives(&self) -> usize {
        2
    }

    fn simulate(&self, grid: &TimeGrid, rng: &mut RngStream, protocol: Protocol) -> Result<DecisionOutcome> {
        simulate_multicue_2afc(self, grid, rng, protocol)
    }
}

impl DecisionModel for RaceConfig {
    fn alternatives(&self) -> usize {
        self.inputs.len()
    }

    fn simulate(&self, grid: &TimeGrid, rng: &mut RngStream, protocol: Protocol) -> Result<DecisionOutcome> {
        simulate_race(self, grid, rng, protocol)
    }
}

impl DecisionModel for MultiCueRaceConfig {
    fn alternatives(&self) -> usize {
        self.pools()
    }

    fn simulate(&self, grid: &TimeGrid, rng: &mut RngStream, protocol: Protocol) -> Result<DecisionOutcome> {
        simulate_multicue_race(self, grid, rng, protocol)
    }
}

impl DecisionModel for LipConfig {
    fn alternatives(&self) -> usize {
        self.inputs.len()
    }

    fn simulate(&self, grid: &TimeGrid, rng: &mut RngStream, protocol: Protocol) -> Result<DecisionOutcome> {
        simulate_lip(self, grid, rng, protocol)
    }
}

/// Index of the largest value; exact ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
