use serde::{Deserialize, Serialize};

use super::{argmax, DecisionOutcome, Protocol, Termination};
use crate::error::{Result, SimError};
use crate::stochastic::{integrate_sde, Barriers, CrossingDetection, FixedTime, LaneStreams, RngStream, TimeGrid};

/// Linearized competing pools with excitatory and inhibitory gain:
///
/// `du_j = (-lambda u_j - gamma_i sum_{k != j} u_k + gamma_e S_j) dt + gamma_e sigma_j dW_j`
///
/// The excitatory gain scales the whole synaptic input, signal and noise
/// alike, so raising it trades accuracy for speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipConfig {
    pub lambda: f64,
    pub gamma_e: f64,
    pub gamma_i: f64,
    /// Raw sensory input `S_j` of each pool.
    pub inputs: Vec<f64>,
    pub sigma: Vec<f64>,
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub crossing: CrossingDetection,
}

impl LipConfig {
    pub fn with_gains(&self, gamma_e: f64, gamma_i: f64) -> Self {
        Self {
            gamma_e,
            gamma_i,
            ..self.clone()
        }
    }

    /// Effective drive `I_j = gamma_e S_j`.
    pub fn drive(&self) -> Vec<f64> {
        self.inputs.iter().map(|s| self.gamma_e * s).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.inputs.len();
        if k < 2 {
            return Err(SimError::param("inputs", "K >= 2 pools"));
        }
        if !(self.gamma_e > 0.0) || !self.gamma_e.is_finite() {
            return Err(SimError::param("gamma_e", "gamma_e > 0"));
        }
        if !(self.gamma_i >= 0.0) || !self.gamma_i.is_finite() {
            return Err(SimError::param("gamma_i", "gamma_i >= 0"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(SimError::param("lambda", "lambda >= 0"));
        }
        if self.sigma.len() != k || self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SimError::param("sigma", format!("{k} values, each >= 0")));
        }
        if self.thresholds.len() != k || self.thresholds.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(SimError::param("thresholds", format!("{k} values, each > 0")));
        }
        if self.inputs.iter().any(|s| !s.is_finite()) {
            return Err(SimError::param("inputs", "finite inputs"));
        }
        Ok(())
    }
}

/// One trial of the gain-modulated pool model. Pool `j` draws its noise from
/// lane `j` of `rng`, so with `gamma_i = 0` every pool evolves exactly as
/// an isolated O-U process on that lane.
pub fn simulate_lip(
    config: &LipConfig,
    grid: &TimeGrid,
    rng: &mut RngStream,
    protocol: Protocol,
) -> Result<DecisionOutcome> {
    config.validate()?;
    let k = config.inputs.len();
    let (lambda, gamma_i, gamma_e) = (config.lambda, config.gamma_i, config.gamma_e);
    let drive = config.drive();
    let noise: Vec<f64> = config.sigma.iter().map(|s| gamma_e * s).collect();
    let drift = |u: &[f64], _t: f64, a: &mut [f64]| {
        let total: f64 = u.iter().sum();
        for j in 0..k {
            a[j] = -lambda * u[j] - gamma_i * (total - u[j]) + drive[j];
        }
    };
    let diffusion = |_: &[f64], _t: f64, b: &mut [f64]| b.copy_from_slice(&noise);
    let mut lanes = LaneStreams::from_parent(rng, k);
    let u0 = vec![0.0; k];

    Ok(match protocol {
        Protocol::FreeResponse => {
            let stop = Barriers::upper_only(config.thresholds.clone(), config.crossing);
            let res = integrate_sde(drift, diffusion, &u0, grid, &mut lanes, &stop)?;
            match res.event {
                Some(j) => DecisionOutcome {
                    choice: Some(j),
                    decision_time: res.time,
                    termination: Termination::Threshold,
                },
                None => DecisionOutcome::timeout(grid.horizon()),
            }
        }
        Protocol::Interrogation => {
            let res = integrate_sde(drift, diffusion, &u0, grid, &mut lanes, &FixedTime)?;
            DecisionOutcome {
                choice: Some(argmax(&res.state)),
                decision_time: grid.horizon(),
                termination: Termination::Interrogation,
            }
        }
    })
}
