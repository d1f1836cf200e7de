//! Operator gain state, engagement, and task-driven gain drift.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::stochastic::RngStream;

/// Excitatory and inhibitory gain of the operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainState {
    pub gamma_e: f64,
    pub gamma_i: f64,
}

impl GainState {
    pub fn new(gamma_e: f64, gamma_i: f64) -> Self {
        Self { gamma_e, gamma_i }
    }

    pub fn distance(&self, other: &GainState) -> f64 {
        (self.gamma_e - other.gamma_e).hypot(self.gamma_i - other.gamma_i)
    }
}

/// Closed box the gain state is confined to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub gamma_e: (f64, f64),
    pub gamma_i: (f64, f64),
}

impl GainBounds {
    pub fn clamp(&self, s: GainState) -> GainState {
        GainState::new(
            s.gamma_e.clamp(self.gamma_e.0, self.gamma_e.1),
            s.gamma_i.clamp(self.gamma_i.0, self.gamma_i.1),
        )
    }

    pub fn contains(&self, s: &GainState) -> bool {
        (self.gamma_e.0..=self.gamma_e.1).contains(&s.gamma_e) && (self.gamma_i.0..=self.gamma_i.1).contains(&s.gamma_i)
    }
}

pub const DEFAULT_TAU_S: f64 = 2.0;
pub const DEFAULT_TAU_L: f64 = 120.0;
pub const DEFAULT_THETA_ON: f64 = 0.3;
pub const DEFAULT_THETA_OFF: f64 = 0.15;

/// Short- and long-timescale utility traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityTrace {
    pub u_s: f64,
    pub u_l: f64,
    pub tau_s: f64,
    pub tau_l: f64,
}

impl UtilityTrace {
    pub fn new(tau_s: f64, tau_l: f64) -> Result<Self> {
        if !(tau_s > 0.0 && tau_l > tau_s && tau_l.is_finite()) {
            return Err(SimError::param("tau_l", "tau_l > tau_s > 0"));
        }
        Ok(Self {
            u_s: 0.0,
            u_l: 0.0,
            tau_s,
            tau_l,
        })
    }

    pub fn engagement(&self) -> f64 {
        engagement_index(self.u_s, self.u_l)
    }
}

impl Default for UtilityTrace {
    fn default() -> Self {
        Self {
            u_s: 0.0,
            u_l: 0.0,
            tau_s: DEFAULT_TAU_S,
            tau_l: DEFAULT_TAU_L,
        }
    }
}

/// One forward-Euler step of both traces toward `reward`. Steps with
/// `dt > tau` are capped at full relaxation.
pub fn update_utilities(trace: &UtilityTrace, reward: f64, dt: f64) -> Result<UtilityTrace> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::param("dt", "dt > 0"));
    }
    let relax = |u: f64, tau: f64| u + (dt / tau).min(1.0) * (reward - u);
    Ok(UtilityTrace {
        u_s: relax(trace.u_s, trace.tau_s),
        u_l: relax(trace.u_l, trace.tau_l),
        ..*trace
    })
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `E = σ(u_s) · σ(−u_l)`, with σ the logistic function.
pub fn engagement_index(u_s: f64, u_l: f64) -> f64 {
    logistic(u_s) * logistic(-u_l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LcMode {
    Phasic,
    #[default]
    Tonic,
}

/// Hysteretic mode switch: tonic turns phasic at `E >= theta_on`, phasic
/// turns tonic at `E <= theta_off`.
pub fn update_mode(current: LcMode, e: f64, theta_on: f64, theta_off: f64) -> Result<LcMode> {
    if !(theta_off < theta_on) {
        return Err(SimError::param("theta_off", "theta_off < theta_on"));
    }
    if !(theta_off > 0.0 && theta_on < 1.0) {
        return Err(SimError::param("theta_on", "0 < theta_off < theta_on < 1"));
    }
    Ok(match current {
        LcMode::Tonic if e >= theta_on => LcMode::Phasic,
        LcMode::Phasic if e <= theta_off => LcMode::Tonic,
        m => m,
    })
}

/// Step sizes for the assigned/skipped gain updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainDynamics {
    /// Outward step scale when the operator works a task.
    pub s0: f64,
    /// Pull rate toward the region center when the task is skipped.
    pub alpha: f64,
    /// Noise scale of the pull.
    pub s1: f64,
    /// `s0` multiplier in phasic mode.
    pub phasic_multiplier: f64,
    /// `s0` multiplier in tonic mode.
    pub tonic_multiplier: f64,
}

impl Default for GainDynamics {
    fn default() -> Self {
        Self {
            s0: 0.05,
            alpha: 0.3,
            s1: 0.01,
            phasic_multiplier: 0.5,
            tonic_multiplier: 2.0,
        }
    }
}

impl GainDynamics {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 >= 0.0) || !self.s0.is_finite() {
            return Err(SimError::param("s0", "s0 >= 0"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SimError::param("alpha", "0 < alpha <= 1"));
        }
        if !(self.s1 >= 0.0) || !self.s1.is_finite() {
            return Err(SimError::param("s1", "s1 >= 0"));
        }
        if !(self.phasic_multiplier > 0.0) || !(self.tonic_multiplier > 0.0) {
            return Err(SimError::param("phasic_multiplier", "mode multipliers > 0"));
        }
        Ok(())
    }

    /// Outward step scale, scaled by the mode multiplier when a mode is given.
    pub fn step_scale(&self, mode: Option<LcMode>) -> f64 {
        match mode {
            None => self.s0,
            Some(LcMode::Phasic) => self.s0 * self.phasic_multiplier,
            Some(LcMode::Tonic) => self.s0 * self.tonic_multiplier,
        }
    }
}

fn gaussian_pair(rng: &mut RngStream) -> [f64; 2] {
    [rng.standard_normal(), rng.standard_normal()]
}

/// Outward drift after the operator works a task.
pub fn perturb_gain_assigned(
    state: &GainState,
    center: &GainState,
    bounds: &GainBounds,
    rng: &mut RngStream,
    s0: f64,
) -> GainState {
    let angle = if state == center {
        rng.random_range(0.0..std::f64::consts::TAU)
    } else {
        0.0
    };
    let xi = gaussian_pair(rng);
    perturb_gain_with(state, center, bounds, s0, angle, xi)
}

/// [`perturb_gain_assigned`] with explicit randomness. `angle` sets the
/// direction used when `state` equals `center`; `xi` is the Gaussian pair.
pub fn perturb_gain_with(
    state: &GainState,
    center: &GainState,
    bounds: &GainBounds,
    s0: f64,
    angle: f64,
    xi: [f64; 2],
) -> GainState {
    let (de, di) = (state.gamma_e - center.gamma_e, state.gamma_i - center.gamma_i);
    let norm = de.hypot(di);
    let (ue, ui) = if norm > 0.0 {
        (de / norm, di / norm)
    } else {
        (angle.cos(), angle.sin())
    };
    bounds.clamp(GainState::new(
        state.gamma_e + s0 * ue + s0 * xi[0],
        state.gamma_i + s0 * ui + s0 * xi[1],
    ))
}

/// Pull toward the center after the operator skips a task.
pub fn restore_gain_skipped(
    state: &GainState,
    center: &GainState,
    bounds: &GainBounds,
    rng: &mut RngStream,
    alpha: f64,
    s1: f64,
) -> GainState {
    let xi = gaussian_pair(rng);
    restore_gain_with(state, center, bounds, alpha, s1, xi)
}

/// [`restore_gain_skipped`] with an explicit Gaussian pair.
pub fn restore_gain_with(
    state: &GainState,
    center: &GainState,
    bounds: &GainBounds,
    alpha: f64,
    s1: f64,
    xi: [f64; 2],
) -> GainState {
    bounds.clamp(GainState::new(
        state.gamma_e + alpha * (center.gamma_e - state.gamma_e) + s1 * xi[0],
        state.gamma_i + alpha * (center.gamma_i - state.gamma_i) + s1 * xi[1],
    ))
}
