use serde::{Deserialize, Serialize};

use super::{argmax, DecisionOutcome, Protocol, Termination};
use crate::error::{Result, SimError};
use crate::stochastic::{
    bridge_crossed, integrate_sde, CrossingDetection, FixedTime, Integration, NoiseSource, RngStream, StopRule,
    TimeGrid,
};
use crate::strategy::Schedule;

/// Stopping criterion for racing accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// First pool with `x_i >= theta_i`.
    #[default]
    AbsoluteThreshold,
    /// Leader ahead of the runner-up by at least the margin.
    MaxVsNext,
    /// Leader ahead of the pool mean by at least the margin.
    MaxVsAverage,
}

/// Default margin for the relative criteria: a fifth of the lowest threshold.
pub fn default_margin(thresholds: &[f64]) -> f64 {
    0.2 * thresholds.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `K` leaky accumulators with uniform mutual inhibition:
/// `dx_i = (-k x_i - w sum_{j != i} x_j + S_i) dt + sigma_i dW_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceConfig {
    /// Input `S_i` of each pool.
    pub inputs: Vec<f64>,
    /// Leak `k`.
    pub leak: f64,
    /// Mutual inhibition `w`.
    pub inhibition: f64,
    pub sigma: Vec<f64>,
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub criterion: Criterion,
    /// Margin for the relative criteria; defaults to [`default_margin`].
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub crossing: CrossingDetection,
}

impl RaceConfig {
    pub fn new(inputs: Vec<f64>, leak: f64, inhibition: f64, sigma: Vec<f64>, thresholds: Vec<f64>) -> Self {
        Self {
            inputs,
            leak,
            inhibition,
            sigma,
            thresholds,
            criterion: Criterion::AbsoluteThreshold,
            margin: None,
            crossing: CrossingDetection::default(),
        }
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or_else(|| default_margin(&self.thresholds))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.inputs.len();
        check_pools(k, &self.sigma, &self.thresholds, self.criterion, self.margin())?;
        check_coupling("leak", "inhibition", self.leak, self.inhibition)?;
        if self.inputs.iter().any(|s| !s.is_finite()) {
            return Err(SimError::param("inputs", "finite inputs"));
        }
        Ok(())
    }
}

fn check_pools(k: usize, sigma: &[f64], thresholds: &[f64], criterion: Criterion, margin: f64) -> Result<()> {
    if k < 2 {
        return Err(SimError::param("inputs", "K >= 2 pools"));
    }
    if sigma.len() != k {
        return Err(SimError::param("sigma", format!("one noise level per pool ({k})")));
    }
    if thresholds.len() != k {
        return Err(SimError::param("thresholds", format!("one threshold per pool ({k})")));
    }
    if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(SimError::param("sigma", "sigma_i >= 0"));
    }
    if thresholds.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(SimError::param("thresholds", "theta_i > 0"));
    }
    if criterion != Criterion::AbsoluteThreshold && !(margin > 0.0) {
        return Err(SimError::param("margin", "margin > 0"));
    }
    Ok(())
}

fn check_coupling(leak_field: &str, inhibition_field: &str, leak: f64, inhibition: f64) -> Result<()> {
    if !leak.is_finite() {
        return Err(SimError::param(leak_field, "finite leak"));
    }
    if !(inhibition >= 0.0) || !inhibition.is_finite() {
        return Err(SimError::param(inhibition_field, format!("{inhibition_field} >= 0")));
    }
    Ok(())
}

/// Leak and inhibition of one cue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueCoupling {
    pub leak: f64,
    pub inhibition: f64,
}

/// Race over `K` pools and `M` cues. Each (pool, cue) pair has its own
/// accumulator `x_{i,m}`; only the scheduled cue's accumulators evolve, the
/// others hold their value. Criteria see per-pool sums `x_i = sum_m x_{i,m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiCueRaceConfig {
    pub cues: Vec<CueCoupling>,
    /// `inputs[i][m]` is `S_{i,m}`.
    pub inputs: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub schedule: Schedule,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub crossing: CrossingDetection,
}

impl MultiCueRaceConfig {
    pub fn pools(&self) -> usize {
        self.inputs.len()
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or_else(|| default_margin(&self.thresholds))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.pools();
        let m = self.cues.len();
        if m == 0 {
            return Err(SimError::param("cues", "M >= 1"));
        }
        check_pools(k, &self.sigma, &self.thresholds, self.criterion, self.margin())?;
        for (c, cue) in self.cues.iter().enumerate() {
            check_coupling(
                &format!("cues[{c}].leak"),
                &format!("cues[{c}].inhibition"),
                cue.leak,
                cue.inhibition,
            )?;
        }
        for (i, row) in self.inputs.iter().enumerate() {
            if row.len() != m {
                return Err(SimError::param(
                    format!("inputs[{i}]"),
                    format!("one input per cue ({m})"),
                ));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(SimError::param(format!("inputs[{i}]"), "finite inputs"));
            }
        }
        self.schedule.check_cues(m)
    }
}

/// Criterion evaluated on per-pool aggregates of a `K x M` state
/// (row-major, pool-major).
struct RaceStop<'a> {
    pools: usize,
    cues: usize,
    thresholds: &'a [f64],
    criterion: Criterion,
    margin: f64,
    detection: CrossingDetection,
}

impl RaceStop<'_> {
    fn aggregate(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = x[i * self.cues..(i + 1) * self.cues].iter().sum();
        }
    }
}

fn leader_and_gap(x: &[f64], criterion: Criterion) -> (usize, f64) {
    let lead = argmax(x);
    let reference = match criterion {
        Criterion::MaxVsNext => x
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != lead)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max),
        _ => x.iter().sum::<f64>() / x.len() as f64,
    };
    (lead, x[lead] - reference)
}

impl StopRule for RaceStop<'_> {
    fn check<N: NoiseSource>(
        &self,
        prev: &[f64],
        next: &[f64],
        diffusion: &[f64],
        dt: f64,
        noise: &mut N,
    ) -> Option<usize> {
        let mut agg = [0.0; 8];
        let mut agg_vec;
        let now: &mut [f64] = if self.pools <= agg.len() {
            &mut agg[..self.pools]
        } else {
            agg_vec = vec![0.0; self.pools];
            &mut agg_vec
        };
        self.aggregate(next, now);

        match self.criterion {
            Criterion::AbsoluteThreshold => {
                let mut best: Option<(usize, f64)> = None;
                for (i, v) in now.iter().enumerate() {
                    let over = v - self.thresholds[i];
                    if over >= 0.0 && best.is_none_or(|(_, o)| over > o) {
                        best = Some((i, over));
                    }
                }
                if best.is_some() || self.detection == CrossingDetection::GridPoint {
                    return best.map(|(i, _)| i);
                }
                for i in 0..self.pools {
                    let row = i * self.cues..(i + 1) * self.cues;
                    let before: f64 = prev[row.clone()].iter().sum();
                    let var_step: f64 = diffusion[row].iter().map(|b| b * b).sum::<f64>() * dt;
                    let th = self.thresholds[i];
                    if bridge_crossed(th - before, th - now[i], var_step, noise, i * self.cues) {
                        return Some(i);
                    }
                }
                None
            }
            relative => {
                let (lead, gap) = leader_and_gap(now, relative);
                (gap >= self.margin).then_some(lead)
            }
        }
    }
}

fn race_outcome(res: Integration, protocol: Protocol, horizon: f64, pools: usize, cues: usize) -> DecisionOutcome {
    match protocol {
        Protocol::FreeResponse => match res.event {
            Some(i) => DecisionOutcome {
                choice: Some(i),
                decision_time: res.time,
                termination: Termination::Threshold,
            },
            None => DecisionOutcome::timeout(horizon),
        },
        Protocol::Interrogation => {
            let agg: Vec<f64> = (0..pools)
                .map(|i| res.state[i * cues..(i + 1) * cues].iter().sum())
                .collect();
            DecisionOutcome {
                choice: Some(argmax(&agg)),
                decision_time: horizon,
                termination: Termination::Interrogation,
            }
        }
    }
}

/// One race trial.
pub fn simulate_race(
    config: &RaceConfig,
    grid: &TimeGrid,
    rng: &mut RngStream,
    protocol: Protocol,
) -> Result<DecisionOutcome> {
    let res = integrate_race(config, grid, rng, protocol)?;
    Ok(race_outcome(res, protocol, grid.horizon(), config.inputs.len(), 1))
}

/// Pool states at the horizon with the stopping criterion ignored. Uses the
/// same draws as an interrogation trial on `rng`.
pub fn race_endpoint(config: &RaceConfig, grid: &TimeGrid, rng: &mut RngStream) -> Result<Vec<f64>> {
    Ok(integrate_race(config, grid, rng, Protocol::Interrogation)?.state)
}

fn integrate_race(
    config: &RaceConfig,
    grid: &TimeGrid,
    rng: &mut RngStream,
    protocol: Protocol,
) -> Result<Integration> {
    config.validate()?;
    let k = config.inputs.len();
    let (leak, w) = (config.leak, config.inhibition);
    let inputs = &config.inputs;
    let sigma = &config.sigma;
    let drift = |x: &[f64], _t: f64, a: &mut [f64]| {
        let total: f64 = x.iter().sum();
        for i in 0..k {
            a[i] = -leak * x[i] - w * (total - x[i]) + inputs[i];
        }
    };
    let diffusion = |_: &[f64], _t: f64, b: &mut [f64]| b.copy_from_slice(sigma);
    let x0 = vec![0.0; k];
    match protocol {
        Protocol::FreeResponse => {
            let stop = RaceStop {
                pools: k,
                cues: 1,
                thresholds: &config.thresholds,
                criterion: config.criterion,
                margin: config.margin(),
                detection: config.crossing,
            };
            integrate_sde(drift, diffusion, &x0, grid, rng, &stop)
        }
        Protocol::Interrogation => integrate_sde(drift, diffusion, &x0, grid, rng, &FixedTime),
    }
}

/// One multi-cue race trial.
pub fn simulate_multicue_race(
    config: &MultiCueRaceConfig,
    grid: &TimeGrid,
    rng: &mut RngStream,
    protocol: Protocol,
) -> Result<DecisionOutcome> {
    config.validate()?;
    config.schedule.check_covers(grid.horizon())?;
    let k = config.pools();
    let m = config.cues.len();
    let schedule = &config.schedule;
    let cues = &config.cues;
    let inputs = &config.inputs;
    let sigma = &config.sigma;
    let drift = |x: &[f64], t: f64, a: &mut [f64]| {
        a.fill(0.0);
        let c = schedule.cue_at(t);
        let CueCoupling { leak, inhibition } = cues[c];
        let total: f64 = (0..k).map(|j| x[j * m + c]).sum();
        for i in 0..k {
            let xi = x[i * m + c];
            a[i * m + c] = -leak * xi - inhibition * (total - xi) + inputs[i][c];
        }
    };
    let diffusion = |_: &[f64], t: f64, b: &mut [f64]| {
        b.fill(0.0);
        let c = schedule.cue_at(t);
        for i in 0..k {
            b[i * m + c] = sigma[i];
        }
    };
    let x0 = vec![0.0; k * m];
    let res = match protocol {
        Protocol::FreeResponse => {
            let stop = RaceStop {
                pools: k,
                cues: m,
                thresholds: &config.thresholds,
                criterion: config.criterion,
                margin: config.margin(),
                detection: config.crossing,
            };
            integrate_sde(drift, diffusion, &x0, grid, rng, &stop)?
        }
        Protocol::Interrogation => integrate_sde(drift, diffusion, &x0, grid, rng, &FixedTime)?,
    };
    Ok(race_outcome(res, protocol, grid.horizon(), k, m))
}
