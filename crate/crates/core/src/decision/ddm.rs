use serde::{Deserialize, Serialize};

use super::{DecisionOutcome, Protocol, Termination, CHOICE_A, CHOICE_B};
use crate::error::{Result, SimError};
use crate::stochastic::{integrate_sde, Barriers, CrossingDetection, FixedTime, Integration, RngStream, TimeGrid};
use crate::strategy::Schedule;

/// Leaky drift-diffusion (Ornstein–Uhlenbeck) process started at 0:
/// `dx = (mu - lambda x) dt + sigma dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmParams {
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    pub sigma: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    #[serde(default)]
    pub crossing: CrossingDetection,
}

impl DdmParams {
    pub fn symmetric(mu: f64, lambda: f64, sigma: f64, theta: f64) -> Self {
        Self {
            mu,
            lambda,
            sigma,
            theta_a: theta,
            theta_b: -theta,
            crossing: CrossingDetection::default(),
        }
    }

    /// Full invariant check (`sigma > 0`).
    pub fn validate(&self) -> Result<()> {
        self.check_simulable()?;
        if !(self.sigma > 0.0) {
            return Err(SimError::param("sigma", "sigma > 0"));
        }
        Ok(())
    }

    /// As [`validate`](Self::validate) but admits `sigma = 0`, which the
    /// simulators accept for noise-free checks.
    fn check_simulable(&self) -> Result<()> {
        check_2afc(self.sigma, self.theta_a, self.theta_b)?;
        check_leak("lambda", self.lambda)?;
        if !self.mu.is_finite() {
            return Err(SimError::param("mu", "finite mu"));
        }
        Ok(())
    }
}

fn check_2afc(sigma: f64, theta_a: f64, theta_b: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(SimError::param("sigma", "sigma >= 0"));
    }
    if !(theta_a > 0.0) || !theta_a.is_finite() {
        return Err(SimError::param("theta_a", "theta_a > 0"));
    }
    if !(theta_b < 0.0) || !theta_b.is_finite() {
        return Err(SimError::param("theta_b", "theta_b < 0"));
    }
    Ok(())
}

fn check_leak(field: &str, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SimError::param(field, format!("{field} >= 0")));
    }
    Ok(())
}

/// Drift and leak of one cue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueDrift {
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
}

/// Piecewise O-U process whose drift and leak switch with the scheduled cue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiCue2afcParams {
    pub cues: Vec<CueDrift>,
    pub sigma: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub schedule: Schedule,
    #[serde(default)]
    pub crossing: CrossingDetection,
}

impl MultiCue2afcParams {
    pub fn validate(&self) -> Result<()> {
        self.check_simulable()?;
        if !(self.sigma > 0.0) {
            return Err(SimError::param("sigma", "sigma > 0"));
        }
        Ok(())
    }

    fn check_simulable(&self) -> Result<()> {
        if self.cues.is_empty() {
            return Err(SimError::param("cues", "M >= 1"));
        }
        check_2afc(self.sigma, self.theta_a, self.theta_b)?;
        for (m, cue) in self.cues.iter().enumerate() {
            check_leak(&format!("cues[{m}].lambda"), cue.lambda)?;
            if !cue.mu.is_finite() {
                return Err(SimError::param(format!("cues[{m}].mu"), "finite mu"));
            }
        }
        self.schedule.check_cues(self.cues.len())
    }
}

fn two_choice_outcome(res: Integration, protocol: Protocol, horizon: f64) -> DecisionOutcome {
    match protocol {
        Protocol::FreeResponse => match res.event {
            Some(label) => DecisionOutcome {
                choice: Some(if label == 0 { CHOICE_A } else { CHOICE_B }),
                decision_time: res.time,
                termination: Termination::Threshold,
            },
            None => DecisionOutcome::timeout(horizon),
        },
        Protocol::Interrogation => DecisionOutcome {
            // exact zero goes to the lower index, A
            choice: Some(if res.state[0] >= 0.0 { CHOICE_A } else { CHOICE_B }),
            decision_time: horizon,
            termination: Termination::Interrogation,
        },
    }
}

fn barriers(theta_a: f64, theta_b: f64, crossing: CrossingDetection) -> Barriers {
    Barriers {
        upper: vec![theta_a],
        lower: vec![theta_b],
        detection: crossing,
    }
}

/// One leaky-DDM trial.
pub fn simulate_ddm(
    params: &DdmParams,
    grid: &TimeGrid,
    rng: &mut RngStream,
    protocol: Protocol,
) -> Result<DecisionOutcome> {
    let res = integrate_ddm(params, grid, rng, protocol)?;
    Ok(two_choice_outcome(res, protocol, grid.horizon()))
}

/// Accumulator value at the horizon with the thresholds ignored. Uses the
/// same draws as an interrogation trial on `rng`.
pub fn ddm_endpoint(params: &DdmParams, grid: &TimeGrid, rng: &mut RngStream) -> Result<f64> {
    Ok(integrate_ddm(params, grid, rng, Protocol::Interrogation)?.state[0])
}

fn integrate_ddm(params: &DdmParams, grid: &TimeGrid, rng: &mut RngStream, protocol: Protocol) -> Result<Integration> {
    params.check_simulable()?;
    let (mu, lambda, sigma) = (params.mu, params.lambda, params.sigma);
    let drift = |x: &[f64], _t: f64, a: &mut [f64]| a[0] = mu - lambda * x[0];
    let diffusion = |_: &[f64], _t: f64, b: &mut [f64]| b[0] = sigma;
    match protocol {
        Protocol::FreeResponse => integrate_sde(
            drift,
            diffusion,
            &[0.0],
            grid,
            rng,
            &barriers(params.theta_a, params.theta_b, params.crossing),
        ),
        Protocol::Interrogation => integrate_sde(drift, diffusion, &[0.0], grid, rng, &FixedTime),
    }
}

/// One multi-cue two-choice trial. The accumulator carries over across cue
/// switches; only drift and leak change.
pub fn simulate_multicue_2afc(
    params: &MultiCue2afcParams,
    grid: &TimeGrid,
    rng: &mut RngStream,
    protocol: Protocol,
) -> Result<DecisionOutcome> {
    params.check_simulable()?;
    params.schedule.check_covers(grid.horizon())?;
    let sigma = params.sigma;
    let cues = &params.cues;
    let schedule = &params.schedule;
    let drift = |x: &[f64], t: f64, a: &mut [f64]| {
        let cue = cues[schedule.cue_at(t)];
        a[0] = cue.mu - cue.lambda * x[0];
    };
    let diffusion = |_: &[f64], _t: f64, b: &mut [f64]| b[0] = sigma;
    let res = match protocol {
        Protocol::FreeResponse => integrate_sde(
            drift,
            diffusion,
            &[0.0],
            grid,
            rng,
            &barriers(params.theta_a, params.theta_b, params.crossing),
        )?,
        Protocol::Interrogation => integrate_sde(drift, diffusion, &[0.0], grid, rng, &FixedTime)?,
    };
    Ok(two_choice_outcome(res, protocol, grid.horizon()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::derive_stream;
    use crate::strategy::Interval;

    fn grid(dt: f64, horizon: f64) -> TimeGrid {
        TimeGrid::new(dt, horizon).unwrap()
    }

    fn choice_freq<F: Fn(u64) -> DecisionOutcome>(n: u64, f: F) -> (f64, f64, f64) {
        let (mut a, mut b, mut t) = (0, 0, 0);
        for i in 0..n {
            match f(i).choice {
                Some(CHOICE_A) => a += 1,
                Some(_) => b += 1,
                None => t += 1,
            }
        }
        let n = n as f64;
        (a as f64 / n, b as f64 / n, t as f64 / n)
    }

    #[test]
    fn zero_drift_is_symmetric() {
        let p = DdmParams::symmetric(0.0, 0.0, 1.0, 1.0);
        let g = grid(1e-3, 10.0);
        let (pa, pb, pt) = choice_freq(10_000, |i| {
            simulate_ddm(&p, &g, &mut derive_stream(3, i), Protocol::FreeResponse).unwrap()
        });
        assert!((pa - 0.5).abs() < 0.015, "P(A) = {pa}");
        assert_eq!(pa + pb + pt, 1.0);
    }

    #[test]
    fn noise_free_ramp() {
        let p = DdmParams::symmetric(1.0, 0.0, 0.0, 1.0);
        let g = grid(1e-3, 10.0);
        let out = simulate_ddm(&p, &g, &mut derive_stream(0, 0), Protocol::FreeResponse).unwrap();
        assert_eq!(out.choice, Some(CHOICE_A));
        assert_eq!(out.termination, Termination::Threshold);
        assert!((out.decision_time - 1.0).abs() <= 1e-3 + 1e-12);
    }

    #[test]
    fn strict_validation_rejects_zero_sigma() {
        let p = DdmParams::symmetric(1.0, 0.0, 0.0, 1.0);
        assert_eq!(
            p.validate(),
            Err(SimError::InvalidParameter {
                field: "sigma".into(),
                constraint: "sigma > 0".into()
            })
        );
        let bad = DdmParams {
            theta_b: 0.5,
            ..DdmParams::symmetric(1.0, 0.0, 1.0, 1.0)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn negated_drift_swaps_choices() {
        let g = grid(1e-3, 10.0);
        let up = DdmParams::symmetric(0.7, 0.0, 1.0, 1.0);
        let down = DdmParams::symmetric(-0.7, 0.0, 1.0, 1.0);
        let n = 10_000;
        let (a_up, _, _) = choice_freq(n, |i| {
            simulate_ddm(&up, &g, &mut derive_stream(8, i), Protocol::FreeResponse).unwrap()
        });
        let (_, b_down, _) = choice_freq(n, |i| {
            simulate_ddm(&down, &g, &mut derive_stream(9, i), Protocol::FreeResponse).unwrap()
        });
        let se = (a_up * (1.0 - a_up) / n as f64).sqrt();
        assert!((a_up - b_down).abs() < 4.0 * se * 2f64.sqrt(), "{a_up} vs {b_down}");
    }

    #[test]
    fn timeout_is_explicit() {
        let p = DdmParams::symmetric(0.0, 5.0, 0.1, 10.0);
        let g = grid(1e-2, 1.0);
        let out = simulate_ddm(&p, &g, &mut derive_stream(0, 0), Protocol::FreeResponse).unwrap();
        assert_eq!(out.termination, Termination::Timeout);
        assert_eq!(out.choice, None);
        assert_eq!(out.decision_time, 1.0);
    }

    #[test]
    fn leaky_interrogation_variance_bounded() {
        let (lambda, sigma) = (2.0, 1.0);
        let p = DdmParams::symmetric(0.0, lambda, sigma, 1.0);
        let g = grid(1e-3, 3.0);
        let n = 4000;
        // interrogation choice only gives the sign; rebuild the endpoint via the integrator
        let ends: Vec<f64> = (0..n)
            .map(|i| {
                integrate_sde(
                    |x: &[f64], _, a: &mut [f64]| a[0] = p.mu - p.lambda * x[0],
                    |_, _, b: &mut [f64]| b[0] = p.sigma,
                    &[0.0],
                    &g,
                    &mut derive_stream(21, i),
                    &FixedTime,
                )
                .unwrap()
                .state[0]
            })
            .collect();
        let var = ends.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(var < sigma * sigma / (2.0 * lambda) + 0.02, "var {var}");
        let out = simulate_ddm(&p, &g, &mut derive_stream(21, 0), Protocol::Interrogation).unwrap();
        assert_eq!(out.choice, Some(if ends[0] >= 0.0 { CHOICE_A } else { CHOICE_B }));
        assert_eq!(out.termination, Termination::Interrogation);
    }

    #[test]
    fn single_cue_matches_ddm() {
        let ddm = DdmParams::symmetric(0.8, 0.3, 1.0, 1.0);
        let g = grid(1e-3, 10.0);
        let mc = MultiCue2afcParams {
            cues: vec![CueDrift { mu: 0.8, lambda: 0.3 }],
            sigma: 1.0,
            theta_a: 1.0,
            theta_b: -1.0,
            schedule: Schedule::single(0, 10.0).unwrap(),
            crossing: CrossingDetection::default(),
        };
        for protocol in [Protocol::FreeResponse, Protocol::Interrogation] {
            for i in 0..200 {
                let a = simulate_ddm(&ddm, &g, &mut derive_stream(5, i), protocol).unwrap();
                let b = simulate_multicue_2afc(&mc, &g, &mut derive_stream(5, i), protocol).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn opposed_cues_cancel() {
        let g = grid(1e-3, 1.0);
        let mc = MultiCue2afcParams {
            cues: vec![CueDrift { mu: 1.5, lambda: 0.0 }, CueDrift { mu: -1.5, lambda: 0.0 }],
            sigma: 1.0,
            theta_a: 1.0,
            theta_b: -1.0,
            schedule: Schedule::equal_intervals(&[0, 1], 1.0).unwrap(),
            crossing: CrossingDetection::default(),
        };
        // interrogation at T=1 sees zero net drift
        let (pa, _, _) = choice_freq(10_000, |i| {
            simulate_multicue_2afc(&mc, &g, &mut derive_stream(4, i), Protocol::Interrogation).unwrap()
        });
        assert!((pa - 0.5).abs() < 0.015, "P(A) = {pa}");
    }

    #[test]
    fn schedule_must_cover_horizon() {
        let g = grid(1e-3, 2.0);
        let mc = MultiCue2afcParams {
            cues: vec![CueDrift { mu: 1.0, lambda: 0.0 }],
            sigma: 1.0,
            theta_a: 1.0,
            theta_b: -1.0,
            schedule: Schedule::new(vec![Interval {
                start: 0.0,
                end: 1.0,
                cue: 0,
            }])
            .unwrap(),
            crossing: CrossingDetection::default(),
        };
        let err = simulate_multicue_2afc(&mc, &g, &mut derive_stream(0, 0), Protocol::FreeResponse).unwrap_err();
        assert!(matches!(err, SimError::InvalidSchedule(_)));
    }
}
