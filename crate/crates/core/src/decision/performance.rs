use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DecisionModel, DecisionOutcome, Protocol, Termination};
use crate::error::{Result, SimError};
use crate::stats::Neumaier;
use crate::stochastic::{derive_stream, TimeGrid};

/// Monte-Carlo performance of a decision model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub n_trials: usize,
    pub correct: usize,
    pub timeouts: usize,
    /// Trials ending in a choice (threshold or interrogation).
    pub decided: usize,
    /// Correct fraction; timeouts count as errors.
    pub accuracy: f64,
    pub accuracy_se: f64,
    /// Mean decision time over decided trials (NaN if none decided).
    pub mean_dt: f64,
    pub mean_dt_se: f64,
    /// Mean decision time over all trials, timeouts contributing the horizon.
    pub mean_dt_all: f64,
    /// Choice counts per alternative.
    pub choices: Vec<usize>,
}

impl Performance {
    /// Reduce outcomes in trial order.
    pub fn from_outcomes(outcomes: &[DecisionOutcome], correct: usize, alternatives: usize) -> Self {
        let n = outcomes.len();
        let mut choices = vec![0usize; alternatives];
        let mut timeouts = 0;
        let mut dt_sum = Neumaier::default();
        let mut dt_sq = Neumaier::default();
        let mut dt_all = Neumaier::default();
        for o in outcomes {
            dt_all.add(o.decision_time);
            match (o.termination, o.choice) {
                (Termination::Timeout, _) | (_, None) => timeouts += 1,
                (_, Some(c)) => {
                    if c < alternatives {
                        choices[c] += 1;
                    }
                    dt_sum.add(o.decision_time);
                    dt_sq.add(o.decision_time * o.decision_time);
                }
            }
        }
        let decided = n - timeouts;
        let hits = choices.get(correct).copied().unwrap_or(0);
        let nf = n as f64;
        let accuracy = if n > 0 { hits as f64 / nf } else { f64::NAN };
        let accuracy_se = (accuracy * (1.0 - accuracy) / nf).sqrt();
        let (mean_dt, mean_dt_se) = if decided > 0 {
            let d = decided as f64;
            let mean = dt_sum.total() / d;
            let var = if decided > 1 {
                ((dt_sq.total() - d * mean * mean) / (d - 1.0)).max(0.0)
            } else {
                0.0
            };
            (mean, (var / d).sqrt())
        } else {
            (f64::NAN, f64::NAN)
        };
        Self {
            n_trials: n,
            correct: hits,
            timeouts,
            decided,
            accuracy,
            accuracy_se,
            mean_dt,
            mean_dt_se,
            mean_dt_all: dt_all.total() / nf,
            choices,
        }
    }
}

/// Simulate `n_trials` independent trials; trial `t` uses stream
/// `(base_seed, t)`. The result does not depend on the worker count.
pub fn estimate_performance<M: DecisionModel>(
    model: &M,
    correct: usize,
    grid: &TimeGrid,
    protocol: Protocol,
    n_trials: usize,
    base_seed: u64,
) -> Result<Performance> {
    let outcomes = simulate_trials(model, grid, protocol, n_trials, base_seed)?;
    Ok(Performance::from_outcomes(&outcomes, correct, model.alternatives()))
}

/// All trial outcomes in trial order.
pub fn simulate_trials<M: DecisionModel>(
    model: &M,
    grid: &TimeGrid,
    protocol: Protocol,
    n_trials: usize,
    base_seed: u64,
) -> Result<Vec<DecisionOutcome>> {
    if n_trials == 0 {
        return Err(SimError::param("n_trials", "n_trials >= 1"));
    }
    (0..n_trials as u64)
        .into_par_iter()
        .map(|t| model.simulate(grid, &mut derive_stream(base_seed, t), protocol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{DdmParams, CHOICE_A};

    #[test]
    fn singleton_noise_free() {
        let p = DdmParams::symmetric(1.0, 0.0, 0.0, 1.0);
        let g = TimeGrid::new(1e-3, 10.0).unwrap();
        let perf = estimate_performance(&p, CHOICE_A, &g, Protocol::FreeResponse, 1, 0).unwrap();
        assert_eq!(perf.accuracy, 1.0);
        assert_eq!(perf.n_trials, 1);
    }

    #[test]
    fn symmetric_accuracy_is_half() {
        let p = DdmParams::symmetric(0.0, 0.0, 1.0, 1.0);
        let g = TimeGrid::new(1e-3, 10.0).unwrap();
        let perf = estimate_performance(&p, CHOICE_A, &g, Protocol::FreeResponse, 4000, 12).unwrap();
        assert!((perf.accuracy - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt());
        assert_eq!(perf.choices.iter().sum::<usize>() + perf.timeouts, perf.n_trials);
    }

    #[test]
    fn timeouts_count_as_errors() {
        let p = DdmParams::symmetric(0.0, 10.0, 0.01, 5.0);
        let g = TimeGrid::new(1e-2, 1.0).unwrap();
        let perf = estimate_performance(&p, CHOICE_A, &g, Protocol::FreeResponse, 10, 0).unwrap();
        assert_eq!(perf.timeouts, 10);
        assert_eq!(perf.accuracy, 0.0);
        assert!(perf.mean_dt.is_nan());
        assert_eq!(perf.mean_dt_all, 1.0);
    }

    #[test]
    fn independent_of_thread_count() {
        let p = DdmParams::symmetric(0.5, 0.2, 1.0, 1.0);
        let g = TimeGrid::new(1e-3, 10.0).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_performance(&p, CHOICE_A, &g, Protocol::FreeResponse, 500, 99).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.mean_dt.to_bits(), b.mean_dt.to_bits());
        assert_eq!(a, b);
    }
}
