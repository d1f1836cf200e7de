//! Cue weighting and cue-processing schedules for multi-cue decisions.
//!
//! The excitatory gain acts as an inverse temperature on cue validities: at
//! zero gain every cue gets equal weight (compensatory processing), and as
//! the gain grows the weight concentrates on the most valid cue (heuristic,
//! single-cue processing).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::stochastic::RngStream;

/// Validity `q_m` of each cue: probability that a choice based on the cue
/// alone is correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueValidities(Vec<f64>);

impl CueValidities {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(SimError::param("validities", "at least one cue"));
        }
        if let Some(bad) = q.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(SimError::param(format!("validities[{bad}]"), "0 <= q <= 1"));
        }
        Ok(Self(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Normalized cue weights `a_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueWeights(Vec<f64>);

impl CueWeights {
    /// Accepts any positive vector summing to one within 1e-9.
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(SimError::param("weights", "at least one cue"));
        }
        if a.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(SimError::param("weights", "every weight > 0"));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SimError::param("weights", "weights sum to 1"));
        }
        Ok(Self(a))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Softmax of `gain * q`, evaluated with the maximum exponent subtracted.
pub fn softmax_weights(q: &CueValidities, gain: f64) -> CueWeights {
    let q = q.as_slice();
    let top = q.iter().map(|v| gain * v).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|v| (gain * v - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut a: Vec<f64> = exps.iter().map(|e| e / total).collect();
    // floor at the smallest normal double so extreme gains keep a_m > 0
    for w in &mut a {
        *w = w.max(f64::MIN_POSITIVE);
    }
    CueWeights(a)
}

/// Weights divided by their maximum: a relative-preference profile whose
/// largest entry is exactly 1. Reported only; sampling uses the weights.
pub fn schedule_distribution(a: &CueWeights) -> Vec<f64> {
    let top = a.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    a.as_slice().iter().map(|w| w / top).collect()
}

/// Largest weight; `1/M` for uniform weights, approaching 1 when a single
/// cue dominates.
pub fn strategy_index(a: &CueWeights) -> f64 {
    a.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    Deterministic,
    Probabilistic,
}

/// One cue-processing interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    /// Zero-based cue index.
    pub cue: usize,
}

/// Ordered, contiguous intervals covering `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    intervals: Vec<Interval>,
    horizon: f64,
}

const BOUNDARY_TOL: f64 = 1e-9;

impl Schedule {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        let first = intervals
            .first()
            .ok_or_else(|| SimError::InvalidSchedule("no intervals".into()))?;
        if first.start.abs() > BOUNDARY_TOL {
            return Err(SimError::InvalidSchedule(format!(
                "first interval starts at {}, not 0",
                first.start
            )));
        }
        for (l, iv) in intervals.iter().enumerate() {
            if !(iv.end > iv.start) || !iv.end.is_finite() {
                return Err(SimError::InvalidSchedule(format!(
                    "interval {l} is empty or reversed: [{}, {})",
                    iv.start, iv.end
                )));
            }
        }
        for (l, pair) in intervals.windows(2).enumerate() {
            let gap = pair[1].start - pair[0].end;
            if gap > BOUNDARY_TOL {
                return Err(SimError::InvalidSchedule(format!(
                    "gap between intervals {l} and {}: [{}, {})",
                    l + 1,
                    pair[0].end,
                    pair[1].start
                )));
            }
            if gap < -BOUNDARY_TOL {
                return Err(SimError::InvalidSchedule(format!(
                    "intervals {l} and {} overlap",
                    l + 1
                )));
            }
        }
        let horizon = intervals.last().map(|iv| iv.end).unwrap_or(0.0);
        Ok(Self { intervals, horizon })
    }

    /// One interval covering `[0, horizon)` for `cue`.
    pub fn single(cue: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![Interval {
            start: 0.0,
            end: horizon,
            cue,
        }])
    }

    /// Equal-length intervals assigned to `cues` in order.
    pub fn equal_intervals(cues: &[usize], horizon: f64) -> Result<Self> {
        if cues.is_empty() {
            return Err(SimError::InvalidSchedule("no intervals".into()));
        }
        let len = horizon / cues.len() as f64;
        let n = cues.len();
        Self::new(
            cues.iter()
                .enumerate()
                .map(|(l, &cue)| Interval {
                    start: l as f64 * len,
                    end: if l + 1 == n { horizon } else { (l + 1) as f64 * len },
                    cue,
                })
                .collect(),
        )
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Largest cue index referenced, plus one.
    pub fn cue_count(&self) -> usize {
        self.intervals.iter().map(|iv| iv.cue + 1).max().unwrap_or(0)
    }

    /// Checks every cue index is below `m`.
    pub fn check_cues(&self, m: usize) -> Result<()> {
        match self.intervals.iter().position(|iv| iv.cue >= m) {
            Some(l) => Err(SimError::InvalidSchedule(format!(
                "interval {l} references cue {} but only {m} cues exist",
                self.intervals[l].cue
            ))),
            None => Ok(()),
        }
    }

    /// Checks the schedule reaches `horizon`.
    pub fn check_covers(&self, horizon: f64) -> Result<()> {
        if self.horizon + BOUNDARY_TOL < horizon {
            return Err(SimError::InvalidSchedule(format!(
                "schedule ends at {} but the simulation runs to {horizon}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Cue active at time `t`. Times past the end map to the last interval.
    pub fn cue_at(&self, t: f64) -> usize {
        let t = t + BOUNDARY_TOL;
        let idx = self.intervals.partition_point(|iv| iv.end <= t);
        self.intervals[idx.min(self.intervals.len() - 1)].cue
    }

    /// Number of intervals assigned to each of `m` cues.
    pub fn occupancy(&self, m: usize) -> Vec<usize> {
        let mut counts = vec![0; m];
        for iv in &self.intervals {
            if iv.cue < m {
                counts[iv.cue] += 1;
            }
        }
        counts
    }
}

/// Largest-remainder apportionment of `total` seats to `weights`; ties in
/// the remainder go to the lower index.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = quotas[i] - quotas[i].floor();
        let rj = quotas[j] - quotas[j].floor();
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Build `l` equal-length intervals over `[0, horizon]`.
///
/// Deterministic mode apportions intervals to cues in proportion to the
/// weights and orders cue blocks by descending weight. Probabilistic mode
/// draws each interval's cue independently from the weights.
pub fn build_schedule(
    a: &CueWeights,
    l: usize,
    horizon: f64,
    rng: &mut RngStream,
    mode: ScheduleMode,
) -> Result<Schedule> {
    if l == 0 {
        return Err(SimError::param("intervals", "L >= 1"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(SimError::param("horizon", "horizon > 0"));
    }
    let w = a.as_slice();
    let cues: Vec<usize> = match mode {
        ScheduleMode::Deterministic => {
            let counts = apportion(w, l);
            let mut order: Vec<usize> = (0..w.len()).collect();
            order.sort_by(|&i, &j| w[j].total_cmp(&w[i]).then(i.cmp(&j)));
            order
                .into_iter()
                .flat_map(|m| std::iter::repeat_n(m, counts[m]))
                .collect()
        }
        ScheduleMode::Probabilistic => (0..l).map(|_| sample_categorical(w, rng)).collect(),
    };
    Schedule::equal_intervals(&cues, horizon)
}

fn sample_categorical(w: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (m, p) in w.iter().enumerate() {
        acc += p;
        if u < acc {
            return m;
        }
    }
    w.len() - 1
}
