//! Closed-loop dispatch of tasks between a human operator and autonomy.
//!
//! Each task has a simplicity `m` in (0, 1]. Autonomy succeeds with
//! `p1 = 0.95 m`; the operator succeeds with `p0 = m R(Γ)`, where `R` is the
//! normalized reward-rate surface at the operator's current gains. The task
//! goes to autonomy with probability `p = (1 - p0) p1`. Working a task pushes
//! the operator's gains away from the high-performance region; skipping one
//! lets them recover.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::digest::config_digest;
use crate::error::{Result, SimError};
use crate::gain::{
    perturb_gain_assigned, restore_gain_skipped, update_mode, update_utilities, GainBounds, GainDynamics, GainState,
    LcMode, UtilityTrace, DEFAULT_TAU_L, DEFAULT_TAU_S, DEFAULT_THETA_OFF, DEFAULT_THETA_ON,
};
use crate::reward::{locate_region, lookup, HighPerfRegion, RewardSurface, DEFAULT_REGION_LEVEL};
use crate::stats::{mean, sample_variance};
use crate::stochastic::{derive_stream, RngStream};

pub const DEFAULT_M_LO: f64 = 0.75;
pub const DEFAULT_M_HI: f64 = 0.95;
/// Autonomy success rate on the simplest task.
pub const AUTONOMY_SCALE: f64 = 0.95;

const TASK_STREAM: u64 = 0;
const LOOP_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    /// Simplicity in (0, 1]; 1 is the easiest task.
    pub m: f64,
    /// Opaque task description carried through unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
}

/// `n` tasks with simplicity drawn uniformly from `[lo, hi]`.
pub fn gen_tasks(n: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Result<Vec<Task>> {
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(SimError::InvalidInput(format!(
            "task simplicity range [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"
        )));
    }
    Ok((0..n)
        .map(|id| Task {
            id,
            m: lo + (hi - lo) * rng.uniform(),
            payload: None,
        })
        .collect())
}

/// `p1 = 0.95 m`.
pub fn autonomy_success(m: f64) -> f64 {
    AUTONOMY_SCALE * m
}

/// `p0 = m R(Γ)`.
pub fn human_success(m: f64, state: &GainState, surface: &RewardSurface) -> f64 {
    m * lookup(surface, state)
}

/// Probability of giving the task to autonomy, `(1 - p0) p1`.
pub fn dispatch_probability(p0: f64, p1: f64) -> f64 {
    (1.0 - p0) * p1
}

/// Expected success of the dispatched task, `(1 - p) p0 + p p1`.
pub fn average_success(p: f64, p0: f64, p1: f64) -> f64 {
    (1.0 - p) * p0 + p * p1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    Human,
    Autonomy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

impl Assignment {
    fn as_str(self) -> &'static str {
        match self {
            Assignment::Human => "human",
            Assignment::Autonomy => "autonomy",
        }
    }
}

impl Outcome {
    fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub task: usize,
    pub m: f64,
    pub gain_before: GainState,
    pub p0: f64,
    pub p1: f64,
    pub p: f64,
    pub assignment: Assignment,
    pub outcome: Outcome,
    pub gain_after: GainState,
    pub p_bar: f64,
    /// LC mode after this task, when engagement coupling is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<LcMode>,
}

/// Feeds task outcomes into the utility traces and lets the LC mode scale
/// the outward gain step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngagementCoupling {
    pub tau_s: f64,
    pub tau_l: f64,
    pub theta_on: f64,
    pub theta_off: f64,
    /// Seconds of operator time per task.
    pub task_interval: f64,
}

impl Default for EngagementCoupling {
    fn default() -> Self {
        Self {
            tau_s: DEFAULT_TAU_S,
            tau_l: DEFAULT_TAU_L,
            theta_on: DEFAULT_THETA_ON,
            theta_off: DEFAULT_THETA_OFF,
            task_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorConfig {
    pub n_tasks: usize,
    pub m_lo: f64,
    pub m_hi: f64,
    /// Autonomy success is `autonomy_scale * m`.
    pub autonomy_scale: f64,
    pub dynamics: GainDynamics,
    pub region_level: f64,
    /// Starting gains; the region center when absent.
    pub initial_gain: Option<GainState>,
    pub engagement: Option<EngagementCoupling>,
    /// Keep the gains fixed at their initial value.
    pub freeze_gain: bool,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            n_tasks: 200,
            m_lo: DEFAULT_M_LO,
            m_hi: DEFAULT_M_HI,
            autonomy_scale: AUTONOMY_SCALE,
            dynamics: GainDynamics::default(),
            region_level: DEFAULT_REGION_LEVEL,
            initial_gain: None,
            engagement: None,
            freeze_gain: false,
        }
    }
}

impl SupervisorConfig {
    /// Every violated constraint, in field order.
    pub fn check(&self) -> Vec<SimError> {
        let mut errs = Vec::new();
        if !(self.m_lo > 0.0 && self.m_lo <= self.m_hi && self.m_hi <= 1.0) {
            errs.push(SimError::param("m_lo", "0 < m_lo <= m_hi <= 1"));
        }
        if !(self.autonomy_scale >= 0.0 && self.autonomy_scale <= 1.0) {
            errs.push(SimError::param("autonomy_scale", "0 <= autonomy_scale <= 1"));
        }
        if let Err(e) = self.dynamics.validate() {
            errs.push(e);
        }
        if !(self.region_level > 0.0 && self.region_level < 1.0) {
            errs.push(SimError::param("region_level", "0 < region_level < 1"));
        }
        if let Some(g) = &self.initial_gain {
            if !g.gamma_e.is_finite() || !g.gamma_i.is_finite() {
                errs.push(SimError::param("initial_gain", "finite gains"));
            }
        }
        if let Some(c) = &self.engagement {
            if !(c.tau_s > 0.0 && c.tau_l > c.tau_s) {
                errs.push(SimError::param("engagement.tau_l", "tau_l > tau_s > 0"));
            }
            if !(c.theta_off < c.theta_on) {
                errs.push(SimError::param("engagement.theta_on", "theta_on > theta_off"));
                errs.push(SimError::param("engagement.theta_off", "theta_off < theta_on"));
            }
            if !(c.theta_off > 0.0 && c.theta_on < 1.0) {
                errs.push(SimError::param("engagement.theta_on", "0 < theta_off < theta_on < 1"));
            }
            if !(c.task_interval > 0.0) {
                errs.push(SimError::param("engagement.task_interval", "task_interval > 0"));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        match self.check().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Internal state of the simulated operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorState {
    pub gain: GainState,
    pub utility: UtilityTrace,
    pub mode: LcMode,
}

impl OperatorState {
    pub fn new(gain: GainState) -> Self {
        Self {
            gain,
            utility: UtilityTrace::default(),
            mode: LcMode::default(),
        }
    }
}

/// Shared, read-only context of one supervised run.
#[derive(Debug, Clone)]
pub struct Supervisor<'a> {
    pub surface: &'a RewardSurface,
    pub region: HighPerfRegion,
    pub bounds: GainBounds,
    pub config: SupervisorConfig,
}

impl<'a> Supervisor<'a> {
    pub fn new(surface: &'a RewardSurface, config: SupervisorConfig) -> Result<Self> {
        config.validate()?;
        let region = locate_region(surface, config.region_level)?;
        Ok(Self {
            surface,
            region,
            bounds: surface.grid.bounds(),
            config,
        })
    }

    pub fn initial_state(&self) -> OperatorState {
        let gain = self.config.initial_gain.unwrap_or(self.region.center);
        OperatorState::new(self.bounds.clamp(gain))
    }

    /// Dispatch one task and update the operator.
    ///
    /// Draw order: assignment uniform, outcome uniform, then the gain update.
    pub fn step(
        &self,
        state: &OperatorState,
        task: &Task,
        rng: &mut RngStream,
    ) -> Result<(TrialRecord, OperatorState)> {
        let p0 = human_success(task.m, &state.gain, self.surface);
        let p1 = self.config.autonomy_scale * task.m;
        let p = dispatch_probability(p0, p1);
        let p_bar = average_success(p, p0, p1);
        let assignment = if rng.uniform() < p {
            Assignment::Autonomy
        } else {
            Assignment::Human
        };
        let p_agent = match assignment {
            Assignment::Human => p0,
            Assignment::Autonomy => p1,
        };
        let outcome = if rng.uniform() < p_agent {
            Outcome::Success
        } else {
            Outcome::Failure
        };

        let mut next = *state;
        let mut mode = None;
        if let Some(c) = &self.config.engagement {
            let reward = if outcome == Outcome::Success { 1.0 } else { 0.0 };
            next.utility = update_utilities(&state.utility, reward, c.task_interval)?;
            next.mode = update_mode(state.mode, next.utility.engagement(), c.theta_on, c.theta_off)?;
            mode = Some(next.mode);
        }
        if !self.config.freeze_gain {
            let d = &self.config.dynamics;
            let center = &self.region.center;
            next.gain = match assignment {
                Assignment::Human => perturb_gain_assigned(&state.gain, center, &self.bounds, rng, d.step_scale(mode)),
                Assignment::Autonomy => restore_gain_skipped(&state.gain, center, &self.bounds, rng, d.alpha, d.s1),
            };
        }
        let record = TrialRecord {
            task: task.id,
            m: task.m,
            gain_before: state.gain,
            p0,
            p1,
            p,
            assignment,
            outcome,
            gain_after: next.gain,
            p_bar,
            mode,
        };
        Ok((record, next))
    }

    /// Sequential closed-loop run over `config.n_tasks` generated tasks.
    pub fn run(&self, seed: u64) -> Result<RunSummary> {
        let tasks = gen_tasks(
            self.config.n_tasks,
            self.config.m_lo,
            self.config.m_hi,
            &mut derive_stream(seed, TASK_STREAM),
        )?;
        self.run_tasks(&tasks, seed)
    }

    pub fn run_tasks(&self, tasks: &[Task], seed: u64) -> Result<RunSummary> {
        let mut rng = derive_stream(seed, LOOP_STREAM);
        let mut state = self.initial_state();
        let mut records = Vec::with_capacity(tasks.len());
        for task in tasks {
            let (rec, next) = self.step(&state, task, &mut rng)?;
            records.push(rec);
            state = next;
        }
        let digest = config_digest(&(&self.config, &self.surface.config_digest));
        Ok(RunSummary::from_records(records, &self.region, seed, digest))
    }
}

/// Closed-loop run and its summary statistics. Statistics are `None` when
/// the run is too short to define them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub n_tasks: usize,
    pub mean_p0: Option<f64>,
    pub var_p0: Option<f64>,
    pub mean_p_bar: Option<f64>,
    pub var_p_bar: Option<f64>,
    /// Realized success fraction.
    pub empirical_success: Option<f64>,
    pub autonomy_fraction: Option<f64>,
    /// Fraction of tasks started with gains within twice the region's
    /// effective radius of its center.
    pub containment_fraction: Option<f64>,
    pub region_center: GainState,
    pub region_radius: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl RunSummary {
    pub fn from_records(records: Vec<TrialRecord>, region: &HighPerfRegion, seed: u64, config_digest: String) -> Self {
        let p0: Vec<f64> = records.iter().map(|r| r.p0).collect();
        let p_bar: Vec<f64> = records.iter().map(|r| r.p_bar).collect();
        let indicator = |f: &dyn Fn(&TrialRecord) -> bool| -> Vec<f64> {
            records.iter().map(|r| if f(r) { 1.0 } else { 0.0 }).collect()
        };
        let reach = 2.0 * region.effective_radius;
        Self {
            n_tasks: records.len(),
            mean_p0: mean(&p0),
            var_p0: sample_variance(&p0),
            mean_p_bar: mean(&p_bar),
            var_p_bar: sample_variance(&p_bar),
            empirical_success: mean(&indicator(&|r| r.outcome == Outcome::Success)),
            autonomy_fraction: mean(&indicator(&|r| r.assignment == Assignment::Autonomy)),
            containment_fraction: mean(&indicator(&|r| r.gain_before.distance(&region.center) <= reach)),
            region_center: region.center,
            region_radius: region.effective_radius,
            seed,
            config_digest,
            records,
        }
    }

    /// One row per task; gains are those the task was handled with.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "task,m,gamma_E,gamma_I,p0,p1,p,assignment,outcome,p_bar")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.task,
                r.m,
                r.gain_before.gamma_e,
                r.gain_before.gamma_i,
                r.p0,
                r.p1,
                r.p,
                r.assignment.as_str(),
                r.outcome.as_str(),
                r.p_bar
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{Axis, GainGrid};
    use proptest::prelude::*;

    fn grid() -> GainGrid {
        GainGrid {
            gamma_e: Axis {
                min: 0.2,
                max: 2.0,
                n: 5,
            },
            gamma_i: Axis {
                min: 0.0,
                max: 1.0,
                n: 5,
            },
        }
    }

    /// Peaked surface centered on cell (2, 2).
    fn peaked() -> RewardSurface {
        let raw = (0..5)
            .map(|a: i32| {
                (0..5)
                    .map(|b: i32| 1.0 / (1.0 + ((a - 2).pow(2) + (b - 2).pow(2)) as f64))
                    .collect()
            })
            .collect();
        RewardSurface::from_raw(grid(), raw, 100, 0, "test".into()).unwrap()
    }

    fn flat(v: f64) -> RewardSurface {
        let mut s = RewardSurface::from_raw(grid(), vec![vec![1.0; 5]; 5], 100, 0, "flat".into()).unwrap();
        s.values = vec![vec![v; 5]; 5];
        s
    }

    #[test]
    fn gen_tasks_examples() {
        let mut rng = derive_stream(1, 0);
        assert!(gen_tasks(5, 0.8, 0.8, &mut rng).unwrap().iter().all(|t| t.m == 0.8));
        let tasks = gen_tasks(10_000, DEFAULT_M_LO, DEFAULT_M_HI, &mut rng).unwrap();
        assert!(tasks.iter().all(|t| (0.75..=0.95).contains(&t.m)));
        let m = tasks.iter().map(|t| t.m).sum::<f64>() / 1e4;
        assert!((m - 0.85).abs() < 0.002, "mean {m}");
        assert!(gen_tasks(1, 0.0, 0.5, &mut rng).is_err());
        assert!(gen_tasks(1, 0.6, 0.5, &mut rng).is_err());
        assert!(gen_tasks(1, 0.5, 1.1, &mut rng).is_err());
    }

    #[test]
    fn success_rate_examples() {
        assert_eq!(autonomy_success(1.0), 0.95);
        assert!((autonomy_success(0.75) - 0.7125).abs() < 1e-15);
        assert!((autonomy_success(0.95) - 0.9025).abs() < 1e-15);
        let s = peaked();
        let c = s.center();
        assert_eq!(human_success(0.95, &c, &s), 0.95);
        assert_eq!(human_success(0.75, &c, &s), 0.75);
        assert_eq!(human_success(0.9, &c, &flat(0.0)), 0.0);
    }

    #[test]
    fn dispatch_examples() {
        assert_eq!(dispatch_probability(1.0, 0.7), 0.0);
        assert_eq!(dispatch_probability(0.0, 1.0), 1.0);
        let p = dispatch_probability(0.8, 0.9);
        assert!((p - 0.18).abs() < 1e-15);
        assert!((1.0 - p - 0.82).abs() < 1e-15);
        assert_eq!(average_success(0.0, 0.3, 0.9), 0.3);
        assert_eq!(average_success(1.0, 0.3, 0.9), 0.9);
        assert!((average_success(0.18, 0.8, 0.9) - 0.818).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn partition_and_convexity(p0 in 0.0f64..=1.0, p1 in 0.0f64..=1.0) {
            let p = dispatch_probability(p0, p1);
            prop_assert!((p0 + (1.0 - p0) * (1.0 - p1) + p - 1.0).abs() <= 4.0 * f64::EPSILON);
            let pb = average_success(p, p0, p1);
            prop_assert!(pb >= p0.min(p1) - 1e-15 && pb <= p0.max(p1) + 1e-15);
        }

        #[test]
        fn dispatch_monotone(p0 in 0.0f64..0.99, p1 in 0.0f64..0.99, d in 0.001f64..0.01) {
            prop_assert!(dispatch_probability(p0 + d, p1) <= dispatch_probability(p0, p1));
            prop_assert!(dispatch_probability(p0, p1 + d) >= dispatch_probability(p0, p1));
        }
    }

    #[test]
    fn human_forced_when_p0_is_one() {
        let s = flat(1.0);
        let sup = Supervisor::new(&s, SupervisorConfig::default()).unwrap();
        let mut rng = derive_stream(3, 1);
        let task = Task {
            id: 0,
            m: 1.0,
            payload: None,
        };
        for _ in 0..200 {
            let (r, _) = sup.step(&sup.initial_state(), &task, &mut rng).unwrap();
            assert_eq!(r.assignment, Assignment::Human);
            assert_eq!(r.outcome, Outcome::Success);
        }
    }

    #[test]
    fn autonomy_forced_when_p0_is_zero() {
        let mut zero = flat(0.0);
        zero.values[2][2] = 1.0;
        zero.argmax = (2, 2);
        let cfg = SupervisorConfig {
            autonomy_scale: 1.0,
            ..Default::default()
        };
        let sup = Supervisor::new(&zero, cfg).unwrap();
        let start = OperatorState::new(GainState::new(0.2, 0.0));
        let task = Task {
            id: 0,
            m: 1.0,
            payload: None,
        };
        let center = sup.region.center;
        let mut rng = derive_stream(4, 1);
        for _ in 0..100 {
            let (r, next) = sup.step(&start, &task, &mut rng).unwrap();
            assert_eq!((r.p0, r.p1, r.p), (0.0, 1.0, 1.0));
            assert_eq!(r.assignment, Assignment::Autonomy);
            assert_eq!(r.outcome, Outcome::Success);
            assert!(next.gain.distance(&center) < start.gain.distance(&center));
        }
    }

    #[test]
    fn frozen_gain_frequencies() {
        let m = 0.9 / AUTONOMY_SCALE;
        let s = flat(0.8 / m);
        let cfg = SupervisorConfig {
            freeze_gain: true,
            ..Default::default()
        };
        let sup = Supervisor::new(&s, cfg).unwrap();
        let tasks: Vec<Task> = (0..10_000).map(|id| Task { id, m, payload: None }).collect();
        let run = sup.run_tasks(&tasks, 8).unwrap();
        let r0 = &run.records[0];
        assert!((r0.p0 - 0.8).abs() < 1e-12 && (r0.p1 - 0.9).abs() < 1e-12);
        assert!((run.autonomy_fraction.unwrap() - 0.18).abs() < 0.012);
        assert!((run.empirical_success.unwrap() - 0.818).abs() < 0.012);
        assert!(run.records.iter().all(|r| r.gain_after == r.gain_before));
    }

    #[test]
    fn empty_run_is_undefined() {
        let s = peaked();
        let sup = Supervisor::new(
            &s,
            SupervisorConfig {
                n_tasks: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let run = sup.run(1).unwrap();
        assert_eq!(run.n_tasks, 0);
        assert!(run.mean_p0.is_none() && run.var_p_bar.is_none() && run.containment_fraction.is_none());
        let json = serde_json::to_value(&run).unwrap();
        assert!(json["mean_p_bar"].is_null());
    }

    #[test]
    fn runs_are_deterministic() {
        let s = peaked();
        let sup = Supervisor::new(&s, SupervisorConfig::default()).unwrap();
        let (a, b) = (sup.run(42).unwrap(), sup.run(42).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.records, b.records);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("task,m,gamma_E,gamma_I,p0,p1,p,assignment,outcome,p_bar\n0,"));
        assert_eq!(text.lines().count(), 201);
        assert_ne!(sup.run(43).unwrap().records, a.records);
    }

    #[test]
    fn records_satisfy_identities() {
        let s = peaked();
        let sup = Supervisor::new(
            &s,
            SupervisorConfig {
                n_tasks: 2000,
                ..Default::default()
            },
        )
        .unwrap();
        let run = sup.run(5).unwrap();
        for r in &run.records {
            assert_eq!(r.p, (1.0 - r.p0) * r.p1);
            assert!(r.p_bar >= r.p0.min(r.p1) - 1e-15 && r.p_bar <= r.p0.max(r.p1) + 1e-15);
            assert!(sup.bounds.contains(&r.gain_after));
        }
    }

    #[test]
    fn engagement_coupling_records_modes() {
        let s = peaked();
        let cfg = SupervisorConfig {
            engagement: Some(EngagementCoupling::default()),
            ..Default::default()
        };
        let sup = Supervisor::new(&s, cfg).unwrap();
        let run = sup.run(9).unwrap();
        assert!(run.records.iter().all(|r| r.mode.is_some()));
        let bad = SupervisorConfig {
            engagement: Some(EngagementCoupling {
                theta_on: 0.1,
                theta_off: 0.2,
                ..Default::default()
            }),
            m_lo: 0.0,
            ..Default::default()
        };
        let fields: Vec<String> = bad
            .check()
            .into_iter()
            .map(|e| match e {
                SimError::InvalidParameter { field, .. } => field,
                other => other.to_string(),
            })
            .collect();
        assert_eq!(fields, ["m_lo", "engagement.theta_on", "engagement.theta_off"]);
    }
}
