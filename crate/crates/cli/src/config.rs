//! Experiment configuration: one JSON file with a top-level `mode`.
//!
//! Absent fields take the defaults below. Present fields are never replaced,
//! so an invalid value is always reported rather than silently corrected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use hitl_core::decision::{
    Criterion, CueCoupling, CueDrift, DdmParams, LipConfig, MultiCue2afcParams, MultiCueRaceConfig, Protocol,
    RaceConfig,
};
use hitl_core::reward::{
    default_surface_model, GainGrid, SurfaceMetadata, DEFAULT_NDT, DEFAULT_RSI, DEFAULT_TRIALS_PER_CELL,
    MIN_TRIALS_PER_CELL,
};
use hitl_core::stochastic::{derive_stream, CrossingDetection, TimeGrid, DEFAULT_DT};
use hitl_core::strategy::{build_schedule, softmax_weights, CueValidities, Interval, Schedule, ScheduleMode};
use hitl_core::supervisor::SupervisorConfig;
use hitl_core::SimError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, FieldError};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SIMULATION_TRIALS: usize = 10_000;

/// Stream reserved for drawing a probabilistic cue schedule. Trial streams
/// count up from zero and never reach it.
const SCHEDULE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Ddm,
    #[serde(rename = "multicue-2afc")]
    Multicue2afc,
    Race,
    MulticueRace,
    Lip,
    RewardMap,
    Supervise,
}

impl Mode {
    pub fn is_simulation(self) -> bool {
        !matches!(self, Mode::RewardMap | Mode::Supervise)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Ddm => "ddm",
            Mode::Multicue2afc => "multicue-2afc",
            Mode::Race => "race",
            Mode::MulticueRace => "multicue-race",
            Mode::Lip => "lip",
            Mode::RewardMap => "reward-map",
            Mode::Supervise => "supervise",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: hitl_core::decision::DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdmSection {
    pub mu: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub crossing: CrossingDetection,
}

impl Default for DdmSection {
    fn default() -> Self {
        Self {
            mu: 1.0,
            lambda: 0.0,
            sigma: 1.0,
            theta_a: 1.0,
            theta_b: -1.0,
            crossing: CrossingDetection::default(),
        }
    }
}

impl DdmSection {
    pub fn params(&self) -> DdmParams {
        DdmParams {
            mu: self.mu,
            lambda: self.lambda,
            sigma: self.sigma,
            theta_a: self.theta_a,
            theta_b: self.theta_b,
            crossing: self.crossing,
        }
    }
}

/// Cue schedule, either listed explicitly or derived from cue validities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Explicit {
        intervals: Vec<Interval>,
    },
    Softmax {
        validities: Vec<f64>,
        gain: f64,
        slots: usize,
        mode: ScheduleMode,
    },
}

impl ScheduleSpec {
    fn default_softmax(validities: Vec<f64>) -> Self {
        ScheduleSpec::Softmax {
            validities,
            gain: 1.0,
            slots: 10,
            mode: ScheduleMode::Deterministic,
        }
    }

    pub fn build(&self, horizon: f64, seed: u64) -> hitl_core::Result<Schedule> {
        match self {
            ScheduleSpec::Explicit { intervals } => Schedule::new(intervals.clone()),
            ScheduleSpec::Softmax {
                validities,
                gain,
                slots,
                mode,
            } => {
                if !gain.is_finite() || *gain < 0.0 {
                    return Err(SimError::InvalidParameter {
                        field: "gain".into(),
                        constraint: "gain >= 0".into(),
                    });
                }
                let q = CueValidities::new(validities.clone())?;
                let a = softmax_weights(&q, *gain);
                build_schedule(&a, *slots, horizon, &mut derive_stream(seed, SCHEDULE_STREAM), *mode)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiCue2afcSection {
    pub cues: Vec<CueDrift>,
    pub sigma: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub schedule: ScheduleSpec,
    pub crossing: CrossingDetection,
}

impl Default for MultiCue2afcSection {
    fn default() -> Self {
        Self {
            cues: vec![CueDrift { mu: 2.0, lambda: 0.0 }, CueDrift { mu: 0.5, lambda: 0.0 }],
            sigma: 1.0,
            theta_a: 1.0,
            theta_b: -1.0,
            schedule: ScheduleSpec::default_softmax(vec![0.9, 0.6]),
            crossing: CrossingDetection::default(),
        }
    }
}

impl MultiCue2afcSection {
    pub fn params(&self, horizon: f64, seed: u64) -> hitl_core::Result<MultiCue2afcParams> {
        Ok(MultiCue2afcParams {
            cues: self.cues.clone(),
            sigma: self.sigma,
            theta_a: self.theta_a,
            theta_b: self.theta_b,
            schedule: self.schedule.build(horizon, seed)?,
            crossing: self.crossing,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaceSection {
    pub inputs: Vec<f64>,
    pub leak: f64,
    pub inhibition: f64,
    pub sigma: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub criterion: Criterion,
    pub margin: Option<f64>,
    pub crossing: CrossingDetection,
}

impl Default for RaceSection {
    fn default() -> Self {
        Self {
            inputs: vec![1.5, 1.0, 0.5],
            leak: 1.0,
            inhibition: 0.5,
            sigma: vec![1.0; 3],
            thresholds: vec![1.0; 3],
            criterion: Criterion::default(),
            margin: None,
            crossing: CrossingDetection::default(),
        }
    }
}

impl RaceSection {
    pub fn params(&self) -> RaceConfig {
        RaceConfig {
            inputs: self.inputs.clone(),
            leak: self.leak,
            inhibition: self.inhibition,
            sigma: self.sigma.clone(),
            thresholds: self.thresholds.clone(),
            criterion: self.criterion,
            margin: self.margin,
            crossing: self.crossing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiCueRaceSection {
    pub cues: Vec<CueCoupling>,
    /// `inputs[i][m]`: input to pool `i` from cue `m`.
    pub inputs: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub schedule: ScheduleSpec,
    pub criterion: Criterion,
    pub margin: Option<f64>,
    pub crossing: CrossingDetection,
}

impl Default for MultiCueRaceSection {
    fn default() -> Self {
        let coupling = CueCoupling {
            leak: 1.0,
            inhibition: 0.5,
        };
        Self {
            cues: vec![coupling; 2],
            inputs: vec![vec![1.5, 0.8], vec![1.0, 0.8]],
            sigma: vec![1.0; 2],
            thresholds: vec![1.0; 2],
            schedule: ScheduleSpec::default_softmax(vec![0.8, 0.6]),
            criterion: Criterion::default(),
            margin: None,
            crossing: CrossingDetection::default(),
        }
    }
}

impl MultiCueRaceSection {
    pub fn params(&self, horizon: f64, seed: u64) -> hitl_core::Result<MultiCueRaceConfig> {
        Ok(MultiCueRaceConfig {
            cues: self.cues.clone(),
            inputs: self.inputs.clone(),
            sigma: self.sigma.clone(),
            thresholds: self.thresholds.clone(),
            schedule: self.schedule.build(horizon, seed)?,
            criterion: self.criterion,
            margin: self.margin,
            crossing: self.crossing,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipSection {
    pub lambda: f64,
    pub gamma_e: f64,
    pub gamma_i: f64,
    pub inputs: Vec<f64>,
    pub sigma: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub crossing: CrossingDetection,
}

impl Default for LipSection {
    fn default() -> Self {
        let m = default_surface_model();
        Self {
            lambda: m.lambda,
            gamma_e: m.gamma_e,
            gamma_i: m.gamma_i,
            inputs: m.inputs,
            sigma: m.sigma,
            thresholds: m.thresholds,
            crossing: m.crossing,
        }
    }
}

impl LipSection {
    pub fn params(&self) -> LipConfig {
        LipConfig {
            lambda: self.lambda,
            gamma_e: self.gamma_e,
            gamma_i: self.gamma_i,
            inputs: self.inputs.clone(),
            sigma: self.sigma.clone(),
            thresholds: self.thresholds.clone(),
            crossing: self.crossing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub ndt: f64,
    pub rsi: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            ndt: DEFAULT_NDT,
            rsi: DEFAULT_RSI,
        }
    }
}

/// A previously written surface to reuse instead of recomputing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSource {
    pub csv: PathBuf,
    /// JSON sidecar written next to the CSV.
    pub meta: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory; excluded from the config digest.
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
    /// Trials per simulation, or per surface cell for the gain-plane modes.
    #[serde(default)]
    pub trials: Option<usize>,
    /// Index of the correct alternative; inferred from the drift when absent.
    #[serde(default)]
    pub correct: Option<usize>,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub ddm: DdmSection,
    #[serde(default)]
    pub multicue_2afc: MultiCue2afcSection,
    #[serde(default)]
    pub race: RaceSection,
    #[serde(default)]
    pub multicue_race: MultiCueRaceSection,
    #[serde(default)]
    pub lip: LipSection,
    #[serde(default)]
    pub grid: GainGrid,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSource>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    /// A config of the given mode with every default filled in.
    pub fn with_mode(mode: Mode) -> Self {
        serde_json::from_value(serde_json::json!({ "mode": mode })).expect("defaults deserialize")
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(trials) = o.trials {
            self.trials = Some(trials);
        }
    }

    pub fn time_grid(&self) -> hitl_core::Result<TimeGrid> {
        TimeGrid::new(self.time.dt, self.time.horizon)
    }

    pub fn simulation_trials(&self) -> usize {
        self.trials.unwrap_or(DEFAULT_SIMULATION_TRIALS)
    }

    pub fn trials_per_cell(&self) -> usize {
        self.trials.unwrap_or(DEFAULT_TRIALS_PER_CELL)
    }

    /// Every validation failure in the sections the mode uses.
    pub fn check(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut push = |section: &str, r: hitl_core::Result<()>| {
            if let Err(e) = r {
                errs.push(FieldError::from_sim(section, e));
            }
        };
        push("time", self.time_grid().map(|_| ()));
        let horizon = self.time.horizon;
        match self.mode {
            Mode::Ddm => push("ddm", self.ddm.params().validate()),
            Mode::Multicue2afc => push(
                "multicue_2afc",
                self.multicue_2afc.params(horizon, self.seed).and_then(|p| {
                    p.validate()?;
                    p.schedule.check_covers(horizon)
                }),
            ),
            Mode::Race => push("race", self.race.params().validate()),
            Mode::MulticueRace => push(
                "multicue_race",
                self.multicue_race.params(horizon, self.seed).and_then(|p| {
                    p.validate()?;
                    p.schedule.check_covers(horizon)
                }),
            ),
            Mode::Lip => push("lip", self.lip.params().validate()),
            Mode::RewardMap | Mode::Supervise => {
                if self.mode == Mode::Supervise && self.surface.is_some() {
                    // The stored surface carries its own grid and model.
                } else {
                    push("lip", self.lip.params().validate());
                    push("grid", self.grid.validate());
                    push("reward", check_reward(&self.reward));
                }
            }
        }
        if self.mode.is_simulation() {
            if let Some(c) = self.correct {
                let k = self.alternatives();
                if c >= k {
                    errs.push(FieldError::new("correct", format!("correct < {k}")));
                }
            }
        }
        match self.trials {
            Some(0) => errs.push(FieldError::new("trials", "trials >= 1")),
            Some(n) if !self.mode.is_simulation() && n < MIN_TRIALS_PER_CELL => errs.push(FieldError::new(
                "trials",
                format!("trials >= {MIN_TRIALS_PER_CELL} per cell"),
            )),
            _ => {}
        }
        if self.mode == Mode::Supervise {
            for e in self.supervisor.check() {
                errs.push(FieldError::from_sim("supervisor", e));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let errs = self.check();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }

    /// Number of alternatives of the simulated model.
    pub fn alternatives(&self) -> usize {
        match self.mode {
            Mode::Ddm | Mode::Multicue2afc => 2,
            Mode::Race => self.race.inputs.len(),
            Mode::MulticueRace => self.multicue_race.inputs.len(),
            Mode::Lip | Mode::RewardMap | Mode::Supervise => self.lip.inputs.len(),
        }
    }
}

fn check_reward(r: &RewardSection) -> hitl_core::Result<()> {
    if !(r.ndt >= 0.0) || !r.ndt.is_finite() {
        return Err(SimError::InvalidParameter {
            field: "ndt".into(),
            constraint: "ndt >= 0".into(),
        });
    }
    if !(r.rsi >= 0.0) || !r.rsi.is_finite() {
        return Err(SimError::InvalidParameter {
            field: "rsi".into(),
            constraint: "rsi >= 0".into(),
        });
    }
    Ok(())
}

/// Read, parse, override and validate a config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut config = ExperimentConfig::parse(&text)?;
    config.apply(overrides);
    config.validate()?;
    Ok(config)
}

/// Read a stored surface sidecar.
pub fn read_metadata(path: &Path) -> Result<SurfaceMetadata, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_ddm_config_fills_defaults() {
        let c = ExperimentConfig::parse(r#"{"mode": "ddm"}"#).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.out, PathBuf::from("out"));
        assert_eq!(c.ddm, DdmSection::default());
        assert_eq!(c.time.dt, 1e-3);
        assert_eq!(c.time.horizon, 10.0);
        assert!(c.check().is_empty());
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let err = ExperimentConfig::parse(r#"{"mode": "ddm", "ddm": {"sigmaa": 1}}"#).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn parse_error_reports_position() {
        let err = ExperimentConfig::parse("{\n  \"mode\": \"ddm\",\n  \"seed\": x\n}").unwrap_err();
        match err {
            CliError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn zero_sigma_names_constraint() {
        let c = ExperimentConfig::parse(r#"{"mode": "ddm", "ddm": {"sigma": 0}}"#).unwrap();
        let errs = c.check();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "ddm.sigma");
        assert_eq!(errs[0].constraint, "sigma > 0");
    }

    #[test]
    fn every_failure_reported_in_one_pass() {
        let text = r#"{
            "mode": "supervise",
            "trials": 0,
            "time": {"dt": -1},
            "supervisor": {"engagement": {"theta_on": 0.2, "theta_off": 0.4}, "region_level": 1.5}
        }"#;
        let c = ExperimentConfig::parse(text).unwrap();
        let fields: Vec<String> = c.check().into_iter().map(|e| e.field).collect();
        assert!(fields.contains(&"time".to_string()), "{fields:?}");
        assert!(fields.contains(&"trials".to_string()), "{fields:?}");
        assert!(fields.contains(&"supervisor.region_level".to_string()), "{fields:?}");
        assert!(
            fields.contains(&"supervisor.engagement.theta_on".to_string()),
            "{fields:?}"
        );
        assert!(
            fields.contains(&"supervisor.engagement.theta_off".to_string()),
            "{fields:?}"
        );
    }

    #[test]
    fn overrides_replace_fields() {
        let mut c = ExperimentConfig::with_mode(Mode::Lip);
        c.apply(&Overrides {
            seed: Some(7),
            out: Some("x".into()),
            trials: Some(50),
        });
        assert_eq!((c.seed, c.out.as_path(), c.trials), (7, Path::new("x"), Some(50)));
    }

    #[test]
    fn out_is_not_serialized() {
        let c = ExperimentConfig::with_mode(Mode::Ddm);
        let v = serde_json::to_value(&c).unwrap();
        assert!(v.get("out").is_none());
        assert_eq!(v["mode"], "ddm");
    }

    #[test]
    fn explicit_schedule_round_trips() {
        let text = r#"{"mode": "multicue-2afc", "time": {"horizon": 2},
            "multicue_2afc": {"schedule": {"kind": "explicit", "intervals": [
                {"start": 0, "end": 1, "cue": 0}, {"start": 1, "end": 2, "cue": 1}]}}}"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert!(c.check().is_empty(), "{:?}", c.check());
        let p = c.multicue_2afc.params(2.0, c.seed).unwrap();
        assert_eq!(p.schedule.intervals().len(), 2);
    }

    #[test]
    fn schedule_must_cover_horizon() {
        let text = r#"{"mode": "multicue-2afc",
            "multicue_2afc": {"schedule": {"kind": "explicit", "intervals": [{"start": 0, "end": 1, "cue": 0}]}}}"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.check().len(), 1);
    }

    #[test]
    fn correct_index_bounded() {
        let c = ExperimentConfig::parse(r#"{"mode": "race", "correct": 3}"#).unwrap();
        assert_eq!(c.check()[0].field, "correct");
    }

    #[test]
    fn low_cell_trials_rejected() {
        let c = ExperimentConfig::parse(r#"{"mode": "reward-map", "trials": 20}"#).unwrap();
        assert_eq!(c.check()[0].field, "trials");
    }
}
