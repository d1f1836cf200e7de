//! Experiment orchestration and artifact output.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hitl_core::decision::{simulate_trials, DecisionModel, DecisionOutcome, Performance, Protocol, Termination};
use hitl_core::digest::config_digest;
use hitl_core::gain::GainState;
use hitl_core::reward::{
    compute_surface_with_stats, locate_region, CellStats, HighPerfRegion, RewardSurface, SurfaceOptions,
};
use hitl_core::supervisor::{RunSummary, Supervisor};
use serde::Serialize;

use crate::config::{read_metadata, ExperimentConfig, Mode};
use crate::error::CliError;
use crate::plot;

/// Top-level commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    RewardMap,
    Supervise,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::RewardMap => "reward-map",
            Command::Supervise => "supervise",
        }
    }

    fn accepts(self, mode: Mode) -> bool {
        match self {
            Command::Simulate => mode.is_simulation(),
            Command::RewardMap => mode == Mode::RewardMap,
            Command::Supervise => mode == Mode::Supervise,
        }
    }
}

/// Paths written by one experiment, in write order.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    written: Artifacts,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Artifacts::default(),
        })
    }

    fn file<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(f);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        self.written.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("artifact serializes");
        self.file(name, |w| writeln!(w, "{text}"))
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.file(name, |w| w.write_all(text.as_bytes()))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Run a validated config under `command`.
pub fn run_experiment(command: Command, config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    if !command.accepts(config.mode) {
        return Err(CliError::ModeMismatch {
            command: command.name().into(),
            mode: config.mode.to_string(),
        });
    }
    config.validate()?;
    match command {
        Command::Simulate => simulate(config),
        Command::RewardMap => reward_map(config),
        Command::Supervise => supervise(config),
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    mode: Mode,
    seed: u64,
    config_digest: &'a str,
    protocol: Protocol,
    dt: f64,
    horizon: f64,
    correct: usize,
    performance: &'a Performance,
}

fn simulate(config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let horizon = config.time.horizon;
    let n = config.simulation_trials();
    let (outcomes, alternatives, inferred) = match config.mode {
        Mode::Ddm => {
            let p = config.ddm.params();
            let correct = if p.mu >= 0.0 { 0 } else { 1 };
            (run_model(&p, config, n)?, p.alternatives(), correct)
        }
        Mode::Multicue2afc => {
            let p = config.multicue_2afc.params(horizon, config.seed)?;
            let drift: f64 = p
                .schedule
                .intervals()
                .iter()
                .map(|iv| p.cues[iv.cue].mu * (iv.end.min(horizon) - iv.start).max(0.0))
                .sum();
            let correct = if drift >= 0.0 { 0 } else { 1 };
            (run_model(&p, config, n)?, p.alternatives(), correct)
        }
        Mode::Race => {
            let p = config.race.params();
            let correct = argmax(&p.inputs);
            (run_model(&p, config, n)?, p.alternatives(), correct)
        }
        Mode::MulticueRace => {
            let p = config.multicue_race.params(horizon, config.seed)?;
            let totals: Vec<f64> = p.inputs.iter().map(|row| row.iter().sum()).collect();
            let correct = argmax(&totals);
            (run_model(&p, config, n)?, p.alternatives(), correct)
        }
        Mode::Lip => {
            let p = config.lip.params();
            let correct = argmax(&p.inputs);
            (run_model(&p, config, n)?, p.alternatives(), correct)
        }
        Mode::RewardMap | Mode::Supervise => unreachable!("checked by run_experiment"),
    };
    let correct = config.correct.unwrap_or(inferred);
    let perf = Performance::from_outcomes(&outcomes, correct, alternatives);
    let digest = config_digest(config);

    let mut w = Writer::new(&config.out)?;
    w.file("trials.csv", |out| write_trials(out, &outcomes))?;
    w.json(
        "summary.json",
        &SimulationSummary {
            mode: config.mode,
            seed: config.seed,
            config_digest: &digest,
            protocol: config.protocol,
            dt: config.time.dt,
            horizon,
            correct,
            performance: &perf,
        },
    )?;
    Ok(w.written)
}

fn run_model<M: DecisionModel>(
    model: &M,
    config: &ExperimentConfig,
    n: usize,
) -> Result<Vec<DecisionOutcome>, CliError> {
    let grid = config.time_grid()?;
    Ok(simulate_trials(model, &grid, config.protocol, n, config.seed)?)
}

fn write_trials<W: Write>(out: &mut W, outcomes: &[DecisionOutcome]) -> std::io::Result<()> {
    writeln!(out, "trial,choice,decision_time,termination")?;
    for (t, o) in outcomes.iter().enumerate() {
        let choice = o.choice.map(|c| c.to_string()).unwrap_or_default();
        let term = match o.termination {
            Termination::Threshold => "threshold",
            Termination::Interrogation => "interrogation",
            Termination::Timeout => "timeout",
        };
        writeln!(out, "{t},{choice},{},{term}", o.decision_time)?;
    }
    Ok(())
}

/// Lowest index of the largest value.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn surface_options(config: &ExperimentConfig) -> Result<SurfaceOptions, CliError> {
    Ok(SurfaceOptions {
        trials_per_cell: config.trials_per_cell(),
        ndt: config.reward.ndt,
        rsi: config.reward.rsi,
        seed: config.seed,
        time: config.time_grid()?,
    })
}

/// Build the reward surface a config describes.
pub fn build_surface(config: &ExperimentConfig) -> Result<(RewardSurface, Vec<CellStats>), CliError> {
    let opts = surface_options(config)?;
    Ok(compute_surface_with_stats(&config.grid, &config.lip.params(), &opts)?)
}

fn write_surface(w: &mut Writer, surface: &RewardSurface, cells: Option<&[CellStats]>) -> Result<(), CliError> {
    w.file("surface.csv", |out| surface.write_csv(out))?;
    w.json("surface.json", &surface.metadata())?;
    if let Some(cells) = cells {
        w.file("cells.csv", |out| {
            writeln!(out, "gamma_E,gamma_I,accuracy,decision_time,timeouts,reward_rate")?;
            for c in cells {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.gamma_e, c.gamma_i, c.accuracy, c.decision_time, c.timeouts, c.reward_rate
                )?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RegionSummary {
    level: f64,
    center: GainState,
    cells: usize,
    effective_radius: f64,
    contiguous: bool,
}

impl RegionSummary {
    fn new(r: &HighPerfRegion) -> Self {
        Self {
            level: r.level,
            center: r.center,
            cells: r.members.len(),
            effective_radius: r.effective_radius,
            contiguous: r.is_contiguous(),
        }
    }
}

#[derive(Serialize)]
struct SurfaceSummary<'a> {
    mode: Mode,
    seed: u64,
    config_digest: &'a str,
    surface_digest: &'a str,
    trials_per_cell: usize,
    argmax: (usize, usize),
    center: GainState,
    interior_max: bool,
    raw_max: f64,
    region: RegionSummary,
}

fn reward_map(config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let (surface, cells) = build_surface(config)?;
    let region = locate_region(&surface, config.supervisor.region_level)?;
    let digest = config_digest(config);
    let mut w = Writer::new(&config.out)?;
    write_surface(&mut w, &surface, Some(&cells))?;
    w.json(
        "summary.json",
        &SurfaceSummary {
            mode: config.mode,
            seed: config.seed,
            config_digest: &digest,
            surface_digest: &surface.config_digest,
            trials_per_cell: surface.trials_per_cell,
            argmax: surface.argmax,
            center: surface.center(),
            interior_max: surface.is_interior_max(),
            raw_max: surface.max_value(),
            region: RegionSummary::new(&region),
        },
    )?;
    Ok(w.written)
}

fn load_surface(csv: &Path, meta: &Path) -> Result<RewardSurface, CliError> {
    let meta = read_metadata(meta)?;
    let f = File::open(csv).map_err(|e| io_err(csv, e))?;
    Ok(RewardSurface::read_csv(BufReader::new(f), &meta)?)
}

#[derive(Serialize)]
struct SuperviseSummary<'a> {
    mode: Mode,
    seed: u64,
    config_digest: &'a str,
    surface_digest: &'a str,
    region: RegionSummary,
    run: &'a RunSummary,
}

fn supervise(config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let mut w = Writer::new(&config.out)?;
    let surface = match &config.surface {
        Some(src) => load_surface(&src.csv, &src.meta)?,
        None => {
            let (surface, cells) = build_surface(config)?;
            write_surface(&mut w, &surface, Some(&cells))?;
            surface
        }
    };
    let sup = Supervisor::new(&surface, config.supervisor.clone())?;
    let run = sup.run(config.seed)?;
    let digest = config_digest(config);
    w.file("run.csv", |out| run.write_csv(out))?;
    w.json(
        "summary.json",
        &SuperviseSummary {
            mode: config.mode,
            seed: config.seed,
            config_digest: &digest,
            surface_digest: &surface.config_digest,
            region: RegionSummary::new(&sup.region),
            run: &run,
        },
    )?;
    let stamp = format!("seed {} digest {}", config.seed, digest);
    w.text(
        "gain_trajectory.svg",
        &plot::gain_trajectory(&surface, &sup.region, &run.records, &stamp),
    )?;
    let p0: Vec<f64> = run.records.iter().map(|r| r.p0).collect();
    let p_bar: Vec<f64> = run.records.iter().map(|r| r.p_bar).collect();
    w.text("p0_series.svg", &plot::series("operator success p0", &p0, None, &stamp))?;
    w.text(
        "p_bar_series.svg",
        &plot::series("average success p_bar", &p_bar, Some(0.5), &stamp),
    )?;
    Ok(w.written)
}
