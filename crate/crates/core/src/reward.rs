//! Reward rate and its surface over the (excitatory, inhibitory) gain plane.
//!
//! Each grid cell runs the gain-modulated pool model with that cell's gains,
//! converts accuracy and decision time to a reward rate, and the surface is
//! normalized so its best cell is exactly 1.

use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{estimate_performance, LipConfig, Performance, Protocol};
use crate::digest::config_digest;
use crate::error::{Result, SimError};
use crate::gain::{GainBounds, GainState};
use crate::stochastic::{child_seed, TimeGrid};

/// Default non-decision time, seconds.
pub const DEFAULT_NDT: f64 = 0.3;
/// Default response-stimulus interval, seconds.
pub const DEFAULT_RSI: f64 = 1.0;
/// Default level set for the high-performance region.
pub const DEFAULT_REGION_LEVEL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub accuracy: f64,
    pub decision_time: f64,
    pub ndt: f64,
    pub rsi: f64,
}

/// `accuracy / (DT + NDT + RSI)`.
pub fn reward_rate(inputs: &RewardInputs) -> Result<f64> {
    let RewardInputs {
        accuracy,
        decision_time,
        ndt,
        rsi,
    } = *inputs;
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(SimError::InvalidInput(format!("accuracy {accuracy} outside [0, 1]")));
    }
    if [decision_time, ndt, rsi].iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(SimError::InvalidInput("times must be finite and >= 0".into()));
    }
    let cycle = decision_time + ndt + rsi;
    if cycle <= 0.0 {
        return Err(SimError::InvalidInput("DT + NDT + RSI must be > 0".into()));
    }
    Ok(accuracy / cycle)
}

/// One axis of the gain grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            self.max
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.n - 1) as f64
        }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(SimError::param(
                format!("{name}.min"),
                format!("{name}.min < {name}.max"),
            ));
        }
        if self.n < 2 {
            return Err(SimError::param(format!("{name}.n"), format!("{name}.n >= 2")));
        }
        Ok(())
    }

    /// Cell index below `x` and the fractional offset within that cell.
    fn locate(&self, x: f64) -> (usize, f64) {
        let mut pos = ((x - self.min) / self.step()).clamp(0.0, (self.n - 1) as f64);
        // node coordinates recomputed in floating point land a few ulps off
        if (pos - pos.round()).abs() < 1e-9 {
            pos = pos.round();
        }
        let k = (pos.floor() as usize).min(self.n - 2);
        (k, pos - k as f64)
    }
}

/// Grid over the gain plane, excitatory axis first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainGrid {
    pub gamma_e: Axis,
    pub gamma_i: Axis,
}

impl GainGrid {
    pub fn validate(&self) -> Result<()> {
        self.gamma_e.validate("gamma_e")?;
        self.gamma_i.validate("gamma_i")?;
        if self.gamma_e.min <= 0.0 {
            return Err(SimError::param("gamma_e.min", "gamma_e.min > 0"));
        }
        if self.gamma_i.min < 0.0 {
            return Err(SimError::param("gamma_i.min", "gamma_i.min >= 0"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.gamma_e.n * self.gamma_i.n
    }

    pub fn node(&self, ie: usize, ii: usize) -> GainState {
        GainState::new(self.gamma_e.node(ie), self.gamma_i.node(ii))
    }

    pub fn bounds(&self) -> GainBounds {
        GainBounds {
            gamma_e: (self.gamma_e.min, self.gamma_e.max),
            gamma_i: (self.gamma_i.min, self.gamma_i.max),
        }
    }
}

impl Default for GainGrid {
    fn default() -> Self {
        Self {
            gamma_e: Axis {
                min: 0.2,
                max: 2.0,
                n: 21,
            },
            gamma_i: Axis {
                min: 0.0,
                max: 1.0,
                n: 21,
            },
        }
    }
}

/// Options for building a surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceOptions {
    pub trials_per_cell: usize,
    pub ndt: f64,
    pub rsi: f64,
    pub seed: u64,
    pub time: TimeGrid,
}

pub const MIN_TRIALS_PER_CELL: usize = 100;
/// Default trials per surface cell.
pub const DEFAULT_TRIALS_PER_CELL: usize = 2000;

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self {
            trials_per_cell: DEFAULT_TRIALS_PER_CELL,
            ndt: DEFAULT_NDT,
            rsi: DEFAULT_RSI,
            seed: 42,
            time: TimeGrid::new(1e-3, 10.0).expect("static grid"),
        }
    }
}

/// Two-pool model used for the default surface.
///
/// Only the first pool receives input, and the noise is large relative to the
/// threshold, so decisions are fast and error-prone. Raising the excitatory
/// gain trades accuracy for speed and the reward rate peaks at a moderate gain.
pub fn default_surface_model() -> LipConfig {
    LipConfig {
        lambda: 0.5,
        gamma_e: 1.0,
        gamma_i: 0.5,
        inputs: vec![8.0, 0.0],
        sigma: vec![1.75; 2],
        thresholds: vec![1.0; 2],
        crossing: Default::default(),
    }
}

/// Normalized reward rate over a [`GainGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSurface {
    pub grid: GainGrid,
    /// Normalized values, `values[ie][ii]`.
    pub values: Vec<Vec<f64>>,
    /// Reward rate before normalization.
    pub raw: Vec<Vec<f64>>,
    pub argmax: (usize, usize),
    pub trials_per_cell: usize,
    pub seed: u64,
    pub config_digest: String,
}

impl RewardSurface {
    /// Normalize raw reward rates. The first cell (row-major) attaining the
    /// maximum is the argmax and is set to exactly 1.
    pub fn from_raw(
        grid: GainGrid,
        raw: Vec<Vec<f64>>,
        trials_per_cell: usize,
        seed: u64,
        config_digest: String,
    ) -> Result<Self> {
        grid.validate()?;
        if raw.len() != grid.gamma_e.n || raw.iter().any(|row| row.len() != grid.gamma_i.n) {
            return Err(SimError::InvalidInput("raw values do not match the grid shape".into()));
        }
        if raw.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SimError::InvalidInput("reward rates must be finite and >= 0".into()));
        }
        let mut argmax = (0, 0);
        for (ie, row) in raw.iter().enumerate() {
            for (ii, v) in row.iter().enumerate() {
                if *v > raw[argmax.0][argmax.1] {
                    argmax = (ie, ii);
                }
            }
        }
        let top = raw[argmax.0][argmax.1];
        if top <= 0.0 {
            return Err(SimError::DegenerateSurface);
        }
        let mut values: Vec<Vec<f64>> = raw
            .iter()
            .map(|row| row.iter().map(|v| (v / top).min(1.0)).collect())
            .collect();
        values[argmax.0][argmax.1] = 1.0;
        Ok(Self {
            grid,
            values,
            raw,
            argmax,
            trials_per_cell,
            seed,
            config_digest,
        })
    }

    pub fn value(&self, ie: usize, ii: usize) -> f64 {
        self.values[ie][ii]
    }

    pub fn center(&self) -> GainState {
        self.grid.node(self.argmax.0, self.argmax.1)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_interior_max(&self) -> bool {
        let (ie, ii) = self.argmax;
        ie > 0 && ie + 1 < self.grid.gamma_e.n && ii > 0 && ii + 1 < self.grid.gamma_i.n
    }

    /// Write `gamma_E,gamma_I,reward_rate` rows, excitatory index outermost.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "gamma_E,gamma_I,reward_rate")?;
        for ie in 0..self.grid.gamma_e.n {
            for ii in 0..self.grid.gamma_i.n {
                let g = self.grid.node(ie, ii);
                writeln!(out, "{},{},{}", g.gamma_e, g.gamma_i, self.values[ie][ii])?;
            }
        }
        Ok(())
    }

    /// Metadata sidecar describing a CSV export.
    pub fn metadata(&self) -> SurfaceMetadata {
        SurfaceMetadata {
            grid: self.grid,
            seed: self.seed,
            trials_per_cell: self.trials_per_cell,
            config_digest: self.config_digest.clone(),
            argmax: self.argmax,
            raw_max: self.raw[self.argmax.0][self.argmax.1],
        }
    }

    /// Rebuild a surface from its CSV export and sidecar. Raw values are
    /// reconstructed by scaling with the recorded raw maximum.
    pub fn read_csv<R: BufRead>(input: R, meta: &SurfaceMetadata) -> Result<Self> {
        let grid = meta.grid;
        grid.validate()?;
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| SimError::InvalidInput(e.to_string()))?
            .unwrap_or_default();
        if header.trim() != "gamma_E,gamma_I,reward_rate" {
            return Err(SimError::InvalidInput(format!("unexpected surface header `{header}`")));
        }
        let mut values = vec![vec![0.0; grid.gamma_i.n]; grid.gamma_e.n];
        let mut count = 0;
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| SimError::InvalidInput(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let field = line
                .split(',')
                .nth(2)
                .ok_or_else(|| SimError::InvalidInput(format!("surface row {} has fewer than 3 fields", row + 2)))?;
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| SimError::InvalidInput(format!("surface row {}: bad value `{field}`", row + 2)))?;
            if count >= grid.cells() {
                return Err(SimError::InvalidInput("surface has more rows than the grid".into()));
            }
            values[count / grid.gamma_i.n][count % grid.gamma_i.n] = v;
            count += 1;
        }
        if count != grid.cells() {
            return Err(SimError::InvalidInput(format!(
                "surface has {count} rows, grid needs {}",
                grid.cells()
            )));
        }
        let raw = values
            .iter()
            .map(|r| r.iter().map(|v| v * meta.raw_max).collect())
            .collect();
        let mut surface = Self::from_raw(grid, raw, meta.trials_per_cell, meta.seed, meta.config_digest.clone())?;
        surface.values = values;
        Ok(surface)
    }
}

/// JSON sidecar for a surface CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetadata {
    pub grid: GainGrid,
    pub seed: u64,
    pub trials_per_cell: usize,
    pub config_digest: String,
    pub argmax: (usize, usize),
    pub raw_max: f64,
}

/// Per-cell statistics kept alongside a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub gamma_e: f64,
    pub gamma_i: f64,
    pub accuracy: f64,
    /// Mean decision time with timeouts at the horizon.
    pub decision_time: f64,
    pub timeouts: usize,
    pub reward_rate: f64,
}

/// Run the pool model in every cell and normalize.
///
/// Cell `(ie, ii)` uses base seed `child_seed(seed, ie * n_i + ii)`, so
/// cells are independent and the result does not depend on scheduling.
pub fn compute_surface(grid: &GainGrid, base: &LipConfig, opts: &SurfaceOptions) -> Result<RewardSurface> {
    compute_surface_with_stats(grid, base, opts).map(|(s, _)| s)
}

pub fn compute_surface_with_stats(
    grid: &GainGrid,
    base: &LipConfig,
    opts: &SurfaceOptions,
) -> Result<(RewardSurface, Vec<CellStats>)> {
    grid.validate()?;
    base.validate()?;
    if opts.trials_per_cell < MIN_TRIALS_PER_CELL {
        return Err(SimError::param(
            "trials_per_cell",
            format!("trials_per_cell >= {MIN_TRIALS_PER_CELL}"),
        ));
    }
    let correct = crate::decision::argmax(&base.inputs);
    let n_i = grid.gamma_i.n;
    let cells: Vec<(usize, usize)> = (0..grid.gamma_e.n)
        .flat_map(|ie| (0..n_i).map(move |ii| (ie, ii)))
        .collect();
    let stats: Vec<CellStats> = cells
        .par_iter()
        .map(|&(ie, ii)| {
            let g = grid.node(ie, ii);
            let cfg = base.with_gains(g.gamma_e, g.gamma_i);
            let seed = child_seed(opts.seed, (ie * n_i + ii) as u64);
            let perf: Performance = estimate_performance(
                &cfg,
                correct,
                &opts.time,
                Protocol::FreeResponse,
                opts.trials_per_cell,
                seed,
            )?;
            let rr = reward_rate(&RewardInputs {
                accuracy: perf.accuracy,
                decision_time: perf.mean_dt_all,
                ndt: opts.ndt,
                rsi: opts.rsi,
            })?;
            Ok(CellStats {
                gamma_e: g.gamma_e,
                gamma_i: g.gamma_i,
                accuracy: perf.accuracy,
                decision_time: perf.mean_dt_all,
                timeouts: perf.timeouts,
                reward_rate: rr,
            })
        })
        .collect::<Result<_>>()?;
    let raw: Vec<Vec<f64>> = stats
        .chunks(n_i)
        .map(|row| row.iter().map(|c| c.reward_rate).collect())
        .collect();
    let digest = config_digest(&(grid, base, opts));
    let surface = RewardSurface::from_raw(*grid, raw, opts.trials_per_cell, opts.seed, digest)?;
    Ok((surface, stats))
}

/// Level set of the surface containing its maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighPerfRegion {
    pub center: GainState,
    pub center_cell: (usize, usize),
    pub level: f64,
    pub members: Vec<(usize, usize)>,
    /// Root-mean-square distance of member nodes from the center.
    pub effective_radius: f64,
}

impl HighPerfRegion {
    /// Whether the members form one 4-connected component.
    pub fn is_contiguous(&self) -> bool {
        let Some(&start) = self.members.first() else {
            return true;
        };
        let set: std::collections::HashSet<(usize, usize)> = self.members.iter().copied().collect();
        let mut seen = std::collections::HashSet::from([start]);
        let mut stack = vec![start];
        while let Some((a, b)) = stack.pop() {
            let neighbours = [(a.wrapping_sub(1), b), (a + 1, b), (a, b.wrapping_sub(1)), (a, b + 1)];
            for nb in neighbours {
                if set.contains(&nb) && seen.insert(nb) {
                    stack.push(nb);
                }
            }
        }
        seen.len() == set.len()
    }
}

/// Cells with normalized value at or above `level`.
pub fn locate_region(surface: &RewardSurface, level: f64) -> Result<HighPerfRegion> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SimError::param("level", "0 < level < 1"));
    }
    let center = surface.center();
    let mut members = Vec::new();
    let mut sq = 0.0;
    for ie in 0..surface.grid.gamma_e.n {
        for ii in 0..surface.grid.gamma_i.n {
            if surface.values[ie][ii] >= level {
                members.push((ie, ii));
                sq += surface.grid.node(ie, ii).distance(&center).powi(2);
            }
        }
    }
    let effective_radius = (sq / members.len() as f64).sqrt();
    Ok(HighPerfRegion {
        center,
        center_cell: surface.argmax,
        level,
        members,
        effective_radius,
    })
}

/// Bilinear interpolation of the normalized surface; states outside the
/// grid are clamped onto it.
pub fn lookup(surface: &RewardSurface, state: &GainState) -> f64 {
    let (ie, fe) = surface.grid.gamma_e.locate(state.gamma_e);
    let (ii, fi) = surface.grid.gamma_i.locate(state.gamma_i);
    let v = &surface.values;
    let low = v[ie][ii] * (1.0 - fi) + v[ie][ii + 1] * fi;
    let high = v[ie + 1][ii] * (1.0 - fi) + v[ie + 1][ii + 1] * fi;
    low * (1.0 - fe) + high * fe
}
