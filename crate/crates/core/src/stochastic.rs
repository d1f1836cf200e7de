//! Reproducible random streams and a fixed-step stochastic integrator.
//!
//! Every stream is a ChaCha8 keystream keyed by `seed` and positioned on the
//! ChaCha stream `stream_id`, so a draw is a pure function of
//! `(seed, stream_id, draw index)`. Trials own their stream; nothing random is
//! shared between threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Default integration step, seconds.
pub const DEFAULT_DT: f64 = 1e-3;

/// An independent, reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// Derive the stream for `(seed, stream_id)`.
pub fn derive_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    inner.set_stream(stream_id);
    RngStream { seed, stream_id, inner }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a base seed with an index into a fresh seed.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A sub-stream for one lane (e.g. one neural pool) of this stream.
    ///
    /// Lanes of the same parent are mutually independent and independent of
    /// the parent itself.
    pub fn lane(&self, lane: u64) -> RngStream {
        derive_stream(child_seed(self.seed, self.stream_id), lane)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// I.i.d. `Normal(0, dt)` Wiener increments.
pub fn gaussian_increments(rng: &mut RngStream, dt: f64, n: usize) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::InvalidGrid(format!("dt must be > 0, got {dt}")));
    }
    if n == 0 {
        return Err(SimError::InvalidInput("increment count must be >= 1".into()));
    }
    let scale = dt.sqrt();
    Ok((0..n).map(|_| scale * rng.standard_normal()).collect())
}

/// Fixed-step time discretization of `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::InvalidGrid(format!("dt must be > 0, got {dt}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(SimError::InvalidGrid(format!("horizon must be > 0, got {horizon}")));
        }
        if dt > horizon {
            return Err(SimError::InvalidGrid(format!("dt ({dt}) exceeds horizon ({horizon})")));
        }
        Ok(Self { dt, horizon })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `ceil(horizon / dt)`, tolerant of representation error when the
    /// ratio is an integer.
    pub fn n_steps(&self) -> usize {
        let ratio = self.horizon / self.dt;
        let nearest = ratio.round();
        let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            ratio.ceil()
        };
        (n as usize).max(1)
    }

    /// Time at the end of step `k` (1-based), never beyond the horizon.
    pub fn time_at(&self, k: usize) -> f64 {
        if k >= self.n_steps() {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }
}

/// Source of the standard normal and uniform draws consumed by the
/// integrator. `component` selects the lane for multi-stream sources.
pub trait NoiseSource {
    fn standard_normal(&mut self, component: usize) -> f64;
    fn uniform(&mut self, component: usize) -> f64;
}

impl NoiseSource for RngStream {
    fn standard_normal(&mut self, _component: usize) -> f64 {
        RngStream::standard_normal(self)
    }

    fn uniform(&mut self, _component: usize) -> f64 {
        RngStream::uniform(self)
    }
}

/// One stream per state component.
#[derive(Debug, Clone)]
pub struct LaneStreams(pub Vec<RngStream>);

impl LaneStreams {
    pub fn from_parent(parent: &RngStream, lanes: usize) -> Self {
        LaneStreams((0..lanes as u64).map(|j| parent.lane(j)).collect())
    }
}

impl NoiseSource for LaneStreams {
    fn standard_normal(&mut self, component: usize) -> f64 {
        self.0[component].standard_normal()
    }

    fn uniform(&mut self, component: usize) -> f64 {
        self.0[component].uniform()
    }
}

/// How a barrier crossing between two grid points is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingDetection {
    /// Only the sampled grid points are compared against the barrier.
    GridPoint,
    /// Grid points, plus a Brownian-bridge test for an excursion between
    /// them.
    #[default]
    BrownianBridge,
}

/// Probability that a Brownian bridge with per-step variance `var_step`
/// reaches a barrier lying `gap0` and `gap1` away from its two endpoints.
pub fn bridge_crossing_probability(gap0: f64, gap1: f64, var_step: f64) -> f64 {
    if gap0 <= 0.0 || gap1 <= 0.0 {
        return 1.0;
    }
    if !(var_step > 0.0) {
        return 0.0;
    }
    (-2.0 * gap0 * gap1 / var_step).exp()
}

/// Bridge test for one component; consumes a uniform only when the
/// excursion probability is non-negligible.
pub fn bridge_crossed<N: NoiseSource>(gap0: f64, gap1: f64, var_step: f64, noise: &mut N, component: usize) -> bool {
    if gap0 > 0.0 && gap1 > 0.0 && var_step > 0.0 && 2.0 * gap0 * gap1 > 36.0 * var_step {
        // probability below e^-36
        return false;
    }
    let p = bridge_crossing_probability(gap0, gap1, var_step);
    p > 0.0 && noise.uniform(component) < p
}

/// Termination test evaluated after every step.
///
/// Returns an event label whose meaning is fixed by the rule.
pub trait StopRule {
    fn check<N: NoiseSource>(
        &self,
        prev: &[f64],
        next: &[f64],
        diffusion: &[f64],
        dt: f64,
        noise: &mut N,
    ) -> Option<usize>;
}

/// Run to the horizon.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedTime;

impl StopRule for FixedTime {
    fn check<N: NoiseSource>(&self, _: &[f64], _: &[f64], _: &[f64], _: f64, _: &mut N) -> Option<usize> {
        None
    }
}

/// Per-component absolute barriers.
///
/// Label `c` means component `c` reached its upper barrier, label `n + c`
/// means it reached its lower barrier (`n` = state dimension). When several
/// barriers are hit in the same step the largest overshoot wins, ties going
/// to the lowest label.
#[derive(Debug, Clone, PartialEq)]
pub struct Barriers {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub detection: CrossingDetection,
}

impl Barriers {
    pub fn upper_only(upper: Vec<f64>, detection: CrossingDetection) -> Self {
        let lower = vec![f64::NEG_INFINITY; upper.len()];
        Self {
            upper,
            lower,
            detection,
        }
    }
}

impl StopRule for Barriers {
    fn check<N: NoiseSource>(
        &self,
        prev: &[f64],
        next: &[f64],
        diffusion: &[f64],
        dt: f64,
        noise: &mut N,
    ) -> Option<usize> {
        let n = next.len();
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |label: usize, overshoot: f64| {
            if best.is_none_or(|(_, o)| overshoot > o) {
                best = Some((label, overshoot));
            }
        };
        for c in 0..n {
            if next[c] >= self.upper[c] {
                consider(c, next[c] - self.upper[c]);
            }
            if next[c] <= self.lower[c] {
                consider(n + c, self.lower[c] - next[c]);
            }
        }
        if best.is_some() || self.detection == CrossingDetection::GridPoint {
            return best.map(|(l, _)| l);
        }
        for c in 0..n {
            let var_step = diffusion[c] * diffusion[c] * dt;
            if self.upper[c].is_finite()
                && bridge_crossed(self.upper[c] - prev[c], self.upper[c] - next[c], var_step, noise, c)
            {
                return Some(c);
            }
            if self.lower[c].is_finite()
                && bridge_crossed(prev[c] - self.lower[c], next[c] - self.lower[c], var_step, noise, c)
            {
                return Some(n + c);
            }
        }
        None
    }
}

/// Result of one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    /// Number of steps taken.
    pub steps: usize,
    /// Time at termination (crossing step end, or the horizon).
    pub time: f64,
    pub state: Vec<f64>,
    /// Stop-rule label, `None` when the horizon was reached.
    pub event: Option<usize>,
}

/// Explicit fixed-step Euler–Maruyama integration with diagonal noise:
/// `x[k+1] = x[k] + drift(x[k], t_k)·dt + diffusion(x[k], t_k)·ΔW_k`.
pub fn integrate_sde<D, G, N, S>(
    drift: D,
    diffusion: G,
    x0: &[f64],
    grid: &TimeGrid,
    noise: &mut N,
    stop: &S,
) -> Result<Integration>
where
    D: FnMut(&[f64], f64, &mut [f64]),
    G: FnMut(&[f64], f64, &mut [f64]),
    N: NoiseSource,
    S: StopRule,
{
    integrate_sde_observed(drift, diffusion, x0, grid, noise, stop, |_, _| {})
}

/// [`integrate_sde`] with a callback receiving `(step, state)` after every
/// step, starting with `(0, x0)`.
pub fn integrate_sde_observed<D, G, N, S, O>(
    mut drift: D,
    mut diffusion: G,
    x0: &[f64],
    grid: &TimeGrid,
    noise: &mut N,
    stop: &S,
    mut observe: O,
) -> Result<Integration>
where
    D: FnMut(&[f64], f64, &mut [f64]),
    G: FnMut(&[f64], f64, &mut [f64]),
    N: NoiseSource,
    S: StopRule,
    O: FnMut(usize, &[f64]),
{
    let dim = x0.len();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let n_steps = grid.n_steps();

    let mut x = x0.to_vec();
    let mut next = vec![0.0; dim];
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    observe(0, &x);

    for k in 0..n_steps {
        let t = k as f64 * dt;
        drift(&x, t, &mut a);
        diffusion(&x, t, &mut b);
        for c in 0..dim {
            let dw = sqrt_dt * noise.standard_normal(c);
            next[c] = x[c] + a[c] * dt + b[c] * dw;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Divergence { step: k + 1 });
        }
        let event = stop.check(&x, &next, &b, dt, noise);
        std::mem::swap(&mut x, &mut next);
        observe(k + 1, &x);
        if event.is_some() {
            return Ok(Integration {
                steps: k + 1,
                time: grid.time_at(k + 1),
                state: x,
                event,
            });
        }
    }

    Ok(Integration {
        steps: n_steps,
        time: grid.horizon(),
        state: x,
        event: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(seed: u64, stream: u64, n: usize) -> Vec<f64> {
        let mut rng = derive_stream(seed, stream);
        (0..n).map(|_| rng.standard_normal()).collect()
    }

    #[test]
    fn same_key_same_sequence() {
        assert_eq!(draws(42, 0, 100), draws(42, 0, 100));
    }

    #[test]
    fn different_streams_differ() {
        let a = draws(42, 0, 100);
        let b = draws(42, 1, 100);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 100_000;
        let a = draws(42, 0, n);
        let b = draws(42, 7, n);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.01, "corr = {corr}");
    }

    #[test]
    fn lanes_are_distinct_from_parent() {
        let parent = derive_stream(9, 3);
        let mut l0 = parent.lane(0);
        let mut l1 = parent.lane(1);
        let mut p = parent.clone();
        let (x, y, z) = (l0.standard_normal(), l1.standard_normal(), p.standard_normal());
        assert!(x != y && y != z && x != z);
    }

    #[test]
    fn increment_moments() {
        let (n, dt) = (100_000usize, 0.01);
        let v = gaussian_increments(&mut derive_stream(1, 0), dt, n).unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * (dt / n as f64).sqrt(), "mean {mean}");
        // chi-square: sd of the sample variance is dt*sqrt(2/(n-1)) ~ 0.45% of dt
        assert!((var - dt).abs() < 0.05 * dt, "var {var}");
    }

    #[test]
    fn unit_increment_is_a_standard_normal_draw() {
        let v = gaussian_increments(&mut derive_stream(5, 5), 1.0, 1).unwrap();
        let mut rng = derive_stream(5, 5);
        assert_eq!(v, vec![rng.standard_normal()]);
    }

    #[test]
    fn increments_reject_bad_dt() {
        let mut rng = derive_stream(0, 0);
        assert!(matches!(
            gaussian_increments(&mut rng, 0.0, 3),
            Err(SimError::InvalidGrid(_))
        ));
        assert!(matches!(
            gaussian_increments(&mut rng, -1.0, 3),
            Err(SimError::InvalidGrid(_))
        ));
    }

    #[test]
    fn grid_step_count() {
        assert_eq!(TimeGrid::new(1e-3, 10.0).unwrap().n_steps(), 10_000);
        assert_eq!(TimeGrid::new(0.3, 1.0).unwrap().n_steps(), 4);
        assert_eq!(TimeGrid::new(1.0, 1.0).unwrap().n_steps(), 1);
        assert!(TimeGrid::new(2.0, 1.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0).is_err());
    }

    #[test]
    fn null_dynamics_hold_constant() {
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let mut path = Vec::new();
        integrate_sde_observed(
            |_, _, a: &mut [f64]| a.fill(0.0),
            |_, _, b: &mut [f64]| b.fill(0.0),
            &[2.5, -1.0],
            &grid,
            &mut derive_stream(0, 0),
            &FixedTime,
            |_, x| path.push(x.to_vec()),
        )
        .unwrap();
        assert_eq!(path.len(), 101);
        assert!(path.iter().all(|x| x == &[2.5, -1.0]));
    }

    #[test]
    fn noise_free_ramp_crossing_step() {
        // dyadic values keep the ramp exact
        for (mu, dt, theta) in [(1.0, 0.125, 1.0), (0.5, 1.0 / 1024.0, 0.75), (3.0, 0.25, 2.0)] {
            let grid = TimeGrid::new(dt, 100.0).unwrap();
            let res = integrate_sde(
                |_, _, a: &mut [f64]| a[0] = mu,
                |_, _, b: &mut [f64]| b[0] = 0.0,
                &[0.0],
                &grid,
                &mut derive_stream(0, 0),
                &Barriers::upper_only(vec![theta], CrossingDetection::BrownianBridge),
            )
            .unwrap();
            let expected = (theta / (mu * dt)).ceil() as usize;
            assert_eq!(res.steps, expected);
            assert_eq!(res.event, Some(0));
        }
    }

    #[test]
    fn ou_endpoint_variance() {
        // stationary O-U variance sigma^2/(2 lambda) = 0.5 for lambda = sigma = 1
        let grid = TimeGrid::new(1e-3, 5.0).unwrap();
        let n = 10_000;
        let ends: Vec<f64> = (0..n)
            .map(|i| {
                integrate_sde(
                    |x: &[f64], _, a: &mut [f64]| a[0] = -x[0],
                    |_, _, b: &mut [f64]| b[0] = 1.0,
                    &[0.0],
                    &grid,
                    &mut derive_stream(11, i),
                    &FixedTime,
                )
                .unwrap()
                .state[0]
            })
            .collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // exact value at T=5 is 0.5(1 - e^-10), indistinguishable from 0.5
        assert!((var - 0.5).abs() < 0.025, "var {var}");
    }

    #[test]
    fn divergence_reports_step() {
        let grid = TimeGrid::new(1.0, 10_000.0).unwrap();
        let err = integrate_sde(
            |x: &[f64], _, a: &mut [f64]| a[0] = x[0] * 1e100,
            |_, _, b: &mut [f64]| b[0] = 0.0,
            &[1.0],
            &grid,
            &mut derive_stream(0, 0),
            &FixedTime,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Divergence { step } if step == 4), "{err:?}");
    }

    #[test]
    fn bridge_probability_limits() {
        assert_eq!(bridge_crossing_probability(0.0, 1.0, 1.0), 1.0);
        assert_eq!(bridge_crossing_probability(1.0, 1.0, 0.0), 0.0);
        let p = bridge_crossing_probability(0.1, 0.2, 0.01);
        assert!((p - (-4.0f64).exp()).abs() < 1e-15);
    }
}
