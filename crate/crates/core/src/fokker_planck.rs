//! Particle solver for the Fokker-Planck limit in diagonal coordinates.
//!
//! With frozen means `(m_x, m_y)` the state of an agent is written as
//! `v = m_y x + m_x y` and `w = m_y x - m_x y`. The limit dynamics are the
//! Itô system
//!
//! ```text
//! dv = lambda (alpha - beta) w dtau + sigma1 |w| dW1
//! dw = -lambda w dtau             + sigma2 |w| dW2
//! ```
//!
//! on the cone `|w| <= v`. The `w` equation is a geometric Brownian motion,
//! which supplies exact oracles for paths and moments.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ModelError, Result};
use crate::noise::NoiseSpec;
use crate::rng::{stream, streams};
use crate::trade::{AgentState, TradeParams, UtilityParams};

/// Particles per independent random stream in [`run_fp`].
pub const CHUNK_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VWParticle {
    pub v: f64,
    pub w: f64,
}

impl VWParticle {
    pub fn new(v: f64, w: f64) -> Result<Self> {
        let p = Self { v, w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v.is_finite() && self.w.is_finite()) {
            return Err(ModelError::Domain(format!(
                "particle ({}, {}) is not finite",
                self.v, self.w
            )));
        }
        if self.w.abs() > self.v {
            return Err(ModelError::Domain(format!(
                "particle ({}, {}) lies outside the cone |w| <= v",
                self.v, self.w
            )));
        }
        Ok(())
    }

    /// Diagonal coordinates of an agent against means `(m_x, m_y)`.
    pub fn from_agent(a: AgentState, means: (f64, f64)) -> Self {
        let (mx, my) = means;
        Self {
            v: my * a.x + mx * a.y,
            w: my * a.x - mx * a.y,
        }
    }

    /// Inverse of [`VWParticle::from_agent`].
    pub fn to_agent(self, means: (f64, f64)) -> AgentState {
        let (mx, my) = means;
        AgentState {
            x: (self.v + self.w) / (2.0 * my),
            y: (self.v - self.w) / (2.0 * mx),
        }
    }
}

pub fn to_vw(agents: &[AgentState], means: (f64, f64)) -> Vec<VWParticle> {
    agents
        .iter()
        .map(|&a| VWParticle::from_agent(a, means))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FPParams {
    lambda: f64,
    utility: UtilityParams,
    sigma1_sq: f64,
    sigma2_sq: f64,
    dt: f64,
}

impl FPParams {
    pub fn new(
        lambda: f64,
        utility: UtilityParams,
        sigma1_sq: f64,
        sigma2_sq: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ModelError::Domain(format!(
                "lambda must be > 0, got {lambda}"
            )));
        }
        for (name, s) in [("sigma1_sq", sigma1_sq), ("sigma2_sq", sigma2_sq)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(ModelError::Domain(format!("{name} must be >= 0, got {s}")));
            }
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ModelError::Domain(format!(
                "time step must be > 0, got {dt}"
            )));
        }
        Ok(Self {
            lambda,
            utility,
            sigma1_sq,
            sigma2_sq,
            dt,
        })
    }

    /// Parameters with the default step `0.01 / max(lambda, sigma2_sq)`.
    pub fn with_default_step(
        lambda: f64,
        utility: UtilityParams,
        sigma1_sq: f64,
        sigma2_sq: f64,
    ) -> Result<Self> {
        Self::new(
            lambda,
            utility,
            sigma1_sq,
            sigma2_sq,
            default_step(lambda, sigma2_sq),
        )
    }

    /// Limit coefficients for i.i.d. noise of variance `s^2` on both
    /// coefficients: `sigma1_sq = sigma2_sq = 2 s^2`.
    pub fn from_noise(lambda: f64, utility: UtilityParams, noise: &NoiseSpec) -> Result<Self> {
        let s = 2.0 * noise.variance();
        Self::with_default_step(lambda, utility, s, s)
    }

    pub fn from_trade(tp: &TradeParams) -> Result<Self> {
        Self::from_noise(tp.lambda(), tp.utility(), &tp.noise())
    }

    pub fn with_step(self, dt: f64) -> Result<Self> {
        Self::new(
            self.lambda,
            self.utility,
            self.sigma1_sq,
            self.sigma2_sq,
            dt,
        )
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn utility(&self) -> UtilityParams {
        self.utility
    }

    pub fn sigma1_sq(&self) -> f64 {
        self.sigma1_sq
    }

    pub fn sigma2_sq(&self) -> f64 {
        self.sigma2_sq
    }

    pub fn step(&self) -> f64 {
        self.dt
    }

    /// Order `r = 2 lambda / sigma2_sq` at which `E|w|^(1+r)` stops decaying.
    pub fn critical_order(&self) -> f64 {
        2.0 * self.lambda / self.sigma2_sq
    }

    /// Exponential rate of `E|w|^(1+r)`.
    pub fn moment_rate(&self, r: f64) -> f64 {
        (1.0 + r) * (0.5 * r * self.sigma2_sq - self.lambda)
    }

    fn v_drift(&self) -> f64 {
        self.lambda * (self.utility.alpha() - self.utility.beta())
    }
}

pub fn default_step(lambda: f64, sigma2_sq: f64) -> f64 {
    0.01 / lambda.max(sigma2_sq)
}

/// Euler-Maruyama step driven by given standard normals. Returns the new
/// particle and whether it had to be projected back onto the cone.
pub fn sde_step_with(p: VWParticle, fp: &FPParams, xi1: f64, xi2: f64) -> (VWParticle, bool) {
    if p.w == 0.0 {
        return (p, false);
    }
    let dt = fp.dt;
    let sq = dt.sqrt();
    let aw = p.w.abs();
    let v = p.v + fp.v_drift() * p.w * dt + fp.sigma1_sq.sqrt() * aw * sq * xi1;
    let w = p.w - fp.lambda * p.w * dt + fp.sigma2_sq.sqrt() * aw * sq * xi2;
    if w.abs() > v {
        (VWParticle { v: w.abs(), w }, true)
    } else {
        (VWParticle { v, w }, false)
    }
}

pub fn sde_step<R: Rng + ?Sized>(p: VWParticle, fp: &FPParams, rng: &mut R) -> (VWParticle, bool) {
    let xi1: f64 = StandardNormal.sample(rng);
    let xi2: f64 = StandardNormal.sample(rng);
    sde_step_with(p, fp, xi1, xi2)
}

/// End state of a single simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    pub particle: VWParticle,
    /// `sum sign(w_k) xi2_k sqrt(dt)`: the Brownian value that drives the
    /// exact solution [`gbm_w_at`] along the same path.
    pub driver: f64,
    pub projections: u32,
}

/// `steps` Euler-Maruyama steps, also returning the Brownian driver so the
/// exact solution can be evaluated on the same noise.
pub fn sde_path<R: Rng + ?Sized>(
    p: VWParticle,
    fp: &FPParams,
    steps: usize,
    rng: &mut R,
) -> PathEnd {
    let sq = fp.dt.sqrt();
    let mut cur = p;
    let mut driver = 0.0;
    let mut projections = 0;
    for _ in 0..steps {
        let xi1: f64 = StandardNormal.sample(rng);
        let xi2: f64 = StandardNormal.sample(rng);
        driver += cur.w.signum() * xi2 * sq;
        let (next, projected) = sde_step_with(cur, fp, xi1, xi2);
        projections += projected as u32;
        cur = next;
    }
    PathEnd {
        particle: cur,
        driver,
        projections,
    }
}

/// `|w0|^(1+r) exp((1+r)(r sigma2_sq / 2 - lambda) tau)`.
pub fn w_moment_oracle(w0: f64, r: f64, fp: &FPParams, tau: f64) -> f64 {
    w0.abs().powf(1.0 + r) * (fp.moment_rate(r) * tau).exp()
}

/// Exact `w(tau)` for the Brownian value `brownian = W_tau`.
pub fn gbm_w_at(w0: f64, fp: &FPParams, tau: f64, brownian: f64) -> f64 {
    w0 * ((-fp.lambda - 0.5 * fp.sigma2_sq) * tau + fp.sigma2_sq.sqrt() * brownian).exp()
}

/// Exact sample of `w(tau)` started from `w0`.
pub fn w_path_oracle<R: Rng + ?Sized>(w0: f64, fp: &FPParams, tau: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    gbm_w_at(w0, fp, tau, z * tau.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSchedule {
    /// Time between snapshots; `None` records only the start and end.
    pub interval: Option<f64>,
    /// Moment orders `r`; moments of `|w|^(1+r)` and `v^(1+r)` are reported.
    pub orders: Vec<f64>,
    /// Keep particle states at every snapshot (the final state is always
    /// kept).
    pub keep_particles: bool,
}

impl Default for FpSchedule {
    fn default() -> Self {
        Self {
            interval: None,
            orders: vec![1.0],
            keep_particles: false,
        }
    }
}

/// Ensemble averages at one snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub tau: f64,
    /// `mean |w|^(1+r)` per configured order.
    pub w: Vec<f64>,
    /// `mean v^(1+r)` per configured order.
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSnapshot {
    pub tau: f64,
    pub particles: Vec<VWParticle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpTrajectory {
    pub orders: Vec<f64>,
    pub moments: Vec<MomentRow>,
    pub snapshots: Vec<FpSnapshot>,
    pub projections: u64,
    /// Effective step (the horizon is split into equal steps).
    pub step: f64,
}

impl FpTrajectory {
    pub fn last(&self) -> &FpSnapshot {
        self.snapshots
            .last()
            .expect("trajectory holds the initial snapshot")
    }
}

struct ChunkResult {
    /// `[snapshot][order]` sums.
    w_sums: Vec<Vec<f64>>,
    v_sums: Vec<Vec<f64>>,
    /// `[snapshot]` particle states (only the ones that are kept).
    states: Vec<Vec<VWParticle>>,
    projections: u64,
}

/// Evolves particles to `horizon`. Particles are split into fixed chunks of
/// [`CHUNK_SIZE`], each with its own stream derived from `seed`, so results
/// do not depend on `workers`.
pub fn run_fp(
    initial: &[VWParticle],
    fp: &FPParams,
    horizon: f64,
    schedule: &FpSchedule,
    seed: u64,
    workers: usize,
) -> Result<FpTrajectory> {
    if initial.is_empty() {
        return Err(ModelError::EmptySample);
    }
    for p in initial {
        p.validate()?;
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(ModelError::Config(format!(
            "horizon must be >= 0, got {horizon}"
        )));
    }
    if let Some(i) = schedule.interval {
        if !(i.is_finite() && i > 0.0) {
            return Err(ModelError::Config(format!(
                "snapshot interval must be > 0, got {i}"
            )));
        }
    }
    if schedule
        .orders
        .iter()
        .any(|r| !(r.is_finite() && *r > -1.0))
    {
        return Err(ModelError::Config("moment orders must be > -1".into()));
    }

    let steps = if horizon == 0.0 {
        0
    } else {
        ((horizon / fp.dt) - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if steps == 0 {
        fp.dt
    } else {
        horizon / steps as f64
    };
    let fp_eff = fp.with_step(dt)?;
    let every = schedule
        .interval
        .map(|i| ((i / dt).round() as usize).max(1))
        .unwrap_or(usize::MAX);
    let mut marks: Vec<usize> = (0..=steps).filter(|k| *k % every == 0).collect();
    if *marks.last().unwrap() != steps {
        marks.push(steps);
    }

    let chunks: Vec<(usize, &[VWParticle])> = initial.chunks(CHUNK_SIZE).enumerate().collect();
    let job = |(idx, chunk): &(usize, &[VWParticle])| {
        run_chunk(chunk, &fp_eff, &marks, schedule, seed, *idx as u64)
    };
    let results: Vec<ChunkResult> = map_chunks(&chunks, job, workers);

    let n = initial.len() as f64;
    let n_orders = schedule.orders.len();
    let mut moments = Vec::with_capacity(marks.len());
    let mut snapshots = Vec::new();
    for (s, &k) in marks.iter().enumerate() {
        let tau = k as f64 * dt;
        let mut w = vec![0.0; n_orders];
        let mut v = vec![0.0; n_orders];
        for r in &results {
            for o in 0..n_orders {
                w[o] += r.w_sums[s][o];
                v[o] += r.v_sums[s][o];
            }
        }
        w.iter_mut().chain(v.iter_mut()).for_each(|m| *m /= n);
        moments.push(MomentRow { tau, w, v });
        let kept = schedule.keep_particles || s == 0 || s + 1 == marks.len();
        if kept {
            let particles = results
                .iter()
                .flat_map(|r| r.states[s].iter().copied())
                .collect();
            snapshots.push(FpSnapshot { tau, particles });
        }
    }
    Ok(FpTrajectory {
        orders: schedule.orders.clone(),
        moments,
        snapshots,
        projections: results.iter().map(|r| r.projections).sum(),
        step: dt,
    })
}

fn run_chunk(
    chunk: &[VWParticle],
    fp: &FPParams,
    marks: &[usize],
    schedule: &FpSchedule,
    seed: u64,
    index: u64,
) -> ChunkResult {
    let mut rng = stream(seed, streams::CHUNK_BASE + index);
    let n_marks = marks.len();
    let n_orders = schedule.orders.len();
    let mut w_sums = vec![vec![0.0; n_orders]; n_marks];
    let mut v_sums = vec![vec![0.0; n_orders]; n_marks];
    let mut states: Vec<Vec<VWParticle>> = (0..n_marks)
        .map(|s| {
            if schedule.keep_particles || s == 0 || s + 1 == n_marks {
                Vec::with_capacity(chunk.len())
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut projections = 0u64;
    for &p0 in chunk {
        let mut p = p0;
        let mut k = 0;
        for (s, &mark) in marks.iter().enumerate() {
            while k < mark {
                let (next, projected) = sde_step(p, fp, &mut rng);
                projections += projected as u64;
                p = next;
                k += 1;
            }
            for (o, &r) in schedule.orders.iter().enumerate() {
                w_sums[s][o] += p.w.abs().powf(1.0 + r);
                v_sums[s][o] += p.v.powf(1.0 + r);
            }
            if states[s].capacity() > 0 {
                states[s].push(p);
            }
        }
    }
    ChunkResult {
        w_sums,
        v_sums,
        states,
        projections,
    }
}

#[cfg(feature = "parallel")]
fn map_chunks<T, R, F>(items: &[T], f: F, workers: usize) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_chunks<T, R, F>(items: &[T], f: F, _workers: usize) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
