//! Particle simulation of the Boltzmann dynamics.
//!
//! Nonlinear mode pairs two agents uniformly at random and applies the
//! goods-space Edgeworth trade; each such collision advances kinetic time by
//! `2/N`, so every agent trades once per unit time on average. Linear mode
//! trades one agent against the frozen initial means and advances time by
//! `1/N`.
//!
//! In nonlinear mode holdings live on a [`GoodsLattice`], which makes the
//! totals of both goods exact constants of the motion.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{ModelError, Result};
use crate::lattice::{snap_in_place, GoodsLattice};
use crate::rng::{stream, streams, StreamRng};
use crate::trade::{
    sample_coefficients, trade_goods, trade_goods_on, trade_goods_variant_on, trade_mean_field,
    trade_mean_field_variant, AgentState, TradeParams, TradeRule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nonlinear,
    Linear,
}

/// How linear-mode steps choose their agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Uniform with replacement: the kinetic (Poisson-clock) picture.
    #[default]
    Random,
    /// Shuffled sweeps: every agent trades exactly once per `N` steps.
    Sweep,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Independent uniforms on `[x.0, x.1] x [y.0, y.1]`.
    Uniform { x: (f64, f64), y: (f64, f64) },
    /// Independent exponentials with the given means.
    Exponential { mean_x: f64, mean_y: f64 },
    /// Every agent at `(x, y)`.
    Point { x: f64, y: f64 },
    /// Explicit agents; the population size is their count.
    Agents(Vec<AgentState>),
}

impl InitialCondition {
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<AgentState>> {
        let agents = match self {
            InitialCondition::Uniform { x, y } => {
                if !(x.0 >= 0.0 && x.0 <= x.1 && y.0 >= 0.0 && y.0 <= y.1) {
                    return Err(ModelError::Config(format!(
                        "uniform initial rectangle {x:?} x {y:?} must be ordered and non-negative"
                    )));
                }
                (0..n)
                    .map(|_| AgentState {
                        x: x.0 + (x.1 - x.0) * rng.random::<f64>(),
                        y: y.0 + (y.1 - y.0) * rng.random::<f64>(),
                    })
                    .collect()
            }
            InitialCondition::Exponential { mean_x, mean_y } => {
                let ex = Exp::new(1.0 / mean_x)
                    .map_err(|e| ModelError::Config(format!("mean_x = {mean_x}: {e}")))?;
                let ey = Exp::new(1.0 / mean_y)
                    .map_err(|e| ModelError::Config(format!("mean_y = {mean_y}: {e}")))?;
                (0..n)
                    .map(|_| AgentState {
                        x: ex.sample(rng),
                        y: ey.sample(rng),
                    })
                    .collect()
            }
            InitialCondition::Point { x, y } => vec![AgentState::new(*x, *y)?; n],
            InitialCondition::Agents(list) => {
                if list.len() != n {
                    return Err(ModelError::Config(format!(
                        "explicit initial data has {} agents, expected {n}",
                        list.len()
                    )));
                }
                list.clone()
            }
        };
        Ok(agents)
    }
}

/// Event counters accumulated over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub steps: u64,
    /// Trades skipped because a pooled good had zero total.
    pub skipped: u64,
    /// Trades whose outcome had to be clamped back into the domain.
    pub clamped: u64,
}

/// What a single step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Traded,
    Skipped,
    Clamped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    agents: Vec<AgentState>,
    initial_totals: (f64, f64),
    reference_means: (f64, f64),
    lattice: Option<GoodsLattice>,
    clock_units: u64,
    rate: f64,
    counters: Counters,
}

impl Ensemble {
    /// Ensemble with holdings taken as given. Means are frozen at their
    /// initial values for linear-mode trades.
    pub fn new(agents: Vec<AgentState>) -> Result<Self> {
        if agents.len() < 2 {
            return Err(ModelError::Config(format!(
                "an ensemble needs at least 2 agents, got {}",
                agents.len()
            )));
        }
        for a in &agents {
            a.validate()?;
        }
        let totals = sum_holdings(&agents);
        let n = agents.len() as f64;
        Ok(Self {
            agents,
            initial_totals: totals,
            reference_means: (totals.0 / n, totals.1 / n),
            lattice: None,
            clock_units: 0,
            rate: 1.0,
            counters: Counters::default(),
        })
    }

    /// Ensemble whose holdings are snapped onto the lattice of their totals,
    /// making binary trades conserve both totals exactly.
    pub fn conservative(mut agents: Vec<AgentState>) -> Result<Self> {
        if agents.iter().any(|a| a.validate().is_err()) {
            return Err(ModelError::Domain(
                "holdings must be finite and non-negative".into(),
            ));
        }
        let mut xs: Vec<f64> = agents.iter().map(|a| a.x).collect();
        let mut ys: Vec<f64> = agents.iter().map(|a| a.y).collect();
        let qx = snap_in_place(&mut xs).map_err(|_| ModelError::DegeneratePool { good: 1 })?;
        let qy = snap_in_place(&mut ys).map_err(|_| ModelError::DegeneratePool { good: 2 })?;
        for (a, (x, y)) in agents.iter_mut().zip(xs.into_iter().zip(ys)) {
            *a = AgentState { x, y };
        }
        let mut e = Self::new(agents)?;
        e.lattice = Some(GoodsLattice { x: qx, y: qy });
        Ok(e)
    }

    /// Interaction frequency multiplier; time per collision scales as
    /// `1/rate`.
    pub fn with_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ModelError::Config(format!("rate must be > 0, got {rate}")));
        }
        self.rate = rate;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn lattice(&self) -> Option<GoodsLattice> {
        self.lattice
    }

    /// Sum of holdings, recomputed.
    pub fn totals(&self) -> (f64, f64) {
        sum_holdings(&self.agents)
    }

    pub fn initial_totals(&self) -> (f64, f64) {
        self.initial_totals
    }

    /// Current sample means.
    pub fn sample_means(&self) -> (f64, f64) {
        let (tx, ty) = self.totals();
        let n = self.len() as f64;
        (tx / n, ty / n)
    }

    /// Means frozen at construction: `(m_x, m_y)`.
    pub fn reference_means(&self) -> (f64, f64) {
        self.reference_means
    }

    /// True when the recomputed totals equal the initial ones bit for bit.
    pub fn totals_conserved(&self) -> bool {
        let (tx, ty) = self.totals();
        tx.to_bits() == self.initial_totals.0.to_bits()
            && ty.to_bits() == self.initial_totals.1.to_bits()
    }

    pub fn time(&self) -> f64 {
        self.clock_units as f64 / (self.len() as f64 * self.rate)
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    fn record(&mut self, units: u64, event: StepEvent) -> StepEvent {
        self.clock_units += units;
        self.counters.steps += 1;
        match event {
            StepEvent::Skipped => self.counters.skipped += 1,
            StepEvent::Clamped => self.counters.clamped += 1,
            StepEvent::Traded => {}
        }
        event
    }

    /// One binary collision between a uniformly chosen unordered pair.
    pub fn step_nonlinear<R: Rng + ?Sized>(&mut self, tp: &TradeParams, rng: &mut R) -> StepEvent {
        let n = self.agents.len();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let cd = sample_coefficients(tp, rng);
        let (a, b) = (self.agents[i], self.agents[j]);
        let outcome = match (tp.rule(), self.lattice) {
            (TradeRule::Difference, Some(lattice)) => {
                trade_goods_on(a, b, cd, &lattice).map(|pair| (pair, false))
            }
            (TradeRule::Difference, None) => trade_goods(a, b, cd).map(|pair| (pair, false)),
            (TradeRule::Proportional, lattice) => {
                let lattice = match lattice {
                    Some(l) => l,
                    None => match pair_lattice(a, b) {
                        Some(l) => l,
                        None => return self.record(2, StepEvent::Skipped),
                    },
                };
                trade_goods_variant_on(a, b, tp.lambda(), cd, &lattice)
                    .map(|c| (c.value, c.clamped))
            }
        };
        let event = match outcome {
            Ok(((na, nb), clamped)) => {
                self.agents[i] = na;
                self.agents[j] = nb;
                if clamped {
                    StepEvent::Clamped
                } else {
                    StepEvent::Traded
                }
            }
            Err(_) => StepEvent::Skipped,
        };
        self.record(2, event)
    }

    /// One mean-field trade of a uniformly chosen agent.
    pub fn step_linear<R: Rng + ?Sized>(
        &mut self,
        tp: &TradeParams,
        rng: &mut R,
    ) -> Result<StepEvent> {
        let i = rng.random_range(0..self.agents.len());
        self.trade_linear(i, tp, rng)
    }

    /// A shuffled sweep: every agent trades once against the market.
    pub fn sweep_linear<R: Rng + ?Sized>(&mut self, tp: &TradeParams, rng: &mut R) -> Result<()> {
        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        order.shuffle(rng);
        for i in order {
            self.trade_linear(i, tp, rng)?;
        }
        Ok(())
    }

    /// Mean-field trade of agent `i`.
    pub fn trade_linear<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        tp: &TradeParams,
        rng: &mut R,
    ) -> Result<StepEvent> {
        let means = self.reference_means;
        let cd = sample_coefficients(tp, rng);
        let agent = self.agents[i];
        let event = match tp.rule() {
            TradeRule::Difference => {
                self.agents[i] = trade_mean_field(agent, means, cd)?;
                StepEvent::Traded
            }
            TradeRule::Proportional => {
                let out = trade_mean_field_variant(agent, means, tp.lambda(), cd)?;
                self.agents[i] = out.value;
                if out.clamped {
                    StepEvent::Clamped
                } else {
                    StepEvent::Traded
                }
            }
        };
        Ok(self.record(1, event))
    }
}

fn pair_lattice(a: AgentState, b: AgentState) -> Option<GoodsLattice> {
    Some(GoodsLattice {
        x: crate::lattice::Quantum::for_total(a.x + b.x)?,
        y: crate::lattice::Quantum::for_total(a.y + b.y)?,
    })
}

pub fn sum_holdings(agents: &[AgentState]) -> (f64, f64) {
    agents
        .iter()
        .fold((0.0, 0.0), |(sx, sy), a| (sx + a.x, sy + a.y))
}

/// Run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub trade: TradeParams,
    pub mode: Mode,
    pub selection: Selection,
    /// Interaction frequency multiplier (collisions per agent per unit time).
    pub rate: f64,
    pub horizon: f64,
    /// Time between snapshots; `None` keeps only the first and last.
    pub snapshot_interval: Option<f64>,
    pub seed: u64,
    pub initial: InitialCondition,
}

impl SimConfig {
    pub fn new(n: usize, trade: TradeParams, mode: Mode, initial: InitialCondition) -> Self {
        Self {
            n,
            trade,
            mode,
            selection: Selection::Random,
            rate: 1.0,
            horizon: 1.0,
            snapshot_interval: None,
            seed: 0,
            initial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(ModelError::Config(format!(
                "N must be >= 2, got {}",
                self.n
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(ModelError::Config(format!(
                "horizon must be finite and >= 0, got {}",
                self.horizon
            )));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(ModelError::Config(format!(
                "rate must be > 0, got {}",
                self.rate
            )));
        }
        if let Some(dt) = self.snapshot_interval {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(ModelError::Config(format!(
                    "snapshot interval must be > 0, got {dt}"
                )));
            }
        }
        self.trade.validate()
    }

    /// Kinetic-time units consumed by one step of this mode.
    fn units_per_step(&self) -> u64 {
        match self.mode {
            Mode::Nonlinear => 2,
            Mode::Linear => 1,
        }
    }

    fn steps_for(&self, time: f64) -> u64 {
        (time * self.n as f64 * self.rate / self.units_per_step() as f64).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Kinetic time `t`, or rescaled time `tau` for quasi-invariant runs.
    pub time: f64,
    pub agents: Vec<AgentState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub counters: Counters,
    /// Means `(m_x, m_y)` frozen at the start of the run.
    pub reference_means: (f64, f64),
    /// True when totals were exact constants along the whole run.
    pub totals_conserved: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory holds the initial snapshot")
    }
}

/// Builds the initial ensemble of a configuration (lattice-snapped in
/// nonlinear mode).
pub fn initial_ensemble(sc: &SimConfig) -> Result<Ensemble> {
    let mut rng = stream(sc.seed, streams::INITIAL);
    let agents = sc.initial.generate(sc.n, &mut rng)?;
    let e = match sc.mode {
        Mode::Nonlinear => Ensemble::conservative(agents)?,
        Mode::Linear => Ensemble::new(agents)?,
    };
    e.with_rate(sc.rate)
}

/// Iterates the configured kernel until the horizon, snapshotting on
/// schedule. Deterministic for a fixed seed.
pub fn run(sc: &SimConfig) -> Result<Trajectory> {
    sc.validate()?;
    let ensemble = initial_ensemble(sc)?;
    run_from(sc, ensemble)
}

/// [`run`] starting from an explicit ensemble.
pub fn run_from(sc: &SimConfig, ensemble: Ensemble) -> Result<Trajectory> {
    let mut snapshots = Vec::new();
    let summary = run_visit(sc, ensemble, |time, agents| {
        snapshots.push(Snapshot {
            time,
            agents: agents.to_vec(),
        })
    })?;
    Ok(Trajectory {
        snapshots,
        counters: summary.counters,
        reference_means: summary.reference_means,
        totals_conserved: summary.totals_conserved,
    })
}

/// Outcome of a run whose snapshots went to a visitor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub counters: Counters,
    pub reference_means: (f64, f64),
    pub totals_conserved: bool,
    pub final_time: f64,
}

/// Runs `sc` from `ensemble`, handing each scheduled snapshot to `visit`
/// instead of storing it.
pub fn run_visit<F>(sc: &SimConfig, mut ensemble: Ensemble, mut visit: F) -> Result<RunSummary>
where
    F: FnMut(f64, &[AgentState]),
{
    sc.validate()?;
    if sc.mode == Mode::Linear {
        let (mx, my) = ensemble.reference_means();
        if !(mx > 0.0 && my > 0.0) {
            return Err(ModelError::DegenerateMeans {
                mean_x: mx,
                mean_y: my,
            });
        }
    }
    let mut rng = stream(sc.seed, streams::ENSEMBLE);
    let total_steps = sc.steps_for(sc.horizon);
    let every = sc
        .snapshot_interval
        .map(|dt| sc.steps_for(dt).max(1))
        .unwrap_or(u64::MAX);

    visit(ensemble.time(), ensemble.agents());
    let mut totals_conserved = true;
    let mut kernel = Kernel::new(sc, ensemble.len());
    let mut done = 0u64;
    while done < total_steps {
        let chunk = (every - done % every).min(total_steps - done);
        for _ in 0..chunk {
            kernel.step(&mut ensemble, &sc.trade, &mut rng)?;
        }
        done += chunk;
        if ensemble.lattice().is_some() {
            totals_conserved &= ensemble.totals_conserved();
        }
        visit(ensemble.time(), ensemble.agents());
    }
    if ensemble.lattice().is_none() {
        totals_conserved = ensemble.totals_conserved();
    }
    Ok(RunSummary {
        counters: ensemble.counters(),
        reference_means: ensemble.reference_means(),
        totals_conserved,
        final_time: ensemble.time(),
    })
}

/// Step dispatcher holding the sweep permutation between calls.
struct Kernel {
    mode: Mode,
    selection: Selection,
    order: Vec<usize>,
    cursor: usize,
}

impl Kernel {
    fn new(sc: &SimConfig, n: usize) -> Self {
        Self {
            mode: sc.mode,
            selection: sc.selection,
            order: (0..n).collect(),
            cursor: n,
        }
    }

    fn step(&mut self, e: &mut Ensemble, tp: &TradeParams, rng: &mut StreamRng) -> Result<()> {
        match (self.mode, self.selection) {
            (Mode::Nonlinear, _) => {
                e.step_nonlinear(tp, rng);
            }
            (Mode::Linear, Selection::Random) => {
                e.step_linear(tp, rng)?;
            }
            (Mode::Linear, Selection::Sweep) => {
                if self.cursor == self.order.len() {
                    self.order.shuffle(rng);
                    self.cursor = 0;
                }
                let i = self.order[self.cursor];
                self.cursor += 1;
                e.trade_linear(i, tp, rng)?;
            }
        }
        Ok(())
    }
}

/// Linear run under the quasi-invariant scaling `lambda -> eps lambda`,
/// noise `-> sqrt(eps) noise`. `sc.horizon` and `sc.snapshot_interval` are
/// read in rescaled time `tau = eps t`, and snapshots are reported in `tau`.
pub fn quasi_invariant_run(sc: &SimConfig, epsilon: f64) -> Result<Trajectory> {
    if sc.mode != Mode::Linear {
        return Err(ModelError::Config(
            "the quasi-invariant scaling applies to linear mode".into(),
        ));
    }
    let trade = sc.trade.quasi_invariant_scaled(epsilon)?;
    let scaled = SimConfig {
        trade,
        horizon: sc.horizon / epsilon,
        snapshot_interval: sc.snapshot_interval.map(|dt| dt / epsilon),
        ..sc.clone()
    };
    let mut traj = run(&scaled)?;
    for s in &mut traj.snapshots {
        s.time *= epsilon;
    }
    Ok(traj)
}
