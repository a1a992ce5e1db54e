//! TOML experiment configuration.
//!
//! Parsing never stops at the first problem: every unknown key, type
//! mismatch and violated invariant is collected and reported together.

use std::fmt;
use std::path::{Path, PathBuf};

use edgeworth_kinetics::ensemble::{InitialCondition, Selection};
use edgeworth_kinetics::{ExponentLaw, NoiseSpec, TradeParams, TradeRule, UtilityParams};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Nonlinear,
    Linear,
    FokkerPlanck,
    QuasiInvariantSweep,
    TailStudy,
    MetricStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Nonlinear,
        ExperimentKind::Linear,
        ExperimentKind::FokkerPlanck,
        ExperimentKind::QuasiInvariantSweep,
        ExperimentKind::TailStudy,
        ExperimentKind::MetricStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Nonlinear => "nonlinear",
            ExperimentKind::Linear => "linear",
            ExperimentKind::FokkerPlanck => "fokker-planck",
            ExperimentKind::QuasiInvariantSweep => "quasi-invariant-sweep",
            ExperimentKind::TailStudy => "tail-study",
            ExperimentKind::MetricStudy => "metric-study",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Kinds that evolve particles in `(v, w)` rather than agents.
    pub fn uses_particles(self) -> bool {
        matches!(
            self,
            ExperimentKind::FokkerPlanck | ExperimentKind::TailStudy
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Generated(InitialCondition),
    /// Snapshot CSV with header `t,agent_id,x,y`.
    AgentFile(PathBuf),
    /// Every particle at `(v, w)`.
    ParticlePoint {
        v: f64,
        w: f64,
    },
    /// Snapshot CSV with header `tau,particle_id,v,w`.
    ParticleFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSection {
    pub dt: Option<f64>,
    pub sigma1_sq: Option<f64>,
    pub sigma2_sq: Option<f64>,
    pub orders: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Lambda,
    Alpha,
    HalfWidth,
    Horizon,
}

impl SweepParameter {
    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "trade.lambda",
            SweepParameter::Alpha => "trade.alpha",
            SweepParameter::HalfWidth => "noise.half_width",
            SweepParameter::Horizon => "horizon",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub parameter: Option<SweepParameter>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSection {
    pub fraction: f64,
    pub bootstrap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSection {
    pub exponent: Option<f64>,
    pub reference_time: f64,
    pub recenter: bool,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub agents: usize,
    pub horizon: f64,
    pub snapshot_interval: Option<f64>,
    pub rate: f64,
    pub selection: Selection,
    /// Significant digits of derived outputs (moments, reports, plot data).
    /// Snapshots always use 17.
    pub precision: usize,
    pub workers: usize,
    pub out: PathBuf,
    pub trade: TradeParams,
    pub initial: InitialSpec,
    pub fokker_planck: FpSection,
    pub sweep: SweepSection,
    pub tail: TailSection,
    pub metric: MetricSection,
}

impl ExperimentConfig {
    /// Every input that affects output, in a stable textual form. Output
    /// directory and worker count are excluded.
    pub fn canonical(&self) -> String {
        format!(
            "{:?}",
            (
                (self.kind, self.seed, self.agents, self.horizon),
                (
                    self.snapshot_interval,
                    self.rate,
                    self.selection,
                    self.precision
                ),
                &self.trade,
                &self.initial,
                &self.fokker_planck,
                &self.sweep,
                &self.tail,
                &self.metric,
            )
        )
    }

    /// Limit-equation coefficients `(sigma1_sq, sigma2_sq)`: configured
    /// values or `2 Var(mu)` from the noise law.
    pub fn sigmas(&self) -> (f64, f64) {
        let s = 2.0 * self.trade.noise().variance();
        (
            self.fokker_planck.sigma1_sq.unwrap_or(s),
            self.fokker_planck.sigma2_sq.unwrap_or(s),
        )
    }
}

/// One problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// Dotted key, or empty for document-level problems.
    pub key: String,
    pub message: String,
    /// 1-based line and column for syntax errors.
    pub position: Option<(usize, usize)>,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((line, col)) = self.position {
            write!(f, "line {line}, column {col}: ")?;
        }
        if !self.key.is_empty() {
            write!(f, "{}: ", self.key)?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for issue in &self.0 {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn issues(&self) -> &[ConfigIssue] {
        &self.0
    }
}

/// Parses configuration text; relative paths resolve against the current
/// directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_in(text, Path::new("."))
}

/// Parses configuration text; relative paths resolve against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let position = e.span().map(|s| line_col(text, s.start));
        ConfigErrors(vec![ConfigIssue {
            key: String::new(),
            message: format!("syntax error: {}", e.message().trim()),
            position,
        }])
    })?;
    let mut issues = Vec::new();
    let cfg = build(table, base, &mut issues);
    match cfg {
        Some(cfg) if issues.is_empty() => Ok(cfg),
        _ => Err(ConfigErrors(issues)),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Reads keys out of a table, recording problems and leaving unknown keys
/// behind for [`Section::finish`].
struct Section<'a> {
    table: Table,
    path: String,
    issues: &'a mut Vec<ConfigIssue>,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn issue(&mut self, k: &str, message: impl Into<String>) {
        let key = self.key(k);
        self.issues.push(ConfigIssue {
            key,
            message: message.into(),
            position: None,
        });
    }

    fn sub(&mut self, k: &str) -> Table {
        match self.table.remove(k) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(other) => {
                self.issue(k, format!("expected a table, found {}", other.type_str()));
                Table::new()
            }
        }
    }

    fn f64(&mut self, k: &str) -> Option<f64> {
        match self.table.remove(k)? {
            Value::Float(x) => Some(x),
            Value::Integer(i) => Some(i as f64),
            other => {
                self.issue(k, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn integer(&mut self, k: &str) -> Option<i64> {
        match self.table.remove(k)? {
            Value::Integer(i) => Some(i),
            other => {
                self.issue(
                    k,
                    format!("expected an integer, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn count(&mut self, k: &str, min: i64) -> Option<usize> {
        let i = self.integer(k)?;
        if i < min {
            self.issue(k, format!("must be >= {min}, got {i}"));
            return None;
        }
        Some(i as usize)
    }

    fn string(&mut self, k: &str) -> Option<String> {
        match self.table.remove(k)? {
            Value::String(s) => Some(s),
            other => {
                self.issue(k, format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn boolean(&mut self, k: &str) -> Option<bool> {
        match self.table.remove(k)? {
            Value::Boolean(b) => Some(b),
            other => {
                self.issue(
                    k,
                    format!("expected true or false, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn numbers(&mut self, k: &str) -> Option<Vec<f64>> {
        match self.table.remove(k)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Value::Float(x) => out.push(x),
                        Value::Integer(i) => out.push(i as f64),
                        other => {
                            self.issue(
                                k,
                                format!("expected an array of numbers, found {}", other.type_str()),
                            );
                            return None;
                        }
                    }
                }
                Some(out)
            }
            other => {
                self.issue(k, format!("expected an array, found {}", other.type_str()));
                None
            }
        }
    }

    fn interval(&mut self, k: &str) -> Option<(f64, f64)> {
        let v = self.numbers(k)?;
        if v.len() != 2 {
            self.issue(k, format!("expected [low, high], got {} numbers", v.len()));
            return None;
        }
        Some((v[0], v[1]))
    }

    fn finish(self) {
        for k in self.table.keys() {
            let key = if self.path.is_empty() {
                k.clone()
            } else {
                format!("{}.{k}", self.path)
            };
            self.issues.push(ConfigIssue {
                key,
                message: "unknown key".into(),
                position: None,
            });
        }
    }
}

fn section<'a>(table: Table, path: &str, issues: &'a mut Vec<ConfigIssue>) -> Section<'a> {
    Section {
        table,
        path: path.to_string(),
        issues,
    }
}

fn build(table: Table, base: &Path, issues: &mut Vec<ConfigIssue>) -> Option<ExperimentConfig> {
    let mut root = section(table, "", issues);
    let trade_t = root.sub("trade");
    let noise_t = root.sub("noise");
    let initial_t = root.sub("initial");
    let fp_t = root.sub("fokker_planck");
    let sweep_t = root.sub("sweep");
    let tail_t = root.sub("tail");
    let metric_t = root.sub("metric");

    let kind = match root.string("kind") {
        None => {
            root.issue("kind", format!("required; one of {}", kind_names()));
            None
        }
        Some(s) => {
            let k = ExperimentKind::parse(&s);
            if k.is_none() {
                root.issue(
                    "kind",
                    format!("unknown experiment kind {s:?}; one of {}", kind_names()),
                );
            }
            k
        }
    };
    let seed = match root.table.remove("seed") {
        None => Some(0),
        Some(Value::Integer(i)) if i >= 0 => Some(i as u64),
        Some(Value::String(s)) if s.parse::<u64>().is_ok() => s.parse().ok(),
        Some(other) => {
            root.issue(
                "seed",
                format!(
                    "expected an integer in [0, 2^64) (as a string above 2^63 - 1), got {other}"
                ),
            );
            None
        }
    };
    let agents = root.count("agents", 1).or(Some(10_000)).filter(|_| true);
    let horizon = checked(
        &mut root,
        "horizon",
        1.0,
        |h| h.is_finite() && h >= 0.0,
        "must be finite and >= 0",
    );
    let snapshot_interval = match root.f64("snapshot_interval") {
        Some(i) if !(i.is_finite() && i > 0.0) => {
            root.issue("snapshot_interval", format!("must be > 0, got {i}"));
            None
        }
        other => other,
    };
    let rate = checked(
        &mut root,
        "rate",
        1.0,
        |r| r.is_finite() && r > 0.0,
        "must be > 0",
    );
    let selection = match root.string("selection").as_deref() {
        None | Some("random") => Some(Selection::Random),
        Some("sweep") => Some(Selection::Sweep),
        Some(other) => {
            root.issue(
                "selection",
                format!("expected \"random\" or \"sweep\", got {other:?}"),
            );
            None
        }
    };
    let precision = match root.count("precision", 1) {
        Some(p) if p > 17 => {
            root.issue(
                "precision",
                format!("at most 17 significant digits, got {p}"),
            );
            None
        }
        Some(p) => Some(p),
        None => Some(17),
    };
    let workers = root.count("workers", 1).or(Some(1));
    let out = root
        .string("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("edgeworth-out"));
    root.finish();

    let trade = build_trade(trade_t, noise_t, issues);
    let initial = kind.and_then(|k| build_initial(initial_t, k, base, issues));
    let fokker_planck = build_fp(fp_t, issues);
    let sweep = build_sweep(sweep_t, issues);
    let tail = build_tail(tail_t, issues);
    let metric = build_metric(metric_t, horizon.unwrap_or(1.0), issues);

    let (kind, seed, agents, horizon, rate, selection, precision, workers) = (
        kind?, seed?, agents?, horizon?, rate?, selection?, precision?, workers?,
    );
    let (trade, initial, fokker_planck, sweep, tail, metric) =
        (trade?, initial?, fokker_planck?, sweep?, tail?, metric?);

    let cfg = ExperimentConfig {
        kind,
        seed,
        agents,
        horizon,
        snapshot_interval,
        rate,
        selection,
        precision,
        workers,
        out,
        trade,
        initial,
        fokker_planck,
        sweep,
        tail,
        metric,
    };
    cross_check(&cfg, issues);
    Some(cfg)
}

fn kind_names() -> String {
    ExperimentKind::ALL
        .iter()
        .map(|k| k.name())
        .collect::<Vec<_>>()
        .join(", ")
}

fn checked(
    s: &mut Section<'_>,
    key: &str,
    default: f64,
    ok: impl Fn(f64) -> bool,
    rule: &str,
) -> Option<f64> {
    match s.f64(key) {
        None => {
            if s.issues.iter().any(|i| i.key == s.key(key)) {
                None
            } else {
                Some(default)
            }
        }
        Some(v) if ok(v) => Some(v),
        Some(v) => {
            s.issue(key, format!("{rule}, got {v}"));
            None
        }
    }
}

fn build_trade(
    trade_t: Table,
    noise_t: Table,
    issues: &mut Vec<ConfigIssue>,
) -> Option<TradeParams> {
    let mut t = section(trade_t, "trade", issues);
    let lambda = t.f64("lambda").unwrap_or(0.5);
    let alpha = t.f64("alpha").unwrap_or(0.5);
    let rule = match t.string("rule").as_deref() {
        None | Some("difference") => Some(TradeRule::Difference),
        Some("proportional") => Some(TradeRule::Proportional),
        Some(other) => {
            t.issue(
                "rule",
                format!("expected \"difference\" or \"proportional\", got {other:?}"),
            );
            None
        }
    };
    let law = t
        .interval("exponents")
        .map(|(low, high)| ExponentLaw::Uniform { low, high });
    let mut ok = true;
    if !(lambda > 0.0 && lambda <= 1.0) {
        t.issue(
            "lambda",
            format!("must satisfy 0 < lambda <= 1, got {lambda}"),
        );
        ok = false;
    }
    let utility = match UtilityParams::from_alpha(alpha) {
        Ok(u) => Some(u),
        Err(_) => {
            t.issue(
                "alpha",
                format!("must satisfy 0 < alpha < 1 (beta = 1 - alpha), got {alpha}"),
            );
            None
        }
    };
    t.finish();

    let mut n = section(noise_t, "noise", issues);
    let kind = n.string("kind");
    let half_width = n.f64("half_width");
    let scale = n.f64("scale");
    let noise = match kind.as_deref() {
        None | Some("zero") => {
            if half_width.is_some_and(|h| h != 0.0) || scale.is_some() {
                n.issue("kind", "zero noise takes no half_width or scale");
            }
            Some(NoiseSpec::zero())
        }
        Some("uniform") => match half_width {
            None => {
                n.issue("half_width", "required for uniform noise");
                None
            }
            Some(h) => NoiseSpec::uniform(h)
                .map_err(|e| n.issue("half_width", e.to_string()))
                .ok(),
        },
        Some("truncated-gaussian") => match (scale, half_width) {
            (Some(s), Some(h)) => NoiseSpec::truncated_gaussian(s, h)
                .map_err(|e| n.issue("scale", e.to_string()))
                .ok(),
            _ => {
                n.issue(
                    "kind",
                    "truncated-gaussian noise needs both scale and half_width",
                );
                None
            }
        },
        Some(other) => {
            n.issue(
                "kind",
                format!("expected \"zero\", \"uniform\" or \"truncated-gaussian\", got {other:?}"),
            );
            None
        }
    };
    n.finish();

    let (utility, noise, rule) = (utility?, noise?, rule?);
    if !ok {
        return None;
    }
    let tp = TradeParams::new(lambda, utility, noise).map(|tp| tp.with_rule(rule));
    let tp = match (tp, law) {
        (Ok(tp), Some(law)) => tp.with_exponent_law(law),
        (tp, None) => tp,
        (Err(e), Some(_)) => Err(e),
    };
    tp.map_err(|e| {
        issues.push(ConfigIssue {
            key: "noise.half_width".into(),
            message: format!(
                "{e}; trade coefficients must satisfy 0 < lambda beta + mu < 1 and 0 < lambda alpha + mu_tilde <= 1 for every noise value"
            ),
            position: None,
        })
    })
    .ok()
}

fn build_initial(
    t: Table,
    kind: ExperimentKind,
    base: &Path,
    issues: &mut Vec<ConfigIssue>,
) -> Option<InitialSpec> {
    let mut s = section(t, "initial", issues);
    let which = s.string("kind").unwrap_or_else(|| "exponential".into());
    let non_negative = |v: f64| v.is_finite() && v >= 0.0;
    let spec = match which.as_str() {
        "uniform" => {
            let x = s.interval("x").unwrap_or((0.0, 2.0));
            let y = s.interval("y").unwrap_or((0.0, 2.0));
            for (k, (lo, hi)) in [("x", x), ("y", y)] {
                if !(non_negative(lo) && lo <= hi && hi.is_finite()) {
                    s.issue(k, format!("need 0 <= low <= high, got [{lo}, {hi}]"));
                }
            }
            Some(InitialSpec::Generated(InitialCondition::Uniform { x, y }))
        }
        "exponential" => {
            let mean_x = s.f64("mean_x").unwrap_or(1.0);
            let mean_y = s.f64("mean_y").unwrap_or(1.0);
            for (k, m) in [("mean_x", mean_x), ("mean_y", mean_y)] {
                if !(m.is_finite() && m > 0.0) {
                    s.issue(k, format!("must be > 0, got {m}"));
                }
            }
            Some(InitialSpec::Generated(InitialCondition::Exponential {
                mean_x,
                mean_y,
            }))
        }
        "point" => {
            let x = s.f64("x").unwrap_or(1.0);
            let y = s.f64("y").unwrap_or(1.0);
            for (k, v) in [("x", x), ("y", y)] {
                if !non_negative(v) {
                    s.issue(k, format!("must be >= 0, got {v}"));
                }
            }
            Some(InitialSpec::Generated(InitialCondition::Point { x, y }))
        }
        "file" => match s.string("path") {
            Some(p) => Some(InitialSpec::AgentFile(base.join(p))),
            None => {
                s.issue("path", "required for file initial data");
                None
            }
        },
        "vw-point" => {
            let v = s.f64("v").unwrap_or(2.0);
            let w = s.f64("w").unwrap_or(1.0);
            if !(v.is_finite() && w.is_finite() && w.abs() <= v) {
                s.issue(
                    "w",
                    format!("particles need |w| <= v, got v = {v}, w = {w}"),
                );
            }
            Some(InitialSpec::ParticlePoint { v, w })
        }
        "vw-file" => match s.string("path") {
            Some(p) => Some(InitialSpec::ParticleFile(base.join(p))),
            None => {
                s.issue("path", "required for file initial data");
                None
            }
        },
        other => {
            s.issue(
                "kind",
                format!("expected uniform, exponential, point, file, vw-point or vw-file, got {other:?}"),
            );
            None
        }
    };
    if let Some(sp) = &spec {
        let particle = matches!(
            sp,
            InitialSpec::ParticlePoint { .. } | InitialSpec::ParticleFile(_)
        );
        if particle && !kind.uses_particles() {
            s.issue(
                "kind",
                format!("{which} initial data only applies to fokker-planck and tail-study"),
            );
        }
    }
    s.finish();
    spec
}

fn build_fp(t: Table, issues: &mut Vec<ConfigIssue>) -> Option<FpSection> {
    let mut s = section(t, "fokker_planck", issues);
    let dt = s.f64("dt");
    let sigma1_sq = s.f64("sigma1_sq");
    let sigma2_sq = s.f64("sigma2_sq");
    let orders = s.numbers("orders").unwrap_or_else(|| vec![0.5, 1.0, 3.0]);
    let mut ok = true;
    if let Some(d) = dt {
        if !(d.is_finite() && d > 0.0) {
            s.issue("dt", format!("must be > 0, got {d}"));
            ok = false;
        }
    }
    for (k, v) in [("sigma1_sq", sigma1_sq), ("sigma2_sq", sigma2_sq)] {
        if let Some(v) = v {
            if !(v.is_finite() && v >= 0.0) {
                s.issue(k, format!("must be >= 0, got {v}"));
                ok = false;
            }
        }
    }
    if orders.iter().any(|r| !(r.is_finite() && *r > -1.0)) {
        s.issue("orders", "moment orders r must be > -1");
        ok = false;
    }
    s.finish();
    ok.then_some(FpSection {
        dt,
        sigma1_sq,
        sigma2_sq,
        orders,
    })
}

fn build_sweep(t: Table, issues: &mut Vec<ConfigIssue>) -> Option<SweepSection> {
    let mut s = section(t, "sweep", issues);
    let epsilons = s
        .numbers("epsilons")
        .unwrap_or_else(|| vec![0.5, 0.1, 0.02]);
    let parameter = match s.string("parameter").as_deref() {
        None => None,
        Some("trade.lambda") => Some(SweepParameter::Lambda),
        Some("trade.alpha") => Some(SweepParameter::Alpha),
        Some("noise.half_width") => Some(SweepParameter::HalfWidth),
        Some("horizon") => Some(SweepParameter::Horizon),
        Some(other) => {
            s.issue(
                "parameter",
                format!("expected trade.lambda, trade.alpha, noise.half_width or horizon, got {other:?}"),
            );
            None
        }
    };
    let values = s.numbers("values").unwrap_or_default();
    let mut ok = true;
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        s.issue("epsilons", "need at least one scale, each in (0, 1]");
        ok = false;
    }
    if parameter.is_some() && values.is_empty() {
        s.issue("values", "a sweep parameter needs at least one value");
        ok = false;
    }
    s.finish();
    ok.then_some(SweepSection {
        epsilons,
        parameter,
        values,
    })
}

fn build_tail(t: Table, issues: &mut Vec<ConfigIssue>) -> Option<TailSection> {
    let mut s = section(t, "tail", issues);
    let fraction = s.f64("fraction").unwrap_or(0.05);
    let bootstrap = s.count("bootstrap", 2).unwrap_or(200);
    let mut ok = true;
    if !(fraction > 0.0 && fraction <= 0.2) {
        s.issue("fraction", format!("must lie in (0, 0.2], got {fraction}"));
        ok = false;
    }
    s.finish();
    ok.then_some(TailSection {
        fraction,
        bootstrap,
    })
}

fn build_metric(t: Table, horizon: f64, issues: &mut Vec<ConfigIssue>) -> Option<MetricSection> {
    let mut s = section(t, "metric", issues);
    let exponent = s.f64("exponent");
    let reference_time = s.f64("reference_time").unwrap_or(5.0 * horizon);
    let recenter = s.boolean("recenter").unwrap_or(true);
    let mut ok = true;
    if let Some(e) = exponent {
        if !(e.is_finite() && e > 0.0) {
            s.issue("exponent", format!("s must be > 0, got {e}"));
            ok = false;
        }
    }
    if !(reference_time.is_finite() && reference_time >= horizon) {
        s.issue(
            "reference_time",
            format!("must be finite and >= horizon ({horizon}), got {reference_time}"),
        );
        ok = false;
    }
    s.finish();
    ok.then_some(MetricSection {
        exponent,
        reference_time,
        recenter,
    })
}

fn cross_check(cfg: &ExperimentConfig, issues: &mut Vec<ConfigIssue>) {
    let mut push = |key: &str, message: String| {
        issues.push(ConfigIssue {
            key: key.into(),
            message,
            position: None,
        })
    };
    let generated = matches!(cfg.initial, InitialSpec::Generated(_));
    if !cfg.kind.uses_particles() && generated && cfg.agents < 2 {
        push(
            "agents",
            format!("an ensemble needs at least 2 agents, got {}", cfg.agents),
        );
    }
    if cfg.kind == ExperimentKind::TailStudy && cfg.agents < 1000 {
        push(
            "agents",
            format!(
                "tail estimation needs at least 1000 particles, got {}",
                cfg.agents
            ),
        );
    }
    if cfg.kind == ExperimentKind::QuasiInvariantSweep {
        for &eps in &cfg.sweep.epsilons {
            if let Err(e) = cfg.trade.quasi_invariant_scaled(eps) {
                push("sweep.epsilons", e.to_string());
            }
        }
    }
    if cfg.kind == ExperimentKind::MetricStudy && cfg.snapshot_interval.is_none() {
        push(
            "snapshot_interval",
            "a metric study needs a snapshot interval".into(),
        );
    }
    if cfg.kind.uses_particles() {
        let (_, s2) = cfg.sigmas();
        let dt = cfg.fokker_planck.dt.unwrap_or_else(|| {
            edgeworth_kinetics::fokker_planck::default_step(cfg.trade.lambda(), s2)
        });
        if cfg.horizon > 0.0 && dt > cfg.horizon {
            push(
                "fokker_planck.dt",
                format!("step {dt} exceeds the horizon {}", cfg.horizon),
            );
        }
    }
}
