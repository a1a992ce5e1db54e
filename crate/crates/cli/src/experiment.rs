//! Experiment orchestration and artifact output.
//!
//! One experiment writes one directory:
//!
//! ```text
//! manifest        seed, config hash, versions
//! report.txt      audits, counters, metric and tail reports
//! moments.csv     moment trajectory
//! snapshots/      snapshot CSVs
//! plots/          two-column data files, one per figure
//! ```
//!
//! Kind-specific tables (`distance_vs_epsilon.csv`, `metric.csv`) sit next
//! to `moments.csv`. Nothing time- or host-dependent is written, so equal
//! manifests mean equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use edgeworth_kinetics::analysis::{
    concentration_diagnostic, contraction_audit, contraction_constant, decay_bound,
    dissipation_audit, distance_from_cf, empirical_cf, growth_report, ks_two_sample, linear_fit,
    market_scaled, recentered, tail_index, ContractionAudit, FourierGrid, LinearFit, MetricReport,
    TailReport,
};
use edgeworth_kinetics::ensemble::{
    initial_ensemble, quasi_invariant_run, run_visit, sum_holdings, Counters, InitialCondition,
    Mode, SimConfig,
};
use edgeworth_kinetics::fokker_planck::{
    default_step, run_fp, to_vw, w_moment_oracle, w_path_oracle, FPParams, FpSchedule,
    FpTrajectory, VWParticle,
};
use edgeworth_kinetics::rng::{derive_seed, stream, streams};
use edgeworth_kinetics::{AgentState, ExponentLaw, NoiseKind, NoiseSpec, TradeParams};
use sha2::{Digest, Sha256};

use crate::config::{
    ConfigErrors, ConfigIssue, ExperimentConfig, ExperimentKind, InitialSpec, SweepParameter,
};
use crate::error::{CliError, CliResult};
use crate::snapshot::{exact, load_agents, load_particles, rounded, save_agents, save_particles};

const MANIFEST: &str = "manifest";
const AUDIT_SAMPLES: usize = 100_000;
const CONSTANT_DRAWS: usize = 2000;

/// What an experiment left on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub report: String,
}

/// Writes `text` to `path`.
fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn mkdir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// An output directory, emptied of earlier artifacts.
struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    /// Refuses non-empty directories that do not hold an earlier experiment.
    fn prepare(root: &Path) -> CliResult<Self> {
        if root.exists() {
            let entries: Vec<_> = fs::read_dir(root)
                .map_err(|e| CliError::io(root, e))?
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::io(root, e))?;
            if !entries.is_empty() && !root.join(MANIFEST).is_file() {
                return Err(CliError::Data {
                    path: root.to_path_buf(),
                    message: "output directory is not empty and holds no experiment manifest"
                        .into(),
                });
            }
            for entry in entries {
                let path = entry.path();
                let removed = if path.is_dir() {
                    fs::remove_dir_all(&path)
                } else {
                    fs::remove_file(&path)
                };
                removed.map_err(|e| CliError::io(&path, e))?;
            }
        }
        mkdir(&root.join("snapshots"))?;
        mkdir(&root.join("plots"))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, rel: &str, text: &str) -> CliResult<()> {
        write_file(&self.path(rel), text)
    }

    fn snapshot_path(&self, name: &str) -> PathBuf {
        self.root.join("snapshots").join(format!("{name}.csv"))
    }

    fn plot(
        &self,
        name: &str,
        header: &str,
        rows: impl IntoIterator<Item = (f64, f64)>,
        digits: usize,
    ) -> CliResult<()> {
        let mut text = format!("# {header}\n");
        for (x, y) in rows {
            if x.is_finite() && y.is_finite() {
                let _ = writeln!(text, "{} {}", rounded(x, digits), rounded(y, digits));
            }
        }
        write_file(&self.root.join("plots").join(format!("{name}.dat")), &text)
    }
}

/// Accumulates `key = value` report lines.
struct Report {
    text: String,
    digits: usize,
}

impl Report {
    fn new(digits: usize) -> Self {
        Self {
            text: String::new(),
            digits,
        }
    }

    fn section(&mut self, title: &str) {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let _ = writeln!(self.text, "[{title}]");
    }

    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    fn num(&self, x: f64) -> String {
        rounded(x, self.digits)
    }

    fn value(&mut self, key: &str, x: f64) {
        let v = self.num(x);
        self.line(key, v);
    }

    fn estimate(&mut self, key: &str, x: f64, se: f64) {
        let v = format!("{} +/- {}", self.num(x), self.num(se));
        self.line(key, v);
    }
}

fn csv_row(values: &[f64], digits: usize) -> String {
    values
        .iter()
        .map(|v| rounded(*v, digits))
        .collect::<Vec<_>>()
        .join(",")
}

fn hash_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn input_file(cfg: &ExperimentConfig) -> Option<&Path> {
    match &cfg.initial {
        InitialSpec::AgentFile(p) | InitialSpec::ParticleFile(p) => Some(p),
        _ => None,
    }
}

fn manifest(cfg: &ExperimentConfig) -> CliResult<String> {
    let mut m = String::new();
    let _ = writeln!(m, "format = edgeworth-experiment 1");
    let _ = writeln!(m, "kind = {}", cfg.kind);
    let _ = writeln!(m, "seed = {}", cfg.seed);
    let _ = writeln!(
        m,
        "config_sha256 = {}",
        hash_hex(cfg.canonical().as_bytes())
    );
    if let Some(p) = input_file(cfg) {
        let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
        let _ = writeln!(m, "input_sha256 = {}", hash_hex(&bytes));
    }
    let _ = writeln!(m, "edgeworth-kinetics = {}", edgeworth_kinetics::VERSION);
    let _ = writeln!(m, "edgeworth-cli = {}", env!("CARGO_PKG_VERSION"));
    Ok(m)
}

/// Runs `cfg` and writes its artifacts under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let out = OutputDir::prepare(&cfg.out)?;
    let mut report = Report::new(cfg.precision);
    report.section("experiment");
    report.line("kind", cfg.kind);
    report.line("seed", cfg.seed);
    match cfg.kind {
        ExperimentKind::Nonlinear => ensemble_experiment(cfg, Mode::Nonlinear, &out, &mut report)?,
        ExperimentKind::Linear => ensemble_experiment(cfg, Mode::Linear, &out, &mut report)?,
        ExperimentKind::FokkerPlanck => fp_experiment(cfg, false, &out, &mut report)?,
        ExperimentKind::TailStudy => fp_experiment(cfg, true, &out, &mut report)?,
        ExperimentKind::QuasiInvariantSweep => sweep_experiment(cfg, &out, &mut report)?,
        ExperimentKind::MetricStudy => metric_experiment(cfg, &out, &mut report)?,
    }
    out.write("report.txt", &report.text)?;
    out.write(MANIFEST, &manifest(cfg)?)?;
    Ok(Artifacts {
        dir: out.root,
        report: report.text,
    })
}

fn sim_config(cfg: &ExperimentConfig, mode: Mode) -> CliResult<SimConfig> {
    let (n, initial) = match &cfg.initial {
        InitialSpec::Generated(ic) => (cfg.agents, ic.clone()),
        InitialSpec::AgentFile(path) => {
            let agents = load_agents(path)?;
            (agents.len(), InitialCondition::Agents(agents))
        }
        InitialSpec::ParticlePoint { .. } | InitialSpec::ParticleFile(_) => {
            return Err(config_error(
                "initial.kind",
                "particle initial data needs a particle experiment",
            ))
        }
    };
    let mut sc = SimConfig::new(n, cfg.trade, mode, initial);
    sc.selection = cfg.selection;
    sc.rate = cfg.rate;
    sc.horizon = cfg.horizon;
    sc.snapshot_interval = cfg.snapshot_interval;
    sc.seed = cfg.seed;
    Ok(sc)
}

fn config_error(key: &str, message: &str) -> CliError {
    CliError::Config(ConfigErrors(vec![ConfigIssue {
        key: key.into(),
        message: message.into(),
        position: None,
    }]))
}

fn audit_section(cfg: &ExperimentConfig, report: &mut Report) -> CliResult<ContractionAudit> {
    let audit = contraction_audit(
        &cfg.trade,
        2.0,
        AUDIT_SAMPLES,
        &mut stream(cfg.seed, streams::AUDIT),
    )?;
    report.section("contraction");
    report.estimate("gap_moment_s2", audit.estimate, audit.std_error);
    report.line("contractive", audit.contractive);
    let d = dissipation_audit(&cfg.trade);
    report.value("dissipation", d.value);
    report.line("dissipative", d.dissipative);
    Ok(audit)
}

fn ensemble_experiment(
    cfg: &ExperimentConfig,
    mode: Mode,
    out: &OutputDir,
    report: &mut Report,
) -> CliResult<()> {
    let sc = sim_config(cfg, mode)?;
    let ensemble = initial_ensemble(&sc)?;
    let means = ensemble.reference_means();
    let digits = cfg.precision;

    let mut failure = None;
    let mut index = 0usize;
    let mut moments = String::from("t,mean_x,mean_y,var_x,var_y,concentration\n");
    let mut concentration = Vec::new();
    let mut first_totals = None;
    let mut last_totals = (0.0, 0.0);
    let mut exact_totals = true;
    let mut drift = 0.0f64;
    let summary = run_visit(&sc, ensemble, |t, agents| {
        if failure.is_none() {
            if let Err(e) = save_agents(
                &out.snapshot_path(&format!("snapshot_{index:05}")),
                t,
                agents,
            ) {
                failure = Some(e);
            }
        }
        index += 1;
        let totals = sum_holdings(agents);
        let t0 = *first_totals.get_or_insert(totals);
        exact_totals &=
            totals.0.to_bits() == t0.0.to_bits() && totals.1.to_bits() == t0.1.to_bits();
        let rel = |now: f64, start: f64| {
            if start == 0.0 {
                now.abs()
            } else {
                (now / start - 1.0).abs()
            }
        };
        drift = drift.max(rel(totals.0, t0.0)).max(rel(totals.1, t0.1));
        last_totals = totals;

        let n = agents.len() as f64;
        let (mx, my) = (totals.0 / n, totals.1 / n);
        let (vx, vy) = agents.iter().fold((0.0, 0.0), |(a, b), s| {
            (a + (s.x - mx).powi(2), b + (s.y - my).powi(2))
        });
        let c = concentration_diagnostic(agents, means).unwrap_or(f64::NAN);
        concentration.push((t, c));
        moments.push_str(&csv_row(&[t, mx, my, vx / n, vy / n, c], digits));
        moments.push('\n');
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    out.write("moments.csv", &moments)?;
    out.plot(
        "log_concentration",
        "t ln(sum w^2 / sum v^2)",
        concentration.iter().map(|&(t, c)| (t, c.ln())),
        digits,
    )?;

    report.line(
        "mode",
        if mode == Mode::Nonlinear {
            "nonlinear"
        } else {
            "linear"
        },
    );
    report.line("agents", sc.n);
    report.value("horizon", sc.horizon);
    report.value("final_time", summary.final_time);
    report.line("snapshots", index);
    counters_section(summary.counters, report);
    report.section("conservation");
    let t0 = first_totals.unwrap_or((0.0, 0.0));
    report.line("initial_totals", format!("{} {}", exact(t0.0), exact(t0.1)));
    report.line(
        "final_totals",
        format!("{} {}", exact(last_totals.0), exact(last_totals.1)),
    );
    report.line("exact", exact_totals);
    report.value("max_relative_drift", drift);
    report.line(
        "reference_means",
        format!(
            "{} {}",
            report.num(summary.reference_means.0),
            report.num(summary.reference_means.1)
        ),
    );
    report.section("concentration");
    if let (Some(first), Some(last)) = (concentration.first(), concentration.last()) {
        report.value("initial", first.1);
        report.value("final", last.1);
    }
    let finite: Vec<(f64, f64)> = concentration
        .iter()
        .filter(|(_, c)| c.is_finite() && *c > 0.0)
        .map(|&(t, c)| (t, c.ln()))
        .collect();
    if let Ok(fit) = fit_pairs(&finite) {
        report.estimate("log_rate", fit.slope, fit.slope_se);
    }
    audit_section(cfg, report)?;
    Ok(())
}

fn counters_section(c: Counters, report: &mut Report) {
    report.section("counters");
    report.line("steps", c.steps);
    report.line("skipped", c.skipped);
    report.line("clamped", c.clamped);
}

fn fit_pairs(rows: &[(f64, f64)]) -> edgeworth_kinetics::Result<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    linear_fit(&x, &y)
}

/// Limit-equation parameters of a configuration.
pub fn fp_params(cfg: &ExperimentConfig) -> CliResult<FPParams> {
    let (s1, s2) = cfg.sigmas();
    let dt = cfg
        .fokker_planck
        .dt
        .unwrap_or_else(|| default_step(cfg.trade.lambda(), s2));
    Ok(FPParams::new(
        cfg.trade.lambda(),
        cfg.trade.utility(),
        s1,
        s2,
        dt,
    )?)
}

/// Initial particles of a configuration. Agent data is mapped to `(v, w)`
/// with its own sample means.
pub fn initial_particles(cfg: &ExperimentConfig) -> CliResult<Vec<VWParticle>> {
    let from_agents = |agents: Vec<AgentState>| -> CliResult<Vec<VWParticle>> {
        let (sx, sy) = sum_holdings(&agents);
        let n = agents.len() as f64;
        Ok(to_vw(&agents, (sx / n, sy / n)))
    };
    match &cfg.initial {
        InitialSpec::ParticlePoint { v, w } => Ok(vec![VWParticle::new(*v, *w)?; cfg.agents]),
        InitialSpec::ParticleFile(path) => load_particles(path),
        InitialSpec::AgentFile(path) => from_agents(load_agents(path)?),
        InitialSpec::Generated(ic) => {
            from_agents(ic.generate(cfg.agents, &mut stream(cfg.seed, streams::INITIAL))?)
        }
    }
}

fn order_label(r: f64) -> String {
    format!("{}", 1.0 + r)
}

/// Outcome of a Fokker-Planck tail study.
#[derive(Debug, Clone, PartialEq)]
pub struct TailStudy {
    pub trajectory: FpTrajectory,
    pub params: FPParams,
    pub tail: TailReport,
}

/// Runs the limit equation and estimates the tail of the final `v`
/// marginal. Without a snapshot interval, moments are recorded 50 times.
pub fn tail_study(cfg: &ExperimentConfig) -> CliResult<TailStudy> {
    let particles = initial_particles(cfg)?;
    let fp = fp_params(cfg)?;
    let schedule = FpSchedule {
        interval: cfg
            .snapshot_interval
            .or((cfg.horizon > 0.0).then(|| cfg.horizon / 50.0)),
        orders: cfg.fokker_planck.orders.clone(),
        keep_particles: false,
    };
    let trajectory = run_fp(
        &particles,
        &fp,
        cfg.horizon,
        &schedule,
        cfg.seed,
        cfg.workers,
    )?;
    let v: Vec<f64> = trajectory.last().particles.iter().map(|p| p.v).collect();
    let tail = tail_index(
        &v,
        cfg.tail.fraction,
        cfg.tail.bootstrap,
        &mut stream(cfg.seed, streams::BOOTSTRAP),
    )?;
    let tail = match growth_report(&trajectory, &fp) {
        Ok(g) => tail.with_growth(g),
        Err(_) => tail,
    };
    Ok(TailStudy {
        trajectory,
        params: fp,
        tail,
    })
}

fn fp_experiment(
    cfg: &ExperimentConfig,
    tail: bool,
    out: &OutputDir,
    report: &mut Report,
) -> CliResult<()> {
    let digits = cfg.precision;
    let (traj, fp, tail_report) = if tail {
        let s = tail_study(cfg)?;
        (s.trajectory, s.params, Some(s.tail))
    } else {
        let particles = initial_particles(cfg)?;
        let fp = fp_params(cfg)?;
        let schedule = FpSchedule {
            interval: cfg.snapshot_interval,
            orders: cfg.fokker_planck.orders.clone(),
            keep_particles: true,
        };
        (
            run_fp(
                &particles,
                &fp,
                cfg.horizon,
                &schedule,
                cfg.seed,
                cfg.workers,
            )?,
            fp,
            None,
        )
    };
    let common_w = match cfg.initial {
        InitialSpec::ParticlePoint { w, .. } => Some(w),
        _ => None,
    };

    for (i, s) in traj.snapshots.iter().enumerate() {
        save_particles(
            &out.snapshot_path(&format!("snapshot_{i:05}")),
            s.tau,
            &s.particles,
        )?;
    }

    let labels: Vec<String> = traj.orders.iter().map(|&r| order_label(r)).collect();
    let mut header = vec!["tau".to_string()];
    header.extend(labels.iter().map(|l| format!("w_m{l}")));
    header.extend(labels.iter().map(|l| format!("v_m{l}")));
    if common_w.is_some() {
        header.extend(labels.iter().map(|l| format!("oracle_w_m{l}")));
    }
    let mut moments = header.join(",") + "\n";
    for row in &traj.moments {
        let mut values = vec![row.tau];
        values.extend(&row.w);
        values.extend(&row.v);
        if let Some(w0) = common_w {
            values.extend(
                traj.orders
                    .iter()
                    .map(|&r| w_moment_oracle(w0, r, &fp, row.tau)),
            );
        }
        moments.push_str(&csv_row(&values, digits));
        moments.push('\n');
    }
    out.write("moments.csv", &moments)?;
    for (o, l) in labels.iter().enumerate() {
        let w_rows = traj.moments.iter().map(|m| (m.tau, m.w[o].ln()));
        out.plot(
            &format!("log_w_m{l}"),
            &format!("tau ln E|w|^{l}"),
            w_rows,
            digits,
        )?;
        let v_rows = traj.moments.iter().map(|m| (m.tau, m.v[o].ln()));
        out.plot(
            &format!("log_v_m{l}"),
            &format!("tau ln E v^{l}"),
            v_rows,
            digits,
        )?;
    }

    report.line("particles", traj.last().particles.len());
    report.value("horizon", cfg.horizon);
    report.section("fokker_planck");
    report.value("lambda", fp.lambda());
    report.value("sigma1_sq", fp.sigma1_sq());
    report.value("sigma2_sq", fp.sigma2_sq());
    report.value("step", traj.step);
    report.value("critical_order", fp.critical_order());
    report.line("projections", traj.projections);
    if let (Some(w0), Some(last)) = (common_w, traj.moments.last()) {
        report.section("moment_oracle");
        for (o, &r) in traj.orders.iter().enumerate() {
            let oracle = w_moment_oracle(w0, r, &fp, last.tau);
            report.value(
                &format!("relative_error_w_m{}", labels[o]),
                last.w[o] / oracle - 1.0,
            );
        }
    }
    let growth = match &tail_report {
        Some(t) => t.growth.clone(),
        None => growth_report(&traj, &fp).ok(),
    };
    if let Some(g) = growth {
        report.section("growth");
        for (o, l) in labels.iter().enumerate() {
            report.value(&format!("w_m{l}_rate"), g.w_rates[o]);
            report.value(&format!("w_m{l}_predicted"), g.predicted_w_rates[o]);
            report.value(&format!("v_m{l}_rate"), g.v_rates[o]);
        }
        report.line("signs_agree", g.signs_agree());
    }
    if let Some(t) = tail_report {
        report.section("tail");
        report.line("sample", "v at the final time");
        report.line("sample_size", t.sample_size);
        report.value("tail_fraction", t.hill.fraction);
        report.estimate("hill", t.hill.index, t.hill.std_error);
        report.estimate("hill_narrow", t.narrow.index, t.narrow.std_error);
        report.estimate("hill_wide", t.wide.index, t.wide.std_error);
        report.value("rank_regression_index", t.rank_index);
        report.line("thin_tailed", t.thin_tailed);
    }
    Ok(())
}

/// One scale of a quasi-invariant sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub seed: u64,
    /// Kolmogorov-Smirnov distance between the simulated and the limit
    /// `w` marginals at the horizon.
    pub ks: f64,
    pub mean_abs_w: f64,
    pub oracle_mean_abs_w: f64,
    pub counters: Counters,
    pub final_agents: Vec<AgentState>,
}

/// Linear runs under the quasi-invariant scaling, one per configured scale,
/// compared at rescaled time `horizon` with the limit law of `w`. All
/// scales start from the same agents; dynamics use per-scale seeds.
pub fn quasi_invariant_study(
    cfg: &ExperimentConfig,
) -> CliResult<(Vec<AgentState>, Vec<SweepPoint>)> {
    let mut sc = sim_config(cfg, Mode::Linear)?;
    sc.snapshot_interval = None;
    let start = initial_ensemble(&sc)?;
    let initial = start.agents().to_vec();
    let means = start.reference_means();
    sc.initial = InitialCondition::Agents(initial.clone());
    let fp = fp_params(cfg)?;
    let w0: Vec<f64> = to_vw(&initial, means).iter().map(|p| p.w).collect();

    let mut points = Vec::with_capacity(cfg.sweep.epsilons.len());
    for (i, &epsilon) in cfg.sweep.epsilons.iter().enumerate() {
        let seed = derive_seed(cfg.seed, i as u64);
        let point = SimConfig { seed, ..sc.clone() };
        let traj = quasi_invariant_run(&point, epsilon)?;
        let last = traj.last();
        let w: Vec<f64> = to_vw(&last.agents, traj.reference_means)
            .iter()
            .map(|p| p.w)
            .collect();
        let mut rng = stream(seed, streams::ORACLE);
        let oracle: Vec<f64> = w0
            .iter()
            .map(|&w| w_path_oracle(w, &fp, last.time, &mut rng))
            .collect();
        let mean_abs = |xs: &[f64]| xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64;
        points.push(SweepPoint {
            epsilon,
            seed,
            ks: ks_two_sample(&w, &oracle)?,
            mean_abs_w: mean_abs(&w),
            oracle_mean_abs_w: mean_abs(&oracle),
            counters: traj.counters,
            final_agents: last.agents.clone(),
        });
    }
    Ok((initial, points))
}

fn sweep_experiment(cfg: &ExperimentConfig, out: &OutputDir, report: &mut Report) -> CliResult<()> {
    let digits = cfg.precision;
    let (initial, mut points) = quasi_invariant_study(cfg)?;
    save_agents(&out.snapshot_path("initial"), 0.0, &initial)?;
    for (i, p) in points.iter().enumerate() {
        save_agents(
            &out.snapshot_path(&format!("eps_{i:03}_final")),
            cfg.horizon,
            &p.final_agents,
        )?;
    }
    points.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));

    let mut table = String::from("epsilon,tau,seed,ks_distance,monotone\n");
    let mut moments = String::from("epsilon,tau,mean_abs_w,oracle_mean_abs_w\n");
    let mut decreasing = true;
    for (i, p) in points.iter().enumerate() {
        let monotone = i == 0 || p.ks < points[i - 1].ks;
        decreasing &= monotone;
        let _ = writeln!(
            table,
            "{},{},{},{},{monotone}",
            rounded(p.epsilon, digits),
            rounded(cfg.horizon, digits),
            p.seed,
            rounded(p.ks, digits)
        );
        let _ = writeln!(
            moments,
            "{}",
            csv_row(
                &[p.epsilon, cfg.horizon, p.mean_abs_w, p.oracle_mean_abs_w],
                digits
            )
        );
    }
    out.write("distance_vs_epsilon.csv", &table)?;
    out.write("moments.csv", &moments)?;
    out.plot(
        "ks_vs_epsilon",
        "epsilon KS(w, limit)",
        points.iter().map(|p| (p.epsilon, p.ks)),
        digits,
    )?;

    report.line("agents", initial.len());
    report.value("tau", cfg.horizon);
    report.section("quasi_invariant_sweep");
    for p in &points {
        report.line(
            &format!("epsilon_{}", report.num(p.epsilon)),
            format!(
                "ks = {}, steps = {}, clamped = {}",
                report.num(p.ks),
                p.counters.steps,
                p.counters.clamped
            ),
        );
    }
    report.line("strictly_decreasing", decreasing);
    audit_section(cfg, report)?;
    Ok(())
}

/// Distances of the running ensemble from a late reference ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricStudy {
    pub times: Vec<f64>,
    /// Distances between market-scaled samples.
    pub raw: Vec<MetricReport>,
    /// Distances after shifting both samples to the exact common mean.
    pub recentered: Vec<MetricReport>,
    pub raw_fit: LinearFit,
    pub recentered_fit: LinearFit,
    pub reference_time: f64,
    pub contraction: ContractionAudit,
    /// Grid estimate of the Fourier contraction constant.
    pub constant: f64,
    pub counters: Counters,
}

/// Linear run to `metric.reference_time`; every snapshot up to `horizon` is
/// compared with the final one on the diagonal grid with `a = lambda beta`,
/// `b = lambda alpha`.
pub fn metric_study(cfg: &ExperimentConfig) -> CliResult<MetricStudy> {
    metric_study_with(cfg, |_, _| Ok(()))
}

fn metric_study_with(
    cfg: &ExperimentConfig,
    mut keep: impl FnMut(f64, &[AgentState]) -> CliResult<()>,
) -> CliResult<MetricStudy> {
    let mut sc = sim_config(cfg, Mode::Linear)?;
    sc.horizon = cfg.metric.reference_time;
    let ensemble = initial_ensemble(&sc)?;
    let means = ensemble.reference_means();
    let target = (means.0 * means.1, means.0 * means.1);
    let tp = cfg.trade;
    let (alpha, beta) = (tp.utility().alpha(), tp.utility().beta());
    let s = cfg.metric.exponent.unwrap_or(2.0);
    let grid = FourierGrid::diagonal(s, tp.lambda() * beta, tp.lambda() * alpha)?;

    let cutoff = cfg.horizon * (1.0 + 1e-12);
    let mut times = Vec::new();
    let mut raw_cf = Vec::new();
    let mut centered_cf = Vec::new();
    let mut latest: Vec<AgentState> = Vec::new();
    let mut failure: Option<CliError> = None;
    let mut first = true;
    let summary = run_visit(&sc, ensemble, |t, agents| {
        if failure.is_some() {
            return;
        }
        if first {
            first = false;
            if let Err(e) = keep(t, agents) {
                failure = Some(e);
                return;
            }
        }
        if t <= cutoff {
            let scaled = market_scaled(agents, means);
            let step = empirical_cf(&scaled, &grid).and_then(|raw| {
                let c = empirical_cf(&recentered(&scaled, target)?, &grid)?;
                Ok((raw, c))
            });
            match step {
                Ok((raw, c)) => {
                    times.push(t);
                    raw_cf.push(raw);
                    centered_cf.push(c);
                }
                Err(e) => failure = Some(e.into()),
            }
        }
        latest.clear();
        latest.extend_from_slice(agents);
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    keep(summary.final_time, &latest)?;

    let scaled = market_scaled(&latest, means);
    let ref_raw = empirical_cf(&scaled, &grid)?;
    let ref_centered = empirical_cf(&recentered(&scaled, target)?, &grid)?;
    let sizes = (latest.len(), latest.len());
    let raw: Vec<MetricReport> = raw_cf
        .iter()
        .map(|f| distance_from_cf(f, &ref_raw, &grid, sizes))
        .collect();
    let recentered_reports: Vec<MetricReport> = centered_cf
        .iter()
        .map(|f| distance_from_cf(f, &ref_centered, &grid, sizes))
        .collect();
    let d = |r: &[MetricReport]| r.iter().map(|m| m.distance).collect::<Vec<_>>();
    let raw_fit = linear_fit(&times, &d(&raw))?;
    let recentered_fit = linear_fit(&times, &d(&recentered_reports))?;
    let mut rng = stream(cfg.seed, streams::AUDIT);
    let contraction = contraction_audit(&tp, s, AUDIT_SAMPLES, &mut rng)?;
    let constant = contraction_constant(&tp, &grid, CONSTANT_DRAWS, &mut rng)?;
    Ok(MetricStudy {
        times,
        raw,
        recentered: recentered_reports,
        raw_fit,
        recentered_fit,
        reference_time: summary.final_time,
        contraction,
        constant,
        counters: summary.counters,
    })
}

fn metric_experiment(
    cfg: &ExperimentConfig,
    out: &OutputDir,
    report: &mut Report,
) -> CliResult<()> {
    let digits = cfg.precision;
    let mut saved = 0usize;
    let study = metric_study_with(cfg, |t, agents| {
        let name = if saved == 0 { "initial" } else { "reference" };
        saved += 1;
        save_agents(&out.snapshot_path(name), t, agents)
    })?;

    let mut table = String::from("t,d_raw,divergent_raw,d_recentered,divergent_recentered\n");
    for ((t, r), c) in study.times.iter().zip(&study.raw).zip(&study.recentered) {
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            rounded(*t, digits),
            rounded(r.distance, digits),
            r.divergent,
            rounded(c.distance, digits),
            c.divergent
        );
    }
    out.write("metric.csv", &table)?;
    let mut moments = String::from("t,d_raw,d_recentered\n");
    for ((t, r), c) in study.times.iter().zip(&study.raw).zip(&study.recentered) {
        moments.push_str(&csv_row(&[*t, r.distance, c.distance], digits));
        moments.push('\n');
    }
    out.write("moments.csv", &moments)?;
    out.plot(
        "ds_raw",
        "t d_s",
        study
            .times
            .iter()
            .copied()
            .zip(study.raw.iter().map(|m| m.distance)),
        digits,
    )?;
    out.plot(
        "ds_recentered",
        "t d_s",
        study
            .times
            .iter()
            .copied()
            .zip(study.recentered.iter().map(|m| m.distance)),
        digits,
    )?;

    let s = study.contraction.exponent;
    report.value("horizon", cfg.horizon);
    report.value("reference_time", study.reference_time);
    counters_section(study.counters, report);
    report.section("metric");
    report.value("exponent", s);
    report.line("snapshots_compared", study.times.len());
    let primary = if cfg.metric.recenter {
        "recentered"
    } else {
        "raw"
    };
    report.line("primary", primary);
    for (name, fit, reports) in [
        ("raw", &study.raw_fit, &study.raw),
        ("recentered", &study.recentered_fit, &study.recentered),
    ] {
        report.estimate(&format!("{name}_slope"), fit.slope, fit.slope_se);
        if let (Some(first), Some(last)) = (reports.first(), reports.last()) {
            report.value(&format!("{name}_initial"), first.distance);
            report.value(&format!("{name}_final"), last.distance);
        }
        report.line(
            &format!("{name}_divergent_count"),
            reports.iter().filter(|m| m.divergent).count(),
        );
    }
    report.section("contraction");
    report.estimate(
        "gap_moment",
        study.contraction.estimate,
        study.contraction.std_error,
    );
    report.line("contractive", study.contraction.contractive);
    report.value("fourier_constant", study.constant);
    if let Some(first) = study.recentered.first() {
        report.value(
            "gronwall_bound_at_horizon",
            decay_bound(first.distance, study.constant, cfg.horizon),
        );
    }
    Ok(())
}

/// Copy of `cfg` with one parameter replaced.
pub fn with_parameter(
    cfg: &ExperimentConfig,
    parameter: SweepParameter,
    value: f64,
) -> CliResult<ExperimentConfig> {
    let mut next = cfg.clone();
    let tp = cfg.trade;
    let invalid = |e: String| config_error(parameter.key(), &e);
    let rebuild = |lambda: f64, alpha: f64, noise: NoiseSpec| -> CliResult<TradeParams> {
        let utility = edgeworth_kinetics::UtilityParams::from_alpha(alpha)
            .map_err(|e| invalid(e.to_string()))?;
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(invalid(format!(
                "must satisfy 0 < lambda <= 1, got {lambda}"
            )));
        }
        let mut t = TradeParams::new(lambda, utility, noise)
            .map_err(|e| invalid(e.to_string()))?
            .with_rule(tp.rule());
        if let Some(ExponentLaw::Uniform { low, high }) = tp.exponent_law() {
            t = t
                .with_exponent_law(ExponentLaw::Uniform { low, high })
                .map_err(|e| invalid(e.to_string()))?;
        }
        Ok(t)
    };
    let alpha = tp.utility().alpha();
    match parameter {
        SweepParameter::Lambda => next.trade = rebuild(value, alpha, tp.noise())?,
        SweepParameter::Alpha => next.trade = rebuild(tp.lambda(), value, tp.noise())?,
        SweepParameter::HalfWidth => {
            let noise = match tp.noise().kind() {
                NoiseKind::TruncatedGaussian => {
                    NoiseSpec::truncated_gaussian(tp.noise().scale(), value)
                }
                NoiseKind::Zero | NoiseKind::Uniform => NoiseSpec::uniform(value),
            }
            .map_err(|e| invalid(e.to_string()))?;
            next.trade = rebuild(tp.lambda(), alpha, noise)?;
        }
        SweepParameter::Horizon => {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(format!("must be finite and >= 0, got {value}")));
            }
            next.horizon = value;
            next.metric.reference_time = next.metric.reference_time.max(value);
        }
    }
    Ok(next)
}

/// The `sweep` subcommand: a quasi-invariant sweep runs as one experiment;
/// other kinds run once per value of `sweep.parameter`, in `point_NNN`
/// subdirectories with seeds derived from the master seed.
pub fn run_sweep(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    if cfg.kind == ExperimentKind::QuasiInvariantSweep {
        return run_experiment(cfg);
    }
    let parameter = cfg.sweep.parameter.ok_or_else(|| {
        config_error(
            "sweep.parameter",
            "required for a parameter sweep unless kind = \"quasi-invariant-sweep\"",
        )
    })?;
    // validate every point before running any
    let points = cfg
        .sweep
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut p = with_parameter(cfg, parameter, v)?;
            p.seed = derive_seed(cfg.seed, i as u64);
            p.out = cfg.out.join(format!("point_{i:03}"));
            Ok(p)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let out = OutputDir::prepare(&cfg.out)?;
    let mut table = format!("index,{},seed,directory\n", parameter.key());
    let mut report = Report::new(cfg.precision);
    report.section("sweep");
    report.line("kind", cfg.kind);
    report.line("parameter", parameter.key());
    report.line("points", points.len());
    for (i, (p, &v)) in points.iter().zip(&cfg.sweep.values).enumerate() {
        run_experiment(p)?;
        let _ = writeln!(
            table,
            "{i},{},{},point_{i:03}",
            rounded(v, cfg.precision),
            p.seed
        );
    }
    out.write("sweep.csv", &table)?;
    out.write("report.txt", &report.text)?;
    out.write(MANIFEST, &manifest(cfg)?)?;
    Ok(Artifacts {
        dir: out.root,
        report: report.text,
    })
}
