//! Post-hoc analysis of snapshot files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use edgeworth_kinetics::analysis::{
    concentration_diagnostic, default_exponent, ds_distance, market_scaled, tail_index,
    FourierGrid, MIN_TAIL_SAMPLE,
};
use edgeworth_kinetics::ensemble::sum_holdings;
use edgeworth_kinetics::rng::{stream, streams};
use edgeworth_kinetics::AgentState;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::snapshot::{exact, load, rounded, SnapshotData};

/// Reports on each snapshot file. Agent snapshots are compared with the
/// first agent snapshot given: totals, concentration about its means, and
/// the Fourier distance of the market-scaled samples. Particle snapshots
/// get moments and a tail estimate of `v`. The text is also written to
/// `analysis.txt` in the configured output directory.
pub fn analyze(cfg: &ExperimentConfig, files: &[PathBuf]) -> CliResult<String> {
    let digits = cfg.precision;
    let num = |x: f64| rounded(x, digits);
    let tp = cfg.trade;
    let mut text = String::new();
    let mut base: Option<(Vec<AgentState>, (f64, f64))> = None;

    for (i, path) in files.iter().enumerate() {
        let _ = writeln!(text, "[{}]", path.display());
        match load(path)? {
            SnapshotData::Agents { time, agents } => {
                let (sx, sy) = sum_holdings(&agents);
                let n = agents.len() as f64;
                let _ = writeln!(text, "t = {}", num(time));
                let _ = writeln!(text, "agents = {}", agents.len());
                let _ = writeln!(text, "totals = {} {}", exact(sx), exact(sy));
                let _ = writeln!(text, "means = {} {}", num(sx / n), num(sy / n));
                let (reference, means) =
                    base.get_or_insert_with(|| (agents.clone(), (sx / n, sy / n)));
                let c = concentration_diagnostic(&agents, *means)?;
                let _ = writeln!(text, "concentration = {}", num(c));
                let a = market_scaled(&agents, *means);
                let b = market_scaled(reference, *means);
                let s = cfg
                    .metric
                    .exponent
                    .map_or_else(|| default_exponent(&a, &b), Ok)?;
                let (alpha, beta) = (tp.utility().alpha(), tp.utility().beta());
                let grid = FourierGrid::diagonal(s, tp.lambda() * beta, tp.lambda() * alpha)?;
                let d = ds_distance(&a, &b, &grid)?;
                let _ = writeln!(
                    text,
                    "distance_to_first = {} (s = {}, divergent = {})",
                    num(d.distance),
                    num(s),
                    d.divergent
                );
            }
            SnapshotData::Particles { tau, particles } => {
                let n = particles.len() as f64;
                let _ = writeln!(text, "tau = {}", num(tau));
                let _ = writeln!(text, "particles = {}", particles.len());
                for &r in &cfg.fokker_planck.orders {
                    let p = 1.0 + r;
                    let mw = particles.iter().map(|q| q.w.abs().powf(p)).sum::<f64>() / n;
                    let mv = particles.iter().map(|q| q.v.powf(p)).sum::<f64>() / n;
                    let _ = writeln!(text, "w_m{p} = {}", num(mw));
                    let _ = writeln!(text, "v_m{p} = {}", num(mv));
                }
                if particles.len() >= MIN_TAIL_SAMPLE {
                    let v: Vec<f64> = particles.iter().map(|q| q.v).collect();
                    let mut rng = stream(cfg.seed, streams::BOOTSTRAP + ((i as u64) << 8));
                    let t = tail_index(&v, cfg.tail.fraction, cfg.tail.bootstrap, &mut rng)?;
                    let _ = writeln!(
                        text,
                        "hill = {} +/- {}",
                        num(t.hill.index),
                        num(t.hill.std_error)
                    );
                    let _ = writeln!(text, "thin_tailed = {}", t.thin_tailed);
                }
            }
        }
        text.push('\n');
    }
    write_report(&cfg.out, &text)?;
    Ok(text)
}

fn write_report(dir: &Path, text: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("analysis.txt");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
