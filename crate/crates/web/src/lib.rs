//! Browser demo: three small computations exported to JavaScript.
//!
//! Each export returns a flat `Float64Array` of fixed-width rows so the
//! page can plot it without any parsing.

use edgeworth_kinetics::analysis::concentration_diagnostic;
use edgeworth_kinetics::ensemble::{
    initial_ensemble, run_visit, InitialCondition, Mode, Selection, SimConfig,
};
use edgeworth_kinetics::fokker_planck::{
    run_fp, w_moment_oracle, FPParams, FpSchedule, VWParticle,
};
use edgeworth_kinetics::trade::{trade_percent, utility};
use edgeworth_kinetics::{CoefficientDraw, NoiseSpec, PercentPair, TradeParams, UtilityParams};
use wasm_bindgen::prelude::*;

/// Rows `(p, q, U)` of `steps` repeated noise-free trades from `(p, q)`.
pub fn trade_path_rows(
    lambda: f64,
    alpha: f64,
    p: f64,
    q: f64,
    steps: usize,
) -> Result<Vec<f64>, String> {
    let up = UtilityParams::from_alpha(alpha).map_err(|e| e.to_string())?;
    let tp = TradeParams::new(lambda, up, NoiseSpec::zero()).map_err(|e| e.to_string())?;
    let cd = CoefficientDraw::deterministic(&tp);
    let mut pp = PercentPair::new(p, q).map_err(|e| e.to_string())?;
    let mut rows = Vec::with_capacity(3 * (steps + 1));
    for k in 0..=steps {
        rows.extend([pp.p, pp.q, utility(pp, up).map_err(|e| e.to_string())?]);
        if k < steps {
            pp = trade_percent(pp, cd).map_err(|e| e.to_string())?;
        }
    }
    Ok(rows)
}

/// Rows `(sweep, concentration, (1 - lambda)^2 ^ sweep * c0)` of a linear
/// run with shuffled sweeps.
pub fn concentration_rows(
    lambda: f64,
    alpha: f64,
    half_width: f64,
    agents: usize,
    sweeps: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let noise = NoiseSpec::uniform(half_width).map_err(|e| e.to_string())?;
    let up = UtilityParams::from_alpha(alpha).map_err(|e| e.to_string())?;
    let tp = TradeParams::new(lambda, up, noise).map_err(|e| e.to_string())?;
    let mut sc = SimConfig::new(
        agents,
        tp,
        Mode::Linear,
        InitialCondition::Uniform {
            x: (0.0, 2.0),
            y: (0.0, 1.0),
        },
    );
    sc.selection = Selection::Sweep;
    sc.horizon = sweeps as f64;
    sc.snapshot_interval = Some(1.0);
    sc.seed = seed;
    let ensemble = initial_ensemble(&sc).map_err(|e| e.to_string())?;
    let means = ensemble.reference_means();
    let factor = (1.0 - lambda).powi(2);
    let mut rows = Vec::new();
    let mut c0 = None;
    run_visit(&sc, ensemble, |t, agents| {
        let c = concentration_diagnostic(agents, means).unwrap_or(f64::NAN);
        let start = *c0.get_or_insert(c);
        rows.extend([t, c, start * factor.powf(t)]);
    })
    .map_err(|e| e.to_string())?;
    Ok(rows)
}

/// Rows `(tau, E|w|^(1+r) simulated, oracle)` every 0.1 on `[0, 1]` for particles
/// started at `(v, w) = (2, 1)`.
pub fn moment_rows(
    lambda: f64,
    sigma2_sq: f64,
    r: f64,
    particles: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let up = UtilityParams::from_alpha(0.5).map_err(|e| e.to_string())?;
    let fp =
        FPParams::with_default_step(lambda, up, sigma2_sq, sigma2_sq).map_err(|e| e.to_string())?;
    let start = vec![VWParticle::new(2.0, 1.0).map_err(|e| e.to_string())?; particles];
    let schedule = FpSchedule {
        interval: Some(0.1),
        orders: vec![r],
        keep_particles: false,
    };
    let traj = run_fp(&start, &fp, 1.0, &schedule, seed, 1).map_err(|e| e.to_string())?;
    Ok(traj
        .moments
        .iter()
        .flat_map(|m| [m.tau, m.w[0], w_moment_oracle(1.0, r, &fp, m.tau)])
        .collect())
}

#[wasm_bindgen]
pub fn trade_path(
    lambda: f64,
    alpha: f64,
    p: f64,
    q: f64,
    steps: usize,
) -> Result<Vec<f64>, JsValue> {
    trade_path_rows(lambda, alpha, p, q, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn concentration(
    lambda: f64,
    alpha: f64,
    half_width: f64,
    agents: usize,
    sweeps: usize,
    seed: u32,
) -> Result<Vec<f64>, JsValue> {
    concentration_rows(lambda, alpha, half_width, agents, sweeps, seed as u64)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn moment_law(
    lambda: f64,
    sigma2_sq: f64,
    r: f64,
    particles: usize,
    seed: u32,
) -> Result<Vec<f64>, JsValue> {
    moment_rows(lambda, sigma2_sq, r, particles, seed as u64).map_err(|e| JsValue::from_str(&e))
}
