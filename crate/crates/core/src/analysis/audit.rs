//! Audits of conserved quantities and of the contraction conditions on the
//! trade noise.

use rand::Rng;

use crate::analysis::fourier::FourierGrid;
use crate::ensemble::{sum_holdings, Snapshot};
use crate::error::{ModelError, Result};
use crate::trade::{sample_coefficients, AgentState, TradeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionAudit {
    /// Monte Carlo estimate of `<|1 - A - B|^s>`.
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub exponent: f64,
    /// `estimate + 3 std_error < 1`.
    pub contractive: bool,
}

pub fn contraction_audit<R: Rng + ?Sized>(
    tp: &TradeParams,
    s: f64,
    samples: usize,
    rng: &mut R,
) -> Result<ContractionAudit> {
    if !(s.is_finite() && s > 0.0) {
        return Err(ModelError::Domain(format!(
            "exponent s must be > 0, got {s}"
        )));
    }
    if samples == 0 {
        return Err(ModelError::EmptySample);
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let g = sample_coefficients(tp, rng).gap_factor().abs().powf(s);
        sum += g;
        sum_sq += g * g;
    }
    let n = samples as f64;
    let estimate = sum / n;
    let std_error = if samples > 1 {
        ((sum_sq - n * estimate * estimate).max(0.0) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(ContractionAudit {
        estimate,
        std_error,
        samples,
        exponent: s,
        contractive: estimate + 3.0 * std_error < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationAudit {
    /// `(1 - lambda)^2 + Var(mu + mu_tilde)`.
    pub value: f64,
    pub dissipative: bool,
}

/// Closed form for independent `mu`, `mu_tilde` drawn from the noise law.
pub fn dissipation_audit(tp: &TradeParams) -> DissipationAudit {
    let value = (1.0 - tp.lambda()).powi(2) + 2.0 * tp.noise().variance();
    DissipationAudit {
        value,
        dissipative: value < 1.0,
    }
}

/// Grid estimate of `C_s = sup_k < (|k*| / |k|)^s >`, with `k*` the
/// post-trade frequency and magnitudes measured in the grid's frame. The
/// average uses `draws` coefficient samples shared by all grid points.
pub fn contraction_constant<R: Rng + ?Sized>(
    tp: &TradeParams,
    grid: &FourierGrid,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws == 0 {
        return Err(ModelError::EmptySample);
    }
    let coeffs: Vec<(f64, f64)> = (0..draws)
        .map(|_| {
            let c = sample_coefficients(tp, rng);
            (c.rate_x, c.rate_y)
        })
        .collect();
    let frame = grid.frame();
    let s = grid.exponent();
    let mut sup = 0.0f64;
    for (&(xi, eta), &k) in grid.frequencies().iter().zip(grid.norms()) {
        let mean = coeffs
            .iter()
            .map(|&(a, b)| {
                let xs = (1.0 - a) * xi + b * eta;
                let es = a * xi + (1.0 - b) * eta;
                (frame.norm(xs, es) / k).powf(s)
            })
            .sum::<f64>()
            / draws as f64;
        sup = sup.max(mean);
    }
    Ok(sup)
}

/// Gronwall bound `d0 exp((C_s - 1) t)`.
pub fn decay_bound(d0: f64, c_s: f64, t: f64) -> f64 {
    d0 * ((c_s - 1.0) * t).exp()
}

/// `sum w_i^2 / sum v_i^2` with `w = m_y x - m_x y`, `v = m_y x + m_x y`.
pub fn concentration_diagnostic(agents: &[AgentState], means: (f64, f64)) -> Result<f64> {
    if agents.is_empty() {
        return Err(ModelError::EmptySample);
    }
    let (mx, my) = means;
    let (sw, sv) = agents.iter().fold((0.0, 0.0), |(sw, sv), a| {
        let w = my * a.x - mx * a.y;
        let v = my * a.x + mx * a.y;
        (sw + w * w, sv + v * v)
    });
    if sv == 0.0 {
        return Err(ModelError::Domain(
            "concentration is undefined when every v vanishes".into(),
        ));
    }
    Ok(sw / sv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationAudit {
    pub initial_totals: (f64, f64),
    pub final_totals: (f64, f64),
    /// Totals identical bit for bit in every snapshot.
    pub exact: bool,
    /// Largest relative deviation of either sample mean from its initial
    /// value.
    pub max_relative_drift: f64,
}

pub fn conservation_audit(snapshots: &[Snapshot]) -> Result<ConservationAudit> {
    let first = snapshots.first().ok_or(ModelError::EmptySample)?;
    let t0 = sum_holdings(&first.agents);
    let mut exact = true;
    let mut drift = 0.0f64;
    let mut last = t0;
    for s in snapshots {
        let t = sum_holdings(&s.agents);
        exact &= t.0.to_bits() == t0.0.to_bits() && t.1.to_bits() == t0.1.to_bits();
        let rel = |now: f64, start: f64| {
            if start == 0.0 {
                now.abs()
            } else {
                (now / start - 1.0).abs()
            }
        };
        drift = drift.max(rel(t.0, t0.0)).max(rel(t.1, t0.1));
        last = t;
    }
    Ok(ConservationAudit {
        initial_totals: t0,
        final_totals: last,
        exact,
        max_relative_drift: drift,
    })
}
