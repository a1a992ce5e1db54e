//! Pareto tail diagnostics: Hill estimator with bootstrap errors, a rank
//! regression cross-check, and moment growth rates.

use rand::Rng;

use crate::analysis::stats::linear_fit;
use crate::error::{ModelError, Result};
use crate::fokker_planck::{FPParams, FpTrajectory};

/// Smallest sample accepted by [`tail_index`].
pub const MIN_TAIL_SAMPLE: usize = 1000;
const NARROW: f64 = 0.01;
const WIDE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillEstimate {
    pub index: f64,
    pub std_error: f64,
    /// Number of order statistics used.
    pub k: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub sample_size: usize,
    /// Hill estimate at the requested tail fraction.
    pub hill: HillEstimate,
    /// Hill estimate over the top 1%.
    pub narrow: HillEstimate,
    /// Hill estimate over the top 10%.
    pub wide: HillEstimate,
    /// Index from regressing log rank on log value over the requested tail.
    pub rank_index: f64,
    /// The narrow estimate exceeds the wide one by more than three combined
    /// standard errors: the estimate keeps rising deeper in the tail, which
    /// a power law does not do.
    pub thin_tailed: bool,
    pub growth: Option<GrowthReport>,
}

impl TailReport {
    pub fn with_growth(mut self, growth: GrowthReport) -> Self {
        self.growth = Some(growth);
        self
    }
}

/// Hill estimate `1 / mean(ln(X_(i) / X_(k+1)))` over the top `k`
/// observations. `desc` must be sorted in decreasing order.
fn hill_sorted(desc: &[f64], k: usize) -> f64 {
    let threshold = desc[k].ln();
    let mean = desc[..k].iter().map(|x| x.ln() - threshold).sum::<f64>() / k as f64;
    1.0 / mean
}

fn tail_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).floor() as usize).clamp(1, n - 1)
}

/// The largest `m + 1` values of `sample`, in decreasing order.
fn top_desc(mut sample: Vec<f64>, m: usize) -> Vec<f64> {
    let n = sample.len();
    if m + 1 < n {
        sample.select_nth_unstable_by(m, |a, b| b.total_cmp(a));
        sample.truncate(m + 1);
    }
    sample.sort_unstable_by(|a, b| b.total_cmp(a));
    sample
}

fn check_sample(sample: &[f64], fraction: f64) -> Result<()> {
    if sample.len() < MIN_TAIL_SAMPLE {
        return Err(ModelError::InsufficientSample {
            needed: MIN_TAIL_SAMPLE,
            got: sample.len(),
        });
    }
    if !(fraction > 0.0 && fraction <= 0.2) {
        return Err(ModelError::Domain(format!(
            "tail fraction must lie in (0, 0.2], got {fraction}"
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::Domain(
            "tail sample contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Hill estimate without a standard error.
pub fn hill(sample: &[f64], fraction: f64) -> Result<HillEstimate> {
    check_sample(sample, fraction)?;
    let k = tail_count(sample.len(), fraction);
    let desc = top_desc(sample.to_vec(), k);
    if desc[k] <= 0.0 {
        return Err(ModelError::Domain(
            "the tail threshold must be positive".into(),
        ));
    }
    Ok(HillEstimate {
        index: hill_sorted(&desc, k),
        std_error: f64::NAN,
        k,
        fraction,
    })
}

/// Hill estimates at `fraction`, 1% and 10%, each with a bootstrap standard
/// error from `resamples` resamples.
pub fn tail_index<R: Rng + ?Sized>(
    sample: &[f64],
    fraction: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<TailReport> {
    check_sample(sample, fraction)?;
    if resamples < 2 {
        return Err(ModelError::InsufficientSample {
            needed: 2,
            got: resamples,
        });
    }
    let n = sample.len();
    let fractions = [fraction, NARROW, WIDE];
    let ks = fractions.map(|f| tail_count(n, f));
    let deepest = *ks.iter().max().unwrap();

    let desc = top_desc(sample.to_vec(), deepest);
    if desc[deepest] <= 0.0 {
        return Err(ModelError::Domain(
            "the tail threshold must be positive".into(),
        ));
    }
    let point = ks.map(|k| hill_sorted(&desc, k));

    let mut sums = [0.0; 3];
    let mut sums_sq = [0.0; 3];
    let mut buf = Vec::with_capacity(n);
    for _ in 0..resamples {
        buf.clear();
        buf.extend((0..n).map(|_| sample[rng.random_range(0..n)]));
        let d = top_desc(std::mem::take(&mut buf), deepest);
        for (i, &k) in ks.iter().enumerate() {
            let h = if d[k] > 0.0 {
                hill_sorted(&d, k)
            } else {
                f64::NAN
            };
            sums[i] += h;
            sums_sq[i] += h * h;
        }
        buf = d;
        buf.reserve(n);
    }
    let b = resamples as f64;
    let se = |i: usize| {
        let mean = sums[i] / b;
        ((sums_sq[i] - b * mean * mean).max(0.0) / (b - 1.0)).sqrt()
    };
    let est = |i: usize| HillEstimate {
        index: point[i],
        std_error: se(i),
        k: ks[i],
        fraction: fractions[i],
    };
    let (hill, narrow, wide) = (est(0), est(1), est(2));
    let thin_tailed = narrow.index - wide.index
        > 3.0 * (narrow.std_error.powi(2) + wide.std_error.powi(2)).sqrt();

    let k = ks[0];
    let log_x: Vec<f64> = desc[..k].iter().map(|x| x.ln()).collect();
    let log_rank: Vec<f64> = (1..=k).map(|i| (i as f64 / n as f64).ln()).collect();
    let rank_index = linear_fit(&log_x, &log_rank)
        .map(|f| -f.slope)
        .unwrap_or(f64::NAN);

    Ok(TailReport {
        sample_size: n,
        hill,
        narrow,
        wide,
        rank_index,
        thin_tailed,
        growth: None,
    })
}

/// Exponential growth rates of moments along a Fokker-Planck run.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub orders: Vec<f64>,
    /// `2 lambda / sigma2_sq`.
    pub threshold: f64,
    /// Fitted rate of `ln E|w|^(1+r)` per order.
    pub w_rates: Vec<f64>,
    /// Fitted rate of `ln E v^(1+r)` per order.
    pub v_rates: Vec<f64>,
    /// `(1+r)(r sigma2_sq / 2 - lambda)` per order.
    pub predicted_w_rates: Vec<f64>,
}

impl GrowthReport {
    /// Every fitted `w` rate has the sign of its prediction.
    pub fn signs_agree(&self) -> bool {
        self.w_rates
            .iter()
            .zip(&self.predicted_w_rates)
            .all(|(a, b)| *b == 0.0 || a.signum() == b.signum())
    }
}

pub fn growth_report(traj: &FpTrajectory, fp: &FPParams) -> Result<GrowthReport> {
    let tau: Vec<f64> = traj.moments.iter().map(|m| m.tau).collect();
    let fit = |pick: &dyn Fn(usize) -> Vec<f64>, o: usize| -> Result<f64> {
        let logs: Vec<f64> = pick(o).iter().map(|m| m.ln()).collect();
        Ok(linear_fit(&tau, &logs)?.slope)
    };
    let w_of = |o: usize| traj.moments.iter().map(|m| m.w[o]).collect::<Vec<_>>();
    let v_of = |o: usize| traj.moments.iter().map(|m| m.v[o]).collect::<Vec<_>>();
    let mut w_rates = Vec::new();
    let mut v_rates = Vec::new();
    for o in 0..traj.orders.len() {
        w_rates.push(fit(&w_of, o)?);
        v_rates.push(fit(&v_of, o)?);
    }
    Ok(GrowthReport {
        orders: traj.orders.clone(),
        threshold: fp.critical_order(),
        w_rates,
        v_rates,
        predicted_w_rates: traj.orders.iter().map(|&r| fp.moment_rate(r)).collect(),
    })
}
