//! Zero-mean trade noise laws for the coefficients `mu` and `mu_tilde`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Degenerate law at zero.
    Zero,
    /// Uniform on the open interval `(-delta, delta)`.
    Uniform,
    /// Centered normal with standard deviation `scale`, conditioned on
    /// `|z| < delta`.
    TruncatedGaussian,
}

/// A symmetric, compactly supported noise law.
///
/// Compact support makes admissibility a static check on `half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    half_width: f64,
    scale: f64,
    variance: f64,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            kind: NoiseKind::Zero,
            half_width: 0.0,
            scale: 0.0,
            variance: 0.0,
        }
    }

    pub fn uniform(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(ModelError::Domain(format!(
                "uniform half-width must be finite and >= 0, got {delta}"
            )));
        }
        if delta == 0.0 {
            return Ok(Self::zero());
        }
        Ok(Self {
            kind: NoiseKind::Uniform,
            half_width: delta,
            scale: delta,
            variance: delta * delta / 3.0,
        })
    }

    pub fn truncated_gaussian(scale: f64, delta: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && delta.is_finite() && delta > 0.0) {
            return Err(ModelError::Domain(format!(
                "truncated gaussian needs scale > 0 and half-width > 0, got ({scale}, {delta})"
            )));
        }
        Ok(Self {
            kind: NoiseKind::TruncatedGaussian,
            half_width: delta,
            scale,
            variance: truncated_normal_variance(scale, delta),
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// Supremum of `|mu|` over the support.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn is_zero(&self) -> bool {
        self.kind == NoiseKind::Zero
    }

    /// Multiplies every draw by `factor` (support and scale alike).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match self.kind {
            NoiseKind::Zero => Ok(*self),
            NoiseKind::Uniform => Self::uniform(self.half_width * factor),
            NoiseKind::TruncatedGaussian => {
                Self::truncated_gaussian(self.scale * factor, self.half_width * factor)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::Uniform => loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    return (2.0 * u - 1.0) * self.half_width;
                }
            },
            NoiseKind::TruncatedGaussian => {
                let c = self.half_width / self.scale;
                if c >= 1.0 {
                    loop {
                        let z: f64 = StandardNormal.sample(rng);
                        if z.abs() < c {
                            return z * self.scale;
                        }
                    }
                } else {
                    // narrow window: uniform proposal accepts with prob >= exp(-1/2)
                    loop {
                        let u: f64 = rng.random();
                        if u == 0.0 {
                            continue;
                        }
                        let z = (2.0 * u - 1.0) * c;
                        let accept: f64 = rng.random();
                        if accept < (-0.5 * z * z).exp() {
                            return z * self.scale;
                        }
                    }
                }
            }
        }
    }
}

/// Variance of `N(0, scale^2)` conditioned on `|z| < delta`, by composite
/// Simpson quadrature on the standardized window.
fn truncated_normal_variance(scale: f64, delta: f64) -> f64 {
    let c = delta / scale;
    let n = 4000;
    let h = c / n as f64;
    let (mut mass, mut second) = (0.0, 0.0);
    for i in 0..=n {
        let z = i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let density = (-0.5 * z * z).exp();
        mass += w * density;
        second += w * z * z * density;
    }
    scale * scale * second / mass
}
