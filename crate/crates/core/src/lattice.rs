//! Power-of-two lattices that make goods conservation exact in `f64`.
//!
//! If every holding of a good is an integer multiple of a quantum `q = 2^k`
//! and the total stays below `2^53 q`, then every partial sum of holdings is
//! exactly representable, so floating-point addition of holdings is exact in
//! any order. A pair trade that rounds one post-trade holding to the lattice
//! and gives the partner the remainder of the pair total therefore leaves
//! the ensemble total bit-identical.

use crate::error::{ModelError, Result};

/// Spacing of a goods lattice; always a power of two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantum(f64);

/// Bits of headroom below 2^53 kept between the total and the lattice range.
const HEADROOM_BITS: i32 = 51;

impl Quantum {
    /// Quantum for a good whose total is `total`: `2^(floor(log2 total) - 51)`,
    /// leaving a factor of four of headroom.
    pub fn for_total(total: f64) -> Option<Self> {
        if !(total.is_finite() && total > 0.0) {
            return None;
        }
        let exp = floor_log2(total);
        Some(Quantum(pow2(exp - HEADROOM_BITS)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Nearest lattice point; exact because `q` is a power of two.
    pub fn snap(self, v: f64) -> f64 {
        (v / self.0).round() * self.0
    }

    pub fn contains(self, v: f64) -> bool {
        self.snap(v) == v
    }
}

/// One quantum per good.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodsLattice {
    pub x: Quantum,
    pub y: Quantum,
}

fn floor_log2(v: f64) -> i32 {
    let bits = v.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // subnormal
        v.log2().floor() as i32
    } else {
        biased - 1023
    }
}

fn pow2(exp: i32) -> f64 {
    if (-1022..=1023).contains(&exp) {
        f64::from_bits(((exp + 1023) as u64) << 52)
    } else {
        2f64.powi(exp)
    }
}

/// Snaps `values` onto the lattice of their own total, repeating until the
/// lattice no longer moves. The result is idempotent: snapping it again is a
/// no-op. Negative inputs are rejected.
pub fn snap_in_place(values: &mut [f64]) -> Result<Quantum> {
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(ModelError::Domain(
            "holdings must be finite and non-negative".into(),
        ));
    }
    // converges in at most three passes: the quantum can move up once and
    // back down once, and a finer lattice contains a coarser one
    for _ in 0..8 {
        let total: f64 = values.iter().sum();
        let q = Quantum::for_total(total).ok_or(ModelError::DegeneratePool { good: 0 })?;
        let mut changed = false;
        for v in values.iter_mut() {
            let s = q.snap(*v);
            if s != *v {
                *v = s;
                changed = true;
            }
        }
        if !changed {
            return Ok(q);
        }
    }
    Err(ModelError::Domain("lattice snapping did not settle".into()))
}
