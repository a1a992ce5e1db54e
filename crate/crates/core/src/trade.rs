//! Utility, admissibility and the microscopic trade rules.
//!
//! All rules are pure functions of the pre-trade state and an explicit
//! [`CoefficientDraw`]; randomness enters only through the `sample_*`
//! functions, which take the caller's RNG stream.

use rand::Rng;

use crate::error::{ModelError, Result};
use crate::lattice::{GoodsLattice, Quantum};
use crate::noise::NoiseSpec;

/// Tolerance on `alpha + beta = 1`.
pub const EXPONENT_SUM_TOL: f64 = 1e-12;

/// Shares `(p, q)` of the two goods held by one agent of a trading pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentPair {
    pub p: f64,
    pub q: f64,
}

impl PercentPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let pair = Self { p, q };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.p) && (0.0..=1.0).contains(&self.q) {
            Ok(())
        } else {
            Err(ModelError::Domain(format!(
                "percentages ({}, {}) outside the unit square",
                self.p, self.q
            )))
        }
    }

    /// The partner's shares, i.e. the point seen from the opposite corner of
    /// the box.
    pub fn rotated(&self) -> Self {
        Self {
            p: 1.0 - self.p,
            q: 1.0 - self.q,
        }
    }
}

/// Holdings of the two goods for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
}

impl AgentState {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        let a = Self { x, y };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() && self.x >= 0.0 && self.y >= 0.0 {
            Ok(())
        } else {
            Err(ModelError::Domain(format!(
                "holdings ({}, {}) must be finite and non-negative",
                self.x, self.y
            )))
        }
    }
}

/// Cobb-Douglas exponents with `alpha + beta = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityParams {
    alpha: f64,
    beta: f64,
}

impl UtilityParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
            return Err(ModelError::Domain(format!(
                "exponents must lie in (0,1), got alpha={alpha}, beta={beta}"
            )));
        }
        if (alpha + beta - 1.0).abs() > EXPONENT_SUM_TOL {
            return Err(ModelError::Domain(format!(
                "alpha + beta must equal 1, got {}",
                alpha + beta
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn from_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0 - alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Which percentage-space rule drives a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TradeRule {
    /// Noise proportional to the share gap `q - p`.
    #[default]
    Difference,
    /// Noise proportional to the shares themselves.
    Proportional,
}

/// Law of a randomized exponent `alpha`; `beta = 1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExponentLaw {
    Degenerate(f64),
    /// Uniform on the open interval `(low, high)`, `0 <= low < high <= 1`.
    Uniform {
        low: f64,
        high: f64,
    },
}

impl ExponentLaw {
    /// Closure of the support, `[inf alpha, sup alpha]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ExponentLaw::Degenerate(a) => (a, a),
            ExponentLaw::Uniform { low, high } => (low, high),
        }
    }

    pub fn mean(&self) -> f64 {
        let (lo, hi) = self.support();
        0.5 * (lo + hi)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ExponentLaw::Degenerate(a) if a > 0.0 && a < 1.0 => Ok(()),
            ExponentLaw::Uniform { low, high } if low >= 0.0 && high <= 1.0 && low < high => Ok(()),
            other => Err(ModelError::Config(format!(
                "exponent law {other:?} leaves (0,1)"
            ))),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ExponentLaw::Degenerate(a) => a,
            ExponentLaw::Uniform { low, high } => loop {
                let a = low + (high - low) * rng.random::<f64>();
                if a > low && a < high && a > 0.0 && a < 1.0 {
                    return a;
                }
            },
        }
    }
}

/// Full parameter set of a binary trade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeParams {
    lambda: f64,
    utility: UtilityParams,
    noise: NoiseSpec,
    rule: TradeRule,
    exponents: Option<ExponentLaw>,
}

impl TradeParams {
    pub fn new(lambda: f64, utility: UtilityParams, noise: NoiseSpec) -> Result<Self> {
        let tp = Self {
            lambda,
            utility,
            noise,
            rule: TradeRule::Difference,
            exponents: None,
        };
        tp.validate()?;
        Ok(tp)
    }

    pub fn with_rule(mut self, rule: TradeRule) -> Self {
        self.rule = rule;
        self
    }

    /// Draws `alpha` afresh for every trade. The fixed utility is kept as
    /// the fallback reported by [`TradeParams::utility`].
    pub fn with_exponent_law(mut self, law: ExponentLaw) -> Result<Self> {
        law.validate()?;
        self.exponents = Some(law);
        self.validate()?;
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn utility(&self) -> UtilityParams {
        self.utility
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn rule(&self) -> TradeRule {
        self.rule
    }

    pub fn exponent_law(&self) -> Option<ExponentLaw> {
        self.exponents
    }

    /// Mean of `alpha - beta` over the exponent law (or its fixed value).
    pub fn mean_exponent_gap(&self) -> f64 {
        match self.exponents {
            Some(law) => 2.0 * law.mean() - 1.0,
            None => self.utility.alpha - self.utility.beta,
        }
    }

    /// Largest noise half-width admissible for these `lambda` and exponents:
    /// `min(lambda beta, 1 - lambda beta, lambda alpha, 1 - lambda alpha)`
    /// over every realizable `alpha`.
    pub fn max_admissible_half_width(&self) -> f64 {
        let (lo, hi) = match self.exponents {
            Some(law) => law.support(),
            None => (self.utility.alpha, self.utility.alpha),
        };
        let l = self.lambda;
        // lambda*beta ranges over [l(1-hi), l(1-lo)], lambda*alpha over [l lo, l hi]
        (l * (1.0 - hi))
            .min(1.0 - l * (1.0 - lo))
            .min(l * lo)
            .min(1.0 - l * hi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(ModelError::Domain(format!(
                "0 < lambda <= 1 violated: lambda = {}",
                self.lambda
            )));
        }
        let bound = self.max_admissible_half_width();
        let hw = self.noise.half_width();
        if hw > bound {
            return Err(ModelError::Admissibility(format!(
                "noise half-width {hw} exceeds min(lambda beta, 1 - lambda beta, lambda alpha, 1 - lambda alpha) = {bound}"
            )));
        }
        if hw > 0.0 && bound <= 0.0 {
            return Err(ModelError::Admissibility(
                "exponent support touches the boundary; only zero noise is admissible".into(),
            ));
        }
        Ok(())
    }

    /// Parameters of the quasi-invariant scaling: `lambda -> eps lambda`,
    /// noise `-> sqrt(eps) noise`.
    pub fn quasi_invariant_scaled(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(ModelError::Config(format!(
                "scaling epsilon must lie in (0,1], got {epsilon}"
            )));
        }
        if epsilon == 1.0 {
            return Ok(*self);
        }
        let scaled = Self {
            lambda: self.lambda * epsilon,
            noise: self.noise.scaled(epsilon.sqrt())?,
            ..*self
        };
        scaled.validate().map_err(|e| {
            ModelError::Config(format!("scaled parameters at epsilon={epsilon}: {e}"))
        })?;
        Ok(scaled)
    }
}

/// Realized coefficients of one trade.
///
/// `rate_x = lambda beta + mu` drives the first good, `rate_y = lambda alpha
/// + mu_tilde` the second. `alpha` records the exponent used (it varies per
/// trade under an [`ExponentLaw`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientDraw {
    pub rate_x: f64,
    pub rate_y: f64,
    pub mu: f64,
    pub mu_tilde: f64,
    pub alpha: f64,
}

impl CoefficientDraw {
    /// Noise-free coefficients `(lambda beta, lambda alpha)`.
    pub fn deterministic(tp: &TradeParams) -> Self {
        Self::from_noise(tp.lambda, tp.utility, 0.0, 0.0)
    }

    pub fn from_noise(lambda: f64, utility: UtilityParams, mu: f64, mu_tilde: f64) -> Self {
        Self {
            rate_x: lambda * utility.beta + mu,
            rate_y: lambda * utility.alpha + mu_tilde,
            mu,
            mu_tilde,
            alpha: utility.alpha,
        }
    }

    /// Coefficients given directly; checked against `0 < rate_x < 1`,
    /// `0 < rate_y <= 1`.
    pub fn from_rates(rate_x: f64, rate_y: f64) -> Result<Self> {
        let cd = Self {
            rate_x,
            rate_y,
            mu: 0.0,
            mu_tilde: 0.0,
            alpha: f64::NAN,
        };
        cd.validate()?;
        Ok(cd)
    }

    pub fn is_admissible(&self) -> bool {
        self.rate_x > 0.0 && self.rate_x < 1.0 && self.rate_y > 0.0 && self.rate_y <= 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_admissible() {
            Ok(())
        } else {
            Err(ModelError::Admissibility(format!(
                "coefficients ({}, {}) outside 0 < A < 1, 0 < B <= 1",
                self.rate_x, self.rate_y
            )))
        }
    }

    /// Contraction factor of the share gap, `1 - A - B`.
    pub fn gap_factor(&self) -> f64 {
        1.0 - self.rate_x - self.rate_y
    }
}

/// Cobb-Douglas utility `p^alpha q^beta`.
pub fn utility(pp: PercentPair, up: UtilityParams) -> Result<f64> {
    pp.validate()?;
    if pp.p == 0.0 || pp.q == 0.0 {
        return Ok(0.0);
    }
    Ok(pp.p.powf(up.alpha) * pp.q.powf(up.beta))
}

/// Shares of agent `a` in the pooled goods of `a` and `b`.
pub fn percentages(a: AgentState, b: AgentState) -> Result<PercentPair> {
    a.validate()?;
    b.validate()?;
    let (tx, ty) = (a.x + b.x, a.y + b.y);
    if tx == 0.0 {
        return Err(ModelError::DegeneratePool { good: 1 });
    }
    if ty == 0.0 {
        return Err(ModelError::DegeneratePool { good: 2 });
    }
    Ok(PercentPair {
        p: (a.x / tx).min(1.0),
        q: (a.y / ty).min(1.0),
    })
}

/// Draws `(mu, mu_tilde)` i.i.d. from the noise law (and `alpha` from the
/// exponent law, if one is configured).
pub fn sample_coefficients<R: Rng + ?Sized>(tp: &TradeParams, rng: &mut R) -> CoefficientDraw {
    loop {
        let utility = match tp.exponents {
            Some(law) => UtilityParams {
                alpha: law.sample(rng),
                beta: 0.0,
            }
            .with_complement(),
            None => tp.utility,
        };
        let mu = tp.noise.sample(rng);
        let mu_tilde = tp.noise.sample(rng);
        let cd = CoefficientDraw::from_noise(tp.lambda, utility, mu, mu_tilde);
        // the support already guarantees this; rounding at the edge of the
        // support is the only way to land outside
        if cd.is_admissible() {
            return cd;
        }
    }
}

impl UtilityParams {
    fn with_complement(self) -> Self {
        Self {
            alpha: self.alpha,
            beta: 1.0 - self.alpha,
        }
    }
}

/// `alpha` drawn from the configured exponent law, `beta = 1 - alpha`.
pub fn sample_random_exponents<R: Rng + ?Sized>(
    tp: &TradeParams,
    rng: &mut R,
) -> Result<UtilityParams> {
    let law = tp
        .exponents
        .ok_or_else(|| ModelError::Config("no exponent randomization configured".into()))?;
    Ok(UtilityParams {
        alpha: law.sample(rng),
        beta: 0.0,
    }
    .with_complement())
}

/// `p* = p + A (q - p)`, `q* = q + B (p - q)`.
pub fn trade_percent(pp: PercentPair, cd: CoefficientDraw) -> Result<PercentPair> {
    pp.validate()?;
    cd.validate()?;
    let gap = pp.q - pp.p;
    Ok(PercentPair {
        p: (pp.p + cd.rate_x * gap).clamp(0.0, 1.0),
        q: (pp.q - cd.rate_y * gap).clamp(0.0, 1.0),
    })
}

/// Result of a rule that may have to be pushed back into its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped<T> {
    pub value: T,
    pub clamped: bool,
}

/// Proportional-noise variant with explicit noise values:
/// `p* = p (1 + mu) + lambda beta (q - p)`, `q* = q (1 + mu_tilde) +
/// lambda alpha (p - q)`, clamped to the unit square.
pub fn trade_percent_variant_with(
    pp: PercentPair,
    lambda: f64,
    utility: UtilityParams,
    mu: f64,
    mu_tilde: f64,
) -> Result<Clamped<PercentPair>> {
    pp.validate()?;
    let gap = pp.q - pp.p;
    let p = pp.p * (1.0 + mu) + lambda * utility.beta * gap;
    let q = pp.q * (1.0 + mu_tilde) - lambda * utility.alpha * gap;
    let value = PercentPair {
        p: p.clamp(0.0, 1.0),
        q: q.clamp(0.0, 1.0),
    };
    Ok(Clamped {
        clamped: value.p != p || value.q != q,
        value,
    })
}

pub fn trade_percent_variant<R: Rng + ?Sized>(
    pp: PercentPair,
    tp: &TradeParams,
    rng: &mut R,
) -> Result<Clamped<PercentPair>> {
    if tp.rule != TradeRule::Proportional {
        return Err(ModelError::Config(
            "trade_percent_variant requires the proportional rule".into(),
        ));
    }
    let cd = sample_coefficients(tp, rng);
    trade_percent_variant_with(
        pp,
        tp.lambda,
        UtilityParams::from_alpha(cd.alpha)?,
        cd.mu,
        cd.mu_tilde,
    )
}

fn pair_totals(a: AgentState, b: AgentState) -> Result<(f64, f64)> {
    a.validate()?;
    b.validate()?;
    let (tx, ty) = (a.x + b.x, a.y + b.y);
    if tx == 0.0 {
        return Err(ModelError::DegeneratePool { good: 1 });
    }
    if ty == 0.0 {
        return Err(ModelError::DegeneratePool { good: 2 });
    }
    Ok((tx, ty))
}

/// Goods-space Edgeworth trade.
///
/// Agent `a` is updated by the goods-space rule; `b` receives the remainder
/// of the pair totals, so `a'.x + b'.x == a.x + b.x` holds exactly in `f64`
/// (likewise for `y`). `a`'s holdings are rounded to a lattice fine enough
/// (`~1e-15` relative to the pair total) for the subtraction to be exact.
pub fn trade_goods(
    a: AgentState,
    b: AgentState,
    cd: CoefficientDraw,
) -> Result<(AgentState, AgentState)> {
    let (tx, ty) = pair_totals(a, b)?;
    let lattice = GoodsLattice {
        x: Quantum::for_total(tx).expect("positive total"),
        y: Quantum::for_total(ty).expect("positive total"),
    };
    trade_goods_on(a, b, cd, &lattice)
}

/// [`trade_goods`] on a caller-supplied lattice. When both agents already
/// sit on `lattice` and the totals are below its range, the outputs sit on
/// it too and every sum over an ensemble is preserved exactly.
pub fn trade_goods_on(
    a: AgentState,
    b: AgentState,
    cd: CoefficientDraw,
    lattice: &GoodsLattice,
) -> Result<(AgentState, AgentState)> {
    cd.validate()?;
    let (tx, ty) = pair_totals(a, b)?;
    let xa = a.x + cd.rate_x * (tx / ty * a.y - a.x);
    let ya = a.y + cd.rate_y * (ty / tx * a.x - a.y);
    Ok(settle(xa, ya, tx, ty, lattice))
}

/// Proportional-noise variant in goods space, via the shares of agent `a`.
pub fn trade_goods_variant_on(
    a: AgentState,
    b: AgentState,
    lambda: f64,
    cd: CoefficientDraw,
    lattice: &GoodsLattice,
) -> Result<Clamped<(AgentState, AgentState)>> {
    let (tx, ty) = pair_totals(a, b)?;
    let pp = PercentPair {
        p: (a.x / tx).min(1.0),
        q: (a.y / ty).min(1.0),
    };
    let moved = trade_percent_variant_with(
        pp,
        lambda,
        UtilityParams::from_alpha(cd.alpha)?,
        cd.mu,
        cd.mu_tilde,
    )?;
    Ok(Clamped {
        value: settle(moved.value.p * tx, moved.value.q * ty, tx, ty, lattice),
        clamped: moved.clamped,
    })
}

fn settle(xa: f64, ya: f64, tx: f64, ty: f64, lattice: &GoodsLattice) -> (AgentState, AgentState) {
    let xa = lattice.x.snap(xa).clamp(0.0, tx);
    let ya = lattice.y.snap(ya).clamp(0.0, ty);
    (
        AgentState { x: xa, y: ya },
        AgentState {
            x: tx - xa,
            y: ty - ya,
        },
    )
}

/// Mean-field (linear) trade against a market with means `(m_x, m_y)`:
/// `x* = x + A (m_x/m_y y - x)`, `y* = y + B (m_y/m_x x - y)`.
pub fn trade_mean_field(
    agent: AgentState,
    means: (f64, f64),
    cd: CoefficientDraw,
) -> Result<AgentState> {
    let (mx, my) = check_means(means)?;
    Ok(AgentState {
        x: agent.x + cd.rate_x * (mx / my * agent.y - agent.x),
        y: agent.y + cd.rate_y * (my / mx * agent.x - agent.y),
    })
}

/// Mean-field form of the proportional variant:
/// `x* = x (1 + mu) + lambda beta (m_x/m_y y - x)` and symmetrically for `y`.
/// Negative outcomes are clamped to zero.
pub fn trade_mean_field_variant(
    agent: AgentState,
    means: (f64, f64),
    lambda: f64,
    cd: CoefficientDraw,
) -> Result<Clamped<AgentState>> {
    let (mx, my) = check_means(means)?;
    let beta = 1.0 - cd.alpha;
    let x = agent.x * (1.0 + cd.mu) + lambda * beta * (mx / my * agent.y - agent.x);
    let y = agent.y * (1.0 + cd.mu_tilde) + lambda * cd.alpha * (my / mx * agent.x - agent.y);
    Ok(Clamped {
        value: AgentState {
            x: x.max(0.0),
            y: y.max(0.0),
        },
        clamped: x < 0.0 || y < 0.0,
    })
}

fn check_means((mx, my): (f64, f64)) -> Result<(f64, f64)> {
    if mx > 0.0 && my > 0.0 && mx.is_finite() && my.is_finite() {
        Ok((mx, my))
    } else {
        Err(ModelError::DegenerateMeans {
            mean_x: mx,
            mean_y: my,
        })
    }
}

/// Lower bound on the post-trade utility obtained from the first-order
/// expansion in `lambda`:
/// `U(p, q) + alpha beta (p - q)^2 p^(alpha-1) q^(beta-1) lambda`.
///
/// The bound is only valid where the utility is convex along the trade
/// path; Cobb-Douglas is concave there for `alpha = beta`, so it generally
/// fails. Kept as a measurable check.
pub fn first_order_utility_bound(pp: PercentPair, up: UtilityParams, lambda: f64) -> Result<f64> {
    let u = utility(pp, up)?;
    let gap = pp.p - pp.q;
    Ok(u + up.alpha
        * up.beta
        * gap
        * gap
        * pp.p.powf(up.alpha - 1.0)
        * pp.q.powf(up.beta - 1.0)
        * lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::{prop_assert, prop_assert_eq, prop_assume, proptest, Strategy};

    fn half() -> UtilityParams {
        UtilityParams::from_alpha(0.5).unwrap()
    }

    #[test]
    fn utility_examples() {
        let pp = |p, q| PercentPair::new(p, q).unwrap();
        let u = UtilityParams::from_alpha(0.3).unwrap();
        assert_eq!(utility(pp(1.0, 1.0), u).unwrap(), 1.0);
        assert_eq!(utility(pp(0.0, 0.7), half()).unwrap(), 0.0);
        assert!((utility(pp(0.25, 0.16), half()).unwrap() - 0.2).abs() < 1e-15);
        assert!(utility(PercentPair { p: 1.2, q: 0.5 }, half()).is_err());
    }

    #[test]
    fn utility_params_reject_bad_sums() {
        assert!(UtilityParams::new(0.5, 0.5 + 1e-13).is_ok());
        assert!(UtilityParams::new(0.5, 0.6).is_err());
        assert!(UtilityParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn percentage_examples() {
        let st = |x, y| AgentState::new(x, y).unwrap();
        assert_eq!(
            percentages(st(1.0, 2.0), st(3.0, 2.0)).unwrap(),
            PercentPair { p: 0.25, q: 0.5 }
        );
        assert_eq!(
            percentages(st(1.7, 0.3), st(1.7, 0.3)).unwrap(),
            PercentPair { p: 0.5, q: 0.5 }
        );
        assert_eq!(
            percentages(st(0.0, 5.0), st(4.0, 5.0)).unwrap(),
            PercentPair { p: 0.0, q: 0.5 }
        );
        assert_eq!(
            percentages(st(0.0, 1.0), st(0.0, 5.0)),
            Err(ModelError::DegeneratePool { good: 1 })
        );
    }

    #[test]
    fn zero_noise_coefficients() {
        let tp = TradeParams::new(0.5, half(), NoiseSpec::zero()).unwrap();
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            let cd = sample_coefficients(&tp, &mut rng);
            assert_eq!((cd.rate_x, cd.rate_y), (0.25, 0.25));
        }
    }

    #[test]
    fn coefficient_support() {
        let tp = TradeParams::new(
            1.0,
            UtilityParams::new(0.9, 0.1).unwrap(),
            NoiseSpec::uniform(0.05).unwrap(),
        )
        .unwrap();
        let mut rng = stream(2, 0);
        for _ in 0..100_000 {
            let cd = sample_coefficients(&tp, &mut rng);
            assert!(cd.rate_x > 0.05 && cd.rate_x < 0.15, "{cd:?}");
            assert!(cd.rate_y > 0.85 && cd.rate_y < 0.95, "{cd:?}");
        }
    }

    #[test]
    fn coefficient_mean_is_lambda_beta() {
        let tp = TradeParams::new(
            0.6,
            UtilityParams::from_alpha(0.3).unwrap(),
            NoiseSpec::uniform(0.1).unwrap(),
        )
        .unwrap();
        let mut rng = stream(3, 0);
        let n = 1_000_000;
        let sum: f64 = (0..n)
            .map(|_| sample_coefficients(&tp, &mut rng).rate_x)
            .sum();
        let se = (tp.noise().variance() / n as f64).sqrt();
        assert!((sum / n as f64 - 0.6 * 0.7).abs() < 3.0 * se);
    }

    #[test]
    fn inadmissible_noise_is_rejected() {
        // min(0.25, 0.75, 0.25, 0.75) = 0.25
        assert!(TradeParams::new(0.5, half(), NoiseSpec::uniform(0.25).unwrap()).is_ok());
        let err = TradeParams::new(0.5, half(), NoiseSpec::uniform(0.26).unwrap()).unwrap_err();
        assert!(matches!(err, ModelError::Admissibility(_)));
        assert!(TradeParams::new(1.5, half(), NoiseSpec::zero()).is_err());
        assert!(TradeParams::new(0.0, half(), NoiseSpec::zero()).is_err());
    }

    #[test]
    fn trade_percent_examples() {
        let pp = PercentPair::new(0.2, 0.8).unwrap();
        let full = CoefficientDraw::from_rates(0.5, 0.5).unwrap();
        let out = trade_percent(pp, full).unwrap();
        assert!((out.p - 0.5).abs() < 1e-15 && (out.q - 0.5).abs() < 1e-15);
        let quarter = CoefficientDraw::from_rates(0.25, 0.25).unwrap();
        let out = trade_percent(pp, quarter).unwrap();
        assert!((out.p - 0.35).abs() < 1e-15 && (out.q - 0.65).abs() < 1e-15);
        let fixed = PercentPair::new(0.3, 0.3).unwrap();
        assert_eq!(trade_percent(fixed, quarter).unwrap(), fixed);
    }

    #[test]
    fn trade_goods_examples() {
        let cd = CoefficientDraw::from_rates(0.25, 0.25).unwrap();
        let (a, b) = trade_goods(
            AgentState::new(1.0, 2.0).unwrap(),
            AgentState::new(3.0, 2.0).unwrap(),
            cd,
        )
        .unwrap();
        assert_eq!((a.x, a.y, b.x, b.y), (1.25, 1.75, 2.75, 2.25));

        let same = AgentState::new(2.0, 2.0).unwrap();
        let (a, b) = trade_goods(same, same, cd).unwrap();
        assert_eq!((a, b), (same, same));
    }

    #[test]
    fn full_intensity_trade_reaches_contract_curve() {
        let tp = TradeParams::new(1.0, half(), NoiseSpec::zero()).unwrap();
        let cd = CoefficientDraw::deterministic(&tp);
        let mut rng = stream(4, 0);
        for _ in 0..1000 {
            let a = AgentState::new(rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0).unwrap();
            let b = AgentState::new(rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0).unwrap();
            let (tx, ty) = (a.x + b.x, a.y + b.y);
            let (a2, b2) = trade_goods(a, b, cd).unwrap();
            for s in [a2, b2] {
                assert!((ty * s.x - tx * s.y).abs() <= 1e-12 * tx * ty, "{s:?}");
            }
        }
    }

    #[test]
    fn degenerate_pool_errors() {
        let cd = CoefficientDraw::from_rates(0.25, 0.25).unwrap();
        let z = AgentState::new(0.0, 1.0).unwrap();
        assert_eq!(
            trade_goods(z, z, cd),
            Err(ModelError::DegeneratePool { good: 1 })
        );
    }

    #[test]
    fn variant_examples() {
        let pp = PercentPair::new(0.5, 0.5).unwrap();
        let out = trade_percent_variant_with(pp, 0.5, half(), 0.1, -0.1).unwrap();
        assert!((out.value.p - 0.55).abs() < 1e-15);
        assert!((out.value.q - 0.45).abs() < 1e-15);
        assert!(!out.clamped);

        let tp = TradeParams::new(0.5, half(), NoiseSpec::zero())
            .unwrap()
            .with_rule(TradeRule::Proportional);
        let out = trade_percent_variant(pp, &tp, &mut stream(5, 0)).unwrap();
        assert_eq!(out.value, pp);

        let over = trade_percent_variant_with(
            PercentPair::new(0.95, 0.95).unwrap(),
            0.5,
            half(),
            0.2,
            0.0,
        )
        .unwrap();
        assert!(over.clamped);
        assert_eq!(over.value.p, 1.0);
    }

    #[test]
    fn variant_is_equal_only_in_the_mean() {
        let tp = TradeParams::new(0.5, half(), NoiseSpec::uniform(0.2).unwrap())
            .unwrap()
            .with_rule(TradeRule::Proportional);
        let pp = PercentPair::new(0.4, 0.4).unwrap();
        let mut rng = stream(6, 0);
        let n = 1_000_000;
        let (mut sd, mut sd2, mut unequal) = (0.0, 0.0, 0usize);
        for _ in 0..n {
            let out = trade_percent_variant(pp, &tp, &mut rng).unwrap().value;
            let d = out.p - out.q;
            sd += d;
            sd2 += d * d;
            if d != 0.0 {
                unequal += 1;
            }
        }
        let mean = sd / n as f64;
        let se = ((sd2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean gap {mean} vs se {se}");
        assert!(unequal > n / 2);
    }

    #[test]
    fn random_exponent_examples() {
        let base = TradeParams::new(0.5, half(), NoiseSpec::zero()).unwrap();
        let mut rng = stream(7, 0);
        let fixed = base
            .with_exponent_law(ExponentLaw::Degenerate(0.5))
            .unwrap();
        for _ in 0..10 {
            let u = sample_random_exponents(&fixed, &mut rng).unwrap();
            assert_eq!((u.alpha(), u.beta()), (0.5, 0.5));
        }
        assert!(sample_random_exponents(&base, &mut rng).is_err());

        for ((low, high), expected) in [((0.2, 0.8), 0.0), ((0.4, 1.0), 0.4)] {
            let tp = base
                .with_exponent_law(ExponentLaw::Uniform { low, high })
                .unwrap();
            let n = 1_000_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let u = sample_random_exponents(&tp, &mut rng).unwrap();
                assert!(u.alpha() > 0.0 && u.alpha() < 1.0 && u.beta() > 0.0);
                let d = u.alpha() - u.beta();
                s += d;
                s2 += d * d;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected}");
        }
        assert!(base
            .with_exponent_law(ExponentLaw::Uniform {
                low: -0.1,
                high: 0.5
            })
            .is_err());
    }

    #[test]
    fn boundary_exponent_law_forces_zero_noise() {
        let noisy = TradeParams::new(0.5, half(), NoiseSpec::uniform(0.01).unwrap()).unwrap();
        assert!(noisy
            .with_exponent_law(ExponentLaw::Uniform {
                low: 0.4,
                high: 1.0
            })
            .is_err());
    }

    #[test]
    fn mean_field_examples() {
        let cd = CoefficientDraw::from_rates(0.25, 0.25).unwrap();
        let out = trade_mean_field(AgentState::new(2.0, 1.0).unwrap(), (1.0, 1.0), cd).unwrap();
        assert_eq!((out.x, out.y), (1.75, 1.25));
        let prop = AgentState::new(3.0, 1.5).unwrap();
        assert_eq!(trade_mean_field(prop, (2.0, 1.0), cd).unwrap(), prop);
        assert!(trade_mean_field(prop, (0.0, 1.0), cd).is_err());
    }

    #[test]
    fn first_order_bound_fails_for_concave_paths() {
        // alpha = beta = 1/2, p = 0.1, q = 0.9, lambda = 1: U* = 0.5 while
        // the bound asks for 0.3 + 0.16 / 0.3
        let pp = PercentPair::new(0.1, 0.9).unwrap();
        let tp = TradeParams::new(1.0, half(), NoiseSpec::zero()).unwrap();
        let post = trade_percent(pp, CoefficientDraw::deterministic(&tp)).unwrap();
        let u_post = utility(post, half()).unwrap();
        let bound = first_order_utility_bound(pp, half(), 1.0).unwrap();
        assert!((u_post - 0.5).abs() < 1e-15);
        assert!((bound - (0.3 + 0.16 / 0.3)).abs() < 1e-12);
        assert!(u_post < bound);
    }

    fn deterministic_trade() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        (
            0.001f64..0.999,
            0.001f64..0.999,
            0.01f64..0.99,
            0.01f64..=1.0,
        )
    }

    proptest! {
        #[test]
        fn deterministic_trade_raises_both_utilities((p, q, alpha, lambda) in deterministic_trade()) {
            prop_assume!((p - q).abs() > 1e-6);
            let up = UtilityParams::from_alpha(alpha).unwrap();
            let tp = TradeParams::new(lambda, up, NoiseSpec::zero()).unwrap();
            let pp = PercentPair::new(p, q).unwrap();
            let post = trade_percent(pp, CoefficientDraw::deterministic(&tp)).unwrap();
            prop_assert!(utility(post, up).unwrap() > utility(pp, up).unwrap());
            prop_assert!(utility(post.rotated(), up).unwrap() > utility(pp.rotated(), up).unwrap());
        }

        #[test]
        fn square_closure_fixed_point_and_gap((p, q) in (0.0f64..=1.0, 0.0f64..=1.0),
                                              (a, b) in (1e-9f64..1.0 - 1e-9, 1e-9f64..=1.0)) {
            let cd = CoefficientDraw::from_rates(a, b).unwrap();
            let pp = PercentPair::new(p, q).unwrap();
            let out = trade_percent(pp, cd).unwrap();
            prop_assert!(out.validate().is_ok());
            prop_assert!(((out.p - out.q) - cd.gap_factor() * (p - q)).abs() <= 1e-12);
            let fixed = PercentPair::new(p, p).unwrap();
            let out = trade_percent(fixed, cd).unwrap();
            prop_assert!((out.p - p).abs() <= 1e-15 && (out.q - p).abs() <= 1e-15);
        }

        #[test]
        fn goods_trade_conserves_pair_totals(xa in 0.0f64..10.0, ya in 0.0f64..10.0,
                                             xb in 0.0f64..10.0, yb in 0.0f64..10.0,
                                             a in 1e-6f64..0.999, b in 1e-6f64..=1.0) {
            prop_assume!(xa + xb > 0.0 && ya + yb > 0.0);
            let cd = CoefficientDraw::from_rates(a, b).unwrap();
            let (sa, sb) = (AgentState::new(xa, ya).unwrap(), AgentState::new(xb, yb).unwrap());
            let (na, nb) = trade_goods(sa, sb, cd).unwrap();
            prop_assert_eq!(na.x + nb.x, xa + xb);
            prop_assert_eq!(na.y + nb.y, ya + yb);
            prop_assert!(na.validate().is_ok() && nb.validate().is_ok());
        }
    }
}
