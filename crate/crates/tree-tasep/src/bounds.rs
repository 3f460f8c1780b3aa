//! Closed-form bounds on when particles decouple and when the root current
//! is of order n.
//!
//! The quantities computed here are pure formula evaluations: the branching
//! constant c_o, the decay horizon 𝒟ₙ, the disentanglement generation ℳₙ,
//! the time window [t_low, t_up] in which the current reaches order n, and
//! the dual generation window for a fixed observation time.
//!
//! Conventions, fixed across the crate:
//! - Capital-R waiting sums run over vertex out-rates: R_{a,b} sums the
//!   reciprocals of per-generation extreme out-rates, inclusively.
//! - Lowercase per-generation extremes r_ℓ refer to single edge rates.
//! - log_{1+ε} and log₂ are explicit where they appear; every other log is
//!   natural.

use serde::Serialize;

use crate::gw_tree::OffspringLaw;
use crate::rate_field::{
    check_ed, DecayClass, GenerationAggregates, LevelRates, RateError, RateFamily,
    SlowingSequence, SymbolicLevels,
};

/// Errors from bound evaluation.
#[derive(Debug, thiserror::Error)]
pub enum BoundError {
    /// An input is outside the admissible range.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A tabulated family needs a declared 𝒟ₙ regime to select a bound case.
    #[error("decay class not declared; tabulated rates cannot infer it")]
    MissingDecayClass,
    /// The computation needs rate data beyond the tabulated horizon.
    #[error("need generation {needed} but rates are tabulated to {horizon}")]
    InsufficientHorizon {
        /// First generation that would be required.
        needed: u64,
        /// Largest tabulated generation.
        horizon: u64,
    },
    /// A tabulated rate sequence is non-monotone near its horizon, so no
    /// decay statement extends beyond the observed range.
    #[error("rate table is non-monotone near its horizon; cannot certify decay beyond it")]
    Unclassifiable,
    /// A limit required by an asymptotic report falls outside its range.
    #[error("limit {name} = {value} outside the admissible range")]
    LimitOutOfRange {
        /// Which limit failed.
        name: &'static str,
        /// The evaluated value.
        value: f64,
    },
    /// An underlying rate-field operation failed.
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// The decay horizon 𝒟ₙ: the first generation after which maximal edge
/// rates stay below the disentanglement threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DnValue {
    /// The horizon, as a real number (it can exceed u64 for slow decay).
    Finite(f64),
    /// No generation satisfies the threshold (constant rates).
    Unbounded,
    /// The threshold is not yet met within the tabulated horizon.
    BeyondHorizon {
        /// Largest tabulated generation.
        horizon: u64,
    },
}

/// Natural log of the 𝒟ₙ threshold n^(−(2 + c_low·c_o)) (ln n)^(−3).
fn ln_dn_threshold(n: u64, c_low: f64, c_o: f64) -> Result<f64, BoundError> {
    if n < 2 {
        return Err(BoundError::InvalidInput(format!(
            "particle count must be at least 2, got {n}"
        )));
    }
    let ln_n = (n as f64).ln();
    Ok(-(2.0 + c_low * c_o) * ln_n - 3.0 * ln_n.ln())
}

/// Branching constant used by the disentanglement bound.
///
/// For minimal offspring count above one this is 1/ln d_min. For trees with
/// single-child vertices it is (5 + log₂ 𝔪̃)/(ln(1+p₁) − ln(2p₁)), where
/// 𝔪̃ is the mean offspring count conditioned on branching.
pub fn compute_c_o(d_min: u32, p1: f64, m_tilde: f64) -> Result<f64, BoundError> {
    if d_min == 0 {
        return Err(BoundError::InvalidInput(
            "minimal offspring count must be at least 1".into(),
        ));
    }
    if d_min > 1 {
        return Ok(1.0 / f64::from(d_min).ln());
    }
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(BoundError::InvalidInput(format!(
            "single-child probability must lie in (0, 1) when d_min = 1, got {p1}"
        )));
    }
    if !(m_tilde >= 2.0) {
        return Err(BoundError::InvalidInput(format!(
            "conditioned branching mean must be at least 2, got {m_tilde}"
        )));
    }
    Ok((5.0 + m_tilde.log2()) / ((1.0 + p1).ln() - (2.0 * p1).ln()))
}

/// Convenience form of [`compute_c_o`] reading its inputs off a law.
pub fn c_o_for_law(law: &OffspringLaw) -> Result<f64, BoundError> {
    compute_c_o(law.d_min(), law.p1(), law.conditioned_mean())
}

/// Computes the decay horizon 𝒟ₙ.
///
/// Symbolic families are resolved in closed form using the monotonicity of
/// their per-generation maximal edge rate. Tabulated rates are scanned;
/// `table` supplies their per-generation maxima. A tabulated answer
/// certifies the threshold on the observed range and extrapolates only when
/// the observed tail is non-increasing.
pub fn compute_d_n(
    family: &RateFamily,
    n: u64,
    c_low: f64,
    c_o: f64,
    table: Option<&GenerationAggregates>,
) -> Result<DnValue, BoundError> {
    family.validate()?;
    let ln_thr = ln_dn_threshold(n, c_low, c_o)?;
    match family {
        RateFamily::Constant => Ok(DnValue::Unbounded),
        RateFamily::ExponentialHomogeneous { d } => {
            let m = -ln_thr / f64::from(*d - 1).ln() - 1.0;
            Ok(DnValue::Finite(m.max(0.0).ceil()))
        }
        RateFamily::Slowed {
            d,
            g: SlowingSequence::Geometric { ratio },
        } => {
            let per_level = f64::from(*d - 1).ln() + (1.0 / ratio).ln();
            let m = (-ln_thr - f64::from(*d - 1).ln()) / per_level;
            Ok(DnValue::Finite(m.max(0.0).ceil()))
        }
        RateFamily::Polynomial { p } => {
            let m = (-ln_thr / p).exp() - 1.0;
            Ok(DnValue::Finite(m.max(0.0).ceil()))
        }
        RateFamily::Slowed {
            g: SlowingSequence::Table(values),
            ..
        } => {
            let maxima: Vec<f64> = (0..values.len() as u64)
                .map(|l| family.edge_rate_at(l).expect("within table"))
                .collect();
            scan_table_for_dn(&maxima, ln_thr)
        }
        RateFamily::CustomTable { .. } => {
            let agg = table.ok_or(RateError::NeedsTabulation)?;
            scan_table_for_dn(&agg.edge_max, ln_thr)
        }
    }
}

/// Scan of a finite per-generation maximum sequence for the first index
/// after which every observed value is at or below the threshold.
fn scan_table_for_dn(maxima: &[f64], ln_thr: f64) -> Result<DnValue, BoundError> {
    let horizon = maxima.len() as u64 - 1;
    let mut m = 0u64;
    for (l, r) in maxima.iter().enumerate() {
        if r.ln() > ln_thr {
            m = l as u64 + 1;
        }
    }
    if m > horizon {
        return Ok(DnValue::BeyondHorizon { horizon });
    }
    // Extrapolating past the horizon needs a non-increasing observed tail.
    let tail_start = maxima.len() - (maxima.len() / 4).max(2).min(maxima.len());
    let tail = &maxima[tail_start..];
    let monotone = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    if !monotone {
        return Err(BoundError::Unclassifiable);
    }
    Ok(DnValue::Finite(m as f64))
}

/// Inputs for the disentanglement generation.
#[derive(Debug, Clone, Serialize)]
pub struct MnInputs {
    /// Particle count.
    pub n: u64,
    /// Decay horizon for this n.
    pub d_n: DnValue,
    /// Minimal offspring count of the tree's law.
    pub d_min: u32,
    /// Branching constant.
    pub c_o: f64,
    /// Uniform-ellipticity constant.
    pub epsilon: f64,
    /// Exponential-decay witness.
    pub c_low: f64,
    /// Slack parameter, must be positive.
    pub delta: f64,
    /// Declared growth regime of 𝒟ₙ.
    pub decay_class: DecayClass,
}

/// The generation after which the first n particles provably decouple, plus
/// every input that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct DisentanglementBound {
    /// Particle count.
    pub n: u64,
    /// Decay horizon for this n.
    pub d_n: DnValue,
    /// The disentanglement generation ℳₙ.
    pub m_n: f64,
    /// Slack parameter.
    pub delta: f64,
    /// Branching constant.
    pub c_o: f64,
    /// Uniform-ellipticity constant.
    pub epsilon: f64,
    /// Exponential-decay witness.
    pub c_low: f64,
    /// Which bound case applied: 1 for log-order 𝒟ₙ, 2 otherwise.
    pub case_used: u8,
}

/// Evaluates the disentanglement generation ℳₙ.
///
/// Case 1 (𝒟ₙ of log order) with d_min > 1:
/// ℳₙ = (d_min/(d_min−1))𝒟ₙ + (2+δ) log_{1+ε} n; with d_min = 1:
/// ℳₙ = (c_o+1)𝒟ₙ + c_o(2+δ) log_{1+ε} n.
/// Case 2: ℳₙ = (c_o·1{d_min=1} + (d_min−1)⁻¹·1{d_min>1} + 1 + δ)·min(𝒟ₙ, n).
pub fn compute_m_n(inputs: &MnInputs) -> Result<DisentanglementBound, BoundError> {
    let MnInputs {
        n,
        d_n,
        d_min,
        c_o,
        epsilon,
        c_low,
        delta,
        decay_class,
    } = *inputs;
    if n < 2 {
        return Err(BoundError::InvalidInput(format!(
            "particle count must be at least 2, got {n}"
        )));
    }
    if !(delta > 0.0) {
        return Err(BoundError::InvalidInput(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(BoundError::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let ln_n = (n as f64).ln();
    let (m_n, case_used) = match decay_class {
        DecayClass::LogOrder => {
            let d = match d_n {
                DnValue::Finite(v) => v,
                DnValue::Unbounded => {
                    return Err(BoundError::InvalidInput(
                        "log-order decay declared but the decay horizon is unbounded".into(),
                    ));
                }
                DnValue::BeyondHorizon { horizon } => {
                    return Err(BoundError::InsufficientHorizon {
                        needed: horizon + 1,
                        horizon,
                    });
                }
            };
            let log_base = (1.0 + epsilon).ln();
            let value = if d_min > 1 {
                f64::from(d_min) / f64::from(d_min - 1) * d + (2.0 + delta) * ln_n / log_base
            } else {
                (c_o + 1.0) * d + c_o * (2.0 + delta) * ln_n / log_base
            };
            (value, 1u8)
        }
        DecayClass::SuperLogOrder => {
            let capped = match d_n {
                DnValue::Finite(v) => v.min(n as f64),
                DnValue::Unbounded => n as f64,
                DnValue::BeyondHorizon { horizon } => {
                    // The horizon certifies 𝒟ₙ > horizon, which pins the
                    // minimum whenever n itself is within the horizon.
                    if n <= horizon {
                        n as f64
                    } else {
                        return Err(BoundError::InsufficientHorizon {
                            needed: n,
                            horizon,
                        });
                    }
                }
            };
            let prefix = if d_min == 1 {
                c_o
            } else {
                1.0 / f64::from(d_min - 1)
            };
            ((prefix + 1.0 + delta) * capped, 2u8)
        }
    };
    Ok(DisentanglementBound {
        n,
        d_n,
        m_n,
        delta,
        c_o,
        epsilon,
        c_low,
        case_used,
    })
}

/// How the θ constant in the upper time bound is handled.
#[derive(Debug, Clone, Default)]
pub enum ThetaSpec {
    /// Evaluate θ on the given window and use the finite-θ bracket whenever
    /// the evaluation is finite. Conservative: the finite bracket dominates
    /// the infinite-θ one.
    #[default]
    Auto,
    /// Assert that θ diverges along the sequence and use the 1 + θₙ bracket.
    /// `theta_n` defaults to 1/ln n; callers asserting a faster-growing θ
    /// may pass a smaller sequence value.
    ForceInfinite {
        /// Override for θₙ at this n.
        theta_n: Option<f64>,
    },
}

/// The time window in which the current at the root is of order n.
#[derive(Debug, Clone, Serialize)]
pub struct TimeWindow {
    /// Particle count.
    pub n: u64,
    /// Target generation.
    pub ell: u64,
    /// Disentanglement generation used.
    pub m_n: f64,
    /// Slack parameter.
    pub delta: f64,
    /// Fluctuation-corrected waiting-sum lower bound.
    pub t1_low: f64,
    /// Geometric-mean lower bound.
    pub t2_low: f64,
    /// max(t1_low, t2_low).
    pub t_low: f64,
    /// Entry cost 5(n + ℳₙ) / min out-rate up to ℳₙ.
    pub entry_term: f64,
    /// θ evaluated on the window (may be +∞).
    pub theta: f64,
    /// θₙ when the infinite-θ bracket was used.
    pub theta_n: Option<f64>,
    /// The bracket multiplying the tail waiting sum.
    pub bracket: f64,
    /// R^min over generations ⌈ℳₙ⌉..=ℓ.
    pub r_min_tail: f64,
    /// Upper end of the window.
    pub t_up: f64,
}

fn require_within_horizon(levels: &impl LevelRates, l: u64) -> Result<(), BoundError> {
    if let Some(h) = levels.horizon() {
        if l > h {
            return Err(BoundError::InsufficientHorizon {
                needed: l,
                horizon: h,
            });
        }
    }
    Ok(())
}

/// Evaluates the time window [t_low, t_up] for the event that n particles
/// pass generation `ell`.
///
/// t1_low = R(1 − 2(Rρ_ℓ)^(−1/3) ln R) with R = R^max over 0..=ℓ;
/// t2_low = (ℓ/2)·exp of the mean of ln(1/out_max) over 0..=ℓ;
/// t_up = 5(n+ℳₙ)/min out-rate up to ⌊ℳₙ⌋, plus a θ-dependent bracket times
/// R^min over ⌈ℳₙ⌉..=ℓ.
pub fn compute_time_window(
    levels: &impl LevelRates,
    n: u64,
    ell: u64,
    m_n: f64,
    delta: f64,
    theta_spec: &ThetaSpec,
) -> Result<TimeWindow, BoundError> {
    if n == 0 {
        return Err(BoundError::InvalidInput(
            "time window undefined for zero particles".into(),
        ));
    }
    if !(delta > 0.0) {
        return Err(BoundError::InvalidInput(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(m_n >= 0.0) || (ell as f64) < m_n {
        return Err(BoundError::InvalidInput(format!(
            "target generation {ell} is below the disentanglement bound {m_n}"
        )));
    }
    require_within_horizon(levels, ell)?;

    let r_max = levels.r_max_window(0, ell);
    let rho = levels.rho(ell);
    let t1_low = r_max * (1.0 - 2.0 * (r_max * rho).powf(-1.0 / 3.0) * r_max.ln());
    let t2_low =
        (ell as f64 / 2.0) * (levels.ln_inv_out_max_sum(0, ell) / (ell as f64 + 1.0)).exp();
    let t_low = t1_low.max(t2_low);

    let m_floor = m_n.floor() as u64;
    let entry_min = levels.min_out_window(0, m_floor);
    let entry_term = 5.0 * (n as f64 + m_n) / entry_min;
    let tail_start = m_n.ceil() as u64;
    let r_min_tail = levels.r_min_window(tail_start, ell);
    let theta = if m_floor + 1 <= ell {
        levels.min_out_window(m_floor + 1, ell) * r_min_tail
    } else {
        f64::INFINITY
    };

    let (bracket, theta_n) = match theta_spec {
        ThetaSpec::Auto if theta.is_finite() => {
            (1.0 + delta - 2.0 * delta.ln() / (theta * delta), None)
        }
        ThetaSpec::Auto => (1.0 + default_theta_n(n)?, Some(default_theta_n(n)?)),
        ThetaSpec::ForceInfinite { theta_n } => {
            let tn = match theta_n {
                Some(v) => {
                    if !(*v > 0.0) {
                        return Err(BoundError::InvalidInput(format!(
                            "theta_n must be positive, got {v}"
                        )));
                    }
                    *v
                }
                None => default_theta_n(n)?,
            };
            (1.0 + tn, Some(tn))
        }
    };
    let t_up = entry_term + bracket * r_min_tail;
    Ok(TimeWindow {
        n,
        ell,
        m_n,
        delta,
        t1_low,
        t2_low,
        t_low,
        entry_term,
        theta,
        theta_n,
        bracket,
        r_min_tail,
        t_up,
    })
}

fn default_theta_n(n: u64) -> Result<f64, BoundError> {
    if n < 2 {
        return Err(BoundError::InvalidInput(
            "default theta_n = 1/ln n needs n >= 2".into(),
        ));
    }
    Ok(1.0 / (n as f64).ln())
}

/// The generation window for a fixed observation time.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationWindow {
    /// Observation time.
    pub t: f64,
    /// Largest particle count whose entry cost fits within t.
    pub n_t: u64,
    /// Lower generation ℳ_{n_t} (0 when no count is feasible).
    pub l_low: f64,
    /// First generation where the log-mean criterion exceeds ln t + 2.
    pub l1_up: u64,
    /// First generation where R^max reaches t + t^(2/3).
    pub l2_up: u64,
    /// min(l1_up, l2_up).
    pub l_up: u64,
}

/// Level-rate backends a [`BoundContext`] can carry.
#[derive(Debug, Clone)]
pub enum LevelsBackend {
    /// Closed forms for symbolic families.
    Symbolic(SymbolicLevels),
    /// Materialized per-generation aggregates.
    Table(GenerationAggregates),
}

macro_rules! dispatch {
    ($self:ident, $method:ident $(, $arg:expr)*) => {
        match $self {
            LevelsBackend::Symbolic(s) => s.$method($($arg),*),
            LevelsBackend::Table(t) => t.$method($($arg),*),
        }
    };
}

impl LevelRates for LevelsBackend {
    fn horizon(&self) -> Option<u64> {
        dispatch!(self, horizon)
    }
    fn edge_min(&self, l: u64) -> f64 {
        dispatch!(self, edge_min, l)
    }
    fn edge_max(&self, l: u64) -> f64 {
        dispatch!(self, edge_max, l)
    }
    fn out_min(&self, l: u64) -> f64 {
        dispatch!(self, out_min, l)
    }
    fn out_max(&self, l: u64) -> f64 {
        dispatch!(self, out_max, l)
    }
    fn r_min_window(&self, a: u64, b: u64) -> f64 {
        dispatch!(self, r_min_window, a, b)
    }
    fn r_max_window(&self, a: u64, b: u64) -> f64 {
        dispatch!(self, r_max_window, a, b)
    }
    fn ln_inv_out_max_sum(&self, a: u64, b: u64) -> f64 {
        dispatch!(self, ln_inv_out_max_sum, a, b)
    }
    fn ln_edge_max_sum(&self, a: u64, b: u64) -> f64 {
        dispatch!(self, ln_edge_max_sum, a, b)
    }
    fn rho(&self, l: u64) -> f64 {
        dispatch!(self, rho, l)
    }
    fn min_out_window(&self, a: u64, b: u64) -> f64 {
        dispatch!(self, min_out_window, a, b)
    }
}

/// Everything needed to evaluate the bounds for one family on one tree law.
#[derive(Debug, Clone)]
pub struct BoundContext {
    /// The rate family.
    pub family: RateFamily,
    /// Level-rate summaries.
    pub levels: LevelsBackend,
    /// Minimal offspring count.
    pub d_min: u32,
    /// Branching constant.
    pub c_o: f64,
    /// Uniform-ellipticity constant.
    pub epsilon: f64,
    /// Exponential-decay multiplicative witness.
    pub kappa: f64,
    /// Exponential-decay rate witness.
    pub c_low: f64,
    /// Slack parameter.
    pub delta: f64,
    /// Declared 𝒟ₙ regime.
    pub decay_class: DecayClass,
    /// θ handling for upper time bounds.
    pub theta: ThetaSpec,
}

impl BoundContext {
    /// Builds a context for a symbolic family on trees grown from `law`.
    ///
    /// Symbolic rates depend only on the parent's generation, so sibling
    /// edges are equal and the uniform-ellipticity constant is 1.
    pub fn symbolic(
        family: RateFamily,
        law: &OffspringLaw,
        delta: f64,
    ) -> Result<Self, BoundError> {
        let levels = SymbolicLevels::new(&family, law)?;
        let ed = check_ed(&family, None, 0)?;
        let decay_class = family.decay_class().ok_or(BoundError::MissingDecayClass)?;
        Ok(BoundContext {
            d_min: law.d_min(),
            c_o: c_o_for_law(law)?,
            epsilon: 1.0,
            kappa: ed.kappa,
            c_low: ed.c_low,
            delta,
            decay_class,
            theta: ThetaSpec::Auto,
            levels: LevelsBackend::Symbolic(levels),
            family,
        })
    }

    /// Builds a context from materialized aggregates and explicit constants
    /// for tabulated rates.
    #[allow(clippy::too_many_arguments)]
    pub fn tabulated(
        family: RateFamily,
        aggregates: GenerationAggregates,
        d_min: u32,
        c_o: f64,
        epsilon: f64,
        kappa: f64,
        c_low: f64,
        delta: f64,
        decay_class: DecayClass,
    ) -> Result<Self, BoundError> {
        if !(epsilon > 0.0) {
            return Err(BoundError::InvalidInput(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(BoundContext {
            family,
            levels: LevelsBackend::Table(aggregates),
            d_min,
            c_o,
            epsilon,
            kappa,
            c_low,
            delta,
            decay_class,
            theta: ThetaSpec::Auto,
        })
    }

    /// Selects the θ handling for subsequent window evaluations.
    pub fn with_theta(mut self, theta: ThetaSpec) -> Self {
        self.theta = theta;
        self
    }

    /// Decay horizon for n particles.
    pub fn d_n(&self, n: u64) -> Result<DnValue, BoundError> {
        let table = match &self.levels {
            LevelsBackend::Table(agg) => Some(agg),
            LevelsBackend::Symbolic(_) => None,
        };
        compute_d_n(&self.family, n, self.c_low, self.c_o, table)
    }

    /// Disentanglement generation for n particles.
    pub fn m_n(&self, n: u64) -> Result<DisentanglementBound, BoundError> {
        compute_m_n(&MnInputs {
            n,
            d_n: self.d_n(n)?,
            d_min: self.d_min,
            c_o: self.c_o,
            epsilon: self.epsilon,
            c_low: self.c_low,
            delta: self.delta,
            decay_class: self.decay_class,
        })
    }

    /// Time window for n particles to pass generation `ell`.
    pub fn time_window(&self, n: u64, ell: u64) -> Result<TimeWindow, BoundError> {
        let m = self.m_n(n)?;
        compute_time_window(&self.levels, n, ell, m.m_n, self.delta, &self.theta)
    }

    /// Largest n whose entry cost (n + ℳₙ) / min out-rate fits within t.
    ///
    /// ℳₙ grows with n, so feasibility is monotone and the answer is found
    /// by doubling and bisection. Returns 0 when even n = 2 does not fit.
    pub fn n_t(&self, t: f64) -> Result<u64, BoundError> {
        if !(t > 0.0) {
            return Err(BoundError::InvalidInput(format!(
                "time must be positive, got {t}"
            )));
        }
        let feasible = |n: u64| -> Result<bool, BoundError> {
            let m = self.m_n(n)?.m_n;
            let fl = m.floor() as u64;
            require_within_horizon(&self.levels, fl)?;
            Ok((n as f64 + m) / self.levels.min_out_window(0, fl) <= t)
        };
        if !feasible(2)? {
            return Ok(0);
        }
        let mut lo = 2u64;
        let mut hi = 4u64;
        loop {
            if hi > 1 << 62 {
                return Err(BoundError::InvalidInput(format!(
                    "feasible particle count exceeds the search cap for t = {t}"
                )));
            }
            if feasible(hi)? {
                lo = hi;
                hi *= 2;
            } else {
                break;
            }
        }
        // Invariant: feasible(lo), not feasible(hi).
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if feasible(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Generation window for a fixed observation time t > e.
    pub fn generation_window(&self, t: f64) -> Result<GenerationWindow, BoundError> {
        if !(t > std::f64::consts::E) {
            return Err(BoundError::InvalidInput(format!(
                "observation time must exceed e, got {t}"
            )));
        }
        let n_t = self.n_t(t)?;
        let l_low = if n_t >= 2 { self.m_n(n_t)?.m_n } else { 0.0 };
        let ln_t = t.ln();
        let l1_up = self.smallest_generation(1, |l| {
            (l as f64).ln() - self.levels.ln_edge_max_sum(1, l) / (l as f64 + 1.0) >= ln_t + 2.0
        })?;
        let target = t + t.powf(2.0 / 3.0);
        let l2_up = self.smallest_generation(0, |l| self.levels.r_max_window(0, l) >= target)?;
        Ok(GenerationWindow {
            t,
            n_t,
            l_low,
            l1_up,
            l2_up,
            l_up: l1_up.min(l2_up),
        })
    }

    /// First generation at or after `start` satisfying `pred`.
    ///
    /// Tabulated backends are scanned exactly. Symbolic backends bracket by
    /// doubling and bisect, which is valid because their criteria are
    /// monotone in the generation (edge rates are non-increasing).
    fn smallest_generation(
        &self,
        start: u64,
        pred: impl Fn(u64) -> bool,
    ) -> Result<u64, BoundError> {
        if let Some(h) = self.levels.horizon() {
            for l in start..=h {
                if pred(l) {
                    return Ok(l);
                }
            }
            return Err(BoundError::InsufficientHorizon {
                needed: h + 1,
                horizon: h,
            });
        }
        if pred(start) {
            return Ok(start);
        }
        let mut lo = start;
        let mut hi = (start * 2).max(2);
        while !pred(hi) {
            lo = hi;
            if hi > 1 << 52 {
                return Err(BoundError::InvalidInput(
                    "no generation satisfies the criterion within the search cap".into(),
                ));
            }
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Ratio regime of the time window along a generation sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RatioRegime {
    /// t_up / t_low converges to 1.
    SharpRatioOne,
    /// t_up / t_low stays within constant factors.
    BoundedRatio,
}

/// One ladder point of the asymptotic evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct PolySample {
    /// Particle count probed.
    pub n: u64,
    /// Disentanglement generation at this n.
    pub m_n: f64,
    /// Target generation ℓₙ from the supplied rule.
    pub ell: f64,
    /// (ℳₙ/ℓₙ)^(p+1) at this n.
    pub a_n: f64,
    /// n·ℳₙ^p/ℓₙ^(p+1) at this n.
    pub b_n: f64,
}

/// Asymptotic report for polynomial rates on a regular tree.
#[derive(Debug, Clone, Serialize)]
pub struct PolyWindowReport {
    /// Tree degree.
    pub d: u32,
    /// Rate decay power.
    pub p: f64,
    /// Slack parameter.
    pub delta: f64,
    /// Limit of (ℳₙ/ℓₙ)^(p+1).
    pub a: f64,
    /// Limit of n·ℳₙ^p/ℓₙ^(p+1).
    pub b: f64,
    /// Whether the window ratio tends to 1 or stays bounded.
    pub regime: RatioRegime,
    /// Coefficient of ℓₙ^(p+1) in the leading term of both window ends.
    pub leading_coefficient: f64,
    /// Ladder evaluations underlying the limit estimates.
    pub samples: Vec<PolySample>,
}

/// Classifies the time-window asymptotics for polynomially decaying rates
/// (|x|+1)^(−p) on the (d)-regular tree along a generation rule n ↦ ℓₙ.
///
/// The limits a and b are estimated on a geometric ladder of n by fitting
/// the local growth exponent; power-law sequences make this exact up to
/// slowly varying corrections. a must fall in [0, 1) and b in [0, ∞).
pub fn regular_poly_window(
    d: u32,
    p: f64,
    delta: f64,
    ell_rule: &dyn Fn(u64) -> f64,
) -> Result<PolyWindowReport, BoundError> {
    if d < 3 {
        return Err(BoundError::InvalidInput(format!(
            "regular-tree degree must be at least 3, got {d}"
        )));
    }
    if !(p > 0.0) {
        return Err(BoundError::InvalidInput(format!(
            "decay power must be positive, got {p}"
        )));
    }
    if !(delta > 0.0) {
        return Err(BoundError::InvalidInput(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let family = RateFamily::Polynomial { p };
    let c_o = 1.0 / f64::from(d - 1).ln();
    let c_low = p * 2f64.ln();
    let ladder: Vec<u64> = (6..=14).map(|k| 10u64.pow(k)).collect();
    let mut samples = Vec::with_capacity(ladder.len());
    let mut ln_a = Vec::with_capacity(ladder.len());
    let mut ln_b = Vec::with_capacity(ladder.len());
    for &n in &ladder {
        let d_n = compute_d_n(&family, n, c_low, c_o, None)?;
        let bound = compute_m_n(&MnInputs {
            n,
            d_n,
            d_min: d - 1,
            c_o,
            epsilon: 1.0,
            c_low,
            delta,
            decay_class: DecayClass::SuperLogOrder,
        })?;
        let ell = ell_rule(n);
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(BoundError::InvalidInput(format!(
                "generation rule produced {ell} at n = {n}"
            )));
        }
        let la = (p + 1.0) * (bound.m_n.ln() - ell.ln());
        let lb = (n as f64).ln() + p * bound.m_n.ln() - (p + 1.0) * ell.ln();
        ln_a.push(la);
        ln_b.push(lb);
        samples.push(PolySample {
            n,
            m_n: bound.m_n,
            ell,
            a_n: la.exp(),
            b_n: lb.exp(),
        });
    }
    let a = estimate_limit(&ladder, &ln_a);
    let b = estimate_limit(&ladder, &ln_b);
    if !(a < 1.0) {
        return Err(BoundError::LimitOutOfRange { name: "a", value: a });
    }
    if !b.is_finite() {
        return Err(BoundError::LimitOutOfRange { name: "b", value: b });
    }
    let regime = if b == 0.0 {
        RatioRegime::SharpRatioOne
    } else {
        RatioRegime::BoundedRatio
    };
    Ok(PolyWindowReport {
        d,
        p,
        delta,
        a,
        b,
        regime,
        leading_coefficient: (1.0 - a) / (f64::from(d - 1) * (p + 1.0)),
        samples,
    })
}

/// Limit of a positive sequence given on a geometric ladder, from the local
/// growth exponent between the last two points: negative exponents mean 0,
/// positive mean +∞, and near-zero means the last value.
fn estimate_limit(ns: &[u64], ln_vals: &[f64]) -> f64 {
    let k = ns.len() - 1;
    let gamma = (ln_vals[k] - ln_vals[k - 1]) / ((ns[k] as f64).ln() - (ns[k - 1] as f64).ln());
    if gamma < -0.02 {
        0.0
    } else if gamma > 0.02 {
        f64::INFINITY
    } else {
        ln_vals[k].exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gw_tree::{OffspringLaw, Tree};
    use crate::rate_field::aggregates;
    use approx::assert_relative_eq;

    fn exp3() -> RateFamily {
        RateFamily::ExponentialHomogeneous { d: 3 }
    }

    fn exp3_context(delta: f64) -> BoundContext {
        BoundContext::symbolic(exp3(), &OffspringLaw::regular(3).unwrap(), delta).unwrap()
    }

    #[test]
    fn branching_constant_values() {
        assert_relative_eq!(
            compute_c_o(2, 0.0, 2.0).unwrap(),
            1.0 / 2f64.ln(),
            epsilon = 1e-15
        );
        assert_relative_eq!(compute_c_o(3, 0.0, 3.0).unwrap(), 1.0 / 3f64.ln());
        // Single-child case: (5 + log2(2)) / (ln 1.5 - ln 1.0).
        assert_relative_eq!(
            compute_c_o(1, 0.5, 2.0).unwrap(),
            6.0 / 1.5f64.ln(),
            epsilon = 1e-12
        );
        assert!(compute_c_o(1, 0.0, 2.0).is_err());
        assert!(compute_c_o(1, 1.0, 2.0).is_err());
    }

    #[test]
    fn decay_horizon_frozen_values() {
        let ctx = exp3_context(0.25);
        for (n, expected) in [(6u64, 10.0), (16, 16.0), (64, 24.0)] {
            let DnValue::Finite(m) = ctx.d_n(n).unwrap() else {
                panic!("expected finite horizon");
            };
            assert_eq!(m, expected, "n = {n}");
        }
    }

    #[test]
    fn decay_horizon_defining_inequality() {
        let families = [
            exp3(),
            RateFamily::Polynomial { p: 1.5 },
            RateFamily::Slowed {
                d: 4,
                g: SlowingSequence::Geometric { ratio: 0.5 },
            },
        ];
        for family in families {
            let ed = check_ed(&family, None, 0).unwrap();
            let law = OffspringLaw::regular(3).unwrap();
            let c_o = c_o_for_law(&law).unwrap();
            for n in [10u64, 100, 1000] {
                let ln_thr = ln_dn_threshold(n, ed.c_low, c_o).unwrap();
                let DnValue::Finite(m) = compute_d_n(&family, n, ed.c_low, c_o, None).unwrap()
                else {
                    panic!("finite expected for decaying families");
                };
                // Rates are non-increasing, so the defining inequality for
                // all levels >= m reduces to the value at m.
                let at_m = ln_rate_at(&family, m);
                assert!(
                    at_m <= ln_thr + 1e-9,
                    "{} n={n}: rate at m violates threshold",
                    family.kind_name()
                );
                if m >= 1.0 {
                    let at_prev = ln_rate_at(&family, m - 1.0);
                    assert!(
                        at_prev > ln_thr - 1e-9,
                        "{} n={n}: m is not minimal",
                        family.kind_name()
                    );
                }
            }
        }
    }

    /// ln of the symbolic edge rate at a possibly huge real level.
    fn ln_rate_at(family: &RateFamily, l: f64) -> f64 {
        match family {
            RateFamily::ExponentialHomogeneous { d } => -(l + 1.0) * f64::from(*d - 1).ln(),
            RateFamily::Polynomial { p } => -p * (l + 1.0).ln(),
            RateFamily::Slowed {
                d,
                g: SlowingSequence::Geometric { ratio },
            } => -(l + 1.0) * f64::from(*d - 1).ln() + l * ratio.ln(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn constant_rates_have_unbounded_horizon() {
        let law = OffspringLaw::regular(4).unwrap();
        let ctx = BoundContext::symbolic(RateFamily::Constant, &law, 0.1).unwrap();
        assert_eq!(ctx.d_n(50).unwrap(), DnValue::Unbounded);
    }

    #[test]
    fn polynomial_horizon_matches_closed_form() {
        let p = 0.5;
        let law = OffspringLaw::regular(3).unwrap();
        let ctx =
            BoundContext::symbolic(RateFamily::Polynomial { p }, &law, 0.1).unwrap();
        let n = 1000u64;
        let DnValue::Finite(m) = ctx.d_n(n).unwrap() else {
            panic!()
        };
        let ln_n = (n as f64).ln();
        let expected = ((2.0 + ctx.c_low * ctx.c_o) * ln_n + 3.0 * ln_n.ln()) / p;
        assert_relative_eq!(m, expected.exp() - 1.0, max_relative = 1e-9);
    }

    #[test]
    fn tabulated_horizon_scan() {
        // Chain 0-1-2-3-4 with rates 1, 0.3, 0.3, 0.1: with threshold 0.375
        // (c_low = c_o = 1, n = 2) the first compliant generation is 1.
        let mut tree = Tree::from_parents(&[None, Some(0), Some(1), Some(2), Some(3)]).unwrap();
        let table = crate::rate_field::RateTable::from_entries([
            (0, 1, 1.0),
            (1, 2, 0.3),
            (2, 3, 0.3),
            (3, 4, 0.1),
        ])
        .unwrap();
        let family = RateFamily::CustomTable {
            table,
            decay_class: None,
        };
        let agg = aggregates(&family, &mut tree, 4).unwrap();
        let got = compute_d_n(&family, 2, 1.0, 1.0, Some(&agg)).unwrap();
        assert_eq!(got, DnValue::Finite(1.0));
    }

    #[test]
    fn tabulated_horizon_beyond_and_unclassifiable() {
        let mut tree = Tree::from_parents(&[None, Some(0), Some(1), Some(2)]).unwrap();
        let high = crate::rate_field::RateTable::from_entries([
            (0, 1, 1.0),
            (1, 2, 0.9),
            (2, 3, 0.8),
        ])
        .unwrap();
        let family = RateFamily::CustomTable {
            table: high,
            decay_class: None,
        };
        let agg = aggregates(&family, &mut tree, 3).unwrap();
        assert_eq!(
            compute_d_n(&family, 2, 1.0, 1.0, Some(&agg)).unwrap(),
            DnValue::BeyondHorizon { horizon: 2 }
        );

        let mut tree2 = Tree::from_parents(&[None, Some(0), Some(1), Some(2)]).unwrap();
        let wobble = crate::rate_field::RateTable::from_entries([
            (0, 1, 0.2),
            (1, 2, 0.05),
            (2, 3, 0.15),
        ])
        .unwrap();
        let family2 = RateFamily::CustomTable {
            table: wobble,
            decay_class: None,
        };
        let agg2 = aggregates(&family2, &mut tree2, 3).unwrap();
        assert!(matches!(
            compute_d_n(&family2, 2, 1.0, 1.0, Some(&agg2)),
            Err(BoundError::Unclassifiable)
        ));
    }

    #[test]
    fn disentanglement_frozen_values() {
        let ctx = exp3_context(0.25);
        let b = ctx.m_n(64).unwrap();
        assert_eq!(b.case_used, 1);
        assert_relative_eq!(b.m_n, 61.5, max_relative = 1e-12);
        let ctx = exp3_context(0.1);
        let b = ctx.m_n(16).unwrap();
        assert_relative_eq!(b.m_n, 40.4, max_relative = 1e-12);
    }

    #[test]
    fn constant_family_bound_is_linear() {
        for d in [3u32, 5] {
            let law = OffspringLaw::regular(d).unwrap();
            let ctx = BoundContext::symbolic(RateFamily::Constant, &law, 0.1).unwrap();
            let b = ctx.m_n(1000).unwrap();
            assert_eq!(b.case_used, 2);
            let expected = (1.0 / f64::from(d - 2) + 1.1) * 1000.0;
            assert_relative_eq!(b.m_n, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn exponential_bound_matches_asymptotic_coefficient() {
        // At very large n the bound approaches
        // (3(d-1)/((d-2) ln(d-1)) + (2+delta)/ln 2) ln n.
        let d = 3u32;
        let ctx = exp3_context(0.1);
        let n = 10u64.pow(19);
        let b = ctx.m_n(n).unwrap();
        let ln_n = (n as f64).ln();
        let coeff = 3.0 * f64::from(d - 1) / (f64::from(d - 2) * f64::from(d - 1).ln())
            + 2.1 / 2f64.ln();
        // ln ln n corrections decay like ln ln n / ln n; allow 12 percent.
        assert_relative_eq!(b.m_n, coeff * ln_n, max_relative = 0.12);
    }

    #[test]
    fn disentanglement_monotone_in_n_and_delta() {
        for family in [exp3(), RateFamily::Polynomial { p: 0.8 }, RateFamily::Constant] {
            let law = OffspringLaw::regular(3).unwrap();
            let mut last = 0.0f64;
            for n in [4u64, 16, 64, 256, 1024, 4096] {
                let ctx = BoundContext::symbolic(family.clone(), &law, 0.1).unwrap();
                let m = ctx.m_n(n).unwrap().m_n;
                assert!(m > last, "{}: m_n not increasing at n={n}", family.kind_name());
                last = m;
            }
            let mut last = 0.0f64;
            for delta in [0.05, 0.1, 0.2, 0.4] {
                let ctx = BoundContext::symbolic(family.clone(), &law, delta).unwrap();
                let m = ctx.m_n(64).unwrap().m_n;
                assert!(m > last, "{}: m_n not increasing in delta", family.kind_name());
                last = m;
            }
        }
    }

    #[test]
    fn log_order_with_unbounded_horizon_is_rejected() {
        let got = compute_m_n(&MnInputs {
            n: 10,
            d_n: DnValue::Unbounded,
            d_min: 2,
            c_o: 1.0,
            epsilon: 1.0,
            c_low: 0.0,
            delta: 0.1,
            decay_class: DecayClass::LogOrder,
        });
        assert!(matches!(got, Err(BoundError::InvalidInput(_))));
    }

    #[test]
    fn super_log_case_accepts_beyond_horizon_when_n_is_covered() {
        let inputs = MnInputs {
            n: 10,
            d_n: DnValue::BeyondHorizon { horizon: 50 },
            d_min: 2,
            c_o: 1.0,
            epsilon: 1.0,
            c_low: 1.0,
            delta: 0.1,
            decay_class: DecayClass::SuperLogOrder,
        };
        let b = compute_m_n(&inputs).unwrap();
        assert_relative_eq!(b.m_n, (1.0 + 1.1) * 10.0);
        let mut far = inputs;
        far.n = 100;
        assert!(matches!(
            compute_m_n(&far),
            Err(BoundError::InsufficientHorizon { .. })
        ));
    }

    #[test]
    fn time_window_frozen_exponential_values() {
        // d = 3, n = 64, delta = 0.25: the bound is 61.5 and the window is
        // evaluated at generation 62.
        let ctx = exp3_context(0.25);
        let w = ctx.time_window(64, 62).unwrap();
        assert_relative_eq!(w.m_n, 61.5, max_relative = 1e-12);
        assert_relative_eq!(w.t2_low, 31.0 * 2f64.powi(31), max_relative = 1e-9);
        assert!(w.t1_low < 0.0, "fluctuation correction dominates here");
        assert_eq!(w.t_low, w.t2_low);
        assert_relative_eq!(w.theta, 1.0, max_relative = 1e-12);
        let expected_bracket = 1.25 - 2.0 * 0.25f64.ln() / 0.25;
        assert_relative_eq!(w.bracket, expected_bracket, max_relative = 1e-12);
        assert_relative_eq!(w.entry_term, 627.5 * 2f64.powi(61), max_relative = 1e-9);
        assert_relative_eq!(w.r_min_tail, 2f64.powi(62), max_relative = 1e-9);
        assert_relative_eq!(
            w.t_up,
            627.5 * 2f64.powi(61) + expected_bracket * 2f64.powi(62),
            max_relative = 1e-9
        );
    }

    #[test]
    fn time_window_constant_family_asymptotics() {
        // Constant rates on the d-regular tree with target 1 + 2*bound:
        // t_up approaches (5n + 6*bound)/(d-1) and t_low approaches
        // (2*bound + 1)/(d-1).
        let d = 3u32;
        let law = OffspringLaw::regular(d).unwrap();
        let ctx = BoundContext::symbolic(RateFamily::Constant, &law, 0.1)
            .unwrap()
            .with_theta(ThetaSpec::ForceInfinite { theta_n: None });
        let n = 10u64.pow(12);
        let m = ctx.m_n(n).unwrap().m_n;
        let ell = (1.0 + 2.0 * m).ceil() as u64;
        let w = ctx.time_window(n, ell).unwrap();
        let dm1 = f64::from(d - 1);
        assert_relative_eq!(w.t_up, (5.0 * n as f64 + 6.0 * m) / dm1, max_relative = 0.01);
        assert_relative_eq!(w.t_low, (2.0 * m + 1.0) / dm1, max_relative = 0.01);
        assert!(w.theta.is_infinite() || w.theta > 1e6);
    }

    #[test]
    fn window_orders_correctly_for_exponential_family() {
        for n in [16u64, 64, 256, 1024] {
            let ctx = exp3_context(0.1);
            let m = ctx.m_n(n).unwrap().m_n;
            let w = ctx.time_window(n, m.ceil() as u64).unwrap();
            assert!(
                w.t_low < w.t_up,
                "window inverted at n = {n}: {} vs {}",
                w.t_low,
                w.t_up
            );
        }
    }

    #[test]
    fn time_window_rejects_bad_inputs() {
        let ctx = exp3_context(0.1);
        assert!(matches!(
            ctx.time_window(0, 10),
            Err(BoundError::InvalidInput(_))
        ));
        // Generation below the bound (40.4 at n = 16).
        assert!(matches!(
            ctx.time_window(16, 12),
            Err(BoundError::InvalidInput(_))
        ));
    }

    #[test]
    fn n_t_feasibility_is_tight() {
        let law = OffspringLaw::regular(3).unwrap();
        let ctx = BoundContext::symbolic(RateFamily::Constant, &law, 0.1).unwrap();
        for t in [10.0f64, 100.0, 1234.5, 98765.0] {
            let n_t = ctx.n_t(t).unwrap();
            assert!(n_t >= 2);
            let feasible = |n: u64| {
                let m = ctx.m_n(n).unwrap().m_n;
                (n as f64 + m) / 2.0 <= t
            };
            assert!(feasible(n_t), "t = {t}");
            assert!(!feasible(n_t + 1), "t = {t}");
        }
        // Entry cost at n = 2 is (2 + m_2)/2 > 2, so tiny times admit no
        // particle count.
        assert_eq!(ctx.n_t(1.0).unwrap(), 0);
        let mut last = 0;
        for t in [10.0, 20.0, 40.0, 80.0] {
            let v = ctx.n_t(t).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn generation_window_criteria_are_tight() {
        let ctx = exp3_context(0.1);
        let t = 1e6f64;
        let w = ctx.generation_window(t).unwrap();
        assert_eq!(w.l_up, w.l1_up.min(w.l2_up));
        let crit1 = |l: u64| {
            (l as f64).ln() - ctx.levels.ln_edge_max_sum(1, l) / (l as f64 + 1.0)
                >= t.ln() + 2.0
        };
        assert!(crit1(w.l1_up));
        assert!(!crit1(w.l1_up - 1));
        let target = t + t.powf(2.0 / 3.0);
        assert!(ctx.levels.r_max_window(0, w.l2_up) >= target);
        assert!(ctx.levels.r_max_window(0, w.l2_up - 1) < target);
        assert_relative_eq!(w.l_low, ctx.m_n(w.n_t).unwrap().m_n);
        assert!(ctx.generation_window(2.0).is_err());
    }

    #[test]
    fn poly_window_sharp_regime() {
        let report = regular_poly_window(3, 0.5, 0.1, &|n| (n as f64).powi(3)).unwrap();
        assert_eq!(report.regime, RatioRegime::SharpRatioOne);
        assert_eq!(report.a, 0.0);
        assert_eq!(report.b, 0.0);
        assert_relative_eq!(report.leading_coefficient, 1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn poly_window_rejects_small_targets() {
        // Target below the disentanglement bound forces a >= 1.
        let err = regular_poly_window(3, 0.5, 0.1, &|n| 0.5 * n as f64).unwrap_err();
        assert!(matches!(
            err,
            BoundError::LimitOutOfRange { name: "a", .. }
        ));
    }

    #[test]
    fn poly_window_agrees_with_direct_evaluation() {
        // Predicted sharp ratio: direct window ratio at n = 10^6 with target
        // n^3 must sit within 5 percent of 1. theta diverges along this
        // sequence; theta_n = 1/ln^2 n keeps the bracket admissible and
        // tight.
        let report = regular_poly_window(3, 0.5, 0.1, &|n| (n as f64).powi(3)).unwrap();
        assert_eq!(report.regime, RatioRegime::SharpRatioOne);
        let n = 1_000_000u64;
        let tn = 1.0 / (n as f64).ln().powi(2);
        let law = OffspringLaw::regular(3).unwrap();
        let ctx = BoundContext::symbolic(RateFamily::Polynomial { p: 0.5 }, &law, 0.1)
            .unwrap()
            .with_theta(ThetaSpec::ForceInfinite { theta_n: Some(tn) });
        let ell = 10u64.pow(18);
        let w = ctx.time_window(n, ell).unwrap();
        let ratio = w.t_up / w.t_low;
        assert!(
            (ratio - 1.0).abs() <= 0.05,
            "direct ratio {ratio} deviates from the predicted limit 1"
        );
        // Leading term: ell^(p+1) * coefficient.
        let predicted = report.leading_coefficient * (ell as f64).powf(1.5);
        assert_relative_eq!(w.t_low, predicted, max_relative = 0.05);
    }

    #[test]
    fn reports_serialize_to_json() {
        let ctx = exp3_context(0.25);
        let b = ctx.m_n(64).unwrap();
        let w = ctx.time_window(64, 62).unwrap();
        let g = ctx.generation_window(100.0).unwrap();
        for v in [
            serde_json::to_value(&b).unwrap(),
            serde_json::to_value(&w).unwrap(),
            serde_json::to_value(&g).unwrap(),
        ] {
            assert!(v.is_object());
        }
    }
}
