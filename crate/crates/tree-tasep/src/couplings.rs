//! Pathwise comparisons between the exclusion process and simpler partner
//! processes on shared randomness.
//!
//! Three couplings are provided. [`canonical_pair`] runs two exclusion
//! processes with reservoir rates `λ₁ ≤ λ₂` on shared edge clocks and
//! certifies that the lower process stays dominated sitewise. [`irw_pair`]
//! runs the exclusion process together with free random walkers on shared
//! jump-opportunity streams and certifies that each walker stays at least
//! as deep as its particle. [`slowed_passage_times`] evaluates the slowed
//! variant in which particle `i` waits a level-worst-case exponential at
//! each generation and moves only after its predecessor cleared the next
//! one; its completion times satisfy a max-plus recursion over a keyed
//! random environment. [`exp_sum_tail`] provides the closed-form bounds on
//! weighted exponential sums used to calibrate all of these.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{Event, EventKind, EventLog, DEFAULT_MAX_EVENTS};
use crate::gw_tree::{Tree, TreeError, VertexId};
use crate::rate_field::{LevelRates, RateError, RateFamily};
use crate::rng::exp_from_keys;

/// Errors from the coupled constructions.
#[derive(Debug, Error)]
pub enum CouplingError {
    /// Parameters violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The certified ordering between the two components failed.
    #[error("ordering violated at event {event_index}: {detail}")]
    OrderingViolated {
        /// Index of the first effective event where the order broke.
        event_index: u64,
        /// Description of the violating state.
        detail: String,
    },
    /// The walker comparison needs level maxima that cover and dominate the
    /// particle rates, and the given configuration cannot provide them.
    #[error("domination unsupported: {0}")]
    DominationUnsupported(String),
    /// Underlying rate evaluation failed.
    #[error(transparent)]
    Rate(#[from] RateError),
    /// Underlying tree operation failed.
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// One row of an ordering certificate: the check outcome after an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CertificateRow {
    /// Index of the effective event, starting at zero.
    pub event_index: u64,
    /// Whether the claimed ordering held after the event.
    pub holds: bool,
}

/// Renders certificate rows as CSV with an `event_index,holds` header.
pub fn certificate_to_csv(rows: &[CertificateRow]) -> String {
    let mut out = String::from("event_index,holds\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.event_index, r.holds));
    }
    out
}

/// Parameters for [`canonical_pair`].
#[derive(Debug, Clone)]
pub struct CanonicalParams {
    /// Reservoir rate of the dominated process, may be zero.
    pub lambda1: f64,
    /// Reservoir rate of the dominating process, at least `lambda1`.
    pub lambda2: f64,
    /// Seed for all shared clocks.
    pub seed: u64,
    /// Time horizon.
    pub t_max: f64,
    /// Hard cap on processed proposals.
    pub max_events: u64,
    /// Vertices occupied in the dominated process before time zero.
    pub initial1: Vec<VertexId>,
    /// Vertices occupied in the dominating process before time zero; must
    /// cover `initial1` as a set.
    pub initial2: Vec<VertexId>,
}

impl CanonicalParams {
    /// Both processes empty at time zero with the default event cap.
    pub fn new(lambda1: f64, lambda2: f64, seed: u64, t_max: f64) -> Self {
        CanonicalParams {
            lambda1,
            lambda2,
            seed,
            t_max,
            max_events: DEFAULT_MAX_EVENTS,
            initial1: Vec::new(),
            initial2: Vec::new(),
        }
    }
}

/// Result of [`canonical_pair`]: two logs and the sitewise-order certificate.
#[derive(Debug)]
pub struct CanonicalPair {
    /// Log of the process with reservoir rate `lambda1`.
    pub lower: EventLog,
    /// Log of the process with reservoir rate `lambda2`.
    pub upper: EventLog,
    /// Sitewise inclusion check after every effective event.
    pub certificate: Vec<CertificateRow>,
    /// Time reached, equal to `t_max` unless the event cap hit first.
    pub final_time: f64,
    /// True when the event cap stopped the run before the horizon.
    pub truncated: bool,
    /// The tree, grown as far as either process reached.
    pub tree: Tree,
}

struct UnionRates {
    list: Vec<VertexId>,
    slot: HashMap<VertexId, usize>,
    out: Vec<f64>,
    total: f64,
}

impl UnionRates {
    fn new() -> Self {
        UnionRates {
            list: Vec::new(),
            slot: HashMap::new(),
            out: Vec::new(),
            total: 0.0,
        }
    }

    fn insert(&mut self, v: VertexId, out_rate: f64) {
        if self.slot.contains_key(&v) {
            return;
        }
        self.slot.insert(v, self.list.len());
        self.list.push(v);
        self.out.push(out_rate);
        self.total += out_rate;
    }

    fn remove(&mut self, v: VertexId) {
        let Some(slot) = self.slot.remove(&v) else { return };
        self.total -= self.out[slot];
        self.list.swap_remove(slot);
        self.out.swap_remove(slot);
        if slot < self.list.len() {
            self.slot.insert(self.list[slot], slot);
        }
        if self.total < 0.0 {
            self.total = 0.0;
        }
    }
}

/// Runs two exclusion processes with ordered reservoir rates on shared
/// clocks and certifies the sitewise order after every effective event.
///
/// Every edge carries one clock stream consumed by both processes; the
/// root carries a shared stream at rate `lambda1` feeding both and an
/// extra stream at rate `lambda2 - lambda1` feeding only the second. With
/// ordered initial occupancies the first process stays a subset of the
/// second at all times; a violation aborts with the offending event since
/// it can only come from a bookkeeping bug.
pub fn canonical_pair(
    mut tree: Tree,
    family: &RateFamily,
    params: &CanonicalParams,
) -> Result<CanonicalPair, CouplingError> {
    if !(params.lambda1 >= 0.0) || !(params.lambda2 >= params.lambda1) {
        return Err(CouplingError::InvalidInput(format!(
            "reservoir rates must satisfy 0 <= lambda1 <= lambda2, got {} and {}",
            params.lambda1, params.lambda2
        )));
    }
    if !params.lambda2.is_finite() {
        return Err(CouplingError::InvalidInput(
            "the larger reservoir rate must be finite".into(),
        ));
    }
    if !(params.t_max >= 0.0) {
        return Err(CouplingError::InvalidInput(format!(
            "time horizon must be non-negative, got {}",
            params.t_max
        )));
    }
    family.validate()?;
    let cover: std::collections::HashSet<VertexId> = params.initial2.iter().copied().collect();
    for &v in &params.initial1 {
        if !cover.contains(&v) {
            return Err(CouplingError::InvalidInput(format!(
                "initial occupancies are not ordered: vertex {v} is only in the lower process"
            )));
        }
    }

    let mut occ1: HashMap<VertexId, u64> = HashMap::new();
    let mut occ2: HashMap<VertexId, u64> = HashMap::new();
    let mut log1: Vec<Event> = Vec::new();
    let mut log2: Vec<Event> = Vec::new();
    let mut entered = [0u64; 2];
    let mut union = UnionRates::new();
    for (occ, initial) in [(&mut occ1, &params.initial1), (&mut occ2, &params.initial2)] {
        for &v in initial.iter() {
            if (v as usize) >= tree.len() {
                return Err(CouplingError::InvalidInput(format!(
                    "initial vertex {v} is not materialized in the tree"
                )));
            }
            let p = occ.len() as u64;
            if occ.insert(v, p).is_some() {
                return Err(CouplingError::InvalidInput(format!(
                    "initial vertex {v} is listed twice"
                )));
            }
        }
    }
    entered[0] = occ1.len() as u64;
    entered[1] = occ2.len() as u64;
    for &v in params.initial1.iter().chain(params.initial2.iter()) {
        tree.ensure_children(v)?;
        let out = family.out_rate(&tree, v)?;
        union.insert(v, out);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut time = 0.0f64;
    let mut processed = 0u64;
    let mut effective = 0u64;
    let mut certificate: Vec<CertificateRow> = Vec::new();
    let mut truncated = false;

    loop {
        if processed >= params.max_events {
            truncated = true;
            break;
        }
        let total = params.lambda2 + union.total;
        if total <= 0.0 {
            time = params.t_max;
            break;
        }
        let dt = rand_distr::Exp::new(total)
            .expect("total rate is positive")
            .sample(&mut rng);
        if time + dt > params.t_max {
            time = params.t_max;
            break;
        }
        time += dt;
        processed += 1;
        let mut u = rng.gen::<f64>() * total;
        let mut changed = false;
        if u < params.lambda2 {
            let shared = u < params.lambda1;
            let targets: &[usize] = if shared { &[0, 1] } else { &[1] };
            for &side in targets {
                let (occ, log, count) = if side == 0 {
                    (&mut occ1, &mut log1, &mut entered[0])
                } else {
                    (&mut occ2, &mut log2, &mut entered[1])
                };
                if occ.contains_key(&0) {
                    continue;
                }
                let p = *count;
                occ.insert(0, p);
                *count += 1;
                log.push(Event {
                    time,
                    kind: EventKind::Entry,
                    particle: p,
                    from: None,
                    to: 0,
                });
                changed = true;
            }
            if changed && !union.slot.contains_key(&0) {
                tree.ensure_children(0)?;
                let out = family.out_rate(&tree, 0)?;
                union.insert(0, out);
            }
        } else {
            u -= params.lambda2;
            if union.list.is_empty() {
                continue;
            }
            let mut idx = union.list.len() - 1;
            for (i, r) in union.out.iter().enumerate() {
                if u < *r {
                    idx = i;
                    break;
                }
                u -= r;
            }
            let x = union.list[idx];
            let kids = tree.children(x).expect("tracked vertices are grown");
            if kids.is_empty() {
                continue;
            }
            let mut y = kids.end - 1;
            for c in kids {
                let r = family.rate(&tree, x, c)?;
                if u < r {
                    y = c;
                    break;
                }
                u -= r;
            }
            let mut arrived = false;
            for side in 0..2usize {
                let (occ, log) = if side == 0 {
                    (&mut occ1, &mut log1)
                } else {
                    (&mut occ2, &mut log2)
                };
                let Some(&p) = occ.get(&x) else { continue };
                if occ.contains_key(&y) {
                    continue;
                }
                occ.remove(&x);
                occ.insert(y, p);
                log.push(Event {
                    time,
                    kind: EventKind::Jump,
                    particle: p,
                    from: Some(x),
                    to: y,
                });
                changed = true;
                arrived = true;
            }
            if arrived {
                tree.ensure_children(y)?;
                let out = family.out_rate(&tree, y)?;
                union.insert(y, out);
            }
            if !occ1.contains_key(&x) && !occ2.contains_key(&x) {
                union.remove(x);
            }
        }
        if changed {
            let holds = occ1.keys().all(|v| occ2.contains_key(v));
            certificate.push(CertificateRow {
                event_index: effective,
                holds,
            });
            if !holds {
                let missing = occ1
                    .keys()
                    .find(|v| !occ2.contains_key(v))
                    .copied()
                    .expect("a witness exists when the check fails");
                return Err(CouplingError::OrderingViolated {
                    event_index: effective,
                    detail: format!("vertex {missing} occupied below but not above"),
                });
            }
            effective += 1;
        }
    }

    Ok(CanonicalPair {
        lower: EventLog { events: log1 },
        upper: EventLog { events: log2 },
        certificate,
        final_time: time,
        truncated,
        tree,
    })
}

/// Parameters for [`irw_pair`].
#[derive(Debug, Clone, Copy)]
pub struct IrwParams {
    /// Reservoir rate, must be positive.
    pub lambda: f64,
    /// Seed for the shared opportunity streams.
    pub seed: u64,
    /// Time horizon.
    pub t_max: f64,
    /// Hard cap on processed proposals.
    pub max_events: u64,
}

impl IrwParams {
    /// Default event cap.
    pub fn new(lambda: f64, seed: u64, t_max: f64) -> Self {
        IrwParams {
            lambda,
            seed,
            t_max,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

/// Result of [`irw_pair`]: the exclusion log, the free-walker log, and the
/// per-particle depth-domination certificate.
#[derive(Debug)]
pub struct IrwPair {
    /// Log of the exclusion process; valid for replay.
    pub tasep: EventLog,
    /// Log of the walkers. Walkers ignore exclusion, so this log may place
    /// several particles on one vertex and is not replayable.
    pub walks: EventLog,
    /// Depth-domination check after every effective event.
    pub certificate: Vec<CertificateRow>,
    /// Time reached.
    pub final_time: f64,
    /// True when the event cap stopped the run before the horizon.
    pub truncated: bool,
    /// Particles entered (one walker each).
    pub entered: u64,
    /// Final exclusion-particle positions by ordinal.
    pub tasep_positions: Vec<VertexId>,
    /// Final walker positions by ordinal.
    pub walk_positions: Vec<VertexId>,
    /// The tree, grown as far as either component reached.
    pub tree: Tree,
}

/// Runs the exclusion process alongside free walkers on shared streams so
/// that every walker stays at least as deep as its particle.
///
/// Walkers jump to a uniformly random child at the level-maximal out-rate
/// of their generation, with no exclusion. Walker creation mirrors the
/// exclusion entries. Each particle-walker pair shares one opportunity
/// stream at the rate of the particle's generation; a single uniform mark
/// per opportunity decides both components, and at equal depths the walker
/// accepts with probability one, which forces the domination pathwise.
/// Level maxima must be non-increasing in the generation for the shared
/// stream to cover both components; a violation is reported as
/// [`CouplingError::DominationUnsupported`].
pub fn irw_pair<L: LevelRates>(
    mut tree: Tree,
    family: &RateFamily,
    levels: &L,
    params: &IrwParams,
) -> Result<IrwPair, CouplingError> {
    if !(params.lambda > 0.0) || !params.lambda.is_finite() {
        return Err(CouplingError::InvalidInput(format!(
            "reservoir rate must be positive and finite, got {}",
            params.lambda
        )));
    }
    if !(params.t_max >= 0.0) {
        return Err(CouplingError::InvalidInput(format!(
            "time horizon must be non-negative, got {}",
            params.t_max
        )));
    }
    family.validate()?;

    // Level maxima, extended on demand; rates past a tabulated horizon are
    // zero, matching the absence of edge data there.
    let mut w_levels: Vec<f64> = Vec::new();
    let level_rate = |g: u64, w: &mut Vec<f64>| -> Result<f64, CouplingError> {
        while (w.len() as u64) <= g {
            let l = w.len() as u64;
            let value = match levels.horizon() {
                Some(h) if l > h => 0.0,
                _ => levels.out_max(l),
            };
            if let Some(&prev) = w.last() {
                if value > prev {
                    return Err(CouplingError::DominationUnsupported(format!(
                        "level maxima increase from {prev} to {value} at generation {l}"
                    )));
                }
            }
            w.push(value);
        }
        Ok(w[g as usize])
    };

    let mut occ: HashMap<VertexId, u64> = HashMap::new();
    let mut tasep_pos: Vec<VertexId> = Vec::new();
    let mut walk_pos: Vec<VertexId> = Vec::new();
    let mut stream_rate: Vec<f64> = Vec::new();
    let mut tasep_log: Vec<Event> = Vec::new();
    let mut walk_log: Vec<Event> = Vec::new();
    let mut certificate: Vec<CertificateRow> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut time = 0.0f64;
    let mut processed = 0u64;
    let mut effective = 0u64;
    let mut truncated = false;

    loop {
        if processed >= params.max_events {
            truncated = true;
            break;
        }
        let streams: f64 = stream_rate.iter().sum();
        let total = params.lambda + streams;
        let dt = rand_distr::Exp::new(total)
            .expect("total rate is positive")
            .sample(&mut rng);
        if time + dt > params.t_max {
            time = params.t_max;
            break;
        }
        time += dt;
        processed += 1;
        let mut u = rng.gen::<f64>() * total;
        let mut changed = false;
        if u < params.lambda {
            if !occ.contains_key(&0) {
                let p = tasep_pos.len() as u64;
                occ.insert(0, p);
                tasep_pos.push(0);
                walk_pos.push(0);
                stream_rate.push(level_rate(0, &mut w_levels)?);
                tree.ensure_children(0)?;
                for (log, kind) in [(&mut tasep_log, EventKind::Entry), (&mut walk_log, EventKind::Entry)] {
                    log.push(Event {
                        time,
                        kind,
                        particle: p,
                        from: None,
                        to: 0,
                    });
                }
                changed = true;
            }
        } else {
            u -= params.lambda;
            if stream_rate.is_empty() {
                continue;
            }
            let mut i = stream_rate.len() - 1;
            for (k, r) in stream_rate.iter().enumerate() {
                if u < *r {
                    i = k;
                    break;
                }
                u -= r;
            }
            let w = stream_rate[i];
            if w <= 0.0 {
                continue;
            }
            let x = tasep_pos[i];
            let r_x = family.out_rate(&tree, x)?;
            debug_assert!(r_x <= w * (1.0 + 1e-12), "stream must cover the particle rate");
            // One shared mark decides both components.
            if u < r_x {
                let kids = tree.children(x).expect("occupied vertices are grown");
                let mut y = kids.end.saturating_sub(1);
                let mut acc = u;
                for c in kids {
                    let r = family.rate(&tree, x, c)?;
                    if acc < r {
                        y = c;
                        break;
                    }
                    acc -= r;
                }
                if !occ.contains_key(&y) {
                    occ.remove(&x);
                    occ.insert(y, i as u64);
                    tasep_pos[i] = y;
                    tree.ensure_children(y)?;
                    stream_rate[i] = level_rate(u64::from(tree.generation(y)), &mut w_levels)?;
                    tasep_log.push(Event {
                        time,
                        kind: EventKind::Jump,
                        particle: i as u64,
                        from: Some(x),
                        to: y,
                    });
                    changed = true;
                } else {
                    tasep_log.push(Event {
                        time,
                        kind: EventKind::Blocked,
                        particle: i as u64,
                        from: Some(x),
                        to: y,
                    });
                }
            }
            let xw = walk_pos[i];
            let gw = u64::from(tree.generation(xw));
            let walker_rate = level_rate(gw, &mut w_levels)?;
            if u < walker_rate {
                let kids = tree.ensure_children(xw)?;
                if kids.is_empty() {
                    return Err(CouplingError::DominationUnsupported(format!(
                        "walker {i} reached childless vertex {xw} while its level rate is positive"
                    )));
                }
                let count = kids.end - kids.start;
                let pick = kids.start + rng.gen_range(0..count);
                walk_pos[i] = pick;
                walk_log.push(Event {
                    time,
                    kind: EventKind::Jump,
                    particle: i as u64,
                    from: Some(xw),
                    to: pick,
                });
                changed = true;
            }
        }
        if changed {
            let violation = (0..tasep_pos.len()).find(|&i| {
                tree.generation(tasep_pos[i]) > tree.generation(walk_pos[i])
            });
            certificate.push(CertificateRow {
                event_index: effective,
                holds: violation.is_none(),
            });
            if let Some(i) = violation {
                return Err(CouplingError::OrderingViolated {
                    event_index: effective,
                    detail: format!(
                        "particle {i} at generation {} outruns its walker at {}",
                        tree.generation(tasep_pos[i]),
                        tree.generation(walk_pos[i])
                    ),
                });
            }
            effective += 1;
        }
    }

    Ok(IrwPair {
        tasep: EventLog { events: tasep_log },
        walks: EventLog { events: walk_log },
        certificate,
        final_time: time,
        truncated,
        entered: tasep_pos.len() as u64,
        tasep_positions: tasep_pos,
        walk_positions: walk_pos,
        tree,
    })
}

/// Completion times of the slowed exclusion dynamics.
///
/// `times[i][g]` is the time particle `i + 1` arrives at generation `g`,
/// for `g` up to the tracked depth. Entry counts as arrival at generation
/// zero.
#[derive(Debug, Clone, Serialize)]
pub struct SlowedTimes {
    /// Number of particles.
    pub n: u64,
    /// Deepest tracked generation.
    pub m: u64,
    /// Reservoir rate used for the entry waits.
    pub lambda: f64,
    /// Arrival times indexed `[particle - 1][generation]`.
    pub times: Vec<Vec<f64>>,
}

/// Evaluates the slowed dynamics in which particle `i` waits a fresh
/// exponential scaled by the worst edge rate of its generation, and jumps
/// only after particle `i - 1` left the generation above.
///
/// Entry waits are scaled by the reservoir rate and gated on the
/// predecessor leaving the root. Blocking is tracked up to generation `m`;
/// arrivals at `m` itself wait only on the particle's own progress, which
/// matches restricting the associated percolation paths to the band of
/// width `m` around the diagonal. Waits are drawn from a keyed environment
/// indexed by `(particle + generation, particle)`, so equal seeds share
/// base draws with the percolation evaluation cell by cell.
///
/// `m_n` is the caller's separation generation; the tracked depth must not
/// exceed it, since beyond it the slowed dynamics no longer model the
/// blocking faithfully.
pub fn slowed_passage_times(
    n: u64,
    m: u64,
    m_n: f64,
    lambda: f64,
    family: &RateFamily,
    seed: u64,
) -> Result<SlowedTimes, CouplingError> {
    if n == 0 {
        return Err(CouplingError::InvalidInput("at least one particle is required".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(CouplingError::InvalidInput(format!(
            "reservoir rate must be positive and finite, got {lambda}"
        )));
    }
    if (m as f64) > m_n {
        return Err(CouplingError::InvalidInput(format!(
            "tracked depth {m} exceeds the separation generation {m_n}"
        )));
    }
    family.validate()?;
    let mut r_min: Vec<f64> = Vec::with_capacity(m as usize);
    for g in 0..m {
        r_min.push(family.edge_rate_at(g)?);
    }
    let mut times: Vec<Vec<f64>> = Vec::with_capacity(n as usize);
    for b in 1..=n {
        let mut row = vec![0.0f64; m as usize + 1];
        for g in 0..=m {
            let a = b + g;
            let omega = exp_from_keys(seed, a, b, 0);
            let wait = if g == 0 {
                omega / lambda
            } else {
                omega / r_min[g as usize - 1]
            };
            let own = if g == 0 {
                if b == 1 {
                    0.0
                } else {
                    times[b as usize - 2][0]
                }
            } else {
                row[g as usize - 1]
            };
            let gate = if b >= 2 && g + 1 <= m {
                times[b as usize - 2][g as usize + 1]
            } else {
                0.0
            };
            row[g as usize] = own.max(gate) + wait;
        }
        times.push(row);
    }
    Ok(SlowedTimes {
        n,
        m,
        lambda,
        times,
    })
}

/// The three closed-form bounds on `P(Σ ω_i / c_i ≤ t)` for independent
/// unit exponentials `ω_i`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpSumBounds {
    /// Lower bound `1 − e^{−δct} (1−δ)^{−cS}`.
    pub lower: f64,
    /// Chernoff upper bound `e^{δct} (1+δ)^{−cS}`.
    pub upper1: f64,
    /// Entropy-style upper bound `exp(m(1 + ln(t/m)) + Σ ln c_i)` with
    /// `m` the number of terms.
    pub upper2: f64,
}

/// Bounds the distribution function of a weighted sum of independent unit
/// exponentials at `t`, with `S = Σ 1/c_i` and `c = min c_i`.
///
/// All three bounds hold for every `t ≥ 0` and `δ ∈ (0, 1)`; they may be
/// vacuous (negative lower, upper above one) away from their useful range.
pub fn exp_sum_tail(c: &[f64], t: f64, delta: f64) -> Result<ExpSumBounds, CouplingError> {
    if c.is_empty() {
        return Err(CouplingError::InvalidInput("at least one rate is required".into()));
    }
    if c.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(CouplingError::InvalidInput(
            "all rates must be positive and finite".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CouplingError::InvalidInput(format!(
            "delta must lie strictly between 0 and 1, got {delta}"
        )));
    }
    if !(t >= 0.0) {
        return Err(CouplingError::InvalidInput(format!(
            "the time must be non-negative, got {t}"
        )));
    }
    let s: f64 = c.iter().map(|&x| 1.0 / x).sum();
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    // Markov with exponent m/t needs one entropy factor per term; fewer
    // would undercut the true law whenever t exceeds the term count.
    let m = c.len() as f64;
    let lower = 1.0 - (-delta * cmin * t).exp() / (1.0 - delta).powf(cmin * s);
    let upper1 = (delta * cmin * t).exp() / (1.0 + delta).powf(cmin * s);
    let log_prod: f64 = c.iter().map(|&x| x.ln()).sum();
    let upper2 = (m * (1.0 + (t / m).ln()) + log_prod).exp();
    Ok(ExpSumBounds {
        lower,
        upper1,
        upper2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gw_tree::OffspringLaw;
    use crate::rate_field::{aggregates, RateTable, SymbolicLevels};

    fn exp3() -> RateFamily {
        RateFamily::ExponentialHomogeneous { d: 3 }
    }

    fn lazy3(seed: u64) -> Tree {
        Tree::new_lazy(OffspringLaw::regular(3).unwrap(), seed)
    }

    #[test]
    fn equal_reservoir_rates_stay_identical() {
        for seed in [1u64, 2, 3] {
            let p = CanonicalParams::new(1.0, 1.0, seed, 10.0);
            let pair = canonical_pair(lazy3(seed), &exp3(), &p).unwrap();
            assert_eq!(pair.lower, pair.upper);
            assert!(pair.certificate.iter().all(|r| r.holds));
            assert!(!pair.lower.events.is_empty());
        }
    }

    #[test]
    fn zero_lower_rate_leaves_the_lower_process_empty() {
        let p = CanonicalParams::new(0.0, 1.0, 5, 15.0);
        let pair = canonical_pair(lazy3(5), &exp3(), &p).unwrap();
        assert!(pair.lower.events.is_empty());
        assert!(!pair.upper.events.is_empty());
        assert!(pair.certificate.iter().all(|r| r.holds));
    }

    #[test]
    fn ordered_rates_keep_the_sitewise_order_across_seeds() {
        for seed in 0..100u64 {
            let p = CanonicalParams::new(0.5, 1.0, seed, 20.0);
            let pair = canonical_pair(lazy3(seed), &exp3(), &p).unwrap();
            assert!(!pair.truncated);
            assert_eq!(pair.final_time, 20.0);
            assert!(pair.certificate.iter().all(|r| r.holds));
            assert!(pair.upper.events.len() >= pair.lower.events.len());
        }
    }

    #[test]
    fn ordered_seeds_allow_seeded_starts_and_reject_unordered_ones() {
        let mut tree = lazy3(9);
        tree.materialize_to(3);
        let mut p = CanonicalParams::new(0.5, 1.0, 9, 5.0);
        p.initial1 = vec![1];
        p.initial2 = vec![1, 2];
        let pair = canonical_pair(tree.clone(), &exp3(), &p).unwrap();
        assert!(pair.certificate.iter().all(|r| r.holds));
        p.initial1 = vec![3];
        p.initial2 = vec![1, 2];
        assert!(matches!(
            canonical_pair(tree, &exp3(), &p),
            Err(CouplingError::InvalidInput(_))
        ));
    }

    #[test]
    fn single_particle_on_a_chain_moves_with_its_walker() {
        // One edge of rate 1: the level maximum equals the sole rate, the
        // shared mark accepts both components together, and the first
        // particle and its walker jump at the same instant. Rates past the
        // one-generation horizon are zero, so both freeze at the leaf.
        let table = RateTable::from_entries([(0, 1, 1.0)]).unwrap();
        let family = RateFamily::CustomTable {
            table,
            decay_class: None,
        };
        let mut tree = Tree::from_parents(&[None, Some(0)]).unwrap();
        let levels = aggregates(&family, &mut tree, 1).unwrap();
        let params = IrwParams::new(1.0, 7, 40.0);
        let pair = irw_pair(tree, &family, &levels, &params).unwrap();
        assert!(pair.certificate.iter().all(|r| r.holds));
        let t_jump: Vec<f64> = pair
            .tasep
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Jump && e.particle == 0)
            .map(|e| e.time)
            .collect();
        let w_jump: Vec<f64> = pair
            .walks
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Jump && e.particle == 0)
            .map(|e| e.time)
            .collect();
        assert_eq!(t_jump, w_jump);
        assert_eq!(pair.tasep_positions[0], pair.walk_positions[0]);
        let entries_t: Vec<f64> = pair
            .tasep
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Entry)
            .map(|e| e.time)
            .collect();
        let entries_w: Vec<f64> = pair
            .walks
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Entry)
            .map(|e| e.time)
            .collect();
        assert_eq!(entries_t, entries_w);
    }

    #[test]
    fn walkers_dominate_particles_across_seeds() {
        let family = exp3();
        let law = OffspringLaw::regular(3).unwrap();
        let levels = SymbolicLevels::new(&family, &law).unwrap();
        for seed in 0..100u64 {
            let params = IrwParams::new(1.0, seed, 50.0);
            let pair = irw_pair(lazy3(seed), &family, &levels, &params).unwrap();
            assert!(!pair.truncated, "seed {seed}");
            assert!(pair.certificate.iter().all(|r| r.holds));
            // The aggregated walker current dominates the exclusion
            // current at every sampled generation and time.
            for ell in 0..4u64 {
                for k in 1..=5 {
                    let t = 10.0 * k as f64;
                    let j = crate::engine::current_at(&pair.tree, &pair.tasep, ell, t);
                    let jw = crate::engine::current_at(&pair.tree, &pair.walks, ell, t);
                    assert!(j <= jw, "seed {seed}: J_{ell}({t}) = {j} > {jw}");
                }
            }
        }
    }

    #[test]
    fn lone_slowed_particle_accumulates_its_waits() {
        let lambda = 0.7;
        let out = slowed_passage_times(1, 6, 10.0, lambda, &exp3(), 99).unwrap();
        let mut acc = exp_from_keys(99, 1, 1, 0) / lambda;
        assert_eq!(out.times[0][0], acc);
        for g in 1..=6u64 {
            let rate = exp3().edge_rate_at(g - 1).unwrap();
            acc += exp_from_keys(99, 1 + g, 1, 0) / rate;
            assert_eq!(out.times[0][g as usize], acc);
        }
    }

    #[test]
    fn slowed_times_satisfy_the_max_plus_recursion() {
        let lambda = 1.3;
        let family = exp3();
        let out = slowed_passage_times(6, 5, 6.0, lambda, &family, 4242).unwrap();
        let t = &out.times;
        for b in 1..=6usize {
            for g in 0..=5usize {
                let omega = exp_from_keys(4242, (b + g) as u64, b as u64, 0);
                let wait = if g == 0 {
                    omega / lambda
                } else {
                    omega / family.edge_rate_at(g as u64 - 1).unwrap()
                };
                let own = if g == 0 {
                    if b == 1 {
                        0.0
                    } else {
                        t[b - 2][0]
                    }
                } else {
                    t[b - 1][g - 1]
                };
                let gate = if b >= 2 && g + 1 <= 5 { t[b - 2][g + 1] } else { 0.0 };
                assert_eq!(t[b - 1][g], own.max(gate) + wait, "({b}, {g})");
            }
        }
        // Arrival times grow along each path and with the particle index.
        for b in 1..6 {
            for g in 0..=5 {
                assert!(t[b][g] > t[b - 1][g]);
                if g > 0 {
                    assert!(t[b][g] > t[b][g - 1]);
                }
            }
        }
    }

    #[test]
    fn depth_zero_tracking_reduces_to_a_reservoir_queue() {
        // With no tracked generations the entries form a pure tandem of
        // reservoir waits.
        let out = slowed_passage_times(5, 0, 3.0, 2.0, &exp3(), 11).unwrap();
        let mut acc = 0.0;
        for b in 1..=5u64 {
            acc += exp_from_keys(11, b, b, 0) / 2.0;
            assert_eq!(out.times[b as usize - 1][0], acc);
        }
    }

    #[test]
    fn single_term_bounds_bracket_the_exponential_law() {
        let b = exp_sum_tail(&[1.0], 1.0, 0.5).unwrap();
        let cdf = 1.0 - (-1.0f64).exp();
        assert!(b.lower <= cdf);
        assert!(cdf <= b.upper1.min(b.upper2));
    }

    #[test]
    fn equal_rate_bounds_bracket_the_gamma_law() {
        // Eight rate-2 terms give a Gamma(8, 2) sum; the Monte Carlo
        // distribution function must sit inside the bracket at half, one,
        // and two mean multiples.
        let c = vec![2.0f64; 8];
        let s: f64 = 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(991);
        let gamma = rand_distr::Gamma::new(8.0, 0.5).unwrap();
        let samples: Vec<f64> = (0..1_000_000).map(|_| gamma.sample(&mut rng)).collect();
        let expected = [0.051134, 0.547039, 0.990026];
        for (k, mult) in [0.5f64, 1.0, 2.0].iter().enumerate() {
            let t = mult * s;
            let b = exp_sum_tail(&c, t, 0.5).unwrap();
            let cdf = samples.iter().filter(|&&x| x <= t).count() as f64 / 1e6;
            assert!((cdf - expected[k]).abs() < 2e-3, "t = {t}: cdf {cdf}");
            assert!(b.lower <= cdf, "t = {t}: lower {} above cdf {cdf}", b.lower);
            assert!(
                cdf <= b.upper1.min(b.upper2),
                "t = {t}: cdf {cdf} above upper {}",
                b.upper1.min(b.upper2)
            );
        }
    }

    #[test]
    fn bounds_degenerate_gracefully_as_delta_vanishes() {
        let c = vec![1.0f64; 4];
        let b = exp_sum_tail(&c, 2.0, 1e-9).unwrap();
        assert!(b.lower.abs() < 1e-6);
        assert!((b.upper1 - 1.0).abs() < 1e-6);
        assert!(matches!(
            exp_sum_tail(&c, 2.0, 0.0),
            Err(CouplingError::InvalidInput(_))
        ));
        assert!(matches!(
            exp_sum_tail(&[], 2.0, 0.5),
            Err(CouplingError::InvalidInput(_))
        ));
    }

    #[test]
    fn certificates_render_as_csv() {
        let rows = vec![
            CertificateRow {
                event_index: 0,
                holds: true,
            },
            CertificateRow {
                event_index: 1,
                holds: false,
            },
        ];
        assert_eq!(
            certificate_to_csv(&rows),
            "event_index,holds\n0,true\n1,false\n"
        );
    }
}
