//! Finite truncations with open exits, their exact stationary laws, and
//! long-run diagnostics.
//!
//! A truncation keeps the tree up to generation `n`; particles at that
//! boundary depart at their full out-rate, and the reservoir feeds the
//! root as usual. The resulting chain on `{0,1}^sites` is finite and
//! irreducible, so its stationary distribution is computable exactly by a
//! dense balance solve for small state spaces and by uniformized power
//! iteration for larger ones. On top of the exact laws the module checks
//! stochastic monotonicity against larger truncations and Bernoulli
//! products, evaluates the product-measure generator pairing that
//! characterizes flow rates, and extracts density profiles and root
//! current rates from event logs.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{EventKind, EventLog};
use crate::gw_tree::{Tree, TreeError, VertexId};
use crate::rate_field::{RateError, RateFamily};

/// States solvable by the dense balance solve when chosen automatically.
const DENSE_AUTO_CAP: u64 = 1 << 9;
/// States accepted by a forced dense solve.
const DENSE_CAP: u64 = 1 << 12;
/// States accepted by the iterative solver.
const STATE_CAP: u64 = 1 << 20;

/// Errors from truncation construction and stationary analysis.
#[derive(Debug, Error)]
pub enum EquilibriumError {
    /// Parameters violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The state space exceeds what the requested solver accepts.
    #[error("state space of {states} configurations exceeds the {cap} cap; use simulation estimates instead")]
    TooLarge {
        /// Number of configurations.
        states: u64,
        /// The exceeded cap.
        cap: u64,
    },
    /// The iterative solver missed the residual target.
    #[error("solver stalled at residual {residual}, target {target}")]
    NotConverged {
        /// Residual reached.
        residual: f64,
        /// Residual demanded.
        target: f64,
    },
    /// Underlying rate evaluation failed.
    #[error(transparent)]
    Rate(#[from] RateError),
    /// Underlying tree operation failed.
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// The exclusion process cut at generation `depth` with open exits.
#[derive(Debug, Clone)]
pub struct Truncation {
    /// The tree, materialized one generation past the cut.
    pub tree: Tree,
    /// Edge rates.
    pub family: RateFamily,
    /// Largest retained generation.
    pub depth: u32,
    /// Reservoir rate at the root.
    pub lambda: f64,
    /// Vertex ids of the retained sites, in id order; the root is first.
    sites: Vec<VertexId>,
    /// Per site: admissible moves to other sites with their rates.
    moves: Vec<Vec<(usize, f64)>>,
    /// Per site: departure rate off the truncation, zero for interior sites.
    exit: Vec<f64>,
}

impl Truncation {
    /// Cuts `tree` at `depth` under `family` with reservoir rate `lambda`.
    ///
    /// The tree is materialized to `depth + 1` so boundary departure rates
    /// equal the full out-rates. Boundary rates must be positive, else the
    /// chain would trap particles.
    pub fn new(
        mut tree: Tree,
        family: RateFamily,
        depth: u32,
        lambda: f64,
    ) -> Result<Self, EquilibriumError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(EquilibriumError::InvalidInput(format!(
                "reservoir rate must be positive and finite, got {lambda}"
            )));
        }
        family.validate()?;
        tree.materialize_to(depth + 1);
        let mut sites = Vec::new();
        for v in 0..tree.len() as VertexId {
            if tree.generation(v) <= depth {
                sites.push(v);
            }
        }
        if sites.len() > 63 {
            return Err(EquilibriumError::InvalidInput(format!(
                "{} sites exceed the 63-site configuration-mask limit",
                sites.len()
            )));
        }
        let site_of: HashMap<VertexId, usize> =
            sites.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut moves = vec![Vec::new(); sites.len()];
        let mut exit = vec![0.0; sites.len()];
        for (s, &x) in sites.iter().enumerate() {
            if tree.generation(x) == depth {
                let r = family.out_rate(&tree, x)?;
                if !(r > 0.0) {
                    return Err(EquilibriumError::InvalidInput(format!(
                        "boundary vertex {x} has departure rate {r}; the cut must stay open"
                    )));
                }
                exit[s] = r;
            } else {
                let kids = tree
                    .children(x)
                    .expect("interior vertices are materialized");
                for c in kids {
                    let r = family.rate(&tree, x, c)?;
                    let t = site_of[&c];
                    moves[s].push((t, r));
                }
            }
        }
        Ok(Truncation {
            tree,
            family,
            depth,
            lambda,
            sites,
            moves,
            exit,
        })
    }

    /// Retained vertex ids, root first.
    pub fn sites(&self) -> &[VertexId] {
        &self.sites
    }

    /// Number of configurations of the cut process.
    pub fn state_count(&self) -> u64 {
        1u64 << self.sites.len()
    }

    /// All transitions `(from, to, rate)` over configuration masks.
    fn transitions(&self) -> Vec<(u64, u64, f64)> {
        let states = self.state_count();
        let mut out = Vec::new();
        for sigma in 0..states {
            if sigma & 1 == 0 {
                out.push((sigma, sigma | 1, self.lambda));
            }
            for s in 0..self.sites.len() {
                let bit = 1u64 << s;
                if sigma & bit == 0 {
                    continue;
                }
                if self.exit[s] > 0.0 {
                    out.push((sigma, sigma & !bit, self.exit[s]));
                }
                for &(t, r) in &self.moves[s] {
                    let tbit = 1u64 << t;
                    if sigma & tbit == 0 {
                        out.push((sigma, (sigma & !bit) | tbit, r));
                    }
                }
            }
        }
        out
    }

    /// Total rate out of any configuration is at most this.
    fn rate_bound(&self) -> f64 {
        let per_site: f64 = (0..self.sites.len())
            .map(|s| self.exit[s] + self.moves[s].iter().map(|&(_, r)| r).sum::<f64>())
            .sum();
        self.lambda + per_site
    }
}

/// How [`exact_stationary_with`] solves the balance equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Dense for small state spaces, iterative otherwise.
    Auto,
    /// Dense LU on the balance equations.
    Dense,
    /// Uniformized power iteration.
    Iterative,
}

/// A stationary distribution over configurations of a truncation.
#[derive(Debug, Clone)]
pub struct StationaryDist {
    /// Probability per configuration mask; bit `s` is site `s`.
    pub probabilities: Vec<f64>,
    /// Vertex ids behind the mask bits, matching the truncation.
    pub sites: Vec<VertexId>,
    /// Largest absolute global-balance violation.
    pub residual: f64,
}

impl StationaryDist {
    /// Occupation probability of each site.
    pub fn marginals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.sites.len()];
        for (sigma, &p) in self.probabilities.iter().enumerate() {
            for (s, slot) in out.iter_mut().enumerate() {
                if sigma & (1 << s) != 0 {
                    *slot += p;
                }
            }
        }
        out
    }

    /// Serializes per-site marginals as CSV `vertex,marginal`.
    pub fn marginals_to_csv(&self) -> String {
        let mut out = String::from("vertex,marginal\n");
        for (s, m) in self.marginals().iter().enumerate() {
            out.push_str(&format!("{},{m}\n", self.sites[s]));
        }
        out
    }
}

fn balance_residual(transitions: &[(u64, u64, f64)], pi: &[f64]) -> f64 {
    let mut net = vec![0.0f64; pi.len()];
    for &(from, to, rate) in transitions {
        let flow = pi[from as usize] * rate;
        net[from as usize] -= flow;
        net[to as usize] += flow;
    }
    net.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

const RESIDUAL_TARGET: f64 = 1e-10;

/// Solves for the stationary distribution of a truncation.
///
/// Errors when the state space exceeds 2^20 configurations; callers
/// should fall back to simulation estimates then.
pub fn exact_stationary(trunc: &Truncation) -> Result<StationaryDist, EquilibriumError> {
    exact_stationary_with(trunc, SolveMethod::Auto)
}

/// Solves for the stationary distribution with an explicit method choice.
pub fn exact_stationary_with(
    trunc: &Truncation,
    method: SolveMethod,
) -> Result<StationaryDist, EquilibriumError> {
    let states = trunc.state_count();
    let cap = match method {
        SolveMethod::Dense => DENSE_CAP,
        _ => STATE_CAP,
    };
    if states > cap {
        return Err(EquilibriumError::TooLarge { states, cap });
    }
    let transitions = trunc.transitions();
    let dense = match method {
        SolveMethod::Dense => true,
        SolveMethod::Iterative => false,
        SolveMethod::Auto => states <= DENSE_AUTO_CAP,
    };
    let n = states as usize;
    let mut pi: Vec<f64> = if dense {
        // Global balance as columns of the transposed generator; the last
        // equation is replaced by normalization.
        let mut a = DMatrix::<f64>::zeros(n, n);
        for &(from, to, rate) in &transitions {
            a[(to as usize, from as usize)] += rate;
            a[(from as usize, from as usize)] -= rate;
        }
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        let solved = a
            .lu()
            .solve(&b)
            .ok_or(EquilibriumError::NotConverged {
                residual: f64::INFINITY,
                target: RESIDUAL_TARGET,
            })?;
        solved.iter().map(|&p| p.max(0.0)).collect()
    } else {
        let uni = trunc.rate_bound() * 1.02;
        let mut cur = vec![1.0 / n as f64; n];
        let mut next = vec![0.0f64; n];
        let mut sweeps = 0u64;
        loop {
            for _ in 0..50 {
                next.copy_from_slice(&cur);
                for &(from, to, rate) in &transitions {
                    let delta = cur[from as usize] * rate / uni;
                    next[from as usize] -= delta;
                    next[to as usize] += delta;
                }
                std::mem::swap(&mut cur, &mut next);
                sweeps += 1;
            }
            let total: f64 = cur.iter().sum();
            for p in cur.iter_mut() {
                *p /= total;
            }
            if balance_residual(&transitions, &cur) <= RESIDUAL_TARGET {
                break;
            }
            if sweeps >= 500_000 {
                return Err(EquilibriumError::NotConverged {
                    residual: balance_residual(&transitions, &cur),
                    target: RESIDUAL_TARGET,
                });
            }
        }
        cur
    };
    let total: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= total;
    }
    let residual = balance_residual(&transitions, &pi);
    if residual > RESIDUAL_TARGET {
        return Err(EquilibriumError::NotConverged {
            residual,
            target: RESIDUAL_TARGET,
        });
    }
    Ok(StationaryDist {
        probabilities: pi,
        sites: trunc.sites.clone(),
        residual,
    })
}

/// Whether the configuration lies in the upward-closed set generated by
/// the base masks.
fn hits_filter(sigma: u64, bases: &[u64]) -> bool {
    bases.iter().any(|&b| sigma & b == b)
}

/// Expectation of the increasing indicator generated by `bases` under a
/// stationary distribution.
pub fn expectation_increasing(dist: &StationaryDist, bases: &[u64]) -> f64 {
    dist.probabilities
        .iter()
        .enumerate()
        .filter(|&(sigma, _)| hits_filter(sigma as u64, bases))
        .map(|(_, &p)| p)
        .sum()
}

/// Expectation of the same indicator under the Bernoulli-`rho` product,
/// by inclusion-exclusion over the base masks.
pub fn bernoulli_expectation(rho: f64, bases: &[u64]) -> f64 {
    let k = bases.len();
    let mut total = 0.0;
    for pick in 1u32..(1 << k) {
        let mut union = 0u64;
        for (i, &b) in bases.iter().enumerate() {
            if pick & (1 << i) != 0 {
                union |= b;
            }
        }
        let term = rho.powi(union.count_ones() as i32);
        if pick.count_ones() % 2 == 1 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

/// Random upward-closed sets, each generated by one to three base masks
/// over `sites` coordinates.
pub fn sample_upward_sets(sites: usize, count: usize, seed: u64) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let bases = rng.gen_range(1..=3usize);
        let mut set = Vec::with_capacity(bases);
        for _ in 0..bases {
            let size = rng.gen_range(1..=3usize.min(sites));
            let mut mask = 0u64;
            while mask.count_ones() < size as u32 {
                mask |= 1 << rng.gen_range(0..sites);
            }
            set.push(mask);
        }
        out.push(set);
    }
    out
}

/// Result of a stochastic-ordering check over sampled increasing
/// indicators.
#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    /// Number of indicators checked.
    pub checked: usize,
    /// Whether every expectation was ordered within tolerance.
    pub holds: bool,
    /// Largest ordering violation observed, zero when none.
    pub max_gap: f64,
    /// Index of the worst indicator when the check fails.
    pub witness: Option<usize>,
}

/// Checks `E_small[f] <= E_big[f] + tol` for each sampled increasing
/// indicator, with the smaller truncation extended by empty sites.
///
/// The base masks index the larger site list; the smaller distribution
/// embeds into it by matching vertex ids, so its absent sites read as
/// vacant.
pub fn monotone_check(
    small: &StationaryDist,
    big: &StationaryDist,
    sets: &[Vec<u64>],
    tol: f64,
) -> Result<MonotoneReport, EquilibriumError> {
    let pos: HashMap<VertexId, usize> =
        big.sites.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut embed = Vec::with_capacity(small.sites.len());
    for &v in &small.sites {
        let Some(&i) = pos.get(&v) else {
            return Err(EquilibriumError::InvalidInput(format!(
                "site {v} of the smaller truncation is missing from the larger one"
            )));
        };
        embed.push(i);
    }
    let mut max_gap = 0.0f64;
    let mut witness = None;
    for (idx, bases) in sets.iter().enumerate() {
        let mut e_small = 0.0;
        for (sigma, &p) in small.probabilities.iter().enumerate() {
            let mut lifted = 0u64;
            for (s, &i) in embed.iter().enumerate() {
                if sigma & (1 << s) != 0 {
                    lifted |= 1 << i;
                }
            }
            if hits_filter(lifted, bases) {
                e_small += p;
            }
        }
        let e_big = expectation_increasing(big, bases);
        let gap = e_small - e_big;
        if gap > max_gap {
            max_gap = gap;
            witness = Some(idx);
        }
    }
    let holds = max_gap <= tol;
    Ok(MonotoneReport {
        checked: sets.len(),
        holds,
        max_gap,
        witness: if holds { None } else { witness },
    })
}

/// Evaluates the generator of the exclusion process paired with the
/// Bernoulli-`rho` product on the indicator of all of `a` being occupied.
///
/// The pairing reduces to `(1 - rho) rho^{|A|}` times the net boundary
/// rate into `a`, plus a `lambda / rho` reservoir term when the root
/// belongs to `a`. It vanishes identically under a flow rule with
/// `lambda = rho q(o)`, which is the computable signature of product
/// invariance.
pub fn flow_generator_identity(
    tree: &mut Tree,
    family: &RateFamily,
    a: &[VertexId],
    rho: f64,
    lambda: f64,
) -> Result<f64, EquilibriumError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(EquilibriumError::InvalidInput(format!(
            "density must lie strictly between 0 and 1, got {rho}"
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(EquilibriumError::InvalidInput(format!(
            "reservoir rate must be non-negative and finite, got {lambda}"
        )));
    }
    family.validate()?;
    let members: std::collections::HashSet<VertexId> = a.iter().copied().collect();
    if members.len() != a.len() {
        return Err(EquilibriumError::InvalidInput(
            "the vertex set contains duplicates".into(),
        ));
    }
    let mut boundary = 0.0f64;
    for &x in a {
        if let Some(p) = tree.parent(x) {
            if !members.contains(&p) {
                boundary += family.rate(tree, p, x)?;
            }
        }
        let kids = tree.ensure_children(x)?;
        for c in kids {
            if !members.contains(&c) {
                boundary -= family.rate(tree, x, c)?;
            }
        }
    }
    if members.contains(&0) {
        boundary += lambda / rho;
    }
    Ok((1.0 - rho) * rho.powi(a.len() as i32) * boundary)
}

/// Long-run site occupancy of a truncation by direct trajectory
/// simulation, averaged over `[t_burn, t_burn + t_measure]`.
#[derive(Debug, Clone)]
pub struct TruncationRun {
    /// Fraction of the measurement window each site was occupied.
    pub occupancy: Vec<f64>,
    /// Particles that entered during the whole run.
    pub entered: u64,
    /// Particles that departed through the cut.
    pub exited: u64,
}

/// Simulates the cut process and time-averages its occupancy.
///
/// This walks the same transition structure the exact solver uses but
/// through an independent sampling route, so agreement between the two is
/// a meaningful cross-check.
pub fn simulate_truncation(
    trunc: &Truncation,
    t_burn: f64,
    t_measure: f64,
    seed: u64,
) -> Result<TruncationRun, EquilibriumError> {
    if !(t_measure > 0.0) || !(t_burn >= 0.0) {
        return Err(EquilibriumError::InvalidInput(
            "the burn-in must be non-negative and the window positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_end = t_burn + t_measure;
    let mut time = 0.0f64;
    let mut sigma = 0u64;
    let mut occupied_time = vec![0.0f64; trunc.sites.len()];
    let mut entered = 0u64;
    let mut exited = 0u64;
    let mut active: Vec<(u64, f64)> = Vec::new();
    loop {
        active.clear();
        if sigma & 1 == 0 {
            active.push((sigma | 1, trunc.lambda));
        }
        for s in 0..trunc.sites.len() {
            let bit = 1u64 << s;
            if sigma & bit == 0 {
                continue;
            }
            if trunc.exit[s] > 0.0 {
                active.push((sigma & !bit, trunc.exit[s]));
            }
            for &(t, r) in &trunc.moves[s] {
                if sigma & (1 << t) == 0 {
                    active.push(((sigma & !bit) | (1 << t), r));
                }
            }
        }
        let total: f64 = active.iter().map(|&(_, r)| r).sum();
        let dt = if total > 0.0 {
            rand_distr::Exp::new(total)
                .expect("total rate is positive")
                .sample(&mut rng)
        } else {
            f64::INFINITY
        };
        let t_next = (time + dt).min(t_end);
        let lo = time.max(t_burn);
        if t_next > lo {
            let span = t_next - lo;
            for (s, slot) in occupied_time.iter_mut().enumerate() {
                if sigma & (1 << s) != 0 {
                    *slot += span;
                }
            }
        }
        if time + dt >= t_end {
            break;
        }
        time += dt;
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = active[active.len() - 1].0;
        for &(target, r) in &active {
            if u < r {
                chosen = target;
                break;
            }
            u -= r;
        }
        if chosen.count_ones() > sigma.count_ones() {
            entered += 1;
        } else if chosen.count_ones() < sigma.count_ones() {
            exited += 1;
        }
        sigma = chosen;
    }
    Ok(TruncationRun {
        occupancy: occupied_time.iter().map(|&t| t / t_measure).collect(),
        entered,
        exited,
    })
}

/// Mean stationary occupancy per generation of a truncation.
pub fn density_profile_exact(trunc: &Truncation, dist: &StationaryDist) -> Vec<f64> {
    let marginals = dist.marginals();
    let mut sum = vec![0.0f64; trunc.depth as usize + 1];
    let mut count = vec![0u64; trunc.depth as usize + 1];
    for (s, &v) in trunc.sites.iter().enumerate() {
        let g = trunc.tree.generation(v) as usize;
        sum[g] += marginals[s];
        count[g] += 1;
    }
    sum.iter()
        .zip(count.iter())
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Occupied time per vertex over `[t0, t1]`, reconstructed from a log of
/// a run started from the empty configuration.
fn occupied_time(log: &EventLog, t0: f64, t1: f64) -> HashMap<VertexId, f64> {
    let mut since: HashMap<VertexId, f64> = HashMap::new();
    let mut acc: HashMap<VertexId, f64> = HashMap::new();
    let credit = |v: VertexId, from: f64, to: f64, acc: &mut HashMap<VertexId, f64>| {
        let lo = from.max(t0);
        let hi = to.min(t1);
        if hi > lo {
            *acc.entry(v).or_insert(0.0) += hi - lo;
        }
    };
    for e in &log.events {
        if e.time > t1 {
            break;
        }
        match e.kind {
            EventKind::Blocked => {}
            EventKind::Entry => {
                since.insert(e.to, e.time);
            }
            EventKind::Jump => {
                if let Some(x) = e.from {
                    if let Some(start) = since.remove(&x) {
                        credit(x, start, e.time, &mut acc);
                    }
                }
                since.insert(e.to, e.time);
            }
        }
    }
    for (v, start) in since {
        credit(v, start, t1, &mut acc);
    }
    acc
}

/// Time-averaged occupancy per generation over the window `[t0, t1]`.
///
/// The tree is materialized to generation `n` first, so the generation
/// sizes count every vertex and unvisited sites weigh in as empty. The
/// log must come from a run started empty.
pub fn density_profile_empirical(
    tree: &mut Tree,
    log: &EventLog,
    n: u64,
    t0: f64,
    t1: f64,
) -> Result<Vec<f64>, EquilibriumError> {
    if !(t1 > t0) || !(t0 >= 0.0) {
        return Err(EquilibriumError::InvalidInput(format!(
            "need 0 <= t0 < t1, got [{t0}, {t1}]"
        )));
    }
    tree.materialize_to(n as u32);
    let occ = occupied_time(log, t0, t1);
    let span = t1 - t0;
    let mut out = Vec::with_capacity(n as usize + 1);
    for g in 0..=n {
        let members = tree.generation_vertices(g as u32);
        if members.is_empty() {
            out.push(0.0);
            continue;
        }
        let total: f64 = members.iter().map(|v| occ.get(v).copied().unwrap_or(0.0)).sum();
        out.push(total / (span * members.len() as f64));
    }
    Ok(out)
}

/// Serializes a per-generation profile as CSV `generation,density`.
pub fn profile_to_csv(profile: &[f64]) -> String {
    let mut out = String::from("generation,density\n");
    for (g, d) in profile.iter().enumerate() {
        out.push_str(&format!("{g},{d}\n"));
    }
    out
}

/// The three views of the root throughput.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RootCurrentReport {
    /// Entries per unit time up to the horizon.
    pub empirical_rate: f64,
    /// Reservoir rate times the observed fraction of time the root was
    /// empty; the ergodic limit of the empirical rate.
    pub reservoir_bound: f64,
    /// The product-measure floor `q(o) rho (1 - rho)`.
    pub superflow_floor: f64,
}

/// Summarizes the root current of a logged run against the stationary
/// floor for root out-rate `q_o` and density `rho`.
pub fn root_current_rate(
    log: &EventLog,
    t: f64,
    lambda: f64,
    q_o: f64,
    rho: f64,
) -> Result<RootCurrentReport, EquilibriumError> {
    if !(t > 0.0) {
        return Err(EquilibriumError::InvalidInput(format!(
            "the horizon must be positive, got {t}"
        )));
    }
    let entries = log
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Entry && e.time <= t)
        .count() as f64;
    let occupied = occupied_time(log, 0.0, t)
        .get(&0)
        .copied()
        .unwrap_or(0.0);
    Ok(RootCurrentReport {
        empirical_rate: entries / t,
        reservoir_bound: lambda * (1.0 - occupied / t),
        superflow_floor: q_o * rho * (1.0 - rho),
    })
}
