//! Subcommand implementations.
//!
//! Each command loads the shared experiment config, runs its replicas, and
//! emits stamped artifacts through [`Emitter`]. Commands return the list of
//! failed acceptance-relevant checks; an empty list means success. Replicas
//! draw their seeds from the base seed through the splitmix-based
//! derivation in the library, so runs are reproducible replica by replica
//! and independent of the worker count.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;

use tree_tasep::bounds::{BoundContext, DnValue, LevelsBackend};
use tree_tasep::couplings::{
    canonical_pair, certificate_to_csv, irw_pair, slowed_passage_times, CanonicalParams,
    CouplingError, IrwParams,
};
use tree_tasep::engine::{
    current_at, disentanglement_generation, max_generation, max_generation_at, simulate,
    SimMode, SimOutcome, SimParams, StopRule,
};
use tree_tasep::equilibrium::{
    density_profile_empirical, density_profile_exact, exact_stationary, flow_generator_identity,
    monotone_check, profile_to_csv, sample_upward_sets, simulate_truncation, Truncation,
};
use tree_tasep::gw_tree::{OffspringLaw, Tree, VertexId};
use tree_tasep::lpp::{build_env, passage_table_csv, passage_time_restricted, tail_check, PathRegion};
use tree_tasep::rate_field::{aggregates, classify_flow, FlowClass, RateFamily, SymbolicLevels};
use tree_tasep::rng::replica_seed;

use crate::config::ExperimentConfig;
use crate::emit::{Emitter, LineChart};

/// Shared state for one command invocation.
pub struct Ctx {
    /// The effective configuration, overrides applied.
    pub cfg: ExperimentConfig,
    /// Artifact writer stamped with the seed and config hash.
    pub emitter: Emitter,
}

impl Ctx {
    fn law(&self) -> OffspringLaw {
        self.cfg.law()
    }

    fn family(&self) -> RateFamily {
        self.cfg.family()
    }

    fn sim_params(&self, replica: u64, stop: StopRule) -> SimParams {
        SimParams {
            lambda: self.cfg.run.lambda,
            seed: replica_seed(self.cfg.run.seed, replica),
            mode: SimMode::NextReaction,
            stop,
            max_events: self.cfg.run.max_events,
            initial: Vec::new(),
        }
    }

    fn tree(&self, replica: u64) -> Tree {
        Tree::new_lazy(self.law(), replica_seed(self.cfg.tree.seed, replica))
    }

    fn bound_context(&self) -> Result<BoundContext> {
        BoundContext::symbolic(self.family(), &self.law(), self.cfg.run.delta)
            .map_err(|e| anyhow!("bound evaluation needs a symbolic rate family: {e}"))
    }
}

/// Runs `count` replicas across worker threads and returns their results
/// in replica order.
fn run_replicas<T: Send>(
    count: u64,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get() as u64)
        .unwrap_or(1)
        .min(count)
        .max(1);
    let mut indexed: Vec<(u64, Result<T>)> = std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..count)
                        .step_by(workers as usize)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("replica worker panicked"))
            .collect()
    });
    indexed.sort_by_key(|&(i, _)| i);
    indexed.into_iter().map(|(_, r)| r).collect()
}

fn fraction(hits: u64, total: u64) -> f64 {
    hits as f64 / total as f64
}

/// Renders 1.0 as `1` and everything else with full precision.
fn compact(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Serialize)]
struct ReplicaSummary {
    replica: u64,
    entered: u64,
    effective_events: u64,
    final_time: f64,
    truncated: bool,
    absorbed: bool,
    max_generation: u64,
}

#[derive(Serialize)]
struct SimulateReport {
    replicas: u64,
    lambda: f64,
    mean_entered: f64,
    mean_root_rate: f64,
    runs: Vec<ReplicaSummary>,
}

/// Engine runs with current and density measurements.
pub fn simulate_cmd(ctx: &mut Ctx, grid: u64, profile_depth: u64) -> Result<Vec<String>> {
    let cfg = ctx.cfg.clone();
    let family = ctx.family();
    let stop = cfg.stop();
    let outcomes: Vec<SimOutcome> = run_replicas(cfg.run.replicas, |i| {
        simulate(ctx.tree(i), family.clone(), &ctx.sim_params(i, stop.clone()))
            .map_err(|e| anyhow!("replica {i}: {e}"))
    })?;
    let runs: Vec<ReplicaSummary> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| ReplicaSummary {
            replica: i as u64,
            entered: o.entered,
            effective_events: o.effective_events,
            final_time: o.final_time,
            truncated: o.truncated,
            absorbed: o.absorbed,
            max_generation: max_generation(&o.tree, &o.log),
        })
        .collect();
    let n = outcomes.len() as f64;
    let mean_entered = runs.iter().map(|r| r.entered as f64).sum::<f64>() / n;
    let t_max = outcomes
        .iter()
        .map(|o| o.final_time)
        .fold(f64::INFINITY, f64::min);
    let mean_root_rate = if t_max > 0.0 {
        outcomes
            .iter()
            .map(|o| current_at(&o.tree, &o.log, 0, t_max) as f64 / t_max)
            .sum::<f64>()
            / n
    } else {
        0.0
    };
    ctx.emitter.json(
        "simulate",
        SimulateReport {
            replicas: cfg.run.replicas,
            lambda: cfg.run.lambda,
            mean_entered,
            mean_root_rate,
            runs,
        },
    )?;
    if t_max > 0.0 && grid > 0 {
        let points: Vec<(f64, f64)> = (0..=grid)
            .map(|k| {
                let t = t_max * k as f64 / grid as f64;
                let mean = outcomes
                    .iter()
                    .map(|o| current_at(&o.tree, &o.log, 0, t) as f64)
                    .sum::<f64>()
                    / n;
                (t, mean)
            })
            .collect();
        let rows: Vec<String> = points.iter().map(|(t, v)| format!("{t},{v}")).collect();
        ctx.emitter.csv("root_current", "t,value", &rows)?;
        ctx.emitter.svg(
            "root_current",
            &LineChart::new("mean root current", "t", "J_o(t)").series("mean", points),
        )?;
    }
    if t_max > 0.0 {
        let mut profile = vec![0.0f64; profile_depth as usize + 1];
        for o in &outcomes {
            let mut tree = o.tree.clone();
            let p =
                density_profile_empirical(&mut tree, &o.log, profile_depth, t_max / 2.0, t_max)?;
            for (slot, v) in profile.iter_mut().zip(p) {
                *slot += v / n;
            }
        }
        let rows: Vec<String> = profile
            .iter()
            .enumerate()
            .map(|(g, v)| format!("{g},{v}"))
            .collect();
        ctx.emitter.csv("density", "generation,density", &rows)?;
        ctx.emitter.svg(
            "density",
            &LineChart::new("mean density by generation", "generation", "density").series(
                "mean",
                profile
                    .iter()
                    .enumerate()
                    .map(|(g, &v)| (g as f64, v))
                    .collect(),
            ),
        )?;
    }
    println!(
        "simulate: {} replicas, mean entries {mean_entered}, mean root rate {mean_root_rate}",
        cfg.run.replicas
    );
    Ok(Vec::new())
}

#[derive(Serialize)]
struct DisentangleReport {
    n: u64,
    m_n: f64,
    generation_cap: u64,
    replicas: u64,
    within_bound: u64,
    fraction_within: f64,
    min_fraction: f64,
    histogram: BTreeMap<String, u64>,
}

/// Empirical disentanglement generation against the analytic bound.
pub fn disentangle_cmd(
    ctx: &mut Ctx,
    n: u64,
    generation_cap: Option<u64>,
    min_fraction: f64,
) -> Result<Vec<String>> {
    if n < 2 {
        bail!("--n must be at least 2");
    }
    let cfg = ctx.cfg.clone();
    let bound = ctx.bound_context()?.m_n(n)?;
    let cap = generation_cap.unwrap_or(bound.m_n.ceil() as u64 + 1);
    let stop = StopRule::Disentangled {
        count: n,
        generation: cap,
    };
    let gens: Vec<Option<u64>> = run_replicas(cfg.run.replicas, |i| {
        let out = simulate(ctx.tree(i), ctx.family(), &ctx.sim_params(i, stop.clone()))
            .map_err(|e| anyhow!("replica {i}: {e}"))?;
        if out.entered < n {
            return Ok(None);
        }
        disentanglement_generation(&out.log, n).map_err(|e| anyhow!("replica {i}: {e}"))
    })?;
    let within = gens
        .iter()
        .filter(|g| g.map_or(false, |g| g as f64 <= bound.m_n))
        .count() as u64;
    let frac = fraction(within, cfg.run.replicas);
    let mut histogram: BTreeMap<String, u64> = BTreeMap::new();
    for g in &gens {
        let key = match g {
            Some(g) => format!("{g:06}"),
            None => "none".to_string(),
        };
        *histogram.entry(key).or_insert(0) += 1;
    }
    ctx.emitter.json(
        "disentangle",
        DisentangleReport {
            n,
            m_n: bound.m_n,
            generation_cap: cap,
            replicas: cfg.run.replicas,
            within_bound: within,
            fraction_within: frac,
            min_fraction,
            histogram,
        },
    )?;
    let rows: Vec<String> = gens
        .iter()
        .enumerate()
        .map(|(i, g)| match g {
            Some(g) => format!("{i},{g}"),
            None => format!("{i},none"),
        })
        .collect();
    ctx.emitter.csv("disentangle", "replica,generation", &rows)?;
    ctx.emitter.svg(
        "disentangle",
        &LineChart::new("disentanglement generation", "replica", "generation")
            .series(
                "observed",
                gens.iter()
                    .enumerate()
                    .filter_map(|(i, g)| g.map(|g| (i as f64, g as f64)))
                    .collect(),
            )
            .series(
                "bound",
                vec![(0.0, bound.m_n), ((gens.len() - 1) as f64, bound.m_n)],
            ),
    )?;
    println!(
        "disentangle: n = {n}, bound {} ; {within}/{} replicas within it",
        bound.m_n, cfg.run.replicas
    );
    let mut failed = Vec::new();
    if frac < min_fraction {
        failed.push(format!(
            "disentanglement fraction {frac} below required {min_fraction}"
        ));
    }
    Ok(failed)
}

/// Which side of the passage-time window to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum WindowCheck {
    /// Only the early-time zero-current check.
    Low,
    /// Only the late-time throughput check.
    Up,
    /// Both checks.
    Both,
}

#[derive(Serialize)]
struct WindowSideReport {
    replicas: u64,
    passed: u64,
    fraction: f64,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct CurrentWindowReport {
    n: u64,
    ell: u64,
    m_n: f64,
    delta: f64,
    t_low: f64,
    t_up: f64,
    target_count: u64,
    min_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    low: Option<WindowSideReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    up: Option<WindowSideReport>,
}

/// Desk test of the time window in which a generation's current ramps up.
pub fn current_window_cmd(
    ctx: &mut Ctx,
    n: u64,
    ell: Option<u64>,
    check: WindowCheck,
    min_fraction: f64,
) -> Result<Vec<String>> {
    let cfg = ctx.cfg.clone();
    let bc = ctx.bound_context()?;
    let bound = bc.m_n(n)?;
    let ell = ell.unwrap_or(bound.m_n.ceil() as u64);
    let window = bc.time_window(n, ell)?;
    let target = ((1.0 - cfg.run.delta) * n as f64).ceil() as u64;
    let mut failed = Vec::new();
    let low = if matches!(check, WindowCheck::Low | WindowCheck::Both) {
        let stop = StopRule::TimeHorizon(window.t_low);
        let currents: Vec<(bool, f64)> = run_replicas(cfg.run.replicas, |i| {
            let out = simulate(ctx.tree(i), ctx.family(), &ctx.sim_params(i, stop.clone()))
                .map_err(|e| anyhow!("replica {i}: {e}"))?;
            let j = current_at(&out.tree, &out.log, ell, window.t_low);
            Ok((!out.truncated, j as f64))
        })?;
        let passed = currents.iter().filter(|&&(ok, j)| ok && j == 0.0).count() as u64;
        let frac = fraction(passed, cfg.run.replicas);
        if frac < min_fraction {
            failed.push(format!(
                "zero-current fraction {frac} at t_low below required {min_fraction}"
            ));
        }
        Some(WindowSideReport {
            replicas: cfg.run.replicas,
            passed,
            fraction: frac,
            values: currents.iter().map(|&(_, j)| j).collect(),
        })
    } else {
        None
    };
    let up = if matches!(check, WindowCheck::Up | WindowCheck::Both) {
        let stop = StopRule::ParticlesPastGeneration {
            count: target,
            generation: ell,
        };
        let times: Vec<(bool, f64)> = run_replicas(cfg.run.replicas, |i| {
            let out = simulate(ctx.tree(i), ctx.family(), &ctx.sim_params(i, stop.clone()))
                .map_err(|e| anyhow!("replica {i}: {e}"))?;
            Ok((!out.truncated, out.final_time))
        })?;
        let passed = times
            .iter()
            .filter(|&&(ok, t)| ok && t <= window.t_up)
            .count() as u64;
        let frac = fraction(passed, cfg.run.replicas);
        if frac < min_fraction {
            failed.push(format!(
                "throughput fraction {frac} by t_up below required {min_fraction}"
            ));
        }
        Some(WindowSideReport {
            replicas: cfg.run.replicas,
            passed,
            fraction: frac,
            values: times.iter().map(|&(_, t)| t).collect(),
        })
    } else {
        None
    };
    let mut rows = Vec::new();
    if let Some(r) = &low {
        rows.extend(
            r.values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{i},low,{v}")),
        );
    }
    if let Some(r) = &up {
        rows.extend(
            r.values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{i},up,{v}")),
        );
    }
    ctx.emitter.csv("current_window", "replica,check,value", &rows)?;
    if let Some(r) = &up {
        let mut sorted = r.values.clone();
        sorted.sort_by(f64::total_cmp);
        ctx.emitter.svg(
            "current_window",
            &LineChart::new("time for the target current", "rank", "t")
                .series(
                    "observed",
                    sorted
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| (i as f64, t))
                        .collect(),
                )
                .series(
                    "t_up",
                    vec![(0.0, window.t_up), ((sorted.len() - 1) as f64, window.t_up)],
                ),
        )?;
    }
    ctx.emitter.json(
        "current_window",
        CurrentWindowReport {
            n,
            ell,
            m_n: bound.m_n,
            delta: cfg.run.delta,
            t_low: window.t_low,
            t_up: window.t_up,
            target_count: target,
            min_fraction,
            low,
            up,
        },
    )?;
    println!(
        "current-window: n = {n}, generation {ell}, window [{}, {}]",
        window.t_low, window.t_up
    );
    Ok(failed)
}

#[derive(Serialize)]
struct GenerationWindowReport {
    t: f64,
    n_t: u64,
    l_low: f64,
    l_up: u64,
    replicas: u64,
    within: u64,
    fraction_within: f64,
    min_fraction: f64,
    max_generations: Vec<u64>,
}

/// Desk test of the generation window reached by a fixed observation time.
pub fn generation_window_cmd(ctx: &mut Ctx, t: f64, min_fraction: f64) -> Result<Vec<String>> {
    if !(t > 0.0) {
        bail!("--t must be positive");
    }
    let cfg = ctx.cfg.clone();
    let window = ctx.bound_context()?.generation_window(t)?;
    let stop = StopRule::TimeHorizon(t);
    let results: Vec<(bool, u64)> = run_replicas(cfg.run.replicas, |i| {
        let out = simulate(ctx.tree(i), ctx.family(), &ctx.sim_params(i, stop.clone()))
            .map_err(|e| anyhow!("replica {i}: {e}"))?;
        let m = max_generation_at(&out.tree, &out.log, t).unwrap_or(0);
        Ok((!out.truncated, m))
    })?;
    let within = results
        .iter()
        .filter(|&&(ok, m)| ok && m as f64 >= window.l_low && m <= window.l_up)
        .count() as u64;
    let frac = fraction(within, cfg.run.replicas);
    let rows: Vec<String> = results
        .iter()
        .enumerate()
        .map(|(i, (_, m))| format!("{i},{m}"))
        .collect();
    ctx.emitter.csv("generation_window", "replica,max_generation", &rows)?;
    ctx.emitter.svg(
        "generation_window",
        &LineChart::new("maximal generation at t", "replica", "generation")
            .series(
                "observed",
                results
                    .iter()
                    .enumerate()
                    .map(|(i, &(_, m))| (i as f64, m as f64))
                    .collect(),
            )
            .series(
                "l_low",
                vec![(0.0, window.l_low), ((results.len() - 1) as f64, window.l_low)],
            )
            .series(
                "l_up",
                vec![
                    (0.0, window.l_up as f64),
                    ((results.len() - 1) as f64, window.l_up as f64),
                ],
            ),
    )?;
    ctx.emitter.json(
        "generation_window",
        GenerationWindowReport {
            t,
            n_t: window.n_t,
            l_low: window.l_low,
            l_up: window.l_up,
            replicas: cfg.run.replicas,
            within,
            fraction_within: frac,
            min_fraction,
            max_generations: results.iter().map(|&(_, m)| m).collect(),
        },
    )?;
    println!(
        "generation-window: t = {t}, window [{}, {}], {within}/{} replicas inside",
        window.l_low, window.l_up, cfg.run.replicas
    );
    let mut failed = Vec::new();
    if frac < min_fraction {
        failed.push(format!(
            "generation-window fraction {frac} below required {min_fraction}"
        ));
    }
    Ok(failed)
}

#[derive(Serialize)]
struct OracleReport {
    cells: u64,
    mismatches: u64,
}

#[derive(Serialize)]
struct LppReport {
    n: u64,
    m: u64,
    lambda: f64,
    corner_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleReport>,
    tail_threshold: f64,
    tail_samples: u64,
    tail_exceedance: f64,
    max_exceed: f64,
}

/// Banded last-passage values, the dynamic-programming oracle comparison,
/// and the passage-time tail check.
pub fn lpp_cmd(
    ctx: &mut Ctx,
    n: u64,
    m: u64,
    skip_oracle: bool,
    alpha: f64,
    tail_samples: u64,
    max_exceed: f64,
) -> Result<Vec<String>> {
    let cfg = ctx.cfg.clone();
    let family = ctx.family();
    let lambda = cfg.run.lambda;
    let seed = cfg.run.seed;
    let env = build_env(n, m, lambda, &family, seed)?;
    let region = PathRegion { m };
    ctx.emitter.csv_text("environment", &env.to_csv())?;
    ctx.emitter
        .csv_text("passage", &passage_table_csv(&env, Some(region)))?;
    let corner_value = passage_time_restricted(&env, n + m, n, region)?;
    let mut failed = Vec::new();
    let oracle = if skip_oracle {
        None
    } else {
        let slowed = slowed_passage_times(n, m, m as f64, lambda, &family, seed)?;
        let mut cells = 0u64;
        let mut mismatches = 0u64;
        for b in 1..=n {
            for g in 0..=m {
                let dp = passage_time_restricted(&env, b + g, b, region)?;
                let dyn_time = slowed.times[(b - 1) as usize][g as usize];
                cells += 1;
                if dp.to_bits() != dyn_time.to_bits() {
                    mismatches += 1;
                }
            }
        }
        if mismatches > 0 {
            failed.push(format!(
                "dynamics and percolation disagree on {mismatches} of {cells} cells"
            ));
        }
        Some(OracleReport { cells, mismatches })
    };
    let tail = tail_check(&family, n, m as f64, alpha, tail_samples, lambda, seed)?;
    if tail.exceedance > max_exceed {
        failed.push(format!(
            "tail exceedance {} above allowed {max_exceed}",
            tail.exceedance
        ));
    }
    ctx.emitter.svg(
        "passage_diagonal",
        &LineChart::new("deepest band passage time", "particle", "time").series(
            "G(b+m, b)",
            (1..=n)
                .map(|b| {
                    let v = passage_time_restricted(&env, b + m, b, region).unwrap_or(f64::NAN);
                    (b as f64, v)
                })
                .collect(),
        ),
    )?;
    ctx.emitter.json(
        "lpp",
        LppReport {
            n,
            m,
            lambda,
            corner_value,
            oracle,
            tail_threshold: tail.threshold,
            tail_samples: tail.samples,
            tail_exceedance: tail.exceedance,
            max_exceed,
        },
    )?;
    println!(
        "lpp: corner value {corner_value}, tail exceedance {} of {} samples",
        tail.exceedance, tail.samples
    );
    Ok(failed)
}

/// Which coupling to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CoupleMode {
    /// Reservoir-rate monotonicity under shared clocks.
    Canonical,
    /// Generation domination by independent walkers.
    Irw,
    /// Both couplings.
    Both,
}

#[derive(Serialize)]
struct CoupleSideReport {
    replicas: u64,
    events_checked: u64,
    violations: u64,
    truncated_runs: u64,
}

#[derive(Serialize)]
struct CoupleReport {
    t_max: f64,
    lambda_lower: f64,
    lambda_upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    canonical: Option<CoupleSideReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    irw: Option<CoupleSideReport>,
}

/// Pathwise ordering certificates for the two couplings.
pub fn couple_cmd(
    ctx: &mut Ctx,
    mode: CoupleMode,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
) -> Result<Vec<String>> {
    let cfg = ctx.cfg.clone();
    let family = ctx.family();
    let StopRule::TimeHorizon(t_max) = cfg.stop() else {
        bail!("couple requires run.stop.kind = \"time\"");
    };
    let l2 = lambda2.unwrap_or(cfg.run.lambda);
    let l1 = lambda1.unwrap_or(l2 / 2.0);
    let mut failed = Vec::new();
    let canonical = if matches!(mode, CoupleMode::Canonical | CoupleMode::Both) {
        let results = run_replicas(cfg.run.replicas, |i| {
            let mut params = CanonicalParams::new(l1, l2, replica_seed(cfg.run.seed, i), t_max);
            params.max_events = cfg.run.max_events;
            match canonical_pair(ctx.tree(i), &family, &params) {
                Ok(pair) => Ok((pair.certificate.len() as u64, 0u64, pair.truncated, Some(pair))),
                Err(CouplingError::OrderingViolated { event_index, .. }) => {
                    Ok((event_index + 1, 1, false, None))
                }
                Err(e) => Err(anyhow!("replica {i}: {e}")),
            }
        })?;
        let violations: u64 = results.iter().map(|r| r.1).sum();
        if violations > 0 {
            failed.push(format!("canonical ordering violated in {violations} runs"));
        }
        if let Some((_, _, _, Some(pair))) = results.first() {
            ctx.emitter
                .csv_text("canonical_certificate", &certificate_to_csv(&pair.certificate))?;
        }
        Some(CoupleSideReport {
            replicas: cfg.run.replicas,
            events_checked: results.iter().map(|r| r.0).sum(),
            violations,
            truncated_runs: results.iter().filter(|r| r.2).count() as u64,
        })
    } else {
        None
    };
    let irw = if matches!(mode, CoupleMode::Irw | CoupleMode::Both) {
        let levels = match SymbolicLevels::new(&family, &ctx.law()) {
            Ok(s) => LevelsBackend::Symbolic(s),
            Err(_) => {
                let mut tree = Tree::new_lazy(ctx.law(), cfg.tree.seed);
                LevelsBackend::Table(aggregates(&family, &mut tree, 16)?)
            }
        };
        let results = run_replicas(cfg.run.replicas, |i| {
            let params = IrwParams {
                lambda: cfg.run.lambda,
                seed: replica_seed(cfg.run.seed, i),
                t_max,
                max_events: cfg.run.max_events,
            };
            match irw_pair(ctx.tree(i), &family, &levels, &params) {
                Ok(pair) => Ok((pair.certificate.len() as u64, 0u64, pair.truncated, Some(pair))),
                Err(CouplingError::OrderingViolated { event_index, .. }) => {
                    Ok((event_index + 1, 1, false, None))
                }
                Err(e) => Err(anyhow!("replica {i}: {e}")),
            }
        })?;
        let violations: u64 = results.iter().map(|r| r.1).sum();
        if violations > 0 {
            failed.push(format!("walker domination violated in {violations} runs"));
        }
        if let Some((_, _, _, Some(pair))) = results.first() {
            ctx.emitter
                .csv_text("irw_certificate", &certificate_to_csv(&pair.certificate))?;
        }
        Some(CoupleSideReport {
            replicas: cfg.run.replicas,
            events_checked: results.iter().map(|r| r.0).sum(),
            violations,
            truncated_runs: results.iter().filter(|r| r.2).count() as u64,
        })
    } else {
        None
    };
    ctx.emitter.json(
        "couple",
        CoupleReport {
            t_max,
            lambda_lower: l1,
            lambda_upper: l2,
            canonical,
            irw,
        },
    )?;
    println!(
        "couple: {} replicas over horizon {t_max}, {} check failures",
        cfg.run.replicas,
        failed.len()
    );
    Ok(failed)
}

#[derive(Serialize)]
struct MonotoneSection {
    sets: usize,
    holds: bool,
    max_gap: f64,
}

#[derive(Serialize)]
struct FlowIdentitySection {
    rho: f64,
    lambda_used: f64,
    sets: usize,
    max_abs_pairing: f64,
    tolerance: f64,
}

#[derive(Serialize)]
struct EmpiricalSection {
    t_burn: f64,
    t_measure: f64,
    max_marginal_gap: f64,
}

#[derive(Serialize)]
struct EquilibriumReport {
    depth: u32,
    states: u64,
    residual: f64,
    marginals: Vec<f64>,
    profile: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monotone: Option<MonotoneSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flow_identity: Option<FlowIdentitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical: Option<EmpiricalSection>,
}

/// Exact stationary law of a finite truncation, with optional ordering,
/// flow-identity, and trajectory cross-checks.
#[allow(clippy::too_many_arguments)]
pub fn equilibrium_cmd(
    ctx: &mut Ctx,
    depth: u32,
    compare_next: bool,
    flow_rho: Option<f64>,
    sets: usize,
    tol: f64,
    empirical: bool,
) -> Result<Vec<String>> {
    let cfg = ctx.cfg.clone();
    let family = ctx.family();
    let tree = Tree::new_lazy(ctx.law(), cfg.tree.seed);
    let trunc = Truncation::new(tree, family.clone(), depth, cfg.run.lambda)?;
    let states = trunc.state_count();
    let dist = exact_stationary(&trunc)?;
    let profile = density_profile_exact(&trunc, &dist);
    ctx.emitter.csv_text("marginals", &dist.marginals_to_csv())?;
    ctx.emitter.csv_text("profile", &profile_to_csv(&profile))?;
    ctx.emitter.svg(
        "profile",
        &LineChart::new("stationary density by generation", "generation", "density").series(
            "exact",
            profile
                .iter()
                .enumerate()
                .map(|(g, &v)| (g as f64, v))
                .collect(),
        ),
    )?;
    let mut failed = Vec::new();
    let monotone = if compare_next {
        let bigger = Truncation::new(
            Tree::new_lazy(ctx.law(), cfg.tree.seed),
            family.clone(),
            depth + 1,
            cfg.run.lambda,
        )?;
        let bigger_dist = exact_stationary(&bigger)?;
        let filters = sample_upward_sets(bigger_dist.sites.len(), sets, cfg.run.seed);
        let report = monotone_check(&dist, &bigger_dist, &filters, tol)?;
        if !report.holds {
            failed.push(format!(
                "stationary ordering against depth {} broken by {}",
                depth + 1,
                report.max_gap
            ));
        }
        Some(MonotoneSection {
            sets,
            holds: report.holds,
            max_gap: report.max_gap,
        })
    } else {
        None
    };
    let flow_identity = match flow_rho {
        Some(rho) => {
            if !(rho > 0.0 && rho < 1.0) {
                bail!("--flow-rho must lie strictly between 0 and 1");
            }
            let mut work = trunc.tree.clone();
            let q_o = family.out_rate(&work, 0)?;
            let lambda_used = rho * q_o;
            let scan_depth = 4u32.min(depth + 1);
            let within: Vec<VertexId> = (0..work.len() as VertexId)
                .filter(|&v| work.generation(v) <= scan_depth)
                .collect();
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.run.seed);
            let mut max_abs = 0.0f64;
            let mut tested = 0usize;
            for &v in within.iter().take(sets) {
                let p = flow_generator_identity(&mut work, &family, &[v], rho, lambda_used)?;
                max_abs = max_abs.max(p.abs());
                tested += 1;
            }
            for _ in 0..sets {
                let size = rng.gen_range(1..=4usize.min(within.len()));
                let mut a: Vec<VertexId> = Vec::new();
                while a.len() < size {
                    let v = within[rng.gen_range(0..within.len())];
                    if !a.contains(&v) {
                        a.push(v);
                    }
                }
                let p = flow_generator_identity(&mut work, &family, &a, rho, lambda_used)?;
                max_abs = max_abs.max(p.abs());
                tested += 1;
            }
            if max_abs > tol {
                failed.push(format!(
                    "generator pairing reaches {max_abs}, above tolerance {tol}"
                ));
            }
            Some(FlowIdentitySection {
                rho,
                lambda_used,
                sets: tested,
                max_abs_pairing: max_abs,
                tolerance: tol,
            })
        }
        None => None,
    };
    let empirical_section = if empirical {
        let run = simulate_truncation(&trunc, 500.0, 3000.0, cfg.run.seed)?;
        let exact = dist.marginals();
        let gap = run
            .occupancy
            .iter()
            .zip(exact.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        Some(EmpiricalSection {
            t_burn: 500.0,
            t_measure: 3000.0,
            max_marginal_gap: gap,
        })
    } else {
        None
    };
    ctx.emitter.json(
        "equilibrium",
        EquilibriumReport {
            depth,
            states,
            residual: dist.residual,
            marginals: dist.marginals(),
            profile,
            monotone,
            flow_identity,
            empirical: empirical_section,
        },
    )?;
    println!(
        "equilibrium: depth {depth}, {states} states, residual {}",
        dist.residual
    );
    Ok(failed)
}

#[derive(Serialize)]
struct ClassifyReport {
    summary: String,
    horizon: u32,
    tolerance: f64,
    class: FlowClass,
    throughput: Vec<f64>,
    net_flow: BTreeMap<VertexId, f64>,
}

/// Net-flow classification of the configured rates.
pub fn classify_rates_cmd(ctx: &mut Ctx, horizon: u32, tolerance: f64) -> Result<Vec<String>> {
    let cfg = ctx.cfg.clone();
    let family = ctx.family();
    let mut tree = Tree::new_lazy(ctx.law(), cfg.tree.seed);
    let report = classify_flow(&family, &mut tree, horizon, tolerance)?;
    let summary = match report.class {
        FlowClass::Flow { strength } => format!("Flow, strength {}", compact(strength)),
        FlowClass::Superflow => "Superflow".to_string(),
        FlowClass::Subflow => "Subflow".to_string(),
        FlowClass::Unclassified => "Unclassified".to_string(),
    };
    println!("{summary}");
    let rows: Vec<String> = report.q.iter().map(|(v, q)| format!("{v},{q}")).collect();
    ctx.emitter.csv("net_flow", "vertex,q", &rows)?;
    ctx.emitter.json(
        "classify",
        ClassifyReport {
            summary,
            horizon: report.horizon,
            tolerance,
            class: report.class,
            throughput: report.throughput.clone(),
            net_flow: report.q.into_iter().collect(),
        },
    )?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct BoundsReport {
    n: u64,
    d_min: u32,
    delta: f64,
    c_o: f64,
    epsilon: f64,
    c_low: f64,
    kappa: f64,
    d_n: DnValue,
    m_n: tree_tasep::bounds::DisentanglementBound,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_window: Option<tree_tasep::bounds::TimeWindow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generation_window: Option<tree_tasep::bounds::GenerationWindow>,
}

/// Pure formula evaluation of the analytic quantities.
pub fn bounds_cmd(ctx: &mut Ctx, n: u64, ell: Option<u64>, t: Option<f64>) -> Result<Vec<String>> {
    let bc = ctx.bound_context()?;
    let d_n = bc.d_n(n)?;
    let m_n = bc.m_n(n)?;
    let time_window = match ell {
        Some(ell) => Some(bc.time_window(n, ell)?),
        None => None,
    };
    let generation_window = match t {
        Some(t) => Some(bc.generation_window(t)?),
        None => None,
    };
    let d_n_text = match d_n {
        DnValue::Finite(v) => compact(v),
        DnValue::Unbounded => "unbounded".to_string(),
        DnValue::BeyondHorizon { horizon } => format!("beyond tabulated horizon {horizon}"),
    };
    println!("d_n = {d_n_text}");
    println!("m_n = {}", m_n.m_n);
    println!("c_o = {}", bc.c_o);
    ctx.emitter.json(
        "bounds",
        BoundsReport {
            n,
            d_min: bc.d_min,
            delta: bc.delta,
            c_o: bc.c_o,
            epsilon: bc.epsilon,
            c_low: bc.c_low,
            kappa: bc.kappa,
            d_n,
            m_n,
            time_window,
            generation_window,
        },
    )?;
    Ok(Vec::new())
}
