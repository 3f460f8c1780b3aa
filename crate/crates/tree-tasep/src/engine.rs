//! Continuous-time simulation of the reservoir exclusion process on a
//! rooted tree.
//!
//! Dynamics: a reservoir creates a particle at the empty root at rate
//! lambda; a particle at x jumps to a child y at rate r_{x,y} when y is
//! empty. Both samplers realize this chain exactly:
//!
//! - next-reaction: every currently legal transition carries a tentative
//!   firing time; regenerating a clock when a transition becomes legal is
//!   exact by memorylessness.
//! - shared-stream: proposals are drawn at the full out-rate of every
//!   occupied vertex plus the reservoir rate, and proposals into occupied
//!   targets are discarded. Discarded jump proposals appear in the log as
//!   blocked attempts, which makes interaction between particles visible.
//!
//! Trees grow lazily one generation beyond every occupied vertex, so runs on
//! infinite trees cost only what the particles visit.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::gw_tree::{Tree, TreeError, VertexId};
use crate::rate_field::{RateError, RateFamily};

/// Errors from simulation, log parsing, or replay.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    /// A parameter is outside its admissible range.
    #[error("invalid simulation parameters: {0}")]
    InvalidConfig(String),
    /// Tree growth failed.
    #[error(transparent)]
    Tree(#[from] TreeError),
    /// Rate evaluation failed.
    #[error(transparent)]
    Rate(#[from] RateError),
    /// An event log line could not be parsed.
    #[error("log parse error at line {line}: {msg}")]
    LogParse {
        /// One-based line number.
        line: usize,
        /// Description of the problem.
        msg: String,
    },
    /// A logged event is inconsistent with the exclusion dynamics.
    #[error("illegal event at index {index}: {msg}")]
    IllegalEvent {
        /// Zero-based event index.
        index: usize,
        /// Description of the violation.
        msg: String,
    },
    /// An internal invariant failed while summarizing a log.
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
}

/// Which exact sampler generates the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Tentative-time scheduling of legal transitions only.
    NextReaction,
    /// Thinned proposals from full out-rates; suppressed attempts are logged.
    SharedStream,
}

/// When a run ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run until simulated time reaches this horizon.
    TimeHorizon(f64),
    /// Run until this many particles have entered at the root.
    ParticlesEntered(u64),
    /// Run until `count` particles have reached `generation`.
    ParticlesPastGeneration {
        /// Required number of particles.
        count: u64,
        /// Target generation.
        generation: u64,
    },
    /// Run until the first `count` entered particles have all reached
    /// `generation`.
    Disentangled {
        /// How many leading particles must clear the generation.
        count: u64,
        /// Generation they must all reach.
        generation: u64,
    },
}

/// Simulation parameters besides the tree and the rate family.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// Reservoir rate, must be positive.
    pub lambda: f64,
    /// Seed for the dynamics (independent of the tree seed).
    pub seed: u64,
    /// Sampler choice.
    pub mode: SimMode,
    /// Stop rule.
    pub stop: StopRule,
    /// Hard cap on processed events (including suppressed proposals in
    /// shared-stream mode); hitting it sets the truncated flag.
    pub max_events: u64,
    /// Vertices occupied before time zero, in particle-ordinal order.
    ///
    /// The listed vertices must exist in the tree and be pairwise
    /// distinct.  Seeded particles take ordinals `0..initial.len()` and
    /// reservoir entries continue from there.  Empty by default.
    pub initial: Vec<VertexId>,
}

/// Default event cap.
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

/// What happened at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A particle entered at the root.
    Entry,
    /// A particle moved along an edge.
    Jump,
    /// A shared-stream proposal was suppressed by an occupied target.
    Blocked,
}

impl EventKind {
    fn name(self) -> &'static str {
        match self {
            EventKind::Entry => "entry",
            EventKind::Jump => "jump",
            EventKind::Blocked => "blocked",
        }
    }
}

/// One logged event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Simulated time.
    pub time: f64,
    /// Event kind.
    pub kind: EventKind,
    /// Particle ordinal in entry order, starting at 0.
    pub particle: u64,
    /// Source vertex; absent for entries.
    pub from: Option<VertexId>,
    /// Target vertex.
    pub to: VertexId,
}

/// A time-ordered event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    /// Events in simulation order.
    pub events: Vec<Event>,
}

impl EventLog {
    /// Text form, one `time kind particle from to` line per event, with `-`
    /// for the absent source of an entry. f64 display round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# time kind particle from to\n");
        for e in &self.events {
            let from = e
                .from
                .map_or_else(|| "-".to_string(), |v| v.to_string());
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                e.time,
                e.kind.name(),
                e.particle,
                from,
                e.to
            ));
        }
        out
    }

    /// Parses the text form; `#` lines and blank lines are skipped.
    pub fn from_text(text: &str) -> Result<EventLog, EngineError> {
        let mut events = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(EngineError::LogParse {
                    line: line_no,
                    msg: format!("expected 5 fields, got {}", fields.len()),
                });
            }
            let parse_err = |msg: String| EngineError::LogParse { line: line_no, msg };
            let time: f64 = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad time {}", fields[0])))?;
            let kind = match fields[1] {
                "entry" => EventKind::Entry,
                "jump" => EventKind::Jump,
                "blocked" => EventKind::Blocked,
                other => return Err(parse_err(format!("unknown kind {other}"))),
            };
            let particle: u64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad particle {}", fields[2])))?;
            let from: Option<VertexId> = if fields[3] == "-" {
                None
            } else {
                Some(
                    fields[3]
                        .parse()
                        .map_err(|_| parse_err(format!("bad source {}", fields[3])))?,
                )
            };
            let to: VertexId = fields[4]
                .parse()
                .map_err(|_| parse_err(format!("bad target {}", fields[4])))?;
            if kind == EventKind::Entry && from.is_some() {
                return Err(parse_err("entry events have no source".into()));
            }
            if kind != EventKind::Entry && from.is_none() {
                return Err(parse_err("jump and blocked events need a source".into()));
            }
            events.push(Event {
                time,
                kind,
                particle,
                from,
                to,
            });
        }
        Ok(EventLog { events })
    }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    /// Full event log.
    pub log: EventLog,
    /// Time at which the run ended.
    pub final_time: f64,
    /// Number of particles that entered.
    pub entered: u64,
    /// Entries plus jumps.
    pub effective_events: u64,
    /// All processed events, including suppressed proposals.
    pub events_processed: u64,
    /// The event cap was hit before the stop rule.
    pub truncated: bool,
    /// No legal transition remained (only possible on finite trees).
    pub absorbed: bool,
    /// Current vertex of each particle, indexed by entry ordinal.
    pub positions: Vec<VertexId>,
    /// Occupied vertices and their particles at the final time.
    pub occupancy: BTreeMap<VertexId, u64>,
    /// The tree as grown during the run.
    pub tree: Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClockKey {
    Entry,
    /// An edge clock is keyed by its target; the source is the parent.
    Edge(VertexId),
}

struct ClockEntry {
    time: f64,
    seq: u64,
    key: ClockKey,
    version: u64,
}

impl PartialEq for ClockEntry {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for ClockEntry {}
impl PartialOrd for ClockEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ClockEntry {
    /// Simultaneous tentative times resolve toward the earlier-created clock.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

/// A configured simulation, consumed by [`Simulation::run`].
pub struct Simulation {
    tree: Tree,
    family: RateFamily,
    params: SimParams,
    rng: ChaCha8Rng,
    time: f64,
    occupant: HashMap<VertexId, u64>,
    positions: Vec<VertexId>,
    entered: u64,
    events: Vec<Event>,
    effective: u64,
    processed: u64,
    // Next-reaction clocks.
    heap: BinaryHeap<Reverse<ClockEntry>>,
    versions: Vec<u64>,
    entry_version: u64,
    seq: u64,
    // Shared-stream occupied set with cached out-rates.
    occupied_list: Vec<VertexId>,
    occupied_slot: HashMap<VertexId, usize>,
    out_cache: Vec<f64>,
    w_occ: f64,
    // Stop-rule bookkeeping.
    passed: u64,
    pending: u64,
    consecutive_nulls: u64,
}

/// Runs one simulation to completion.
pub fn simulate(
    tree: Tree,
    family: RateFamily,
    params: &SimParams,
) -> Result<SimOutcome, EngineError> {
    Simulation::new(tree, family, params.clone())?.run()
}

impl Simulation {
    /// Validates parameters and prepares the initial empty state.
    pub fn new(tree: Tree, family: RateFamily, params: SimParams) -> Result<Self, EngineError> {
        if !(params.lambda > 0.0) || !params.lambda.is_finite() {
            return Err(EngineError::InvalidConfig(format!(
                "reservoir rate must be positive and finite, got {}",
                params.lambda
            )));
        }
        if params.max_events == 0 {
            return Err(EngineError::InvalidConfig("event cap must be positive".into()));
        }
        if let StopRule::TimeHorizon(t) = params.stop {
            if !(t >= 0.0) {
                return Err(EngineError::InvalidConfig(format!(
                    "time horizon must be non-negative, got {t}"
                )));
            }
        }
        if !params.initial.is_empty() {
            if matches!(params.stop, StopRule::Disentangled { .. }) {
                return Err(EngineError::InvalidConfig(
                    "the disentangled stop rule tracks root entries and cannot be \
                     combined with a seeded initial configuration"
                        .into(),
                ));
            }
            let mut seen = std::collections::HashSet::new();
            for &v in &params.initial {
                if (v as usize) >= tree.len() {
                    return Err(EngineError::InvalidConfig(format!(
                        "initial vertex {v} is not materialized in the tree"
                    )));
                }
                if !seen.insert(v) {
                    return Err(EngineError::InvalidConfig(format!(
                        "initial vertex {v} is listed twice"
                    )));
                }
            }
        }
        family.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(Simulation {
            tree,
            family,
            params,
            rng,
            time: 0.0,
            occupant: HashMap::new(),
            positions: Vec::new(),
            entered: 0,
            events: Vec::new(),
            effective: 0,
            processed: 0,
            heap: BinaryHeap::new(),
            versions: Vec::new(),
            entry_version: 0,
            seq: 0,
            occupied_list: Vec::new(),
            occupied_slot: HashMap::new(),
            out_cache: Vec::new(),
            w_occ: 0.0,
            passed: 0,
            pending: 0,
            consecutive_nulls: 0,
        })
    }

    /// Runs until the stop rule, absorption, or the event cap.
    pub fn run(mut self) -> Result<SimOutcome, EngineError> {
        let (truncated, absorbed, final_time) = match self.params.mode {
            SimMode::NextReaction => self.run_next_reaction()?,
            SimMode::SharedStream => self.run_shared_stream()?,
        };
        let occupancy: BTreeMap<VertexId, u64> =
            self.occupant.iter().map(|(&v, &p)| (v, p)).collect();
        Ok(SimOutcome {
            log: EventLog { events: self.events },
            final_time,
            entered: self.entered,
            effective_events: self.effective,
            events_processed: self.processed,
            truncated,
            absorbed,
            positions: self.positions,
            occupancy,
            tree: self.tree,
        })
    }

    fn exp(&mut self, rate: f64) -> f64 {
        rand_distr::Exp::new(rate)
            .expect("clock rates are positive")
            .sample(&mut self.rng)
    }

    fn sync_versions(&mut self) {
        if self.versions.len() < self.tree.len() {
            self.versions.resize(self.tree.len(), 0);
        }
    }

    fn push_clock(&mut self, time: f64, key: ClockKey, version: u64) {
        self.seq += 1;
        self.heap.push(Reverse(ClockEntry {
            time,
            seq: self.seq,
            key,
            version,
        }));
    }

    fn activate_entry(&mut self) {
        self.entry_version += 1;
        let t = self.time + self.exp(self.params.lambda);
        self.push_clock(t, ClockKey::Entry, self.entry_version);
    }

    fn activate_edge(&mut self, child: VertexId) -> Result<(), EngineError> {
        let parent = self
            .tree
            .parent(child)
            .expect("edge clocks target non-root vertices");
        let rate = self.family.rate(&self.tree, parent, child)?;
        self.versions[child as usize] += 1;
        let t = self.time + self.exp(rate);
        self.push_clock(t, ClockKey::Edge(child), self.versions[child as usize]);
        Ok(())
    }

    fn clock_valid(&self, entry: &ClockEntry) -> bool {
        match entry.key {
            ClockKey::Entry => entry.version == self.entry_version,
            ClockKey::Edge(c) => entry.version == self.versions[c as usize],
        }
    }

    /// Updates stop-rule counters for a particle arriving at `generation`.
    fn note_arrival(&mut self, particle: u64, generation: u64, is_entry: bool) {
        match self.params.stop {
            StopRule::ParticlesPastGeneration { generation: g, .. } => {
                if generation == g {
                    self.passed += 1;
                }
            }
            StopRule::Disentangled { count, generation: g } => {
                if particle < count && g > 0 {
                    if is_entry {
                        self.pending += 1;
                    } else if generation == g {
                        self.pending -= 1;
                    }
                }
            }
            _ => {}
        }
    }

    fn stop_reached(&self) -> bool {
        match self.params.stop {
            StopRule::TimeHorizon(_) => false,
            StopRule::ParticlesEntered(n) => self.entered >= n,
            StopRule::ParticlesPastGeneration { count, .. } => self.passed >= count,
            StopRule::Disentangled { count, .. } => self.entered >= count && self.pending == 0,
        }
    }

    /// Registers the seeded particles before any clock runs.
    ///
    /// Seeds take ordinals in list order, are not logged as entries, and
    /// count toward a past-generation stop when placed at or beyond the
    /// target generation.
    fn place_initial(&mut self) -> Result<(), EngineError> {
        let initial = self.params.initial.clone();
        for &v in &initial {
            let p = self.entered;
            self.occupant.insert(v, p);
            self.positions.push(v);
            self.entered += 1;
            if let StopRule::ParticlesPastGeneration { generation: g, .. } = self.params.stop {
                if u64::from(self.tree.generation(v)) >= g {
                    self.passed += 1;
                }
            }
            self.tree.ensure_children(v)?;
            self.sync_versions();
        }
        Ok(())
    }

    /// Applies an entry and returns the new particle's ordinal.
    fn apply_entry_state(&mut self) -> Result<u64, EngineError> {
        let p = self.entered;
        self.occupant.insert(0, p);
        self.positions.push(0);
        self.entered += 1;
        self.effective += 1;
        self.events.push(Event {
            time: self.time,
            kind: EventKind::Entry,
            particle: p,
            from: None,
            to: 0,
        });
        self.note_arrival(p, 0, true);
        self.tree.ensure_children(0)?;
        self.sync_versions();
        Ok(p)
    }

    /// Applies a jump of the occupant of `x` to its child `y`.
    fn apply_jump_state(&mut self, x: VertexId, y: VertexId) -> Result<u64, EngineError> {
        let p = self
            .occupant
            .remove(&x)
            .expect("jump source must be occupied");
        self.occupant.insert(y, p);
        self.positions[p as usize] = y;
        self.effective += 1;
        self.events.push(Event {
            time: self.time,
            kind: EventKind::Jump,
            particle: p,
            from: Some(x),
            to: y,
        });
        let gen = u64::from(self.tree.generation(y));
        self.note_arrival(p, gen, false);
        self.tree.ensure_children(y)?;
        self.sync_versions();
        Ok(p)
    }

    fn run_next_reaction(&mut self) -> Result<(bool, bool, f64), EngineError> {
        self.place_initial()?;
        if !self.occupant.contains_key(&0) {
            self.activate_entry();
        }
        for &v in &self.params.initial.clone() {
            for c in self.tree.children(v).expect("seeded vertices are grown") {
                if !self.occupant.contains_key(&c) {
                    self.activate_edge(c)?;
                }
            }
        }
        if self.stop_reached() {
            return Ok((false, false, self.time));
        }
        loop {
            if self.processed >= self.params.max_events {
                return Ok((true, false, self.time));
            }
            let Some(Reverse(clock)) = self.heap.pop() else {
                return Ok((false, true, self.time));
            };
            if !self.clock_valid(&clock) {
                continue;
            }
            if let StopRule::TimeHorizon(t) = self.params.stop {
                if clock.time > t {
                    return Ok((false, false, t));
                }
            }
            self.time = clock.time;
            self.processed += 1;
            match clock.key {
                ClockKey::Entry => {
                    self.apply_entry_state()?;
                    self.entry_version += 1;
                    let kids = self.tree.children(0).expect("root children ensured");
                    for c in kids {
                        if !self.occupant.contains_key(&c) {
                            self.activate_edge(c)?;
                        }
                    }
                }
                ClockKey::Edge(y) => {
                    let x = self.tree.parent(y).expect("edge target has a parent");
                    // All out-clocks of x die with the departure, including
                    // the one that fired.
                    for s in self.tree.children(x).expect("source was occupied") {
                        self.versions[s as usize] += 1;
                    }
                    self.apply_jump_state(x, y)?;
                    if x == 0 {
                        self.activate_entry();
                    } else {
                        let w = self.tree.parent(x).expect("non-root has a parent");
                        if self.occupant.contains_key(&w) {
                            self.activate_edge(x)?;
                        }
                    }
                    let kids = self.tree.children(y).expect("target children ensured");
                    for c in kids {
                        if !self.occupant.contains_key(&c) {
                            self.activate_edge(c)?;
                        }
                    }
                }
            }
            if self.stop_reached() {
                return Ok((false, false, self.time));
            }
        }
    }

    fn occupied_insert(&mut self, v: VertexId) -> Result<(), EngineError> {
        let out = self.family.out_rate(&self.tree, v)?;
        self.occupied_slot.insert(v, self.occupied_list.len());
        self.occupied_list.push(v);
        self.out_cache.push(out);
        self.w_occ += out;
        Ok(())
    }

    fn occupied_remove(&mut self, v: VertexId) {
        let slot = self.occupied_slot.remove(&v).expect("vertex tracked");
        self.w_occ -= self.out_cache[slot];
        self.occupied_list.swap_remove(slot);
        self.out_cache.swap_remove(slot);
        if slot < self.occupied_list.len() {
            self.occupied_slot.insert(self.occupied_list[slot], slot);
        }
        if self.w_occ < 0.0 {
            self.w_occ = 0.0;
        }
    }

    /// True when the root is occupied and no occupied vertex has an empty
    /// child, so no transition can ever become legal again.
    fn fully_blocked(&self) -> bool {
        if !self.occupant.contains_key(&0) {
            return false;
        }
        for &v in &self.occupied_list {
            if let Some(kids) = self.tree.children(v) {
                for c in kids {
                    if !self.occupant.contains_key(&c) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn run_shared_stream(&mut self) -> Result<(bool, bool, f64), EngineError> {
        self.place_initial()?;
        for &v in &self.params.initial.clone() {
            self.occupied_insert(v)?;
        }
        if self.stop_reached() {
            return Ok((false, false, self.time));
        }
        loop {
            if self.processed >= self.params.max_events {
                return Ok((true, false, self.time));
            }
            // Absorption leaves only null proposals; a burst of them
            // triggers the exact check.
            if self.consecutive_nulls >= 64 {
                self.consecutive_nulls = 0;
                if self.fully_blocked() {
                    return Ok((false, true, self.time));
                }
            }
            let total = self.params.lambda + self.w_occ;
            let dt = self.exp(total);
            let t_next = self.time + dt;
            if let StopRule::TimeHorizon(t) = self.params.stop {
                if t_next > t {
                    return Ok((false, false, t));
                }
            }
            self.time = t_next;
            self.processed += 1;
            let mut u = self.rng.gen::<f64>() * total;
            if u < self.params.lambda {
                if self.occupant.contains_key(&0) {
                    self.consecutive_nulls += 1;
                    continue;
                }
                self.consecutive_nulls = 0;
                self.apply_entry_state()?;
                self.occupied_insert(0)?;
            } else {
                u -= self.params.lambda;
                if self.occupied_list.is_empty() {
                    // Rounding placed u past lambda with nothing occupied.
                    continue;
                }
                let mut idx = self.occupied_list.len() - 1;
                for (i, r) in self.out_cache.iter().enumerate() {
                    if u < *r {
                        idx = i;
                        break;
                    }
                    u -= r;
                }
                let x = self.occupied_list[idx];
                let kids = self.tree.children(x).expect("occupied vertices are grown");
                if kids.is_empty() {
                    continue;
                }
                let mut y = kids.end - 1;
                for c in kids {
                    let r = self.family.rate(&self.tree, x, c)?;
                    if u < r {
                        y = c;
                        break;
                    }
                    u -= r;
                }
                if let Some(&blocker) = self.occupant.get(&y) {
                    let _ = blocker;
                    self.consecutive_nulls += 1;
                    let p = *self.occupant.get(&x).expect("source occupied");
                    self.events.push(Event {
                        time: self.time,
                        kind: EventKind::Blocked,
                        particle: p,
                        from: Some(x),
                        to: y,
                    });
                    continue;
                }
                self.consecutive_nulls = 0;
                self.occupied_remove(x);
                self.apply_jump_state(x, y)?;
                self.occupied_insert(y)?;
            }
            if self.stop_reached() {
                return Ok((false, false, self.time));
            }
        }
    }
}

/// Final state reached by replaying a log.
#[derive(Debug, Clone)]
pub struct ReplayState {
    /// Time of the last event.
    pub time: f64,
    /// Number of entries seen.
    pub entered: u64,
    /// Current vertex of each particle, by entry ordinal.
    pub positions: Vec<VertexId>,
    /// Occupied vertices and their particles.
    pub occupancy: BTreeMap<VertexId, u64>,
}

/// Replays a log against a tree from the all-empty configuration,
/// validating every event against the exclusion rules, and materializes the
/// tree along the way exactly as the engine does.
pub fn replay(tree: &mut Tree, log: &EventLog) -> Result<ReplayState, EngineError> {
    replay_from(tree, log, &[])
}

/// Replays a log that started from a seeded configuration.
///
/// `initial` lists the vertices occupied before time zero in particle
/// ordinal order, matching the `initial` field of the run that produced the
/// log.
pub fn replay_from(
    tree: &mut Tree,
    log: &EventLog,
    initial: &[VertexId],
) -> Result<ReplayState, EngineError> {
    let mut occupant: BTreeMap<VertexId, u64> = BTreeMap::new();
    let mut positions: Vec<VertexId> = Vec::new();
    for &v in initial {
        if occupant.insert(v, positions.len() as u64).is_some() {
            return Err(EngineError::InvalidConfig(format!(
                "initial vertex {v} is listed twice"
            )));
        }
        positions.push(v);
        tree.ensure_children(v)?;
    }
    let mut time = 0.0f64;
    for (index, e) in log.events.iter().enumerate() {
        let fail = |msg: String| EngineError::IllegalEvent { index, msg };
        if e.time < time {
            return Err(fail(format!("time {} moves backwards from {}", e.time, time)));
        }
        time = e.time;
        match e.kind {
            EventKind::Entry => {
                if e.to != 0 {
                    return Err(fail(format!("entry targets vertex {}, not the root", e.to)));
                }
                if occupant.contains_key(&0) {
                    return Err(fail("entry into an occupied root".into()));
                }
                if e.particle != positions.len() as u64 {
                    return Err(fail(format!(
                        "entry ordinal {} out of order, expected {}",
                        e.particle,
                        positions.len()
                    )));
                }
                occupant.insert(0, e.particle);
                positions.push(0);
                tree.ensure_children(0)?;
            }
            EventKind::Jump | EventKind::Blocked => {
                let from = e.from.expect("parser enforces a source");
                match occupant.get(&from) {
                    Some(&p) if p == e.particle => {}
                    Some(&p) => {
                        return Err(fail(format!(
                            "vertex {from} holds particle {p}, event names {}",
                            e.particle
                        )));
                    }
                    None => return Err(fail(format!("source vertex {from} is empty"))),
                }
                let kids = tree
                    .children(from)
                    .ok_or_else(|| fail(format!("source vertex {from} was never grown")))?;
                if !kids.contains(&e.to) {
                    return Err(fail(format!("{} is not a child of {from}", e.to)));
                }
                let target_occupied = occupant.contains_key(&e.to);
                if e.kind == EventKind::Blocked {
                    if !target_occupied {
                        return Err(fail(format!("blocked attempt into empty vertex {}", e.to)));
                    }
                } else {
                    if target_occupied {
                        return Err(fail(format!("jump into occupied vertex {}", e.to)));
                    }
                    occupant.remove(&from);
                    occupant.insert(e.to, e.particle);
                    positions[e.particle as usize] = e.to;
                    tree.ensure_children(e.to)?;
                }
            }
        }
    }
    Ok(ReplayState {
        time,
        entered: positions.len() as u64,
        positions,
        occupancy: occupant,
    })
}

/// Times at which some particle first reached `generation`, in order.
///
/// Entries count for generation 0. Every jump advances a particle by one
/// generation, so each particle contributes at most one time.
pub fn passage_times(tree: &Tree, log: &EventLog, generation: u64) -> Vec<f64> {
    log.events
        .iter()
        .filter(|e| e.kind != EventKind::Blocked)
        .filter(|e| u64::from(tree.generation(e.to)) == generation)
        .map(|e| e.time)
        .collect()
}

/// Cumulative current through `generation` at time `t`: how many particles
/// have reached it.
pub fn current_at(tree: &Tree, log: &EventLog, generation: u64, t: f64) -> u64 {
    passage_times(tree, log, generation)
        .iter()
        .filter(|&&s| s <= t)
        .count() as u64
}

/// Time at which the current through `generation` first reached `index`.
/// Index 0 is 0 by convention; `None` when the log never gets there.
pub fn tau(tree: &Tree, log: &EventLog, generation: u64, index: u64) -> Option<f64> {
    if index == 0 {
        return Some(0.0);
    }
    passage_times(tree, log, generation)
        .get(index as usize - 1)
        .copied()
}

/// The running maximum generation reached by any particle, recorded at each
/// increase as `(time, generation)`.
pub fn max_generation_process(tree: &Tree, log: &EventLog) -> Vec<(f64, u64)> {
    let mut steps = Vec::new();
    let mut best: Option<u64> = None;
    for e in &log.events {
        if e.kind == EventKind::Blocked {
            continue;
        }
        let g = u64::from(tree.generation(e.to));
        if best.map_or(true, |b| g > b) {
            best = Some(g);
            steps.push((e.time, g));
        }
    }
    steps
}

/// Deepest generation any particle reached over the whole log.
pub fn max_generation(tree: &Tree, log: &EventLog) -> u64 {
    max_generation_process(tree, log)
        .last()
        .map_or(0, |&(_, g)| g)
}

/// Waiting time from `t` until vertex `x` is next empty, from the log alone.
///
/// Returns 0 when `x` is empty at `t`, and `None` when `x` stays occupied
/// through the end of the log, so the wait exceeds the observed horizon.
pub fn availability(log: &EventLog, x: VertexId, t: f64) -> Option<f64> {
    let mut occupied_since: Option<f64> = None;
    for e in &log.events {
        if e.kind == EventKind::Blocked {
            continue;
        }
        if e.to == x {
            occupied_since = Some(e.time);
        } else if e.from == Some(x) {
            if let Some(start) = occupied_since.take() {
                if t >= start && t < e.time {
                    return Some(e.time - t);
                }
            }
        }
    }
    match occupied_since {
        Some(start) if t >= start => None,
        _ => Some(0.0),
    }
}

/// Depth of traffic at `x` for each query time: the smallest m such that
/// generation m of the subtree rooted at `x` holds an empty site. Vertices
/// never grown count as empty. `None` when the whole finite subtree below
/// `x` is packed.
///
/// Query times must be sorted ascending; times beyond the log report the
/// final state.
pub fn depth_of_traffic_profile(
    tree: &mut Tree,
    log: &EventLog,
    x: VertexId,
    times: &[f64],
) -> Result<Vec<Option<u64>>, EngineError> {
    debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    let mut occupant: HashMap<VertexId, u64> = HashMap::new();
    let mut out = Vec::with_capacity(times.len());
    let mut next_event = 0usize;
    for &t in times {
        while next_event < log.events.len() && log.events[next_event].time <= t {
            let e = &log.events[next_event];
            if e.kind != EventKind::Blocked {
                if let Some(from) = e.from {
                    occupant.remove(&from);
                }
                occupant.insert(e.to, e.particle);
                tree.ensure_children(e.to)?;
            }
            next_event += 1;
        }
        out.push(depth_from_state(tree, &occupant, x));
    }
    Ok(out)
}

/// Breadth-first search for the first generation of the subtree at `x` that
/// is not fully occupied.
fn depth_from_state(tree: &Tree, occupant: &HashMap<VertexId, u64>, x: VertexId) -> Option<u64> {
    let mut frontier = vec![x];
    let mut depth = 0u64;
    loop {
        if frontier.iter().any(|v| !occupant.contains_key(v)) {
            return Some(depth);
        }
        // Every frontier vertex is occupied; ungrown children are empty.
        let mut next = Vec::new();
        for &v in &frontier {
            match tree.children(v) {
                None => return Some(depth + 1),
                Some(kids) => next.extend(kids),
            }
        }
        if next.is_empty() {
            return None;
        }
        frontier = next;
        depth += 1;
    }
}

/// Cumulative current through vertex `x` at time `t`: how many particles
/// have arrived at `x`, hence entered the subtree below it. Assumes a log
/// that started from the empty configuration, where every visitor of the
/// subtree passes through `x` exactly once.
pub fn current_at_vertex(log: &EventLog, x: VertexId, t: f64) -> u64 {
    log.events
        .iter()
        .filter(|e| e.kind != EventKind::Blocked && e.to == x && e.time <= t)
        .count() as u64
}

/// Deepest generation any particle reached by time `t`, or `None` when no
/// particle was present yet.
pub fn max_generation_at(tree: &Tree, log: &EventLog, t: f64) -> Option<u64> {
    log.events
        .iter()
        .take_while(|e| e.time <= t)
        .filter(|e| e.kind != EventKind::Blocked)
        .map(|e| u64::from(tree.generation(e.to)))
        .max()
}

/// Smallest generation `m` at which the first `n` particles occupy pairwise
/// distinct sites forever after, from a log that started empty.
///
/// Each particle crosses a unique site per generation along its path away
/// from the root. The result is the least `m` that every one of the first
/// `n` particles has crossed with all `n` crossing sites distinct; from
/// such an `m` on, the particles live in disjoint subtrees. `Ok(None)`
/// means the log is too short to exhibit one: either some particle has not
/// crossed a generation where the others are already distinct, or the
/// shared prefixes extend past the deepest commonly crossed generation.
///
/// A single particle is distinct on its own at the root, so `n = 1` gives
/// generation 0; for `n >= 2` the result is at least 1 because every path
/// starts at the root. Distinctness at `m` must persist at every deeper
/// commonly crossed generation, and that persistence is verified against
/// the log.
pub fn disentanglement_generation(log: &EventLog, n: u64) -> Result<Option<u64>, EngineError> {
    if n == 0 {
        return Ok(Some(0));
    }
    let mut paths: Vec<Vec<VertexId>> = Vec::new();
    for e in &log.events {
        if e.kind == EventKind::Blocked || e.particle >= n {
            continue;
        }
        match e.kind {
            EventKind::Entry => {
                if e.particle != paths.len() as u64 {
                    return Err(EngineError::Inconsistent(format!(
                        "entry ordinal {} does not extend the registry of {}",
                        e.particle,
                        paths.len()
                    )));
                }
                paths.push(vec![e.to]);
            }
            EventKind::Jump => {
                paths[e.particle as usize].push(e.to);
            }
            EventKind::Blocked => unreachable!(),
        }
    }
    if (paths.len() as u64) < n {
        return Err(EngineError::InvalidConfig(format!(
            "only {} of the first {} particles have entered",
            paths.len(),
            n
        )));
    }
    let common = paths
        .iter()
        .map(|p| p.len() - 1)
        .min()
        .expect("n >= 1 paths exist");
    let distinct_at = |m: usize| {
        let mut sites: Vec<VertexId> = paths.iter().map(|p| p[m]).collect();
        sites.sort_unstable();
        sites.windows(2).all(|w| w[0] != w[1])
    };
    let Some(first) = (0..=common).find(|&m| distinct_at(m)) else {
        return Ok(None);
    };
    for m in first + 1..=common {
        if !distinct_at(m) {
            return Err(EngineError::Inconsistent(format!(
                "distinctness at generation {first} fails to persist at {m}"
            )));
        }
    }
    Ok(Some(first as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gw_tree::OffspringLaw;
    use crate::rate_field::RateTable;
    use crate::stats::{ks_one_sample, ks_two_sample, mean_and_se};

    fn exp3() -> RateFamily {
        RateFamily::ExponentialHomogeneous { d: 3 }
    }

    fn lazy3(seed: u64) -> Tree {
        Tree::new_lazy(OffspringLaw::regular(3).unwrap(), seed)
    }

    fn params(lambda: f64, seed: u64, mode: SimMode, stop: StopRule) -> SimParams {
        SimParams {
            lambda,
            seed,
            mode,
            stop,
            max_events: DEFAULT_MAX_EVENTS,
            initial: Vec::new(),
        }
    }

    #[test]
    fn same_seed_reproduces_the_log() {
        for mode in [SimMode::NextReaction, SimMode::SharedStream] {
            let p = params(1.0, 42, mode, StopRule::ParticlesEntered(20));
            let a = simulate(lazy3(7), exp3(), &p).unwrap();
            let b = simulate(lazy3(7), exp3(), &p).unwrap();
            assert_eq!(a.log, b.log);
            assert_eq!(a.final_time, b.final_time);
            let p2 = params(1.0, 43, mode, StopRule::ParticlesEntered(20));
            let c = simulate(lazy3(7), exp3(), &p2).unwrap();
            assert_ne!(a.log, c.log);
        }
    }

    #[test]
    fn log_text_round_trips() {
        // A jammed shared-stream run produces blocked events too.
        let p = params(5.0, 11, SimMode::SharedStream, StopRule::ParticlesEntered(25));
        let out = simulate(lazy3(3), exp3(), &p).unwrap();
        assert!(
            out.log.events.iter().any(|e| e.kind == EventKind::Blocked),
            "expected suppressed proposals at this density"
        );
        let text = out.log.to_text();
        let parsed = EventLog::from_text(&text).unwrap();
        assert_eq!(parsed, out.log);
    }

    #[test]
    fn log_parser_rejects_malformed_lines() {
        assert!(EventLog::from_text("1.0 entry 0 -").is_err());
        assert!(EventLog::from_text("1.0 warp 0 - 0").is_err());
        assert!(EventLog::from_text("1.0 entry 0 3 0").is_err());
        assert!(EventLog::from_text("1.0 jump 0 - 1").is_err());
        assert!(EventLog::from_text("x jump 0 0 1").is_err());
    }

    #[test]
    fn replay_reaches_the_same_state() {
        for mode in [SimMode::NextReaction, SimMode::SharedStream] {
            let p = params(0.8, 5, mode, StopRule::TimeHorizon(40.0));
            let out = simulate(lazy3(9), exp3(), &p).unwrap();
            let mut fresh = lazy3(9);
            let state = replay(&mut fresh, &out.log).unwrap();
            assert_eq!(state.positions, out.positions);
            assert_eq!(state.occupancy, out.occupancy);
            assert_eq!(state.entered, out.entered);
        }
    }

    #[test]
    fn exclusion_holds_over_many_events() {
        // Constant rates keep every particle moving, so the event budget is
        // spent quickly; replay validates every single transition.
        let p = SimParams {
            lambda: 2.0,
            seed: 99,
            mode: SimMode::NextReaction,
            stop: StopRule::TimeHorizon(f64::INFINITY),
            max_events: 120_000,
            initial: Vec::new(),
        };
        let out = simulate(lazy3(1), RateFamily::Constant, &p).unwrap();
        assert!(out.truncated);
        assert!(out.effective_events >= 120_000);
        let mut fresh = lazy3(1);
        replay(&mut fresh, &out.log).unwrap();
    }

    #[test]
    fn first_entry_time_is_exponential() {
        let lambda = 0.7;
        let mut samples = Vec::with_capacity(3000);
        for seed in 0..3000u64 {
            let p = params(lambda, seed, SimMode::NextReaction, StopRule::ParticlesEntered(1));
            let out = simulate(lazy3(2), exp3(), &p).unwrap();
            samples.push(out.log.events[0].time);
        }
        let (mean, se) = mean_and_se(&samples);
        assert!(
            (mean - 1.0 / lambda).abs() < 4.0 * se,
            "mean {mean} vs {}",
            1.0 / lambda
        );
        let ks = ks_one_sample(&samples, |x| 1.0 - (-lambda * x.max(0.0)).exp());
        assert!(ks.p_value > 1e-3, "p = {}", ks.p_value);
    }

    #[test]
    fn entries_approximate_a_poisson_stream() {
        // With a reservoir far slower than the root drain, thinning by root
        // occupancy is negligible and gaps between entries look exponential.
        let lambda = 0.02;
        let p = params(lambda, 4, SimMode::NextReaction, StopRule::ParticlesEntered(120));
        let out = simulate(lazy3(8), exp3(), &p).unwrap();
        let entries: Vec<f64> = out
            .log
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Entry)
            .map(|e| e.time)
            .collect();
        let gaps: Vec<f64> = entries.windows(2).map(|w| w[1] - w[0]).collect();
        let ks = ks_one_sample(&gaps, |x| 1.0 - (-lambda * x.max(0.0)).exp());
        assert!(ks.p_value > 1e-3, "p = {}", ks.p_value);
    }

    #[test]
    fn samplers_agree_on_passage_time_distribution() {
        // Time for the fifth particle to reach generation 1, compared across
        // the two samplers.
        let stop = StopRule::ParticlesPastGeneration {
            count: 5,
            generation: 1,
        };
        let mut a = Vec::with_capacity(600);
        let mut b = Vec::with_capacity(600);
        for seed in 0..600u64 {
            let pa = params(1.0, seed, SimMode::NextReaction, stop);
            let pb = params(1.0, 10_000 + seed, SimMode::SharedStream, stop);
            a.push(simulate(lazy3(6), exp3(), &pa).unwrap().final_time);
            b.push(simulate(lazy3(6), exp3(), &pb).unwrap().final_time);
        }
        let ks = ks_two_sample(&a, &b);
        assert!(ks.p_value > 1e-3, "p = {}", ks.p_value);
    }

    #[test]
    fn stop_rules_hold_exactly() {
        let p = params(1.0, 3, SimMode::NextReaction, StopRule::TimeHorizon(12.5));
        let out = simulate(lazy3(4), exp3(), &p).unwrap();
        assert_eq!(out.final_time, 12.5);
        assert!(out.log.events.iter().all(|e| e.time <= 12.5));

        let p = params(1.0, 3, SimMode::NextReaction, StopRule::ParticlesEntered(7));
        let out = simulate(lazy3(4), exp3(), &p).unwrap();
        assert_eq!(out.entered, 7);

        let p = params(
            1.0,
            3,
            SimMode::NextReaction,
            StopRule::ParticlesPastGeneration {
                count: 3,
                generation: 2,
            },
        );
        let out = simulate(lazy3(4), exp3(), &p).unwrap();
        assert_eq!(passage_times(&out.tree, &out.log, 2).len(), 3);
    }

    #[test]
    fn disentangled_stop_rule_clears_the_generation() {
        let p = params(
            1e-16,
            21,
            SimMode::NextReaction,
            StopRule::Disentangled {
                count: 4,
                generation: 8,
            },
        );
        let out = simulate(lazy3(5), exp3(), &p).unwrap();
        assert!(out.entered >= 4);
        for ordinal in 0..4usize {
            let v = out.positions[ordinal];
            assert!(u64::from(out.tree.generation(v)) >= 8);
        }
        let m = disentanglement_generation(&out.log, 4)
            .unwrap()
            .expect("all four particles crossed generation 8");
        // Paths share the root, so separation happens strictly after it but
        // within the commonly crossed range.
        assert!((1..=8).contains(&m), "separated at {m}");
    }

    #[test]
    fn disentanglement_requires_distinct_crossing_sites() {
        // Two particles through separate root children split at generation 1.
        let forked = EventLog::from_text(
            "0.5 entry 0 - 0\n1.0 jump 0 0 1\n1.5 entry 1 - 0\n2.0 jump 1 0 2\n",
        )
        .unwrap();
        assert_eq!(disentanglement_generation(&forked, 2).unwrap(), Some(1));
        assert_eq!(disentanglement_generation(&forked, 1).unwrap(), Some(0));
        // Along a chain the second particle only ever crosses the root,
        // which the first one also crossed.
        let chained = EventLog::from_text(
            "0.5 entry 0 - 0\n1.0 jump 0 0 1\n1.5 entry 1 - 0\n2.0 jump 0 1 2\n",
        )
        .unwrap();
        assert_eq!(disentanglement_generation(&chained, 2).unwrap(), None);
        assert!(matches!(
            disentanglement_generation(&chained, 3),
            Err(EngineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn truncation_sets_the_flag() {
        let mut p = params(1.0, 2, SimMode::NextReaction, StopRule::ParticlesEntered(1000));
        p.max_events = 5;
        let out = simulate(lazy3(2), exp3(), &p).unwrap();
        assert!(out.truncated);
        assert_eq!(out.events_processed, 5);
    }

    #[test]
    fn packed_finite_tree_absorbs() {
        let table = RateTable::from_entries([(0, 1, 1.0)]).unwrap();
        let family = RateFamily::CustomTable {
            table,
            decay_class: None,
        };
        for mode in [SimMode::NextReaction, SimMode::SharedStream] {
            let tree = Tree::from_parents(&[None, Some(0)]).unwrap();
            let p = params(3.0, 17, mode, StopRule::TimeHorizon(f64::INFINITY));
            let out = simulate(tree, family.clone(), &p).unwrap();
            assert!(out.absorbed, "{mode:?}");
            assert_eq!(out.entered, 2);
            assert_eq!(out.occupancy.len(), 2);
        }
    }

    #[test]
    fn growth_stays_one_generation_ahead() {
        let p = params(1.0, 13, SimMode::NextReaction, StopRule::TimeHorizon(25.0));
        let out = simulate(lazy3(13), exp3(), &p).unwrap();
        for &v in out.occupancy.keys() {
            assert!(out.tree.children(v).is_some());
        }
    }

    #[test]
    fn current_and_tau_observables_match_the_log() {
        let p = params(1.2, 31, SimMode::NextReaction, StopRule::TimeHorizon(30.0));
        let out = simulate(lazy3(14), exp3(), &p).unwrap();
        let times = passage_times(&out.tree, &out.log, 1);
        assert!(!times.is_empty());
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(tau(&out.tree, &out.log, 1, 0), Some(0.0));
        assert_eq!(tau(&out.tree, &out.log, 1, 1), times.first().copied());
        assert_eq!(
            current_at(&out.tree, &out.log, 1, out.final_time),
            times.len() as u64
        );
        assert_eq!(
            tau(&out.tree, &out.log, 1, times.len() as u64 + 1),
            None
        );
        let entries = out
            .log
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Entry)
            .count() as u64;
        assert_eq!(current_at(&out.tree, &out.log, 0, out.final_time), entries);
    }

    #[test]
    fn availability_reads_occupancy_intervals() {
        let log = EventLog::from_text(
            "1.0 entry 0 - 0\n3.0 jump 0 0 1\n4.0 entry 1 - 0\n",
        )
        .unwrap();
        assert_eq!(availability(&log, 0, 0.5), Some(0.0));
        assert_eq!(availability(&log, 0, 1.0), Some(2.0));
        assert_eq!(availability(&log, 0, 2.5), Some(0.5));
        assert_eq!(availability(&log, 0, 3.5), Some(0.0));
        // Occupied through the end of the log.
        assert_eq!(availability(&log, 0, 4.5), None);
        assert_eq!(availability(&log, 1, 3.5), None);
    }

    #[test]
    fn depth_of_traffic_counts_packed_generations() {
        let p = params(0.9, 23, SimMode::NextReaction, StopRule::TimeHorizon(60.0));
        let out = simulate(lazy3(23), exp3(), &p).unwrap();
        let mut tree = out.tree.clone();
        let times: Vec<f64> = (0..=60).map(|k| k as f64).collect();
        let depths = depth_of_traffic_profile(&mut tree, &out.log, 0, &times).unwrap();
        // Cross-check against a direct reconstruction at a few times.
        for (k, want) in depths.iter().enumerate().step_by(13) {
            let t = times[k];
            let mut occ: HashMap<VertexId, u64> = HashMap::new();
            for e in out.log.events.iter().filter(|e| e.time <= t) {
                if e.kind == EventKind::Blocked {
                    continue;
                }
                if let Some(f) = e.from {
                    occ.remove(&f);
                }
                occ.insert(e.to, e.particle);
            }
            assert_eq!(depth_from_state(&tree, &occ, 0), *want, "t = {t}");
        }
        // The root is empty at time 0.
        assert_eq!(depths[0], Some(0));
    }

    #[test]
    fn availability_tail_obeys_the_renewal_bound() {
        // Exponentially decaying rates on the 3-regular tree satisfy the
        // per-generation floor r >= (1/2) 2^(-l), so a wait from traffic
        // depth at most l is a sum of l+1 exponentials with means at most
        // 2^(l+2). The tail above (1+c) times the mean has probability at
        // most exp(-(c - ln(1+c)) l); this run checks c = 1.
        let p = params(0.5, 77, SimMode::NextReaction, StopRule::TimeHorizon(5000.0));
        let out = simulate(lazy3(19), exp3(), &p).unwrap();
        let mut tree = out.tree.clone();
        let times: Vec<f64> = (0..=600).map(|k| 5.0 * k as f64).collect();
        let depths = depth_of_traffic_profile(&mut tree, &out.log, 0, &times).unwrap();
        for ell in [3u64, 4, 5] {
            let threshold = 4.0 * (ell as f64 + 1.0) * 2f64.powi(ell as i32 + 1);
            let bound = (-(1.0 - 2f64.ln()) * ell as f64).exp();
            let mut eligible = 0u64;
            let mut exceed = 0u64;
            for (k, d) in depths.iter().enumerate() {
                let Some(depth) = d else { continue };
                if *depth > ell {
                    continue;
                }
                eligible += 1;
                match availability(&out.log, 0, times[k]) {
                    Some(wait) if wait <= threshold => {}
                    _ => exceed += 1,
                }
            }
            assert!(eligible >= 10, "too few depth-{ell} observations: {eligible}");
            let frac = exceed as f64 / eligible as f64;
            assert!(
                frac <= bound,
                "l = {ell}: exceed fraction {frac} above bound {bound} ({eligible} samples)"
            );
        }
    }

    #[test]
    fn shared_stream_proposals_trace_interaction() {
        let p = params(5.0, 12, SimMode::SharedStream, StopRule::ParticlesEntered(40));
        let out = simulate(lazy3(30), exp3(), &p).unwrap();
        let blocked = out
            .log
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Blocked)
            .count();
        assert!(blocked > 0);
        let p = params(5.0, 12, SimMode::NextReaction, StopRule::ParticlesEntered(40));
        let out = simulate(lazy3(30), exp3(), &p).unwrap();
        assert!(out.log.events.iter().all(|e| e.kind != EventKind::Blocked));
    }

    #[test]
    fn seeded_particles_occupy_and_block_before_any_entry() {
        // A seed on the root delays the first reservoir entry until the
        // seed moves on, in both modes.
        for mode in [SimMode::NextReaction, SimMode::SharedStream] {
            let tree = Tree::sample(OffspringLaw::regular(3).unwrap(), 3, 11);
            let mut p = params(1000.0, 4, mode, StopRule::ParticlesEntered(3));
            p.initial = vec![0];
            let out = simulate(tree, exp3(), &p).unwrap();
            let first_jump = out
                .log
                .events
                .iter()
                .find(|e| e.kind == EventKind::Jump && e.particle == 0)
                .expect("the seed eventually moves");
            assert_eq!(first_jump.from, Some(0), "seed ordinal owns the root start");
            let first_entry = out
                .log
                .events
                .iter()
                .find(|e| e.kind == EventKind::Entry)
                .expect("entries resume after the seed leaves");
            assert!(first_entry.time > first_jump.time, "{mode:?}");
            assert_eq!(first_entry.particle, 1);
            let mut fresh = Tree::sample(OffspringLaw::regular(3).unwrap(), 3, 11);
            let state = replay_from(&mut fresh, &out.log, &p.initial).unwrap();
            assert_eq!(state.positions, out.positions);
        }
    }

    #[test]
    fn seeded_runs_reject_bad_configurations() {
        let tree = Tree::sample(OffspringLaw::regular(3).unwrap(), 2, 1);
        let mut p = params(1.0, 0, SimMode::NextReaction, StopRule::ParticlesEntered(1));
        p.initial = vec![1, 1];
        assert!(matches!(
            simulate(tree.clone(), exp3(), &p),
            Err(EngineError::InvalidConfig(_))
        ));
        p.initial = vec![10_000];
        assert!(matches!(
            simulate(tree.clone(), exp3(), &p),
            Err(EngineError::InvalidConfig(_))
        ));
        p.initial = vec![1];
        p.stop = StopRule::Disentangled {
            count: 2,
            generation: 3,
        };
        assert!(matches!(
            simulate(tree, exp3(), &p),
            Err(EngineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn vertex_current_counts_subtree_visitors() {
        let p = params(2.0, 31, SimMode::NextReaction, StopRule::ParticlesEntered(30));
        let out = simulate(lazy3(8), exp3(), &p).unwrap();
        let t = out.final_time;
        // Arrivals at the root match the generation-zero current, and the
        // per-vertex currents over a generation add up to the current
        // through it.
        assert_eq!(current_at_vertex(&out.log, 0, t), out.entered);
        for g in 1..=3u64 {
            let verts: Vec<VertexId> = (0..out.tree.len() as VertexId)
                .filter(|&v| u64::from(out.tree.generation(v)) == g)
                .collect();
            let total: u64 = verts
                .iter()
                .map(|&v| current_at_vertex(&out.log, v, t))
                .sum();
            assert_eq!(total, current_at(&out.tree, &out.log, g, t), "generation {g}");
        }
    }

    #[test]
    fn max_generation_reports_no_particles_before_the_first_entry() {
        let p = params(1.0, 9, SimMode::NextReaction, StopRule::ParticlesEntered(5));
        let out = simulate(lazy3(3), exp3(), &p).unwrap();
        let first = out.log.events[0].time;
        assert_eq!(max_generation_at(&out.tree, &out.log, first / 2.0), None);
        assert_eq!(
            max_generation_at(&out.tree, &out.log, out.final_time),
            Some(max_generation(&out.tree, &out.log))
        );
    }
}
