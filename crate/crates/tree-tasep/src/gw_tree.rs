//! Rooted Galton-Watson trees with lazy, reproducible growth.
//!
//! A [`Tree`] is an arena of vertices. Trees grown from an [`OffspringLaw`]
//! materialize children on demand: the offspring count of a vertex is a pure
//! function of the growth seed and the vertex's root path, so two programs
//! that explore the same tree in different orders see the same tree. Explicit
//! trees (parsed from text, or built vertex by vertex) carry their structure
//! directly and never grow.
//!
//! Offspring laws are finite tables over counts `k >= 1`. Laws with atoms at
//! zero are rejected: every vertex of the infinite tree must have at least
//! one child. Subcritical and critical laws (mean <= 1) are rejected as well.

use crate::rng::{splitmix64, u64_to_open01};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Index of a vertex in the tree arena. The root is always vertex 0.
pub type VertexId = u32;

const NO_PARENT: u32 = u32::MAX;
const NOT_MATERIALIZED: u32 = u32::MAX;

/// Errors from tree construction, growth and parsing.
#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    /// The offspring table failed validation.
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),
    /// A vertex id outside the arena was used.
    #[error("unknown vertex id {0}")]
    UnknownVertex(VertexId),
    /// An operation needed materialized children that are not available on an
    /// explicit tree.
    #[error("vertex {0} has no recorded children and the tree has no growth law")]
    NoGrowthLaw(VertexId),
    /// The text form could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse {
        /// One-based line number (0 when no line applies).
        line: usize,
        /// Description of the problem.
        msg: String,
    },
}

/// A finite offspring distribution with no atom at zero and mean above one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    /// Sorted `(count, probability)` pairs; probabilities sum to one.
    entries: Vec<(u32, f64)>,
}

impl OffspringLaw {
    /// Builds a law from (count, weight) pairs. Weights need not be
    /// normalized. Counts must be distinct and at least 1, weights positive,
    /// and the normalized mean must exceed 1.
    pub fn from_weights(weights: &[(u32, f64)]) -> Result<Self, TreeError> {
        if weights.is_empty() {
            return Err(TreeError::InvalidLaw("empty weight table".into()));
        }
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(weights.len());
        for &(k, w) in weights {
            if k == 0 {
                return Err(TreeError::InvalidLaw(
                    "offspring count 0 has positive weight; trees must have no leaves".into(),
                ));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(TreeError::InvalidLaw(format!("weight for count {k} is {w}")));
            }
            if entries.iter().any(|&(k2, _)| k2 == k) {
                return Err(TreeError::InvalidLaw(format!("duplicate count {k}")));
            }
            entries.push((k, w));
        }
        entries.sort_by_key(|&(k, _)| k);
        let total: f64 = entries.iter().map(|&(_, w)| w).sum();
        for e in &mut entries {
            e.1 /= total;
        }
        let law = OffspringLaw { entries };
        if law.mean() <= 1.0 {
            return Err(TreeError::InvalidLaw(format!(
                "mean offspring {} is not above 1",
                law.mean()
            )));
        }
        Ok(law)
    }

    /// Deterministic law: every vertex has exactly `k` children (`k >= 2`).
    pub fn dirac(k: u32) -> Result<Self, TreeError> {
        Self::from_weights(&[(k, 1.0)])
    }

    /// The law of the `d`-regular rooted tree: every vertex has `d - 1`
    /// children, so every non-root vertex has graph degree `d`.
    pub fn regular(d: u32) -> Result<Self, TreeError> {
        if d < 3 {
            return Err(TreeError::InvalidLaw(format!(
                "regular tree needs degree >= 3, got {d}"
            )));
        }
        Self::dirac(d - 1)
    }

    /// `(count, probability)` pairs, sorted by count.
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Mean offspring count.
    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(k, p)| k as f64 * p).sum()
    }

    /// Smallest count with positive probability.
    pub fn d_min(&self) -> u32 {
        self.entries[0].0
    }

    /// Largest count with positive probability.
    pub fn max_count(&self) -> u32 {
        self.entries[self.entries.len() - 1].0
    }

    /// Probability of exactly one child.
    pub fn p1(&self) -> f64 {
        self.entries
            .iter()
            .find(|&&(k, _)| k == 1)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Mean offspring count conditioned on having at least two children.
    ///
    /// Well defined for every valid law: mean > 1 forces positive mass on
    /// counts >= 2.
    pub fn conditioned_mean(&self) -> f64 {
        let mass: f64 = self
            .entries
            .iter()
            .filter(|&&(k, _)| k >= 2)
            .map(|&(_, p)| p)
            .sum();
        let s: f64 = self
            .entries
            .iter()
            .filter(|&&(k, _)| k >= 2)
            .map(|&(k, p)| k as f64 * p)
            .sum();
        s / mass
    }

    /// Inverse-CDF sample for a uniform `u` in (0, 1).
    pub fn sample(&self, u: f64) -> u32 {
        let mut acc = 0.0;
        for &(k, p) in &self.entries {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.entries[self.entries.len() - 1].0
    }
}

#[derive(Debug, Clone, Copy)]
struct Vertex {
    parent: u32,
    generation: u32,
    first_child: u32,
    child_count: u32,
    path_hash: u64,
}

#[derive(Debug, Clone)]
enum Growth {
    /// Children are drawn from the law, keyed by the vertex path hash.
    Law { law: OffspringLaw, seed: u64 },
    /// Structure is fixed; vertices without children are leaves.
    Explicit,
}

/// A rooted tree stored as an arena. Vertex 0 is the root; children of a
/// vertex occupy a contiguous id range in left-to-right order.
#[derive(Debug, Clone)]
pub struct Tree {
    vertices: Vec<Vertex>,
    growth: Growth,
}

impl Tree {
    /// A lazily grown tree: only the root is materialized.
    pub fn new_lazy(law: OffspringLaw, seed: u64) -> Tree {
        let root_hash = splitmix64(seed ^ 0x7472_6565_726f_6f74);
        Tree {
            vertices: vec![Vertex {
                parent: NO_PARENT,
                generation: 0,
                first_child: 0,
                child_count: NOT_MATERIALIZED,
                path_hash: root_hash,
            }],
            growth: Growth::Law { law, seed },
        }
    }

    /// Samples a tree and materializes every vertex up to `depth`
    /// generations. Vertices at generation `depth` are present but their
    /// children are not.
    pub fn sample(law: OffspringLaw, depth: u32, seed: u64) -> Tree {
        let mut t = Tree::new_lazy(law, seed);
        t.materialize_to(depth);
        t
    }

    /// Materializes all vertices with generation <= `depth`.
    pub fn materialize_to(&mut self, depth: u32) {
        let mut i = 0u32;
        while (i as usize) < self.vertices.len() {
            if self.vertices[i as usize].generation < depth {
                let _ = self.ensure_children(i);
            }
            i += 1;
        }
    }

    /// Builds an explicit tree from per-vertex parents. `parents[0]` must be
    /// `None` and every other parent must precede its child.
    pub fn from_parents(parents: &[Option<VertexId>]) -> Result<Tree, TreeError> {
        let mut vertices: Vec<Vertex> = Vec::with_capacity(parents.len());
        let mut children: Vec<Vec<u32>> = vec![Vec::new(); parents.len()];
        for (i, &p) in parents.iter().enumerate() {
            match p {
                None => {
                    if i != 0 {
                        return Err(TreeError::Parse {
                            line: i,
                            msg: "only vertex 0 may lack a parent".into(),
                        });
                    }
                    vertices.push(Vertex {
                        parent: NO_PARENT,
                        generation: 0,
                        first_child: 0,
                        child_count: 0,
                        path_hash: 0,
                    });
                }
                Some(p) => {
                    if p as usize >= i {
                        return Err(TreeError::Parse {
                            line: i,
                            msg: format!("parent {p} does not precede vertex {i}"),
                        });
                    }
                    let gen = vertices[p as usize].generation + 1;
                    children[p as usize].push(i as u32);
                    vertices.push(Vertex {
                        parent: p,
                        generation: gen,
                        first_child: 0,
                        child_count: 0,
                        path_hash: 0,
                    });
                }
            }
        }
        // The arena wants contiguous child blocks, so re-lay the tree in BFS
        // order. Children keep their left-to-right order.
        let mut order: Vec<u32> = Vec::with_capacity(vertices.len());
        let mut new_id = vec![0u32; vertices.len()];
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &c in &children[v as usize] {
                order.push(c);
            }
        }
        if order.len() != vertices.len() {
            return Err(TreeError::Parse {
                line: 0,
                msg: "tree is not connected".into(),
            });
        }
        for (new, &old) in order.iter().enumerate() {
            new_id[old as usize] = new as u32;
        }
        let mut out: Vec<Vertex> = Vec::with_capacity(vertices.len());
        for &old in &order {
            let v = vertices[old as usize];
            let kids = &children[old as usize];
            out.push(Vertex {
                parent: if v.parent == NO_PARENT {
                    NO_PARENT
                } else {
                    new_id[v.parent as usize]
                },
                generation: v.generation,
                first_child: kids.first().map_or(0, |&c| new_id[c as usize]),
                child_count: kids.len() as u32,
                path_hash: 0,
            });
        }
        Ok(Tree {
            vertices: out,
            growth: Growth::Explicit,
        })
    }

    /// Number of materialized vertices.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    /// True when only the root exists.
    pub fn is_empty(&self) -> bool {
        self.vertices.len() <= 1
    }

    /// The growth law, if the tree grows on demand.
    pub fn law(&self) -> Option<&OffspringLaw> {
        match &self.growth {
            Growth::Law { law, .. } => Some(law),
            Growth::Explicit => None,
        }
    }

    /// Parent of `v`, `None` for the root.
    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        let p = self.vertices[v as usize].parent;
        (p != NO_PARENT).then_some(p)
    }

    /// Distance from the root.
    pub fn generation(&self, v: VertexId) -> u32 {
        self.vertices[v as usize].generation
    }

    /// Materialized children of `v`, if any have been materialized.
    pub fn children(&self, v: VertexId) -> Option<std::ops::Range<u32>> {
        let vx = &self.vertices[v as usize];
        (vx.child_count != NOT_MATERIALIZED)
            .then(|| vx.first_child..vx.first_child + vx.child_count)
    }

    /// Number of children of `v`, materializing them if needed.
    pub fn degree_below(&mut self, v: VertexId) -> Result<u32, TreeError> {
        Ok(self.ensure_children(v)?.len() as u32)
    }

    /// Children of `v`, materializing them on first access.
    ///
    /// For lazily grown trees the offspring count is
    /// `law.sample(uniform(splitmix64(path_hash ^ tag)))`, and a child's path
    /// hash chains the parent hash with the child index, so the realized tree
    /// depends only on the seed and not on the exploration order.
    pub fn ensure_children(&mut self, v: VertexId) -> Result<std::ops::Range<u32>, TreeError> {
        if v as usize >= self.vertices.len() {
            return Err(TreeError::UnknownVertex(v));
        }
        if let Some(r) = self.children(v) {
            return Ok(r);
        }
        let (law, _) = match &self.growth {
            Growth::Law { law, seed } => (law.clone(), *seed),
            Growth::Explicit => return Err(TreeError::NoGrowthLaw(v)),
        };
        let vx = self.vertices[v as usize];
        let u = u64_to_open01(splitmix64(vx.path_hash ^ 0x6368_696c_6463_6e74));
        let count = law.sample(u);
        let first = self.vertices.len() as u32;
        for k in 0..count {
            let child_hash = splitmix64(vx.path_hash ^ splitmix64(0x6b69_6400 + k as u64 + 1));
            self.vertices.push(Vertex {
                parent: v,
                generation: vx.generation + 1,
                first_child: 0,
                child_count: NOT_MATERIALIZED,
                path_hash: child_hash,
            });
        }
        let vx = &mut self.vertices[v as usize];
        vx.first_child = first;
        vx.child_count = count;
        Ok(first..first + count)
    }

    /// All materialized vertices at the given generation, in id order.
    pub fn generation_vertices(&self, g: u32) -> Vec<VertexId> {
        (0..self.vertices.len() as u32)
            .filter(|&v| self.vertices[v as usize].generation == g)
            .collect()
    }

    /// Vertices on the root path `[root, v]`, root first.
    pub fn path_from_root(&self, v: VertexId) -> Vec<VertexId> {
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Graph degree of `v` among materialized vertices: child count plus one
    /// for the parent edge. The root has no parent edge, so its degree is its
    /// child count.
    pub fn degree(&self, v: VertexId) -> Option<u32> {
        let vx = &self.vertices[v as usize];
        if vx.child_count == NOT_MATERIALIZED {
            return None;
        }
        Some(vx.child_count + u32::from(vx.parent != NO_PARENT))
    }

    /// Number of branch points strictly before `x` on the root path: vertices
    /// `z` in `[root, x)` with graph degree at least 3.
    pub fn branching_count(&self, x: VertexId) -> Result<u32, TreeError> {
        if x as usize >= self.vertices.len() {
            return Err(TreeError::UnknownVertex(x));
        }
        let mut count = 0;
        let mut cur = x;
        while let Some(p) = self.parent(cur) {
            match self.degree(p) {
                Some(d) if d >= 3 => count += 1,
                Some(_) => {}
                // Ancestors of a materialized vertex always have materialized
                // children.
                None => unreachable!("ancestor without materialized children"),
            }
            cur = p;
        }
        Ok(count)
    }

    /// Serializes the materialized tree. One line per vertex:
    /// `id parent_id generation child_count`, with `-` as the root's parent.
    /// `child_count` counts the children present in the file, so frontier
    /// vertices of a lazily grown tree serialize as leaves.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            let count = if v.child_count == NOT_MATERIALIZED {
                0
            } else {
                v.child_count
            };
            if v.parent == NO_PARENT {
                let _ = writeln!(out, "{i} - {} {}", v.generation, count);
            } else {
                let _ = writeln!(out, "{i} {} {} {}", v.parent, v.generation, count);
            }
        }
        out
    }

    /// Parses the text form produced by [`Tree::to_text`]. Ids must be dense
    /// and in order, and the recorded generations and child counts must match
    /// the structure.
    pub fn from_text(text: &str) -> Result<Tree, TreeError> {
        let mut parents: Vec<Option<VertexId>> = Vec::new();
        let mut declared: Vec<(u32, u32)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(TreeError::Parse {
                    line: lineno + 1,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let id: u32 = fields[0].parse().map_err(|_| TreeError::Parse {
                line: lineno + 1,
                msg: format!("bad id {:?}", fields[0]),
            })?;
            if id as usize != parents.len() {
                return Err(TreeError::Parse {
                    line: lineno + 1,
                    msg: format!("ids must be dense and ordered; expected {}", parents.len()),
                });
            }
            let parent = if fields[1] == "-" {
                None
            } else {
                Some(fields[1].parse::<u32>().map_err(|_| TreeError::Parse {
                    line: lineno + 1,
                    msg: format!("bad parent {:?}", fields[1]),
                })?)
            };
            let gen: u32 = fields[2].parse().map_err(|_| TreeError::Parse {
                line: lineno + 1,
                msg: format!("bad generation {:?}", fields[2]),
            })?;
            let count: u32 = fields[3].parse().map_err(|_| TreeError::Parse {
                line: lineno + 1,
                msg: format!("bad child count {:?}", fields[3]),
            })?;
            parents.push(parent);
            declared.push((gen, count));
        }
        let tree = Tree::from_parents(&parents)?;
        // from_parents relabels in BFS order; to_text emits in arena order,
        // so a file that round-trips keeps its ids. Validate declarations
        // against the original labels.
        for (id, &(gen, count)) in declared.iter().enumerate() {
            let actual_gen = match parents[id] {
                None => 0,
                Some(_) => declared[parents[id].unwrap() as usize].0 + 1,
            };
            if gen != actual_gen {
                return Err(TreeError::Parse {
                    line: id + 1,
                    msg: format!("vertex {id}: generation {gen} but structure says {actual_gen}"),
                });
            }
            let actual_count = parents.iter().filter(|&&p| p == Some(id as u32)).count() as u32;
            if count != actual_count {
                return Err(TreeError::Parse {
                    line: id + 1,
                    msg: format!(
                        "vertex {id}: child count {count} but {actual_count} children listed"
                    ),
                });
            }
        }
        Ok(tree)
    }
}

/// Result of collapsing degree-2 chains: the core tree plus bookkeeping that
/// ties core vertices back to the original arena.
#[derive(Debug, Clone)]
pub struct CoreTree {
    /// The collapsed tree (explicit).
    pub tree: Tree,
    /// For each core vertex, its id in the original tree.
    pub original_ids: Vec<VertexId>,
    /// For each core vertex, the number of single-child vertices collapsed
    /// into the edge above it. For the core root this counts the chain from
    /// the original root down to the first branch point.
    pub chain_above: Vec<u32>,
}

/// Collapses all maximal single-child chains within the first `depth`
/// generations.
///
/// The core root is the first vertex with at least two children on the way
/// down from the original root. Retained vertices are the core root, every
/// branch point, every leaf of the explicit input, and every chain endpoint
/// cut off at generation `depth`.
pub fn core(tree: &mut Tree, depth: u32) -> Result<CoreTree, TreeError> {
    // Walk down from the original root through single-child vertices.
    let mut root = 0u32;
    let mut chain_root = 0u32;
    while tree.generation(root) < depth {
        let kids = tree.ensure_children(root)?;
        if kids.len() == 1 {
            root = kids.start;
            chain_root += 1;
        } else {
            break;
        }
    }
    let mut parents: Vec<Option<u32>> = vec![None];
    let mut original_ids = vec![root];
    let mut chain_above = vec![chain_root];
    // Queue of (core id, original id) still to expand.
    let mut queue = vec![(0u32, root)];
    while let Some((core_id, orig)) = queue.pop() {
        if tree.generation(orig) >= depth {
            continue;
        }
        let kids: Vec<u32> = tree.ensure_children(orig)?.collect();
        for child in kids {
            let mut cur = child;
            let mut skipped = 0u32;
            while tree.generation(cur) < depth {
                let down = tree.ensure_children(cur)?;
                if down.len() == 1 {
                    cur = down.start;
                    skipped += 1;
                } else {
                    break;
                }
            }
            let id = parents.len() as u32;
            parents.push(Some(core_id));
            original_ids.push(cur);
            chain_above.push(skipped);
            queue.push((id, cur));
        }
    }
    // from_parents relabels in BFS order; parents were already produced
    // parent-before-child, but the side tables must be permuted the same way.
    let core_tree = Tree::from_parents(&parents)?;
    // Recompute the permutation the constructor applied.
    let mut children: Vec<Vec<u32>> = vec![Vec::new(); parents.len()];
    for (i, &p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[p as usize].push(i as u32);
        }
    }
    let mut order = vec![0u32];
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        order.extend_from_slice(&children[v as usize]);
    }
    let original_ids = order.iter().map(|&o| original_ids[o as usize]).collect();
    let chain_above = order.iter().map(|&o| chain_above[o as usize]).collect();
    Ok(CoreTree {
        tree: core_tree,
        original_ids,
        chain_above,
    })
}

/// Summary statistics of the materialized part of a tree.
#[derive(Debug, Clone, Serialize)]
pub struct TreeStats {
    /// Number of vertices per generation, up to the requested depth.
    pub generation_sizes: Vec<u64>,
    /// Histogram of offspring counts over vertices with materialized
    /// children at generations strictly below the requested depth.
    pub offspring_histogram: BTreeMap<u32, u64>,
    /// Mean of the histogram.
    pub empirical_mean: f64,
    /// Total number of materialized vertices counted.
    pub vertex_count: u64,
}

/// Computes [`TreeStats`] over generations `0..=depth`.
pub fn tree_stats(tree: &Tree, depth: u32) -> TreeStats {
    let mut generation_sizes = vec![0u64; depth as usize + 1];
    let mut offspring_histogram = BTreeMap::new();
    let mut vertex_count = 0u64;
    for v in 0..tree.len() as u32 {
        let g = tree.generation(v);
        if g > depth {
            continue;
        }
        generation_sizes[g as usize] += 1;
        vertex_count += 1;
        if g < depth {
            if let Some(kids) = tree.children(v) {
                *offspring_histogram.entry(kids.len() as u32).or_insert(0) += 1;
            }
        }
    }
    let (mut n, mut s) = (0u64, 0.0);
    for (&k, &c) in &offspring_histogram {
        n += c;
        s += k as f64 * c as f64;
    }
    TreeStats {
        generation_sizes,
        offspring_histogram,
        empirical_mean: if n > 0 { s / n as f64 } else { 0.0 },
        vertex_count,
    }
}
