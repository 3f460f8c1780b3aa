//! Last passage percolation over a triangular random environment.
//!
//! The environment matches the slowed exclusion dynamics: cell `(i, j)`
//! holds the wait of particle `j` before its jump to generation `i - j`,
//! so the diagonal carries reservoir-scaled draws, cells below the
//! diagonal carry draws scaled by the worst edge rate of the generation,
//! and cells above the diagonal weigh zero. Passage times are computed by
//! exact dynamic programming, optionally restricted to the band of paths
//! that never fall more than `m` columns past the diagonal, and the
//! module closes with a Monte Carlo check of the passage-time tail bound.

use serde::Serialize;
use thiserror::Error;

use crate::rate_field::{RateError, RateFamily};
use crate::rng::{exp_from_keys, replica_seed};

/// Largest number of cells a dense environment may hold.
const MAX_CELLS: u64 = 1 << 24;

/// Errors from environment construction and passage-time evaluation.
#[derive(Debug, Error)]
pub enum LppError {
    /// Parameters violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The queried target lies outside the restricted path region.
    #[error("target ({i}, {j}) lies outside the band of width {m}")]
    OutsideRegion {
        /// Column index of the target.
        i: u64,
        /// Row index of the target.
        j: u64,
        /// Band width of the region.
        m: u64,
    },
    /// Underlying rate evaluation failed.
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Scaling data recorded when an environment is built from a rate family.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    /// Reservoir rate scaling the diagonal.
    pub lambda: f64,
    /// Worst edge rate per generation; entry `k` scales cells with
    /// `i - j - 1 = k`.
    pub r_min: Vec<f64>,
}

/// A rectangular field of non-negative weights, indexed 1-based as
/// `(i, j)` with `i` the column and `j` the row; `(1, 1)` is the corner
/// every path starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct LppEnvironment {
    cols: u64,
    rows: u64,
    /// Row-major weights: cell `(i, j)` sits at `(j - 1) * cols + (i - 1)`.
    weights: Vec<f64>,
    /// Present when the weights follow the three-case scaling rule.
    pub generator: Option<GeneratorSpec>,
}

impl LppEnvironment {
    /// Number of columns (largest first index).
    pub fn cols(&self) -> u64 {
        self.cols
    }

    /// Number of rows (largest second index).
    pub fn rows(&self) -> u64 {
        self.rows
    }

    /// Builds an environment from explicit rows of weights; `rows[j - 1]`
    /// holds the weights of row `j`, column by column.
    pub fn from_weights(rows: Vec<Vec<f64>>) -> Result<Self, LppError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(LppError::InvalidInput(
                "the environment needs at least one cell".into(),
            ));
        }
        let cols = rows[0].len();
        let mut weights = Vec::with_capacity(rows.len() * cols);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(LppError::InvalidInput(format!(
                    "row {} has {} columns, expected {}",
                    j + 1,
                    row.len(),
                    cols
                )));
            }
            for (i, &w) in row.iter().enumerate() {
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(LppError::InvalidInput(format!(
                        "weight at ({}, {}) must be non-negative and finite, got {w}",
                        i + 1,
                        j + 1
                    )));
                }
                weights.push(w);
            }
        }
        Ok(LppEnvironment {
            cols: cols as u64,
            rows: rows.len() as u64,
            weights,
            generator: None,
        })
    }

    fn index(&self, i: u64, j: u64) -> usize {
        assert!(
            1 <= i && i <= self.cols && 1 <= j && j <= self.rows,
            "cell ({i}, {j}) outside a {} x {} environment",
            self.cols,
            self.rows
        );
        ((j - 1) * self.cols + (i - 1)) as usize
    }

    /// Weight of cell `(i, j)`, 1-based.
    ///
    /// Panics when the cell lies outside the grid.
    pub fn weight(&self, i: u64, j: u64) -> f64 {
        self.weights[self.index(i, j)]
    }

    /// Overwrites one weight, keeping the grid admissible.
    ///
    /// Clears the recorded generator spec, since the weights no longer
    /// follow it. Panics when the cell lies outside the grid.
    pub fn set_weight(&mut self, i: u64, j: u64, w: f64) -> Result<(), LppError> {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(LppError::InvalidInput(format!(
                "weight must be non-negative and finite, got {w}"
            )));
        }
        let idx = self.index(i, j);
        self.weights[idx] = w;
        self.generator = None;
        Ok(())
    }

    /// Serializes the weights as a CSV matrix, row 1 first, columns in
    /// order within each line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.rows {
            let mut line = String::new();
            for i in 1..=self.cols {
                if i > 1 {
                    line.push(',');
                }
                line.push_str(&format!("{}", self.weight(i, j)));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Parses the CSV matrix format written by [`Self::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, LppError> {
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in trimmed.split(',') {
                let w: f64 = field.trim().parse().map_err(|_| {
                    LppError::InvalidInput(format!(
                        "line {}: cannot parse weight {field:?}",
                        idx + 1
                    ))
                })?;
                row.push(w);
            }
            rows.push(row);
        }
        Self::from_weights(rows)
    }
}

/// The band of admissible paths: cells `(i, j)` with `i - j <= m`.
///
/// Cells above the diagonal always belong to the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathRegion {
    /// Largest admissible distance below the diagonal.
    pub m: u64,
}

impl PathRegion {
    /// Whether cell `(i, j)` belongs to the region.
    pub fn contains(&self, i: u64, j: u64) -> bool {
        i <= j.saturating_add(self.m)
    }
}

/// Builds the environment coupling `n` particles to targets up to `m`
/// generations past the diagonal: `n` rows and `n + m` columns.
///
/// Cell `(i, j)` weighs zero above the diagonal, a rate-`lambda`
/// exponential on it, and an exponential at the worst edge rate of
/// generation `i - j - 1` below it. Draws are keyed by `(seed, i, j)`, so
/// equal seeds reproduce single cells independently of the dimensions.
pub fn build_env(
    n: u64,
    m: u64,
    lambda: f64,
    family: &RateFamily,
    seed: u64,
) -> Result<LppEnvironment, LppError> {
    if n == 0 {
        return Err(LppError::InvalidInput("at least one row is required".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(LppError::InvalidInput(format!(
            "the reservoir rate must be positive and finite, got {lambda}"
        )));
    }
    family.validate()?;
    let cols = n
        .checked_add(m)
        .filter(|c| c.checked_mul(n).is_some_and(|cells| cells <= MAX_CELLS))
        .ok_or_else(|| {
            LppError::InvalidInput(format!(
                "a {} x {n} environment exceeds the {MAX_CELLS}-cell cap",
                n.saturating_add(m)
            ))
        })?;
    let mut r_min = Vec::with_capacity(cols as usize - 1);
    for k in 0..cols.saturating_sub(1) {
        r_min.push(family.edge_rate_at(k)?);
    }
    let mut weights = Vec::with_capacity((cols * n) as usize);
    for j in 1..=n {
        for i in 1..=cols {
            let w = if j > i {
                0.0
            } else {
                let omega = exp_from_keys(seed, i, j, 0);
                if j == i {
                    omega / lambda
                } else {
                    omega / r_min[(i - j - 1) as usize]
                }
            };
            weights.push(w);
        }
    }
    Ok(LppEnvironment {
        cols,
        rows: n,
        weights,
        generator: Some(GeneratorSpec { lambda, r_min }),
    })
}

fn check_target(env: &LppEnvironment, i: u64, j: u64) -> Result<(), LppError> {
    if i == 0 || j == 0 || i > env.cols || j > env.rows {
        return Err(LppError::InvalidInput(format!(
            "target ({i}, {j}) outside the {} x {} grid",
            env.cols, env.rows
        )));
    }
    Ok(())
}

/// Rolling-row dynamic program for the best up-right path weight from
/// `(1, 1)` to `(ti, tj)`, with cells outside the band skipped entirely
/// when a band is given.
fn dp_value(env: &LppEnvironment, ti: u64, tj: u64, band: Option<u64>) -> f64 {
    let row_max = |j: u64| band.map_or(ti, |m| ti.min(j.saturating_add(m)));
    let mut prev: Vec<f64> = vec![0.0; ti as usize + 1];
    let mut cur: Vec<f64> = vec![0.0; ti as usize + 1];
    for j in 1..=tj {
        let imax = row_max(j);
        let prev_imax = row_max(j - 1);
        for i in 1..=imax {
            let w = env.weight(i, j);
            let left = (i >= 2).then(|| cur[i as usize - 1]);
            let down = (j >= 2 && i <= prev_imax).then(|| prev[i as usize]);
            let best = match (left, down) {
                (Some(a), Some(b)) => a.max(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            };
            cur[i as usize] = best + w;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[ti as usize]
}

/// Best total weight over up-right paths from `(1, 1)` to `(i, j)`.
pub fn passage_time(env: &LppEnvironment, i: u64, j: u64) -> Result<f64, LppError> {
    check_target(env, i, j)?;
    Ok(dp_value(env, i, j, None))
}

/// Best total weight over up-right paths from `(1, 1)` to `(i, j)` that
/// stay inside `region`.
pub fn passage_time_restricted(
    env: &LppEnvironment,
    i: u64,
    j: u64,
    region: PathRegion,
) -> Result<f64, LppError> {
    check_target(env, i, j)?;
    if !region.contains(i, j) {
        return Err(LppError::OutsideRegion { i, j, m: region.m });
    }
    Ok(dp_value(env, i, j, Some(region.m)))
}

/// One optimal restricted path from `(1, 1)` to `(i, j)`, as the full cell
/// sequence.
///
/// Ties between predecessors prefer the cell below, which keeps optimal
/// paths on built environments from drifting into the zero region. The
/// summed weights along the returned path equal the restricted passage
/// time exactly.
pub fn optimal_path_restricted(
    env: &LppEnvironment,
    i: u64,
    j: u64,
    region: PathRegion,
) -> Result<Vec<(u64, u64)>, LppError> {
    check_target(env, i, j)?;
    if !region.contains(i, j) {
        return Err(LppError::OutsideRegion { i, j, m: region.m });
    }
    let ti = i as usize;
    let tj = j as usize;
    // Direction per cell: 0 none (start), 1 from the left, 2 from below.
    let mut dir = vec![0u8; ti * tj];
    let mut value = vec![0.0f64; ti * tj];
    let at = |a: usize, b: usize| (b - 1) * ti + (a - 1);
    for b in 1..=tj {
        let imax = (i).min(b as u64 + region.m) as usize;
        let prev_imax = (i).min(b as u64 - 1 + region.m) as usize;
        for a in 1..=imax {
            let w = env.weight(a as u64, b as u64);
            let left = (a >= 2).then(|| value[at(a - 1, b)]);
            let down = (b >= 2 && a <= prev_imax).then(|| value[at(a, b - 1)]);
            let (best, d) = match (left, down) {
                (Some(l), Some(u)) => {
                    if u >= l {
                        (u, 2)
                    } else {
                        (l, 1)
                    }
                }
                (Some(l), None) => (l, 1),
                (None, Some(u)) => (u, 2),
                (None, None) => (0.0, 0),
            };
            value[at(a, b)] = best + w;
            dir[at(a, b)] = d;
        }
    }
    let mut path = Vec::new();
    let (mut a, mut b) = (ti, tj);
    loop {
        path.push((a as u64, b as u64));
        match dir[at(a, b)] {
            1 => a -= 1,
            2 => b -= 1,
            _ => break,
        }
    }
    path.reverse();
    Ok(path)
}

/// Outcome of the passage-time tail check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailCheck {
    /// The tested threshold `4 (1 + alpha) (min rate)^{-1} (n + m_n)`.
    pub threshold: f64,
    /// Fraction of sampled restricted passage times above the threshold.
    pub exceedance: f64,
    /// Number of Monte Carlo samples.
    pub samples: u64,
}

/// Estimates how often the restricted passage time to `(n + ceil(m_n), n)`
/// exceeds `4 (1 + alpha) (min rate)^{-1} (n + m_n)`, where the minimum is
/// over the worst edge rates of generations up to `m_n`.
///
/// The exceedance decays exponentially in `n`, so desk-scale runs gate it
/// at a few percent.
pub fn tail_check(
    family: &RateFamily,
    n: u64,
    m_n: f64,
    alpha: f64,
    samples: u64,
    lambda: f64,
    seed: u64,
) -> Result<TailCheck, LppError> {
    if n == 0 || samples == 0 {
        return Err(LppError::InvalidInput(
            "need at least one particle and one sample".into(),
        ));
    }
    if !(m_n >= 0.0) || !m_n.is_finite() {
        return Err(LppError::InvalidInput(format!(
            "the separation depth must be non-negative and finite, got {m_n}"
        )));
    }
    if !(alpha > 0.0) {
        return Err(LppError::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    family.validate()?;
    let band = m_n.ceil() as u64;
    let mut rate_floor = f64::INFINITY;
    for l in 0..=(m_n.floor() as u64) {
        rate_floor = rate_floor.min(family.edge_rate_at(l)?);
    }
    let threshold = 4.0 * (1.0 + alpha) * (n as f64 + m_n) / rate_floor;
    let region = PathRegion { m: band };
    let mut above = 0u64;
    for s in 0..samples {
        let env = build_env(n, band, lambda, family, replica_seed(seed, s))?;
        let g = passage_time_restricted(&env, n + band, n, region)?;
        if g > threshold {
            above += 1;
        }
    }
    Ok(TailCheck {
        threshold,
        exceedance: above as f64 / samples as f64,
        samples,
    })
}

/// Passage times to every admissible cell as CSV rows `i,j,value`, using
/// the band when one is given.
pub fn passage_table_csv(env: &LppEnvironment, band: Option<PathRegion>) -> String {
    let mut out = String::from("i,j,value\n");
    for j in 1..=env.rows {
        for i in 1..=env.cols {
            if let Some(region) = band {
                if !region.contains(i, j) {
                    continue;
                }
            }
            let value = dp_value(env, i, j, band.map(|r| r.m));
            out.push_str(&format!("{i},{j},{value}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::slowed_passage_times;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp3() -> RateFamily {
        RateFamily::ExponentialHomogeneous { d: 3 }
    }

    fn random_env(cols: u64, rows: u64, rng: &mut ChaCha8Rng) -> LppEnvironment {
        let rows_vec: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect())
            .collect();
        LppEnvironment::from_weights(rows_vec).unwrap()
    }

    /// All up-right cell sequences from (1, 1) to the target.
    fn all_paths(ti: u64, tj: u64) -> Vec<Vec<(u64, u64)>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(
            i: u64,
            j: u64,
            ti: u64,
            tj: u64,
            cur: &mut Vec<(u64, u64)>,
            out: &mut Vec<Vec<(u64, u64)>>,
        ) {
            cur.push((i, j));
            if i == ti && j == tj {
                out.push(cur.clone());
            } else {
                if i < ti {
                    rec(i + 1, j, ti, tj, cur, out);
                }
                if j < tj {
                    rec(i, j + 1, ti, tj, cur, out);
                }
            }
            cur.pop();
        }
        rec(1, 1, ti, tj, &mut cur, &mut out);
        out
    }

    fn path_value(env: &LppEnvironment, path: &[(u64, u64)]) -> f64 {
        path.iter().fold(0.0, |acc, &(i, j)| acc + env.weight(i, j))
    }

    #[test]
    fn built_environments_follow_the_three_case_rule() {
        let lambda = 0.7;
        let env = build_env(4, 3, lambda, &exp3(), 21).unwrap();
        assert_eq!(env.cols(), 7);
        assert_eq!(env.rows(), 4);
        for j in 1..=4u64 {
            for i in 1..=7u64 {
                if j > i {
                    assert_eq!(env.weight(i, j), 0.0);
                }
            }
        }
        for k in 1..=4u64 {
            assert_eq!(env.weight(k, k), exp_from_keys(21, k, k, 0) / lambda);
        }
        // One generation below the diagonal the scale is the reciprocal
        // edge rate (d - 1)^2 = 4.
        assert_eq!(env.weight(3, 1), exp_from_keys(21, 3, 1, 0) / 0.25);
        let spec = env.generator.as_ref().unwrap();
        assert_eq!(spec.lambda, lambda);
        assert_eq!(spec.r_min[1], 0.25);
    }

    #[test]
    fn diagonal_cells_average_the_reservoir_scale() {
        let lambda = 2.0;
        let n = 100_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for s in 0..n {
            let env = build_env(1, 0, lambda, &exp3(), replica_seed(77, s)).unwrap();
            let w = env.weight(1, 1);
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let sd = (sumsq / n as f64 - mean * mean).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!(
            (mean - 1.0 / lambda).abs() < 3.0 * se,
            "mean {mean} vs {}",
            1.0 / lambda
        );
    }

    #[test]
    fn dp_matches_exhaustive_paths_on_small_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let env = random_env(4, 4, &mut rng);
            let paths = all_paths(4, 4);
            assert_eq!(paths.len(), 20);
            let best = paths
                .iter()
                .map(|p| path_value(&env, p))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(passage_time(&env, 4, 4).unwrap(), best);
            assert_eq!(passage_time(&env, 1, 1).unwrap(), env.weight(1, 1));
            let mut row_sum = 0.0;
            for i in 1..=4u64 {
                row_sum += env.weight(i, 1);
                assert_eq!(passage_time(&env, i, 1).unwrap(), row_sum);
            }
            let mut col_sum = 0.0;
            for j in 1..=4u64 {
                col_sum += env.weight(1, j);
                assert_eq!(passage_time(&env, 1, j).unwrap(), col_sum);
            }
        }
    }

    #[test]
    fn restriction_is_inactive_when_the_band_covers_the_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let env = random_env(6, 5, &mut rng);
        let region = PathRegion { m: 6 };
        for j in 1..=5u64 {
            for i in 1..=6u64 {
                assert_eq!(
                    passage_time_restricted(&env, i, j, region).unwrap(),
                    passage_time(&env, i, j).unwrap()
                );
            }
        }
    }

    #[test]
    fn zero_band_forces_the_diagonal_staircase() {
        let env = build_env(4, 0, 1.5, &exp3(), 8).unwrap();
        let region = PathRegion { m: 0 };
        let mut diag = 0.0;
        for k in 1..=4u64 {
            diag += env.weight(k, k);
            assert_eq!(passage_time_restricted(&env, k, k, region).unwrap(), diag);
        }
        // Exhaustive check over the region's paths: the maximum collects
        // every diagonal cell and nothing else has weight.
        let best = all_paths(4, 4)
            .iter()
            .filter(|p| p.iter().all(|&(i, j)| region.contains(i, j)))
            .map(|p| path_value(&env, p))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(passage_time_restricted(&env, 4, 4, region).unwrap(), best);
        assert!(matches!(
            passage_time_restricted(&env, 2, 1, region),
            Err(LppError::OutsideRegion { .. })
        ));
    }

    #[test]
    fn banded_paths_never_need_the_zero_region_on_built_environments() {
        // On built environments the optimum over band paths equals the
        // optimum over paths that also stay on or below the diagonal, so
        // walking into the zero cells never pays.
        let region = PathRegion { m: 3 };
        for seed in 0..10u64 {
            let env = build_env(5, 3, 0.7, &exp3(), seed).unwrap();
            for extra in 0..=3u64 {
                let target = (5 + extra, 5);
                let paths = all_paths(target.0, target.1);
                let banded = paths
                    .iter()
                    .filter(|p| p.iter().all(|&(i, j)| region.contains(i, j)))
                    .map(|p| path_value(&env, p))
                    .fold(f64::NEG_INFINITY, f64::max);
                let below_diag = paths
                    .iter()
                    .filter(|p| {
                        p.iter()
                            .all(|&(i, j)| region.contains(i, j) && j <= i)
                    })
                    .map(|p| path_value(&env, p))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(banded, below_diag, "seed {seed}, target {target:?}");
                assert_eq!(
                    passage_time_restricted(&env, target.0, target.1, region).unwrap(),
                    banded
                );
            }
        }
    }

    #[test]
    fn optimal_restricted_paths_avoid_the_zero_region() {
        let region = PathRegion { m: 4 };
        for seed in 0..20u64 {
            for family in [
                exp3(),
                RateFamily::Polynomial { p: 0.8 },
            ] {
                let env = build_env(6, 4, 1.0, &family, seed).unwrap();
                for extra in 0..=4u64 {
                    let (ti, tj) = (6 + extra, 6);
                    let path = optimal_path_restricted(&env, ti, tj, region).unwrap();
                    assert_eq!(path.first(), Some(&(1, 1)));
                    assert_eq!(path.last(), Some(&(ti, tj)));
                    for win in path.windows(2) {
                        let (a, b) = (win[0], win[1]);
                        let step_right = b.0 == a.0 + 1 && b.1 == a.1;
                        let step_up = b.1 == a.1 + 1 && b.0 == a.0;
                        assert!(step_right || step_up);
                    }
                    for &(i, j) in &path {
                        assert!(region.contains(i, j));
                        assert!(j <= i, "cell ({i}, {j}) above the diagonal");
                    }
                    assert_eq!(
                        path_value(&env, &path),
                        passage_time_restricted(&env, ti, tj, region).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn splitting_the_grid_bounds_the_full_passage_time() {
        // Pathwise superadditivity: the best path to (6, 6) is at least
        // the best path to (3, 3) continued through the shifted block
        // anchored at (4, 4).
        fn block_dp(env: &LppEnvironment, a0: u64, b0: u64, ti: u64, tj: u64) -> f64 {
            let mut best = std::collections::HashMap::new();
            for b in b0..=tj {
                for a in a0..=ti {
                    let w = env.weight(a, b);
                    let left = (a > a0).then(|| best[&(a - 1, b)]);
                    let down = (b > b0).then(|| best[&(a, b - 1)]);
                    let prev = match (left, down) {
                        (Some(l), Some(u)) => f64::max(l, u),
                        (Some(l), None) => l,
                        (None, Some(u)) => u,
                        (None, None) => 0.0,
                    };
                    best.insert((a, b), prev + w);
                }
            }
            best[&(ti, tj)]
        }
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let env = random_env(6, 6, &mut rng);
            let whole = passage_time(&env, 6, 6).unwrap();
            let first = passage_time(&env, 3, 3).unwrap();
            let block = block_dp(&env, 4, 4, 6, 6);
            assert!(whole >= first + block - 1e-12);
        }
    }

    #[test]
    fn raising_a_weight_never_lowers_passage_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..50 {
            let env = random_env(5, 5, &mut rng);
            let i = rng.gen_range(1..=5u64);
            let j = rng.gen_range(1..=5u64);
            let mut bumped = env.clone();
            bumped
                .set_weight(i, j, env.weight(i, j) + rng.gen::<f64>() + 0.1)
                .unwrap();
            let region = PathRegion { m: 2 };
            for tj in 1..=5u64 {
                for ti in 1..=5u64 {
                    assert!(
                        passage_time(&bumped, ti, tj).unwrap()
                            >= passage_time(&env, ti, tj).unwrap()
                    );
                    if region.contains(ti, tj) {
                        assert!(
                            passage_time_restricted(&bumped, ti, tj, region).unwrap()
                                >= passage_time_restricted(&env, ti, tj, region).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn slowed_dynamics_and_banded_percolation_share_every_time() {
        // The slowed completion times and the band-restricted passage
        // times are two evaluations of one recursion and must agree to
        // the last bit on shared seeds.
        let family = exp3();
        let lambda = 0.8;
        for n in 1..=6u64 {
            for m in 0..=6u64 {
                for seed in 0..50u64 {
                    let slowed =
                        slowed_passage_times(n, m, 6.0, lambda, &family, seed).unwrap();
                    let env = build_env(n, m, lambda, &family, seed).unwrap();
                    let region = PathRegion { m };
                    for b in 1..=n {
                        for g in 0..=m {
                            let via_grid =
                                passage_time_restricted(&env, b + g, b, region).unwrap();
                            let via_process = slowed.times[b as usize - 1][g as usize];
                            assert_eq!(
                                via_process.to_bits(),
                                via_grid.to_bits(),
                                "n {n} m {m} seed {seed} cell ({b}, {g})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tail_threshold_is_rarely_exceeded_at_desk_scale() {
        // Uniform rates on the 3-regular tree; the separation depth for
        // these rates at slack 0.25 is 2.25 n.
        let family = RateFamily::Constant;
        let out = tail_check(&family, 30, 67.5, 1.0, 1000, 1.0, 5150).unwrap();
        assert_eq!(out.samples, 1000);
        assert!(
            out.exceedance <= 0.05,
            "exceedance {} above the desk gate",
            out.exceedance
        );
        let sure = tail_check(&family, 30, 67.5, 1e6, 200, 1.0, 5151).unwrap();
        assert_eq!(sure.exceedance, 0.0);
    }

    #[test]
    fn single_particle_tail_holds_in_every_sample() {
        let family = RateFamily::Constant;
        let out = tail_check(&family, 1, 2.25, 1.0, 500, 1.0, 6).unwrap();
        assert_eq!(out.exceedance, 0.0);
    }

    #[test]
    fn environments_round_trip_through_csv() {
        let env = build_env(4, 2, 0.9, &exp3(), 12).unwrap();
        let text = env.to_csv();
        let back = LppEnvironment::from_csv(&text).unwrap();
        assert_eq!(back.cols(), env.cols());
        assert_eq!(back.rows(), env.rows());
        for j in 1..=env.rows() {
            for i in 1..=env.cols() {
                assert_eq!(back.weight(i, j).to_bits(), env.weight(i, j).to_bits());
            }
        }
        let table = passage_table_csv(&env, Some(PathRegion { m: 2 }));
        assert!(table.starts_with("i,j,value\n"));
        assert!(table.lines().count() > 4);
    }
}
