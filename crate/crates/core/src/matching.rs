//! Maximum-weight perfect matching on the port bipartite graph.
//!
//! The Hungarian solver keeps integer dual potentials `(w, w_tilde)` with
//! `w[i] + w_tilde[j] >= q[i][j]` everywhere and equality on the chosen matching,
//! so every result carries its own optimality certificate.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::QueueMatrix;
use crate::model::Schedule;

/// Largest switch for which all `n!` schedules are enumerated.
pub const BRUTE_FORCE_MAX_N: usize = 8;
/// `TieBreak::Auto` enumerates schedules up to this size.
pub const AUTO_EXACT_MAX_N: usize = 6;

const CERTIFICATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchingError {
    #[error("exhaustive matching limited to n <= {max}, got n = {n}")]
    SizeLimitExceeded { n: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    pub schedule: Schedule,
    pub weight: u64,
    /// Input-port duals.
    pub w: Vec<f64>,
    /// Output-port duals.
    pub w_tilde: Vec<f64>,
}

impl MatchingResult {
    /// Largest violation of `w[i] + w_tilde[j] >= q[i][j]` (0 when dual feasible).
    pub fn dual_infeasibility(&self, q: &QueueMatrix) -> f64 {
        let n = q.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max(q[(i, j)] as f64 - self.w[i] - self.w_tilde[j]);
            }
        }
        worst
    }

    /// `|sum(w) + sum(w_tilde) - weight|`.
    pub fn duality_gap(&self) -> f64 {
        (self.w.iter().sum::<f64>() + self.w_tilde.iter().sum::<f64>() - self.weight as f64).abs()
    }
}

/// Hungarian algorithm on costs `-q`. Returns the assignment and integer potentials.
fn hungarian(q: &[u64], n: usize) -> (Vec<usize>, Vec<i64>, Vec<i64>) {
    // 1-based potentials as in the classic shortest-augmenting-path formulation;
    // index 0 is a virtual column.
    let cost = |i: usize, j: usize| -(q[i * n + j] as i64);
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    // Negate potentials of the cost problem to get duals of the weight problem.
    let w = u[1..].iter().map(|x| -x).collect();
    let w_tilde = v[1..].iter().map(|x| -x).collect();
    (assignment, w, w_tilde)
}

fn solve_relabelled(q: &QueueMatrix, rows: &[usize], cols: &[usize]) -> MatchingResult {
    let n = q.n();
    let relabelled: Vec<u64> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| q[(rows[a], cols[b])])
        .collect();
    let (assign, wr, wc) = hungarian(&relabelled, n);
    let mut perm = vec![0usize; n];
    let mut w = vec![0.0; n];
    let mut w_tilde = vec![0.0; n];
    for a in 0..n {
        perm[rows[a]] = cols[assign[a]];
        w[rows[a]] = wr[a] as f64;
        w_tilde[cols[a]] = wc[a] as f64;
    }
    let schedule = Schedule::from_perm_unchecked(perm);
    MatchingResult {
        weight: schedule.weight(q),
        schedule,
        w,
        w_tilde,
    }
}

/// Maximum-weight schedule with dual certificates.
///
/// Rows and columns are relabelled by independent uniform permutations before solving,
/// which randomizes the choice among tied optima (not certified uniform).
pub fn max_weight_matching<R: Rng + ?Sized>(q: &QueueMatrix, rng: &mut R) -> MatchingResult {
    let n = q.n();
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    solve_relabelled(q, &rows, &cols)
}

/// Hungarian solution without any randomization.
pub fn max_weight_matching_deterministic(q: &QueueMatrix) -> MatchingResult {
    let ids: Vec<usize> = (0..q.n()).collect();
    solve_relabelled(q, &ids, &ids)
}

/// Exhaustive optimum over all schedules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub max_weight: u64,
    /// Every optimal schedule, in lexicographic order.
    pub argmax: Vec<Schedule>,
}

pub fn brute_force_matching(q: &QueueMatrix) -> Result<BruteForceResult, MatchingError> {
    let n = q.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(MatchingError::SizeLimitExceeded {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let mut max_weight = 0u64;
    let mut argmax = Vec::new();
    for perm in (0..n).permutations(n) {
        let weight: u64 = perm.iter().enumerate().map(|(i, &j)| q[(i, j)]).sum();
        if weight > max_weight || argmax.is_empty() {
            max_weight = weight;
            argmax.clear();
        }
        if weight == max_weight {
            argmax.push(Schedule::from_perm_unchecked(perm));
        }
    }
    Ok(BruteForceResult { max_weight, argmax })
}

/// `true` iff every matched edge is tight: `q[i][pi(i)] == w[i] + w_tilde[pi(i)]`.
pub fn check_complementary_slackness(q: &QueueMatrix, result: &MatchingResult) -> bool {
    result.schedule.perm().iter().enumerate().all(|(i, &j)| {
        (q[(i, j)] as f64 - result.w[i] - result.w_tilde[j]).abs() <= CERTIFICATE_TOLERANCE
    })
}

/// How MaxWeight resolves ties among equally heavy schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// `Uniform` for `n <= AUTO_EXACT_MAX_N`, `RandomRelabel` above.
    #[default]
    Auto,
    /// Exactly uniform over the argmax set, by enumeration (`n <= BRUTE_FORCE_MAX_N`).
    Uniform,
    /// Hungarian solve after a random relabelling of ports.
    RandomRelabel,
    /// Hungarian solve, lowest-index preference, no randomness.
    Deterministic,
}

impl TieBreak {
    pub fn resolve(self, n: usize) -> Result<Self, MatchingError> {
        match self {
            Self::Auto if n <= AUTO_EXACT_MAX_N => Ok(Self::Uniform),
            Self::Auto => Ok(Self::RandomRelabel),
            Self::Uniform if n > BRUTE_FORCE_MAX_N => Err(MatchingError::SizeLimitExceeded {
                n,
                max: BRUTE_FORCE_MAX_N,
            }),
            other => Ok(other),
        }
    }
}

/// Per-slot MaxWeight schedule selection with a private tie-break stream.
#[derive(Debug, Clone)]
pub struct MaxWeightScheduler {
    n: usize,
    mode: TieBreak,
    /// All permutations, flattened, for the enumeration path.
    table: Vec<usize>,
    rng: ChaCha8Rng,
    current: Schedule,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl MaxWeightScheduler {
    pub fn new(n: usize, tie_break: TieBreak, rng: ChaCha8Rng) -> Result<Self, MatchingError> {
        let mode = tie_break.resolve(n)?;
        let table = if mode == TieBreak::Uniform {
            (0..n).permutations(n).flatten().collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            n,
            mode,
            table,
            rng,
            current: Schedule::identity(n),
            rows: (0..n).collect(),
            cols: (0..n).collect(),
        })
    }

    pub fn mode(&self) -> TieBreak {
        self.mode
    }

    pub fn schedule(&mut self, q: &QueueMatrix) -> &Schedule {
        match self.mode {
            TieBreak::Uniform => self.enumerate(q),
            TieBreak::RandomRelabel => {
                self.rows.shuffle(&mut self.rng);
                self.cols.shuffle(&mut self.rng);
                self.current = solve_relabelled(q, &self.rows, &self.cols).schedule;
            }
            TieBreak::Deterministic | TieBreak::Auto => {
                self.current = max_weight_matching_deterministic(q).schedule;
            }
        }
        &self.current
    }

    fn enumerate(&mut self, q: &QueueMatrix) {
        let n = self.n;
        let data = q.as_slice();
        let mut best = 0u64;
        let mut best_idx = 0usize;
        let mut ties = 0u32;
        for (idx, perm) in self.table.chunks_exact(n).enumerate() {
            let mut weight = 0u64;
            for (i, &j) in perm.iter().enumerate() {
                weight += data[i * n + j];
            }
            if ties == 0 || weight > best {
                best = weight;
                best_idx = idx;
                ties = 1;
            } else if weight == best {
                // Reservoir sampling keeps each tied schedule with probability 1/ties.
                ties += 1;
                if self.rng.random_range(0..ties) == 0 {
                    best_idx = idx;
                }
            }
        }
        let chosen = &self.table[best_idx * n..(best_idx + 1) * n];
        self.current = Schedule::from_perm_unchecked(chosen.to_vec());
    }
}
