//! Switch state, traffic description and one-slot queue dynamics.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ConeDecomposition;
use crate::matrix::{ArrivalMatrix, Matrix, QueueMatrix, RealMatrix};

/// Tolerance on the row and column sums of the boundary rate matrix.
pub const FACE_TOLERANCE: f64 = 1e-9;
/// Tolerance between a pmf's mean and the configured arrival rate.
pub const PMF_MEAN_TOLERANCE: f64 = 1e-12;
const PMF_MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("a switch needs at least 2 ports, got {0}")]
    TooSmall(usize),
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("{axis} {index} of nu sums to {sum}, expected 1")]
    RowColSumViolation {
        axis: &'static str,
        index: usize,
        sum: f64,
    },
    #[error("nu[{i}][{j}] = {value} is negative")]
    NegativeRate { i: usize, j: usize, value: f64 },
    #[error("rate {value} at ({i}, {j}) is not a probability")]
    InvalidProbability { i: usize, j: usize, value: f64 },
    #[error("invalid pmf at ({i}, {j}): {reason}")]
    InvalidPmf { i: usize, j: usize, reason: String },
    #[error("pmf mean {mean} at ({i}, {j}) differs from arrival rate {rate}")]
    PmfMeanMismatch {
        i: usize,
        j: usize,
        mean: f64,
        rate: f64,
    },
    #[error("not a permutation of 0..{n}: {perm:?}")]
    NotPermutation { n: usize, perm: Vec<usize> },
}

/// Distribution of the per-slot arrival count of one virtual output queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalDist {
    Bernoulli {
        p: f64,
    },
    /// Explicit pmf over `{0, .., pmf.len() - 1}`.
    Pmf {
        pmf: Vec<f64>,
    },
}

impl ArrivalDist {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Bernoulli { p } => *p,
            Self::Pmf { pmf } => pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Bernoulli { p } => p * (1.0 - p),
            Self::Pmf { pmf } => {
                let mean = self.mean();
                pmf.iter()
                    .enumerate()
                    .map(|(k, p)| p * (k as f64 - mean).powi(2))
                    .sum()
            }
        }
    }

    /// Largest value in the declared support.
    pub fn max_value(&self) -> u32 {
        match self {
            Self::Bernoulli { .. } => 1,
            Self::Pmf { pmf } => pmf.len().saturating_sub(1) as u32,
        }
    }

    fn prob_zero(&self) -> f64 {
        match self {
            Self::Bernoulli { p } => 1.0 - p,
            Self::Pmf { pmf } => pmf.first().copied().unwrap_or(0.0),
        }
    }
}

/// Arrival rates `lambda = (1 - epsilon) nu` together with per-queue arrival laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    n: usize,
    epsilon: f64,
    nu: RealMatrix,
    arrivals: Matrix<ArrivalDist>,
}

impl TrafficModel {
    /// Bernoulli arrivals with rate `(1 - epsilon) nu[i][j]` at every queue.
    ///
    /// Face membership of `nu` is not checked here; see [`validate_traffic`].
    pub fn bernoulli(n: usize, epsilon: f64, nu: Vec<f64>) -> Result<Self, ModelError> {
        let nu = Self::check_shape(n, epsilon, nu)?;
        let arrivals = nu.map(|&v| ArrivalDist::Bernoulli {
            p: (1.0 - epsilon) * v,
        });
        Ok(Self {
            n,
            epsilon,
            nu,
            arrivals,
        })
    }

    /// The uniformly loaded switch: `nu = 1/n` everywhere, Bernoulli arrivals.
    pub fn uniform_bernoulli(n: usize, epsilon: f64) -> Result<Self, ModelError> {
        Self::bernoulli(n, epsilon, vec![1.0 / n as f64; n * n])
    }

    /// Arrivals drawn from explicit pmfs, one per queue in row-major order.
    ///
    /// Each pmf must put positive mass on zero and have mean `(1 - epsilon) nu[i][j]`.
    pub fn with_pmfs(
        n: usize,
        epsilon: f64,
        nu: Vec<f64>,
        pmfs: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let nu = Self::check_shape(n, epsilon, nu)?;
        if pmfs.len() != n * n {
            return Err(ModelError::DimensionMismatch {
                expected: n * n,
                got: pmfs.len(),
            });
        }
        let mut cells = Vec::with_capacity(n * n);
        for (idx, pmf) in pmfs.into_iter().enumerate() {
            let (i, j) = (idx / n, idx % n);
            let invalid = |reason: &str| ModelError::InvalidPmf {
                i,
                j,
                reason: reason.to_string(),
            };
            if pmf.len() < 2 {
                return Err(invalid("needs at least two support points"));
            }
            if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(invalid("probabilities must be finite and nonnegative"));
            }
            if (pmf.iter().sum::<f64>() - 1.0).abs() > PMF_MASS_TOLERANCE {
                return Err(invalid("probabilities must sum to 1"));
            }
            let dist = ArrivalDist::Pmf { pmf };
            if dist.prob_zero() <= 0.0 {
                return Err(invalid("P(a = 0) must be positive"));
            }
            let rate = (1.0 - epsilon) * nu[(i, j)];
            let mean = dist.mean();
            if (mean - rate).abs() > PMF_MEAN_TOLERANCE {
                return Err(ModelError::PmfMeanMismatch { i, j, mean, rate });
            }
            cells.push(dist);
        }
        Ok(Self {
            n,
            epsilon,
            nu,
            arrivals: Matrix::from_vec(n, cells).expect("length checked"),
        })
    }

    fn check_shape(n: usize, epsilon: f64, nu: Vec<f64>) -> Result<RealMatrix, ModelError> {
        if n < 2 {
            return Err(ModelError::TooSmall(n));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ModelError::InvalidEpsilon(epsilon));
        }
        let got = nu.len();
        Matrix::from_vec(n, nu).ok_or(ModelError::DimensionMismatch {
            expected: n * n,
            got,
        })
    }

    /// Same traffic shape at a different distance from the boundary.
    ///
    /// Only meaningful for Bernoulli traffic, where the arrival law follows from the rate.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, ModelError> {
        Self::bernoulli(self.n, epsilon, self.nu.as_slice().to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn load(&self) -> f64 {
        1.0 - self.epsilon
    }

    pub fn nu(&self) -> &RealMatrix {
        &self.nu
    }

    pub fn arrivals(&self) -> &Matrix<ArrivalDist> {
        &self.arrivals
    }

    pub fn is_bernoulli(&self) -> bool {
        self.arrivals
            .as_slice()
            .iter()
            .all(|d| matches!(d, ArrivalDist::Bernoulli { .. }))
    }

    pub fn lambda(&self) -> RealMatrix {
        self.nu.scale(1.0 - self.epsilon)
    }

    pub fn sigma2(&self) -> RealMatrix {
        self.arrivals.map(ArrivalDist::variance)
    }

    pub fn sigma_norm_sq(&self) -> f64 {
        self.sigma2().sum()
    }

    /// Variance of the total arrivals to input port `i`.
    pub fn row_sigma2(&self, i: usize) -> f64 {
        self.arrivals.row(i).iter().map(ArrivalDist::variance).sum()
    }

    /// Variance of the total arrivals to output port `j`.
    pub fn col_sigma2(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.arrivals[(i, j)].variance()).sum()
    }

    pub fn a_max(&self) -> u32 {
        self.arrivals
            .as_slice()
            .iter()
            .map(ArrivalDist::max_value)
            .max()
            .unwrap_or(1)
            .max(1)
    }

    pub fn nu_min(&self) -> f64 {
        self.nu
            .as_slice()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Summary of a traffic model's position relative to the capacity region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub epsilon: f64,
    pub load: f64,
    pub nu_min: f64,
    pub nu_norm: f64,
    pub lambda_norm_sq: f64,
    pub sigma_norm_sq: f64,
    pub a_max: u32,
    /// Largest `epsilon` for which the state-space-collapse bounds hold: `nu_min / (2 ||nu||)`.
    pub epsilon_threshold: f64,
    /// `nu_min > 0` and `epsilon <= epsilon_threshold`.
    pub theorem_applicable: bool,
}

/// Checks that `nu` is doubly stochastic and reports the derived traffic constants.
pub fn validate_traffic(model: &TrafficModel) -> Result<ValidationReport, ModelError> {
    let n = model.n();
    if n < 2 {
        return Err(ModelError::TooSmall(n));
    }
    let nu = model.nu();
    for i in 0..n {
        for j in 0..n {
            let value = nu[(i, j)];
            if value < 0.0 || !value.is_finite() {
                return Err(ModelError::NegativeRate { i, j, value });
            }
        }
    }
    for (axis, sums) in [("row", nu.row_sums()), ("column", nu.col_sums())] {
        if let Some((index, &sum)) = sums
            .iter()
            .enumerate()
            .find(|(_, s)| (**s - 1.0).abs() > FACE_TOLERANCE)
        {
            return Err(ModelError::RowColSumViolation { axis, index, sum });
        }
    }
    for (idx, dist) in model.arrivals().as_slice().iter().enumerate() {
        if let ArrivalDist::Bernoulli { p } = dist {
            if !(0.0..=1.0).contains(p) {
                return Err(ModelError::InvalidProbability {
                    i: idx / n,
                    j: idx % n,
                    value: *p,
                });
            }
        }
    }

    let nu_min = model.nu_min();
    let nu_norm = nu.norm();
    let epsilon_threshold = nu_min / (2.0 * nu_norm);
    Ok(ValidationReport {
        n,
        epsilon: model.epsilon(),
        load: model.load(),
        nu_min,
        nu_norm,
        lambda_norm_sq: model.lambda().norm_sq(),
        sigma_norm_sq: model.sigma_norm_sq(),
        a_max: model.a_max(),
        epsilon_threshold,
        theorem_applicable: nu_min > 0.0 && model.epsilon() <= epsilon_threshold,
    })
}

/// A maximal schedule: input `i` is connected to output `perm[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Schedule {
    perm: Vec<usize>,
}

impl Schedule {
    pub fn new(perm: Vec<usize>) -> Result<Self, ModelError> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &j in &perm {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(ModelError::NotPermutation { n, perm });
            }
        }
        Ok(Self { perm })
    }

    pub(crate) fn from_perm_unchecked(perm: Vec<usize>) -> Self {
        debug_assert!(Schedule::new(perm.clone()).is_ok());
        Self { perm }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Output port served at input `i`.
    #[inline]
    pub fn output(&self, i: usize) -> usize {
        self.perm[i]
    }

    pub fn weight(&self, q: &QueueMatrix) -> u64 {
        self.perm.iter().enumerate().map(|(i, &j)| q[(i, j)]).sum()
    }

    pub fn to_matrix(&self) -> Matrix<u8> {
        let mut s = Matrix::zeros(self.n());
        for (i, &j) in self.perm.iter().enumerate() {
            s[(i, j)] = 1;
        }
        s
    }
}

impl TryFrom<Vec<usize>> for Schedule {
    type Error = ModelError;

    fn try_from(perm: Vec<usize>) -> Result<Self, ModelError> {
        Schedule::new(perm)
    }
}

impl From<Schedule> for Vec<usize> {
    fn from(s: Schedule) -> Vec<usize> {
        s.perm
    }
}

/// Result of one slot: `q_next = q + a - s + u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub q_next: QueueMatrix,
    pub unused: Matrix<u8>,
    pub arrivals: ArrivalMatrix,
}

impl SlotOutcome {
    /// Checks the unused-service identities against the pre-slot state.
    pub fn check(&self, q: &QueueMatrix, sched: &Schedule) -> Result<(), String> {
        let n = q.n();
        let s = sched.to_matrix();
        let mut row_u = vec![0u32; n];
        let mut col_u = vec![0u32; n];
        for i in 0..n {
            for j in 0..n {
                let u = self.unused[(i, j)];
                let lhs =
                    q[(i, j)] as i64 + self.arrivals[(i, j)] as i64 - s[(i, j)] as i64 + u as i64;
                if lhs != self.q_next[(i, j)] as i64 {
                    return Err(format!("q_next != q + a - s + u at ({i}, {j})"));
                }
                if u > s[(i, j)] {
                    return Err(format!("unused service on unscheduled link ({i}, {j})"));
                }
                if u == 1
                    && (self.q_next[(i, j)] != 0 || q[(i, j)] != 0 || self.arrivals[(i, j)] != 0)
                {
                    return Err(format!("unused service with packets present at ({i}, {j})"));
                }
                row_u[i] += u as u32;
                col_u[j] += u as u32;
            }
        }
        if row_u.iter().chain(&col_u).any(|&c| c > 1) {
            return Err("unused service exceeds one per port".into());
        }
        Ok(())
    }
}

/// Advances the queues by one slot under schedule `sched` with arrivals `a`.
pub fn step(q: &QueueMatrix, sched: &Schedule, a: &ArrivalMatrix) -> SlotOutcome {
    let n = q.n();
    let mut q_next = q.clone();
    let mut unused = Matrix::zeros(n);
    for (i, &j) in sched.perm().iter().enumerate() {
        if q[(i, j)] + a[(i, j)] as u64 == 0 {
            unused[(i, j)] = 1;
        }
    }
    step_in_place(&mut q_next, sched, a);
    SlotOutcome {
        q_next,
        unused,
        arrivals: a.clone(),
    }
}

/// In-place form of [`step`]; returns the number of unused services.
#[inline]
pub fn step_in_place(q: &mut QueueMatrix, sched: &Schedule, a: &ArrivalMatrix) -> u64 {
    let n = q.n();
    let qs = q.as_mut_slice();
    for (x, &add) in qs.iter_mut().zip(a.as_slice()) {
        *x += add as u64;
    }
    let mut unused = 0;
    for (i, &j) in sched.perm().iter().enumerate() {
        let cell = &mut qs[i * n + j];
        if *cell == 0 {
            unused += 1;
        } else {
            *cell -= 1;
        }
    }
    unused
}

/// Precomputed per-queue sampler for one arrival law.
#[derive(Debug, Clone)]
enum CellSampler {
    Bernoulli(Bernoulli),
    Cdf(Vec<f64>),
}

impl CellSampler {
    fn new(dist: &ArrivalDist) -> Self {
        match dist {
            ArrivalDist::Bernoulli { p } => {
                Self::Bernoulli(Bernoulli::new(p.clamp(0.0, 1.0)).expect("clamped probability"))
            }
            ArrivalDist::Pmf { pmf } => {
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = pmf
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                if let Some(last) = cdf.last_mut() {
                    *last = f64::INFINITY;
                }
                Self::Cdf(cdf)
            }
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            Self::Bernoulli(b) => b.sample(rng) as u32,
            Self::Cdf(cdf) => {
                let u: f64 = rng.random();
                cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u32
            }
        }
    }
}

/// Draws one slot of arrivals from a single generator, cell by cell in row-major order.
pub fn sample_arrivals<R: Rng + ?Sized>(model: &TrafficModel, rng: &mut R) -> ArrivalMatrix {
    let samplers = model.arrivals().map(CellSampler::new);
    let mut a = ArrivalMatrix::zeros(model.n());
    for (out, s) in a.as_mut_slice().iter_mut().zip(samplers.as_slice()) {
        *out = s.sample(rng);
    }
    a
}

/// Arrival source with one independent generator stream per queue.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    cells: Vec<(CellSampler, ChaCha8Rng)>,
}

impl ArrivalSampler {
    /// `streams` must yield one generator per queue in row-major order.
    pub fn new(model: &TrafficModel, streams: impl IntoIterator<Item = ChaCha8Rng>) -> Self {
        let cells: Vec<_> = model
            .arrivals()
            .as_slice()
            .iter()
            .map(CellSampler::new)
            .zip(streams)
            .collect();
        assert_eq!(cells.len(), model.n() * model.n(), "one stream per queue");
        Self { cells }
    }

    #[inline]
    pub fn fill(&mut self, a: &mut ArrivalMatrix) {
        for (out, (sampler, rng)) in a.as_mut_slice().iter_mut().zip(self.cells.iter_mut()) {
            *out = sampler.sample(rng);
        }
    }
}

/// Quadratic Lyapunov functions that need no cone projection.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadraticValues {
    /// `||q||^2`
    pub v: f64,
    /// Sum over inputs of the squared row totals.
    pub v1: f64,
    /// Sum over outputs of the squared column totals.
    pub v2: f64,
    /// Squared grand total.
    pub v3: f64,
    /// `v1 + v2 - v3 / n`
    pub v4: f64,
}

impl QuadraticValues {
    pub fn of(q: &QueueMatrix) -> Self {
        let n = q.n();
        let data = q.as_slice();
        let mut v = 0.0;
        let mut v1 = 0.0;
        let mut col = [0u64; 16];
        let mut col_vec;
        let cols: &mut [u64] = if n <= col.len() {
            &mut col[..n]
        } else {
            col_vec = vec![0u64; n];
            &mut col_vec
        };
        let mut total = 0u64;
        for row in data.chunks(n) {
            let mut row_sum = 0u64;
            for (c, &x) in cols.iter_mut().zip(row) {
                v += (x * x) as f64;
                row_sum += x;
                *c += x;
            }
            v1 += (row_sum * row_sum) as f64;
            total += row_sum;
        }
        let v2: f64 = cols.iter().map(|&c| (c * c) as f64).sum();
        let v3 = (total as f64).powi(2);
        Self {
            v,
            v1,
            v2,
            v3,
            v4: v1 + v2 - v3 / n as f64,
        }
    }
}

/// All Lyapunov functions used in the heavy-traffic analysis, evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovValues {
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    /// `||q||`
    pub w: f64,
    /// `||q_perp||`
    pub w_perp: f64,
    /// `||q_para||^2`
    pub v_para: f64,
    /// `||q_perp||^2`
    pub v_perp: f64,
}

pub fn lyapunov_values(q: &QueueMatrix, decomp: &ConeDecomposition) -> LyapunovValues {
    let quad = QuadraticValues::of(q);
    let v_perp = decomp.q_perp.norm_sq();
    LyapunovValues {
        v: quad.v,
        v1: quad.v1,
        v2: quad.v2,
        v3: quad.v3,
        v4: quad.v4,
        w: quad.v.sqrt(),
        w_perp: v_perp.sqrt(),
        v_para: decomp.q_para.norm_sq(),
        v_perp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_onto_cone;
    use rand::SeedableRng;

    fn qm(rows: Vec<Vec<u64>>) -> QueueMatrix {
        QueueMatrix::from_rows(rows).unwrap()
    }

    fn am(rows: Vec<Vec<u32>>) -> ArrivalMatrix {
        ArrivalMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn uniform_face_point_is_valid() {
        let m = TrafficModel::uniform_bernoulli(3, 0.1).unwrap();
        let r = validate_traffic(&m).unwrap();
        assert!((r.nu_min - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.load - 0.9).abs() < 1e-15);
        assert!(r.theorem_applicable);
    }

    #[test]
    fn permutation_matrix_is_on_face_but_not_applicable() {
        let nu = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let m = TrafficModel::bernoulli(3, 0.1, nu).unwrap();
        let r = validate_traffic(&m).unwrap();
        assert_eq!(r.nu_min, 0.0);
        assert!(!r.theorem_applicable);
    }

    #[test]
    fn short_row_violates_face() {
        let nu = vec![0.5, 0.4, 0.5, 0.6];
        let m = TrafficModel::bernoulli(2, 0.1, nu).unwrap();
        assert!(matches!(
            validate_traffic(&m),
            Err(ModelError::RowColSumViolation {
                axis: "row",
                index: 0,
                ..
            })
        ));
    }

    #[test]
    fn negative_rate_rejected() {
        let nu = vec![1.1, -0.1, -0.1, 1.1];
        let m = TrafficModel::bernoulli(2, 0.1, nu).unwrap();
        assert!(matches!(
            validate_traffic(&m),
            Err(ModelError::NegativeRate { i: 0, j: 1, .. })
        ));
    }

    #[test]
    fn shape_errors() {
        assert_eq!(
            TrafficModel::uniform_bernoulli(1, 0.1).unwrap_err(),
            ModelError::TooSmall(1)
        );
        assert!(matches!(
            TrafficModel::uniform_bernoulli(2, 0.0),
            Err(ModelError::InvalidEpsilon(_))
        ));
        assert!(matches!(
            TrafficModel::bernoulli(2, 0.1, vec![0.5; 3]),
            Err(ModelError::DimensionMismatch {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn uniform_bernoulli_sigma_closed_form() {
        for n in 2..=8 {
            for eps in [0.5, 0.2, 0.1, 0.01] {
                let m = TrafficModel::uniform_bernoulli(n, eps).unwrap();
                let expected = (1.0 - eps) * (n as f64 - (1.0 - eps));
                let got = validate_traffic(&m).unwrap().sigma_norm_sq;
                assert!((got - expected).abs() < 1e-12, "n={n} eps={eps}");
            }
        }
    }

    #[test]
    fn pmf_validation() {
        let nu = vec![0.5; 4];
        let eps = 0.2;
        // mean 0.4 = 0.8 * 0.5
        let ok = vec![0.7, 0.2, 0.1];
        assert!(TrafficModel::with_pmfs(2, eps, nu.clone(), vec![ok.clone(); 4]).is_ok());
        let wrong_mean = vec![0.6, 0.3, 0.1];
        assert!(matches!(
            TrafficModel::with_pmfs(2, eps, nu.clone(), vec![wrong_mean; 4]),
            Err(ModelError::PmfMeanMismatch { .. })
        ));
        let no_zero = vec![0.0, 0.6, 0.4];
        assert!(matches!(
            TrafficModel::with_pmfs(2, eps, nu, vec![no_zero; 4]),
            Err(ModelError::InvalidPmf { .. })
        ));
        let m = TrafficModel::with_pmfs(2, eps, vec![0.5; 4], vec![ok; 4]).unwrap();
        assert_eq!(m.a_max(), 2);
        assert!((m.sigma2()[(0, 0)] - (0.2 + 0.4 - 0.16)).abs() < 1e-15);
    }

    #[test]
    fn step_serves_nonempty_queues() {
        let out = step(
            &qm(vec![vec![1, 0], vec![0, 2]]),
            &Schedule::identity(2),
            &ArrivalMatrix::zeros(2),
        );
        assert_eq!(out.q_next, qm(vec![vec![0, 0], vec![0, 1]]));
        assert_eq!(out.unused, Matrix::zeros(2));
    }

    #[test]
    fn step_records_unused_service() {
        let q = QueueMatrix::zeros(2);
        let out = step(&q, &Schedule::identity(2), &ArrivalMatrix::zeros(2));
        assert_eq!(out.q_next, q);
        assert_eq!(out.unused, Schedule::identity(2).to_matrix());
        out.check(&q, &Schedule::identity(2)).unwrap();
    }

    #[test]
    fn step_arrival_consumed_by_service() {
        let q = qm(vec![vec![0, 1], vec![1, 0]]);
        let a = am(vec![vec![1, 0], vec![0, 1]]);
        let out = step(&q, &Schedule::identity(2), &a);
        assert_eq!(out.q_next, q);
        assert_eq!(out.unused, Matrix::zeros(2));
        out.check(&q, &Schedule::identity(2)).unwrap();
    }

    #[test]
    fn schedule_rejects_non_permutations() {
        assert!(Schedule::new(vec![0, 0]).is_err());
        assert!(Schedule::new(vec![0, 2]).is_err());
        assert!(Schedule::new(vec![1, 0]).is_ok());
    }

    #[test]
    fn bernoulli_zero_rate_never_arrives() {
        let nu = vec![1.0, 0.0, 0.0, 1.0];
        let m = TrafficModel::bernoulli(2, 0.5, nu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = sample_arrivals(&m, &mut rng);
            assert_eq!(a[(0, 1)], 0);
            assert_eq!(a[(1, 0)], 0);
        }
    }

    #[test]
    fn bernoulli_empirical_moments() {
        // rate 0.3 = (1 - 0.4) * 0.5
        let m = TrafficModel::uniform_bernoulli(2, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let x = sample_arrivals(&m, &mut rng)[(0, 0)] as f64;
            s += x;
            s2 += x * x;
        }
        let mean = s / draws as f64;
        let var = s2 / draws as f64 - mean * mean;
        assert!((mean - 0.3).abs() < 0.002, "mean {mean}");
        assert!((var - 0.21).abs() < 0.003, "var {var}");
    }

    #[test]
    fn pmf_sampler_matches_pmf() {
        let m =
            TrafficModel::with_pmfs(2, 0.2, vec![0.5; 4], vec![vec![0.7, 0.2, 0.1]; 4]).unwrap();
        let streams = (0..4).map(|k| {
            let mut r = ChaCha8Rng::seed_from_u64(3);
            r.set_stream(k);
            r
        });
        let mut sampler = ArrivalSampler::new(&m, streams);
        let mut a = ArrivalMatrix::zeros(2);
        let mut counts = [0u32; 3];
        for _ in 0..200_000 {
            sampler.fill(&mut a);
            counts[a[(1, 1)] as usize] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / 200_000.0).collect();
        assert!((freq[0] - 0.7).abs() < 0.005);
        assert!((freq[1] - 0.2).abs() < 0.005);
        assert!((freq[2] - 0.1).abs() < 0.005);
    }

    #[test]
    fn lyapunov_of_empty_state() {
        let q = QueueMatrix::zeros(3);
        let d = project_onto_cone(&q.to_real()).unwrap();
        let l = lyapunov_values(&q, &d);
        for v in [
            l.v, l.v1, l.v2, l.v3, l.v4, l.w, l.w_perp, l.v_para, l.v_perp,
        ] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn lyapunov_of_all_ones() {
        let q = QueueMatrix::filled(2, 1);
        let d = project_onto_cone(&q.to_real()).unwrap();
        let l = lyapunov_values(&q, &d);
        assert_eq!((l.v, l.v1, l.v2, l.v3, l.v4), (4.0, 8.0, 8.0, 16.0, 8.0));
        assert!(l.w_perp < 1e-9);
    }

    #[test]
    fn v4_matches_reversed_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = QueueMatrix::from_fn(3, |_, _| rng.random_range(0..50));
            let n = 3;
            // Oracle: sums accumulated in reverse index order, in f64.
            let mut v1 = 0.0;
            for i in (0..n).rev() {
                let r: f64 = (0..n).rev().map(|j| q[(i, j)] as f64).sum();
                v1 += r * r;
            }
            let mut v2 = 0.0;
            for j in (0..n).rev() {
                let c: f64 = (0..n).rev().map(|i| q[(i, j)] as f64).sum();
                v2 += c * c;
            }
            let t: f64 = q.as_slice().iter().rev().map(|&x| x as f64).sum();
            let v4 = v1 + v2 - t * t / n as f64;
            let d = project_onto_cone(&q.to_real()).unwrap();
            let l = lyapunov_values(&q, &d);
            assert!((l.v4 - v4).abs() <= 1e-9 * v4.abs().max(1.0));
            assert!(-l.v3 / 3.0 <= l.v4 && l.v4 <= l.v1 + l.v2);
            assert!((l.v - (l.v_para + l.v_perp)).abs() <= 1e-9 * l.v.max(1.0));
        }
    }
}
