//! Single-server comparison queues. Row `i` of the switch is coupled with a discrete-time
//! queue fed by the row's total arrivals and served once per slot; since every maximal
//! schedule serves each row exactly once, the comparison queue never exceeds the row total.
//! Columns are handled the same way.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{MatchingError, MaxWeightScheduler, TieBreak};
use crate::matrix::{ArrivalMatrix, QueueMatrix};
use crate::model::{step_in_place, ArrivalSampler, ModelError, TrafficModel};
use crate::streams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Gg1Error {
    #[error("comparison queue for {axis} {index} exceeds the switch total at slot {slot}: {phi} > {total}")]
    DominanceViolation {
        slot: u64,
        axis: &'static str,
        index: usize,
        phi: u64,
        total: u64,
    },
    #[error("port {index} out of range for n = {n}")]
    PortOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

/// One slot of the comparison queue: returns `(max(phi + alpha - 1, 0), unused service)`.
#[inline]
pub fn step_gg1(phi: u64, alpha: u64) -> (u64, u8) {
    let total = phi + alpha;
    if total == 0 {
        (0, 1)
    } else {
        (total - 1, 0)
    }
}

/// Steady-state mean of the comparison queue with arrival variance `row_sigma2` and
/// mean arrival `1 - eps`: `row_sigma2 / (2 eps) - (1 - eps) / 2`.
pub fn analytic_mean(row_sigma2: f64, epsilon: f64) -> f64 {
    row_sigma2 / (2.0 * epsilon) - (1.0 - epsilon) / 2.0
}

/// Comparison queues for every row and column, advanced alongside the switch.
#[derive(Debug, Clone)]
pub struct Gg1Coupling {
    n: usize,
    phi_row: Vec<u64>,
    phi_col: Vec<u64>,
    row_totals: Vec<u64>,
    col_totals: Vec<u64>,
    sums: Gg1Sums,
    slot: u64,
}

#[derive(Debug, Clone, Default)]
struct Gg1Sums {
    recorded: u64,
    phi_row: Vec<f64>,
    phi_col: Vec<f64>,
    upsilon_row: Vec<f64>,
    upsilon_col: Vec<f64>,
    total_row: Vec<f64>,
    total_col: Vec<f64>,
}

/// Time averages from a coupled run, indexed by port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gg1Summary {
    pub slots: u64,
    pub mean_phi_row: Vec<f64>,
    pub mean_phi_col: Vec<f64>,
    pub mean_upsilon_row: Vec<f64>,
    pub mean_upsilon_col: Vec<f64>,
    pub mean_row_total: Vec<f64>,
    pub mean_col_total: Vec<f64>,
    pub analytic_row: Vec<f64>,
    pub analytic_col: Vec<f64>,
}

impl Gg1Coupling {
    /// Starts every comparison queue empty, matching an empty switch.
    pub fn new(n: usize) -> Self {
        let zeros = vec![0.0; n];
        Self {
            n,
            phi_row: vec![0; n],
            phi_col: vec![0; n],
            row_totals: vec![0; n],
            col_totals: vec![0; n],
            sums: Gg1Sums {
                recorded: 0,
                phi_row: zeros.clone(),
                phi_col: zeros.clone(),
                upsilon_row: zeros.clone(),
                upsilon_col: zeros.clone(),
                total_row: zeros.clone(),
                total_col: zeros,
            },
            slot: 0,
        }
    }

    /// Advances with this slot's arrivals, checks dominance against `q_next`, and adds
    /// the new state to the time averages when `record` is set.
    pub fn update(
        &mut self,
        a: &ArrivalMatrix,
        q_next: &QueueMatrix,
        record: bool,
    ) -> Result<(), Gg1Error> {
        let n = self.n;
        self.row_totals.iter_mut().for_each(|x| *x = 0);
        self.col_totals.iter_mut().for_each(|x| *x = 0);
        let mut alpha_col = vec![0u64; n];
        for i in 0..n {
            let mut alpha = 0u64;
            for j in 0..n {
                let arr = a[(i, j)] as u64;
                alpha += arr;
                alpha_col[j] += arr;
                self.row_totals[i] += q_next[(i, j)];
                self.col_totals[j] += q_next[(i, j)];
            }
            let (phi, ups) = step_gg1(self.phi_row[i], alpha);
            self.phi_row[i] = phi;
            if record {
                self.sums.upsilon_row[i] += ups as f64;
            }
        }
        for (j, &alpha) in alpha_col.iter().enumerate() {
            let (phi, ups) = step_gg1(self.phi_col[j], alpha);
            self.phi_col[j] = phi;
            if record {
                self.sums.upsilon_col[j] += ups as f64;
            }
        }
        self.slot += 1;
        for (axis, phis, totals) in [
            ("row", &self.phi_row, &self.row_totals),
            ("column", &self.phi_col, &self.col_totals),
        ] {
            if let Some(index) = (0..n).find(|&k| phis[k] > totals[k]) {
                return Err(Gg1Error::DominanceViolation {
                    slot: self.slot,
                    axis,
                    index,
                    phi: phis[index],
                    total: totals[index],
                });
            }
        }
        if record {
            let s = &mut self.sums;
            s.recorded += 1;
            for k in 0..n {
                s.phi_row[k] += self.phi_row[k] as f64;
                s.phi_col[k] += self.phi_col[k] as f64;
                s.total_row[k] += self.row_totals[k] as f64;
                s.total_col[k] += self.col_totals[k] as f64;
            }
        }
        Ok(())
    }

    pub fn summary(&self, model: &TrafficModel) -> Gg1Summary {
        let s = &self.sums;
        let c = 1.0 / s.recorded.max(1) as f64;
        let avg = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let eps = model.epsilon();
        Gg1Summary {
            slots: s.recorded,
            mean_phi_row: avg(&s.phi_row),
            mean_phi_col: avg(&s.phi_col),
            mean_upsilon_row: avg(&s.upsilon_row),
            mean_upsilon_col: avg(&s.upsilon_col),
            mean_row_total: avg(&s.total_row),
            mean_col_total: avg(&s.total_col),
            analytic_row: (0..self.n)
                .map(|i| analytic_mean(model.row_sigma2(i), eps))
                .collect(),
            analytic_col: (0..self.n)
                .map(|j| analytic_mean(model.col_sigma2(j), eps))
                .collect(),
        }
    }
}

/// Result of [`coupled_dominance_run`] for one port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub port: usize,
    pub slots: u64,
    pub mean_phi_row: f64,
    pub mean_row_total: f64,
    pub mean_upsilon_row: f64,
    pub analytic_row: f64,
    pub mean_phi_col: f64,
    pub mean_col_total: f64,
    pub mean_upsilon_col: f64,
    pub analytic_col: f64,
}

/// Runs MaxWeight from an empty switch for `slots` slots, coupled with the comparison
/// queues, and fails on the first slot where a comparison queue exceeds its row or column.
pub fn coupled_dominance_run(
    model: &TrafficModel,
    port: usize,
    slots: u64,
    seed: u64,
) -> Result<CouplingReport, Gg1Error> {
    let n = model.n();
    if port >= n {
        return Err(Gg1Error::PortOutOfRange { index: port, n });
    }
    let mut scheduler = MaxWeightScheduler::new(
        n,
        TieBreak::Auto,
        streams::stream(seed, 0, streams::SCHEDULER_SOURCE),
    )?;
    let mut sampler = ArrivalSampler::new(model, streams::arrival_streams(seed, 0, n));
    let mut q = QueueMatrix::zeros(n);
    let mut a = ArrivalMatrix::zeros(n);
    let mut coupling = Gg1Coupling::new(n);
    for _ in 0..slots {
        let sched = scheduler.schedule(&q);
        sampler.fill(&mut a);
        step_in_place(&mut q, sched, &a);
        coupling.update(&a, &q, true)?;
    }
    let s = coupling.summary(model);
    Ok(CouplingReport {
        port,
        slots,
        mean_phi_row: s.mean_phi_row[port],
        mean_row_total: s.mean_row_total[port],
        mean_upsilon_row: s.mean_upsilon_row[port],
        analytic_row: s.analytic_row[port],
        mean_phi_col: s.mean_phi_col[port],
        mean_col_total: s.mean_col_total[port],
        mean_upsilon_col: s.mean_upsilon_col[port],
        analytic_col: s.analytic_col[port],
    })
}
