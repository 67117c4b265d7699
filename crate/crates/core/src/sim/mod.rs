//! Monte Carlo steady-state estimation.
//!
//! A run consists of independent replications executed in parallel. Each replication
//! starts from an empty switch, discards `warmup_slots` slots and time-averages the total
//! queue length over the next `sample_slots`. The reported CI is the 95% Student-t interval
//! of the replication averages.

pub mod config;
pub mod drift;
pub mod stats;
pub mod sweep;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, BoundsError};
use crate::geometry::{project_onto_cone, GeometryError};
use crate::gg1::{Gg1Coupling, Gg1Error, Gg1Summary};
use crate::matching::{MatchingError, MaxWeightScheduler, TieBreak};
use crate::matrix::{ArrivalMatrix, QueueMatrix};
use crate::model::{
    step_in_place, validate_traffic, ArrivalSampler, ModelError, QuadraticValues, TrafficModel,
};
use crate::streams;

pub use drift::{drift_zero_check, DriftAccumulator, DriftSummary};
pub use stats::{mean_ci, MeanCi};
pub use sweep::{heavy_traffic_sweep, SweepRow, SweepTable};

pub const MIN_SAMPLE_SLOTS: u64 = 1_000;
pub const MIN_WARMUP_SLOTS: u64 = 100_000;
pub const DEFAULT_DIAG_EVERY: u64 = 100;
/// Highest power of `||q_perp||` whose sample mean is kept.
pub const SSC_MAX_MOMENT: u32 = 8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Gg1(#[from] Gg1Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimError {
    /// True for failures that indicate a defect in the simulation rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Self::Invariant(_) | Self::Gg1(Gg1Error::DominanceViolation { .. })
        )
    }
}

/// Diagnostics computed during the sampling phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Diagnostics {
    /// Cone decomposition of sampled states.
    pub ssc: bool,
    /// One-slot drifts of the Lyapunov functions.
    pub lyapunov_drift: bool,
    /// Single-server comparison queues for every row and column.
    pub gg1_coupling: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: TrafficModel,
    /// `None` selects [`default_warmup_slots`].
    pub warmup_slots: Option<u64>,
    pub sample_slots: u64,
    pub replications: u32,
    pub seed: u64,
    pub diagnostics: Diagnostics,
    /// Projection diagnostics run on every `diag_every`-th sampled slot.
    pub diag_every: u64,
    pub tie_break: TieBreak,
}

impl SimConfig {
    pub fn new(model: TrafficModel) -> Self {
        Self {
            model,
            warmup_slots: None,
            sample_slots: 1_000_000,
            replications: 8,
            seed: 0,
            diagnostics: Diagnostics::default(),
            diag_every: DEFAULT_DIAG_EVERY,
            tie_break: TieBreak::Auto,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        validate_traffic(&self.model)?;
        if self.sample_slots < MIN_SAMPLE_SLOTS {
            return Err(SimError::Config(format!(
                "sample_slots = {} is below {MIN_SAMPLE_SLOTS}",
                self.sample_slots
            )));
        }
        if self.replications < 1 {
            return Err(SimError::Config("replications must be at least 1".into()));
        }
        if self.diag_every < 1 {
            return Err(SimError::Config("diag_every must be at least 1".into()));
        }
        self.tie_break.resolve(self.model.n())?;
        Ok(())
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_slots
            .unwrap_or_else(|| default_warmup_slots(&self.model))
    }
}

/// `max(1e5, 20 m / eps)` where `m` is the heavy-traffic mean `(1 - 1/(2n)) ||sigma||^2 / eps`.
pub fn default_warmup_slots(model: &TrafficModel) -> u64 {
    let eps = model.epsilon();
    let expected = bounds::heavy_traffic_limit(model.n(), model.sigma_norm_sq()) / eps;
    let slots = (20.0 * expected / eps).ceil();
    if slots.is_finite() && slots < u64::MAX as f64 {
        MIN_WARMUP_SLOTS.max(slots as u64)
    } else {
        u64::MAX
    }
}

/// Cone-decomposition statistics over the sampled states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SscSummary {
    /// Projected states per replication.
    pub samples_per_replication: u64,
    pub mean_norm_qperp: f64,
    pub ci_norm_qperp: f64,
    pub mean_norm_qpara: f64,
    pub ci_norm_qpara: f64,
    /// `mean_norm_qperp / mean_norm_qpara`, when the denominator is positive.
    pub ratio: Option<f64>,
    /// `E||q_perp||^r` for `r = 1 ..= SSC_MAX_MOMENT`.
    pub perp_moments: Vec<f64>,
    pub max_kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub replications: u32,
    pub warmup_slots: u64,
    pub sample_slots: u64,
    /// All slots simulated, warmup included, summed over replications.
    pub slots_simulated: u64,
    pub mean_total_queue: f64,
    pub ci_halfwidth: f64,
    /// `epsilon * mean_total_queue`.
    pub scaled_mean: f64,
    pub replication_means: Vec<f64>,
    pub ssc: Option<SscSummary>,
    pub drift_checks: Option<DriftSummary>,
    pub gg1: Option<Gg1Summary>,
}

#[derive(Debug, Default)]
struct ReplicationResult {
    mean_total: f64,
    slots: u64,
    ssc_samples: u64,
    sum_perp: f64,
    sum_para: f64,
    perp_powers: [f64; SSC_MAX_MOMENT as usize],
    max_kkt: f64,
    drift: DriftAccumulator,
    gg1: Option<Gg1Summary>,
}

fn run_replication(
    cfg: &SimConfig,
    replication: u32,
    warmup: u64,
    kappa: f64,
) -> Result<ReplicationResult, SimError> {
    let model = &cfg.model;
    let n = model.n();
    let mut scheduler = MaxWeightScheduler::new(
        n,
        cfg.tie_break,
        streams::stream(cfg.seed, replication, streams::SCHEDULER_SOURCE),
    )?;
    let mut sampler =
        ArrivalSampler::new(model, streams::arrival_streams(cfg.seed, replication, n));
    let mut q = QueueMatrix::zeros(n);
    let mut a = ArrivalMatrix::zeros(n);
    let mut gg1 = cfg.diagnostics.gg1_coupling.then(|| Gg1Coupling::new(n));
    let diag = cfg.diagnostics;
    let project_every = diag.ssc || diag.lyapunov_drift;

    let mut out = ReplicationResult::default();
    let mut running_total: u64 = 0;
    let mut sampled_sum: u128 = 0;
    let mut quad = QuadraticValues::default();
    let total_slots = warmup + cfg.sample_slots;

    for t in 0..total_slots {
        let sampling = t >= warmup;
        let diag_slot = (t % cfg.diag_every) == 0;
        if sampling {
            sampled_sum += running_total as u128;
        }
        if diag_slot && q.total() != running_total {
            return Err(SimError::Invariant(format!(
                "replication {replication}, slot {t}: queue total {} differs from arrival/service accounting {running_total}",
                q.total()
            )));
        }
        let mut perp_before = None;
        if sampling && diag_slot && project_every {
            let d = project_onto_cone(&q.to_real())?;
            let perp = d.q_perp.norm();
            if diag.ssc {
                out.ssc_samples += 1;
                out.sum_perp += perp;
                out.sum_para += d.q_para.norm();
                let mut p = 1.0;
                for slot in out.perp_powers.iter_mut() {
                    p *= perp;
                    *slot += p;
                }
                out.max_kkt = out.max_kkt.max(d.kkt_residual);
            }
            perp_before = Some(perp);
        }
        if sampling && diag.lyapunov_drift && t == warmup {
            quad = QuadraticValues::of(&q);
        }

        let sched = scheduler.schedule(&q);
        sampler.fill(&mut a);
        let arrived: u64 = a.as_slice().iter().map(|&x| x as u64).sum();
        let unused = step_in_place(&mut q, sched, &a);
        running_total = running_total + arrived + unused - n as u64;

        if let Some(c) = gg1.as_mut() {
            c.update(&a, &q, sampling)?;
        }
        if sampling && diag.lyapunov_drift {
            let next = QuadraticValues::of(&q);
            out.drift.record(&quad, &next);
            quad = next;
            if let Some(before) = perp_before {
                let after = project_onto_cone(&q.to_real())?.q_perp.norm();
                out.drift.record_perp(before, after, kappa);
            }
        }
    }
    if q.total() != running_total {
        return Err(SimError::Invariant(format!(
            "replication {replication}: final queue total {} differs from accounting {running_total}",
            q.total()
        )));
    }
    out.mean_total = sampled_sum as f64 / cfg.sample_slots as f64;
    out.slots = total_slots;
    out.gg1 = gg1.map(|c| c.summary(model));
    Ok(out)
}

fn average_gg1(parts: &[&Gg1Summary]) -> Gg1Summary {
    let k = parts.len() as f64;
    let avg = |f: fn(&Gg1Summary) -> &Vec<f64>| -> Vec<f64> {
        let len = f(parts[0]).len();
        (0..len)
            .map(|i| parts.iter().map(|p| f(p)[i]).sum::<f64>() / k)
            .collect()
    };
    Gg1Summary {
        slots: parts.iter().map(|p| p.slots).sum(),
        mean_phi_row: avg(|p| &p.mean_phi_row),
        mean_phi_col: avg(|p| &p.mean_phi_col),
        mean_upsilon_row: avg(|p| &p.mean_upsilon_row),
        mean_upsilon_col: avg(|p| &p.mean_upsilon_col),
        mean_row_total: avg(|p| &p.mean_row_total),
        mean_col_total: avg(|p| &p.mean_col_total),
        analytic_row: parts[0].analytic_row.clone(),
        analytic_col: parts[0].analytic_col.clone(),
    }
}

/// Estimates the steady-state mean total queue length under MaxWeight.
pub fn run_steady_state(cfg: &SimConfig) -> Result<SimEstimate, SimError> {
    cfg.validate()?;
    let model = &cfg.model;
    let warmup = cfg.warmup();
    let kappa = if cfg.diagnostics.lyapunov_drift {
        bounds::collapse_drift_params(model)
            .map(|p| p.kappa)
            .unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    let results: Vec<ReplicationResult> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r, warmup, kappa))
        .collect::<Result<_, _>>()?;

    let replication_means: Vec<f64> = results.iter().map(|r| r.mean_total).collect();
    let overall = mean_ci(&replication_means);
    let ssc = cfg.diagnostics.ssc.then(|| {
        let samples = results[0].ssc_samples;
        let per_rep = |f: fn(&ReplicationResult) -> f64| -> MeanCi {
            let v: Vec<f64> = results.iter().map(f).collect();
            mean_ci(&v)
        };
        let perp = per_rep(|r| r.sum_perp / r.ssc_samples.max(1) as f64);
        let para = per_rep(|r| r.sum_para / r.ssc_samples.max(1) as f64);
        let total_samples: u64 = results.iter().map(|r| r.ssc_samples).sum();
        let perp_moments = (0..SSC_MAX_MOMENT as usize)
            .map(|k| {
                results.iter().map(|r| r.perp_powers[k]).sum::<f64>() / total_samples.max(1) as f64
            })
            .collect();
        SscSummary {
            samples_per_replication: samples,
            mean_norm_qperp: perp.mean,
            ci_norm_qperp: perp.ci_halfwidth,
            mean_norm_qpara: para.mean,
            ci_norm_qpara: para.ci_halfwidth,
            ratio: (para.mean > 0.0).then(|| perp.mean / para.mean),
            perp_moments,
            max_kkt_residual: results.iter().map(|r| r.max_kkt).fold(0.0, f64::max),
        }
    });
    let drift_checks = cfg.diagnostics.lyapunov_drift.then(|| {
        let accs: Vec<DriftAccumulator> = results.iter().map(|r| r.drift.clone()).collect();
        drift_zero_check(&accs, kappa)
    });
    let gg1 = cfg.diagnostics.gg1_coupling.then(|| {
        let parts: Vec<&Gg1Summary> = results.iter().filter_map(|r| r.gg1.as_ref()).collect();
        average_gg1(&parts)
    });

    Ok(SimEstimate {
        n: model.n(),
        epsilon: model.epsilon(),
        seed: cfg.seed,
        replications: cfg.replications,
        warmup_slots: warmup,
        sample_slots: cfg.sample_slots,
        slots_simulated: results.iter().map(|r| r.slots).sum(),
        mean_total_queue: overall.mean,
        ci_halfwidth: overall.ci_halfwidth,
        scaled_mean: model.epsilon() * overall.mean,
        replication_means,
        ssc,
        drift_checks,
        gg1,
    })
}

/// Empirical `E||q_perp||^r` against the bound `M_r^r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SscMomentCheck {
    pub empirical: f64,
    pub bound: f64,
    pub holds: bool,
    /// Whether `epsilon` is in the range where the bound is proven.
    pub applicable: bool,
}

/// Compares the sampled moments of `||q_perp||` with the collapse bounds for each `r`.
pub fn ssc_moment_check(
    estimate: &SimEstimate,
    model: &TrafficModel,
    r_list: &[u32],
) -> Result<BTreeMap<u32, SscMomentCheck>, SimError> {
    let ssc = estimate
        .ssc
        .as_ref()
        .ok_or_else(|| SimError::Config("the run did not collect collapse diagnostics".into()))?;
    let mut out = BTreeMap::new();
    for &r in r_list {
        if !(1..=SSC_MAX_MOMENT).contains(&r) {
            return Err(SimError::Config(format!(
                "moment order {r} outside 1..={SSC_MAX_MOMENT}"
            )));
        }
        let m = bounds::ssc_moment_constant(r, model)?;
        let empirical = ssc.perp_moments[(r - 1) as usize];
        let bound = m.value.powi(r as i32);
        out.insert(
            r,
            SscMomentCheck {
                empirical,
                bound,
                holds: empirical <= bound,
                applicable: m.applicable,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(eps: f64) -> SimConfig {
        let mut cfg = SimConfig::new(TrafficModel::uniform_bernoulli(2, eps).unwrap());
        cfg.warmup_slots = Some(2_000);
        cfg.sample_slots = 20_000;
        cfg.replications = 4;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(0.1);
        cfg.sample_slots = 999;
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
        let mut cfg = small(0.1);
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_warmup_floor() {
        let m = TrafficModel::uniform_bernoulli(2, 0.1).unwrap();
        assert_eq!(default_warmup_slots(&m), MIN_WARMUP_SLOTS);
        let m = TrafficModel::uniform_bernoulli(8, 0.001).unwrap();
        assert!(default_warmup_slots(&m) > MIN_WARMUP_SLOTS);
    }

    #[test]
    fn light_load_is_nearly_empty() {
        let est = run_steady_state(&small(0.9)).unwrap();
        assert!(est.mean_total_queue < 1.0);
        let lb = bounds::universal_lower_bound(&small(0.9).model);
        assert!(lb <= est.mean_total_queue + est.ci_halfwidth);
        assert_eq!(est.slots_simulated, 4 * 22_000);
    }

    #[test]
    fn reproducible() {
        let mut cfg = small(0.2);
        cfg.diagnostics = Diagnostics {
            ssc: true,
            lyapunov_drift: true,
            gg1_coupling: true,
        };
        let a = run_steady_state(&cfg).unwrap();
        let b = run_steady_state(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        assert_ne!(
            a.mean_total_queue,
            run_steady_state(&cfg).unwrap().mean_total_queue
        );
    }

    #[test]
    fn diagnostics_are_populated() {
        let mut cfg = small(0.2);
        cfg.diagnostics.ssc = true;
        cfg.diagnostics.lyapunov_drift = true;
        let est = run_steady_state(&cfg).unwrap();
        let ssc = est.ssc.as_ref().unwrap();
        assert_eq!(ssc.samples_per_replication, 200);
        assert!(ssc.perp_moments[1] >= ssc.perp_moments[0].powi(2));
        let drift = est.drift_checks.as_ref().unwrap();
        assert_eq!(drift.stats.len(), 6);
        let checks = ssc_moment_check(&est, &cfg.model, &[1, 2]).unwrap();
        assert!(checks[&1].holds);
        assert!(checks[&1].applicable);
        assert!(est.gg1.is_none());
    }
}
