//! Steady-state drift accumulators for the Lyapunov functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::QuadraticValues;
use crate::sim::stats::{mean_ci, MeanCi};

/// Names of the quadratic drifts, in accumulator order.
pub const QUADRATIC_DRIFTS: [&str; 5] = ["dV", "dV1", "dV2", "dV3", "dV4"];
pub const PERP_DRIFT: &str = "dW_perp";

/// Per-replication sums of one-slot Lyapunov differences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftAccumulator {
    pub slots: u64,
    pub sums: [f64; 5],
    pub perp_samples: u64,
    pub perp_sum: f64,
    /// Samples with `||q_perp(t)|| >= kappa`.
    pub conditional_samples: u64,
    pub conditional_sum: f64,
}

impl DriftAccumulator {
    pub fn record(&mut self, before: &QuadraticValues, after: &QuadraticValues) {
        self.slots += 1;
        let b = [before.v, before.v1, before.v2, before.v3, before.v4];
        let a = [after.v, after.v1, after.v2, after.v3, after.v4];
        for k in 0..5 {
            self.sums[k] += a[k] - b[k];
        }
    }

    pub fn record_perp(&mut self, before: f64, after: f64, kappa: f64) {
        self.perp_samples += 1;
        self.perp_sum += after - before;
        if before >= kappa {
            self.conditional_samples += 1;
            self.conditional_sum += after - before;
        }
    }

    fn mean(sum: f64, count: u64) -> Option<f64> {
        (count > 0).then(|| sum / count as f64)
    }
}

/// Time-averaged drifts across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    /// `dV`, `dV1` .. `dV4` and `dW_perp`, each with its across-replication CI.
    pub stats: BTreeMap<String, MeanCi>,
    /// Threshold on `||q_perp||` above which the drift of `||q_perp||` is negative.
    pub kappa: f64,
    pub conditional_samples: u64,
    /// Pooled mean of the drift of `||q_perp||` over states above `kappa`.
    pub conditional_mean: Option<f64>,
}

impl DriftSummary {
    pub fn get(&self, name: &str) -> Option<&MeanCi> {
        self.stats.get(name)
    }
}

/// Summarises per-replication drift accumulators; each replication contributes its own
/// time average, and the CI comes from their spread.
pub fn drift_zero_check(accs: &[DriftAccumulator], kappa: f64) -> DriftSummary {
    let mut stats = BTreeMap::new();
    for (k, name) in QUADRATIC_DRIFTS.iter().enumerate() {
        let means: Vec<f64> = accs
            .iter()
            .filter_map(|a| DriftAccumulator::mean(a.sums[k], a.slots))
            .collect();
        stats.insert(name.to_string(), mean_ci(&means));
    }
    let perp: Vec<f64> = accs
        .iter()
        .filter_map(|a| DriftAccumulator::mean(a.perp_sum, a.perp_samples))
        .collect();
    if !perp.is_empty() {
        stats.insert(PERP_DRIFT.to_string(), mean_ci(&perp));
    }
    let conditional_samples: u64 = accs.iter().map(|a| a.conditional_samples).sum();
    let conditional_sum: f64 = accs.iter().map(|a| a.conditional_sum).sum();
    DriftSummary {
        stats,
        kappa,
        conditional_samples,
        conditional_mean: DriftAccumulator::mean(conditional_sum, conditional_samples),
    }
}
