//! Heavy-traffic sweeps over a decreasing sequence of `epsilon`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::io::{format_sig, to_rounded_json, OUTPUT_DIGITS};
use crate::sim::{run_steady_state, SimConfig, SimError};

pub const CSV_HEADER: &str = "eps,mean,ci,scaled_mean,ulb,thm_lb,thm_ub,ssc_ratio";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub mean: f64,
    pub ci: f64,
    pub scaled_mean: f64,
    /// Universal lower bound, valid for every policy.
    pub ulb: f64,
    pub thm_lb: f64,
    pub thm_ub: f64,
    /// NaN when undefined.
    pub ssc_ratio: f64,
    /// Whether `eps` lies where the MaxWeight bracket is proven.
    pub in_regime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub n: usize,
    pub r: u32,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let fields = [
                row.eps,
                row.mean,
                row.ci,
                row.scaled_mean,
                row.ulb,
                row.thm_lb,
                row.thm_ub,
                row.ssc_ratio,
            ];
            let line: Vec<String> = fields
                .iter()
                .map(|&x| format_sig(x, OUTPUT_DIGITS))
                .collect();
            writeln!(out, "{}", line.join(",")).expect("writing to a string");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        std::fs::write(path, to_rounded_json(self)? + "\n")?;
        Ok(())
    }
}

/// Runs `base` once per `epsilon` in `eps_list` (strictly decreasing, Bernoulli traffic),
/// with collapse diagnostics enabled, and tabulates the estimates against the bounds.
///
/// Row `k` uses seed `base.seed + k`. Unless `base.warmup_slots` is set, each row gets the
/// default warmup for its own `epsilon`.
pub fn heavy_traffic_sweep(
    base: &SimConfig,
    eps_list: &[f64],
    r: u32,
) -> Result<SweepTable, SimError> {
    if eps_list.is_empty() {
        return Err(SimError::Config("empty epsilon list".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SimError::Config(
            "epsilon list must be strictly decreasing".into(),
        ));
    }
    if !base.model.is_bernoulli() {
        return Err(SimError::Config(
            "sweeps need Bernoulli traffic, whose arrival law follows from epsilon".into(),
        ));
    }
    if r < 2 {
        return Err(bounds::BoundsError::InvalidOrder { r, min: 2 }.into());
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for (k, &eps) in eps_list.iter().enumerate() {
        let model = base.model.with_epsilon(eps)?;
        let mut cfg = base.clone();
        cfg.model = model.clone();
        cfg.seed = base.seed.wrapping_add(k as u64);
        cfg.diagnostics.ssc = true;
        let est = run_steady_state(&cfg)?;
        let (thm_lb, thm_ub, in_regime) = match bounds::theorem1_bracket(&model, r) {
            Ok(b) => (b.lower, b.upper, b.applicable),
            Err(bounds::BoundsError::ZeroMinRate(_)) => (f64::NAN, f64::NAN, false),
            Err(e) => return Err(e.into()),
        };
        rows.push(SweepRow {
            eps,
            mean: est.mean_total_queue,
            ci: est.ci_halfwidth,
            scaled_mean: est.scaled_mean,
            ulb: bounds::universal_lower_bound(&model),
            thm_lb,
            thm_ub,
            ssc_ratio: est.ssc.and_then(|s| s.ratio).unwrap_or(f64::NAN),
            in_regime,
        });
    }
    Ok(SweepTable {
        n: base.model.n(),
        r,
        rows,
    })
}
