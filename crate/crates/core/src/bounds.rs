//! Closed-form queue-length bounds: drift-based tail and moment bounds, the universal
//! lower bound, state-space-collapse constants, and the MaxWeight brackets for general,
//! uniform Bernoulli and port-scaling traffic.
//!
//! Every function returns the raw expression value. Nothing is clamped; a bracket whose
//! preconditions fail is still evaluated and returned with `applicable == false`.

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TrafficModel;

/// Order used by the brackets when none is given.
pub const DEFAULT_ORDER: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid drift parameters: {0}")]
    InvalidDriftParams(String),
    #[error("moment order {r} below the minimum {min}")]
    InvalidOrder { r: u32, min: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("every arrival rate must be positive (nu_min = {0})")]
    ZeroMinRate(f64),
    #[error("bound of order {r} overflows double precision")]
    Overflow { r: u32 },
    #[error("outside the regime where the bound is proven: {0}")]
    InapplicableRegime(String),
}

/// Drift conditions on a Lyapunov function `Z`: mean drift `<= -eta` whenever `Z >= kappa`,
/// and `|Delta Z| <= d` almost surely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub kappa: f64,
    pub eta: f64,
    pub d: f64,
}

impl DriftParams {
    pub fn new(kappa: f64, eta: f64, d: f64) -> Result<Self, BoundsError> {
        let bad = |msg: &str| Err(BoundsError::InvalidDriftParams(msg.into()));
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return bad("kappa must be finite and nonnegative");
        }
        if !(eta > 0.0 && d > 0.0 && d.is_finite()) {
            return bad("eta and d must be positive");
        }
        if eta > d {
            return bad("eta cannot exceed d");
        }
        Ok(Self { kappa, eta, d })
    }
}

/// Bound on `P(Z > kappa + 2 d m)` in steady state: `(d / (d + eta))^(m + 1)`.
pub fn drift_tail_bound(p: &DriftParams, m: u32) -> f64 {
    (p.d / (p.d + p.eta)).powf(m as f64 + 1.0)
}

/// Bound on `E[Z^r]` in steady state: `(2 kappa)^r + (4 d)^r ((d + eta) / eta)^r r!`.
pub fn drift_moment_bound(p: &DriftParams, r: u32) -> Result<f64, BoundsError> {
    if r < 1 {
        return Err(BoundsError::InvalidOrder { r, min: 1 });
    }
    let rf = r as f64;
    let factorial: f64 = (1..=r).map(f64::from).product();
    let value = (2.0 * p.kappa).powf(rf)
        + (4.0 * p.d).powf(rf) * ((p.d + p.eta) / p.eta).powf(rf) * factorial;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(BoundsError::Overflow { r })
    }
}

/// Lower bound on the mean total queue length valid for every scheduling policy:
/// `||sigma||^2 / (2 eps) - n (1 - eps) / 2`.
pub fn universal_lower_bound(model: &TrafficModel) -> f64 {
    let eps = model.epsilon();
    model.sigma_norm_sq() / (2.0 * eps) - model.n() as f64 * (1.0 - eps) / 2.0
}

/// Universal lower bound specialised to uniform Bernoulli traffic: `(1 - eps)^2 (n - 1) / (2 eps)`.
pub fn bernoulli_universal_lower_bound(n: usize, epsilon: f64) -> f64 {
    (1.0 - epsilon).powi(2) * (n as f64 - 1.0) / (2.0 * epsilon)
}

/// Heavy-traffic limit of `eps * E[sum q]` under MaxWeight: `(1 - 1/(2n)) ||sigma||^2`.
pub fn heavy_traffic_limit(n: usize, sigma_norm_sq: f64) -> f64 {
    (1.0 - 1.0 / (2.0 * n as f64)) * sigma_norm_sq
}

/// The same limit for uniform Bernoulli traffic: `n - 3/2 + 1/(2n)`.
pub fn bernoulli_heavy_traffic_limit(n: usize) -> f64 {
    let n = n as f64;
    n - 1.5 + 1.0 / (2.0 * n)
}

/// A value together with whether its proof preconditions hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeChecked {
    pub value: f64,
    pub applicable: bool,
}

/// Largest `epsilon` covered by the collapse bounds: `nu_min / (2 ||nu||)`.
pub fn collapse_epsilon_threshold(model: &TrafficModel) -> f64 {
    model.nu_min() / (2.0 * model.nu().norm())
}

/// Drift parameters of `||q_perp||` established for the collapse result:
/// `kappa = 4 (||lambda||^2 + ||sigma||^2 + n) / nu_min`, `eta = nu_min / 4`, `d = n a_max`.
pub fn collapse_drift_params(model: &TrafficModel) -> Result<DriftParams, BoundsError> {
    let nu_min = model.nu_min();
    if nu_min <= 0.0 {
        return Err(BoundsError::ZeroMinRate(nu_min));
    }
    let n = model.n() as f64;
    let kappa = 4.0 * (model.lambda().norm_sq() + model.sigma_norm_sq() + n) / nu_min;
    DriftParams::new(kappa, nu_min / 4.0, n * model.a_max() as f64)
}

/// Constant `M_r` with `E[||q_perp||^r] <= M_r^r` in steady state.
pub fn ssc_moment_constant(r: u32, model: &TrafficModel) -> Result<RegimeChecked, BoundsError> {
    if r < 1 {
        return Err(BoundsError::InvalidOrder { r, min: 1 });
    }
    let nu_min = model.nu_min();
    if nu_min <= 0.0 {
        return Err(BoundsError::ZeroMinRate(nu_min));
    }
    let rf = r as f64;
    let n = model.n() as f64;
    let na = n * model.a_max() as f64;
    let drift_term = 8.0 * (model.lambda().norm_sq() + model.sigma_norm_sq() + n) / nu_min;
    let step_term = (rf.sqrt() * E).powf(1.0 / rf) * 16.0 * (rf / E) * (na / nu_min) * (na + 1.0);
    Ok(RegimeChecked {
        value: 2f64.powf(1.0 / rf) * drift_term.max(step_term),
        applicable: model.epsilon() <= collapse_epsilon_threshold(model),
    })
}

/// `M_r` for uniform Bernoulli traffic: `(2 sqrt(r) e)^(1/r) 16 (r/e) n^2 (n + 1)`.
pub fn bernoulli_ssc_constant(n: usize, r: u32) -> f64 {
    let rf = r as f64;
    let n = n as f64;
    (2.0 * rf.sqrt() * E).powf(1.0 / rf) * 16.0 * (rf / E) * n * n * (n + 1.0)
}

/// Lower and upper bounds with the named intermediate quantities that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lower: f64,
    pub upper: f64,
    pub terms: BTreeMap<String, f64>,
    /// Whether the proof preconditions hold for these parameters.
    pub applicable: bool,
    /// Some term exceeded double precision and was reported as infinite.
    pub overflow: bool,
    pub warnings: Vec<String>,
}

impl BoundReport {
    fn new(lower: f64, upper: f64, terms: &[(&str, f64)], applicable: bool) -> Self {
        let terms: BTreeMap<String, f64> = terms.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let overflow =
            !lower.is_finite() || !upper.is_finite() || terms.values().any(|v| v.is_infinite());
        let fix = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
        Self {
            lower: fix(lower),
            upper: fix(upper),
            terms,
            applicable,
            overflow,
            warnings: Vec::new(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }

    /// Turns an out-of-regime report into an error.
    pub fn require_applicable(self) -> Result<Self, BoundsError> {
        if self.applicable {
            Ok(self)
        } else {
            Err(BoundsError::InapplicableRegime(
                self.warnings.join("; ").to_string(),
            ))
        }
    }
}

fn check_order(r: u32) -> Result<(), BoundsError> {
    if r < 2 {
        Err(BoundsError::InvalidOrder { r, min: 2 })
    } else {
        Ok(())
    }
}

/// `n^(2 - 1/r) eps^(-1/r) M_r`, the collapse contribution shared by both bracket sides.
fn collapse_term(n: f64, epsilon: f64, r: u32, m_r: f64) -> f64 {
    let rf = r as f64;
    n.powf(2.0 - 1.0 / rf) * epsilon.powf(-1.0 / rf) * m_r
}

/// MaxWeight bracket on `E[sum q]` for general traffic on the face:
/// `(1 - 1/(2n)) ||sigma||^2 / eps` minus `b1`, plus `b2`.
pub fn theorem1_bracket(model: &TrafficModel, r: u32) -> Result<BoundReport, BoundsError> {
    check_order(r)?;
    let m = ssc_moment_constant(r, model)?;
    let n = model.n() as f64;
    let eps = model.epsilon();
    let sigma_norm_sq = model.sigma_norm_sq();
    let leading = heavy_traffic_limit(model.n(), sigma_norm_sq) / eps;
    let shared = collapse_term(n, eps, r, m.value);
    let b1 = -n * eps / 2.0 + n + 3.0 * shared;
    let b2 = n * (1.0 + eps) / 2.0 + 2.0 * shared;
    let threshold = collapse_epsilon_threshold(model);
    let mut report = BoundReport::new(
        leading - b1,
        leading + b2,
        &[
            ("r", r as f64),
            ("epsilon", eps),
            ("sigma_norm_sq", sigma_norm_sq),
            ("leading", leading),
            ("m_r", m.value),
            ("b1", b1),
            ("b2", b2),
            ("epsilon_threshold", threshold),
            ("universal_lower_bound", universal_lower_bound(model)),
        ],
        m.applicable,
    );
    if !m.applicable {
        report.warnings.push(format!(
            "epsilon {eps} exceeds nu_min / (2 ||nu||) = {threshold}"
        ));
    }
    Ok(report)
}

/// Uniform Bernoulli bracket: `(n - 3/2 + 1/(2n)) / eps` minus `b1`, plus `b2`.
pub fn bernoulli_bracket(n: usize, epsilon: f64, r: u32) -> Result<BoundReport, BoundsError> {
    check_order(r)?;
    if n < 2 {
        return Err(BoundsError::InvalidParameter(format!("n = {n} < 2")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(BoundsError::InvalidParameter(format!(
            "epsilon = {epsilon} outside (0, 1)"
        )));
    }
    let nf = n as f64;
    let limit = bernoulli_heavy_traffic_limit(n);
    let leading = limit / epsilon;
    let m = bernoulli_ssc_constant(n, r);
    let shared = collapse_term(nf, epsilon, r, m);
    let offset = (1.0 - epsilon / 2.0) * (nf - 2.0 + 1.0 / nf);
    let b1 = offset + nf - 0.5 + 3.0 * shared;
    let b2 = -offset + (nf + 1.0) / 2.0 + 2.0 * shared;
    let applicable = epsilon <= 1.0 / (2.0 * nf);
    let mut report = BoundReport::new(
        leading - b1,
        leading + b2,
        &[
            ("r", r as f64),
            ("epsilon", epsilon),
            ("heavy_traffic_limit", limit),
            ("leading", leading),
            ("m_r", m),
            ("b1", b1),
            ("b2", b2),
            (
                "universal_lower_bound",
                bernoulli_universal_lower_bound(n, epsilon),
            ),
        ],
        applicable,
    );
    if !applicable {
        report.warnings.push(format!(
            "epsilon {epsilon} exceeds 1/(2n) = {}",
            1.0 / (2.0 * nf)
        ));
    }
    Ok(report)
}

/// Bracket for uniform Bernoulli traffic with `eps = gamma n^(-beta)`:
/// `n^(1 + beta) / gamma` minus `b3`, plus `b4`.
pub fn scaling_regime_bracket(
    n: usize,
    beta: f64,
    gamma: f64,
    r: u32,
) -> Result<BoundReport, BoundsError> {
    check_order(r)?;
    if n < 2 || beta.is_nan() || beta <= 0.0 || gamma.is_nan() || gamma <= 0.0 {
        return Err(BoundsError::InvalidParameter(format!(
            "need n >= 2, beta > 0, gamma > 0 (n = {n}, beta = {beta}, gamma = {gamma})"
        )));
    }
    let nf = n as f64;
    let rf = r as f64;
    let epsilon = gamma * nf.powf(-beta);
    if epsilon >= 1.0 {
        return Err(BoundsError::InvalidParameter(format!(
            "gamma n^-beta = {epsilon} must be below 1"
        )));
    }
    let leading = nf.powf(1.0 + beta) / gamma;
    let head = (3.0 * nf.powf(beta) - nf.powf(beta - 1.0)) / (2.0 * gamma);
    let offset = (1.0 - epsilon / 2.0) * (nf - 2.0 + 1.0 / nf);
    let tail = (2.0 * rf.sqrt() * E / gamma).powf(1.0 / rf)
        * (rf / E)
        * nf.powf(2.0 - 1.0 / rf + beta / rf)
        * nf
        * nf
        * (nf + 1.0);
    let b3 = head + offset + nf - 0.5 + 48.0 * tail;
    let b4 = -head - offset + (nf + 1.0) / 2.0 + 32.0 * tail;
    let applicable = 2.0 * gamma <= nf.powf(beta - 1.0);
    let mut report = BoundReport::new(
        leading - b3,
        leading + b4,
        &[
            ("r", r as f64),
            ("beta", beta),
            ("gamma", gamma),
            ("epsilon", epsilon),
            ("leading", leading),
            ("b3", b3),
            ("b4", b4),
            (
                "universal_lower_bound",
                bernoulli_universal_lower_bound(n, epsilon),
            ),
        ],
        applicable,
    );
    if !applicable {
        report.warnings.push(format!(
            "2 gamma = {} exceeds n^(beta - 1) = {}",
            2.0 * gamma,
            nf.powf(beta - 1.0)
        ));
    }
    if beta <= 4.0 {
        report.warnings.push(format!(
            "beta = {beta} <= 4: the bracket is not o(n^(1 + beta))"
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn tail_bound_values() {
        let p = DriftParams::new(10.0, 1.0, 2.0).unwrap();
        assert!((drift_tail_bound(&p, 0) - 2.0 / 3.0).abs() < 1e-15);
        let mut prev = 1.0;
        for m in 0..200 {
            let b = drift_tail_bound(&p, m);
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn tail_bound_monotone_in_parameters() {
        let base = drift_tail_bound(&DriftParams::new(0.0, 0.5, 2.0).unwrap(), 3);
        assert!(drift_tail_bound(&DriftParams::new(0.0, 1.0, 2.0).unwrap(), 3) <= base);
        assert!(drift_tail_bound(&DriftParams::new(0.0, 0.5, 3.0).unwrap(), 3) >= base);
    }

    #[test]
    fn moment_bound_values() {
        let p = DriftParams::new(0.0, 2.0, 2.0).unwrap();
        assert!((drift_moment_bound(&p, 1).unwrap() - 16.0).abs() < 1e-12);
        let p = DriftParams::new(10.0, 1.0, 2.0).unwrap();
        assert!((drift_moment_bound(&p, 1).unwrap() - 44.0).abs() < 1e-12);
        assert!(matches!(
            drift_moment_bound(&p, 400),
            Err(BoundsError::Overflow { r: 400 })
        ));
        assert!(drift_moment_bound(&p, 0).is_err());
    }

    #[test]
    fn drift_params_validation() {
        assert!(DriftParams::new(0.0, 3.0, 2.0).is_err());
        assert!(DriftParams::new(-1.0, 1.0, 2.0).is_err());
        assert!(DriftParams::new(0.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn universal_bound_uniform_bernoulli() {
        let m = TrafficModel::uniform_bernoulli(3, 0.1).unwrap();
        assert!((universal_lower_bound(&m) - 8.1).abs() < 1e-12);
        assert!((bernoulli_universal_lower_bound(3, 0.1) - 8.1).abs() < 1e-12);
        // For Bernoulli traffic the bound is never negative, only uninformative.
        let light = TrafficModel::uniform_bernoulli(2, 0.9).unwrap();
        let lb = universal_lower_bound(&light);
        assert!((0.0..0.01).contains(&lb));
    }

    #[test]
    fn bernoulli_ssc_constants() {
        assert!((bernoulli_ssc_constant(2, 1) - 384.0).abs() < 1e-9);
        let expected = (2.0 * 2f64.sqrt() * E).sqrt() * (32.0 / E) * 12.0;
        assert!((bernoulli_ssc_constant(2, 2) - expected).abs() < 1e-9);
        assert!((bernoulli_ssc_constant(2, 2) - 391.7).abs() < 0.05);
    }

    #[test]
    fn general_ssc_constant_reduces_to_bernoulli() {
        for n in 2..=6 {
            for r in 1..=5 {
                let m = TrafficModel::uniform_bernoulli(n, 0.05).unwrap();
                let general = ssc_moment_constant(r, &m).unwrap().value;
                assert!(close(general, bernoulli_ssc_constant(n, r), 1e-12));
            }
        }
    }

    #[test]
    fn ssc_constant_flags_regime() {
        let m = TrafficModel::uniform_bernoulli(2, 0.3).unwrap();
        assert!(!ssc_moment_constant(1, &m).unwrap().applicable);
        let nu = vec![1.0, 0.0, 0.0, 1.0];
        let m = TrafficModel::bernoulli(2, 0.1, nu).unwrap();
        assert!(matches!(
            ssc_moment_constant(1, &m),
            Err(BoundsError::ZeroMinRate(_))
        ));
    }

    #[test]
    fn heavy_traffic_limits() {
        assert!((bernoulli_heavy_traffic_limit(2) - 0.75).abs() < 1e-15);
        assert!((bernoulli_heavy_traffic_limit(3) - 5.0 / 3.0).abs() < 1e-15);
        for n in 2..=8 {
            // As eps -> 0 the uniform Bernoulli variance tends to n - 1.
            let general = heavy_traffic_limit(n, n as f64 - 1.0);
            assert!((general - bernoulli_heavy_traffic_limit(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn general_bracket_scaled_midpoint_tends_to_limit() {
        let m = TrafficModel::uniform_bernoulli(2, 1e-9).unwrap();
        let r = theorem1_bracket(&m, 2).unwrap();
        assert!((r.term("leading").unwrap() * 1e-9 - 0.75).abs() < 1e-6);
    }

    #[test]
    fn brackets_are_ordered() {
        for n in 2..=8 {
            for eps in [0.2, 0.1, 0.05, 0.01] {
                for r in 2..=4 {
                    let m = TrafficModel::uniform_bernoulli(n, eps).unwrap();
                    let t = theorem1_bracket(&m, r).unwrap();
                    assert!(t.lower <= t.upper);
                    let b = bernoulli_bracket(n, eps, r).unwrap();
                    assert!(b.lower <= b.upper);
                    assert_eq!(b.applicable, eps <= 1.0 / (2.0 * n as f64));
                }
            }
        }
    }

    #[test]
    fn order_below_two_rejected() {
        let m = TrafficModel::uniform_bernoulli(2, 0.1).unwrap();
        assert!(matches!(
            theorem1_bracket(&m, 1),
            Err(BoundsError::InvalidOrder { r: 1, min: 2 })
        ));
        assert!(bernoulli_bracket(2, 0.1, 1).is_err());
        assert!(bernoulli_bracket(2, 0.4, 2)
            .unwrap()
            .require_applicable()
            .is_err());
    }

    #[test]
    fn scaling_regime_flags() {
        let r = scaling_regime_bracket(4, 3.0, 1.0, 2).unwrap();
        assert!(r.applicable);
        assert_eq!(r.warnings.len(), 1);
        let r = scaling_regime_bracket(2, 1.0, 1.0, 2).unwrap();
        assert!(!r.applicable);
    }

    #[test]
    fn ssc_constant_monotonicity() {
        let m = TrafficModel::uniform_bernoulli(3, 0.05).unwrap();
        let mut prev = 0.0;
        for r in 1..=10 {
            let v = ssc_moment_constant(r, &m).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
        // Larger arrival bursts raise the constant.
        let eps = 0.05;
        let nu = vec![0.5; 4];
        let rate = (1.0 - eps) * 0.5;
        let burst = TrafficModel::with_pmfs(
            2,
            eps,
            nu.clone(),
            vec![vec![1.0 - rate / 2.0, 0.0, rate / 2.0]; 4],
        )
        .unwrap();
        let plain = TrafficModel::bernoulli(2, eps, nu).unwrap();
        assert_eq!(burst.a_max(), 2);
        for r in 1..=4 {
            assert!(
                ssc_moment_constant(r, &burst).unwrap().value
                    >= ssc_moment_constant(r, &plain).unwrap().value
            );
        }
        // Smaller minimum rate raises it too.
        let skewed = TrafficModel::bernoulli(2, eps, vec![0.8, 0.2, 0.2, 0.8]).unwrap();
        for r in 1..=4 {
            assert!(
                ssc_moment_constant(r, &skewed).unwrap().value
                    >= ssc_moment_constant(r, &plain).unwrap().value
            );
        }
    }

    #[test]
    fn scaling_regime_gaps_shrink_relative_to_leading_term() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for n in [4usize, 8, 16, 32, 1 << 10, 1 << 20] {
            let rep = scaling_regime_bracket(n, 5.0, 1.0, 5).unwrap();
            let lead = rep.term("leading").unwrap();
            let rel = (
                rep.term("b3").unwrap() / lead,
                rep.term("b4").unwrap() / lead,
            );
            assert!(rel.0 < prev.0 && rel.1 < prev.1, "n = {n}: {rel:?}");
            prev = rel;
        }
    }

    #[test]
    fn scaling_regime_lower_bound_specialisation() {
        let (n, beta, gamma) = (6usize, 2.5, 0.5);
        let rep = scaling_regime_bracket(n, beta, gamma, 2).unwrap();
        let nf = n as f64;
        let expected =
            (1.0 - gamma * nf.powf(-beta)).powi(2) * nf.powf(beta) * (nf - 1.0) / (2.0 * gamma);
        assert!(close(
            rep.term("universal_lower_bound").unwrap(),
            expected,
            1e-12
        ));
        let eps = gamma * nf.powf(-beta);
        let model = TrafficModel::uniform_bernoulli(n, eps).unwrap();
        assert!(close(universal_lower_bound(&model), expected, 1e-9));
    }

    #[test]
    fn overflow_is_flagged() {
        let rep = scaling_regime_bracket(1_000_000, 60.0, 1.0, 2).unwrap();
        assert!(rep.overflow);
        assert!(rep.upper.is_infinite());
        assert!(!bernoulli_bracket(4, 0.01, 2).unwrap().overflow);
    }
}
