//! The cone spanned by the row and column indicator matrices, and projections onto it.
//!
//! A matrix lies in the cone iff it can be written `x[i][j] = w[i] + w_tilde[j]` with
//! `w, w_tilde >= 0`. Its linear span is the `2n - 1` dimensional subspace of such sums
//! with unrestricted signs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::RealMatrix;

/// Certificate tolerance for a cone projection.
pub const KKT_TOLERANCE: f64 = 1e-8;
/// Iteration budget of the projected-gradient solver.
pub const MAX_ITERATIONS: usize = 100_000;
/// A polished active-set solution is accepted once its residual is this small.
const POLISH_ACCEPT: f64 = 1e-10;
const POLISH_EVERY: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cone projection did not converge: KKT residual {kkt_residual:e} after {iterations} iterations")]
    ConvergenceFailure {
        iterations: usize,
        kkt_residual: f64,
    },
}

/// `x = q_para + q_perp` with `q_para` the nearest cone point and `q_perp` in the polar cone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeDecomposition {
    pub q_para: RealMatrix,
    pub q_perp: RealMatrix,
    /// Row weights of `q_para`. The representation is shifted so that `min(w) == 0`.
    pub w: Vec<f64>,
    pub w_tilde: Vec<f64>,
    /// Worst violation over the optimality certificate checks.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Orthogonal projection onto the span of the cone: `x[i][j] -> rowavg_i + colavg_j - avg`.
pub fn project_onto_subspace(x: &RealMatrix) -> RealMatrix {
    let n = x.n() as f64;
    let rows = x.row_sums();
    let cols = x.col_sums();
    let avg = x.sum() / (n * n);
    RealMatrix::from_fn(x.n(), |i, j| rows[i] / n + cols[j] / n - avg)
}

/// Largest entrywise gap between `x` and its subspace projection; zero iff `x` is in the span.
pub fn subspace_identity_residual(x: &RealMatrix) -> f64 {
    x.max_abs_diff(&project_onto_subspace(x))
}

/// Certificate residual of the candidate `q_para = w (+) w_tilde` for the projection of `x`.
///
/// Combines nonnegativity of the weights, polar-cone membership of `x - q_para` (its row and
/// column sums must be `<= 0`), orthogonality of the two parts, and the Pythagorean identity.
pub fn kkt_residual(x: &RealMatrix, w: &[f64], w_tilde: &[f64]) -> f64 {
    let q_para = RealMatrix::from_row_col(w, w_tilde);
    let q_perp = x.sub(&q_para);
    let negativity = w.iter().chain(w_tilde).fold(0.0_f64, |acc, &v| acc.max(-v));
    let polar = q_perp
        .row_sums()
        .into_iter()
        .chain(q_perp.col_sums())
        .fold(0.0_f64, f64::max);
    let x_sq = x.norm_sq();
    let cross = q_para.dot(&q_perp);
    let orthogonality = cross.abs() / (1.0 + x_sq);
    let pythagoras = if x_sq > 0.0 {
        (x_sq - q_para.norm_sq() - q_perp.norm_sq()).abs() / x_sq
    } else {
        0.0
    };
    negativity.max(polar).max(orthogonality).max(pythagoras)
}

/// Exact least-squares fit with the weights outside `(free_rows, free_cols)` pinned to zero.
///
/// `shift_hint` selects the representative when all weights are free.
fn active_set_fit(
    x: &RealMatrix,
    free_rows: &[bool],
    free_cols: &[bool],
    shift_hint: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.n();
    let nf = n as f64;
    let rows = x.row_sums();
    let cols = x.col_sums();
    let kr = free_rows.iter().filter(|&&f| f).count() as f64;
    let kc = free_cols.iter().filter(|&&f| f).count() as f64;
    let sr: f64 = rows
        .iter()
        .zip(free_rows)
        .filter(|(_, &f)| f)
        .map(|(r, _)| r)
        .sum();
    let sc: f64 = cols
        .iter()
        .zip(free_cols)
        .filter(|(_, &f)| f)
        .map(|(c, _)| c)
        .sum();
    // Normal equations reduce to: n*A + kr*B = sr, kc*A + n*B = sc, where A and B are the
    // sums of the free row and column weights.
    let det = nf * nf - kr * kc;
    let (a, b) = if det.abs() > 0.5 {
        ((nf * sr - kr * sc) / det, (nf * sc - kc * sr) / det)
    } else {
        (shift_hint, sr / nf - shift_hint)
    };
    let w = (0..n)
        .map(|i| {
            if free_rows[i] {
                (rows[i] - b) / nf
            } else {
                0.0
            }
        })
        .collect();
    let w_tilde = (0..n)
        .map(|j| {
            if free_cols[j] {
                (cols[j] - a) / nf
            } else {
                0.0
            }
        })
        .collect();
    (w, w_tilde)
}

/// Shifts `(w, w_tilde)` by a constant so that `min(w) == 0` when that keeps both nonnegative.
fn canonicalize(w: &mut [f64], w_tilde: &mut [f64]) {
    let min_w = w.iter().copied().fold(f64::INFINITY, f64::min);
    let min_wt = w_tilde.iter().copied().fold(f64::INFINITY, f64::min);
    // Any shift c with -min_wt <= c <= min_w keeps both sides nonnegative.
    let c = if min_w + min_wt >= 0.0 {
        min_w
    } else {
        return;
    };
    if c != 0.0 {
        w.iter_mut().for_each(|v| *v -= c);
        w_tilde.iter_mut().for_each(|v| *v += c);
    }
}

struct Candidate {
    w: Vec<f64>,
    w_tilde: Vec<f64>,
    kkt: f64,
}

fn polish(x: &RealMatrix, w: &[f64], w_tilde: &[f64]) -> Option<Candidate> {
    let free_rows: Vec<bool> = w.iter().map(|&v| v > 0.0).collect();
    let free_cols: Vec<bool> = w_tilde.iter().map(|&v| v > 0.0).collect();
    let (mut pw, mut pwt) = active_set_fit(x, &free_rows, &free_cols, w.iter().sum());
    canonicalize(&mut pw, &mut pwt);
    if pw.iter().chain(&pwt).any(|&v| v < 0.0) {
        // Clip tiny negatives produced by rounding; the certificate decides.
        let worst = pw.iter().chain(&pwt).fold(0.0_f64, |a, &v| a.max(-v));
        if worst > POLISH_ACCEPT {
            return None;
        }
        pw.iter_mut()
            .chain(pwt.iter_mut())
            .for_each(|v| *v = v.max(0.0));
    }
    let kkt = kkt_residual(x, &pw, &pwt);
    Some(Candidate {
        w: pw,
        w_tilde: pwt,
        kkt,
    })
}

/// Projects `x` onto the cone by accelerated projected gradient on `(w, w_tilde) >= 0`.
///
/// Minimizes `0.5 * ||x - (w (+) w_tilde)||^2` with step `1 / (2n)` and adaptive momentum
/// restarts. Whenever the iterate's support looks settled, the exact least-squares solution
/// on that support is tried and kept if its certificate is tighter.
pub fn project_onto_cone(x: &RealMatrix) -> Result<ConeDecomposition, GeometryError> {
    let n = x.n();
    let nf = n as f64;
    let step = 1.0 / (2.0 * nf);
    let rows = x.row_sums();
    let cols = x.col_sums();
    let half_avg = x.sum() / (2.0 * nf * nf);

    // Warm start from the subspace projection's symmetric representation.
    let mut w: Vec<f64> = rows.iter().map(|r| (r / nf - half_avg).max(0.0)).collect();
    let mut wt: Vec<f64> = cols.iter().map(|c| (c / nf - half_avg).max(0.0)).collect();
    let mut yw = w.clone();
    let mut ywt = wt.clone();
    let mut t = 1.0_f64;

    let mut best = Candidate {
        kkt: kkt_residual(x, &w, &wt),
        w: w.clone(),
        w_tilde: wt.clone(),
    };
    let mut iterations = 0;
    let mut gw = vec![0.0; n];
    let mut gwt = vec![0.0; n];

    while iterations < MAX_ITERATIONS && best.kkt > POLISH_ACCEPT {
        if iterations % POLISH_EVERY == 0 {
            if let Some(c) = polish(x, &w, &wt) {
                if c.kkt < best.kkt {
                    best = c;
                    if best.kkt <= POLISH_ACCEPT {
                        break;
                    }
                }
            }
        }
        iterations += 1;

        // Gradient at the extrapolated point: minus the row/column sums of the residual.
        let sum_yw: f64 = yw.iter().sum();
        let sum_ywt: f64 = ywt.iter().sum();
        for i in 0..n {
            gw[i] = -(rows[i] - nf * yw[i] - sum_ywt);
            gwt[i] = -(cols[i] - nf * ywt[i] - sum_yw);
        }
        let mut restart_dot = 0.0;
        let mut new_w = vec![0.0; n];
        let mut new_wt = vec![0.0; n];
        for i in 0..n {
            new_w[i] = (yw[i] - step * gw[i]).max(0.0);
            new_wt[i] = (ywt[i] - step * gwt[i]).max(0.0);
            restart_dot +=
                (yw[i] - new_w[i]) * (new_w[i] - w[i]) + (ywt[i] - new_wt[i]) * (new_wt[i] - wt[i]);
        }
        let t_next = if restart_dot > 0.0 {
            1.0
        } else {
            (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0
        };
        let momentum = if restart_dot > 0.0 {
            0.0
        } else {
            (t - 1.0) / t_next
        };
        for i in 0..n {
            yw[i] = new_w[i] + momentum * (new_w[i] - w[i]);
            ywt[i] = new_wt[i] + momentum * (new_wt[i] - wt[i]);
        }
        t = t_next;
        w = new_w;
        wt = new_wt;

        let kkt = kkt_residual(x, &w, &wt);
        if kkt < best.kkt {
            best = Candidate {
                w: w.clone(),
                w_tilde: wt.clone(),
                kkt,
            };
        }
    }

    if best.kkt > POLISH_ACCEPT {
        if let Some(c) = polish(x, &best.w, &best.w_tilde) {
            if c.kkt < best.kkt {
                best = c;
            }
        }
    }
    if best.kkt > KKT_TOLERANCE {
        return Err(GeometryError::ConvergenceFailure {
            iterations,
            kkt_residual: best.kkt,
        });
    }

    let Candidate {
        mut w, mut w_tilde, ..
    } = best;
    canonicalize(&mut w, &mut w_tilde);
    let q_para = RealMatrix::from_row_col(&w, &w_tilde);
    let q_perp = x.sub(&q_para);
    let kkt_residual = kkt_residual(x, &w, &w_tilde);
    Ok(ConeDecomposition {
        q_para,
        q_perp,
        w,
        w_tilde,
        kkt_residual,
        iterations,
    })
}

/// `true` iff `x` is within distance `tol` of the cone.
pub fn cone_membership(x: &RealMatrix, tol: f64) -> Result<bool, GeometryError> {
    let d = project_onto_cone(x)?;
    Ok(d.q_perp.norm() <= tol)
}
