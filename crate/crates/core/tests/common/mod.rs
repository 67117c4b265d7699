#![allow(dead_code)]

use iqswitch::RealMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Cone projection by exhaustive active-set enumeration.
///
/// For every choice of row generators `S` and column generators `T`, solve the unconstrained
/// least-squares fit of `x` on `{e_i : i in S} + {e~_j : j in T}` and keep the fits that admit
/// a nonnegative representation. The nearest such fit is the projection.
pub fn cone_projection_oracle(x: &RealMatrix) -> RealMatrix {
    let n = x.n();
    let target = DVector::from_column_slice(x.as_slice());
    let mut best: Option<(f64, RealMatrix)> = None;
    for mask in 0u32..(1 << (2 * n)) {
        let rows: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << (n + j)) != 0).collect();
        let k = rows.len() + cols.len();
        let fit = if k == 0 {
            DVector::zeros(n * n)
        } else {
            let mut a = DMatrix::zeros(n * n, k);
            for (c, &i) in rows.iter().enumerate() {
                for j in 0..n {
                    a[(i * n + j, c)] = 1.0;
                }
            }
            for (c, &j) in cols.iter().enumerate() {
                for i in 0..n {
                    a[(i * n + j, rows.len() + c)] = 1.0;
                }
            }
            let svd = a.clone().svd(true, true);
            let coef = svd.solve(&target, 1e-12).expect("svd solve");
            let (w, wt) = coef.as_slice().split_at(rows.len());
            let min_w = w.iter().copied().fold(f64::INFINITY, f64::min);
            let min_wt = wt.iter().copied().fold(f64::INFINITY, f64::min);
            let feasible = if rows.len() == n && cols.len() == n {
                // Only here is the representation non-unique: (w + c, w~ - c).
                min_w + min_wt >= -1e-9
            } else {
                min_w >= -1e-9 && min_wt >= -1e-9
            };
            if !feasible {
                continue;
            }
            &a * coef
        };
        let dist = (&target - &fit).norm();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((
                dist,
                RealMatrix::from_vec(n, fit.as_slice().to_vec()).unwrap(),
            ));
        }
    }
    best.expect("the zero pattern is always feasible").1
}

/// Entries uniform on `[lo, hi]`.
pub fn random_real<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> RealMatrix {
    RealMatrix::from_fn(n, |_, _| rng.random_range(lo..=hi))
}

/// Steady-state samples of the walk `Z <- max(Z + 1, 0)` w.p. `p_up`, `max(Z - 1, 0)` otherwise.
pub struct ReflectedWalk {
    pub counts: Vec<u64>,
    pub steps: u64,
}

impl ReflectedWalk {
    pub fn run<R: Rng>(rng: &mut R, p_up: f64, burn_in: u64, steps: u64) -> Self {
        let mut z: usize = 0;
        let mut counts = vec![0u64; 64];
        for t in 0..burn_in + steps {
            if rng.random_bool(p_up) {
                z += 1;
            } else {
                z = z.saturating_sub(1);
            }
            if t >= burn_in {
                if z >= counts.len() {
                    counts.resize(z + 1, 0);
                }
                counts[z] += 1;
            }
        }
        Self { counts, steps }
    }

    pub fn tail(&self, above: usize) -> f64 {
        self.counts.iter().skip(above + 1).sum::<u64>() as f64 / self.steps as f64
    }

    pub fn moment(&self, r: i32) -> f64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(z, &c)| (z as f64).powi(r) * c as f64)
            .sum::<f64>()
            / self.steps as f64
    }
}
