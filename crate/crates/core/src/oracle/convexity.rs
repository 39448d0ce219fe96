//! Finite-difference convexity check of the per-device latency constraint
//! `a + (b/τ)·e^g + c/f - T` in the variables `(g, τ, f)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OracleOptions;
use crate::model::{decode_latency, local_latency, transmit_latency, DeviceProfile, SystemConfig};

/// Normalized leading minors must exceed this.
pub const MINOR_TOL: f64 = -1e-8;

/// Coefficients of one device's latency constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyConstraint {
    /// Encoding time.
    pub a: f64,
    /// Transmit time at `τ = 1`, `g = 0`.
    pub b: f64,
    /// Decode cycles.
    pub c: f64,
    pub system_delay: f64,
    /// Minimum threshold; interior points have `g > d`.
    pub d: f64,
}

impl LatencyConstraint {
    pub fn from_model(cfg: &SystemConfig, dev: &DeviceProfile, cr: f64, d: f64, system_delay: f64) -> Self {
        LatencyConstraint {
            a: local_latency(cfg, dev),
            b: transmit_latency(cfg, dev, cr, 0.0, 1.0).expect("τ = 1 and g = 0 are in the domain"),
            c: decode_latency(cfg, dev, 1.0).expect("f = 1 is in the domain"),
            system_delay,
            d,
        }
    }

    /// Value at `x = (g, τ, f)`.
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.a + self.b / x[1] * x[0].exp() + self.c / x[2] - self.system_delay
    }

    pub fn is_interior(&self, x: [f64; 3]) -> bool {
        x[0] > self.d && x[1] > 0.0 && x[2] > 0.0
    }

    /// Leading principal minors of the exact Hessian.
    pub fn analytic_minors(&self, x: [f64; 3]) -> [f64; 3] {
        let [g, tau, f] = x;
        let be = self.b * g.exp();
        let m2 = be * be / tau.powi(4);
        [be / tau, m2, 2.0 * self.c * m2 / f.powi(3)]
    }
}

/// Central-difference Hessian with per-coordinate step `rel_step·max(|x_i|, 1)`.
pub fn fd_hessian(f: &impl Fn([f64; 3]) -> f64, x: [f64; 3], rel_step: f64) -> [[f64; 3]; 3] {
    let h: [f64; 3] = std::array::from_fn(|i| step(x[i], rel_step));
    let shifted = |pairs: &[(usize, f64)]| {
        let mut y = x;
        for &(i, s) in pairs {
            y[i] += s * h[i];
        }
        f(y)
    };
    let f0 = f(x);
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        hess[i][i] = (shifted(&[(i, 1.0)]) - 2.0 * f0 + shifted(&[(i, -1.0)])) / (h[i] * h[i]);
        for j in 0..i {
            let v = (shifted(&[(i, 1.0), (j, 1.0)]) - shifted(&[(i, 1.0), (j, -1.0)])
                - shifted(&[(i, -1.0), (j, 1.0)])
                + shifted(&[(i, -1.0), (j, -1.0)]))
                / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

fn step(x: f64, rel_step: f64) -> f64 {
    rel_step * x.abs().max(1.0)
}

/// Leading minors of `D^{-1/2} H D^{-1/2}` with `D = diag(H)`, or `None`
/// when a diagonal entry is not positive.
pub fn normalized_minors(h: [[f64; 3]; 3]) -> Option<[f64; 3]> {
    if !(0..3).all(|i| h[i][i] > 0.0) {
        return None;
    }
    let s: [f64; 3] = std::array::from_fn(|i| h[i][i].sqrt());
    let n: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| h[i][j] / (s[i] * s[j])));
    let m2 = n[0][0] * n[1][1] - n[0][1] * n[1][0];
    let m3 = n[0][0] * (n[1][1] * n[2][2] - n[1][2] * n[2][1]) - n[0][1] * (n[1][0] * n[2][2] - n[1][2] * n[2][0])
        + n[0][2] * (n[1][0] * n[2][1] - n[1][1] * n[2][0]);
    Some([n[0][0], m2, m3])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityVerdict {
    pub checked: usize,
    /// Indices of samples skipped because a stencil point left the domain.
    pub skipped: Vec<usize>,
    /// Indices of samples whose minors fell below [`MINOR_TOL`].
    pub failures: Vec<usize>,
    /// Smallest normalized minor seen; `-∞` when a diagonal was not positive.
    pub min_minor: f64,
}

impl ConvexityVerdict {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Checks local convexity of `f` at each point by finite differences.
pub fn check_convexity(
    f: impl Fn([f64; 3]) -> f64,
    in_domain: impl Fn([f64; 3]) -> bool,
    points: &[[f64; 3]],
    opts: &OracleOptions,
) -> ConvexityVerdict {
    let mut verdict = ConvexityVerdict { checked: 0, skipped: Vec::new(), failures: Vec::new(), min_minor: f64::INFINITY };
    for (idx, &x) in points.iter().enumerate() {
        let stencil_ok = (0..3).all(|i| {
            let h = step(x[i], opts.fd_step);
            let (mut lo, mut hi) = (x, x);
            lo[i] -= h;
            hi[i] += h;
            h > 0.0 && in_domain(lo) && in_domain(hi)
        });
        if !stencil_ok {
            verdict.skipped.push(idx);
            continue;
        }
        verdict.checked += 1;
        match normalized_minors(fd_hessian(&f, x, opts.fd_step)) {
            Some(m) => {
                let low = m.iter().copied().fold(f64::INFINITY, f64::min);
                verdict.min_minor = verdict.min_minor.min(low);
                if low <= MINOR_TOL {
                    verdict.failures.push(idx);
                }
            }
            None => {
                verdict.min_minor = f64::NEG_INFINITY;
                verdict.failures.push(idx);
            }
        }
    }
    verdict
}

/// Checks the latency constraint at sampled interior points.
pub fn check_constraint_convexity(constraint: &LatencyConstraint, points: &[[f64; 3]], opts: &OracleOptions) -> ConvexityVerdict {
    check_convexity(|x| constraint.eval(x), |x| constraint.is_interior(x), points, opts)
}

/// `count` seeded interior points: `g ∈ (d, d+3)`, `τ ∈ (0.01, 1)`,
/// `f ∈ (0.01, 1)·edge_cpu_hz`.
pub fn interior_samples(constraint: &LatencyConstraint, edge_cpu_hz: f64, count: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            [
                constraint.d + rng.random_range(1e-3..3.0),
                rng.random_range(0.01..1.0),
                edge_cpu_hz * rng.random_range(0.01..1.0),
            ]
        })
        .collect()
}
