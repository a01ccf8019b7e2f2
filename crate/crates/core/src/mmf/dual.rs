//! Weak-duality upper bound on the max-min SINR.
//!
//! With `z_k(u) = (√g_{m,k} u_{m,ℓ})_{m,ℓ} ⊕ 1` we have `√Q_k = ‖z_k‖ ≥ y_kᵀ z_k`
//! for any unit `y_k`. For weights `λ` on the simplex,
//!
//! ```text
//! max_u min_k h_k(u) ≤ max_u Σ_k λ_k (N_k(u) − s y_kᵀ z_k(u)) = Σ_m ‖p_m − s q_m‖ − s w
//! ```
//!
//! where the right side is the closed-form maximum of a linear function over
//! the RU balls. Whenever it is negative at `s`, the target `s²` is infeasible.

use super::Instance;

const ITERS: usize = 100;

/// Smallest `t` proven infeasible by the bound built from the iterate `u` and
/// weights proportional to `weights`, or `None` if the bound never certifies.
pub(crate) fn upper_bound(inst: &Instance, u: &[f64], weights: &[f64], t_max: f64) -> Option<f64> {
    let (mc, kc) = (inst.m, inst.k);
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let lambda: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let loads = inst.loads(u);
    let (_, q) = inst.terms(u, &loads);
    let inv_norm: Vec<f64> = q.iter().map(|q| 1.0 / q.sqrt()).collect();

    let p: Vec<f64> = (0..mc * kc).map(|i| lambda[i % kc] * inst.a[i]).collect();
    let mut lin = vec![0.0; mc * kc];
    for m in 0..mc {
        let coef: f64 = (0..kc)
            .map(|k| lambda[k] * inst.g[m * kc + k] * inv_norm[k])
            .sum();
        for l in 0..kc {
            lin[m * kc + l] = coef * u[m * kc + l];
        }
    }
    let w: f64 = lambda.iter().zip(&inv_norm).map(|(l, n)| l * n).sum();

    let bound = |s: f64| -> f64 {
        let mut b = -s * w;
        for (pr, lr) in p.chunks_exact(kc).zip(lin.chunks_exact(kc)) {
            b += pr
                .iter()
                .zip(lr)
                .map(|(p, l)| (p - s * l).powi(2))
                .sum::<f64>()
                .sqrt();
        }
        b
    };

    // convex in s: locate the minimum, then the first root before it
    let (mut a, mut b) = (0.0, t_max.sqrt());
    for _ in 0..ITERS {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if bound(m1) <= bound(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let s_min = 0.5 * (a + b);
    if bound(s_min) >= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, s_min);
    for _ in 0..ITERS {
        let mid = 0.5 * (lo + hi);
        if bound(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Some(hi * hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::BetaMatrix;

    #[test]
    fn symmetric_pair_bound_is_tight_at_optimum() {
        // two isolated links at full power: SINR = 1 / (1 + 1)
        let beta = BetaMatrix::new(2, 2, vec![1.0, 1e-12, 1e-12, 1.0]).unwrap();
        let inst = Instance::new(&beta, 1.0, 1.0);
        let u = vec![1.0, 1e-6, 1e-6, 1.0];
        let t = upper_bound(&inst, &u, &[1.0, 1.0], 4.0).unwrap();
        assert!(t >= 0.5 - 1e-9 && t <= 0.501, "{t}");
    }
}
